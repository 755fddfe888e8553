//! Architecture descriptors `<kind>:<layers>x<width>` and exact parameter counts.
//!
//! Widths are real dimensions; a `q` suffix gives quaternion units instead
//! (`qlinear:1x512q` is the same layer as `qlinear:1x2048`).

use std::fmt;
use std::str::FromStr;

use qrnn_core::copy_task::{INPUT_CHANNELS, OUTPUT_CLASSES, PADDED_CHANNELS};
use qrnn_core::layers::{quaternion_linear_params, real_linear_params};
use qrnn_core::recurrent::{lstm_params, qlstm_params};

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ArchKind {
    Linear,
    QLinear,
    Lstm,
    Qlstm,
    BiLstm,
    BiQlstm,
    CopyLstm,
    CopyQlstm,
}

impl ArchKind {
    const ALL: [(&'static str, ArchKind); 8] = [
        ("linear", ArchKind::Linear),
        ("qlinear", ArchKind::QLinear),
        ("lstm", ArchKind::Lstm),
        ("qlstm", ArchKind::Qlstm),
        ("blstm", ArchKind::BiLstm),
        ("bqlstm", ArchKind::BiQlstm),
        ("copy-lstm", ArchKind::CopyLstm),
        ("copy-qlstm", ArchKind::CopyQlstm),
    ];

    pub fn name(self) -> &'static str {
        Self::ALL.iter().find(|(_, k)| *k == self).expect("listed").0
    }

    pub fn is_quaternion(self) -> bool {
        matches!(self, ArchKind::QLinear | ArchKind::Qlstm | ArchKind::BiQlstm | ArchKind::CopyQlstm)
    }

    fn is_recurrent(self) -> bool {
        matches!(self, ArchKind::Lstm | ArchKind::Qlstm | ArchKind::BiLstm | ArchKind::BiQlstm)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ArchDescriptor {
    pub kind: ArchKind,
    pub layers: usize,
    /// Real width.
    pub width: usize,
}

impl fmt::Display for ArchDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}x{}", self.kind.name(), self.layers, self.width)
    }
}

impl FromStr for ArchDescriptor {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        let bad = |why: &str| CliError::Usage(format!("malformed architecture '{s}': {why}"));
        let (kind, shape) = s.split_once(':').ok_or_else(|| bad("expected <kind>:<layers>x<width>"))?;
        let kind =
            ArchKind::ALL.iter().find(|(n, _)| *n == kind).map(|(_, k)| *k).ok_or_else(|| bad("unknown kind"))?;
        let (layers, width) = shape.split_once('x').ok_or_else(|| bad("expected <layers>x<width>"))?;
        let layers: usize = layers.parse().map_err(|_| bad("layer count is not an integer"))?;
        let width = match width.strip_suffix('q') {
            Some(q) if kind.is_quaternion() => 4 * q.parse::<usize>().map_err(|_| bad("width is not an integer"))?,
            Some(_) => return Err(bad("'q' widths only apply to quaternion kinds")),
            None => width.parse().map_err(|_| bad("width is not an integer"))?,
        };
        if layers == 0 || width == 0 {
            return Err(bad("layers and width must be positive"));
        }
        if kind.is_quaternion() && width % 4 != 0 {
            return Err(bad("quaternion widths must be divisible by 4"));
        }
        if matches!(kind, ArchKind::CopyLstm | ArchKind::CopyQlstm) && layers != 1 {
            return Err(bad("copy-task models have a single recurrent layer"));
        }
        Ok(Self { kind, layers, width })
    }
}

/// Extra layers and sizing assumptions for a count.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CountOptions {
    /// First-layer input width; defaults to the layer width.
    pub input: Option<usize>,
    /// Bias on dense layers built from `linear`/`qlinear` descriptors.
    pub bias: bool,
    /// Hidden dense layer after a recurrent stack.
    pub dense: Option<usize>,
    /// Whether that dense layer is quaternion-valued.
    pub dense_quaternion: bool,
    /// Real output layer after a recurrent stack.
    pub outputs: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Component {
    pub label: String,
    pub params: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamTable {
    pub descriptor: ArchDescriptor,
    pub components: Vec<Component>,
}

impl ParamTable {
    pub fn total(&self) -> usize {
        self.components.iter().map(|c| c.params).sum()
    }
}

pub fn count(desc: &ArchDescriptor, opts: &CountOptions) -> Result<ParamTable, CliError> {
    let w = desc.width;
    let mut components = Vec::new();
    let mut push = |label: String, params: usize| components.push(Component { label, params });
    match desc.kind {
        ArchKind::CopyQlstm => {
            push(format!("qlstm {}q <- {}q", w / 4, PADDED_CHANNELS / 4), qlstm_params(PADDED_CHANNELS / 4, w / 4));
            push(format!("output linear {OUTPUT_CLASSES} <- {w}"), real_linear_params(OUTPUT_CLASSES, w, true));
        }
        ArchKind::CopyLstm => {
            push(format!("lstm {w} <- {INPUT_CHANNELS}"), lstm_params(INPUT_CHANNELS, w));
            push(format!("output linear {OUTPUT_CLASSES} <- {w}"), real_linear_params(OUTPUT_CLASSES, w, true));
        }
        kind => {
            let mut input = opts.input.unwrap_or(w);
            if kind.is_quaternion() && !input.is_multiple_of(4) {
                return Err(CliError::Usage(format!("quaternion input width {input} is not divisible by 4")));
            }
            for layer in 1..=desc.layers {
                let (label, params) = match kind {
                    ArchKind::Linear => (format!("linear {w} <- {input}"), real_linear_params(w, input, opts.bias)),
                    ArchKind::QLinear => (
                        format!("quaternion linear {}q <- {}q", w / 4, input / 4),
                        quaternion_linear_params(w / 4, input / 4, opts.bias),
                    ),
                    ArchKind::Lstm => (format!("lstm {w} <- {input}"), lstm_params(input, w)),
                    ArchKind::Qlstm => (format!("qlstm {}q <- {}q", w / 4, input / 4), qlstm_params(input / 4, w / 4)),
                    ArchKind::BiLstm => (format!("bidirectional lstm 2x{w} <- {input}"), 2 * lstm_params(input, w)),
                    ArchKind::BiQlstm => (
                        format!("bidirectional qlstm 2x{}q <- {}q", w / 4, input / 4),
                        2 * qlstm_params(input / 4, w / 4),
                    ),
                    ArchKind::CopyLstm | ArchKind::CopyQlstm => unreachable!(),
                };
                push(format!("layer {layer}: {label}"), params);
                input = w;
            }
            if kind.is_recurrent() {
                if let Some(d) = opts.dense {
                    if opts.dense_quaternion {
                        if !d.is_multiple_of(4) {
                            return Err(CliError::Usage(format!("quaternion dense width {d} is not divisible by 4")));
                        }
                        push(
                            format!("dense quaternion {}q <- {}q", d / 4, input / 4),
                            quaternion_linear_params(d / 4, input / 4, true),
                        );
                    } else {
                        push(format!("dense {d} <- {input}"), real_linear_params(d, input, true));
                    }
                    input = d;
                }
                if let Some(o) = opts.outputs {
                    push(format!("output linear {o} <- {input}"), real_linear_params(o, input, true));
                }
            }
        }
    }
    Ok(ParamTable { descriptor: *desc, components })
}
