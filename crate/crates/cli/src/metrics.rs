//! Per-epoch metrics CSV: `epoch,loss,accuracy_recall,accuracy_full`.

use std::io::{BufRead, Write};

use qrnn_core::training::MetricsRecord;

use crate::error::CliError;

pub const HEADER: &str = "epoch,loss,accuracy_recall,accuracy_full";

/// Fixed-point decimal with `digits` significant digits.
pub fn fmt_significant(v: f64, digits: usize) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{:.*}", digits - 1, v);
    }
    let magnitude = v.abs().log10().floor() as i64;
    let decimals = (digits as i64 - 1 - magnitude).max(0) as usize;
    format!("{v:.decimals$}")
}

pub fn format_row(r: &MetricsRecord) -> String {
    format!(
        "{},{},{},{}",
        r.epoch,
        fmt_significant(r.loss, 15),
        fmt_significant(r.accuracy_recall, 15),
        fmt_significant(r.accuracy_full, 15)
    )
}

pub struct MetricsWriter<W: Write> {
    out: W,
}

impl<W: Write> MetricsWriter<W> {
    pub fn new(mut out: W) -> Result<Self, CliError> {
        writeln!(out, "{HEADER}")?;
        Ok(Self { out })
    }

    pub fn write(&mut self, r: &MetricsRecord) -> Result<(), CliError> {
        writeln!(self.out, "{}", format_row(r))?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W, CliError> {
        self.out.flush()?;
        Ok(self.out)
    }
}

pub fn read_metrics(r: impl BufRead) -> Result<Vec<MetricsRecord>, CliError> {
    let mut lines = r.lines();
    match lines.next() {
        Some(Ok(h)) if h.trim() == HEADER => {}
        _ => return Err(CliError::Format(format!("metrics file must start with '{HEADER}'"))),
    }
    let mut out: Vec<MetricsRecord> = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        let fields: Vec<&str> = line.trim().split(',').collect();
        let bad = || CliError::Format(format!("metrics row {}: '{line}'", i + 1));
        if fields.len() != 4 {
            return Err(bad());
        }
        let rec = MetricsRecord {
            epoch: fields[0].parse().map_err(|_| bad())?,
            loss: fields[1].parse().map_err(|_| bad())?,
            accuracy_recall: fields[2].parse().map_err(|_| bad())?,
            accuracy_full: fields[3].parse().map_err(|_| bad())?,
        };
        if out.last().is_some_and(|p| p.epoch >= rec.epoch) {
            return Err(bad());
        }
        out.push(rec);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn significant_digits() {
        assert_eq!(fmt_significant(2.197224577336219, 15), "2.19722457733622");
        assert_eq!(fmt_significant(0.5, 15), "0.500000000000000");
        assert_eq!(fmt_significant(1.0, 15), "1.00000000000000");
        assert_eq!(fmt_significant(0.0, 15), "0.00000000000000");
        assert_eq!(fmt_significant(1.234e-5, 13), "0.00001234000000000");
    }

    #[test]
    fn write_then_read() {
        let recs = vec![
            MetricsRecord { epoch: 1, loss: 2.1, accuracy_recall: 0.1, accuracy_full: 0.6 },
            MetricsRecord { epoch: 2, loss: 1.9, accuracy_recall: 0.125, accuracy_full: 0.65 },
        ];
        let mut w = MetricsWriter::new(Vec::new()).unwrap();
        for r in &recs {
            w.write(r).unwrap();
        }
        let buf = w.finish().unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("epoch,loss,accuracy_recall,accuracy_full\n1,"));
        assert_eq!(read_metrics(&buf[..]).unwrap(), recs);
    }

    #[test]
    fn rejects_non_monotone_epochs() {
        let text = format!("{HEADER}\n2,1,0,0\n1,1,0,0\n");
        assert!(read_metrics(text.as_bytes()).is_err());
    }
}
