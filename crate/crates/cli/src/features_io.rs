//! Energy-matrix CSV input and packed feature output (CSV or framed binary).

use std::io::{BufRead, Read, Write};

use serde::{Deserialize, Serialize};

use qrnn_core::features::EnergyMatrix;
use qrnn_core::QuaternionVector;

use crate::binfile::{read_framed, write_framed};
use crate::error::CliError;

pub const MAGIC: &[u8; 8] = b"QRNNFEA1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureHeader {
    pub frames: usize,
    /// Quaternions per frame.
    pub bands: usize,
    pub window: usize,
    pub scalar: String,
    pub layout: String,
    pub endianness: String,
}

/// Packed features: `frames` rows of `4 · bands` split-layout reals.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    pub header: FeatureHeader,
    pub values: Vec<f64>,
}

impl FeatureMatrix {
    pub fn from_frames(frames: &[QuaternionVector], window: usize) -> Self {
        let bands = frames.first().map_or(0, QuaternionVector::n_quats);
        Self {
            header: FeatureHeader {
                frames: frames.len(),
                bands,
                window,
                scalar: "f64".into(),
                layout: "split".into(),
                endianness: "little".into(),
            },
            values: frames.iter().flat_map(|f| f.components().iter().copied()).collect(),
        }
    }

    pub fn columns(&self) -> usize {
        4 * self.header.bands
    }

    pub fn write_csv(&self, mut w: impl Write) -> Result<(), CliError> {
        let cols = self.columns();
        for row in self.values.chunks(cols.max(1)) {
            let line: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_bin(&self, w: impl Write) -> Result<(), CliError> {
        write_framed(w, MAGIC, &self.header, self.values.iter().copied())
    }

    pub fn read_bin(r: impl Read) -> Result<Self, CliError> {
        let (header, values): (FeatureHeader, Vec<f64>) = read_framed(r, MAGIC)?;
        if values.len() != header.frames * 4 * header.bands {
            return Err(CliError::Format(format!(
                "payload holds {} values, header declares {}x{}",
                values.len(),
                header.frames,
                4 * header.bands
            )));
        }
        Ok(Self { header, values })
    }
}

/// Parses plain comma-separated rows without a header.
pub fn read_csv_rows(r: impl BufRead) -> Result<Vec<Vec<f64>>, CliError> {
    let mut rows = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| CliError::Format(format!("line {}: {e}", i + 1)))?;
        if let Some(first) = rows.first().map(Vec::len) {
            if row.len() != first {
                return Err(CliError::Format(format!(
                    "ragged CSV: line {} has {} columns, expected {first}",
                    i + 1,
                    row.len()
                )));
            }
        }
        rows.push(row);
    }
    Ok(rows)
}

pub fn read_energy_csv(r: impl BufRead) -> Result<EnergyMatrix, CliError> {
    let rows = read_csv_rows(r)?;
    if rows.is_empty() {
        return Err(CliError::Format("energy CSV has no rows".into()));
    }
    Ok(EnergyMatrix::from_rows(&rows)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use qrnn_core::features::pack_features;

    #[test]
    fn ragged_rows_are_a_format_error() {
        let text = "1,2,3\n4,5\n";
        assert!(matches!(read_energy_csv(text.as_bytes()), Err(CliError::Format(_))));
        assert!(read_energy_csv("1,x\n".as_bytes()).is_err());
        assert!(read_energy_csv("".as_bytes()).is_err());
    }

    #[test]
    fn csv_bin_csv_identity() {
        let text = "0.1,-2.5,3.75\n1e-3,4.2,0.3333333333333333\n7,8,9\n";
        let m = read_energy_csv(text.as_bytes()).unwrap();
        let packed = FeatureMatrix::from_frames(&pack_features(&m, 2).unwrap(), 2);
        let mut csv1 = Vec::new();
        packed.write_csv(&mut csv1).unwrap();
        let mut bin = Vec::new();
        packed.write_bin(&mut bin).unwrap();
        let back = FeatureMatrix::read_bin(&bin[..]).unwrap();
        assert_eq!(back, packed);
        let mut csv2 = Vec::new();
        back.write_csv(&mut csv2).unwrap();
        assert_eq!(csv1, csv2);
        let reparsed: Vec<f64> = read_csv_rows(&csv1[..]).unwrap().concat();
        assert_eq!(reparsed, packed.values);
    }
}
