//! Framed binary container shared by checkpoints and packed feature files.
//!
//! Layout: 8-byte magic, `u64` little-endian header length, UTF-8 JSON header,
//! then raw little-endian `f64` payload.

use std::io::{Read, Write};

use serde::{de::DeserializeOwned, Serialize};

use crate::error::CliError;

pub fn write_framed<W: Write, H: Serialize>(
    mut w: W,
    magic: &[u8; 8],
    header: &H,
    payload: impl IntoIterator<Item = f64>,
) -> Result<(), CliError> {
    let json = serde_json::to_vec(header).map_err(|e| CliError::Format(e.to_string()))?;
    w.write_all(magic)?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    for v in payload {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a framed file and returns the header with the decoded payload.
pub fn read_framed<R: Read, H: DeserializeOwned>(mut r: R, magic: &[u8; 8]) -> Result<(H, Vec<f64>), CliError> {
    let mut tag = [0u8; 8];
    r.read_exact(&mut tag).map_err(|_| CliError::Format("file too short for magic tag".into()))?;
    if &tag != magic {
        return Err(CliError::Format(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&tag),
            String::from_utf8_lossy(magic)
        )));
    }
    let mut len = [0u8; 8];
    r.read_exact(&mut len).map_err(|_| CliError::Format("truncated header length".into()))?;
    let len = u64::from_le_bytes(len) as usize;
    let mut json = vec![0u8; len];
    r.read_exact(&mut json).map_err(|_| CliError::Format("truncated header".into()))?;
    let header = serde_json::from_slice(&json).map_err(|e| CliError::Format(format!("header: {e}")))?;
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if rest.len() % 8 != 0 {
        return Err(CliError::Format(format!("payload length {} is not a multiple of 8", rest.len())));
    }
    let payload = rest.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk"))).collect();
    Ok((header, payload))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(serde::Serialize, serde::Deserialize, PartialEq, Debug)]
    struct H {
        n: usize,
    }

    #[test]
    fn framed_round_trip() {
        let mut buf = Vec::new();
        write_framed(&mut buf, b"TESTTAG1", &H { n: 3 }, [1.0, -0.0, f64::MIN_POSITIVE]).unwrap();
        let (h, p): (H, Vec<f64>) = read_framed(&buf[..], b"TESTTAG1").unwrap();
        assert_eq!(h, H { n: 3 });
        assert_eq!(
            p.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            [1.0f64, -0.0, f64::MIN_POSITIVE].map(f64::to_bits)
        );
    }

    #[test]
    fn rejects_wrong_magic_and_truncation() {
        let mut buf = Vec::new();
        write_framed(&mut buf, b"TESTTAG1", &H { n: 3 }, [1.0]).unwrap();
        assert!(read_framed::<_, H>(&buf[..], b"OTHERTAG").is_err());
        assert!(read_framed::<_, H>(&buf[..buf.len() - 3], b"TESTTAG1").is_err());
        assert!(read_framed::<_, H>(&buf[..10], b"TESTTAG1").is_err());
    }
}
