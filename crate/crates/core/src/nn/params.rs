use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Flat parameter vector plus the shape it was laid out for.
///
/// For an MLP `shape` is the layer-size list; for a linear model it is `[dim]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    kind: String,
    shape: Vec<usize>,
    len: usize,
}

impl ParamVector {
    pub fn new(shape: Vec<usize>, values: Vec<f64>) -> Self {
        ParamVector { shape, values }
    }

    pub fn zeros_like(&self) -> Self {
        ParamVector {
            shape: self.shape.clone(),
            values: vec![0.0; self.values.len()],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Writes a one-line JSON header (`kind`, `shape`, `len`) followed by the
    /// values as little-endian `f64`.
    pub fn write_to<W: Write>(&self, kind: &str, mut w: W) -> Result<()> {
        let header = Header {
            kind: kind.to_string(),
            shape: self.shape.clone(),
            len: self.values.len(),
        };
        serde_json::to_writer(&mut w, &header)?;
        w.write_all(b"\n")?;
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    /// Inverse of [`ParamVector::write_to`]; returns the kind tag alongside.
    pub fn read_from<R: Read>(mut r: R) -> Result<(String, ParamVector)> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        let nl = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::InvalidArgument("missing parameter header".into()))?;
        let header: Header = serde_json::from_slice(&bytes[..nl])?;
        let body = &bytes[nl + 1..];
        if body.len() != header.len * 8 {
            return Err(Error::Shape(format!(
                "header declares {} values, body holds {} bytes",
                header.len,
                body.len()
            )));
        }
        let values = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        Ok((header.kind, ParamVector::new(header.shape, values)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn binary_round_trip(values in proptest::collection::vec(-1e300f64..1e300, 0..64)) {
            let p = ParamVector::new(vec![values.len()], values);
            let mut buf = Vec::new();
            p.write_to("linear", &mut buf).unwrap();
            let (kind, back) = ParamVector::read_from(buf.as_slice()).unwrap();
            prop_assert_eq!(kind, "linear");
            prop_assert_eq!(back, p);
        }
    }

    #[test]
    fn layout_is_header_then_le_floats() {
        let p = ParamVector::new(vec![1], vec![1.5]);
        let mut buf = Vec::new();
        p.write_to("x", &mut buf).unwrap();
        let text = br#"{"kind":"x","shape":[1],"len":1}"#;
        assert_eq!(&buf[..text.len()], text);
        assert_eq!(buf[text.len()], b'\n');
        assert_eq!(&buf[text.len() + 1..], &1.5f64.to_le_bytes());
    }

    #[test]
    fn truncated_body_rejected() {
        let p = ParamVector::new(vec![2], vec![1.0, 2.0]);
        let mut buf = Vec::new();
        p.write_to("x", &mut buf).unwrap();
        buf.pop();
        assert!(ParamVector::read_from(buf.as_slice()).is_err());
    }
}
