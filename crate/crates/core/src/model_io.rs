//! The "hodep-model v1" checkpoint container: a small binary layout holding
//! the scorer configuration and every parameter tensor with its name and
//! shape. Loading validates all names and shapes; the byte round trip is
//! bit-exact. File access lives in the std companion crate; this module
//! only turns parameters into bytes and back.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::linalg::Matrix;
use crate::scorer::{EncoderKind, ScorerConfig, ScorerParams};

pub const MODEL_MAGIC: &[u8] = b"hodep-model v1\n";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ModelIoError {
    Malformed(String),
    ShapeMismatch(String),
}

impl fmt::Display for ModelIoError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelIoError::Malformed(m) => write!(f, "malformed checkpoint: {m}"),
            ModelIoError::ShapeMismatch(m) => write!(f, "checkpoint shape mismatch: {m}"),
        }
    }
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8], ModelIoError> {
        if self.pos + len > self.bytes.len() {
            return Err(ModelIoError::Malformed(format!(
                "unexpected end of data at offset {}",
                self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + len];
        self.pos += len;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize, ModelIoError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }

    fn f64(&mut self) -> Result<f64, ModelIoError> {
        let b = self.take(8)?;
        Ok(f64::from_le_bytes([
            b[0], b[1], b[2], b[3], b[4], b[5], b[6], b[7],
        ]))
    }
}

pub fn params_to_bytes(params: &ScorerParams) -> Vec<u8> {
    let c = &params.config;
    let mut out = Vec::new();
    out.extend_from_slice(MODEL_MAGIC);
    put_u32(
        &mut out,
        match c.encoder {
            EncoderKind::Window => 0,
            EncoderKind::BiRnn => 1,
        },
    );
    for dim in [c.word_vocab, c.pos_vocab, c.d_emb, c.d_pos, c.d_hidden, c.d_arc] {
        put_u32(&mut out, dim);
    }
    let tensors = params.tensors();
    put_u32(&mut out, tensors.len());
    for (name, t) in tensors {
        put_u32(&mut out, name.len());
        out.extend_from_slice(name.as_bytes());
        put_u32(&mut out, t.rows());
        put_u32(&mut out, t.cols());
        for v in t.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn params_from_bytes(bytes: &[u8]) -> Result<ScorerParams, ModelIoError> {
    if bytes.len() < MODEL_MAGIC.len() || &bytes[..MODEL_MAGIC.len()] != MODEL_MAGIC {
        return Err(ModelIoError::Malformed(
            "missing \"hodep-model v1\" header".into(),
        ));
    }
    let mut cur = Cursor {
        bytes,
        pos: MODEL_MAGIC.len(),
    };
    let encoder = match cur.u32()? {
        0 => EncoderKind::Window,
        1 => EncoderKind::BiRnn,
        k => return Err(ModelIoError::Malformed(format!("unknown encoder tag {k}"))),
    };
    let word_vocab = cur.u32()?;
    let pos_vocab = cur.u32()?;
    let d_emb = cur.u32()?;
    let d_pos = cur.u32()?;
    let d_hidden = cur.u32()?;
    let d_arc = cur.u32()?;
    let config = ScorerConfig {
        word_vocab,
        pos_vocab,
        d_emb,
        d_pos,
        d_hidden,
        d_arc,
        encoder,
    };
    let mut params = ScorerParams::new_seeded(config, 0)
        .map_err(|e| ModelIoError::Malformed(format!("{e}")))?
        .zeros_like();

    let count = cur.u32()?;
    let expected = params.tensors().len();
    if count != expected {
        return Err(ModelIoError::ShapeMismatch(format!(
            "checkpoint stores {count} tensors, configuration needs {expected}"
        )));
    }
    {
        let mut tensors = params.tensors_mut();
        for (expected_name, tensor) in tensors.iter_mut() {
            let name_len = cur.u32()?;
            let name_bytes = cur.take(name_len)?;
            let name = core::str::from_utf8(name_bytes)
                .map_err(|_| ModelIoError::Malformed("tensor name is not UTF-8".into()))?;
            if name != *expected_name {
                return Err(ModelIoError::ShapeMismatch(format!(
                    "tensor {name:?} where {expected_name:?} was expected"
                )));
            }
            let rows = cur.u32()?;
            let cols = cur.u32()?;
            if (rows, cols) != tensor.shape() {
                return Err(ModelIoError::ShapeMismatch(format!(
                    "tensor {name}: stored {rows}x{cols}, expected {:?}",
                    tensor.shape()
                )));
            }
            let mut data = Matrix::zeros(rows, cols);
            for i in 0..rows * cols {
                data.data_mut()[i] = cur.f64()?;
            }
            **tensor = data;
        }
    }
    if cur.pos != bytes.len() {
        return Err(ModelIoError::Malformed(format!(
            "{} trailing bytes",
            bytes.len() - cur.pos
        )));
    }
    params
        .validate()
        .map_err(|e| ModelIoError::ShapeMismatch(format!("{e}")))?;
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_both_encoders() {
        for kind in [EncoderKind::Window, EncoderKind::BiRnn] {
            let config = ScorerConfig::tiny(9, 5, kind);
            let params = ScorerParams::new_seeded(config, 77).unwrap();
            let bytes = params_to_bytes(&params);
            let restored = params_from_bytes(&bytes).unwrap();
            assert_eq!(params, restored);
            // bit-exact: serializing again yields identical bytes
            assert_eq!(bytes, params_to_bytes(&restored));
        }
    }

    #[test]
    fn rejects_wrong_magic() {
        let config = ScorerConfig::tiny(4, 3, EncoderKind::Window);
        let params = ScorerParams::new_seeded(config, 1).unwrap();
        let mut bytes = params_to_bytes(&params);
        bytes[0] = b'X';
        assert!(matches!(
            params_from_bytes(&bytes),
            Err(ModelIoError::Malformed(_))
        ));
    }

    #[test]
    fn rejects_truncation_and_trailing_garbage() {
        let config = ScorerConfig::tiny(4, 3, EncoderKind::BiRnn);
        let params = ScorerParams::new_seeded(config, 2).unwrap();
        let bytes = params_to_bytes(&params);
        assert!(params_from_bytes(&bytes[..bytes.len() - 3]).is_err());
        let mut extended = bytes.clone();
        extended.push(0);
        assert!(params_from_bytes(&extended).is_err());
    }

    #[test]
    fn rejects_shape_tampering() {
        let config = ScorerConfig::tiny(4, 3, EncoderKind::Window);
        let params = ScorerParams::new_seeded(config, 3).unwrap();
        let mut bytes = params_to_bytes(&params);
        // the first tensor's row count sits right after the magic, the
        // encoder tag, six dims, the tensor count, and the name
        let offset = MODEL_MAGIC.len() + 4 * 8 + 4 + "word_emb".len();
        bytes[offset] = bytes[offset].wrapping_add(1);
        assert!(params_from_bytes(&bytes).is_err());
    }
}
