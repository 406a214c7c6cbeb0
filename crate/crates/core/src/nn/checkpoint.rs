//! Binary parameter checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic      8 bytes  "MALSCKPT"
//! version    u32      currently 1
//! meta_len   u64      followed by meta_len bytes of UTF-8 metadata
//! n_tensors  u32
//! per tensor:
//!   name_len u32, name bytes (UTF-8)
//!   ndim     u32, then ndim u64 dimensions
//!   data     product(dims) f64 values (IEEE-754 bits, little-endian)
//! ```
//!
//! Values are written as raw bits, so a round trip is bit-exact.

use std::io::{Read, Write};
use std::path::Path;

use super::mlp::MlpShape;

pub const MAGIC: &[u8; 8] = b"MALSCKPT";
pub const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
    #[error("missing tensor {0}")]
    Missing(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    pub metadata: String,
    pub tensors: Vec<Tensor>,
}

impl Checkpoint {
    pub fn new(metadata: impl Into<String>) -> Self {
        Self {
            metadata: metadata.into(),
            tensors: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, shape: Vec<usize>, data: Vec<f64>) {
        assert_eq!(shape.iter().product::<usize>(), data.len());
        self.tensors.push(Tensor {
            name: name.into(),
            shape,
            data,
        });
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    /// Stores `params` of an MLP as one weight and one bias tensor per layer,
    /// named `{prefix}.l{k}.w` and `{prefix}.l{k}.b`.
    pub fn push_mlp(&mut self, prefix: &str, shape: &MlpShape, params: &[f64]) {
        for (k, (w_off, b_off, n_in, n_out)) in shape.layer_offsets().into_iter().enumerate() {
            self.push(format!("{prefix}.l{k}.w"), vec![n_out, n_in], params[w_off..b_off].to_vec());
            self.push(format!("{prefix}.l{k}.b"), vec![n_out], params[b_off..b_off + n_out].to_vec());
        }
    }

    /// Inverse of [`Checkpoint::push_mlp`].
    pub fn read_mlp(&self, prefix: &str, shape: &MlpShape, params: &mut [f64]) -> Result<(), CheckpointError> {
        for (k, (w_off, b_off, n_in, n_out)) in shape.layer_offsets().into_iter().enumerate() {
            for (suffix, range, dims) in [
                ("w", w_off..b_off, vec![n_out, n_in]),
                ("b", b_off..b_off + n_out, vec![n_out]),
            ] {
                let name = format!("{prefix}.l{k}.{suffix}");
                let t = self.get(&name).ok_or_else(|| CheckpointError::Missing(name.clone()))?;
                if t.shape != dims {
                    return Err(CheckpointError::Malformed(format!("{name} has shape {:?}", t.shape)));
                }
                params[range].copy_from_slice(&t.data);
            }
        }
        Ok(())
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<(), CheckpointError> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.metadata.len() as u64).to_le_bytes())?;
        w.write_all(self.metadata.as_bytes())?;
        w.write_all(&(self.tensors.len() as u32).to_le_bytes())?;
        for t in &self.tensors {
            w.write_all(&(t.name.len() as u32).to_le_bytes())?;
            w.write_all(t.name.as_bytes())?;
            w.write_all(&(t.shape.len() as u32).to_le_bytes())?;
            for &d in &t.shape {
                w.write_all(&(d as u64).to_le_bytes())?;
            }
            for &x in &t.data {
                w.write_all(&x.to_bits().to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self, CheckpointError> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return Err(CheckpointError::Version(version));
        }
        let meta_len = read_u64(&mut r)? as usize;
        let metadata = read_string(&mut r, meta_len)?;
        let n = read_u32(&mut r)?;
        let mut tensors = Vec::with_capacity(n as usize);
        for _ in 0..n {
            let name_len = read_u32(&mut r)? as usize;
            let name = read_string(&mut r, name_len)?;
            let ndim = read_u32(&mut r)?;
            let mut shape = Vec::with_capacity(ndim as usize);
            for _ in 0..ndim {
                shape.push(read_u64(&mut r)? as usize);
            }
            let len = shape
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .ok_or_else(|| CheckpointError::Malformed(format!("{name} is too large")))?;
            let mut data = Vec::with_capacity(len);
            for _ in 0..len {
                data.push(f64::from_bits(read_u64(&mut r)?));
            }
            tensors.push(Tensor { name, shape, data });
        }
        Ok(Self { metadata, tensors })
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        std::fs::write(path, buf)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let bytes = std::fs::read(path)?;
        Self::read_from(bytes.as_slice())
    }
}

fn read_u32(r: &mut impl Read) -> Result<u32, CheckpointError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64, CheckpointError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_string(r: &mut impl Read, len: usize) -> Result<String, CheckpointError> {
    let mut bytes = Vec::new();
    r.take(len as u64).read_to_end(&mut bytes)?;
    if bytes.len() != len {
        return Err(CheckpointError::Malformed("truncated string".into()));
    }
    String::from_utf8(bytes).map_err(|e| CheckpointError::Malformed(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::mlp::Activation;
    use crate::rng::RngStream;

    #[test]
    fn round_trip_is_bit_exact() {
        let shape = MlpShape::new(vec![3, 5, 2], Activation::Identity);
        let mut params = vec![0.0; shape.num_params()];
        shape.init(&mut params, &mut RngStream::new(4), 1.0);
        params[0] = -0.0;
        params[1] = f64::MIN_POSITIVE / 3.0;
        let mut ck = Checkpoint::new("n_ues = 3\n");
        ck.push_mlp("actor", &shape, &params);
        ck.push("log_std", vec![2], vec![-0.5, 1e-300]);
        let mut bytes = Vec::new();
        ck.write_to(&mut bytes).unwrap();
        let back = Checkpoint::read_from(bytes.as_slice()).unwrap();
        assert_eq!(back.metadata, ck.metadata);
        assert_eq!(back.tensors.len(), ck.tensors.len());
        let mut restored = vec![1.0; params.len()];
        back.read_mlp("actor", &shape, &mut restored).unwrap();
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&restored), bits(&params));
        let mut again = Vec::new();
        back.write_to(&mut again).unwrap();
        assert_eq!(again, bytes);
    }

    #[test]
    fn layer_shapes_recorded() {
        let shape = MlpShape::new(vec![3, 5, 2], Activation::Identity);
        let mut ck = Checkpoint::default();
        ck.push_mlp("m", &shape, &vec![0.0; shape.num_params()]);
        let names: Vec<_> = ck.tensors.iter().map(|t| (t.name.as_str(), t.shape.clone())).collect();
        assert_eq!(
            names,
            vec![
                ("m.l0.w", vec![5, 3]),
                ("m.l0.b", vec![5]),
                ("m.l1.w", vec![2, 5]),
                ("m.l1.b", vec![2]),
            ]
        );
    }

    #[test]
    fn rejects_garbage() {
        assert!(matches!(Checkpoint::read_from(&b"NOTACKPT\x01\0\0\0"[..]), Err(CheckpointError::BadMagic)));
        let mut bytes = Vec::new();
        Checkpoint::new("x").write_to(&mut bytes).unwrap();
        bytes[8] = 9;
        assert!(matches!(Checkpoint::read_from(bytes.as_slice()), Err(CheckpointError::Version(9))));
        bytes[8] = 1;
        bytes.truncate(bytes.len() - 2);
        assert!(Checkpoint::read_from(bytes.as_slice()).is_err());
    }

    #[test]
    fn missing_tensor() {
        let shape = MlpShape::new(vec![1, 1], Activation::Identity);
        let ck = Checkpoint::default();
        assert!(matches!(ck.read_mlp("a", &shape, &mut [0.0, 0.0]), Err(CheckpointError::Missing(_))));
    }
}
