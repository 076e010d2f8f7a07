//! Binary network checkpoints.
//!
//! Little-endian layout:
//!
//! ```text
//! "ZLIN"  version: u16  precision: u8 (4 or 8 bytes per value)  input_dim: u32  layers: u32
//! per layer: kind: u8  theta: f64  rows: u32  cols: u32  payload
//! ```
//!
//! Kinds are 0 linear, 1 ReLU, 2 zero-bias ReLU, 3 dropout, 4 sigmoid, 5 standardize.
//! `theta` is the zero-bias threshold or the dropout rate (0 otherwise). The payload of a
//! parametric layer is the row-major `rows x cols` weights followed by `rows` biases; a
//! standardize layer stores its mean row then its std row (`rows = 2`); dropout has none.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::layers::{Layer, LayerKind, Network};
use crate::numcore::{Matrix, Precision, Real};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"ZLIN";
pub const CHECKPOINT_VERSION: u16 = 1;
const HEADER_BYTES: usize = 4 + 2 + 1 + 4 + 4;
const LAYER_HEADER_BYTES: usize = 1 + 8 + 4 + 4;

fn kind_code(kind: LayerKind) -> (u8, f64) {
    match kind {
        LayerKind::Linear => (0, 0.0),
        LayerKind::Relu => (1, 0.0),
        LayerKind::ZeroBiasRelu { threshold } => (2, threshold),
        LayerKind::Dropout { rate } => (3, rate),
        LayerKind::Sigmoid => (4, 0.0),
        LayerKind::Standardize => (5, 0.0),
    }
}

pub fn encode_network<T: Real>(net: &Network<T>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.push(T::PRECISION.bytes() as u8);
    out.extend_from_slice(&(net.input_dim as u32).to_le_bytes());
    out.extend_from_slice(&(net.layers.len() as u32).to_le_bytes());
    for layer in &net.layers {
        let (code, theta) = kind_code(layer.kind);
        out.push(code);
        out.extend_from_slice(&theta.to_le_bytes());
        out.extend_from_slice(&(layer.weights.rows() as u32).to_le_bytes());
        out.extend_from_slice(&(layer.weights.cols() as u32).to_le_bytes());
        for &v in layer.weights.data().iter().chain(&layer.bias) {
            v.write_le(&mut out);
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Checkpoint(format!(
                "truncated: needed {n} bytes at offset {}, file has {}",
                self.pos,
                self.bytes.len()
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn values<T: Real>(&mut self, n: usize) -> Result<Vec<T>> {
        let width = T::PRECISION.bytes();
        let raw = self.take(
            n.checked_mul(width)
                .ok_or_else(|| Error::Checkpoint("size overflow".into()))?,
        )?;
        Ok(raw.chunks_exact(width).map(T::read_le).collect())
    }
}

/// Stored precision of an encoded checkpoint, after validating the header.
pub fn checkpoint_precision(bytes: &[u8]) -> Result<Precision> {
    if bytes.len() < HEADER_BYTES {
        return Err(Error::Checkpoint("truncated header".into()));
    }
    if &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint(format!(
            "bad magic {:?}: not a zlin checkpoint (expected version {CHECKPOINT_VERSION})",
            String::from_utf8_lossy(&bytes[..4])
        )));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported version {version} (expected {CHECKPOINT_VERSION})"
        )));
    }
    match bytes[6] {
        4 => Ok(Precision::F32),
        8 => Ok(Precision::F64),
        b => Err(Error::Checkpoint(format!("unknown value width {b}"))),
    }
}

/// Decodes a checkpoint stored at precision `T`.
pub fn decode_network<T: Real>(bytes: &[u8]) -> Result<Network<T>> {
    let stored = checkpoint_precision(bytes)?;
    if stored != T::PRECISION {
        return Err(Error::Checkpoint(format!(
            "checkpoint holds {stored:?} values, requested {:?}",
            T::PRECISION
        )));
    }
    let mut r = Reader { bytes, pos: 7 };
    let input_dim = r.u32()?;
    let count = r.u32()?;
    let mut layers = Vec::with_capacity(count.min(1 << 16));
    for i in 0..count {
        if bytes.len() - r.pos < LAYER_HEADER_BYTES {
            return Err(Error::Checkpoint(format!(
                "truncated in header of layer {i}"
            )));
        }
        let code = r.take(1)?[0];
        let theta = r.f64()?;
        let rows = r.u32()?;
        let cols = r.u32()?;
        let kind = match code {
            0 => LayerKind::Linear,
            1 => LayerKind::Relu,
            2 => LayerKind::ZeroBiasRelu { threshold: theta },
            3 => LayerKind::Dropout { rate: theta },
            4 => LayerKind::Sigmoid,
            5 => LayerKind::Standardize,
            c => {
                return Err(Error::Checkpoint(format!(
                    "layer {i}: unknown kind code {c}"
                )))
            }
        };
        let layer = match kind {
            LayerKind::Dropout { rate } => {
                if !(0.0..1.0).contains(&rate) || rows != 0 || cols != 0 {
                    return Err(Error::Checkpoint(format!("layer {i}: malformed dropout")));
                }
                Layer::dropout(rate)
            }
            LayerKind::Standardize => {
                if rows != 2 {
                    return Err(Error::Checkpoint(format!(
                        "layer {i}: standardize needs 2 rows"
                    )));
                }
                Layer {
                    kind,
                    weights: Matrix::from_vec(2, cols, r.values(2 * cols)?)?,
                    bias: vec![],
                }
            }
            _ => {
                let weights = Matrix::from_vec(rows, cols, r.values(rows * cols)?)?;
                let bias = r.values(rows)?;
                Layer::from_parts(kind, weights, bias)
                    .map_err(|e| Error::Checkpoint(format!("layer {i}: {e}")))?
            }
        };
        layers.push(layer);
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint(format!(
            "{} trailing bytes after the last layer",
            bytes.len() - r.pos
        )));
    }
    Network::new(input_dim, layers).map_err(|e| Error::Checkpoint(e.to_string()))
}

pub fn save_network<T: Real>(net: &Network<T>, path: &Path) -> Result<()> {
    fs::write(path, encode_network(net)).map_err(|e| Error::io(path, e))
}

pub fn load_network<T: Real>(path: &Path) -> Result<Network<T>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_network(&bytes).map_err(|e| match e {
        Error::Checkpoint(m) => Error::Checkpoint(format!("{}: {m}", path.display())),
        e => e,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::{Architecture, DropoutRates, HiddenSpec, UnitKind};
    use crate::numcore::Rng;
    use proptest::prelude::{prop_assert_eq, proptest};

    fn sample_net<T: Real>(seed: u64) -> Network<T> {
        let arch = Architecture {
            hidden: vec![
                HiddenSpec {
                    width: 12,
                    kind: UnitKind::ZeroBias,
                },
                HiddenSpec {
                    width: 4,
                    kind: UnitKind::Linear,
                },
                HiddenSpec {
                    width: 12,
                    kind: UnitKind::Relu,
                },
            ],
            classes: 3,
        };
        let mut net: Network<T> = arch.build(
            7,
            DropoutRates {
                input: 0.2,
                hidden: 0.5,
            },
            &mut Rng::new(seed),
        );
        let mean: Vec<T> = (0..4).map(|i| T::from_f64(0.1 * i as f64)).collect();
        let std: Vec<T> = (0..4).map(|i| T::from_f64(1.0 + i as f64)).collect();
        net.layers.insert(4, Layer::standardize(&mean, &std));
        net.layers[1].kind = LayerKind::ZeroBiasRelu { threshold: 1.0 };
        net.validate().unwrap();
        net
    }

    #[test]
    fn round_trip_is_bitwise() {
        let net = sample_net::<f64>(1);
        let bytes = encode_network(&net);
        let back: Network<f64> = decode_network(&bytes).unwrap();
        assert_eq!(encode_network(&back), bytes);
        for (a, b) in net.layers.iter().zip(&back.layers) {
            assert_eq!(a.kind, b.kind);
            assert!(a
                .weights
                .data()
                .iter()
                .zip(b.weights.data())
                .all(|(x, y)| x.to_bits() == y.to_bits()));
            assert!(a
                .bias
                .iter()
                .zip(&b.bias)
                .all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        let net32 = sample_net::<f32>(2);
        let back32: Network<f32> = decode_network(&encode_network(&net32)).unwrap();
        assert_eq!(back32, net32);
        assert!(decode_network::<f64>(&encode_network(&net32)).is_err());
    }

    #[test]
    fn corrupted_magic_is_a_version_error() {
        let mut bytes = encode_network(&sample_net::<f32>(3));
        bytes[0] = b'X';
        let err = decode_network::<f32>(&bytes).unwrap_err().to_string();
        assert!(err.contains("magic") && err.contains("version"), "{err}");
        let mut bytes = encode_network(&sample_net::<f32>(3));
        bytes[4] = 9;
        assert!(decode_network::<f32>(&bytes)
            .unwrap_err()
            .to_string()
            .contains("version 9"));
    }

    #[test]
    fn empty_network_is_header_only() {
        let net = Network::<f32>::new(5, vec![]).unwrap();
        let bytes = encode_network(&net);
        assert_eq!(bytes.len(), HEADER_BYTES);
        let back: Network<f32> = decode_network(&bytes).unwrap();
        assert!(back.layers.is_empty());
        assert_eq!(back.input_dim, 5);
    }

    #[test]
    fn truncation_and_trailing_bytes() {
        let bytes = encode_network(&sample_net::<f64>(4));
        for cut in [3, HEADER_BYTES - 1, HEADER_BYTES + 5, bytes.len() - 1] {
            assert!(decode_network::<f64>(&bytes[..cut]).is_err(), "cut {cut}");
        }
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode_network::<f64>(&extra).is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("net.zlin");
        let net = sample_net::<f32>(5);
        save_network(&net, &p).unwrap();
        assert_eq!(load_network::<f32>(&p).unwrap(), net);
        assert!(load_network::<f32>(&dir.path().join("missing.zlin")).is_err());
    }

    proptest! {
        #[test]
        fn random_values_round_trip(seed in 0u64..1000, scale in -30i32..30) {
            let mut net = sample_net::<f64>(seed);
            let s = 2f64.powi(scale);
            for l in net.layers.iter_mut().filter(|l| l.kind == LayerKind::Linear) {
                l.weights = l.weights.map(|v| v * s);
            }
            let back: Network<f64> = decode_network(&encode_network(&net)).unwrap();
            prop_assert_eq!(back, net);
        }
    }
}
