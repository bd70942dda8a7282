//! Binary checkpoint of the encoder parameters.
//!
//! Layout (all integers and floats little-endian):
//!
//! | offset | size | field                                   |
//! |--------|------|-----------------------------------------|
//! | 0      | 4    | magic `b"CTXC"`                         |
//! | 4      | 4    | format version, `u32` = 1               |
//! | 8      | 8    | `emb_dim` (`u64`)                       |
//! | 16     | 8    | `hidden` (`u64`)                        |
//! | 24     | 8    | `out_dim` (`u64`)                       |
//! | 32     | 8    | `n_classes` (`u64`)                     |
//! | 40     | 8    | `lambda` (`f64`)                        |
//! | 48     | 8    | master seed (`u64`)                     |
//! | 56     | 8    | PMI window size (`u64`)                 |
//! | 64     | 8    | minimum document frequency (`u64`)      |
//! | 72     | 1    | activation: 0 = ReLU, 1 = identity      |
//! | 73     | 1    | doubled self-loops: 0 or 1              |
//! | 74     | ...  | `W0`, `W1`, `FC_h`, `FC_x` as row-major `f64` arrays |

use std::fs;
use std::path::Path;

use ndarray::Array2;

use crate::encoder::{Activation, EncoderParams};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"CTXC";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 74;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: EncoderParams,
    pub seed: u64,
    pub window: usize,
    pub min_df: usize,
    pub double_self_loops: bool,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let p = &self.params;
        let dims = p.dims();
        let mut out = Vec::with_capacity(HEADER_LEN);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        for v in [dims.emb_dim, dims.hidden, dims.out_dim, dims.n_classes] {
            out.extend_from_slice(&(v as u64).to_le_bytes());
        }
        out.extend_from_slice(&p.lambda.to_le_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
        out.extend_from_slice(&(self.window as u64).to_le_bytes());
        out.extend_from_slice(&(self.min_df as u64).to_le_bytes());
        out.push(match p.activation {
            Activation::Relu => 0,
            Activation::Identity => 1,
        });
        out.push(u8::from(self.double_self_loops));
        for m in [&p.w0, &p.w1, &p.fc_h, &p.fc_x] {
            for v in m.iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |what: &str| Error::Data(format!("checkpoint: {what}"));
        if bytes.len() < HEADER_LEN {
            return Err(bad("truncated header"));
        }
        if &bytes[..4] != MAGIC {
            return Err(bad("bad magic"));
        }
        let u64_at = |off: usize| u64::from_le_bytes(bytes[off..off + 8].try_into().expect("8 bytes"));
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if version != VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let [emb_dim, hidden, out_dim, n_classes] = [8, 16, 24, 32].map(|o| u64_at(o) as usize);
        let lambda = f64::from_bits(u64_at(40));
        let seed = u64_at(48);
        let window = u64_at(56) as usize;
        let min_df = u64_at(64) as usize;
        let activation = match bytes[72] {
            0 => Activation::Relu,
            1 => Activation::Identity,
            other => return Err(bad(&format!("unknown activation tag {other}"))),
        };
        let double_self_loops = bytes[73] != 0;

        let shapes = [(emb_dim, hidden), (hidden, out_dim), (out_dim, n_classes), (emb_dim, n_classes)];
        let expected = HEADER_LEN + 8 * shapes.iter().map(|(r, c)| r * c).sum::<usize>();
        if bytes.len() != expected {
            return Err(bad(&format!("expected {expected} bytes, found {}", bytes.len())));
        }
        let mut offset = HEADER_LEN;
        let tensors = shapes.map(|(r, c)| {
            let values = bytes[offset..offset + 8 * r * c]
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
                .collect();
            offset += 8 * r * c;
            Array2::from_shape_vec((r, c), values).expect("length matches shape")
        });
        let [w0, w1, fc_h, fc_x] = tensors;
        let mut params = EncoderParams::from_parts(w0, w1, fc_h, fc_x, lambda)?;
        params.activation = activation;
        Ok(Self {
            params,
            seed,
            window,
            min_df,
            double_self_loops,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
