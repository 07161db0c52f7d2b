//! Versioned binary checkpoints. All integers and floats are little-endian.
//!
//! ```text
//! magic        5 bytes  "CDAE1"
//! kind         u32      1 = convolutional, 2 = fully connected
//! convolutional header:
//!   encoder    u32      stage count E
//!   decoder    u32      stage count D
//!   kernel     u32
//!   use_bn     u8
//!   bn_eps     f64
//!   momentum   f64
//!   widths     u32 × (E + D)
//!   seen       u64 × E  batches seen by each BN (only when use_bn)
//! fully connected header:
//!   side       u32
//!   hidden     u32
//!   objective  u8       0 = denoise, 1 = reconstruct
//! count        u64      number of f64 values that follow
//! payload      f64 × count
//! ```
//!
//! The payload walks layers in network order: each conv or dense layer
//! contributes its weights (row-major, output-channel first) then biases; each
//! BN layer contributes γ, β, running mean and running variance.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{Cdae, CdaeConfig, Dae, DaeConfig, DaeObjective, Despeckler, HeadInit};
use crate::nn::{Layer, Sequential};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 5] = b"CDAE1";
const KIND_CDAE: u32 = 1;
const KIND_DAE: u32 = 2;

/// A model as restored from disk.
#[derive(Debug, Clone)]
pub enum SavedModel {
    Cdae(Cdae),
    Dae(Dae),
}

impl From<Cdae> for SavedModel {
    fn from(m: Cdae) -> Self {
        SavedModel::Cdae(m)
    }
}

impl From<Dae> for SavedModel {
    fn from(m: Dae) -> Self {
        SavedModel::Dae(m)
    }
}

impl Despeckler for SavedModel {
    fn label(&self) -> String {
        match self {
            SavedModel::Cdae(m) => m.label(),
            SavedModel::Dae(m) => m.label(),
        }
    }

    fn despeckle(&self, noisy: &Tensor, sigma: f64) -> Result<Tensor> {
        match self {
            SavedModel::Cdae(m) => Despeckler::despeckle(m, noisy, sigma),
            SavedModel::Dae(m) => Despeckler::despeckle(m, noisy, sigma),
        }
    }
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

fn u32_of(v: usize) -> Result<u32> {
    u32::try_from(v).map_err(|_| bad(format!("{v} does not fit the checkpoint header")))
}

/// Every persisted buffer of a network in payload order.
fn buffers(net: &mut Sequential) -> Vec<&mut [f64]> {
    let mut out: Vec<&mut [f64]> = Vec::new();
    for (_, layer) in net.layers_mut() {
        match layer {
            Layer::Conv(c) => {
                out.push(c.params.weights.data_mut());
                out.push(&mut c.params.bias);
            }
            Layer::Dense(d) => {
                out.push(d.params.weights.data_mut());
                out.push(&mut d.params.bias);
            }
            Layer::BatchNorm(bn) => {
                let s = &mut bn.state;
                out.push(&mut s.gamma);
                out.push(&mut s.beta);
                out.push(&mut s.running_mean);
                out.push(&mut s.running_var);
            }
            Layer::Relu { .. } | Layer::Sigmoid { .. } => {}
        }
    }
    out
}

fn bn_counters(net: &mut Sequential) -> Vec<&mut u64> {
    net.layers_mut()
        .filter_map(|(_, l)| match l {
            Layer::BatchNorm(bn) => Some(&mut bn.state.batches_seen),
            _ => None,
        })
        .collect()
}

pub fn encode_checkpoint(model: &SavedModel) -> Result<Vec<u8>> {
    let mut model = model.clone();
    let mut out = MAGIC.to_vec();
    let net = match &mut model {
        SavedModel::Cdae(m) => {
            let c = m.config().clone();
            out.extend_from_slice(&KIND_CDAE.to_le_bytes());
            out.extend_from_slice(&u32_of(c.encoder_widths.len())?.to_le_bytes());
            out.extend_from_slice(&u32_of(c.decoder_widths.len())?.to_le_bytes());
            out.extend_from_slice(&u32_of(c.kernel)?.to_le_bytes());
            out.push(u8::from(c.use_bn));
            out.extend_from_slice(&c.bn_eps.to_le_bytes());
            out.extend_from_slice(&c.bn_momentum.to_le_bytes());
            for w in c.widths() {
                out.extend_from_slice(&u32_of(w)?.to_le_bytes());
            }
            for seen in bn_counters(m.net_mut()) {
                out.extend_from_slice(&seen.to_le_bytes());
            }
            m.net_mut()
        }
        SavedModel::Dae(m) => {
            let c = m.config().clone();
            out.extend_from_slice(&KIND_DAE.to_le_bytes());
            out.extend_from_slice(&u32_of(c.side)?.to_le_bytes());
            out.extend_from_slice(&u32_of(c.hidden)?.to_le_bytes());
            out.push(match c.objective {
                DaeObjective::Denoise => 0,
                DaeObjective::Reconstruct => 1,
            });
            m.net_mut()
        }
    };
    let bufs = buffers(net);
    let count: usize = bufs.iter().map(|b| b.len()).sum();
    out.reserve(8 + 8 * count);
    out.extend_from_slice(&(count as u64).to_le_bytes());
    for b in bufs {
        for v in b.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| bad(format!("truncated checkpoint while reading {what}")))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()) as usize)
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<SavedModel> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.take(MAGIC.len(), "magic")?;
    if magic != MAGIC {
        return Err(bad(format!(
            "unrecognized checkpoint version {:?} (expected {:?})",
            String::from_utf8_lossy(magic),
            std::str::from_utf8(MAGIC).unwrap()
        )));
    }
    let mut model = match r.u32("kind")? as u32 {
        KIND_CDAE => {
            let enc = r.u32("encoder stages")?;
            let dec = r.u32("decoder stages")?;
            let kernel = r.u32("kernel")?;
            let use_bn = match r.u8("use_bn")? {
                0 => false,
                1 => true,
                other => return Err(bad(format!("invalid use_bn flag {other}"))),
            };
            let bn_eps = r.f64("bn eps")?;
            let bn_momentum = r.f64("bn momentum")?;
            if enc + dec > 4096 {
                return Err(bad("implausible stage count"));
            }
            let widths = (0..enc + dec).map(|_| r.u32("widths")).collect::<Result<Vec<_>>>()?;
            let config = CdaeConfig {
                encoder_widths: widths[..enc].to_vec(),
                decoder_widths: widths[enc..].to_vec(),
                kernel,
                use_bn,
                bn_eps,
                bn_momentum,
                // overwritten by the payload
                head_init: HeadInit::Zero,
            };
            config.validate().map_err(|e| bad(format!("invalid architecture: {e}")))?;
            let mut m = Cdae::new(config, 0)?;
            for seen in bn_counters(m.net_mut()) {
                *seen = r.u64("bn batch counters")?;
            }
            SavedModel::Cdae(m)
        }
        KIND_DAE => {
            let side = r.u32("side")?;
            let hidden = r.u32("hidden")?;
            let objective = match r.u8("objective")? {
                0 => DaeObjective::Denoise,
                1 => DaeObjective::Reconstruct,
                other => return Err(bad(format!("invalid objective tag {other}"))),
            };
            let config = DaeConfig { side, hidden, objective };
            config.validate().map_err(|e| bad(format!("invalid architecture: {e}")))?;
            SavedModel::Dae(Dae::new(config, 0)?)
        }
        other => return Err(bad(format!("unknown model kind {other}"))),
    };
    let declared = r.u64("parameter count")?;
    let net = match &mut model {
        SavedModel::Cdae(m) => m.net_mut(),
        SavedModel::Dae(m) => m.net_mut(),
    };
    let bufs = buffers(net);
    let expected: usize = bufs.iter().map(|b| b.len()).sum();
    if declared != expected as u64 {
        return Err(bad(format!(
            "header declares {declared} values but the architecture has {expected}"
        )));
    }
    let remaining = bytes.len() - r.pos;
    if remaining != 8 * expected {
        return Err(bad(format!(
            "payload holds {remaining} bytes, expected {}",
            8 * expected
        )));
    }
    for b in bufs {
        for v in b.iter_mut() {
            *v = r.f64("parameters")?;
        }
    }
    Ok(model)
}

pub fn save_checkpoint(model: &SavedModel, path: &Path) -> Result<()> {
    fs::write(path, encode_checkpoint(model)?)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<SavedModel> {
    let bytes = fs::read(path)?;
    decode_checkpoint(&bytes).map_err(|e| match e {
        Error::Checkpoint(msg) => Error::Checkpoint(format!("{}: {msg}", path.display())),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Mode, Network};
    use crate::rng::SeededRng;

    fn bits(t: &Tensor) -> Vec<u64> {
        t.data().iter().map(|v| v.to_bits()).collect()
    }

    fn trained_cdae() -> Cdae {
        let mut m = Cdae::new(CdaeConfig::tiny(3, true), 9).unwrap();
        let mut rng = SeededRng::new(1);
        let x = Tensor::from_vec([2, 1, 8, 8], (0..128).map(|_| rng.normal()).collect()).unwrap();
        m.forward(&x, Mode::Train).unwrap();
        m
    }

    fn noisy_input() -> Tensor {
        let mut rng = SeededRng::new(2);
        Tensor::image(8, 8, (0..64).map(|_| rng.uniform_range(0.01, 1.2)).collect()).unwrap()
    }

    #[test]
    fn cdae_roundtrip_is_bit_exact() {
        let original = SavedModel::from(trained_cdae());
        let bytes = encode_checkpoint(&original).unwrap();
        assert_eq!(&bytes[..5], b"CDAE1");
        let restored = decode_checkpoint(&bytes).unwrap();
        assert_eq!(encode_checkpoint(&restored).unwrap(), bytes);
        let x = noisy_input();
        assert_eq!(
            bits(&original.despeckle(&x, 0.3).unwrap()),
            bits(&restored.despeckle(&x, 0.3).unwrap())
        );
    }

    #[test]
    fn dae_roundtrip() {
        let cfg = DaeConfig {
            side: 8,
            hidden: 5,
            objective: DaeObjective::Reconstruct,
        };
        let original = SavedModel::from(Dae::new(cfg.clone(), 3).unwrap());
        let restored = decode_checkpoint(&encode_checkpoint(&original).unwrap()).unwrap();
        match &restored {
            SavedModel::Dae(d) => assert_eq!(d.config(), &cfg),
            _ => panic!("wrong kind"),
        }
        let x = noisy_input();
        assert_eq!(
            bits(&original.despeckle(&x, 0.1).unwrap()),
            bits(&restored.despeckle(&x, 0.1).unwrap())
        );
    }

    #[test]
    fn running_statistics_survive() {
        let original = trained_cdae();
        let restored = match decode_checkpoint(&encode_checkpoint(&original.clone().into()).unwrap()).unwrap() {
            SavedModel::Cdae(m) => m,
            _ => unreachable!(),
        };
        let states = |m: &Cdae| {
            m.net()
                .layers()
                .filter_map(|(_, l)| match l {
                    Layer::BatchNorm(bn) => Some(bn.state.clone()),
                    _ => None,
                })
                .collect::<Vec<_>>()
        };
        let (a, b) = (states(&original), states(&restored));
        assert_eq!(a.len(), 2);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.running_mean, y.running_mean);
            assert_eq!(x.running_var, y.running_var);
            assert_eq!(x.batches_seen, 1);
            assert_eq!(y.batches_seen, 1);
        }
    }

    #[test]
    fn corrupted_files() {
        let bytes = encode_checkpoint(&trained_cdae().into()).unwrap();
        let mut wrong_magic = bytes.clone();
        wrong_magic[4] = b'2';
        let err = decode_checkpoint(&wrong_magic).unwrap_err();
        assert!(err.to_string().contains("version"), "{err}");
        assert!(decode_checkpoint(&bytes[..bytes.len() - 3]).is_err());
        assert!(decode_checkpoint(&bytes[..20]).is_err());
        let mut extra = bytes.clone();
        extra.extend_from_slice(&[0; 8]);
        assert!(decode_checkpoint(&extra).is_err());
    }

    #[test]
    fn declared_count_is_cross_checked() {
        let mut bytes = encode_checkpoint(&Cdae::new(CdaeConfig::tiny(2, false), 1).unwrap().into()).unwrap();
        // header: magic 5 + kind 4 + stages 8 + kernel 4 + bn 1 + eps 8 + momentum 8 + widths 16
        let at = 5 + 4 + 8 + 4 + 1 + 8 + 8 + 16;
        let count = u64::from_le_bytes(bytes[at..at + 8].try_into().unwrap());
        bytes[at..at + 8].copy_from_slice(&(count + 1).to_le_bytes());
        let err = decode_checkpoint(&bytes).unwrap_err();
        assert!(err.to_string().contains("declares"), "{err}");
    }
}
