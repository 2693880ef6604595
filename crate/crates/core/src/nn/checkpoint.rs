//! Binary checkpoint format, all integers and floats little-endian:
//!
//! ```text
//! magic        8 bytes  "ADVCKPT\0"
//! version      u32
//! role         u8
//! config hash  32 bytes (sha256)
//! net count    u32
//! per net:     layer count u32, sizes u32 * count, hidden act u8, output act u8,
//!              param count u64, params f64 * count
//! has opt      u8 (0 or 1)
//! per net (if has opt): lr, beta1, beta2, eps f64, step u64, m f64 * n, v f64 * n
//! ```

use std::path::Path;

use super::{Activation, Adam, Mlp};
use crate::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"ADVCKPT\0";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckpointRole {
    AttackerActor,
    AttackerCritic,
    DefenderPpo,
    DefenderD3qn,
    D3qnTarget,
}

impl CheckpointRole {
    fn tag(self) -> u8 {
        self as u8
    }

    fn from_tag(tag: u8) -> Option<Self> {
        use CheckpointRole::*;
        [AttackerActor, AttackerCritic, DefenderPpo, DefenderD3qn, D3qnTarget].get(tag as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            CheckpointRole::AttackerActor => "attacker_actor",
            CheckpointRole::AttackerCritic => "attacker_critic",
            CheckpointRole::DefenderPpo => "defender_ppo",
            CheckpointRole::DefenderD3qn => "defender_d3qn",
            CheckpointRole::D3qnTarget => "d3qn_target",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub role: CheckpointRole,
    pub config_hash: [u8; 32],
    pub nets: Vec<Mlp>,
    /// One optimizer per net when present.
    pub opt: Option<Vec<Adam>>,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.push(self.role.tag());
        out.extend_from_slice(&self.config_hash);
        out.extend_from_slice(&(self.nets.len() as u32).to_le_bytes());
        for net in &self.nets {
            out.extend_from_slice(&(net.sizes().len() as u32).to_le_bytes());
            for &n in net.sizes() {
                out.extend_from_slice(&(n as u32).to_le_bytes());
            }
            let (hidden, output) = net.activations();
            out.push(hidden.tag());
            out.push(output.tag());
            out.extend_from_slice(&(net.params().len() as u64).to_le_bytes());
            for p in net.params() {
                out.extend_from_slice(&p.to_le_bytes());
            }
        }
        match &self.opt {
            None => out.push(0),
            Some(opts) => {
                out.push(1);
                for o in opts {
                    for x in [o.lr, o.beta1, o.beta2, o.eps] {
                        out.extend_from_slice(&x.to_le_bytes());
                    }
                    out.extend_from_slice(&o.step.to_le_bytes());
                    for x in o.m.iter().chain(&o.v) {
                        out.extend_from_slice(&x.to_le_bytes());
                    }
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::CorruptCheckpoint("bad magic".into()));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::CheckpointVersion { found: version, expected: CHECKPOINT_VERSION });
        }
        let tag = r.u8()?;
        let role = CheckpointRole::from_tag(tag).ok_or_else(|| Error::CorruptCheckpoint(format!("unknown role tag {tag}")))?;
        let config_hash: [u8; 32] = r.take(32)?.try_into().unwrap();
        let n_nets = r.u32()? as usize;
        let mut nets = Vec::with_capacity(n_nets.min(16));
        for _ in 0..n_nets {
            let n_layers = r.u32()? as usize;
            if n_layers > 64 {
                return Err(Error::CorruptCheckpoint(format!("implausible layer count {n_layers}")));
            }
            let sizes = (0..n_layers).map(|_| r.u32().map(|n| n as usize)).collect::<Result<Vec<_>>>()?;
            let hidden = r.activation()?;
            let output = r.activation()?;
            let n_params = r.u64()? as usize;
            if sizes.len() < 2 || sizes.contains(&0) || Mlp::param_count_for(&sizes) != n_params {
                return Err(Error::CorruptCheckpoint(format!("declared sizes {sizes:?} do not match {n_params} parameters")));
            }
            let params = r.f64s(n_params)?;
            nets.push(Mlp::from_parts(sizes, hidden, output, params).map_err(|e| Error::CorruptCheckpoint(e.to_string()))?);
        }
        let opt = match r.u8()? {
            0 => None,
            1 => {
                let mut opts = Vec::with_capacity(nets.len());
                for net in &nets {
                    let n = net.params().len();
                    let (lr, beta1, beta2, eps) = (r.f64()?, r.f64()?, r.f64()?, r.f64()?);
                    let step = r.u64()?;
                    let m = r.f64s(n)?;
                    let v = r.f64s(n)?;
                    opts.push(Adam { lr, beta1, beta2, eps, step, m, v });
                }
                Some(opts)
            }
            other => return Err(Error::CorruptCheckpoint(format!("bad optimizer flag {other}"))),
        };
        if r.pos != bytes.len() {
            return Err(Error::CorruptCheckpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(Self { role, config_hash, nets, opt })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        // Write-then-rename so an interrupted save never leaves a torn file.
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, self.to_bytes()).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    /// Loads and checks the role and the config hash. A hash mismatch is only
    /// tolerated with `allow_hash_mismatch`.
    pub fn load(path: &Path, role: CheckpointRole, expected_hash: &[u8; 32], allow_hash_mismatch: bool) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let ckpt = Self::from_bytes(&bytes)?;
        if ckpt.role != role {
            return Err(Error::Artifact(format!("{} holds a {} checkpoint, expected {}", path.display(), ckpt.role.name(), role.name())));
        }
        if &ckpt.config_hash != expected_hash && !allow_hash_mismatch {
            return Err(Error::HashMismatch { found: hex(&ckpt.config_hash), expected: hex(expected_hash) });
        }
        Ok(ckpt)
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let Some(end) = end else {
            return Err(Error::CorruptCheckpoint(format!("truncated at byte {} (wanted {n} more of {})", self.pos, self.bytes.len())));
        };
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| Error::CorruptCheckpoint("length overflow".into()))?)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }

    fn activation(&mut self) -> Result<Activation> {
        let tag = self.u8()?;
        Activation::from_tag(tag).ok_or_else(|| Error::CorruptCheckpoint(format!("unknown activation tag {tag}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn sample() -> Checkpoint {
        let mut r = rng::from_seed(21);
        let a = Mlp::init(&[25, 8, 5], Activation::Tanh, Activation::Linear, 0.01, &mut r);
        let b = Mlp::init(&[25, 8, 1], Activation::Tanh, Activation::Linear, 1.0, &mut r);
        let mut oa = Adam::new(a.params().len(), 3e-4);
        let mut pa = a.params().to_vec();
        let g = vec![0.1; pa.len()];
        oa.update(&mut pa, &g).unwrap();
        let ob = Adam::new(b.params().len(), 1e-3);
        Checkpoint { role: CheckpointRole::DefenderPpo, config_hash: [7; 32], nets: vec![a, b], opt: Some(vec![oa, ob]) }
    }

    #[test]
    fn round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.ckpt");
        let ck = sample();
        ck.save(&path).unwrap();
        let back = Checkpoint::load(&path, CheckpointRole::DefenderPpo, &[7; 32], false).unwrap();
        for (x, y) in ck.nets.iter().zip(&back.nets) {
            let xb: Vec<u64> = x.params().iter().map(|p| p.to_bits()).collect();
            let yb: Vec<u64> = y.params().iter().map(|p| p.to_bits()).collect();
            assert_eq!(xb, yb);
        }
        assert_eq!(ck, back);
    }

    #[test]
    fn truncated_file_is_corrupt() {
        let bytes = sample().to_bytes();
        for cut in [0, 5, 20, bytes.len() / 2, bytes.len() - 1] {
            assert!(matches!(Checkpoint::from_bytes(&bytes[..cut]), Err(Error::CorruptCheckpoint(_))), "cut {cut}");
        }
    }

    #[test]
    fn version_and_hash_guards() {
        let mut bytes = sample().to_bytes();
        bytes[8] = 9;
        assert!(matches!(Checkpoint::from_bytes(&bytes), Err(Error::CheckpointVersion { found: 9, .. })));

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("y.ckpt");
        sample().save(&path).unwrap();
        assert!(matches!(Checkpoint::load(&path, CheckpointRole::DefenderPpo, &[8; 32], false), Err(Error::HashMismatch { .. })));
        assert!(Checkpoint::load(&path, CheckpointRole::DefenderPpo, &[8; 32], true).is_ok());
        assert!(matches!(Checkpoint::load(&path, CheckpointRole::AttackerActor, &[7; 32], false), Err(Error::Artifact(_))));
    }
}
