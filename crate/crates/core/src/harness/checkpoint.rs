//! Versioned binary checkpoint.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic      8 bytes  "FPOCKPT\0"
//! version    u32
//! config     u64 length + UTF-8 TOML text
//! blocks     u32 count, then per block:
//!   name     u16 length + UTF-8
//!   tag      u8   (0 = network, 1 = f64 vector, 2 = u64 vector)
//!   network: activation u8, layer-size count u32, sizes u64..., params u64 count + f64...
//!   vectors: u64 count + values
//! ```
//!
//! Blocks are written in a fixed order, so save, load, save reproduces the
//! file byte for byte.

use std::path::Path;

use crate::critic::ValueEnsemble;
use crate::env::BaseDecoder;
use crate::error::{FpoError, Result};
use crate::flow_actor::FlowActor;
use crate::numkit::{Activation, Mlp};
use crate::trainer::{GaussianActor, Policy, TrainerConfig};

pub const MAGIC: &[u8; 8] = b"FPOCKPT\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: TrainerConfig,
    pub policy: Policy,
    pub decoder: BaseDecoder,
    pub critics: Option<ValueEnsemble>,
    pub env_steps: u64,
}

#[derive(Debug, Clone, PartialEq)]
enum Block {
    Net(Mlp),
    Reals(Vec<f64>),
    Ints(Vec<u64>),
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64s(&mut self, v: &[f64]) {
        self.u64(v.len() as u64);
        for x in v {
            self.0.extend_from_slice(&x.to_le_bytes());
        }
    }
    fn block(&mut self, name: &str, block: &Block) {
        self.u16(name.len() as u16);
        self.0.extend_from_slice(name.as_bytes());
        match block {
            Block::Net(net) => {
                self.u8(0);
                self.u8(net.activation().code());
                self.u32(net.sizes().len() as u32);
                for s in net.sizes() {
                    self.u64(*s as u64);
                }
                self.f64s(net.params());
            }
            Block::Reals(v) => {
                self.u8(1);
                self.f64s(v);
            }
            Block::Ints(v) => {
                self.u8(2);
                self.u64(v.len() as u64);
                for x in v {
                    self.u64(*x);
                }
            }
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

fn corrupt(msg: impl Into<String>) -> FpoError {
    FpoError::Checkpoint(msg.into())
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.bytes.len());
        let end = end.ok_or_else(|| corrupt(format!("truncated at byte {}", self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn len(&mut self, elem: usize) -> Result<usize> {
        let n = self.u64()? as usize;
        if n.saturating_mul(elem) > self.bytes.len() - self.pos {
            return Err(corrupt(format!("length {n} runs past the end of the file")));
        }
        Ok(n)
    }
    fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = self.len(8)?;
        Ok(self
            .take(n * 8)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
    fn string(&mut self, n: usize) -> Result<String> {
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| corrupt("invalid UTF-8"))
    }
    fn block(&mut self) -> Result<(String, Block)> {
        let name_len = self.u16()? as usize;
        let name = self.string(name_len)?;
        let block = match self.u8()? {
            0 => {
                let code = self.u8()?;
                let act = Activation::from_code(code).ok_or_else(|| corrupt(format!("unknown activation {code}")))?;
                let n = self.u32()? as usize;
                if n > 1024 {
                    return Err(corrupt(format!("{n} layer sizes")));
                }
                let sizes = (0..n).map(|_| self.u64().map(|s| s as usize)).collect::<Result<Vec<_>>>()?;
                Block::Net(Mlp::from_params(&sizes, act, self.f64s()?)?)
            }
            1 => Block::Reals(self.f64s()?),
            2 => {
                let n = self.len(8)?;
                Block::Ints((0..n).map(|_| self.u64()).collect::<Result<Vec<_>>>()?)
            }
            t => return Err(corrupt(format!("unknown block tag {t} in `{name}`"))),
        };
        Ok((name, block))
    }
}

impl Checkpoint {
    fn blocks(&self) -> Vec<(String, Block)> {
        let mut out = Vec::new();
        let chunk_len = self.decoder.chunk_len() as u64;
        let action_dim = self.decoder.action_dim() as u64;
        let flow_steps = self.policy.as_flow().map(|a| a.flow_steps() as u64).unwrap_or(0);
        out.push((
            "meta".into(),
            Block::Ints(vec![
                self.env_steps,
                self.policy.state_dim() as u64,
                self.policy.latent_dim() as u64,
                flow_steps,
                chunk_len,
                action_dim,
            ]),
        ));
        match &self.policy {
            Policy::Flow(a) => out.push(("policy.flow".into(), Block::Net(a.net().clone()))),
            Policy::Gaussian(g) => {
                out.push(("policy.gaussian.mean".into(), Block::Net(g.mean_net().clone())));
                out.push(("policy.gaussian.log_std".into(), Block::Reals(g.log_std().to_vec())));
            }
        }
        if let Some(net) = self.decoder.net() {
            out.push(("decoder".into(), Block::Net(net.clone())));
        }
        if let Some(c) = &self.critics {
            for (i, n) in c.online().iter().enumerate() {
                out.push((format!("critic.online.{i}"), Block::Net(n.clone())));
            }
            for (i, n) in c.targets().iter().enumerate() {
                out.push((format!("critic.target.{i}"), Block::Net(n.clone())));
            }
        }
        out
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(MAGIC);
        w.u32(FORMAT_VERSION);
        let text = self.config.to_toml();
        w.u64(text.len() as u64);
        w.0.extend_from_slice(text.as_bytes());
        let blocks = self.blocks();
        w.u32(blocks.len() as u32);
        for (name, b) in &blocks {
            w.block(name, b);
        }
        w.0
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(MAGIC.len()).ok() != Some(&MAGIC[..]) {
            return Err(corrupt("not a checkpoint file (bad magic)"));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(FpoError::CheckpointVersion {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let text_len = r.len(1)?;
        let text = r.string(text_len)?;
        let config = TrainerConfig::from_toml(&text).map_err(|e| corrupt(format!("embedded config: {}", e.message())))?;
        let count = r.u32()?;
        let mut blocks = Vec::new();
        for _ in 0..count {
            blocks.push(r.block()?);
        }
        if r.pos != bytes.len() {
            return Err(corrupt(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        let mut take = |name: &str| -> Option<Block> {
            let i = blocks.iter().position(|(n, _)| n == name)?;
            Some(blocks.remove(i).1)
        };
        let net = |b: Option<Block>, name: &str| match b {
            Some(Block::Net(n)) => Ok(n),
            _ => Err(corrupt(format!("missing network block `{name}`"))),
        };
        let meta = match take("meta") {
            Some(Block::Ints(v)) if v.len() == 6 => v,
            _ => return Err(corrupt("missing or malformed `meta` block")),
        };
        let [env_steps, sd, ld, flow_steps, chunk_len, action_dim] = meta[..] else {
            unreachable!()
        };
        let (sd, ld) = (sd as usize, ld as usize);
        let policy = if let Some(b) = take("policy.flow") {
            let actor = FlowActor::from_net(net(Some(b), "policy.flow")?, sd, ld, flow_steps as usize, config.explore())?;
            Policy::Flow(actor)
        } else {
            let mean = net(take("policy.gaussian.mean"), "policy.gaussian.mean")?;
            let log_std = match take("policy.gaussian.log_std") {
                Some(Block::Reals(v)) => v,
                _ => return Err(corrupt("missing block `policy.gaussian.log_std`")),
            };
            Policy::Gaussian(GaussianActor::from_parts(mean, log_std)?)
        };
        let decoder = match take("decoder") {
            Some(b) => BaseDecoder::frozen(net(Some(b), "decoder")?, sd, chunk_len as usize, action_dim as usize)?,
            None => BaseDecoder::identity(chunk_len as usize, action_dim as usize),
        };
        let mut online = Vec::new();
        while let Some(b) = take(&format!("critic.online.{}", online.len())) {
            online.push(net(Some(b), "critic.online")?);
        }
        let mut target = Vec::new();
        while let Some(b) = take(&format!("critic.target.{}", target.len())) {
            target.push(net(Some(b), "critic.target")?);
        }
        let critics = if online.is_empty() && target.is_empty() {
            None
        } else {
            Some(ValueEnsemble::from_parts(online, target, sd, ld, config.gamma, config.lambda)?)
        };
        if let Some((name, _)) = blocks.first() {
            return Err(corrupt(format!("unexpected block `{name}`")));
        }
        Ok(Self {
            config,
            policy,
            decoder,
            critics,
            env_steps,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| FpoError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| FpoError::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::Rng;

    fn flow_checkpoint() -> Checkpoint {
        let config = TrainerConfig {
            no_clip: true,
            seed: 9,
            ..Default::default()
        };
        let mut rng = Rng::new(3);
        let actor = FlowActor::new(6, 8, &[5], 3, config.explore(), &mut rng).unwrap();
        let dec = BaseDecoder::frozen(Mlp::new(&[14, 4, 8], Activation::Tanh, &mut rng).unwrap(), 6, 4, 2).unwrap();
        let mut critics = ValueEnsemble::new(2, 6, 8, &[4], 0.99, 0.95, &mut rng).unwrap();
        critics.online_mut()[1].params_mut()[0] += 0.5;
        Checkpoint {
            config,
            policy: Policy::Flow(actor),
            decoder: dec,
            critics: Some(critics),
            env_steps: 12_345,
        }
    }

    #[test]
    fn flow_round_trip_is_byte_identical() {
        let ck = flow_checkpoint();
        let bytes = ck.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn gaussian_identity_round_trip() {
        let mut rng = Rng::new(4);
        let g = GaussianActor::new(6, 8, &[3], 0.3, &mut rng).unwrap();
        let ck = Checkpoint {
            config: TrainerConfig::default(),
            policy: Policy::Gaussian(g),
            decoder: BaseDecoder::identity(4, 2),
            critics: None,
            env_steps: 0,
        };
        let bytes = ck.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn version_guard() {
        let mut bytes = flow_checkpoint().to_bytes();
        bytes[8..12].copy_from_slice(&7u32.to_le_bytes());
        match Checkpoint::from_bytes(&bytes).unwrap_err() {
            FpoError::CheckpointVersion { found, expected } => {
                assert_eq!((found, expected), (7, FORMAT_VERSION));
            }
            other => panic!("{other}"),
        }
    }

    #[test]
    fn damaged_files_fail_cleanly() {
        let bytes = flow_checkpoint().to_bytes();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        assert!(Checkpoint::from_bytes(b"nonsense").is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(Checkpoint::from_bytes(&extra).is_err());
    }
}
