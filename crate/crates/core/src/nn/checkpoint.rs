//! Binary network checkpoints with a compatibility fingerprint.
//!
//! Layout (all integers little-endian):
//! magic `SWQNCKPT`, format version, window side, obstacle weight rho,
//! architecture hash, episode/env-step/gradient-step counters, a flags word
//! (bit 0: optimizer state present), then 10 parameter tensors as
//! `ndim, dims..., f32 data`, then optionally the optimizer scalars and its
//! f64 moment vectors. Loading an incompatible or damaged file fails; a
//! load/save round trip is byte-identical.

use std::fs;
use std::io::{Cursor, Read, Write};
use std::path::Path;

use super::{QNetwork, RAdam, TENSOR_COUNT};
use crate::error::Error;
use crate::Result;

const MAGIC: &[u8; 8] = b"SWQNCKPT";
const VERSION: u32 = 1;
const FLAG_OPTIMIZER: u32 = 1;

/// A trained network plus training progress counters and, optionally, the
/// optimizer state needed to continue training.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub net: QNetwork<f32>,
    pub opt: Option<RAdam>,
    pub episodes: u64,
    pub env_steps: u64,
    pub grad_steps: u64,
    /// Observation window side the network was trained with.
    pub window: u32,
    /// Obstacle weight baked into the observations it was trained on.
    pub rho: f64,
}

impl Checkpoint {
    pub fn ensure_compatible(&self, window: usize, rho: f64) -> Result<()> {
        if self.window as usize != window {
            return Err(Error::IncompatibleCheckpoint(format!(
                "checkpoint window {} does not match scenario window {window}",
                self.window
            )));
        }
        if self.rho != rho {
            return Err(Error::IncompatibleCheckpoint(format!(
                "checkpoint rho {} does not match scenario rho {rho}",
                self.rho
            )));
        }
        Ok(())
    }
}

fn arch_hash() -> u64 {
    fnv1a(QNetwork::<f32>::descriptor().as_bytes())
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_checkpoint(ckpt, &mut buf)?;
    fs::write(path, buf)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path)?;
    read_checkpoint(&mut Cursor::new(bytes))
}

fn write_checkpoint<W: Write>(ckpt: &Checkpoint, w: &mut W) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&ckpt.window.to_le_bytes())?;
    w.write_all(&ckpt.rho.to_le_bytes())?;
    w.write_all(&arch_hash().to_le_bytes())?;
    w.write_all(&ckpt.episodes.to_le_bytes())?;
    w.write_all(&ckpt.env_steps.to_le_bytes())?;
    w.write_all(&ckpt.grad_steps.to_le_bytes())?;
    let flags = if ckpt.opt.is_some() { FLAG_OPTIMIZER } else { 0 };
    w.write_all(&flags.to_le_bytes())?;
    w.write_all(&(TENSOR_COUNT as u32).to_le_bytes())?;

    let dims = tensor_dims();
    for (slice, dims) in ckpt.net.param_slices().iter().zip(&dims) {
        w.write_all(&(dims.len() as u32).to_le_bytes())?;
        for &d in dims {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        for v in slice.iter() {
            w.write_all(&v.to_le_bytes())?;
        }
    }

    if let Some(opt) = &ckpt.opt {
        w.write_all(&opt.t.to_le_bytes())?;
        w.write_all(&opt.lr.to_le_bytes())?;
        w.write_all(&opt.beta1.to_le_bytes())?;
        w.write_all(&opt.beta2.to_le_bytes())?;
        w.write_all(&opt.eps.to_le_bytes())?;
        for moments in [&opt.m, &opt.v] {
            for vec in moments {
                w.write_all(&(vec.len() as u64).to_le_bytes())?;
                for v in vec {
                    w.write_all(&v.to_le_bytes())?;
                }
            }
        }
    }
    Ok(())
}

fn read_checkpoint<R: Read>(r: &mut R) -> Result<Checkpoint> {
    let mut magic = [0u8; 8];
    read_exact(r, &mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("bad magic; not a checkpoint file".into()));
    }
    let version = read_u32(r)?;
    if version != VERSION {
        return Err(Error::IncompatibleCheckpoint(format!(
            "format version {version}, this build reads {VERSION}"
        )));
    }
    let window = read_u32(r)?;
    let rho = read_f64(r)?;
    let hash = read_u64(r)?;
    if hash != arch_hash() {
        return Err(Error::IncompatibleCheckpoint(
            "architecture hash mismatch".into(),
        ));
    }
    let episodes = read_u64(r)?;
    let env_steps = read_u64(r)?;
    let grad_steps = read_u64(r)?;
    let flags = read_u32(r)?;
    let tensor_count = read_u32(r)? as usize;
    if tensor_count != TENSOR_COUNT {
        return Err(Error::Checkpoint(format!(
            "{tensor_count} tensors, need {TENSOR_COUNT}"
        )));
    }

    let mut net = QNetwork::<f32>::zeros();
    let dims = tensor_dims();
    {
        let slices = net.param_slices_mut();
        for (tensor, expect_dims) in dims.iter().enumerate() {
            let ndim = read_u32(r)? as usize;
            if ndim != expect_dims.len() {
                return Err(Error::Checkpoint(format!(
                    "tensor {tensor}: rank {ndim}, need {}",
                    expect_dims.len()
                )));
            }
            for &expect in expect_dims {
                let d = read_u32(r)? as usize;
                if d != expect {
                    return Err(Error::Checkpoint(format!(
                        "tensor {tensor}: dimension {d}, need {expect}"
                    )));
                }
            }
            for v in slices[tensor].iter_mut() {
                *v = read_f32(r)?;
            }
        }
    }

    let opt = if flags & FLAG_OPTIMIZER != 0 {
        let t = read_u64(r)?;
        let lr = read_f64(r)?;
        let beta1 = read_f64(r)?;
        let beta2 = read_f64(r)?;
        let eps = read_f64(r)?;
        let mut opt = RAdam::new(&net, lr);
        opt.t = t;
        opt.beta1 = beta1;
        opt.beta2 = beta2;
        opt.eps = eps;
        for moments in [&mut opt.m, &mut opt.v] {
            for (tensor, vec) in moments.iter_mut().enumerate() {
                let len = read_u64(r)? as usize;
                if len != vec.len() {
                    return Err(Error::Checkpoint(format!(
                        "optimizer tensor {tensor}: {len} moments, need {}",
                        vec.len()
                    )));
                }
                for v in vec.iter_mut() {
                    *v = read_f64(r)?;
                }
            }
        }
        Some(opt)
    } else {
        None
    };

    let mut probe = [0u8; 1];
    if r.read(&mut probe)? != 0 {
        return Err(Error::Checkpoint("trailing bytes after checkpoint".into()));
    }

    Ok(Checkpoint {
        net,
        opt,
        episodes,
        env_steps,
        grad_steps,
        window,
        rho,
    })
}

/// Shapes of the parameter tensors in [`QNetwork::param_slices`] order.
fn tensor_dims() -> [Vec<usize>; TENSOR_COUNT] {
    let net = QNetwork::<f32>::zeros();
    [
        net.conv1.w.shape().to_vec(),
        net.conv1.b.shape().to_vec(),
        net.conv2.w.shape().to_vec(),
        net.conv2.b.shape().to_vec(),
        net.conv3.w.shape().to_vec(),
        net.conv3.b.shape().to_vec(),
        net.fc1.w.shape().to_vec(),
        net.fc1.b.shape().to_vec(),
        net.fc2.w.shape().to_vec(),
        net.fc2.b.shape().to_vec(),
    ]
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| Error::Checkpoint("truncated checkpoint".into()))
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f32<R: Read>(r: &mut R) -> Result<f32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(f32::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(f64::from_le_bytes(b))
}
