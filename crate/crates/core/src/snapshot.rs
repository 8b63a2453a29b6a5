//! GMEM1 memory snapshots.
//!
//! Layout (little-endian): magic `GMEM`, `u32` version, `u32` count,
//! `f32 bounds[6]` (min xyz, max xyz), `f32` interval, then per Gaussian
//! 23 `f32` (mean 3, raw scale 3, rotation wxyz 4, raw opacity 1, logits 12)
//! followed by a `u8` tag.
//!
//! Values are stored as `f32`; a memory whose values are already
//! `f32`-representable round-trips bit-exactly.

use std::fs;
use std::path::Path;

use crate::classes::NUM_CLASSES;
use crate::error::{Error, Result};
use crate::gaussian::{Aabb, GaussianMemory, SemanticGaussian};
use crate::geometry::{Quat, Vec3};

const MAGIC: &[u8; 4] = b"GMEM";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 4 + 24 + 4;
const FLOATS_PER_GAUSSIAN: usize = 3 + 3 + 4 + 1 + NUM_CLASSES;
const RECORD_LEN: usize = FLOATS_PER_GAUSSIAN * 4 + 1;

pub fn encode(memory: &GaussianMemory) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + memory.len() * RECORD_LEN);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(memory.len() as u32).to_le_bytes());
    let b = &memory.bounds;
    for v in b.min.iter().chain(&b.max) {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    out.extend_from_slice(&(memory.interval as f32).to_le_bytes());
    for g in &memory.gaussians {
        let r = g.rotation;
        let floats = g
            .mean
            .iter()
            .chain(g.scale_raw.iter())
            .copied()
            .chain([r.w, r.x, r.y, r.z, g.opacity_raw])
            .chain(g.logits.iter().copied());
        for v in floats {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
        out.push(g.tag as u8);
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<GaussianMemory> {
    if bytes.len() < 4 {
        return Err(Error::Truncated("snapshot"));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::BadMagic("GMEM"));
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::Truncated("snapshot"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let f32_at = |o: usize| f32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as f64;
    let version = u32_at(4);
    if version != VERSION {
        return Err(Error::UnsupportedVersion {
            format: "GMEM",
            version,
        });
    }
    let count = u32_at(8) as usize;
    let bounds = Aabb::new(
        [f32_at(12), f32_at(16), f32_at(20)],
        [f32_at(24), f32_at(28), f32_at(32)],
    );
    let interval = f32_at(36);
    let need = count
        .checked_mul(RECORD_LEN)
        .and_then(|n| n.checked_add(HEADER_LEN))
        .ok_or(Error::Truncated("snapshot"))?;
    if bytes.len() < need {
        return Err(Error::Truncated("snapshot"));
    }
    if bytes.len() > need {
        return Err(Error::Malformed {
            what: "snapshot",
            detail: format!("{} trailing bytes", bytes.len() - need),
        });
    }
    let mut gaussians = Vec::with_capacity(count);
    for i in 0..count {
        let base = HEADER_LEN + i * RECORD_LEN;
        let f = |k: usize| f32_at(base + 4 * k);
        let mut logits = [0.0; NUM_CLASSES];
        for (c, l) in logits.iter_mut().enumerate() {
            *l = f(11 + c);
        }
        let tag = match bytes[base + FLOATS_PER_GAUSSIAN * 4] {
            0 => false,
            1 => true,
            t => {
                return Err(Error::Malformed {
                    what: "snapshot",
                    detail: format!("gaussian {i} has tag {t}"),
                })
            }
        };
        gaussians.push(SemanticGaussian {
            mean: Vec3::new(f(0), f(1), f(2)),
            scale_raw: Vec3::new(f(3), f(4), f(5)),
            rotation: Quat::new(f(6), f(7), f(8), f(9)),
            opacity_raw: f(10),
            logits,
            tag,
        });
    }
    Ok(GaussianMemory {
        gaussians,
        bounds,
        interval,
    })
}

pub fn save(memory: &GaussianMemory, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode(memory))?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<GaussianMemory> {
    decode(&fs::read(path)?)
}
