//! Binary checkpoints and their text sidecar.
//!
//! Layout: magic `SGLAB1\n`, the parameter count as a little-endian `u64`,
//! then θ, the first AdamW moment and the second AdamW moment, each as
//! `count` little-endian `f64`s. The sidecar `<file>.meta` holds the full
//! config followed by the run seed, iteration and optimizer step.

use std::fs;
use std::path::{Path, PathBuf};

use super::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::es::{AdamWState, Trainer};

pub const MAGIC: &[u8; 7] = b"SGLAB1\n";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub theta: Vec<f64>,
    pub adam: AdamWState,
}

/// Run bookkeeping stored next to a checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointMeta {
    pub config: ExperimentConfig,
    pub run_seed: u64,
    pub iteration: u64,
}

pub fn meta_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta");
    PathBuf::from(s)
}

pub fn encode(ckpt: &Checkpoint) -> Result<Vec<u8>> {
    let n = ckpt.theta.len();
    if ckpt.adam.m.len() != n || ckpt.adam.v.len() != n {
        return Err(Error::Checkpoint("optimizer moments do not match θ".into()));
    }
    let mut buf = Vec::with_capacity(MAGIC.len() + 8 + 24 * n);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(n as u64).to_le_bytes());
    for block in [&ckpt.theta, &ckpt.adam.m, &ckpt.adam.v] {
        for v in block.iter() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(buf)
}

/// Parses checkpoint bytes; the optimizer step is not part of the binary
/// and comes back as 0.
pub fn decode(bytes: &[u8]) -> Result<Checkpoint> {
    let rest = bytes
        .strip_prefix(MAGIC.as_slice())
        .ok_or_else(|| Error::Checkpoint("bad magic".into()))?;
    if rest.len() < 8 {
        return Err(Error::Checkpoint("truncated header".into()));
    }
    let (count, body) = rest.split_at(8);
    let n = u64::from_le_bytes(count.try_into().expect("8 bytes")) as usize;
    let expected = n
        .checked_mul(24)
        .ok_or_else(|| Error::Checkpoint(format!("implausible parameter count {n}")))?;
    if body.len() != expected {
        return Err(Error::Checkpoint(format!(
            "expected {expected} payload bytes for {n} parameters, found {}",
            body.len()
        )));
    }
    let mut values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
    let mut take = || values.by_ref().take(n).collect::<Vec<f64>>();
    let theta = take();
    let m = take();
    let v = take();
    Ok(Checkpoint {
        theta,
        adam: AdamWState { m, v, step: 0 },
    })
}

/// Writes the checkpoint and its sidecar. Files are written under a
/// temporary name and renamed, so a crash never leaves a torn checkpoint.
pub fn save(path: &Path, ckpt: &Checkpoint, meta: &CheckpointMeta) -> Result<()> {
    write_atomic(path, &encode(ckpt)?)?;
    let mut text = meta.config.to_text();
    text.push_str(&format!(
        "# run\nrun_seed = {}\niteration = {}\nadam_step = {}\n",
        meta.run_seed, meta.iteration, ckpt.adam.step
    ));
    write_atomic(&meta_path(path), text.as_bytes())
}

pub fn save_trainer(path: &Path, trainer: &Trainer, config: &ExperimentConfig) -> Result<()> {
    let ckpt = Checkpoint {
        theta: trainer.theta().values.clone(),
        adam: trainer.adam().clone(),
    };
    let meta = CheckpointMeta {
        config: config.clone(),
        run_seed: trainer.seed(),
        iteration: trainer.iteration(),
    };
    save(path, &ckpt, &meta)
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

/// Loads a checkpoint together with its sidecar, restoring the optimizer step.
pub fn load_with_meta(path: &Path) -> Result<(Checkpoint, CheckpointMeta)> {
    let mut ckpt = load(path)?;
    let mpath = meta_path(path);
    let text = fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
    let mut config_lines = String::new();
    let (mut run_seed, mut iteration, mut step) = (None, None, None);
    for line in text.lines() {
        let field = line.split_once('=').map(|(k, v)| (k.trim(), v.trim()));
        let slot = match field {
            Some(("run_seed", _)) => &mut run_seed,
            Some(("iteration", _)) => &mut iteration,
            Some(("adam_step", _)) => &mut step,
            _ => {
                config_lines.push_str(line);
                config_lines.push('\n');
                continue;
            }
        };
        let value = field.expect("matched above").1;
        *slot = Some(
            value
                .parse::<u64>()
                .map_err(|_| Error::Checkpoint(format!("bad sidecar value `{value}`")))?,
        );
    }
    let missing = || Error::Checkpoint(format!("{} lacks run bookkeeping", mpath.display()));
    ckpt.adam.step = step.ok_or_else(missing)?;
    let meta = CheckpointMeta {
        config: config_lines.parse()?,
        run_seed: run_seed.ok_or_else(missing)?,
        iteration: iteration.ok_or_else(missing)?,
    };
    Ok((ckpt, meta))
}

/// Rebuilds a trainer from a checkpoint so training can resume.
pub fn resume(path: &Path) -> Result<(Trainer, ExperimentConfig)> {
    let (ckpt, meta) = load_with_meta(path)?;
    let setup = meta.config.run_setup()?;
    let trainer = Trainer::from_parts(setup, meta.run_seed, ckpt.theta, ckpt.adam, meta.iteration)?;
    Ok((trainer, meta.config))
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        Checkpoint {
            theta: vec![1.5, -0.0, f64::MIN_POSITIVE],
            adam: AdamWState {
                m: vec![0.1, 0.2, 0.3],
                v: vec![1e-300, 2.0, 3.0],
                step: 0,
            },
        }
    }

    #[test]
    fn byte_layout() {
        let bytes = encode(&sample()).unwrap();
        assert_eq!(&bytes[..7], b"SGLAB1\n");
        assert_eq!(&bytes[7..15], &3u64.to_le_bytes());
        assert_eq!(&bytes[15..23], &1.5f64.to_le_bytes());
        assert_eq!(bytes.len(), 7 + 8 + 9 * 8);
    }

    #[test]
    fn round_trip_is_bitwise() {
        let c = sample();
        let back = decode(&encode(&c).unwrap()).unwrap();
        for (a, b) in c.theta.iter().zip(&back.theta) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert_eq!(back, c);
    }

    #[test]
    fn corruption_detected() {
        let bytes = encode(&sample()).unwrap();
        assert!(decode(&bytes[..bytes.len() - 1]).is_err());
        assert!(decode(b"SGLAB2\n").is_err());
        let mut bad = bytes.clone();
        bad[7] = 4;
        assert!(matches!(decode(&bad), Err(Error::Checkpoint(_))));
    }
}
