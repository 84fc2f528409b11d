//! Self-describing binary checkpoints.
//!
//! Layout: an 8-byte magic, a little-endian u32 format version, a
//! length-prefixed JSON header carrying the method tag, architecture, Adam
//! hyperparameters, step counter, and RNG position, followed by three raw
//! little-endian f64 arrays: parameters, then the first and second Adam
//! moments, each `param_count` long. Writing the same state twice produces
//! identical bytes.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use super::{CellKind, NetworkParams, TrainState};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"LQBFCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

/// The JSON header of a checkpoint file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub format_version: u32,
    /// Method tag, e.g. "lnn" or "gru".
    pub method: String,
    pub cell: CellKind,
    pub input_dim: usize,
    pub hidden: usize,
    pub n_layers: usize,
    pub out_dim: usize,
    pub param_count: usize,
    pub step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_adam: f64,
    pub loss_eps: f64,
    /// Seed of the training stream, hex-encoded.
    pub rng_seed_hex: String,
    /// 128-bit word position of the training stream, decimal string.
    pub rng_word_pos: String,
}

fn write_f64s<W: Write>(w: &mut W, xs: &[f64]) -> std::io::Result<()> {
    for x in xs {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

fn read_f64s<R: Read>(r: &mut R, n: usize) -> std::io::Result<Vec<f64>> {
    let mut buf = vec![0u8; 8 * n];
    r.read_exact(&mut buf)?;
    Ok(buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
}

/// Persists parameters, optimizer state, and the training RNG position.
pub fn save_checkpoint(
    path: &Path,
    method: &str,
    params: &NetworkParams,
    opt: &TrainState,
    rng: &ChaCha12Rng,
) -> Result<()> {
    if opt.m.len() != params.param_count() {
        return Err(Error::Checkpoint("optimizer state does not match parameter count".into()));
    }
    let meta = CheckpointMeta {
        format_version: CHECKPOINT_VERSION,
        method: method.to_string(),
        cell: params.cell,
        input_dim: params.input_dim,
        hidden: params.hidden,
        n_layers: params.n_layers(),
        out_dim: params.out_dim,
        param_count: params.param_count(),
        step: opt.step,
        lr: opt.lr,
        beta1: opt.beta1,
        beta2: opt.beta2,
        eps_adam: opt.eps_adam,
        loss_eps: opt.loss_eps,
        rng_seed_hex: rng.get_seed().iter().map(|b| format!("{b:02x}")).collect(),
        rng_word_pos: rng.get_word_pos().to_string(),
    };
    let header = serde_json::to_vec(&meta)?;

    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    w.write_all(&(header.len() as u64).to_le_bytes())?;
    w.write_all(&header)?;
    write_f64s(&mut w, &params.to_flat())?;
    write_f64s(&mut w, &opt.m)?;
    write_f64s(&mut w, &opt.v)?;
    w.flush()?;
    Ok(())
}

/// Restores a checkpoint written by [`save_checkpoint`].
pub fn load_checkpoint(path: &Path) -> Result<(CheckpointMeta, NetworkParams, TrainState, ChaCha12Rng)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let mut v4 = [0u8; 4];
    r.read_exact(&mut v4)?;
    let version = u32::from_le_bytes(v4);
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported format version {version}")));
    }
    let mut l8 = [0u8; 8];
    r.read_exact(&mut l8)?;
    let header_len = u64::from_le_bytes(l8) as usize;
    let mut header = vec![0u8; header_len];
    r.read_exact(&mut header)?;
    let meta: CheckpointMeta = serde_json::from_slice(&header)?;

    let mut params =
        NetworkParams::zeroed(meta.cell, meta.input_dim, meta.hidden, meta.n_layers, meta.out_dim);
    if params.param_count() != meta.param_count {
        return Err(Error::Checkpoint(format!(
            "header shapes imply {} parameters but param_count says {}",
            params.param_count(),
            meta.param_count
        )));
    }
    let flat = read_f64s(&mut r, meta.param_count)?;
    params.copy_from_flat(&flat)?;

    let mut opt =
        TrainState::new(meta.param_count, meta.lr, meta.beta1, meta.beta2, meta.eps_adam, meta.loss_eps);
    opt.m = read_f64s(&mut r, meta.param_count)?;
    opt.v = read_f64s(&mut r, meta.param_count)?;
    opt.step = meta.step;

    let seed_bytes: Vec<u8> = (0..meta.rng_seed_hex.len() / 2)
        .map(|i| u8::from_str_radix(&meta.rng_seed_hex[2 * i..2 * i + 2], 16))
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Checkpoint(format!("bad rng seed hex: {e}")))?;
    if seed_bytes.len() != 32 {
        return Err(Error::Checkpoint("rng seed must be 32 bytes".into()));
    }
    let mut seed = [0u8; 32];
    seed.copy_from_slice(&seed_bytes);
    let mut rng = ChaCha12Rng::from_seed(seed);
    let pos: u128 = meta
        .rng_word_pos
        .parse()
        .map_err(|e| Error::Checkpoint(format!("bad rng word position: {e}")))?;
    rng.set_word_pos(pos);

    Ok((meta, params, opt, rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use rand::RngCore;

    #[test]
    fn checkpoint_round_trips_and_is_byte_stable() {
        let dir = tempfile::tempdir().unwrap();
        let mut init = stream(80, &["ckpt"]);
        let params = NetworkParams::init(CellKind::Cfc, 12, 5, 3, 8, &mut init);
        let mut opt = TrainState::new(params.param_count(), 0.01, 0.9, 0.999, 1e-8, 1e-6);
        opt.step = 17;
        opt.m.iter_mut().enumerate().for_each(|(i, m)| *m = i as f64 * 0.5);
        let mut rng = stream(81, &["ckpt-rng"]);
        rng.next_u64();
        rng.next_u64();

        let p1 = dir.path().join("a.ckpt");
        let p2 = dir.path().join("b.ckpt");
        save_checkpoint(&p1, "lnn", &params, &opt, &rng).unwrap();
        save_checkpoint(&p2, "lnn", &params, &opt, &rng).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());

        let (meta, params2, opt2, mut rng2) = load_checkpoint(&p1).unwrap();
        assert_eq!(meta.method, "lnn");
        assert_eq!(meta.step, 17);
        assert_eq!(params2, params);
        assert_eq!(opt2, opt);
        let mut rng_orig = rng.clone();
        assert_eq!(rng2.next_u64(), rng_orig.next_u64());
    }

    #[test]
    fn corrupted_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.ckpt");
        std::fs::write(&path, b"NOTACKPT0000").unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Checkpoint(_))));
    }
}
