//! Versioned little-endian binary checkpoints of an [`AgentEnsemble`].
//!
//! Stored: epsilon and step counters, the exploration and replay-sampling
//! generator positions, and per agent the online and target networks and
//! the RMSProp accumulators. Replay memories are not stored; a resumed run
//! refills them.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::ensemble::{AgentEnsemble, N_AGENTS};
use super::mlp::{Layer, Mlp};
use super::rmsprop::{RmsPropParams, RmsPropState};
use super::{DqnConfig, DqnError};
use crate::config::SimConfig;
use crate::rng::RngStream;

pub const MAGIC: &[u8; 8] = b"NBDQNCKP";
pub const VERSION: u32 = 1;

pub fn save<W: Write>(e: &AgentEnsemble, mut w: W) -> Result<(), DqnError> {
    w.write_all(MAGIC)?;
    put_u32(&mut w, VERSION)?;
    put_f64(&mut w, e.epsilon)?;
    put_u64(&mut w, e.global_step)?;
    put_u64(&mut w, e.episodes_done)?;
    put_rng(&mut w, e.explore_rng())?;
    put_u32(&mut w, e.agents().len() as u32)?;
    for a in e.agents() {
        put_u64(&mut w, a.train_steps)?;
        put_rng(&mut w, a.sampler())?;
        put_layers(&mut w, a.online.layers())?;
        put_layers(&mut w, a.target.layers())?;
        let p = a.optimizer.params;
        put_f64(&mut w, p.learning_rate)?;
        put_f64(&mut w, p.decay)?;
        put_f64(&mut w, p.epsilon)?;
        put_layers(&mut w, &a.optimizer.cache)?;
    }
    Ok(())
}

pub fn save_file(e: &AgentEnsemble, path: &Path) -> Result<(), DqnError> {
    let mut buf = Vec::new();
    save(e, &mut buf)?;
    std::fs::write(path, buf)?;
    Ok(())
}

/// Restores an ensemble built for `sim` and `dqn`; network shapes in the
/// file must match what that configuration produces.
pub fn load<R: Read>(mut r: R, sim: &SimConfig, dqn: &DqnConfig) -> Result<AgentEnsemble, DqnError> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(DqnError::Checkpoint("not a checkpoint file".into()));
    }
    let version = get_u32(&mut r)?;
    if version != VERSION {
        return Err(DqnError::Checkpoint(format!("unsupported version {version}")));
    }
    let mut e = AgentEnsemble::new(sim, dqn, &RngStream::new(0))?;
    e.epsilon = get_f64(&mut r)?;
    e.global_step = get_u64(&mut r)?;
    e.episodes_done = get_u64(&mut r)?;
    e.set_explore_rng(get_rng(&mut r)?);
    let n = get_u32(&mut r)? as usize;
    if n != N_AGENTS {
        return Err(DqnError::Checkpoint(format!("{n} agents, expected {N_AGENTS}")));
    }
    for (k, agent) in e.agents_mut().iter_mut().enumerate() {
        agent.train_steps = get_u64(&mut r)?;
        agent.set_sampler(get_rng(&mut r)?);
        let expected = agent.online.sizes();
        let online = Mlp::from_layers(get_layers(&mut r)?)?;
        let target = Mlp::from_layers(get_layers(&mut r)?)?;
        for net in [&online, &target] {
            if net.sizes() != expected {
                return Err(DqnError::Checkpoint(format!(
                    "agent {k} has layer sizes {:?}, configuration expects {expected:?}",
                    net.sizes()
                )));
            }
        }
        let params = RmsPropParams {
            learning_rate: get_f64(&mut r)?,
            decay: get_f64(&mut r)?,
            epsilon: get_f64(&mut r)?,
        };
        let cache = get_layers(&mut r)?;
        if Mlp::from_layers(cache.clone())?.sizes() != expected {
            return Err(DqnError::Checkpoint(format!("agent {k} optimizer state has the wrong shape")));
        }
        agent.online = online;
        agent.target = target;
        agent.optimizer = RmsPropState { params, cache };
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(DqnError::Checkpoint("trailing bytes".into()));
    }
    Ok(e)
}

pub fn load_file(path: &Path, sim: &SimConfig, dqn: &DqnConfig) -> Result<AgentEnsemble, DqnError> {
    load(std::fs::File::open(path)?, sim, dqn)
}

fn put_u32<W: Write>(w: &mut W, v: u32) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn put_u64<W: Write>(w: &mut W, v: u64) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn put_f64<W: Write>(w: &mut W, v: f64) -> std::io::Result<()> {
    w.write_all(&v.to_bits().to_le_bytes())
}

fn put_rng<W: Write>(w: &mut W, rng: &ChaCha8Rng) -> std::io::Result<()> {
    w.write_all(&rng.get_seed())?;
    put_u64(w, rng.get_stream())?;
    w.write_all(&rng.get_word_pos().to_le_bytes())
}

fn put_layers<W: Write>(w: &mut W, layers: &[Layer]) -> std::io::Result<()> {
    put_u32(w, layers.len() as u32)?;
    for l in layers {
        put_u32(w, l.fan_in() as u32)?;
        put_u32(w, l.fan_out() as u32)?;
        for &x in l.w.iter().chain(l.b.iter()) {
            put_f64(w, x)?;
        }
    }
    Ok(())
}

fn get_array<const N: usize, R: Read>(r: &mut R) -> std::io::Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b)?;
    Ok(b)
}

fn get_u32<R: Read>(r: &mut R) -> std::io::Result<u32> {
    Ok(u32::from_le_bytes(get_array(r)?))
}

fn get_u64<R: Read>(r: &mut R) -> std::io::Result<u64> {
    Ok(u64::from_le_bytes(get_array(r)?))
}

fn get_f64<R: Read>(r: &mut R) -> std::io::Result<f64> {
    Ok(f64::from_bits(get_u64(r)?))
}

fn get_rng<R: Read>(r: &mut R) -> std::io::Result<ChaCha8Rng> {
    let mut rng = ChaCha8Rng::from_seed(get_array(r)?);
    rng.set_stream(get_u64(r)?);
    rng.set_word_pos(u128::from_le_bytes(get_array(r)?));
    Ok(rng)
}

const MAX_DIM: usize = 1 << 20;

fn get_layers<R: Read>(r: &mut R) -> Result<Vec<Layer>, DqnError> {
    let n = get_u32(r)? as usize;
    if n == 0 || n > 64 {
        return Err(DqnError::Checkpoint(format!("implausible layer count {n}")));
    }
    let mut layers = Vec::with_capacity(n);
    for _ in 0..n {
        let fan_in = get_u32(r)? as usize;
        let fan_out = get_u32(r)? as usize;
        if fan_in == 0 || fan_out == 0 || fan_in > MAX_DIM || fan_out > MAX_DIM {
            return Err(DqnError::Checkpoint(format!("implausible layer shape {fan_in}x{fan_out}")));
        }
        let w = (0..fan_in * fan_out).map(|_| get_f64(r)).collect::<std::io::Result<Vec<_>>>()?;
        let b = (0..fan_out).map(|_| get_f64(r)).collect::<std::io::Result<Vec<_>>>()?;
        layers.push(Layer {
            w: Array2::from_shape_vec((fan_in, fan_out), w).expect("length checked"),
            b: Array1::from_vec(b),
        });
    }
    Ok(layers)
}
