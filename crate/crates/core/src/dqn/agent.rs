//! One DQN agent: online and target networks, optimizer and replay memory.

use ndarray::{Array2, ArrayView2};
use rand_chacha::ChaCha8Rng;

use super::mlp::{argmax, Mlp};
use super::replay::{ReplayBuffer, Transition};
use super::rmsprop::{RmsPropParams, RmsPropState};
use super::{DqnError, TargetMode};

#[derive(Debug, Clone)]
pub struct Agent {
    pub online: Mlp,
    pub target: Mlp,
    pub optimizer: RmsPropState,
    pub buffer: ReplayBuffer,
    /// Updates applied so far (buffer-underfilled steps do not count).
    pub train_steps: u64,
    sampler: ChaCha8Rng,
}

impl Agent {
    pub fn new(online: Mlp, rms: RmsPropParams, capacity: usize, sampler: ChaCha8Rng) -> Self {
        Self {
            target: online.clone(),
            optimizer: RmsPropState::new(&online, rms),
            online,
            buffer: ReplayBuffer::new(capacity),
            train_steps: 0,
            sampler,
        }
    }

    pub fn sampler(&self) -> &ChaCha8Rng {
        &self.sampler
    }

    pub fn set_sampler(&mut self, rng: ChaCha8Rng) {
        self.sampler = rng;
    }

    pub fn q_values(&self, state: &[f64]) -> Result<Vec<f64>, DqnError> {
        self.online.forward(state)
    }

    pub fn greedy(&self, state: &[f64]) -> Result<usize, DqnError> {
        Ok(argmax(&self.q_values(state)?))
    }

    pub fn sync_target(&mut self) {
        self.target = self.online.clone();
    }

    /// Samples a minibatch and applies one update; `None` while the buffer
    /// holds fewer than `minibatch` transitions. Copies the online network
    /// into the target every `sync_every` updates.
    pub fn train_step(
        &mut self,
        minibatch: usize,
        gamma: f64,
        mode: TargetMode,
        sync_every: u64,
    ) -> Result<Option<f64>, DqnError> {
        if self.buffer.len() < minibatch {
            return Ok(None);
        }
        let batch: Vec<Transition> = self.buffer.sample(minibatch, &mut self.sampler).into_iter().cloned().collect();
        let loss = train_on_batch(&mut self.online, &self.target, &mut self.optimizer, &batch, gamma, mode)?;
        self.train_steps += 1;
        if self.train_steps % sync_every == 0 {
            self.sync_target();
        }
        Ok(Some(loss))
    }
}

fn stack<'a, I: Iterator<Item = &'a [f64]>>(rows: I, n: usize, width: usize) -> Array2<f64> {
    let mut flat = Vec::with_capacity(n * width);
    for r in rows {
        flat.extend_from_slice(r);
    }
    Array2::from_shape_vec((n, flat.len() / n.max(1)), flat).expect("rows of equal width")
}

/// Per-sample TD targets: `r` for terminal transitions, otherwise
/// `r + gamma * Q_target(s', a*)` with `a*` the target's own argmax
/// (`DqnMax`) or the online network's argmax (`Ddqn`).
pub fn td_targets(batch: &[Transition], online: &Mlp, target: &Mlp, gamma: f64, mode: TargetMode) -> Result<Vec<f64>, DqnError> {
    if batch.is_empty() {
        return Ok(Vec::new());
    }
    let next = stack(batch.iter().map(|t| &*t.next_state), batch.len(), online.input_len());
    let q_target = target.forward_batch(next.view())?;
    let q_online = match mode {
        TargetMode::Ddqn => Some(online.forward_batch(next.view())?),
        TargetMode::DqnMax => None,
    };
    Ok(batch
        .iter()
        .enumerate()
        .map(|(i, t)| {
            if t.terminal {
                return t.reward;
            }
            let row = q_target.row(i);
            let row = row.as_slice().expect("standard layout");
            let pick = match &q_online {
                Some(q) => argmax(q.row(i).as_slice().expect("standard layout")),
                None => argmax(row),
            };
            t.reward + gamma * row[pick]
        })
        .collect())
}

/// One RMSProp step on `L = 1/(2B) sum_i (Q(s_i, a_i) - y_i)^2`, where only
/// the taken action's output receives gradient. Returns the loss before the
/// step.
pub fn regress(
    net: &mut Mlp,
    opt: &mut RmsPropState,
    states: ArrayView2<f64>,
    actions: &[usize],
    targets: &[f64],
) -> Result<f64, DqnError> {
    let n = actions.len();
    let cache = net.forward_cached(states)?;
    let q = cache.output();
    let mut d_out = Array2::zeros(q.raw_dim());
    let mut loss = 0.0;
    for i in 0..n {
        let err = q[[i, actions[i]]] - targets[i];
        loss += err * err;
        d_out[[i, actions[i]]] = err / n as f64;
    }
    let grads = net.backward(&cache, d_out);
    opt.apply(net, &grads);
    Ok(0.5 * loss / n as f64)
}

pub fn train_on_batch(
    online: &mut Mlp,
    target: &Mlp,
    opt: &mut RmsPropState,
    batch: &[Transition],
    gamma: f64,
    mode: TargetMode,
) -> Result<f64, DqnError> {
    let y = td_targets(batch, online, target, gamma, mode)?;
    let states = stack(batch.iter().map(|t| &*t.state), batch.len(), online.input_len());
    let actions: Vec<usize> = batch.iter().map(|t| t.action).collect();
    regress(online, opt, states.view(), &actions, &y)
}
