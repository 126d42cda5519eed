use ndarray::{Array1, Array2};
use rand::{Rng as _, SeedableRng};

use crate::nn::Checkpoint;
use crate::{Error, Result, Rng};

/// One environment interaction.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    /// True termination only; time-limit truncation stores `false`.
    pub terminal: bool,
}

/// Column-major mini-batch.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub states: Array2<f64>,
    pub actions: Array2<f64>,
    pub rewards: Array1<f64>,
    pub next_states: Array2<f64>,
    /// 1.0 for terminal transitions, else 0.0.
    pub terminals: Array1<f64>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn from_transitions(items: &[Transition]) -> Result<Self> {
        let first = items.first().ok_or_else(|| Error::config("empty batch"))?;
        let (ds, da) = (first.state.len(), first.action.len());
        let n = items.len();
        let mut b = Batch {
            states: Array2::zeros((n, ds)),
            actions: Array2::zeros((n, da)),
            rewards: Array1::zeros(n),
            next_states: Array2::zeros((n, ds)),
            terminals: Array1::zeros(n),
        };
        for (i, t) in items.iter().enumerate() {
            if t.state.len() != ds || t.next_state.len() != ds || t.action.len() != da {
                return Err(Error::DimensionMismatch {
                    context: "batch transition",
                    expected: ds,
                    actual: t.state.len(),
                });
            }
            b.states.row_mut(i).assign(&Array1::from(t.state.clone()));
            b.actions.row_mut(i).assign(&Array1::from(t.action.clone()));
            b.next_states.row_mut(i).assign(&Array1::from(t.next_state.clone()));
            b.rewards[i] = t.reward;
            b.terminals[i] = if t.terminal { 1.0 } else { 0.0 };
        }
        Ok(b)
    }
}

/// Fixed-capacity FIFO ring with uniform sampling (with replacement).
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    state_dim: usize,
    action_dim: usize,
    states: Vec<f64>,
    actions: Vec<f64>,
    rewards: Vec<f64>,
    next_states: Vec<f64>,
    terminals: Vec<bool>,
    /// Slot the next push overwrites once full.
    head: usize,
    rng: Rng,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, state_dim: usize, action_dim: usize, seed: u64) -> Result<Self> {
        Self::from_rng(capacity, state_dim, action_dim, Rng::seed_from_u64(seed))
    }

    /// Like [`ReplayBuffer::new`] with an explicit sampling stream.
    pub fn from_rng(capacity: usize, state_dim: usize, action_dim: usize, rng: Rng) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::config("replay capacity must be positive"));
        }
        Ok(Self {
            capacity,
            state_dim,
            action_dim,
            states: Vec::new(),
            actions: Vec::new(),
            rewards: Vec::new(),
            next_states: Vec::new(),
            terminals: Vec::new(),
            head: 0,
            rng,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn push(&mut self, t: Transition) -> Result<()> {
        if t.state.len() != self.state_dim || t.next_state.len() != self.state_dim {
            return Err(Error::DimensionMismatch {
                context: "replay state",
                expected: self.state_dim,
                actual: t.state.len(),
            });
        }
        if t.action.len() != self.action_dim {
            return Err(Error::DimensionMismatch {
                context: "replay action",
                expected: self.action_dim,
                actual: t.action.len(),
            });
        }
        if !t.reward.is_finite() {
            return Err(Error::config("transition reward must be finite"));
        }
        if self.len() < self.capacity {
            self.states.extend_from_slice(&t.state);
            self.actions.extend_from_slice(&t.action);
            self.next_states.extend_from_slice(&t.next_state);
            self.rewards.push(t.reward);
            self.terminals.push(t.terminal);
        } else {
            let i = self.head;
            let (ds, da) = (self.state_dim, self.action_dim);
            self.states[i * ds..(i + 1) * ds].copy_from_slice(&t.state);
            self.actions[i * da..(i + 1) * da].copy_from_slice(&t.action);
            self.next_states[i * ds..(i + 1) * ds].copy_from_slice(&t.next_state);
            self.rewards[i] = t.reward;
            self.terminals[i] = t.terminal;
        }
        self.head = (self.head + 1) % self.capacity;
        Ok(())
    }

    pub fn get(&self, i: usize) -> Option<Transition> {
        if i >= self.len() {
            return None;
        }
        let (ds, da) = (self.state_dim, self.action_dim);
        Some(Transition {
            state: self.states[i * ds..(i + 1) * ds].to_vec(),
            action: self.actions[i * da..(i + 1) * da].to_vec(),
            reward: self.rewards[i],
            next_state: self.next_states[i * ds..(i + 1) * ds].to_vec(),
            terminal: self.terminals[i],
        })
    }

    /// Draws `n` indices uniformly with replacement.
    pub fn sample(&mut self, n: usize) -> Result<Batch> {
        if self.is_empty() {
            return Err(Error::config("cannot sample from an empty replay buffer"));
        }
        let (ds, da) = (self.state_dim, self.action_dim);
        let mut b = Batch {
            states: Array2::zeros((n, ds)),
            actions: Array2::zeros((n, da)),
            rewards: Array1::zeros(n),
            next_states: Array2::zeros((n, ds)),
            terminals: Array1::zeros(n),
        };
        let len = self.len();
        for row in 0..n {
            let i = self.rng.random_range(0..len);
            for j in 0..ds {
                b.states[[row, j]] = self.states[i * ds + j];
                b.next_states[[row, j]] = self.next_states[i * ds + j];
            }
            for j in 0..da {
                b.actions[[row, j]] = self.actions[i * da + j];
            }
            b.rewards[row] = self.rewards[i];
            b.terminals[row] = if self.terminals[i] { 1.0 } else { 0.0 };
        }
        Ok(b)
    }

    pub fn save(&self, ck: &mut Checkpoint, prefix: &str) {
        let n = self.len();
        ck.put_u64(
            format!("{prefix}.meta"),
            &[5],
            vec![
                self.capacity as u64,
                self.state_dim as u64,
                self.action_dim as u64,
                self.head as u64,
                n as u64,
            ],
        );
        ck.put_f64(format!("{prefix}.states"), &[n, self.state_dim], self.states.clone());
        ck.put_f64(format!("{prefix}.actions"), &[n, self.action_dim], self.actions.clone());
        ck.put_f64(
            format!("{prefix}.next_states"),
            &[n, self.state_dim],
            self.next_states.clone(),
        );
        ck.put_f64(format!("{prefix}.rewards"), &[n], self.rewards.clone());
        ck.put_u64(
            format!("{prefix}.terminals"),
            &[n],
            self.terminals.iter().map(|&t| t as u64).collect(),
        );
        ck.put_rng(&format!("{prefix}.rng"), &self.rng);
    }

    pub fn load(ck: &Checkpoint, prefix: &str) -> Result<Self> {
        let (_, meta) = ck.get_u64(&format!("{prefix}.meta"))?;
        let [capacity, state_dim, action_dim, head, n] = meta else {
            return Err(Error::Checkpoint(format!("{prefix}.meta must hold 5 values")));
        };
        let n = *n as usize;
        let buf = Self {
            capacity: *capacity as usize,
            state_dim: *state_dim as usize,
            action_dim: *action_dim as usize,
            states: ck.get_f64(&format!("{prefix}.states"))?.1.to_vec(),
            actions: ck.get_f64(&format!("{prefix}.actions"))?.1.to_vec(),
            rewards: ck.get_f64(&format!("{prefix}.rewards"))?.1.to_vec(),
            next_states: ck.get_f64(&format!("{prefix}.next_states"))?.1.to_vec(),
            terminals: ck
                .get_u64(&format!("{prefix}.terminals"))?
                .1
                .iter()
                .map(|&t| t != 0)
                .collect(),
            head: *head as usize,
            rng: ck.get_rng(&format!("{prefix}.rng"))?,
        };
        if buf.rewards.len() != n || buf.terminals.len() != n || n > buf.capacity {
            return Err(Error::Checkpoint(format!("{prefix}: inconsistent replay contents")));
        }
        Ok(buf)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(x: f64) -> Transition {
        Transition {
            state: vec![x],
            action: vec![-x],
            reward: x,
            next_state: vec![x + 1.0],
            terminal: false,
        }
    }

    #[test]
    fn fifo_eviction_at_capacity() {
        let mut b = ReplayBuffer::new(3, 1, 1, 0).unwrap();
        for i in 0..5 {
            b.push(t(i as f64)).unwrap();
        }
        assert_eq!(b.len(), 3);
        let rewards: Vec<f64> = (0..3).map(|i| b.get(i).unwrap().reward).collect();
        // Slots 0 and 1 were overwritten by items 3 and 4.
        assert_eq!(rewards, vec![3.0, 4.0, 2.0]);
    }

    #[test]
    fn sampling_is_roughly_uniform() {
        let mut b = ReplayBuffer::new(10, 1, 1, 42).unwrap();
        for i in 0..4 {
            b.push(t(i as f64)).unwrap();
        }
        let batch = b.sample(40_000).unwrap();
        let mut counts = [0usize; 4];
        for r in batch.rewards.iter() {
            counts[*r as usize] += 1;
        }
        for c in counts {
            assert!((c as f64 - 10_000.0).abs() < 400.0, "{counts:?}");
        }
    }

    #[test]
    fn rejects_bad_transitions() {
        let mut b = ReplayBuffer::new(10, 2, 1, 0).unwrap();
        assert!(b.push(t(1.0)).is_err());
        assert!(ReplayBuffer::new(0, 1, 1, 0).is_err());
        let mut b = ReplayBuffer::new(10, 1, 1, 0).unwrap();
        assert!(b.sample(1).is_err());
        let mut bad = t(1.0);
        bad.reward = f64::NAN;
        assert!(b.push(bad).is_err());
    }

    #[test]
    fn checkpoint_round_trip_preserves_sampling() {
        let mut b = ReplayBuffer::new(4, 1, 1, 7).unwrap();
        for i in 0..6 {
            b.push(t(i as f64)).unwrap();
        }
        b.sample(3).unwrap();
        let mut ck = Checkpoint::new();
        b.save(&mut ck, "replay");
        let mut back = ReplayBuffer::load(&Checkpoint::parse(&ck.to_text()).unwrap(), "replay").unwrap();
        assert_eq!(back.sample(16).unwrap(), b.sample(16).unwrap());
        back.push(t(9.0)).unwrap();
        b.push(t(9.0)).unwrap();
        assert_eq!(back.get(2), b.get(2));
    }
}
