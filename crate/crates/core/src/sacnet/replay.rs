use crate::real::Real;
use crate::rng::SimRng;

use super::NetError;

/// Minibatch of transitions, row-major per field.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch<T> {
    pub len: usize,
    pub obs_dim: usize,
    pub action_dim: usize,
    pub states: Vec<T>,
    pub actions: Vec<T>,
    pub rewards: Vec<T>,
    pub next_states: Vec<T>,
    /// 1 for terminal transitions, 0 otherwise.
    pub dones: Vec<T>,
}

impl<T: Real> Batch<T> {
    pub fn with_capacity(len: usize, obs_dim: usize, action_dim: usize) -> Self {
        Self {
            len: 0,
            obs_dim,
            action_dim,
            states: Vec::with_capacity(len * obs_dim),
            actions: Vec::with_capacity(len * action_dim),
            rewards: Vec::with_capacity(len),
            next_states: Vec::with_capacity(len * obs_dim),
            dones: Vec::with_capacity(len),
        }
    }

    pub fn push(&mut self, state: &[T], action: &[T], reward: T, next_state: &[T], done: bool) {
        assert_eq!(state.len(), self.obs_dim);
        assert_eq!(next_state.len(), self.obs_dim);
        assert_eq!(action.len(), self.action_dim);
        self.states.extend_from_slice(state);
        self.actions.extend_from_slice(action);
        self.rewards.push(reward);
        self.next_states.extend_from_slice(next_state);
        self.dones.push(if done { T::one() } else { T::zero() });
        self.len += 1;
    }

    pub fn state(&self, i: usize) -> &[T] {
        &self.states[i * self.obs_dim..(i + 1) * self.obs_dim]
    }

    pub fn action(&self, i: usize) -> &[T] {
        &self.actions[i * self.action_dim..(i + 1) * self.action_dim]
    }
}

/// Fixed-capacity FIFO ring of transitions.
#[derive(Clone, Debug)]
pub struct ReplayBuffer<T> {
    capacity: usize,
    /// Next slot to overwrite.
    head: usize,
    data: Batch<T>,
}

impl<T: Real> ReplayBuffer<T> {
    pub fn new(capacity: usize, obs_dim: usize, action_dim: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self { capacity, head: 0, data: Batch::with_capacity(capacity, obs_dim, action_dim) }
    }

    pub fn len(&self) -> usize {
        self.data.len
    }

    pub fn is_empty(&self) -> bool {
        self.data.len == 0
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, state: &[T], action: &[T], reward: T, next_state: &[T], done: bool) {
        if self.data.len < self.capacity {
            self.data.push(state, action, reward, next_state, done);
        } else {
            let (o, a, i) = (self.data.obs_dim, self.data.action_dim, self.head);
            assert_eq!(state.len(), o);
            assert_eq!(next_state.len(), o);
            assert_eq!(action.len(), a);
            self.data.states[i * o..(i + 1) * o].copy_from_slice(state);
            self.data.next_states[i * o..(i + 1) * o].copy_from_slice(next_state);
            self.data.actions[i * a..(i + 1) * a].copy_from_slice(action);
            self.data.rewards[i] = reward;
            self.data.dones[i] = if done { T::one() } else { T::zero() };
        }
        self.head = (self.head + 1) % self.capacity;
    }

    /// Storage slot of the `age`-th oldest transition.
    fn slot(&self, age: usize) -> usize {
        if self.data.len < self.capacity {
            age
        } else {
            (self.head + age) % self.capacity
        }
    }

    /// State and reward of the `age`-th oldest transition (0 is the oldest).
    pub fn get(&self, age: usize) -> Option<(&[T], &[T], T, bool)> {
        (age < self.data.len).then(|| {
            let s = self.slot(age);
            (self.data.state(s), self.data.action(s), self.data.rewards[s], self.data.dones[s] > T::zero())
        })
    }

    /// Index of each drawn slot, uniform with replacement.
    pub fn sample_indices(&self, batch: usize, rng: &mut SimRng) -> Result<Vec<usize>, NetError> {
        if batch == 0 {
            return Err(NetError::EmptyBatch);
        }
        if self.data.len < batch {
            return Err(NetError::Underfilled { len: self.data.len, requested: batch });
        }
        Ok((0..batch).map(|_| rng.below(self.data.len)).collect())
    }

    pub fn sample(&self, batch: usize, rng: &mut SimRng) -> Result<Batch<T>, NetError> {
        let idx = self.sample_indices(batch, rng)?;
        let d = &self.data;
        let mut out = Batch::with_capacity(batch, d.obs_dim, d.action_dim);
        for i in idx {
            let o = d.obs_dim;
            out.push(d.state(i), d.action(i), d.rewards[i], &d.next_states[i * o..(i + 1) * o], d.dones[i] > T::zero());
        }
        Ok(out)
    }
}
