//! Goal-conditioned transitions, hindsight relabeling and a circular replay
//! buffer with uniform sampling.

use crate::error::{check_len, Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub goal: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    /// Achieved goal after the step; relabeled rewards are computed from it.
    pub achieved_next: Vec<f64>,
    pub success: bool,
}

/// One rollout, all steps sharing the original goal.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Episode {
    pub transitions: Vec<Transition>,
}

impl Episode {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }
}

/// Original transitions plus `k` "future" relabels per step.
///
/// For step `t` each relabel draws `u` uniformly from `t..T` and substitutes
/// the goal achieved after step `u`. Output order is step-major: the original
/// step `t` followed by its `k` copies.
pub fn her_expand<F>(ep: &Episode, k: usize, reward_fn: F, rng: &mut Rng) -> Result<Vec<Transition>>
where
    F: Fn(&[f64], &[f64]) -> Result<f64>,
{
    if ep.is_empty() {
        return Err(Error::Contract(
            "hindsight relabeling of an empty episode".into(),
        ));
    }
    let n = ep.len();
    let mut out = Vec::with_capacity(n * (k + 1));
    for (t, tr) in ep.transitions.iter().enumerate() {
        out.push(tr.clone());
        for _ in 0..k {
            let u = t + rng.index(n - t);
            let goal = ep.transitions[u].achieved_next.clone();
            let reward = reward_fn(&tr.achieved_next, &goal)?;
            out.push(Transition {
                goal,
                reward,
                success: reward == 0.0,
                ..tr.clone()
            });
        }
    }
    Ok(out)
}

/// Widths of the vectors in a stored transition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TransitionDims {
    pub state: usize,
    pub goal: usize,
    pub action: usize,
}

impl TransitionDims {
    fn width(&self) -> usize {
        2 * self.state + 2 * self.goal + self.action + 2
    }
}

/// Fixed-capacity ring of transitions stored as flat rows:
/// `state | goal | action | reward | next_state | achieved_next | success`.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    dims: TransitionDims,
    capacity: usize,
    rows: Vec<f64>,
    cursor: usize,
    filled: usize,
}

impl ReplayBuffer {
    pub fn new(dims: TransitionDims, capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Contract("replay capacity must be positive".into()));
        }
        Ok(Self {
            dims,
            capacity,
            rows: Vec::new(),
            cursor: 0,
            filled: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.filled
    }

    pub fn is_empty(&self) -> bool {
        self.filled == 0
    }

    pub fn dims(&self) -> TransitionDims {
        self.dims
    }

    /// Append, overwriting the oldest entries once full.
    pub fn store(&mut self, transitions: &[Transition]) -> Result<()> {
        for tr in transitions {
            self.check(tr)?;
        }
        let w = self.dims.width();
        for tr in transitions {
            let mut row = Vec::with_capacity(w);
            row.extend_from_slice(&tr.state);
            row.extend_from_slice(&tr.goal);
            row.extend_from_slice(&tr.action);
            row.push(tr.reward);
            row.extend_from_slice(&tr.next_state);
            row.extend_from_slice(&tr.achieved_next);
            row.push(if tr.success { 1.0 } else { 0.0 });
            if self.filled < self.capacity {
                self.rows.extend_from_slice(&row);
                self.filled += 1;
            } else {
                self.rows[self.cursor * w..(self.cursor + 1) * w].copy_from_slice(&row);
            }
            self.cursor = (self.cursor + 1) % self.capacity;
        }
        Ok(())
    }

    fn check(&self, tr: &Transition) -> Result<()> {
        check_len("transition state", self.dims.state, tr.state.len())?;
        check_len(
            "transition next_state",
            self.dims.state,
            tr.next_state.len(),
        )?;
        check_len("transition goal", self.dims.goal, tr.goal.len())?;
        check_len(
            "transition achieved_next",
            self.dims.goal,
            tr.achieved_next.len(),
        )?;
        check_len("transition action", self.dims.action, tr.action.len())
    }

    /// Transition in storage slot `slot` (`slot < len()`).
    pub fn get(&self, slot: usize) -> Transition {
        assert!(
            slot < self.filled,
            "slot {slot} beyond filled {}",
            self.filled
        );
        let w = self.dims.width();
        let row = &self.rows[slot * w..(slot + 1) * w];
        let TransitionDims {
            state,
            goal,
            action,
        } = self.dims;
        let mut off = 0;
        let mut take = |n: usize| {
            let s = &row[off..off + n];
            off += n;
            s.to_vec()
        };
        let state_v = take(state);
        let goal_v = take(goal);
        let action_v = take(action);
        let reward = take(1)[0];
        let next_state = take(state);
        let achieved_next = take(goal);
        let success = take(1)[0] == 1.0;
        Transition {
            state: state_v,
            goal: goal_v,
            action: action_v,
            reward,
            next_state,
            achieved_next,
            success,
        }
    }

    /// Contents from oldest to newest.
    pub fn iter_oldest_first(&self) -> impl Iterator<Item = Transition> + '_ {
        let start = if self.filled < self.capacity {
            0
        } else {
            self.cursor
        };
        (0..self.filled).map(move |i| self.get((start + i) % self.filled.max(1)))
    }

    /// `batch_size` independent uniform draws, with replacement.
    pub fn sample(&self, batch_size: usize, rng: &mut Rng) -> Result<Vec<Transition>> {
        if self.filled == 0 {
            return Err(Error::NotReady);
        }
        Ok((0..batch_size)
            .map(|_| self.get(rng.index(self.filled)))
            .collect())
    }
}
