use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BufferState {
    Free,
    Active,
    /// Consecutive missed frames, in `1..=tau_out`.
    Dormant(u32),
    Terminated,
}

impl BufferState {
    pub fn is_live(self) -> bool {
        matches!(self, BufferState::Active | BufferState::Dormant(_))
    }
}

#[derive(Clone, Debug)]
struct Buffer<E> {
    state: BufferState,
    entries: VecDeque<(usize, E)>,
}

/// `M` buffers, each a FIFO ring of at most `t_max` timestamped entries.
/// A buffer's index is its persistent track id.
#[derive(Clone, Debug)]
pub struct MemoryBank<E> {
    t_max: usize,
    tau_out: u32,
    buffers: Vec<Buffer<E>>,
}

impl<E: Clone> MemoryBank<E> {
    pub fn new(capacity: usize, t_max: usize, tau_out: u32) -> Result<Self> {
        if capacity == 0 || t_max == 0 || tau_out == 0 {
            return Err(Error::Config(format!(
                "memory bank needs positive capacity, t_max, tau_out (got {capacity}, {t_max}, {tau_out})"
            )));
        }
        Ok(Self {
            t_max,
            tau_out,
            buffers: (0..capacity)
                .map(|_| Buffer {
                    state: BufferState::Free,
                    entries: VecDeque::with_capacity(t_max),
                })
                .collect(),
        })
    }

    pub fn capacity(&self) -> usize {
        self.buffers.len()
    }

    pub fn t_max(&self) -> usize {
        self.t_max
    }

    pub fn tau_out(&self) -> u32 {
        self.tau_out
    }

    fn buffer(&self, id: usize) -> Result<&Buffer<E>> {
        self.buffers
            .get(id)
            .ok_or_else(|| Error::InvalidState(format!("no buffer {id}")))
    }

    pub fn state(&self, id: usize) -> Result<BufferState> {
        Ok(self.buffer(id)?.state)
    }

    /// Active plus dormant buffers.
    pub fn active_count(&self) -> usize {
        self.buffers.iter().filter(|b| b.state.is_live()).count()
    }

    /// Ids of active and dormant buffers, ascending.
    pub fn live_ids(&self) -> Vec<usize> {
        (0..self.buffers.len())
            .filter(|&i| self.buffers[i].state.is_live())
            .collect()
    }

    pub fn entries(&self, id: usize) -> Result<Vec<E>> {
        Ok(self.buffer(id)?.entries.iter().map(|(_, e)| e.clone()).collect())
    }

    pub fn timestamps(&self, id: usize) -> Result<Vec<usize>> {
        Ok(self.buffer(id)?.entries.iter().map(|(t, _)| *t).collect())
    }

    pub fn last(&self, id: usize) -> Result<Option<&E>> {
        Ok(self.buffer(id)?.entries.back().map(|(_, e)| e))
    }

    /// Appends `entry`, evicting the oldest one when the ring is full.
    pub fn write(&mut self, id: usize, entry: E, t: usize) -> Result<()> {
        let t_max = self.t_max;
        let b = self
            .buffers
            .get_mut(id)
            .ok_or_else(|| Error::InvalidState(format!("no buffer {id}")))?;
        if !b.state.is_live() {
            return Err(Error::InvalidState(format!("write to {:?} buffer {id}", b.state)));
        }
        if b.entries.back().is_some_and(|&(last, _)| t <= last) {
            return Err(Error::InvalidState(format!("buffer {id}: time {t} is not after stored entries")));
        }
        if b.entries.len() == t_max {
            b.entries.pop_front();
        }
        b.entries.push_back((t, entry));
        b.state = BufferState::Active;
        Ok(())
    }

    /// Activates the lowest-index free buffer with `init` and returns its id.
    pub fn activate(&mut self, init: E, t: usize) -> Result<usize> {
        let id = self
            .buffers
            .iter()
            .position(|b| b.state == BufferState::Free)
            .ok_or(Error::Capacity {
                capacity: self.buffers.len(),
            })?;
        let b = &mut self.buffers[id];
        b.state = BufferState::Active;
        b.entries.clear();
        b.entries.push_back((t, init));
        Ok(id)
    }

    pub fn mark_missed(&mut self, id: usize) -> Result<BufferState> {
        let tau = self.tau_out;
        let b = self
            .buffers
            .get_mut(id)
            .ok_or_else(|| Error::InvalidState(format!("no buffer {id}")))?;
        b.state = match b.state {
            BufferState::Active => BufferState::Dormant(1),
            BufferState::Dormant(c) if c < tau => BufferState::Dormant(c + 1),
            BufferState::Dormant(_) => BufferState::Terminated,
            s => return Err(Error::InvalidState(format!("mark_missed on {s:?} buffer {id}"))),
        };
        Ok(b.state)
    }
}
