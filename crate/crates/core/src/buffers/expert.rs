use std::ops::Range;
use std::path::Path;
use std::sync::OnceLock;

use ndarray::ArrayView2;

use super::demo_file::DemoFile;
use super::knn::{KnnIndex, KnnStrategy, Neighbor};
use crate::error::{shape_err, Error, Result};

/// State-only demonstrations stored as consecutive pairs `(s_t, s_{t+1})`.
///
/// Nearest-neighbour queries run over the *current* state of each pair; the final
/// state of an episode only ever appears as a successor.
#[derive(Clone, Debug)]
pub struct ExpertBuffer {
    state_dim: usize,
    states: Vec<f64>,
    episodes: Vec<(u64, Range<usize>)>,
    pair_current: Vec<usize>,
    index: KnnIndex,
    transition_index: OnceLock<KnnIndex>,
}

/// A retrieved demonstration pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExpertNeighbor<'a> {
    pub record: usize,
    pub dist2: f64,
    pub state: &'a [f64],
    pub next_state: &'a [f64],
}

/// Reads a demonstration file (state-only or action-labeled; actions are ignored).
pub fn expert_load(path: &Path) -> Result<ExpertBuffer> {
    ExpertBuffer::from_demo_file(&DemoFile::load(path)?, None)
}

impl ExpertBuffer {
    pub fn from_demo_file(file: &DemoFile, scale: Option<Vec<f64>>) -> Result<Self> {
        let episodes = file.episodes.iter().map(|e| (e.id, e.states.clone())).collect();
        Self::from_episodes(file.state_dim, episodes, scale)
    }

    pub fn from_episodes(state_dim: usize, episodes: Vec<(u64, Vec<Vec<f64>>)>, scale: Option<Vec<f64>>) -> Result<Self> {
        if state_dim == 0 {
            return Err(Error::InvalidArgument("state_dim must be positive".into()));
        }
        let mut states = Vec::new();
        let mut spans = Vec::with_capacity(episodes.len());
        let mut pair_current = Vec::new();
        for (id, ep) in episodes {
            let start = states.len() / state_dim;
            for (i, s) in ep.iter().enumerate() {
                if s.len() != state_dim {
                    return Err(shape_err!("episode {id} state {i} has width {}, expected {state_dim}", s.len()));
                }
                states.extend_from_slice(s);
            }
            let end = start + ep.len();
            pair_current.extend(start..end.saturating_sub(1));
            spans.push((id, start..end));
        }
        let rows = pair_current
            .iter()
            .flat_map(|&i| states[i * state_dim..(i + 1) * state_dim].iter().copied())
            .collect();
        let index = KnnIndex::new(state_dim, rows, scale)?;
        Ok(ExpertBuffer { state_dim, states, episodes: spans, pair_current, index, transition_index: OnceLock::new() })
    }

    pub fn with_strategy(mut self, strategy: KnnStrategy) -> Self {
        self.index = self.index.with_strategy(strategy);
        self
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    /// Number of stored pairs.
    pub fn len(&self) -> usize {
        self.pair_current.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pair_current.is_empty()
    }

    pub fn episode_count(&self) -> usize {
        self.episodes.len()
    }

    fn state(&self, i: usize) -> &[f64] {
        &self.states[i * self.state_dim..(i + 1) * self.state_dim]
    }

    /// The pair `(s_t, s_{t+1})` stored at `record`.
    pub fn pair(&self, record: usize) -> (&[f64], &[f64]) {
        let i = self.pair_current[record];
        (self.state(i), self.state(i + 1))
    }

    /// All states of each episode, in order.
    pub fn episode_states(&self) -> impl Iterator<Item = (u64, Vec<&[f64]>)> + '_ {
        self.episodes.iter().map(|(id, r)| (*id, r.clone().map(|i| self.state(i)).collect()))
    }

    pub fn index(&self) -> &KnnIndex {
        &self.index
    }

    /// The `k` demonstration pairs whose current state is closest to `query`.
    pub fn knn_query(&self, query: &[f64], k: usize) -> Result<Vec<ExpertNeighbor<'_>>> {
        Ok(self.index.query(query, k)?.into_iter().map(|n| self.neighbor(n)).collect())
    }

    pub fn neighbor(&self, n: Neighbor) -> ExpertNeighbor<'_> {
        let (state, next_state) = self.pair(n.row);
        ExpertNeighbor { record: n.row, dist2: n.dist2, state, next_state }
    }

    /// Batched neighbour search, one result list per query row.
    pub fn knn_batch(&self, queries: ArrayView2<f64>, k: usize) -> Result<Vec<Vec<Neighbor>>> {
        self.index.query_batch(queries, k)
    }

    fn transitions(&self) -> &KnnIndex {
        self.transition_index.get_or_init(|| {
            let rows = (0..self.len())
                .flat_map(|r| {
                    let (s, n) = self.pair(r);
                    s.iter().chain(n).copied().collect::<Vec<_>>()
                })
                .collect();
            KnnIndex::new(2 * self.state_dim, rows, None).expect("widths validated at construction")
        })
    }

    /// Euclidean distance from the concatenated transition `(s, s_next)` to the nearest
    /// demonstrated pair.
    pub fn nearest_transition_distance(&self, state: &[f64], next_state: &[f64]) -> Result<f64> {
        if state.len() != self.state_dim || next_state.len() != self.state_dim {
            return Err(shape_err!("transition widths {}/{} vs state_dim {}", state.len(), next_state.len(), self.state_dim));
        }
        if self.is_empty() {
            return Err(Error::Precondition("expert buffer is empty".into()));
        }
        let q: Vec<f64> = state.iter().chain(next_state).copied().collect();
        Ok(self.transitions().query(&q, 1)?[0].dist2.sqrt())
    }
}
