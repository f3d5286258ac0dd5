//! Pseudo-action labels from state-only demonstrations and the action-distance
//! regularizer shared by the actor and critic objectives.
//!
//! For a query state `s`, the label is the mean target-actor action over the `K`
//! demonstrated states nearest to `s`. Labels are constants: nothing here records
//! activations for backpropagation.

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::buffers::ExpertBuffer;
use crate::error::{shape_err, Error, Result};
use crate::nn::Mlp;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelWeighting {
    /// Plain arithmetic mean over the K neighbours.
    #[default]
    Uniform,
    /// Weights proportional to `1 / (distance + 1e-6)`.
    InverseDistance,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SsilConfig {
    pub k: usize,
    pub alpha: f64,
    #[serde(default)]
    pub weighting: LabelWeighting,
}

impl Default for SsilConfig {
    fn default() -> Self {
        SsilConfig { k: 5, alpha: 5.0, weighting: LabelWeighting::Uniform }
    }
}

impl SsilConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidArgument("K must be at least 1".into()));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidArgument(format!("alpha must be finite and non-negative, got {}", self.alpha)));
        }
        Ok(())
    }
}

/// Label for a single query state.
pub fn pseudo_action(expert: &ExpertBuffer, target_actor: &Mlp, query: &[f64], k: usize) -> Result<Vec<f64>> {
    let q = ArrayView2::from_shape((1, query.len()), query).map_err(|e| shape_err!("{e}"))?;
    let labels = pseudo_actions(expert, target_actor, q, k, LabelWeighting::Uniform)?;
    Ok(labels.row(0).to_vec())
}

/// Labels for every row of `queries`.
///
/// Neighbour states shared between queries are pushed through the target actor once.
pub fn pseudo_actions(
    expert: &ExpertBuffer,
    target_actor: &Mlp,
    queries: ArrayView2<f64>,
    k: usize,
    weighting: LabelWeighting,
) -> Result<Array2<f64>> {
    if target_actor.input_dim() != expert.state_dim() {
        return Err(shape_err!(
            "target actor takes {} inputs but demonstrations have state_dim {}",
            target_actor.input_dim(),
            expert.state_dim()
        ));
    }
    let neighbours = expert.knn_batch(queries, k)?;

    // compact the set of distinct records so each is evaluated once
    let mut slot_of = vec![usize::MAX; expert.len()];
    let mut records = Vec::new();
    for n in neighbours.iter().flatten() {
        if slot_of[n.row] == usize::MAX {
            slot_of[n.row] = records.len();
            records.push(n.row);
        }
    }
    let sd = expert.state_dim();
    let mut inputs = Array2::zeros((records.len(), sd));
    for (slot, &r) in records.iter().enumerate() {
        inputs.row_mut(slot).assign(&ndarray::aview1(expert.pair(r).0));
    }
    let actions = target_actor.predict(inputs.view())?;

    let mut labels = Array2::zeros((queries.nrows(), target_actor.output_dim()));
    for (mut label, found) in labels.axis_iter_mut(Axis(0)).zip(&neighbours) {
        match weighting {
            LabelWeighting::Uniform => {
                for n in found {
                    label += &actions.row(slot_of[n.row]);
                }
                label /= found.len() as f64;
            }
            LabelWeighting::InverseDistance => {
                let weights: Vec<f64> = found.iter().map(|n| 1.0 / (n.dist2.sqrt() + 1e-6)).collect();
                let total: f64 = weights.iter().sum();
                for (n, w) in found.iter().zip(&weights) {
                    label.scaled_add(w / total, &actions.row(slot_of[n.row]));
                }
            }
        }
    }
    Ok(labels)
}

/// Euclidean (not squared) distance between two actions.
pub fn action_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(shape_err!("action widths differ: {} vs {}", a.len(), b.len()));
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt())
}

/// Row-wise action distances.
pub fn row_distances(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Result<Vec<f64>> {
    if a.dim() != b.dim() {
        return Err(shape_err!("action batches differ: {:?} vs {:?}", a.dim(), b.dim()));
    }
    Ok(a.rows()
        .into_iter()
        .zip(b.rows())
        .map(|(x, y)| x.iter().zip(y.iter()).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt())
        .collect())
}

/// `alpha * mean_i ||a_i - label_i||` and its gradient with respect to each `a_i`.
///
/// At zero distance the gradient is taken to be zero.
pub fn ssil_actor_penalty(actions: ArrayView2<f64>, labels: ArrayView2<f64>, alpha: f64) -> Result<(f64, Array2<f64>)> {
    let dists = row_distances(actions, labels)?;
    let n = dists.len();
    if n == 0 {
        return Err(Error::Precondition("empty action batch".into()));
    }
    let penalty = alpha * dists.iter().sum::<f64>() / n as f64;
    let mut grad = &actions - &labels;
    for (mut row, &d) in grad.axis_iter_mut(Axis(0)).zip(&dists) {
        if d > 0.0 {
            row *= alpha / (n as f64 * d);
        } else {
            row.fill(0.0);
        }
    }
    Ok((penalty, grad))
}
