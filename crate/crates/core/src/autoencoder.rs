//! Per-user sparse autoencoder whose hidden units are knowledge-graph
//! features.
//!
//! The input and output layers hold the user's rated items (those known to
//! the graph); the hidden layer holds the union of their features. Item `i`
//! and feature `f` are connected, in both the encoder and the decoder, iff
//! `f` is one of the item's features. There are no bias units and encoder and
//! decoder weights are independent. Both layers use the logistic sigmoid.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ids::{FeatureId, ItemId, UserId};
use crate::kg::ItemFeatureMap;

pub mod gradcheck;

/// One connection between rated item `item` and hidden feature `feature`,
/// both given as layer indices. The decoder edge is its transpose.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Edge {
    pub item: u32,
    pub feature: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparseTopology {
    rated_items: Vec<ItemId>,
    features: Vec<FeatureId>,
    /// Sorted by (item, feature).
    edges: Vec<Edge>,
}

impl SparseTopology {
    /// Builds a topology from explicit item → feature lists. Duplicate items
    /// or duplicate features within an item are merged.
    pub fn from_item_features<'a, I>(items: I) -> Self
    where
        I: IntoIterator<Item = (ItemId, &'a [FeatureId])>,
    {
        let items: BTreeMap<ItemId, BTreeSet<FeatureId>> =
            items.into_iter().fold(BTreeMap::new(), |mut acc, (item, fs)| {
                acc.entry(item).or_default().extend(fs.iter().copied());
                acc
            });
        let features: Vec<FeatureId> = items
            .values()
            .flatten()
            .copied()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let feature_index: BTreeMap<FeatureId, u32> =
            features.iter().enumerate().map(|(i, &f)| (f, i as u32)).collect();
        let mut edges = Vec::new();
        for (item_idx, fs) in items.values().enumerate() {
            for f in fs {
                edges.push(Edge {
                    item: item_idx as u32,
                    feature: feature_index[f],
                });
            }
        }
        Self {
            rated_items: items.into_keys().collect(),
            features,
            edges,
        }
    }

    /// Input/output layer size `m`.
    pub fn item_count(&self) -> usize {
        self.rated_items.len()
    }

    /// Hidden layer size `|S|`.
    pub fn feature_count(&self) -> usize {
        self.features.len()
    }

    pub fn rated_items(&self) -> &[ItemId] {
        &self.rated_items
    }

    pub fn features(&self) -> &[FeatureId] {
        &self.features
    }

    pub fn encoder_edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Decoder edges as (feature, item) pairs, index-aligned with the encoder.
    pub fn decoder_edges(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.edges.iter().map(|e| (e.feature, e.item))
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Number of rated items connected to each hidden unit.
    pub fn in_degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.features.len()];
        for e in &self.edges {
            deg[e.feature as usize] += 1;
        }
        deg
    }
}

/// Builds a user's topology from the items they rated. Items unknown to the
/// feature map are ignored; at least two mapped items are required.
pub fn build_topology<I>(user: UserId, rated: I, feature_map: &ItemFeatureMap) -> Result<SparseTopology>
where
    I: IntoIterator<Item = ItemId>,
{
    let mapped: Vec<(ItemId, &[FeatureId])> = rated
        .into_iter()
        .filter_map(|item| feature_map.features(item).map(|fs| (item, fs)))
        .collect();
    let topology = SparseTopology::from_item_features(mapped);
    if topology.item_count() < 2 {
        return Err(Error::UserNotTrainable {
            user,
            mapped: topology.item_count(),
        });
    }
    Ok(topology)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub init_weight: f64,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub rmse_target: f64,
    pub min_improvement: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            init_weight: 0.001,
            learning_rate: 0.1,
            max_epochs: 5000,
            rmse_target: 1e-3,
            min_improvement: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.init_weight > 0.0 && self.init_weight <= 0.01) {
            return Err(Error::Contract(format!(
                "init_weight {} outside (0, 0.01]",
                self.init_weight
            )));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Contract(format!(
                "learning_rate {} must be positive",
                self.learning_rate
            )));
        }
        if self.max_epochs == 0 {
            return Err(Error::Contract("max_epochs must be at least 1".into()));
        }
        if !(self.rmse_target >= 0.0 && self.min_improvement >= 0.0) {
            return Err(Error::Contract(
                "rmse_target and min_improvement must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    TargetReached,
    Converged,
    MaxEpochs,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainTrace {
    /// Gradient steps applied.
    pub epochs_run: usize,
    /// RMSE before each step, plus the RMSE of the returned weights last.
    pub rmse_per_epoch: Vec<f64>,
    pub stop_reason: StopReason,
}

impl TrainTrace {
    pub fn initial_rmse(&self) -> f64 {
        self.rmse_per_epoch[0]
    }

    pub fn final_rmse(&self) -> f64 {
        *self.rmse_per_epoch.last().expect("trace is never empty")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Activations {
    pub hidden: Vec<f64>,
    pub output: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    /// d loss / d encoder weight, per edge.
    pub encoder: Vec<f64>,
    /// d loss / d decoder weight, per edge.
    pub decoder: Vec<f64>,
    pub loss: f64,
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserAutoencoder {
    pub user: UserId,
    topology: SparseTopology,
    encoder: Vec<f64>,
    decoder: Vec<f64>,
}

impl UserAutoencoder {
    /// Network with every weight set to `init`.
    pub fn constant(user: UserId, topology: SparseTopology, init: f64) -> Self {
        let n = topology.edge_count();
        Self {
            user,
            topology,
            encoder: vec![init; n],
            decoder: vec![init; n],
        }
    }

    pub fn with_weights(user: UserId, topology: SparseTopology, encoder: Vec<f64>, decoder: Vec<f64>) -> Result<Self> {
        let n = topology.edge_count();
        if encoder.len() != n || decoder.len() != n {
            return Err(Error::Contract(format!(
                "expected {n} weights per side, got {} encoder / {} decoder",
                encoder.len(),
                decoder.len()
            )));
        }
        if encoder.iter().chain(&decoder).any(|w| !w.is_finite()) {
            return Err(Error::Contract("non-finite weight".into()));
        }
        Ok(Self {
            user,
            topology,
            encoder,
            decoder,
        })
    }

    pub fn topology(&self) -> &SparseTopology {
        &self.topology
    }

    pub fn encoder_weights(&self) -> &[f64] {
        &self.encoder
    }

    pub fn decoder_weights(&self) -> &[f64] {
        &self.decoder
    }

    pub fn encoder_weights_mut(&mut self) -> &mut [f64] {
        &mut self.encoder
    }

    pub fn decoder_weights_mut(&mut self) -> &mut [f64] {
        &mut self.decoder
    }

    fn check_len(&self, v: &[f64], what: &str) -> Result<()> {
        if v.len() != self.topology.item_count() {
            return Err(Error::Contract(format!(
                "{what} has length {}, network has {} items",
                v.len(),
                self.topology.item_count()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, input: &[f64]) -> Result<Activations> {
        self.check_len(input, "input")?;
        Ok(self.forward_unchecked(input))
    }

    fn forward_unchecked(&self, input: &[f64]) -> Activations {
        let edges = &self.topology.edges;
        let mut hidden = vec![0.0; self.topology.feature_count()];
        for (e, &w) in edges.iter().zip(&self.encoder) {
            hidden[e.feature as usize] += w * input[e.item as usize];
        }
        hidden.iter_mut().for_each(|z| *z = sigmoid(*z));
        let mut output = vec![0.0; self.topology.item_count()];
        for (e, &v) in edges.iter().zip(&self.decoder) {
            output[e.item as usize] += v * hidden[e.feature as usize];
        }
        output.iter_mut().for_each(|z| *z = sigmoid(*z));
        Activations { hidden, output }
    }

    /// Reconstruction loss `½ Σ (output − target)²` with the target fed as input.
    pub fn loss(&self, target: &[f64]) -> Result<f64> {
        let act = self.forward(target)?;
        Ok(half_sse(&act.output, target))
    }

    /// Exact backpropagated gradients of the reconstruction loss, with the
    /// target doubling as the input.
    pub fn compute_gradients(&self, target: &[f64]) -> Result<Gradients> {
        self.check_len(target, "target")?;
        Ok(self.gradients_unchecked(target))
    }

    fn gradients_unchecked(&self, target: &[f64]) -> Gradients {
        let Activations { hidden, output } = self.forward_unchecked(target);
        let edges = &self.topology.edges;
        let out_delta: Vec<f64> = output
            .iter()
            .zip(target)
            .map(|(&o, &t)| (o - t) * o * (1.0 - o))
            .collect();
        let mut hidden_delta = vec![0.0; hidden.len()];
        let mut decoder = Vec::with_capacity(edges.len());
        for (e, &v) in edges.iter().zip(&self.decoder) {
            let d = out_delta[e.item as usize];
            decoder.push(d * hidden[e.feature as usize]);
            hidden_delta[e.feature as usize] += v * d;
        }
        for (d, &h) in hidden_delta.iter_mut().zip(&hidden) {
            *d *= h * (1.0 - h);
        }
        let encoder = edges
            .iter()
            .map(|e| hidden_delta[e.feature as usize] * target[e.item as usize])
            .collect();
        Gradients {
            encoder,
            decoder,
            loss: half_sse(&output, target),
        }
    }

    /// Writes topology and weights as tab-separated edge records.
    pub fn write_dump(&self, feature_map: &ItemFeatureMap, out: &mut dyn Write) -> io::Result<()> {
        writeln!(
            out,
            "# semauto-net v1 user={} items={} features={} edges={}",
            self.user,
            self.topology.item_count(),
            self.topology.feature_count(),
            self.topology.edge_count()
        )?;
        for ((e, w), v) in self.topology.edges.iter().zip(&self.encoder).zip(&self.decoder) {
            let item = self.topology.rated_items[e.item as usize];
            let feature = feature_map.iri(self.topology.features[e.feature as usize]);
            writeln!(out, "{item}\t{feature}\t{w:e}\t{v:e}")?;
        }
        Ok(())
    }
}

fn half_sse(output: &[f64], target: &[f64]) -> f64 {
    0.5 * output.iter().zip(target).map(|(o, t)| (o - t) * (o - t)).sum::<f64>()
}

fn rmse_from_loss(loss: f64, m: usize) -> f64 {
    (2.0 * loss / m as f64).sqrt()
}

/// Full-batch gradient descent on the single (target → target) pair.
///
/// Stops when RMSE reaches `rmse_target`, when one epoch improves RMSE by
/// less than `min_improvement`, or after `max_epochs` steps. Deterministic.
pub fn train(
    user: UserId,
    topology: SparseTopology,
    target: &[f64],
    config: &TrainConfig,
) -> Result<(UserAutoencoder, TrainTrace)> {
    config.validate()?;
    let mut net = UserAutoencoder::constant(user, topology, config.init_weight);
    net.check_len(target, "target")?;
    let m = target.len();
    let lr = config.learning_rate;
    let mut rmse_per_epoch = Vec::new();
    let mut stop_reason = StopReason::MaxEpochs;
    let mut epochs_run = 0;
    loop {
        let grads = net.gradients_unchecked(target);
        if !grads.loss.is_finite() {
            return Err(Error::Diverged { epoch: epochs_run });
        }
        let rmse = rmse_from_loss(grads.loss, m);
        let previous = rmse_per_epoch.last().copied();
        rmse_per_epoch.push(rmse);
        if rmse <= config.rmse_target {
            stop_reason = StopReason::TargetReached;
            break;
        }
        if previous.is_some_and(|p| p - rmse < config.min_improvement) {
            stop_reason = StopReason::Converged;
            break;
        }
        if epochs_run == config.max_epochs {
            break;
        }
        for (w, g) in net.encoder.iter_mut().zip(&grads.encoder) {
            *w -= lr * g;
        }
        for (v, g) in net.decoder.iter_mut().zip(&grads.decoder) {
            *v -= lr * g;
        }
        epochs_run += 1;
    }
    if net.encoder.iter().chain(&net.decoder).any(|w| !w.is_finite()) {
        return Err(Error::Diverged { epoch: epochs_run });
    }
    Ok((
        net,
        TrainTrace {
            epochs_run,
            rmse_per_epoch,
            stop_reason,
        },
    ))
}

/// Which trained weights contribute to a feature's raw score.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Aggregation {
    /// Sum of the weights on edges entering the hidden unit.
    #[default]
    Encoder,
    /// Encoder in-edges plus decoder out-edges.
    EncoderAndDecoder,
}

/// Raw per-feature score: the sum of encoder weights entering the feature's
/// hidden unit (one term per rated item carrying the feature).
pub fn aggregate_feature_weights(net: &UserAutoencoder, mode: Aggregation) -> BTreeMap<FeatureId, f64> {
    let topo = &net.topology;
    let mut sums = vec![0.0; topo.feature_count()];
    for (i, e) in topo.edges.iter().enumerate() {
        sums[e.feature as usize] += match mode {
            Aggregation::Encoder => net.encoder[i],
            Aggregation::EncoderAndDecoder => net.encoder[i] + net.decoder[i],
        };
    }
    topo.features.iter().copied().zip(sums).collect()
}
