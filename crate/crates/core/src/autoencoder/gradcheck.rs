//! Central finite-difference check of the analytic gradients.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{SparseTopology, UserAutoencoder};
use crate::ids::{FeatureId, ItemId, UserId};

pub const DEFAULT_STEP: f64 = 1e-5;
/// Denominator floor for the relative error, so edges whose true gradient is
/// numerically zero are judged by absolute error instead.
pub const DEFAULT_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub networks: usize,
    pub edges_checked: usize,
    pub max_relative_error: f64,
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Largest relative error over every encoder and decoder weight of `net`.
pub fn check_network(net: &UserAutoencoder, target: &[f64], step: f64, floor: f64) -> f64 {
    let grads = net.compute_gradients(target).expect("target length matches network");
    let mut probe = net.clone();
    let mut worst: f64 = 0.0;
    for side in [Side::Encoder, Side::Decoder] {
        let analytic = match side {
            Side::Encoder => &grads.encoder,
            Side::Decoder => &grads.decoder,
        };
        for (i, &a) in analytic.iter().enumerate() {
            let numeric = central_difference(&mut probe, side, i, target, step);
            worst = worst.max(relative_error(a, numeric, floor));
        }
    }
    worst
}

#[derive(Clone, Copy)]
enum Side {
    Encoder,
    Decoder,
}

fn central_difference(net: &mut UserAutoencoder, side: Side, i: usize, target: &[f64], h: f64) -> f64 {
    let weights = match side {
        Side::Encoder => net.encoder_weights_mut(),
        Side::Decoder => net.decoder_weights_mut(),
    };
    let original = weights[i];
    let eval = |net: &mut UserAutoencoder, value: f64| {
        match side {
            Side::Encoder => net.encoder_weights_mut()[i] = value,
            Side::Decoder => net.decoder_weights_mut()[i] = value,
        }
        net.loss(target).expect("target length matches network")
    };
    let plus = eval(net, original + h);
    let minus = eval(net, original - h);
    eval(net, original);
    (plus - minus) / (2.0 * h)
}

/// A random network with up to `max_items` rated items drawing from up to
/// `max_features` features, random weights in [-1, 1] and a random target in
/// [0.01, 0.99]. Every item gets at least one feature.
pub fn random_case(rng: &mut impl Rng, max_items: usize, max_features: usize) -> (UserAutoencoder, Vec<f64>) {
    let items = rng.gen_range(1..=max_items);
    let feature_pool = rng.gen_range(1..=max_features);
    let density: f64 = rng.gen_range(0.1..0.6);
    let lists: Vec<(ItemId, Vec<FeatureId>)> = (0..items)
        .map(|i| {
            let mut fs: Vec<FeatureId> = (0..feature_pool)
                .filter(|_| rng.gen_bool(density))
                .map(|f| FeatureId(f as u32))
                .collect();
            if fs.is_empty() {
                fs.push(FeatureId(rng.gen_range(0..feature_pool) as u32));
            }
            (ItemId(i as u32), fs)
        })
        .collect();
    let topology = SparseTopology::from_item_features(lists.iter().map(|(i, f)| (*i, f.as_slice())));
    let n = topology.edge_count();
    let encoder = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let decoder = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let target = (0..topology.item_count()).map(|_| rng.gen_range(0.01..0.99)).collect();
    let net = UserAutoencoder::with_weights(UserId(0), topology, encoder, decoder).expect("weights sized to topology");
    (net, target)
}

/// Checks `networks` random nets (≤10 items, ≤15 features).
pub fn run(networks: usize, seed: u64) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_relative_error: f64 = 0.0;
    let mut edges_checked = 0;
    for _ in 0..networks {
        let (net, target) = random_case(&mut rng, 10, 15);
        edges_checked += 2 * net.topology().edge_count();
        max_relative_error = max_relative_error.max(check_network(&net, &target, DEFAULT_STEP, DEFAULT_FLOOR));
    }
    GradCheckReport {
        networks,
        edges_checked,
        max_relative_error,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gradients_match_finite_differences() {
        let report = run(25, 11);
        assert!(report.max_relative_error < 1e-5, "{report:?}");
    }

    #[test]
    fn broken_gradient_is_detected() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (net, target) = random_case(&mut rng, 4, 4);
        // A 1% error in one analytic component must be flagged.
        let grads = net.compute_gradients(&target).unwrap();
        let numeric = central_difference(&mut net.clone(), Side::Encoder, 0, &target, DEFAULT_STEP);
        assert!(relative_error(grads.encoder[0] * 1.01, numeric, DEFAULT_FLOOR) > 1e-5);
    }
}
