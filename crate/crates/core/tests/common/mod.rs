#![allow(dead_code)]

use eanas::arch::{encode_architecture, DetectorArchitecture, ARCH_ENCODING_LEN};
use eanas::data::{DeviceId, DeviceRegistry};
use eanas::energy::TwoStageEstimator;
use eanas::mlp::Network;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn registry() -> DeviceRegistry {
    DeviceRegistry::new(["cpu", "gpu", "npu"]).unwrap()
}

pub fn device(name: &str) -> DeviceId {
    registry().get(name).unwrap()
}

/// Linear (hence separable) scorer with random weights.
pub fn linear_net(seed: u64, lo: f64, hi: f64) -> Network {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = (0..ARCH_ENCODING_LEN).map(|_| rng.random_range(lo..hi)).collect();
    Network::linear(w, 0.0).unwrap()
}

/// Two-stage estimator with a linear prior of positive weights and a small
/// random residual.
pub fn linear_estimator(seed: u64) -> TwoStageEstimator {
    let base = linear_net(seed, 0.0, 0.1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xABCD);
    let w = (0..ARCH_ENCODING_LEN + 3).map(|_| rng.random_range(-0.01..0.01)).collect();
    let residual = Network::linear(w, 0.0).unwrap();
    TwoStageEstimator::from_parts(base, residual, registry(), true).unwrap()
}

/// Small nonlinear estimator for non-separable scenarios.
pub fn mlp_estimator(seed: u64) -> TwoStageEstimator {
    let base = Network::regressor(ARCH_ENCODING_LEN, &[8], seed).unwrap();
    let residual = Network::regressor(ARCH_ENCODING_LEN + 3, &[8], seed + 1).unwrap();
    TwoStageEstimator::from_parts(base, residual, registry(), true).unwrap()
}

pub fn dense_score(net: &Network, a: &DetectorArchitecture) -> f64 {
    net.forward(encode_architecture(a).as_slice()).unwrap()
}

pub fn dense_energy(est: &TwoStageEstimator, a: &DetectorArchitecture, d: &DeviceId) -> f64 {
    est.predict(&encode_architecture(a), d).unwrap()
}
