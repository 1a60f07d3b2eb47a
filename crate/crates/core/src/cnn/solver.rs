//! Mini-batch SGD with momentum and the two validation strategies.

use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::network::{Gradients, LayerParams, NetworkModel, Sample};
use crate::error::{Error, Result};

/// When held-out accuracy is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// One full shuffled pass over the training set between validations,
    /// stopping after `epochs` passes or `max_iterations`, whichever is first.
    PerEpochFullPass,
    /// Validate every `validation_interval` iterations until `max_iterations`.
    FixedChunk,
}

/// Learning-rate policy over the planned iteration budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum LrSchedule {
    Fixed,
    /// Multiply by `gamma` after each of `stages` equal parts of the budget.
    Step { gamma: f64, stages: u32 },
}

impl Default for LrSchedule {
    fn default() -> Self {
        LrSchedule::Step { gamma: 0.1, stages: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub max_iterations: u64,
    pub validation_interval: u64,
    pub strategy: Strategy,
    pub seed: u64,
    pub lr_schedule: LrSchedule,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            learning_rate: 0.01,
            momentum: 0.9,
            batch_size: 256,
            epochs: 100,
            max_iterations: 174_000,
            validation_interval: 1000,
            strategy: Strategy::PerEpochFullPass,
            seed: 0,
            lr_schedule: LrSchedule::default(),
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "learning_rate must be finite and non-negative, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidArgument(format!("momentum must be in [0,1), got {}", self.momentum)));
        }
        if self.batch_size == 0 || self.max_iterations == 0 || self.epochs == 0 {
            return Err(Error::InvalidArgument(
                "batch_size, epochs and max_iterations must be at least 1".into(),
            ));
        }
        if self.strategy == Strategy::FixedChunk && self.validation_interval == 0 {
            return Err(Error::InvalidArgument("validation_interval must be at least 1".into()));
        }
        if let LrSchedule::Step { gamma, stages } = self.lr_schedule {
            if stages == 0 || !(gamma > 0.0 && gamma.is_finite()) {
                return Err(Error::InvalidArgument("step schedule needs stages ≥ 1 and gamma > 0".into()));
            }
        }
        Ok(())
    }

    /// Iterations actually run for a training set of `total` samples.
    pub fn planned_iterations(&self, total: usize) -> u64 {
        match self.strategy {
            Strategy::FixedChunk => self.max_iterations,
            Strategy::PerEpochFullPass => compute_iterations(total, self.batch_size, self.epochs).min(self.max_iterations),
        }
    }

    fn learning_rate_at(&self, iteration: u64, planned: u64) -> f64 {
        match self.lr_schedule {
            LrSchedule::Fixed => self.learning_rate,
            LrSchedule::Step { gamma, stages } => {
                let step = planned.div_ceil(stages as u64).max(1);
                self.learning_rate * gamma.powi((iteration / step) as i32)
            }
        }
    }
}

/// `epochs · ceil(total_images / batch_size)`.
pub fn compute_iterations(total_images: usize, batch_size: usize, epochs: usize) -> u64 {
    assert!(batch_size >= 1, "batch_size must be at least 1");
    (epochs as u64) * (total_images.div_ceil(batch_size) as u64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationPoint {
    pub iteration: u64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub points: Vec<ValidationPoint>,
    pub best_accuracy: f64,
    pub best_iteration: u64,
    pub iterations_run: u64,
    pub wall_time: Duration,
}

impl TrainReport {
    /// Equality ignoring wall-clock time.
    pub fn same_trajectory(&self, other: &TrainReport) -> bool {
        self.points.len() == other.points.len()
            && self
                .points
                .iter()
                .zip(&other.points)
                .all(|(a, b)| a.iteration == b.iteration && a.accuracy.to_bits() == b.accuracy.to_bits())
            && self.best_accuracy.to_bits() == other.best_accuracy.to_bits()
            && self.best_iteration == other.best_iteration
            && self.iterations_run == other.iterations_run
    }

    /// CSV with header `iteration,accuracy`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iteration,accuracy\n");
        for p in &self.points {
            out.push_str(&format!("{},{}\n", p.iteration, p.accuracy));
        }
        out
    }
}

/// Everything needed to continue an interrupted run bit-identically.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub iteration: u64,
    pub params: Vec<LayerParams>,
    pub velocity: Gradients,
    pub points: Vec<ValidationPoint>,
    pub best_accuracy: f64,
    pub best_iteration: u64,
    pub best_params: Vec<LayerParams>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters with the best held-out accuracy.
    pub best: NetworkModel,
    pub report: TrainReport,
    /// State after the last executed iteration.
    pub state: TrainState,
}

/// Trains from `model`'s current parameters to the end of the budget.
pub fn train(model: &NetworkModel, train_set: &[Sample], held_out: &[Sample], cfg: &SolverConfig) -> Result<TrainOutcome> {
    train_resumable(model, None, train_set, held_out, cfg, None)
}

/// Trains optionally starting from a saved state and optionally stopping
/// early at `halt_at` iterations (the schedule still follows the full
/// budget, so a halted run can be resumed without changing the result).
pub fn train_resumable(
    model: &NetworkModel,
    resume: Option<TrainState>,
    train_set: &[Sample],
    held_out: &[Sample],
    cfg: &SolverConfig,
    halt_at: Option<u64>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }
    if held_out.is_empty() {
        return Err(Error::InvalidArgument("held-out set is empty".into()));
    }
    if let Some(s) = train_set.iter().chain(held_out).find(|s| s.label > 1) {
        return Err(Error::InvalidArgument(format!("label {} is not 0 or 1", s.label)));
    }
    let start = Instant::now();
    let planned = cfg.planned_iterations(train_set.len());
    let end = halt_at.map_or(planned, |h| h.min(planned));
    let per_pass = train_set.len().div_ceil(cfg.batch_size) as u64;

    let mut net = model.clone();
    let mut state = match resume {
        Some(s) => {
            net.set_params(s.params.clone())?;
            s
        }
        None => {
            let acc = net.accuracy(held_out)?;
            TrainState {
                iteration: 0,
                params: net.params().to_vec(),
                velocity: net.zero_gradients(),
                points: vec![ValidationPoint { iteration: 0, accuracy: acc }],
                best_accuracy: acc,
                best_iteration: 0,
                best_params: net.params().to_vec(),
            }
        }
    };

    let mut order: Vec<usize> = Vec::new();
    let mut order_pass = u64::MAX;
    while state.iteration < end {
        let it = state.iteration;
        let pass = it / per_pass;
        if pass != order_pass {
            order = pass_permutation(train_set.len(), cfg.seed, pass);
            order_pass = pass;
        }
        let b = (it % per_pass) as usize * cfg.batch_size;
        let batch: Vec<&Sample> = order[b..(b + cfg.batch_size).min(order.len())]
            .iter()
            .map(|&i| &train_set[i])
            .collect();
        let (loss, grads) = net.batch_gradients(&batch, 1.0)?;
        if !loss.is_finite() {
            return Err(Error::Divergence { iteration: it, loss });
        }
        let lr = cfg.learning_rate_at(it, planned);
        for ((p, v), g) in net.params_mut().iter_mut().zip(&mut state.velocity).zip(&grads) {
            for ((w, vw), gw) in p.weights.iter_mut().zip(&mut v.weights).zip(&g.weights) {
                *vw = cfg.momentum * *vw + lr * gw;
                *w -= *vw;
            }
            for ((w, vw), gw) in p.bias.iter_mut().zip(&mut v.bias).zip(&g.bias) {
                *vw = cfg.momentum * *vw + lr * gw;
                *w -= *vw;
            }
        }
        if net.params().iter().flat_map(|p| p.weights.iter().chain(&p.bias)).any(|w| !w.is_finite()) {
            return Err(Error::Divergence { iteration: it, loss });
        }
        state.iteration += 1;

        let done = state.iteration;
        let validate = match cfg.strategy {
            Strategy::PerEpochFullPass => done % per_pass == 0,
            Strategy::FixedChunk => done % cfg.validation_interval == 0,
        } || done == planned;
        if validate {
            let acc = net.accuracy(held_out)?;
            state.points.push(ValidationPoint { iteration: done, accuracy: acc });
            if acc > state.best_accuracy {
                state.best_accuracy = acc;
                state.best_iteration = done;
                state.best_params = net.params().to_vec();
            }
        }
    }
    state.params = net.params().to_vec();

    let mut best = model.clone();
    best.set_params(state.best_params.clone())?;
    let report = TrainReport {
        points: state.points.clone(),
        best_accuracy: state.best_accuracy,
        best_iteration: state.best_iteration,
        iterations_run: state.iteration,
        wall_time: start.elapsed(),
    };
    Ok(TrainOutcome { best, report, state })
}

fn pass_permutation(n: usize, seed: u64, pass: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ pass.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cnn::arch::LayerSpec;
    use crate::cnn::network::Init;
    use crate::cnn::volume::{Shape, Volume};

    fn tiny_net(seed: u64) -> NetworkModel {
        let layers = vec![
            LayerSpec::conv(3, 1, 4),
            LayerSpec::Relu,
            LayerSpec::pool(2, 2),
            LayerSpec::InnerProduct { outputs: 2 },
            LayerSpec::Softmax,
        ];
        NetworkModel::initialized(Shape::new(1, 6, 6), layers, Init::Gaussian { std: 0.1 }, seed).unwrap()
    }

    fn blob_set(n: usize, seed: u64) -> Vec<Sample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let label = i % 2;
                let data = (0..36)
                    .map(|k| {
                        let (y, x) = (k / 6, k % 6);
                        let centre = (2..4).contains(&y) && (2..4).contains(&x);
                        let base = rand::Rng::random_range(&mut rng, 0.0..0.2);
                        if label == 1 && centre {
                            base + 0.8
                        } else {
                            base
                        }
                    })
                    .collect();
                Sample::new(Volume::from_vec(1, 6, 6, data).unwrap(), label)
            })
            .collect()
    }

    #[test]
    fn iteration_formula() {
        assert_eq!(compute_iterations(512, 256, 3), 6);
        assert_eq!(compute_iterations(444_731, 256, 100), 173_800);
        assert_eq!(compute_iterations(1, 256, 1), 1);
    }

    #[test]
    fn step_schedule_decays_by_thirds() {
        let cfg = SolverConfig::default();
        assert_eq!(cfg.learning_rate_at(0, 300), 0.01);
        assert!((cfg.learning_rate_at(100, 300) - 0.001).abs() < 1e-15);
        assert!((cfg.learning_rate_at(299, 300) - 0.0001).abs() < 1e-15);
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let net = tiny_net(1);
        let data = blob_set(16, 2);
        let cfg = SolverConfig { learning_rate: 0.0, batch_size: 4, epochs: 2, ..SolverConfig::default() };
        let out = train(&net, &data, &data, &cfg).unwrap();
        assert_eq!(out.state.params, net.params());
        let first = out.report.points[0].accuracy;
        assert!(out.report.points.iter().all(|p| p.accuracy == first));
    }

    #[test]
    fn separable_set_is_learned_and_deterministic() {
        let net = tiny_net(3);
        let train_set = blob_set(64, 4);
        let held = blob_set(32, 5);
        let cfg = SolverConfig { learning_rate: 0.05, batch_size: 8, epochs: 15, ..SolverConfig::default() };
        let a = train(&net, &train_set, &held, &cfg).unwrap();
        let b = train(&net, &train_set, &held, &cfg).unwrap();
        assert!(a.report.best_accuracy >= 0.95, "{:?}", a.report.points);
        assert!(a.report.same_trajectory(&b.report));
        assert_eq!(a.report.iterations_run, 15 * 8);
        assert!(a.report.points.windows(2).all(|w| w[0].iteration <= w[1].iteration));
    }

    #[test]
    fn resume_continues_identically() {
        let net = tiny_net(6);
        let data = blob_set(20, 7);
        let cfg = SolverConfig { learning_rate: 0.02, batch_size: 6, epochs: 4, ..SolverConfig::default() };
        let full = train(&net, &data, &data, &cfg).unwrap();
        let half = train_resumable(&net, None, &data, &data, &cfg, Some(5)).unwrap();
        assert_eq!(half.state.iteration, 5);
        let rest = train_resumable(&net, Some(half.state), &data, &data, &cfg, None).unwrap();
        assert_eq!(rest.state, full.state);
        assert!(rest.report.same_trajectory(&full.report));
    }

    #[test]
    fn fixed_chunk_validates_on_interval() {
        let net = tiny_net(8);
        let data = blob_set(10, 9);
        let cfg = SolverConfig {
            strategy: Strategy::FixedChunk,
            max_iterations: 25,
            validation_interval: 10,
            batch_size: 4,
            ..SolverConfig::default()
        };
        let out = train(&net, &data, &data, &cfg).unwrap();
        let its: Vec<u64> = out.report.points.iter().map(|p| p.iteration).collect();
        assert_eq!(its, vec![0, 10, 20, 25]);
    }

    #[test]
    fn divergence_is_reported() {
        let net = tiny_net(10);
        let data = blob_set(8, 11);
        let cfg = SolverConfig { learning_rate: 1e300, momentum: 0.9, batch_size: 8, ..SolverConfig::default() };
        match train(&net, &data, &blob_set(4, 12), &cfg) {
            Err(Error::Divergence { .. }) => {}
            other => panic!("expected divergence, got {other:?}"),
        }
    }
}
