use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{count_parameters, softmax, ModelError, Network};
use crate::skeletal::{PoseSequence, SkeletalFrame, SLOT_COUNT};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Environment {
    pub os: String,
    pub arch: String,
    pub logical_cpus: usize,
    /// Threads used by the forward pass.
    pub threads: usize,
    pub optimized_build: bool,
    pub toolkit_version: String,
}

impl Environment {
    pub fn current() -> Self {
        Self {
            os: std::env::consts::OS.to_string(),
            arch: std::env::consts::ARCH.to_string(),
            logical_cpus: std::thread::available_parallelism().map_or(1, |n| n.get()),
            threads: 1,
            optimized_build: !cfg!(debug_assertions),
            toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatencyCell {
    pub frames: usize,
    pub repetitions: usize,
    pub median_ms: f64,
    pub p95_ms: f64,
    pub mean_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatencyReport {
    pub parameter_count: u64,
    /// Sum over the instantiated tensors; equals `parameter_count`.
    pub enumerated_parameters: u64,
    pub environment: Environment,
    pub cells: Vec<LatencyCell>,
}

/// A fully present sequence of `frames` random points in the unit square.
pub fn synthetic_sequence(frames: usize, seed: u64) -> PoseSequence {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let frames = (0..frames.max(1))
        .map(|_| {
            let mut f = SkeletalFrame::empty();
            for slot in 0..SLOT_COUNT {
                f.set(slot, [rng.gen_range(0.05..0.95), rng.gen_range(0.05..0.95)]);
            }
            f
        })
        .collect();
    PoseSequence::new(frames, 25.0, None, "bench").expect("non-empty")
}

/// Nearest-rank percentile of sorted values.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

/// Wall-clock latency of forward + softmax, single-threaded, after one
/// warm-up pass per length.
pub fn benchmark_inference(network: &Network, lengths: &[usize], repetitions: usize) -> Result<LatencyReport, ModelError> {
    let reps = repetitions.max(1);
    let mut cells = Vec::with_capacity(lengths.len());
    for &len in lengths {
        let seq = synthetic_sequence(len, len as u64);
        std::hint::black_box(softmax(&network.forward(&seq)?));
        let mut times = Vec::with_capacity(reps);
        for _ in 0..reps {
            let t = Instant::now();
            let probs = softmax(&network.forward(&seq)?);
            times.push(t.elapsed().as_secs_f64() * 1e3);
            std::hint::black_box(probs);
        }
        let mean_ms = times.iter().sum::<f64>() / reps as f64;
        times.sort_by(f64::total_cmp);
        cells.push(LatencyCell {
            frames: len,
            repetitions: reps,
            median_ms: median(&times),
            p95_ms: percentile(&times, 0.95),
            mean_ms,
        });
    }
    Ok(LatencyReport {
        parameter_count: count_parameters(network.config()),
        enumerated_parameters: network.parameter_count() as u64,
        environment: Environment::current(),
        cells,
    })
}
