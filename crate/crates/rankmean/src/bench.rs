//! Wall-clock scaling of the N-matrix mean in the ambient dimension.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rankmean_core::fixed_rank::mean_n;
use rankmean_core::random;
use rankmean_core::{FixedRankMeanConfig, PsdFixedRank, SpdMatrix};

use crate::error::CliError;

/// Grassmann distance of every benchmark span from the common center span.
const INPUT_SPREAD: f64 = 0.2;
/// Log-eigenvalue spread of the center shape and of each input around it.
const CENTER_SHAPE_SPREAD: f64 = 1.0;
const SHAPE_SPREAD: f64 = 0.2;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub p: usize,
    pub n_list: Vec<usize>,
    pub count: usize,
    pub repeats: usize,
    pub seed: u64,
    pub mean: FixedRankMeanConfig,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchRow {
    pub n: usize,
    pub median_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    /// Least-squares slope of `ln t` against `ln n`; needs two distinct `n`.
    pub slope: Option<f64>,
}

/// `count` rank-`p` inputs in `ℝⁿ` clustered around a random center, both
/// in span and in shape.
pub fn bench_inputs(n: usize, p: usize, count: usize, seed: u64) -> Vec<PsdFixedRank> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let center = random::random_stiefel(n, p, &mut rng);
    let center_shape = random::random_spd(p, CENTER_SHAPE_SPREAD, &mut rng);
    let half = center_shape.sqrt().expect("random shape is SPD");
    (0..count)
        .map(|_| {
            let u = random::perturbed_subspace(&center, INPUT_SPREAD, &mut rng);
            let noise = random::random_spd(p, SHAPE_SPREAD, &mut rng);
            let shape = SpdMatrix::new(half.as_matrix() * noise.as_matrix() * half.as_matrix()).expect("congruence of SPD");
            PsdFixedRank::new(u, shape).expect("matching dimensions")
        })
        .collect()
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let k = values.len();
    if k % 2 == 1 {
        values[k / 2]
    } else {
        0.5 * (values[k / 2 - 1] + values[k / 2])
    }
}

pub fn loglog_slope(points: &[(f64, f64)]) -> Option<f64> {
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let k = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / k;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

pub fn run_bench(config: &BenchConfig) -> Result<BenchReport, CliError> {
    if config.p == 0 || config.count == 0 || config.repeats == 0 {
        return Err(CliError::usage("--p, --count and --repeats must be positive"));
    }
    if let Some(&n) = config.n_list.iter().find(|&&n| n < config.p) {
        return Err(CliError::Usage(format!("n = {n} is below p = {}", config.p)));
    }
    let inputs: Vec<Vec<PsdFixedRank>> = config
        .n_list
        .iter()
        .map(|&n| bench_inputs(n, config.p, config.count, config.seed))
        .collect();
    for set in &inputs {
        mean_n(set, &config.mean)?;
    }
    // Sizes are interleaved within each repeat so that a burst of machine
    // load spreads over all of them instead of skewing one.
    let mut times = vec![Vec::with_capacity(config.repeats); inputs.len()];
    for _ in 0..config.repeats {
        for (set, t) in inputs.iter().zip(&mut times) {
            let start = Instant::now();
            let m = mean_n(set, &config.mean)?;
            t.push(start.elapsed().as_secs_f64());
            std::hint::black_box(m);
        }
    }
    let rows: Vec<BenchRow> = config
        .n_list
        .iter()
        .zip(&mut times)
        .map(|(&n, t)| BenchRow {
            n,
            median_seconds: median(t),
        })
        .collect();
    let points: Vec<(f64, f64)> = rows.iter().map(|r| (r.n as f64, r.median_seconds)).collect();
    Ok(BenchReport {
        slope: loglog_slope(&points),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_power_law() {
        let pts: Vec<(f64, f64)> = [10.0f64, 20.0, 40.0].iter().map(|&n| (n, 3.0 * n.powf(1.5))).collect();
        assert!((loglog_slope(&pts).unwrap() - 1.5).abs() < 1e-12);
        assert_eq!(loglog_slope(&[(5.0, 1.0)]), None);
    }

    #[test]
    fn median_odd_and_even() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
