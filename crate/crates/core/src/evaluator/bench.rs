use std::hint::black_box;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{HtiError, Result};
use crate::model::interaction::pairwise_distances;
use crate::model::{HtiModel, ModelConfig, Variant};

/// FLOPs of the `m × n` distance matrix: per entry `k` subtractions, `k`
/// multiplications and `k − 1` additions; the square root is not counted.
pub fn distance_flops(m: usize, n: usize, k: usize) -> u64 {
    (m * n * (3 * k - 1)) as u64
}

/// Leading-order FLOPs of the whole interaction module: the distance
/// matrix plus the `k × k` products (two flops per multiply-add) of the
/// per-review attention projections, the two guide projections and the two
/// gates.
pub fn interaction_flops(m: usize, n: usize, k: usize) -> u64 {
    let kk = (2 * k * k) as u64;
    distance_flops(m, n, k) + kk * (m + n) as u64 + kk * 2 + kk * 4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub m: usize,
    pub n: usize,
    pub k: usize,
    /// Seconds per forward call (minimum over repeats).
    pub seconds: f64,
    pub flops: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchOptions {
    pub sizes: Vec<usize>,
    pub ks: Vec<usize>,
    pub repeats: usize,
    /// Minimum wall time of one timed batch of calls.
    pub min_batch_seconds: f64,
    pub seed: u64,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions {
            sizes: vec![5, 10, 20],
            ks: vec![32],
            repeats: 60,
            min_batch_seconds: 0.005,
            seed: 0,
        }
    }
}

/// Least-squares fit `seconds ≈ Σ c_j · feature_j` and its worst relative
/// deviation from the measurements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub features: Vec<String>,
    pub coefficients: Vec<f64>,
    pub max_relative_deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    /// Whole interaction module.
    pub rows: Vec<BenchRow>,
    /// Distance matrix stage alone.
    pub distance_rows: Vec<BenchRow>,
    /// Distance stage against `1, m·n`.
    pub distance_fit: ScalingFit,
    /// Whole module against `1, m·n·k, k²·(m + n)`.
    pub module_fit: ScalingFit,
}

/// Number of calls that take at least `min_batch` seconds.
fn calibrate(min_batch: f64, f: &mut dyn FnMut()) -> usize {
    let mut iters = 1usize;
    loop {
        let t = Instant::now();
        for _ in 0..iters {
            f();
        }
        if t.elapsed().as_secs_f64() >= min_batch || iters >= 1 << 24 {
            return iters;
        }
        iters *= 2;
    }
}

/// Minimum per-call time of each job over `repeats` rounds. Rounds visit
/// every job in turn so slow drifts of the machine affect all sizes alike.
fn time_interleaved(repeats: usize, min_batch: f64, jobs: &mut [Box<dyn FnMut() + '_>]) -> Vec<f64> {
    let iters: Vec<usize> = jobs.iter_mut().map(|f| calibrate(min_batch, f.as_mut())).collect();
    let mut best = vec![f64::INFINITY; jobs.len()];
    for _ in 0..repeats {
        for (j, f) in jobs.iter_mut().enumerate() {
            let t = Instant::now();
            for _ in 0..iters[j] {
                f();
            }
            best[j] = best[j].min(t.elapsed().as_secs_f64() / iters[j] as f64);
        }
    }
    best
}

/// Solves the normal equations of a small least-squares problem.
fn least_squares(x: &[Vec<f64>], y: &[f64]) -> Option<Vec<f64>> {
    let p = x[0].len();
    let mut a = vec![vec![0.0; p + 1]; p];
    for (row, &yi) in x.iter().zip(y) {
        for i in 0..p {
            for j in 0..p {
                a[i][j] += row[i] * row[j];
            }
            a[i][p] += row[i] * yi;
        }
    }
    for c in 0..p {
        let piv = (c..p).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))?;
        if a[piv][c].abs() < 1e-300 {
            return None;
        }
        a.swap(c, piv);
        let pivot = a[c].clone();
        for (r, row) in a.iter_mut().enumerate() {
            if r != c {
                let f = row[c] / pivot[c];
                for (x, &y) in row[c..].iter_mut().zip(&pivot[c..]) {
                    *x -= f * y;
                }
            }
        }
    }
    Some((0..p).map(|i| a[i][p] / a[i][i]).collect())
}

/// Fits `rows` against the given feature map.
pub fn fit_scaling(rows: &[BenchRow], names: &[&str], features: impl Fn(&BenchRow) -> Vec<f64>) -> Result<ScalingFit> {
    let x: Vec<Vec<f64>> = rows.iter().map(&features).collect();
    // scale columns so the normal equations stay well conditioned
    let p = names.len();
    let scale: Vec<f64> = (0..p)
        .map(|j| x.iter().map(|r| r[j].abs()).fold(0.0, f64::max).max(1e-300))
        .collect();
    let xs: Vec<Vec<f64>> = x
        .iter()
        .map(|r| r.iter().zip(&scale).map(|(v, s)| v / s).collect())
        .collect();
    let y: Vec<f64> = rows.iter().map(|r| r.seconds).collect();
    let c = least_squares(&xs, &y).ok_or_else(|| HtiError::numerical("singular benchmark fit"))?;
    let coefficients: Vec<f64> = c.iter().zip(&scale).map(|(c, s)| c / s).collect();
    let max_relative_deviation = x
        .iter()
        .zip(&y)
        .map(|(r, &t)| {
            let fit: f64 = r.iter().zip(&coefficients).map(|(a, b)| a * b).sum();
            (fit - t).abs() / t
        })
        .fold(0.0, f64::max);
    Ok(ScalingFit {
        features: names.iter().map(|s| s.to_string()).collect(),
        coefficients,
        max_relative_deviation,
    })
}

/// Times the interaction module forward pass over every `m × n` pair of
/// `sizes` for each `k`. Run it on a single thread.
pub fn benchmark_complexity(opts: &BenchOptions) -> Result<BenchReport> {
    if opts.sizes.is_empty() || opts.ks.is_empty() || opts.repeats == 0 {
        return Err(HtiError::config("benchmark needs sizes, ks and at least one repeat"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut inputs = Vec::new();
    for &k in &opts.ks {
        let config = ModelConfig {
            n_users: 1,
            n_items: 1,
            vocab_size: 1,
            embed_dim: 1,
            conv1_maps: 1,
            conv1_kernels: vec![1],
            conv2_kernel: 1,
            latent_dim: k,
            dropout: 0.0,
            variant: Variant::Full,
        };
        let model = HtiModel::<f64>::new(config, &mut rng)?;
        for &m in &opts.sizes {
            for &n in &opts.sizes {
                let user: Vec<f64> = (0..m * k).map(|_| normal.sample(&mut rng)).collect();
                let item: Vec<f64> = (0..n * k).map(|_| normal.sample(&mut rng)).collect();
                inputs.push((model.clone(), m, n, k, user, item, vec![true; m], vec![true; n]));
            }
        }
    }
    let mut module_jobs: Vec<Box<dyn FnMut() + '_>> = Vec::new();
    let mut distance_jobs: Vec<Box<dyn FnMut() + '_>> = Vec::new();
    for (model, _, _, k, user, item, um, im) in &inputs {
        module_jobs.push(Box::new(move || {
            black_box(model.interact(black_box(user), um, black_box(item), im));
        }));
        distance_jobs.push(Box::new(move || {
            black_box(pairwise_distances(black_box(user), um, black_box(item), im, *k));
        }));
    }
    let module_times = time_interleaved(opts.repeats, opts.min_batch_seconds, &mut module_jobs);
    let distance_times = time_interleaved(opts.repeats, opts.min_batch_seconds, &mut distance_jobs);
    let row = |i: usize, seconds: f64, flops: fn(usize, usize, usize) -> u64| {
        let (_, m, n, k, ..) = inputs[i];
        BenchRow {
            m,
            n,
            k,
            seconds,
            flops: flops(m, n, k),
        }
    };
    let rows: Vec<BenchRow> = module_times
        .iter()
        .enumerate()
        .map(|(i, &t)| row(i, t, interaction_flops))
        .collect();
    let distance_rows: Vec<BenchRow> = distance_times
        .iter()
        .enumerate()
        .map(|(i, &t)| row(i, t, distance_flops))
        .collect();
    let distance_fit = fit_scaling(&distance_rows, &["1", "m*n*k"], |r| vec![1.0, (r.m * r.n * r.k) as f64])?;
    let module_fit = fit_scaling(&rows, &["1", "m*n*k", "k^2*(m+n)"], |r| {
        vec![1.0, (r.m * r.n * r.k) as f64, (r.k * r.k * (r.m + r.n)) as f64]
    })?;
    Ok(BenchReport {
        rows,
        distance_rows,
        distance_fit,
        module_fit,
    })
}

/// `m,n,k,seconds,flops` CSV.
pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from("m,n,k,seconds,flops\n");
    for r in rows {
        out.push_str(&format!("{},{},{},{:e},{}\n", r.m, r.n, r.k, r.seconds, r.flops));
    }
    out
}
