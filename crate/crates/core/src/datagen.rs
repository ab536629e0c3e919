//! Synthetic data generation: sparse signals, Bernoulli(0.5) pooling
//! matrices, adversarial bit-flips, and Gaussian measurement noise.
//!
//! # Random streams
//!
//! All generators draw from `ChaCha8Rng` (a named counter-based generator).
//! A 64-bit master seed plus a stream id fully determine every draw:
//! the generator is constructed as `ChaCha8Rng::seed_from_u64(seed)` with
//! `set_stream(stream)`. Fixed stream ids are used for the signal, the
//! pooling matrix, and the bit-flip placement; noise for Monte Carlo run
//! `k` uses stream `STREAM_NOISE_BASE + k`. Parallel runs are therefore
//! reproducible and order-independent. The generator name and seed are
//! recorded in experiment metadata.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::linmodel::{
    forward_model, BinaryPoolingMatrix, MMEVector, MeasurementVector, ProblemInstance,
    RademacherMatrix, SignalVector,
};
use crate::mat::RowMat;
use crate::{DrltError, Result};

/// Name of the RNG recorded in run metadata.
pub const RNG_NAME: &str = "chacha8";

/// Stream id for signal generation.
pub const STREAM_SIGNAL: u64 = 1;
/// Stream id for pooling-matrix generation.
pub const STREAM_MATRIX: u64 = 2;
/// Stream id for bit-flip placement.
pub const STREAM_FLIPS: u64 = 3;
/// Stream id for fold assignment and other selection internals.
pub const STREAM_SELECTION: u64 = 4;
/// Stream id for RANSAC subset draws.
pub const STREAM_RANSAC: u64 = 5;
/// Base stream id for per-run noise; run `k` uses `STREAM_NOISE_BASE + k`.
pub const STREAM_NOISE_BASE: u64 = 1_000;

/// Deterministic substream generator for `(seed, stream)`.
pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Parameters of a synthetic instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenParams {
    /// Number of samples (signal dimension).
    pub p: usize,
    /// Number of pools (measurements).
    pub n: usize,
    /// Sparsity fraction; `s = round(f_sp * p)`.
    pub f_sp: f64,
    /// MME fraction; `r = round(f_adv * n)`.
    pub f_adv: f64,
    /// Noise fraction of the mean absolute noiseless measurement.
    pub f_sigma: f64,
    /// Master seed for all streams.
    pub seed: u64,
}

impl GenParams {
    pub fn validate(&self) -> Result<()> {
        if self.p == 0 || self.n == 0 {
            return Err(DrltError::param("p and n must be >= 1"));
        }
        for (name, f) in [
            ("f_sp", self.f_sp),
            ("f_adv", self.f_adv),
            ("f_sigma", self.f_sigma),
        ] {
            if !(0.0..=1.0).contains(&f) {
                return Err(DrltError::param(format!("{name} must lie in [0,1], got {f}")));
            }
        }
        Ok(())
    }

    /// `s = round(f_sp * p)`.
    pub fn signal_sparsity(&self) -> usize {
        (self.f_sp * self.p as f64).round() as usize
    }

    /// `r = round(f_adv * n)`.
    pub fn mme_count(&self) -> usize {
        (self.f_adv * self.n as f64).round() as usize
    }
}

/// Generates a sparse positive signal: `s = round(f_sp * p)` nonzeros at
/// uniformly random distinct indices; `floor(0.4 s)` of the magnitudes are
/// i.i.d. U(50,100) and the remaining `s - floor(0.4 s)` are i.i.d.
/// U(500,1000).
pub fn gen_signal(p: usize, f_sp: f64, rng: &mut ChaCha8Rng) -> SignalVector {
    let s = (f_sp * p as f64).round() as usize;
    let mut values = vec![0.0; p];
    if s == 0 {
        return SignalVector::new(values);
    }
    let idx = rand::seq::index::sample(rng, p, s).into_vec();
    let n_small = (0.4 * s as f64).floor() as usize;
    let small = Uniform::new(50.0, 100.0);
    let large = Uniform::new(500.0, 1000.0);
    for (k, &j) in idx.iter().enumerate() {
        values[j] = if k < n_small {
            small.sample(rng)
        } else {
            large.sample(rng)
        };
    }
    SignalVector::new(values)
}

/// Generates a Bernoulli(0.5) binary pooling matrix and its Rademacher
/// transform `A = 2B - 1`.
pub fn gen_pooling(
    n: usize,
    p: usize,
    rng: &mut ChaCha8Rng,
) -> (BinaryPoolingMatrix, RademacherMatrix) {
    let mut b = RowMat::zeros(n, p);
    for i in 0..n {
        for j in 0..p {
            if rng.gen::<bool>() {
                b.set(i, j, 1.0);
            }
        }
    }
    let b = BinaryPoolingMatrix::new(b).expect("generated entries are binary");
    let a = crate::linmodel::binary_to_rademacher(&b);
    (b, a)
}

/// Injects `r` adversarial (effective) bit-flips: `r` distinct rows chosen
/// uniformly without replacement; each chosen row has exactly one entry
/// toggled (`â_ij = -a_ij`) at a column drawn uniformly from the support of
/// `β*` (independently per row, so distinct rows may hit the same column).
///
/// Returns the perturbed matrix and `δ* = (Â - A) β*`, which then has
/// exactly `r` nonzeros of magnitude `2 |β*_j|`.
pub fn inject_adversarial_bitflips(
    a: &RademacherMatrix,
    beta_star: &SignalVector,
    r: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(RademacherMatrix, MMEVector)> {
    let n = a.pools();
    if r > n {
        return Err(DrltError::param(format!("r = {r} exceeds n = {n}")));
    }
    if r >= 1 && beta_star.sparsity() == 0 {
        return Err(DrltError::Degenerate(
            "cannot place an effective bit-flip: beta_star has empty support".into(),
        ));
    }
    let mut entries = a.entries().clone();
    if r > 0 {
        let support = beta_star.support();
        let rows = rand::seq::index::sample(rng, n, r).into_vec();
        for &i in &rows {
            let j = support[rng.gen_range(0..support.len())];
            entries.set(i, j, -entries.get(i, j));
        }
    }
    let a_hat = RademacherMatrix::new(entries).expect("toggled entries stay in {-1,1}");
    let delta = crate::linmodel::mme_from_matrices(a, &a_hat, beta_star)?;
    Ok((a_hat, delta))
}

/// Noise level `σ = f_sigma * (Σ_i |a_i· β*|) / n`.
pub fn noise_sigma(a: &RademacherMatrix, beta_star: &SignalVector, f_sigma: f64) -> Result<f64> {
    if beta_star.len() != a.samples() {
        return Err(DrltError::dims("noise_sigma: beta length != p"));
    }
    let n = a.pools();
    let mut total = 0.0;
    for i in 0..n {
        let row = a.entries().row(i);
        let mut acc = 0.0;
        for (j, &b) in beta_star.values().iter().enumerate() {
            acc += row[j] * b;
        }
        total += acc.abs();
    }
    Ok(f_sigma * total / n as f64)
}

/// Draws `n` i.i.d. N(0, sigma^2) samples.
pub fn gen_noise(n: usize, sigma: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            sigma * z
        })
        .collect()
}

/// Generates a complete instance: `y = Â β* + η` with `η` i.i.d.
/// N(0, σ²), `δ*` recorded as ground truth. Deterministic given the seed;
/// the instance noise uses run stream 0.
pub fn gen_instance(params: &GenParams) -> Result<ProblemInstance> {
    params.validate()?;
    let beta_star = gen_signal(params.p, params.f_sp, &mut rng_for(params.seed, STREAM_SIGNAL));
    let (_, a) = gen_pooling(params.n, params.p, &mut rng_for(params.seed, STREAM_MATRIX));
    let (a_hat, delta_star) = inject_adversarial_bitflips(
        &a,
        &beta_star,
        params.mme_count(),
        &mut rng_for(params.seed, STREAM_FLIPS),
    )?;
    let sigma = noise_sigma(&a, &beta_star, params.f_sigma)?;
    let eta = gen_noise(params.n, sigma, &mut rng_for(params.seed, STREAM_NOISE_BASE));
    let y = forward_model(&a_hat, &beta_star, &vec![0.0; params.n], &eta)?;
    Ok(ProblemInstance {
        a,
        a_hat,
        beta_star,
        delta_star,
        y: MeasurementVector::new(y, sigma)?,
        sigma,
    })
}

/// Redraws the measurements of an existing instance with fresh noise for
/// Monte Carlo run `run` (stream `STREAM_NOISE_BASE + run`). The signal,
/// matrices, and `δ*` are untouched.
pub fn redraw_measurements(
    instance: &ProblemInstance,
    seed: u64,
    run: u64,
) -> Result<Vec<f64>> {
    let n = instance.pools();
    let eta = gen_noise(
        n,
        instance.sigma,
        &mut rng_for(seed, STREAM_NOISE_BASE + run),
    );
    forward_model(&instance.a_hat, &instance.beta_star, &vec![0.0; n], &eta)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn signal_counts_and_ranges_paper_setting() {
        let mut rng = rng_for(7, STREAM_SIGNAL);
        let s = gen_signal(500, 0.01, &mut rng);
        assert_eq!(s.sparsity(), 5);
        let mut small = 0;
        let mut large = 0;
        for &j in s.support() {
            let v = s.values()[j];
            if (50.0..100.0).contains(&v) {
                small += 1;
            } else if (500.0..1000.0).contains(&v) {
                large += 1;
            } else {
                panic!("value {v} outside both magnitude ranges");
            }
        }
        assert_eq!(small, 2); // floor(0.4 * 5)
        assert_eq!(large, 3);
    }

    #[test]
    fn signal_zero_fraction() {
        let mut rng = rng_for(7, STREAM_SIGNAL);
        let s = gen_signal(100, 0.0, &mut rng);
        assert_eq!(s.sparsity(), 0);
        assert!(s.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn signal_reproducible_bitwise() {
        let a = gen_signal(10, 0.2, &mut rng_for(42, STREAM_SIGNAL));
        let b = gen_signal(10, 0.2, &mut rng_for(42, STREAM_SIGNAL));
        assert_eq!(a, b);
        assert_eq!(a.sparsity(), 2);
        for &j in a.support() {
            let v = a.values()[j];
            assert!((50.0..100.0).contains(&v) || (500.0..1000.0).contains(&v));
        }
    }

    #[test]
    fn pooling_mean_and_norms() {
        let (_, a) = gen_pooling(200, 500, &mut rng_for(3, STREAM_MATRIX));
        let n_entries = 200 * 500;
        let mean: f64 = a.entries().data().iter().sum::<f64>() / n_entries as f64;
        assert!(mean.abs() < 0.02, "empirical mean {mean}");
        assert_eq!(a.max_abs(), 1.0);
        // column squared norms equal n exactly for +-1 entries
        for j in 0..5 {
            let mut sq = 0.0;
            for i in 0..200 {
                sq += a.entries().get(i, j) * a.entries().get(i, j);
            }
            assert_eq!(sq, 200.0);
        }
    }

    #[test]
    fn bitflips_zero_count_is_identity() {
        let (_, a) = gen_pooling(20, 30, &mut rng_for(5, STREAM_MATRIX));
        let beta = gen_signal(30, 0.1, &mut rng_for(5, STREAM_SIGNAL));
        let (a_hat, delta) =
            inject_adversarial_bitflips(&a, &beta, 0, &mut rng_for(5, STREAM_FLIPS)).unwrap();
        assert_eq!(a_hat.entries(), a.entries());
        assert_eq!(delta.sparsity(), 0);
    }

    #[test]
    fn bitflips_single_flip_sign() {
        // force a_ij = -1 and beta_j = 500: delta_i = (1 - (-1)) * 500 = +1000
        let a = RademacherMatrix::new(RowMat::new(1, 1, vec![-1.0]).unwrap()).unwrap();
        let beta = SignalVector::new(vec![500.0]);
        let (a_hat, delta) =
            inject_adversarial_bitflips(&a, &beta, 1, &mut rng_for(0, STREAM_FLIPS)).unwrap();
        assert_eq!(a_hat.entries().get(0, 0), 1.0);
        assert_eq!(delta.values()[0], 1000.0);
    }

    #[test]
    fn bitflips_counts_rows_and_columns() {
        let (_, a) = gen_pooling(400, 50, &mut rng_for(11, STREAM_MATRIX));
        let beta = gen_signal(50, 0.2, &mut rng_for(11, STREAM_SIGNAL));
        let (a_hat, delta) =
            inject_adversarial_bitflips(&a, &beta, 4, &mut rng_for(11, STREAM_FLIPS)).unwrap();
        let mut rows_changed = 0;
        for i in 0..400 {
            let diffs: usize = (0..50)
                .filter(|&j| a.entries().get(i, j) != a_hat.entries().get(i, j))
                .count();
            if diffs > 0 {
                rows_changed += 1;
                assert_eq!(diffs, 1, "row {i} has {diffs} flips");
            }
        }
        assert_eq!(rows_changed, 4);
        assert_eq!(delta.sparsity(), 4);
        // every delta entry is +-2 beta_j for some support j
        for &i in delta.support() {
            let v = delta.values()[i].abs();
            assert!(
                beta.support()
                    .iter()
                    .any(|&j| (v - 2.0 * beta.values()[j].abs()).abs() < 1e-12),
                "delta magnitude {v} is not twice a support value"
            );
        }
    }

    #[test]
    fn bitflips_empty_support_error() {
        let (_, a) = gen_pooling(5, 5, &mut rng_for(1, STREAM_MATRIX));
        let beta = SignalVector::new(vec![0.0; 5]);
        assert!(
            inject_adversarial_bitflips(&a, &beta, 1, &mut rng_for(1, STREAM_FLIPS)).is_err()
        );
    }

    #[test]
    fn noise_sigma_hand_example() {
        let a = RademacherMatrix::new(RowMat::new(2, 1, vec![1.0, -1.0]).unwrap()).unwrap();
        let beta = SignalVector::new(vec![10.0]);
        assert_eq!(noise_sigma(&a, &beta, 0.0).unwrap(), 0.0);
        let s = noise_sigma(&a, &beta, 0.1).unwrap();
        assert!((s - 1.0).abs() < 1e-15);
        // homogeneity in f_sigma
        let s2 = noise_sigma(&a, &beta, 0.2).unwrap();
        assert!((s2 - 2.0 * s).abs() < 1e-15);
    }

    #[test]
    fn noise_empirical_sd() {
        let mut rng = rng_for(9, STREAM_NOISE_BASE);
        let draws = gen_noise(10_000, 2.5, &mut rng);
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        let var =
            draws.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (draws.len() - 1) as f64;
        let sd = var.sqrt();
        assert!((sd - 2.5).abs() / 2.5 < 0.05, "sd = {sd}");
    }

    #[test]
    fn instance_noiseless_exact() {
        let params = GenParams {
            p: 40,
            n: 30,
            f_sp: 0.1,
            f_adv: 0.0,
            f_sigma: 0.0,
            seed: 21,
        };
        let inst = gen_instance(&params).unwrap();
        let y0 = forward_model(
            &inst.a,
            &inst.beta_star,
            &vec![0.0; 30],
            &vec![0.0; 30],
        )
        .unwrap();
        assert_eq!(inst.y.values(), y0.as_slice());
        assert_eq!(inst.delta_star.sparsity(), 0);
    }

    #[test]
    fn instance_paper_setting_counts() {
        let params = GenParams {
            p: 500,
            n: 400,
            f_sp: 0.01,
            f_adv: 0.01,
            f_sigma: 0.01,
            seed: 2,
        };
        let inst = gen_instance(&params).unwrap();
        assert_eq!(inst.beta_star.sparsity(), 5);
        assert_eq!(inst.delta_star.sparsity(), 4);
        inst.validate().unwrap();
    }

    #[test]
    fn instance_deterministic() {
        let params = GenParams {
            p: 60,
            n: 40,
            f_sp: 0.05,
            f_adv: 0.05,
            f_sigma: 0.1,
            seed: 123,
        };
        let a = gen_instance(&params).unwrap();
        let b = gen_instance(&params).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn column_means_concentrate_over_seeds() {
        // empirical column means over many seeds shrink at the Monte Carlo
        // rate; allow 4 standard errors
        let trials = 50;
        let n = 40;
        let p = 8;
        let mut col_sums = vec![0.0; p];
        for seed in 0..trials {
            let (_, a) = gen_pooling(n, p, &mut rng_for(seed as u64, STREAM_MATRIX));
            for j in 0..p {
                for i in 0..n {
                    col_sums[j] += a.entries().get(i, j);
                }
            }
        }
        let draws = (trials * n) as f64;
        let se = 1.0 / draws.sqrt();
        for (j, &s) in col_sums.iter().enumerate() {
            let mean = s / draws;
            assert!(mean.abs() < 4.0 * se, "column {j} mean {mean}, se {se}");
        }
    }

    #[test]
    fn redraw_changes_noise_only() {
        let params = GenParams {
            p: 30,
            n: 20,
            f_sp: 0.1,
            f_adv: 0.05,
            f_sigma: 0.2,
            seed: 8,
        };
        let inst = gen_instance(&params).unwrap();
        let y1 = redraw_measurements(&inst, params.seed, 1).unwrap();
        let y2 = redraw_measurements(&inst, params.seed, 1).unwrap();
        let y3 = redraw_measurements(&inst, params.seed, 2).unwrap();
        assert_eq!(y1, y2);
        assert_ne!(y1, y3);
        assert_ne!(y1.as_slice(), inst.y.values());
    }
}
