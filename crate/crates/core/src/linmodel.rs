//! Measurement model for group testing with errors in group-membership
//! specifications.
//!
//! Pools are encoded by a binary matrix `B` (`b_ij = 1` iff sample `j`
//! participates in pool `i`), transformed to the Rademacher matrix
//! `A = 2B - 1` for mean-zero analysis. Measurements follow
//! `y = Â β* + η` where `Â` is the (unknown) matrix actually used; relative
//! to the specified `A` this reads `y = A β* + δ* + η` with the
//! model-mismatch error vector `δ* = (Â - A) β*`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::mat::RowMat;
use crate::{DrltError, Result};

/// Binary pooling matrix `B` with entries in `{0,1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryPoolingMatrix(RowMat);

impl BinaryPoolingMatrix {
    pub fn new(entries: RowMat) -> Result<Self> {
        if entries.rows() == 0 || entries.cols() == 0 {
            return Err(DrltError::param("pooling matrix must be at least 1x1"));
        }
        for i in 0..entries.rows() {
            for (j, &v) in entries.row(i).iter().enumerate() {
                if v != 0.0 && v != 1.0 {
                    return Err(DrltError::InvalidEntry {
                        row: i,
                        col: j,
                        value: v,
                        allowed: "{0,1}",
                    });
                }
            }
        }
        Ok(BinaryPoolingMatrix(entries))
    }

    pub fn entries(&self) -> &RowMat {
        &self.0
    }

    pub fn pools(&self) -> usize {
        self.0.rows()
    }

    pub fn samples(&self) -> usize {
        self.0.cols()
    }
}

/// Rademacher pooling matrix with entries in `{-1,+1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RademacherMatrix(RowMat);

impl RademacherMatrix {
    pub fn new(entries: RowMat) -> Result<Self> {
        if entries.rows() == 0 || entries.cols() == 0 {
            return Err(DrltError::param("rademacher matrix must be at least 1x1"));
        }
        for i in 0..entries.rows() {
            for (j, &v) in entries.row(i).iter().enumerate() {
                if v != -1.0 && v != 1.0 {
                    return Err(DrltError::InvalidEntry {
                        row: i,
                        col: j,
                        value: v,
                        allowed: "{-1,+1}",
                    });
                }
            }
        }
        Ok(RademacherMatrix(entries))
    }

    pub fn entries(&self) -> &RowMat {
        &self.0
    }

    pub fn pools(&self) -> usize {
        self.0.rows()
    }

    pub fn samples(&self) -> usize {
        self.0.cols()
    }

    /// Entrywise max-abs; exactly 1 by the type invariant.
    pub fn max_abs(&self) -> f64 {
        self.0.max_abs()
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        self.0.to_dmatrix()
    }
}

/// Sparse signal `β*` with its support set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalVector {
    values: Vec<f64>,
    support: Vec<usize>,
}

impl SignalVector {
    /// The support is derived from the nonzero positions.
    pub fn new(values: Vec<f64>) -> Self {
        let support = values
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0.0)
            .map(|(j, _)| j)
            .collect();
        SignalVector { values, support }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Indices `j` with `β*_j != 0`, ascending.
    pub fn support(&self) -> &[usize] {
        &self.support
    }

    /// `s = |support|`.
    pub fn sparsity(&self) -> usize {
        self.support.len()
    }

    pub fn to_dvector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.values)
    }
}

/// Model-mismatch error vector `δ*` with its support set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MMEVector {
    values: Vec<f64>,
    support: Vec<usize>,
}

impl MMEVector {
    pub fn new(values: Vec<f64>) -> Self {
        let support = values
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0.0)
            .map(|(i, _)| i)
            .collect();
        MMEVector { values, support }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    /// `r = |support|`.
    pub fn sparsity(&self) -> usize {
        self.support.len()
    }

    pub fn to_dvector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.values)
    }
}

/// Measurement vector `y` with the (known) noise standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementVector {
    values: Vec<f64>,
    noise_sigma: f64,
}

impl MeasurementVector {
    pub fn new(values: Vec<f64>, noise_sigma: f64) -> Result<Self> {
        if noise_sigma < 0.0 || !noise_sigma.is_finite() {
            return Err(DrltError::param(format!(
                "noise sigma must be finite and >= 0, got {noise_sigma}"
            )));
        }
        Ok(MeasurementVector {
            values,
            noise_sigma,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn noise_sigma(&self) -> f64 {
        self.noise_sigma
    }

    pub fn to_dvector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.values)
    }
}

/// A complete simulated problem: the specified matrix `A`, the true matrix
/// `Â` used for measuring, the ground-truth signal and MME vectors, the
/// measurements, and the noise level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemInstance {
    #[serde(rename = "A")]
    pub a: RademacherMatrix,
    #[serde(rename = "A_hat")]
    pub a_hat: RademacherMatrix,
    pub beta_star: SignalVector,
    pub delta_star: MMEVector,
    pub y: MeasurementVector,
    pub sigma: f64,
}

impl ProblemInstance {
    pub fn pools(&self) -> usize {
        self.a.pools()
    }

    pub fn samples(&self) -> usize {
        self.a.samples()
    }

    /// Validates the cross-field invariant `δ* = (Â - A) β*` and shape
    /// consistency. Used by the JSON loader.
    pub fn validate(&self) -> Result<()> {
        let (n, p) = (self.a.pools(), self.a.samples());
        if self.a_hat.pools() != n || self.a_hat.samples() != p {
            return Err(DrltError::dims("A and A_hat shapes differ"));
        }
        if self.beta_star.len() != p {
            return Err(DrltError::dims("beta_star length != p"));
        }
        if self.delta_star.len() != n || self.y.len() != n {
            return Err(DrltError::dims("delta_star / y length != n"));
        }
        let delta = mme_from_matrices(&self.a, &self.a_hat, &self.beta_star)?;
        for i in 0..n {
            if (delta.values()[i] - self.delta_star.values()[i]).abs() > 1e-9 {
                return Err(DrltError::Degenerate(format!(
                    "delta_star[{i}] inconsistent with (A_hat - A) beta_star"
                )));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let inst: ProblemInstance = serde_json::from_str(text)?;
        inst.validate()?;
        Ok(inst)
    }
}

/// `A = 2B - 1` entrywise. The inverse transform is `(A + 1) / 2`.
pub fn binary_to_rademacher(b: &BinaryPoolingMatrix) -> RademacherMatrix {
    let e = b.entries();
    let out = RowMat::from_fn(e.rows(), e.cols(), |i, j| 2.0 * e.get(i, j) - 1.0);
    RademacherMatrix(out)
}

/// Recovers `B = (A + 1) / 2` from a Rademacher matrix.
pub fn rademacher_to_binary(a: &RademacherMatrix) -> BinaryPoolingMatrix {
    let e = a.entries();
    let out = RowMat::from_fn(e.rows(), e.cols(), |i, j| (e.get(i, j) + 1.0) / 2.0);
    BinaryPoolingMatrix(out)
}

/// Exact forward evaluation `y = Â β + δ + η`.
///
/// Each entry is the plain left-to-right dot product over `j` followed by
/// the two additive terms, with no reordering of sums.
pub fn forward_model(
    a_hat: &RademacherMatrix,
    beta: &SignalVector,
    delta_extra: &[f64],
    eta: &[f64],
) -> Result<Vec<f64>> {
    let (n, p) = (a_hat.pools(), a_hat.samples());
    if beta.len() != p {
        return Err(DrltError::dims(format!(
            "forward_model: beta has length {}, expected {p}",
            beta.len()
        )));
    }
    if delta_extra.len() != n || eta.len() != n {
        return Err(DrltError::dims(format!(
            "forward_model: delta/eta have lengths {}/{}, expected {n}",
            delta_extra.len(),
            eta.len()
        )));
    }
    let bv = beta.values();
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let row = a_hat.entries().row(i);
        let mut acc = 0.0;
        for j in 0..p {
            acc += row[j] * bv[j];
        }
        y.push(acc + delta_extra[i] + eta[i]);
    }
    Ok(y)
}

/// `δ* = (Â - A) β*`, with support and sparsity derived from the nonzeros.
pub fn mme_from_matrices(
    a: &RademacherMatrix,
    a_hat: &RademacherMatrix,
    beta: &SignalVector,
) -> Result<MMEVector> {
    let (n, p) = (a.pools(), a.samples());
    if a_hat.pools() != n || a_hat.samples() != p {
        return Err(DrltError::dims("mme_from_matrices: A and A_hat shapes differ"));
    }
    if beta.len() != p {
        return Err(DrltError::dims("mme_from_matrices: beta length != p"));
    }
    let bv = beta.values();
    let mut delta = Vec::with_capacity(n);
    for i in 0..n {
        let ra = a.entries().row(i);
        let rh = a_hat.entries().row(i);
        let mut acc = 0.0;
        for j in 0..p {
            acc += (rh[j] - ra[j]) * bv[j];
        }
        delta.push(acc);
    }
    Ok(MMEVector::new(delta))
}

/// Converts raw pooled measurements `z = B̂ β* + η̃` into Rademacher-space
/// measurements `y = 2z - total_signal`, valid when the caller knows the
/// total signal mass `Σ_j β*_j`. The returned noise level is `2 σ̃`.
///
/// The simulator generates `y` directly in `A`-space and does not use this;
/// it exists for callers that start from binary-matrix pooled data.
pub fn pooled_to_rademacher_measurements(
    z: &[f64],
    total_signal: f64,
    sigma_tilde: f64,
) -> Result<MeasurementVector> {
    let values = z.iter().map(|&zi| 2.0 * zi - total_signal).collect();
    MeasurementVector::new(values, 2.0 * sigma_tilde)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rmat(rows: usize, cols: usize, vals: &[f64]) -> RademacherMatrix {
        RademacherMatrix::new(RowMat::new(rows, cols, vals.to_vec()).unwrap()).unwrap()
    }

    #[test]
    fn binary_to_rademacher_examples() {
        // [[0,1],[1,0]] -> [[-1,1],[1,-1]]
        let b = BinaryPoolingMatrix::new(RowMat::new(2, 2, vec![0.0, 1.0, 1.0, 0.0]).unwrap())
            .unwrap();
        let a = binary_to_rademacher(&b);
        assert_eq!(a.entries().data(), &[-1.0, 1.0, 1.0, -1.0]);

        // all-ones B -> all-ones A
        let b1 =
            BinaryPoolingMatrix::new(RowMat::new(2, 3, vec![1.0; 6]).unwrap()).unwrap();
        assert!(binary_to_rademacher(&b1)
            .entries()
            .data()
            .iter()
            .all(|&v| v == 1.0));
    }

    #[test]
    fn binary_round_trip_identity() {
        // random-ish 4x6 pattern; (A+1)/2 must recover B exactly
        let vals: Vec<f64> = (0..24).map(|k| ((k * 7 + 3) % 5 % 2) as f64).collect();
        let b = BinaryPoolingMatrix::new(RowMat::new(4, 6, vals).unwrap()).unwrap();
        let a = binary_to_rademacher(&b);
        assert_eq!(a.max_abs(), 1.0);
        let back = rademacher_to_binary(&a);
        assert_eq!(back.entries(), b.entries());
    }

    #[test]
    fn rejects_non_binary_and_non_sign_entries() {
        assert!(BinaryPoolingMatrix::new(RowMat::new(1, 2, vec![0.0, 0.5]).unwrap()).is_err());
        assert!(RademacherMatrix::new(RowMat::new(1, 2, vec![1.0, 0.0]).unwrap()).is_err());
    }

    #[test]
    fn forward_model_hand_example() {
        // A=[[1,1],[1,-1]], beta=(2,0), delta=(0,3), eta=0 -> y=(2,5)
        let a = rmat(2, 2, &[1.0, 1.0, 1.0, -1.0]);
        let beta = SignalVector::new(vec![2.0, 0.0]);
        let y = forward_model(&a, &beta, &[0.0, 3.0], &[0.0, 0.0]).unwrap();
        assert_eq!(y, vec![2.0, 5.0]);
    }

    #[test]
    fn forward_model_zero_case() {
        let a = rmat(2, 2, &[1.0, 1.0, 1.0, -1.0]);
        let beta = SignalVector::new(vec![0.0, 0.0]);
        let y = forward_model(&a, &beta, &[0.0, 0.0], &[0.0, 0.0]).unwrap();
        assert_eq!(y, vec![0.0, 0.0]);
    }

    #[test]
    fn forward_model_matches_reversed_order_oracle() {
        // 8x12 pseudo-random instance; reversed-index summation as oracle
        let n = 8;
        let p = 12;
        let vals: Vec<f64> = (0..n * p)
            .map(|k| if (k * 2654435761usize) % 7 < 4 { 1.0 } else { -1.0 })
            .collect();
        let a = RademacherMatrix::new(RowMat::new(n, p, vals).unwrap()).unwrap();
        let beta = SignalVector::new(
            (0..p)
                .map(|j| if j % 3 == 0 { (j as f64) * 1.37 + 0.1 } else { 0.0 })
                .collect(),
        );
        let delta: Vec<f64> = (0..n).map(|i| (i as f64) * 0.25 - 1.0).collect();
        let eta: Vec<f64> = (0..n).map(|i| ((i * i) as f64).sin()).collect();
        let y = forward_model(&a, &beta, &delta, &eta).unwrap();

        for i in 0..n {
            let mut acc = 0.0;
            for j in (0..p).rev() {
                acc += a.entries().get(i, j) * beta.values()[j];
            }
            let oracle = acc + delta[i] + eta[i];
            let denom = oracle.abs().max(1.0);
            assert!(
                (y[i] - oracle).abs() / denom < 1e-12,
                "row {i}: {} vs oracle {oracle}",
                y[i]
            );
        }
    }

    #[test]
    fn forward_model_dimension_mismatch() {
        let a = rmat(2, 2, &[1.0, 1.0, 1.0, -1.0]);
        let beta = SignalVector::new(vec![1.0]);
        assert!(forward_model(&a, &beta, &[0.0, 0.0], &[0.0, 0.0]).is_err());
    }

    #[test]
    fn forward_model_is_additive_in_beta() {
        let a = rmat(2, 3, &[1.0, -1.0, 1.0, -1.0, 1.0, 1.0]);
        let b1 = SignalVector::new(vec![1.0, 0.0, 2.0]);
        let b2 = SignalVector::new(vec![0.0, 3.0, -1.0]);
        let sum = SignalVector::new(vec![1.0, 3.0, 1.0]);
        let delta = [0.5, -0.5];
        let eta = [0.1, 0.2];
        let y1 = forward_model(&a, &b1, &delta, &eta).unwrap();
        let y2 = forward_model(&a, &b2, &delta, &eta).unwrap();
        let ys = forward_model(&a, &sum, &delta, &eta).unwrap();
        for i in 0..2 {
            // y(b1+b2) = y(b1) + y(b2) - (delta + eta), since the additive
            // terms enter twice on the right
            let expect = y1[i] + y2[i] - (delta[i] + eta[i]);
            assert!((ys[i] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn mme_no_mismatch_is_zero() {
        let a = rmat(2, 2, &[1.0, 1.0, -1.0, 1.0]);
        let beta = SignalVector::new(vec![5.0, 2.0]);
        let d = mme_from_matrices(&a, &a, &beta).unwrap();
        assert_eq!(d.values(), &[0.0, 0.0]);
        assert_eq!(d.sparsity(), 0);
    }

    #[test]
    fn mme_single_flip_magnitude() {
        // flip at (0,0) where a_00 = 1 and beta_0 = 50: delta_0 = -2*1*50
        let a = rmat(2, 2, &[1.0, 1.0, -1.0, 1.0]);
        let a_hat = rmat(2, 2, &[-1.0, 1.0, -1.0, 1.0]);
        let beta = SignalVector::new(vec![50.0, 0.0]);
        let d = mme_from_matrices(&a, &a_hat, &beta).unwrap();
        assert_eq!(d.values(), &[-100.0, 0.0]);
        assert_eq!(d.support(), &[0]);
    }

    #[test]
    fn mme_ineffective_flip() {
        // flip lands on a zero coordinate of beta: delta stays zero
        let a = rmat(1, 2, &[1.0, -1.0]);
        let a_hat = rmat(1, 2, &[1.0, 1.0]);
        let beta = SignalVector::new(vec![7.0, 0.0]);
        let d = mme_from_matrices(&a, &a_hat, &beta).unwrap();
        assert_eq!(d.values(), &[0.0]);
        assert_eq!(d.sparsity(), 0);
    }

    #[test]
    fn signal_support_matches_nonzeros() {
        let s = SignalVector::new(vec![0.0, 3.0, 0.0, -2.0]);
        assert_eq!(s.support(), &[1, 3]);
        assert_eq!(s.sparsity(), 2);
    }

    #[test]
    fn pooled_transform_uses_known_total() {
        // z = B beta with B = [[1,0],[1,1]], beta = (2,4): z = (2,6)
        // A = 2B-1, y = A beta = (-2, 6); total = 6 -> y = 2z - 6
        let y = pooled_to_rademacher_measurements(&[2.0, 6.0], 6.0, 0.5).unwrap();
        assert_eq!(y.values(), &[-2.0, 6.0]);
        assert_eq!(y.noise_sigma(), 1.0);
    }

    #[test]
    fn instance_json_round_trip() {
        let a = rmat(2, 2, &[1.0, 1.0, -1.0, 1.0]);
        let a_hat = rmat(2, 2, &[-1.0, 1.0, -1.0, 1.0]);
        let beta = SignalVector::new(vec![50.0, 0.0]);
        let delta = mme_from_matrices(&a, &a_hat, &beta).unwrap();
        let y = forward_model(&a_hat, &beta, &[0.0; 2], &[0.0; 2]).unwrap();
        let inst = ProblemInstance {
            a,
            a_hat,
            beta_star: beta,
            delta_star: delta,
            y: MeasurementVector::new(y, 0.0).unwrap(),
            sigma: 0.0,
        };
        let text = inst.to_json().unwrap();
        let back = ProblemInstance::from_json(&text).unwrap();
        assert_eq!(back, inst);
    }

    proptest::proptest! {
        #[test]
        fn binary_round_trip_holds_for_all_binary_matrices(
            bits in proptest::collection::vec(0u8..=1, 1..60),
            cols in 1usize..6,
        ) {
            let rows = bits.len() / cols;
            proptest::prop_assume!(rows >= 1);
            let data: Vec<f64> = bits[..rows * cols].iter().map(|&b| b as f64).collect();
            let b = BinaryPoolingMatrix::new(RowMat::new(rows, cols, data).unwrap()).unwrap();
            let a = binary_to_rademacher(&b);
            let back = rademacher_to_binary(&a);
            proptest::prop_assert_eq!(back.entries(), b.entries());
            proptest::prop_assert_eq!(a.max_abs(), 1.0);
        }
    }

    #[test]
    fn instance_json_rejects_inconsistent_delta() {
        let a = rmat(1, 1, &[1.0]);
        let inst = ProblemInstance {
            a: a.clone(),
            a_hat: a,
            beta_star: SignalVector::new(vec![1.0]),
            delta_star: MMEVector::new(vec![3.0]),
            y: MeasurementVector::new(vec![1.0], 0.0).unwrap(),
            sigma: 0.0,
        };
        let text = inst.to_json().unwrap();
        assert!(ProblemInstance::from_json(&text).is_err());
    }
}
