//! Box-constrained quadratic program engine.
//!
//! Problems take the form
//!
//! ```text
//!   minimise   quad(X)
//!   subject to lower_k <= (scale_k * L_k X R_k + offset_k)_{ij} <= upper_k
//!              ||x_.j||_2^2 <= cap                 (optional, per column)
//! ```
//!
//! over a matrix variable `X` (vectors are single-column matrices), where
//! each affine map acts on one side only (`L_k` or `R_k` may be identity).
//!
//! The solver is consensus ADMM with over-relaxation: one consensus block
//! per affine map plus one for the column-norm cap. The x-update is the
//! generalised Sylvester system `B_L X + X B_R + c X = RHS`; `B_L` and
//! `B_R` are symmetric PSD, so the system is solved exactly through their
//! eigendecompositions, refreshed only when the penalty parameter changes.
//! A small proximal term keeps the update strongly convex when the
//! objective is a singular quadratic.
//!
//! The iterate with the smallest objective among those whose constraint
//! violation is within `tol` is tracked and returned, so a feasible warm
//! start can only be improved on. If no iterate ever comes within
//! `10 * tol` of feasibility the problem is reported infeasible and the
//! caller applies its fallback.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::{DrltError, Result};

/// Objective of a [`BoxQpProblem`].
#[derive(Debug, Clone)]
pub enum QuadForm {
    /// `w * tr(X' X)`.
    ScaledIdentity(f64),
    /// `tr(X' P X)` with `P` symmetric positive semidefinite.
    LeftSym(DMatrix<f64>),
}

impl QuadForm {
    fn value(&self, x: &DMatrix<f64>) -> f64 {
        match self {
            QuadForm::ScaledIdentity(w) => w * x.iter().map(|v| v * v).sum::<f64>(),
            QuadForm::LeftSym(p) => {
                let px = p * x;
                x.iter().zip(px.iter()).map(|(a, b)| a * b).sum()
            }
        }
    }
}

/// One-sided affine map with entrywise interval bounds.
///
/// The map is `scale * L X R + offset`; `left`/`right` default to the
/// identity when `None`. Bounds are scalar and applied entrywise; a `None`
/// bound leaves that side unconstrained.
#[derive(Debug, Clone)]
pub struct AffineMap {
    pub left: Option<DMatrix<f64>>,
    pub right: Option<DMatrix<f64>>,
    pub scale: f64,
    pub offset: DMatrix<f64>,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

impl AffineMap {
    fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = match (&self.left, &self.right) {
            (None, None) => x.clone(),
            (Some(l), None) => l * x,
            (None, Some(r)) => x * r,
            (Some(l), Some(r)) => l * x * r,
        };
        out *= self.scale;
        out += &self.offset;
        out
    }

    /// Adjoint of the linear part applied to `v`.
    fn adjoint(&self, v: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = match (&self.left, &self.right) {
            (None, None) => v.clone(),
            (Some(l), None) => l.transpose() * v,
            (None, Some(r)) => v * r.transpose(),
            (Some(l), Some(r)) => l.transpose() * v * r.transpose(),
        };
        out *= self.scale;
        out
    }

    fn project(&self, v: &mut DMatrix<f64>) {
        for e in v.iter_mut() {
            if let Some(lo) = self.lower {
                if *e < lo {
                    *e = lo;
                }
            }
            if let Some(hi) = self.upper {
                if *e > hi {
                    *e = hi;
                }
            }
        }
    }

    /// Worst entrywise bound violation of `v`.
    fn violation(&self, v: &DMatrix<f64>) -> f64 {
        let mut worst = 0.0f64;
        for &e in v.iter() {
            if let Some(lo) = self.lower {
                worst = worst.max(lo - e);
            }
            if let Some(hi) = self.upper {
                worst = worst.max(e - hi);
            }
        }
        worst
    }
}

#[derive(Debug, Clone)]
pub struct BoxQpProblem {
    pub var_shape: (usize, usize),
    pub quad: QuadForm,
    pub maps: Vec<AffineMap>,
    /// Cap on `||x_.j||_2^2` for every column `j`.
    pub col_norm_cap: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct BoxQpOptions {
    /// Feasibility tolerance on constraint violation.
    pub tol: f64,
    pub max_iter: usize,
    /// Initial ADMM penalty.
    pub rho: f64,
    /// Over-relaxation factor in (1, 2).
    pub over_relax: f64,
    /// Proximal weight added to the x-update.
    pub prox_tau: f64,
    pub warm: Option<DMatrix<f64>>,
    /// Stop once the best feasible objective has improved by less than
    /// `rel_improve` (relative) over this many iterations.
    pub stall_window: usize,
    pub rel_improve: f64,
}

impl Default for BoxQpOptions {
    fn default() -> Self {
        BoxQpOptions {
            tol: 1e-6,
            max_iter: 10_000,
            rho: 1.0,
            over_relax: 1.6,
            prox_tau: 1e-4,
            warm: None,
            stall_window: 150,
            rel_improve: 1e-9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum QpStatus {
    Optimal,
    MaxIter,
    Infeasible,
}

#[derive(Debug, Clone)]
pub struct BoxQpSolution {
    pub x: DMatrix<f64>,
    pub objective: f64,
    /// Worst constraint violation at `x` (entrywise boxes and normalised
    /// column-cap excess).
    pub constraint_violation: f64,
    pub iterations: usize,
    pub status: QpStatus,
}

/// Eigen data for the Sylvester x-update at the current penalty.
struct XUpdate {
    left: Option<SymmetricEigen<f64, nalgebra::Dyn>>,
    right: Option<SymmetricEigen<f64, nalgebra::Dyn>>,
    c: f64,
}

impl XUpdate {
    fn build(problem: &BoxQpProblem, rho: f64, tau: f64) -> Result<Self> {
        let (m, q) = problem.var_shape;
        let mut left_mat: Option<DMatrix<f64>> = None;
        let mut right_mat: Option<DMatrix<f64>> = None;
        let mut c = tau;

        match &problem.quad {
            QuadForm::ScaledIdentity(w) => {
                if *w < 0.0 {
                    return Err(DrltError::param("objective weight must be >= 0"));
                }
                c += 2.0 * w;
            }
            QuadForm::LeftSym(p) => {
                if p.nrows() != m || p.ncols() != m {
                    return Err(DrltError::dims("objective matrix shape mismatch"));
                }
                left_mat = Some(2.0 * p);
            }
        }
        if problem.col_norm_cap.is_some() {
            c += rho;
        }
        for map in &problem.maps {
            let s2 = rho * map.scale * map.scale;
            match (&map.left, &map.right) {
                (None, None) => c += s2,
                (Some(l), None) => {
                    let g = s2 * (l.transpose() * l);
                    left_mat = Some(match left_mat {
                        Some(acc) => acc + g,
                        None => g,
                    });
                }
                (None, Some(r)) => {
                    let g = s2 * (r * r.transpose());
                    right_mat = Some(match right_mat {
                        Some(acc) => acc + g,
                        None => g,
                    });
                }
                (Some(_), Some(_)) => {
                    return Err(DrltError::param(
                        "two-sided affine maps are not supported by the x-update",
                    ));
                }
            }
        }
        let left = left_mat.map(SymmetricEigen::new);
        let right = right_mat.map(SymmetricEigen::new);
        if let Some(r) = &right {
            if r.eigenvectors.nrows() != q {
                return Err(DrltError::dims("right map shape mismatch"));
            }
        }
        Ok(XUpdate { left, right, c })
    }

    fn solve(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        match (&self.left, &self.right) {
            (None, None) => rhs / self.c,
            (Some(l), None) => {
                let mut t = l.eigenvectors.transpose() * rhs;
                for i in 0..t.nrows() {
                    let lam = l.eigenvalues[i].max(0.0);
                    let d = lam + self.c;
                    for j in 0..t.ncols() {
                        t[(i, j)] /= d;
                    }
                }
                &l.eigenvectors * t
            }
            (None, Some(r)) => {
                let mut t = rhs * &r.eigenvectors;
                for j in 0..t.ncols() {
                    let gam = r.eigenvalues[j].max(0.0);
                    let d = gam + self.c;
                    for i in 0..t.nrows() {
                        t[(i, j)] /= d;
                    }
                }
                t * r.eigenvectors.transpose()
            }
            (Some(l), Some(r)) => {
                let mut t = l.eigenvectors.transpose() * rhs * &r.eigenvectors;
                for i in 0..t.nrows() {
                    let lam = l.eigenvalues[i].max(0.0);
                    for j in 0..t.ncols() {
                        let gam = r.eigenvalues[j].max(0.0);
                        t[(i, j)] /= lam + gam + self.c;
                    }
                }
                &l.eigenvectors * t * r.eigenvectors.transpose()
            }
        }
    }
}

/// Worst violation at `x`: entrywise box violations plus the normalised
/// column-cap excess `max_j (||x_.j||^2 - cap) / cap`.
fn violation_at(problem: &BoxQpProblem, x: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0f64;
    for map in &problem.maps {
        worst = worst.max(map.violation(&map.apply(x)));
    }
    if let Some(cap) = problem.col_norm_cap {
        for j in 0..x.ncols() {
            let sq = x.column(j).norm_squared();
            worst = worst.max((sq - cap) / cap.max(1e-300));
        }
    }
    worst
}

fn project_columns(x: &mut DMatrix<f64>, cap: f64) {
    for mut col in x.column_iter_mut() {
        let sq = col.norm_squared();
        if sq > cap {
            col *= (cap / sq).sqrt();
        }
    }
}

/// Solves a [`BoxQpProblem`]; see the module docs for the algorithm.
pub fn solve_box_qp(problem: &BoxQpProblem, opts: &BoxQpOptions) -> Result<BoxQpSolution> {
    let (m, q) = problem.var_shape;
    if m == 0 || q == 0 {
        return Err(DrltError::param("variable must be at least 1x1"));
    }
    for map in &problem.maps {
        if map.lower.is_none() && map.upper.is_none() {
            return Err(DrltError::param("affine map declares no bounds"));
        }
        if let (Some(lo), Some(hi)) = (map.lower, map.upper) {
            if lo > hi {
                return Err(DrltError::param("lower bound exceeds upper bound"));
            }
        }
    }

    let mut rho = opts.rho;
    let alpha = opts.over_relax;
    let mut upd = XUpdate::build(problem, rho, opts.prox_tau)?;

    let mut x = opts
        .warm
        .clone()
        .unwrap_or_else(|| DMatrix::zeros(m, q));
    if x.nrows() != m || x.ncols() != q {
        return Err(DrltError::dims("warm start shape mismatch"));
    }

    // consensus blocks
    let mut zs: Vec<DMatrix<f64>> = problem
        .maps
        .iter()
        .map(|map| {
            let mut v = map.apply(&x);
            map.project(&mut v);
            v
        })
        .collect();
    let mut us: Vec<DMatrix<f64>> = zs.iter().map(|z| DMatrix::zeros(z.nrows(), z.ncols())).collect();
    let (mut z_cap, mut u_cap) = if let Some(cap) = problem.col_norm_cap {
        let mut z = x.clone();
        project_columns(&mut z, cap);
        (Some(z), Some(DMatrix::zeros(m, q)))
    } else {
        (None, None)
    };

    let mut best: Option<(f64, DMatrix<f64>)> = None;
    let mut best_viol = f64::INFINITY;
    // iteration after which the stall window starts counting; reset on any
    // best-objective improvement and while the iterate is infeasible
    let mut stall_anchor = 0usize;
    let mut last_best_obj = f64::INFINITY;

    let viol0 = violation_at(problem, &x);
    best_viol = best_viol.min(viol0);
    if viol0 <= opts.tol {
        let obj = problem.quad.value(&x);
        best = Some((obj, x.clone()));
        last_best_obj = obj;
    }

    let mut iterations = 0usize;
    let mut status = QpStatus::MaxIter;

    for iter in 0..opts.max_iter {
        iterations = iter + 1;

        // x-update
        let mut rhs = opts.prox_tau * &x;
        for (k, map) in problem.maps.iter().enumerate() {
            let target = &zs[k] - &us[k] - &map.offset;
            rhs += rho * map.adjoint(&target);
        }
        if let (Some(z), Some(u)) = (&z_cap, &u_cap) {
            rhs += rho * (z - u);
        }
        x = upd.solve(&rhs);

        // z / u updates with over-relaxation
        let mut primal_res = 0.0f64;
        let mut dual_res = 0.0f64;
        for (k, map) in problem.maps.iter().enumerate() {
            let v = map.apply(&x);
            primal_res = primal_res.max((&v - &zs[k]).amax());
            let relaxed = alpha * &v + (1.0 - alpha) * &zs[k];
            let mut z_new = &relaxed + &us[k];
            map.project(&mut z_new);
            dual_res = dual_res.max(rho * (&z_new - &zs[k]).amax());
            us[k] += &relaxed - &z_new;
            zs[k] = z_new;
        }
        if let (Some(z), Some(u), Some(cap)) = (z_cap.as_mut(), u_cap.as_mut(), problem.col_norm_cap)
        {
            primal_res = primal_res.max((&x - &*z).amax());
            let relaxed = alpha * &x + (1.0 - alpha) * &*z;
            let mut z_new = &relaxed + &*u;
            project_columns(&mut z_new, cap);
            dual_res = dual_res.max(rho * (&z_new - &*z).amax());
            *u += &relaxed - &z_new;
            *z = z_new;
        }

        // feasibility tracking
        let viol = violation_at(problem, &x);
        best_viol = best_viol.min(viol);
        if viol <= opts.tol {
            let check_now = iter % 5 == 0 || iter + 1 == opts.max_iter;
            if check_now {
                let obj = problem.quad.value(&x);
                let improved = match &best {
                    None => true,
                    Some((b, _)) => obj < *b,
                };
                if improved {
                    best = Some((obj, x.clone()));
                }
                if let Some((b, _)) = &best {
                    if last_best_obj - *b > opts.rel_improve * b.abs().max(1e-12) {
                        last_best_obj = *b;
                        stall_anchor = iter;
                    }
                }
            }
        } else {
            // still in an infeasible transient; the stall window waits
            stall_anchor = iter;
        }

        // convergence: consensus residuals small and current point feasible
        if primal_res <= opts.tol && dual_res <= opts.tol && viol <= opts.tol {
            status = QpStatus::Optimal;
            break;
        }
        // stall on the best feasible objective
        if best.is_some() && iter > stall_anchor + opts.stall_window {
            status = QpStatus::Optimal;
            break;
        }
        // early infeasibility: violation stuck far from tolerance
        if iter >= 500 && iter % 100 == 0 && best.is_none() && best_viol > 1e-2 {
            status = QpStatus::Infeasible;
            break;
        }

        // penalty rebalancing (infrequent; rebuilds the eigen data)
        if iter % 100 == 99 && primal_res.max(dual_res) > opts.tol {
            if primal_res > 10.0 * dual_res && rho < 1e6 {
                rho *= 2.0;
                for u in us.iter_mut() {
                    *u /= 2.0;
                }
                if let Some(u) = u_cap.as_mut() {
                    *u /= 2.0;
                }
                upd = XUpdate::build(problem, rho, opts.prox_tau)?;
            } else if dual_res > 10.0 * primal_res && rho > 1e-6 {
                rho /= 2.0;
                for u in us.iter_mut() {
                    *u *= 2.0;
                }
                if let Some(u) = u_cap.as_mut() {
                    *u *= 2.0;
                }
                upd = XUpdate::build(problem, rho, opts.prox_tau)?;
            }
        }
    }

    // fold the final iterate into the best-feasible record; fast runs can
    // converge between objective samples
    let final_viol = violation_at(problem, &x);
    if final_viol <= opts.tol {
        let obj = problem.quad.value(&x);
        let better = match &best {
            None => true,
            Some((b, _)) => obj < *b,
        };
        if better {
            best = Some((obj, x.clone()));
        }
    }

    match best {
        Some((obj, xb)) => {
            let viol = violation_at(problem, &xb);
            Ok(BoxQpSolution {
                x: xb,
                objective: obj,
                constraint_violation: viol,
                iterations,
                status,
            })
        }
        None => {
            let status = if best_viol > 10.0 * opts.tol {
                QpStatus::Infeasible
            } else {
                QpStatus::MaxIter
            };
            let obj = problem.quad.value(&x);
            Ok(BoxQpSolution {
                x,
                objective: obj,
                constraint_violation: final_viol,
                iterations,
                status,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e1_box_problem(p: usize, mu: f64) -> BoxQpProblem {
        // minimise ||m||^2 subject to ||m - e1||_inf <= mu
        let mut offset = DMatrix::zeros(p, 1);
        offset[(0, 0)] = -1.0;
        BoxQpProblem {
            var_shape: (p, 1),
            quad: QuadForm::ScaledIdentity(1.0),
            maps: vec![AffineMap {
                left: None,
                right: None,
                scale: 1.0,
                offset,
                lower: Some(-mu),
                upper: Some(mu),
            }],
            col_norm_cap: None,
        }
    }

    #[test]
    fn shrinks_toward_origin_inside_box() {
        let mu = 0.3;
        let sol = solve_box_qp(&e1_box_problem(4, mu), &BoxQpOptions::default()).unwrap();
        assert_eq!(sol.status, QpStatus::Optimal);
        assert!((sol.x[(0, 0)] - (1.0 - mu)).abs() < 1e-5, "m0 = {}", sol.x[(0, 0)]);
        for i in 1..4 {
            assert!(sol.x[(i, 0)].abs() < 1e-5);
        }
        assert!(sol.constraint_violation <= 1e-6);
    }

    #[test]
    fn zero_feasible_stays_zero() {
        // constraints satisfied by 0: |m| <= 1
        let problem = BoxQpProblem {
            var_shape: (3, 1),
            quad: QuadForm::ScaledIdentity(1.0),
            maps: vec![AffineMap {
                left: None,
                right: None,
                scale: 1.0,
                offset: DMatrix::zeros(3, 1),
                lower: Some(-1.0),
                upper: Some(1.0),
            }],
            col_norm_cap: None,
        };
        let sol = solve_box_qp(&problem, &BoxQpOptions::default()).unwrap();
        assert!(sol.objective < 1e-10);
        assert!(sol.x.amax() < 1e-5);
    }

    #[test]
    fn reports_infeasible_disjoint_boxes() {
        // x <= -1 and x >= 1 simultaneously
        let problem = BoxQpProblem {
            var_shape: (1, 1),
            quad: QuadForm::ScaledIdentity(1.0),
            maps: vec![
                AffineMap {
                    left: None,
                    right: None,
                    scale: 1.0,
                    offset: DMatrix::zeros(1, 1),
                    lower: None,
                    upper: Some(-1.0),
                },
                AffineMap {
                    left: None,
                    right: None,
                    scale: 1.0,
                    offset: DMatrix::zeros(1, 1),
                    lower: Some(1.0),
                    upper: None,
                },
            ],
            col_norm_cap: None,
        };
        let sol = solve_box_qp(&problem, &BoxQpOptions::default()).unwrap();
        assert_eq!(sol.status, QpStatus::Infeasible);
    }

    #[test]
    fn left_quadratic_with_left_map() {
        // minimise m' P m subject to ||P m - e1||_inf <= mu, P diagonal(1, 2)
        let p = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0]);
        let mut offset = DMatrix::zeros(2, 1);
        offset[(0, 0)] = -1.0;
        let mu = 0.25;
        let problem = BoxQpProblem {
            var_shape: (2, 1),
            quad: QuadForm::LeftSym(p.clone()),
            maps: vec![AffineMap {
                left: Some(p),
                right: None,
                scale: 1.0,
                offset,
                lower: Some(-mu),
                upper: Some(mu),
            }],
            col_norm_cap: None,
        };
        // optimum: m = ((1-mu), 0): P m = (1-mu, 0), |.. - e1| = mu tight
        let sol = solve_box_qp(&problem, &BoxQpOptions::default()).unwrap();
        assert!((sol.x[(0, 0)] - 0.75).abs() < 1e-5, "m0 = {}", sol.x[(0, 0)]);
        assert!(sol.x[(1, 0)].abs() < 1e-5);
    }

    #[test]
    fn column_norm_cap_binds() {
        // minimise ||x - (2,0)||-ish via box pushing x toward 2 but cap ||x||^2 <= 1
        // use map bounds [2, 3] on identity so the box wants x0 in [2,3];
        // cap forces ||x|| <= 1: best feasible violation... the box and cap
        // conflict, so expect infeasible.
        let problem = BoxQpProblem {
            var_shape: (2, 1),
            quad: QuadForm::ScaledIdentity(1.0),
            maps: vec![AffineMap {
                left: None,
                right: None,
                scale: 1.0,
                offset: DMatrix::zeros(2, 1),
                lower: Some(2.0),
                upper: Some(3.0),
            }],
            col_norm_cap: Some(1.0),
        };
        let sol = solve_box_qp(&problem, &BoxQpOptions::default()).unwrap();
        assert_eq!(sol.status, QpStatus::Infeasible);
    }

    #[test]
    fn right_map_matrix_variable() {
        // X in R^{2x2}: minimise ||X||_F^2 s.t. entries of X R - I in [-mu, mu],
        // R = diag(1, 2). Optimum: X = diag((1-mu), (1-mu)/2)... column j of
        // X R = r_j * x_.j, so x_jj = (1-mu)/r_j.
        let r = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0]);
        let mu = 0.1;
        let problem = BoxQpProblem {
            var_shape: (2, 2),
            quad: QuadForm::ScaledIdentity(1.0),
            maps: vec![AffineMap {
                left: None,
                right: Some(r),
                scale: 1.0,
                offset: -DMatrix::identity(2, 2),
                lower: Some(-mu),
                upper: Some(mu),
            }],
            col_norm_cap: None,
        };
        let sol = solve_box_qp(&problem, &BoxQpOptions::default()).unwrap();
        assert!((sol.x[(0, 0)] - 0.9).abs() < 1e-5);
        assert!((sol.x[(1, 1)] - 0.45).abs() < 1e-5);
        assert!(sol.x[(0, 1)].abs() < 1e-5);
        assert!(sol.x[(1, 0)].abs() < 1e-5);
    }

    #[test]
    fn warm_feasible_start_never_regresses() {
        // warm start at a feasible point; the returned objective must not
        // exceed the warm objective
        let mu = 0.5;
        let problem = e1_box_problem(3, mu);
        let mut warm = DMatrix::zeros(3, 1);
        warm[(0, 0)] = 1.0; // feasible: |1 - 1| = 0 <= mu
        let opts = BoxQpOptions {
            warm: Some(warm),
            ..Default::default()
        };
        let sol = solve_box_qp(&problem, &opts).unwrap();
        assert!(sol.objective <= 1.0 + 1e-12);
        assert!((sol.x[(0, 0)] - 0.5).abs() < 1e-5);
    }
}
