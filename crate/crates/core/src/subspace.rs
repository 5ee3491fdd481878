//! The MOESP-style identification pipeline: RQ factorization of the stacked
//! data matrices, order selection from the singular values of `R22`,
//! observability-range extraction, the shift-invariance solve for `A_T`,
//! similarity disambiguation through a known `C`, and the least-squares fit
//! of `(x_T(0), B_T, D)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hankel::{build_hankel, HankelBatch};
use crate::linalg::{self, lstsq, pinv, rank_threshold};
use crate::lti::Trajectory;

/// Lower-triangular factors and orthonormal row blocks of
/// `[U_m; Y_m] = [[R11, 0], [R21, R22]] [Q1; Q2]`.
///
/// With `m < s(n + l)` the factorization is economy-sized: `R22` keeps
/// `min(m, s(n+l)) - sn` columns. An all-zero input block (autonomous data)
/// contributes no rows: `R11`/`R21`/`Q1` are empty and `R22 Q2` factors
/// `Y_m` alone.
#[derive(Debug, Clone, PartialEq)]
pub struct RQFactors {
    pub r11: DMatrix<f64>,
    pub r21: DMatrix<f64>,
    pub r22: DMatrix<f64>,
    pub q1: DMatrix<f64>,
    pub q2: DMatrix<f64>,
    /// Number of stacked input rows that entered the triangularization.
    pub input_rows: usize,
    /// Set when `U_m` is numerically row-rank deficient (persistently
    /// unexciting input); order estimation downstream will surface it.
    pub warning: Option<String>,
}

/// RQ factorization computed as the transposed QR of the stacked data.
pub fn rq_factorize(batch: &HankelBatch) -> Result<RQFactors> {
    let m = batch.m;
    let ny = batch.y_m.nrows();
    let autonomous = batch.u_m.nrows() == 0 || batch.u_m.amax() == 0.0;
    let nu = if autonomous { 0 } else { batch.u_m.nrows() };

    if !autonomous && m <= nu {
        // R22 would be empty: every direction is consumed by the input rows.
        let needed_k = nu + batch.s; // m > nu with m = K - s + 1
        return Err(Error::ShortTrajectory {
            needed: needed_k + 1,
            got: m + batch.s - 1,
        });
    }

    let total = nu + ny;
    let mut stacked = DMatrix::zeros(total, m);
    if nu > 0 {
        stacked.view_mut((0, 0), (nu, m)).copy_from(&batch.u_m);
    }
    stacked.view_mut((nu, 0), (ny, m)).copy_from(&batch.y_m);

    // RQ of X from QR of X^T. L = R^T is lower trapezoidal, Q has
    // orthonormal rows.
    let qr = stacked.transpose().qr();
    let q = qr.q();
    let r = qr.r();
    let t = r.nrows(); // min(m, total)
    let mut l = r.transpose();
    let mut q_rows = q.transpose();

    // Sign convention: non-negative diagonal of L, compensated in Q.
    for k in 0..t {
        if k < total && l[(k, k)] < 0.0 {
            for i in 0..total {
                l[(i, k)] = -l[(i, k)];
            }
            for j in 0..m {
                q_rows[(k, j)] = -q_rows[(k, j)];
            }
        }
    }

    let r11 = l.view((0, 0), (nu, nu)).into_owned();
    let r21 = l.view((nu, 0), (ny, nu)).into_owned();
    let r22 = l.view((nu, nu), (ny, t - nu)).into_owned();
    let q1 = q_rows.view((0, 0), (nu, m)).into_owned();
    let q2 = q_rows.view((nu, 0), (t - nu, m)).into_owned();

    let warning = if nu > 0 {
        let min_diag = (0..nu).map(|i| r11[(i, i)].abs()).fold(f64::INFINITY, f64::min);
        let max_diag = (0..nu).map(|i| r11[(i, i)].abs()).fold(0.0, f64::max);
        if min_diag <= rank_threshold(nu, m, max_diag) {
            Some("input block is numerically rank deficient (persistently unexciting input)".into())
        } else {
            None
        }
    } else {
        None
    };

    Ok(RQFactors {
        r11,
        r21,
        r22,
        q1,
        q2,
        input_rows: nu,
        warning,
    })
}

/// Model-order selection policy applied to the singular values of `R22`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case", deny_unknown_fields)]
pub enum OrderPolicy {
    /// Index of the largest ratio `sigma_k / sigma_{k+1}` (the knee).
    LargestGap,
    /// Number of singular values at least `rho * sigma_1`.
    Threshold { rho: f64 },
    Fixed { order: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrderEstimate {
    pub order: usize,
    /// Set when no drop dominates (ties resolved to the smallest index).
    pub low_confidence: bool,
    /// The winning ratio for the gap policy (1.0 otherwise).
    pub gap_ratio: f64,
}

/// Picks a model order from a descending singular-value list.
pub fn estimate_order(singular_values: &[f64], policy: OrderPolicy) -> Result<OrderEstimate> {
    if singular_values.len() < 2 {
        return Err(Error::InvalidArgument(
            "order estimation needs at least two singular values".into(),
        ));
    }
    if singular_values.iter().all(|&s| s == 0.0) {
        return Err(Error::NoSignal);
    }
    match policy {
        OrderPolicy::Fixed { order } => {
            if order == 0 || order > singular_values.len() {
                return Err(Error::InvalidArgument(format!(
                    "fixed order {order} outside 1..={}",
                    singular_values.len()
                )));
            }
            Ok(OrderEstimate {
                order,
                low_confidence: false,
                gap_ratio: 1.0,
            })
        }
        OrderPolicy::Threshold { rho } => {
            if !(0.0 < rho && rho <= 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "threshold rho must lie in (0, 1], got {rho}"
                )));
            }
            let sigma1 = singular_values[0];
            let order = singular_values
                .iter()
                .filter(|&&s| s >= rho * sigma1)
                .count();
            Ok(OrderEstimate {
                order,
                low_confidence: false,
                gap_ratio: 1.0,
            })
        }
        OrderPolicy::LargestGap => {
            // Values below sigma_1 * eps are indistinguishable from zero;
            // flooring the denominator keeps drops inside that fringe from
            // outranking the real knee.
            let floor = singular_values[0] * f64::EPSILON;
            let ratios: Vec<f64> = singular_values
                .windows(2)
                .map(|w| w[0].max(floor) / w[1].max(floor))
                .collect();
            let mut best_k = 1usize;
            let mut best_ratio = 0.0f64;
            for (k, &ratio) in ratios.iter().enumerate() {
                if ratio > best_ratio * (1.0 + 1e-9) {
                    best_ratio = ratio;
                    best_k = k + 1;
                }
            }
            let ties = ratios
                .iter()
                .filter(|&&r| (r - best_ratio).abs() <= 1e-9 * best_ratio)
                .count();
            Ok(OrderEstimate {
                order: best_k,
                low_confidence: ties > 1 || best_ratio <= 1.0 + 1e-9,
                gap_ratio: best_ratio,
            })
        }
    }
}

/// Descending singular values of `R22`; their knee locates the order.
pub fn r22_singular_values(factors: &RQFactors) -> DVector<f64> {
    factors.r22.clone().singular_values()
}

/// First `p` left singular vectors of `R22`: an orthonormal basis of
/// `range(Y_m Pi_perp) = range(O_s)`.
pub fn extract_observability_basis(factors: &RQFactors, p: usize) -> Result<DMatrix<f64>> {
    let svd = factors.r22.clone().svd(true, false);
    let sv = &svd.singular_values;
    let sigma_max = sv.max();
    let tol = if sigma_max == 0.0 {
        0.0
    } else {
        rank_threshold(factors.r22.nrows(), factors.r22.ncols(), sigma_max)
    };
    let numerical_rank = sv.iter().filter(|&&s| s > tol).count();
    if p == 0 || p > numerical_rank {
        return Err(Error::RankDeficient {
            context: "observability-range extraction",
            rank: numerical_rank,
            needed: p,
        });
    }
    let u = svd.u.as_ref().expect("svd requested u");
    Ok(u.columns(0, p).into_owned())
}

/// Solves the shift-invariance system `U_{R,l} A_T = U_{R,r}` in the least
/// squares sense.
pub fn solve_shift_invariance(u_r: &DMatrix<f64>, l: usize) -> Result<DMatrix<f64>> {
    let (rows, p) = (u_r.nrows(), u_r.ncols());
    if l == 0 || rows % l != 0 {
        return Err(Error::DimensionMismatch {
            operand: "observability basis",
            expected: format!("row count divisible by l = {l}"),
            found: format!("{rows} rows"),
        });
    }
    let s = rows / l;
    if s < 2 {
        return Err(Error::InvalidArgument(
            "shift invariance needs at least two block rows (s >= 2)".into(),
        ));
    }
    let top = u_r.view((0, 0), ((s - 1) * l, p)).into_owned();
    let bottom = u_r.view((l, 0), ((s - 1) * l, p)).into_owned();
    let (a_t, eff_rank) = lstsq(&top, &bottom)?;
    if eff_rank < p {
        return Err(Error::RankDeficient {
            context: "shift-invariance solve (system unobservable at window s-1)",
            rank: eff_rank,
            needed: p,
        });
    }
    Ok(a_t)
}

/// `C_T` is literally the first `l` rows of the observability basis.
pub fn extract_ct(u_r: &DMatrix<f64>, l: usize) -> DMatrix<f64> {
    u_r.rows(0, l).into_owned()
}

/// Least-squares estimates of the initial state and input matrices, given
/// `A_T` and `C_T`.
#[derive(Debug, Clone, PartialEq)]
pub struct BdFit {
    pub x_t0: DVector<f64>,
    pub b_t: DMatrix<f64>,
    pub d: DMatrix<f64>,
    /// Mean squared output residual of the fit.
    pub residual: f64,
    pub warning: Option<String>,
}

/// Fits `theta = [x_T(0); vec(B_T); vec(D)]` to the whole trajectory.
///
/// The output is linear in `theta`: block `k` of the regressor is
/// `[C_T A_T^k, sum_q u(q)^T (x) C_T A_T^{k-q-1}, u(k)^T (x) I_l]`, with
/// column-major `vec` and the standard Kronecker product. All-zero inputs
/// reduce the fit to the initial state, with `B_T` and `D` pinned to zero.
pub fn solve_bd_x0(traj: &Trajectory, a_t: &DMatrix<f64>, c_t: &DMatrix<f64>) -> Result<BdFit> {
    let p = a_t.nrows();
    if a_t.ncols() != p {
        return Err(Error::DimensionMismatch {
            operand: "A_T",
            expected: "square".into(),
            found: format!("{}x{}", a_t.nrows(), a_t.ncols()),
        });
    }
    if c_t.ncols() != p {
        return Err(Error::DimensionMismatch {
            operand: "C_T",
            expected: format!("{} columns", p),
            found: format!("{} columns", c_t.ncols()),
        });
    }
    let l = c_t.nrows();
    let n = traj.input_dim();
    let k_len = traj.len();
    if traj.output_dim() != l {
        return Err(Error::DimensionMismatch {
            operand: "trajectory outputs",
            expected: format!("{l} rows"),
            found: format!("{} rows", traj.output_dim()),
        });
    }

    let mut warning = None;
    let radius = linalg::spectral_radius(a_t);
    if radius > 1.05 {
        warning = Some(format!(
            "A_T spectral radius {radius:.3} > 1.05; regressor powers may overflow the fit"
        ));
    }

    let autonomous = traj.inputs.amax() == 0.0;
    let dim = if autonomous { p } else { p + p * n + l * n };
    if k_len * l < dim {
        return Err(Error::ShortTrajectory {
            needed: dim.div_ceil(l),
            got: k_len,
        });
    }

    let mut regressor = DMatrix::zeros(k_len * l, dim);
    let mut rhs = DMatrix::zeros(k_len * l, 1);
    // G_k = C_T A_T^k, advanced in place.
    let mut g = c_t.clone();
    // One l x p block per input component: Phi_k^{(j)} = sum_q u_j(q) C_T A_T^{k-q-1}.
    let mut phi: Vec<DMatrix<f64>> = if autonomous {
        Vec::new()
    } else {
        (0..n).map(|_| DMatrix::zeros(l, p)).collect()
    };
    for k in 0..k_len {
        regressor.view_mut((k * l, 0), (l, p)).copy_from(&g);
        if !autonomous {
            for (j, block) in phi.iter().enumerate() {
                regressor
                    .view_mut((k * l, p + j * p), (l, p))
                    .copy_from(block);
            }
            for j in 0..n {
                let uval = traj.inputs[(j, k)];
                if uval != 0.0 {
                    for i in 0..l {
                        regressor[(k * l + i, p + p * n + j * l + i)] = uval;
                    }
                }
            }
        }
        rhs.view_mut((k * l, 0), (l, 1))
            .copy_from(&traj.outputs.column(k));
        // Advance the recursions for step k + 1.
        if !autonomous {
            let uk = traj.inputs.column(k);
            for (j, block) in phi.iter_mut().enumerate() {
                let mut next = &*block * a_t;
                if uk[j] != 0.0 {
                    next += c_t * uk[j];
                }
                *block = next;
            }
        }
        g *= a_t;
    }

    let theta = solve_regression(&regressor, &rhs)?;
    let residual = (&regressor * &theta - &rhs).norm_squared() / k_len as f64;

    let x_t0 = DVector::from_column_slice(&theta.as_slice()[0..p]);
    let (b_t, d) = if autonomous {
        (DMatrix::zeros(p, n), DMatrix::zeros(l, n))
    } else {
        let mut b_t = DMatrix::zeros(p, n);
        for j in 0..n {
            for i in 0..p {
                b_t[(i, j)] = theta[(p + j * p + i, 0)];
            }
        }
        let mut d = DMatrix::zeros(l, n);
        for j in 0..n {
            for i in 0..l {
                d[(i, j)] = theta[(p + p * n + j * l + i, 0)];
            }
        }
        (b_t, d)
    };
    Ok(BdFit {
        x_t0,
        b_t,
        d,
        residual,
        warning,
    })
}

/// Normal equations when well conditioned, orthogonal factorization (SVD)
/// when the condition estimate exceeds 1e6.
fn solve_regression(m: &DMatrix<f64>, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let dim = m.ncols();
    let gram = m.transpose() * m;
    let gram_rhs = m.transpose() * rhs;
    let eig = gram.clone().symmetric_eigen();
    let lam_max = eig.eigenvalues.max();
    let lam_min = eig.eigenvalues.min();
    if lam_max <= 0.0 {
        return Err(Error::RankDeficient {
            context: "regressor for (x0, B_T, D); richer input needed",
            rank: 0,
            needed: dim,
        });
    }
    let cond_sq = if lam_min > 0.0 {
        lam_max / lam_min
    } else {
        f64::INFINITY
    };
    if cond_sq < 1e12 {
        if let Some(chol) = nalgebra::Cholesky::new(gram) {
            return Ok(chol.solve(&gram_rhs));
        }
    }
    let (theta, eff_rank) = lstsq(m, rhs)?;
    if eff_rank < dim {
        return Err(Error::RankDeficient {
            context: "regressor for (x0, B_T, D); richer input needed",
            rank: eff_rank,
            needed: dim,
        });
    }
    Ok(theta)
}

/// Everything the identification pipeline produces, in transformed
/// coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentifiedSystem {
    pub order: usize,
    pub a_t: DMatrix<f64>,
    pub c_t: DMatrix<f64>,
    pub b_t: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub x_t0: DVector<f64>,
    /// `C^+ C_T`, available when the true `C` was supplied.
    pub t_hat: Option<DMatrix<f64>>,
    /// Orthonormal basis of `range(O_s)`; the one-shot estimator consumes
    /// it directly.
    pub u_r: DMatrix<f64>,
    /// Descending singular values of `R22` (knee diagnostics).
    pub singular_values: DVector<f64>,
    pub order_low_confidence: bool,
    pub bd_residual: f64,
    pub warnings: Vec<String>,
}

/// Configuration of the end-to-end `identify` run.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentifyConfig {
    /// Window length; must exceed the (expected) order.
    pub s: usize,
    pub order: OrderPolicy,
    /// Known output matrix, enabling the similarity estimate.
    pub c: Option<DMatrix<f64>>,
}

/// Runs Hankel construction, RQ factorization, order selection, basis
/// extraction and the two least-squares stages.
pub fn identify(traj: &Trajectory, cfg: &IdentifyConfig) -> Result<IdentifiedSystem> {
    let l = traj.output_dim();
    let batch = build_hankel(traj, cfg.s)?;
    let factors = rq_factorize(&batch)?;
    let singular_values = r22_singular_values(&factors);
    let estimate = estimate_order(singular_values.as_slice(), cfg.order)?;
    let p = estimate.order;
    if p >= cfg.s {
        return Err(Error::InvalidArgument(format!(
            "window s = {} does not exceed the selected order {p}; rerun with a larger s",
            cfg.s
        )));
    }
    let u_r = extract_observability_basis(&factors, p)?;
    let a_t = solve_shift_invariance(&u_r, l)?;
    let c_t = extract_ct(&u_r, l);
    let bd = solve_bd_x0(traj, &a_t, &c_t)?;
    let t_hat = cfg.c.as_ref().map(|c| pinv(c) * &c_t);
    let mut warnings = Vec::new();
    if let Some(w) = factors.warning {
        warnings.push(w);
    }
    if let Some(w) = bd.warning {
        warnings.push(w);
    }
    Ok(IdentifiedSystem {
        order: p,
        a_t,
        c_t,
        b_t: bd.b_t,
        d: bd.d,
        x_t0: bd.x_t0,
        t_hat,
        u_r,
        singular_values,
        order_low_confidence: estimate.low_confidence,
        bd_residual: bd.residual,
        warnings,
    })
}

/// The de-transformed system matrices recovered through a known `C`.
#[derive(Debug, Clone, PartialEq)]
pub struct Detransformed {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub x0: DVector<f64>,
    pub t_hat: DMatrix<f64>,
}

/// Undoes the similarity transform using a known full-column-rank `C`.
///
/// Requires the identified order to equal the state dimension; reduced
/// orders keep their transformed coordinates (`A_T` is still similar to a
/// restriction of `A`, but no basis is available to undo `T`).
pub fn detransform(c_known: &DMatrix<f64>, est: &IdentifiedSystem) -> Result<Detransformed> {
    let n = c_known.ncols();
    if est.order != n {
        return Err(Error::Unsupported(format!(
            "de-transform undefined for reduced order {} != n = {n}; report the transformed system instead",
            est.order
        )));
    }
    let c_rank = linalg::rank(c_known);
    if c_rank < n {
        return Err(Error::RankDeficient {
            context: "known C (must have full column rank)",
            rank: c_rank,
            needed: n,
        });
    }
    let cond_ct = linalg::cond(&est.c_t);
    if cond_ct > 1e10 {
        return Err(Error::IllConditioned {
            context: "estimated C_T",
            cond: cond_ct,
        });
    }
    let t_hat = pinv(c_known) * &est.c_t;
    let t_inv = t_hat.clone().try_inverse().ok_or(Error::IllConditioned {
        context: "similarity estimate T",
        cond: f64::INFINITY,
    })?;
    Ok(Detransformed {
        a: &t_hat * &est.a_t * &t_inv,
        b: &t_hat * &est.b_t,
        d: est.d.clone(),
        x0: &t_hat * &est.x_t0,
        t_hat,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lti::{observability_matrix, simulate, StateSpaceSystem};
    use approx::assert_relative_eq;
    use nalgebra::{DMatrix, DVector};

    #[test]
    fn rq_scalar_example() {
        // U_m = [3, 4] with no output rows: R11 = 5, Q1 = [0.6, 0.8].
        let batch = HankelBatch {
            u_m: DMatrix::from_row_slice(1, 2, &[3.0, 4.0]),
            y_m: DMatrix::zeros(0, 2),
            s: 1,
            m: 2,
        };
        let f = rq_factorize(&batch).unwrap();
        assert_relative_eq!(f.r11[(0, 0)], 5.0, epsilon = 1e-12);
        assert_relative_eq!(f.q1[(0, 0)], 0.6, epsilon = 1e-12);
        assert_relative_eq!(f.q1[(0, 1)], 0.8, epsilon = 1e-12);
    }

    #[test]
    fn rq_orthonormal_rows_give_identity_r11() {
        let batch = HankelBatch {
            u_m: DMatrix::from_row_slice(
                2,
                4,
                &[0.5, 0.5, 0.5, 0.5, 0.5, -0.5, 0.5, -0.5],
            ),
            y_m: DMatrix::zeros(0, 4),
            s: 1,
            m: 4,
        };
        let f = rq_factorize(&batch).unwrap();
        assert_relative_eq!(f.r11, DMatrix::identity(2, 2), epsilon = 1e-12);
    }

    #[test]
    fn rq_reconstructs_stack() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let u_m = DMatrix::from_fn(2, 8, |_, _| rng.random::<f64>() - 0.5);
        let y_m = DMatrix::from_fn(2, 8, |_, _| rng.random::<f64>() - 0.5);
        let batch = HankelBatch {
            u_m: u_m.clone(),
            y_m: y_m.clone(),
            s: 1,
            m: 8,
        };
        let f = rq_factorize(&batch).unwrap();
        let rebuilt_u = &f.r11 * &f.q1;
        let rebuilt_y = &f.r21 * &f.q1 + &f.r22 * &f.q2;
        assert!((rebuilt_u - u_m).norm() < 1e-9);
        assert!((rebuilt_y - y_m).norm() < 1e-9);
        // Orthonormal rows.
        let qq = &f.q2 * f.q2.transpose();
        assert_relative_eq!(qq, DMatrix::identity(2, 2), epsilon = 1e-10);
    }

    #[test]
    fn order_knee_on_nine_decades() {
        let est = estimate_order(&[10.0, 8.0, 5.0, 1e-9, 1e-10], OrderPolicy::LargestGap).unwrap();
        assert_eq!(est.order, 3);
        assert!(!est.low_confidence);
    }

    #[test]
    fn order_fixed_passthrough() {
        let est = estimate_order(
            &[9.0, 7.0, 5.0, 3.0, 2.0, 1.0],
            OrderPolicy::Fixed { order: 5 },
        )
        .unwrap();
        assert_eq!(est.order, 5);
    }

    #[test]
    fn order_tie_flagged() {
        let est = estimate_order(&[1.0, 1.0, 1.0], OrderPolicy::LargestGap).unwrap();
        assert_eq!(est.order, 1);
        assert!(est.low_confidence);
    }

    #[test]
    fn order_all_zero_is_no_signal() {
        assert!(matches!(
            estimate_order(&[0.0, 0.0], OrderPolicy::LargestGap),
            Err(Error::NoSignal)
        ));
    }

    #[test]
    fn order_threshold_counts() {
        let est = estimate_order(
            &[10.0, 5.0, 1.0, 0.01],
            OrderPolicy::Threshold { rho: 0.05 },
        )
        .unwrap();
        assert_eq!(est.order, 3);
    }

    #[test]
    fn basis_from_diagonal_r22() {
        let factors = RQFactors {
            r11: DMatrix::zeros(0, 0),
            r21: DMatrix::zeros(3, 0),
            r22: DMatrix::from_diagonal(&DVector::from_vec(vec![5.0, 3.0, 0.0])),
            q1: DMatrix::zeros(0, 3),
            q2: DMatrix::identity(3, 3),
            input_rows: 0,
            warning: None,
        };
        let u_r = extract_observability_basis(&factors, 2).unwrap();
        let expected = DMatrix::from_row_slice(3, 2, &[1., 0., 0., 1., 0., 0.]);
        // Left singular vectors are canonical basis vectors up to sign.
        for c in 0..2 {
            let col = u_r.column(c);
            let exp = expected.column(c);
            let aligned = if col.dot(&exp) < 0.0 { -1.0 } else { 1.0 };
            assert_relative_eq!(DVector::from(col * aligned), DVector::from(exp), epsilon = 1e-12);
        }
        // Requesting more than the numerical rank fails and reports it.
        match extract_observability_basis(&factors, 3) {
            Err(Error::RankDeficient { rank, needed, .. }) => {
                assert_eq!(rank, 2);
                assert_eq!(needed, 3);
            }
            other => panic!("expected rank error, got {other:?}"),
        }
    }

    #[test]
    fn shift_invariance_recovers_spectrum() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, 0.2]));
        let sys = StateSpaceSystem::new(
            a.clone(),
            DMatrix::identity(2, 2),
            DMatrix::identity(2, 2),
            DMatrix::zeros(2, 2),
        )
        .unwrap();
        let obs = observability_matrix(&sys, 3);
        let a_t = solve_shift_invariance(&obs, 2).unwrap();
        assert_relative_eq!(a_t, a, epsilon = 1e-10);
    }

    #[test]
    fn shift_invariance_identity_basis() {
        let mut u_r = DMatrix::zeros(6, 2);
        for blk in 0..3 {
            u_r.view_mut((2 * blk, 0), (2, 2))
                .copy_from(&DMatrix::identity(2, 2));
        }
        let a_t = solve_shift_invariance(&u_r, 2).unwrap();
        assert_relative_eq!(a_t, DMatrix::identity(2, 2), epsilon = 1e-12);
    }

    #[test]
    fn shift_invariance_needs_two_blocks() {
        let u_r = DMatrix::identity(2, 2);
        assert!(solve_shift_invariance(&u_r, 2).is_err());
    }

    #[test]
    fn ct_is_first_rows() {
        let u_r = DMatrix::from_row_slice(4, 2, &[1., 2., 3., 4., 5., 6., 7., 8.]);
        let c_t = extract_ct(&u_r, 2);
        assert_eq!(c_t, DMatrix::from_row_slice(2, 2, &[1., 2., 3., 4.]));
    }

    #[test]
    fn bd_fit_autonomous_recovers_x0() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![0.9, 0.4]));
        let sys = StateSpaceSystem::new(
            a.clone(),
            DMatrix::zeros(2, 2),
            DMatrix::identity(2, 2),
            DMatrix::zeros(2, 2),
        )
        .unwrap();
        let x0 = DVector::from_vec(vec![1.0, -2.0]);
        let traj = simulate(&sys, &DMatrix::zeros(2, 10), &x0).unwrap();
        let fit = solve_bd_x0(&traj, &a, &DMatrix::identity(2, 2)).unwrap();
        assert_relative_eq!(fit.x_t0, x0, epsilon = 1e-10);
        assert_eq!(fit.b_t, DMatrix::zeros(2, 2));
        assert_eq!(fit.d, DMatrix::zeros(2, 2));
        assert!(fit.residual < 1e-18);
    }

    #[test]
    fn bd_fit_feedthrough_only() {
        // A = 0, B = 0, C = I, D = I: y(k) = u(k).
        let n = 2;
        let u = crate::lti::generate_input(
            &crate::lti::InputSpec {
                kind: crate::lti::InputKind::Gaussian,
                len: 12,
                seed: 3,
            },
            n,
        )
        .unwrap();
        let sys = StateSpaceSystem::new(
            DMatrix::zeros(n, n),
            DMatrix::zeros(n, n),
            DMatrix::identity(n, n),
            DMatrix::identity(n, n),
        )
        .unwrap();
        let traj = simulate(&sys, &u, &DVector::zeros(n)).unwrap();
        let fit = solve_bd_x0(&traj, &DMatrix::zeros(n, n), &DMatrix::identity(n, n)).unwrap();
        assert_relative_eq!(fit.d, DMatrix::identity(n, n), epsilon = 1e-10);
        assert!(fit.b_t.amax() < 1e-10);
    }

    #[test]
    fn detransform_identity_c() {
        // Feed an exact observability basis: T = I, so A comes back.
        let a = DMatrix::from_row_slice(2, 2, &[0.5, 0.1, 0.0, 0.3]);
        let sys = StateSpaceSystem::new(
            a.clone(),
            DMatrix::identity(2, 2),
            DMatrix::identity(2, 2),
            DMatrix::zeros(2, 2),
        )
        .unwrap();
        let obs = observability_matrix(&sys, 3);
        let a_t = solve_shift_invariance(&obs, 2).unwrap();
        let c_t = extract_ct(&obs, 2);
        let est = IdentifiedSystem {
            order: 2,
            a_t,
            c_t,
            b_t: DMatrix::identity(2, 2),
            d: DMatrix::zeros(2, 2),
            x_t0: DVector::zeros(2),
            t_hat: None,
            u_r: obs.clone(),
            singular_values: DVector::zeros(2),
            order_low_confidence: false,
            bd_residual: 0.0,
            warnings: vec![],
        };
        let det = detransform(&DMatrix::identity(2, 2), &est).unwrap();
        assert_relative_eq!(det.a, a, epsilon = 1e-8);

        // Singular C is rejected.
        let singular_c = DMatrix::from_row_slice(2, 2, &[1., 0., 1., 0.]);
        assert!(detransform(&singular_c, &est).is_err());
    }

    #[test]
    fn detransform_rejects_reduced_order() {
        let est = IdentifiedSystem {
            order: 1,
            a_t: DMatrix::from_element(1, 1, 0.5),
            c_t: DMatrix::from_element(2, 1, 1.0),
            b_t: DMatrix::zeros(1, 2),
            d: DMatrix::zeros(2, 2),
            x_t0: DVector::zeros(1),
            t_hat: None,
            u_r: DMatrix::identity(2, 1),
            singular_values: DVector::zeros(1),
            order_low_confidence: false,
            bd_residual: 0.0,
            warnings: vec![],
        };
        assert!(detransform(&DMatrix::identity(2, 2), &est).is_err());
    }
}
