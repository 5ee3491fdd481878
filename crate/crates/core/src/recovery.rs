//! Converts identified system matrices back into graph shift operators.
//!
//! Three routes are provided: spectral inversion when the scalar mappings
//! are known, a sparsest-graph program over the estimated eigenbasis when
//! they are not, and a one-shot estimator for the state graph that works
//! directly on the observability basis without forming `A_T`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{GraphClass, GraphClassConstraint, ShiftOperator};
use crate::linalg::{frob_dot, pinv, soft_threshold};
use crate::mapping::{check_bijective, invert_spectrum, Bijectivity, ScalarMapping};
use crate::spectral::{hard_zero_threshold, reconstruct_with_tol, spectral_decompose};

/// First-order solver knobs shared by the recovery programs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverOptions {
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    /// Initial step scale relative to the inverse Lipschitz estimate.
    #[serde(default = "default_step")]
    pub step: f64,
    /// Relative objective-change tolerance.
    #[serde(default = "default_tol")]
    pub tol: f64,
}

fn default_iterations() -> usize {
    50_000
}
fn default_step() -> f64 {
    1.0
}
fn default_tol() -> f64 {
    1e-9
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            iterations: default_iterations(),
            step: default_step(),
            tol: default_tol(),
        }
    }
}

impl SolverOptions {
    fn validate(&self) -> Result<()> {
        if self.tol <= 0.0 {
            return Err(Error::InvalidArgument("solver tol must be > 0".into()));
        }
        if self.step <= 0.0 {
            return Err(Error::InvalidArgument("solver step must be > 0".into()));
        }
        if self.iterations == 0 {
            return Err(Error::InvalidArgument(
                "solver needs at least one iteration".into(),
            ));
        }
        Ok(())
    }
}

/// Recovery route selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecoveryPath {
    KnownMapping,
    Sparsest,
    OneShot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecoveryConfig {
    pub path: RecoveryPath,
    /// The scalar mapping; required by the known-mapping route.
    #[serde(default)]
    pub mapping: Option<ScalarMapping>,
    pub class: GraphClassConstraint,
    /// Sparsity weight; used by the one-shot estimator only. `None` asks
    /// for the logarithmic sweep.
    #[serde(default)]
    pub mu: Option<f64>,
    #[serde(default)]
    pub solver: SolverOptions,
}

// ---------------------------------------------------------------------------
// Known scalar mappings: spectral inversion.
// ---------------------------------------------------------------------------

/// Inverts the scalar mapping on the spectrum of `m_hat` and reassembles
/// the shift operator in the estimated eigenbasis. Applies to the state
/// matrix and the input matrix alike.
pub fn recover_known_mapping(
    m_hat: &DMatrix<f64>,
    f: &ScalarMapping,
    constraint: &GraphClassConstraint,
) -> Result<ShiftOperator> {
    if let Some((lo, hi)) = f.domain() {
        if let Bijectivity::NotBijective { x1, y1, x2, y2 } = check_bijective(f, lo, hi)? {
            return Err(Error::NonBijective {
                lo,
                hi,
                x1,
                y1,
                x2,
                y2,
            });
        }
    }
    let dec = spectral_decompose(m_hat)?;
    let inv = invert_spectrum(f, &dec.eigvals)?;
    // Identification noise sits well above machine precision; the class
    // check is correspondingly looser than for synthetic round trips.
    reconstruct_with_tol(&dec.eigvecs, &inv.lambda_hat, constraint, 1e-5)
}

// ---------------------------------------------------------------------------
// Constraint-set projections shared by the first-order programs.
// ---------------------------------------------------------------------------

fn upper_indices(n: usize) -> Vec<(usize, usize)> {
    let mut idx = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            idx.push((i, j));
        }
    }
    idx
}

/// Projection onto the admissible set of graph matrices.
///
/// Symmetrizes, then works on the off-diagonal weights: adjacency matrices
/// keep nonnegative entries and a zero diagonal, combinatorial Laplacians
/// keep nonpositive off-diagonals with the diagonal rebuilt as the negated
/// row sum. A declared `scale` pins the total off-diagonal weight; the
/// rescaling is radial, so it excludes the all-zero matrix without
/// resurrecting entries a prox step has zeroed.
pub fn project_class(x: &DMatrix<f64>, constraint: &GraphClassConstraint) -> Result<DMatrix<f64>> {
    let n = x.nrows();
    let sym = (x + x.transpose()) * 0.5;
    let idx = upper_indices(n);
    let signed: DVector<f64> = match constraint.class {
        GraphClass::Adjacency => DVector::from_fn(idx.len(), |k, _| sym[idx[k]]),
        GraphClass::CombinatorialLaplacian => DVector::from_fn(idx.len(), |k, _| -sym[idx[k]]),
        GraphClass::NormalizedLaplacian => {
            return Err(Error::Unsupported(
                "first-order recovery over the normalized-Laplacian class is not supported; \
                 use the known-mapping route"
                    .into(),
            ))
        }
    };
    let mut weights = signed.map(|w| w.max(0.0));
    if let Some(total) = constraint.scale {
        if !(total > 0.0) {
            return Err(Error::InvalidArgument(
                "class scale must be positive".into(),
            ));
        }
        let sum = weights.sum();
        if sum > 0.0 {
            weights *= (total / 2.0) / sum;
        } else {
            // Everything died: fall back to the uniform point.
            let e = idx.len().max(1) as f64;
            weights = DVector::from_element(idx.len(), total / (2.0 * e));
        }
    }
    let mut out = DMatrix::zeros(n, n);
    for (k, &(i, j)) in idx.iter().enumerate() {
        let w = weights[k];
        match constraint.class {
            GraphClass::Adjacency => {
                out[(i, j)] = w;
                out[(j, i)] = w;
            }
            GraphClass::CombinatorialLaplacian => {
                out[(i, j)] = -w;
                out[(j, i)] = -w;
            }
            GraphClass::NormalizedLaplacian => unreachable!(),
        }
    }
    if constraint.class == GraphClass::CombinatorialLaplacian {
        for i in 0..n {
            let mut row = 0.0;
            for j in 0..n {
                if j != i {
                    row += -out[(i, j)];
                }
            }
            out[(i, i)] = row;
        }
    }
    Ok(out)
}

/// Projection onto the auxiliary set for `M = S A`.
///
/// A product of a symmetric class member with a commuting matrix function
/// is symmetric, so symmetry is enforced for every class; the combinatorial
/// Laplacian additionally forces zero row and column sums (`1^T M = 0.`).
pub fn project_commutant_aux(y: &DMatrix<f64>, class: GraphClass) -> DMatrix<f64> {
    let n = y.nrows();
    let sym = (y + y.transpose()) * 0.5;
    match class {
        GraphClass::CombinatorialLaplacian => {
            // Double centering: rows and columns of the symmetric part sum
            // to zero afterwards.
            let mut col_mean = vec![0.0f64; n];
            for j in 0..n {
                col_mean[j] = sym.column(j).sum() / n as f64;
            }
            let grand = col_mean.iter().sum::<f64>() / n as f64;
            DMatrix::from_fn(n, n, |i, j| sym[(i, j)] - col_mean[i] - col_mean[j] + grand)
        }
        _ => sym,
    }
}

pub(crate) fn l1_offdiag(s: &DMatrix<f64>) -> f64 {
    let n = s.nrows();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                acc += s[(i, j)].abs();
            }
        }
    }
    acc
}

fn soft_threshold_offdiag(s: &DMatrix<f64>, t: f64) -> DMatrix<f64> {
    let n = s.nrows();
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            s[(i, j)]
        } else {
            soft_threshold(s[(i, j)], t)
        }
    })
}

fn soft_threshold_offdiag_weighted(
    s: &DMatrix<f64>,
    t: f64,
    weights: &DVector<f64>,
    idx: &[(usize, usize)],
) -> DMatrix<f64> {
    let mut out = s.clone();
    for (k, &(i, j)) in idx.iter().enumerate() {
        let te = t * weights[k];
        out[(i, j)] = soft_threshold(s[(i, j)], te);
        out[(j, i)] = soft_threshold(s[(j, i)], te);
    }
    out
}

fn clamp_hard_zeros(m: &mut DMatrix<f64>) {
    let cutoff = hard_zero_threshold(m);
    for x in m.iter_mut() {
        if x.abs() < cutoff {
            *x = 0.0;
        }
    }
}

// ---------------------------------------------------------------------------
// One-shot state-graph estimator.
// ---------------------------------------------------------------------------

/// Output of the one-shot estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct OneShotResult {
    pub s_hat: ShiftOperator,
    /// The auxiliary variable standing in for `S A`.
    pub m_hat: DMatrix<f64>,
    /// Objective value after every accepted iterate; non-increasing.
    pub objective_trace: Vec<f64>,
    pub fit: f64,
    /// Energy of the fitted signal, `||U_Rr T^-1 S||_F^2`; the natural
    /// reference scale for judging whether `fit` is numerically zero.
    pub fit_scale: f64,
    pub l1: f64,
    pub iterations: usize,
    /// `||S A - M||_F` against a supplied state-matrix estimate.
    pub commutation_residual: Option<f64>,
}

struct QuadraticTerm {
    ptp: DMatrix<f64>,
    ptq: DMatrix<f64>,
    qtq: DMatrix<f64>,
    lipschitz: f64,
}

impl QuadraticTerm {
    fn new(p: &DMatrix<f64>, q: &DMatrix<f64>) -> Self {
        let ptp = p.transpose() * p;
        let ptq = p.transpose() * q;
        let qtq = q.transpose() * q;
        let n = ptp.nrows();
        // Power iteration on the joint quadratic form over (M, S).
        let mut vm = DMatrix::from_element(n, n, 1.0 / (n as f64));
        let mut vs = vm.clone();
        let mut lam = 0.0;
        for _ in 0..100 {
            let gm = &ptp * &vm - &ptq * &vs;
            let gs = &qtq * &vs - ptq.transpose() * &vm;
            let norm = (gm.norm_squared() + gs.norm_squared()).sqrt();
            if norm == 0.0 {
                break;
            }
            lam = norm / (vm.norm_squared() + vs.norm_squared()).sqrt();
            vm = gm / norm;
            vs = gs / norm;
        }
        QuadraticTerm {
            ptp,
            ptq,
            qtq,
            lipschitz: (2.0 * lam).max(f64::MIN_POSITIVE),
        }
    }

    fn fit(&self, s: &DMatrix<f64>, m: &DMatrix<f64>) -> f64 {
        (frob_dot(m, &(&self.ptp * m)) - 2.0 * frob_dot(m, &(&self.ptq * s))
            + frob_dot(s, &(&self.qtq * s)))
        .max(0.0)
    }

    fn grad(&self, s: &DMatrix<f64>, m: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        let grad_m = 2.0 * (&self.ptp * m - &self.ptq * s);
        let grad_s = 2.0 * (&self.qtq * s - self.ptq.transpose() * m);
        (grad_s, grad_m)
    }
}

/// Minimizes `||U_Rl T^-1 M - U_Rr T^-1 S||_F^2 + mu ||S||_1(offdiag)` over
/// the class set for `S` and the auxiliary set for `M` by projected
/// proximal gradient with backtracking; only improving steps are accepted,
/// so the logged objective trace is non-increasing by construction.
pub fn one_shot_state_graph(
    u_r: &DMatrix<f64>,
    l: usize,
    t_hat: &DMatrix<f64>,
    constraint: &GraphClassConstraint,
    mu: f64,
    solver: &SolverOptions,
    a_hat: Option<&DMatrix<f64>>,
) -> Result<OneShotResult> {
    solver.validate()?;
    if mu < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "sparsity weight mu must be nonnegative, got {mu}"
        )));
    }
    let (rows, p) = (u_r.nrows(), u_r.ncols());
    if l == 0 || rows % l != 0 || rows / l < 2 {
        return Err(Error::DimensionMismatch {
            operand: "observability basis",
            expected: format!("at least two blocks of {l} rows"),
            found: format!("{rows} rows"),
        });
    }
    if t_hat.nrows() != p || t_hat.ncols() != p {
        return Err(Error::DimensionMismatch {
            operand: "similarity estimate T",
            expected: format!("{p}x{p}"),
            found: format!("{}x{}", t_hat.nrows(), t_hat.ncols()),
        });
    }
    let s_blocks = rows / l;
    let t_inv = t_hat.clone().try_inverse().ok_or(Error::IllConditioned {
        context: "similarity estimate T",
        cond: f64::INFINITY,
    })?;
    let p_mat = u_r.rows(0, (s_blocks - 1) * l) * &t_inv;
    let q_mat = u_r.rows(l, (s_blocks - 1) * l) * &t_inv;
    let quad = QuadraticTerm::new(&p_mat, &q_mat);

    // The implicit transfer map P^+ Q plays the role of the state matrix:
    // M = transfer * S is the best-response auxiliary for a proposed S.
    let transfer = pinv(&p_mat) * &q_mat;

    // Zero initialization is the spec'd tie-break. A pinned scale makes
    // zero infeasible; there the iteration starts from the best of the
    // projected data directions +-Q^T P (a span member concentrated on the
    // true support for decreasing mappings) and the uniform point.
    let (mut s, mut m) = {
        let zero = DMatrix::zeros(p, p);
        if constraint.scale.is_none() {
            (
                project_class(&zero, constraint)?,
                project_commutant_aux(&zero, constraint.class),
            )
        } else {
            let data_dir = q_mat.transpose() * &p_mat;
            let mut best: Option<(f64, DMatrix<f64>, DMatrix<f64>)> = None;
            for cand in [zero.clone(), data_dir.clone(), -data_dir] {
                let s0 = project_class(&cand, constraint)?;
                let m0 = project_commutant_aux(&(&transfer * &s0), constraint.class);
                let obj = quad.fit(&s0, &m0) + mu * l1_offdiag(&s0);
                if best.as_ref().is_none_or(|(b, _, _)| obj < *b) {
                    best = Some((obj, s0, m0));
                }
            }
            let (_, s0, m0) = best.expect("candidate list is nonempty");
            (s0, m0)
        }
    };
    let mut fit = quad.fit(&s, &m);
    let mut objective = fit + mu * l1_offdiag(&s);
    let initial_objective = objective;
    // Numerically-zero fit for the unregularized problem; relative change
    // alone never triggers when the objective itself decays to zero.
    let absolute_floor = 1e-13 * initial_objective.max(quad.lipschitz * f64::EPSILON);
    // With a pinned scale the l1 term is (nearly) constant and must not
    // mask fit progress: convergence additionally requires the fit to be
    // numerically zero relative to the signal energy, or the iterate to
    // have stopped moving.
    let fit_zero = |s_now: &DMatrix<f64>, fit_now: f64| {
        fit_now <= 1e-11 * frob_dot(s_now, &(&quad.qtq * s_now)).max(f64::MIN_POSITIVE)
    };
    let mut trace = vec![objective];
    let base_step = solver.step / quad.lipschitz;
    let mut step = base_step;
    let mut iterations = 0;
    // A numerically-zero fit finishes the unregularized problem; with
    // mu > 0 the l1 cleanup along the zero-fit set still has work to do.
    let mut converged = objective <= absolute_floor || (mu == 0.0 && fit_zero(&s, fit));
    let mut last_step = step;
    // Ill-conditioned directions contract at 1 - (sigma_min/sigma_max)^2
    // per step; once fit progress over a whole window is negligible the
    // iterate has reached its numerical plateau. The window watches the
    // fit (a pinned scale keeps the l1 term constant) and the support
    // size: spurious entries live in near-null directions, so thresholding
    // them away barely moves the fit and must not be cut short.
    const PLATEAU_WINDOW: usize = 300;
    let mut fit_anchor = fit;
    let mut support_anchor = support_size(&s);
    let mut s_anchor = s.clone();
    // Per-entry proposal thresholds. Reweighting sharpens the l1 surrogate
    // toward the support count: uniform thresholds shrink true edges as
    // much as spurious ones and a pinned scale undoes both. Only the
    // proposals change; acceptance stays on the plain objective, keeping
    // the trace monotone.
    let idx = upper_indices(p);
    let mut weights = DVector::from_element(idx.len(), 1.0);
    let reweight = mu > 0.0 && constraint.scale.is_some();

    // Accelerated proximal gradient with a monotone safeguard: candidates
    // are taken only when they do not increase the objective, so the
    // logged trace is non-increasing by construction. A failed
    // extrapolated step falls back to the plain step before declaring the
    // point stationary.
    let mut prev_s = s.clone();
    let mut prev_m = m.clone();
    let mut momentum = 0.0f64;
    'outer: while iterations < solver.iterations && !converged {
        iterations += 1;
        for attempt in 0..2 {
            let (y_s, y_m) = if attempt == 0 && momentum > 0.0 {
                (&s + (&s - &prev_s) * momentum, &m + (&m - &prev_m) * momentum)
            } else {
                (s.clone(), m.clone())
            };
            let (grad_s, grad_m) = quad.grad(&y_s, &y_m);
            for _ in 0..60 {
                let shifted = &y_s - step * &grad_s;
                let proposal = if reweight {
                    soft_threshold_offdiag_weighted(&shifted, step * mu, &weights, &idx)
                } else {
                    soft_threshold_offdiag(&shifted, step * mu)
                };
                let cand_s = project_class(&proposal, constraint)?;
                // Two auxiliary candidates: the gradient step, and the
                // projected best response to the proposed S (alternating
                // minimization); a gradient-lagged M would otherwise veto
                // moves along the zero-fit set.
                let mut cand_m = project_commutant_aux(&(&y_m - step * &grad_m), constraint.class);
                let mut cand_fit = quad.fit(&cand_s, &cand_m);
                let alt_m = project_commutant_aux(&(&transfer * &cand_s), constraint.class);
                let alt_fit = quad.fit(&cand_s, &alt_m);
                if alt_fit < cand_fit {
                    cand_m = alt_m;
                    cand_fit = alt_fit;
                }
                let cand_obj = cand_fit + mu * l1_offdiag(&cand_s);
                if cand_obj <= objective {
                    let change = objective - cand_obj;
                    let movement = (&cand_s - &s).norm() + (&cand_m - &m).norm();
                    let stalled =
                        movement <= 1e-9 * (s.norm() + m.norm() + 1.0);
                    prev_s = std::mem::replace(&mut s, cand_s);
                    prev_m = std::mem::replace(&mut m, cand_m);
                    fit = cand_fit;
                    objective = cand_obj;
                    trace.push(objective);
                    last_step = step;
                    step = (step * 1.2).min(base_step * 4.0);
                    momentum = if attempt == 0 {
                        (momentum + 0.3).min(0.95)
                    } else {
                        0.3
                    };
                    let rel_change = change <= solver.tol * objective.max(1e-300);
                    if objective <= absolute_floor
                        || (mu == 0.0 && fit_zero(&s, fit))
                        || (rel_change && (mu == 0.0 || stalled))
                    {
                        converged = true;
                    }
                    if iterations % PLATEAU_WINDOW == 0 {
                        let support_now = support_size(&s);
                        let moved = (&s - &s_anchor).norm();
                        if fit_anchor - fit <= 1e-4 * fit.max(absolute_floor)
                            && support_now == support_anchor
                            && moved <= 1e-7 * s.norm().max(1e-30)
                        {
                            converged = true;
                        }
                        fit_anchor = fit;
                        support_anchor = support_now;
                        s_anchor = s.clone();
                        if reweight && !converged {
                            let peak = idx
                                .iter()
                                .map(|&(i, j)| s[(i, j)].abs())
                                .fold(0.0f64, f64::max);
                            if peak > 0.0 {
                                for (k, &(i, j)) in idx.iter().enumerate() {
                                    weights[k] = 1.0 / (s[(i, j)].abs() / peak + 1e-3);
                                }
                                let mean = weights.sum() / weights.len() as f64;
                                weights /= mean;
                            }
                        }
                    }
                    continue 'outer;
                }
                step *= 0.5;
            }
            momentum = 0.0;
            step = base_step;
        }
        // Neither the extrapolated nor the plain step improved at any
        // scale: stationary point for this geometry.
        converged = true;
    }
    if !converged {
        return Err(Error::NonConvergence {
            iterations,
            objective,
            last_step,
        });
    }

    let mut s_final = s.clone();
    clamp_hard_zeros(&mut s_final);
    constraint.validate(&s_final, 1e-5)?;
    let fit_scale = frob_dot(&s, &(&quad.qtq * &s)).max(0.0);
    let l1 = l1_offdiag(&s);
    let commutation_residual = a_hat.map(|a| (&s_final * a - &m).norm());
    Ok(OneShotResult {
        s_hat: ShiftOperator {
            matrix: s_final,
            class: constraint.class,
        },
        m_hat: m,
        objective_trace: trace,
        fit,
        fit_scale,
        l1,
        iterations,
        commutation_residual,
    })
}

/// One sweep candidate: the sparsity weight, the solution's off-diagonal
/// support size and its data-fit term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub mu: f64,
    pub support_size: usize,
    pub fit: f64,
    pub converged: bool,
}

#[derive(Debug)]
pub struct SweepOutcome {
    pub result: OneShotResult,
    pub chosen_mu: f64,
    pub entries: Vec<SweepEntry>,
}

fn support_size(m: &DMatrix<f64>) -> usize {
    crate::graph::offdiag_support(m, 1e-6).len()
}

/// Logarithmic sweep over ten sparsity weights spanning
/// `[1e-4, 1e2] * ||U_{R,r}||_F`; picks the sparsest solution whose data
/// fit stays within 5% of the unregularized fit. The cap carries an
/// absolute floor of 1e-6 times the signal energy: on exact data every
/// candidate fit is numerically zero and differs only by convergence
/// depth, while a structurally wrong support misses by orders of magnitude
/// more.
pub fn one_shot_sweep(
    u_r: &DMatrix<f64>,
    l: usize,
    t_hat: &DMatrix<f64>,
    constraint: &GraphClassConstraint,
    solver: &SolverOptions,
    a_hat: Option<&DMatrix<f64>>,
) -> Result<SweepOutcome> {
    let s_blocks = u_r.nrows() / l.max(1);
    let u_rr_norm = if s_blocks >= 2 {
        u_r.rows(l, (s_blocks - 1) * l).norm()
    } else {
        1.0
    };
    let base = one_shot_state_graph(u_r, l, t_hat, constraint, 0.0, solver, a_hat)?;
    let fit0 = base.fit;
    let fit_cap = fit0 * 1.05 + 1e-6 * base.fit_scale;

    let mut entries = vec![SweepEntry {
        mu: 0.0,
        support_size: support_size(&base.s_hat.matrix),
        fit: fit0,
        converged: true,
    }];
    let mut best = base;
    let mut best_mu = 0.0;
    let mut best_key = (entries[0].support_size, fit0);

    let lo = 1e-4f64.ln();
    let hi = 1e2f64.ln();
    for i in 0..10 {
        let mu = (lo + (hi - lo) * i as f64 / 9.0).exp() * u_rr_norm;
        match one_shot_state_graph(u_r, l, t_hat, constraint, mu, solver, a_hat) {
            Ok(res) => {
                let entry = SweepEntry {
                    mu,
                    support_size: support_size(&res.s_hat.matrix),
                    fit: res.fit,
                    converged: true,
                };
                if entry.fit <= fit_cap {
                    let key = (entry.support_size, entry.fit);
                    if key.0 < best_key.0 || (key.0 == best_key.0 && key.1 < best_key.1) {
                        best = res;
                        best_mu = mu;
                        best_key = key;
                    }
                }
                entries.push(entry);
            }
            Err(Error::NonConvergence { objective, .. }) => {
                entries.push(SweepEntry {
                    mu,
                    support_size: usize::MAX,
                    fit: objective,
                    converged: false,
                });
            }
            Err(e) => return Err(e),
        }
    }
    Ok(SweepOutcome {
        result: best,
        chosen_mu: best_mu,
        entries,
    })
}

// ---------------------------------------------------------------------------
// Sparsest graph over a known eigenbasis.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct SparsestResult {
    pub shift: ShiftOperator,
    pub l1_value: f64,
    /// Final distance between the class iterate and the eigenbasis span.
    pub range_residual: f64,
    pub iterations: usize,
}

/// Retrieves a sparse class member diagonalized by `u_hat` by splitting
/// the problem between the eigenvalue vector and a class-set copy (ADMM):
/// the eigenvalue update is a closed-form projection onto the span, the
/// matrix update is a weighted l1 prox followed by the class projection.
///
/// Reweighting rounds sharpen the l1 surrogate toward the l0 objective;
/// this matters for Laplacian classes, where a pinned trace makes the
/// plain l1 value constant over the feasible set.
pub fn recover_sparsest(
    u_hat: &DMatrix<f64>,
    constraint: &GraphClassConstraint,
    solver: &SolverOptions,
) -> Result<SparsestResult> {
    solver.validate()?;
    let n = u_hat.nrows();
    if u_hat.ncols() != n {
        return Err(Error::DimensionMismatch {
            operand: "eigenbasis",
            expected: "square matrix".into(),
            found: format!("{}x{}", u_hat.nrows(), u_hat.ncols()),
        });
    }
    let u_inv = u_hat.clone().try_inverse().ok_or(Error::RankDeficient {
        context: "eigenbasis (must be invertible)",
        rank: crate::linalg::rank(u_hat),
        needed: n,
    })?;
    // Rank-one building blocks of S(omega) = sum_k omega_k u_k v_k^T where
    // v_k^T is the k-th row of U^{-1}; omega updates are least squares on
    // the flattened blocks.
    let mut basis = DMatrix::zeros(n * n, n);
    for k in 0..n {
        let outer = u_hat.column(k) * u_inv.row(k);
        for (idx, val) in outer.iter().enumerate() {
            basis[(idx, k)] = *val;
        }
    }
    let basis_pinv = pinv(&basis);

    let assemble = |omega: &DVector<f64>| -> DMatrix<f64> {
        let flat = &basis * omega;
        DMatrix::from_column_slice(n, n, flat.as_slice())
    };

    let idx = upper_indices(n);
    let e_count = idx.len().max(1);
    // Threshold roughly a quarter of the mean feasible weight; without a
    // scale pin the unit threshold drives the iterates to the admissible
    // zero matrix.
    let base_threshold = match constraint.scale {
        Some(total) => 0.25 * (total / 2.0) / e_count as f64,
        None => 1.0,
    };

    // Generic deterministic start: an index ramp in the eigenvalue vector
    // breaks the symmetry of vertex-transitive spans; a tiny index tilt in
    // the weights resolves exact ties.
    let mut omega = DVector::from_fn(n, |k, _| k as f64 / n as f64);
    let mut x = project_class(&assemble(&omega), constraint)?;
    let mut dual = DMatrix::zeros(n, n);
    let mut weights =
        DVector::from_fn(e_count, |k, _| 1.0 + 1e-9 * (k as f64) / e_count as f64);

    let rounds = 5usize;
    let inner_cap = (solver.iterations / rounds).clamp(200, 4000);
    let mut iterations = 0;
    let mut primal_res = f64::INFINITY;
    for _ in 0..rounds {
        for _ in 0..inner_cap {
            iterations += 1;
            let target = &x - &dual;
            let flat = DVector::from_column_slice(target.as_slice());
            omega = &basis_pinv * flat;
            let s_omega = assemble(&omega);
            let v = &s_omega + &dual;
            let mut thresholded = (&v + v.transpose()) * 0.5;
            for (k, &(i, j)) in idx.iter().enumerate() {
                let t = base_threshold * weights[k];
                let w = soft_threshold(thresholded[(i, j)], t);
                thresholded[(i, j)] = w;
                thresholded[(j, i)] = w;
            }
            let x_next = project_class(&thresholded, constraint)?;
            let dual_res = (&x_next - &x).norm();
            x = x_next;
            dual += &s_omega - &x;
            primal_res = (&s_omega - &x).norm();
            let scale = x.norm().max(1.0);
            if primal_res <= solver.tol.max(1e-12) * scale
                && dual_res <= solver.tol.max(1e-12) * scale
            {
                break;
            }
        }
        // Reweight toward the l0 count: small surviving entries get large
        // weights next round.
        let peak = idx
            .iter()
            .map(|&(i, j)| x[(i, j)].abs())
            .fold(0.0f64, f64::max);
        if peak == 0.0 {
            break;
        }
        for (k, &(i, j)) in idx.iter().enumerate() {
            weights[k] = 1.0 / (x[(i, j)].abs() / peak + 1e-3)
                + 1e-9 * (k as f64) / e_count as f64;
        }
    }

    let mut s_final = assemble(&omega);
    // The class iterate carries the meaningful magnitude; an all-zero class
    // iterate means the whole solution is numeric residue.
    if x.amax() == 0.0 {
        s_final.fill(0.0);
    } else {
        let cutoff = 1e-8 * x.amax();
        for v in s_final.iter_mut() {
            if v.abs() < cutoff {
                *v = 0.0;
            }
        }
    }
    clamp_hard_zeros(&mut s_final);
    let feas_tol = 1e-6 * s_final.norm().max(1.0);
    if primal_res > feas_tol {
        return Err(Error::NonConvergence {
            iterations,
            objective: l1_offdiag(&s_final),
            last_step: primal_res,
        });
    }
    if let Err(e) = constraint.validate(&s_final, 1e-6) {
        if constraint.scale.is_some() {
            return Err(e);
        }
        // Without a scale pin the zero matrix is admissible; anything else
        // failing validation is a genuine infeasibility.
        if s_final.amax() > 0.0 {
            return Err(e);
        }
    }
    let l1_value = l1_offdiag(&s_final);
    Ok(SparsestResult {
        shift: ShiftOperator {
            matrix: s_final,
            class: constraint.class,
        },
        l1_value,
        range_residual: primal_res,
        iterations,
    })
}

// ---------------------------------------------------------------------------
// Commutation diagnostic.
// ---------------------------------------------------------------------------

/// Normalized commutator magnitude `||SA - AS||_F / (||S|| ||A|| + eps)`.
pub fn verify_commutation(s: &DMatrix<f64>, a: &DMatrix<f64>) -> f64 {
    let num = (s * a - a * s).norm();
    num / (s.norm() * a.norm() + 1e-30)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_shift, random_graph, GraphFamily};
    use crate::mapping::apply_matrix_function;
    use approx::assert_relative_eq;

    fn laplacian_constraint() -> GraphClassConstraint {
        GraphClassConstraint::new(GraphClass::CombinatorialLaplacian)
    }

    fn path3_laplacian() -> DMatrix<f64> {
        DMatrix::from_row_slice(3, 3, &[1., -1., 0., -1., 2., -1., 0., -1., 1.])
    }

    #[test]
    fn known_mapping_identity_returns_input() {
        let l = path3_laplacian();
        let s = recover_known_mapping(&l, &ScalarMapping::identity(), &laplacian_constraint())
            .unwrap();
        assert_relative_eq!(s.matrix, l, epsilon = 1e-10);
    }

    #[test]
    fn known_mapping_heat_round_trip() {
        let l = path3_laplacian();
        let f = ScalarMapping::heat(1.0, 0.5);
        let a = apply_matrix_function(&f, &l).unwrap();
        let s = recover_known_mapping(&a, &f, &laplacian_constraint()).unwrap();
        assert_relative_eq!(s.matrix, l, epsilon = 1e-8);
    }

    #[test]
    fn known_mapping_rejects_nonbijective_before_decomposition() {
        let f = ScalarMapping::polynomial(vec![0.0, 0.0, 1.0], -1.0, 1.0);
        let err = recover_known_mapping(&path3_laplacian(), &f, &laplacian_constraint());
        assert!(matches!(err, Err(Error::NonBijective { .. })));
    }

    #[test]
    fn commutation_of_matrix_function_vanishes() {
        let l = path3_laplacian();
        let a = apply_matrix_function(&ScalarMapping::heat(0.9, 0.7), &l).unwrap();
        assert!(verify_commutation(&l, &a) < 1e-10);
    }

    #[test]
    fn commutation_hand_example() {
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0]);
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        // SA - AS = [[0, -1], [0, 0]]: Frobenius norm 1.
        let expected = 1.0 / (s.norm() * a.norm() + 1e-30);
        assert_relative_eq!(verify_commutation(&s, &a), expected, epsilon = 1e-12);
        assert_eq!(verify_commutation(&DMatrix::zeros(2, 2), &DMatrix::zeros(2, 2)), 0.0);
    }

    #[test]
    fn class_projection_is_idempotent_and_feasible() {
        let raw = DMatrix::from_row_slice(3, 3, &[0.3, -0.7, 0.2, 0.1, 0.0, -0.4, 0.9, 1.2, -0.5]);
        let c = laplacian_constraint();
        let p1 = project_class(&raw, &c).unwrap();
        let p2 = project_class(&p1, &c).unwrap();
        assert_relative_eq!(p1, p2, epsilon = 1e-12);
        c.validate(&p1, 1e-10).unwrap();
    }

    #[test]
    fn commutant_projection_centers_laplacian_aux() {
        let raw = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let m = project_commutant_aux(&raw, GraphClass::CombinatorialLaplacian);
        assert_relative_eq!((&m - m.transpose()).norm(), 0.0, epsilon = 1e-12);
        let ones = DVector::from_element(2, 1.0);
        assert!((m.transpose() * &ones).norm() < 1e-12);
        assert!((&m * ones).norm() < 1e-12);
    }

    #[test]
    fn sparsest_identity_basis_adjacency_is_zero() {
        // Only diagonal matrices live in the span; a zero diagonal forces 0.
        let res = recover_sparsest(
            &DMatrix::identity(3, 3),
            &GraphClassConstraint::new(GraphClass::Adjacency),
            &SolverOptions::default(),
        )
        .unwrap();
        assert_eq!(res.shift.matrix, DMatrix::zeros(3, 3));
    }

    #[test]
    fn sparsest_ring_is_feasible_with_no_more_weight_than_truth() {
        // The ring-4 eigenbasis also diagonalizes the two-diagonals
        // matching (a strictly sparser Laplacian), so the exact support is
        // not identifiable here; feasibility and the l1 certificate are.
        let g = random_graph(GraphFamily::Ring, 4, 0).unwrap();
        let l_true = build_shift(&g, &laplacian_constraint()).unwrap().matrix;
        let dec = spectral_decompose(&l_true).unwrap();
        let res =
            recover_sparsest(&dec.eigvecs, &laplacian_constraint(), &SolverOptions::default())
                .unwrap();
        let est_support = crate::graph::offdiag_support(&res.shift.matrix, 1e-5);
        let true_support = crate::graph::offdiag_support(&l_true, 1e-5);
        assert!(
            est_support.is_subset(&true_support),
            "support {est_support:?} not within ring {true_support:?}"
        );
        assert!(res.l1_value <= l1_offdiag(&l_true) + 1e-6);
        assert!(res.range_residual < 1e-6);
    }

    #[test]
    fn sparsest_recovers_path4_support_with_scale_pin() {
        let g = random_graph(GraphFamily::Path, 4, 0).unwrap();
        let l_true = build_shift(&g, &laplacian_constraint()).unwrap().matrix;
        let dec = spectral_decompose(&l_true).unwrap();
        let constraint = laplacian_constraint().with_scale(l1_offdiag(&l_true));
        let res = recover_sparsest(&dec.eigvecs, &constraint, &SolverOptions::default()).unwrap();
        let est_support = crate::graph::offdiag_support(&res.shift.matrix, 1e-4);
        let true_support = crate::graph::offdiag_support(&l_true, 1e-4);
        assert_eq!(est_support, true_support, "S = {}", res.shift.matrix);
        assert!(res.l1_value <= l1_offdiag(&l_true) + 1e-6);
        assert!(res.range_residual < 1e-6);
    }

    #[test]
    fn sparsest_infeasible_symmetry_errors() {
        // Invertible but far from normal: no symmetric matrix shares this
        // eigenbasis (other than via a zero eigenvalue vector, excluded by
        // the scale pin).
        let u = DMatrix::from_row_slice(3, 3, &[1.0, 1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0]);
        let constraint = laplacian_constraint().with_scale(4.0);
        let mut opts = SolverOptions::default();
        opts.iterations = 3000;
        let res = recover_sparsest(&u, &constraint, &opts);
        assert!(res.is_err());
    }

    #[test]
    fn one_shot_degenerate_identity_returns_zero() {
        // U_Rl = U_Rr = stacked identities (A = I): objective is zero at the
        // zero-initialized iterate and the solver stops there.
        let mut u_r = DMatrix::zeros(6, 2);
        for b in 0..3 {
            u_r.view_mut((2 * b, 0), (2, 2))
                .copy_from(&DMatrix::identity(2, 2));
        }
        let res = one_shot_state_graph(
            &u_r,
            2,
            &DMatrix::identity(2, 2),
            &laplacian_constraint(),
            0.0,
            &SolverOptions::default(),
            None,
        )
        .unwrap();
        assert_eq!(res.s_hat.matrix, DMatrix::zeros(2, 2));
        assert!(res.fit < 1e-20);
    }

    #[test]
    fn one_shot_large_mu_empties_laplacian() {
        let l_true = path3_laplacian();
        let f = ScalarMapping::heat(0.9, 0.6);
        let a = apply_matrix_function(&f, &l_true).unwrap();
        let sys = crate::lti::StateSpaceSystem::new(
            a,
            DMatrix::zeros(3, 3),
            DMatrix::identity(3, 3),
            DMatrix::zeros(3, 3),
        )
        .unwrap();
        let x0 = DVector::from_vec(vec![1.0, -0.4, 0.25]);
        let traj = crate::lti::simulate(&sys, &DMatrix::zeros(3, 30), &x0).unwrap();
        let batch = crate::hankel::build_hankel(&traj, 4).unwrap();
        let factors = crate::subspace::rq_factorize(&batch).unwrap();
        let u_r = crate::subspace::extract_observability_basis(&factors, 3).unwrap();
        let t_hat = crate::subspace::extract_ct(&u_r, 3);
        let res = one_shot_state_graph(
            &u_r,
            3,
            &t_hat,
            &laplacian_constraint(),
            1e6 * u_r.norm(),
            &SolverOptions::default(),
            None,
        )
        .unwrap();
        assert_eq!(res.s_hat.matrix, DMatrix::zeros(3, 3));
    }

    #[test]
    fn one_shot_rejects_negative_mu() {
        let u_r = DMatrix::identity(4, 2);
        let res = one_shot_state_graph(
            &u_r,
            2,
            &DMatrix::identity(2, 2),
            &laplacian_constraint(),
            -1.0,
            &SolverOptions::default(),
            None,
        );
        assert!(matches!(res, Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn one_shot_trace_is_monotone() {
        let l_true = path3_laplacian();
        let f = ScalarMapping::heat(0.9, 0.6);
        let a = apply_matrix_function(&f, &l_true).unwrap();
        let sys = crate::lti::StateSpaceSystem::new(
            a,
            DMatrix::zeros(3, 3),
            DMatrix::identity(3, 3),
            DMatrix::zeros(3, 3),
        )
        .unwrap();
        let x0 = DVector::from_vec(vec![0.9, -0.2, 0.55]);
        let traj = crate::lti::simulate(&sys, &DMatrix::zeros(3, 30), &x0).unwrap();
        let batch = crate::hankel::build_hankel(&traj, 4).unwrap();
        let factors = crate::subspace::rq_factorize(&batch).unwrap();
        let u_r = crate::subspace::extract_observability_basis(&factors, 3).unwrap();
        let t_hat = crate::subspace::extract_ct(&u_r, 3);
        let constraint = laplacian_constraint().with_scale(4.0);
        let res = one_shot_state_graph(
            &u_r,
            3,
            &t_hat,
            &constraint,
            0.05,
            &SolverOptions::default(),
            None,
        )
        .unwrap();
        for w in res.objective_trace.windows(2) {
            assert!(w[1] <= w[0], "objective increased: {} -> {}", w[0], w[1]);
        }
    }
}
