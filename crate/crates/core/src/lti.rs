//! State-space simulation of the network process and the structural tests
//! (reachability, observability, minimality) that gate identification.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{krylov_blocks, rank_threshold};

/// The quadruple `(A, B, C, D)` of `x(k+1) = A x(k) + B u(k)`,
/// `y(k) = C x(k) + D u(k)`.
///
/// Inputs live on the same n-node graph as the state, so `B` and `D` have
/// `n` columns.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpaceSystem {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
}

impl StateSpaceSystem {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>, d: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::DimensionMismatch {
                operand: "A",
                expected: "square".into(),
                found: format!("{}x{}", a.nrows(), a.ncols()),
            });
        }
        if b.nrows() != n || b.ncols() != n {
            return Err(Error::DimensionMismatch {
                operand: "B",
                expected: format!("{n}x{n}"),
                found: format!("{}x{}", b.nrows(), b.ncols()),
            });
        }
        if c.ncols() != n {
            return Err(Error::DimensionMismatch {
                operand: "C",
                expected: format!("lx{n}"),
                found: format!("{}x{}", c.nrows(), c.ncols()),
            });
        }
        if d.nrows() != c.nrows() || d.ncols() != n {
            return Err(Error::DimensionMismatch {
                operand: "D",
                expected: format!("{}x{}", c.nrows(), n),
                found: format!("{}x{}", d.nrows(), d.ncols()),
            });
        }
        Ok(StateSpaceSystem { a, b, c, d })
    }

    /// State (and input) dimension.
    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    /// Output dimension.
    pub fn l(&self) -> usize {
        self.c.nrows()
    }
}

/// Input/output record of one simulation; states are kept when produced by
/// the simulator and serve as ground truth for the data-equation oracles.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// `n x K`, one column per time step.
    pub inputs: DMatrix<f64>,
    /// `l x K`.
    pub outputs: DMatrix<f64>,
    /// `n x K`, simulation-only ground truth.
    pub states: Option<DMatrix<f64>>,
    pub x0: DVector<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.outputs.nrows()
    }
}

/// Runs the state recursion for every column of `u`.
pub fn simulate(sys: &StateSpaceSystem, u: &DMatrix<f64>, x0: &DVector<f64>) -> Result<Trajectory> {
    let n = sys.n();
    let l = sys.l();
    if u.nrows() != n {
        return Err(Error::DimensionMismatch {
            operand: "input matrix",
            expected: format!("{n} rows"),
            found: format!("{} rows", u.nrows()),
        });
    }
    if x0.len() != n {
        return Err(Error::DimensionMismatch {
            operand: "initial state",
            expected: format!("length {n}"),
            found: format!("length {}", x0.len()),
        });
    }
    let k_len = u.ncols();
    if k_len == 0 {
        return Err(Error::ShortTrajectory { needed: 1, got: 0 });
    }
    let mut states = DMatrix::zeros(n, k_len);
    let mut outputs = DMatrix::zeros(l, k_len);
    let mut x = x0.clone();
    for k in 0..k_len {
        states.set_column(k, &x);
        let uk = u.column(k);
        let y = &sys.c * &x + &sys.d * uk;
        outputs.set_column(k, &y);
        x = &sys.a * &x + &sys.b * uk;
    }
    Ok(Trajectory {
        inputs: u.clone(),
        outputs,
        states: Some(states),
        x0: x0.clone(),
    })
}

/// `[B, AB, ..., A^{s-1} B]`.
pub fn controllability_matrix(sys: &StateSpaceSystem, s: usize) -> DMatrix<f64> {
    assert!(s >= 1, "controllability window must be at least 1");
    let blocks = krylov_blocks(&sys.a, &sys.b, s);
    let n = sys.n();
    let mut out = DMatrix::zeros(n, s * n);
    for (k, blk) in blocks.iter().enumerate() {
        out.view_mut((0, k * n), (n, n)).copy_from(blk);
    }
    out
}

/// `[C; CA; ...; C A^{s-1}]`.
pub fn observability_matrix(sys: &StateSpaceSystem, s: usize) -> DMatrix<f64> {
    assert!(s >= 1, "observability window must be at least 1");
    let blocks = krylov_blocks(&sys.a.transpose(), &sys.c.transpose(), s);
    let n = sys.n();
    let l = sys.l();
    let mut out = DMatrix::zeros(s * l, n);
    for (k, blk) in blocks.iter().enumerate() {
        out.view_mut((k * l, 0), (l, n)).copy_from(&blk.transpose());
    }
    out
}

/// Verdict of the minimality test, with the numeric ranks that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Minimality {
    Minimal,
    Unreachable,
    Unobservable,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinimalityReport {
    pub verdict: Minimality,
    pub reach_rank: usize,
    pub obs_rank: usize,
}

fn sv_rank(m: &DMatrix<f64>) -> usize {
    let sv = m.clone().singular_values();
    let sigma_max = sv.max();
    if sigma_max == 0.0 {
        return 0;
    }
    let tol = rank_threshold(m.nrows(), m.ncols(), sigma_max);
    sv.iter().filter(|&&s| s > tol).count()
}

/// Reachability and observability ranks at window `s = n`.
pub fn is_minimal(sys: &StateSpaceSystem) -> MinimalityReport {
    let n = sys.n();
    let reach_rank = sv_rank(&controllability_matrix(sys, n));
    let obs_rank = sv_rank(&observability_matrix(sys, n));
    let verdict = match (reach_rank == n, obs_rank == n) {
        (true, true) => Minimality::Minimal,
        (false, true) => Minimality::Unreachable,
        (true, false) => Minimality::Unobservable,
        (false, false) => Minimality::Both,
    };
    MinimalityReport {
        verdict,
        reach_rank,
        obs_rank,
    }
}

/// Block lower-triangular impulse-response matrix with `D` on the diagonal
/// and `C A^{j-1} B` on the j-th sub-diagonal.
pub fn markov_toeplitz(sys: &StateSpaceSystem, s: usize) -> DMatrix<f64> {
    assert!(s >= 1, "toeplitz window must be at least 1");
    let n = sys.n();
    let l = sys.l();
    // Markov parameters D, CB, CAB, ..., C A^{s-2} B.
    let mut params = Vec::with_capacity(s);
    params.push(sys.d.clone());
    if s > 1 {
        let obs_blocks = krylov_blocks(&sys.a.transpose(), &sys.c.transpose(), s - 1);
        for blk in &obs_blocks {
            params.push(blk.transpose() * &sys.b);
        }
    }
    let mut t = DMatrix::zeros(s * l, s * n);
    for row in 0..s {
        for col in 0..=row {
            t.view_mut((row * l, col * n), (l, n))
                .copy_from(&params[row - col]);
        }
    }
    t
}

/// Excitation signal families for the synthetic experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InputKind {
    /// Piecewise-constant values drawn from `{-1, +1}`, held for `hold`
    /// consecutive steps.
    PiecewiseConstantBipolar { hold: usize },
    Gaussian,
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputSpec {
    pub kind: InputKind,
    pub len: usize,
    pub seed: u64,
}

/// Draws the `n x K` excitation described by `spec`; reproducible per seed.
pub fn generate_input(spec: &InputSpec, n: usize) -> Result<DMatrix<f64>> {
    if spec.len == 0 {
        return Err(Error::ShortTrajectory { needed: 1, got: 0 });
    }
    let k_len = spec.len;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    match spec.kind {
        InputKind::Zero => Ok(DMatrix::zeros(n, k_len)),
        InputKind::Gaussian => {
            let normal = rand_distr::StandardNormal;
            Ok(DMatrix::from_fn(n, k_len, |_, _| normal.sample(&mut rng)))
        }
        InputKind::PiecewiseConstantBipolar { hold } => {
            if hold == 0 {
                return Err(Error::InvalidArgument(
                    "bipolar input needs hold >= 1".into(),
                ));
            }
            let windows = k_len.div_ceil(hold);
            let mut u = DMatrix::zeros(n, k_len);
            for i in 0..n {
                for w in 0..windows {
                    let value = if rng.random::<bool>() { 1.0 } else { -1.0 };
                    let start = w * hold;
                    let end = ((w + 1) * hold).min(k_len);
                    for k in start..end {
                        u[(i, k)] = value;
                    }
                }
            }
            Ok(u)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn diag2(a: f64, b: f64) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_vec(vec![a, b]))
    }

    fn sys(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>, d: DMatrix<f64>) -> StateSpaceSystem {
        StateSpaceSystem::new(a, b, c, d).unwrap()
    }

    #[test]
    fn one_step_delay() {
        let n = 2;
        let s = sys(
            DMatrix::zeros(n, n),
            DMatrix::identity(n, n),
            DMatrix::identity(n, n),
            DMatrix::zeros(n, n),
        );
        let u = DMatrix::from_columns(&[
            DVector::from_vec(vec![1.0, -2.0]),
            DVector::from_vec(vec![0.5, 0.25]),
        ]);
        let traj = simulate(&s, &u, &DVector::zeros(n)).unwrap();
        assert_eq!(traj.outputs.column(0), DVector::zeros(n).column(0));
        assert_relative_eq!(
            DVector::from(traj.outputs.column(1)),
            DVector::from(u.column(0)),
            epsilon = 1e-15
        );
    }

    #[test]
    fn frozen_state() {
        let n = 2;
        let s = sys(
            DMatrix::identity(n, n),
            DMatrix::zeros(n, n),
            DMatrix::identity(n, n),
            DMatrix::zeros(n, n),
        );
        let v = DVector::from_vec(vec![3.0, -1.0]);
        let u = DMatrix::zeros(n, 5);
        let traj = simulate(&s, &u, &v).unwrap();
        for k in 0..5 {
            assert_relative_eq!(DVector::from(traj.outputs.column(k)), v, epsilon = 1e-15);
        }
    }

    #[test]
    fn two_step_closed_form() {
        // x(2) = A^2 x0 + A B u(0) + B u(1) with unit inputs.
        let s = sys(
            diag2(0.5, 0.2),
            DMatrix::identity(2, 2),
            DMatrix::identity(2, 2),
            DMatrix::zeros(2, 2),
        );
        let u = DMatrix::from_element(2, 3, 1.0);
        let traj = simulate(&s, &u, &DVector::zeros(2)).unwrap();
        let states = traj.states.unwrap();
        assert_relative_eq!(states[(0, 2)], 1.5, epsilon = 1e-12);
        assert_relative_eq!(states[(1, 2)], 1.2, epsilon = 1e-12);
    }

    #[test]
    fn controllability_blocks() {
        let s = sys(
            diag2(2.0, 3.0),
            DMatrix::identity(2, 2),
            DMatrix::identity(2, 2),
            DMatrix::zeros(2, 2),
        );
        let c1 = controllability_matrix(&s, 1);
        assert_eq!(c1, DMatrix::identity(2, 2));
        let c2 = controllability_matrix(&s, 2);
        assert_eq!(c2.view((0, 2), (2, 2)).clone_owned(), diag2(2.0, 3.0));
    }

    #[test]
    fn observability_blocks() {
        let s = sys(
            diag2(0.5, 0.2),
            DMatrix::zeros(2, 2),
            DMatrix::identity(2, 2),
            DMatrix::zeros(2, 2),
        );
        let o2 = observability_matrix(&s, 2);
        assert_eq!(o2.view((0, 0), (2, 2)).clone_owned(), DMatrix::identity(2, 2));
        assert_eq!(o2.view((2, 0), (2, 2)).clone_owned(), diag2(0.5, 0.2));
    }

    #[test]
    fn minimality_verdicts() {
        let minimal = sys(
            diag2(0.5, 0.2),
            DMatrix::identity(2, 2),
            DMatrix::identity(2, 2),
            DMatrix::zeros(2, 2),
        );
        assert_eq!(is_minimal(&minimal).verdict, Minimality::Minimal);

        // A = I with B = e1 1^T: the controllability matrix repeats e1.
        let mut b = DMatrix::zeros(2, 2);
        b[(0, 0)] = 1.0;
        b[(0, 1)] = 1.0;
        let unreach = sys(
            DMatrix::identity(2, 2),
            b,
            DMatrix::identity(2, 2),
            DMatrix::zeros(2, 2),
        );
        let report = is_minimal(&unreach);
        assert_eq!(report.verdict, Minimality::Unreachable);
        assert_eq!(report.reach_rank, 1);

        let unobs = sys(
            diag2(0.5, 0.2),
            DMatrix::identity(2, 2),
            DMatrix::zeros(2, 2),
            DMatrix::zeros(2, 2),
        );
        assert_eq!(is_minimal(&unobs).verdict, Minimality::Unobservable);
    }

    #[test]
    fn toeplitz_scalar_expansion() {
        // n = l = 1: rows [d, 0, 0], [cb, d, 0], [cab, cb, d].
        let (a, b, c, d) = (0.7, 2.0, 3.0, 0.5);
        let s = sys(
            DMatrix::from_element(1, 1, a),
            DMatrix::from_element(1, 1, b),
            DMatrix::from_element(1, 1, c),
            DMatrix::from_element(1, 1, d),
        );
        let t = markov_toeplitz(&s, 3);
        let expected = DMatrix::from_row_slice(
            3,
            3,
            &[d, 0.0, 0.0, c * b, d, 0.0, c * a * b, c * b, d],
        );
        assert_relative_eq!(t, expected, epsilon = 1e-14);
    }

    #[test]
    fn toeplitz_window_one_is_d() {
        let s = sys(
            diag2(0.5, 0.2),
            DMatrix::identity(2, 2),
            DMatrix::identity(2, 2),
            DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 5.0])),
        );
        assert_eq!(markov_toeplitz(&s, 1), s.d);
    }

    #[test]
    fn bipolar_input_structure() {
        let spec = InputSpec {
            kind: InputKind::PiecewiseConstantBipolar { hold: 5 },
            len: 23,
            seed: 42,
        };
        let u = generate_input(&spec, 3).unwrap();
        assert!(u.iter().all(|&x| x == 1.0 || x == -1.0));
        for i in 0..3 {
            for w in 0..5 {
                let start = w * 5;
                let end = ((w + 1) * 5).min(23);
                for k in start..end {
                    assert_eq!(u[(i, k)], u[(i, start)]);
                }
            }
        }
        // Reproducible per seed.
        let u2 = generate_input(&spec, 3).unwrap();
        assert_eq!(u, u2);
    }

    #[test]
    fn zero_input_is_zero() {
        let spec = InputSpec {
            kind: InputKind::Zero,
            len: 4,
            seed: 0,
        };
        assert_eq!(generate_input(&spec, 2).unwrap(), DMatrix::zeros(2, 4));
    }

    #[test]
    fn bipolar_full_hold_is_constant_rows() {
        let spec = InputSpec {
            kind: InputKind::PiecewiseConstantBipolar { hold: 300 },
            len: 300,
            seed: 9,
        };
        let u = generate_input(&spec, 15).unwrap();
        assert_eq!(u.ncols(), 300);
        for i in 0..15 {
            let first = u[(i, 0)];
            assert!(first == 1.0 || first == -1.0);
            for k in 0..300 {
                assert_eq!(u[(i, k)], first);
            }
        }
    }

    #[test]
    fn dimension_mismatch_names_operand() {
        let s = sys(
            diag2(0.5, 0.2),
            DMatrix::identity(2, 2),
            DMatrix::identity(2, 2),
            DMatrix::zeros(2, 2),
        );
        let u = DMatrix::zeros(3, 4);
        match simulate(&s, &u, &DVector::zeros(2)) {
            Err(Error::DimensionMismatch { operand, .. }) => {
                assert_eq!(operand, "input matrix");
            }
            other => panic!("expected dimension error, got {other:?}"),
        }
    }
}
