//! Scalar mappings, their lift to matrix functions, bijectivity screening
//! and spectral inversion.
//!
//! Matrix functions of diagonalizable matrices are computed through the
//! eigendecomposition, `f(S) = U f(Lambda) U^{-1}`, which agrees with the
//! holomorphic definition on the spectrum.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{spectral_decompose, SpectralDecomposition};

/// Number of grid points used by the numeric bijectivity screen.
const BIJECTIVITY_GRID: usize = 1000;

/// Absolute tolerance when checking that a target value lies in the range of
/// the mapping over its domain.
const RANGE_TOL: f64 = 1e-9;

/// An analytic scalar mapping with an optional declared inversion domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScalarMapping {
    Identity {
        #[serde(default)]
        domain: Option<(f64, f64)>,
    },
    /// `f(x) = alpha * exp(-x * tau)`, strictly decreasing everywhere.
    Heat {
        alpha: f64,
        tau: f64,
        #[serde(default)]
        domain: Option<(f64, f64)>,
    },
    /// `f(x) = c0 + c1 x + c2 x^2 + ...`; inversion requires a domain on
    /// which the polynomial is strictly monotone.
    Polynomial {
        coeffs: Vec<f64>,
        domain: (f64, f64),
    },
}

impl ScalarMapping {
    pub fn identity() -> Self {
        ScalarMapping::Identity { domain: None }
    }

    pub fn heat(alpha: f64, tau: f64) -> Self {
        ScalarMapping::Heat {
            alpha,
            tau,
            domain: None,
        }
    }

    pub fn heat_on(alpha: f64, tau: f64, lo: f64, hi: f64) -> Self {
        ScalarMapping::Heat {
            alpha,
            tau,
            domain: Some((lo, hi)),
        }
    }

    pub fn polynomial(coeffs: Vec<f64>, lo: f64, hi: f64) -> Self {
        ScalarMapping::Polynomial {
            coeffs,
            domain: (lo, hi),
        }
    }

    pub fn domain(&self) -> Option<(f64, f64)> {
        match self {
            ScalarMapping::Identity { domain } | ScalarMapping::Heat { domain, .. } => *domain,
            ScalarMapping::Polynomial { domain, .. } => Some(*domain),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            ScalarMapping::Identity { .. } => x,
            ScalarMapping::Heat { alpha, tau, .. } => alpha * (-x * tau).exp(),
            ScalarMapping::Polynomial { coeffs, .. } => {
                // Horner, highest degree first.
                coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
            }
        }
    }

    fn validate_params(&self) -> Result<()> {
        match self {
            ScalarMapping::Heat { alpha, tau, .. } => {
                if *alpha <= 0.0 || *tau <= 0.0 {
                    return Err(Error::InvalidArgument(format!(
                        "heat kernel needs alpha > 0 and tau > 0, got alpha={alpha}, tau={tau}"
                    )));
                }
            }
            ScalarMapping::Polynomial { coeffs, .. } => {
                if coeffs.is_empty() {
                    return Err(Error::InvalidArgument(
                        "polynomial mapping needs at least one coefficient".into(),
                    ));
                }
            }
            ScalarMapping::Identity { .. } => {}
        }
        if let Some((lo, hi)) = self.domain() {
            if !(lo < hi) {
                return Err(Error::InvalidArgument(format!(
                    "degenerate mapping domain [{lo}, {hi}]"
                )));
            }
        }
        Ok(())
    }
}

/// Outcome of the bijectivity screen: either strictly monotone on the grid,
/// or a witness of two conflicting grid points.
#[derive(Debug, Clone, PartialEq)]
pub enum Bijectivity {
    Bijective { increasing: bool },
    NotBijective { x1: f64, y1: f64, x2: f64, y2: f64 },
}

impl Bijectivity {
    pub fn is_bijective(&self) -> bool {
        matches!(self, Bijectivity::Bijective { .. })
    }
}

/// Screens strict monotonicity of `f` on a fixed grid over `[lo, hi]`.
pub fn check_bijective(f: &ScalarMapping, lo: f64, hi: f64) -> Result<Bijectivity> {
    if !(lo < hi) {
        return Err(Error::InvalidArgument(format!(
            "degenerate interval [{lo}, {hi}]"
        )));
    }
    f.validate_params()?;
    // Closed-form monotonicity for the analytic kinds.
    match f {
        ScalarMapping::Identity { .. } => return Ok(Bijectivity::Bijective { increasing: true }),
        ScalarMapping::Heat { .. } => return Ok(Bijectivity::Bijective { increasing: false }),
        ScalarMapping::Polynomial { .. } => {}
    }
    let step = (hi - lo) / (BIJECTIVITY_GRID - 1) as f64;
    let xs: Vec<f64> = (0..BIJECTIVITY_GRID).map(|i| lo + step * i as f64).collect();
    let ys: Vec<f64> = xs.iter().map(|&x| f.eval(x)).collect();
    let mut direction = 0.0f64;
    for i in 0..xs.len() - 1 {
        let d = ys[i + 1] - ys[i];
        if d == 0.0 {
            return Ok(Bijectivity::NotBijective {
                x1: xs[i],
                y1: ys[i],
                x2: xs[i + 1],
                y2: ys[i + 1],
            });
        }
        if direction == 0.0 {
            direction = d.signum();
        } else if d.signum() != direction {
            return Ok(Bijectivity::NotBijective {
                x1: xs[i],
                y1: ys[i],
                x2: xs[i + 1],
                y2: ys[i + 1],
            });
        }
    }
    Ok(Bijectivity::Bijective {
        increasing: direction > 0.0,
    })
}

fn require_bijective(f: &ScalarMapping, lo: f64, hi: f64) -> Result<bool> {
    match check_bijective(f, lo, hi)? {
        Bijectivity::Bijective { increasing } => Ok(increasing),
        Bijectivity::NotBijective { x1, y1, x2, y2 } => Err(Error::NonBijective {
            lo,
            hi,
            x1,
            y1,
            x2,
            y2,
        }),
    }
}

/// Lifts `f` to the matrix function of a diagonalizable matrix.
///
/// The identity mapping returns its input unchanged; everything else goes
/// through the spectral decomposition. Declared domains are enforced
/// against the spectrum.
pub fn apply_matrix_function(f: &ScalarMapping, s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    f.validate_params()?;
    if let ScalarMapping::Identity { .. } = f {
        return Ok(s.clone());
    }
    let dec = spectral_decompose(s)?;
    apply_to_decomposition(f, &dec)
}

/// Same as [`apply_matrix_function`] but reuses an existing decomposition.
pub fn apply_to_decomposition(
    f: &ScalarMapping,
    dec: &SpectralDecomposition,
) -> Result<DMatrix<f64>> {
    if let Some((lo, hi)) = f.domain() {
        for (k, &ev) in dec.eigvals.iter().enumerate() {
            if ev < lo - RANGE_TOL || ev > hi + RANGE_TOL {
                return Err(Error::OutsideDomain {
                    index: k,
                    value: ev,
                    lo,
                    hi,
                });
            }
        }
    }
    let mapped = dec.eigvals.map(|x| f.eval(x));
    let transformed = SpectralDecomposition {
        eigvals: mapped,
        eigvecs: dec.eigvecs.clone(),
        orthonormal: dec.orthonormal,
    };
    Ok(transformed.reconstruct())
}

/// Result of inverting a scalar mapping on an eigenvalue vector.
#[derive(Debug, Clone, PartialEq)]
pub struct InversionResult {
    pub lambda_hat: DVector<f64>,
    /// Squared residual `(f(lambda_hat_k) - omega_k)^2` per entry.
    pub residuals: DVector<f64>,
}

/// Recovers `lambda` with `f(lambda) = omega`, entry by entry.
///
/// Closed forms are used for the identity and heat kernels; polynomials are
/// inverted by bracketed root finding on the declared domain. Each target
/// must lie in the range of `f` over the domain (tolerance 1e-9).
pub fn invert_spectrum(f: &ScalarMapping, omega: &DVector<f64>) -> Result<InversionResult> {
    f.validate_params()?;
    let lambda = match f {
        ScalarMapping::Identity { domain } => {
            if let Some((lo, hi)) = domain {
                check_targets_in_range(omega, *lo, *hi)?;
            }
            omega.clone()
        }
        ScalarMapping::Heat { alpha, tau, domain } => {
            if let Some((lo, hi)) = *domain {
                // Decreasing map: range endpoints swap.
                check_targets_in_range(omega, *alpha * (-hi * tau).exp(), *alpha * (-lo * tau).exp())?;
            } else {
                for (k, &w) in omega.iter().enumerate() {
                    if w <= 0.0 {
                        return Err(Error::OutsideDomain {
                            index: k,
                            value: w,
                            lo: 0.0,
                            hi: f64::INFINITY,
                        });
                    }
                }
            }
            let mut lam = omega.map(|w| -(w / alpha).ln() / tau);
            if let Some((lo, hi)) = *domain {
                // Clamp the numeric fringe back onto the closed interval.
                lam.apply(|x| *x = x.clamp(lo, hi));
            }
            lam
        }
        ScalarMapping::Polynomial { domain: (lo, hi), .. } => {
            let increasing = require_bijective(f, *lo, *hi)?;
            let (flo, fhi) = (f.eval(*lo), f.eval(*hi));
            let (rlo, rhi) = if increasing { (flo, fhi) } else { (fhi, flo) };
            check_targets_in_range(omega, rlo, rhi)?;
            DVector::from_fn(omega.len(), |k, _| {
                invert_scalar(f, omega[k].clamp(rlo, rhi), *lo, *hi, increasing)
            })
        }
    };
    let residuals = DVector::from_fn(omega.len(), |k, _| {
        let diff = f.eval(lambda[k]) - omega[k];
        diff * diff
    });
    if let Some(worst) = residuals
        .iter()
        .cloned()
        .fold(None::<f64>, |acc, r| Some(acc.map_or(r, |a| a.max(r))))
    {
        if worst > 1e-16 {
            return Err(Error::NonConvergence {
                iterations: 0,
                objective: worst,
                last_step: 0.0,
            });
        }
    }
    Ok(InversionResult {
        lambda_hat: lambda,
        residuals,
    })
}

/// Inversion through the bracketed root finder regardless of the mapping
/// kind; the analytic closed forms in [`invert_spectrum`] are the fast
/// path, this is the general one (and its cross-check).
pub fn invert_spectrum_bracketed(
    f: &ScalarMapping,
    omega: &DVector<f64>,
    lo: f64,
    hi: f64,
) -> Result<InversionResult> {
    let increasing = require_bijective(f, lo, hi)?;
    let (flo, fhi) = (f.eval(lo), f.eval(hi));
    let (rlo, rhi) = if increasing { (flo, fhi) } else { (fhi, flo) };
    check_targets_in_range(omega, rlo, rhi)?;
    let lambda = DVector::from_fn(omega.len(), |k, _| {
        invert_scalar(f, omega[k].clamp(rlo, rhi), lo, hi, increasing)
    });
    let residuals = DVector::from_fn(omega.len(), |k, _| {
        let diff = f.eval(lambda[k]) - omega[k];
        diff * diff
    });
    if residuals.max() > 1e-16 {
        return Err(Error::NonConvergence {
            iterations: 0,
            objective: residuals.max(),
            last_step: 0.0,
        });
    }
    Ok(InversionResult {
        lambda_hat: lambda,
        residuals,
    })
}

fn check_targets_in_range(omega: &DVector<f64>, rlo: f64, rhi: f64) -> Result<()> {
    let span = (rhi - rlo).abs().max(1.0);
    for (k, &w) in omega.iter().enumerate() {
        if w < rlo - RANGE_TOL * span || w > rhi + RANGE_TOL * span {
            return Err(Error::OutsideDomain {
                index: k,
                value: w,
                lo: rlo,
                hi: rhi,
            });
        }
    }
    Ok(())
}

/// Bracketed scalar inversion: golden-section shrink on the squared
/// residual followed by bisection on the (monotone) signed difference.
fn invert_scalar(f: &ScalarMapping, target: f64, lo: f64, hi: f64, increasing: bool) -> f64 {
    const PHI_COMP: f64 = 0.381_966_011_250_105; // 2 - golden ratio
    let (mut a, mut b) = (lo, hi);
    let obj = |x: f64| {
        let d = f.eval(x) - target;
        d * d
    };
    // Golden-section phase narrows the bracket on the squared residual.
    let mut x1 = a + PHI_COMP * (b - a);
    let mut x2 = b - PHI_COMP * (b - a);
    let (mut f1, mut f2) = (obj(x1), obj(x2));
    for _ in 0..64 {
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = a + PHI_COMP * (b - a);
            f1 = obj(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = b - PHI_COMP * (b - a);
            f2 = obj(x2);
        }
        if (b - a).abs() < 1e-12 * (1.0 + a.abs() + b.abs()) {
            break;
        }
    }
    // Bisection polish on the signed difference over the original bracket;
    // monotonicity makes the sign test exact.
    let sign = |x: f64| {
        let d = f.eval(x) - target;
        if increasing {
            d
        } else {
            -d
        }
    };
    let (mut blo, mut bhi) = (lo, hi);
    if sign(blo) > 0.0 || sign(bhi) < 0.0 {
        // Target at (or numerically beyond) an endpoint.
        return if sign(blo) > 0.0 { lo } else { hi };
    }
    for _ in 0..200 {
        let mid = 0.5 * (blo + bhi);
        if mid <= blo || mid >= bhi {
            break;
        }
        if sign(mid) < 0.0 {
            blo = mid;
        } else {
            bhi = mid;
        }
    }
    let mid = 0.5 * (blo + bhi);
    // Keep the best of the three candidates.
    let candidates = [mid, 0.5 * (a + b), blo, bhi];
    candidates
        .into_iter()
        .min_by(|&p, &q| obj(p).partial_cmp(&obj(q)).unwrap())
        .unwrap()
}
