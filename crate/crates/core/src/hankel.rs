//! Block-Hankel data matrices built from sliding input/output windows.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::lti::Trajectory;

/// Stacked sliding windows `U_m` (`s*n x m`) and `Y_m` (`s*l x m`);
/// column `j` holds samples `j .. j+s-1`.
#[derive(Debug, Clone, PartialEq)]
pub struct HankelBatch {
    pub u_m: DMatrix<f64>,
    pub y_m: DMatrix<f64>,
    pub s: usize,
    pub m: usize,
}

fn sliding_windows(data: &DMatrix<f64>, s: usize, m: usize) -> DMatrix<f64> {
    let rows = data.nrows();
    let mut out = DMatrix::zeros(s * rows, m);
    for j in 0..m {
        for w in 0..s {
            out.view_mut((w * rows, j), (rows, 1))
                .copy_from(&data.column(j + w));
        }
    }
    out
}

/// Builds the batch with every available window, `m = K - s + 1`.
///
/// The batch invariant `m > s` translates into `K >= 2s`.
pub fn build_hankel(traj: &Trajectory, s: usize) -> Result<HankelBatch> {
    if s < 1 {
        return Err(Error::InvalidArgument("window length s must be >= 1".into()));
    }
    let k_len = traj.len();
    if k_len < 2 * s {
        return Err(Error::ShortTrajectory {
            needed: 2 * s,
            got: k_len,
        });
    }
    let m = k_len - s + 1;
    Ok(HankelBatch {
        u_m: sliding_windows(&traj.inputs, s, m),
        y_m: sliding_windows(&traj.outputs, s, m),
        s,
        m,
    })
}

/// Concatenates the window columns of several same-shaped trajectories.
///
/// The batch data equation holds column by column, so records from
/// independent runs (different initial states or excitations) can share one
/// factorization; autonomous single-trajectory data is otherwise limited to
/// the Krylov space of one initial state.
pub fn build_hankel_multi(trajs: &[Trajectory], s: usize) -> Result<HankelBatch> {
    let first = trajs
        .first()
        .ok_or_else(|| Error::InvalidArgument("need at least one trajectory".into()))?;
    let n = first.input_dim();
    let l = first.output_dim();
    let mut batches = Vec::with_capacity(trajs.len());
    for traj in trajs {
        if traj.input_dim() != n || traj.output_dim() != l {
            return Err(Error::DimensionMismatch {
                operand: "trajectory batch",
                expected: format!("{n} inputs / {l} outputs"),
                found: format!("{} inputs / {} outputs", traj.input_dim(), traj.output_dim()),
            });
        }
        batches.push(build_hankel(traj, s)?);
    }
    let m: usize = batches.iter().map(|b| b.m).sum();
    let mut u_m = DMatrix::zeros(s * n, m);
    let mut y_m = DMatrix::zeros(s * l, m);
    let mut col = 0;
    for b in &batches {
        u_m.view_mut((0, col), (s * n, b.m)).copy_from(&b.u_m);
        y_m.view_mut((0, col), (s * l, b.m)).copy_from(&b.y_m);
        col += b.m;
    }
    Ok(HankelBatch { u_m, y_m, s, m })
}
