//! Text formats: dense matrix CSV, trajectory CSV, graph edge lists, DOT
//! rendering and the identified-system JSON bundle.
//!
//! Numeric fields are written with 17 significant digits, so every f64
//! round-trips bit-exactly through the files.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::lti::Trajectory;
use crate::subspace::IdentifiedSystem;

fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse_f64(s: &str, context: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|e| Error::parse(context, format!("bad float {s:?}: {e}")))
}

// ---------------------------------------------------------------------------
// Dense matrix CSV.
// ---------------------------------------------------------------------------

pub fn matrix_to_csv(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| fmt_f64(m[(i, j)])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn matrix_from_csv(text: &str) -> Result<DMatrix<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row: Result<Vec<f64>> = line
            .split(',')
            .map(|tok| parse_f64(tok, &format!("matrix csv line {}", lineno + 1)))
            .collect();
        rows.push(row?);
    }
    if rows.is_empty() {
        return Err(Error::parse("matrix csv", "no rows"));
    }
    let ncols = rows[0].len();
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::parse("matrix csv", "ragged rows"));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

pub fn write_matrix_csv(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    std::fs::write(path, matrix_to_csv(m))?;
    Ok(())
}

pub fn read_matrix_csv(path: &Path) -> Result<DMatrix<f64>> {
    matrix_from_csv(&std::fs::read_to_string(path)?)
}

// ---------------------------------------------------------------------------
// Trajectory CSV: header `t,u_0..u_{n-1},y_0..y_{l-1}`.
// ---------------------------------------------------------------------------

pub fn trajectory_to_csv(traj: &Trajectory) -> String {
    let n = traj.input_dim();
    let l = traj.output_dim();
    let mut header = String::from("t");
    for i in 0..n {
        let _ = write!(header, ",u_{i}");
    }
    for i in 0..l {
        let _ = write!(header, ",y_{i}");
    }
    let mut out = header;
    out.push('\n');
    for k in 0..traj.len() {
        let _ = write!(out, "{k}");
        for i in 0..n {
            let _ = write!(out, ",{}", fmt_f64(traj.inputs[(i, k)]));
        }
        for i in 0..l {
            let _ = write!(out, ",{}", fmt_f64(traj.outputs[(i, k)]));
        }
        out.push('\n');
    }
    out
}

pub fn trajectory_from_csv(text: &str) -> Result<Trajectory> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| Error::parse("trajectory csv", "empty file"))?;
    let cols: Vec<&str> = header.trim().split(',').collect();
    if cols.first() != Some(&"t") {
        return Err(Error::parse("trajectory csv", "header must start with 't'"));
    }
    let n = cols.iter().filter(|c| c.starts_with("u_")).count();
    let l = cols.iter().filter(|c| c.starts_with("y_")).count();
    if n + l + 1 != cols.len() || l == 0 {
        return Err(Error::parse(
            "trajectory csv",
            "header must list u_0.. and y_0.. columns",
        ));
    }
    let mut u_rows: Vec<Vec<f64>> = Vec::new();
    let mut y_rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let toks: Vec<&str> = line.trim().split(',').collect();
        if toks.len() != cols.len() {
            return Err(Error::parse(
                "trajectory csv",
                format!("row {} has {} fields, expected {}", lineno + 2, toks.len(), cols.len()),
            ));
        }
        let ctx = format!("trajectory csv row {}", lineno + 2);
        let mut u = Vec::with_capacity(n);
        for tok in &toks[1..1 + n] {
            u.push(parse_f64(tok, &ctx)?);
        }
        let mut y = Vec::with_capacity(l);
        for tok in &toks[1 + n..] {
            y.push(parse_f64(tok, &ctx)?);
        }
        u_rows.push(u);
        y_rows.push(y);
    }
    let k_len = u_rows.len();
    if k_len == 0 {
        return Err(Error::parse("trajectory csv", "no data rows"));
    }
    let inputs = DMatrix::from_fn(n, k_len, |i, k| u_rows[k][i]);
    let outputs = DMatrix::from_fn(l, k_len, |i, k| y_rows[k][i]);
    Ok(Trajectory {
        inputs,
        outputs,
        states: None,
        x0: DVector::zeros(n),
    })
}

pub fn write_trajectory_csv(path: &Path, traj: &Trajectory) -> Result<()> {
    std::fs::write(path, trajectory_to_csv(traj))?;
    Ok(())
}

pub fn read_trajectory_csv(path: &Path) -> Result<Trajectory> {
    trajectory_from_csv(&std::fs::read_to_string(path)?)
}

// ---------------------------------------------------------------------------
// Graph edge list: header `n <count> directed <0|1>`, lines `i j weight`.
// ---------------------------------------------------------------------------

pub fn graph_to_edge_list(g: &Graph) -> String {
    let mut out = format!("n {} directed {}\n", g.n(), u8::from(g.directed()));
    for &(i, j, w) in g.edges() {
        let _ = writeln!(out, "{i} {j} {}", fmt_f64(w));
    }
    out
}

pub fn graph_from_edge_list(text: &str) -> Result<Graph> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| Error::parse("edge list", "empty file"))?;
    let toks: Vec<&str> = header.split_whitespace().collect();
    if toks.len() != 4 || toks[0] != "n" || toks[2] != "directed" {
        return Err(Error::parse(
            "edge list",
            "header must read `n <count> directed <0|1>`",
        ));
    }
    let n: usize = toks[1]
        .parse()
        .map_err(|e| Error::parse("edge list", format!("bad vertex count: {e}")))?;
    let directed = match toks[3] {
        "0" => false,
        "1" => true,
        other => {
            return Err(Error::parse(
                "edge list",
                format!("directed flag must be 0 or 1, got {other}"),
            ))
        }
    };
    let mut edges = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 3 {
            return Err(Error::parse(
                "edge list",
                format!("line {}: expected `i j weight`", lineno + 2),
            ));
        }
        let ctx = format!("edge list line {}", lineno + 2);
        let i: usize = toks[0]
            .parse()
            .map_err(|e| Error::parse(&ctx, format!("bad vertex: {e}")))?;
        let j: usize = toks[1]
            .parse()
            .map_err(|e| Error::parse(&ctx, format!("bad vertex: {e}")))?;
        let w = parse_f64(toks[2], &ctx)?;
        edges.push((i, j, w));
    }
    Graph::new(n, edges, directed)
}

pub fn write_graph_edge_list(path: &Path, g: &Graph) -> Result<()> {
    std::fs::write(path, graph_to_edge_list(g))?;
    Ok(())
}

pub fn read_graph_edge_list(path: &Path) -> Result<Graph> {
    graph_from_edge_list(&std::fs::read_to_string(path)?)
}

/// DOT rendering of the support of a (shift-operator) matrix.
pub fn matrix_to_dot(m: &DMatrix<f64>, name: &str) -> String {
    let n = m.nrows();
    let symmetric = (m - m.transpose()).amax() <= 1e-12 * m.amax().max(1.0);
    let (kind, arrow) = if symmetric { ("graph", "--") } else { ("digraph", "->") };
    let mut out = format!("{kind} {name} {{\n");
    for v in 0..n {
        let _ = writeln!(out, "  {v};");
    }
    for i in 0..n {
        let j_start = if symmetric { i + 1 } else { 0 };
        for j in j_start..n {
            if i == j {
                continue;
            }
            let w = m[(i, j)];
            if w != 0.0 {
                let _ = writeln!(out, "  {i} {arrow} {j} [weight=\"{w:.6}\"];");
            }
        }
    }
    out.push_str("}\n");
    out
}

// ---------------------------------------------------------------------------
// Identified-system JSON bundle.
// ---------------------------------------------------------------------------

pub fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

pub fn rows_to_matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    if rows.is_empty() {
        return Ok(DMatrix::zeros(0, 0));
    }
    let ncols = rows[0].len();
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::parse("matrix rows", "ragged rows"));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

/// Wire form of [`IdentifiedSystem`] plus optional de-transformed matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdentifiedBundle {
    pub order: usize,
    pub a_t: Vec<Vec<f64>>,
    pub c_t: Vec<Vec<f64>>,
    pub b_t: Vec<Vec<f64>>,
    pub d: Vec<Vec<f64>>,
    pub x_t0: Vec<f64>,
    pub t_hat: Option<Vec<Vec<f64>>>,
    pub u_r: Vec<Vec<f64>>,
    pub singular_values: Vec<f64>,
    pub order_low_confidence: bool,
    pub bd_residual: f64,
    pub warnings: Vec<String>,
    pub detransformed: Option<DetransformedBundle>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetransformedBundle {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub d: Vec<Vec<f64>>,
    pub x0: Vec<f64>,
}

impl IdentifiedBundle {
    pub fn from_system(
        est: &IdentifiedSystem,
        detransformed: Option<&crate::subspace::Detransformed>,
    ) -> Self {
        IdentifiedBundle {
            order: est.order,
            a_t: matrix_to_rows(&est.a_t),
            c_t: matrix_to_rows(&est.c_t),
            b_t: matrix_to_rows(&est.b_t),
            d: matrix_to_rows(&est.d),
            x_t0: est.x_t0.iter().copied().collect(),
            t_hat: est.t_hat.as_ref().map(matrix_to_rows),
            u_r: matrix_to_rows(&est.u_r),
            singular_values: est.singular_values.iter().copied().collect(),
            order_low_confidence: est.order_low_confidence,
            bd_residual: est.bd_residual,
            warnings: est.warnings.clone(),
            detransformed: detransformed.map(|det| DetransformedBundle {
                a: matrix_to_rows(&det.a),
                b: matrix_to_rows(&det.b),
                d: matrix_to_rows(&det.d),
                x0: det.x0.iter().copied().collect(),
            }),
        }
    }

    pub fn to_system(&self) -> Result<IdentifiedSystem> {
        Ok(IdentifiedSystem {
            order: self.order,
            a_t: rows_to_matrix(&self.a_t)?,
            c_t: rows_to_matrix(&self.c_t)?,
            b_t: rows_to_matrix(&self.b_t)?,
            d: rows_to_matrix(&self.d)?,
            x_t0: DVector::from_vec(self.x_t0.clone()),
            t_hat: self.t_hat.as_deref().map(rows_to_matrix).transpose()?,
            u_r: rows_to_matrix(&self.u_r)?,
            singular_values: DVector::from_vec(self.singular_values.clone()),
            order_low_confidence: self.order_low_confidence,
            bd_residual: self.bd_residual,
            warnings: self.warnings.clone(),
        })
    }

    pub fn detransformed_matrices(
        &self,
    ) -> Result<Option<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>, DVector<f64>)>> {
        match &self.detransformed {
            None => Ok(None),
            Some(det) => Ok(Some((
                rows_to_matrix(&det.a)?,
                rows_to_matrix(&det.b)?,
                rows_to_matrix(&det.d)?,
                DVector::from_vec(det.x0.clone()),
            ))),
        }
    }
}

pub fn write_bundle(path: &Path, bundle: &IdentifiedBundle) -> Result<()> {
    let text = serde_json::to_string_pretty(bundle)
        .map_err(|e| Error::parse("bundle json", e.to_string()))?;
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_bundle(path: &Path) -> Result<IdentifiedBundle> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::parse("bundle json", e.to_string()))
}

/// Singular-value CSV for knee plots: `index,sigma`.
pub fn singular_values_to_csv(sv: &[f64]) -> String {
    let mut out = String::from("index,sigma\n");
    for (i, s) in sv.iter().enumerate() {
        let _ = writeln!(out, "{},{}", i + 1, fmt_f64(*s));
    }
    out
}

/// Eigenvalue comparison CSV: `true,estimated` per row.
pub fn eigen_pairs_to_csv(truth: &[f64], estimated: &[f64]) -> String {
    let mut out = String::from("true,estimated\n");
    for (t, e) in truth.iter().zip(estimated.iter()) {
        let _ = writeln!(out, "{},{}", fmt_f64(*t), fmt_f64(*e));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{random_graph, GraphFamily};
    use nalgebra::dmatrix;

    #[test]
    fn matrix_csv_round_trip_is_bit_exact() {
        let m = dmatrix![
            1.0 / 3.0, -2.5e-17;
            f64::MIN_POSITIVE, 42.0
        ];
        let back = matrix_from_csv(&matrix_to_csv(&m)).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn trajectory_csv_round_trip_is_bit_exact() {
        let traj = Trajectory {
            inputs: dmatrix![0.1, 0.2, 0.3; -1.0, 1.0, -1.0],
            outputs: dmatrix![1.0 / 7.0, 2.0 / 7.0, 3.0 / 7.0],
            states: None,
            x0: DVector::zeros(2),
        };
        let text = trajectory_to_csv(&traj);
        assert!(text.starts_with("t,u_0,u_1,y_0\n"));
        let back = trajectory_from_csv(&text).unwrap();
        assert_eq!(back.inputs, traj.inputs);
        assert_eq!(back.outputs, traj.outputs);
    }

    #[test]
    fn edge_list_round_trip() {
        let g = random_graph(GraphFamily::ErdosRenyi { p: 0.4 }, 8, 21).unwrap();
        let text = graph_to_edge_list(&g);
        assert!(text.starts_with("n 8 directed 0\n"));
        let back = graph_from_edge_list(&text).unwrap();
        assert_eq!(g, back);
    }

    #[test]
    fn dot_output_mentions_edges() {
        let m = dmatrix![0.0, 1.0; 1.0, 0.0];
        let dot = matrix_to_dot(&m, "g");
        assert!(dot.contains("graph g {"));
        assert!(dot.contains("0 -- 1"));
    }

    #[test]
    fn bundle_round_trip() {
        let est = IdentifiedSystem {
            order: 2,
            a_t: dmatrix![0.5, 0.0; 0.1, 0.25],
            c_t: dmatrix![1.0, 0.0; 0.0, 1.0],
            b_t: dmatrix![1.0, 2.0; 3.0, 4.0],
            d: dmatrix![0.0, 0.0; 0.0, 0.0],
            x_t0: DVector::from_vec(vec![0.25, -0.5]),
            t_hat: None,
            u_r: dmatrix![1.0, 0.0; 0.0, 1.0; 0.5, 0.5],
            singular_values: DVector::from_vec(vec![3.0, 1.0, 1e-12]),
            order_low_confidence: false,
            bd_residual: 1e-20,
            warnings: vec![],
        };
        let bundle = IdentifiedBundle::from_system(&est, None);
        let json = serde_json::to_string(&bundle).unwrap();
        let parsed: IdentifiedBundle = serde_json::from_str(&json).unwrap();
        assert_eq!(parsed.to_system().unwrap(), est);
    }
}
