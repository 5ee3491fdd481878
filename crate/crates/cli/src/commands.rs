//! Experiment orchestration: wiring the library stages behind the CLI
//! commands, with per-stage timing, artifact tracking and cleanup of
//! partial outputs on failure.

use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use netid_core::error::Error as CoreError;
use netid_core::graph::{
    build_shift, offdiag_support, random_graph, support_f_score, Graph, GraphClass, GraphFamily,
};
use netid_core::io as core_io;
use netid_core::lti::{generate_input, simulate, InputKind, InputSpec, StateSpaceSystem, Trajectory};
use netid_core::mapping::{apply_matrix_function, ScalarMapping};
use netid_core::recovery::{
    one_shot_state_graph, one_shot_sweep, recover_known_mapping, recover_sparsest, verify_commutation,
    OneShotResult, RecoveryPath, SweepEntry,
};
use netid_core::spectral::spectral_decompose;
use netid_core::subspace::{detransform, identify, Detransformed, IdentifiedSystem, IdentifyConfig, OrderPolicy};

use crate::config::{
    ConfigError, IdentifyCommandConfig, KnownC, OneshotCommandConfig, RecoverCommandConfig,
    RecoveryTarget, RunConfig, SimulateConfig, SyntheticConfig, SyntheticSystemSpec, SystemSpec,
    X0Config,
};
use crate::report::{
    export_plotdata, EigenComparison, ExperimentReport, NamedResidual, StageTiming, SupportMetrics,
};

/// Command-line overrides applied on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct RunOverrides {
    pub seed: Option<u64>,
    pub order: Option<OrderPolicy>,
    pub mu: Option<MuOverride>,
    pub assume_t_identity: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MuOverride {
    Value(f64),
    Sweep,
}

#[derive(Debug)]
pub enum RunError {
    Config(ConfigError),
    Stage { stage: &'static str, source: CoreError },
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Config(e) => write!(f, "{e}"),
            RunError::Stage { stage, source } => write!(f, "stage {stage}: {source}"),
        }
    }
}

impl std::error::Error for RunError {}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Stage { .. } => 3,
        }
    }

    pub fn stage_name(&self) -> Option<&'static str> {
        match self {
            RunError::Stage { stage, .. } => Some(stage),
            RunError::Config(_) => None,
        }
    }
}

fn stage<T>(name: &'static str, r: Result<T, CoreError>) -> Result<T, RunError> {
    r.map_err(|source| RunError::Stage { stage: name, source })
}

/// Tracks artifacts written during a run so a failing stage leaves no
/// partial outputs behind.
struct Artifacts {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl Artifacts {
    fn new(dir: &Path) -> Result<Self, RunError> {
        std::fs::create_dir_all(dir).map_err(|e| RunError::Stage {
            stage: "output-directory",
            source: e.into(),
        })?;
        Ok(Artifacts {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, content: &str) -> Result<(), RunError> {
        let path = self.dir.join(name);
        std::fs::write(&path, content).map_err(|e| RunError::Stage {
            stage: "artifact-write",
            source: e.into(),
        })?;
        self.written.push(path);
        Ok(())
    }

    fn note_written(&mut self, names: &[String]) {
        for n in names {
            self.written.push(self.dir.join(n));
        }
    }

    fn names(&self) -> Vec<String> {
        self.written
            .iter()
            .filter_map(|p| p.strip_prefix(&self.dir).ok())
            .map(|p| p.to_string_lossy().into_owned())
            .collect()
    }

    fn cleanup(self) {
        for path in self.written {
            let _ = std::fs::remove_file(path);
        }
    }
}

struct Timer<'a> {
    report: &'a mut ExperimentReport,
}

impl<'a> Timer<'a> {
    fn time<T>(
        &mut self,
        name: &str,
        f: impl FnOnce() -> Result<T, RunError>,
    ) -> Result<T, RunError> {
        let start = Instant::now();
        let out = f()?;
        self.report.timings.push(StageTiming {
            stage: name.into(),
            millis: start.elapsed().as_secs_f64() * 1e3,
        });
        Ok(out)
    }
}

/// Runs one configured command, writing artifacts under `out_dir`.
pub fn run(
    mut config: RunConfig,
    overrides: &RunOverrides,
    out_dir: &Path,
) -> Result<ExperimentReport, RunError> {
    if let Some(seed) = overrides.seed {
        config.set_seed(seed);
    }
    let mut artifacts = Artifacts::new(out_dir)?;
    let result = dispatch(&config, overrides, &mut artifacts);
    match result {
        Ok(mut report) => {
            report.artifacts = artifacts.names();
            if let Err(e) = report.validate_finite() {
                artifacts.cleanup();
                return Err(RunError::Stage {
                    stage: "report",
                    source: e,
                });
            }
            let json = report.to_json();
            if let Err(e) = std::fs::write(out_dir.join("report.json"), json) {
                artifacts.cleanup();
                return Err(RunError::Stage {
                    stage: "report",
                    source: e.into(),
                });
            }
            Ok(report)
        }
        Err(e) => {
            artifacts.cleanup();
            Err(e)
        }
    }
}

fn dispatch(
    config: &RunConfig,
    overrides: &RunOverrides,
    artifacts: &mut Artifacts,
) -> Result<ExperimentReport, RunError> {
    match config {
        RunConfig::Simulate(c) => run_simulate(c, artifacts),
        RunConfig::Identify(c) => run_identify(c, overrides, artifacts),
        RunConfig::Recover(c) => run_recover(c, artifacts),
        RunConfig::Oneshot(c) => run_oneshot(c, overrides, artifacts),
        RunConfig::ReproduceSynthetic(c) => run_synthetic(c, overrides, artifacts),
    }
}

fn derived_seed(seed: u64, salt: u64) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(salt)
}

/// Rescales a mapping by `factor` so the stability-capped state matrix
/// stays an exact matrix function of the graph.
fn scale_mapping(f: &ScalarMapping, factor: f64) -> ScalarMapping {
    match f {
        ScalarMapping::Heat { alpha, tau, domain } => ScalarMapping::Heat {
            alpha: alpha * factor,
            tau: *tau,
            domain: *domain,
        },
        ScalarMapping::Identity { domain } => {
            let (lo, hi) = domain.unwrap_or((-1e12, 1e12));
            ScalarMapping::polynomial(vec![0.0, factor], lo, hi)
        }
        ScalarMapping::Polynomial { coeffs, domain } => ScalarMapping::Polynomial {
            coeffs: coeffs.iter().map(|c| c * factor).collect(),
            domain: *domain,
        },
    }
}

/// Class-based a-priori inversion domain when the mapping declares none.
fn default_domain(class: GraphClass, n: usize) -> (f64, f64) {
    match class {
        GraphClass::Adjacency => (-(n as f64), n as f64),
        GraphClass::CombinatorialLaplacian => (0.0, 2.0 * n as f64),
        GraphClass::NormalizedLaplacian => (0.0, 2.0),
    }
}

fn with_domain(f: &ScalarMapping, class: GraphClass, n: usize) -> ScalarMapping {
    if f.domain().is_some() {
        return f.clone();
    }
    let (lo, hi) = default_domain(class, n);
    match f {
        ScalarMapping::Heat { alpha, tau, .. } => ScalarMapping::heat_on(*alpha, *tau, lo, hi),
        ScalarMapping::Identity { .. } => ScalarMapping::Identity {
            domain: Some((lo, hi)),
        },
        ScalarMapping::Polynomial { coeffs, .. } => ScalarMapping::Polynomial {
            coeffs: coeffs.clone(),
            domain: (lo, hi),
        },
    }
}

struct BuiltSystem {
    sys: StateSpaceSystem,
    /// Ground truth, present for synthetic builds.
    truth: Option<SyntheticTruth>,
}

struct SyntheticTruth {
    s1: DMatrix<f64>,
    s2: DMatrix<f64>,
    state_graph: Graph,
    input_graph: Graph,
    state_mapping_effective: ScalarMapping,
    input_mapping_effective: ScalarMapping,
}

fn build_synthetic_system(
    spec: &SyntheticSystemSpec,
    seed: u64,
) -> Result<BuiltSystem, RunError> {
    let n = spec.n;
    let g1 = stage(
        "state-graph",
        random_graph(spec.state_graph, n, derived_seed(seed, 1)),
    )?;
    let mut input_salt = 2u64;
    let mut g2 = stage(
        "input-graph",
        random_graph(spec.input_graph, n, derived_seed(seed, input_salt)),
    )?;
    // The two networks must be distinct.
    while g2 == g1 && input_salt < 40 {
        input_salt += 1;
        g2 = stage(
            "input-graph",
            random_graph(spec.input_graph, n, derived_seed(seed, input_salt)),
        )?;
    }
    let s1 = stage("state-shift", build_shift(&g1, &spec.state_class))?.matrix;
    let s2 = stage("input-shift", build_shift(&g2, &spec.input_class))?.matrix;

    let f1 = with_domain(&spec.state_mapping, spec.state_class.class, n);
    let f2 = with_domain(&spec.input_mapping, spec.input_class.class, n);
    let mut a = stage("matrix-function", apply_matrix_function(&f1, &s1))?;
    let radius = netid_core::linalg::spectral_radius(&a);
    let f1_eff = if radius > spec.spectral_radius_cap {
        let factor = spec.spectral_radius_cap / radius;
        a *= factor;
        scale_mapping(&f1, factor)
    } else {
        f1
    };
    let b = stage("matrix-function", apply_matrix_function(&f2, &s2))?;

    let c = DMatrix::identity(n, n);
    let d = if spec.identity_d {
        DMatrix::identity(n, n)
    } else {
        DMatrix::zeros(n, n)
    };
    if !spec.identity_c {
        return Err(RunError::Config(ConfigError::Invalid(
            "synthetic builds measure all states (identity_c must stay true)".into(),
        )));
    }
    let sys = stage("system", StateSpaceSystem::new(a, b, c, d))?;
    Ok(BuiltSystem {
        sys,
        truth: Some(SyntheticTruth {
            s1,
            s2,
            state_graph: g1,
            input_graph: g2,
            state_mapping_effective: f1_eff,
            input_mapping_effective: f2,
        }),
    })
}

fn read_matrix(stage_name: &'static str, path: &Path) -> Result<DMatrix<f64>, RunError> {
    stage(stage_name, core_io::read_matrix_csv(path))
}

fn run_simulate(
    config: &SimulateConfig,
    artifacts: &mut Artifacts,
) -> Result<ExperimentReport, RunError> {
    let mut report = ExperimentReport::new("simulate");
    report.seed = Some(config.seed);
    let mut timer = Timer { report: &mut report };

    let built = timer.time("system", || match &config.system {
        SystemSpec::Files { a, b, c, d } => {
            let sys = stage(
                "system",
                StateSpaceSystem::new(
                    read_matrix("system", a)?.clone_owned(),
                    read_matrix("system", b)?,
                    read_matrix("system", c)?,
                    read_matrix("system", d)?,
                ),
            )?;
            Ok(BuiltSystem { sys, truth: None })
        }
        SystemSpec::Synthetic(spec) => build_synthetic_system(spec, config.seed),
    })?;

    let n = built.sys.n();
    let u = timer.time("input", || {
        stage(
            "input",
            generate_input(
                &InputSpec {
                    kind: config.input.kind(),
                    len: config.input.len(),
                    seed: derived_seed(config.seed, 11),
                },
                n,
            ),
        )
    })?;
    let x0 = match &config.x0 {
        X0Config::Zero => DVector::zeros(n),
        X0Config::Random { scale } => {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(derived_seed(config.seed, 12));
            DVector::from_fn(n, |_, _| (rng.random::<f64>() * 2.0 - 1.0) * scale)
        }
        X0Config::Values(v) => {
            if v.len() != n {
                return Err(RunError::Config(ConfigError::Invalid(format!(
                    "x0 has {} entries, system has {n} states",
                    v.len()
                ))));
            }
            DVector::from_vec(v.clone())
        }
    };

    let traj = timer.time("simulate", || stage("simulate", simulate(&built.sys, &u, &x0)))?;
    artifacts.write("trajectory.csv", &core_io::trajectory_to_csv(&traj))?;
    artifacts.write("a.csv", &core_io::matrix_to_csv(&built.sys.a))?;
    artifacts.write("b.csv", &core_io::matrix_to_csv(&built.sys.b))?;
    artifacts.write("c.csv", &core_io::matrix_to_csv(&built.sys.c))?;
    artifacts.write("d.csv", &core_io::matrix_to_csv(&built.sys.d))?;
    if let Some(truth) = &built.truth {
        artifacts.write("s1_true.csv", &core_io::matrix_to_csv(&truth.s1))?;
        artifacts.write("s2_true.csv", &core_io::matrix_to_csv(&truth.s2))?;
        artifacts.write("state_graph.txt", &core_io::graph_to_edge_list(&truth.state_graph))?;
        artifacts.write("input_graph.txt", &core_io::graph_to_edge_list(&truth.input_graph))?;
        let meta = serde_json::json!({
            "state_mapping_effective": truth.state_mapping_effective,
            "input_mapping_effective": truth.input_mapping_effective,
        });
        artifacts.write("system_meta.json", &serde_json::to_string_pretty(&meta).unwrap())?;
    }
    Ok(report)
}

fn load_known_c(c: &KnownC, l: usize) -> Result<DMatrix<f64>, RunError> {
    match c {
        KnownC::Named(_) => Ok(DMatrix::identity(l, l)),
        KnownC::File { path } => read_matrix("known-c", path),
    }
}

fn run_identify_inner(
    traj: &Trajectory,
    s: usize,
    order: OrderPolicy,
    c: &KnownC,
    timer: &mut Timer<'_>,
) -> Result<(IdentifiedSystem, Option<Detransformed>), RunError> {
    let l = traj.output_dim();
    let c_known = load_known_c(c, l)?;
    let cfg = IdentifyConfig {
        s,
        order,
        c: Some(c_known.clone()),
    };
    let est = timer.time("identify", || stage("identify", identify(traj, &cfg)))?;
    let det = if est.order == c_known.ncols() {
        Some(timer.time("detransform", || {
            stage("detransform", detransform(&c_known, &est))
        })?)
    } else {
        None
    };
    Ok((est, det))
}

fn run_identify(
    config: &IdentifyCommandConfig,
    overrides: &RunOverrides,
    artifacts: &mut Artifacts,
) -> Result<ExperimentReport, RunError> {
    let mut report = ExperimentReport::new("identify");
    let traj = stage("trajectory", core_io::read_trajectory_csv(&config.trajectory))?;
    let order = overrides.order.unwrap_or(config.order_policy);
    let mut timer = Timer { report: &mut report };
    let (est, det) = run_identify_inner(&traj, config.s, order, &config.c, &mut timer)?;

    let bundle = core_io::IdentifiedBundle::from_system(&est, det.as_ref());
    artifacts.write(
        "identified.json",
        &serde_json::to_string_pretty(&bundle)
            .map_err(|e| RunError::Stage { stage: "bundle", source: CoreError::parse("bundle", e.to_string()) })?,
    )?;
    report.singular_values = est.singular_values.iter().copied().collect();
    report.chosen_order = Some(est.order);
    report.order_low_confidence = Some(est.order_low_confidence);
    report.residuals.push(NamedResidual {
        name: "bd_fit_mean_squared".into(),
        value: est.bd_residual,
    });
    report.warnings = est.warnings.clone();
    let written = export_plotdata(&report, &artifacts.dir)
        .map_err(|e| RunError::Stage { stage: "plot-data", source: e })?;
    artifacts.note_written(&written);
    Ok(report)
}

/// Edge list of the support of a recovered shift operator.
fn shift_to_graph(m: &DMatrix<f64>, class: GraphClass) -> Result<Graph, CoreError> {
    let n = m.nrows();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = m[(i, j)];
            if v != 0.0 {
                let w = if class.is_laplacian() { -v } else { v };
                edges.push((i, j, w));
            }
        }
    }
    Graph::new(n, edges, false)
}

fn write_shift_artifacts(
    artifacts: &mut Artifacts,
    prefix: &str,
    m: &DMatrix<f64>,
    class: GraphClass,
) -> Result<(), RunError> {
    artifacts.write(&format!("{prefix}.csv"), &core_io::matrix_to_csv(m))?;
    artifacts.write(&format!("{prefix}.dot"), &core_io::matrix_to_dot(m, prefix))?;
    match shift_to_graph(m, class) {
        Ok(g) => artifacts.write(&format!("{prefix}_edges.txt"), &core_io::graph_to_edge_list(&g)),
        Err(e) => Err(RunError::Stage {
            stage: "shift-export",
            source: e,
        }),
    }
}

fn run_recover(
    config: &RecoverCommandConfig,
    artifacts: &mut Artifacts,
) -> Result<ExperimentReport, RunError> {
    let mut report = ExperimentReport::new("recover");
    let bundle = stage("bundle", core_io::read_bundle(&config.bundle))?;
    let det = stage("bundle", bundle.detransformed_matrices())?;
    let (a_hat, b_hat) = match det {
        Some((a, b, _, _)) => (a, b),
        None => {
            return Err(RunError::Stage {
                stage: "recover",
                source: CoreError::Unsupported(
                    "bundle carries no de-transformed matrices (reduced order or unknown C); \
                     recovery needs them"
                        .into(),
                ),
            })
        }
    };
    let target = match config.target {
        RecoveryTarget::State => a_hat,
        RecoveryTarget::Input => b_hat,
    };
    let mut timer = Timer { report: &mut report };
    let class = config.recovery.class.clone();
    let shift = match config.recovery.path {
        RecoveryPath::KnownMapping => {
            let mapping = config.recovery.mapping.clone().ok_or(RunError::Config(
                ConfigError::Invalid("known-mapping recovery needs a \"mapping\" entry".into()),
            ))?;
            timer.time("recover-known-mapping", || {
                stage(
                    "recover-known-mapping",
                    recover_known_mapping(&target, &mapping, &class),
                )
            })?
        }
        RecoveryPath::Sparsest => {
            let dec = timer.time("spectral-decompose", || {
                stage("spectral-decompose", spectral_decompose(&target))
            })?;
            let res = timer.time("recover-sparsest", || {
                stage(
                    "recover-sparsest",
                    recover_sparsest(&dec.eigvecs, &class, &config.recovery.solver),
                )
            })?;
            report.residuals.push(NamedResidual {
                name: "range_residual".into(),
                value: res.range_residual,
            });
            report.residuals.push(NamedResidual {
                name: "l1_value".into(),
                value: res.l1_value,
            });
            res.shift
        }
        RecoveryPath::OneShot => {
            return Err(RunError::Config(ConfigError::Invalid(
                "use the oneshot command for the one-shot estimator".into(),
            )))
        }
    };
    report.residuals.push(NamedResidual {
        name: "commutation_residual".into(),
        value: verify_commutation(&shift.matrix, &target),
    });
    write_shift_artifacts(artifacts, "shift", &shift.matrix, shift.class)?;
    let diagnostics = serde_json::json!({
        "class": shift.class,
        "residuals": report.residuals,
    });
    artifacts.write("diagnostics.json", &serde_json::to_string_pretty(&diagnostics).unwrap())?;
    Ok(report)
}

fn oneshot_diagnostics(res: &OneShotResult, chosen_mu: Option<f64>, entries: &[SweepEntry]) -> serde_json::Value {
    serde_json::json!({
        "objective_trace": res.objective_trace,
        "fit": res.fit,
        "fit_scale": res.fit_scale,
        "l1": res.l1,
        "iterations": res.iterations,
        "commutation_residual": res.commutation_residual,
        "chosen_mu": chosen_mu,
        "sweep": entries,
    })
}

fn run_oneshot(
    config: &OneshotCommandConfig,
    overrides: &RunOverrides,
    artifacts: &mut Artifacts,
) -> Result<ExperimentReport, RunError> {
    let mut report = ExperimentReport::new("oneshot");
    let bundle = stage("bundle", core_io::read_bundle(&config.bundle))?;
    let est = stage("bundle", bundle.to_system())?;
    if est.u_r.is_empty() {
        return Err(RunError::Stage {
            stage: "oneshot",
            source: CoreError::Unsupported("bundle carries no observability basis".into()),
        });
    }
    let l = est.c_t.nrows();
    let p = est.order;
    let assume_identity = config.assume_t_identity || overrides.assume_t_identity;
    let t_hat = if assume_identity {
        DMatrix::identity(p, p)
    } else {
        match &est.t_hat {
            Some(t) if t.nrows() == p && t.ncols() == p => t.clone(),
            _ => {
                return Err(RunError::Config(ConfigError::Invalid(
                    "bundle has no square similarity estimate; rerun identify with a known C \
                     or pass --assume-T-identity to work in transformed coordinates"
                        .into(),
                )))
            }
        }
    };
    if assume_identity {
        report
            .warnings
            .push("one-shot ran with T = I: the recovered graph lives in transformed coordinates".into());
    }
    let a_hat = stage("bundle", bundle.detransformed_matrices())?.map(|(a, _, _, _)| a);

    let mu = match overrides.mu {
        Some(MuOverride::Value(v)) => Some(v),
        Some(MuOverride::Sweep) => None,
        None => config.mu,
    };
    let mut timer = Timer { report: &mut report };
    let (result, chosen_mu, entries) = match mu {
        Some(value) => {
            let res = timer.time("one-shot", || {
                stage(
                    "one-shot",
                    one_shot_state_graph(
                        &est.u_r,
                        l,
                        &t_hat,
                        &config.class,
                        value,
                        &config.solver,
                        a_hat.as_ref(),
                    ),
                )
            })?;
            (res, value, Vec::new())
        }
        None => {
            let sweep = timer.time("one-shot-sweep", || {
                stage(
                    "one-shot-sweep",
                    one_shot_sweep(
                        &est.u_r,
                        l,
                        &t_hat,
                        &config.class,
                        &config.solver,
                        a_hat.as_ref(),
                    ),
                )
            })?;
            (sweep.result, sweep.chosen_mu, sweep.entries)
        }
    };

    report.chosen_mu = Some(chosen_mu);
    report.objective_trace_len = Some(result.objective_trace.len());
    report.residuals.push(NamedResidual {
        name: "fit".into(),
        value: result.fit,
    });
    if let Some(c) = result.commutation_residual {
        report.residuals.push(NamedResidual {
            name: "commutation_residual".into(),
            value: c,
        });
    }
    write_shift_artifacts(artifacts, "shift", &result.s_hat.matrix, result.s_hat.class)?;
    artifacts.write(
        "diagnostics.json",
        &serde_json::to_string_pretty(&oneshot_diagnostics(&result, Some(chosen_mu), &entries)).unwrap(),
    )?;
    Ok(report)
}

fn sorted_eigs_sym(m: &DMatrix<f64>) -> Vec<f64> {
    let mut v: Vec<f64> = ((m + m.transpose()) * 0.5)
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .collect();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v
}

fn support_metrics_for(name: &str, truth: &DMatrix<f64>, estimated: &DMatrix<f64>) -> SupportMetrics {
    let (precision, recall, f_score) = support_f_score(
        &offdiag_support(estimated, 1e-6),
        &offdiag_support(truth, 1e-6),
    );
    SupportMetrics {
        graph: name.into(),
        precision,
        recall,
        f_score,
    }
}

fn run_synthetic(
    config: &SyntheticConfig,
    overrides: &RunOverrides,
    artifacts: &mut Artifacts,
) -> Result<ExperimentReport, RunError> {
    let mut report = ExperimentReport::new("reproduce-synthetic");
    report.seed = Some(config.seed);
    let n = config.n;
    let spec = SyntheticSystemSpec {
        n,
        state_graph: GraphFamily::ErdosRenyi {
            p: config.edge_probability,
        },
        input_graph: GraphFamily::ErdosRenyi {
            p: config.edge_probability,
        },
        state_class: config.state_class.clone(),
        input_class: config.input_class.clone(),
        state_mapping: ScalarMapping::heat(config.alpha, config.tau),
        input_mapping: ScalarMapping::identity(),
        spectral_radius_cap: config.spectral_radius_cap,
        identity_c: true,
        identity_d: true,
    };
    let mut timer = Timer { report: &mut report };
    let built = timer.time("build-system", || build_synthetic_system(&spec, config.seed))?;
    let truth = built.truth.as_ref().expect("synthetic build carries truth");

    let u = timer.time("input", || {
        stage(
            "input",
            generate_input(
                &InputSpec {
                    kind: InputKind::PiecewiseConstantBipolar { hold: 1 },
                    len: config.samples,
                    seed: derived_seed(config.seed, 11),
                },
                n,
            ),
        )
    })?;
    let traj = timer.time("simulate", || {
        stage("simulate", simulate(&built.sys, &u, &DVector::zeros(n)))
    })?;
    artifacts.write("trajectory.csv", &core_io::trajectory_to_csv(&traj))?;

    let s_win = config.s.unwrap_or(n + 1);
    let order = overrides.order.unwrap_or(config.order_policy);
    let (est, det) = run_identify_inner(
        &traj,
        s_win,
        order,
        &KnownC::Named("identity".into()),
        &mut timer,
    )?;
    let det = det.ok_or(RunError::Stage {
        stage: "detransform",
        source: CoreError::Unsupported(format!(
            "identified order {} differs from n = {n}; the synthetic pipeline expects full order",
            est.order
        )),
    })?;
    let bundle = core_io::IdentifiedBundle::from_system(&est, Some(&det));
    artifacts.write(
        "identified.json",
        &serde_json::to_string_pretty(&bundle)
            .map_err(|e| RunError::Stage { stage: "bundle", source: CoreError::parse("bundle", e.to_string()) })?,
    )?;

    let f1 = &truth.state_mapping_effective;
    let f2 = &truth.input_mapping_effective;
    let s1_hat = timer.time("recover-state", || {
        stage(
            "recover-state",
            recover_known_mapping(&det.a, f1, &config.state_class),
        )
    })?;
    let s2_hat = timer.time("recover-input", || {
        stage(
            "recover-input",
            recover_known_mapping(&det.b, f2, &config.input_class),
        )
    })?;

    // Report: spectra, support metrics, entrywise errors, resimulation.
    report.singular_values = est.singular_values.iter().copied().collect();
    report.chosen_order = Some(est.order);
    report.order_low_confidence = Some(est.order_low_confidence);
    report.eigen_comparisons = vec![
        EigenComparison {
            graph: "state".into(),
            truth: sorted_eigs_sym(&truth.s1),
            estimated: sorted_eigs_sym(&s1_hat.matrix),
        },
        EigenComparison {
            graph: "input".into(),
            truth: sorted_eigs_sym(&truth.s2),
            estimated: sorted_eigs_sym(&s2_hat.matrix),
        },
    ];
    report.support_metrics = vec![
        support_metrics_for("state", &truth.s1, &s1_hat.matrix),
        support_metrics_for("input", &truth.s2, &s2_hat.matrix),
    ];
    report.residuals.push(NamedResidual {
        name: "s1_max_abs_error".into(),
        value: (&s1_hat.matrix - &truth.s1).amax(),
    });
    report.residuals.push(NamedResidual {
        name: "s2_max_abs_error".into(),
        value: (&s2_hat.matrix - &truth.s2).amax(),
    });
    report.residuals.push(NamedResidual {
        name: "d_max_abs_error".into(),
        value: (&det.d - DMatrix::identity(n, n)).amax(),
    });
    report.residuals.push(NamedResidual {
        name: "bd_fit_mean_squared".into(),
        value: est.bd_residual,
    });
    let resim = StateSpaceSystem::new(
        det.a.clone(),
        det.b.clone(),
        DMatrix::identity(n, n),
        det.d.clone(),
    )
    .and_then(|sys| simulate(&sys, &u, &det.x0));
    let resim_err = match resim {
        Ok(t) => (&t.outputs - &traj.outputs).norm() / traj.outputs.norm().max(1e-300),
        Err(_) => f64::INFINITY,
    };
    report.residuals.push(NamedResidual {
        name: "resimulation_relative_error".into(),
        value: resim_err,
    });
    report.warnings = est.warnings.clone();

    artifacts.write("s1_true.csv", &core_io::matrix_to_csv(&truth.s1))?;
    artifacts.write("s2_true.csv", &core_io::matrix_to_csv(&truth.s2))?;
    artifacts.write("state_graph.txt", &core_io::graph_to_edge_list(&truth.state_graph))?;
    artifacts.write("input_graph.txt", &core_io::graph_to_edge_list(&truth.input_graph))?;
    write_shift_artifacts(artifacts, "s1_hat", &s1_hat.matrix, s1_hat.class)?;
    write_shift_artifacts(artifacts, "s2_hat", &s2_hat.matrix, s2_hat.class)?;
    let written = export_plotdata(&report, &artifacts.dir)
        .map_err(|e| RunError::Stage { stage: "plot-data", source: e })?;
    artifacts.note_written(&written);
    Ok(report)
}
