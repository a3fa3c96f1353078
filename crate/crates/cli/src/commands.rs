//! Subcommands. Each returns its parsed results as well as writing files,
//! so tests can inspect numbers without re-reading CSV.

use std::path::{Path, PathBuf};

use log::info;
use myelin_core::cable::{self, CableConfig, CableError, CableState};
use myelin_core::fem::FemError;
use myelin_core::homogenization::{self, EffectiveCoefficients};
use myelin_core::membrane::{Kinetics, MembraneError, MembraneModel};
use myelin_core::meshing::{self, build_cell_mesh_with, AxiMesh, MeshError, MeshParams};
use myelin_core::micro::{self, MicroConfig, MicroError};
use myelin_core::node_constant::{self, DeltaProblem, NodeError};
use myelin_core::CellGeometry;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::{Auto, ConfigError, RunConfig};
use crate::report::{Cell, Csv, Summary};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) | CliError::Io(_) => 3,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.0)
    }
}

macro_rules! numerical {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Numerical(e.to_string())
            }
        }
    )*};
}
numerical!(FemError);

impl From<MeshError> for CliError {
    fn from(e: MeshError) -> Self {
        match e {
            MeshError::GeometryTooThin { .. } | MeshError::Geometry(_) => CliError::Config(e.to_string()),
            MeshError::MeshGenerationFailure(_) => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<NodeError> for CliError {
    fn from(e: NodeError) -> Self {
        match e {
            NodeError::DeltaTooLarge(_) | NodeError::Geometry(_) => CliError::Config(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<CableError> for CliError {
    fn from(e: CableError) -> Self {
        match e {
            CableError::InvalidConfig(_) | CableError::Membrane(MembraneError::InvalidParameter(_)) => CliError::Config(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<MicroError> for CliError {
    fn from(e: MicroError) -> Self {
        match e {
            MicroError::InvalidConfig(_) | MicroError::Membrane(MembraneError::InvalidParameter(_)) => CliError::Config(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

/// Shared state of one invocation.
pub struct Context {
    pub cfg: RunConfig,
    pub out: PathBuf,
    pub hash: String,
    pool: rayon::ThreadPool,
}

impl Context {
    /// `jobs = 0` lets the pool pick the number of threads.
    pub fn new(cfg: RunConfig, out: Option<PathBuf>, jobs: usize) -> Result<Self, CliError> {
        let out = out.unwrap_or_else(|| cfg.out_dir.clone());
        let hash = cfg.hash();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build().map_err(|e| CliError::Numerical(e.to_string()))?;
        Ok(Context { cfg, out, hash, pool })
    }

    fn write_csv(&self, csv: &Csv, name: &str) -> Result<PathBuf, CliError> {
        let p = csv.write(&self.out, name, &self.hash)?;
        info!("wrote {}", p.display());
        Ok(p)
    }

    fn write_summary(&self, s: &Summary, name: &str) -> Result<PathBuf, CliError> {
        let p = s.write(&self.out, name, &self.hash)?;
        info!("wrote {}", p.display());
        Ok(p)
    }

    pub fn out_dir(&self) -> &Path {
        &self.out
    }
}

fn mesh_params(cfg: &RunConfig, h: f64, depth: Option<f64>) -> MeshParams {
    let mut p = MeshParams::new(h, cfg.mesh.grading);
    if let Some(d) = depth {
        p = p.with_core_depth(d);
    }
    p.angular_step = cfg.mesh.angular_step;
    p
}

fn opt(v: Option<f64>) -> Cell {
    v.map_or(Cell::S(String::new()), Cell::F)
}

/// Λ̄ for a myelinated cell; the bare cell has no corners and no leak.
fn lambda_bar(g: &CellGeometry) -> Result<f64, CliError> {
    if !g.has_myelin() {
        return Ok(0.0);
    }
    Ok(node_constant::lambda_bar_closed_form(g)?)
}

fn effective(cfg: &RunConfig, g: &CellGeometry, h: f64) -> Result<(EffectiveCoefficients, AxiMesh, homogenization::CorrectorField), CliError> {
    let mesh = build_cell_mesh_with(g, &mesh_params(cfg, h, None))?;
    let corr = homogenization::solve_corrector(&mesh, g)?;
    let eff = homogenization::compute_a_eff(&corr, &g.measures(), g.sigma_i, g.sigma_e);
    Ok((eff, mesh, corr))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellRow {
    pub h: f64,
    pub n_vertices: usize,
    pub flux_integral: f64,
    pub a_eff: f64,
    pub cable_conductance: f64,
    pub observed_order: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellReport {
    pub rows: Vec<CellRow>,
    pub a_eff_without_sheath: f64,
    pub lambda_bar: f64,
}

pub fn cmd_cell(ctx: &Context) -> Result<CellReport, CliError> {
    let cfg = &ctx.cfg;
    let g = cfg.require_geometry()?;
    let hs: Vec<f64> = (0..cfg.mesh.refine).map(|k| cfg.mesh.h / f64::powi(2.0, k as i32)).collect();
    let solved: Vec<Result<_, CliError>> = ctx.pool.install(|| {
        hs.par_iter()
            .map(|&h| {
                let (eff, mesh, corr) = effective(cfg, g, h)?;
                Ok((eff, mesh.n_vertices(), corr.energy(&mesh), corr.residual))
            })
            .collect()
    });
    let solved: Vec<_> = solved.into_iter().collect::<Result<_, _>>()?;
    let mut rows: Vec<CellRow> = Vec::new();
    for (k, (eff, nv, _, _)) in solved.iter().enumerate() {
        let order = (k >= 2).then(|| node_constant::observed_order(solved[k - 2].0.a_eff, solved[k - 1].0.a_eff, eff.a_eff)).flatten();
        rows.push(CellRow {
            h: hs[k],
            n_vertices: *nv,
            flux_integral: eff.flux_integral,
            a_eff: eff.a_eff,
            cable_conductance: homogenization::cable_conductance(eff),
            observed_order: order,
        });
    }
    let gh = cfg.geometry_hash();
    let mut csv = Csv::new(&["geometry_hash", "h", "n_vertices", "flux_integral", "a_eff", "cable_conductance", "observed_order"]);
    for r in &rows {
        csv.row(vec![gh.clone().into(), r.h.into(), r.n_vertices.into(), r.flux_integral.into(), r.a_eff.into(), r.cable_conductance.into(), opt(r.observed_order)]);
    }
    ctx.write_csv(&csv, "cell.csv")?;

    let m = g.measures();
    let lb = lambda_bar(g)?;
    let bare = homogenization::a_eff_without_sheath(&m, g.sigma_i, g.sigma_e);
    let (last, _, energy, residual) = solved.last().unwrap();
    let mut s = Summary::default();
    s.put("geometry_hash", gh);
    s.put("vol_y", m.vol_y);
    s.put("vol_yi", m.vol_yi);
    s.put("vol_ye", m.vol_ye);
    s.put("vol_ym", m.vol_ym);
    s.put("area_gamma", m.area_gamma);
    s.put("h", *hs.last().unwrap());
    s.put("corrector_energy", *energy);
    s.put("corrector_residual", *residual);
    s.put("flux_integral", last.flux_integral);
    s.put("a_eff", last.a_eff);
    s.put("cable_conductance", homogenization::cable_conductance(last));
    s.put("a_eff_without_sheath", bare);
    s.put("lambda_bar", lb);
    ctx.write_summary(&s, "cell_summary.txt")?;
    Ok(CellReport { rows, a_eff_without_sheath: bare, lambda_bar: lb })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LambdaRow {
    pub delta: f64,
    pub h: f64,
    pub n_vertices: usize,
    pub lambda_delta: f64,
    pub upper_bound: f64,
    pub theta: node_constant::ThetaReport,
    pub probe_min_rq: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RichardsonRow {
    pub delta: f64,
    pub ratio: f64,
    pub relative_deviation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LambdaReport {
    pub lambda_bar: f64,
    pub rows: Vec<LambdaRow>,
    /// Present when the sweep has at least two mesh sizes.
    pub richardson: Vec<RichardsonRow>,
}

fn probe_seed(seed: u64, row: usize) -> u64 {
    seed ^ (row as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

fn lambda_row(cfg: &RunConfig, g: &CellGeometry, delta: f64, h: f64, row: usize) -> Result<LambdaRow, CliError> {
    let depth = node_constant::core_depth(g, delta);
    let mesh = build_cell_mesh_with(g, &mesh_params(cfg, h, Some(depth)))?;
    let r = node_constant::solve_lambda_delta(&mesh, g, delta)?;
    let ub = node_constant::test_function_energy(delta, g, &mesh)?;
    let theta = node_constant::verify_theta_properties(&mesh, &r)?;
    let probe_min_rq = if cfg.sweep.probes > 0 {
        let prob = DeltaProblem::new(&mesh, g, delta)?;
        let mut rng = ChaCha8Rng::seed_from_u64(probe_seed(cfg.seed, row));
        let amp = 1e-3 * theta.theta_linf;
        let mut best = f64::INFINITY;
        for _ in 0..cfg.sweep.probes {
            let x: Vec<f64> = r.theta.iter().map(|t| t + amp * (2.0 * rng.random::<f64>() - 1.0)).collect();
            best = best.min(prob.rayleigh_quotient(&x));
        }
        Some(best)
    } else {
        None
    };
    info!("delta={delta} h={h}: lambda/delta={:.6}", r.lambda_delta / delta);
    Ok(LambdaRow { delta, h, n_vertices: mesh.n_vertices(), lambda_delta: r.lambda_delta, upper_bound: ub, theta, probe_min_rq })
}

pub fn cmd_lambda(ctx: &Context) -> Result<LambdaReport, CliError> {
    let cfg = &ctx.cfg;
    let g = cfg.require_geometry()?;
    if !g.has_myelin() {
        return Err(CliError::Config("lambda needs a myelinated geometry".into()));
    }
    let sw = &cfg.sweep;
    if sw.delta.is_empty() || sw.h.is_empty() {
        return Err(CliError::Config("[sweep] delta and h must not be empty".into()));
    }
    let dmax = node_constant::delta_max(g);
    if let Some(&d) = sw.delta.iter().find(|&&d| !(d > 0.0 && d <= dmax * (1.0 + 1e-9))) {
        return Err(CliError::Config(format!("[sweep] delta = {d} outside (0, {dmax}]")));
    }
    let lb = lambda_bar(g)?;
    let jobs: Vec<(f64, f64)> = sw.delta.iter().flat_map(|&d| sw.h.iter().map(move |&h| (d, h))).collect();
    let rows: Vec<Result<LambdaRow, CliError>> =
        ctx.pool.install(|| jobs.par_iter().enumerate().map(|(i, &(d, h))| lambda_row(cfg, g, d, h, i)).collect());
    let rows: Vec<LambdaRow> = rows.into_iter().collect::<Result<_, _>>()?;

    let mut csv = Csv::new(&[
        "delta",
        "h",
        "n_vertices",
        "lambda_delta",
        "lambda_over_delta",
        "lambda_bar",
        "upper_bound",
        "theta_Linf",
        "jump_L2_deviation",
        "intra_L2_deviation",
        "extra_L2_norm",
        "mean_jump",
        "probe_min_rq",
    ]);
    for r in &rows {
        csv.row(vec![
            r.delta.into(),
            r.h.into(),
            r.n_vertices.into(),
            r.lambda_delta.into(),
            (r.lambda_delta / r.delta).into(),
            lb.into(),
            r.upper_bound.into(),
            r.theta.theta_linf.into(),
            r.theta.jump_deviation.into(),
            r.theta.intra_deviation.into(),
            r.theta.extra_norm.into(),
            r.theta.mean_jump.into(),
            opt(r.probe_min_rq),
        ]);
    }
    ctx.write_csv(&csv, "lambda.csv")?;

    let mut richardson = Vec::new();
    if sw.h.len() >= 2 {
        let nh = sw.h.len();
        let mut rcsv = Csv::new(&["delta", "h_coarse", "h_fine", "lambda_over_delta_extrapolated", "lambda_bar", "relative_deviation"]);
        for (k, &d) in sw.delta.iter().enumerate() {
            let coarse = &rows[k * nh + nh - 2];
            let fine = &rows[k * nh + nh - 1];
            let ratio = node_constant::richardson(coarse.lambda_delta / d, fine.lambda_delta / d, 2.0);
            let dev = (ratio - lb) / lb;
            rcsv.row(vec![d.into(), coarse.h.into(), fine.h.into(), ratio.into(), lb.into(), dev.into()]);
            richardson.push(RichardsonRow { delta: d, ratio, relative_deviation: dev });
        }
        ctx.write_csv(&rcsv, "lambda_richardson.csv")?;
    }
    let mut s = Summary::default();
    s.put("lambda_bar", lb);
    if let Some(last) = richardson.last() {
        s.put("final_extrapolated_ratio", last.ratio);
        s.put("final_relative_deviation", last.relative_deviation);
    }
    s.put("upper_bound_holds", rows.iter().all(|r| r.upper_bound >= r.lambda_delta));
    ctx.write_summary(&s, "lambda_summary.txt")?;
    Ok(LambdaReport { lambda_bar: lb, rows, richardson })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CableReport {
    pub a_eff: f64,
    pub lambda_bar: f64,
    pub peak_amplitude: f64,
    pub front_speed: Option<f64>,
    /// Max-norm error against the separable solution when `decay_mode` is set.
    pub max_error: Option<f64>,
    pub final_l2: f64,
}

/// Constant `(G, S)` of a membrane whose current does not depend on gating.
fn frozen_conductance(m: &MembraneModel) -> Option<f64> {
    let Kinetics::Gated(gates) = &m.kinetics else { return None };
    if gates.iter().any(|g| g.h1 != 0.0 || g.v_r != 0.0 || g.h0 < g.h_min) {
        return None;
    }
    Some(gates.iter().map(|g| g.h0).sum())
}

pub fn cmd_cable(ctx: &Context) -> Result<CableReport, CliError> {
    let cfg = &ctx.cfg;
    let membrane = cfg.require_membrane()?.clone();
    let c = cfg.cable.as_ref().ok_or_else(|| CliError::Config("cable needs a [cable] section".into()))?;
    let a_eff = match c.a_eff {
        Auto::Value(v) => v,
        Auto::Auto => {
            let g = cfg.require_geometry()?;
            homogenization::cable_conductance(&effective(cfg, g, cfg.mesh.h)?.0)
        }
    };
    let lb = match c.lambda_bar {
        Auto::Value(v) => v,
        Auto::Auto => lambda_bar(cfg.require_geometry()?)?,
    };
    let mut cc = CableConfig::new(c.length, c.nx, c.t_final, c.dt, a_eff, lb, membrane.clone());
    cc.snapshot_every = c.snapshot_every;
    cc.initial_v = c.initial_v.clone();
    let mut decay = None;
    if let Some(n) = c.decay_mode {
        let beta = frozen_conductance(&membrane).ok_or_else(|| CliError::Config("[cable] decay_mode needs a passive membrane".into()))?;
        if n == 0 {
            return Err(CliError::Config("[cable] decay_mode must be positive".into()));
        }
        let k = n as f64 * std::f64::consts::PI / c.length;
        if cc.initial_v.is_none() {
            cc.initial_v = Some(myelin_core::expr::Expr::parse(&format!("sin({}*x)", report_num(k))).unwrap());
        }
        decay = Some((a_eff * k * k + lb + beta) / cc.c_m);
    }
    let snaps = cable::run(&cc)?;
    let dx = cc.dx();
    let m = membrane.m();

    let mut header = vec!["t".to_string(), "x".into(), "v".into()];
    header.extend((1..=m).map(|j| format!("g_{j}")));
    let hdr: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut csv = Csv::new(&hdr);
    for s in &snaps {
        for i in 0..=cc.nx {
            let mut row: Vec<Cell> = vec![s.t.into(), cc.x(i).into(), s.v[i].into()];
            row.extend(s.gating(i, m).iter().map(|&v| Cell::F(v)));
            csv.row(row);
        }
    }
    ctx.write_csv(&csv, "cable.csv")?;

    let peak = snaps.iter().flat_map(|s| s.v.iter()).fold(0.0f64, |a, v| a.max(*v));
    let (lo, hi) = c.front_window.unwrap_or((0.25 * c.length, 0.75 * c.length));
    let speed = cable::front_speed(&snaps, dx, c.front_level, lo, hi);
    let max_error = decay.map(|rate| decay_error(&snaps, &cc, rate));
    let final_l2 = snaps.last().unwrap().l2(dx);
    let mut s = Summary::default();
    s.put("a_eff", a_eff);
    s.put("lambda_bar", lb);
    s.put("n_steps", cc.n_steps());
    s.put("peak_amplitude", peak);
    s.put("front_speed", opt(speed));
    if let Some(rate) = decay {
        s.put("decay_rate_exact", rate);
        let v0 = snaps[0].l2(dx);
        s.put("decay_rate_observed", -(final_l2 / v0).ln() / snaps.last().unwrap().t);
        s.put("max_error", max_error.unwrap());
    }
    s.put("final_l2", final_l2);
    ctx.write_summary(&s, "cable_summary.txt")?;
    Ok(CableReport { a_eff, lambda_bar: lb, peak_amplitude: peak, front_speed: speed, max_error, final_l2 })
}

fn report_num(v: f64) -> String {
    format!("{v:.17e}")
}

fn decay_error(snaps: &[CableState], cc: &CableConfig, rate: f64) -> f64 {
    let v0 = &snaps[0].v;
    let mut e = 0.0f64;
    for s in snaps {
        for i in 0..=cc.nx {
            e = e.max((s.v[i] - v0[i] * (-rate * s.t).exp()).abs());
        }
    }
    e
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyRow {
    pub epsilon: f64,
    pub n_cells: usize,
    pub n_unknowns: usize,
    pub sup_error: f64,
    pub sup_error_without_lambda: f64,
    pub t_at_sup: f64,
    pub max_energy_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub a_eff: f64,
    pub cable_conductance: f64,
    pub lambda_bar: f64,
    pub rows: Vec<VerifyRow>,
    pub monotone: bool,
    pub ablation_larger: bool,
}

pub fn cmd_verify(ctx: &Context) -> Result<VerifyReport, CliError> {
    let cfg = &ctx.cfg;
    let g = cfg.require_geometry()?;
    let membrane = cfg.require_membrane()?;
    let ms = cfg.micro.as_ref().ok_or_else(|| CliError::Config("verify needs a [microscale] section".into()))?;
    if cfg.sweep.epsilon.is_empty() {
        return Err(CliError::Config("[sweep] epsilon must not be empty".into()));
    }
    let micro_cfgs: Vec<MicroConfig> = cfg
        .sweep
        .epsilon
        .iter()
        .map(|&eps| MicroConfig {
            length: ms.length,
            epsilon: eps,
            geometry: g.clone(),
            membrane: membrane.clone(),
            t_final: ms.t_final,
            dt: ms.dt,
            h: ms.h,
            grading: ms.grading,
            angular_step: ms.angular_step,
            initial_v: ms.initial_v.clone(),
            snapshot_every: ms.snapshot_every,
        })
        .collect();
    for m in &micro_cfgs {
        m.validate()?;
    }
    let (eff, _, _) = effective(cfg, g, cfg.mesh.h)?;
    let a = homogenization::cable_conductance(&eff);
    let lb = lambda_bar(g)?;
    let cable_run = |lam: f64| -> Result<(Vec<CableState>, f64), CliError> {
        let mut c = CableConfig::new(ms.length, ms.cable_nx, ms.t_final, ms.dt, a, lam, membrane.clone());
        c.initial_v = ms.initial_v.clone();
        c.snapshot_every = ms.snapshot_every;
        let dx = c.dx();
        Ok((cable::run(&c)?, dx))
    };
    let (with, dx) = cable_run(lb)?;
    let (without, _) = cable_run(0.0)?;

    let results: Vec<Result<_, CliError>> = ctx.pool.install(|| {
        micro_cfgs
            .par_iter()
            .map(|mc| {
                let (ops, snaps) = micro::run_micro(mc)?;
                info!("epsilon={} done ({} unknowns)", mc.epsilon, ops.dofs.n);
                let r1 = micro::compare_to_homogenized(mc, &ops, &snaps, &with, dx);
                let r0 = micro::compare_to_homogenized(mc, &ops, &snaps, &without, dx);
                let avgs: Vec<(f64, Vec<f64>)> = snaps.iter().map(|s| (s.t, s.node_averages(&ops, mc.n_cells()))).collect();
                Ok((r1, r0, ops.dofs.n, avgs))
            })
            .collect()
    });
    let mut rows = Vec::new();
    for (mc, res) in micro_cfgs.iter().zip(results) {
        let (r1, r0, n_unknowns, avgs) = res?;
        let n = mc.n_cells();
        let mut ts = Csv::new(&["t", "node", "x", "jump"]);
        for (t, avg) in &avgs {
            for (k, v) in avg.iter().enumerate() {
                let x = mc.epsilon * (k as f64 + 0.5 * (g.a + g.b) - g.window_start());
                ts.row(vec![(*t).into(), k.into(), x.into(), (*v).into()]);
            }
        }
        ctx.write_csv(&ts, &format!("micro_jumps_n{n}.csv"))?;
        rows.push(VerifyRow {
            epsilon: mc.epsilon,
            n_cells: n,
            n_unknowns,
            sup_error: r1.sup_error,
            sup_error_without_lambda: r0.sup_error,
            t_at_sup: r1.t_at_sup,
            max_energy_residual: r1.max_energy_residual,
        });
    }
    let mut csv = Csv::new(&["epsilon", "n_cells", "n_unknowns", "sup_error", "sup_error_without_lambda", "t_at_sup", "max_energy_residual"]);
    for r in &rows {
        csv.row(vec![
            r.epsilon.into(),
            r.n_cells.into(),
            r.n_unknowns.into(),
            r.sup_error.into(),
            r.sup_error_without_lambda.into(),
            r.t_at_sup.into(),
            r.max_energy_residual.into(),
        ]);
    }
    ctx.write_csv(&csv, "verify.csv")?;
    // the sweep is ordered by decreasing epsilon for this check
    let mut by_eps = rows.clone();
    by_eps.sort_by(|p, q| q.epsilon.total_cmp(&p.epsilon));
    let monotone = by_eps.windows(2).all(|w| w[1].sup_error < w[0].sup_error);
    let finest = by_eps.last().unwrap();
    let ablation_larger = finest.sup_error_without_lambda > finest.sup_error;
    let mut s = Summary::default();
    s.put("a_eff", eff.a_eff);
    s.put("cable_conductance", a);
    s.put("lambda_bar", lb);
    s.put("monotone", monotone);
    s.put("ablation_larger", ablation_larger);
    ctx.write_summary(&s, "verify_summary.txt")?;
    Ok(VerifyReport { a_eff: eff.a_eff, cable_conductance: a, lambda_bar: lb, rows, monotone, ablation_larger })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeshReport {
    pub quality: meshing::QualityReport,
    pub jump_pairs: usize,
    pub periodic_pairs: usize,
}

pub fn cmd_mesh_dump(ctx: &Context) -> Result<MeshReport, CliError> {
    let cfg = &ctx.cfg;
    let g = cfg.require_geometry()?;
    let depth = match cfg.mesh.core_delta {
        Some(d) if g.has_myelin() => Some(node_constant::core_depth(g, d)),
        _ => None,
    };
    let mesh = build_cell_mesh_with(g, &mesh_params(cfg, cfg.mesh.h, depth))?;
    let q = meshing::mesh_quality(&mesh);
    let bits = mesh.vertex_regions();
    let mut v = Csv::new(&["index", "y1", "r", "regions"]);
    for (i, p) in mesh.vertices.iter().enumerate() {
        v.row(vec![i.into(), p[0].into(), p[1].into(), (bits[i] as usize).into()]);
    }
    ctx.write_csv(&v, "mesh_vertices.csv")?;
    let mut t = Csv::new(&["index", "v0", "v1", "v2", "region"]);
    for (i, (tri, reg)) in mesh.triangles.iter().zip(&mesh.regions).enumerate() {
        t.row(vec![i.into(), tri[0].into(), tri[1].into(), tri[2].into(), reg.name().into()]);
    }
    ctx.write_csv(&t, "mesh_triangles.csv")?;
    let mut s = Summary::default();
    s.put("n_vertices", q.n_vertices);
    s.put("n_triangles", q.n_triangles);
    s.put("min_angle_deg", q.min_angle_deg);
    s.put("max_aspect_ratio", q.max_aspect_ratio);
    s.put("flagged", q.flagged);
    s.put("jump_pairs", mesh.jump_pairs.len());
    s.put("periodic_pairs", mesh.periodic_pairs.len());
    ctx.write_summary(&s, "mesh_summary.txt")?;
    Ok(MeshReport { quality: q, jump_pairs: mesh.jump_pairs.len(), periodic_pairs: mesh.periodic_pairs.len() })
}
