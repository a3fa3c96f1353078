//! INI run configuration.
//!
//! Every key is checked; unknown sections or keys are rejected so that a
//! typo cannot silently fall back to a default. Numeric values accept
//! constant expressions such as `pi/2`.

use std::collections::BTreeMap;
use std::path::PathBuf;

use ini::Ini;
use myelin_core::expr::Expr;
use myelin_core::membrane::{Gate, MembraneModel};
use myelin_core::{CellGeometry, MyelinShape};
use sha2::{Digest, Sha256};

#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct ConfigError(pub String);

fn err<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Auto {
    Auto,
    Value(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeshSection {
    pub h: f64,
    pub grading: f64,
    /// Number of mesh levels `h, h/2, ...` used by `cell`.
    pub refine: usize,
    pub angular_step: Option<f64>,
    /// `δ` whose core depth `mesh-dump` resolves.
    pub core_delta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CableSection {
    pub length: f64,
    pub nx: usize,
    pub t_final: f64,
    pub dt: f64,
    pub a_eff: Auto,
    pub lambda_bar: Auto,
    pub initial_v: Option<Expr>,
    pub snapshot_every: usize,
    /// If set, the run is compared with the separable solution of mode `n`.
    pub decay_mode: Option<u32>,
    pub front_level: f64,
    pub front_window: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MicroSection {
    pub length: f64,
    pub t_final: f64,
    pub dt: f64,
    pub h: f64,
    pub grading: f64,
    pub angular_step: Option<f64>,
    pub initial_v: Option<Expr>,
    pub snapshot_every: usize,
    pub cable_nx: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSection {
    pub delta: Vec<f64>,
    pub h: Vec<f64>,
    pub epsilon: Vec<f64>,
    /// Random perturbations of each eigenfunction checked against `λ_δ`.
    pub probes: usize,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub geometry: Option<CellGeometry>,
    pub mesh: MeshSection,
    pub membrane: Option<MembraneModel>,
    pub cable: Option<CableSection>,
    pub micro: Option<MicroSection>,
    pub sweep: SweepSection,
    canonical: BTreeMap<(String, String), String>,
}

const SECTIONS: &[(&str, &[&str])] = &[
    ("run", &["seed", "out_dir"]),
    ("geometry", &["preset", "r0", "r_outer", "a", "b", "phi_a", "phi_b", "myelin", "thickness", "outline", "sigma_i", "sigma_e"]),
    ("mesh", &["h", "grading", "refine", "angular_step", "core_delta"]),
    (
        "membrane",
        &["model", "c_m", "beta", "h0", "h1", "h_min", "v_r", "f_lo", "f_hi", "v_half", "slope", "alpha", "g0"],
    ),
    (
        "cable",
        &["length", "nx", "t_final", "dt", "a_eff", "lambda_bar", "initial_v", "snapshot_every", "decay_mode", "front_level", "front_window"],
    ),
    ("microscale", &["length", "t_final", "dt", "h", "grading", "angular_step", "initial_v", "snapshot_every", "cable_nx"]),
    ("sweep", &["delta", "h", "epsilon", "probes"]),
];

struct Section<'a> {
    name: &'static str,
    props: Option<&'a ini::Properties>,
}

impl Section<'_> {
    fn present(&self) -> bool {
        self.props.is_some()
    }

    fn raw(&self, key: &str) -> Option<&str> {
        self.props.and_then(|p| p.get(key)).map(str::trim)
    }

    fn num(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        let Some(s) = self.raw(key) else { return Ok(None) };
        parse_num(s).map(Some).map_err(|m| ConfigError(format!("[{}] {key}: {m}", self.name)))
    }

    fn num_or(&self, key: &str, default: f64) -> Result<f64, ConfigError> {
        Ok(self.num(key)?.unwrap_or(default))
    }

    fn count_or(&self, key: &str, default: usize) -> Result<usize, ConfigError> {
        match self.raw(key) {
            None => Ok(default),
            Some(s) => s.parse().map_err(|_| ConfigError(format!("[{}] {key}: expected a nonnegative integer, got '{s}'", self.name))),
        }
    }

    fn expr(&self, key: &str) -> Result<Option<Expr>, ConfigError> {
        let Some(s) = self.raw(key) else { return Ok(None) };
        Expr::parse(s).map(Some).map_err(|e| ConfigError(format!("[{}] {key}: {e}", self.name)))
    }

    fn auto(&self, key: &str) -> Result<Auto, ConfigError> {
        match self.raw(key) {
            None | Some("auto") => Ok(Auto::Auto),
            Some(_) => Ok(Auto::Value(self.num(key)?.unwrap())),
        }
    }

    fn list(&self, key: &str, default: &[f64]) -> Result<Vec<f64>, ConfigError> {
        let Some(s) = self.raw(key) else { return Ok(default.to_vec()) };
        s.split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(|t| parse_num(t).map_err(|m| ConfigError(format!("[{}] {key}: {m}", self.name))))
            .collect()
    }
}

fn parse_num(s: &str) -> Result<f64, String> {
    let e = Expr::parse(s).map_err(|e| e.to_string())?;
    let v = e.eval(0.0);
    if e.eval(1.0).to_bits() != v.to_bits() {
        return Err("value must not depend on x".into());
    }
    if !v.is_finite() {
        return Err(format!("'{s}' is not finite"));
    }
    Ok(v)
}

impl RunConfig {
    pub fn from_str(text: &str) -> Result<Self, ConfigError> {
        let ini = Ini::load_from_str(text).map_err(|e| ConfigError(format!("parse error: {e}")))?;
        let mut canonical = BTreeMap::new();
        for (sec, props) in ini.iter() {
            let Some(sec) = sec else {
                if !props.is_empty() {
                    return err("keys outside a section");
                }
                continue;
            };
            let Some((_, keys)) = SECTIONS.iter().find(|(n, _)| *n == sec) else {
                return err(format!("unknown section [{sec}]"));
            };
            for (k, v) in props.iter() {
                if !keys.contains(&k) {
                    return err(format!("unknown key '{k}' in [{sec}]"));
                }
                if canonical.insert((sec.to_string(), k.to_string()), v.trim().to_string()).is_some() {
                    return err(format!("duplicate key '{k}' in [{sec}]"));
                }
            }
        }
        let sec = |name: &'static str| Section { name, props: ini.section(Some(name)) };
        let run = sec("run");
        let seed = match run.raw("seed") {
            None => 0,
            Some(s) => s.parse().map_err(|_| ConfigError(format!("[run] seed: expected an unsigned integer, got '{s}'")))?,
        };
        let out_dir = PathBuf::from(run.raw("out_dir").unwrap_or("out"));

        let geometry = parse_geometry(&sec("geometry"))?;
        let m = sec("mesh");
        let mesh = MeshSection {
            h: m.num_or("h", 0.05)?,
            grading: m.num_or("grading", 1.5)?,
            refine: m.count_or("refine", 1)?,
            angular_step: m.num("angular_step")?,
            core_delta: m.num("core_delta")?,
        };
        if !(mesh.h > 0.0 && mesh.grading >= 1.0) || mesh.refine == 0 {
            return err("[mesh] needs h > 0, grading >= 1 and refine >= 1");
        }
        let membrane = parse_membrane(&sec("membrane"))?;
        let c = sec("cable");
        let cable = if c.present() {
            let window = match c.raw("front_window") {
                None => None,
                Some(_) => match c.list("front_window", &[])?[..] {
                    [lo, hi] if lo < hi => Some((lo, hi)),
                    _ => return err("[cable] front_window: expected 'lo, hi' with lo < hi"),
                },
            };
            Some(CableSection {
                length: c.num_or("length", 1.0)?,
                nx: c.count_or("nx", 200)?,
                t_final: c.num_or("t_final", 0.1)?,
                dt: c.num_or("dt", 1e-4)?,
                a_eff: c.auto("a_eff")?,
                lambda_bar: c.auto("lambda_bar")?,
                initial_v: c.expr("initial_v")?,
                snapshot_every: c.count_or("snapshot_every", 1)?,
                decay_mode: c.raw("decay_mode").map(|s| s.parse()).transpose().map_err(|_| ConfigError("[cable] decay_mode: expected a positive integer".into()))?,
                front_level: c.num_or("front_level", 0.5)?,
                front_window: window,
            })
        } else {
            None
        };
        let mi = sec("microscale");
        let micro = if mi.present() {
            Some(MicroSection {
                length: mi.num_or("length", 4.0)?,
                t_final: mi.num_or("t_final", 0.5)?,
                dt: mi.num_or("dt", 2e-3)?,
                h: mi.num_or("h", 0.07)?,
                grading: mi.num_or("grading", 1.0)?,
                angular_step: mi.num("angular_step")?,
                initial_v: mi.expr("initial_v")?,
                snapshot_every: mi.count_or("snapshot_every", 1)?,
                cable_nx: mi.count_or("cable_nx", 800)?,
            })
        } else {
            None
        };
        let s = sec("sweep");
        let sweep = SweepSection {
            delta: s.list("delta", &[0.1, 0.05, 0.025, 0.0125])?,
            h: s.list("h", &[0.05, 0.025, 0.0125])?,
            epsilon: s.list("epsilon", &[0.5, 0.25, 0.125])?,
            probes: s.count_or("probes", 4)?,
        };
        Ok(RunConfig { seed, out_dir, geometry, mesh, membrane, cable, micro, sweep, canonical })
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        Self::from_str(&text)
    }

    /// SHA-256 over the sorted `section.key=value` lines and the seed. The
    /// output directory is not part of it.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for ((s, k), v) in &self.canonical {
            if s == "run" {
                continue;
            }
            h.update(format!("{s}.{k}={v}\n").as_bytes());
        }
        h.update(format!("seed={}\n", self.seed).as_bytes());
        hex(&h.finalize())
    }

    /// Hash of the resolved geometry, 16 hex digits; empty without one.
    pub fn geometry_hash(&self) -> String {
        let Some(g) = &self.geometry else { return String::new() };
        hex(&Sha256::digest(format!("{g:?}").as_bytes()))[..16].to_string()
    }

    pub fn require_geometry(&self) -> Result<&CellGeometry, ConfigError> {
        self.geometry.as_ref().ok_or_else(|| ConfigError("this command needs a [geometry] section".into()))
    }

    pub fn require_membrane(&self) -> Result<&MembraneModel, ConfigError> {
        self.membrane.as_ref().ok_or_else(|| ConfigError("this command needs a [membrane] section".into()))
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn parse_geometry(s: &Section) -> Result<Option<CellGeometry>, ConfigError> {
    if !s.present() {
        return Ok(None);
    }
    let base = match s.raw("preset").unwrap_or("reference") {
        "reference" => CellGeometry::reference(),
        "bare" => CellGeometry::bare(0.5, 1.0, 1.0, 1.0),
        other => return err(format!("[geometry] preset: unknown preset '{other}' (reference, bare)")),
    };
    let mut g = CellGeometry {
        r0: s.num_or("r0", base.r0)?,
        r_outer: s.num_or("r_outer", base.r_outer)?,
        a: s.num_or("a", base.a)?,
        b: s.num_or("b", base.b)?,
        phi_a: s.num_or("phi_a", base.phi_a)?,
        phi_b: s.num_or("phi_b", base.phi_b)?,
        sigma_i: s.num_or("sigma_i", base.sigma_i)?,
        sigma_e: s.num_or("sigma_e", base.sigma_e)?,
        myelin: base.myelin.clone(),
    };
    let thickness = s.num("thickness")?;
    g.myelin = match s.raw("myelin") {
        None => match (g.myelin, thickness) {
            (MyelinShape::Bulge { .. }, Some(t)) => MyelinShape::Bulge { thickness: t },
            (m, _) => m,
        },
        Some("none") => MyelinShape::None,
        Some("bulge") => MyelinShape::Bulge { thickness: thickness.unwrap_or(0.2) },
        Some("polyline") => {
            let Some(txt) = s.raw("outline") else { return err("[geometry] myelin = polyline needs 'outline'") };
            let mut pts = Vec::new();
            for pair in txt.split(';') {
                let v: Vec<&str> = pair.split_whitespace().collect();
                let [y, r] = v[..] else { return err(format!("[geometry] outline: expected 'y r' pairs separated by ';', got '{pair}'")) };
                let p = |t: &str| parse_num(t).map_err(|m| ConfigError(format!("[geometry] outline: {m}")));
                pts.push([p(y)?, p(r)?]);
            }
            MyelinShape::Polyline(pts)
        }
        Some(other) => return err(format!("[geometry] myelin: unknown shape '{other}' (none, bulge, polyline)")),
    };
    g.validate().map(Some).map_err(|e| ConfigError(format!("[geometry] {e}")))
}

fn parse_membrane(s: &Section) -> Result<Option<MembraneModel>, ConfigError> {
    if !s.present() {
        return Ok(None);
    }
    let model = s.raw("model").unwrap_or("passive");
    let c_m = s.num_or("c_m", 1.0)?;
    let mut m = match model {
        "passive" => MembraneModel::passive(s.num_or("beta", 1.0)?, c_m),
        "excitable" | "linear-gate" => {
            let d = match MembraneModel::excitable().kinetics {
                myelin_core::membrane::Kinetics::Gated(g) => g[0].clone(),
                _ => unreachable!(),
            };
            let gate = Gate {
                h0: s.num_or("h0", d.h0)?,
                h1: s.num_or("h1", d.h1)?,
                h_min: s.num_or("h_min", d.h_min)?,
                v_r: s.num_or("v_r", d.v_r)?,
                f_lo: s.num_or("f_lo", d.f_lo)?,
                f_hi: s.num_or("f_hi", d.f_hi)?,
                v_half: s.num_or("v_half", d.v_half)?,
                slope: s.num_or("slope", d.slope)?,
                alpha: s.num_or("alpha", d.alpha)?,
            };
            MembraneModel::linear_gate(gate, c_m)
        }
        "hodgkin-huxley" => {
            let mut m = MembraneModel::hodgkin_huxley();
            m.c_m = c_m;
            m
        }
        other => return err(format!("[membrane] model: unknown model '{other}' (passive, linear-gate, excitable, hodgkin-huxley)")),
    };
    if let Some(txt) = s.raw("g0") {
        let exprs: Result<Vec<Expr>, _> = txt.split(';').map(|t| Expr::parse(t.trim())).collect();
        let exprs = exprs.map_err(|e| ConfigError(format!("[membrane] g0: {e}")))?;
        if exprs.len() != m.m() {
            return err(format!("[membrane] g0: model has {} gating components, got {}", m.m(), exprs.len()));
        }
        m.g0 = Some(exprs);
    }
    m.validate().map_err(|e| ConfigError(format!("[membrane] {e}")))?;
    Ok(Some(m))
}
