//! Scenario configuration: strict TOML, every problem reported at once.

use std::path::PathBuf;

use serde::Serialize;
use toml::{Table, Value};

use crate::error::{Error, Result};
use crate::grid::{EdParams, Grid};
use crate::pauli::Integrator;
use crate::rotations::Interpolation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    FreePacket,
    Larmor,
    SternGerlach,
    RotationDemo,
    Custom,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 5] =
        [Self::FreePacket, Self::Larmor, Self::SternGerlach, Self::RotationDemo, Self::Custom];

    pub fn name(self) -> &'static str {
        match self {
            Self::FreePacket => "free_packet",
            Self::Larmor => "larmor",
            Self::SternGerlach => "stern_gerlach",
            Self::RotationDemo => "rotation_demo",
            Self::Custom => "custom",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    Gaussian,
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridConfig {
    pub points: Vec<usize>,
    pub extents: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GaugeConfig {
    pub a0: f64,
    pub a: [f64; 3],
    pub b: [f64; 3],
    /// `∂B_z/∂x_axis` along `gradient_axis` (the last axis by default).
    pub b_gradient: f64,
    pub gradient_axis: usize,
    /// Charge multiplying `A₀` in the scalar potential.
    pub charge: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PotentialConfig {
    /// `V₀ = ½ m ω² |x|²` when non-zero.
    pub harmonic_omega: f64,
    pub v0: f64,
    /// Uniform spin coupling `V_a`, on top of the magnetic-moment term.
    pub v: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InitialConfig {
    pub profile: Profile,
    pub center: Vec<f64>,
    pub width: Vec<f64>,
    pub momentum: Vec<f64>,
    /// Normalised `(c₊, c₋)`.
    pub spinor: [[f64; 2]; 2],
    /// Phase winding `e^{iℓθ}` about the z axis (2-D and 3-D only).
    pub winding: i32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SamplerConfig {
    pub walkers: usize,
    pub seed: u64,
    pub stride: usize,
    pub k_labels: bool,
    pub bandwidth: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutputConfig {
    pub directory: PathBuf,
    pub stride: usize,
    pub snapshots: bool,
    pub trajectories: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RotationConfig {
    pub axis: [f64; 3],
    pub angle: f64,
    pub spatial: bool,
    pub interpolation: Interpolation,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioConfig {
    pub scenario: ScenarioKind,
    pub grid: GridConfig,
    pub params: EdParams,
    pub steps: usize,
    pub integrator: Integrator,
    pub gauge: GaugeConfig,
    pub potential: PotentialConfig,
    pub initial: InitialConfig,
    pub sampler: SamplerConfig,
    pub output: OutputConfig,
    pub rotation: RotationConfig,
}

impl ScenarioConfig {
    pub fn build_grid(&self) -> Result<Grid> {
        Grid::new(&self.grid.points, &self.grid.extents)
    }

    pub fn total_time(&self) -> f64 {
        self.steps as f64 * self.params.dt
    }
}

/// Collects problems while reading a table.
struct Reader<'a> {
    errors: &'a mut Vec<String>,
}

impl Reader<'_> {
    fn section<'t>(&mut self, root: &'t Table, name: &str) -> Option<&'t Table> {
        match root.get(name) {
            None => None,
            Some(Value::Table(t)) => Some(t),
            Some(_) => {
                self.errors.push(format!("{name}: expected a table"));
                None
            }
        }
    }

    fn unknown(&mut self, table: &Table, prefix: &str, allowed: &[&str]) {
        for key in table.keys() {
            if !allowed.contains(&key.as_str()) {
                let path = if prefix.is_empty() { key.clone() } else { format!("{prefix}.{key}") };
                self.errors.push(format!("{path}: unknown key"));
            }
        }
    }

    fn float(&mut self, t: Option<&Table>, prefix: &str, key: &str) -> Option<f64> {
        let v = t?.get(key)?;
        match v {
            Value::Float(f) => Some(*f),
            Value::Integer(i) => Some(*i as f64),
            _ => {
                self.errors.push(format!("{prefix}.{key}: expected a number"));
                None
            }
        }
    }

    fn int(&mut self, t: Option<&Table>, prefix: &str, key: &str) -> Option<i64> {
        match t?.get(key)? {
            Value::Integer(i) => Some(*i),
            _ => {
                self.errors.push(format!("{prefix}.{key}: expected an integer"));
                None
            }
        }
    }

    fn count(&mut self, t: Option<&Table>, prefix: &str, key: &str) -> Option<usize> {
        let i = self.int(t, prefix, key)?;
        if i < 0 {
            self.errors.push(format!("{prefix}.{key}: must not be negative"));
            return None;
        }
        Some(i as usize)
    }

    fn boolean(&mut self, t: Option<&Table>, prefix: &str, key: &str) -> Option<bool> {
        match t?.get(key)? {
            Value::Boolean(b) => Some(*b),
            _ => {
                self.errors.push(format!("{prefix}.{key}: expected true or false"));
                None
            }
        }
    }

    fn string(&mut self, t: Option<&Table>, prefix: &str, key: &str) -> Option<String> {
        match t?.get(key)? {
            Value::String(s) => Some(s.clone()),
            _ => {
                self.errors.push(format!("{prefix}.{key}: expected a string"));
                None
            }
        }
    }

    /// A number or an array of numbers.
    fn floats(&mut self, t: Option<&Table>, prefix: &str, key: &str) -> Option<Vec<f64>> {
        let v = t?.get(key)?;
        let bad = |errors: &mut Vec<String>| errors.push(format!("{prefix}.{key}: expected a number or an array of numbers"));
        match v {
            Value::Float(f) => Some(vec![*f]),
            Value::Integer(i) => Some(vec![*i as f64]),
            Value::Array(items) => {
                let mut out = Vec::with_capacity(items.len());
                for item in items {
                    match item {
                        Value::Float(f) => out.push(*f),
                        Value::Integer(i) => out.push(*i as f64),
                        _ => {
                            bad(self.errors);
                            return None;
                        }
                    }
                }
                Some(out)
            }
            _ => {
                bad(self.errors);
                None
            }
        }
    }

    fn vec3(&mut self, t: Option<&Table>, prefix: &str, key: &str) -> Option<[f64; 3]> {
        let v = self.floats(t, prefix, key)?;
        if v.len() != 3 {
            self.errors.push(format!("{prefix}.{key}: expected three components"));
            return None;
        }
        Some([v[0], v[1], v[2]])
    }
}

fn per_axis(values: Option<Vec<f64>>, dim: usize, default: f64, path: &str, errors: &mut Vec<String>) -> Vec<f64> {
    match values {
        None => vec![default; dim],
        Some(v) if v.len() == 1 => vec![v[0]; dim],
        Some(v) if v.len() == dim => v,
        Some(v) => {
            errors.push(format!("{path}: expected 1 or {dim} values, got {}", v.len()));
            vec![default; dim]
        }
    }
}

fn default_grid(kind: ScenarioKind) -> Option<GridConfig> {
    match kind {
        ScenarioKind::FreePacket => Some(GridConfig { points: vec![512], extents: vec![32.0] }),
        ScenarioKind::Larmor | ScenarioKind::RotationDemo => Some(GridConfig { points: vec![4], extents: vec![4.0] }),
        ScenarioKind::SternGerlach => Some(GridConfig { points: vec![1024], extents: vec![120.0] }),
        ScenarioKind::Custom => None,
    }
}

/// Parse and validate a scenario. On failure the error lists every problem found.
pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    let root: Table = toml::from_str(text).map_err(|e| Error::Config(vec![format!("syntax: {}", e.message())]))?;
    let mut errors = Vec::new();
    let mut r = Reader { errors: &mut errors };
    r.unknown(&root, "", &["scenario", "grid", "params", "gauge", "potential", "initial", "sampler", "output", "rotation"]);

    let kind = match root.get("scenario") {
        Some(Value::String(s)) => ScenarioKind::parse(s).or_else(|| {
            let names: Vec<_> = ScenarioKind::ALL.iter().map(|k| k.name()).collect();
            r.errors.push(format!("scenario: unknown scenario '{s}' (expected one of {})", names.join(", ")));
            None
        }),
        Some(_) => {
            r.errors.push("scenario: expected a string".into());
            None
        }
        None => {
            r.errors.push("scenario: missing required key".into());
            None
        }
    };
    let kind_or = kind.unwrap_or(ScenarioKind::Custom);

    // grid
    let g = r.section(&root, "grid");
    if let Some(t) = g {
        r.unknown(t, "grid", &["points", "extents"]);
    }
    let points = r.floats(g, "grid", "points");
    let extents = r.floats(g, "grid", "extents");
    let grid = match (points, extents, default_grid(kind_or)) {
        (None, None, Some(d)) => d,
        (Some(p), Some(e), _) => {
            let pts: Vec<usize> = p.iter().map(|v| if *v >= 1.0 && v.fract() == 0.0 { *v as usize } else { 0 }).collect();
            if pts.is_empty() || pts.len() > 3 {
                r.errors.push("grid.points: expected 1 to 3 axes".into());
            } else if pts.iter().any(|n| *n < 2) {
                r.errors.push("grid.points: each axis needs an integer count of at least 2".into());
            }
            if e.len() != pts.len() {
                r.errors.push("grid.extents: must have one entry per axis in grid.points".into());
            } else if e.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
                r.errors.push("grid.extents: must be positive".into());
            }
            GridConfig { points: pts, extents: e }
        }
        (p, e, _) => {
            if p.is_none() {
                r.errors.push("grid.points: missing required key".into());
            }
            if e.is_none() {
                r.errors.push("grid.extents: missing required key".into());
            }
            GridConfig { points: vec![2], extents: vec![1.0] }
        }
    };
    let dim = grid.points.len().clamp(1, 3);

    // params
    let p = r.section(&root, "params");
    if let Some(t) = p {
        r.unknown(t, "params", &["m", "hbar", "eta", "beta", "dt", "steps", "integrator"]);
    }
    let m = r.float(p, "params", "m").unwrap_or(1.0);
    let hbar = r.float(p, "params", "hbar").unwrap_or(1.0);
    let eta = r.float(p, "params", "eta").unwrap_or(hbar);
    let beta = r.float(p, "params", "beta").unwrap_or(1.0);
    let dt = r.float(p, "params", "dt").unwrap_or(0.01);
    let steps = r.count(p, "params", "steps").unwrap_or(100);
    let integrator = match r.string(p, "params", "integrator").as_deref() {
        None | Some("split_potential") => Integrator::SplitPotential,
        Some("crank_nicolson") => Integrator::CrankNicolson,
        Some(other) => {
            r.errors.push(format!("params.integrator: unknown integrator '{other}' (split_potential or crank_nicolson)"));
            Integrator::SplitPotential
        }
    };
    let params = EdParams { m, hbar, eta, beta, dt };
    for (name, v) in [("m", m), ("hbar", hbar), ("eta", eta), ("dt", dt)] {
        if !(v > 0.0 && v.is_finite()) {
            r.errors.push(format!("params.{name}: must be positive and finite, got {v}"));
        }
    }
    if !beta.is_finite() {
        r.errors.push("params.beta: must be finite".into());
    }
    if steps == 0 {
        r.errors.push("params.steps: must be at least 1".into());
    }

    // gauge
    let ga = r.section(&root, "gauge");
    if let Some(t) = ga {
        r.unknown(t, "gauge", &["a0", "a", "b", "b_gradient", "gradient_axis", "charge"]);
    }
    let default_b = if kind == Some(ScenarioKind::Larmor) { [0.0, 0.0, 1.0] } else { [0.0; 3] };
    let gauge = GaugeConfig {
        a0: r.float(ga, "gauge", "a0").unwrap_or(0.0),
        a: r.vec3(ga, "gauge", "a").unwrap_or([0.0; 3]),
        b: r.vec3(ga, "gauge", "b").unwrap_or(default_b),
        b_gradient: r.float(ga, "gauge", "b_gradient").unwrap_or(0.0),
        gradient_axis: r.count(ga, "gauge", "gradient_axis").unwrap_or(dim - 1),
        charge: r.float(ga, "gauge", "charge").unwrap_or(beta),
    };
    if gauge.gradient_axis >= dim {
        r.errors.push(format!("gauge.gradient_axis: must be below the grid dimension {dim}"));
    }
    if gauge.a.iter().chain(&gauge.b).chain([&gauge.a0, &gauge.b_gradient, &gauge.charge]).any(|v| !v.is_finite()) {
        r.errors.push("gauge: all entries must be finite".into());
    }
    if kind == Some(ScenarioKind::SternGerlach) && gauge.b_gradient == 0.0 {
        r.errors.push("gauge.b_gradient: stern_gerlach needs a non-zero field gradient".into());
    }
    if kind == Some(ScenarioKind::Larmor) && gauge.b.iter().all(|v| *v == 0.0) {
        r.errors.push("gauge.b: larmor needs a non-zero magnetic field".into());
    }

    // potential
    let po = r.section(&root, "potential");
    if let Some(t) = po {
        r.unknown(t, "potential", &["harmonic_omega", "v0", "v"]);
    }
    let potential = PotentialConfig {
        harmonic_omega: r.float(po, "potential", "harmonic_omega").unwrap_or(0.0),
        v0: r.float(po, "potential", "v0").unwrap_or(0.0),
        v: r.vec3(po, "potential", "v").unwrap_or([0.0; 3]),
    };
    if !(potential.harmonic_omega >= 0.0 && potential.harmonic_omega.is_finite()) {
        r.errors.push("potential.harmonic_omega: must be non-negative".into());
    }

    // initial state
    let ini = r.section(&root, "initial");
    if let Some(t) = ini {
        r.unknown(t, "initial", &["profile", "center", "width", "momentum", "spinor", "spinor_imag", "winding"]);
    }
    let default_profile = match kind_or {
        ScenarioKind::Larmor | ScenarioKind::RotationDemo => Profile::Uniform,
        _ => Profile::Gaussian,
    };
    let profile = match r.string(ini, "initial", "profile").as_deref() {
        None => default_profile,
        Some("gaussian") => Profile::Gaussian,
        Some("uniform") => Profile::Uniform,
        Some(other) => {
            r.errors.push(format!("initial.profile: unknown profile '{other}' (gaussian or uniform)"));
            default_profile
        }
    };
    let center = r.floats(ini, "initial", "center");
    let center = per_axis(center, dim, 0.0, "initial.center", r.errors);
    let width = r.floats(ini, "initial", "width");
    let width = per_axis(width, dim, 1.0, "initial.width", r.errors);
    let momentum = r.floats(ini, "initial", "momentum");
    let momentum = per_axis(momentum, dim, 0.0, "initial.momentum", r.errors);
    if width.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
        r.errors.push("initial.width: must be positive".into());
    }
    for (a, c) in center.iter().enumerate() {
        if let Some(ext) = grid.extents.get(a) {
            if !(c.abs() < 0.5 * ext) {
                r.errors.push(format!("initial.center: axis {a} lies outside the box"));
            }
        }
    }
    let default_spinor = match kind_or {
        ScenarioKind::Larmor => vec![1.0, 1.0],
        _ => vec![1.0, 0.0],
    };
    let re = r.floats(ini, "initial", "spinor").unwrap_or(default_spinor);
    let im = r.floats(ini, "initial", "spinor_imag").unwrap_or_else(|| vec![0.0, 0.0]);
    let mut spinor = [[1.0, 0.0], [0.0, 0.0]];
    if re.len() != 2 || im.len() != 2 {
        r.errors.push("initial.spinor: expected two coefficients (c+, c-)".into());
    } else {
        let norm = (re[0] * re[0] + re[1] * re[1] + im[0] * im[0] + im[1] * im[1]).sqrt();
        if !(norm > 0.0 && norm.is_finite()) {
            r.errors.push("initial.spinor: coefficients must not all vanish".into());
        } else {
            spinor = [[re[0] / norm, im[0] / norm], [re[1] / norm, im[1] / norm]];
        }
    }
    let winding = r.int(ini, "initial", "winding").unwrap_or(0) as i32;
    if winding != 0 && dim < 2 {
        r.errors.push("initial.winding: needs a grid of at least two dimensions".into());
    }

    // sampler
    let sa = r.section(&root, "sampler");
    if let Some(t) = sa {
        r.unknown(t, "sampler", &["walkers", "seed", "stride", "k_labels", "bandwidth"]);
    }
    let sampler = SamplerConfig {
        walkers: r.count(sa, "sampler", "walkers").unwrap_or(0),
        seed: r.count(sa, "sampler", "seed").unwrap_or(1) as u64,
        stride: r.count(sa, "sampler", "stride").unwrap_or(10),
        k_labels: r.boolean(sa, "sampler", "k_labels").unwrap_or(false),
        bandwidth: r.float(sa, "sampler", "bandwidth"),
    };
    if sampler.stride == 0 {
        r.errors.push("sampler.stride: must be at least 1".into());
    }
    if let Some(bw) = sampler.bandwidth {
        if !(bw > 0.0 && bw.is_finite()) {
            r.errors.push("sampler.bandwidth: must be positive".into());
        }
    }

    // output
    let ou = r.section(&root, "output");
    if let Some(t) = ou {
        r.unknown(t, "output", &["directory", "stride", "snapshots", "trajectories"]);
    }
    let output = OutputConfig {
        directory: PathBuf::from(r.string(ou, "output", "directory").unwrap_or_else(|| format!("out/{}", kind_or.name()))),
        stride: r.count(ou, "output", "stride").unwrap_or(10),
        snapshots: r.boolean(ou, "output", "snapshots").unwrap_or(true),
        trajectories: r.boolean(ou, "output", "trajectories").unwrap_or(false),
    };
    if output.stride == 0 {
        r.errors.push("output.stride: must be at least 1".into());
    }

    // rotation
    let ro = r.section(&root, "rotation");
    if let Some(t) = ro {
        r.unknown(t, "rotation", &["axis", "angle", "spatial", "interpolation"]);
    }
    let rotation = RotationConfig {
        axis: r.vec3(ro, "rotation", "axis").unwrap_or([0.0, 1.0, 0.0]),
        angle: r.float(ro, "rotation", "angle").unwrap_or(std::f64::consts::FRAC_PI_2),
        spatial: r.boolean(ro, "rotation", "spatial").unwrap_or(false),
        interpolation: match r.string(ro, "rotation", "interpolation").as_deref() {
            None | Some("spectral") => Interpolation::Spectral,
            Some("cubic") => Interpolation::Cubic,
            Some("linear") => Interpolation::Linear,
            Some(other) => {
                r.errors.push(format!("rotation.interpolation: unknown scheme '{other}' (spectral, cubic or linear)"));
                Interpolation::default()
            }
        },
    };
    let axis_norm = rotation.axis.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(axis_norm > 0.0 && axis_norm.is_finite()) {
        r.errors.push("rotation.axis: must be a non-zero vector".into());
    }
    if !rotation.angle.is_finite() {
        r.errors.push("rotation.angle: must be finite".into());
    }
    if rotation.spatial && dim < 2 {
        r.errors.push("rotation.spatial: a 1-D grid admits spin-only rotations".into());
    }

    if !errors.is_empty() {
        return Err(Error::Config(errors));
    }
    let config = ScenarioConfig {
        scenario: kind_or,
        grid,
        params,
        steps,
        integrator,
        gauge,
        potential,
        initial: InitialConfig { profile, center, width, momentum, spinor, winding },
        sampler,
        output,
        rotation,
    };
    let g = config.build_grid()?;
    config.params.check_stability(&g);
    Ok(config)
}

pub fn load_config(path: &std::path::Path) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn messages(text: &str) -> Vec<String> {
        match parse_config(text) {
            Err(Error::Config(m)) => m,
            other => panic!("expected config errors, got {other:?}"),
        }
    }

    #[test]
    fn minimal_free_packet_gets_defaults() {
        let c = parse_config("scenario = \"free_packet\"\n").unwrap();
        assert_eq!(c.params.m, 1.0);
        assert_eq!(c.params.hbar, 1.0);
        assert_eq!(c.params.eta, c.params.hbar);
        assert_eq!(c.sampler.walkers, 0);
        assert_eq!(c.grid.points, vec![512]);
        assert_eq!(c.initial.spinor, [[1.0, 0.0], [0.0, 0.0]]);
    }

    #[test]
    fn eta_defaults_to_hbar() {
        let c = parse_config("scenario = \"free_packet\"\n[params]\nhbar = 0.5\n").unwrap();
        assert_eq!(c.params.eta, 0.5);
    }

    #[test]
    fn negative_mass_is_named() {
        let m = messages("scenario = \"free_packet\"\n[params]\nm = -1.0\n");
        assert!(m.iter().any(|e| e.starts_with("params.m")), "{m:?}");
    }

    #[test]
    fn stern_gerlach_needs_gradient() {
        let m = messages("scenario = \"stern_gerlach\"\n");
        assert!(m.iter().any(|e| e.starts_with("gauge.b_gradient")), "{m:?}");
    }

    #[test]
    fn all_errors_are_collected() {
        let m = messages(
            "scenario = \"free_packet\"\nbogus = 1\n[params]\nm = 0\ndt = -1\ncolour = \"red\"\n[sampler]\nstride = 0\n",
        );
        for key in ["bogus", "params.m", "params.dt", "params.colour", "sampler.stride"] {
            assert!(m.iter().any(|e| e.starts_with(key)), "missing {key} in {m:?}");
        }
    }

    #[test]
    fn spinor_is_normalised() {
        let c = parse_config("scenario = \"free_packet\"\n[initial]\nspinor = [3.0, 4.0]\n").unwrap();
        let s = c.initial.spinor;
        assert!((s[0][0] - 0.6).abs() < 1e-15 && (s[1][0] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn custom_requires_grid() {
        let m = messages("scenario = \"custom\"\n");
        assert!(m.iter().any(|e| e.starts_with("grid.points")));
        assert!(messages("scenario = \"warp\"\n").iter().any(|e| e.starts_with("scenario")));
        assert!(messages("").iter().any(|e| e.starts_with("scenario")));
    }
}
