//! Scenario configuration: a flat TOML document with sections mirroring
//! the library modules. Unknown keys are rejected and all violations are
//! reported in one pass.

use anyhow::{anyhow, Result};
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Clone, Debug)]
pub struct ModelConfig {
    pub gamma: f64,
    pub angular_amplitude: f64,
}

#[derive(Clone, Debug)]
pub struct VelocityGridConfig {
    pub per_axis: usize,
    pub radius: f64,
    pub moment_tol: Option<f64>,
    pub active_radius: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct AngularConfig {
    pub polar: usize,
    pub azimuth: usize,
}

#[derive(Clone, Debug)]
pub struct SpatialConfig {
    pub per_axis: usize,
    pub box_length: f64,
    pub dim: usize,
}

#[derive(Clone, Debug)]
pub struct WeightsConfig {
    pub vartheta: f64,
    pub sigma: f64,
    pub ell: f64,
    pub ell0: f64,
}

#[derive(Clone, Debug)]
pub struct SolverSection {
    pub dt: f64,
    pub t_end: f64,
    pub scheme: String,
    pub collision_mode: String,
    pub bgk_nu0: f64,
    pub record_every: usize,
    pub include_gamma: bool,
    pub eps: f64,
    pub eps_list: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct InitialConfig {
    pub preset: String,
    pub amplitude: f64,
}

#[derive(Clone, Debug)]
pub struct LinearConfig {
    pub k_min: f64,
    pub k_max: f64,
    pub k_count: usize,
    pub t_end: f64,
    pub dt_record: f64,
    pub eps: f64,
    pub fit_window: [f64; 2],
    pub mode_count: usize,
    /// Reduced velocity grid for the dense semigroup work.
    pub reduced_per_axis: usize,
    pub reduced_radius: f64,
    pub reduced_tol: f64,
    /// Initial data carry the modes `|k| <= k_cut`.
    pub k_cut: f64,
}

#[derive(Clone, Debug)]
pub struct CharacteristicsConfig {
    pub eps_list: Vec<f64>,
    pub t_factor: f64,
    pub field_amplitude: f64,
    pub n_steps: usize,
}

#[derive(Clone, Debug)]
pub struct NuTildeConfig {
    pub eps: f64,
    pub gamma_list: Vec<f64>,
    pub delta_field: f64,
}

#[derive(Clone, Debug)]
pub struct AuditConfig {
    pub refine_to: usize,
}

#[derive(Clone, Debug)]
pub struct ScenarioConfig {
    pub model: ModelConfig,
    pub velocity_grid: VelocityGridConfig,
    pub angular: AngularConfig,
    pub spatial_grid: SpatialConfig,
    pub weights: WeightsConfig,
    pub solver: SolverSection,
    pub initial: InitialConfig,
    pub linear: LinearConfig,
    pub characteristics: CharacteristicsConfig,
    pub nu_tilde: NuTildeConfig,
    pub audit: AuditConfig,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig {
                gamma: 1.0,
                angular_amplitude: 1.0,
            },
            velocity_grid: VelocityGridConfig {
                per_axis: 16,
                radius: 8.0,
                moment_tol: None,
                active_radius: None,
            },
            angular: AngularConfig {
                polar: 6,
                azimuth: 8,
            },
            spatial_grid: SpatialConfig {
                per_axis: 64,
                box_length: 2.0 * std::f64::consts::PI,
                dim: 1,
            },
            weights: WeightsConfig {
                vartheta: 0.01,
                sigma: 1.0 / 24.0,
                ell: 2.5,
                ell0: 1.0,
            },
            solver: SolverSection {
                dt: 1e-3,
                t_end: 1.0,
                scheme: "strang".into(),
                collision_mode: "bgk".into(),
                bgk_nu0: 1.0,
                record_every: 10,
                include_gamma: false,
                eps: 0.5,
                eps_list: vec![0.5, 0.25, 0.125],
            },
            initial: InitialConfig {
                preset: "macro_sine".into(),
                amplitude: 1e-3,
            },
            linear: LinearConfig {
                k_min: 1e-3,
                k_max: 8.0,
                k_count: 48,
                t_end: 300.0,
                dt_record: 2.5,
                eps: 1.0,
                fit_window: [20.0, 300.0],
                mode_count: 200,
                reduced_per_axis: 8,
                reduced_radius: 4.0,
                reduced_tol: 5e-3,
                k_cut: 1.0,
            },
            characteristics: CharacteristicsConfig {
                eps_list: vec![1.0, 0.5, 0.25],
                t_factor: 0.1,
                field_amplitude: 1e-2,
                n_steps: 64,
            },
            nu_tilde: NuTildeConfig {
                eps: 0.5,
                gamma_list: vec![-1.0, -2.0],
                delta_field: 1e-3,
            },
            audit: AuditConfig { refine_to: 20 },
            seed: 0,
        }
    }
}

pub const PRESETS: &[&str] = &["zero", "macro_sine", "shear", "well_prepared"];

struct Walker<'a> {
    violations: Vec<String>,
    table: &'a toml::Table,
    section: String,
    seen: Vec<String>,
}

impl<'a> Walker<'a> {
    fn new(table: &'a toml::Table, section: &str) -> Self {
        Self {
            violations: Vec::new(),
            table,
            section: section.to_string(),
            seen: Vec::new(),
        }
    }

    fn path(&self, key: &str) -> String {
        if self.section.is_empty() {
            key.to_string()
        } else {
            format!("{}.{key}", self.section)
        }
    }

    fn float(&mut self, key: &str, target: &mut f64) {
        self.seen.push(key.into());
        match self.table.get(key) {
            None => {}
            Some(v) => match v.as_float().or_else(|| v.as_integer().map(|i| i as f64)) {
                Some(x) => *target = x,
                None => self
                    .violations
                    .push(format!("{}: expected a number", self.path(key))),
            },
        }
    }

    fn integer(&mut self, key: &str, target: &mut usize) {
        self.seen.push(key.into());
        match self.table.get(key) {
            None => {}
            Some(v) => match v.as_integer() {
                Some(x) if x >= 0 => *target = x as usize,
                _ => self
                    .violations
                    .push(format!("{}: expected a nonnegative integer", self.path(key))),
            },
        }
    }

    fn boolean(&mut self, key: &str, target: &mut bool) {
        self.seen.push(key.into());
        match self.table.get(key) {
            None => {}
            Some(v) => match v.as_bool() {
                Some(x) => *target = x,
                None => self
                    .violations
                    .push(format!("{}: expected a boolean", self.path(key))),
            },
        }
    }

    fn string(&mut self, key: &str, target: &mut String) {
        self.seen.push(key.into());
        match self.table.get(key) {
            None => {}
            Some(v) => match v.as_str() {
                Some(x) => *target = x.to_string(),
                None => self
                    .violations
                    .push(format!("{}: expected a string", self.path(key))),
            },
        }
    }

    fn float_list(&mut self, key: &str, target: &mut Vec<f64>) {
        self.seen.push(key.into());
        if let Some(v) = self.table.get(key) {
            match v.as_array() {
                Some(arr) => {
                    let mut out = Vec::new();
                    for item in arr {
                        match item
                            .as_float()
                            .or_else(|| item.as_integer().map(|i| i as f64))
                        {
                            Some(x) => out.push(x),
                            None => {
                                self.violations.push(format!(
                                    "{}: expected an array of numbers",
                                    self.path(key)
                                ));
                                return;
                            }
                        }
                    }
                    *target = out;
                }
                None => self
                    .violations
                    .push(format!("{}: expected an array", self.path(key))),
            }
        }
    }

    fn optional_float(&mut self, key: &str, target: &mut Option<f64>) {
        self.seen.push(key.into());
        if let Some(v) = self.table.get(key) {
            match v.as_float().or_else(|| v.as_integer().map(|i| i as f64)) {
                Some(x) => *target = Some(x),
                None => self
                    .violations
                    .push(format!("{}: expected a number", self.path(key))),
            }
        }
    }

    fn finish(mut self) -> Vec<String> {
        for key in self.table.keys() {
            if !self.seen.iter().any(|s| s == key) {
                self.violations
                    .push(format!("unknown key {}", self.path(key)));
            }
        }
        self.violations
    }
}

/// Parse and validate; every violation is reported, not just the first.
pub fn parse_config(path: &Path) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| anyhow!("cannot read config {}: {e}", path.display()))?;
    parse_config_str(&text)
}

pub fn parse_config_str(text: &str) -> Result<ScenarioConfig> {
    let root: toml::Table = text
        .parse()
        .map_err(|e| anyhow!("config is not well-formed TOML: {e}"))?;
    let mut cfg = ScenarioConfig::default();
    let mut violations: Vec<String> = Vec::new();
    let known_sections = [
        "model",
        "velocity_grid",
        "angular",
        "spatial_grid",
        "weights",
        "solver",
        "initial",
        "linear",
        "characteristics",
        "nu_tilde",
        "audit",
    ];
    let empty = toml::Table::new();
    let section = |name: &str| -> &toml::Table {
        root.get(name).and_then(|v| v.as_table()).unwrap_or(&empty)
    };

    for key in root.keys() {
        if key == "seed" {
            continue;
        }
        if !known_sections.contains(&key.as_str()) {
            violations.push(format!("unknown section [{key}]"));
        } else if root.get(key).and_then(|v| v.as_table()).is_none() {
            violations.push(format!("[{key}] must be a table"));
        }
    }
    if let Some(v) = root.get("seed") {
        match v.as_integer() {
            Some(s) if s >= 0 => cfg.seed = s as u64,
            _ => violations.push("seed: expected a nonnegative integer".into()),
        }
    }

    {
        let mut w = Walker::new(section("model"), "model");
        w.float("gamma", &mut cfg.model.gamma);
        w.float("angular_amplitude", &mut cfg.model.angular_amplitude);
        violations.extend(w.finish());
    }
    {
        let mut w = Walker::new(section("velocity_grid"), "velocity_grid");
        w.integer("per_axis", &mut cfg.velocity_grid.per_axis);
        w.float("radius", &mut cfg.velocity_grid.radius);
        w.optional_float("moment_tol", &mut cfg.velocity_grid.moment_tol);
        w.optional_float("active_radius", &mut cfg.velocity_grid.active_radius);
        violations.extend(w.finish());
    }
    {
        let mut w = Walker::new(section("angular"), "angular");
        w.integer("polar", &mut cfg.angular.polar);
        w.integer("azimuth", &mut cfg.angular.azimuth);
        violations.extend(w.finish());
    }
    {
        let mut w = Walker::new(section("spatial_grid"), "spatial_grid");
        w.integer("per_axis", &mut cfg.spatial_grid.per_axis);
        w.float("box_length", &mut cfg.spatial_grid.box_length);
        w.integer("dim", &mut cfg.spatial_grid.dim);
        violations.extend(w.finish());
    }
    {
        let mut w = Walker::new(section("weights"), "weights");
        w.float("vartheta", &mut cfg.weights.vartheta);
        w.float("sigma", &mut cfg.weights.sigma);
        w.float("ell", &mut cfg.weights.ell);
        w.float("ell0", &mut cfg.weights.ell0);
        violations.extend(w.finish());
    }
    {
        let mut w = Walker::new(section("solver"), "solver");
        w.float("dt", &mut cfg.solver.dt);
        w.float("t_end", &mut cfg.solver.t_end);
        w.string("scheme", &mut cfg.solver.scheme);
        w.string("collision_mode", &mut cfg.solver.collision_mode);
        w.float("bgk_nu0", &mut cfg.solver.bgk_nu0);
        w.integer("record_every", &mut cfg.solver.record_every);
        w.boolean("include_gamma", &mut cfg.solver.include_gamma);
        w.float("eps", &mut cfg.solver.eps);
        w.float_list("eps_list", &mut cfg.solver.eps_list);
        violations.extend(w.finish());
    }
    {
        let mut w = Walker::new(section("initial"), "initial");
        w.string("preset", &mut cfg.initial.preset);
        w.float("amplitude", &mut cfg.initial.amplitude);
        violations.extend(w.finish());
    }
    {
        let mut w = Walker::new(section("linear"), "linear");
        w.float("k_min", &mut cfg.linear.k_min);
        w.float("k_max", &mut cfg.linear.k_max);
        w.integer("k_count", &mut cfg.linear.k_count);
        w.float("t_end", &mut cfg.linear.t_end);
        w.float("dt_record", &mut cfg.linear.dt_record);
        w.float("eps", &mut cfg.linear.eps);
        w.integer("mode_count", &mut cfg.linear.mode_count);
        w.integer("reduced_per_axis", &mut cfg.linear.reduced_per_axis);
        w.float("reduced_radius", &mut cfg.linear.reduced_radius);
        w.float("reduced_tol", &mut cfg.linear.reduced_tol);
        w.float("k_cut", &mut cfg.linear.k_cut);
        let mut window = vec![cfg.linear.fit_window[0], cfg.linear.fit_window[1]];
        w.float_list("fit_window", &mut window);
        if window.len() == 2 {
            cfg.linear.fit_window = [window[0], window[1]];
        } else {
            violations.push("linear.fit_window: expected [t_lo, t_hi]".into());
        }
        violations.extend(w.finish());
    }
    {
        let mut w = Walker::new(section("characteristics"), "characteristics");
        w.float_list("eps_list", &mut cfg.characteristics.eps_list);
        w.float("t_factor", &mut cfg.characteristics.t_factor);
        w.float("field_amplitude", &mut cfg.characteristics.field_amplitude);
        w.integer("n_steps", &mut cfg.characteristics.n_steps);
        violations.extend(w.finish());
    }
    {
        let mut w = Walker::new(section("nu_tilde"), "nu_tilde");
        w.float("eps", &mut cfg.nu_tilde.eps);
        w.float_list("gamma_list", &mut cfg.nu_tilde.gamma_list);
        w.float("delta_field", &mut cfg.nu_tilde.delta_field);
        violations.extend(w.finish());
    }
    {
        let mut w = Walker::new(section("audit"), "audit");
        w.integer("refine_to", &mut cfg.audit.refine_to);
        violations.extend(w.finish());
    }

    // Range validation against the module preconditions.
    if !(cfg.model.gamma > -3.0 && cfg.model.gamma <= 1.0) {
        violations.push(format!(
            "model.gamma = {} outside (-3, 1]",
            cfg.model.gamma
        ));
    }
    if !(cfg.model.angular_amplitude > 0.0) {
        violations.push("model.angular_amplitude must be positive".into());
    }
    if cfg.velocity_grid.per_axis < 4 || cfg.velocity_grid.per_axis % 2 != 0 {
        violations.push("velocity_grid.per_axis must be even and at least 4".into());
    }
    if cfg.velocity_grid.radius < 4.0 {
        violations.push("velocity_grid.radius must be at least 4".into());
    }
    if cfg.angular.polar < 2 || cfg.angular.polar % 2 != 0 {
        violations.push("angular.polar must be even and at least 2".into());
    }
    if cfg.angular.azimuth < 2 || cfg.angular.azimuth % 2 != 0 {
        violations.push("angular.azimuth must be even and at least 2".into());
    }
    if cfg.spatial_grid.per_axis < 8 || !cfg.spatial_grid.per_axis.is_power_of_two() {
        violations.push("spatial_grid.per_axis must be a power of two at least 8".into());
    }
    if !(cfg.spatial_grid.box_length > 0.0) {
        violations.push("spatial_grid.box_length must be positive".into());
    }
    if cfg.spatial_grid.dim != 1 && cfg.spatial_grid.dim != 3 {
        violations.push("spatial_grid.dim must be 1 or 3".into());
    }
    if !(cfg.weights.vartheta > 0.0 && cfg.weights.vartheta <= 0.05) {
        violations.push("weights.vartheta must lie in (0, 0.05]".into());
    }
    if !(cfg.weights.sigma > 0.0 && cfg.weights.sigma <= 0.25) {
        violations.push("weights.sigma must lie in (0, 1/4]".into());
    }
    if !(cfg.weights.ell0 > 0.75) {
        violations.push("weights.ell0 must exceed 3/4".into());
    }
    if !(cfg.solver.dt > 0.0) {
        violations.push("solver.dt must be positive".into());
    }
    if !(cfg.solver.t_end >= 0.0) {
        violations.push("solver.t_end must be nonnegative".into());
    }
    if cfg.solver.record_every == 0 {
        violations.push("solver.record_every must be at least 1".into());
    }
    if cfg.solver.scheme != "strang" && cfg.solver.scheme != "lie" {
        violations.push(format!(
            "solver.scheme must be \"strang\" or \"lie\" (got \"{}\")",
            cfg.solver.scheme
        ));
    }
    if cfg.solver.collision_mode != "bgk" && cfg.solver.collision_mode != "full" {
        violations.push(format!(
            "solver.collision_mode must be \"bgk\" or \"full\" (got \"{}\")",
            cfg.solver.collision_mode
        ));
    }
    if !(cfg.solver.bgk_nu0 > 0.0) {
        violations.push("solver.bgk_nu0 must be positive".into());
    }
    for eps in cfg.solver.eps_list.iter().chain([&cfg.solver.eps]) {
        if !(*eps > 0.0 && *eps <= 1.0) {
            violations.push(format!("solver eps value {eps} outside (0, 1]"));
        }
    }
    if !PRESETS.contains(&cfg.initial.preset.as_str()) {
        violations.push(format!(
            "initial.preset \"{}\" unknown (available: {})",
            cfg.initial.preset,
            PRESETS.join(", ")
        ));
    }
    if !(cfg.linear.k_min > 0.0 && cfg.linear.k_max > cfg.linear.k_min) {
        violations.push("linear: need 0 < k_min < k_max".into());
    }
    if cfg.linear.k_count < 4 {
        violations.push("linear.k_count must be at least 4".into());
    }
    if !(cfg.linear.eps > 0.0 && cfg.linear.eps <= 1.0) {
        violations.push("linear.eps outside (0, 1]".into());
    }
    if cfg.linear.reduced_per_axis < 4 || cfg.linear.reduced_per_axis % 2 != 0 {
        violations.push("linear.reduced_per_axis must be even and at least 4".into());
    }
    if !(cfg.linear.reduced_radius >= 4.0) {
        violations.push("linear.reduced_radius must be at least 4".into());
    }
    if !(cfg.linear.reduced_tol > 0.0) {
        violations.push("linear.reduced_tol must be positive".into());
    }
    if !(cfg.nu_tilde.eps > 0.0 && cfg.nu_tilde.eps <= 1.0) {
        violations.push("nu_tilde.eps outside (0, 1]".into());
    }
    for g in &cfg.nu_tilde.gamma_list {
        if !(*g > -3.0 && *g < 0.0) {
            violations.push(format!(
                "nu_tilde.gamma_list entry {g} must be a soft exponent in (-3, 0)"
            ));
        }
    }
    if cfg.audit.refine_to <= cfg.velocity_grid.per_axis {
        violations.push("audit.refine_to must exceed velocity_grid.per_axis".into());
    }

    if violations.is_empty() {
        Ok(cfg)
    } else {
        Err(anyhow!(
            "configuration invalid ({} problem{}):\n  - {}",
            violations.len(),
            if violations.len() == 1 { "" } else { "s" },
            violations.join("\n  - ")
        ))
    }
}

/// Stable key-value echo of the effective configuration.
pub fn echo_config(cfg: &ScenarioConfig) -> BTreeMap<String, String> {
    let mut m = BTreeMap::new();
    let mut put = |k: &str, v: String| {
        m.insert(k.to_string(), v);
    };
    put("model.gamma", format!("{}", cfg.model.gamma));
    put(
        "model.angular_amplitude",
        format!("{}", cfg.model.angular_amplitude),
    );
    put(
        "velocity_grid.per_axis",
        format!("{}", cfg.velocity_grid.per_axis),
    );
    put("velocity_grid.radius", format!("{}", cfg.velocity_grid.radius));
    if let Some(t) = cfg.velocity_grid.moment_tol {
        put("velocity_grid.moment_tol", format!("{t}"));
    }
    if let Some(a) = cfg.velocity_grid.active_radius {
        put("velocity_grid.active_radius", format!("{a}"));
    }
    put("angular.polar", format!("{}", cfg.angular.polar));
    put("angular.azimuth", format!("{}", cfg.angular.azimuth));
    put("spatial_grid.per_axis", format!("{}", cfg.spatial_grid.per_axis));
    put(
        "spatial_grid.box_length",
        format!("{}", cfg.spatial_grid.box_length),
    );
    put("spatial_grid.dim", format!("{}", cfg.spatial_grid.dim));
    put("weights.vartheta", format!("{}", cfg.weights.vartheta));
    put("weights.sigma", format!("{}", cfg.weights.sigma));
    put("weights.ell", format!("{}", cfg.weights.ell));
    put("weights.ell0", format!("{}", cfg.weights.ell0));
    put("solver.dt", format!("{}", cfg.solver.dt));
    put("solver.t_end", format!("{}", cfg.solver.t_end));
    put("solver.scheme", cfg.solver.scheme.clone());
    put("solver.collision_mode", cfg.solver.collision_mode.clone());
    put("solver.bgk_nu0", format!("{}", cfg.solver.bgk_nu0));
    put("solver.record_every", format!("{}", cfg.solver.record_every));
    put("solver.include_gamma", format!("{}", cfg.solver.include_gamma));
    put("solver.eps", format!("{}", cfg.solver.eps));
    put(
        "solver.eps_list",
        cfg.solver
            .eps_list
            .iter()
            .map(|e| e.to_string())
            .collect::<Vec<_>>()
            .join(","),
    );
    put("initial.preset", cfg.initial.preset.clone());
    put("initial.amplitude", format!("{}", cfg.initial.amplitude));
    put("linear.k_min", format!("{}", cfg.linear.k_min));
    put("linear.k_max", format!("{}", cfg.linear.k_max));
    put("linear.k_count", format!("{}", cfg.linear.k_count));
    put("linear.t_end", format!("{}", cfg.linear.t_end));
    put("linear.dt_record", format!("{}", cfg.linear.dt_record));
    put("linear.eps", format!("{}", cfg.linear.eps));
    put("linear.mode_count", format!("{}", cfg.linear.mode_count));
    put(
        "linear.fit_window",
        format!("{},{}", cfg.linear.fit_window[0], cfg.linear.fit_window[1]),
    );
    put("seed", format!("{}", cfg.seed));
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_fills_defaults() {
        let cfg = parse_config_str("[model]\ngamma = 1.0\n").unwrap();
        assert_eq!(cfg.velocity_grid.per_axis, 16);
        assert_eq!(cfg.solver.scheme, "strang");
    }

    #[test]
    fn gamma_range_rejected() {
        let err = parse_config_str("[model]\ngamma = -3.0\n").unwrap_err();
        assert!(err.to_string().contains("outside (-3, 1]"));
    }

    #[test]
    fn all_violations_reported_in_one_pass() {
        let err = parse_config_str(
            "[model]\ngamma = -3.5\n[solver]\nscheme = \"verlet\"\nmystery = 1\n",
        )
        .unwrap_err();
        let text = err.to_string();
        assert!(text.contains("gamma"), "{text}");
        assert!(text.contains("scheme"), "{text}");
        assert!(text.contains("unknown key solver.mystery"), "{text}");
        assert!(text.contains("3 problems"), "{text}");
    }

    #[test]
    fn unknown_section_rejected() {
        let err = parse_config_str("[solvr]\ndt = 0.1\n").unwrap_err();
        assert!(err.to_string().contains("unknown section [solvr]"));
    }
}
