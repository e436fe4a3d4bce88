//! Scenario files: sectioned `key = value` text in TOML syntax.
//!
//! ```toml
//! [plant]      # L0 n_L D_s d_c k0|K0 V0 x0 x_M Gamma0 rho P_atm m R domain_margin
//! [gains]      # k_p k_m k_i alpha epsilon
//! [force]      # kind = "constant" (F0) | "tanh_friction" (c) | "spring" (k)
//! [solver]     # method rel_tol abs_tol max_step fixed_step output_dt
//! [schedule]   # x_star duration steps = [[t, x_star], ...]
//! [initial]    # x xdot P1 P2 F_hat
//! ```
//!
//! All values are SI. Unknown keys are rejected with the line they appear on.

use std::borrow::Cow;
use std::fmt::Write as _;
use std::ops::Range;

use toml::de::{DeTable, DeValue};
use toml::Spanned;

use crate::controller::ControllerGains;
use crate::error::{Error, Result};
use crate::plant::{ActuatorGeometry, FluidParams, PlantParams, DEFAULT_DOMAIN_MARGIN};
use crate::simulation::{ForceModel, InitialCondition, ScenarioConfig, SetpointChange, SolverConfig};
use crate::solver::Method;

const PLANT_KEYS: &[&str] = &[
    "L0",
    "n_L",
    "D_s",
    "d_c",
    "k0",
    "K0",
    "V0",
    "x0",
    "x_M",
    "Gamma0",
    "rho",
    "P_atm",
    "m",
    "R",
    "domain_margin",
];
const GAINS_KEYS: &[&str] = &["k_p", "k_m", "k_i", "alpha", "epsilon"];
const FORCE_KEYS: &[&str] = &["kind", "F0", "c", "k"];
const SOLVER_KEYS: &[&str] = &["method", "rel_tol", "abs_tol", "max_step", "fixed_step", "output_dt"];
const SCHEDULE_KEYS: &[&str] = &["x_star", "duration", "steps"];
const INITIAL_KEYS: &[&str] = &["x", "xdot", "P1", "P2", "F_hat"];

const SECTIONS: &[(&str, &[&str])] = &[
    ("plant", PLANT_KEYS),
    ("gains", GAINS_KEYS),
    ("force", FORCE_KEYS),
    ("solver", SOLVER_KEYS),
    ("schedule", SCHEDULE_KEYS),
    ("initial", INITIAL_KEYS),
];

/// Scalar keys accepted by [`set_param`], in section order.
pub const SWEEPABLE: &[&str] = &[
    "L0",
    "n_L",
    "D_s",
    "d_c",
    "k0",
    "K0",
    "V0",
    "x0",
    "x_M",
    "Gamma0",
    "rho",
    "P_atm",
    "m",
    "R",
    "domain_margin",
    "k_p",
    "k_m",
    "k_i",
    "alpha",
    "epsilon",
    "F0",
    "c",
    "k",
    "rel_tol",
    "abs_tol",
    "max_step",
    "fixed_step",
    "output_dt",
    "x_star",
    "duration",
    "x",
    "xdot",
    "P1",
    "P2",
    "F_hat",
];

fn suggestion(key: &str, candidates: &[&str]) -> Option<String> {
    let norm = |s: &str| s.to_ascii_lowercase().replace(['_', '-'], "");
    let wanted = norm(key);
    if let Some(c) = candidates.iter().find(|c| norm(c) == wanted) {
        return Some(c.to_string());
    }
    candidates
        .iter()
        .map(|c| (strsim::levenshtein(&norm(c), &wanted), c))
        .filter(|(d, _)| *d <= 2)
        .min_by_key(|(d, _)| *d)
        .map(|(_, c)| c.to_string())
}

struct Source<'a> {
    text: &'a str,
}

impl Source<'_> {
    fn line(&self, span: Range<usize>) -> usize {
        let end = span.start.min(self.text.len());
        self.text[..end].bytes().filter(|&b| b == b'\n').count() + 1
    }

    fn error(&self, span: Range<usize>, key: &str, message: impl Into<String>) -> Error {
        Error::Parse {
            line: Some(self.line(span)),
            key: key.to_string(),
            message: message.into(),
        }
    }
}

fn key_error(src: &Source<'_>, span: Range<usize>, section: Option<&str>, key: &str, allowed: &[&str]) -> Error {
    let place = match section {
        Some(s) => format!("unknown key in [{s}]"),
        None => "unknown section".to_string(),
    };
    let message = match suggestion(key, allowed) {
        Some(s) => format!("{place}; expected `{s}`"),
        None => format!("{place}; expected one of {}", allowed.join(", ")),
    };
    src.error(span, key, message)
}

/// One parsed section with the span of each key.
struct Section<'a, 'i> {
    name: &'static str,
    src: &'a Source<'a>,
    header: Range<usize>,
    table: Option<&'a DeTable<'i>>,
}

impl<'a, 'i> Section<'a, 'i> {
    fn entry(&self, key: &str) -> Option<(&'a Spanned<DeString<'i>>, &'a Spanned<DeValue<'i>>)> {
        self.table?.iter().find(|(k, _)| k.get_ref().as_ref() == key)
    }

    fn missing(&self, key: &str) -> Error {
        let message = format!("missing required key in [{}]", self.name);
        match self.table {
            Some(_) => self.src.error(self.header.clone(), key, message),
            None => Error::Parse {
                line: None,
                key: key.to_string(),
                message: format!("missing section [{}]", self.name),
            },
        }
    }

    fn f64_opt(&self, key: &str) -> Result<Option<f64>> {
        let Some((k, v)) = self.entry(key) else {
            return Ok(None);
        };
        match number(v.get_ref()) {
            Some(x) if x.is_finite() => Ok(Some(x)),
            Some(_) => Err(self.src.error(k.span(), key, "value must be finite")),
            None => Err(self.src.error(k.span(), key, "expected a number")),
        }
    }

    fn f64(&self, key: &str) -> Result<f64> {
        self.f64_opt(key)?.ok_or_else(|| self.missing(key))
    }

    fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        Ok(self.f64_opt(key)?.unwrap_or(default))
    }

    fn u32(&self, key: &str) -> Result<u32> {
        let (k, v) = self.entry(key).ok_or_else(|| self.missing(key))?;
        match v.get_ref() {
            DeValue::Integer(i) => u32::from_str_radix(i.as_str(), i.radix())
                .map_err(|_| self.src.error(k.span(), key, "expected a non-negative integer")),
            _ => Err(self.src.error(k.span(), key, "expected an integer")),
        }
    }

    fn str_opt(&self, key: &str) -> Result<Option<(&'a str, Range<usize>)>> {
        let Some((k, v)) = self.entry(key) else {
            return Ok(None);
        };
        match v.get_ref() {
            DeValue::String(s) => Ok(Some((s.as_ref(), k.span()))),
            _ => Err(self.src.error(k.span(), key, "expected a string")),
        }
    }

    fn span_of(&self, key: &str) -> Option<Range<usize>> {
        self.entry(key).map(|(k, _)| k.span())
    }
}

type DeString<'i> = Cow<'i, str>;

fn number(v: &DeValue<'_>) -> Option<f64> {
    match v {
        DeValue::Float(f) => f.as_str().parse().ok(),
        DeValue::Integer(i) => i64::from_str_radix(i.as_str(), i.radix()).ok().map(|i| i as f64),
        _ => None,
    }
}

/// Parses and validates a scenario document.
pub fn parse(text: &str) -> Result<ScenarioConfig> {
    let src = Source { text };
    let root = DeTable::parse(text).map_err(|e| Error::Parse {
        line: e.span().map(|s| src.line(s)),
        key: String::new(),
        message: e.message().trim().to_string(),
    })?;

    let section_names: Vec<&str> = SECTIONS.iter().map(|(n, _)| *n).collect();
    let mut found: Vec<Section<'_, '_>> = Vec::new();
    for (key, value) in root.get_ref().iter() {
        let name = key.get_ref().as_ref();
        let Some(&(static_name, allowed)) = SECTIONS.iter().find(|(n, _)| *n == name) else {
            return Err(key_error(&src, key.span(), None, name, &section_names));
        };
        let DeValue::Table(table) = value.get_ref() else {
            return Err(src.error(key.span(), name, "expected a section"));
        };
        for (k, _) in table.iter() {
            let kname = k.get_ref().as_ref();
            if !allowed.contains(&kname) {
                return Err(key_error(&src, k.span(), Some(static_name), kname, allowed));
            }
        }
        found.push(Section {
            name: static_name,
            src: &src,
            header: key.span(),
            table: Some(table),
        });
    }
    let section = |name: &'static str| -> Section<'_, '_> {
        found
            .iter()
            .find(|s| s.name == name)
            .map(|s| Section {
                name,
                src: &src,
                header: s.header.clone(),
                table: s.table,
            })
            .unwrap_or(Section {
                name,
                src: &src,
                header: 0..0,
                table: None,
            })
    };

    let plant = section("plant");
    if plant.table.is_none() {
        return Err(plant.missing("L0"));
    }
    let params = parse_plant(&plant)?;
    let gains_section = section("gains");
    let gains = ControllerGains {
        k_p: gains_section.f64("k_p")?,
        k_m: gains_section.f64("k_m")?,
        k_i: gains_section.f64("k_i")?,
        alpha: gains_section.f64("alpha")?,
    };
    let epsilon = gains_section.f64_or("epsilon", 0.0)?;
    let force = parse_force(&section("force"))?;
    let (solver, output_dt) = parse_solver(&section("solver"))?;
    let (schedule, duration) = parse_schedule(&section("schedule"))?;

    let init = section("initial");
    let initial = InitialCondition {
        x: init.f64_or("x", 0.0)?,
        xdot: init.f64_or("xdot", 0.0)?,
        p1: init.f64_or("P1", 0.0)?,
        p2: init.f64_or("P2", 0.0)?,
        f_hat: init.f64_opt("F_hat")?,
    };

    let scenario = ScenarioConfig {
        params,
        gains,
        epsilon,
        schedule,
        initial,
        force,
        duration,
        solver,
        output_dt,
    };
    scenario.validate().map_err(|e| locate(e, &found))?;
    Ok(scenario)
}

/// Attaches the line of the offending key to a validation error, when known.
fn locate(e: Error, sections: &[Section<'_, '_>]) -> Error {
    if let Error::InvalidParameter { name, reason } = &e {
        for s in sections {
            if let Some(span) = s.span_of(name) {
                return s.src.error(span, name, reason.clone());
            }
        }
    }
    e
}

fn parse_plant(s: &Section<'_, '_>) -> Result<PlantParams> {
    let length = s.f64("L0")?;
    let pouches = s.u32("n_L")?;
    let d_s = s.f64("D_s")?;
    let d_c = s.f64("d_c")?;
    let dead_volume = s.f64("V0")?;
    let x0 = s.f64("x0")?;
    let x_max = s.f64("x_M")?;
    let shape = crate::plant::shape_factor(length, pouches, d_s, d_c);
    let (k0, volume_scale) = match (s.f64_opt("k0")?, s.f64_opt("K0")?) {
        (Some(k0), Some(big)) => (k0, big),
        (Some(k0), None) => (k0, k0 * shape),
        (None, Some(big)) => (big / shape, big),
        (None, None) => return Err(s.missing("K0")),
    };
    let geometry = ActuatorGeometry {
        length,
        pouches,
        d_s,
        d_c,
        k0,
        volume_scale,
        dead_volume,
        x0,
        x_max,
        domain_margin: s.f64_or("domain_margin", DEFAULT_DOMAIN_MARGIN)?,
    };
    let water = FluidParams::water();
    let fluid = FluidParams {
        bulk_modulus: s.f64("Gamma0")?,
        density: s.f64("rho")?,
        atmospheric_pressure: s.f64_or("P_atm", water.atmospheric_pressure)?,
    };
    Ok(PlantParams {
        geometry,
        fluid,
        payload_mass: s.f64("m")?,
        damping: s.f64("R")?,
    })
}

fn parse_force(s: &Section<'_, '_>) -> Result<ForceModel> {
    let (kind, span) = s.str_opt("kind")?.ok_or_else(|| s.missing("kind"))?;
    let (model, key): (fn(f64) -> ForceModel, &str) = match kind {
        "constant" => (ForceModel::Constant, "F0"),
        "tanh_friction" => (ForceModel::TanhFriction, "c"),
        "spring" => (ForceModel::Spring, "k"),
        other => {
            return Err(s.src.error(
                span,
                "kind",
                format!("unknown force kind `{other}`, expected constant, tanh_friction or spring"),
            ))
        }
    };
    for other in ["F0", "c", "k"].into_iter().filter(|k| *k != key) {
        if let Some(span) = s.span_of(other) {
            return Err(s.src.error(span, other, format!("does not apply to force kind `{kind}`")));
        }
    }
    Ok(model(s.f64(key)?))
}

fn parse_solver(s: &Section<'_, '_>) -> Result<(SolverConfig, f64)> {
    let d = SolverConfig::default();
    let method = match s.str_opt("method")? {
        None => d.method,
        Some((m, span)) => m.parse::<Method>().map_err(|msg| s.src.error(span, "method", msg))?,
    };
    let solver = SolverConfig {
        method,
        rel_tol: s.f64_or("rel_tol", d.rel_tol)?,
        abs_tol: s.f64_or("abs_tol", d.abs_tol)?,
        max_step: s.f64_or("max_step", d.max_step)?,
        fixed_step: s.f64_or("fixed_step", d.fixed_step)?,
    };
    Ok((solver, s.f64_or("output_dt", DEFAULT_OUTPUT_DT)?))
}

/// Output cadence when the scenario does not set one [s].
pub const DEFAULT_OUTPUT_DT: f64 = 0.01;

fn parse_schedule(s: &Section<'_, '_>) -> Result<(Vec<SetpointChange>, f64)> {
    let mut schedule = vec![SetpointChange {
        time: 0.0,
        x_star: s.f64("x_star")?,
    }];
    if let Some((k, v)) = s.entry("steps") {
        let bad = || s.src.error(k.span(), "steps", "expected an array of [t, x_star] pairs");
        let DeValue::Array(items) = v.get_ref() else {
            return Err(bad());
        };
        for item in items.iter() {
            let DeValue::Array(pair) = item.get_ref() else {
                return Err(bad());
            };
            let values: Vec<f64> = pair.iter().filter_map(|v| number(v.get_ref())).collect();
            if values.len() != 2 || pair.len() != 2 {
                return Err(bad());
            }
            if values[0] <= 0.0 {
                return Err(s.src.error(k.span(), "steps", "switch times must be > 0"));
            }
            schedule.push(SetpointChange {
                time: values[0],
                x_star: values[1],
            });
        }
    }
    Ok((schedule, s.f64("duration")?))
}

fn num(v: f64) -> String {
    // Debug formatting is the shortest representation that parses back exactly.
    format!("{v:?}")
}

/// Writes `scenario` in the file format; `parse` reads it back unchanged.
pub fn serialize(scenario: &ScenarioConfig) -> String {
    let g = &scenario.params.geometry;
    let f = &scenario.params.fluid;
    let mut out = String::new();
    let mut put = |key: &str, value: String, unit: &str| {
        let _ = writeln!(out, "{key} = {value}{}", if unit.is_empty() { String::new() } else { format!("  # {unit}") });
    };
    put("[plant]\nL0", num(g.length), "m");
    put("n_L", g.pouches.to_string(), "");
    put("D_s", num(g.d_s), "m");
    put("d_c", num(g.d_c), "m");
    put("k0", num(g.k0), "");
    put("K0", num(g.volume_scale), "m^3");
    put("V0", num(g.dead_volume), "m^3");
    put("x0", num(g.x0), "m");
    put("x_M", num(g.x_max), "m");
    put("domain_margin", num(g.domain_margin), "m");
    put("Gamma0", num(f.bulk_modulus), "Pa");
    put("rho", num(f.density), "kg/m^3");
    put("P_atm", num(f.atmospheric_pressure), "Pa");
    put("m", num(scenario.params.payload_mass), "kg");
    put("R", num(scenario.params.damping), "N s/m");

    let k = &scenario.gains;
    put("\n[gains]\nk_p", num(k.k_p), "N/m");
    put("k_m", num(k.k_m), "");
    put("k_i", num(k.k_i), "");
    put("alpha", num(k.alpha), "1/s");
    put("epsilon", num(scenario.epsilon), "N s/m");

    let (kind, key, value) = match scenario.force {
        ForceModel::Constant(v) => ("constant", "F0", v),
        ForceModel::TanhFriction(v) => ("tanh_friction", "c", v),
        ForceModel::Spring(v) => ("spring", "k", v),
    };
    put("\n[force]\nkind", format!("\"{kind}\""), "");
    put(key, num(value), if key == "k" { "N/m" } else { "N" });

    let s = &scenario.solver;
    put("\n[solver]\nmethod", format!("\"{}\"", s.method), "");
    put("rel_tol", num(s.rel_tol), "");
    put("abs_tol", num(s.abs_tol), "");
    put("max_step", num(s.max_step), "s");
    put("fixed_step", num(s.fixed_step), "s");
    put("output_dt", num(scenario.output_dt), "s");

    put("\n[schedule]\nx_star", num(scenario.schedule[0].x_star), "m");
    put("duration", num(scenario.duration), "s");
    if scenario.schedule.len() > 1 {
        let steps: Vec<String> = scenario.schedule[1..]
            .iter()
            .map(|c| format!("[{}, {}]", num(c.time), num(c.x_star)))
            .collect();
        put("steps", format!("[{}]", steps.join(", ")), "[s, m]");
    }

    let i = &scenario.initial;
    put("\n[initial]\nx", num(i.x), "m");
    put("xdot", num(i.xdot), "m/s");
    put("P1", num(i.p1), "Pa");
    put("P2", num(i.p2), "Pa");
    if let Some(f_hat) = i.f_hat {
        put("F_hat", num(f_hat), "N");
    }
    out
}

/// Sets one scalar key, as named in the file format.
///
/// Changing `k0` or a dimension recomputes `K0`; changing `K0` recomputes `k0`.
/// `x_star` moves the initial setpoint. The result is not validated.
pub fn set_param(scenario: &mut ScenarioConfig, name: &str, value: f64) -> Result<()> {
    let g = &mut scenario.params.geometry;
    match name {
        "L0" => g.length = value,
        "n_L" => {
            if !(value >= 1.0 && value.fract() == 0.0 && value <= u32::MAX as f64) {
                return Err(Error::invalid("n_L", format!("must be a positive integer, got {value}")));
            }
            g.pouches = value as u32;
        }
        "D_s" => g.d_s = value,
        "d_c" => g.d_c = value,
        "k0" => g.k0 = value,
        "K0" => {
            g.volume_scale = value;
            g.k0 = value / g.shape_factor();
            return Ok(());
        }
        "V0" => g.dead_volume = value,
        "x0" => g.x0 = value,
        "x_M" => g.x_max = value,
        "domain_margin" => g.domain_margin = value,
        "Gamma0" => scenario.params.fluid.bulk_modulus = value,
        "rho" => scenario.params.fluid.density = value,
        "P_atm" => scenario.params.fluid.atmospheric_pressure = value,
        "m" => scenario.params.payload_mass = value,
        "R" => scenario.params.damping = value,
        "k_p" => scenario.gains.k_p = value,
        "k_m" => scenario.gains.k_m = value,
        "k_i" => scenario.gains.k_i = value,
        "alpha" => scenario.gains.alpha = value,
        "epsilon" => scenario.epsilon = value,
        "F0" | "c" | "k" => {
            scenario.force = match (name, scenario.force) {
                ("F0", ForceModel::Constant(_)) => ForceModel::Constant(value),
                ("c", ForceModel::TanhFriction(_)) => ForceModel::TanhFriction(value),
                ("k", ForceModel::Spring(_)) => ForceModel::Spring(value),
                _ => return Err(Error::invalid(name, "does not apply to the scenario's force kind")),
            }
        }
        "rel_tol" => scenario.solver.rel_tol = value,
        "abs_tol" => scenario.solver.abs_tol = value,
        "max_step" => scenario.solver.max_step = value,
        "fixed_step" => scenario.solver.fixed_step = value,
        "output_dt" => scenario.output_dt = value,
        "x_star" => scenario.schedule[0].x_star = value,
        "duration" => scenario.duration = value,
        "x" => scenario.initial.x = value,
        "xdot" => scenario.initial.xdot = value,
        "P1" => scenario.initial.p1 = value,
        "P2" => scenario.initial.p2 = value,
        "F_hat" => scenario.initial.f_hat = Some(value),
        other => return Err(Error::UnknownParameter(other.to_string())),
    }
    if matches!(name, "L0" | "n_L" | "D_s" | "d_c" | "k0") {
        scenario.params.geometry.refresh_volume_scale();
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[plant]
L0 = 0.03
n_L = 3
D_s = 0.012
d_c = 0.009
K0 = 2.8e-6
V0 = 1e-7
x0 = 0.00375
x_M = 0.0075
Gamma0 = 2e9
rho = 1000
m = 0.25
R = 5

[gains]
k_p = 1
k_m = 2
k_i = 10
alpha = 10

[force]
kind = "spring"
k = 10

[schedule]
x_star = 1e-3
duration = 10
"#;

    #[test]
    fn minimal_file_matches_prototype() {
        let s = parse(MINIMAL).unwrap();
        assert_eq!(s.params, PlantParams::prototype());
        assert_eq!(s.force, ForceModel::Spring(10.0));
        assert_eq!(s.solver, SolverConfig::default());
        assert_eq!(s.initial, InitialCondition::default());
        assert_eq!(s.schedule, vec![SetpointChange { time: 0.0, x_star: 1e-3 }]);
    }

    #[test]
    fn round_trip_is_exact() {
        let mut s = parse(MINIMAL).unwrap();
        s.schedule.push(SetpointChange { time: 2.5, x_star: -1.25e-3 });
        s.initial.f_hat = Some(0.1 / 3.0);
        s.solver.method = Method::Rk4;
        let text = serialize(&s);
        assert_eq!(parse(&text).unwrap(), s);
        assert_eq!(serialize(&parse(&text).unwrap()), text);
    }

    #[test]
    fn misspelled_key_gets_suggestion_and_line() {
        let text = MINIMAL.replace("Gamma0 = 2e9", "gamma0 = 2e9");
        let err = parse(&text).unwrap_err().to_string();
        assert!(err.contains("line 11"), "{err}");
        assert!(err.contains("`gamma0`") && err.contains("expected `Gamma0`"), "{err}");
    }

    #[test]
    fn other_errors_name_key_and_line() {
        let err = parse(&MINIMAL.replace("[gains]", "[gain]")).unwrap_err().to_string();
        assert!(err.contains("unknown section") && err.contains("expected `gains`"), "{err}");

        let err = parse(&MINIMAL.replace("rho = 1000", "rho = \"water\"")).unwrap_err().to_string();
        assert!(err.contains("line 12") && err.contains("expected a number"), "{err}");

        let err = parse(&MINIMAL.replace("R = 5\n", "")).unwrap_err().to_string();
        assert!(err.contains("key `R`") && err.contains("missing"), "{err}");

        let err = parse(&MINIMAL.replace("k = 10", "k = 10\nF0 = 1")).unwrap_err().to_string();
        assert!(err.contains("`F0`") && err.contains("does not apply"), "{err}");

        let err = parse(&MINIMAL.replace("alpha = 10", "alpha = -1")).unwrap_err().to_string();
        assert!(err.contains("line 20") && err.contains("`alpha`"), "{err}");

        let err = parse(&MINIMAL.replace("x_star = 1e-3", "x_star = 0.01")).unwrap_err().to_string();
        assert!(err.contains("`x_star`") && err.contains("outside"), "{err}");

        let err = parse("[plant\n").unwrap_err().to_string();
        assert!(err.contains("line 1"), "{err}");
    }

    #[test]
    fn set_param_keeps_volume_scale_consistent() {
        let mut s = parse(MINIMAL).unwrap();
        set_param(&mut s, "k0", 1.05).unwrap();
        assert!(s.validate().is_ok());
        set_param(&mut s, "L0", 0.032).unwrap();
        assert!(s.validate().is_ok());
        set_param(&mut s, "K0", 2.9e-6).unwrap();
        assert!(s.validate().is_ok());
        assert!(matches!(set_param(&mut s, "beta", 1.0), Err(Error::UnknownParameter(_))));
        assert!(set_param(&mut s, "F0", 1.0).is_err());
        assert!(set_param(&mut s, "n_L", 2.5).is_err());
        for name in SWEEPABLE {
            let mut t = parse(MINIMAL).unwrap();
            let r = set_param(&mut t, name, 1.0);
            assert!(r.is_ok() || matches!(*name, "F0" | "c"), "{name}");
        }
    }
}
