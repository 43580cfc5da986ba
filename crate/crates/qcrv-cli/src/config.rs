//! Flat `key = value` run configuration: line-oriented, `#` comments,
//! dotted keys for nesting. Parsing is total — every input yields either a
//! fully validated config (defaults applied and echoed) or a diagnostic
//! with a line number. Unknown and duplicate keys are rejected.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::str::FromStr;

use qcrv::analytic::{make_profile, Profile};
use qcrv::continuation::LambdaSchedule;
use qcrv::minimizer::SolverOptions;
use qcrv::TorusGrid;

use crate::error::{CliError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProfileKind {
    /// Single degenerate maximum of order `l` at `center`.
    Power,
    /// Order-`l` maximum at `center` plus a quadratic well at `secondary`.
    TwoPoint,
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub dimension: u32,
    pub grid: u32,
    pub profile_kind: ProfileKind,
    pub profile_l: u32,
    pub profile_amplitude: f64,
    pub profile_center: Vec<f64>,
    pub profile_secondary: Option<Vec<f64>>,
    /// Schedule endpoints as fractions of the profile's admissible bound.
    pub lambda_hi: f64,
    pub lambda_lo: f64,
    pub steps: usize,
    /// Single-solve level, as a fraction of the admissible bound.
    pub solve_lambda: f64,
    pub solver_max_iters: usize,
    pub solver_tol: f64,
    pub solver_initial_step: f64,
    pub bubble_enabled: bool,
    pub bubble_window: f64,
    /// Rescaled lattice points per axis (auto-resolved when left at 0).
    pub bubble_m: usize,
    pub bubble_mass: f64,
    pub output_dir: PathBuf,
    pub seed: u64,
}

#[derive(Clone, Debug)]
pub struct ParsedConfig {
    pub config: RunConfig,
    /// One line per applied default, for the run log.
    pub applied_defaults: Vec<String>,
}

struct RawEntry {
    value: String,
    line: usize,
}

struct KeyMap {
    entries: BTreeMap<String, RawEntry>,
    defaults: Vec<String>,
}

impl KeyMap {
    fn take(&mut self, key: &str) -> Option<RawEntry> {
        self.entries.remove(key)
    }

    fn parse<T: FromStr>(&mut self, key: &str, what: &str) -> Result<Option<(T, usize)>> {
        match self.take(key) {
            None => Ok(None),
            Some(e) => match e.value.parse::<T>() {
                Ok(v) => Ok(Some((v, e.line))),
                Err(_) => Err(CliError::config(
                    e.line,
                    format!("key `{key}` needs {what}, got `{}`", e.value),
                )),
            },
        }
    }

    fn required<T: FromStr>(&mut self, key: &str, what: &str) -> Result<(T, usize)> {
        self.parse(key, what)?
            .ok_or_else(|| CliError::config(0, format!("missing required key `{key}`")))
    }

    fn or_default<T: FromStr + std::fmt::Display + Copy>(
        &mut self,
        key: &str,
        what: &str,
        default: T,
    ) -> Result<(T, usize)> {
        match self.parse(key, what)? {
            Some(v) => Ok(v),
            None => {
                self.defaults.push(format!("{key} = {default}"));
                Ok((default, 0))
            }
        }
    }

    fn vector(&mut self, key: &str) -> Result<Option<(Vec<f64>, usize)>> {
        match self.take(key) {
            None => Ok(None),
            Some(e) => {
                let mut out = Vec::new();
                for part in e.value.split_whitespace() {
                    let v: f64 = part.parse().map_err(|_| {
                        CliError::config(
                            e.line,
                            format!("key `{key}` needs space-separated reals, got `{}`", e.value),
                        )
                    })?;
                    if !v.is_finite() {
                        return Err(CliError::config(
                            e.line,
                            format!("key `{key}` has a non-finite coordinate"),
                        ));
                    }
                    out.push(v);
                }
                if out.is_empty() {
                    return Err(CliError::config(e.line, format!("key `{key}` is empty")));
                }
                Ok(Some((out, e.line)))
            }
        }
    }
}

fn split_lines(text: &str) -> Result<KeyMap> {
    let mut entries: BTreeMap<String, RawEntry> = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = match raw.find('#') {
            Some(p) => &raw[..p],
            None => raw,
        };
        let content = content.trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(CliError::config(line, format!("expected `key = value`, got `{content}`")));
        };
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if key.is_empty() {
            return Err(CliError::config(line, "empty key before `=`".to_string()));
        }
        if let Some(prev) = entries.get(&key) {
            return Err(CliError::config(
                line,
                format!("duplicate key `{key}` (first set on line {})", prev.line),
            ));
        }
        entries.insert(key, RawEntry { value, line });
    }
    Ok(KeyMap { entries, defaults: Vec::new() })
}

fn ensure(cond: bool, line: usize, msg: impl Into<String>) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(CliError::config(line, msg.into()))
    }
}

/// Parse and fully validate a configuration text.
pub fn parse_config(text: &str) -> Result<ParsedConfig> {
    let mut map = split_lines(text)?;

    let (dimension, dim_line) = map.required::<u32>("dimension", "2 or 4")?;
    ensure(
        dimension == 2 || dimension == 4,
        dim_line,
        format!("unsupported dimension {dimension} (this solver handles 2 and 4)"),
    )?;
    let (grid, grid_line) = map.required::<u32>("grid", "points per axis")?;
    TorusGrid::new(dimension, grid)
        .map_err(|e| CliError::config(grid_line, e.to_string()))?;

    let (kind_raw, kind_line) = match map.take("profile.kind") {
        Some(e) => (e.value, e.line),
        None => {
            map.defaults.push("profile.kind = power".to_string());
            ("power".to_string(), 0)
        }
    };
    let profile_kind = match kind_raw.as_str() {
        "power" => ProfileKind::Power,
        "two-point" => ProfileKind::TwoPoint,
        other => {
            return Err(CliError::config(
                kind_line,
                format!("profile.kind must be `power` or `two-point`, got `{other}`"),
            ));
        }
    };

    let (profile_l, l_line) = map.or_default::<u32>(
        "profile.l",
        "an even vanishing order >= 2",
        dimension,
    )?;
    ensure(
        profile_l >= 2 && profile_l % 2 == 0,
        l_line,
        format!("profile.l must be even and >= 2, got {profile_l}"),
    )?;

    let (profile_amplitude, amp_line) =
        map.or_default::<f64>("profile.amplitude", "a positive real", 1.0)?;
    ensure(
        profile_amplitude > 0.0 && profile_amplitude.is_finite(),
        amp_line,
        format!("profile.amplitude must be positive, got {profile_amplitude}"),
    )?;

    let profile_center = match map.vector("profile.center")? {
        Some((v, line)) => {
            ensure(
                v.len() == dimension as usize,
                line,
                format!("profile.center needs {dimension} coordinates, got {}", v.len()),
            )?;
            v
        }
        None => {
            let v = vec![0.5; dimension as usize];
            map.defaults.push(format!(
                "profile.center = {}",
                v.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(" ")
            ));
            v
        }
    };

    let profile_secondary = match map.vector("profile.secondary")? {
        Some((v, line)) => {
            ensure(
                v.len() == dimension as usize,
                line,
                format!("profile.secondary needs {dimension} coordinates, got {}", v.len()),
            )?;
            ensure(
                profile_kind == ProfileKind::TwoPoint,
                line,
                "profile.secondary requires profile.kind = two-point".to_string(),
            )?;
            Some(v)
        }
        None => {
            ensure(
                profile_kind == ProfileKind::Power,
                kind_line,
                "profile.kind = two-point requires profile.secondary".to_string(),
            )?;
            None
        }
    };

    let (lambda_hi, hi_line) =
        map.or_default::<f64>("schedule.lambda_hi", "a fraction in (0, 1)", 0.3)?;
    let (lambda_lo, lo_line) =
        map.or_default::<f64>("schedule.lambda_lo", "a fraction in (0, 1)", 1e-3)?;
    let order_line = if hi_line != 0 { hi_line } else { lo_line };
    ensure(
        lambda_lo > 0.0 && lambda_hi < 1.0 && lambda_lo < lambda_hi,
        order_line,
        format!(
            "schedule needs 0 < lambda_lo < lambda_hi < 1 (fractions of the admissible \
             bound), got lambda_lo = {lambda_lo}, lambda_hi = {lambda_hi}"
        ),
    )?;
    let (steps, steps_line) = map.or_default::<usize>("schedule.steps", "an integer >= 2", 12)?;
    ensure(steps >= 2, steps_line, format!("schedule.steps must be >= 2, got {steps}"))?;

    let (solve_lambda, solve_line) = match map.parse::<f64>("solve.lambda", "a fraction in (0, 1)")? {
        Some(v) => v,
        None => {
            map.defaults.push(format!("solve.lambda = {lambda_hi} (schedule.lambda_hi)"));
            (lambda_hi, 0)
        }
    };
    ensure(
        solve_lambda > 0.0 && solve_lambda < 1.0,
        solve_line,
        format!("solve.lambda must lie in (0, 1), got {solve_lambda}"),
    )?;

    let (solver_max_iters, mi_line) =
        map.or_default::<usize>("solver.max_iters", "an integer >= 1", 20_000)?;
    ensure(solver_max_iters >= 1, mi_line, "solver.max_iters must be >= 1".to_string())?;
    let (solver_tol, tol_line) =
        map.or_default::<f64>("solver.el_residual_tol", "a positive real", 1e-6)?;
    ensure(
        solver_tol > 0.0 && solver_tol.is_finite(),
        tol_line,
        format!("solver.el_residual_tol must be positive, got {solver_tol}"),
    )?;
    let (solver_initial_step, is_line) =
        map.or_default::<f64>("solver.initial_step", "a positive real", 1e-2)?;
    ensure(
        solver_initial_step > 0.0 && solver_initial_step.is_finite(),
        is_line,
        format!("solver.initial_step must be positive, got {solver_initial_step}"),
    )?;

    let (bubble_enabled, _) = map.or_default::<bool>("bubble.enabled", "true or false", true)?;
    let (bubble_window, bw_line) =
        map.or_default::<f64>("bubble.window", "a positive half-width", 10.0)?;
    ensure(
        bubble_window > 0.0 && bubble_window.is_finite(),
        bw_line,
        format!("bubble.window must be positive, got {bubble_window}"),
    )?;
    let auto_m = if dimension == 2 { 64 } else { 12 };
    let (bubble_m_raw, bm_line) = map.or_default::<usize>(
        "bubble.m",
        "lattice points per axis (0 = auto)",
        0,
    )?;
    ensure(
        bubble_m_raw == 0 || bubble_m_raw >= 4,
        bm_line,
        format!("bubble.m must be 0 (auto) or >= 4, got {bubble_m_raw}"),
    )?;
    let bubble_m = if bubble_m_raw == 0 {
        if bm_line == 0 {
            // replace the echoed `bubble.m = 0` with the resolved value
            if let Some(last) = map.defaults.iter_mut().find(|d| d.starts_with("bubble.m = ")) {
                *last = format!("bubble.m = {auto_m} (auto for dimension {dimension})");
            }
        }
        auto_m
    } else {
        bubble_m_raw
    };
    let (bubble_mass, mass_line) =
        map.or_default::<f64>("bubble.mass", "a fraction in (0, 1/2)", 0.125)?;
    ensure(
        bubble_mass > 0.0 && bubble_mass < 0.5,
        mass_line,
        format!("bubble.mass must lie in (0, 1/2), got {bubble_mass}"),
    )?;

    let output_dir = match map.take("output.dir") {
        Some(e) => {
            ensure(!e.value.is_empty(), e.line, "output.dir is empty".to_string())?;
            PathBuf::from(e.value)
        }
        None => {
            map.defaults.push("output.dir = qcrv-run".to_string());
            PathBuf::from("qcrv-run")
        }
    };

    let (seed, _) = map.or_default::<u64>("seed", "an unsigned integer", 0)?;

    if let Some((key, entry)) = map.entries.iter().min_by_key(|(_, e)| e.line) {
        return Err(CliError::config(entry.line, format!("unknown key `{key}`")));
    }

    Ok(ParsedConfig {
        config: RunConfig {
            dimension,
            grid,
            profile_kind,
            profile_l,
            profile_amplitude,
            profile_center,
            profile_secondary,
            lambda_hi,
            lambda_lo,
            steps,
            solve_lambda,
            solver_max_iters,
            solver_tol,
            solver_initial_step,
            bubble_enabled,
            bubble_window,
            bubble_m,
            bubble_mass,
            output_dir,
            seed,
        },
        applied_defaults: map.defaults,
    })
}

impl RunConfig {
    pub fn build_grid(&self) -> Result<TorusGrid> {
        Ok(TorusGrid::new(self.dimension, self.grid)?)
    }

    pub fn build_profile(&self, grid: TorusGrid) -> Result<Profile> {
        Ok(make_profile(
            grid,
            self.profile_l,
            self.profile_amplitude,
            &self.profile_center,
            self.profile_secondary.as_deref(),
        )?)
    }

    /// Absolute geometric schedule under the profile's admissible bound.
    pub fn schedule(&self, lambda_max: f64) -> Result<LambdaSchedule> {
        Ok(LambdaSchedule::geometric(
            self.lambda_hi * lambda_max,
            self.lambda_lo * lambda_max,
            self.steps,
        )?)
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            max_iters: self.solver_max_iters,
            el_residual_tol: self.solver_tol,
            initial_step: self.solver_initial_step,
            ..SolverOptions::default()
        }
    }
}
