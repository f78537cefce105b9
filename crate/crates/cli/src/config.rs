//! Run configuration: `key = value` lines with `#` comments, overridable by
//! `--key value` pairs on the command line.

use std::fmt;
use std::path::{Path, PathBuf};

use bifstep_core::{ContinuationConfig, GridSpec, KrylovConfig, ModelParams, StepperConfig};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{origin}: expected `key = value`")]
    Syntax { origin: Origin },
    #[error("{origin}: unknown key `{key}`")]
    UnknownKey { origin: Origin, key: String },
    #[error("{origin}: invalid value `{value}` for `{key}`")]
    BadValue { origin: Origin, key: String, value: String },
    #[error("{origin}: `{key}` is missing a value")]
    MissingValue { origin: Origin, key: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// Where a setting came from, for error messages.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Origin {
    File { path: PathBuf, line: usize },
    CommandLine,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::File { path, line } => write!(f, "{}:{line}", path.display()),
            Origin::CommandLine => write!(f, "command line"),
        }
    }
}

/// Every tunable of the five commands. Grid resolution and time step are
/// optional because their defaults depend on the command (see
/// [`RunConfig::n_nodes_or`]).
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub re: f64,
    pub we: f64,
    pub eta2: f64,
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,

    pub n_nodes: Option<usize>,
    pub dt: Option<f64>,
    /// Time step of the periodic-orbit stepper (bifurcation, bistability).
    pub cycle_dt: f64,
    pub t_h: f64,
    pub newton_tol: f64,
    pub cycle_tol: f64,
    pub newton_max: usize,
    pub gmres_tol: f64,
    pub eps0: f64,
    pub max_dim: usize,
    pub eig_tol: f64,
    pub eig_max_dim: usize,
    pub k_eigs: usize,
    pub seed: u64,

    pub ds: f64,
    pub ds_min: f64,
    pub ds_max: f64,
    pub n_steps: usize,
    pub seed_step: f64,

    /// flow-curve: `vw` samples in `[0, vw_max]`.
    pub vw_max: f64,
    pub n_points: usize,
    /// stability
    pub q: f64,
    /// transient
    pub q_init: f64,
    pub q_run: f64,
    pub t_max: f64,
    /// Write every `record_every`-th step of trajectories.
    pub record_every: usize,
    /// bifurcation: steady branch range
    pub q_lo: f64,
    pub q_hi: f64,
    /// bifurcation: transient seed of the large-cycle branch
    pub cycle_seed_q: f64,
    pub cycle_seed_t_max: f64,
    /// Hopf cycle amplitude relative to the steady state norm.
    pub hopf_amplitude: f64,
    /// Where the returning cycle branch is cut off.
    pub return_floor: f64,
    /// Cycle branches end before a leading Floquet multiplier above this.
    pub max_multiplier: f64,
    /// bifurcation and bistability: the coexistence flow rate
    pub q_cycle: f64,
    /// bistability
    pub q_up: f64,
    pub q_down: f64,
    pub probe_t_max: f64,
    /// Unstable cycle written by `bifurcation`; recomputed when empty.
    pub cycle_state: Option<PathBuf>,

    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        let m = ModelParams::default();
        let c = ContinuationConfig::default();
        Self {
            re: m.re,
            we: m.we,
            eta2: m.eta2,
            a1: m.a1,
            a2: m.a2,
            a3: m.a3,
            n_nodes: None,
            dt: None,
            cycle_dt: 1e-4,
            t_h: c.t_h,
            newton_tol: c.newton_tol,
            cycle_tol: c.cycle_tol,
            newton_max: c.newton_max,
            gmres_tol: c.krylov.tol,
            eps0: c.krylov.eps0,
            max_dim: c.krylov.max_dim,
            eig_tol: c.eig.tol,
            eig_max_dim: c.eig.max_dim,
            k_eigs: c.k_eigs,
            seed: c.eig.seed,
            ds: c.ds,
            ds_min: c.ds_min,
            ds_max: c.ds_max,
            n_steps: c.n_steps,
            seed_step: c.seed_step,
            vw_max: 0.6,
            n_points: 601,
            q: 0.413,
            q_init: 0.449,
            q_run: 0.45,
            t_max: 3.0,
            record_every: 10,
            q_lo: 0.30,
            q_hi: 0.60,
            cycle_seed_q: 0.42,
            cycle_seed_t_max: 8.0,
            hopf_amplitude: 1e-3,
            return_floor: 0.525,
            max_multiplier: 5.0,
            q_cycle: 0.530,
            q_up: 0.531,
            q_down: 0.529,
            probe_t_max: 60.0,
            cycle_state: None,
            output_dir: PathBuf::from("out"),
        }
    }
}

fn parse<T: std::str::FromStr>(origin: &Origin, key: &str, value: &str) -> Result<T, ConfigError> {
    value.parse().map_err(|_| ConfigError::BadValue {
        origin: origin.clone(),
        key: key.to_string(),
        value: value.to_string(),
    })
}

impl RunConfig {
    /// Sets one field by its key.
    pub fn set(&mut self, key: &str, value: &str, origin: &Origin) -> Result<(), ConfigError> {
        macro_rules! put {
            ($field:expr) => {
                $field = parse(origin, key, value)?
            };
        }
        match key {
            "re" => put!(self.re),
            "we" => put!(self.we),
            "eta2" => put!(self.eta2),
            "a1" => put!(self.a1),
            "a2" => put!(self.a2),
            "a3" => put!(self.a3),
            "n_nodes" => self.n_nodes = Some(parse(origin, key, value)?),
            "dt" => self.dt = Some(parse(origin, key, value)?),
            "cycle_dt" => put!(self.cycle_dt),
            "t_h" => put!(self.t_h),
            "newton_tol" => put!(self.newton_tol),
            "cycle_tol" => put!(self.cycle_tol),
            "newton_max" => put!(self.newton_max),
            "gmres_tol" => put!(self.gmres_tol),
            "eps0" => put!(self.eps0),
            "max_dim" => put!(self.max_dim),
            "eig_tol" => put!(self.eig_tol),
            "eig_max_dim" => put!(self.eig_max_dim),
            "k_eigs" => put!(self.k_eigs),
            "seed" => put!(self.seed),
            "ds" => put!(self.ds),
            "ds_min" => put!(self.ds_min),
            "ds_max" => put!(self.ds_max),
            "n_steps" => put!(self.n_steps),
            "seed_step" => put!(self.seed_step),
            "vw_max" => put!(self.vw_max),
            "n_points" => put!(self.n_points),
            "q" => put!(self.q),
            "q_init" => put!(self.q_init),
            "q_run" => put!(self.q_run),
            "t_max" => put!(self.t_max),
            "record_every" => put!(self.record_every),
            "q_lo" => put!(self.q_lo),
            "q_hi" => put!(self.q_hi),
            "cycle_seed_q" => put!(self.cycle_seed_q),
            "cycle_seed_t_max" => put!(self.cycle_seed_t_max),
            "hopf_amplitude" => put!(self.hopf_amplitude),
            "return_floor" => put!(self.return_floor),
            "max_multiplier" => put!(self.max_multiplier),
            "q_cycle" => put!(self.q_cycle),
            "q_up" => put!(self.q_up),
            "q_down" => put!(self.q_down),
            "probe_t_max" => put!(self.probe_t_max),
            "cycle_state" => self.cycle_state = (!value.is_empty()).then(|| PathBuf::from(value)),
            "output_dir" => self.output_dir = PathBuf::from(value),
            _ => {
                return Err(ConfigError::UnknownKey {
                    origin: origin.clone(),
                    key: key.to_string(),
                })
            }
        }
        Ok(())
    }

    /// Applies the lines of a config file on top of `self`.
    pub fn apply_text(&mut self, text: &str, path: &Path) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let origin = Origin::File {
                path: path.to_path_buf(),
                line: i + 1,
            };
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or(ConfigError::Syntax { origin: origin.clone() })?;
            let key = key.trim();
            if key.is_empty() {
                return Err(ConfigError::Syntax { origin });
            }
            self.set(key, value.trim(), &origin)?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::default();
        cfg.apply_text(&text, path)?;
        Ok(cfg)
    }

    /// Applies `--key value` pairs (also `--key=value`).
    pub fn apply_overrides<S: AsRef<str>>(&mut self, args: &[S]) -> Result<(), ConfigError> {
        let origin = Origin::CommandLine;
        let mut it = args.iter().map(AsRef::as_ref);
        while let Some(arg) = it.next() {
            let Some(flag) = arg.strip_prefix("--") else {
                return Err(ConfigError::Syntax { origin });
            };
            let (key, value) = match flag.split_once('=') {
                Some((k, v)) => (k.to_string(), v.to_string()),
                None => {
                    let v = it.next().ok_or_else(|| ConfigError::MissingValue {
                        origin: origin.clone(),
                        key: flag.to_string(),
                    })?;
                    (flag.to_string(), v.to_string())
                }
            };
            self.set(&key.replace('-', "_"), &value, &origin)?;
        }
        Ok(())
    }

    pub fn model(&self) -> ModelParams {
        ModelParams {
            re: self.re,
            we: self.we,
            eta2: self.eta2,
            a1: self.a1,
            a2: self.a2,
            a3: self.a3,
            ..ModelParams::default()
        }
    }

    pub fn n_nodes_or(&self, default: usize) -> usize {
        self.n_nodes.unwrap_or(default)
    }

    pub fn dt_or(&self, default: f64) -> f64 {
        self.dt.unwrap_or(default)
    }

    pub fn stepper_config(&self, dt: f64) -> StepperConfig {
        StepperConfig::default().with_dt(dt)
    }

    pub fn continuation(&self) -> ContinuationConfig {
        let base = ContinuationConfig::default();
        ContinuationConfig {
            t_h: self.t_h,
            newton_tol: self.newton_tol,
            cycle_tol: self.cycle_tol,
            newton_max: self.newton_max,
            krylov: KrylovConfig {
                tol: self.gmres_tol,
                max_dim: self.max_dim,
                eps0: self.eps0,
                ..base.krylov
            },
            eig: KrylovConfig {
                tol: self.eig_tol,
                max_dim: self.eig_max_dim,
                eps0: self.eps0,
                seed: self.seed,
                ..base.eig
            },
            k_eigs: self.k_eigs,
            ds: self.ds,
            ds_min: self.ds_min,
            ds_max: self.ds_max,
            n_steps: self.n_steps,
            seed_step: self.seed_step,
            ..base
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |s: &str| Err(ConfigError::Invalid(s.to_string()));
        self.model()
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.continuation()
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.dt.is_some_and(|d| !(d > 0.0)) || !(self.cycle_dt > 0.0) {
            return bad("time steps must be positive");
        }
        if let Some(n) = self.n_nodes {
            GridSpec::new(n).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        if self.record_every == 0 {
            return bad("record_every must be >= 1");
        }
        if !(self.t_max > 0.0 && self.probe_t_max > 0.0 && self.cycle_seed_t_max > 0.0) {
            return bad("integration horizons must be positive");
        }
        if !(self.q_lo < self.q_hi) {
            return bad("need q_lo < q_hi");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comments_blank_lines_and_values() {
        let mut c = RunConfig::default();
        let text = "# header\n\nre = 1.0   # trailing\nn_nodes=41\noutput_dir = runs/a\n";
        c.apply_text(text, Path::new("x.cfg")).unwrap();
        assert_eq!(c.re, 1.0);
        assert_eq!(c.n_nodes, Some(41));
        assert_eq!(c.output_dir, PathBuf::from("runs/a"));
    }

    #[test]
    fn unknown_key_reports_line() {
        let mut c = RunConfig::default();
        let err = c.apply_text("re = 1\n\nbogus = 3\n", Path::new("x.cfg")).unwrap_err();
        assert_eq!(err.to_string(), "x.cfg:3: unknown key `bogus`");
    }

    #[test]
    fn bad_value_and_syntax_report_line() {
        let mut c = RunConfig::default();
        let err = c.apply_text("dt = fast\n", Path::new("x.cfg")).unwrap_err();
        assert!(matches!(
            err,
            ConfigError::BadValue {
                origin: Origin::File { line: 1, .. },
                ..
            }
        ));
        let err = c.apply_text("# ok\njust words\n", Path::new("x.cfg")).unwrap_err();
        assert_eq!(err.to_string(), "x.cfg:2: expected `key = value`");
    }

    #[test]
    fn overrides_win_over_file() {
        let mut c = RunConfig::default();
        c.apply_text("q = 0.3\n", Path::new("x.cfg")).unwrap();
        c.apply_overrides(&["--q", "0.414", "--n-nodes=51"]).unwrap();
        assert_eq!(c.q, 0.414);
        assert_eq!(c.n_nodes, Some(51));
        assert!(c.apply_overrides(&["--q"]).is_err());
        assert!(c.apply_overrides(&["--nope", "1"]).is_err());
    }

    #[test]
    fn defaults_validate() {
        RunConfig::default().validate().unwrap();
        assert_eq!(RunConfig::default().continuation(), ContinuationConfig::default());
    }
}
