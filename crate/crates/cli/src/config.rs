//! Flat `key = value` run configuration.
//!
//! Every key is resolved to an explicit value, defaults included, so the
//! resolved listing alone reproduces a run.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rqj::analysis::scaling::ScalingSpec;
use rqj::analysis::switches::Thresholds;
use rqj::pfe::{PfeConfig, PfeGridSpec, PfeStepper};
use rqj::qfunc::QGridSpec;
use rqj::sme::SmeConfig;
use rqj::{Branch, Frame, SystemParams, Variant};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("line {line}: expected `key = value`, found `{text}`")]
    Syntax { line: usize, text: String },
    #[error("key `{0}` is given twice")]
    Duplicate(String),
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("`{key} = {value}`: expected {expected}")]
    BadValue {
        key: String,
        value: String,
        expected: String,
    },
    #[error("no mode given (set `mode` or pass --mode)")]
    MissingMode,
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error(transparent)]
    Model(#[from] rqj::Error),
}

pub type Result<T> = std::result::Result<T, ConfigError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    MeSteady,
    SmeTraj,
    PfeTraj,
    Ensemble,
    Scaling,
    Qfunc,
}

impl Mode {
    const ALL: [Mode; 6] = [
        Mode::MeSteady,
        Mode::SmeTraj,
        Mode::PfeTraj,
        Mode::Ensemble,
        Mode::Scaling,
        Mode::Qfunc,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Mode::MeSteady => "ME_STEADY",
            Mode::SmeTraj => "SME_TRAJ",
            Mode::PfeTraj => "PFE_TRAJ",
            Mode::Ensemble => "ENSEMBLE",
            Mode::Scaling => "SCALING",
            Mode::Qfunc => "QFUNC",
        }
    }

    /// Modes whose setup assumes the two semiclassical branches exist.
    fn needs_fixed_points(self) -> bool {
        !matches!(self, Mode::MeSteady)
    }

    fn uses_reduced_model(self) -> bool {
        matches!(self, Mode::PfeTraj | Mode::Scaling)
    }

    fn default_t_final(self) -> f64 {
        match self {
            Mode::SmeTraj => 10.0,
            Mode::PfeTraj => 40.0,
            Mode::Ensemble => 1.0,
            Mode::Scaling => ScalingSpec::default().t_final,
            Mode::MeSteady | Mode::Qfunc => 0.0,
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Mode::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                let names: Vec<_> = Mode::ALL.iter().map(|m| m.name()).collect();
                format!("one of {}", names.join(", "))
            })
    }
}

/// Starting state of trajectories and ensembles.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialState {
    Plus,
    Minus,
    /// Atom in its ground state, field coherent at the mean amplitude.
    GroundCoherent,
}

impl InitialState {
    fn name(self) -> &'static str {
        match self {
            InitialState::Plus => "PLUS",
            InitialState::Minus => "MINUS",
            InitialState::GroundCoherent => "GROUND_COHERENT",
        }
    }

    pub fn branch(self) -> Option<Branch> {
        match self {
            InitialState::Plus => Some(Branch::Plus),
            InitialState::Minus => Some(Branch::Minus),
            InitialState::GroundCoherent => None,
        }
    }
}

impl FromStr for InitialState {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        [InitialState::Plus, InitialState::Minus, InitialState::GroundCoherent]
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| "one of PLUS, MINUS, GROUND_COHERENT".to_string())
    }
}

fn parse_frame(s: &str) -> std::result::Result<Frame, String> {
    match s.to_ascii_uppercase().as_str() {
        "LAB" => Ok(Frame::Lab),
        "DISPLACED" => Ok(Frame::Displaced),
        _ => Err("LAB or DISPLACED".into()),
    }
}

fn parse_variant(s: &str) -> std::result::Result<Variant, String> {
    match s.to_ascii_uppercase().as_str() {
        "FULL" => Ok(Variant::Full),
        "RWA" => Ok(Variant::Rwa),
        _ => Err("FULL or RWA".into()),
    }
}

fn parse_list(s: &str) -> std::result::Result<Vec<f64>, String> {
    s.split(',')
        .map(|v| v.trim().parse::<f64>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|_| "a comma-separated list of numbers".to_string())
}

fn join(values: &[f64]) -> String {
    values.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
}

/// Raw key-value pairs from a file and command-line overrides.
#[derive(Debug, Clone, Default)]
pub struct RawConfig {
    entries: BTreeMap<String, String>,
}

impl RawConfig {
    /// Parses `key = value` lines; `#` starts a comment and blank lines are
    /// skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut raw = RawConfig::default();
        for (n, line) in text.lines().enumerate() {
            let content = line.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .filter(|(k, v)| !k.is_empty() && !v.is_empty())
                .ok_or_else(|| ConfigError::Syntax {
                    line: n + 1,
                    text: line.trim().to_string(),
                })?;
            if raw.entries.insert(key.to_string(), value.to_string()).is_some() {
                return Err(ConfigError::Duplicate(key.to_string()));
            }
        }
        Ok(raw)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    /// Applies a `key=value` override, replacing any earlier value.
    pub fn set_override(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = assignment
            .split_once('=')
            .map(|(k, v)| (k.trim(), v.trim()))
            .filter(|(k, v)| !k.is_empty() && !v.is_empty())
            .ok_or_else(|| ConfigError::Syntax {
                line: 0,
                text: assignment.to_string(),
            })?;
        self.set(key, value);
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) {
        self.entries.insert(key.to_string(), value.to_string());
    }
}

/// Consumes raw entries, recording the value used for every key.
struct Resolver {
    entries: BTreeMap<String, String>,
    resolved: Vec<(String, String)>,
}

impl Resolver {
    fn take<T>(
        &mut self,
        key: &str,
        default: T,
        parse: impl Fn(&str) -> std::result::Result<T, String>,
        show: impl Fn(&T) -> String,
    ) -> Result<T> {
        let value = match self.entries.remove(key) {
            Some(text) => parse(&text).map_err(|expected| ConfigError::BadValue {
                key: key.to_string(),
                value: text.clone(),
                expected,
            })?,
            None => default,
        };
        self.resolved.push((key.to_string(), show(&value)));
        Ok(value)
    }

    fn number<T: FromStr + ToString>(&mut self, key: &str, default: T, expected: &str) -> Result<T> {
        self.take(
            key,
            default,
            |s| s.parse::<T>().map_err(|_| expected.to_string()),
            T::to_string,
        )
    }

    fn real(&mut self, key: &str, default: f64) -> Result<f64> {
        self.number(key, default, "a number")
    }

    fn count(&mut self, key: &str, default: usize) -> Result<usize> {
        self.number(key, default, "a non-negative integer")
    }

    fn list(&mut self, key: &str, default: Vec<f64>) -> Result<Vec<f64>> {
        self.take(key, default, parse_list, |v| join(v))
    }
}

/// Options of the scaling sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingOptions {
    pub g_values: Vec<f64>,
    pub g_over_kappa: f64,
    pub gamma_perp_values: Vec<f64>,
    pub eta_values: Vec<f64>,
    /// `(g, kappa, gamma_perp)` of the efficiency series.
    pub eta_series_rates: [f64; 3],
}

/// A fully resolved and validated run description.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub mode: Mode,
    pub params: SystemParams,
    pub variant: Variant,
    pub dt: f64,
    pub t_final: f64,
    pub n_traj: usize,
    pub base_seed: u64,
    pub output_dir: PathBuf,
    pub stride: usize,
    pub burn_in: f64,
    pub filter_fc: f64,
    pub thresholds: Thresholds,
    pub grid: PfeGridSpec,
    pub q_grid: QGridSpec,
    pub initial_state: InitialState,
    /// Steps between stored states; 0 stores none (reduced model) or only
    /// the final state (ensemble).
    pub snapshot_every: usize,
    pub scaling: ScalingOptions,
    /// Every key with the value in force, in a fixed order.
    pub resolved: Vec<(String, String)>,
}

impl RunConfig {
    /// Resolves defaults and validates every downstream constraint.
    pub fn from_raw(raw: RawConfig) -> Result<Self> {
        let mut r = Resolver {
            entries: raw.entries,
            resolved: Vec::new(),
        };
        let mode = match r.entries.get("mode") {
            Some(_) => r.take("mode", Mode::MeSteady, Mode::from_str, Mode::to_string)?,
            None => return Err(ConfigError::MissingMode),
        };
        let base = SystemParams::reference();
        let g = r.real("g", base.g)?;
        let kappa = r.real("kappa", base.kappa)?;
        let gamma_perp = r.real("gamma_perp", base.gamma_perp)?;
        let drive = r.real("drive", kappa * base.alpha_bar())?;
        let eta = r.real("eta", base.eta)?;
        let frame = r.take("frame", Frame::Displaced, parse_frame, |f| {
            format!("{f:?}").to_ascii_uppercase()
        })?;
        let n_max = r.count("n_max", frame.default_n_max())?;
        let params = SystemParams {
            g,
            kappa,
            gamma_perp,
            drive,
            eta,
            n_max,
            frame,
        };
        let variant = r.take("variant", Variant::Full, parse_variant, |v| {
            format!("{v:?}").to_ascii_uppercase()
        })?;
        let grid = PfeGridSpec {
            n_y: r.count("n_y", PfeGridSpec::default().n_y)?,
            span: r.real("span", PfeGridSpec::default().span)?,
        };
        let default_dt = if mode.uses_reduced_model() {
            PfeStepper::default_dt(&params, &grid)
        } else {
            SmeConfig::default_dt(&params, variant)
        };
        let dt = r.real("dt", default_dt)?;
        let t_final = r.real("t_final", mode.default_t_final())?;
        let n_traj = r.count("n_traj", 500)?;
        let base_seed = r.number("base_seed", 0u64, "an unsigned 64-bit integer")?;
        let output_dir = r.take(
            "output_dir",
            PathBuf::from("out"),
            |s| Ok(PathBuf::from(s)),
            |p| p.display().to_string(),
        )?;
        let stride = r.count("stride", 10)?;
        let burn_in = r.real("burn_in", params.default_burn_in())?;
        let filter_fc = r.real("filter_fc", 10.0)?;
        let thresholds = Thresholds {
            low: r.real("threshold_low", -g)?,
            high: r.real("threshold_high", g)?,
        };
        let q_default = QGridSpec::default();
        let q_grid = QGridSpec {
            re_min: r.real("q_re_min", q_default.re_min)?,
            re_max: r.real("q_re_max", q_default.re_max)?,
            im_min: r.real("q_im_min", q_default.im_min)?,
            im_max: r.real("q_im_max", q_default.im_max)?,
            n_re: r.count("q_n_re", q_default.n_re)?,
            n_im: r.count("q_n_im", q_default.n_im)?,
        };
        let default_initial = if mode == Mode::Ensemble {
            InitialState::GroundCoherent
        } else {
            InitialState::Plus
        };
        let initial_state = r.take("initial_state", default_initial, InitialState::from_str, |s| {
            s.name().to_string()
        })?;
        let snapshot_every = r.count("snapshot_every", 0)?;
        let s_default = ScalingSpec::default();
        let rates = r.list("scaling_eta_series_rates", s_default.eta_series_rates.to_vec())?;
        let scaling = ScalingOptions {
            g_values: r.list("scaling_g_values", s_default.g_values)?,
            g_over_kappa: r.real("scaling_g_over_kappa", s_default.g_over_kappa)?,
            gamma_perp_values: r.list("scaling_gamma_perp_values", s_default.gamma_perp_values)?,
            eta_values: r.list("scaling_eta_values", s_default.eta_values)?,
            eta_series_rates: <[f64; 3]>::try_from(rates.as_slice()).map_err(|_| {
                ConfigError::Invalid("scaling_eta_series_rates needs exactly g,kappa,gamma_perp".into())
            })?,
        };
        if let Some(key) = r.entries.keys().next() {
            return Err(ConfigError::UnknownKey(key.clone()));
        }
        let config = RunConfig {
            mode,
            params,
            variant,
            dt,
            t_final,
            n_traj,
            base_seed,
            output_dir,
            stride,
            burn_in,
            filter_fc,
            thresholds,
            grid,
            q_grid,
            initial_state,
            snapshot_every,
            scaling,
            resolved: r.resolved,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn sme_config(&self) -> SmeConfig {
        SmeConfig {
            variant: self.variant,
            dt: self.dt,
            t_final: self.t_final,
            stride: self.stride,
        }
    }

    pub fn pfe_config(&self) -> PfeConfig {
        PfeConfig {
            dt: self.dt,
            t_final: self.t_final,
            stride: self.stride,
            grid: self.grid,
            initial_branch: self.initial_state.branch().unwrap_or(Branch::Plus),
            snapshot_every: self.snapshot_every,
        }
    }

    pub fn scaling_spec(&self) -> ScalingSpec {
        ScalingSpec {
            g_values: self.scaling.g_values.clone(),
            g_over_kappa: self.scaling.g_over_kappa,
            gamma_perp_values: self.scaling.gamma_perp_values.clone(),
            eta_values: self.scaling.eta_values.clone(),
            eta_series_rates: self.scaling.eta_series_rates,
            t_final: self.t_final,
            burn_in: self.burn_in,
            stride: self.stride,
            grid: self.grid,
            base_seed: self.base_seed,
            ..ScalingSpec::default()
        }
    }

    /// Steps between ensemble snapshots; zero keeps only both end points.
    pub fn ensemble_snapshot_every(&self) -> usize {
        match self.snapshot_every {
            0 => self.sme_config().n_steps().max(1),
            k => k,
        }
    }

    /// Resolved configuration in the input format.
    pub fn to_text(&self) -> String {
        self.resolved
            .iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    fn validate(&self) -> Result<()> {
        if self.mode.needs_fixed_points() && self.mode != Mode::Scaling {
            self.params.validate_bistable()?;
        } else {
            self.params.validate()?;
        }
        Thresholds::new(self.thresholds.low, self.thresholds.high)?;
        if !(self.filter_fc > 0.0) {
            return Err(ConfigError::Invalid(format!(
                "filter_fc = {} must be positive",
                self.filter_fc
            )));
        }
        if !(self.burn_in >= 0.0) {
            return Err(ConfigError::Invalid(format!(
                "burn_in = {} must be >= 0",
                self.burn_in
            )));
        }
        match self.mode {
            Mode::MeSteady => {}
            Mode::Qfunc => self.q_grid.validate()?,
            Mode::SmeTraj | Mode::Ensemble => {
                let sme = self.sme_config();
                sme.validate(&self.params)?;
                if self.mode == Mode::Ensemble && self.n_traj == 0 {
                    return Err(ConfigError::Invalid("n_traj must be >= 1".into()));
                }
                self.check_filter(sme.sample_dt())?;
            }
            Mode::PfeTraj => {
                if self.initial_state.branch().is_none() {
                    return Err(ConfigError::Invalid(
                        "the reduced model starts on a branch: initial_state must be PLUS or MINUS"
                            .into(),
                    ));
                }
                let pfe = self.pfe_config();
                pfe.validate(&self.params)?;
                self.check_filter(pfe.dt * pfe.stride as f64)?;
            }
            Mode::Scaling => {
                let spec = self.scaling_spec();
                spec.validate()?;
                if spec.gamma_perp_values.is_empty() && spec.eta_values.is_empty() {
                    return Err(ConfigError::Invalid("the scaling sweep has no points".into()));
                }
            }
        }
        Ok(())
    }

    fn check_filter(&self, sample_dt: f64) -> Result<()> {
        rqj::analysis::filter::lowpass_coefficient(sample_dt, self.filter_fc)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(text: &str) -> Result<RunConfig> {
        RunConfig::from_raw(RawConfig::parse(text)?)
    }

    #[test]
    fn minimal_config_resolves_every_key() {
        let c = config("mode = QFUNC\n").unwrap();
        assert_eq!(c.params, SystemParams::reference());
        let keys: Vec<&str> = c.resolved.iter().map(|(k, _)| k.as_str()).collect();
        for key in ["g", "kappa", "drive", "dt", "n_max", "filter_fc", "q_n_re", "base_seed"] {
            assert!(keys.contains(&key), "{key} missing");
        }
    }

    #[test]
    fn resolved_text_round_trips() {
        let c = config("mode = pfe_traj\ng = 100 # comment\n\nt_final = 5\n").unwrap();
        let again = config(&c.to_text()).unwrap();
        assert_eq!(again.resolved, c.resolved);
        assert_eq!(again.params.g, 100.0);
    }

    #[test]
    fn unknown_key_is_an_error() {
        let e = config("mode = QFUNC\ngamma = 3\n").unwrap_err();
        assert!(matches!(e, ConfigError::UnknownKey(k) if k == "gamma"));
    }

    #[test]
    fn efficiency_outside_unit_interval_is_rejected() {
        let e = config("mode = ME_STEADY\neta = 1.5\n").unwrap_err();
        assert!(e.to_string().contains("[0, 1]"), "{e}");
    }

    #[test]
    fn weak_drive_rejected_where_branches_are_needed() {
        let text = "g = 120\ndrive = 50\n";
        let e = config(&format!("mode = QFUNC\n{text}")).unwrap_err();
        assert!(e.to_string().contains("2E > g"), "{e}");
        assert!(config(&format!("mode = ME_STEADY\n{text}")).is_ok());
    }

    #[test]
    fn malformed_lines_and_duplicates() {
        assert!(matches!(
            RawConfig::parse("mode QFUNC").unwrap_err(),
            ConfigError::Syntax { line: 1, .. }
        ));
        assert!(matches!(
            RawConfig::parse("g = 1\ng = 2").unwrap_err(),
            ConfigError::Duplicate(_)
        ));
        assert!(matches!(config("g = 1"), Err(ConfigError::MissingMode)));
        assert!(matches!(
            config("mode = QFUNC\nn_max = -3"),
            Err(ConfigError::BadValue { .. })
        ));
    }

    #[test]
    fn mode_dependent_step_defaults() {
        let sme = config("mode = SME_TRAJ").unwrap();
        let pfe = config("mode = PFE_TRAJ").unwrap();
        assert_eq!(sme.dt, SmeConfig::default_dt(&sme.params, Variant::Full));
        assert_eq!(pfe.dt, PfeStepper::default_dt(&pfe.params, &pfe.grid));
    }

    #[test]
    fn step_too_large_is_caught_before_running() {
        let e = config("mode = SME_TRAJ\ndt = 1e-3").unwrap_err();
        assert!(e.to_string().contains("does not resolve"), "{e}");
    }
}
