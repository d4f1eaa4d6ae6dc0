//! Dispatch of a validated configuration to the simulation pipelines.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rqj::analysis::switches::{detect_switches, event_rate, SwitchEvent};
use rqj::analysis::scaling::scaling_study;
use rqj::lindblad::{generator_norm, steady_state, Generator};
use rqj::noise::NoiseSource;
use rqj::operators::{compute_fixed_points, product_state, reference_state, CVector, C64};
use rqj::pfe::simulate_pfe;
use rqj::qfunc::q_function;
use rqj::record::TrajectoryRecord;
use rqj::sme::{compare_with_me, ensemble_run, simulate_trajectory, EnsembleConfig, EnsembleSummary};
use rqj::{Branch, DensityMatrix};
use serde_json::{json, Value};

use crate::config::{InitialState, Mode, RunConfig};

pub const META_FILE: &str = "run_meta.json";
pub const RESOLVED_CONFIG_FILE: &str = "run.cfg";

/// What a run produced.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub output_dir: PathBuf,
    pub files: Vec<String>,
    /// A trajectory or sweep point stopped early, or the run failed.
    pub incomplete: bool,
    pub error: Option<String>,
}

impl RunOutcome {
    pub fn succeeded(&self) -> bool {
        !self.incomplete && self.error.is_none()
    }
}

struct Outputs {
    dir: PathBuf,
    files: Vec<String>,
    incomplete: bool,
}

impl Outputs {
    fn path(&mut self, name: &str) -> PathBuf {
        self.files.push(name.to_string());
        self.dir.join(name)
    }

    fn json(&mut self, name: &str, value: &Value) -> rqj::Result<()> {
        let path = self.path(name);
        fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
        Ok(())
    }

    fn record(&mut self, name: &str, record: &TrajectoryRecord) -> rqj::Result<()> {
        if record.failure.is_some() {
            self.incomplete = true;
        }
        let path = self.path(name);
        record.save_csv(&path)
    }

    fn events(&mut self, name: &str, events: &[SwitchEvent]) -> rqj::Result<()> {
        let mut w = std::io::BufWriter::new(fs::File::create(self.path(name))?);
        writeln!(w, "t_us,direction,level_before_mhz,level_after_mhz")?;
        for e in events {
            writeln!(
                w,
                "{:.8e},{:?},{:.8e},{:.8e}",
                e.t, e.direction, e.filtered_level_before, e.filtered_level_after
            )?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs `config` on `workers` threads and writes its outputs and metadata.
///
/// The output directory is only created here, after validation, so an
/// invalid configuration leaves no files behind.
pub fn execute(config: &RunConfig, workers: usize) -> std::io::Result<RunOutcome> {
    fs::create_dir_all(&config.output_dir)?;
    fs::write(config.output_dir.join(RESOLVED_CONFIG_FILE), config.to_text())?;
    let mut out = Outputs {
        dir: config.output_dir.clone(),
        files: vec![RESOLVED_CONFIG_FILE.to_string()],
        incomplete: false,
    };
    let start = Instant::now();
    let result = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| rqj::Error::InvalidParams(format!("cannot start {workers} workers: {e}")))
        .and_then(|pool| pool.install(|| dispatch(config, &mut out)));
    let wall = start.elapsed().as_secs_f64();
    let error = result.err().map(|e| e.to_string());
    let incomplete = out.incomplete || error.is_some();
    let meta = json!({
        "mode": config.mode.name(),
        "config": config
            .resolved
            .iter()
            .map(|(k, v)| (k.clone(), Value::String(v.clone())))
            .collect::<serde_json::Map<_, _>>(),
        "seeds": {
            "base_seed": config.base_seed,
            "streams": stream_layout(config),
        },
        "version": env!("CARGO_PKG_VERSION"),
        "workers": workers,
        "wall_time_s": wall,
        "incomplete": incomplete,
        "error": error,
        "outputs": out.files,
    });
    fs::write(
        config.output_dir.join(META_FILE),
        serde_json::to_string_pretty(&meta).map_err(std::io::Error::other)? + "\n",
    )?;
    Ok(RunOutcome {
        output_dir: config.output_dir.clone(),
        files: out.files,
        incomplete,
        error,
    })
}

fn stream_layout(config: &RunConfig) -> String {
    match config.mode {
        Mode::MeSteady | Mode::Qfunc => "none (deterministic)".into(),
        Mode::SmeTraj | Mode::PfeTraj => "stream 0".into(),
        Mode::Ensemble => format!("trajectory k uses stream k, k in 0..{}", config.n_traj),
        Mode::Scaling => {
            "coupling point i uses stream i for every gamma_perp; efficiency point i uses stream 1000 + i"
                .into()
        }
    }
}

fn dispatch(config: &RunConfig, out: &mut Outputs) -> rqj::Result<()> {
    match config.mode {
        Mode::MeSteady => me_steady(config, out),
        Mode::Qfunc => qfunc(config, out),
        Mode::SmeTraj => sme_trajectory(config, out),
        Mode::PfeTraj => pfe_trajectory(config, out),
        Mode::Ensemble => ensemble(config, out),
        Mode::Scaling => {
            let result = scaling_study(&config.scaling_spec())?;
            let csv = out.path("scaling.csv");
            let json = out.path("scaling_exponents.json");
            result.save(&csv, &json)
        }
    }
}

fn initial_state(config: &RunConfig) -> rqj::Result<DensityMatrix> {
    let p = &config.params;
    match config.initial_state {
        InitialState::GroundCoherent => {
            let ground = CVector::from_vec(vec![C64::new(1.0, 0.0), C64::new(0.0, 0.0)]);
            Ok(product_state(&ground, C64::new(p.alpha_bar(), 0.0), p))
        }
        state => reference_state(state.branch().unwrap_or(Branch::Plus), p),
    }
}

fn me_steady(config: &RunConfig, out: &mut Outputs) -> rqj::Result<()> {
    let p = &config.params;
    let rho = steady_state(p, config.variant)?;
    let gen = Generator::new(p, config.variant)?;
    let residual = gen.apply(&rho)?.norm() / generator_norm(&gen);
    out.json(
        "steady_state.json",
        &json!({
            "dim": rho.dim(),
            "p_plus": rho.dressed_population(Branch::Plus),
            "p_minus": rho.dressed_population(Branch::Minus),
            "purity": rho.purity(),
            "relative_residual": residual,
        }),
    )
}

fn qfunc(config: &RunConfig, out: &mut Outputs) -> rqj::Result<()> {
    let p = &config.params;
    let rho = steady_state(p, config.variant)?;
    let grid = q_function(&rho, p, &config.q_grid)?;
    grid.save_csv(&out.path("qfunc.csv"))?;
    let fixed = compute_fixed_points(p)?;
    let point = |z: C64| json!({ "re": z.re, "im": z.im });
    let peaks: Vec<Value> = grid
        .local_maxima(1e-6)
        .iter()
        .map(|q| json!({ "re": q.alpha.re, "im": q.alpha.im, "q": q.value }))
        .collect();
    out.json(
        "qfunc_peaks.json",
        &json!({
            "integral": grid.integral(),
            "peaks": peaks,
            "fixed_points": [point(fixed.alpha(Branch::Plus)), point(fixed.alpha(Branch::Minus))],
        }),
    )
}

fn switch_summary(config: &RunConfig, record: &TrajectoryRecord, out: &mut Outputs) -> rqj::Result<Value> {
    let events = detect_switches(record, config.filter_fc, &config.thresholds)?;
    out.events("switches.csv", &events)?;
    let duration = record.len() as f64 * record.dt;
    Ok(json!({
        "n_events": events.len(),
        "duration_us": duration,
        "event_rate_mhz": event_rate(&events, duration),
    }))
}

fn sme_trajectory(config: &RunConfig, out: &mut Outputs) -> rqj::Result<()> {
    let rho0 = initial_state(config)?;
    let mut noise = NoiseSource::new(config.base_seed, 0).increments();
    let record = simulate_trajectory(&rho0, &config.params, &config.sme_config(), &mut noise)?;
    out.record("trajectory.csv", &record)?;
    let switches = switch_summary(config, &record, out)?;
    out.json(
        "summary.json",
        &json!({ "switches": switches, "failure": record.failure }),
    )
}

fn pfe_trajectory(config: &RunConfig, out: &mut Outputs) -> rqj::Result<()> {
    let mut noise = NoiseSource::new(config.base_seed, 0).increments();
    let run = simulate_pfe(&config.params, &config.pfe_config(), &mut noise)?;
    out.record("trajectory.csv", &run.record)?;
    for (k, (_, state)) in run.snapshots.iter().enumerate() {
        state.save_csv(&out.path(&format!("snapshot_t{k}.csv")))?;
    }
    let snapshot_times: Vec<f64> = run.snapshots.iter().map(|(t, _)| *t).collect();
    let switches = switch_summary(config, &run.record, out)?;
    out.json(
        "summary.json",
        &json!({
            "switches": switches,
            "clipped_mass": run.clipped_mass,
            "snapshot_times_us": snapshot_times,
            "failure": run.record.failure,
        }),
    )
}

fn ensemble(config: &RunConfig, out: &mut Outputs) -> rqj::Result<()> {
    let rho0 = initial_state(config)?;
    let sme = config.sme_config();
    let every = config.ensemble_snapshot_every();
    let result = ensemble_run(
        &rho0,
        &config.params,
        &sme,
        &EnsembleConfig {
            n_traj: config.n_traj,
            base_seed: config.base_seed,
            snapshot_every: every,
            workers: 0,
            keep_records: false,
        },
    )?;
    if !result.failures.is_empty() {
        out.incomplete = true;
    }
    let distances = compare_with_me(&result, &rho0, &config.params, &sme, every)?;
    let summary = EnsembleSummary {
        n_traj: config.n_traj,
        base_seed: config.base_seed,
        params: config.params,
        n_success: result.n_success,
        trace_distance_vs_me: distances,
    };
    out.json("ensemble_summary.json", &serde_json::to_value(summary)?)
}

/// Reads back the metadata of a finished run.
pub fn read_meta(dir: &Path) -> std::io::Result<Value> {
    let text = fs::read_to_string(dir.join(META_FILE))?;
    serde_json::from_str(&text).map_err(std::io::Error::other)
}
