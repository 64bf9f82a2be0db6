//! Executes a prepared experiment and writes its result bundle.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use log::info;
use serde::{Deserialize, Serialize};
use staticnoise::generator::{asymptotic_state, PerturbativeGenerator, Trajectory};
use staticnoise::oracle::{AveragedTrajectory, EnsembleSampler, Execution, Progress};
use staticnoise::quantum::fidelity;
use staticnoise::DensityMatrix;

use crate::config::{Observable, Prepared, ResolvedConfig};
use crate::error::CliError;

/// `|dc/dt|` at the last sample below which a run counts as settled.
pub const PLATEAU_SLOPE: f64 = 1e-4;

pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const METADATA_FILE: &str = "metadata.json";
const CHECKPOINT_FILE: &str = "mc_checkpoint.json";

pub fn states_file(source: &str) -> String {
    format!("states_{source}.csv")
}

pub fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n_times: usize,
    /// Coherence of the dephased initial state in the eigenbasis of `H̄`.
    pub asymptotic_coherence: Option<f64>,
    pub final_coherence: f64,
    pub final_slope: Option<f64>,
    pub plateau_reached: bool,
    pub min_fidelity: Option<f64>,
    pub min_fidelity_time: Option<f64>,
    pub max_purity_deviation: Option<f64>,
    pub max_purity_deviation_time: Option<f64>,
    pub positivity_floor: Option<f64>,
    pub max_trace_error: Option<f64>,
    pub max_hermiticity_error: Option<f64>,
    pub mc_max_stderr: Option<f64>,
}

#[derive(Debug, Serialize)]
struct Metadata<'a> {
    config: &'a ResolvedConfig,
    version: &'static str,
    started_unix: u64,
    wall_time_s: f64,
    threads: usize,
    execution: Execution,
    solver_accepted_steps: Option<usize>,
    solver_rejected_steps: Option<usize>,
    solver_evaluations: Option<usize>,
}

pub struct RunOptions {
    pub out: Option<PathBuf>,
    pub checkpoint: bool,
    pub execution: Execution,
}

struct Series {
    me: Option<Trajectory>,
    mc: Option<AveragedTrajectory>,
    mc_states: Option<Vec<DensityMatrix>>,
    agreement: Option<Agreement>,
}

/// Runs the experiment and returns the output directory and summary.
pub fn run(prepared: &Prepared, opts: &RunOptions) -> Result<(PathBuf, Summary), CliError> {
    let cfg = &prepared.config;
    let dir =
        opts.out.clone().or_else(|| cfg.output.dir.clone()).unwrap_or_else(|| PathBuf::from("runs").join(&cfg.name));
    fs::create_dir_all(&dir)?;
    let started = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let clock = Instant::now();

    let bundle = &prepared.bundle;
    let times = prepared.grid.times();
    let me = if cfg.method.master_equation() {
        info!("integrating master equation ({:?} rates) on {} samples", cfg.gamma_mode, times.len());
        let generator = PerturbativeGenerator::new(&bundle.ensemble, cfg.gamma_mode)?;
        Some(generator.integrate(&bundle.rho0, &prepared.grid)?)
    } else {
        None
    };
    let mc = if cfg.method.monte_carlo() {
        let n_real = cfg.n_real.expect("validated in prepare");
        info!("averaging {n_real} realizations (seed {})", cfg.seed);
        let sampler = EnsembleSampler::new(bundle.ensemble.clone(), cfg.seed);
        let checkpoint = opts.checkpoint.then(|| dir.join(CHECKPOINT_FILE));
        match sampler.average_resumable(&bundle.rho0, times, n_real, opts.execution, checkpoint.as_deref(), None)? {
            Progress::Complete(avg) => Some(avg),
            Progress::Suspended { n_done } => {
                return Err(CliError::Bundle(format!("Monte Carlo stopped after {n_done} realizations")))
            }
        }
    } else {
        None
    };
    let mc_states = mc.as_ref().map(|m| m.states());
    let agreement = match (&me, &mc_states) {
        (Some(me), Some(mc)) => Some(agreement(me, mc)?),
        _ => None,
    };
    let series = Series { me, mc, mc_states, agreement };

    let asymptote = match asymptotic_state(&bundle.ensemble.mean_hamiltonian(), &bundle.rho0) {
        Ok(rho) => Some(rho.total_coherence()),
        Err(staticnoise::Error::DegenerateSpectrum { .. }) => None,
        Err(e) => return Err(e.into()),
    };
    let summary = summarize(&series, times, asymptote);

    write_trajectory(&dir.join(TRAJECTORY_FILE), cfg, times, &series)?;
    if let Some(me) = &series.me {
        write_states(&dir.join(states_file("me")), times, &me.states)?;
    }
    if let Some(states) = &series.mc_states {
        write_states(&dir.join(states_file("mc")), times, states)?;
    }
    fs::write(dir.join(SUMMARY_FILE), serde_json::to_string_pretty(&summary)? + "\n")?;
    let stats = series.me.as_ref().map(|t| t.stats);
    let meta = Metadata {
        config: cfg,
        version: env!("CARGO_PKG_VERSION"),
        started_unix: started,
        wall_time_s: clock.elapsed().as_secs_f64(),
        threads: rayon::current_num_threads(),
        execution: opts.execution,
        solver_accepted_steps: stats.map(|s| s.accepted),
        solver_rejected_steps: stats.map(|s| s.rejected),
        solver_evaluations: stats.map(|s| s.evaluations),
    };
    fs::write(dir.join(METADATA_FILE), serde_json::to_string_pretty(&meta)? + "\n")?;
    if opts.checkpoint {
        let _ = fs::remove_file(dir.join(CHECKPOINT_FILE));
    }
    Ok((dir, summary))
}

/// Per-time fidelity between the two methods and relative purity deviation.
struct Agreement {
    fidelity: Vec<f64>,
    purity_deviation: Vec<f64>,
}

fn agreement(me: &Trajectory, mc: &[DensityMatrix]) -> Result<Agreement, CliError> {
    let mut fid = Vec::with_capacity(mc.len());
    let mut dev = Vec::with_capacity(mc.len());
    for (a, b) in me.states.iter().zip(mc) {
        fid.push(fidelity(a, b)?);
        dev.push((a.purity() / b.purity() - 1.0).abs());
    }
    Ok(Agreement { fidelity: fid, purity_deviation: dev })
}

fn arg_extreme(xs: &[f64], better: impl Fn(f64, f64) -> bool) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if better(x, xs[best]) {
            best = i;
        }
    }
    best
}

fn summarize(series: &Series, times: &[f64], asymptote: Option<f64>) -> Summary {
    let coherence: Vec<f64> = match (&series.me, &series.mc_states) {
        (Some(me), _) => me.coherence(),
        (None, Some(states)) => states.iter().map(|s| s.total_coherence()).collect(),
        (None, None) => unreachable!("at least one method runs"),
    };
    let n = times.len();
    let final_slope = (n >= 2).then(|| (coherence[n - 1] - coherence[n - 2]) / (times[n - 1] - times[n - 2]));
    let mut summary = Summary {
        n_times: n,
        asymptotic_coherence: asymptote,
        final_coherence: coherence[n - 1],
        final_slope,
        plateau_reached: final_slope.is_some_and(|s| s.abs() < PLATEAU_SLOPE),
        min_fidelity: None,
        min_fidelity_time: None,
        max_purity_deviation: None,
        max_purity_deviation_time: None,
        positivity_floor: series.me.as_ref().map(|t| t.positivity_floor),
        max_trace_error: series.me.as_ref().map(|t| t.max_trace_error),
        max_hermiticity_error: series.me.as_ref().map(|t| t.max_hermiticity_error),
        mc_max_stderr: series.mc.as_ref().map(|m| (0..n).map(|i| m.max_stderr(i)).fold(0.0, f64::max)),
    };
    if let Some(ag) = &series.agreement {
        let i = arg_extreme(&ag.fidelity, |a, b| a < b);
        summary.min_fidelity = Some(ag.fidelity[i]);
        summary.min_fidelity_time = Some(times[i]);
        let i = arg_extreme(&ag.purity_deviation, |a, b| a > b);
        summary.max_purity_deviation = Some(ag.purity_deviation[i]);
        summary.max_purity_deviation_time = Some(times[i]);
    }
    summary
}

fn write_trajectory(path: &Path, cfg: &ResolvedConfig, times: &[f64], series: &Series) -> Result<(), CliError> {
    let obs = cfg.output.observables.as_deref().unwrap_or_default();
    let mut header = vec!["t".to_string()];
    let mut columns: Vec<Vec<f64>> = Vec::new();
    let mut push = |name: String, values: Vec<f64>| {
        header.push(name);
        columns.push(values);
    };
    if let Some(me) = &series.me {
        for &[j, k] in &cfg.output.elements {
            let z = me.element(j - 1, k - 1);
            push(format!("re_rho_{j}_{k}_me"), z.iter().map(|z| z.re).collect());
            push(format!("im_rho_{j}_{k}_me"), z.iter().map(|z| z.im).collect());
        }
        if obs.contains(&Observable::Coherence) {
            push("coherence_me".into(), me.coherence());
        }
        if obs.contains(&Observable::Purity) {
            push("purity_me".into(), me.purity());
        }
    }
    if let (Some(mc), Some(states)) = (&series.mc, &series.mc_states) {
        for &[j, k] in &cfg.output.elements {
            let z = mc.element(j - 1, k - 1);
            push(format!("re_rho_{j}_{k}_mc"), z.iter().map(|z| z.re).collect());
            push(format!("im_rho_{j}_{k}_mc"), z.iter().map(|z| z.im).collect());
            push(format!("stderr_re_rho_{j}_{k}_mc"), mc.stderr_re.iter().map(|s| s[(j - 1, k - 1)]).collect());
            push(format!("stderr_im_rho_{j}_{k}_mc"), mc.stderr_im.iter().map(|s| s[(j - 1, k - 1)]).collect());
        }
        if obs.contains(&Observable::Coherence) {
            push("coherence_mc".into(), states.iter().map(|s| s.total_coherence()).collect());
        }
        if obs.contains(&Observable::Purity) {
            push("purity_mc".into(), states.iter().map(|s| s.purity()).collect());
        }
    }
    if let Some(ag) = &series.agreement {
        if obs.contains(&Observable::Fidelity) {
            push("fidelity".into(), ag.fidelity.clone());
            push("purity_deviation".into(), ag.purity_deviation.clone());
        }
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(&header)?;
    for (i, &t) in times.iter().enumerate() {
        let row = std::iter::once(fmt(t)).chain(columns.iter().map(|c| fmt(c[i])));
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Upper triangle of every state, one-based indices.
fn write_states(path: &Path, times: &[f64], states: &[DensityMatrix]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["t", "j", "k", "re", "im"])?;
    for (&t, rho) in times.iter().zip(states) {
        let d = rho.dim();
        for j in 0..d {
            for k in j..d {
                let z = rho.get(j, k);
                w.write_record([fmt(t), (j + 1).to_string(), (k + 1).to_string(), fmt(z.re), fmt(z.im)])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}
