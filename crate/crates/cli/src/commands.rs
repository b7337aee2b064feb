//! The general-purpose subcommands: trace, analytic, revival, bath.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use poincare_core::analytics::{crossing_rate, mu_n, sigma_plus_binomial, tau_p_analytic, AnalyticParams};
use poincare_core::bathsim::{build_bath, evolve_bath, map_t1_to_couplings, omega0_from_ghz, BathSpec};
use poincare_core::dynamics::{CentralAmplitude, FirstOrder};
use poincare_core::recurrence::{scan_revivals, source_for, Dynamics, PassageOptions, RevivalStats};
use poincare_core::{sample_config, CouplingMode, EnsembleSpec, PeSource, SystemConfig};

use crate::error::{CliError, CliResult};
use crate::memory;
use crate::output::{metadata, read_json, write_table, Table};

pub fn require_seed(seed: Option<u64>, subcommand: &str) -> CliResult<u64> {
    seed.ok_or_else(|| CliError::Usage(format!("{subcommand} draws random configurations and needs --seed")))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Exact,
    FirstOrder,
}

impl From<Method> for Dynamics {
    fn from(m: Method) -> Self {
        match m {
            Method::Exact => Dynamics::Exact,
            Method::FirstOrder => Dynamics::FirstOrder,
        }
    }
}

/// Memory needed to build the exact p_e source of a configuration.
pub fn exact_bytes(cfg: &SystemConfig) -> u64 {
    if cfg.is_star() {
        memory::arrowhead_bytes(cfg.n_env)
    } else {
        memory::dense_bytes(cfg.n_env + 1)
    }
}

/// Sampled p_e on τ = 0, step, …, ≤ tau_max.
pub fn sampled(src: &dyn PeSource, tau_max: f64, step: f64) -> CliResult<(Vec<f64>, Vec<f64>)> {
    if !(step > 0.0 && tau_max >= 0.0) {
        return Err(CliError::Usage("need --step > 0 and --tau-max >= 0".into()));
    }
    let n = (tau_max / step).floor() as usize + 1;
    let mut p = vec![0.0; n];
    src.fill_window(0.0, step, &mut p);
    Ok(((0..n).map(|k| k as f64 * step).collect(), p))
}

#[derive(Debug, Args, Serialize)]
pub struct TraceArgs {
    /// SystemConfig JSON file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long = "N")]
    pub n: Option<usize>,
    /// Common coupling 𝒢 (fixed mode).
    #[arg(long = "G")]
    pub g: Option<f64>,
    /// Γ₀/Ω₀ for uniformly drawn couplings (used without --G).
    #[arg(long, default_value_t = 0.01)]
    pub gamma0: f64,
    #[arg(long, default_value_t = 0.1)]
    pub spread: f64,
    /// All environment qubits resonant with coupling --G.
    #[arg(long)]
    pub resonant: bool,
    #[arg(long, default_value_t = 10_000.0)]
    pub tau_max: f64,
    #[arg(long, default_value_t = 1.0)]
    pub step: f64,
    #[arg(long, value_enum, default_value = "exact")]
    pub method: Method,
}

fn trace_config(a: &TraceArgs, seed: Option<u64>) -> CliResult<SystemConfig> {
    if let Some(path) = &a.config {
        let cfg: SystemConfig = read_json(path)?;
        cfg.validate()?;
        return Ok(cfg);
    }
    let n = a.n.ok_or_else(|| CliError::Usage("trace needs --config or --N".into()))?;
    if a.resonant {
        let g = a.g.ok_or_else(|| CliError::Usage("--resonant needs --G".into()))?;
        let cfg = SystemConfig::resonant(n, g);
        cfg.validate()?;
        return Ok(cfg);
    }
    let seed = require_seed(seed, "trace with random detunings")?;
    let spec = match a.g {
        Some(g) => EnsembleSpec::fixed(n, a.spread, g, 1, seed),
        None => EnsembleSpec::uniform(n, a.spread, a.gamma0, 1, seed),
    };
    Ok(sample_config(&spec, 0)?)
}

pub fn trace(a: &TraceArgs, seed: Option<u64>, out: &Path) -> CliResult<Vec<PathBuf>> {
    let cfg = trace_config(a, seed)?;
    let src: Box<dyn PeSource> = match a.method {
        Method::Exact => {
            memory::ensure(exact_bytes(&cfg))?;
            Box::new(CentralAmplitude::for_config(&cfg)?)
        }
        Method::FirstOrder => Box::new(FirstOrder::new(&cfg)),
    };
    let (times, p) = sampled(src.as_ref(), a.tau_max, a.step)?;
    let file_cfg = match &a.config {
        Some(_) => json!(cfg),
        None => serde_json::Value::Null,
    };
    let meta = metadata("trace", seed, json!({ "args": a, "config": file_cfg }));
    let mut t = Table::new(&["tau", "p_e"]);
    for (tau, pe) in times.into_iter().zip(p) {
        t.push(vec![tau.into(), pe.into()]);
    }
    Ok(vec![write_table(out, "trace.csv", &meta, &t)?])
}

#[derive(Debug, Args, Serialize)]
pub struct AnalyticArgs {
    #[arg(long = "N", value_delimiter = ',', default_value = "2,3,4,5,6")]
    pub n: Vec<usize>,
    #[arg(long = "G", default_value_t = 1e-3)]
    pub g: f64,
    #[arg(long, default_value_t = 0.1)]
    pub spread: f64,
    #[arg(long, value_delimiter = ',', default_value = "0.001")]
    pub delta: Vec<f64>,
}

pub fn analytic(a: &AnalyticArgs, out: &Path) -> CliResult<Vec<PathBuf>> {
    let mut t = Table::new(&[
        "N",
        "delta",
        "delta_m",
        "in_regime",
        "mu_closed",
        "ln_mu_closed",
        "crossing_rate",
        "tau_p_closed",
        "ln_tau_p_closed",
        "sigma_plus",
    ]);
    for &n in &a.n {
        for &delta in &a.delta {
            let p = AnalyticParams::new(n, a.g, a.spread, delta)?;
            let mu = mu_n(&p)?;
            let rate = crossing_rate(&p)?;
            let tau = tau_p_analytic(&p)?;
            t.push(vec![
                n.into(),
                delta.into(),
                p.delta_m().into(),
                mu.in_regime.into(),
                mu.value.into(),
                mu.ln_value.into(),
                rate.rate.into(),
                tau.value.into(),
                tau.ln_value.into(),
                sigma_plus_binomial(n).into(),
            ]);
        }
    }
    let meta = metadata("analytic", None, json!({ "args": a }));
    Ok(vec![write_table(out, "analytic.csv", &meta, &t)?])
}

#[derive(Debug, Args, Serialize)]
pub struct RevivalArgs {
    /// EnsembleSpec JSON file; its base_seed is replaced by --seed.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long = "N")]
    pub n: Option<usize>,
    #[arg(long = "G")]
    pub g: Option<f64>,
    #[arg(long, default_value_t = 0.01)]
    pub gamma0: f64,
    #[arg(long, default_value_t = 0.1)]
    pub spread: f64,
    #[arg(long, default_value_t = 300)]
    pub configs: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub delta: f64,
    /// Defaults to 30 closed-form Poincaré times (fixed coupling only).
    #[arg(long)]
    pub tau_max: Option<f64>,
    #[arg(long, default_value_t = 0.5)]
    pub step: f64,
    /// Minimum excursion below the band before a return counts.
    #[arg(long)]
    pub guard: Option<f64>,
    #[arg(long, value_enum, default_value = "exact")]
    pub method: Method,
}

fn closed_tau(spec: &EnsembleSpec, delta: f64) -> Option<f64> {
    if spec.coupling_mode != CouplingMode::Fixed || spec.n_env == 0 {
        return None;
    }
    let p = AnalyticParams::new(spec.n_env, spec.max_coupling(), spec.spread, delta).ok()?;
    tau_p_analytic(&p).ok().map(|v| v.value)
}

pub fn revival(a: &RevivalArgs, seed: Option<u64>, out: &Path) -> CliResult<Vec<PathBuf>> {
    let seed = require_seed(seed, "revival")?;
    let mut spec = match (&a.config, a.n) {
        (Some(path), _) => read_json::<EnsembleSpec>(path)?,
        (None, Some(n)) => match a.g {
            Some(g) => EnsembleSpec::fixed(n, a.spread, g, a.configs, seed),
            None => EnsembleSpec::uniform(n, a.spread, a.gamma0, a.configs, seed),
        },
        (None, None) => return Err(CliError::Usage("revival needs --config or --N".into())),
    };
    spec.base_seed = seed;
    spec.validate()?;
    let closed = closed_tau(&spec, a.delta);
    let tau_max = match (a.tau_max, closed) {
        (Some(t), _) => t,
        (None, Some(c)) => (30.0 * c).ceil(),
        (None, None) => return Err(CliError::Usage("--tau-max is required for uniform couplings".into())),
    };
    let mut opts = PassageOptions::new(a.step, tau_max);
    opts.guard = a.guard;
    memory::ensure(exact_bytes(&sample_config(&spec, 0)?))?;
    let dynamics = a.method.into();
    let scans = (0..spec.n_samples as u64)
        .into_par_iter()
        .map(|i| {
            let cfg = sample_config(&spec, i)?;
            let src = source_for(&cfg, dynamics)?;
            Ok((cfg.seed, scan_revivals(src.as_ref(), a.delta, &opts)?))
        })
        .collect::<poincare_core::Result<Vec<_>>>()?;

    let mut stats = RevivalStats::empty(a.delta);
    let mut per = Table::new(&["index", "seed", "censored", "tau_delta", "departure", "events", "observed_time"]);
    for (i, (cfg_seed, s)) in scans.iter().enumerate() {
        stats.push(s);
        per.push(vec![
            i.into(),
            (*cfg_seed).into(),
            s.first.tau().is_none().into(),
            s.first.tau().unwrap_or(f64::NAN).into(),
            s.departure.unwrap_or(f64::NAN).into(),
            s.events.into(),
            s.observed_time.into(),
        ]);
    }
    let (tr, tr_se) = stats.tau_p_renewal();
    let (tf, tf_se) = stats.tau_p_first_passage();
    let (tm, tm_se) = stats.tau_delta_mean();
    let mut sum = Table::new(&[
        "N",
        "delta",
        "configs",
        "censored",
        "events",
        "tau_p_renewal",
        "tau_p_renewal_se",
        "tau_p_first_passage",
        "tau_p_first_passage_se",
        "tau_delta_mean_uncensored",
        "tau_delta_mean_se",
        "tau_p_closed",
    ]);
    sum.push(vec![
        spec.n_env.into(),
        a.delta.into(),
        stats.config_count.into(),
        stats.censored.into(),
        stats.events.into(),
        tr.into(),
        tr_se.into(),
        tf.into(),
        tf_se.into(),
        tm.into(),
        tm_se.into(),
        closed.unwrap_or(f64::NAN).into(),
    ]);
    let meta = metadata("revival", Some(seed), json!({ "args": a, "ensemble": spec, "tau_max": tau_max }));
    Ok(vec![
        write_table(out, "revival_passages.csv", &meta, &per)?,
        write_table(out, "revival_summary.csv", &meta, &sum)?,
    ])
}

fn default_band() -> f64 {
    0.05
}

fn default_ghz() -> f64 {
    5.0
}

fn default_horizon() -> f64 {
    5e-6
}

fn default_samples() -> usize {
    2001
}

fn default_ip_step() -> f64 {
    1.0
}

/// `bath --config` file: system plus bath in physical units.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BathRunConfig {
    pub system: SystemConfig,
    pub m_tls: usize,
    #[serde(default = "default_band")]
    pub band_width: f64,
    pub t1_seconds: f64,
    #[serde(default = "default_ghz")]
    pub omega0_ghz: f64,
    #[serde(default = "default_horizon")]
    pub horizon_seconds: f64,
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// Interaction-picture step, used only beyond the dense size limit.
    #[serde(default = "default_ip_step")]
    pub ip_step: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct BathArgs {
    /// BathRunConfig JSON file.
    #[arg(long)]
    pub config: PathBuf,
}

/// Shared by `bath` and `fig4c`.
pub fn run_bath(
    run: &BathRunConfig,
    seed: u64,
    subcommand: &str,
    name: &str,
    out: &Path,
    with_free: bool,
) -> CliResult<PathBuf> {
    run.system.validate()?;
    if run.samples < 2 {
        return Err(CliError::Usage("samples must be >= 2".into()));
    }
    let omega0 = omega0_from_ghz(run.omega0_ghz);
    let cal = map_t1_to_couplings(run.t1_seconds, omega0, run.m_tls, run.band_width)?;
    if cal.band_warning {
        eprintln!(
            "warning: only {:.3} TLSs per golden-rule linewidth (< 100); expect finite-size revivals",
            cal.tls_per_linewidth
        );
    }
    let dim = 1 + run.system.n_env + run.m_tls;
    if dim <= poincare_core::bathsim::SPECTRAL_MAX_DIM {
        memory::ensure(memory::dense_bytes(dim))?;
    }
    let bath = build_bath(
        &BathSpec { m_tls: run.m_tls, band_width: run.band_width, target_t1: run.t1_seconds, omega0, seed },
        run.system.n_env,
    )?;
    let horizon = run.horizon_seconds * omega0;
    let times: Vec<f64> = (0..run.samples).map(|k| horizon * k as f64 / (run.samples - 1) as f64).collect();
    let (tr, free) = evolve_bath(&run.system, &bath, &times, run.ip_step)?;
    let meta = metadata(
        subcommand,
        Some(seed),
        json!({ "config": run, "omega0_rad_per_s": omega0, "calibration": cal, "tau_horizon": horizon }),
    );
    let q = tr.qubit_pop.as_ref().expect("bath traces carry populations");
    let tot = tr.total_pop.as_ref().expect("bath traces carry populations");
    let mut t = if with_free {
        Table::new(&["tau", "t_seconds", "p_e", "p_e_no_bath", "qubit_pop", "total_pop"])
    } else {
        Table::new(&["tau", "p_e", "qubit_pop", "total_pop"])
    };
    for i in 0..times.len() {
        let mut row = vec![times[i].into()];
        if with_free {
            row.push((times[i] / omega0).into());
        }
        row.push(tr.p_e[i].into());
        if with_free {
            row.push(free[i].into());
        }
        row.push(q[i].into());
        row.push(tot[i].into());
        t.push(row);
    }
    write_table(out, name, &meta, &t)
}

pub fn bath(a: &BathArgs, seed: Option<u64>, out: &Path) -> CliResult<Vec<PathBuf>> {
    let seed = require_seed(seed, "bath")?;
    let run: BathRunConfig = read_json(&a.config)?;
    Ok(vec![run_bath(&run, seed, "bath", "bath.csv", out, false)?])
}
