//! Figure presets.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use poincare_core::analytics::{mu_n, p_n_delta, tau_p_analytic, AnalyticParams};
use poincare_core::dynamics::{CentralAmplitude, FirstOrder};
use poincare_core::recurrence::{
    fit_exponential, histogram_delta, mu_ensemble, revival_ensemble, sample_deficits, Binning, Dynamics, MuOptions,
    PassageOptions,
};
use poincare_core::rng::sample_seed;
use poincare_core::{sample_config, EnsembleSpec};

use crate::commands::{exact_bytes, require_seed, run_bath, sampled, BathRunConfig};
use crate::error::{CliError, CliResult};
use crate::memory;
use crate::output::{metadata, write_table, Cell, Table};

const SPREAD: f64 = 0.1;
const G: f64 = 1e-3;
const DELTA: f64 = 1e-3;
const GAMMA0: f64 = 0.01;

fn ensemble_seed(seed: u64, n: usize) -> u64 {
    sample_seed(seed, n as u64)
}

fn fit_row(series: &'static str, extra: f64, n: &[f64], y: &[f64]) -> Vec<Cell> {
    match fit_exponential(n, y) {
        Ok(f) => vec![Cell::S(series), extra.into(), f.slope.into(), f.prefactor.into(), f.r_squared.into()],
        Err(_) => vec![Cell::S(series), extra.into(), f64::NAN.into(), f64::NAN.into(), f64::NAN.into()],
    }
}

fn fit_table() -> Table {
    Table::new(&["series", "delta", "slope", "prefactor", "r_squared"])
}

#[derive(Debug, Args, Serialize)]
pub struct Fig1bArgs {
    #[arg(long = "N", value_delimiter = ',', default_value = "1,4,10,1000000")]
    pub n: Vec<usize>,
    #[arg(long, default_value_t = SPREAD)]
    pub spread: f64,
    #[arg(long, default_value_t = GAMMA0)]
    pub gamma0: f64,
    #[arg(long, default_value_t = 500.0)]
    pub tau_max: f64,
    #[arg(long, default_value_t = 0.25)]
    pub step: f64,
}

pub fn fig1b(a: &Fig1bArgs, seed: Option<u64>, out: &Path) -> CliResult<Vec<PathBuf>> {
    let seed = require_seed(seed, "fig1b")?;
    let mut t = Table::new(&["N", "tau", "p_e", "p_e_first_order"]);
    for &n in &a.n {
        let cfg = sample_config(&EnsembleSpec::uniform(n, a.spread, a.gamma0, 1, ensemble_seed(seed, n)), 0)?;
        memory::ensure(exact_bytes(&cfg))?;
        let (times, exact) = sampled(&CentralAmplitude::for_config(&cfg)?, a.tau_max, a.step)?;
        let (_, fo) = sampled(&FirstOrder::new(&cfg), a.tau_max, a.step)?;
        for k in 0..times.len() {
            t.push(vec![n.into(), times[k].into(), exact[k].into(), fo[k].into()]);
        }
    }
    let meta = metadata("fig1b", Some(seed), json!({ "args": a }));
    Ok(vec![write_table(out, "fig1b.csv", &meta, &t)?])
}

#[derive(Debug, Args, Serialize)]
pub struct Fig2Args {
    #[arg(long = "N", value_delimiter = ',', default_value = "3,6,30")]
    pub n: Vec<usize>,
    /// Independent (configuration, time) draws per N.
    #[arg(long, default_value_t = 1_000_000)]
    pub draws: usize,
    #[arg(long, default_value_t = 60)]
    pub bins: usize,
}

fn normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    (-(x - mean).powi(2) / (2.0 * var)).exp() / (2.0 * PI * var).sqrt()
}

pub fn fig2(a: &Fig2Args, seed: Option<u64>, out: &Path) -> CliResult<Vec<PathBuf>> {
    let seed = require_seed(seed, "fig2")?;
    // 𝒯 = 8π𝒢/spread = 1.
    let g = SPREAD / (8.0 * PI);
    let mut t = Table::new(&[
        "N",
        "bin_lo",
        "bin_hi",
        "count",
        "density_emp",
        "density_closed",
        "density_gauss",
        "cum_emp",
        "cum_closed",
    ]);
    for &n in &a.n {
        let spec = EnsembleSpec::fixed(n, SPREAD, g, a.draws, ensemble_seed(seed, n));
        let samples: Vec<f64> = (0..a.draws as u64)
            .into_par_iter()
            .map(|i| {
                let cfg = sample_config(&spec, i)?;
                Ok(sample_deficits(&FirstOrder::new(&cfg), 1e6, 2e6, 1, cfg.seed)[0])
            })
            .collect::<poincare_core::Result<_>>()?;
        let h = histogram_delta(&samples, Binning::Auto { bins: a.bins, log: true })?;
        // Δ has a heavy x^{-3/2} tail; the Gaussian uses moments of the central 99%.
        let mut sorted = samples.clone();
        sorted.sort_by(f64::total_cmp);
        let core = &sorted[..(sorted.len() * 99 / 100).max(1)];
        let mean = core.iter().sum::<f64>() / core.len() as f64;
        let var = core.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / core.len() as f64;
        let centers = h.centers(true);
        let mut cum = 0u64;
        for b in 0..h.counts.len() {
            cum += h.counts[b];
            let hi = h.edges[b + 1];
            let p = AnalyticParams::new(n, g, SPREAD, hi)?;
            t.push(vec![
                n.into(),
                h.edges[b].into(),
                hi.into(),
                h.counts[b].into(),
                h.density[b].into(),
                p_n_delta(centers[b], &p)?.value.into(),
                normal_pdf(centers[b], mean, var).into(),
                (cum as f64 / h.total as f64).into(),
                mu_n(&p)?.value.into(),
            ]);
        }
    }
    let meta = metadata("fig2", Some(seed), json!({ "args": a, "coupling": g, "spread": SPREAD }));
    Ok(vec![write_table(out, "fig2.csv", &meta, &t)?])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Panel {
    A,
    B,
    C,
    D,
}

#[derive(Debug, Args, Serialize)]
pub struct Fig3Args {
    #[arg(long, value_enum)]
    pub panel: Panel,
    /// Defaults: 2..6 (a), 2..10 (b), 2..5 (c, d).
    #[arg(long = "N", value_delimiter = ',')]
    pub n: Option<Vec<usize>>,
    /// Thresholds for panels b and d.
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.05,0.02")]
    pub delta: Vec<f64>,
    /// Defaults: 200 (a, b), 300 (c), 100 (d).
    #[arg(long)]
    pub configs: Option<usize>,
    #[arg(long, default_value_t = 100_000)]
    pub samples_per_config: usize,
    /// Panel d horizon; panel c uses 30 closed-form Poincaré times.
    #[arg(long, default_value_t = 1e5)]
    pub tau_max: f64,
    #[arg(long, default_value_t = 0.5)]
    pub step: f64,
}

fn mu_opts(a: &Fig3Args, dynamics: Dynamics) -> MuOptions {
    MuOptions { tau_burnin: 1e4, tau_window: 1.01e6, samples_per_config: a.samples_per_config, dynamics }
}

pub fn fig3(a: &Fig3Args, seed: Option<u64>, out: &Path) -> CliResult<Vec<PathBuf>> {
    let seed = require_seed(seed, "fig3")?;
    let meta = metadata("fig3", Some(seed), json!({ "args": a }));
    let nf = |ns: &[usize]| ns.iter().map(|&n| n as f64).collect::<Vec<f64>>();
    let mut fits = fit_table();
    let (name, table) = match a.panel {
        Panel::A => {
            let ns = a.n.clone().unwrap_or_else(|| (2..=6).collect());
            let configs = a.configs.unwrap_or(200);
            let mut t =
                Table::new(&["N", "mu_closed", "mu_first_order_emp", "mu_first_order_se", "mu_full_emp", "mu_full_se"]);
            let (mut closed, mut fo, mut full) = (Vec::new(), Vec::new(), Vec::new());
            for &n in &ns {
                let spec = EnsembleSpec::fixed(n, SPREAD, G, configs, ensemble_seed(seed, n));
                let c = mu_n(&AnalyticParams::new(n, G, SPREAD, DELTA)?)?.value;
                let f = mu_ensemble(&spec, &[DELTA], &mu_opts(a, Dynamics::FirstOrder), false)?;
                let e = mu_ensemble(&spec, &[DELTA], &mu_opts(a, Dynamics::Exact), false)?;
                t.push(vec![n.into(), c.into(), f.mu[0].into(), f.se[0].into(), e.mu[0].into(), e.se[0].into()]);
                closed.push(c);
                fo.push(f.mu[0]);
                full.push(e.mu[0]);
            }
            fits.push(fit_row("mu_closed", DELTA, &nf(&ns), &closed));
            fits.push(fit_row("mu_first_order_emp", DELTA, &nf(&ns), &fo));
            fits.push(fit_row("mu_full_emp", DELTA, &nf(&ns), &full));
            ("fig3a", t)
        }
        Panel::B => {
            let ns = a.n.clone().unwrap_or_else(|| (2..=10).collect());
            let configs = a.configs.unwrap_or(200);
            let mut t = Table::new(&["N", "delta", "mu_emp", "mu_se"]);
            let mut cols = vec![Vec::new(); a.delta.len()];
            for &n in &ns {
                let spec = EnsembleSpec::uniform(n, SPREAD, GAMMA0, configs, ensemble_seed(seed, n));
                let e = mu_ensemble(&spec, &a.delta, &mu_opts(a, Dynamics::Exact), false)?;
                for (k, &d) in a.delta.iter().enumerate() {
                    t.push(vec![n.into(), d.into(), e.mu[k].into(), e.se[k].into()]);
                    cols[k].push(e.mu[k]);
                }
            }
            for (k, &d) in a.delta.iter().enumerate() {
                fits.push(fit_row("mu_emp", d, &nf(&ns), &cols[k]));
            }
            ("fig3b", t)
        }
        Panel::C => {
            let ns = a.n.clone().unwrap_or_else(|| (2..=5).collect());
            let configs = a.configs.unwrap_or(300);
            let mut t = Table::new(&[
                "N",
                "tau_p_closed",
                "tau_p_emp",
                "tau_p_emp_se",
                "tau_p_first_passage",
                "tau_p_first_passage_se",
                "censored",
                "events",
            ]);
            let (mut closed, mut emp, mut fp) = (Vec::new(), Vec::new(), Vec::new());
            for &n in &ns {
                let c = tau_p_analytic(&AnalyticParams::new(n, G, SPREAD, DELTA)?)?.value;
                let spec = EnsembleSpec::fixed(n, SPREAD, G, configs, ensemble_seed(seed, n));
                let s =
                    revival_ensemble(&spec, DELTA, &PassageOptions::new(a.step, (30.0 * c).ceil()), Dynamics::Exact)?;
                let (r, rse) = s.tau_p_renewal();
                let (f, fse) = s.tau_p_first_passage();
                t.push(vec![
                    n.into(),
                    c.into(),
                    r.into(),
                    rse.into(),
                    f.into(),
                    fse.into(),
                    s.censored.into(),
                    s.events.into(),
                ]);
                closed.push(c);
                emp.push(r);
                fp.push(f);
            }
            fits.push(fit_row("tau_p_closed", DELTA, &nf(&ns), &closed));
            fits.push(fit_row("tau_p_emp", DELTA, &nf(&ns), &emp));
            fits.push(fit_row("tau_p_first_passage", DELTA, &nf(&ns), &fp));
            ("fig3c", t)
        }
        Panel::D => {
            let ns = a.n.clone().unwrap_or_else(|| (2..=5).collect());
            let configs = a.configs.unwrap_or(100);
            let mut t =
                Table::new(&["N", "delta", "tau_p_emp", "tau_p_emp_se", "tau_p_first_passage", "censored", "events"]);
            let mut cols = vec![Vec::new(); a.delta.len()];
            for &n in &ns {
                let spec = EnsembleSpec::uniform(n, SPREAD, GAMMA0, configs, ensemble_seed(seed, n));
                for (k, &d) in a.delta.iter().enumerate() {
                    let s = revival_ensemble(&spec, d, &PassageOptions::new(a.step, a.tau_max), Dynamics::Exact)?;
                    let (r, rse) = s.tau_p_renewal();
                    t.push(vec![
                        n.into(),
                        d.into(),
                        r.into(),
                        rse.into(),
                        s.tau_p_first_passage().0.into(),
                        s.censored.into(),
                        s.events.into(),
                    ]);
                    cols[k].push(r);
                }
            }
            for (k, &d) in a.delta.iter().enumerate() {
                fits.push(fit_row("tau_p_emp", d, &nf(&ns), &cols[k]));
            }
            ("fig3d", t)
        }
    };
    Ok(vec![
        write_table(out, &format!("{name}.csv"), &meta, &table)?,
        write_table(out, &format!("{name}_fit.csv"), &meta, &fits)?,
    ])
}

#[derive(Debug, Args, Serialize)]
pub struct Fig4cArgs {
    #[arg(long = "N", default_value_t = 5)]
    pub n: usize,
    #[arg(long = "M", default_value_t = 10_000)]
    pub m_tls: usize,
    #[arg(long, default_value_t = 10.0)]
    pub t1_us: f64,
    #[arg(long, default_value_t = 0.02)]
    pub spread: f64,
    #[arg(long, default_value_t = 4e-6)]
    pub gamma0: f64,
    /// TLS band width in units of Ω₀.
    #[arg(long, default_value_t = 0.05)]
    pub band_width: f64,
    /// Ω₀/2π in GHz.
    #[arg(long, default_value_t = 5.0)]
    pub omega0_ghz: f64,
    #[arg(long, default_value_t = 5.0)]
    pub horizon_us: f64,
    #[arg(long, default_value_t = 2001)]
    pub samples: usize,
    #[arg(long, default_value_t = 1.0)]
    pub ip_step: f64,
}

pub fn fig4c(a: &Fig4cArgs, seed: Option<u64>, out: &Path) -> CliResult<Vec<PathBuf>> {
    let seed = require_seed(seed, "fig4c")?;
    if a.n == 0 {
        return Err(CliError::Usage("fig4c needs N >= 1".into()));
    }
    let system = sample_config(&EnsembleSpec::uniform(a.n, a.spread, a.gamma0, 1, seed), 0)?;
    let run = BathRunConfig {
        system,
        m_tls: a.m_tls,
        band_width: a.band_width,
        t1_seconds: a.t1_us * 1e-6,
        omega0_ghz: a.omega0_ghz,
        horizon_seconds: a.horizon_us * 1e-6,
        samples: a.samples,
        ip_step: a.ip_step,
    };
    Ok(vec![run_bath(&run, seed, "fig4c", "fig4c.csv", out, true)?])
}
