//! Empirical revival statistics: first passage, long-time threshold occupancy,
//! deficit histograms and exponential fits in N.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{CentralAmplitude, FirstOrder, PeSource};
use crate::error::{invalid, Error, Result};
use crate::model::{sample_config, EnsembleSpec, SystemConfig};
use crate::rng::{derive_rng, DOMAIN_TIMES};
use crate::stats::{linear_fit, mean_se};

/// Samples per scan window; windows start at fixed multiples of this.
pub const SCAN_WINDOW: usize = 1 << 14;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Passage {
    Revival {
        tau: f64,
    },
    /// No revival within the horizon.
    Censored {
        horizon: f64,
    },
}

impl Passage {
    pub fn tau(&self) -> Option<f64> {
        match self {
            Passage::Revival { tau } => Some(*tau),
            Passage::Censored { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PassageOptions {
    /// Sampling step Δτ.
    pub step: f64,
    pub tau_max: f64,
    /// Minimum excursion below 1 − δ before a return counts; defaults to one step.
    pub guard: Option<f64>,
}

impl PassageOptions {
    pub fn new(step: f64, tau_max: f64) -> Self {
        Self { step, tau_max, guard: None }
    }

    fn validate(&self) -> Result<()> {
        if !(self.step > 0.0 && self.tau_max >= 0.0 && self.guard.is_none_or(|g| g > 0.0)) {
            return Err(invalid("need step > 0, tau_max >= 0 and guard > 0"));
        }
        Ok(())
    }

    fn guard(&self) -> f64 {
        self.guard.unwrap_or(self.step)
    }
}

/// Result of scanning one trace for revivals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanOutcome {
    pub first: Passage,
    /// First time with p_e < 1 − δ.
    pub departure: Option<f64>,
    /// Returns into the band (each after a qualifying excursion).
    pub events: usize,
    /// Time from departure to the end of the horizon.
    pub observed_time: f64,
}

fn scan(source: &dyn PeSource, delta: f64, opts: &PassageOptions, stop_at_first: bool) -> Result<ScanOutcome> {
    opts.validate()?;
    if !(delta > 0.0) {
        return Err(invalid("δ must be > 0"));
    }
    let level = 1.0 - delta;
    let guard = opts.guard();
    let last = (opts.tau_max / opts.step).floor() as usize;
    let mut buf = vec![0.0; SCAN_WINDOW];
    let mut departure = None;
    let mut first = None;
    let mut excursion_start: Option<f64> = None;
    let mut events = 0usize;
    let mut last_tau = 0.0;
    'outer: for w in 0..=last / SCAN_WINDOW {
        let k0 = w * SCAN_WINDOW;
        let len = (last + 1 - k0).min(SCAN_WINDOW);
        source.fill_window(k0 as f64 * opts.step, opts.step, &mut buf[..len]);
        for (j, &p) in buf[..len].iter().enumerate() {
            let tau = (k0 + j) as f64 * opts.step;
            last_tau = tau;
            let in_band = p > level;
            match excursion_start {
                None if !in_band => {
                    if departure.is_none() {
                        departure = Some(tau);
                    }
                    excursion_start = Some(tau);
                }
                Some(start) if in_band => {
                    if tau - start >= guard {
                        events += 1;
                        if first.is_none() {
                            first = Some(tau);
                            if stop_at_first {
                                break 'outer;
                            }
                        }
                    }
                    excursion_start = None;
                }
                _ => {}
            }
        }
    }
    let horizon = last as f64 * opts.step;
    Ok(ScanOutcome {
        first: match first {
            Some(tau) => Passage::Revival { tau },
            None => Passage::Censored { horizon },
        },
        departure,
        events,
        observed_time: departure.map_or(0.0, |d| last_tau - d),
    })
}

/// Smallest sampled τ after departure (and at least `guard` later) with p_e > 1 − δ.
pub fn detect_first_passage(source: &dyn PeSource, delta: f64, opts: &PassageOptions) -> Result<Passage> {
    Ok(scan(source, delta, opts, true)?.first)
}

/// First passage plus the count of all band re-entries over the full horizon.
pub fn scan_revivals(source: &dyn PeSource, delta: f64, opts: &PassageOptions) -> Result<ScanOutcome> {
    scan(source, delta, opts, false)
}

/// Deficits Δ = 1 − p_e at `n` times drawn uniformly from [τ_burnin, τ_window].
pub fn sample_deficits(source: &dyn PeSource, tau_burnin: f64, tau_window: f64, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = derive_rng(seed, DOMAIN_TIMES, 0);
    (0..n)
        .map(|_| {
            let t = tau_burnin + (tau_window - tau_burnin) * rng.random::<f64>();
            1.0 - source.p_e_at(t)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MuEstimate {
    pub mu: f64,
    pub se: f64,
    pub n: usize,
    /// Phases never randomize; the estimate is not a long-time average.
    pub degenerate: bool,
}

fn fraction_below(deficits: &[f64], delta: f64) -> f64 {
    deficits.iter().filter(|&&d| d < delta).count() as f64 / deficits.len() as f64
}

/// Fraction of random times in [τ_burnin, τ_window] with 1 − p_e < δ.
pub fn estimate_mu_empirical(
    source: &dyn PeSource,
    delta: f64,
    tau_burnin: f64,
    tau_window: f64,
    n_samples: usize,
    seed: u64,
) -> Result<MuEstimate> {
    if n_samples == 0 || !(tau_window > tau_burnin) {
        return Err(invalid("need n_samples > 0 and tau_window > tau_burnin"));
    }
    let d = sample_deficits(source, tau_burnin, tau_window, n_samples, seed);
    let mu = fraction_below(&d, delta);
    Ok(MuEstimate {
        mu,
        se: (mu * (1.0 - mu) / n_samples as f64).sqrt(),
        n: n_samples,
        degenerate: source.is_degenerate(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dynamics {
    FirstOrder,
    Exact,
}

/// p_e source for a configuration with ψ(0) = |0⟩.
pub fn source_for(cfg: &SystemConfig, dynamics: Dynamics) -> Result<Box<dyn PeSource>> {
    Ok(match dynamics {
        Dynamics::FirstOrder => Box::new(FirstOrder::new(cfg)),
        Dynamics::Exact => Box::new(CentralAmplitude::for_config(cfg)?),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MuOptions {
    pub tau_burnin: f64,
    pub tau_window: f64,
    pub samples_per_config: usize,
    pub dynamics: Dynamics,
}

/// Per-δ ensemble averages of the long-time revival probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MuEnsemble {
    pub deltas: Vec<f64>,
    pub mu: Vec<f64>,
    /// Standard error across configurations.
    pub se: Vec<f64>,
    pub config_count: usize,
    pub degenerate_count: usize,
    /// All sampled deficits, config by config.
    pub deficits: Vec<f64>,
}

/// Ensemble μ(δ) for every δ in `deltas` from the same sampled times.
pub fn mu_ensemble(spec: &EnsembleSpec, deltas: &[f64], opts: &MuOptions, keep_deficits: bool) -> Result<MuEnsemble> {
    if spec.n_samples == 0 {
        return Err(Error::EmptyEnsemble);
    }
    let per: Vec<(Vec<f64>, bool, Vec<f64>)> = (0..spec.n_samples as u64)
        .into_par_iter()
        .map(|i| {
            let cfg = sample_config(spec, i)?;
            let src = source_for(&cfg, opts.dynamics)?;
            let d = sample_deficits(src.as_ref(), opts.tau_burnin, opts.tau_window, opts.samples_per_config, cfg.seed);
            let fr = deltas.iter().map(|&x| fraction_below(&d, x)).collect();
            Ok((fr, src.is_degenerate(), if keep_deficits { d } else { Vec::new() }))
        })
        .collect::<Result<_>>()?;
    let (mut mu, mut se) = (Vec::new(), Vec::new());
    for k in 0..deltas.len() {
        let col: Vec<f64> = per.iter().map(|p| p.0[k]).collect();
        let (m, s) = mean_se(&col);
        mu.push(m);
        se.push(s);
    }
    Ok(MuEnsemble {
        deltas: deltas.to_vec(),
        mu,
        se,
        config_count: per.len(),
        degenerate_count: per.iter().filter(|p| p.1).count(),
        deficits: per.into_iter().flat_map(|p| p.2).collect(),
    })
}

/// Pooled first-passage and revival statistics for one threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RevivalStats {
    pub delta: f64,
    /// Uncensored first-passage times, in configuration order.
    pub tau_delta_samples: Vec<f64>,
    pub censored: usize,
    /// Σ over configs of time at risk for the first passage (departure to revival or horizon).
    pub first_passage_exposure: f64,
    /// Σ over configs of band re-entries over the full horizon.
    pub events: usize,
    /// Σ over configs of time from departure to the horizon.
    pub observed_time: f64,
    pub mu_empirical: Option<f64>,
    pub mu_se: Option<f64>,
    pub delta_samples: Vec<f64>,
    pub config_count: usize,
}

impl RevivalStats {
    pub fn empty(delta: f64) -> Self {
        Self {
            delta,
            tau_delta_samples: Vec::new(),
            censored: 0,
            first_passage_exposure: 0.0,
            events: 0,
            observed_time: 0.0,
            mu_empirical: None,
            mu_se: None,
            delta_samples: Vec::new(),
            config_count: 0,
        }
    }

    /// Add one configuration's scan.
    pub fn push(&mut self, s: &ScanOutcome) {
        self.config_count += 1;
        self.events += s.events;
        self.observed_time += s.observed_time;
        match (s.first, s.departure) {
            (Passage::Revival { tau }, Some(dep)) => {
                self.tau_delta_samples.push(tau);
                self.first_passage_exposure += tau - dep;
            }
            (Passage::Censored { horizon }, dep) => {
                self.censored += 1;
                self.first_passage_exposure += dep.map_or(0.0, |d| horizon - d);
            }
            (Passage::Revival { .. }, None) => unreachable!("revival without departure"),
        }
    }

    /// Combine sample sets; counts and exposures add.
    pub fn merge(&mut self, other: &RevivalStats) {
        self.tau_delta_samples.extend_from_slice(&other.tau_delta_samples);
        self.censored += other.censored;
        self.first_passage_exposure += other.first_passage_exposure;
        self.events += other.events;
        self.observed_time += other.observed_time;
        self.delta_samples.extend_from_slice(&other.delta_samples);
        self.config_count += other.config_count;
    }

    /// Exponential-survival estimate from all band entries: total observed
    /// time / number of events, with its Poisson standard error.
    pub fn tau_p_renewal(&self) -> (f64, f64) {
        let e = self.events as f64;
        let t = self.observed_time / e;
        (t, t / e.sqrt())
    }

    /// Exponential-survival estimate from first passages only: first-passage
    /// exposure / number of uncensored first passages.
    pub fn tau_p_first_passage(&self) -> (f64, f64) {
        let e = self.tau_delta_samples.len() as f64;
        let t = self.first_passage_exposure / e;
        (t, t / e.sqrt())
    }

    /// Plain mean of the uncensored τ_δ.
    pub fn tau_delta_mean(&self) -> (f64, f64) {
        mean_se(&self.tau_delta_samples)
    }
}

/// Scan every configuration of the ensemble. Results are independent of the
/// worker count.
pub fn revival_ensemble(
    spec: &EnsembleSpec,
    delta: f64,
    opts: &PassageOptions,
    dynamics: Dynamics,
) -> Result<RevivalStats> {
    if spec.n_samples == 0 {
        return Err(Error::EmptyEnsemble);
    }
    let scans: Vec<ScanOutcome> = (0..spec.n_samples as u64)
        .into_par_iter()
        .map(|i| {
            let cfg = sample_config(spec, i)?;
            let src = source_for(&cfg, dynamics)?;
            scan_revivals(src.as_ref(), delta, opts)
        })
        .collect::<Result<_>>()?;
    let mut stats = RevivalStats::empty(delta);
    for s in &scans {
        stats.push(s);
    }
    Ok(stats)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Binning {
    Linear {
        lo: f64,
        hi: f64,
        bins: usize,
    },
    Log {
        lo: f64,
        hi: f64,
        bins: usize,
    },
    /// (0, max] linearly, or (min, max] logarithmically.
    Auto {
        bins: usize,
        log: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    /// count / (total · width); integrates to the fraction of samples inside the bins.
    pub density: Vec<f64>,
    pub total: usize,
}

impl Histogram {
    pub fn integral(&self) -> f64 {
        self.density.iter().zip(self.edges.windows(2)).map(|(d, e)| d * (e[1] - e[0])).sum()
    }

    pub fn centers(&self, log: bool) -> Vec<f64> {
        self.edges.windows(2).map(|e| if log { (e[0] * e[1]).sqrt() } else { 0.5 * (e[0] + e[1]) }).collect()
    }
}

/// Normalized density of the sampled deficits.
pub fn histogram_delta(samples: &[f64], binning: Binning) -> Result<Histogram> {
    if samples.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let max = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi, bins, log) = match binning {
        Binning::Linear { lo, hi, bins } => (lo, hi, bins, false),
        Binning::Log { lo, hi, bins } => (lo, hi, bins, true),
        Binning::Auto { bins, log: false } => (0.0, max, bins, false),
        Binning::Auto { bins, log: true } => {
            let min = samples.iter().copied().filter(|&x| x > 0.0).fold(f64::INFINITY, f64::min);
            (min * (1.0 - 1e-12), max, bins, true)
        }
    };
    if bins == 0 || !(hi > lo) || (log && !(lo > 0.0)) {
        return Err(invalid("binning needs bins > 0, hi > lo (and lo > 0 for log bins)"));
    }
    let edges: Vec<f64> = (0..=bins)
        .map(|i| {
            let f = i as f64 / bins as f64;
            if log {
                lo * (hi / lo).powf(f)
            } else {
                lo + (hi - lo) * f
            }
        })
        .collect();
    let mut counts = vec![0u64; bins];
    for &x in samples {
        if !(x > lo && x <= hi) {
            continue;
        }
        let f = if log { (x / lo).ln() / (hi / lo).ln() } else { (x - lo) / (hi - lo) };
        let mut b = ((f * bins as f64) as usize).min(bins - 1);
        while b > 0 && x <= edges[b] {
            b -= 1;
        }
        while b + 1 < bins && x > edges[b + 1] {
            b += 1;
        }
        counts[b] += 1;
    }
    let total = samples.len();
    let density =
        counts.iter().zip(edges.windows(2)).map(|(&c, e)| c as f64 / (total as f64 * (e[1] - e[0]))).collect();
    Ok(Histogram { edges, counts, density, total })
}

/// y ≈ prefactor·e^{slope·N}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpFit {
    pub prefactor: f64,
    pub slope: f64,
    pub r_squared: f64,
    pub n_values: Vec<f64>,
}

/// Least squares on (N, ln y). Input order does not affect the result.
pub fn fit_exponential(n_values: &[f64], y_values: &[f64]) -> Result<ExpFit> {
    if n_values.len() != y_values.len() || n_values.len() < 3 {
        return Err(invalid("need at least 3 (N, y) pairs"));
    }
    if y_values.iter().any(|&y| !(y > 0.0)) {
        return Err(invalid("exponential fit needs y > 0"));
    }
    let mut pairs: Vec<(f64, f64)> = n_values.iter().copied().zip(y_values.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let x: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let ly: Vec<f64> = pairs.iter().map(|p| p.1.ln()).collect();
    let f = linear_fit(&x, &ly);
    Ok(ExpFit { prefactor: f.intercept.exp(), slope: f.slope, r_squared: f.r_squared, n_values: x })
}
