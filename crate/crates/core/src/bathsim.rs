//! The qubit system embedded in a bath of M two-level systems, with T₁
//! calibration and population bookkeeping.

use std::f64::consts::PI;

use faer::Mat;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::arrowhead;
use crate::dynamics::{
    build_hamiltonian, evolve_exact, CentralAmplitude, PeSource, SpectralDecomposition, StateVector, Trace,
};
use crate::error::{invalid, Error, Result};
use crate::model::SystemConfig;
use crate::rng::{derive_rng, DOMAIN_BATH};

/// Fewer TLSs than this per golden-rule linewidth raises the band warning.
pub const MIN_TLS_PER_LINEWIDTH: f64 = 100.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BathConfig {
    pub m_tls: usize,
    /// (ω_j − Ω₀)/Ω₀.
    pub tls_detunings: Vec<f64>,
    /// γ₀n, length M.
    pub central_couplings: Vec<f64>,
    /// γ_pq, N rows of length M.
    pub env_couplings: Vec<Vec<f64>>,
    /// Seconds.
    pub target_t1: f64,
    /// Angular frequency Ω₀ in rad/s.
    pub omega0: f64,
    pub band_width: f64,
    /// Calibrated coupling magnitude γ.
    pub coupling_scale: f64,
    pub band_warning: bool,
    #[serde(default)]
    pub seed: u64,
}

impl BathConfig {
    /// No bath at all.
    pub fn empty(n_env: usize) -> Self {
        Self {
            m_tls: 0,
            tls_detunings: Vec::new(),
            central_couplings: Vec::new(),
            env_couplings: vec![Vec::new(); n_env],
            target_t1: f64::INFINITY,
            omega0: 1.0,
            band_width: 0.0,
            coupling_scale: 0.0,
            band_warning: false,
            seed: 0,
        }
    }

    pub fn validate(&self, n_env: usize) -> Result<()> {
        let m = self.m_tls;
        if self.tls_detunings.len() != m || self.central_couplings.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: self.tls_detunings.len().min(self.central_couplings.len()),
            });
        }
        if self.env_couplings.len() != n_env || self.env_couplings.iter().any(|r| r.len() != m) {
            return Err(invalid(format!("env_couplings must be {n_env} x {m}")));
        }
        let all = self.tls_detunings.iter().chain(&self.central_couplings).chain(self.env_couplings.iter().flatten());
        if all.into_iter().any(|v| !v.is_finite()) {
            return Err(invalid("bath entries must be finite"));
        }
        Ok(())
    }

    /// Every coupling multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut b = self.clone();
        b.central_couplings.iter_mut().for_each(|g| *g *= factor);
        b.env_couplings.iter_mut().flatten().for_each(|g| *g *= factor);
        b.coupling_scale *= factor;
        b
    }
}

/// Golden-rule calibration of the bath coupling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct T1Calibration {
    pub gamma: f64,
    /// Target decay rate 1/(T₁Ω₀) in units of Ω₀.
    pub rate: f64,
    /// TLS density of states ρ = M/band_width.
    pub density_of_states: f64,
    /// ρ·rate.
    pub tls_per_linewidth: f64,
    pub band_warning: bool,
}

/// γ with 2πγ²ρ = 1/(T₁Ω₀), ρ = M/band_width.
pub fn map_t1_to_couplings(t1: f64, omega0: f64, m_tls: usize, band_width: f64) -> Result<T1Calibration> {
    if !(t1 > 0.0 && omega0 > 0.0 && m_tls > 0 && band_width > 0.0) {
        return Err(invalid("T1, Omega0, M and band_width must be positive"));
    }
    let rate = 1.0 / (t1 * omega0);
    let rho = m_tls as f64 / band_width;
    let tls_per_linewidth = rho * rate;
    Ok(T1Calibration {
        gamma: (rate / (2.0 * PI * rho)).sqrt(),
        rate,
        density_of_states: rho,
        tls_per_linewidth,
        band_warning: tls_per_linewidth < MIN_TLS_PER_LINEWIDTH,
    })
}

/// Inputs for generating a calibrated bath.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BathSpec {
    pub m_tls: usize,
    pub band_width: f64,
    pub target_t1: f64,
    pub omega0: f64,
    pub seed: u64,
}

/// Ω₀ for a frequency given in GHz.
pub fn omega0_from_ghz(f_ghz: f64) -> f64 {
    2.0 * PI * f_ghz * 1e9
}

/// TLSs on a uniform grid over [−band/2, band/2] with ±5%-of-spacing jitter;
/// central couplings +γ, env couplings ±γ with seeded signs.
pub fn build_bath(spec: &BathSpec, n_env: usize) -> Result<BathConfig> {
    let cal = map_t1_to_couplings(spec.target_t1, spec.omega0, spec.m_tls, spec.band_width)?;
    let m = spec.m_tls;
    let spacing = spec.band_width / m as f64;
    let mut rng = derive_rng(spec.seed, DOMAIN_BATH, 0);
    let half = spec.band_width / 2.0;
    let tls_detunings = (0..m)
        .map(|j| {
            let x = -half + (j as f64 + 0.5) * spacing + 0.1 * spacing * (rng.random::<f64>() - 0.5);
            x.clamp(-half, half)
        })
        .collect();
    let mut sign_rng = derive_rng(spec.seed, DOMAIN_BATH, 1);
    let env_couplings = (0..n_env)
        .map(|_| (0..m).map(|_| if sign_rng.random::<bool>() { cal.gamma } else { -cal.gamma }).collect())
        .collect();
    Ok(BathConfig {
        m_tls: m,
        tls_detunings,
        central_couplings: vec![cal.gamma; m],
        env_couplings,
        target_t1: spec.target_t1,
        omega0: spec.omega0,
        band_width: spec.band_width,
        coupling_scale: cal.gamma,
        band_warning: cal.band_warning,
        seed: spec.seed,
    })
}

/// Hamiltonian of size 1+N+M in the basis (central, env qubits, TLSs). No TLS–TLS terms.
pub fn build_full_hamiltonian(sys: &SystemConfig, bath: &BathConfig) -> Result<Mat<f64>> {
    bath.validate(sys.n_env)?;
    let q = build_hamiltonian(sys)?;
    let n = sys.n_env;
    let dim = 1 + n + bath.m_tls;
    let mut h = Mat::<f64>::zeros(dim, dim);
    for i in 0..=n {
        for j in 0..=n {
            h[(i, j)] = q[(i, j)];
        }
    }
    for t in 0..bath.m_tls {
        let a = 1 + n + t;
        h[(a, a)] = 1.0 + bath.tls_detunings[t];
        h[(0, a)] = bath.central_couplings[t];
        h[(a, 0)] = bath.central_couplings[t];
        for p in 0..n {
            h[(1 + p, a)] = bath.env_couplings[p][t];
            h[(a, 1 + p)] = bath.env_couplings[p][t];
        }
    }
    Ok(h)
}

/// (p_e, Σ qubit populations, total population).
pub fn population_partition(state: &StateVector) -> (f64, f64, f64) {
    let q = state.qubit_pop();
    let b: f64 = state.bath_amps.iter().flatten().map(|a| a.norm_sqr()).sum::<f64>();
    (state.p_e(), q, q + b)
}

/// Central qubit alone in the bath (env qubits removed), solved as an arrowhead.
pub fn lone_qubit_source(bath: &BathConfig) -> Result<CentralAmplitude> {
    let eig = arrowhead::solve(0.0, &bath.tls_detunings, &bath.central_couplings)?;
    CentralAmplitude::from_arrowhead(&eig, &StateVector::excited(bath.m_tls, None))
}

/// Off-diagonal couplings of the full Hamiltonian.
struct Couplings {
    n: usize,
    m: usize,
    /// Central row, length N+M.
    central: Vec<f64>,
    env_env: Option<Vec<Vec<f64>>>,
    env_tls: Vec<Vec<f64>>,
    energies: Vec<f64>,
}

impl Couplings {
    fn new(sys: &SystemConfig, bath: &BathConfig) -> Self {
        let mut central = sys.couplings.clone();
        central.extend_from_slice(&bath.central_couplings);
        let mut energies = vec![0.0];
        energies.extend_from_slice(&sys.detunings);
        energies.extend_from_slice(&bath.tls_detunings);
        Self {
            n: sys.n_env,
            m: bath.m_tls,
            central,
            env_env: sys.env_couplings.clone().filter(|_| !sys.is_star()),
            env_tls: bath.env_couplings.clone(),
            energies,
        }
    }

    /// ċ_a = −i e^{iE_aτ} Σ_b V_ab e^{−iE_bτ} c_b.
    fn rhs(&self, tau: f64, c: &[Complex64], y: &mut [Complex64], out: &mut [Complex64]) {
        let (n, m) = (self.n, self.m);
        for (b, (yb, cb)) in y.iter_mut().zip(c).enumerate() {
            *yb = cb * Complex64::from_polar(1.0, -self.energies[b] * tau);
        }
        let mut s0 = Complex64::default();
        for (v, yb) in self.central.iter().zip(&y[1..]) {
            s0 += yb * v;
        }
        out[0] = s0;
        for p in 0..n {
            let mut s = y[0] * self.central[p];
            if let Some(t) = &self.env_env {
                for q in 0..n {
                    s += y[1 + q] * t[p][q];
                }
            }
            for (v, yt) in self.env_tls[p].iter().zip(&y[1 + n..]) {
                s += yt * v;
            }
            out[1 + p] = s;
        }
        for t in 0..m {
            let a = 1 + n + t;
            let mut s = y[0] * self.central[n + t];
            for p in 0..n {
                s += y[1 + p] * self.env_tls[p][t];
            }
            out[a] = s;
        }
        for (a, o) in out.iter_mut().enumerate() {
            *o = Complex64::new(0.0, -1.0) * Complex64::from_polar(1.0, self.energies[a] * tau) * *o;
        }
    }
}

fn rk4_run(cp: &Couplings, c0: &[Complex64], times: &[f64], h: f64) -> Vec<Vec<Complex64>> {
    let dim = c0.len();
    let mut c = c0.to_vec();
    let mut tau = 0.0;
    let (mut k1, mut k2, mut k3, mut k4) = (
        vec![Complex64::default(); dim],
        vec![Complex64::default(); dim],
        vec![Complex64::default(); dim],
        vec![Complex64::default(); dim],
    );
    let mut y = vec![Complex64::default(); dim];
    let mut tmp = vec![Complex64::default(); dim];
    let mut out = Vec::with_capacity(times.len());
    for &target in times {
        let steps = ((target - tau) / h).ceil().max(0.0) as usize;
        if steps > 0 {
            let hs = (target - tau) / steps as f64;
            for _ in 0..steps {
                cp.rhs(tau, &c, &mut y, &mut k1);
                for i in 0..dim {
                    tmp[i] = c[i] + k1[i] * (0.5 * hs);
                }
                cp.rhs(tau + 0.5 * hs, &tmp, &mut y, &mut k2);
                for i in 0..dim {
                    tmp[i] = c[i] + k2[i] * (0.5 * hs);
                }
                cp.rhs(tau + 0.5 * hs, &tmp, &mut y, &mut k3);
                for i in 0..dim {
                    tmp[i] = c[i] + k3[i] * hs;
                }
                cp.rhs(tau + hs, &tmp, &mut y, &mut k4);
                for i in 0..dim {
                    c[i] += (k1[i] + k2[i] * 2.0 + k3[i] * 2.0 + k4[i]) * (hs / 6.0);
                }
                tau += hs;
            }
            tau = target;
        }
        out.push(c.clone());
    }
    out
}

/// Tolerance of the step-halving acceptance check on p_e.
pub const STEP_HALVING_TOL: f64 = 1e-8;

/// Fixed-step RK4 on the interaction-picture amplitude equations, accepted
/// only if halving the step changes p_e by less than [`STEP_HALVING_TOL`].
/// `psi0` is the state at τ = 0; `times` must be nondecreasing and ≥ 0.
pub fn evolve_interaction_picture(
    sys: &SystemConfig,
    bath: &BathConfig,
    psi0: &StateVector,
    times: &[f64],
    step: f64,
) -> Result<Trace> {
    sys.validate()?;
    bath.validate(sys.n_env)?;
    if psi0.n_env() != sys.n_env || psi0.m_tls() != bath.m_tls {
        return Err(Error::DimensionMismatch { expected: 1 + sys.n_env + bath.m_tls, got: psi0.dim() });
    }
    if !(step > 0.0) || times.first().is_some_and(|&t| t < 0.0) || times.windows(2).any(|w| w[1] < w[0]) {
        return Err(invalid("need step > 0 and nondecreasing times >= 0"));
    }
    let cp = Couplings::new(sys, bath);
    let c0 = psi0.to_amplitudes();
    let coarse = rk4_run(&cp, &c0, times, step);
    let fine = rk4_run(&cp, &c0, times, step / 2.0);
    let (mut worst, mut at) = (0.0f64, 0.0);
    for ((a, b), &t) in coarse.iter().zip(&fine).zip(times) {
        let d = (a[0].norm_sqr() - b[0].norm_sqr()).abs();
        if d > worst {
            worst = d;
            at = t;
        }
    }
    if !(worst < STEP_HALVING_TOL) {
        return Err(Error::StepRefinement { step, max_diff: worst, tau: at });
    }
    let nq = 1 + sys.n_env;
    let mut p_e = Vec::with_capacity(times.len());
    let mut qubit = Vec::with_capacity(times.len());
    let mut total = Vec::with_capacity(times.len());
    for c in &fine {
        let q: f64 = c[..nq].iter().map(|a| a.norm_sqr()).sum();
        let b: f64 = c[nq..].iter().map(|a| a.norm_sqr()).sum();
        p_e.push(c[0].norm_sqr());
        qubit.push(q);
        total.push(q + b);
    }
    Ok(Trace { times: times.to_vec(), p_e, qubit_pop: Some(qubit), total_pop: Some(total) })
}

/// Largest 1+N+M handled by dense diagonalization in [`evolve_bath`].
pub const SPECTRAL_MAX_DIM: usize = 12_000;

/// With-bath trace (qubit and total populations included) and the bath-free
/// p_e on the same grid, for ψ(0) = |0⟩. Uses the spectral path up to
/// [`SPECTRAL_MAX_DIM`], the interaction picture with `ip_step` beyond.
pub fn evolve_bath(sys: &SystemConfig, bath: &BathConfig, times: &[f64], ip_step: f64) -> Result<(Trace, Vec<f64>)> {
    let psi0 = StateVector::excited(sys.n_env, Some(bath.m_tls));
    let dim = psi0.dim();
    let with = if dim <= SPECTRAL_MAX_DIM {
        let h = build_full_hamiltonian(sys, bath)?;
        let d = SpectralDecomposition::new(&h, sys.n_env, bath.m_tls)?;
        drop(h);
        evolve_exact(&d, &psi0, times)?
    } else {
        evolve_interaction_picture(sys, bath, &psi0, times, ip_step)?
    };
    let free = CentralAmplitude::for_config(sys)?;
    let without = times.iter().map(|&t| free.p_e_at(t)).collect();
    Ok((with, without))
}
