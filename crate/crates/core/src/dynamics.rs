//! Single-excitation Hamiltonian, exact and first-order time evolution.

use std::io::Write;

use faer::{Mat, Side};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arrowhead::{self, ArrowheadEigen};
use crate::error::{invalid, Error, Result};
use crate::model::SystemConfig;

/// Amplitudes (C₀, C₁..C_N, D₁..D_M) in the single-excitation basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateVector {
    pub amp0: Complex64,
    pub env_amps: Vec<Complex64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bath_amps: Option<Vec<Complex64>>,
}

impl StateVector {
    /// Central qubit excited, everything else empty.
    pub fn excited(n_env: usize, m_tls: Option<usize>) -> Self {
        Self {
            amp0: Complex64::new(1.0, 0.0),
            env_amps: vec![Complex64::default(); n_env],
            bath_amps: m_tls.map(|m| vec![Complex64::default(); m]),
        }
    }

    /// Split a flat amplitude vector ordered (central, env, bath).
    pub fn from_amplitudes(n_env: usize, amps: &[Complex64]) -> Result<Self> {
        if amps.len() < n_env + 1 {
            return Err(Error::DimensionMismatch { expected: n_env + 1, got: amps.len() });
        }
        let bath = &amps[n_env + 1..];
        Ok(Self {
            amp0: amps[0],
            env_amps: amps[1..=n_env].to_vec(),
            bath_amps: (!bath.is_empty()).then(|| bath.to_vec()),
        })
    }

    pub fn to_amplitudes(&self) -> Vec<Complex64> {
        let mut v = Vec::with_capacity(self.dim());
        v.push(self.amp0);
        v.extend_from_slice(&self.env_amps);
        if let Some(b) = &self.bath_amps {
            v.extend_from_slice(b);
        }
        v
    }

    pub fn n_env(&self) -> usize {
        self.env_amps.len()
    }

    pub fn m_tls(&self) -> usize {
        self.bath_amps.as_ref().map_or(0, Vec::len)
    }

    pub fn dim(&self) -> usize {
        1 + self.n_env() + self.m_tls()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.to_amplitudes().iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn p_e(&self) -> f64 {
        self.amp0.norm_sqr()
    }

    /// |C₀|² + Σ|C_i|².
    pub fn qubit_pop(&self) -> f64 {
        self.amp0.norm_sqr() + self.env_amps.iter().map(|a| a.norm_sqr()).sum::<f64>()
    }
}

/// Time grid with the observables sampled on it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub times: Vec<f64>,
    pub p_e: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qubit_pop: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total_pop: Option<Vec<f64>>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.times.len();
        let lens_ok = self.p_e.len() == n
            && self.qubit_pop.as_ref().is_none_or(|v| v.len() == n)
            && self.total_pop.as_ref().is_none_or(|v| v.len() == n);
        if !lens_ok {
            return Err(invalid("trace columns have unequal lengths"));
        }
        if self.times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("trace times must be strictly increasing"));
        }
        if self.p_e.iter().any(|&p| !(-1e-12..=1.0 + 1e-12).contains(&p)) {
            return Err(invalid("p_e outside [0, 1]"));
        }
        Ok(())
    }

    /// CSV with header `tau,p_e[,qubit_pop][,total_pop]`, 17 significant digits.
    /// `metadata` is written first as a `#` comment line.
    pub fn write_csv<W: Write>(&self, mut w: W, metadata: Option<&str>) -> Result<()> {
        if let Some(m) = metadata {
            writeln!(w, "# {m}")?;
        }
        let mut header = String::from("tau,p_e");
        if self.qubit_pop.is_some() {
            header.push_str(",qubit_pop");
        }
        if self.total_pop.is_some() {
            header.push_str(",total_pop");
        }
        writeln!(w, "{header}")?;
        for i in 0..self.len() {
            write!(w, "{:.16e},{:.16e}", self.times[i], self.p_e[i])?;
            if let Some(q) = &self.qubit_pop {
                write!(w, ",{:.16e}", q[i])?;
            }
            if let Some(t) = &self.total_pop {
                write!(w, ",{:.16e}", t[i])?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// H = VΛVᵀ for a real symmetric single-excitation Hamiltonian.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    pub eigenvalues: Vec<f64>,
    /// Columns are orthonormal eigenvectors.
    pub eigenvectors: Mat<f64>,
    pub basis_dim: usize,
    pub n_env: usize,
    pub m_tls: usize,
}

impl SpectralDecomposition {
    /// Decompose `h`, whose basis is ordered (central, N env qubits, M TLSs).
    pub fn new(h: &Mat<f64>, n_env: usize, m_tls: usize) -> Result<Self> {
        let dim = h.nrows();
        if h.ncols() != dim || dim != 1 + n_env + m_tls {
            return Err(Error::DimensionMismatch { expected: 1 + n_env + m_tls, got: dim });
        }
        let evd = h.self_adjoint_eigen(Side::Lower).map_err(|e| Error::Eigen(format!("{e:?}")))?;
        let s = evd.S().column_vector();
        Ok(Self {
            eigenvalues: (0..dim).map(|i| s[i]).collect(),
            eigenvectors: evd.U().to_owned(),
            basis_dim: dim,
            n_env,
            m_tls,
        })
    }

    pub fn from_config(cfg: &SystemConfig) -> Result<Self> {
        Self::new(&build_hamiltonian(cfg)?, cfg.n_env, 0)
    }

    fn check_state(&self, psi: &StateVector) -> Result<()> {
        if psi.n_env() != self.n_env || psi.m_tls() != self.m_tls {
            return Err(Error::DimensionMismatch { expected: self.basis_dim, got: psi.dim() });
        }
        Ok(())
    }

    /// Coefficients c = Vᵀψ in the eigenbasis.
    fn coefficients(&self, psi: &StateVector) -> Vec<Complex64> {
        let amps = psi.to_amplitudes();
        let v = &self.eigenvectors;
        (0..self.basis_dim).into_par_iter().map(|m| (0..self.basis_dim).map(|a| amps[a] * v[(a, m)]).sum()).collect()
    }
}

/// Hamiltonian in the basis (|0⟩, |1⟩..|N⟩): diag(1, 1+η_j), border 𝒢_j,
/// interior env-env couplings.
pub fn build_hamiltonian(cfg: &SystemConfig) -> Result<Mat<f64>> {
    cfg.validate()?;
    let n = cfg.n_env;
    let mut h = Mat::<f64>::zeros(n + 1, n + 1);
    h[(0, 0)] = 1.0;
    for j in 0..n {
        h[(j + 1, j + 1)] = 1.0 + cfg.detunings[j];
        h[(0, j + 1)] = cfg.couplings[j];
        h[(j + 1, 0)] = cfg.couplings[j];
    }
    if let Some(t) = &cfg.env_couplings {
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    h[(i + 1, j + 1)] = t[i][j];
                }
            }
        }
    }
    Ok(h)
}

const TIME_CHUNK: usize = 64;

/// Amplitudes ψ(τ) = V e^{−iΛτ} Vᵀ ψ(0) for a batch of times, as (re, im) columns.
fn propagate(decomp: &SpectralDecomposition, c: &[Complex64], times: &[f64]) -> (Mat<f64>, Mat<f64>) {
    let dim = decomp.basis_dim;
    let k = times.len();
    let mut a_re = Mat::<f64>::zeros(dim, k);
    let mut a_im = Mat::<f64>::zeros(dim, k);
    for (col, &tau) in times.iter().enumerate() {
        for m in 0..dim {
            // Global phase e^{−iτ} dropped by shifting the spectrum.
            let ph = Complex64::from_polar(1.0, -(decomp.eigenvalues[m] - 1.0) * tau);
            let v = c[m] * ph;
            a_re[(m, col)] = v.re;
            a_im[(m, col)] = v.im;
        }
    }
    (&decomp.eigenvectors * &a_re, &decomp.eigenvectors * &a_im)
}

/// ψ(τ) from ψ(0) through the spectral decomposition (up to the global phase e^{−iτ}).
pub fn state_at(decomp: &SpectralDecomposition, psi0: &StateVector, tau: f64) -> Result<StateVector> {
    decomp.check_state(psi0)?;
    let c = decomp.coefficients(psi0);
    let (re, im) = propagate(decomp, &c, &[tau]);
    let amps: Vec<Complex64> = (0..decomp.basis_dim).map(|a| Complex64::new(re[(a, 0)], im[(a, 0)])).collect();
    StateVector::from_amplitudes(decomp.n_env, &amps).map(|mut s| {
        if decomp.m_tls > 0 && s.bath_amps.is_none() {
            s.bath_amps = Some(Vec::new());
        }
        s
    })
}

/// Exact evolution through the spectral decomposition; carries p_e and the
/// qubit and total populations.
pub fn evolve_exact(decomp: &SpectralDecomposition, psi0: &StateVector, times: &[f64]) -> Result<Trace> {
    decomp.check_state(psi0)?;
    let c = decomp.coefficients(psi0);
    let nq = 1 + decomp.n_env;
    let mut p_e = Vec::with_capacity(times.len());
    let mut qubit = Vec::with_capacity(times.len());
    let mut total = Vec::with_capacity(times.len());
    for chunk in times.chunks(TIME_CHUNK) {
        let (re, im) = propagate(decomp, &c, chunk);
        for col in 0..chunk.len() {
            let pop = |a: usize| re[(a, col)].powi(2) + im[(a, col)].powi(2);
            let q: f64 = (0..nq).map(pop).sum();
            let b: f64 = (nq..decomp.basis_dim).map(pop).sum();
            p_e.push(pop(0));
            qubit.push(q);
            total.push(q + b);
        }
    }
    Ok(Trace { times: times.to_vec(), p_e, qubit_pop: Some(qubit), total_pop: Some(total) })
}

/// A p_e(τ) evaluator that can be scanned over long horizons in windows.
pub trait PeSource: Sync {
    fn p_e_at(&self, tau: f64) -> f64;

    /// out[k] = p_e(start + k·step).
    fn fill_window(&self, start: f64, step: f64, out: &mut [f64]) {
        for (k, o) in out.iter_mut().enumerate() {
            *o = self.p_e_at(start + k as f64 * step);
        }
    }

    /// Phases never randomize (all detunings zero).
    fn is_degenerate(&self) -> bool {
        false
    }
}

impl<F: Fn(f64) -> f64 + Sync> PeSource for F {
    fn p_e_at(&self, tau: f64) -> f64 {
        self(tau)
    }
}

const RESYNC: usize = 1024;

/// C₀(τ) = Σ_m a_m e^{−iω_m τ}.
#[derive(Debug, Clone)]
pub struct CentralAmplitude {
    pub freqs: Vec<f64>,
    pub coeffs: Vec<Complex64>,
    pub degenerate: bool,
}

impl CentralAmplitude {
    pub fn from_spectral(decomp: &SpectralDecomposition, psi0: &StateVector) -> Result<Self> {
        decomp.check_state(psi0)?;
        let c = decomp.coefficients(psi0);
        Ok(Self {
            freqs: decomp.eigenvalues.iter().map(|e| e - 1.0).collect(),
            coeffs: c.iter().enumerate().map(|(m, cm)| cm * decomp.eigenvectors[(0, m)]).collect(),
            degenerate: false,
        })
    }

    /// Star configuration solved with frequencies measured from 1.
    pub fn from_arrowhead(eig: &ArrowheadEigen, psi0: &StateVector) -> Result<Self> {
        if psi0.dim() != eig.dim() {
            return Err(Error::DimensionMismatch { expected: eig.dim(), got: psi0.dim() });
        }
        let w = eig.central_weights();
        let coeffs: Vec<Complex64> = if psi0.env_amps.iter().all(|a| *a == Complex64::default()) {
            w.iter().map(|&wm| psi0.amp0 * wm).collect()
        } else {
            let proj = eig.project_roots(&psi0.to_amplitudes());
            proj.iter().zip(w).map(|(p, wm)| p * wm.sqrt()).collect()
        };
        Ok(Self { freqs: eig.root_values(), coeffs, degenerate: false })
    }

    /// Central-qubit amplitude for ψ(0) = |0⟩ via the arrowhead solver (star)
    /// or a dense decomposition (otherwise).
    pub fn for_config(cfg: &SystemConfig) -> Result<Self> {
        let psi0 = StateVector::excited(cfg.n_env, None);
        let mut s = if cfg.is_star() {
            Self::from_arrowhead(&solve_star(cfg)?, &psi0)?
        } else {
            Self::from_spectral(&SpectralDecomposition::from_config(cfg)?, &psi0)?
        };
        s.degenerate = cfg.is_degenerate();
        Ok(s)
    }

    pub fn amplitude(&self, tau: f64) -> Complex64 {
        self.freqs.iter().zip(&self.coeffs).map(|(&w, c)| c * Complex64::from_polar(1.0, -w * tau)).sum()
    }
}

impl PeSource for CentralAmplitude {
    fn p_e_at(&self, tau: f64) -> f64 {
        self.amplitude(tau).norm_sqr()
    }

    fn fill_window(&self, start: f64, step: f64, out: &mut [f64]) {
        let mut acc = vec![Complex64::default(); RESYNC.min(out.len())];
        for (b, block) in out.chunks_mut(RESYNC).enumerate() {
            let t0 = start + (b * RESYNC) as f64 * step;
            let acc = &mut acc[..block.len()];
            acc.iter_mut().for_each(|a| *a = Complex64::default());
            for (&w, c) in self.freqs.iter().zip(&self.coeffs) {
                let mut z = c * Complex64::from_polar(1.0, -w * t0);
                let r = Complex64::from_polar(1.0, -w * step);
                for a in acc.iter_mut() {
                    *a += z;
                    z *= r;
                }
            }
            for (o, a) in block.iter_mut().zip(acc.iter()) {
                *o = a.norm_sqr();
            }
        }
    }

    fn is_degenerate(&self) -> bool {
        self.degenerate
    }
}

/// Arrowhead eigensystem of a star configuration, spectrum measured from 1.
pub fn solve_star(cfg: &SystemConfig) -> Result<ArrowheadEigen> {
    cfg.validate()?;
    if !cfg.is_star() {
        return Err(Error::NotStar);
    }
    arrowhead::solve(0.0, &cfg.detunings, &cfg.couplings)
}

/// Exact evolution of a star configuration through the arrowhead secular
/// equation. Only p_e is reported.
pub fn evolve_arrowhead(cfg: &SystemConfig, psi0: &StateVector, times: &[f64]) -> Result<Trace> {
    if psi0.m_tls() != 0 || psi0.n_env() != cfg.n_env {
        return Err(Error::DimensionMismatch { expected: cfg.n_env + 1, got: psi0.dim() });
    }
    let src = CentralAmplitude::from_arrowhead(&solve_star(cfg)?, psi0)?;
    let p_e = times.par_iter().map(|&t| src.p_e_at(t)).collect();
    Ok(Trace { times: times.to_vec(), p_e, qubit_pop: None, total_pop: None })
}

const RESONANT_ETA: f64 = 1e-12;

/// First-order p_e = 1 − Σ_j 4𝒢_j² sin²(η_jτ/2)/η_j².
#[derive(Debug, Clone)]
pub struct FirstOrder {
    half_etas: Vec<f64>,
    amps: Vec<f64>,
    /// Σ𝒢² over resonant terms, which contribute 𝒢²τ².
    resonant_g2: f64,
    degenerate: bool,
}

impl FirstOrder {
    pub fn new(cfg: &SystemConfig) -> Self {
        let mut half_etas = Vec::new();
        let mut amps = Vec::new();
        let mut resonant_g2 = 0.0;
        for (&eta, &g) in cfg.detunings.iter().zip(&cfg.couplings) {
            if eta.abs() < RESONANT_ETA {
                resonant_g2 += g * g;
            } else {
                half_etas.push(eta / 2.0);
                amps.push(4.0 * g * g / (eta * eta));
            }
        }
        Self { half_etas, amps, resonant_g2, degenerate: cfg.is_degenerate() }
    }

    /// Termwise contributions Δ_j(τ) ≥ 0 (non-resonant terms first).
    pub fn deficits(&self, tau: f64) -> Vec<f64> {
        self.half_etas.iter().zip(&self.amps).map(|(h, a)| a * (h * tau).sin().powi(2)).collect()
    }

    /// Δ(τ) = Σ_j Δ_j(τ) = 1 − p_e.
    pub fn deficit(&self, tau: f64) -> f64 {
        self.deficits(tau).iter().sum::<f64>() + self.resonant_g2 * tau * tau
    }
}

impl PeSource for FirstOrder {
    fn p_e_at(&self, tau: f64) -> f64 {
        1.0 - self.deficit(tau)
    }

    fn fill_window(&self, start: f64, step: f64, out: &mut [f64]) {
        let mut acc = vec![0.0; RESYNC.min(out.len())];
        for (b, block) in out.chunks_mut(RESYNC).enumerate() {
            let k0 = b * RESYNC;
            let t0 = start + k0 as f64 * step;
            let acc = &mut acc[..block.len()];
            acc.iter_mut().for_each(|a| *a = 0.0);
            for (&h, &a) in self.half_etas.iter().zip(&self.amps) {
                let mut z = Complex64::from_polar(1.0, h * t0);
                let r = Complex64::from_polar(1.0, h * step);
                for v in acc.iter_mut() {
                    *v += a * z.im * z.im;
                    z *= r;
                }
            }
            for (k, (o, d)) in block.iter_mut().zip(acc.iter()).enumerate() {
                let t = start + (k0 + k) as f64 * step;
                *o = 1.0 - (d + self.resonant_g2 * t * t);
            }
        }
    }

    fn is_degenerate(&self) -> bool {
        self.degenerate
    }
}

/// First-order trace; ignores env-env couplings.
pub fn first_order_trace(cfg: &SystemConfig, times: &[f64]) -> Trace {
    let src = FirstOrder::new(cfg);
    Trace {
        times: times.to_vec(),
        p_e: times.iter().map(|&t| src.p_e_at(t)).collect(),
        qubit_pop: None,
        total_pop: None,
    }
}

/// d = sqrt(2(1−|C₀|²)/(1+|C₀|)) for an initial state |0⟩.
pub fn distance_from_initial(psi: &StateVector) -> f64 {
    let c = psi.amp0.norm().min(1.0);
    (2.0 * (1.0 - c * c) / (1.0 + c)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{sample_config, EnsembleSpec};
    use proptest::prelude::*;

    fn grid(n: usize, step: f64) -> Vec<f64> {
        (0..n).map(|k| k as f64 * step).collect()
    }

    #[test]
    fn hamiltonian_shapes() {
        let h = build_hamiltonian(&SystemConfig::resonant(0, 0.1)).unwrap();
        assert_eq!((h.nrows(), h[(0, 0)]), (1, 1.0));
        let h = build_hamiltonian(&SystemConfig::resonant(1, 0.001)).unwrap();
        assert_eq!([h[(0, 0)], h[(0, 1)], h[(1, 0)], h[(1, 1)]], [1.0, 0.001, 0.001, 1.0]);
        let cfg = SystemConfig::star(vec![0.01, -0.02], vec![0.001, 0.002]).unwrap();
        let h = build_hamiltonian(&cfg).unwrap();
        assert_eq!(h[(1, 2)], 0.0);
        assert_eq!(h[(2, 2)], 1.0 - 0.02);
    }

    #[test]
    fn resonant_rabi_exact() {
        let g = 0.001;
        let cfg = SystemConfig::resonant(1, g);
        let d = SpectralDecomposition::from_config(&cfg).unwrap();
        let times = grid(2000, 3.7);
        let tr = evolve_exact(&d, &StateVector::excited(1, None), &times).unwrap();
        for (t, p) in tr.times.iter().zip(&tr.p_e) {
            assert!((p - (g * t).cos().powi(2)).abs() < 1e-9);
        }
        let tr = evolve_arrowhead(&cfg, &StateVector::excited(1, None), &times).unwrap();
        for (t, p) in tr.times.iter().zip(&tr.p_e) {
            assert!((p - (g * t).cos().powi(2)).abs() < 1e-9);
        }
    }

    #[test]
    fn initial_condition_and_norm() {
        let spec = EnsembleSpec::uniform(30, 0.1, 0.01, 1, 4);
        let cfg = sample_config(&spec, 0).unwrap();
        let d = SpectralDecomposition::from_config(&cfg).unwrap();
        let tr = evolve_exact(&d, &StateVector::excited(30, None), &grid(300, 17.0)).unwrap();
        assert!((tr.p_e[0] - 1.0).abs() < 1e-12);
        for t in tr.total_pop.as_ref().unwrap() {
            assert!((t - 1.0).abs() < 1e-10);
        }
        tr.validate().unwrap();
    }

    #[test]
    fn forward_backward_recovers_state() {
        let spec = EnsembleSpec::fixed(12, 0.1, 0.003, 1, 8);
        let mut cfg = sample_config(&spec, 0).unwrap();
        let mut t = vec![vec![0.0; 12]; 12];
        t[2][5] = 0.001;
        t[5][2] = 0.001;
        cfg.env_couplings = Some(t);
        let d = SpectralDecomposition::from_config(&cfg).unwrap();
        let amps: Vec<Complex64> = (0..13).map(|i| Complex64::new(1.0 + i as f64, 0.5 * i as f64)).collect();
        let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        let psi0 = StateVector::from_amplitudes(12, &amps.iter().map(|a| a / norm).collect::<Vec<_>>()).unwrap();
        let fwd = state_at(&d, &psi0, 4321.0).unwrap();
        let back = state_at(&d, &fwd, -4321.0).unwrap();
        for (a, b) in back.to_amplitudes().iter().zip(psi0.to_amplitudes()) {
            assert!((a - b).norm() < 1e-9);
        }
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let d = SpectralDecomposition::from_config(&SystemConfig::resonant(2, 0.1)).unwrap();
        assert!(evolve_exact(&d, &StateVector::excited(3, None), &[0.0]).is_err());
        let mut cfg = SystemConfig::resonant(2, 0.1);
        cfg.env_couplings = Some(vec![vec![0.0, 0.1], vec![0.1, 0.0]]);
        assert!(matches!(evolve_arrowhead(&cfg, &StateVector::excited(2, None), &[0.0]), Err(Error::NotStar)));
    }

    #[test]
    fn arrowhead_matches_dense_n200() {
        let spec = EnsembleSpec::uniform(200, 0.1, 0.01, 1, 21);
        let cfg = sample_config(&spec, 0).unwrap();
        let psi0 = StateVector::excited(200, None);
        let times = grid(1000, 7.3);
        let a = evolve_arrowhead(&cfg, &psi0, &times).unwrap();
        let d = evolve_exact(&SpectralDecomposition::from_config(&cfg).unwrap(), &psi0, &times).unwrap();
        let dev = a.p_e.iter().zip(&d.p_e).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(dev < 1e-9, "{dev}");
    }

    #[test]
    fn arrowhead_general_initial_state() {
        let cfg = SystemConfig::star(vec![0.01, -0.02, 0.01, 0.0], vec![0.003, 0.002, 0.001, 0.004]).unwrap();
        let amps: Vec<Complex64> =
            [0.5, 0.1, -0.3, 0.2, 0.4].iter().enumerate().map(|(i, &r)| Complex64::new(r, 0.1 * i as f64)).collect();
        let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        let psi0 = StateVector::from_amplitudes(4, &amps.iter().map(|a| a / norm).collect::<Vec<_>>()).unwrap();
        let times = grid(400, 11.0);
        let a = evolve_arrowhead(&cfg, &psi0, &times).unwrap();
        let d = evolve_exact(&SpectralDecomposition::from_config(&cfg).unwrap(), &psi0, &times).unwrap();
        for (x, y) in a.p_e.iter().zip(&d.p_e) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn window_fill_matches_pointwise() {
        let spec = EnsembleSpec::fixed(5, 0.1, 0.001, 1, 2);
        let cfg = sample_config(&spec, 0).unwrap();
        let ca = CentralAmplitude::for_config(&cfg).unwrap();
        let fo = FirstOrder::new(&cfg);
        let mut w1 = vec![0.0; 5000];
        let mut w2 = vec![0.0; 5000];
        ca.fill_window(1.0e6, 0.7, &mut w1);
        fo.fill_window(1.0e6, 0.7, &mut w2);
        for k in (0..5000).step_by(37) {
            let t = 1.0e6 + k as f64 * 0.7;
            assert!((w1[k] - ca.p_e_at(t)).abs() < 1e-11);
            assert!((w2[k] - fo.p_e_at(t)).abs() < 1e-11);
        }
    }

    #[test]
    fn first_order_closed_forms() {
        let g = 0.001;
        let tr = first_order_trace(&SystemConfig::resonant(1, g), &grid(50, 13.0));
        for (t, p) in tr.times.iter().zip(&tr.p_e) {
            assert!((p - (1.0 - g * g * t * t)).abs() < 1e-15);
        }
        // Commensurate detunings: every term vanishes at τ = 2π/η₀.
        let eta0 = 0.01;
        let cfg = SystemConfig::star(vec![eta0, 2.0 * eta0, -3.0 * eta0], vec![0.001; 3]).unwrap();
        let t = 2.0 * std::f64::consts::PI / eta0;
        assert!((FirstOrder::new(&cfg).p_e_at(t) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn first_order_close_to_exact_for_weak_coupling() {
        let spec = EnsembleSpec::fixed(5, 0.1, 1e-4, 1, 3);
        let cfg = sample_config(&spec, 0).unwrap();
        let times = grid(5001, 1.0);
        let fo = first_order_trace(&cfg, &times);
        let ex = evolve_arrowhead(&cfg, &StateVector::excited(5, None), &times).unwrap();
        let dev = fo.p_e.iter().zip(&ex.p_e).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(dev < 1e-3, "{dev}");
    }

    #[test]
    fn perturbative_ratio_converges() {
        let spec = EnsembleSpec::fixed(4, 0.1, 1.0, 1, 13);
        let base = sample_config(&spec, 0).unwrap();
        let times = [500.0, 1500.0, 3000.0];
        let devs: Vec<f64> = [1e-3, 1e-4, 1e-5]
            .iter()
            .map(|&g| {
                let mut cfg = base.clone();
                cfg.couplings = vec![g; 4];
                let ex = evolve_arrowhead(&cfg, &StateVector::excited(4, None), &times).unwrap();
                let fo = first_order_trace(&cfg, &times);
                ex.p_e.iter().zip(&fo.p_e).map(|(e, f)| ((1.0 - e) / (1.0 - f) - 1.0).abs()).fold(0.0, f64::max)
            })
            .collect();
        assert!(devs[1] < devs[0] && devs[2] < devs[1], "{devs:?}");
    }

    #[test]
    fn distance_values() {
        let mut s = StateVector::excited(1, None);
        assert_eq!(distance_from_initial(&s), 0.0);
        s.amp0 = Complex64::default();
        s.env_amps[0] = Complex64::new(1.0, 0.0);
        assert!((distance_from_initial(&s) - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn csv_layout() {
        let tr = Trace {
            times: vec![0.0, 0.5],
            p_e: vec![1.0, 0.9],
            qubit_pop: Some(vec![1.0, 1.0]),
            total_pop: Some(vec![1.0, 1.0]),
        };
        let mut buf = Vec::new();
        tr.write_csv(&mut buf, Some("meta")).unwrap();
        let s = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines[0], "# meta");
        assert_eq!(lines[1], "tau,p_e,qubit_pop,total_pop");
        assert_eq!(lines[3].split(',').next().unwrap().parse::<f64>().unwrap(), 0.5);
        let field = lines[3].split(',').nth(1).unwrap();
        assert_eq!(field.parse::<f64>().unwrap().to_bits(), 0.9f64.to_bits());
        assert_eq!(field.split('e').next().unwrap().replace('.', "").len(), 17);
    }

    proptest! {
        #![proptest_config(ProptestConfig { cases: 24, .. ProptestConfig::default() })]

        #[test]
        fn arrowhead_equals_dense(n in 1usize..=200, seed in any::<u64>(), g0 in 1e-4f64..0.05) {
            let spec = EnsembleSpec::uniform(n, 0.1, g0, 1, seed);
            let cfg = sample_config(&spec, 0).unwrap();
            let psi0 = StateVector::excited(n, None);
            let times = grid(200, 25.0);
            let a = evolve_arrowhead(&cfg, &psi0, &times).unwrap();
            let d = evolve_exact(&SpectralDecomposition::from_config(&cfg).unwrap(), &psi0, &times).unwrap();
            for ((x, y), tot) in a.p_e.iter().zip(&d.p_e).zip(d.total_pop.as_ref().unwrap()) {
                prop_assert!((x - y).abs() < 1e-9);
                prop_assert!((tot - 1.0).abs() < 1e-10);
            }
        }

        #[test]
        fn first_order_is_sum_of_nonnegative_terms(n in 0usize..30, seed in any::<u64>(), tau in 0.0f64..1e5) {
            let spec = EnsembleSpec::uniform(n.max(1), 0.1, 0.01, 1, seed);
            let cfg = sample_config(&spec, 0).unwrap();
            let fo = FirstOrder::new(&cfg);
            let terms = fo.deficits(tau);
            prop_assert!(terms.iter().all(|&t| t >= 0.0));
            prop_assert!((fo.p_e_at(tau) - (1.0 - terms.iter().sum::<f64>())).abs() < 1e-15);
        }

        #[test]
        fn distance_bound(re in -1.0f64..1.0, im in -1.0f64..1.0) {
            let mut s = StateVector::excited(1, None);
            let c = Complex64::new(re, im);
            let c = if c.norm() > 1.0 { c / c.norm() } else { c };
            s.amp0 = c;
            s.env_amps[0] = Complex64::new((1.0 - c.norm_sqr()).max(0.0).sqrt(), 0.0);
            let d = distance_from_initial(&s);
            prop_assert!(d * d <= 2.0 * (1.0 - c.norm_sqr()) + 1e-15);
        }
    }
}
