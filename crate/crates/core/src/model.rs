//! Dimensionless system description and seeded configuration sampling.
//!
//! Units: ħ = 1, frequencies in units of the central-qubit frequency Ω₀, time τ = Ω₀t.

use rand::Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{invalid, Result};
use crate::rng::{derive_rng, sample_seed, DOMAIN_CONFIG};

/// Star-coupled N+1 qubit system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub n_env: usize,
    /// η_j = λ_j − 1.
    pub detunings: Vec<f64>,
    /// 𝒢_j ≥ 0.
    pub couplings: Vec<f64>,
    /// Symmetric env-env couplings with zero diagonal.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub env_couplings: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub seed: u64,
}

impl SystemConfig {
    pub fn star(detunings: Vec<f64>, couplings: Vec<f64>) -> Result<Self> {
        let cfg = Self { n_env: detunings.len(), detunings, couplings, env_couplings: None, seed: 0 };
        cfg.validate()?;
        Ok(cfg)
    }

    /// N identical resonant couplings.
    pub fn resonant(n_env: usize, g: f64) -> Self {
        Self { n_env, detunings: vec![0.0; n_env], couplings: vec![g; n_env], env_couplings: None, seed: 0 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.detunings.len() != self.n_env || self.couplings.len() != self.n_env {
            return Err(invalid(format!(
                "n_env = {} but {} detunings and {} couplings",
                self.n_env,
                self.detunings.len(),
                self.couplings.len()
            )));
        }
        if let Some(i) = self.detunings.iter().position(|x| !x.is_finite()) {
            return Err(invalid(format!("detunings[{i}] is not finite")));
        }
        if let Some(i) = self.couplings.iter().position(|g| !(g.is_finite() && *g >= 0.0)) {
            return Err(invalid(format!("couplings[{i}] must be finite and >= 0")));
        }
        if let Some(t) = &self.env_couplings {
            if t.len() != self.n_env || t.iter().any(|r| r.len() != self.n_env) {
                return Err(invalid("env_couplings must be n_env x n_env"));
            }
            for i in 0..self.n_env {
                if t[i][i] != 0.0 {
                    return Err(invalid(format!("env_couplings[{i}][{i}] must be zero")));
                }
                for j in 0..i {
                    if t[i][j] != t[j][i] || !t[i][j].is_finite() {
                        return Err(invalid(format!("env_couplings not symmetric at ({i}, {j})")));
                    }
                }
            }
        }
        Ok(())
    }

    /// True when there are no nonzero env-env couplings.
    pub fn is_star(&self) -> bool {
        self.env_couplings.as_ref().is_none_or(|t| t.iter().all(|r| r.iter().all(|&v| v == 0.0)))
    }

    /// All detunings vanish, so phases never randomize.
    pub fn is_degenerate(&self) -> bool {
        self.detunings.iter().all(|e| e.abs() < 1e-12)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CouplingMode {
    /// 𝒢_j ≡ fixed_g.
    Fixed,
    /// 𝒢_j uniform on [0, 𝒢_max] with the mean square set by gamma0.
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSpec {
    pub n_env: usize,
    pub spread: f64,
    pub coupling_mode: CouplingMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_g: Option<f64>,
    pub n_samples: usize,
    #[serde(default)]
    pub base_seed: u64,
}

impl EnsembleSpec {
    pub fn fixed(n_env: usize, spread: f64, g: f64, n_samples: usize, base_seed: u64) -> Self {
        Self { n_env, spread, coupling_mode: CouplingMode::Fixed, gamma0: None, fixed_g: Some(g), n_samples, base_seed }
    }

    pub fn uniform(n_env: usize, spread: f64, gamma0: f64, n_samples: usize, base_seed: u64) -> Self {
        Self {
            n_env,
            spread,
            coupling_mode: CouplingMode::Uniform,
            gamma0: Some(gamma0),
            fixed_g: None,
            n_samples,
            base_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.spread.is_finite() && self.spread > 0.0) {
            return Err(invalid(format!("spread must be > 0, got {}", self.spread)));
        }
        match (self.coupling_mode, self.gamma0, self.fixed_g) {
            (CouplingMode::Fixed, None, Some(g)) if g.is_finite() && g >= 0.0 => Ok(()),
            (CouplingMode::Uniform, Some(g0), None) if g0.is_finite() && g0 >= 0.0 => Ok(()),
            (CouplingMode::Fixed, _, _) => Err(invalid("fixed mode needs fixed_g >= 0 and no gamma0")),
            (CouplingMode::Uniform, _, _) => Err(invalid("uniform mode needs gamma0 >= 0 and no fixed_g")),
        }
    }

    /// ⟨𝒢²⟩ = 3·spread·Γ₀/(2πN) in uniform mode, 𝒢² in fixed mode.
    pub fn mean_square_coupling(&self) -> f64 {
        match self.coupling_mode {
            CouplingMode::Fixed => self.fixed_g.unwrap_or(0.0).powi(2),
            CouplingMode::Uniform => {
                if self.n_env == 0 {
                    0.0
                } else {
                    3.0 * self.spread * self.gamma0.unwrap_or(0.0) / (2.0 * PI * self.n_env as f64)
                }
            }
        }
    }

    /// Upper end of the coupling draw.
    pub fn max_coupling(&self) -> f64 {
        match self.coupling_mode {
            CouplingMode::Fixed => self.fixed_g.unwrap_or(0.0),
            CouplingMode::Uniform => (3.0 * self.mean_square_coupling()).sqrt(),
        }
    }
}

/// Draw configuration `index` of the ensemble.
pub fn sample_config(spec: &EnsembleSpec, index: u64) -> Result<SystemConfig> {
    spec.validate()?;
    let seed = sample_seed(spec.base_seed, index);
    let mut rng = derive_rng(seed, DOMAIN_CONFIG, 0);
    let n = spec.n_env;
    let half = spec.spread / 2.0;
    let detunings: Vec<f64> = (0..n).map(|_| (-half + spec.spread * rng.random::<f64>()).clamp(-half, half)).collect();
    let couplings = match spec.coupling_mode {
        CouplingMode::Fixed => vec![spec.max_coupling(); n],
        CouplingMode::Uniform => {
            let gmax = spec.max_coupling();
            (0..n).map(|_| gmax * rng.random::<f64>()).collect()
        }
    };
    Ok(SystemConfig { n_env: n, detunings, couplings, env_couplings: None, seed })
}

/// Δ_m = 16𝒢²/spread², the crossover between the two regions of the Δ_j distribution.
pub fn delta_max(g: f64, spread: f64) -> f64 {
    16.0 * g * g / (spread * spread)
}
