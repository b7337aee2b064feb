//! Closed-form distributions, revival probability and Poincaré-time estimates
//! for the equal-coupling star system.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;
use std::f64::consts::PI;

use crate::error::{invalid, Result};
use crate::model::delta_max;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyticParams {
    pub n_env: usize,
    /// Common coupling 𝒢.
    pub coupling: f64,
    /// ΔΩ/Ω₀.
    pub spread: f64,
    /// Revival threshold δ.
    pub delta: f64,
}

impl AnalyticParams {
    pub fn new(n_env: usize, coupling: f64, spread: f64, delta: f64) -> Result<Self> {
        let p = Self { n_env, coupling, spread, delta };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("coupling", self.coupling), ("spread", self.spread), ("delta", self.delta)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(format!("{name} must be > 0, got {v}")));
            }
        }
        Ok(())
    }

    /// Δ_m = 16𝒢²/spread².
    pub fn delta_m(&self) -> f64 {
        delta_max(self.coupling, self.spread)
    }

    /// 𝒯 = 8π𝒢/spread.
    pub fn t_norm(&self) -> f64 {
        8.0 * PI * self.coupling / self.spread
    }

    /// Small-Δ regime δ < N·Δ_m/10.
    pub fn in_regime(&self, x: f64) -> bool {
        x < self.n_env as f64 * self.delta_m() / 10.0
    }
}

/// A closed-form value evaluated in log space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyticValue {
    pub value: f64,
    pub ln_value: f64,
    /// Argument lies in the small-Δ region where the power law holds.
    pub in_regime: bool,
}

impl AnalyticValue {
    fn from_ln(ln_value: f64, in_regime: bool) -> Self {
        Self { value: ln_value.exp(), ln_value, in_regime }
    }
}

fn check_x(x: f64) -> Result<()> {
    if x.is_nan() || x < 0.0 {
        Err(invalid(format!("Δ must be >= 0, got {x}")))
    } else {
        Ok(())
    }
}

/// Lower branch, x ≤ Δ_m: (2/π)[arcsin√r − √r/(1+√(1−r))], r = x/Δ_m.
/// Algebraically equal to (2/π)[√(Δ_m/x−1) − √(Δ_m/x) + arcsin√(x/Δ_m)].
pub fn cdf_lower_branch(x: f64, p: &AnalyticParams) -> f64 {
    let r = x / p.delta_m();
    let sr = r.sqrt();
    2.0 / PI * (sr.asin() - sr / (1.0 + (1.0 - r).max(0.0).sqrt()))
}

/// Upper branch, x > Δ_m: 1 − (8/π)(𝒢/spread)/√x.
pub fn cdf_upper_branch(x: f64, p: &AnalyticParams) -> f64 {
    1.0 - 8.0 / PI * (p.coupling / p.spread) / x.sqrt()
}

/// P(Δ_j ≤ x) for Δ_j = 4𝒢²sin²(φ/2)/η² with uniform phase and detuning.
pub fn cdf_delta_j(x: f64, p: &AnalyticParams) -> Result<f64> {
    check_x(x)?;
    if x == 0.0 {
        return Ok(0.0);
    }
    if x <= p.delta_m() {
        Ok(cdf_lower_branch(x, p))
    } else {
        Ok(cdf_upper_branch(x, p))
    }
}

/// Density of Δ_j, the exact derivative of `cdf_delta_j`.
pub fn pdf_delta_j(x: f64, p: &AnalyticParams) -> Result<f64> {
    if x.is_nan() || x <= 0.0 {
        return Err(invalid(format!("density needs Δ > 0, got {x}")));
    }
    let dm = p.delta_m();
    let r = x / dm;
    if r <= 1.0 {
        Ok(1.0 / (PI * dm) / (r.sqrt() * (1.0 + (1.0 - r).sqrt())))
    } else {
        Ok(1.0 / (PI * dm) * r.powf(-1.5))
    }
}

/// Small-Δ form 1/(𝒯√x).
pub fn pdf_small_asymptote(x: f64, p: &AnalyticParams) -> f64 {
    1.0 / (p.t_norm() * x.sqrt())
}

/// Large-Δ form (4/π)(𝒢/spread)x^{−3/2}.
pub fn pdf_large_asymptote(x: f64, p: &AnalyticParams) -> f64 {
    4.0 / PI * (p.coupling / p.spread) * x.powf(-1.5)
}

fn check_n(n: usize) -> Result<()> {
    if n < 1 {
        Err(invalid("N must be >= 1"))
    } else {
        Ok(())
    }
}

/// Small-Δ density of Δ = Σ_j Δ_j:
/// p_N(Δ) = (spread/𝒢)^N Δ^{N/2−1} / ((64π)^{N/2} Γ(N/2)).
pub fn p_n_delta(x: f64, p: &AnalyticParams) -> Result<AnalyticValue> {
    check_n(p.n_env)?;
    if x.is_nan() || x <= 0.0 {
        return Err(invalid(format!("density needs Δ > 0, got {x}")));
    }
    let n = p.n_env as f64;
    let ln =
        n * (p.spread / p.coupling).ln() + (n / 2.0 - 1.0) * x.ln() - n / 2.0 * (64.0 * PI).ln() - ln_gamma(n / 2.0);
    Ok(AnalyticValue::from_ln(ln, p.in_regime(x)))
}

/// Revival probability μ_N(δ) = ∫₀^δ p_N(Δ)dΔ.
pub fn mu_n(p: &AnalyticParams) -> Result<AnalyticValue> {
    check_n(p.n_env)?;
    let n = p.n_env as f64;
    let ln = n * (p.spread / p.coupling).ln() + n / 2.0 * p.delta.ln()
        - n / 2.0 * (64.0 * PI).ln()
        - ln_gamma(n / 2.0 + 1.0);
    Ok(AnalyticValue::from_ln(ln, p.in_regime(p.delta)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianHeuristic {
    /// b = ⟨Δ_j⟩²/(2s_j²).
    pub b: f64,
    /// e^{−bN}.
    pub factor: f64,
}

/// Large-N Gaussian estimate μ_N ∝ e^{−bN} from caller-supplied (truncated) moments.
pub fn gaussian_mu_heuristic(mean_dj: f64, var_dj: f64, n: usize) -> Result<GaussianHeuristic> {
    if !(var_dj > 0.0) {
        return Err(invalid(format!("variance must be > 0, got {var_dj}")));
    }
    let b = mean_dj * mean_dj / (2.0 * var_dj);
    Ok(GaussianHeuristic { b, factor: (-b * n as f64).exp() })
}

fn binomial_u128(n: u64, k: u64) -> Option<u128> {
    let k = k.min(n - k);
    let mut c: u128 = 1;
    for i in 0..k {
        c = c.checked_mul((n - i) as u128)? / (i + 1) as u128;
    }
    Some(c)
}

/// ⟨Σσ_j⟩₊ for N independent ±1 signs.
pub fn sigma_plus_binomial(n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let nf = n as f64;
    // N·C(N, N/2)/2^{N+1} for even N, N·C(N−1, (N−1)/2)/2^N for odd N.
    let (m, pow) = if n % 2 == 0 { (n, n + 1) } else { (n - 1, n) };
    if pow < 1000 {
        if let Some(c) = binomial_u128(m as u64, m as u64 / 2) {
            return nf * c as f64 * 2f64.powi(-(pow as i32));
        }
    }
    let mf = m as f64;
    let ln_c = ln_gamma(mf + 1.0) - 2.0 * ln_gamma(mf / 2.0 + 1.0);
    (nf.ln() + ln_c - pow as f64 * 2f64.ln()).exp()
}

/// Gaussian limit sqrt(N/(2π)).
pub fn sigma_plus_gaussian(n: usize) -> f64 {
    (n as f64 / (2.0 * PI)).sqrt()
}

/// ⟨√Δ_j⟩ conditional on Σ_j Δ_j = δ: Γ(N/2)/(√π Γ((N+1)/2)) · √δ.
pub fn mean_sqrt_delta_at_threshold(n: usize, delta: f64) -> Result<f64> {
    check_n(n)?;
    if !(delta > 0.0) {
        return Err(invalid(format!("δ must be > 0, got {delta}")));
    }
    let nf = n as f64;
    Ok((ln_gamma(nf / 2.0) - ln_gamma((nf + 1.0) / 2.0)).exp() / PI.sqrt() * delta.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossingRate {
    pub rate: f64,
    pub ln_rate: f64,
    /// p_N(δ).
    pub density_at_threshold: AnalyticValue,
    /// ⟨R⟩₊, mean upward slope of Δ at the threshold.
    pub mean_r_plus: f64,
}

/// ⟨R⟩₊ = (√(2N)/π)(Γ(N/2)/Γ((N+1)/2))𝒢√δ.
pub fn mean_r_plus(p: &AnalyticParams) -> Result<f64> {
    check_n(p.n_env)?;
    let n = p.n_env as f64;
    Ok((2.0 * n).sqrt() / PI * (ln_gamma(n / 2.0) - ln_gamma((n + 1.0) / 2.0)).exp() * p.coupling * p.delta.sqrt())
}

/// Rate r = p_N(δ)·⟨R⟩₊ of crossings of p_e = 1 − δ.
pub fn crossing_rate(p: &AnalyticParams) -> Result<CrossingRate> {
    p.validate()?;
    let dens = p_n_delta(p.delta, p)?;
    let rp = mean_r_plus(p)?;
    let ln_rate = dens.ln_value + rp.ln();
    Ok(CrossingRate { rate: ln_rate.exp(), ln_rate, density_at_threshold: dens, mean_r_plus: rp })
}

/// τ_P = √2π Γ((N+1)/2)/(N^{3/2}Γ(N/2)) · (√δ/𝒢) · μ_N(δ)⁻¹.
pub fn tau_p_analytic(p: &AnalyticParams) -> Result<AnalyticValue> {
    p.validate()?;
    let mu = mu_n(p)?;
    let n = p.n_env as f64;
    let ln = (2f64.sqrt() * PI).ln() + ln_gamma((n + 1.0) / 2.0) - 1.5 * n.ln() - ln_gamma(n / 2.0)
        + 0.5 * p.delta.ln()
        - p.coupling.ln()
        - mu.ln_value;
    Ok(AnalyticValue::from_ln(ln, mu.in_regime))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_rng;
    use proptest::prelude::*;
    use rand::Rng;

    fn fig3a(n: usize) -> AnalyticParams {
        AnalyticParams::new(n, 0.001, 0.1, 0.001).unwrap()
    }

    fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
        #[allow(clippy::too_many_arguments)]
        fn rec(
            f: &dyn Fn(f64) -> f64,
            a: f64,
            b: f64,
            fa: f64,
            fm: f64,
            fb: f64,
            whole: f64,
            tol: f64,
            depth: u32,
        ) -> f64 {
            let m = 0.5 * (a + b);
            let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
            let (flm, frm) = (f(lm), f(rm));
            let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
            let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
            if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
                left + right + (left + right - whole) / 15.0
            } else {
                rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
                    + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
            }
        }
        let m = 0.5 * (a + b);
        let (fa, fm, fb) = (f(a), f(m), f(b));
        rec(f, a, b, fa, fm, fb, (b - a) / 6.0 * (fa + 4.0 * fm + fb), tol, 60)
    }

    /// ∫₀^X pdf, with x = s² removing the inverse-square-root singularity.
    fn integrate_pdf(x_hi: f64, p: &AnalyticParams) -> f64 {
        let dm = p.delta_m();
        let g = |s: f64| if s == 0.0 { 2.0 / (p.t_norm()) } else { 2.0 * s * pdf_delta_j(s * s, p).unwrap() };
        if x_hi <= dm {
            adaptive_simpson(&g, 0.0, x_hi.sqrt(), 1e-13)
        } else {
            adaptive_simpson(&g, 0.0, dm.sqrt(), 1e-13)
                + adaptive_simpson(&|x| pdf_delta_j(x, p).unwrap(), dm, x_hi, 1e-13)
        }
    }

    #[test]
    fn cdf_cusp_value_from_both_branches() {
        let p = fig3a(1);
        let target = 1.0 - 2.0 / PI;
        assert!((target - 0.36338).abs() < 1e-5);
        assert!((cdf_lower_branch(p.delta_m(), &p) - target).abs() <= 2.0 * f64::EPSILON);
        assert!((cdf_upper_branch(p.delta_m(), &p) - target).abs() <= 2.0 * f64::EPSILON);
        assert!((cdf_delta_j(p.delta_m(), &p).unwrap() - target).abs() <= 2.0 * f64::EPSILON);
    }

    #[test]
    fn cdf_lower_branch_matches_literal_form() {
        let p = fig3a(1);
        let dm = p.delta_m();
        for r in [1e-4, 0.01, 0.25, 0.5, 0.9] {
            let x = r * dm;
            let lit = 2.0 / PI * ((dm / x - 1.0).sqrt() - (dm / x).sqrt() + (x / dm).sqrt().asin());
            assert!((cdf_lower_branch(x, &p) - lit).abs() < 1e-12);
        }
    }

    #[test]
    fn cdf_limits_and_errors() {
        let p = fig3a(1);
        assert_eq!(cdf_delta_j(0.0, &p).unwrap(), 0.0);
        assert!(cdf_delta_j(1e-20, &p).unwrap() < 1e-7);
        assert!(cdf_delta_j(1e12, &p).unwrap() > 1.0 - 1e-7);
        assert!(cdf_delta_j(-1.0, &p).is_err());
        assert!(pdf_delta_j(0.0, &p).is_err());
    }

    #[test]
    fn cdf_at_quarter_delta_m_matches_monte_carlo() {
        let p = fig3a(1);
        let x = p.delta_m() / 4.0;
        let mut rng = derive_rng(2024, 9, 0);
        let n = 10_000_000;
        let mut hits = 0usize;
        for _ in 0..n {
            let phi: f64 = PI * (2.0 * rng.random::<f64>() - 1.0);
            let eta: f64 = p.spread * (rng.random::<f64>() - 0.5);
            let d = 4.0 * p.coupling.powi(2) * (phi / 2.0).sin().powi(2) / (eta * eta);
            hits += (d <= x) as usize;
        }
        let est = hits as f64 / n as f64;
        let exact = cdf_delta_j(x, &p).unwrap();
        let sigma = (exact * (1.0 - exact) / n as f64).sqrt();
        assert!((est - exact).abs() < 3.0 * sigma, "MC {est} exact {exact} sigma {sigma}");
    }

    #[test]
    fn pdf_integrates_to_cdf() {
        let p = fig3a(1);
        for x in [p.delta_m() / 2.0, 2.0 * p.delta_m()] {
            let q = integrate_pdf(x, &p);
            let c = cdf_delta_j(x, &p).unwrap();
            assert!((q - c).abs() < 1e-8, "x {x}: quad {q} cdf {c}");
        }
    }

    #[test]
    fn pdf_asymptotes() {
        let p = fig3a(1);
        let dm = p.delta_m();
        let small: Vec<f64> = [1e-2, 1e-4, 1e-6, 1e-8]
            .iter()
            .map(|r| (pdf_delta_j(r * dm, &p).unwrap() / pdf_small_asymptote(r * dm, &p) - 1.0).abs())
            .collect();
        assert!(small.windows(2).all(|w| w[1] < w[0]));
        assert!(small[3] < 1e-8);
        for r in [2.0, 10.0, 1e4] {
            let x: f64 = r * dm;
            let scaled = x.powf(1.5) * pdf_delta_j(x, &p).unwrap();
            assert!((scaled / (4.0 / PI * p.coupling / p.spread) - 1.0).abs() < 1e-12);
            assert!((pdf_large_asymptote(x, &p) / pdf_delta_j(x, &p).unwrap() - 1.0).abs() < 1e-12);
        }
        let below = pdf_delta_j(dm * (1.0 - 1e-12), &p).unwrap();
        let above = pdf_delta_j(dm * (1.0 + 1e-12), &p).unwrap();
        assert!((below / above - 1.0).abs() < 1e-5);
    }

    #[test]
    fn p2_is_flat_with_known_level() {
        let p = fig3a(2);
        let a = p_n_delta(1e-5, &p).unwrap().value;
        let b = p_n_delta(3e-4, &p).unwrap().value;
        assert!((a - b).abs() < 1e-12 * a);
        assert!((a - 1e4 / (64.0 * PI)).abs() < 1e-10);
        assert!((a - 49.74).abs() < 5e-3);
    }

    #[test]
    fn p2_matches_random_phase_histogram() {
        // Δ₁ + Δ₂ from uniform phases and detunings; small-Δ bins against the flat level.
        let p = fig3a(2);
        let mut rng = derive_rng(77, 9, 1);
        let n = 10_000_000usize;
        let lim = 2e-5;
        let mut hits = 0usize;
        let g2 = 4.0 * p.coupling.powi(2);
        for _ in 0..n {
            let mut s = 0.0;
            for _ in 0..2 {
                let phi: f64 = PI * (2.0 * rng.random::<f64>() - 1.0);
                let eta: f64 = p.spread * (rng.random::<f64>() - 0.5);
                s += g2 * (phi / 2.0).sin().powi(2) / (eta * eta);
            }
            hits += (s < lim) as usize;
        }
        let dens = hits as f64 / n as f64 / lim;
        let se = (hits as f64).sqrt() / n as f64 / lim;
        let exact = p_n_delta(lim / 2.0, &p).unwrap().value;
        // Finite Δ/Δ_m corrections are O(Δ/Δ_m) ~ 1%, well inside 3 se here.
        assert!((dens - exact).abs() < 3.0 * se + 0.01 * exact, "hist {dens} ± {se}, formula {exact}");
    }

    #[test]
    fn mu_two_value_and_identities() {
        let p = fig3a(2);
        let mu = mu_n(&p).unwrap();
        assert!((mu.value - 1e4 * 1e-3 / (64.0 * PI)).abs() < 1e-14);
        assert!((mu.value - 4.97e-2).abs() < 1e-4);
        for n in 1..=12 {
            let p = fig3a(n);
            let mu = mu_n(&p).unwrap().value;
            let pn = p_n_delta(p.delta, &p).unwrap().value;
            assert!((mu / (2.0 * p.delta / n as f64 * pn) - 1.0).abs() < 1e-12);
            let mu2 = mu_n(&fig3a(n + 2)).unwrap().value;
            let ratio = (p.spread / p.coupling).powi(2) * p.delta / (64.0 * PI * (n as f64 / 2.0 + 1.0));
            assert!((mu2 / mu / ratio - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn fig3a_analytic_slope() {
        let ns: Vec<f64> = (2..=6).map(|n| n as f64).collect();
        let ln_mu: Vec<f64> = (2..=6).map(|n| mu_n(&fig3a(n)).unwrap().ln_value).collect();
        let fit = crate::stats::linear_fit(&ns, &ln_mu);
        assert!(fit.slope > -2.2 && fit.slope < -1.65, "slope {}", fit.slope);
    }

    #[test]
    fn gaussian_heuristic_properties() {
        assert_eq!(gaussian_mu_heuristic(0.0, 1.0, 5).unwrap().b, 0.0);
        let a = gaussian_mu_heuristic(0.3, 0.04, 5).unwrap();
        let b = gaussian_mu_heuristic(0.6, 0.16, 5).unwrap();
        assert!((a.b - b.b).abs() < 1e-15);
        assert!((a.factor - (-a.b * 5.0).exp()).abs() < 1e-15);
        assert!(gaussian_mu_heuristic(1.0, 0.0, 5).is_err());
    }

    fn enumerate_sigma_plus(n: usize) -> f64 {
        let total: u64 = (0u64..1 << n)
            .map(|mask| {
                let s = 2 * mask.count_ones() as i64 - n as i64;
                s.max(0) as u64
            })
            .sum();
        total as f64 / (1u64 << n) as f64
    }

    #[test]
    fn sigma_plus_small_values() {
        assert_eq!(sigma_plus_binomial(2), 0.5);
        assert_eq!(sigma_plus_binomial(3), 0.75);
        assert_eq!(sigma_plus_binomial(4), 0.75);
        assert_eq!(enumerate_sigma_plus(2), 0.5);
        assert_eq!(enumerate_sigma_plus(3), 0.75);
        assert_eq!(enumerate_sigma_plus(4), 0.75);
        assert!((sigma_plus_gaussian(4) - 0.7979).abs() < 1e-4);
    }

    #[test]
    fn sigma_plus_binomial_equals_enumeration() {
        for n in 1..=20 {
            assert_eq!(sigma_plus_binomial(n), enumerate_sigma_plus(n), "N = {n}");
        }
    }

    #[test]
    fn sigma_plus_gaussian_limit() {
        for n in [100, 101, 500, 2000, 10_000] {
            let b = sigma_plus_binomial(n);
            assert!(((sigma_plus_gaussian(n) - b) / b).abs() < 0.01, "N = {n}");
        }
        let v = sigma_plus_gaussian(1_000_000) / 1e3;
        assert!((v - 1.0 / (2.0 * PI).sqrt()).abs() < 1e-15);
        // log-Γ route and exact route agree where both apply.
        let n = 120usize;
        let m = n as f64;
        let lg = (m.ln() + ln_gamma(m + 1.0) - 2.0 * ln_gamma(m / 2.0 + 1.0) - (m + 1.0) * 2f64.ln()).exp();
        assert!((lg / sigma_plus_binomial(n) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn mean_sqrt_delta_values() {
        let d = 1e-3;
        assert!((mean_sqrt_delta_at_threshold(2, d).unwrap() - 2.0 / PI * d.sqrt()).abs() < 1e-15);
        let r = mean_sqrt_delta_at_threshold(5, 4.0 * d).unwrap() / mean_sqrt_delta_at_threshold(5, d).unwrap();
        assert!((r - 2.0).abs() < 1e-12);
        assert!(mean_sqrt_delta_at_threshold(0, d).is_err());
    }

    #[test]
    fn mean_sqrt_delta_conditional_monte_carlo() {
        // Δ_j drawn from the small-Δ density 1/(𝒯√x) (Δ = X u²), conditioned on ΣΔ ≈ δ.
        let (n, delta) = (3usize, 1e-3);
        let mut rng = derive_rng(5, 9, 2);
        let band = 0.01;
        let mut vals = Vec::new();
        for _ in 0..10_000_000 {
            let d: [f64; 3] = std::array::from_fn(|_| delta * rng.random::<f64>().powi(2));
            let s: f64 = d.iter().sum();
            if (s / delta - 1.0).abs() < band {
                vals.push((d[0] / s).sqrt() * delta.sqrt());
            }
        }
        let (m, se) = crate::stats::mean_se(&vals);
        let exact = mean_sqrt_delta_at_threshold(n, delta).unwrap();
        assert!(vals.len() > 10_000);
        assert!((m - exact).abs() < 3.0 * se, "MC {m} ± {se}, formula {exact}");
    }

    #[test]
    fn crossing_rate_values() {
        let p = fig3a(2);
        let rp = mean_r_plus(&p).unwrap();
        assert!((rp - 2.272e-5).abs() < 1e-8, "{rp}");
        let cr = crossing_rate(&p).unwrap();
        let tau = tau_p_analytic(&p).unwrap();
        assert!((cr.rate * tau.value - 1.0).abs() < 1e-12);
        assert!((tau.value - 8.86e2).abs() < 2.0, "{}", tau.value);
    }

    #[test]
    fn fig3c_analytic_slope() {
        let ns: Vec<f64> = (2..=5).map(|n| n as f64).collect();
        let ln_tau: Vec<f64> = (2..=5).map(|n| tau_p_analytic(&fig3a(n)).unwrap().ln_value).collect();
        let fit = crate::stats::linear_fit(&ns, &ln_tau);
        assert!(fit.slope > 1.6 && fit.slope < 2.2, "slope {}", fit.slope);
    }

    proptest! {
        #![proptest_config(ProptestConfig { cases: 64, .. ProptestConfig::default() })]

        #[test]
        fn cdf_monotone_and_bounded(g in 1e-5f64..1e-2, spread in 1e-3f64..1.0, a in 0.0f64..10.0, b in 0.0f64..10.0) {
            let p = AnalyticParams::new(1, g, spread, 1e-3).unwrap();
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            let (cl, ch) = (cdf_delta_j(lo * p.delta_m(), &p).unwrap(), cdf_delta_j(hi * p.delta_m(), &p).unwrap());
            prop_assert!(cl <= ch + 1e-15);
            prop_assert!((0.0..=1.0).contains(&cl) && (0.0..=1.0).contains(&ch));
        }

        #[test]
        fn closed_forms_finite_positive(n in 1usize..=64, g in 1e-5f64..1e-2, spread in 1e-3f64..1.0, delta in 1e-6f64..1e-1) {
            let p = AnalyticParams::new(n, g, spread, delta).unwrap();
            let mu = mu_n(&p).unwrap();
            prop_assert!(mu.ln_value.is_finite());
            prop_assert!(mu.value.is_finite() && mu.value >= 0.0);
            let tau = tau_p_analytic(&p).unwrap();
            prop_assert!(tau.ln_value.is_finite());
            let cr = crossing_rate(&p).unwrap();
            prop_assert!(cr.ln_rate.is_finite() && cr.mean_r_plus > 0.0);
            prop_assert!((cr.ln_rate + tau.ln_value).abs() < 1e-9);
            prop_assert_eq!(mu.in_regime, delta < n as f64 * p.delta_m() / 10.0);
            if (-700.0..700.0).contains(&mu.ln_value) {
                prop_assert!(mu.value > 0.0);
            }
        }

        #[test]
        fn crossing_rate_factorization(n in 1usize..=64, g in 1e-5f64..1e-2, delta in 1e-6f64..1e-1) {
            let p = AnalyticParams::new(n, g, 0.1, delta).unwrap();
            let cr = crossing_rate(&p).unwrap();
            let composed = 2.0 * g * sigma_plus_gaussian(n) * mean_sqrt_delta_at_threshold(n, delta).unwrap();
            prop_assert!((cr.mean_r_plus / composed - 1.0).abs() < 1e-12);
            let scale = tau_p_analytic(&p).unwrap().value * mu_n(&p).unwrap().value / (delta.sqrt() / g);
            let p2 = AnalyticParams::new(n, g * 1.7, 0.23, delta * 0.3).unwrap();
            let scale2 = tau_p_analytic(&p2).unwrap().value * mu_n(&p2).unwrap().value / ((delta * 0.3).sqrt() / (g * 1.7));
            prop_assert!((scale / scale2 - 1.0).abs() < 1e-9);
        }
    }
}
