//! Closed-form tail, moment and variance bounds.
//!
//! Unnamed existence constants are inputs here; `BoundConstants` records where each
//! value came from.

use serde::Serialize;

use crate::cumulants::ln_factorial;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Regime {
    /// Bounded Hölder `F`, stretched-exponential φ decay.
    A1,
    /// Polynomial-growth `F` with sub-factorial moments `τ_k^k ≤ M^k (k!)^ζ`.
    A2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AssumptionParams {
    pub regime: Regime,
    pub a: f64,
    pub d: f64,
    pub eta: f64,
    pub m: Option<f64>,
    pub zeta: Option<f64>,
    pub lambda: u32,
    pub tau_lambda: Option<f64>,
    /// Power `l` of a sparse index family `q_i(n) = p_i(n^l)`.
    pub sparse_power: Option<u32>,
}

impl AssumptionParams {
    pub fn bounded(a: f64, d: f64, eta: f64) -> Self {
        AssumptionParams { regime: Regime::A1, a, d, eta, m: None, zeta: None, lambda: 0, tau_lambda: None, sparse_power: None }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0 && self.d >= 1.0 && self.eta > 0.0) {
            return Err(Error::InvalidArgument(format!("need a > 0, d ≥ 1, η > 0: {self:?}")));
        }
        if self.regime == Regime::A2 {
            let ok = self.lambda >= 1
                && self.m.is_some_and(|m| m > 0.0 && m.is_finite())
                && self.zeta.is_some_and(|z| z >= 0.0 && z.is_finite())
                && self.tau_lambda.is_some_and(|t| t.is_finite());
            if !ok {
                return Err(Error::InvalidArgument("unbounded regime needs λ ≥ 1 and finite M, ζ, τ_λ".into()));
            }
        }
        if self.sparse_power == Some(0) {
            return Err(Error::InvalidArgument("sparse power must be ≥ 1".into()));
        }
        Ok(())
    }

    /// `1/η` (or `1/(η l²)` for sparse families), plus `λζ` in the unbounded regime.
    pub fn gamma(&self) -> f64 {
        let l = self.sparse_power.unwrap_or(1) as f64;
        let base = 1.0 / (self.eta * l * l);
        match self.regime {
            Regime::A1 => base,
            Regime::A2 => base + self.lambda as f64 * self.zeta.unwrap_or(0.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ConstantSource {
    Configured,
    Calibrated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Constant {
    pub value: f64,
    pub source: ConstantSource,
}

pub const CONSTANT_NAMES: [&str; 15] =
    ["c1", "c2", "c3", "c4", "c5", "c6", "c7", "c0", "a0", "a_ell", "c_ell", "C0", "C1", "B", "B1"];

/// Named constants whose existence is asserted but whose values are not known.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct BoundConstants {
    entries: std::collections::BTreeMap<String, Constant>,
}

impl BoundConstants {
    pub fn set(&mut self, name: &str, value: f64, source: ConstantSource) -> Result<()> {
        if !CONSTANT_NAMES.contains(&name) && name != "B3" {
            return Err(Error::InvalidArgument(format!("unknown constant `{name}`")));
        }
        if !(value > 0.0 && value.is_finite()) {
            return Err(Error::InvalidArgument(format!("constant `{name}` must be positive, got {value}")));
        }
        self.entries.insert(name.to_string(), Constant { value, source });
        Ok(())
    }

    pub fn get(&self, name: &'static str) -> Result<f64> {
        self.entries.get(name).map(|c| c.value).ok_or(Error::MissingConstant(name))
    }

    pub fn entry(&self, name: &str) -> Option<Constant> {
        self.entries.get(name).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Constant)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0) || v.is_nan() {
        return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
    }
    Ok(())
}

/// `ln` of `exp(−x² / (2(c₁ + c₂ x N^{−1/(2+4γ)})^{(1+2γ)/(1+γ)}))`.
pub fn concentration_bound_ln(x: f64, n: f64, c1: f64, c2: f64, gamma: f64) -> Result<f64> {
    positive("c1", c1)?;
    positive("c2", c2)?;
    positive("γ", gamma)?;
    if !(x >= 0.0) || !(n >= 1.0) {
        return Err(Error::InvalidArgument("need x ≥ 0 and N ≥ 1".into()));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    let inner = c1 + c2 * x * (-(n.ln()) / (2.0 + 4.0 * gamma)).exp();
    let p = (1.0 + 2.0 * gamma) / (1.0 + gamma);
    Ok(-(2.0 * x.ln() - (2f64.ln() + p * inner.ln())).exp())
}

pub fn concentration_bound(x: f64, n: f64, c1: f64, c2: f64, gamma: f64) -> Result<f64> {
    Ok(concentration_bound_ln(x, n, c1, c2, gamma)?.exp())
}

/// `ln` of `exp(−c₇ (εN)^{1/(1+γ)})`.
pub fn eps_n_bound_ln(eps: f64, n: f64, c7: f64, gamma: f64) -> f64 {
    -c7 * (eps * n).powf(1.0 / (1.0 + gamma))
}

/// Smallest `N` for the `εN` form: `c₆ ε^{−2−1/γ}`.
pub fn eps_n_window(eps: f64, c6: f64, gamma: f64) -> f64 {
    c6 * eps.powf(-2.0 - 1.0 / gamma)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChernoffTail {
    /// The bound applies to `P(S_N ≥ threshold)`, `threshold = t + Bδ₂`.
    pub threshold: f64,
    pub ln_bound: f64,
    pub bound: f64,
}

/// `P(S_N ≥ t + Bδ₂) ≤ exp(−t² / (4B²Nℓδ₁²))`.
pub fn chernoff_tail_bound(t: f64, n: f64, ell: usize, delta1: f64, delta2: f64, b: f64) -> Result<ChernoffTail> {
    positive("δ₁", delta1)?;
    positive("B", b)?;
    if !(t >= 0.0) || !(n >= 1.0) || ell == 0 || !(delta2 >= 0.0) {
        return Err(Error::InvalidArgument("need t ≥ 0, N ≥ 1, ℓ ≥ 1, δ₂ ≥ 0".into()));
    }
    let ln_bound = -t * t / (4.0 * b * b * n * ell as f64 * delta1 * delta1);
    Ok(ChernoffTail { threshold: t + b * delta2, ln_bound, bound: ln_bound.exp() })
}

/// Minimizer `λ* = t / (2B²Nℓδ₁²)` of `B²λ²Nℓδ₁² − λt`.
pub fn chernoff_lambda_star(t: f64, n: f64, ell: usize, delta1: f64, b: f64) -> f64 {
    t / (2.0 * b * b * n * ell as f64 * delta1 * delta1)
}

/// Rate `c = 1/(16B²ℓδ₁²)` in `P(S_N ≥ εN) ≤ exp(−cε²N)`, valid for `N ≥ 2Bδ₂/ε`.
pub fn chernoff_eps_rate(ell: usize, delta1: f64, b: f64) -> f64 {
    1.0 / (16.0 * b * b * ell as f64 * delta1 * delta1)
}

pub fn chernoff_eps_window(eps: f64, delta2: f64, b: f64) -> f64 {
    2.0 * b * delta2 / eps
}

/// `ln` of the MGF bound `exp(Bλ²Nℓδ₁ + Bλδ₂)`.
pub fn mgf_bound_ln(lambda: f64, n: f64, ell: usize, delta1: f64, delta2: f64, b: f64) -> f64 {
    b * lambda * lambda * n * ell as f64 * delta1 + b * lambda * delta2
}

/// Martingale differences and the gap: `δ₁ = K(ϕ + r + 1)`, `δ₂ = K N β_∞^κ(r) + δ₁`.
pub fn deltas(k: f64, varphi: f64, r: u64, n: f64, beta_kappa: f64) -> (f64, f64) {
    let d1 = k * (varphi + r as f64 + 1.0);
    (d1, k * n * beta_kappa + d1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum ModDev {
    Value(f64),
    /// `x` is past `c₄ N^{1/(2+4γ)}`; the inequality says nothing there.
    OutOfWindow { edge: f64 },
}

/// `c₄ N^{1/(2+4γ)}`.
pub fn moddev_window_edge(n: f64, c4: f64, gamma: f64) -> f64 {
    c4 * n.powf(1.0 / (2.0 + 4.0 * gamma))
}

/// `c₅ (1 + x³) N^{−1/(2+4γ)}` on `0 ≤ x < c₄ N^{1/(2+4γ)}`.
pub fn moddev_envelope(x: f64, n: f64, c4: f64, c5: f64, gamma: f64) -> Result<ModDev> {
    positive("c4", c4)?;
    positive("c5", c5)?;
    positive("γ", gamma)?;
    if !(x >= 0.0) || !(n >= 1.0) {
        return Err(Error::InvalidArgument("need x ≥ 0 and N ≥ 1".into()));
    }
    let edge = moddev_window_edge(n, c4, gamma);
    if x >= edge {
        return Ok(ModDev::OutOfWindow { edge });
    }
    Ok(ModDev::Value(c5 * (1.0 + x * x * x) * n.powf(-1.0 / (2.0 + 4.0 * gamma))))
}

pub fn mdp_rate(x: f64) -> f64 {
    0.5 * x * x
}

pub fn mdp_speed(a_n: f64) -> f64 {
    a_n * a_n
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MdpValidity {
    /// `a_N` increases along the grid.
    pub grows: bool,
    /// `a_N N^{−1/(2+4γ)}` decreases along the grid.
    pub ratio_shrinks: bool,
    pub pass: bool,
}

/// Numerical check of `a_N → ∞` and `a_N N^{−1/(2+4γ)} → 0` on an ascending grid.
pub fn check_mdp_sequence(a: &dyn Fn(f64) -> f64, gamma: f64, grid: &[f64]) -> Result<MdpValidity> {
    if grid.len() < 2 || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("grid must be ascending with ≥ 2 points".into()));
    }
    let e = 1.0 / (2.0 + 4.0 * gamma);
    let vals: Vec<f64> = grid.iter().map(|&n| a(n)).collect();
    let ratios: Vec<f64> = grid.iter().zip(&vals).map(|(&n, &v)| v * n.powf(-e)).collect();
    let grows = vals.windows(2).all(|w| w[1] > w[0]);
    let ratio_shrinks = ratios.windows(2).all(|w| w[1] < w[0]);
    Ok(MdpValidity { grows, ratio_shrinks, pass: grows && ratio_shrinks })
}

/// `c_γ = (1/6)(√2/6)^{1/(1+2γ)}`; `γ = ∞` gives `1/6`.
pub fn berry_esseen_constant(gamma: f64) -> f64 {
    if gamma.is_infinite() {
        return 1.0 / 6.0;
    }
    (2f64.sqrt() / 6.0).powf(1.0 / (1.0 + 2.0 * gamma)) / 6.0
}

/// `c_γ Δ^{−1/(1+2γ)}`.
pub fn berry_esseen_bound(delta: f64, gamma: f64) -> Result<f64> {
    positive("Δ", delta)?;
    if !(gamma >= 0.0) {
        return Err(Error::InvalidArgument("γ must be ≥ 0".into()));
    }
    let e = if gamma.is_infinite() { 0.0 } else { 1.0 / (1.0 + 2.0 * gamma) };
    Ok(berry_esseen_constant(gamma) * delta.powf(-e))
}

/// `ln` of `c_{0,1}^p (p!)^{1+γ} Σ_{1≤u≤(p−1)/2} N^u p^u/(u!)²` with `c_{0,1} = max(1, c₀)`;
/// `−∞` for the empty sum (`p ≤ 2`).
pub fn momthm_bound_ln(p: usize, n: f64, c0: f64, gamma: f64) -> Result<f64> {
    if p == 0 || !(n >= 1.0) || !(gamma >= 0.0) || !(c0 > 0.0) {
        return Err(Error::InvalidArgument("need p ≥ 1, N ≥ 1, c₀ > 0, γ ≥ 0".into()));
    }
    if p <= 2 {
        return Ok(f64::NEG_INFINITY);
    }
    let pf = p as f64;
    let terms: Vec<f64> = (1..=(p - 1) / 2)
        .map(|u| u as f64 * (n.ln() + pf.ln()) - 2.0 * ln_factorial(u))
        .collect();
    let m = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln();
    Ok(pf * c0.max(1.0).ln() + (1.0 + gamma) * ln_factorial(p) + lse)
}

pub fn momthm_bound(p: usize, n: f64, c0: f64, gamma: f64) -> Result<f64> {
    Ok(momthm_bound_ln(p, n, c0, gamma)?.exp())
}

/// `C √N`.
pub fn variance_envelope(n: f64, c: f64) -> Result<f64> {
    if !(n >= 1.0) || !(c >= 0.0) {
        return Err(Error::InvalidArgument("need N ≥ 1 and C ≥ 0".into()));
    }
    Ok(c * n.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn concentration_limits() {
        assert_eq!(concentration_bound(0.0, 10.0, 1.0, 1.0, 1.0).unwrap(), 1.0);
        let lim = (-(4.0f64) / (2.0 * 2f64.powf(1.5))).exp();
        let v12 = concentration_bound(2.0, 1e12, 2.0, 1.0, 1.0).unwrap();
        let v24 = concentration_bound(2.0, 1e24, 2.0, 1.0, 1.0).unwrap();
        assert!((v12 - lim).abs() < 2e-2 * lim);
        assert!((v24 - lim).abs() < 2e-4 * lim);
        assert!(v24 < v12);
    }

    #[test]
    fn chernoff_scaling() {
        let a = chernoff_tail_bound(3.0, 100.0, 2, 1.5, 2.0, 1.0).unwrap();
        let b = chernoff_tail_bound(6.0, 100.0, 2, 1.5, 2.0, 1.0).unwrap();
        assert!((b.ln_bound / a.ln_bound - 4.0).abs() < 1e-14);
        assert_eq!(chernoff_tail_bound(0.0, 100.0, 2, 1.5, 2.0, 1.0).unwrap().bound, 1.0);
        // εN form agrees with the tail bound at t = εN/2
        let (eps, n, ell, d1, b) = (0.2, 400.0, 2, 1.5, 1.3);
        let t = chernoff_tail_bound(eps * n / 2.0, n, ell, d1, 0.0, b).unwrap();
        assert!((t.ln_bound + chernoff_eps_rate(ell, d1, b) * eps * eps * n).abs() < 1e-12);
    }

    #[test]
    fn lambda_star_minimizes() {
        let (t, n, ell, d1, b) = (5.0, 50.0, 2, 1.2, 1.1);
        let f = |l: f64| b * b * l * l * n * ell as f64 * d1 * d1 - l * t;
        let ls = chernoff_lambda_star(t, n, ell, d1, b);
        assert!(f(ls) < f(ls * 1.01) && f(ls) < f(ls * 0.99));
        let min = f(ls);
        assert!((min + t * t / (4.0 * b * b * n * ell as f64 * d1 * d1)).abs() < 1e-12);
    }

    #[test]
    fn moddev_window() {
        assert!(matches!(moddev_envelope(999.0, 100.0, 1.0, 1.0, 1.0).unwrap(), ModDev::OutOfWindow { .. }));
        assert!((moddev_window_edge(1e6, 3.0, 1.0) - 30.0).abs() < 1e-12);
        match moddev_envelope(0.0, 64.0, 1.0, 2.0, 1.0).unwrap() {
            ModDev::Value(v) => assert!((v - 2.0 * 64f64.powf(-1.0 / 6.0)).abs() < 1e-15),
            _ => panic!(),
        }
    }

    #[test]
    fn berry_esseen_values() {
        assert!((berry_esseen_constant(1.0) - 0.10295244508785543).abs() < 1e-15);
        assert!((berry_esseen_constant(1e9) - 1.0 / 6.0).abs() < 1e-9);
        let r = berry_esseen_bound(8.0, 1.0).unwrap() / berry_esseen_bound(1.0, 1.0).unwrap();
        assert!((r - 0.5).abs() < 1e-15);
    }

    #[test]
    fn momthm_values() {
        assert_eq!(momthm_bound(1, 10.0, 2.0, 1.0).unwrap(), 0.0);
        assert_eq!(momthm_bound(2, 50.0, 1.0, 1.0).unwrap(), 0.0);
        assert!((momthm_bound(3, 100.0, 2.0, 1.0).unwrap() - 86400.0).abs() < 1e-8);
    }

    #[test]
    fn mdp_sequence() {
        let grid: Vec<f64> = (1..=12).map(|e| 10f64.powi(e)).collect();
        let v = check_mdp_sequence(&|n: f64| n.powf(0.1), 1.0, &grid).unwrap();
        assert!(v.pass);
        let bad = check_mdp_sequence(&|n: f64| n.powf(0.3), 1.0, &grid).unwrap();
        assert!(!bad.pass);
        assert_eq!(mdp_rate(2.0), 2.0);
    }

    #[test]
    fn gamma_variants() {
        let p = AssumptionParams::bounded(1.0, 1.0, 0.5);
        assert_eq!(p.gamma(), 2.0);
        let s = AssumptionParams { sparse_power: Some(2), ..p };
        assert_eq!(s.gamma(), 0.5);
        let u = AssumptionParams { regime: Regime::A2, m: Some(1.0), zeta: Some(0.5), lambda: 2, tau_lambda: Some(1.0), ..p };
        u.validate().unwrap();
        assert_eq!(u.gamma(), 3.0);
    }
}
