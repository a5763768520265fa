//! Index families `q₁ < … < q_ℓ`, the distances ρ and ρ̃ and neighborhood counts.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

pub type IndexMap = Arc<dyn Fn(u64) -> u64 + Send + Sync>;

#[derive(Clone)]
pub enum FamilyKind {
    /// `q_i(n) = i·n`.
    Linear,
    /// `q_i(n) = Σ_k c_{i,k} n^k`, coefficients lowest degree first.
    Polynomial(Vec<Vec<i64>>),
    /// `q_i(n) = p_i(n^l)` with integer polynomials `p_i`.
    PowerSparse { polys: Vec<Vec<i64>>, power: u32 },
    Custom(Vec<IndexMap>),
}

impl fmt::Debug for FamilyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FamilyKind::Linear => write!(f, "Linear"),
            FamilyKind::Polynomial(p) => write!(f, "Polynomial({p:?})"),
            FamilyKind::PowerSparse { polys, power } => write!(f, "PowerSparse({polys:?}, l={power})"),
            FamilyKind::Custom(m) => write!(f, "Custom({} maps)", m.len()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct IndexFamily {
    ell: usize,
    kind: FamilyKind,
    ray_start: u64,
}

/// Range on which ordering and monotonicity are spot-checked at construction.
const CHECK_SPAN: u64 = 2000;

fn eval_poly(c: &[i64], n: u64) -> Option<i128> {
    let x = n as i128;
    let mut acc: i128 = 0;
    for &a in c.iter().rev() {
        acc = acc.checked_mul(x)?.checked_add(a as i128)?;
    }
    Some(acc)
}

impl IndexFamily {
    pub fn linear(ell: usize) -> Result<Self> {
        if ell == 0 {
            return Err(Error::InvalidArgument("ℓ must be positive".into()));
        }
        Ok(IndexFamily { ell, kind: FamilyKind::Linear, ray_start: 1 })
    }

    pub fn polynomial(coeffs: Vec<Vec<i64>>, ray_start: u64) -> Result<Self> {
        for (i, c) in coeffs.iter().enumerate() {
            match c.iter().rposition(|&a| a != 0) {
                Some(k) if c[k] > 0 => {}
                _ => {
                    return Err(Error::InvalidArgument(format!(
                        "polynomial {} needs a positive leading coefficient",
                        i + 1
                    )))
                }
            }
        }
        Self::checked(coeffs.len(), FamilyKind::Polynomial(coeffs), ray_start)
    }

    pub fn power_sparse(polys: Vec<Vec<i64>>, power: u32, ray_start: u64) -> Result<Self> {
        if power == 0 {
            return Err(Error::InvalidArgument("power must be ≥ 1".into()));
        }
        Self::checked(polys.len(), FamilyKind::PowerSparse { polys, power }, ray_start)
    }

    pub fn custom(maps: Vec<IndexMap>, ray_start: u64) -> Result<Self> {
        Self::checked(maps.len(), FamilyKind::Custom(maps), ray_start)
    }

    fn checked(ell: usize, kind: FamilyKind, ray_start: u64) -> Result<Self> {
        if ell == 0 {
            return Err(Error::InvalidArgument("ℓ must be positive".into()));
        }
        let f = IndexFamily { ell, kind, ray_start: ray_start.max(1) };
        for n in 1..f.ray_start {
            for i in 1..=ell {
                f.try_q(i, n)?;
            }
        }
        f.check_ray(f.ray_start + CHECK_SPAN)?;
        Ok(f)
    }

    /// Verify ordering and strict monotonicity on `[R, upto]`, stopping early
    /// where the maps leave the representable range.
    pub fn check_ray(&self, upto: u64) -> Result<()> {
        let r = self.ray_start;
        let mut prev: Vec<u64> = (1..=self.ell).map(|i| self.try_q(i, r)).collect::<Result<_>>()?;
        for n in r..=upto {
            let Ok(cur) = (1..=self.ell).map(|i| self.try_q(i, n)).collect::<Result<Vec<u64>>>() else {
                break;
            };
            for i in 0..self.ell {
                if i > 0 && cur[i] <= cur[i - 1] {
                    return Err(Error::InvalidArgument(format!(
                        "q_{} ≤ q_{} at n = {n}",
                        i + 1,
                        i
                    )));
                }
                if n > r && cur[i] <= prev[i] {
                    return Err(Error::NonMonotone { component: i + 1, at: n });
                }
            }
            prev = cur;
        }
        Ok(())
    }

    pub fn ell(&self) -> usize {
        self.ell
    }

    pub fn kind(&self) -> &FamilyKind {
        &self.kind
    }

    pub fn ray_start(&self) -> u64 {
        self.ray_start
    }

    pub fn is_linear(&self) -> bool {
        matches!(self.kind, FamilyKind::Linear)
    }

    fn try_q(&self, i: usize, n: u64) -> Result<u64> {
        let v: Option<i128> = match &self.kind {
            FamilyKind::Linear => (i as u64).checked_mul(n).map(|x| x as i128),
            FamilyKind::Polynomial(c) => eval_poly(&c[i - 1], n),
            FamilyKind::PowerSparse { polys, power } => {
                n.checked_pow(*power).and_then(|m| eval_poly(&polys[i - 1], m))
            }
            FamilyKind::Custom(m) => Some(m[i - 1](n) as i128),
        };
        match v {
            Some(x) if (0..=u64::MAX as i128).contains(&x) => Ok(x as u64),
            _ => Err(Error::InvalidArgument(format!("q_{i}({n}) is negative or overflows"))),
        }
    }

    /// `q_i(n)` with `i` in `1..=ℓ`. Panics on overflow, which construction rules out
    /// for the ranges used by sums.
    #[inline]
    pub fn q(&self, i: usize, n: u64) -> u64 {
        match self.kind {
            FamilyKind::Linear => i as u64 * n,
            _ => self.try_q(i, n).expect("index map overflow"),
        }
    }

    pub fn indices_at(&self, n: u64) -> Vec<u64> {
        (1..=self.ell).map(|i| self.q(i, n)).collect()
    }

    /// Sorted distinct union of `{q_i(n) : 1 ≤ n ≤ N, 1 ≤ i ≤ ℓ}`.
    pub fn index_set(&self, big_n: u64) -> Result<Vec<u64>> {
        let mut v = Vec::with_capacity(big_n as usize * self.ell);
        for n in 1..=big_n {
            for i in 1..=self.ell {
                v.push(self.try_q(i, n)?);
            }
        }
        v.sort_unstable();
        v.dedup();
        Ok(v)
    }

    fn require_ray(&self, n: u64) -> Result<()> {
        if n < self.ray_start {
            Err(Error::BelowRay { index: n, ray_start: self.ray_start })
        } else {
            Ok(())
        }
    }
}

/// `ρ(n, m) = min_{i,j} |i·n − j·m|` for a linear family.
pub fn rho(family: &IndexFamily, n: u64, m: u64) -> Result<u64> {
    if !family.is_linear() {
        return Err(Error::InvalidArgument("ρ is defined for linear families; use rho_tilde".into()));
    }
    let l = family.ell() as u64;
    let mut best = u64::MAX;
    for i in 1..=l {
        for j in 1..=l {
            best = best.min((i * n).abs_diff(j * m));
        }
    }
    Ok(best)
}

/// `ρ̃(n, m) = min_{i,j} |q_i(n) − q_j(m)|` for `n, m ≥ R`.
pub fn rho_tilde(family: &IndexFamily, n: u64, m: u64) -> Result<u64> {
    family.require_ray(n)?;
    family.require_ray(m)?;
    let a = family.indices_at(n);
    let b = family.indices_at(m);
    Ok(a.iter().flat_map(|x| b.iter().map(move |y| x.abs_diff(*y))).min().unwrap())
}

/// Set distance `min_{n∈Δ₁, m∈Δ₂} ρ(n, m)` by enumerating pairs.
pub fn rho_sets(family: &IndexFamily, d1: &[u64], d2: &[u64]) -> Result<u64> {
    let mut best = u64::MAX;
    for &n in d1 {
        for &m in d2 {
            best = best.min(rho(family, n, m)?);
        }
    }
    Ok(best)
}

/// The same distance as the gap between the dilated sets `𝒯 = {j·t : t ∈ Δ, 1 ≤ j ≤ ℓ}`,
/// found by a merge over the two sorted sets.
pub fn rho_sets_dilated(family: &IndexFamily, d1: &[u64], d2: &[u64]) -> Result<u64> {
    if !family.is_linear() {
        return Err(Error::InvalidArgument("dilated sets need a linear family".into()));
    }
    let l = family.ell() as u64;
    let dilate = |d: &[u64]| {
        let mut t: Vec<u64> = d.iter().flat_map(|&x| (1..=l).map(move |j| j * x)).collect();
        t.sort_unstable();
        t.dedup();
        t
    };
    let (t1, t2) = (dilate(d1), dilate(d2));
    let (mut a, mut b) = (0, 0);
    let mut best = u64::MAX;
    while a < t1.len() && b < t2.len() {
        best = best.min(t1[a].abs_diff(t2[b]));
        if t1[a] < t2[b] {
            a += 1;
        } else {
            b += 1;
        }
    }
    Ok(best)
}

/// `A_s(n, N) = {m ∈ [1, N] : ρ(n, m) ≤ s}` (ρ̃ for nonlinear families), sorted.
pub fn neighborhood(family: &IndexFamily, n: u64, big_n: u64, s: u64) -> Result<Vec<u64>> {
    if n == 0 || n > big_n {
        return Err(Error::InvalidArgument(format!("need 1 ≤ n ≤ N, got n = {n}, N = {big_n}")));
    }
    if !family.is_linear() {
        family.require_ray(n)?;
        let lo = family.ray_start().max(1);
        let mut out = Vec::new();
        for m in lo..=big_n {
            if rho_tilde(family, n, m)? <= s {
                out.push(m);
            }
        }
        return Ok(out);
    }
    // |i·n − j·m| ≤ s  ⟺  m ∈ [(i·n − s)/j, (i·n + s)/j].
    let l = family.ell() as u64;
    let mut out = Vec::new();
    for i in 1..=l {
        for j in 1..=l {
            let c = i * n;
            let lo = c.saturating_sub(s).div_ceil(j).max(1);
            let hi = ((c + s) / j).min(big_n);
            if lo <= hi {
                out.extend(lo..=hi);
            }
        }
    }
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

/// Result of an inverse-Lipschitz scan for a family.
#[derive(Debug, Clone, PartialEq)]
pub struct QCertificate {
    pub q: f64,
    pub range: (u64, u64),
    /// Number of scanned points per map (all integers in range when not sampled).
    pub points: usize,
    pub sampled: bool,
    /// Q grew by more than half between the first half of the range and the full range.
    pub blowup: bool,
}

const Q_SCAN_POINTS: usize = 2048;

/// Smallest `Q ≥ 1` with `|q_j^{-1}(a) − q_j^{-1}(b)| ≤ Q(1 + |a − b|)` over the scanned
/// pairs, where `q_j^{-1}(a) = max{n ≥ R : q_j(n) ≤ a}`.
pub fn inverse_lipschitz_q(family: &IndexFamily, a_range: (u64, u64)) -> Result<QCertificate> {
    let (lo, hi) = a_range;
    if lo > hi {
        return Err(Error::InvalidArgument("empty range".into()));
    }
    let width = hi - lo + 1;
    let sampled = width as usize > Q_SCAN_POINTS;
    let pts: Vec<u64> = if sampled {
        (0..Q_SCAN_POINTS as u64).map(|k| lo + k * (width - 1) / (Q_SCAN_POINTS as u64 - 1)).collect()
    } else {
        (lo..=hi).collect()
    };
    let r = family.ray_start();
    let mut q_full: f64 = 1.0;
    let mut q_half: f64 = 1.0;
    let half = pts.len() / 2;
    for j in 1..=family.ell() {
        // floor inverse along the sorted points by walking n upward
        let mut inv = Vec::with_capacity(pts.len());
        let mut n = r;
        let mut prev = family.try_q(j, r)?;
        for &a in &pts {
            if a < family.try_q(j, r)? {
                inv.push(None);
                continue;
            }
            loop {
                let next = family.try_q(j, n + 1)?;
                if next <= prev {
                    return Err(Error::NonMonotone { component: j, at: n + 1 });
                }
                if next > a {
                    break;
                }
                n += 1;
                prev = next;
            }
            inv.push(Some(n));
        }
        for x in 0..pts.len() {
            let Some(ix) = inv[x] else { continue };
            for y in x + 1..pts.len() {
                let Some(iy) = inv[y] else { continue };
                let ratio = (iy - ix) as f64 / (1.0 + (pts[y] - pts[x]) as f64);
                q_full = q_full.max(ratio);
                if y < half {
                    q_half = q_half.max(ratio);
                }
            }
        }
    }
    Ok(QCertificate {
        q: q_full,
        range: a_range,
        points: pts.len(),
        sampled,
        blowup: q_full > 1.5 * q_half,
    })
}

/// Spot check that `q_i(n) − q_{i−1}(n)` grows: the smallest gap on the upper
/// half of `[R, upto]` exceeds the smallest gap on the lower half.
pub fn gaps_diverge(family: &IndexFamily, upto: u64) -> Result<bool> {
    if family.ell() < 2 {
        return Ok(true);
    }
    let r = family.ray_start();
    let mid = r + (upto.saturating_sub(r)) / 2;
    let min_gap = |from: u64, to: u64| -> Result<u64> {
        let mut g = u64::MAX;
        for n in from..=to {
            let q = family.indices_at(n);
            for w in q.windows(2) {
                g = g.min(w[1] - w[0]);
            }
        }
        Ok(g)
    };
    Ok(min_gap(mid + 1, upto)? > min_gap(r, mid)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rho_examples() {
        let f1 = IndexFamily::linear(1).unwrap();
        assert_eq!(rho(&f1, 3, 10).unwrap(), 7);
        let f2 = IndexFamily::linear(2).unwrap();
        assert_eq!(rho(&f2, 1, 2).unwrap(), 0);
        assert_eq!(rho(&f2, 3, 5).unwrap(), 1);
        assert_eq!(rho(&f2, 4, 4).unwrap(), 0);
    }

    #[test]
    fn rho_tilde_examples() {
        let sq = IndexFamily::polynomial(vec![vec![0, 0, 1]], 1).unwrap();
        assert_eq!(rho_tilde(&sq, 2, 3).unwrap(), 5);
        let mixed = IndexFamily::polynomial(vec![vec![0, 1], vec![0, 0, 1]], 2).unwrap();
        assert_eq!(rho_tilde(&mixed, 2, 4).unwrap(), 0);
        assert!(matches!(rho_tilde(&mixed, 1, 4), Err(Error::BelowRay { .. })));
        let lin = IndexFamily::linear(3).unwrap();
        for n in 1..30 {
            for m in 1..30 {
                assert_eq!(rho_tilde(&lin, n, m).unwrap(), rho(&lin, n, m).unwrap());
            }
        }
    }

    #[test]
    fn neighborhood_examples() {
        let f1 = IndexFamily::linear(1).unwrap();
        assert_eq!(neighborhood(&f1, 10, 100, 2).unwrap(), vec![8, 9, 10, 11, 12]);
        let f2 = IndexFamily::linear(2).unwrap();
        let a = neighborhood(&f2, 6, 100, 1).unwrap();
        assert!(a.contains(&3) && a.contains(&12));
    }

    #[test]
    fn neighborhood_matches_filter() {
        for l in 1..=3 {
            let f = IndexFamily::linear(l).unwrap();
            for n in [1, 2, 7, 30, 60] {
                for s in [1, 3, 10] {
                    let fast = neighborhood(&f, n, 60, s).unwrap();
                    let slow: Vec<u64> = (1..=60).filter(|&m| rho(&f, n, m).unwrap() <= s).collect();
                    assert_eq!(fast, slow);
                }
            }
        }
    }

    #[test]
    fn q_certificates() {
        let lin = IndexFamily::linear(3).unwrap();
        assert_eq!(inverse_lipschitz_q(&lin, (3, 900)).unwrap().q, 1.0);
        let sq = IndexFamily::polynomial(vec![vec![0, 0, 1]], 1).unwrap();
        let c = inverse_lipschitz_q(&sq, (1, 1500)).unwrap();
        assert_eq!(c.q, 1.0);
        assert!(!c.blowup);
    }

    #[test]
    fn exponential_family_q() {
        // 2^n, kept strictly increasing past the u64 range of the construction scan
        let f = IndexFamily::custom(
            vec![Arc::new(|n: u64| if n < 60 { 1u64 << n } else { (1u64 << 60) + n })],
            1,
        )
        .unwrap();
        let c = inverse_lipschitz_q(&f, (2, 1 << 20)).unwrap();
        assert_eq!(c.q, 1.0);
        let cube = IndexFamily::polynomial(vec![vec![0, 0, 0, 1]], 1).unwrap();
        assert_eq!(inverse_lipschitz_q(&cube, (1, 3000)).unwrap().q, 1.0);
    }

    #[test]
    fn power_sparse_eval() {
        let f = IndexFamily::power_sparse(vec![vec![0, 1], vec![0, 2]], 2, 1).unwrap();
        assert_eq!(f.q(2, 3), 18);
    }

    #[test]
    fn set_distance_two_ways() {
        let f = IndexFamily::linear(3).unwrap();
        let d1 = [4, 9, 13];
        let d2 = [20, 31];
        assert_eq!(rho_sets(&f, &d1, &d2).unwrap(), rho_sets_dilated(&f, &d1, &d2).unwrap());
    }

    #[test]
    fn non_monotone_rejected() {
        let r = IndexFamily::custom(vec![Arc::new(|n| if n == 50 { 10 } else { n })], 1);
        assert!(matches!(r, Err(Error::NonMonotone { component: 1, .. })));
    }

    #[test]
    fn gap_divergence() {
        assert!(gaps_diverge(&IndexFamily::linear(2).unwrap(), 100).unwrap());
        let c = IndexFamily::custom(vec![Arc::new(|n| n), Arc::new(|n| n + 3)], 1).unwrap();
        assert!(!gaps_diverge(&c, 100).unwrap());
    }
}
