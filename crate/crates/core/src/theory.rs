//! Closed-form order curves and their Monte Carlo checks.
//!
//! `F^(m) = w^(m) / √C(n−2, m)` is the per-order training strength: the
//! standard deviation of the weight update that flows through an `m`-order
//! interaction when every context contributes an independent Gaussian
//! gradient. Normalized at order zero it gives `F̂`, whose U shape is fitted
//! to measured interaction profiles through an effective dimension `n′`.

use log::warn;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::coalition::binomial;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::profile::OrderProfile;
use crate::rng;

/// `ln C(n, k)` for real arguments via log-gamma.
pub fn ln_binomial(n: f64, k: f64) -> f64 {
    libm::lgamma(n + 1.0) - libm::lgamma(k + 1.0) - libm::lgamma(n - k + 1.0)
}

/// `F^(m) = ((n−m−1)/(n(n−1))) / √C(n−2, m)`, continuous in `n` and `m`.
pub fn training_strength(n: f64, m: f64) -> Result<f64> {
    if !(n >= 2.0) || !(0.0..=n - 2.0).contains(&m) {
        return Err(Error::Argument(format!("order {m} outside [0, {}]", n - 2.0)));
    }
    let w = (n - m - 1.0) / (n * (n - 1.0));
    Ok(w * (-0.5 * ln_binomial(n - 2.0, m)).exp())
}

/// `F̂` sampled on a grid of relative orders.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoryCurve {
    pub n_eff: f64,
    pub relative_orders: Vec<f64>,
    pub f_hat: Vec<f64>,
}

impl TheoryCurve {
    /// CSV with the profile column layout, `F_hat` in place of `J`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("order_m,relative_order,raw_strength,F_hat\n");
        for (rho, f) in self.relative_orders.iter().zip(&self.f_hat) {
            let m = rho * (self.n_eff - 2.0);
            let raw = f * training_strength(self.n_eff, 0.0).unwrap_or(f64::NAN);
            out.push_str(&format!("{m},{rho},{raw},{f}\n"));
        }
        out
    }
}

/// `F̂(ρ) = F(n′, ρ(n′−2)) / F(n′, 0)`.
pub fn normalized_curve(n_eff: f64, relative_orders: &[f64]) -> Result<TheoryCurve> {
    if !(n_eff > 2.0) {
        return Err(Error::Argument(format!(
            "effective dimension must exceed 2, got {n_eff}"
        )));
    }
    let f0 = training_strength(n_eff, 0.0)?;
    let f_hat = relative_orders
        .iter()
        .map(|&rho| {
            if !(0.0..=1.0).contains(&rho) {
                return Err(Error::Argument(format!("relative order {rho} outside [0, 1]")));
            }
            let m = (rho * (n_eff - 2.0)).min(n_eff - 2.0);
            Ok(training_strength(n_eff, m)? / f0)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TheoryCurve {
        n_eff,
        relative_orders: relative_orders.to_vec(),
        f_hat,
    })
}

/// Weight `w̃^(m)` of the ordered-pair interactions inside `Δv(r1, r2)`.
pub fn theorem2_weight(n: usize, r1: f64, r2: f64, m: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&r1) || !(0.0..=1.0).contains(&r2) || r1 >= r2 {
        return Err(Error::Argument(format!("need 0 ≤ r1 < r2 ≤ 1, got ({r1}, {r2})")));
    }
    if n < 2 || m < 0.0 || m > (n - 2) as f64 {
        return Err(Error::Argument(format!(
            "order {m} outside [0, {}]",
            n.saturating_sub(2)
        )));
    }
    let nf = n as f64;
    let denom = nf * (nf - 1.0);
    let low = r1 * nf - 2.0;
    let high = r2 * nf - 2.0;
    Ok(if r1 > 0.0 && m <= low + 1e-9 {
        (r2 / r1 - 1.0) * (m + 1.0) / denom
    } else if m <= high + 1e-9 {
        (r2 * nf - m - 1.0) / denom
    } else {
        0.0
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Theorem1Row {
    pub m: usize,
    pub predicted_std: f64,
    pub empirical_std: f64,
}

/// Monte Carlo draw of the per-order weight updates `ΔW^(m)(i,j)` with
/// `η ∂L/∂v(N) = 1`. The order-independent remainder `ΔW_U` is not
/// simulated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Theorem1Sim {
    pub n: usize,
    pub sigma: f64,
    pub trials: usize,
    pub seed: u64,
    pub rows: Vec<Theorem1Row>,
}

impl Theorem1Sim {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("m,predicted_std,empirical_std\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{}\n", r.m, r.predicted_std, r.empirical_std));
        }
        out
    }
}

/// Largest `n` the simulator accepts; the work is `2^(n−2)` draws per trial.
pub const THEOREM1_LIMIT: usize = 14;
const TRIAL_CHUNK: usize = 1000;

#[derive(Clone, Copy, Default)]
struct Moments {
    count: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.count += 1.0;
        let d = x - self.mean;
        self.mean += d / self.count;
        self.m2 += d * (x - self.mean);
    }

    fn merge(self, o: Moments) -> Moments {
        if o.count == 0.0 {
            return self;
        }
        if self.count == 0.0 {
            return o;
        }
        let count = self.count + o.count;
        let d = o.mean - self.mean;
        Moments {
            count,
            mean: self.mean + d * o.count / count,
            m2: self.m2 + o.m2 + d * d * self.count * o.count / count,
        }
    }

    fn std(&self) -> f64 {
        if self.count < 2.0 {
            0.0
        } else {
            (self.m2 / (self.count - 1.0)).sqrt()
        }
    }
}

pub fn simulate_theorem1(n: usize, sigma: f64, trials: usize, seed: u64, exec: Exec) -> Result<Theorem1Sim> {
    if n < 2 {
        return Err(Error::Argument(format!("need n ≥ 2, got {n}")));
    }
    if n > THEOREM1_LIMIT {
        return Err(Error::Capacity(format!(
            "simulating n = {n} needs 2^{} draws per trial; limit is n = {THEOREM1_LIMIT}",
            n - 2
        )));
    }
    if trials < 2 || !(sigma >= 0.0) {
        return Err(Error::Argument(format!(
            "need trials ≥ 2 and σ ≥ 0, got {trials}, {sigma}"
        )));
    }
    let nf = n as f64;
    let chunks = trials.div_ceil(TRIAL_CHUNK);
    let mut rows = Vec::with_capacity(n - 1);
    for m in 0..=n - 2 {
        let contexts = binomial(n - 2, m) as usize;
        let w = (nf - 1.0 - m as f64) / (nf * (nf - 1.0));
        let parts = exec.map_range(chunks, |c| {
            let mut r = rng::stream(seed, &[m as u64, c as u64]);
            let lo = c * TRIAL_CHUNK;
            let hi = (lo + TRIAL_CHUNK).min(trials);
            let mut acc = Moments::default();
            for _ in lo..hi {
                let mut sum = 0.0;
                for _ in 0..contexts {
                    let z: f64 = StandardNormal.sample(&mut r);
                    sum += sigma * z;
                }
                acc.push(w * sum / contexts as f64);
            }
            acc
        });
        let total = parts.into_iter().fold(Moments::default(), Moments::merge);
        rows.push(Theorem1Row {
            m,
            predicted_std: sigma * w / (contexts as f64).sqrt(),
            empirical_std: total.std(),
        });
    }
    Ok(Theorem1Sim {
        n,
        sigma,
        trials,
        seed,
        rows,
    })
}

/// Outcome of fitting `F̂(n′)` to a measured profile.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EffectiveDimensionFit {
    pub n_eff: f64,
    /// Root-mean-square residual of `ln F̂ − ln Ĵ` over the profile orders.
    pub fit_error: f64,
    pub search_range: (f64, f64),
    pub at_boundary: bool,
    pub warnings: Vec<String>,
    pub relative_orders: Vec<f64>,
    pub j_hat: Vec<f64>,
    pub f_hat: Vec<f64>,
}

const STRENGTH_FLOOR: f64 = 1e-12;
const SCAN_POINTS: usize = 400;

/// Finds `n′` minimizing `Σ (ln F̂(n′, ρ) − ln Ĵ(ρ))²` over the profile's
/// orders, `Ĵ = J / J(ρ=0)`. A coarse scan brackets the minimum and
/// golden-section search refines it. `range` defaults to `(2, n]`.
pub fn fit_effective_dimension(profile: &OrderProfile, range: Option<(f64, f64)>) -> Result<EffectiveDimensionFit> {
    if profile.orders.len() < 4 {
        return Err(Error::Argument(format!(
            "fitting needs at least 4 orders, profile has {}",
            profile.orders.len()
        )));
    }
    let zero = profile
        .relative_orders
        .iter()
        .position(|&r| r == 0.0)
        .ok_or_else(|| Error::Argument("profile lacks the zero order".into()))?;
    let mut warnings = Vec::new();
    if profile.j.iter().any(|&j| j <= STRENGTH_FLOOR) {
        let msg = format!("profile has zero strengths; floored at {STRENGTH_FLOOR:e}");
        warn!("{msg}");
        warnings.push(msg);
    }
    let floored: Vec<f64> = profile.j.iter().map(|&j| j.max(STRENGTH_FLOOR)).collect();
    let j0 = floored[zero];
    let j_hat: Vec<f64> = floored.iter().map(|j| j / j0).collect();
    let log_j: Vec<f64> = j_hat.iter().map(|j| j.ln()).collect();
    let rhos = profile.relative_orders.clone();

    let (lo, hi) = range.unwrap_or((2.0, profile.n as f64));
    if !(lo >= 2.0 && hi > lo) {
        return Err(Error::Argument(format!("invalid search range ({lo}, {hi}]")));
    }
    // the open lower end: n′ = 2 collapses every order onto m = 0
    let lo_open = lo + 1e-6 * (hi - lo).max(1.0);

    let objective = |n_eff: f64| -> f64 {
        match normalized_curve(n_eff, &rhos) {
            Ok(c) => c
                .f_hat
                .iter()
                .zip(&log_j)
                .map(|(f, lj)| (f.max(f64::MIN_POSITIVE).ln() - lj).powi(2))
                .sum(),
            Err(_) => f64::INFINITY,
        }
    };

    let grid: Vec<f64> = (0..=SCAN_POINTS)
        .map(|k| lo_open + (hi - lo_open) * k as f64 / SCAN_POINTS as f64)
        .collect();
    let values: Vec<f64> = grid.iter().map(|&x| objective(x)).collect();
    let best = values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(k, _)| k)
        .unwrap_or(0);
    let mut a = grid[best.saturating_sub(1)];
    let mut b = grid[(best + 1).min(SCAN_POINTS)];

    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (objective(c), objective(d));
    while (b - a).abs() > 1e-10 * (1.0 + a.abs()) {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = objective(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = objective(d);
        }
    }
    let mut n_eff = 0.5 * (a + b);
    let mut best_val = objective(n_eff);
    // endpoints are not visited by the golden interior points
    for edge in [lo_open, hi] {
        let v = objective(edge);
        if v < best_val {
            best_val = v;
            n_eff = edge;
        }
    }

    let span = hi - lo;
    let at_boundary = (n_eff - lo_open).abs() <= 1e-4 * span || (hi - n_eff).abs() <= 1e-4 * span;
    if at_boundary {
        let msg = format!(
            "effective dimension {n_eff:.4} sits on the search boundary ({lo}, {hi}]; the profile has no interior fit"
        );
        warn!("{msg}");
        warnings.push(msg);
    }
    let curve = normalized_curve(n_eff, &rhos)?;
    Ok(EffectiveDimensionFit {
        n_eff,
        fit_error: (best_val / rhos.len() as f64).sqrt(),
        search_range: (lo, hi),
        at_boundary,
        warnings,
        relative_orders: rhos,
        j_hat,
        f_hat: curve.f_hat,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    // direct evaluation with an exact integer binomial
    fn f_direct(n: usize, m: usize) -> f64 {
        ((n - m - 1) as f64 / (n * (n - 1)) as f64) / binomial(n - 2, m).sqrt()
    }

    #[test]
    fn strength_examples() {
        assert!((training_strength(10.0, 0.0).unwrap() - 0.1).abs() < 1e-14);
        let f4 = training_strength(10.0, 4.0).unwrap();
        assert!((f4 - (5.0 / 90.0) / 70f64.sqrt()).abs() < 1e-14);
        assert!((f4 - 0.0066401).abs() < 1e-7);
        assert!((training_strength(10.0, 8.0).unwrap() - 1.0 / 90.0).abs() < 1e-14);
        assert!(training_strength(10.0, 9.0).is_err());
        assert!(training_strength(10.0, -0.5).is_err());
    }

    #[test]
    fn strength_matches_integer_binomials() {
        for n in 2..=40 {
            for m in 0..=n - 2 {
                let a = training_strength(n as f64, m as f64).unwrap();
                let b = f_direct(n, m);
                assert!((a - b).abs() <= 1e-12 * b, "n={n} m={m}");
            }
        }
    }

    #[test]
    fn strength_times_root_binomial_is_linear() {
        let n = 17usize;
        let scaled: Vec<f64> = (0..=n - 2)
            .map(|m| training_strength(n as f64, m as f64).unwrap() * binomial(n - 2, m).sqrt())
            .collect();
        for w in scaled.windows(3) {
            assert!((w[0] - 2.0 * w[1] + w[2]).abs() < 1e-14);
        }
    }

    #[test]
    fn curve_examples() {
        let c = normalized_curve(20.0, &[0.0, 0.5, 10.0 / 18.0, 1.0]).unwrap();
        assert_eq!(c.f_hat[0], 1.0);
        // m = 9 at ρ = 0.5
        let at_half = (10.0 / 380.0) / binomial(18, 9).sqrt() / (19.0 / 380.0);
        assert!((c.f_hat[1] - at_half).abs() < 1e-12);
        // m = 10: (9/380)/√C(18,10) ÷ (19/380) ≈ 2.26e−3
        assert!((c.f_hat[2] - 2.2645e-3).abs() < 1e-6);
        assert!(c.f_hat.iter().all(|&f| f > 0.0));
        assert!(normalized_curve(2.0, &[0.0]).is_err());
    }

    #[test]
    fn curve_is_u_shaped() {
        let rhos: Vec<f64> = (0..=100).map(|k| k as f64 / 100.0).collect();
        let c = normalized_curve(14.0, &rhos).unwrap();
        let argmin = c.f_hat.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert!(argmin > 0 && argmin < 100);
        assert!(c.f_hat[..=argmin].windows(2).all(|w| w[1] < w[0]));
        assert!(c.f_hat[argmin..].windows(2).all(|w| w[1] > w[0]));
        assert!((rhos[argmin] - 0.5).abs() < 0.15);
    }

    #[test]
    fn theorem2_weight_examples() {
        let w = |m: usize| theorem2_weight(10, 0.2, 0.5, m as f64).unwrap();
        assert!((w(0) - 1.0 / 60.0).abs() < 1e-15);
        assert!((w(1) - 3.0 / 90.0).abs() < 1e-15);
        assert!((w(2) - 2.0 / 90.0).abs() < 1e-15);
        assert!((w(3) - 1.0 / 90.0).abs() < 1e-15);
        for m in 4..=8 {
            assert_eq!(w(m), 0.0);
        }
        assert_eq!(theorem2_weight(10, 0.3, 0.7, 8.0).unwrap(), 0.0);
        assert!((theorem2_weight(10, 0.3, 1.0, 8.0).unwrap() - 1.0 / 90.0).abs() < 1e-15);
        assert!(theorem2_weight(10, 0.5, 0.5, 0.0).is_err());
        // r1 = 0 drops the first branch
        assert!((theorem2_weight(10, 0.0, 0.5, 0.0).unwrap() - 4.0 / 90.0).abs() < 1e-15);
    }

    #[test]
    fn theorem2_weight_jump_at_branch_boundary() {
        // both branches agree in slope; the jump at m = r1·n − 2 is (r2/r1 − 1)/(n(n−1))
        for n in [8usize, 10, 12, 20] {
            for (r1, r2) in [(0.25, 0.5), (0.5, 1.0), (0.2, 0.6), (0.2, 0.5)] {
                let k = (r1 * n as f64).round() as usize;
                if k < 2 || k as f64 != r1 * n as f64 {
                    continue;
                }
                let a = theorem2_weight(n, r1, r2, (k - 2) as f64).unwrap();
                let b = theorem2_weight(n, r1, r2, (k - 1) as f64).unwrap();
                let jump = (r2 / r1 - 1.0) / (n * (n - 1)) as f64;
                assert!((b - a - jump).abs() <= 1e-15, "n={n} r=({r1},{r2})");
            }
        }
    }

    #[test]
    fn theorem1_ratio_and_zero_sigma() {
        let ratio = (6.0 / 11.0) / 252f64.sqrt();
        assert!((ratio - 0.03436).abs() < 1e-5);
        let sim = simulate_theorem1(6, 0.0, 100, 1, Exec::Sequential).unwrap();
        assert!(sim.rows.iter().all(|r| r.empirical_std == 0.0));
        let sim = simulate_theorem1(6, 1.0, 100, 1, Exec::Sequential).unwrap();
        assert!(sim.rows.iter().all(|r| r.empirical_std > 0.0));
        assert!(simulate_theorem1(15, 1.0, 100, 1, Exec::Sequential).is_err());
    }

    #[test]
    fn theorem1_parallel_matches_sequential() {
        let a = simulate_theorem1(8, 1.0, 5000, 3, Exec::Sequential).unwrap();
        let b = simulate_theorem1(8, 1.0, 5000, 3, Exec::Parallel).unwrap();
        for (x, y) in a.rows.iter().zip(&b.rows) {
            assert_eq!(x.empirical_std, y.empirical_std);
        }
    }
}
