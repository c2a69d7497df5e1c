//! Brute-force interaction oracles.
//!
//! Everything here enumerates contexts exhaustively, so it is limited to
//! small variable counts. These values are the ground truth the sampling
//! estimators and the property tests are checked against.

use serde::{Deserialize, Serialize};

use crate::coalition::{binomial, enumerate_subsets_of_size, Coalition, EXACT_LIMIT};
use crate::error::{Error, Result};
use crate::game::{check_pair, delta_v_unchecked, Game};
use crate::theory::theorem2_weight;

/// Variable limit for the Shapley-value enumeration over `2^(n−1)` subsets.
pub const SHAPLEY_LIMIT: usize = 20;

fn check_capacity(n: usize, limit: usize) -> Result<()> {
    if n > limit {
        return Err(Error::Capacity(format!(
            "exact enumeration over {n} variables exceeds the limit of {limit}; use sampling"
        )));
    }
    Ok(())
}

fn check_order(n: usize, m: usize) -> Result<()> {
    if n < 2 || m > n - 2 {
        return Err(Error::Argument(format!(
            "order {m} outside [0, {}]",
            n.saturating_sub(2)
        )));
    }
    Ok(())
}

/// Rounds half up, the convention for turning ratios into subset sizes.
pub fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor().max(0.0) as usize
}

/// `I^(m)(i,j)`: mean of `Δv(i,j,S)` over all `S ⊆ N∖{i,j}` with `|S| = m`.
pub fn interaction_exact<G: Game + ?Sized>(game: &G, i: usize, j: usize, m: usize) -> Result<f64> {
    let n = game.n();
    check_pair(n, i, j)?;
    check_order(n, m)?;
    check_capacity(n, EXACT_LIMIT)?;
    let pool = Coalition::full(n).without(i).without(j);
    let mut sum = 0.0;
    let mut count = 0usize;
    for s in enumerate_subsets_of_size(pool, m)? {
        sum += delta_v_unchecked(game, i, j, s);
        count += 1;
    }
    Ok(sum / count as f64)
}

/// `I^(m)(i,j)` for every order `m = 0..=n−2` in one pass over the
/// `2^(n−2)` contexts.
pub fn interactions_all_orders<G: Game + ?Sized>(game: &G, i: usize, j: usize) -> Result<Vec<f64>> {
    let n = game.n();
    check_pair(n, i, j)?;
    check_capacity(n, EXACT_LIMIT)?;
    let pool = Coalition::full(n).without(i).without(j);
    let mut sums = vec![0.0; n - 1];
    for s in pool.subsets() {
        sums[s.size()] += delta_v_unchecked(game, i, j, s);
    }
    Ok(sums
        .into_iter()
        .enumerate()
        .map(|(m, total)| total / binomial(n - 2, m))
        .collect())
}

/// Shapley value of variable `i` by full enumeration.
pub fn shapley_value_exact<G: Game + ?Sized>(game: &G, i: usize) -> Result<f64> {
    let n = game.n();
    if i >= n {
        return Err(Error::Argument(format!("variable {i} out of range for n = {n}")));
    }
    check_capacity(n, SHAPLEY_LIMIT)?;
    // |S|!(n−|S|−1)!/n! = 1 / (n · C(n−1, |S|))
    let weights: Vec<f64> = (0..n).map(|s| 1.0 / (n as f64 * binomial(n - 1, s))).collect();
    let pool = Coalition::full(n).without(i);
    Ok(pool
        .subsets()
        .map(|s| weights[s.size()] * (game.value(s.with(i)) - game.value(s)))
        .sum())
}

/// Shapley interaction index from its own weighted-sum definition,
/// `Σ_{S⊆N∖{i,j}} |S|!(n−|S|−2)!/(n−1)! · Δv(i,j,S)`.
pub fn shapley_interaction_index<G: Game + ?Sized>(game: &G, i: usize, j: usize) -> Result<f64> {
    let n = game.n();
    check_pair(n, i, j)?;
    check_capacity(n, EXACT_LIMIT)?;
    // |S|!(n−2−|S|)!/(n−1)! = 1 / ((n−1) · C(n−2, |S|))
    let weights: Vec<f64> = (0..n - 1)
        .map(|s| 1.0 / ((n - 1) as f64 * binomial(n - 2, s)))
        .collect();
    let pool = Coalition::full(n).without(i).without(j);
    Ok(pool
        .subsets()
        .map(|s| weights[s.size()] * delta_v_unchecked(game, i, j, s))
        .sum())
}

/// `w^(m) = (n−1−m) / (n(n−1))`.
pub fn efficiency_weight(n: usize, m: usize) -> Result<f64> {
    if n < 2 {
        return Err(Error::Argument(format!("efficiency weights need n ≥ 2, got {n}")));
    }
    check_order(n, m)?;
    Ok((n - 1 - m) as f64 / (n * (n - 1)) as f64)
}

/// Symmetric matrix of `I^(m)(i,j)` over all pairs; the diagonal is NaN.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InteractionMatrix {
    pub n: usize,
    pub order: usize,
    pub values: Vec<Vec<f64>>,
}

pub fn interaction_matrix<G: Game + ?Sized>(game: &G, m: usize) -> Result<InteractionMatrix> {
    let n = game.n();
    check_order(n, m)?;
    let mut values = vec![vec![f64::NAN; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let v = interaction_exact(game, i, j, m)?;
            values[i][j] = v;
            values[j][i] = v;
        }
    }
    Ok(InteractionMatrix { n, order: m, values })
}

/// The terms of `v(N) = v(∅) + Σ_i μ_i + Σ_m w^(m) Σ_{i≠j} I^(m)(i,j)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EfficiencyComponents {
    pub v_empty: f64,
    pub v_full: f64,
    /// `μ_i = v({i}) − v(∅)`.
    pub mu: Vec<f64>,
    /// `Σ_{i≠j} I^(m)(i,j)` over ordered pairs, for `m = 0..=n−2`.
    pub order_sums: Vec<f64>,
    pub reconstruction: f64,
}

impl EfficiencyComponents {
    pub fn residual(&self) -> f64 {
        self.reconstruction - self.v_full
    }
}

/// Sums of `I^(m)` over ordered pairs (each unordered pair counted twice).
pub fn ordered_pair_order_sums<G: Game + ?Sized>(game: &G) -> Result<Vec<f64>> {
    let n = game.n();
    check_capacity(n, EXACT_LIMIT)?;
    let mut sums = vec![0.0; n.saturating_sub(1)];
    for i in 0..n {
        for j in i + 1..n {
            for (m, v) in interactions_all_orders(game, i, j)?.into_iter().enumerate() {
                sums[m] += 2.0 * v;
            }
        }
    }
    Ok(sums)
}

pub fn efficiency_decomposition<G: Game + ?Sized>(game: &G) -> Result<EfficiencyComponents> {
    let n = game.n();
    if n < 2 {
        return Err(Error::Argument(format!("decomposition needs n ≥ 2, got {n}")));
    }
    check_capacity(n, EXACT_LIMIT)?;
    let empty = Coalition::empty(n);
    let v_empty = game.value(empty);
    let v_full = game.value(Coalition::full(n));
    let mu: Vec<f64> = (0..n).map(|i| game.value(empty.with(i)) - v_empty).collect();
    let order_sums = ordered_pair_order_sums(game)?;
    let interaction_part: f64 = order_sums
        .iter()
        .enumerate()
        .map(|(m, s)| efficiency_weight(n, m).map(|w| w * s))
        .sum::<Result<f64>>()?;
    let reconstruction = v_empty + mu.iter().sum::<f64>() + interaction_part;
    Ok(EfficiencyComponents {
        v_empty,
        v_full,
        mu,
        order_sums,
        reconstruction,
    })
}

/// `Δv(r1, r2) = v(S2) − (r2/r1) v(S1)`; with `r1 = 0` this is
/// `v(S2) − v(∅)`.
pub fn delta_v_pair<G: Game + ?Sized>(game: &G, s1: Coalition, s2: Coalition, r1: f64, r2: f64) -> Result<f64> {
    if !(s1.is_subset_of(s2) && s1 != s2) {
        return Err(Error::Argument(format!("{s1:?} must be a proper subset of {s2:?}")));
    }
    if !(0.0..=1.0).contains(&r1) || !(0.0..=1.0).contains(&r2) || r1 >= r2 {
        return Err(Error::Argument(format!("need 0 ≤ r1 < r2 ≤ 1, got ({r1}, {r2})")));
    }
    if r1 == 0.0 {
        Ok(game.value(s2) - game.value(Coalition::empty(game.n())))
    } else {
        Ok(game.value(s2) - r2 / r1 * game.value(s1))
    }
}

fn integral_size(r: f64, n: usize) -> Result<usize> {
    let k = round_half_up(r * n as f64);
    if (r * n as f64 - k as f64).abs() > 1e-9 {
        return Err(Error::Argument(format!(
            "r·n = {} is not integral for r = {r}, n = {n}",
            r * n as f64
        )));
    }
    Ok(k)
}

/// Expected `Δv(r1, r2)` over uniformly drawn nested `(S1, S2)`, expressed
/// through exact interactions and the `w̃^(m)` weights.
///
/// For `r1 > 0` the singleton terms cancel and the constant is
/// `(1 − r2/r1) v(∅)`. For `r1 = 0` the difference `v(S2) − v(∅)` keeps
/// its singleton part `r2 Σ_i μ_i`.
pub fn theorem2_rhs<G: Game + ?Sized>(game: &G, r1: f64, r2: f64) -> Result<f64> {
    let n = game.n();
    check_capacity(n, EXACT_LIMIT)?;
    if !(0.0..=1.0).contains(&r1) || !(0.0..=1.0).contains(&r2) || r1 >= r2 {
        return Err(Error::Argument(format!("need 0 ≤ r1 < r2 ≤ 1, got ({r1}, {r2})")));
    }
    integral_size(r1, n)?;
    integral_size(r2, n)?;
    let empty = Coalition::empty(n);
    let v_empty = game.value(empty);
    let order_sums = ordered_pair_order_sums(game)?;
    let mut total = 0.0;
    for (m, s) in order_sums.iter().enumerate() {
        total += theorem2_weight(n, r1, r2, m as f64)? * s;
    }
    if r1 > 0.0 {
        total += (1.0 - r2 / r1) * v_empty;
    } else {
        let mu_sum: f64 = (0..n).map(|i| game.value(empty.with(i)) - v_empty).sum();
        total += r2 * mu_sum;
    }
    Ok(total)
}
