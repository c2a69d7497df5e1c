//! Cooperative games over input variables.
//!
//! A game assigns a real value `v(S)` to every coalition `S`. Masked-model
//! games evaluate a classifier on an input whose variables outside `S` are
//! replaced by baseline values; analytic games have closed forms and serve
//! as oracles.

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::coalition::{Coalition, EXACT_LIMIT};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::neural::MlpModel;

/// Lower probability clamp applied before taking log-odds.
pub const PROB_EPS: f64 = 1e-12;

/// The value-function contract. Implementations must be pure: equal
/// coalitions give bit-identical values, from any thread.
pub trait Game: Sync {
    fn n(&self) -> usize;

    fn value(&self, s: Coalition) -> f64;

    /// Batched evaluation; the default maps `value`.
    fn values(&self, coalitions: &[Coalition]) -> Vec<f64> {
        coalitions.iter().map(|&s| self.value(s)).collect()
    }
}

impl<G: Game + ?Sized> Game for &G {
    fn n(&self) -> usize {
        (**self).n()
    }
    fn value(&self, s: Coalition) -> f64 {
        (**self).value(s)
    }
    fn values(&self, coalitions: &[Coalition]) -> Vec<f64> {
        (**self).values(coalitions)
    }
}

/// Keeps `x[i]` for `i ∈ S` and substitutes `baseline[i]` elsewhere.
pub fn mask_input(x: &[f64], s: Coalition, baseline: &[f64]) -> Result<Vec<f64>> {
    if x.len() != s.n() || baseline.len() != s.n() {
        return Err(Error::Dimension(format!(
            "input {} / baseline {} / coalition n {}",
            x.len(),
            baseline.len(),
            s.n()
        )));
    }
    Ok(x.iter()
        .zip(baseline)
        .enumerate()
        .map(|(i, (&xi, &bi))| if s.contains(i) { xi } else { bi })
        .collect())
}

/// `ln(p / (1 - p))` with `p` clamped to `[ε, 1 - ε]`.
pub fn log_odds(p: f64) -> Result<f64> {
    if p.is_nan() {
        return Err(Error::Numeric("log-odds of NaN".into()));
    }
    let bound = log_odds_bound();
    if p >= 1.0 - PROB_EPS {
        return Ok(bound);
    }
    if p <= PROB_EPS {
        return Ok(-bound);
    }
    Ok((p / (1.0 - p)).ln().clamp(-bound, bound))
}

/// Largest magnitude `log_odds` can return.
pub fn log_odds_bound() -> f64 {
    ((1.0 - PROB_EPS) / PROB_EPS).ln()
}

/// `v(S ∪ {i,j}) − v(S ∪ {i}) − v(S ∪ {j}) + v(S)`.
pub fn delta_v<G: Game + ?Sized>(game: &G, i: usize, j: usize, s: Coalition) -> Result<f64> {
    check_pair(game.n(), i, j)?;
    if s.contains(i) || s.contains(j) {
        return Err(Error::Argument(format!(
            "context {s:?} must exclude the pair ({i}, {j})"
        )));
    }
    Ok(delta_v_unchecked(game, i, j, s))
}

#[inline]
pub(crate) fn delta_v_unchecked<G: Game + ?Sized>(game: &G, i: usize, j: usize, s: Coalition) -> f64 {
    game.value(s.with(i).with(j)) - game.value(s.with(i)) - game.value(s.with(j)) + game.value(s)
}

pub(crate) fn check_pair(n: usize, i: usize, j: usize) -> Result<()> {
    if i == j {
        return Err(Error::Argument(format!(
            "pair needs distinct variables, got ({i}, {i})"
        )));
    }
    if i >= n || j >= n {
        return Err(Error::Argument(format!("pair ({i}, {j}) out of range for n = {n}")));
    }
    Ok(())
}

/// Closed-form games used as oracles in tests and diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AnalyticGame {
    /// `v(S) = offset + Σ_{k∈S} a_k`.
    Additive { offset: f64, coefficients: Vec<f64> },
    /// `v(S) = scale · 1[{i,j} ⊆ S]`.
    PairAnd { n: usize, i: usize, j: usize, scale: f64 },
    /// `v(S) = |S| mod 2`.
    Parity { n: usize },
    /// `v ≡ c`.
    Constant { n: usize, value: f64 },
    /// Arbitrary value per coalition, indexed by mask.
    Table { n: usize, values: Vec<f64> },
}

impl AnalyticGame {
    pub fn random_table<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Self> {
        if n > 20 {
            return Err(Error::Capacity(format!("random table with n = {n}")));
        }
        let values = (0..1usize << n).map(|_| rng.random_range(-1.0..1.0)).collect();
        Ok(AnalyticGame::Table { n, values })
    }

    /// Tabulates any game with n ≤ 20.
    pub fn table_of<G: Game + ?Sized>(game: &G) -> Result<Self> {
        let n = game.n();
        if n > 20 {
            return Err(Error::Capacity(format!("table of a game with n = {n}")));
        }
        let coalitions: Vec<_> = (0..1u64 << n).map(|b| Coalition::from_bits_unchecked(n, b)).collect();
        Ok(AnalyticGame::Table {
            n,
            values: game.values(&coalitions),
        })
    }

    /// Pointwise sum of two table games of equal size.
    pub fn sum(&self, other: &Self) -> Result<Self> {
        match (self, other) {
            (AnalyticGame::Table { n, values: a }, AnalyticGame::Table { n: m, values: b }) if n == m => {
                Ok(AnalyticGame::Table {
                    n: *n,
                    values: a.iter().zip(b).map(|(x, y)| x + y).collect(),
                })
            }
            _ => Err(Error::Argument("sum is defined for equally sized table games".into())),
        }
    }
}

impl Game for AnalyticGame {
    fn n(&self) -> usize {
        match self {
            AnalyticGame::Additive { coefficients, .. } => coefficients.len(),
            AnalyticGame::PairAnd { n, .. }
            | AnalyticGame::Parity { n }
            | AnalyticGame::Constant { n, .. }
            | AnalyticGame::Table { n, .. } => *n,
        }
    }

    fn value(&self, s: Coalition) -> f64 {
        match self {
            AnalyticGame::Additive { offset, coefficients } => {
                offset + s.indices().map(|k| coefficients[k]).sum::<f64>()
            }
            AnalyticGame::PairAnd { i, j, scale, .. } => {
                if s.contains(*i) && s.contains(*j) {
                    *scale
                } else {
                    0.0
                }
            }
            AnalyticGame::Parity { .. } => (s.size() % 2) as f64,
            AnalyticGame::Constant { value, .. } => *value,
            AnalyticGame::Table { values, .. } => values[s.bits() as usize],
        }
    }
}

/// A game given by a closure.
pub struct FnGame<F> {
    n: usize,
    f: F,
}

impl<F: Fn(Coalition) -> f64 + Sync> FnGame<F> {
    pub fn new(n: usize, f: F) -> Self {
        FnGame { n, f }
    }
}

impl<F: Fn(Coalition) -> f64 + Sync> Game for FnGame<F> {
    fn n(&self) -> usize {
        self.n
    }
    fn value(&self, s: Coalition) -> f64 {
        (self.f)(s)
    }
}

/// Every coalition value of a game, evaluated once.
#[derive(Clone, Debug)]
pub struct ValueTable {
    n: usize,
    values: Vec<f64>,
}

const TABLE_CHUNK: usize = 512;

impl ValueTable {
    pub fn tabulate<G: Game + ?Sized>(game: &G, exec: Exec) -> Result<Self> {
        let n = game.n();
        if n > EXACT_LIMIT {
            return Err(Error::Capacity(format!(
                "tabulating 2^{n} coalitions exceeds the exact-mode limit of {EXACT_LIMIT} variables"
            )));
        }
        let total = 1usize << n;
        let chunks = total.div_ceil(TABLE_CHUNK);
        let parts = exec.map_range(chunks, |c| {
            let lo = c * TABLE_CHUNK;
            let hi = (lo + TABLE_CHUNK).min(total);
            let batch: Vec<_> = (lo..hi).map(|b| Coalition::from_bits_unchecked(n, b as u64)).collect();
            game.values(&batch)
        });
        Ok(ValueTable {
            n,
            values: parts.concat(),
        })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }
}

impl Game for ValueTable {
    fn n(&self) -> usize {
        self.n
    }
    #[inline]
    fn value(&self, s: Coalition) -> f64 {
        self.values[s.bits() as usize]
    }
}

/// What scalar a masked-model game reports.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputMode {
    /// `ln P(y*|x_S) / (1 − P(y*|x_S))`, clamped like [`log_odds`].
    LogOdds,
    /// The pre-softmax logit of the target class.
    RawLogit,
}

/// `v(S) = f(model(x_S))` with `x_S` the baseline-masked input.
pub struct MaskedModelGame<'a> {
    model: &'a MlpModel,
    x: Vec<f64>,
    baseline: Vec<f64>,
    target: usize,
    mode: OutputMode,
}

impl<'a> MaskedModelGame<'a> {
    pub fn new(model: &'a MlpModel, x: Vec<f64>, baseline: Vec<f64>, target: usize, mode: OutputMode) -> Result<Self> {
        let n = model.input_dim();
        if x.len() != n || baseline.len() != n {
            return Err(Error::Dimension(format!(
                "model expects {n} inputs, got sample {} and baseline {}",
                x.len(),
                baseline.len()
            )));
        }
        if n > crate::coalition::MAX_VARIABLES {
            return Err(Error::Capacity(format!("{n} variables exceed the coalition width")));
        }
        if target >= model.output_dim() {
            return Err(Error::Argument(format!(
                "target class {target} with {} outputs",
                model.output_dim()
            )));
        }
        Ok(MaskedModelGame {
            model,
            x,
            baseline,
            target,
            mode,
        })
    }

    fn score(&self, logits: ndarray::ArrayView1<f64>) -> f64 {
        match self.mode {
            OutputMode::RawLogit => logits[self.target],
            OutputMode::LogOdds => target_log_odds(logits, self.target),
        }
    }
}

/// Stable log-odds of class `target` straight from logits:
/// `z_t − logsumexp(z_{c≠t})`, clamped to the range of [`log_odds`].
pub fn target_log_odds(logits: ndarray::ArrayView1<f64>, target: usize) -> f64 {
    let others = logits.iter().enumerate().filter(|&(c, _)| c != target).map(|(_, &z)| z);
    let max = others.clone().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + others.map(|z| (z - max).exp()).sum::<f64>().ln();
    let bound = log_odds_bound();
    (logits[target] - lse).clamp(-bound, bound)
}

impl Game for MaskedModelGame<'_> {
    fn n(&self) -> usize {
        self.x.len()
    }

    fn value(&self, s: Coalition) -> f64 {
        self.values(&[s])[0]
    }

    fn values(&self, coalitions: &[Coalition]) -> Vec<f64> {
        let n = self.x.len();
        let mut batch = Array2::<f64>::zeros((coalitions.len(), n));
        for (mut row, s) in batch.rows_mut().into_iter().zip(coalitions) {
            for k in 0..n {
                row[k] = if s.contains(k) { self.x[k] } else { self.baseline[k] };
            }
        }
        let logits = self.model.forward_unchecked(batch.view());
        logits.rows().into_iter().map(|z| self.score(z)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use proptest::prelude::*;

    #[test]
    fn mask_examples() {
        let s = Coalition::from_indices(3, &[0, 2]).unwrap();
        assert_eq!(mask_input(&[3., 4., 5.], s, &[0., 0., 0.]).unwrap(), vec![3., 0., 5.]);
        let x = [1.5, -2.0, 0.25];
        let b = [0.1, 0.2, 0.3];
        assert_eq!(mask_input(&x, Coalition::full(3), &b).unwrap(), x.to_vec());
        assert_eq!(mask_input(&x, Coalition::empty(3), &b).unwrap(), b.to_vec());
        assert!(matches!(
            mask_input(&x, Coalition::full(4), &b),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn log_odds_examples() {
        assert_eq!(log_odds(0.5).unwrap(), 0.0);
        let expected = (0.9f64 / 0.1).ln();
        assert!((log_odds(0.9).unwrap() - expected).abs() < 1e-12);
        assert!((log_odds(0.9).unwrap() - 2.197_224_577).abs() < 1e-8);
        let top = log_odds(1.0).unwrap();
        assert!(top.is_finite());
        assert_eq!(top, ((1.0 - PROB_EPS) / PROB_EPS).ln());
        assert!(log_odds(f64::NAN).is_err());
    }

    #[test]
    fn delta_v_examples() {
        let n = 5;
        let additive = AnalyticGame::Additive {
            offset: 0.25,
            coefficients: vec![1., -2., 0.5, 4., 3.],
        };
        let and = AnalyticGame::PairAnd {
            n,
            i: 1,
            j: 3,
            scale: 1.0,
        };
        let parity = AnalyticGame::Parity { n };
        for bits in 0..32u64 {
            let s = Coalition::from_bits(n, bits).unwrap();
            if s.contains(1) || s.contains(3) {
                continue;
            }
            assert_eq!(delta_v(&additive, 1, 3, s).unwrap(), 0.0);
            assert_eq!(delta_v(&and, 1, 3, s).unwrap(), 1.0);
        }
        // v({i,j}) − v({i}) − v({j}) + v(∅) = 0 − 1 − 1 + 0
        assert_eq!(delta_v(&parity, 0, 1, Coalition::empty(n)).unwrap(), -2.0);
    }

    #[test]
    fn delta_v_rejects_bad_arguments() {
        let g = AnalyticGame::Parity { n: 4 };
        let s = Coalition::from_indices(4, &[2]).unwrap();
        assert!(delta_v(&g, 1, 1, Coalition::empty(4)).is_err());
        assert!(delta_v(&g, 2, 1, s).is_err());
        assert!(delta_v(&g, 1, 2, s).is_err());
    }

    #[test]
    fn value_table_matches_source() {
        let mut r = rng::stream(3, &[]);
        let g = AnalyticGame::random_table(7, &mut r).unwrap();
        let t = ValueTable::tabulate(&g, Exec::Parallel).unwrap();
        for b in 0..128u64 {
            let s = Coalition::from_bits(7, b).unwrap();
            assert_eq!(t.value(s), g.value(s));
        }
    }

    #[test]
    fn stable_log_odds_agrees_with_probability_form() {
        let z = ndarray::array![0.3, -1.2, 2.0];
        let m = 2.0f64;
        let denom: f64 = z.iter().map(|v| (v - m).exp()).sum();
        let p0 = (z[0] - m).exp() / denom;
        assert!((target_log_odds(z.view(), 0) - log_odds(p0).unwrap()).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn delta_v_is_symmetric(seed in 0u64..500, ctx in 0u64..64) {
            let mut r = rng::stream(seed, &[]);
            let g = AnalyticGame::random_table(8, &mut r).unwrap();
            let s = Coalition::from_bits(8, ctx << 2).unwrap();
            prop_assert_eq!(delta_v(&g, 0, 1, s).unwrap(), delta_v(&g, 1, 0, s).unwrap());
        }

        #[test]
        fn log_odds_antisymmetric_and_increasing(p in 1e-9f64..0.5, d in 1e-6f64..0.4) {
            let a = log_odds(p).unwrap();
            let b = log_odds(1.0 - p).unwrap();
            prop_assert!((a + b).abs() <= 1e-9 * a.abs().max(1.0));
            prop_assert!(log_odds(p + d).unwrap() > a);
        }
    }
}
