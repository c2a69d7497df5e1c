//! Sampling estimates of multi-order interactions and the order profile
//! `J^(m)`.
//!
//! A [`SamplingPlan`] fixes which samples, pairs and orders are measured and
//! how many contexts are drawn per (pair, order). The plan is generated
//! sequentially from the run seed; contexts are drawn at evaluation time
//! from streams keyed by (sample, pair, order), so the estimate does not
//! depend on how the work is scheduled.

use std::collections::HashSet;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::coalition::{binomial, enumerate_subsets_of_size, Coalition, MAX_VARIABLES};
use crate::data::GridSpec;
use crate::error::{Error, Result};
use crate::exact::round_half_up;
use crate::exec::Exec;
use crate::game::{check_pair, Game, ValueTable};
use crate::rng;

/// Relative orders sampled when not every order is measured:
/// `0, 0.05, 0.1, 0.2, …, 0.9, 0.95, 1.0`.
pub const DEFAULT_RELATIVE_ORDERS: [f64; 13] = [0.0, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 1.0];

/// Games at or below this size are tabulated once per sample before
/// estimation; the table is cheaper than four evaluations per context.
pub const TABULATE_LIMIT: usize = 16;

/// Variable counts at or below this measure every pair of every sample.
pub const ALL_PAIRS_LIMIT: usize = 12;

const STREAM_PLAN: u64 = 0x706c_616e;
const STREAM_CONTEXTS: u64 = 0x6374_7873;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "values", rename_all = "snake_case")]
pub enum OrderSelection {
    /// Every order `0..=n−2`.
    All,
    /// Relative orders mapped through [`order_from_relative`].
    Relative(Vec<f64>),
}

impl Default for OrderSelection {
    fn default() -> Self {
        OrderSelection::Relative(DEFAULT_RELATIVE_ORDERS.to_vec())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanConfig {
    pub n: usize,
    /// Number of candidate samples (games) available.
    pub num_samples: usize,
    /// Upper bound on measured samples; ignored when every sample is taken.
    pub max_samples: usize,
    /// `None` measures every pair.
    pub pairs_per_sample: Option<usize>,
    pub orders: OrderSelection,
    /// Contexts per (pair, order). Orders with fewer distinct contexts are
    /// enumerated exactly.
    pub contexts: usize,
    /// Chebyshev radius restricting pairs; requires `grid`.
    pub radius: Option<usize>,
    pub grid: Option<GridSpec>,
}

impl PlanConfig {
    pub fn tabular(n: usize, num_samples: usize, contexts: usize) -> Self {
        PlanConfig {
            n,
            num_samples,
            max_samples: num_samples,
            pairs_per_sample: None,
            orders: OrderSelection::All,
            contexts,
            radius: None,
            grid: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplingPlan {
    pub seed: u64,
    pub n: usize,
    pub samples: Vec<usize>,
    /// Pairs measured for each entry of `samples`.
    pub pairs: Vec<Vec<(usize, usize)>>,
    pub orders: Vec<usize>,
    pub relative_orders: Vec<f64>,
    pub contexts: usize,
    pub radius: Option<usize>,
}

impl SamplingPlan {
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("plan serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    /// True when every (pair, order) is enumerated rather than sampled.
    pub fn is_exact(&self) -> bool {
        self.n >= 2
            && self
                .orders
                .iter()
                .all(|&m| self.contexts as f64 >= binomial(self.n - 2, m))
    }
}

/// `m = clamp(round(ρ n), 0, n−2)`.
pub fn order_from_relative(n: usize, rho: f64) -> usize {
    round_half_up(rho.clamp(0.0, 1.0) * n as f64).min(n.saturating_sub(2))
}

/// Position of order `m` on the `[0, 1]` axis, `m / (n−2)`.
pub fn relative_position(n: usize, m: usize) -> f64 {
    if n <= 2 {
        0.0
    } else {
        m as f64 / (n - 2) as f64
    }
}

pub fn build_plan(config: &PlanConfig, seed: u64) -> Result<SamplingPlan> {
    let n = config.n;
    if !(2..=MAX_VARIABLES).contains(&n) {
        return Err(Error::Config(format!("plan needs 2 ≤ n ≤ 64, got {n}")));
    }
    if config.num_samples == 0 || config.max_samples == 0 || config.contexts == 0 {
        return Err(Error::Config("sample, and context counts must be positive".into()));
    }
    if config.pairs_per_sample == Some(0) {
        return Err(Error::Config("pairs per sample must be positive".into()));
    }
    if config.radius.is_some() && config.grid.is_none() {
        return Err(Error::Config("a pair radius needs a grid game".into()));
    }
    if let Some(g) = &config.grid {
        if g.len() != n {
            return Err(Error::Config(format!(
                "grid {}x{} does not cover n = {n}",
                g.height, g.width
            )));
        }
    }

    let mut orders: Vec<usize> = match &config.orders {
        OrderSelection::All => (0..=n - 2).collect(),
        OrderSelection::Relative(rhos) => {
            if rhos.is_empty() {
                return Err(Error::Config("empty order list".into()));
            }
            if let Some(r) = rhos.iter().find(|r| !(0.0..=1.0).contains(*r)) {
                return Err(Error::Config(format!("relative order {r} outside [0, 1]")));
            }
            rhos.iter().map(|&r| order_from_relative(n, r)).collect()
        }
    };
    orders.sort_unstable();
    orders.dedup();
    let relative_orders = orders.iter().map(|&m| relative_position(n, m)).collect();

    let mut r = rng::stream(seed, &[STREAM_PLAN]);
    let small = n <= ALL_PAIRS_LIMIT && config.grid.is_none();
    let samples: Vec<usize> = if small || config.max_samples >= config.num_samples {
        (0..config.num_samples).collect()
    } else {
        let mut s = index::sample(&mut r, config.num_samples, config.max_samples).into_vec();
        s.sort_unstable();
        s
    };

    let candidates: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .filter(|&(i, j)| match (config.radius, &config.grid) {
            (Some(rad), Some(g)) => g.chebyshev(i, j) <= rad,
            _ => true,
        })
        .collect();
    if candidates.is_empty() {
        return Err(Error::Config("no pair satisfies the radius constraint".into()));
    }
    let pairs = samples
        .iter()
        .map(|_| match config.pairs_per_sample {
            Some(k) if !small && k < candidates.len() => {
                let mut picked = index::sample(&mut r, candidates.len(), k).into_vec();
                picked.sort_unstable();
                picked.into_iter().map(|p| candidates[p]).collect()
            }
            _ => candidates.clone(),
        })
        .collect();

    Ok(SamplingPlan {
        seed,
        n,
        samples,
        pairs,
        orders,
        relative_orders,
        contexts: config.contexts,
        radius: config.radius,
    })
}

/// Mean and standard error of `Δv(i,j,S)` over `contexts` distinct uniform
/// contexts of size `m`; exact (stderr 0) when `contexts ≥ C(n−2, m)`.
pub fn estimate_interaction<G, R>(
    game: &G,
    i: usize,
    j: usize,
    m: usize,
    contexts: usize,
    rng: &mut R,
) -> Result<(f64, f64)>
where
    G: Game + ?Sized,
    R: Rng + ?Sized,
{
    let n = game.n();
    check_pair(n, i, j)?;
    if m > n - 2 {
        return Err(Error::Argument(format!("order {m} outside [0, {}]", n - 2)));
    }
    if contexts == 0 {
        return Err(Error::Argument("need at least one context".into()));
    }
    let pool = Coalition::full(n).without(i).without(j);
    let members: Vec<usize> = pool.indices().collect();
    let total = binomial(n - 2, m);
    let exact = contexts as f64 >= total;

    let chosen: Vec<Coalition> = if exact {
        enumerate_subsets_of_size(pool, m)?.collect()
    } else {
        let mut seen = HashSet::with_capacity(contexts);
        let mut out = Vec::with_capacity(contexts);
        while out.len() < contexts {
            let bits = index::sample(rng, members.len(), m)
                .into_iter()
                .fold(0u64, |b, p| b | 1 << members[p]);
            if seen.insert(bits) {
                out.push(Coalition::from_bits_unchecked(n, bits));
            }
        }
        out
    };

    let mut batch = Vec::with_capacity(4 * chosen.len());
    for &s in &chosen {
        batch.extend([s.with(i).with(j), s.with(i), s.with(j), s]);
    }
    let v = game.values(&batch);
    let deltas: Vec<f64> = v.chunks_exact(4).map(|q| q[0] - q[1] - q[2] + q[3]).collect();
    let k = deltas.len() as f64;
    let mean = deltas.iter().sum::<f64>() / k;
    let stderr = if exact || deltas.len() < 2 {
        0.0
    } else {
        let var = deltas.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (k - 1.0);
        (var / k).sqrt()
    };
    Ok((mean, stderr))
}

/// Relative interaction strength per order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrderProfile {
    pub n: usize,
    pub orders: Vec<usize>,
    pub relative_orders: Vec<f64>,
    /// `E_x E_{i,j} |I^(m)(i,j|x)|` before normalization.
    pub raw_strength: Vec<f64>,
    /// `raw_strength` divided by its mean over `orders`.
    pub j: Vec<f64>,
    pub seed: u64,
    pub plan_digest: String,
    pub samples: usize,
    pub contexts: usize,
    /// Which orders the normalizing mean runs over.
    pub normalization: String,
}

impl OrderProfile {
    pub fn from_raw(n: usize, orders: Vec<usize>, raw_strength: Vec<f64>) -> Self {
        let relative_orders = orders.iter().map(|&m| relative_position(n, m)).collect();
        let denom = raw_strength.iter().sum::<f64>() / raw_strength.len().max(1) as f64;
        let j = if denom > 0.0 {
            raw_strength.iter().map(|r| r / denom).collect()
        } else {
            log::warn!("all interaction strengths are zero; J is reported as zero");
            vec![0.0; raw_strength.len()]
        };
        OrderProfile {
            n,
            orders,
            relative_orders,
            raw_strength,
            j,
            seed: 0,
            plan_digest: String::new(),
            samples: 0,
            contexts: 0,
            normalization: "mean over measured orders".into(),
        }
    }

    /// J at order `m`, if measured.
    pub fn j_at(&self, m: usize) -> Option<f64> {
        self.orders.iter().position(|&o| o == m).map(|k| self.j[k])
    }

    /// Sum of `J` over orders with `lo ≤ m ≤ hi`.
    pub fn j_sum_between(&self, lo: f64, hi: f64) -> f64 {
        self.orders
            .iter()
            .zip(&self.j)
            .filter(|(&m, _)| (m as f64) >= lo - 1e-9 && (m as f64) <= hi + 1e-9)
            .map(|(_, j)| j)
            .sum()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("order_m,relative_order,raw_strength,J\n");
        for k in 0..self.orders.len() {
            out.push_str(&format!(
                "{},{},{},{}\n",
                self.orders[k], self.relative_orders[k], self.raw_strength[k], self.j[k]
            ));
        }
        out
    }

    /// Reads the CSV layout written by [`OrderProfile::to_csv`]. `n` is
    /// recovered from the order/relative-order columns when not given.
    pub fn from_csv(text: &str, n: Option<usize>) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let headers = reader.headers()?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::Schema(format!("profile CSV lacks column {name}")))
        };
        let (cm, cr, cs) = (col("order_m")?, col("relative_order")?, col("raw_strength")?);
        let mut orders = Vec::new();
        let mut rel = Vec::new();
        let mut raw = Vec::new();
        for (row, rec) in reader.records().enumerate() {
            let rec = rec?;
            let parse = |c: usize, name: &str| -> Result<f64> {
                rec.get(c)
                    .unwrap_or("")
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse {
                        row: row + 2,
                        column: name.into(),
                        message: e.to_string(),
                    })
            };
            orders.push(parse(cm, "order_m")? as usize);
            rel.push(parse(cr, "relative_order")?);
            raw.push(parse(cs, "raw_strength")?);
        }
        let n = match n {
            Some(n) => n,
            None => orders
                .iter()
                .zip(&rel)
                .find(|(_, &r)| r > 0.0)
                .map(|(&m, &r)| (m as f64 / r).round() as usize + 2)
                .ok_or_else(|| Error::Schema("cannot infer n from the profile".into()))?,
        };
        Ok(OrderProfile::from_raw(n, orders, raw))
    }
}

fn check_games<G: Game>(games: &[G], plan: &SamplingPlan) -> Result<()> {
    if plan.samples.is_empty() || plan.orders.is_empty() || plan.pairs.iter().any(|p| p.is_empty()) {
        return Err(Error::Config("empty sampling plan".into()));
    }
    if let Some(&s) = plan.samples.iter().find(|&&s| s >= games.len()) {
        return Err(Error::Config(format!("plan references sample {s} of {}", games.len())));
    }
    if let Some(g) = games.iter().find(|g| g.n() != plan.n) {
        return Err(Error::Dimension(format!("game has n = {}, plan n = {}", g.n(), plan.n)));
    }
    Ok(())
}

fn sample_raw_strength<G: Game>(game: &G, plan: &SamplingPlan, slot: usize) -> Result<Vec<f64>> {
    let sample_id = plan.samples[slot] as u64;
    let pairs = &plan.pairs[slot];
    let measure = |g: &dyn Game| -> Result<Vec<f64>> {
        let mut raw = vec![0.0; plan.orders.len()];
        for (p, &(i, j)) in pairs.iter().enumerate() {
            for (o, &m) in plan.orders.iter().enumerate() {
                let mut r = rng::stream(plan.seed, &[STREAM_CONTEXTS, sample_id, p as u64, o as u64]);
                let (mean, _) = estimate_interaction(g, i, j, m, plan.contexts, &mut r)?;
                raw[o] += mean.abs();
            }
        }
        Ok(raw.into_iter().map(|s| s / pairs.len() as f64).collect())
    };
    if plan.n <= TABULATE_LIMIT {
        let table = ValueTable::tabulate(game, Exec::Sequential)?;
        measure(&table)
    } else {
        measure(game)
    }
}

fn finish(plan: &SamplingPlan, raw: Vec<f64>, samples: usize) -> OrderProfile {
    let mut p = OrderProfile::from_raw(plan.n, plan.orders.clone(), raw);
    p.seed = plan.seed;
    p.plan_digest = plan.digest();
    p.samples = samples;
    p.contexts = plan.contexts;
    p
}

/// One normalized profile per planned sample, `J^(m)(x)`.
pub fn sample_profiles<G: Game>(games: &[G], plan: &SamplingPlan, exec: Exec) -> Result<Vec<OrderProfile>> {
    check_games(games, plan)?;
    let raws = exec.try_map_range(plan.samples.len(), |slot| {
        sample_raw_strength(&games[plan.samples[slot]], plan, slot)
    })?;
    Ok(raws.into_iter().map(|raw| finish(plan, raw, 1)).collect())
}

/// `J^(m) = E_x E_{i,j}|I^(m)| / E_{m′} E_x E_{i,j}|I^(m′)|` over the plan.
pub fn strength_profile<G: Game>(games: &[G], plan: &SamplingPlan, exec: Exec) -> Result<OrderProfile> {
    check_games(games, plan)?;
    let raws = exec.try_map_range(plan.samples.len(), |slot| {
        sample_raw_strength(&games[plan.samples[slot]], plan, slot)
    })?;
    let k = raws.len() as f64;
    let mut mean = vec![0.0; plan.orders.len()];
    for raw in &raws {
        for (a, r) in mean.iter_mut().zip(raw) {
            *a += r;
        }
    }
    mean.iter_mut().for_each(|a| *a /= k);
    Ok(finish(plan, mean, raws.len()))
}

/// Mean over samples and orders of `E_{u≠v}|J_u − J_v| / E_w|J_w|`, where
/// `repeats[x]` holds independent re-estimates of sample `x`'s profile.
pub fn instability(repeats: &[Vec<OrderProfile>]) -> Result<f64> {
    if repeats.is_empty() {
        return Err(Error::Argument("no samples".into()));
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for reps in repeats {
        if reps.len() < 2 {
            return Err(Error::Argument("instability needs at least two repeats".into()));
        }
        let orders = &reps[0].orders;
        if reps.iter().any(|p| &p.orders != orders) {
            return Err(Error::Argument("repeats measured different order sets".into()));
        }
        for o in 0..orders.len() {
            let vals: Vec<f64> = reps.iter().map(|p| p.j[o]).collect();
            let scale = vals.iter().map(|v| v.abs()).sum::<f64>() / vals.len() as f64;
            let mut diff = 0.0;
            let mut pairs = 0usize;
            for u in 0..vals.len() {
                for v in 0..vals.len() {
                    if u != v {
                        diff += (vals[u] - vals[v]).abs();
                        pairs += 1;
                    }
                }
            }
            let diff = diff / pairs as f64;
            total += if scale > 0.0 { diff / scale } else { 0.0 };
            count += 1;
        }
    }
    Ok(total / count as f64)
}
