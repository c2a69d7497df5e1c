use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use log::info;
use serde::{Deserialize, Serialize};

use super::{sha256_hex, write_atomic, Cell, ExperimentResult, HarnessConfig, OutputFormat, Table};
use crate::attack::{adversarial_accuracy, AttackConfig};
use crate::data::{gen_grid, gen_tabular, mask_random, mask_surround, Dataset};
use crate::error::{Error, Result};
use crate::exact::round_half_up;
use crate::exec::Exec;
use crate::game::{MaskedModelGame, OutputMode};
use crate::neural::{train, DnnType, MlpModel, ModelPreset, TrainConfig, TrainOutcome};
use crate::profile::{
    build_plan, instability, sample_profiles, strength_profile, OrderProfile, OrderSelection, PlanConfig,
};
use crate::rng;
use crate::theory::{fit_effective_dimension, simulate_theorem1, EffectiveDimensionFit};

const STREAM_MASK: u64 = 0x6d61_736b;
const STREAM_REPEAT: u64 = 0x7265_7074;

/// Shared state for one harness invocation: the config, the execution
/// mode and a cache of trained models keyed by data and training config.
pub struct RunContext {
    pub config: HarnessConfig,
    pub exec: Exec,
    cache: Mutex<HashMap<String, Arc<TrainOutcome>>>,
}

impl RunContext {
    pub fn new(config: HarnessConfig, exec: Exec) -> Result<Self> {
        config.validate()?;
        Ok(RunContext {
            config,
            exec,
            cache: Mutex::new(HashMap::new()),
        })
    }

    /// Training config for `dnn` on top of the base optimizer settings,
    /// keeping snapshots after the first, middle and last epoch.
    pub fn train_config(&self, dnn: DnnType, preset: ModelPreset, seed: u64) -> TrainConfig {
        let mut c = self.config.train.clone();
        c.hidden = preset.hidden();
        c.seed = seed;
        c.snapshot_epochs = snapshot_epochs(c.epochs);
        dnn.apply(&mut c);
        c
    }

    pub fn train(&self, data: &Dataset, config: &TrainConfig) -> Result<Arc<TrainOutcome>> {
        let key = format!("{}:{}", data.digest(), config.digest());
        if let Some(hit) = self.cache.lock().expect("cache lock").get(&key) {
            return Ok(hit.clone());
        }
        let outcome = Arc::new(train(config, data)?);
        self.cache.lock().expect("cache lock").insert(key, outcome.clone());
        Ok(outcome)
    }
}

/// `{1, ⌈E/2⌉, E}` without duplicates.
pub fn snapshot_epochs(epochs: usize) -> Vec<usize> {
    let mut e = vec![1, epochs.div_ceil(2), epochs];
    e.dedup();
    e
}

pub fn tabular_data(ctx: &RunContext, seed: u64) -> Result<Dataset> {
    gen_tabular(&ctx.config.tabular, seed)
}

pub fn grid_data(ctx: &RunContext, seed: u64) -> Result<Dataset> {
    gen_grid(&ctx.config.grid, seed)
}

/// Test rows the model classifies correctly, in split order, at most `limit`.
pub fn correct_test_rows(model: &MlpModel, data: &Dataset, limit: usize) -> Result<Vec<usize>> {
    let (x, y) = data.gather(&data.test);
    let pred = model.predict(x.view())?;
    Ok(data
        .test
        .iter()
        .zip(pred.iter().zip(&y))
        .filter(|(_, (p, t))| p == t)
        .map(|(&r, _)| r)
        .take(limit)
        .collect())
}

fn games_for<'a>(model: &'a MlpModel, data: &Dataset, rows: &[usize]) -> Result<Vec<MaskedModelGame<'a>>> {
    rows.iter()
        .map(|&r| {
            MaskedModelGame::new(
                model,
                data.x(r).to_vec(),
                data.baseline.clone(),
                data.labels[r],
                OutputMode::LogOdds,
            )
        })
        .collect()
}

/// `J^(m)` at the selected orders over up to `samples` correctly classified test
/// rows, with log-odds of the true class as the game value.
pub fn profile_model(
    model: &MlpModel,
    data: &Dataset,
    samples: usize,
    contexts: usize,
    orders: &OrderSelection,
    seed: u64,
    exec: Exec,
) -> Result<OrderProfile> {
    let rows = correct_test_rows(model, data, samples)?;
    if rows.is_empty() {
        return Err(Error::Numeric("model classifies no test sample correctly".into()));
    }
    let games = games_for(model, data, &rows)?;
    let mut plan_cfg = PlanConfig::tabular(data.n(), games.len(), contexts);
    plan_cfg.grid = data.grid;
    plan_cfg.orders = orders.clone();
    let plan = build_plan(&plan_cfg, seed)?;
    strength_profile(&games, &plan, exec)
}

pub fn profile_table(p: &OrderProfile) -> Table {
    let mut t = Table::new(&["order_m", "relative_order", "raw_strength", "J"]);
    for k in 0..p.orders.len() {
        t.push(vec![
            p.orders[k].into(),
            p.relative_orders[k].into(),
            p.raw_strength[k].into(),
            p.j[k].into(),
        ]);
    }
    t
}

fn history_table(outcome: &TrainOutcome) -> Table {
    let mut t = Table::new(&[
        "epoch",
        "classification_loss",
        "encourage_loss",
        "penalize_loss",
        "total_loss",
        "train_accuracy",
        "test_accuracy",
    ]);
    for h in &outcome.history {
        t.push(vec![
            h.epoch.into(),
            h.classification_loss.into(),
            h.encourage_loss.into(),
            h.penalize_loss.into(),
            h.total_loss.into(),
            h.train_accuracy.into(),
            h.test_accuracy.into(),
        ]);
    }
    t
}

fn final_test_accuracy(outcome: &TrainOutcome) -> f64 {
    outcome.history.last().map(|h| h.test_accuracy).unwrap_or(f64::NAN)
}

/// The low/high-order vs middle-order comparison on a profile.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BottleneckCheck {
    pub middle_order: usize,
    pub j_middle: f64,
    pub j_low: [f64; 2],
    pub j_high: [f64; 2],
    pub holds: bool,
}

pub fn bottleneck_check(p: &OrderProfile) -> Result<BottleneckCheck> {
    let n = p.n;
    if n < 5 {
        return Err(Error::Argument("bottleneck check needs n ≥ 5".into()));
    }
    let at = |m: usize| {
        p.j_at(m)
            .ok_or_else(|| Error::Argument(format!("order {m} not measured")))
    };
    let mid = round_half_up(0.5 * (n - 2) as f64);
    let j_middle = at(mid)?;
    let j_low = [at(0)?, at(1)?];
    let j_high = [at(n - 3)?, at(n - 2)?];
    let holds = j_middle < j_low[0].min(j_low[1]) && j_middle < j_high[0].min(j_high[1]);
    Ok(BottleneckCheck {
        middle_order: mid,
        j_middle,
        j_low,
        j_high,
        holds,
    })
}

pub struct BottleneckRun {
    pub result: ExperimentResult,
    pub profile: OrderProfile,
    pub model: Arc<TrainOutcome>,
    pub data: Dataset,
}

/// Normal model on the tabular preset; J at all orders after the first,
/// middle and final epoch.
pub fn exp_bottleneck(ctx: &RunContext, seed: u64) -> Result<BottleneckRun> {
    let cfg = &ctx.config;
    if cfg.tabular.n > 12 {
        return Err(Error::Config(format!(
            "the bottleneck experiment measures exactly and needs n ≤ 12, got {}",
            cfg.tabular.n
        )));
    }
    info!("bottleneck: seed {seed}");
    let data = tabular_data(ctx, seed)?;
    let tc = ctx.train_config(DnnType::Normal, cfg.model, seed);
    let outcome = ctx.train(&data, &tc)?;
    let mut result = ExperimentResult::new("bottleneck", seed, cfg);
    let profile = profile_model(
        &outcome.model,
        &data,
        cfg.profile.samples,
        cfg.profile.contexts,
        &OrderSelection::All,
        seed,
        ctx.exec,
    )?;
    for (epoch, snap) in &outcome.snapshots {
        let p = profile_model(
            snap,
            &data,
            cfg.profile.samples,
            cfg.profile.contexts,
            &OrderSelection::All,
            seed,
            ctx.exec,
        )?;
        result
            .tables
            .insert(format!("profile_epoch_{epoch}"), profile_table(&p));
    }
    let check = bottleneck_check(&profile)?;
    result.tables.insert("profile".into(), profile_table(&profile));
    result.tables.insert("history".into(), history_table(&outcome));
    result.set_metric("dataset_digest", data.digest());
    result.set_metric("train_config_digest", tc.digest());
    result.set_metric("test_accuracy", final_test_accuracy(&outcome));
    result.set_metric("profiled_samples", profile.samples);
    result.set_metric("j", &profile.j);
    result.set_metric("bottleneck", &check);
    Ok(BottleneckRun {
        result: result.finish(),
        profile,
        model: outcome,
        data,
    })
}

/// The model types compared in the order-control experiment.
pub const ORDER_CONTROL_TYPES: [DnnType; 4] = [
    DnnType::Normal,
    DnnType::LowOrder,
    DnnType::MiddleOrder,
    DnnType::HighOrder,
];

/// Σ J over `m ≤ 0.5n`, over `[0.3n, 0.7n]` and over `m ≥ 0.7n`.
pub fn band_sums(p: &OrderProfile) -> (f64, f64, f64) {
    let n = p.n as f64;
    (
        p.j_sum_between(0.0, 0.5 * n),
        p.j_sum_between(0.3 * n, 0.7 * n),
        p.j_sum_between(0.7 * n, n),
    )
}

pub fn exp_order_control(ctx: &RunContext, seed: u64) -> Result<ExperimentResult> {
    let cfg = &ctx.config;
    info!("order control: seed {seed}");
    let data = tabular_data(ctx, seed)?;
    let mut result = ExperimentResult::new("order_control", seed, cfg);
    let mut summary = Table::new(&[
        "dnn_type",
        "seed",
        "test_accuracy",
        "j_sum_low",
        "j_sum_middle",
        "j_sum_high",
    ]);
    let mut metrics = BTreeMap::new();
    for dnn in ORDER_CONTROL_TYPES {
        let outcome = ctx.train(&data, &ctx.train_config(dnn, cfg.model, seed))?;
        let p = profile_model(
            &outcome.model,
            &data,
            cfg.profile.samples,
            cfg.profile.contexts,
            &OrderSelection::All,
            seed,
            ctx.exec,
        )?;
        let (low, mid, high) = band_sums(&p);
        let acc = final_test_accuracy(&outcome);
        summary.push(vec![
            dnn.name().into(),
            seed.into(),
            acc.into(),
            low.into(),
            mid.into(),
            high.into(),
        ]);
        metrics.insert(dnn.name(), serde_json::json!({"test_accuracy": acc, "j_sum_low": low, "j_sum_middle": mid, "j_sum_high": high, "j": p.j}));
        result
            .tables
            .insert(format!("profile_{}", dnn.name()), profile_table(&p));
    }
    result.tables.insert("order_control".into(), summary);
    result.set_metric("types", metrics);
    Ok(result.finish())
}

/// Model types compared in the robustness experiment.
pub const ROBUSTNESS_TYPES: [DnnType; 2] = [DnnType::Normal, DnnType::HighOrderRobustness];

pub fn robustness_columns() -> Table {
    Table::new(&[
        "model_id",
        "model_preset",
        "dnn_type",
        "seed",
        "epsilon",
        "steps",
        "clean_acc",
        "adv_acc",
    ])
}

fn preset_name(p: ModelPreset) -> &'static str {
    match p {
        ModelPreset::Mlp5 => "mlp-5",
        ModelPreset::Mlp8 => "mlp-8",
    }
}

/// Attacks evaluated per model: an ε = 0 control then the configured ones.
pub fn attack_schedule(cfg: &HarnessConfig, seed: u64) -> Vec<AttackConfig> {
    let mut out = Vec::with_capacity(cfg.attacks.len() + 1);
    if let Some(first) = cfg.attacks.first() {
        out.push(AttackConfig {
            epsilon: 0.0,
            ..first.clone()
        });
    }
    out.extend(cfg.attacks.iter().cloned());
    out.iter_mut().for_each(|a| a.seed = seed);
    out
}

pub fn exp_robustness(ctx: &RunContext, seed: u64) -> Result<ExperimentResult> {
    let cfg = &ctx.config;
    info!("robustness: seed {seed}");
    let data = tabular_data(ctx, seed)?;
    let mut result = ExperimentResult::new("robustness", seed, cfg);
    let mut table = robustness_columns();
    for &preset in &cfg.robustness_models {
        for dnn in ROBUSTNESS_TYPES {
            let outcome = ctx.train(&data, &ctx.train_config(dnn, preset, seed))?;
            let id = format!("{}/{}/seed-{seed}", preset_name(preset), dnn.name());
            for attack in attack_schedule(cfg, seed) {
                let rep = adversarial_accuracy(&outcome.model, &data, &data.test, &attack, ctx.exec)?;
                table.push(vec![
                    id.clone().into(),
                    preset_name(preset).into(),
                    dnn.name().into(),
                    seed.into(),
                    attack.epsilon.into(),
                    attack.steps.into(),
                    rep.clean_accuracy.into(),
                    rep.adversarial_accuracy.into(),
                ]);
            }
        }
    }
    result.tables.insert("robustness".into(), table);
    Ok(result.finish())
}

/// Accuracy under random and surrounding masking.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskingCurves {
    pub counts: Vec<usize>,
    pub accuracy_random: Vec<f64>,
    pub accuracy_surround: Vec<f64>,
    /// `∫ (surround − random) dm` by the trapezoid rule.
    pub area: f64,
}

/// Trapezoid-rule integral of `ys` over `xs`.
pub fn trapezoid_area(xs: &[f64], ys: &[f64]) -> f64 {
    xs.windows(2)
        .zip(ys.windows(2))
        .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
        .sum()
}

impl MaskingCurves {
    pub fn new(counts: Vec<usize>, accuracy_random: Vec<f64>, accuracy_surround: Vec<f64>) -> Self {
        let xs: Vec<f64> = counts.iter().map(|&m| m as f64).collect();
        let diff: Vec<f64> = accuracy_surround
            .iter()
            .zip(&accuracy_random)
            .map(|(s, r)| s - r)
            .collect();
        let area = trapezoid_area(&xs, &diff);
        MaskingCurves {
            counts,
            accuracy_random,
            accuracy_surround,
            area,
        }
    }

    pub fn table(&self) -> Table {
        let mut t = Table::new(&["m", "acc_random", "acc_surround"]);
        for k in 0..self.counts.len() {
            t.push(vec![
                self.counts[k].into(),
                self.accuracy_random[k].into(),
                self.accuracy_surround[k].into(),
            ]);
        }
        t
    }
}

/// Test accuracy with `m` cells masked, for each count; the random mask of
/// row `r` at count `m` comes from its own stream.
pub fn masking_curves(
    model: &MlpModel,
    data: &Dataset,
    counts: &[usize],
    seed: u64,
    exec: Exec,
) -> Result<MaskingCurves> {
    let grid = data
        .grid
        .ok_or_else(|| Error::Config("surrounding masking needs a grid dataset".into()))?;
    let n = data.n();
    let per_count = exec.try_map(counts, |&m| {
        let k = data.test.len();
        let mut rnd = ndarray::Array2::zeros((k, n));
        let mut sur = ndarray::Array2::zeros((k, n));
        for (slot, &r) in data.test.iter().enumerate() {
            let x = data.x(r).to_vec();
            let mut rr = rng::stream(seed, &[STREAM_MASK, m as u64, r as u64]);
            let a = mask_random(&x, &data.baseline, m, &mut rr)?;
            let b = mask_surround(&x, &data.baseline, m, grid)?;
            rnd.row_mut(slot).assign(&ndarray::ArrayView1::from(&a));
            sur.row_mut(slot).assign(&ndarray::ArrayView1::from(&b));
        }
        let acc = |x: &ndarray::Array2<f64>| -> Result<f64> {
            let pred = model.predict(x.view())?;
            let hits = pred
                .iter()
                .zip(&data.test)
                .filter(|(p, &r)| **p == data.labels[r])
                .count();
            Ok(hits as f64 / k as f64)
        };
        Ok::<_, Error>((acc(&rnd)?, acc(&sur)?))
    })?;
    let (random, surround) = per_count.into_iter().unzip();
    Ok(MaskingCurves::new(counts.to_vec(), random, surround))
}

/// Model types compared in the masking experiment.
pub const MASKING_TYPES: [DnnType; 2] = [DnnType::Normal, DnnType::HighOrder];

pub fn exp_masking(ctx: &RunContext, seed: u64) -> Result<ExperimentResult> {
    let cfg = &ctx.config;
    info!("masking: seed {seed}");
    let data = grid_data(ctx, seed)?;
    let n = data.n();
    let counts: Vec<usize> = cfg
        .mask_fractions
        .iter()
        .map(|f| round_half_up(f * n as f64).min(n))
        .collect();
    let mut result = ExperimentResult::new("masking", seed, cfg);
    let mut areas = Table::new(&["dnn_type", "seed", "test_accuracy", "area"]);
    for dnn in MASKING_TYPES {
        let outcome = ctx.train(&data, &ctx.train_config(dnn, cfg.model, seed))?;
        let curves = masking_curves(&outcome.model, &data, &counts, seed, ctx.exec)?;
        areas.push(vec![
            dnn.name().into(),
            seed.into(),
            final_test_accuracy(&outcome).into(),
            curves.area.into(),
        ]);
        result.tables.insert(format!("masking_{}", dnn.name()), curves.table());
        result.set_metric(&format!("curves_{}", dnn.name()), &curves);
    }
    result.tables.insert("masking_areas".into(), areas);
    Ok(result.finish())
}

pub fn theory_table(fit: &EffectiveDimensionFit) -> Table {
    let mut t = Table::new(&["relative_order", "J_hat", "F_hat"]);
    for k in 0..fit.relative_orders.len() {
        t.push(vec![
            fit.relative_orders[k].into(),
            fit.j_hat[k].into(),
            fit.f_hat[k].into(),
        ]);
    }
    t
}

pub fn theorem1_table(sim: &crate::theory::Theorem1Sim) -> Table {
    let mut t = Table::new(&["m", "predicted_std", "empirical_std"]);
    for r in &sim.rows {
        t.push(vec![r.m.into(), r.predicted_std.into(), r.empirical_std.into()]);
    }
    t
}

/// Fits `n′` to a profile and runs the Theorem-1 simulation.
pub fn exp_theory(ctx: &RunContext, profile: &OrderProfile, seed: u64) -> Result<ExperimentResult> {
    let cfg = &ctx.config;
    let fit = fit_effective_dimension(profile, cfg.theory.n_range)?;
    let sim = simulate_theorem1(
        cfg.theory.theorem1_n,
        cfg.theory.theorem1_sigma,
        cfg.theory.theorem1_trials,
        seed,
        ctx.exec,
    )?;
    let mut result = ExperimentResult::new("theory", seed, cfg);
    result.tables.insert("theory".into(), theory_table(&fit));
    result.tables.insert("theorem1".into(), theorem1_table(&sim));
    result.set_metric("n", profile.n);
    result.set_metric("n_eff", fit.n_eff);
    result.set_metric("n_eff_below_n", fit.n_eff <= profile.n as f64);
    result.set_metric("fit_error", fit.fit_error);
    result.set_metric("at_boundary", fit.at_boundary);
    result.set_metric("warnings", &fit.warnings);
    let worst = sim
        .rows
        .iter()
        .map(|r| (r.empirical_std / r.predicted_std - 1.0).abs())
        .fold(0.0, f64::max);
    result.set_metric("theorem1_max_relative_deviation", worst);
    Ok(result.finish())
}

/// Instability of per-sample profiles estimated `repeats` times with
/// independent context draws.
pub fn measure_instability(
    model: &MlpModel,
    data: &Dataset,
    samples: usize,
    contexts: usize,
    repeats: usize,
    seed: u64,
    exec: Exec,
) -> Result<f64> {
    let rows = correct_test_rows(model, data, samples)?;
    if rows.is_empty() {
        return Err(Error::Numeric("model classifies no test sample correctly".into()));
    }
    let games = games_for(model, data, &rows)?;
    let mut per_rep = Vec::with_capacity(repeats);
    for rep in 0..repeats {
        let mut plan_cfg = PlanConfig::tabular(data.n(), games.len(), contexts);
        plan_cfg.grid = data.grid;
        let plan = build_plan(&plan_cfg, rng::derive_seed(seed, &[STREAM_REPEAT, rep as u64]))?;
        per_rep.push(sample_profiles(&games, &plan, exec)?);
    }
    let by_sample: Vec<Vec<OrderProfile>> = (0..games.len())
        .map(|s| per_rep.iter().map(|rep| rep[s].clone()).collect())
        .collect();
    instability(&by_sample)
}

pub fn exp_instability(ctx: &RunContext, model: &MlpModel, data: &Dataset, seed: u64) -> Result<ExperimentResult> {
    let s = &ctx.config.instability;
    let value = measure_instability(model, data, s.samples, s.contexts, s.repeats, seed, ctx.exec)?;
    let mut result = ExperimentResult::new("instability", seed, &ctx.config);
    let mut t = Table::new(&["samples", "contexts", "repeats", "instability"]);
    t.push(vec![
        s.samples.into(),
        s.contexts.into(),
        s.repeats.into(),
        value.into(),
    ]);
    result.tables.insert("instability".into(), t);
    result.set_metric("instability", value);
    Ok(result.finish())
}

/// Per-seed outputs of [`run_all`].
pub struct SeedRun {
    pub seed: u64,
    pub results: Vec<ExperimentResult>,
}

/// Every experiment for one seed.
pub fn run_seed(ctx: &RunContext, seed: u64) -> Result<SeedRun> {
    let bottleneck = exp_bottleneck(ctx, seed)?;
    let theory = exp_theory(ctx, &bottleneck.profile, seed)?;
    let instab = exp_instability(ctx, &bottleneck.model.model, &bottleneck.data, seed)?;
    let order = exp_order_control(ctx, seed)?;
    let robust = exp_robustness(ctx, seed)?;
    let masking = exp_masking(ctx, seed)?;
    Ok(SeedRun {
        seed,
        results: vec![bottleneck.result, theory, instab, order, robust, masking],
    })
}

fn count_true(values: impl Iterator<Item = bool>) -> usize {
    values.filter(|&b| b).count()
}

fn metric_f64(r: &ExperimentResult, path: &[&str]) -> f64 {
    let mut v = &r.metrics;
    for p in path {
        v = &v[*p];
    }
    v.as_f64().unwrap_or(f64::NAN)
}

/// Directional outcomes aggregated over seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub format_version: u32,
    pub config_digest: String,
    pub seeds: Vec<u64>,
    pub bottleneck_holds: usize,
    pub penalize_low_reduces: usize,
    pub encourage_middle_increases: usize,
    pub order_control_accuracy_within_10: usize,
    /// Seeds where the robustness preset is less robust, per configured attack.
    pub robustness_lower: Vec<usize>,
    pub masking_area_larger: usize,
    pub instability: Vec<f64>,
    pub n_eff: Vec<f64>,
    pub theorem1_max_relative_deviation: Vec<f64>,
}

fn find<'a>(run: &'a SeedRun, name: &str) -> &'a ExperimentResult {
    run.results
        .iter()
        .find(|r| r.experiment == name)
        .expect("experiment ran")
}

pub fn summarize(config: &HarnessConfig, runs: &[SeedRun]) -> Summary {
    let mut s = Summary {
        format_version: super::RESULT_FORMAT_VERSION,
        config_digest: config.digest(),
        seeds: runs.iter().map(|r| r.seed).collect(),
        bottleneck_holds: 0,
        penalize_low_reduces: 0,
        encourage_middle_increases: 0,
        order_control_accuracy_within_10: 0,
        robustness_lower: vec![0; config.attacks.len()],
        masking_area_larger: 0,
        instability: Vec::new(),
        n_eff: Vec::new(),
        theorem1_max_relative_deviation: Vec::new(),
    };
    for run in runs {
        let b = find(run, "bottleneck");
        s.bottleneck_holds += count_true(std::iter::once(
            b.metrics["bottleneck"]["holds"].as_bool() == Some(true),
        ));
        let o = find(run, "order_control");
        let get = |t: &str, k: &str| metric_f64(o, &["types", t, k]);
        s.penalize_low_reduces += count_true(std::iter::once(
            get("high-order", "j_sum_low") < get("normal", "j_sum_low"),
        ));
        s.encourage_middle_increases += count_true(std::iter::once(
            get("middle-order", "j_sum_middle") > get("normal", "j_sum_middle"),
        ));
        let base = get("normal", "test_accuracy");
        s.order_control_accuracy_within_10 += count_true(std::iter::once(
            ORDER_CONTROL_TYPES
                .iter()
                .all(|t| (get(t.name(), "test_accuracy") - base).abs() <= 0.10),
        ));
        let r = find(run, "robustness");
        let table = &r.tables["robustness"];
        let (ci, ei, di, pi, ai) = (
            table.column("clean_acc").expect("column"),
            table.column("epsilon").expect("column"),
            table.column("dnn_type").expect("column"),
            table.column("model_preset").expect("column"),
            table.column("adv_acc").expect("column"),
        );
        let lookup = |dnn: &str, preset: &str, eps: f64| -> Option<(f64, f64)> {
            table
                .rows
                .iter()
                .find_map(|row| match (&row[di], &row[pi], &row[ei], &row[ci], &row[ai]) {
                    (Cell::Text(d), Cell::Text(p), Cell::Num(e), Cell::Num(c), Cell::Num(a))
                        if d == dnn && p == preset && *e == eps =>
                    {
                        Some((*c, *a))
                    }
                    _ => None,
                })
        };
        for (k, a) in config.attacks.iter().enumerate() {
            let lower = match (
                lookup("normal", "mlp-5", a.epsilon),
                lookup("high-order-robustness", "mlp-5", a.epsilon),
            ) {
                (Some((cn, an)), Some((cr, ar))) => ar < an && (cn - cr).abs() <= 0.10,
                _ => false,
            };
            s.robustness_lower[k] += usize::from(lower);
        }
        let m = find(run, "masking");
        s.masking_area_larger += count_true(std::iter::once(
            metric_f64(m, &["curves_high-order", "area"]) > metric_f64(m, &["curves_normal", "area"]),
        ));
        s.instability
            .push(metric_f64(find(run, "instability"), &["instability"]));
        let t = find(run, "theory");
        s.n_eff.push(metric_f64(t, &["n_eff"]));
        s.theorem1_max_relative_deviation
            .push(metric_f64(t, &["theorem1_max_relative_deviation"]));
    }
    s
}

/// Runs every experiment for each configured seed and writes
/// `seed-<s>/<experiment>/…`, `config.json`, `summary.json` and
/// `digests.json` under `out`.
pub fn run_all(ctx: &RunContext, seed: u64, out: &Path, format: OutputFormat) -> Result<Summary> {
    let seeds: Vec<u64> = ctx.config.seed_offsets.iter().map(|o| seed.wrapping_add(*o)).collect();
    let runs = ctx.exec.try_map(&seeds, |&s| run_seed(ctx, s))?;
    let mut digests: BTreeMap<String, String> = BTreeMap::new();
    for run in &runs {
        for r in &run.results {
            let rel = PathBuf::from(format!("seed-{}", run.seed)).join(&r.experiment);
            for (file, digest) in r.write(&out.join(&rel), format)? {
                digests.insert(rel.join(file).to_string_lossy().replace('\\', "/"), digest);
            }
        }
    }
    let config_text = serde_json::to_string_pretty(&ctx.config)?;
    write_atomic(&out.join("config.json"), config_text.as_bytes())?;
    digests.insert("config.json".into(), sha256_hex(config_text.as_bytes()));
    let summary = summarize(&ctx.config, &runs);
    let summary_text = serde_json::to_string_pretty(&summary)?;
    write_atomic(&out.join("summary.json"), summary_text.as_bytes())?;
    digests.insert("summary.json".into(), sha256_hex(summary_text.as_bytes()));
    write_atomic(
        &out.join("digests.json"),
        serde_json::to_string_pretty(&digests)?.as_bytes(),
    )?;
    Ok(summary)
}
