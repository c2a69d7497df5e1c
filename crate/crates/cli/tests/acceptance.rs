//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion
//! and exits non-zero if any fails.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use bottleneck::coalition::Coalition;
use bottleneck::exact::{
    delta_v_pair, efficiency_decomposition, interaction_exact, interactions_all_orders, shapley_interaction_index,
    theorem2_rhs,
};
use bottleneck::game::{AnalyticGame, FnGame, Game};
use bottleneck::neural::{
    classification_loss, input_gradient, order_loss_with_subsets, sample_nested_subsets, Batch, Gradients, MlpModel,
    OrderLoss,
};
use bottleneck::rng;
use bottleneck::theory::normalized_curve;
use ndarray::Array2;

const RUN_SEED: &str = "7";
const SEEDS: [u64; 3] = [7, 8, 9];

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn timed(limit: Option<Duration>, f: impl FnOnce() -> Verdict) -> (Verdict, Duration) {
    let start = Instant::now();
    let mut v = f();
    let elapsed = start.elapsed();
    if let Some(limit) = limit {
        if elapsed > limit {
            v.pass = false;
            v.detail.push_str(&format!(
                "; runtime {:.1}s over {:.0}s",
                elapsed.as_secs_f64(),
                limit.as_secs_f64()
            ));
        }
    }
    (v, elapsed)
}

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_bottleneck"));
    c.env("RUST_LOG", "warn");
    c
}

fn table_game(n: usize, seed: u64) -> AnalyticGame {
    AnalyticGame::random_table(n, &mut rng::stream(seed, &[n as u64])).unwrap()
}

fn binom(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, t| acc * (n - t) as f64 / (t + 1) as f64)
}

fn efficiency() -> Verdict {
    let mut worst: f64 = 0.0;
    for n in 3..=8 {
        for g in 0..100 {
            let d = efficiency_decomposition(&table_game(n, 10_000 + g)).unwrap();
            worst = worst.max(d.residual().abs() / d.v_full.abs().max(f64::MIN_POSITIVE));
        }
    }
    verdict(worst <= 1e-9, format!("max relative residual {worst:.2e} (tol 1e-9)"))
}

fn shapley_identity() -> Verdict {
    let mut worst: f64 = 0.0;
    for g in 0..50u64 {
        let n = 3 + (g as usize % 6);
        let game = table_game(n, 20_000 + g);
        for i in 0..n {
            for j in i + 1..n {
                let lhs = shapley_interaction_index(&game, i, j).unwrap();
                let rhs = interactions_all_orders(&game, i, j).unwrap().iter().sum::<f64>() / (n - 1) as f64;
                worst = worst.max((lhs - rhs).abs());
            }
        }
    }
    verdict(worst <= 1e-9, format!("max |difference| {worst:.2e} (tol 1e-9)"))
}

fn swap(s: Coalition, a: usize, b: usize) -> Coalition {
    match (s.contains(a), s.contains(b)) {
        (true, false) => s.without(a).with(b),
        (false, true) => s.without(b).with(a),
        _ => s,
    }
}

fn five_properties() -> Verdict {
    let tol = 1e-9;
    let mut failures = Vec::new();
    for g in 0..40u64 {
        let n = 3 + (g as usize % 5);
        let u = table_game(n, 30_000 + g);
        let v = table_game(n, 40_000 + g);
        let (i, j, k) = (0, n - 1, 1);
        let (a, b) = (1.5 - 0.1 * g as f64, -0.7 + 0.05 * g as f64);
        let combo = FnGame::new(n, |s| a * u.value(s) + b * v.value(s));
        let null = FnGame::new(n, |s| u.value(s.without(i)));
        let dummy = FnGame::new(n, |s| u.value(s.without(i)) + if s.contains(i) { 0.8 } else { 0.0 });
        let sym = FnGame::new(n, |s| u.value(s) + u.value(swap(s, i, k)));
        for m in 0..=n - 2 {
            let lin = interaction_exact(&combo, i, j, m).unwrap()
                - a * interaction_exact(&u, i, j, m).unwrap()
                - b * interaction_exact(&v, i, j, m).unwrap();
            if lin.abs() > tol {
                failures.push(format!("linearity g{g} m{m}"));
            }
            for game in [&null as &dyn Game, &dummy] {
                if interaction_exact(game, i, j, m).unwrap().abs() > tol {
                    failures.push(format!("nullity g{g} m{m}"));
                }
            }
            if interaction_exact(&u, i, j, m).unwrap() != interaction_exact(&u, j, i, m).unwrap() {
                failures.push(format!("commutativity g{g} m{m}"));
            }
            if (interaction_exact(&sym, i, j, m).unwrap() - interaction_exact(&sym, k, j, m).unwrap()).abs() > tol {
                failures.push(format!("symmetry g{g} m{m}"));
            }
        }
        let d = efficiency_decomposition(&u).unwrap();
        if d.residual().abs() > tol {
            failures.push(format!("efficiency g{g}"));
        }
    }
    verdict(
        failures.is_empty(),
        if failures.is_empty() {
            "linearity, nullity, commutativity, symmetry, efficiency hold on 40 constructed games".to_string()
        } else {
            format!("violations: {}", failures.join(", "))
        },
    )
}

fn parse_csv(text: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("").split(',').map(str::to_string).collect();
    let rows = lines
        .filter(|l| !l.is_empty())
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect();
    (header, rows)
}

fn col(header: &[String], name: &str) -> usize {
    header
        .iter()
        .position(|h| h == name)
        .unwrap_or_else(|| panic!("column {name} missing"))
}

fn num(s: &str) -> f64 {
    s.parse().unwrap_or_else(|_| panic!("not a number: {s}"))
}

fn theorem1_cli() -> Verdict {
    let out = bin()
        .args([
            "simulate-theorem1",
            "--n",
            "12",
            "--sigma",
            "1",
            "--trials",
            "100000",
            "--seed",
            RUN_SEED,
        ])
        .output()
        .unwrap();
    if !out.status.success() {
        return verdict(false, format!("exit {:?}", out.status.code()));
    }
    let (h, rows) = parse_csv(&String::from_utf8_lossy(&out.stdout));
    let (cm, ce) = (col(&h, "m"), col(&h, "empirical_std"));
    let mut worst: f64 = 0.0;
    for r in &rows {
        let m = num(&r[cm]) as usize;
        let predicted = (11 - m) as f64 / 132.0 / binom(10, m).sqrt();
        worst = worst.max((num(&r[ce]) / predicted - 1.0).abs());
    }
    verdict(
        rows.len() == 11 && worst <= 0.05,
        format!(
            "{} orders, max |empirical/predicted − 1| = {worst:.4} (tol 0.05)",
            rows.len()
        ),
    )
}

fn theorem2() -> Verdict {
    let n = 8;
    let trials = 100_000;
    let mut worst: f64 = 0.0;
    for g in 0..3u64 {
        let game = table_game(n, 50_000 + g);
        for (r1, r2) in [(0.25, 0.5), (0.25, 0.75), (0.0, 0.5)] {
            let mut r = rng::stream(51, &[g, (100.0 * r1) as u64, (100.0 * r2) as u64]);
            let (mut s, mut sq) = (0.0, 0.0);
            for _ in 0..trials {
                let (s1, s2) = sample_nested_subsets(n, r1, r2, &mut r).unwrap();
                let d = delta_v_pair(&game, s1, s2, r1, r2).unwrap();
                s += d;
                sq += d * d;
            }
            let mean = s / trials as f64;
            let se = ((sq / trials as f64 - mean * mean) / (trials - 1) as f64).sqrt();
            let z = (mean - theorem2_rhs(&game, r1, r2).unwrap()).abs() / se;
            worst = worst.max(z);
        }
    }
    verdict(
        worst <= 3.0,
        format!("max |mean − rhs| = {worst:.2} standard errors (tol 3)"),
    )
}

fn theory_shape() -> Verdict {
    let n = 10;
    let rhos: Vec<f64> = (0..=n - 2).map(|m| m as f64 / (n - 2) as f64).collect();
    let curve = normalized_curve(n as f64, &rhos).unwrap();
    let f = |m: usize| ((n - 1 - m) as f64 / (n * (n - 1)) as f64) / binom(n - 2, m).sqrt();
    let expected: Vec<f64> = (0..=n - 2).map(|m| f(m) / f(0)).collect();
    let worst = curve
        .f_hat
        .iter()
        .zip(&expected)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let argmin = (0..expected.len())
        .min_by(|&a, &b| curve.f_hat[a].total_cmp(&curve.f_hat[b]))
        .unwrap();
    let unimodal = (1..=argmin).all(|m| curve.f_hat[m] < curve.f_hat[m - 1])
        && (argmin + 1..curve.f_hat.len()).all(|m| curve.f_hat[m] > curve.f_hat[m - 1]);
    let interior = argmin > 0 && argmin < n - 2;
    let anchors =
        curve.f_hat[0] == 1.0 && (curve.f_hat[4] - 0.0664).abs() < 5e-5 && (curve.f_hat[8] - 0.1111).abs() < 5e-5;
    verdict(
        worst <= 1e-9 && unimodal && interior && anchors,
        format!(
            "max deviation {worst:.2e}; F̂(4) = {:.4}, F̂(8) = {:.4}; unique minimum at m = {argmin}",
            curve.f_hat[4], curve.f_hat[8]
        ),
    )
}

fn effective_dimension(dir: &Path) -> Verdict {
    // profile over n = 22 variables whose shape is F̂ for n′ = 20
    let n = 22;
    let rhos: Vec<f64> = (0..=n - 2).map(|m| m as f64 / (n - 2) as f64).collect();
    let curve = normalized_curve(20.0, &rhos).unwrap();
    let mean = curve.f_hat.iter().sum::<f64>() / curve.f_hat.len() as f64;
    let mut csv = String::from("order_m,relative_order,raw_strength,J\n");
    for (m, (rho, f)) in rhos.iter().zip(&curve.f_hat).enumerate() {
        csv.push_str(&format!("{m},{rho},{f},{}\n", f / mean));
    }
    let path = dir.join("synthetic_profile.csv");
    fs::write(&path, csv).unwrap();
    let out_dir = dir.join("fit");
    let out = bin()
        .args(["theory-fit", "--profile"])
        .arg(&path)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    if !out.status.success() {
        return verdict(false, format!("exit {:?}", out.status.code()));
    }
    let fit: serde_json::Value = serde_json::from_str(&fs::read_to_string(out_dir.join("fit.json")).unwrap()).unwrap();
    let n_eff = fit["n_eff"].as_f64().unwrap();
    verdict(
        (n_eff - 20.0).abs() <= 0.01,
        format!("fitted n′ = {n_eff:.5} (target 20 ± 0.01)"),
    )
}

fn grad_close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-5 * a.abs().max(b.abs()).max(1.0)
}

fn fd_parameters(m: &MlpModel, analytic: &Gradients, loss: impl Fn(&MlpModel) -> f64) -> usize {
    let h = 1e-5;
    let flat = analytic.flatten();
    let mut idx = 0;
    let mut bad = 0;
    for l in 0..m.layers().len() {
        let (rows, cols) = m.layers()[l].weight.dim();
        for r in 0..rows {
            for c in 0..cols {
                let (mut p, mut q) = (m.clone(), m.clone());
                p.layers_mut()[l].weight[[r, c]] += h;
                q.layers_mut()[l].weight[[r, c]] -= h;
                bad += usize::from(!grad_close(flat[idx], (loss(&p) - loss(&q)) / (2.0 * h)));
                idx += 1;
            }
        }
        for b in 0..m.layers()[l].bias.len() {
            let (mut p, mut q) = (m.clone(), m.clone());
            p.layers_mut()[l].bias[b] += h;
            q.layers_mut()[l].bias[b] -= h;
            bad += usize::from(!grad_close(flat[idx], (loss(&p) - loss(&q)) / (2.0 * h)));
            idx += 1;
        }
    }
    bad
}

fn gradients() -> Verdict {
    let mut bad = 0;
    let mut checked = 0;
    for seed in 0..3u64 {
        let model = MlpModel::init(&[6, 8, 8, 3], &mut rng::stream(60 + seed, &[])).unwrap();
        let x = Array2::from_shape_fn((5, 6), |(r, c)| {
            ((r * 7 + c * 3) as f64 * 0.71 + seed as f64).sin() * 1.3
        });
        let labels: Vec<usize> = (0..5).map(|r| r % 3).collect();
        let baseline: Vec<f64> = (0..6).map(|c| 0.1 * c as f64 - 0.2).collect();
        let batch = Batch {
            x: x.view(),
            labels: &labels,
            baseline: &baseline,
        };
        let (_, g) = classification_loss(&model, batch).unwrap();
        bad += fd_parameters(&model, &g, |mm| classification_loss(mm, batch).unwrap().0);
        checked += g.flatten().len();
        let mut r = rng::stream(61 + seed, &[]);
        for (r1, r2) in [(0.0, 0.5), (0.5, 1.0)] {
            let pairs: Vec<_> = (0..5)
                .map(|_| sample_nested_subsets(6, r1, r2, &mut r).unwrap())
                .collect();
            for kind in [OrderLoss::Encourage, OrderLoss::Penalize] {
                let (_, g) = order_loss_with_subsets(&model, batch, &pairs, kind).unwrap();
                bad += fd_parameters(&model, &g, |mm| {
                    order_loss_with_subsets(mm, batch, &pairs, kind).unwrap().0
                });
                checked += g.flatten().len();
            }
        }
        for row in 0..5 {
            let xr = x.row(row).to_vec();
            let (_, g) = input_gradient(&model, &xr, labels[row]).unwrap();
            for k in 0..6 {
                let (mut p, mut q) = (xr.clone(), xr.clone());
                p[k] += 1e-5;
                q[k] -= 1e-5;
                let fd = (input_gradient(&model, &p, labels[row]).unwrap().0
                    - input_gradient(&model, &q, labels[row]).unwrap().0)
                    / 2e-5;
                bad += usize::from(!grad_close(g[k], fd));
                checked += 1;
            }
        }
    }
    verdict(
        bad == 0,
        format!("{bad} of {checked} partial derivatives outside 1e-5 relative"),
    )
}

struct RunAll {
    dirs: [PathBuf; 2],
    elapsed: Duration,
    ok: bool,
    stderr: String,
}

/// Two concurrent single-worker runs with the same seed.
fn run_all_twice(root: &Path) -> RunAll {
    let dirs = [root.join("run-a"), root.join("run-b")];
    let start = Instant::now();
    let children: Vec<_> = dirs
        .iter()
        .map(|d| {
            bin()
                .args(["run-all", "--seed", RUN_SEED, "--workers", "1", "--out"])
                .arg(d)
                .stderr(std::process::Stdio::piped())
                .spawn()
                .unwrap()
        })
        .collect();
    let mut ok = true;
    let mut stderr = String::new();
    for c in children {
        let out = c.wait_with_output().unwrap();
        ok &= out.status.success();
        stderr.push_str(&String::from_utf8_lossy(&out.stderr));
    }
    RunAll {
        dirs,
        elapsed: start.elapsed(),
        ok,
        stderr,
    }
}

fn read(dir: &Path, rel: &str) -> (Vec<String>, Vec<Vec<String>>) {
    parse_csv(&fs::read_to_string(dir.join(rel)).unwrap_or_else(|e| panic!("{rel}: {e}")))
}

/// `J` by order from a profile CSV.
fn profile_j(dir: &Path, rel: &str) -> BTreeMap<usize, f64> {
    let (h, rows) = read(dir, rel);
    let (cm, cj) = (col(&h, "order_m"), col(&h, "J"));
    rows.iter().map(|r| (num(&r[cm]) as usize, num(&r[cj]))).collect()
}

fn bottleneck_repro(dir: &Path) -> Verdict {
    let mut holds = 0;
    let mut notes = Vec::new();
    for s in SEEDS {
        let j = profile_j(dir, &format!("seed-{s}/bottleneck/profile.csv"));
        let n = j.keys().max().unwrap() + 2;
        // round half up of (n−2)/2
        let mid = (n - 2).div_ceil(2);
        let low = j[&0].min(j[&1]);
        let high = j[&(n - 3)].min(j[&(n - 2)]);
        let ok = j[&mid] < low && j[&mid] < high;
        holds += usize::from(ok);
        notes.push(format!(
            "seed {s}: J({mid}) = {:.3} vs low {low:.3}, high {high:.3}",
            j[&mid]
        ));
    }
    verdict(holds >= 2, format!("{holds}/3 seeds; {}", notes.join("; ")))
}

fn band(j: &BTreeMap<usize, f64>, lo: f64, hi: f64) -> f64 {
    j.iter()
        .filter(|(&m, _)| m as f64 >= lo && m as f64 <= hi)
        .map(|(_, v)| v)
        .sum()
}

fn order_control(dir: &Path) -> Verdict {
    let (mut reduce, mut increase) = (0, 0);
    let mut notes = Vec::new();
    for s in SEEDS {
        let get = |t: &str| profile_j(dir, &format!("seed-{s}/order_control/profile_{t}.csv"));
        let (normal, high, middle) = (get("normal"), get("high-order"), get("middle-order"));
        let n = (normal.keys().max().unwrap() + 2) as f64;
        let low_n = band(&normal, 0.0, 0.5 * n);
        let low_h = band(&high, 0.0, 0.5 * n);
        let mid_n = band(&normal, 0.3 * n, 0.7 * n);
        let mid_m = band(&middle, 0.3 * n, 0.7 * n);
        reduce += usize::from(low_h < low_n);
        increase += usize::from(mid_m > mid_n);
        notes.push(format!(
            "seed {s}: low {low_h:.2} vs {low_n:.2}, middle {mid_m:.2} vs {mid_n:.2}"
        ));
    }
    verdict(
        reduce >= 2 && increase >= 2,
        format!("L− reduced {reduce}/3, L+ increased {increase}/3; {}", notes.join("; ")),
    )
}

fn robustness(dir: &Path) -> Verdict {
    let mut lower = 0;
    let mut notes = Vec::new();
    for s in SEEDS {
        let (h, rows) = read(dir, &format!("seed-{s}/robustness/robustness.csv"));
        let (cp, cd, ce, cc, ca) = (
            col(&h, "model_preset"),
            col(&h, "dnn_type"),
            col(&h, "epsilon"),
            col(&h, "clean_acc"),
            col(&h, "adv_acc"),
        );
        let find = |dnn: &str| {
            rows.iter()
                .find(|r| r[cp] == "mlp-5" && r[cd] == dnn && num(&r[ce]) == 0.2)
                .map(|r| (num(&r[cc]), num(&r[ca])))
                .unwrap()
        };
        let ((cn, an), (cr, ar)) = (find("normal"), find("high-order-robustness"));
        let ok = ar < an && (cn - cr).abs() <= 0.10;
        lower += usize::from(ok);
        notes.push(format!("seed {s}: adv {ar:.3} vs {an:.3}, clean {cr:.3} vs {cn:.3}"));
    }
    verdict(
        lower >= 2,
        format!("{lower}/3 seeds at ε = 0.2, MLP-5; {}", notes.join("; ")),
    )
}

fn trapezoid(xs: &[f64], ys: &[f64]) -> f64 {
    let mut area = 0.0;
    for k in 1..xs.len() {
        area += (xs[k] - xs[k - 1]) * (ys[k] + ys[k - 1]) / 2.0;
    }
    area
}

fn masking_area(dir: &Path, s: u64, t: &str) -> f64 {
    let (h, rows) = read(dir, &format!("seed-{s}/masking/masking_{t}.csv"));
    let (cm, cr, cs) = (col(&h, "m"), col(&h, "acc_random"), col(&h, "acc_surround"));
    let xs: Vec<f64> = rows.iter().map(|r| num(&r[cm])).collect();
    let diff: Vec<f64> = rows.iter().map(|r| num(&r[cs]) - num(&r[cr])).collect();
    trapezoid(&xs, &diff)
}

fn masking(dir: &Path) -> Verdict {
    let mut larger = 0;
    let mut notes = Vec::new();
    for s in SEEDS {
        let (an, ah) = (masking_area(dir, s, "normal"), masking_area(dir, s, "high-order"));
        larger += usize::from(ah > an);
        notes.push(format!("seed {s}: {ah:.3} vs {an:.3}"));
    }
    verdict(larger >= 2, format!("{larger}/3 seeds; {}", notes.join("; ")))
}

fn instability(dir: &Path) -> Verdict {
    let mut values = Vec::new();
    let mut contexts_ok = true;
    for s in SEEDS {
        let (h, rows) = read(dir, &format!("seed-{s}/instability/instability.csv"));
        contexts_ok &= num(&rows[0][col(&h, "contexts")]) == 100.0;
        values.push(num(&rows[0][col(&h, "instability")]));
    }
    let worst = values.iter().cloned().fold(0.0, f64::max);
    verdict(
        contexts_ok && worst < 0.05,
        format!("instability {values:.4?} with 100 contexts, all pairs (tol < 0.05)"),
    )
}

fn files(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.extension().is_some_and(|x| x == "csv") {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn determinism(run: &RunAll) -> Verdict {
    let a = fs::read(run.dirs[0].join("digests.json")).unwrap();
    let b = fs::read(run.dirs[1].join("digests.json")).unwrap();
    let (fa, fb) = (files(&run.dirs[0]), files(&run.dirs[1]));
    verdict(
        a == b && fa == fb && !fa.is_empty(),
        format!(
            "digests.json {} ({} bytes); {} table files {}",
            if a == b { "identical" } else { "differ" },
            a.len(),
            fa.len(),
            if fa == fb { "identical" } else { "differ" }
        ),
    )
}

fn main() -> ExitCode {
    // libtest flags such as --nocapture are ignored
    let scratch = tempfile::tempdir().unwrap();
    let mut results: Vec<(u32, &str, Verdict, Duration)> = Vec::new();
    let mut record = |id: u32, name: &'static str, limit: Option<Duration>, f: &mut dyn FnMut() -> Verdict| {
        let (v, t) = timed(limit, f);
        println!(
            "criterion {id:>2} {} {name}: {} [{:.1}s]",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail,
            t.as_secs_f64()
        );
        results.push((id, name, v, t));
    };
    let secs = Duration::from_secs;
    record(1, "efficiency decomposition", Some(secs(10)), &mut efficiency);
    record(2, "Shapley interaction identity", Some(secs(30)), &mut shapley_identity);
    record(3, "interaction axioms", Some(secs(30)), &mut five_properties);
    record(
        4,
        "per-order std (simulate-theorem1)",
        Some(secs(120)),
        &mut theorem1_cli,
    );
    record(5, "Δv expectation", Some(secs(120)), &mut theorem2);
    record(6, "theory curve shape", None, &mut theory_shape);
    record(7, "effective dimension fit (theory-fit)", None, &mut || {
        effective_dimension(scratch.path())
    });
    record(8, "gradient checks", Some(secs(60)), &mut gradients);

    let run = run_all_twice(scratch.path());
    println!(
        "run-all --seed {RUN_SEED} --workers 1, two concurrent runs: {} in {:.1}s",
        if run.ok { "ok" } else { "FAILED" },
        run.elapsed.as_secs_f64()
    );
    // both runs share the wall clock, so each limit is checked against the pair
    let dir = run.dirs[0].clone();
    let guard = |f: &dyn Fn(&Path) -> Verdict, limit: Option<u64>| -> Verdict {
        if !run.ok {
            return verdict(
                false,
                format!("run-all failed: {}", run.stderr.lines().last().unwrap_or("")),
            );
        }
        let mut v = f(&dir);
        if let Some(limit) = limit {
            if run.elapsed > secs(limit) {
                v.pass = false;
                v.detail.push_str(&format!(
                    "; run-all took {:.0}s over {limit}s",
                    run.elapsed.as_secs_f64()
                ));
            }
        }
        v
    };
    record(9, "bottleneck reproduction", None, &mut || {
        guard(&bottleneck_repro, Some(20 * 60))
    });
    record(10, "order control", None, &mut || guard(&order_control, Some(40 * 60)));
    record(11, "robustness direction", None, &mut || {
        guard(&robustness, Some(30 * 60))
    });
    record(12, "structural masking", None, &mut || guard(&masking, Some(40 * 60)));
    record(13, "instability", None, &mut || guard(&instability, None));
    record(14, "determinism", None, &mut || {
        if run.ok {
            determinism(&run)
        } else {
            verdict(false, "run-all failed")
        }
    });

    let failed: Vec<u32> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    println!(
        "acceptance: {}/{} criteria passed{}",
        results.len() - failed.len(),
        results.len(),
        if failed.is_empty() {
            String::new()
        } else {
            format!("; failed {failed:?}")
        }
    );
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
