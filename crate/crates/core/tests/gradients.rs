use bottleneck::coalition::Coalition;
use bottleneck::neural::{
    classification_loss, input_gradient, input_gradients, order_loss_with_subsets, sample_nested_subsets, Batch,
    Gradients, MlpModel, OrderLoss,
};
use bottleneck::rng;
use ndarray::Array2;
use rand::Rng;

const H: f64 = 1e-5;
const REL: f64 = 1e-5;

fn model(seed: u64) -> MlpModel {
    MlpModel::init(&[5, 7, 6, 3], &mut rng::stream(seed, &[1])).unwrap()
}

fn inputs(seed: u64, rows: usize) -> (Array2<f64>, Vec<usize>, Vec<f64>) {
    let mut r = rng::stream(seed, &[2]);
    let x = Array2::from_shape_fn((rows, 5), |_| r.random_range(-1.5..1.5));
    let labels = (0..rows).map(|k| k % 3).collect();
    let baseline = (0..5).map(|_| r.random_range(-0.3..0.3)).collect();
    (x, labels, baseline)
}

fn assert_close(analytic: f64, numeric: f64, what: &str) {
    let scale = analytic.abs().max(numeric.abs()).max(1.0);
    assert!(
        (analytic - numeric).abs() <= REL * scale,
        "{what}: analytic {analytic} vs numeric {numeric}"
    );
}

/// Central differences over every parameter of `m`.
fn check_parameters(m: &MlpModel, analytic: &Gradients, loss: impl Fn(&MlpModel) -> f64, what: &str) {
    let flat = analytic.flatten();
    let mut idx = 0;
    for l in 0..m.layers().len() {
        let (rows, cols) = m.layers()[l].weight.dim();
        for r in 0..rows {
            for c in 0..cols {
                let mut plus = m.clone();
                plus.layers_mut()[l].weight[[r, c]] += H;
                let mut minus = m.clone();
                minus.layers_mut()[l].weight[[r, c]] -= H;
                assert_close(
                    flat[idx],
                    (loss(&plus) - loss(&minus)) / (2.0 * H),
                    &format!("{what} W{l}[{r},{c}]"),
                );
                idx += 1;
            }
        }
        for b in 0..m.layers()[l].bias.len() {
            let mut plus = m.clone();
            plus.layers_mut()[l].bias[b] += H;
            let mut minus = m.clone();
            minus.layers_mut()[l].bias[b] -= H;
            assert_close(
                flat[idx],
                (loss(&plus) - loss(&minus)) / (2.0 * H),
                &format!("{what} b{l}[{b}]"),
            );
            idx += 1;
        }
    }
    assert_eq!(idx, flat.len());
}

#[test]
fn classification_gradient() {
    for seed in 0..3 {
        let m = model(seed);
        let (x, labels, baseline) = inputs(seed, 6);
        let batch = Batch {
            x: x.view(),
            labels: &labels,
            baseline: &baseline,
        };
        let (_, g) = classification_loss(&m, batch).unwrap();
        check_parameters(&m, &g, |mm| classification_loss(mm, batch).unwrap().0, "classification");
    }
}

fn subsets(seed: u64, rows: usize, r1: f64, r2: f64) -> Vec<(Coalition, Coalition)> {
    let mut r = rng::stream(seed, &[3]);
    (0..rows)
        .map(|_| sample_nested_subsets(5, r1, r2, &mut r).unwrap())
        .collect()
}

#[test]
fn order_loss_gradients() {
    for (seed, (r1, r2)) in [(0.2, 0.6), (0.0, 0.4), (0.4, 1.0)].into_iter().enumerate() {
        let seed = seed as u64;
        let m = model(10 + seed);
        let (x, labels, baseline) = inputs(10 + seed, 5);
        let batch = Batch {
            x: x.view(),
            labels: &labels,
            baseline: &baseline,
        };
        let pairs = subsets(seed, 5, r1, r2);
        for kind in [OrderLoss::Encourage, OrderLoss::Penalize] {
            let (_, g) = order_loss_with_subsets(&m, batch, &pairs, kind).unwrap();
            check_parameters(
                &m,
                &g,
                |mm| order_loss_with_subsets(mm, batch, &pairs, kind).unwrap().0,
                &format!("{kind:?} ({r1},{r2})"),
            );
        }
    }
}

#[test]
fn input_gradient_matches_differences() {
    for seed in 0..3 {
        let m = model(20 + seed);
        let (x, labels, _) = inputs(20 + seed, 4);
        let (_, batched) = input_gradients(&m, x.view(), &labels).unwrap();
        for r in 0..x.nrows() {
            let row = x.row(r).to_vec();
            let (_, g) = input_gradient(&m, &row, labels[r]).unwrap();
            for k in 0..row.len() {
                let mut p = row.clone();
                p[k] += H;
                let mut q = row.clone();
                q[k] -= H;
                let fd = (input_gradient(&m, &p, labels[r]).unwrap().0 - input_gradient(&m, &q, labels[r]).unwrap().0)
                    / (2.0 * H);
                assert_close(g[k], fd, &format!("input row {r} feature {k}"));
                assert_eq!(g[k], batched[[r, k]]);
            }
        }
    }
}
