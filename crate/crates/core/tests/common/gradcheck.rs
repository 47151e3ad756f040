//! Analytic gradients against central finite differences. Every check builds
//! a random small instance from `seed` and returns the relative error of the
//! whole gradient.

use flowssl::constraints::{Constraint, ConstraintSet};
use flowssl::final_trainer::{sce_loss, SceConfig};
use flowssl::nn::{mse_loss, softmax, softmax_ce_loss, Activation, LayerSpec, Matrix, MlpModel};
use flowssl::ssl::ae::{ae_loss, Layout, UnitMap};
use flowssl::ssl::tabcl::{batch_nt_xent, dual_head_loss};
use rand::Rng;

use super::{numeric_gradient, relative_error, rng, uniform_matrix};

pub const TOLERANCE: f64 = 1e-5;
const H: f64 = 1e-6;

pub type Check = fn(u64) -> f64;

pub const CHECKS: [(&str, Check); 9] = [
    ("mlp layers", mlp_layers),
    ("mse", mse),
    ("softmax cross-entropy", softmax_ce),
    ("constraint penalty", penalty),
    ("autoencoder loss", autoencoder),
    ("nt-xent", nt_xent),
    ("dual-head nt-xent", dual_head),
    ("weighted sce", sce),
    ("weighted sce, alpha only", sce_ce_only),
];

fn matrix_like(m: &Matrix, data: &[f64]) -> Matrix {
    Matrix::from_vec(m.rows(), m.cols(), data.to_vec()).unwrap()
}

fn params(model: &MlpModel) -> Vec<f64> {
    let mut out = Vec::new();
    for l in model.layers() {
        out.extend_from_slice(l.weight.data());
        out.extend_from_slice(&l.bias);
    }
    out
}

fn set_params(model: &mut MlpModel, v: &[f64]) {
    let mut k = 0;
    for l in model.layers_mut() {
        let nw = l.weight.data().len();
        l.weight.data_mut().copy_from_slice(&v[k..k + nw]);
        k += nw;
        let nb = l.bias.len();
        l.bias.copy_from_slice(&v[k..k + nb]);
        k += nb;
    }
}

/// ReLU, linear and softmax-output layers under a random linear read-out.
pub fn mlp_layers(seed: u64) -> f64 {
    let mut r = rng(seed);
    let specs = [
        LayerSpec::new(5, Activation::Relu),
        LayerSpec::new(4, Activation::Linear),
        LayerSpec::new(3, Activation::Softmax),
    ];
    let model = MlpModel::new(4, &specs, &mut r).unwrap();
    let x = uniform_matrix(&mut r, 5, 4, -1.0, 1.0);
    let probe = uniform_matrix(&mut r, 5, 3, -1.0, 1.0);
    let readout = |m: &MlpModel, x: &Matrix| -> f64 {
        let out = m.forward(x, false, &mut rng(0)).unwrap().0;
        out.data().iter().zip(probe.data()).map(|(a, b)| a * b).sum()
    };

    let (_, cache) = model.forward(&x, false, &mut rng(0)).unwrap();
    let g = model.backward(&cache, &probe).unwrap();
    let mut analytic = Vec::new();
    for (w, b) in g.weights.iter().zip(&g.biases) {
        analytic.extend_from_slice(w.data());
        analytic.extend_from_slice(b);
    }
    analytic.extend_from_slice(g.input.data());

    let theta = params(&model);
    let mut scratch = model.clone();
    let mut numeric = numeric_gradient(&theta, H, |v| {
        set_params(&mut scratch, v);
        readout(&scratch, &x)
    });
    numeric.extend(numeric_gradient(x.data(), H, |v| readout(&model, &matrix_like(&x, v))));
    relative_error(&analytic, &numeric)
}

pub fn mse(seed: u64) -> f64 {
    let mut r = rng(seed);
    let pred = uniform_matrix(&mut r, 5, 4, -2.0, 2.0);
    let target = uniform_matrix(&mut r, 5, 4, -2.0, 2.0);
    let (_, g) = mse_loss(&pred, &target).unwrap();
    let num = numeric_gradient(pred.data(), H, |v| mse_loss(&matrix_like(&pred, v), &target).unwrap().0);
    relative_error(g.data(), &num)
}

pub fn softmax_ce(seed: u64) -> f64 {
    let mut r = rng(seed);
    let logits = uniform_matrix(&mut r, 5, 4, -3.0, 3.0);
    let targets = super::probability_rows(&mut r, 5, 4);
    let w: Vec<f64> = (0..5).map(|_| r.gen_range(0.1..2.0)).collect();
    let (_, g) = softmax_ce_loss(&logits, &targets, &w).unwrap();
    let num = numeric_gradient(logits.data(), H, |v| {
        softmax_ce_loss(&matrix_like(&logits, v), &targets, &w).unwrap().0
    });
    relative_error(g.data(), &num)
}

/// Ratio (with an offset), sum and product rules on seven coordinates.
fn constraint_set() -> ConstraintSet {
    ConstraintSet::new(
        vec![
            Constraint::ratio(0, 1, 2, 0.5).with_offset(1.0),
            Constraint::sum(3, 4, 5, 0.7),
            Constraint::product(6, 1, 4, 0.3),
        ],
        7,
        1e-6,
    )
    .unwrap()
}

/// Smallest |residual| over a raw batch; small values sit near a kink.
fn min_residual(cons: &ConstraintSet, raw: &Matrix) -> f64 {
    raw.iter_rows()
        .flat_map(|row| cons.residuals(row))
        .map(f64::abs)
        .fold(f64::INFINITY, f64::min)
}

fn raw_batch(r: &mut impl Rng, cons: &ConstraintSet) -> Matrix {
    loop {
        let mut m = uniform_matrix(r, 5, 7, -2.0, 2.0);
        for row in 0..5 {
            // keep the ratio denominator well above its floor
            m.row_mut(row)[2] = r.gen_range(2.0..5.0);
        }
        if min_residual(cons, &m) > 1e-3 {
            return m;
        }
    }
}

pub fn penalty(seed: u64) -> f64 {
    let mut r = rng(seed);
    let cons = constraint_set();
    let x = raw_batch(&mut r, &cons);
    let (_, g) = cons.penalty(&x).unwrap();
    let num = numeric_gradient(x.data(), H, |v| cons.penalty(&matrix_like(&x, v)).unwrap().0);
    relative_error(g.data(), &num)
}

/// Continuous MSE, two categorical blocks and the unit-scaled penalty.
pub fn autoencoder(seed: u64) -> f64 {
    let mut r = rng(seed);
    let cons = constraint_set();
    let layout = Layout {
        continuous: 7,
        categorical: vec![2, 3],
    };
    let mut units = UnitMap {
        mean: (0..7).map(|_| r.gen_range(-1.0..1.0)).collect(),
        std: (0..7).map(|_| r.gen_range(0.5..2.0)).collect(),
    };
    units.mean[2] = 6.0;
    let width = layout.width();
    let (output, target) = loop {
        let output = uniform_matrix(&mut r, 5, width, -1.5, 1.5);
        let mut raw = output.columns(0, 7);
        for row in 0..5 {
            for (j, v) in raw.row_mut(row).iter_mut().enumerate() {
                *v = *v * units.std[j] + units.mean[j];
            }
        }
        if min_residual(&cons, &raw) < 1e-3 {
            continue;
        }
        let mut target = uniform_matrix(&mut r, 5, width, -1.0, 1.0);
        for row in 0..5 {
            let t = target.row_mut(row);
            for v in &mut t[7..] {
                *v = 0.0;
            }
            t[7 + r.gen_range(0..2)] = 1.0;
            t[9 + r.gen_range(0..3)] = 1.0;
        }
        break (output, target);
    };
    let loss = ae_loss(&output, &target, &layout, &cons, &units).unwrap();
    assert!(loss.cons > 0.0 && loss.ce_cat > 0.0);
    let num = numeric_gradient(output.data(), H, |v| {
        ae_loss(&matrix_like(&output, v), &target, &layout, &cons, &units)
            .unwrap()
            .total()
    });
    relative_error(loss.grad.data(), &num)
}

pub fn nt_xent(seed: u64) -> f64 {
    let mut r = rng(seed);
    let v1 = uniform_matrix(&mut r, 5, 4, -1.0, 1.0);
    let v2 = uniform_matrix(&mut r, 5, 4, -1.0, 1.0);
    let tau = r.gen_range(0.1..1.0);
    let (_, g1, g2) = batch_nt_xent(&v1, &v2, tau).unwrap();
    let mut analytic = g1.data().to_vec();
    analytic.extend_from_slice(g2.data());
    let joint: Vec<f64> = v1.data().iter().chain(v2.data()).copied().collect();
    let num = numeric_gradient(&joint, H, |v| {
        let (a, b) = v.split_at(20);
        batch_nt_xent(&matrix_like(&v1, a), &matrix_like(&v2, b), tau).unwrap().0
    });
    relative_error(&analytic, &num)
}

pub fn dual_head(seed: u64) -> f64 {
    let mut r = rng(seed);
    let c1 = uniform_matrix(&mut r, 5, 4, -1.0, 1.0);
    let c2 = uniform_matrix(&mut r, 5, 4, -1.0, 1.0);
    let k1 = uniform_matrix(&mut r, 5, 3, -1.0, 1.0);
    let k2 = uniform_matrix(&mut r, 5, 3, -1.0, 1.0);
    let lambda = r.gen_range(0.0..1.0);
    let l = dual_head_loss((&c1, &c2), (&k1, &k2), 0.5, 0.2, lambda).unwrap();
    let analytic: Vec<f64> = [&l.grad_cont.0, &l.grad_cont.1, &l.grad_cat.0, &l.grad_cat.1]
        .iter()
        .flat_map(|m| m.data().to_vec())
        .collect();
    let joint: Vec<f64> = [&c1, &c2, &k1, &k2].iter().flat_map(|m| m.data().to_vec()).collect();
    let num = numeric_gradient(&joint, H, |v| {
        let (a, rest) = v.split_at(20);
        let (b, rest) = rest.split_at(20);
        let (c, d) = rest.split_at(15);
        dual_head_loss(
            (&matrix_like(&c1, a), &matrix_like(&c2, b)),
            (&matrix_like(&k1, c), &matrix_like(&k2, d)),
            0.5,
            0.2,
            lambda,
        )
        .unwrap()
        .total
    });
    relative_error(&analytic, &num)
}

fn sce_with(seed: u64, cfg: &SceConfig) -> f64 {
    let mut r = rng(seed);
    let logits = uniform_matrix(&mut r, 5, 4, -2.0, 2.0);
    let labels: Vec<usize> = (0..5).map(|_| r.gen_range(0..4)).collect();
    let w: Vec<f64> = (0..5).map(|_| r.gen_range(0.2..1.0)).collect();
    let (_, g) = sce_loss(&softmax(&logits), &labels, &w, cfg).unwrap();
    let num = numeric_gradient(logits.data(), H, |v| {
        sce_loss(&softmax(&matrix_like(&logits, v)), &labels, &w, cfg).unwrap().0
    });
    relative_error(g.data(), &num)
}

pub fn sce(seed: u64) -> f64 {
    sce_with(seed, &SceConfig::default())
}

pub fn sce_ce_only(seed: u64) -> f64 {
    let cfg = SceConfig {
        alpha: 1.0,
        beta: 0.0,
        ..SceConfig::default()
    };
    sce_with(seed, &cfg)
}
