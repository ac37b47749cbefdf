//! Independent oracles shared by the integration suites.
#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use d2ue::similarity::FeatureMatrix;
use d2ue::tensor::{Tape, Tensor, Var};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut impl Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// Haar-ish random orthogonal matrix: Q of the QR factorization of a
/// Gaussian matrix, with column signs fixed by R's diagonal.
pub fn random_orthogonal(rng: &mut impl Rng, n: usize) -> DMatrix<f64> {
    let qr = gaussian(rng, n, n).qr();
    let (mut q, r) = (qr.q(), qr.r());
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

pub fn to_tensor(m: &DMatrix<f64>) -> Tensor {
    let mut data = Vec::with_capacity(m.len());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            data.push(m[(i, j)]);
        }
    }
    Tensor::new(&[m.nrows(), m.ncols()], data).unwrap()
}

pub fn to_features(m: &DMatrix<f64>) -> FeatureMatrix {
    FeatureMatrix::new(to_tensor(m)).unwrap()
}

/// `tr(K·H·L·H) / (r−1)²` with dense centering.
pub fn hsic_oracle(k: &DMatrix<f64>, l: &DMatrix<f64>) -> f64 {
    let r = k.nrows();
    let h = DMatrix::<f64>::identity(r, r) - DMatrix::from_element(r, r, 1.0 / r as f64);
    (k * &h * l * &h).trace() / ((r - 1) * (r - 1)) as f64
}

pub fn cka_oracle(p: &DMatrix<f64>, q: &DMatrix<f64>) -> f64 {
    let k = p * p.transpose();
    let l = q * q.transpose();
    hsic_oracle(&k, &l) / (hsic_oracle(&k, &k) * hsic_oracle(&l, &l)).sqrt()
}

/// Feature-space form `‖QcᵀPc‖²_F / (‖PcᵀPc‖_F·‖QcᵀQc‖_F)` on column-centered
/// features; algebraically equal to the Gram-matrix form.
pub fn cka_feature_space(p: &DMatrix<f64>, q: &DMatrix<f64>) -> f64 {
    let center = |m: &DMatrix<f64>| {
        let mut c = m.clone();
        for mut col in c.column_iter_mut() {
            let mean = col.mean();
            col.add_scalar_mut(-mean);
        }
        c
    };
    let (pc, qc) = (center(p), center(q));
    (qc.transpose() * &pc).norm_squared() / ((pc.transpose() * &pc).norm() * (qc.transpose() * &qc).norm())
}

/// Fraction of (positive, negative) pairs ranked correctly, ties ½.
pub fn auroc_pairs(scores: &[f64], labels: &[u8]) -> f64 {
    let (mut num, mut pairs) = (0.0, 0usize);
    for (i, &si) in scores.iter().enumerate() {
        for (j, &sj) in scores.iter().enumerate() {
            if labels[i] == 1 && labels[j] == 0 {
                pairs += 1;
                if si > sj {
                    num += 1.0;
                } else if si == sj {
                    num += 0.5;
                }
            }
        }
    }
    num / pairs as f64
}

/// `Σ (recall(t) − recall(t_prev))·precision(t)` over the distinct score
/// thresholds `t`, highest first, each computed from scratch.
pub fn ap_sweep(scores: &[f64], labels: &[u8]) -> f64 {
    let mut thresholds = scores.to_vec();
    thresholds.sort_by(|a, b| b.partial_cmp(a).unwrap());
    thresholds.dedup();
    let n_pos = labels.iter().filter(|&&l| l == 1).count() as f64;
    let (mut ap, mut prev_recall) = (0.0, 0.0);
    for t in thresholds {
        let selected: Vec<usize> = (0..scores.len()).filter(|&i| scores[i] >= t).collect();
        let tp = selected.iter().filter(|&&i| labels[i] == 1).count() as f64;
        let recall = tp / n_pos;
        ap += (recall - prev_recall) * (tp / selected.len() as f64);
        prev_recall = recall;
    }
    ap
}

/// Gradient check of the graph built by `build` against central
/// differences with step `h`.
///
/// A non-scalar output is reduced to `Σ W ⊙ out` with a fixed random `W`,
/// so every output element carries weight. Returns, per input, the error
/// `‖g − ĝ‖` relative to the larger norm of the full analytic and numeric
/// gradient over all inputs. Normalizing by the whole gradient keeps an
/// input whose exact gradient is zero (e.g. a bias that centering cancels)
/// from turning roundoff into a relative error of 1.
pub fn fd_check(inputs: &[Tensor], seed: u64, h: f64, build: &GraphFn<'_>) -> Vec<f64> {
    let weights = {
        let tape = Tape::new();
        let vars: Vec<_> = inputs.iter().map(|t| tape.constant(t.clone())).collect();
        let shape = build(&tape, &vars).unwrap().shape();
        let mut r = rng(seed ^ 0x5eed);
        let n: usize = shape.iter().product();
        Tensor::new(&shape, (0..n).map(|_| r.gen_range(-1.0..1.0)).collect()).unwrap()
    };

    let tape = Tape::new();
    let vars: Vec<_> = inputs.iter().map(|t| tape.var(t.clone())).collect();
    let out = build(&tape, &vars).unwrap();
    let loss = out.mul(tape.constant(weights.clone())).unwrap().sum();
    tape.backward(loss).unwrap();
    let analytic: Vec<Tensor> = vars
        .iter()
        .zip(inputs)
        .map(|(v, t)| v.grad().unwrap_or_else(|| Tensor::zeros(t.shape())))
        .collect();

    let mut numeric = Vec::with_capacity(inputs.len());
    for (k, input) in inputs.iter().enumerate() {
        let column: Vec<f64> = (0..input.len())
            .map(|e| {
                let eval = |delta: f64| {
                    let mut moved = inputs.to_vec();
                    moved[k].data_mut()[e] += delta;
                    weighted_value(build, &moved, &weights)
                };
                (eval(h) - eval(-h)) / (2.0 * h)
            })
            .collect();
        numeric.push(column);
    }
    let flat = |parts: Vec<&[f64]>| parts.concat();
    let a_all = flat(analytic.iter().map(Tensor::data).collect());
    let n_all = flat(numeric.iter().map(Vec::as_slice).collect());
    let scale = norm(&a_all).max(norm(&n_all)).max(1e-12);
    analytic
        .iter()
        .zip(&numeric)
        .map(|(a, n)| {
            let diff: Vec<f64> = a.data().iter().zip(n).map(|(x, y)| x - y).collect();
            norm(&diff) / scale
        })
        .collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub type GraphFn<'a> = dyn for<'t> Fn(&'t Tape, &[Var<'t>]) -> d2ue::Result<Var<'t>> + 'a;

/// Pins a closure to the higher-ranked graph-builder signature.
pub fn graph<F>(f: F) -> F
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> d2ue::Result<Var<'t>>,
{
    f
}

fn weighted_value(build: &GraphFn<'_>, inputs: &[Tensor], weights: &Tensor) -> f64 {
    let tape = Tape::new();
    let vars: Vec<_> = inputs.iter().map(|t| tape.constant(t.clone())).collect();
    let out = build(&tape, &vars).unwrap().value();
    out.data().iter().zip(weights.data()).map(|(a, b)| a * b).sum()
}

pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / na.max(nb).max(1e-12)
}

/// Tensor of `shape` with entries in `lo..hi`, optionally kept at least
/// `gap` away from zero (to stay clear of kinks at 0).
pub fn random_tensor(rng: &mut impl Rng, shape: &[usize], lo: f64, hi: f64, gap: f64) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| loop {
            let v = rng.gen_range(lo..hi);
            if v.abs() >= gap {
                break v;
            }
        })
        .collect();
    Tensor::new(shape, data).unwrap()
}
pub mod suites;
