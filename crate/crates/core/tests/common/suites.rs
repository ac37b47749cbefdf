//! Property suites whose outcome is reported as a single verdict. The
//! focused test files assert on them; the acceptance runner prints them.

use nalgebra::DMatrix;
use rand::Rng;

use d2ue::data::{generate_normal, Image};
use d2ue::dsu::{self, Reduction, ScoreMethod};
use d2ue::metrics::{auroc, average_precision, LabeledScores};
use d2ue::model::{reconstruction_error, AutoencoderConfig, Learner};
use d2ue::rar::{sim_loss, Ensemble, TrainConfig};
use d2ue::similarity::{cka, cka_graph, similarity, SimilarityKind};
use d2ue::tensor::{Tape, Tensor, Var};

use super::*;

/// Outcome of one suite: pass flag plus a human-readable summary.
pub struct Verdict {
    pub pass: bool,
    pub detail: String,
}

fn scaled(m: &DMatrix<f64>, a: f64) -> DMatrix<f64> {
    m * a
}

// ---------------------------------------------------------------- kernels

/// CKA under `P → αPU`, `Q → βQV` on 100 random 16×8 pairs, plus
/// `CKA(P, P) = 1`.
pub fn kernel_invariance(seed: u64) -> Verdict {
    let mut r = rng(seed);
    let (mut worst_inv, mut worst_self) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let p = gaussian(&mut r, 16, 8);
        let q = gaussian(&mut r, 16, 8);
        let (alpha, beta) = (r.gen_range(0.01..=10.0), r.gen_range(0.01..=10.0));
        let (u, v) = (random_orthogonal(&mut r, 8), random_orthogonal(&mut r, 8));
        let base = cka(&to_features(&p), &to_features(&q)).unwrap();
        let moved = cka(&to_features(&(scaled(&p, alpha) * u)), &to_features(&(scaled(&q, beta) * v))).unwrap();
        worst_inv = worst_inv.max((moved - base).abs());
        let selfsim = cka(&to_features(&p), &to_features(&p)).unwrap();
        worst_self = worst_self.max((selfsim - 1.0).abs());
    }
    Verdict {
        pass: worst_inv <= 1e-6 && worst_self <= 1e-9,
        detail: format!("max |ΔCKA| {worst_inv:.2e} (≤ 1e-6), max |CKA(P,P) − 1| {worst_self:.2e} (≤ 1e-9)"),
    }
}

/// Largest similarity change over 100 random pairs under isotropic scaling
/// and under independent orthogonal maps. Each pair is first rescaled to
/// unit distance under its own kind so the distance kernels are not
/// saturated at 0.
pub fn invariance_deviation(kind: SimilarityKind, seed: u64) -> (f64, f64) {
    let mut r = rng(seed);
    let (mut scale_dev, mut orth_dev) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let p0 = gaussian(&mut r, 16, 8);
        let q0 = gaussian(&mut r, 16, 8);
        let unit = match kind {
            SimilarityKind::Euclidean => (&p0 - &q0).norm(),
            SimilarityKind::Manhattan => (&p0 - &q0).abs().sum(),
            _ => 1.0,
        };
        let (p, q) = (scaled(&p0, 1.0 / unit), scaled(&q0, 1.0 / unit));
        let (alpha, beta) = (r.gen_range(0.01..=10.0), r.gen_range(0.01..=10.0));
        let (u, v) = (random_orthogonal(&mut r, 8), random_orthogonal(&mut r, 8));
        let sim = |a: &DMatrix<f64>, b: &DMatrix<f64>| similarity(kind, &to_features(a), &to_features(b)).unwrap();
        let base = sim(&p, &q);
        scale_dev = scale_dev.max((sim(&scaled(&p, alpha), &scaled(&q, beta)) - base).abs());
        orth_dev = orth_dev.max((sim(&(&p * u), &(&q * v)) - base).abs());
    }
    (scale_dev, orth_dev)
}

/// The invariance table: which kinds are unchanged by isotropic scaling and
/// by orthogonal transformation.
pub fn invariance_matrix(seed: u64) -> Verdict {
    let kinds = [
        SimilarityKind::Euclidean,
        SimilarityKind::Manhattan,
        SimilarityKind::Cosine,
        SimilarityKind::Pearson,
        SimilarityKind::Cka,
    ];
    let mut pass = true;
    let mut cells = Vec::new();
    for kind in kinds {
        let (s, o) = invariance_deviation(kind, seed);
        let scale_ok = match kind {
            SimilarityKind::Euclidean | SimilarityKind::Manhattan => s > 1e-3,
            _ => s <= 1e-6,
        };
        let orth_ok = match kind {
            SimilarityKind::Cka => o <= 1e-6,
            _ => o > 1e-6,
        };
        pass &= scale_ok && orth_ok;
        cells.push(format!("{kind}: scale {s:.1e} orth {o:.1e}"));
    }
    Verdict {
        pass,
        detail: cells.join("; "),
    }
}

// ---------------------------------------------------------------- gradients

type Build = Box<dyn for<'t> Fn(&'t Tape, &[Var<'t>]) -> d2ue::Result<Var<'t>>>;

struct OpCase {
    name: &'static str,
    /// Input tensors for one random instance.
    inputs: fn(&mut ChaCha8Rng) -> Vec<Tensor>,
    build: Build,
}

use rand_chacha::ChaCha8Rng;

fn dims(r: &mut ChaCha8Rng) -> (usize, usize) {
    (r.gen_range(2..=5), r.gen_range(2..=5))
}

fn one(r: &mut ChaCha8Rng, lo: f64, hi: f64, gap: f64) -> Vec<Tensor> {
    let (a, b) = dims(r);
    vec![random_tensor(r, &[a, b], lo, hi, gap)]
}

fn two(r: &mut ChaCha8Rng, lo: f64, hi: f64, gap: f64) -> Vec<Tensor> {
    let (a, b) = dims(r);
    vec![random_tensor(r, &[a, b], -2.0, 2.0, 0.0), random_tensor(r, &[a, b], lo, hi, gap)]
}

fn op_cases() -> Vec<OpCase> {
    fn case(name: &'static str, inputs: fn(&mut ChaCha8Rng) -> Vec<Tensor>, build: Build) -> OpCase {
        OpCase { name, inputs, build }
    }
    vec![
        case("add", |r| two(r, -2.0, 2.0, 0.0), Box::new(|_, v| v[0].add(v[1]))),
        case("sub", |r| two(r, -2.0, 2.0, 0.0), Box::new(|_, v| v[0].sub(v[1]))),
        case("mul", |r| two(r, -2.0, 2.0, 0.0), Box::new(|_, v| v[0].mul(v[1]))),
        case("div", |r| two(r, -2.0, 2.0, 0.5), Box::new(|_, v| v[0].div(v[1]))),
        case("add_scalar", |r| one(r, -2.0, 2.0, 0.0), Box::new(|_, v| Ok(v[0].add_scalar(0.7)))),
        case("mul_scalar", |r| one(r, -2.0, 2.0, 0.0), Box::new(|_, v| Ok(v[0].mul_scalar(-1.3)))),
        case("neg", |r| one(r, -2.0, 2.0, 0.0), Box::new(|_, v| Ok(v[0].neg()))),
        case("relu", |r| one(r, -2.0, 2.0, 1e-3), Box::new(|_, v| Ok(v[0].relu()))),
        case("sigmoid", |r| one(r, -4.0, 4.0, 0.0), Box::new(|_, v| Ok(v[0].sigmoid()))),
        case("exp", |r| one(r, -2.0, 2.0, 0.0), Box::new(|_, v| Ok(v[0].exp()))),
        case("abs", |r| one(r, -2.0, 2.0, 1e-3), Box::new(|_, v| Ok(v[0].abs()))),
        case("sqrt", |r| one(r, 0.2, 3.0, 0.0), Box::new(|_, v| Ok(v[0].sqrt()))),
        case("transpose", |r| one(r, -2.0, 2.0, 0.0), Box::new(|_, v| v[0].transpose())),
        case(
            "reshape",
            |r| one(r, -2.0, 2.0, 0.0),
            Box::new(|_, v| {
                let n = v[0].shape().iter().product::<usize>();
                v[0].reshape(&[1, n])
            }),
        ),
        case(
            "matmul",
            |r| {
                let (a, b) = dims(r);
                let c = r.gen_range(2..=5);
                vec![
                    random_tensor(r, &[a, b], -2.0, 2.0, 0.0),
                    random_tensor(r, &[b, c], -2.0, 2.0, 0.0),
                ]
            },
            Box::new(|_, v| v[0].matmul(v[1])),
        ),
        case("sum_rows", |r| one(r, -2.0, 2.0, 0.0), Box::new(|_, v| v[0].sum_rows())),
        case("sum", |r| one(r, -2.0, 2.0, 0.0), Box::new(|_, v| Ok(v[0].sum()))),
        case("mean", |r| one(r, -2.0, 2.0, 0.0), Box::new(|_, v| Ok(v[0].mean()))),
        case("frobenius_norm", |r| one(r, -2.0, 2.0, 0.0), Box::new(|_, v| Ok(v[0].frobenius_norm()))),
        case(
            "trace",
            |r| {
                let n = r.gen_range(2..=5);
                vec![random_tensor(r, &[n, n], -2.0, 2.0, 0.0)]
            },
            Box::new(|_, v| v[0].trace()),
        ),
        case("mse", |r| two(r, -2.0, 2.0, 0.0), Box::new(|_, v| v[0].mse(v[1]))),
        case(
            "broadcast_scalar",
            |r| vec![Tensor::scalar(r.gen_range(-2.0..2.0))],
            Box::new(|_, v| v[0].broadcast_scalar(&[3, 4])),
        ),
    ]
}

fn small_arch(seed: u64) -> AutoencoderConfig {
    AutoencoderConfig {
        input_dim: 12,
        hidden_dims: vec![7],
        bottleneck_dim: 3,
        init_seed: seed,
        ..AutoencoderConfig::default()
    }
}

/// Random values for every parameter of `l`, biases included, so that no
/// pre-activation sits exactly on the ReLU kink at 0.
fn param_tensors(l: &Learner, r: &mut ChaCha8Rng) -> Vec<Tensor> {
    l.parameters()
        .iter()
        .map(|p| random_tensor(r, p.value.shape(), -0.6, 0.6, 0.0))
        .collect()
}

/// Random parameters and a `6 × 12` batch whose bottleneck features have
/// at least two columns with variance. With fewer, CKA is locally constant
/// in the parameters and the instance checks nothing but roundoff.
fn live_instance(learner: &Learner, r: &mut ChaCha8Rng) -> (Vec<Tensor>, Tensor) {
    loop {
        let params = param_tensors(learner, r);
        let x = random_tensor(r, &[6, 12], 0.0, 1.0, 0.0);
        let tape = Tape::new();
        let vars: Vec<_> = params.iter().map(|p| tape.constant(p.clone())).collect();
        let feats = learner.forward_graph(&vars, tape.constant(x.clone())).unwrap().features.value();
        let (rows, cols) = feats.dims2();
        let live = (0..cols)
            .filter(|&j| {
                let col: Vec<f64> = (0..rows).map(|i| feats.get2(i, j)).collect();
                let mean = col.iter().sum::<f64>() / rows as f64;
                col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() > 1e-6
            })
            .count();
        if live >= 2 {
            return (params, x);
        }
    }
}

/// Worst relative error per checked path over 20 instances each:
/// `(name, worst, tolerance)`.
pub fn gradient_table(seed: u64) -> Vec<(String, f64, f64)> {
    const H: f64 = 1e-6;
    let mut table = Vec::new();
    let mut r = rng(seed);
    for case in op_cases() {
        let mut worst = 0.0f64;
        for i in 0..20 {
            let inputs = (case.inputs)(&mut r);
            for e in fd_check(&inputs, seed + i, H, &*case.build) {
                worst = worst.max(e);
            }
        }
        table.push((case.name.to_string(), worst, 1e-5));
    }

    // CKA of encoder features against a fixed batch, w.r.t. every parameter.
    let mut worst = 0.0f64;
    for i in 0..20 {
        let learner = Learner::init(small_arch(seed + i)).unwrap();
        let (params, x) = live_instance(&learner, &mut r);
        let q = random_tensor(&mut r, &[6, 3], -1.0, 1.0, 0.0);
        let build = graph(|tape, v| {
            let out = learner.forward_graph(v, tape.constant(x.clone()))?;
            cka_graph(out.features, tape.constant(q.clone()))
        });
        for e in fd_check(&params, seed + i, H, &build) {
            worst = worst.max(e);
        }
    }
    table.push(("cka_through_encoder".into(), worst, 1e-5));

    // Full training objective: reconstruction + λ·repulsion from two frozen
    // feature batches.
    let mut worst = 0.0f64;
    for i in 0..20 {
        let learner = Learner::init(small_arch(seed + 100 + i)).unwrap();
        let (params, x) = live_instance(&learner, &mut r);
        let frozen: Vec<Tensor> = (0..2).map(|_| random_tensor(&mut r, &[6, 3], -1.0, 1.0, 0.0)).collect();
        let build = graph(|tape, v| {
            let xv = tape.constant(x.clone());
            let out = learner.forward_graph(v, xv)?;
            let fz: Vec<_> = frozen.iter().map(|f| tape.constant(f.clone())).collect();
            let sim = sim_loss(SimilarityKind::Cka, out.features, &fz)?;
            out.reconstruction.mse(xv)?.add(sim.mul_scalar(0.8))
        });
        for e in fd_check(&params, seed + i, H, &build) {
            worst = worst.max(e);
        }
    }
    table.push(("training_objective".into(), worst, 1e-5));

    // Per-sample input gradient of the reconstruction MSE.
    let mut worst = 0.0f64;
    for i in 0..20 {
        let mut arch = small_arch(seed + 200 + i);
        arch.input_dim = 64;
        arch.hidden_dims = vec![10];
        let mut learner = Learner::init(arch).unwrap();
        learner.freeze();
        let img = Image::new(8, 8, (0..64).map(|_| r.gen_range(0.0..1.0)).collect()).unwrap();
        let analytic = dsu::input_gradient(&learner, &img).unwrap();
        let loss = |pixels: &[f64]| {
            let x = Tensor::new(&[1, 64], pixels.to_vec()).unwrap();
            reconstruction_error(&learner.reconstruct(&x).unwrap(), &x).unwrap()
        };
        let numeric: Vec<f64> = (0..64)
            .map(|p| {
                let (mut up, mut down) = (img.pixels.clone(), img.pixels.clone());
                up[p] += H;
                down[p] -= H;
                (loss(&up) - loss(&down)) / (2.0 * H)
            })
            .collect();
        worst = worst.max(relative_error(analytic.data(), &numeric));
    }
    table.push(("input_gradient".into(), worst, 1e-4));
    table
}

pub fn gradient_suite(seed: u64) -> Verdict {
    let table = gradient_table(seed);
    let failures: Vec<String> = table
        .iter()
        .filter(|(_, e, tol)| !(e <= tol))
        .map(|(n, e, tol)| format!("{n} {e:.1e} > {tol:.0e}"))
        .collect();
    let worst_param = table
        .iter()
        .filter(|(n, ..)| n != "input_gradient")
        .map(|t| t.1)
        .fold(0.0, f64::max);
    let input = table.iter().find(|t| t.0 == "input_gradient").map(|t| t.1).unwrap_or(f64::NAN);
    Verdict {
        pass: failures.is_empty(),
        detail: if failures.is_empty() {
            format!(
                "{} paths × 20 instances; worst parameter rel. error {worst_param:.1e} (≤ 1e-5), input {input:.1e} (≤ 1e-4)",
                table.len()
            )
        } else {
            failures.join("; ")
        },
    }
}

// ---------------------------------------------------------------- metrics

/// Random labeled instance of size `2..=max_n` with both classes. Odd
/// instances draw scores from five levels, producing heavy ties.
pub fn metric_instance(r: &mut impl Rng, index: usize, max_n: usize) -> (Vec<f64>, Vec<u8>) {
    let n = r.gen_range(2..=max_n);
    let mut labels: Vec<u8> = (0..n).map(|_| r.gen_range(0..=1)).collect();
    labels[0] = 0;
    labels[1] = 1;
    let scores = (0..n)
        .map(|_| {
            if index % 2 == 1 {
                r.gen_range(0..5) as f64 / 4.0
            } else {
                r.gen_range(-3.0..3.0)
            }
        })
        .collect();
    (scores, labels)
}

pub fn metric_oracles(seed: u64) -> Verdict {
    let mut r = rng(seed);
    let (mut worst_auc, mut worst_ap) = (0.0f64, 0.0f64);
    for i in 0..200 {
        let (scores, labels) = metric_instance(&mut r, i, 1000);
        let ls = LabeledScores::new(scores.clone(), labels.clone()).unwrap();
        worst_auc = worst_auc.max((auroc(&ls).unwrap() - auroc_pairs(&scores, &labels)).abs());
        worst_ap = worst_ap.max((average_precision(&ls).unwrap() - ap_sweep(&scores, &labels)).abs());
    }
    let example = LabeledScores::new(vec![0.1, 0.4, 0.35, 0.8], vec![0, 0, 1, 1]).unwrap();
    let ex = auroc(&example).unwrap();
    let ex_pairs = auroc_pairs(&[0.1, 0.4, 0.35, 0.8], &[0, 0, 1, 1]);
    Verdict {
        pass: worst_auc <= 1e-12 && worst_ap <= 1e-12 && ex == 0.75 && ex_pairs == 0.75,
        detail: format!(
            "200 instances: max |ΔAUROC| {worst_auc:.1e}, max |ΔAP| {worst_ap:.1e} (≤ 1e-12); worked example AUROC {ex}"
        ),
    }
}

// ---------------------------------------------------------------- dsu

/// A trained-looking learner whose output is the constant `sigmoid(b)`.
pub fn constant_output_learner(dim: usize, bias: f64) -> Learner {
    let mut l = Learner::init(AutoencoderConfig {
        input_dim: dim,
        hidden_dims: vec![8],
        bottleneck_dim: 4,
        init_seed: 3,
        ..AutoencoderConfig::default()
    })
    .unwrap();
    let params = l.parameters_mut().unwrap();
    let n = params.len();
    params[n - 2].value = Tensor::zeros(params[n - 2].value.shape());
    params[n - 1].value = Tensor::full(params[n - 1].value.shape(), bias);
    l.freeze();
    l
}

/// Copies of one checkpoint give zero uncertainty; inputs equal to the
/// reconstruction give zero reconstruction error.
pub fn dsu_degenerate(dir: &std::path::Path) -> Verdict {
    let mut trained = Learner::init(AutoencoderConfig {
        input_dim: 256,
        hidden_dims: vec![32],
        bottleneck_dim: 8,
        init_seed: 11,
        ..AutoencoderConfig::default()
    })
    .unwrap();
    trained.freeze();
    let path = dir.join("one.d2ue");
    trained.save(&path).unwrap();
    let copies: Vec<Learner> = (0..3).map(|_| Learner::load(&path).unwrap()).collect();
    let ens = Ensemble::from_learners(copies, TrainConfig::default()).unwrap();
    let images = generate_normal(5, 20, 16, 16).unwrap();
    let mut nonzero = 0usize;
    for img in &images {
        for m in [ScoreMethod::OutputUnc, ScoreMethod::Dsu] {
            for red in [Reduction::Mean, Reduction::Max] {
                let (score, map) = dsu::score_image(&ens, img, m, red).unwrap();
                if score != 0.0 || map.values.iter().any(|&v| v != 0.0) {
                    nonzero += 1;
                }
            }
        }
    }

    let c = d2ue::tensor::sigmoid(0.3);
    let perfect = Ensemble::from_learners(
        (0..3).map(|_| constant_output_learner(256, 0.3)).collect(),
        TrainConfig::default(),
    )
    .unwrap();
    let img = Image::new(16, 16, vec![c; 256]).unwrap();
    let (recon_score, recon_map) = dsu::score_image(&perfect, &img, ScoreMethod::EnsRecon, Reduction::Max).unwrap();
    let recon_zero = recon_score == 0.0 && recon_map.values.iter().all(|&v| v == 0.0);
    Verdict {
        pass: nonzero == 0 && recon_zero,
        detail: format!(
            "{} copy-ensemble scores nonzero of {}; ens_recon on a perfectly reconstructed input = {recon_score}",
            nonzero,
            images.len() * 4
        ),
    }
}
