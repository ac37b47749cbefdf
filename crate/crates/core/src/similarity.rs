//! Representation similarity: linear-kernel HSIC, CKA, and the
//! distance/correlation baselines that CKA is compared against.
//!
//! Every metric exists twice: as a plain function on [`FeatureMatrix`]
//! values and as a differentiable computation on tape [`Var`]s. Training
//! uses the graph form; evaluation, diagnostics and tests use the plain one.
//!
//! | metric    | isotropic scaling | orthogonal transform |
//! |-----------|-------------------|----------------------|
//! | euclidean | no                | no                   |
//! | manhattan | no                | no                   |
//! | cosine    | yes               | no                   |
//! | pearson   | yes               | no                   |
//! | cka       | yes               | yes                  |

use std::fmt;
use std::str::FromStr;

use log::{debug, warn};

use crate::error::{Error, Result};
use crate::tensor::{Tape, Tensor, Var};

/// Batch of feature vectors, one row per sample. At least two rows.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix(Tensor);

impl FeatureMatrix {
    pub fn new(matrix: Tensor) -> Result<Self> {
        let (r, c) = match matrix.shape() {
            &[r, c] => (r, c),
            s => return Err(Error::shape("feature_matrix", format!("expected 2-D, got {s:?}"))),
        };
        if r < 2 {
            return Err(Error::Config(format!(
                "feature matrix needs at least 2 rows, got {r}"
            )));
        }
        if c == 0 {
            return Err(Error::Config("feature matrix has no columns".into()));
        }
        if !matrix.is_finite() {
            return Err(Error::Config("feature matrix contains NaN or Inf".into()));
        }
        Ok(FeatureMatrix(matrix))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        FeatureMatrix::new(Tensor::from_rows(rows)?)
    }

    pub fn rows(&self) -> usize {
        self.0.rows()
    }

    pub fn cols(&self) -> usize {
        self.0.cols()
    }

    pub fn as_tensor(&self) -> &Tensor {
        &self.0
    }

    pub fn into_tensor(self) -> Tensor {
        self.0
    }
}

/// Symmetric PSD `r×r` Gram matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct GramMatrix(Tensor);

impl GramMatrix {
    pub fn size(&self) -> usize {
        self.0.rows()
    }

    pub fn as_tensor(&self) -> &Tensor {
        &self.0
    }
}

/// `K = F·Fᵀ`.
pub fn gram_linear(features: &FeatureMatrix) -> GramMatrix {
    let f = &features.0;
    let gram = f
        .matmul(&f.transpose().expect("2-D"))
        .expect("conforming by construction");
    GramMatrix(gram)
}

/// `H = I − (1/r)·𝟙𝟙ᵀ`.
pub fn centering_matrix(r: usize) -> Result<Tensor> {
    if r < 2 {
        return Err(Error::Config(format!(
            "centering matrix needs at least 2 samples, got {r}"
        )));
    }
    let off = -1.0 / r as f64;
    let mut h = Tensor::full(&[r, r], off);
    for i in 0..r {
        h.data_mut()[i * r + i] = 1.0 + off;
    }
    Ok(h)
}

/// `tr(K·H·L·H) / (r−1)²` with `r` the number of samples.
pub fn hsic(k: &GramMatrix, l: &GramMatrix) -> Result<f64> {
    let r = k.size();
    if l.size() != r {
        return Err(Error::shape("hsic", format!("{r}x{r} vs {0}x{0}", l.size())));
    }
    let h = centering_matrix(r)?;
    let kh = k.0.matmul(&h)?;
    let lh = l.0.matmul(&h)?;
    let prod = kh.matmul(&lh)?;
    Ok(prod.trace()? / ((r - 1) * (r - 1)) as f64)
}

/// Centered kernel alignment of two feature batches. Feature widths may
/// differ. A batch with no variance after centering yields 0.
pub fn cka(p: &FeatureMatrix, q: &FeatureMatrix) -> Result<f64> {
    if p.rows() != q.rows() {
        return Err(Error::shape("cka", format!("{} vs {} rows", p.rows(), q.rows())));
    }
    let k = gram_linear(p);
    let l = gram_linear(q);
    let kl = hsic(&k, &l)?;
    let (kk, ll) = (hsic(&k, &k)?, hsic(&l, &l)?);
    let r = p.rows();
    if is_degenerate(kk, k.0.frobenius_norm(), r) || is_degenerate(ll, l.0.frobenius_norm(), r) {
        warn!("cka: degenerate feature matrix (zero centered variance), returning 0");
        return Ok(0.0);
    }
    Ok(kl / (kk.sqrt() * ll.sqrt()))
}

/// A Gram matrix whose centered self-HSIC is roundoff relative to its own
/// magnitude carries no alignable structure.
fn is_degenerate(self_hsic: f64, gram_norm: f64, r: usize) -> bool {
    let centered_norm = self_hsic.max(0.0).sqrt() * (r - 1) as f64;
    !(centered_norm > DEGENERATE_RTOL * gram_norm) || !self_hsic.is_finite()
}

const DEGENERATE_RTOL: f64 = 1e-10;

/// Similarity used by the repulsion term during training.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SimilarityKind {
    None,
    Euclidean,
    Manhattan,
    Cosine,
    Pearson,
    Cka,
}

impl SimilarityKind {
    pub const ALL: [SimilarityKind; 6] = [
        SimilarityKind::None,
        SimilarityKind::Euclidean,
        SimilarityKind::Manhattan,
        SimilarityKind::Cosine,
        SimilarityKind::Pearson,
        SimilarityKind::Cka,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SimilarityKind::None => "none",
            SimilarityKind::Euclidean => "euclidean",
            SimilarityKind::Manhattan => "manhattan",
            SimilarityKind::Cosine => "cosine",
            SimilarityKind::Pearson => "pearson",
            SimilarityKind::Cka => "cka",
        }
    }

    /// Whether values are guaranteed nonnegative.
    pub fn is_nonnegative(self) -> bool {
        !matches!(self, SimilarityKind::Cosine | SimilarityKind::Pearson)
    }
}

impl fmt::Display for SimilarityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SimilarityKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SimilarityKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown similarity kind `{s}`")))
    }
}

/// The distance and correlation baselines. Operands must share a shape.
pub fn baseline_similarity(kind: SimilarityKind, p: &FeatureMatrix, q: &FeatureMatrix) -> Result<f64> {
    let (a, b) = (p.as_tensor(), q.as_tensor());
    if a.shape() != b.shape() {
        return Err(Error::shape(
            "baseline_similarity",
            format!("{:?} vs {:?}", a.shape(), b.shape()),
        ));
    }
    let (a, b) = (a.data(), b.data());
    match kind {
        SimilarityKind::Euclidean => {
            let d = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
            Ok((-d).exp())
        }
        SimilarityKind::Manhattan => {
            let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum();
            Ok((-d).exp())
        }
        SimilarityKind::Cosine => Ok(cosine(a, b)),
        SimilarityKind::Pearson => {
            let center = |v: &[f64]| {
                let m = v.iter().sum::<f64>() / v.len() as f64;
                v.iter().map(|x| x - m).collect::<Vec<_>>()
            };
            Ok(cosine(&center(a), &center(b)))
        }
        SimilarityKind::Cka | SimilarityKind::None => Err(Error::Config(format!(
            "`{kind}` is not a baseline similarity"
        ))),
    }
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        warn!("cosine similarity of a zero-norm operand, returning 0");
        return 0.0;
    }
    dot / (na * nb)
}

/// Plain-value dispatch over every kind; `None` is identically 0.
pub fn similarity(kind: SimilarityKind, p: &FeatureMatrix, q: &FeatureMatrix) -> Result<f64> {
    match kind {
        SimilarityKind::None => Ok(0.0),
        SimilarityKind::Cka => cka(p, q),
        _ => baseline_similarity(kind, p, q),
    }
}

fn check_rows<'t>(op: &'static str, p: Var<'t>, q: Var<'t>) -> Result<usize> {
    let (ps, qs) = (p.shape(), q.shape());
    match (&ps[..], &qs[..]) {
        ([rp, _], [rq, _]) if rp == rq => Ok(*rp),
        _ => Err(Error::shape(op, format!("{ps:?} vs {qs:?}"))),
    }
}

/// Differentiable `tr(K·H·L·H) / (r−1)²` on Gram matrices.
pub fn hsic_graph<'t>(k: Var<'t>, l: Var<'t>) -> Result<Var<'t>> {
    let r = check_rows("hsic", k, l)?;
    let h = k.tape().constant(centering_matrix(r)?);
    let khlh = k.matmul(h)?.matmul(l)?.matmul(h)?;
    Ok(khlh.trace()?.mul_scalar(1.0 / ((r - 1) * (r - 1)) as f64))
}

/// Differentiable CKA. Degenerate denominators produce a constant 0 node
/// (logged at debug level: during training this can recur every batch).
pub fn cka_graph<'t>(p: Var<'t>, q: Var<'t>) -> Result<Var<'t>> {
    check_rows("cka", p, q)?;
    let tape = p.tape();
    let k = p.matmul(p.transpose()?)?;
    let l = q.matmul(q.transpose()?)?;
    let kl = hsic_graph(k, l)?;
    let (kk, ll) = (hsic_graph(k, k)?, hsic_graph(l, l)?);
    let r = p.shape()[0];
    if is_degenerate(kk.item(), k.value().frobenius_norm(), r)
        || is_degenerate(ll.item(), l.value().frobenius_norm(), r)
    {
        debug!("cka: degenerate feature matrix (zero centered variance), returning 0");
        return Ok(tape.constant(Tensor::scalar(0.0)));
    }
    kl.div(kk.sqrt().mul(ll.sqrt())?)
}

fn cosine_graph<'t>(a: Var<'t>, b: Var<'t>) -> Result<Var<'t>> {
    let na = a.frobenius_norm();
    let nb = b.frobenius_norm();
    if na.item() == 0.0 || nb.item() == 0.0 {
        debug!("cosine similarity of a zero-norm operand, returning 0");
        return Ok(a.tape().constant(Tensor::scalar(0.0)));
    }
    a.mul(b)?.sum().div(na.mul(nb)?)
}

fn centered_graph(a: Var<'_>) -> Result<Var<'_>> {
    let shape = a.shape();
    a.sub(a.mean().broadcast_scalar(&shape)?)
}

/// Differentiable counterpart of [`similarity`].
pub fn similarity_graph<'t>(kind: SimilarityKind, p: Var<'t>, q: Var<'t>) -> Result<Var<'t>> {
    if kind != SimilarityKind::Cka && p.shape() != q.shape() {
        return Err(Error::shape(
            "baseline_similarity",
            format!("{:?} vs {:?}", p.shape(), q.shape()),
        ));
    }
    match kind {
        SimilarityKind::None => Ok(p.tape().constant(Tensor::scalar(0.0))),
        SimilarityKind::Cka => cka_graph(p, q),
        SimilarityKind::Euclidean => Ok(p.sub(q)?.frobenius_norm().neg().exp()),
        SimilarityKind::Manhattan => Ok(p.sub(q)?.abs().sum().neg().exp()),
        SimilarityKind::Cosine => cosine_graph(p, q),
        SimilarityKind::Pearson => cosine_graph(centered_graph(p)?, centered_graph(q)?),
    }
}

/// Evaluates [`similarity_graph`] on a throwaway tape. Used to cross-check the
/// two code paths.
pub fn similarity_via_graph(kind: SimilarityKind, p: &FeatureMatrix, q: &FeatureMatrix) -> Result<f64> {
    let tape = Tape::new();
    let pv = tape.constant(p.as_tensor().clone());
    let qv = tape.constant(q.as_tensor().clone());
    Ok(similarity_graph(kind, pv, qv)?.item())
}
