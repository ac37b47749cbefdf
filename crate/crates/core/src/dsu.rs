//! Inference-time anomaly maps.
//!
//! Three scoring methods share one shape: each learner contributes a
//! per-pixel map, the maps are aggregated across the ensemble, and the
//! aggregate is reduced to one image-level score.
//!
//! * `ens_recon`: mean of `|fᵢ(x) − x|`.
//! * `output_unc`: per-pixel deviation of the reconstructions `fᵢ(x)`.
//! * `dsu`: per-pixel deviation of `∇ₓLᵢ ⊙ |fᵢ(x) − x|`, where `Lᵢ` is the
//!   per-sample reconstruction MSE of learner `i`.
//!
//! The deviation is the population standard deviation across learners.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::data::{Dataset, Image};
use crate::error::{Error, Result};
use crate::io::GrayImage;
use crate::model::{reconstruction_loss, Learner};
use crate::rar::Ensemble;
use crate::tensor::{Tape, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ScoreMethod {
    EnsRecon,
    OutputUnc,
    Dsu,
}

impl ScoreMethod {
    pub const ALL: [ScoreMethod; 3] = [ScoreMethod::EnsRecon, ScoreMethod::OutputUnc, ScoreMethod::Dsu];

    pub fn as_str(self) -> &'static str {
        match self {
            ScoreMethod::EnsRecon => "ens_recon",
            ScoreMethod::OutputUnc => "output_unc",
            ScoreMethod::Dsu => "dsu",
        }
    }

    pub fn min_learners(self) -> usize {
        match self {
            ScoreMethod::EnsRecon => 1,
            ScoreMethod::OutputUnc | ScoreMethod::Dsu => 2,
        }
    }
}

impl fmt::Display for ScoreMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScoreMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ScoreMethod::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown scoring method `{s}`")))
    }
}

/// Pixel-to-image reduction of an anomaly map.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Reduction {
    #[default]
    Mean,
    Max,
}

impl FromStr for Reduction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Reduction::Mean),
            "max" => Ok(Reduction::Max),
            _ => Err(Error::Config(format!("unknown reduction `{s}`"))),
        }
    }
}

impl fmt::Display for Reduction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Reduction::Mean => "mean",
            Reduction::Max => "max",
        })
    }
}

/// Nonnegative per-pixel anomaly scores.
#[derive(Clone, Debug, PartialEq)]
pub struct AnomalyMap {
    pub height: usize,
    pub width: usize,
    pub values: Vec<f64>,
    pub source: ScoreMethod,
}

impl AnomalyMap {
    pub fn reduce(&self, reduction: Reduction) -> f64 {
        match reduction {
            Reduction::Mean => self.values.iter().sum::<f64>() / self.values.len() as f64,
            Reduction::Max => self.values.iter().copied().fold(0.0, f64::max),
        }
    }

    /// Min-max normalized to `[0, 255]`; a constant map renders black.
    pub fn to_gray(&self) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.height,
            pixels: normalize_u8(&self.values),
        }
    }
}

pub(crate) fn normalize_u8(values: &[f64]) -> Vec<u8> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    values
        .iter()
        .map(|&v| {
            if hi > lo {
                ((v - lo) / (hi - lo) * 255.0).round() as u8
            } else {
                0
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScoredSample {
    pub image_id: String,
    pub label: u8,
    pub score: f64,
    pub map: Option<AnomalyMap>,
}

fn check_input(learner: &Learner, x: &Image) -> Result<()> {
    if x.len() != learner.config().input_dim {
        return Err(Error::shape(
            "input_gradient",
            format!("image has {} pixels, learner expects {}", x.len(), learner.config().input_dim),
        ));
    }
    Ok(())
}

/// `∂L/∂x` of the per-sample MSE `L = mean((f(x) − x)²)`, shaped `[h, w]`.
/// `x` enters both as network input and as reconstruction target; both
/// paths contribute.
pub fn input_gradient(learner: &Learner, x: &Image) -> Result<Tensor> {
    Ok(input_gradient_and_residual(learner, x)?.0)
}

/// `(∇ₓL, |f(x) − x|)`, both `[h, w]`, from one forward and one backward pass.
fn input_gradient_and_residual(learner: &Learner, x: &Image) -> Result<(Tensor, Tensor)> {
    check_input(learner, x)?;
    let tape = Tape::new();
    let xv = tape.var(x.as_row());
    let params = learner.bind(&tape, false);
    let out = learner.forward_graph(&params, xv)?;
    let loss = reconstruction_loss(out.reconstruction, xv)?;
    tape.backward(loss)?;
    let shape = [x.height, x.width];
    let grad = xv
        .grad()
        .unwrap_or_else(|| Tensor::zeros(&[1, x.len()]))
        .reshape(&shape)?;
    let residual = out
        .reconstruction
        .value()
        .zip_map(&x.as_row(), |r, v| (r - v).abs())?
        .reshape(&shape)?;
    Ok((grad, residual))
}

/// One learner's dual-space contribution `∇ₓL ⊙ |f(x) − x|`, shaped `[h, w]`.
pub fn dsu_component(learner: &Learner, x: &Image) -> Result<Tensor> {
    let (grad, residual) = input_gradient_and_residual(learner, x)?;
    grad.zip_map(&residual, |g, r| g * r)
}

/// Per-pixel population standard deviation across `maps` (N ≥ 2).
pub fn deviation(maps: &[Tensor]) -> Result<Tensor> {
    if maps.len() < 2 {
        return Err(Error::Config(format!(
            "deviation needs at least 2 maps, got {}",
            maps.len()
        )));
    }
    let first = &maps[0];
    if maps.iter().any(|m| m.shape() != first.shape()) {
        return Err(Error::shape("deviation", "maps differ in shape"));
    }
    let n = maps.len() as f64;
    // Shifting by the first map keeps identical inputs at exactly zero.
    let out = (0..first.len())
        .map(|p| {
            let shift = first.data()[p];
            let mean = maps.iter().map(|m| m.data()[p] - shift).sum::<f64>() / n;
            let var = maps
                .iter()
                .map(|m| {
                    let d = m.data()[p] - shift - mean;
                    d * d
                })
                .sum::<f64>()
                / n;
            var.sqrt()
        })
        .collect();
    Tensor::new(first.shape(), out)
}

/// Anomaly map of one image under `method`.
pub fn anomaly_map(ensemble: &Ensemble, x: &Image, method: ScoreMethod) -> Result<AnomalyMap> {
    if ensemble.len() < method.min_learners() {
        return Err(Error::Config(format!(
            "`{method}` needs at least {} learners, ensemble has {}",
            method.min_learners(),
            ensemble.len()
        )));
    }
    let shape = [x.height, x.width];
    let values = match method {
        ScoreMethod::EnsRecon => {
            let mut acc = vec![0.0; x.len()];
            for l in &ensemble.learners {
                check_input(l, x)?;
                let r = l.reconstruct(&x.as_row())?;
                for (a, (&rv, &xv)) in acc.iter_mut().zip(r.data().iter().zip(&x.pixels)) {
                    *a += (rv - xv).abs();
                }
            }
            let n = ensemble.len() as f64;
            acc.into_iter().map(|a| a / n).collect()
        }
        ScoreMethod::OutputUnc => {
            let recons = ensemble
                .learners
                .iter()
                .map(|l| {
                    check_input(l, x)?;
                    l.reconstruct(&x.as_row())?.reshape(&shape)
                })
                .collect::<Result<Vec<_>>>()?;
            deviation(&recons)?.into_data()
        }
        ScoreMethod::Dsu => {
            let parts = ensemble
                .learners
                .iter()
                .map(|l| dsu_component(l, x))
                .collect::<Result<Vec<_>>>()?;
            deviation(&parts)?.into_data()
        }
    };
    Ok(AnomalyMap {
        height: x.height,
        width: x.width,
        values,
        source: method,
    })
}

/// Image-level score plus its map.
pub fn score_image(
    ensemble: &Ensemble,
    x: &Image,
    method: ScoreMethod,
    reduction: Reduction,
) -> Result<(f64, AnomalyMap)> {
    let map = anomaly_map(ensemble, x, method)?;
    Ok((map.reduce(reduction), map))
}

/// Scores every image of `data`, in order. Images are scored in parallel.
pub fn score_dataset(
    ensemble: &Ensemble,
    data: &Dataset,
    method: ScoreMethod,
    reduction: Reduction,
    keep_maps: bool,
) -> Result<Vec<ScoredSample>> {
    (0..data.len())
        .into_par_iter()
        .map(|i| {
            let (score, map) = score_image(ensemble, &data.images[i], method, reduction)?;
            Ok(ScoredSample {
                image_id: data.ids[i].clone(),
                label: data.labels[i],
                score,
                map: keep_maps.then_some(map),
            })
        })
        .collect()
}
