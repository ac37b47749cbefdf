//! Sequential ensemble training with feature-space repulsion.
//!
//! Learner `n` minimizes `L_orig + λ·L_sim`, where `L_sim` is the mean
//! similarity between its features and those of the already-trained
//! learners `0..n` on the same minibatch. Earlier learners are frozen and
//! enter the graph as constants, so gradients reach only learner `n`.

use std::fmt::Write as _;
use std::path::Path;

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{stack, Dataset};
use crate::error::{Error, Result};
use crate::io;
use crate::model::{reconstruction_loss, AutoencoderConfig, Learner};
use crate::optim::{adam_step, AdamState};
use crate::similarity::{cka, similarity_graph, SimilarityKind};
use crate::tensor::{Tape, Tensor, Var};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub n_learners: usize,
    pub lambda: f64,
    pub similarity: SimilarityKind,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub master_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            n_learners: 3,
            lambda: 1.0,
            similarity: SimilarityKind::Cka,
            epochs: 200,
            batch_size: 32,
            learning_rate: 2e-3,
            master_seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_learners == 0 {
            return Err(Error::Config("n_learners must be >= 1".into()));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::Config(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if self.batch_size == 0 || (self.similarity != SimilarityKind::None && self.batch_size < 2) {
            return Err(Error::Config(format!(
                "batch_size {} too small for similarity `{}`",
                self.batch_size, self.similarity
            )));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning_rate must be > 0".into()));
        }
        Ok(())
    }

    /// Initialization seed of learner `index` (0-based).
    pub fn learner_seed(&self, index: usize) -> u64 {
        self.master_seed.wrapping_add(index as u64)
    }

    fn repulsion_active(&self, n_frozen: usize) -> bool {
        n_frozen > 0 && self.lambda > 0.0 && self.similarity != SimilarityKind::None
    }
}

/// Mean losses over the minibatches of one epoch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochLoss {
    pub total: f64,
    pub reconstruction: f64,
    pub similarity: f64,
}

/// `(1/(n−1))·Σⱼ sim(Pʲ, Qⁿ)`; 0 with no frozen learners.
pub fn sim_loss<'t>(kind: SimilarityKind, current: Var<'t>, frozen: &[Var<'t>]) -> Result<Var<'t>> {
    let tape = current.tape();
    if frozen.is_empty() {
        return Ok(tape.constant(Tensor::scalar(0.0)));
    }
    let rows = current.shape()[0];
    let mut acc: Option<Var<'t>> = None;
    for &p in frozen {
        if p.shape()[0] != rows {
            return Err(Error::shape(
                "sim_loss",
                format!("frozen features {:?} vs current {:?}", p.shape(), current.shape()),
            ));
        }
        let s = similarity_graph(kind, p, current)?;
        acc = Some(match acc {
            Some(a) => a.add(s)?,
            None => s,
        });
    }
    Ok(acc.expect("nonempty").mul_scalar(1.0 / frozen.len() as f64))
}

/// Trains learner `index` against the frozen `previous` learners.
pub fn train_learner(
    index: usize,
    data: &Dataset,
    previous: &[Learner],
    arch: &AutoencoderConfig,
    config: &TrainConfig,
) -> Result<(Learner, Vec<EpochLoss>)> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    if data.input_dim() != arch.input_dim {
        return Err(Error::Config(format!(
            "dataset images have {} pixels, architecture expects {}",
            data.input_dim(),
            arch.input_dim
        )));
    }
    if previous.iter().any(|l| !l.is_trained() || l.config().input_dim != arch.input_dim) {
        return Err(Error::Config("previous learners must be trained and share the architecture".into()));
    }

    let seed = config.learner_seed(index);
    let mut learner = Learner::init(AutoencoderConfig {
        init_seed: seed,
        ..arch.clone()
    })?;
    let mut adam = AdamState::new(learner.parameters(), config.learning_rate);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(seed);
    shuffle_rng.set_stream(SHUFFLE_STREAM);
    let repel = config.repulsion_active(previous.len());

    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        order.shuffle(&mut shuffle_rng);
        let (mut tot, mut rec, mut sim, mut n_batches) = (0.0, 0.0, 0.0, 0usize);
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            if repel && chunk.len() < 2 {
                continue;
            }
            let imgs: Vec<_> = chunk.iter().map(|&i| &data.images[i]).collect();
            let batch = stack(&imgs)?;

            let tape = Tape::new();
            let x = tape.constant(batch.clone());
            let params = learner.bind(&tape, true);
            let out = learner.forward_graph(&params, x)?;
            let l_orig = reconstruction_loss(out.reconstruction, x)?;
            let (total, l_sim) = if repel {
                let frozen = previous
                    .iter()
                    .map(|p| Ok(tape.constant(p.forward(&batch)?.1)))
                    .collect::<Result<Vec<_>>>()?;
                let l_sim = sim_loss(config.similarity, out.features, &frozen)?;
                (l_orig.add(l_sim.mul_scalar(config.lambda))?, l_sim.item())
            } else {
                (l_orig, 0.0)
            };

            let total_value = total.item();
            if !total_value.is_finite() {
                return Err(Error::NonFiniteLoss {
                    learner: index,
                    epoch,
                    batch: b,
                });
            }
            tape.backward(total)?;
            for (p, v) in learner.parameters_mut()?.iter_mut().zip(&params) {
                p.grad = Some(v.grad().unwrap_or_else(|| Tensor::zeros(p.value.shape())));
            }
            adam_step(learner.parameters_mut()?, &mut adam)?;

            tot += total_value;
            rec += l_orig.item();
            sim += l_sim;
            n_batches += 1;
        }
        let n = n_batches.max(1) as f64;
        let e = EpochLoss {
            total: tot / n,
            reconstruction: rec / n,
            similarity: sim / n,
        };
        debug!("learner {index} epoch {epoch}: total {:.6} orig {:.6} sim {:.4}", e.total, e.reconstruction, e.similarity);
        history.push(e);
    }
    learner.freeze();
    Ok((learner, history))
}

const SHUFFLE_STREAM: u64 = 1;

/// Ordered, frozen learners plus the configuration that produced them.
#[derive(Clone, Debug, PartialEq)]
pub struct Ensemble {
    pub learners: Vec<Learner>,
    pub config: TrainConfig,
    pub history: Vec<Vec<EpochLoss>>,
}

/// Trains learners `0..N` in order, each against all earlier ones.
pub fn train_ensemble(data: &Dataset, arch: &AutoencoderConfig, config: &TrainConfig) -> Result<Ensemble> {
    extend_ensemble(data, arch, config, Vec::new())
}

/// Like [`train_ensemble`], but starts from already-trained leading learners
/// with their loss histories. The first learner never sees a repulsion term,
/// so one trained with the same seed, epochs, batch size and learning rate
/// can be shared between runs that differ only in `lambda` or `similarity`.
pub fn extend_ensemble(
    data: &Dataset,
    arch: &AutoencoderConfig,
    config: &TrainConfig,
    prefix: Vec<(Learner, Vec<EpochLoss>)>,
) -> Result<Ensemble> {
    config.validate()?;
    arch.validate()?;
    if prefix.len() > config.n_learners {
        return Err(Error::Config(format!(
            "{} prefix learners exceed n_learners = {}",
            prefix.len(),
            config.n_learners
        )));
    }
    let (mut learners, mut history): (Vec<_>, Vec<_>) = prefix.into_iter().unzip();
    for n in learners.len()..config.n_learners {
        let (learner, h) = train_learner(n, data, &learners, arch, config)?;
        if let Some(last) = h.last() {
            info!(
                "learner {n} ({} λ={}): final loss {:.6} (orig {:.6}, sim {:.4})",
                config.similarity, config.lambda, last.total, last.reconstruction, last.similarity
            );
        }
        learners.push(learner);
        history.push(h);
    }
    Ok(Ensemble {
        learners,
        config: config.clone(),
        history,
    })
}

impl Ensemble {
    /// Wraps already-trained learners, e.g. copies of one checkpoint.
    pub fn from_learners(learners: Vec<Learner>, config: TrainConfig) -> Result<Self> {
        let Some(first) = learners.first() else {
            return Err(Error::Config("ensemble needs at least one learner".into()));
        };
        let base = AutoencoderConfig {
            init_seed: 0,
            ..first.config().clone()
        };
        if learners.iter().any(|l| {
            !l.is_trained()
                || AutoencoderConfig {
                    init_seed: 0,
                    ..l.config().clone()
                } != base
        }) {
            return Err(Error::Config("ensemble learners must be trained and share one architecture".into()));
        }
        let history = vec![Vec::new(); learners.len()];
        Ok(Ensemble {
            learners,
            config,
            history,
        })
    }

    pub fn len(&self) -> usize {
        self.learners.len()
    }

    pub fn is_empty(&self) -> bool {
        self.learners.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.learners[0].config().input_dim
    }

    /// Writes `learner_<i>.d2ue` per learner, `manifest.txt` and `losses.csv`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        for (i, l) in self.learners.iter().enumerate() {
            l.save(&dir.join(format!("learner_{i}.d2ue")))?;
        }
        let c = &self.config;
        let seeds: Vec<_> = self.learners.iter().map(|l| l.config().init_seed.to_string()).collect();
        let manifest = io::format_key_values([
            ("n_learners", self.learners.len().to_string()),
            ("lambda", c.lambda.to_string()),
            ("similarity_kind", c.similarity.to_string()),
            ("seeds", seeds.join(",")),
            ("epochs", c.epochs.to_string()),
            ("batch_size", c.batch_size.to_string()),
            ("learning_rate", c.learning_rate.to_string()),
            ("master_seed", c.master_seed.to_string()),
        ]);
        io::write_atomic(&dir.join("manifest.txt"), manifest.as_bytes())?;
        io::write_atomic(&dir.join("losses.csv"), self.loss_csv().as_bytes())
    }

    pub fn loss_csv(&self) -> String {
        let mut s = String::from("learner,epoch,total,reconstruction,similarity\n");
        for (i, h) in self.history.iter().enumerate() {
            for (e, l) in h.iter().enumerate() {
                let _ = writeln!(s, "{i},{e},{},{},{}", l.total, l.reconstruction, l.similarity);
            }
        }
        s
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest_path = dir.join("manifest.txt");
        let kv = io::parse_key_values(&io::read_text(&manifest_path)?)?;
        let get = |k: &str| {
            kv.get(k)
                .ok_or_else(|| Error::Config(format!("{}: missing key `{k}`", manifest_path.display())))
        };
        let num = |k: &str| -> Result<f64> {
            get(k)?
                .parse()
                .map_err(|_| Error::Config(format!("{}: bad value for `{k}`", manifest_path.display())))
        };
        let n = num("n_learners")? as usize;
        let config = TrainConfig {
            n_learners: n,
            lambda: num("lambda")?,
            similarity: get("similarity_kind")?.parse()?,
            epochs: num("epochs")? as usize,
            batch_size: num("batch_size")? as usize,
            learning_rate: num("learning_rate")?,
            master_seed: get("master_seed")?
                .parse()
                .map_err(|_| Error::Config("bad master_seed".into()))?,
        };
        let learners = (0..n)
            .map(|i| Learner::load(&dir.join(format!("learner_{i}.d2ue"))))
            .collect::<Result<Vec<_>>>()?;
        let mut ens = Ensemble::from_learners(learners, config)?;
        let losses = dir.join("losses.csv");
        if losses.exists() {
            ens.history = parse_loss_csv(&io::read_text(&losses)?, n)?;
        }
        Ok(ens)
    }
}

fn parse_loss_csv(text: &str, n: usize) -> Result<Vec<Vec<EpochLoss>>> {
    let mut history = vec![Vec::new(); n];
    let mut offset = 0;
    for (i, line) in text.split_inclusive('\n').enumerate() {
        let at = offset;
        offset += line.len();
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let f: Vec<_> = line.trim().split(',').collect();
        let bad = || Error::parse(at, "malformed loss row");
        if f.len() != 5 {
            return Err(bad());
        }
        let learner: usize = f[0].parse().map_err(|_| bad())?;
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
        history
            .get_mut(learner)
            .ok_or_else(bad)?
            .push(EpochLoss {
                total: num(f[2])?,
                reconstruction: num(f[3])?,
                similarity: num(f[4])?,
            });
    }
    Ok(history)
}

/// Mean CKA over all learner pairs and over consecutive minibatches of
/// `data` (in dataset order). Batches with fewer than two rows are skipped.
pub fn mean_pairwise_cka(ensemble: &Ensemble, data: &Dataset, batch_size: usize) -> Result<f64> {
    if ensemble.len() < 2 {
        return Err(Error::Config("pairwise CKA needs at least two learners".into()));
    }
    let (mut sum, mut count) = (0.0, 0usize);
    let idx: Vec<_> = (0..data.len()).collect();
    for chunk in idx.chunks(batch_size.max(2)) {
        if chunk.len() < 2 {
            continue;
        }
        let batch = stack(&chunk.iter().map(|&i| &data.images[i]).collect::<Vec<_>>())?;
        let feats = ensemble
            .learners
            .iter()
            .map(|l| l.features(&batch))
            .collect::<Result<Vec<_>>>()?;
        for a in 0..feats.len() {
            for b in a + 1..feats.len() {
                sum += cka(&feats[a], &feats[b])?;
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(Error::Config("no batch with at least two samples".into()));
    }
    Ok(sum / count as f64)
}
