//! The five commands behind the `d2ue` binary.
//!
//! Layout under `out`:
//!
//! ```text
//! data/       train-/test-images.idx, -labels.idx, dataset.txt
//! ensemble/   learner_<i>.d2ue, manifest.txt, losses.csv
//! eval/       <method>_metrics.csv, <method>_scores.csv
//! ablate/     ablation.csv
//! heatmaps/   <id>_<method>.pgm, <id>_montage.pgm
//! ```
//!
//! Each command also writes a run manifest next to its outputs: the fully
//! resolved config (every key), loadable again with `--config`.

use std::collections::btree_map::Entry;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use log::info;
use rayon::prelude::*;

use crate::config::RunConfig;
use crate::data::{self, make_benchmark, Benchmark, Dataset, Split};
use crate::dsu::{self, normalize_u8, Reduction, ScoreMethod};
use crate::error::{Error, Result};
use crate::io::{self, GrayImage, ScoreRow};
use crate::metrics::{auroc, average_precision, LabeledScores};
use crate::rar::{extend_ensemble, train_learner, Ensemble, TrainConfig};
use crate::similarity::SimilarityKind;

fn write_manifest(path: &Path, command: &str, cfg: &RunConfig) -> Result<()> {
    let text = format!("# d2ue {command}\n{}", cfg.to_text());
    io::write_atomic(path, text.as_bytes())
}

/// Generates the benchmark for `cfg.seed` and writes it to the data dir.
pub fn cmd_synth(cfg: &RunConfig) -> Result<PathBuf> {
    cfg.validate()?;
    let dir = cfg.data_dir();
    let bench = make_benchmark(&cfg.benchmark(cfg.seed))?;
    data::save_benchmark(&bench, &dir)?;
    write_manifest(&dir.join("run_manifest.txt"), "synth", cfg)?;
    info!("wrote {} train / {} test images to {}", bench.train.len(), bench.test.len(), dir.display());
    Ok(dir)
}

/// Trains an ensemble on the train split and writes its directory.
pub fn cmd_train(cfg: &RunConfig) -> Result<PathBuf> {
    cfg.validate()?;
    let train = data::load_split(&cfg.data_dir(), Split::Train)?;
    let ens = crate::rar::train_ensemble(&train, &cfg.arch_for(train.input_dim()), &cfg.train(cfg.seed))?;
    let dir = cfg.ensemble_dir();
    ens.save(&dir)?;
    write_manifest(&dir.join("run_manifest.txt"), "train", cfg)?;
    Ok(dir)
}

/// AUROC and AP of one scored split.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Metrics {
    pub auroc: f64,
    pub ap: f64,
}

pub fn metrics_of(scores: &[f64], labels: &[u8]) -> Result<Metrics> {
    let ls = LabeledScores::new(scores.to_vec(), labels.to_vec())?;
    Ok(Metrics {
        auroc: auroc(&ls)?,
        ap: average_precision(&ls)?,
    })
}

pub const METRICS_HEADER: &str = "method,reduction,n_learners,lambda,similarity,seed,n_test,auroc,ap";

fn load_ensemble(cfg: &RunConfig, method: ScoreMethod) -> Result<Ensemble> {
    let ens = Ensemble::load(&cfg.ensemble_dir())?;
    if ens.len() < method.min_learners() {
        return Err(Error::Config(format!(
            "method `{method}` needs at least {} learners, {} has {}",
            method.min_learners(),
            cfg.ensemble_dir().display(),
            ens.len()
        )));
    }
    Ok(ens)
}

/// Scores the test split with `cfg.method`; writes metrics and per-image
/// score CSVs.
pub fn cmd_eval(cfg: &RunConfig) -> Result<Metrics> {
    cfg.validate()?;
    let test = data::load_split(&cfg.data_dir(), Split::Test)?;
    let ens = load_ensemble(cfg, cfg.method)?;
    let scored = dsu::score_dataset(&ens, &test, cfg.method, cfg.reduction, false)?;
    let scores: Vec<f64> = scored.iter().map(|s| s.score).collect();
    let m = metrics_of(&scores, &test.labels)?;

    let dir = cfg.out.join("eval");
    let c = &ens.config;
    let mut csv = format!("{METRICS_HEADER}\n");
    let _ = writeln!(
        csv,
        "{},{},{},{},{},{},{},{},{}",
        cfg.method,
        cfg.reduction,
        ens.len(),
        c.lambda,
        c.similarity,
        c.master_seed,
        test.len(),
        m.auroc,
        m.ap
    );
    let rows: Vec<ScoreRow> = scored
        .into_iter()
        .map(|s| ScoreRow {
            image_id: s.image_id,
            label: s.label,
            score: s.score,
        })
        .collect();
    io::write_atomic(&dir.join(format!("{}_scores.csv", cfg.method)), io::format_scores(&rows).as_bytes())?;
    io::write_atomic(&dir.join(format!("{}_metrics.csv", cfg.method)), csv.as_bytes())?;
    write_manifest(&dir.join(format!("{}_run_manifest.txt", cfg.method)), "eval", cfg)?;
    info!("{}: AUROC {:.4}, AP {:.4}", cfg.method, m.auroc, m.ap);
    Ok(m)
}

/// One ablation row: a training setting paired with a scoring method.
#[derive(Clone, Debug, PartialEq)]
pub struct Variant {
    pub name: String,
    /// `None` for the unconstrained ensemble.
    pub repulsion: Option<SimilarityKind>,
    pub method: ScoreMethod,
}

/// The five method rows (`ens_recon`, `output_unc`, `rar+output_unc`,
/// `dsu`, `rar+dsu`, where `rar` means CKA repulsion), then `sim_<kind>`
/// rows scoring with `dsu` under each of `kinds`.
pub fn variants(kinds: &[SimilarityKind]) -> Vec<Variant> {
    let v = |name: &str, repulsion, method| Variant {
        name: name.to_string(),
        repulsion,
        method,
    };
    let cka = Some(SimilarityKind::Cka);
    let mut out = vec![
        v("ens_recon", None, ScoreMethod::EnsRecon),
        v("output_unc", None, ScoreMethod::OutputUnc),
        v("rar+output_unc", cka, ScoreMethod::OutputUnc),
        v("dsu", None, ScoreMethod::Dsu),
        v("rar+dsu", cka, ScoreMethod::Dsu),
    ];
    for &k in kinds {
        out.push(v(&format!("sim_{k}"), Some(k), ScoreMethod::Dsu));
    }
    out
}

/// The similarity kinds compared against CKA by `ablate`.
pub const BASELINE_KINDS: [SimilarityKind; 4] = [
    SimilarityKind::Euclidean,
    SimilarityKind::Manhattan,
    SimilarityKind::Cosine,
    SimilarityKind::Pearson,
];

#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    pub variant: String,
    pub seed: u64,
    pub metrics: Metrics,
}

/// Everything trained and scored for one seed.
#[derive(Clone, Debug)]
pub struct SeedAblation {
    pub seed: u64,
    pub benchmark: Benchmark,
    /// Keyed by repulsion kind; `None` is the unconstrained ensemble.
    pub ensembles: BTreeMap<Option<SimilarityKind>, Ensemble>,
    pub rows: Vec<AblationRow>,
}

fn ensemble_key(kind: Option<SimilarityKind>) -> Option<SimilarityKind> {
    kind.filter(|&k| k != SimilarityKind::None)
}

/// Trains and scores every variant for one seed. Repelled ensembles use
/// `cfg.lambda`; the unconstrained one uses λ = 0. All ensembles share the
/// same first learner, which no repulsion setting can affect.
pub fn ablate_seed(cfg: &RunConfig, seed: u64, kinds: &[SimilarityKind]) -> Result<SeedAblation> {
    let benchmark = make_benchmark(&cfg.benchmark(seed))?;
    let arch = cfg.arch_for(benchmark.train.input_dim());
    let variants = variants(kinds);
    let setting = |kind: Option<SimilarityKind>| match kind {
        Some(k) => TrainConfig {
            similarity: k,
            ..cfg.train(seed)
        },
        None => TrainConfig {
            lambda: 0.0,
            similarity: SimilarityKind::None,
            ..cfg.train(seed)
        },
    };
    let first = train_learner(0, &benchmark.train, &[], &arch, &setting(None))?;

    let mut ensembles = BTreeMap::new();
    for v in &variants {
        let key = ensemble_key(v.repulsion);
        if let Entry::Vacant(slot) = ensembles.entry(key) {
            slot.insert(extend_ensemble(&benchmark.train, &arch, &setting(key), vec![first.clone()])?);
        }
    }

    let mut rows = Vec::with_capacity(variants.len());
    for v in &variants {
        let ens = &ensembles[&ensemble_key(v.repulsion)];
        let scored = dsu::score_dataset(ens, &benchmark.test, v.method, cfg.reduction, false)?;
        let scores: Vec<f64> = scored.iter().map(|s| s.score).collect();
        rows.push(AblationRow {
            variant: v.name.clone(),
            seed,
            metrics: metrics_of(&scores, &benchmark.test.labels)?,
        });
    }
    Ok(SeedAblation {
        seed,
        benchmark,
        ensembles,
        rows,
    })
}

/// Mean and sample standard deviation across seeds.
#[derive(Clone, Debug, PartialEq)]
pub struct Summary {
    pub variant: String,
    pub auroc_mean: f64,
    pub auroc_std: f64,
    pub ap_mean: f64,
    pub ap_std: f64,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

/// One summary per variant, in first-appearance order.
pub fn summarize(rows: &[AblationRow]) -> Vec<Summary> {
    let mut names: Vec<&str> = Vec::new();
    for r in rows {
        if !names.contains(&r.variant.as_str()) {
            names.push(&r.variant);
        }
    }
    names
        .into_iter()
        .map(|name| {
            let of = |f: fn(&Metrics) -> f64| -> Vec<f64> {
                rows.iter().filter(|r| r.variant == name).map(|r| f(&r.metrics)).collect()
            };
            let (auroc_mean, auroc_std) = mean_std(&of(|m| m.auroc));
            let (ap_mean, ap_std) = mean_std(&of(|m| m.ap));
            Summary {
                variant: name.to_string(),
                auroc_mean,
                auroc_std,
                ap_mean,
                ap_std,
            }
        })
        .collect()
}

pub const ABLATION_HEADER: &str = "variant,seed,auroc,ap,auroc_std,ap_std";

/// Per-seed rows (empty std columns) followed by one `mean` row per variant.
pub fn format_ablation(rows: &[AblationRow]) -> String {
    let mut s = format!("{ABLATION_HEADER}\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{},{},,", r.variant, r.seed, r.metrics.auroc, r.metrics.ap);
    }
    for m in summarize(rows) {
        let _ = writeln!(
            s,
            "{},mean,{},{},{},{}",
            m.variant, m.auroc_mean, m.ap_mean, m.auroc_std, m.ap_std
        );
    }
    s
}

/// Runs every variant for every seed in `cfg.seeds` (seeds in parallel) and
/// writes `ablate/ablation.csv`.
pub fn cmd_ablate(cfg: &RunConfig) -> Result<Vec<AblationRow>> {
    cfg.validate()?;
    if cfg.n_learners < 2 {
        return Err(Error::Config("ablate needs n_learners >= 2".into()));
    }
    let per_seed = cfg
        .seeds
        .par_iter()
        .map(|&seed| ablate_seed(cfg, seed, &BASELINE_KINDS).map(|a| a.rows))
        .collect::<Result<Vec<_>>>()?;
    let rows: Vec<AblationRow> = per_seed.into_iter().flatten().collect();
    let dir = cfg.out.join("ablate");
    io::write_atomic(&dir.join("ablation.csv"), format_ablation(&rows).as_bytes())?;
    write_manifest(&dir.join("run_manifest.txt"), "ablate", cfg)?;
    Ok(rows)
}

/// Images side by side, separated by one white column.
pub fn montage(tiles: &[GrayImage]) -> Result<GrayImage> {
    let Some(first) = tiles.first() else {
        return Err(Error::Config("montage needs at least one tile".into()));
    };
    let (h, w) = (first.height, first.width);
    if tiles.iter().any(|t| t.height != h || t.width != w) {
        return Err(Error::Config("montage tiles differ in size".into()));
    }
    let width = tiles.len() * (w + 1) - 1;
    let mut pixels = vec![255u8; width * h];
    for (t, tile) in tiles.iter().enumerate() {
        for i in 0..h {
            let dst = i * width + t * (w + 1);
            pixels[dst..dst + w].copy_from_slice(&tile.pixels[i * w..(i + 1) * w]);
        }
    }
    Ok(GrayImage { width, height: h, pixels })
}

fn default_heatmap_ids(test: &Dataset) -> Vec<String> {
    [0u8, 1]
        .iter()
        .filter_map(|&l| test.labels.iter().position(|&x| x == l))
        .map(|i| test.ids[i].clone())
        .collect()
}

/// Writes one PGM per test image and method, plus a montage of the input
/// followed by each method's map. Each map is min-max scaled on its own.
pub fn cmd_heatmap(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let test = data::load_split(&cfg.data_dir(), Split::Test)?;
    let ens = load_ensemble(cfg, ScoreMethod::EnsRecon)?;
    let ids = if cfg.heatmap_ids.is_empty() {
        default_heatmap_ids(&test)
    } else {
        cfg.heatmap_ids.clone()
    };
    let methods: Vec<ScoreMethod> = ScoreMethod::ALL
        .into_iter()
        .filter(|m| m.min_learners() <= ens.len())
        .collect();
    let dir = cfg.out.join("heatmaps");
    let mut written = Vec::new();
    for id in &ids {
        let i = test
            .index_of(id)
            .ok_or_else(|| Error::Config(format!("no test image `{id}` in {}", cfg.data_dir().display())))?;
        let img = &test.images[i];
        let mut tiles = vec![GrayImage {
            width: img.width,
            height: img.height,
            pixels: normalize_u8(&img.pixels),
        }];
        for &m in &methods {
            let (_, map) = dsu::score_image(&ens, img, m, Reduction::Mean)?;
            let gray = map.to_gray();
            let path = dir.join(format!("{id}_{m}.pgm"));
            io::write_pgm(&path, &gray)?;
            written.push(path);
            tiles.push(gray);
        }
        let path = dir.join(format!("{id}_montage.pgm"));
        io::write_pgm(&path, &montage(&tiles)?)?;
        written.push(path);
    }
    write_manifest(&dir.join("run_manifest.txt"), "heatmap", cfg)?;
    Ok(written)
}
