//! Synthetic one-class anomaly benchmark and dataset persistence.
//!
//! Normal images are smooth textures: 2–4 low-frequency sinusoidal gratings
//! plus a roughly centered Gaussian blob, min-max normalized and quantized to
//! the 8-bit grid (`k/255`) so that IDX round trips are lossless. Anomalies
//! alter one `k×k` square, `k ∈ [min(h,w)/8, min(h,w)/4]`.
//!
//! All randomness comes from ChaCha8 streams (`rand_chacha`) keyed by
//! `seed_from_u64(seed)`; the benchmark uses distinct stream ids for the
//! train split, the test base images and the anomaly placement.

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::io::{self, IdxImages};
use crate::tensor::Tensor;

/// Grayscale image with values in `[0, 1]`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub height: usize,
    pub width: usize,
    pub pixels: Vec<f64>,
}

impl Image {
    pub fn new(height: usize, width: usize, pixels: Vec<f64>) -> Result<Self> {
        if pixels.len() != height * width {
            return Err(Error::shape(
                "image",
                format!("{height}x{width} needs {} pixels, got {}", height * width, pixels.len()),
            ));
        }
        Ok(Image {
            height,
            width,
            pixels,
        })
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn to_u8(&self) -> Vec<u8> {
        self.pixels
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect()
    }

    pub fn from_u8(height: usize, width: usize, bytes: &[u8]) -> Result<Self> {
        Image::new(height, width, bytes.iter().map(|&b| b as f64 / 255.0).collect())
    }

    /// `1 × (h·w)` row tensor.
    pub fn as_row(&self) -> Tensor {
        Tensor::new(&[1, self.len()], self.pixels.clone()).expect("sized")
    }
}

/// Stacks images into an `[n × h·w]` batch.
pub fn stack(images: &[&Image]) -> Result<Tensor> {
    let d = images.first().map_or(0, |i| i.len());
    if images.iter().any(|i| i.len() != d) {
        return Err(Error::shape("stack", "images differ in size"));
    }
    let data = images.iter().flat_map(|i| i.pixels.iter().copied()).collect();
    Tensor::new(&[images.len(), d], data)
}

fn quantize(v: f64) -> f64 {
    (v.clamp(0.0, 1.0) * 255.0).round() / 255.0
}

fn uniform(rng: &mut impl RngCore, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.gen::<f64>()
}

fn index_in(rng: &mut impl RngCore, lo: usize, hi_inclusive: usize) -> usize {
    lo + (rng.next_u64() % (hi_inclusive - lo + 1) as u64) as usize
}

fn check_size(h: usize, w: usize) -> Result<()> {
    if h < 8 || w < 8 {
        return Err(Error::Config(format!("images must be at least 8x8, got {h}x{w}")));
    }
    Ok(())
}

fn render_normal(rng: &mut impl RngCore, h: usize, w: usize) -> Image {
    let mut v = vec![0.0; h * w];
    let n_gratings = index_in(rng, 2, 4);
    for _ in 0..n_gratings {
        let freq = uniform(rng, 0.25, 1.0); // cycles per image
        let angle = uniform(rng, 0.0, PI);
        let phase = uniform(rng, 0.0, 2.0 * PI);
        let amp = uniform(rng, 0.3, 1.0);
        let (c, s) = (angle.cos(), angle.sin());
        for i in 0..h {
            for j in 0..w {
                let (x, y) = (j as f64 / w as f64, i as f64 / h as f64);
                v[i * w + j] += amp * (2.0 * PI * freq * (x * c + y * s) + phase).sin();
            }
        }
    }
    let cx = 0.5 + uniform(rng, -0.125, 0.125);
    let cy = 0.5 + uniform(rng, -0.125, 0.125);
    let sigma = uniform(rng, 0.15, 0.25);
    let amp = uniform(rng, 1.0, 2.0);
    for i in 0..h {
        for j in 0..w {
            let (x, y) = (j as f64 / w as f64, i as f64 / h as f64);
            let d2 = (x - cx).powi(2) + (y - cy).powi(2);
            v[i * w + j] += amp * (-d2 / (2.0 * sigma * sigma)).exp();
        }
    }
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    Image {
        height: h,
        width: w,
        pixels: v.into_iter().map(|x| quantize((x - lo) / span)).collect(),
    }
}

/// `count` normal textures from one seeded stream.
pub fn generate_normal(seed: u64, count: usize, h: usize, w: usize) -> Result<Vec<Image>> {
    check_size(h, w)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..count).map(|_| render_normal(&mut rng, h, w)).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AnomalyKind {
    BrightPatch,
    FrequencyShift,
    Deletion,
}

impl AnomalyKind {
    pub const ALL: [AnomalyKind; 3] = [
        AnomalyKind::BrightPatch,
        AnomalyKind::FrequencyShift,
        AnomalyKind::Deletion,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AnomalyKind::BrightPatch => "bright_patch",
            AnomalyKind::FrequencyShift => "frequency_shift",
            AnomalyKind::Deletion => "deletion",
        }
    }
}

impl fmt::Display for AnomalyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AnomalyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AnomalyKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown anomaly kind `{s}`")))
    }
}

/// Alters one random `k×k` square and returns the image with its mask.
///
/// * `BrightPatch`: each pixel moves 60–90% of the way toward 1.
/// * `FrequencyShift`: the square is replaced by a grating at 4 cycles per
///   image (four times the highest normal grating frequency), centered on
///   the square's mean.
/// * `Deletion`: the square is flattened to its mean.
pub fn inject_anomaly(image: &Image, seed: u64, kind: AnomalyKind) -> (Image, Vec<bool>) {
    let (h, w) = (image.height, image.width);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let side = h.min(w);
    let k = index_in(&mut rng, (side / 8).max(1), (side / 4).max(1));
    let i0 = index_in(&mut rng, 0, h - k);
    let j0 = index_in(&mut rng, 0, w - k);

    let mut mask = vec![false; h * w];
    let mut idx = Vec::with_capacity(k * k);
    for i in i0..i0 + k {
        for j in j0..j0 + k {
            mask[i * w + j] = true;
            idx.push((i, j));
        }
    }
    let mut out = image.clone();
    let px = &mut out.pixels;
    let region_mean = idx.iter().map(|&(i, j)| image.pixels[i * w + j]).sum::<f64>() / idx.len() as f64;
    match kind {
        AnomalyKind::BrightPatch => {
            let strength = uniform(&mut rng, 0.6, 0.9);
            for &(i, j) in &idx {
                let v = px[i * w + j];
                px[i * w + j] = quantize(v + strength * (1.0 - v));
            }
        }
        AnomalyKind::FrequencyShift => {
            let freq = 4.0;
            let angle = uniform(&mut rng, 0.0, PI);
            let phase = uniform(&mut rng, 0.0, 2.0 * PI);
            let (c, s) = (angle.cos(), angle.sin());
            for &(i, j) in &idx {
                let (x, y) = (j as f64 / w as f64, i as f64 / h as f64);
                let g = (2.0 * PI * freq * (x * c + y * s) + phase).sin();
                px[i * w + j] = quantize(region_mean + 0.5 * g);
            }
        }
        AnomalyKind::Deletion => {
            for &(i, j) in &idx {
                px[i * w + j] = quantize(region_mean);
            }
        }
    }
    (out, mask)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

/// Labeled images of one split. Label 1 marks an anomaly.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub split: Split,
    pub height: usize,
    pub width: usize,
    pub ids: Vec<String>,
    pub images: Vec<Image>,
    pub labels: Vec<u8>,
}

impl Dataset {
    fn from_parts(split: Split, height: usize, width: usize, images: Vec<Image>, labels: Vec<u8>) -> Self {
        let ids = (0..images.len())
            .map(|i| format!("{}_{i:04}", split.as_str()))
            .collect();
        Dataset {
            split,
            height,
            width,
            ids,
            images,
            labels,
        }
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.height * self.width
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|i| i == id)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BenchmarkParams {
    pub seed: u64,
    pub n_train: usize,
    pub n_test_normal: usize,
    pub n_test_anomalous: usize,
    pub height: usize,
    pub width: usize,
}

impl Default for BenchmarkParams {
    fn default() -> Self {
        BenchmarkParams {
            seed: 0,
            n_train: 200,
            n_test_normal: 50,
            n_test_anomalous: 50,
            height: 16,
            width: 16,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Benchmark {
    pub params: BenchmarkParams,
    pub train: Dataset,
    pub test: Dataset,
    /// Per test image; `None` for normal images.
    pub masks: Vec<Option<Vec<bool>>>,
}

const TRAIN_STREAM: u64 = 1;
const TEST_STREAM: u64 = 2;
const ANOMALY_STREAM: u64 = 3;

/// One-class train split plus a mixed test split (normals first, then
/// anomalies with kinds cycled in [`AnomalyKind::ALL`] order).
pub fn make_benchmark(params: &BenchmarkParams) -> Result<Benchmark> {
    let p = params;
    if p.n_train == 0 || p.n_test_normal == 0 || p.n_test_anomalous == 0 {
        return Err(Error::Config("benchmark counts must be >= 1".into()));
    }
    check_size(p.height, p.width)?;
    let stream = |id| {
        let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
        rng.set_stream(id);
        rng
    };

    let mut rng = stream(TRAIN_STREAM);
    let train_images: Vec<_> = (0..p.n_train)
        .map(|_| render_normal(&mut rng, p.height, p.width))
        .collect();

    let mut rng = stream(TEST_STREAM);
    let n_test = p.n_test_normal + p.n_test_anomalous;
    let mut test_images: Vec<_> = (0..n_test)
        .map(|_| render_normal(&mut rng, p.height, p.width))
        .collect();
    let mut labels = vec![0u8; n_test];
    let mut masks = vec![None; n_test];
    let mut rng = stream(ANOMALY_STREAM);
    for a in 0..p.n_test_anomalous {
        let i = p.n_test_normal + a;
        let kind = AnomalyKind::ALL[a % AnomalyKind::ALL.len()];
        let (img, mask) = inject_anomaly(&test_images[i], rng.next_u64(), kind);
        test_images[i] = img;
        labels[i] = 1;
        masks[i] = Some(mask);
    }

    Ok(Benchmark {
        params: p.clone(),
        train: Dataset::from_parts(Split::Train, p.height, p.width, train_images, vec![0; p.n_train]),
        test: Dataset::from_parts(Split::Test, p.height, p.width, test_images, labels),
        masks,
    })
}

fn split_files(split: Split) -> (String, String) {
    (
        format!("{}-images.idx", split.as_str()),
        format!("{}-labels.idx", split.as_str()),
    )
}

/// Writes both splits as IDX archives plus a `dataset.txt` manifest.
pub fn save_benchmark(bench: &Benchmark, dir: &Path) -> Result<()> {
    for ds in [&bench.train, &bench.test] {
        let (img_file, label_file) = split_files(ds.split);
        let set = IdxImages {
            rows: ds.height,
            cols: ds.width,
            images: ds.images.iter().map(Image::to_u8).collect(),
        };
        io::write_atomic(&dir.join(img_file), &io::encode_idx_images(&set))?;
        io::write_atomic(&dir.join(label_file), &io::encode_idx_labels(&ds.labels))?;
    }
    let p = &bench.params;
    let manifest = io::format_key_values([
        ("seed", p.seed.to_string()),
        ("n_train", p.n_train.to_string()),
        ("n_test_normal", p.n_test_normal.to_string()),
        ("n_test_anomalous", p.n_test_anomalous.to_string()),
        ("height", p.height.to_string()),
        ("width", p.width.to_string()),
    ]);
    io::write_atomic(&dir.join("dataset.txt"), manifest.as_bytes())
}

/// Reads one split from IDX files. Works for any IDX image corpus paired
/// with a label file.
pub fn load_split(dir: &Path, split: Split) -> Result<Dataset> {
    let (img_file, label_file) = split_files(split);
    let set = io::decode_idx_images(&io::read_file(&dir.join(&img_file))?).map_err(|e| annotate(e, &img_file))?;
    let labels = io::decode_idx_labels(&io::read_file(&dir.join(&label_file))?).map_err(|e| annotate(e, &label_file))?;
    if labels.len() != set.images.len() {
        return Err(Error::Config(format!(
            "{}: {} images but {} labels",
            dir.display(),
            set.images.len(),
            labels.len()
        )));
    }
    if split == Split::Train && labels.iter().any(|&l| l != 0) {
        return Err(Error::Config("train split must contain only normal images".into()));
    }
    let images = set
        .images
        .iter()
        .map(|b| Image::from_u8(set.rows, set.cols, b))
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset::from_parts(split, set.rows, set.cols, images, labels))
}

fn annotate(e: Error, file: &str) -> Error {
    match e {
        Error::Parse { offset, msg } => Error::Parse {
            offset,
            msg: format!("{file}: {msg}"),
        },
        other => other,
    }
}
