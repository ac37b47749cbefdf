//! Dense autoencoder learners and their binary checkpoint format.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::io::{write_atomic, ByteReader};
use crate::optim::Parameter;
use crate::similarity::FeatureMatrix;
use crate::tensor::{Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
}

impl Activation {
    fn apply<'t>(self, v: Var<'t>) -> Var<'t> {
        match self {
            Activation::Relu => v.relu(),
            Activation::Sigmoid => v.sigmoid(),
        }
    }

    fn code(self) -> u8 {
        match self {
            Activation::Relu => 0,
            Activation::Sigmoid => 1,
        }
    }

    fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(Activation::Relu),
            1 => Some(Activation::Sigmoid),
            _ => None,
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Relu => "relu",
            Activation::Sigmoid => "sigmoid",
        })
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "sigmoid" => Ok(Activation::Sigmoid),
            _ => Err(Error::Config(format!("unknown activation `{s}`"))),
        }
    }
}

/// Which activation is exposed as the learner's feature matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FeatureTap {
    /// Post-activation bottleneck.
    Bottleneck,
    /// Post-activation output of encoder hidden layer `i`.
    Hidden(usize),
}

impl fmt::Display for FeatureTap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureTap::Bottleneck => f.write_str("bottleneck"),
            FeatureTap::Hidden(i) => write!(f, "hidden:{i}"),
        }
    }
}

impl FromStr for FeatureTap {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "bottleneck" {
            return Ok(FeatureTap::Bottleneck);
        }
        s.strip_prefix("hidden:")
            .and_then(|i| i.parse().ok())
            .map(FeatureTap::Hidden)
            .ok_or_else(|| Error::Config(format!("unknown feature tap `{s}`")))
    }
}

/// Architecture of one learner. The decoder mirrors `hidden_dims` and ends
/// in a sigmoid so reconstructions lie in (0, 1).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AutoencoderConfig {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub bottleneck_dim: usize,
    pub activation: Activation,
    pub feature_tap: FeatureTap,
    pub init_seed: u64,
}

impl Default for AutoencoderConfig {
    fn default() -> Self {
        AutoencoderConfig {
            input_dim: 16 * 16,
            hidden_dims: vec![128, 64],
            bottleneck_dim: 16,
            activation: Activation::Relu,
            feature_tap: FeatureTap::Bottleneck,
            init_seed: 0,
        }
    }
}

impl AutoencoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.bottleneck_dim == 0 || self.hidden_dims.contains(&0) {
            return Err(Error::Config("autoencoder dimensions must be >= 1".into()));
        }
        if self.bottleneck_dim >= self.input_dim {
            return Err(Error::Config(format!(
                "bottleneck_dim ({}) must be smaller than input_dim ({})",
                self.bottleneck_dim, self.input_dim
            )));
        }
        if let FeatureTap::Hidden(i) = self.feature_tap {
            if i >= self.hidden_dims.len() {
                return Err(Error::Config(format!(
                    "feature tap hidden:{i} but only {} hidden layers",
                    self.hidden_dims.len()
                )));
            }
        }
        Ok(())
    }

    /// `(name, fan_in, fan_out)` per dense layer, encoder then decoder.
    fn layers(&self) -> Vec<(String, usize, usize)> {
        let mut widths = vec![self.input_dim];
        widths.extend(&self.hidden_dims);
        widths.push(self.bottleneck_dim);
        let n = widths.len() - 1;
        let mut layers: Vec<_> = (0..n)
            .map(|i| (format!("enc{i}"), widths[i], widths[i + 1]))
            .collect();
        widths.reverse();
        layers.extend((0..n).map(|i| (format!("dec{i}"), widths[i], widths[i + 1])));
        layers
    }

    fn parameter_shapes(&self) -> Vec<(String, Vec<usize>)> {
        self.layers()
            .into_iter()
            .flat_map(|(name, fan_in, fan_out)| {
                [
                    (format!("{name}.weight"), vec![fan_in, fan_out]),
                    (format!("{name}.bias"), vec![1, fan_out]),
                ]
            })
            .collect()
    }

    pub fn feature_dim(&self) -> usize {
        match self.feature_tap {
            FeatureTap::Bottleneck => self.bottleneck_dim,
            FeatureTap::Hidden(i) => self.hidden_dims[i],
        }
    }
}

/// One autoencoder: parameters plus architecture.
#[derive(Clone, Debug, PartialEq)]
pub struct Learner {
    config: AutoencoderConfig,
    params: Vec<Parameter>,
    trained: bool,
}

/// Output of a graph forward pass.
pub struct Forward<'t> {
    pub reconstruction: Var<'t>,
    pub features: Var<'t>,
}

impl Learner {
    /// Weights ~ U(−√(1/fan_in), √(1/fan_in)) from a ChaCha8 stream seeded by
    /// `config.init_seed`; biases zero.
    pub fn init(config: AutoencoderConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed);
        let mut params = Vec::new();
        for (name, fan_in, fan_out) in config.layers() {
            let bound = (1.0 / fan_in as f64).sqrt();
            let w: Vec<f64> = (0..fan_in * fan_out)
                .map(|_| (2.0 * rng.gen::<f64>() - 1.0) * bound)
                .collect();
            params.push(Parameter::new(
                format!("{name}.weight"),
                Tensor::new(&[fan_in, fan_out], w)?,
            ));
            params.push(Parameter::new(format!("{name}.bias"), Tensor::zeros(&[1, fan_out])));
        }
        Ok(Learner {
            config,
            params,
            trained: false,
        })
    }

    pub fn config(&self) -> &AutoencoderConfig {
        &self.config
    }

    pub fn parameters(&self) -> &[Parameter] {
        &self.params
    }

    /// Mutable access for the optimizer. Fails once the learner is frozen.
    pub fn parameters_mut(&mut self) -> Result<&mut [Parameter]> {
        if self.trained {
            return Err(Error::Config("learner is frozen".into()));
        }
        Ok(&mut self.params)
    }

    pub fn is_trained(&self) -> bool {
        self.trained
    }

    pub fn freeze(&mut self) {
        self.trained = true;
        self.params.iter_mut().for_each(Parameter::zero_grad);
    }

    /// Places the parameters on `tape`, as gradient-receiving leaves when
    /// `trainable`, as constants otherwise.
    pub fn bind<'t>(&self, tape: &'t Tape, trainable: bool) -> Vec<Var<'t>> {
        self.params
            .iter()
            .map(|p| {
                if trainable {
                    tape.var(p.value.clone())
                } else {
                    tape.constant(p.value.clone())
                }
            })
            .collect()
    }

    /// Graph forward for a `[r × input_dim]` batch using parameters from
    /// [`Learner::bind`].
    pub fn forward_graph<'t>(&self, params: &[Var<'t>], x: Var<'t>) -> Result<Forward<'t>> {
        let shape = x.shape();
        let rows = match shape[..] {
            [r, d] if d == self.config.input_dim => r,
            _ => {
                return Err(Error::shape(
                    "forward",
                    format!("expected [r, {}], got {shape:?}", self.config.input_dim),
                ))
            }
        };
        let tape = x.tape();
        let ones = tape.constant(Tensor::full(&[rows, 1], 1.0));
        let n_enc = self.config.hidden_dims.len() + 1;
        let mut h = x;
        let mut features = None;
        for (layer, wb) in params.chunks(2).enumerate() {
            let pre = h.matmul(wb[0])?.add(ones.matmul(wb[1])?)?;
            let is_output = layer == 2 * n_enc - 1;
            h = if is_output {
                pre.sigmoid()
            } else {
                self.config.activation.apply(pre)
            };
            let tapped = match self.config.feature_tap {
                FeatureTap::Bottleneck => layer == n_enc - 1,
                FeatureTap::Hidden(i) => layer == i,
            };
            if tapped {
                features = Some(h);
            }
        }
        Ok(Forward {
            reconstruction: h,
            features: features.expect("tap validated"),
        })
    }

    /// Plain forward: `(reconstruction, features)`.
    pub fn forward(&self, batch: &Tensor) -> Result<(Tensor, Tensor)> {
        let tape = Tape::new();
        let params = self.bind(&tape, false);
        let out = self.forward_graph(&params, tape.constant(batch.clone()))?;
        Ok((out.reconstruction.value(), out.features.value()))
    }

    pub fn reconstruct(&self, batch: &Tensor) -> Result<Tensor> {
        Ok(self.forward(batch)?.0)
    }

    pub fn features(&self, batch: &Tensor) -> Result<FeatureMatrix> {
        FeatureMatrix::new(self.forward(batch)?.1)
    }

    /// Serializes to the `D2UE` checkpoint layout (all integers little-endian):
    ///
    /// ```text
    /// "D2UE" | version u32 | input_dim u32 | n_hidden u32 | hidden u32*n
    /// | bottleneck u32 | activation u8 | output_activation u8 | tap u32
    /// | init_seed u64 | trained u8 | n_params u32
    /// | n_params × (name_len u32 | name | ndim u32 | dims u32*ndim | f64*numel)
    /// ```
    pub fn to_bytes(&self) -> Vec<u8> {
        let c = &self.config;
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        put_u32(&mut out, c.input_dim);
        put_u32(&mut out, c.hidden_dims.len());
        c.hidden_dims.iter().for_each(|&d| put_u32(&mut out, d));
        put_u32(&mut out, c.bottleneck_dim);
        out.push(c.activation.code());
        out.push(OUTPUT_SIGMOID);
        let tap = match c.feature_tap {
            FeatureTap::Bottleneck => u32::MAX,
            FeatureTap::Hidden(i) => i as u32,
        };
        out.extend_from_slice(&tap.to_le_bytes());
        out.extend_from_slice(&c.init_seed.to_le_bytes());
        out.push(self.trained as u8);
        put_u32(&mut out, self.params.len());
        for p in &self.params {
            put_u32(&mut out, p.name.len());
            out.extend_from_slice(p.name.as_bytes());
            put_u32(&mut out, p.value.shape().len());
            p.value.shape().iter().for_each(|&d| put_u32(&mut out, d));
            for v in p.value.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        if r.take(4)? != CHECKPOINT_MAGIC {
            return Err(Error::parse(0, "bad checkpoint magic"));
        }
        let at = r.offset();
        let version = r.u32_le()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::parse(at, format!("unsupported checkpoint version {version}")));
        }
        let input_dim = r.u32_le()? as usize;
        let n_hidden = r.u32_le()? as usize;
        let hidden_dims = (0..n_hidden)
            .map(|_| r.u32_le().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let bottleneck_dim = r.u32_le()? as usize;
        let at = r.offset();
        let activation = Activation::from_code(r.u8()?)
            .ok_or_else(|| Error::parse(at, "unknown activation code"))?;
        let at = r.offset();
        if r.u8()? != OUTPUT_SIGMOID {
            return Err(Error::parse(at, "unknown output activation code"));
        }
        let feature_tap = match r.u32_le()? {
            u32::MAX => FeatureTap::Bottleneck,
            i => FeatureTap::Hidden(i as usize),
        };
        let init_seed = r.u64_le()?;
        let trained = r.u8()? != 0;
        let config = AutoencoderConfig {
            input_dim,
            hidden_dims,
            bottleneck_dim,
            activation,
            feature_tap,
            init_seed,
        };
        config
            .validate()
            .map_err(|e| Error::parse(r.offset(), e.to_string()))?;

        let expected = config.parameter_shapes();
        let at = r.offset();
        let n_params = r.u32_le()? as usize;
        if n_params != expected.len() {
            return Err(Error::parse(
                at,
                format!("expected {} parameters, found {n_params}", expected.len()),
            ));
        }
        let mut params = Vec::with_capacity(n_params);
        for (want_name, want_shape) in expected {
            let at = r.offset();
            let name_len = r.u32_le()? as usize;
            let name = String::from_utf8(r.take(name_len)?.to_vec())
                .map_err(|_| Error::parse(at, "parameter name is not UTF-8"))?;
            let ndim = r.u32_le()? as usize;
            let shape = (0..ndim)
                .map(|_| r.u32_le().map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            if name != want_name || shape != want_shape {
                return Err(Error::parse(
                    at,
                    format!("parameter {name} {shape:?} does not match architecture ({want_name} {want_shape:?})"),
                ));
            }
            let numel: usize = shape.iter().product();
            let data = (0..numel).map(|_| r.f64_le()).collect::<Result<Vec<_>>>()?;
            params.push(Parameter::new(name, Tensor::new(&shape, data)?));
        }
        if r.remaining() != 0 {
            return Err(Error::parse(r.offset(), "trailing bytes after checkpoint"));
        }
        Ok(Learner {
            config,
            params,
            trained,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Learner::from_bytes(&bytes).map_err(|e| match e {
            Error::Parse { offset, msg } => Error::Parse {
                offset,
                msg: format!("{}: {msg}", path.display()),
            },
            other => other,
        })
    }
}

const CHECKPOINT_MAGIC: &[u8; 4] = b"D2UE";
const CHECKPOINT_VERSION: u32 = 1;
const OUTPUT_SIGMOID: u8 = 1;

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

/// Mean over batch and pixels of the squared reconstruction error.
pub fn reconstruction_loss<'t>(reconstruction: Var<'t>, batch: Var<'t>) -> Result<Var<'t>> {
    reconstruction.mse(batch)
}

/// Plain-value [`reconstruction_loss`].
pub fn reconstruction_error(reconstruction: &Tensor, batch: &Tensor) -> Result<f64> {
    let sq = reconstruction.zip_map(batch, |a, b| (a - b) * (a - b))?;
    Ok(sq.mean())
}
