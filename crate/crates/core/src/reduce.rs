//! Fully connected autoencoder used to compress the capped rearranged
//! vectors. Encoder and decoder mirror each other:
//! `input → hidden… → code → reversed hidden… → input`.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::container::Container;
use crate::error::{Error, Result};
use crate::nn::{Activation, DenseParams, Parameters};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AutoencoderConfig {
    pub input_dim: usize,
    pub hidden_sizes: Vec<usize>,
    pub reduced_dim: usize,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for AutoencoderConfig {
    fn default() -> Self {
        Self {
            input_dim: 2100,
            hidden_sizes: vec![128],
            reduced_dim: 200,
            hidden_activation: Activation::Tanh,
            output_activation: Activation::Identity,
            epochs: 30,
            batch_size: 16,
            learning_rate: 0.5,
            seed: 0,
        }
    }
}

impl AutoencoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.reduced_dim == 0 {
            return Err(Error::config("reduce.reduced_dim", "dimensions must be ≥ 1"));
        }
        if self.reduced_dim >= self.input_dim {
            return Err(Error::config(
                "reduce.reduced_dim",
                format!("{} must be smaller than input_dim {}", self.reduced_dim, self.input_dim),
            ));
        }
        if self.hidden_sizes.contains(&0) {
            return Err(Error::config("reduce.hidden_sizes", "layer widths must be ≥ 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("reduce.batch_size", "must be ≥ 1"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("reduce.learning_rate", "must be finite and ≥ 0"));
        }
        Ok(())
    }

    /// Layer widths from input through code and back to input.
    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.input_dim];
        dims.extend(&self.hidden_sizes);
        dims.push(self.reduced_dim);
        dims.extend(self.hidden_sizes.iter().rev());
        dims.push(self.input_dim);
        dims
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AutoencoderParams {
    pub encoder: Vec<DenseParams>,
    pub decoder: Vec<DenseParams>,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
}

impl AutoencoderParams {
    pub fn input_dim(&self) -> usize {
        self.encoder.first().map_or(0, DenseParams::inputs)
    }

    pub fn reduced_dim(&self) -> usize {
        self.encoder.last().map_or(0, DenseParams::outputs)
    }

    fn zeros_like(&self) -> Self {
        let z = |ls: &[DenseParams]| ls.iter().map(|l| DenseParams::zeros(l.inputs(), l.outputs())).collect();
        Self {
            encoder: z(&self.encoder),
            decoder: z(&self.decoder),
            hidden_activation: self.hidden_activation,
            output_activation: self.output_activation,
        }
    }

    /// Activation after each layer of the full encoder+decoder chain. The
    /// code layer and the reconstruction layer use the output activation.
    fn activations(&self) -> Vec<Activation> {
        let n_enc = self.encoder.len();
        let n_dec = self.decoder.len();
        (0..n_enc + n_dec)
            .map(|i| {
                if i == n_enc - 1 || i == n_enc + n_dec - 1 {
                    self.output_activation
                } else {
                    self.hidden_activation
                }
            })
            .collect()
    }

    fn layers(&self) -> impl Iterator<Item = &DenseParams> {
        self.encoder.iter().chain(&self.decoder)
    }

    /// Layer outputs, `outs[0]` is the input itself.
    fn forward_all(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        let mut outs = vec![x.to_vec()];
        for (layer, act) in self.layers().zip(self.activations()) {
            let y: Vec<f64> = layer
                .forward(outs.last().expect("non-empty"))?
                .into_iter()
                .map(|v| act.apply(v))
                .collect();
            outs.push(y);
        }
        Ok(outs)
    }

    /// Mean squared reconstruction error of one vector and its gradient.
    pub fn loss_and_gradients(&self, x: &[f64]) -> Result<(f64, AutoencoderParams)> {
        let outs = self.forward_all(x)?;
        let recon = outs.last().expect("non-empty");
        let n = x.len() as f64;
        let loss = recon.iter().zip(x).map(|(r, t)| (r - t) * (r - t)).sum::<f64>() / n;
        let mut grads = self.zeros_like();
        let acts = self.activations();
        let mut dy: Vec<f64> = recon.iter().zip(x).map(|(r, t)| 2.0 * (r - t) / n).collect();
        let n_enc = self.encoder.len();
        let layers: Vec<&DenseParams> = self.layers().collect();
        for li in (0..layers.len()).rev() {
            let y = &outs[li + 1];
            let dz: Vec<f64> = dy
                .iter()
                .zip(y)
                .map(|(d, &yv)| d * acts[li].derivative_from_output(yv))
                .collect();
            let g = if li < n_enc {
                &mut grads.encoder[li]
            } else {
                &mut grads.decoder[li - n_enc]
            };
            dy = layers[li].backward(&outs[li], &dz, g);
        }
        Ok((loss, grads))
    }

    pub fn reconstruction_loss(&self, x: &[f64]) -> Result<f64> {
        let outs = self.forward_all(x)?;
        let recon = outs.last().expect("non-empty");
        Ok(recon.iter().zip(x).map(|(r, t)| (r - t) * (r - t)).sum::<f64>() / x.len() as f64)
    }

    pub fn to_container(&self, seed: u64, standardizer: Option<&Standardizer>) -> Container {
        let shapes: Vec<[usize; 2]> = self.layers().map(|l| [l.outputs(), l.inputs()]).collect();
        let mut c = Container::new(serde_json::json!({
            "kind": "autoencoder",
            "layer_shapes": shapes,
            "encoder_layers": self.encoder.len(),
            "hidden_activation": self.hidden_activation,
            "output_activation": self.output_activation,
            "seed": seed,
            "standardization": standardizer,
        }));
        self.write_into("", &mut c);
        c
    }

    pub fn from_container(c: &Container) -> Result<(Self, Option<Standardizer>)> {
        #[derive(Deserialize)]
        struct Meta {
            layer_shapes: Vec<[usize; 2]>,
            encoder_layers: usize,
            hidden_activation: Activation,
            output_activation: Activation,
            standardization: Option<Standardizer>,
        }
        let meta: Meta = serde_json::from_value(c.meta.clone())?;
        if meta.encoder_layers == 0 || meta.encoder_layers >= meta.layer_shapes.len() {
            return Err(Error::Shape("autoencoder layer split is invalid".into()));
        }
        let mut layers = meta.layer_shapes.iter().map(|[o, i]| DenseParams::zeros(*i, *o));
        let encoder = layers.by_ref().take(meta.encoder_layers).collect();
        let decoder = layers.collect();
        let mut p = Self {
            encoder,
            decoder,
            hidden_activation: meta.hidden_activation,
            output_activation: meta.output_activation,
        };
        p.read_from("", c)?;
        Ok((p, meta.standardization))
    }
}

impl Parameters for AutoencoderParams {
    fn tensors(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        let mut out = Vec::new();
        for (side, layers) in [("encoder", &self.encoder), ("decoder", &self.decoder)] {
            for (i, l) in layers.iter().enumerate() {
                out.extend(
                    l.tensors()
                        .into_iter()
                        .map(|(n, s, d)| (format!("{side}.{i}.{n}"), s, d)),
                );
            }
        }
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for l in self.encoder.iter_mut().chain(self.decoder.iter_mut()) {
            out.extend(l.tensors_mut());
        }
        out
    }
}

/// Per-element standardization fitted on the training split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    /// Constant elements get scale 1 so they map to zero instead of NaN.
    pub fn fit(data: &[Vec<f64>]) -> Result<Self> {
        let first = data
            .first()
            .ok_or_else(|| Error::Dataset("cannot standardize an empty set".into()))?;
        let dim = first.len();
        if data.iter().any(|v| v.len() != dim) {
            return Err(Error::Shape("standardizer: ragged vectors".into()));
        }
        let n = data.len() as f64;
        let mut mean = vec![0.0; dim];
        for v in data {
            crate::linalg::axpy(1.0 / n, v, &mut mean);
        }
        let mut var = vec![0.0; dim];
        for v in data {
            for k in 0..dim {
                var[k] += (v[k] - mean[k]).powi(2) / n;
            }
        }
        let scale = var
            .into_iter()
            .map(|s| if s.sqrt() > 1e-12 { s.sqrt() } else { 1.0 })
            .collect();
        Ok(Self { mean, scale })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.dim() {
            return Err(Error::Shape(format!(
                "standardizer fitted on {} elements, got {}",
                self.dim(),
                v.len()
            )));
        }
        Ok(v.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(x, (m, s))| (x - m) / s)
            .collect())
    }
}

pub fn init_autoencoder(config: &AutoencoderConfig, seed: u64) -> Result<AutoencoderParams> {
    config.validate()?;
    Ok(init_with_rng(config, &mut ChaCha8Rng::seed_from_u64(seed)))
}

fn init_with_rng(config: &AutoencoderConfig, rng: &mut ChaCha8Rng) -> AutoencoderParams {
    let dims = config.layer_dims();
    let n_enc = config.hidden_sizes.len() + 1;
    let mut layers: Vec<DenseParams> = dims.windows(2).map(|w| DenseParams::init(rng, w[0], w[1])).collect();
    let decoder = layers.split_off(n_enc);
    AutoencoderParams {
        encoder: layers,
        decoder,
        hidden_activation: config.hidden_activation,
        output_activation: config.output_activation,
    }
}

fn encoder_layers_forward(layers: &[DenseParams], acts: &[Activation], v: &[f64]) -> Result<Vec<f64>> {
    let mut x = v.to_vec();
    for (l, a) in layers.iter().zip(acts) {
        x = l.forward(&x)?.into_iter().map(|y| a.apply(y)).collect();
    }
    Ok(x)
}

pub fn encode(params: &AutoencoderParams, v: &[f64]) -> Result<Vec<f64>> {
    if v.len() != params.input_dim() {
        return Err(Error::Shape(format!(
            "encoder expects {} elements, got {}",
            params.input_dim(),
            v.len()
        )));
    }
    let acts = params.activations();
    encoder_layers_forward(&params.encoder, &acts[..params.encoder.len()], v)
}

pub fn decode(params: &AutoencoderParams, z: &[f64]) -> Result<Vec<f64>> {
    if z.len() != params.reduced_dim() {
        return Err(Error::Shape(format!(
            "decoder expects {} elements, got {}",
            params.reduced_dim(),
            z.len()
        )));
    }
    let acts = params.activations();
    encoder_layers_forward(&params.decoder, &acts[params.encoder.len()..], z)
}

fn mean_loss(params: &AutoencoderParams, data: &[Vec<f64>]) -> Result<f64> {
    let losses = data
        .par_iter()
        .map(|x| params.reconstruction_loss(x))
        .collect::<Result<Vec<_>>>()?;
    Ok(losses.iter().sum::<f64>() / data.len() as f64)
}

#[derive(Clone, Debug)]
pub struct TrainedAutoencoder {
    pub params: AutoencoderParams,
    /// Mean reconstruction loss over the dataset after each epoch.
    pub loss_history: Vec<f64>,
}

/// Mini-batch gradient descent on mean squared reconstruction error.
pub fn train_autoencoder(dataset: &[Vec<f64>], config: &AutoencoderConfig) -> Result<TrainedAutoencoder> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::Dataset("autoencoder training set is empty".into()));
    }
    if let Some(bad) = dataset.iter().position(|v| v.len() != config.input_dim) {
        return Err(Error::Shape(format!(
            "training vector {bad} has {} elements, expected {}",
            dataset[bad].len(),
            config.input_dim
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = init_with_rng(config, &mut rng);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            let grads = batch
                .par_iter()
                .map(|&i| params.loss_and_gradients(&dataset[i]).map(|(_, g)| g))
                .collect::<Result<Vec<_>>>()?;
            let mut total = params.zeros_like();
            for g in &grads {
                total.add_scaled(g, 1.0 / batch.len() as f64);
            }
            if !total.all_finite() {
                return Err(Error::Divergence { epoch, loss: f64::NAN });
            }
            params.add_scaled(&total, -config.learning_rate);
        }
        let loss = mean_loss(&params, dataset)?;
        if !loss.is_finite() {
            return Err(Error::Divergence { epoch, loss });
        }
        log::debug!("autoencoder epoch {epoch}: loss {loss:.6}");
        history.push(loss);
    }
    Ok(TrainedAutoencoder {
        params,
        loss_history: history,
    })
}

pub fn reduce_dataset(params: &AutoencoderParams, dataset: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    dataset.par_iter().map(|v| encode(params, v)).collect()
}
