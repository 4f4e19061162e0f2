//! Small fully-connected network with hand-written backpropagation.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const LAYER_SIZES: [usize; 4] = [6, 32, 32, 3];
/// Output clamp on the predicted acceleration magnitude, m/s².
pub const F_MAX: f64 = 12.0;

const MAGIC: &str = "aerodock-mlp";
const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Tanh,
}

impl Activation {
    fn tag(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
        }
    }

    fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "tanh" => Some(Activation::Tanh),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub epochs: usize,
    pub seed: u64,
    pub samples: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpModel {
    pub layers: Vec<Layer>,
    pub activation: Activation,
    pub f_max: f64,
    /// When positive, outputs 0 and 1 are multiplied by
    /// `r / sqrt(r² + axis_radius²)` with `r` the second input (horizontal
    /// offset), so horizontal force vanishes on the leader's axis.
    pub axis_radius: f64,
    pub meta: TrainingMeta,
}

impl MlpModel {
    /// Glorot-uniform weights, zero biases.
    pub fn new(sizes: &[usize], seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = sizes
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                Layer {
                    weights: DMatrix::from_fn(fan_out, fan_in, |_, _| rng.random_range(-limit..limit)),
                    bias: DVector::zeros(fan_out),
                }
            })
            .collect();
        Self {
            layers,
            activation: Activation::Tanh,
            f_max: F_MAX,
            axis_radius: 0.0,
            meta: TrainingMeta::default(),
        }
    }

    pub fn zeros(sizes: &[usize]) -> Self {
        let layers = sizes
            .windows(2)
            .map(|w| Layer {
                weights: DMatrix::zeros(w[1], w[0]),
                bias: DVector::zeros(w[1]),
            })
            .collect();
        Self {
            layers,
            activation: Activation::Tanh,
            f_max: F_MAX,
            axis_radius: 0.0,
            meta: TrainingMeta::default(),
        }
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.layers[0].weights.ncols()];
        s.extend(self.layers.iter().map(|l| l.weights.nrows()));
        s
    }

    pub fn input_size(&self) -> usize {
        self.layers[0].weights.ncols()
    }

    pub fn output_size(&self) -> usize {
        self.layers.last().map(|l| l.weights.nrows()).unwrap_or(0)
    }

    pub fn forward(&self, input: &[f64]) -> DVector<f64> {
        let x = DMatrix::from_column_slice(input.len(), 1, input);
        self.forward_batch(&x).column(0).into_owned()
    }

    /// Columns of `x` are samples.
    pub fn forward_batch(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let last = self.layers.len() - 1;
        let mut a = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = &layer.weights * &a;
            for mut col in z.column_iter_mut() {
                col += &layer.bias;
            }
            if i < last {
                z.apply(|v| *v = v.tanh());
            }
            a = z;
        }
        if let Some(g) = self.output_gate(x) {
            a.component_mul_assign(&g);
        }
        a
    }

    /// Per-sample output multipliers from the axis gate, if enabled.
    fn output_gate(&self, x: &DMatrix<f64>) -> Option<DMatrix<f64>> {
        if self.axis_radius <= 0.0 || x.nrows() < 2 {
            return None;
        }
        let rc2 = self.axis_radius * self.axis_radius;
        Some(DMatrix::from_fn(self.output_size(), x.ncols(), |r, c| {
            if r < 2 {
                let rho = x[(1, c)];
                rho / (rho * rho + rc2).sqrt()
            } else {
                1.0
            }
        }))
    }

    /// Mean squared error over all outputs of the batch.
    pub fn loss(&self, x: &DMatrix<f64>, y: &DMatrix<f64>) -> f64 {
        let out = self.forward_batch(x);
        (out - y).norm_squared() / (y.len() as f64)
    }

    /// Loss and its gradient with respect to every weight and bias.
    pub fn loss_and_grad(&self, x: &DMatrix<f64>, y: &DMatrix<f64>) -> (f64, Vec<Layer>) {
        let last = self.layers.len() - 1;
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.clone());
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = &layer.weights * acts.last().unwrap();
            for mut col in z.column_iter_mut() {
                col += &layer.bias;
            }
            if i < last {
                z.apply(|v| *v = v.tanh());
            }
            acts.push(z);
        }
        let n = y.len() as f64;
        let gate = self.output_gate(x);
        let out = match &gate {
            Some(g) => acts.last().unwrap().component_mul(g),
            None => acts.last().unwrap().clone(),
        };
        let resid = out - y;
        let loss = resid.norm_squared() / n;

        let mut grads: Vec<Layer> = Vec::with_capacity(self.layers.len());
        let mut delta = match &gate {
            Some(g) => resid.component_mul(g) * (2.0 / n),
            None => resid * (2.0 / n),
        };
        for i in (0..self.layers.len()).rev() {
            if i < last {
                delta.zip_apply(&acts[i + 1], |d, a| *d *= 1.0 - a * a);
            }
            let dw = &delta * acts[i].transpose();
            let db = delta.column_sum();
            let next = if i > 0 {
                Some(self.layers[i].weights.transpose() * &delta)
            } else {
                None
            };
            grads.push(Layer {
                weights: dw,
                bias: db,
            });
            if let Some(d) = next {
                delta = d;
            }
        }
        grads.reverse();
        (loss, grads)
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn params(&self) -> Vec<f64> {
        flatten(&self.layers)
    }

    pub fn set_params(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.num_params());
        let mut off = 0;
        for layer in &mut self.layers {
            let n = layer.weights.len();
            layer.weights.as_mut_slice().copy_from_slice(&flat[off..off + n]);
            off += n;
            let n = layer.bias.len();
            layer.bias.as_mut_slice().copy_from_slice(&flat[off..off + n]);
            off += n;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let sizes: Vec<String> = self.sizes().iter().map(|v| v.to_string()).collect();
        let _ = writeln!(s, "{MAGIC} {FORMAT_VERSION}");
        let _ = writeln!(s, "layers {}", sizes.join(" "));
        let _ = writeln!(s, "activation {}", self.activation.tag());
        let _ = writeln!(s, "f_max {:e}", self.f_max);
        let _ = writeln!(s, "axis_radius {:e}", self.axis_radius);
        let _ = writeln!(
            s,
            "meta {}",
            serde_json::to_string(&self.meta).expect("meta serializes")
        );
        for (i, layer) in self.layers.iter().enumerate() {
            let _ = writeln!(s, "weights {i} {} {}", layer.weights.nrows(), layer.weights.ncols());
            for r in 0..layer.weights.nrows() {
                let row: Vec<String> = layer.weights.row(r).iter().map(|v| format!("{v:e}")).collect();
                let _ = writeln!(s, "{}", row.join(" "));
            }
            let b: Vec<String> = layer.bias.iter().map(|v| format!("{v:e}")).collect();
            let _ = writeln!(s, "bias {i} {}", layer.bias.len());
            let _ = writeln!(s, "{}", b.join(" "));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |msg: &str| Error::ModelFormat(msg.to_string());
        let mut lines = text.lines();
        let mut next = |what: &str| lines.next().ok_or_else(|| bad(&format!("missing {what}")));

        let header: Vec<&str> = next("header")?.split_whitespace().collect();
        if header.first() != Some(&MAGIC) {
            return Err(bad("not an aerodock model file"));
        }
        let version: u32 = header
            .get(1)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| bad("missing version"))?;
        if version != FORMAT_VERSION {
            return Err(Error::ModelFormat(format!(
                "version {version} not supported (expected {FORMAT_VERSION})"
            )));
        }

        let sizes: Vec<usize> = keyed(next("layers")?, "layers")?
            .split_whitespace()
            .map(|v| v.parse().map_err(|_| bad("bad layer size")))
            .collect::<Result<_>>()?;
        if sizes.len() < 2 {
            return Err(bad("need at least two layer sizes"));
        }
        let activation = Activation::from_tag(keyed(next("activation")?, "activation")?.trim())
            .ok_or_else(|| bad("unknown activation"))?;
        let f_max: f64 = keyed(next("f_max")?, "f_max")?
            .trim()
            .parse()
            .map_err(|_| bad("bad f_max"))?;
        let axis_radius: f64 = keyed(next("axis_radius")?, "axis_radius")?
            .trim()
            .parse()
            .map_err(|_| bad("bad axis_radius"))?;
        if !(axis_radius >= 0.0 && axis_radius.is_finite()) {
            return Err(bad("axis_radius must be >= 0"));
        }
        let meta: TrainingMeta = serde_json::from_str(keyed(next("meta")?, "meta")?)
            .map_err(|e| Error::ModelFormat(format!("bad meta: {e}")))?;

        let mut model = MlpModel::zeros(&sizes);
        model.activation = activation;
        model.f_max = f_max;
        model.axis_radius = axis_radius;
        model.meta = meta;
        for (i, layer) in model.layers.iter_mut().enumerate() {
            let expect = format!("weights {i} {} {}", layer.weights.nrows(), layer.weights.ncols());
            if next("weights")?.trim() != expect {
                return Err(Error::ModelFormat(format!("expected '{expect}'")));
            }
            for r in 0..layer.weights.nrows() {
                let row = parse_floats(next("weight row")?, layer.weights.ncols())?;
                for (c, v) in row.into_iter().enumerate() {
                    layer.weights[(r, c)] = v;
                }
            }
            let expect = format!("bias {i} {}", layer.bias.len());
            if next("bias")?.trim() != expect {
                return Err(Error::ModelFormat(format!("expected '{expect}'")));
            }
            let b = parse_floats(next("bias values")?, layer.bias.len())?;
            layer.bias.as_mut_slice().copy_from_slice(&b);
        }
        if !model.is_finite() {
            return Err(bad("non-finite weights"));
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

fn keyed<'a>(line: &'a str, key: &str) -> Result<&'a str> {
    line.strip_prefix(key)
        .map(str::trim_start)
        .ok_or_else(|| Error::ModelFormat(format!("expected '{key}' line")))
}

fn parse_floats(line: &str, n: usize) -> Result<Vec<f64>> {
    let vals: Vec<f64> = line
        .split_whitespace()
        .map(|v| v.parse().map_err(|_| Error::ModelFormat(format!("bad number '{v}'"))))
        .collect::<Result<_>>()?;
    if vals.len() != n {
        return Err(Error::ModelFormat(format!("expected {n} values, got {}", vals.len())));
    }
    Ok(vals)
}

pub fn flatten(layers: &[Layer]) -> Vec<f64> {
    let mut out = Vec::new();
    for l in layers {
        out.extend_from_slice(l.weights.as_slice());
        out.extend_from_slice(l.bias.as_slice());
    }
    out
}

/// Adam with bias-corrected moments over a flat parameter vector.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}
