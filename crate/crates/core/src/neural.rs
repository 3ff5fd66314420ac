//! One-hidden-layer dense networks with hand-written backprop and Adam.

use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const HIDDEN_UNITS: usize = 200;

/// `input -> hidden (ReLU) -> output (linear)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseNet {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

/// Parameter-shaped gradient (or Adam moment) buffers.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

impl Gradients {
    pub fn zeros_like(net: &DenseNet) -> Self {
        Self {
            w1: Array2::zeros(net.w1.raw_dim()),
            b1: Array1::zeros(net.b1.raw_dim()),
            w2: Array2::zeros(net.w2.raw_dim()),
            b2: Array1::zeros(net.b2.raw_dim()),
        }
    }

    /// Flat view in the same order as [`DenseNet::params`].
    pub fn flat(&self) -> Vec<f64> {
        [
            self.w1.as_slice().expect("standard layout"),
            self.b1.as_slice().expect("standard layout"),
            self.w2.as_slice().expect("standard layout"),
            self.b2.as_slice().expect("standard layout"),
        ]
        .concat()
    }

    pub fn is_finite(&self) -> bool {
        self.w1.iter().chain(&self.b1).chain(&self.w2).chain(&self.b2).all(|v| v.is_finite())
    }

    fn slices_mut(&mut self) -> [&mut [f64]; 4] {
        [
            self.w1.as_slice_mut().expect("standard layout"),
            self.b1.as_slice_mut().expect("standard layout"),
            self.w2.as_slice_mut().expect("standard layout"),
            self.b2.as_slice_mut().expect("standard layout"),
        ]
    }
}

impl DenseNet {
    /// Weights and biases uniform in ±1/sqrt(fan_in), drawn from `seed`.
    pub fn new(input: usize, hidden: usize, output: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layer = |fan_in: usize, fan_out: usize| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            let w = Array2::from_shape_fn((fan_out, fan_in), |_| rng.random_range(-bound..=bound));
            let b = Array1::from_shape_fn(fan_out, |_| rng.random_range(-bound..=bound));
            (w, b)
        };
        let (w1, b1) = layer(input, hidden);
        let (w2, b2) = layer(hidden, output);
        Self { w1, b1, w2, b2 }
    }

    pub fn zeros(input: usize, hidden: usize, output: usize) -> Self {
        Self {
            w1: Array2::zeros((hidden, input)),
            b1: Array1::zeros(hidden),
            w2: Array2::zeros((output, hidden)),
            b2: Array1::zeros(output),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w1.ncols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.w2.nrows()
    }

    pub fn param_count(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    /// All parameters, flattened as w1, b1, w2, b2 (row-major).
    pub fn params(&self) -> Vec<f64> {
        [
            self.w1.as_slice().expect("standard layout"),
            self.b1.as_slice().expect("standard layout"),
            self.w2.as_slice().expect("standard layout"),
            self.b2.as_slice().expect("standard layout"),
        ]
        .concat()
    }

    pub fn set_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::Dimension {
                expected: self.param_count(),
                got: flat.len(),
            });
        }
        let mut rest = flat;
        for s in self.slices_mut() {
            let (head, tail) = rest.split_at(s.len());
            s.copy_from_slice(head);
            rest = tail;
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.w1.iter().chain(&self.b1).chain(&self.w2).chain(&self.b2).all(|v| v.is_finite())
    }

    fn slices_mut(&mut self) -> [&mut [f64]; 4] {
        [
            self.w1.as_slice_mut().expect("standard layout"),
            self.b1.as_slice_mut().expect("standard layout"),
            self.w2.as_slice_mut().expect("standard layout"),
            self.b2.as_slice_mut().expect("standard layout"),
        ]
    }

    fn check_input(&self, len: usize) -> Result<()> {
        if len != self.input_dim() {
            return Err(Error::Dimension {
                expected: self.input_dim(),
                got: len,
            });
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x.len())?;
        // Matrix-vector products: the GEMM path would pack a copy of `w1` on
        // every call, which is slow and fragments the heap during collection.
        let mut h = self.w1.dot(&ArrayView1::from(x)) + &self.b1;
        h.mapv_inplace(|v| v.max(0.0));
        Ok((self.w2.dot(&h) + &self.b2).to_vec())
    }

    /// Outputs for a `batch x input` matrix, one row per sample.
    pub fn forward_batch(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check_input(x.ncols())?;
        let h = self.hidden(x);
        Ok(h.dot(&self.w2.t()) + &self.b2)
    }

    fn hidden(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut z = x.dot(&self.w1.t()) + &self.b1;
        z.mapv_inplace(|v| v.max(0.0));
        z
    }

    pub fn backward(&self, x: &[f64], upstream: &[f64]) -> Result<Gradients> {
        self.check_input(x.len())?;
        let xv = ArrayView2::from_shape((1, x.len()), x).expect("row vector");
        let gv = ArrayView2::from_shape((1, upstream.len()), upstream).map_err(|_| {
            Error::Dimension {
                expected: self.output_dim(),
                got: upstream.len(),
            }
        })?;
        self.backward_batch(xv, gv)
    }

    /// Parameter gradients of `sum_rows(upstream . output)`, i.e. the
    /// upstream gradient is back-propagated and summed over the batch.
    pub fn backward_batch(
        &self,
        x: ArrayView2<'_, f64>,
        upstream: ArrayView2<'_, f64>,
    ) -> Result<Gradients> {
        self.check_input(x.ncols())?;
        if upstream.ncols() != self.output_dim() || upstream.nrows() != x.nrows() {
            return Err(Error::Dimension {
                expected: x.nrows() * self.output_dim(),
                got: upstream.len(),
            });
        }
        if upstream.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("upstream gradient"));
        }
        let h = self.hidden(x);
        let w2 = upstream.t().dot(&h);
        let b2 = upstream.sum_axis(Axis(0));
        let mut dh = upstream.dot(&self.w2);
        dh.zip_mut_with(&h, |g, &a| {
            if a <= 0.0 {
                *g = 0.0;
            }
        });
        let w1 = dh.t().dot(&x);
        let b1 = dh.sum_axis(Axis(0));
        let grads = Gradients { w1, b1, w2, b2 };
        if !grads.is_finite() {
            return Err(Error::NonFinite("parameter gradient"));
        }
        Ok(grads)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: Gradients,
    v: Gradients,
}

impl Adam {
    pub fn new(net: &DenseNet, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: Gradients::zeros_like(net),
            v: Gradients::zeros_like(net),
        }
    }

    /// One bias-corrected descent step along `grads`.
    pub fn update(&mut self, net: &mut DenseNet, grads: &Gradients) -> Result<()> {
        if !grads.is_finite() {
            return Err(Error::NonFinite("gradient"));
        }
        self.step += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(self.step as i32);
        let c2 = 1.0 - b2.powi(self.step as i32);
        let (lr, eps) = (self.lr, self.eps);
        let mut g = grads.clone();
        let params = net.slices_mut();
        let ms = self.m.slices_mut();
        let vs = self.v.slices_mut();
        for (((p, m), v), g) in params.into_iter().zip(ms).zip(vs).zip(g.slices_mut()) {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
            }
        }
        if !net.is_finite() {
            return Err(Error::NonFinite("parameters after update"));
        }
        Ok(())
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("logits"));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let total: f64 = exp.iter().sum();
    Ok(exp.into_iter().map(|e| e / total).collect())
}

/// Roulette-wheel draw: inverse CDF at a single uniform variate.
pub fn sample(probs: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // Rounding left the total just below u: take the last non-zero entry.
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// Most probable action; ties go to the smaller index.
pub fn greedy(probs: &[f64]) -> usize {
    crate::baselines::argmax(probs)
}

pub fn entropy(probs: &[f64]) -> f64 {
    -probs.iter().filter(|&&p| p > 0.0).map(|&p| p * p.ln()).sum::<f64>()
}

/// Largest relative error between `analytic` and central differences of `loss`
/// over every parameter. Relative error is `|a - n| / max(|a|, |n|, floor)`.
pub fn gradient_check(
    net: &DenseNet,
    analytic: &Gradients,
    loss: impl Fn(&DenseNet) -> f64,
    step: f64,
    floor: f64,
) -> f64 {
    let base = net.params();
    let grads = analytic.flat();
    let mut probe = net.clone();
    let mut worst: f64 = 0.0;
    for i in 0..base.len() {
        let mut p = base.clone();
        p[i] = base[i] + step;
        probe.set_params(&p).expect("same shape");
        let up = loss(&probe);
        p[i] = base[i] - step;
        probe.set_params(&p).expect("same shape");
        let down = loss(&probe);
        let numeric = (up - down) / (2.0 * step);
        let denom = grads[i].abs().max(numeric.abs()).max(floor);
        worst = worst.max((grads[i] - numeric).abs() / denom);
    }
    worst
}

#[derive(Serialize, Deserialize)]
struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct NetFile {
    format: String,
    version: u32,
    w1: Tensor,
    b1: Tensor,
    w2: Tensor,
    b2: Tensor,
}

const CHECKPOINT_FORMAT: &str = "courierlab-dense";
const CHECKPOINT_VERSION: u32 = 1;

impl DenseNet {
    pub fn to_json(&self) -> serde_json::Value {
        let t2 = |a: &Array2<f64>| Tensor {
            shape: a.shape().to_vec(),
            data: a.iter().copied().collect(),
        };
        let t1 = |a: &Array1<f64>| Tensor {
            shape: vec![a.len()],
            data: a.to_vec(),
        };
        serde_json::to_value(NetFile {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            w1: t2(&self.w1),
            b1: t1(&self.b1),
            w2: t2(&self.w2),
            b2: t1(&self.b2),
        })
        .expect("plain data serializes")
    }

    pub fn from_json(value: &serde_json::Value) -> Result<Self> {
        let file: NetFile = serde_json::from_value(value.clone())?;
        let bad = |m: String| Error::Schema {
            path: "network".into(),
            message: m,
        };
        if file.format != CHECKPOINT_FORMAT || file.version != CHECKPOINT_VERSION {
            return Err(bad(format!(
                "unsupported checkpoint {} v{}",
                file.format, file.version
            )));
        }
        let m2 = |t: Tensor, name: &str| {
            let [r, c] = t.shape[..] else {
                return Err(bad(format!("{name} must be 2-d")));
            };
            Array2::from_shape_vec((r, c), t.data).map_err(|e| bad(format!("{name}: {e}")))
        };
        let m1 = |t: Tensor, name: &str| {
            if t.shape != [t.data.len()] {
                return Err(bad(format!("{name} shape does not match its data")));
            }
            Ok(Array1::from_vec(t.data))
        };
        let net = Self {
            w1: m2(file.w1, "w1")?,
            b1: m1(file.b1, "b1")?,
            w2: m2(file.w2, "w2")?,
            b2: m1(file.b2, "b2")?,
        };
        if net.b1.len() != net.w1.nrows()
            || net.w2.ncols() != net.w1.nrows()
            || net.b2.len() != net.w2.nrows()
        {
            return Err(bad("layer shapes are inconsistent".into()));
        }
        if !net.is_finite() {
            return Err(Error::NonFinite("checkpoint parameters"));
        }
        Ok(net)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(&self.to_json())?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&serde_json::from_str(&text)?)
    }
}
