use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::activation::PolyActivation;
use crate::error::{Error, Result};
use crate::util;

#[derive(Clone, Debug, PartialEq)]
pub struct HiddenLayer {
    pub width: usize,
    pub activation: PolyActivation,
}

impl HiddenLayer {
    pub fn new(width: usize, activation: PolyActivation) -> Self {
        HiddenLayer { width, activation }
    }
}

/// Network skeleton: dense hidden layers with polynomial activations, then
/// a linear output layer of `output_dim` logits.
#[derive(Clone, Debug, PartialEq)]
pub struct DTNetArch {
    input_dim: usize,
    hidden: Vec<HiddenLayer>,
    output_dim: usize,
}

impl DTNetArch {
    pub fn new(input_dim: usize, hidden: Vec<HiddenLayer>, output_dim: usize) -> Result<Self> {
        if input_dim < 1 || output_dim < 1 {
            return Err(Error::InvalidParam(
                "input and output dimensions must be at least 1".into(),
            ));
        }
        if hidden.is_empty() {
            return Err(Error::InvalidParam("a DTNet needs at least one hidden layer".into()));
        }
        if hidden.iter().any(|h| h.width < 1) {
            return Err(Error::InvalidParam("hidden widths must be at least 1".into()));
        }
        Ok(DTNetArch {
            input_dim,
            hidden,
            output_dim,
        })
    }

    /// Same activation on every hidden layer.
    pub fn uniform(input_dim: usize, widths: &[usize], activation: &PolyActivation, output_dim: usize) -> Result<Self> {
        let hidden = widths
            .iter()
            .map(|&w| HiddenLayer::new(w, activation.clone()))
            .collect();
        Self::new(input_dim, hidden, output_dim)
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn hidden(&self) -> &[HiddenLayer] {
        &self.hidden
    }

    /// `(fan_in, fan_out)` of every dense layer, output layer last.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut dims = vec![self.input_dim];
        dims.extend(self.hidden.iter().map(|h| h.width));
        dims.push(self.output_dim);
        dims.windows(2).map(|w| (w[0], w[1])).collect()
    }

    pub fn param_count(&self) -> usize {
        self.layer_shapes().iter().map(|(i, o)| i * o + o).sum()
    }

    /// Short label such as `32|32 approxSigmoid`.
    pub fn describe(&self) -> String {
        let widths: Vec<String> = self.hidden.iter().map(|h| h.width.to_string()).collect();
        let mut acts: Vec<&str> = self.hidden.iter().map(|h| h.activation.name()).collect();
        acts.dedup();
        format!("{} {}", widths.join("|"), acts.join("|"))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenseLayer {
    /// `fan_in x fan_out`, so a batch maps as `X W + b`.
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DTNetModel {
    arch: DTNetArch,
    layers: Vec<DenseLayer>,
}

/// Dropout applied to hidden outputs during training.
pub struct Dropout<'a> {
    pub rate: f64,
    pub rng: &'a mut ChaCha8Rng,
}

/// Intermediates kept for backpropagation.
pub struct ForwardCache {
    /// Input to each dense layer (after dropout for hidden outputs).
    inputs: Vec<Array2<f64>>,
    /// Pre-activations of each hidden layer.
    pre: Vec<Array2<f64>>,
    /// Inverted-dropout multipliers per hidden layer.
    masks: Vec<Option<Array2<f64>>>,
}

/// Per-layer parameter gradients, same layout as the model's layers.
#[derive(Clone, Debug)]
pub struct Gradients {
    pub layers: Vec<DenseLayer>,
}

impl DTNetModel {
    pub fn from_layers(arch: DTNetArch, layers: Vec<DenseLayer>) -> Result<Self> {
        let shapes = arch.layer_shapes();
        if layers.len() != shapes.len() {
            return Err(Error::Shape(format!(
                "{} layers for an arch with {}",
                layers.len(),
                shapes.len()
            )));
        }
        for (i, (l, &(fi, fo))) in layers.iter().zip(&shapes).enumerate() {
            if l.weights.dim() != (fi, fo) || l.bias.len() != fo {
                return Err(Error::Shape(format!(
                    "layer {i}: weights {:?} / bias {} but expected ({fi}, {fo}) / {fo}",
                    l.weights.dim(),
                    l.bias.len()
                )));
            }
            if l.weights.iter().chain(l.bias.iter()).any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { layer: i });
            }
        }
        Ok(DTNetModel { arch, layers })
    }

    pub fn zeros(arch: DTNetArch) -> Self {
        let layers = arch
            .layer_shapes()
            .into_iter()
            .map(|(fi, fo)| DenseLayer {
                weights: Array2::zeros((fi, fo)),
                bias: Array1::zeros(fo),
            })
            .collect();
        DTNetModel { arch, layers }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn glorot(arch: DTNetArch, seed: u64) -> Self {
        let mut rng = util::rng(seed);
        let layers = arch
            .layer_shapes()
            .into_iter()
            .map(|(fi, fo)| {
                let limit = (6.0 / (fi + fo) as f64).sqrt();
                DenseLayer {
                    weights: Array2::from_shape_fn((fi, fo), |_| rng.gen_range(-limit..=limit)),
                    bias: Array1::zeros(fo),
                }
            })
            .collect();
        DTNetModel { arch, layers }
    }

    pub fn arch(&self) -> &DTNetArch {
        &self.arch
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    /// Copy with every parameter multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut m = self.clone();
        for l in &mut m.layers {
            l.weights.mapv_inplace(|v| v * factor);
            l.bias.mapv_inplace(|v| v * factor);
        }
        m
    }

    fn check_input(&self, x: ArrayView2<'_, f64>) -> Result<()> {
        if x.ncols() != self.arch.input_dim {
            return Err(Error::Shape(format!(
                "input has {} columns, network expects {}",
                x.ncols(),
                self.arch.input_dim
            )));
        }
        Ok(())
    }

    /// Logits (no softmax) and the cache needed by [`Self::backward`].
    ///
    /// With `check_finite`, a non-finite value aborts with the index of the
    /// layer that produced it.
    pub fn forward(
        &self,
        x: ArrayView2<'_, f64>,
        mut dropout: Option<Dropout<'_>>,
        check_finite: bool,
    ) -> Result<(Array2<f64>, ForwardCache)> {
        self.check_input(x)?;
        let mut cache = ForwardCache {
            inputs: Vec::with_capacity(self.layers.len()),
            pre: Vec::new(),
            masks: Vec::new(),
        };
        let mut h = x.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            let z = h.dot(&layer.weights) + &layer.bias;
            cache.inputs.push(h);
            if i == self.arch.hidden.len() {
                if check_finite && z.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite { layer: i });
                }
                return Ok((z, cache));
            }
            let act = &self.arch.hidden[i].activation;
            let mut a = z.mapv(|v| act.eval(v));
            let mask = match dropout.as_mut() {
                Some(d) if d.rate > 0.0 => {
                    let keep = 1.0 - d.rate;
                    let m =
                        Array2::from_shape_fn(a.dim(), |_| if d.rng.gen::<f64>() < d.rate { 0.0 } else { 1.0 / keep });
                    a *= &m;
                    Some(m)
                }
                _ => None,
            };
            if check_finite && a.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { layer: i });
            }
            cache.pre.push(z);
            cache.masks.push(mask);
            h = a;
        }
        unreachable!("output layer returns")
    }

    pub fn logits(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        Ok(self.forward(x, None, true)?.0)
    }

    /// Gradients of a loss whose derivative with respect to the logits is
    /// `dlogits`.
    pub fn backward(&self, cache: &ForwardCache, dlogits: Array2<f64>) -> Gradients {
        let n = self.layers.len();
        let mut grads: Vec<DenseLayer> = Vec::with_capacity(n);
        let mut delta = dlogits;
        for i in (0..n).rev() {
            let input = &cache.inputs[i];
            grads.push(DenseLayer {
                weights: input.t().dot(&delta),
                bias: delta.sum_axis(Axis(0)),
            });
            if i == 0 {
                break;
            }
            // Back through hidden layer i-1: dropout mask, then activation.
            let mut d = delta.dot(&self.layers[i].weights.t());
            if let Some(m) = &cache.masks[i - 1] {
                d *= m;
            }
            let act = &self.arch.hidden[i - 1].activation;
            d.zip_mut_with(&cache.pre[i - 1], |g, &z| *g *= act.grad(z));
            delta = d;
        }
        grads.reverse();
        Gradients { layers: grads }
    }

    pub fn param_count(&self) -> usize {
        self.arch.param_count()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ModelDoc::from(self))?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: ModelDoc = serde_json::from_str(s)?;
        doc.into_model()
    }
}

/// Argmax over logits; ties go to the lowest class.
pub fn argmax_rows(logits: &Array2<f64>) -> Vec<usize> {
    logits.rows().into_iter().map(util::argmax).collect()
}

/// Row-wise softmax.
pub fn softmax(logits: &Array2<f64>) -> Array2<f64> {
    let mut p = logits.clone();
    for mut r in p.rows_mut() {
        let m = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        r.mapv_inplace(|v| (v - m).exp());
        let s = r.sum();
        r.mapv_inplace(|v| v / s);
    }
    p
}

/// Mean cross-entropy against target distributions, and its gradient with
/// respect to the logits.
pub fn cross_entropy(logits: &Array2<f64>, targets: &Array2<f64>) -> (f64, Array2<f64>) {
    let n = logits.nrows() as f64;
    let mut loss = 0.0;
    let mut grad = softmax(logits);
    for (i, r) in logits.rows().into_iter().enumerate() {
        let m = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + r.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        for (k, &t) in targets.row(i).iter().enumerate() {
            if t != 0.0 {
                loss -= t * (r[k] - lse);
            }
        }
    }
    grad -= targets;
    grad /= n;
    (loss / n, grad)
}

pub fn one_hot(labels: &[usize], classes: usize) -> Array2<f64> {
    let mut t = Array2::zeros((labels.len(), classes));
    for (i, &k) in labels.iter().enumerate() {
        t[[i, k]] = 1.0;
    }
    t
}

#[derive(Serialize, Deserialize)]
struct ArchDoc {
    d: usize,
    hidden: Vec<HiddenDoc>,
    c: usize,
}

#[derive(Serialize, Deserialize)]
struct HiddenDoc {
    width: usize,
    activation_name: String,
}

#[derive(Serialize, Deserialize)]
struct LayerDoc {
    #[serde(rename = "W")]
    w: Vec<f64>,
    b: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ModelDoc {
    arch: ArchDoc,
    layers: Vec<LayerDoc>,
}

impl From<&DTNetArch> for ArchDoc {
    fn from(a: &DTNetArch) -> Self {
        ArchDoc {
            d: a.input_dim,
            hidden: a
                .hidden
                .iter()
                .map(|h| HiddenDoc {
                    width: h.width,
                    activation_name: h.activation.name().to_string(),
                })
                .collect(),
            c: a.output_dim,
        }
    }
}

impl From<&DTNetModel> for ModelDoc {
    fn from(m: &DTNetModel) -> Self {
        ModelDoc {
            arch: ArchDoc::from(&m.arch),
            layers: m
                .layers
                .iter()
                .map(|l| LayerDoc {
                    w: l.weights.iter().copied().collect(),
                    b: l.bias.to_vec(),
                })
                .collect(),
        }
    }
}

impl ArchDoc {
    fn into_arch(self) -> Result<DTNetArch> {
        let hidden = self
            .hidden
            .into_iter()
            .map(|h| Ok(HiddenLayer::new(h.width, PolyActivation::by_name(&h.activation_name)?)))
            .collect::<Result<Vec<_>>>()?;
        DTNetArch::new(self.d, hidden, self.c)
    }
}

impl ModelDoc {
    fn into_model(self) -> Result<DTNetModel> {
        let arch = self.arch.into_arch()?;
        let shapes = arch.layer_shapes();
        if self.layers.len() != shapes.len() {
            return Err(Error::Shape(format!(
                "{} layers for an arch with {}",
                self.layers.len(),
                shapes.len()
            )));
        }
        let layers = self
            .layers
            .into_iter()
            .zip(&shapes)
            .map(|(l, &(fi, fo))| {
                let weights = Array2::from_shape_vec((fi, fo), l.w)
                    .map_err(|e| Error::Shape(format!("weights for ({fi}, {fo}): {e}")))?;
                Ok(DenseLayer {
                    weights,
                    bias: Array1::from(l.b),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        DTNetModel::from_layers(arch, layers)
    }
}

/// Serializable skeleton in the same shape used inside model files.
pub fn arch_to_json_value(a: &DTNetArch) -> serde_json::Value {
    serde_json::to_value(ArchDoc::from(a)).expect("plain data")
}
