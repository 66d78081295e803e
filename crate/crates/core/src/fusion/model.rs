//! The fusion head: one 3x3 convolution, rectifier, global average pooling,
//! then an affine map over the pooled vector and the likelihood history.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2, Array4, Axis};
use serde::{Deserialize, Serialize};

use super::scene::FusedTensor;
use crate::error::{Error, Result};

pub const CONV_CHANNELS: usize = 56;
pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDims {
    pub grid: usize,
    pub in_channels: usize,
    pub conv_channels: usize,
    pub history: usize,
}

impl ModelDims {
    /// 24 scene channels plus two per history step on the 56 grid.
    pub fn standard(history: usize) -> Self {
        ModelDims {
            grid: super::heatmap::GRID,
            in_channels: super::scene::SCENE_CHANNELS + 2 * history,
            conv_channels: CONV_CHANNELS,
            history,
        }
    }

    pub fn head_inputs(&self) -> usize {
        self.conv_channels + self.history
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionModel {
    pub dims: ModelDims,
    /// `[out, in, 3, 3]`
    pub conv_kernel: Array4<f64>,
    pub conv_bias: Array1<f64>,
    /// `[2, conv_channels + history]`
    pub head_weight: Array2<f64>,
    pub head_bias: Array1<f64>,
    /// Per input channel: `x' = (x - mean) * scale` before the convolution.
    pub input_mean: Array1<f64>,
    pub input_scale: Array1<f64>,
}

/// Intermediate values kept for the backward pass.
#[derive(Debug, Clone)]
pub struct Forward {
    /// `[in * 9, grid * grid]`
    pub cols: Array2<f64>,
    /// `[out, grid * grid]`, before the rectifier
    pub pre: Array2<f64>,
    /// pooled activations followed by the likelihoods
    pub head_in: Array1<f64>,
    pub logits: [f64; 2],
    pub probs: [f64; 2],
}

/// Numerically stable two-class softmax.
pub fn softmax2(logits: [f64; 2]) -> [f64; 2] {
    let m = logits[0].max(logits[1]);
    let e0 = (logits[0] - m).exp();
    let e1 = (logits[1] - m).exp();
    let z = e0 + e1;
    [e0 / z, e1 / z]
}

fn check_finite<'a>(values: impl IntoIterator<Item = &'a f64>, layer: &'static str) -> Result<()> {
    if values.into_iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numeric { layer })
    }
}

impl FusionModel {
    /// All weights zero, identity input transform.
    pub fn zeros(dims: ModelDims) -> Self {
        FusionModel {
            dims,
            conv_kernel: Array4::zeros((dims.conv_channels, dims.in_channels, 3, 3)),
            conv_bias: Array1::zeros(dims.conv_channels),
            head_weight: Array2::zeros((2, dims.head_inputs())),
            head_bias: Array1::zeros(2),
            input_mean: Array1::zeros(dims.in_channels),
            input_scale: Array1::ones(dims.in_channels),
        }
    }

    fn check_input(&self, fused: &FusedTensor, likelihoods: &[f64]) -> Result<()> {
        let d = self.dims;
        if fused.data.dim() != (d.in_channels, d.grid, d.grid) {
            return Err(Error::Parameter(format!(
                "fused tensor shape {:?} does not match model input {:?}",
                fused.data.dim(),
                (d.in_channels, d.grid, d.grid)
            )));
        }
        if likelihoods.len() != d.history {
            return Err(Error::Parameter(format!(
                "{} likelihoods for a model with history {}",
                likelihoods.len(),
                d.history
            )));
        }
        Ok(())
    }

    /// Standardized input unrolled into 3x3 patches with zero padding.
    pub fn im2col(&self, fused: &FusedTensor) -> Array2<f64> {
        let g = self.dims.grid;
        let cin = self.dims.in_channels;
        let mut cols = Array2::zeros((cin * 9, g * g));
        for c in 0..cin {
            let (mean, scale) = (self.input_mean[c], self.input_scale[c]);
            let plane = fused.data.index_axis(Axis(0), c);
            for ky in 0..3 {
                for kx in 0..3 {
                    let mut row = cols.row_mut(c * 9 + ky * 3 + kx);
                    let row = row.as_slice_mut().expect("contiguous im2col row");
                    for y in 0..g {
                        let sy = y + ky;
                        if sy < 1 || sy > g {
                            continue;
                        }
                        for x in 0..g {
                            let sx = x + kx;
                            if sx < 1 || sx > g {
                                continue;
                            }
                            row[y * g + x] = (plane[[sy - 1, sx - 1]] - mean) * scale;
                        }
                    }
                }
            }
        }
        cols
    }

    pub fn kernel_matrix(&self) -> Array2<f64> {
        let d = self.dims;
        self.conv_kernel
            .to_shape((d.conv_channels, d.in_channels * 9))
            .expect("kernel reshapes to a matrix")
            .to_owned()
    }

    /// Runs the head on precomputed patches.
    pub fn forward_cols(&self, cols: Array2<f64>, likelihoods: &[f64]) -> Result<Forward> {
        let d = self.dims;
        let mut pre = self.kernel_matrix().dot(&cols);
        pre += &self.conv_bias.view().insert_axis(Axis(1));
        check_finite(pre.iter(), "conv")?;
        let hw = (d.grid * d.grid) as f64;
        let mut head_in = Array1::zeros(d.head_inputs());
        for (o, row) in pre.outer_iter().enumerate() {
            head_in[o] = row.iter().map(|&v| v.max(0.0)).sum::<f64>() / hw;
        }
        for (k, &l) in likelihoods.iter().enumerate() {
            head_in[d.conv_channels + k] = l;
        }
        check_finite(head_in.iter(), "pool")?;
        let z = self.head_weight.dot(&head_in) + &self.head_bias;
        let logits = [z[0], z[1]];
        check_finite(logits.iter(), "head")?;
        let probs = softmax2(logits);
        check_finite(probs.iter(), "softmax")?;
        Ok(Forward {
            cols,
            pre,
            head_in,
            logits,
            probs,
        })
    }

    pub fn forward(&self, fused: &FusedTensor, likelihoods: &[f64]) -> Result<Forward> {
        self.check_input(fused, likelihoods)?;
        self.forward_cols(self.im2col(fused), likelihoods)
    }

    /// Probability of the attention class.
    pub fn score(&self, fused: &FusedTensor, likelihoods: &[f64]) -> Result<f64> {
        Ok(self.forward(fused, likelihoods)?.probs[1])
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, |w| self.write_json(w))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::file(path, e))?;
        Self::read_json(std::io::BufReader::new(file))
    }

    pub fn write_json(&self, sink: &mut dyn Write) -> Result<()> {
        let file = ModelFile::from(self);
        serde_json::to_writer(&mut *sink, &file)
            .map_err(|e| Error::Config(format!("cannot serialize model: {e}")))?;
        sink.write_all(b"\n")
            .map_err(|e| Error::Config(format!("cannot write model: {e}")))
    }

    pub fn read_json<R: Read>(source: R) -> Result<Self> {
        let file: ModelFile = serde_json::from_reader(source)
            .map_err(|e| Error::Config(format!("malformed model file: {e}")))?;
        file.into_model()
    }
}

/// The attention verdict for one gate invocation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DecisionStage {
    GateRejected,
    FusionRejected,
    Accepted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttentionDecision {
    pub t: f64,
    pub a_t: bool,
    pub score: f64,
    pub stage: DecisionStage,
}

impl AttentionDecision {
    /// Accepts iff `score > threshold`; ties reject.
    pub fn from_score(t: f64, score: f64, threshold: f64) -> Self {
        let a_t = score > threshold;
        AttentionDecision {
            t,
            a_t,
            score,
            stage: if a_t {
                DecisionStage::Accepted
            } else {
                DecisionStage::FusionRejected
            },
        }
    }
}

pub fn classify_attention(
    t: f64,
    fused: &FusedTensor,
    likelihoods: &[f64],
    model: &FusionModel,
    threshold: f64,
) -> Result<AttentionDecision> {
    let score = model.score(fused, likelihoods)?;
    Ok(AttentionDecision::from_score(t, score, threshold))
}

/// On-disk layout: a dims header and named row-major tensors. Numbers are
/// JSON decimals, so byte order does not arise.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    format: String,
    dims: ModelDims,
    tensors: BTreeMap<String, TensorFile>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorFile {
    shape: Vec<usize>,
    data: Vec<f64>,
}

const FORMAT: &str = "gazegate-fusion-head/1";

fn tensor<'a, I: IntoIterator<Item = &'a f64>>(shape: &[usize], values: I) -> TensorFile {
    TensorFile {
        shape: shape.to_vec(),
        data: values.into_iter().copied().collect(),
    }
}

impl From<&FusionModel> for ModelFile {
    fn from(m: &FusionModel) -> Self {
        let mut tensors = BTreeMap::new();
        tensors.insert("conv.kernel".into(), tensor(m.conv_kernel.shape(), m.conv_kernel.iter()));
        tensors.insert("conv.bias".into(), tensor(m.conv_bias.shape(), m.conv_bias.iter()));
        tensors.insert("head.weight".into(), tensor(m.head_weight.shape(), m.head_weight.iter()));
        tensors.insert("head.bias".into(), tensor(m.head_bias.shape(), m.head_bias.iter()));
        tensors.insert("input.mean".into(), tensor(m.input_mean.shape(), m.input_mean.iter()));
        tensors.insert("input.scale".into(), tensor(m.input_scale.shape(), m.input_scale.iter()));
        ModelFile {
            format: FORMAT.into(),
            dims: m.dims,
            tensors,
        }
    }
}

impl ModelFile {
    fn take(&mut self, name: &str, shape: &[usize]) -> Result<Vec<f64>> {
        let t = self
            .tensors
            .remove(name)
            .ok_or_else(|| Error::Config(format!("model file lacks tensor `{name}`")))?;
        if t.shape != shape || t.data.len() != shape.iter().product::<usize>() {
            return Err(Error::Config(format!(
                "tensor `{name}` has shape {:?} with {} values, expected {shape:?}",
                t.shape,
                t.data.len()
            )));
        }
        check_finite(t.data.iter(), "weights")?;
        Ok(t.data)
    }

    fn into_model(mut self) -> Result<FusionModel> {
        if self.format != FORMAT {
            return Err(Error::Config(format!("unsupported model format `{}`", self.format)));
        }
        let d = self.dims;
        if d.grid == 0 || d.in_channels == 0 || d.conv_channels == 0 {
            return Err(Error::Config(format!("degenerate model dims {d:?}")));
        }
        let shape = |dims: &[usize]| dims.to_vec();
        let k = shape(&[d.conv_channels, d.in_channels, 3, 3]);
        let model = FusionModel {
            dims: d,
            conv_kernel: Array4::from_shape_vec(
                (d.conv_channels, d.in_channels, 3, 3),
                self.take("conv.kernel", &k)?,
            )
            .expect("shape checked"),
            conv_bias: Array1::from(self.take("conv.bias", &[d.conv_channels])?),
            head_weight: Array2::from_shape_vec(
                (2, d.head_inputs()),
                self.take("head.weight", &[2, d.head_inputs()])?,
            )
            .expect("shape checked"),
            head_bias: Array1::from(self.take("head.bias", &[2])?),
            input_mean: Array1::from(self.take("input.mean", &[d.in_channels])?),
            input_scale: Array1::from(self.take("input.scale", &[d.in_channels])?),
        };
        if let Some(extra) = self.tensors.keys().next() {
            return Err(Error::Config(format!("unexpected tensor `{extra}` in model file")));
        }
        Ok(model)
    }
}
