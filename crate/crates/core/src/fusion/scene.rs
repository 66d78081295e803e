//! Deterministic scene feature extraction and channel-wise fusion.

use ndarray::{s, Array2, Array3, Axis};

use super::heatmap::{GazeHeatmap, GRID};
use crate::error::{Error, Result};
use crate::trace::SceneFrame;

/// Channels produced by [`ReferenceExtractor`].
pub const SCENE_CHANNELS: usize = 24;

/// Scene features laid out `[channel, row, column]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneFeatures {
    pub grid: Array3<f64>,
}

impl SceneFeatures {
    pub fn channels(&self) -> usize {
        self.grid.len_of(Axis(0))
    }

    /// Mean over channels at every cell.
    pub fn channel_mean(&self) -> Array2<f64> {
        self.grid.mean_axis(Axis(0)).expect("scene features have channels")
    }
}

/// Anything that turns a frame into a `[C, grid, grid]` feature stack.
pub trait SceneExtractor {
    fn channels(&self) -> usize;
    fn extract(&self, frame: &SceneFrame) -> Result<SceneFeatures>;
}

/// Hand-built extractor: the frame is resampled to `4 * grid` square,
/// box-averaged down to `grid`, then expanded into 8 blurred intensity
/// channels (radius 0..7), 8 absolute gradient channels (horizontal and
/// vertical on the four sharpest intensity channels) and 8 local standard
/// deviation channels (radius 1..8).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReferenceExtractor {
    pub grid: usize,
}

impl Default for ReferenceExtractor {
    fn default() -> Self {
        ReferenceExtractor { grid: GRID }
    }
}

/// Features from the default extractor.
pub fn scene_features(frame: &SceneFrame) -> Result<SceneFeatures> {
    ReferenceExtractor::default().extract(frame)
}

fn luma_plane(frame: &SceneFrame) -> Result<Array2<f64>> {
    let (w, h) = (frame.width as usize, frame.height as usize);
    if w == 0 || h == 0 || frame.luma.len() != w * h {
        return Err(Error::Parameter(format!(
            "degenerate frame {}x{} with {} luma values",
            frame.width,
            frame.height,
            frame.luma.len()
        )));
    }
    Ok(Array2::from_shape_fn((h, w), |(r, c)| f64::from(frame.luma[r * w + c])))
}

/// Bilinear resampling with pixel-centre alignment and clamped borders.
pub fn resample_bilinear(src: &Array2<f64>, rows: usize, cols: usize) -> Array2<f64> {
    let (h, w) = src.dim();
    let coord = |i: usize, n_out: usize, n_in: usize| {
        let x = ((i as f64 + 0.5) * n_in as f64 / n_out as f64 - 0.5).clamp(0.0, (n_in - 1) as f64);
        let lo = x.floor() as usize;
        let hi = (lo + 1).min(n_in - 1);
        (lo, hi, x - lo as f64)
    };
    let xs: Vec<_> = (0..cols).map(|c| coord(c, cols, w)).collect();
    Array2::from_shape_fn((rows, cols), |(r, c)| {
        let (r0, r1, fy) = coord(r, rows, h);
        let (c0, c1, fx) = xs[c];
        let top = src[[r0, c0]] * (1.0 - fx) + src[[r0, c1]] * fx;
        let bottom = src[[r1, c0]] * (1.0 - fx) + src[[r1, c1]] * fx;
        top * (1.0 - fy) + bottom * fy
    })
}

/// Averages non-overlapping `factor x factor` blocks.
fn box_downsample(src: &Array2<f64>, factor: usize) -> Array2<f64> {
    let (h, w) = src.dim();
    let area = (factor * factor) as f64;
    Array2::from_shape_fn((h / factor, w / factor), |(r, c)| {
        src.slice(s![r * factor..(r + 1) * factor, c * factor..(c + 1) * factor])
            .sum()
            / area
    })
}

/// Mean over the in-bounds part of a `(2r+1)` line, along one axis.
fn blur_line(src: &Array2<f64>, radius: usize, axis: Axis) -> Array2<f64> {
    let mut out = Array2::zeros(src.dim());
    for (line_in, mut line_out) in src.lanes(axis).into_iter().zip(out.lanes_mut(axis)) {
        let n = line_in.len();
        let mut prefix = Vec::with_capacity(n + 1);
        prefix.push(0.0);
        for &v in line_in {
            prefix.push(prefix.last().unwrap() + v);
        }
        for i in 0..n {
            let lo = i.saturating_sub(radius);
            let hi = (i + radius + 1).min(n);
            line_out[i] = (prefix[hi] - prefix[lo]) / (hi - lo) as f64;
        }
    }
    out
}

/// Separable box blur: mean over the in-bounds `(2r+1)^2` square.
pub fn box_blur(src: &Array2<f64>, radius: usize) -> Array2<f64> {
    if radius == 0 {
        return src.clone();
    }
    blur_line(&blur_line(src, radius, Axis(1)), radius, Axis(0))
}

/// `|I[x+1] - I[x-1]| / 2` with indices clamped to the grid.
pub fn abs_central_difference(src: &Array2<f64>, axis: Axis) -> Array2<f64> {
    let (h, w) = src.dim();
    Array2::from_shape_fn((h, w), |(r, c)| {
        let (a, b) = if axis == Axis(1) {
            (src[[r, c.saturating_sub(1)]], src[[r, (c + 1).min(w - 1)]])
        } else {
            (src[[r.saturating_sub(1), c]], src[[(r + 1).min(h - 1), c]])
        };
        (b - a).abs() / 2.0
    })
}

/// Standard deviation over the `(2r+1)^2` square, clipped to the grid.
pub fn local_std(src: &Array2<f64>, radius: usize) -> Array2<f64> {
    let mean = box_blur(src, radius);
    let mean_sq = box_blur(&src.mapv(|v| v * v), radius);
    ndarray::Zip::from(&mean_sq)
        .and(&mean)
        .map_collect(|&sq, &m| (sq - m * m).max(0.0).sqrt())
}

impl SceneExtractor for ReferenceExtractor {
    fn channels(&self) -> usize {
        SCENE_CHANNELS
    }

    fn extract(&self, frame: &SceneFrame) -> Result<SceneFeatures> {
        let luma = luma_plane(frame)?;
        let g = self.grid;
        let base = box_downsample(&resample_bilinear(&luma, 4 * g, 4 * g), 4);
        let mut grid = Array3::zeros((SCENE_CHANNELS, g, g));
        let intensity: Vec<Array2<f64>> = (0..8).map(|r| box_blur(&base, r)).collect();
        for (k, plane) in intensity.iter().enumerate() {
            grid.index_axis_mut(Axis(0), k).assign(plane);
        }
        for k in 0..4 {
            grid.index_axis_mut(Axis(0), 8 + 2 * k)
                .assign(&abs_central_difference(&intensity[k], Axis(1)));
            grid.index_axis_mut(Axis(0), 9 + 2 * k)
                .assign(&abs_central_difference(&intensity[k], Axis(0)));
        }
        for k in 0..8 {
            grid.index_axis_mut(Axis(0), 16 + k).assign(&local_std(&base, k + 1));
        }
        if grid.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric { layer: "scene" });
        }
        Ok(SceneFeatures { grid })
    }
}

/// Fused input `[C_s scene | N heatmaps | N heatmap x scene channel-mean]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedTensor {
    pub data: Array3<f64>,
}

impl FusedTensor {
    pub fn channels(&self) -> usize {
        self.data.len_of(Axis(0))
    }
}

pub fn fuse(scene: &SceneFeatures, stack: &[GazeHeatmap]) -> Result<FusedTensor> {
    let (cs, h, w) = scene.grid.dim();
    if cs == 0 {
        return Err(Error::Parameter("scene features have no channels".into()));
    }
    if let Some(bad) = stack.iter().find(|hm| hm.grid.dim() != (h, w)) {
        return Err(Error::Parameter(format!(
            "heatmap grid {:?} does not match scene grid {:?}",
            bad.grid.dim(),
            (h, w)
        )));
    }
    let n = stack.len();
    let mean = scene.channel_mean();
    let mut data = Array3::zeros((cs + 2 * n, h, w));
    data.slice_mut(s![..cs, .., ..]).assign(&scene.grid);
    for (k, hm) in stack.iter().enumerate() {
        data.index_axis_mut(Axis(0), cs + k).assign(&hm.grid);
        data.index_axis_mut(Axis(0), cs + n + k).assign(&(&hm.grid * &mean));
    }
    Ok(FusedTensor { data })
}
