//! Patch layouts: which neurons of the previous layer each filter application sees.

use std::collections::HashSet;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Compact description of a generated layout, kept so that serialized specs stay small.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "builder", rename_all = "snake_case", deny_unknown_fields)]
pub enum LayoutDescriptor {
    /// Sliding window over a 1D signal, valid padding.
    Conv1d {
        len: usize,
        kernel: usize,
        stride: usize,
    },
    /// Sliding window over an `height x width x channels` grid stored position-major,
    /// channel-minor (`(y * width + x) * channels + c`), valid padding.
    ///
    /// With `per_channel = false` every patch spans all channels (convolution);
    /// with `per_channel = true` there is one patch per window and channel (pooling).
    Grid2d {
        height: usize,
        width: usize,
        channels: usize,
        kernel_h: usize,
        kernel_w: usize,
        stride: usize,
        per_channel: bool,
    },
    /// One patch covering the whole layer.
    Whole { len: usize },
}

impl LayoutDescriptor {
    pub fn build(&self) -> Result<PatchLayout> {
        let patches = match *self {
            LayoutDescriptor::Conv1d {
                len,
                kernel,
                stride,
            } => {
                if kernel == 0 || stride == 0 || kernel > len {
                    return Err(Error::structure(format!(
                        "conv1d: kernel {kernel}, stride {stride} invalid for length {len}"
                    )));
                }
                (0..=(len - kernel) / stride)
                    .map(|p| (p * stride..p * stride + kernel).collect())
                    .collect()
            }
            LayoutDescriptor::Grid2d {
                height,
                width,
                channels,
                kernel_h,
                kernel_w,
                stride,
                per_channel,
            } => {
                if kernel_h == 0
                    || kernel_w == 0
                    || stride == 0
                    || channels == 0
                    || kernel_h > height
                    || kernel_w > width
                {
                    return Err(Error::structure(format!(
                        "grid2d: kernel {kernel_h}x{kernel_w} stride {stride} invalid for \
                         {height}x{width}x{channels}"
                    )));
                }
                let out_h = (height - kernel_h) / stride + 1;
                let out_w = (width - kernel_w) / stride + 1;
                let idx = |y: usize, x: usize, c: usize| (y * width + x) * channels + c;
                let mut patches = Vec::new();
                for oy in 0..out_h {
                    for ox in 0..out_w {
                        let (y0, x0) = (oy * stride, ox * stride);
                        if per_channel {
                            for c in 0..channels {
                                let mut patch = Vec::with_capacity(kernel_h * kernel_w);
                                for ky in 0..kernel_h {
                                    for kx in 0..kernel_w {
                                        patch.push(idx(y0 + ky, x0 + kx, c));
                                    }
                                }
                                patches.push(patch);
                            }
                        } else {
                            let mut patch = Vec::with_capacity(kernel_h * kernel_w * channels);
                            for ky in 0..kernel_h {
                                for kx in 0..kernel_w {
                                    for c in 0..channels {
                                        patch.push(idx(y0 + ky, x0 + kx, c));
                                    }
                                }
                            }
                            patches.push(patch);
                        }
                    }
                }
                patches
            }
            LayoutDescriptor::Whole { len } => vec![(0..len).collect()],
        };
        let in_width = self.in_width();
        PatchLayout::validated(patches, in_width, Some(self.clone()))
    }

    pub fn in_width(&self) -> usize {
        match *self {
            LayoutDescriptor::Conv1d { len, .. } => len,
            LayoutDescriptor::Grid2d {
                height,
                width,
                channels,
                ..
            } => height * width * channels,
            LayoutDescriptor::Whole { len } => len,
        }
    }
}

/// An ordered list of equally sized, pairwise distinct index sets that together
/// cover `0..in_width`.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchLayout {
    patches: Vec<Vec<usize>>,
    in_width: usize,
    origin: Option<LayoutDescriptor>,
}

impl PatchLayout {
    /// Validate an explicit layout.
    pub fn new(patches: Vec<Vec<usize>>, in_width: usize) -> Result<Self> {
        Self::validated(patches, in_width, None)
    }

    pub fn conv1d(len: usize, kernel: usize, stride: usize) -> Result<Self> {
        LayoutDescriptor::Conv1d {
            len,
            kernel,
            stride,
        }
        .build()
    }

    /// Convolution windows spanning all channels.
    pub fn conv2d(
        height: usize,
        width: usize,
        channels: usize,
        kernel: usize,
        stride: usize,
    ) -> Result<Self> {
        LayoutDescriptor::Grid2d {
            height,
            width,
            channels,
            kernel_h: kernel,
            kernel_w: kernel,
            stride,
            per_channel: false,
        }
        .build()
    }

    /// Per-channel pooling windows.
    pub fn pool2d(
        height: usize,
        width: usize,
        channels: usize,
        kernel: usize,
        stride: usize,
    ) -> Result<Self> {
        LayoutDescriptor::Grid2d {
            height,
            width,
            channels,
            kernel_h: kernel,
            kernel_w: kernel,
            stride,
            per_channel: true,
        }
        .build()
    }

    pub fn whole(len: usize) -> Result<Self> {
        LayoutDescriptor::Whole { len }.build()
    }

    fn validated(
        patches: Vec<Vec<usize>>,
        in_width: usize,
        origin: Option<LayoutDescriptor>,
    ) -> Result<Self> {
        if in_width == 0 || patches.is_empty() {
            return Err(Error::structure("layout must have at least one patch over a non-empty layer"));
        }
        let len = patches[0].len();
        if len == 0 {
            return Err(Error::structure("patches must be non-empty"));
        }
        let mut covered = vec![false; in_width];
        let mut seen: HashSet<Vec<usize>> = HashSet::with_capacity(patches.len());
        for (p, patch) in patches.iter().enumerate() {
            if patch.len() != len {
                return Err(Error::structure(format!(
                    "patch {p} has length {} but patch 0 has length {len}",
                    patch.len()
                )));
            }
            let mut sorted = patch.clone();
            sorted.sort_unstable();
            if sorted.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::structure(format!("patch {p} repeats an index")));
            }
            if let Some(&bad) = sorted.last().filter(|&&i| i >= in_width) {
                return Err(Error::structure(format!(
                    "patch {p} references neuron {bad} >= width {in_width}"
                )));
            }
            for &i in &sorted {
                covered[i] = true;
            }
            if !seen.insert(sorted) {
                return Err(Error::structure(format!(
                    "patch {p} has the same index set as an earlier patch"
                )));
            }
        }
        if let Some(miss) = covered.iter().position(|c| !c) {
            return Err(Error::structure(format!("neuron {miss} belongs to no patch")));
        }
        Ok(PatchLayout {
            patches,
            in_width,
            origin,
        })
    }

    pub fn patches(&self) -> &[Vec<usize>] {
        &self.patches
    }

    pub fn patch(&self, p: usize) -> &[usize] {
        &self.patches[p]
    }

    pub fn num_patches(&self) -> usize {
        self.patches.len()
    }

    pub fn patch_len(&self) -> usize {
        self.patches[0].len()
    }

    pub fn in_width(&self) -> usize {
        self.in_width
    }

    pub fn origin(&self) -> Option<&LayoutDescriptor> {
        self.origin.as_ref()
    }

    /// True if this layout is the single whole-layer patch in natural order.
    pub fn is_whole(&self) -> bool {
        self.patches.len() == 1 && self.patches[0].iter().enumerate().all(|(i, &v)| i == v)
    }

    /// The full `in_width x (P * T)` matrix whose column `p * T + t` carries filter `t`
    /// at the positions of patch `p`.
    pub fn lift(&self, filters: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_filters(filters)?;
        let t_count = filters.ncols();
        let mut u = DMatrix::zeros(self.in_width, self.num_patches() * t_count);
        for (p, patch) in self.patches.iter().enumerate() {
            for t in 0..t_count {
                let col = p * t_count + t;
                for (r, &idx) in patch.iter().enumerate() {
                    u[(idx, col)] = filters[(r, t)];
                }
            }
        }
        Ok(u)
    }

    /// Adjoint of [`PatchLayout::lift`] under the Frobenius inner product: sums the entries
    /// of `v` over every placement of each filter coordinate.
    pub fn adjoint(&self, v: &DMatrix<f64>, filters: usize) -> Result<DMatrix<f64>> {
        if filters == 0 || v.nrows() != self.in_width || v.ncols() != self.num_patches() * filters {
            return Err(Error::structure(format!(
                "adjoint: expected {}x{} matrix, got {}x{}",
                self.in_width,
                self.num_patches() * filters,
                v.nrows(),
                v.ncols()
            )));
        }
        let mut w = DMatrix::zeros(self.patch_len(), filters);
        for (p, patch) in self.patches.iter().enumerate() {
            for t in 0..filters {
                let col = p * filters + t;
                for (r, &idx) in patch.iter().enumerate() {
                    w[(r, t)] += v[(idx, col)];
                }
            }
        }
        Ok(w)
    }

    fn check_filters(&self, filters: &DMatrix<f64>) -> Result<()> {
        if filters.nrows() != self.patch_len() || filters.ncols() == 0 {
            return Err(Error::structure(format!(
                "filter matrix is {}x{}, patch length is {}",
                filters.nrows(),
                filters.ncols(),
                self.patch_len()
            )));
        }
        Ok(())
    }
}
