//! Pixel grids and sampled signals.
//!
//! Positions are always physical coordinates; pixel indices only appear at
//! the I/O boundary. Grids are uniform, 1-D or 2-D, stored row-major with
//! the x index running fastest.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point in physical coordinates. 1-D data uses the x component only and
/// keeps y at zero.
pub type Point = [f64; 2];

pub fn dist_sq(a: Point, b: Point) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    dx * dx + dy * dy
}

pub fn dist(a: Point, b: Point) -> f64 {
    dist_sq(a, b).sqrt()
}

/// Uniform pixel grid in 1 or 2 dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PixelGrid {
    dim: u8,
    /// Pixels per axis, `[nx, ny]`; `ny == 1` for 1-D grids.
    extents: [usize; 2],
    /// Physical length per pixel per axis.
    pitch: [f64; 2],
    /// Physical coordinate of the pixel with index 0 on each axis.
    origin: [f64; 2],
}

impl PixelGrid {
    pub fn new_1d(n: usize, pitch: f64, origin: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidGrid("extent must be >= 1".into()));
        }
        if !(pitch > 0.0) {
            return Err(Error::InvalidGrid(format!("pitch must be > 0, got {pitch}")));
        }
        Ok(Self {
            dim: 1,
            extents: [n, 1],
            pitch: [pitch, 1.0],
            origin: [origin, 0.0],
        })
    }

    pub fn new_2d(nx: usize, ny: usize, pitch: [f64; 2], origin: [f64; 2]) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::InvalidGrid("extents must be >= 1".into()));
        }
        if !(pitch[0] > 0.0 && pitch[1] > 0.0) {
            return Err(Error::InvalidGrid(format!("pitch must be > 0, got {pitch:?}")));
        }
        Ok(Self {
            dim: 2,
            extents: [nx, ny],
            pitch,
            origin,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    pub fn extents(&self) -> [usize; 2] {
        self.extents
    }

    pub fn pitch(&self) -> [f64; 2] {
        self.pitch
    }

    pub fn origin(&self) -> [f64; 2] {
        self.origin
    }

    /// Total number of pixels.
    pub fn len(&self) -> usize {
        self.extents[0] * self.extents[1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Linear index of pixel `(ix, iy)`; x runs fastest.
    pub fn index_of(&self, ix: usize, iy: usize) -> usize {
        iy * self.extents[0] + ix
    }

    /// Pixel indices of linear index `i`.
    pub fn pixel_of(&self, i: usize) -> (usize, usize) {
        (i % self.extents[0], i / self.extents[0])
    }

    /// Physical coordinate of the center of pixel `(ix, iy)`.
    pub fn coord(&self, ix: usize, iy: usize) -> Point {
        [
            self.origin[0] + ix as f64 * self.pitch[0],
            if self.dim == 1 {
                0.0
            } else {
                self.origin[1] + iy as f64 * self.pitch[1]
            },
        ]
    }

    /// Physical coordinate of the center of the pixel with linear index `i`.
    pub fn coord_of(&self, i: usize) -> Point {
        let (ix, iy) = self.pixel_of(i);
        self.coord(ix, iy)
    }

    /// Center pixel (used as the reference center for IRF sampling).
    pub fn center_pixel(&self) -> (usize, usize) {
        (self.extents[0] / 2, self.extents[1] / 2)
    }

    pub fn center_coord(&self) -> Point {
        let (cx, cy) = self.center_pixel();
        self.coord(cx, cy)
    }

    /// Pixel indices of the grid pixel nearest to `p`, clamped to the grid.
    pub fn nearest_pixel(&self, p: Point) -> (usize, usize) {
        let fx = (p[0] - self.origin[0]) / self.pitch[0];
        let ix = fx.round().clamp(0.0, (self.extents[0] - 1) as f64) as usize;
        let iy = if self.dim == 1 {
            0
        } else {
            let fy = (p[1] - self.origin[1]) / self.pitch[1];
            fy.round().clamp(0.0, (self.extents[1] - 1) as f64) as usize
        };
        (ix, iy)
    }

    /// Iterator over all pixel-center coordinates in linear order.
    pub fn centers(&self) -> impl Iterator<Item = Point> + '_ {
        (0..self.len()).map(move |i| self.coord_of(i))
    }
}

/// A measured or synthetic signal sampled on a pixel grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledSignal {
    pub grid: PixelGrid,
    pub values: Vec<f64>,
    pub label: String,
}

impl SampledSignal {
    pub fn new(grid: PixelGrid, values: Vec<f64>, label: impl Into<String>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidGrid(format!(
                "value count {} does not match grid size {}",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self {
            grid,
            values,
            label: label.into(),
        })
    }

    pub fn zeros(grid: PixelGrid, label: impl Into<String>) -> Self {
        let values = vec![0.0; grid.len()];
        Self {
            grid,
            values,
            label: label.into(),
        }
    }

    /// Sum of all pixel values.
    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.values.len() as f64
    }

    pub fn norm_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Linear index of the maximum value; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, v) in self.values.iter().enumerate() {
            if *v > self.values[best] {
                best = i;
            }
        }
        best
    }

    /// The mean-subtracted signal used when an unknown constant background
    /// is present.
    pub fn mean_subtracted(&self) -> SampledSignal {
        let mu = self.mean();
        let values = self.values.iter().map(|v| v - mu).collect();
        SampledSignal {
            grid: self.grid.clone(),
            values,
            label: format!("{}_dev", self.label),
        }
    }
}

/// Sum of all pixel values of a signal.
pub fn signal_sum(sig: &SampledSignal) -> f64 {
    sig.sum()
}
