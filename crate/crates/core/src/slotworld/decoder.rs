//! Frozen analytic decoder: every latent decodes to an axis-aligned
//! Gaussian blob mask and a flat-colored reconstruction.
//!
//! Latent layout (`d >= 7`):
//!
//! | dims    | meaning                              |
//! |---------|--------------------------------------|
//! | 0, 1    | center x, y (pre-sigmoid)            |
//! | 2, 3    | log scale x, y (clamped)             |
//! | 4..7    | color r, g, b (pre-sigmoid)          |
//! | 7..d    | appearance code, ignored by decoding |

use serde::{Deserialize, Serialize};

use crate::diffcore::{sigmoid, CustomOp, Graph, Tensor, Var};
use crate::error::{Error, Result};
use crate::geometry::Mask;

pub const CX: usize = 0;
pub const CY: usize = 1;
pub const LOG_SX: usize = 2;
pub const LOG_SY: usize = 3;
pub const COLOR: usize = 4;
pub const APPEARANCE: usize = 7;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecoderSpec {
    pub height: usize,
    pub width: usize,
    pub dim: usize,
    pub log_scale_min: f64,
    pub log_scale_max: f64,
}

impl Default for DecoderSpec {
    fn default() -> Self {
        Self {
            height: 32,
            width: 32,
            dim: 32,
            log_scale_min: -6.0,
            log_scale_max: 0.0,
        }
    }
}

/// Blob parameters read off a latent.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlobParams {
    pub cx: f64,
    pub cy: f64,
    pub sx: f64,
    pub sy: f64,
}

pub struct Decoded {
    /// `K × (H·W)`, values in (0, 1].
    pub mask: Var,
    /// `K × (3·H·W)`, channel-major.
    pub recon: Var,
}

impl DecoderSpec {
    pub fn validate(&self) -> Result<()> {
        if self.dim < APPEARANCE {
            return Err(Error::Config(format!("latent dim {} < {APPEARANCE}", self.dim)));
        }
        if self.height == 0 || self.width == 0 {
            return Err(Error::Config("empty decoder grid".into()));
        }
        if !(self.log_scale_min < self.log_scale_max) {
            return Err(Error::Config("log-scale clamp range is empty".into()));
        }
        Ok(())
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    fn clamp_log(&self, v: f64) -> (f64, bool) {
        let c = v.clamp(self.log_scale_min, self.log_scale_max);
        (c, v > self.log_scale_min && v < self.log_scale_max)
    }

    pub fn blob(&self, z: &[f64]) -> BlobParams {
        BlobParams {
            cx: sigmoid(z[CX]),
            cy: sigmoid(z[CY]),
            sx: self.clamp_log(z[LOG_SX]).0.exp(),
            sy: self.clamp_log(z[LOG_SY]).0.exp(),
        }
    }

    /// Pixel-center coordinates in scene units.
    pub fn pixel_center(&self, row: usize, col: usize) -> (f64, f64) {
        (
            (col as f64 + 0.5) / self.width as f64,
            (row as f64 + 0.5) / self.height as f64,
        )
    }

    fn mask_into(&self, z: &[f64], out: &mut [f64]) {
        let b = self.blob(z);
        for row in 0..self.height {
            for col in 0..self.width {
                let (x, y) = self.pixel_center(row, col);
                let u = (x - b.cx) / b.sx;
                let v = (y - b.cy) / b.sy;
                out[row * self.width + col] = (-0.5 * (u * u + v * v)).exp();
            }
        }
    }

    /// Soft mask of one latent, row-major `H·W`.
    pub fn mask(&self, z: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.pixels()];
        self.mask_into(z, &mut out);
        out
    }

    /// Reconstruction of one latent, channel-major `3·H·W`.
    pub fn recon(&self, z: &[f64]) -> Vec<f64> {
        let mask = self.mask(z);
        let mut out = Vec::with_capacity(3 * mask.len());
        for c in 0..3 {
            let col = sigmoid(z[COLOR + c]);
            out.extend(mask.iter().map(|m| m * col));
        }
        out
    }

    /// Binarized mask at `threshold`.
    pub fn binary_mask(&self, z: &[f64], threshold: f64) -> Mask {
        Mask::from_soft(self.height, self.width, &self.mask(z), threshold)
    }

    /// Mean soft-mask value over the grid.
    pub fn mask_mass(&self, z: &[f64]) -> f64 {
        self.mask(z).iter().sum::<f64>() / self.pixels() as f64
    }

    /// Differentiable decode of each row of `z` (`K × d`).
    pub fn decode(&self, g: &mut Graph, z: Var) -> Result<Decoded> {
        let tz = g.value(z);
        if tz.cols() != self.dim {
            return Err(Error::Shape(format!(
                "decoder expects width {}, got {:?}",
                self.dim,
                tz.shape()
            )));
        }
        let k = tz.rows();
        let p = self.pixels();
        let mut data = vec![0.0; k * p];
        for i in 0..k {
            self.mask_into(tz.row(i), &mut data[i * p..(i + 1) * p]);
        }
        let value = Tensor::new(&[k, p], data)?;
        let mask = g.custom(vec![z], value, Box::new(BlobOp { spec: self.clone() }));
        let color = g.slice_cols(z, COLOR, 3)?;
        let color = g.sigmoid(color);
        let mut planes = Vec::with_capacity(3);
        for c in 0..3 {
            let ch = g.slice_cols(color, c, 1)?;
            planes.push(g.mul_col(mask, ch)?);
        }
        let recon = g.concat_cols(&planes)?;
        Ok(Decoded { mask, recon })
    }
}

struct BlobOp {
    spec: DecoderSpec,
}

impl CustomOp for BlobOp {
    fn backward(&self, inputs: &[&Tensor], output: &Tensor, grad: &Tensor) -> Vec<Option<Tensor>> {
        let z = inputs[0];
        let (k, d) = (z.rows(), z.cols());
        let s = &self.spec;
        let p = s.pixels();
        let mut dz = vec![0.0; k * d];
        for i in 0..k {
            let zi = z.row(i);
            let b = s.blob(zi);
            let (_, live_x) = s.clamp_log(zi[LOG_SX]);
            let (_, live_y) = s.clamp_log(zi[LOG_SY]);
            let (mut dcx, mut dcy, mut dsx, mut dsy) = (0.0, 0.0, 0.0, 0.0);
            let m = &output.data()[i * p..(i + 1) * p];
            let gr = &grad.data()[i * p..(i + 1) * p];
            for row in 0..s.height {
                for col in 0..s.width {
                    let idx = row * s.width + col;
                    let gm = gr[idx] * m[idx];
                    if gm == 0.0 {
                        continue;
                    }
                    let (x, y) = s.pixel_center(row, col);
                    let u = (x - b.cx) / b.sx;
                    let v = (y - b.cy) / b.sy;
                    dcx += gm * u / b.sx;
                    dcy += gm * v / b.sy;
                    dsx += gm * u * u / b.sx;
                    dsy += gm * v * v / b.sy;
                }
            }
            let row = &mut dz[i * d..(i + 1) * d];
            row[CX] = dcx * b.cx * (1.0 - b.cx);
            row[CY] = dcy * b.cy * (1.0 - b.cy);
            row[LOG_SX] = if live_x { dsx * b.sx } else { 0.0 };
            row[LOG_SY] = if live_y { dsy * b.sy } else { 0.0 };
        }
        vec![Some(Tensor::new(z.shape(), dz).expect("shape"))]
    }
}
