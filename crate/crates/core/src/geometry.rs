//! Binary masks and axis-aligned boxes on the pixel grid.

use serde::{Deserialize, Serialize};

/// Axis-aligned box in pixel units, `[x0, x1) × [y0, y1)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl BBox {
    pub fn area(&self) -> f64 {
        (self.x1 - self.x0).max(0.0) * (self.y1 - self.y0).max(0.0)
    }

    pub fn intersection(&self, o: &BBox) -> f64 {
        let w = (self.x1.min(o.x1) - self.x0.max(o.x0)).max(0.0);
        let h = (self.y1.min(o.y1) - self.y0.max(o.y0)).max(0.0);
        w * h
    }

    pub fn iou(&self, o: &BBox) -> f64 {
        let inter = self.intersection(o);
        let union = self.area() + o.area() - inter;
        if union > 0.0 {
            inter / union
        } else {
            0.0
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Mask {
    height: usize,
    width: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn empty(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            bits: vec![false; height * width],
        }
    }

    pub fn from_bits(height: usize, width: usize, bits: Vec<bool>) -> Self {
        assert_eq!(bits.len(), height * width, "mask size");
        Self {
            height,
            width,
            bits,
        }
    }

    /// Pixels where `soft >= threshold`.
    pub fn from_soft(height: usize, width: usize, soft: &[f64], threshold: f64) -> Self {
        assert_eq!(soft.len(), height * width, "mask size");
        Self {
            height,
            width,
            bits: soft.iter().map(|&v| v >= threshold).collect(),
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, y: usize, x: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn set(&mut self, y: usize, x: usize, v: bool) {
        self.bits[y * self.width + x] = v;
    }

    pub fn area(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn intersection(&self, o: &Mask) -> usize {
        self.bits.iter().zip(&o.bits).filter(|(a, b)| **a && **b).count()
    }

    pub fn iou(&self, o: &Mask) -> f64 {
        let inter = self.intersection(o);
        let union = self.area() + o.area() - inter;
        if union == 0 {
            0.0
        } else {
            inter as f64 / union as f64
        }
    }

    /// Pixels of `self` not covered by `o`.
    pub fn minus(&self, o: &Mask) -> Mask {
        Mask {
            height: self.height,
            width: self.width,
            bits: self.bits.iter().zip(&o.bits).map(|(a, b)| *a && !*b).collect(),
        }
    }

    pub fn union_with(&mut self, o: &Mask) {
        for (a, b) in self.bits.iter_mut().zip(&o.bits) {
            *a |= *b;
        }
    }

    pub fn bbox(&self) -> Option<BBox> {
        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(y, x) {
                    x0 = x0.min(x);
                    y0 = y0.min(y);
                    x1 = x1.max(x + 1);
                    y1 = y1.max(y + 1);
                }
            }
        }
        (x0 != usize::MAX).then(|| BBox {
            x0: x0 as f64,
            y0: y0 as f64,
            x1: x1 as f64,
            y1: y1 as f64,
        })
    }

    /// Run lengths over the row-major bit sequence, starting with a run of
    /// zeros (possibly empty).
    pub fn to_rle(&self) -> Vec<usize> {
        let mut runs = Vec::new();
        let mut cur = false;
        let mut n = 0;
        for &b in &self.bits {
            if b == cur {
                n += 1;
            } else {
                runs.push(n);
                cur = b;
                n = 1;
            }
        }
        runs.push(n);
        runs
    }

    pub fn from_rle(height: usize, width: usize, runs: &[usize]) -> Option<Mask> {
        let mut bits = Vec::with_capacity(height * width);
        let mut cur = false;
        for &r in runs {
            bits.extend(std::iter::repeat(cur).take(r));
            cur = !cur;
        }
        (bits.len() == height * width).then_some(Mask {
            height,
            width,
            bits,
        })
    }
}
