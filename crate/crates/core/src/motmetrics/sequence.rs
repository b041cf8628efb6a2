use crate::geometry::{BBox, Mask};
use crate::slotworld::FrameGt;
use crate::tracker::TrackletSet;

/// One identity present in a frame with the area of its region.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Obs {
    pub id: u32,
    pub area: f64,
}

/// GT and predicted identities of one frame with pairwise overlaps.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct FramePairs {
    pub gt: Vec<Obs>,
    pub pred: Vec<Obs>,
    /// Intersection areas, row-major `gt × pred`.
    pub inter: Vec<f64>,
}

impl FramePairs {
    pub fn intersection(&self, g: usize, p: usize) -> f64 {
        self.inter[g * self.pred.len() + p]
    }

    pub fn union(&self, g: usize, p: usize) -> f64 {
        self.gt[g].area + self.pred[p].area - self.intersection(g, p)
    }

    pub fn iou(&self, g: usize, p: usize) -> f64 {
        let u = self.union(g, p);
        if u > 0.0 {
            self.intersection(g, p) / u
        } else {
            0.0
        }
    }
}

/// Per-frame overlap structure of a prediction against ground truth.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct Sequence {
    pub frames: Vec<FramePairs>,
}

/// Region shapes metrics can compare.
pub trait Region {
    fn area(&self) -> f64;
    fn inter(&self, other: &Self) -> f64;
}

impl Region for Mask {
    fn area(&self) -> f64 {
        Mask::area(self) as f64
    }

    fn inter(&self, other: &Self) -> f64 {
        self.intersection(other) as f64
    }
}

impl Region for BBox {
    fn area(&self) -> f64 {
        BBox::area(self)
    }

    fn inter(&self, other: &Self) -> f64 {
        self.intersection(other)
    }
}

impl Sequence {
    /// Builds from per-frame `(gt, pred)` lists of identified regions.
    pub fn build<R: Region>(frames: &[(Vec<(u32, R)>, Vec<(u32, R)>)]) -> Self {
        let frames = frames
            .iter()
            .map(|(gt, pred)| FramePairs {
                gt: gt.iter().map(|(id, r)| Obs { id: *id, area: r.area() }).collect(),
                pred: pred.iter().map(|(id, r)| Obs { id: *id, area: r.area() }).collect(),
                inter: gt
                    .iter()
                    .flat_map(|(_, a)| pred.iter().map(move |(_, b)| a.inter(b)))
                    .collect(),
            })
            .collect();
        Self { frames }
    }

    /// Regions from tracker output and rendered ground truth. GT objects
    /// below `min_visibility` are left out of their frame.
    pub fn from_tracks(pred: &TrackletSet, gt: &[FrameGt], min_visibility: f64, use_masks: bool) -> Self {
        if use_masks {
            let frames: Vec<_> = gt
                .iter()
                .enumerate()
                .map(|(t, f)| {
                    let g = f
                        .objects
                        .iter()
                        .filter(|o| o.visibility >= min_visibility && !o.amodal.is_empty())
                        .map(|o| (o.id, o.amodal.clone()))
                        .collect();
                    let p = pred
                        .tracks
                        .iter()
                        .filter_map(|tr| tr.at(t).map(|tf| (tr.id, tf.mask.clone())))
                        .collect();
                    (g, p)
                })
                .collect();
            Self::build(&frames)
        } else {
            let frames: Vec<_> = gt
                .iter()
                .enumerate()
                .map(|(t, f)| {
                    let g = f
                        .objects
                        .iter()
                        .filter(|o| o.visibility >= min_visibility)
                        .filter_map(|o| o.bbox.map(|b| (o.id, b)))
                        .collect();
                    let p = pred
                        .tracks
                        .iter()
                        .filter_map(|tr| tr.at(t).and_then(|tf| tf.bbox.map(|b| (tr.id, b))))
                        .collect();
                    (g, p)
                })
                .collect();
            Self::build(&frames)
        }
    }
}
