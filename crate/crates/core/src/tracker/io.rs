//! Tracklet text format.
//!
//! ```text
//! # ocmot-tracklets 1
//! # method <name>
//! # config <compact JSON>
//! V <video> <frames> <height> <width>
//! T <video> <track> <activated> <terminated|->
//! F <video> <frame> <track> <mass> <x0> <y0> <x1> <y1> <rle|->
//! ```
//!
//! Boxes are `- - - -` when the mask is empty. The RLE lists run lengths
//! over the row-major mask, separated by commas, starting with a run of
//! zeros. `T` lines precede the `F` lines of their track; `F` lines of a
//! track are in increasing frame order.

use std::fmt::Write as _;

use super::{TrackFrame, Tracklet, TrackletSet};
use crate::error::{Error, Result};
use crate::geometry::{BBox, Mask};

pub const TRACKLET_FORMAT: &str = "ocmot-tracklets";

/// Parsed tracklet file.
#[derive(Clone, Debug, PartialEq)]
pub struct TrackletFile {
    pub method: String,
    /// Compact JSON of the run configuration.
    pub config: String,
    pub videos: Vec<TrackletSet>,
}

pub fn write_tracklets(file: &TrackletFile, with_masks: bool) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# {TRACKLET_FORMAT} 1");
    let _ = writeln!(s, "# method {}", file.method);
    let _ = writeln!(s, "# config {}", file.config);
    for set in &file.videos {
        let _ = writeln!(s, "V {} {} {} {}", set.video, set.frames, set.height, set.width);
        for tr in &set.tracks {
            let term = tr.terminated.map_or("-".to_string(), |t| t.to_string());
            let _ = writeln!(s, "T {} {} {} {term}", set.video, tr.id, tr.activated);
            for f in &tr.frames {
                let bbox = f.bbox.map_or("- - - -".to_string(), |b| {
                    format!("{} {} {} {}", b.x0, b.y0, b.x1, b.y1)
                });
                let rle = if with_masks {
                    let runs: Vec<String> = f.mask.to_rle().iter().map(usize::to_string).collect();
                    runs.join(",")
                } else {
                    "-".to_string()
                };
                let _ = writeln!(s, "F {} {} {} {:e} {bbox} {rle}", set.video, f.frame, tr.id, f.mass);
            }
        }
    }
    s
}

fn num<T: std::str::FromStr>(tok: Option<&str>, line: usize) -> Result<T> {
    tok.and_then(|t| t.parse().ok())
        .ok_or_else(|| Error::Format(format!("tracklet line {line}: bad field")))
}

pub fn read_tracklets(text: &str) -> Result<TrackletFile> {
    let mut method = String::new();
    let mut config = String::new();
    let mut videos: Vec<TrackletSet> = Vec::new();
    let mut saw_format = false;
    for (ln, line) in text.lines().enumerate() {
        let ln = ln + 1;
        if let Some(rest) = line.strip_prefix("# ") {
            if let Some(v) = rest.strip_prefix(TRACKLET_FORMAT) {
                if v.trim() != "1" {
                    return Err(Error::Format(format!("unsupported tracklet version {v:?}")));
                }
                saw_format = true;
            } else if let Some(m) = rest.strip_prefix("method ") {
                method = m.to_string();
            } else if let Some(c) = rest.strip_prefix("config ") {
                config = c.to_string();
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let mut it = line.split_whitespace();
        let kind = it.next();
        let video: usize = num(it.next(), ln)?;
        match kind {
            Some("V") => videos.push(TrackletSet {
                video,
                frames: num(it.next(), ln)?,
                height: num(it.next(), ln)?,
                width: num(it.next(), ln)?,
                tracks: Vec::new(),
            }),
            Some("T") => {
                let set = current(&mut videos, video, ln)?;
                let id = num(it.next(), ln)?;
                let activated = num(it.next(), ln)?;
                let terminated = match it.next() {
                    Some("-") => None,
                    t => Some(num(t, ln)?),
                };
                set.tracks.push(Tracklet {
                    id,
                    activated,
                    terminated,
                    frames: Vec::new(),
                });
            }
            Some("F") => {
                let set = current(&mut videos, video, ln)?;
                let (h, w) = (set.height, set.width);
                let frame: usize = num(it.next(), ln)?;
                let id: u32 = num(it.next(), ln)?;
                let mass: f64 = num(it.next(), ln)?;
                let coords: Vec<&str> = (0..4).filter_map(|_| it.next()).collect();
                if coords.len() != 4 {
                    return Err(Error::Format(format!("tracklet line {ln}: missing box")));
                }
                let bbox = if coords[0] == "-" {
                    None
                } else {
                    Some(BBox {
                        x0: num(Some(coords[0]), ln)?,
                        y0: num(Some(coords[1]), ln)?,
                        x1: num(Some(coords[2]), ln)?,
                        y1: num(Some(coords[3]), ln)?,
                    })
                };
                let mask = match it.next() {
                    Some("-") | None => Mask::empty(h, w),
                    Some(r) => {
                        let runs: Vec<usize> = r
                            .split(',')
                            .map(|x| num(Some(x), ln))
                            .collect::<Result<_>>()?;
                        Mask::from_rle(h, w, &runs)
                            .ok_or_else(|| Error::Format(format!("tracklet line {ln}: bad RLE")))?
                    }
                };
                let tr = set
                    .tracks
                    .iter_mut()
                    .find(|t| t.id == id)
                    .ok_or_else(|| Error::Format(format!("tracklet line {ln}: unknown track {id}")))?;
                if tr.frames.last().is_some_and(|f| f.frame >= frame) {
                    return Err(Error::Format(format!("tracklet line {ln}: frames out of order")));
                }
                tr.frames.push(TrackFrame {
                    frame,
                    repr: Vec::new(),
                    mask,
                    bbox,
                    mass,
                });
            }
            _ => return Err(Error::Format(format!("tracklet line {ln}: unknown record"))),
        }
    }
    if !saw_format {
        return Err(Error::Format("missing tracklet format header".into()));
    }
    Ok(TrackletFile {
        method,
        config,
        videos,
    })
}

fn current(videos: &mut [TrackletSet], video: usize, ln: usize) -> Result<&mut TrackletSet> {
    videos
        .iter_mut()
        .rev()
        .find(|v| v.video == video)
        .ok_or_else(|| Error::Format(format!("tracklet line {ln}: record before its V line")))
}
