use image::{Rgb, RgbImage};

use crate::slotworld::FrameGt;
use crate::tracker::TrackletSet;

const BACKGROUND: [u8; 3] = [24, 24, 28];
const GT_SHADE: [u8; 3] = [70, 70, 78];

/// Fixed color of a track id: hues stepped by the golden angle so nearby
/// ids differ strongly.
pub fn track_color(id: u32) -> [u8; 3] {
    let h = (id as f64 * 0.618_033_988_749_895).fract() * 6.0;
    let (s, v) = (0.75, 0.95);
    let c = v * s;
    let x = c * (1.0 - (h % 2.0 - 1.0).abs());
    let (r, g, b) = match h as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [r, g, b].map(|u| ((u + m) * 255.0).round() as u8)
}

fn blend(a: [u8; 3], b: [u8; 3], alpha: f64) -> [u8; 3] {
    let mut out = [0; 3];
    for k in 0..3 {
        out[k] = (a[k] as f64 * (1.0 - alpha) + b[k] as f64 * alpha).round() as u8;
    }
    out
}

/// Renders frame `t`: track masks as translucent fills in their palette
/// color, boxes as solid outlines, optional GT regions underneath.
pub fn render_frame(set: &TrackletSet, t: usize, gt: Option<&FrameGt>, scale: u32) -> RgbImage {
    let (h, w) = (set.height, set.width);
    let mut px = vec![BACKGROUND; h * w];
    if let Some(gt) = gt {
        for o in &gt.objects {
            for (i, &b) in o.visible.bits().iter().enumerate() {
                if b {
                    px[i] = GT_SHADE;
                }
            }
        }
    }
    let mut tracks: Vec<_> = set.tracks.iter().filter_map(|tr| tr.at(t).map(|f| (tr.id, f))).collect();
    tracks.sort_by_key(|(id, _)| *id);
    for (id, f) in &tracks {
        let c = track_color(*id);
        for (i, &b) in f.mask.bits().iter().enumerate() {
            if b && f.mask.height() == h && f.mask.width() == w {
                px[i] = blend(px[i], c, 0.6);
            }
        }
    }
    let s = scale as usize;
    let mut img = RgbImage::from_pixel((w * s) as u32, (h * s) as u32, Rgb(BACKGROUND));
    for y in 0..h * s {
        for x in 0..w * s {
            img.put_pixel(x as u32, y as u32, Rgb(px[(y / s) * w + x / s]));
        }
    }
    for (id, f) in &tracks {
        let Some(b) = f.bbox else { continue };
        let c = Rgb(track_color(*id));
        let (x0, y0) = ((b.x0 as usize) * s, (b.y0 as usize) * s);
        let (x1, y1) = (((b.x1 as usize) * s).min(w * s) - 1, ((b.y1 as usize) * s).min(h * s) - 1);
        for x in x0..=x1 {
            img.put_pixel(x as u32, y0 as u32, c);
            img.put_pixel(x as u32, y1 as u32, c);
        }
        for y in y0..=y1 {
            img.put_pixel(x0 as u32, y as u32, c);
            img.put_pixel(x1 as u32, y as u32, c);
        }
    }
    img
}
