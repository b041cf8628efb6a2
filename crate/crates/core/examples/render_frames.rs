//! Writes PNG overlays of baseline tracklets for one short video: each
//! track keeps its palette color in every frame.
//!
//! cargo run --release --example render_frames -- [out_dir]

use std::path::PathBuf;

use ocmot::cli::render_frame;
use ocmot::slotworld::{generate, SimConfig};
use ocmot::tracker::{baseline_iou_tracker, BaselineConfig};

fn main() -> ocmot::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("ocmot_frames"));
    std::fs::create_dir_all(&dir)?;
    let data = generate(&SimConfig { videos: 1, frames: 8, ..SimConfig::default() }, 2)?;
    let v = &data.videos[0];
    let set = baseline_iou_tracker(v, &data.config.decoder, &BaselineConfig::default());
    for t in 0..v.len() {
        let img = render_frame(&set, t, Some(&v.gt[t]), 8);
        let path = dir.join(format!("frame_{t:02}.png"));
        img.save(&path).map_err(|e| std::io::Error::other(e.to_string()))?;
    }
    println!("{} frames, {} tracks -> {}", v.len(), set.tracks.len(), dir.display());
    Ok(())
}
