//! Generates the synthetic slot benchmark, writes it to disk, reads it back
//! and prints a few statistics.
//!
//! cargo run --release --example generate_dataset -- [videos] [seed] [path]

use std::path::PathBuf;

use ocmot::slotworld::{generate_dataset, Dataset, SimConfig};

fn main() -> ocmot::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let videos = args.first().and_then(|s| s.parse().ok()).unwrap_or(8);
    let seed = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(7);
    let path = args
        .get(2)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("ocmot_example.data"));

    let cfg = SimConfig { videos, ..SimConfig::default() };
    let sum = generate_dataset(&cfg, seed, &path)?;
    println!("wrote {} ({} bytes)", path.display(), std::fs::metadata(&path)?.len());
    println!("sha256 {sum}");

    let data = Dataset::load(&path)?;
    let v = &data.videos[0];
    let owned = v.frames.iter().flat_map(|f| &f.gt_owner).filter(|o| o.is_some()).count();
    println!(
        "{} videos x {} frames, {} slots of width {}",
        data.videos.len(),
        v.len(),
        cfg.slots,
        cfg.decoder.dim
    );
    println!("video 0: {:.1} object slots per frame", owned as f64 / v.len() as f64);
    println!("videos with an occlusion event: {:.0}%", 100.0 * data.occlusion_rate(cfg.v_min));

    // regenerating with the same seed reproduces the file bit for bit
    let again = generate_dataset(&cfg, seed, &path)?;
    println!("regenerated checksum matches: {}", again == sum);
    Ok(())
}
