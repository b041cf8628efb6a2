//! Index and query ablations: trains the full model, a dot-product index
//! and a last-tracks query with the same seed and compares IDF1 on the same
//! held-out videos.
//!
//! cargo run --release --example ablation -- [steps] [videos] [seed]

use ocmot::indexmerge::IndexKind;
use ocmot::motmetrics::{evaluate, EvalConfig};
use ocmot::slotworld::{generate, SimConfig};
use ocmot::tracker::{track_video, InferenceConfig};
use ocmot::trainer::{train, Checkpoint, Model, ModelConfig, QueryKind, TrainConfig, TrainOutputs};

fn main() -> ocmot::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let steps: usize = args.first().and_then(|s| s.parse().ok()).unwrap_or(200);
    let videos: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(10);
    let seed: u64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(0);

    let sim = SimConfig::default();
    let data = generate(&sim, 1)?;
    let test = generate(&SimConfig { videos, ..sim.clone() }, 1000)?;
    let variants = [
        ("two mha / rollout", IndexKind::TwoMha, QueryKind::Rollout),
        ("two mha / last tracks", IndexKind::TwoMha, QueryKind::LastTracks),
        ("dot product / rollout", IndexKind::DotProduct, QueryKind::Rollout),
        ("one shared mha / rollout", IndexKind::OneMhaShared, QueryKind::Rollout),
    ];
    for (name, index_kind, query) in variants {
        let mc = ModelConfig { index_kind, query, ..ModelConfig::default() };
        let tc = TrainConfig { steps, seed, ..TrainConfig::default() };
        let mut ck = Checkpoint::new(Model::init(mc, seed)?, tc);
        train(&mut ck, &data, &TrainOutputs::default())?;
        let preds = test
            .videos
            .iter()
            .map(|v| track_video(v, &ck.model, &test.config.decoder, &InferenceConfig::default()))
            .collect::<ocmot::Result<Vec<_>>>()?;
        let r = evaluate(&preds, &test.videos, &EvalConfig::default())?.aggregate;
        println!("{name:26} IDF1 {:.4}  IDS {}", r.idf1, r.ids);
    }
    Ok(())
}
