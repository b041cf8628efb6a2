//! Full-occlusion scenarios: a target passes behind a static occluder and
//! is hidden for three frames. Counts how often each tracker gives the
//! reappearing target the identity it had before.
//!
//! cargo run --release --example occlusion_recovery -- [steps] [scenarios]

use ocmot::motmetrics::best_track;
use ocmot::slotworld::{generate, occlusion_scenario, SimConfig};
use ocmot::tracker::{baseline_iou_tracker, track_video, BaselineConfig, InferenceConfig, TrackletSet};
use ocmot::trainer::{train, Checkpoint, Model, ModelConfig, TrainConfig, TrainOutputs};

fn main() -> ocmot::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let steps: usize = args.first().and_then(|s| s.parse().ok()).unwrap_or(300);
    let n: u64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(50);

    let sim = SimConfig::default();
    let data = generate(&sim, 1)?;
    let tc = TrainConfig { steps, ..TrainConfig::default() };
    let mut ck = Checkpoint::new(Model::init(ModelConfig::default(), 0)?, tc);
    train(&mut ck, &data, &TrainOutputs::default())?;

    let ic = InferenceConfig::default();
    let spec = &sim.decoder;
    let (mut ours, mut base) = (0, 0);
    for seed in 0..n {
        let s = occlusion_scenario(&sim, seed, 3)?;
        let kept = |set: &TrackletSet| {
            let a = best_track(set, &s.video.gt[s.before], s.target, s.before, 0.5);
            let b = best_track(set, &s.video.gt[s.after], s.target, s.after, 0.5);
            a.is_some() && a == b
        };
        let m = track_video(&s.video, &ck.model, spec, &ic)?;
        let b = baseline_iou_tracker(&s.video, spec, &BaselineConfig::default());
        ours += kept(&m) as usize;
        base += kept(&b) as usize;
        if seed == 0 {
            println!(
                "scenario 0: target hidden in frames {:?}, oc-mot {}, iou {}",
                s.hidden,
                if kept(&m) { "kept its id" } else { "lost its id" },
                if kept(&b) { "kept its id" } else { "lost its id" }
            );
        }
    }
    println!("identity kept across the occlusion: oc-mot {ours}/{n}, iou baseline {base}/{n}");
    Ok(())
}
