//! Trains briefly, tracks held-out videos with OC-MOT and with the IoU
//! baseline on the same slots, and scores both.
//!
//! cargo run --release --example track_and_evaluate -- [steps] [videos]

use ocmot::motmetrics::{evaluate, EvalConfig, Summary};
use ocmot::slotworld::{generate, SimConfig};
use ocmot::tracker::{baseline_iou_tracker, track_video, BaselineConfig, InferenceConfig};
use ocmot::trainer::{train, Checkpoint, Model, ModelConfig, TrainConfig, TrainOutputs};

fn show(name: &str, s: &Summary) {
    let opt = |v: Option<f64>| v.map_or("n/a".into(), |x| format!("{x:.3}"));
    println!(
        "{name:10} IDF1 {:.3}  MOTA {:.3}  IDS {:5}  FP {:5}  FN {:5}  mAP {}  FG-ARI {}",
        s.idf1,
        s.mota,
        s.ids,
        s.fp,
        s.fn_,
        opt(s.track_map),
        opt(s.fg_ari)
    );
}

fn main() -> ocmot::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let steps: usize = args.first().and_then(|s| s.parse().ok()).unwrap_or(150);
    let videos: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(10);

    let sim = SimConfig::default();
    let data = generate(&sim, 1)?;
    let test = generate(&SimConfig { videos, ..sim.clone() }, 1000)?;
    let spec = &test.config.decoder;

    let tc = TrainConfig { steps, ..TrainConfig::default() };
    let mut ck = Checkpoint::new(Model::init(ModelConfig::default(), 0)?, tc);
    train(&mut ck, &data, &TrainOutputs::default())?;

    let ic = InferenceConfig::default();
    let ours = test
        .videos
        .iter()
        .map(|v| track_video(v, &ck.model, spec, &ic))
        .collect::<ocmot::Result<Vec<_>>>()?;
    let base: Vec<_> = test
        .videos
        .iter()
        .map(|v| baseline_iou_tracker(v, spec, &BaselineConfig::default()))
        .collect();

    let ec = EvalConfig::default();
    show("oc-mot", &evaluate(&ours, &test.videos, &ec)?.aggregate);
    show("iou", &evaluate(&base, &test.videos, &ec)?.aggregate);
    Ok(())
}
