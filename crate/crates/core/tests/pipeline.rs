use ocmot::motmetrics::{evaluate, EvalConfig};
use ocmot::slotworld::{generate, Dataset, SimConfig};
use ocmot::tracker::{read_tracklets, track_video, write_tracklets, InferenceConfig, TrackletFile};
use ocmot::trainer::{train_step, Checkpoint, Model, ModelConfig, TrainConfig};

fn small() -> Dataset {
    generate(&SimConfig { videos: 3, frames: 32, ..SimConfig::default() }, 4).unwrap()
}

#[test]
fn dataset_round_trips_through_bytes() {
    let d = small();
    let back = Dataset::from_bytes(&d.to_bytes().unwrap()).unwrap();
    assert_eq!(back, d);
}

#[test]
fn checkpoint_round_trips_and_keeps_training_identically() {
    let data = small();
    let tc = TrainConfig { batch: 2, ..TrainConfig::default() };
    let mut a = Checkpoint::new(Model::init(ModelConfig::default(), 9).unwrap(), tc);
    train_step(&mut a, &data).unwrap();
    let mut b = Checkpoint::from_bytes(&a.to_bytes().unwrap()).unwrap();
    for _ in 0..2 {
        train_step(&mut a, &data).unwrap();
        train_step(&mut b, &data).unwrap();
    }
    assert_eq!(a.to_bytes().unwrap(), b.to_bytes().unwrap());
}

#[test]
fn written_tracklets_score_like_the_originals() {
    let data = small();
    let model = Model::init(ModelConfig::default(), 2).unwrap();
    let spec = &data.config.decoder;
    let ic = InferenceConfig::default();
    let preds: Vec<_> = data.videos.iter().map(|v| track_video(v, &model, spec, &ic).unwrap()).collect();
    let file = TrackletFile { method: "ocmot".into(), config: "{}".into(), videos: preds.clone() };
    let back = read_tracklets(&write_tracklets(&file, true)).unwrap();
    let ec = EvalConfig::default();
    let a = evaluate(&preds, &data.videos, &ec).unwrap();
    let b = evaluate(&back.videos, &data.videos, &ec).unwrap();
    assert_eq!(a.aggregate.idf1, b.aggregate.idf1);
    assert_eq!(a.aggregate.ids, b.aggregate.ids);
    assert_eq!(a.aggregate.fg_ari, b.aggregate.fg_ari);
}
