//! Trains the memory and index-merge module on the synthetic benchmark,
//! then shows that resuming from a mid-run checkpoint lands on exactly the
//! same parameters.
//!
//! cargo run --release --example train_model -- [steps] [seed]

use ocmot::slotworld::{generate, SimConfig};
use ocmot::trainer::{evaluate_loss, train, Checkpoint, Model, ModelConfig, TrainConfig, TrainOutputs};

fn main() -> ocmot::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let steps: usize = args.first().and_then(|s| s.parse().ok()).unwrap_or(60);
    let seed: u64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(0);

    let data = generate(&SimConfig { videos: 16, ..SimConfig::default() }, 1)?;
    let tc = TrainConfig { steps, seed, log_every: (steps / 6).max(1), ..TrainConfig::default() };
    let model = Model::init(ModelConfig::default(), seed)?;
    println!("{} trainable parameters", model.store.numel());

    let mut ck = Checkpoint::new(model, tc.clone());
    let before = evaluate_loss(&ck.model, &data, &tc, 16, 99)?;
    let curve = train(&mut ck, &data, &TrainOutputs::default())?;
    for (s, l) in &curve.points {
        println!("step {s:5}  loss {l:.5}");
    }
    let after = evaluate_loss(&ck.model, &data, &tc, 16, 99)?;
    println!("held-out clip loss {before:.5} -> {after:.5} ({:.0}%)", 100.0 * after / before);

    // stop halfway, round-trip through bytes, continue
    let half = TrainConfig { steps: steps / 2, ..tc.clone() };
    let mut a = Checkpoint::new(Model::init(ModelConfig::default(), seed)?, half);
    train(&mut a, &data, &TrainOutputs::default())?;
    let mut b = Checkpoint::from_bytes(&a.to_bytes()?)?;
    b.train.steps = steps;
    train(&mut b, &data, &TrainOutputs::default())?;
    println!("resumed run is bitwise identical: {}", b.to_bytes()? == ck.to_bytes()?);
    Ok(())
}
