//! Drives the object memory by hand: FIFO eviction, the buffer lifecycle,
//! and the causal rollout that predicts each buffer's next representation.
//!
//! cargo run --example memory_bank

use ocmot::diffcore::{Graph, ParamStore, Tensor};
use ocmot::membank::{MemoryBank, RolloutConfig, RolloutModel};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> ocmot::Result<()> {
    // capacity 3, history of 4, terminate after 2 consecutive misses
    let mut bank: MemoryBank<f64> = MemoryBank::new(3, 4, 2)?;
    let a = bank.activate(0.0, 0)?;
    let b = bank.activate(100.0, 0)?;
    for t in 1..7 {
        bank.write(a, t as f64, t)?;
    }
    println!("buffer {a} keeps the last 4 entries: {:?}", bank.entries(a)?);
    println!("  written at {:?}", bank.timestamps(a)?);

    for _ in 0..3 {
        let s = bank.mark_missed(b)?;
        println!("buffer {b} missed, now {s:?}");
    }
    let c = bank.activate(-1.0, 7)?;
    println!("terminated ids are never reused: next buffer is {c}");
    println!("live buffers {:?}", bank.live_ids());

    // rollout over two buffers of different lengths
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut store = ParamStore::new();
    let cfg = RolloutConfig { width: 16, heads: 2, layers: 1, ff_hidden: 32 };
    let model = RolloutModel::init(&mut store, "rollout", cfg, 8, 4, &mut rng)?;
    let hist: Vec<Tensor> = (0..5).map(|_| Tensor::uniform(&[1, 8], 1.0, &mut rng)).collect();
    let run = |hist: &[Tensor]| -> ocmot::Result<Tensor> {
        let mut g = Graph::new();
        let v: Vec<_> = hist.iter().map(|h| g.input(h.clone())).collect();
        let seqs = vec![v[..3].to_vec(), v[3..].to_vec()];
        let out = model.rollout(&mut g, &store, &seqs)?;
        Ok(g.value(out).clone())
    };
    let before = run(&hist)?;
    println!("rollout rows: {:?}", before.shape());

    // changing buffer 1 leaves the prediction of buffer 0 untouched
    let mut edited = hist.clone();
    edited[4] = Tensor::uniform(&[1, 8], 1.0, &mut rng);
    let after = run(&edited)?;
    println!("buffer 0 prediction unchanged: {}", before.row(0) == after.row(0));
    println!("buffer 1 prediction changed:   {}", before.row(1) != after.row(1));
    Ok(())
}
