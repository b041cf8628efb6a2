//! The self-supervised association loss: pairwise assignment costs from
//! decoded masks and reconstructions, weighted by a soft index.
//!
//! cargo run --example em_loss

use ocmot::diffcore::{Graph, Tensor};
use ocmot::emloss::{cost_matrix, em_loss, em_loss_brute, LossWeights, Side};
use ocmot::slotworld::{generate, SimConfig};

fn main() -> ocmot::Result<()> {
    let cfg = SimConfig { videos: 1, frames: 2, ..SimConfig::default() };
    let data = generate(&cfg, 5)?;
    let spec = &cfg.decoder;
    let v = &data.videos[0];
    let w = LossWeights::default();

    let mut g = Graph::new();
    let now = g.input(v.frames[1].slots.clone());
    let before = g.input(v.frames[0].slots.clone());
    let a = Side::new(&mut g, spec, now)?;
    let b = Side::new(&mut g, spec, before)?;
    let c = cost_matrix(&mut g, &a, &b, &w)?;
    let c = g.value(c).clone();

    // the cheapest previous slot of an object slot is usually its own object
    let (f0, f1) = (&v.frames[0], &v.frames[1]);
    let mut same = 0;
    let mut total = 0;
    for i in 0..c.rows() {
        let Some(o) = f1.gt_owner[i] else { continue };
        let j = (0..c.cols()).min_by(|&x, &y| c.get(i, x).total_cmp(&c.get(i, y))).unwrap();
        total += 1;
        same += (f0.gt_owner[j] == Some(o)) as usize;
    }
    println!("cheapest match has the same owner for {same}/{total} object slots");

    // the loss under a uniform index, vectorized and as an explicit double sum
    let (n, m) = (c.rows(), c.cols());
    let uniform = Tensor::new(&[n, m], vec![1.0 / m as f64; n * m])?;
    let idx = g.input(uniform);
    let fast = em_loss(&mut g, spec, now, before, before, idx, &w)?;
    let slow = em_loss_brute(&mut g, spec, now, before, before, idx, &w)?;
    let (fast, slow) = (g.value(fast).data()[0], g.value(slow).data()[0]);
    println!("uniform-index loss {fast:.6} (double sum {slow:.6})");
    Ok(())
}
