//! Builds a small graph through masked multi-head attention and checks its
//! reverse-mode gradients against central finite differences.
//!
//! cargo run --example gradient_check

use ocmot::diffcore::{grad_check_many, multi_head_attention, MhaParams, ParamStore, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> ocmot::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (d, heads) = (8, 2);
    let mut store = ParamStore::new();
    let params = MhaParams::init(&mut store, "attn", d, true, &mut rng);
    let q = Tensor::uniform(&[3, d], 1.0, &mut rng);
    let k = Tensor::uniform(&[5, d], 1.0, &mut rng);
    // a soft mask with one key switched off for every query
    let mut mask = Tensor::uniform(&[3, 5], 0.5, &mut rng);
    for i in 0..3 {
        for j in 0..5 {
            let v = if j == 4 { 0.0 } else { 0.5 + mask.get(i, j) };
            mask.set(i, j, v);
        }
    }
    let probe = Tensor::uniform(&[3, d], 1.0, &mut rng);

    let report = grad_check_many(
        |g, v| {
            let w = params.bind(g, &store);
            let m = g.input(mask.clone());
            let out = multi_head_attention(g, &w, heads, v[0], v[1], v[1], Some(m))?;
            let p = g.input(probe.clone());
            let y = g.mul(out.output.expect("value projection"), p)?;
            let a = g.sum(y);
            let b = g.sum(out.weights);
            g.add(a, b)
        },
        &[q, k],
        1e-6,
    )?;
    println!("max relative error {:.3e}", report.max_rel_err);
    println!("worst coordinate {:?}", report.worst);
    println!("passes the 1e-4 bar: {}", report.max_rel_err < 1e-4);
    Ok(())
}
