//! Associates the slots of one frame with memory rows: soft index,
//! binarization and the attention merge that pools split slots.
//!
//! Memory rows here are the previous frame's object slots, one buffer per
//! object, so the example needs no training.
//!
//! cargo run --release --example index_merge

use ocmot::diffcore::{Graph, ParamStore, Tensor};
use ocmot::indexmerge::{argmax_rows, binarize, index, merge, AssocParams, IndexKind};
use ocmot::slotworld::{generate, SimConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> ocmot::Result<()> {
    let cfg = SimConfig { videos: 1, frames: 2, p_split: 0.5, ..SimConfig::default() };
    let data = generate(&cfg, 3)?;
    let v = &data.videos[0];
    let (prev, cur) = (&v.frames[0], &v.frames[1]);

    // one memory row per object, from the first slot it owned last frame
    let mut owners = Vec::new();
    let mut rows = Vec::new();
    for (k, o) in prev.gt_owner.iter().enumerate() {
        if let Some(o) = o {
            if !owners.contains(o) {
                owners.push(*o);
                rows.push(prev.slots.row(k).to_vec());
            }
        }
    }
    let memory = Tensor::from_rows(&rows)?;

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut store = ParamStore::new();
    let p = AssocParams::init(&mut store, IndexKind::TwoMha, cfg.decoder.dim, 4, &mut rng)?;
    let mut g = Graph::new();
    let s = g.input(cur.slots.clone());
    let m = g.input(memory);
    let soft = index(&mut g, &store, &p, s, m)?;
    let hard = binarize(g.value(soft));
    let pick = argmax_rows(g.value(soft));
    let hv = g.input(hard);
    let merged = merge(&mut g, &store, &p, s, m, hv)?;

    let mut hits = 0;
    let mut fg = 0;
    for (i, owner) in cur.gt_owner.iter().enumerate() {
        let row = g.value(soft).row(i);
        let conf = row[pick[i]];
        match owner {
            Some(o) => {
                fg += 1;
                let ok = owners[pick[i]] == *o;
                hits += ok as usize;
                println!("slot {i:2} object {o} -> buffer {} (p={conf:.2}) {}", pick[i], if ok { "ok" } else { "WRONG" });
            }
            None => println!("slot {i:2} background -> buffer {} (p={conf:.2})", pick[i]),
        }
    }
    println!("{hits}/{fg} object slots reach their own buffer");
    let supported = merged.supported.iter().filter(|&&b| b).count();
    println!("{supported} of {} buffers received slots", merged.supported.len());
    Ok(())
}
