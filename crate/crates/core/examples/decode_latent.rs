//! Encodes a world object into a slot latent, decodes it with the frozen
//! blob decoder and prints the thresholded mask as text.
//!
//! cargo run --example decode_latent

use ocmot::slotworld::{blob_mask, encode_object, DecoderSpec, WorldObject};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let spec = DecoderSpec { height: 16, width: 24, ..DecoderSpec::default() };
    let obj = WorldObject {
        id: 0,
        center: [0.4, 0.55],
        velocity: [0.0, 0.0],
        log_scale: [0.15f64.ln(), 0.2f64.ln()],
        color: [0.9, 0.3, 0.2],
        depth: 0.0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let appearance = vec![0.0; spec.dim - 7];
    let z = encode_object(&obj, &appearance, &spec, 0.0, &mut rng);
    let b = spec.blob(&z);
    println!("center ({:.3}, {:.3}) scale ({:.3}, {:.3})", b.cx, b.cy, b.sx, b.sy);
    println!("mean mask value {:.4}", spec.mask_mass(&z));

    let decoded = spec.binary_mask(&z, 0.5);
    let analytic = blob_mask(&spec, &obj.blob(), 0.5);
    println!("decoded mask equals the analytic mask: {}", decoded == analytic);
    for y in 0..spec.height {
        let row: String = (0..spec.width).map(|x| if decoded.get(y, x) { '#' } else { '.' }).collect();
        println!("{row}");
    }
}
