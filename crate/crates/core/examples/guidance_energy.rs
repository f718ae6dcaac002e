//! Energy and gradient of one object term on a small attention map.
//!
//! cargo run --example guidance_energy

use vidloop::guidance::{
    build_mask, energy_grad_attention, gradient_check, object_energy, AttentionMap, ObjectTerm,
};
use vidloop::layout::{BoundingBox, Canvas};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let side = 6;
    let mask = build_mask(BoundingBox::new(128, 128, 256, 170), Canvas::default(), side)?;
    // Attention peaks left of the box, so the in-box term is weak; the
    // index term keeps entries distinct.
    let data: Vec<f64> = (0..side * side)
        .map(|i| {
            let (r, c) = ((i / side) as f64, (i % side) as f64);
            1.0 / (1.0 + (r - 2.5).powi(2) + (c - 0.5).powi(2)) + 1e-3 * i as f64
        })
        .collect();
    let attention = AttentionMap::from_vec(side, data)?;
    let k = 4;
    for beta in [1.0, 1.05, 1.5] {
        println!("beta {beta:.2}: energy {:.6}", object_energy(&attention, &mask, beta, k)?);
    }
    let grad = energy_grad_attention(&attention, &mask, 1.0, k)?;
    println!("gradient (beta 1):");
    for row in grad.as_slice().chunks(side) {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:+.3}")).collect();
        println!("  {}", cells.join(" "));
    }
    let term = ObjectTerm {
        attention,
        mask,
        beta: 1.0,
    };
    let check = gradient_check(&term, k, 1e-5)?;
    println!("finite-difference check: max relative error {:.2e}", check.max_rel_error);
    Ok(())
}
