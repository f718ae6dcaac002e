use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    build_mask, energy_grad_attention, object_energy, AttentionMap, GuidanceError, Grid, ObjectTerm,
};
use crate::layout::{BoundingBox, Canvas};

/// Result of comparing `dL_o/dA` against central differences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientCheck {
    pub cells: usize,
    /// Largest `|analytic - numeric| / max(|analytic|, |numeric|, floor)`.
    pub max_rel_error: f64,
    pub worst_cell: usize,
}

impl GradientCheck {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_error <= tol
    }
}

const REL_FLOOR: f64 = 1e-6;

/// Central differences of [`object_energy`] with step `h` in every cell.
pub fn gradient_check(term: &ObjectTerm, k: usize, h: f64) -> Result<GradientCheck, GuidanceError> {
    let analytic = energy_grad_attention(&term.attention, &term.mask, term.beta, k)?;
    let base = term.attention.values().to_vec();
    let side = term.attention.grid().side();
    let eval = |values: Vec<f64>| -> Result<f64, GuidanceError> {
        // Perturbed entries may dip below zero, which `AttentionMap::new`
        // would reject; the energy itself is defined there.
        let att = AttentionMap(Grid { side, data: values });
        object_energy(&att, &term.mask, term.beta, k)
    };
    let mut worst = (0.0, 0);
    for i in 0..base.len() {
        let mut plus = base.clone();
        plus[i] += h;
        let mut minus = base.clone();
        minus[i] -= h;
        let numeric = (eval(plus)? - eval(minus)?) / (2.0 * h);
        let a = analytic.as_slice()[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_FLOOR);
        if rel > worst.0 {
            worst = (rel, i);
        }
    }
    Ok(GradientCheck {
        cells: base.len(),
        max_rel_error: worst.0,
        worst_cell: worst.1,
    })
}

/// Random object term whose top-k selections cannot change under
/// perturbations much smaller than `1 / (R^2 + 1)`: every entry sits on its
/// own level `(p + 1) / (R^2 + 1)` plus jitter under a quarter of the
/// spacing, so no two entries are within half a level of each other.
pub fn random_tie_free_instance(seed: u64) -> (ObjectTerm, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let side = rng.random_range(3..=16usize);
    let canvas = Canvas::default();
    let cells = side * side;

    let mask = loop {
        let w = rng.random_range(1..=canvas.width);
        let h = rng.random_range(1..=canvas.height);
        let x = rng.random_range(0..=canvas.width - w);
        let y = rng.random_range(0..=canvas.height - h);
        let m = build_mask(BoundingBox::new(x, y, w, h), canvas, side).expect("side >= 3");
        if m.inside_count() > 0 {
            break m;
        }
    };

    let spacing = 1.0 / (cells as f64 + 1.0);
    let mut levels: Vec<usize> = (0..cells).collect();
    levels.shuffle(&mut rng);
    let data = levels
        .into_iter()
        .map(|p| (p as f64 + 1.0) * spacing + rng.random_range(-0.25..0.25) * spacing)
        .collect();
    let attention = AttentionMap::from_vec(side, data).expect("positive finite entries");
    let beta = rng.random_range(0.0..2.0);
    let k = rng.random_range(1..=cells);
    (
        ObjectTerm {
            attention,
            mask,
            beta,
        },
        k,
    )
}
