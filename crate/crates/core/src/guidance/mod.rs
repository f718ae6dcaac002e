//! Layout-guidance energy over cross-attention maps and gradient descent on
//! the latent.
//!
//! For each object `o` with attention map `A`, box mask `M` and guidance
//! scale `beta`:
//!
//! ```text
//! L_o = -beta * topk(A * M) + topk(A * (1 - M))      L = sum_o L_o
//! ```
//!
//! where `topk` is the mean of the `k` largest entries. The latent is then
//! moved against `dL/dz`. A small differentiable attention model
//! ([`ToyAttentionModel`]) stands in for a denoiser so the descent can be
//! exercised end to end.

mod check;
mod descent;
mod toy;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::layout::{BoundingBox, Canvas};

pub use check::{gradient_check, random_tie_free_instance, GradientCheck};
pub use descent::{
    energy_at, latent_step, run_guidance_window, targets_from_design, GuidanceSchedule,
    GuidanceTrajectory, Latent, Target,
};
pub use toy::{ToyAttentionModel, ToyModelConfig};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GuidanceError {
    #[error("attention resolution must be at least 1")]
    ZeroResolution,
    #[error("top-k count must be at least 1")]
    ZeroK,
    #[error("k = {k} exceeds the {size} available cells")]
    KExceedsSize { k: usize, size: usize },
    #[error("shape mismatch: {left} vs {right} cells")]
    ShapeMismatch { left: usize, right: usize },
    #[error("attention entries must be finite and non-negative")]
    InvalidAttention,
    #[error("non-finite {0} during guidance")]
    NonFinite(&'static str),
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
}

/// Square `side x side` grid of scalars, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    side: usize,
    data: Vec<f64>,
}

impl Grid {
    pub fn zeros(side: usize) -> Self {
        Self {
            side,
            data: vec![0.0; side * side],
        }
    }

    pub fn from_vec(side: usize, data: Vec<f64>) -> Result<Self, GuidanceError> {
        if data.len() != side * side {
            return Err(GuidanceError::ShapeMismatch {
                left: side * side,
                right: data.len(),
            });
        }
        Ok(Self { side, data })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.side + col]
    }
}

/// Cross-attention map for one object token at one timestep.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMap(Grid);

impl AttentionMap {
    pub fn new(grid: Grid) -> Result<Self, GuidanceError> {
        if grid.data.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(GuidanceError::InvalidAttention);
        }
        Ok(Self(grid))
    }

    pub fn from_vec(side: usize, data: Vec<f64>) -> Result<Self, GuidanceError> {
        Self::new(Grid::from_vec(side, data)?)
    }

    pub fn grid(&self) -> &Grid {
        &self.0
    }

    pub fn values(&self) -> &[f64] {
        &self.0.data
    }
}

/// Binary box mask on the attention grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    side: usize,
    cells: Vec<bool>,
}

impl Mask {
    pub fn from_cells(side: usize, cells: Vec<bool>) -> Result<Self, GuidanceError> {
        if cells.len() != side * side {
            return Err(GuidanceError::ShapeMismatch {
                left: side * side,
                right: cells.len(),
            });
        }
        Ok(Self { side, cells })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn cells(&self) -> &[bool] {
        &self.cells
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.cells[row * self.side + col]
    }

    pub fn inside_count(&self) -> usize {
        self.cells.iter().filter(|c| **c).count()
    }

    pub fn outside_count(&self) -> usize {
        self.cells.len() - self.inside_count()
    }

    /// Mask value as 0.0 / 1.0.
    pub fn value(&self, idx: usize) -> f64 {
        if self.cells[idx] {
            1.0
        } else {
            0.0
        }
    }
}

/// Rasterizes `bbox` onto an `resolution x resolution` grid covering the
/// canvas. A cell is inside when its center point lies in the half-open box
/// `[x, x + w) x [y, y + h)`.
pub fn build_mask(
    bbox: BoundingBox,
    canvas: Canvas,
    resolution: usize,
) -> Result<Mask, GuidanceError> {
    if resolution == 0 {
        return Err(GuidanceError::ZeroResolution);
    }
    let cell_w = f64::from(canvas.width) / resolution as f64;
    let cell_h = f64::from(canvas.height) / resolution as f64;
    let (x0, x1) = (f64::from(bbox.x), f64::from(bbox.x + bbox.w));
    let (y0, y1) = (f64::from(bbox.y), f64::from(bbox.y + bbox.h));
    let mut cells = Vec::with_capacity(resolution * resolution);
    for row in 0..resolution {
        let cy = (row as f64 + 0.5) * cell_h;
        for col in 0..resolution {
            let cx = (col as f64 + 0.5) * cell_w;
            cells.push(x0 <= cx && cx < x1 && y0 <= cy && cy < y1);
        }
    }
    Ok(Mask {
        side: resolution,
        cells,
    })
}

/// How `k` is chosen for an object: a fixed count, or a fraction of the
/// in-box cell count (rounded up, at least 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopK {
    Fixed(usize),
    BoxFraction(f64),
}

impl Default for TopK {
    fn default() -> Self {
        TopK::BoxFraction(0.5)
    }
}

impl TopK {
    pub fn resolve(&self, mask: &Mask) -> usize {
        match *self {
            TopK::Fixed(k) => k.max(1),
            TopK::BoxFraction(f) => ((f * mask.inside_count() as f64).ceil() as usize).max(1),
        }
    }
}

/// Indices of the `k` largest values, largest first; equal values are
/// ordered by ascending index.
pub(crate) fn topk_indices(values: &[f64], k: usize) -> Vec<usize> {
    let order = |a: &usize, b: &usize| values[*b].total_cmp(&values[*a]).then(a.cmp(b));
    let mut idx: Vec<usize> = (0..values.len()).collect();
    if k < idx.len() {
        idx.select_nth_unstable_by(k, order);
        idx.truncate(k);
    }
    idx.sort_unstable_by(order);
    idx
}

/// Mean of the `k` largest entries, summed in selection order.
pub fn topk_mean(values: &[f64], k: usize) -> Result<f64, GuidanceError> {
    if k == 0 {
        return Err(GuidanceError::ZeroK);
    }
    if k > values.len() {
        return Err(GuidanceError::KExceedsSize {
            k,
            size: values.len(),
        });
    }
    let sum: f64 = topk_indices(values, k).iter().map(|&i| values[i]).sum();
    Ok(sum / k as f64)
}

struct Selection {
    inside: Vec<usize>,
    k_in: usize,
    outside: Vec<usize>,
    k_out: usize,
    in_values: Vec<f64>,
    out_values: Vec<f64>,
}

fn select(att: &AttentionMap, mask: &Mask, k: usize) -> Result<Selection, GuidanceError> {
    if k == 0 {
        return Err(GuidanceError::ZeroK);
    }
    let a = att.values();
    if a.len() != mask.cells.len() {
        return Err(GuidanceError::ShapeMismatch {
            left: a.len(),
            right: mask.cells.len(),
        });
    }
    let in_count = mask.inside_count();
    if in_count == 0 {
        return Err(GuidanceError::KExceedsSize { k, size: 0 });
    }
    let k_in = k.min(in_count);
    let k_out = k.min(mask.cells.len() - in_count);
    let in_values: Vec<f64> = a
        .iter()
        .enumerate()
        .map(|(i, v)| v * mask.value(i))
        .collect();
    let out_values: Vec<f64> = a
        .iter()
        .enumerate()
        .map(|(i, v)| v * (1.0 - mask.value(i)))
        .collect();
    let inside = topk_indices(&in_values, k_in);
    let outside = if k_out > 0 {
        topk_indices(&out_values, k_out)
    } else {
        Vec::new()
    };
    Ok(Selection {
        inside,
        k_in,
        outside,
        k_out,
        in_values,
        out_values,
    })
}

/// `L_o` for one object. `k` is clamped to each region's size; an empty
/// outside region drops the second term, an empty box is an error.
pub fn object_energy(
    att: &AttentionMap,
    mask: &Mask,
    beta: f64,
    k: usize,
) -> Result<f64, GuidanceError> {
    let s = select(att, mask, k)?;
    let inside = s.inside.iter().map(|&i| s.in_values[i]).sum::<f64>() / s.k_in as f64;
    let outside = if s.k_out > 0 {
        s.outside.iter().map(|&i| s.out_values[i]).sum::<f64>() / s.k_out as f64
    } else {
        0.0
    };
    Ok(-beta * inside + outside)
}

/// `dL_o/dA` with the same selection (and tie-break) as [`object_energy`].
pub fn energy_grad_attention(
    att: &AttentionMap,
    mask: &Mask,
    beta: f64,
    k: usize,
) -> Result<Grid, GuidanceError> {
    let s = select(att, mask, k)?;
    let mut grad = Grid::zeros(mask.side);
    for &i in &s.inside {
        grad.data[i] += -beta * mask.value(i) / s.k_in as f64;
    }
    for &i in &s.outside {
        grad.data[i] += (1.0 - mask.value(i)) / s.k_out as f64;
    }
    Ok(grad)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectTerm {
    pub attention: AttentionMap,
    pub mask: Mask,
    pub beta: f64,
}

/// Attention, mask and scale for every object at one timestep.
#[derive(Debug, Clone, PartialEq)]
pub struct GuidanceProblem {
    pub terms: Vec<ObjectTerm>,
    pub k: TopK,
}

impl GuidanceProblem {
    /// `L = sum_o L_o`.
    pub fn energy(&self) -> Result<f64, GuidanceError> {
        let mut total = 0.0;
        for term in &self.terms {
            let k = self.k.resolve(&term.mask);
            total += object_energy(&term.attention, &term.mask, term.beta, k)?;
        }
        Ok(total)
    }

    pub fn gradients(&self) -> Result<Vec<Grid>, GuidanceError> {
        self.terms
            .iter()
            .map(|t| energy_grad_attention(&t.attention, &t.mask, t.beta, self.k.resolve(&t.mask)))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_mask(side: usize, inside: &[usize]) -> Mask {
        let mut cells = vec![false; side * side];
        for &i in inside {
            cells[i] = true;
        }
        Mask::from_cells(side, cells).unwrap()
    }

    #[test]
    fn full_canvas_box_is_all_ones() {
        let m = build_mask(BoundingBox::new(0, 0, 512, 512), Canvas::default(), 16).unwrap();
        assert!(m.cells().iter().all(|c| *c));
    }

    #[test]
    fn zero_resolution() {
        assert_eq!(
            build_mask(BoundingBox::new(0, 0, 5, 5), Canvas::default(), 0),
            Err(GuidanceError::ZeroResolution)
        );
    }

    #[test]
    fn topk_examples() {
        assert_eq!(topk_mean(&[4.0, 1.0, 3.0, 2.0], 2).unwrap(), 3.5);
        assert_eq!(topk_mean(&[0.25; 9], 4).unwrap(), 0.25);
        assert_eq!(topk_mean(&[4.0, 1.0, 3.0, 2.0], 4).unwrap(), 2.5);
        assert_eq!(topk_mean(&[1.0], 0), Err(GuidanceError::ZeroK));
        assert_eq!(
            topk_mean(&[1.0], 2),
            Err(GuidanceError::KExceedsSize { k: 2, size: 1 })
        );
    }

    #[test]
    fn ties_break_by_index() {
        assert_eq!(topk_indices(&[1.0, 2.0, 2.0, 0.0, 2.0], 2), vec![1, 2]);
    }

    #[test]
    fn perfect_placement_energy_is_minus_beta() {
        let mask = grid_mask(4, &[5, 6, 9, 10]);
        let att = AttentionMap::from_vec(
            4,
            mask.cells().iter().map(|c| if *c { 1.0 } else { 0.0 }).collect(),
        )
        .unwrap();
        assert_eq!(object_energy(&att, &mask, 1.3, 2).unwrap(), -1.3);
        let g = energy_grad_attention(&att, &mask, 1.3, 4).unwrap();
        // In-box cells carry -beta/k. The outside term is a four-way tie at
        // zero, so the lowest four indices (all outside the box) are selected
        // and carry 1/k.
        let mut expected = vec![0.0; 16];
        for i in [5, 6, 9, 10] {
            expected[i] = -1.3 / 4.0;
        }
        for e in expected.iter_mut().take(4) {
            *e = 0.25;
        }
        assert_eq!(g.as_slice(), expected.as_slice());
    }

    #[test]
    fn uniform_attention_energy_is_zero() {
        let mask = grid_mask(4, &[5, 6, 9, 10]);
        let att = AttentionMap::from_vec(4, vec![0.5; 16]).unwrap();
        assert_eq!(object_energy(&att, &mask, 1.0, 3).unwrap(), 0.0);
    }

    #[test]
    fn zero_beta_gradient_is_non_negative() {
        let mask = grid_mask(3, &[0, 1]);
        let att =
            AttentionMap::from_vec(3, vec![0.9, 0.1, 0.3, 0.4, 0.2, 0.8, 0.5, 0.6, 0.7]).unwrap();
        let g = energy_grad_attention(&att, &mask, 0.0, 2).unwrap();
        assert!(g.as_slice().iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn full_box_drops_outside_term() {
        let mask = grid_mask(2, &[0, 1, 2, 3]);
        let att = AttentionMap::from_vec(2, vec![0.25, 0.5, 0.75, 1.0]).unwrap();
        let e = object_energy(&att, &mask, 1.0, 8).unwrap();
        assert_eq!(e, -0.625);
    }

    #[test]
    fn empty_box_is_an_error() {
        let mask = grid_mask(2, &[]);
        let att = AttentionMap::from_vec(2, vec![0.1; 4]).unwrap();
        assert!(matches!(
            object_energy(&att, &mask, 1.0, 1),
            Err(GuidanceError::KExceedsSize { size: 0, .. })
        ));
    }

    #[test]
    fn invalid_attention_rejected() {
        assert_eq!(
            AttentionMap::from_vec(1, vec![-0.1]),
            Err(GuidanceError::InvalidAttention)
        );
        assert_eq!(
            AttentionMap::from_vec(1, vec![f64::NAN]),
            Err(GuidanceError::InvalidAttention)
        );
    }

    #[test]
    fn default_k_is_half_the_box() {
        let mask = grid_mask(4, &[0, 1, 2, 3, 4]);
        assert_eq!(TopK::default().resolve(&mask), 3);
        assert_eq!(TopK::Fixed(0).resolve(&mask), 1);
    }
}
