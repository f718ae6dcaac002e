use serde::{Deserialize, Serialize};

use super::{
    build_mask, energy_grad_attention, object_energy, GuidanceError, Mask, ToyAttentionModel, TopK,
};
use crate::layout::{interpolate_layout, StructuredDesign, BETA_INIT, BETA_STEP};

/// Toy latent `z_t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Latent {
    pub values: Vec<f64>,
    pub timestep: u32,
}

/// Box mask and scale for one model slot.
#[derive(Debug, Clone, PartialEq)]
pub struct Target {
    pub slot: usize,
    pub mask: Mask,
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GuidanceSchedule {
    /// Step size, constant over the window.
    pub alpha: f64,
    /// First guided timestep `T`.
    pub t_start: u32,
    /// Last guided timestep (inclusive).
    pub t_end: u32,
    pub beta_init: f64,
    pub beta_step: f64,
}

impl Default for GuidanceSchedule {
    /// 50 denoising steps, guidance over the first half.
    fn default() -> Self {
        Self {
            alpha: 1e-2,
            t_start: 50,
            t_end: 26,
            beta_init: BETA_INIT,
            beta_step: BETA_STEP,
        }
    }
}

impl GuidanceSchedule {
    pub fn validate(&self) -> Result<(), GuidanceError> {
        if self.t_end > self.t_start {
            return Err(GuidanceError::InvalidSchedule(format!(
                "t_end {} is after t_start {}",
                self.t_end, self.t_start
            )));
        }
        // alpha = 0 is allowed and leaves the latent untouched.
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(GuidanceError::InvalidSchedule("alpha must be >= 0".into()));
        }
        if self.beta_step.is_nan() || self.beta_step <= 0.0 {
            return Err(GuidanceError::InvalidSchedule("beta_step must be > 0".into()));
        }
        Ok(())
    }

    /// `T, T-1, ..., t_end`.
    pub fn timesteps(&self) -> impl Iterator<Item = u32> {
        (self.t_end..=self.t_start).rev()
    }

    pub fn steps(&self) -> usize {
        (self.t_start - self.t_end + 1) as usize
    }
}

fn energy_and_grad(
    model: &ToyAttentionModel,
    z: &[f64],
    targets: &[Target],
    k: TopK,
    with_grad: bool,
) -> Result<(f64, Vec<f64>), GuidanceError> {
    let mut energy = 0.0;
    let mut grad = vec![0.0; z.len()];
    for t in targets {
        let att = model.attention(t.slot, z);
        let kk = k.resolve(&t.mask);
        energy += object_energy(&att, &t.mask, t.beta, kk)?;
        if with_grad {
            let ga = energy_grad_attention(&att, &t.mask, t.beta, kk)?;
            for (g, d) in grad.iter_mut().zip(model.pullback(t.slot, &att, &ga)) {
                *g += d;
            }
        }
    }
    if !energy.is_finite() {
        return Err(GuidanceError::NonFinite("energy"));
    }
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(GuidanceError::NonFinite("gradient"));
    }
    Ok((energy, grad))
}

/// `L(z)` under the model's attention.
pub fn energy_at(
    model: &ToyAttentionModel,
    z: &[f64],
    targets: &[Target],
    k: TopK,
) -> Result<f64, GuidanceError> {
    energy_and_grad(model, z, targets, k, false).map(|(e, _)| e)
}

/// One update `z' = z - alpha * dL/dz`.
pub fn latent_step(
    z: &Latent,
    model: &ToyAttentionModel,
    targets: &[Target],
    k: TopK,
    alpha: f64,
) -> Result<Latent, GuidanceError> {
    let (_, grad) = energy_and_grad(model, &z.values, targets, k, true)?;
    let values: Vec<f64> = z
        .values
        .iter()
        .zip(&grad)
        .map(|(zi, gi)| zi - alpha * gi)
        .collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(GuidanceError::NonFinite("latent"));
    }
    Ok(Latent {
        values,
        timestep: z.timestep,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub timestep: u32,
    pub energy_before: f64,
    pub energy_after: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuidanceTrajectory {
    /// `z_T` followed by the latent after each guided step.
    pub latents: Vec<Latent>,
    pub steps: Vec<StepRecord>,
}

impl GuidanceTrajectory {
    /// Energy before the first step, then after every step. Only comparable
    /// across steps when the targets do not change over the window.
    pub fn energies(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.steps.len() + 1);
        if let Some(first) = self.steps.first() {
            out.push(first.energy_before);
        }
        out.extend(self.steps.iter().map(|s| s.energy_after));
        out
    }

    pub fn is_non_increasing(&self) -> bool {
        self.steps.iter().all(|s| s.energy_after <= s.energy_before)
            && self.energies().windows(2).all(|w| w[1] <= w[0])
    }

    pub fn final_latent(&self) -> &Latent {
        self.latents.last().expect("trajectory holds z_T")
    }
}

/// Applies [`latent_step`] at each timestep `T..=t_end` of the schedule,
/// with the targets for that timestep.
pub fn run_guidance_window(
    z_start: Latent,
    model: &ToyAttentionModel,
    targets_at: impl Fn(u32) -> Vec<Target>,
    k: TopK,
    schedule: &GuidanceSchedule,
) -> Result<GuidanceTrajectory, GuidanceError> {
    schedule.validate()?;
    let mut latents = Vec::with_capacity(schedule.steps() + 1);
    let mut steps = Vec::with_capacity(schedule.steps());
    let mut z = Latent {
        timestep: schedule.t_start,
        ..z_start
    };
    latents.push(z.clone());
    for t in schedule.timesteps() {
        let targets = targets_at(t);
        let before = energy_at(model, &z.values, &targets, k)?;
        let mut next = latent_step(&z, model, &targets, k, schedule.alpha)?;
        let after = energy_at(model, &next.values, &targets, k)?;
        next.timestep = t.saturating_sub(1);
        steps.push(StepRecord {
            timestep: t,
            energy_before: before,
            energy_after: after,
        });
        latents.push(next.clone());
        z = next;
    }
    Ok(GuidanceTrajectory { latents, steps })
}

/// Targets for video frame `frame` of a design: one per object present in
/// that frame, slot = position of the id in `design.object_ids()`.
pub fn targets_from_design(
    design: &StructuredDesign,
    frame: u32,
    resolution: usize,
) -> Result<Vec<Target>, GuidanceError> {
    let ids = design.object_ids();
    let objects = interpolate_layout(design, frame)
        .map_err(|e| GuidanceError::InvalidSchedule(e.to_string()))?;
    let mut targets = Vec::with_capacity(objects.len());
    for obj in objects {
        let slot = ids.iter().position(|&id| id == obj.id).expect("id from design");
        targets.push(Target {
            slot,
            mask: build_mask(obj.bbox, design.canvas, resolution)?,
            beta: design.scale(obj.id),
        });
    }
    Ok(targets)
}
