//! Seeded guidance experiments on the toy attention model: descent
//! trajectories and finite-difference gradient checks.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::guidance::{
    build_mask, gradient_check, random_tie_free_instance, run_guidance_window, GuidanceError,
    GuidanceSchedule, GuidanceTrajectory, Latent, Target, ToyAttentionModel, ToyModelConfig, TopK,
};
use crate::layout::{BoundingBox, Canvas};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SandboxConfig {
    pub model: ToyModelConfig,
    pub k: TopK,
    pub schedule: GuidanceSchedule,
    /// Descent trials, seeded `0..seeds`.
    pub seeds: u64,
    pub gradient_instances: u64,
    pub fd_step: f64,
    pub fd_tolerance: f64,
}

impl Default for SandboxConfig {
    fn default() -> Self {
        Self {
            model: ToyModelConfig::default(),
            k: TopK::default(),
            schedule: GuidanceSchedule {
                t_start: 20,
                t_end: 1,
                ..GuidanceSchedule::default()
            },
            seeds: 50,
            gradient_instances: 100,
            fd_step: 1e-5,
            fd_tolerance: 1e-4,
        }
    }
}

/// One trial's fixed inputs: model, starting latent and per-object boxes.
#[derive(Debug, Clone)]
pub struct Trial {
    pub model: ToyAttentionModel,
    pub z: Latent,
    pub targets: Vec<Target>,
}

/// Seeded model, latent and one random box per object slot.
pub fn trial(cfg: &SandboxConfig, seed: u64) -> Result<Trial, GuidanceError> {
    let model = ToyAttentionModel::seeded(&ToyModelConfig {
        seed: cfg.model.seed.wrapping_add(seed),
        ..cfg.model.clone()
    });
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_b0c5);
    let canvas = Canvas::default();
    let mut targets = Vec::with_capacity(model.objects());
    for slot in 0..model.objects() {
        let mask = loop {
            let w = rng.random_range(canvas.width / 8..=canvas.width / 2);
            let h = rng.random_range(canvas.height / 8..=canvas.height / 2);
            let x = rng.random_range(0..=canvas.width - w);
            let y = rng.random_range(0..=canvas.height - h);
            let m = build_mask(BoundingBox::new(x, y, w, h), canvas, model.resolution())?;
            if m.inside_count() > 0 {
                break m;
            }
        };
        targets.push(Target {
            slot,
            mask,
            beta: cfg.schedule.beta_init,
        });
    }
    let z = Latent {
        values: model.random_latent(seed),
        timestep: cfg.schedule.t_start,
    };
    Ok(Trial { model, z, targets })
}

pub fn run_trial(cfg: &SandboxConfig, t: &Trial) -> Result<GuidanceTrajectory, GuidanceError> {
    run_guidance_window(
        t.z.clone(),
        &t.model,
        |_| t.targets.clone(),
        cfg.k,
        &cfg.schedule,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SandboxReport {
    pub trials: usize,
    pub non_increasing: usize,
    pub gradient_instances: usize,
    pub gradient_passed: usize,
    pub worst_rel_error: f64,
}

impl SandboxReport {
    pub fn descent_rate(&self) -> f64 {
        ratio(self.non_increasing, self.trials)
    }

    pub fn gradient_pass_rate(&self) -> f64 {
        ratio(self.gradient_passed, self.gradient_instances)
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Runs every trial and gradient instance. With `out`, writes
/// `trajectories.csv` (`seed,step,timestep,energy`) and `gradient_check.csv`
/// (`instance,cells,k,max_rel_error,passed`).
pub fn run_sandbox(
    cfg: &SandboxConfig,
    out: Option<&Path>,
) -> Result<SandboxReport, crate::Error> {
    cfg.schedule.validate()?;
    let mut traj_csv = String::from("seed,step,timestep,energy\n");
    let mut non_increasing = 0;
    for seed in 0..cfg.seeds {
        let t = trial(cfg, seed)?;
        let traj = run_trial(cfg, &t)?;
        if traj.is_non_increasing() {
            non_increasing += 1;
        }
        for (step, (energy, latent)) in traj.energies().iter().zip(&traj.latents).enumerate() {
            let _ = writeln!(traj_csv, "{seed},{step},{},{energy:.12e}", latent.timestep);
        }
    }

    let mut grad_csv = String::from("instance,cells,k,max_rel_error,passed\n");
    let mut passed = 0;
    let mut worst: f64 = 0.0;
    for i in 0..cfg.gradient_instances {
        let (term, k) = random_tie_free_instance(i);
        let r = gradient_check(&term, k, cfg.fd_step)?;
        let ok = r.passes(cfg.fd_tolerance);
        passed += usize::from(ok);
        worst = worst.max(r.max_rel_error);
        let _ = writeln!(grad_csv, "{i},{},{k},{:.6e},{ok}", r.cells, r.max_rel_error);
    }

    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("trajectories.csv"), traj_csv)?;
        std::fs::write(dir.join("gradient_check.csv"), grad_csv)?;
    }
    Ok(SandboxReport {
        trials: cfg.seeds as usize,
        non_increasing,
        gradient_instances: cfg.gradient_instances as usize,
        gradient_passed: passed,
        worst_rel_error: worst,
    })
}
