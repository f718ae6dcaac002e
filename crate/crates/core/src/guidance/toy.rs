use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{AttentionMap, Grid};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToyModelConfig {
    /// Attention grid side `R`.
    pub resolution: usize,
    pub latent_dim: usize,
    pub objects: usize,
    /// Standard deviation of the score weights.
    pub weight_scale: f64,
    pub seed: u64,
}

impl Default for ToyModelConfig {
    fn default() -> Self {
        Self {
            resolution: 16,
            latent_dim: 16,
            objects: 2,
            weight_scale: 1.0,
            seed: 0,
        }
    }
}

/// Stand-in for a denoiser's cross-attention: for object slot `o`,
/// `A_o = softmax(W_o z + b_o)` over the `R x R` cells.
#[derive(Debug, Clone)]
pub struct ToyAttentionModel {
    resolution: usize,
    latent_dim: usize,
    /// Per object, `cells x latent_dim` row-major.
    weights: Vec<Vec<f64>>,
    bias: Vec<Vec<f64>>,
}

impl ToyAttentionModel {
    pub fn seeded(cfg: &ToyModelConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let cells = cfg.resolution * cfg.resolution;
        let mut normal = |scale: f64| -> f64 {
            let v: f64 = StandardNormal.sample(&mut rng);
            v * scale
        };
        let mut weights = Vec::with_capacity(cfg.objects);
        let mut bias = Vec::with_capacity(cfg.objects);
        for _ in 0..cfg.objects {
            weights.push(
                (0..cells * cfg.latent_dim)
                    .map(|_| normal(cfg.weight_scale))
                    .collect(),
            );
            bias.push((0..cells).map(|_| normal(0.5)).collect());
        }
        Self {
            resolution: cfg.resolution,
            latent_dim: cfg.latent_dim,
            weights,
            bias,
        }
    }

    /// Standard normal latent from `seed`.
    pub fn random_latent(&self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..self.latent_dim)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect()
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn objects(&self) -> usize {
        self.weights.len()
    }

    fn cells(&self) -> usize {
        self.resolution * self.resolution
    }

    pub fn attention(&self, slot: usize, z: &[f64]) -> AttentionMap {
        let w = &self.weights[slot];
        let b = &self.bias[slot];
        let d = self.latent_dim;
        let scores: Vec<f64> = (0..self.cells())
            .map(|c| {
                let row = &w[c * d..(c + 1) * d];
                b[c] + row.iter().zip(z).map(|(wi, zi)| wi * zi).sum::<f64>()
            })
            .collect();
        let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exp: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
        let total: f64 = exp.iter().sum();
        let probs = exp.into_iter().map(|e| e / total).collect();
        AttentionMap(Grid {
            side: self.resolution,
            data: probs,
        })
    }

    /// Chains `dL/dA` for one slot back to `dL/dz` through the softmax
    /// Jacobian: `W^T (A * (g - <A, g>))`.
    pub fn pullback(&self, slot: usize, attention: &AttentionMap, grad_a: &Grid) -> Vec<f64> {
        let a = attention.values();
        let g = grad_a.as_slice();
        let dot: f64 = a.iter().zip(g).map(|(ai, gi)| ai * gi).sum();
        let d = self.latent_dim;
        let w = &self.weights[slot];
        let mut out = vec![0.0; d];
        for c in 0..self.cells() {
            let ds = a[c] * (g[c] - dot);
            if ds == 0.0 {
                continue;
            }
            let row = &w[c * d..(c + 1) * d];
            for (o, wi) in out.iter_mut().zip(row) {
                *o += wi * ds;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn attention_is_a_distribution() {
        let m = ToyAttentionModel::seeded(&ToyModelConfig::default());
        let z = m.random_latent(3);
        for slot in 0..m.objects() {
            let a = m.attention(slot, &z);
            let sum: f64 = a.values().iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
            assert!(a.values().iter().all(|v| *v > 0.0));
        }
    }

    #[test]
    fn pullback_matches_finite_differences() {
        let m = ToyAttentionModel::seeded(&ToyModelConfig {
            resolution: 4,
            latent_dim: 5,
            objects: 1,
            ..Default::default()
        });
        let z = m.random_latent(1);
        // Linear functional of A with fixed weights.
        let g = Grid {
            side: 4,
            data: (0..16).map(|i| (i as f64 * 0.37).sin()).collect(),
        };
        let f = |z: &[f64]| -> f64 {
            m.attention(0, z)
                .values()
                .iter()
                .zip(g.as_slice())
                .map(|(a, w)| a * w)
                .sum()
        };
        let analytic = m.pullback(0, &m.attention(0, &z), &g);
        let h = 1e-6;
        for i in 0..z.len() {
            let (mut zp, mut zm) = (z.clone(), z.clone());
            zp[i] += h;
            zm[i] -= h;
            let numeric = (f(&zp) - f(&zm)) / (2.0 * h);
            assert!((numeric - analytic[i]).abs() < 1e-7, "{numeric} vs {}", analytic[i]);
        }
    }
}
