//! Conditional elementwise-affine normalizing flows.
//!
//! Layer `i` maps `z -> s_i(c) ⊙ P_i(z) + b_i(c)` where `P_i` reverses the
//! dimension order for every layer after the first. When the reversals
//! do not cancel, the output is reversed once more so that dimension `d`
//! of the data always lines up with dimension `d` of the base sample. Scales come from
//! `softplus(raw) + SCALE_FLOOR` so each layer is invertible and the
//! Jacobian is a permuted diagonal: `log|det J| = sum ln s`.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::params::ParamSet;

pub const SCALE_FLOOR: f64 = 1e-4;

pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp()
    } else {
        x.exp().ln_1p()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Raw conditioner output giving scale `s` (`s > SCALE_FLOOR`).
pub fn raw_for_scale(s: f64) -> f64 {
    let y = s - SCALE_FLOOR;
    assert!(y > 0.0, "scale must exceed the floor");
    if y > 30.0 {
        y + (-(-y).exp()).ln_1p()
    } else {
        y.exp_m1().ln()
    }
}

/// Standard normal log-density.
pub fn base_log_prob(z: &[f64]) -> f64 {
    let sq: f64 = z.iter().map(|v| v * v).sum();
    -0.5 * z.len() as f64 * (2.0 * PI).ln() - 0.5 * sq
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct AffineOffsets {
    /// `dim x cond_dim` weights and `dim` bias for the raw scale.
    ws: usize,
    bs: usize,
    /// Same for the shift.
    wb: usize,
    bb: usize,
}

/// Parameter layout of a flow stack inside a [`ParamSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct FlowStack {
    dim: usize,
    cond_dim: usize,
    layers: Vec<AffineOffsets>,
}

impl FlowStack {
    /// Registers `<prefix>.layer<i>.*` sections.
    pub fn register(
        params: &mut ParamSet,
        prefix: &str,
        dim: usize,
        cond_dim: usize,
        layers: usize,
    ) -> Result<Self> {
        if layers < 1 || dim < 1 {
            return Err(Error::Config(format!(
                "flow {prefix} needs at least one layer and dimension"
            )));
        }
        let layers = (0..layers)
            .map(|i| AffineOffsets {
                ws: params.add(format!("{prefix}.layer{i}.scale_w"), &[dim, cond_dim]),
                bs: params.add(format!("{prefix}.layer{i}.scale_b"), &[dim]),
                wb: params.add(format!("{prefix}.layer{i}.shift_w"), &[dim, cond_dim]),
                bb: params.add(format!("{prefix}.layer{i}.shift_b"), &[dim]),
            })
            .collect();
        Ok(Self {
            dim,
            cond_dim,
            layers,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cond_dim(&self) -> usize {
        self.cond_dim
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// Conditioner weights uniform in [-scale, scale]; biases give s = 1,
    /// b = 0 at a zero conditioning vector.
    pub fn init<R: Rng + ?Sized>(&self, values: &mut [f64], rng: &mut R, scale: f64) {
        let n = self.dim * self.cond_dim;
        let raw_one = raw_for_scale(1.0);
        for lo in &self.layers {
            for off in [lo.ws, lo.wb] {
                for v in &mut values[off..off + n] {
                    *v = if scale > 0.0 {
                        rng.random_range(-scale..=scale)
                    } else {
                        0.0
                    };
                }
            }
            values[lo.bs..lo.bs + self.dim].fill(raw_one);
            values[lo.bb..lo.bb + self.dim].fill(0.0);
        }
    }

    /// Every layer becomes the identity map.
    pub fn set_identity(&self, values: &mut [f64]) {
        for layer in 0..self.depth() {
            self.set_layer(values, layer, &vec![1.0; self.dim], &vec![0.0; self.dim]);
        }
    }

    /// Zeroes the conditioner weights of `layer` and sets its biases so the
    /// layer applies exactly `scale` and `shift`.
    pub fn set_layer(&self, values: &mut [f64], layer: usize, scale: &[f64], shift: &[f64]) {
        let lo = self.layers[layer];
        let n = self.dim * self.cond_dim;
        values[lo.ws..lo.ws + n].fill(0.0);
        values[lo.wb..lo.wb + n].fill(0.0);
        for d in 0..self.dim {
            values[lo.bs + d] = raw_for_scale(scale[d]);
            values[lo.bb + d] = shift[d];
        }
    }

    pub fn shift_bias_index(&self, layer: usize, d: usize) -> usize {
        self.layers[layer].bb + d
    }

    fn check(&self, v: &[f64], cond: &[f64]) -> Result<()> {
        if v.len() != self.dim {
            return Err(Error::Shape {
                expected: self.dim,
                found: v.len(),
            });
        }
        if cond.len() != self.cond_dim {
            return Err(Error::Shape {
                expected: self.cond_dim,
                found: cond.len(),
            });
        }
        Ok(())
    }

    /// Whether an odd number of reversals precede the output.
    fn flips_output(&self) -> bool {
        self.depth() > 0 && (self.depth() - 1) % 2 == 1
    }

    fn unflip(&self, x: &[f64]) -> Vec<f64> {
        let mut v = x.to_vec();
        if self.flips_output() {
            v.reverse();
        }
        v
    }

    /// Raw scale pre-activation and shift of one layer.
    fn conditioner(&self, values: &[f64], layer: usize, cond: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let lo = self.layers[layer];
        let c = self.cond_dim;
        let mut raw = Vec::with_capacity(self.dim);
        let mut shift = Vec::with_capacity(self.dim);
        for d in 0..self.dim {
            let ws = &values[lo.ws + d * c..lo.ws + (d + 1) * c];
            let wb = &values[lo.wb + d * c..lo.wb + (d + 1) * c];
            raw.push(values[lo.bs + d] + ws.iter().zip(cond).map(|(w, x)| w * x).sum::<f64>());
            shift.push(values[lo.bb + d] + wb.iter().zip(cond).map(|(w, x)| w * x).sum::<f64>());
        }
        (raw, shift)
    }

    /// Per-layer scales and shifts for a conditioning vector.
    pub fn scales_and_shifts(&self, values: &[f64], cond: &[f64]) -> Vec<(Vec<f64>, Vec<f64>)> {
        (0..self.depth())
            .map(|i| {
                let (raw, shift) = self.conditioner(values, i, cond);
                (
                    raw.into_iter().map(|r| softplus(r) + SCALE_FLOOR).collect(),
                    shift,
                )
            })
            .collect()
    }

    /// Base sample to data space; returns `(x, log|det dx/dz|)`.
    pub fn forward(&self, values: &[f64], z: &[f64], cond: &[f64]) -> Result<(Vec<f64>, f64)> {
        self.check(z, cond)?;
        let mut x = z.to_vec();
        let mut logdet = 0.0;
        for (i, (s, b)) in self.scales_and_shifts(values, cond).into_iter().enumerate() {
            if i > 0 {
                x.reverse();
            }
            for d in 0..self.dim {
                x[d] = s[d] * x[d] + b[d];
                logdet += s[d].ln();
            }
        }
        if self.flips_output() {
            x.reverse();
        }
        Ok((x, logdet))
    }

    /// Data to base space; returns `(z, log|det dz/dx|)`.
    pub fn inverse(&self, values: &[f64], x: &[f64], cond: &[f64]) -> Result<(Vec<f64>, f64)> {
        self.check(x, cond)?;
        let mut z = self.unflip(x);
        let mut logdet = 0.0;
        let layers = self.scales_and_shifts(values, cond);
        for (i, (s, b)) in layers.into_iter().enumerate().rev() {
            for d in 0..self.dim {
                z[d] = (z[d] - b[d]) / s[d];
                logdet -= s[d].ln();
            }
            if i > 0 {
                z.reverse();
            }
        }
        Ok((z, logdet))
    }

    /// `log p(x | cond) = log N(z_0) + log|det dz_0/dx|`.
    pub fn log_prob(&self, values: &[f64], x: &[f64], cond: &[f64]) -> Result<f64> {
        let (z, logdet) = self.inverse(values, x, cond)?;
        Ok(base_log_prob(&z) + logdet)
    }

    /// Draws `z ~ N(0, I)` and pushes it forward; returns the sample and
    /// its log-density.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        values: &[f64],
        cond: &[f64],
        rng: &mut R,
    ) -> Result<(Vec<f64>, f64)> {
        let z = sample_base(self.dim, rng);
        let (x, logdet) = self.forward(values, &z, cond)?;
        Ok((x, base_log_prob(&z) - logdet))
    }

    /// Computes `log p(x | cond)` and adds `weight * d log p / d params` to
    /// `grad` and `weight * d log p / d cond` to `d_cond`.
    pub fn log_prob_backward(
        &self,
        values: &[f64],
        x: &[f64],
        cond: &[f64],
        weight: f64,
        grad: &mut [f64],
        d_cond: &mut [f64],
    ) -> Result<f64> {
        self.check(x, cond)?;
        let k = self.depth();
        let c = self.cond_dim;
        let mut raws = Vec::with_capacity(k);
        let mut scales = Vec::with_capacity(k);
        let mut shifts = Vec::with_capacity(k);
        for i in 0..k {
            let (raw, shift) = self.conditioner(values, i, cond);
            scales.push(
                raw.iter()
                    .map(|&r| softplus(r) + SCALE_FLOOR)
                    .collect::<Vec<_>>(),
            );
            raws.push(raw);
            shifts.push(shift);
        }
        // u[i] = (z_i - b_i) / s_i, the affine-inverted vector of layer i
        // before un-permuting.
        let mut us: Vec<Vec<f64>> = vec![Vec::new(); k];
        let mut z = self.unflip(x);
        let mut logdet = 0.0;
        for i in (0..k).rev() {
            for d in 0..self.dim {
                z[d] = (z[d] - shifts[i][d]) / scales[i][d];
                logdet -= scales[i][d].ln();
            }
            us[i] = z.clone();
            if i > 0 {
                z.reverse();
            }
        }
        let logp = base_log_prob(&z) + logdet;

        // d logp / d z_0 = -z_0, then walk the layers upward.
        let mut g: Vec<f64> = z.iter().map(|v| -v).collect();
        for i in 0..k {
            if i > 0 {
                g.reverse();
            }
            let lo = self.layers[i];
            for d in 0..self.dim {
                let s = scales[i][d];
                let u = us[i][d];
                let ds = -g[d] * u / s - 1.0 / s;
                let db = -g[d] / s;
                let draw = weight * ds * sigmoid(raws[i][d]);
                let dshift = weight * db;
                grad[lo.bs + d] += draw;
                grad[lo.bb + d] += dshift;
                for j in 0..c {
                    grad[lo.ws + d * c + j] += draw * cond[j];
                    grad[lo.wb + d * c + j] += dshift * cond[j];
                    d_cond[j] +=
                        draw * values[lo.ws + d * c + j] + dshift * values[lo.wb + d * c + j];
                }
                g[d] /= s;
            }
        }
        Ok(logp)
    }
}

pub fn sample_base<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<f64> {
    (0..dim).map(|_| rng.sample(StandardNormal)).collect()
}
