//! Maximum-likelihood training on autoregressive trajectories.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chem::{samples, Atom, BondRules, Molecule, Pocket, Vocabulary};
use crate::encoder::{Context, PreparedContext};
use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::model::{Model, StepTarget};
use crate::params::ParamSet;
use crate::pdb::{normalize_bfactors, ComplexEntry};

/// Steps evaluated per parallel work unit. Fixed so that gradient sums
/// are reduced in the same order on every machine.
const CHUNK: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Steps per update; 0 means the full dataset.
    pub batch_size: usize,
    pub seed: u64,
    /// Dequantization noise: one-hot + Uniform(0, alpha).
    pub dequant_alpha: f64,
    pub divergence_threshold: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            learning_rate: 1e-3,
            batch_size: 0,
            seed: 0,
            dequant_alpha: 0.25,
            divergence_threshold: 1e6,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be non-negative, got {}",
                self.learning_rate
            )));
        }
        if !(self.dequant_alpha > 0.0 && self.dequant_alpha <= 0.5) {
            return Err(Error::Config(format!(
                "dequantization alpha must be in (0, 0.5], got {}",
                self.dequant_alpha
            )));
        }
        Ok(())
    }
}

/// One factor of `p(M | P)`: the next atom given the context so far.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryStep {
    pub context: Context,
    /// Context index of the anchor atom.
    pub focal: usize,
    pub target_element: usize,
    /// Dequantized one-hot, width = vocabulary size.
    pub target_type: Vec<f64>,
    /// Target position minus focal position (Å).
    pub target_offset: Vec3,
}

/// Ligand atoms in generation order: the atom nearest the pocket centroid
/// first, then repeatedly the unplaced atom nearest to any placed atom.
pub fn generation_order(pocket: &Pocket, ligand: &Molecule) -> Vec<usize> {
    let n = ligand.len();
    if n == 0 {
        return Vec::new();
    }
    let centroid = pocket.centroid().unwrap_or_else(Vec3::zeros);
    let argmin = |cands: &mut dyn Iterator<Item = (usize, f64)>| {
        cands
            .fold(None, |best: Option<(usize, f64)>, (i, d)| match best {
                Some((_, bd)) if bd <= d => best,
                _ => Some((i, d)),
            })
            .map(|(i, _)| i)
            .expect("non-empty candidate set")
    };
    let first = argmin(
        &mut ligand
            .atoms
            .iter()
            .enumerate()
            .map(|(i, a)| (i, (a.position - centroid).norm())),
    );
    let mut order = vec![first];
    let mut placed = vec![false; n];
    placed[first] = true;
    while order.len() < n {
        let next = argmin(&mut (0..n).filter(|&j| !placed[j]).map(|j| {
            let d = order
                .iter()
                .map(|&p| (ligand.atoms[p].position - ligand.atoms[j].position).norm())
                .fold(f64::INFINITY, f64::min);
            (j, d)
        }));
        placed[next] = true;
        order.push(next);
    }
    order
}

/// Splits one complex into `n` trajectory steps (one per ligand atom).
pub fn sequentialize<R: Rng + ?Sized>(
    entry: &ComplexEntry,
    vocab_size: usize,
    alpha: f64,
    rng: &mut R,
) -> Result<Vec<TrajectoryStep>> {
    if entry.ligand.is_empty() {
        return Err(Error::Input(format!(
            "entry {} has an empty ligand",
            entry.entry_id
        )));
    }
    if entry.pocket.is_empty() {
        return Err(Error::Input(format!(
            "entry {} has an empty pocket",
            entry.entry_id
        )));
    }
    let bweights = normalize_bfactors(&entry.pocket)?;
    let order = generation_order(&entry.pocket, &entry.ligand);
    let mut placed: Vec<Atom> = Vec::with_capacity(order.len());
    let mut steps = Vec::with_capacity(order.len());
    for &idx in &order {
        let target = entry.ligand.atoms[idx];
        if target.element >= vocab_size {
            return Err(Error::Vocabulary(format!(
                "element index {} outside vocabulary of {vocab_size}",
                target.element
            )));
        }
        let context = Context::new(&entry.pocket, &bweights, &placed)?;
        let focal = context
            .atoms
            .iter()
            .enumerate()
            .map(|(i, a)| (i, (a.position - target.position).norm()))
            .fold(
                (0, f64::INFINITY),
                |best, (i, d)| if d < best.1 { (i, d) } else { best },
            )
            .0;
        let target_type = (0..vocab_size)
            .map(|i| {
                let hot = if i == target.element { 1.0 } else { 0.0 };
                hot + rng.random_range(0.0..alpha)
            })
            .collect();
        let target_offset = target.position - context.atoms[focal].position;
        steps.push(TrajectoryStep {
            context,
            focal,
            target_element: target.element,
            target_type,
            target_offset,
        });
        placed.push(target);
    }
    Ok(steps)
}

/// A trajectory step with its encoder input precomputed.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedStep {
    pub context: PreparedContext,
    pub focal: usize,
    pub element: usize,
    pub type_target: Vec<f64>,
    pub offset: [f64; 3],
}

impl PreparedStep {
    pub fn target(&self) -> StepTarget<'_> {
        StepTarget {
            context: &self.context,
            focal: self.focal,
            element: self.element,
            type_target: &self.type_target,
            offset: self.offset,
        }
    }
}

pub fn prepare_steps(model: &Model, steps: &[TrajectoryStep]) -> Result<Vec<PreparedStep>> {
    steps
        .par_iter()
        .map(|s| {
            if !s.target_offset.iter().all(|c| c.is_finite()) {
                return Err(Error::Input("non-finite target offset".into()));
            }
            Ok(PreparedStep {
                context: model.encoder().prepare(&s.context)?,
                focal: s.focal,
                element: s.target_element,
                type_target: s.target_type.clone(),
                offset: [s.target_offset.x, s.target_offset.y, s.target_offset.z],
            })
        })
        .collect()
}

/// Sequentializes and prepares a whole dataset. Dequantization noise is
/// drawn from `seed`.
pub fn build_steps(
    model: &Model,
    entries: &[ComplexEntry],
    alpha: f64,
    seed: u64,
) -> Result<Vec<PreparedStep>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut steps = Vec::new();
    for e in entries {
        steps.extend(sequentialize(e, model.vocab().len(), alpha, &mut rng)?);
    }
    prepare_steps(model, &steps)
}

fn check_finite(i: usize, logp: f64) -> Result<f64> {
    if logp.is_finite() {
        Ok(logp)
    } else {
        Err(Error::Numeric(format!(
            "non-finite log-likelihood at step {i}"
        )))
    }
}

/// Mean negative log-likelihood over `steps`.
pub fn nll_loss(model: &Model, values: &[f64], steps: &[PreparedStep]) -> Result<f64> {
    if steps.is_empty() {
        return Err(Error::Input("empty batch".into()));
    }
    let logps = steps
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            model
                .step_log_prob(values, &s.target())
                .and_then(|lp| check_finite(i, lp))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(-logps.iter().sum::<f64>() / steps.len() as f64)
}

/// Per-step log-likelihoods and the gradient of the mean NLL over the
/// steps selected by `batch`.
fn batch_loss_grad(
    model: &Model,
    values: &[f64],
    steps: &[PreparedStep],
    batch: &[usize],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let weight = -1.0 / batch.len() as f64;
    let partial = batch
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut grad = vec![0.0; values.len()];
            let mut logps = Vec::with_capacity(chunk.len());
            for &i in chunk {
                let lp = model.step_log_prob_grad(values, &steps[i].target(), weight, &mut grad)?;
                logps.push(check_finite(i, lp)?);
            }
            Ok((logps, grad))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut grad = vec![0.0; values.len()];
    let mut logps = Vec::with_capacity(batch.len());
    for (lp, g) in partial {
        logps.extend(lp);
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
    }
    Ok((logps, grad))
}

/// Mean NLL and its exact gradient with respect to every parameter.
pub fn loss_and_grad(
    model: &Model,
    values: &[f64],
    steps: &[PreparedStep],
) -> Result<(f64, Vec<f64>)> {
    if steps.is_empty() {
        return Err(Error::Input("empty batch".into()));
    }
    let all: Vec<usize> = (0..steps.len()).collect();
    let (logps, grad) = batch_loss_grad(model, values, steps, &all)?;
    if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
        return Err(Error::Numeric(format!(
            "non-finite gradient for parameter {i}"
        )));
    }
    Ok((-logps.iter().sum::<f64>() / steps.len() as f64, grad))
}

pub fn grad(model: &Model, values: &[f64], steps: &[PreparedStep]) -> Result<Vec<f64>> {
    loss_and_grad(model, values, steps).map(|(_, g)| g)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub params: ParamSet,
    /// Mean NLL of each epoch, measured on each batch before its update.
    pub history: Vec<f64>,
}

/// Plain SGD. Batches are reshuffled every epoch from `config.seed`.
pub fn train(
    model: &Model,
    mut params: ParamSet,
    steps: &[PreparedStep],
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if steps.is_empty() {
        return Err(Error::Input("no training steps".into()));
    }
    let n = steps.len();
    let batch = if config.batch_size == 0 || config.batch_size >= n {
        n
    } else {
        config.batch_size
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        if batch < n {
            order.shuffle(&mut rng);
        }
        let mut step_logp = vec![0.0; n];
        for idx in order.chunks(batch) {
            let (logps, grad) = batch_loss_grad(model, params.values(), steps, idx)?;
            for (&i, lp) in idx.iter().zip(logps) {
                step_logp[i] = lp;
            }
            if grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Numeric(format!(
                    "non-finite gradient in epoch {}",
                    epoch + 1
                )));
            }
            for (p, g) in params.values_mut().iter_mut().zip(&grad) {
                *p -= config.learning_rate * g;
            }
        }
        let loss = -step_logp.iter().sum::<f64>() / n as f64;
        if !loss.is_finite() || loss > config.divergence_threshold {
            return Err(Error::Diverged {
                epoch: epoch + 1,
                loss,
                history,
            });
        }
        history.push(loss);
    }
    Ok(TrainOutcome { params, history })
}

/// Toy complexes: C–C–O ligand in a five-atom pocket, every coordinate
/// perturbed by N(0, noise^2).
pub fn toy_dataset(
    vocab: &Vocabulary,
    copies: usize,
    noise: f64,
    seed: u64,
) -> Result<Vec<ComplexEntry>> {
    let (pocket, ligand) = toy_complex(vocab)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut jitter = |a: &Atom| {
        let d = Vec3::from_fn(|_, _| noise * rng.sample::<f64, _>(StandardNormal));
        Atom {
            element: a.element,
            position: a.position + d,
        }
    };
    let rules = BondRules::default();
    (0..copies)
        .map(|i| {
            let p: Vec<Atom> = pocket.atoms.iter().map(&mut jitter).collect();
            let l: Vec<Atom> = ligand.atoms.iter().map(&mut jitter).collect();
            Ok(ComplexEntry {
                entry_id: format!("toy{i:03}"),
                pocket: Pocket::new(p, pocket.bfactors.clone())?,
                ligand: Molecule::from_atoms(l, vocab, &rules)?,
            })
        })
        .collect()
}

/// The noise-free toy pocket and ligand.
pub fn toy_complex(vocab: &Vocabulary) -> Result<(Pocket, Molecule)> {
    let at = |s: &str, p: [f64; 3]| -> Result<Atom> { Ok(Atom::new(vocab.lookup(s)?, p)) };
    let pocket = Pocket::new(
        vec![
            at("N", [-1.5, -3.2, 0.5])?,
            at("O", [2.5, 4.5, 0.3])?,
            at("C", [0.8, 0.5, 3.6])?,
            at("C", [1.0, -0.2, -3.7])?,
            at("S", [4.8, -1.0, 0.2])?,
        ],
        vec![12.0, 20.0, 35.0, 18.0, 25.0],
    )?;
    let ligand = Molecule::from_atoms(samples::ethanol_heavy(vocab), vocab, &BondRules::default())?;
    Ok((pocket, ligand))
}
