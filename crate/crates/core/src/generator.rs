//! Autoregressive ligand generation inside a fixed pocket.
//!
//! Each step anchors on a focal atom, samples an element from the type
//! flow, samples a focal-relative offset from the coordinate flow, and
//! appends the atom to the context.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::chem::{open_valences, Atom, BondRules, Molecule, Pocket, Vocabulary};
use crate::encoder::{aggregate_readout, Context};
use crate::error::{Error, Result};
use crate::flow::sample_base;
use crate::geometry::Vec3;
use crate::model::Model;
use crate::pdb::normalize_bfactors;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FocalRule {
    /// Placed atom with open valence nearest the pocket centroid.
    NearestCentroid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub max_atoms: usize,
    pub focal_rule: FocalRule,
    /// Reject placements that over-bond an atom or leave the new atom
    /// unbonded to its ligand focal, and keep monovalent atoms from
    /// closing the molecule early.
    pub valence_constrained: bool,
    /// Extra draws after a rejected placement before the step gives up.
    pub max_resample: usize,
    pub bond_rules: BondRules,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            max_atoms: 24,
            focal_rule: FocalRule::NearestCentroid,
            valence_constrained: true,
            max_resample: 10,
            bond_rules: BondRules::default(),
        }
    }
}

/// `C(t)`: the pocket plus the atoms placed so far.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerationState {
    pub pocket: Pocket,
    bweights: Vec<f64>,
    centroid: Vec3,
    pub placed: Molecule,
    /// Open valence per placed atom, consistent with `placed.bonds`.
    pub open_valence: Vec<i64>,
}

impl GenerationState {
    pub fn new(pocket: Pocket) -> Result<Self> {
        let centroid = pocket
            .centroid()
            .ok_or_else(|| Error::Input("cannot generate in an empty pocket".into()))?;
        let bweights = normalize_bfactors(&pocket)?;
        Ok(Self {
            pocket,
            bweights,
            centroid,
            placed: Molecule::default(),
            open_valence: Vec::new(),
        })
    }

    /// Number of placed atoms.
    pub fn t(&self) -> usize {
        self.placed.len()
    }

    pub fn context(&self) -> Result<Context> {
        Context::new(&self.pocket, &self.bweights, &self.placed.atoms)
    }

    pub fn context_len(&self) -> usize {
        self.pocket.len() + self.placed.len()
    }

    /// Position of a context atom (pocket first, then placed atoms).
    pub fn position(&self, context_index: usize) -> Vec3 {
        let m = self.pocket.len();
        if context_index < m {
            self.pocket.atoms[context_index].position
        } else {
            self.placed.atoms[context_index - m].position
        }
    }

    fn element(&self, context_index: usize) -> usize {
        let m = self.pocket.len();
        if context_index < m {
            self.pocket.atoms[context_index].element
        } else {
            self.placed.atoms[context_index - m].element
        }
    }

    /// Appends an atom and refreshes bonds and open valences.
    pub fn push(&mut self, atom: Atom, vocab: &Vocabulary, rules: &BondRules) -> Result<()> {
        let mut atoms = std::mem::take(&mut self.placed.atoms);
        atoms.push(atom);
        self.placed = Molecule::from_atoms(atoms, vocab, rules)?;
        self.open_valence = open_valences(&self.placed, vocab)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepOutcome {
    Placed,
    Finished,
}

/// Context index of the next anchor, or `None` to stop.
pub fn select_focal(state: &GenerationState) -> Option<usize> {
    let m = state.pocket.len();
    let nearest = |cands: &mut dyn Iterator<Item = (usize, Vec3)>| {
        cands
            .map(|(i, p)| (i, (p - state.centroid).norm()))
            .fold(None, |best: Option<(usize, f64)>, (i, d)| match best {
                Some((_, bd)) if bd <= d => best,
                _ => Some((i, d)),
            })
            .map(|(i, _)| i)
    };
    if state.t() == 0 {
        nearest(&mut state.pocket.atoms.iter().map(|a| a.position).enumerate())
    } else {
        nearest(
            &mut state
                .placed
                .atoms
                .iter()
                .enumerate()
                .filter(|(i, _)| state.open_valence[*i] > 0)
                .map(|(i, a)| (m + i, a.position)),
        )
    }
}

/// Sampler bound to one model and parameter vector.
#[derive(Debug, Clone, Copy)]
pub struct Generator<'a> {
    pub model: &'a Model,
    pub values: &'a [f64],
    pub config: &'a GenConfig,
}

impl<'a> Generator<'a> {
    pub fn new(model: &'a Model, values: &'a [f64], config: &'a GenConfig) -> Self {
        Self {
            model,
            values,
            config,
        }
    }

    fn vocab(&self) -> &Vocabulary {
        self.model.vocab()
    }

    /// Readout of the encoded context at `focal`.
    pub fn condition(&self, state: &GenerationState, focal: usize) -> Result<Vec<f64>> {
        let prep = self.model.encoder().prepare(&state.context()?)?;
        let emb = self.model.encoder().forward(self.values, &prep);
        aggregate_readout(&emb, focal)
    }

    /// Elements allowed at this step.
    pub fn type_mask(&self, state: &GenerationState) -> Vec<bool> {
        let v = self.vocab();
        let mut mask = vec![true; v.len()];
        if self.config.valence_constrained
            && state.t() >= 1
            && state.t() + 1 < self.config.max_atoms
        {
            let total_open: i64 = state.open_valence.iter().filter(|o| **o > 0).sum();
            if total_open == 1 {
                for (allowed, el) in mask.iter_mut().zip(v.elements()) {
                    *allowed = el.max_valence > 1;
                }
                if !mask.iter().any(|&a| a) {
                    mask.fill(true);
                }
            }
        }
        mask
    }

    /// `a_t = argmax g_a(C(t-1); z_a)` over allowed elements.
    pub fn generate_type<R: Rng + ?Sized>(
        &self,
        state: &GenerationState,
        cond: &[f64],
        rng: &mut R,
    ) -> Result<usize> {
        let flow = self.model.type_flow();
        let z = sample_base(flow.dim(), rng);
        let (x, _) = flow.forward(self.values, &z, cond)?;
        let mask = self.type_mask(state);
        Ok(decode_type(&x, &mask))
    }

    /// `r_t = r_focal + g_r(C(t-1), a_t; z_r)`.
    pub fn generate_coord<R: Rng + ?Sized>(
        &self,
        state: &GenerationState,
        focal: usize,
        cond: &[f64],
        element: usize,
        rng: &mut R,
    ) -> Result<Vec3> {
        let flow = self.model.coord_flow();
        let z = sample_base(3, rng);
        let cc = self.model.coord_condition(cond, element);
        let (offset, _) = flow.forward(self.values, &z, &cc)?;
        Ok(state.position(focal) + Vec3::new(offset[0], offset[1], offset[2]))
    }

    /// Whether `atom` can join the context anchored at `focal`.
    pub fn acceptable(&self, state: &GenerationState, focal: usize, atom: &Atom) -> Result<bool> {
        let v = self.vocab();
        let rules = &self.config.bond_rules;
        let r_new = v.radius(atom.element)?;
        for i in 0..state.context_len() {
            let d = (state.position(i) - atom.position).norm();
            if rules.is_clash(d, r_new + v.radius(state.element(i))?) {
                return Ok(false);
            }
        }
        if !self.config.valence_constrained {
            return Ok(true);
        }
        let m = state.pocket.len();
        let mut partners = Vec::new();
        for (i, a) in state.placed.atoms.iter().enumerate() {
            let d = (a.position - atom.position).norm();
            let (lo, hi) = rules.bond_window(r_new + v.radius(a.element)?);
            if d >= lo && d <= hi {
                partners.push(i);
            }
        }
        if partners.len() as u32 > v.max_valence(atom.element)? {
            return Ok(false);
        }
        if partners.iter().any(|&i| state.open_valence[i] < 1) {
            return Ok(false);
        }
        if focal >= m && !partners.contains(&(focal - m)) {
            return Ok(false);
        }
        Ok(true)
    }

    /// One autoregressive step: focal, type, coordinate, context update.
    pub fn step<R: Rng + ?Sized>(
        &self,
        state: &mut GenerationState,
        rng: &mut R,
    ) -> Result<StepOutcome> {
        if state.t() >= self.config.max_atoms {
            return Ok(StepOutcome::Finished);
        }
        let Some(focal) = select_focal(state) else {
            return Ok(StepOutcome::Finished);
        };
        let cond = self.condition(state, focal)?;
        for _ in 0..=self.config.max_resample {
            let element = self.generate_type(state, &cond, rng)?;
            let position = self.generate_coord(state, focal, &cond, element, rng)?;
            let atom = Atom { element, position };
            if !atom.is_finite() {
                return Err(Error::Numeric("generated a non-finite coordinate".into()));
            }
            if self.acceptable(state, focal, &atom)? {
                state.push(atom, self.vocab(), &self.config.bond_rules)?;
                return Ok(StepOutcome::Placed);
            }
        }
        Ok(StepOutcome::Finished)
    }

    pub fn generate_ligand<R: Rng + ?Sized>(
        &self,
        pocket: &Pocket,
        rng: &mut R,
    ) -> Result<Molecule> {
        let mut state = GenerationState::new(pocket.clone())?;
        while self.step(&mut state, rng)? == StepOutcome::Placed {}
        Ok(state.placed)
    }
}

/// Index of the largest allowed component.
pub fn decode_type(x: &[f64], allowed: &[bool]) -> usize {
    let mut best = None;
    for (i, (&v, &ok)) in x.iter().zip(allowed).enumerate() {
        if ok && best.is_none_or(|(_, bv)| v > bv) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i).unwrap_or(0)
}
