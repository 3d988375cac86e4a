use serde::{Deserialize, Serialize};

use super::{Atom, Bond, Molecule, Vocabulary};
use crate::error::{Error, Result};

/// Distance windows for covalent bond perception.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BondRules {
    /// Slack added to the covalent radius sum (Å).
    pub tolerance: f64,
    /// Pairs closer than `clash_factor * (r_i + r_j)` clash.
    pub clash_factor: f64,
}

impl Default for BondRules {
    fn default() -> Self {
        Self {
            tolerance: 0.45,
            clash_factor: 0.4,
        }
    }
}

impl BondRules {
    pub fn bond_window(&self, radius_sum: f64) -> (f64, f64) {
        (self.clash_factor * radius_sum, radius_sum + self.tolerance)
    }

    pub fn is_clash(&self, distance: f64, radius_sum: f64) -> bool {
        distance < self.clash_factor * radius_sum
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Perception {
    pub bonds: Vec<Bond>,
    pub clashes: Vec<(usize, usize)>,
}

/// Classifies every pair as bonded, clashing or neither.
pub fn perceive_bonds(atoms: &[Atom], vocab: &Vocabulary, rules: &BondRules) -> Result<Perception> {
    let radii = atoms
        .iter()
        .map(|a| vocab.radius(a.element))
        .collect::<Result<Vec<_>>>()?;
    let mut out = Perception::default();
    for i in 0..atoms.len() {
        for j in (i + 1)..atoms.len() {
            let d = (atoms[i].position - atoms[j].position).norm();
            let sum = radii[i] + radii[j];
            let (lo, hi) = rules.bond_window(sum);
            if d < lo {
                out.clashes.push((i, j));
            } else if d <= hi {
                out.bonds.push(Bond::new(i, j, 1));
            }
        }
    }
    Ok(out)
}

/// Single bonds for every pair inside the covalent window. Any clashing
/// pair is an error.
pub fn infer_bonds(atoms: &[Atom], vocab: &Vocabulary, rules: &BondRules) -> Result<Vec<Bond>> {
    if atoms.is_empty() {
        return Err(Error::Input(
            "bond inference needs at least one atom".into(),
        ));
    }
    if let Some(a) = atoms.iter().find(|a| !a.is_finite()) {
        return Err(Error::Input(format!(
            "non-finite coordinate {:?}",
            a.position
        )));
    }
    let p = perceive_bonds(atoms, vocab, rules)?;
    if !p.clashes.is_empty() {
        return Err(Error::Clash { pairs: p.clashes });
    }
    Ok(p.bonds)
}

/// `max_valence - sum of incident bond orders`; negative when over-bonded.
pub fn open_valence(molecule: &Molecule, vocab: &Vocabulary, atom: usize) -> Result<i64> {
    let a = molecule.atoms.get(atom).ok_or(Error::Index {
        index: atom,
        len: molecule.atoms.len(),
    })?;
    let used: i64 = molecule
        .bonds
        .iter()
        .filter(|b| b.i == atom || b.j == atom)
        .map(|b| b.order as i64)
        .sum();
    Ok(vocab.max_valence(a.element)? as i64 - used)
}

/// Open valence of every atom in one pass.
pub fn open_valences(molecule: &Molecule, vocab: &Vocabulary) -> Result<Vec<i64>> {
    let mut open = molecule
        .atoms
        .iter()
        .map(|a| vocab.max_valence(a.element).map(|v| v as i64))
        .collect::<Result<Vec<_>>>()?;
    for b in &molecule.bonds {
        open[b.i] -= b.order as i64;
        open[b.j] -= b.order as i64;
    }
    Ok(open)
}
