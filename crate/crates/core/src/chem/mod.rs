//! Chemistry primitives: element table, atoms, molecules, pockets, bond
//! perception and validity rules.

mod bonds;
mod element;
pub mod samples;
mod validity;
pub mod xyz;

pub use bonds::{infer_bonds, open_valence, open_valences, perceive_bonds, BondRules, Perception};
pub use element::{max_valence, ElementKind, Vocabulary};
pub use validity::{check_validity, ValidityReport, Violation};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    /// Index into the [`Vocabulary`].
    pub element: usize,
    /// Cartesian position in Å.
    pub position: Vec3,
}

impl Atom {
    pub fn new(element: usize, position: [f64; 3]) -> Self {
        Self {
            element,
            position: Vec3::from(position),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|c| c.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Bond {
    pub i: usize,
    pub j: usize,
    pub order: u32,
}

impl Bond {
    /// Normalizes the pair so that `i < j`.
    pub fn new(a: usize, b: usize, order: u32) -> Self {
        Self {
            i: a.min(b),
            j: a.max(b),
            order,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Molecule {
    pub atoms: Vec<Atom>,
    pub bonds: Vec<Bond>,
}

impl Molecule {
    /// Checks bond indices, self-bonds and duplicates.
    pub fn new(atoms: Vec<Atom>, bonds: Vec<Bond>) -> Result<Self> {
        let n = atoms.len();
        let mut seen = std::collections::HashSet::new();
        for b in &bonds {
            if b.i >= b.j {
                return Err(Error::Input(format!(
                    "bond ({}, {}) must satisfy i < j",
                    b.i, b.j
                )));
            }
            if b.j >= n {
                return Err(Error::Index { index: b.j, len: n });
            }
            if !seen.insert((b.i, b.j)) {
                return Err(Error::Input(format!("duplicate bond ({}, {})", b.i, b.j)));
            }
        }
        if let Some(a) = atoms.iter().find(|a| !a.is_finite()) {
            return Err(Error::Input(format!(
                "non-finite coordinate {:?}",
                a.position
            )));
        }
        Ok(Self { atoms, bonds })
    }

    /// Builds a molecule with bonds perceived from distances. Clashing
    /// pairs are left unbonded; [`check_validity`] reports them.
    pub fn from_atoms(atoms: Vec<Atom>, vocab: &Vocabulary, rules: &BondRules) -> Result<Self> {
        if atoms.is_empty() {
            return Ok(Self::default());
        }
        let bonds = perceive_bonds(&atoms, vocab, rules)?.bonds;
        Ok(Self { atoms, bonds })
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn positions(&self) -> impl Iterator<Item = &Vec3> {
        self.atoms.iter().map(|a| &a.position)
    }
}

/// Protein atoms around a binding site plus their crystallographic
/// B-factors (Å²).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Pocket {
    pub atoms: Vec<Atom>,
    pub bfactors: Vec<f64>,
}

impl Pocket {
    pub fn new(atoms: Vec<Atom>, bfactors: Vec<f64>) -> Result<Self> {
        if atoms.len() != bfactors.len() {
            return Err(Error::Size {
                expected: atoms.len(),
                found: bfactors.len(),
            });
        }
        Ok(Self { atoms, bfactors })
    }

    /// Pocket with every B-factor set to zero.
    pub fn from_atoms(atoms: Vec<Atom>) -> Self {
        let bfactors = vec![0.0; atoms.len()];
        Self { atoms, bfactors }
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn centroid(&self) -> Option<Vec3> {
        if self.atoms.is_empty() {
            return None;
        }
        let sum = self
            .atoms
            .iter()
            .fold(Vec3::zeros(), |acc, a| acc + a.position);
        Some(sum / self.atoms.len() as f64)
    }
}
