use serde::{Deserialize, Serialize};

use super::{perceive_bonds, BondRules, Molecule, Vocabulary};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    /// Offending atom; `None` for whole-molecule problems.
    pub atom: Option<usize>,
    pub reason: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.atom {
            Some(i) => write!(f, "atom {i}: {}", self.reason),
            None => f.write_str(&self.reason),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidityReport {
    pub valid: bool,
    pub violations: Vec<Violation>,
}

impl ValidityReport {
    fn from_violations(violations: Vec<Violation>) -> Self {
        Self {
            valid: violations.is_empty(),
            violations,
        }
    }
}

/// Valence, clash, emptiness and connectivity rules over the molecule's
/// bond list. Clashes are recomputed from coordinates.
pub fn check_validity(
    molecule: &Molecule,
    vocab: &Vocabulary,
    rules: &BondRules,
) -> Result<ValidityReport> {
    let n = molecule.atoms.len();
    let mut violations = Vec::new();
    if n == 0 {
        violations.push(Violation {
            atom: None,
            reason: "empty molecule".into(),
        });
        return Ok(ValidityReport::from_violations(violations));
    }

    let mut used = vec![0u32; n];
    for b in &molecule.bonds {
        used[b.i] += b.order;
        used[b.j] += b.order;
    }
    for (i, a) in molecule.atoms.iter().enumerate() {
        let el = vocab.get(a.element)?;
        if used[i] > el.max_valence {
            violations.push(Violation {
                atom: Some(i),
                reason: format!(
                    "{} uses valence {} > max {}",
                    el.symbol, used[i], el.max_valence
                ),
            });
        }
    }

    for (i, j) in perceive_bonds(&molecule.atoms, vocab, rules)?.clashes {
        violations.push(Violation {
            atom: Some(i),
            reason: format!("clash with atom {j}"),
        });
    }

    let mut dsu = DisjointSet::new(n);
    for b in &molecule.bonds {
        dsu.union(b.i, b.j);
    }
    let root = dsu.find(0);
    if let Some(first) = (1..n).find(|&i| dsu.find(i) != root) {
        violations.push(Violation {
            atom: Some(first),
            reason: "disconnected from atom 0".into(),
        });
    }

    Ok(ValidityReport::from_violations(violations))
}

struct DisjointSet {
    parent: Vec<usize>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}
