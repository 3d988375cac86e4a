use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{RecordKind, StructureRecord};
use crate::chem::{Atom, BondRules, Molecule, Pocket, Vocabulary};
use crate::error::{Error, Result};

pub const DEFAULT_POCKET_CUTOFF: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexEntry {
    pub entry_id: String,
    pub pocket: Pocket,
    pub ligand: Molecule,
}

fn to_atom(r: &StructureRecord, vocab: &Vocabulary) -> Result<Atom> {
    Ok(Atom::new(vocab.lookup(&r.element)?, r.position))
}

/// Splits a complex into the named ligand and the protein atoms within
/// `cutoff` Å of it.
///
/// Water is never a ligand. When the residue name occurs several times,
/// the instance with the smallest (chain, residue number) is used. Pocket
/// atoms whose element is outside the vocabulary (metals, selenium) are
/// skipped; ligand atoms must all be in the vocabulary.
pub fn split_pocket_ligand(
    entry_id: &str,
    records: &[StructureRecord],
    ligand_residue: &str,
    cutoff: f64,
    vocab: &Vocabulary,
) -> Result<ComplexEntry> {
    if cutoff.is_nan() || cutoff <= 0.0 {
        return Err(Error::Input(format!(
            "pocket cutoff must be positive, got {cutoff}"
        )));
    }
    let wanted = ligand_residue.trim();
    let is_ligand = |r: &StructureRecord| {
        r.kind == RecordKind::Hetatm && r.residue_name == wanted && r.residue_name != "HOH"
    };
    let instance = records
        .iter()
        .filter(|r| is_ligand(r))
        .map(|r| (r.chain, r.residue_seq))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .next()
        .ok_or_else(|| {
            Error::Lookup(format!("ligand residue {wanted:?} not found in {entry_id}"))
        })?;

    let ligand_atoms = records
        .iter()
        .filter(|r| is_ligand(r) && (r.chain, r.residue_seq) == instance)
        .map(|r| to_atom(r, vocab))
        .collect::<Result<Vec<_>>>()?;

    let mut pocket_atoms = Vec::new();
    let mut bfactors = Vec::new();
    for r in records.iter().filter(|r| r.kind == RecordKind::Atom) {
        let Ok(el) = vocab.lookup(&r.element) else {
            continue;
        };
        let atom = Atom::new(el, r.position);
        let near = ligand_atoms
            .iter()
            .any(|l| (l.position - atom.position).norm() <= cutoff);
        if near {
            pocket_atoms.push(atom);
            bfactors.push(r.bfactor);
        }
    }
    if pocket_atoms.is_empty() {
        return Err(Error::EmptyPocket { cutoff });
    }

    Ok(ComplexEntry {
        entry_id: entry_id.to_string(),
        pocket: Pocket::new(pocket_atoms, bfactors)?,
        ligand: Molecule::from_atoms(ligand_atoms, vocab, &BondRules::default())?,
    })
}

/// Min-max scales B-factors to [0, 1]; a constant profile maps to 0.5.
pub fn normalize_bfactors(pocket: &Pocket) -> Result<Vec<f64>> {
    if pocket.bfactors.is_empty() {
        return Err(Error::Input(
            "cannot normalize B-factors of an empty pocket".into(),
        ));
    }
    if let Some(b) = pocket.bfactors.iter().find(|b| !b.is_finite() || **b < 0.0) {
        return Err(Error::Data(format!("invalid B-factor {b}")));
    }
    let lo = pocket
        .bfactors
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    let hi = pocket
        .bfactors
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    if hi == lo {
        return Ok(vec![0.5; pocket.bfactors.len()]);
    }
    Ok(pocket
        .bfactors
        .iter()
        .map(|b| (b - lo) / (hi - lo))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pdb::parse_pdb;

    fn rec(
        kind: RecordKind,
        serial: i64,
        res: &str,
        element: &str,
        x: f64,
        b: f64,
    ) -> StructureRecord {
        StructureRecord {
            kind,
            serial,
            atom_name: element.into(),
            residue_name: res.into(),
            chain: 'A',
            residue_seq: serial,
            position: [x, 0.0, 0.0],
            occupancy: 1.0,
            bfactor: b,
            element: element.into(),
        }
    }

    fn synthetic() -> Vec<StructureRecord> {
        vec![
            rec(RecordKind::Atom, 1, "ALA", "C", 4.0, 20.0),
            rec(RecordKind::Atom, 2, "ALA", "N", 12.0, 30.0),
            rec(RecordKind::Hetatm, 3, "LIG", "C", 0.0, 0.0),
            rec(RecordKind::Hetatm, 4, "HOH", "O", 1.0, 0.0),
        ]
    }

    #[test]
    fn pocket_distance_filter() {
        let v = Vocabulary::default();
        let e = split_pocket_ligand("x", &synthetic(), "LIG", 10.0, &v).unwrap();
        assert_eq!(e.ligand.len(), 1);
        assert_eq!(e.pocket.len(), 1);
        assert_eq!(e.pocket.atoms[0].position.x, 4.0);
        assert_eq!(e.pocket.bfactors, vec![20.0]);

        let e = split_pocket_ligand("x", &synthetic(), "LIG", 15.0, &v).unwrap();
        assert_eq!(e.pocket.len(), 2);
    }

    #[test]
    fn missing_ligand_and_water() {
        let v = Vocabulary::default();
        assert!(matches!(
            split_pocket_ligand("x", &synthetic(), "ATP", 10.0, &v),
            Err(Error::Lookup(_))
        ));
        assert!(matches!(
            split_pocket_ligand("x", &synthetic(), "HOH", 10.0, &v),
            Err(Error::Lookup(_))
        ));
    }

    #[test]
    fn empty_pocket() {
        let v = Vocabulary::default();
        assert!(matches!(
            split_pocket_ligand("x", &synthetic(), "LIG", 2.0, &v),
            Err(Error::EmptyPocket { .. })
        ));
        assert!(split_pocket_ligand("x", &synthetic(), "LIG", 0.0, &v).is_err());
    }

    #[test]
    fn first_ligand_instance_only() {
        let v = Vocabulary::default();
        let mut recs = synthetic();
        let mut other = rec(RecordKind::Hetatm, 9, "LIG", "O", 100.0, 0.0);
        other.chain = 'B';
        recs.insert(0, other);
        let e = split_pocket_ligand("x", &recs, "LIG", 10.0, &v).unwrap();
        assert_eq!(e.ligand.len(), 1);
        assert_eq!(e.ligand.atoms[0].position.x, 0.0);
    }

    #[test]
    fn parsed_file_split() {
        let text = "\
ATOM      1  N   ALA A   1       4.000   0.000   0.000  1.00 15.00           N
ATOM      2 SE   MSE A   2       3.000   0.000   0.000  1.00 15.00          SE
HETATM    3  C1  LIG A 101       0.000   0.000   0.000  1.00 10.00           C
HETATM    4  O1  LIG A 101       1.430   0.000   0.000  1.00 10.00           O
";
        let v = Vocabulary::default();
        let e = split_pocket_ligand("t", &parse_pdb(text).unwrap(), "LIG", 10.0, &v).unwrap();
        assert_eq!(e.pocket.len(), 1);
        assert_eq!(e.ligand.bonds.len(), 1);
    }

    #[test]
    fn bfactor_normalization() {
        let p = |b: Vec<f64>| Pocket::new(vec![Atom::new(1, [0.0; 3]); b.len()], b).unwrap();
        assert_eq!(
            normalize_bfactors(&p(vec![10.0, 20.0, 30.0])).unwrap(),
            vec![0.0, 0.5, 1.0]
        );
        assert_eq!(normalize_bfactors(&p(vec![7.0; 3])).unwrap(), vec![0.5; 3]);
        assert!(matches!(
            normalize_bfactors(&p(vec![-1.0, 5.0])),
            Err(Error::Data(_))
        ));
        assert!(normalize_bfactors(&Pocket::default()).is_err());
    }
}
