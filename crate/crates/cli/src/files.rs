//! File helpers shared by the subcommands.

use std::io::Write;
use std::path::Path;

use pocketflow::chem::xyz::read_xyz;
use pocketflow::pdb::{parse_pdb, read_archive, RecordKind};
use pocketflow::{Atom, BondRules, Error, Molecule, Pocket, Result, Vocabulary};

/// Writes through a temporary file in the destination directory, then
/// renames it into place.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents.as_bytes())?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path)
        .map_err(|e| Error::Input(format!("cannot read {}: {e}", path.display())))
}

fn is_pdb(path: &Path) -> bool {
    path.extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("pdb") || e.eq_ignore_ascii_case("ent"))
}

/// Pocket from a PDB file (ATOM records, B-factors kept) or from a dataset
/// archive entry (`entry` or the first one).
pub fn load_pocket(path: &Path, entry: Option<&str>, vocab: &Vocabulary) -> Result<Pocket> {
    let text = read_text(path)?;
    if is_pdb(path) {
        let mut atoms = Vec::new();
        let mut bfactors = Vec::new();
        for r in parse_pdb(&text)? {
            if r.kind != RecordKind::Atom {
                continue;
            }
            if let Ok(el) = vocab.lookup(&r.element) {
                atoms.push(Atom::new(el, r.position));
                bfactors.push(r.bfactor);
            }
        }
        return Pocket::new(atoms, bfactors);
    }
    let entries = read_archive(&text, vocab)?;
    let found = match entry {
        Some(id) => entries.into_iter().find(|e| e.entry_id == id),
        None => entries.into_iter().next(),
    };
    found
        .map(|e| e.pocket)
        .ok_or_else(|| Error::Lookup(format!("no pocket entry in {}", path.display())))
}

/// Molecule from an XYZ file or the HETATM records of a PDB file.
pub fn load_molecule(path: &Path, vocab: &Vocabulary, rules: &BondRules) -> Result<Molecule> {
    let text = read_text(path)?;
    let atoms = if is_pdb(path) {
        let records = parse_pdb(&text)?;
        let het: Vec<_> = records
            .iter()
            .filter(|r| r.kind == RecordKind::Hetatm)
            .collect();
        let chosen = if het.is_empty() {
            records.iter().collect()
        } else {
            het
        };
        chosen
            .into_iter()
            .map(|r| Ok(Atom::new(vocab.lookup(&r.element)?, r.position)))
            .collect::<Result<Vec<_>>>()?
    } else {
        read_xyz(&text, vocab)?.0
    };
    Molecule::from_atoms(atoms, vocab, rules)
}

/// Molecule files in `dir`, sorted by name. XYZ wins when both formats of
/// one stem exist.
pub fn molecule_files(dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| Error::Input(format!("cannot read {}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .is_some_and(|e| e.eq_ignore_ascii_case("xyz") || e.eq_ignore_ascii_case("pdb"))
        })
        .collect();
    files.sort();
    let stems: std::collections::HashSet<_> = files
        .iter()
        .filter(|p| !is_pdb(p))
        .filter_map(|p| p.file_stem().map(|s| s.to_owned()))
        .collect();
    files.retain(|p| !is_pdb(p) || !p.file_stem().is_some_and(|s| stems.contains(s)));
    if files.is_empty() {
        return Err(Error::Input(format!(
            "no .xyz or .pdb files in {}",
            dir.display()
        )));
    }
    Ok(files)
}
