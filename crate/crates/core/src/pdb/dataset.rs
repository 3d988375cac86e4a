//! Dataset manifest (`entry_id<TAB>path<TAB>ligand_residue`) and the
//! plain-text archive holding split complexes.

use std::fmt::Write;
use std::path::{Path, PathBuf};

use super::ComplexEntry;
use crate::chem::{Atom, BondRules, Molecule, Pocket, Vocabulary};
use crate::error::{Error, Result};

const ARCHIVE_HEADER: &str = "# pocketflow dataset v1";

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub entry_id: String,
    pub path: PathBuf,
    pub ligand_residue: String,
}

/// Relative paths are resolved against `base_dir`.
pub fn read_manifest(text: &str, base_dir: &Path) -> Result<Vec<ManifestEntry>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 || fields.iter().any(|f| f.trim().is_empty()) {
            return Err(Error::Parse {
                line: i + 1,
                message: "expected `entry_id<TAB>path<TAB>ligand_residue`".into(),
            });
        }
        let path = Path::new(fields[1].trim());
        out.push(ManifestEntry {
            entry_id: fields[0].trim().to_string(),
            path: if path.is_absolute() {
                path.to_path_buf()
            } else {
                base_dir.join(path)
            },
            ligand_residue: fields[2].trim().to_string(),
        });
    }
    Ok(out)
}

/// Layout:
///
/// ```text
/// # pocketflow dataset v1
/// entry <id> <pocket atoms> <ligand atoms>
/// P <symbol> <x> <y> <z> <bfactor>
/// L <symbol> <x> <y> <z>
/// ```
///
/// Numbers use the shortest round-trip decimal form.
pub fn write_archive(entries: &[ComplexEntry], vocab: &Vocabulary) -> Result<String> {
    let mut out = String::new();
    let _ = writeln!(out, "{ARCHIVE_HEADER}");
    for e in entries {
        if e.entry_id.contains(char::is_whitespace) || e.entry_id.is_empty() {
            return Err(Error::Input(format!(
                "entry id {:?} must be one word",
                e.entry_id
            )));
        }
        let _ = writeln!(
            out,
            "entry {} {} {}",
            e.entry_id,
            e.pocket.len(),
            e.ligand.len()
        );
        for (a, b) in e.pocket.atoms.iter().zip(&e.pocket.bfactors) {
            let p = a.position;
            let sym = &vocab.get(a.element)?.symbol;
            let _ = writeln!(out, "P {sym} {:?} {:?} {:?} {b:?}", p.x, p.y, p.z);
        }
        for a in &e.ligand.atoms {
            let p = a.position;
            let sym = &vocab.get(a.element)?.symbol;
            let _ = writeln!(out, "L {sym} {:?} {:?} {:?}", p.x, p.y, p.z);
        }
    }
    Ok(out)
}

pub fn read_archive(text: &str, vocab: &Vocabulary) -> Result<Vec<ComplexEntry>> {
    let mut lines = text.lines().enumerate().peekable();
    match lines.next() {
        Some((_, h)) if h.trim() == ARCHIVE_HEADER => {}
        _ => {
            return Err(Error::Parse {
                line: 1,
                message: format!("missing header {ARCHIVE_HEADER:?}"),
            })
        }
    }
    let rules = BondRules::default();
    let mut entries = Vec::new();
    while let Some((i, line)) = lines.next() {
        if line.trim().is_empty() {
            continue;
        }
        let err = |line: usize, message: String| Error::Parse {
            line: line + 1,
            message,
        };
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 4 || f[0] != "entry" {
            return Err(err(i, format!("expected entry header, got {line:?}")));
        }
        let n_pocket: usize = f[2]
            .parse()
            .map_err(|_| err(i, "bad pocket count".into()))?;
        let n_ligand: usize = f[3]
            .parse()
            .map_err(|_| err(i, "bad ligand count".into()))?;
        let mut pocket_atoms = Vec::with_capacity(n_pocket);
        let mut bfactors = Vec::with_capacity(n_pocket);
        let mut ligand_atoms = Vec::with_capacity(n_ligand);
        for k in 0..n_pocket + n_ligand {
            let (j, row) = lines
                .next()
                .ok_or_else(|| err(i, format!("entry {} is truncated", f[1])))?;
            let t: Vec<&str> = row.split_whitespace().collect();
            let (tag, width) = if k < n_pocket { ("P", 6) } else { ("L", 5) };
            if t.len() != width || t[0] != tag {
                return Err(err(j, format!("expected {tag} row with {width} fields")));
            }
            let nums = t[2..]
                .iter()
                .map(|s| {
                    s.parse::<f64>()
                        .map_err(|_| err(j, format!("bad number {s:?}")))
                })
                .collect::<Result<Vec<_>>>()?;
            let atom = Atom::new(vocab.lookup(t[1])?, [nums[0], nums[1], nums[2]]);
            if k < n_pocket {
                pocket_atoms.push(atom);
                bfactors.push(nums[3]);
            } else {
                ligand_atoms.push(atom);
            }
        }
        entries.push(ComplexEntry {
            entry_id: f[1].to_string(),
            pocket: Pocket::new(pocket_atoms, bfactors)?,
            ligand: Molecule::from_atoms(ligand_atoms, vocab, &rules)?,
        });
    }
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chem::samples;

    #[test]
    fn manifest_parsing() {
        let text = "# id\tpath\tres\n1abc\tdata/1abc.pdb\tLIG\n\n2xyz\t/abs/2xyz.pdb\tATP\n";
        let m = read_manifest(text, Path::new("/base")).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m[0].path, PathBuf::from("/base/data/1abc.pdb"));
        assert_eq!(m[1].path, PathBuf::from("/abs/2xyz.pdb"));
        assert_eq!(m[1].ligand_residue, "ATP");
        assert!(read_manifest("1abc data.pdb LIG\n", Path::new(".")).is_err());
    }

    #[test]
    fn archive_round_trip() {
        let v = Vocabulary::default();
        let ligand =
            Molecule::from_atoms(samples::ethanol_heavy(&v), &v, &BondRules::default()).unwrap();
        let pocket = Pocket::new(
            vec![
                Atom::new(2, [0.1, 3.7, -0.3333333333]),
                Atom::new(1, [4.0, 1.0, 1.0 / 3.0]),
            ],
            vec![12.5, 0.0],
        )
        .unwrap();
        let entries = vec![ComplexEntry {
            entry_id: "toy".into(),
            pocket,
            ligand,
        }];
        let text = write_archive(&entries, &v).unwrap();
        assert_eq!(read_archive(&text, &v).unwrap(), entries);
        assert!(read_archive("entry a 0 0\n", &v).is_err());
        assert!(read_archive(&text[..text.len() - 10], &v).is_err());
    }
}
