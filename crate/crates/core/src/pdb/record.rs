use std::fmt;

use serde::{Deserialize, Serialize};

use crate::chem::{Atom, Vocabulary};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RecordKind {
    Atom,
    Hetatm,
}

impl fmt::Display for RecordKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RecordKind::Atom => "ATOM",
            RecordKind::Hetatm => "HETATM",
        })
    }
}

/// One ATOM/HETATM line. Text fields are stored trimmed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureRecord {
    pub kind: RecordKind,
    pub serial: i64,
    pub atom_name: String,
    pub residue_name: String,
    pub chain: char,
    pub residue_seq: i64,
    pub position: [f64; 3],
    pub occupancy: f64,
    /// Temperature factor in Å².
    pub bfactor: f64,
    pub element: String,
}

/// Slice of 1-based inclusive columns `a..=b`, clamped to the line.
fn cols(line: &str, a: usize, b: usize) -> &str {
    let start = (a - 1).min(line.len());
    let end = b.min(line.len());
    &line[start..end]
}

fn parse_num<T: std::str::FromStr>(
    line: &str,
    a: usize,
    b: usize,
    what: &str,
    n: usize,
) -> Result<T> {
    let field = cols(line, a, b).trim();
    field.parse().map_err(|_| Error::Parse {
        line: n,
        message: format!("malformed {what} {field:?} in columns {a}-{b}"),
    })
}

/// Element from the atom-name columns: a letter in column 13 means a
/// two-letter symbol (e.g. `CL1 `), otherwise column 14 holds it.
fn element_from_name(raw_name: &str) -> String {
    let b = raw_name.as_bytes();
    let first = b.first().copied().unwrap_or(b' ');
    if first.is_ascii_alphabetic() {
        if raw_name.trim().len() == 4 && matches!(first, b'H') {
            // names like HD21 are hydrogens
            return "H".into();
        }
        let two: String = raw_name
            .chars()
            .take(2)
            .filter(|c| c.is_ascii_alphabetic())
            .collect();
        return two.to_ascii_uppercase();
    }
    raw_name
        .chars()
        .find(|c| c.is_ascii_alphabetic())
        .map(|c| c.to_ascii_uppercase().to_string())
        .unwrap_or_default()
}

fn parse_line(line: &str, n: usize) -> Result<Option<(StructureRecord, char)>> {
    let kind = match cols(line, 1, 6).trim_end() {
        "ATOM" => RecordKind::Atom,
        "HETATM" => RecordKind::Hetatm,
        _ => return Ok(None),
    };
    if !line.is_ascii() {
        return Err(Error::Parse {
            line: n,
            message: "non-ASCII characters in atom record".into(),
        });
    }
    if line.len() < 54 {
        return Err(Error::Parse {
            line: n,
            message: format!(
                "truncated coordinates: line has {} columns, need 54",
                line.len()
            ),
        });
    }
    let serial = parse_num(line, 7, 11, "serial", n)?;
    let raw_name = cols(line, 13, 16);
    let alt_loc = cols(line, 17, 17).chars().next().unwrap_or(' ');
    let residue_seq = parse_num(line, 23, 26, "residue number", n)?;
    let position = [
        parse_num(line, 31, 38, "x coordinate", n)?,
        parse_num(line, 39, 46, "y coordinate", n)?,
        parse_num(line, 47, 54, "z coordinate", n)?,
    ];
    if position.iter().any(|c: &f64| !c.is_finite()) {
        return Err(Error::Parse {
            line: n,
            message: "non-finite coordinate".into(),
        });
    }
    let occupancy = if cols(line, 55, 60).trim().is_empty() {
        1.0
    } else {
        parse_num(line, 55, 60, "occupancy", n)?
    };
    let bfactor = if cols(line, 61, 66).trim().is_empty() {
        0.0
    } else {
        parse_num(line, 61, 66, "B-factor", n)?
    };
    let element = match cols(line, 77, 78).trim() {
        "" => element_from_name(raw_name),
        e => e.to_string(),
    };
    let record = StructureRecord {
        kind,
        serial,
        atom_name: raw_name.trim().to_string(),
        residue_name: cols(line, 18, 20).trim().to_string(),
        chain: cols(line, 22, 22).chars().next().unwrap_or(' '),
        residue_seq,
        position,
        occupancy,
        bfactor,
        element,
    };
    Ok(Some((record, alt_loc)))
}

/// Parses ATOM/HETATM lines of the first model. Alternate conformers
/// after the first one seen for an atom are dropped.
pub fn parse_pdb(text: &str) -> Result<Vec<StructureRecord>> {
    let mut out = Vec::new();
    let mut seen_alt = std::collections::HashSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.starts_with("ENDMDL") {
            break;
        }
        let Some((rec, alt)) = parse_line(line, i + 1)? else {
            continue;
        };
        if alt != ' ' {
            let key = (
                rec.chain,
                rec.residue_seq,
                rec.residue_name.clone(),
                rec.atom_name.clone(),
            );
            if !seen_alt.insert(key) {
                continue;
            }
        }
        out.push(rec);
    }
    Ok(out)
}

fn fixed(value: f64, width: usize, decimals: usize, what: &str) -> Result<String> {
    let s = format!("{value:>width$.decimals$}");
    if s.len() > width || !value.is_finite() {
        return Err(Error::Range(format!(
            "{what} {value} does not fit in {width} columns with {decimals} decimals"
        )));
    }
    Ok(s)
}

fn name_field(name: &str, element: &str) -> String {
    if name.len() < 4 && element.trim().len() <= 1 {
        format!(" {name:<3}")
    } else {
        format!("{name:<4}")
    }
}

fn serialize_record(r: &StructureRecord) -> Result<String> {
    if !(0..=99999).contains(&r.serial) {
        return Err(Error::Range(format!(
            "serial {} exceeds 5 columns",
            r.serial
        )));
    }
    if !(-999..=9999).contains(&r.residue_seq) {
        return Err(Error::Range(format!(
            "residue number {} exceeds 4 columns",
            r.residue_seq
        )));
    }
    for (field, width, what) in [
        (&r.atom_name, 4, "atom name"),
        (&r.residue_name, 3, "residue name"),
        (&r.element, 2, "element"),
    ] {
        if field.len() > width || !field.is_ascii() {
            return Err(Error::Range(format!(
                "{what} {field:?} exceeds {width} columns"
            )));
        }
    }
    let [x, y, z] = r.position;
    Ok(format!(
        "{:<6}{:>5} {} {:>3} {}{:>4}    {}{}{}{}{}          {:>2}",
        r.kind.to_string(),
        r.serial,
        name_field(&r.atom_name, &r.element),
        r.residue_name,
        r.chain,
        r.residue_seq,
        fixed(x, 8, 3, "x coordinate")?,
        fixed(y, 8, 3, "y coordinate")?,
        fixed(z, 8, 3, "z coordinate")?,
        fixed(r.occupancy, 6, 2, "occupancy")?,
        fixed(r.bfactor, 6, 2, "B-factor")?,
        r.element,
    ))
}

/// Writes one fixed-column line per record, each terminated by `\n`.
pub fn serialize_pdb(records: &[StructureRecord]) -> Result<String> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serialize_record(r)?);
        out.push('\n');
    }
    Ok(out)
}

/// HETATM records for a ligand, one residue `residue_name` on chain L.
pub fn ligand_records(
    atoms: &[Atom],
    vocab: &Vocabulary,
    residue_name: &str,
) -> Result<Vec<StructureRecord>> {
    let mut counts = std::collections::HashMap::new();
    atoms
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let symbol = vocab.get(a.element)?.symbol.to_ascii_uppercase();
            let k = counts.entry(symbol.clone()).or_insert(0usize);
            *k += 1;
            let mut name = format!("{symbol}{k}");
            name.truncate(4);
            Ok(StructureRecord {
                kind: RecordKind::Hetatm,
                serial: i as i64 + 1,
                atom_name: name,
                residue_name: residue_name.to_string(),
                chain: 'L',
                residue_seq: 1,
                position: [a.position.x, a.position.y, a.position.z],
                occupancy: 1.0,
                bfactor: 0.0,
                element: symbol,
            })
        })
        .collect()
}
