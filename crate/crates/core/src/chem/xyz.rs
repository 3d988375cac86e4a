//! XYZ text format: atom count, comment line, then `element x y z` rows.

use std::fmt::Write;

use super::{Atom, Vocabulary};
use crate::error::{Error, Result};

pub fn write_xyz(atoms: &[Atom], vocab: &Vocabulary, comment: &str) -> Result<String> {
    let mut out = String::new();
    let _ = writeln!(out, "{}", atoms.len());
    let _ = writeln!(out, "{}", comment.replace('\n', " "));
    for a in atoms {
        let sym = &vocab.get(a.element)?.symbol;
        let p = a.position;
        let _ = writeln!(out, "{sym} {:.6} {:.6} {:.6}", p.x, p.y, p.z);
    }
    Ok(out)
}

/// Returns the atoms and the comment line.
pub fn read_xyz(text: &str, vocab: &Vocabulary) -> Result<(Vec<Atom>, String)> {
    let mut lines = text.lines();
    let count_line = lines.next().ok_or_else(|| Error::Parse {
        line: 1,
        message: "missing atom count".into(),
    })?;
    let count: usize = count_line.trim().parse().map_err(|_| Error::Parse {
        line: 1,
        message: format!("bad atom count {count_line:?}"),
    })?;
    let comment = lines.next().unwrap_or("").to_string();
    let mut atoms = Vec::with_capacity(count);
    for (k, line) in lines.enumerate().take(count) {
        let lineno = k + 3;
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() < 4 {
            return Err(Error::Parse {
                line: lineno,
                message: "expected `element x y z`".into(),
            });
        }
        let mut xyz = [0.0; 3];
        for (slot, tok) in xyz.iter_mut().zip(&f[1..4]) {
            *slot = tok.parse().map_err(|_| Error::Parse {
                line: lineno,
                message: format!("bad coordinate {tok:?}"),
            })?;
        }
        atoms.push(Atom::new(vocab.lookup(f[0])?, xyz));
    }
    if atoms.len() != count {
        return Err(Error::Parse {
            line: atoms.len() + 3,
            message: format!("expected {count} atoms, found {}", atoms.len()),
        });
    }
    Ok((atoms, comment))
}
