//! Small hand-built geometries used by tests and examples.

use super::{Atom, Vocabulary};

fn atom(vocab: &Vocabulary, symbol: &str, p: [f64; 3]) -> Atom {
    Atom::new(vocab.lookup(symbol).expect("symbol in vocabulary"), p)
}

/// Tetrahedral CH4 with 1.09 Å C–H bonds.
pub fn methane(vocab: &Vocabulary) -> Vec<Atom> {
    let d = 1.09 / 3f64.sqrt();
    vec![
        atom(vocab, "C", [0.0; 3]),
        atom(vocab, "H", [d, d, d]),
        atom(vocab, "H", [d, -d, -d]),
        atom(vocab, "H", [-d, d, -d]),
        atom(vocab, "H", [-d, -d, d]),
    ]
}

/// Carbon with five hydrogens at 1.09 Å (square pyramid); H–H pairs stay
/// outside the bond window.
pub fn pentavalent_carbon(vocab: &Vocabulary) -> Vec<Atom> {
    let r = 1.09;
    vec![
        atom(vocab, "C", [0.0; 3]),
        atom(vocab, "H", [r, 0.0, 0.0]),
        atom(vocab, "H", [-r, 0.0, 0.0]),
        atom(vocab, "H", [0.0, r, 0.0]),
        atom(vocab, "H", [0.0, -r, 0.0]),
        atom(vocab, "H", [0.0, 0.0, r]),
    ]
}

/// Heavy atoms of ethanol (C–C–O) in a fixed frame.
pub fn ethanol_heavy(vocab: &Vocabulary) -> Vec<Atom> {
    vec![
        atom(vocab, "C", [0.0, 0.0, 0.0]),
        atom(vocab, "C", [1.52, 0.0, 0.0]),
        atom(vocab, "O", [2.0, 1.35, 0.0]),
    ]
}
