//! Element vocabulary: covalent radii and valence capacities.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElementKind {
    pub symbol: String,
    pub atomic_number: u32,
    /// Covalent radius in Å.
    pub covalent_radius: f64,
    /// Maximum total bond order.
    pub max_valence: u32,
}

impl ElementKind {
    pub fn new(symbol: &str, atomic_number: u32, covalent_radius: f64, max_valence: u32) -> Self {
        Self {
            symbol: symbol.to_string(),
            atomic_number,
            covalent_radius,
            max_valence,
        }
    }

    /// Polar atoms for contact classification: N, O, S, P.
    pub fn is_polar(&self) -> bool {
        matches!(self.symbol.as_str(), "N" | "O" | "S" | "P")
    }
}

impl fmt::Display for ElementKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.symbol)
    }
}

// symbol, Z, radius, valence
const BUILTIN: [(&str, u32, f64, u32); 10] = [
    ("H", 1, 0.31, 1),
    ("C", 6, 0.77, 4),
    ("N", 7, 0.71, 3),
    ("O", 8, 0.66, 2),
    ("F", 9, 0.57, 1),
    ("P", 15, 1.07, 5),
    ("S", 16, 1.05, 6),
    ("Cl", 17, 1.02, 1),
    ("Br", 35, 1.20, 1),
    ("I", 53, 1.39, 1),
];

/// Atomic numbers for the symbols a vocabulary file may name.
const ATOMIC_NUMBERS: [(&str, u32); 20] = [
    ("H", 1),
    ("B", 5),
    ("C", 6),
    ("N", 7),
    ("O", 8),
    ("F", 9),
    ("Na", 11),
    ("Mg", 12),
    ("Si", 14),
    ("P", 15),
    ("S", 16),
    ("Cl", 17),
    ("K", 19),
    ("Ca", 20),
    ("Fe", 26),
    ("Zn", 30),
    ("Se", 34),
    ("Br", 35),
    ("I", 53),
    ("Cu", 29),
];

/// Ordered element table. Atom types are indices into it.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    elements: Vec<ElementKind>,
    index: HashMap<String, usize>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        let elements = BUILTIN
            .iter()
            .map(|&(s, z, r, v)| ElementKind::new(s, z, r, v))
            .collect();
        Self::new(elements).expect("built-in vocabulary is valid")
    }
}

impl Vocabulary {
    pub fn new(elements: Vec<ElementKind>) -> Result<Self> {
        if elements.is_empty() {
            return Err(Error::Vocabulary("vocabulary is empty".into()));
        }
        let mut index = HashMap::new();
        for (i, e) in elements.iter().enumerate() {
            if !(e.covalent_radius > 0.0 && e.covalent_radius.is_finite()) {
                return Err(Error::Vocabulary(format!(
                    "{}: covalent radius must be positive",
                    e.symbol
                )));
            }
            if e.max_valence < 1 {
                return Err(Error::Vocabulary(format!(
                    "{}: max valence must be at least 1",
                    e.symbol
                )));
            }
            if index.insert(normalize_symbol(&e.symbol), i).is_some() {
                return Err(Error::Vocabulary(format!("duplicate symbol {}", e.symbol)));
            }
        }
        Ok(Self { elements, index })
    }

    /// Subset of the built-in table, in the given order.
    pub fn builtin_subset(symbols: &[&str]) -> Result<Self> {
        let full = Self::default();
        let elements = symbols
            .iter()
            .map(|s| full.lookup(s).map(|i| full.elements[i].clone()))
            .collect::<Result<Vec<_>>>()?;
        Self::new(elements)
    }

    /// Parses `symbol radius max_valence` lines. Blank lines and `#`
    /// comments are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut elements = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let err = |message: String| Error::Parse {
                line: n + 1,
                message,
            };
            if fields.len() != 3 {
                return Err(err(format!(
                    "expected `symbol radius max_valence`, got {} fields",
                    fields.len()
                )));
            }
            let symbol = fields[0];
            let radius: f64 = fields[1]
                .parse()
                .map_err(|_| err(format!("bad radius {:?}", fields[1])))?;
            let valence: u32 = fields[2]
                .parse()
                .map_err(|_| err(format!("bad valence {:?}", fields[2])))?;
            let z = ATOMIC_NUMBERS
                .iter()
                .find(|(s, _)| normalize_symbol(s) == normalize_symbol(symbol))
                .map(|&(_, z)| z)
                .unwrap_or(0);
            elements.push(ElementKind::new(
                &canonical_symbol(symbol),
                z,
                radius,
                valence,
            ));
        }
        Self::new(elements)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_text(&self) -> String {
        self.elements
            .iter()
            .map(|e| format!("{} {} {}\n", e.symbol, e.covalent_radius, e.max_valence))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn elements(&self) -> &[ElementKind] {
        &self.elements
    }

    pub fn get(&self, index: usize) -> Result<&ElementKind> {
        self.elements.get(index).ok_or_else(|| {
            Error::Vocabulary(format!(
                "element index {index} outside vocabulary of {}",
                self.elements.len()
            ))
        })
    }

    /// Case-insensitive symbol lookup.
    pub fn lookup(&self, symbol: &str) -> Result<usize> {
        self.index
            .get(&normalize_symbol(symbol))
            .copied()
            .ok_or_else(|| Error::Vocabulary(format!("unknown element {symbol:?}")))
    }

    pub fn max_valence(&self, index: usize) -> Result<u32> {
        self.get(index).map(|e| e.max_valence)
    }

    pub fn radius(&self, index: usize) -> Result<f64> {
        self.get(index).map(|e| e.covalent_radius)
    }
}

/// Bond-order capacity of an element.
pub fn max_valence(element: &ElementKind) -> u32 {
    element.max_valence
}

fn normalize_symbol(s: &str) -> String {
    s.trim().to_ascii_uppercase()
}

fn canonical_symbol(s: &str) -> String {
    let s = s.trim();
    let mut out = String::with_capacity(s.len());
    for (i, c) in s.chars().enumerate() {
        if i == 0 {
            out.push(c.to_ascii_uppercase());
        } else {
            out.push(c.to_ascii_lowercase());
        }
    }
    out
}
