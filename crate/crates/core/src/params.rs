//! Flat parameter storage with named, shaped sections, and the text
//! checkpoint container shared by the encoder and both flows.

use std::fmt::Write;

use crate::error::{Error, Result};

const CHECKPOINT_HEADER: &str = "pocketflow-params v1";
const VALUES_PER_LINE: usize = 6;

#[derive(Debug, Clone, PartialEq)]
pub struct Section {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl Section {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Every learnable weight in one `Vec<f64>`; sections index into it.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet {
    sections: Vec<Section>,
    values: Vec<f64>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a zero-filled section and returns its offset.
    pub fn add(&mut self, name: impl Into<String>, shape: &[usize]) -> usize {
        let name = name.into();
        assert!(
            self.section(&name).is_none(),
            "duplicate parameter section {name}"
        );
        let offset = self.values.len();
        let section = Section {
            name,
            shape: shape.to_vec(),
            offset,
        };
        self.values.resize(offset + section.len(), 0.0);
        self.sections.push(section);
        offset
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn set_values(&mut self, values: Vec<f64>) -> Result<()> {
        if values.len() != self.values.len() {
            return Err(Error::Size {
                expected: self.values.len(),
                found: values.len(),
            });
        }
        self.values = values;
        Ok(())
    }

    pub fn sections(&self) -> &[Section] {
        &self.sections
    }

    pub fn section(&self, name: &str) -> Option<&Section> {
        self.sections.iter().find(|s| s.name == name)
    }

    pub fn slice(&self, name: &str) -> Option<&[f64]> {
        self.section(name).map(|s| &self.values[s.range()])
    }

    pub fn slice_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        let range = self.section(name)?.range();
        Some(&mut self.values[range])
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Parameters plus free-form `key value` metadata.
///
/// ```text
/// pocketflow-params v1
/// meta <key> <value>
/// section <name> <d0>x<d1>...
/// <values, shortest round-trip decimal form>
/// end
/// ```
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    pub meta: Vec<(String, String)>,
    pub params: ParamSet,
}

impl Checkpoint {
    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn meta_all<'a>(&'a self, key: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.meta
            .iter()
            .filter(move |(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{CHECKPOINT_HEADER}");
        for (k, v) in &self.meta {
            let _ = writeln!(out, "meta {k} {v}");
        }
        for s in self.params.sections() {
            let shape: Vec<String> = s.shape.iter().map(|d| d.to_string()).collect();
            let _ = writeln!(out, "section {} {}", s.name, shape.join("x"));
            for chunk in self.params.values()[s.range()].chunks(VALUES_PER_LINE) {
                let row: Vec<String> = chunk.iter().map(|v| format!("{v:?}")).collect();
                let _ = writeln!(out, "{}", row.join(" "));
            }
        }
        let _ = writeln!(out, "end");
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == CHECKPOINT_HEADER => {}
            _ => {
                return Err(Error::Parse {
                    line: 1,
                    message: format!("missing checkpoint header {CHECKPOINT_HEADER:?}"),
                })
            }
        }
        let mut ck = Checkpoint::default();
        let mut pending: Option<(usize, usize)> = None; // (section end, line of header)
        let mut values: Vec<f64> = Vec::new();
        let mut finished = false;
        for (i, line) in lines {
            let err = |message: String| Error::Parse {
                line: i + 1,
                message,
            };
            if let Some((end, _)) = pending {
                if values.len() < end {
                    for tok in line.split_whitespace() {
                        values.push(tok.parse().map_err(|_| err(format!("bad value {tok:?}")))?);
                    }
                    if values.len() > end {
                        return Err(err("section has too many values".into()));
                    }
                    continue;
                }
                pending = None;
            }
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if line == "end" {
                finished = true;
                break;
            }
            let (tag, rest) = line.split_once(' ').unwrap_or((line, ""));
            match tag {
                "meta" => {
                    let (k, v) = rest.split_once(' ').unwrap_or((rest, ""));
                    ck.meta.push((k.to_string(), v.to_string()));
                }
                "section" => {
                    let (name, shape) = rest
                        .split_once(' ')
                        .ok_or_else(|| err("section needs a name and shape".into()))?;
                    let shape = shape
                        .split('x')
                        .map(|d| {
                            d.parse::<usize>()
                                .map_err(|_| err(format!("bad shape {shape:?}")))
                        })
                        .collect::<Result<Vec<_>>>()?;
                    if ck.params.section(name).is_some() {
                        return Err(err(format!("duplicate section {name}")));
                    }
                    let offset = ck.params.add(name, &shape);
                    let end = offset + ck.params.sections().last().map_or(0, |s| s.len());
                    if end > offset {
                        pending = Some((end, i + 1));
                    }
                }
                other => return Err(err(format!("unexpected line tag {other:?}"))),
            }
        }
        if let Some((end, line)) = pending {
            if values.len() < end {
                return Err(Error::Parse {
                    line,
                    message: "section is truncated".into(),
                });
            }
        }
        if !finished {
            return Err(Error::Parse {
                line: text.lines().count(),
                message: "checkpoint is truncated (no `end`)".into(),
            });
        }
        ck.params.set_values(values)?;
        Ok(ck)
    }
}
