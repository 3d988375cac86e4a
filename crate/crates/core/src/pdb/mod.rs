//! PDB-format ingestion: fixed-column ATOM/HETATM records, pocket/ligand
//! splitting, B-factor normalization and the dataset manifest/archive
//! formats.

mod complex;
mod dataset;
mod record;

pub use complex::{normalize_bfactors, split_pocket_ligand, ComplexEntry, DEFAULT_POCKET_CUTOFF};
pub use dataset::{read_archive, read_manifest, write_archive, ManifestEntry};
pub use record::{ligand_records, parse_pdb, serialize_pdb, RecordKind, StructureRecord};
