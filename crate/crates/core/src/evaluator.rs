//! Validity, RMSD and a contact-count affinity estimate for generated ligands.

use serde::{Deserialize, Serialize};

use crate::chem::{check_validity, BondRules, Molecule, Pocket, ValidityReport, Vocabulary};
use crate::error::{Error, Result};
use crate::geometry::rmsd_coords;

/// Gas constant in kcal/(mol K).
pub const GAS_CONSTANT: f64 = 1.9872e-3;
pub const ROOM_TEMPERATURE: f64 = 298.15;

/// Ligand-pocket atom pairs within the contact cutoff, split by polarity.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContactCounts {
    pub polar_polar: usize,
    pub polar_apolar: usize,
    pub apolar_apolar: usize,
}

impl ContactCounts {
    pub fn total(&self) -> usize {
        self.polar_polar + self.polar_apolar + self.apolar_apolar
    }
}

/// Linear contact score: `dG = intercept + w . counts` in kcal/mol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AffinityModel {
    pub polar_polar: f64,
    pub polar_apolar: f64,
    pub apolar_apolar: f64,
    pub intercept: f64,
    pub contact_cutoff: f64,
    pub temperature: f64,
}

impl Default for AffinityModel {
    fn default() -> Self {
        Self {
            polar_polar: -0.09,
            polar_apolar: -0.04,
            apolar_apolar: -0.02,
            intercept: -2.0,
            contact_cutoff: 5.5,
            temperature: ROOM_TEMPERATURE,
        }
    }
}

impl AffinityModel {
    pub fn validate(&self) -> Result<()> {
        let w = [
            self.polar_polar,
            self.polar_apolar,
            self.apolar_apolar,
            self.intercept,
        ];
        if w.iter().any(|x| !x.is_finite()) {
            return Err(Error::Config("affinity weights must be finite".into()));
        }
        if !(self.contact_cutoff > 0.0 && self.contact_cutoff.is_finite()) {
            return Err(Error::Config(format!(
                "contact cutoff must be positive, got {}",
                self.contact_cutoff
            )));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::Config(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        Ok(())
    }

    pub fn predict_dg(&self, counts: &ContactCounts) -> f64 {
        self.intercept
            + self.polar_polar * counts.polar_polar as f64
            + self.polar_apolar * counts.polar_apolar as f64
            + self.apolar_apolar * counts.apolar_apolar as f64
    }
}

pub fn count_contacts(
    ligand: &Molecule,
    pocket: &Pocket,
    vocab: &Vocabulary,
    cutoff: f64,
) -> Result<ContactCounts> {
    let mut counts = ContactCounts::default();
    for l in &ligand.atoms {
        let lp = vocab.get(l.element)?.is_polar();
        for p in &pocket.atoms {
            if (l.position - p.position).norm() > cutoff {
                continue;
            }
            match (lp, vocab.get(p.element)?.is_polar()) {
                (true, true) => counts.polar_polar += 1,
                (false, false) => counts.apolar_apolar += 1,
                _ => counts.polar_apolar += 1,
            }
        }
    }
    Ok(counts)
}

/// `Kd = exp(dG / RT)` in molar.
pub fn dg_to_kd(dg: f64, temperature: f64) -> Result<f64> {
    if !dg.is_finite() || temperature.is_nan() || temperature <= 0.0 {
        return Err(Error::Range(format!("dG {dg} at T {temperature} K")));
    }
    let x = dg / (GAS_CONSTANT * temperature);
    if x.abs() > 700.0 {
        return Err(Error::Range(format!(
            "dG/RT = {x:.1} is outside the representable range"
        )));
    }
    Ok(x.exp())
}

/// Inverse of [`dg_to_kd`]: `dG = RT ln Kd`.
pub fn kd_to_dg(kd: f64, temperature: f64) -> Result<f64> {
    if !kd.is_finite() || kd <= 0.0 || temperature.is_nan() || temperature <= 0.0 {
        return Err(Error::Range(format!("Kd {kd} at T {temperature} K")));
    }
    Ok(GAS_CONSTANT * temperature * kd.ln())
}

pub fn pkd(kd: f64) -> f64 {
    -kd.log10()
}

/// One molecule to score, with an optional reference pose.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalInput {
    pub id: String,
    pub molecule: Molecule,
    pub reference: Option<Molecule>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub id: String,
    pub atoms: usize,
    pub valid: bool,
    pub violations: Vec<String>,
    pub rmsd: Option<f64>,
    pub contacts: ContactCounts,
    pub dg_kcal_mol: f64,
    /// `None` when `dG/RT` is outside the representable range.
    pub kd_molar: Option<f64>,
    pub pkd: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub count: usize,
    pub valid: usize,
    pub validity_rate: f64,
    pub mean_rmsd: Option<f64>,
    /// Over valid molecules only.
    pub mean_pkd: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub records: Vec<EvalRecord>,
    pub summary: EvalSummary,
}

pub fn evaluate_one(
    input: &EvalInput,
    pocket: &Pocket,
    vocab: &Vocabulary,
    rules: &BondRules,
    affinity: &AffinityModel,
) -> Result<EvalRecord> {
    let ValidityReport { valid, violations } = check_validity(&input.molecule, vocab, rules)?;
    let rmsd = match &input.reference {
        Some(r) if r.len() == input.molecule.len() && !r.is_empty() => {
            let a: Vec<_> = input.molecule.positions().copied().collect();
            let b: Vec<_> = r.positions().copied().collect();
            Some(rmsd_coords(&a, &b)?)
        }
        _ => None,
    };
    let contacts = count_contacts(&input.molecule, pocket, vocab, affinity.contact_cutoff)?;
    let dg = affinity.predict_dg(&contacts);
    let kd = dg_to_kd(dg, affinity.temperature).ok();
    Ok(EvalRecord {
        id: input.id.clone(),
        atoms: input.molecule.len(),
        valid,
        violations: violations.iter().map(|v| v.to_string()).collect(),
        rmsd,
        contacts,
        dg_kcal_mol: dg,
        kd_molar: kd,
        pkd: kd.map(pkd),
    })
}

pub fn evaluate_set(
    inputs: &[EvalInput],
    pocket: &Pocket,
    vocab: &Vocabulary,
    rules: &BondRules,
    affinity: &AffinityModel,
) -> Result<EvalReport> {
    affinity.validate()?;
    if inputs.is_empty() {
        return Err(Error::Input("nothing to evaluate".into()));
    }
    let records = inputs
        .iter()
        .map(|i| evaluate_one(i, pocket, vocab, rules, affinity))
        .collect::<Result<Vec<_>>>()?;
    let mean = |xs: Vec<f64>| (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64);
    let valid = records.iter().filter(|r| r.valid).count();
    let summary = EvalSummary {
        count: records.len(),
        valid,
        validity_rate: valid as f64 / records.len() as f64,
        mean_rmsd: mean(records.iter().filter_map(|r| r.rmsd).collect()),
        mean_pkd: mean(
            records
                .iter()
                .filter(|r| r.valid)
                .filter_map(|r| r.pkd)
                .collect(),
        ),
    };
    Ok(EvalReport { records, summary })
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".to_string(), |v| format!("{v:.4}"))
}

impl EvalReport {
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("id\tvalid\trmsd\tdG_kcal_mol\tKd_M\tpKd\n");
        for r in &self.records {
            out.push_str(&format!(
                "{}\t{}\t{}\t{:.4}\t{}\t{}\n",
                r.id,
                u8::from(r.valid),
                opt(r.rmsd),
                r.dg_kcal_mol,
                r.kd_molar
                    .map_or_else(|| "NA".to_string(), |k| format!("{k:.4e}")),
                opt(r.pkd)
            ));
        }
        let s = &self.summary;
        out.push_str(&format!(
            "# n={} valid={} validity={:.4} mean_rmsd={} mean_pKd_valid={}\n",
            s.count,
            s.valid,
            s.validity_rate,
            opt(s.mean_rmsd),
            opt(s.mean_pkd)
        ));
        out
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Data(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chem::{samples, Atom};

    fn mol(atoms: Vec<Atom>, v: &Vocabulary) -> Molecule {
        Molecule::from_atoms(atoms, v, &BondRules::default()).unwrap()
    }

    #[test]
    fn kd_for_reference_affinity() {
        let kd = dg_to_kd(-9.533, ROOM_TEMPERATURE).unwrap();
        assert!((kd / 1.03e-7 - 1.0).abs() < 0.01, "{kd}");
        assert!((pkd(kd) - 6.99).abs() < 0.01);
    }

    #[test]
    fn kd_range() {
        assert!(matches!(
            dg_to_kd(-500.0, ROOM_TEMPERATURE),
            Err(Error::Range(_))
        ));
        assert!(matches!(
            dg_to_kd(f64::NAN, ROOM_TEMPERATURE),
            Err(Error::Range(_))
        ));
        assert_eq!(dg_to_kd(0.0, ROOM_TEMPERATURE).unwrap(), 1.0);
        assert!(matches!(
            kd_to_dg(0.0, ROOM_TEMPERATURE),
            Err(Error::Range(_))
        ));
    }

    #[test]
    fn contact_classes() {
        let v = Vocabulary::default();
        let lig = mol(samples::ethanol_heavy(&v), &v);
        let n = v.lookup("N").unwrap();
        let c = v.lookup("C").unwrap();
        // N at 3 Å from all three ligand atoms' region; C far away
        let pocket = Pocket::from_atoms(vec![
            Atom::new(n, [1.0, 0.5, 3.0]),
            Atom::new(c, [30.0, 0.0, 0.0]),
        ]);
        let k = count_contacts(&lig, &pocket, &v, 5.5).unwrap();
        assert_eq!(
            k,
            ContactCounts {
                polar_polar: 1,
                polar_apolar: 2,
                apolar_apolar: 0
            }
        );
        let m = AffinityModel::default();
        assert!((m.predict_dg(&k) - (-2.0 - 0.09 - 0.08)).abs() < 1e-12);
    }

    #[test]
    fn report_aggregates() {
        let v = Vocabulary::default();
        let lig = mol(samples::ethanol_heavy(&v), &v);
        let mut moved = lig.clone();
        for a in &mut moved.atoms {
            a.position.x += 1.0;
        }
        let pocket = Pocket::from_atoms(vec![Atom::new(v.lookup("O").unwrap(), [0.0, 0.0, 4.0])]);
        let inputs = vec![
            EvalInput {
                id: "a".into(),
                molecule: moved,
                reference: Some(lig.clone()),
            },
            EvalInput {
                id: "b".into(),
                molecule: mol(samples::pentavalent_carbon(&v), &v),
                reference: Some(lig),
            },
        ];
        let rep = evaluate_set(
            &inputs,
            &pocket,
            &v,
            &BondRules::default(),
            &AffinityModel::default(),
        )
        .unwrap();
        assert!((rep.records[0].rmsd.unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(rep.records[1].rmsd, None);
        assert!(!rep.records[1].valid);
        assert_eq!(rep.summary.valid, 1);
        assert_eq!(rep.summary.mean_pkd, rep.records[0].pkd);
        let tsv = rep.to_tsv();
        assert!(tsv.starts_with("id\tvalid\trmsd\tdG_kcal_mol\tKd_M\tpKd\n"));
        assert!(tsv.contains("b\t0\tNA\t"));
        let back: EvalReport = serde_json::from_str(&rep.to_json().unwrap()).unwrap();
        assert_eq!(back, rep);
    }
}
