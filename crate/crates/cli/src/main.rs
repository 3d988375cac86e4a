mod files;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use pocketflow::chem::xyz::write_xyz;
use pocketflow::evaluator::{evaluate_set, EvalInput};
use pocketflow::pdb::{
    ligand_records, parse_pdb, read_archive, read_manifest, serialize_pdb, split_pocket_ligand,
    write_archive,
};
use pocketflow::trainer::{build_steps, train};
use pocketflow::{Checkpoint, Error, Generator, Model, Result, RunConfig};

use files::{load_molecule, load_pocket, molecule_files, read_text, write_atomic};

#[derive(Parser, Debug)]
#[command(
    name = "pocketflow",
    version,
    about = "Pocket-conditioned flow model for 3D ligand generation"
)]
struct Cli {
    /// Run configuration (TOML). Falls back to $POCKETFLOW_CONFIG.
    #[arg(long, global = true, env = "POCKETFLOW_CONFIG")]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Split the complexes listed in a manifest into a dataset archive.
    Ingest {
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train on a dataset archive and write a checkpoint.
    Train {
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Loss log; defaults to the checkpoint path with `.log` appended.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Sample ligands into a pocket.
    Generate {
        checkpoint: PathBuf,
        /// PDB file (ATOM records) or dataset archive.
        pocket: PathBuf,
        /// Archive entry to take the pocket from; the first one by default.
        #[arg(long)]
        entry: Option<String>,
        /// Number of molecules; the configured `generator.samples` by default.
        #[arg(long)]
        count: Option<usize>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a directory of .xyz/.pdb molecules.
    Evaluate {
        molecules: PathBuf,
        pocket: PathBuf,
        #[arg(long)]
        entry: Option<String>,
        #[arg(long)]
        reference: Option<PathBuf>,
        /// Write JSON instead of TSV.
        #[arg(long)]
        json: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the effective configuration.
    Config,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numeric() { 3 } else { 2 })
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    match cli.command {
        Command::Ingest { manifest, out } => ingest(&cfg, &manifest, &out),
        Command::Train { dataset, out, log } => {
            let log = log.unwrap_or_else(|| {
                let mut s = out.clone().into_os_string();
                s.push(".log");
                PathBuf::from(s)
            });
            train_cmd(&cfg, &dataset, &out, &log)
        }
        Command::Generate {
            checkpoint,
            pocket,
            entry,
            count,
            out,
        } => generate(&cfg, &checkpoint, &pocket, entry.as_deref(), count, &out),
        Command::Evaluate {
            molecules,
            pocket,
            entry,
            reference,
            json,
            out,
        } => evaluate(
            &cfg,
            &molecules,
            &pocket,
            entry.as_deref(),
            reference.as_deref(),
            json,
            &out,
        ),
        Command::Config => {
            print!("{}", cfg.to_toml()?);
            Ok(())
        }
    }
}

fn ingest(cfg: &RunConfig, manifest: &Path, out: &Path) -> Result<()> {
    let vocab = cfg.vocabulary()?;
    let base = manifest.parent().unwrap_or(Path::new("."));
    let entries = read_manifest(&read_text(manifest)?, base)?;
    if entries.is_empty() {
        return Err(Error::Input(format!(
            "manifest {} lists no entries",
            manifest.display()
        )));
    }
    let mut done = Vec::new();
    for m in &entries {
        let result = read_text(&m.path)
            .and_then(|t| parse_pdb(&t))
            .and_then(|r| {
                split_pocket_ligand(
                    &m.entry_id,
                    &r,
                    &m.ligand_residue,
                    cfg.pdb.pocket_cutoff,
                    &vocab,
                )
            });
        match result {
            Ok(c) => {
                println!(
                    "ok\t{}\tpocket={}\tligand={}",
                    m.entry_id,
                    c.pocket.len(),
                    c.ligand.len()
                );
                done.push(c);
            }
            Err(e) => eprintln!("warning: skipping {}: {e}", m.entry_id),
        }
    }
    if done.is_empty() {
        return Err(Error::Data("every manifest entry failed".into()));
    }
    write_atomic(out, &write_archive(&done, &vocab)?)?;
    println!(
        "wrote {} of {} entries to {}",
        done.len(),
        entries.len(),
        out.display()
    );
    Ok(())
}

fn train_cmd(cfg: &RunConfig, dataset: &Path, out: &Path, log: &Path) -> Result<()> {
    let vocab = cfg.vocabulary()?;
    let entries = read_archive(&read_text(dataset)?, &vocab)?;
    if entries.is_empty() {
        return Err(Error::Data(format!(
            "{} holds no entries",
            dataset.display()
        )));
    }
    let (model, params) = Model::initialized(cfg.model_config()?, vocab, cfg.seed)?;
    let steps = build_steps(&model, &entries, cfg.trainer.dequant_alpha, cfg.seed)?;
    let mut tc = cfg.trainer.clone();
    tc.seed = cfg.seed;
    let history_log = |h: &[f64]| {
        h.iter()
            .enumerate()
            .map(|(i, l)| format!("{}\t{l:?}\n", i + 1))
            .collect::<String>()
    };
    match train(&model, params, &steps, &tc) {
        Ok(outcome) => {
            write_atomic(log, &history_log(&outcome.history))?;
            write_atomic(out, &model.to_checkpoint(&outcome.params).to_text())?;
            match outcome.history.last() {
                Some(l) => println!(
                    "final mean NLL {l:.6} after {} epochs",
                    outcome.history.len()
                ),
                None => println!("no epochs run; wrote initial parameters"),
            }
            Ok(())
        }
        Err(Error::Diverged {
            epoch,
            loss,
            history,
        }) => {
            write_atomic(log, &history_log(&history))?;
            Err(Error::Diverged {
                epoch,
                loss,
                history,
            })
        }
        Err(e) => Err(e),
    }
}

fn load_checkpoint(path: &Path) -> Result<(Model, pocketflow::ParamSet)> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Input(format!("cannot read checkpoint {}: {e}", path.display())))?;
    Model::from_checkpoint(&Checkpoint::from_text(&text)?)
}

fn generate(
    cfg: &RunConfig,
    checkpoint: &Path,
    pocket: &Path,
    entry: Option<&str>,
    count: Option<usize>,
    out: &Path,
) -> Result<()> {
    let (model, params) = load_checkpoint(checkpoint)?;
    let vocab = model.vocab();
    let pocket = load_pocket(pocket, entry, vocab)?;
    let gen_cfg = cfg.gen_config();
    let generator = Generator::new(&model, params.values(), &gen_cfg);
    std::fs::create_dir_all(out)?;
    let count = count.unwrap_or(cfg.generator.samples);
    for i in 0..count {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(i as u64);
        let mol = generator.generate_ligand(&pocket, &mut rng)?;
        let name = format!("mol_{i:03}");
        let comment = format!("{name} seed={} stream={i}", cfg.seed);
        write_atomic(
            &out.join(format!("{name}.xyz")),
            &write_xyz(&mol.atoms, vocab, &comment)?,
        )?;
        let pdb = serialize_pdb(&ligand_records(&mol.atoms, vocab, "LIG")?)? + "END\n";
        write_atomic(&out.join(format!("{name}.pdb")), &pdb)?;
    }
    println!("wrote {count} molecules to {}", out.display());
    Ok(())
}

fn evaluate(
    cfg: &RunConfig,
    dir: &Path,
    pocket: &Path,
    entry: Option<&str>,
    reference: Option<&Path>,
    json: bool,
    out: &Path,
) -> Result<()> {
    let vocab = cfg.vocabulary()?;
    let rules = cfg.bond_rules();
    let pocket = load_pocket(pocket, entry, &vocab)?;
    let reference = reference
        .map(|p| load_molecule(p, &vocab, &rules))
        .transpose()?;
    let inputs = molecule_files(dir)?
        .iter()
        .map(|p| {
            Ok(EvalInput {
                id: p
                    .file_stem()
                    .unwrap_or_default()
                    .to_string_lossy()
                    .into_owned(),
                molecule: load_molecule(p, &vocab, &rules)?,
                reference: reference.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let report = evaluate_set(&inputs, &pocket, &vocab, &rules, &cfg.evaluator)?;
    let text = if json {
        report.to_json()?
    } else {
        report.to_tsv()
    };
    write_atomic(out, &text)?;
    let s = &report.summary;
    let opt = |x: Option<f64>| x.map_or_else(|| "NA".to_string(), |v| format!("{v:.4}"));
    println!(
        "n={} valid={} validity={:.4} mean_rmsd={} mean_pKd_valid={}",
        s.count,
        s.valid,
        s.validity_rate,
        opt(s.mean_rmsd),
        opt(s.mean_pkd)
    );
    Ok(())
}
