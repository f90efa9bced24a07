//! Command-line entry point for the part-wise skeleton action pipeline.

use clap::{Parser, Subcommand};
use riac::cass::{augment, render_cass, AugmentationSpec, RenderConfig};
use riac::config::RunConfig;
use riac::error::{Error, Result};
use riac::eval::{
    evaluate_protocol, fuse, predict_part, render_part_images, search_weights, train_part,
    FusionWeights, PartPredictions, PipelineConfig, TrainingConfig,
};
use riac::net::{ArchConfig, FormerMode, RiacNetModel};
use riac::skeleton::{
    parse_florence, parse_msr, parse_utkinect, partition, read_manifest, read_sequence,
    resample, write_corpus, ActionSequence, DatasetManifest, MsrLayout, PartLabel,
    PartitionScheme, FLORENCE_CLASSES, MSR_CLASSES, UTKINECT_CLASSES,
};
use riac::synthetic::{synthetic_corpus, SYNTHETIC_CLASSES};
use riac::tensor::{read_checkpoint, write_checkpoint};
use riac::verify::gradcheck_suite;
use rand::SeedableRng;
use std::io::Write as _;
use std::path::{Path, PathBuf};

/// Reference operating points reported for the original experiments
/// (Tables 3-5 row structure; fused accuracy with its weight vector).
const REFERENCE_TABLE: &str = "\
dataset,row,FS,HS,LL,RL,LH,RH,fused,weights
utkinect,utkinect,97.71,97.49,97.49,96.45,95.94,96.48,100.00,2 3 4 4 5
florence,florence,95.89,100.00,92.47,95.89,92.63,91.85,98.33,3 4 2 3 2
msr,AS1,94.8,96,95,98.7,96,90,96.7,2 3 3 3 3
msr,AS2,93.3,97.33,100.00,99.5,96.44,93.3,98.6,1 5 4 1 5
msr,AS3,96.5,100,98.2,100,97.3,95.4,99.9,2 4 1 1 3
msr,Overall,94.8,97.77,96.84,99.39,96.58,92.9,98.40,
";

#[derive(Parser)]
#[command(
    name = "riac",
    version,
    about = "Part-wise skeleton action recognition: CASS rendering, RIAC-Net training, weighted fusion",
    after_help = "Any configuration key may be overridden with `--key value` after the positional arguments.\nRun `riac config-keys` for the full key list."
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Parse a raw dataset into the canonical corpus and manifest
    Ingest {
        /// utkinect, florence, msr, or synthetic
        dataset: String,
        /// Raw dataset root (ignored for synthetic)
        raw: PathBuf,
        /// Output corpus directory
        out: PathBuf,
        #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
        overrides: Vec<String>,
    },
    /// Render CASS images (all parts, optional augmentation) from a corpus
    Render {
        corpus: PathBuf,
        out: PathBuf,
        #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
        overrides: Vec<String>,
    },
    /// Train one part branch on the full corpus
    Train {
        corpus: PathBuf,
        out: PathBuf,
        /// FS, HS, LL, RL, LH, or RH
        #[arg(long)]
        part: String,
        #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
        overrides: Vec<String>,
    },
    /// Predict class probabilities with a trained checkpoint
    Predict {
        corpus: PathBuf,
        checkpoint: PathBuf,
        /// Output CSV path
        out: PathBuf,
        #[arg(long)]
        part: String,
        #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
        overrides: Vec<String>,
    },
    /// Fuse five part-prediction CSVs with fixed or searched weights
    Fuse {
        /// Prediction CSVs for HS, LL, RL, LH, RH (any order; parts are
        /// read from the file headers)
        #[arg(num_args = 5)]
        predictions: Vec<PathBuf>,
        /// Comma-separated weights, e.g. 2,3,4,4,5; searched when omitted
        #[arg(long)]
        weights: Option<String>,
        /// Optional report output path
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the full evaluation protocol and write reports
    Evaluate {
        corpus: PathBuf,
        out: PathBuf,
        #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
        overrides: Vec<String>,
    },
    /// Gradient-check the autodiff engine against central differences
    Gradcheck {
        /// Only run checks whose name contains this substring
        #[arg(long)]
        scope: Option<String>,
        #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
        overrides: Vec<String>,
    },
    /// Print a previously generated evaluation report
    Report {
        /// Directory written by `riac evaluate`
        dir: PathBuf,
        /// Also print the published reference operating points
        #[arg(long)]
        reference: bool,
    },
    /// List every configuration key with its default and documentation
    ConfigKeys,
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    match run(cli) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}

/// Collects `--key value` / `--key=value` pairs from trailing arguments.
fn parse_overrides(tokens: &[String]) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    let mut it = tokens.iter();
    while let Some(tok) = it.next() {
        let key = tok.strip_prefix("--").ok_or_else(|| {
            Error::InvalidArgument(format!("expected `--key value`, got {tok:?}"))
        })?;
        if let Some((k, v)) = key.split_once('=') {
            out.push((k.to_string(), v.to_string()));
        } else {
            let value = it.next().ok_or_else(|| {
                Error::InvalidArgument(format!("missing value for --{key}"))
            })?;
            out.push((key.to_string(), value.clone()));
        }
    }
    Ok(out)
}

/// Resolves configuration: defaults, then optional `--config` file, then
/// the RIAC_OUT environment default, then the remaining `--key value`
/// overrides.
fn resolve_config(overrides: &[String]) -> Result<RunConfig> {
    let mut pairs = parse_overrides(overrides)?;
    let mut cfg = match pairs.iter().position(|(k, _)| k == "config") {
        Some(i) => {
            let (_, path) = pairs.remove(i);
            RunConfig::load(Path::new(&path))?
        }
        None => RunConfig::default(),
    };
    if let Ok(root) = std::env::var("RIAC_OUT") {
        if cfg.get("out_dir") == "out" && !pairs.iter().any(|(k, _)| k == "out_dir") {
            cfg.set("out_dir", &root)?;
        }
    }
    cfg.apply_overrides(&pairs)?;
    let jobs = cfg.get_usize("jobs")?;
    if jobs > 0 {
        // Ignore the error if a pool already exists (tests, re-entry).
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    }
    Ok(cfg)
}

fn render_config(cfg: &RunConfig) -> Result<RenderConfig> {
    Ok(RenderConfig {
        size: cfg.get_usize("image_size")?,
        margin: cfg.get_f64("margin")?,
        line_width: cfg.get_usize("line_width")?,
        ..RenderConfig::default()
    })
}

fn arch_config(cfg: &RunConfig, n_classes: usize) -> Result<ArchConfig> {
    let arch = ArchConfig {
        image_size: cfg.get_usize("image_size")?,
        branch_channels: cfg.get_usize("branch_channels")?,
        hidden: cfg.get_usize("hidden")?,
        n_classes,
        former: FormerMode::from_str(cfg.get("former"))?,
        dropout_p: cfg.get_f64("dropout")?,
        ..ArchConfig::reference(n_classes)
    };
    arch.validate()?;
    Ok(arch)
}

fn training_config(cfg: &RunConfig) -> Result<TrainingConfig> {
    let t = TrainingConfig {
        batch_size: cfg.get_usize("batch_size")?,
        lr: cfg.get_f64("lr")?,
        lr_multiplier: cfg.get_f64("lr_multiplier")?,
        lr_every: cfg.get_usize("lr_every")?,
        max_epochs: cfg.get_usize("max_epochs")?,
        patience: cfg.get_usize("patience")?,
        weight_noise: cfg.get_f64("weight_noise")?,
        val_fraction: cfg.get_f64("val_fraction")?,
        bn_freeze_epoch: cfg.get_usize("bn_freeze_epoch")?,
        seed: cfg.get_u64("seed")?,
    };
    t.validate()?;
    Ok(t)
}

fn augmentation_spec(cfg: &RunConfig) -> Result<AugmentationSpec> {
    match cfg.get("augment") {
        "full" => Ok(AugmentationSpec::full()),
        "none" => Ok(AugmentationSpec::none()),
        other => Err(Error::InvalidArgument(format!(
            "unknown augmentation menu {other:?}; valid: full, none"
        ))),
    }
}

fn pipeline_config(cfg: &RunConfig, n_classes: usize) -> Result<PipelineConfig> {
    Ok(PipelineConfig {
        arch: arch_config(cfg, n_classes)?,
        training: training_config(cfg)?,
        render: render_config(cfg)?,
        frames: cfg.get_usize("frames")?,
        augment: augmentation_spec(cfg)?,
        fusion_mode: cfg.get("fusion_mode").to_string(),
        seed: cfg.get_u64("seed")?,
    })
}

fn load_corpus(dir: &Path) -> Result<(DatasetManifest, Vec<ActionSequence>)> {
    let manifest = read_manifest(&dir.join("manifest.txt"))?;
    let mut seqs = Vec::with_capacity(manifest.entries.len());
    for e in &manifest.entries {
        let path = e.path.clone().ok_or_else(|| {
            Error::InvalidArgument(format!("manifest entry {} has no file path", e.id))
        })?;
        let path = if path.is_relative() { dir.join(path) } else { path };
        let mut seq = read_sequence(&path, &e.id)?;
        seq.subsets = e.subsets.clone();
        seqs.push(seq);
    }
    Ok((manifest, seqs))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Ingest { dataset, raw, out, overrides } => {
            let cfg = resolve_config(&overrides)?;
            let (classes, joints, seqs): (Vec<String>, usize, Vec<ActionSequence>) =
                match dataset.as_str() {
                    "utkinect" => (
                        UTKINECT_CLASSES.iter().map(|s| s.to_string()).collect(),
                        20,
                        parse_utkinect(&raw)?,
                    ),
                    "florence" => {
                        let file = if raw.is_dir() {
                            raw.join("Florence_dataset_WorldCoordinates.txt")
                        } else {
                            raw.clone()
                        };
                        (
                            FLORENCE_CLASSES.iter().map(|s| s.to_string()).collect(),
                            15,
                            parse_florence(&file)?,
                        )
                    }
                    "msr" => {
                        let layout = match cfg.get("msr_layout") {
                            "world20" => MsrLayout::World20,
                            "screenworld40" => MsrLayout::ScreenWorld40,
                            other => {
                                return Err(Error::InvalidArgument(format!(
                                    "unknown msr_layout {other:?}; valid: world20, screenworld40"
                                )))
                            }
                        };
                        (
                            MSR_CLASSES.iter().map(|s| s.to_string()).collect(),
                            20,
                            parse_msr(&raw, layout)?,
                        )
                    }
                    "synthetic" => (
                        SYNTHETIC_CLASSES.iter().map(|s| s.to_string()).collect(),
                        20,
                        synthetic_corpus(10, 40, cfg.get_u64("seed")?),
                    ),
                    other => {
                        return Err(Error::InvalidArgument(format!(
                            "unknown dataset {other:?}; valid: utkinect, florence, msr, synthetic"
                        )))
                    }
                };
            write_corpus(&out, &dataset, &classes, joints, &seqs)?;
            cfg.write_resolved(&out)?;
            println!("{} sequences", seqs.len());
            Ok(())
        }

        Cmd::Render { corpus, out, overrides } => {
            let cfg = resolve_config(&overrides)?;
            let (_, seqs) = load_corpus(&corpus)?;
            let rc = render_config(&cfg)?;
            let frames = cfg.get_usize("frames")?;
            let spec = augmentation_spec(&cfg)?;
            std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            let index_path = out.join("index.csv");
            let mut index = std::fs::File::create(&index_path)
                .map_err(|e| Error::io(&index_path, e))?;
            writeln!(index, "id,part,label,suffix,path").map_err(|e| Error::io(&index_path, e))?;
            let mut count = 0usize;
            for seq in &seqs {
                let seq = resample(seq, frames)?;
                let scheme = PartitionScheme::for_joint_count(seq.joint_count())?;
                for traj in partition(&seq, &scheme)? {
                    let dir = out.join(traj.part.as_str());
                    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
                    let image = render_cass(&traj, &rc, &seq.id)?;
                    for (suffix, img) in augment(&image, &spec)? {
                        let name = if suffix.is_empty() {
                            format!("{}.ppm", seq.id)
                        } else {
                            format!("{}#{suffix}.ppm", seq.id)
                        };
                        let path = dir.join(&name);
                        riac::cass::write_ppm(&path, &img)?;
                        writeln!(
                            index,
                            "{},{},{},{},{}",
                            seq.id,
                            traj.part,
                            seq.label,
                            suffix,
                            path.display()
                        )
                        .map_err(|e| Error::io(&index_path, e))?;
                        count += 1;
                    }
                }
            }
            cfg.write_resolved(&out)?;
            println!("{count} images");
            Ok(())
        }

        Cmd::Train { corpus, out, part, overrides } => {
            let cfg = resolve_config(&overrides)?;
            let part = PartLabel::from_str(&part)?;
            let (manifest, seqs) = load_corpus(&corpus)?;
            let arch = arch_config(&cfg, manifest.class_names.len())?;
            let tcfg = training_config(&cfg)?;
            let rc = render_config(&cfg)?;
            let scheme = PartitionScheme::for_joint_count(manifest.joint_count)?;
            let images = render_part_images(
                &seqs,
                &scheme,
                &rc,
                cfg.get_usize("frames")?,
                &[part],
                Some(&augmentation_spec(&cfg)?),
            )?;
            let (model, history) = train_part(&images[&part], &arch, &tcfg, part)?;
            std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            write_checkpoint(&out.join(format!("{part}.ckpt")), &model.to_named_tensors())?;
            write_file(&out.join(format!("{part}.history.csv")), &history.to_csv())?;
            write_file(&out.join(format!("{part}.arch.txt")), &model.architecture_description())?;
            cfg.write_resolved(&out)?;
            let last = history.epochs.last().expect("at least one epoch ran");
            println!(
                "part {part}: {} epochs, best epoch {}, train acc {:.4}, val loss {:.6}",
                history.epochs.len(),
                history.best_epoch,
                last.train_acc,
                last.val_loss
            );
            Ok(())
        }

        Cmd::Predict { corpus, checkpoint, out, part, overrides } => {
            let cfg = resolve_config(&overrides)?;
            let part = PartLabel::from_str(&part)?;
            let (manifest, seqs) = load_corpus(&corpus)?;
            let arch = arch_config(&cfg, manifest.class_names.len())?;
            if !checkpoint.exists() {
                return Err(Error::io(
                    &checkpoint,
                    std::io::Error::new(std::io::ErrorKind::NotFound, "checkpoint not found"),
                ));
            }
            let entries = read_checkpoint(&checkpoint)?;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
            let mut model = RiacNetModel::new(arch, &mut rng)?;
            model.load_named_tensors(&entries)?;
            let scheme = PartitionScheme::for_joint_count(manifest.joint_count)?;
            let images = render_part_images(
                &seqs,
                &scheme,
                &render_config(&cfg)?,
                cfg.get_usize("frames")?,
                &[part],
                None,
            )?;
            let preds = predict_part(&model, &images[&part], part)?;
            write_file(&out, &preds.to_csv(&manifest.class_names))?;
            println!("{} predictions", preds.ids.len());
            Ok(())
        }

        Cmd::Fuse { predictions, weights, out } => {
            let mut loaded = Vec::new();
            for p in &predictions {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                loaded.push(PartPredictions::from_csv(&text, p)?);
            }
            let mut resolved = Vec::new();
            for want in PartLabel::PARTS {
                let found = loaded.iter().find(|p| p.part == want).cloned().ok_or_else(|| {
                    Error::InvalidArgument(format!("no prediction file for part {want}"))
                })?;
                resolved.push(found);
            }
            let parts: [PartPredictions; 5] =
                resolved.try_into().map_err(|_| Error::Shape("expected five parts".into()))?;
            let (w, searched) = match weights {
                Some(s) => (FusionWeights::parse(&s)?, false),
                None => (search_weights(&parts)?.0, true),
            };
            let fused = fuse(w, &parts)?;
            let mut report = String::from("part,accuracy\n");
            for p in &parts {
                let predicted: Vec<usize> =
                    p.probs.iter().map(|r| riac::eval::argmax(r)).collect();
                report.push_str(&format!(
                    "{},{:.4}\n",
                    p.part,
                    riac::eval::accuracy(&predicted, &p.labels)
                ));
            }
            report.push_str(&format!(
                "fused{},{:.4} weights {{{w}}}\n",
                if searched { " (searched)" } else { "" },
                fused.accuracy()
            ));
            print!("{report}");
            if let Some(out) = out {
                write_file(&out, &report)?;
            }
            Ok(())
        }

        Cmd::Evaluate { corpus, out, overrides } => {
            let cfg = resolve_config(&overrides)?;
            let (manifest, seqs) = load_corpus(&corpus)?;
            let pcfg = pipeline_config(&cfg, manifest.class_names.len())?;
            let report = evaluate_protocol(
                &seqs,
                &manifest.class_names,
                &manifest.dataset,
                cfg.get("protocol"),
                &pcfg,
            )?;
            std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            write_file(&out.join("report.txt"), &report.to_text())?;
            write_file(&out.join("table.csv"), &report.table_csv())?;
            cfg.write_resolved(&out)?;
            print!("{}", report.table_csv());
            Ok(())
        }

        Cmd::Gradcheck { scope, overrides } => {
            let cfg = resolve_config(&overrides)?;
            let results = gradcheck_suite(scope.as_deref(), cfg.get_u64("seed")?)?;
            let mut failed = 0usize;
            println!("{:<20} {:>14} {:>10}  result", "check", "max rel err", "threshold");
            for r in &results {
                println!(
                    "{:<20} {:>14.3e} {:>10.0e}  {}",
                    r.name,
                    r.max_rel_err,
                    r.threshold,
                    if r.passed() { "pass" } else { "FAIL" }
                );
                if !r.passed() {
                    failed += 1;
                }
            }
            if failed > 0 {
                return Err(Error::Verification(format!(
                    "{failed} of {} gradient checks failed",
                    results.len()
                )));
            }
            Ok(())
        }

        Cmd::Report { dir, reference } => {
            let path = dir.join("report.txt");
            let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            print!("{text}");
            if reference {
                println!("\n[reference operating points]");
                print!("{REFERENCE_TABLE}");
            }
            Ok(())
        }

        Cmd::ConfigKeys => {
            print!("{}", RunConfig::describe_keys());
            Ok(())
        }
    }
}
