use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ttaood::augment::AugmentationSpec;
use ttaood::metrics::{evaluate, DEFAULT_TPR_TARGET};
use ttaood::pack::{read_head, read_pack, read_scores, write_scores, FittedScorerArchive};
use ttaood::pipeline::{self, ClassMapping, RunManifest};
use ttaood::scorers::{self, FittedScorer, ScorerConfig, ScorerId};
use ttaood::synth::{DriftDirection, SynthConfig};
use ttaood::{Error, ErrorKind};

/// Test-time augmentation pipeline for out-of-distribution detection.
///
/// Exit codes: 0 ok, 1 usage error, 2 data error, 3 numerical failure.
#[derive(Debug, Parser)]
#[command(name = "ttaood", version)]
struct Cli {
    /// Seed for every random draw (jitter ranges, synthetic data).
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Worker threads (default: one per core). Output does not depend on it.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Output location; its meaning depends on the command.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Augment an image tree into --out (mirrored tree of PNGs).
    Augment {
        in_dir: PathBuf,
        /// Augmentation spec, e.g. "hflip+vflip+jitter".
        #[arg(long)]
        spec: String,
    },
    /// Fit mahalanobis or vim on a train pack; writes the archive to --out.
    Fit {
        scorer: ScorerId,
        #[arg(long)]
        train: PathBuf,
        /// Classifier head directory (required by vim).
        #[arg(long)]
        head: Option<PathBuf>,
        #[arg(long)]
        shrinkage: Option<f64>,
        #[arg(long)]
        subspace_dim: Option<usize>,
    },
    /// Score a pack; writes sample_id,score CSV (plus sidecar) to --out.
    Score {
        scorer: ScorerId,
        #[arg(long)]
        pack: PathBuf,
        #[arg(long)]
        archive: Option<PathBuf>,
        #[arg(long)]
        temperature: Option<f64>,
    },
    /// Evaluate ID vs OOD score files; report JSON to --out or stdout.
    Eval {
        #[arg(long)]
        id: PathBuf,
        #[arg(long)]
        ood: PathBuf,
        /// OOD test pack directory (labels are taken from it) or a
        /// sample_id,label CSV.
        #[arg(long)]
        ood_labels: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_TPR_TARGET)]
        tpr: f64,
    },
    /// Run every (view x scorer) cell of a manifest. --out overrides the
    /// manifest's output directory.
    Grid { manifest: PathBuf },
    /// Write a synthetic dataset and a ready-to-run grid manifest to --out.
    Synth {
        #[arg(long, default_value_t = 32)]
        dim: usize,
        #[arg(long, default_value_t = 3)]
        classes: usize,
        #[arg(long, default_value_t = 200)]
        per_class: usize,
        #[arg(long, default_value_t = 300)]
        ood: usize,
        #[arg(long, default_value_t = 1.0)]
        spread: f64,
        #[arg(long, default_value_t = 6.0)]
        offset: f64,
        #[arg(long, default_value_t = 1.5)]
        drift_id: f64,
        #[arg(long, default_value_t = 3.0)]
        drift_ood: f64,
        /// isotropic or evidence-reducing.
        #[arg(long, default_value = "evidence-reducing")]
        drift_direction: DriftDirection,
    },
    /// Check a pack's invariants, optionally against a head and class mapping.
    ValidatePack {
        pack: PathBuf,
        #[arg(long)]
        head: Option<PathBuf>,
        #[arg(long)]
        mapping: Option<PathBuf>,
        /// Allowed |logits - (W x + b)|.
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
    },
}

/// `println!` that ignores a closed stdout (e.g. output piped into `head`).
macro_rules! out {
    ($($arg:tt)*) => {{
        use std::io::Write;
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

fn require_out(out: &Option<PathBuf>, what: &str) -> Result<PathBuf, Error> {
    out.clone()
        .ok_or_else(|| Error::Usage(format!("--out is required ({what})")))
}

fn print_json(value: &serde_json::Value) {
    out!(
        "{}",
        serde_json::to_string_pretty(value).expect("serialisable value")
    );
}

fn load_ood_labels(path: &Path, sample_ids: &[String]) -> Result<Vec<String>, Error> {
    let by_id: HashMap<String, String> = if path.is_dir() {
        let pack = read_pack(path)?;
        pack.sample_ids
            .into_iter()
            .zip(pack.labels.iter().map(|l| l.to_string()))
            .collect()
    } else {
        let mut reader = csv::Reader::from_path(path).map_err(|e| Error::meta(path, e))?;
        let mut map = HashMap::new();
        for record in reader.records() {
            let record = record.map_err(|e| Error::meta(path, e))?;
            match (record.get(0), record.get(1)) {
                (Some(id), Some(label)) => {
                    map.insert(id.to_string(), label.to_string());
                }
                _ => return Err(Error::meta(path, "expected sample_id,label rows")),
            }
        }
        map
    };
    sample_ids
        .iter()
        .map(|id| {
            by_id.get(id).cloned().ok_or_else(|| {
                Error::InvalidLabel(format!("no OOD label for sample '{id}' in {}", path.display()))
            })
        })
        .collect()
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Augment { in_dir, spec } => {
            let out = require_out(&cli.out, "augmented image tree")?;
            let spec = AugmentationSpec::parse(&spec)?;
            let summary = pipeline::augment_tree(&in_dir, &out, &spec, cli.seed)?;
            out!(
                "augmented {} image(s) with '{}' into {}",
                summary.written,
                summary.spec,
                out.display()
            );
            for s in &summary.skipped {
                eprintln!("warning: skipped {}: {}", s.path.display(), s.reason);
            }
            if !summary.skipped.is_empty() {
                return Err(Error::InvalidImage(format!(
                    "{} image(s) could not be processed",
                    summary.skipped.len()
                )));
            }
        }
        Command::Fit {
            scorer,
            train,
            head,
            shrinkage,
            subspace_dim,
        } => {
            let config = ScorerConfig {
                shrinkage,
                subspace_dim,
                ..ScorerConfig::new(scorer)
            };
            if !scorer.needs_fit() {
                return Err(Error::Usage(format!("{scorer} requires no fitting")));
            }
            if scorer.needs_head() && head.is_none() {
                return Err(Error::Usage(format!(
                    "{scorer} needs the classifier head (--head)"
                )));
            }
            let out = require_out(&cli.out, "archive directory")?;
            let train = read_pack(&train)?;
            let head = head.map(read_head).transpose()?;
            let fitted = scorers::fit(&config, &train, head.as_ref())?;
            for w in fitted.warnings() {
                eprintln!("warning: {w}");
            }
            fitted.to_archive(&config).save(&out)?;
            print_json(&serde_json::json!({
                "archive": out,
                "scorer": scorer.as_str(),
                "diagnostics": fitted.diagnostics(),
            }));
        }
        Command::Score {
            scorer,
            pack,
            archive,
            temperature,
        } => {
            let out = require_out(&cli.out, "score CSV")?;
            let config = ScorerConfig {
                temperature,
                ..ScorerConfig::new(scorer)
            };
            let fitted = match (scorer.needs_fit(), archive) {
                (true, Some(dir)) => Some(FittedScorer::from_archive(&FittedScorerArchive::load(dir)?)?),
                (true, None) => {
                    return Err(Error::Usage(format!("{scorer} needs a fitted archive (--archive)")))
                }
                (false, _) => None,
            };
            let pack = read_pack(&pack)?;
            let scores = scorers::score_pack(&config, &pack, fitted.as_ref())?;
            write_scores(&scores, &out)?;
            out!("scored {} sample(s) into {}", scores.scores.len(), out.display());
        }
        Command::Eval {
            id,
            ood,
            ood_labels,
            tpr,
        } => {
            let id = read_scores(&id)?;
            let ood = read_scores(&ood)?;
            let labels = ood_labels
                .map(|p| load_ood_labels(&p, &ood.sample_ids))
                .transpose()?;
            let report = evaluate(&id, &ood, labels.as_deref(), tpr)?;
            let json = report.to_json()?;
            match &cli.out {
                Some(path) => {
                    std::fs::write(path, format!("{json}\n")).map_err(|e| Error::io(path, e))?;
                    out!(
                        "{} / {}: AUROC {:.4}, FPR@{:.0}%TPR {:.4}",
                        report.scorer_id,
                        report.view,
                        report.auroc,
                        tpr * 100.0,
                        report.fpr_at_tpr
                    );
                }
                None => out!("{json}"),
            }
            if report.threshold_degenerate {
                eprintln!("warning: degenerate ID scores; the TPR target is not attainable exactly");
            }
        }
        Command::Grid { manifest } => {
            let mut m = RunManifest::load(&manifest)?;
            if let Some(out) = &cli.out {
                m.output_dir = out.clone();
            }
            let run = pipeline::run_grid(&m)?;
            for w in &run.warnings {
                eprintln!("warning: {w}");
            }
            out!("{}", run.grid.to_text().trim_end());
            out!("tables written to {}", m.output_dir.display());
        }
        Command::Synth {
            dim,
            classes,
            per_class,
            ood,
            spread,
            offset,
            drift_id,
            drift_ood,
            drift_direction,
        } => {
            let out = require_out(&cli.out, "dataset directory")?;
            let config = SynthConfig {
                feature_dim: dim,
                num_classes: classes,
                n_per_class: per_class,
                n_ood: ood,
                id_spread: spread,
                ood_offset: offset,
                drift_id,
                drift_ood,
                drift_direction,
                seed: cli.seed,
            };
            pipeline::write_synth(&config, &out)?;
            out!(
                "synthetic dataset written to {} (run: ttaood grid {})",
                out.display(),
                out.join("manifest.json").display()
            );
        }
        Command::ValidatePack {
            pack,
            head,
            mapping,
            tol,
        } => {
            let p = read_pack(&pack)?;
            if let Some(mapping) = mapping {
                ClassMapping::load(mapping)?.check_pack(&p)?;
            }
            let mut summary = serde_json::json!({
                "pack": pack,
                "n": p.n(),
                "feature_dim": p.feature_dim(),
                "num_classes": p.num_classes(),
                "split": p.split.as_str(),
                "view": p.view,
                "model_id": p.model_id,
            });
            if let Some(head) = head {
                let dev = read_head(head)?.max_logit_deviation(&p)?;
                summary["max_logit_deviation"] = serde_json::json!(dev);
                if !(dev <= tol) {
                    return Err(Error::DimMismatch(format!(
                        "stored logits deviate from W x + b by {dev:e} (tolerance {tol:e})"
                    )));
                }
            }
            print_json(&summary);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build_global()
        {
            eprintln!("error: cannot start {jobs} worker(s): {e}");
            return ExitCode::from(1);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.kind() {
                ErrorKind::Usage => 1,
                ErrorKind::Data => 2,
                ErrorKind::Numerical => 3,
            })
        }
    }
}
