//! `bginv` command line: one subcommand per pipeline stage, plus the annotation server.

pub mod server;

use std::path::PathBuf;

use bginv_core::assessor::{AssessorKind, EvalConfig, TrainParams};
use bginv_core::mining::MinSupport;
use bginv_core::pipeline::{self, BaselineInputs, Miner};
use bginv_core::search::SearchParams;
use bginv_core::signals::{Dif, Modality};
use bginv_core::synth::{self, SynthSpec};
use bginv_core::{RbfConfigF64, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

#[derive(Parser, Debug)]
#[command(name = "bginv", version, about = "Background-invariance testing pipeline")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Mine frequent keyword pairs from the background corpus.
    Mine {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "fpgrowth")]
        miner: Miner,
        /// Absolute support count.
        #[arg(long, default_value_t = 3, conflicts_with = "min_support_fraction")]
        min_support: u64,
        /// Support as a fraction of background images; overrides the count.
        #[arg(long)]
        min_support_fraction: Option<f64>,
    },
    /// Turn mined supports into a directed confidence graph.
    BuildOntology {
        #[arg(long)]
        support: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.0)]
        min_confidence: f64,
    },
    /// Print the expansion levels of a keyword set.
    Expand {
        #[arg(long)]
        ontology: PathBuf,
        #[arg(long = "keyword", required = true)]
        keywords: Vec<String>,
        #[arg(long, default_value_t = 4)]
        max_level: usize,
    },
    /// Sample backgrounds per target and write the composition manifest.
    Search {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        ontology: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        search: SearchArgs,
    },
    /// Attach semantic distances to a manifest.
    Distances {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        ontology: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 4)]
        max_level: usize,
    },
    /// Build one point cloud per (model, position).
    Pointcloud {
        #[arg(long)]
        measurements: PathBuf,
        /// Manifest with distances.
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value = "max")]
        modality: Modality,
        #[arg(long, default_value = "subtract")]
        dif: Dif,
    },
    /// Interpolate point clouds into variance matrices.
    Resample {
        #[arg(long)]
        clouds: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        rbf: RbfArgs,
    },
    /// Render matrices (and optionally scatter plots) as PNG.
    Render {
        #[arg(long)]
        matrices: PathBuf,
        #[arg(long)]
        clouds: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 8)]
        scale: usize,
    },
    /// Extract the feature table from a directory of matrices.
    Features {
        #[arg(long)]
        matrices: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve the annotation API and UI.
    AnnotateServe {
        #[arg(long)]
        matrices: PathBuf,
        #[arg(long)]
        renders: PathBuf,
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long)]
        static_dir: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: String,
    },
    /// Train one assessor on majority-vote labels.
    Train {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long, default_value = "random_forest")]
        kind: AssessorKind,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 100)]
        trees: usize,
        #[arg(long, default_value_t = 50)]
        rounds: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        baseline: BaselineArgs,
    },
    /// Label every model in a feature table with a trained assessor.
    Assess {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        baseline: BaselineArgs,
    },
    /// Repeated stratified train/test evaluation.
    Evaluate {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10)]
        repeats: usize,
        #[arg(long, default_value_t = 2.0 / 3.0)]
        train_frac: f64,
        #[arg(long, default_value_t = 100)]
        trees: usize,
        #[arg(long, default_value_t = 50)]
        rounds: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Comma-separated; the first fills the headline numbers.
        #[arg(long, value_delimiter = ',', default_value = "random_forest,adaboost")]
        kinds: Vec<AssessorKind>,
        #[command(flatten)]
        baseline: BaselineArgs,
    },
    /// Write a synthetic repository and a matching pipeline config.
    Synth {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 8)]
        keywords: usize,
        #[arg(long, default_value_t = 70)]
        backgrounds: usize,
        #[arg(long, default_value_t = 10)]
        targets: usize,
        #[arg(long, default_value_t = 8)]
        n: usize,
        #[arg(long, default_value_t = 20)]
        models_per_profile: usize,
        #[arg(long, default_value_t = 0.02)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 3)]
        annotators: usize,
        #[arg(long, default_value_t = 0.0)]
        label_noise: f64,
    },
    /// Run every stage from one config file.
    Pipeline {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Args, Debug)]
pub struct SearchArgs {
    #[arg(long, default_value_t = 10)]
    pub n: usize,
    #[arg(long, default_value_t = 4)]
    pub max_level: usize,
    /// Comma-separated per-level weights; default uniform.
    #[arg(long, value_delimiter = ',')]
    pub weights: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct RbfArgs {
    #[arg(long, default_value_t = 32)]
    pub r: usize,
    #[arg(long, default_value_t = 32.0)]
    pub radius: f64,
    #[arg(long, default_value_t = 10.0)]
    pub sigma: f64,
    #[arg(long = "k", default_value_t = 32)]
    pub k: usize,
}

/// Inputs of the worst-case baseline.
#[derive(Args, Debug)]
pub struct BaselineArgs {
    #[arg(long, requires = "manifest")]
    pub measurements: Option<PathBuf>,
    /// Manifest with distances.
    #[arg(long, requires = "measurements")]
    pub manifest: Option<PathBuf>,
    #[arg(long, default_value = "max")]
    pub modality: Modality,
}

impl BaselineArgs {
    fn inputs(&self) -> Option<BaselineInputs<'_>> {
        match (&self.measurements, &self.manifest) {
            (Some(measurements), Some(manifest)) => Some(BaselineInputs {
                measurements,
                manifest,
                modality: self.modality,
            }),
            _ => None,
        }
    }
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Mine { .. } => "mine",
            Command::BuildOntology { .. } => "build-ontology",
            Command::Expand { .. } => "expand",
            Command::Search { .. } => "search",
            Command::Distances { .. } => "distances",
            Command::Pointcloud { .. } => "pointcloud",
            Command::Resample { .. } => "resample",
            Command::Render { .. } => "render",
            Command::Features { .. } => "features",
            Command::AnnotateServe { .. } => "annotate-serve",
            Command::Train { .. } => "train",
            Command::Assess { .. } => "assess",
            Command::Evaluate { .. } => "evaluate",
            Command::Synth { .. } => "synth",
            Command::Pipeline { .. } => "pipeline",
        }
    }
}

pub fn execute(cmd: &Command) -> Result<Value> {
    match cmd {
        Command::Mine {
            corpus,
            out,
            miner,
            min_support,
            min_support_fraction,
        } => {
            let ms = match min_support_fraction {
                Some(f) => MinSupport::Fraction(*f),
                None => MinSupport::Count(*min_support),
            };
            pipeline::mine(corpus, *miner, ms, out)
        }
        Command::BuildOntology {
            support,
            out,
            min_confidence,
        } => pipeline::ontology(support, *min_confidence, out),
        Command::Expand {
            ontology,
            keywords,
            max_level,
        } => pipeline::expand(ontology, keywords, *max_level),
        Command::Search {
            corpus,
            ontology,
            out,
            search,
        } => {
            let params = SearchParams {
                n: search.n,
                max_level: search.max_level,
                weights: search.weights.clone(),
                seed: search.seed,
            };
            pipeline::search(corpus, ontology, &params, out)
        }
        Command::Distances {
            corpus,
            ontology,
            manifest,
            out,
            max_level,
        } => pipeline::distances(corpus, ontology, manifest, *max_level, out),
        Command::Pointcloud {
            measurements,
            manifest,
            out_dir,
            modality,
            dif,
        } => pipeline::pointclouds(measurements, manifest, *modality, *dif, out_dir),
        Command::Resample { clouds, out_dir, rbf } => {
            let cfg = RbfConfigF64 {
                r: rbf.r,
                radius: rbf.radius,
                sigma: rbf.sigma,
                k: rbf.k,
            };
            pipeline::resample(clouds, &cfg, out_dir)
        }
        Command::Render {
            matrices,
            clouds,
            out_dir,
            scale,
        } => pipeline::render(matrices, clouds.as_deref(), *scale, out_dir),
        Command::Features { matrices, out } => pipeline::features(matrices, out),
        Command::AnnotateServe {
            matrices,
            renders,
            annotations,
            static_dir,
            bind,
        } => {
            let cfg = server::ServerConfig {
                matrices: matrices.clone(),
                renders: renders.clone(),
                annotations: annotations.clone(),
                static_dir: static_dir.clone(),
            };
            server::serve(&cfg, bind)?;
            Ok(json!({ "stage": "annotate-serve", "bind": bind }))
        }
        Command::Train {
            features,
            annotations,
            kind,
            out,
            trees,
            rounds,
            seed,
            baseline,
        } => {
            let params = TrainParams {
                trees: *trees,
                rounds: *rounds,
                seed: *seed,
            };
            pipeline::train(features, annotations, *kind, &params, baseline.inputs(), out)
        }
        Command::Assess {
            model,
            features,
            out,
            baseline,
        } => pipeline::assess(model, features, baseline.inputs(), out),
        Command::Evaluate {
            features,
            annotations,
            out,
            repeats,
            train_frac,
            trees,
            rounds,
            seed,
            kinds,
            baseline,
        } => {
            let cfg = EvalConfig {
                repeats: *repeats,
                train_frac: *train_frac,
                trees: *trees,
                rounds: *rounds,
                seed: *seed,
            };
            pipeline::evaluate(features, annotations, &cfg, kinds, baseline.inputs(), out)
        }
        Command::Synth {
            out_dir,
            keywords,
            backgrounds,
            targets,
            n,
            models_per_profile,
            noise,
            seed,
            annotators,
            label_noise,
        } => {
            let spec = SynthSpec {
                keywords: *keywords,
                backgrounds: *backgrounds,
                targets: *targets,
                n: *n,
                models_per_profile: *models_per_profile,
                noise: *noise,
                seed: *seed,
                annotators: *annotators,
                label_noise: *label_noise,
            };
            let bundle = synth::generate(&spec)?;
            bundle.write(out_dir)?;
            Ok(json!({
                "stage": "synth",
                "models": bundle.profiles.len(),
                "targets": bundle.manifest.by_target().len(),
                "testing_images": bundle.manifest.rows.len(),
                "measurements": bundle.measurements.len(),
                "out": out_dir.display().to_string(),
            }))
        }
        Command::Pipeline { config } => pipeline::run_pipeline(config),
    }
}

/// Parses `args`, runs the subcommand, prints its one-line summary and
/// returns the process exit code.
pub fn run<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(&cli.command) {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("bginv {}: {e}", cli.command.name());
            1
        }
    }
}
