//! Argument parsing. Precedence: flags, then the `--config` file, then
//! built-in defaults.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::config::{ExperimentConfig, GranularityArg, Post, Scorer};
use crate::error::{CliError, Result};
use crate::pipeline;

#[derive(Debug, Parser)]
#[command(name = "isodr", version, about = "Isotropy measurement and post-processing for dense retrieval embeddings")]
pub struct Cli {
    /// JSON experiment config.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

/// Config overrides shared by the subcommands that use them.
#[derive(Debug, Default, Args)]
pub struct Overrides {
    /// Corpus transforms are fitted on (and measured).
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Corpus to re-rank; defaults to `--corpus`.
    #[arg(long)]
    pub target: Option<PathBuf>,
    #[arg(long)]
    pub qrels: Option<PathBuf>,
    #[arg(long)]
    pub candidates: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub scorer: Option<Scorer>,
    #[arg(long, value_enum)]
    pub post: Option<Post>,
    #[arg(long, value_enum)]
    pub granularity: Option<GranularityArg>,
    /// Fit separate query and document transforms.
    #[arg(long)]
    pub separate_fits: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FlowKind {
    Nice,
    Glow,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic anisotropic corpus, or the designed re-ranking scenario.
    Gen {
        #[arg(long)]
        designed: bool,
    },
    /// Isotropy report and per-dimension profile.
    Measure {
        #[command(flatten)]
        o: Overrides,
        /// Rows per batch; omit for the full matrix.
        #[arg(long)]
        batch_size: Option<usize>,
    },
    /// Fit whitening on the source corpus.
    FitWhiten {
        #[command(flatten)]
        o: Overrides,
    },
    /// Train a normalizing flow on the source corpus.
    FitFlow {
        #[command(flatten)]
        o: Overrides,
        #[arg(long, value_enum)]
        arch: Option<FlowKind>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Re-rank candidate lists with a fitted post-processor.
    Rerank {
        #[command(flatten)]
        o: Overrides,
        /// Directory holding the fitted transforms; defaults to the output directory.
        #[arg(long)]
        fit_dir: Option<PathBuf>,
    },
    /// P@20 and NDCG@10 of a run.
    Eval {
        #[command(flatten)]
        o: Overrides,
        #[arg(long)]
        run: PathBuf,
    },
    /// Compare eval reports (A against baseline B).
    Compare {
        #[arg(long, num_args = 1.., required = true)]
        a: Vec<PathBuf>,
        #[arg(long, num_args = 1.., required = true)]
        b: Vec<PathBuf>,
    },
    /// End-to-end designed scenario: fit on source, re-rank, compare with the raw baseline.
    Scenario {
        #[command(flatten)]
        o: Overrides,
        /// Build a shifted out-of-distribution target from this seed.
        #[arg(long)]
        target_seed: Option<u64>,
    },
}

impl Overrides {
    fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(p) = &self.corpus {
            cfg.source_corpus = Some(p.clone());
        }
        if let Some(p) = &self.target {
            cfg.target_corpus = Some(p.clone());
        }
        if let Some(p) = &self.qrels {
            cfg.qrels = Some(p.clone());
        }
        if let Some(p) = &self.candidates {
            cfg.candidates = Some(p.clone());
        }
        if let Some(s) = self.scorer {
            cfg.scorer = s;
        }
        if let Some(p) = self.post {
            cfg.post = p;
        }
        if let Some(g) = self.granularity {
            cfg.granularity = g;
        }
        if self.separate_fits {
            cfg.separate_fits = true;
        }
    }
}

/// Effective configuration for a parsed command line.
pub fn effective_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.output_dir = o.clone();
    }
    match &cli.command {
        Command::Gen { .. } | Command::Compare { .. } => {}
        Command::Measure { o, batch_size } => {
            o.apply(&mut cfg);
            if batch_size.is_some() {
                cfg.measure.batch_size = *batch_size;
            }
        }
        Command::FitWhiten { o } | Command::Rerank { o, .. } | Command::Eval { o, .. } => o.apply(&mut cfg),
        Command::FitFlow { o, arch, epochs } => {
            o.apply(&mut cfg);
            match arch {
                Some(FlowKind::Nice) => cfg.post = Post::Nice,
                Some(FlowKind::Glow) => cfg.post = Post::Glow,
                None => {}
            }
            if let Some(e) = epochs {
                cfg.train.epochs = *e;
            }
        }
        Command::Scenario { o, target_seed } => {
            o.apply(&mut cfg);
            if target_seed.is_some() {
                cfg.scenario.target_seed = *target_seed;
            }
        }
    }
    Ok(cfg)
}

fn pretty<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("report serializes")
}

/// Runs a parsed command and returns the text it reports on stdout.
pub fn dispatch(cli: &Cli) -> Result<String> {
    let cfg = effective_config(cli)?;
    Ok(match &cli.command {
        Command::Gen { designed } => pretty(&pipeline::gen(&cfg, *designed)?),
        Command::Measure { .. } => pretty(&pipeline::measure(&cfg)?),
        Command::FitWhiten { .. } => {
            let paths = pipeline::fit_whiten(&cfg)?;
            paths.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join("\n")
        }
        Command::FitFlow { .. } => {
            if !matches!(cfg.post, Post::Nice | Post::Glow) {
                return Err(CliError::Config("fit-flow needs --arch nice|glow (or post nice|glow in the config)".into()));
            }
            pretty(&pipeline::fit_flow(&cfg)?)
        }
        Command::Rerank { fit_dir, .. } => {
            let dir = fit_dir.clone().unwrap_or_else(|| cfg.output_dir.clone());
            pretty(&pipeline::rerank(&cfg, &dir)?)
        }
        Command::Eval { run, .. } => pretty(&pipeline::eval(&cfg, run)?),
        Command::Compare { a, b } => pretty(&pipeline::compare(&cfg, a, b)?),
        Command::Scenario { .. } => pretty(&pipeline::scenario(&cfg)?),
    })
}

/// Parses `args` and runs the command. Usage errors print clap's message
/// and surface as configuration errors (exit 2); `--help` and `--version`
/// print and succeed.
pub fn run<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { Err(CliError::Config("invalid command line".into())) } else { Ok(()) };
        }
    };
    let text = dispatch(&cli)?;
    // A closed stdout (e.g. piped into `head`) is not an error; artifacts are on disk.
    let _ = writeln!(std::io::stdout().lock(), "{text}");
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("isodr").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn flags_override_defaults() {
        let cli = parse(&["fit-flow", "--arch", "glow", "--corpus", "c.emb", "--seed", "9", "--epochs", "3"]);
        let cfg = effective_config(&cli).unwrap();
        assert_eq!(cfg.post, Post::Glow);
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.train.epochs, 3);
        assert_eq!(cfg.source_corpus, Some(PathBuf::from("c.emb")));
    }

    #[test]
    fn flags_override_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        std::fs::write(&path, r#"{"seed": 3, "scorer": "colbert", "post": "whiten"}"#).unwrap();
        let p = path.to_str().unwrap();
        let cfg = effective_config(&parse(&["rerank", "--config", p, "--scorer", "repbert"])).unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.scorer, Scorer::Repbert);
        assert_eq!(cfg.post, Post::Whiten);
    }

    #[test]
    fn compare_requires_both_sides() {
        assert!(Cli::try_parse_from(["isodr", "compare", "--a", "x.json"]).is_err());
    }
}
