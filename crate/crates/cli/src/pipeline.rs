//! Subcommand implementations. Each reads its inputs through a [`ReadLog`]
//! and writes its artifacts under `output_dir`, so every artifact carries
//! the effective config hash, the seed and the hashes of what was read.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use isodr_core::corpus::{generate_anisotropic, pool_sequences};
use isodr_core::evaluation::{evaluate, percent_change, ttest_one_tailed, RankingRun};
use isodr_core::flows::{train_flow, FlowModel};
use isodr_core::isotropy::{dimension_profile, measure as measure_isotropy, BatchSize, CosineMode};
use isodr_core::scenario::{build_designed_scenario, Scenario};
use isodr_core::scoring::{rank_candidates, transform_corpus, PostProcessor, Transform};
use isodr_core::whitening::fit_whitening;
use isodr_core::{EmbeddingCorpus, EmbeddingMatrix, Error, SequenceKind};

use crate::config::{ExperimentConfig, GranularityArg, Post};
use crate::error::{CliError, Result};
use crate::formats::emb::{load_corpus, save_corpus};
use crate::formats::flw::{load_flow, save_flow};
use crate::formats::wht::{load_whitening, save_whitening};
use crate::provenance::{Provenance, ReadLog};
use crate::reports::{
    read_json, write_json, write_profile_csv, CompareJson, EvalJson, EvalSummary, GenJson, IsotropyJson, Metric,
    MetricComparison, RerankJson, ScenarioJson, TTestJson, TrainJson, TransformUse,
};
use crate::text::{load_candidates, load_qrels, load_run, save_candidates, save_qrels, save_run};

fn provenance(cfg: &ExperimentConfig, log: &ReadLog, command: &str) -> Provenance {
    log.provenance(command, &cfg.sha256(), cfg.seed)
}

fn kind_suffix(kind: Option<SequenceKind>) -> &'static str {
    match kind {
        None => "",
        Some(SequenceKind::Query) => ".query",
        Some(SequenceKind::Document) => ".document",
    }
}

/// File name of a fitted transform inside a fit directory.
pub fn transform_path(dir: &Path, post: Post, kind: Option<SequenceKind>) -> Result<PathBuf> {
    let (stem, ext) = match post {
        Post::Whiten => ("whitening", "wht"),
        Post::Nice => ("nice", "flw"),
        Post::Glow => ("glow", "flw"),
        Post::None => return Err(CliError::Config("post 'none' has no fitted transform".into())),
    };
    Ok(dir.join(format!("{stem}{}.{ext}", kind_suffix(kind))))
}

fn fit_kinds(cfg: &ExperimentConfig) -> Vec<Option<SequenceKind>> {
    if cfg.separate_fits {
        vec![Some(SequenceKind::Query), Some(SequenceKind::Document)]
    } else {
        vec![None]
    }
}

/// Rows a transform is fitted on: token rows (token-wise) or pooled
/// sequence vectors (sequence-wise), optionally restricted to one kind.
pub fn fit_rows(corpus: &EmbeddingCorpus, granularity: GranularityArg, kind: Option<SequenceKind>) -> EmbeddingMatrix {
    match (granularity, kind) {
        (GranularityArg::TokenWise, None) => corpus.matrix().clone(),
        (GranularityArg::TokenWise, Some(k)) => corpus.rows_of_kind(k),
        (GranularityArg::SequenceWise, kind) => {
            let pooled = pool_sequences(corpus);
            let idx: Vec<usize> = corpus
                .sequences()
                .iter()
                .enumerate()
                .filter(|(_, s)| kind.is_none_or(|k| s.kind == k))
                .map(|(i, _)| i)
                .collect();
            pooled.select_rows(&idx)
        }
    }
}

fn write_scenario(s: &Scenario, dir: &Path) -> Result<Vec<PathBuf>> {
    let files = vec![dir.join("corpus.emb"), dir.join("qrels.txt"), dir.join("candidates.jsonl")];
    save_corpus(&s.corpus, &files[0])?;
    save_qrels(&s.qrels, &files[1])?;
    save_candidates(&s.candidates, &files[2])?;
    Ok(files)
}

/// Writes a synthetic anisotropic corpus, or with `designed` the designed
/// re-ranking scenario (corpus, qrels and candidates).
pub fn gen(cfg: &ExperimentConfig, designed: bool) -> Result<GenJson> {
    cfg.validate()?;
    let out = &cfg.output_dir;
    let (kind, corpus, files) = if designed {
        let s = build_designed_scenario(&cfg.scenario.params(cfg.seed))?;
        let files = write_scenario(&s, out)?;
        ("designed", s.corpus, files)
    } else {
        let c = generate_anisotropic(&cfg.synth.params(cfg.seed))?;
        let path = out.join("corpus.emb");
        save_corpus(&c, &path)?;
        ("anisotropic", c, vec![path])
    };
    let report = GenJson {
        kind: kind.into(),
        n_rows: corpus.matrix().n_rows(),
        dim: corpus.dim(),
        n_sequences: corpus.sequences().len(),
        files: files.iter().map(|p| p.display().to_string()).collect(),
        provenance: provenance(cfg, &ReadLog::new(), "gen"),
    };
    write_json(&report, &out.join("gen.json"))?;
    Ok(report)
}

/// Isotropy report and per-dimension profile of the source corpus.
pub fn measure(cfg: &ExperimentConfig) -> Result<IsotropyJson> {
    cfg.validate()?;
    let mut log = ReadLog::new();
    let corpus = load_corpus(cfg.source()?, &mut log)?;
    let w = corpus.matrix();
    let batch = match cfg.measure.batch_size {
        None => BatchSize::Full,
        Some(n) => BatchSize::Rows(n),
    };
    let rows_per_batch = match batch {
        BatchSize::Full => w.n_rows(),
        BatchSize::Rows(n) => n.min(w.n_rows()),
    };
    let mode = match cfg.measure.cosine_pairs {
        Some(pairs) => CosineMode::Sampled { pairs, seed: cfg.seed },
        None => CosineMode::auto(rows_per_batch, cfg.seed),
    };
    let report = measure_isotropy(w, batch, mode)?;
    let profile = dimension_profile(w, cfg.measure.outlier_factor)?;
    let json = IsotropyJson::new(&report, provenance(cfg, &log, "measure"));
    write_json(&json, &cfg.output_dir.join("isotropy.json"))?;
    write_profile_csv(&profile, &cfg.output_dir.join("profile.csv"))?;
    Ok(json)
}

/// Fits whitening on the source corpus only.
pub fn fit_whiten(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let mut log = ReadLog::new();
    let corpus = load_corpus(cfg.source()?, &mut log)?;
    let mut written = Vec::new();
    for kind in fit_kinds(cfg) {
        let rows = fit_rows(&corpus, cfg.granularity, kind);
        let t = fit_whitening(&rows, cfg.whitening.eps_rel)?;
        let path = transform_path(&cfg.output_dir, Post::Whiten, kind)?;
        save_whitening(&t, Some(&provenance(cfg, &log, "fit-whiten")), &path)?;
        written.push(path);
    }
    Ok(written)
}

/// Trains the configured flow (`post` = nice or glow) on the source corpus only.
pub fn fit_flow(cfg: &ExperimentConfig) -> Result<Vec<TrainJson>> {
    cfg.validate()?;
    let arch = cfg.flow_arch()?;
    let train = cfg.train_config();
    train.validate()?;
    let mut log = ReadLog::new();
    let corpus = load_corpus(cfg.source()?, &mut log)?;
    let mut reports = Vec::new();
    for kind in fit_kinds(cfg) {
        let rows = fit_rows(&corpus, cfg.granularity, kind);
        let (model, rep) = train_flow(&rows, &arch, &train)?;
        let prov = provenance(cfg, &log, "fit-flow");
        save_flow(&model, Some(&prov), &transform_path(&cfg.output_dir, cfg.post, kind)?)?;
        let json = TrainJson {
            arch: cfg.post.name().into(),
            fitted_on_rows: rows.n_rows(),
            initial_nll: rep.initial_nll,
            epoch_nll: rep.epoch_nll,
            steps: rep.steps,
            checksum: format!("{:016x}", rep.checksum),
            provenance: prov,
        };
        write_json(&json, &cfg.output_dir.join(format!("train{}.json", kind_suffix(kind))))?;
        reports.push(json);
    }
    Ok(reports)
}

fn load_transform(cfg: &ExperimentConfig, path: &Path, log: &mut ReadLog) -> Result<(Transform, Option<Provenance>)> {
    Ok(match cfg.post {
        Post::None => (Transform::Identity, None),
        Post::Whiten => {
            let (t, prov) = load_whitening(path, log)?;
            (Transform::Whitening(t), prov)
        }
        Post::Nice | Post::Glow => {
            let (m, prov) = load_flow(path, log)?;
            let matches = matches!((&m, cfg.post), (FlowModel::Nice(_), Post::Nice) | (FlowModel::Glow(_), Post::Glow));
            if !matches {
                return Err(CliError::Config(format!("{} does not hold a {} model", path.display(), cfg.post.name())));
            }
            (Transform::Flow(m), prov)
        }
    })
}

/// Applies fitted transforms from `fit_dir` to the target corpus, scores
/// every candidate list and writes `run.txt` and `rerank.json`.
///
/// Out of distribution, a transform whose fit provenance lists the target
/// corpus hash is rejected.
pub fn rerank(cfg: &ExperimentConfig, fit_dir: &Path) -> Result<RerankJson> {
    cfg.validate()?;
    let mut log = ReadLog::new();
    let target_path = cfg.target()?;
    let target = load_corpus(target_path, &mut log)?;
    let target_sha256 = log.records()[0].sha256.clone();
    let candidates = load_candidates(cfg.candidates_path()?, &mut log)?;
    let ood = cfg.is_ood()?;

    let granularity = cfg.granularity.granularity();
    let mut uses = Vec::new();
    let post = if cfg.post == Post::None {
        PostProcessor { granularity, ..PostProcessor::none() }
    } else {
        let mut transforms = Vec::new();
        for kind in fit_kinds(cfg) {
            let path = transform_path(fit_dir, cfg.post, kind)?;
            let (t, prov) = load_transform(cfg, &path, &mut log)?;
            let fit_provenance = prov.ok_or_else(|| {
                CliError::in_file(&path, Error::Integrity("transform carries no fit provenance".into()))
            })?;
            let sha256 = log.records().last().expect("transform was just read").sha256.clone();
            uses.push(TransformUse {
                path: path.display().to_string(),
                sha256,
                kind: kind.map_or("all", |k| k.as_str()).into(),
                fit_provenance,
            });
            transforms.push(t);
        }
        let mut it = transforms.into_iter();
        let first = it.next().expect("at least one fit");
        match it.next() {
            Some(doc) => PostProcessor::separate(first, doc, granularity),
            None => PostProcessor::shared(first, granularity),
        }
    };
    let target_unseen_by_fit = uses.iter().all(|u| !u.fit_provenance.read_hash(&target_sha256));
    if ood && !target_unseen_by_fit {
        return Err(CliError::in_file(
            target_path,
            Error::Integrity("out-of-distribution target corpus was read while fitting the transform".into()),
        ));
    }

    let prepared = transform_corpus(&target, &post)?;
    let tag = cfg.run_tag();
    let mut run = RankingRun::new(tag.clone());
    for c in &candidates {
        let ranked = rank_candidates(&prepared, &c.qid, &c.docs, cfg.scorer.kind(), &PostProcessor::none())?;
        run.insert_ranked(c.qid.clone(), &ranked)?;
    }
    save_run(&run, &cfg.output_dir.join("run.txt"))?;
    let report = RerankJson {
        run_tag: tag,
        scorer: cfg.scorer.name().into(),
        post: cfg.post.name().into(),
        granularity: match cfg.granularity {
            GranularityArg::TokenWise => "token_wise".into(),
            GranularityArg::SequenceWise => "sequence_wise".into(),
        },
        out_of_distribution: ood,
        target_corpus: target_path.display().to_string(),
        target_sha256,
        target_unseen_by_fit,
        transforms: uses,
        n_queries: run.n_queries(),
        provenance: provenance(cfg, &log, "rerank"),
    };
    write_json(&report, &cfg.output_dir.join("rerank.json"))?;
    Ok(report)
}

/// Evaluates a run file against the configured qrels.
pub fn eval(cfg: &ExperimentConfig, run_path: &Path) -> Result<EvalJson> {
    cfg.validate()?;
    let mut log = ReadLog::new();
    let run = load_run(run_path, &mut log)?;
    let qrels = load_qrels(cfg.qrels_path()?, &mut log)?;
    let report = evaluate(&run, &qrels).map_err(|e| CliError::in_file(run_path, e))?;
    let json = EvalJson::new(&run.tag, &report, provenance(cfg, &log, "eval"));
    write_json(&json, &cfg.output_dir.join("eval.json"))?;
    Ok(json)
}

/// Compares eval reports: several per side gives a seed-level test over
/// report means, one per side a query-level test over per-query values.
pub fn compare_reports(a: &[EvalJson], b: &[EvalJson]) -> Result<(String, BTreeMap<String, MetricComparison>)> {
    let level = match (a.len(), b.len()) {
        (1, 1) => "query",
        (x, y) if x >= 2 && y >= 2 => "seed",
        (x, y) => {
            return Err(CliError::Config(format!(
                "compare needs one report per side (query level) or at least two per side (seed level); got {x} and {y}"
            )))
        }
    };
    let mut metrics = BTreeMap::new();
    for m in Metric::ALL {
        let samples = |side: &[EvalJson]| -> Vec<f64> {
            if level == "query" {
                side[0].per_query_values(m)
            } else {
                side.iter().map(|r| r.metric(m)).collect()
            }
        };
        let (sa, sb) = (samples(a), samples(b));
        let mean = |s: &[f64]| if s.is_empty() { 0.0 } else { s.iter().sum::<f64>() / s.len() as f64 };
        let (mean_a, mean_b) = (mean(&sa), mean(&sb));
        let (ttest, ttest_note) = match ttest_one_tailed(&sa, &sb) {
            Ok(t) => (Some(TTestJson { t: t.t, p_one_tailed: t.p, df: t.df }), None),
            Err(e @ (Error::DegenerateVariance | Error::InsufficientData { .. })) => (None, Some(e.to_string())),
            Err(e) => return Err(e.into()),
        };
        metrics.insert(
            m.key().to_string(),
            MetricComparison {
                mean_a,
                mean_b,
                percent_change: percent_change(mean_b, mean_a).ok(),
                n_a: sa.len(),
                n_b: sb.len(),
                ttest,
                ttest_note,
            },
        );
    }
    Ok((level.into(), metrics))
}

pub fn compare(cfg: &ExperimentConfig, a: &[PathBuf], b: &[PathBuf]) -> Result<CompareJson> {
    cfg.validate()?;
    let mut log = ReadLog::new();
    let mut load = |paths: &[PathBuf]| -> Result<Vec<EvalJson>> {
        paths.iter().map(|p| read_json(&log.read(p)?, p)).collect()
    };
    let (ra, rb) = (load(a)?, load(b)?);
    let (level, metrics) = compare_reports(&ra, &rb)?;
    let json = CompareJson {
        level,
        runs_a: ra.iter().map(|r| r.run_tag.clone()).collect(),
        runs_b: rb.iter().map(|r| r.run_tag.clone()).collect(),
        metrics,
        provenance: provenance(cfg, &log, "compare"),
    };
    write_json(&json, &cfg.output_dir.join("compare.json"))?;
    Ok(json)
}

/// End-to-end designed-scenario experiment.
///
/// Builds the source scenario from `seed` (and a shifted target from
/// `scenario.target_seed` when set), fits the configured post-processor on
/// the source, re-ranks the target with and without it, and compares the
/// two at query level. Layout under `output_dir`: `source/`, `target/`,
/// `baseline/`, `treatment/`, `summary.json`.
pub fn scenario(cfg: &ExperimentConfig) -> Result<ScenarioJson> {
    cfg.validate()?;
    let out = &cfg.output_dir;
    let source = build_designed_scenario(&cfg.scenario.params(cfg.seed))?;
    let source_files = write_scenario(&source, &out.join("source"))?;
    let target_files = match cfg.scenario.target_params() {
        Some(p) => write_scenario(&build_designed_scenario(&p)?, &out.join("target"))?,
        None => source_files.clone(),
    };
    let derived = ExperimentConfig {
        source_corpus: Some(source_files[0].clone()),
        target_corpus: Some(target_files[0].clone()),
        qrels: Some(target_files[1].clone()),
        candidates: Some(target_files[2].clone()),
        ..cfg.clone()
    };

    let baseline_cfg = ExperimentConfig { post: Post::None, output_dir: out.join("baseline"), ..derived.clone() };
    rerank(&baseline_cfg, &baseline_cfg.output_dir)?;
    let baseline = eval(&baseline_cfg, &baseline_cfg.output_dir.join("run.txt"))?;

    let treatment_cfg = ExperimentConfig { output_dir: out.join("treatment"), ..derived };
    match treatment_cfg.post {
        Post::None => {}
        Post::Whiten => {
            fit_whiten(&treatment_cfg)?;
        }
        Post::Nice | Post::Glow => {
            fit_flow(&treatment_cfg)?;
        }
    }
    let rr = rerank(&treatment_cfg, &treatment_cfg.output_dir)?;
    let treatment = eval(&treatment_cfg, &treatment_cfg.output_dir.join("run.txt"))?;

    let (_, comparison) = compare_reports(std::slice::from_ref(&treatment), std::slice::from_ref(&baseline))?;
    let summary = ScenarioJson {
        post: cfg.post.name().into(),
        scorer: cfg.scorer.name().into(),
        granularity: rr.granularity.clone(),
        out_of_distribution: rr.out_of_distribution,
        baseline: EvalSummary::from(&baseline),
        treatment: EvalSummary::from(&treatment),
        comparison,
        target_unseen_by_fit: rr.target_unseen_by_fit,
        provenance: provenance(cfg, &ReadLog::new(), "scenario"),
    };
    write_json(&summary, &out.join("summary.json"))?;
    Ok(summary)
}
