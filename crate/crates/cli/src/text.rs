//! Text artifacts: TREC qrels and runs, JSON Lines candidate lists.

use std::collections::BTreeSet;
use std::path::Path;

use isodr_core::evaluation::trec::{format_qrels, format_run, parse_qrels, parse_run};
use isodr_core::evaluation::{Qrels, RankingRun};
use isodr_core::scenario::CandidateList;
use isodr_core::Error;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::formats::write_file;
use crate::provenance::ReadLog;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CandidateLine {
    qid: String,
    docs: Vec<String>,
}

/// One `{"qid": ..., "docs": [...]}` object per line; blank lines skipped.
pub fn parse_candidates(text: &str) -> Result<Vec<CandidateList>, Error> {
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: CandidateLine =
            serde_json::from_str(line).map_err(|e| Error::Parse { line: line_no, reason: e.to_string() })?;
        if !seen.insert(parsed.qid.clone()) {
            return Err(Error::Parse { line: line_no, reason: format!("query {} listed twice", parsed.qid) });
        }
        let mut docs = BTreeSet::new();
        if let Some(d) = parsed.docs.iter().find(|d| !docs.insert(d.as_str())) {
            return Err(Error::Parse { line: line_no, reason: format!("document {d} repeated") });
        }
        out.push(CandidateList { qid: parsed.qid, docs: parsed.docs });
    }
    Ok(out)
}

pub fn format_candidates(lists: &[CandidateList]) -> String {
    let mut out = String::new();
    for c in lists {
        let line = CandidateLine { qid: c.qid.clone(), docs: c.docs.clone() };
        out.push_str(&serde_json::to_string(&line).expect("strings serialize"));
        out.push('\n');
    }
    out
}

pub fn load_candidates(path: &Path, log: &mut ReadLog) -> Result<Vec<CandidateList>> {
    let text = log.read_to_string(path)?;
    parse_candidates(&text).map_err(|e| CliError::in_file(path, e))
}

pub fn save_candidates(lists: &[CandidateList], path: &Path) -> Result<()> {
    write_file(path, format_candidates(lists).as_bytes())
}

pub fn load_qrels(path: &Path, log: &mut ReadLog) -> Result<Qrels> {
    let text = log.read_to_string(path)?;
    parse_qrels(&text).map_err(|e| CliError::in_file(path, e))
}

pub fn save_qrels(qrels: &Qrels, path: &Path) -> Result<()> {
    write_file(path, format_qrels(qrels)?.as_bytes())
}

pub fn load_run(path: &Path, log: &mut ReadLog) -> Result<RankingRun> {
    let text = log.read_to_string(path)?;
    parse_run(&text).map_err(|e| CliError::in_file(path, e))
}

pub fn save_run(run: &RankingRun, path: &Path) -> Result<()> {
    write_file(path, format_run(run)?.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn candidates_round_trip() {
        let lists = vec![
            CandidateList { qid: "q1".into(), docs: vec!["d2".into(), "d1".into()] },
            CandidateList { qid: "q\"2".into(), docs: vec![] },
        ];
        let text = format_candidates(&lists);
        assert_eq!(text.lines().next().unwrap(), r#"{"qid":"q1","docs":["d2","d1"]}"#);
        assert_eq!(parse_candidates(&text).unwrap(), lists);
    }

    #[test]
    fn candidate_errors_carry_line_numbers() {
        let dup_q = "{\"qid\":\"a\",\"docs\":[]}\n\n{\"qid\":\"a\",\"docs\":[]}";
        assert!(matches!(parse_candidates(dup_q), Err(Error::Parse { line: 3, .. })));
        assert!(matches!(parse_candidates("{\"qid\":\"a\",\"docs\":[\"x\",\"x\"]}"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse_candidates("{\"qid\":1}"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse_candidates("{\"qid\":\"a\",\"docs\":[],\"x\":1}"), Err(Error::Parse { line: 1, .. })));
    }
}
