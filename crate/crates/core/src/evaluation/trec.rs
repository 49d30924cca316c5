//! TREC text formats.
//!
//! Qrels lines are `qid iter docid grade`; `iter` is ignored on read and
//! written as `0`. Run lines are `qid Q0 docid rank score tag`. Blank lines
//! are skipped. Line numbers in errors are 1-based.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use super::{Qrels, RankingRun};
use crate::error::{Error, Result};

fn parse_err(line: usize, reason: impl Into<String>) -> Error {
    Error::Parse { line, reason: reason.into() }
}

fn fields<const N: usize>(line_no: usize, line: &str) -> Result<[&str; N]> {
    let parts: Vec<&str> = line.split_whitespace().collect();
    parts
        .try_into()
        .map_err(|p: Vec<&str>| parse_err(line_no, format!("expected {N} fields, found {}", p.len())))
}

pub fn parse_qrels(text: &str) -> Result<Qrels> {
    let mut qrels = Qrels::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let [qid, _iter, docid, grade] = fields::<4>(line_no, line)?;
        let grade: u32 = grade
            .parse()
            .map_err(|_| parse_err(line_no, format!("grade '{grade}' is not a non-negative integer")))?;
        qrels.insert(qid, docid, grade).map_err(|e| parse_err(line_no, format!("{e}")))?;
    }
    Ok(qrels)
}

fn check_token(what: &str, s: &str) -> Result<()> {
    if s.is_empty() || s.chars().any(char::is_whitespace) {
        return Err(Error::Value(format!("{what} '{s}' is empty or contains whitespace")));
    }
    Ok(())
}

pub fn format_qrels(qrels: &Qrels) -> Result<String> {
    let mut out = String::new();
    for (q, d, g) in qrels.iter() {
        check_token("query id", q)?;
        check_token("doc id", d)?;
        let _ = writeln!(out, "{q} 0 {d} {g}");
    }
    Ok(out)
}

/// Parses a run. Order is rebuilt from the scores under the tie rule; the
/// rank column must be a positive integer but is otherwise informational.
/// All lines must share one tag.
pub fn parse_run(text: &str) -> Result<RankingRun> {
    let mut tag: Option<String> = None;
    let mut per_query: BTreeMap<String, (usize, Vec<(String, f64)>)> = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let [qid, _q0, docid, rank, score, line_tag] = fields::<6>(line_no, line)?;
        match rank.parse::<usize>() {
            Ok(r) if r >= 1 => {}
            _ => return Err(parse_err(line_no, format!("rank '{rank}' is not a positive integer"))),
        }
        let score: f64 = score
            .parse()
            .ok()
            .filter(|s: &f64| s.is_finite())
            .ok_or_else(|| parse_err(line_no, format!("score '{score}' is not a finite number")))?;
        match &tag {
            None => tag = Some(line_tag.into()),
            Some(t) if t != line_tag => {
                return Err(parse_err(line_no, format!("tag '{line_tag}' differs from '{t}'")))
            }
            Some(_) => {}
        }
        let entry = per_query.entry(qid.into()).or_insert((line_no, Vec::new()));
        if entry.1.iter().any(|(d, _)| d == docid) {
            return Err(parse_err(line_no, format!("document {docid} repeated for query {qid}")));
        }
        entry.1.push((docid.into(), score));
    }
    let mut run = RankingRun::new(tag.unwrap_or_default());
    for (qid, (line_no, docs)) in per_query {
        run.insert(qid, docs).map_err(|e| parse_err(line_no, format!("{e}")))?;
    }
    Ok(run)
}

/// Scores are written in shortest round-trip form, so parse∘format is exact.
pub fn format_run(run: &RankingRun) -> Result<String> {
    check_token("run tag", &run.tag)?;
    let mut out = String::new();
    for (q, docs) in run.queries() {
        check_token("query id", q)?;
        for (i, (d, s)) in docs.iter().enumerate() {
            check_token("doc id", d)?;
            let _ = writeln!(out, "{q} Q0 {d} {} {s:?} {}", i + 1, run.tag);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn qrels_round_trip() {
        let text = "q1 0 d1 1\nq1 0 d2 0\n\nq2 0 d9 3\n";
        let q = parse_qrels(text).unwrap();
        assert_eq!(q.len(), 3);
        assert_eq!(format_qrels(&q).unwrap(), text.replace("\n\n", "\n"));
    }

    #[test]
    fn qrels_errors_carry_line_numbers() {
        assert_eq!(
            parse_qrels("q 0 d 1\nq 0 d\n"),
            Err(Error::Parse { line: 2, reason: "expected 4 fields, found 3".into() })
        );
        assert!(matches!(parse_qrels("q 0 d -1"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse_qrels("q 0 d 1\nq 7 d 2"), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn run_round_trip_is_exact() {
        let mut run = RankingRun::new("tag-1");
        run.insert("q1", vec![("a".into(), 0.1 + 0.2), ("b".into(), -1e-300), ("c".into(), 0.3)]).unwrap();
        run.insert("q2", vec![("z".into(), 1.0)]).unwrap();
        let text = format_run(&run).unwrap();
        let back = parse_run(&text).unwrap();
        assert_eq!(back, run);
        assert_eq!(format_run(&back).unwrap(), text);
    }

    #[test]
    fn run_errors() {
        assert!(matches!(parse_run("q Q0 d 0 1.0 t"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse_run("q Q0 d 1 nan t"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse_run("q Q0 d 1 1 t\nq Q0 e 2 0 u"), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(parse_run("q Q0 d 1 1 t\nq Q0 d 2 0 t"), Err(Error::Parse { line: 2, .. })));
        let mut bad = RankingRun::new("has space");
        bad.insert("q", vec![("d".into(), 1.0)]).unwrap();
        assert!(format_run(&bad).is_err());
    }
}
