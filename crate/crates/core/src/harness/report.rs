//! `results.csv`, `runtime.csv` and the markdown summary.

use std::fmt::Write as _;

use crate::attacks::Algorithm;
use crate::error::{Error, Result};
use crate::estimator::RobustnessReport;

pub const RESULTS_HEADER: [&str; 7] = [
    "attack",
    "transform_set",
    "gamma",
    "asr_r",
    "avg_asr_u",
    "clean_asr_u",
    "norm_violations",
];

pub const RUNTIME_HEADER: [&str; 5] = ["attack", "transform_set", "epochs", "inner_loops", "seconds"];

/// One `(attack, gamma)` line of `results.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub attack: Algorithm,
    pub transform_set: String,
    pub gamma: f64,
    pub asr_r: f64,
    pub avg_asr_u: f64,
    pub clean_asr_u: f64,
    pub norm_violations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RuntimeRow {
    pub attack: Algorithm,
    pub transform_set: String,
    pub epochs: usize,
    pub inner_loops: usize,
    pub seconds: f64,
}

pub fn result_rows(attack: Algorithm, transform_set: &str, report: &RobustnessReport) -> Vec<ResultRow> {
    report
        .asr_r_by_gamma
        .iter()
        .map(|g| ResultRow {
            attack,
            transform_set: transform_set.to_string(),
            gamma: g.gamma,
            asr_r: g.asr_r,
            avg_asr_u: report.avg_asr_u,
            clean_asr_u: report.asr_u_clean,
            norm_violations: report.norm_violations,
        })
        .collect()
}

fn fixed(v: f64) -> String {
    format!("{v:.4}")
}

fn to_text(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::invalid(e.to_string()))
}

fn csv_error(e: csv::Error) -> Error {
    Error::Parse {
        line: e.position().map_or(0, |p| p.line() as usize),
        message: e.to_string(),
    }
}

pub fn results_csv(rows: &[ResultRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(RESULTS_HEADER).map_err(csv_error)?;
    for r in rows {
        w.write_record([
            r.attack.key().to_string(),
            r.transform_set.clone(),
            fixed(r.gamma),
            fixed(r.asr_r),
            fixed(r.avg_asr_u),
            fixed(r.clean_asr_u),
            r.norm_violations.to_string(),
        ])
        .map_err(csv_error)?;
    }
    to_text(w)
}

pub fn runtime_csv(rows: &[RuntimeRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(RUNTIME_HEADER).map_err(csv_error)?;
    for r in rows {
        w.write_record([
            r.attack.key().to_string(),
            r.transform_set.clone(),
            r.epochs.to_string(),
            r.inner_loops.to_string(),
            format!("{:.3}", r.seconds),
        ])
        .map_err(csv_error)?;
    }
    to_text(w)
}

fn read_records(text: &str, header: &[&str]) -> Result<Vec<csv::StringRecord>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let found = r.headers().map_err(csv_error)?;
    if found.iter().ne(header.iter().copied()) {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header `{}`", header.join(",")),
        });
    }
    r.records().map(|rec| rec.map_err(csv_error)).collect()
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    let line = rec.position().map_or(0, |p| p.line() as usize);
    rec[i].parse().map_err(|e: T::Err| Error::Parse {
        line,
        message: format!("column {}: {e}", i + 1),
    })
}

pub fn parse_results_csv(text: &str) -> Result<Vec<ResultRow>> {
    read_records(text, &RESULTS_HEADER)?
        .iter()
        .map(|rec| {
            Ok(ResultRow {
                attack: field(rec, 0)?,
                transform_set: rec[1].to_string(),
                gamma: field(rec, 2)?,
                asr_r: field(rec, 3)?,
                avg_asr_u: field(rec, 4)?,
                clean_asr_u: field(rec, 5)?,
                norm_violations: field(rec, 6)?,
            })
        })
        .collect()
}

pub fn parse_runtime_csv(text: &str) -> Result<Vec<RuntimeRow>> {
    read_records(text, &RUNTIME_HEADER)?
        .iter()
        .map(|rec| {
            Ok(RuntimeRow {
                attack: field(rec, 0)?,
                transform_set: rec[1].to_string(),
                epochs: field(rec, 2)?,
                inner_loops: field(rec, 3)?,
                seconds: field(rec, 4)?,
            })
        })
        .collect()
}

fn pct(v: f64) -> String {
    format!("{:.1}%", 100.0 * v)
}

fn unique<T: PartialEq + Clone>(items: impl Iterator<Item = T>) -> Vec<T> {
    let mut out: Vec<T> = Vec::new();
    for it in items {
        if !out.contains(&it) {
            out.push(it);
        }
    }
    out
}

/// Robust success rates as a grid: one row per transformation set and
/// threshold, one column per attack. Universal rates and runtimes follow in
/// their own tables.
pub fn render_markdown(rows: &[ResultRow], runtime: &[RuntimeRow]) -> String {
    let attacks = unique(rows.iter().map(|r| r.attack));
    let sets = unique(rows.iter().map(|r| r.transform_set.clone()));
    let gammas = unique(rows.iter().map(|r| r.gamma.to_bits()));
    let find = |a: Algorithm, s: &str, g: u64| {
        rows.iter()
            .find(|r| r.attack == a && r.transform_set == s && r.gamma.to_bits() == g)
    };
    let mut out = String::new();
    let head: Vec<String> = attacks.iter().map(|a| a.to_string()).collect();
    let rule = "|---".repeat(attacks.len() + 2) + "|";

    out.push_str("## Robust universal success rate (ASR_R)\n\n");
    let _ = writeln!(out, "| Transformation Set | γ | {} |", head.join(" | "));
    let _ = writeln!(out, "{rule}");
    for s in &sets {
        for &g in &gammas {
            let cells: Vec<String> = attacks
                .iter()
                .map(|&a| find(a, s, g).map_or("-".into(), |r| pct(r.asr_r)))
                .collect();
            let _ = writeln!(out, "| {s} | {:.2} | {} |", f64::from_bits(g), cells.join(" | "));
        }
    }

    out.push_str("\n## Universal success rate (ASR_U)\n\n");
    let _ = writeln!(out, "| Transformation Set | metric | {} |", head.join(" | "));
    let _ = writeln!(out, "{rule}");
    for s in &sets {
        let pick = |a: Algorithm| rows.iter().find(|r| r.attack == a && &r.transform_set == s);
        for (label, get) in [
            ("clean", (|r: &ResultRow| r.clean_asr_u) as fn(&ResultRow) -> f64),
            ("transformed (avg)", |r: &ResultRow| r.avg_asr_u),
        ] {
            let cells: Vec<String> = attacks.iter().map(|&a| pick(a).map_or("-".into(), |r| pct(get(r)))).collect();
            let _ = writeln!(out, "| {s} | {label} | {} |", cells.join(" | "));
        }
    }

    if !runtime.is_empty() {
        out.push_str("\n## Runtime\n\n| Attack | Transformation Set | epochs | inner loops | seconds |\n|---|---|---|---|---|\n");
        for r in runtime {
            let _ = writeln!(
                out,
                "| {} | {} | {} | {} | {:.3} |",
                r.attack, r.transform_set, r.epochs, r.inner_loops, r.seconds
            );
        }
    }
    out
}
