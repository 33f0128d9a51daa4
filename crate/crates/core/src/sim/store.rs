//! Results and report CSV files.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::Path;

use super::{Method, PerformanceReport, ReplicationResult, SimError};

pub const RESULTS_HEADER: &str = "scenario,replication,method,d_pos_est,cri_lo,cri_hi,converged,d_pos_true";
pub const REPORT_HEADER: &str = "scenario,method,pct_bias,coverage,mean_width,mcse_bias,n_reps";

fn io(e: impl std::fmt::Display) -> SimError {
    SimError::Io(e.to_string())
}

fn result_line(out: &mut String, r: &ReplicationResult) {
    let _ = writeln!(
        out,
        "{},{},{},{},{},{},{},{}",
        r.scenario, r.replication, r.method, r.estimate, r.lower, r.upper, r.converged as u8, r.truth
    );
}

/// Results CSV text, rows in the given order.
pub fn results_csv(results: &[ReplicationResult]) -> String {
    let mut out = String::from(RESULTS_HEADER);
    out.push('\n');
    for r in results {
        result_line(&mut out, r);
    }
    out
}

pub fn report_csv(reports: &[PerformanceReport]) -> String {
    let mut out = String::from(REPORT_HEADER);
    out.push('\n');
    for rep in reports {
        for m in &rep.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                rep.scenario, m.method, m.pct_bias, m.coverage, m.mean_width, m.mcse_bias, m.n_reps
            );
        }
    }
    out
}

pub fn read_results(path: &Path) -> Result<Vec<ReplicationResult>, SimError> {
    let text = std::fs::read_to_string(path).map_err(io)?;
    parse_results(&text)
}

pub(crate) fn parse_results(text: &str) -> Result<Vec<ReplicationResult>, SimError> {
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(text.as_bytes());
    let header: Vec<String> = reader.headers().map_err(io)?.iter().map(String::from).collect();
    if header.join(",") != RESULTS_HEADER {
        return Err(SimError::Io(format!("unexpected results header `{}`", header.join(","))));
    }
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(io)?;
        // a torn final line from an interrupted run is dropped
        if rec.len() != 8 {
            continue;
        }
        let num = |i: usize| rec[i].parse::<f64>().map_err(|e| SimError::Io(format!("`{}`: {e}", &rec[i])));
        out.push(ReplicationResult {
            scenario: rec[0].to_string(),
            replication: rec[1].parse().map_err(io)?,
            method: rec[2].parse::<Method>().map_err(SimError::Io)?,
            estimate: num(3)?,
            lower: num(4)?,
            upper: num(5)?,
            converged: &rec[6] == "1",
            truth: num(7)?,
        });
    }
    Ok(out)
}

/// Keeps the first row for each (scenario, replication, method).
pub(crate) fn dedup(results: Vec<ReplicationResult>) -> Vec<ReplicationResult> {
    let mut seen = HashSet::new();
    results
        .into_iter()
        .filter(|r| seen.insert((r.scenario.clone(), r.replication, r.method)))
        .collect()
}

/// Replications of `scenario` with a row for every method.
pub(crate) fn complete_replications(results: &[ReplicationResult], scenario: &str) -> BTreeSet<usize> {
    let mut methods: HashMap<usize, HashSet<Method>> = HashMap::new();
    for r in results.iter().filter(|r| r.scenario == scenario) {
        methods.entry(r.replication).or_default().insert(r.method);
    }
    methods.into_iter().filter(|(_, m)| m.len() == Method::ALL.len()).map(|(r, _)| r).collect()
}

pub(crate) fn write_all(path: &Path, results: &[ReplicationResult]) -> Result<(), SimError> {
    std::fs::write(path, results_csv(results)).map_err(io)
}

pub(crate) struct Appender(File);

impl Appender {
    pub fn open(path: &Path) -> Result<Self, SimError> {
        OpenOptions::new().append(true).open(path).map(Appender).map_err(io)
    }

    pub fn append(&mut self, batch: &[ReplicationResult]) -> Result<(), SimError> {
        let mut text = String::new();
        for r in batch {
            result_line(&mut text, r);
        }
        self.0.write_all(text.as_bytes()).and_then(|_| self.0.flush()).map_err(io)
    }
}
