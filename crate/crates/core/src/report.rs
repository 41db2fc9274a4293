//! Benchmark reports and their table, CSV and JSON renderings.

use std::collections::BTreeSet;
use std::fmt::{self, Write as _};
use std::io;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::codec::Protocol;
use crate::stats::TrialStats;

pub const CSV_HEADER: [&str; 10] = [
    "experiment",
    "protocol",
    "workload",
    "n",
    "time_mean_s",
    "time_stddev_s",
    "acc_mean",
    "acc_stddev",
    "host",
    "timestamp",
];

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("no reports to emit")]
    Empty,
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("bad value in row {row}, column {column}: {reason}")]
    Field {
        row: usize,
        column: &'static str,
        reason: String,
    },
    #[error("report for {experiment} has inconsistent accuracy stats")]
    Inconsistent { experiment: Experiment },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    Echo,
    Ga,
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Experiment::Echo => "echo",
            Experiment::Ga => "ga",
        })
    }
}

impl FromStr for Experiment {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "echo" => Ok(Experiment::Echo),
            "ga" => Ok(Experiment::Ga),
            other => Err(format!("unknown experiment {other:?}")),
        }
    }
}

/// What was measured. Rendered as `len=100/iter=100` or `gen=20/pop=50`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Workload {
    Echo { payload_len: usize, iterations: usize },
    Ga { generations: usize, population: usize },
}

impl fmt::Display for Workload {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Workload::Echo {
                payload_len,
                iterations,
            } => write!(f, "len={payload_len}/iter={iterations}"),
            Workload::Ga {
                generations,
                population,
            } => write!(f, "gen={generations}/pop={population}"),
        }
    }
}

impl FromStr for Workload {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (a, b) = s.split_once('/').ok_or_else(|| format!("bad workload {s:?}"))?;
        let field = |part: &str, key: &str| -> Result<usize, String> {
            part.strip_prefix(key)
                .and_then(|v| v.strip_prefix('='))
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| format!("bad workload {s:?}"))
        };
        if a.starts_with("len=") {
            Ok(Workload::Echo {
                payload_len: field(a, "len")?,
                iterations: field(b, "iter")?,
            })
        } else {
            Ok(Workload::Ga {
                generations: field(a, "gen")?,
                population: field(b, "pop")?,
            })
        }
    }
}

impl Serialize for Workload {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Workload {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Environment {
    pub host: String,
    /// RFC 3339.
    pub timestamp: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub experiment: Experiment,
    pub protocol: Protocol,
    pub workload: Workload,
    /// Seconds per trial (a whole echo loop, or one GA run).
    pub time_stats: TrialStats,
    /// Best accuracy per GA run; absent for echo.
    pub accuracy_stats: Option<TrialStats>,
    pub environment: Environment,
}

impl BenchReport {
    pub fn validate(&self) -> Result<(), ReportError> {
        if self.accuracy_stats.is_some() != (self.experiment == Experiment::Ga) {
            return Err(ReportError::Inconsistent {
                experiment: self.experiment,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Table,
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "table" => Ok(Format::Table),
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(format!("unknown format {other:?} (expected table, csv or json)")),
        }
    }
}

pub fn render(reports: &[BenchReport], format: Format) -> Result<String, ReportError> {
    if reports.is_empty() {
        return Err(ReportError::Empty);
    }
    for r in reports {
        r.validate()?;
    }
    match format {
        Format::Table => Ok(render_table(reports)),
        Format::Csv => render_csv(reports),
        Format::Json => Ok(serde_json::to_string_pretty(reports)? + "\n"),
    }
}

pub fn emit_report<W: io::Write>(reports: &[BenchReport], format: Format, mut out: W) -> Result<(), ReportError> {
    let text = render(reports, format)?;
    out.write_all(text.as_bytes())?;
    out.flush()?;
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn render_csv(reports: &[BenchReport]) -> Result<String, ReportError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER)?;
    for r in reports {
        w.write_record([
            r.experiment.to_string(),
            r.protocol.to_string(),
            r.workload.to_string(),
            r.time_stats.n.to_string(),
            r.time_stats.mean.to_string(),
            opt(r.time_stats.stddev),
            opt(r.accuracy_stats.map(|a| a.mean)),
            opt(r.accuracy_stats.and_then(|a| a.stddev)),
            r.environment.host.clone(),
            r.environment.timestamp.clone(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| ReportError::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is built from UTF-8 strings"))
}

pub fn parse_json(text: &str) -> Result<Vec<BenchReport>, ReportError> {
    let reports: Vec<BenchReport> = serde_json::from_str(text)?;
    for r in &reports {
        r.validate()?;
    }
    Ok(reports)
}

pub fn parse_csv(text: &str) -> Result<Vec<BenchReport>, ReportError> {
    let mut rd = csv::Reader::from_reader(text.as_bytes());
    let mut reports = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        let get = |idx: usize| rec.get(idx).unwrap_or("");
        fn parse<T: FromStr>(row: usize, column: &'static str, s: &str) -> Result<T, ReportError>
        where
            T::Err: fmt::Display,
        {
            s.parse().map_err(|e: T::Err| ReportError::Field {
                row,
                column,
                reason: e.to_string(),
            })
        }
        let opt_f64 = |idx: usize| -> Result<Option<f64>, ReportError> {
            match get(idx) {
                "" => Ok(None),
                s => parse(row, CSV_HEADER[idx], s).map(Some),
            }
        };
        let experiment: Experiment = parse(row, "experiment", get(0))?;
        let n: usize = parse(row, "n", get(3))?;
        let time_stats = TrialStats {
            n,
            mean: parse(row, "time_mean_s", get(4))?,
            stddev: opt_f64(5)?,
        };
        let accuracy_stats = match opt_f64(6)? {
            Some(mean) => Some(TrialStats {
                n,
                mean,
                stddev: opt_f64(7)?,
            }),
            None => None,
        };
        let report = BenchReport {
            experiment,
            protocol: parse(row, "protocol", get(1))?,
            workload: parse(row, "workload", get(2))?,
            time_stats,
            accuracy_stats,
            environment: Environment {
                host: get(8).to_string(),
                timestamp: get(9).to_string(),
            },
        };
        report.validate()?;
        reports.push(report);
    }
    Ok(reports)
}

/// Accepts either a JSON array or CSV with the standard header.
pub fn parse_reports(text: &str) -> Result<Vec<BenchReport>, ReportError> {
    if text.trim_start().starts_with('[') {
        parse_json(text)
    } else {
        parse_csv(text)
    }
}

fn cell(s: Option<&TrialStats>, scale: f64, precision: usize) -> String {
    match s {
        None => "-".to_string(),
        Some(s) => match s.stddev {
            Some(sd) => format!("{:.*} ± {:.*}", precision, s.mean * scale, precision, sd * scale),
            None => format!("{:.*} (n=1)", precision, s.mean * scale),
        },
    }
}

fn render_table(reports: &[BenchReport]) -> String {
    let mut out = String::new();
    let experiments: BTreeSet<Experiment> = reports.iter().map(|r| r.experiment).collect();
    for exp in experiments {
        let rows: Vec<&BenchReport> = reports.iter().filter(|r| r.experiment == exp).collect();
        let mut workloads: Vec<Workload> = Vec::new();
        let mut protocols: Vec<Protocol> = Vec::new();
        for r in &rows {
            if !workloads.contains(&r.workload) {
                workloads.push(r.workload);
            }
            if !protocols.contains(&r.protocol) {
                protocols.push(r.protocol);
            }
        }
        let find = |p: Protocol, w: Workload| rows.iter().find(|r| r.protocol == p && r.workload == w);

        let mut lines: Vec<Vec<String>> = Vec::new();
        let mut header = vec![String::new(), String::new()];
        header.extend(workloads.iter().map(|w| w.to_string()));
        lines.push(header);
        for &p in &protocols {
            let mut time = vec![p.to_string(), "time (ms)".to_string()];
            time.extend(
                workloads
                    .iter()
                    .map(|&w| cell(find(p, w).map(|r| &r.time_stats), 1e3, 2)),
            );
            if exp == Experiment::Ga {
                let mut acc = vec![p.to_string(), "accuracy".to_string()];
                acc.extend(
                    workloads
                        .iter()
                        .map(|&w| cell(find(p, w).and_then(|r| r.accuracy_stats.as_ref()), 1.0, 6)),
                );
                lines.push(acc);
                time[0] = String::new();
            }
            lines.push(time);
        }

        let widths: Vec<usize> = (0..lines[0].len())
            .map(|c| lines.iter().map(|l| l[c].chars().count()).max().unwrap_or(0))
            .collect();
        let rule: String = widths.iter().map(|w| "-".repeat(w + 2)).collect::<Vec<_>>().join("+");
        let title = match exp {
            Experiment::Echo => "Echo round-trips (time per trial)",
            Experiment::Ga => "Master-slave GA (best accuracy and wall time per run)",
        };
        let _ = writeln!(out, "{title}");
        let _ = writeln!(out, "+{rule}+");
        for (i, l) in lines.iter().enumerate() {
            let cells: Vec<String> = l
                .iter()
                .zip(&widths)
                .map(|(c, w)| format!(" {c}{} ", " ".repeat(w - c.chars().count())))
                .collect();
            let _ = writeln!(out, "|{}|", cells.join("|"));
            if i == 0 {
                let _ = writeln!(out, "+{rule}+");
            }
        }
        let _ = writeln!(out, "+{rule}+");
        let _ = writeln!(out);
    }
    out.push_str("± is the sample standard deviation (n - 1 denominator) over trials.\n");
    out
}
