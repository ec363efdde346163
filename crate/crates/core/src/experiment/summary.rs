//! Metric CSV files and across-run summaries.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::metrics::MetricRecord;

pub const CSV_HEADER: &str = "run,iteration,accuracy,fitness,voc_sum,voc_mean,signal_entropy,target_certainty,\
signal_certainty,max_contextless_accuracy,sender_context_gain,receiver_context_gain";

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub run: usize,
    pub iteration: u64,
    pub record: MetricRecord,
}

/// One CSV data line, newline included. Floats use the shortest text that
/// parses back to the same value.
pub fn format_row(row: &MetricRow) -> String {
    let mut line = format!("{},{}", row.run, row.iteration);
    for v in row.record.values() {
        line.push(',');
        line.push_str(&v.to_string());
    }
    line.push('\n');
    line
}

/// Appends whole rows with one write each, so a reader never sees half a row.
pub struct CsvSink {
    file: File,
    path: std::path::PathBuf,
}

impl CsvSink {
    /// Truncates `path` and writes the header unless `header` is false.
    pub fn create(path: &Path, header: bool) -> Result<Self> {
        let mut file = File::create(path).map_err(|e| Error::io(path, e))?;
        if header {
            file.write_all(format!("{CSV_HEADER}\n").as_bytes())
                .map_err(|e| Error::io(path, e))?;
        }
        Ok(CsvSink {
            file,
            path: path.to_owned(),
        })
    }

    pub fn append(&mut self, row: &MetricRow) -> Result<()> {
        self.file
            .write_all(format_row(row).as_bytes())
            .map_err(|e| Error::io(&self.path, e))
    }

    pub fn append_raw(&mut self, bytes: &[u8]) -> Result<()> {
        self.file.write_all(bytes).map_err(|e| Error::io(&self.path, e))
    }
}

pub fn read_csv(path: &Path) -> Result<Vec<MetricRow>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_csv(file)
}

pub fn parse_csv<R: std::io::Read>(reader: R) -> Result<Vec<MetricRow>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| csv_error(&e, 1))?
        .iter()
        .map(str::to_owned)
        .collect();
    if header.join(",") != CSV_HEADER {
        return Err(Error::Parse {
            line: 1,
            msg: format!("unexpected header, expected `{CSV_HEADER}`"),
        });
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| csv_error(&e, line))?;
        let field = |k: usize| rec.get(k).unwrap_or("");
        let bad = |k: usize| Error::Parse {
            line,
            msg: format!("bad value `{}` in column {}", field(k), header[k]),
        };
        let run = field(0).parse().map_err(|_| bad(0))?;
        let iteration = field(1).parse().map_err(|_| bad(1))?;
        let mut values = [0.0; MetricRecord::FIELDS.len()];
        for (j, v) in values.iter_mut().enumerate() {
            *v = field(j + 2).parse().map_err(|_| bad(j + 2))?;
        }
        rows.push(MetricRow {
            run,
            iteration,
            record: MetricRecord::from_values(values),
        });
    }
    Ok(rows)
}

fn csv_error(e: &csv::Error, fallback_line: usize) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(fallback_line);
    Error::Parse {
        line,
        msg: e.to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stats {
    pub mean: f64,
    /// Sample standard deviation (n − 1 denominator); 0 for a single value.
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl Stats {
    pub fn of(values: &[f64]) -> Option<Stats> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        // rounding in the mean can step just outside [min, max]
        let mean = (values.iter().sum::<f64>() / n).clamp(min, max);
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Some(Stats { mean, std, min, max })
    }

    pub fn standard_error(&self, n: usize) -> f64 {
        if n == 0 { 0.0 } else { self.std / (n as f64).sqrt() }
    }
}

/// Per-metric statistics over runs at each run's final logged iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub label: String,
    pub runs: usize,
    pub metrics: Vec<(&'static str, Stats)>,
}

impl RunSummary {
    pub fn from_rows(label: &str, rows: &[MetricRow]) -> Result<Self> {
        let mut last: BTreeMap<usize, &MetricRow> = BTreeMap::new();
        for row in rows {
            let slot = last.entry(row.run).or_insert(row);
            if row.iteration >= slot.iteration {
                *slot = row;
            }
        }
        if last.is_empty() {
            return Err(Error::Logic("no metric rows to summarize".into()));
        }
        let metrics = MetricRecord::FIELDS
            .iter()
            .enumerate()
            .map(|(j, &name)| {
                let values: Vec<f64> = last.values().map(|r| r.record.values()[j]).collect();
                (name, Stats::of(&values).expect("at least one run"))
            })
            .collect();
        Ok(RunSummary {
            label: label.to_owned(),
            runs: last.len(),
            metrics,
        })
    }

    pub fn get(&self, metric: &str) -> Option<Stats> {
        self.metrics.iter().find(|(m, _)| *m == metric).map(|&(_, s)| s)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("label,metric,mean,std,min,max\n");
        for (m, st) in &self.metrics {
            s.push_str(&format!(
                "{},{},{},{},{},{}\n",
                self.label, m, st.mean, st.std, st.min, st.max
            ));
        }
        s
    }

    /// Fixed-width table with three decimals.
    pub fn to_table(&self) -> String {
        let mut s = format!(
            "{:<16} {:<26} {:>8} {:>8} {:>8} {:>8}\n",
            "run", "metric", "mean", "std", "min", "max"
        );
        for (m, st) in &self.metrics {
            s.push_str(&format!(
                "{:<16} {:<26} {:>8.3} {:>8.3} {:>8.3} {:>8.3}\n",
                self.label, m, st.mean, st.std, st.min, st.max
            ));
        }
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}
