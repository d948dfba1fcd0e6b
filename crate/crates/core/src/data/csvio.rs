//! `arch_id,accuracy` tables and `arch_id,proxy,value,higher_is_better,seed`
//! score files. Floats are written in shortest round-trip form.

use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use crate::{Error, Result};

pub const ACCURACY_HEADER: [&str; 2] = ["arch_id", "accuracy"];
pub const SCORE_HEADER: [&str; 5] = ["arch_id", "proxy", "value", "higher_is_better", "seed"];

/// Accuracies in file order with unique ids.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AccuracyTable {
    rows: Vec<(String, f64)>,
    index: HashMap<String, usize>,
}

impl AccuracyTable {
    pub fn from_rows(rows: Vec<(String, f64)>) -> Result<Self> {
        let mut index = HashMap::with_capacity(rows.len());
        for (i, (id, acc)) in rows.iter().enumerate() {
            if !acc.is_finite() {
                return Err(Error::Csv {
                    line: i as u64 + 2,
                    reason: format!("accuracy for `{id}` is not finite"),
                });
            }
            if index.insert(id.clone(), i).is_some() {
                return Err(Error::Csv {
                    line: i as u64 + 2,
                    reason: format!("duplicate arch_id `{id}`"),
                });
            }
        }
        Ok(AccuracyTable { rows, index })
    }

    pub fn get(&self, arch_id: &str) -> Option<f64> {
        self.index.get(arch_id).map(|&i| self.rows[i].1)
    }

    pub fn rows(&self) -> &[(String, f64)] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScoreRow {
    pub arch_id: String,
    pub proxy: String,
    pub value: f64,
    pub higher_is_better: bool,
    pub seed: u64,
}

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(input)
}

fn csv_err(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    Error::Csv {
        line,
        reason: e.to_string(),
    }
}

/// Reads all records, checking the header and field count. Returns
/// `(line, record)` pairs for the body.
fn records<R: Read>(input: R, header: &[&str]) -> Result<Vec<(u64, csv::StringRecord)>> {
    let mut rdr = reader(input);
    let mut out = Vec::new();
    let mut saw_header = false;
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map_or(0, |p| p.line());
        if !saw_header {
            let got: Vec<&str> = rec.iter().collect();
            if got != header {
                return Err(Error::Csv {
                    line,
                    reason: format!("expected header `{}`, found `{}`", header.join(","), got.join(",")),
                });
            }
            saw_header = true;
            continue;
        }
        if rec.len() != header.len() {
            return Err(Error::Csv {
                line,
                reason: format!("expected {} fields, found {}", header.len(), rec.len()),
            });
        }
        out.push((line, rec));
    }
    if !saw_header {
        return Err(Error::Csv {
            line: 1,
            reason: "missing header".into(),
        });
    }
    if out.is_empty() {
        return Err(Error::Csv {
            line: 2,
            reason: "no data rows".into(),
        });
    }
    Ok(out)
}

fn parse_f64(s: &str, line: u64, what: &str) -> Result<f64> {
    let v: f64 = s.trim().parse().map_err(|_| Error::Csv {
        line,
        reason: format!("invalid {what} `{s}`"),
    })?;
    if !v.is_finite() {
        return Err(Error::Csv {
            line,
            reason: format!("{what} `{s}` is not finite"),
        });
    }
    Ok(v)
}

pub fn parse_accuracy_csv<R: Read>(input: R) -> Result<AccuracyTable> {
    let mut rows = Vec::new();
    let mut seen = HashMap::new();
    for (line, rec) in records(input, &ACCURACY_HEADER)? {
        let id = rec[0].to_string();
        if id.is_empty() {
            return Err(Error::Csv {
                line,
                reason: "empty arch_id".into(),
            });
        }
        if let Some(first) = seen.insert(id.clone(), line) {
            return Err(Error::Csv {
                line,
                reason: format!("duplicate arch_id `{id}` (first seen on line {first})"),
            });
        }
        rows.push((id, parse_f64(&rec[1], line, "accuracy")?));
    }
    AccuracyTable::from_rows(rows)
}

pub fn read_accuracy_csv(path: &Path) -> Result<AccuracyTable> {
    parse_accuracy_csv(std::fs::File::open(path)?)
}

pub fn parse_scores_csv<R: Read>(input: R) -> Result<Vec<ScoreRow>> {
    let mut out = Vec::new();
    let mut seen = HashMap::new();
    for (line, rec) in records(input, &SCORE_HEADER)? {
        let higher_is_better = match &rec[3] {
            "true" => true,
            "false" => false,
            other => {
                return Err(Error::Csv {
                    line,
                    reason: format!("invalid higher_is_better `{other}`"),
                })
            }
        };
        let seed = rec[4].parse().map_err(|_| Error::Csv {
            line,
            reason: format!("invalid seed `{}`", &rec[4]),
        })?;
        let row = ScoreRow {
            arch_id: rec[0].to_string(),
            proxy: rec[1].to_string(),
            value: parse_f64(&rec[2], line, "value")?,
            higher_is_better,
            seed,
        };
        let key = (row.arch_id.clone(), row.proxy.clone(), row.seed);
        if seen.insert(key, line).is_some() {
            return Err(Error::Csv {
                line,
                reason: format!(
                    "duplicate arch_id `{}` for proxy `{}` and seed {}",
                    row.arch_id, row.proxy, row.seed
                ),
            });
        }
        out.push(row);
    }
    Ok(out)
}

pub fn read_scores_csv(path: &Path) -> Result<Vec<ScoreRow>> {
    parse_scores_csv(std::fs::File::open(path)?)
}

pub fn render_scores_csv(rows: &[ScoreRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SCORE_HEADER).map_err(csv_err)?;
    for r in rows {
        if !r.value.is_finite() {
            return Err(Error::InvalidArgument(format!("score for `{}` is not finite", r.arch_id)));
        }
        w.write_record([
            r.arch_id.as_str(),
            r.proxy.as_str(),
            &format!("{:?}", r.value),
            if r.higher_is_better { "true" } else { "false" },
            &r.seed.to_string(),
        ])
        .map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn write_scores_csv(path: &Path, rows: &[ScoreRow]) -> Result<()> {
    std::fs::write(path, render_scores_csv(rows)?)?;
    Ok(())
}
