use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use clap::ValueEnum;
use metastable_mdp::auxmdp::AuxAction;
use metastable_mdp::kawasaki::Trajectory;
use metastable_mdp::verify::VerificationReport;
use serde_json::{json, Map, Value};

pub const CSV_HEADER: &str = "# metastable-mdp v1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
    Table,
}

/// Full double precision.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn action_set(v: &[AuxAction]) -> String {
    v.iter().map(|a| a.as_str()).collect::<Vec<_>>().join("|")
}

fn cell(s: &str) -> Value {
    if let Ok(i) = s.parse::<i64>() {
        return json!(i);
    }
    match s.parse::<f64>() {
        Ok(x) if x.is_finite() && s.contains(['.', 'e']) => json!(x),
        _ => json!(s),
    }
}

pub struct Sink {
    out: Box<dyn Write>,
    format: Format,
}

impl Sink {
    pub fn open(path: Option<&Path>, format: Format) -> Result<Self> {
        let out: Box<dyn Write> = match path {
            Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
            None => Box::new(BufWriter::new(io::stdout().lock())),
        };
        Ok(Sink { out, format })
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }

    fn csv_meta(&mut self, meta: &[(&str, String)]) -> Result<()> {
        writeln!(self.out, "{CSV_HEADER}")?;
        for (k, v) in meta {
            writeln!(self.out, "# {k}={v}")?;
        }
        Ok(())
    }

    fn csv_rows<S: AsRef<str>>(&mut self, cols: &[&str], rows: &[Vec<S>]) -> Result<()> {
        let mut w = csv::Writer::from_writer(&mut self.out);
        w.write_record(cols)?;
        for r in rows {
            w.write_record(r.iter().map(|c| c.as_ref()))?;
        }
        w.flush()?;
        Ok(())
    }

    fn json(&mut self, v: &Value) -> Result<()> {
        serde_json::to_writer_pretty(&mut self.out, v)?;
        writeln!(self.out)?;
        Ok(())
    }

    pub fn table(&mut self, meta: &[(&str, String)], cols: &[&str], rows: &[Vec<String>]) -> Result<()> {
        match self.format {
            Format::Csv => {
                self.csv_meta(meta)?;
                self.csv_rows(cols, rows)
            }
            Format::Json => {
                let mut m = Map::new();
                for (k, v) in meta {
                    m.insert(k.to_string(), cell(v));
                }
                let rs: Vec<Value> =
                    rows.iter().map(|r| Value::Object(cols.iter().zip(r).map(|(c, v)| (c.to_string(), cell(v))).collect())).collect();
                m.insert("rows".into(), Value::Array(rs));
                self.json(&Value::Object(m))
            }
            Format::Table => {
                for (k, v) in meta {
                    writeln!(self.out, "{k}: {v}")?;
                }
                let mut width: Vec<usize> = cols.iter().map(|c| c.len()).collect();
                for r in rows {
                    for (w, c) in width.iter_mut().zip(r) {
                        *w = (*w).max(c.len());
                    }
                }
                let line = |r: Vec<&str>| r.iter().zip(&width).map(|(c, w)| format!("{c:<w$}")).collect::<Vec<_>>().join("  ");
                writeln!(self.out, "{}", line(cols.to_vec()).trim_end())?;
                for r in rows {
                    writeln!(self.out, "{}", line(r.iter().map(|s| s.as_str()).collect()).trim_end())?;
                }
                Ok(())
            }
        }
    }

    /// Key-value summary plus multi-line text blocks.
    pub fn record(&mut self, meta: &[(&str, String)], blocks: &[(&str, String)]) -> Result<()> {
        match self.format {
            Format::Csv => {
                writeln!(self.out, "{CSV_HEADER}")?;
                let rows: Vec<Vec<&str>> = meta.iter().chain(blocks).map(|(k, v)| vec![*k, v.as_str()]).collect();
                self.csv_rows(&["key", "value"], &rows)
            }
            Format::Json => {
                let m: Map<String, Value> = meta
                    .iter()
                    .map(|(k, v)| (k.to_string(), cell(v)))
                    .chain(blocks.iter().map(|(k, v)| (k.to_string(), json!(v))))
                    .collect();
                self.json(&Value::Object(m))
            }
            Format::Table => {
                for (k, v) in meta {
                    writeln!(self.out, "{k}: {v}")?;
                }
                for (k, v) in blocks {
                    writeln!(self.out, "{k}:\n{v}")?;
                }
                Ok(())
            }
        }
    }

    pub fn report(&mut self, rep: &VerificationReport) -> Result<()> {
        match self.format {
            Format::Json => {
                writeln!(self.out, "{}", rep.to_json())?;
                Ok(())
            }
            Format::Table => {
                write!(self.out, "{}", rep.to_table())?;
                Ok(())
            }
            Format::Csv => {
                self.csv_meta(&[("all_passed", rep.all_passed.to_string())])?;
                let rows: Vec<Vec<String>> = rep
                    .checks
                    .iter()
                    .map(|c| vec![c.name.clone(), c.passed.to_string(), num(c.measured), num(c.expected), num(c.tolerance), c.detail.clone()])
                    .collect();
                self.csv_rows(&["name", "passed", "measured", "expected", "tolerance", "detail"], &rows)
            }
        }
    }

    /// One line per epoch; JSON output is JSON-lines.
    pub fn trajectories(&mut self, rows: &[Result<Trajectory, String>]) -> Result<()> {
        match self.format {
            Format::Json => {
                for (ep, r) in rows.iter().enumerate() {
                    match r {
                        Ok(t) => {
                            let mut cum = 0.0;
                            for (k, e) in t.epochs.iter().enumerate() {
                                cum += e.discount * e.reward;
                                let v = json!({
                                    "episode": ep,
                                    "epoch": k,
                                    "state": [e.state.i, e.state.j],
                                    "action": e.action.as_str(),
                                    "reward": e.reward,
                                    "discount": e.discount,
                                    "discounted_reward_sum": cum,
                                });
                                writeln!(self.out, "{v}")?;
                            }
                            writeln!(self.out, "{}", json!({"episode": ep, "discounted_return": t.discounted_return, "hit_target": t.hit_target}))?;
                        }
                        Err(e) => writeln!(self.out, "{}", json!({"episode": ep, "error": e}))?,
                    }
                }
                Ok(())
            }
            _ => {
                let mut out = Vec::new();
                for (ep, r) in rows.iter().enumerate() {
                    match r {
                        Ok(t) => {
                            for (k, e) in t.epochs.iter().enumerate() {
                                out.push(vec![
                                    ep.to_string(),
                                    k.to_string(),
                                    e.state.i.to_string(),
                                    e.state.j.to_string(),
                                    e.action.to_string(),
                                    num(e.reward),
                                    num(e.discount),
                                    String::new(),
                                ]);
                            }
                        }
                        Err(e) => out.push(vec![ep.to_string(), String::new(), String::new(), String::new(), String::new(), String::new(), String::new(), e.clone()]),
                    }
                }
                let cols = ["episode", "epoch", "i", "j", "action", "reward", "discount", "error"];
                if self.format == Format::Csv {
                    writeln!(self.out, "{CSV_HEADER}")?;
                    self.csv_rows(&cols, &out)
                } else {
                    self.table(&[], &cols, &out)
                }
            }
        }
    }
}
