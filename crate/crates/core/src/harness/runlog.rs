//! Evaluation records and their CSV form.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RunRow {
    pub run_id: String,
    pub baseline: String,
    pub env: String,
    pub team_id: usize,
    pub seed: u64,
    /// Includes the team's source-stage steps for pre-skilled runs.
    pub total_step: u64,
    pub mean_return: f64,
    pub ci95: f64,
    pub doe_rate: Vec<f64>,
    pub source_return: Vec<Option<f64>>,
}

/// Rows for any number of runs sharing agent and sub-team counts.
#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub num_agents: usize,
    pub num_subteams: usize,
    pub rows: Vec<RunRow>,
}

const FIXED_COLUMNS: [&str; 8] = [
    "run_id",
    "baseline",
    "env",
    "team_id",
    "seed",
    "total_step",
    "mean_return",
    "ci95",
];

fn parse<T: std::str::FromStr>(field: &str, column: &str, line: usize) -> Result<T> {
    field
        .parse()
        .map_err(|_| Error::config(format!("row {line}: cannot parse {column} from {field:?}")))
}

impl RunLog {
    pub fn new(num_agents: usize, num_subteams: usize) -> Self {
        Self {
            num_agents,
            num_subteams,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: RunRow) -> Result<()> {
        if row.doe_rate.len() != self.num_agents || row.source_return.len() != self.num_subteams {
            return Err(Error::arg(format!(
                "row has {} DoE rates and {} source returns; log expects {} and {}",
                row.doe_rate.len(),
                row.source_return.len(),
                self.num_agents,
                self.num_subteams
            )));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn extend(&mut self, other: RunLog) -> Result<()> {
        for row in other.rows {
            self.push(row)?;
        }
        Ok(())
    }

    pub fn header(&self) -> Vec<String> {
        let mut h: Vec<String> = FIXED_COLUMNS.iter().map(|s| s.to_string()).collect();
        h.extend((1..=self.num_agents).map(|i| format!("doe_rate_agent_{i}")));
        h.extend((1..=self.num_subteams).map(|i| format!("source_return_subteam_{i}")));
        h
    }

    /// Row indices grouped by run id, in first-appearance order.
    pub fn runs(&self) -> Vec<(String, Vec<&RunRow>)> {
        let mut out: Vec<(String, Vec<&RunRow>)> = Vec::new();
        for row in &self.rows {
            match out.iter_mut().find(|(id, _)| *id == row.run_id) {
                Some((_, rows)) => rows.push(row),
                None => out.push((row.run_id.clone(), vec![row])),
            }
        }
        out
    }

    /// `total_step` strictly increases within each run and every `ci95 >= 0`.
    pub fn validate(&self) -> Result<()> {
        for (id, rows) in self.runs() {
            for w in rows.windows(2) {
                if w[1].total_step <= w[0].total_step {
                    return Err(Error::config(format!("run {id}: total_step not strictly increasing")));
                }
            }
            if let Some(r) = rows.iter().find(|r| !(r.ci95 >= 0.0)) {
                return Err(Error::config(format!("run {id}: negative ci95 at step {}", r.total_step)));
            }
        }
        Ok(())
    }

    pub fn write_to<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(self.header())?;
        for r in &self.rows {
            let mut rec = vec![
                r.run_id.clone(),
                r.baseline.clone(),
                r.env.clone(),
                r.team_id.to_string(),
                r.seed.to_string(),
                r.total_step.to_string(),
                r.mean_return.to_string(),
                r.ci95.to_string(),
            ];
            rec.extend(r.doe_rate.iter().map(f64::to_string));
            rec.extend(r.source_return.iter().map(|v| v.map_or_else(String::new, |x| x.to_string())));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_to(std::io::BufWriter::new(file))
    }

    pub fn read_from<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        if header.len() < FIXED_COLUMNS.len() || header[..FIXED_COLUMNS.len()] != FIXED_COLUMNS {
            return Err(Error::config(format!(
                "CSV header must start with {}",
                FIXED_COLUMNS.join(",")
            )));
        }
        let rest = &header[FIXED_COLUMNS.len()..];
        let num_agents = rest.iter().take_while(|h| h.starts_with("doe_rate_agent_")).count();
        let num_subteams = rest.len() - num_agents;
        for (i, h) in rest.iter().enumerate() {
            let expected = if i < num_agents {
                format!("doe_rate_agent_{}", i + 1)
            } else {
                format!("source_return_subteam_{}", i - num_agents + 1)
            };
            if *h != expected {
                return Err(Error::config(format!("unexpected column {h:?}, wanted {expected:?}")));
            }
        }
        let mut log = RunLog::new(num_agents, num_subteams);
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            let line = line + 2;
            let f = |i: usize| rec.get(i).unwrap_or("");
            let doe_rate = (0..num_agents)
                .map(|i| parse(f(8 + i), &header[8 + i], line))
                .collect::<Result<Vec<f64>>>()?;
            let source_return = (0..num_subteams)
                .map(|i| {
                    let field = f(8 + num_agents + i);
                    if field.is_empty() {
                        Ok(None)
                    } else {
                        parse(field, &header[8 + num_agents + i], line).map(Some)
                    }
                })
                .collect::<Result<Vec<Option<f64>>>>()?;
            log.push(RunRow {
                run_id: f(0).to_string(),
                baseline: f(1).to_string(),
                env: f(2).to_string(),
                team_id: parse(f(3), "team_id", line)?,
                seed: parse(f(4), "seed", line)?,
                total_step: parse(f(5), "total_step", line)?,
                mean_return: parse(f(6), "mean_return", line)?,
                ci95: parse(f(7), "ci95", line)?,
                doe_rate,
                source_return,
            })?;
        }
        Ok(log)
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(std::io::BufReader::new(file))
    }
}
