//! CSV trace files.
//!
//! Columns: `k`, `utility`, `conservation_residual`, `capacity_distance`,
//! then `rbar_<source>` per source, `load_<link>` per link and `xbar_<i>`
//! per entry of the averaged iterate. Floats use Rust's shortest
//! round-trip formatting, so a file read back reproduces the values bit for
//! bit.

use std::io::{Read, Write};

use thiserror::Error;

use crate::dpda::TraceRow;
use crate::problem::Instance;

pub const FIXED_COLUMNS: [&str; 4] = ["k", "utility", "conservation_residual", "capacity_distance"];

#[derive(Debug, Error)]
pub enum TraceError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("bad header: {0}")]
    Header(String),
    #[error("line {line}: {message}")]
    Row { line: usize, message: String },
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceRecord {
    pub k: usize,
    pub utility: f64,
    pub conservation: f64,
    pub capacity: f64,
    pub rbar: Vec<f64>,
    pub loads: Vec<f64>,
    pub avg: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceFile {
    pub sources: Vec<String>,
    pub links: Vec<String>,
    pub records: Vec<TraceRecord>,
}

impl TraceFile {
    /// Trace of `rows`, skipping the `k = 0` row.
    pub fn from_rows(inst: &Instance, rows: &[TraceRow]) -> TraceFile {
        let net = &inst.net;
        TraceFile {
            sources: net
                .sources()
                .iter()
                .map(|&s| net.node_id(s).to_string())
                .collect(),
            links: (0..net.link_count())
                .map(|l| net.link_id(l).to_string())
                .collect(),
            records: rows
                .iter()
                .filter(|r| r.k > 0)
                .map(|r| TraceRecord {
                    k: r.k,
                    utility: r.utility,
                    conservation: r.conservation,
                    capacity: r.capacity,
                    rbar: r.rbar.clone(),
                    loads: inst.link_loads(&r.avg),
                    avg: r.avg.clone(),
                })
                .collect(),
        }
    }

    pub fn header(&self) -> Vec<String> {
        let dim = self.records.first().map_or(0, |r| r.avg.len());
        FIXED_COLUMNS
            .iter()
            .map(|s| s.to_string())
            .chain(self.sources.iter().map(|s| format!("rbar_{s}")))
            .chain(self.links.iter().map(|l| format!("load_{l}")))
            .chain((0..dim).map(|i| format!("xbar_{i}")))
            .collect()
    }

    pub fn write<W: Write>(&self, w: W) -> Result<(), TraceError> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(self.header())?;
        for r in &self.records {
            let mut fields = vec![r.k.to_string()];
            fields.extend(
                [r.utility, r.conservation, r.capacity]
                    .iter()
                    .chain(&r.rbar)
                    .chain(&r.loads)
                    .chain(&r.avg)
                    .map(|v| v.to_string()),
            );
            out.write_record(&fields)?;
        }
        out.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("CSV output is UTF-8")
    }

    pub fn read<R: Read>(r: R) -> Result<TraceFile, TraceError> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        if header.len() < FIXED_COLUMNS.len() || header[..FIXED_COLUMNS.len()] != FIXED_COLUMNS {
            return Err(TraceError::Header(format!(
                "must start with {}",
                FIXED_COLUMNS.join(",")
            )));
        }
        let mut sources = Vec::new();
        let mut links = Vec::new();
        let mut dim = 0;
        // Column groups must appear in order: rbar, load, xbar.
        let mut stage = 0;
        for name in &header[FIXED_COLUMNS.len()..] {
            let (group, rest) = if let Some(s) = name.strip_prefix("rbar_") {
                (0, s)
            } else if let Some(l) = name.strip_prefix("load_") {
                (1, l)
            } else if let Some(i) = name.strip_prefix("xbar_") {
                (2, i)
            } else {
                return Err(TraceError::Header(format!("unknown column `{name}`")));
            };
            if group < stage {
                return Err(TraceError::Header(format!(
                    "column `{name}` is out of order"
                )));
            }
            stage = group;
            match group {
                0 => sources.push(rest.to_string()),
                1 => links.push(rest.to_string()),
                _ => {
                    if rest != dim.to_string() {
                        return Err(TraceError::Header(format!(
                            "expected xbar_{dim}, found `{name}`"
                        )));
                    }
                    dim += 1;
                }
            }
        }

        let mut records: Vec<TraceRecord> = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let line = i + 2;
            let rec = rec?;
            if rec.len() != header.len() {
                return Err(TraceError::Row {
                    line,
                    message: format!("{} fields, header has {}", rec.len(), header.len()),
                });
            }
            let k: usize = rec[0].parse().map_err(|_| TraceError::Row {
                line,
                message: format!("k = `{}` is not a non-negative integer", &rec[0]),
            })?;
            if let Some(prev) = records.last() {
                if k <= prev.k {
                    return Err(TraceError::Row {
                        line,
                        message: format!("k = {k} does not increase (previous {})", prev.k),
                    });
                }
            }
            let mut vals = Vec::with_capacity(rec.len() - 1);
            for (j, field) in rec.iter().enumerate().skip(1) {
                match field.parse::<f64>() {
                    Ok(v) if v.is_finite() => vals.push(v),
                    _ => {
                        return Err(TraceError::Row {
                            line,
                            message: format!(
                                "column `{}` holds `{field}`, not a finite number",
                                header[j]
                            ),
                        })
                    }
                }
            }
            let (s, l) = (sources.len(), links.len());
            records.push(TraceRecord {
                k,
                utility: vals[0],
                conservation: vals[1],
                capacity: vals[2],
                rbar: vals[3..3 + s].to_vec(),
                loads: vals[3 + s..3 + s + l].to_vec(),
                avg: vals[3 + s + l..].to_vec(),
            });
        }
        Ok(TraceFile {
            sources,
            links,
            records,
        })
    }

    pub fn ks(&self) -> Vec<usize> {
        self.records.iter().map(|r| r.k).collect()
    }

    /// `conservation_residual + capacity_distance` per row.
    pub fn residuals(&self) -> Vec<f64> {
        self.records
            .iter()
            .map(|r| r.conservation + r.capacity)
            .collect()
    }

    /// Largest difference between the stored residual columns and the ones
    /// recomputed from the stored averaged iterates.
    pub fn replay_error(&self, inst: &Instance) -> Result<f64, TraceError> {
        let mut worst: f64 = 0.0;
        for (i, r) in self.records.iter().enumerate() {
            if r.avg.len() != inst.dim() {
                return Err(TraceError::Row {
                    line: i + 2,
                    message: format!(
                        "{} iterate columns, the network needs {}",
                        r.avg.len(),
                        inst.dim()
                    ),
                });
            }
            let diffs = [
                inst.objective(&r.avg) - r.utility,
                inst.conservation_residual(&r.avg) - r.conservation,
                inst.capacity_distance(&r.avg) - r.capacity,
            ];
            let loads = inst.link_loads(&r.avg);
            let rbar = inst.aggregates(&r.avg);
            let more = loads
                .iter()
                .zip(&r.loads)
                .chain(rbar.iter().zip(&r.rbar))
                .map(|(a, b)| a - b);
            for d in diffs.into_iter().chain(more) {
                worst = worst.max(d.abs());
            }
        }
        Ok(worst)
    }
}
