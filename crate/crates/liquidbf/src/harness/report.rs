//! Result persistence and aggregation. No recomputation happens here: the
//! report command only reads result rows, groups them, and summarizes.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::{AntennaKind, Method};
use crate::error::{Error, Result};

/// Version tag of the result-row CSV schema.
pub const RESULTS_SCHEMA: &str = "resultrow-v1";

/// One sweep cell's outcome.
///
/// `se_est` is the objective the optimizer saw (estimated channel); `se_true`
/// and the per-user rates are re-evaluated on the true channel with the same
/// precoder. `p_star` is the 1-based winning pattern index.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub method: Method,
    pub antenna: AntennaKind,
    pub p_dbm: f64,
    pub cee_db: f64,
    pub seed: u64,
    pub p_star: usize,
    pub se_true: f64,
    pub se_est: f64,
    pub rates: Vec<f64>,
    pub wall_time_ms: f64,
}

fn result_header(k_users: usize) -> Vec<String> {
    let mut h = vec![
        "method".to_string(),
        "antenna".to_string(),
        "p_dbm".to_string(),
        "cee_db".to_string(),
        "seed".to_string(),
        "p_star".to_string(),
        "se_true".to_string(),
        "se_est".to_string(),
    ];
    for k in 1..=k_users {
        h.push(format!("rate_{k}"));
    }
    h.push("wall_time_ms".to_string());
    h
}

/// Writes result rows with an RFC 4180 writer, one flush per row so partial
/// sweeps leave usable files behind.
pub fn write_result_csv<W: Write>(writer: W, rows: &[ResultRow], k_users: usize) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(result_header(k_users))?;
    for row in rows {
        if row.rates.len() != k_users {
            return Err(Error::SchemaMismatch(format!(
                "row carries {} rates, expected {}",
                row.rates.len(),
                k_users
            )));
        }
        let mut rec = vec![
            row.method.to_string(),
            row.antenna.to_string(),
            row.p_dbm.to_string(),
            row.cee_db.to_string(),
            row.seed.to_string(),
            row.p_star.to_string(),
            row.se_true.to_string(),
            row.se_est.to_string(),
        ];
        rec.extend(row.rates.iter().map(|r| r.to_string()));
        rec.push(row.wall_time_ms.to_string());
        w.write_record(rec)?;
        w.flush()?;
    }
    Ok(())
}

/// Reads rows written by [`write_result_csv`], inferring the user count from
/// the header. Any header deviation is a schema error.
pub fn read_result_csv<R: Read>(reader: R) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_reader(reader);
    let header = r.headers()?.clone();
    let fields: Vec<&str> = header.iter().collect();
    if fields.len() < 10
        || fields[..8]
            != ["method", "antenna", "p_dbm", "cee_db", "seed", "p_star", "se_true", "se_est"]
        || *fields.last().unwrap() != "wall_time_ms"
    {
        return Err(Error::SchemaMismatch(format!("unexpected results header: {fields:?}")));
    }
    let k_users = fields.len() - 9;
    for (k, name) in fields[8..8 + k_users].iter().enumerate() {
        if *name != format!("rate_{}", k + 1) {
            return Err(Error::SchemaMismatch(format!("unexpected rate column '{name}'")));
        }
    }

    let mut rows = Vec::new();
    for record in r.records() {
        let record = record?;
        if record.len() != fields.len() {
            return Err(Error::SchemaMismatch("short results record".into()));
        }
        let f = |i: usize| -> Result<f64> {
            record[i]
                .parse()
                .map_err(|e| Error::SchemaMismatch(format!("bad float in column {i}: {e}")))
        };
        rows.push(ResultRow {
            method: record[0].parse()?,
            antenna: record[1].parse()?,
            p_dbm: f(2)?,
            cee_db: f(3)?,
            seed: record[4]
                .parse()
                .map_err(|e| Error::SchemaMismatch(format!("bad seed: {e}")))?,
            p_star: record[5]
                .parse()
                .map_err(|e| Error::SchemaMismatch(format!("bad p_star: {e}")))?,
            se_true: f(6)?,
            se_est: f(7)?,
            rates: (0..k_users).map(|k| f(8 + k)).collect::<Result<_>>()?,
            wall_time_ms: f(8 + k_users)?,
        });
    }
    Ok(rows)
}

/// Mean ± population standard deviation of one grid point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateRow {
    pub method: Method,
    pub antenna: AntennaKind,
    pub p_dbm: f64,
    pub cee_db: f64,
    pub n: usize,
    pub se_true_mean: f64,
    pub se_true_std: f64,
    pub se_est_mean: f64,
    pub se_est_std: f64,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Groups rows by (method, antenna, P, CEE) and summarizes SE over seeds.
pub fn aggregate(rows: &[ResultRow]) -> Vec<AggregateRow> {
    let mut groups: BTreeMap<(Method, AntennaKind, u64, u64), Vec<&ResultRow>> = BTreeMap::new();
    for row in rows {
        groups
            .entry((row.method, row.antenna, row.p_dbm.to_bits(), row.cee_db.to_bits()))
            .or_default()
            .push(row);
    }
    groups
        .into_values()
        .map(|members| {
            let se_true: Vec<f64> = members.iter().map(|r| r.se_true).collect();
            let se_est: Vec<f64> = members.iter().map(|r| r.se_est).collect();
            let (se_true_mean, se_true_std) = mean_std(&se_true);
            let (se_est_mean, se_est_std) = mean_std(&se_est);
            let first = members[0];
            AggregateRow {
                method: first.method,
                antenna: first.antenna,
                p_dbm: first.p_dbm,
                cee_db: first.cee_db,
                n: members.len(),
                se_true_mean,
                se_true_std,
                se_est_mean,
                se_est_std,
            }
        })
        .collect()
}

const AGGREGATE_HEADER: [&str; 9] = [
    "method",
    "antenna",
    "p_dbm",
    "cee_db",
    "n",
    "se_true_mean",
    "se_true_std",
    "se_est_mean",
    "se_est_std",
];

pub fn write_aggregate_csv<W: Write>(writer: W, rows: &[AggregateRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(AGGREGATE_HEADER)?;
    for row in rows {
        w.write_record(&[
            row.method.to_string(),
            row.antenna.to_string(),
            row.p_dbm.to_string(),
            row.cee_db.to_string(),
            row.n.to_string(),
            row.se_true_mean.to_string(),
            row.se_true_std.to_string(),
            row.se_est_mean.to_string(),
            row.se_est_std.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_aggregate_csv<R: Read>(reader: R) -> Result<Vec<AggregateRow>> {
    let mut r = csv::Reader::from_reader(reader);
    {
        let header = r.headers()?;
        if header.iter().ne(AGGREGATE_HEADER.iter().copied()) {
            return Err(Error::SchemaMismatch(format!("unexpected aggregate header: {header:?}")));
        }
    }
    let mut rows = Vec::new();
    for record in r.records() {
        let record = record?;
        let f = |i: usize| -> Result<f64> {
            record[i]
                .parse()
                .map_err(|e| Error::SchemaMismatch(format!("bad float in column {i}: {e}")))
        };
        rows.push(AggregateRow {
            method: record[0].parse()?,
            antenna: record[1].parse()?,
            p_dbm: f(2)?,
            cee_db: f(3)?,
            n: record[4]
                .parse()
                .map_err(|e| Error::SchemaMismatch(format!("bad n: {e}")))?,
            se_true_mean: f(5)?,
            se_true_std: f(6)?,
            se_est_mean: f(7)?,
            se_est_std: f(8)?,
        });
    }
    Ok(rows)
}

/// The summary emitted by [`report_command`].
#[derive(Debug, Serialize)]
pub struct ReportSummary {
    pub schema: &'static str,
    pub inputs: Vec<PathBuf>,
    pub rows_read: usize,
    pub aggregate: Vec<AggregateRow>,
    /// Per (method, antenna): SE retention across the error grid, when the
    /// inputs span more than one error level.
    pub degradation_ratio: BTreeMap<String, f64>,
    /// Reference robustness contrast in percent for the same ratio.
    pub reference_reduction_pct: BTreeMap<&'static str, f64>,
}

/// Aggregates result CSVs into a plot-ready CSV plus a summary JSON.
///
/// Pure aggregation: nothing is recomputed from channels or models.
pub fn report_command(csv_paths: &[PathBuf], out_dir: &Path) -> Result<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(out_dir)?;
    let mut rows = Vec::new();
    for path in csv_paths {
        let file = BufReader::new(File::open(path)?);
        rows.extend(read_result_csv(file)?);
    }
    let aggregate_rows = aggregate(&rows);

    let agg_path = out_dir.join("aggregate.csv");
    write_aggregate_csv(BufWriter::new(File::create(&agg_path)?), &aggregate_rows)?;

    let cees: Vec<f64> = {
        let mut v: Vec<f64> = rows.iter().map(|r| r.cee_db).collect();
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    };
    let mut degradation_ratio = BTreeMap::new();
    if cees.len() > 1 {
        let (lo, hi) = (cees[0], *cees.last().unwrap());
        let find = |m: Method, a: AntennaKind, cee: f64| -> Option<f64> {
            aggregate_rows
                .iter()
                .find(|r| r.method == m && r.antenna == a && r.cee_db == cee)
                .map(|r| r.se_true_mean)
        };
        let mut keys: Vec<(Method, AntennaKind)> =
            rows.iter().map(|r| (r.method, r.antenna)).collect();
        keys.sort_unstable();
        keys.dedup();
        for (m, a) in keys {
            if let (Some(lo_se), Some(hi_se)) = (find(m, a, lo), find(m, a, hi)) {
                degradation_ratio.insert(format!("{m}|{a}"), hi_se / lo_se);
            }
        }
    }

    let summary = ReportSummary {
        schema: RESULTS_SCHEMA,
        inputs: csv_paths.to_vec(),
        rows_read: rows.len(),
        aggregate: aggregate_rows,
        degradation_ratio,
        reference_reduction_pct: BTreeMap::from([("lnn", 31.7), ("gd", 55.4)]),
    };
    let summary_path = out_dir.join("summary.json");
    std::fs::write(&summary_path, serde_json::to_string_pretty(&summary)?)?;

    Ok((agg_path, summary_path))
}
