//! CSV readers and writers for matrices, operators, traces and experiment output.
//!
//! Matrices are header-free CSV, one row per line. Vectors are a single
//! column. An entry-sampler file starts with `n1,n2` followed by one `i,j`
//! pair per line (zero-based). A trace-list operator is a stacked matrix CSV
//! plus an index CSV with rows `i,start_row,n1,n2`.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::harness::{ConvRow, CurvePoint, TrialResult};
use crate::linalg::{DenseMatrix, DenseVector};
use crate::models::SensingOperator;
use crate::solvers::Trace;

fn reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .comment(Some(b'#'))
        .from_reader(r)
}

fn parse_f64(s: &str, line: u64) -> Result<f64> {
    s.parse::<f64>()
        .map_err(|_| Error::Parse(format!("line {line}: '{s}' is not a number")))
}

fn parse_usize(s: &str, line: u64) -> Result<usize> {
    s.parse::<usize>()
        .map_err(|_| Error::Parse(format!("line {line}: '{s}' is not a nonnegative integer")))
}

fn rows_of<R: Read>(r: R) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::new();
    for rec in reader(r).records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        out.push(rec.iter().map(|f| parse_f64(f, line)).collect::<Result<Vec<_>>>()?);
    }
    Ok(out)
}

pub fn parse_matrix<R: Read>(r: R) -> Result<DenseMatrix> {
    let rows = rows_of(r)?;
    if rows.is_empty() {
        return Err(Error::Parse("matrix file is empty".into()));
    }
    let m = DenseMatrix::from_rows(&rows)?;
    if !m.is_finite() {
        return Err(Error::NonFinite("matrix file"));
    }
    Ok(m)
}

pub fn read_matrix(path: impl AsRef<Path>) -> Result<DenseMatrix> {
    parse_matrix(File::open(path)?)
}

/// Accepts one value per line or a single row.
pub fn parse_vector<R: Read>(r: R) -> Result<DenseVector> {
    let rows = rows_of(r)?;
    let vals: Vec<f64> = if rows.len() == 1 {
        rows.into_iter().next().unwrap()
    } else {
        if rows.iter().any(|r| r.len() != 1) {
            return Err(Error::Parse("vector file must have a single column or a single row".into()));
        }
        rows.into_iter().map(|r| r[0]).collect()
    };
    DenseVector::new(vals)
}

pub fn read_vector(path: impl AsRef<Path>) -> Result<DenseVector> {
    parse_vector(File::open(path)?)
}

pub fn write_matrix<W: Write>(w: W, a: &DenseMatrix) -> Result<()> {
    let mut wr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    for i in 0..a.rows() {
        wr.write_record(a.row(i).iter().map(|v| format!("{v:e}")))?;
    }
    wr.flush()?;
    Ok(())
}

pub fn write_vector<W: Write>(w: W, v: &[f64]) -> Result<()> {
    let mut wr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    for x in v {
        wr.write_record([format!("{x:e}")])?;
    }
    wr.flush()?;
    Ok(())
}

pub fn parse_sampler<R: Read>(r: R) -> Result<SensingOperator> {
    let mut recs = reader(r).into_records();
    let head = recs
        .next()
        .ok_or_else(|| Error::Parse("sampler file is empty".into()))??;
    if head.len() != 2 {
        return Err(Error::Parse("sampler header must be 'n1,n2'".into()));
    }
    let n1 = parse_usize(&head[0], 1)?;
    let n2 = parse_usize(&head[1], 1)?;
    let mut entries = Vec::new();
    for rec in recs {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != 2 {
            return Err(Error::Parse(format!("line {line}: expected 'i,j'")));
        }
        entries.push((parse_usize(&rec[0], line)?, parse_usize(&rec[1], line)?));
    }
    SensingOperator::entry_sampler(n1, n2, entries)
}

pub fn read_sampler(path: impl AsRef<Path>) -> Result<SensingOperator> {
    parse_sampler(File::open(path)?)
}

/// Trace-list operator from a stacked matrix file and its index file.
pub fn parse_trace_list<R1: Read, R2: Read>(stacked: R1, index: R2) -> Result<SensingOperator> {
    let big = parse_matrix(stacked)?;
    let mut mats = Vec::new();
    for (pos, rec) in reader(index).records().enumerate() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != 4 {
            return Err(Error::Parse(format!("line {line}: expected 'i,start_row,n1,n2'")));
        }
        let i = parse_usize(&rec[0], line)?;
        if i != pos {
            return Err(Error::Parse(format!("line {line}: index rows must be numbered 0,1,2,...")));
        }
        let start = parse_usize(&rec[1], line)?;
        let n1 = parse_usize(&rec[2], line)?;
        let n2 = parse_usize(&rec[3], line)?;
        if start + n1 > big.rows() || n2 > big.cols() {
            return Err(Error::Parse(format!("line {line}: block exceeds the stacked matrix")));
        }
        let data: Vec<f64> = (start..start + n1).flat_map(|r| big.row(r)[..n2].to_vec()).collect();
        mats.push(DenseMatrix::new(n1, n2, data)?);
    }
    SensingOperator::trace_list(&mats)
}

pub fn read_trace_list(stacked: impl AsRef<Path>, index: impl AsRef<Path>) -> Result<SensingOperator> {
    parse_trace_list(File::open(stacked)?, File::open(index)?)
}

#[derive(Serialize)]
struct TraceRow {
    k: usize,
    f: f64,
    grad_norm: f64,
    step: f64,
    kicked: bool,
    primal_residual: f64,
}

fn write_rows<W: Write, T: Serialize>(w: W, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for r in rows {
        wr.serialize(r)?;
    }
    wr.flush()?;
    Ok(())
}

/// Columns `k, f, grad_norm, step, kicked, primal_residual`.
pub fn write_trace<W: Write>(w: W, trace: &Trace) -> Result<()> {
    write_rows(
        w,
        trace.records.iter().map(|r| TraceRow {
            k: r.k,
            f: r.f,
            grad_norm: r.grad_norm,
            step: r.step,
            kicked: r.kicked,
            primal_residual: r.primal_residual,
        }),
    )
}

/// Dual and primal iterates, one record per line, prefixed by `k`.
pub fn write_iterates<W1: Write, W2: Write>(y_out: W1, x_out: W2, trace: &Trace) -> Result<()> {
    let mut wy = csv::WriterBuilder::new().has_headers(false).from_writer(y_out);
    let mut wx = csv::WriterBuilder::new().has_headers(false).from_writer(x_out);
    for rec in &trace.records {
        let (Some(y), Some(x)) = (&rec.y, &rec.x) else {
            return Err(Error::MissingIterates);
        };
        let k = rec.k.to_string();
        wy.write_record(std::iter::once(k.clone()).chain(y.iter().map(|v| format!("{v:e}"))))?;
        wx.write_record(std::iter::once(k).chain(x.as_flat().iter().map(|v| format!("{v:e}"))))?;
    }
    wy.flush()?;
    wx.flush()?;
    Ok(())
}

pub fn write_trials<W: Write>(w: W, trials: &[TrialResult]) -> Result<()> {
    write_rows(w, trials)
}

pub fn write_curves<W: Write>(w: W, curves: &[CurvePoint]) -> Result<()> {
    write_rows(w, curves)
}

pub fn write_conv<W: Write>(w: W, rows: &[ConvRow]) -> Result<()> {
    write_rows(w, rows)
}
