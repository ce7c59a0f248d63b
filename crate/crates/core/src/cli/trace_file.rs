//! Trace files: one CSV row per accepted flow step.
//!
//! Header: `t,S,C,lambda,einstein_residual,flat_residual,norm_l_sq,min_degeneracy_margin,dt,SK_rel`.
//! Every value is written in scientific notation with 17 significant digits,
//! which reads back to the same `f64`.

use std::io::{Read, Write};

use thiserror::Error;

use crate::flows::{FlowTrace, TraceRecord};

pub const TRACE_HEADER: [&str; 10] = [
    "t",
    "S",
    "C",
    "lambda",
    "einstein_residual",
    "flat_residual",
    "norm_l_sq",
    "min_degeneracy_margin",
    "dt",
    "SK_rel",
];

#[derive(Debug, Error)]
pub enum TraceError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("unexpected trace header {0:?}")]
    Header(Vec<String>),
    #[error("row {row}: cannot parse `{value}` as a number")]
    Number { row: usize, value: String },
    #[error("row {row}: t = {t} does not increase")]
    TimeNotIncreasing { row: usize, t: f64 },
}

/// The scalar columns of a trace record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow(pub [f64; 10]);

impl TraceRow {
    pub fn from_record(r: &TraceRecord) -> Self {
        TraceRow([
            r.t,
            r.total,
            r.energy,
            r.lambda,
            r.einstein_residual,
            r.flat_residual,
            r.norm_l_sq,
            r.min_degeneracy_margin,
            r.dt,
            r.sk_rel,
        ])
    }

    pub fn t(&self) -> f64 {
        self.0[0]
    }

    /// A record without snapshot data, as recovered from a file.
    pub fn to_record(&self) -> TraceRecord {
        let v = self.0;
        TraceRecord {
            t: v[0],
            total: v[1],
            energy: v[2],
            lambda: v[3],
            einstein_residual: v[4],
            flat_residual: v[5],
            norm_l_sq: v[6],
            min_degeneracy_margin: v[7],
            dt: v[8],
            sk_rel: v[9],
            target_energy: None,
            snapshot: None,
        }
    }
}

pub fn format_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_trace<W: Write>(trace: &FlowTrace, out: W) -> Result<(), TraceError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACE_HEADER)?;
    for r in &trace.records {
        w.write_record(TraceRow::from_record(r).0.map(format_f64))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace<R: Read>(input: R) -> Result<Vec<TraceRow>, TraceError> {
    let mut rd = csv::Reader::from_reader(input);
    let header = rd.headers()?;
    if header.iter().ne(TRACE_HEADER) {
        return Err(TraceError::Header(header.iter().map(String::from).collect()));
    }
    let mut rows: Vec<TraceRow> = Vec::new();
    for (row, rec) in rd.records().enumerate() {
        let rec = rec?;
        let mut vals = [0.0; 10];
        for (slot, field) in vals.iter_mut().zip(rec.iter()) {
            *slot = field.trim().parse().map_err(|_| TraceError::Number {
                row,
                value: field.to_string(),
            })?;
        }
        let t = vals[0];
        if rows.last().is_some_and(|p| !(t > p.t())) {
            return Err(TraceError::TimeNotIncreasing { row, t });
        }
        rows.push(TraceRow(vals));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(t: f64) -> TraceRecord {
        TraceRow([t, 0.1, 1.0 / 3.0, -2.5e-300, 1e-17, f64::MIN_POSITIVE, 24.0, -0.0, 1e-3, -7.25]).to_record()
    }

    #[test]
    fn round_trip_is_exact() {
        let trace = FlowTrace {
            flow: "crf".into(),
            k: 0.0,
            seed: Some(4),
            records: vec![rec(0.0), rec(0.001), rec(0.1 + 0.2)],
        };
        let mut buf = Vec::new();
        write_trace(&trace, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,S,C,lambda,einstein_residual,flat_residual,norm_l_sq,min_degeneracy_margin,dt,SK_rel\n"));
        assert!(text.contains("3.3333333333333331e-1"));
        let rows = read_trace(buf.as_slice()).unwrap();
        assert_eq!(rows.len(), 3);
        for (row, r) in rows.iter().zip(&trace.records) {
            assert_eq!(row.to_record(), *r);
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(read_trace("a,b\n1,2\n".as_bytes()), Err(TraceError::Header(_))));
        let h = TRACE_HEADER.join(",");
        let dup = format!("{h}\n1,0,0,0,0,0,0,0,0,0\n1,0,0,0,0,0,0,0,0,0\n");
        assert!(matches!(read_trace(dup.as_bytes()), Err(TraceError::TimeNotIncreasing { row: 1, .. })));
        let junk = format!("{h}\n0,x,0,0,0,0,0,0,0,0\n");
        assert!(matches!(read_trace(junk.as_bytes()), Err(TraceError::Number { .. })));
        let short = format!("{h}\n0,0\n");
        assert!(matches!(read_trace(short.as_bytes()), Err(TraceError::Csv(_))));
    }
}
