//! CSV export and import of sweep summaries, improvement curves and
//! fixed-point tables. Floats are written with Rust's shortest round-trip
//! formatting (`inf` for infinity), so parsing an emitted file gives back
//! the same values.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use crate::agents::AgentKind;
use crate::dp::ErrorPoint;
use crate::harness::{ImprovementCurve, ImprovementPoint, SweepRow, SweepSummary};

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("missing columns: {}", .0.join(", "))]
    MissingColumns(Vec<String>),
    #[error("row {row}, column `{column}`: cannot parse `{value}`")]
    BadValue { row: usize, column: String, value: String },
    #[error("improvement file mixes several comparisons")]
    MixedCurves,
}

/// A row type with a fixed CSV schema.
pub trait CsvRecord: Sized {
    const HEADER: &'static [&'static str];
    fn fields(&self) -> Vec<String>;
    fn from_fields(get: &Fields<'_>) -> Result<Self, ReportError>;
}

/// Named access to the fields of one parsed row.
pub struct Fields<'a> {
    row: usize,
    record: &'a csv::StringRecord,
    index: &'a HashMap<String, usize>,
}

impl Fields<'_> {
    fn raw(&self, column: &str) -> &str {
        // presence of every header column is checked before rows are read
        &self.record[self.index[column]]
    }

    pub fn parse<T: std::str::FromStr>(&self, column: &str) -> Result<T, ReportError> {
        let value = self.raw(column);
        value.trim().parse().map_err(|_| ReportError::BadValue {
            row: self.row,
            column: column.to_string(),
            value: value.to_string(),
        })
    }

    pub fn string(&self, column: &str) -> String {
        self.raw(column).to_string()
    }
}

pub fn write_csv<R: CsvRecord, W: Write>(out: W, rows: &[R]) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(R::HEADER)?;
    for r in rows {
        w.write_record(r.fields())?;
    }
    w.flush()?;
    Ok(())
}

/// Reads rows by column name; extra columns are ignored.
pub fn read_csv<R: CsvRecord, I: Read>(input: I) -> Result<Vec<R>, ReportError> {
    let mut rdr = csv::Reader::from_reader(input);
    let headers = rdr.headers()?.clone();
    let index: HashMap<String, usize> = headers.iter().enumerate().map(|(i, h)| (h.trim().to_string(), i)).collect();
    let missing: Vec<String> = R::HEADER.iter().filter(|h| !index.contains_key(**h)).map(|h| h.to_string()).collect();
    if !missing.is_empty() {
        return Err(ReportError::MissingColumns(missing));
    }
    let mut rows = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        rows.push(R::from_fields(&Fields { row: k + 1, record: &rec, index: &index })?);
    }
    Ok(rows)
}

pub fn write_csv_file<R: CsvRecord>(path: &Path, rows: &[R]) -> Result<(), ReportError> {
    write_csv(std::fs::File::create(path)?, rows)
}

pub fn read_csv_file<R: CsvRecord>(path: &Path) -> Result<Vec<R>, ReportError> {
    read_csv(std::fs::File::open(path)?)
}

fn f(x: f64) -> String {
    x.to_string()
}

impl CsvRecord for SweepRow {
    const HEADER: &'static [&'static str] =
        &["env_id", "agent", "m", "lr", "checkpoint", "mse_mean", "mse_stderr", "n_runs", "n_diverged"];

    fn fields(&self) -> Vec<String> {
        vec![
            self.env_id.clone(),
            self.agent.to_string(),
            self.m.to_string(),
            f(self.lr),
            self.checkpoint.to_string(),
            f(self.mse_mean),
            f(self.mse_stderr),
            self.n_runs.to_string(),
            self.n_diverged.to_string(),
        ]
    }

    fn from_fields(g: &Fields<'_>) -> Result<Self, ReportError> {
        Ok(SweepRow {
            env_id: g.string("env_id"),
            agent: g.parse::<AgentKind>("agent")?,
            m: g.parse("m")?,
            lr: g.parse("lr")?,
            checkpoint: g.parse("checkpoint")?,
            mse_mean: g.parse("mse_mean")?,
            mse_stderr: g.parse("mse_stderr")?,
            n_runs: g.parse("n_runs")?,
            n_diverged: g.parse("n_diverged")?,
        })
    }
}

/// One improvement point together with the identity of its curve.
#[derive(Clone, Debug, PartialEq)]
pub struct ImprovementRow {
    pub env_id: String,
    pub agent_a: AgentKind,
    pub m_a: usize,
    pub agent_b: AgentKind,
    pub m_b: usize,
    pub point: ImprovementPoint,
}

impl CsvRecord for ImprovementRow {
    const HEADER: &'static [&'static str] = &[
        "env_id",
        "agent_a",
        "m_a",
        "agent_b",
        "m_b",
        "checkpoint",
        "ratio",
        "optimal_lr_a",
        "optimal_lr_b",
        "mse_a",
        "stderr_a",
        "mse_b",
        "stderr_b",
        "lr_band_a_lo",
        "lr_band_a_hi",
        "lr_band_b_lo",
        "lr_band_b_hi",
    ];

    fn fields(&self) -> Vec<String> {
        let p = &self.point;
        vec![
            self.env_id.clone(),
            self.agent_a.to_string(),
            self.m_a.to_string(),
            self.agent_b.to_string(),
            self.m_b.to_string(),
            p.checkpoint.to_string(),
            f(p.ratio),
            f(p.optimal_lr_a),
            f(p.optimal_lr_b),
            f(p.mse_a),
            f(p.stderr_a),
            f(p.mse_b),
            f(p.stderr_b),
            f(p.lr_band_a.0),
            f(p.lr_band_a.1),
            f(p.lr_band_b.0),
            f(p.lr_band_b.1),
        ]
    }

    fn from_fields(g: &Fields<'_>) -> Result<Self, ReportError> {
        Ok(ImprovementRow {
            env_id: g.string("env_id"),
            agent_a: g.parse("agent_a")?,
            m_a: g.parse("m_a")?,
            agent_b: g.parse("agent_b")?,
            m_b: g.parse("m_b")?,
            point: ImprovementPoint {
                checkpoint: g.parse("checkpoint")?,
                ratio: g.parse("ratio")?,
                optimal_lr_a: g.parse("optimal_lr_a")?,
                optimal_lr_b: g.parse("optimal_lr_b")?,
                mse_a: g.parse("mse_a")?,
                stderr_a: g.parse("stderr_a")?,
                mse_b: g.parse("mse_b")?,
                stderr_b: g.parse("stderr_b")?,
                lr_band_a: (g.parse("lr_band_a_lo")?, g.parse("lr_band_a_hi")?),
                lr_band_b: (g.parse("lr_band_b_lo")?, g.parse("lr_band_b_hi")?),
            },
        })
    }
}

pub fn improvement_rows(curve: &ImprovementCurve) -> Vec<ImprovementRow> {
    curve
        .points
        .iter()
        .map(|p| ImprovementRow {
            env_id: curve.env_id.clone(),
            agent_a: curve.agent_a,
            m_a: curve.m_a,
            agent_b: curve.agent_b,
            m_b: curve.m_b,
            point: p.clone(),
        })
        .collect()
}

/// Groups rows back into curves, in order of first appearance.
pub fn curves_from_rows(rows: Vec<ImprovementRow>) -> Vec<ImprovementCurve> {
    let mut curves: Vec<ImprovementCurve> = Vec::new();
    for r in rows {
        let pos = curves.iter().position(|c| {
            c.env_id == r.env_id && c.agent_a == r.agent_a && c.m_a == r.m_a && c.agent_b == r.agent_b && c.m_b == r.m_b
        });
        match pos {
            Some(i) => curves[i].points.push(r.point),
            None => curves.push(ImprovementCurve {
                env_id: r.env_id,
                agent_a: r.agent_a,
                m_a: r.m_a,
                agent_b: r.agent_b,
                m_b: r.m_b,
                points: vec![r.point],
            }),
        }
    }
    curves
}

/// One fixed-point certification row.
#[derive(Clone, Debug, PartialEq)]
pub struct FixedPointRow {
    pub env_id: String,
    pub m: usize,
    pub value_error_sup: f64,
    pub bound_41: f64,
    pub bound_42: f64,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

impl FixedPointRow {
    pub fn from_point(env_id: &str, p: &ErrorPoint) -> Self {
        FixedPointRow {
            env_id: env_id.to_string(),
            m: p.m,
            value_error_sup: p.value_error_sup,
            bound_41: p.bounds.bound_41,
            bound_42: p.bounds.bound_42,
            iterations: p.iterations,
            residual: p.residual,
            converged: p.converged,
        }
    }
}

impl CsvRecord for FixedPointRow {
    const HEADER: &'static [&'static str] =
        &["env_id", "m", "value_error_sup", "bound_41", "bound_42", "iterations", "residual", "converged"];

    fn fields(&self) -> Vec<String> {
        vec![
            self.env_id.clone(),
            self.m.to_string(),
            f(self.value_error_sup),
            f(self.bound_41),
            f(self.bound_42),
            self.iterations.to_string(),
            f(self.residual),
            self.converged.to_string(),
        ]
    }

    fn from_fields(g: &Fields<'_>) -> Result<Self, ReportError> {
        Ok(FixedPointRow {
            env_id: g.string("env_id"),
            m: g.parse("m")?,
            value_error_sup: g.parse("value_error_sup")?,
            bound_41: g.parse("bound_41")?,
            bound_42: g.parse("bound_42")?,
            iterations: g.parse("iterations")?,
            residual: g.parse("residual")?,
            converged: g.parse("converged")?,
        })
    }
}

pub fn write_sweep<W: Write>(out: W, summary: &SweepSummary) -> Result<(), ReportError> {
    write_csv(out, &summary.rows)
}

pub fn read_sweep<I: Read>(input: I) -> Result<SweepSummary, ReportError> {
    Ok(SweepSummary { rows: read_csv(input)? })
}

pub fn write_improvement<W: Write>(out: W, curve: &ImprovementCurve) -> Result<(), ReportError> {
    write_csv(out, &improvement_rows(curve))
}

/// Reads a file holding exactly one improvement curve.
pub fn read_improvement<I: Read>(input: I) -> Result<ImprovementCurve, ReportError> {
    let mut curves = curves_from_rows(read_csv(input)?);
    match curves.len() {
        1 => Ok(curves.pop().expect("one curve")),
        _ => Err(ReportError::MixedCurves),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dp::BoundReport;
    use proptest::prelude::*;

    fn any_f64() -> impl Strategy<Value = f64> {
        prop_oneof![
            any::<f64>().prop_filter("finite", |x| x.is_finite()),
            Just(f64::INFINITY),
            Just(0.0),
            1e-300f64..1e300,
        ]
    }

    proptest! {
        #[test]
        fn sweep_rows_round_trip(
            lr in any_f64(), mean in any_f64(), se in any_f64(),
            m in 0usize..1000, c in 0usize..100_000, n in 1usize..5000, d in 0usize..10,
        ) {
            let summary = SweepSummary { rows: vec![SweepRow {
                env_id: "dirichlet-gaussian-s0".into(), agent: AgentKind::Pqtd, m, lr, checkpoint: c,
                mse_mean: mean, mse_stderr: se, n_runs: n, n_diverged: d,
            }] };
            let mut buf = Vec::new();
            write_sweep(&mut buf, &summary).unwrap();
            prop_assert_eq!(read_sweep(&buf[..]).unwrap(), summary);
        }

        #[test]
        fn improvement_round_trip(vals in prop::collection::vec(any_f64(), 11), c in 0usize..10_000) {
            let curve = ImprovementCurve {
                env_id: "cycle-gaussian-sd0.3-s1".into(), agent_a: AgentKind::Qtd, m_a: 128, agent_b: AgentKind::Td, m_b: 0,
                points: vec![ImprovementPoint {
                    checkpoint: c, ratio: vals[0], optimal_lr_a: vals[1], optimal_lr_b: vals[2], mse_a: vals[3],
                    stderr_a: vals[4], mse_b: vals[5], stderr_b: vals[6], lr_band_a: (vals[7], vals[8]),
                    lr_band_b: (vals[9], vals[10]),
                }],
            };
            let mut buf = Vec::new();
            write_improvement(&mut buf, &curve).unwrap();
            prop_assert_eq!(read_improvement(&buf[..]).unwrap(), curve);
        }

        #[test]
        fn fixed_point_round_trip(vals in prop::collection::vec(any_f64(), 4), m in 1usize..300, it in 0usize..100_000, conv in any::<bool>()) {
            let p = ErrorPoint {
                m, value_error_sup: vals[0], iterations: it, residual: vals[1], converged: conv,
                bounds: BoundReport { bound_41: vals[2], bound_42: vals[3], observed_error: vals[0] },
            };
            let rows = vec![FixedPointRow::from_point("garnet-point_mass-s2", &p)];
            let mut buf = Vec::new();
            write_csv(&mut buf, &rows).unwrap();
            prop_assert_eq!(read_csv::<FixedPointRow, _>(&buf[..]).unwrap(), rows);
        }
    }

    #[test]
    fn header_is_fixed() {
        let mut buf = Vec::new();
        write_sweep(&mut buf, &SweepSummary::default()).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().trim(), "env_id,agent,m,lr,checkpoint,mse_mean,mse_stderr,n_runs,n_diverged");
    }

    #[test]
    fn missing_columns_are_named() {
        let err = read_sweep("env_id,agent,m,lr\nx,td,0,0.1\n".as_bytes()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("checkpoint") && msg.contains("mse_mean") && msg.contains("n_diverged"), "{msg}");
    }

    #[test]
    fn bad_values_are_located() {
        let text = "env_id,agent,m,lr,checkpoint,mse_mean,mse_stderr,n_runs,n_diverged\nx,td,0,fast,1,1,1,1,0\n";
        let msg = read_sweep(text.as_bytes()).unwrap_err().to_string();
        assert!(msg.contains("row 1") && msg.contains("`lr`"), "{msg}");
    }

    #[test]
    fn mixed_improvement_files_are_rejected() {
        let mk = |env: &str| ImprovementRow {
            env_id: env.into(),
            agent_a: AgentKind::Qtd,
            m_a: 1,
            agent_b: AgentKind::Td,
            m_b: 0,
            point: ImprovementPoint {
                checkpoint: 1,
                ratio: 1.0,
                optimal_lr_a: 1.0,
                optimal_lr_b: 1.0,
                mse_a: 1.0,
                stderr_a: 0.0,
                mse_b: 1.0,
                stderr_b: 0.0,
                lr_band_a: (1.0, 1.0),
                lr_band_b: (1.0, 1.0),
            },
        };
        let mut buf = Vec::new();
        write_csv(&mut buf, &[mk("a"), mk("b")]).unwrap();
        assert!(matches!(read_improvement(&buf[..]), Err(ReportError::MixedCurves)));
        assert_eq!(curves_from_rows(read_csv(&buf[..]).unwrap()).len(), 2);
    }
}
