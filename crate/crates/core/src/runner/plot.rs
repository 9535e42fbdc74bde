//! Tidy plot-data CSV: one row per point, `series,x,y[,err]`.

use std::path::Path;

use crate::error::{Error, Result};
use crate::sample::fmt_f64;

#[derive(Debug, Clone, PartialEq)]
pub struct PlotSeries {
    pub name: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub err: Option<Vec<f64>>,
}

impl PlotSeries {
    pub fn new(name: impl Into<String>, x: Vec<f64>, y: Vec<f64>, err: Option<Vec<f64>>) -> Result<Self> {
        let name = name.into();
        if x.len() != y.len() || err.as_ref().is_some_and(|e| e.len() != x.len()) {
            return Err(Error::invalid(format!("series {name:?} has columns of different lengths")));
        }
        Ok(Self { name, x, y, err })
    }
}

fn format_err(path: &Path, detail: impl Into<String>) -> Error {
    Error::Format {
        path: path.display().to_string(),
        detail: detail.into(),
    }
}

/// The `err` column is written iff some series carries errors; series
/// without errors leave it empty.
pub fn emit_plot_data(series: &[PlotSeries], path: &Path) -> Result<()> {
    let with_err = series.iter().any(|s| s.err.is_some());
    let mut wr = csv::Writer::from_path(path).map_err(|e| format_err(path, e.to_string()))?;
    let mut header = vec!["series", "x", "y"];
    if with_err {
        header.push("err");
    }
    wr.write_record(&header).map_err(|e| format_err(path, e.to_string()))?;
    for s in series {
        for i in 0..s.x.len() {
            let mut rec = vec![s.name.clone(), fmt_f64(s.x[i]), fmt_f64(s.y[i])];
            if with_err {
                rec.push(s.err.as_ref().map(|e| fmt_f64(e[i])).unwrap_or_default());
            }
            wr.write_record(&rec).map_err(|e| format_err(path, e.to_string()))?;
        }
    }
    wr.flush().map_err(|e| Error::io(path, e))
}

/// Reads a file written by [`emit_plot_data`]; rows of one series must be
/// contiguous.
pub fn read_plot_data(path: &Path) -> Result<Vec<PlotSeries>> {
    let mut rd = csv::Reader::from_path(path).map_err(|e| format_err(path, e.to_string()))?;
    let header = rd.headers().map_err(|e| format_err(path, e.to_string()))?.clone();
    let with_err = match header.iter().collect::<Vec<_>>().as_slice() {
        ["series", "x", "y"] => false,
        ["series", "x", "y", "err"] => true,
        _ => return Err(format_err(path, "header must be series,x,y[,err]")),
    };
    let mut out: Vec<PlotSeries> = Vec::new();
    for (r, rec) in rd.records().enumerate() {
        let line = r + 2;
        let rec = rec.map_err(|e| format_err(path, format!("line {line}: {e}")))?;
        let num = |j: usize| -> Result<f64> {
            rec[j]
                .parse()
                .map_err(|_| format_err(path, format!("line {line}: {:?} is not a number", &rec[j])))
        };
        let (x, y) = (num(1)?, num(2)?);
        let err = if with_err && !rec[3].is_empty() { Some(num(3)?) } else { None };
        match out.last_mut() {
            Some(s) if s.name == rec[0] => {
                s.x.push(x);
                s.y.push(y);
                if let (Some(e), Some(v)) = (s.err.as_mut(), err) {
                    e.push(v);
                }
            }
            _ => out.push(PlotSeries {
                name: rec[0].to_string(),
                x: vec![x],
                y: vec![y],
                err: err.map(|v| vec![v]),
            }),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_list_writes_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("plot.csv");
        emit_plot_data(&[], &p).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "series,x,y\n");
        assert!(read_plot_data(&p).unwrap().is_empty());
    }

    #[test]
    fn round_trip_with_and_without_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("plot.csv");
        let a = PlotSeries::new("sms-ubu", vec![0.1, 0.05], vec![1e-3, 2.5e-4], Some(vec![1e-5, 2e-6])).unwrap();
        let b = PlotSeries::new("sg-ubu", vec![0.1, 0.05], vec![std::f64::consts::PI, -1.0 / 3.0], Some(vec![0.0, 0.0])).unwrap();
        emit_plot_data(&[a.clone(), b.clone()], &p).unwrap();
        assert!(std::fs::read_to_string(&p).unwrap().starts_with("series,x,y,err\n"));
        assert_eq!(read_plot_data(&p).unwrap(), vec![a, b]);

        let c = PlotSeries::new("c", vec![1.0], vec![2.0], None).unwrap();
        emit_plot_data(std::slice::from_ref(&c), &p).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap().lines().next(), Some("series,x,y"));
        assert_eq!(read_plot_data(&p).unwrap(), vec![c]);
    }

    #[test]
    fn mismatched_columns_rejected() {
        assert!(PlotSeries::new("a", vec![1.0], vec![], None).is_err());
        assert!(PlotSeries::new("a", vec![1.0], vec![1.0], Some(vec![])).is_err());
    }
}
