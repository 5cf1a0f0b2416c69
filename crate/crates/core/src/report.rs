//! Deterministic CSV output (schema v1) and parsing of trace files.

use std::io::{self, Write};

use crate::analysis::{ConstantsReport, StationarityReport};
use crate::error::{PvfimError, Result};
use crate::oracle::OracleResult;
use crate::solver::{SolveTrace, TraceRow};

pub const SCHEMA: &str = "v1";

/// 17 significant digits in scientific notation, independent of locale.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn fmt_vec(v: &[f64]) -> String {
    v.iter().map(|x| fmt_f64(*x)).collect::<Vec<_>>().join(" ")
}

/// `# key = value` lines echoing the resolved configuration.
pub fn write_header<W: Write>(w: &mut W, kind: &str, pairs: &[(String, String)]) -> io::Result<()> {
    writeln!(w, "# pvfim {kind} schema={SCHEMA}")?;
    for (k, v) in pairs {
        writeln!(w, "# {k} = {v}")?;
    }
    Ok(())
}

pub fn trace_columns(n: usize, m: usize) -> Vec<String> {
    let mut c = vec!["l".to_string(), "t".to_string()];
    c.extend((0..n).map(|i| format!("x{i}")));
    c.extend((0..m).map(|i| format!("y{i}")));
    for s in ["G_value", "a_norm", "x_gap", "y_grad_norm", "slack", "tau", "J", "K", "eta"] {
        c.push(s.to_string());
    }
    c
}

pub fn write_trace_header<W: Write>(w: &mut W, n: usize, m: usize) -> io::Result<()> {
    writeln!(w, "{}", trace_columns(n, m).join(","))
}

pub fn write_trace_row<W: Write>(w: &mut W, r: &TraceRow) -> io::Result<()> {
    let mut f = vec![r.l.to_string(), r.t.to_string()];
    f.extend(r.x.iter().chain(&r.y).map(|v| fmt_f64(*v)));
    f.extend([r.g_value, r.a_norm, r.x_gap, r.y_grad_norm, r.slack, r.tau].map(fmt_f64));
    f.push(r.j.to_string());
    f.push(r.k.to_string());
    f.push(fmt_f64(r.eta));
    writeln!(w, "{}", f.join(","))
}

pub fn write_trace<W: Write>(w: &mut W, trace: &SolveTrace, n: usize, m: usize) -> io::Result<()> {
    write_trace_header(w, n, m)?;
    for r in &trace.rows {
        write_trace_row(w, r)?;
    }
    Ok(())
}

/// `(x, y)` of the last data row of a trace file.
pub fn parse_trace_last_point(text: &str) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut lines = text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty());
    let header: Vec<&str> = lines
        .next()
        .ok_or_else(|| PvfimError::InvalidArgument("trace has no header row".into()))?
        .split(',')
        .collect();
    let last = lines
        .next_back()
        .ok_or_else(|| PvfimError::InvalidArgument("trace has no data rows".into()))?;
    let cells: Vec<&str> = last.split(',').collect();
    if cells.len() != header.len() {
        return Err(PvfimError::InvalidArgument(format!(
            "last trace row has {} fields, header has {}",
            cells.len(),
            header.len()
        )));
    }
    let pick = |prefix: char| -> Result<Vec<f64>> {
        header
            .iter()
            .zip(&cells)
            .filter(|(h, _)| h.starts_with(prefix) && h[1..].chars().all(|c| c.is_ascii_digit()) && h.len() > 1)
            .map(|(h, c)| {
                c.trim()
                    .parse::<f64>()
                    .map_err(|_| PvfimError::InvalidArgument(format!("bad value '{c}' in column {h}")))
            })
            .collect()
    };
    let (x, y) = (pick('x')?, pick('y')?);
    if x.is_empty() || y.is_empty() {
        return Err(PvfimError::InvalidArgument("trace lacks x or y columns".into()));
    }
    Ok((x, y))
}

pub fn write_oracle<W: Write>(w: &mut W, r: &OracleResult) -> io::Result<()> {
    let n = r.x_argmin.len();
    let m = r.y_at_min.len();
    let mut cols: Vec<String> = (0..n).map(|i| format!("x{i}")).collect();
    cols.extend(["f_star", "F_star", "phi_eps"].map(String::from));
    cols.extend((0..m).map(|i| format!("y_argmax{i}")));
    writeln!(w, "{}", cols.join(","))?;
    for p in &r.points {
        let mut f: Vec<String> = p.x.iter().map(|v| fmt_f64(*v)).collect();
        f.extend([p.f_star, p.big_f_star, p.phi_eps].map(fmt_f64));
        f.extend(p.y_argmax.iter().map(|v| fmt_f64(*v)));
        writeln!(w, "{}", f.join(","))?;
    }
    Ok(())
}

pub fn write_constants<W: Write>(w: &mut W, c: &ConstantsReport) -> io::Result<()> {
    writeln!(w, "name,value")?;
    for (k, v) in c.fields() {
        writeln!(w, "{k},{}", fmt_f64(v))?;
    }
    Ok(())
}

pub fn stationarity_columns() -> &'static str {
    "grad_F_x_norm,grad_F_y_norm,lower_residual,upper_residual,lambda1,lambda2,lambda3,is_stationary"
}

pub fn stationarity_row(r: &StationarityReport) -> String {
    let mut f: Vec<String> = [
        r.grad_upper_x_norm,
        r.grad_upper_y_norm,
        r.lower_residual,
        r.upper_residual,
        r.multipliers.lambda1,
        r.multipliers.lambda2,
        r.multipliers.lambda3,
    ]
    .iter()
    .map(|v| fmt_f64(*v))
    .collect();
    f.push(r.is_stationary.to_string());
    f.join(",")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(l: usize, t: usize, x: f64) -> TraceRow {
        TraceRow {
            l,
            t,
            x: vec![x],
            y: vec![1.0, 0.5],
            g_value: -1.0,
            a_norm: 0.0,
            x_gap: 0.0,
            y_grad_norm: 0.0,
            slack: 0.5,
            tau: 0.999,
            j: 1,
            k: 2,
            eta: 0.1,
        }
    }

    #[test]
    fn float_format_is_fixed_width_scientific() {
        assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_f64(-2.0), "-2.0000000000000000e0");
    }

    #[test]
    fn float_format_round_trips() {
        for v in [std::f64::consts::PI, 1e-300, -7.25e12, 0.999f64.powi(17)] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn trace_round_trip_of_last_point() {
        let trace = SolveTrace { rows: vec![row(1, 0, 3.0), row(1, 1, 3.5)] };
        let mut buf = Vec::new();
        write_header(&mut buf, "trace", &[("eps".into(), "0.5".into())]).unwrap();
        write_trace(&mut buf, &trace, 1, 2).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let (x, y) = parse_trace_last_point(&text).unwrap();
        assert_eq!(x, vec![3.5]);
        assert_eq!(y, vec![1.0, 0.5]);
    }

    #[test]
    fn header_names() {
        assert_eq!(
            trace_columns(1, 2).join(","),
            "l,t,x0,y0,y1,G_value,a_norm,x_gap,y_grad_norm,slack,tau,J,K,eta"
        );
    }

    #[test]
    fn empty_trace_rejected() {
        assert!(parse_trace_last_point("# c\nl,t,x0,y0\n").is_err());
    }
}
