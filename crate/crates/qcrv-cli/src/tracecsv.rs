//! Continuation trace persistence: one CSV row per schedule point, floats
//! printed with 17 significant digits so parsing them back is lossless.
//! Bubble columns stay empty on records without a bubble summary.

use std::path::Path;

use qcrv::continuation::ContinuationTrace;

use crate::error::{CliError, Result};

/// Round-trip-safe decimal for f64 (17 significant digits).
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn trace_header(dimension: u32) -> String {
    let mut cols: Vec<String> = [
        "lambda",
        "beta",
        "alpha",
        "lambda_alpha",
        "beta_over_loginvlambda",
        "el_residual",
        "iterations",
        "converged",
        "r_sel",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    for a in 1..=dimension {
        cols.push(format!("center_{a}"));
    }
    cols.push("bubble_s".to_string());
    for a in 1..=dimension {
        cols.push(format!("bubble_z0_{a}"));
    }
    cols.push("fit_linf".to_string());
    cols.join(",")
}

pub fn write_trace_csv(path: &Path, trace: &ContinuationTrace, dimension: u32) -> Result<()> {
    let mut out = String::new();
    out.push_str(&trace_header(dimension));
    out.push('\n');
    for rec in &trace.records {
        let mut cols: Vec<String> = vec![
            fmt_f64(rec.lambda),
            fmt_f64(rec.beta),
            fmt_f64(rec.alpha),
            fmt_f64(rec.lambda_alpha),
            fmt_f64(rec.beta / (1.0 / rec.lambda).ln()),
            fmt_f64(rec.el_residual),
            rec.iterations.to_string(),
            rec.converged.to_string(),
        ];
        match &rec.bubble {
            Some(b) => {
                cols.push(fmt_f64(b.r_sel));
                for a in 0..dimension as usize {
                    cols.push(fmt_f64(b.center[a]));
                }
                cols.push(fmt_f64(b.s));
                for a in 0..dimension as usize {
                    cols.push(fmt_f64(b.z0[a]));
                }
                cols.push(fmt_f64(b.fit_linf));
            }
            None => {
                // r_sel + center + s + z0 + linf
                for _ in 0..(3 + 2 * dimension as usize) {
                    cols.push(String::new());
                }
            }
        }
        out.push_str(&cols.join(","));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| CliError::io(path, e))
}

/// The trace columns export needs back; bubble cells stay optional.
#[derive(Clone, Debug)]
pub struct TraceRow {
    pub lambda: f64,
    pub beta: f64,
    pub alpha: f64,
    pub lambda_alpha: f64,
    pub converged: bool,
}

pub fn read_trace_csv(path: &Path) -> Result<Vec<TraceRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| CliError::State(format!("{}: empty trace", path.display())))?;
    let names: Vec<&str> = header.split(',').collect();
    let col = |name: &str| -> Result<usize> {
        names.iter().position(|&n| n == name).ok_or_else(|| {
            CliError::State(format!("{}: trace lacks column `{name}`", path.display()))
        })
    };
    let (ci_lambda, ci_beta, ci_alpha, ci_la, ci_conv) = (
        col("lambda")?,
        col("beta")?,
        col("alpha")?,
        col("lambda_alpha")?,
        col("converged")?,
    );
    let mut rows = Vec::new();
    for (idx, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        let bad = |what: &str| {
            CliError::State(format!("{}: row {} has a bad {what}", path.display(), idx + 2))
        };
        let getf = |ci: usize, what: &str| -> Result<f64> {
            cells
                .get(ci)
                .and_then(|c| c.parse::<f64>().ok())
                .ok_or_else(|| bad(what))
        };
        rows.push(TraceRow {
            lambda: getf(ci_lambda, "lambda")?,
            beta: getf(ci_beta, "beta")?,
            alpha: getf(ci_alpha, "alpha")?,
            lambda_alpha: getf(ci_la, "lambda_alpha")?,
            converged: cells
                .get(ci_conv)
                .and_then(|c| c.parse::<bool>().ok())
                .ok_or_else(|| bad("converged"))?,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use qcrv::continuation::{BubbleSummary, TraceRecord};

    fn sample_trace() -> ContinuationTrace {
        ContinuationTrace {
            records: vec![
                TraceRecord {
                    lambda: 0.3,
                    beta: 1.0 / 3.0,
                    alpha: 2.718281828459045,
                    lambda_alpha: 0.3 * 2.718281828459045,
                    el_residual: 9.87e-9,
                    iterations: 123,
                    converged: true,
                    constraint_pass: true,
                    bubble: Some(BubbleSummary {
                        r_sel: 0.015_625_1,
                        center: vec![0.25, 0.75],
                        s: 1.414,
                        z0: vec![-0.01, 0.02],
                        fit_linf: 0.003,
                    }),
                },
                TraceRecord {
                    lambda: 0.15,
                    beta: 0.9,
                    alpha: 5.0,
                    lambda_alpha: 0.75,
                    el_residual: 2e-5,
                    iterations: 20_000,
                    converged: false,
                    constraint_pass: true,
                    bubble: None,
                },
            ],
        }
    }

    #[test]
    fn header_matches_the_schema() {
        assert_eq!(
            trace_header(2),
            "lambda,beta,alpha,lambda_alpha,beta_over_loginvlambda,el_residual,\
iterations,converged,r_sel,center_1,center_2,bubble_s,bubble_z0_1,\
bubble_z0_2,fit_linf"
        );
        assert!(trace_header(4).contains("center_4"));
        assert!(trace_header(4).contains("bubble_z0_4"));
    }

    #[test]
    fn written_floats_parse_back_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.csv");
        let trace = sample_trace();
        write_trace_csv(&path, &trace, 2).unwrap();

        let rows = read_trace_csv(&path).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].lambda.to_bits(), (0.3f64).to_bits());
        assert_eq!(rows[0].beta.to_bits(), (1.0f64 / 3.0).to_bits());
        assert_eq!(rows[0].alpha.to_bits(), (2.718281828459045f64).to_bits());
        assert!(rows[0].converged);
        assert!(!rows[1].converged);

        // bubble cells: present on row 1, empty on row 2
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0].split(',').count(), lines[1].split(',').count());
        assert!(lines[2].ends_with(",,,,,,,"), "{}", lines[2]);
    }

    #[test]
    fn missing_columns_are_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.csv");
        std::fs::write(&path, "lambda,beta\n1.0,2.0\n").unwrap();
        let err = read_trace_csv(&path).unwrap_err().to_string();
        assert!(err.contains("lacks column"), "{err}");
    }
}
