use std::fmt;

use super::{Method, MethodResult};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scope {
    All,
    Outliers,
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scope::All => "all",
            Scope::Outliers => "outliers",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub method: String,
    pub param_kind: String,
    pub layer_bin: String,
    pub scope: Scope,
    /// Unscaled mean squared activation error.
    pub mse: f64,
}

/// Activation errors keyed by method, parameter kind, layer bin and scope.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ErrorReport {
    pub rows: Vec<ReportRow>,
}

impl ErrorReport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, row: ReportRow) -> Result<()> {
        if row.mse.is_nan() || row.mse < 0.0 {
            return Err(Error::NonFinite("report mse"));
        }
        self.rows.push(row);
        Ok(())
    }

    /// Adds an `all` and an `outliers` row per method result.
    pub fn extend_results(&mut self, results: &[MethodResult], param_kind: &str, layer_bin: &str) -> Result<()> {
        for r in results {
            for (scope, mse) in [(Scope::All, r.mse_all), (Scope::Outliers, r.mse_outliers)] {
                self.push(ReportRow {
                    method: r.method.label().to_string(),
                    param_kind: param_kind.to_string(),
                    layer_bin: layer_bin.to_string(),
                    scope,
                    mse,
                })?;
            }
        }
        Ok(())
    }

    /// Mean error of `method` over the rows with `scope`.
    pub fn mean(&self, method: Method, scope: Scope) -> Option<f64> {
        let vals: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.method == method.label() && r.scope == scope)
            .map(|r| r.mse)
            .collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }

    /// `method,param_kind,layer_bin,scope,mse` with a header row.
    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(["method", "param_kind", "layer_bin", "scope", "mse"])
            .expect("in-memory write");
        for r in &self.rows {
            w.write_record([
                r.method.as_str(),
                r.param_kind.as_str(),
                r.layer_bin.as_str(),
                &r.scope.to_string(),
                &format!("{:e}", r.mse),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("fields are UTF-8")
    }

    /// Aligned text table with errors shown ×10⁻².
    pub fn to_table(&self) -> String {
        let header = ["method", "param_kind", "layer_bin", "scope", "mse (x1e-2)"];
        let cells: Vec<[String; 5]> = self
            .rows
            .iter()
            .map(|r| {
                [
                    r.method.clone(),
                    r.param_kind.clone(),
                    r.layer_bin.clone(),
                    r.scope.to_string(),
                    format!("{:.4}", r.mse * 100.0),
                ]
            })
            .collect();
        let mut widths = header.map(str::len);
        for row in &cells {
            for (w, c) in widths.iter_mut().zip(row) {
                *w = (*w).max(c.chars().count());
            }
        }
        let mut out = String::new();
        let line = |out: &mut String, row: &[&str]| {
            let parts: Vec<String> = row
                .iter()
                .zip(widths)
                .enumerate()
                .map(|(i, (c, w))| if i == 4 { format!("{c:>w$}") } else { format!("{c:<w$}") })
                .collect();
            out.push_str(parts.join("  ").trim_end());
            out.push('\n');
        };
        line(&mut out, &header);
        for row in &cells {
            line(&mut out, &row.iter().map(String::as_str).collect::<Vec<_>>());
        }
        out
    }
}
