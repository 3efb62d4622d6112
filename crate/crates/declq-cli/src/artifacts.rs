//! CSV/JSON artifact emission.
//!
//! Every float is serialized with 17 significant digits so a reparse
//! recovers the exact f64. Files are written to a temporary sibling and
//! renamed into place, so a crash never leaves a half-written artifact.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde_json::Value;

use declq::{CentralizedSolution, ComparisonReport, SolveReport};

use crate::config::{Artifact, ProblemConfig};
use crate::CliError;

/// 17 significant digits: exact f64 round trip.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)
            .map_err(|e| CliError::io(format!("create {}: {e}", tmp.display())))?;
        f.write_all(bytes)
            .map_err(|e| CliError::io(format!("write {}: {e}", tmp.display())))?;
        f.sync_all()
            .map_err(|e| CliError::io(format!("sync {}: {e}", tmp.display())))?;
    }
    fs::rename(&tmp, path)
        .map_err(|e| CliError::io(format!("rename to {}: {e}", path.display())))
}

/// Serializes a JSON value with all floats in 17-significant-digit form.
/// Object keys come out in `serde_json`'s default sorted order, so the byte
/// stream is deterministic.
pub fn to_json_bytes(value: &Value) -> Vec<u8> {
    let mut out = String::new();
    render(value, 0, &mut out);
    out.push('\n');
    out.into_bytes()
}

fn render(value: &Value, indent: usize, out: &mut String) {
    match value {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if let Some(f) = n.as_f64().filter(|_| !n.is_i64() && !n.is_u64()) {
                out.push_str(&fmt_f64(f));
            } else {
                out.push_str(&n.to_string());
            }
        }
        Value::String(s) => out.push_str(&Value::String(s.clone()).to_string()),
        Value::Array(items) => {
            if items.is_empty() {
                out.push_str("[]");
                return;
            }
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                newline(indent + 1, out);
                render(item, indent + 1, out);
            }
            newline(indent, out);
            out.push(']');
        }
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            out.push('{');
            for (i, (key, item)) in map.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                newline(indent + 1, out);
                out.push_str(&Value::String(key.clone()).to_string());
                out.push_str(": ");
                render(item, indent + 1, out);
            }
            newline(indent, out);
            out.push('}');
        }
    }
}

fn newline(indent: usize, out: &mut String) {
    out.push('\n');
    for _ in 0..indent {
        out.push_str("  ");
    }
}

/// Column-major header labels `prefix_{row}{col}` for one gain block.
fn gain_labels(prefix: &str, rows: usize, cols: usize, out: &mut Vec<String>) {
    for c in 1..=cols {
        for r in 1..=rows {
            out.push(format!("{prefix}_{r}{c}"));
        }
    }
}

fn push_matrix_column_major(m: &DMatrix<f64>, fields: &mut Vec<String>) {
    for v in m.iter() {
        // nalgebra stores column-major, so iteration order matches the header
        fields.push(fmt_f64(*v));
    }
}

pub struct ArtifactWriter {
    dir: PathBuf,
    emit: Vec<Artifact>,
    /// Paths written so far, for reporting.
    pub written: Vec<PathBuf>,
}

impl ArtifactWriter {
    pub fn new(dir: &Path, emit: &[Artifact]) -> Result<Self, CliError> {
        fs::create_dir_all(dir)
            .map_err(|e| CliError::io(format!("create {}: {e}", dir.display())))?;
        Ok(Self { dir: dir.to_path_buf(), emit: emit.to_vec(), written: Vec::new() })
    }

    fn enabled(&self, artifact: Artifact) -> bool {
        self.emit.contains(&artifact)
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.dir.join(name);
        write_atomic(&path, bytes)?;
        self.written.push(path);
        Ok(())
    }

    /// gains.csv, residuals.csv, states.csv, report.json for a solve run.
    pub fn emit_solve(
        &mut self,
        report: &SolveReport,
        config: &ProblemConfig,
    ) -> Result<(), CliError> {
        if self.enabled(Artifact::Gains) {
            let first = &report.gains[0];
            let mut header = vec!["k".to_string()];
            gain_labels("K1", first.k1.nrows(), first.k1.ncols(), &mut header);
            gain_labels("K2", first.k2.nrows(), first.k2.ncols(), &mut header);
            let mut csv = header.join(",");
            csv.push('\n');
            for (k, gain) in report.gains.iter().enumerate() {
                let mut fields = vec![k.to_string()];
                push_matrix_column_major(&gain.k1, &mut fields);
                push_matrix_column_major(&gain.k2, &mut fields);
                csv.push_str(&fields.join(","));
                csv.push('\n');
            }
            self.write("gains.csv", csv.as_bytes())?;
        }

        if self.enabled(Artifact::Residuals) {
            let mut csv = String::from("k,residual\n");
            for (k, e) in report.residuals.iter().enumerate() {
                csv.push_str(&format!("{k},{}\n", fmt_f64(*e)));
            }
            self.write("residuals.csv", csv.as_bytes())?;
        }

        if self.enabled(Artifact::States) {
            let n = report.states[0].len();
            let mut csv = String::from("k");
            for i in 1..=n {
                csv.push_str(&format!(",x_{i}"));
            }
            csv.push('\n');
            for (k, state) in report.states.iter().enumerate() {
                let mut fields = vec![k.to_string()];
                fields.extend(state.iter().map(|v| fmt_f64(*v)));
                csv.push_str(&fields.join(","));
                csv.push('\n');
            }
            self.write("states.csv", csv.as_bytes())?;
        }

        if self.enabled(Artifact::Report) {
            let max_residual = report.residuals.iter().cloned().fold(0.0f64, f64::max);
            let json = serde_json::json!({
                "cost": report.cost,
                "max_residual": max_residual,
                "iterations_used": report.iterations_used,
                "warnings": report.warnings,
                "config": serde_json::to_value(config)
                    .map_err(|e| CliError::io(format!("serialize config echo: {e}")))?,
            });
            self.write("report.json", &to_json_bytes(&json))?;
        }
        Ok(())
    }

    /// Centralized artifacts in the same formats: gains.csv (full matrix,
    /// column-major), states.csv under the centralized gains, report.json.
    pub fn emit_baseline(
        &mut self,
        solution: &CentralizedSolution,
        states: &[nalgebra::DVector<f64>],
        config: &ProblemConfig,
    ) -> Result<(), CliError> {
        if self.enabled(Artifact::Gains) {
            let first = &solution.gains[0];
            let mut header = vec!["k".to_string()];
            gain_labels("K", first.nrows(), first.ncols(), &mut header);
            let mut csv = header.join(",");
            csv.push('\n');
            for (k, gain) in solution.gains.iter().enumerate() {
                let mut fields = vec![k.to_string()];
                push_matrix_column_major(gain, &mut fields);
                csv.push_str(&fields.join(","));
                csv.push('\n');
            }
            self.write("gains.csv", csv.as_bytes())?;
        }

        if self.enabled(Artifact::States) {
            let n = states[0].len();
            let mut csv = String::from("k");
            for i in 1..=n {
                csv.push_str(&format!(",x_{i}"));
            }
            csv.push('\n');
            for (k, state) in states.iter().enumerate() {
                let mut fields = vec![k.to_string()];
                fields.extend(state.iter().map(|v| fmt_f64(*v)));
                csv.push_str(&fields.join(","));
                csv.push('\n');
            }
            self.write("states.csv", csv.as_bytes())?;
        }

        if self.enabled(Artifact::Report) {
            let json = serde_json::json!({
                "cost": solution.cost,
                "config": serde_json::to_value(config)
                    .map_err(|e| CliError::io(format!("serialize config echo: {e}")))?,
            });
            self.write("report.json", &to_json_bytes(&json))?;
        }
        Ok(())
    }

    /// comparison.json with the cost gap and per-step gain distances.
    pub fn emit_comparison(
        &mut self,
        comparison: &ComparisonReport,
        dec_cost: f64,
        cen_cost: f64,
    ) -> Result<(), CliError> {
        let max_gain_distance =
            comparison.gain_distances.iter().cloned().fold(0.0f64, f64::max);
        let json = serde_json::json!({
            "cost_decentralized": dec_cost,
            "cost_centralized": cen_cost,
            "cost_gap": comparison.cost_gap,
            "gain_distances": comparison.gain_distances,
            "max_gain_distance": max_gain_distance,
            "final_gain_distance": comparison.gain_distances.last().copied().unwrap_or(0.0),
            "max_residual": comparison.max_residual,
            "mean_residual": comparison.mean_residual,
        });
        self.write("comparison.json", &to_json_bytes(&json))
    }
}
