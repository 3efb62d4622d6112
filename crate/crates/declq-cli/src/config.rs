//! Problem configuration files.
//!
//! A config is a single JSON object; unknown keys are rejected so typos
//! surface as parse errors instead of silently applied defaults. Matrices
//! are written as row-major nested arrays (note: the gain vector inside the
//! solver is column-major, which only matters for `solver.x0_init`).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use declq::{CostWeights, FeedbackMode, OutputMap, PartitionedSystem, SolverConfig};

use crate::CliError;

pub const SCHEMA_VERSION: &str = "1";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub schema_version: String,
    pub system: SystemConfig,
    pub cost: CostConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_maps: Option<OutputMapsConfig>,
    pub initial_state: Vec<f64>,
    pub solver: SolverSection,
    #[serde(default)]
    pub outputs: OutputsConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    pub n1: usize,
    pub n2: usize,
    pub m1: usize,
    pub m2: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostConfig {
    #[serde(rename = "Q")]
    pub q: Vec<Vec<f64>>,
    #[serde(rename = "R")]
    pub r: Vec<Vec<f64>>,
    /// Defaults to `delta * I` when omitted.
    #[serde(rename = "P_terminal", default, skip_serializing_if = "Option::is_none")]
    pub p_terminal: Option<Vec<Vec<f64>>>,
    #[serde(default = "default_delta")]
    pub delta: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputMapsConfig {
    #[serde(rename = "H1")]
    pub h1: Vec<Vec<f64>>,
    #[serde(rename = "H2")]
    pub h2: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    #[serde(rename = "N")]
    pub horizon: usize,
    #[serde(rename = "I")]
    pub inner_iterations: usize,
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default = "default_inner_tol")]
    pub inner_tol: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0_init: Option<Vec<f64>>,
    #[serde(default = "default_true")]
    pub best_so_far_guard: bool,
    #[serde(default = "default_depth_cap")]
    pub depth_cap: usize,
    /// Full-matrix damping weight replacing `rho * I`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rbar: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputsConfig {
    #[serde(default = "default_out_dir")]
    pub directory: String,
    #[serde(default = "Artifact::all")]
    pub emit: Vec<Artifact>,
}

impl Default for OutputsConfig {
    fn default() -> Self {
        Self { directory: default_out_dir(), emit: Artifact::all() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Artifact {
    Gains,
    Residuals,
    States,
    Report,
}

impl Artifact {
    fn all() -> Vec<Artifact> {
        vec![Artifact::Gains, Artifact::Residuals, Artifact::States, Artifact::Report]
    }
}

fn default_delta() -> f64 {
    1.0
}

fn default_rho() -> f64 {
    1.0
}

fn default_inner_tol() -> f64 {
    1e-9
}

fn default_true() -> bool {
    true
}

fn default_depth_cap() -> usize {
    50
}

fn default_out_dir() -> String {
    "out".into()
}

/// Parses and structurally validates a config document.
pub fn parse_config(text: &str) -> Result<ProblemConfig, CliError> {
    let cfg: ProblemConfig = serde_json::from_str(text)
        .map_err(|e| CliError::validation(format!("config parse: {e}")))?;
    if cfg.schema_version != SCHEMA_VERSION {
        return Err(CliError::validation(format!(
            "unrecognized schema_version {:?}, expected {SCHEMA_VERSION:?}",
            cfg.schema_version
        )));
    }
    cfg.to_problem()?;
    Ok(cfg)
}

/// A fully constructed problem instance plus solver settings.
pub struct Problem {
    pub system: PartitionedSystem,
    pub cost: CostWeights,
    pub hmap: OutputMap,
    pub initial_state: DVector<f64>,
    pub solver: SolverConfig,
    /// Output mode is the default when explicit output maps are configured.
    pub default_mode: FeedbackMode,
}

fn matrix_from_rows(field: &str, rows: &[Vec<f64>]) -> Result<DMatrix<f64>, CliError> {
    if rows.is_empty() {
        return Err(CliError::validation(format!("{field} must not be empty")));
    }
    let ncols = rows[0].len();
    for (i, row) in rows.iter().enumerate() {
        if row.len() != ncols {
            return Err(CliError::validation(format!(
                "{field} row {} has {} columns, expected {ncols}",
                i + 1,
                row.len()
            )));
        }
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

fn expect_shape(
    field: &str,
    m: &DMatrix<f64>,
    rows: usize,
    cols: usize,
) -> Result<(), CliError> {
    if m.nrows() != rows || m.ncols() != cols {
        return Err(CliError::validation(format!(
            "{field} must be {rows}x{cols}, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

impl ProblemConfig {
    /// Builds the typed problem, naming the offending field on error.
    pub fn to_problem(&self) -> Result<Problem, CliError> {
        let s = &self.system;
        let (n, m) = (s.n1 + s.n2, s.m1 + s.m2);
        let a = matrix_from_rows("system.A", &s.a)?;
        expect_shape("system.A", &a, n, n)?;
        let b = matrix_from_rows("system.B", &s.b)?;
        expect_shape("system.B", &b, n, m)?;
        let system = PartitionedSystem::new(a, b, s.n1, s.n2, s.m1, s.m2)
            .map_err(|e| CliError::validation(format!("system: {e}")))?;

        let q = matrix_from_rows("cost.Q", &self.cost.q)?;
        expect_shape("cost.Q", &q, n, n)?;
        let r = matrix_from_rows("cost.R", &self.cost.r)?;
        expect_shape("cost.R", &r, m, m)?;
        let p_terminal = match &self.cost.p_terminal {
            Some(rows) => {
                let p = matrix_from_rows("cost.P_terminal", rows)?;
                expect_shape("cost.P_terminal", &p, n, n)?;
                p
            }
            None => DMatrix::identity(n, n) * self.cost.delta,
        };
        let cost = CostWeights::new(q, r, p_terminal, self.cost.delta)
            .map_err(|e| CliError::validation(format!("cost: {e}")))?;

        let (hmap, default_mode) = match &self.output_maps {
            Some(maps) => {
                let h1 = matrix_from_rows("output_maps.H1", &maps.h1)?;
                let h2 = matrix_from_rows("output_maps.H2", &maps.h2)?;
                if h1.ncols() != s.n1 {
                    return Err(CliError::validation(format!(
                        "output_maps.H1 must have {} columns, got {}",
                        s.n1,
                        h1.ncols()
                    )));
                }
                if h2.ncols() != s.n2 {
                    return Err(CliError::validation(format!(
                        "output_maps.H2 must have {} columns, got {}",
                        s.n2,
                        h2.ncols()
                    )));
                }
                (OutputMap::new(h1, h2), FeedbackMode::Output)
            }
            None => (OutputMap::identity(s.n1, s.n2), FeedbackMode::State),
        };

        if self.initial_state.len() != n {
            return Err(CliError::validation(format!(
                "initial_state must have length {n}, got {}",
                self.initial_state.len()
            )));
        }
        let initial_state = DVector::from_column_slice(&self.initial_state);

        let mut solver = SolverConfig::new(self.solver.horizon, self.solver.inner_iterations);
        solver.rho = self.solver.rho;
        solver.inner_tol = self.solver.inner_tol;
        solver.delta = self.cost.delta;
        solver.best_so_far_guard = self.solver.best_so_far_guard;
        solver.depth_cap = self.solver.depth_cap;
        solver.feedback_mode = default_mode;
        let d = s.m1 * hmap.p1() + s.m2 * hmap.p2();
        if let Some(init) = &self.solver.x0_init {
            if init.len() != d {
                return Err(CliError::validation(format!(
                    "solver.x0_init must have length {d}, got {}",
                    init.len()
                )));
            }
            solver.x0_init = Some(DVector::from_column_slice(init));
        }
        if let Some(rows) = &self.solver.rbar {
            let rbar = matrix_from_rows("solver.rbar", rows)?;
            expect_shape("solver.rbar", &rbar, d, d)?;
            solver.rbar_override = Some(rbar);
        }
        if self.solver.rho <= 0.0 {
            return Err(CliError::validation(format!(
                "solver.rho must be positive, got {}",
                self.solver.rho
            )));
        }
        if self.solver.inner_iterations == 0 {
            return Err(CliError::validation("solver.I must be >= 1"));
        }

        Ok(Problem { system, cost, hmap, initial_state, solver, default_mode })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_config() -> serde_json::Value {
        serde_json::json!({
            "schema_version": "1",
            "system": {
                "A": [[1.0, 0.0], [0.0, 1.0]],
                "B": [[1.0, 0.0], [0.0, 1.0]],
                "n1": 1, "n2": 1, "m1": 1, "m2": 1
            },
            "cost": {
                "Q": [[1.0, 0.0], [0.0, 1.0]],
                "R": [[1.0, 0.0], [0.0, 1.0]]
            },
            "initial_state": [1.0, 2.0],
            "solver": { "N": 5, "I": 10 }
        })
    }

    #[test]
    fn defaults_are_applied() {
        let cfg = parse_config(&minimal_config().to_string()).unwrap();
        assert_eq!(cfg.solver.rho, 1.0);
        assert_eq!(cfg.solver.inner_tol, 1e-9);
        assert_eq!(cfg.cost.delta, 1.0);
        assert!(cfg.solver.best_so_far_guard);
        assert_eq!(cfg.solver.depth_cap, 50);
        assert_eq!(cfg.outputs.directory, "out");
        assert_eq!(cfg.outputs.emit.len(), 4);
        let problem = cfg.to_problem().unwrap();
        // P_terminal defaults to delta * I
        assert_eq!(problem.cost.p_terminal, DMatrix::identity(2, 2));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let mut v = minimal_config();
        v["solver"]["typo_field"] = serde_json::json!(1.0);
        let err = parse_config(&v.to_string()).unwrap_err();
        assert!(err.to_string().contains("typo_field"));
    }

    #[test]
    fn wrong_matrix_shape_names_the_field() {
        let mut v = minimal_config();
        v["system"]["A"] = serde_json::json!([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]);
        let err = parse_config(&v.to_string()).unwrap_err();
        assert!(err.to_string().contains("system.A"), "got: {err}");
    }

    #[test]
    fn ragged_matrix_names_the_row() {
        let mut v = minimal_config();
        v["cost"]["Q"] = serde_json::json!([[1.0, 0.0], [0.0]]);
        let err = parse_config(&v.to_string()).unwrap_err();
        assert!(err.to_string().contains("cost.Q row 2"), "got: {err}");
    }

    #[test]
    fn unrecognized_schema_version_fails() {
        let mut v = minimal_config();
        v["schema_version"] = serde_json::json!("99");
        assert!(parse_config(&v.to_string()).is_err());
    }

    #[test]
    fn output_maps_switch_default_mode() {
        let mut v = minimal_config();
        v["output_maps"] = serde_json::json!({"H1": [[1.0]], "H2": [[1.0]]});
        let cfg = parse_config(&v.to_string()).unwrap();
        let problem = cfg.to_problem().unwrap();
        assert_eq!(problem.default_mode, FeedbackMode::Output);
    }

    #[test]
    fn config_echo_round_trips() {
        let cfg = parse_config(&minimal_config().to_string()).unwrap();
        let echoed = serde_json::to_string(&cfg).unwrap();
        let back = parse_config(&echoed).unwrap();
        assert_eq!(back.system.a, cfg.system.a);
        assert_eq!(back.solver.horizon, cfg.solver.horizon);
        assert_eq!(back.outputs.emit, cfg.outputs.emit);
    }
}
