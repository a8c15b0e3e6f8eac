//! Scenario configuration: one JSON document per run.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use yamabe_core::geometry::{build_slab_grid, build_torus_grid, BoundaryField, ChartGrid, ConformalMetric, ScalarField};
use yamabe_core::iteration::SolverOptions;
use yamabe_core::operator::DIRICHLET_CG_TOL;
use yamabe_core::subsuper::ConstantRecipeChoice;
use yamabe_core::verify::{boundary_factor_exponent, BoundaryFactorInput};

use crate::expr::{Expr, ExprError};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("invalid config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("{field}: {source}")]
    Expression { field: String, source: ExprError },
    #[error("{0}")]
    Invalid(String),
    #[error("{context}: {source}")]
    Build {
        context: String,
        source: yamabe_core::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub grid: GridConfig,
    #[serde(default)]
    pub metric: MetricConfig,
    pub problem: ProblemConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n: usize,
    pub shape: Vec<usize>,
    pub lengths: Vec<f64>,
    /// Fully periodic grid without boundary.
    #[serde(default)]
    pub closed: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MetricConfig {
    #[default]
    Flat,
    /// `psi^{p-2}` times the flat metric.
    Conformal { factor: String },
    /// Flat metric with a prescribed background scalar curvature.
    Potential { potential: String },
    ConformalPotential { factor: String, potential: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Classify,
    SolveConstant,
    SolvePrescribed,
    MixedSignPipeline,
    Mms,
    Obstruction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BoundaryConfig {
    Constant { value: f64 },
    Expression { expr: String },
    /// Boundary factor `psi` of a power-type boundary metric (n >= 4).
    FactorPower { expr: String },
    /// Log factor `f` of `e^{2f} h` (n = 3).
    LogFactor { expr: String },
}

impl Default for BoundaryConfig {
    fn default() -> Self {
        BoundaryConfig::Constant { value: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub mode: Mode,
    #[serde(default)]
    pub boundary: BoundaryConfig,
    /// Prescribed curvature.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
    /// Collar width for the mixed-sign construction.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub recipe: ConstantRecipeChoice,
    /// Amplitude of the manufactured solution.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<f64>,
    /// Conformal factors paired against their curvature on a closed grid.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub factors: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol_residual: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_sign: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cg_tol: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<String>,
    #[serde(default)]
    pub dump_fields: bool,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub tol_residual: Option<f64>,
    pub max_steps: Option<usize>,
    pub eps_sign: Option<f64>,
    pub dump_fields: bool,
}

impl ScenarioConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.display().to_string(),
            source,
        })?;
        let config: ScenarioConfig = serde_json::from_str(&text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if o.tol_residual.is_some() {
            self.solver.tol_residual = o.tol_residual;
        }
        if o.max_steps.is_some() {
            self.solver.max_steps = o.max_steps;
        }
        if o.eps_sign.is_some() {
            self.solver.eps_sign = o.eps_sign;
        }
        self.output.dump_fields |= o.dump_fields;
    }

    /// Checks mode-required fields and that every expression parses.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let n = self.grid.n;
        let p = &self.problem;
        let needs_target = matches!(p.mode, Mode::SolvePrescribed | Mode::MixedSignPipeline);
        if needs_target && p.target.is_none() {
            return Err(ConfigError::Invalid(format!("mode {:?} needs problem.target", p.mode)));
        }
        if p.mode == Mode::Obstruction {
            if !self.grid.closed {
                return Err(ConfigError::Invalid("mode obstruction needs grid.closed = true".into()));
            }
            if p.factors.is_empty() {
                return Err(ConfigError::Invalid("mode obstruction needs at least one entry in problem.factors".into()));
            }
        } else if self.grid.closed {
            return Err(ConfigError::Invalid(format!("mode {:?} needs a grid with boundary", p.mode)));
        }
        if p.mode == Mode::Mms {
            if p.amplitude.is_none() {
                return Err(ConfigError::Invalid("mode mms needs problem.amplitude".into()));
            }
            if self.metric != MetricConfig::Flat {
                return Err(ConfigError::Invalid("mode mms runs on the flat metric".into()));
            }
        }
        if let Some(g) = p.gamma {
            if !(g > 0.0 && g.is_finite()) {
                return Err(ConfigError::Invalid(format!("problem.gamma must be positive, found {g}")));
            }
        }
        let s = &self.solver;
        for (name, v) in [("tol_residual", s.tol_residual), ("eps_sign", s.eps_sign), ("cg_tol", s.cg_tol)] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(ConfigError::Invalid(format!("solver.{name} must be positive, found {v}")));
                }
            }
        }
        if s.max_steps == Some(0) {
            return Err(ConfigError::Invalid("solver.max_steps must be positive".into()));
        }
        for (field, src) in self.expressions() {
            parse(&field, &src, n)?;
        }
        Ok(())
    }

    fn expressions(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        match &self.metric {
            MetricConfig::Flat => {}
            MetricConfig::Conformal { factor } => out.push(("metric.factor".into(), factor.clone())),
            MetricConfig::Potential { potential } => out.push(("metric.potential".into(), potential.clone())),
            MetricConfig::ConformalPotential { factor, potential } => {
                out.push(("metric.factor".into(), factor.clone()));
                out.push(("metric.potential".into(), potential.clone()));
            }
        }
        match &self.problem.boundary {
            BoundaryConfig::Constant { .. } => {}
            BoundaryConfig::Expression { expr } | BoundaryConfig::FactorPower { expr } | BoundaryConfig::LogFactor { expr } => {
                out.push(("problem.boundary.expr".into(), expr.clone()))
            }
        }
        if let Some(t) = &self.problem.target {
            out.push(("problem.target".into(), t.clone()));
        }
        for (i, f) in self.problem.factors.iter().enumerate() {
            out.push((format!("problem.factors[{i}]"), f.clone()));
        }
        out
    }

    pub fn build_grid(&self) -> Result<Arc<ChartGrid>, ConfigError> {
        let g = &self.grid;
        let built = if g.closed {
            build_torus_grid(g.n, &g.shape, &g.lengths)
        } else {
            build_slab_grid(g.n, &g.shape, &g.lengths)
        };
        built.map_err(|source| ConfigError::Build {
            context: "grid".into(),
            source,
        })
    }

    pub fn build_metric(&self, grid: &Arc<ChartGrid>) -> Result<ConformalMetric, ConfigError> {
        let built = match &self.metric {
            MetricConfig::Flat => ConformalMetric::flat(grid),
            MetricConfig::Conformal { factor } => ConformalMetric::conformally_flat(field(grid, "metric.factor", factor)?),
            MetricConfig::Potential { potential } => {
                ConformalMetric::flat_with_potential(field(grid, "metric.potential", potential)?)
            }
            MetricConfig::ConformalPotential { factor, potential } => ConformalMetric::conformal_with_potential(
                field(grid, "metric.factor", factor)?,
                field(grid, "metric.potential", potential)?,
            ),
        };
        built.map_err(|source| ConfigError::Build {
            context: "metric".into(),
            source,
        })
    }

    pub fn build_boundary(&self, grid: &Arc<ChartGrid>) -> Result<BoundaryField, ConfigError> {
        let n = grid.dim();
        let wrap = |source| ConfigError::Build {
            context: "problem.boundary".into(),
            source,
        };
        let on_boundary = |src: &str| -> Result<BoundaryField, ConfigError> {
            let e = parse("problem.boundary.expr", src, n)?;
            BoundaryField::from_fn(grid, |x| e.eval(x)).map_err(wrap)
        };
        let phi = match &self.problem.boundary {
            BoundaryConfig::Constant { value } => BoundaryField::constant(grid, *value).map_err(wrap)?,
            BoundaryConfig::Expression { expr } => on_boundary(expr)?,
            BoundaryConfig::FactorPower { expr } => {
                boundary_factor_exponent(n, &BoundaryFactorInput::Factor(on_boundary(expr)?)).map_err(wrap)?
            }
            BoundaryConfig::LogFactor { expr } => {
                boundary_factor_exponent(n, &BoundaryFactorInput::LogFactor(on_boundary(expr)?)).map_err(wrap)?
            }
        };
        if !(phi.min() > 0.0) {
            return Err(ConfigError::Invalid(format!("boundary data must be positive, found minimum {}", phi.min())));
        }
        Ok(phi)
    }

    pub fn build_target(&self, grid: &Arc<ChartGrid>) -> Result<ScalarField, ConfigError> {
        let src = self
            .problem
            .target
            .as_deref()
            .ok_or_else(|| ConfigError::Invalid("problem.target is required".into()))?;
        field(grid, "problem.target", src)
    }

    pub fn build_factors(&self, grid: &Arc<ChartGrid>) -> Result<Vec<ScalarField>, ConfigError> {
        self.problem
            .factors
            .iter()
            .enumerate()
            .map(|(i, src)| field(grid, &format!("problem.factors[{i}]"), src))
            .collect()
    }

    pub fn solver_options(&self) -> SolverOptions {
        let d = SolverOptions::default();
        SolverOptions {
            max_steps: self.solver.max_steps.unwrap_or(d.max_steps),
            tol_residual: self.solver.tol_residual,
            cg_tol: self.solver.cg_tol.unwrap_or(DIRICHLET_CG_TOL),
        }
    }
}

fn parse(field: &str, src: &str, n: usize) -> Result<Expr, ConfigError> {
    Expr::parse(src, n).map_err(|source| ConfigError::Expression {
        field: field.to_string(),
        source,
    })
}

/// Evaluates an expression at every node; non-finite values are rejected.
pub fn field(grid: &Arc<ChartGrid>, name: &str, src: &str) -> Result<ScalarField, ConfigError> {
    let e = parse(name, src, grid.dim())?;
    ScalarField::from_fn(grid, |x| e.eval(x)).map_err(|source| ConfigError::Build {
        context: name.to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> &'static str {
        r#"{
            "name": "t",
            "grid": {"n": 3, "shape": [4, 4, 5], "lengths": [1, 1, 1]},
            "metric": {"kind": "potential", "potential": "1 + x"},
            "problem": {"mode": "solve-prescribed", "target": "-1 - z",
                        "boundary": {"kind": "expression", "expr": "1 + 0.1*y"}},
            "solver": {"max_steps": 50}
        }"#
    }

    #[test]
    fn parses_and_builds() {
        let c: ScenarioConfig = serde_json::from_str(sample()).unwrap();
        c.validate().unwrap();
        assert_eq!(c.problem.mode, Mode::SolvePrescribed);
        assert_eq!(c.solver_options().max_steps, 50);
        let g = c.build_grid().unwrap();
        let m = c.build_metric(&g).unwrap();
        assert!(m.potential().is_some());
        let phi = c.build_boundary(&g).unwrap();
        assert!((phi.max() - 1.075).abs() < 1e-12);
        let s = c.build_target(&g).unwrap();
        assert_eq!(s.min(), -2.0);
    }

    #[test]
    fn round_trips_through_json() {
        let c: ScenarioConfig = serde_json::from_str(sample()).unwrap();
        let back: ScenarioConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(c, back);
    }

    #[test]
    fn rejects_missing_and_unknown_fields() {
        let no_target = sample().replace(r#""target": "-1 - z","#, "");
        let c: ScenarioConfig = serde_json::from_str(&no_target).unwrap();
        assert!(c.validate().is_err());
        let unknown = sample().replace(r#""name": "t","#, r#""name": "t", "colour": 1,"#);
        assert!(serde_json::from_str::<ScenarioConfig>(&unknown).is_err());
        let bad_expr = sample().replace("1 + x", "1 + q");
        let c: ScenarioConfig = serde_json::from_str(&bad_expr).unwrap();
        assert!(matches!(c.validate(), Err(ConfigError::Expression { .. })));
        let closed = sample().replace(r#""lengths": [1, 1, 1]"#, r#""lengths": [1, 1, 1], "closed": true"#);
        let c: ScenarioConfig = serde_json::from_str(&closed).unwrap();
        assert!(c.validate().is_err());
    }

    #[test]
    fn overrides_take_precedence() {
        let mut c: ScenarioConfig = serde_json::from_str(sample()).unwrap();
        c.apply(&Overrides {
            tol_residual: Some(1e-7),
            max_steps: Some(9),
            eps_sign: None,
            dump_fields: true,
        });
        assert_eq!(c.solver.tol_residual, Some(1e-7));
        assert_eq!(c.solver.max_steps, Some(9));
        assert!(c.output.dump_fields);
    }

    #[test]
    fn log_factor_needs_dimension_three() {
        let src = sample().replace(r#"{"kind": "expression", "expr": "1 + 0.1*y"}"#, r#"{"kind": "log_factor", "expr": "0"}"#);
        let c: ScenarioConfig = serde_json::from_str(&src).unwrap();
        let g = c.build_grid().unwrap();
        assert!(c.build_boundary(&g).unwrap().values().iter().all(|&v| v == 1.0));
        let src4 = src.replace(r#""n": 3, "shape": [4, 4, 5], "lengths": [1, 1, 1]"#, r#""n": 4, "shape": [4, 4, 4, 5], "lengths": [1, 1, 1, 1]"#);
        let c4: ScenarioConfig = serde_json::from_str(&src4).unwrap();
        let g4 = c4.build_grid().unwrap();
        assert!(c4.build_boundary(&g4).is_err());
    }
}
