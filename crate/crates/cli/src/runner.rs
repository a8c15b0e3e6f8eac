//! Scenario execution: classify, construct, iterate, verify.

use std::sync::Arc;
use std::time::Instant;

use yamabe_core::geometry::{build_slab_grid, BoundaryField, ChartGrid, ConformalMetric, ScalarField};
use yamabe_core::iteration::{iterate, iterate_from, residual, IterationSettings, Target};
use yamabe_core::spectral::{classify, default_epsilon_sign, Classification};
use yamabe_core::subsuper::{
    build_constant_case, build_prescribed_case, choose_shift_a, mixed_sign_pipeline, solve_prescribed, SubSuperPair,
};
use yamabe_core::verify::{
    closed_torus_obstruction_check, curvature_report, manufactured_solution_case, scalar_curvature_of_conformal_solution,
};

use crate::config::{ConfigError, Mode, ScenarioConfig};
use crate::report::{EigenSummary, MmsLevel, MmsReport, ObstructionEntry, PairSummary, RunReport, Status, TraceSummary};

/// Smallest observed convergence order accepted by the manufactured-solution check.
pub const REQUIRED_ORDER: f64 = 1.8;

#[derive(Debug)]
enum Failure {
    Config(String),
    Core(yamabe_core::Error),
    Verification(Vec<String>),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<yamabe_core::Error> for Failure {
    fn from(e: yamabe_core::Error) -> Self {
        Failure::Core(e)
    }
}

/// Report plus the fields a dump would write.
pub struct RunOutput {
    pub report: RunReport,
    pub fields: Vec<(String, ScalarField)>,
}

struct Ctx<'a> {
    config: &'a ScenarioConfig,
    report: RunReport,
    fields: Vec<(String, ScalarField)>,
    failed: Vec<String>,
}

impl Ctx<'_> {
    fn timed<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let t = Instant::now();
        let out = f();
        let dt = t.elapsed().as_secs_f64();
        *self.report.timings.stages.entry(stage.to_string()).or_insert(0.0) += dt;
        out
    }

    fn check(&mut self, ok: bool, what: impl Into<String>) {
        if !ok {
            self.failed.push(what.into());
        }
    }

    fn keep(&mut self, name: &str, field: &ScalarField) {
        self.fields.push((name.to_string(), field.clone()));
    }

    fn classify(&mut self, metric: &ConformalMetric) -> Result<Classification, Failure> {
        let eps = self.config.solver.eps_sign.unwrap_or_else(|| default_epsilon_sign(metric.grid()));
        let c = self.timed("classify", || classify(metric, eps))?;
        self.report.sign_report = Some(c.report);
        self.report.robin = Some(EigenSummary::from(&c.robin));
        self.report.dirichlet = Some(EigenSummary::from(&c.dirichlet));
        Ok(c)
    }

    fn record_pair(&mut self, pair: &SubSuperPair) {
        self.report.pair = Some(PairSummary {
            recipe: pair.recipe,
            hypothesis: pair.recipe.hypothesis().to_string(),
            verified: pair.verified,
            lambda: pair.lambda,
            lower_min: pair.lower.min(),
            upper_max: pair.upper.max(),
            check: pair.check,
            constants: pair.constants.clone(),
        });
        self.check(pair.verified, "sub/super pair not verified");
        self.keep("lower", &pair.lower);
        self.keep("upper", &pair.upper);
    }

    fn verify_curvature(
        &mut self,
        metric: &ConformalMetric,
        u: &ScalarField,
        target: &Target,
        phi: &BoundaryField,
        tol: f64,
    ) -> Result<(), Failure> {
        let rep = self.timed("verify", || curvature_report(metric, u, target, phi, tol))?;
        self.check(
            rep.passed,
            format!(
                "curvature deviation {:e} above threshold {:e} or boundary error {:e}",
                rep.max_abs_deviation, rep.threshold, rep.boundary_data_max_error
            ),
        );
        self.report.curvature = Some(rep);
        let s = scalar_curvature_of_conformal_solution(metric, u)?;
        self.keep("u", u);
        self.keep("curvature", &s);
        Ok(())
    }
}

/// Runs one scenario; never panics on bad input.
pub fn run_config(config: &ScenarioConfig) -> RunOutput {
    let start = Instant::now();
    let echo = serde_json::to_value(config).ok();
    let mut ctx = Ctx {
        config,
        report: RunReport::new(echo),
        fields: Vec::new(),
        failed: Vec::new(),
    };
    let result = config.validate().map_err(Failure::from).and_then(|()| match config.problem.mode {
        Mode::Classify => run_classify(&mut ctx),
        Mode::SolveConstant => run_solve_constant(&mut ctx),
        Mode::SolvePrescribed => run_solve_prescribed(&mut ctx),
        Mode::MixedSignPipeline => run_pipeline(&mut ctx),
        Mode::Mms => run_mms(&mut ctx),
        Mode::Obstruction => run_obstruction(&mut ctx),
    });
    let result = result.and_then(|()| {
        if ctx.failed.is_empty() {
            Ok(())
        } else {
            Err(Failure::Verification(std::mem::take(&mut ctx.failed)))
        }
    });
    match result {
        Ok(()) => ctx.report.finish(Status::Passed, None),
        Err(Failure::Config(msg)) => ctx.report.finish(Status::ConfigError, Some(msg)),
        Err(Failure::Verification(list)) => ctx.report.finish(Status::VerificationFailed, Some(list.join("; "))),
        Err(Failure::Core(e)) => {
            let status = if e.is_no_recipe() {
                Status::NoRecipe
            } else {
                Status::NumericalFailure
            };
            ctx.report.finish(status, Some(e.to_string()));
        }
    }
    ctx.report.timings.total_seconds = start.elapsed().as_secs_f64();
    RunOutput {
        report: ctx.report,
        fields: ctx.fields,
    }
}

fn setup(ctx: &Ctx) -> Result<(Arc<ChartGrid>, ConformalMetric), Failure> {
    let grid = ctx.config.build_grid()?;
    let metric = ctx.config.build_metric(&grid)?;
    Ok((grid, metric))
}

fn run_classify(ctx: &mut Ctx) -> Result<(), Failure> {
    let (_, metric) = setup(ctx)?;
    let c = ctx.classify(&metric)?;
    ctx.check(c.report.ordering.all_pass(), "eigenvalue ordering checks failed");
    ctx.keep("robin_eigenfunction", &c.robin.eigenvector);
    ctx.keep("dirichlet_eigenfunction", &c.dirichlet.eigenvector);
    Ok(())
}

fn run_solve_constant(ctx: &mut Ctx) -> Result<(), Failure> {
    let (grid, metric) = setup(ctx)?;
    let phi = ctx.config.build_boundary(&grid)?;
    let options = ctx.config.solver_options();
    let c = ctx.classify(&metric)?;
    let choice = ctx.config.problem.recipe;
    let pair = ctx.timed("construct", || build_constant_case(&metric, &phi, &c, choice))?;
    ctx.record_pair(&pair);
    let settings = IterationSettings::for_pair(&metric, &pair, &options)?;
    let (u, trace) = ctx.timed("iterate", || iterate(&metric, &pair.target, &phi, &pair, &settings))?;
    ctx.report.trace = Some(TraceSummary::from(&trace));
    ctx.verify_curvature(&metric, &u, &pair.target, &phi, settings.tol_residual)
}

fn run_solve_prescribed(ctx: &mut Ctx) -> Result<(), Failure> {
    let (grid, metric) = setup(ctx)?;
    let phi = ctx.config.build_boundary(&grid)?;
    let s = ctx.config.build_target(&grid)?;
    let options = ctx.config.solver_options();
    let c = ctx.classify(&metric)?;
    let gamma = ctx.config.problem.gamma;
    let case = ctx.timed("construct", || build_prescribed_case(&metric, &phi, &s, gamma, &c, &options))?;
    ctx.record_pair(&case.pair);
    ctx.report.boundary_scale = Some(case.final_scale);
    ctx.report.background_trace = case.background_trace.as_ref().map(TraceSummary::from);
    if let Some(v) = &case.background {
        ctx.keep("background", v);
    }
    let (u, trace) = ctx.timed("iterate", || solve_prescribed(&case, &options))?;
    ctx.report.trace = Some(TraceSummary::from(&trace));
    let tol = case.input_residual_tolerance(trace.settings.tol_residual);
    ctx.keep("target", &s);
    ctx.verify_curvature(&metric, &u, &Target::Field(s), &case.final_boundary, tol)
}

fn run_pipeline(ctx: &mut Ctx) -> Result<(), Failure> {
    let (grid, metric) = setup(ctx)?;
    let phi = ctx.config.build_boundary(&grid)?;
    let s = ctx.config.build_target(&grid)?;
    let options = ctx.config.solver_options();
    let c = ctx.classify(&metric)?;
    let eps = c.report.epsilon_sign;
    let gamma = ctx.config.problem.gamma;
    let out = ctx.timed("pipeline", || mixed_sign_pipeline(&metric, &phi, &s, gamma, eps, &options))?;
    ctx.record_pair(&out.case.pair);
    let k = &out.case.pair.constants;
    if let (Some(lhs), Some(rhs)) = (k.collar_inequality_lhs, k.collar_inequality_rhs) {
        ctx.check(lhs >= rhs, format!("collar inequality fails: {lhs:e} < {rhs:e}"));
    }
    ctx.report.boundary_scale = Some(out.case.final_scale);
    ctx.report.background_trace = out.case.background_trace.as_ref().map(TraceSummary::from);
    ctx.report.trace = Some(TraceSummary::from(&out.trace));
    if let Some(v) = &out.case.background {
        ctx.keep("background", v);
    }
    ctx.keep("working_solution", &out.working_solution);
    ctx.keep("target", &s);
    let tol = out.case.input_residual_tolerance(out.trace.settings.tol_residual);
    ctx.verify_curvature(&metric, &out.solution, &Target::Field(s), &out.case.final_boundary, tol)
}

/// Refinement that halves every spacing: lateral counts double, normal intervals double.
fn refined_shape(grid: &ChartGrid) -> Vec<usize> {
    let normal = grid.normal_axis();
    grid.shape()
        .iter()
        .enumerate()
        .map(|(i, &m)| if i == normal { 2 * (m - 1) + 1 } else { 2 * m })
        .collect()
}

fn run_mms(ctx: &mut Ctx) -> Result<(), Failure> {
    let (grid, _) = setup(ctx)?;
    let amplitude = ctx.config.problem.amplitude.unwrap_or(0.0);
    let options = ctx.config.solver_options();
    let fine = build_slab_grid(grid.dim(), &refined_shape(&grid), grid.lengths())?;
    let mut levels = Vec::new();
    for (label, g) in [("coarse", grid.clone()), ("fine", fine)] {
        let metric = ConformalMetric::flat(&g)?;
        let case = manufactured_solution_case(&g, amplitude)?;
        let target = Target::Field(case.target.clone());
        let exact_residual = residual(&metric, &case.exact, &target, &case.boundary)?;
        let top = 1.0 + 2.0 * amplitude.abs() + 0.1;
        let bottom = 0.5 * case.exact.min();
        let shift = choose_shift_a(&metric, &target, bottom, top)?;
        let settings = IterationSettings::unconstrained(&metric, &target, shift, top, &options)?;
        let start = ScalarField::constant(&g, top)?;
        let (u, trace) = ctx.timed(&format!("iterate {label}"), || {
            iterate_from(&metric, &target, &case.boundary, start, &settings)
        })?;
        let max_error = (0..g.node_count())
            .map(|k| (u.get(k) - case.exact.get(k)).abs())
            .fold(0.0, f64::max);
        levels.push(MmsLevel {
            shape: g.shape().to_vec(),
            h_max: g.spacing().iter().copied().fold(0.0, f64::max),
            max_error,
            exact_residual_sup: exact_residual.interior_sup,
            steps: trace.total_steps,
        });
        if label == "fine" {
            ctx.report.trace = Some(TraceSummary::from(&trace));
            ctx.keep("exact", &case.exact);
            ctx.keep("error", &u.zip_map(&case.exact, |a, b| a - b)?);
            ctx.verify_curvature(&metric, &u, &target, &case.boundary, settings.tol_residual)?;
        }
    }
    let ratio = (levels[0].h_max / levels[1].h_max).ln();
    let error_order = (levels[0].max_error / levels[1].max_error).ln() / ratio;
    let residual_order = (levels[0].exact_residual_sup / levels[1].exact_residual_sup).ln() / ratio;
    let passed = error_order >= REQUIRED_ORDER && residual_order >= REQUIRED_ORDER;
    ctx.check(
        passed,
        format!("observed orders {error_order:.3} (error) and {residual_order:.3} (residual) below {REQUIRED_ORDER}"),
    );
    ctx.report.mms = Some(MmsReport {
        amplitude,
        levels,
        error_order,
        residual_order,
        required_order: REQUIRED_ORDER,
        passed,
    });
    Ok(())
}

fn run_obstruction(ctx: &mut Ctx) -> Result<(), Failure> {
    let (grid, metric) = setup(ctx)?;
    let factors = ctx.config.build_factors(&grid)?;
    for (src, u) in ctx.config.problem.factors.iter().zip(&factors) {
        let rep = ctx.timed("obstruction", || closed_torus_obstruction_check(&metric, u))?;
        ctx.check(
            rep.passed,
            format!("pairing identity for '{src}': relative defect {:e}, max curvature {:e}", rep.relative_defect, rep.max_curvature),
        );
        ctx.report.obstruction.push(ObstructionEntry {
            factor: src.clone(),
            check: rep,
        });
    }
    if let Some(u) = factors.first() {
        ctx.keep("u", u);
        ctx.keep("curvature", &scalar_curvature_of_conformal_solution(&metric, u)?);
    }
    Ok(())
}
