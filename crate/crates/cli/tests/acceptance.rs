//! End-to-end acceptance suite. Runs the `yamabe` binary on scenario configs and
//! re-checks the reported numbers; prints one PASS/FAIL line per criterion.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use tempfile::TempDir;
use yamabe_cli::config::ScenarioConfig;
use yamabe_core::geometry::{build_slab_grid, ChartGrid, ConformalMetric, ScalarField};
use yamabe_core::io::read_field;
use yamabe_core::operator::operator_scale;
use yamabe_core::spectral::{conformal_sign_invariance, default_epsilon_sign, first_eigenvalue_dirichlet, InvarianceOutcome};

type Outcome = Result<String, String>;

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

struct Run {
    code: i32,
    report: Value,
    report_path: PathBuf,
}

fn run_path(config: &Path, dir: &Path, extra: &[&str]) -> Run {
    let stem = config.file_stem().unwrap().to_string_lossy().into_owned();
    let report_path = dir.join(format!("{stem}.report.json"));
    let out = Command::new(env!("CARGO_BIN_EXE_yamabe"))
        .arg("run")
        .arg(config)
        .arg("--report")
        .arg(&report_path)
        .args(extra)
        .output()
        .expect("binary runs");
    let report = std::fs::read_to_string(&report_path)
        .ok()
        .and_then(|s| serde_json::from_str(&s).ok())
        .unwrap_or(Value::Null);
    Run {
        code: out.status.code().unwrap_or(-1),
        report,
        report_path,
    }
}

fn run_value(config: &Value, dir: &Path, extra: &[&str]) -> Run {
    let name = config["name"].as_str().unwrap();
    let path = dir.join(format!("{name}.json"));
    std::fs::write(&path, serde_json::to_string_pretty(config).unwrap()).unwrap();
    run_path(&path, dir, extra)
}

fn run_named(name: &str, dir: &Path, extra: &[&str]) -> Run {
    run_path(&configs_dir().join(format!("{name}.json")), dir, extra)
}

fn f(v: &Value) -> f64 {
    v.as_f64().unwrap_or(f64::NAN)
}

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn expect_passed(run: &Run, label: &str) -> Result<(), String> {
    ensure(
        run.code == 0,
        format!("{label}: exit {} ({})", run.code, run.report["error"].as_str().unwrap_or("no report")),
    )
}

fn classify_config(name: &str, nz: usize) -> Value {
    json!({
        "name": name,
        "grid": {"n": 3, "shape": [16, 16, nz], "lengths": [1.0, 1.0, 1.0]},
        "metric": {"kind": "flat"},
        "problem": {"mode": "classify"}
    })
}

fn criterion_1(dir: &Path) -> Outcome {
    let exact = 8.0 * PI * PI;
    let mut errors = Vec::new();
    for nz in [17, 33] {
        let run = run_value(&classify_config(&format!("dirichlet_{nz}"), nz), dir, &[]);
        expect_passed(&run, "classify")?;
        errors.push((f(&run.report["dirichlet"]["eigenvalue"]) - exact).abs());
    }
    let rel = errors[1] / exact;
    let order = (errors[0] / errors[1]).log2();
    ensure(rel <= 0.01, format!("relative error {rel:e} above 1%"))?;
    ensure(order >= 1.8, format!("order {order:.3} below 1.8"))?;
    Ok(format!("relative error {rel:.2e} at 16x16x33, order {order:.3}"))
}

fn criterion_2(dir: &Path) -> Outcome {
    let run = run_value(&classify_config("robin_flat", 33), dir, &[]);
    expect_passed(&run, "classify")?;
    let grid = build_slab_grid(3, &[16, 16, 33], &[1.0, 1.0, 1.0]).unwrap();
    let scale = operator_scale(&ConformalMetric::flat(&grid).unwrap());
    let eta = f(&run.report["robin"]["eigenvalue"]);
    let lo = f(&run.report["robin"]["eigenvector_min"]);
    let hi = f(&run.report["robin"]["eigenvector_max"]);
    let spread = (hi - lo) / hi.abs();
    ensure(eta.abs() <= 1e-8 * scale, format!("|eta| = {eta:e} above {:e}", 1e-8 * scale))?;
    ensure(spread <= 1e-8, format!("eigenfunction spread {spread:e}"))?;
    ensure(run.report["sign_report"]["sign_robin"] == "zero", "flat sign not zero")?;
    ensure(run.report["sign_report"]["sign_dirichlet"] == "positive", "Dirichlet sign not positive")?;
    Ok(format!("|eta| = {:.2e} vs bound {:.2e}, eigenfunction spread {spread:.1e}", eta.abs(), 1e-8 * scale))
}

fn random_factor(rng: &mut ChaCha8Rng) -> String {
    let a: f64 = rng.gen_range(-0.25..0.25);
    let b: f64 = rng.gen_range(-0.25..0.25);
    let k: u32 = rng.gen_range(1..3);
    format!("1 + {a}*cos(2*pi*{k}*x)*z + {b}*sin(2*pi*y)*z*(1 - z)")
}

fn criterion_3(dir: &Path) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let mut seen = [0usize; 3];
    let total = 12;
    for i in 0..total {
        let level = [-4.0, 0.0, 4.0][i % 3];
        let potential = if level == 0.0 {
            "0".to_string()
        } else {
            format!("{level} + {}*sin(2*pi*x)", rng.gen_range(-1.0..1.0))
        };
        let config = json!({
            "name": format!("ordering_{i}"),
            "grid": {"n": 3, "shape": [8, 8, 13], "lengths": [1.0, 1.0, 1.0]},
            "metric": {"kind": "conformal_potential", "factor": random_factor(&mut rng), "potential": potential},
            "problem": {"mode": "classify"}
        });
        let run = run_value(&config, dir, &[]);
        expect_passed(&run, &format!("metric {i}"))?;
        let sr = &run.report["sign_report"];
        let (er, ed) = (f(&sr["eta_robin"]), f(&sr["eta_dirichlet"]));
        ensure(ed > er, format!("metric {i}: Dirichlet {ed} not above Robin {er}"))?;
        let o = &sr["ordering"];
        for key in ["dirichlet_nonpositive_implication", "robin_nonnegative_implication", "not_both_zero", "strict_gap"] {
            ensure(o[key] == true, format!("metric {i}: {key} fails"))?;
        }
        let slot = match sr["sign_robin"].as_str() {
            Some("negative") => 0,
            Some("zero") => 1,
            _ => 2,
        };
        seen[slot] += 1;
    }
    ensure(seen.iter().all(|&c| c > 0), format!("signs not all reached: {seen:?}"))?;
    Ok(format!("{total} metrics, signs (-, 0, +) = {seen:?}, zero violations"))
}

fn random_positive(grid: &Arc<ChartGrid>, rng: &mut ChaCha8Rng) -> ScalarField {
    let a: f64 = rng.gen_range(-0.4..0.4);
    let b: f64 = rng.gen_range(-0.4..0.4);
    let c: f64 = rng.gen_range(-0.3..0.3);
    ScalarField::from_fn(grid, |x| {
        (a * (2.0 * PI * x[0]).sin() + b * (2.0 * PI * x[1]).cos() * x[2] + c * x[2] * x[2]).exp()
    })
    .unwrap()
}

fn criterion_4(_: &Path) -> Outcome {
    let grid = build_slab_grid(3, &[8, 8, 13], &[1.0, 1.0, 1.0]).unwrap();
    let eps = default_epsilon_sign(&grid);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut checked = 0;
    let mut indeterminate = 0;
    for level in [-4.0, 0.0, 4.0] {
        let psi = ScalarField::from_fn(&grid, |x| 1.0 + 0.1 * (2.0 * PI * x[0]).cos() * x[2]).unwrap();
        let pot = ScalarField::constant(&grid, level).unwrap();
        let base = ConformalMetric::conformal_with_potential(psi, pot).unwrap();
        for _ in 0..5 {
            let u = random_positive(&grid, &mut rng);
            let rep = conformal_sign_invariance(&base, &u, eps).map_err(|e| e.to_string())?;
            ensure(!rep.violated(), format!("sign changed at level {level}: {rep:?}"))?;
            for o in [rep.robin, rep.dirichlet] {
                if o == InvarianceOutcome::Indeterminate {
                    indeterminate += 1;
                }
            }
            checked += 1;
        }
    }
    Ok(format!("{checked} conformal changes over 3 base metrics, zero violations, {indeterminate} in the zero band"))
}

fn trace_contract(run: &Run, label: &str) -> Result<f64, String> {
    let t = &run.report["trace"];
    let tol_mono = f(&t["tol_mono"]);
    let upper = f(&run.report["pair"]["upper_max"]);
    ensure((tol_mono - 1e-12 * (1.0 + upper)).abs() <= 1e-24 + 1e-15 * tol_mono, format!("{label}: tol_mono {tol_mono:e}"))?;
    let mono = f(&t["max_monotone_violation"]);
    let bound = f(&t["max_bound_violation"]);
    ensure(mono <= tol_mono, format!("{label}: monotone violation {mono:e}"))?;
    ensure(bound <= tol_mono, format!("{label}: left [lower, upper] by {bound:e}"))?;
    for s in t["steps"].as_array().unwrap() {
        ensure(f(&s["max_monotone_violation"]) <= tol_mono, format!("{label}: step {} increased", s["step"]))?;
    }
    let res = f(&t["final_residual"]["interior_sup"]);
    let tol = f(&t["tol_residual"]);
    ensure(res <= tol, format!("{label}: residual {res:e} above {tol:e}"))?;
    ensure(f(&run.report["curvature"]["positivity_margin"]) > 0.0, format!("{label}: final u not positive"))?;
    Ok(mono)
}

fn criterion_5(dir: &Path) -> Outcome {
    let mut parts = Vec::new();
    for (name, sign) in [("constant_negative", "negative"), ("constant_zero", "zero"), ("constant_positive", "positive")] {
        let run = run_named(name, dir, &[]);
        expect_passed(&run, name)?;
        ensure(run.report["sign_report"]["sign_robin"] == sign, format!("{name}: expected sign {sign}"))?;
        ensure(run.report["config"]["solver"].get("tol_residual").is_none(), "default residual tolerance expected")?;
        let mono = trace_contract(&run, name)?;
        parts.push(format!("{sign}: {} steps, max increase {mono:.1e}", run.report["trace"]["total_steps"]));
    }
    Ok(parts.join("; "))
}

fn curvature_bound(run: &Run, label: &str) -> Result<f64, String> {
    let c = &run.report["curvature"];
    ensure(c["passed"] == true, format!("{label}: curvature check failed"))?;
    let dev = f(&c["max_abs_deviation"]);
    let threshold = f(&c["threshold"]);
    ensure(dev <= threshold, format!("{label}: deviation {dev:e} above {threshold:e}"))?;
    Ok(dev / threshold)
}

/// Boundary values of the dumped solution against `c * phi` rebuilt from the config.
fn boundary_matches(run: &Run, config: &Path, label: &str) -> Result<(), String> {
    let cfg = ScenarioConfig::load(config).map_err(|e| e.to_string())?;
    let grid = cfg.build_grid().map_err(|e| e.to_string())?;
    let phi = cfg.build_boundary(&grid).map_err(|e| e.to_string())?;
    let c = run.report["boundary_scale"].as_f64().unwrap_or(1.0);
    let dump = run.report["dumps"]
        .as_array()
        .and_then(|d| d.iter().find(|e| e["name"] == "u"))
        .ok_or(format!("{label}: no solution dump"))?;
    let path = run.report_path.parent().unwrap().join(dump["path"].as_str().unwrap());
    let (_, u) = read_field(&path, &grid).map_err(|e| e.to_string())?;
    let worst = (0..grid.boundary_count())
        .map(|s| (u.get(grid.boundary_node(s)) - c * phi.get(s)).abs())
        .fold(0.0, f64::max);
    ensure(worst <= 1e-12 * (1.0 + c * phi.max()), format!("{label}: boundary mismatch {worst:e}"))
}

fn criterion_6(dir: &Path) -> Outcome {
    let constant = [
        "constant_negative",
        "constant_zero",
        "constant_positive",
        "constant_positive_curvature",
        "constant_n4_boundary_factor",
        "constant_flat",
    ];
    let prescribed = [
        "prescribed_negative_negative",
        "prescribed_negative_zero",
        "prescribed_positive_positive",
        "prescribed_mixed_positive",
        "prescribed_nonpositive_positive",
    ];
    let mut worst: f64 = 0.0;
    for name in constant.iter().chain(prescribed.iter()) {
        let sub = dir.join(name);
        std::fs::create_dir_all(&sub).unwrap();
        let run = run_named(name, &sub, &["--dump-fields"]);
        expect_passed(&run, name)?;
        worst = worst.max(curvature_bound(&run, name)?);
        if constant.contains(name) {
            ensure(run.report["curvature"]["target_description"].as_str().unwrap_or("").starts_with("constant"), format!("{name}: target not constant"))?;
        }
        boundary_matches(&run, &configs_dir().join(format!("{name}.json")), name)?;
    }
    Ok(format!(
        "{} constant and {} prescribed scenarios, worst deviation/threshold {worst:.2e}, boundary data exact",
        constant.len(),
        prescribed.len()
    ))
}

fn criterion_7(dir: &Path) -> Outcome {
    let config = configs_dir().join("mixed_sign_pipeline.json");
    let run = run_path(&config, dir, &["--dump-fields"]);
    expect_passed(&run, "pipeline")?;
    curvature_bound(&run, "pipeline")?;
    boundary_matches(&run, &config, "pipeline")?;
    let k = &run.report["pair"]["constants"];
    let (beta, k1, gamma) = (f(&k["beta"]), f(&k["k_interior"]), f(&k["gamma"]));
    let (lhs, rhs) = (f(&k["collar_inequality_lhs"]), f(&k["collar_inequality_rhs"]));

    let cfg = ScenarioConfig::load(&config).map_err(|e| e.to_string())?;
    let grid = cfg.build_grid().map_err(|e| e.to_string())?;
    let metric = cfg.build_metric(&grid).map_err(|e| e.to_string())?;
    let s = cfg.build_target(&grid).map_err(|e| e.to_string())?;
    let phi = cfg.build_boundary(&grid).map_err(|e| e.to_string())?;
    let bg = run.report["dumps"].as_array().unwrap().iter().find(|e| e["name"] == "background").ok_or("no background dump")?;
    let (_, v) = read_field(&run.report_path.parent().unwrap().join(bg["path"].as_str().unwrap()), &grid).map_err(|e| e.to_string())?;
    let working = metric.conformal_change(&v).map_err(|e| e.to_string())?;
    let eig = first_eigenvalue_dirichlet(&working).map_err(|e| e.to_string())?;
    let lz = grid.lengths()[2];
    let mut k1_scan = f64::INFINITY;
    let mut collar_max_s = f64::NEG_INFINITY;
    let mut upper_max = f64::NEG_INFINITY;
    for node in 0..grid.node_count() {
        let z = grid.coordinate(node, 2);
        let d = z.min(lz - z);
        if d >= gamma - 1e-12 {
            k1_scan = k1_scan.min(eig.eigenvector.get(node));
        }
        if d <= gamma + 1e-12 {
            collar_max_s = collar_max_s.max(s.get(node));
        }
        upper_max = upper_max.max(eig.eigenvector.get(node) + phi.max());
    }
    let p = grid.constants().p;
    let lhs_scan = eig.eigenvalue * k1_scan;
    let rhs_scan = beta * s.max() * upper_max.powf(p - 1.0);
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * (1.0 + a.abs().max(b.abs()));
    ensure(collar_max_s < 0.0, format!("S not negative on the collar: max {collar_max_s}"))?;
    ensure(k1_scan > 0.0 && close(k1, k1_scan), format!("K1 reported {k1}, scanned {k1_scan}"))?;
    ensure(close(lhs, lhs_scan) && close(rhs, rhs_scan), format!("inequality sides reported ({lhs}, {rhs}), scanned ({lhs_scan}, {rhs_scan})"))?;
    ensure(lhs_scan >= rhs_scan, format!("collar inequality fails: {lhs_scan} < {rhs_scan}"))?;
    ensure(beta > 0.0 && beta <= 1.0, format!("beta = {beta}"))?;
    let c = f(&run.report["boundary_scale"]);
    ensure(close(c, beta.powf(1.0 / (p - 2.0))), format!("c = {c} is not beta^(1/(p-2))"))?;
    ensure(run.report["sign_report"]["sign_robin"] == "zero", "first Robin eigenvalue not in the zero band")?;
    Ok(format!("beta = {beta:.4}, K1 = {k1_scan:.6}, {lhs_scan:.3} >= {rhs_scan:.3}, c = {c:.4}"))
}

fn criterion_8(dir: &Path) -> Outcome {
    let run = run_named("mms", dir, &[]);
    expect_passed(&run, "mms")?;
    let m = &run.report["mms"];
    let (eo, ro) = (f(&m["error_order"]), f(&m["residual_order"]));
    ensure(eo >= 1.8 && ro >= 1.8, format!("orders {eo:.3}, {ro:.3}"))?;
    let constants: Vec<f64> = m["levels"]
        .as_array()
        .unwrap()
        .iter()
        .map(|l| f(&l["max_error"]) / f(&l["h_max"]).powi(2))
        .collect();
    Ok(format!("error order {eo:.3}, residual order {ro:.3}, error/h^2 = {constants:.4?}"))
}

fn criterion_9(dir: &Path) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let factors: Vec<String> = (0..5)
        .map(|_| {
            format!(
                "exp({}*sin(2*pi*x) + {}*cos(2*pi*y)*sin(2*pi*z) + {}*cos(2*pi*z))",
                rng.gen_range(-0.4..0.4),
                rng.gen_range(-0.4..0.4),
                rng.gen_range(-0.4..0.4)
            )
        })
        .collect();
    let config = json!({
        "name": "torus_pairing",
        "grid": {"n": 3, "shape": [12, 10, 8], "lengths": [1.0, 1.0, 1.0], "closed": true},
        "metric": {"kind": "potential", "potential": "1"},
        "problem": {"mode": "obstruction", "factors": factors}
    });
    let run = run_value(&config, dir, &[]);
    expect_passed(&run, "obstruction")?;
    let entries = run.report["obstruction"].as_array().cloned().unwrap_or_default();
    ensure(entries.len() == 5, "expected five pairings")?;
    let mut worst: f64 = 0.0;
    for e in &entries {
        let d = f(&e["relative_defect"]);
        ensure(d <= 1e-10, format!("relative defect {d:e}"))?;
        ensure(f(&e["max_curvature"]) > 0.0, "max curvature not positive")?;
        worst = worst.max(d);
    }
    Ok(format!("5 random factors, worst relative defect {worst:.2e}, max S > 0 in each"))
}

fn criterion_10(dir: &Path) -> Outcome {
    let mut cases: Vec<(String, Value)> = Vec::new();
    for name in ["no_recipe_negative_eigenvalue", "no_recipe_positive_near_boundary"] {
        let text = std::fs::read_to_string(configs_dir().join(format!("{name}.json"))).unwrap();
        cases.push((name.into(), serde_json::from_str(&text).unwrap()));
    }
    let base = |name: &str, potential: &str, mode: &str, target: &str| {
        json!({
            "name": name,
            "grid": {"n": 3, "shape": [8, 8, 13], "lengths": [1.0, 1.0, 1.0]},
            "metric": {"kind": "potential", "potential": potential},
            "problem": {"mode": mode, "target": target}
        })
    };
    cases.push(("negative_positive_constant".into(), base("negative_positive_constant", "-4", "solve-prescribed", "0.5")));
    cases.push(("negative_zero_target".into(), base("negative_zero_target", "-4", "solve-prescribed", "0")));
    cases.push(("zero_positive_collar_pipeline".into(), base("zero_positive_collar_pipeline", "0", "mixed-sign-pipeline", "1 - 2*sin(pi*z)")));
    cases.push(("zero_positive_everywhere".into(), base("zero_positive_everywhere", "0", "solve-prescribed", "1 + x")));
    for (label, config) in &cases {
        let run = run_value(config, dir, &[]);
        ensure(run.code == 3, format!("{label}: exit {} instead of 3", run.code))?;
        let err = run.report["error"].as_str().unwrap_or("");
        ensure(err.contains("missing hypothesis"), format!("{label}: message does not cite a hypothesis: {err}"))?;
        ensure(run.report["trace"].is_null() && run.report["pair"].is_null(), format!("{label}: a solve was attempted"))?;
    }
    Ok(format!("{} out-of-scope configurations exit 3 citing the missing hypothesis", cases.len()))
}

fn main() {
    let dir = TempDir::new().unwrap();
    let criteria: [(&str, fn(&Path) -> Outcome); 10] = [
        ("Dirichlet eigenvalue oracle", criterion_1),
        ("Robin eigenvalue exactness", criterion_2),
        ("eigenvalue ordering over random metrics", criterion_3),
        ("sign invariance under conformal change", criterion_4),
        ("monotone iteration contract", criterion_5),
        ("curvature round trip", criterion_6),
        ("mixed-sign collar pipeline", criterion_7),
        ("manufactured solution accuracy", criterion_8),
        ("closed torus pairing diagnostic", criterion_9),
        ("dispatch honesty", criterion_10),
    ];
    let mut failures = 0;
    for (i, (title, check)) in criteria.iter().enumerate() {
        let sub = dir.path().join(format!("c{}", i + 1));
        std::fs::create_dir_all(&sub).unwrap();
        match check(&sub) {
            Ok(detail) => println!("criterion {:>2} PASS  {title}: {detail}", i + 1),
            Err(why) => {
                failures += 1;
                println!("criterion {:>2} FAIL  {title}: {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures > 0 {
        std::process::exit(1);
    }
}
