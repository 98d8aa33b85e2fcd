use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde_json::{json, Map, Value};

use longrun_core::closed_form::{self, Measure};
use longrun_core::config::ModelFile;
use longrun_core::eigen1d::{self, Eigen1dProblem, GridConfig};
use longrun_core::horizon::{self, HorizonCurve};
use longrun_core::linalg::{mat_to_rows, Mat, Vector};
use longrun_core::optimality::{self, OptimalityVerdict, VerdictStatus};
use longrun_core::simulate::{self, SimConfig};
use longrun_core::{calibration, riccati, Error, MarketModel, Policy, Preferences};

use crate::output::{fmt_f64, num, nums, rows, to_json_string, to_value};

pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn validation(msg: impl Into<String>) -> Self {
        Self { code: EXIT_VALIDATION, message: msg.into() }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Domain(_) | Error::Dimension(_) | Error::SingularDelta { .. } | Error::AssumptionViolation(_) | Error::Config(_) => {
                EXIT_VALIDATION
            }
            _ => EXIT_SOLVER,
        };
        Self { code, message: e.to_string() }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyChoice {
    LongRun,
    Myopic,
}

/// Options shared by the commands; each command reads what it needs.
#[derive(Debug, Clone)]
pub struct Options {
    pub config: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
    pub seed: u64,
    pub paths: Option<usize>,
    pub dt: f64,
    pub measure: Measure,
    pub policy: PolicyChoice,
    pub horizon: f64,
    pub horizons: Option<Vec<f64>>,
    pub y0: Option<f64>,
    pub parallel: bool,
}

fn load(opts: &Options) -> CliResult<(MarketModel, Preferences)> {
    let path = opts.config.as_ref().ok_or_else(|| CliError::validation("--config FILE is required"))?;
    let file = ModelFile::load(path)?;
    let (model, prefs) = file.build()?;
    model.check_assumptions()?;
    Ok((model, prefs))
}

fn emit(opts: &Options, text: &str) -> CliResult<()> {
    match &opts.out {
        Some(path) => write_file(path, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn write_file(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| CliError { code: 1, message: format!("{}: {e}", path.display()) })
}

fn require_json(opts: &Options, command: &str) -> CliResult<()> {
    if opts.format == Some(Format::Csv) {
        return Err(CliError::validation(format!("{command} writes JSON only")));
    }
    Ok(())
}

fn vec_value(v: &Vector) -> Value {
    nums(v.as_slice())
}

fn mat_value(m: &Mat) -> Value {
    rows(&mat_to_rows(m))
}

fn policy_value(p: &Policy) -> Value {
    let mut m = Map::new();
    m.insert("kind".into(), json!(p.kind.name()));
    m.insert("pi_const".into(), vec_value(&p.pi_const));
    m.insert("pi_lin".into(), mat_value(&p.pi_lin));
    m.insert("eta_const".into(), vec_value(&p.eta_const));
    m.insert("eta_lin".into(), mat_value(&p.eta_lin));
    if p.positive_domain {
        m.insert("pi_inv".into(), vec_value(&p.pi_inv));
        m.insert("eta_inv".into(), vec_value(&p.eta_inv));
    }
    Value::Object(m)
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

fn default_y0(model: &MarketModel) -> f64 {
    match model {
        MarketModel::Cir(m) => m.theta,
        _ => 0.0,
    }
}

fn measures_value(f: impl Fn(Measure) -> closed_form::AffineDrift) -> Value {
    json!({
        "physical": to_value(&f(Measure::PhysicalP)),
        "myopic": to_value(&f(Measure::MyopicPhat)),
        "q_optimal": to_value(&f(Measure::QOptimal)),
    })
}

pub fn solve(opts: &Options) -> CliResult<i32> {
    require_json(opts, "solve")?;
    let (model, prefs) = load(opts)?;
    let out = match &model {
        MarketModel::KimOmberg(m) => {
            let sol = closed_form::solve_ou_1d(m, &prefs)?;
            let sd = (1.0 / (2.0 * m.b)).sqrt();
            let res = linspace(-4.0 * sd, 4.0 * sd, 41)
                .into_iter()
                .map(|y| closed_form::ou_residual(m, &prefs, sol.v0, sol.v1, sol.lambda, y).abs())
                .fold(0.0, f64::max);
            json!({
                "model": "kim_omberg",
                "p": num(prefs.p),
                "v0": num(sol.v0),
                "v1": num(sol.v1),
                "lambda": num(sol.lambda),
                "solution": to_value(&sol),
                "residuals": {"hjb_max_abs": num(res)},
                "policy": policy_value(&closed_form::ou_long_run_policy(m, &prefs, &sol)?),
                "measure_dynamics": measures_value(|w| closed_form::ou_measure_dynamics(m, &prefs, &sol, w)),
            })
        }
        MarketModel::Cir(m) => {
            let sol = closed_form::solve_cir(m, &prefs)?;
            let res = linspace(0.1 * m.theta, 5.0 * m.theta, 41)
                .into_iter()
                .map(|y| closed_form::cir_residual(m, &prefs, sol.v0, sol.v1, sol.lambda, y).abs())
                .fold(0.0, f64::max);
            json!({
                "model": "cir",
                "p": num(prefs.p),
                "v0": num(sol.v0),
                "v1": num(sol.v1),
                "lambda": num(sol.lambda),
                "solution": to_value(&sol),
                "residuals": {"hjb_max_abs": num(res)},
                "policy": policy_value(&closed_form::cir_long_run_policy(m, &prefs, &sol)?),
                "measure_dynamics": measures_value(|w| closed_form::cir_measure_dynamics(m, &prefs, &sol, w)),
            })
        }
        MarketModel::Linear(m) => {
            let sol = riccati::solve_linear(m, &prefs)?;
            let k = m.k();
            let mut probes = vec![Vector::zeros(k)];
            for i in 0..k {
                let mut e = Vector::zeros(k);
                e[i] = 1.0;
                probes.push(-&e);
                probes.push(e);
            }
            let mut res: f64 = 0.0;
            for y in &probes {
                res = res.max(riccati::pde_residual(&sol, m, &prefs, y)?.abs());
            }
            let (hat_c, hat_l) = riccati::hatp_drift(m, &prefs, &sol)?;
            let spectrum: Vec<Value> = sol.stabilizing_spectrum.iter().map(|z| json!([num(z.re), num(z.im)])).collect();
            json!({
                "model": "linear",
                "p": num(prefs.p),
                "v0": vec_value(&sol.v0),
                "v1": mat_value(&sol.v1),
                "lambda": num(sol.lambda),
                "residuals": {
                    "riccati": num(sol.residual_v1),
                    "v0_system": num(sol.residual_v0),
                    "hjb_max_abs": num(res),
                },
                "stabilizing_spectrum": spectrum,
                "condition_number": num(sol.condition_number),
                "method": to_value(&sol.method),
                "policy": policy_value(&riccati::long_run_policy(m, &prefs, &sol)?),
                "measure_dynamics": {"myopic": {"intercept": vec_value(&hat_c), "slope": mat_value(&hat_l)}},
            })
        }
    };
    emit(opts, &to_json_string(&out))?;
    Ok(0)
}

/// Verdicts of every applicable condition. A proven failure dominates, then
/// any sufficient condition that holds.
pub fn verdicts(model: &MarketModel, prefs: &Preferences) -> CliResult<Vec<(String, OptimalityVerdict)>> {
    let mut out = Vec::new();
    match model {
        MarketModel::KimOmberg(m) => {
            let sol = closed_form::solve_ou_1d(m, prefs)?;
            out.push(("ou_general".to_string(), optimality::check_ou_general(&sol, m, prefs)));
            if let Some(kappa) = m.kappa() {
                if prefs.p < 0.0 {
                    if (kappa - 1.0).abs() < 1e-9 {
                        out.push(("kappa_one".to_string(), optimality::classify_kappa1(m, prefs)?));
                    } else {
                        out.push(("kappa".to_string(), optimality::check_ou_kappa(kappa, prefs.q * m.rho_sq())?));
                    }
                }
            }
            out.push(("rho_region".to_string(), optimality::check_rho_region(prefs, m.rho_sq())));
        }
        MarketModel::Cir(m) => {
            let sol = closed_form::solve_cir(m, prefs)?;
            out.push(("square_root".to_string(), optimality::check_cir(&sol, m, prefs)));
            out.push(("rho_region".to_string(), optimality::check_rho_region(prefs, m.rho_sq())));
        }
        MarketModel::Linear(m) => {
            riccati::solve_linear(m, prefs)?;
        }
    }
    Ok(out)
}

pub fn overall(verdicts: &[(String, OptimalityVerdict)]) -> VerdictStatus {
    if verdicts.iter().any(|(_, v)| v.status == VerdictStatus::FailureProven) {
        VerdictStatus::FailureProven
    } else if verdicts.iter().any(|(_, v)| v.holds()) {
        VerdictStatus::SufficientConditionHolds
    } else {
        VerdictStatus::NotImplied
    }
}

pub fn check(opts: &Options) -> CliResult<i32> {
    require_json(opts, "check")?;
    let path = opts.config.as_ref().ok_or_else(|| CliError::validation("--config FILE is required"))?;
    let (model, prefs) = ModelFile::load(path)?.build()?;
    let report = optimality::validate_assumptions(&model, &prefs);
    if !report.all_passed() {
        let failed: Vec<String> = report.checks.iter().filter(|c| !c.passed).map(|c| format!("{}: {}", c.name, c.detail)).collect();
        return Err(CliError::validation(format!("assumption violated: {}", failed.join("; "))));
    }
    let vs = verdicts(&model, &prefs)?;
    let status = overall(&vs);
    let mut table = String::new();
    for (name, v) in &vs {
        let _ = writeln!(table, "{name:<12} {:<26} {}", format!("{:?}", v.status), v.note);
    }
    let _ = writeln!(table, "{:<12} {:?}", "overall", status);
    eprint!("{table}");
    let conds: Map<String, Value> = vs.iter().map(|(n, v)| (n.clone(), to_value(v))).collect();
    let out = json!({
        "status": to_value(&status),
        "exit_code": status.exit_code(),
        "assumptions": to_value(&report),
        "conditions": conds,
    });
    emit(opts, &to_json_string(&out))?;
    Ok(status.exit_code())
}

pub fn eigen(opts: &Options) -> CliResult<i32> {
    let (model, prefs) = load(opts)?;
    let problem = Eigen1dProblem::from_model(&model, &prefs)?;
    let sol = eigen1d::principal_eigenvalue(&problem, &GridConfig::for_problem(&problem))?;
    if opts.format == Some(Format::Csv) {
        let mut csv = String::from("y,phi,v\n");
        for ((y, phi), v) in sol.grid.iter().zip(&sol.phi).zip(&sol.v) {
            let _ = writeln!(csv, "{},{},{}", fmt_f64(*y), fmt_f64(*phi), fmt_f64(*v));
        }
        emit(opts, &csv)?;
        return Ok(0);
    }
    let closed = match &model {
        MarketModel::KimOmberg(m) => Some(closed_form::solve_ou_1d(m, &prefs)?.lambda),
        MarketModel::Cir(m) => closed_form::solve_cir(m, &prefs).ok().map(|s| s.lambda),
        MarketModel::Linear(_) => None,
    };
    let err_value = |e: Error| json!({"error": e.to_string()});
    let tight = match eigen1d::feller_tightness_test(&problem, &sol) {
        Ok(r) => to_value(&r),
        Err(e) => err_value(e),
    };
    let decay = match eigen1d::cel_decay_constant(&problem, &sol, &prefs) {
        Ok(k) => to_value(&k),
        Err(e) => err_value(e),
    };
    let out = json!({
        "lambda_c": num(sol.lambda_c),
        "closed_form_lambda": closed.map(num),
        "relative_difference": closed.map(|l| num((sol.lambda_c - l) / l)),
        "step": num(sol.truncation.step),
        "nodes": sol.grid.len(),
        "convergence_history": to_value(&sol.convergence_history),
        "epsilon_sensitivity": sol.epsilon_sensitivity.map(num),
        "tightness": tight,
        "cel_decay": decay,
    });
    emit(opts, &to_json_string(&out))?;
    Ok(0)
}

pub fn parse_horizons(spec: &str) -> CliResult<Vec<f64>> {
    let bad = || CliError::validation(format!("horizons '{spec}' must be START:END[:STEP] in months"));
    let parts: Vec<f64> = spec.split(':').map(|s| s.trim().parse::<f64>().map_err(|_| bad())).collect::<CliResult<_>>()?;
    let (a, b, h) = match parts.as_slice() {
        [a, b] => (*a, *b, 1.0),
        [a, b, h] => (*a, *b, *h),
        _ => return Err(bad()),
    };
    if !(a > 0.0 && b >= a && h > 0.0) {
        return Err(bad());
    }
    let n = ((b - a) / h + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| a + i as f64 * h).collect())
}

pub fn curves_csv(curves: &[&HorizonCurve]) -> String {
    let mut csv = String::from("T_months,T_years,primal_log,dual_log,cel_monthly,cel_annual_pct,policy\n");
    for c in curves {
        for i in 0..c.horizons.len() {
            let t = c.horizons[i];
            let _ = writeln!(
                csv,
                "{},{},{},{},{},{},{}",
                fmt_f64(t),
                fmt_f64(t / 12.0),
                fmt_f64(c.primal_log_growth[i] * t),
                fmt_f64(c.dual_log_growth[i] * t),
                fmt_f64(c.cel_bound[i]),
                fmt_f64(100.0 * c.cel_bound_annual[i]),
                c.policy_name
            );
        }
    }
    csv
}

fn sim_config(opts: &Options, default_paths: Option<usize>) -> CliResult<SimConfig> {
    let paths = opts.paths.or(default_paths).ok_or_else(|| CliError::validation("Monte Carlo curves need --paths"))?;
    let mut cfg = SimConfig::new(paths, opts.dt, opts.seed)?;
    cfg.parallel = opts.parallel;
    Ok(cfg)
}

pub fn break_even_line(t: f64) -> String {
    format!("T* ≈ {:.0} months ({:.1} years)", t, t / 12.0)
}

pub fn cel(opts: &Options) -> CliResult<i32> {
    let (model, prefs) = load(opts)?;
    let horizons = match &opts.horizons {
        Some(h) => h.clone(),
        None => (1..=360).map(f64::from).collect(),
    };
    let y0 = opts.y0.unwrap_or_else(|| default_y0(&model));
    let (lr, my) = match &model {
        MarketModel::KimOmberg(m) => {
            let curves = horizon::ou_policy_curves(m, &prefs, y0, &horizons, opts.parallel)?;
            match horizon::break_even_horizon(m, &prefs, y0) {
                Ok(t) => eprintln!("break-even: {}", break_even_line(t)),
                Err(e) => eprintln!("break-even: {e}"),
            }
            curves
        }
        MarketModel::Cir(m) => {
            let cfg = sim_config(opts, None)?;
            let sol = closed_form::solve_cir(m, &prefs)?;
            let lr_pol = closed_form::cir_long_run_policy(m, &prefs, &sol)?;
            let my_pol = longrun_core::model::myopic_policy(&model, &prefs)?;
            (
                horizon::cel_curve(&model, &prefs, y0, &horizons, &lr_pol, Some(&cfg))?,
                horizon::cel_curve(&model, &prefs, y0, &horizons, &my_pol, Some(&cfg))?,
            )
        }
        MarketModel::Linear(_) => return Err(CliError::validation("cel supports the single-state models")),
    };
    match opts.format.unwrap_or(Format::Csv) {
        Format::Csv => emit(opts, &curves_csv(&[&lr, &my]))?,
        Format::Json => emit(opts, &to_json_string(&json!({"long_run": to_value(&lr), "myopic": to_value(&my)})))?,
    }
    Ok(0)
}

pub fn simulate(opts: &Options) -> CliResult<i32> {
    require_json(opts, "simulate")?;
    let (model, prefs) = load(opts)?;
    let cfg = sim_config(opts, Some(10_000))?;
    let y0 = opts.y0.unwrap_or_else(|| default_y0(&model));
    let t = opts.horizon;
    let state = simulate::sample_state_terminal(&model, &prefs, opts.measure, y0, t, &cfg)?;
    let y_est = simulate::mc_estimate(&state.draws, |y| y)?;
    let policy = match (&model, opts.policy) {
        (_, PolicyChoice::Myopic) => longrun_core::model::myopic_policy(&model, &prefs)?,
        (MarketModel::KimOmberg(m), PolicyChoice::LongRun) => {
            closed_form::ou_long_run_policy(m, &prefs, &closed_form::solve_ou_1d(m, &prefs)?)?
        }
        (MarketModel::Cir(m), PolicyChoice::LongRun) => closed_form::cir_long_run_policy(m, &prefs, &closed_form::solve_cir(m, &prefs)?)?,
        (MarketModel::Linear(m), PolicyChoice::LongRun) => riccati::long_run_policy(m, &prefs, &riccati::solve_linear(m, &prefs)?)?,
    };
    let paths = simulate::simulate_wealth_and_sdf(&model, &policy, y0, t, &cfg)?;
    let p = prefs.p;
    let utility = simulate::mc_estimate(&paths.log_wealth, |lx| (p * lx).exp() / p)?;
    let xm: Vec<f64> = paths.log_wealth.iter().zip(&paths.log_sdf).map(|(x, m)| x + m).collect();
    let deflated = simulate::mc_estimate(&xm, f64::exp)?;
    let out = json!({
        "horizon": num(t),
        "y0": num(y0),
        "config": config_value(&cfg),
        "measure": to_value(&opts.measure),
        "state_clamped": state.clamped,
        "terminal_state": to_value(&y_est),
        "policy": policy.kind.name(),
        "expected_utility": to_value(&utility),
        "deflated_wealth": to_value(&deflated),
        "aborted_paths": paths.aborted,
    });
    emit(opts, &to_json_string(&out))?;
    Ok(0)
}

/// Echo of the simulation settings; the thread mode is left out because it
/// does not change results.
fn config_value(cfg: &SimConfig) -> Value {
    let mut v = to_value(cfg);
    if let Value::Object(m) = &mut v {
        m.remove("parallel");
    }
    v
}

pub const DEMO_THRESHOLD_RANGE: (f64, f64) = (-12.6, -12.2);

pub fn calibration_demo(opts: &Options) -> CliResult<i32> {
    let model = calibration::calibration_model();
    let threshold = calibration::kappa_threshold_bisect(&model, -20.0, -1.0, 1e-8)?;
    println!("kappa condition holds for p > {threshold:.4} (relative risk aversion below {:.4})", 1.0 - threshold);
    let dir = opts.out.clone().unwrap_or_else(|| PathBuf::from("calibration-demo"));
    std::fs::create_dir_all(&dir).map_err(|e| CliError { code: 1, message: format!("{}: {e}", dir.display()) })?;
    let horizons = opts.horizons.clone().unwrap_or_else(|| (1..=360).map(f64::from).collect());
    let mut runs = Vec::new();
    for p in [-1.0, -4.0] {
        let prefs = Preferences::new(p)?;
        let sol = closed_form::solve_ou_1d(&model, &prefs)?;
        let (lr, my) = horizon::ou_policy_curves(&model, &prefs, 0.0, &horizons, opts.parallel)?;
        let file = dir.join(format!("cel_p{}.csv", p as i64));
        write_file(&file, &curves_csv(&[&lr, &my]))?;
        let be = horizon::break_even_horizon(&model, &prefs, 0.0)?;
        println!(
            "p = {p}: Theta = {:.6}, v0 = {:.6e}, v1 = {:.6e}, lambda = {:.6e}; {}; curves in {}",
            sol.theta,
            sol.v0,
            sol.v1,
            sol.lambda,
            break_even_line(be),
            file.display()
        );
        let verdict = overall(&verdicts(&MarketModel::KimOmberg(model.clone()), &prefs)?);
        runs.push(json!({
            "p": num(p),
            "solution": to_value(&sol),
            "break_even_months": num(be),
            "verdict": to_value(&verdict),
            "curve_rows": 2 * horizons.len(),
        }));
    }
    let ok = (DEMO_THRESHOLD_RANGE.0..=DEMO_THRESHOLD_RANGE.1).contains(&threshold);
    let summary = json!({
        "threshold_p": num(threshold),
        "threshold_risk_aversion": num(1.0 - threshold),
        "threshold_exact": calibration::kappa_threshold_exact(&model)?.map(num),
        "threshold_ok": ok,
        "runs": runs,
    });
    write_file(&dir.join("summary.json"), &to_json_string(&summary))?;
    if !ok {
        eprintln!("threshold {threshold} outside [{}, {}]", DEMO_THRESHOLD_RANGE.0, DEMO_THRESHOLD_RANGE.1);
        return Ok(1);
    }
    Ok(0)
}
