//! One function per subcommand. Each returns the report as a sorted JSON map
//! and writes CSV side outputs where requested.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use clap::ValueEnum;
use nalgebra::{DMatrix, DVector};
use pmlkit::aggregation::{accuracy_metric, design_subsystem_noise, AggregationNetwork, Subsystem};
use pmlkit::gauss::{logdet_psd, numerical_rank, spectral_radius, RngStream, SymMatrix};
use pmlkit::lti::{
    is_schur_stable, pml_error_lower_bound_logdet, pml_error_lower_bound_trace, solve_lyapunov,
    steady_state_covariance, tightest_epsilon, LtiSystem,
};
use pmlkit::mechanism::{
    design_theta_general, design_theta_linear, mechanism_joint, theta_lower_bound_general,
    theta_lower_bound_linear, verify_lmi, GaussianMechanismSpec, LinearMechanismSpec, ThetaPolicy,
    ThetaVariant,
};
use pmlkit::pml::{
    check_pml_privacy, exact_privacy_prob, half_chi2_quantile, kappa, necessary_condition,
    pml_components, tightest_epsilon_for_joint, JointGaussian, PrivacyBudget,
};
use pmlkit::relations::{
    dp_to_pml, mi_to_pml, phi_inverse, pml_required_ratio, pml_to_dp, pml_to_mi, DpBudget, MiBudget,
};
use pmlkit::sim::{empirical_violation_rate, simulate_aggregation, simulate_and_filter, write_csv};
use pmlkit::Error;
use serde_json::{json, Map, Value};

use crate::config::{Config, MatrixInput, MechanismSection, SimSection, SystemSection, VectorInput};
use crate::report::{matrix, num, provenance, sym, vector, CliError};

/// Environment variable that overrides the default seed.
pub const SEED_ENV: &str = "PMLKIT_SEED";
pub const DEFAULT_SEED: u64 = 0;
pub const DEFAULT_SAMPLES: usize = 100_000;
pub const DEFAULT_HORIZON: usize = pmlkit::sim::DEFAULT_HORIZON;
/// `δ` for the kalman bounds when the config has no budget.
pub const DEFAULT_KALMAN_DELTA: f64 = 1e-3;
/// KS threshold of `verify`.
pub const KS_THRESHOLD: f64 = 0.01;

type Report = Map<String, Value>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BudgetKind {
    Pml,
    Dp,
    Mi,
}

impl BudgetKind {
    fn name(self) -> &'static str {
        match self {
            BudgetKind::Pml => "pml",
            BudgetKind::Dp => "dp",
            BudgetKind::Mi => "mi",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PolicyKind {
    Boundary,
    ScaledIdentity,
}

/// `--seed`, then `sim.seed`, then the environment, then [`DEFAULT_SEED`].
pub fn resolve_seed(flag: Option<u64>, cfg: &Config, env: Option<&str>) -> Result<u64, CliError> {
    if let Some(s) = flag.or(cfg.sim.as_ref().and_then(|s| s.seed)) {
        return Ok(s);
    }
    match env {
        Some(v) => v
            .trim()
            .parse()
            .map_err(|_| CliError::schema(format!("{SEED_ENV} must be an unsigned integer, got {v:?}"))),
        None => Ok(DEFAULT_SEED),
    }
}

fn base_report(command: &str, cfg: &Config, seed: Option<u64>) -> Result<Report, CliError> {
    let mut r = match serde_json::to_value(cfg).map_err(|e| CliError::schema(e.to_string()))? {
        Value::Object(m) => m,
        _ => Map::new(),
    };
    r.insert("command".into(), json!(command));
    r.insert("provenance".into(), provenance(seed));
    Ok(r)
}

fn mean_or_zero(v: &Option<VectorInput>, dim: usize, name: &str) -> Result<DVector<f64>, CliError> {
    match v {
        None => Ok(DVector::zeros(dim)),
        Some(v) => {
            let v = v.to_vector(name)?;
            if v.len() != dim {
                return Err(CliError::schema(format!("{name}: expected length {dim}, got {}", v.len())));
            }
            Ok(v)
        }
    }
}

enum Spec {
    Linear(LinearMechanismSpec),
    General(GaussianMechanismSpec),
}

impl Spec {
    fn n(&self) -> usize {
        match self {
            Spec::Linear(s) => s.sigma_xx.dim(),
            Spec::General(s) => s.sigma_xx.dim(),
        }
    }

    fn l(&self) -> usize {
        match self {
            Spec::Linear(s) => s.l(),
            Spec::General(s) => s.l(),
        }
    }

    fn joint(&self, theta: &SymMatrix) -> Result<JointGaussian, CliError> {
        Ok(match self {
            Spec::Linear(s) => mechanism_joint(s, theta)?,
            Spec::General(s) => mechanism_joint(s, theta)?,
        })
    }

    /// The spec as a config section carrying `theta`.
    fn section(&self, theta: &SymMatrix) -> MechanismSection {
        let vec = |v: &DVector<f64>| Some(VectorInput::Entries(v.iter().copied().collect()));
        match self {
            Spec::Linear(s) => MechanismSection {
                mu_x: vec(&s.mu_x),
                mu_z: None,
                sigma_xx: MatrixInput::from_matrix(s.sigma_xx.as_matrix()),
                c: Some(MatrixInput::from_matrix(&s.c)),
                sigma_xz: None,
                sigma_zz: None,
                theta: Some(MatrixInput::from_matrix(theta.as_matrix())),
            },
            Spec::General(s) => MechanismSection {
                mu_x: vec(&s.mu_x),
                mu_z: vec(&s.mu_z),
                sigma_xx: MatrixInput::from_matrix(s.sigma_xx.as_matrix()),
                c: None,
                sigma_xz: Some(MatrixInput::from_matrix(&s.sigma_xz)),
                sigma_zz: Some(MatrixInput::from_matrix(s.sigma_zz.as_matrix())),
                theta: Some(MatrixInput::from_matrix(theta.as_matrix())),
            },
        }
    }
}

fn mechanism_spec(m: &MechanismSection) -> Result<Spec, CliError> {
    let sxx = m.sigma_xx.to_sym("mechanism.sigma_xx")?;
    let n = sxx.dim();
    let mu_x = mean_or_zero(&m.mu_x, n, "mechanism.mu_x")?;
    match (&m.c, &m.sigma_xz, &m.sigma_zz) {
        (Some(c), None, None) => {
            if m.mu_z.is_some() {
                return Err(CliError::schema("mechanism.mu_z is implied by C μ_X for a linear query"));
            }
            Ok(Spec::Linear(LinearMechanismSpec::new(mu_x, sxx, c.to_matrix("mechanism.c")?)?))
        }
        (None, Some(sxz), Some(szz)) => {
            let szz = szz.to_sym("mechanism.sigma_zz")?;
            let mu_z = mean_or_zero(&m.mu_z, szz.dim(), "mechanism.mu_z")?;
            Ok(Spec::General(GaussianMechanismSpec::new(
                mu_x,
                mu_z,
                sxx,
                sxz.to_matrix("mechanism.sigma_xz")?,
                szz,
            )?))
        }
        _ => Err(CliError::schema(
            "mechanism: give either c (linear query) or both sigma_xz and sigma_zz",
        )),
    }
}

fn stable_a(s: &SystemSection) -> Result<DMatrix<f64>, CliError> {
    let a = s.a.to_matrix("system.A")?;
    if a.nrows() != a.ncols() {
        return Err(CliError::schema("system.A must be square"));
    }
    if !is_schur_stable(&a) {
        return Err(Error::NotSchurStable { spectral_radius: spectral_radius(&a) }.into());
    }
    Ok(a)
}

fn system_spec(s: &SystemSection) -> Result<Spec, CliError> {
    let a = stable_a(s)?;
    let sigma = solve_lyapunov(&a, &s.q.to_sym("system.Q")?)?;
    Ok(Spec::Linear(LinearMechanismSpec::centered(sigma, s.c.to_matrix("system.C")?)?))
}

fn lti_system(s: &SystemSection) -> Result<LtiSystem, CliError> {
    let a = stable_a(s)?;
    let theta = s.theta.as_ref().ok_or_else(|| CliError::schema("missing field: system.Theta"))?;
    Ok(LtiSystem::new(a, s.c.to_matrix("system.C")?, s.q.to_sym("system.Q")?, theta.to_sym("system.Theta")?)?)
}

/// Mechanism to design for: `mechanism`, else `system` (stationary prior),
/// else `joint` read as a general query `Z = Y`.
fn design_source(cfg: &Config) -> Result<(Spec, &'static str), CliError> {
    if let Some(m) = &cfg.mechanism {
        return Ok((mechanism_spec(m)?, "mechanism"));
    }
    if let Some(s) = &cfg.system {
        return Ok((system_spec(s)?, "system"));
    }
    if let Some(j) = &cfg.joint {
        let sxx = j.sigma_xx.to_sym("joint.sigma_xx")?;
        let syy = j.sigma_yy.to_sym("joint.sigma_yy")?;
        let mu_x = mean_or_zero(&j.mu_x, sxx.dim(), "joint.mu_x")?;
        let mu_y = mean_or_zero(&j.mu_y, syy.dim(), "joint.mu_y")?;
        let spec = GaussianMechanismSpec::new(mu_x, mu_y, sxx, j.sigma_xy.to_matrix("joint.sigma_xy")?, syy)?;
        return Ok((Spec::General(spec), "joint"));
    }
    Err(CliError::schema("missing section: mechanism, system or joint"))
}

/// Law of `(X, Y)`: `mechanism` with `theta`, else `system` with `Theta`,
/// else `joint`.
pub fn resolve_joint(cfg: &Config) -> Result<(JointGaussian, &'static str), CliError> {
    if let Some(m) = cfg.mechanism.as_ref().filter(|m| m.theta.is_some()) {
        let theta = m.theta.as_ref().expect("filtered").to_sym("mechanism.theta")?;
        return Ok((mechanism_spec(m)?.joint(&theta)?, "mechanism"));
    }
    if let Some(s) = cfg.system.as_ref().filter(|s| s.theta.is_some()) {
        let theta = s.theta.as_ref().expect("filtered").to_sym("system.Theta")?;
        return Ok((system_spec(s)?.joint(&theta)?, "system"));
    }
    if let Some(j) = &cfg.joint {
        let sxx = j.sigma_xx.to_sym("joint.sigma_xx")?;
        let syy = j.sigma_yy.to_sym("joint.sigma_yy")?;
        let mu_x = mean_or_zero(&j.mu_x, sxx.dim(), "joint.mu_x")?;
        let mu_y = mean_or_zero(&j.mu_y, syy.dim(), "joint.mu_y")?;
        let joint = JointGaussian::new(mu_x, mu_y, sxx, j.sigma_xy.to_matrix("joint.sigma_xy")?, syy)?;
        return Ok((joint, "joint"));
    }
    Err(CliError::schema(
        "missing section: joint (or mechanism.theta / system.Theta)",
    ))
}

pub fn pml_eval(cfg: &Config, y: Option<DVector<f64>>) -> Result<Report, CliError> {
    let budget = cfg.budget()?;
    let (j, source) = resolve_joint(cfg)?;
    let y = match (y, &cfg.y) {
        (Some(y), _) => Some(y),
        (None, Some(v)) => Some(v.to_vector("y")?),
        (None, None) => None,
    };
    let b = PrivacyBudget::for_joint(budget.epsilon, budget.delta, &j)?;
    let comps = pml_components(&j)?;
    let mut res = Map::new();
    res.insert("source".into(), json!(source));
    res.insert("n".into(), json!(j.n()));
    res.insert("m".into(), json!(j.m()));
    res.insert("l".into(), json!(j.l()));
    res.insert("gamma".into(), sym(&comps.gamma)?);
    res.insert("psi".into(), sym(&comps.psi)?);
    res.insert("sigma_xx".into(), sym(j.sigma_xx())?);
    res.insert("min_leakage".into(), num(comps.min_leakage())?);
    res.insert("half_quantile".into(), num(b.half_quantile())?);
    res.insert("necessary_condition".into(), json!(necessary_condition(&b)));
    res.insert(
        "kappa".into(),
        match kappa(&b) {
            Ok(k) => num(k)?,
            Err(_) => Value::Null,
        },
    );
    res.insert("exact_prob".into(), num(exact_privacy_prob(&j, b.epsilon)?)?);
    res.insert("pass".into(), json!(check_pml_privacy(&j, &b)?));
    res.insert("tightest_epsilon".into(), num(tightest_epsilon_for_joint(&j, b.delta)?)?);
    if let Some(y) = y {
        if y.len() != j.m() {
            return Err(CliError::schema(format!("y: expected length {}, got {}", j.m(), y.len())));
        }
        res.insert("y".into(), vector(&y)?);
        res.insert("xi".into(), num(comps.xi(&y)?)?);
        res.insert("leakage".into(), num(comps.leakage(&y)?)?);
    }
    let mut r = base_report("pml-eval", cfg, None)?;
    r.insert("result".into(), Value::Object(res));
    Ok(r)
}

pub fn design(cfg: &Config, policy: PolicyKind, jitter: Option<f64>) -> Result<Report, CliError> {
    let budget = cfg.budget()?;
    let (spec, source) = design_source(cfg)?;
    let variant = match policy {
        PolicyKind::Boundary => ThetaVariant::Boundary,
        PolicyKind::ScaledIdentity => ThetaVariant::ScaledIdentity,
    };
    let policy = ThetaPolicy::new(variant, jitter.unwrap_or(pmlkit::mechanism::DEFAULT_JITTER))?;
    let b = PrivacyBudget::new(budget.epsilon, budget.delta, spec.l(), spec.n())?;
    let (theta, lower, general) = match &spec {
        Spec::Linear(s) => {
            let theta = design_theta_linear(s, &b, &policy)?;
            (theta, theta_lower_bound_linear(s, kappa(&b)?), s.to_general())
        }
        Spec::General(s) => {
            let theta = design_theta_general(s, &b, &policy)?;
            (theta, theta_lower_bound_general(s, kappa(&b)?)?, s.clone())
        }
    };
    let joint = spec.joint(&theta)?;
    let mut res = Map::new();
    res.insert("source".into(), json!(source));
    res.insert("policy".into(), json!(match variant {
        ThetaVariant::Boundary => "boundary",
        ThetaVariant::ScaledIdentity => "scaled-identity",
    }));
    res.insert("jitter".into(), num(policy.jitter)?);
    res.insert("n".into(), json!(spec.n()));
    res.insert("l".into(), json!(spec.l()));
    res.insert("half_quantile".into(), num(b.half_quantile())?);
    res.insert("kappa".into(), num(kappa(&b)?)?);
    res.insert("sigma_xx".into(), sym(&general.sigma_xx)?);
    res.insert("theta".into(), sym(&theta)?);
    res.insert("theta_lower_bound".into(), sym(&lower)?);
    res.insert("verify_lmi".into(), json!(verify_lmi(&general, &theta, &b)?));
    res.insert("check_pml_privacy".into(), json!(check_pml_privacy(&joint, &b)?));
    res.insert("tightest_epsilon".into(), num(tightest_epsilon_for_joint(&joint, b.delta)?)?);

    let mut echo = cfg.clone();
    echo.joint = None;
    echo.system = None;
    echo.mechanism = Some(spec.section(&theta));
    let mut r = base_report("design", &echo, None)?;
    r.insert("result".into(), Value::Object(res));
    Ok(r)
}

fn need<T: Copy>(v: Option<T>, name: &str) -> Result<T, CliError> {
    v.ok_or_else(|| CliError::schema(format!("missing field: {name}")))
}

pub fn convert(cfg: &Config, from: BudgetKind, to: BudgetKind) -> Result<Report, CliError> {
    if from == to {
        return Err(CliError::schema(format!("--from and --to are both {}", from.name())));
    }
    let p = cfg.convert.clone().unwrap_or_default();
    let sigma = p.sigma_xx.as_ref().map(|s| s.to_sym("convert.sigma_xx")).transpose()?;
    let l = p.l.unwrap_or(1);
    let n = p.n.or(sigma.as_ref().map(SymMatrix::dim)).unwrap_or(1);
    let target_delta = || -> Result<f64, CliError> {
        p.delta
            .or(cfg.budget.as_ref().map(|b| b.delta))
            .ok_or_else(|| CliError::schema("missing field: convert.delta (or budget.delta)"))
    };
    let need_sigma = || sigma.clone().ok_or_else(|| CliError::schema("missing field: convert.sigma_xx"));
    let zeta = p.zeta.unwrap_or(1.0);

    let mut res = Map::new();
    res.insert("from".into(), json!(from.name()));
    res.insert("to".into(), json!(to.name()));

    // Every route goes through a PML budget.
    let pml = match from {
        BudgetKind::Pml => {
            let budget = cfg.budget()?;
            PrivacyBudget::new(budget.epsilon, budget.delta, l, n)?
        }
        BudgetKind::Dp => {
            let dp = DpBudget::new(need(p.epsilon_dp, "convert.epsilon_dp")?, need(p.delta_dp, "convert.delta_dp")?, zeta)?;
            let s = need_sigma()?;
            let delta = target_delta()?;
            let eps = dp_to_pml(&dp, &s, l, delta)?;
            let r = phi_inverse(dp.epsilon_dp, dp.delta_dp)?;
            res.insert("phi_inverse".into(), num(r)?);
            res.insert(
                "inequality".into(),
                json!("n log κ ≤ −log det(I + (φ⁻¹/ζ)² Σ_XX)"),
            );
            res.insert(
                "log_det_term".into(),
                num(logdet_psd(&s.scaled((r / zeta).powi(2)).shifted(1.0))?)?,
            );
            PrivacyBudget::new(eps, delta, l, n)?
        }
        BudgetKind::Mi => {
            let mi = MiBudget::new(need(p.epsilon_mi, "convert.epsilon_mi")?)?;
            let delta = target_delta()?;
            res.insert("inequality".into(), json!("2ε_MI + ½F⁻¹_{χ²_l}(1−δ) ≤ ε"));
            PrivacyBudget::new(mi_to_pml(&mi, l, n, delta)?, delta, l, n)?
        }
    };
    res.insert("l".into(), json!(l));
    res.insert("n".into(), json!(n));
    res.insert("half_quantile".into(), num(half_chi2_quantile(pml.delta, l))?);
    let mut pml_json = Map::new();
    pml_json.insert("epsilon".into(), num(pml.epsilon)?);
    pml_json.insert("delta".into(), num(pml.delta)?);
    if to == BudgetKind::Pml {
        res.insert("pml".into(), Value::Object(pml_json));
    } else {
        if from != BudgetKind::Pml {
            res.insert("via_pml".into(), Value::Object(pml_json));
        }
        let k = kappa(&pml)?;
        res.insert("kappa".into(), num(k)?);
        match to {
            BudgetKind::Mi => {
                let e = pml_to_mi(&pml)?;
                res.insert("inequality_mi".into(), json!("n log κ ≥ −2ε_MI"));
                res.insert("n_log_kappa".into(), num(n as f64 * k.ln())?);
                res.insert("mi".into(), json!({ "epsilon_mi": num(e)? }));
            }
            BudgetKind::Dp => {
                let s = need_sigma()?;
                let delta_dp = need(p.delta_dp, "convert.delta_dp")?;
                let e = pml_to_dp(&pml, &s, zeta, delta_dp)?;
                res.insert("inequality_dp".into(), json!("1/(κⁿ λ_min(Σ_XX)) ≤ (φ⁻¹_{ε_DP}(δ_DP)/ζ)²"));
                res.insert("required_ratio".into(), num(pml_required_ratio(&pml, &s, zeta)?)?);
                res.insert(
                    "dp".into(),
                    json!({ "epsilon_dp": num(e)?, "delta_dp": num(delta_dp)?, "zeta": num(zeta)? }),
                );
            }
            BudgetKind::Pml => unreachable!(),
        }
    }
    let mut r = base_report("convert", cfg, None)?;
    r.insert("result".into(), Value::Object(res));
    Ok(r)
}

pub fn kalman(cfg: &Config, seed: u64, csv: Option<&Path>) -> Result<Report, CliError> {
    let s = cfg.system.as_ref().ok_or_else(|| CliError::schema("missing section: system"))?;
    let sys = lti_system(s)?;
    let delta = cfg.budget.as_ref().map_or(DEFAULT_KALMAN_DELTA, |b| b.delta);
    let ss = steady_state_covariance(&sys)?;
    let prior = solve_lyapunov(sys.a(), sys.q())?;
    let eps_star = tightest_epsilon(&sys, delta)?;
    let b = PrivacyBudget::new(eps_star, delta, sys.l(), sys.n())?;
    let logdet_p = logdet_psd(&ss.p)?;
    let trace_p = ss.p.trace();
    let bound_logdet = pml_error_lower_bound_logdet(&b, sys.q(), sys.m())?;
    let bound_trace = pml_error_lower_bound_trace(&b, sys.q(), sys.m(), sys.n())?;

    let mut res = Map::new();
    res.insert("n".into(), json!(sys.n()));
    res.insert("m".into(), json!(sys.m()));
    res.insert("l".into(), json!(sys.l()));
    res.insert("sigma_xx".into(), sym(&prior)?);
    res.insert("p".into(), sym(&ss.p)?);
    res.insert("p_minus".into(), sym(&ss.p_minus)?);
    res.insert("gain".into(), matrix(&ss.gain)?);
    res.insert("iterations".into(), json!(ss.iterations));
    res.insert("dare_residual".into(), num(ss.dare_residual)?);
    res.insert("delta".into(), num(delta)?);
    res.insert("tightest_epsilon".into(), num(eps_star)?);
    res.insert("log_det_p".into(), num(logdet_p)?);
    res.insert("trace_p".into(), num(trace_p)?);
    res.insert("bound_log_det".into(), num(bound_logdet)?);
    res.insert("bound_trace".into(), num(bound_trace)?);
    res.insert("margin_log_det".into(), num(logdet_p - bound_logdet)?);
    res.insert("margin_trace".into(), num(trace_p - bound_trace)?);
    if let Some(budget) = &cfg.budget {
        res.insert("private_at_budget".into(), json!(eps_star <= budget.epsilon));
    }

    let mut seed_used = None;
    if let Some(path) = csv {
        let horizon = cfg.sim_section().horizon.unwrap_or(DEFAULT_HORIZON);
        let traj = simulate_and_filter(&sys, horizon, RngStream::new(seed, 0))?;
        let est = traj.estimates.as_ref().expect("filtered");
        let covs = traj.covariances.as_ref().expect("filtered");
        let (n, m) = (sys.n(), sys.m());
        let mut rows = DMatrix::zeros(horizon, 2 * n + m + 1);
        for k in 0..horizon {
            let row: Vec<f64> = traj
                .states
                .row(k)
                .iter()
                .chain(traj.outputs.row(k).iter())
                .chain(est.row(k).iter())
                .copied()
                .chain(std::iter::once(covs[k].trace()))
                .collect();
            rows.set_row(k, &DMatrix::from_row_slice(1, row.len(), &row).row(0));
        }
        let names = |p: &str, d: usize| -> Vec<String> {
            if d == 1 {
                vec![p.to_string()]
            } else {
                (1..=d).map(|i| format!("{p}{i}")).collect()
            }
        };
        let mut header = names("x", n);
        header.extend(names("y", m));
        header.extend(names("xhat", n));
        header.push("p".into());
        write_csv_file(path, &header, &rows)?;
        res.insert("csv_rows".into(), json!(horizon));
        seed_used = Some(seed);
    }
    let mut r = base_report("kalman", cfg, seed_used)?;
    r.insert("result".into(), Value::Object(res));
    Ok(r)
}

fn write_csv_file(path: &Path, header: &[String], rows: &DMatrix<f64>) -> Result<(), CliError> {
    let f = File::create(path).map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
    write_csv(BufWriter::new(f), header, rows).map_err(|e| CliError::io(format!("{}: {e}", path.display())))
}

pub fn aggregate(cfg: &Config, seed: u64, out: Option<&Path>) -> Result<Report, CliError> {
    let net_cfg = cfg.network.as_ref().ok_or_else(|| CliError::schema("missing section: network"))?;
    let mut subs = Vec::with_capacity(net_cfg.subsystems.len());
    let mut per = Vec::with_capacity(net_cfg.subsystems.len());
    for (i, (s, w)) in net_cfg.subsystems.iter().zip(&net_cfg.weights).enumerate() {
        let name = |f: &str| format!("network.subsystems[{i}].{f}");
        let a = s.a.to_matrix(&name("A"))?;
        if a.nrows() != a.ncols() {
            return Err(CliError::schema(format!("{} must be square", name("A"))));
        }
        if !is_schur_stable(&a) {
            return Err(Error::NotSchurStable { spectral_radius: spectral_radius(&a) }.into());
        }
        let c = s.c.to_matrix(&name("C"))?;
        let b = PrivacyBudget::new(s.epsilon, s.delta, numerical_rank(&c), a.nrows())?;
        let sub = Subsystem::new(a, c, s.q.to_sym(&name("Q"))?, w.to_matrix(&format!("network.weights[{i}]"))?, b)?;
        let (theta, designed) = match &s.theta {
            Some(t) => (t.to_sym(&name("Theta"))?, false),
            None => (design_subsystem_noise(&sub)?, true),
        };
        let prior = sub.prior()?;
        per.push(json!({
            "prior": sym(&prior)?,
            "kappa": num(kappa(&sub.budget)?)?,
            "l": sub.budget.l,
            "epsilon": num(s.epsilon)?,
            "delta": num(s.delta)?,
            "theta": sym(&theta)?,
            "designed": designed,
        }));
        subs.push(sub.with_theta(theta)?);
    }
    let net = AggregationNetwork::new(subs)?;
    let mut res = Map::new();
    res.insert("subsystems".into(), Value::Array(per));
    res.insert("output_dim".into(), json!(net.output_dim()));
    res.insert("accuracy_metric".into(), num(accuracy_metric(&net)?)?);

    let mut seed_used = None;
    if let Some(sim) = &cfg.sim {
        let horizon = sim.horizon.unwrap_or(DEFAULT_HORIZON);
        let trace = simulate_aggregation(&net, horizon, RngStream::new(seed, 0))?;
        res.insert("horizon".into(), json!(horizon));
        res.insert("error_variance".into(), vector(&trace.error_variance())?);
        if let Some(dir) = out {
            fs::create_dir_all(dir).map_err(|e| CliError::io(format!("{}: {e}", dir.display())))?;
            let q = net.output_dim();
            let rows = DMatrix::from_fn(horizon, 2 * q, |k, j| {
                if j < q {
                    trace.true_agg[(k, j)]
                } else {
                    trace.private_agg[(k, j - q)]
                }
            });
            let header: Vec<String> = if q == 1 {
                vec!["true".into(), "private".into()]
            } else {
                (1..=q).map(|i| format!("true{i}")).chain((1..=q).map(|i| format!("private{i}"))).collect()
            };
            write_csv_file(&dir.join("aggregate.csv"), &header, &rows)?;
            res.insert("csv".into(), json!("aggregate.csv"));
        }
        seed_used = Some(seed);
    } else if out.is_some() {
        return Err(CliError::schema("--out needs a sim section"));
    }
    let mut r = base_report("aggregate", cfg, seed_used)?;
    r.insert("result".into(), Value::Object(res));
    Ok(r)
}

pub fn verify(cfg: &Config, seed: u64, samples: Option<usize>) -> Result<Report, CliError> {
    let budget = cfg.budget()?;
    let sim = cfg.sim.clone().ok_or_else(|| CliError::schema("missing section: sim"))?;
    let SimSection { samples: cfg_samples, .. } = sim;
    let (j, source) = resolve_joint(cfg)?;
    let n_samples = samples.or(cfg_samples).unwrap_or(DEFAULT_SAMPLES);
    let mc = empirical_violation_rate(&j, budget.epsilon, n_samples, RngStream::new(seed, 0))?;
    let delta = budget.delta;
    let delta_tol = 4.0 * (delta * (1.0 - delta) / n_samples as f64).sqrt();
    let pass_delta = mc.violation_rate <= delta + delta_tol;
    let pass_ks = mc.ks_statistic < KS_THRESHOLD;

    let mut res = Map::new();
    res.insert("source".into(), json!(source));
    res.insert("l".into(), json!(j.l()));
    res.insert("samples".into(), json!(n_samples));
    res.insert("violation_rate".into(), num(mc.violation_rate)?);
    res.insert("exact_prob".into(), num(mc.exact_prob)?);
    res.insert("exact_violation_prob".into(), num(1.0 - mc.exact_prob)?);
    res.insert("matches_exact".into(), json!(mc.within_tolerance()));
    res.insert("exact_tolerance".into(), num(mc.tolerance())?);
    res.insert("delta_tolerance".into(), num(delta_tol)?);
    res.insert("pass_delta".into(), json!(pass_delta));
    res.insert("ks_statistic".into(), num(mc.ks_statistic)?);
    res.insert("ks_threshold".into(), num(KS_THRESHOLD)?);
    res.insert("pass_ks".into(), json!(pass_ks));
    res.insert("pass".into(), json!(pass_delta && pass_ks));
    let mut r = base_report("verify", cfg, Some(seed))?;
    r.insert("result".into(), Value::Object(res));
    Ok(r)
}
