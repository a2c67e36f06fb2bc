use std::path::Path;

use log::info;
use rayon::prelude::*;
use serde_json::{json, Value};

use perispec_core::kpp::{threshold_scan, KppOptions, Nonlinearity, Verdict, TOL_UNIQUE};
use perispec_core::output::{
    fmt_real, write_csv, write_curve, write_kpp_scan, write_spectrum, write_trajectory,
};
use perispec_core::solver::{
    pe_sufficiency, upper_bound_lambda_p, LambdaPResult, SolverOptions, UPPER_BOUND_TOL,
};
use perispec_core::spectrum::SpectrumOptions;
use perispec_core::weights::ConditionReport;
use perispec_core::{
    assemble, build_grid, make_kernel, principal_spectrum_point, solve_lambda_p, Boundary, Check,
    DispersalOperator, RootStatus, SpectrumReport, Weight,
};

use crate::config::{ExperimentConfig, Task, WeightSource};
use crate::report::{Outcome, Report};
use crate::{validate, CliError};

/// Assembled operator and weight for a config.
pub struct Setup {
    pub op: DispersalOperator,
    pub weight: Weight,
}

pub fn build_setup(config: &ExperimentConfig) -> Result<Setup, CliError> {
    let kernel = make_kernel(config.profile, config.radius, config.lengths.len())
        .map_err(CliError::setup)?;
    let grid =
        build_grid(config.boundary, &config.lengths, config.n_per_axis).map_err(CliError::setup)?;
    let op = assemble(&kernel, &grid).map_err(CliError::setup)?;
    let weight = match &config.weight {
        WeightSource::Expr(e) => Weight::parse(e, config.period),
        WeightSource::Csv(p) => Weight::from_csv(p, config.period),
    }
    .map_err(CliError::setup)?;
    weight.compatible_with(op.grid()).map_err(CliError::setup)?;
    Ok(Setup { op, weight })
}

pub fn spectrum_options(config: &ExperimentConfig) -> SpectrumOptions {
    let n = &config.numerics;
    SpectrumOptions {
        n_steps: n.n_steps,
        n_time: n.n_time,
        max_iter: n.max_iter,
        rel_tol: n.rel_tol,
        cross_validate: n.cross_validate,
        lyapunov_periods: n.lyapunov_periods,
        s_conditions: n.s_conditions,
    }
}

pub fn solver_options(config: &ExperimentConfig) -> SolverOptions {
    let n = &config.numerics;
    SolverOptions {
        n_steps: n.n_steps,
        n_time: n.n_time,
        tol_root: n.tol_root,
        lambda_cap: n.lambda_cap,
        ..SolverOptions::default()
    }
}

pub fn execute(config: &ExperimentConfig, out: &Path) -> Result<Report, CliError> {
    let setup = build_setup(config)?;
    info!(
        "task {} on {} nodes ({} boundary)",
        config.task,
        setup.op.len(),
        config.boundary
    );
    let mut report = Report::new(config);
    match config.task {
        Task::Spectrum => spectrum(config, &setup, out, &mut report),
        Task::LambdaP => lambda_p(config, &setup, out, &mut report),
        Task::UpperBound => upper_bound(config, &setup, out, &mut report),
        Task::KppScan => kpp_scan(config, &setup, out, &mut report),
        Task::Validate => validate::run(config, &setup, out, &mut report),
    }?;
    Ok(report)
}

fn spectrum_json(r: &SpectrumReport) -> Value {
    json!({
        "lambda": r.lambda,
        "mu_n": r.mu_n,
        "method": r.method,
        "residual": r.residual,
        "h_hat_min": r.h_hat_min,
        "h_hat_max": r.h_hat_max,
        "gap": r.gap(),
        "discretization_floor": r.discretization_floor,
        "is_principal_eigenvalue": r.is_principal_eigenvalue,
        "s_conditions": r.s_conditions,
        "lyapunov_mu": r.lyapunov_mu,
        "localization_width": r.localization_width,
        "iterations": r.iterations,
        "n_steps": r.n_steps,
    })
}

fn spectrum(
    config: &ExperimentConfig,
    s: &Setup,
    out: &Path,
    report: &mut Report,
) -> Result<(), CliError> {
    let opts = spectrum_options(config);
    let rows: Vec<SpectrumReport> = config
        .lambdas
        .par_iter()
        .map(|&l| principal_spectrum_point(&s.op, &s.weight, l, &opts))
        .collect::<perispec_core::Result<_>>()
        .map_err(CliError::compute)?;

    write_spectrum(&out.join("spectrum.csv"), &rows).map_err(CliError::compute)?;
    let eigen_rows: Vec<Vec<String>> = rows
        .iter()
        .flat_map(|r| {
            r.iterate
                .iter()
                .enumerate()
                .map(move |(j, v)| vec![fmt_real(r.lambda), j.to_string(), fmt_real(*v)])
        })
        .collect();
    write_csv(
        &out.join("eigenfunctions.csv"),
        &["lambda", "node", "value"],
        &eigen_rows,
    )
    .map_err(CliError::compute)?;
    report.artifacts = vec!["spectrum.csv".into(), "eigenfunctions.csv".into()];

    for r in &rows {
        report.pass_if(
            format!(
                "λ = {}: principal spectrum point dominates the essential supremum (μ ≥ ĥ_max)",
                r.lambda
            ),
            r.mu_n >= r.h_hat_max - 1e-8,
            format!("μ = {:.12e}, ĥ_max = {:.12e}", r.mu_n, r.h_hat_max),
        );
        report.check(
            format!(
                "λ = {}: μ is a principal eigenvalue (resolved gap above ĥ_max)",
                r.lambda
            ),
            Outcome::Info,
            format!(
                "{} (gap {:.3e}, residual {:.1e})",
                r.is_principal_eigenvalue,
                r.gap(),
                r.residual
            ),
        );
        if r.lambda == 0.0 && config.boundary != Boundary::DirichletType {
            report.pass_if(
                "zero point under conservative dispersal: μ(0) = 0 with constant eigenfunction",
                r.mu_n.abs() < 1e-10 && r.residual < 1e-10,
                format!("|μ(0)| = {:.2e}, residual {:.2e}", r.mu_n.abs(), r.residual),
            );
        }
        if r.lambda == 0.0 && config.boundary == Boundary::DirichletType {
            report.pass_if(
                "hostile exterior: μ(0) < 0",
                r.mu_n < 0.0,
                format!("μ(0) = {:.12e}", r.mu_n),
            );
        }
    }
    report.results = json!({ "points": rows.iter().map(spectrum_json).collect::<Vec<_>>() });
    Ok(())
}

fn condition_statement(c: &ConditionReport) -> String {
    match c.boundary {
        Boundary::DirichletType => {
            "existence criterion for hostile exteriors: P(m) > 0".to_string()
        }
        b => format!("existence criterion for {b} boundaries: P(m) > 0 and ∫∫m < 0"),
    }
}

/// Expected solver status from the existence criterion, when it is decided.
fn predicted_status(r: &LambdaPResult) -> Option<&'static [RootStatus]> {
    match r.condition_report.holds {
        Check::Yes => Some(&[RootStatus::UniqueRoot]),
        Check::No => Some(&[RootStatus::NoPositiveRoot, RootStatus::AllPositiveRoots]),
        _ => None,
    }
}

fn root_json(r: &LambdaPResult) -> Value {
    json!({
        "status": r.status,
        "lambda_p": r.lambda_p,
        "mu_at_root": r.mu_at_root,
        "bracket": r.bracket,
        "conditions": r.condition_report,
        "curve_points": r.curve.len(),
        "evidence": r.evidence,
    })
}

fn root_checks(label: &str, r: &LambdaPResult, tol_root: f64, report: &mut Report) {
    report.check(
        format!("{label}{}", condition_statement(&r.condition_report)),
        Outcome::Info,
        format!(
            "{} (P(m) = {:.6e}, ∫∫m = {:.6e})",
            r.condition_report.holds, r.condition_report.p_value, r.condition_report.integral
        ),
    );
    match predicted_status(r) {
        Some(expected) => report.pass_if(
            format!("{label}solver status matches the existence criterion (root exists iff criterion holds)"),
            expected.contains(&r.status),
            format!("status {}", r.status),
        ),
        None => report.check(
            format!("{label}solver status matches the existence criterion"),
            Outcome::Skip,
            format!("criterion is marginal; status {}", r.status),
        ),
    }
    if let (RootStatus::UniqueRoot, Some(mu)) = (r.status, r.mu_at_root) {
        report.pass_if(
            format!("{label}root residual |μ(λᵖ)| < tol_root"),
            mu.abs() < tol_root,
            format!("|μ(λᵖ)| = {:.2e}", mu.abs()),
        );
        let lambda_min = if r.condition_report.boundary == Boundary::DirichletType {
            0.0
        } else {
            1e-3
        };
        let changes = r.sign_changes(lambda_min, tol_root);
        report.pass_if(
            format!("{label}uniqueness: one sign change of the sampled μ(λ) curve"),
            changes == 1,
            format!("sign changes: {changes} over {} samples", r.curve.len()),
        );
    }
}

fn lambda_p(
    config: &ExperimentConfig,
    s: &Setup,
    out: &Path,
    report: &mut Report,
) -> Result<(), CliError> {
    let opts = solver_options(config);
    let r = solve_lambda_p(&s.op, &s.weight, &opts).map_err(CliError::compute)?;
    write_curve(&out.join("curve.csv"), &r.curve).map_err(CliError::compute)?;
    report.artifacts = vec!["curve.csv".into()];
    root_checks("", &r, opts.tol_root, report);
    let mut results = root_json(&r);
    if r.status == RootStatus::UniqueRoot {
        let pe = pe_sufficiency(&s.op, &s.weight, &r, &opts).map_err(CliError::compute)?;
        report.check(
            "λᵖ is a principal eigenvalue (sufficient conditions S1 to S3, else resolved gap)",
            Outcome::Info,
            format!(
                "{} (basis: {})",
                pe.is_principal_eigenvalue,
                pe.basis
                    .map_or("none".to_string(), |b| serde_json::to_value(b)
                        .unwrap()
                        .as_str()
                        .unwrap()
                        .to_string())
            ),
        );
        results["principal_eigenvalue"] = json!(pe);
    }
    report.results = results;
    Ok(())
}

fn upper_bound(
    config: &ExperimentConfig,
    s: &Setup,
    out: &Path,
    report: &mut Report,
) -> Result<(), CliError> {
    let opts = solver_options(config);
    let u = upper_bound_lambda_p(&s.op, &s.weight, &opts).map_err(CliError::compute)?;
    write_curve(&out.join("curve.csv"), &u.lambda_p.curve).map_err(CliError::compute)?;
    write_curve(&out.join("curve_averaged.csv"), &u.averaged.curve).map_err(CliError::compute)?;
    report.artifacts = vec!["curve.csv".into(), "curve_averaged.csv".into()];
    root_checks("m: ", &u.lambda_p, opts.tol_root, report);
    report.check(
        "time-averaged weight m̂ admits a positive root",
        Outcome::Info,
        u.averaged_root_expected.to_string(),
    );
    let statement = "time averaging raises the root: λᵖ(m) ≤ λᵖ(m̂) + 1e−8";
    match u.bound_holds {
        Some(ok) => report.pass_if(
            statement,
            ok,
            format!(
                "λᵖ(m) = {:.12e}, λᵖ(m̂) = {:.12e}",
                u.lambda_p.lambda_p.unwrap_or(f64::NAN),
                u.lambda_p_avg.unwrap_or(f64::NAN)
            ),
        ),
        None => report.check(
            statement,
            Outcome::Skip,
            "needs unique roots for both m and m̂",
        ),
    }
    report.results = json!({
        "original": root_json(&u.lambda_p),
        "averaged": root_json(&u.averaged),
        "bound_holds": u.bound_holds,
        "tolerance": UPPER_BOUND_TOL,
    });
    Ok(())
}

fn kpp_scan(
    config: &ExperimentConfig,
    s: &Setup,
    out: &Path,
    report: &mut Report,
) -> Result<(), CliError> {
    let k = &config.kpp;
    let nl = Nonlinearity::new(k.family, s.weight.clone(), k.c, k.d, s.op.grid())
        .map_err(CliError::setup)?;
    let kpp_opts = KppOptions {
        n_steps: config.numerics.n_steps,
        max_periods: k.max_periods,
        tol_fix: k.tol_fix,
        tol_ext: k.tol_ext,
    };
    let scan = threshold_scan(
        &s.op,
        &nl,
        &config.lambdas,
        &kpp_opts,
        &solver_options(config),
    )
    .map_err(CliError::compute)?;
    write_kpp_scan(&out.join("kpp_scan.csv"), &scan.rows).map_err(CliError::compute)?;
    report.artifacts = vec!["kpp_scan.csv".into()];
    if let Some(row) = scan
        .rows
        .iter()
        .rev()
        .find(|r| r.verdict == Verdict::Persistence)
    {
        if let Some(traj) = &row.u_star {
            write_trajectory(&out.join("u_star.csv"), traj).map_err(CliError::compute)?;
            report.artifacts.push("u_star.csv".into());
        }
    }

    report.pass_if(
        "verdicts are monotone in λ (no extinction above a persistence value)",
        scan.monotone,
        "",
    );
    let statement = "threshold: extinction below λᵖ of the linearization, persistence above";
    match scan.bracket_contains_lambda_p {
        Some(ok) => report.pass_if(
            statement,
            ok,
            format!(
                "scan bracket {:?}, λᵖ = {:.12e}",
                scan.bracket.unwrap(),
                scan.lambda_p.lambda_p.unwrap_or(f64::NAN)
            ),
        ),
        None => report.check(
            statement,
            Outcome::Skip,
            format!(
                "no extinction/persistence transition or no root (status {})",
                scan.lambda_p.status
            ),
        ),
    }
    for r in scan
        .rows
        .iter()
        .filter(|r| r.verdict == Verdict::Persistence)
    {
        report.pass_if(
            format!(
                "λ = {}: positive periodic solution is unique (two starting levels agree)",
                r.lambda
            ),
            r.second_start_distance.is_some_and(|d| d < TOL_UNIQUE),
            format!(
                "distance {}",
                r.second_start_distance
                    .map_or("n/a".to_string(), |d| format!("{d:.2e}"))
            ),
        );
    }

    let rows: Vec<Value> = scan
        .rows
        .iter()
        .map(|r| {
            json!({
                "lambda": r.lambda,
                "verdict": r.verdict,
                "poincare_residual": r.poincare_residual,
                "periods_used": r.periods_used,
                "min_u_star": r.min_of_u_star,
                "final_norm": r.final_norm,
                "second_start_distance": r.second_start_distance,
                "n_steps": r.n_steps,
            })
        })
        .collect();
    report.results = json!({
        "family": k.family.to_string(),
        "c": k.c,
        "d": k.d,
        "u_max": nl.u_max(),
        "rows": rows,
        "bracket": scan.bracket,
        "linearization": root_json(&scan.lambda_p),
        "bracket_contains_lambda_p": scan.bracket_contains_lambda_p,
        "monotone": scan.monotone,
    });
    Ok(())
}
