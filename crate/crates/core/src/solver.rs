//! The positive root `λᵖ` of `μ(λ) = 0` for the weighted problem.
//!
//! Dirichlet-type problems have `μ(0) < 0` and the root is bracketed by
//! doubling `λ`. Neumann-type and periodic problems have the trivial root
//! `μ(0) = 0`; the search starts at `λ = ε` and first locates the negative
//! dip before bracketing the upward crossing. Two certificates end a search
//! early when no root can exist below `λ_cap`:
//!
//! * comparison: `μ(λ) ≤ μ(λ_k) + (λ − λ_k)·P(m)/T` for `λ ≥ λ_k`, so the
//!   curve stays negative once it is negative and `P(m) ≤ 0`;
//! * convexity: with `μ(0) = 0` and `μ(ε) > 0` every chord from the origin
//!   has positive slope, so the curve stays positive.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::Boundary;
use crate::operator::DispersalOperator;
use crate::spectrum::{
    check_s_conditions, estimate_mu, principal_spectrum_point, SConditions, SpectrumOptions,
};
use crate::weights::{check_conditions, ConditionReport, Weight};
use crate::Check;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RootStatus {
    UniqueRoot,
    NoPositiveRoot,
    /// `m = m(t)` with zero mean under Neumann-type or periodic boundaries:
    /// `μ ≡ 0`.
    AllPositiveRoots,
    Marginal,
}

impl std::fmt::Display for RootStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RootStatus::UniqueRoot => "unique_root",
            RootStatus::NoPositiveRoot => "no_positive_root",
            RootStatus::AllPositiveRoots => "all_positive_roots",
            RootStatus::Marginal => "marginal",
        })
    }
}

#[derive(Clone, Debug)]
pub struct SolverOptions {
    /// Fixed RK4 steps per period; `None` follows the default rule at each λ.
    pub n_steps: Option<usize>,
    pub n_time: usize,
    pub tol_root: f64,
    pub lambda_cap: f64,
    /// Lower end of the search for Neumann-type and periodic boundaries.
    pub eps: f64,
    pub max_refine: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            n_steps: None,
            n_time: 64,
            tol_root: 1e-8,
            lambda_cap: 1e6,
            eps: 1e-3,
            max_refine: 200,
        }
    }
}

impl SolverOptions {
    fn spectrum(&self) -> SpectrumOptions {
        SpectrumOptions {
            n_steps: self.n_steps,
            n_time: self.n_time,
            ..SpectrumOptions::fast()
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct LambdaPResult {
    pub status: RootStatus,
    pub lambda_p: Option<f64>,
    /// `μ(λᵖ)`, the root residual.
    pub mu_at_root: Option<f64>,
    /// Narrowest sampled pair with `μ < −tol_root` and `μ > tol_root`.
    pub bracket: Option<[f64; 2]>,
    /// Sampled `(λ, μ(λ))`, sorted by λ.
    pub curve: Vec<(f64, f64)>,
    pub condition_report: ConditionReport,
    pub evidence: Vec<String>,
}

impl LambdaPResult {
    /// Sign changes of the sampled curve strictly above `lambda_min`, ignoring
    /// samples with `|μ| ≤ tol`.
    pub fn sign_changes(&self, lambda_min: f64, tol: f64) -> usize {
        let signs: Vec<bool> = self
            .curve
            .iter()
            .filter(|(l, m)| *l > lambda_min && m.abs() > tol)
            .map(|(_, m)| *m > 0.0)
            .collect();
        signs.windows(2).filter(|w| w[0] != w[1]).count()
    }
}

struct Curve<'a> {
    op: &'a DispersalOperator,
    weight: &'a Weight,
    opts: SpectrumOptions,
    points: Vec<(f64, f64)>,
}

impl Curve<'_> {
    fn mu(&mut self, lambda: f64) -> Result<f64> {
        let mu = estimate_mu(self.op, self.weight, lambda, &self.opts)?.mu;
        self.points.push((lambda, mu));
        Ok(mu)
    }

    fn into_sorted(mut self) -> Vec<(f64, f64)> {
        self.points.sort_by(|a, b| a.0.total_cmp(&b.0));
        self.points.dedup_by(|a, b| a.0 == b.0);
        self.points
    }
}

pub fn solve_lambda_p(
    op: &DispersalOperator,
    weight: &Weight,
    opts: &SolverOptions,
) -> Result<LambdaPResult> {
    if !(opts.tol_root > 0.0 && opts.eps > 0.0 && opts.lambda_cap > opts.eps) {
        return Err(Error::InvalidParameter(
            "solver needs tol_root > 0 and 0 < eps < lambda_cap".to_string(),
        ));
    }
    let grid = op.grid();
    let boundary = grid.boundary();
    let conditions = check_conditions(weight, boundary, grid, opts.n_time)?;
    let mut curve = Curve {
        op,
        weight,
        opts: opts.spectrum(),
        points: Vec::new(),
    };
    let mut evidence = Vec::new();
    let finish = |status, root: Option<(f64, f64, [f64; 2])>, curve: Curve<'_>, evidence| {
        Ok(LambdaPResult {
            status,
            lambda_p: root.map(|r| r.0),
            mu_at_root: root.map(|r| r.1),
            bracket: root.map(|r| r.2),
            curve: curve.into_sorted(),
            condition_report: conditions.clone(),
            evidence,
        })
    };

    let period = weight.period();
    let p_over_t = conditions.p_value / period;
    let stays_negative = |lambda_k: f64, mu_k: f64| {
        mu_k < 0.0 && mu_k + (opts.lambda_cap - lambda_k) * p_over_t.max(0.0) < 0.0
    };

    if boundary != Boundary::DirichletType && weight.is_space_independent(grid, opts.n_time)? {
        let m_hat = weight.time_average(grid, opts.n_time)?[0];
        let tol = 1e-9 * (1.0 + weight.sup_norm(grid, opts.n_time)?);
        for lambda in [opts.eps, 1.0] {
            curve.mu(lambda)?;
        }
        evidence.push(format!(
            "space-independent weight: μ(λ) = λ·m̂ with m̂ = {m_hat:.6e}"
        ));
        let status = if m_hat.abs() < tol {
            RootStatus::AllPositiveRoots
        } else {
            RootStatus::NoPositiveRoot
        };
        return finish(status, None, curve, evidence);
    }

    let (lo, hi) = match boundary {
        Boundary::DirichletType => {
            let mu0 = curve.mu(0.0)?;
            if mu0 >= 0.0 {
                evidence.push(format!("μ(0) = {mu0:.6e} is not negative"));
                return finish(RootStatus::Marginal, None, curve, evidence);
            }
            if stays_negative(0.0, mu0) {
                evidence.push(format!(
                    "comparison bound: μ(λ) ≤ μ(0) + λ·P(m)/T < 0 with P(m) = {:.6e}",
                    conditions.p_value
                ));
                return finish(RootStatus::NoPositiveRoot, None, curve, evidence);
            }
            let (mut lo, mut mu_lo) = (0.0, mu0);
            let mut lambda = 1.0;
            loop {
                if lambda > opts.lambda_cap {
                    evidence.push(format!(
                        "unbounded-below-zero curve: μ < 0 up to λ_cap = {:e}",
                        opts.lambda_cap
                    ));
                    return finish(RootStatus::NoPositiveRoot, None, curve, evidence);
                }
                let mu = curve.mu(lambda)?;
                if mu > 0.0 {
                    break ((lo, mu_lo), (lambda, mu));
                }
                if stays_negative(lambda, mu) {
                    evidence.push(format!(
                        "comparison bound from λ = {lambda:e}: μ stays below {mu:.3e} + (λ − {lambda:e})·P(m)/T < 0"
                    ));
                    return finish(RootStatus::NoPositiveRoot, None, curve, evidence);
                }
                (lo, mu_lo) = (lambda, mu);
                lambda *= 2.0;
            }
        }
        Boundary::NeumannType | Boundary::Periodic => {
            let slope = conditions.integral / (period * grid.volume());
            if conditions.p_value <= 0.0 {
                let mu = curve.mu(opts.eps)?;
                if mu <= 0.0 {
                    evidence.push(format!(
                        "comparison bound: μ(λ) ≤ λ·P(m)/T ≤ 0 with P(m) = {:.6e}",
                        conditions.p_value
                    ));
                    return finish(RootStatus::NoPositiveRoot, None, curve, evidence);
                }
            }
            if conditions.integral_negative == Check::Marginal {
                for lambda in [opts.eps, 1.0] {
                    curve.mu(lambda)?;
                }
                evidence.push(format!(
                    "∫∫m = {:.3e} is zero within tolerance",
                    conditions.integral
                ));
                return finish(RootStatus::Marginal, None, curve, evidence);
            }
            let mu_eps = curve.mu(opts.eps)?;
            let mut start = None;
            if mu_eps < 0.0 {
                start = Some((opts.eps, mu_eps));
            } else if slope < 0.0 {
                // the root may lie below ε
                let mut lambda = opts.eps;
                for _ in 0..20 {
                    lambda /= 2.0;
                    let mu = curve.mu(lambda)?;
                    if mu < 0.0 {
                        start = Some((lambda, mu));
                        break;
                    }
                }
            }
            let Some((mut lo, mut mu_lo)) = start else {
                if mu_eps > 0.0 {
                    curve.mu(2.0 * opts.eps)?;
                    evidence.push(format!(
                        "convexity: μ(0) = 0 and μ({:e}) = {mu_eps:.3e} > 0, so μ > 0 for λ ≥ ε",
                        opts.eps
                    ));
                    return finish(RootStatus::NoPositiveRoot, None, curve, evidence);
                }
                evidence.push("no negative dip found near λ = 0".to_string());
                return finish(RootStatus::Marginal, None, curve, evidence);
            };
            evidence.push(format!("negative dip at λ = {lo:e}: μ = {mu_lo:.3e}"));
            let mut lambda = (2.0 * lo).max(opts.eps);
            loop {
                if lambda > opts.lambda_cap {
                    evidence.push(format!(
                        "unbounded-below-zero curve: μ < 0 up to λ_cap = {:e}",
                        opts.lambda_cap
                    ));
                    return finish(RootStatus::NoPositiveRoot, None, curve, evidence);
                }
                let mu = if lambda == opts.eps {
                    mu_eps
                } else {
                    curve.mu(lambda)?
                };
                if mu > 0.0 {
                    break ((lo, mu_lo), (lambda, mu));
                }
                if stays_negative(lambda, mu) {
                    evidence.push(format!(
                        "comparison bound from λ = {lambda:e}: μ stays negative since P(m) ≤ 0"
                    ));
                    return finish(RootStatus::NoPositiveRoot, None, curve, evidence);
                }
                (lo, mu_lo) = (lambda, mu);
                lambda *= 2.0;
            }
        }
    };

    let (root, mu_root, bracket) = refine(&mut curve, lo, hi, opts)?;
    evidence.push(format!(
        "sign change bracketed on [{:.6e}, {:.6e}]",
        bracket[0], bracket[1]
    ));
    let status = if mu_root.abs() < opts.tol_root {
        RootStatus::UniqueRoot
    } else {
        evidence.push(format!("root residual {mu_root:.3e} above tolerance"));
        RootStatus::Marginal
    };
    finish(status, Some((root, mu_root, bracket)), curve, evidence)
}

/// Illinois-modified regula falsi on a confirmed bracket, with a bisection
/// step whenever the bracket fails to halve in two iterations.
fn refine(
    curve: &mut Curve<'_>,
    (mut a, mut fa): (f64, f64),
    (mut b, mut fb): (f64, f64),
    opts: &SolverOptions,
) -> Result<(f64, f64, [f64; 2])> {
    let target = opts.tol_root * 1e-3;
    // narrowest bracket whose endpoint signs clear tol_root
    let mut certified = [a, b];
    let mut best = if fa.abs() < fb.abs() {
        (a, fa)
    } else {
        (b, fb)
    };
    let mut side = 0i8;
    let mut width = b - a;
    for iter in 0..opts.max_refine {
        let x = if iter % 3 == 2 && (b - a) > 0.5 * width {
            0.5 * (a + b)
        } else {
            (a * fb - b * fa) / (fb - fa)
        };
        if iter % 3 == 2 {
            width = b - a;
        }
        let fx = curve.mu(x)?;
        if fx.abs() < best.1.abs() {
            best = (x, fx);
        }
        if fx < -opts.tol_root {
            certified[0] = x;
        } else if fx > opts.tol_root {
            certified[1] = x;
        }
        if fx.abs() < target || (b - a) < 1e-14 * b.abs() {
            break;
        }
        if fx < 0.0 {
            a = x;
            fa = fx;
            if side == -1 {
                fb *= 0.5;
            }
            side = -1;
        } else {
            b = x;
            fb = fx;
            if side == 1 {
                fa *= 0.5;
            }
            side = 1;
        }
    }
    Ok((best.0, best.1, certified))
}

/// Root of the time-averaged problem alongside the original one.
#[derive(Clone, Debug, Serialize)]
pub struct UpperBoundReport {
    pub lambda_p: LambdaPResult,
    pub averaged: LambdaPResult,
    pub lambda_p_avg: Option<f64>,
    /// `λᵖ(m) ≤ λᵖ(m̂) + 1e−8` when both roots exist.
    pub bound_holds: Option<bool>,
    /// `m̂` positive somewhere, plus `∫ m̂ < 0` for Neumann-type and periodic.
    pub averaged_root_expected: Check,
}

pub const UPPER_BOUND_TOL: f64 = 1e-8;

pub fn upper_bound_lambda_p(
    op: &DispersalOperator,
    weight: &Weight,
    opts: &SolverOptions,
) -> Result<UpperBoundReport> {
    let grid = op.grid();
    let m_hat = weight.time_average(grid, opts.n_time)?;
    let averaged_weight = Weight::autonomous_field(&m_hat, weight.period())?;
    let lambda_p = solve_lambda_p(op, weight, opts)?;
    let averaged = solve_lambda_p(op, &averaged_weight, opts)?;
    let max = m_hat.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let integral = grid.integrate(&m_hat);
    let tol = 1e-9 * (1.0 + max.abs());
    let positive_somewhere = if max > tol {
        Check::Yes
    } else if max < -tol {
        Check::No
    } else {
        Check::Marginal
    };
    let averaged_root_expected = match grid.boundary() {
        Boundary::DirichletType => positive_somewhere,
        _ => match (positive_somewhere, integral < -tol, integral > tol) {
            (Check::Yes, true, _) => Check::Yes,
            (Check::No, _, _) | (_, _, true) => Check::No,
            _ => Check::Marginal,
        },
    };
    let roots = |r: &LambdaPResult| {
        (r.status == RootStatus::UniqueRoot)
            .then_some(r.lambda_p)
            .flatten()
    };
    let lambda_p_avg = roots(&averaged);
    let bound_holds = match (roots(&lambda_p), lambda_p_avg) {
        (Some(l), Some(a)) => Some(l <= a + UPPER_BOUND_TOL),
        _ => None,
    };
    Ok(UpperBoundReport {
        lambda_p,
        averaged,
        lambda_p_avg,
        bound_holds,
        averaged_root_expected,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PeBasis {
    S1,
    S2,
    S3,
    Gap,
}

#[derive(Clone, Debug, Serialize)]
pub struct PeSufficiency {
    pub is_principal_eigenvalue: Check,
    pub basis: Option<PeBasis>,
    pub s_conditions: SConditions,
    pub gap: f64,
    pub gap_classification: Check,
}

/// Whether `λᵖ` is a principal eigenvalue: first by the smoothness,
/// oscillation and divergence conditions on `ĥ` at `λᵖ`, then by the
/// resolved spectral gap.
pub fn pe_sufficiency(
    op: &DispersalOperator,
    weight: &Weight,
    result: &LambdaPResult,
    opts: &SolverOptions,
) -> Result<PeSufficiency> {
    let lambda = match (result.status, result.lambda_p) {
        (RootStatus::UniqueRoot, Some(l)) => l,
        _ => {
            return Err(Error::InvalidParameter(
                "principal-eigenvalue test needs a unique root".to_string(),
            ))
        }
    };
    let s = check_s_conditions(weight, op, lambda, opts.n_time)?;
    let report = principal_spectrum_point(op, weight, lambda, &opts.spectrum())?;
    let gap_classification = report.is_principal_eigenvalue;
    let (verdict, basis) = if s.s1 == Check::Yes {
        (Check::Yes, Some(PeBasis::S1))
    } else if s.s3 == Check::Yes {
        (Check::Yes, Some(PeBasis::S3))
    } else if s.s2 == Check::Yes {
        (Check::Yes, Some(PeBasis::S2))
    } else {
        match gap_classification {
            Check::Yes => (Check::Yes, Some(PeBasis::Gap)),
            Check::No => (Check::No, Some(PeBasis::Gap)),
            _ => (Check::Unknown, None),
        }
    };
    Ok(PeSufficiency {
        is_principal_eigenvalue: verdict,
        basis,
        s_conditions: s,
        gap: report.gap(),
        gap_classification,
    })
}
