//! Principal spectrum point `μ(λ) = ln ρ(Φ(T)) / T`, its cross-check by the
//! long-time growth rate, the essential interval `[ĥ_min, ĥ_max]` with
//! `ĥ = −b + λ m̂`, and sufficient conditions for `μ(λ)` to be a principal
//! eigenvalue.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::evolution::{advance, default_n_steps, period_map, sup_norm};
use crate::geometry::{Boundary, Kernel};
use crate::operator::{assemble, DispersalOperator};
use crate::weights::Weight;
use crate::Check;

pub const TOL_EIG: f64 = 1e-8;

/// Tolerance on `μ − ĥ_max` before discretization effects are accounted for.
pub fn gap_tol(mu: f64) -> f64 {
    1e-6 * (1.0 + mu.abs())
}

#[derive(Clone, Debug)]
pub struct SpectrumOptions {
    /// RK4 steps per period; `None` uses the default rule.
    pub n_steps: Option<usize>,
    /// Time samples for `m̂`.
    pub n_time: usize,
    pub max_iter: usize,
    pub rel_tol: f64,
    /// Also estimate `μ` from the growth rate of a propagated field.
    pub cross_validate: bool,
    pub lyapunov_periods: usize,
    /// Evaluate the sufficient conditions S1–S3.
    pub s_conditions: bool,
}

impl Default for SpectrumOptions {
    fn default() -> Self {
        SpectrumOptions {
            n_steps: None,
            n_time: 64,
            max_iter: 10_000,
            rel_tol: 1e-12,
            cross_validate: false,
            lyapunov_periods: 50,
            s_conditions: true,
        }
    }
}

impl SpectrumOptions {
    /// μ only: no S-conditions, no cross-validation.
    pub fn fast() -> Self {
        SpectrumOptions {
            s_conditions: false,
            ..Default::default()
        }
    }
}

#[derive(Clone, Debug)]
pub struct PowerResult {
    /// `ln ρ` of the input matrix.
    pub ln_rho: f64,
    /// Dominant eigenvector estimate, `‖v‖∞ = 1`, nonnegative.
    pub vector: Vec<f64>,
    pub iterations: usize,
    pub squarings: u32,
    /// Relative width of the final Collatz–Wielandt bracket, if available.
    pub cw_gap: Option<f64>,
}

/// Power iteration from `𝟙` with sup-norm renormalization. The iteration
/// matrix is squared after every 100 iterations without convergence, so the
/// method handles small spectral gaps.
pub fn power_iteration(
    matrix: &DMatrix<f64>,
    max_iter: usize,
    rel_tol: f64,
) -> Result<PowerResult> {
    let n = matrix.nrows();
    let nonnegative = matrix.iter().all(|v| *v >= 0.0);
    let mut m = matrix.clone();
    let mut log_scale = 0.0;
    let mut power: u32 = 1;
    let mut squarings = 0;
    let mut v = DVector::from_element(n, 1.0);
    let mut y = DVector::zeros(n);
    let mut prev = f64::NAN;
    let mut calm = 0;
    let mut since_square = 0;

    for iter in 1..=max_iter {
        m.mul_to(&v, &mut y);
        let ratio = y.amax();
        if !ratio.is_finite() || ratio <= 0.0 {
            return Err(Error::NonConvergence(format!(
                "iterate collapsed (ratio {ratio}) after {iter} iterations"
            )));
        }
        let cw_gap = if nonnegative {
            let (mut lo, mut hi) = (f64::INFINITY, 0.0_f64);
            for j in 0..n {
                if v[j] > 0.0 {
                    let r = y[j] / v[j];
                    lo = lo.min(r);
                    hi = hi.max(r);
                }
            }
            (lo.is_finite() && hi > 0.0).then(|| (hi - lo) / hi)
        } else {
            None
        };
        let change = ((ratio - prev) / ratio).abs();
        calm = if change < rel_tol { calm + 1 } else { 0 };
        prev = ratio;
        y /= ratio;
        std::mem::swap(&mut v, &mut y);

        // the bracket is rigorous for nonnegative matrices; the ratio test
        // alone can stall on slowly converging iterates
        let done = match cw_gap {
            Some(g) => g / f64::from(power) < 1e-13 || (calm >= 5 && g / f64::from(power) < 1e-9),
            None => calm >= 5,
        };
        if done {
            return Ok(PowerResult {
                ln_rho: (log_scale + ratio.ln()) / f64::from(power),
                vector: v.data.into(),
                iterations: iter,
                squarings,
                cw_gap,
            });
        }
        since_square += 1;
        if since_square >= 100 && squarings < 12 {
            since_square = 0;
            squarings += 1;
            let s = m.amax();
            m /= s;
            log_scale += s.ln();
            m = &m * &m;
            log_scale *= 2.0;
            power *= 2;
            prev = f64::NAN;
            calm = 0;
        }
    }
    Err(Error::NonConvergence(format!(
        "no convergence in {max_iter} iterations"
    )))
}

/// How `μ` was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectrumMethod {
    PeriodMapRadius,
    LyapunovLimit,
}

#[derive(Clone, Debug, Serialize)]
pub struct SConditions {
    pub s1: Check,
    pub s2: Check,
    pub s3: Check,
    pub s2_lhs: f64,
    pub s2_rhs: f64,
    /// Local decay exponents `q_i` of `ĥ_max − ĥ` along each axis near the
    /// maximizer (`inf` for flat directions).
    pub s3_exponents: Vec<f64>,
    /// `Σ 1/q_i`; the integral of `1/(ĥ_max − ĥ)` diverges when this is ≤ 1.
    pub s3_index: f64,
    pub maximizer: Vec<f64>,
    pub notes: Vec<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SpectrumReport {
    pub lambda: f64,
    pub mu_n: f64,
    pub method: SpectrumMethod,
    /// Positive eigenfunction with `‖φ‖∞ = 1` when the residual is below
    /// [`TOL_EIG`].
    pub eigenfunction: Option<Vec<f64>>,
    /// Final power iterate regardless of residual.
    pub iterate: Vec<f64>,
    pub residual: f64,
    pub h_hat_max: f64,
    pub h_hat_min: f64,
    /// Largest self-coupling `K[j, j]`; gaps `μ − ĥ_max` below it are not
    /// resolved by the grid.
    pub discretization_floor: f64,
    pub is_principal_eigenvalue: Check,
    pub s_conditions: Option<SConditions>,
    pub lyapunov_mu: Option<f64>,
    pub localization_width: f64,
    pub iterations: usize,
    pub n_steps: usize,
    pub period: f64,
}

impl SpectrumReport {
    pub fn gap(&self) -> f64 {
        self.mu_n - self.h_hat_max
    }
}

/// `μ` and eigen-data from the period map, without the report extras.
#[derive(Clone, Debug)]
pub struct MuEstimate {
    pub mu: f64,
    pub vector: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
    pub n_steps: usize,
}

pub fn resolve_n_steps(
    op: &DispersalOperator,
    weight: &Weight,
    lambda: f64,
    n_steps: Option<usize>,
) -> Result<usize> {
    match n_steps {
        Some(n) => Ok(n),
        None => Ok(default_n_steps(
            weight.period(),
            lambda,
            weight.sup_norm(op.grid(), 64)?,
        )),
    }
}

pub fn estimate_mu(
    op: &DispersalOperator,
    weight: &Weight,
    lambda: f64,
    opts: &SpectrumOptions,
) -> Result<MuEstimate> {
    let n_steps = resolve_n_steps(op, weight, lambda, opts.n_steps)?;
    let pm = period_map(op, weight, lambda, Some(n_steps))?;
    let pow = power_iteration(&pm.matrix, opts.max_iter, opts.rel_tol)?;
    let period = weight.period();
    let mu = pow.ln_rho / period;
    let v = DVector::from_column_slice(&pow.vector);
    let residual = (&pm.matrix * &v - &v * (mu * period).exp()).amax();
    Ok(MuEstimate {
        mu,
        vector: pow.vector,
        residual,
        iterations: pow.iterations,
        n_steps,
    })
}

/// `μ(λ)` from the spectral radius of the period map, with the essential
/// interval, classification and (optionally) S-conditions and a growth-rate
/// cross-check.
pub fn principal_spectrum_point(
    op: &DispersalOperator,
    weight: &Weight,
    lambda: f64,
    opts: &SpectrumOptions,
) -> Result<SpectrumReport> {
    let est = estimate_mu(op, weight, lambda, opts)?;
    let (h_hat_min, h_hat_max) = essential_interval(op, weight, lambda, opts.n_time)?;
    let s_conditions = if opts.s_conditions {
        Some(check_s_conditions(weight, op, lambda, opts.n_time)?)
    } else {
        None
    };
    let lyapunov_mu = if opts.cross_validate {
        Some(lyapunov_estimate(
            op,
            weight,
            lambda,
            &vec![1.0; op.len()],
            opts.lyapunov_periods,
            Some(est.n_steps),
        )?)
    } else {
        None
    };
    let floor = (0..op.len())
        .map(|j| op.k_matrix()[(j, j)])
        .fold(0.0, f64::max);
    let mut report = SpectrumReport {
        lambda,
        mu_n: est.mu,
        method: SpectrumMethod::PeriodMapRadius,
        eigenfunction: (est.residual < TOL_EIG).then(|| est.vector.clone()),
        localization_width: localization_width(op, &est.vector),
        iterate: est.vector,
        residual: est.residual,
        h_hat_max,
        h_hat_min,
        discretization_floor: floor,
        is_principal_eigenvalue: Check::Unknown,
        s_conditions,
        lyapunov_mu,
        iterations: est.iterations,
        n_steps: est.n_steps,
        period: weight.period(),
    };
    report.is_principal_eigenvalue = classify_principal_eigenvalue(&report);
    Ok(report)
}

/// `(Σ w φ)² / Σ w φ²`: the measure of the region the field effectively
/// occupies (`|D|` for constants).
pub fn localization_width(op: &DispersalOperator, phi: &[f64]) -> f64 {
    let g = op.grid();
    let s1 = g.integrate(phi);
    let s2 = g.inner(phi, phi);
    if s2 > 0.0 {
        s1 * s1 / s2
    } else {
        0.0
    }
}

/// Growth rate `lim ln‖Φ(t, 0) u₀‖ / t`, averaged over the second half of
/// `n_periods` per-period log increments.
pub fn lyapunov_estimate(
    op: &DispersalOperator,
    weight: &Weight,
    lambda: f64,
    u0: &[f64],
    n_periods: usize,
    n_steps: Option<usize>,
) -> Result<f64> {
    if n_periods < 10 {
        return Err(Error::InvalidParameter(format!(
            "n_periods must be at least 10, got {n_periods}"
        )));
    }
    if u0.iter().any(|v| *v < 0.0) {
        return Err(Error::InvalidParameter(
            "u0 must be nonnegative".to_string(),
        ));
    }
    let norm0 = sup_norm(u0);
    if norm0 == 0.0 {
        return Err(Error::InvalidParameter("u0 must not vanish".to_string()));
    }
    let n_steps = resolve_n_steps(op, weight, lambda, n_steps)?;
    let period = weight.period();
    let mut u: Vec<f64> = u0.iter().map(|v| v / norm0).collect();
    let mut increments = Vec::with_capacity(n_periods);
    for _ in 0..n_periods {
        u = advance(op, weight, lambda, &u, 0.0, period, n_steps)?;
        let norm = sup_norm(&u);
        if norm == 0.0 {
            return Err(Error::NonConvergence("field vanished".to_string()));
        }
        increments.push(norm.ln());
        u.iter_mut().for_each(|v| *v /= norm);
    }
    let tail = &increments[n_periods / 2..];
    Ok(tail.iter().sum::<f64>() / tail.len() as f64 / period)
}

/// `ĥ(x) = −b(x) + λ m̂(x)` on the grid nodes.
pub fn h_hat(
    op: &DispersalOperator,
    weight: &Weight,
    lambda: f64,
    n_time: usize,
) -> Result<Vec<f64>> {
    let m_hat = weight.time_average(op.grid(), n_time)?;
    Ok(m_hat
        .iter()
        .zip(op.b_vector().iter())
        .map(|(m, b)| lambda * m - b)
        .collect())
}

/// `[ĥ_min, ĥ_max]`, the real parts of the essential spectrum.
pub fn essential_interval(
    op: &DispersalOperator,
    weight: &Weight,
    lambda: f64,
    n_time: usize,
) -> Result<(f64, f64)> {
    let h = h_hat(op, weight, lambda, n_time)?;
    let lo = h.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = h.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok((lo, hi))
}

/// Principal eigenvalue test from the gap `μ − ĥ_max` and the eigenvector
/// residual. Gaps inside the grid's self-coupling floor are not decided.
pub fn classify_principal_eigenvalue(report: &SpectrumReport) -> Check {
    let gap = report.gap();
    let tol = gap_tol(report.mu_n);
    let floor = report.discretization_floor;
    let resolved = report.residual < TOL_EIG;
    if gap > tol + 2.0 * floor && resolved {
        Check::Yes
    } else if gap.abs() < tol || (!resolved && gap < tol + floor) {
        Check::No
    } else {
        Check::Marginal
    }
}

/// Gap and localization at two resolutions; in the no-eigenvalue regime both
/// shrink under refinement.
#[derive(Clone, Debug, Serialize)]
pub struct RefinementDiagnostics {
    pub n_coarse: usize,
    pub n_fine: usize,
    pub gap_coarse: f64,
    pub gap_fine: f64,
    pub floor_coarse: f64,
    pub floor_fine: f64,
    pub width_coarse: f64,
    pub width_fine: f64,
}

pub fn refinement_diagnostics(
    kernel: &Kernel,
    op: &DispersalOperator,
    weight: &Weight,
    lambda: f64,
    opts: &SpectrumOptions,
) -> Result<RefinementDiagnostics> {
    let n = op.grid().n_per_axis();
    let fine_op = assemble(kernel, &op.grid().refined(2 * n)?)?;
    let fast = SpectrumOptions {
        s_conditions: false,
        cross_validate: false,
        ..opts.clone()
    };
    let coarse = principal_spectrum_point(op, weight, lambda, &fast)?;
    let fine = principal_spectrum_point(&fine_op, weight, lambda, &fast)?;
    Ok(RefinementDiagnostics {
        n_coarse: n,
        n_fine: 2 * n,
        gap_coarse: coarse.gap(),
        gap_fine: fine.gap(),
        floor_coarse: coarse.discretization_floor,
        floor_fine: fine.discretization_floor,
        width_coarse: coarse.localization_width,
        width_fine: fine.localization_width,
    })
}

// --- sufficient conditions -------------------------------------------------

/// `ĥ` at arbitrary points, available for closed-form weights.
struct PointProfile<'a> {
    op: &'a DispersalOperator,
    weight: &'a Weight,
    lambda: f64,
    n_time: usize,
}

impl PointProfile<'_> {
    fn eval(&self, x: &[f64]) -> f64 {
        let x = self.canonical(x);
        let m_hat = self
            .weight
            .time_average_at(&x, self.n_time)
            .unwrap_or(f64::NAN);
        self.lambda * m_hat - self.op.b_at(&x)
    }

    fn canonical(&self, x: &[f64]) -> Vec<f64> {
        let g = self.op.grid();
        match g.boundary() {
            Boundary::Periodic => x
                .iter()
                .zip(g.lengths())
                .map(|(v, p)| v.rem_euclid(*p))
                .collect(),
            _ => x.to_vec(),
        }
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let g = self.op.grid();
        let expr = self.weight.expr().expect("closed form");
        let times: Vec<f64> = (0..self.n_time)
            .map(|k| k as f64 * self.weight.period() / self.n_time as f64)
            .collect();
        (0..g.dim())
            .map(|a| {
                let d = expr.diff(a);
                let dm: f64 = times
                    .iter()
                    .map(|&t| d.eval(t, x, self.weight.period()))
                    .sum::<f64>()
                    / times.len() as f64;
                let db = match g.boundary() {
                    Boundary::NeumannType => {
                        let eps = 1e-5 * g.lengths()[a];
                        let mut xp = x.to_vec();
                        let mut xm = x.to_vec();
                        xp[a] += eps;
                        xm[a] -= eps;
                        (self.op.b_at(&xp) - self.op.b_at(&xm)) / (2.0 * eps)
                    }
                    _ => 0.0,
                };
                self.lambda * dm - db
            })
            .collect()
    }
}

fn golden_max(mut f: impl FnMut(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..80 {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
        if (b - a).abs() < 1e-13 {
            break;
        }
    }
    let mid = 0.5 * (a + b);
    // keep an endpoint if it beats the interior estimate
    let mut best = (mid, f(mid));
    for s in [a, b] {
        let v = f(s);
        if v > best.1 {
            best = (s, v);
        }
    }
    best.0
}

fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0)
}

/// Multi-index of node `k` on a tensor grid.
fn multi_index(k: usize, dim: usize, n: usize) -> Vec<usize> {
    if dim == 1 {
        vec![k]
    } else {
        vec![k / n, k % n]
    }
}

fn flat_index(idx: &[usize], n: usize) -> usize {
    idx.iter().fold(0, |acc, i| acc * n + i)
}

/// Evaluate S1 (smooth ĥ with a suitably flat maximizer), S2 (small
/// oscillation of `λ m̂`) and S3 (non-integrable `1/(ĥ_max − ĥ)`) at `λ`.
pub fn check_s_conditions(
    weight: &Weight,
    op: &DispersalOperator,
    lambda: f64,
    n_time: usize,
) -> Result<SConditions> {
    let grid = op.grid();
    let dim = grid.dim();
    let m_hat = weight.time_average(grid, n_time)?;
    let m_max = m_hat.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let m_min = m_hat.iter().copied().fold(f64::INFINITY, f64::min);
    let mut notes = Vec::new();

    // S2
    let s2_lhs = lambda.abs() * (m_max - m_min);
    let s2_rhs = match grid.boundary() {
        Boundary::NeumannType => {
            let node_min = op.b_vector().iter().copied().fold(f64::INFINITY, f64::min);
            let corner = vec![0.0; dim];
            node_min.min(op.b_at(&corner))
        }
        _ => 1.0,
    };
    let s2 = Check::from_bool(s2_lhs < s2_rhs);

    // S3
    let h = h_hat(op, weight, lambda, n_time)?;
    let h_max = h.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let h_min = h.iter().copied().fold(f64::INFINITY, f64::min);
    let scale = 1.0 + h_max.abs().max(h_min.abs());
    let profile = weight.is_closed_form().then_some(PointProfile {
        op,
        weight,
        lambda,
        n_time,
    });

    if h_max - h_min <= 1e-12 * scale {
        notes.push("ĥ is constant on the grid: flat maximum".to_string());
        let centre: Vec<f64> = grid.lengths().iter().map(|l| 0.5 * l).collect();
        let s1 = if profile.is_some() && smooth_enough(op) {
            Check::Yes
        } else {
            Check::Unknown
        };
        return Ok(SConditions {
            s1,
            s2,
            s3: Check::Yes,
            s2_lhs,
            s2_rhs,
            s3_exponents: vec![f64::INFINITY; dim],
            s3_index: 0.0,
            maximizer: centre,
            notes,
        });
    }

    let (maximizer, exponents) = match &profile {
        Some(p) => closed_form_exponents(p, &h),
        None => {
            notes.push("sampled weight: exponents fitted on grid nodes".to_string());
            grid_exponents(op, &h)
        }
    };
    let s3_index: f64 = exponents.iter().map(|q| 1.0 / q).sum();
    let s3 = Check::from_bool(s3_index <= 1.0 + 0.05);

    // S1
    let s1 = match &profile {
        None => {
            notes.push("S1 needs a closed-form weight".to_string());
            Check::Unknown
        }
        Some(p) if !p.weight.expr().is_some_and(|e| e.is_smooth()) => {
            notes.push("weight is not differentiable everywhere".to_string());
            Check::Unknown
        }
        Some(_) if !smooth_enough(op) => {
            notes.push("kernel too rough for a C^N coefficient b".to_string());
            Check::Unknown
        }
        Some(p) => {
            let interior = grid.boundary() == Boundary::Periodic
                || maximizer
                    .iter()
                    .zip(grid.lengths())
                    .all(|(x, l)| *x > 1e-6 * l && *x < l - 1e-6 * l);
            if !interior {
                notes.push("maximizer of ĥ lies on the boundary".to_string());
                Check::No
            } else if dim == 1 {
                Check::Yes
            } else {
                let grad = p.gradient(&maximizer);
                let gnorm = grad.iter().fold(0.0_f64, |s, g| s.max(g.abs()));
                Check::from_bool(gnorm < 1e-6 * scale)
            }
        }
    };

    Ok(SConditions {
        s1,
        s2,
        s3,
        s2_lhs,
        s2_rhs,
        s3_exponents: exponents,
        s3_index,
        maximizer,
        notes,
    })
}

/// `b` is `C^N` when the kernel is `C^{N−1}` (Neumann-type); constant otherwise.
fn smooth_enough(op: &DispersalOperator) -> bool {
    match op.boundary() {
        Boundary::NeumannType => op.kernel().profile().smoothness() + 1 >= op.grid().dim() as i32,
        _ => true,
    }
}

fn closed_form_exponents(p: &PointProfile<'_>, h: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let grid = p.op.grid();
    let dim = grid.dim();
    let periodic = grid.boundary() == Boundary::Periodic;
    let spacing = grid.spacing();
    let mut x0 = grid.node(argmax(h)).to_vec();
    for _ in 0..4 {
        for a in 0..dim {
            let (mut lo, mut hi) = (x0[a] - spacing[a], x0[a] + spacing[a]);
            if !periodic {
                lo = lo.max(0.0);
                hi = hi.min(grid.lengths()[a]);
            }
            let mut probe = x0.clone();
            x0[a] = golden_max(
                |s| {
                    probe[a] = s;
                    p.eval(&probe)
                },
                lo,
                hi,
            );
        }
    }
    let h0 = p.eval(&x0);
    let exponents = (0..dim)
        .map(|a| {
            let l = grid.lengths()[a];
            let (r1, r2) = (0.02 * l, 0.005 * l);
            let mut best: Option<f64> = None;
            for sign in [-1.0, 1.0] {
                let inside =
                    |r: f64| periodic || (x0[a] + sign * r >= 0.0 && x0[a] + sign * r <= l);
                if !inside(r1) {
                    continue;
                }
                let drop = |r: f64| {
                    let mut y = x0.clone();
                    y[a] += sign * r;
                    h0 - p.eval(&y)
                };
                let (d1, d2) = (drop(r1), drop(r2));
                let q = if d1 <= 1e-14 * (1.0 + h0.abs()) || d2 <= 0.0 {
                    f64::INFINITY
                } else {
                    (d1 / d2).ln() / (r1 / r2).ln()
                };
                best = Some(best.map_or(q, |b: f64| b.max(q)));
            }
            best.unwrap_or(f64::INFINITY)
        })
        .collect();
    (x0, exponents)
}

/// Least-squares log-log fit of `ĥ_max − ĥ` against distance along each
/// axis, using up to three nodes on each side of the maximizing node.
fn grid_exponents(op: &DispersalOperator, h: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let grid = op.grid();
    let dim = grid.dim();
    let n = grid.n_per_axis();
    let periodic = grid.boundary() == Boundary::Periodic;
    let spacing = grid.spacing();
    let k0 = argmax(h);
    let idx0 = multi_index(k0, dim, n);
    let mut x0 = grid.node(k0).to_vec();
    let mut exponents = Vec::with_capacity(dim);

    for a in 0..dim {
        let at = |offset: i64| -> Option<f64> {
            let mut idx = idx0.clone();
            let i = idx0[a] as i64 + offset;
            let i = if periodic {
                i.rem_euclid(n as i64)
            } else if i < 0 || i >= n as i64 {
                return None;
            } else {
                i
            };
            idx[a] = i as usize;
            Some(h[flat_index(&idx, n)])
        };
        let hc = h[k0];
        // vertex of the parabola through the three central nodes
        let shift = match (at(-1), at(1)) {
            (Some(l), Some(r)) => {
                let denom = l - 2.0 * hc + r;
                if denom < 0.0 {
                    0.5 * (l - r) / denom
                } else {
                    0.0
                }
            }
            // maximizer against the boundary: the edge is half a cell away
            (None, Some(_)) => -0.5,
            (Some(_), None) => 0.5,
            (None, None) => 0.0,
        };
        x0[a] += shift * spacing[a];
        // successive differences cancel the unknown peak value:
        // ĥ(s) − ĥ(s + 1) ~ q·C·dist^{q−1}·h
        let mut best: Option<f64> = None;
        for sign in [-1i64, 1] {
            let mut pts = Vec::new();
            for s in 1..=3i64 {
                if let (Some(near), Some(far)) = (at(sign * s), at(sign * (s + 1))) {
                    let dist = (sign as f64 * (s as f64 + 0.5) - shift).abs() * spacing[a];
                    let drop = near - far;
                    if drop > 0.0 {
                        pts.push((dist.ln(), drop.ln()));
                    }
                }
            }
            if pts.len() >= 2 {
                let m = pts.len() as f64;
                let (sx, sy) = pts.iter().fold((0.0, 0.0), |(a, b), p| (a + p.0, b + p.1));
                let (mx, my) = (sx / m, sy / m);
                let (num, den) = pts.iter().fold((0.0, 0.0), |(nu, de), p| {
                    (nu + (p.0 - mx) * (p.1 - my), de + (p.0 - mx).powi(2))
                });
                let q = num / den + 1.0;
                best = Some(best.map_or(q, |b: f64| b.max(q)));
            } else if pts.is_empty() && at(sign).is_some() && at(2 * sign).is_some() {
                // no decrease away from the peak: flat direction
                best = Some(f64::INFINITY);
            }
        }
        exponents.push(best.unwrap_or(f64::INFINITY));
    }
    (x0, exponents)
}
