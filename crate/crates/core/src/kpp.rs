//! Time-periodic KPP equation `∂ₜu = K u − b u + λ u f(t, x, u)` and its
//! persistence threshold.

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::evolution::{default_n_steps, sup_norm, Trajectory};
use crate::geometry::Grid;
use crate::operator::DispersalOperator;
use crate::solver::{solve_lambda_p, LambdaPResult, RootStatus, SolverOptions};
use crate::weights::Weight;

pub const TOL_FIX: f64 = 1e-9;
pub const TOL_EXT: f64 = 1e-8;
pub const TOL_UNIQUE: f64 = 1e-6;
pub const MAX_PERIODS: usize = 500;
pub const SNAPSHOTS_PER_PERIOD: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    /// `m − c u`
    Logistic,
    /// `m − c u / (1 + d u)`
    Saturating,
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "logistic" => Ok(Family::Logistic),
            "saturating" => Ok(Family::Saturating),
            other => Err(Error::InvalidParameter(format!(
                "unknown nonlinearity '{other}'"
            ))),
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::Logistic => "logistic",
            Family::Saturating => "saturating",
        })
    }
}

/// `f(t, x, u)` with `∂ᵤf < 0` on `u ≥ 0` and `f < 0` for `u > u_max`.
#[derive(Clone, Debug)]
pub struct Nonlinearity {
    family: Family,
    weight: Weight,
    c: f64,
    d: f64,
    m_sup: f64,
    u_max: f64,
}

impl Nonlinearity {
    /// Validates the decay condition against `sup m` on `grid`.
    pub fn new(family: Family, weight: Weight, c: f64, d: f64, grid: &Grid) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "c must be positive, got {c}"
            )));
        }
        if !(d >= 0.0 && d.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "d must be nonnegative, got {d}"
            )));
        }
        let d = if family == Family::Logistic { 0.0 } else { d };
        let samples = weight.sample_lattice_values(grid, 64)?;
        let m_sup = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let u_max = if m_sup <= 0.0 {
            0.0
        } else if c > d * m_sup {
            m_sup / (c - d * m_sup)
        } else {
            return Err(Error::InvalidParameter(format!(
                "saturating term never exceeds sup m = {m_sup}: need c > d·sup m"
            )));
        };
        Ok(Nonlinearity {
            family,
            weight,
            c,
            d,
            m_sup,
            u_max,
        })
    }

    pub fn logistic(weight: Weight, c: f64, grid: &Grid) -> Result<Self> {
        Self::new(Family::Logistic, weight, c, 0.0, grid)
    }

    pub fn saturating(weight: Weight, c: f64, d: f64, grid: &Grid) -> Result<Self> {
        Self::new(Family::Saturating, weight, c, d, grid)
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn d(&self) -> f64 {
        self.d
    }

    /// `f(·, ·, 0)`.
    pub fn linearization(&self) -> &Weight {
        &self.weight
    }

    /// Level above which `f < 0` everywhere (0 when `sup m ≤ 0`).
    pub fn u_max(&self) -> f64 {
        self.u_max
    }

    /// Amplitude used for initial data: `u_max`, or 1 when `u_max = 0`.
    pub fn scale(&self) -> f64 {
        if self.u_max > 0.0 {
            self.u_max
        } else {
            1.0
        }
    }

    pub fn eval(&self, m: f64, u: f64) -> f64 {
        match self.family {
            Family::Logistic => m - self.c * u,
            Family::Saturating => m - self.c * u / (1.0 + self.d * u),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Persistence,
    Extinction,
    Undecided,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Persistence => "persistence",
            Verdict::Extinction => "extinction",
            Verdict::Undecided => "undecided",
        })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct KppOutcome {
    pub lambda: f64,
    pub verdict: Verdict,
    /// Periodic orbit at `SNAPSHOTS_PER_PERIOD + 1` equally spaced times,
    /// both ends included.
    pub u_star: Option<Trajectory>,
    pub poincare_residual: f64,
    pub periods_used: usize,
    pub min_of_u_star: Option<f64>,
    pub final_norm: f64,
    /// Sup distance between the orbits from the low and high initial levels.
    pub second_start_distance: Option<f64>,
    pub n_steps: usize,
}

#[derive(Clone, Debug)]
pub struct KppOptions {
    /// RK4 steps per period, rounded up to a multiple of the snapshot count.
    pub n_steps: Option<usize>,
    pub max_periods: usize,
    pub tol_fix: f64,
    pub tol_ext: f64,
}

impl Default for KppOptions {
    fn default() -> Self {
        KppOptions {
            n_steps: None,
            max_periods: MAX_PERIODS,
            tol_fix: TOL_FIX,
            tol_ext: TOL_EXT,
        }
    }
}

fn steps_per_period(
    nl: &Nonlinearity,
    lambda: f64,
    u_bound: f64,
    requested: Option<usize>,
) -> usize {
    let n = requested.unwrap_or_else(|| {
        let rate = nl.m_sup.abs() + nl.c * u_bound;
        default_n_steps(nl.weight.period(), lambda, rate)
    });
    n.div_ceil(SNAPSHOTS_PER_PERIOD) * SNAPSHOTS_PER_PERIOD
}

struct Rk4<'a> {
    op: &'a DispersalOperator,
    nl: &'a Nonlinearity,
    lambda: f64,
    m: Vec<f64>,
    ku: DVector<f64>,
    k: [DVector<f64>; 4],
    stage: DVector<f64>,
}

impl<'a> Rk4<'a> {
    fn new(op: &'a DispersalOperator, nl: &'a Nonlinearity, lambda: f64) -> Self {
        let n = op.len();
        let z = DVector::zeros(n);
        Rk4 {
            op,
            nl,
            lambda,
            m: vec![0.0; n],
            ku: z.clone(),
            k: [z.clone(), z.clone(), z.clone(), z.clone()],
            stage: z,
        }
    }

    fn rhs(&mut self, t: f64, u: &DVector<f64>, slot: usize) {
        self.nl.weight.sample_into(t, self.op.grid(), &mut self.m);
        self.op.k_matrix().mul_to(u, &mut self.ku);
        let b = self.op.b_vector();
        let out = &mut self.k[slot];
        for j in 0..u.len() {
            out[j] = self.ku[j] - b[j] * u[j] + self.lambda * u[j] * self.nl.eval(self.m[j], u[j]);
        }
    }

    fn step(&mut self, u: &mut DVector<f64>, t: f64, h: f64) {
        self.rhs(t, u, 0);
        for (slot, (frac, from)) in [(0.5, 0), (0.5, 1), (1.0, 2)].into_iter().enumerate() {
            let mut stage = std::mem::take(&mut self.stage);
            stage.copy_from(u);
            stage.axpy(frac * h, &self.k[from], 1.0);
            self.rhs(t + frac * h, &stage, slot + 1);
            self.stage = stage;
        }
        for j in 0..u.len() {
            u[j] +=
                h / 6.0 * (self.k[0][j] + 2.0 * self.k[1][j] + 2.0 * self.k[2][j] + self.k[3][j]);
        }
    }
}

fn check_initial(op: &DispersalOperator, u0: &[f64]) -> Result<()> {
    if u0.len() != op.len() {
        return Err(Error::DimensionMismatch(format!(
            "initial field has {} entries, grid has {}",
            u0.len(),
            op.len()
        )));
    }
    if u0.iter().any(|v| *v < 0.0 || !v.is_finite()) {
        return Err(Error::InvalidParameter(
            "initial field must be nonnegative".to_string(),
        ));
    }
    if u0.iter().all(|v| *v == 0.0) {
        return Err(Error::InvalidParameter(
            "initial field must not vanish".to_string(),
        ));
    }
    Ok(())
}

/// Integrate `n_periods` periods from `t = 0`, keeping `SNAPSHOTS_PER_PERIOD`
/// snapshots per period. Leaving `[0, 10·U]`, `U = 1.01·max(‖u₀‖∞, u_max)`,
/// is reported as a step instability.
pub fn simulate_kpp(
    op: &DispersalOperator,
    nl: &Nonlinearity,
    lambda: f64,
    u0: &[f64],
    n_periods: usize,
    n_steps: Option<usize>,
) -> Result<Trajectory> {
    check_initial(op, u0)?;
    nl.weight.compatible_with(op.grid())?;
    let bound = 1.01 * sup_norm(u0).max(nl.u_max);
    let n_steps = steps_per_period(nl, lambda, bound, n_steps);
    let mut traj = Trajectory {
        times: vec![0.0],
        snapshots: vec![u0.to_vec()],
        norms: vec![sup_norm(u0)],
    };
    let mut u = DVector::from_column_slice(u0);
    let mut stepper = Rk4::new(op, nl, lambda);
    let period = nl.weight.period();
    let h = period / n_steps as f64;
    let stride = n_steps / SNAPSHOTS_PER_PERIOD;
    for p in 0..n_periods {
        for s in 0..n_steps {
            let t = p as f64 * period + s as f64 * h;
            stepper.step(&mut u, t, h);
            let norm = u.amax();
            if !norm.is_finite() || norm > 10.0 * bound {
                return Err(Error::UnstableStep {
                    norm,
                    bound: 10.0 * bound,
                    time: t + h,
                });
            }
            if (s + 1) % stride == 0 {
                traj.times.push(p as f64 * period + (s + 1) as f64 * h);
                traj.norms.push(norm);
                traj.snapshots.push(u.as_slice().to_vec());
            }
        }
    }
    Ok(traj)
}

fn one_period(stepper: &mut Rk4<'_>, u: &mut DVector<f64>, period: f64, n_steps: usize) {
    let h = period / n_steps as f64;
    for s in 0..n_steps {
        stepper.step(u, s as f64 * h, h);
    }
}

struct Iterated {
    u: DVector<f64>,
    residual: f64,
    periods: usize,
    verdict: Verdict,
}

fn iterate_poincare(
    op: &DispersalOperator,
    nl: &Nonlinearity,
    lambda: f64,
    level: f64,
    n_steps: usize,
    opts: &KppOptions,
) -> Iterated {
    let mut stepper = Rk4::new(op, nl, lambda);
    let period = nl.weight.period();
    let mut u = DVector::from_element(op.len(), level);
    let ext = opts.tol_ext * level.min(1.0);
    let mut residual = f64::INFINITY;
    for k in 1..=opts.max_periods {
        let prev = u.clone();
        one_period(&mut stepper, &mut u, period, n_steps);
        residual = (&u - &prev).amax();
        let norm = u.amax();
        if !norm.is_finite() {
            break;
        }
        if norm < ext {
            return Iterated {
                u,
                residual,
                periods: k,
                verdict: Verdict::Extinction,
            };
        }
        // a geometrically decaying state also has a small step; require the
        // step to be small relative to the state
        if residual < opts.tol_fix && residual < 1e-3 * norm {
            return Iterated {
                u,
                residual,
                periods: k,
                verdict: Verdict::Persistence,
            };
        }
    }
    Iterated {
        u,
        residual,
        periods: opts.max_periods,
        verdict: Verdict::Undecided,
    }
}

fn orbit(
    op: &DispersalOperator,
    nl: &Nonlinearity,
    lambda: f64,
    u: &DVector<f64>,
    n_steps: usize,
) -> Trajectory {
    let mut stepper = Rk4::new(op, nl, lambda);
    let period = nl.weight.period();
    let h = period / n_steps as f64;
    let stride = n_steps / SNAPSHOTS_PER_PERIOD;
    let mut v = u.clone();
    let mut traj = Trajectory {
        times: vec![0.0],
        snapshots: vec![v.as_slice().to_vec()],
        norms: vec![v.amax()],
    };
    for s in 0..n_steps {
        stepper.step(&mut v, s as f64 * h, h);
        if (s + 1) % stride == 0 {
            traj.times.push((s + 1) as f64 * h);
            traj.norms.push(v.amax());
            traj.snapshots.push(v.as_slice().to_vec());
        }
    }
    traj
}

/// Poincaré iteration from `0.1·u_max`; on convergence to a positive state a
/// second run from `0.9·u_max` must reach the same orbit.
pub fn find_periodic_solution(
    op: &DispersalOperator,
    nl: &Nonlinearity,
    lambda: f64,
    opts: &KppOptions,
) -> Result<KppOutcome> {
    nl.weight.compatible_with(op.grid())?;
    let scale = nl.scale();
    let n_steps = steps_per_period(nl, lambda, 1.01 * scale, opts.n_steps);
    let low = iterate_poincare(op, nl, lambda, 0.1 * scale, n_steps, opts);
    let mut outcome = KppOutcome {
        lambda,
        verdict: low.verdict,
        u_star: None,
        poincare_residual: low.residual,
        periods_used: low.periods,
        min_of_u_star: None,
        final_norm: low.u.amax(),
        second_start_distance: None,
        n_steps,
    };
    if low.verdict == Verdict::Persistence {
        let first = orbit(op, nl, lambda, &low.u, n_steps);
        let min = first
            .snapshots
            .iter()
            .flatten()
            .copied()
            .fold(f64::INFINITY, f64::min);
        let high = iterate_poincare(op, nl, lambda, 0.9 * scale, n_steps, opts);
        let distance = if high.verdict == Verdict::Persistence {
            let second = orbit(op, nl, lambda, &high.u, n_steps);
            first
                .snapshots
                .iter()
                .flatten()
                .zip(second.snapshots.iter().flatten())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        } else {
            f64::INFINITY
        };
        outcome.second_start_distance = Some(distance);
        outcome.min_of_u_star = Some(min);
        if min <= 0.0 || distance >= TOL_UNIQUE {
            outcome.verdict = Verdict::Undecided;
        }
        outcome.u_star = Some(first);
    }
    Ok(outcome)
}

#[derive(Clone, Debug, Serialize)]
pub struct ThresholdScan {
    pub rows: Vec<KppOutcome>,
    /// Last extinction and first persistence value of the scan.
    pub bracket: Option<[f64; 2]>,
    /// Root of the linearization.
    pub lambda_p: LambdaPResult,
    /// Whether `λᵖ` lies within the scan bracket widened by one grid spacing
    /// on each side.
    pub bracket_contains_lambda_p: Option<bool>,
    /// No extinction above a persistence value.
    pub monotone: bool,
}

pub fn threshold_scan(
    op: &DispersalOperator,
    nl: &Nonlinearity,
    lambdas: &[f64],
    kpp_opts: &KppOptions,
    solver_opts: &SolverOptions,
) -> Result<ThresholdScan> {
    if lambdas.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter(
            "λ grid must be strictly increasing".to_string(),
        ));
    }
    let rows: Vec<KppOutcome> = lambdas
        .par_iter()
        .map(|&l| find_periodic_solution(op, nl, l, kpp_opts))
        .collect::<Result<_>>()?;
    let first_persist = rows.iter().position(|r| r.verdict == Verdict::Persistence);
    let last_extinct = rows.iter().rposition(|r| r.verdict == Verdict::Extinction);
    let monotone = match (first_persist, last_extinct) {
        (Some(p), Some(e)) => e < p,
        _ => true,
    };
    let bracket = match (last_extinct, first_persist) {
        (Some(e), Some(p)) if e < p => Some([lambdas[e], lambdas[p]]),
        _ => None,
    };
    let lambda_p = solve_lambda_p(op, nl.linearization(), solver_opts)?;
    let bracket_contains_lambda_p = match (bracket, lambda_p.status, lambda_p.lambda_p) {
        (Some([lo, hi]), RootStatus::UniqueRoot, Some(lp)) => {
            let spacing = lambdas.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
            Some(lo - spacing <= lp && lp <= hi + spacing)
        }
        _ => None,
    };
    Ok(ThresholdScan {
        rows,
        bracket,
        lambda_p,
        bracket_contains_lambda_p,
        monotone,
    })
}
