//! Classical RK4 integration of `∂ₜu = K u − b u + λ m(t, x) u`, the period
//! map `Φ(T, 0)` and an order-preservation harness.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::operator::DispersalOperator;
use crate::weights::Weight;

pub const STEPPER_ID: &str = "rk4-fixed";

/// Columns of the period map are integrated in blocks of this width. The
/// width is fixed so results do not depend on the thread count.
const COLUMN_BLOCK: usize = 16;

/// Entries of the period map in `(−CLAMP_TOL, 0)` are set to zero.
const CLAMP_TOL: f64 = 1e-12;

/// Default step count `max(64, ⌈8 T (1 + |λ| ‖m‖∞)⌉)`.
pub fn default_n_steps(period: f64, lambda: f64, m_sup: f64) -> usize {
    let n = (8.0 * period * (1.0 + lambda.abs() * m_sup)).ceil();
    (n as usize).max(64)
}

#[derive(Clone, Debug, Serialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub snapshots: Vec<Vec<f64>>,
    pub norms: Vec<f64>,
}

impl Trajectory {
    pub fn last(&self) -> &[f64] {
        self.snapshots.last().map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

pub(crate) fn sup_norm(u: &[f64]) -> f64 {
    u.iter().fold(0.0, |s, v| s.max(v.abs()))
}

/// Diagonal part `λ m(t, ·) − b` of the generator at one time.
fn diagonal(op: &DispersalOperator, weight: &Weight, lambda: f64, t: f64, buf: &mut [f64]) {
    weight.sample_into(t, op.grid(), buf);
    for (d, b) in buf.iter_mut().zip(op.b_vector().iter()) {
        *d = lambda * *d - b;
    }
}

/// Exponential rate `ω + slack`, with `ω` the sup-norm logarithmic norm of
/// the generator over one period; the exact flow satisfies
/// `‖u(t)‖∞ ≤ e^{ω t}‖u₀‖∞`.
fn growth_rate(op: &DispersalOperator, weight: &Weight, lambda: f64) -> Result<f64> {
    let rows = op.row_sums();
    let omega_k = (0..op.len())
        .map(|j| rows[j] - op.b_vector()[j])
        .fold(f64::NEG_INFINITY, f64::max);
    let n_time = 64;
    let mut buf = vec![0.0; op.len()];
    let mut lm_sup = f64::NEG_INFINITY;
    for i in 0..n_time {
        weight.sample_into(
            i as f64 * weight.period() / n_time as f64,
            op.grid(),
            &mut buf,
        );
        lm_sup = buf.iter().fold(lm_sup, |s, m| s.max(lambda * m));
    }
    let slack = 1.0 + 0.05 * lambda.abs() * weight.sup_norm(op.grid(), n_time)?;
    Ok(omega_k + lm_sup + slack)
}

fn step_bound(rate: f64, elapsed: f64) -> f64 {
    10.0 * (rate * elapsed).exp()
}

struct VectorStepper<'a> {
    op: &'a DispersalOperator,
    k1: DVector<f64>,
    k2: DVector<f64>,
    k3: DVector<f64>,
    k4: DVector<f64>,
    stage: DVector<f64>,
}

impl<'a> VectorStepper<'a> {
    fn new(op: &'a DispersalOperator) -> Self {
        let n = op.len();
        let z = || DVector::zeros(n);
        VectorStepper {
            op,
            k1: z(),
            k2: z(),
            k3: z(),
            k4: z(),
            stage: z(),
        }
    }

    fn rhs(op: &DispersalOperator, d: &[f64], u: &DVector<f64>, out: &mut DVector<f64>) {
        op.k_matrix().mul_to(u, out);
        for j in 0..d.len() {
            out[j] += d[j] * u[j];
        }
    }

    /// One RK4 step given the diagonal at `t`, `t + h/2` and `t + h`.
    fn step(&mut self, u: &mut DVector<f64>, h: f64, d0: &[f64], dm: &[f64], d1: &[f64]) {
        let op = self.op;
        Self::rhs(op, d0, u, &mut self.k1);
        self.stage.copy_from(u);
        self.stage.axpy(0.5 * h, &self.k1, 1.0);
        Self::rhs(op, dm, &self.stage, &mut self.k2);
        self.stage.copy_from(u);
        self.stage.axpy(0.5 * h, &self.k2, 1.0);
        Self::rhs(op, dm, &self.stage, &mut self.k3);
        self.stage.copy_from(u);
        self.stage.axpy(h, &self.k3, 1.0);
        Self::rhs(op, d1, &self.stage, &mut self.k4);
        for j in 0..u.len() {
            u[j] += h / 6.0 * (self.k1[j] + 2.0 * self.k2[j] + 2.0 * self.k3[j] + self.k4[j]);
        }
    }
}

fn check_inputs(op: &DispersalOperator, weight: &Weight, u0: &[f64], n_steps: usize) -> Result<()> {
    if n_steps == 0 {
        return Err(Error::InvalidParameter(
            "n_steps must be at least 1".to_string(),
        ));
    }
    if u0.len() != op.len() {
        return Err(Error::DimensionMismatch(format!(
            "initial field has {} entries, grid has {}",
            u0.len(),
            op.len()
        )));
    }
    weight.compatible_with(op.grid())
}

/// Integrate from `t0` to `t1` with `n_steps` fixed RK4 steps, recording every
/// step. Fails with [`Error::UnstableStep`] if the norm exceeds the a-priori
/// growth bound of the exact flow.
pub fn propagate(
    op: &DispersalOperator,
    weight: &Weight,
    lambda: f64,
    u0: &[f64],
    t0: f64,
    t1: f64,
    n_steps: usize,
) -> Result<Trajectory> {
    let mut traj = Trajectory {
        times: vec![t0],
        snapshots: vec![u0.to_vec()],
        norms: vec![sup_norm(u0)],
    };
    integrate(op, weight, lambda, u0, t0, t1, n_steps, |t, u| {
        traj.times.push(t);
        traj.norms.push(sup_norm(u));
        traj.snapshots.push(u.to_vec());
    })?;
    Ok(traj)
}

/// Like [`propagate`] but only returns the final state.
pub fn advance(
    op: &DispersalOperator,
    weight: &Weight,
    lambda: f64,
    u0: &[f64],
    t0: f64,
    t1: f64,
    n_steps: usize,
) -> Result<Vec<f64>> {
    integrate(op, weight, lambda, u0, t0, t1, n_steps, |_, _| {})
}

#[allow(clippy::too_many_arguments)]
fn integrate(
    op: &DispersalOperator,
    weight: &Weight,
    lambda: f64,
    u0: &[f64],
    t0: f64,
    t1: f64,
    n_steps: usize,
    mut record: impl FnMut(f64, &[f64]),
) -> Result<Vec<f64>> {
    check_inputs(op, weight, u0, n_steps)?;
    let n = op.len();
    let h = (t1 - t0) / n_steps as f64;
    let rate = growth_rate(op, weight, lambda)?;
    let norm0 = sup_norm(u0);
    let mut stepper = VectorStepper::new(op);
    let mut u = DVector::from_column_slice(u0);
    let (mut d0, mut dm, mut d1) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    diagonal(op, weight, lambda, t0, &mut d0);
    for s in 0..n_steps {
        let t = t0 + s as f64 * h;
        let t_next = t0 + (s + 1) as f64 * h;
        diagonal(op, weight, lambda, t + 0.5 * h, &mut dm);
        diagonal(op, weight, lambda, t_next, &mut d1);
        stepper.step(&mut u, h, &d0, &dm, &d1);
        let norm = u.amax();
        let bound = step_bound(rate, (s + 1) as f64 * h.abs()) * norm0;
        if !norm.is_finite() || norm > bound {
            return Err(Error::UnstableStep {
                norm,
                bound,
                time: t_next,
            });
        }
        record(t_next, u.as_slice());
        std::mem::swap(&mut d0, &mut d1);
    }
    Ok(u.data.into())
}

/// Dense representation of the solution operator over `[t0, t1]`.
#[derive(Clone, Debug)]
pub struct PeriodMap {
    pub matrix: DMatrix<f64>,
    pub lambda: f64,
    pub t0: f64,
    pub t1: f64,
    pub n_steps: usize,
    pub stepper_id: &'static str,
    /// Entries below `−1e−12` left in place (discretization artifacts).
    pub negative_entries: usize,
    pub min_entry: f64,
}

/// `Φ(T, 0; λ, m)` with `T` the weight period. `n_steps = None` selects
/// [`default_n_steps`].
pub fn period_map(
    op: &DispersalOperator,
    weight: &Weight,
    lambda: f64,
    n_steps: Option<usize>,
) -> Result<PeriodMap> {
    let period = weight.period();
    let n_steps = match n_steps {
        Some(n) => n,
        None => default_n_steps(period, lambda, weight.sup_norm(op.grid(), 64)?),
    };
    evolution_operator(op, weight, lambda, 0.0, period, n_steps)
}

/// `Φ(t1, t0; λ, m)`: columns are the images of the canonical basis fields.
pub fn evolution_operator(
    op: &DispersalOperator,
    weight: &Weight,
    lambda: f64,
    t0: f64,
    t1: f64,
    n_steps: usize,
) -> Result<PeriodMap> {
    let n = op.len();
    check_inputs(op, weight, &vec![0.0; n], n_steps)?;
    let rate = growth_rate(op, weight, lambda)?;
    let starts: Vec<usize> = (0..n).step_by(COLUMN_BLOCK).collect();
    let blocks: Vec<DMatrix<f64>> = starts
        .par_iter()
        .map(|&c0| {
            let width = COLUMN_BLOCK.min(n - c0);
            let mut y = DMatrix::zeros(n, width);
            for c in 0..width {
                y[(c0 + c, c)] = 1.0;
            }
            block_rk4(op, weight, lambda, &mut y, t0, t1, n_steps, rate)?;
            Ok(y)
        })
        .collect::<Result<_>>()?;

    let mut matrix = DMatrix::zeros(n, n);
    for (&c0, block) in starts.iter().zip(&blocks) {
        matrix.columns_mut(c0, block.ncols()).copy_from(block);
    }
    let mut negative_entries = 0;
    let mut min_entry = f64::INFINITY;
    for v in matrix.iter_mut() {
        min_entry = min_entry.min(*v);
        if *v < 0.0 {
            if *v > -CLAMP_TOL {
                *v = 0.0;
            } else {
                negative_entries += 1;
            }
        }
    }
    if negative_entries > 0 {
        log::warn!(
            "period map has {negative_entries} entries below -{CLAMP_TOL:e} (min {min_entry:e}); \
             consider more time steps"
        );
    }
    Ok(PeriodMap {
        matrix,
        lambda,
        t0,
        t1,
        n_steps,
        stepper_id: STEPPER_ID,
        negative_entries,
        min_entry,
    })
}

#[allow(clippy::too_many_arguments)]
fn block_rk4(
    op: &DispersalOperator,
    weight: &Weight,
    lambda: f64,
    y: &mut DMatrix<f64>,
    t0: f64,
    t1: f64,
    n_steps: usize,
    rate: f64,
) -> Result<()> {
    let (n, w) = y.shape();
    let h = (t1 - t0) / n_steps as f64;
    let k = op.k_matrix();
    let z = || DMatrix::<f64>::zeros(n, w);
    let (mut k1, mut k2, mut k3, mut k4, mut stage) = (z(), z(), z(), z(), z());
    let (mut d0, mut dm, mut d1) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);

    let rhs = |d: &[f64], u: &DMatrix<f64>, out: &mut DMatrix<f64>| {
        out.gemm(1.0, k, u, 0.0);
        for c in 0..w {
            for j in 0..n {
                out[(j, c)] += d[j] * u[(j, c)];
            }
        }
    };

    diagonal(op, weight, lambda, t0, &mut d0);
    for s in 0..n_steps {
        let t = t0 + s as f64 * h;
        let t_next = t0 + (s + 1) as f64 * h;
        diagonal(op, weight, lambda, t + 0.5 * h, &mut dm);
        diagonal(op, weight, lambda, t_next, &mut d1);
        rhs(&d0, y, &mut k1);
        combine(&mut stage, y, 0.5 * h, &k1);
        rhs(&dm, &stage, &mut k2);
        combine(&mut stage, y, 0.5 * h, &k2);
        rhs(&dm, &stage, &mut k3);
        combine(&mut stage, y, h, &k3);
        rhs(&d1, &stage, &mut k4);
        for ((((yv, a), b), c), d) in y
            .iter_mut()
            .zip(k1.iter())
            .zip(k2.iter())
            .zip(k3.iter())
            .zip(k4.iter())
        {
            *yv += h / 6.0 * (a + 2.0 * b + 2.0 * c + d);
        }
        let norm = y.amax();
        let bound = step_bound(rate, (s + 1) as f64 * h.abs());
        if !norm.is_finite() || norm > bound {
            return Err(Error::UnstableStep {
                norm,
                bound,
                time: t_next,
            });
        }
        std::mem::swap(&mut d0, &mut d1);
    }
    Ok(())
}

/// Result of propagating ordered pairs of (weight, initial field).
#[derive(Clone, Debug, Serialize)]
pub struct ComparisonReport {
    pub pairs: usize,
    /// `max_i max_j (u¹ − u²)⁺ / scale_i` over all pairs.
    pub max_violation: f64,
    /// `min_i min_j (u² − u¹) / scale_i` over pairs whose inputs differ.
    pub min_gap: f64,
    /// All pairs ordered within `1e−10 · scale`.
    pub ordered: bool,
    /// Strict ordering at every node for every pair with distinct inputs.
    /// Only asserted when `t1` covers a full period and the kernel graph is
    /// connected; otherwise `None`.
    pub strict: Option<bool>,
    pub strictness_asserted: bool,
}

pub const COMPARISON_TOL: f64 = 1e-10;

/// Propagate `u¹` under `m¹` and `u²` under `m²` over `[0, t1]` and check
/// that `u¹ ≤ u²` is preserved. Requires `m¹ ≤ m²` and `u¹ ≤ u²` pointwise.
pub fn comparison_check(
    op: &DispersalOperator,
    weight_pairs: &[(Weight, Weight)],
    field_pairs: &[(Vec<f64>, Vec<f64>)],
    lambda: f64,
    t1: f64,
    n_steps: usize,
) -> Result<ComparisonReport> {
    if weight_pairs.len() != field_pairs.len() {
        return Err(Error::InvalidParameter(format!(
            "{} weight pairs for {} field pairs",
            weight_pairs.len(),
            field_pairs.len()
        )));
    }
    let period = weight_pairs
        .first()
        .map(|(m, _)| m.period())
        .unwrap_or(f64::INFINITY);
    let asserted = t1 >= period && op.is_connected();

    let outcomes: Vec<(f64, Option<f64>)> = weight_pairs
        .par_iter()
        .zip(field_pairs.par_iter())
        .map(|((m1, m2), (u1, u2))| {
            let a = advance(op, m1, lambda, u1, 0.0, t1, n_steps)?;
            let b = advance(op, m2, lambda, u2, 0.0, t1, n_steps)?;
            let scale = sup_norm(&a).max(sup_norm(&b)).max(f64::MIN_POSITIVE);
            let violation = a
                .iter()
                .zip(&b)
                .map(|(x, y)| (x - y).max(0.0) / scale)
                .fold(0.0, f64::max);
            let distinct = u1 != u2 || m1 != m2;
            let gap = distinct.then(|| {
                a.iter()
                    .zip(&b)
                    .map(|(x, y)| (y - x) / scale)
                    .fold(f64::INFINITY, f64::min)
            });
            Ok((violation, gap))
        })
        .collect::<Result<_>>()?;

    let max_violation = outcomes.iter().map(|o| o.0).fold(0.0, f64::max);
    let gaps: Vec<f64> = outcomes.iter().filter_map(|o| o.1).collect();
    let min_gap = gaps.iter().copied().fold(f64::INFINITY, f64::min);
    let strict_now = gaps.iter().all(|g| *g > 0.0);
    Ok(ComparisonReport {
        pairs: weight_pairs.len(),
        max_violation,
        min_gap,
        ordered: max_violation <= COMPARISON_TOL,
        strict: asserted.then_some(strict_now),
        strictness_asserted: asserted,
    })
}

/// `out = y + a·k`.
fn combine(out: &mut DMatrix<f64>, y: &DMatrix<f64>, a: f64, k: &DMatrix<f64>) {
    for ((o, yv), kv) in out.iter_mut().zip(y.iter()).zip(k.iter()) {
        *o = yv + a * kv;
    }
}
