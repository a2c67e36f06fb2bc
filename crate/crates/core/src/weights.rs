//! Time-periodic weights `m(t, x)`, their time averages, the functional
//! `∫₀ᵀ max_x m(t, x) dt` and the existence conditions for a positive
//! weighted principal spectrum point.

use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::geometry::{Boundary, Grid};
use crate::Check;

#[derive(Clone, Debug, PartialEq)]
enum Source {
    Closed(Expr),
    /// Row-major `n_time × n_nodes` samples at `t_k = k T / n_time`,
    /// linearly interpolated in time.
    Sampled {
        values: Vec<f64>,
        n_time: usize,
        n_nodes: usize,
    },
}

/// A `T`-periodic weight, either closed form or sampled on a
/// (time × grid node) lattice.
#[derive(Clone, Debug, PartialEq)]
pub struct Weight {
    period: f64,
    source: Source,
}

fn check_period(period: f64) -> Result<()> {
    if period > 0.0 && period.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "weight period must be positive, got {period}"
        )))
    }
}

fn check_n_time(n_time: usize) -> Result<()> {
    if n_time >= 4 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "n_time must be at least 4, got {n_time}"
        )))
    }
}

impl Weight {
    pub fn closed_form(expr: Expr, period: f64) -> Result<Weight> {
        check_period(period)?;
        Ok(Weight {
            period,
            source: Source::Closed(expr),
        })
    }

    pub fn parse(src: &str, period: f64) -> Result<Weight> {
        Weight::closed_form(src.parse()?, period)
    }

    pub fn constant(c: f64, period: f64) -> Result<Weight> {
        Weight::closed_form(Expr::Const(c), period)
    }

    /// `values[k * n_nodes + j]` is the weight at time `kT/n_time` and node `j`.
    pub fn sampled(values: Vec<f64>, n_time: usize, n_nodes: usize, period: f64) -> Result<Weight> {
        check_period(period)?;
        if n_time == 0 || n_nodes == 0 || values.len() != n_time * n_nodes {
            return Err(Error::WeightData(format!(
                "expected {n_time} × {n_nodes} samples, got {}",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::WeightData(format!("non-finite sample {v}")));
        }
        Ok(Weight {
            period,
            source: Source::Sampled {
                values,
                n_time,
                n_nodes,
            },
        })
    }

    /// A time-independent weight given by its node values.
    pub fn autonomous_field(field: &[f64], period: f64) -> Result<Weight> {
        Weight::sampled(field.to_vec(), 1, field.len(), period)
    }

    /// Load samples from CSV rows `t_index,node_index,value`. A header row and
    /// `#` comment lines are skipped.
    pub fn from_csv(path: &Path, period: f64) -> Result<Weight> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_path(path)?;
        let mut rows = Vec::new();
        for (i, record) in reader.records().enumerate() {
            let record = record?;
            if record.len() != 3 {
                return Err(Error::WeightData(format!(
                    "row {}: expected 3 columns, got {}",
                    i + 1,
                    record.len()
                )));
            }
            let parsed = (
                record[0].parse::<usize>(),
                record[1].parse::<usize>(),
                record[2].parse::<f64>(),
            );
            match parsed {
                (Ok(k), Ok(j), Ok(v)) => rows.push((k, j, v)),
                _ if i == 0 => continue,
                _ => return Err(Error::WeightData(format!("row {}: malformed entry", i + 1))),
            }
        }
        let n_time = rows.iter().map(|r| r.0 + 1).max().unwrap_or(0);
        let n_nodes = rows.iter().map(|r| r.1 + 1).max().unwrap_or(0);
        let mut values = vec![f64::NAN; n_time * n_nodes];
        for (k, j, v) in rows {
            values[k * n_nodes + j] = v;
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(Error::WeightData(
                "sample lattice has missing (t_index, node_index) entries".to_string(),
            ));
        }
        Weight::sampled(values, n_time, n_nodes, period)
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn expr(&self) -> Option<&Expr> {
        match &self.source {
            Source::Closed(e) => Some(e),
            Source::Sampled { .. } => None,
        }
    }

    pub fn is_closed_form(&self) -> bool {
        matches!(self.source, Source::Closed(_))
    }

    /// Time lattice size of a sampled weight.
    pub fn sample_lattice(&self) -> Option<usize> {
        match &self.source {
            Source::Sampled { n_time, .. } => Some(*n_time),
            Source::Closed(_) => None,
        }
    }

    /// Whether the weight is known to be independent of time.
    pub fn is_autonomous(&self) -> bool {
        match &self.source {
            Source::Closed(e) => !e.depends_on_time(),
            Source::Sampled { n_time, .. } => *n_time == 1,
        }
    }

    fn check_grid(&self, grid: &Grid) -> Result<()> {
        match &self.source {
            Source::Closed(e) if e.spatial_arity() > grid.dim() => {
                Err(Error::DimensionMismatch(format!(
                    "weight uses {} coordinates on a {}-dimensional grid",
                    e.spatial_arity(),
                    grid.dim()
                )))
            }
            Source::Sampled { n_nodes, .. } if *n_nodes != grid.len() => {
                Err(Error::DimensionMismatch(format!(
                    "sampled weight has {n_nodes} nodes, grid has {}",
                    grid.len()
                )))
            }
            _ => Ok(()),
        }
    }

    /// Validate that the weight can be evaluated on `grid`.
    pub fn compatible_with(&self, grid: &Grid) -> Result<()> {
        self.check_grid(grid)
    }

    /// Closed-form value at an arbitrary point; `None` for sampled weights.
    pub fn eval_point(&self, t: f64, x: &[f64]) -> Option<f64> {
        self.expr()
            .map(|e| e.eval(t.rem_euclid(self.period), x, self.period))
    }

    /// Node values at time `t` written into `out`.
    pub fn sample_into(&self, t: f64, grid: &Grid, out: &mut [f64]) {
        let tau = t.rem_euclid(self.period);
        match &self.source {
            Source::Closed(e) => {
                for (o, x) in out.iter_mut().zip(grid.nodes()) {
                    *o = e.eval(tau, x, self.period);
                }
            }
            Source::Sampled {
                values,
                n_time,
                n_nodes,
            } => {
                if *n_time == 1 {
                    out.copy_from_slice(&values[..*n_nodes]);
                    return;
                }
                let s = tau / self.period * *n_time as f64;
                let k0 = (s.floor() as usize) % n_time;
                let k1 = (k0 + 1) % n_time;
                let frac = s - s.floor();
                let (r0, r1) = (
                    &values[k0 * n_nodes..(k0 + 1) * n_nodes],
                    &values[k1 * n_nodes..(k1 + 1) * n_nodes],
                );
                for ((o, a), b) in out.iter_mut().zip(r0).zip(r1) {
                    *o = (1.0 - frac) * a + frac * b;
                }
            }
        }
    }

    pub fn sample(&self, t: f64, grid: &Grid) -> Vec<f64> {
        let mut out = vec![0.0; grid.len()];
        self.sample_into(t, grid, &mut out);
        out
    }

    /// Sample times used for time quadrature: a sampled weight's own lattice,
    /// otherwise `n_time` equispaced points.
    fn quadrature_times(&self, n_time: usize) -> Vec<f64> {
        let n = self.sample_lattice().unwrap_or(n_time);
        (0..n).map(|k| k as f64 * self.period / n as f64).collect()
    }

    /// Time average over one period (composite trapezoid on the periodic
    /// lattice) at every grid node.
    pub fn time_average(&self, grid: &Grid, n_time: usize) -> Result<Vec<f64>> {
        check_n_time(n_time)?;
        self.check_grid(grid)?;
        let times = self.quadrature_times(n_time);
        let mut acc = vec![0.0; grid.len()];
        let mut buf = vec![0.0; grid.len()];
        for &t in &times {
            self.sample_into(t, grid, &mut buf);
            for (a, b) in acc.iter_mut().zip(&buf) {
                *a += b;
            }
        }
        let n = times.len() as f64;
        Ok(acc.into_iter().map(|a| a / n).collect())
    }

    /// Time average at an arbitrary point (closed form only).
    pub fn time_average_at(&self, x: &[f64], n_time: usize) -> Option<f64> {
        let e = self.expr()?;
        let times = self.quadrature_times(n_time);
        let sum: f64 = times.iter().map(|&t| e.eval(t, x, self.period)).sum();
        Some(sum / times.len() as f64)
    }

    /// Time trace of `max_x m(t, ·)` over grid nodes at the quadrature times.
    pub fn max_trace(&self, grid: &Grid, n_time: usize) -> Result<Vec<f64>> {
        check_n_time(n_time)?;
        self.check_grid(grid)?;
        let mut buf = vec![0.0; grid.len()];
        Ok(self
            .quadrature_times(n_time)
            .iter()
            .map(|&t| {
                self.sample_into(t, grid, &mut buf);
                buf.iter().copied().fold(f64::NEG_INFINITY, f64::max)
            })
            .collect())
    }

    /// `∫₀ᵀ max_x m(t, x) dt`, the max taken over grid nodes.
    pub fn p_functional(&self, grid: &Grid, n_time: usize) -> Result<f64> {
        let trace = self.max_trace(grid, n_time)?;
        Ok(trace.iter().sum::<f64>() * self.period / trace.len() as f64)
    }

    /// `∫_D ∫₀ᵀ m dt dx` by the grid and time quadratures.
    pub fn space_time_integral(&self, grid: &Grid, n_time: usize) -> Result<f64> {
        let avg = self.time_average(grid, n_time)?;
        Ok(self.period * grid.integrate(&avg))
    }

    /// `max |m(t, x)|` over the quadrature lattice.
    pub fn sup_norm(&self, grid: &Grid, n_time: usize) -> Result<f64> {
        check_n_time(n_time)?;
        self.check_grid(grid)?;
        let mut buf = vec![0.0; grid.len()];
        let mut sup = 0.0_f64;
        for t in self.quadrature_times(n_time) {
            self.sample_into(t, grid, &mut buf);
            sup = buf.iter().fold(sup, |s, v| s.max(v.abs()));
        }
        Ok(sup)
    }

    /// Whether `m(t, x) = m(t)`. Closed forms are decided structurally; for
    /// sampled weights every time slice must be constant across nodes.
    pub fn is_space_independent(&self, grid: &Grid, n_time: usize) -> Result<bool> {
        if let Some(e) = self.expr() {
            if !e.depends_on_space() {
                return Ok(true);
            }
        }
        check_n_time(n_time)?;
        self.check_grid(grid)?;
        let scale = 1.0 + self.sup_norm(grid, n_time)?;
        let mut buf = vec![0.0; grid.len()];
        for t in self.quadrature_times(n_time) {
            self.sample_into(t, grid, &mut buf);
            let (lo, hi) = buf
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| {
                    (l.min(*v), h.max(*v))
                });
            if hi - lo > 1e-12 * scale {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// `α m + c`, keeping the representation.
    pub fn affine(&self, alpha: f64, shift: f64) -> Weight {
        let source = match &self.source {
            Source::Closed(e) => {
                Source::Closed(Expr::Const(alpha) * e.clone() + Expr::Const(shift))
            }
            Source::Sampled {
                values,
                n_time,
                n_nodes,
            } => Source::Sampled {
                values: values.iter().map(|v| alpha * v + shift).collect(),
                n_time: *n_time,
                n_nodes: *n_nodes,
            },
        };
        Weight {
            period: self.period,
            source,
        }
    }

    pub fn shifted(&self, c: f64) -> Weight {
        self.affine(1.0, c)
    }

    pub fn scaled(&self, c: f64) -> Weight {
        self.affine(c, 0.0)
    }

    /// Pointwise `self + other` for two closed forms with the same period.
    pub fn add(&self, other: &Weight) -> Result<Weight> {
        match (self.expr(), other.expr()) {
            (Some(a), Some(b)) if self.period == other.period => {
                Weight::closed_form(a.clone() + b.clone(), self.period)
            }
            _ => Err(Error::InvalidParameter(
                "only closed-form weights with equal periods can be added".to_string(),
            )),
        }
    }

    /// Node values at `n_time` equispaced times, row-major (time × node).
    pub fn sample_lattice_values(&self, grid: &Grid, n_time: usize) -> Result<Vec<f64>> {
        self.check_grid(grid)?;
        let mut out = Vec::with_capacity(n_time * grid.len());
        for k in 0..n_time {
            out.extend(self.sample(k as f64 * self.period / n_time as f64, grid));
        }
        Ok(out)
    }
}

/// Summary statistics of a weight on a grid.
#[derive(Clone, Debug, Serialize)]
pub struct WeightSummary {
    pub m_hat: Vec<f64>,
    pub m_tilde: Vec<f64>,
    pub p_value: f64,
    pub integral_m_hat: f64,
    pub m_hat_max: f64,
    pub m_hat_min: f64,
}

pub fn summarize(weight: &Weight, grid: &Grid, n_time: usize) -> Result<WeightSummary> {
    let m_hat = weight.time_average(grid, n_time)?;
    let m_tilde = weight.max_trace(grid, n_time)?;
    let p_value = m_tilde.iter().sum::<f64>() * weight.period() / m_tilde.len() as f64;
    let integral_m_hat = grid.integrate(&m_hat);
    let m_hat_max = m_hat.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let m_hat_min = m_hat.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(WeightSummary {
        m_hat,
        m_tilde,
        p_value,
        integral_m_hat,
        m_hat_max,
        m_hat_min,
    })
}

/// Outcome of checking the existence condition attached to a boundary type:
/// positivity of the max-functional, plus negativity of the space-time
/// integral for Neumann-type and periodic boundaries.
#[derive(Clone, Debug, Serialize)]
pub struct ConditionReport {
    pub boundary: Boundary,
    pub p_value: f64,
    pub integral: f64,
    /// Sign test `P(m) > 0`.
    pub p_positive: Check,
    /// Sign test `∫∫ m < 0`; `Yes` for Dirichlet-type where it is not required.
    pub integral_negative: Check,
    pub holds: Check,
}

impl ConditionReport {
    pub fn d_holds(&self) -> Check {
        self.for_boundary(Boundary::DirichletType)
    }

    pub fn n_holds(&self) -> Check {
        self.for_boundary(Boundary::NeumannType)
    }

    pub fn p_holds(&self) -> Check {
        self.for_boundary(Boundary::Periodic)
    }

    fn for_boundary(&self, b: Boundary) -> Check {
        if self.boundary == b {
            self.holds
        } else {
            Check::Unknown
        }
    }
}

fn sign_check(value: f64, want_positive: bool) -> Check {
    let tol = 1e-9 * (1.0 + value.abs());
    if value.abs() <= tol {
        Check::Marginal
    } else if (value > 0.0) == want_positive {
        Check::Yes
    } else {
        Check::No
    }
}

pub fn check_conditions(
    weight: &Weight,
    boundary: Boundary,
    grid: &Grid,
    n_time: usize,
) -> Result<ConditionReport> {
    let p_value = weight.p_functional(grid, n_time)?;
    let integral = weight.space_time_integral(grid, n_time)?;
    let p_positive = sign_check(p_value, true);
    let integral_negative = match boundary {
        Boundary::DirichletType => Check::Yes,
        _ => sign_check(integral, false),
    };
    let holds = match (p_positive, integral_negative) {
        (Check::No, _) | (_, Check::No) => Check::No,
        (Check::Yes, Check::Yes) => Check::Yes,
        _ => Check::Marginal,
    };
    Ok(ConditionReport {
        boundary,
        p_value,
        integral,
        p_positive,
        integral_negative,
        holds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_grid;
    use proptest::prelude::*;

    fn grid1(b: Boundary, n: usize) -> Grid {
        build_grid(b, &[1.0], n).unwrap()
    }

    #[test]
    fn time_average_examples() {
        let g = grid1(Boundary::DirichletType, 16);
        let w = Weight::parse("sin(2*pi*t/T) * (1 + x^2)", 1.0).unwrap();
        assert!(w
            .time_average(&g, 32)
            .unwrap()
            .iter()
            .all(|v| v.abs() < 1e-14));

        let w = Weight::parse("cos(3*x) - x", 2.0).unwrap();
        let avg = w.time_average(&g, 8).unwrap();
        for (a, x) in avg.iter().zip(g.nodes()) {
            assert!((a - ((3.0 * x[0]).cos() - x[0])).abs() < 1e-15);
        }

        let w = Weight::parse("cos(2*pi*t/T)^2 * exp(x)", 0.7).unwrap();
        let avg = w.time_average(&g, 16).unwrap();
        for (a, x) in avg.iter().zip(g.nodes()) {
            assert!((a - x[0].exp() / 2.0).abs() < 1e-14);
        }
    }

    #[test]
    fn p_functional_examples() {
        let g = grid1(Boundary::DirichletType, 10);
        let w = Weight::parse("sin(2*pi*t/T)", 1.0).unwrap();
        assert!(w.p_functional(&g, 64).unwrap().abs() < 1e-14);

        // n = 9 puts a node at x = 1/2 where cos(2πx) = −1.
        let p = build_grid(Boundary::Periodic, &[1.0], 9).unwrap();
        let w = Weight::parse("sin(2*pi*t/T) - cos(2*pi*x)", 3.0).unwrap();
        assert!((w.p_functional(&p, 64).unwrap() - 3.0).abs() < 1e-13);

        let w = Weight::parse("0.3 - (x - 0.45)^2", 2.5).unwrap();
        let max = g
            .nodes()
            .map(|x| 0.3 - (x[0] - 0.45).powi(2))
            .fold(f64::NEG_INFINITY, f64::max);
        assert!((w.p_functional(&g, 8).unwrap() - 2.5 * max).abs() < 1e-14);
    }

    #[test]
    fn condition_examples() {
        let g = grid1(Boundary::NeumannType, 50);
        // max > 0 and ∫ m = −0.3
        let w = Weight::parse("1.4*x - 1", 1.0).unwrap();
        let r = check_conditions(&w, Boundary::NeumannType, &g, 8).unwrap();
        assert!((r.integral + 0.3).abs() < 1e-12);
        assert_eq!(r.holds, Check::Yes);
        assert_eq!(r.n_holds(), Check::Yes);
        assert_eq!(r.d_holds(), Check::Unknown);

        let w = Weight::constant(-1.0, 2.0).unwrap();
        let r = check_conditions(&w, Boundary::DirichletType, &g, 8).unwrap();
        assert!((r.p_value + 2.0).abs() < 1e-14);
        assert_eq!(r.d_holds(), Check::No);

        let w = Weight::parse("sin(2*pi*t/T) + 0.5", 1.0).unwrap();
        let r = check_conditions(&w, Boundary::DirichletType, &g, 64).unwrap();
        assert!((r.p_value - 0.5).abs() < 1e-14);
        assert_eq!(r.holds, Check::Yes);

        // Boundary of the integral clause is marginal, not decided.
        let w = Weight::parse("sin(2*pi*t/T)", 1.0).unwrap();
        let r = check_conditions(&w, Boundary::Periodic, &g, 64).unwrap();
        assert_eq!(r.holds, Check::Marginal);
    }

    #[test]
    fn sampled_weight_interpolates_periodically() {
        let g = grid1(Boundary::DirichletType, 2);
        let w = Weight::sampled(vec![0.0, 1.0, 2.0, 3.0], 2, 2, 1.0).unwrap();
        assert_eq!(w.sample(0.25, &g), vec![1.0, 2.0]);
        assert_eq!(w.sample(0.75, &g), vec![1.0, 2.0]);
        assert_eq!(w.sample(1.5, &g), vec![2.0, 3.0]);
        assert_eq!(w.time_average(&g, 4).unwrap(), vec![1.0, 2.0]);
        assert!(Weight::sampled(vec![0.0; 3], 2, 2, 1.0).is_err());
        let g3 = grid1(Boundary::DirichletType, 3);
        assert!(w.time_average(&g3, 4).is_err());
    }

    #[test]
    fn space_independence() {
        let g = grid1(Boundary::NeumannType, 8);
        assert!(Weight::parse("sin(2*pi*t/T)", 1.0)
            .unwrap()
            .is_space_independent(&g, 8)
            .unwrap());
        assert!(!Weight::parse("x*t", 1.0)
            .unwrap()
            .is_space_independent(&g, 8)
            .unwrap());
        let flat = Weight::sampled(vec![1.0, 1.0, 2.0, 2.0], 2, 2, 1.0).unwrap();
        assert!(flat
            .is_space_independent(&grid1(Boundary::NeumannType, 2), 4)
            .unwrap());
    }

    #[test]
    fn p_functional_converges_under_time_refinement() {
        let g = grid1(Boundary::DirichletType, 7);
        let w = Weight::parse("sin(2*pi*t/T)*x + 0.3*cos(4*pi*t/T)*(1 - x)", 1.0).unwrap();
        let exact = w.p_functional(&g, 1 << 14).unwrap();
        let errs: Vec<f64> = [32, 128, 512]
            .iter()
            .map(|&n| (w.p_functional(&g, n).unwrap() - exact).abs())
            .collect();
        assert!(errs[2] < errs[0] && errs[2] < 1e-4, "{errs:?}");
    }

    #[test]
    fn csv_round_trip() {
        let dir = std::env::temp_dir().join(format!("perispec-w-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("w.csv");
        std::fs::write(
            &path,
            "# perispec-csv v1\nt_index,node_index,value\n0,0,1.5\n0,1,-2\n1,0,0.5\n1,1,4\n",
        )
        .unwrap();
        let w = Weight::from_csv(&path, 2.0).unwrap();
        assert_eq!(w.sample_lattice(), Some(2));
        assert_eq!(
            w.sample(0.0, &grid1(Boundary::DirichletType, 2)),
            vec![1.5, -2.0]
        );

        std::fs::write(&path, "0,0,1\n1,1,2\n").unwrap();
        assert!(Weight::from_csv(&path, 1.0).is_err());
        std::fs::remove_dir_all(&dir).ok();
    }

    proptest! {
        #[test]
        fn p_dominates_max_of_average(a in -2.0..2.0f64, b in -2.0..2.0f64, c in -1.0..1.0f64, k in 1..4i32) {
            let g = grid1(Boundary::DirichletType, 12);
            let src = format!("{a}*sin(2*pi*t/T)*cos({k}*x) + {b}*cos(2*pi*t/T)*x^2 + {c}");
            let w = Weight::parse(&src, 1.3).unwrap();
            let p = w.p_functional(&g, 32).unwrap();
            let avg = w.time_average(&g, 32).unwrap();
            let max = avg.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(p >= 1.3 * max - 1e-12);
        }

        #[test]
        fn time_average_is_linear(alpha in -3.0..3.0f64, beta in -3.0..3.0f64, s in 0.1..2.0f64) {
            let g = grid1(Boundary::NeumannType, 9);
            let m1 = Weight::parse(&format!("sin(2*pi*t/T + {s})*x"), 1.0).unwrap();
            let m2 = Weight::parse("cos(2*pi*t/T)^2 - x", 1.0).unwrap();
            let combo = m1.scaled(alpha).add(&m2.scaled(beta)).unwrap();
            let lhs = combo.time_average(&g, 16).unwrap();
            let a1 = m1.time_average(&g, 16).unwrap();
            let a2 = m2.time_average(&g, 16).unwrap();
            for ((l, x), y) in lhs.iter().zip(&a1).zip(&a2) {
                prop_assert!((l - (alpha * x + beta * y)).abs() < 1e-12);
            }
        }
    }
}
