//! Assembly of the discrete dispersal operator `u ↦ K u − b ∘ u` and the
//! time-dependent generator `K − b + λ m(t, ·)`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{wrap_kernel, Boundary, Grid, Kernel, WrappedKernel};
use crate::weights::Weight;

#[derive(Clone, Debug)]
pub struct DispersalOperator {
    kernel: Kernel,
    wrapped: Option<WrappedKernel>,
    grid: Grid,
    /// `K[j, k] = κ(x_k − x_j) w_k` (or `κ̃` on the periodic cell).
    k: DMatrix<f64>,
    b: DVector<f64>,
}

/// Assemble `K` and `b` on `grid`. For periodic grids the kernel is wrapped
/// onto the cell first. The Neumann-type `b` is the row sum `K·𝟙` computed
/// with the same matrix-vector product used everywhere else, so constants are
/// an exact discrete null vector of `K − b`.
pub fn assemble(kernel: &Kernel, grid: &Grid) -> Result<DispersalOperator> {
    if kernel.dim() != grid.dim() {
        return Err(Error::DimensionMismatch(format!(
            "{}-dimensional kernel on a {}-dimensional grid",
            kernel.dim(),
            grid.dim()
        )));
    }
    let wrapped = match grid.boundary() {
        Boundary::Periodic => Some(wrap_kernel(kernel, grid.lengths())?),
        _ => None,
    };
    let n = grid.len();
    let dim = grid.dim();
    let w = grid.quad_weights();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|j| {
            let xj = grid.node(j);
            let mut z = vec![0.0; dim];
            (0..n)
                .map(|k| {
                    let xk = grid.node(k);
                    for a in 0..dim {
                        z[a] = xk[a] - xj[a];
                    }
                    let kv = match &wrapped {
                        Some(wk) => wk.eval(&z),
                        None => kernel.eval(&z),
                    };
                    kv * w[k]
                })
                .collect()
        })
        .collect();
    let k = DMatrix::from_fn(n, n, |j, c| rows[j][c]);
    // Periodic rows are translates of one another, so `K𝟙` is constant and
    // equals the discrete cell mass of the wrapped kernel.
    let b = match grid.boundary() {
        Boundary::NeumannType | Boundary::Periodic => &k * DVector::from_element(n, 1.0),
        Boundary::DirichletType => DVector::from_element(n, 1.0),
    };
    Ok(DispersalOperator {
        kernel: kernel.clone(),
        wrapped,
        grid: grid.clone(),
        k,
        b,
    })
}

impl DispersalOperator {
    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn wrapped_kernel(&self) -> Option<&WrappedKernel> {
        self.wrapped.as_ref()
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn boundary(&self) -> Boundary {
        self.grid.boundary()
    }

    pub fn k_matrix(&self) -> &DMatrix<f64> {
        &self.k
    }

    pub fn b_vector(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn len(&self) -> usize {
        self.b.len()
    }

    pub fn is_empty(&self) -> bool {
        self.b.is_empty()
    }

    /// Row sums of `K`, i.e. `∫_D κ(y − x_j) dy` by quadrature.
    pub fn row_sums(&self) -> DVector<f64> {
        &self.k * DVector::from_element(self.len(), 1.0)
    }

    /// `K − diag(b)` as a dense matrix.
    pub fn dispersal_matrix(&self) -> DMatrix<f64> {
        let mut a = self.k.clone();
        for j in 0..self.len() {
            a[(j, j)] -= self.b[j];
        }
        a
    }

    /// Whether every node reaches every other through kernel couplings.
    pub fn is_connected(&self) -> bool {
        let n = self.len();
        if n == 0 {
            return true;
        }
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(j) = stack.pop() {
            for (k, s) in seen.iter_mut().enumerate() {
                if !*s && self.k[(j, k)] > 0.0 {
                    *s = true;
                    stack.push(k);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// `b(x)` at an arbitrary point of the box. For Neumann-type boundaries
    /// the integral is taken with a fine midpoint rule.
    pub fn b_at(&self, x: &[f64]) -> f64 {
        match self.boundary() {
            Boundary::NeumannType => {
                let lengths = self.grid.lengths();
                let n = if lengths.len() == 1 { 4096 } else { 256 };
                let hs: Vec<f64> = lengths.iter().map(|l| l / n as f64).collect();
                match lengths.len() {
                    1 => {
                        (0..n)
                            .map(|i| self.kernel.eval(&[(i as f64 + 0.5) * hs[0] - x[0]]))
                            .sum::<f64>()
                            * hs[0]
                    }
                    _ => {
                        let mut acc = 0.0;
                        for i in 0..n {
                            let z0 = (i as f64 + 0.5) * hs[0] - x[0];
                            for j in 0..n {
                                acc += self.kernel.eval(&[z0, (j as f64 + 0.5) * hs[1] - x[1]]);
                            }
                        }
                        acc * hs[0] * hs[1]
                    }
                }
            }
            Boundary::Periodic => self.b[0],
            Boundary::DirichletType => 1.0,
        }
    }

    /// Generator applied to `u` at time `t`: `K u − b ∘ u + λ m(t, ·) ∘ u`.
    pub fn apply_generator(&self, weight: &Weight, lambda: f64, t: f64, u: &[f64]) -> Vec<f64> {
        let m = weight.sample(t, &self.grid);
        self.apply_with_samples(&m, lambda, u)
    }

    pub(crate) fn apply_with_samples(&self, m: &[f64], lambda: f64, u: &[f64]) -> Vec<f64> {
        let uv = DVector::from_column_slice(u);
        let mut out = &self.k * &uv;
        for j in 0..u.len() {
            out[j] += (lambda * m[j] - self.b[j]) * u[j];
        }
        out.data.into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_grid, make_kernel, Profile};
    use proptest::prelude::*;

    fn op(b: Boundary, n: usize, r: f64) -> DispersalOperator {
        let k = make_kernel(Profile::Parabolic, r, 1).unwrap();
        let g = build_grid(b, &[1.0], n).unwrap();
        assemble(&k, &g).unwrap()
    }

    // ∫₀¹ κ(y − x) dy for the unit parabolic kernel.
    fn parabolic_mass_on_unit_interval(x: f64) -> f64 {
        0.75 * (1.0 - ((1.0 - x).powi(3) + x.powi(3)) / 3.0)
    }

    #[test]
    fn neumann_rows_sum_to_b() {
        for n in [5, 16, 33] {
            let o = op(Boundary::NeumannType, n, 0.3);
            let diff = (o.row_sums() - o.b_vector()).amax();
            assert_eq!(diff, 0.0);
            let r = o.apply_generator(
                &Weight::constant(0.0, 1.0).unwrap(),
                0.0,
                0.0,
                &vec![1.0; n],
            );
            assert!(r.iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn dirichlet_row_sum_at_centre() {
        // n = 101 puts a node at x = 1/2.
        let o = op(Boundary::DirichletType, 101, 1.0);
        assert!(o.b_vector().iter().all(|b| *b == 1.0));
        let rs = o.row_sums();
        assert!((rs[50] - 0.6875).abs() < 1e-4, "{}", rs[50]);
        assert!((parabolic_mass_on_unit_interval(0.5) - 0.6875).abs() < 1e-15);
    }

    #[test]
    fn dirichlet_generator_on_constants_is_negative() {
        let o = op(Boundary::DirichletType, 32, 1.0);
        let w = Weight::constant(0.0, 1.0).unwrap();
        let r = o.apply_generator(&w, 0.0, 0.0, &vec![1.0; 32]);
        let rs = o.row_sums();
        for (j, v) in r.iter().enumerate() {
            assert!((v - (rs[j] - 1.0)).abs() < 1e-15);
            assert!(*v < 0.0);
        }
        // most negative at the boundary, where the most mass leaks out
        assert!(r[0] < r[16]);
    }

    #[test]
    fn periodic_rows_hold_full_mass() {
        let k = make_kernel(Profile::Cosine, 0.4, 1).unwrap();
        let g = build_grid(Boundary::Periodic, &[1.0], 64).unwrap();
        let o = assemble(&k, &g).unwrap();
        let rs = o.row_sums();
        assert!(rs.iter().all(|s| (s - 1.0).abs() < 1e-3));
        // translation invariance on the cell
        assert!((rs[0] - rs[40]).abs() < 1e-14);
        assert!(o.b_vector().iter().all(|b| (b - rs[0]).abs() < 1e-15));
    }

    #[test]
    fn neumann_b_matches_analytic_mass() {
        let o = op(Boundary::NeumannType, 64, 1.0);
        for (j, x) in o.grid().nodes().enumerate() {
            let exact = parabolic_mass_on_unit_interval(x[0]);
            assert!((o.b_vector()[j] - exact).abs() < 1e-4);
            assert!((o.b_at(x) - exact).abs() < 1e-7);
        }
    }

    #[test]
    fn constant_weight_adds_scalar_shift() {
        let o = op(Boundary::DirichletType, 12, 0.5);
        let u: Vec<f64> = (0..12).map(|i| (i as f64 * 0.7).sin()).collect();
        let zero = Weight::constant(0.0, 1.0).unwrap();
        let c = Weight::constant(0.8, 1.0).unwrap();
        let base = o.apply_generator(&zero, 1.7, 0.3, &u);
        let shifted = o.apply_generator(&c, 1.7, 0.3, &u);
        for j in 0..12 {
            assert!((shifted[j] - (base[j] + 1.7 * 0.8 * u[j])).abs() < 1e-14);
        }
    }

    #[test]
    fn rejects_dimension_mismatch() {
        let k = make_kernel(Profile::Parabolic, 1.0, 2).unwrap();
        let g = build_grid(Boundary::DirichletType, &[1.0], 8).unwrap();
        assert!(matches!(assemble(&k, &g), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn two_dimensional_assembly() {
        let k = make_kernel(Profile::Parabolic, 0.5, 2).unwrap();
        let g = build_grid(Boundary::NeumannType, &[1.0, 1.0], 6).unwrap();
        let o = assemble(&k, &g).unwrap();
        assert_eq!(o.len(), 36);
        assert!(o.is_connected());
        assert!(o.k_matrix().iter().all(|v| *v >= 0.0));
        let d = (o.k_matrix() - o.k_matrix().transpose()).amax();
        assert!(d < 1e-15);
    }

    proptest! {
        #[test]
        fn dirichlet_quadratic_form_is_negative(vals in proptest::collection::vec(0.01..5.0f64, 20)) {
            let o = op(Boundary::DirichletType, 20, 0.4);
            let w = o.grid().quad_weights().to_vec();
            let a = o.dispersal_matrix();
            let phi = DVector::from_vec(vals.clone());
            let lhs: f64 = (0..20).map(|j| w[j] * (&a * &phi)[j] * phi[j]).sum();
            // −½ΣΣ w_j w_k κ(x_k − x_j)(φ_j − φ_k)² − Σ w_j (1 − Σ_k K[j,k]) φ_j²
            let k = o.k_matrix();
            let rs = o.row_sums();
            let mut rhs = 0.0;
            for j in 0..20 {
                for c in 0..20 {
                    rhs -= 0.5 * w[j] * k[(j, c)] * (phi[j] - phi[c]).powi(2);
                }
                rhs -= w[j] * (1.0 - rs[j]) * phi[j] * phi[j];
            }
            prop_assert!((lhs - rhs).abs() < 1e-12 * (1.0 + lhs.abs()));
            prop_assert!(lhs < 0.0);
        }

        #[test]
        fn k_is_self_adjoint_in_quadrature_inner_product(
            u in proptest::collection::vec(-1.0..1.0f64, 24),
            v in proptest::collection::vec(-1.0..1.0f64, 24),
            periodic in proptest::bool::ANY,
        ) {
            let b = if periodic { Boundary::Periodic } else { Boundary::NeumannType };
            let o = op(b, 24, 0.35);
            let g = o.grid();
            let ku: Vec<f64> = (o.k_matrix() * DVector::from_vec(u.clone())).data.into();
            let kv: Vec<f64> = (o.k_matrix() * DVector::from_vec(v.clone())).data.into();
            prop_assert!((g.inner(&ku, &v) - g.inner(&u, &kv)).abs() < 1e-12);
        }

        #[test]
        fn k_preserves_nonnegativity(u in proptest::collection::vec(0.0..1.0f64, 16)) {
            let o = op(Boundary::DirichletType, 16, 0.2);
            let ku = o.k_matrix() * DVector::from_vec(u);
            prop_assert!(ku.iter().all(|v| *v >= 0.0));
        }
    }
}
