//! Dispersal kernels, uniform quadrature grids and the periodic wrapped kernel.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};

/// Radial profile of a dispersal kernel. All profiles are compactly supported
/// on the closed ball of radius `support_radius`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    /// `c · (1 − |z/r|²)₊`
    Parabolic,
    /// `c · (1 + cos(π|z|/r))` on `|z| ≤ r`
    Cosine,
    /// `c · 𝟙{|z| ≤ r}`; discontinuous at the support edge.
    Indicator,
}

impl Profile {
    /// Highest order `k` such that the profile is `C^k` on all of space
    /// (`-1` for discontinuous profiles).
    pub fn smoothness(self) -> i32 {
        match self {
            Profile::Indicator => -1,
            Profile::Parabolic => 0,
            Profile::Cosine => 1,
        }
    }
}

impl FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "parabolic" => Ok(Profile::Parabolic),
            "cosine" | "cosine-bump" | "cosine_bump" => Ok(Profile::Cosine),
            "indicator" => Ok(Profile::Indicator),
            other => Err(Error::UnknownProfile(other.to_string())),
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Profile::Parabolic => "parabolic",
            Profile::Cosine => "cosine",
            Profile::Indicator => "indicator",
        };
        f.write_str(name)
    }
}

/// A symmetric, compactly supported convolution kernel with unit mass.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Kernel {
    profile: Profile,
    support_radius: f64,
    dim: usize,
    normalization: f64,
}

/// Build a kernel whose normalization constant is the exact reciprocal of the
/// profile's integral over its support.
pub fn make_kernel(profile: Profile, support_radius: f64, dim: usize) -> Result<Kernel> {
    if !support_radius.is_finite() || support_radius <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "kernel support radius must be positive, got {support_radius}"
        )));
    }
    if dim != 1 && dim != 2 {
        return Err(Error::InvalidParameter(format!(
            "kernel dimension must be 1 or 2, got {dim}"
        )));
    }
    let r = support_radius;
    let mass = match (profile, dim) {
        (Profile::Parabolic, 1) => 4.0 * r / 3.0,
        (Profile::Parabolic, _) => PI * r * r / 2.0,
        (Profile::Cosine, 1) => 2.0 * r,
        (Profile::Cosine, _) => r * r * (PI - 4.0 / PI),
        (Profile::Indicator, 1) => 2.0 * r,
        (Profile::Indicator, _) => PI * r * r,
    };
    Ok(Kernel {
        profile,
        support_radius,
        dim,
        normalization: 1.0 / mass,
    })
}

impl Kernel {
    pub fn profile(&self) -> Profile {
        self.profile
    }

    pub fn support_radius(&self) -> f64 {
        self.support_radius
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn normalization(&self) -> f64 {
        self.normalization
    }

    /// Whether the kernel is continuous, which the indicator profile is not.
    pub fn is_continuous(&self) -> bool {
        self.profile.smoothness() >= 0
    }

    /// Evaluate at displacement `z` (length must equal `dim`).
    pub fn eval(&self, z: &[f64]) -> f64 {
        debug_assert_eq!(z.len(), self.dim);
        let rho2: f64 = z.iter().map(|c| c * c).sum();
        self.eval_radial_sq(rho2)
    }

    fn eval_radial_sq(&self, rho2: f64) -> f64 {
        let r = self.support_radius;
        if rho2 > r * r {
            return 0.0;
        }
        let c = self.normalization;
        match self.profile {
            Profile::Parabolic => c * (1.0 - rho2 / (r * r)),
            Profile::Cosine => c * (1.0 + (PI * rho2.sqrt() / r).cos()),
            Profile::Indicator => c,
        }
    }
}

/// Boundary treatment of the dispersal operator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Boundary {
    /// Hostile exterior: integrate over the domain only, `b ≡ 1`.
    #[serde(rename = "dirichlet")]
    DirichletType,
    /// No flux: `b(x) = ∫_D κ(y − x) dy`.
    #[serde(rename = "neumann")]
    NeumannType,
    /// Spatially periodic fields on the period cell.
    #[serde(rename = "periodic")]
    Periodic,
}

impl FromStr for Boundary {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "dirichlet" | "dirichlettype" | "dirichlet-type" => Ok(Boundary::DirichletType),
            "neumann" | "neumanntype" | "neumann-type" => Ok(Boundary::NeumannType),
            "periodic" => Ok(Boundary::Periodic),
            other => Err(Error::InvalidParameter(format!(
                "unknown boundary `{other}`"
            ))),
        }
    }
}

impl fmt::Display for Boundary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Boundary::DirichletType => "dirichlet",
            Boundary::NeumannType => "neumann",
            Boundary::Periodic => "periodic",
        };
        f.write_str(name)
    }
}

/// Sum of `κ` over all lattice translates, for use on a periodic cell.
#[derive(Clone, Debug, PartialEq)]
pub struct WrappedKernel {
    base: Kernel,
    periods: Vec<f64>,
    shifts: Vec<i64>,
}

/// Wrap `kernel` onto the lattice `periods`. For displacements inside
/// `(−p_j, p_j)` every translate that can meet the support is included.
pub fn wrap_kernel(kernel: &Kernel, periods: &[f64]) -> Result<WrappedKernel> {
    if periods.len() != kernel.dim() {
        return Err(Error::DimensionMismatch(format!(
            "{} periods for a {}-dimensional kernel",
            periods.len(),
            kernel.dim()
        )));
    }
    if let Some(p) = periods.iter().find(|p| p.is_nan() || **p <= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "period must be positive, got {p}"
        )));
    }
    let shifts = periods
        .iter()
        .map(|p| (kernel.support_radius() / p).ceil() as i64 + 1)
        .collect();
    Ok(WrappedKernel {
        base: kernel.clone(),
        periods: periods.to_vec(),
        shifts,
    })
}

impl WrappedKernel {
    pub fn base(&self) -> &Kernel {
        &self.base
    }

    pub fn periods(&self) -> &[f64] {
        &self.periods
    }

    /// Largest lattice index `|k_j|` summed along each axis.
    pub fn truncation_shifts(&self) -> &[i64] {
        &self.shifts
    }

    pub fn eval(&self, z: &[f64]) -> f64 {
        match self.base.dim() {
            1 => {
                let (p, s) = (self.periods[0], self.shifts[0]);
                (-s..=s)
                    .map(|k| self.base.eval(&[z[0] + k as f64 * p]))
                    .sum()
            }
            _ => {
                let (p0, p1) = (self.periods[0], self.periods[1]);
                let (s0, s1) = (self.shifts[0], self.shifts[1]);
                let mut acc = 0.0;
                for k0 in -s0..=s0 {
                    for k1 in -s1..=s1 {
                        acc += self
                            .base
                            .eval(&[z[0] + k0 as f64 * p0, z[1] + k1 as f64 * p1]);
                    }
                }
                acc
            }
        }
    }
}

/// Uniform midpoint-rule discretization of the box `[0, L_1] × … × [0, L_N]`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Grid {
    boundary: Boundary,
    lengths: Vec<f64>,
    n_per_axis: usize,
    /// Flattened node coordinates, `dim` entries per node.
    coords: Vec<f64>,
    quad_weights: Vec<f64>,
}

/// Midpoint nodes `(k + ½)h` per axis, ordered lexicographically with the
/// first axis varying slowest. For `Periodic` the lengths are the periods.
pub fn build_grid(boundary: Boundary, lengths: &[f64], n_per_axis: usize) -> Result<Grid> {
    if lengths.is_empty() || lengths.len() > 2 {
        return Err(Error::InvalidParameter(format!(
            "grid must have 1 or 2 axes, got {}",
            lengths.len()
        )));
    }
    if n_per_axis < 2 {
        return Err(Error::InvalidParameter(format!(
            "n_per_axis must be at least 2, got {n_per_axis}"
        )));
    }
    if let Some(l) = lengths.iter().find(|l| !l.is_finite() || **l <= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "degenerate box side length {l}"
        )));
    }
    let dim = lengths.len();
    let steps: Vec<f64> = lengths.iter().map(|l| l / n_per_axis as f64).collect();
    let cell: f64 = steps.iter().product();
    let axis = |a: usize, i: usize| (i as f64 + 0.5) * steps[a];

    let n_nodes = n_per_axis.pow(dim as u32);
    let mut coords = Vec::with_capacity(n_nodes * dim);
    if dim == 1 {
        coords.extend((0..n_per_axis).map(|i| axis(0, i)));
    } else {
        for i in 0..n_per_axis {
            for j in 0..n_per_axis {
                coords.push(axis(0, i));
                coords.push(axis(1, j));
            }
        }
    }
    Ok(Grid {
        boundary,
        lengths: lengths.to_vec(),
        n_per_axis,
        coords,
        quad_weights: vec![cell; n_nodes],
    })
}

impl Grid {
    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn dim(&self) -> usize {
        self.lengths.len()
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths
    }

    pub fn n_per_axis(&self) -> usize {
        self.n_per_axis
    }

    pub fn len(&self) -> usize {
        self.quad_weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.quad_weights.is_empty()
    }

    pub fn node(&self, k: usize) -> &[f64] {
        let d = self.dim();
        &self.coords[k * d..(k + 1) * d]
    }

    pub fn nodes(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.dim())
    }

    pub fn quad_weights(&self) -> &[f64] {
        &self.quad_weights
    }

    pub fn spacing(&self) -> Vec<f64> {
        self.lengths
            .iter()
            .map(|l| l / self.n_per_axis as f64)
            .collect()
    }

    pub fn volume(&self) -> f64 {
        self.lengths.iter().product()
    }

    /// Same box and boundary at a different resolution.
    pub fn refined(&self, n_per_axis: usize) -> Result<Grid> {
        build_grid(self.boundary, &self.lengths, n_per_axis)
    }

    /// Quadrature inner product `Σ w_k u_k v_k`.
    pub fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        self.quad_weights
            .iter()
            .zip(u.iter().zip(v))
            .map(|(w, (a, b))| w * a * b)
            .sum()
    }

    /// Quadrature integral `Σ w_k u_k`.
    pub fn integrate(&self, u: &[f64]) -> f64 {
        self.quad_weights.iter().zip(u).map(|(w, a)| w * a).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn midpoint_mass_1d(k: &Kernel, n: usize) -> f64 {
        let r = k.support_radius();
        let h = 2.0 * r / n as f64;
        (0..n)
            .map(|i| k.eval(&[-r + (i as f64 + 0.5) * h]) * h)
            .sum()
    }

    // Polar midpoint quadrature, independent of the closed-form normalization.
    fn polar_mass_2d(k: &Kernel, n: usize) -> f64 {
        let r = k.support_radius();
        let h = r / n as f64;
        let ring: f64 = (0..n)
            .map(|i| {
                let rho = (i as f64 + 0.5) * h;
                k.eval(&[rho, 0.0]) * rho * h
            })
            .sum();
        2.0 * PI * ring
    }

    #[test]
    fn parabolic_1d_peak() {
        let k = make_kernel(Profile::Parabolic, 1.0, 1).unwrap();
        assert!((k.eval(&[0.0]) - 0.75).abs() < 1e-15);
        assert_eq!(k.eval(&[1.0]), 0.0);
        assert_eq!(k.eval(&[1.5]), 0.0);
    }

    #[test]
    fn indicator_values() {
        let k = make_kernel(Profile::Indicator, 0.5, 1).unwrap();
        assert_eq!(k.eval(&[0.0]), 1.0);
        assert_eq!(k.eval(&[0.5]), 1.0);
        assert_eq!(k.eval(&[-0.5]), 1.0);
        assert_eq!(k.eval(&[0.6]), 0.0);
        assert!(!k.is_continuous());
    }

    #[test]
    fn parabolic_2d_normalization_matches_polar_quadrature() {
        let k = make_kernel(Profile::Parabolic, 1.0, 2).unwrap();
        assert!((k.normalization() - 2.0 / PI).abs() < 1e-15);
        let mass = polar_mass_2d(&k, 20_000);
        assert!((mass - 1.0).abs() < 1e-8, "mass {mass}");
    }

    #[test]
    fn every_profile_has_unit_mass() {
        for profile in [Profile::Parabolic, Profile::Cosine, Profile::Indicator] {
            for r in [0.3, 1.0, 2.5] {
                let k1 = make_kernel(profile, r, 1).unwrap();
                assert!(
                    (midpoint_mass_1d(&k1, 200_000) - 1.0).abs() < 1e-8,
                    "{profile} r={r}"
                );
                let k2 = make_kernel(profile, r, 2).unwrap();
                assert!(
                    (polar_mass_2d(&k2, 200_000) - 1.0).abs() < 1e-8,
                    "{profile} 2d r={r}"
                );
            }
        }
    }

    #[test]
    fn midpoint_mass_converges_at_second_order() {
        let k = make_kernel(Profile::Parabolic, 1.0, 1).unwrap();
        let errs: Vec<f64> = [50, 100, 200]
            .iter()
            .map(|&n| (midpoint_mass_1d(&k, n) - 1.0).abs())
            .collect();
        for w in errs.windows(2) {
            let ratio = w[0] / w[1];
            assert!(ratio > 3.5 && ratio < 4.5, "ratio {ratio}");
        }
    }

    #[test]
    fn rejects_bad_kernel_input() {
        assert!(matches!(
            "gaussian".parse::<Profile>(),
            Err(Error::UnknownProfile(_))
        ));
        assert!(make_kernel(Profile::Parabolic, 0.0, 1).is_err());
        assert!(make_kernel(Profile::Parabolic, -1.0, 1).is_err());
        assert!(make_kernel(Profile::Parabolic, 1.0, 3).is_err());
    }

    #[test]
    fn wrapped_kernel_examples() {
        let k = make_kernel(Profile::Parabolic, 1.0, 1).unwrap();
        let w = wrap_kernel(&k, &[1.5]).unwrap();
        assert!((w.eval(&[1.0]) - 0.5625).abs() < 1e-15);

        let w1 = wrap_kernel(&k, &[1.0]).unwrap();
        let brute: f64 = (-3..=3).map(|s| k.eval(&[s as f64])).sum();
        assert!((brute - 0.75).abs() < 1e-15);
        assert!((w1.eval(&[0.0]) - brute).abs() < 1e-15);

        // Period wide enough that no translate reaches the cell interior.
        let wide = wrap_kernel(&k, &[5.0]).unwrap();
        for z in [-0.9, -0.3, 0.0, 0.4, 0.99] {
            assert_eq!(wide.eval(&[z]), k.eval(&[z]));
        }
    }

    #[test]
    fn wrapped_kernel_truncation_covers_support() {
        let k = make_kernel(Profile::Cosine, 2.3, 1).unwrap();
        let w = wrap_kernel(&k, &[0.7]).unwrap();
        for z in [-0.69, -0.2, 0.0, 0.35, 0.69] {
            let brute: f64 = (-40..=40).map(|s| k.eval(&[z + s as f64 * 0.7])).sum();
            assert!((w.eval(&[z]) - brute).abs() < 1e-14);
        }
        assert!(wrap_kernel(&k, &[0.0]).is_err());
    }

    #[test]
    fn grid_examples() {
        let g = build_grid(Boundary::DirichletType, &[1.0], 4).unwrap();
        let xs: Vec<f64> = g.nodes().map(|n| n[0]).collect();
        assert_eq!(xs, vec![0.125, 0.375, 0.625, 0.875]);
        assert!(g.quad_weights().iter().all(|&w| w == 0.25));

        let p = build_grid(Boundary::Periodic, &[2.0], 2).unwrap();
        let xs: Vec<f64> = p.nodes().map(|n| n[0]).collect();
        assert_eq!(xs, vec![0.5, 1.5]);
        assert_eq!(p.quad_weights(), &[1.0, 1.0]);

        let q = build_grid(Boundary::NeumannType, &[1.0, 1.0], 3).unwrap();
        assert_eq!(q.len(), 9);
        assert!(q
            .quad_weights()
            .iter()
            .all(|&w| (w - 1.0 / 9.0).abs() < 1e-16));
        assert!((q.quad_weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // lexicographic, first axis slowest
        assert_eq!(q.node(1), &[1.0 / 6.0, 0.5]);
        assert_eq!(q.node(3), &[0.5, 1.0 / 6.0]);
    }

    #[test]
    fn grid_rejects_degenerate_input() {
        assert!(build_grid(Boundary::DirichletType, &[0.0], 4).is_err());
        assert!(build_grid(Boundary::DirichletType, &[1.0], 1).is_err());
        assert!(build_grid(Boundary::DirichletType, &[1.0, 1.0, 1.0], 4).is_err());
    }
}
