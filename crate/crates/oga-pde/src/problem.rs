//! Problem definitions: coefficients, sources, exact solutions, and the
//! indefinite bilinear form `a(u,v) = (A grad u, grad v) + (c u, v)`.
//!
//! All built-in presets are pure natural-boundary problems: the exact
//! solution satisfies `A grad u . n = 0` on the box boundary, so the
//! variational form over all of H^1 needs no boundary term. Sources are
//! closed-form callables derived by hand from the exact solutions; the test
//! suite re-derives them independently.

use std::f64::consts::PI;

use crate::dictionary::Neuron;
use crate::error::{Error, Result};
use crate::quadrature::{integrate, BoxDomain, QuadratureGrid};

/// A scalar field with a gradient, evaluable anywhere in the domain.
pub trait Field {
    fn value(&self, x: &[f64]) -> f64;
    /// Writes the gradient into `out` (length = dimension).
    fn gradient(&self, x: &[f64], out: &mut [f64]);
}

impl Field for Neuron {
    fn value(&self, x: &[f64]) -> f64 {
        self.eval(x)
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        self.grad_into(x, out);
    }
}

/// Field backed by closures; used for exact solutions.
pub struct FnField {
    value: Box<dyn Fn(&[f64]) -> f64>,
    gradient: Box<dyn Fn(&[f64], &mut [f64])>,
}

impl FnField {
    pub fn new(
        value: impl Fn(&[f64]) -> f64 + 'static,
        gradient: impl Fn(&[f64], &mut [f64]) + 'static,
    ) -> Self {
        Self {
            value: Box::new(value),
            gradient: Box::new(gradient),
        }
    }
}

impl Field for FnField {
    fn value(&self, x: &[f64]) -> f64 {
        (self.value)(x)
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        (self.gradient)(x, out)
    }
}

/// Smallest eigenvalue of a symmetric d x d matrix, d <= 3, in closed form.
pub fn smallest_eigenvalue_sym(matrix: &[f64], dim: usize) -> f64 {
    match dim {
        1 => matrix[0],
        2 => {
            let (a, b, c) = (matrix[0], matrix[1], matrix[3]);
            0.5 * ((a + c) - ((a - c).powi(2) + 4.0 * b * b).sqrt())
        }
        3 => {
            let a = matrix;
            let off = a[1] * a[1] + a[2] * a[2] + a[5] * a[5];
            if off == 0.0 {
                return a[0].min(a[4]).min(a[8]);
            }
            // Trigonometric solution of the characteristic cubic.
            let q = (a[0] + a[4] + a[8]) / 3.0;
            let p2 = (a[0] - q).powi(2) + (a[4] - q).powi(2) + (a[8] - q).powi(2) + 2.0 * off;
            let p = (p2 / 6.0).sqrt();
            let b: Vec<f64> = (0..9)
                .map(|i| (a[i] - if i % 4 == 0 { q } else { 0.0 }) / p)
                .collect();
            let det_b = b[0] * (b[4] * b[8] - b[5] * b[7]) - b[1] * (b[3] * b[8] - b[5] * b[6])
                + b[2] * (b[3] * b[7] - b[4] * b[6]);
            let r = (det_b / 2.0).clamp(-1.0, 1.0);
            let phi = r.acos() / 3.0;
            q + 2.0 * p * (phi + 2.0 * PI / 3.0).cos()
        }
        _ => panic!("dimension {dim} not supported"),
    }
}

/// Diffusion matrix, constant reaction, source, and optional exact solution.
pub struct ProblemSpec {
    domain: BoxDomain,
    /// Row-major d x d symmetric matrix.
    diffusion: Vec<f64>,
    reaction: f64,
    source: Box<dyn Fn(&[f64]) -> f64>,
    exact: Option<FnField>,
    beta: f64,
}

impl ProblemSpec {
    pub fn new(
        domain: BoxDomain,
        diffusion: Vec<f64>,
        reaction: f64,
        source: impl Fn(&[f64]) -> f64 + 'static,
        exact: Option<FnField>,
    ) -> Result<Self> {
        let d = domain.dim();
        if diffusion.len() != d * d {
            return Err(Error::InvalidProblem(format!(
                "diffusion matrix has {} entries for dimension {d}",
                diffusion.len()
            )));
        }
        for i in 0..d {
            for j in 0..d {
                if diffusion[i * d + j] != diffusion[j * d + i] {
                    return Err(Error::InvalidProblem(format!(
                        "diffusion matrix not symmetric at ({i},{j})"
                    )));
                }
            }
        }
        let beta = smallest_eigenvalue_sym(&diffusion, d);
        if !(beta > 0.0) {
            return Err(Error::InvalidProblem(format!(
                "diffusion matrix not positive definite (smallest eigenvalue {beta})"
            )));
        }
        if !reaction.is_finite() {
            return Err(Error::InvalidProblem("reaction must be finite".into()));
        }
        Ok(Self {
            domain,
            diffusion,
            reaction,
            source: Box::new(source),
            exact,
            beta,
        })
    }

    pub fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn diffusion(&self) -> &[f64] {
        &self.diffusion
    }

    pub fn reaction(&self) -> f64 {
        self.reaction
    }

    /// Smallest eigenvalue of the diffusion matrix (the ellipticity constant).
    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn source_at(&self, x: &[f64]) -> f64 {
        (self.source)(x)
    }

    pub fn exact(&self) -> Option<&FnField> {
        self.exact.as_ref()
    }

    /// `out = A g`.
    #[inline]
    pub fn apply_diffusion(&self, g: &[f64], out: &mut [f64]) {
        let d = self.dim();
        for i in 0..d {
            let mut acc = 0.0;
            for j in 0..d {
                acc += self.diffusion[i * d + j] * g[j];
            }
            out[i] = acc;
        }
    }
}

/// A field sampled at every grid node: `values[j]` and
/// `gradients[j*d..(j+1)*d]` in grid node order.
#[derive(Debug, Clone)]
pub struct FieldSample {
    pub values: Vec<f64>,
    pub gradients: Vec<f64>,
    dim: usize,
}

impl FieldSample {
    pub fn zeros(n: usize, dim: usize) -> Self {
        Self {
            values: vec![0.0; n],
            gradients: vec![0.0; n * dim],
            dim,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn gradient(&self, j: usize) -> &[f64] {
        &self.gradients[j * self.dim..(j + 1) * self.dim]
    }
}

/// Evaluate a field at every grid node.
pub fn sample_field(grid: &QuadratureGrid, field: &dyn Field) -> FieldSample {
    let d = grid.dim();
    let n = grid.len();
    let mut out = FieldSample::zeros(n, d);
    for (j, x) in grid.iter_nodes().enumerate() {
        out.values[j] = field.value(x);
        field.gradient(x, &mut out.gradients[j * d..(j + 1) * d]);
    }
    out
}

/// `a(u, v) = int grad u . A grad v + c u v` by quadrature.
pub fn bilinear_form(
    grid: &QuadratureGrid,
    problem: &ProblemSpec,
    u: &FieldSample,
    v: &FieldSample,
) -> f64 {
    assert_eq!(u.len(), grid.len());
    assert_eq!(v.len(), grid.len());
    let d = grid.dim();
    let c = problem.reaction();
    let mut av = vec![0.0; d];
    let mut acc = 0.0;
    for (j, &w) in grid.weights().iter().enumerate() {
        problem.apply_diffusion(v.gradient(j), &mut av);
        let mut term = c * u.values[j] * v.values[j];
        for (gu, a) in u.gradient(j).iter().zip(&av) {
            term += gu * a;
        }
        acc += w * term;
    }
    acc
}

/// `||v||_0^2` from node samples.
pub fn l2_norm_squared(grid: &QuadratureGrid, sample: &FieldSample) -> f64 {
    let sq: Vec<f64> = sample.values.iter().map(|v| v * v).collect();
    integrate(grid, &sq)
}

/// `||v||_1^2 = ||v||_0^2 + |v|_1^2` from node samples.
pub fn h1_norm_squared(grid: &QuadratureGrid, sample: &FieldSample) -> f64 {
    let sq: Vec<f64> = (0..sample.len())
        .map(|j| {
            let g: f64 = sample.gradient(j).iter().map(|gi| gi * gi).sum();
            sample.values[j] * sample.values[j] + g
        })
        .collect();
    integrate(grid, &sq)
}

/// The five built-in experiment problems.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// 1D on (-1,1): `-u'' + c u = f`, exact `u = cos(pi x)`.
    Example1,
    /// 2D on (0,1)^2: `-lap u + c u = f`, exact `u = cos(10 pi x) cos(10 pi y)`.
    Example2,
    /// 2D anisotropic `A = [2,1;1,3]` on (0,1)^2, exact
    /// `u = sin^2(2 pi x) sin^2(2 pi y) cos^2(2 pi x) cos^2(2 pi y)`.
    Example3,
    /// 3D on (0,1)^3: exact `u = cos(2 pi x) cos(2 pi y) cos(2 pi z)`.
    Example4,
    /// 2D Helmholtz `-lap u - k^2 u = f` on (0,1)^2, exact
    /// `u = cos(k x) cos(k y) + 1`.
    Example5,
}

impl Preset {
    pub fn dim(self) -> usize {
        match self {
            Preset::Example1 => 1,
            Preset::Example2 | Preset::Example3 | Preset::Example5 => 2,
            Preset::Example4 => 3,
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "example1" => Ok(Preset::Example1),
            "example2" => Ok(Preset::Example2),
            "example3" => Ok(Preset::Example3),
            "example4" => Ok(Preset::Example4),
            "example5" => Ok(Preset::Example5),
            _ => Err(Error::InvalidProblem(format!("unknown preset `{name}`"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Preset::Example1 => "example1",
            Preset::Example2 => "example2",
            Preset::Example3 => "example3",
            Preset::Example4 => "example4",
            Preset::Example5 => "example5",
        }
    }
}

/// Build a preset problem. For [`Preset::Example5`] the parameter is the
/// wavenumber `k > 1` (the reaction becomes `-k^2`); for every other preset
/// it is the reaction constant `c` itself.
pub fn preset(which: Preset, c_or_k: f64) -> Result<ProblemSpec> {
    match which {
        Preset::Example1 => {
            let c = c_or_k;
            // u = cos(pi x); f = -u'' + c u = (pi^2 + c) cos(pi x).
            // u'(x) = -pi sin(pi x) vanishes at x = -1 and 1.
            let exact = FnField::new(
                |x| (PI * x[0]).cos(),
                |x, out| out[0] = -PI * (PI * x[0]).sin(),
            );
            ProblemSpec::new(
                BoxDomain::interval(-1.0, 1.0)?,
                vec![1.0],
                c,
                move |x| (PI * PI + c) * (PI * x[0]).cos(),
                Some(exact),
            )
        }
        Preset::Example2 => {
            let c = c_or_k;
            // u = cos(10 pi x) cos(10 pi y); -lap u = 200 pi^2 u, so
            // f = (200 pi^2 + c) u. grad u . n vanishes on the unit square.
            let w = 10.0 * PI;
            let exact = FnField::new(
                move |x| (w * x[0]).cos() * (w * x[1]).cos(),
                move |x, out| {
                    out[0] = -w * (w * x[0]).sin() * (w * x[1]).cos();
                    out[1] = -w * (w * x[0]).cos() * (w * x[1]).sin();
                },
            );
            ProblemSpec::new(
                BoxDomain::unit(2)?,
                vec![1.0, 0.0, 0.0, 1.0],
                c,
                move |x| (200.0 * PI * PI + c) * (w * x[0]).cos() * (w * x[1]).cos(),
                Some(exact),
            )
        }
        Preset::Example3 => {
            let c = c_or_k;
            // u = sin^2 cos^2 products, rewritten via
            // g(s) = sin^2(4 pi s), u = g(x) g(y) / 16, so that
            // g'(s) = 4 pi sin(8 pi s), g''(s) = 32 pi^2 cos(8 pi s).
            // With A = [2,1;1,3]:
            //   f = -(2 u_xx + 2 u_xy + 3 u_yy) + c u.
            // g and g' vanish on the boundary, so A grad u . n = 0 there.
            let g = |s: f64| (4.0 * PI * s).sin().powi(2);
            let dg = |s: f64| 4.0 * PI * (8.0 * PI * s).sin();
            let ddg = |s: f64| 32.0 * PI * PI * (8.0 * PI * s).cos();
            let exact = FnField::new(
                move |x| g(x[0]) * g(x[1]) / 16.0,
                move |x, out| {
                    out[0] = dg(x[0]) * g(x[1]) / 16.0;
                    out[1] = g(x[0]) * dg(x[1]) / 16.0;
                },
            );
            ProblemSpec::new(
                BoxDomain::unit(2)?,
                vec![2.0, 1.0, 1.0, 3.0],
                c,
                move |x| {
                    let u_xx = ddg(x[0]) * g(x[1]) / 16.0;
                    let u_yy = g(x[0]) * ddg(x[1]) / 16.0;
                    let u_xy = dg(x[0]) * dg(x[1]) / 16.0;
                    let u = g(x[0]) * g(x[1]) / 16.0;
                    -(2.0 * u_xx + 2.0 * u_xy + 3.0 * u_yy) + c * u
                },
                Some(exact),
            )
        }
        Preset::Example4 => {
            let c = c_or_k;
            // u = cos(2 pi x) cos(2 pi y) cos(2 pi z); -lap u = 12 pi^2 u.
            let w = 2.0 * PI;
            let exact = FnField::new(
                move |x| (w * x[0]).cos() * (w * x[1]).cos() * (w * x[2]).cos(),
                move |x, out| {
                    let (cx, cy, cz) = ((w * x[0]).cos(), (w * x[1]).cos(), (w * x[2]).cos());
                    out[0] = -w * (w * x[0]).sin() * cy * cz;
                    out[1] = -w * cx * (w * x[1]).sin() * cz;
                    out[2] = -w * cx * cy * (w * x[2]).sin();
                },
            );
            ProblemSpec::new(
                BoxDomain::unit(3)?,
                vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
                c,
                move |x| {
                    (12.0 * PI * PI + c) * (w * x[0]).cos() * (w * x[1]).cos() * (w * x[2]).cos()
                },
                Some(exact),
            )
        }
        Preset::Example5 => {
            let k = c_or_k;
            if !(k > 1.0) {
                return Err(Error::InvalidProblem(format!(
                    "Helmholtz wavenumber must exceed 1, got {k}"
                )));
            }
            // u = cos(k x) cos(k y) + 1 with c = -k^2:
            // -lap u + c u = 2 k^2 cos cos - k^2 (cos cos + 1)
            //             = k^2 cos(k x) cos(k y) - k^2.
            let exact = FnField::new(
                move |x| (k * x[0]).cos() * (k * x[1]).cos() + 1.0,
                move |x, out| {
                    out[0] = -k * (k * x[0]).sin() * (k * x[1]).cos();
                    out[1] = -k * (k * x[0]).cos() * (k * x[1]).sin();
                },
            );
            ProblemSpec::new(
                BoxDomain::unit(2)?,
                vec![1.0, 0.0, 0.0, 1.0],
                -k * k,
                move |x| k * k * (k * x[0]).cos() * (k * x[1]).cos() - k * k,
                Some(exact),
            )
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::QuadratureGrid;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    struct Constant(f64);
    impl Field for Constant {
        fn value(&self, _x: &[f64]) -> f64 {
            self.0
        }
        fn gradient(&self, _x: &[f64], out: &mut [f64]) {
            out.fill(0.0);
        }
    }

    #[test]
    fn smallest_eigenvalues_closed_form() {
        assert_eq!(smallest_eigenvalue_sym(&[4.0], 1), 4.0);
        let m = [2.0, 1.0, 1.0, 3.0];
        let expect = (5.0 - 5f64.sqrt()) / 2.0;
        assert!((smallest_eigenvalue_sym(&m, 2) - expect).abs() < 1e-14);
        let id3 = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        assert!((smallest_eigenvalue_sym(&id3, 3) - 1.0).abs() < 1e-14);
        // Eigenvalues of this arrangement are {1, 1, 4}.
        let m3 = [2.0, 1.0, 1.0, 1.0, 2.0, 1.0, 1.0, 1.0, 2.0];
        assert!((smallest_eigenvalue_sym(&m3, 3) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bad_matrices_are_rejected() {
        let square = BoxDomain::unit(2).unwrap();
        let asym = ProblemSpec::new(
            square.clone(),
            vec![1.0, 0.5, 0.4, 1.0],
            -1.0,
            |_| 0.0,
            None,
        );
        assert!(asym.is_err());
        let indef = ProblemSpec::new(square, vec![1.0, 2.0, 2.0, 1.0], -1.0, |_| 0.0, None);
        assert!(indef.is_err());
    }

    #[test]
    fn bilinear_form_constant_reaction_only() {
        let square = BoxDomain::unit(2).unwrap();
        let grid = QuadratureGrid::build(&square, &[4, 4], 2).unwrap();
        let p = ProblemSpec::new(
            square,
            vec![1.0, 0.0, 0.0, 1.0],
            -1.0,
            |_| 0.0,
            None,
        )
        .unwrap();
        let one = sample_field(&grid, &Constant(1.0));
        let a = bilinear_form(&grid, &p, &one, &one);
        assert!((a + 1.0).abs() < 1e-14, "{a}");
    }

    #[test]
    fn bilinear_form_neuron_diffusion_only() {
        // g = (x)^2 on (0,1): a(g,g) with c = 0 is int (2x)^2 = 4/3.
        let line = BoxDomain::interval(0.0, 1.0).unwrap();
        let grid = QuadratureGrid::build(&line, &[16], 2).unwrap();
        let p = ProblemSpec::new(line, vec![1.0], 0.0, |_| 0.0, None).unwrap();
        let g = Neuron::new(vec![1.0], 0.0, 2).unwrap();
        let s = sample_field(&grid, &g);
        let a = bilinear_form(&grid, &p, &s, &s);
        assert!((a - 4.0 / 3.0).abs() < 1e-13, "{a}");
    }

    #[test]
    fn bilinear_form_is_symmetric_on_random_neurons() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let square = BoxDomain::unit(2).unwrap();
        let grid = QuadratureGrid::build(&square, &[12, 12], 2).unwrap();
        let p = ProblemSpec::new(
            square,
            vec![2.0, 1.0, 1.0, 3.0],
            -5.0,
            |_| 0.0,
            None,
        )
        .unwrap();
        for _ in 0..20 {
            let nu = Neuron::new(
                vec![rng.random_range(-1.0..1.0), rng.random_range(0.1..1.0)],
                rng.random_range(-1.0..1.0),
                2,
            )
            .unwrap();
            let nv = Neuron::new(
                vec![rng.random_range(0.1..1.0), rng.random_range(-1.0..1.0)],
                rng.random_range(-1.0..1.0),
                3,
            )
            .unwrap();
            let su = sample_field(&grid, &nu);
            let sv = sample_field(&grid, &nv);
            let auv = bilinear_form(&grid, &p, &su, &sv);
            let avu = bilinear_form(&grid, &p, &sv, &su);
            assert!((auv - avu).abs() <= 1e-13 * (auv.abs() + 1.0));
        }
    }

    #[test]
    fn sample_field_matches_pointwise_eval() {
        let line = BoxDomain::interval(-1.0, 1.0).unwrap();
        let grid = QuadratureGrid::build(&line, &[5], 2).unwrap();

        let one = sample_field(&grid, &Constant(1.0));
        assert!(one.values.iter().all(|&v| v == 1.0));
        assert!(one.gradients.iter().all(|&g| g == 0.0));

        let n = Neuron::new(vec![1.0], -0.25, 2).unwrap();
        let s = sample_field(&grid, &n);
        for (j, x) in grid.iter_nodes().enumerate() {
            assert_eq!(s.values[j], n.eval(x));
            assert_eq!(s.gradient(j), n.grad(x).as_slice());
        }

        let p = preset(Preset::Example1, -1.0).unwrap();
        let e = sample_field(&grid, p.exact().unwrap());
        for (j, x) in grid.iter_nodes().enumerate() {
            assert!((e.values[j] - (PI * x[0]).cos()).abs() < 1e-15);
            assert!((e.gradient(j)[0] + PI * (PI * x[0]).sin()).abs() < 1e-15);
        }
    }

    #[test]
    fn example1_manufactured_residual_vanishes() {
        // Independent closed forms: u'' = -pi^2 cos(pi x).
        let p = preset(Preset::Example1, -1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..1000 {
            let x = [rng.random_range(-1.0..1.0)];
            let u = (PI * x[0]).cos();
            let neg_upp = PI * PI * (PI * x[0]).cos();
            let resid = neg_upp + p.reaction() * u - p.source_at(&x);
            assert!(resid.abs() <= 1e-12, "residual {resid} at {x:?}");
        }
    }

    #[test]
    fn example5_source_matches_published_form() {
        let k = 2.0 * PI;
        let p = preset(Preset::Example5, k).unwrap();
        assert_eq!(p.reaction(), -k * k);
        let x = [0.3, 0.7];
        let expect = k * k * (k * x[0]).cos() * (k * x[1]).cos() - k * k;
        assert!((p.source_at(&x) - expect).abs() < 1e-12);
        let u = p.exact().unwrap().value(&x);
        assert!((u - ((k * x[0]).cos() * (k * x[1]).cos() + 1.0)).abs() < 1e-15);
    }

    #[test]
    fn example5_rejects_small_wavenumber() {
        assert!(preset(Preset::Example5, 1.0).is_err());
        assert!(preset(Preset::Example5, 0.5).is_err());
    }

    #[test]
    fn preset_names_round_trip() {
        for p in [
            Preset::Example1,
            Preset::Example2,
            Preset::Example3,
            Preset::Example4,
            Preset::Example5,
        ] {
            assert_eq!(Preset::parse(p.name()).unwrap(), p);
        }
        assert!(Preset::parse("example9").is_err());
    }
}
