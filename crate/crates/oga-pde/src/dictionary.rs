//! ReLU^k neurons and the candidate-parameter sampling that seeds the greedy
//! argmax.
//!
//! A neuron is `x -> max(0, omega . x + b)^k`. Directions are deliberately
//! not normalized to the unit sphere by default: the activation is positively
//! homogeneous of degree k in `(omega, b)`, so scaling a direction only
//! rescales the span by a constant that the expansion coefficients absorb.
//! Sign-vector directions `(+-1, ..., +-1)` keep the candidate count at
//! `2^d (n_b + 1)` instead of the much larger angular grid.

use crate::error::{Error, Result};
use crate::quadrature::BoxDomain;

/// `max(0, z)^m`, with the convention `m = 0 -> indicator(z > 0)`.
#[inline]
pub fn relu_pow(z: f64, m: u32) -> f64 {
    if z <= 0.0 {
        return 0.0;
    }
    match m {
        0 => 1.0,
        1 => z,
        2 => z * z,
        3 => z * z * z,
        _ => z.powi(m as i32),
    }
}

/// One dictionary element: direction `omega`, offset `b`, activation power `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Neuron {
    omega: Vec<f64>,
    b: f64,
    k: u32,
}

impl Neuron {
    pub fn new(omega: Vec<f64>, b: f64, k: u32) -> Result<Self> {
        if omega.is_empty() || omega.len() > 3 {
            return Err(Error::InvalidNeuron(format!(
                "direction dimension {} not in 1..=3",
                omega.len()
            )));
        }
        if omega.iter().all(|&w| w == 0.0) {
            return Err(Error::InvalidNeuron("direction must be nonzero".into()));
        }
        if !(1..=4).contains(&k) {
            return Err(Error::InvalidNeuron(format!(
                "activation power {k} not in 1..=4"
            )));
        }
        Ok(Self { omega, b, k })
    }

    pub fn dim(&self) -> usize {
        self.omega.len()
    }

    pub fn omega(&self) -> &[f64] {
        &self.omega
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    /// Same direction and power, new offset.
    pub fn with_offset(&self, b: f64) -> Self {
        Self {
            omega: self.omega.clone(),
            b,
            k: self.k,
        }
    }

    /// `omega . x + b`.
    #[inline]
    pub fn pre_activation(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.omega.len());
        let mut z = self.b;
        for (w, xi) in self.omega.iter().zip(x) {
            z += w * xi;
        }
        z
    }

    /// `max(0, omega . x + b)^k`.
    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        relu_pow(self.pre_activation(x), self.k)
    }

    /// Gradient `k max(0, omega . x + b)^{k-1} omega`; zero on the inactive
    /// side and, for k = 1, also at the kink itself (one-sided convention).
    #[inline]
    pub fn grad_into(&self, x: &[f64], out: &mut [f64]) {
        let z = self.pre_activation(x);
        let s = self.k as f64 * relu_pow(z, self.k - 1);
        for (o, w) in out.iter_mut().zip(&self.omega) {
            *o = s * w;
        }
    }

    pub fn grad(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.grad_into(x, &mut out);
        out
    }
}

/// How candidate directions are enumerated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplingMode {
    /// All `2^d` sign vectors `(+-1, ..., +-1)`.
    SignVectors,
    /// `(cos theta_i, sin theta_i)` on a half-open uniform angle grid;
    /// 2D only.
    Angular2D,
}

/// Knobs for [`sample_candidates`].
#[derive(Debug, Clone)]
pub struct SamplingOptions {
    pub mode: SamplingMode,
    /// Offset grid resolution: `n_b + 1` offsets per direction.
    pub n_b: usize,
    /// Angle count for [`SamplingMode::Angular2D`]; ignored otherwise.
    pub n_theta: usize,
    /// Activation power of every candidate.
    pub k: u32,
    /// Widens the offset range beyond the corner extrema of `omega . x`.
    pub margin: f64,
    /// Normalize directions to unit length (fidelity experiments only).
    pub normalize: bool,
}

/// The enumerated candidate dictionary for one solve.
#[derive(Debug, Clone)]
pub struct CandidateSet {
    neurons: Vec<Neuron>,
    mode: SamplingMode,
    n_b: usize,
    b_lo: f64,
    b_hi: f64,
}

impl CandidateSet {
    pub fn neurons(&self) -> &[Neuron] {
        &self.neurons
    }

    pub fn len(&self) -> usize {
        self.neurons.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neurons.is_empty()
    }

    pub fn mode(&self) -> SamplingMode {
        self.mode
    }

    pub fn n_b(&self) -> usize {
        self.n_b
    }

    pub fn b_range(&self) -> (f64, f64) {
        (self.b_lo, self.b_hi)
    }

    /// Spacing of the offset grid, used as the initial refinement step.
    pub fn b_spacing(&self) -> f64 {
        (self.b_hi - self.b_lo) / self.n_b as f64
    }
}

/// The `2^d` sign vectors, enumerated by binary counting over axes: entry `i`
/// of direction `s` is `+1` if bit `i` of `s` is clear, else `-1`. The first
/// direction is all `+1`, the last all `-1`.
pub fn sign_directions(dim: usize) -> Vec<Vec<f64>> {
    (0..1usize << dim)
        .map(|mask| {
            (0..dim)
                .map(|i| if mask >> i & 1 == 0 { 1.0 } else { -1.0 })
                .collect()
        })
        .collect()
}

/// `(cos theta_i, sin theta_i)` for `theta_i = 2 pi i / n_theta`,
/// `i = 0..n_theta`. The grid is half-open so `theta = 0` and `theta = 2 pi`
/// do not both appear.
pub fn angular_directions(n_theta: usize) -> Vec<Vec<f64>> {
    (0..n_theta)
        .map(|i| {
            let theta = 2.0 * std::f64::consts::PI * i as f64 / n_theta as f64;
            vec![theta.cos(), theta.sin()]
        })
        .collect()
}

/// Offset range such that every hyperplane `omega . x + b = 0` with
/// `b` in `[b_lo, b_hi]` can intersect the domain, widened by `margin` on
/// each side. Extrema of `omega . x` are taken over the box corners, which is
/// exact since the map is linear.
pub fn compute_b_range(domain: &BoxDomain, directions: &[Vec<f64>], margin: f64) -> (f64, f64) {
    assert!(!directions.is_empty(), "need at least one direction");
    let corners = domain.corners();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for omega in directions {
        for corner in &corners {
            let dot: f64 = omega.iter().zip(corner).map(|(w, x)| w * x).sum();
            lo = lo.min(dot);
            hi = hi.max(dot);
        }
    }
    (-hi - margin, -lo + margin)
}

/// Enumerate the candidate neurons: outer loop over directions in their
/// documented order, inner loop over offsets ascending.
pub fn sample_candidates(domain: &BoxDomain, opts: &SamplingOptions) -> Result<CandidateSet> {
    if opts.n_b < 1 {
        return Err(Error::InvalidSampling("n_b must be >= 1".into()));
    }
    let mut directions = match opts.mode {
        SamplingMode::SignVectors => sign_directions(domain.dim()),
        SamplingMode::Angular2D => {
            if domain.dim() != 2 {
                return Err(Error::InvalidSampling(format!(
                    "Angular2D requires a 2-dimensional domain, got {}",
                    domain.dim()
                )));
            }
            if opts.n_theta < 1 {
                return Err(Error::InvalidSampling(
                    "Angular2D requires n_theta >= 1".into(),
                ));
            }
            angular_directions(opts.n_theta)
        }
    };
    if opts.normalize {
        for omega in &mut directions {
            let norm = omega.iter().map(|w| w * w).sum::<f64>().sqrt();
            for w in omega.iter_mut() {
                *w /= norm;
            }
        }
    }

    let (b_lo, b_hi) = compute_b_range(domain, &directions, opts.margin);
    let mut neurons = Vec::with_capacity(directions.len() * (opts.n_b + 1));
    for omega in &directions {
        for j in 0..=opts.n_b {
            let b = b_lo + (b_hi - b_lo) * j as f64 / opts.n_b as f64;
            neurons.push(Neuron::new(omega.clone(), b, opts.k)?);
        }
    }
    Ok(CandidateSet {
        neurons,
        mode: opts.mode,
        n_b: opts.n_b,
        b_lo,
        b_hi,
    })
}
