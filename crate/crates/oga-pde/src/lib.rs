//! Orthogonal greedy approximation of indefinite second-order elliptic PDEs
//! over shallow ReLU^k neuron dictionaries.
//!
//! The solver approximates the weak solution of
//! `-div(A grad u) + c u = f` with natural boundary conditions, where the
//! constant reaction `c` may be strongly negative (Helmholtz-type problems
//! included). Each greedy step picks the dictionary neuron maximizing the
//! absolute residual pairing `|(grad g, A grad u_n) + (c g, u_n) - (f, g)|`,
//! then re-solves the Galerkin projection onto the span of all selected
//! neurons.
//!
//! Modules:
//! - [`quadrature`]: composite tensor-product Gauss-Legendre grids, the only
//!   integration backend.
//! - [`dictionary`]: ReLU^k neurons and candidate-parameter sampling.
//! - [`problem`]: coefficients, manufactured-solution presets, bilinear form.
//! - [`linalg`]: the dense symmetric-indefinite projection solve.
//! - [`solver`]: the greedy select/refine/project iteration.
//! - [`metrics`]: L2/H1 error norms and convergence tables.
//! - [`config`] / [`runner`] / [`table`]: the experiment CLI machinery.

pub mod config;
pub mod dictionary;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod problem;
pub mod quadrature;
pub mod runner;
pub mod solver;
pub mod table;

pub use error::{Error, Result};
