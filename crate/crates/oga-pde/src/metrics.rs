//! L2/H1 error norms against exact solutions and convergence-order rows.
//!
//! The H1 error is the full norm (value plus gradient terms); the seminorm
//! variant is exposed separately but unused by the presets.

use crate::error::{Error, Result};
use crate::problem::Field;
use crate::quadrature::QuadratureGrid;
use crate::solver::Model;

/// `|| u_h - u ||_0` by quadrature.
pub fn l2_error(grid: &QuadratureGrid, model: &Model, exact: &dyn Field) -> f64 {
    let mut acc = 0.0;
    for (x, &w) in grid.iter_nodes().zip(grid.weights()) {
        let dv = model.value(x) - exact.value(x);
        acc += w * dv * dv;
    }
    acc.sqrt()
}

/// `|| u_h - u ||_1` (full norm) by quadrature.
pub fn h1_error(grid: &QuadratureGrid, model: &Model, exact: &dyn Field) -> f64 {
    l2_h1_errors(grid, model, exact).1
}

/// `| u_h - u |_1` (gradient seminorm) by quadrature.
pub fn h1_seminorm_error(grid: &QuadratureGrid, model: &Model, exact: &dyn Field) -> f64 {
    let d = grid.dim();
    let mut gm = vec![0.0; d];
    let mut ge = vec![0.0; d];
    let mut acc = 0.0;
    for (x, &w) in grid.iter_nodes().zip(grid.weights()) {
        model.value_and_gradient(x, &mut gm);
        exact.gradient(x, &mut ge);
        let dg: f64 = gm.iter().zip(&ge).map(|(a, b)| (a - b) * (a - b)).sum();
        acc += w * dg;
    }
    acc.sqrt()
}

/// Both error norms in a single pass over the nodes.
pub fn l2_h1_errors(grid: &QuadratureGrid, model: &Model, exact: &dyn Field) -> (f64, f64) {
    let d = grid.dim();
    let mut gm = vec![0.0; d];
    let mut ge = vec![0.0; d];
    let mut acc_l2 = 0.0;
    let mut acc_h1 = 0.0;
    for (x, &w) in grid.iter_nodes().zip(grid.weights()) {
        let vm = model.value_and_gradient(x, &mut gm);
        let dv = vm - exact.value(x);
        exact.gradient(x, &mut ge);
        let dg: f64 = gm.iter().zip(&ge).map(|(a, b)| (a - b) * (a - b)).sum();
        acc_l2 += w * dv * dv;
        acc_h1 += w * (dv * dv + dg);
    }
    (acc_l2.sqrt(), acc_h1.sqrt())
}

/// `log(e_coarse / e_fine) / log(ratio)`.
pub fn convergence_order(e_coarse: f64, e_fine: f64, ratio: f64) -> Result<f64> {
    if !(e_coarse > 0.0) || !(e_fine > 0.0) || !(ratio > 1.0) {
        return Err(Error::DegenerateOrder);
    }
    Ok((e_coarse / e_fine).ln() / ratio.ln())
}

/// One line of a convergence table.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub n: usize,
    pub dof: usize,
    pub l2_error: f64,
    pub l2_order: Option<f64>,
    pub h1_error: f64,
    pub h1_order: Option<f64>,
}

/// Build table rows from checkpoint errors. Orders compare consecutive rows
/// with the actual neuron-count ratio; the first row has none.
pub fn build_rows(checkpoints: &[(usize, f64, f64)], dof_per_neuron: usize) -> Vec<ConvergenceRow> {
    let mut rows = Vec::with_capacity(checkpoints.len());
    for (i, &(n, l2, h1)) in checkpoints.iter().enumerate() {
        let (l2_order, h1_order) = if i == 0 {
            (None, None)
        } else {
            let (pn, pl2, ph1) = checkpoints[i - 1];
            let ratio = n as f64 / pn as f64;
            (
                convergence_order(pl2, l2, ratio).ok(),
                convergence_order(ph1, h1, ratio).ok(),
            )
        };
        rows.push(ConvergenceRow {
            n,
            dof: n * dof_per_neuron,
            l2_error: l2,
            l2_order,
            h1_error: h1,
            h1_order,
        });
    }
    rows
}
