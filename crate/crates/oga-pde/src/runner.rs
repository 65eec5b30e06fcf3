//! Config-driven experiment execution and output emission.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::metrics::{build_rows, l2_h1_errors, ConvergenceRow};
use crate::problem::preset;
use crate::quadrature::QuadratureGrid;
use crate::solver::{run, RunReport};
use crate::table::{emit_csv, emit_markdown, format_sci};

/// Everything a finished experiment produced.
pub struct ExperimentOutcome {
    pub config: ExperimentConfig,
    pub rows: Vec<ConvergenceRow>,
    pub report: RunReport,
}

/// Build the problem and grid from the config, run the solver, and tabulate
/// errors. With `verify_grid_factor > 1` the checkpoint errors are recomputed
/// on a finer grid (cells scaled by the factor) instead of the solve grid.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let problem = preset(cfg.preset_id()?, cfg.c_or_k())?;
    let grid = QuadratureGrid::build(problem.domain(), &cfg.cells, cfg.points_per_cell)?;
    let report = run(&problem, &grid, &cfg.solver_config())?;

    let mut checkpoints: Vec<(usize, f64, f64)> = Vec::with_capacity(report.checkpoints.len());
    if cfg.verify_grid_factor > 1 {
        let vcells: Vec<usize> = cfg
            .cells
            .iter()
            .map(|&c| c * cfg.verify_grid_factor)
            .collect();
        let vgrid = QuadratureGrid::build(problem.domain(), &vcells, cfg.points_per_cell)?;
        let exact = problem.exact().expect("presets carry exact solutions");
        for cp in &report.checkpoints {
            let (l2, h1) = l2_h1_errors(&vgrid, &cp.model, exact);
            checkpoints.push((cp.n, l2, h1));
        }
    } else {
        for cp in &report.checkpoints {
            checkpoints.push((
                cp.n,
                cp.l2_error.unwrap_or(f64::NAN),
                cp.h1_error.unwrap_or(f64::NAN),
            ));
        }
    }
    let rows = build_rows(&checkpoints, cfg.dof_per_neuron);

    Ok(ExperimentOutcome {
        config: cfg.clone(),
        rows,
        report,
    })
}

/// Which table files to write.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Csv,
    Markdown,
    Both,
}

#[derive(Serialize)]
struct Sidecar<'a> {
    config: &'a ExperimentConfig,
    diagnostics: Diagnostics,
}

#[derive(Serialize)]
struct Diagnostics {
    iterations: usize,
    quasi_orthogonality_worst_ratio: String,
    condition_estimate_last: String,
}

/// Write the table file(s) plus the `.meta.toml` sidecar echoing the fully
/// resolved config. Returns the paths written.
pub fn write_outputs(
    outcome: &ExperimentOutcome,
    out_dir: &Path,
    stem: &str,
    format: TableFormat,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();

    if matches!(format, TableFormat::Csv | TableFormat::Both) {
        let path = out_dir.join(format!("{stem}.csv"));
        std::fs::write(&path, emit_csv(&outcome.rows))?;
        written.push(path);
    }
    if matches!(format, TableFormat::Markdown | TableFormat::Both) {
        let path = out_dir.join(format!("{stem}.md"));
        std::fs::write(&path, emit_markdown(&outcome.rows))?;
        written.push(path);
    }

    let sidecar = Sidecar {
        config: &outcome.config,
        diagnostics: Diagnostics {
            iterations: outcome.report.iterations.len(),
            quasi_orthogonality_worst_ratio: format_sci(outcome.report.quasi_worst_ratio),
            condition_estimate_last: format_sci(
                outcome
                    .report
                    .iterations
                    .last()
                    .map(|it| it.condition_estimate)
                    .unwrap_or(0.0),
            ),
        },
    };
    let meta = toml::to_string(&sidecar).expect("sidecar serializes");
    let path = out_dir.join(format!("{stem}.meta.toml"));
    std::fs::write(&path, meta)?;
    written.push(path);

    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config_str;

    const SMALL: &str = "preset = \"example1\"\nc = -1.0\ncells = [200]\nn_b = 40\nn_max = 12\ncheckpoints = [4, 12]\nb_margin = 1.0\n";

    #[test]
    fn small_experiment_produces_rows_and_sidecar() {
        let cfg = parse_config_str(SMALL).unwrap();
        let outcome = run_experiment(&cfg).unwrap();
        assert_eq!(outcome.rows.len(), 2);
        assert_eq!(outcome.rows[0].n, 4);
        assert_eq!(outcome.rows[1].n, 12);
        assert!(outcome.rows[0].l2_order.is_none());
        assert!(outcome.rows[1].l2_order.is_some());
        assert!(outcome.rows[1].l2_error < outcome.rows[0].l2_error);

        let dir = std::env::temp_dir().join("oga_pde_runner_test");
        let _ = std::fs::remove_dir_all(&dir);
        let files = write_outputs(&outcome, &dir, "small", TableFormat::Both).unwrap();
        assert_eq!(files.len(), 3);
        let meta = std::fs::read_to_string(dir.join("small.meta.toml")).unwrap();
        assert!(meta.contains("preset = \"example1\""));
        assert!(meta.contains("quasi_orthogonality_worst_ratio"));
        // Every resolved knob is echoed.
        for key in [
            "activation",
            "cells",
            "points_per_cell",
            "sampling",
            "n_b",
            "n_theta",
            "b_margin",
            "normalize_directions",
            "n_max",
            "checkpoints",
            "refine",
            "refine_max_iters",
            "refine_step_tol",
            "duplicate_tol",
            "dof_per_neuron",
            "verify_grid_factor",
        ] {
            assert!(meta.contains(key), "sidecar missing `{key}`:\n{meta}");
        }
        let _ = std::fs::remove_dir_all(&dir);
    }

    #[test]
    fn verify_grid_changes_only_the_measurement() {
        let cfg = parse_config_str(SMALL).unwrap();
        let base = run_experiment(&cfg).unwrap();
        let mut vcfg = cfg.clone();
        vcfg.verify_grid_factor = 2;
        let fine = run_experiment(&vcfg).unwrap();
        // Same models (coefficients identical), slightly different measured
        // errors.
        for (a, b) in base
            .report
            .checkpoints
            .iter()
            .zip(&fine.report.checkpoints)
        {
            assert_eq!(a.model.coefficients(), b.model.coefficients());
        }
        let rel = (base.rows[1].l2_error - fine.rows[1].l2_error).abs()
            / base.rows[1].l2_error.max(1e-300);
        assert!(rel < 0.5, "verification grid moved the error by {rel}");
    }

    #[test]
    fn csv_output_is_byte_identical_across_runs() {
        let cfg = parse_config_str(SMALL).unwrap();
        let a = emit_csv(&run_experiment(&cfg).unwrap().rows);
        let b = emit_csv(&run_experiment(&cfg).unwrap().rows);
        assert_eq!(a, b);
    }
}
