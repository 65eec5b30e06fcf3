//! Experiment configuration: a flat TOML file of key/value pairs, plus
//! `key=value` command-line overrides.
//!
//! Parsing happens in two steps: the raw table (every field optional) is
//! deserialized, then resolved against preset-aware defaults into an
//! [`ExperimentConfig`] with every knob materialized. The resolved form is
//! what gets echoed into the output metadata, so a run can be reproduced from
//! its sidecar alone.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dictionary::{SamplingMode, SamplingOptions};
use crate::error::{Error, Result};
use crate::problem::Preset;
use crate::solver::SolverConfig;

/// Raw file contents; all fields optional, unknown keys rejected.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    preset: Option<String>,
    c: Option<f64>,
    wavenumber: Option<f64>,
    activation: Option<u32>,
    cells: Option<Vec<usize>>,
    points_per_cell: Option<usize>,
    sampling: Option<String>,
    n_b: Option<usize>,
    n_theta: Option<usize>,
    b_margin: Option<f64>,
    normalize_directions: Option<bool>,
    n_max: Option<usize>,
    checkpoints: Option<Vec<usize>>,
    refine: Option<bool>,
    refine_max_iters: Option<usize>,
    refine_step_tol: Option<f64>,
    duplicate_tol: Option<f64>,
    dof_per_neuron: Option<usize>,
    verify_grid_factor: Option<usize>,
}

/// Fully resolved experiment description; serializes back to the same flat
/// TOML schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub preset: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wavenumber: Option<f64>,
    pub activation: u32,
    pub cells: Vec<usize>,
    pub points_per_cell: usize,
    pub sampling: String,
    pub n_b: usize,
    pub n_theta: usize,
    pub b_margin: f64,
    pub normalize_directions: bool,
    pub n_max: usize,
    pub checkpoints: Vec<usize>,
    pub refine: bool,
    pub refine_max_iters: usize,
    pub refine_step_tol: f64,
    pub duplicate_tol: f64,
    pub dof_per_neuron: usize,
    pub verify_grid_factor: usize,
}

impl ExperimentConfig {
    pub fn preset_id(&self) -> Result<Preset> {
        Preset::parse(&self.preset)
    }

    /// The reaction constant, or the wavenumber for the Helmholtz preset.
    pub fn c_or_k(&self) -> f64 {
        self.wavenumber.or(self.c).expect("resolution guarantees one")
    }

    pub fn sampling_mode(&self) -> SamplingMode {
        match self.sampling.as_str() {
            "angular2d" => SamplingMode::Angular2D,
            _ => SamplingMode::SignVectors,
        }
    }

    pub fn sampling_options(&self) -> SamplingOptions {
        SamplingOptions {
            mode: self.sampling_mode(),
            n_b: self.n_b,
            n_theta: self.n_theta,
            k: self.activation,
            margin: self.b_margin,
            normalize: self.normalize_directions,
        }
    }

    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            n_max: self.n_max,
            checkpoints: self.checkpoints.clone(),
            sampling: self.sampling_options(),
            refine: self.refine,
            refine_max_iters: self.refine_max_iters,
            refine_step_tol: self.refine_step_tol,
            duplicate_tol: self.duplicate_tol,
        }
    }

    /// Flat TOML echo of every resolved knob.
    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

fn default_checkpoints(n_max: usize) -> Vec<usize> {
    if n_max == 0 {
        return Vec::new();
    }
    let mut cps: Vec<usize> = std::iter::successors(Some(16usize), |&n| n.checked_mul(2))
        .take_while(|&n| n <= n_max)
        .collect();
    if cps.is_empty() {
        cps.push(n_max);
    }
    cps
}

impl RawConfig {
    fn resolve(self) -> Result<ExperimentConfig> {
        let preset_name = self
            .preset
            .ok_or_else(|| Error::config("preset", "required (example1..example5)"))?;
        let preset = Preset::parse(&preset_name)
            .map_err(|e| Error::config("preset", e.to_string()))?;
        let dim = preset.dim();

        let (c, wavenumber) = if preset == Preset::Example5 {
            if self.c.is_some() {
                return Err(Error::config(
                    "c",
                    "example5 takes `wavenumber`, not a reaction constant",
                ));
            }
            let k = self
                .wavenumber
                .ok_or_else(|| Error::config("wavenumber", "required for example5"))?;
            if !(k > 1.0) {
                return Err(Error::config("wavenumber", "must exceed 1"));
            }
            (None, Some(k))
        } else {
            if self.wavenumber.is_some() {
                return Err(Error::config(
                    "wavenumber",
                    "only example5 takes a wavenumber; use `c`",
                ));
            }
            let c = self
                .c
                .ok_or_else(|| Error::config("c", "reaction constant required"))?;
            if !c.is_finite() {
                return Err(Error::config("c", "must be finite"));
            }
            (Some(c), None)
        };

        let activation = self
            .activation
            .unwrap_or(if preset == Preset::Example5 { 3 } else { 2 });
        if !(1..=4).contains(&activation) {
            return Err(Error::config("activation", "must lie in 1..=4"));
        }

        let cells = self
            .cells
            .ok_or_else(|| Error::config("cells", "per-axis cell counts required"))?;
        if cells.len() != dim {
            return Err(Error::config(
                "cells",
                format!("expected {dim} entries for {preset_name}, got {}", cells.len()),
            ));
        }
        if cells.iter().any(|&c| c == 0) {
            return Err(Error::config("cells", "entries must be >= 1"));
        }

        let points_per_cell = self.points_per_cell.unwrap_or(2);
        if !(1..=8).contains(&points_per_cell) {
            return Err(Error::config("points_per_cell", "must lie in 1..=8"));
        }

        let sampling = self.sampling.unwrap_or_else(|| "sign_vectors".into());
        let mode = match sampling.as_str() {
            "sign_vectors" => SamplingMode::SignVectors,
            "angular2d" => SamplingMode::Angular2D,
            other => {
                return Err(Error::config(
                    "sampling",
                    format!("unknown mode `{other}` (sign_vectors | angular2d)"),
                ))
            }
        };
        if mode == SamplingMode::Angular2D && dim != 2 {
            return Err(Error::config("sampling", "angular2d needs a 2D preset"));
        }

        let n_b = self
            .n_b
            .ok_or_else(|| Error::config("n_b", "offset grid resolution required"))?;
        if n_b < 1 {
            return Err(Error::config("n_b", "must be >= 1"));
        }

        let n_theta = match mode {
            SamplingMode::Angular2D => {
                let n = self.n_theta.unwrap_or(0);
                if n < 1 {
                    return Err(Error::config("n_theta", "angular2d needs n_theta >= 1"));
                }
                n
            }
            SamplingMode::SignVectors => 0,
        };

        let b_margin = self.b_margin.unwrap_or(0.0);
        if !(b_margin >= 0.0) {
            return Err(Error::config("b_margin", "must be >= 0"));
        }

        let n_max = self
            .n_max
            .ok_or_else(|| Error::config("n_max", "iteration count required"))?;

        let checkpoints = self
            .checkpoints
            .unwrap_or_else(|| default_checkpoints(n_max));
        for pair in checkpoints.windows(2) {
            if pair[0] >= pair[1] {
                return Err(Error::config("checkpoints", "must be strictly ascending"));
            }
        }
        if checkpoints.first().is_some_and(|&f| f < 1)
            || checkpoints.last().is_some_and(|&l| l > n_max)
        {
            return Err(Error::config(
                "checkpoints",
                format!("entries must lie in 1..={n_max}"),
            ));
        }

        let refine_max_iters = self.refine_max_iters.unwrap_or(20);
        if refine_max_iters == 0 {
            return Err(Error::config("refine_max_iters", "must be >= 1"));
        }
        let refine_step_tol = self.refine_step_tol.unwrap_or(1e-10);
        if !(refine_step_tol > 0.0) {
            return Err(Error::config("refine_step_tol", "must be positive"));
        }
        let duplicate_tol = self.duplicate_tol.unwrap_or(1e-12);
        if !(duplicate_tol > 0.0) {
            return Err(Error::config("duplicate_tol", "must be positive"));
        }

        let dof_per_neuron = self.dof_per_neuron.unwrap_or(dim + 1);
        if dof_per_neuron == 0 {
            return Err(Error::config("dof_per_neuron", "must be >= 1"));
        }

        let verify_grid_factor = self.verify_grid_factor.unwrap_or(1);
        if verify_grid_factor == 0 {
            return Err(Error::config("verify_grid_factor", "must be >= 1"));
        }

        Ok(ExperimentConfig {
            preset: preset_name,
            c,
            wavenumber,
            activation,
            cells,
            points_per_cell,
            sampling,
            n_b,
            n_theta,
            b_margin,
            normalize_directions: self.normalize_directions.unwrap_or(false),
            n_max,
            checkpoints,
            refine: self.refine.unwrap_or(true),
            refine_max_iters,
            refine_step_tol,
            duplicate_tol,
            dof_per_neuron,
            verify_grid_factor,
        })
    }
}

/// Apply one `key=value` override onto the raw TOML table. The value text is
/// parsed as TOML when possible and falls back to a plain string.
pub fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, value) = spec
        .split_once('=')
        .ok_or_else(|| Error::config("override", format!("`{spec}` is not KEY=VALUE")))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(Error::config("override", "empty key"));
    }
    let value = value.trim();
    let parsed: toml::Value = match format!("v = {value}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("just inserted"),
        Err(_) => toml::Value::String(value.to_string()),
    };
    table.insert(key.to_string(), parsed);
    Ok(())
}

/// Parse config text and resolve defaults.
pub fn parse_config_str(text: &str) -> Result<ExperimentConfig> {
    parse_config_with_overrides(text, &[])
}

/// Parse config text, apply overrides, resolve defaults.
pub fn parse_config_with_overrides(
    text: &str,
    overrides: &[String],
) -> Result<ExperimentConfig> {
    let mut table: toml::Table = text
        .parse()
        .map_err(|e| Error::config("<config>", format!("invalid TOML: {e}")))?;
    for spec in overrides {
        apply_override(&mut table, spec)?;
    }
    let raw: RawConfig = table
        .try_into()
        .map_err(|e| Error::config("<config>", e.to_string()))?;
    raw.resolve()
}

/// Read and parse a config file.
pub fn load_config(path: &Path, overrides: &[String]) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config_with_overrides(&text, overrides)
}
