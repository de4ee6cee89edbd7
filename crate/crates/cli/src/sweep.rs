//! Parameter sweeps over `p`, node count and perturbation amplitude.

use std::path::Path;

use rayon::prelude::*;

use crate::config::{ExperimentConfig, InitialData};
use crate::error::CliError;
use crate::format::{fmt_f64, fmt_opt, write_csv};
use crate::pipeline::{execute, write_artifacts, Pipeline};

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub p: f64,
    pub nodes: usize,
    pub amplitude: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub cell: Cell,
    pub lambda_p: Option<f64>,
    pub lambda_fit: Option<f64>,
    /// `lambda_fit / (2 λ_p / p)`.
    pub ratio: Option<f64>,
    pub h2_ok: Option<bool>,
    pub status: String,
    pub error: Option<String>,
}

pub fn cells(cfg: &ExperimentConfig) -> Vec<Cell> {
    let Some(s) = &cfg.sweep else { return Vec::new() };
    let amps: Vec<Option<f64>> = if s.amplitude.is_empty() { vec![None] } else { s.amplitude.iter().map(|a| Some(*a)).collect() };
    let mut out = Vec::new();
    for &p in &s.p {
        for &nodes in &s.nodes {
            for &amplitude in &amps {
                out.push(Cell { p, nodes, amplitude });
            }
        }
    }
    out
}

fn cell_config(cfg: &ExperimentConfig, cell: &Cell) -> Result<ExperimentConfig, CliError> {
    let mut c = cfg.with_p(cell.p)?;
    c.domain = c.domain.with_nodes(cell.nodes);
    c.domain.spec().validate().map_err(|e| CliError::Config(format!("sweep.nodes: {e}")))?;
    if let Some(a) = cell.amplitude {
        c.initial = InitialData::ModePerturbed { modes: vec![(2, 1, a)] };
    }
    c.sweep = None;
    Ok(c)
}

fn run_cell(cfg: &ExperimentConfig, cell: &Cell, index: usize, out_dir: Option<&Path>) -> CellResult {
    let mut res = CellResult { cell: cell.clone(), lambda_p: None, lambda_fit: None, ratio: None, h2_ok: None, status: "ERROR".into(), error: None };
    let outcome = cell_config(cfg, cell).and_then(|c| {
        let o = execute(Pipeline::Rates, &c)?;
        if let Some(dir) = out_dir {
            write_artifacts(&o, &dir.join(format!("cell_{index:03}")))?;
        }
        Ok(o)
    });
    match outcome {
        Ok(o) => {
            res.h2_ok = Some(o.prepared.gap.h2_ok);
            res.lambda_p = o.prepared.gap.lambda_p;
            if let Some(v) = o.verdict {
                res.lambda_fit = v.lambda_fit;
                res.ratio = v.lambda_fit.zip(v.predicted).map(|(a, b)| a / b);
                res.status = v.status;
                res.error = v.error;
            }
        }
        Err(e) => res.error = Some(e.to_string()),
    }
    res
}

/// Runs every cell on up to `jobs` threads; failures are recorded per row.
pub fn sweep(cfg: &ExperimentConfig, jobs: usize, out_dir: Option<&Path>) -> Result<Vec<CellResult>, CliError> {
    let list = cells(cfg);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build().map_err(|e| CliError::Config(format!("--jobs: {e}")))?;
    Ok(pool.install(|| list.par_iter().enumerate().map(|(i, c)| run_cell(cfg, c, i, out_dir)).collect()))
}

pub const SWEEP_HEADER: [&str; 9] = ["p", "n", "amplitude", "lambda_p", "lambda_fit", "ratio", "h2_ok", "status", "error"];

pub fn write_sweep_csv(path: &Path, rows: &[CellResult]) -> Result<(), CliError> {
    let header: Vec<String> = SWEEP_HEADER.iter().map(|s| s.to_string()).collect();
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                fmt_f64(r.cell.p),
                r.cell.nodes.to_string(),
                r.cell.amplitude.map_or_else(String::new, fmt_f64),
                fmt_opt(r.lambda_p),
                fmt_opt(r.lambda_fit),
                fmt_opt(r.ratio),
                r.h2_ok.map_or_else(String::new, |b| b.to_string()),
                r.status.clone(),
                r.error.clone().unwrap_or_default(),
            ]
        })
        .collect();
    write_csv(path, &header, &body)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_grid_gives_header_only() {
        let cfg = ExperimentConfig::parse("[sweep]\np = []\n").unwrap();
        assert!(cells(&cfg).is_empty());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sweep.csv");
        write_sweep_csv(&path, &sweep(&cfg, 2, None).unwrap()).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, format!("{}\n", SWEEP_HEADER.join(",")));
    }

    #[test]
    fn product_order() {
        let cfg = ExperimentConfig::parse("[sweep]\np = [1.5, 2.0]\nnodes = [64, 128]\n").unwrap();
        let c = cells(&cfg);
        assert_eq!(c.len(), 4);
        assert_eq!((c[1].p, c[1].nodes), (1.5, 128));
    }

    #[test]
    fn bad_cell_is_recorded() {
        let cfg = ExperimentConfig::parse("[domain]\nnodes = 64\n[spectrum]\nmodes = 4\n[sweep]\nnodes = [4]\n").unwrap();
        let rows = sweep(&cfg, 1, None).unwrap();
        assert_eq!(rows.len(), 1);
        assert!(rows[0].error.is_some());
    }
}
