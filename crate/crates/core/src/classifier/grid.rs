//! Exhaustive search over `(tau, d)`.

use std::io::{self, Write};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{train, ClassifierError};
use crate::data::{ClassLabel, Dataset, TimeSeries};
use crate::embedding::EmbeddingParams;
use crate::gmm::FitConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    /// Inclusive delay range.
    pub tau_range: (usize, usize),
    /// Inclusive embedding-dimension range.
    pub dim_range: (usize, usize),
    pub fit: FitConfig,
    /// Worker threads; 1 runs on the calling thread.
    pub workers: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            tau_range: (2, 30),
            dim_range: (2, 30),
            fit: FitConfig::default(),
            workers: 1,
        }
    }
}

impl GridConfig {
    /// Same inclusive range for both parameters.
    pub fn square(lo: usize, hi: usize, fit: FitConfig) -> Self {
        GridConfig {
            tau_range: (lo, hi),
            dim_range: (lo, hi),
            fit,
            workers: 1,
        }
    }

    /// Cells in evaluation order: delay-major, dimension-minor.
    pub fn cells(&self) -> Vec<EmbeddingParams> {
        let mut out = Vec::new();
        for tau in self.tau_range.0..=self.tau_range.1 {
            for dim in self.dim_range.0..=self.dim_range.1 {
                out.push(EmbeddingParams { tau, dim });
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellStatus {
    Evaluated,
    /// Some representative is too short to embed.
    Skipped,
    /// Training or classification failed; see `error`.
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellFit {
    pub label: ClassLabel,
    pub final_log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
    pub resets: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub tau: usize,
    pub d: usize,
    pub status: CellStatus,
    pub correct: usize,
    pub total: usize,
    pub accuracy: Option<f64>,
    pub seconds: f64,
    pub fits: Vec<CellFit>,
    pub error: Option<String>,
}

impl GridCell {
    pub fn params(&self) -> EmbeddingParams {
        EmbeddingParams {
            tau: self.tau,
            dim: self.d,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSearchResult {
    pub cells: Vec<GridCell>,
    /// Index into `cells` of the winner, if any cell was evaluated.
    pub best: Option<usize>,
}

/// JSON summary written next to the grid CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSummary {
    pub tau: Option<usize>,
    pub d: Option<usize>,
    pub accuracy: Option<f64>,
    pub correct: usize,
    pub total: usize,
    pub cells: usize,
    pub evaluated: usize,
    pub skipped: usize,
    pub failed: usize,
    pub tau_range: (usize, usize),
    pub d_range: (usize, usize),
    pub seed: u64,
}

impl GridSearchResult {
    pub fn best_cell(&self) -> Option<&GridCell> {
        self.best.map(|i| &self.cells[i])
    }

    pub fn best_params(&self) -> Option<EmbeddingParams> {
        self.best_cell().map(GridCell::params)
    }

    pub fn best_accuracy(&self) -> Option<f64> {
        self.best_cell().and_then(|c| c.accuracy)
    }

    pub fn cell(&self, tau: usize, d: usize) -> Option<&GridCell> {
        self.cells.iter().find(|c| c.tau == tau && c.d == d)
    }

    /// Writes `tau,d,accuracy,skipped,seconds`. With `timing = false` the
    /// seconds column is left empty so output is reproducible byte for byte.
    pub fn write_csv<W: Write>(&self, mut w: W, timing: bool) -> io::Result<()> {
        writeln!(w, "tau,d,accuracy,skipped,seconds")?;
        for c in &self.cells {
            let acc = c.accuracy.map(|a| a.to_string()).unwrap_or_default();
            let secs = if timing {
                format!("{:.6}", c.seconds)
            } else {
                String::new()
            };
            writeln!(
                w,
                "{},{},{},{},{}",
                c.tau,
                c.d,
                acc,
                c.status == CellStatus::Skipped,
                secs
            )?;
        }
        Ok(())
    }

    pub fn summary(&self, config: &GridConfig) -> GridSummary {
        let count = |s: CellStatus| self.cells.iter().filter(|c| c.status == s).count();
        let best = self.best_cell();
        GridSummary {
            tau: best.map(|c| c.tau),
            d: best.map(|c| c.d),
            accuracy: best.and_then(|c| c.accuracy),
            correct: best.map_or(0, |c| c.correct),
            total: best.map_or(0, |c| c.total),
            cells: self.cells.len(),
            evaluated: count(CellStatus::Evaluated),
            skipped: count(CellStatus::Skipped),
            failed: count(CellStatus::Failed),
            tau_range: config.tau_range,
            d_range: config.dim_range,
            seed: config.fit.seed,
        }
    }
}

/// Highest accuracy; ties go to the smaller `d`, then the smaller `tau`.
pub fn select_best(cells: &[GridCell]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, c) in cells.iter().enumerate() {
        let Some(acc) = c.accuracy else { continue };
        let better = match best {
            None => true,
            Some(b) => {
                let bc = &cells[b];
                let bacc = bc.accuracy.unwrap_or(f64::NEG_INFINITY);
                acc > bacc || (acc == bacc && (c.d, c.tau) < (bc.d, bc.tau))
            }
        };
        if better {
            best = Some(i);
        }
    }
    best
}

fn evaluate_cell(
    representatives: &[(ClassLabel, &TimeSeries)],
    eval_set: &Dataset,
    params: EmbeddingParams,
    fit: &FitConfig,
) -> GridCell {
    let started = Instant::now();
    let mut cell = GridCell {
        tau: params.tau,
        d: params.dim,
        status: CellStatus::Evaluated,
        correct: 0,
        total: eval_set.len(),
        accuracy: None,
        seconds: 0.0,
        fits: Vec::new(),
        error: None,
    };
    if representatives.iter().any(|(_, s)| !params.fits(s.len())) {
        cell.status = CellStatus::Skipped;
        return cell;
    }
    let outcome = train(representatives, params, fit).and_then(|bundle| {
        cell.fits = bundle
            .classes()
            .iter()
            .map(|c| CellFit {
                label: c.label.clone(),
                final_log_likelihood: c.model.meta.final_log_likelihood,
                iterations: c.model.meta.iterations,
                converged: c.model.meta.converged,
                resets: c.model.meta.resets,
            })
            .collect();
        let prepared = bundle.prepare()?;
        let mut correct = 0;
        for s in eval_set.iter() {
            let pred = prepared.classify(s)?;
            if Some(&pred.label) == s.label() {
                correct += 1;
            }
        }
        Ok(correct)
    });
    match outcome {
        Ok(correct) => {
            cell.correct = correct;
            cell.accuracy = Some(correct as f64 / eval_set.len() as f64);
        }
        Err(e) => {
            cell.status = CellStatus::Failed;
            cell.error = Some(e.to_string());
        }
    }
    cell.seconds = started.elapsed().as_secs_f64();
    cell
}

/// Trains on the representatives and scores accuracy on `eval_set` for
/// every `(tau, d)` of the grid.
///
/// Cells are independent and run on a pool of `config.workers` threads;
/// results are merged in cell order, and every fit seeds itself from
/// `(seed, class, tau, d)`, so the table does not depend on the worker
/// count.
pub fn grid_search(
    representatives: &[(ClassLabel, &TimeSeries)],
    eval_set: &Dataset,
    config: &GridConfig,
) -> Result<GridSearchResult, ClassifierError> {
    if eval_set.is_empty() {
        return Err(ClassifierError::Domain("evaluation set is empty".into()));
    }
    if !eval_set.is_fully_labeled() {
        return Err(ClassifierError::Domain(
            "evaluation set has unlabeled series".into(),
        ));
    }
    if representatives.len() < 2 {
        return Err(ClassifierError::Domain(
            "need representatives for at least 2 classes".into(),
        ));
    }
    let (tl, th) = config.tau_range;
    let (dl, dh) = config.dim_range;
    if tl == 0 || dl == 0 || tl > th || dl > dh {
        return Err(ClassifierError::Domain(format!(
            "invalid grid ranges tau {tl}:{th}, d {dl}:{dh}"
        )));
    }
    if config.workers == 0 {
        return Err(ClassifierError::Domain("workers must be >= 1".into()));
    }
    config.fit.validate()?;
    for (label, s) in representatives {
        if s.channels() != eval_set.channels() {
            return Err(ClassifierError::Schema(format!(
                "representative {} of class {label} has channels {:?}, evaluation set {:?}",
                s.id(),
                s.channels(),
                eval_set.channels()
            )));
        }
    }

    let params = config.cells();
    let run = |p: &EmbeddingParams| evaluate_cell(representatives, eval_set, *p, &config.fit);
    let cells: Vec<GridCell> = if config.workers == 1 {
        params.iter().map(run).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.workers)
            .build()
            .map_err(|e| ClassifierError::Domain(format!("thread pool: {e}")))?;
        pool.install(|| params.par_iter().map(run).collect())
    };
    let best = select_best(&cells);
    Ok(GridSearchResult { cells, best })
}
