//! Training reports shared by the SBO trainer and the baseline.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Number of blocks (SBO) or atoms (baseline) after this iteration.
    pub size: usize,
    pub rmse: f64,
    /// Seconds spent in this iteration, representation passes included.
    pub elapsed_learn: f64,
    /// Seconds spent in representation passes during this iteration.
    pub elapsed_represent: f64,
    /// Blocks left untouched because no signal chose them.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub idle_blocks: Vec<usize>,
    /// Largest `‖QᵀQ − I‖_F` over the blocks after this iteration (SBO).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_defect: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub algo: String,
    pub config: serde_json::Value,
    pub seed: u64,
    pub workers: usize,
    pub signal_dim: usize,
    pub signals: usize,
    pub iterations: Vec<IterationRecord>,
    /// Seconds spent building the starting dictionary (included in `t_learn`).
    pub t_init: f64,
    /// Total learning time.
    pub t_learn: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl TrainReport {
    pub fn new(algo: &str, config: serde_json::Value, seed: u64, p: usize, m: usize) -> Self {
        TrainReport {
            algo: algo.to_string(),
            config,
            seed,
            workers: rayon::current_num_threads(),
            signal_dim: p,
            signals: m,
            iterations: Vec::new(),
            t_init: 0.0,
            t_learn: 0.0,
            warnings: Vec::new(),
        }
    }

    pub fn final_rmse(&self) -> Option<f64> {
        self.iterations.last().map(|r| r.rmse)
    }

    pub fn rmse_trace(&self) -> Vec<f64> {
        self.iterations.iter().map(|r| r.rmse).collect()
    }
}
