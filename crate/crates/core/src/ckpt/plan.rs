use serde::{Deserialize, Serialize};

use super::CkptError;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FailureModel {
    /// Mean time between failures of one node, seconds.
    pub node_mtbf: f64,
    /// Cost of writing one checkpoint, seconds.
    pub checkpoint_cost: f64,
}

impl FailureModel {
    pub fn new(node_mtbf: f64, checkpoint_cost: f64) -> Result<Self, CkptError> {
        if !(node_mtbf > 0.0 && node_mtbf.is_finite()) {
            return Err(CkptError::InvalidModel(format!("node_mtbf {node_mtbf}")));
        }
        if !(checkpoint_cost > 0.0 && checkpoint_cost.is_finite()) {
            return Err(CkptError::InvalidModel(format!("checkpoint_cost {checkpoint_cost}")));
        }
        Ok(FailureModel {
            node_mtbf,
            checkpoint_cost,
        })
    }

    pub fn system_mtbf(&self, n_nodes: usize) -> f64 {
        self.node_mtbf / n_nodes as f64
    }
}

/// Young's interval sqrt(2·C·M) with M the system MTBF of `n_nodes` nodes.
pub fn plan_interval(fm: &FailureModel, n_nodes: usize) -> f64 {
    (2.0 * fm.checkpoint_cost * fm.system_mtbf(n_nodes)).sqrt()
}
