use std::io::Write;

use crate::error::Result;
use crate::metrics::fmt;
use crate::nncore::Classifier;
use crate::poisoner::{PoisonConfig, PoisonPlan};

/// Training and query budget spent by one run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CostReport {
    /// Shadow models the algorithm called for, whether fitted or cached.
    pub shadow_models: usize,
    /// Upper bound `2(k_max + 1)m` for the multi-point search.
    pub shadow_model_budget: usize,
    /// Models fitted from scratch during the shadow stage.
    pub shadow_models_fitted: usize,
    pub cache_hits: usize,
    pub target_models: usize,
    pub iterations_run: Option<usize>,
    /// Label queries per (target, challenge) pair: the neighbors plus the point itself.
    pub queries_per_challenge: usize,
    pub total_queries: usize,
    pub stage_seconds: Vec<(String, f64)>,
}

impl CostReport {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["quantity", "value"])?;
        let mut rows = vec![
            ("shadow_models".to_string(), self.shadow_models.to_string()),
            ("shadow_model_budget".to_string(), self.shadow_model_budget.to_string()),
            ("shadow_models_fitted".to_string(), self.shadow_models_fitted.to_string()),
            ("cache_hits".to_string(), self.cache_hits.to_string()),
            ("target_models".to_string(), self.target_models.to_string()),
            (
                "iterations_run".to_string(),
                self.iterations_run.map_or_else(|| "-".to_string(), |k| k.to_string()),
            ),
            ("queries_per_challenge".to_string(), self.queries_per_challenge.to_string()),
            ("total_queries".to_string(), self.total_queries.to_string()),
        ];
        rows.extend(self.stage_seconds.iter().map(|(s, t)| (format!("seconds.{s}"), fmt(*t))));
        for (k, v) in rows {
            w.write_record([k, v])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Model and query counts implied by a finished multi-point search.
pub fn account_cost<M: Classifier>(plan: &PoisonPlan<M>, cfg: &PoisonConfig, neighborhood_size: usize) -> CostReport {
    CostReport {
        shadow_models: plan.models_trained(),
        shadow_model_budget: cfg.max_models(),
        iterations_run: Some(plan.iterations_run),
        queries_per_challenge: neighborhood_size + 1,
        ..CostReport::default()
    }
}
