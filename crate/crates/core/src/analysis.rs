//! One-call pipeline from a parsed model to loop dominance results.

use thiserror::Error;

use crate::loops::{analyze_loops, LoopAnalysis, LoopError};
use crate::model::ModelDef;
use crate::sim::{run_ltm, LtmRun, SimError};
use crate::simplify::{full_cld, simplify, SimplifiedCLD, SimplifyParams};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Loops(#[from] LoopError),
}

#[derive(Debug, Clone)]
pub struct Analysis {
    pub model: ModelDef,
    pub run: LtmRun,
    pub loops: LoopAnalysis,
}

impl Analysis {
    /// Number of simulated steps; every score series has this length.
    pub fn steps(&self) -> usize {
        self.run.trajectory.steps()
    }

    pub fn full_cld(&self) -> SimplifiedCLD {
        full_cld(
            &self.model,
            &self.run.graph,
            &self.loops.links,
            &self.loops.loops,
            &self.loops.series,
        )
    }

    pub fn simplify(&self, params: SimplifyParams) -> SimplifiedCLD {
        simplify(
            &self.model,
            &self.run.graph,
            &self.loops.links,
            &self.loops.loops,
            &self.loops.series,
            params,
        )
    }

    /// Step index nearest to model time `t`, if within the run.
    pub fn step_at_time(&self, t: f64) -> Option<usize> {
        let specs = &self.model.sim_specs;
        let k = ((t - specs.start_time) / specs.dt).round();
        (k >= 0.0 && k <= self.steps() as f64).then_some(k as usize)
    }
}

/// Simulates `model` with link scoring, then enumerates and scores loops.
pub fn analyze(model: ModelDef, loop_cap: usize) -> Result<Analysis, AnalysisError> {
    let run = run_ltm(&model)?;
    let loops = analyze_loops(&run, loop_cap)?;
    Ok(Analysis { model, run, loops })
}
