//! Shared fixtures for the benchmarks: one original-scene context and a
//! small batch of heatmaps drawn from it.

use staploc_core::harness::{build_scenarios, ExperimentConfig, SceneContext};
use staploc_core::HeatmapTensor;

pub fn original_context() -> SceneContext {
    let cfg = ExperimentConfig::default();
    let scenarios = build_scenarios(&cfg).expect("default scenarios build");
    SceneContext::new(&scenarios[0], &cfg.covariance, 64, 1).expect("default scene calibrates")
}

pub fn heatmaps(ctx: &SceneContext, count: usize) -> Vec<HeatmapTensor> {
    ctx.generate(count, 10.0, 2).expect("generation succeeds")
}
