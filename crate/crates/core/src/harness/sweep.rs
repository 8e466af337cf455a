//! Ablation sweeps over guidance mode, embed mode, and K.
//!
//! The grid is the cartesian product of whatever dimensions the grid file
//! provides, iterated guidance-first, then embed mode, then K, each in file
//! order; omitted dimensions pin the base config's value. An empty grid
//! (no dimensions at all) produces an empty table.

use serde::{Deserialize, Serialize};

use crate::backend::{GuidanceMode, PromptBundle};
use crate::pipeline::PipelineConfig;
use crate::scene_graph::EmbedMode;

use super::runner::{run_suite, SuiteAggregates, SuiteReport};
use super::{HarnessError, Trace};

/// Grid file schema: any subset of the three swept dimensions.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConfigGrid {
    pub guidance_mode: Option<Vec<GuidanceMode>>,
    pub embed_mode: Option<Vec<EmbedMode>>,
    pub k: Option<Vec<usize>>,
}

impl ConfigGrid {
    pub fn is_empty(&self) -> bool {
        self.guidance_mode.is_none() && self.embed_mode.is_none() && self.k.is_none()
    }
}

/// One sweep row: the effective config values and the suite they produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub guidance_mode: GuidanceMode,
    pub embed_mode: EmbedMode,
    pub k: usize,
    pub aggregates: SuiteAggregates,
    pub suite: SuiteReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
}

/// Run every (config, trace set) combination in deterministic grid order.
pub fn ablation_sweep(
    traces: &[Trace],
    base: &PipelineConfig,
    grid: &ConfigGrid,
    bundle: &PromptBundle,
) -> Result<SweepReport, HarnessError> {
    if grid.is_empty() {
        return Ok(SweepReport { rows: Vec::new() });
    }
    let guidance_values = grid
        .guidance_mode
        .clone()
        .unwrap_or_else(|| vec![base.guidance_mode]);
    let embed_values = grid
        .embed_mode
        .clone()
        .unwrap_or_else(|| vec![base.embed_mode]);
    let k_values = grid.k.clone().unwrap_or_else(|| vec![base.top_k]);

    let mut rows = Vec::new();
    for &guidance_mode in &guidance_values {
        for &embed_mode in &embed_values {
            for &k in &k_values {
                let config = PipelineConfig {
                    guidance_mode,
                    embed_mode,
                    top_k: k,
                    ..base.clone()
                };
                let suite = run_suite(traces, &config, bundle)?;
                rows.push(SweepRow {
                    guidance_mode,
                    embed_mode,
                    k,
                    aggregates: suite.aggregates.clone(),
                    suite,
                });
            }
        }
    }
    Ok(SweepReport { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::gen::{gen_trace, GenParams};

    #[test]
    fn grid_cardinality_and_order() {
        let traces: Vec<Trace> = (0..3)
            .map(|seed| {
                gen_trace(&GenParams {
                    seed,
                    frames: 12,
                    ..GenParams::default()
                })
            })
            .collect();
        let grid = ConfigGrid {
            k: Some(vec![1, 3, 5]),
            ..ConfigGrid::default()
        };
        let report = ablation_sweep(
            &traces,
            &PipelineConfig::default(),
            &grid,
            &PromptBundle::default(),
        )
        .unwrap();
        assert_eq!(report.rows.len(), 3);
        let ks: Vec<usize> = report.rows.iter().map(|r| r.k).collect();
        assert_eq!(ks, vec![1, 3, 5]);
        for row in &report.rows {
            assert_eq!(row.aggregates.sessions, 3);
        }
    }

    #[test]
    fn aggregates_match_independent_recomputation() {
        use crate::harness::runner::TimingVerdict;

        let traces: Vec<Trace> = (10..16)
            .map(|seed| {
                gen_trace(&GenParams {
                    seed,
                    frames: 10 + seed % 12,
                    ..GenParams::default()
                })
            })
            .collect();
        let grid = ConfigGrid {
            k: Some(vec![1, 3]),
            ..ConfigGrid::default()
        };
        let report = ablation_sweep(
            &traces,
            &PipelineConfig::default(),
            &grid,
            &PromptBundle::default(),
        )
        .unwrap();
        for row in &report.rows {
            let sessions = &row.suite.sessions;
            let with_gt: Vec<_> = sessions
                .iter()
                .filter(|s| s.timing_verdict.is_some())
                .collect();
            assert_eq!(row.aggregates.sessions, sessions.len());
            assert_eq!(row.aggregates.with_ground_truth, with_gt.len());
            let rate = |v: TimingVerdict| {
                with_gt
                    .iter()
                    .filter(|s| s.timing_verdict == Some(v))
                    .count() as f64
                    / with_gt.len() as f64
            };
            if !with_gt.is_empty() {
                assert!(
                    (row.aggregates.timing_accuracy.unwrap() - rate(TimingVerdict::InWindow)).abs()
                        < 1e-12
                );
                assert!(
                    (row.aggregates.premature_rate.unwrap() - rate(TimingVerdict::Premature)).abs()
                        < 1e-12
                );
                assert!(
                    (row.aggregates.missed_rate.unwrap() - rate(TimingVerdict::Missed)).abs()
                        < 1e-12
                );
            }
            let with_decisions: Vec<_> = sessions
                .iter()
                .filter(|s| s.latency.decisions > 0)
                .collect();
            if !with_decisions.is_empty() {
                let mean = with_decisions
                    .iter()
                    .map(|s| s.latency.mean_total_ms)
                    .sum::<f64>()
                    / with_decisions.len() as f64;
                assert!((row.aggregates.mean_decision_latency_ms.unwrap() - mean).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn empty_grid_produces_empty_table() {
        let report = ablation_sweep(
            &[],
            &PipelineConfig::default(),
            &ConfigGrid::default(),
            &PromptBundle::default(),
        )
        .unwrap();
        assert!(report.rows.is_empty());
    }

    #[test]
    fn two_dimensional_grid_iterates_guidance_first() {
        let grid = ConfigGrid {
            guidance_mode: Some(vec![GuidanceMode::None, GuidanceMode::Query]),
            embed_mode: Some(vec![EmbedMode::GraphText, EmbedMode::OriginalText]),
            k: None,
        };
        let report = ablation_sweep(
            &[],
            &PipelineConfig::default(),
            &grid,
            &PromptBundle::default(),
        )
        .unwrap();
        let combos: Vec<(GuidanceMode, EmbedMode)> = report
            .rows
            .iter()
            .map(|r| (r.guidance_mode, r.embed_mode))
            .collect();
        assert_eq!(
            combos,
            vec![
                (GuidanceMode::None, EmbedMode::GraphText),
                (GuidanceMode::None, EmbedMode::OriginalText),
                (GuidanceMode::Query, EmbedMode::GraphText),
                (GuidanceMode::Query, EmbedMode::OriginalText),
            ]
        );
    }
}
