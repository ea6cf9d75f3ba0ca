use std::io::Write;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{average_offset, deposition_profile, infill_uniformity, Histogram};
use crate::env::{Env, EnvError, EpisodeConfig};
use crate::geom::SliceSet;
use crate::noise::FlowMode;
use crate::policy::{BaselineParams, Policy, PolicySpec};

#[derive(Clone, Debug)]
pub struct BenchConfig {
    pub episode: EpisodeConfig,
    pub baseline: BaselineParams,
    pub policies: Vec<PolicySpec>,
    pub seed: u64,
}

/// One CSV line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub slice_id: String,
    pub policy: String,
    pub flow_mode: String,
    #[serde(rename = "O_um")]
    pub o_um: f64,
    pub improvement_um: f64,
    pub hist_std_um: f64,
    pub hist_skew: f64,
    pub infill_std_um: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramRecord {
    pub slice_id: String,
    pub policy: String,
    #[serde(flatten)]
    pub histogram: Histogram,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchFailure {
    pub slice_id: String,
    pub policy: String,
    pub error: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub histograms: Vec<HistogramRecord>,
    pub failures: Vec<BenchFailure>,
}

impl BenchReport {
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.rows {
            w.serialize(row)?;
        }
        if self.rows.is_empty() {
            w.write_record([
                "slice_id",
                "policy",
                "flow_mode",
                "O_um",
                "improvement_um",
                "hist_std_um",
                "hist_skew",
                "infill_std_um",
                "seed",
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn histograms_json(&self) -> String {
        serde_json::to_string_pretty(&self.histograms).expect("histograms serialize")
    }
}

pub fn flow_mode_name(mode: &FlowMode) -> &'static str {
    match mode {
        FlowMode::Constant => "constant",
        FlowMode::Noise { .. } => "noise",
        FlowMode::Sine { .. } => "sine",
    }
}

/// Runs `policy` until the episode ends (the final step settles). The
/// finished environment is returned for inspection.
pub fn run_episode(slice: SliceSet, config: EpisodeConfig, seed: u64, policy: &mut dyn Policy) -> Result<Env, EnvError> {
    let (mut env, mut obs) = Env::reset(slice, config, seed)?;
    while !env.is_done() {
        let action = policy.act(&env, &obs);
        obs = env.step(action)?.obs;
    }
    Ok(env)
}

struct Metrics {
    o_um: f64,
    hist_std_um: f64,
    hist_skew: f64,
    infill_std_um: f64,
    histogram: Histogram,
}

fn episode_metrics(env: &Env) -> Result<Metrics, String> {
    let c = env.canvas().occupancy();
    let t = env.target();
    let offset = average_offset(&c, t).map_err(|e| e.to_string())?;
    let profile = deposition_profile(&c, t).map_err(|e| e.to_string())?;
    let infill = infill_uniformity(&env.canvas().height, t).map_err(|e| e.to_string())?;
    Ok(Metrics {
        o_um: offset.offset_um(),
        hist_std_um: profile.std_um,
        hist_skew: profile.skewness,
        infill_std_um: infill,
        histogram: profile.histogram,
    })
}

/// Every policy on every slice. All policies on a slice share one seed, so
/// they see the same flow variation; improvements are against the baseline
/// on that slice. Failing episodes are recorded and the batch continues.
pub fn bench(slices: &[(String, SliceSet)], config: &BenchConfig) -> BenchReport {
    let mut episode = config.episode.clone();
    episode.pressure = config.baseline.pressure;
    let width = episode.plan.width;
    let flow = flow_mode_name(&episode.flow).to_string();
    let mut seeds = ChaCha8Rng::seed_from_u64(config.seed);
    let mut report = BenchReport::default();
    for (id, slice) in slices {
        let seed = seeds.next_u64();
        let fail = |report: &mut BenchReport, policy: &str, error: String| {
            report.failures.push(BenchFailure {
                slice_id: id.clone(),
                policy: policy.to_string(),
                error,
            })
        };
        let run = |spec: &PolicySpec| -> Result<Metrics, String> {
            let mut policy = spec.build(config.baseline, width, seed).map_err(|e| e.to_string())?;
            let env = run_episode(slice.clone(), episode.clone(), seed, policy.as_mut()).map_err(|e| e.to_string())?;
            episode_metrics(&env)
        };
        let base = match run(&PolicySpec::Baseline) {
            Ok(m) => m,
            Err(e) => {
                for spec in &config.policies {
                    fail(&mut report, &spec.to_string(), format!("baseline: {e}"));
                }
                continue;
            }
        };
        for spec in &config.policies {
            let name = spec.to_string();
            let result = if *spec == PolicySpec::Baseline {
                Ok(Metrics {
                    histogram: base.histogram.clone(),
                    ..base
                })
            } else {
                run(spec)
            };
            match result {
                Ok(m) => {
                    report.rows.push(BenchRow {
                        slice_id: id.clone(),
                        policy: name.clone(),
                        flow_mode: flow.clone(),
                        o_um: m.o_um,
                        improvement_um: base.o_um - m.o_um,
                        hist_std_um: m.hist_std_um,
                        hist_skew: m.hist_skew,
                        infill_std_um: m.infill_std_um,
                        seed,
                    });
                    report.histograms.push(HistogramRecord {
                        slice_id: id.clone(),
                        policy: name,
                        histogram: m.histogram,
                    });
                }
                Err(e) => fail(&mut report, &name, e),
            }
        }
    }
    report
}
