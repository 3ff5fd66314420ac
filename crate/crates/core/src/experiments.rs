//! Benchmark harness, trajectory export and the fully-resolved run config.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::baselines::{Ghav, Ghep, Mbm, RandomPolicy, Scoring};
use crate::error::{Error, Result};
use crate::marl::{Checkpoint, FleetPolicy, GroupPolicy, Selection, TrainConfig};
use crate::scenario::{build_instance, ProblemInstance, ScenarioConfig};
use crate::seeds::derive_seed;
use crate::sim::{run_episode, Dispatcher, EpisodeResult};
use crate::state::Variant;

/// Trailing window of the trajectory heat field, in minutes.
pub const HEAT_WINDOW_MINUTES: f64 = 120.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PolicyKind {
    #[serde(rename = "random")]
    Random,
    #[serde(rename = "ghav")]
    Ghav,
    #[serde(rename = "ghep")]
    Ghep,
    #[serde(rename = "mbm")]
    Mbm,
    #[serde(rename = "marl-b")]
    MarlB,
    #[serde(rename = "marl-ep")]
    MarlEp,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 6] = [
        PolicyKind::Random,
        PolicyKind::Ghav,
        PolicyKind::Ghep,
        PolicyKind::Mbm,
        PolicyKind::MarlB,
        PolicyKind::MarlEp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Random => "random",
            PolicyKind::Ghav => "ghav",
            PolicyKind::Ghep => "ghep",
            PolicyKind::Mbm => "mbm",
            PolicyKind::MarlB => "marl-b",
            PolicyKind::MarlEp => "marl-ep",
        }
    }

    pub fn variant(self) -> Option<Variant> {
        match self {
            PolicyKind::MarlB => Some(Variant::Basic),
            PolicyKind::MarlEp => Some(Variant::Ep),
            _ => None,
        }
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PolicyKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::UnknownName {
                kind: "policy",
                name: s.into(),
            })
    }
}

/// A policy ready to run: baselines carry their scoring, learned policies
/// their loaded networks.
#[derive(Clone, Debug)]
pub struct PolicySpec {
    pub kind: PolicyKind,
    pub scoring: Scoring,
    pub checkpoint: Option<Checkpoint>,
}

impl PolicySpec {
    pub fn baseline(kind: PolicyKind, scoring: Scoring) -> Result<Self> {
        if kind.variant().is_some() {
            return Err(Error::Config(format!("policy {} needs a checkpoint", kind.name())));
        }
        Ok(Self {
            kind,
            scoring,
            checkpoint: None,
        })
    }

    pub fn learned(kind: PolicyKind, checkpoint: Checkpoint) -> Result<Self> {
        match kind.variant() {
            Some(v) if v == checkpoint.variant => Ok(Self {
                kind,
                scoring: Scoring::default(),
                checkpoint: Some(checkpoint),
            }),
            Some(v) => Err(Error::Config(format!(
                "policy {} expects a {} checkpoint, got {}",
                kind.name(),
                v.name(),
                checkpoint.variant.name()
            ))),
            None => Err(Error::Config(format!("policy {} takes no checkpoint", kind.name()))),
        }
    }

    /// Resolves a CLI-style name; learned policies load `checkpoint`.
    pub fn resolve(name: &str, scoring: Scoring, checkpoint: Option<&Path>) -> Result<Self> {
        let kind: PolicyKind = name.parse()?;
        if kind.variant().is_none() {
            return Self::baseline(kind, scoring);
        }
        let path = checkpoint
            .ok_or_else(|| Error::Config(format!("policy {name} needs --checkpoint")))?;
        Self::learned(kind, Checkpoint::load(path)?)
    }

    pub fn name(&self) -> &'static str {
        self.kind.name()
    }

    /// Dispatcher for one episode with `couriers` couriers. Learned policies act
    /// greedily; with several learners in the checkpoint, couriers are split
    /// between them as evenly as possible in id order.
    pub fn dispatcher(&self, couriers: usize) -> Box<dyn Dispatcher + Send> {
        match self.kind {
            PolicyKind::Random => Box::new(RandomPolicy),
            PolicyKind::Ghav => Box::new(Ghav),
            PolicyKind::Ghep => Box::new(Ghep {
                scoring: self.scoring,
            }),
            PolicyKind::Mbm => Box::new(Mbm {
                scoring: self.scoring,
            }),
            PolicyKind::MarlB | PolicyKind::MarlEp => {
                let ck = self.checkpoint.as_ref().expect("learned policies hold a checkpoint");
                let learners = ck.policies(Selection::Greedy);
                let n = learners.len();
                Box::new(FleetPolicy {
                    groups: (0..couriers)
                        .map(|c| GroupPolicy::Learner(c * n / couriers.max(1)))
                        .collect(),
                    learners,
                })
            }
        }
    }
}

/// Every tunable in one document; each run writes the resolved copy next to
/// its outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LabConfig {
    pub scenario: ScenarioConfig,
    pub instances: usize,
    pub seed: u64,
    pub scoring: Scoring,
    pub train: TrainConfig,
    /// Held-out instances for greedy evaluation during training.
    pub eval_instances: usize,
}

impl Default for LabConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioConfig::base(),
            instances: 40,
            seed: 0,
            scoring: Scoring::Rate,
            train: TrainConfig::default(),
            eval_instances: 10,
        }
    }
}

impl LabConfig {
    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }
}

/// `count` instances of `scenario`. Instance `i` depends only on the master
/// seed, the scenario name and `i`.
pub fn instance_set(
    scenario: &ScenarioConfig,
    stream: &str,
    count: usize,
    seed: u64,
) -> Result<Vec<ProblemInstance>> {
    let label = format!("{stream}/{}", scenario.name);
    (0..count)
        .into_par_iter()
        .map(|i| {
            let mut c = scenario.clone();
            c.seed = derive_seed(seed, &label, i as u64);
            build_instance(&c)
        })
        .collect()
}

/// Dispatcher RNG seed of episode `i` in a benchmark cell; shared by all
/// policies so they see common random numbers.
pub fn episode_seed(seed: u64, i: usize) -> u64 {
    derive_seed(seed, "episode", i as u64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub scenario: String,
    pub policy: String,
    pub instance: usize,
    pub instance_seed: u64,
    pub requests: usize,
    pub total_price: f64,
    pub served_price: f64,
    pub score: f64,
    pub served: usize,
    pub expired: usize,
    pub route_violations: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellSummary {
    pub scenario: String,
    pub policy: String,
    pub instances: usize,
    pub mean: f64,
    pub std_err: f64,
    pub wall_seconds: f64,
}

#[derive(Clone, Debug, Default)]
pub struct Benchmark {
    pub rows: Vec<BenchRow>,
    pub cells: Vec<CellSummary>,
    pub warnings: Vec<String>,
}

/// Mean and standard error of the mean.
pub fn mean_and_std_err(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Runs every policy on `instances` fresh instances of every scenario.
/// Instances of a cell run in parallel; rows come back in instance order.
pub fn run_benchmark(
    scenarios: &[ScenarioConfig],
    policies: &[PolicySpec],
    instances: usize,
    seed: u64,
) -> Result<Benchmark> {
    for s in scenarios {
        s.validate()?;
    }
    let mut out = Benchmark::default();
    for scenario in scenarios {
        let set = instance_set(scenario, "instance", instances, seed)?;
        for (i, inst) in set.iter().enumerate() {
            if inst.requests.is_empty() {
                out.warnings.push(format!(
                    "{} instance {i} has no requests; its score is 0",
                    scenario.name
                ));
            }
        }
        for policy in policies {
            let start = Instant::now();
            let results: Vec<EpisodeResult> = set
                .par_iter()
                .enumerate()
                .map(|(i, inst)| {
                    let mut d = policy.dispatcher(inst.meta.couriers);
                    run_episode(inst, d.as_mut(), episode_seed(seed, i))
                })
                .collect::<Result<_>>()?;
            let wall_seconds = start.elapsed().as_secs_f64();
            let scores: Vec<f64> = results.iter().map(|r| r.score).collect();
            let (mean, std_err) = mean_and_std_err(&scores);
            out.cells.push(CellSummary {
                scenario: scenario.name.clone(),
                policy: policy.name().into(),
                instances: set.len(),
                mean,
                std_err,
                wall_seconds,
            });
            out.rows.extend(set.iter().zip(&results).enumerate().map(|(i, (inst, r))| BenchRow {
                scenario: scenario.name.clone(),
                policy: policy.name().into(),
                instance: i,
                instance_seed: inst.meta.seed,
                requests: inst.requests.len(),
                total_price: r.total_price,
                served_price: r.served_price,
                score: r.score,
                served: r.served_requests,
                expired: r.expired_requests,
                route_violations: r.route_violations,
            }));
        }
    }
    Ok(out)
}

impl Benchmark {
    /// One row per episode.
    pub fn write_rows_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    /// One row per (scenario, policy). Wall time is left out so that repeated
    /// runs produce identical bytes; it is shown in [`Benchmark::table`].
    pub fn write_summary_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["scenario", "policy", "instances", "mean_score", "std_err"])?;
        for c in &self.cells {
            w.write_record([
                c.scenario.clone(),
                c.policy.clone(),
                c.instances.to_string(),
                c.mean.to_string(),
                c.std_err.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn table(&self) -> String {
        let header = ["scenario", "policy", "n", "score %", "± se", "wall s"];
        let body: Vec<[String; 6]> = self
            .cells
            .iter()
            .map(|c| {
                [
                    c.scenario.clone(),
                    c.policy.clone(),
                    c.instances.to_string(),
                    format!("{:.2}", 100.0 * c.mean),
                    format!("{:.2}", 100.0 * c.std_err),
                    format!("{:.1}", c.wall_seconds),
                ]
            })
            .collect();
        let mut widths = header.map(|h| h.chars().count());
        for row in &body {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.chars().count());
            }
        }
        let mut s = String::new();
        let line = |s: &mut String, cells: &[String]| {
            for (i, (cell, w)) in cells.iter().zip(widths).enumerate() {
                let pad = w - cell.chars().count();
                if i > 0 {
                    s.push_str("  ");
                }
                // Text left-aligned, numbers right-aligned.
                if i < 2 {
                    let _ = write!(s, "{cell}{}", " ".repeat(pad));
                } else {
                    let _ = write!(s, "{}{cell}", " ".repeat(pad));
                }
            }
            s.truncate(s.trim_end().len());
            s.push('\n');
        };
        line(&mut s, &header.map(String::from));
        let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
        line(&mut s, &rule);
        for row in &body {
            line(&mut s, row);
        }
        s
    }
}

/// Sum of the prices of requests that appeared in `(t - window, t]`, per grid.
pub fn heat_field(instance: &ProblemInstance, t: f64, window: f64) -> Vec<f64> {
    let mut heat = vec![0.0; instance.world.num_cells()];
    for r in &instance.requests {
        if r.arrival > t - window && r.arrival <= t {
            heat[r.grid] += r.price;
        }
    }
    heat
}

/// Snapshot times of the exported heat field: every hour of the horizon.
pub fn heat_times(horizon: f64) -> Vec<f64> {
    (1..)
        .map(|h| 60.0 * h as f64)
        .take_while(|&t| t <= horizon + 1e-9)
        .collect()
}

/// Paths written by [`export_trajectories`].
#[derive(Clone, Debug)]
pub struct ExportFiles {
    pub json: PathBuf,
    pub csv: PathBuf,
    pub heat_csv: PathBuf,
}

/// Writes the labelled episodes of one instance as `trajectories.json`,
/// `trajectories.csv` and `heat.csv` under `dir`.
pub fn export_trajectories(
    instance: &ProblemInstance,
    episodes: &[(String, EpisodeResult)],
    dir: &Path,
) -> Result<ExportFiles> {
    std::fs::create_dir_all(dir)?;
    let world = &instance.world;
    let times = heat_times(instance.horizon);
    let heat: Vec<_> = times
        .iter()
        .map(|&t| {
            let field = heat_field(instance, t, HEAT_WINDOW_MINUTES);
            let rows: Vec<&[f64]> = field.chunks(world.width).collect();
            json!({ "time": t, "price": rows })
        })
        .collect();
    let policies: Vec<_> = episodes
        .iter()
        .map(|(label, r)| {
            let couriers: Vec<_> = r
                .actions
                .iter()
                .enumerate()
                .map(|(c, acts)| {
                    let visits: Vec<_> = acts
                        .iter()
                        .map(|a| {
                            json!({
                                "decision_time": a.decision_time,
                                "from": [a.origin.x, a.origin.y],
                                "to": [a.target.x, a.target.y],
                                "patrol": a.patrol,
                                "arrival_time": a.arrival_time,
                                "reward": a.reward,
                                "completion_time": a.completion_time,
                            })
                        })
                        .collect();
                    json!({
                        "courier": c,
                        "fleet": r.courier_fleet.get(c).copied().unwrap_or(0),
                        "revenue": r.courier_revenue.get(c).copied().unwrap_or(0.0),
                        "visits": visits,
                    })
                })
                .collect();
            json!({ "policy": label, "score": r.score, "couriers": couriers })
        })
        .collect();
    let doc = json!({
        "scenario": instance.meta.scenario,
        "instance_seed": instance.meta.seed,
        "width": world.width,
        "height": world.height,
        "horizon": instance.horizon,
        "heat_window": HEAT_WINDOW_MINUTES,
        "heat": heat,
        "policies": policies,
    });
    let files = ExportFiles {
        json: dir.join("trajectories.json"),
        csv: dir.join("trajectories.csv"),
        heat_csv: dir.join("heat.csv"),
    };
    std::fs::write(&files.json, serde_json::to_string_pretty(&doc)? + "\n")?;

    let mut w = csv::Writer::from_path(&files.csv)?;
    w.write_record([
        "policy",
        "courier_id",
        "decision_time",
        "from_gx",
        "from_gy",
        "to_gx",
        "to_gy",
        "patrol",
        "reward",
        "completion_time",
    ])?;
    for (label, r) in episodes {
        for a in r.actions.iter().flatten() {
            w.write_record([
                label.clone(),
                a.courier.to_string(),
                a.decision_time.to_string(),
                a.origin.x.to_string(),
                a.origin.y.to_string(),
                a.target.x.to_string(),
                a.target.y.to_string(),
                a.patrol.to_string(),
                a.reward.to_string(),
                a.completion_time.to_string(),
            ])?;
        }
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(&files.heat_csv)?;
    w.write_record(["time", "gx", "gy", "price"])?;
    for &t in &times {
        for (g, p) in heat_field(instance, t, HEAT_WINDOW_MINUTES).iter().enumerate() {
            let cell = world.cell_at(g);
            w.write_record([t.to_string(), cell.x.to_string(), cell.y.to_string(), p.to_string()])?;
        }
    }
    w.flush()?;
    Ok(files)
}
