use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use courierlab::experiments::{
    episode_seed, export_trajectories, instance_set, run_benchmark, LabConfig, PolicyKind,
    PolicySpec,
};
use courierlab::marl::{train, write_learning_curve, Checkpoint};
use courierlab::scenario::{save_instance, ScenarioConfig};
use courierlab::state::Variant;
use courierlab::run_episode;

#[derive(Parser)]
#[command(name = "courierlab", version, about = "Courier dispatching simulation lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate problem instances as JSON files.
    Gen(Common),
    /// Score baseline (or learned) policies over fresh instances.
    Bench(Common),
    /// Train a MARL dispatcher and write its checkpoint and learning curve.
    Train(Common),
    /// Evaluate a checkpoint greedily over fresh instances.
    Eval(Common),
    /// Export courier trajectories and the demand heat field for one instance.
    Export(Common),
}

#[derive(Args)]
struct Common {
    /// Scenario preset(s), comma separated: base, median, large, small_tw,
    /// low_dyn, random_grid, desk. Defaults to the config's scenario.
    #[arg(long, value_delimiter = ',')]
    scenario: Vec<String>,
    /// Policies, comma separated: random, ghav, ghep, mbm, marl-b, marl-ep.
    #[arg(long, value_delimiter = ',')]
    policy: Vec<String>,
    #[arg(long)]
    instances: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    episodes: Option<usize>,
    /// Checkpoint for marl-b / marl-ep.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// JSON config; command-line flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl Common {
    fn resolve(&self) -> Result<LabConfig> {
        let mut config = match &self.config {
            Some(p) => LabConfig::load(p).with_context(|| format!("reading {}", p.display()))?,
            None => LabConfig::default(),
        };
        if let Some(n) = self.instances {
            config.instances = n;
        }
        if let Some(s) = self.seed {
            config.seed = s;
            config.train.seed = s;
        }
        if let Some(e) = self.episodes {
            config.train.episodes = e;
        }
        if let Some(first) = self.scenario.first() {
            config.scenario = ScenarioConfig::preset(first)?;
        }
        Ok(config)
    }

    fn scenarios(&self, config: &LabConfig) -> Result<Vec<ScenarioConfig>> {
        if self.scenario.is_empty() {
            return Ok(vec![config.scenario.clone()]);
        }
        Ok(self
            .scenario
            .iter()
            .map(|s| ScenarioConfig::preset(s))
            .collect::<courierlab::Result<_>>()?)
    }

    /// Resolves every policy (loading checkpoints) before anything runs.
    fn policies(&self, config: &LabConfig, default: &[&str]) -> Result<Vec<PolicySpec>> {
        let names: Vec<&str> = if self.policy.is_empty() {
            default.to_vec()
        } else {
            self.policy.iter().map(String::as_str).collect()
        };
        names
            .into_iter()
            .map(|n| {
                PolicySpec::resolve(n, config.scoring, self.checkpoint.as_deref())
                    .with_context(|| format!("policy {n}"))
            })
            .collect()
    }

    fn out_dir(&self, config: &LabConfig) -> Result<&Path> {
        std::fs::create_dir_all(&self.out)
            .with_context(|| format!("creating {}", self.out.display()))?;
        config.save(&self.out.join("config.json"))?;
        Ok(&self.out)
    }
}

const BASELINES: [&str; 4] = ["random", "ghav", "ghep", "mbm"];

fn gen(args: &Common) -> Result<()> {
    let config = args.resolve()?;
    let scenarios = args.scenarios(&config)?;
    let out = args.out_dir(&config)?;
    for s in &scenarios {
        for (i, inst) in instance_set(s, "instance", config.instances, config.seed)?.iter().enumerate() {
            save_instance(inst, &out.join(format!("{}_{i:03}.json", s.name)))?;
        }
        eprintln!("{}: {} instances", s.name, config.instances);
    }
    Ok(())
}

fn bench(args: &Common, default: &[&str], prefix: &str) -> Result<()> {
    let config = args.resolve()?;
    let scenarios = args.scenarios(&config)?;
    let policies = args.policies(&config, default)?;
    let out = args.out_dir(&config)?;
    let result = run_benchmark(&scenarios, &policies, config.instances, config.seed)?;
    for w in &result.warnings {
        eprintln!("warning: {w}");
    }
    result.write_rows_csv(std::fs::File::create(out.join(format!("{prefix}_rows.csv")))?)?;
    result.write_summary_csv(std::fs::File::create(out.join(format!("{prefix}_summary.csv")))?)?;
    print!("{}", result.table());
    Ok(())
}

fn train_cmd(args: &Common) -> Result<()> {
    let mut config = args.resolve()?;
    let kind: PolicyKind = match args.policy.as_slice() {
        [] => PolicyKind::MarlB,
        [one] => one.parse()?,
        _ => bail!("train takes a single policy"),
    };
    config.train.variant = match kind.variant() {
        Some(v) => v,
        None => bail!("train needs marl-b or marl-ep, got {}", kind.name()),
    };
    let scenarios = args.scenarios(&config)?;
    let [scenario] = scenarios.as_slice() else {
        bail!("train takes a single scenario");
    };
    let out = args.out_dir(&config)?;
    let train_set = instance_set(scenario, "train", config.instances, config.seed)?;
    let eval_set = instance_set(scenario, "eval", config.eval_instances, config.seed)?;
    let outcome = train(&config.train, &train_set, &eval_set, |row| {
        if (row.episode + 1) % 10 == 0 || row.eval_score.is_some() {
            let eval = row.eval_score.map(|e| format!(" eval {:.4}", e)).unwrap_or_default();
            eprintln!(
                "episode {:>6}  train {:.4}{eval}  value loss {:.4}  entropy {:.3}",
                row.episode + 1,
                row.train_score,
                row.value_loss,
                row.mean_entropy
            );
        }
    })?;
    outcome.checkpoint(config.train.variant).save(&out.join("checkpoint.json"))?;
    write_learning_curve(&outcome.curve, std::fs::File::create(out.join("learning_curve.csv"))?)?;
    eprintln!("wrote {}", out.join("checkpoint.json").display());
    Ok(())
}

fn export(args: &Common) -> Result<()> {
    let config = args.resolve()?;
    let scenarios = args.scenarios(&config)?;
    let [scenario] = scenarios.as_slice() else {
        bail!("export takes a single scenario");
    };
    let policies = args.policies(&config, &BASELINES)?;
    let out = args.out_dir(&config)?;
    let inst = instance_set(scenario, "instance", 1, config.seed)?.remove(0);
    let episodes = policies
        .iter()
        .map(|p| {
            let mut d = p.dispatcher(inst.meta.couriers);
            Ok((p.name().to_string(), run_episode(&inst, d.as_mut(), episode_seed(config.seed, 0))?))
        })
        .collect::<Result<Vec<_>>>()?;
    let files = export_trajectories(&inst, &episodes, out)?;
    for (name, r) in &episodes {
        println!("{name:<8} score {:.4}", r.score);
    }
    eprintln!("wrote {}", files.json.display());
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Gen(a) => gen(&a),
        Command::Bench(a) => bench(&a, &BASELINES, "bench"),
        Command::Train(a) => train_cmd(&a),
        Command::Eval(a) => {
            let Some(path) = &a.checkpoint else {
                bail!("eval needs --checkpoint");
            };
            let default = match Checkpoint::load(path)?.variant {
                Variant::Basic => "marl-b",
                Variant::Ep => "marl-ep",
            };
            bench(&a, &[default], "eval")
        }
        Command::Export(a) => export(&a),
    }
}
