//! Subcommand implementations. Each returns the paths it wrote.

use std::path::{Path, PathBuf};

use evcs_core::mitigate::{run_mitigated, Method, MitigateError, RunLog, Scenario, Strategy};
use evcs_core::plant::PlantParams;
use evcs_core::td3::{curriculum, load_bundle, save_bundle, train_agent, PolicySet, TrainOutcome};
use evcs_core::Channel;

use crate::config::{PlantSpec, ScenarioConfig};
use crate::plot::{emit_compare_plot, emit_plots};
use crate::series::{run_stats, stats_csv, Provenance, TimeSeries};
use crate::{write_atomic, HarnessError, TOOL_VERSION};

pub const TIMESERIES_FILE: &str = "timeseries.csv";
pub const COMPANION_FILE: &str = "timeseries_unmitigated.csv";
pub const STATS_FILE: &str = "stats.csv";
pub const TRACE_FILE: &str = "returns.csv";

/// Window length of the moving average written next to episode returns.
const TRACE_WINDOW: usize = 20;

/// A loaded configuration with its plant parameters solved.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub config: ScenarioConfig,
    pub params: PlantParams,
    pub hash: String,
}

impl Prepared {
    pub fn new(config: ScenarioConfig) -> Result<Self, HarnessError> {
        config.validate()?;
        let params = config.plant.resolve()?;
        let hash = config.hash()?;
        Ok(Self { config, params, hash })
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        Self::new(ScenarioConfig::load(path)?)
    }

    pub fn scenario(&self) -> Scenario {
        self.config.scenario(&self.params)
    }

    fn provenance(&self, strategy: Option<&Strategy>) -> Provenance {
        Provenance::new(&self.hash, self.config.seed, strategy, self.config.attack.as_ref())
    }
}

/// The input config with calibrated plant parameters pinned explicitly.
pub fn calibrate(config: &ScenarioConfig) -> Result<ScenarioConfig, HarnessError> {
    let params = config.plant.resolve()?;
    Ok(ScenarioConfig { plant: PlantSpec::Explicit { params }, ..config.clone() })
}

pub fn write_config(config: &ScenarioConfig, path: &Path) -> Result<(), HarnessError> {
    write_atomic(path, config.to_toml()?.as_bytes())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AgentChoice {
    One(Channel),
    All,
}

impl std::str::FromStr for AgentChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "all" {
            Ok(AgentChoice::All)
        } else {
            s.parse().map(AgentChoice::One)
        }
    }
}

/// Episode returns with a trailing moving average.
fn trace_csv(stages: &[(&str, &[f64])], prov: &str) -> Result<Vec<u8>, HarnessError> {
    let mut out = prov.as_bytes().to_vec();
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| HarnessError::Io(e.to_string());
    w.write_record(["episode", "stage", "return", "moving_avg"]).map_err(csv_err)?;
    for (stage, returns) in stages {
        for (k, r) in returns.iter().enumerate() {
            let lo = (k + 1).saturating_sub(TRACE_WINDOW);
            let avg = returns[lo..=k].iter().sum::<f64>() / (k + 1 - lo) as f64;
            w.write_record([(k + 1).to_string(), stage.to_string(), r.to_string(), avg.to_string()]).map_err(csv_err)?;
        }
    }
    out.extend(w.into_inner().map_err(|e| HarnessError::Io(e.to_string()))?);
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub agent: Channel,
    pub episodes: usize,
    pub divergences: usize,
    pub final_moving_avg: f64,
    pub dir: PathBuf,
}

fn save_trained(p: &Prepared, seed: u64, agent: Channel, stages: &[(&str, &TrainOutcome)]) -> Result<TrainReport, HarnessError> {
    let dir = p.config.bundle_path().join(agent.name());
    let last = stages.last().expect("at least one stage").1;
    save_bundle(&dir, &last.bundle, &p.hash, Some(TRACE_FILE))?;
    let prov = format!("# tool {TOOL_VERSION}\n# config_hash {}\n# seed {seed}\n# agent {agent}\n", p.hash);
    let traces: Vec<(&str, &[f64])> = stages.iter().map(|(s, o)| (*s, o.returns.as_slice())).collect();
    write_atomic(&dir.join(TRACE_FILE), &trace_csv(&traces, &prov)?)?;
    let tail = &last.returns[last.returns.len().saturating_sub(TRACE_WINDOW)..];
    Ok(TrainReport {
        agent,
        episodes: stages.iter().map(|(_, o)| o.returns.len()).sum(),
        divergences: stages.iter().map(|(_, o)| o.divergences).sum(),
        final_moving_avg: tail.iter().sum::<f64>() / tail.len().max(1) as f64,
        dir,
    })
}

/// Train one agent against legacy peers, or the full curriculum.
pub fn train(p: &Prepared, choice: AgentChoice, seed: u64) -> Result<Vec<TrainReport>, HarnessError> {
    let env = p.config.env(&p.params)?;
    let agents = p.config.agent;
    match choice {
        AgentChoice::One(c) => {
            let out = train_agent(c, &env, &PolicySet::default(), &agents.get(c), seed)?;
            Ok(vec![save_trained(p, seed, c, &[("train", &out)])?])
        }
        AgentChoice::All => {
            let out = curriculum(&env, |c| agents.get(c), seed)?;
            Ok(vec![
                save_trained(p, seed, Channel::Pv, &[("train", &out.pv)])?,
                save_trained(p, seed, Channel::Bes, &[("train", &out.bes)])?,
                save_trained(p, seed, Channel::Ev, &[("train", &out.ev_independent), ("fine_tune", &out.ev)])?,
            ])
        }
    }
}

/// Policies for every channel the strategy routes to TD3.
pub fn load_policies(p: &Prepared, strategy: &Strategy) -> Result<PolicySet, HarnessError> {
    let mut set = PolicySet::default();
    for c in Channel::ALL {
        if strategy.get(c) != Method::Td3 {
            continue;
        }
        let dir = p.config.bundle_path().join(c.name());
        let (bundle, _) = load_bundle(&dir, Some(c)).map_err(|e| HarnessError::MissingBundle(format!("{c} agent at {}: {e}", dir.display())))?;
        let policy = Some(bundle.policy());
        match c {
            Channel::Pv => set.pv = policy,
            Channel::Bes => set.bes = policy,
            Channel::Ev => set.ev = policy,
        }
    }
    Ok(set)
}

/// Closed-loop run; a diverged run still writes its partial series before failing.
fn simulate(p: &Prepared, strategy: &Strategy, agents: &PolicySet, csv_path: &Path) -> Result<TimeSeries, HarnessError> {
    let prov = p.provenance(Some(strategy));
    match run_mitigated(&p.scenario(), strategy, agents) {
        Ok(log) => {
            let ts = TimeSeries::from_log(&log, prov);
            ts.write(csv_path)?;
            Ok(ts)
        }
        Err(MitigateError::Diverged { log, source }) => {
            TimeSeries::from_log(&log, prov).write(csv_path)?;
            Err(HarnessError::Divergence(format!("{source} (partial series in {})", csv_path.display())))
        }
        Err(e) => Err(e.into()),
    }
}

/// The unmitigated run that supplies attack-phase rows, if there is an attack.
fn companion(p: &Prepared, dir: &Path) -> Result<Option<TimeSeries>, HarnessError> {
    if p.config.attack.is_none() {
        return Ok(None);
    }
    let legacy = Strategy::uniform(Method::LegacyOnly);
    simulate(p, &legacy, &PolicySet::default(), &dir.join(COMPANION_FILE)).map(Some)
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub series: TimeSeries,
    pub companion: Option<TimeSeries>,
    pub stats: crate::RunStats,
    pub files: Vec<PathBuf>,
}

pub fn run(p: &Prepared) -> Result<RunReport, HarnessError> {
    let dir = p.config.output_path();
    let strategy = p.config.strategy;
    let agents = load_policies(p, &strategy)?;
    let ts_path = dir.join(TIMESERIES_FILE);
    let series = simulate(p, &strategy, &agents, &ts_path)?;
    let mut files = vec![ts_path];
    let comp = companion(p, &dir)?;
    if comp.is_some() {
        files.push(dir.join(COMPANION_FILE));
    }
    let stats = run_stats(&series, comp.as_ref())?;
    let stats_path = dir.join(STATS_FILE);
    write_atomic(&stats_path, &stats_csv(&[(None, &stats)], &series.provenance)?)?;
    files.push(stats_path);
    files.extend(emit_plots(&series, &dir)?);
    Ok(RunReport { series, companion: comp, stats, files })
}

#[derive(Debug, Clone)]
pub struct CompareReport {
    pub runs: Vec<(Method, TimeSeries, crate::RunStats)>,
    pub files: Vec<PathBuf>,
}

pub const COMPARE_STATS_FILE: &str = "compare_stats.csv";
pub const COMPARE_PLOT_FILE: &str = "compare_duties.svg";

/// Every strategy on the configured attack, each in its own subdirectory.
pub fn compare(p: &Prepared, methods: &[Method]) -> Result<CompareReport, HarnessError> {
    if methods.is_empty() {
        return Err(HarnessError::Config("no strategies to compare".into()));
    }
    let root = p.config.output_path().join("compare");
    let comp = companion(p, &root)?;
    let mut files: Vec<PathBuf> = comp.iter().map(|_| root.join(COMPANION_FILE)).collect();
    let mut runs = Vec::new();
    for &m in methods {
        let strategy = Strategy::uniform(m);
        let agents = load_policies(p, &strategy)?;
        let dir = root.join(m.name());
        let series = simulate(p, &strategy, &agents, &dir.join(TIMESERIES_FILE))?;
        let stats = run_stats(&series, comp.as_ref())?;
        write_atomic(&dir.join(STATS_FILE), &stats_csv(&[(None, &stats)], &series.provenance)?)?;
        files.extend([dir.join(TIMESERIES_FILE), dir.join(STATS_FILE)]);
        runs.push((m, series, stats));
    }
    let blocks: Vec<(Option<&str>, &crate::RunStats)> = runs.iter().map(|(m, _, s)| (Some(m.name()), s)).collect();
    let merged = root.join(COMPARE_STATS_FILE);
    write_atomic(&merged, &stats_csv(&blocks, &runs[0].1.provenance)?)?;
    let plot_runs: Vec<(&str, &TimeSeries)> = runs.iter().map(|(m, ts, _)| (m.name(), ts)).collect();
    let plot = root.join(COMPARE_PLOT_FILE);
    emit_compare_plot(&plot_runs, &plot)?;
    files.extend([merged, plot]);
    Ok(CompareReport { runs, files })
}

/// Stats table recomputed from a written series.
pub fn stats_from_files(input: &Path, companion: Option<&Path>) -> Result<Vec<u8>, HarnessError> {
    let series = TimeSeries::read(input)?;
    let comp = companion.map(TimeSeries::read).transpose()?;
    let stats = run_stats(&series, comp.as_ref())?;
    stats_csv(&[(None, &stats)], &series.provenance)
}

/// Log of a closed-loop run without writing anything.
pub fn simulate_in_memory(p: &Prepared, strategy: &Strategy, agents: &PolicySet) -> Result<RunLog, HarnessError> {
    Ok(run_mitigated(&p.scenario(), strategy, agents)?)
}
