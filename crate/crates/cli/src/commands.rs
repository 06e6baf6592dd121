use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use ssctm_core::design::{
    compare_strategies, design_full, design_localized, design_localized_sections,
    design_localized_throughput,
    design_partial, drift_surface, DesignResult, GridSpec,
};
use ssctm_core::export;
use ssctm_core::sim::{density_map, simulate, SimConfig, Strategy, RNG_ALGORITHM};
use ssctm_core::stability::{mean_drift, DesignScheme};

use crate::config::{parse_range_flag, ConfigFile, GridSection, Scenario};
use crate::manifest::{Manifest, OutputFile};
use crate::CliError;

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct Common {
    /// Scenario file (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Directory for CSV outputs and the manifest.
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
    /// Overrides `sim.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct GridFlags {
    /// `lo:hi:step` for every ramp, or one comma-separated range per ramp.
    #[arg(long)]
    pub grid_u: Option<String>,
    #[arg(long)]
    pub grid_kappa: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeArg {
    Local,
    Full,
    Partial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DesignMode {
    Local,
    LocalThroughput,
    Full,
    Partial,
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Simulate one run and write its trajectory and metrics.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// `none`, `policy`, `alinea`, `metaline` or a name under `[policies]`.
        #[arg(long)]
        strategy: Option<String>,
        #[arg(long)]
        horizon_steps: Option<usize>,
    },
    /// Mean drift of the configured policy, optionally over a grid.
    Drift {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "local")]
        scheme: SchemeArg,
        /// Name under `[policies]`; the `[policy]` section by default.
        #[arg(long)]
        policy: Option<String>,
        #[command(flatten)]
        grid: GridFlags,
    },
    /// Grid-search a metering policy.
    Design {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, alias = "scheme", default_value = "local")]
        mode: DesignMode,
        #[command(flatten)]
        grid: GridFlags,
    },
    /// Paired comparison of strategies over replications.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Comma-separated strategy names; every configured one by default.
        #[arg(long)]
        strategies: Option<String>,
        #[arg(long, default_value_t = 10)]
        replications: usize,
        #[arg(long)]
        horizon_steps: Option<usize>,
    },
    /// Simulate one run and write binned mean densities.
    ExportDensityMap {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        strategy: Option<String>,
        #[arg(long, default_value_t = 5.0)]
        bin_minutes: f64,
        #[arg(long)]
        horizon_steps: Option<usize>,
    },
    /// Rerun a command from its manifest into a new directory.
    Replay {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

impl Command {
    fn common(&self) -> Option<&Common> {
        match self {
            Command::Simulate { common, .. }
            | Command::Drift { common, .. }
            | Command::Design { common, .. }
            | Command::Compare { common, .. }
            | Command::ExportDensityMap { common, .. } => Some(common),
            Command::Replay { .. } => None,
        }
    }

    pub fn threads(&self) -> Option<usize> {
        self.common().and_then(|c| c.threads)
    }
}

/// Result of a command that ran to completion.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub out_dir: PathBuf,
    pub files: Vec<String>,
    pub exit_code: i32,
    pub message: Option<String>,
}

fn apply_overrides(file: &mut ConfigFile, cmd: &Command) -> Result<(), CliError> {
    let Some(common) = cmd.common() else {
        return Ok(());
    };
    let horizon = match cmd {
        Command::Simulate { horizon_steps, .. }
        | Command::Compare { horizon_steps, .. }
        | Command::ExportDensityMap { horizon_steps, .. } => *horizon_steps,
        _ => None,
    };
    if common.seed.is_some() || horizon.is_some() {
        let sim = file.sim.as_mut().ok_or_else(|| CliError::Validation {
            field: "sim".into(),
            reason: "--seed and --horizon-steps need a [sim] section".into(),
        })?;
        if let Some(s) = common.seed {
            sim.seed = s;
        }
        if let Some(h) = horizon {
            sim.horizon_steps = h;
        }
    }
    if let Command::Design { grid, .. } | Command::Drift { grid, .. } = cmd {
        if grid.grid_u.is_some() || grid.grid_kappa.is_some() {
            let default = GridSpec::standard(1);
            let parse = |flag: &Option<String>, fallback: Option<&Vec<[f64; 3]>>, d: [f64; 3]| {
                match flag {
                    Some(s) => s.split(',').map(parse_range_flag).collect::<Result<Vec<_>, _>>(),
                    None => Ok(fallback.cloned().unwrap_or_else(|| vec![d])),
                }
            };
            let old = file.grid.clone();
            let r = |x: &ssctm_core::design::Range| [x.lo, x.hi, x.step];
            let u = parse(&grid.grid_u, old.as_ref().map(|g| &g.u), r(&default.u[0]))?;
            let kappa = parse(&grid.grid_kappa, old.as_ref().map(|g| &g.kappa), r(&default.kappa[0]))?;
            file.grid = Some(GridSection {
                u,
                kappa,
                cap: old.and_then(|g| g.cap),
            });
        }
    }
    Ok(())
}

fn require_sim(sc: &Scenario) -> Result<&SimConfig, CliError> {
    sc.sim.as_ref().ok_or_else(|| CliError::Validation {
        field: "sim".into(),
        reason: "this command needs a [sim] section".into(),
    })
}

/// Looks up a strategy by name.
pub fn strategy_by_name(sc: &Scenario, name: &str) -> Result<Strategy, CliError> {
    let missing = |what: &str| CliError::Validation {
        field: "strategy".into(),
        reason: format!("`{name}` needs {what}"),
    };
    match name {
        "none" => Ok(Strategy::NoControl),
        "policy" => sc
            .policy
            .clone()
            .map(Strategy::affine)
            .ok_or_else(|| missing("a [policy] section")),
        "alinea" => sc
            .alinea
            .clone()
            .map(|spec| Strategy::Baseline { spec })
            .ok_or_else(|| missing("a [baseline.alinea] section")),
        "metaline" => sc
            .metaline
            .clone()
            .map(|spec| Strategy::Baseline { spec })
            .ok_or_else(|| missing("a [baseline.metaline] section")),
        other => sc
            .policies
            .get(other)
            .cloned()
            .map(Strategy::affine)
            .ok_or_else(|| missing(&format!("a [policies.{other}] section"))),
    }
}

fn default_strategy(sc: &Scenario) -> &'static str {
    if sc.policy.is_some() {
        "policy"
    } else {
        "none"
    }
}

/// Every strategy the scenario defines, in a fixed order.
pub fn all_strategies(sc: &Scenario) -> Vec<String> {
    let mut names = vec!["none".to_string()];
    if sc.policy.is_some() {
        names.push("policy".into());
    }
    names.extend(sc.policies.keys().cloned());
    if sc.alinea.is_some() {
        names.push("alinea".into());
    }
    if sc.metaline.is_some() {
        names.push("metaline".into());
    }
    names
}

struct Out<'a> {
    dir: &'a Path,
    files: Vec<String>,
}

impl Out<'_> {
    fn create(&mut self, name: &str) -> Result<BufWriter<File>, CliError> {
        self.files.push(name.to_string());
        Ok(BufWriter::new(File::create(self.dir.join(name))?))
    }
}

fn grid_of(sc: &Scenario) -> GridSpec {
    sc.grid
        .clone()
        .unwrap_or_else(|| GridSpec::standard(sc.cfg.cell_count() - 1))
}

fn scheme_of(sc: &Scenario, s: SchemeArg) -> DesignScheme {
    match s {
        SchemeArg::Local => DesignScheme::Localized,
        SchemeArg::Full => DesignScheme::FullyCoordinated,
        SchemeArg::Partial => DesignScheme::PartiallyCoordinated(sc.pc_weight),
    }
}

fn design_files(out: &mut Out, r: &DesignResult) -> Result<(), CliError> {
    export::write_design(r, out.create("design.csv")?)?;
    if !r.log.is_empty() {
        export::write_candidates(&r.log, 2, out.create("candidates.csv")?)?;
        if r.log[0].u.len() == 1 {
            export::write_drift_surface(&r.log, out.create("drift_surface.csv")?)?;
        }
    }
    for s in &r.stages {
        if !s.log.is_empty() {
            export::write_candidates(&s.log, s.ramp, out.create(&format!("candidates_ramp{}.csv", s.ramp))?)?;
        }
    }
    Ok(())
}

/// Runs the command body; returns the exit code and an optional message.
fn run_body(sc: &Scenario, cmd: &Command, out: &mut Out) -> Result<(i32, Option<String>), CliError> {
    match cmd {
        Command::Simulate { strategy, .. } => {
            let sim = require_sim(sc)?;
            let name = strategy.as_deref().unwrap_or(default_strategy(sc));
            let traj = simulate(&strategy_by_name(sc, name)?, &sc.cfg, &sc.markov, sim)?;
            export::write_trajectory(&traj, sc.cfg.cell_count(), out.create("trajectory.csv")?)?;
            let m = ssctm_core::sim::metrics_of(&traj, &sc.cfg, sim);
            export::write_metrics(&m, sc.start_hour, out.create("metrics.csv")?)?;
            Ok((0, Some(format!("time-averaged queue {} veh", m.time_avg_queue_veh))))
        }
        Command::Drift { scheme, policy, grid, .. } => {
            let scheme = scheme_of(sc, *scheme);
            let p = match policy {
                Some(n) => sc.policies.get(n).cloned().ok_or_else(|| CliError::Validation {
                    field: "policy".into(),
                    reason: format!("no [policies.{n}] section"),
                })?,
                None => sc.policy.clone().ok_or_else(|| CliError::Validation {
                    field: "policy".into(),
                    reason: "drift needs a [policy] section or --policy".into(),
                })?,
            };
            let report = mean_drift(scheme, &p, &sc.cfg, &sc.markov, &sc.design.inner)?;
            export::write_drift_report(&report, sc.markov.steady_state(), out.create("drift.csv")?)?;
            if grid.grid_u.is_some() || grid.grid_kappa.is_some() {
                let log = drift_surface(scheme, &sc.cfg, &sc.markov, &grid_of(sc), &sc.design)?;
                export::write_candidates(&log, 2, out.create("candidates.csv")?)?;
                if log.first().is_some_and(|c| c.u.len() == 1) {
                    export::write_drift_surface(&log, out.create("drift_surface.csv")?)?;
                }
            }
            Ok((0, Some(format!("mean drift {} ({:?})", report.mean_drift, report.verdict))))
        }
        Command::Design { mode, .. } => {
            let grid = grid_of(sc);
            let result = match mode {
                DesignMode::Local if sc.cfg.cell_count() > 2 => {
                    design_localized_sections(&sc.cfg, &sc.markov, &grid, &sc.design)
                }
                DesignMode::Local => design_localized(&sc.cfg, &sc.markov, &grid, &sc.design),
                DesignMode::LocalThroughput => design_localized_throughput(
                    &sc.cfg,
                    &sc.markov,
                    &grid,
                    sc.throughput_tolerance,
                    &sc.design,
                ),
                DesignMode::Full => design_full(&sc.cfg, &sc.markov, &grid, &sc.design),
                DesignMode::Partial => design_partial(&sc.cfg, &sc.markov, &grid, sc.pc_weight, &sc.design),
            }?;
            design_files(out, &result)?;
            let policy = result
                .policy
                .as_ref()
                .map(|p| format!("u = {:?}, kappa = {:?}", p.u(), p.kappa()))
                .unwrap_or_else(|| "no policy".into());
            let msg = format!("{policy}, objective {}, feasible {}", result.objective, result.feasible);
            Ok((if result.feasible { 0 } else { 3 }, Some(msg)))
        }
        Command::Compare { strategies, replications, .. } => {
            let sim = require_sim(sc)?;
            let names: Vec<String> = match strategies {
                Some(s) => s.split(',').map(|x| x.trim().to_string()).collect(),
                None => all_strategies(sc),
            };
            let list = names
                .iter()
                .map(|n| Ok((n.clone(), strategy_by_name(sc, n)?)))
                .collect::<Result<Vec<_>, CliError>>()?;
            let cmp = compare_strategies(&sc.cfg, &sc.markov, sim, &list, *replications)?;
            export::write_comparison(&cmp, sc.start_hour, out.create("comparison.csv")?)?;
            Ok((0, None))
        }
        Command::ExportDensityMap { strategy, bin_minutes, .. } => {
            let sim = require_sim(sc)?;
            let name = strategy.as_deref().unwrap_or(default_strategy(sc));
            let traj = simulate(&strategy_by_name(sc, name)?, &sc.cfg, &sc.markov, sim)?;
            let map = density_map(&traj, sim.dt_hr, *bin_minutes)?;
            export::write_density_map(&map, *bin_minutes, out.create("density_map.csv")?)?;
            Ok((0, None))
        }
        Command::Replay { .. } => unreachable!("replay is dispatched separately"),
    }
}

fn run_with_file(mut file: ConfigFile, cmd: &Command, out_dir: &Path) -> Result<Outcome, CliError> {
    let start = Instant::now();
    apply_overrides(&mut file, cmd)?;
    let sc = Scenario::from_file(file)?;
    std::fs::create_dir_all(out_dir)?;
    let mut out = Out {
        dir: out_dir,
        files: Vec::new(),
    };
    let mut body = || run_body(&sc, cmd, &mut out);
    let result = match cmd.threads() {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| CliError::Io(e.to_string()))?
            .install(body),
        None => body(),
    };
    let (exit_code, message) = match result {
        Ok(r) => r,
        Err(e @ CliError::Infeasible(_)) => (e.exit_code(), Some(e.to_string())),
        Err(e) => return Err(e),
    };
    let outputs = out
        .files
        .iter()
        .map(|name| {
            let bytes = std::fs::metadata(out_dir.join(name)).map(|m| m.len()).unwrap_or(0);
            OutputFile {
                name: name.clone(),
                bytes,
            }
        })
        .collect();
    let replications = match cmd {
        Command::Compare { replications, .. } => Some(*replications),
        _ => None,
    };
    Manifest {
        tool: "ssctm".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: cmd.clone(),
        config: sc.file.clone(),
        seed: sc.sim.as_ref().map(|s| s.seed),
        replications,
        rng: RNG_ALGORITHM.into(),
        threads: cmd.threads(),
        runtime_s: start.elapsed().as_secs_f64(),
        exit_code,
        message: message.clone(),
        outputs,
    }
    .write(out_dir)?;
    Ok(Outcome {
        out_dir: out_dir.to_path_buf(),
        files: out.files,
        exit_code,
        message,
    })
}

/// Runs a command. An infeasible design still writes its files and returns
/// exit code 3 in the outcome.
pub fn execute(cmd: &Command) -> Result<Outcome, CliError> {
    match cmd {
        Command::Replay { manifest, out_dir } => replay(manifest, out_dir),
        _ => {
            let common = cmd.common().expect("non-replay command");
            let text = std::fs::read_to_string(&common.config)
                .map_err(|e| CliError::Io(format!("{}: {e}", common.config.display())))?;
            let file = crate::config::parse_config(&text).map_err(|e| match e {
                CliError::Parse(m) => CliError::Parse(format!("{}: {m}", common.config.display())),
                other => other,
            })?;
            run_with_file(file, cmd, &common.out_dir)
        }
    }
}

/// Reruns the command recorded in a manifest with its resolved scenario.
pub fn replay(manifest: &Path, out_dir: &Path) -> Result<Outcome, CliError> {
    let m = Manifest::read(manifest)?;
    run_with_file(m.config, &m.command, out_dir)
}
