//! `zrplab`: config-driven experiment runner.
//!
//! Every experiment reads one JSON config, writes CSV/JSON (and optional
//! SVG) artifacts into the output directory, and emits a manifest with a
//! content hash per file. Outputs are byte-deterministic given the seed.

mod config;
mod plot;

use clap::{Parser, Subcommand};
use config::{ConfigError, ExperimentConfig, ExperimentKind};
use serde_json::json;
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use zrp_core::coupling::coalescence_time;
use zrp_core::exclusion::conjugation_residual;
use zrp_core::experiments::{
    front_trajectory_experiment, hydro_profile_experiment, poisson_max_experiment,
};
use zrp_core::flux::FluxModelConfig;
use zrp_core::hj::{dirac_profile, equilibrium_time, front_curve_csv};
use zrp_core::mixing::{mixing_time_from_curve, tv_curve, TvMode};
use zrp_core::sim::replica_seed;
use zrp_core::{make_config, simulate, FluxModel, InitKind, ProcessSpec, RateFunction};

#[derive(Parser)]
#[command(name = "zrplab", about = "Zero-range process laboratory", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment config (JSON). Required by every subcommand except
    /// `plot`.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (default ./out, or $ZRPLAB_OUT).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for replica parallelism (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Tabulate the flux model and dump it to CSV.
    Flux,
    /// Macroscopic profiles, fronts and the equilibrium time.
    Macro,
    /// Plain trajectory samples.
    Simulate,
    /// Extremal coupling and coalescence statistics.
    Couple,
    /// Exact generator-conjugation check against the exclusion process.
    ExclusionCheck,
    /// Total-variation curves and mixing times.
    Mix,
    /// Hydrodynamic profile comparison.
    Hydro,
    /// Front-trajectory comparison.
    Fronts,
    /// Poisson-maximum concentration experiment.
    Poisson,
    /// Render an emitted CSV to SVG.
    Plot {
        /// CSV file to plot.
        #[arg(long)]
        input: PathBuf,
        /// curve | profile
        #[arg(long)]
        kind: String,
    },
}

#[derive(Debug, thiserror::Error)]
enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Module(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Plot(#[from] plot::PlotError),
}

fn module_err<E: std::fmt::Display>(context: &str) -> impl Fn(E) -> RunError + '_ {
    move |e| RunError::Module(format!("{context}: {e}"))
}

struct Emitter {
    dir: PathBuf,
    written: Vec<(String, String, u64)>,
    formats: Vec<String>,
}

impl Emitter {
    fn new(dir: &Path, formats: &[String]) -> std::io::Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), written: vec![], formats: formats.to_vec() })
    }

    fn want(&self, fmt: &str) -> bool {
        self.formats.iter().any(|f| f == fmt)
    }

    fn write(&mut self, name: &str, content: &str) -> std::io::Result<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, content)?;
        let mut hasher = Sha256::new();
        hasher.update(content.as_bytes());
        self.written.push((
            name.to_string(),
            hasher.finalize().iter().map(|b| format!("{b:02x}")).collect(),
            content.len() as u64,
        ));
        Ok(())
    }

    fn write_csv_with_plot(
        &mut self,
        name: &str,
        content: &str,
        kind: plot::PlotKind,
    ) -> Result<(), RunError> {
        if self.want("csv") {
            self.write(name, content)?;
        }
        if self.want("svg") {
            let svg = plot::plot_csv(content, kind)?;
            self.write(&name.replace(".csv", ".svg"), &svg)?;
        }
        Ok(())
    }

    fn finish(mut self, config_json: serde_json::Value) -> Result<(), RunError> {
        let manifest = json!({
            "config": config_json,
            "outputs": self.written.iter().map(|(name, sha, bytes)| json!({
                "path": name, "sha256": sha, "bytes": bytes
            })).collect::<Vec<_>>(),
        });
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        self.write("manifest.json", &text)?;
        for (name, _, _) in &self.written {
            println!("wrote {}", self.dir.join(name).display());
        }
        Ok(())
    }
}

fn main() {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global().ok();
    }
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<(), RunError> {
    let out_dir = cli
        .out
        .clone()
        .or_else(|| std::env::var_os("ZRPLAB_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    if let Command::Plot { input, kind } = &cli.command {
        let kind = match kind.as_str() {
            "curve" => plot::PlotKind::Curve,
            "profile" => plot::PlotKind::Profile,
            other => return Err(RunError::Module(format!("unknown plot kind {other}"))),
        };
        let csv = std::fs::read_to_string(input)?;
        let svg = plot::plot_csv(&csv, kind)?;
        std::fs::create_dir_all(&out_dir)?;
        let name = input
            .file_stem()
            .map(|s| format!("{}.svg", s.to_string_lossy()))
            .unwrap_or_else(|| "plot.svg".into());
        let path = out_dir.join(&name);
        std::fs::write(&path, &svg)?;
        println!("wrote {}", path.display());
        return Ok(());
    }

    let config_path =
        cli.config.as_ref().ok_or_else(|| RunError::Module("--config is required".into()))?;
    let mut cfg = ExperimentConfig::load(config_path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let expected = match cli.command {
        Command::Flux => ExperimentKind::Flux,
        Command::Macro => ExperimentKind::Macro,
        Command::Simulate => ExperimentKind::Simulate,
        Command::Couple => ExperimentKind::Couple,
        Command::ExclusionCheck => ExperimentKind::ExclusionCheck,
        Command::Mix => ExperimentKind::Mix,
        Command::Hydro => ExperimentKind::Hydro,
        Command::Fronts => ExperimentKind::Fronts,
        Command::Poisson => ExperimentKind::Poisson,
        Command::Plot { .. } => unreachable!(),
    };
    if cfg.kind != expected {
        return Err(RunError::Module(format!(
            "config kind {:?} does not match the subcommand",
            cfg.kind
        )));
    }
    let cfg_json = serde_json::to_value(&cfg).expect("config serializes");
    let mut emit = Emitter::new(&out_dir, &cfg.formats)?;
    let rate = RateFunction::new(cfg.rate.clone()).map_err(module_err("rate"))?;

    match cfg.kind {
        ExperimentKind::Flux => {
            let model = build_model(&cfg, &rate)?;
            emit.write_csv_with_plot("flux_model.csv", &model.to_csv(), plot::PlotKind::Curve)?;
            if emit.want("json") {
                let summary = json!({
                    "config": cfg_json,
                    "fugacity_radius": model.fugacity_radius,
                    "convexity": model.convexity,
                    "grid_points": model.density_grid.len(),
                });
                emit.write("flux.json", &serde_json::to_string_pretty(&summary).unwrap())?;
            }
        }
        ExperimentKind::Macro => {
            let model = build_model(&cfg, &rate)?;
            let alpha = cfg.alpha.or(cfg.k.map(|k| k as f64)).unwrap_or(1.0);
            let positions: Vec<f64> = if cfg.positions.is_empty() {
                (1..=100).map(|i| i as f64 / 100.0).collect()
            } else {
                cfg.positions.clone()
            };
            let speed = 2.0 * cfg.p - 1.0;
            let mut csv = String::from("t,x,U\n");
            for &t in &cfg.times {
                for &x in &positions {
                    let u = dirac_profile(&model, alpha, cfg.p, t / speed, x)
                        .map_err(module_err("profile"))?;
                    csv.push_str(&format!("{t},{x},{u}\n"));
                }
            }
            emit.write_csv_with_plot("profile.csv", &csv, plot::PlotKind::Profile)?;
            let t_eq = equilibrium_time(&model, alpha, cfg.p).map_err(module_err("t_eq"))?;
            let mix_times: Vec<f64> = cfg.times.iter().map(|t| t / speed).collect();
            if let Ok(fronts) = front_curve_csv(&model, alpha, cfg.p, &mix_times) {
                emit.write_csv_with_plot("fronts_macro.csv", &fronts, plot::PlotKind::Curve)?;
            }
            if emit.want("json") {
                let summary = json!({ "config": cfg_json, "equilibrium_time": t_eq });
                emit.write("macro.json", &serde_json::to_string_pretty(&summary).unwrap())?;
            }
        }
        ExperimentKind::Simulate => {
            let n = cfg.sizes()[0];
            let spec = segment_spec(&cfg, n, &rate)?;
            let init = make_config(InitKind::Wedge, &spec, None).map_err(module_err("init"))?;
            let micro = micro_times(&cfg, n);
            let horizon = micro.last().copied().unwrap_or(0.0);
            let traj = simulate(&spec, &init, horizon, &micro, cfg.seed)
                .map_err(module_err("simulate"))?;
            emit.write_csv_with_plot(
                "trajectory.csv",
                &traj.to_csv(&spec.geometry),
                plot::PlotKind::Profile,
            )?;
            if emit.want("json") {
                let summary = json!({
                    "config": cfg_json,
                    "event_count": traj.event_count,
                    "final": traj.snapshots.last().map(|c| c.occupancy.clone()),
                });
                emit.write("simulate.json", &serde_json::to_string_pretty(&summary).unwrap())?;
            }
        }
        ExperimentKind::Couple => {
            let n = cfg.sizes()[0];
            let spec = segment_spec(&cfg, n, &rate)?;
            let micro = micro_times(&cfg, n);
            let horizon = micro.last().copied().unwrap_or(0.0) * 1.5 + 1.0;
            let mut times_csv = String::from("replica,coalescence_time\n");
            let mut coal: Vec<Option<f64>> = Vec::with_capacity(cfg.replicas as usize);
            for r in 0..cfg.replicas {
                let s = replica_seed(cfg.seed, r);
                let t = coalescence_time(&spec, horizon, s).map_err(module_err("couple"))?;
                times_csv.push_str(&format!(
                    "{},{}\n",
                    r,
                    t.map_or("timeout".into(), |v| v.to_string())
                ));
                coal.push(t);
            }
            if emit.want("csv") {
                emit.write("coalescence.csv", &times_csv)?;
            }
            let mut curve = String::from("t,value,ci_low,ci_high,mode\n");
            for &t in &micro {
                let frac = coal.iter().filter(|c| c.map_or(true, |v| v > t)).count() as f64
                    / cfg.replicas as f64;
                let v = (2.0 * frac).min(1.0);
                curve.push_str(&format!("{t},{v},{v},{v},mc_upper\n"));
            }
            emit.write_csv_with_plot("tv_upper.csv", &curve, plot::PlotKind::Curve)?;
            if emit.want("json") {
                let finite: Vec<f64> = coal.iter().flatten().copied().collect();
                let mean = finite.iter().sum::<f64>() / finite.len().max(1) as f64;
                let summary = json!({
                    "config": cfg_json,
                    "coalesced": finite.len(),
                    "replicas": cfg.replicas,
                    "mean_coalescence_time": mean,
                });
                emit.write("couple.json", &serde_json::to_string_pretty(&summary).unwrap())?;
            }
        }
        ExperimentKind::ExclusionCheck => {
            let n = cfg.sizes()[0];
            let k = cfg.particles_for(n);
            let rep = conjugation_residual(n, k, cfg.p, zrp_core::mixing::STATE_CAP)
                .map_err(module_err("exclusion"))?;
            println!("{rep}");
            if emit.want("json") {
                let summary = json!({
                    "config": cfg_json,
                    "n": rep.n, "k": rep.k, "p": rep.p,
                    "residual": rep.residual, "states": rep.states,
                });
                emit.write("exclusion.json", &serde_json::to_string_pretty(&summary).unwrap())?;
            }
        }
        ExperimentKind::Mix => {
            let mode = match cfg.tv_mode.as_deref().unwrap_or("exact") {
                "exact" => TvMode::Exact,
                "mc-upper" => TvMode::McUpper,
                "mc-lower" => TvMode::McLower { epsilon: cfg.epsilon },
                "mc-identity" => TvMode::McIdentity,
                other => return Err(RunError::Module(format!("unknown tv mode {other}"))),
            };
            let mut all = serde_json::Map::new();
            for n in cfg.sizes() {
                let spec = segment_spec(&cfg, n, &rate)?;
                let micro = micro_times(&cfg, n);
                let curve = tv_curve(&spec, &micro, mode, cfg.replicas, cfg.seed)
                    .map_err(module_err("mix"))?;
                let name = format!("tv_curve_n{n}.csv");
                emit.write_csv_with_plot(&name, &curve.to_csv(), plot::PlotKind::Curve)?;
                let mut mixing = serde_json::Map::new();
                for &theta in &cfg.thetas {
                    if let Ok(t) = mixing_time_from_curve(&curve, theta) {
                        mixing.insert(
                            format!("{theta}"),
                            json!({ "microscopic": t, "per_site": t / n as f64 }),
                        );
                    }
                }
                all.insert(format!("n{n}"), json!({ "mixing_times": mixing }));
            }
            if emit.want("json") {
                let summary = json!({ "config": cfg_json, "results": all });
                emit.write("mix.json", &serde_json::to_string_pretty(&summary).unwrap())?;
            }
        }
        ExperimentKind::Hydro => {
            let n = cfg.sizes()[0];
            let spec = segment_spec(&cfg, n, &rate)?;
            let positions: Vec<f64> = if cfg.positions.is_empty() {
                (1..=9).map(|i| i as f64 / 10.0).collect()
            } else {
                cfg.positions.clone()
            };
            let profile =
                hydro_profile_experiment(&spec, &cfg.times, &positions, cfg.replicas, cfg.seed)
                    .map_err(module_err("hydro"))?;
            emit.write_csv_with_plot("hydro.csv", &profile.to_csv(), plot::PlotKind::Profile)?;
            if emit.want("json") {
                let summary = json!({
                    "config": cfg_json,
                    "max_abs_error": profile.max_abs_error(),
                });
                emit.write("hydro.json", &serde_json::to_string_pretty(&summary).unwrap())?;
            }
        }
        ExperimentKind::Fronts => {
            let n = cfg.sizes()[0];
            let spec = segment_spec(&cfg, n, &rate)?;
            let speed = 2.0 * cfg.p - 1.0;
            let mix_times: Vec<f64> = cfg.times.iter().map(|t| t / speed).collect();
            let series = front_trajectory_experiment(&spec, &mix_times, cfg.replicas, cfg.seed)
                .map_err(module_err("fronts"))?;
            emit.write_csv_with_plot("fronts.csv", &series.to_csv(), plot::PlotKind::Curve)?;
            let model = build_model(&cfg, &rate)?;
            let macro_csv = front_curve_csv(&model, cfg.density_for(n), cfg.p, &mix_times)
                .map_err(module_err("fronts"))?;
            if emit.want("csv") {
                emit.write("fronts_macro.csv", &macro_csv)?;
            }
            if emit.want("json") {
                let summary = json!({ "config": cfg_json, "replicas": cfg.replicas });
                emit.write("fronts.json", &serde_json::to_string_pretty(&summary).unwrap())?;
            }
        }
        ExperimentKind::Poisson => {
            let alpha = cfg.alpha.unwrap_or(1.0);
            let mut csv = String::from("N,frequency,bound,replicas\n");
            let mut rows = vec![];
            for n in cfg.sizes() {
                let r = poisson_max_experiment(alpha, cfg.c, n, cfg.replicas, cfg.seed);
                csv.push_str(&format!(
                    "{},{},{},{}\n",
                    r.n, r.frequency, r.analytic_bound, r.replicas
                ));
                rows.push(json!({"n": r.n, "frequency": r.frequency, "bound": r.analytic_bound}));
            }
            if emit.want("csv") {
                emit.write("poisson.csv", &csv)?;
            }
            if emit.want("json") {
                let summary = json!({ "config": cfg_json, "results": rows });
                emit.write("poisson.json", &serde_json::to_string_pretty(&summary).unwrap())?;
            }
        }
    }
    emit.finish(cfg_json)
}

fn build_model(cfg: &ExperimentConfig, rate: &RateFunction) -> Result<FluxModel, RunError> {
    let mut mc = FluxModelConfig::default();
    if let Some(a) = cfg.alpha_max {
        mc.alpha_max = a;
    }
    if let Some(gp) = cfg.grid_points {
        mc.grid_points = gp;
    }
    FluxModel::build(rate, mc).map_err(module_err("flux model"))
}

fn segment_spec(
    cfg: &ExperimentConfig,
    n: usize,
    rate: &RateFunction,
) -> Result<ProcessSpec, RunError> {
    ProcessSpec::segment(n, cfg.particles_for(n), cfg.p, rate.clone()).map_err(module_err("spec"))
}

/// Macroscopic config times -> microscopic chain clock, t N / (p - q).
fn micro_times(cfg: &ExperimentConfig, n: usize) -> Vec<f64> {
    let speed = 2.0 * cfg.p - 1.0;
    cfg.times.iter().map(|t| t * n as f64 / speed).collect()
}
