//! `sitt`: train, evaluate, render and report.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use sitt_core::config::RunConfig;
use sitt_core::eval::{evaluate, EvalResult, EvalSet};
use sitt_core::metrics::{read_summary, RunSummary};
use sitt_core::policy::{Actor, PolicyBundle};
use sitt_core::render::{occupancy_text, ppm, trajectory_text, Occupancy};
use sitt_core::run::{self, LoadedRun};

#[derive(Parser)]
#[command(
    name = "sitt",
    version,
    about = "Student-informed teacher training on the Color Maze"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// TOML config file.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Preset the config file is layered on (desk, paper, pointgap).
    #[arg(long, default_value = "desk")]
    preset: String,
    /// Override one key, e.g. `--set ppo.lr=1e-3` (repeatable).
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    sets: Vec<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Who {
    Teacher,
    Student,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
enum LayoutSet {
    Heldout,
    Training,
}

#[derive(Subcommand)]
enum Command {
    /// Run joint training or a baseline and write metrics, checkpoint and summary.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Output directory (overrides `run.out_dir`).
        #[arg(short, long)]
        out: Option<PathBuf>,
        /// Continue the run in the output directory from its checkpoint.
        #[arg(long)]
        resume: bool,
    },
    /// Success rates of deterministic policies from a run directory.
    Evaluate {
        /// Run directory written by `train`.
        run: PathBuf,
        #[arg(long, value_enum, default_value = "both")]
        actor: Who,
        #[arg(long, value_enum, default_value = "heldout")]
        layouts: LayoutSet,
        /// Print one line per episode.
        #[arg(long)]
        per_layout: bool,
    },
    /// Occupancy grid and single-trajectory renders (text and PPM).
    Render {
        run: PathBuf,
        #[arg(long, value_enum, default_value = "student")]
        actor: Who,
        #[arg(long, value_enum, default_value = "heldout")]
        layouts: LayoutSet,
        /// Layout whose trajectory is drawn.
        #[arg(long, default_value_t = 0)]
        index: usize,
        /// Pixels per cell in the PPM images.
        #[arg(long, default_value_t = 16)]
        scale: usize,
        /// Output directory (default: `<run>/render`).
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Success-rate table (mean ± std across runs) from run directories.
    Report {
        /// Run directories, or parents searched one level deep for `summary.json`.
        #[arg(required = true)]
        runs: Vec<PathBuf>,
    },
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("SITT_LOG", "info")).init();
    if let Err(e) = dispatch(Cli::parse().command) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Train { cfg, out, resume } => train(cfg, out, resume),
        Command::Evaluate {
            run,
            actor,
            layouts,
            per_layout,
        } => evaluate_cmd(&run, actor, layouts, per_layout),
        Command::Render {
            run,
            actor,
            layouts,
            index,
            scale,
            out,
        } => render_cmd(&run, actor, layouts, index, scale, out),
        Command::Report { runs } => report_cmd(&runs),
    }
}

fn train(args: ConfigArgs, out: Option<PathBuf>, resume: bool) -> Result<()> {
    if resume {
        let Some(dir) = out else {
            bail!("--resume needs the run directory via --out");
        };
        let s = run::resume_run(&dir).with_context(|| format!("resuming {}", dir.display()))?;
        return print_summary(&dir, &s);
    }
    let mut cfg = RunConfig::resolve(&args.preset, args.config.as_deref(), std::env::vars(), &args.sets)?;
    if let Some(o) = out {
        cfg.run.out_dir = o;
    }
    let s = run::train_run(&cfg)?;
    print_summary(&cfg.run.out_dir, &s)
}

fn print_summary(dir: &Path, s: &RunSummary) -> Result<()> {
    println!(
        "{} seed {}: teacher success {:.3}, student success {:.3}, {} env steps -> {}",
        s.mode,
        s.seed,
        s.teacher_success,
        s.student_success,
        s.env_steps,
        dir.display()
    );
    Ok(())
}

fn eval_set(run: &LoadedRun, which: LayoutSet) -> Result<EvalSet> {
    Ok(match which {
        LayoutSet::Heldout => run::build_eval(&run.config)?,
        LayoutSet::Training => run::training_eval(&run.config)?,
    })
}

fn actors(run: &LoadedRun, who: Who) -> Vec<(&'static str, &PolicyBundle, Actor)> {
    let mut v = Vec::new();
    if matches!(who, Who::Teacher | Who::Both) {
        v.push(("teacher", &run.teacher, Actor::Teacher));
    }
    if matches!(who, Who::Student | Who::Both) {
        v.push(("student", &run.student, Actor::Student));
    }
    v
}

fn evaluate_cmd(dir: &Path, who: Who, which: LayoutSet, per_layout: bool) -> Result<()> {
    let run = run::load_run(dir)?;
    let set = eval_set(&run, which)?;
    let mut results = serde_json::Map::new();
    for (name, bundle, actor) in actors(&run, who) {
        let r = evaluate(bundle, actor, &set, run.config.ppo.gamma)?;
        println!(
            "{name}: success {:.3} ± {:.3} over {} episodes, mean return {:.3}",
            r.success_rate,
            r.success_std,
            r.episodes.len(),
            r.mean_return
        );
        if per_layout {
            for (i, e) in r.episodes.iter().enumerate() {
                println!(
                    "  {i:3} {:?} return {:.2} length {}",
                    e.outcome, e.task_return, e.length
                );
            }
        }
        results.insert(name.to_string(), serde_json::to_value(&r)?);
    }
    std::fs::write(dir.join("eval.json"), serde_json::to_string_pretty(&results)?)?;
    Ok(())
}

fn render_cmd(dir: &Path, who: Who, which: LayoutSet, index: usize, scale: usize, out: Option<PathBuf>) -> Result<()> {
    let run = run::load_run(dir)?;
    let set = eval_set(&run, which)?;
    let EvalSet::Maze { layouts, .. } = &set else {
        bail!("render supports maze runs only");
    };
    if index >= layouts.len() {
        bail!("layout index {index} out of range (0..{})", layouts.len());
    }
    let out = out.unwrap_or_else(|| dir.join("render"));
    std::fs::create_dir_all(&out)?;
    for (name, bundle, actor) in actors(&run, who) {
        let r: EvalResult = evaluate(bundle, actor, &set, run.config.ppo.gamma)?;
        let mut occ = Occupancy::new(layouts[0].width(), layouts[0].height());
        for e in &r.episodes {
            occ.add(&e.positions)?;
        }
        let traj = &r.episodes[index].positions;
        std::fs::write(
            out.join(format!("{name}_occupancy.txt")),
            occupancy_text(&layouts[index], &occ),
        )?;
        std::fs::write(
            out.join(format!("{name}_occupancy.ppm")),
            ppm(&layouts[index], Some(&occ), scale)?,
        )?;
        std::fs::write(
            out.join(format!("{name}_trajectory.txt")),
            trajectory_text(&layouts[index], traj),
        )?;
        let mut single = Occupancy::new(layouts[index].width(), layouts[index].height());
        single.add(traj)?;
        std::fs::write(
            out.join(format!("{name}_trajectory.ppm")),
            ppm(&layouts[index], Some(&single), scale)?,
        )?;
        print!(
            "{name} on layout {index} ({:?}):\n{}",
            r.episodes[index].outcome,
            trajectory_text(&layouts[index], traj)
        );
    }
    println!("renders in {}", out.display());
    Ok(())
}

fn report_cmd(paths: &[PathBuf]) -> Result<()> {
    let mut summaries = Vec::new();
    for p in paths {
        let direct = p.join(run::SUMMARY_FILE);
        if direct.exists() {
            summaries.push(read_summary(&direct)?);
            continue;
        }
        let mut found = false;
        let mut entries: Vec<PathBuf> = std::fs::read_dir(p)
            .with_context(|| format!("reading {}", p.display()))?
            .filter_map(|e| e.ok().map(|e| e.path().join(run::SUMMARY_FILE)))
            .filter(|s| s.exists())
            .collect();
        entries.sort();
        for s in entries {
            summaries.push(read_summary(&s)?);
            found = true;
        }
        if !found {
            bail!("no {} under {}", run::SUMMARY_FILE, p.display());
        }
    }
    print!("{}", sitt_core::report::table(&summaries));
    Ok(())
}
