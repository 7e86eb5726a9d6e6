//! `linoptic`: runs gate experiments and writes CSV or JSON tables.
//!
//! Exit status is 0 when every run completed with all invariants holding,
//! 1 on any error, and 2 when a run completed but an invariant tripped.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use linoptic::fit::angle_grid;
use linoptic::scenario::{AngleSpec, SourcePreset, SourcesSpec};
use linoptic::sources::TargetSource;
use linoptic::{
    run_scenario, DistinguishabilityConfig, Experiment, Frame, GatePreset, Mode, RunOutput, Scenario, SourceConfig,
};

#[derive(Parser, Debug)]
#[command(name = "linoptic", version, about = "Post-selected linear-optics CNOT experiments")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Seed for sampled counts.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Trials per analyzer setting in sampled mode.
    #[arg(long, global = true)]
    trials: Option<u64>,
    /// Report exact probabilities.
    #[arg(long, global = true, conflicts_with = "sampled")]
    exact: bool,
    /// Report seeded binomial counts.
    #[arg(long, global = true)]
    sampled: bool,
    /// Uniform detector efficiency in (0, 1].
    #[arg(long, global = true)]
    efficiency: Option<f64>,
    /// Gate preset: cnot1a, cnot1a-ff, cnot2a, encoder, dcnot, identity.
    #[arg(long, global = true)]
    preset: Option<GatePreset>,
    /// Photon overlaps: `ideal`, `paper-like`, or a JSON file with an
    /// `overlaps` map such as {"overlaps": {"A-C": 0.9}}.
    #[arg(long, global = true, value_name = "ideal|paper-like|FILE")]
    overlaps: Option<String>,
    /// Let the fringe period float instead of pinning it at 180°.
    #[arg(long, global = true)]
    free_period: bool,
    /// Write here instead of stdout.
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FrameArg {
    Logical,
    Physical,
}

impl From<FrameArg> for Frame {
    fn from(f: FrameArg) -> Self {
        match f {
            FrameArg::Logical => Frame::Logical,
            FrameArg::Physical => Frame::Physical,
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Four basis inputs against four output analyzer pairs.
    TruthTable,
    /// Coincidences versus the target analyzer, with a cos² fit.
    Fringe {
        /// Frame the analyzer angles are given in.
        #[arg(long, value_enum, default_value_t = FrameArg::Logical)]
        frame: FrameArg,
        #[arg(long)]
        theta_a: Option<f64>,
        #[arg(long)]
        theta_c: Option<f64>,
        /// Explicit target analyzer angles, comma separated.
        #[arg(long, value_delimiter = ',', conflicts_with = "points")]
        theta_t: Vec<f64>,
        /// Evenly spaced target angles over 0°..180°.
        #[arg(long)]
        points: Option<usize>,
    },
    /// Two-photon interference at a balanced splitter versus overlap.
    Hom {
        #[command(flatten)]
        grid: OverlapGrid,
    },
    /// Gated fringe visibility versus the target photon's overlap.
    ThreePhotonScan {
        #[command(flatten)]
        grid: OverlapGrid,
    },
    /// CHSH values of the gate output and of degraded Bell states.
    Chsh {
        /// Two-photon visibilities for the reference rows, comma separated.
        #[arg(long, value_delimiter = ',')]
        visibilities: Vec<f64>,
    },
    /// Runs a scenario file; global flags override its settings.
    Run { file: PathBuf },
    /// Finds the target-photon overlap that gives a fringe visibility.
    Calibrate {
        #[arg(long)]
        target_visibility: Option<f64>,
    },
}

#[derive(Args, Debug)]
struct OverlapGrid {
    /// Explicit overlap values, comma separated.
    #[arg(long, value_delimiter = ',', conflicts_with = "points")]
    values: Vec<f64>,
    /// Evenly spaced overlaps over [0, 1].
    #[arg(long)]
    points: Option<usize>,
}

impl OverlapGrid {
    fn resolve(&self) -> Option<Vec<f64>> {
        if !self.values.is_empty() {
            Some(self.values.clone())
        } else {
            self.points.map(|n| angle_grid(0.0, 1.0, n))
        }
    }
}

fn scenario_for(command: &Command) -> Result<Scenario> {
    let sc = match command {
        Command::TruthTable => Scenario::new("truth-table", Experiment::TruthTable),
        Command::Fringe { frame, theta_a, theta_c, theta_t, points } => {
            let mut sc = Scenario::new("fringe", Experiment::Fringe);
            sc.sweep.frame = (*frame).into();
            sc.sweep.theta_a = theta_a.map(AngleSpec::Single);
            sc.sweep.theta_c = theta_c.map(AngleSpec::Single);
            if !theta_t.is_empty() {
                sc.sweep.theta_t = Some(AngleSpec::List(theta_t.clone()));
            } else if let Some(n) = points {
                sc.sweep.theta_t = Some(AngleSpec::List(angle_grid(0.0, 180.0, *n)));
            }
            sc
        }
        Command::Hom { grid } => {
            let mut sc = Scenario::new("hom", Experiment::Hom);
            sc.sweep.overlaps = grid.resolve();
            sc
        }
        Command::ThreePhotonScan { grid } => {
            let mut sc = Scenario::new("three-photon-scan", Experiment::ThreePhotonScan);
            sc.sweep.overlaps = grid.resolve();
            sc
        }
        Command::Chsh { visibilities } => {
            let mut sc = Scenario::new("chsh", Experiment::Chsh);
            if !visibilities.is_empty() {
                sc.sweep.visibilities = Some(visibilities.clone());
            }
            sc
        }
        Command::Run { file } => Scenario::load(file)?,
        Command::Calibrate { target_visibility } => {
            let mut sc = Scenario::new("calibrate", Experiment::Calibrate);
            sc.sweep.target_visibility = *target_visibility;
            sc
        }
    };
    Ok(sc)
}

fn load_overlaps(path: &Path) -> Result<SourcesSpec> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let d: DistinguishabilityConfig =
        serde_json::from_str(&text).with_context(|| format!("parsing overlaps in {}", path.display()))?;
    Ok(SourcesSpec::Custom(SourceConfig {
        target: TargetSource::default(),
        distinguishability: d,
        ..SourceConfig::default()
    }))
}

fn apply_overrides(sc: &mut Scenario, g: &Global) -> Result<()> {
    if let Some(seed) = g.seed {
        sc.counting.seed = Some(seed);
    }
    if let Some(trials) = g.trials {
        sc.counting.trials_per_setting = Some(trials);
    }
    if let Some(eff) = g.efficiency {
        sc.counting.detector_efficiency = Some(eff);
    }
    if g.exact {
        sc.mode = Mode::Exact;
    }
    if g.sampled {
        sc.mode = Mode::Sampled;
    }
    if let Some(preset) = g.preset {
        if sc.circuit.is_some() {
            bail!("--preset conflicts with the scenario's explicit circuit");
        }
        sc.preset = Some(preset);
    }
    if let Some(o) = &g.overlaps {
        sc.sources = Some(match o.as_str() {
            "ideal" => SourcesSpec::Preset(SourcePreset::Ideal),
            "paper-like" => SourcesSpec::Preset(SourcePreset::PaperLike),
            path => load_overlaps(Path::new(path))?,
        });
    }
    if g.free_period {
        sc.fit.free_period = true;
    }
    Ok(())
}

fn write_output(out: &RunOutput, g: &Global) -> Result<()> {
    let sink: Box<dyn Write> = match &g.output {
        Some(path) => Box::new(File::create(path).with_context(|| format!("creating {}", path.display()))?),
        None => Box::new(io::stdout().lock()),
    };
    let mut w = BufWriter::new(sink);
    match g.format {
        Format::Csv => out.write_csv(&mut w)?,
        Format::Json => out.write_json(&mut w)?,
    }
    w.flush()?;
    Ok(())
}

fn run(cli: &Cli) -> Result<bool> {
    let mut sc = scenario_for(&cli.command)?;
    apply_overrides(&mut sc, &cli.global)?;
    sc.validate()?;
    let out = run_scenario(&sc)?;
    write_output(&out, &cli.global)?;
    for inv in out.invariants.iter().filter(|i| !i.passed) {
        eprintln!("invariant failed: {} ({})", inv.name, inv.detail);
    }
    Ok(out.invariants_hold())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
