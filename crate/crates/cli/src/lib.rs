//! Command-line front end: simulate, analyze, render and serve models.

pub mod server;

use std::ffi::OsString;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use loopx_core::export::{export_csv, render_svg, trajectory_csv, AnalysisBundle, BundleOptions, CsvSelector, Diagram, RenderStyle};
use loopx_core::layout::LayoutWarning;
use loopx_core::loops::DEFAULT_LOOP_CAP;
use loopx_core::model::{parse_xmile, ModelDef};
use loopx_core::sim::simulate;
use loopx_core::simplify::SimplifyParams;
use loopx_core::{analyze, Analysis};

/// Bad arguments: reported with exit code 1.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Debug, Parser)]
#[command(name = "loopx", version, about = "Loop dominance analysis for stock-and-flow models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the model and write its trajectories as CSV.
    Simulate {
        file: PathBuf,
        /// Output path (standard output when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the full analysis and write the JSON bundle.
    Analyze {
        file: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_LOOP_CAP, value_parser = loop_cap)]
        max_loops: usize,
        /// Also write trajectories.csv, link_scores.csv and loop_scores.csv here.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Render a simplified causal loop diagram.
    Cld {
        file: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        link_threshold: f64,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        loop_threshold: f64,
        #[arg(long)]
        svg: Option<PathBuf>,
        /// Model time to draw (defaults to the final step).
        #[arg(long, allow_hyphen_values = true)]
        time: Option<f64>,
        #[arg(long, default_value_t = DEFAULT_LOOP_CAP, value_parser = loop_cap)]
        max_loops: usize,
    },
    /// Render the stock-and-flow diagram or the full causal loop diagram.
    Render {
        file: PathBuf,
        #[arg(long, value_enum)]
        view: View,
        #[arg(long)]
        svg: Option<PathBuf>,
        #[arg(long, allow_hyphen_values = true)]
        time: Option<f64>,
        #[arg(long, default_value_t = DEFAULT_LOOP_CAP, value_parser = loop_cap)]
        max_loops: usize,
    },
    /// Serve the analysis bundle and the explorer over HTTP.
    Serve {
        file: PathBuf,
        #[arg(long)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = DEFAULT_LOOP_CAP, value_parser = loop_cap)]
        max_loops: usize,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum View {
    Sfd,
    Cld,
}

fn loop_cap(text: &str) -> Result<usize, String> {
    match text.parse::<usize>() {
        Ok(n) if n >= 1 => Ok(n),
        _ => Err(format!("expected a positive integer, got `{text}`")),
    }
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                1
            } else {
                2
            }
        }
    }
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Simulate { file, out } => {
            let model = load_model(&file)?;
            let traj = simulate(&model).context("simulation failed")?;
            emit(out.as_deref(), trajectory_csv(&traj).as_bytes())
        }
        Command::Analyze { file, out, max_loops, csv } => {
            let analysis = load_analysis(&file, max_loops)?;
            let bundle = build_bundle(&analysis, Vec::new())?;
            emit(out.as_deref(), bundle.to_json()?.as_bytes())?;
            if let Some(dir) = csv {
                fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
                for selector in CsvSelector::ALL {
                    let path = dir.join(format!("{}.csv", selector.name()));
                    write_file(&path, export_csv(&bundle, selector).as_bytes())?;
                }
            }
            Ok(())
        }
        Command::Cld { file, link_threshold, loop_threshold, svg, time, max_loops } => {
            let params = SimplifyParams::new(link_threshold, loop_threshold).map_err(|e| UsageError(e.to_string()))?;
            let analysis = load_analysis(&file, max_loops)?;
            let t_index = time_index(&analysis, time)?;
            let bundle = build_bundle(&analysis, vec![params])?;
            let text = render_svg(&bundle, Diagram::Variant(0), t_index, &RenderStyle::default())?;
            emit(svg.as_deref(), text.as_bytes())
        }
        Command::Render { file, view, svg, time, max_loops } => {
            let analysis = load_analysis(&file, max_loops)?;
            let t_index = time_index(&analysis, time)?;
            let bundle = build_bundle(&analysis, Vec::new())?;
            let diagram = match view {
                View::Sfd => Diagram::Sfd,
                View::Cld => Diagram::FullCld,
            };
            let text = render_svg(&bundle, diagram, t_index, &RenderStyle::default())?;
            emit(svg.as_deref(), text.as_bytes())
        }
        Command::Serve { file, port, host, max_loops } => {
            let analysis = load_analysis(&file, max_loops)?;
            let bundle = build_bundle(&analysis, Vec::new())?;
            let json = bundle.to_json()?.into_bytes();
            let ui_dir = std::env::var_os("LOOPX_UI_DIR").map(PathBuf::from);
            let runtime = tokio::runtime::Builder::new_multi_thread()
                .enable_all()
                .build()
                .context("starting the async runtime")?;
            runtime.block_on(server::serve(&host, port, json, ui_dir))
        }
    }
}

fn load_model(path: &Path) -> Result<ModelDef> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_xmile(&text).with_context(|| format!("parsing {}", path.display()))
}

fn load_analysis(path: &Path, max_loops: usize) -> Result<Analysis> {
    let model = load_model(path)?;
    analyze(model, max_loops).with_context(|| format!("analyzing {}", path.display()))
}

fn build_bundle(analysis: &Analysis, variants: Vec<SimplifyParams>) -> Result<AnalysisBundle> {
    let options = BundleOptions { variants, ..BundleOptions::default() };
    let bundle = AnalysisBundle::build(analysis, &options).context("laying out diagrams")?;
    let layouts = std::iter::once(&bundle.cld.full).chain(&bundle.cld.variants);
    for w in layouts.flat_map(|v| &v.layout.warnings) {
        eprintln!("warning: {}", describe_warning(w));
    }
    Ok(bundle)
}

fn describe_warning(w: &LayoutWarning) -> String {
    match w {
        LayoutWarning::OverlapUnresolved { pairs } => {
            let names: Vec<String> = pairs.iter().map(|(a, b)| format!("{a}/{b}")).collect();
            format!("overlapping nodes left after removal: {}", names.join(", "))
        }
        LayoutWarning::FlatArc { source, target, radius, chord } => {
            format!("arc {source} -> {target} is nearly straight (radius {radius:.3}, chord {chord:.3})")
        }
        LayoutWarning::LoopCapExceeded { cap } => {
            format!("more than {cap} loops in the drawn graph; edges drawn straight")
        }
    }
}

/// Step to draw for `--time`, defaulting to the final step.
fn time_index(analysis: &Analysis, time: Option<f64>) -> Result<usize> {
    match time {
        None => Ok(analysis.steps()),
        Some(t) => analysis.step_at_time(t).ok_or_else(|| {
            let specs = &analysis.model.sim_specs;
            UsageError(format!(
                "--time {t} is outside the run [{}, {}]",
                specs.start_time, specs.stop_time
            ))
            .into()
        }),
    }
}

fn emit(path: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match path {
        Some(p) => write_file(p, bytes),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(bytes).context("writing to standard output")?;
            out.flush().context("writing to standard output")
        }
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}
