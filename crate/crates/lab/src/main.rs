use std::io::Write;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use peerflip::catalog_io::LoadedCatalog;
use peerflip::fixture::{reference_fixture, write_fixture, ReferenceKind};
use peerflip::runner::{self, AnalysisInput, BuiltAgent};
use peerflip::Config;
use peerflip_core::{render_prompt, Answer, Archetype, Ordering, PeerSummary, PromptSpec};

#[derive(Parser)]
#[command(name = "peerflip", version, about = "Peer-pressure experiments on decision agents")]
struct Cli {
    /// TOML configuration file. Built-in defaults when omitted.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    /// Override one key, e.g. `--set flip.repetitions=5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build and cache the network archetypes with their metrics table.
    GenNetworks {
        /// Restrict to these archetypes (default: all ten).
        #[arg(long = "only")]
        only: Vec<String>,
        /// Regenerate even when a cached file exists.
        #[arg(long)]
        force: bool,
    },
    /// Run the peer-pressure grid, resuming from existing records.
    FlipGrid,
    /// Run majority/minority consensus dynamics on cached networks.
    Consensus,
    /// Derive threshold tables from records or a replay fixture.
    Analyze {
        #[arg(long, conflicts_with = "fixture")]
        records: Option<PathBuf>,
        #[arg(long)]
        fixture: Option<PathBuf>,
        /// Output directory (default: `<output_dir>/analysis`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print one rendered prompt, byte for byte.
    RenderPrompt {
        /// Literal question text; otherwise looked up from the catalog.
        #[arg(long)]
        question: Option<String>,
        #[arg(long, default_value = "green_energy")]
        topic: String,
        #[arg(long, default_value = "attitudes")]
        layer: String,
        #[arg(long, default_value = "economic")]
        frame: String,
        #[arg(long, default_value = "Yes")]
        previous: String,
        #[arg(long, default_value_t = 10)]
        peers: u32,
        /// Percent of peers holding the opposite answer.
        #[arg(long, default_value_t = 75)]
        disagree: u8,
        #[arg(long, value_enum, default_value_t = OptionOrder::YesFirst)]
        ordering: OptionOrder,
    },
    /// Rebuild every table from the files in the output directory.
    Report,
    /// Write a replay fixture encoding the reference thresholds.
    MakeFixture {
        #[arg(long, value_enum, default_value_t = FixtureKind::Layer)]
        kind: FixtureKind,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum OptionOrder {
    YesFirst,
    NoFirst,
}

#[derive(Clone, Copy, ValueEnum)]
enum FixtureKind {
    Layer,
    Frame,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let config = Config::load(cli.config.as_deref(), &cli.overrides).context("loading configuration")?;
    let catalog = || LoadedCatalog::load(config.catalog.path.as_deref());
    match cli.command {
        Command::GenNetworks { only, force } => {
            let archetypes: Vec<Archetype> = if only.is_empty() {
                Archetype::TEN.to_vec()
            } else {
                only.iter().map(|s| s.parse()).collect::<Result<_, _>>()?
            };
            if archetypes.contains(&Archetype::Custom) {
                bail!("`custom` is not a generated archetype");
            }
            for (a, fresh) in runner::gen_networks(&config, &archetypes, force)? {
                println!("{:<22} {}", a.label(), if fresh { "generated" } else { "cached" });
            }
        }
        Command::FlipGrid => {
            let catalog = catalog()?;
            let agent = BuiltAgent::from_config(&config)?;
            let s = runner::flip_grid(&config, &catalog, &agent)?;
            println!(
                "{} trials: {} already recorded, {} written ({} failed)",
                s.total, s.resumed, s.written, s.failed_trials
            );
        }
        Command::Consensus => {
            let catalog = catalog()?;
            let agent = BuiltAgent::from_config(&config)?;
            let s = runner::consensus(&config, &catalog, &agent)?;
            println!(
                "{} runs ({} resumed); summary in {}",
                s.runs,
                s.resumed,
                s.summary_path.display()
            );
        }
        Command::Analyze { records, fixture, out } => {
            let input = match (records, fixture) {
                (_, Some(f)) => AnalysisInput::Fixture(f),
                (Some(r), None) => AnalysisInput::Records(r),
                (None, None) => AnalysisInput::Records(config.run.output_dir.join(runner::RECORDS)),
            };
            let out = out.unwrap_or_else(|| config.run.output_dir.join(runner::ANALYSIS_DIR));
            let report = runner::analyze(&config, &input, &out)?;
            println!("{:<12} {:>8} {:>8}", "layer", "Yes", "No");
            for row in &report.asymmetry {
                let show = |c: peerflip_core::Crossing| c.value().map_or_else(|| c.label().to_string(), |v| format!("{v:.1}"));
                println!("{:<12} {:>8} {:>8}", row.layer.to_string(), show(row.yes), show(row.no));
            }
            for (a, h) in Answer::BOTH.iter().zip(&report.hierarchies) {
                match h {
                    Ok(h) => {
                        let order: Vec<String> = h.order.iter().map(ToString::to_string).collect();
                        println!("{a} hierarchy: {}", order.join(" > "));
                    }
                    Err(e) => println!("{a} hierarchy: {e}"),
                }
            }
            println!("tables written to {}", out.display());
        }
        Command::RenderPrompt {
            question,
            topic,
            layer,
            frame,
            previous,
            peers,
            disagree,
            ordering,
        } => {
            let question = match question {
                Some(q) => q,
                None => {
                    let spec = PromptSpec::new(topic.parse()?, layer.parse()?, frame.parse()?);
                    catalog()?.catalog.lookup(spec).to_string()
                }
            };
            if disagree > 100 {
                bail!("--disagree must be a percentage");
            }
            let summary = PeerSummary::from_agreement(peers, 100 - disagree)?;
            let ordering = match ordering {
                OptionOrder::YesFirst => Ordering::YesFirst,
                OptionOrder::NoFirst => Ordering::NoFirst,
            };
            let prompt = render_prompt(&question, previous.parse()?, &summary, ordering);
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(prompt.as_bytes())?;
            stdout.flush()?;
        }
        Command::Report => {
            for path in runner::report(&config, &catalog()?)? {
                println!("{}", path.display());
            }
        }
        Command::MakeFixture { kind, out } => {
            let kind = match kind {
                FixtureKind::Layer => ReferenceKind::Layer,
                FixtureKind::Frame => ReferenceKind::Frame,
            };
            let mut grid: Vec<u8> = config.flip_grid()?.agreement_ratios.iter().map(|a| 100 - a).collect();
            grid.sort_unstable();
            write_fixture(&out, &reference_fixture(kind, &grid))?;
            println!("{}", out.display());
        }
    }
    Ok(())
}
