use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use fairpay::config::{read_file, LoadedConfig, Solver, Source};
use fairpay::game::TableEntry;
use fairpay::payout::{self, ReportFormat};
use fairpay::risk::RiskModel;
use fairpay::{ingest, pipeline, Error, ErrorKind, Result};

/// Shapley-based security bonus payments from risk assessments and commit history.
///
/// Exit status: 0 success, 1 validation failure, 2 unreadable or malformed
/// input, 3 capacity limit (for example too many players for the exact solver).
#[derive(Parser)]
#[command(name = "fairpay", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check scales, threat tree, assessments and config inputs.
    Validate {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Validate a risk-model document on its own.
        #[arg(long)]
        risk_model: Option<PathBuf>,
        /// Cap for an unbounded top impact category (with --risk-model).
        #[arg(long)]
        impact_cap: Option<String>,
    },
    /// Build the coalition game and print its value table.
    Game {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum, default_value_t = Listing::Text)]
        format: Listing,
    },
    /// Print Shapley values, shares and the axiom report.
    Shapley {
        #[arg(long)]
        config: PathBuf,
        /// Override the Monte-Carlo seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum, default_value_t = Listing::Text)]
        format: Listing,
    },
    /// Run the full pipeline and write a payout report.
    Payout {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Report path; `-` or absent (and none in the config) means stdout.
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long)]
        format: Option<ReportFormat>,
    },
    /// Emit the instructions for evaluating one coalition by cherry-picking.
    PlanCherryPick {
        #[arg(long)]
        config: PathBuf,
        /// Commit the coalition's branch starts from.
        #[arg(long)]
        base: String,
        /// Comma-separated player ids.
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        subset: Vec<String>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Re-render a stored JSON payout report.
    Report {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        format: ReportFormat,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Listing {
    Text,
    Json,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.kind() {
                ErrorKind::Validation => 1,
                ErrorKind::Parse => 2,
                ErrorKind::Capacity => 3,
            })
        }
    }
}

fn load(config: &Path, seed: Option<u64>) -> Result<LoadedConfig> {
    let mut cfg = LoadedConfig::load(config)?;
    if let Some(s) = seed {
        match &mut cfg.config.solver {
            Solver::MonteCarlo { seed, .. } => *seed = s,
            _ => eprintln!("warning: --seed ignored; the configured solver is not monte-carlo"),
        }
    }
    Ok(cfg)
}

fn emit(text: &str, path: Option<&Path>) -> Result<()> {
    match path {
        Some(p) if p != Path::new("-") => fs::write(p, text)
            .map_err(|source| Error::Io { context: format!("writing {}", p.display()), source }),
        _ => {
            print!("{text}");
            Ok(())
        }
    }
}

macro_rules! json {
    ($value:expr) => {{
        let mut s = serde_json::to_string_pretty($value).expect("serializable");
        s.push('\n');
        s
    }};
}

fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::Validate { config, risk_model, impact_cap } => {
            let mut results = Vec::new();
            if let Some(path) = risk_model {
                let cap = impact_cap.as_deref().map(fairpay::rational::parse_rational).transpose()?;
                let model = RiskModel::from_json(&read_file(&path, "risk model")?, cap.as_ref())?;
                results.push((path, pipeline::validate_risk_model(&model)));
            }
            if let Some(path) = config {
                let cfg = LoadedConfig::load(&path)?;
                results.push((path, pipeline::validate_config(&cfg)?));
            }
            if results.is_empty() {
                return Err(Error::Validation("nothing to validate: pass --config or --risk-model".into()));
            }
            let mut ok = true;
            for (path, v) in results {
                for w in &v.warnings {
                    eprintln!("warning: {}: {w}", path.display());
                }
                for e in &v.errors {
                    eprintln!("error: {}: {e}", path.display());
                }
                println!("{}: {}", path.display(), if v.is_ok() { "valid" } else { "INVALID" });
                ok &= v.is_ok();
            }
            Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::Game { config, format } => {
            let built = pipeline::build_game(&load(&config, None)?)?;
            for w in &built.warnings {
                eprintln!("warning: {w}");
            }
            eprintln!("game: {}", built.source);
            match format {
                Listing::Text => print!("{}", built.game),
                Listing::Json => {
                    let players = built.game.players();
                    let rows: Vec<TableEntry> = built
                        .game
                        .rows()?
                        .into_iter()
                        .map(|(c, value)| TableEntry {
                            coalition: players.ids_of(c).into_iter().map(String::from).collect(),
                            value,
                        })
                        .collect();
                    print!("{}", json!(&rows));
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Shapley { config, seed, format } => {
            let run = pipeline::run_shapley(&load(&config, seed)?)?;
            for w in &run.built.warnings {
                eprintln!("warning: {w}");
            }
            match format {
                Listing::Text => {
                    let r = &run.result;
                    println!("{}", r.phi_line());
                    for (i, id) in r.players.ids().iter().enumerate() {
                        let share = r.shares.as_ref().map_or("-".to_string(), |s| s[i].to_string());
                        let se = match r.std_errors.as_ref().map(|v| v[i]) {
                            Some(Some(se)) => format!("\tse={se:.6}"),
                            Some(None) => "\tse=-".to_string(),
                            None => String::new(),
                        };
                        println!("{id}\tphi={}\tshare={share}{se}", r.phi[i]);
                    }
                    for line in run.axioms.lines() {
                        println!("{line}");
                    }
                    println!("all axioms: {}", if run.axioms.all_pass() { "pass" } else { "FAIL" });
                }
                Listing::Json => {
                    let out = serde_json::json!({ "result": run.result, "axioms": run.axioms });
                    print!("{}", json!(&out));
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Payout { config, seed, output, format } => {
            let cfg = load(&config, seed)?;
            let report = pipeline::run_payout(&cfg)?;
            for n in &report.notices {
                eprintln!("notice: {n}");
            }
            let format = format.unwrap_or(cfg.config.output.format);
            let path = output.or_else(|| cfg.config.output.path.as_ref().map(|p| cfg.resolve(p)));
            emit(&payout::render_report(&report, format), path.as_deref())?;
            Ok(ExitCode::SUCCESS)
        }
        Command::PlanCherryPick { config, base, subset, output } => {
            let cfg = load(&config, None)?;
            let Source::CommitLog { path, aliases, .. } = &cfg.config.source else {
                return Err(Error::Validation("plan-cherry-pick needs a commit-log source".into()));
            };
            let log = ingest::parse_commit_log(&read_file(&cfg.resolve(path), "commit log")?)?;
            let aliases = match aliases {
                Some(a) => ingest::parse_aliases(&read_file(&cfg.resolve(a), "alias map")?)?,
                None => Default::default(),
            };
            let (records, ident) = ingest::resolve_identities(&log.records, &aliases);
            let mut ids: Vec<String> = cfg.config.players.clone().unwrap_or_default();
            for r in &records {
                if !ids.contains(&r.author) {
                    ids.push(r.author.clone());
                }
            }
            let players = fairpay::game::PlayerSet::new(ids)?;
            let plan = ingest::cherry_pick_plan(&records, &base, &subset, &players)?;
            for w in log.warnings.iter().chain(&ident.warnings).chain(&plan.warnings) {
                eprintln!("warning: {w}");
            }
            emit(&json!(&plan), output.as_deref())?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Report { input, format, output } => {
            let report = payout::parse_report(&read_file(&input, "payout report")?)?;
            emit(&payout::render_report(&report, format), output.as_deref())?;
            Ok(ExitCode::SUCCESS)
        }
    }
}
