//! End-to-end runs driven by a [`LoadedConfig`].

use std::collections::BTreeSet;

use crate::config::{read_file, LoadedConfig, Solver, Source};
use crate::error::{Error, Result};
use crate::game::{self, AttributionMap, CoalitionGame, PlayerSet};
use crate::ingest;
use crate::payout::{self, BudgetBasis, PayoutReport, Provenance};
use crate::risk::{RiskModel, ThreatTree};
use crate::shapley::{self, AxiomReport, ShapleyResult};

#[derive(Debug, Clone)]
pub struct BuiltGame {
    pub game: CoalitionGame,
    /// Human-readable description of where the game came from.
    pub source: String,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct ShapleyRun {
    pub built: BuiltGame,
    pub result: ShapleyResult,
    pub axioms: AxiomReport,
}

pub fn load_risk_model(cfg: &LoadedConfig) -> Result<RiskModel> {
    let path = cfg
        .config
        .risk_model
        .as_ref()
        .ok_or_else(|| Error::validation("config has no risk_model"))?;
    let path = cfg.resolve(path);
    RiskModel::from_json(&read_file(&path, "risk model")?, cfg.config.impact_cap.as_ref())
}

/// Configured players first, then any other author in the evidence.
fn player_set(cfg: &LoadedConfig, found: &[&str], warnings: &mut Vec<String>) -> Result<PlayerSet> {
    let mut ids: Vec<String> = cfg.config.players.clone().unwrap_or_default();
    let listed = cfg.config.players.is_some();
    for id in found {
        if !ids.iter().any(|p| p == id) {
            if listed {
                warnings.push(format!("author {id:?} is not in the configured players; added as provisional"));
            }
            ids.push(id.to_string());
        }
    }
    if ids.is_empty() {
        return Err(Error::validation("no players: list them in the config or supply evidence naming authors"));
    }
    PlayerSet::new(ids)
}

fn coverage(
    cfg: &LoadedConfig,
    tree: &ThreatTree,
    map: &AttributionMap,
    warnings: &mut Vec<String>,
) -> Result<CoalitionGame> {
    let authors: Vec<&str> = map.authors().into_iter().collect();
    let players = player_set(cfg, &authors, warnings)?;
    game::leaf_coverage_game(tree, map, players, cfg.config.normalized)
}

pub fn build_game(cfg: &LoadedConfig) -> Result<BuiltGame> {
    let c = &cfg.config;
    let path = cfg.resolve(c.source.path());
    let mut warnings = Vec::new();
    let shown = c.source.path().display();
    let norm = if c.normalized { "normalized" } else { "unnormalized" };
    let (game, source) = match &c.source {
        Source::CoalitionTable { missing, .. } => {
            let entries = game::parse_table_document(&read_file(&path, "coalition table")?)?;
            let mut seen = Vec::new();
            for e in &entries {
                for id in &e.coalition {
                    if !seen.contains(&id.as_str()) {
                        seen.push(id.as_str());
                    }
                }
            }
            let players = player_set(cfg, &seen, &mut warnings)?;
            (game::game_from_table(players, &entries, *missing)?, format!("coalition table {shown}"))
        }
        Source::Attribution { .. } => {
            let tree = load_risk_model(cfg)?.threats;
            let map = AttributionMap::from_json(&read_file(&path, "attribution")?)?;
            let g = coverage(cfg, &tree, &map, &mut warnings)?;
            (g, format!("attribution {shown} (leaf coverage, {norm})"))
        }
        Source::CommitLog { aliases, cycle, .. } => {
            let tree = load_risk_model(cfg)?.threats;
            let log = ingest::parse_commit_log(&read_file(&path, "commit log")?)?;
            warnings.extend(log.warnings);
            let aliases = match aliases {
                Some(a) => ingest::parse_aliases(&read_file(&cfg.resolve(a), "alias map")?)?,
                None => Default::default(),
            };
            let (records, report) = ingest::resolve_identities(&log.records, &aliases);
            warnings.extend(report.warnings);
            let map = ingest::derive_attribution(&records, &tree, cycle)?;
            let g = coverage(cfg, &tree, &map, &mut warnings)?;
            let window = match cycle {
                ingest::Cycle::Commits { from, to } => format!("{from}..{to}"),
                ingest::Cycle::Window { since, until } => format!("{since} to {until}"),
            };
            (g, format!("commit log {shown} (cycle {window}, leaf coverage, {norm})"))
        }
        Source::SubsetResults { .. } => {
            let tree = load_risk_model(cfg)?.threats;
            let results = ingest::parse_subset_results(&read_file(&path, "subset results")?)?;
            let found: BTreeSet<&str> = results.iter().flat_map(|r| r.subset.iter().map(String::as_str)).collect();
            let found: Vec<&str> = found.into_iter().collect();
            let players = player_set(cfg, &found, &mut warnings)?;
            let g = ingest::game_from_subset_results(&results, &tree, players, c.normalized)?;
            (g, format!("subset results {shown} ({norm})"))
        }
    };
    Ok(BuiltGame { game, source, warnings })
}

pub fn solve(game: &CoalitionGame, solver: &Solver) -> Result<ShapleyResult> {
    match solver {
        Solver::Exact => shapley::shapley_exact(game),
        Solver::Oracle => shapley::shapley_permutation_oracle(game),
        Solver::MonteCarlo { samples, seed, workers } => shapley::shapley_monte_carlo(game, *samples, *seed, *workers),
    }
}

pub fn run_shapley(cfg: &LoadedConfig) -> Result<ShapleyRun> {
    let built = build_game(cfg)?;
    let result = solve(&built.game, &cfg.config.solver)?;
    let axioms = shapley::check_axioms(&built.game, &result, None)?;
    Ok(ShapleyRun { built, result, axioms })
}

/// Risk delta, budget, game, Shapley values and payments in one report.
pub fn run_payout(cfg: &LoadedConfig) -> Result<PayoutReport> {
    let c = &cfg.config;
    let budget_cfg = c.budget.as_ref().ok_or_else(|| Error::validation("config has no budget section"))?;
    let model = load_risk_model(cfg)?;
    let report = model.validate();
    if !report.is_valid() {
        return Err(Error::validation(format!("risk model is invalid: {}", report.lines().join("; "))));
    }
    let delta = crate::risk::risk_delta(&model.assessments, &model.scales, c.aggregation, c.clamp)?;
    let budget = payout::compute_budget(
        &delta.interval,
        &budget_cfg.fraction,
        &budget_cfg.anchor,
        &budget_cfg.currency,
        budget_cfg.exponent,
    )?;
    let run = run_shapley(cfg)?;
    let mut out = payout::allocate_payments(&run.result, &budget, c.rounding)?;
    let mut notices = report.warnings;
    notices.extend(run.built.warnings);
    if !delta.clamped.is_empty() {
        notices.push(format!("risk increased for {}; clamped to zero", delta.clamped.join(", ")));
    }
    if !run.axioms.all_pass() {
        notices.push("axiom checks did not all pass; see provenance".into());
    }
    notices.append(&mut out.notices);
    out.notices = notices;
    out.basis = Some(BudgetBasis {
        delta: delta.interval,
        fraction: budget_cfg.fraction.clone(),
        anchor: budget_cfg.anchor.clone(),
        clamped_threats: delta.clamped,
    });
    out.provenance = Some(Provenance {
        game_source: run.built.source,
        method: run.result.method.clone(),
        axioms: Some(run.axioms),
    });
    Ok(out)
}

#[derive(Debug, Clone, Default)]
pub struct Validation {
    pub errors: Vec<String>,
    pub warnings: Vec<String>,
}

impl Validation {
    pub fn is_ok(&self) -> bool {
        self.errors.is_empty()
    }
}

/// Checks a risk model document on its own.
pub fn validate_risk_model(model: &RiskModel) -> Validation {
    let r = model.validate();
    let mut v = Validation { warnings: r.warnings.clone(), ..Default::default() };
    v.errors.extend(r.scale_violations.iter().map(ToString::to_string));
    v.errors.extend(r.tree_violations.iter().map(ToString::to_string));
    v.errors.extend(r.assessment_errors.iter().cloned());
    v
}

/// Checks that every input of a config exists, parses and is consistent.
/// Parse failures of the inputs are returned as errors, not collected.
pub fn validate_config(cfg: &LoadedConfig) -> Result<Validation> {
    let mut v = Validation::default();
    let missing = cfg.missing_files();
    if !missing.is_empty() {
        v.errors.extend(missing.iter().map(|p| format!("missing file {}", p.display())));
        return Ok(v);
    }
    if cfg.config.risk_model.is_some() {
        let model = load_risk_model(cfg)?;
        let mv = validate_risk_model(&model);
        v.errors.extend(mv.errors);
        v.warnings.extend(mv.warnings);
        if !v.is_ok() {
            return Ok(v);
        }
    }
    match build_game(cfg) {
        Ok(b) => v.warnings.extend(b.warnings),
        Err(e @ (Error::Validation(_) | Error::Unknown { .. })) => v.errors.push(e.to_string()),
        Err(e) => return Err(e),
    }
    Ok(v)
}
