//! Version-control evidence: commit logs with `Satisfies:` trailers, identity
//! aliases, cherry-pick plans and externally evaluated subset results.
//!
//! Commit-log format, one field per line, records separated by `---`:
//!
//! ```text
//! commit: 3f2a9c1
//! author: alice@example.com
//! date: 2023-02-01T09:30:00Z
//! parent: 1b7e004
//! trailer: Satisfies: U-46365
//! ---
//! ```
//!
//! `parent:` and `trailer:` repeat. Records are listed oldest first; a parent
//! that is not in the log is treated as external (typically the base commit).
//! Blank lines and lines starting with `#` are ignored.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use chrono::{DateTime, SecondsFormat, Utc};
use num::{BigInt, BigRational};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{AttributionMap, Coalition, CoalitionGame, PlayerSet, TABLE_CAP};
use crate::risk::ThreatTree;

/// Trailer key that links a commit to the leaf condition it satisfies.
pub const SATISFIES: &str = "Satisfies";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommitRecord {
    pub commit_id: String,
    pub author: String,
    /// Seconds since the Unix epoch.
    pub timestamp: i64,
    pub parents: Vec<String>,
    pub trailers: Vec<(String, String)>,
}

impl CommitRecord {
    /// Leaf ids named by `Satisfies:` trailers.
    pub fn satisfies(&self) -> impl Iterator<Item = &str> {
        self.trailers.iter().filter(|(k, _)| k.eq_ignore_ascii_case(SATISFIES)).map(|(_, v)| v.as_str())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParsedLog {
    pub records: Vec<CommitRecord>,
    pub warnings: Vec<String>,
}

#[derive(Default)]
struct Pending {
    line: usize,
    commit: Option<String>,
    author: Option<String>,
    timestamp: Option<i64>,
    parents: Vec<String>,
    trailers: Vec<(String, String)>,
}

impl Pending {
    fn is_empty(&self) -> bool {
        self.commit.is_none()
            && self.author.is_none()
            && self.timestamp.is_none()
            && self.parents.is_empty()
            && self.trailers.is_empty()
    }

    fn finish(self) -> Result<CommitRecord> {
        let missing = |field: &str| Error::Syntax { line: self.line, message: format!("record is missing `{field}:`") };
        Ok(CommitRecord {
            commit_id: self.commit.clone().ok_or_else(|| missing("commit"))?,
            author: self.author.clone().ok_or_else(|| missing("author"))?,
            timestamp: self.timestamp.ok_or_else(|| missing("date"))?,
            parents: self.parents,
            trailers: self.trailers,
        })
    }
}

pub fn parse_commit_log(text: &str) -> Result<ParsedLog> {
    let mut out = ParsedLog::default();
    let mut cur = Pending::default();
    let mut seen: HashMap<String, usize> = HashMap::new();

    let mut flush = |cur: Pending, out: &mut ParsedLog| -> Result<()> {
        if cur.is_empty() {
            return Ok(());
        }
        let line = cur.line;
        let record = cur.finish()?;
        if seen.insert(record.commit_id.clone(), out.records.len()).is_some() {
            return Err(Error::Syntax { line, message: format!("duplicate commit {:?}", record.commit_id) });
        }
        out.records.push(record);
        Ok(())
    };

    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if line == "---" {
            flush(std::mem::take(&mut cur), &mut out)?;
            continue;
        }
        let syntax = |message: String| Error::Syntax { line: lineno, message };
        let (key, value) = line.split_once(':').ok_or_else(|| syntax(format!("expected `field: value`, got {line:?}")))?;
        let value = value.trim();
        if cur.is_empty() {
            cur.line = lineno;
        }
        let set_once = |slot: &mut Option<String>, field: &str| -> Result<()> {
            if slot.is_some() {
                return Err(syntax(format!("`{field}:` given twice in one record")));
            }
            if value.is_empty() {
                return Err(syntax(format!("`{field}:` is empty")));
            }
            *slot = Some(value.to_string());
            Ok(())
        };
        match key.trim() {
            "commit" => set_once(&mut cur.commit, "commit")?,
            "author" => set_once(&mut cur.author, "author")?,
            "date" => {
                if cur.timestamp.is_some() {
                    return Err(syntax("`date:` given twice in one record".into()));
                }
                let t = DateTime::parse_from_rfc3339(value)
                    .map_err(|e| syntax(format!("bad RFC 3339 date {value:?}: {e}")))?;
                cur.timestamp = Some(t.timestamp());
            }
            "parent" => {
                if value.is_empty() {
                    return Err(syntax("`parent:` is empty".into()));
                }
                cur.parents.push(value.to_string());
            }
            "trailer" => {
                let (k, v) = value
                    .split_once(':')
                    .ok_or_else(|| syntax(format!("trailer {value:?} is not `Key: value`")))?;
                let (k, v) = (k.trim(), v.trim());
                if k.is_empty() || v.is_empty() {
                    return Err(syntax(format!("trailer {value:?} is not `Key: value`")));
                }
                if !k.eq_ignore_ascii_case(SATISFIES) {
                    out.warnings.push(format!("line {lineno}: ignoring trailer key {k:?}"));
                }
                cur.trailers.push((k.to_string(), v.to_string()));
            }
            other => return Err(syntax(format!("unknown field {other:?}"))),
        }
    }
    flush(cur, &mut out)?;

    // Parents must precede their children or lie outside the log.
    for (i, r) in out.records.iter().enumerate() {
        for p in &r.parents {
            if let Some(&j) = seen.get(p) {
                if j >= i {
                    return Err(Error::validation(format!(
                        "commit {:?} lists parent {p:?} which appears later in the log",
                        r.commit_id
                    )));
                }
            }
        }
    }
    Ok(out)
}

pub fn render_commit_log(records: &[CommitRecord]) -> String {
    let mut out = String::new();
    for (i, r) in records.iter().enumerate() {
        if i > 0 {
            out.push_str("---\n");
        }
        out.push_str(&format!("commit: {}\n", r.commit_id));
        out.push_str(&format!("author: {}\n", r.author));
        let date = DateTime::<Utc>::from_timestamp(r.timestamp, 0)
            .map(|d| d.to_rfc3339_opts(SecondsFormat::Secs, true))
            .unwrap_or_default();
        out.push_str(&format!("date: {date}\n"));
        for p in &r.parents {
            out.push_str(&format!("parent: {p}\n"));
        }
        for (k, v) in &r.trailers {
            out.push_str(&format!("trailer: {k}: {v}\n"));
        }
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct IdentityReport {
    /// Identities with no alias entry, kept as provisional player ids.
    pub unmapped: BTreeSet<String>,
    pub warnings: Vec<String>,
}

/// Rewrites authors to canonical player ids. Identities that already are a
/// canonical id pass through silently; anything else without an alias is kept
/// as-is and reported. With an empty alias map nothing is rewritten or reported.
pub fn resolve_identities(
    records: &[CommitRecord],
    aliases: &BTreeMap<String, String>,
) -> (Vec<CommitRecord>, IdentityReport) {
    let mut report = IdentityReport::default();
    if aliases.is_empty() {
        return (records.to_vec(), report);
    }
    let canonical: HashSet<&str> = aliases.values().map(String::as_str).collect();
    let resolved = records
        .iter()
        .map(|r| {
            let mut r = r.clone();
            if let Some(id) = aliases.get(&r.author) {
                r.author = id.clone();
            } else if !canonical.contains(r.author.as_str()) && report.unmapped.insert(r.author.clone()) {
                report.warnings.push(format!("no alias for {:?}; treating it as a provisional player", r.author));
            }
            r
        })
        .collect();
    (resolved, report)
}

pub fn parse_aliases(text: &str) -> Result<BTreeMap<String, String>> {
    serde_json::from_str(text).map_err(|source| Error::Json { context: "alias map".into(), source })
}

/// Which commits belong to one evaluation cycle.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Cycle {
    /// Commits reachable from `to` but not from `from` (which is excluded).
    Commits { from: String, to: String },
    /// Commits with `since <= date < until`.
    Window { since: String, until: String },
}

struct History<'a> {
    records: &'a [CommitRecord],
    index: HashMap<&'a str, usize>,
}

impl<'a> History<'a> {
    fn new(records: &'a [CommitRecord]) -> Self {
        History { records, index: records.iter().enumerate().map(|(i, r)| (r.commit_id.as_str(), i)).collect() }
    }

    fn knows(&self, id: &str) -> bool {
        self.index.contains_key(id) || self.records.iter().any(|r| r.parents.iter().any(|p| p == id))
    }

    /// Log indices of `id` and all its in-log ancestors.
    fn ancestors(&self, id: &str) -> HashSet<usize> {
        let mut seen = HashSet::new();
        let mut stack: Vec<usize> = self.index.get(id).copied().into_iter().collect();
        while let Some(i) = stack.pop() {
            if seen.insert(i) {
                for p in &self.records[i].parents {
                    if let Some(&j) = self.index.get(p.as_str()) {
                        stack.push(j);
                    }
                }
            }
        }
        seen
    }
}

pub fn commits_in_cycle<'a>(records: &'a [CommitRecord], cycle: &Cycle) -> Result<Vec<&'a CommitRecord>> {
    match cycle {
        Cycle::Commits { from, to } => {
            let h = History::new(records);
            if !h.knows(from) {
                return Err(Error::unknown("commit", from.clone()));
            }
            if !h.index.contains_key(to.as_str()) {
                return Err(Error::unknown("commit", to.clone()));
            }
            let before = h.ancestors(from);
            let upto = h.ancestors(to);
            Ok(records.iter().enumerate().filter(|(i, _)| upto.contains(i) && !before.contains(i)).map(|(_, r)| r).collect())
        }
        Cycle::Window { since, until } => {
            let parse = |s: &str| {
                DateTime::parse_from_rfc3339(s)
                    .map(|d| d.timestamp())
                    .map_err(|e| Error::validation(format!("bad cycle date {s:?}: {e}")))
            };
            let (since, until) = (parse(since)?, parse(until)?);
            Ok(records.iter().filter(|r| since <= r.timestamp && r.timestamp < until).collect())
        }
    }
}

/// Per leaf, the distinct authors of in-cycle commits whose trailers name it.
pub fn derive_attribution(records: &[CommitRecord], tree: &ThreatTree, cycle: &Cycle) -> Result<AttributionMap> {
    let mut map = AttributionMap { leaves: tree.leaves().map(|l| (l.id.clone(), BTreeSet::new())).collect() };
    let mut offenders = Vec::new();
    for r in commits_in_cycle(records, cycle)? {
        for leaf in r.satisfies() {
            match map.leaves.get_mut(leaf) {
                Some(authors) => {
                    authors.insert(r.author.clone());
                }
                None => offenders.push(format!("{}:{leaf}", r.commit_id)),
            }
        }
    }
    if !offenders.is_empty() {
        return Err(Error::validation(format!("trailers reference unknown leaves: {}", offenders.join(", "))));
    }
    Ok(map)
}

/// One instruction in a cherry-pick plan.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "kebab-case")]
pub enum PlanAction {
    EvaluateCurrent { note: String },
    FixBase { commit: String },
    CreateBranch { branch: String, from: String },
    CherryPick { commits: Vec<String> },
    RebuildAndEvaluate { note: String, subset: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanStep {
    pub step: u32,
    #[serde(flatten)]
    pub action: PlanAction,
}

/// Instructions for rebuilding the product from one coalition's commits.
/// The plan is only emitted; nothing is executed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Plan {
    pub base_commit: String,
    pub subset: Vec<String>,
    pub steps: Vec<PlanStep>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl Plan {
    pub fn picks(&self) -> &[String] {
        self.steps
            .iter()
            .find_map(|s| match &s.action {
                PlanAction::CherryPick { commits } => Some(commits.as_slice()),
                _ => None,
            })
            .unwrap_or_default()
    }
}

fn branch_name(ids: &[&str]) -> String {
    if ids.is_empty() {
        return "coalition/empty".into();
    }
    let clean: Vec<String> = ids
        .iter()
        .map(|id| id.chars().map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '-' }).collect())
        .collect();
    format!("coalition/{}", clean.join("+"))
}

pub fn cherry_pick_plan<S: AsRef<str>>(
    records: &[CommitRecord],
    base_commit: &str,
    subset: &[S],
    players: &PlayerSet,
) -> Result<Plan> {
    let h = History::new(records);
    if !h.knows(base_commit) {
        return Err(Error::unknown("commit", base_commit));
    }
    let coalition = players.coalition(subset)?;
    let ids = players.ids_of(coalition);
    let before = h.ancestors(base_commit);
    let window: Vec<&CommitRecord> =
        records.iter().enumerate().filter(|(i, _)| !before.contains(i)).map(|(_, r)| r).collect();
    let mut warnings = Vec::new();
    if window.is_empty() {
        warnings.push(format!("no commits after base {base_commit:?}; the pick list is empty"));
    }
    let picks: Vec<String> =
        window.iter().filter(|r| ids.contains(&r.author.as_str())).map(|r| r.commit_id.clone()).collect();
    let subset_ids: Vec<String> = ids.iter().map(|s| s.to_string()).collect();
    let branch = branch_name(&ids);
    let actions = vec![
        PlanAction::EvaluateCurrent {
            note: "build the current head and record v1, the number of passing leaf checks".into(),
        },
        PlanAction::FixBase { commit: base_commit.to_string() },
        PlanAction::CreateBranch { branch, from: base_commit.to_string() },
        PlanAction::CherryPick { commits: picks },
        PlanAction::RebuildAndEvaluate {
            note: "rebuild, run the leaf checks and record the passing leaves as a subset result".into(),
            subset: subset_ids.clone(),
        },
    ];
    let steps = actions.into_iter().zip(1..).map(|(action, step)| PlanStep { step, action }).collect();
    Ok(Plan { base_commit: base_commit.to_string(), subset: subset_ids, steps, warnings })
}

/// Leaf checks that passed when only `subset`'s commits were applied.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsetResult {
    pub subset: Vec<String>,
    pub passing: Vec<String>,
}

pub fn parse_subset_results(text: &str) -> Result<Vec<SubsetResult>> {
    serde_json::from_str(text).map_err(|source| Error::Json { context: "subset results".into(), source })
}

/// Game whose value on `S` is the number of leaves passing with `S`'s commits
/// (divided by the leaf count when `normalized`). Every nonempty subset must
/// be covered; the empty coalition is implicitly worth zero.
pub fn game_from_subset_results(
    results: &[SubsetResult],
    tree: &ThreatTree,
    players: PlayerSet,
    normalized: bool,
) -> Result<CoalitionGame> {
    let n = players.len();
    if n > TABLE_CAP {
        return Err(Error::Capacity(format!("{n} players exceeds the value-table cap of {TABLE_CAP}")));
    }
    let mut passing: BTreeMap<Coalition, BTreeSet<&str>> = BTreeMap::new();
    for r in results {
        let c = players.coalition(&r.subset)?;
        let leaves: BTreeSet<&str> = r.passing.iter().map(String::as_str).collect();
        if let Some(bad) = leaves.iter().find(|l| !tree.has_leaf(l)) {
            return Err(Error::unknown("leaf", *bad));
        }
        if c.is_empty() && !leaves.is_empty() {
            return Err(Error::validation("the empty coalition cannot pass any leaf check"));
        }
        if let Some(prev) = passing.insert(c, leaves.clone()) {
            if prev != leaves {
                return Err(Error::validation(format!(
                    "conflicting results for coalition {}",
                    players.format(c)
                )));
            }
        }
    }
    let missing: Vec<String> = (1..1u64 << n)
        .map(Coalition::from_bits)
        .filter(|c| !passing.contains_key(c))
        .map(|c| players.format(c))
        .collect();
    if !missing.is_empty() {
        let shown: Vec<&str> = missing.iter().take(16).map(String::as_str).collect();
        let more = if missing.len() > shown.len() { format!(" and {} more", missing.len() - shown.len()) } else { String::new() };
        return Err(Error::validation(format!(
            "subset results do not cover {} coalition(s): {}{more}",
            missing.len(),
            shown.join(" ")
        )));
    }
    let denom = if normalized { BigInt::from(tree.leaf_count().max(1)) } else { BigInt::from(1) };
    CoalitionGame::from_fn(players, |c| {
        let count = passing.get(&c).map_or(0, BTreeSet::len);
        BigRational::new(BigInt::from(count), denom.clone())
    })
}
