//! Coalition games over a fixed, ordered player set.
//!
//! A coalition is a bitmask over the player ordering. Games are held either as
//! a full value table (one exact value per subset, stored as integer
//! numerators over a shared denominator) or as a rule: a weighted sum of
//! unanimity games. Rules scale past the table cap and are what pull-request
//! and leaf-coverage attribution produce naturally.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num::{BigInt, BigRational, Integer, One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rational;
use crate::risk::ThreatTree;

/// Hard limit imposed by the `u64` coalition encoding.
pub const MAX_PLAYERS: usize = 64;

/// Largest player count for which full value tables are built.
pub const TABLE_CAP: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Coalition(u64);

impl Coalition {
    pub const EMPTY: Coalition = Coalition(0);

    pub fn from_bits(bits: u64) -> Self {
        Coalition(bits)
    }

    pub fn full(n: usize) -> Self {
        if n >= 64 {
            Coalition(u64::MAX)
        } else {
            Coalition((1u64 << n) - 1)
        }
    }

    pub fn bits(self) -> u64 {
        self.0
    }

    pub fn contains(self, player: usize) -> bool {
        self.0 >> player & 1 == 1
    }

    pub fn with(self, player: usize) -> Self {
        Coalition(self.0 | 1 << player)
    }

    pub fn without(self, player: usize) -> Self {
        Coalition(self.0 & !(1 << player))
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn is_subset_of(self, other: Coalition) -> bool {
        self.0 & other.0 == self.0
    }

    pub fn union(self, other: Coalition) -> Self {
        Coalition(self.0 | other.0)
    }

    pub fn members(self) -> impl Iterator<Item = usize> {
        let bits = self.0;
        (0..64).filter(move |i| bits >> i & 1 == 1)
    }
}

/// Ordered list of unique player ids. The order fixes the bit assigned to each player.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct PlayerSet {
    ids: Vec<String>,
}

impl TryFrom<Vec<String>> for PlayerSet {
    type Error = Error;
    fn try_from(ids: Vec<String>) -> Result<Self> {
        PlayerSet::new(ids)
    }
}

impl From<PlayerSet> for Vec<String> {
    fn from(p: PlayerSet) -> Self {
        p.ids
    }
}

impl PlayerSet {
    pub fn new<S: Into<String>>(ids: impl IntoIterator<Item = S>) -> Result<Self> {
        let ids: Vec<String> = ids.into_iter().map(Into::into).collect();
        if ids.is_empty() {
            return Err(Error::validation("player set is empty"));
        }
        if ids.len() > MAX_PLAYERS {
            return Err(Error::Capacity(format!("{} players exceeds the limit of {MAX_PLAYERS}", ids.len())));
        }
        let mut seen = BTreeSet::new();
        for id in &ids {
            if id.trim().is_empty() {
                return Err(Error::validation("empty player id"));
            }
            if !seen.insert(id.as_str()) {
                return Err(Error::validation(format!("duplicate player id {id:?}")));
            }
        }
        Ok(PlayerSet { ids })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|p| p == id)
    }

    pub fn coalition<S: AsRef<str>>(&self, ids: impl IntoIterator<Item = S>) -> Result<Coalition> {
        let mut c = Coalition::EMPTY;
        for id in ids {
            let id = id.as_ref();
            let i = self.index_of(id).ok_or_else(|| Error::unknown("player", id))?;
            c = c.with(i);
        }
        Ok(c)
    }

    pub fn ids_of(&self, c: Coalition) -> Vec<&str> {
        c.members().take_while(|&i| i < self.len()).map(|i| self.ids[i].as_str()).collect()
    }

    pub fn full(&self) -> Coalition {
        Coalition::full(self.len())
    }

    pub fn format(&self, c: Coalition) -> String {
        format!("{{{}}}", self.ids_of(c).join(","))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum Numerators {
    Small(Vec<i64>),
    Big(Vec<BigInt>),
}

/// Exact values for all `2^n` coalitions as `nums[mask] / denom`.
///
/// `denom` is the lcm of the reduced value denominators, so two tables holding
/// the same values have identical representations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValueTable {
    denom: BigInt,
    nums: Numerators,
}

impl ValueTable {
    fn from_values(values: &[BigRational]) -> Self {
        let denom = values.iter().fold(BigInt::one(), |acc, v| acc.lcm(v.denom()));
        let nums = values.iter().map(|v| v.numer() * (&denom / v.denom())).collect();
        ValueTable::from_big(denom, nums)
    }

    fn from_big(denom: BigInt, nums: Vec<BigInt>) -> Self {
        let small: Option<Vec<i64>> = nums.iter().map(ToPrimitive::to_i64).collect();
        let nums = match small {
            Some(s) => Numerators::Small(s),
            None => Numerators::Big(nums),
        };
        ValueTable { denom, nums }.reduced()
    }

    // Divide out any factor shared by the denominator and every numerator.
    fn reduced(self) -> Self {
        let mut g = self.denom.clone();
        match &self.nums {
            Numerators::Small(v) => {
                for x in v {
                    if g.is_one() {
                        break;
                    }
                    g = g.gcd(&BigInt::from(*x));
                }
            }
            Numerators::Big(v) => {
                for x in v {
                    if g.is_one() {
                        break;
                    }
                    g = g.gcd(x);
                }
            }
        }
        if g.is_one() {
            return self;
        }
        let denom = &self.denom / &g;
        let nums = match self.nums {
            Numerators::Small(v) => {
                let g = g.to_i64().expect("gcd divides an i64");
                Numerators::Small(v.into_iter().map(|x| x / g).collect())
            }
            Numerators::Big(v) => {
                let v: Vec<BigInt> = v.into_iter().map(|x| x / &g).collect();
                return ValueTable::from_big(denom, v);
            }
        };
        ValueTable { denom, nums }
    }

    pub fn len(&self) -> usize {
        match &self.nums {
            Numerators::Small(v) => v.len(),
            Numerators::Big(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn denominator(&self) -> &BigInt {
        &self.denom
    }

    pub fn numerator(&self, c: Coalition) -> BigInt {
        match &self.nums {
            Numerators::Small(v) => BigInt::from(v[c.bits() as usize]),
            Numerators::Big(v) => v[c.bits() as usize].clone(),
        }
    }

    pub fn value(&self, c: Coalition) -> BigRational {
        BigRational::new(self.numerator(c), self.denom.clone())
    }

    pub(crate) fn numerators(&self) -> &Numerators {
        &self.nums
    }
}

#[derive(Debug, Clone)]
enum Repr {
    Table(ValueTable),
    /// Σ weight · u_T, where u_T(S) = 1 iff T ⊆ S. Terms are canonical:
    /// sorted by coalition, merged, no zero weights, no empty coalitions.
    Rule(Vec<(Coalition, BigRational)>),
}

/// How `game_from_table` treats subsets missing from the entry list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MissingEntries {
    #[default]
    Error,
    Zero,
}

/// Value function `v` over subsets of a player set, with `v(∅) = 0`.
#[derive(Debug, Clone)]
pub struct CoalitionGame {
    players: PlayerSet,
    repr: Repr,
}

impl PartialEq for CoalitionGame {
    fn eq(&self, other: &Self) -> bool {
        if self.players != other.players {
            return false;
        }
        match (&self.repr, &other.repr) {
            (Repr::Rule(a), Repr::Rule(b)) => a == b,
            (Repr::Table(a), Repr::Table(b)) => a == b,
            _ => match (self.to_table(), other.to_table()) {
                (Ok(a), Ok(b)) => a == b,
                _ => false,
            },
        }
    }
}

fn check_table_cap(n: usize) -> Result<()> {
    if n > TABLE_CAP {
        return Err(Error::Capacity(format!(
            "{n} players exceeds the value-table cap of {TABLE_CAP}; use a rule-backed game with the Monte-Carlo solver"
        )));
    }
    Ok(())
}

fn canonical_terms(terms: impl IntoIterator<Item = (Coalition, BigRational)>) -> Vec<(Coalition, BigRational)> {
    let mut merged: BTreeMap<Coalition, BigRational> = BTreeMap::new();
    for (c, w) in terms {
        *merged.entry(c).or_insert_with(BigRational::zero) += w;
    }
    merged.into_iter().filter(|(_, w)| !w.is_zero()).collect()
}

impl CoalitionGame {
    /// Full table from a value function. `v(∅)` must be zero.
    pub fn from_fn(players: PlayerSet, v: impl Fn(Coalition) -> BigRational) -> Result<Self> {
        let n = players.len();
        check_table_cap(n)?;
        let values: Vec<BigRational> = (0..1u64 << n).map(|m| v(Coalition(m))).collect();
        if !values[0].is_zero() {
            return Err(Error::validation(format!("v(∅) must be 0, got {}", values[0])));
        }
        Ok(CoalitionGame { players, repr: Repr::Table(ValueTable::from_values(&values)) })
    }

    pub fn zero(players: PlayerSet) -> Self {
        CoalitionGame { players, repr: Repr::Rule(Vec::new()) }
    }

    /// Weighted sum of unanimity games. Empty coalitions are rejected because
    /// `u_∅` would give `v(∅) = 1`.
    pub fn unanimity_sum(players: PlayerSet, terms: Vec<(Coalition, BigRational)>) -> Result<Self> {
        let full = players.full();
        for (c, _) in &terms {
            if c.is_empty() {
                return Err(Error::validation("unanimity term over the empty coalition"));
            }
            if !c.is_subset_of(full) {
                return Err(Error::unknown("player bit", format!("{:#x}", c.bits() & !full.bits())));
            }
        }
        Ok(CoalitionGame { players, repr: Repr::Rule(canonical_terms(terms)) })
    }

    pub fn players(&self) -> &PlayerSet {
        &self.players
    }

    pub fn n(&self) -> usize {
        self.players.len()
    }

    pub fn is_table(&self) -> bool {
        matches!(self.repr, Repr::Table(_))
    }

    /// Unanimity terms when rule-backed.
    pub fn terms(&self) -> Option<&[(Coalition, BigRational)]> {
        match &self.repr {
            Repr::Rule(t) => Some(t),
            Repr::Table(_) => None,
        }
    }

    pub fn value(&self, c: Coalition) -> BigRational {
        debug_assert!(c.is_subset_of(self.players.full()));
        match &self.repr {
            Repr::Table(t) => t.value(c),
            Repr::Rule(terms) => {
                terms.iter().filter(|(t, _)| t.is_subset_of(c)).fold(BigRational::zero(), |acc, (_, w)| acc + w)
            }
        }
    }

    /// `v(S)` for a coalition given by player ids.
    pub fn evaluate<S: AsRef<str>>(&self, ids: impl IntoIterator<Item = S>) -> Result<BigRational> {
        Ok(self.value(self.players.coalition(ids)?))
    }

    pub fn grand_value(&self) -> BigRational {
        self.value(self.players.full())
    }

    /// Common denominator such that `value(c) * denominator()` is an integer for every `c`.
    pub fn denominator(&self) -> BigInt {
        match &self.repr {
            Repr::Table(t) => t.denom.clone(),
            Repr::Rule(terms) => terms.iter().fold(BigInt::one(), |acc, (_, w)| acc.lcm(w.denom())),
        }
    }

    /// Materialized copy of the values. Fails above the table cap.
    pub fn to_table(&self) -> Result<ValueTable> {
        match &self.repr {
            Repr::Table(t) => Ok(t.clone()),
            Repr::Rule(terms) => {
                let n = self.n();
                check_table_cap(n)?;
                let denom = self.denominator();
                let weights: Vec<(u64, BigInt)> = terms
                    .iter()
                    .map(|(c, w)| (c.bits(), w.numer() * (&denom / w.denom())))
                    .collect();
                let total_abs = weights.iter().fold(BigInt::zero(), |acc, (_, w)| acc + w.abs());
                let size = 1usize << n;
                let table = if total_abs.to_i64().is_some() {
                    let mut f = vec![0i64; size];
                    for (m, w) in &weights {
                        f[*m as usize] += w.to_i64().expect("bounded by total");
                    }
                    subset_sums(&mut f, n);
                    ValueTable { denom, nums: Numerators::Small(f) }.reduced()
                } else {
                    let mut f = vec![BigInt::zero(); size];
                    for (m, w) in weights {
                        f[m as usize] += w;
                    }
                    subset_sums(&mut f, n);
                    ValueTable::from_big(denom, f)
                };
                Ok(table)
            }
        }
    }

    /// Same game held as a full table.
    pub fn materialize(&self) -> Result<CoalitionGame> {
        Ok(CoalitionGame { players: self.players.clone(), repr: Repr::Table(self.to_table()?) })
    }

    /// Pointwise sum. Both games must share the same ordered player set.
    pub fn add(&self, other: &CoalitionGame) -> Result<CoalitionGame> {
        if self.players != other.players {
            return Err(Error::validation("cannot add games over different player sets"));
        }
        if let (Repr::Rule(a), Repr::Rule(b)) = (&self.repr, &other.repr) {
            let terms = canonical_terms(a.iter().chain(b.iter()).cloned());
            return Ok(CoalitionGame { players: self.players.clone(), repr: Repr::Rule(terms) });
        }
        let (a, b) = (self.to_table()?, other.to_table()?);
        let denom = a.denom.lcm(&b.denom);
        let (fa, fb) = (&denom / &a.denom, &denom / &b.denom);
        let nums = (0..a.len() as u64)
            .map(|m| a.numerator(Coalition(m)) * &fa + b.numerator(Coalition(m)) * &fb)
            .collect();
        Ok(CoalitionGame { players: self.players.clone(), repr: Repr::Table(ValueTable::from_big(denom, nums)) })
    }

    /// Pointwise scaling by `c`.
    pub fn scale(&self, c: &BigRational) -> CoalitionGame {
        let repr = match &self.repr {
            Repr::Rule(terms) => Repr::Rule(canonical_terms(terms.iter().map(|(t, w)| (*t, w * c)))),
            Repr::Table(t) => {
                let values: Vec<BigRational> = (0..t.len() as u64).map(|m| t.value(Coalition(m)) * c).collect();
                Repr::Table(ValueTable::from_values(&values))
            }
        };
        CoalitionGame { players: self.players.clone(), repr }
    }

    /// Same game under a new player ordering.
    pub fn reorder<S: AsRef<str>>(&self, order: &[S]) -> Result<CoalitionGame> {
        let players = PlayerSet::new(order.iter().map(|s| s.as_ref().to_string()))?;
        if players.len() != self.n() {
            return Err(Error::validation("reordering must list every player exactly once"));
        }
        // old index -> new index
        let mut map = Vec::with_capacity(self.n());
        for id in self.players.ids() {
            map.push(players.index_of(id).ok_or_else(|| Error::unknown("player", id.clone()))?);
        }
        let remap = |c: Coalition| c.members().fold(Coalition::EMPTY, |acc, i| acc.with(map[i]));
        match &self.repr {
            Repr::Rule(terms) => {
                CoalitionGame::unanimity_sum(players, terms.iter().map(|(t, w)| (remap(*t), w.clone())).collect())
            }
            Repr::Table(t) => {
                let mut values = vec![BigRational::zero(); t.len()];
                for m in 0..t.len() as u64 {
                    values[remap(Coalition(m)).bits() as usize] = t.value(Coalition(m));
                }
                Ok(CoalitionGame { players, repr: Repr::Table(ValueTable::from_values(&values)) })
            }
        }
    }

    /// All `(coalition, value)` pairs ordered by size, then by bitmask.
    pub fn rows(&self) -> Result<Vec<(Coalition, BigRational)>> {
        let table = self.to_table()?;
        let mut masks: Vec<u64> = (0..table.len() as u64).collect();
        masks.sort_by_key(|m| (m.count_ones(), *m));
        Ok(masks.into_iter().map(|m| (Coalition(m), table.value(Coalition(m)))).collect())
    }
}

/// In-place zeta transform: `f[S] <- Σ_{T ⊆ S} f[T]`.
fn subset_sums<T: Clone + for<'a> std::ops::AddAssign<&'a T>>(f: &mut [T], n: usize) {
    for bit in 0..n {
        let step = 1usize << bit;
        for s in 0..f.len() {
            if s & step != 0 {
                let lower = f[s ^ step].clone();
                f[s] += &lower;
            }
        }
    }
}

/// One row of a coalition-table document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableEntry {
    pub coalition: Vec<String>,
    #[serde(with = "rational::serde_str")]
    pub value: BigRational,
}

pub fn parse_table_document(text: &str) -> Result<Vec<TableEntry>> {
    serde_json::from_str(text).map_err(|source| Error::Json { context: "coalition table".into(), source })
}

/// Game from explicit coalition values.
pub fn game_from_table(players: PlayerSet, entries: &[TableEntry], missing: MissingEntries) -> Result<CoalitionGame> {
    let n = players.len();
    check_table_cap(n)?;
    let mut values: Vec<Option<BigRational>> = vec![None; 1 << n];
    for e in entries {
        let c = players.coalition(&e.coalition)?;
        let slot = &mut values[c.bits() as usize];
        if slot.is_some() {
            return Err(Error::validation(format!("duplicate entry for coalition {}", players.format(c))));
        }
        *slot = Some(e.value.clone());
    }
    match &values[0] {
        Some(v) if !v.is_zero() => return Err(Error::validation(format!("v(∅) must be 0, got {v}"))),
        _ => values[0] = Some(BigRational::zero()),
    }
    let missing_list: Vec<String> = values
        .iter()
        .enumerate()
        .filter(|(_, v)| v.is_none())
        .map(|(m, _)| players.format(Coalition(m as u64)))
        .collect();
    if !missing_list.is_empty() && missing == MissingEntries::Error {
        return Err(Error::validation(format!("coalition table is missing {}", missing_list.join(" "))));
    }
    let values: Vec<BigRational> = values.into_iter().map(|v| v.unwrap_or_else(BigRational::zero)).collect();
    Ok(CoalitionGame { players, repr: Repr::Table(ValueTable::from_values(&values)) })
}

/// `u_P`: worth 1 on every superset of `required`, 0 elsewhere.
pub fn unanimity_game<S: AsRef<str>>(players: PlayerSet, required: &[S]) -> Result<CoalitionGame> {
    let c = players.coalition(required)?;
    if c.is_empty() {
        return Err(Error::validation("unanimity game needs a nonempty required set"));
    }
    CoalitionGame::unanimity_sum(players, vec![(c, BigRational::one())])
}

/// Per leaf condition: the authors who must all be present for it to count.
/// An empty author set marks a leaf nobody addressed.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AttributionMap {
    pub leaves: BTreeMap<String, BTreeSet<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributionEntry {
    pub leaf: String,
    pub authors: Vec<String>,
}

impl AttributionMap {
    pub fn from_entries(entries: Vec<AttributionEntry>) -> Result<Self> {
        let mut leaves = BTreeMap::new();
        for e in entries {
            if leaves.insert(e.leaf.clone(), e.authors.into_iter().collect()).is_some() {
                return Err(Error::validation(format!("leaf {:?} attributed twice", e.leaf)));
            }
        }
        Ok(AttributionMap { leaves })
    }

    pub fn to_entries(&self) -> Vec<AttributionEntry> {
        self.leaves
            .iter()
            .map(|(leaf, authors)| AttributionEntry { leaf: leaf.clone(), authors: authors.iter().cloned().collect() })
            .collect()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let entries: Vec<AttributionEntry> =
            serde_json::from_str(text).map_err(|source| Error::Json { context: "attribution".into(), source })?;
        AttributionMap::from_entries(entries)
    }

    pub fn authors(&self) -> BTreeSet<&str> {
        self.leaves.values().flatten().map(String::as_str).collect()
    }
}

/// Leaf-coverage game: `v(S)` counts the leaves whose (nonempty) author set is
/// contained in `S`, divided by the total leaf count when `normalized`.
pub fn leaf_coverage_game(
    tree: &ThreatTree,
    attribution: &AttributionMap,
    players: PlayerSet,
    normalized: bool,
) -> Result<CoalitionGame> {
    let mut unknown: Vec<&str> = attribution.leaves.keys().filter(|l| !tree.has_leaf(l)).map(String::as_str).collect();
    if !unknown.is_empty() {
        unknown.sort();
        return Err(Error::unknown("leaf", unknown.join(", ")));
    }
    let leaf_count = tree.leaf_count();
    let weight = if normalized {
        if leaf_count == 0 {
            return Err(Error::validation("threat tree has no leaves to normalize by"));
        }
        BigRational::new(BigInt::one(), BigInt::from(leaf_count))
    } else {
        BigRational::one()
    };
    let mut terms = Vec::new();
    for authors in attribution.leaves.values() {
        if authors.is_empty() {
            continue;
        }
        terms.push((players.coalition(authors)?, weight.clone()));
    }
    CoalitionGame::unanimity_sum(players, terms)
}

impl fmt::Display for CoalitionGame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.rows() {
            Ok(rows) => {
                for (c, v) in rows {
                    writeln!(f, "{}\t{}", self.players.format(c), v)?;
                }
                Ok(())
            }
            Err(_) => {
                for (c, w) in self.terms().unwrap_or_default() {
                    writeln!(f, "{} * u{}", w, self.players.format(*c))?;
                }
                Ok(())
            }
        }
    }
}
