//! Shapley values: exact subset formula, a permutation-enumeration oracle,
//! a seeded Monte-Carlo estimator, and an axiom checker.

use std::collections::BTreeMap;

use num::{BigInt, BigRational, One, Signed, ToPrimitive, Zero};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{Coalition, CoalitionGame, Numerators, PlayerSet, TABLE_CAP};
use crate::rational;

/// Largest game the permutation oracle will enumerate (9! orderings).
pub const ORACLE_CAP: usize = 9;

/// Sample indices handled per work unit by the Monte-Carlo estimator.
const MC_CHUNK: u64 = 256;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Method {
    ExactSubset,
    ExactPermutation,
    MonteCarlo { samples: u64, seed: u64 },
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Method::ExactSubset => write!(f, "exact-subset"),
            Method::ExactPermutation => write!(f, "exact-permutation"),
            Method::MonteCarlo { samples, seed } => write!(f, "monte-carlo(samples={samples}, seed={seed})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapleyResult {
    pub players: PlayerSet,
    #[serde(with = "rational::serde_vec")]
    pub phi: Vec<BigRational>,
    /// `phi_i / Σ phi`; absent when the total is zero.
    #[serde(with = "opt_vec")]
    pub shares: Option<Vec<BigRational>>,
    pub method: Method,
    /// Monte-Carlo only: standard error of each estimate (undefined for one sample).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub std_errors: Option<Vec<Option<f64>>>,
}

mod opt_vec {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<Vec<BigRational>>, s: S) -> std::result::Result<S::Ok, S::Error> {
        match v {
            Some(v) => rational::serde_vec::serialize(v, s),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<Vec<BigRational>>, D::Error> {
        let raw: Option<Vec<String>> = Option::deserialize(d)?;
        raw.map(|v| v.iter().map(|s| rational::parse_rational(s).map_err(serde::de::Error::custom)).collect())
            .transpose()
    }
}

impl ShapleyResult {
    fn new(players: PlayerSet, phi: Vec<BigRational>, method: Method) -> Self {
        let total: BigRational = phi.iter().sum();
        let shares = if total.is_zero() { None } else { Some(phi.iter().map(|p| p / &total).collect()) };
        ShapleyResult { players, phi, shares, method, std_errors: None }
    }

    pub fn total(&self) -> BigRational {
        self.phi.iter().sum()
    }

    pub fn phi_of(&self, id: &str) -> Option<&BigRational> {
        self.players.index_of(id).map(|i| &self.phi[i])
    }

    /// Space-separated φ values in player order, e.g. `1/2 1/2 1`.
    pub fn phi_line(&self) -> String {
        self.phi.iter().map(ToString::to_string).collect::<Vec<_>>().join(" ")
    }
}

fn factorials(n: usize) -> Vec<BigInt> {
    let mut f = vec![BigInt::one()];
    for k in 1..=n {
        let next = &f[k - 1] * BigInt::from(k);
        f.push(next);
    }
    f
}

/// `|S|!(n-|S|-1)!/n!` for `|S| = 0..n`.
fn subset_weights(n: usize) -> Vec<BigRational> {
    let f = factorials(n);
    (0..n).map(|k| BigRational::new(&f[k] * &f[n - k - 1], f[n].clone())).collect()
}

/// Subset mask over the other `n-1` players, expanded with a zero at bit `i`.
#[inline]
fn spread(m: u64, i: usize) -> u64 {
    let low = m & ((1u64 << i) - 1);
    ((m >> i) << (i + 1)) | low
}

pub fn shapley_exact(game: &CoalitionGame) -> Result<ShapleyResult> {
    shapley_exact_capped(game, TABLE_CAP)
}

/// Exact Shapley values by the weighted subset sum, computed on integer
/// numerators over the game's common denominator.
pub fn shapley_exact_capped(game: &CoalitionGame, cap: usize) -> Result<ShapleyResult> {
    let n = game.n();
    if n > cap.min(TABLE_CAP) {
        return Err(Error::Capacity(format!(
            "exact Shapley computation is capped at {} players (game has {n}); use the monte-carlo solver",
            cap.min(TABLE_CAP)
        )));
    }
    let table = game.to_table()?;
    let weights = subset_weights(n);
    let others = 1u64 << (n - 1);

    // Per player: Σ over subsets S of the others, bucketed by |S|, of v(S ∪ i) - v(S).
    let buckets: Vec<Vec<BigInt>> = match table.numerators() {
        Numerators::Small(nums) => (0..n)
            .into_par_iter()
            .map(|i| {
                let bit = 1u64 << i;
                let mut acc = vec![0i128; n];
                for m in 0..others {
                    let s = spread(m, i);
                    let d = nums[(s | bit) as usize] as i128 - nums[s as usize] as i128;
                    acc[m.count_ones() as usize] += d;
                }
                acc.into_iter().map(BigInt::from).collect()
            })
            .collect(),
        Numerators::Big(nums) => (0..n)
            .into_par_iter()
            .map(|i| {
                let bit = 1u64 << i;
                let mut acc = vec![BigInt::zero(); n];
                for m in 0..others {
                    let s = spread(m, i);
                    acc[m.count_ones() as usize] += &nums[(s | bit) as usize] - &nums[s as usize];
                }
                acc
            })
            .collect(),
    };

    let denom = BigRational::from_integer(table.denominator().clone());
    let phi = buckets
        .into_iter()
        .map(|acc| {
            let sum = acc
                .into_iter()
                .zip(&weights)
                .fold(BigRational::zero(), |s, (a, w)| s + w * BigRational::from_integer(a));
            sum / &denom
        })
        .collect();
    Ok(ShapleyResult::new(game.players().clone(), phi, Method::ExactSubset))
}

/// Average marginal contribution over all `n!` orderings. Independent of the
/// subset formula; used to cross-check it.
pub fn shapley_permutation_oracle(game: &CoalitionGame) -> Result<ShapleyResult> {
    let n = game.n();
    if n > ORACLE_CAP {
        return Err(Error::Capacity(format!(
            "permutation oracle is capped at {ORACLE_CAP} players (game has {n})"
        )));
    }
    // Integer numerators over the game's common denominator.
    let denom = game.denominator();
    let values: Vec<BigInt> = (0..1u64 << n)
        .map(|m| {
            let v = game.value(Coalition::from_bits(m));
            v.numer() * (&denom / v.denom())
        })
        .collect();
    let mut sums = vec![BigInt::zero(); n];
    let mut order: Vec<usize> = (0..n).collect();
    let mut visit = |order: &[usize]| {
        let mut prefix = 0u64;
        for &p in order {
            let next = prefix | 1 << p;
            sums[p] += &values[next as usize] - &values[prefix as usize];
            prefix = next;
        }
    };

    // Heap's algorithm, iterative.
    visit(&order);
    let mut c = vec![0usize; n];
    let mut i = 1;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                order.swap(0, i);
            } else {
                order.swap(c[i], i);
            }
            visit(&order);
            c[i] += 1;
            i = 1;
        } else {
            c[i] = 0;
            i += 1;
        }
    }

    let count = factorials(n).pop().expect("n! present") * &denom;
    let phi = sums.into_iter().map(|s| BigRational::new(s, count.clone())).collect();
    Ok(ShapleyResult::new(game.players().clone(), phi, Method::ExactPermutation))
}

/// The ordering used for Monte-Carlo sample `index`. Derived from `(seed, index)`
/// alone so any partition of indices across workers yields the same samples.
pub fn sample_permutation(n: usize, seed: u64, index: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order
}

enum Scaled<'a> {
    Small(&'a [i64]),
    Big(&'a [BigInt]),
    Rule(Vec<(Coalition, BigInt)>),
}

impl Scaled<'_> {
    fn at(&self, c: Coalition) -> BigInt {
        match self {
            Scaled::Small(v) => BigInt::from(v[c.bits() as usize]),
            Scaled::Big(v) => v[c.bits() as usize].clone(),
            Scaled::Rule(terms) => {
                terms.iter().filter(|(t, _)| t.is_subset_of(c)).fold(BigInt::zero(), |acc, (_, w)| acc + w)
            }
        }
    }
}

#[derive(Clone)]
struct Moments {
    sum: Vec<BigInt>,
    sum_sq: Vec<BigInt>,
}

impl Moments {
    fn zero(n: usize) -> Self {
        Moments { sum: vec![BigInt::zero(); n], sum_sq: vec![BigInt::zero(); n] }
    }

    fn merge(mut self, other: Moments) -> Moments {
        for (a, b) in self.sum.iter_mut().zip(other.sum) {
            *a += b;
        }
        for (a, b) in self.sum_sq.iter_mut().zip(other.sum_sq) {
            *a += b;
        }
        self
    }
}

/// Mean marginal contribution over `samples` seeded random orderings.
///
/// Each sample's marginals telescope to `v(N)`, so the estimates always sum to
/// `v(N)` exactly. Results depend only on `(seed, samples)`; `workers` only
/// sets the thread count (`None` uses the global pool).
pub fn shapley_monte_carlo(
    game: &CoalitionGame,
    samples: u64,
    seed: u64,
    workers: Option<usize>,
) -> Result<ShapleyResult> {
    if samples == 0 {
        return Err(Error::validation("monte-carlo needs at least one sample"));
    }
    let n = game.n();
    let table = if game.is_table() { Some(game.to_table()?) } else { None };
    let denom = game.denominator();
    let scaled = match &table {
        Some(t) => match t.numerators() {
            Numerators::Small(v) => Scaled::Small(v),
            Numerators::Big(v) => Scaled::Big(v),
        },
        None => Scaled::Rule(
            game.terms()
                .unwrap_or_default()
                .iter()
                .map(|(c, w)| (*c, w.numer() * (&denom / w.denom())))
                .collect(),
        ),
    };

    let run_chunk = |chunk: u64| {
        let mut m = Moments::zero(n);
        let start = chunk * MC_CHUNK;
        let end = (start + MC_CHUNK).min(samples);
        for index in start..end {
            let mut prefix = Coalition::EMPTY;
            let mut prev = BigInt::zero();
            for p in sample_permutation(n, seed, index) {
                prefix = prefix.with(p);
                let cur = scaled.at(prefix);
                let d = &cur - &prev;
                m.sum_sq[p] += &d * &d;
                m.sum[p] += d;
                prev = cur;
            }
        }
        m
    };
    let chunks = samples.div_ceil(MC_CHUNK);
    let compute = || (0..chunks).into_par_iter().map(run_chunk).reduce(|| Moments::zero(n), Moments::merge);
    let moments = match workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w.max(1))
            .build()
            .map_err(|e| Error::Capacity(format!("cannot start worker pool: {e}")))?
            .install(compute),
        None => compute(),
    };

    let m = BigInt::from(samples);
    let scale = BigRational::from_integer(&m * &denom);
    let phi: Vec<BigRational> = moments.sum.iter().map(|s| BigRational::from_integer(s.clone()) / &scale).collect();
    let std_errors = moments
        .sum
        .iter()
        .zip(&moments.sum_sq)
        .map(|(s, sq)| {
            if samples < 2 {
                return None;
            }
            // Sample variance of the scaled marginals, then SE of the mean, unscaled.
            let s = BigRational::from_integer(s.clone());
            let sq = BigRational::from_integer(sq.clone());
            let mq = BigRational::from_integer(m.clone());
            let var = (sq - &s * &s / &mq) / (&mq - BigRational::one());
            let d = BigRational::from_integer(denom.clone());
            let se2 = var / (&mq * &d * &d);
            Some(rational::to_f64(&se2.abs()).sqrt())
        })
        .collect();
    let mut result = ShapleyResult::new(game.players().clone(), phi, Method::MonteCarlo { samples, seed });
    result.std_errors = Some(std_errors);
    Ok(result)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EfficiencyCheck {
    pub pass: bool,
    /// `Σ phi - v(N)`.
    #[serde(with = "rational::serde_str")]
    pub residual: BigRational,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinearityCheck {
    pub pass: bool,
    /// Players where `phi(v+w) != phi(v) + phi(w)`.
    pub mismatched: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AxiomReport {
    pub efficiency: EfficiencyCheck,
    /// Interchangeable pairs that received different values.
    pub symmetry_violations: Vec<(String, String)>,
    /// Players whose marginal contribution is zero everywhere.
    pub null_players: Vec<String>,
    /// Null players that received a nonzero value.
    pub null_player_violations: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub linearity: Option<LinearityCheck>,
}

impl AxiomReport {
    pub fn all_pass(&self) -> bool {
        self.efficiency.pass
            && self.symmetry_violations.is_empty()
            && self.null_player_violations.is_empty()
            && self.linearity.as_ref().is_none_or(|l| l.pass)
    }

    pub fn lines(&self) -> Vec<String> {
        let verdict = |ok: bool| if ok { "pass" } else { "FAIL" };
        let mut out = vec![format!(
            "efficiency: {} (residual {})",
            verdict(self.efficiency.pass),
            self.efficiency.residual
        )];
        out.push(if self.symmetry_violations.is_empty() {
            "symmetry: pass".to_string()
        } else {
            let pairs: Vec<String> = self.symmetry_violations.iter().map(|(a, b)| format!("({a},{b})")).collect();
            format!("symmetry: FAIL {}", pairs.join(" "))
        });
        let nulls = if self.null_players.is_empty() { "none".to_string() } else { self.null_players.join(",") };
        out.push(if self.null_player_violations.is_empty() {
            format!("null player: pass (null players: {nulls})")
        } else {
            format!("null player: FAIL {}", self.null_player_violations.join(","))
        });
        if let Some(l) = &self.linearity {
            out.push(if l.pass {
                "linearity: pass".to_string()
            } else {
                format!("linearity: FAIL {}", l.mismatched.join(","))
            });
        }
        out
    }
}

type Structure = (Vec<(usize, usize)>, Vec<usize>);

/// Interchangeable pairs and null players of a game, found from its table or
/// (for rule-backed games) from its unanimity decomposition.
fn structure(game: &CoalitionGame) -> Result<Structure> {
    let n = game.n();
    if let Some(terms) = game.terms() {
        // Unanimity coefficients are unique, so the game is invariant under a
        // swap iff its coefficient map is, and a player is null iff it appears
        // in no term.
        let map: BTreeMap<Coalition, &BigRational> = terms.iter().map(|(c, w)| (*c, w)).collect();
        let swap = |c: Coalition, i: usize, j: usize| match (c.contains(i), c.contains(j)) {
            (true, false) => c.without(i).with(j),
            (false, true) => c.without(j).with(i),
            _ => c,
        };
        let mut pairs = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if terms.iter().all(|(c, w)| map.get(&swap(*c, i, j)) == Some(&w)) {
                    pairs.push((i, j));
                }
            }
        }
        let nulls = (0..n).filter(|&i| terms.iter().all(|(c, _)| !c.contains(i))).collect();
        return Ok((pairs, nulls));
    }

    let table = game.to_table()?;
    let same = |a: u64, b: u64| match table.numerators() {
        Numerators::Small(v) => v[a as usize] == v[b as usize],
        Numerators::Big(v) => v[a as usize] == v[b as usize],
    };
    let all = 1u64 << n;
    let candidates: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let pairs = candidates
        .into_par_iter()
        .filter(|&(i, j)| {
            let (bi, bj) = (1u64 << i, 1u64 << j);
            (0..all).filter(|s| s & (bi | bj) == 0).all(|s| same(s | bi, s | bj))
        })
        .collect();
    let nulls = (0..n)
        .into_par_iter()
        .filter(|&i| {
            let bi = 1u64 << i;
            (0..all).filter(|s| s & bi == 0).all(|s| same(s | bi, s))
        })
        .collect();
    Ok((pairs, nulls))
}

/// Checks `result` against the four Shapley axioms on `game`. Linearity is
/// checked only when a second game `other` is supplied.
pub fn check_axioms(
    game: &CoalitionGame,
    result: &ShapleyResult,
    other: Option<&CoalitionGame>,
) -> Result<AxiomReport> {
    if result.players != *game.players() {
        return Err(Error::validation("result and game have different player sets"));
    }
    let ids = game.players().ids();
    let residual = result.total() - game.grand_value();
    let efficiency = EfficiencyCheck { pass: residual.is_zero(), residual };

    let (pairs, nulls) = structure(game)?;
    let symmetry_violations = pairs
        .into_iter()
        .filter(|&(i, j)| result.phi[i] != result.phi[j])
        .map(|(i, j)| (ids[i].clone(), ids[j].clone()))
        .collect();
    let null_player_violations = nulls.iter().filter(|&&i| !result.phi[i].is_zero()).map(|&i| ids[i].clone()).collect();
    let null_players = nulls.into_iter().map(|i| ids[i].clone()).collect();

    let linearity = match other {
        None => None,
        Some(w) => {
            let combined = shapley_exact(&game.add(w)?)?;
            let phi_w = shapley_exact(w)?;
            let mismatched: Vec<String> = (0..game.n())
                .filter(|&i| combined.phi[i] != &result.phi[i] + &phi_w.phi[i])
                .map(|i| ids[i].clone())
                .collect();
            Some(LinearityCheck { pass: mismatched.is_empty(), mismatched })
        }
    };

    Ok(AxiomReport { efficiency, symmetry_violations, null_players, null_player_violations, linearity })
}

/// Largest absolute deviation between two results, as `f64`. Test helper.
pub fn max_abs_deviation(a: &ShapleyResult, b: &ShapleyResult) -> f64 {
    a.phi.iter().zip(&b.phi).map(|(x, y)| (x - y).abs().to_f64().unwrap_or(f64::INFINITY)).fold(0.0, f64::max)
}
