//! Budget derivation from the risk delta and proportional allocation of that
//! budget over Shapley shares, with an explicit rounding audit.

use std::fmt;

use num::{BigInt, BigRational, Signed, ToPrimitive};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interval::Interval;
use crate::rational;
use crate::shapley::{AxiomReport, Method, ShapleyResult};

fn default_exponent() -> u32 {
    2
}

/// Non-negative amount in minor units of `currency` (`exponent` decimal digits).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Money {
    pub minor: u64,
    pub currency: String,
    #[serde(default = "default_exponent")]
    pub exponent: u32,
}

impl Money {
    pub fn new(minor: u64, currency: impl Into<String>) -> Self {
        Money { minor, currency: currency.into(), exponent: 2 }
    }

    pub fn major(&self) -> BigRational {
        BigRational::new(BigInt::from(self.minor), num::pow(BigInt::from(10), self.exponent as usize))
    }

    /// Decimal amount without the currency code, e.g. `12401.08`.
    pub fn amount_string(&self) -> String {
        rational::to_decimal_string(&self.major(), self.exponent as usize)
    }
}

impl fmt::Display for Money {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.amount_string(), self.currency)
    }
}

/// Which point of the delta interval the budget is taken from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Anchor {
    Lower,
    Upper,
    Midpoint,
    Explicit(#[serde(with = "rational::serde_str")] BigRational),
}

impl fmt::Display for Anchor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Anchor::Lower => write!(f, "lower"),
            Anchor::Upper => write!(f, "upper"),
            Anchor::Midpoint => write!(f, "midpoint"),
            Anchor::Explicit(v) => write!(f, "explicit({v})"),
        }
    }
}

/// `fraction × anchor(delta)`, floored to whole minor units.
pub fn compute_budget(
    delta: &Interval,
    fraction: &BigRational,
    anchor: &Anchor,
    currency: &str,
    exponent: u32,
) -> Result<Money> {
    if fraction.is_negative() || fraction > &BigRational::from_integer(1.into()) {
        return Err(Error::validation(format!("budget fraction {fraction} must lie in [0, 1]")));
    }
    if delta.lo().is_negative() {
        return Err(Error::validation(format!("risk delta {delta} has a negative lower bound")));
    }
    let point = match anchor {
        Anchor::Lower => delta.lo().clone(),
        Anchor::Upper => delta.hi().clone(),
        Anchor::Midpoint => delta.midpoint(),
        Anchor::Explicit(v) => {
            if !delta.contains(v) {
                return Err(Error::OutOfRange { scale: format!("risk delta {delta}"), value: v.to_string() });
            }
            v.clone()
        }
    };
    let unit = BigRational::from_integer(num::pow(BigInt::from(10), exponent as usize));
    let minor = rational::floor_int(&(fraction * point * unit));
    let minor = minor.to_u64().ok_or_else(|| Error::Capacity(format!("budget of {minor} minor units overflows")))?;
    Ok(Money { minor, currency: currency.to_string(), exponent })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RoundingMode {
    /// Each payment rounded half-up on its own; the total may miss the budget.
    #[default]
    PerRecipient,
    /// Floor everything, then hand leftover units to the largest remainders.
    LargestRemainder,
}

impl fmt::Display for RoundingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RoundingMode::PerRecipient => write!(f, "per-recipient"),
            RoundingMode::LargestRemainder => write!(f, "largest-remainder"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PayoutEntry {
    pub player: String,
    #[serde(with = "rational::serde_str")]
    pub phi: BigRational,
    #[serde(with = "rational::serde_opt")]
    pub share: Option<BigRational>,
    pub payment: Money,
}

/// How the budget was derived from the risk assessment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BudgetBasis {
    pub delta: Interval,
    #[serde(with = "rational::serde_str")]
    pub fraction: BigRational,
    pub anchor: Anchor,
    /// Threats whose risk reduction was clamped at zero.
    #[serde(default)]
    pub clamped_threats: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub game_source: String,
    pub method: Method,
    pub axioms: Option<AxiomReport>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PayoutReport {
    pub budget: Money,
    pub basis: Option<BudgetBasis>,
    pub rounding: RoundingMode,
    pub entries: Vec<PayoutEntry>,
    /// `Σ payments - budget`, in minor units.
    pub residual: i64,
    pub provenance: Option<Provenance>,
    #[serde(default)]
    pub notices: Vec<String>,
}

impl PayoutReport {
    pub fn payment_of(&self, player: &str) -> Option<&Money> {
        self.entries.iter().find(|e| e.player == player).map(|e| &e.payment)
    }

    pub fn total_paid(&self) -> u64 {
        self.entries.iter().map(|e| e.payment.minor).sum()
    }
}

/// Splits `budget` proportionally to the normalized Shapley values in `result`.
pub fn allocate_payments(result: &ShapleyResult, budget: &Money, rounding: RoundingMode) -> Result<PayoutReport> {
    let ids = result.players.ids();
    if let Some(i) = result.phi.iter().position(Signed::is_negative) {
        return Err(Error::validation(format!(
            "negative contribution unsupported: player {:?} has phi = {}",
            ids[i], result.phi[i]
        )));
    }
    let mut notices = Vec::new();
    let n = ids.len();
    let budget_minor = BigInt::from(budget.minor);

    let payments: Vec<u64> = match &result.shares {
        None => {
            notices.push("total Shapley value is zero; nobody is paid".to_string());
            vec![0; n]
        }
        Some(shares) => {
            let raw: Vec<BigRational> =
                shares.iter().map(|s| s * BigRational::from_integer(budget_minor.clone())).collect();
            let mut paid: Vec<BigInt> = match rounding {
                RoundingMode::PerRecipient => raw.iter().map(rational::round_half_up).collect(),
                RoundingMode::LargestRemainder => raw.iter().map(rational::floor_int).collect(),
            };
            if rounding == RoundingMode::LargestRemainder {
                let floored: BigInt = paid.iter().sum();
                let leftover = (&budget_minor - floored).to_usize().unwrap_or(0);
                let mut order: Vec<usize> = (0..n).collect();
                let remainder = |i: usize| &raw[i] - BigRational::from_integer(paid[i].clone());
                let rems: Vec<BigRational> = order.iter().map(|&i| remainder(i)).collect();
                // Descending remainder, ties to the earlier player.
                order.sort_by(|&a, &b| rems[b].cmp(&rems[a]).then(a.cmp(&b)));
                for &i in order.iter().take(leftover) {
                    paid[i] += 1;
                }
            }
            paid.into_iter()
                .map(|p| p.to_u64().ok_or_else(|| Error::Capacity("payment overflows".into())))
                .collect::<Result<_>>()?
        }
    };

    let total: u64 = payments.iter().sum();
    let residual = total as i64 - budget.minor as i64;
    if residual != 0 {
        notices.push(format!("payments differ from the budget by {residual} minor units"));
    }
    let entries = ids
        .iter()
        .enumerate()
        .map(|(i, id)| PayoutEntry {
            player: id.clone(),
            phi: result.phi[i].clone(),
            share: result.shares.as_ref().map(|s| s[i].clone()),
            payment: Money { minor: payments[i], currency: budget.currency.clone(), exponent: budget.exponent },
        })
        .collect();
    Ok(PayoutReport {
        budget: budget.clone(),
        basis: None,
        rounding,
        entries,
        residual,
        provenance: None,
        notices,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    #[default]
    Json,
    Csv,
    Markdown,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            other => Err(Error::validation(format!("unknown report format {other:?}"))),
        }
    }
}

pub fn parse_report(text: &str) -> Result<PayoutReport> {
    serde_json::from_str(text).map_err(|source| Error::Json { context: "payout report".into(), source })
}

pub fn render_report(report: &PayoutReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(report).expect("report serializes");
            s.push('\n');
            s
        }
        ReportFormat::Csv => render_csv(report),
        ReportFormat::Markdown => render_markdown(report),
    }
}

fn render_csv(report: &PayoutReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["player", "phi", "share", "payment_minor", "payment", "currency"]).expect("in-memory write");
    for e in &report.entries {
        let share = e.share.as_ref().map(ToString::to_string).unwrap_or_default();
        w.write_record([
            e.player.as_str(),
            &e.phi.to_string(),
            &share,
            &e.payment.minor.to_string(),
            &e.payment.amount_string(),
            &e.payment.currency,
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}

fn render_markdown(report: &PayoutReport) -> String {
    let mut out = String::new();
    let mut line = |s: String| {
        out.push_str(&s);
        out.push('\n');
    };
    line("# Security bonus payout".into());
    line(String::new());
    line("## Budget".into());
    line(String::new());
    line(format!("- Budget: {}", report.budget));
    if let Some(b) = &report.basis {
        line(format!("- Risk reduction (Δ): {}", b.delta));
        line(format!("- Fraction: {} of the {} anchor", b.fraction, b.anchor));
        if !b.clamped_threats.is_empty() {
            line(format!("- Clamped at zero: {}", b.clamped_threats.join(", ")));
        }
    }
    line(format!("- Rounding: {}", report.rounding));
    line(format!(
        "- Paid out: {} (residual {} minor units)",
        Money { minor: report.total_paid(), currency: report.budget.currency.clone(), exponent: report.budget.exponent },
        report.residual
    ));
    line(String::new());
    line("## Payments".into());
    line(String::new());
    line("| Player | Shapley value | Share | Payment |".into());
    line("|---|---|---|---|".into());
    for e in &report.entries {
        let share = e.share.as_ref().map(ToString::to_string).unwrap_or_else(|| "-".into());
        line(format!("| {} | {} | {} | {} |", e.player, e.phi, share, e.payment));
    }
    if let Some(p) = &report.provenance {
        line(String::new());
        line("## How these numbers were computed".into());
        line(String::new());
        line(format!("- Game: {}", p.game_source));
        line(format!("- Solver: {}", p.method));
        if let Some(ax) = &p.axioms {
            line(String::new());
            line("### Axiom checks".into());
            line(String::new());
            for l in ax.lines() {
                line(format!("- {l}"));
            }
        }
    }
    if !report.notices.is_empty() {
        line(String::new());
        line("## Notices".into());
        line(String::new());
        for n in &report.notices {
            line(format!("- {n}"));
        }
    }
    out
}
