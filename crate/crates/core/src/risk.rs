//! Qualitative risk scales, the threat tree and interval-valued risk figures.
//!
//! Scales map category labels to closed intervals. Likelihood and impact scales
//! must partition their range (half-open categories, top category closed);
//! `lookup` scales are plain label tables with no partition requirement, which
//! is what loss-range tables such as "low: 18 120..35 730" need.

use std::collections::{BTreeSet, HashSet};
use std::fmt;

use num::{BigRational, One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interval::Interval;
use crate::rational;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScaleKind {
    Likelihood,
    Impact,
    Lookup,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Category {
    pub label: String,
    pub bounds: Interval,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct QualitativeScale {
    pub name: String,
    pub kind: ScaleKind,
    pub categories: Vec<Category>,
}

/// One broken scale invariant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ScaleViolation {
    pub scale: String,
    pub index: Option<usize>,
    pub message: String,
}

impl fmt::Display for ScaleViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.index {
            Some(i) => write!(f, "scale {:?}: {} at index {}", self.scale, self.message, i),
            None => write!(f, "scale {:?}: {}", self.scale, self.message),
        }
    }
}

impl QualitativeScale {
    pub fn new(name: impl Into<String>, kind: ScaleKind, categories: Vec<(&str, Interval)>) -> Self {
        QualitativeScale {
            name: name.into(),
            kind,
            categories: categories
                .into_iter()
                .map(|(label, bounds)| Category { label: label.to_string(), bounds })
                .collect(),
        }
    }

    pub fn get(&self, label: &str) -> Option<&Interval> {
        self.categories.iter().find(|c| c.label == label).map(|c| &c.bounds)
    }

    pub fn is_partition(&self) -> bool {
        self.kind != ScaleKind::Lookup
    }
}

pub fn validate_scale(scale: &QualitativeScale) -> Vec<ScaleViolation> {
    let mut out = Vec::new();
    let mut push = |index: Option<usize>, message: &str| {
        out.push(ScaleViolation { scale: scale.name.clone(), index, message: message.to_string() });
    };

    if scale.categories.is_empty() {
        push(None, "no categories");
        return out;
    }

    let mut seen = HashSet::new();
    for (i, cat) in scale.categories.iter().enumerate() {
        if !seen.insert(cat.label.as_str()) {
            push(Some(i), "duplicate label");
        }
        if cat.bounds.lo().is_negative() {
            push(Some(i), "negative bound");
        }
    }

    if !scale.is_partition() {
        return out;
    }

    let last = scale.categories.len() - 1;
    if !scale.categories[0].bounds.lo().is_zero() {
        push(Some(0), "does not start at 0");
    }
    for (i, cat) in scale.categories.iter().enumerate() {
        if i < last && cat.bounds.lo() == cat.bounds.hi() {
            push(Some(i), "empty category");
        }
        if i > 0 {
            let prev_hi = scale.categories[i - 1].bounds.hi();
            let lo = cat.bounds.lo();
            if lo > prev_hi {
                push(Some(i), "non-contiguous");
            } else if lo < prev_hi {
                push(Some(i), "overlapping");
            }
        }
    }
    if scale.kind == ScaleKind::Likelihood && !scale.categories[last].bounds.hi().is_one() {
        push(Some(last), "likelihood scale does not end at 1");
    }
    out
}

/// Category containing `x`, reading categories as `[lo, hi)` with the top one closed.
pub fn classify<'a>(scale: &'a QualitativeScale, x: &BigRational) -> Result<&'a str> {
    if !scale.is_partition() {
        return Err(Error::validation(format!("scale {:?} is a lookup table and cannot classify", scale.name)));
    }
    let out_of_range = || Error::OutOfRange { scale: scale.name.clone(), value: x.to_string() };
    let (first, last) = match (scale.categories.first(), scale.categories.last()) {
        (Some(f), Some(l)) => (f, l),
        _ => return Err(out_of_range()),
    };
    if x < first.bounds.lo() || x > last.bounds.hi() {
        return Err(out_of_range());
    }
    for cat in &scale.categories {
        if cat.bounds.lo() <= x && x < cat.bounds.hi() {
            return Ok(&cat.label);
        }
    }
    if x == last.bounds.hi() {
        return Ok(&last.label);
    }
    Err(out_of_range())
}

/// The pair of scales assessments are resolved against.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ScaleSet {
    pub likelihood: QualitativeScale,
    pub impact: QualitativeScale,
}

impl ScaleSet {
    pub fn validate(&self) -> Vec<ScaleViolation> {
        let mut out = validate_scale(&self.likelihood);
        if self.likelihood.kind == ScaleKind::Impact {
            out.push(ScaleViolation {
                scale: self.likelihood.name.clone(),
                index: None,
                message: "impact scale used in the likelihood slot".into(),
            });
        }
        for (i, cat) in self.likelihood.categories.iter().enumerate() {
            if cat.bounds.hi() > &BigRational::one() {
                out.push(ScaleViolation {
                    scale: self.likelihood.name.clone(),
                    index: Some(i),
                    message: "likelihood above 1".into(),
                });
            }
        }
        out.extend(validate_scale(&self.impact));
        if self.impact.kind == ScaleKind::Likelihood {
            out.push(ScaleViolation {
                scale: self.impact.name.clone(),
                index: None,
                message: "likelihood scale used in the impact slot".into(),
            });
        }
        out
    }

    fn likelihood(&self, label: &str) -> Result<&Interval> {
        self.likelihood.get(label).ok_or_else(|| Error::unknown("likelihood category", label))
    }

    fn impact(&self, label: &str) -> Result<&Interval> {
        self.impact.get(label).ok_or_else(|| Error::unknown("impact category", label))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeafCondition {
    pub id: String,
    #[serde(default)]
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Control {
    pub id: String,
    #[serde(default)]
    pub label: String,
    pub leaves: Vec<LeafCondition>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Threat {
    pub id: String,
    #[serde(default)]
    pub label: String,
    pub controls: Vec<Control>,
}

/// Threats, the controls that counter them, and the checks verifying each control.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ThreatTree {
    pub threats: Vec<Threat>,
}

impl ThreatTree {
    pub fn leaves(&self) -> impl Iterator<Item = &LeafCondition> {
        self.threats.iter().flat_map(|t| t.controls.iter()).flat_map(|c| c.leaves.iter())
    }

    pub fn leaf_count(&self) -> usize {
        self.leaves().count()
    }

    pub fn has_leaf(&self, id: &str) -> bool {
        self.leaves().any(|l| l.id == id)
    }

    pub fn threat(&self, id: &str) -> Option<&Threat> {
        self.threats.iter().find(|t| t.id == id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TreeViolation {
    pub node: String,
    pub message: String,
}

impl fmt::Display for TreeViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.node, self.message)
    }
}

pub fn validate_threat_tree(tree: &ThreatTree) -> Vec<TreeViolation> {
    let mut out = Vec::new();
    let mut ids = HashSet::new();
    let mut check_id = |id: &str, out: &mut Vec<TreeViolation>| {
        if id.trim().is_empty() {
            out.push(TreeViolation { node: id.to_string(), message: "empty id".into() });
        } else if !ids.insert(id.to_string()) {
            out.push(TreeViolation { node: id.to_string(), message: "duplicate id".into() });
        }
    };
    for threat in &tree.threats {
        check_id(&threat.id, &mut out);
        if threat.controls.is_empty() {
            out.push(TreeViolation { node: threat.id.clone(), message: "threat has no controls".into() });
        }
        for control in &threat.controls {
            check_id(&control.id, &mut out);
            if control.leaves.is_empty() {
                out.push(TreeViolation { node: control.id.clone(), message: "control has no leaf conditions".into() });
            }
            for leaf in &control.leaves {
                check_id(&leaf.id, &mut out);
            }
        }
    }
    out
}

/// Per-threat qualitative assessment, before and after mitigation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThreatAssessment {
    pub threat_id: String,
    pub likelihood_before: String,
    pub impact_before: String,
    pub likelihood_after: String,
    /// Residual damage once the controls are in place.
    pub impact_after: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    #[default]
    Sum,
    /// Worst single threat decides.
    Max,
}

struct Resolved<'a> {
    threat_id: &'a str,
    before: Interval,
    after: Interval,
    /// Same categories before and after: the same unknown risk, so its
    /// difference is exactly zero rather than `[-w, w]`.
    unchanged: bool,
}

fn resolve<'a>(assessments: &'a [ThreatAssessment], scales: &ScaleSet) -> Result<Vec<Resolved<'a>>> {
    assessments
        .iter()
        .map(|a| {
            let before = scales.likelihood(&a.likelihood_before)?.mul(scales.impact(&a.impact_before)?);
            let after = scales.likelihood(&a.likelihood_after)?.mul(scales.impact(&a.impact_after)?);
            let unchanged = a.likelihood_before == a.likelihood_after && a.impact_before == a.impact_after;
            Ok(Resolved { threat_id: &a.threat_id, before, after, unchanged })
        })
        .collect()
}

fn aggregate(items: impl IntoIterator<Item = Interval>, mode: Aggregation) -> Interval {
    let mut items = items.into_iter();
    match mode {
        Aggregation::Sum => items.fold(Interval::zero(), |acc, x| acc.add(&x)),
        Aggregation::Max => match items.next() {
            Some(first) => items.fold(first, |acc, x| acc.max(&x)),
            None => Interval::zero(),
        },
    }
}

pub fn risk_before(assessments: &[ThreatAssessment], scales: &ScaleSet, mode: Aggregation) -> Result<Interval> {
    Ok(aggregate(resolve(assessments, scales)?.into_iter().map(|r| r.before), mode))
}

pub fn risk_after(assessments: &[ThreatAssessment], scales: &ScaleSet, mode: Aggregation) -> Result<Interval> {
    Ok(aggregate(resolve(assessments, scales)?.into_iter().map(|r| r.after), mode))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RiskDelta {
    pub interval: Interval,
    /// Threats whose before-minus-after difference had to be clamped at zero.
    pub clamped: Vec<String>,
}

/// Risk reduction, differenced per threat and then aggregated with `mode`.
pub fn risk_delta(
    assessments: &[ThreatAssessment],
    scales: &ScaleSet,
    mode: Aggregation,
    clamp: bool,
) -> Result<RiskDelta> {
    let resolved = resolve(assessments, scales)?;
    let mut clamped = Vec::new();
    let diffs: Vec<Interval> = resolved
        .iter()
        .map(|r| {
            if r.unchanged {
                return Interval::zero();
            }
            let d = r.before.sub(&r.after, clamp);
            if d.clamped {
                clamped.push(r.threat_id.to_string());
            }
            d.interval
        })
        .collect();
    Ok(RiskDelta { interval: aggregate(diffs, mode), clamped })
}

/// Assessments where mitigation makes both likelihood and impact worse.
pub fn worsening_assessments(assessments: &[ThreatAssessment], scales: &ScaleSet) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for a in assessments {
        let l_worse = scales.likelihood(&a.likelihood_after)?.hi() > scales.likelihood(&a.likelihood_before)?.hi();
        let i_worse = scales.impact(&a.impact_after)?.hi() > scales.impact(&a.impact_before)?.hi();
        if l_worse && i_worse {
            out.push(a.threat_id.clone());
        }
    }
    Ok(out)
}

/// Scales, threat tree and assessments for one evaluation cycle.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RiskModel {
    pub scales: ScaleSet,
    pub threats: ThreatTree,
    pub assessments: Vec<ThreatAssessment>,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct ModelReport {
    pub scale_violations: Vec<ScaleViolation>,
    pub tree_violations: Vec<TreeViolation>,
    pub assessment_errors: Vec<String>,
    pub warnings: Vec<String>,
}

impl ModelReport {
    pub fn is_valid(&self) -> bool {
        self.scale_violations.is_empty() && self.tree_violations.is_empty() && self.assessment_errors.is_empty()
    }

    pub fn lines(&self) -> Vec<String> {
        let mut out: Vec<String> = self.scale_violations.iter().map(|v| format!("error: {v}")).collect();
        out.extend(self.tree_violations.iter().map(|v| format!("error: threat tree {v}")));
        out.extend(self.assessment_errors.iter().map(|v| format!("error: {v}")));
        out.extend(self.warnings.iter().map(|v| format!("warning: {v}")));
        out
    }
}

impl RiskModel {
    pub fn validate(&self) -> ModelReport {
        let mut report = ModelReport {
            scale_violations: self.scales.validate(),
            tree_violations: validate_threat_tree(&self.threats),
            ..Default::default()
        };
        let mut assessed = BTreeSet::new();
        for a in &self.assessments {
            if self.threats.threat(&a.threat_id).is_none() {
                report.assessment_errors.push(format!("assessment for unknown threat {:?}", a.threat_id));
            }
            if !assessed.insert(a.threat_id.as_str()) {
                report.assessment_errors.push(format!("threat {:?} assessed twice", a.threat_id));
            }
            for label in [&a.likelihood_before, &a.likelihood_after] {
                if self.scales.likelihood.get(label).is_none() {
                    report.assessment_errors.push(format!(
                        "threat {:?}: likelihood label {:?} not in scale {:?}",
                        a.threat_id, label, self.scales.likelihood.name
                    ));
                }
            }
            for label in [&a.impact_before, &a.impact_after] {
                if self.scales.impact.get(label).is_none() {
                    report.assessment_errors.push(format!(
                        "threat {:?}: impact label {:?} not in scale {:?}",
                        a.threat_id, label, self.scales.impact.name
                    ));
                }
            }
        }
        for t in &self.threats.threats {
            if !assessed.contains(t.id.as_str()) {
                report.warnings.push(format!("threat {:?} has no assessment", t.id));
            }
        }
        if report.assessment_errors.is_empty() {
            if let Ok(worse) = worsening_assessments(&self.assessments, &self.scales) {
                for id in worse {
                    report.warnings.push(format!("threat {id:?}: mitigation worsens both likelihood and impact"));
                }
            }
        }
        report
    }

    pub fn from_json(text: &str, impact_cap: Option<&BigRational>) -> Result<Self> {
        let doc: RiskModelDoc =
            serde_json::from_str(text).map_err(|source| Error::Json { context: "risk model".into(), source })?;
        doc.resolve(impact_cap)
    }
}

// Document form. Upper bounds may be written as "inf" and are replaced by the
// scale's cap (or the run-level override) when resolved.

#[derive(Debug, Clone, Deserialize)]
pub struct RiskModelDoc {
    pub scales: ScaleSetDoc,
    pub threats: ThreatTree,
    #[serde(default)]
    pub assessments: Vec<ThreatAssessment>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct ScaleSetDoc {
    pub likelihood: ScaleDoc,
    pub impact: ScaleDoc,
}

#[derive(Debug, Clone, Deserialize)]
pub struct ScaleDoc {
    pub name: String,
    pub kind: ScaleKind,
    #[serde(default, with = "rational::serde_opt")]
    pub cap: Option<BigRational>,
    pub categories: Vec<CategoryDoc>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct CategoryDoc {
    pub label: String,
    pub lo: String,
    pub hi: String,
}

impl RiskModelDoc {
    pub fn resolve(self, impact_cap: Option<&BigRational>) -> Result<RiskModel> {
        Ok(RiskModel {
            scales: ScaleSet { likelihood: self.scales.likelihood.resolve(None)?, impact: self.scales.impact.resolve(impact_cap)? },
            threats: self.threats,
            assessments: self.assessments,
        })
    }
}

fn is_infinite(s: &str) -> bool {
    matches!(s.trim().to_ascii_lowercase().as_str(), "inf" | "infinity" | "∞")
}

impl ScaleDoc {
    pub fn resolve(self, cap_override: Option<&BigRational>) -> Result<QualitativeScale> {
        let cap = cap_override.cloned().or(self.cap);
        let last = self.categories.len().saturating_sub(1);
        let mut categories = Vec::with_capacity(self.categories.len());
        for (i, c) in self.categories.into_iter().enumerate() {
            let lo = rational::parse_rational(&c.lo)?;
            let hi = if is_infinite(&c.hi) {
                if i != last {
                    return Err(Error::validation(format!(
                        "scale {:?}: only the top category may be unbounded (category {:?})",
                        self.name, c.label
                    )));
                }
                cap.clone().ok_or_else(|| {
                    Error::validation(format!("scale {:?}: unbounded top category needs a cap", self.name))
                })?
            } else {
                rational::parse_rational(&c.hi)?
            };
            let bounds = Interval::new(lo, hi).map_err(|e| {
                Error::validation(format!("scale {:?}, category {:?}: {e}", self.name, c.label))
            })?;
            categories.push(Category { label: c.label, bounds });
        }
        Ok(QualitativeScale { name: self.name, kind: self.kind, categories })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn iv(lo: &str, hi: &str) -> Interval {
        Interval::parse(lo, hi).unwrap()
    }

    fn q(s: &str) -> BigRational {
        rational::parse_rational(s).unwrap()
    }

    fn two_level_likelihood() -> QualitativeScale {
        QualitativeScale::new("likelihood", ScaleKind::Likelihood, vec![("low", iv("0", "0.5")), ("high", iv("0.5", "1"))])
    }

    fn loss_table(kind: ScaleKind) -> QualitativeScale {
        QualitativeScale::new(
            "business impact",
            kind,
            vec![
                ("none", iv("0", "0")),
                ("low", iv("18120", "35730")),
                ("medium", iv("52260", "223400")),
                ("high", iv("366500", "1775350")),
                ("critical", iv("2125900", "15622700")),
            ],
        )
    }

    fn cvss_scale() -> QualitativeScale {
        QualitativeScale::new(
            "cvss",
            ScaleKind::Impact,
            vec![
                ("none", iv("0", "0.1")),
                ("low", iv("0.1", "4.0")),
                ("medium", iv("4.0", "7.0")),
                ("high", iv("7.0", "9.0")),
                ("critical", iv("9.0", "10.0")),
            ],
        )
    }

    #[test]
    fn minimal_partition_is_valid() {
        assert!(validate_scale(&two_level_likelihood()).is_empty());
        assert!(validate_scale(&cvss_scale()).is_empty());
    }

    #[test]
    fn gap_is_reported_with_index() {
        let s = QualitativeScale::new("gappy", ScaleKind::Likelihood, vec![("a", iv("0", "0.3")), ("b", iv("0.5", "1"))]);
        let v = validate_scale(&s);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].index, Some(1));
        assert_eq!(v[0].message, "non-contiguous");
        assert!(v[0].to_string().ends_with("non-contiguous at index 1"));
    }

    #[test]
    fn loss_table_is_not_a_partition() {
        let v = validate_scale(&loss_table(ScaleKind::Impact));
        assert!(v.iter().any(|v| v.message == "non-contiguous"), "{v:?}");
        assert!(validate_scale(&loss_table(ScaleKind::Lookup)).is_empty());
    }

    #[test]
    fn other_partition_violations() {
        let s = QualitativeScale::new("l", ScaleKind::Likelihood, vec![("a", iv("0.1", "0.6")), ("b", iv("0.5", "0.9"))]);
        let msgs: Vec<_> = validate_scale(&s).into_iter().map(|v| v.message).collect();
        assert!(msgs.contains(&"does not start at 0".to_string()));
        assert!(msgs.contains(&"overlapping".to_string()));
        assert!(msgs.contains(&"likelihood scale does not end at 1".to_string()));

        let dup = QualitativeScale::new("d", ScaleKind::Lookup, vec![("a", iv("0", "1")), ("a", iv("1", "2"))]);
        assert_eq!(validate_scale(&dup)[0].message, "duplicate label");

        let empty = QualitativeScale::new("e", ScaleKind::Impact, vec![("z", iv("0", "0")), ("a", iv("0", "1"))]);
        assert_eq!(validate_scale(&empty)[0].message, "empty category");
    }

    #[test]
    fn classify_examples() {
        assert_eq!(classify(&cvss_scale(), &q("9.1")).unwrap(), "critical");
        assert_eq!(classify(&cvss_scale(), &q("5.4")).unwrap(), "medium");
        assert_eq!(classify(&cvss_scale(), &q("0")).unwrap(), "none");
        assert_eq!(classify(&two_level_likelihood(), &q("0.5")).unwrap(), "high");
        assert_eq!(classify(&two_level_likelihood(), &q("1")).unwrap(), "high");
        assert_eq!(classify(&two_level_likelihood(), &q("0.4999")).unwrap(), "low");
        let err = classify(&two_level_likelihood(), &q("1.01")).unwrap_err();
        assert!(err.to_string().contains("likelihood"));
        assert!(classify(&loss_table(ScaleKind::Lookup), &q("1")).is_err());
    }

    #[test]
    fn classify_midpoints_round_trip() {
        for scale in [two_level_likelihood(), cvss_scale()] {
            for cat in &scale.categories {
                assert_eq!(classify(&scale, &cat.bounds.midpoint()).unwrap(), cat.label);
            }
        }
    }

    fn worked_scales() -> ScaleSet {
        ScaleSet {
            likelihood: QualitativeScale::new(
                "exploit likelihood",
                ScaleKind::Lookup,
                vec![("none", iv("0", "0")), ("high", iv("1", "1"))],
            ),
            impact: loss_table(ScaleKind::Lookup),
        }
    }

    fn assess(id: &str, lb: &str, ib: &str, la: &str, ia: &str) -> ThreatAssessment {
        ThreatAssessment {
            threat_id: id.into(),
            likelihood_before: lb.into(),
            impact_before: ib.into(),
            likelihood_after: la.into(),
            impact_after: ia.into(),
        }
    }

    fn hand_scales() -> ScaleSet {
        ScaleSet {
            likelihood: QualitativeScale::new(
                "l",
                ScaleKind::Lookup,
                vec![("zero", iv("0", "0")), ("rare", iv("0.1", "0.2")), ("likely", iv("0.5", "0.7"))],
            ),
            impact: QualitativeScale::new("i", ScaleKind::Lookup, vec![("mid", iv("100", "200"))]),
        }
    }

    #[test]
    fn risk_before_examples() {
        let scales = hand_scales();
        assert_eq!(risk_before(&[], &scales, Aggregation::Sum).unwrap(), Interval::zero());
        let w = worked_scales();
        let t1 = assess("T1", "high", "critical", "none", "critical");
        assert_eq!(risk_before(&[t1], &w, Aggregation::Sum).unwrap(), iv("2125900", "15622700"));
        let two = [assess("T1", "likely", "mid", "rare", "mid"), assess("T2", "rare", "mid", "zero", "mid")];
        assert_eq!(risk_before(&two, &scales, Aggregation::Sum).unwrap(), iv("60", "180"));
        assert_eq!(risk_before(&two, &scales, Aggregation::Max).unwrap(), iv("50", "140"));
    }

    #[test]
    fn risk_after_examples() {
        let w = worked_scales();
        let t1 = assess("T1", "high", "critical", "none", "critical");
        assert_eq!(risk_after(&[t1], &w, Aggregation::Max).unwrap(), Interval::zero());

        let scales = hand_scales();
        let same = [assess("T1", "likely", "mid", "likely", "mid")];
        assert_eq!(
            risk_after(&same, &scales, Aggregation::Sum).unwrap(),
            risk_before(&same, &scales, Aggregation::Sum).unwrap()
        );
        let two = [assess("T1", "likely", "mid", "rare", "mid"), assess("T2", "rare", "mid", "zero", "mid")];
        assert_eq!(risk_after(&two, &scales, Aggregation::Sum).unwrap(), iv("10", "40"));
    }

    #[test]
    fn risk_delta_examples() {
        let w = worked_scales();
        let t1 = assess("T1", "high", "critical", "none", "critical");
        let d = risk_delta(&[t1], &w, Aggregation::Sum, true).unwrap();
        assert_eq!(d.interval, iv("2125900", "15622700"));
        assert!(d.clamped.is_empty());

        let scales = hand_scales();
        let same = [assess("T1", "likely", "mid", "likely", "mid")];
        let d = risk_delta(&same, &scales, Aggregation::Sum, true).unwrap();
        assert_eq!(d.interval, Interval::zero());
        assert!(d.clamped.is_empty());
        assert_eq!(risk_delta(&same, &scales, Aggregation::Sum, false).unwrap().interval, Interval::zero());

        // Different categories with overlapping ranges can still go negative and get clamped.
        let worse = [assess("T1", "rare", "mid", "likely", "mid")];
        let d = risk_delta(&worse, &scales, Aggregation::Sum, true).unwrap();
        assert_eq!(d.interval, Interval::zero());
        assert_eq!(d.clamped, vec!["T1".to_string()]);
        let raw = risk_delta(&worse, &scales, Aggregation::Sum, false).unwrap();
        assert_eq!(raw.interval, iv("-130", "-10"));

        let one = [assess("T1", "likely", "mid", "rare", "mid")];
        assert_eq!(risk_delta(&one, &scales, Aggregation::Sum, false).unwrap().interval, iv("10", "130"));
    }

    #[test]
    fn unresolved_label_is_an_error() {
        let scales = hand_scales();
        let bad = [assess("T1", "sometimes", "mid", "zero", "mid")];
        assert!(matches!(risk_before(&bad, &scales, Aggregation::Sum), Err(Error::Unknown { .. })));
    }

    fn worked_tree() -> ThreatTree {
        let control = |c: &str, u: &str| Control {
            id: c.into(),
            label: String::new(),
            leaves: vec![LeafCondition { id: u.into(), label: String::new() }],
        };
        ThreatTree {
            threats: vec![Threat {
                id: "T1".into(),
                label: "loss of customer data records".into(),
                controls: vec![control("C-1-1", "U-46365"), control("C-1-2", "U-45802"), control("C-1-3", "U-45801")],
            }],
        }
    }

    #[test]
    fn threat_tree_validation() {
        let tree = worked_tree();
        assert!(validate_threat_tree(&tree).is_empty());
        assert_eq!(tree.leaf_count(), 3);

        let mut dup = worked_tree();
        dup.threats[0].controls[1].leaves[0].id = "U-46365".into();
        let v = validate_threat_tree(&dup);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].node, "U-46365");

        let mut bare = worked_tree();
        bare.threats[0].controls[2].leaves.clear();
        let v = validate_threat_tree(&bare);
        assert_eq!(v[0].node, "C-1-3");
        assert_eq!(v[0].message, "control has no leaf conditions");
    }

    #[test]
    fn document_resolves_infinite_top_with_cap() {
        let text = r#"{
            "scales": {
                "likelihood": {"name": "l", "kind": "likelihood", "categories": [
                    {"label": "low", "lo": "0", "hi": "0.5"}, {"label": "high", "lo": "0.5", "hi": "1"}]},
                "impact": {"name": "d", "kind": "impact", "cap": "1000", "categories": [
                    {"label": "minor", "lo": "0", "hi": "100"}, {"label": "major", "lo": "100", "hi": "inf"}]}
            },
            "threats": [{"id": "T1", "controls": [{"id": "C1", "leaves": [{"id": "U1"}]}]}],
            "assessments": [{"threat_id": "T1", "likelihood_before": "high", "impact_before": "major",
                             "likelihood_after": "low", "impact_after": "minor"}]
        }"#;
        let model = RiskModel::from_json(text, None).unwrap();
        assert_eq!(model.scales.impact.get("major").unwrap(), &iv("100", "1000"));
        assert!(model.validate().is_valid());
        let overridden = RiskModel::from_json(text, Some(&q("5000"))).unwrap();
        assert_eq!(overridden.scales.impact.get("major").unwrap(), &iv("100", "5000"));

        let no_cap = text.replace(r#""cap": "1000","#, "");
        assert!(RiskModel::from_json(&no_cap, None).is_err());
    }

    #[test]
    fn model_report_flags_bad_assessments() {
        let model = RiskModel {
            scales: hand_scales(),
            threats: worked_tree(),
            assessments: vec![assess("T9", "often", "mid", "zero", "mid")],
        };
        let r = model.validate();
        assert!(!r.is_valid());
        assert_eq!(r.assessment_errors.len(), 2);
        assert!(r.warnings.iter().any(|w| w.contains("T1")));
    }
}
