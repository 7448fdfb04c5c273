//! The utility metric: multiset TP/FP/FN between a baseline alert set and
//! an anonymized one, projected through a comparison field set, plus
//! per-field and per-algorithm marginals and the multi-field
//! non-additivity report.
//!
//! Comparison is multiset-valued throughout — five hundred thousand
//! identical port-0 alerts count five hundred thousand times, not once.

use std::collections::{BTreeMap, HashMap};

use thiserror::Error;

use crate::anon::AlgorithmKind;
use crate::field::FieldPath;
use crate::ids::{Alert, AlertField, AlertSet};
use crate::policy::Policy;

/// A named projection of alert fields used to decide whether two alerts
/// are "the same" despite anonymization.
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum FieldSet {
    /// timestamp, sig_id, id — for policies that leave timestamps alone.
    Fs1,
    /// sig_id, src, srcport, dst, dstport, id, tcpseq — for policies that
    /// anonymize timestamps.
    Fs2,
    Custom(Vec<AlertField>),
}

impl FieldSet {
    pub fn fields(&self) -> Vec<AlertField> {
        match self {
            FieldSet::Fs1 => vec![AlertField::Timestamp, AlertField::SigId, AlertField::Id],
            FieldSet::Fs2 => vec![
                AlertField::SigId,
                AlertField::Src,
                AlertField::Srcport,
                AlertField::Dst,
                AlertField::Dstport,
                AlertField::Id,
                AlertField::Tcpseq,
            ],
            FieldSet::Custom(fields) => fields.clone(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            FieldSet::Fs1 => "fs1",
            FieldSet::Fs2 => "fs2",
            FieldSet::Custom(_) => "custom",
        }
    }
}

/// An alert projected through a field set. Absent fields are explicit
/// nulls, and null equals null.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct AlertKey(Vec<Option<String>>);

impl AlertKey {
    pub fn project(alert: &Alert, fs: &FieldSet) -> AlertKey {
        AlertKey(fs.fields().iter().map(|f| alert.field_text(*f)).collect())
    }
}

/// TP/FP/FN counts for one baseline-vs-anonymized comparison.
///
/// Invariants: `tp + fn == |baseline|` and `tp + fp == |anonymized|`.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct ComparisonResult {
    pub true_positives: u64,
    pub false_positives: u64,
    pub false_negatives: u64,
    pub baseline_total: u64,
    pub anony_total: u64,
}

impl ComparisonResult {
    /// Combined error: false positives plus false negatives.
    pub fn error(&self) -> u64 {
        self.false_positives + self.false_negatives
    }
}

/// Multiset comparison of two alert sets under a projection.
///
/// With per-key counts `b` and `a`: tp sums `min(b, a)`, fp sums the
/// anonymized surplus, fn sums the baseline deficit.
pub fn compare(baseline: &AlertSet, anony: &AlertSet, fs: &FieldSet) -> ComparisonResult {
    let mut counts: HashMap<AlertKey, (u64, u64)> = HashMap::new();
    for alert in baseline.iter() {
        counts.entry(AlertKey::project(alert, fs)).or_default().0 += 1;
    }
    for alert in anony.iter() {
        counts.entry(AlertKey::project(alert, fs)).or_default().1 += 1;
    }
    let mut tp = 0;
    let mut fp = 0;
    let mut fn_ = 0;
    for (b, a) in counts.values() {
        tp += b.min(a);
        fp += a.saturating_sub(*b);
        fn_ += b.saturating_sub(*a);
    }
    ComparisonResult {
        true_positives: tp,
        false_positives: fp,
        false_negatives: fn_,
        baseline_total: baseline.len() as u64,
        anony_total: anony.len() as u64,
    }
}

/// Alert columns whose values derive from a given packet field, used by the
/// generalized field-set mode to drop projections the policy invalidates.
pub fn alert_fields_affected_by(path: FieldPath) -> &'static [AlertField] {
    match path {
        FieldPath::TsSec | FieldPath::TsUsec => &[AlertField::Timestamp],
        FieldPath::SrcMac => &[AlertField::Ethsrc],
        FieldPath::DstMac => &[AlertField::Ethdst],
        FieldPath::Ipv4SrcIp => &[AlertField::Src],
        FieldPath::Ipv4DstIp => &[AlertField::Dst],
        FieldPath::Ipv4Id => &[AlertField::Id],
        FieldPath::Ipv4Ttl => &[AlertField::Ttl],
        FieldPath::TcpSrcPort | FieldPath::UdpSrcPort => &[AlertField::Srcport],
        FieldPath::TcpDstPort | FieldPath::UdpDstPort => &[AlertField::Dstport],
        FieldPath::TcpSequence => &[AlertField::Tcpseq],
        FieldPath::TcpAckNo => &[AlertField::Tcpack],
        FieldPath::TcpFlags => &[AlertField::Tcpflags],
        FieldPath::TcpWindow => &[AlertField::Tcpwindow],
        FieldPath::IcmpType => &[AlertField::Icmptype],
        FieldPath::IcmpCode => &[AlertField::Icmpcoe],
        FieldPath::IcmpIdentifier => &[AlertField::Icmpid],
        FieldPath::IcmpSequence => &[AlertField::Icmpseq],
        _ => &[],
    }
}

/// Picks the comparison field set for a policy: FS2 when any entry touches
/// a timestamp path, FS1 otherwise.
///
/// In generalized mode the chosen set additionally drops every alert column
/// derived from a policy-targeted packet field. The ungeneralized default
/// mirrors the published rule exactly.
pub fn select_field_set(policy: &Policy, generalized: bool) -> FieldSet {
    let touches_time =
        policy.targets(FieldPath::TsSec) || policy.targets(FieldPath::TsUsec);
    let base = if touches_time { FieldSet::Fs2 } else { FieldSet::Fs1 };
    if !generalized {
        return base;
    }
    let dropped: Vec<AlertField> = policy
        .entries
        .iter()
        .flat_map(|e| alert_fields_affected_by(e.field).iter().copied())
        .collect();
    let remaining: Vec<AlertField> = base
        .fields()
        .into_iter()
        .filter(|f| !dropped.contains(f))
        .collect();
    if remaining == base.fields() {
        base
    } else {
        FieldSet::Custom(remaining)
    }
}

/// Aggregation axis for marginal reports.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum MarginalAxis {
    ByField,
    ByAlgorithm,
}

/// One marginal row: arithmetic means of fp/fn/error plus alert-count
/// statistics across all runs sharing the row's name.
#[derive(Clone, PartialEq, Debug)]
pub struct MarginalRow {
    pub name: String,
    pub fp_avg: f64,
    pub fn_avg: f64,
    pub error_avg: f64,
    pub alerts_avg: f64,
    pub alerts_max: u64,
    pub alerts_min: u64,
    pub runs: usize,
}

#[derive(Clone, PartialEq, Debug)]
pub struct MarginalReport {
    pub axis: MarginalAxis,
    pub rows: Vec<MarginalRow>,
}

/// Averages results along an axis: a field's marginal is the mean over all
/// algorithms applied to it, and dually for algorithms.
pub fn marginal(
    results: &[(FieldPath, AlgorithmKind, ComparisonResult)],
    axis: MarginalAxis,
) -> MarginalReport {
    let mut groups: BTreeMap<String, Vec<&ComparisonResult>> = BTreeMap::new();
    for (field, algorithm, result) in results {
        let name = match axis {
            MarginalAxis::ByField => field.to_string(),
            MarginalAxis::ByAlgorithm => algorithm.to_string(),
        };
        groups.entry(name).or_default().push(result);
    }
    let rows = groups
        .into_iter()
        .map(|(name, rs)| {
            let n = rs.len() as f64;
            let fp_avg = rs.iter().map(|r| r.false_positives as f64).sum::<f64>() / n;
            let fn_avg = rs.iter().map(|r| r.false_negatives as f64).sum::<f64>() / n;
            let alerts_avg = rs.iter().map(|r| r.anony_total as f64).sum::<f64>() / n;
            MarginalRow {
                name,
                fp_avg,
                fn_avg,
                error_avg: fp_avg + fn_avg,
                alerts_avg,
                alerts_max: rs.iter().map(|r| r.anony_total).max().unwrap_or(0),
                alerts_min: rs.iter().map(|r| r.anony_total).min().unwrap_or(0),
                runs: rs.len(),
            }
        })
        .collect();
    MarginalReport { axis, rows }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("policy `{policy}` names constituent {field} with no single-field result")]
    MissingConstituent { policy: String, field: FieldPath },
}

/// One row of the non-additivity table. `deviation` is observed minus the
/// sum of the constituents; no sign is promised.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct NonAdditivityRow {
    pub policy: String,
    pub constituent_fp_sum: u64,
    pub observed_fp: u64,
    pub deviation: i64,
}

/// Compares each multi-field policy's false-positive count with the sum of
/// its constituent single-field counts.
pub fn nonadditivity_report(
    single: &BTreeMap<FieldPath, ComparisonResult>,
    combined: &[(Policy, ComparisonResult)],
) -> Result<Vec<NonAdditivityRow>, MetricsError> {
    let mut rows = Vec::new();
    for (policy, result) in combined {
        let mut sum = 0u64;
        for entry in &policy.entries {
            let constituent =
                single
                    .get(&entry.field)
                    .ok_or_else(|| MetricsError::MissingConstituent {
                        policy: policy.name.clone(),
                        field: entry.field,
                    })?;
            sum += constituent.false_positives;
        }
        rows.push(NonAdditivityRow {
            policy: policy.name.clone(),
            constituent_fp_sum: sum,
            observed_fp: result.false_positives,
            deviation: result.false_positives as i64 - sum as i64,
        });
    }
    Ok(rows)
}
