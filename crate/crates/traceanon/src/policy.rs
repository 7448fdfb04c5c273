//! Anonymization policies: field→algorithm bindings, their line-oriented
//! file format, validation against a compatibility matrix, exhaustive
//! single-field enumeration, and application to traces.
//!
//! Multi-field composition is sequential application of independent
//! single-field transforms, entries in file order. Each entry draws its
//! randomness from a sub-seed derived from `(policy seed, field name)`, so
//! adding or reordering entries never perturbs another entry's output.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::anon::{
    validate_params, AlgorithmKind, AlgorithmParams, AnonError, Anonymizer, AnonymizerState,
    ParamError,
};
use crate::field::{DataType, FieldPath, FieldValue};
use crate::pcap::{get_field, set_field, FieldError, Trace};

/// One field→algorithm binding.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PolicyEntry {
    pub field: FieldPath,
    pub algorithm: AlgorithmKind,
    pub params: AlgorithmParams,
}

/// A named, seeded, ordered list of entries. One entry makes a single-field
/// policy; two or more make a multi-field policy.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Policy {
    pub name: String,
    pub seed: u64,
    pub entries: Vec<PolicyEntry>,
}

impl Policy {
    pub fn single(name: &str, seed: u64, field: FieldPath, algorithm: AlgorithmKind, params: AlgorithmParams) -> Policy {
        Policy {
            name: name.to_string(),
            seed,
            entries: vec![PolicyEntry {
                field,
                algorithm,
                params,
            }],
        }
    }

    pub fn is_multi_field(&self) -> bool {
        self.entries.len() >= 2
    }

    pub fn targets(&self, field: FieldPath) -> bool {
        self.entries.iter().any(|e| e.field == field)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PolicyParseError {
    #[error("line {line}: syntax error: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: unknown field `{name}`")]
    UnknownField { line: usize, name: String },
    #[error("line {line}: unknown algorithm `{name}`")]
    UnknownAlgorithm { line: usize, name: String },
    #[error("line {line}: field {field} already bound by an earlier entry")]
    DuplicateField { line: usize, field: FieldPath },
}

/// Parses the policy file grammar:
///
/// ```text
/// # comment
/// policy <name>
/// seed <decimal u64>
/// entry field=<FIELDPATH> algorithm=<ALGORITHM> param.<key>=<value> ...
/// ```
pub fn parse_policy_file(text: &str) -> Result<Policy, PolicyParseError> {
    let mut name: Option<String> = None;
    let mut seed: Option<u64> = None;
    let mut entries: Vec<PolicyEntry> = Vec::new();
    let mut seen = BTreeSet::new();

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.trim();
        if content.is_empty() || content.starts_with('#') {
            continue;
        }
        let syntax = |message: String| PolicyParseError::Syntax { line, message };
        let mut tokens = content.split_whitespace();
        match tokens.next().unwrap() {
            "policy" => {
                if name.is_some() {
                    return Err(syntax("duplicate `policy` line".to_string()));
                }
                if !entries.is_empty() || seed.is_some() {
                    return Err(syntax("`policy` must be the first directive".to_string()));
                }
                let n = tokens
                    .next()
                    .ok_or_else(|| syntax("`policy` needs a name".to_string()))?;
                if tokens.next().is_some() {
                    return Err(syntax("policy names cannot contain spaces".to_string()));
                }
                name = Some(n.to_string());
            }
            "seed" => {
                if name.is_none() {
                    return Err(syntax("`seed` must follow the `policy` line".to_string()));
                }
                if seed.is_some() {
                    return Err(syntax("duplicate `seed` line".to_string()));
                }
                let v = tokens
                    .next()
                    .ok_or_else(|| syntax("`seed` needs a value".to_string()))?;
                seed = Some(
                    v.parse::<u64>()
                        .map_err(|e| syntax(format!("bad seed `{v}`: {e}")))?,
                );
            }
            "entry" => {
                if name.is_none() {
                    return Err(syntax("`entry` must follow the `policy` line".to_string()));
                }
                let mut field: Option<FieldPath> = None;
                let mut algorithm: Option<AlgorithmKind> = None;
                let mut params = AlgorithmParams::new();
                for token in tokens {
                    let (key, value) = token
                        .split_once('=')
                        .ok_or_else(|| syntax(format!("expected key=value, got `{token}`")))?;
                    match key {
                        "field" => {
                            field = Some(FieldPath::parse(value).ok_or(
                                PolicyParseError::UnknownField {
                                    line,
                                    name: value.to_string(),
                                },
                            )?);
                        }
                        "algorithm" => {
                            algorithm = Some(AlgorithmKind::parse(value).ok_or(
                                PolicyParseError::UnknownAlgorithm {
                                    line,
                                    name: value.to_string(),
                                },
                            )?);
                        }
                        _ => match key.strip_prefix("param.") {
                            Some(pkey) if !pkey.is_empty() => params.set(pkey, value),
                            _ => return Err(syntax(format!("unknown entry key `{key}`"))),
                        },
                    }
                }
                let field =
                    field.ok_or_else(|| syntax("entry is missing `field=`".to_string()))?;
                let algorithm =
                    algorithm.ok_or_else(|| syntax("entry is missing `algorithm=`".to_string()))?;
                if !seen.insert(field) {
                    return Err(PolicyParseError::DuplicateField { line, field });
                }
                entries.push(PolicyEntry {
                    field,
                    algorithm,
                    params,
                });
            }
            other => {
                return Err(syntax(format!("unknown directive `{other}`")));
            }
        }
    }

    let name = name.ok_or(PolicyParseError::Syntax {
        line: text.lines().count() + 1,
        message: "missing `policy` line".to_string(),
    })?;
    if entries.is_empty() {
        return Err(PolicyParseError::Syntax {
            line: text.lines().count() + 1,
            message: "policy has no entries".to_string(),
        });
    }
    Ok(Policy {
        name,
        seed: seed.unwrap_or(0),
        entries,
    })
}

/// Which algorithms may legally anonymize each field.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CompatibilityMatrix {
    map: BTreeMap<FieldPath, BTreeSet<AlgorithmKind>>,
}

impl CompatibilityMatrix {
    pub fn empty() -> CompatibilityMatrix {
        CompatibilityMatrix {
            map: BTreeMap::new(),
        }
    }

    /// The shipped default, derived from each algorithm's declared data
    /// types plus two structural rules: prefix preservation is offered only
    /// on IPv4-address fields, and the variable-width paths take only the
    /// algorithms that cope with per-packet widths.
    pub fn default_matrix() -> CompatibilityMatrix {
        let mut m = CompatibilityMatrix::empty();
        for &field in FieldPath::ALL {
            let algorithms: BTreeSet<AlgorithmKind> = match field.data_type() {
                DataType::Timestamp => [
                    AlgorithmKind::TimeUnitAnnihilation,
                    AlgorithmKind::RandomTimeShift,
                    AlgorithmKind::TimeEnumeration,
                ]
                .into_iter()
                .collect(),
                DataType::Numeric => [
                    AlgorithmKind::Truncation,
                    AlgorithmKind::Hash,
                    AlgorithmKind::BlackMarker,
                    AlgorithmKind::RandomPermutation,
                    AlgorithmKind::Annihilation,
                    AlgorithmKind::Classify,
                    AlgorithmKind::Substitution,
                ]
                .into_iter()
                .collect(),
                DataType::Binary if field.fixed_width().is_none() => {
                    [AlgorithmKind::BlackMarker, AlgorithmKind::Annihilation]
                        .into_iter()
                        .collect()
                }
                DataType::Binary => {
                    let mut algs: BTreeSet<AlgorithmKind> = [
                        AlgorithmKind::Truncation,
                        AlgorithmKind::Hash,
                        AlgorithmKind::BlackMarker,
                        AlgorithmKind::RandomPermutation,
                        AlgorithmKind::Annihilation,
                        AlgorithmKind::Substitution,
                    ]
                    .into_iter()
                    .collect();
                    if field.is_ip_address() {
                        algs.insert(AlgorithmKind::PrefixPreserving);
                    }
                    algs
                }
            };
            m.map.insert(field, algorithms);
        }
        m
    }

    /// Parses the matrix file format: one `FIELD = Alg1, Alg2, ...` line
    /// per field, `#` comments.
    pub fn parse(text: &str) -> Result<CompatibilityMatrix, PolicyParseError> {
        let mut m = CompatibilityMatrix::empty();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.trim();
            if content.is_empty() || content.starts_with('#') {
                continue;
            }
            let (field_name, algs) =
                content
                    .split_once('=')
                    .ok_or_else(|| PolicyParseError::Syntax {
                        line,
                        message: "expected `FIELD = Alg, Alg, ...`".to_string(),
                    })?;
            let field = FieldPath::parse(field_name.trim()).ok_or(PolicyParseError::UnknownField {
                line,
                name: field_name.trim().to_string(),
            })?;
            let mut set = BTreeSet::new();
            for alg in algs.split(',') {
                let alg = alg.trim();
                if alg.is_empty() {
                    continue;
                }
                set.insert(AlgorithmKind::parse(alg).ok_or(
                    PolicyParseError::UnknownAlgorithm {
                        line,
                        name: alg.to_string(),
                    },
                )?);
            }
            m.map.insert(field, set);
        }
        Ok(m)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (field, algs) in &self.map {
            let names: Vec<&str> = algs.iter().map(|a| a.name()).collect();
            out.push_str(&format!("{field} = {}\n", names.join(", ")));
        }
        out
    }

    pub fn allowed(&self, field: FieldPath) -> Option<&BTreeSet<AlgorithmKind>> {
        self.map.get(&field)
    }

    pub fn permits(&self, field: FieldPath, algorithm: AlgorithmKind) -> bool {
        self.map
            .get(&field)
            .is_some_and(|algs| algs.contains(&algorithm))
    }

    pub fn fields(&self) -> impl Iterator<Item = FieldPath> + '_ {
        self.map.keys().copied()
    }

    /// Total number of (field, algorithm) pairs.
    pub fn pair_count(&self) -> usize {
        self.map.values().map(BTreeSet::len).sum()
    }

    pub fn insert(&mut self, field: FieldPath, algorithms: impl IntoIterator<Item = AlgorithmKind>) {
        self.map.insert(field, algorithms.into_iter().collect());
    }

    /// True when every listed algorithm is declared for the field's data
    /// type (numeric fields also accept binary algorithms on their bits).
    pub fn is_type_consistent(&self) -> bool {
        self.map
            .iter()
            .all(|(field, algs)| algs.iter().all(|a| a.applies_to(*field)))
    }
}

/// A validation finding; violations are data, not errors.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub entry_index: usize,
    pub field: FieldPath,
    pub algorithm: AlgorithmKind,
    pub reason: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "entry {} ({} / {}): {}",
            self.entry_index + 1,
            self.field,
            self.algorithm,
            self.reason
        )
    }
}

/// Checks every entry against the matrix and validates its parameters.
pub fn validate(policy: &Policy, matrix: &CompatibilityMatrix) -> Vec<Violation> {
    let mut violations = Vec::new();
    for (i, entry) in policy.entries.iter().enumerate() {
        if !matrix.permits(entry.field, entry.algorithm) {
            violations.push(Violation {
                entry_index: i,
                field: entry.field,
                algorithm: entry.algorithm,
                reason: format!(
                    "{} does not apply to {} ({} field)",
                    entry.algorithm,
                    entry.field,
                    entry.field.data_type()
                ),
            });
        }
        if let Err(e) = validate_params(entry.algorithm, &entry.params) {
            violations.push(Violation {
                entry_index: i,
                field: entry.field,
                algorithm: entry.algorithm,
                reason: e.to_string(),
            });
        }
    }
    violations
}

/// Documented default parameters for sweep-generated policies.
///
/// The zeroing defaults (ports and other fields go to 0 under BlackMarker,
/// Substitution, Truncation, and Annihilation) are deliberate: they exercise
/// the regime where anonymization floods the detector with constant-value
/// patterns.
#[derive(Clone, Copy, Debug, Default)]
pub struct DefaultParams;

impl DefaultParams {
    pub fn params_for(&self, field: FieldPath, algorithm: AlgorithmKind) -> AlgorithmParams {
        let mut p = AlgorithmParams::new();
        match algorithm {
            AlgorithmKind::Truncation => {
                p.set("units", "all");
                p.set("direction", "suffix");
            }
            AlgorithmKind::BlackMarker => {
                p.set("units", "all");
                p.set("constant", "0");
            }
            AlgorithmKind::Substitution => {
                p.set("constant", "0");
            }
            AlgorithmKind::Classify => {
                p.set("boundaries", "1024");
                p.set("representatives", "0,1024");
            }
            AlgorithmKind::TimeUnitAnnihilation => {
                p.set("units_to_zero", "hour,minute,second,microsecond");
            }
            AlgorithmKind::RandomTimeShift => {
                p.set("window_seconds", "86400");
            }
            AlgorithmKind::TimeEnumeration => {
                p.set("base", "0");
                // Whole seconds for TS_SEC, single microseconds for TS_USEC.
                p.set(
                    "step",
                    if field == FieldPath::TsUsec {
                        "1"
                    } else {
                        "1000000"
                    },
                );
            }
            AlgorithmKind::PrefixPreserving
            | AlgorithmKind::Hash
            | AlgorithmKind::RandomPermutation
            | AlgorithmKind::Annihilation => {}
        }
        p
    }
}

/// One policy per (field, algorithm) pair in the matrix, in catalog order,
/// skipping `exclude`d fields. Every policy is named `FIELD-Algorithm` and
/// carries `seed`.
pub fn enumerate_single_field_policies(
    matrix: &CompatibilityMatrix,
    defaults: &DefaultParams,
    exclude: &BTreeSet<FieldPath>,
    seed: u64,
) -> Vec<Policy> {
    let mut out = Vec::new();
    for &field in FieldPath::ALL {
        if exclude.contains(&field) {
            continue;
        }
        let Some(algorithms) = matrix.allowed(field) else {
            continue;
        };
        for &algorithm in algorithms {
            out.push(Policy::single(
                &format!("{field}-{algorithm}"),
                seed,
                field,
                algorithm,
                defaults.params_for(field, algorithm),
            ));
        }
    }
    out
}

#[derive(Debug, Error)]
pub enum ApplyError {
    #[error("entry {entry} ({field}): {source}")]
    Params {
        entry: usize,
        field: FieldPath,
        source: ParamError,
    },
    #[error("entry {entry} ({field}), packet {packet}: {source}")]
    Transform {
        entry: usize,
        field: FieldPath,
        packet: usize,
        source: AnonError,
    },
    #[error("entry {entry} ({field}), packet {packet}: {source}")]
    Field {
        entry: usize,
        field: FieldPath,
        packet: usize,
        source: FieldError,
    },
}

/// Applies every entry in listed order, each over the whole trace. Packets
/// lacking the field pass through that entry untouched.
///
/// Callers are expected to have validated the policy against a matrix;
/// parameter problems still fail fast here.
pub fn apply_policy(trace: &Trace, policy: &Policy) -> Result<Trace, ApplyError> {
    let mut out = trace.clone();
    for (entry_index, entry) in policy.entries.iter().enumerate() {
        let state = AnonymizerState::for_policy_entry(policy.seed, entry.field);
        let mut anonymizer =
            Anonymizer::new(entry.algorithm, &entry.params, state).map_err(|source| {
                ApplyError::Params {
                    entry: entry_index,
                    field: entry.field,
                    source,
                }
            })?;

        // Pre-pass so whole-trace algorithms see every value first.
        let mut values: Vec<(usize, FieldValue)> = Vec::new();
        for (packet_index, packet) in out.packets.iter().enumerate() {
            if packet.has_field(entry.field) {
                let v = get_field(packet, entry.field).map_err(|source| ApplyError::Field {
                    entry: entry_index,
                    field: entry.field,
                    packet: packet_index,
                    source,
                })?;
                values.push((packet_index, v));
            }
        }
        anonymizer.prepare(values.iter().map(|(_, v)| v));

        for (packet_index, value) in values {
            let packet = &out.packets[packet_index];
            let width = packet
                .layout
                .get(&entry.field)
                .map(|s| s.bit_width)
                .or(entry.field.fixed_width())
                .unwrap_or(0);
            let new_value =
                anonymizer
                    .transform(&value, width)
                    .map_err(|source| ApplyError::Transform {
                        entry: entry_index,
                        field: entry.field,
                        packet: packet_index,
                        source,
                    })?;
            out.packets[packet_index] = set_field(packet, entry.field, &new_value)
                .map_err(|source| ApplyError::Field {
                    entry: entry_index,
                    field: entry.field,
                    packet: packet_index,
                    source,
                })?;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pcap::{parse_pcap, write_pcap, Trace};

    fn tcp_frame(src_ip: [u8; 4], dst_ip: [u8; 4], sport: u16, dport: u16) -> Vec<u8> {
        let mut seg = Vec::new();
        seg.extend_from_slice(&sport.to_be_bytes());
        seg.extend_from_slice(&dport.to_be_bytes());
        seg.extend_from_slice(&1u32.to_be_bytes());
        seg.extend_from_slice(&2u32.to_be_bytes());
        seg.push(0x50);
        seg.push(0x18);
        seg.extend_from_slice(&1024u16.to_be_bytes());
        seg.extend_from_slice(&[0, 0, 0, 0]);
        let total = 20 + seg.len();
        let mut ip = vec![0x45, 0];
        ip.extend_from_slice(&(total as u16).to_be_bytes());
        ip.extend_from_slice(&7u16.to_be_bytes());
        ip.extend_from_slice(&0u16.to_be_bytes());
        ip.push(64);
        ip.push(6);
        ip.extend_from_slice(&[0, 0]);
        ip.extend_from_slice(&src_ip);
        ip.extend_from_slice(&dst_ip);
        ip.extend_from_slice(&seg);
        let mut f = vec![1, 2, 3, 4, 5, 6, 9, 8, 7, 6, 5, 4, 0x08, 0x00];
        f.extend_from_slice(&ip);
        f
    }

    fn small_trace() -> Trace {
        Trace::from_ethernet_frames((0..10u32).map(|i| {
            (
                1000 + i,
                i * 100,
                tcp_frame([10, 0, 0, 1], [10, 0, 0, 2], 4000 + i as u16, 80),
            )
        }))
    }

    #[test]
    fn grammar_roundtrip() {
        let text = "\
# single-field example
policy p1
seed 7
entry field=TCP_DST_PORT algorithm=BlackMarker param.units=16 param.constant=0
";
        let p = parse_policy_file(text).unwrap();
        assert_eq!(p.name, "p1");
        assert_eq!(p.seed, 7);
        assert_eq!(p.entries.len(), 1);
        assert_eq!(p.entries[0].field, FieldPath::TcpDstPort);
        assert_eq!(p.entries[0].algorithm, AlgorithmKind::BlackMarker);
        assert_eq!(p.entries[0].params.get("units"), Some("16"));
        assert!(!p.is_multi_field());
    }

    #[test]
    fn duplicate_field_is_rejected_with_line() {
        let text = "policy p\nseed 1\nentry field=TCP_DST_PORT algorithm=Annihilation\nentry field=TCP_DST_PORT algorithm=Hash\n";
        assert_eq!(
            parse_policy_file(text),
            Err(PolicyParseError::DuplicateField {
                line: 4,
                field: FieldPath::TcpDstPort
            })
        );
    }

    #[test]
    fn unknown_names_are_rejected_with_line() {
        let text = "policy p\nseed 1\nentry field=TCP_DST_PORTS algorithm=Hash\n";
        assert_eq!(
            parse_policy_file(text),
            Err(PolicyParseError::UnknownField {
                line: 3,
                name: "TCP_DST_PORTS".to_string()
            })
        );
        let text = "policy p\nseed 1\nentry field=TCP_DST_PORT algorithm=Hashing\n";
        assert!(matches!(
            parse_policy_file(text),
            Err(PolicyParseError::UnknownAlgorithm { line: 3, .. })
        ));
    }

    #[test]
    fn incompatible_binding_fails_at_validate() {
        let text = "policy p\nseed 1\nentry field=TS_SEC algorithm=PrefixPreserving\n";
        let p = parse_policy_file(text).unwrap();
        let matrix = CompatibilityMatrix::default_matrix();
        let violations = validate(&p, &matrix);
        assert_eq!(violations.len(), 1);
        assert_eq!(violations[0].field, FieldPath::TsSec);
    }

    #[test]
    fn matrix_accepts_the_published_pairings() {
        let matrix = CompatibilityMatrix::default_matrix();
        assert!(matrix.permits(FieldPath::Ipv4SrcIp, AlgorithmKind::PrefixPreserving));
        assert!(matrix.permits(FieldPath::TsSec, AlgorithmKind::TimeEnumeration));
        assert!(!matrix.permits(FieldPath::TcpFlags, AlgorithmKind::RandomTimeShift));
        assert!(!matrix.permits(FieldPath::TcpDstPort, AlgorithmKind::PrefixPreserving));
        // Variable-width fields take only width-agnostic algorithms.
        assert_eq!(
            matrix.allowed(FieldPath::IcmpOrigData).unwrap().len(),
            2
        );
        assert!(matrix.is_type_consistent());
    }

    #[test]
    fn matrix_file_roundtrip() {
        let matrix = CompatibilityMatrix::default_matrix();
        let text = matrix.render();
        let parsed = CompatibilityMatrix::parse(&text).unwrap();
        assert_eq!(parsed, matrix);
    }

    #[test]
    fn enumeration_counts_pairs_exactly() {
        let mut matrix = CompatibilityMatrix::empty();
        matrix.insert(
            FieldPath::TcpWindow,
            [AlgorithmKind::Annihilation, AlgorithmKind::Hash],
        );
        matrix.insert(
            FieldPath::Ipv4Ttl,
            [
                AlgorithmKind::Annihilation,
                AlgorithmKind::Hash,
                AlgorithmKind::BlackMarker,
            ],
        );
        let policies = enumerate_single_field_policies(
            &matrix,
            &DefaultParams,
            &BTreeSet::new(),
            0,
        );
        assert_eq!(policies.len(), 5);
        assert_eq!(policies.len(), matrix.pair_count());

        let empty = enumerate_single_field_policies(
            &CompatibilityMatrix::empty(),
            &DefaultParams,
            &BTreeSet::new(),
            0,
        );
        assert!(empty.is_empty());
    }

    #[test]
    fn excluded_fields_are_absent() {
        let matrix = CompatibilityMatrix::default_matrix();
        let exclude: BTreeSet<FieldPath> = FieldPath::ALL
            .iter()
            .copied()
            .filter(|f| f.name().starts_with("ICMP_"))
            .collect();
        let policies =
            enumerate_single_field_policies(&matrix, &DefaultParams, &exclude, 0);
        assert!(policies
            .iter()
            .all(|p| !p.entries[0].field.name().starts_with("ICMP_")));
        let with_icmp =
            enumerate_single_field_policies(&matrix, &DefaultParams, &BTreeSet::new(), 0);
        assert!(with_icmp.len() > policies.len());
    }

    #[test]
    fn every_enumerated_policy_validates() {
        let matrix = CompatibilityMatrix::default_matrix();
        for policy in
            enumerate_single_field_policies(&matrix, &DefaultParams, &BTreeSet::new(), 3)
        {
            assert!(validate(&policy, &matrix).is_empty(), "{}", policy.name);
        }
    }

    #[test]
    fn empty_entry_policy_is_identity() {
        let trace = small_trace();
        let policy = Policy {
            name: "noop".to_string(),
            seed: 0,
            entries: vec![],
        };
        let out = apply_policy(&trace, &policy).unwrap();
        assert_eq!(write_pcap(&out), write_pcap(&trace));
    }

    #[test]
    fn single_field_policy_only_touches_that_field() {
        let trace = small_trace();
        let original = write_pcap(&trace);
        let policy = Policy::single(
            "zero-dst",
            1,
            FieldPath::TcpDstPort,
            AlgorithmKind::Substitution,
            AlgorithmParams::new().with("constant", "0"),
        );
        let out = apply_policy(&trace, &policy).unwrap();
        let rewritten = write_pcap(&out);
        assert_eq!(original.len(), rewritten.len());

        // Byte-diff oracle: global header 24, record header 16, frame
        // starts at 40 per record; dst port is frame bytes 36..38.
        let frame_len = trace.packets[0].frame.len();
        let record_len = 16 + frame_len;
        for (i, (a, b)) in original.iter().zip(rewritten.iter()).enumerate() {
            if a != b {
                let rec_off = (i - 24) % record_len;
                assert!(
                    rec_off == 16 + 36 || rec_off == 16 + 37,
                    "unexpected diff at {i} (record offset {rec_off})"
                );
            }
        }
        // And the field did change.
        assert_ne!(original, rewritten);
    }

    #[test]
    fn three_entry_policy_applies_all_three() {
        let text = "\
policy multi
seed 5
entry field=IPV4_SRC_IP algorithm=PrefixPreserving
entry field=TCP_SRC_PORT algorithm=RandomPermutation
entry field=TS_SEC algorithm=TimeEnumeration param.base=0 param.step=1000000
";
        let policy = parse_policy_file(text).unwrap();
        assert!(policy.is_multi_field());
        assert!(validate(&policy, &CompatibilityMatrix::default_matrix()).is_empty());

        let trace = small_trace();
        let out = apply_policy(&trace, &policy).unwrap();
        // Timestamps became the enumeration ranks.
        let secs: Vec<u32> = out.packets.iter().map(|p| p.ts_sec).collect();
        assert_eq!(secs, (0..10).collect::<Vec<u32>>());
        // Source IPs changed but stayed equal to each other (same input).
        let ip0 = get_field(&out.packets[0], FieldPath::Ipv4SrcIp).unwrap();
        let ip1 = get_field(&out.packets[1], FieldPath::Ipv4SrcIp).unwrap();
        assert_eq!(ip0, ip1);
        assert_ne!(
            ip0,
            get_field(&trace.packets[0], FieldPath::Ipv4SrcIp).unwrap()
        );
        // Ports were permuted injectively.
        let ports: BTreeSet<u64> = out
            .packets
            .iter()
            .map(|p| match get_field(p, FieldPath::TcpSrcPort).unwrap() {
                FieldValue::Number { value, .. } => value,
                _ => unreachable!(),
            })
            .collect();
        assert_eq!(ports.len(), 10);
    }

    #[test]
    fn disjoint_entries_commute() {
        let trace = small_trace();
        let e1 = PolicyEntry {
            field: FieldPath::TcpSrcPort,
            algorithm: AlgorithmKind::RandomPermutation,
            params: AlgorithmParams::new(),
        };
        let e2 = PolicyEntry {
            field: FieldPath::Ipv4SrcIp,
            algorithm: AlgorithmKind::PrefixPreserving,
            params: AlgorithmParams::new(),
        };
        let forward = Policy {
            name: "fw".to_string(),
            seed: 9,
            entries: vec![e1.clone(), e2.clone()],
        };
        let backward = Policy {
            name: "bw".to_string(),
            seed: 9,
            entries: vec![e2.clone(), e1.clone()],
        };
        let a = apply_policy(&trace, &forward).unwrap();
        let b = apply_policy(&trace, &backward).unwrap();
        assert_eq!(write_pcap(&a), write_pcap(&b));

        // Sequential composition equals the combined policy.
        let first = Policy {
            name: "first".to_string(),
            seed: 9,
            entries: vec![e1],
        };
        let second = Policy {
            name: "second".to_string(),
            seed: 9,
            entries: vec![e2],
        };
        let staged = apply_policy(&apply_policy(&trace, &first).unwrap(), &second).unwrap();
        assert_eq!(write_pcap(&staged), write_pcap(&a));
    }

    #[test]
    fn packets_without_the_field_pass_through() {
        let arp = vec![
            0u8, 0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 1, 0x08, 0x06, 0, 1, 8, 0, 6, 4, 0, 1,
        ];
        let mut frames = vec![(0u32, 0u32, arp.clone())];
        frames.push((1, 0, tcp_frame([10, 0, 0, 1], [10, 0, 0, 2], 99, 80)));
        let trace = Trace::from_ethernet_frames(frames);
        let policy = Policy::single(
            "zero",
            0,
            FieldPath::TcpDstPort,
            AlgorithmKind::Annihilation,
            AlgorithmParams::new(),
        );
        let out = apply_policy(&trace, &policy).unwrap();
        assert_eq!(out.packets[0].frame, arp);
        assert_eq!(
            get_field(&out.packets[1], FieldPath::TcpDstPort).unwrap(),
            FieldValue::number(0)
        );
    }

    #[test]
    fn apply_preserves_roundtrip_shape() {
        let trace = small_trace();
        let bytes = write_pcap(&trace);
        let reparsed = parse_pcap(&bytes).unwrap();
        assert_eq!(write_pcap(&reparsed), bytes);
    }
}
