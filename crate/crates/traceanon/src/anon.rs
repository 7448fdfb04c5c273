//! The anonymization algorithm catalog: deterministic, seedable transforms
//! over field values.
//!
//! Every algorithm is a pure function of `(seed, parameters, input trace)`.
//! Randomness comes from a ChaCha20 stream seeded per policy entry, so two
//! runs over the same input produce bit-identical output.
//!
//! Width is sacred: a fixed-width field keeps its bit width under every
//! algorithm here.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;

use bitvec::prelude::*;
use chrono::{Datelike, NaiveDate, TimeZone, Timelike, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::field::{Bits, DataType, FieldPath, FieldValue, Timestamp, MICROS_PER_SEC};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AnonError {
    #[error("prefix-preserving input must be exactly 32 bits, got {0}")]
    WrongWidth(usize),
    #[error("cannot remove {units} units from a field holding {available}")]
    TooManyUnits { units: usize, available: usize },
    #[error("bad classify boundaries: {0}")]
    BadBoundaries(String),
    #[error("width mismatch: expected {expected} bits, got {got}")]
    WidthMismatch { expected: usize, got: usize },
    #[error("{algorithm} cannot anonymize a {value_type} value")]
    TypeMismatch {
        algorithm: AlgorithmKind,
        value_type: &'static str,
    },
    #[error("timestamp write out of range for field")]
    TimestampRange,
}

/// Parameter validation failures, reported before any packet is touched.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParamError {
    #[error("unrecognized parameter `{key}` for {algorithm}")]
    UnknownKey { algorithm: AlgorithmKind, key: String },
    #[error("bad value for `{key}`: {reason}")]
    BadValue { key: String, reason: String },
    #[error("missing required parameter `{key}` for {algorithm}")]
    Missing { algorithm: AlgorithmKind, key: String },
}

macro_rules! algorithm_kinds {
    ($( $variant:ident => ($name:literal, [$($dt:ident),+]) ),+ $(,)?) => {
        /// One of the supported anonymization algorithms.
        #[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
        pub enum AlgorithmKind {
            $($variant),+
        }

        impl AlgorithmKind {
            pub const ALL: &'static [AlgorithmKind] = &[$(AlgorithmKind::$variant),+];

            pub fn name(self) -> &'static str {
                match self { $(AlgorithmKind::$variant => $name),+ }
            }

            pub fn parse(s: &str) -> Option<AlgorithmKind> {
                match s {
                    $($name => Some(AlgorithmKind::$variant),)+
                    _ => None,
                }
            }

            /// The data types the algorithm is declared to operate on.
            pub fn applicable_data_types(self) -> &'static [DataType] {
                match self {
                    $(AlgorithmKind::$variant => &[$(DataType::$dt),+]),+
                }
            }
        }
    };
}

algorithm_kinds! {
    PrefixPreserving     => ("PrefixPreserving",     [Binary]),
    Truncation           => ("Truncation",           [Binary, Numeric]),
    Hash                 => ("Hash",                 [Binary]),
    BlackMarker          => ("BlackMarker",          [Binary]),
    TimeUnitAnnihilation => ("TimeUnitAnnihilation", [Timestamp]),
    RandomTimeShift      => ("RandomTimeShift",      [Timestamp]),
    TimeEnumeration      => ("TimeEnumeration",      [Timestamp]),
    RandomPermutation    => ("RandomPermutation",    [Binary]),
    Annihilation         => ("Annihilation",         [Binary]),
    Classify             => ("Classify",             [Numeric]),
    Substitution         => ("Substitution",         [Binary, Numeric]),
}

impl fmt::Display for AlgorithmKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl AlgorithmKind {
    /// Whether this algorithm may be bound to `field`.
    ///
    /// Numeric fields are bit patterns too, so binary algorithms accept
    /// them by operating on the underlying bits. The reverse widening does
    /// not exist, and timestamps only ever meet timestamp algorithms.
    pub fn applies_to(self, field: FieldPath) -> bool {
        let dts = self.applicable_data_types();
        match field.data_type() {
            DataType::Timestamp => dts.contains(&DataType::Timestamp),
            DataType::Numeric => {
                dts.contains(&DataType::Numeric) || dts.contains(&DataType::Binary)
            }
            DataType::Binary => dts.contains(&DataType::Binary),
        }
    }
}

/// Calendar units for `TimeUnitAnnihilation`.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum TimeUnit {
    Year,
    Month,
    Day,
    Hour,
    Minute,
    Second,
    Microsecond,
}

impl TimeUnit {
    pub const ALL: &'static [TimeUnit] = &[
        TimeUnit::Year,
        TimeUnit::Month,
        TimeUnit::Day,
        TimeUnit::Hour,
        TimeUnit::Minute,
        TimeUnit::Second,
        TimeUnit::Microsecond,
    ];

    pub fn parse(s: &str) -> Option<TimeUnit> {
        Some(match s {
            "year" => TimeUnit::Year,
            "month" => TimeUnit::Month,
            "day" => TimeUnit::Day,
            "hour" => TimeUnit::Hour,
            "minute" => TimeUnit::Minute,
            "second" => TimeUnit::Second,
            "microsecond" => TimeUnit::Microsecond,
            _ => return None,
        })
    }
}

/// Raw `key=value` parameters as written in a policy file.
#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct AlgorithmParams {
    entries: BTreeMap<String, String>,
}

impl AlgorithmParams {
    pub fn new() -> AlgorithmParams {
        AlgorithmParams::default()
    }

    pub fn set(&mut self, key: &str, value: &str) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn with(mut self, key: &str, value: &str) -> AlgorithmParams {
        self.set(key, value);
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Prefix or suffix orientation for unit-level operations.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Direction {
    Prefix,
    Suffix,
}

/// A unit count that may be "everything the field holds".
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum UnitCount {
    All,
    Exactly(usize),
}

impl UnitCount {
    fn resolve(self, available: usize) -> usize {
        match self {
            UnitCount::All => available,
            UnitCount::Exactly(n) => n,
        }
    }
}

/// Parameters after validation, with defaults filled in.
#[derive(Clone, Debug)]
enum ResolvedParams {
    PrefixPreserving {
        key: Option<[u8; 32]>,
    },
    Truncation {
        units: UnitCount,
        direction: Direction,
        fill: u8,
    },
    Hash {
        truncate_to_width: Option<usize>,
    },
    BlackMarker {
        units: UnitCount,
        direction: Direction,
        constant: u8,
    },
    TimeUnitAnnihilation {
        units_to_zero: BTreeSet<TimeUnit>,
    },
    RandomTimeShift {
        window_seconds: u64,
    },
    TimeEnumeration {
        base_us: i64,
        step_us: i64,
    },
    RandomPermutation,
    Annihilation,
    Classify {
        boundaries: Vec<u64>,
        representatives: Vec<u64>,
    },
    Substitution {
        constant: u64,
    },
}

fn parse_u64(key: &str, v: &str) -> Result<u64, ParamError> {
    let (digits, radix) = match v.strip_prefix("0x") {
        Some(hex) => (hex, 16),
        None => (v, 10),
    };
    u64::from_str_radix(digits, radix).map_err(|e| ParamError::BadValue {
        key: key.to_string(),
        reason: e.to_string(),
    })
}

fn parse_units(v: &str) -> Result<UnitCount, ParamError> {
    if v == "all" {
        Ok(UnitCount::All)
    } else {
        Ok(UnitCount::Exactly(parse_u64("units", v)? as usize))
    }
}

fn parse_direction(v: &str) -> Result<Direction, ParamError> {
    match v {
        "prefix" => Ok(Direction::Prefix),
        "suffix" => Ok(Direction::Suffix),
        _ => Err(ParamError::BadValue {
            key: "direction".to_string(),
            reason: format!("expected prefix|suffix, got `{v}`"),
        }),
    }
}

fn parse_u64_list(key: &str, v: &str) -> Result<Vec<u64>, ParamError> {
    if v.is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|item| parse_u64(key, item.trim())).collect()
}

fn check_keys(
    kind: AlgorithmKind,
    params: &AlgorithmParams,
    recognized: &[&str],
) -> Result<(), ParamError> {
    for (key, _) in params.iter() {
        if !recognized.contains(&key) {
            return Err(ParamError::UnknownKey {
                algorithm: kind,
                key: key.to_string(),
            });
        }
    }
    Ok(())
}

/// Validates `params` for `kind` and fills in documented defaults.
///
/// Unrecognized keys are rejected outright.
fn resolve_params(kind: AlgorithmKind, params: &AlgorithmParams) -> Result<ResolvedParams, ParamError> {
    match kind {
        AlgorithmKind::PrefixPreserving => {
            check_keys(kind, params, &["key"])?;
            let key = match params.get("key") {
                None => None,
                Some(hexkey) => {
                    let bytes = hex::decode(hexkey).map_err(|e| ParamError::BadValue {
                        key: "key".to_string(),
                        reason: e.to_string(),
                    })?;
                    let arr: [u8; 32] = bytes.try_into().map_err(|_| ParamError::BadValue {
                        key: "key".to_string(),
                        reason: "key must be 32 hex-encoded bytes".to_string(),
                    })?;
                    Some(arr)
                }
            };
            Ok(ResolvedParams::PrefixPreserving { key })
        }
        AlgorithmKind::Truncation => {
            check_keys(kind, params, &["units", "direction", "fill"])?;
            Ok(ResolvedParams::Truncation {
                units: params.get("units").map(parse_units).transpose()?.unwrap_or(UnitCount::All),
                direction: params
                    .get("direction")
                    .map(parse_direction)
                    .transpose()?
                    .unwrap_or(Direction::Suffix),
                fill: params
                    .get("fill")
                    .map(|v| parse_u64("fill", v))
                    .transpose()?
                    .unwrap_or(0) as u8,
            })
        }
        AlgorithmKind::Hash => {
            check_keys(kind, params, &["digest", "truncate_to_width"])?;
            if let Some(d) = params.get("digest") {
                if d != "sha256" {
                    return Err(ParamError::BadValue {
                        key: "digest".to_string(),
                        reason: format!("only sha256 is supported, got `{d}`"),
                    });
                }
            }
            let truncate_to_width = params
                .get("truncate_to_width")
                .map(|v| parse_u64("truncate_to_width", v).map(|n| n as usize))
                .transpose()?;
            if let Some(w) = truncate_to_width {
                if w == 0 || w > 256 {
                    return Err(ParamError::BadValue {
                        key: "truncate_to_width".to_string(),
                        reason: "width must be 1..=256 bits".to_string(),
                    });
                }
            }
            Ok(ResolvedParams::Hash { truncate_to_width })
        }
        AlgorithmKind::BlackMarker => {
            check_keys(kind, params, &["units", "direction", "constant"])?;
            let constant = params
                .get("constant")
                .map(|v| parse_u64("constant", v))
                .transpose()?
                .unwrap_or(0);
            if constant > 1 {
                return Err(ParamError::BadValue {
                    key: "constant".to_string(),
                    reason: "bit constant must be 0 or 1".to_string(),
                });
            }
            Ok(ResolvedParams::BlackMarker {
                units: params.get("units").map(parse_units).transpose()?.unwrap_or(UnitCount::All),
                direction: params
                    .get("direction")
                    .map(parse_direction)
                    .transpose()?
                    .unwrap_or(Direction::Prefix),
                constant: constant as u8,
            })
        }
        AlgorithmKind::TimeUnitAnnihilation => {
            check_keys(kind, params, &["units_to_zero"])?;
            let raw = params
                .get("units_to_zero")
                .unwrap_or("hour,minute,second,microsecond");
            let mut units = BTreeSet::new();
            if !raw.is_empty() {
                for item in raw.split(',') {
                    let unit = TimeUnit::parse(item.trim()).ok_or_else(|| ParamError::BadValue {
                        key: "units_to_zero".to_string(),
                        reason: format!("unknown time unit `{item}`"),
                    })?;
                    units.insert(unit);
                }
            }
            Ok(ResolvedParams::TimeUnitAnnihilation { units_to_zero: units })
        }
        AlgorithmKind::RandomTimeShift => {
            check_keys(kind, params, &["window_seconds"])?;
            Ok(ResolvedParams::RandomTimeShift {
                window_seconds: params
                    .get("window_seconds")
                    .map(|v| parse_u64("window_seconds", v))
                    .transpose()?
                    .unwrap_or(86_400),
            })
        }
        AlgorithmKind::TimeEnumeration => {
            check_keys(kind, params, &["base", "step"])?;
            let base_us = params
                .get("base")
                .map(|v| parse_u64("base", v))
                .transpose()?
                .unwrap_or(0) as i64;
            let step_us = params
                .get("step")
                .map(|v| parse_u64("step", v))
                .transpose()?
                .unwrap_or(MICROS_PER_SEC as u64) as i64;
            if step_us <= 0 {
                return Err(ParamError::BadValue {
                    key: "step".to_string(),
                    reason: "step must be positive".to_string(),
                });
            }
            Ok(ResolvedParams::TimeEnumeration { base_us, step_us })
        }
        AlgorithmKind::RandomPermutation => {
            check_keys(kind, params, &[])?;
            Ok(ResolvedParams::RandomPermutation)
        }
        AlgorithmKind::Annihilation => {
            check_keys(kind, params, &[])?;
            Ok(ResolvedParams::Annihilation)
        }
        AlgorithmKind::Classify => {
            check_keys(kind, params, &["boundaries", "representatives"])?;
            let boundaries = params
                .get("boundaries")
                .map(|v| parse_u64_list("boundaries", v))
                .transpose()?
                .unwrap_or_else(|| vec![1024]);
            let representatives = match params.get("representatives") {
                Some(v) => parse_u64_list("representatives", v)?,
                // Default representatives are the bin lower bounds.
                None => std::iter::once(0)
                    .chain(boundaries.iter().copied())
                    .collect(),
            };
            if !boundaries.windows(2).all(|w| w[0] < w[1]) {
                return Err(ParamError::BadValue {
                    key: "boundaries".to_string(),
                    reason: "boundaries must be strictly ascending".to_string(),
                });
            }
            if representatives.len() != boundaries.len() + 1 {
                return Err(ParamError::BadValue {
                    key: "representatives".to_string(),
                    reason: format!(
                        "need {} representatives for {} boundaries",
                        boundaries.len() + 1,
                        boundaries.len()
                    ),
                });
            }
            Ok(ResolvedParams::Classify {
                boundaries,
                representatives,
            })
        }
        AlgorithmKind::Substitution => {
            check_keys(kind, params, &["constant"])?;
            Ok(ResolvedParams::Substitution {
                constant: params
                    .get("constant")
                    .map(|v| parse_u64("constant", v))
                    .transpose()?
                    .unwrap_or(0),
            })
        }
    }
}

/// Validates parameters for an algorithm without running anything.
pub fn validate_params(kind: AlgorithmKind, params: &AlgorithmParams) -> Result<(), ParamError> {
    resolve_params(kind, params).map(|_| ())
}

/// Per-run randomness and lazily built mappings for one policy entry.
pub struct AnonymizerState {
    seed: u64,
    pp_key: [u8; 32],
    rng: ChaCha20Rng,
    permutation: HashMap<u64, u64>,
    permutation_used: HashSet<u64>,
    enumeration: Option<BTreeMap<Timestamp, usize>>,
    shift_delta_us: Option<i64>,
}

impl AnonymizerState {
    pub fn from_seed(seed: u64) -> AnonymizerState {
        AnonymizerState {
            seed,
            pp_key: derive_key(seed, b"prefix-preserving"),
            rng: ChaCha20Rng::from_seed(derive_key(seed, b"stream")),
            permutation: HashMap::new(),
            permutation_used: HashSet::new(),
            enumeration: None,
            shift_delta_us: None,
        }
    }

    /// State for entry `field` of a policy seeded with `policy_seed`.
    ///
    /// Deriving from the field name rather than the entry position keeps an
    /// entry's randomness stable when other entries are added or reordered.
    pub fn for_policy_entry(policy_seed: u64, field: FieldPath) -> AnonymizerState {
        let mut hasher = Sha256::new();
        hasher.update(policy_seed.to_be_bytes());
        hasher.update(field.name().as_bytes());
        let digest = hasher.finalize();
        AnonymizerState::from_seed(u64::from_be_bytes(digest[..8].try_into().unwrap()))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn pp_key(&self) -> &[u8; 32] {
        &self.pp_key
    }
}

fn derive_key(seed: u64, label: &[u8]) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(label);
    hasher.update(seed.to_be_bytes());
    hasher.finalize().into()
}

/// Keyed prefix-preserving permutation over 32-bit values.
///
/// Bit `i` of the output is the input bit XORed with a pseudorandom
/// function of the `i`-bit prefix, so two addresses agree on exactly as
/// many leading bits after anonymization as before.
pub fn prefix_preserving_u32(addr: u32, key: &[u8; 32]) -> u32 {
    let mut out = 0u32;
    for i in 0..32 {
        let prefix = if i == 0 { 0 } else { addr >> (32 - i) };
        let mut hasher = Sha256::new();
        hasher.update(key);
        hasher.update([i as u8]);
        hasher.update(prefix.to_be_bytes());
        let flip = hasher.finalize()[0] >> 7;
        let in_bit = (addr >> (31 - i)) & 1;
        out = (out << 1) | (in_bit ^ flip as u32);
    }
    out
}

/// Prefix-preserving permutation on a 32-bit binary field value.
pub fn prefix_preserving(v: &FieldValue, state: &AnonymizerState) -> Result<FieldValue, AnonError> {
    let bits = match v {
        FieldValue::Bits(b) => b,
        _ => return Err(AnonError::WrongWidth(0)),
    };
    if bits.len() != 32 {
        return Err(AnonError::WrongWidth(bits.len()));
    }
    let addr = bits.load_be::<u32>();
    let mut out = Bits::repeat(false, 32);
    out.store_be::<u32>(prefix_preserving_u32(addr, &state.pp_key));
    Ok(FieldValue::Bits(out))
}

fn digits_in_base(value: u64, base: u32) -> usize {
    let mut n = 1;
    let mut v = value / base as u64;
    while v > 0 {
        n += 1;
        v /= base as u64;
    }
    n
}

/// Removes `units` leading or trailing units and zero-fills them in place,
/// preserving the field width. Units are bits for binary values and digits
/// (in the value's base) for numbers.
pub fn truncate(v: &FieldValue, units: usize, direction: Direction) -> Result<FieldValue, AnonError> {
    truncate_filled(v, units, direction, 0)
}

pub fn truncate_filled(
    v: &FieldValue,
    units: usize,
    direction: Direction,
    fill: u8,
) -> Result<FieldValue, AnonError> {
    match v {
        FieldValue::Bits(bits) => {
            if units > bits.len() {
                return Err(AnonError::TooManyUnits {
                    units,
                    available: bits.len(),
                });
            }
            let mut out = bits.clone();
            let range = match direction {
                Direction::Prefix => 0..units,
                Direction::Suffix => bits.len() - units..bits.len(),
            };
            for i in range {
                out.set(i, fill & 1 == 1);
            }
            Ok(FieldValue::Bits(out))
        }
        FieldValue::Number { value, base } => {
            let total = digits_in_base(*value, *base);
            if units > total {
                return Err(AnonError::TooManyUnits {
                    units,
                    available: total,
                });
            }
            if fill as u32 >= *base {
                return Err(AnonError::BadBoundaries(format!(
                    "fill digit {fill} not valid in base {base}"
                )));
            }
            let b = *base as u64;
            let mut digits: Vec<u64> = Vec::with_capacity(total);
            let mut rest = *value;
            for _ in 0..total {
                digits.push(rest % b);
                rest /= b;
            }
            digits.reverse();
            let range = match direction {
                Direction::Prefix => 0..units,
                Direction::Suffix => total - units..total,
            };
            for i in range {
                digits[i] = fill as u64;
            }
            let new_value = digits.iter().fold(0u64, |acc, d| acc * b + d);
            Ok(FieldValue::Number {
                value: new_value,
                base: *base,
            })
        }
        FieldValue::Timestamp(_) => Err(AnonError::TypeMismatch {
            algorithm: AlgorithmKind::Truncation,
            value_type: "timestamp",
        }),
    }
}

/// Keyed SHA-256 digest of the field bits, truncated to `out_width` bits.
///
/// Truncation to narrow fields is lossy by design; equal inputs still map
/// to equal outputs under the same key, and collisions between distinct
/// inputs become possible — callers that care must scan for them.
pub fn hash_value(bits: &Bits, key: &[u8; 32], out_width: usize) -> Bits {
    let mut hasher = Sha256::new();
    hasher.update(key);
    hasher.update((bits.len() as u64).to_be_bytes());
    let mut padded = bits.clone();
    // Pad to a byte boundary so the raw slice is well-defined.
    while padded.len() % 8 != 0 {
        padded.push(false);
    }
    hasher.update(padded.as_raw_slice());
    let digest = hasher.finalize();
    let full = Bits::from_slice(&digest);
    full[..out_width.min(full.len())].to_bitvec()
}

/// Overwrites `units` leading or trailing bits with a constant bit value.
pub fn black_marker(
    v: &FieldValue,
    units: usize,
    direction: Direction,
    constant: u8,
) -> Result<FieldValue, AnonError> {
    let bits = match v {
        FieldValue::Bits(b) => b.clone(),
        _ => {
            return Err(AnonError::TypeMismatch {
                algorithm: AlgorithmKind::BlackMarker,
                value_type: "non-binary",
            })
        }
    };
    if units > bits.len() {
        return Err(AnonError::TooManyUnits {
            units,
            available: bits.len(),
        });
    }
    let mut out = bits.clone();
    let range = match direction {
        Direction::Prefix => 0..units,
        Direction::Suffix => bits.len() - units..bits.len(),
    };
    for i in range {
        out.set(i, constant & 1 == 1);
    }
    Ok(FieldValue::Bits(out))
}

/// Sets the named calendar units of the UTC broken-down time to their
/// minimum (hour/minute/second/microsecond to 0, day/month to 1, year to
/// 1970) and re-encodes.
pub fn time_unit_annihilation(ts: Timestamp, units: &BTreeSet<TimeUnit>) -> Timestamp {
    if units.is_empty() {
        return ts;
    }
    let dt = Utc
        .timestamp_opt(ts.sec(), (ts.usec() * 1000) as u32)
        .single()
        .expect("timestamp within chrono range");
    let mut year = dt.year();
    let mut month = dt.month();
    let mut day = dt.day();
    let mut hour = dt.hour();
    let mut minute = dt.minute();
    let mut second = dt.second();
    let mut usec = ts.usec();
    for unit in units {
        match unit {
            TimeUnit::Year => year = 1970,
            TimeUnit::Month => month = 1,
            TimeUnit::Day => day = 1,
            TimeUnit::Hour => hour = 0,
            TimeUnit::Minute => minute = 0,
            TimeUnit::Second => second = 0,
            TimeUnit::Microsecond => usec = 0,
        }
    }
    // Clamp the day so e.g. March 31 with month zeroed to a shorter month
    // still forms a real date.
    let date = NaiveDate::from_ymd_opt(year, month, day)
        .or_else(|| NaiveDate::from_ymd_opt(year, month, 28))
        .expect("valid calendar date");
    let dt = date
        .and_hms_opt(hour, minute, second)
        .expect("valid wall time")
        .and_utc();
    Timestamp::new(dt.timestamp(), usec)
}

/// Draws one uniform delta in [-window, +window] seconds (microsecond
/// granularity) and shifts every timestamp by it, preserving all gaps.
pub fn random_time_shift(
    timestamps: &[Timestamp],
    window_seconds: u64,
    state: &mut AnonymizerState,
) -> Vec<Timestamp> {
    let delta = shift_delta(window_seconds, state);
    timestamps.iter().map(|t| t.shifted(delta)).collect()
}

fn shift_delta(window_seconds: u64, state: &mut AnonymizerState) -> i64 {
    if let Some(d) = state.shift_delta_us {
        return d;
    }
    let w = window_seconds as i64 * MICROS_PER_SEC;
    let d = if w == 0 { 0 } else { state.rng.gen_range(-w..=w) };
    state.shift_delta_us = Some(d);
    d
}

/// Order-preserving, distance-destroying remapping: the i-th distinct
/// timestamp becomes `base + i * step` (both in microseconds).
pub fn time_enumeration(timestamps: &[Timestamp], base_us: i64, step_us: i64) -> Vec<Timestamp> {
    let table = enumeration_table(timestamps.iter().copied());
    timestamps
        .iter()
        .map(|t| Timestamp::from_micros(base_us + table[t] as i64 * step_us))
        .collect()
}

fn enumeration_table(timestamps: impl Iterator<Item = Timestamp>) -> BTreeMap<Timestamp, usize> {
    let distinct: BTreeSet<Timestamp> = timestamps.collect();
    distinct.into_iter().enumerate().map(|(i, t)| (t, i)).collect()
}

/// Lazily built random bijection over the field's value domain. The first
/// occurrence of a value draws an unused image of the same width; repeats
/// reuse it.
pub fn random_permutation(v: &FieldValue, state: &mut AnonymizerState) -> Result<FieldValue, AnonError> {
    let bits = match v {
        FieldValue::Bits(b) => b,
        _ => {
            return Err(AnonError::TypeMismatch {
                algorithm: AlgorithmKind::RandomPermutation,
                value_type: "non-binary",
            })
        }
    };
    let width = bits.len();
    if width == 0 || width > 64 {
        return Err(AnonError::WrongWidth(width));
    }
    let value = bits.load_be::<u64>();
    let image = match state.permutation.get(&value) {
        Some(img) => *img,
        None => {
            let mask = if width == 64 { u64::MAX } else { (1u64 << width) - 1 };
            let img = loop {
                let candidate = state.rng.gen::<u64>() & mask;
                if state.permutation_used.insert(candidate) {
                    break candidate;
                }
            };
            state.permutation.insert(value, img);
            img
        }
    };
    let mut out = Bits::repeat(false, width);
    out.store_be::<u64>(image);
    Ok(FieldValue::Bits(out))
}

/// Replaces the field with the NULL value: all bits zero, width preserved.
pub fn annihilate(v: &FieldValue) -> FieldValue {
    match v {
        FieldValue::Bits(b) => FieldValue::Bits(Bits::repeat(false, b.len())),
        FieldValue::Number { base, .. } => FieldValue::Number { value: 0, base: *base },
        FieldValue::Timestamp(_) => FieldValue::Timestamp(Timestamp::from_micros(0)),
    }
}

/// Maps a value to the representative of its bin. Bins are left-closed and
/// right-open between consecutive boundaries, with open bins below the
/// first boundary and from the last boundary up.
pub fn classify(value: u64, boundaries: &[u64], representatives: &[u64]) -> Result<u64, AnonError> {
    if !boundaries.windows(2).all(|w| w[0] < w[1]) {
        return Err(AnonError::BadBoundaries(
            "boundaries must be strictly ascending".to_string(),
        ));
    }
    if representatives.len() != boundaries.len() + 1 {
        return Err(AnonError::BadBoundaries(format!(
            "need {} representatives, got {}",
            boundaries.len() + 1,
            representatives.len()
        )));
    }
    let bin = boundaries.partition_point(|b| *b <= value);
    Ok(representatives[bin])
}

/// Replaces every value with `constant`. Widths must agree for bit strings.
pub fn substitute(v: &FieldValue, constant: &FieldValue) -> Result<FieldValue, AnonError> {
    match (v, constant) {
        (FieldValue::Bits(b), FieldValue::Bits(c)) => {
            if b.len() != c.len() {
                return Err(AnonError::WidthMismatch {
                    expected: b.len(),
                    got: c.len(),
                });
            }
            Ok(FieldValue::Bits(c.clone()))
        }
        (FieldValue::Number { base, .. }, FieldValue::Number { value, .. }) => {
            Ok(FieldValue::Number {
                value: *value,
                base: *base,
            })
        }
        _ => Err(AnonError::TypeMismatch {
            algorithm: AlgorithmKind::Substitution,
            value_type: "mixed",
        }),
    }
}

/// One configured algorithm bound to a field, ready to run over a trace.
pub struct Anonymizer {
    kind: AlgorithmKind,
    params: ResolvedParams,
    state: AnonymizerState,
}

impl Anonymizer {
    pub fn new(
        kind: AlgorithmKind,
        params: &AlgorithmParams,
        state: AnonymizerState,
    ) -> Result<Anonymizer, ParamError> {
        Ok(Anonymizer {
            kind,
            params: resolve_params(kind, params)?,
            state,
        })
    }

    pub fn kind(&self) -> AlgorithmKind {
        self.kind
    }

    /// Whole-trace pre-pass. Only enumeration needs it: the rank table must
    /// see every value before the first packet is rewritten.
    pub fn prepare<'a>(&mut self, values: impl Iterator<Item = &'a FieldValue>) {
        if let ResolvedParams::TimeEnumeration { .. } = self.params {
            let timestamps = values.filter_map(|v| match v {
                FieldValue::Timestamp(t) => Some(*t),
                _ => None,
            });
            self.state.enumeration = Some(enumeration_table(timestamps));
        }
    }

    /// Transforms one field value. `field_width` is the bit width of the
    /// field instance being rewritten, used to coerce numeric values when a
    /// binary algorithm is bound to a numeric field.
    pub fn transform(&mut self, v: &FieldValue, field_width: usize) -> Result<FieldValue, AnonError> {
        match &self.params {
            ResolvedParams::PrefixPreserving { key } => {
                let state_key = *key.as_ref().unwrap_or(&self.state.pp_key);
                let bits = coerce_to_bits(v, field_width)?;
                if bits.len() != 32 {
                    return Err(AnonError::WrongWidth(bits.len()));
                }
                let addr = bits.load_be::<u32>();
                let mut out = Bits::repeat(false, 32);
                out.store_be::<u32>(prefix_preserving_u32(addr, &state_key));
                uncoerce(v, FieldValue::Bits(out))
            }
            ResolvedParams::Truncation {
                units,
                direction,
                fill,
            } => {
                let available = match v {
                    FieldValue::Bits(b) => b.len(),
                    FieldValue::Number { value, base } => digits_in_base(*value, *base),
                    FieldValue::Timestamp(_) => {
                        return Err(AnonError::TypeMismatch {
                            algorithm: self.kind,
                            value_type: "timestamp",
                        })
                    }
                };
                truncate_filled(v, units.resolve(available), *direction, *fill)
            }
            ResolvedParams::Hash { truncate_to_width } => {
                let bits = coerce_to_bits(v, field_width)?;
                let out_width = truncate_to_width.unwrap_or(bits.len());
                let hashed = hash_value(&bits, &self.state.pp_key, out_width);
                uncoerce(v, FieldValue::Bits(hashed))
            }
            ResolvedParams::BlackMarker {
                units,
                direction,
                constant,
            } => {
                let bits = coerce_to_bits(v, field_width)?;
                let n = units.resolve(bits.len());
                let out = black_marker(&FieldValue::Bits(bits), n, *direction, *constant)?;
                uncoerce(v, out)
            }
            ResolvedParams::TimeUnitAnnihilation { units_to_zero } => match v {
                FieldValue::Timestamp(ts) => {
                    Ok(FieldValue::Timestamp(time_unit_annihilation(*ts, units_to_zero)))
                }
                _ => Err(AnonError::TypeMismatch {
                    algorithm: self.kind,
                    value_type: "non-timestamp",
                }),
            },
            ResolvedParams::RandomTimeShift { window_seconds } => match v {
                FieldValue::Timestamp(ts) => {
                    let delta = shift_delta(*window_seconds, &mut self.state);
                    Ok(FieldValue::Timestamp(ts.shifted(delta)))
                }
                _ => Err(AnonError::TypeMismatch {
                    algorithm: self.kind,
                    value_type: "non-timestamp",
                }),
            },
            ResolvedParams::TimeEnumeration { base_us, step_us } => match v {
                FieldValue::Timestamp(ts) => {
                    let table = self
                        .state
                        .enumeration
                        .as_ref()
                        .expect("prepare() must run before enumeration transforms");
                    let rank = *table.get(ts).expect("value seen during prepare");
                    Ok(FieldValue::Timestamp(Timestamp::from_micros(
                        base_us + rank as i64 * step_us,
                    )))
                }
                _ => Err(AnonError::TypeMismatch {
                    algorithm: self.kind,
                    value_type: "non-timestamp",
                }),
            },
            ResolvedParams::RandomPermutation => {
                let bits = coerce_to_bits(v, field_width)?;
                let out = random_permutation(&FieldValue::Bits(bits), &mut self.state)?;
                uncoerce(v, out)
            }
            ResolvedParams::Annihilation => Ok(annihilate(v)),
            ResolvedParams::Classify {
                boundaries,
                representatives,
            } => match v {
                FieldValue::Number { value, base } => Ok(FieldValue::Number {
                    value: classify(*value, boundaries, representatives)?,
                    base: *base,
                }),
                _ => Err(AnonError::TypeMismatch {
                    algorithm: self.kind,
                    value_type: "non-numeric",
                }),
            },
            ResolvedParams::Substitution { constant } => match v {
                FieldValue::Number { base, .. } => Ok(FieldValue::Number {
                    value: *constant,
                    base: *base,
                }),
                FieldValue::Bits(b) => {
                    if !crate::field::fits_in_width(*constant, b.len()) {
                        return Err(AnonError::WidthMismatch {
                            expected: b.len(),
                            got: 64 - constant.leading_zeros() as usize,
                        });
                    }
                    let mut out = Bits::repeat(false, b.len());
                    if b.len() <= 64 {
                        out.store_be::<u64>(*constant);
                        Ok(FieldValue::Bits(out))
                    } else {
                        // Wide fields: right-align the constant.
                        let mut tail = Bits::repeat(false, 64);
                        tail.store_be::<u64>(*constant);
                        let start = b.len() - 64;
                        out[start..].copy_from_bitslice(&tail);
                        Ok(FieldValue::Bits(out))
                    }
                }
                FieldValue::Timestamp(_) => Err(AnonError::TypeMismatch {
                    algorithm: self.kind,
                    value_type: "timestamp",
                }),
            },
        }
    }
}

fn coerce_to_bits(v: &FieldValue, field_width: usize) -> Result<Bits, AnonError> {
    match v {
        FieldValue::Bits(b) => Ok(b.clone()),
        FieldValue::Number { .. } => v.to_bits(field_width).ok_or(AnonError::WidthMismatch {
            expected: field_width,
            got: 64,
        }),
        FieldValue::Timestamp(_) => Err(AnonError::TypeMismatch {
            algorithm: AlgorithmKind::Hash,
            value_type: "timestamp",
        }),
    }
}

/// Folds a bit-level result back into the shape of the original value, so
/// numeric fields stay numeric after a binary algorithm ran on their bits.
fn uncoerce(original: &FieldValue, result: FieldValue) -> Result<FieldValue, AnonError> {
    match (original, result) {
        (FieldValue::Number { base, .. }, FieldValue::Bits(bits)) => {
            if bits.len() > 64 {
                return Err(AnonError::WrongWidth(bits.len()));
            }
            Ok(FieldValue::Number {
                value: bits.load_be::<u64>(),
                base: *base,
            })
        }
        (_, out) => Ok(out),
    }
}
