//! Field-level anonymization of libpcap network traces, and a harness that
//! measures what the anonymization cost you.
//!
//! The pipeline: parse a capture ([`pcap`]), bind anonymization algorithms
//! to packet fields with a policy ([`policy`], [`anon`]), generate alert
//! sets before and after with a signature engine or ingested Snort CSV
//! output ([`ids`]), and score the difference as multiset TP/FP/FN with
//! per-field and per-algorithm marginals ([`metrics`]). The [`harness`]
//! module and the `traceanon` binary drive whole sweeps reproducibly.
//!
//! ```
//! use traceanon::anon::{AlgorithmKind, AlgorithmParams, Anonymizer, AnonymizerState};
//! use traceanon::field::FieldValue;
//!
//! // Zero a 16-bit port the way a black-marker policy entry would.
//! let mut anon = Anonymizer::new(
//!     AlgorithmKind::BlackMarker,
//!     &AlgorithmParams::new().with("units", "16").with("constant", "0"),
//!     AnonymizerState::from_seed(7),
//! )
//! .unwrap();
//! assert_eq!(
//!     anon.transform(&FieldValue::number(8080), 16).unwrap(),
//!     FieldValue::number(0)
//! );
//! ```

pub mod anon;
pub mod field;
pub mod harness;
pub mod ids;
pub mod metrics;
pub mod pcap;
pub mod policy;
pub mod report;

pub use anon::{AlgorithmKind, AlgorithmParams, Anonymizer, AnonymizerState};
pub use field::{Bits, DataType, FieldPath, FieldValue, Timestamp};
pub use ids::{Alert, AlertField, AlertSet, Rule, RuleSet};
pub use metrics::{compare, ComparisonResult, FieldSet};
pub use pcap::{
    filter_protocols, get_field, parse_pcap, set_field, write_pcap, PacketRecord, Trace,
    Transport,
};
pub use policy::{apply_policy, parse_policy_file, CompatibilityMatrix, Policy, PolicyEntry};

// The guide chapters double as doctests so the book can never drift from
// the library.
#[cfg(doctest)]
mod book;
