//! End-to-end experiment orchestration: baseline detection, policy sweeps,
//! comparison, aggregation, and reproducible run manifests.
//!
//! Everything a sweep writes is a pure function of its inputs: seeds drive
//! all randomness, rows are sorted by policy name, and manifests carry
//! digests instead of wall-clock timestamps. Running the same sweep twice
//! produces byte-identical trees.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::anon::AlgorithmKind;
use crate::field::FieldPath;
use crate::ids::{parse_snort_csv, run_mini_ids, write_snort_csv, AlertSet, RuleSet};
use crate::metrics::{
    compare, marginal, select_field_set, ComparisonResult, FieldSet, MarginalAxis,
};
use crate::pcap::{filter_protocols, parse_pcap, write_pcap, Trace, Transport};
use crate::policy::{
    apply_policy, enumerate_single_field_policies, validate, CompatibilityMatrix, DefaultParams,
    Policy,
};
use crate::report::{bar_chart_svg, marginal_csv, result_row, RESULTS_HEADER};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Where alert sets come from: the built-in engine over a rule file, or a
/// directory of pre-generated external alert CSVs keyed by policy name
/// (`baseline.csv` plus one `<policy>.csv` per run).
pub enum DetectionBackend {
    Rules {
        path: PathBuf,
        rules: RuleSet,
        digest: String,
    },
    AlertsDir {
        dir: PathBuf,
    },
}

impl DetectionBackend {
    pub fn from_rules_file(path: &Path) -> Result<DetectionBackend> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading rules file {}", path.display()))?;
        let rules = crate::ids::parse_rules(&text)?;
        Ok(DetectionBackend::Rules {
            path: path.to_path_buf(),
            digest: sha256_hex(text.as_bytes()),
            rules,
        })
    }

    fn describe(&self) -> (String, String) {
        match self {
            DetectionBackend::Rules { path, digest, .. } => {
                (format!("rules:{}", path.display()), digest.clone())
            }
            DetectionBackend::AlertsDir { dir } => {
                (format!("alerts-dir:{}", dir.display()), String::new())
            }
        }
    }

    fn alerts_for(&self, name: &str, anonymized: Option<&Trace>) -> Result<AlertSet> {
        match self {
            DetectionBackend::Rules { rules, .. } => {
                let trace =
                    anonymized.ok_or_else(|| anyhow!("engine backend needs a trace"))?;
                Ok(run_mini_ids(trace, rules))
            }
            DetectionBackend::AlertsDir { dir } => {
                let path = dir.join(format!("{name}.csv"));
                let text = fs::read_to_string(&path)
                    .with_context(|| format!("reading alert file {}", path.display()))?;
                Ok(parse_snort_csv(&text)?)
            }
        }
    }
}

/// How the comparison field set is chosen per policy.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum FieldSetMode {
    /// The timestamp rule, optionally generalized to drop every projection
    /// column a policy invalidates.
    Auto { generalized: bool },
    ForceFs1,
    ForceFs2,
}

impl FieldSetMode {
    fn select(&self, policy: &Policy) -> FieldSet {
        match self {
            FieldSetMode::Auto { generalized } => select_field_set(policy, *generalized),
            FieldSetMode::ForceFs1 => FieldSet::Fs1,
            FieldSetMode::ForceFs2 => FieldSet::Fs2,
        }
    }
}

pub struct SweepConfig {
    pub trace_path: PathBuf,
    pub out_dir: PathBuf,
    pub matrix: CompatibilityMatrix,
    pub backend: DetectionBackend,
    pub seed: u64,
    pub keep: Vec<Transport>,
    pub field_set_mode: FieldSetMode,
    pub jobs: usize,
}

/// One sweep row: a policy, its run artifacts, and the comparison outcome.
#[derive(Clone, Debug)]
pub struct SweepRow {
    pub policy_name: String,
    pub field: FieldPath,
    pub algorithm: AlgorithmKind,
    pub seed: u64,
    pub field_set: String,
    pub pcap_rel: String,
    pub alerts_rel: String,
    pub outcome: Result<ComparisonResult, String>,
}

pub struct SweepOutcome {
    pub baseline_count: u64,
    pub rows: Vec<SweepRow>,
    pub manifest_path: PathBuf,
}

#[derive(Serialize, Deserialize, Debug)]
pub struct RunManifest {
    pub tool: String,
    pub input: ManifestInput,
    pub detection: ManifestDetection,
    pub runs: Vec<ManifestRun>,
}

#[derive(Serialize, Deserialize, Debug)]
pub struct ManifestInput {
    pub trace: String,
    pub trace_sha256: String,
    pub keep: Vec<String>,
    pub seed: u64,
}

#[derive(Serialize, Deserialize, Debug)]
pub struct ManifestDetection {
    pub backend: String,
    pub backend_digest: String,
    /// Number of baseline detection passes executed; always 1 per sweep.
    pub baseline_detections: u32,
    pub baseline_alerts: String,
    pub baseline_sha256: String,
    pub baseline_count: u64,
}

#[derive(Serialize, Deserialize, Debug)]
pub struct ManifestRun {
    pub policy: String,
    pub field: String,
    pub algorithm: String,
    pub seed: u64,
    pub field_set: String,
    pub pcap: String,
    pub pcap_sha256: String,
    pub alerts: String,
    pub alerts_sha256: String,
    pub status: String,
}

pub fn tool_version() -> String {
    format!("traceanon {}", env!("CARGO_PKG_VERSION"))
}

/// Fields whose transport protocol was filtered out of the trace; sweeping
/// them would only measure noise.
pub fn excluded_fields(keep: &[Transport]) -> BTreeSet<FieldPath> {
    FieldPath::ALL
        .iter()
        .copied()
        .filter(|f| f.transport().is_some_and(|t| !keep.contains(&t)))
        .collect()
}

fn run_one_policy(
    trace: &Trace,
    policy: &Policy,
    matrix: &CompatibilityMatrix,
    backend: &DetectionBackend,
    baseline: &AlertSet,
    mode: FieldSetMode,
) -> (FieldSet, Result<(Trace, AlertSet, ComparisonResult), String>) {
    let fs = mode.select(policy);
    let violations = validate(policy, matrix);
    if !violations.is_empty() {
        let msgs: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
        return (fs, Err(msgs.join("; ")));
    }
    let anonymized = match apply_policy(trace, policy) {
        Ok(t) => t,
        Err(e) => return (fs, Err(e.to_string())),
    };
    let alerts = match backend.alerts_for(&policy.name, Some(&anonymized)) {
        Ok(a) => a,
        Err(e) => return (fs, Err(e.to_string())),
    };
    let result = compare(baseline, &alerts, &fs);
    (fs, Ok((anonymized, alerts, result)))
}

/// Runs the full loop: baseline once, then every enumerated single-field
/// policy — anonymize, detect, compare — and writes results, marginals,
/// charts, and the manifest under `out_dir`.
///
/// A failing policy is recorded as an error row; the sweep continues.
pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepOutcome> {
    let trace_bytes = fs::read(&cfg.trace_path)
        .with_context(|| format!("reading trace {}", cfg.trace_path.display()))?;
    let trace_digest = sha256_hex(&trace_bytes);
    let parsed = parse_pcap(&trace_bytes)?;
    let trace = filter_protocols(&parsed, &cfg.keep);

    let pcap_dir = cfg.out_dir.join("pcaps");
    let alerts_dir = cfg.out_dir.join("alerts");
    fs::create_dir_all(&pcap_dir)?;
    fs::create_dir_all(&alerts_dir)?;

    // Baseline detection happens exactly once, before any policy runs.
    let baseline = match &cfg.backend {
        DetectionBackend::Rules { rules, .. } => run_mini_ids(&trace, rules),
        DetectionBackend::AlertsDir { .. } => cfg.backend.alerts_for("baseline", None)?,
    };
    let baseline_csv = write_snort_csv(&baseline);
    let baseline_rel = "alerts/baseline.csv".to_string();
    fs::write(cfg.out_dir.join(&baseline_rel), &baseline_csv)?;

    let policies = enumerate_single_field_policies(
        &cfg.matrix,
        &DefaultParams,
        &excluded_fields(&cfg.keep),
        cfg.seed,
    );

    let worker = |policy: &Policy| -> Result<SweepRow> {
        let (fs_used, outcome) = run_one_policy(
            &trace,
            policy,
            &cfg.matrix,
            &cfg.backend,
            &baseline,
            cfg.field_set_mode,
        );
        let pcap_rel = format!("pcaps/{}.pcap", policy.name);
        let alerts_rel = format!("alerts/{}.csv", policy.name);
        let row_outcome = match outcome {
            Ok((anonymized, alerts, result)) => {
                fs::write(cfg.out_dir.join(&pcap_rel), write_pcap(&anonymized))?;
                fs::write(cfg.out_dir.join(&alerts_rel), write_snort_csv(&alerts))?;
                Ok(result)
            }
            Err(reason) => Err(reason),
        };
        Ok(SweepRow {
            policy_name: policy.name.clone(),
            field: policy.entries[0].field,
            algorithm: policy.entries[0].algorithm,
            seed: policy.seed,
            field_set: fs_used.name().to_string(),
            pcap_rel,
            alerts_rel,
            outcome: row_outcome,
        })
    };

    let mut rows: Vec<SweepRow> = if cfg.jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.jobs)
            .build()
            .context("building worker pool")?;
        pool.install(|| {
            use rayon::prelude::*;
            policies.par_iter().map(worker).collect::<Result<Vec<_>>>()
        })?
    } else {
        policies.iter().map(worker).collect::<Result<Vec<_>>>()?
    };
    rows.sort_by(|a, b| a.policy_name.cmp(&b.policy_name));

    write_reports(&cfg.out_dir, &rows)?;

    let (backend_desc, backend_digest) = cfg.backend.describe();
    let manifest = RunManifest {
        tool: tool_version(),
        input: ManifestInput {
            trace: cfg.trace_path.display().to_string(),
            trace_sha256: trace_digest,
            keep: cfg.keep.iter().map(|t| t.name().to_string()).collect(),
            seed: cfg.seed,
        },
        detection: ManifestDetection {
            backend: backend_desc,
            backend_digest,
            baseline_detections: 1,
            baseline_alerts: baseline_rel,
            baseline_sha256: sha256_hex(baseline_csv.as_bytes()),
            baseline_count: baseline.len() as u64,
        },
        runs: rows
            .iter()
            .map(|row| {
                let digest_of = |rel: &str| {
                    fs::read(cfg.out_dir.join(rel))
                        .map(|b| sha256_hex(&b))
                        .unwrap_or_default()
                };
                ManifestRun {
                    policy: row.policy_name.clone(),
                    field: row.field.to_string(),
                    algorithm: row.algorithm.to_string(),
                    seed: row.seed,
                    field_set: row.field_set.clone(),
                    pcap: row.pcap_rel.clone(),
                    pcap_sha256: match &row.outcome {
                        Ok(_) => digest_of(&row.pcap_rel),
                        Err(_) => String::new(),
                    },
                    alerts: row.alerts_rel.clone(),
                    alerts_sha256: match &row.outcome {
                        Ok(_) => digest_of(&row.alerts_rel),
                        Err(_) => String::new(),
                    },
                    status: match &row.outcome {
                        Ok(_) => "ok".to_string(),
                        Err(e) => format!("error: {e}"),
                    },
                }
            })
            .collect(),
    };
    let manifest_path = cfg.out_dir.join("manifest.toml");
    fs::write(&manifest_path, toml::to_string_pretty(&manifest)?)?;

    Ok(SweepOutcome {
        baseline_count: baseline.len() as u64,
        rows,
        manifest_path,
    })
}

fn write_reports(out_dir: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut csv = String::from(RESULTS_HEADER);
    csv.push('\n');
    for row in rows {
        csv.push_str(&result_row(
            &row.policy_name,
            row.field.name(),
            row.algorithm.name(),
            &row.outcome,
        ));
        csv.push('\n');
    }
    fs::write(out_dir.join("results.csv"), csv)?;
    write_marginal_artifacts(out_dir, rows)
}

/// Marginal CSVs and the four fp/fn bar charts, from the successful rows.
pub fn write_marginal_artifacts(out_dir: &Path, rows: &[SweepRow]) -> Result<()> {
    let ok_rows: Vec<(FieldPath, AlgorithmKind, ComparisonResult)> = rows
        .iter()
        .filter_map(|r| r.outcome.as_ref().ok().map(|res| (r.field, r.algorithm, *res)))
        .collect();
    for (axis, stem) in [
        (MarginalAxis::ByField, "by_field"),
        (MarginalAxis::ByAlgorithm, "by_algorithm"),
    ] {
        let report = marginal(&ok_rows, axis);
        fs::write(
            out_dir.join(format!("marginal_{stem}.csv")),
            marginal_csv(&report),
        )?;
        let fp: Vec<(String, f64)> = report
            .rows
            .iter()
            .map(|r| (r.name.clone(), r.fp_avg))
            .collect();
        let fn_: Vec<(String, f64)> = report
            .rows
            .iter()
            .map(|r| (r.name.clone(), r.fn_avg))
            .collect();
        fs::write(
            out_dir.join(format!("marginal_fp_{stem}.svg")),
            bar_chart_svg(&format!("False positive marginal {stem}"), &fp),
        )?;
        fs::write(
            out_dir.join(format!("marginal_fn_{stem}.svg")),
            bar_chart_svg(&format!("False negative marginal {stem}"), &fn_),
        )?;
    }
    Ok(())
}

/// Applies one policy file to one trace file. Returns the manifest text
/// that was written next to the output.
pub fn run_anonymize(
    trace_path: &Path,
    policy: &Policy,
    out_path: &Path,
    matrix: &CompatibilityMatrix,
    keep: Option<&[Transport]>,
    fix_checksums: bool,
) -> Result<()> {
    let violations = validate(policy, matrix);
    if !violations.is_empty() {
        let msgs: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
        return Err(anyhow!("policy does not validate: {}", msgs.join("; ")));
    }
    let bytes = fs::read(trace_path)
        .with_context(|| format!("reading trace {}", trace_path.display()))?;
    let parsed = parse_pcap(&bytes)?;
    let trace = match keep {
        Some(k) => filter_protocols(&parsed, k),
        None => parsed,
    };
    let mut anonymized = apply_policy(&trace, policy)?;
    if fix_checksums {
        anonymized.recompute_checksums();
    }
    let out_bytes = write_pcap(&anonymized);
    fs::write(out_path, &out_bytes)
        .with_context(|| format!("writing {}", out_path.display()))?;

    let manifest = format!(
        "tool = \"{}\"\ninput = \"{}\"\ninput_sha256 = \"{}\"\npolicy = \"{}\"\nseed = {}\noutput = \"{}\"\noutput_sha256 = \"{}\"\n",
        tool_version(),
        trace_path.display(),
        sha256_hex(&bytes),
        policy.name,
        policy.seed,
        out_path.display(),
        sha256_hex(&out_bytes),
    );
    fs::write(
        out_path.with_extension("manifest.toml"),
        manifest,
    )?;
    Ok(())
}

/// Compares two alert CSV files under a field set and renders the one-row
/// report CSV.
pub fn run_compare(
    baseline_path: &Path,
    anony_path: &Path,
    fs_choice: &FieldSet,
) -> Result<String> {
    let baseline = parse_snort_csv(&fs::read_to_string(baseline_path)?)?;
    let anony = parse_snort_csv(&fs::read_to_string(anony_path)?)?;
    let result = compare(&baseline, &anony, fs_choice);
    Ok(format!(
        "{RESULTS_HEADER}\n{}\n",
        result_row("-", "-", "-", &Ok(result))
    ))
}

/// Reads a results CSV back into typed rows (used by `report`).
pub fn parse_results_csv(text: &str) -> Result<Vec<SweepRow>> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| anyhow!("empty results file"))?;
    if header != RESULTS_HEADER {
        return Err(anyhow!("unexpected results header: {header}"));
    }
    let mut rows = Vec::new();
    for (idx, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.splitn(10, ',').collect();
        if cols.len() != 10 {
            return Err(anyhow!("line {}: expected 10 columns", idx + 2));
        }
        let field = FieldPath::parse(cols[1])
            .ok_or_else(|| anyhow!("line {}: unknown field {}", idx + 2, cols[1]))?;
        let algorithm = AlgorithmKind::parse(cols[2])
            .ok_or_else(|| anyhow!("line {}: unknown algorithm {}", idx + 2, cols[2]))?;
        let outcome = if cols[9] == "ok" {
            Ok(ComparisonResult {
                baseline_total: cols[3].parse()?,
                anony_total: cols[4].parse()?,
                true_positives: cols[5].parse()?,
                false_positives: cols[6].parse()?,
                false_negatives: cols[7].parse()?,
            })
        } else {
            Err(cols[9].to_string())
        };
        rows.push(SweepRow {
            policy_name: cols[0].to_string(),
            field,
            algorithm,
            seed: 0,
            field_set: String::new(),
            pcap_rel: String::new(),
            alerts_rel: String::new(),
            outcome,
        });
    }
    Ok(rows)
}
