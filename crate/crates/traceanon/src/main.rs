use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use traceanon::harness::{
    parse_results_csv, run_anonymize, run_compare, run_sweep, write_marginal_artifacts,
    DetectionBackend, FieldSetMode, SweepConfig,
};
use traceanon::metrics::FieldSet;
use traceanon::pcap::Transport;
use traceanon::policy::{parse_policy_file, CompatibilityMatrix};

#[derive(Parser)]
#[command(
    name = "traceanon",
    version,
    about = "Anonymize pcap traces under field policies and measure the cost in IDS alerts"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum KeepProto {
    Tcp,
    Udp,
    Icmp,
}

impl From<KeepProto> for Transport {
    fn from(k: KeepProto) -> Transport {
        match k {
            KeepProto::Tcp => Transport::Tcp,
            KeepProto::Udp => Transport::Udp,
            KeepProto::Icmp => Transport::Icmp,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FieldSetArg {
    Auto,
    Fs1,
    Fs2,
}

#[derive(Args)]
struct CommonDetection {
    /// Rule file for the built-in signature engine
    #[arg(long, conflicts_with = "alerts_dir")]
    rules: Option<PathBuf>,

    /// Directory of pre-generated Snort CSV alert files, keyed by policy
    /// name (baseline.csv plus one <policy>.csv per run)
    #[arg(long)]
    alerts_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Apply a policy file to a trace and write the anonymized pcap
    Anonymize {
        trace: PathBuf,
        policy: PathBuf,
        out: PathBuf,
        /// Compatibility matrix file (defaults to the built-in matrix)
        #[arg(long)]
        matrix: Option<PathBuf>,
        /// Keep only these transports before anonymizing
        #[arg(long, value_delimiter = ',')]
        keep: Option<Vec<KeepProto>>,
        /// Recompute IPv4/TCP/UDP/ICMP checksums after rewriting
        #[arg(long)]
        fix_checksums: bool,
    },
    /// Run every single-field policy of the matrix and score each run
    Sweep {
        trace: PathBuf,
        /// Output directory for pcaps, alert sets, reports, and manifest
        #[arg(long)]
        out: PathBuf,
        /// Compatibility matrix file (defaults to the built-in matrix)
        #[arg(long)]
        matrix: Option<PathBuf>,
        #[command(flatten)]
        detection: CommonDetection,
        /// Seed shared by every enumerated policy
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Transports to keep; fields of dropped transports are excluded
        #[arg(long, value_delimiter = ',', default_values_t = [KeepProto::Tcp, KeepProto::Udp, KeepProto::Icmp], value_enum)]
        keep: Vec<KeepProto>,
        /// Comparison field set selection
        #[arg(long, value_enum, default_value_t = FieldSetArg::Auto)]
        field_set: FieldSetArg,
        /// In auto mode, also drop projection columns the policy invalidates
        #[arg(long)]
        generalized_fieldset: bool,
        /// Worker threads for policy runs
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Compare two Snort CSV alert files and print one report row
    Compare {
        baseline: PathBuf,
        anony: PathBuf,
        #[arg(long, value_enum, default_value_t = FieldSetArg::Auto)]
        field_set: FieldSetArg,
    },
    /// Rebuild marginal CSVs and charts from an existing results.csv
    Report {
        results: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_matrix(path: &Option<PathBuf>) -> Result<CompatibilityMatrix> {
    match path {
        None => Ok(CompatibilityMatrix::default_matrix()),
        Some(p) => {
            let text = fs::read_to_string(p)
                .with_context(|| format!("reading matrix {}", p.display()))?;
            Ok(CompatibilityMatrix::parse(&text)?)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Anonymize {
            trace,
            policy,
            out,
            matrix,
            keep,
            fix_checksums,
        } => {
            let text = fs::read_to_string(&policy)
                .with_context(|| format!("reading policy {}", policy.display()))?;
            let policy = parse_policy_file(&text)?;
            let matrix = load_matrix(&matrix)?;
            let keep: Option<Vec<Transport>> =
                keep.map(|ks| ks.into_iter().map(Transport::from).collect());
            run_anonymize(
                &trace,
                &policy,
                &out,
                &matrix,
                keep.as_deref(),
                fix_checksums,
            )
        }
        Command::Sweep {
            trace,
            out,
            matrix,
            detection,
            seed,
            keep,
            field_set,
            generalized_fieldset,
            jobs,
        } => {
            let backend = match (detection.rules, detection.alerts_dir) {
                (Some(rules), None) => DetectionBackend::from_rules_file(&rules)?,
                (None, Some(dir)) => DetectionBackend::AlertsDir { dir },
                _ => return Err(anyhow!("pass exactly one of --rules or --alerts-dir")),
            };
            let cfg = SweepConfig {
                trace_path: trace,
                out_dir: out,
                matrix: load_matrix(&matrix)?,
                backend,
                seed,
                keep: keep.into_iter().map(Transport::from).collect(),
                field_set_mode: match field_set {
                    FieldSetArg::Auto => FieldSetMode::Auto {
                        generalized: generalized_fieldset,
                    },
                    FieldSetArg::Fs1 => FieldSetMode::ForceFs1,
                    FieldSetArg::Fs2 => FieldSetMode::ForceFs2,
                },
                jobs: jobs.max(1),
            };
            fs::create_dir_all(&cfg.out_dir)?;
            let outcome = run_sweep(&cfg)?;
            let failures = outcome
                .rows
                .iter()
                .filter(|r| r.outcome.is_err())
                .count();
            println!(
                "baseline alerts: {}; policies: {}; failures: {}",
                outcome.baseline_count,
                outcome.rows.len(),
                failures
            );
            Ok(())
        }
        Command::Compare {
            baseline,
            anony,
            field_set,
        } => {
            // Without a policy in hand, auto means FS1.
            let fs_choice = match field_set {
                FieldSetArg::Fs2 => FieldSet::Fs2,
                _ => FieldSet::Fs1,
            };
            print!("{}", run_compare(&baseline, &anony, &fs_choice)?);
            Ok(())
        }
        Command::Report { results, out } => {
            let rows = parse_results_csv(&fs::read_to_string(&results)?)?;
            fs::create_dir_all(&out)?;
            write_marginal_artifacts(&out, &rows)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
