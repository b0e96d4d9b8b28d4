//! Scenario-runner CLI: run scenario files, verify stored chains, audit
//! traces, and reproduce the bundled 3-Mystic demo.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};

use circle::ledger::Hash256;
use circle::scenario::{load_scenario, run_scenario, verify_chain_file, ChainVerdict};
use circle::sim::{audit_gossip_throttle, EventTrace};

const DEMO_SCENARIO: &str = include_str!("../../scenarios/demo.json");
const DEMO_KEY_SOURCE: &[u8] = include_bytes!("../../scenarios/key_source.bin");

#[derive(Parser)]
#[command(name = "circle", about = "Ground-station ledger simulator", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file and write metrics, trace and chain stores.
    Run {
        /// Scenario JSON file.
        #[arg(long)]
        scenario: PathBuf,
        /// Override the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory for metrics.json, trace.jsonl and chains/.
        #[arg(long)]
        out: PathBuf,
    },
    /// Replay-verify a stored chain file block by block.
    VerifyChain {
        /// JSON-lines block store to verify.
        #[arg(long)]
        store: PathBuf,
        /// Expected tip hash (64 hex chars), e.g. the canonical hash.
        #[arg(long)]
        expect_tip: Option<String>,
    },
    /// Run the bundled 3-Mystic / 1-Watchtower demo scenario.
    Demo {
        /// Output directory (default: ./demo_out).
        #[arg(long, default_value = "demo_out")]
        out: PathBuf,
    },
    /// Check a trace file against the per-peer gossip throttle.
    AuditTrace {
        /// trace.jsonl produced by a run.
        #[arg(long)]
        trace: PathBuf,
        /// Minimum allowed spacing of gossip sends per ordered peer pair.
        #[arg(long, default_value_t = 900)]
        min_interval: u64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(command: Command) -> anyhow::Result<ExitCode> {
    match command {
        Command::Run { scenario, seed, out } => {
            let mut config = load_scenario(&scenario)
                .with_context(|| format!("loading {}", scenario.display()))?;
            if let Some(seed) = seed {
                config.seed = seed;
            }
            run_and_report(&config, &out)
        }
        Command::Demo { out } => {
            std::fs::create_dir_all(&out)
                .with_context(|| format!("creating {}", out.display()))?;
            let scenario_path = out.join("demo.json");
            std::fs::write(&scenario_path, DEMO_SCENARIO)?;
            std::fs::write(out.join("key_source.bin"), DEMO_KEY_SOURCE)?;
            let config = load_scenario(&scenario_path).context("loading the bundled demo")?;
            run_and_report(&config, &out)
        }
        Command::VerifyChain { store, expect_tip } => {
            let expect_tip = expect_tip
                .map(|hex| Hash256::from_hex(&hex))
                .transpose()
                .context("parsing --expect-tip")?;
            let verdict = verify_chain_file(&store, expect_tip)
                .with_context(|| format!("reading {}", store.display()))?;
            println!("{}: {verdict}", store.display());
            match verdict {
                ChainVerdict::Valid { .. } => Ok(ExitCode::SUCCESS),
                ChainVerdict::Invalid { .. } => Ok(ExitCode::from(2)),
            }
        }
        Command::AuditTrace { trace, min_interval } => {
            let text = std::fs::read_to_string(&trace)
                .with_context(|| format!("reading {}", trace.display()))?;
            let parsed = EventTrace::from_jsonl(&text).context("parsing trace")?;
            match audit_gossip_throttle(&parsed, min_interval) {
                Ok(()) => {
                    println!(
                        "{}: gossip throttle respected (min interval {min_interval}s)",
                        trace.display()
                    );
                    Ok(ExitCode::SUCCESS)
                }
                Err(v) => {
                    println!(
                        "{}: violation {} -> {} at t={} and t={} (interval {}s < {min_interval}s)",
                        trace.display(),
                        v.src,
                        v.dst,
                        v.first_send,
                        v.second_send,
                        v.second_send - v.first_send,
                    );
                    Ok(ExitCode::from(2))
                }
            }
        }
    }
}

fn run_and_report(config: &circle::scenario::ScenarioConfig, out: &Path) -> anyhow::Result<ExitCode> {
    let started = Instant::now();
    let output = run_scenario(config, Some(out)).context("running scenario")?;
    let elapsed = started.elapsed();
    let m = &output.metrics;
    println!(
        "run complete: {} verified, {} revoked, {} ingests, {} dropped envelopes",
        m.verified_blocks, m.revoked_blocks, m.ingests, m.dropped_envelopes
    );
    println!(
        "audits: {} rounds, {} failed; lifecycle: {} abyss events, {} resurrections",
        m.audit_rounds, m.audit_failures, m.abyss_events, m.resurrections
    );
    if let Some(hash) = &m.canonical_hash {
        println!("canonical hash: {hash}");
    }
    for (id, tip) in &m.mystic_tips {
        println!("  {id} tip: {tip}");
    }
    println!(
        "outputs in {} (metrics.json, trace.jsonl, chains/); wall time {:.3}s",
        out.display(),
        elapsed.as_secs_f64()
    );
    if !m.conserves_ingests() {
        bail!(
            "metrics conservation violated: {} ingests vs {} terminal states",
            m.ingests,
            m.verified_blocks + m.revoked_blocks
        );
    }
    Ok(ExitCode::SUCCESS)
}
