use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use vdsa::allocator::{FrequencyGrid, Strategy};
use vdsa::config::SimConfig;
use vdsa::radio::{AcirSet, AcirTable};
use vdsa::rem::{ingest_samples, GapPolicy, RemDatabase};
use vdsa::simkernel::{export_report, run, write_summary_files, Summary};
use vdsa::synth::{generate_campaign, write_campaign_csv, CampaignConfig};

const ERROR_PREFIX: &str = "vdsa-error:";

#[derive(Parser)]
#[command(name = "vdsa", version, about = "Platoon channel allocation in TV white space")]
struct Cli {
    /// JSON configuration; unset fields take their defaults.
    #[arg(long, global = true, env = "VDSA_CONFIG")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a radio environment map to a measurement CSV.
    BuildRem(BuildRemArgs),
    /// Simulate one or more strategies over a list of seeds.
    Run(RunArgs),
    /// Compare run directories side by side.
    Report(ReportArgs),
    /// Write a synthetic drive-test campaign CSV.
    SynthCampaign(SynthArgs),
}

#[derive(Args)]
struct BuildRemArgs {
    #[arg(long)]
    measurements: PathBuf,
    #[arg(long, default_value_t = vdsa::rem::DEFAULT_SEGMENT_LEN)]
    segment_len: usize,
    /// Largest route gap bridged by interpolation, m.
    #[arg(long, default_value_t = GapPolicy::default().max_gap)]
    max_gap: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// Fitted REM file.
    #[arg(long, conflicts_with = "measurements")]
    rem: Option<PathBuf>,
    /// Measurement CSV fitted on the fly.
    #[arg(long)]
    measurements: Option<PathBuf>,
    /// exhaustive, max-sep, dtt-only, cch-only or all.
    #[arg(long, default_value = "all")]
    strategy: String,
    /// `a..b` (inclusive), a comma list, or a single seed.
    #[arg(long, alias = "seed", default_value = "1")]
    seeds: String,
    #[arg(long, default_value = "runs")]
    out: PathBuf,
    /// ACIR table files (JSON), each replacing the table of its direction.
    #[arg(long = "acir")]
    acir_files: Vec<PathBuf>,
    /// Print the resolved configuration and exit.
    #[arg(long)]
    print_config: bool,
    #[arg(long)]
    gamma_dtt_dbm: Option<f64>,
    #[arg(long)]
    sir_min_db: Option<f64>,
    /// Candidate grid `lo:hi:step` in MHz.
    #[arg(long)]
    grid: Option<String>,
    #[arg(long)]
    tx_power_dbm: Option<f64>,
    #[arg(long)]
    rx_threshold_db: Option<f64>,
    #[arg(long)]
    duration_s: Option<f64>,
}

#[derive(Args)]
struct ReportArgs {
    /// Run directories: a strategy directory holding `combined.json`, a
    /// single-seed directory holding `summary.json`, or a parent of either.
    #[arg(required = true)]
    dirs: Vec<PathBuf>,
    /// Also write the table as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::BuildRem(a) => build_rem(&cli, a),
        Command::Run(a) => run_cmd(&cli, a),
        Command::Report(a) => report(a),
        Command::SynthCampaign(a) => synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("{ERROR_PREFIX} {msg}");
            ExitCode::from(2)
        }
    }
}

fn load_config(cli: &Cli) -> Result<SimConfig> {
    match &cli.config {
        Some(p) => SimConfig::load_path(p).with_context(|| format!("config {}", p.display())),
        None => Ok(SimConfig::default()),
    }
}

fn fit_rem(path: &Path, segment_len: usize, max_gap: f64, cfg: &SimConfig) -> Result<RemDatabase> {
    let file = File::open(path).with_context(|| format!("measurements {}", path.display()))?;
    let samples = ingest_samples(BufReader::new(file)).with_context(|| format!("measurements {}", path.display()))?;
    let gaps = GapPolicy {
        max_gap,
        ..GapPolicy::default()
    };
    Ok(RemDatabase::build(&samples, gaps, segment_len, &cfg.scenario.dtt_receivers)?)
}

fn build_rem(cli: &Cli, a: &BuildRemArgs) -> Result<()> {
    let cfg = load_config(cli)?;
    let db = fit_rem(&a.measurements, a.segment_len, a.max_gap, &cfg)?;
    db.save_path(&a.out).with_context(|| format!("writing {}", a.out.display()))?;
    println!("channel,start_m,end_m,slope_db_per_m,sigma_db");
    for (ch, segs) in &db.segments {
        for s in segs {
            println!("{ch},{:.1},{:.1},{:.6},{:.3}", s.d_start, s.d_end, s.slope, s.sigma);
        }
    }
    Ok(())
}

fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let seeds: Vec<u64> = if let Some((a, b)) = s.split_once("..") {
        let (a, b): (u64, u64) = (a.trim().parse()?, b.trim().parse()?);
        (a..=b).collect()
    } else {
        s.split(',').map(|x| x.trim().parse()).collect::<Result<_, _>>()?
    };
    if seeds.is_empty() {
        bail!("seed list {s:?} is empty");
    }
    Ok(seeds)
}

fn parse_strategies(s: &str) -> Result<Vec<Strategy>> {
    if s == "all" {
        return Ok(Strategy::ALL.to_vec());
    }
    s.split(',')
        .map(|x| x.trim().parse::<Strategy>().map_err(|e| anyhow::anyhow!("{e}")))
        .collect()
}

fn parse_grid(s: &str) -> Result<FrequencyGrid> {
    let parts: Vec<f64> = s.split(':').map(str::parse).collect::<Result<_, _>>().context("grid")?;
    let [lo, hi, step] = parts[..] else {
        bail!("grid must be lo:hi:step, got {s:?}");
    };
    Ok(FrequencyGrid {
        dtt_centers_mhz: FrequencyGrid::default().dtt_centers_mhz,
        ..FrequencyGrid::uniform(lo, hi, step)
    })
}

fn resolve_config(cli: &Cli, a: &RunArgs) -> Result<SimConfig> {
    let mut cfg = load_config(cli)?;
    if let Some(v) = a.gamma_dtt_dbm {
        cfg.policy.gamma_dtt_dbm = v;
    }
    if let Some(v) = a.sir_min_db {
        cfg.policy.sir_min_db = v;
    }
    if let Some(g) = &a.grid {
        cfg.grid = parse_grid(g)?;
    }
    if let Some(v) = a.tx_power_dbm {
        cfg.radio.tx_power_dbm = v;
    }
    if let Some(v) = a.rx_threshold_db {
        cfg.radio.rx_sinr_threshold_db = v;
    }
    if let Some(v) = a.duration_s {
        cfg.scenario.duration_s = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run_cmd(cli: &Cli, a: &RunArgs) -> Result<()> {
    let cfg = resolve_config(cli, a)?;
    if a.print_config {
        println!("{}", serde_json::to_string_pretty(&cfg)?);
        return Ok(());
    }
    let strategies = parse_strategies(&a.strategy)?;
    let seeds = parse_seeds(&a.seeds)?;
    let mut acir = AcirSet::default();
    for p in &a.acir_files {
        acir.replace(AcirTable::load_path(p).with_context(|| format!("ACIR table {}", p.display()))?);
    }
    let rem = match (&a.rem, &a.measurements) {
        (Some(p), _) => RemDatabase::load_path(p).with_context(|| format!("REM {}", p.display()))?,
        (None, Some(m)) => fit_rem(m, vdsa::rem::DEFAULT_SEGMENT_LEN, GapPolicy::default().max_gap, &cfg)?,
        (None, None) => {
            let samples = generate_campaign(&CampaignConfig::default(), 1);
            let mut by_ch: BTreeMap<u32, Vec<_>> = BTreeMap::new();
            for s in samples {
                by_ch.entry(s.channel_id).or_default().push(s);
            }
            RemDatabase::build(&by_ch, GapPolicy::default(), vdsa::rem::DEFAULT_SEGMENT_LEN, &cfg.scenario.dtt_receivers)?
        }
    };

    // a failing seed stops the sweep before anything is written
    let jobs: Vec<(Strategy, u64)> = strategies.iter().flat_map(|s| seeds.iter().map(move |k| (*s, *k))).collect();
    let reports = jobs
        .par_iter()
        .map(|&(s, k)| run(&cfg, &acir, &rem, s, k).with_context(|| format!("{s} seed {k}")))
        .collect::<Result<Vec<_>>>()?;

    std::fs::create_dir_all(&a.out)?;
    std::fs::write(a.out.join("config.json"), serde_json::to_string_pretty(&cfg)? + "\n")?;
    for s in &strategies {
        let dir = a.out.join(s.name());
        let mut parts = Vec::new();
        for r in reports.iter().filter(|r| r.strategy == *s) {
            export_report(r, dir.join(format!("seed-{}", r.seed)))?;
            parts.push(r.summary());
        }
        let combined = Summary::combine(&parts)?;
        write_summary_files(&combined, &dir, "combined.json")?;
        println!("{}", summary_line(&combined));
    }
    Ok(())
}

fn summary_line(s: &Summary) -> String {
    let rear = s.reception_by_position.last().map_or(0.0, |p| p.rate());
    let bands: Vec<String> = s
        .dtt_bands
        .iter()
        .map(|b| format!("ch{}={:.3}", b.channel_id, b.fraction_below))
        .collect();
    let sw: Vec<String> = s.switch_counts_mean.iter().map(|m| format!("{m:.1}")).collect();
    format!(
        "{}: seeds={} rear_reception={rear:.3} switches=[{}] sir_below=[{}]",
        s.strategy,
        s.seeds.len(),
        sw.join(","),
        bands.join(",")
    )
}

fn collect_summaries(dir: &Path, out: &mut Vec<Summary>) -> Result<()> {
    for name in ["combined.json", "summary.json"] {
        let p = dir.join(name);
        if p.is_file() {
            out.push(Summary::load_path(&p).with_context(|| format!("{}", p.display()))?);
            return Ok(());
        }
    }
    let mut children: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("run directory {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    children.sort();
    let before = out.len();
    for c in children {
        collect_summaries(&c, out)?;
    }
    if out.len() == before {
        bail!("no summary.json or combined.json under {}", dir.display());
    }
    Ok(())
}

/// Comparison table, one row per strategy ordered by name.
fn comparison_rows(summaries: &[Summary]) -> Result<Vec<Vec<String>>> {
    let mut by_strategy: BTreeMap<&str, Vec<Summary>> = BTreeMap::new();
    for s in summaries {
        by_strategy.entry(&s.strategy).or_default().push(s.clone());
    }
    let positions = summaries.iter().map(|s| s.reception_by_position.len()).max().unwrap_or(0);
    let platoons = summaries.iter().map(|s| s.switch_counts_mean.len()).max().unwrap_or(0);
    let mut channels: Vec<u32> = summaries
        .iter()
        .flat_map(|s| s.dtt_bands.iter().map(|b| b.channel_id))
        .collect();
    channels.sort_unstable();
    channels.dedup();

    let mut header = vec!["strategy".to_string(), "seeds".to_string()];
    header.extend((0..platoons).map(|p| format!("switches_p{p}")));
    header.extend((1..positions).map(|p| format!("rx_pos{p}")));
    header.extend(channels.iter().map(|c| format!("sir_below_ch{c}")));
    let mut rows = vec![header];
    for (name, parts) in by_strategy {
        let s = Summary::combine(&parts)?;
        let mut row = vec![name.to_string(), s.seeds.len().to_string()];
        row.extend((0..platoons).map(|p| s.switch_counts_mean.get(p).map_or(String::new(), |m| format!("{m:.2}"))));
        row.extend((1..positions).map(|p| {
            s.reception_by_position
                .get(p)
                .map_or(String::new(), |x| format!("{:.4}", x.rate()))
        }));
        row.extend(
            channels
                .iter()
                .map(|c| s.fraction_below(*c).map_or(String::new(), |f| format!("{f:.4}"))),
        );
        rows.push(row);
    }
    Ok(rows)
}

fn report(a: &ReportArgs) -> Result<()> {
    let mut summaries = Vec::new();
    for d in &a.dirs {
        collect_summaries(d, &mut summaries)?;
    }
    let rows = comparison_rows(&summaries)?;
    let widths: Vec<usize> = (0..rows[0].len())
        .map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0))
        .collect();
    for r in &rows {
        let cells: Vec<String> = r.iter().zip(&widths).map(|(x, w)| format!("{x:>w$}")).collect();
        println!("{}", cells.join("  "));
    }
    if let Some(p) = &a.csv {
        let text: String = rows.iter().map(|r| r.join(",") + "\n").collect();
        std::fs::write(p, text).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}

fn synth(a: &SynthArgs) -> Result<()> {
    let samples = generate_campaign(&CampaignConfig::default(), a.seed);
    let file = File::create(&a.out).with_context(|| format!("writing {}", a.out.display()))?;
    write_campaign_csv(&samples, file)?;
    Ok(())
}
