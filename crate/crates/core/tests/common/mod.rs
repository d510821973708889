#![allow(dead_code)]

use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;

use vdsa::config::SimConfig;
use vdsa::rem::{ingest_samples, GapPolicy, RemDatabase, DEFAULT_SEGMENT_LEN};

pub fn campaign_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/campaign.csv")
}

/// REM fitted to the shipped campaign, with the default receiver registry.
pub fn campaign_rem(cfg: &SimConfig) -> RemDatabase {
    let file = File::open(campaign_path()).expect("campaign file");
    let samples = ingest_samples(BufReader::new(file)).expect("campaign parses");
    RemDatabase::build(&samples, GapPolicy::default(), DEFAULT_SEGMENT_LEN, &cfg.scenario.dtt_receivers).expect("REM builds")
}

/// Default scenario shortened for quick runs.
pub fn short_config(duration_s: f64) -> SimConfig {
    let mut cfg = SimConfig::default();
    cfg.scenario.duration_s = duration_s;
    cfg.kernel.warmup_s = 2.0;
    cfg
}
