//! Browser demo bindings. Every call returns a JSON string.

use std::collections::BTreeMap;

use serde::Serialize;
use wasm_bindgen::prelude::*;

use vdsa::allocator::{dtt_constraint_ok, Selection, Strategy};
use vdsa::config::SimConfig;
use vdsa::interference::{FrequencyAssignment, LinkSet, RadioContext};
use vdsa::radio::AcirSet;
use vdsa::rem::{fit_segments, GapPolicy, MeasurementSample, RemDatabase, RemSegment, DEFAULT_SEGMENT_LEN};
use vdsa::scenario::{init_world, WorldState};
use vdsa::synth::{generate_campaign, CampaignConfig};

fn js_err(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

fn to_json(v: &impl Serialize) -> Result<String, JsError> {
    serde_json::to_string(v).map_err(js_err)
}

fn campaign_by_channel(seed: u64) -> BTreeMap<u32, Vec<MeasurementSample>> {
    let mut by_ch: BTreeMap<u32, Vec<MeasurementSample>> = BTreeMap::new();
    for s in generate_campaign(&CampaignConfig::default(), seed) {
        by_ch.entry(s.channel_id).or_default().push(s);
    }
    by_ch
}

fn campaign_rem(cfg: &SimConfig, seed: u64) -> Result<RemDatabase, JsError> {
    RemDatabase::build(&campaign_by_channel(seed), GapPolicy::default(), DEFAULT_SEGMENT_LEN, &cfg.scenario.dtt_receivers)
        .map_err(js_err)
}

#[derive(Serialize)]
struct FitChannel {
    channel_id: u32,
    samples: Vec<(f64, f64)>,
    segments: Vec<RemSegment>,
}

/// Draws a synthetic drive test and fits the map with `segment_len`
/// samples per segment.
#[wasm_bindgen]
pub fn fit_campaign(seed: u32, segment_len: u32) -> Result<String, JsError> {
    let mut out = Vec::new();
    for (ch, samples) in campaign_by_channel(seed as u64) {
        let segments = fit_segments(&samples, segment_len as usize).map_err(js_err)?;
        out.push(FitChannel {
            channel_id: ch,
            samples: samples.iter().map(|s| (s.route_distance, s.rx_power_dbm)).collect(),
            segments,
        });
    }
    to_json(&out)
}

#[derive(Serialize)]
struct FeasibilityMap {
    route_m: Vec<f64>,
    candidates_mhz: Vec<f64>,
    /// `feasible[i][j]`: candidate `j` is admissible at `route_m[i]`.
    feasible: Vec<Vec<bool>>,
    receivers: Vec<(u32, f64)>,
}

/// Shifts platoon `k` so that its leader sits at `route_m`.
fn place_platoon(world: &mut WorldState, k: usize, route_m: f64) {
    let leader = world.platoons[k].members[0];
    let dx = world.route.x_of(route_m) - world.vehicles[leader].x;
    for &m in &world.platoons[k].members {
        world.vehicles[m].x += dx;
    }
}

/// Which candidate frequencies a single transmitter may use along the route.
#[wasm_bindgen]
pub fn feasibility_map(sir_min_db: f64, gamma_dtt_dbm: f64, step_m: f64) -> Result<String, JsError> {
    let mut cfg = SimConfig::default();
    cfg.policy.sir_min_db = sir_min_db;
    cfg.policy.gamma_dtt_dbm = gamma_dtt_dbm;
    cfg.policy.validate().map_err(js_err)?;
    if !(step_m >= 10.0) {
        return Err(JsError::new("step must be at least 10 m"));
    }
    let rem = campaign_rem(&cfg, 1)?;
    let acir = AcirSet::default();
    let ctx = RadioContext::new(&cfg.radio, &acir, &rem, cfg.kernel.split_period_s);
    let mut world = init_world(&cfg.scenario, 1).map_err(js_err)?;
    let tx = world.platoons[0].members[0];
    let (lo, hi) = rem.common_coverage().ok_or_else(|| JsError::new("empty map"))?;
    let mut map = FeasibilityMap {
        route_m: Vec::new(),
        candidates_mhz: cfg.grid.candidates_mhz.clone(),
        feasible: Vec::new(),
        receivers: rem.dtt_receivers.iter().map(|r| (r.id, r.longitudinal_position)).collect(),
    };
    let mut d = lo;
    while d <= hi {
        place_platoon(&mut world, 0, d);
        let row = cfg
            .grid
            .candidates_mhz
            .iter()
            .map(|f| dtt_constraint_ok(&cfg.policy, &ctx, &world, tx, *f))
            .collect::<Result<Vec<bool>, _>>()
            .map_err(js_err)?;
        map.route_m.push(d);
        map.feasible.push(row);
        d += step_m;
    }
    to_json(&map)
}

#[derive(Serialize)]
struct Pick {
    strategy: &'static str,
    assignment: Vec<Option<f64>>,
    /// Smallest link SINR, dB; `None` when both platoons stay off white space.
    min_sinr_db: Option<f64>,
}

#[derive(Serialize)]
struct Picks {
    feasible: Vec<Vec<f64>>,
    picks: Vec<Pick>,
}

/// Places both platoon leaders on the route and runs every strategy once.
#[wasm_bindgen]
pub fn pick_channels(leader0_m: f64, leader1_m: f64, sir_min_db: f64) -> Result<String, JsError> {
    let mut cfg = SimConfig::default();
    cfg.policy.sir_min_db = sir_min_db;
    cfg.policy.validate().map_err(js_err)?;
    let rem = campaign_rem(&cfg, 1)?;
    let acir = AcirSet::default();
    let ctx = RadioContext::new(&cfg.radio, &acir, &rem, cfg.kernel.split_period_s);
    let mut world = init_world(&cfg.scenario, 1).map_err(js_err)?;
    place_platoon(&mut world, 0, leader0_m);
    place_platoon(&mut world, 1, leader1_m);
    let links = LinkSet::from_world(&world);
    let sel = Selection {
        grid: &cfg.grid,
        policy: &cfg.policy,
        ctx: &ctx,
        links: &links,
        tie_tolerance_db: 0.0,
    };
    let current = FrequencyAssignment(vec![None; world.platoons.len()]);
    let mut picks = Vec::new();
    for s in [Strategy::Exhaustive, Strategy::MaxSep, Strategy::DttOnly] {
        let a = sel.select(s, &world, &current).map_err(js_err)?;
        let v = sel.objective(&world, &a).map_err(js_err)?;
        picks.push(Pick {
            strategy: s.name(),
            min_sinr_db: v.is_finite().then_some(v),
            assignment: a.0,
        });
    }
    to_json(&Picks {
        feasible: sel.feasible_sets(&world).map_err(js_err)?,
        picks,
    })
}
