//! Closed-loop simulation: mobility, message scheduling, Monte-Carlo
//! reception, periodic channel reselection and metric collection.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::allocator::{count_switches, FrequencyGrid, dtt_interference_w, protected_dtt_set, ProtectedReceiver, Selection, Strategy};
use crate::config::SimConfig;
use crate::error::SimError;
use crate::interference::{pu_to_v_interference, FrequencyAssignment, LinkSet, RadioContext};
use crate::radio::{AcirSet, RadioConfig};
use crate::rem::RemDatabase;
use crate::scenario::{advance, init_world, KinematicInfo, VehicleId, WorldState};
use crate::units::{db_to_lin, dbm_to_w, lin_to_db, w_to_dbm};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Band {
    Cch,
    Tvws,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageKind {
    Cam,
    Cacc,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MessageEvent {
    pub tx: VehicleId,
    pub kind: MessageKind,
    pub band: Band,
    pub freq_mhz: f64,
    pub t_start: f64,
    pub airtime: f64,
    pub payload: KinematicInfo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossReason {
    LowSinr,
    CollisionCoLocated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    Received,
    Lost(LossReason),
}

/// A station transmitting on a band, with its message interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TxEntry {
    pub id: VehicleId,
    pub freq_mhz: f64,
    pub period_s: f64,
}

/// Who transmits where between two reselection instants.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Channels {
    pub cch: Vec<TxEntry>,
    pub tvws: Vec<TxEntry>,
}

impl Channels {
    pub fn build(world: &WorldState, assignment: &FrequencyAssignment, cfg: &SimConfig) -> Self {
        let k = &cfg.kernel;
        let mut out = Channels::default();
        for v in &world.vehicles {
            let f = v.platoon_id.filter(|_| v.is_platoon()).and_then(|p| assignment.get(p));
            match f {
                Some(f) => {
                    out.cch.push(TxEntry {
                        id: v.id,
                        freq_mhz: cfg.radio.cch_freq_mhz,
                        period_s: k.split_period_s,
                    });
                    out.tvws.push(TxEntry {
                        id: v.id,
                        freq_mhz: f,
                        period_s: k.split_period_s,
                    });
                }
                None => out.cch.push(TxEntry {
                    id: v.id,
                    freq_mhz: cfg.radio.cch_freq_mhz,
                    period_s: k.cam_period_s,
                }),
            }
        }
        out
    }

    fn band(&self, band: Band) -> &[TxEntry] {
        match band {
            Band::Cch => &self.cch,
            Band::Tvws => &self.tvws,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActiveInterferer {
    pub id: VehicleId,
    pub freq_mhz: f64,
    pub co_located: bool,
}

/// Radio state shared by every reception in a run.
#[derive(Debug, Clone, Copy)]
pub struct ReceptionModel<'a> {
    pub radio: &'a RadioConfig,
    pub acir: &'a AcirSet,
    pub rem: &'a RemDatabase,
    pub co_located_window_s: f64,
    /// Seed of the deterministic shadowing field; `None` disables V2V shadowing.
    pub shadow_seed: Option<u64>,
    pub shadow_interval_s: f64,
}

impl ReceptionModel<'_> {
    fn gain(&self, world: &WorldState, a: VehicleId, b: VehicleId, f: f64) -> f64 {
        let d = world.vehicles[a].position().distance(&world.vehicles[b].position());
        self.radio.pathloss.gain(d, f)
    }

    fn v2v_shadow(&self, t: f64, a: VehicleId, b: VehicleId) -> f64 {
        match self.shadow_seed {
            Some(seed) if self.radio.v2v_shadowing_sigma_db > 0.0 => {
                let (lo, hi) = if a < b { (a, b) } else { (b, a) };
                let interval = (t / self.shadow_interval_s).floor() as u64;
                let z = hashed_normal(&[seed, interval, lo as u64, hi as u64, 0x7632_7600]);
                db_to_lin(self.radio.v2v_shadowing_sigma_db * z)
            }
            _ => 1.0,
        }
    }
}

/// Standard normal draw that depends only on `key`.
pub fn hashed_normal(key: &[u64]) -> f64 {
    let mut h = 0x243f_6a88_85a3_08d3u64;
    for k in key {
        h = splitmix(h ^ k);
    }
    StandardNormal.sample(&mut ChaCha8Rng::seed_from_u64(h))
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Draws the stations transmitting concurrently with `event`. Stations the
/// transmitter cannot sense are active with probability airtime/period;
/// stations it can sense defer unless they start within the co-located
/// window.
pub fn sample_interferers<R: Rng>(
    world: &WorldState,
    model: &ReceptionModel,
    channels: &Channels,
    event: &MessageEvent,
    rng: &mut R,
    counter: Option<&mut (u64, f64)>,
) -> Vec<ActiveInterferer> {
    let gamma = dbm_to_w(model.radio.cs_threshold_dbm);
    let p_tx = dbm_to_w(model.radio.tx_power_dbm);
    let mut out = Vec::new();
    let mut drawn = 0u64;
    let mut expected = 0.0;
    for e in channels.band(event.band) {
        if e.id == event.tx {
            continue;
        }
        let p_hidden = event.airtime / e.period_s;
        let p_co = model.co_located_window_s / e.period_s;
        expected += p_hidden;
        let u: f64 = rng.random();
        if u >= p_hidden.max(p_co) {
            continue;
        }
        drawn += (u < p_hidden) as u64;
        let coupling = model.acir.v_to_v.acir(e.freq_mhz - event.freq_mhz, None);
        let sensed = p_tx * model.gain(world, event.tx, e.id, e.freq_mhz) * coupling;
        if sensed < gamma {
            if u >= p_hidden {
                continue;
            }
            out.push(ActiveInterferer {
                id: e.id,
                freq_mhz: e.freq_mhz,
                co_located: false,
            });
        } else if u < p_co {
            out.push(ActiveInterferer {
                id: e.id,
                freq_mhz: e.freq_mhz,
                co_located: true,
            });
        }
    }
    if let Some(c) = counter {
        c.0 += drawn;
        c.1 += expected;
    }
    out
}

/// Instantaneous SINR of `event` at `rx` given the drawn interferers, dB.
pub fn instantaneous_sinr(
    world: &WorldState,
    model: &ReceptionModel,
    event: &MessageEvent,
    rx: VehicleId,
    interferers: &[ActiveInterferer],
) -> Result<f64, SimError> {
    let p = dbm_to_w(model.radio.tx_power_dbm);
    let t = event.t_start;
    let signal = p * model.gain(world, event.tx, rx, event.freq_mhz) * model.v2v_shadow(t, event.tx, rx);
    let mut interference = 0.0;
    for j in interferers.iter().filter(|j| j.id != rx) {
        interference += p
            * model.gain(world, j.id, rx, j.freq_mhz)
            * model.acir.v_to_v.acir(j.freq_mhz - event.freq_mhz, None)
            * model.v2v_shadow(t, j.id, rx);
    }
    let pu = match event.band {
        Band::Tvws => pu_to_v_interference(
            model.rem,
            model.acir,
            world.route_distance(rx),
            event.freq_mhz,
            model.radio.cch_freq_mhz,
        )?,
        Band::Cch => 0.0,
    };
    Ok(lin_to_db(signal / (model.radio.noise_w() + pu + interference)))
}

pub fn resolve_reception(
    world: &WorldState,
    model: &ReceptionModel,
    event: &MessageEvent,
    rx: VehicleId,
    interferers: &[ActiveInterferer],
) -> Result<Outcome, SimError> {
    let s = instantaneous_sinr(world, model, event, rx, interferers)?;
    Ok(if s >= model.radio.rx_sinr_threshold_db {
        Outcome::Received
    } else if interferers.iter().any(|j| j.co_located && j.id != rx) {
        Outcome::Lost(LossReason::CollisionCoLocated)
    } else {
        Outcome::Lost(LossReason::LowSinr)
    })
}

/// Draws concurrent transmissions and resolves one reception.
pub fn attempt_reception<R: Rng>(
    event: &MessageEvent,
    rx: VehicleId,
    world: &WorldState,
    model: &ReceptionModel,
    channels: &Channels,
    rng: &mut R,
) -> Result<Outcome, SimError> {
    let interferers = sample_interferers(world, model, channels, event, rng, None);
    resolve_reception(world, model, event, rx, &interferers)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DttSirSample {
    pub t: f64,
    pub platoon: usize,
    pub tx: VehicleId,
    pub receiver_id: Option<u32>,
    pub channel_id: u32,
    pub center_mhz: f64,
    pub sir_db: f64,
}

/// Which protected receivers yield an SIR sample for a transmission.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum SirSampling {
    /// Every protected receiver.
    All,
    /// Receivers within `m` metres of the transmitter.
    Radius { m: f64 },
    /// Receivers whose SIR requirement the transmitter could break on the
    /// most harmful grid frequency.
    InterferenceRange,
}

/// SIR at each protected receiver caused by one white-space transmission.
/// With `shadow` set, the interfering link fades per reselection interval and
/// the wanted DTT power departs from its registered value by a per-site draw.
#[allow(clippy::too_many_arguments)]
pub fn record_dtt_sir(
    world: &WorldState,
    ctx: &RadioContext,
    protected: &[ProtectedReceiver],
    event: &MessageEvent,
    shadow: Option<(u64, f64)>,
    sampling: SirSampling,
    grid: &FrequencyGrid,
    sir_min_db: f64,
    out: &mut Vec<DttSirSample>,
) {
    let tx_pos = world.vehicles[event.tx].position();
    let platoon = world.vehicles[event.tx].platoon_id.unwrap_or(0);
    for r in protected {
        let keep = match sampling {
            SirSampling::All => true,
            SirSampling::Radius { m } => tx_pos.distance(&r.position) <= m,
            SirSampling::InterferenceRange => grid
                .candidates_mhz
                .iter()
                .any(|&f| dtt_interference_w(ctx, tx_pos, r, f, 1.0) >= r.interference_budget_w(sir_min_db)),
        };
        if !keep {
            continue;
        }
        let rid = r.receiver_id.map_or(u64::MAX, u64::from);
        let (fading, wanted_offset_db) = match shadow {
            Some((seed, interval)) if r.sigma_db > 0.0 => {
                let k = (event.t_start / interval).floor() as u64;
                let link = hashed_normal(&[seed, k, event.tx as u64, rid, r.channel_id as u64]);
                let site = hashed_normal(&[seed, rid, r.channel_id as u64, 0x7369_7465]);
                (db_to_lin(r.sigma_db * link), r.sigma_db * site)
            }
            _ => (1.0, 0.0),
        };
        let i = dtt_interference_w(ctx, tx_pos, r, event.freq_mhz, fading);
        out.push(DttSirSample {
            t: event.t_start,
            platoon,
            tx: event.tx,
            receiver_id: r.receiver_id,
            channel_id: r.channel_id,
            center_mhz: r.center_mhz,
            sir_db: r.power_dbm + wanted_offset_db - w_to_dbm(i),
        });
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PositionStats {
    pub position: usize,
    pub attempts: u64,
    pub received: u64,
    pub cch_attempts: u64,
    pub cch_received: u64,
    pub tvws_attempts: u64,
    pub tvws_received: u64,
}

impl PositionStats {
    pub fn rate(&self) -> f64 {
        if self.attempts == 0 {
            0.0
        } else {
            self.received as f64 / self.attempts as f64
        }
    }

    fn merge(&mut self, o: &PositionStats) {
        self.attempts += o.attempts;
        self.received += o.received;
        self.cch_attempts += o.cch_attempts;
        self.cch_received += o.cch_received;
        self.tvws_attempts += o.tvws_attempts;
        self.tvws_received += o.tvws_received;
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MessageTotals {
    pub cch_events: u64,
    pub tvws_events: u64,
    pub scheduled_receptions: u64,
    pub received: u64,
    pub lost_low_sinr: u64,
    pub lost_collision_co_located: u64,
    /// Control-channel stations drawn active, summed over control-channel events.
    pub cch_active_draws: u64,
    /// Expected value of `cch_active_draws`.
    pub cch_expected_active: f64,
}

impl MessageTotals {
    fn merge(&mut self, o: &MessageTotals) {
        self.cch_events += o.cch_events;
        self.tvws_events += o.tvws_events;
        self.scheduled_receptions += o.scheduled_receptions;
        self.received += o.received;
        self.lost_low_sinr += o.lost_low_sinr;
        self.lost_collision_co_located += o.lost_collision_co_located;
        self.cch_active_draws += o.cch_active_draws;
        self.cch_expected_active += o.cch_expected_active;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FallbackEvent {
    pub t: f64,
    pub platoon: usize,
    /// `vacate` or `resume`.
    pub kind: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub strategy: Strategy,
    pub seed: u64,
    pub warmup_s: f64,
    pub duration_s: f64,
    pub sir_threshold_db: f64,
    /// Leader-message receptions by follower position, platoons pooled.
    pub reception_by_position: Vec<PositionStats>,
    pub dtt_sir_samples: Vec<DttSirSample>,
    pub assignment_history: Vec<(f64, FrequencyAssignment)>,
    pub switch_counts: Vec<usize>,
    pub min_sinr_series: Vec<(f64, Option<f64>)>,
    pub fallback_events: Vec<FallbackEvent>,
    pub totals: MessageTotals,
    pub mobility_events: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandSummary {
    pub channel_id: u32,
    pub center_mhz: f64,
    pub samples: u64,
    pub below_threshold: u64,
    pub fraction_below: f64,
}

/// Seed-poolable digest of one or more runs of a strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schema_version: u32,
    pub strategy: String,
    pub seeds: Vec<u64>,
    pub warmup_s: f64,
    pub sir_threshold_db: f64,
    pub reception_by_position: Vec<PositionStats>,
    pub dtt_bands: Vec<BandSummary>,
    /// Per seed, in seed order.
    pub switch_counts_per_seed: Vec<Vec<usize>>,
    pub switch_counts_mean: Vec<f64>,
    pub switch_counts_std: Vec<f64>,
    pub fallback_events: usize,
    pub totals: MessageTotals,
}

impl MetricsReport {
    pub fn summary(&self) -> Summary {
        let mut bands: Vec<BandSummary> = Vec::new();
        for s in &self.dtt_sir_samples {
            let b = match bands.iter_mut().find(|b| b.channel_id == s.channel_id) {
                Some(b) => b,
                None => {
                    bands.push(BandSummary {
                        channel_id: s.channel_id,
                        center_mhz: s.center_mhz,
                        samples: 0,
                        below_threshold: 0,
                        fraction_below: 0.0,
                    });
                    bands.last_mut().unwrap()
                }
            };
            b.samples += 1;
            b.below_threshold += (s.sir_db < self.sir_threshold_db) as u64;
        }
        let mut s = Summary {
            schema_version: REPORT_SCHEMA_VERSION,
            strategy: self.strategy.name().to_string(),
            seeds: vec![self.seed],
            warmup_s: self.warmup_s,
            sir_threshold_db: self.sir_threshold_db,
            reception_by_position: self.reception_by_position.clone(),
            dtt_bands: bands,
            switch_counts_per_seed: vec![self.switch_counts.clone()],
            switch_counts_mean: Vec::new(),
            switch_counts_std: Vec::new(),
            fallback_events: self.fallback_events.len(),
            totals: self.totals,
        };
        s.finish();
        s
    }
}

impl Summary {
    fn finish(&mut self) {
        self.dtt_bands.sort_by_key(|b| b.channel_id);
        for b in &mut self.dtt_bands {
            b.fraction_below = if b.samples == 0 {
                0.0
            } else {
                b.below_threshold as f64 / b.samples as f64
            };
        }
        let k = self.switch_counts_per_seed.iter().map(Vec::len).max().unwrap_or(0);
        let n = self.switch_counts_per_seed.len() as f64;
        self.switch_counts_mean = (0..k)
            .map(|p| self.switch_counts_per_seed.iter().map(|c| c[p] as f64).sum::<f64>() / n)
            .collect();
        self.switch_counts_std = (0..k)
            .map(|p| {
                let m = self.switch_counts_mean[p];
                (self.switch_counts_per_seed.iter().map(|c| (c[p] as f64 - m).powi(2)).sum::<f64>() / n).sqrt()
            })
            .collect();
    }

    /// Pools runs of one strategy. The result does not depend on input order.
    pub fn combine(parts: &[Summary]) -> Result<Summary, SimError> {
        let first = parts.first().ok_or_else(|| SimError::Startup("nothing to combine".into()))?;
        let mut idx: Vec<usize> = (0..parts.len()).collect();
        idx.sort_by_key(|i| parts[*i].seeds.first().copied().unwrap_or(0));
        let mut out = Summary {
            schema_version: REPORT_SCHEMA_VERSION,
            strategy: first.strategy.clone(),
            seeds: Vec::new(),
            warmup_s: first.warmup_s,
            sir_threshold_db: first.sir_threshold_db,
            reception_by_position: Vec::new(),
            dtt_bands: Vec::new(),
            switch_counts_per_seed: Vec::new(),
            switch_counts_mean: Vec::new(),
            switch_counts_std: Vec::new(),
            fallback_events: 0,
            totals: MessageTotals::default(),
        };
        for &i in &idx {
            let p = &parts[i];
            if p.schema_version != REPORT_SCHEMA_VERSION {
                return Err(SimError::Startup(format!(
                    "summary schema {} is not supported (expected {REPORT_SCHEMA_VERSION})",
                    p.schema_version
                )));
            }
            if p.strategy != out.strategy {
                return Err(SimError::Startup(format!(
                    "cannot pool strategies {} and {}",
                    out.strategy, p.strategy
                )));
            }
            out.seeds.extend(&p.seeds);
            if out.reception_by_position.len() < p.reception_by_position.len() {
                out.reception_by_position.resize(p.reception_by_position.len(), PositionStats::default());
            }
            for (o, q) in out.reception_by_position.iter_mut().zip(&p.reception_by_position) {
                o.position = q.position;
                o.merge(q);
            }
            for b in &p.dtt_bands {
                match out.dtt_bands.iter_mut().find(|o| o.channel_id == b.channel_id) {
                    Some(o) => {
                        o.samples += b.samples;
                        o.below_threshold += b.below_threshold;
                    }
                    None => out.dtt_bands.push(b.clone()),
                }
            }
            out.switch_counts_per_seed.extend(p.switch_counts_per_seed.iter().cloned());
            out.fallback_events += p.fallback_events;
            out.totals.merge(&p.totals);
        }
        out.finish();
        Ok(out)
    }

    pub fn fraction_below(&self, channel_id: u32) -> Option<f64> {
        self.dtt_bands
            .iter()
            .find(|b| b.channel_id == channel_id)
            .map(|b| b.fraction_below)
    }

    pub fn load_path(path: impl AsRef<Path>) -> Result<Summary, SimError> {
        let text = std::fs::read_to_string(path)?;
        let v: serde_json::Value = serde_json::from_str(&text)?;
        let found = v.get("schema_version").and_then(|x| x.as_u64()).unwrap_or(0);
        if found != REPORT_SCHEMA_VERSION as u64 {
            return Err(SimError::Startup(format!(
                "summary schema {found} is not supported (expected {REPORT_SCHEMA_VERSION})"
            )));
        }
        Ok(serde_json::from_value(v)?)
    }
}

fn startup_checks(cfg: &SimConfig, world: &WorldState, rem: &RemDatabase, strategy: Strategy) -> Result<(), SimError> {
    if strategy == Strategy::CchOnly {
        return Ok(());
    }
    if rem.dtt_channels.is_empty() {
        return Err(SimError::Startup("REM holds no DTT channels".into()));
    }
    let (lo, hi) = rem
        .common_coverage()
        .ok_or_else(|| SimError::Startup("REM channels have no common coverage".into()))?;
    let xs: Vec<f64> = world.platoon_vehicles().map(|v| world.vehicles[v].x).collect();
    let x_min = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let x_max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        + crate::units::kmh_to_ms(cfg.scenario.jammer.v_high_kmh) * cfg.scenario.duration_s * 1.05;
    let (d0, d1) = (world.route.route_distance(x_min), world.route.route_distance(x_max));
    if d0 < lo || d1 > hi {
        return Err(SimError::Startup(format!(
            "platoons travel over route [{d0:.0}, {d1:.0}] m but the REM covers only [{lo:.0}, {hi:.0}] m"
        )));
    }
    if cfg.policy.mode == crate::allocator::ProtectionMode::Registry && rem.dtt_receivers.is_empty() {
        return Err(SimError::Startup("registry protection needs DTT receivers in the REM".into()));
    }
    Ok(())
}

/// Runs one seeded scenario under one strategy.
pub fn run(
    cfg: &SimConfig,
    acir: &AcirSet,
    rem: &RemDatabase,
    strategy: Strategy,
    seed: u64,
) -> Result<MetricsReport, SimError> {
    cfg.validate()?;
    let k = &cfg.kernel;
    let sc = &cfg.scenario;
    let mut world = init_world(sc, seed)?;
    startup_checks(cfg, &world, rem, strategy)?;

    let mut rng = ChaCha8Rng::seed_from_u64(splitmix(seed ^ 0x6b65_726e_656c));
    let shadow_seed = splitmix(seed ^ 0x7368_6164_6f77);
    let links = LinkSet::from_world(&world);
    let ctx = RadioContext {
        mode: k.interference_mode,
        ..RadioContext::new(&cfg.radio, acir, rem, k.split_period_s)
    };
    let sel = Selection {
        grid: &cfg.grid,
        policy: &cfg.policy,
        ctx: &ctx,
        links: &links,
        tie_tolerance_db: k.tie_tolerance_db,
    };
    let model = ReceptionModel {
        radio: &cfg.radio,
        acir,
        rem,
        co_located_window_s: k.co_located_window_s,
        shadow_seed: Some(shadow_seed),
        shadow_interval_s: k.reselection_period_s,
    };

    let senders: Vec<VehicleId> = world.platoon_vehicles().collect();
    let phases: Vec<f64> = senders.iter().map(|_| rng.random::<f64>() * k.cam_period_s).collect();
    let mut slot = vec![0u64; senders.len()];
    let max_size = world.platoons.iter().map(|p| p.members.len()).max().unwrap_or(0);
    let mut by_pos: Vec<PositionStats> = (0..max_size)
        .map(|p| PositionStats {
            position: p,
            ..PositionStats::default()
        })
        .collect();

    let n_platoons = world.platoons.len();
    let mut assignment = FrequencyAssignment(vec![None; n_platoons]);
    let mut channels = Channels::build(&world, &assignment, cfg);
    let mut history: Vec<(f64, FrequencyAssignment)> = Vec::new();
    let mut min_sinr_series = Vec::new();
    let mut fallback_events = Vec::new();
    let mut sir_samples = Vec::new();
    let mut totals = MessageTotals::default();
    let mut cch_counter = (0u64, 0.0f64);

    let dt = sc.dt_s;
    let n_steps = (sc.duration_s / dt).round() as u64;
    let reselect_every = ((k.reselection_period_s / dt).round() as u64).max(1);
    let uses_tvws = strategy != Strategy::CchOnly;

    for step in 0..n_steps {
        let t = step as f64 * dt;
        if step % reselect_every == 0 {
            let next = sel.select(strategy, &world, &assignment)?;
            if uses_tvws {
                for p in 0..n_platoons {
                    let (was, now) = (assignment.get(p), next.get(p));
                    let kind = match (was, now) {
                        (Some(_), None) => Some("vacate"),
                        (None, None) if history.is_empty() => Some("vacate"),
                        (None, Some(_)) if !history.is_empty() => Some("resume"),
                        _ => None,
                    };
                    if let Some(kind) = kind {
                        fallback_events.push(FallbackEvent {
                            t,
                            platoon: p,
                            kind: kind.into(),
                        });
                    }
                }
            }
            assignment = next;
            let objective = if assignment.0.iter().any(Option::is_some) {
                Some(sel.objective(&world, &assignment)?)
            } else {
                None
            };
            min_sinr_series.push((t, objective));
            history.push((t, assignment.clone()));
            channels = Channels::build(&world, &assignment, cfg);
        }

        let mut events = Vec::new();
        for (i, &v) in senders.iter().enumerate() {
            loop {
                let ts = phases[i] + slot[i] as f64 * k.cam_period_s;
                if ts >= t + dt {
                    break;
                }
                let veh = &world.vehicles[v];
                let tvws = veh.platoon_id.and_then(|p| assignment.get(p));
                let (kind, band, freq) = match tvws {
                    Some(f) if slot[i] % 2 == 1 => (MessageKind::Cacc, Band::Tvws, f),
                    _ => (MessageKind::Cam, Band::Cch, cfg.radio.cch_freq_mhz),
                };
                events.push(MessageEvent {
                    tx: v,
                    kind,
                    band,
                    freq_mhz: freq,
                    t_start: ts,
                    airtime: cfg.radio.airtime_s,
                    payload: KinematicInfo {
                        x: veh.x,
                        speed: veh.speed,
                        accel: veh.accel,
                        stamp: ts,
                    },
                });
                slot[i] += 1;
            }
        }
        events.sort_by(|a, b| a.t_start.total_cmp(&b.t_start).then(a.tx.cmp(&b.tx)));

        for ev in &events {
            let counted = ev.t_start >= k.warmup_s;
            let counter = (counted && ev.band == Band::Cch).then_some(&mut cch_counter);
            let interferers = sample_interferers(&world, &model, &channels, ev, &mut rng, counter);
            let platoon = &world.platoons[world.vehicles[ev.tx].platoon_id.expect("platoon sender")];
            let leader = platoon.leader();
            let receivers: Vec<VehicleId> = platoon
                .members
                .iter()
                .copied()
                .filter(|rx| platoon.listened(*rx).contains(&ev.tx))
                .collect();
            let mut updates = Vec::new();
            for &rx in &receivers {
                let outcome = resolve_reception(&world, &model, ev, rx, &interferers)?;
                if outcome == Outcome::Received {
                    updates.push(rx);
                }
                if counted {
                    totals.scheduled_receptions += 1;
                    match outcome {
                        Outcome::Received => totals.received += 1,
                        Outcome::Lost(LossReason::LowSinr) => totals.lost_low_sinr += 1,
                        Outcome::Lost(LossReason::CollisionCoLocated) => totals.lost_collision_co_located += 1,
                    }
                    if ev.tx == leader {
                        let pos = platoon.position_of(rx).expect("member");
                        let st = &mut by_pos[pos];
                        let ok = (outcome == Outcome::Received) as u64;
                        st.attempts += 1;
                        st.received += ok;
                        match ev.band {
                            Band::Cch => {
                                st.cch_attempts += 1;
                                st.cch_received += ok;
                            }
                            Band::Tvws => {
                                st.tvws_attempts += 1;
                                st.tvws_received += ok;
                            }
                        }
                    }
                }
            }
            let pred_of: Vec<Option<VehicleId>> = updates.iter().map(|rx| platoon.predecessor(*rx)).collect();
            for (rx, pred) in updates.into_iter().zip(pred_of) {
                let info = &mut world.v2v[rx];
                if ev.tx == leader {
                    info.leader = Some(ev.payload);
                }
                if pred == Some(ev.tx) {
                    info.predecessor = Some(ev.payload);
                }
            }
            if counted {
                match ev.band {
                    Band::Cch => totals.cch_events += 1,
                    Band::Tvws => {
                        totals.tvws_events += 1;
                        let protected = protected_dtt_set(&cfg.policy, rem, &world, ev.tx)?;
                        record_dtt_sir(
                            &world,
                            &ctx,
                            &protected,
                            ev,
                            k.dtt_shadowing.then_some((shadow_seed, k.reselection_period_s)),
                            k.sir_sampling,
                            &cfg.grid,
                            cfg.policy.sir_min_db,
                            &mut sir_samples,
                        );
                    }
                }
            }
        }
        advance(&mut world, sc, dt);
    }

    totals.cch_active_draws = cch_counter.0;
    totals.cch_expected_active = cch_counter.1;
    let assignments: Vec<FrequencyAssignment> = history.iter().map(|(_, a)| a.clone()).collect();
    Ok(MetricsReport {
        strategy,
        seed,
        warmup_s: k.warmup_s,
        duration_s: sc.duration_s,
        sir_threshold_db: cfg.policy.sir_min_db,
        reception_by_position: by_pos,
        dtt_sir_samples: sir_samples,
        switch_counts: count_switches(&assignments),
        assignment_history: history,
        min_sinr_series,
        fallback_events,
        totals,
        mobility_events: world.events.len(),
    })
}

/// Writes the per-metric CSV files and `summary.json` into `dir`.
pub fn export_report(report: &MetricsReport, dir: impl AsRef<Path>) -> Result<(), SimError> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    write_summary_files(&report.summary(), dir, "summary.json")?;

    let mut sorted = report.dtt_sir_samples.clone();
    sorted.sort_by(|a, b| a.sir_db.total_cmp(&b.sir_db).then(a.t.total_cmp(&b.t)));
    let mut text = String::from("sir_db,channel_id,center_mhz,receiver_id,platoon,tx,t_s\n");
    for s in &sorted {
        text.push_str(&format!(
            "{:.4},{},{},{},{},{},{:.4}\n",
            s.sir_db,
            s.channel_id,
            s.center_mhz,
            s.receiver_id.map_or(String::new(), |r| r.to_string()),
            s.platoon,
            s.tx,
            s.t
        ));
    }
    std::fs::write(dir.join("dtt_sir_samples.csv"), text)?;

    let mut text = String::from("platoon,switches\n");
    for (p, c) in report.switch_counts.iter().enumerate() {
        text.push_str(&format!("{p},{c}\n"));
    }
    std::fs::write(dir.join("switch_counts.csv"), text)?;

    let mut text = String::from("t_s,platoon,freq_mhz,min_sinr_db\n");
    for ((t, a), (_, m)) in report.assignment_history.iter().zip(&report.min_sinr_series) {
        for (p, f) in a.0.iter().enumerate() {
            let f = f.map_or(String::new(), |f| f.to_string());
            let m = m.map_or(String::new(), |m| format!("{m:.3}"));
            text.push_str(&format!("{t:.2},{p},{f},{m}\n"));
        }
    }
    std::fs::write(dir.join("assignments.csv"), text)?;
    Ok(())
}

/// Writes `reception_by_position.csv` plus the JSON summary under `name`.
pub fn write_summary_files(summary: &Summary, dir: &Path, name: &str) -> Result<(), SimError> {
    std::fs::create_dir_all(dir)?;
    let mut text = String::from(
        "position,attempts,received,rate,cch_attempts,cch_received,tvws_attempts,tvws_received\n",
    );
    for p in summary.reception_by_position.iter().skip(1) {
        text.push_str(&format!(
            "{},{},{},{:.6},{},{},{},{}\n",
            p.position,
            p.attempts,
            p.received,
            p.rate(),
            p.cch_attempts,
            p.cch_received,
            p.tvws_attempts,
            p.tvws_received
        ));
    }
    std::fs::write(dir.join("reception_by_position.csv"), text)?;
    std::fs::write(dir.join(name), serde_json::to_string_pretty(summary)? + "\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interference::tests::{flat_rem, small_world};
    use crate::radio::PathlossModel;
    use crate::scenario::Role;

    fn cch_event(world: &WorldState, tx: VehicleId, f: f64, band: Band) -> MessageEvent {
        let v = &world.vehicles[tx];
        MessageEvent {
            tx,
            kind: MessageKind::Cam,
            band,
            freq_mhz: f,
            t_start: 10.0,
            airtime: 0.4e-3,
            payload: KinematicInfo {
                x: v.x,
                speed: v.speed,
                accel: v.accel,
                stamp: 10.0,
            },
        }
    }

    fn model<'a>(radio: &'a RadioConfig, acir: &'a AcirSet, rem: &'a RemDatabase) -> ReceptionModel<'a> {
        ReceptionModel {
            radio,
            acir,
            rem,
            co_located_window_s: 13e-6,
            shadow_seed: None,
            shadow_interval_s: 1.0,
        }
    }

    #[test]
    fn lone_link_always_received() {
        let w = small_world(1, 2);
        let (radio, acir, rem) = (RadioConfig::default(), AcirSet::default(), flat_rem(&[]));
        let m = model(&radio, &acir, &rem);
        let (tx, rx) = (w.platoons[0].members[0], w.platoons[0].members[1]);
        let ch = Channels {
            cch: vec![TxEntry {
                id: tx,
                freq_mhz: 5900.0,
                period_s: 0.1,
            }],
            tvws: vec![],
        };
        let ev = cch_event(&w, tx, 5900.0, Band::Cch);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            assert_eq!(attempt_reception(&ev, rx, &w, &m, &ch, &mut rng).unwrap(), Outcome::Received);
        }
    }

    #[test]
    fn equal_power_interferer_is_low_sinr() {
        let mut w = small_world(2, 2);
        let (tx, rx) = (w.platoons[0].members[0], w.platoons[0].members[1]);
        let other = w.platoons[1].members[0];
        // mirror the transmitter around the receiver
        w.vehicles[other].x = 2.0 * w.vehicles[rx].x - w.vehicles[tx].x;
        w.vehicles[other].y = w.vehicles[tx].y;
        let (radio, acir, rem) = (RadioConfig::default(), AcirSet::default(), flat_rem(&[]));
        let m = model(&radio, &acir, &rem);
        let ev = cch_event(&w, tx, 5900.0, Band::Cch);
        let i = [ActiveInterferer {
            id: other,
            freq_mhz: 5900.0,
            co_located: false,
        }];
        let s = instantaneous_sinr(&w, &m, &ev, rx, &i).unwrap();
        assert!(s < 0.0 && s > -0.1);
        assert_eq!(resolve_reception(&w, &m, &ev, rx, &i).unwrap(), Outcome::Lost(LossReason::LowSinr));
        let co = [ActiveInterferer { co_located: true, ..i[0] }];
        assert_eq!(
            resolve_reception(&w, &m, &ev, rx, &co).unwrap(),
            Outcome::Lost(LossReason::CollisionCoLocated)
        );
    }

    #[test]
    fn monte_carlo_matches_bernoulli_mixture() {
        let mut w = small_world(2, 2);
        let (tx, rx) = (w.platoons[0].members[0], w.platoons[0].members[1]);
        let other = w.platoons[1].members[0];
        w.vehicles[other].x = 2.0 * w.vehicles[rx].x - w.vehicles[tx].x;
        w.vehicles[other].y = w.vehicles[tx].y;
        let radio = RadioConfig {
            pathloss: PathlossModel::log_distance(3.0),
            cs_threshold_dbm: -50.0,
            ..RadioConfig::default()
        };
        let (acir, rem) = (AcirSet::default(), flat_rem(&[]));
        let m = model(&radio, &acir, &rem);
        let ev = cch_event(&w, tx, 5900.0, Band::Cch);
        let period = 2e-3;
        let ch = Channels {
            cch: vec![TxEntry {
                id: other,
                freq_mhz: 5900.0,
                period_s: period,
            }],
            tvws: vec![],
        };
        let on = [ActiveInterferer {
            id: other,
            freq_mhz: 5900.0,
            co_located: false,
        }];
        // the interferer is hidden from the transmitter and breaks the link when active
        assert!(sample_interferers(&w, &m, &ch, &ev, &mut ChaCha8Rng::seed_from_u64(0), None).len() <= 1);
        assert_eq!(resolve_reception(&w, &m, &ev, rx, &[]).unwrap(), Outcome::Received);
        let fails = resolve_reception(&w, &m, &ev, rx, &on).unwrap() != Outcome::Received;
        let p_on = ev.airtime / period;
        let analytic = if fails { 1.0 - p_on } else { 1.0 };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 10_000;
        let ok = (0..n)
            .filter(|_| attempt_reception(&ev, rx, &w, &m, &ch, &mut rng).unwrap() == Outcome::Received)
            .count();
        assert!(fails);
        assert!((ok as f64 / n as f64 - analytic).abs() < 0.02);
    }

    #[test]
    fn dtt_sir_single_transmitter() {
        let w = small_world(1, 2);
        let tx = w.platoons[0].leader();
        let (radio, acir, rem) = (RadioConfig::default(), AcirSet::default(), flat_rem(&[(23, -70.0)]));
        let ctx = RadioContext::new(&radio, &acir, &rem, 0.2);
        let v = &w.vehicles[tx];
        let mk = |dx: f64| ProtectedReceiver {
            receiver_id: Some(1),
            channel_id: 23,
            center_mhz: 490.0,
            position: crate::radio::Position::new(v.x + dx, -100.0),
            power_dbm: -70.0,
            budget_power_dbm: -70.0,
            sigma_db: 3.0,
        };
        let ev = cch_event(&w, tx, 505.0, Band::Tvws);
        let mut out = Vec::new();
        let grid = FrequencyGrid::default();
        record_dtt_sir(&w, &ctx, &[mk(0.0), mk(500.0), mk(3000.0)], &ev, None, SirSampling::All, &grid, 39.5, &mut out);
        let g = radio.dtt_pathloss.gain(v.position().distance(&mk(0.0).position), 505.0);
        let i = 23.0 + lin_to_db(g) + lin_to_db(acir.v_to_dtt.acir(15.0, Some(-70.0)));
        assert!((out[0].sir_db - (-70.0 - i)).abs() < 1e-9);
        assert!(out[0].sir_db < out[1].sir_db && out[1].sir_db < out[2].sir_db);
        let mut near = Vec::new();
        record_dtt_sir(&w, &ctx, &[mk(0.0), mk(3000.0)], &ev, None, SirSampling::Radius { m: 1000.0 }, &grid, 39.5, &mut near);
        assert_eq!(near.len(), 1);
    }

    #[test]
    fn hashed_normal_is_stable() {
        assert_eq!(hashed_normal(&[1, 2, 3]), hashed_normal(&[1, 2, 3]));
        assert_ne!(hashed_normal(&[1, 2, 3]), hashed_normal(&[1, 2, 4]));
        let n = 20_000;
        let xs: Vec<f64> = (0..n).map(|i| hashed_normal(&[9, i])).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.03 && (var - 1.0).abs() < 0.05);
    }

    #[test]
    fn empty_report_exports_headers() {
        let r = MetricsReport {
            strategy: Strategy::Exhaustive,
            seed: 1,
            warmup_s: 5.0,
            duration_s: 140.0,
            sir_threshold_db: 39.5,
            reception_by_position: vec![],
            dtt_sir_samples: vec![],
            assignment_history: vec![],
            switch_counts: vec![],
            min_sinr_series: vec![],
            fallback_events: vec![],
            totals: MessageTotals::default(),
            mobility_events: 0,
        };
        let dir = tempfile::tempdir().unwrap();
        export_report(&r, dir.path()).unwrap();
        let sir = std::fs::read_to_string(dir.path().join("dtt_sir_samples.csv")).unwrap();
        assert_eq!(sir.lines().count(), 1);
        let back = Summary::load_path(dir.path().join("summary.json")).unwrap();
        assert_eq!(back, r.summary());
    }

    #[test]
    fn combine_is_order_independent() {
        let mk = |seed: u64, sw: Vec<usize>, below: u64| Summary {
            schema_version: REPORT_SCHEMA_VERSION,
            strategy: "exhaustive".into(),
            seeds: vec![seed],
            warmup_s: 5.0,
            sir_threshold_db: 39.5,
            reception_by_position: vec![PositionStats {
                position: 1,
                attempts: 10,
                received: 9,
                ..PositionStats::default()
            }],
            dtt_bands: vec![BandSummary {
                channel_id: 23,
                center_mhz: 490.0,
                samples: 10,
                below_threshold: below,
                fraction_below: below as f64 / 10.0,
            }],
            switch_counts_per_seed: vec![sw],
            switch_counts_mean: vec![],
            switch_counts_std: vec![],
            fallback_events: 0,
            totals: MessageTotals::default(),
        };
        let a = mk(1, vec![4, 1], 3);
        let b = mk(2, vec![6, 3], 5);
        let ab = Summary::combine(&[a.clone(), b.clone()]).unwrap();
        let ba = Summary::combine(&[b, a]).unwrap();
        assert_eq!(ab, ba);
        assert_eq!(ab.switch_counts_mean, vec![5.0, 2.0]);
        assert_eq!(ab.switch_counts_std, vec![1.0, 1.0]);
        assert_eq!(ab.fraction_below(23), Some(0.4));
        assert_eq!(ab.reception_by_position[0].attempts, 20);
    }

    #[test]
    fn channel_membership_follows_assignment() {
        let w = small_world(2, 3);
        let cfg = SimConfig::default();
        let ch = Channels::build(&w, &FrequencyAssignment(vec![Some(501.0), None]), &cfg);
        assert_eq!(ch.tvws.len(), 3);
        assert!(ch.tvws.iter().all(|e| e.period_s == 0.2 && e.freq_mhz == 501.0));
        let p1 = &w.platoons[1].members;
        assert!(ch.cch.iter().filter(|e| p1.contains(&e.id)).all(|e| e.period_s == 0.1));
        assert!(ch
            .cch
            .iter()
            .filter(|e| w.vehicles[e.id].role == Role::Jammer)
            .all(|e| e.period_s == 0.1));
    }
}
