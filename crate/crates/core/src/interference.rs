//! Analytic SINR of platoon links: thermal noise, DTT leakage into the
//! vehicular channel and expected interference from other platoon vehicles.

use serde::{Deserialize, Serialize};

use crate::error::InterferenceError;
use crate::radio::{AcirSet, RadioConfig};
use crate::rem::RemDatabase;
use crate::scenario::{VehicleId, WorldState};
use crate::units::{dbm_to_w, lin_to_db};

/// Which transmitters contribute to the expected vehicle interference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterferenceMode {
    /// Every other transmitter, active independently (pure ALOHA).
    AllNodes,
    /// Only transmitters the wanted transmitter cannot sense.
    HiddenOnly,
}

/// One wanted link inside a platoon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Link {
    pub platoon: usize,
    pub rx: VehicleId,
    pub tx: VehicleId,
}

/// All wanted links: every follower listens to its leader and to the car
/// in front of it.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkSet {
    pub links: Vec<Link>,
}

impl LinkSet {
    pub fn from_world(world: &WorldState) -> Self {
        let mut links = Vec::new();
        for p in &world.platoons {
            for &rx in &p.members[1..] {
                for tx in p.listened(rx) {
                    links.push(Link { platoon: p.id, rx, tx });
                }
            }
        }
        Self { links }
    }

    pub fn listened(&self, rx: VehicleId) -> impl Iterator<Item = VehicleId> + '_ {
        self.links.iter().filter(move |l| l.rx == rx).map(|l| l.tx)
    }
}

/// Centre frequency per platoon; `None` means the platoon has vacated the
/// white-space channel and only uses the control channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyAssignment(pub Vec<Option<f64>>);

impl FrequencyAssignment {
    pub fn get(&self, platoon: usize) -> Option<f64> {
        self.0.get(platoon).copied().flatten()
    }

    pub fn all(freqs: &[f64]) -> Self {
        Self(freqs.iter().map(|f| Some(*f)).collect())
    }
}

/// Everything the analytic model needs besides the world snapshot.
#[derive(Debug, Clone, Copy)]
pub struct RadioContext<'a> {
    pub radio: &'a RadioConfig,
    pub acir: &'a AcirSet,
    pub rem: &'a RemDatabase,
    /// Interval between two white-space messages of one vehicle, s.
    pub message_period_s: f64,
    /// Hidden-node threshold in watts; `f64::INFINITY` makes every node hidden.
    pub hidden_threshold_w: f64,
    pub mode: InterferenceMode,
}

impl<'a> RadioContext<'a> {
    pub fn new(radio: &'a RadioConfig, acir: &'a AcirSet, rem: &'a RemDatabase, message_period_s: f64) -> Self {
        Self {
            radio,
            acir,
            rem,
            message_period_s,
            hidden_threshold_w: dbm_to_w(radio.cs_threshold_dbm),
            mode: InterferenceMode::HiddenOnly,
        }
    }

    fn tx_w(&self) -> f64 {
        dbm_to_w(self.radio.tx_power_dbm)
    }

    fn gain(&self, world: &WorldState, a: VehicleId, b: VehicleId, f_mhz: f64) -> f64 {
        let d = world.vehicles[a].position().distance(&world.vehicles[b].position());
        self.radio.pathloss.gain(d, f_mhz)
    }
}

pub fn tx_probability(message_airtime: f64, message_period: f64) -> Result<f64, InterferenceError> {
    if !(message_airtime > 0.0 && message_airtime < message_period) {
        return Err(InterferenceError::Saturated {
            airtime: message_airtime,
            period: message_period,
        });
    }
    Ok(message_airtime / message_period)
}

/// White-space transmitters other than `tx` whose power at `tx`, after
/// adjacent-channel rejection, stays below the hidden-node threshold.
pub fn hidden_node_set(
    world: &WorldState,
    ctx: &RadioContext,
    tx: VehicleId,
    assignment: &FrequencyAssignment,
) -> Vec<VehicleId> {
    let Some(f_i) = world.vehicles[tx].platoon_id.and_then(|p| assignment.get(p)) else {
        return Vec::new();
    };
    let p = ctx.tx_w();
    active_transmitters(world, assignment)
        .filter(|(j, _)| *j != tx)
        .filter(|(j, f_j)| {
            let rx_power = p * ctx.gain(world, tx, *j, *f_j) * ctx.acir.v_to_v.acir(f_j - f_i, None);
            rx_power < ctx.hidden_threshold_w
        })
        .map(|(j, _)| j)
        .collect()
}

fn active_transmitters<'w>(
    world: &'w WorldState,
    assignment: &'w FrequencyAssignment,
) -> impl Iterator<Item = (VehicleId, f64)> + 'w {
    world
        .platoons
        .iter()
        .filter_map(|p| assignment.get(p.id).map(|f| (p, f)))
        .flat_map(|(p, f)| p.members.iter().map(move |m| (*m, f)))
}

/// Sum of DTT powers at `route_distance` leaking into a vehicular channel
/// centred at `f_v`, in watts. Zero on the control channel.
pub fn pu_to_v_interference(
    rem: &RemDatabase,
    acir: &AcirSet,
    route_distance: f64,
    f_v: f64,
    cch_freq_mhz: f64,
) -> Result<f64, InterferenceError> {
    if f_v == cch_freq_mhz {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for ch in &rem.dtt_channels {
        let (mean_dbm, _) = rem.query_power(ch.channel_id, route_distance)?;
        total += dbm_to_w(mean_dbm) * acir.dtt_to_v.acir(ch.center_mhz - f_v, None);
    }
    Ok(total)
}

/// Expected interference at `rx` while it decodes `tx`.
pub fn v_to_v_expected_interference(
    world: &WorldState,
    ctx: &RadioContext,
    rx: VehicleId,
    tx: VehicleId,
    assignment: &FrequencyAssignment,
    mode: InterferenceMode,
) -> Result<f64, InterferenceError> {
    let Some(f_i) = world.vehicles[tx].platoon_id.and_then(|p| assignment.get(p)) else {
        return Ok(0.0);
    };
    let pr = tx_probability(ctx.radio.airtime_s, ctx.message_period_s)?;
    let p = ctx.tx_w();
    let term = |j: VehicleId, f_j: f64| pr * p * ctx.gain(world, j, rx, f_j) * ctx.acir.v_to_v.acir(f_j - f_i, None);
    let total = match mode {
        InterferenceMode::AllNodes => active_transmitters(world, assignment)
            .filter(|(j, _)| *j != tx && *j != rx)
            .map(|(j, f_j)| term(j, f_j))
            .sum(),
        InterferenceMode::HiddenOnly => hidden_node_set(world, ctx, tx, assignment)
            .into_iter()
            .filter(|j| *j != rx)
            .map(|j| {
                let f_j = assignment.get(world.vehicles[j].platoon_id.unwrap()).unwrap();
                term(j, f_j)
            })
            .sum(),
    };
    Ok(total)
}

/// SINR of the link `tx -> rx` on the transmitter's assigned channel, in dB.
pub fn sinr(
    world: &WorldState,
    ctx: &RadioContext,
    rx: VehicleId,
    tx: VehicleId,
    assignment: &FrequencyAssignment,
) -> Result<f64, InterferenceError> {
    let f = world.vehicles[tx]
        .platoon_id
        .and_then(|p| assignment.get(p))
        .unwrap_or(ctx.radio.cch_freq_mhz);
    let signal = ctx.tx_w() * ctx.gain(world, tx, rx, f);
    let i_pu = pu_to_v_interference(ctx.rem, ctx.acir, world.route_distance(rx), f, ctx.radio.cch_freq_mhz)?;
    let i_vv = v_to_v_expected_interference(world, ctx, rx, tx, assignment, ctx.mode)?;
    Ok(lin_to_db(signal / (ctx.radio.noise_w() + i_pu + i_vv)))
}

/// Smallest SINR over all links of platoons that currently hold a
/// white-space channel. The first link in (platoon, receiver) order wins ties.
pub fn min_pair_sinr(
    world: &WorldState,
    ctx: &RadioContext,
    links: &LinkSet,
    assignment: &FrequencyAssignment,
) -> Result<Option<(f64, Link)>, InterferenceError> {
    let mut best: Option<(f64, Link)> = None;
    for link in links.links.iter().filter(|l| assignment.get(l.platoon).is_some()) {
        let s = sinr(world, ctx, link.rx, link.tx, assignment)?;
        if best.is_none_or(|(b, _)| s < b) {
            best = Some((s, *link));
        }
    }
    Ok(best)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::radio::{AcirDirection, AcirTable, PathlossModel};
    use crate::rem::{DttChannel, RemSegment};
    use crate::scenario::{init_world, ScenarioConfig};
    use crate::units::w_to_dbm;
    use proptest::prelude::*;
    use std::collections::BTreeMap;

    /// Flat REM: every channel has a constant mean power over a long route.
    pub(crate) fn flat_rem(powers: &[(u32, f64)]) -> RemDatabase {
        let mut segments = BTreeMap::new();
        let mut channels = Vec::new();
        for &(ch, p) in powers {
            segments.insert(
                ch,
                vec![RemSegment {
                    channel_id: ch,
                    d_start: -10_000.0,
                    d_end: 20_000.0,
                    slope: 0.0,
                    intercept: p,
                    sigma: 0.0,
                }],
            );
            channels.push(DttChannel::uhf(ch));
        }
        RemDatabase {
            segments,
            dtt_receivers: Vec::new(),
            dtt_channels: channels,
        }
    }

    pub(crate) fn small_world(platoons: usize, size: usize) -> WorldState {
        let mut cfg = ScenarioConfig {
            background_density_per_km_lane: 0.0,
            platoon_offset_m: 0.0,
            ..ScenarioConfig::default()
        };
        cfg.platoons.truncate(platoons);
        for p in cfg.platoons.iter_mut() {
            p.size = size;
        }
        init_world(&cfg, 7).unwrap()
    }

    /// Co-channel coupling 1, `coupling` at every non-zero offset.
    fn flat_acir(direction: AcirDirection, coupling: f64) -> AcirTable {
        let c = coupling.max(1e-30);
        AcirTable::new(direction, vec![0.0, 1e-9], vec![1.0, c], None, c, -45.0).unwrap()
    }

    #[test]
    fn tx_probability_examples() {
        assert!((tx_probability(0.5e-3, 0.1).unwrap() - 0.005).abs() < 1e-15);
        assert!((tx_probability(0.5e-3, 0.2).unwrap() - 0.0025).abs() < 1e-15);
        assert!(tx_probability(0.1, 0.1).is_err());
        assert!(tx_probability(0.0, 0.1).is_err());
    }

    #[test]
    fn link_set_structure() {
        let w = small_world(2, 5);
        let ls = LinkSet::from_world(&w);
        // first follower hears only the leader, the others two cars
        assert_eq!(ls.links.len(), 2 * (1 + 3 * 2));
        for p in &w.platoons {
            assert!(ls.links.iter().all(|l| l.rx != p.leader()));
            for &m in &p.members[1..] {
                assert!(ls.listened(m).any(|t| t == p.leader()));
            }
        }
    }

    #[test]
    fn hidden_set_limits() {
        let w = small_world(2, 4);
        let radio = RadioConfig::default();
        let acir = AcirSet::default();
        let rem = flat_rem(&[]);
        let a = FrequencyAssignment::all(&[499.0, 513.0]);
        let mut ctx = RadioContext::new(&radio, &acir, &rem, 0.2);
        let tx = w.platoons[0].members[1];
        ctx.hidden_threshold_w = f64::INFINITY;
        let all = hidden_node_set(&w, &ctx, tx, &a);
        assert_eq!(all.len(), 7);
        assert!(!all.contains(&tx));
        ctx.hidden_threshold_w = 0.0;
        assert!(hidden_node_set(&w, &ctx, tx, &a).is_empty());
    }

    #[test]
    fn hidden_set_three_node_line() {
        // three cars of one platoon on a line, 100 m and 1000 m from the transmitter
        let mut w = small_world(1, 3);
        let ids = w.platoons[0].members.clone();
        w.vehicles[ids[0]].x = 0.0;
        w.vehicles[ids[1]].x = 100.0;
        w.vehicles[ids[2]].x = 1000.0;
        for id in &ids {
            w.vehicles[*id].y = 0.0;
        }
        let radio = RadioConfig {
            pathloss: PathlossModel::log_distance(3.0),
            ..RadioConfig::default()
        };
        let acir = AcirSet::default();
        let rem = flat_rem(&[]);
        let a = FrequencyAssignment::all(&[506.0]);
        let mut ctx = RadioContext::new(&radio, &acir, &rem, 0.2);
        let p = dbm_to_w(radio.tx_power_dbm);
        let near = p * radio.pathloss.gain(100.0, 506.0);
        let far = p * radio.pathloss.gain(1000.0, 506.0);
        ctx.hidden_threshold_w = (near * far).sqrt();
        assert_eq!(hidden_node_set(&w, &ctx, ids[0], &a), vec![ids[2]]);
    }

    #[test]
    fn pu_interference_examples() {
        let acir = AcirSet {
            dtt_to_v: flat_acir(AcirDirection::DttToV, 1e-3),
            ..AcirSet::default()
        };
        let one = flat_rem(&[(23, -60.0)]);
        let i = pu_to_v_interference(&one, &acir, 100.0, 506.0, 5900.0).unwrap();
        assert!((w_to_dbm(i) + 90.0).abs() < 1e-9);

        let two = flat_rem(&[(23, -60.0), (27, -60.0)]);
        let i = pu_to_v_interference(&two, &acir, 100.0, 506.0, 5900.0).unwrap();
        assert!((w_to_dbm(i) - (-90.0 + 10.0 * 2f64.log10())).abs() < 1e-9);

        let co = pu_to_v_interference(&one, &AcirSet::default(), 100.0, 490.0, 5900.0).unwrap();
        assert!((w_to_dbm(co) + 60.0).abs() < 1e-9);

        assert_eq!(pu_to_v_interference(&one, &acir, 100.0, 5900.0, 5900.0).unwrap(), 0.0);
        assert!(pu_to_v_interference(&one, &acir, 1e6, 506.0, 5900.0).is_err());
    }

    #[test]
    fn single_interferer_expectation() {
        let mut w = small_world(2, 2);
        let (rx, tx) = (w.platoons[0].members[1], w.platoons[0].members[0]);
        let radio = RadioConfig {
            pathloss: PathlossModel::log_distance(2.0),
            airtime_s: 0.5e-3,
            ..RadioConfig::default()
        };
        // drop the other follower far away and place the other leader so that
        // its power at rx is -80 dBm
        let other = w.platoons[1].members[0];
        let far = w.platoons[1].members[1];
        w.vehicles[far].x = 1e9;
        let g_target = dbm_to_w(-80.0) / dbm_to_w(radio.tx_power_dbm);
        let lambda_d0 = radio.pathloss.gain(1.0, 506.0);
        let d = (lambda_d0 / g_target).sqrt();
        w.vehicles[other].x = w.vehicles[rx].x;
        w.vehicles[other].y = w.vehicles[rx].y + d;
        let acir = AcirSet::default();
        let rem = flat_rem(&[]);
        let a = FrequencyAssignment(vec![Some(506.0), Some(506.0)]);
        let ctx = RadioContext::new(&radio, &acir, &rem, 0.1);
        let mut only = a.clone();
        only.0[1] = None;
        let i0 = v_to_v_expected_interference(&w, &ctx, rx, tx, &only, InterferenceMode::AllNodes).unwrap();
        assert_eq!(i0, 0.0);
        let i = v_to_v_expected_interference(&w, &ctx, rx, tx, &a, InterferenceMode::AllNodes).unwrap();
        assert!((w_to_dbm(i) - (-80.0 + 10.0 * 0.005f64.log10())).abs() < 1e-3);
        assert!((w_to_dbm(i) + 103.0).abs() < 0.02);
    }

    #[test]
    fn noise_limited_and_doubled_denominator() {
        let w = small_world(1, 2);
        let (rx, tx) = (w.platoons[0].members[1], w.platoons[0].members[0]);
        let radio = RadioConfig::default();
        let none = AcirSet {
            dtt_to_v: flat_acir(AcirDirection::DttToV, 0.0),
            ..AcirSet::default()
        };
        let rem0 = flat_rem(&[(23, -60.0)]);
        let a = FrequencyAssignment::all(&[506.0]);
        let ctx = RadioContext::new(&radio, &none, &rem0, 0.2);
        let s0 = sinr(&w, &ctx, rx, tx, &a).unwrap();
        let d = w.vehicles[rx].position().distance(&w.vehicles[tx].position());
        let expected = lin_to_db(dbm_to_w(23.0) * radio.pathloss.gain(d, 506.0) / radio.noise_w());
        assert!((s0 - expected).abs() < 1e-6);

        // a DTT leak equal to the noise floor halves the SINR
        let unit = AcirSet {
            dtt_to_v: flat_acir(AcirDirection::DttToV, 1.0),
            ..AcirSet::default()
        };
        let rem_n = flat_rem(&[(23, w_to_dbm(radio.noise_w()))]);
        let ctx = RadioContext::new(&radio, &unit, &rem_n, 0.2);
        let s1 = sinr(&w, &ctx, rx, tx, &a).unwrap();
        assert!((s0 - s1 - 10.0 * 2f64.log10()).abs() < 1e-9);
    }

    /// Direct evaluation of the SINR expression on explicit coordinates.
    fn spreadsheet_sinr(
        pts: &[(f64, f64)],
        freqs: &[f64],
        rx: usize,
        tx: usize,
        radio: &RadioConfig,
        acir: &AcirSet,
        dtt_dbm: f64,
        period: f64,
    ) -> f64 {
        let pl = |a: usize, b: usize, f: f64| {
            let d = ((pts[a].0 - pts[b].0).powi(2) + (pts[a].1 - pts[b].1).powi(2)).sqrt();
            radio.pathloss.gain(d, f)
        };
        let p = 10f64.powf((radio.tx_power_dbm - 30.0) / 10.0);
        let s = p * pl(tx, rx, freqs[tx]);
        let n = 1.380_649e-23 * 290.0 * radio.bandwidth_mhz * 1e6 * 10f64.powf(radio.noise_figure_db / 10.0);
        let ipu = 10f64.powf((dtt_dbm - 30.0) / 10.0) * acir.dtt_to_v.acir(490.0 - freqs[tx], None);
        let pr = radio.airtime_s / period;
        let gamma = 10f64.powf((radio.cs_threshold_dbm - 30.0) / 10.0);
        let mut ivv = 0.0;
        for j in 0..pts.len() {
            if j == tx || j == rx {
                continue;
            }
            let c = acir.v_to_v.acir(freqs[j] - freqs[tx], None);
            if p * pl(tx, j, freqs[j]) * c < gamma {
                ivv += pr * p * pl(j, rx, freqs[j]) * c;
            }
        }
        10.0 * (s / (n + ipu + ivv)).log10()
    }

    #[test]
    fn three_vehicle_fixture_matches_direct_evaluation() {
        let mut w = small_world(2, 2);
        let ids = [w.platoons[0].members[0], w.platoons[0].members[1], w.platoons[1].members[0]];
        let pts = [(0.0, 1.75), (-40.0, 1.75), (-700.0, 12.25)];
        for (id, (x, y)) in ids.iter().zip(pts) {
            w.vehicles[*id].x = x;
            w.vehicles[*id].y = y;
        }
        let far = w.platoons[1].members[1];
        w.vehicles[far].x = 1e9;
        let radio = RadioConfig::default();
        let acir = AcirSet::default();
        let rem = flat_rem(&[(23, -65.0)]);
        let a = FrequencyAssignment::all(&[501.0, 503.0]);
        let ctx = RadioContext::new(&radio, &acir, &rem, 0.2);
        let got = sinr(&w, &ctx, ids[1], ids[0], &a).unwrap();
        let want = spreadsheet_sinr(&pts, &[501.0, 501.0, 503.0], 1, 0, &radio, &acir, -65.0, 0.2);
        assert!((got - want).abs() < 1e-9, "{got} vs {want}");
    }

    #[test]
    fn min_pair_sinr_picks_rear_leader_link() {
        let w = small_world(2, 6);
        let radio = RadioConfig::default();
        let acir = AcirSet::default();
        let rem = flat_rem(&[(23, -70.0)]);
        let ctx = RadioContext::new(&radio, &acir, &rem, 0.2);
        let links = LinkSet::from_world(&w);
        let a = FrequencyAssignment::all(&[499.0, 513.0]);
        let (s, link) = min_pair_sinr(&w, &ctx, &links, &a).unwrap().unwrap();
        let mut brute: Vec<(f64, Link)> =
            links.links.iter().map(|l| (sinr(&w, &ctx, l.rx, l.tx, &a).unwrap(), *l)).collect();
        brute.sort_by(|a, b| a.0.total_cmp(&b.0));
        assert_eq!(s, brute[0].0);
        let p = &w.platoons[link.platoon];
        assert_eq!(link.rx, *p.members.last().unwrap());
        assert_eq!(link.tx, p.leader());

        let one = LinkSet {
            links: vec![links.links[0]],
        };
        let (s1, _) = min_pair_sinr(&w, &ctx, &one, &a).unwrap().unwrap();
        assert_eq!(s1, sinr(&w, &ctx, links.links[0].rx, links.links[0].tx, &a).unwrap());
    }

    #[test]
    fn cross_platoon_terms_vanish_without_coupling() {
        let w = small_world(2, 4);
        let radio = RadioConfig::default();
        let zero_vv = AcirTable::new(AcirDirection::VToV, vec![0.0, 1.0], vec![1.0, 1e-300], None, 1e-300, -45.0).unwrap();
        let acir = AcirSet {
            v_to_v: zero_vv,
            ..AcirSet::default()
        };
        let rem = flat_rem(&[(23, -70.0)]);
        let ctx = RadioContext {
            mode: InterferenceMode::AllNodes,
            ..RadioContext::new(&radio, &acir, &rem, 0.2)
        };
        let both = FrequencyAssignment::all(&[499.0, 513.0]);
        let alone = FrequencyAssignment(vec![Some(499.0), None]);
        for l in LinkSet::from_world(&w).links.iter().filter(|l| l.platoon == 0) {
            let a = v_to_v_expected_interference(&w, &ctx, l.rx, l.tx, &both, ctx.mode).unwrap();
            let b = v_to_v_expected_interference(&w, &ctx, l.rx, l.tx, &alone, ctx.mode).unwrap();
            assert!((a - b).abs() <= 1e-12 * b.max(1e-30));
        }
    }

    #[test]
    fn aloha_joint_activity_factorises() {
        use rand::{Rng, SeedableRng};
        let (pi, pj) = (0.3, 0.05);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let n = 200_000;
        let mut both = 0usize;
        for _ in 0..n {
            let a = rng.random::<f64>() < pi;
            let b = rng.random::<f64>() < pj;
            both += (a && b) as usize;
        }
        let p = pi * pj;
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!(((both as f64 / n as f64) - p).abs() < 4.0 * se);
    }

    fn random_world(xs: &[f64]) -> WorldState {
        let mut w = small_world(2, 3);
        for (v, x) in w.vehicles.iter_mut().filter(|v| v.is_platoon()).zip(xs) {
            v.x = *x;
        }
        w
    }

    proptest! {
        #[test]
        fn hidden_only_bounded_by_all_nodes(
            xs in prop::collection::vec(-3000.0f64..3000.0, 6),
            f0 in 499.0f64..513.0,
            f1 in 499.0f64..513.0,
        ) {
            let w = random_world(&xs);
            let radio = RadioConfig::default();
            let acir = AcirSet::default();
            let rem = flat_rem(&[]);
            let ctx = RadioContext::new(&radio, &acir, &rem, 0.2);
            let a = FrequencyAssignment::all(&[f0, f1]);
            for l in LinkSet::from_world(&w).links {
                let h = v_to_v_expected_interference(&w, &ctx, l.rx, l.tx, &a, InterferenceMode::HiddenOnly).unwrap();
                let all = v_to_v_expected_interference(&w, &ctx, l.rx, l.tx, &a, InterferenceMode::AllNodes).unwrap();
                prop_assert!(h >= 0.0 && h <= all * (1.0 + 1e-12));
            }
        }

        #[test]
        fn sinr_decreases_with_each_term(
            xs in prop::collection::vec(-3000.0f64..3000.0, 6),
            dtt in -100.0f64..-40.0,
            bump in 0.1f64..20.0,
        ) {
            let w = random_world(&xs);
            let radio = RadioConfig { cs_threshold_dbm: 100.0, ..RadioConfig::default() };
            let acir = AcirSet::default();
            let rem = flat_rem(&[(23, dtt)]);
            let rem_up = flat_rem(&[(23, dtt + bump)]);
            let a = FrequencyAssignment::all(&[503.0, 509.0]);
            let ctx = RadioContext::new(&radio, &acir, &rem, 0.2);
            let ctx_up = RadioContext::new(&radio, &acir, &rem_up, 0.2);
            let busier = RadioConfig { airtime_s: radio.airtime_s * 2.0, ..radio.clone() };
            let ctx_busy = RadioContext::new(&busier, &acir, &rem, 0.2);
            let tx_only = FrequencyAssignment(vec![Some(503.0), None]);
            for l in LinkSet::from_world(&w).links.iter().filter(|l| l.platoon == 0) {
                let s = sinr(&w, &ctx, l.rx, l.tx, &a).unwrap();
                prop_assert!(sinr(&w, &ctx_up, l.rx, l.tx, &a).unwrap() < s);
                prop_assert!(sinr(&w, &ctx_busy, l.rx, l.tx, &a).unwrap() <= s);
                prop_assert!(sinr(&w, &ctx, l.rx, l.tx, &tx_only).unwrap() >= s);
            }
        }
    }
}
