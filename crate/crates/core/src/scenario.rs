//! Motorway world: platoons under CACC behind speed-cycling jammer cars,
//! background traffic on the inner lanes and DTT receivers beside the road.
//!
//! Coordinates: `x` grows in the driving direction and is the front bumper of
//! a vehicle; `y = 0` is the outer edge of lane 0 and DTT receivers sit at
//! negative `y`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::radio::Position;
use crate::rem::{reference_receivers, DttReceiverSite};
use crate::units::kmh_to_ms;

pub type VehicleId = usize;

pub const ACCEL_MIN: f64 = -8.0;
pub const ACCEL_MAX: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    PlatoonLeader,
    PlatoonMember,
    Jammer,
    Background,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub id: VehicleId,
    pub role: Role,
    pub platoon_id: Option<usize>,
    pub lane: u8,
    pub x: f64,
    pub y: f64,
    pub speed: f64,
    pub accel: f64,
    pub length: f64,
}

impl VehicleState {
    pub fn position(&self) -> Position {
        Position::new(self.x, self.y)
    }

    pub fn is_platoon(&self) -> bool {
        matches!(self.role, Role::PlatoonLeader | Role::PlatoonMember)
    }
}

/// Kinematic state carried in a V2V message, stamped with its generation time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KinematicInfo {
    pub x: f64,
    pub speed: f64,
    pub accel: f64,
    pub stamp: f64,
}

/// Last successfully received leader / predecessor information of a vehicle.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct V2vInfo {
    pub leader: Option<KinematicInfo>,
    pub predecessor: Option<KinematicInfo>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CaccGains {
    /// Weight of the leader acceleration in the feed-forward blend; the
    /// predecessor gets the complement.
    pub leader_weight: f64,
    /// Spacing error gain, 1/s^2.
    pub spacing_gain: f64,
    /// Predecessor relative speed gain, 1/s.
    pub speed_gain: f64,
    /// Leader relative speed gain, 1/s.
    pub leader_speed_gain: f64,
    /// Age after which received information is ignored, s.
    pub staleness_s: f64,
    /// Gains of the sensor-only fallback controller.
    pub acc_spacing_gain: f64,
    pub acc_speed_gain: f64,
}

impl Default for CaccGains {
    fn default() -> Self {
        Self {
            leader_weight: 0.5,
            spacing_gain: 0.2,
            speed_gain: 0.8,
            leader_speed_gain: 0.0,
            staleness_s: 0.5,
            acc_spacing_gain: 0.1,
            acc_speed_gain: 0.6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlatoonConfig {
    pub size: usize,
    /// Initial bumper-to-bumper gap, m.
    pub initial_gap: f64,
    pub time_gap: f64,
    pub standstill_gap: f64,
    pub lane: u8,
    pub vehicle_length: f64,
    pub gains: CaccGains,
    /// Time gap the leader keeps to the jammer ahead, s.
    pub leader_time_gap: f64,
}

impl Default for PlatoonConfig {
    fn default() -> Self {
        let time_gap = 0.6;
        let standstill_gap = 2.0;
        Self {
            size: 10,
            initial_gap: standstill_gap + time_gap * kmh_to_ms(130.0),
            time_gap,
            standstill_gap,
            lane: 0,
            vehicle_length: 12.0,
            gains: CaccGains::default(),
            leader_time_gap: 1.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct JammerCycle {
    pub v_high_kmh: f64,
    pub v_low_kmh: f64,
    pub period_s: f64,
    /// Speed tracking gain, 1/s.
    pub tracking_gain: f64,
}

impl Default for JammerCycle {
    fn default() -> Self {
        Self {
            v_high_kmh: 130.0,
            v_low_kmh: 100.0,
            period_s: 30.0,
            tracking_gain: 1.0,
        }
    }
}

impl JammerCycle {
    /// Symmetric triangle: decelerate for half a period, accelerate back.
    pub fn target_speed(&self, t: f64) -> f64 {
        let hi = kmh_to_ms(self.v_high_kmh);
        let lo = kmh_to_ms(self.v_low_kmh);
        let half = self.period_s / 2.0;
        let tau = t.max(0.0).rem_euclid(self.period_s);
        if tau < half {
            hi - (hi - lo) * tau / half
        } else {
            lo + (hi - lo) * (tau - half) / half
        }
    }

    pub fn target_slope(&self, t: f64) -> f64 {
        let rate = kmh_to_ms(self.v_high_kmh - self.v_low_kmh) / (self.period_s / 2.0);
        if t.max(0.0).rem_euclid(self.period_s) < self.period_s / 2.0 {
            -rate
        } else {
            rate
        }
    }
}

pub fn jammer_target_speed(t: f64) -> f64 {
    JammerCycle::default().target_speed(t)
}

/// Maps the simulated longitudinal coordinate onto measurement route distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RouteMapping {
    pub offset_m: f64,
    pub scale: f64,
}

impl Default for RouteMapping {
    fn default() -> Self {
        Self {
            offset_m: 0.0,
            scale: 1.0,
        }
    }
}

impl RouteMapping {
    pub fn route_distance(&self, x: f64) -> f64 {
        (x - self.offset_m) * self.scale
    }

    pub fn x_of(&self, route_distance: f64) -> f64 {
        self.offset_m + route_distance / self.scale
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub platoons: Vec<PlatoonConfig>,
    pub lanes: u8,
    pub lane_width_m: f64,
    pub background_density_per_km_lane: f64,
    pub background_lanes: Vec<u8>,
    pub background_speed_kmh: (f64, f64),
    pub background_min_spacing_m: f64,
    pub background_length_m: f64,
    pub road_start_m: f64,
    pub road_end_m: f64,
    pub jammer: JammerCycle,
    pub jammer_length_m: f64,
    /// Front bumper position of the first platoon leader at t = 0.
    pub first_leader_x: f64,
    /// Longitudinal offset between consecutive platoon leaders at t = 0.
    pub platoon_offset_m: f64,
    pub duration_s: f64,
    pub dt_s: f64,
    pub dtt_receivers: Vec<DttReceiverSite>,
    pub route: RouteMapping,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let p0 = PlatoonConfig::default();
        let p1 = PlatoonConfig {
            lane: 3,
            ..PlatoonConfig::default()
        };
        Self {
            platoons: vec![p0, p1],
            lanes: 4,
            lane_width_m: 3.5,
            background_density_per_km_lane: 20.0,
            background_lanes: vec![1, 2],
            background_speed_kmh: (100.0, 130.0),
            background_min_spacing_m: 8.0,
            background_length_m: 4.5,
            road_start_m: -2000.0,
            road_end_m: 10_000.0,
            jammer: JammerCycle::default(),
            jammer_length_m: 4.5,
            first_leader_x: 400.0,
            platoon_offset_m: 2000.0,
            duration_s: 140.0,
            dt_s: 0.01,
            dtt_receivers: reference_receivers(),
            route: RouteMapping::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.platoons.is_empty() {
            return bad("at least one platoon is required".into());
        }
        for (k, p) in self.platoons.iter().enumerate() {
            if p.size < 2 {
                return bad(format!("platoon {k}: size must be at least 2"));
            }
            if !(p.initial_gap > 0.0 && p.time_gap > 0.0 && p.standstill_gap > 0.0 && p.vehicle_length > 0.0) {
                return bad(format!("platoon {k}: gaps and lengths must be positive"));
            }
            if p.lane >= self.lanes {
                return bad(format!("platoon {k}: lane {} outside the motorway", p.lane));
            }
        }
        if self.background_lanes.iter().any(|l| *l >= self.lanes) {
            return bad("background lane outside the motorway".into());
        }
        if !(self.background_density_per_km_lane >= 0.0) {
            return bad("background density must be non-negative".into());
        }
        let (lo, hi) = self.background_speed_kmh;
        if !(lo > 0.0 && hi >= lo) {
            return bad("background speed range must be positive and ordered".into());
        }
        let j = &self.jammer;
        if !(j.v_low_kmh > 0.0 && j.v_high_kmh >= j.v_low_kmh && j.period_s > 0.0) {
            return bad("jammer cycle speeds and period must be positive".into());
        }
        if !(self.duration_s > 0.0) {
            return bad("duration must be positive".into());
        }
        if !(self.dt_s > 0.0 && self.dt_s <= 0.1) {
            return bad("mobility time step must lie in (0, 0.1] s".into());
        }
        if !(self.route.scale > 0.0) {
            return bad("route scale must be positive".into());
        }
        if !(self.road_end_m > self.road_start_m) {
            return bad("road end must lie beyond road start".into());
        }
        if self.dtt_receivers.iter().any(|r| !(r.distance_to_motorway > 0.0)) {
            return bad("DTT receivers need a positive distance to the motorway".into());
        }
        Ok(())
    }

    pub fn lane_y(&self, lane: u8) -> f64 {
        self.lane_width_m * (lane as f64 + 0.5)
    }

    /// Initial front-bumper position of every platoon leader.
    pub fn leader_start_x(&self, platoon: usize) -> f64 {
        self.first_leader_x + platoon as f64 * self.platoon_offset_m
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlatoonInfo {
    pub id: usize,
    pub lane: u8,
    pub jammer: VehicleId,
    /// Front to back, leader first.
    pub members: Vec<VehicleId>,
}

impl PlatoonInfo {
    pub fn leader(&self) -> VehicleId {
        self.members[0]
    }

    /// Vehicles whose transmissions `rx` listens to: the leader and the car in
    /// front (the same vehicle for the first follower).
    pub fn listened(&self, rx: VehicleId) -> Vec<VehicleId> {
        match self.members.iter().position(|m| *m == rx) {
            Some(0) | None => Vec::new(),
            Some(1) => vec![self.members[0]],
            Some(k) => vec![self.members[0], self.members[k - 1]],
        }
    }

    pub fn predecessor(&self, v: VehicleId) -> Option<VehicleId> {
        let k = self.members.iter().position(|m| *m == v)?;
        if k == 0 {
            None
        } else {
            Some(self.members[k - 1])
        }
    }

    /// 1-based follower index; the leader is position 0.
    pub fn position_of(&self, v: VehicleId) -> Option<usize> {
        self.members.iter().position(|m| *m == v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MobilityEvent {
    pub t: f64,
    pub vehicle: VehicleId,
    pub kind: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DttSite {
    pub id: u32,
    pub group: u32,
    pub position: Position,
    pub longitudinal_position: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub t: f64,
    pub vehicles: Vec<VehicleState>,
    pub platoons: Vec<PlatoonInfo>,
    pub v2v: Vec<V2vInfo>,
    pub dtt_receivers: Vec<DttSite>,
    pub route: RouteMapping,
    pub events: Vec<MobilityEvent>,
}

impl WorldState {
    pub fn vehicle(&self, id: VehicleId) -> &VehicleState {
        &self.vehicles[id]
    }

    pub fn platoon_of(&self, id: VehicleId) -> Option<&PlatoonInfo> {
        self.vehicles[id].platoon_id.map(|p| &self.platoons[p])
    }

    pub fn route_distance(&self, id: VehicleId) -> f64 {
        self.route.route_distance(self.vehicles[id].x)
    }

    /// All platoon vehicles, platoon by platoon, front to back.
    pub fn platoon_vehicles(&self) -> impl Iterator<Item = VehicleId> + '_ {
        self.platoons.iter().flat_map(|p| p.members.iter().copied())
    }

    /// Bumper-to-bumper gap from `id` to the vehicle it follows.
    pub fn gap_ahead(&self, id: VehicleId) -> Option<f64> {
        let ahead = self.vehicle_ahead(id)?;
        let a = &self.vehicles[ahead];
        Some(a.x - a.length - self.vehicles[id].x)
    }

    fn vehicle_ahead(&self, id: VehicleId) -> Option<VehicleId> {
        let v = &self.vehicles[id];
        let p = &self.platoons[v.platoon_id?];
        match v.role {
            Role::PlatoonLeader => Some(p.jammer),
            Role::PlatoonMember => p.predecessor(id),
            _ => None,
        }
    }

    /// Copies true kinematics into every member's V2V store, as if all
    /// messages were received at time `t`.
    pub fn refresh_v2v_perfect(&mut self) {
        for p in &self.platoons {
            let leader = &self.vehicles[p.leader()];
            let linfo = KinematicInfo {
                x: leader.x,
                speed: leader.speed,
                accel: leader.accel,
                stamp: self.t,
            };
            for w in p.members.windows(2) {
                let pred = &self.vehicles[w[0]];
                self.v2v[w[1]] = V2vInfo {
                    leader: Some(linfo),
                    predecessor: Some(KinematicInfo {
                        x: pred.x,
                        speed: pred.speed,
                        accel: pred.accel,
                        stamp: self.t,
                    }),
                };
            }
        }
    }
}

/// Builds the initial world. Platoons start at their equilibrium speed behind
/// their jammers; background cars are placed uniformly with a minimum spacing.
pub fn init_world(cfg: &ScenarioConfig, seed: u64) -> Result<WorldState, ConfigError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5ce4_a210_0000_0001);
    let v0 = kmh_to_ms(cfg.jammer.v_high_kmh);
    let mut vehicles = Vec::new();
    let mut platoons = Vec::new();

    for (k, pc) in cfg.platoons.iter().enumerate() {
        let y = cfg.lane_y(pc.lane);
        let leader_x = cfg.leader_start_x(k);
        let jammer_gap = pc.standstill_gap + pc.leader_time_gap * v0;
        let jammer = vehicles.len();
        vehicles.push(VehicleState {
            id: jammer,
            role: Role::Jammer,
            platoon_id: Some(k),
            lane: pc.lane,
            x: leader_x + jammer_gap + cfg.jammer_length_m,
            y,
            speed: v0,
            accel: 0.0,
            length: cfg.jammer_length_m,
        });
        let mut members = Vec::with_capacity(pc.size);
        let mut x = leader_x;
        for i in 0..pc.size {
            let id = vehicles.len();
            if i > 0 {
                x -= pc.vehicle_length + pc.initial_gap;
            }
            vehicles.push(VehicleState {
                id,
                role: if i == 0 { Role::PlatoonLeader } else { Role::PlatoonMember },
                platoon_id: Some(k),
                lane: pc.lane,
                x,
                y,
                speed: v0,
                accel: 0.0,
                length: pc.vehicle_length,
            });
            members.push(id);
        }
        platoons.push(PlatoonInfo {
            id: k,
            lane: pc.lane,
            jammer,
            members,
        });
    }

    let road = cfg.road_end_m - cfg.road_start_m;
    let (vlo, vhi) = cfg.background_speed_kmh;
    for &lane in &cfg.background_lanes {
        let count = (cfg.background_density_per_km_lane * road / 1000.0).round() as usize;
        if count == 0 {
            continue;
        }
        let needed = (count - 1) as f64 * cfg.background_min_spacing_m;
        if needed > road {
            return Err(ConfigError::DensityTooHigh {
                lane,
                count,
                needed,
                available: road,
            });
        }
        // uniform order statistics on the shortened road, then re-expanded
        let free = road - needed;
        let mut u: Vec<f64> = (0..count).map(|_| rng.random::<f64>() * free).collect();
        u.sort_by(f64::total_cmp);
        for (i, ui) in u.into_iter().enumerate() {
            let id = vehicles.len();
            let speed = kmh_to_ms(rng.random_range(vlo..=vhi));
            vehicles.push(VehicleState {
                id,
                role: Role::Background,
                platoon_id: None,
                lane,
                x: cfg.road_start_m + ui + i as f64 * cfg.background_min_spacing_m,
                y: cfg.lane_y(lane),
                speed,
                accel: 0.0,
                length: cfg.background_length_m,
            });
        }
    }

    let dtt_receivers = cfg
        .dtt_receivers
        .iter()
        .map(|r| DttSite {
            id: r.id,
            group: r.group,
            position: Position::new(cfg.route.x_of(r.longitudinal_position), -r.distance_to_motorway),
            longitudinal_position: r.longitudinal_position,
        })
        .collect();

    let n = vehicles.len();
    let mut world = WorldState {
        t: 0.0,
        vehicles,
        platoons,
        v2v: vec![V2vInfo::default(); n],
        dtt_receivers,
        route: cfg.route,
        events: Vec::new(),
    };
    world.refresh_v2v_perfect();
    Ok(world)
}

fn fresh(info: Option<&KinematicInfo>, now: f64, staleness: f64) -> Option<&KinematicInfo> {
    info.filter(|i| now - i.stamp <= staleness)
}

/// Commanded acceleration of a platoon member.
///
/// Constant-time-gap law: weighted leader/predecessor acceleration
/// feed-forward plus spacing-error and relative-speed feedback. The gap and
/// the predecessor speed come from on-board sensing; accelerations and the
/// leader speed come from the last received V2V messages. Without fresh
/// predecessor information the vehicle falls back to sensor-only gap control.
pub fn cacc_accel(
    world: &WorldState,
    vehicle_id: VehicleId,
    leader_info: Option<&KinematicInfo>,
    predecessor_info: Option<&KinematicInfo>,
    cfg: &PlatoonConfig,
) -> f64 {
    let me = &world.vehicles[vehicle_id];
    let Some(pred_id) = world.platoon_of(vehicle_id).and_then(|p| p.predecessor(vehicle_id)) else {
        return 0.0;
    };
    let pred = &world.vehicles[pred_id];
    let g = &cfg.gains;
    let gap = pred.x - pred.length - me.x;
    let spacing_err = gap - (cfg.standstill_gap + cfg.time_gap * me.speed);
    let rel_speed = pred.speed - me.speed;

    let u = match fresh(predecessor_info, world.t, g.staleness_s) {
        Some(p) => {
            let (w, a_l, leader_speed_term) = match fresh(leader_info, world.t, g.staleness_s) {
                Some(l) => (g.leader_weight, l.accel, g.leader_speed_gain * (l.speed - me.speed)),
                None => (0.0, 0.0, 0.0),
            };
            (1.0 - w) * p.accel + w * a_l + g.spacing_gain * spacing_err + g.speed_gain * rel_speed + leader_speed_term
        }
        None => g.acc_spacing_gain * spacing_err + g.acc_speed_gain * rel_speed,
    };
    u.clamp(ACCEL_MIN, ACCEL_MAX)
}

/// Sensor-only gap control of a platoon leader behind its jammer, capped by
/// cruise control at the jammer's top speed.
fn leader_accel(world: &WorldState, id: VehicleId, cfg: &PlatoonConfig, v_max: f64) -> f64 {
    let me = &world.vehicles[id];
    let p = &world.platoons[me.platoon_id.expect("leader has a platoon")];
    let j = &world.vehicles[p.jammer];
    let gap = j.x - j.length - me.x;
    let err = gap - (cfg.standstill_gap + cfg.leader_time_gap * me.speed);
    let g = &cfg.gains;
    let follow = g.acc_spacing_gain * err + g.acc_speed_gain * (j.speed - me.speed);
    let cruise = g.acc_speed_gain * (v_max - me.speed);
    follow.min(cruise).clamp(ACCEL_MIN, ACCEL_MAX)
}

/// Recomputes every controlled vehicle's acceleration from the current state.
pub fn update_controls(world: &mut WorldState, cfg: &ScenarioConfig) {
    let v_max = kmh_to_ms(cfg.jammer.v_high_kmh);
    let mut accels = Vec::with_capacity(world.vehicles.len());
    for v in &world.vehicles {
        let a = match v.role {
            Role::Background => 0.0,
            Role::Jammer => {
                let j = &cfg.jammer;
                (j.target_slope(world.t) + j.tracking_gain * (j.target_speed(world.t) - v.speed))
                    .clamp(ACCEL_MIN, ACCEL_MAX)
            }
            Role::PlatoonLeader => leader_accel(world, v.id, &cfg.platoons[v.platoon_id.unwrap()], v_max),
            Role::PlatoonMember => {
                let info = &world.v2v[v.id];
                cacc_accel(
                    world,
                    v.id,
                    info.leader.as_ref(),
                    info.predecessor.as_ref(),
                    &cfg.platoons[v.platoon_id.unwrap()],
                )
            }
        };
        accels.push(a);
    }
    for (v, a) in world.vehicles.iter_mut().zip(accels) {
        v.accel = a;
    }
}

/// Integrates all vehicles over `dt` with their current accelerations.
/// A speed that would turn negative stops at zero and is logged.
pub fn step_mobility(world: &mut WorldState, dt: f64) {
    debug_assert!(dt > 0.0 && dt <= 0.1);
    let t_next = world.t + dt;
    for v in world.vehicles.iter_mut() {
        let v_next = v.speed + v.accel * dt;
        if v_next < 0.0 {
            let tau = if v.accel < 0.0 { v.speed / -v.accel } else { 0.0 };
            v.x += v.speed * tau + 0.5 * v.accel * tau * tau;
            v.speed = 0.0;
            world.events.push(MobilityEvent {
                t: t_next,
                vehicle: v.id,
                kind: "speed_clamped".into(),
            });
        } else {
            v.x += v.speed * dt + 0.5 * v.accel * dt * dt;
            v.speed = v_next;
        }
    }
    world.t = t_next;
}

/// Control update followed by one integration step.
pub fn advance(world: &mut WorldState, cfg: &ScenarioConfig, dt: f64) {
    update_controls(world, cfg);
    step_mobility(world, dt);
}

/// Spacing error of a platoon vehicle w.r.t. its own desired gap.
pub fn spacing_error(world: &WorldState, id: VehicleId, cfg: &PlatoonConfig) -> Option<f64> {
    let v = &world.vehicles[id];
    let tg = match v.role {
        Role::PlatoonLeader => cfg.leader_time_gap,
        Role::PlatoonMember => cfg.time_gap,
        _ => return None,
    };
    Some(world.gap_ahead(id)? - (cfg.standstill_gap + tg * v.speed))
}
