//! DTT protection constraint and the per-platoon centre-frequency selection
//! strategies.

use serde::{Deserialize, Serialize};

use crate::error::AllocError;
use crate::interference::{min_pair_sinr, FrequencyAssignment, LinkSet, RadioContext};
use crate::radio::Position;
use crate::rem::RemDatabase;
use crate::scenario::{VehicleId, WorldState};
use crate::units::{db_to_lin, dbm_to_w};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtectionMode {
    /// Known receivers registered in the REM.
    Registry,
    /// A virtual receiver at a fixed distance from every transmitter, seeing
    /// the DTT power the REM predicts at the transmitter.
    WorstCase60m,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProtectionPolicy {
    pub gamma_dtt_dbm: f64,
    pub sir_min_db: f64,
    pub mode: ProtectionMode,
    /// The SIR budget is computed from the registered power lowered by this
    /// many REM shadowing deviations.
    pub shadow_margin_sigmas: f64,
    pub worst_case_distance_m: f64,
}

impl Default for ProtectionPolicy {
    fn default() -> Self {
        Self {
            gamma_dtt_dbm: -80.0,
            sir_min_db: 39.5,
            mode: ProtectionMode::Registry,
            shadow_margin_sigmas: 0.0,
            worst_case_distance_m: 60.0,
        }
    }
}

impl ProtectionPolicy {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.gamma_dtt_dbm.is_finite() && self.sir_min_db.is_finite()) {
            return Err("DTT protection thresholds must be finite".into());
        }
        if !(self.shadow_margin_sigmas >= 0.0) {
            return Err("shadowing margin must be non-negative".into());
        }
        if !(self.worst_case_distance_m > 0.0) {
            return Err("worst-case receiver distance must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    pub candidates_mhz: Vec<f64>,
    pub dtt_centers_mhz: Vec<f64>,
}

impl Default for FrequencyGrid {
    fn default() -> Self {
        Self::uniform(499.0, 513.0, 2.0)
    }
}

impl FrequencyGrid {
    /// `lo, lo + step, ...` up to and including `hi`, between the two
    /// occupied channels at 490 and 522 MHz.
    pub fn uniform(lo: f64, hi: f64, step: f64) -> Self {
        let n = ((hi - lo) / step + 1e-9).floor() as usize;
        Self {
            candidates_mhz: (0..=n).map(|i| lo + i as f64 * step).collect(),
            dtt_centers_mhz: vec![490.0, 522.0],
        }
    }

    pub fn validate(&self) -> Result<(), AllocError> {
        let c = &self.candidates_mhz;
        if c.is_empty() || c.windows(2).any(|w| w[1] <= w[0]) || self.dtt_centers_mhz.is_empty() {
            return Err(AllocError::InvalidGrid("grid must be non-empty and strictly increasing".into()));
        }
        let lo = self.dtt_centers_mhz.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.dtt_centers_mhz.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if c[0] <= lo || c[c.len() - 1] >= hi {
            return Err(AllocError::InvalidGrid(format!(
                "candidates must lie strictly between {lo} and {hi} MHz"
            )));
        }
        Ok(())
    }
}

/// One (receiver, DTT channel) pair that must be protected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtectedReceiver {
    /// `None` for the virtual worst-case receiver.
    pub receiver_id: Option<u32>,
    pub channel_id: u32,
    pub center_mhz: f64,
    pub position: Position,
    pub power_dbm: f64,
    /// DTT power the SIR budget is computed from.
    pub budget_power_dbm: f64,
    /// REM shadowing deviation at the receiver, dB.
    pub sigma_db: f64,
}

impl ProtectedReceiver {
    /// Largest admissible interference at this receiver, W.
    pub fn interference_budget_w(&self, sir_min_db: f64) -> f64 {
        dbm_to_w(self.budget_power_dbm) / db_to_lin(sir_min_db)
    }
}

pub fn protected_dtt_set(
    policy: &ProtectionPolicy,
    rem: &RemDatabase,
    world: &WorldState,
    tx: VehicleId,
) -> Result<Vec<ProtectedReceiver>, AllocError> {
    let mut out = Vec::new();
    match policy.mode {
        ProtectionMode::Registry => {
            if rem.dtt_receivers.is_empty() {
                return Err(AllocError::EmptyRegistry);
            }
            for r in &rem.dtt_receivers {
                for ch in &rem.dtt_channels {
                    let p = r.power(ch.channel_id)?;
                    if p > policy.gamma_dtt_dbm {
                        let (_, sigma) = rem.query_power(ch.channel_id, r.longitudinal_position)?;
                        out.push(ProtectedReceiver {
                            receiver_id: Some(r.id),
                            channel_id: ch.channel_id,
                            center_mhz: ch.center_mhz,
                            position: Position::new(world.route.x_of(r.longitudinal_position), -r.distance_to_motorway),
                            power_dbm: p,
                            budget_power_dbm: p - policy.shadow_margin_sigmas * sigma,
                            sigma_db: sigma,
                        });
                    }
                }
            }
        }
        ProtectionMode::WorstCase60m => {
            let v = &world.vehicles[tx];
            let d = world.route_distance(tx);
            for ch in &rem.dtt_channels {
                let (p, sigma) = rem.query_power(ch.channel_id, d)?;
                if p > policy.gamma_dtt_dbm {
                    out.push(ProtectedReceiver {
                        receiver_id: None,
                        channel_id: ch.channel_id,
                        center_mhz: ch.center_mhz,
                        position: Position::new(v.x, v.y - policy.worst_case_distance_m),
                        power_dbm: p,
                        budget_power_dbm: p - policy.shadow_margin_sigmas * sigma,
                        sigma_db: sigma,
                    });
                }
            }
        }
    }
    Ok(out)
}

/// Interference a vehicle transmitting at `f` produces at a DTT receiver,
/// with an extra linear channel factor (1 for the mean channel).
pub fn dtt_interference_w(ctx: &RadioContext, tx: Position, rx: &ProtectedReceiver, f: f64, fading: f64) -> f64 {
    let g = ctx.radio.dtt_pathloss.gain(tx.distance(&rx.position), f);
    dbm_to_w(ctx.radio.tx_power_dbm) * g * fading * ctx.acir.v_to_dtt.acir(rx.center_mhz - f, Some(rx.power_dbm))
}

fn constraint_holds(ctx: &RadioContext, policy: &ProtectionPolicy, tx: Position, set: &[ProtectedReceiver], f: f64) -> bool {
    set.iter()
        .all(|r| dtt_interference_w(ctx, tx, r, f, 1.0) < r.interference_budget_w(policy.sir_min_db))
}

pub fn dtt_constraint_ok(
    policy: &ProtectionPolicy,
    ctx: &RadioContext,
    world: &WorldState,
    tx: VehicleId,
    f: f64,
) -> Result<bool, AllocError> {
    let set = protected_dtt_set(policy, ctx.rem, world, tx)?;
    Ok(constraint_holds(ctx, policy, world.vehicles[tx].position(), &set, f))
}

/// Grid points at which every transmitter of the platoon satisfies the DTT
/// protection constraint.
pub fn feasible_frequencies(
    policy: &ProtectionPolicy,
    grid: &FrequencyGrid,
    ctx: &RadioContext,
    world: &WorldState,
    platoon: usize,
) -> Result<Vec<f64>, AllocError> {
    let members = &world.platoons[platoon].members;
    let mut sets = Vec::with_capacity(members.len());
    for &m in members {
        sets.push((world.vehicles[m].position(), protected_dtt_set(policy, ctx.rem, world, m)?));
    }
    Ok(grid
        .candidates_mhz
        .iter()
        .copied()
        .filter(|&f| sets.iter().all(|(pos, set)| constraint_holds(ctx, policy, *pos, set, f)))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    Exhaustive,
    MaxSep,
    DttOnly,
    /// Never uses white space; the reference for reception comparisons.
    CchOnly,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [Strategy::Exhaustive, Strategy::MaxSep, Strategy::DttOnly, Strategy::CchOnly];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Exhaustive => "exhaustive",
            Strategy::MaxSep => "max-sep",
            Strategy::DttOnly => "dtt-only",
            Strategy::CchOnly => "cch-only",
        }
    }
}

impl std::str::FromStr for Strategy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Strategy::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown strategy '{s}' (expected exhaustive, max-sep, dtt-only or cch-only)"))
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Inputs shared by all strategies at one reselection instant.
#[derive(Debug, Clone, Copy)]
pub struct Selection<'a> {
    pub grid: &'a FrequencyGrid,
    pub policy: &'a ProtectionPolicy,
    pub ctx: &'a RadioContext<'a>,
    pub links: &'a LinkSet,
    /// Exhaustive-search candidates within this many dB of the optimum
    /// count as ties, which go to the fewest frequency changes.
    pub tie_tolerance_db: f64,
}

impl Selection<'_> {
    pub fn feasible_sets(&self, world: &WorldState) -> Result<Vec<Vec<f64>>, AllocError> {
        (0..world.platoons.len())
            .map(|k| feasible_frequencies(self.policy, self.grid, self.ctx, world, k))
            .collect()
    }

    pub fn select(
        &self,
        strategy: Strategy,
        world: &WorldState,
        current: &FrequencyAssignment,
    ) -> Result<FrequencyAssignment, AllocError> {
        let k = world.platoons.len();
        if strategy == Strategy::CchOnly {
            return Ok(FrequencyAssignment(vec![None; k]));
        }
        let feasible = self.feasible_sets(world)?;
        Ok(match strategy {
            Strategy::Exhaustive => self.exhaustive(world, &feasible, current)?,
            Strategy::MaxSep => max_separation(self.grid, &feasible, current),
            Strategy::DttOnly => dtt_protect_only(&feasible, current),
            Strategy::CchOnly => unreachable!(),
        })
    }

    fn exhaustive(
        &self,
        world: &WorldState,
        feasible: &[Vec<f64>],
        current: &FrequencyAssignment,
    ) -> Result<FrequencyAssignment, AllocError> {
        let mut scored = Vec::new();
        for cand in product(feasible) {
            let value = match min_pair_sinr(world, self.ctx, self.links, &cand)? {
                Some((v, _)) => v,
                None => f64::INFINITY,
            };
            let changes = changes(&cand, current);
            scored.push((value, changes, cand));
        }
        let top = scored.iter().map(|c| c.0).fold(f64::NEG_INFINITY, f64::max);
        let floor = if top.is_finite() { top - self.tie_tolerance_db } else { top };
        let mut best: Option<(f64, usize, FrequencyAssignment)> = None;
        for (value, changes, cand) in scored.into_iter().filter(|c| c.0 >= floor) {
            let better = match &best {
                None => true,
                Some((bv, bc, _)) => changes < *bc || (changes == *bc && value > *bv),
            };
            if better {
                best = Some((value, changes, cand));
            }
        }
        Ok(best.expect("product is never empty").2)
    }

    /// Objective the exhaustive search maximises, for an arbitrary assignment.
    pub fn objective(&self, world: &WorldState, a: &FrequencyAssignment) -> Result<f64, AllocError> {
        Ok(min_pair_sinr(world, self.ctx, self.links, a)?.map_or(f64::INFINITY, |(v, _)| v))
    }
}

/// Every joint assignment over the per-platoon feasible sets, in
/// lexicographic order; platoons without a feasible frequency stay vacated.
fn product(feasible: &[Vec<f64>]) -> Vec<FrequencyAssignment> {
    let mut out = vec![Vec::with_capacity(feasible.len())];
    for set in feasible {
        if set.is_empty() {
            out.iter_mut().for_each(|a| a.push(None));
            continue;
        }
        out = out
            .into_iter()
            .flat_map(|a| {
                set.iter().map(move |f| {
                    let mut b = a.clone();
                    b.push(Some(*f));
                    b
                })
            })
            .collect();
    }
    out.into_iter().map(FrequencyAssignment).collect()
}

fn changes(a: &FrequencyAssignment, current: &FrequencyAssignment) -> usize {
    a.0.iter()
        .enumerate()
        .filter(|(k, f)| **f != current.0.get(*k).copied().flatten())
        .count()
}

/// Picks the candidate with the largest score; ties go to the fewest changes
/// and then to the lexicographically lowest frequencies.
fn argmax_by(cands: Vec<FrequencyAssignment>, current: &FrequencyAssignment, score: impl Fn(&FrequencyAssignment) -> f64) -> FrequencyAssignment {
    let mut best: Option<(f64, usize, FrequencyAssignment)> = None;
    for c in cands {
        let (s, ch) = (score(&c), changes(&c, current));
        if best.as_ref().is_none_or(|(bs, bc, _)| s > *bs || (s == *bs && ch < *bc)) {
            best = Some((s, ch, c));
        }
    }
    best.expect("product is never empty").2
}

pub fn max_separation(grid: &FrequencyGrid, feasible: &[Vec<f64>], current: &FrequencyAssignment) -> FrequencyAssignment {
    argmax_by(product(feasible), current, |a| {
        let fs: Vec<f64> = a.0.iter().flatten().copied().collect();
        match fs.len() {
            0 => 0.0,
            1 => grid.dtt_centers_mhz.iter().map(|c| (c - fs[0]).abs()).fold(f64::INFINITY, f64::min),
            _ => {
                let mut m = f64::INFINITY;
                for i in 0..fs.len() {
                    for j in i + 1..fs.len() {
                        m = m.min((fs[i] - fs[j]).abs());
                    }
                }
                m
            }
        }
    })
}

pub fn dtt_protect_only(feasible: &[Vec<f64>], current: &FrequencyAssignment) -> FrequencyAssignment {
    FrequencyAssignment(
        feasible
            .iter()
            .enumerate()
            .map(|(k, set)| {
                let first = *set.first()?;
                Some(match current.get(k) {
                    Some(cur) if set.contains(&cur) => cur,
                    Some(cur) => set.iter().copied().fold(first, |best, f| {
                        if (f - cur).abs() < (best - cur).abs() {
                            f
                        } else {
                            best
                        }
                    }),
                    None => first,
                })
            })
            .collect(),
    )
}

pub fn select_exhaustive(sel: &Selection, world: &WorldState, current: &FrequencyAssignment) -> Result<FrequencyAssignment, AllocError> {
    sel.select(Strategy::Exhaustive, world, current)
}

pub fn select_max_separation(sel: &Selection, world: &WorldState, current: &FrequencyAssignment) -> Result<FrequencyAssignment, AllocError> {
    sel.select(Strategy::MaxSep, world, current)
}

pub fn select_dtt_protect_only(sel: &Selection, world: &WorldState, current: &FrequencyAssignment) -> Result<FrequencyAssignment, AllocError> {
    sel.select(Strategy::DttOnly, world, current)
}

/// Number of reselection instants at which each platoon's channel changed,
/// counting moves onto and off the white-space band.
pub fn count_switches(history: &[FrequencyAssignment]) -> Vec<usize> {
    let k = history.iter().map(|a| a.0.len()).max().unwrap_or(0);
    let mut counts = vec![0; k];
    for w in history.windows(2) {
        for (p, c) in counts.iter_mut().enumerate() {
            if w[0].get(p) != w[1].get(p) {
                *c += 1;
            }
        }
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interference::tests::{flat_rem, small_world};
    use crate::interference::{sinr, InterferenceMode};
    use crate::radio::{AcirDirection, AcirSet, AcirTable, PathlossModel, RadioConfig};
    use crate::rem::DttReceiverEntry;
    use crate::units::w_to_dbm;
    use proptest::prelude::*;
    use super::Strategy;
    use std::collections::BTreeMap;

    fn with_receivers(mut rem: RemDatabase, rx: &[(u32, f64, f64, &[(u32, f64)])]) -> RemDatabase {
        rem.dtt_receivers = rx
            .iter()
            .map(|(id, x, d, p)| DttReceiverEntry {
                id: *id,
                longitudinal_position: *x,
                distance_to_motorway: *d,
                group: 1,
                power_dbm: p.iter().copied().collect::<BTreeMap<_, _>>(),
            })
            .collect();
        rem
    }

    #[test]
    fn protection_threshold_is_strict() {
        let w = small_world(1, 3);
        let rem = with_receivers(
            flat_rem(&[(23, -70.0)]),
            &[(1, 0.0, 100.0, &[(23, -78.0)]), (2, 0.0, 100.0, &[(23, -85.0)]), (3, 0.0, 100.0, &[(23, -80.0)])],
        );
        let set = protected_dtt_set(&ProtectionPolicy::default(), &rem, &w, 0).unwrap();
        let ids: Vec<Option<u32>> = set.iter().map(|r| r.receiver_id).collect();
        assert_eq!(ids, vec![Some(1)]);
        assert!(matches!(
            protected_dtt_set(&ProtectionPolicy::default(), &flat_rem(&[(23, -70.0)]), &w, 0),
            Err(AllocError::EmptyRegistry)
        ));
    }

    #[test]
    fn worst_case_receiver_follows_transmitter() {
        let w = small_world(1, 3);
        let policy = ProtectionPolicy {
            mode: ProtectionMode::WorstCase60m,
            ..ProtectionPolicy::default()
        };
        let rem = flat_rem(&[(23, -70.0), (27, -90.0)]);
        let tx = w.platoons[0].members[2];
        let set = protected_dtt_set(&policy, &rem, &w, tx).unwrap();
        assert_eq!(set.len(), 1);
        let v = &w.vehicles[tx];
        assert!((set[0].position.distance(&v.position()) - 60.0).abs() < 1e-9);
    }

    #[test]
    fn constraint_one_db_over_budget() {
        let w = small_world(1, 2);
        let radio = RadioConfig {
            dtt_pathloss: PathlossModel::log_distance(3.0),
            ..RadioConfig::default()
        };
        let acir = AcirSet::default();
        let tx = w.platoons[0].members[0];
        let v = &w.vehicles[tx];
        let f = 506.0;
        let p_dtt = -70.0;
        // choose the receiver distance so the interference is 1 dB above P/SIR
        let target_dbm = p_dtt - 39.5 + 1.0;
        let coupling = acir.v_to_dtt.acir(490.0 - f, Some(p_dtt));
        let g_needed = dbm_to_w(target_dbm) / (dbm_to_w(23.0) * coupling);
        let g1 = radio.dtt_pathloss.gain(1.0, f);
        let d = (g1 / g_needed).powf(1.0 / 3.0);
        let rem = with_receivers(flat_rem(&[(23, p_dtt)]), &[(1, v.x, d - v.y, &[(23, p_dtt)])]);
        let ctx = RadioContext::new(&radio, &acir, &rem, 0.2);
        let set = protected_dtt_set(&ProtectionPolicy::default(), &rem, &w, tx).unwrap();
        let i = dtt_interference_w(&ctx, v.position(), &set[0], f, 1.0);
        assert!((w_to_dbm(i) - target_dbm).abs() < 1e-9);
        assert!(!dtt_constraint_ok(&ProtectionPolicy::default(), &ctx, &w, tx, f).unwrap());
        let relaxed = ProtectionPolicy {
            sir_min_db: 38.0,
            ..ProtectionPolicy::default()
        };
        assert!(dtt_constraint_ok(&relaxed, &ctx, &w, tx, f).unwrap());
    }

    fn ctx_parts() -> (RadioConfig, AcirSet) {
        (RadioConfig::default(), AcirSet::default())
    }

    #[test]
    fn feasible_set_examples() {
        let w = small_world(1, 3);
        let (radio, acir) = ctx_parts();
        let grid = FrequencyGrid::default();
        let policy = ProtectionPolicy::default();

        let quiet = with_receivers(flat_rem(&[(23, -70.0)]), &[(1, 0.0, 100.0, &[(23, -90.0)])]);
        let ctx = RadioContext::new(&radio, &acir, &quiet, 0.2);
        assert_eq!(feasible_frequencies(&policy, &grid, &ctx, &w, 0).unwrap(), grid.candidates_mhz);

        let x0 = w.vehicles[w.platoons[0].leader()].x;
        let near = with_receivers(flat_rem(&[(23, -75.0)]), &[(1, x0, 150.0, &[(23, -75.0)])]);
        let unit = AcirSet {
            v_to_dtt: AcirTable::new(AcirDirection::VToDtt, vec![0.0], vec![1.0], None, 1.0, -45.0).unwrap(),
            ..AcirSet::default()
        };
        let ctx = RadioContext::new(&radio, &unit, &near, 0.2);
        assert!(feasible_frequencies(&policy, &grid, &ctx, &w, 0).unwrap().is_empty());

        // a receiver that only some grid points can protect: the feasible set
        // is the suffix farthest from 490 MHz
        let far = with_receivers(flat_rem(&[(23, -75.0)]), &[(1, x0 + 300.0, 150.0, &[(23, -75.0)])]);
        let ctx = RadioContext::new(&radio, &acir, &far, 0.2);
        let fs = feasible_frequencies(&policy, &grid, &ctx, &w, 0).unwrap();
        assert!(!fs.is_empty() && fs.len() < grid.candidates_mhz.len(), "{fs:?}");
        let n = grid.candidates_mhz.len();
        assert_eq!(fs, grid.candidates_mhz[n - fs.len()..].to_vec());
    }

    fn selection<'a>(grid: &'a FrequencyGrid, policy: &'a ProtectionPolicy, ctx: &'a RadioContext<'a>, links: &'a LinkSet) -> Selection<'a> {
        Selection {
            grid,
            policy,
            ctx,
            links,
            tie_tolerance_db: 0.0,
        }
    }

    fn no_dtt_rem() -> RemDatabase {
        with_receivers(flat_rem(&[]), &[(1, 0.0, 100.0, &[])])
    }

    #[test]
    fn exhaustive_flat_objective_keeps_incumbent() {
        let w = small_world(1, 3);
        // pin the carrier so the objective does not depend on frequency
        let radio = RadioConfig {
            pathloss: PathlossModel::default().pinned(506.0),
            ..RadioConfig::default()
        };
        let acir = AcirSet::default();
        let rem = no_dtt_rem();
        let ctx = RadioContext::new(&radio, &acir, &rem, 0.2);
        let links = LinkSet::from_world(&w);
        let (grid, policy) = (FrequencyGrid::default(), ProtectionPolicy::default());
        let sel = selection(&grid, &policy, &ctx, &links);
        let kept = select_exhaustive(&sel, &w, &FrequencyAssignment::all(&[507.0])).unwrap();
        assert_eq!(kept, FrequencyAssignment::all(&[507.0]));
        let fresh = select_exhaustive(&sel, &w, &FrequencyAssignment(vec![None])).unwrap();
        assert_eq!(fresh, FrequencyAssignment::all(&[499.0]));
        let off_grid = select_exhaustive(&sel, &w, &FrequencyAssignment::all(&[600.0])).unwrap();
        assert_eq!(off_grid, FrequencyAssignment::all(&[499.0]));
    }

    #[test]
    fn exhaustive_symmetric_pair_uses_endpoints() {
        let mut w = small_world(2, 3);
        // bring the platoons side by side so they interfere
        let radio = RadioConfig {
            pathloss: PathlossModel::default().pinned(506.0),
            cs_threshold_dbm: 100.0,
            ..RadioConfig::default()
        };
        let dx = w.vehicles[w.platoons[0].leader()].x - w.vehicles[w.platoons[1].leader()].x;
        for m in w.platoons[1].members.clone() {
            w.vehicles[m].x += dx;
        }
        let acir = AcirSet::default();
        let rem = no_dtt_rem();
        let ctx = RadioContext::new(&radio, &acir, &rem, 0.2);
        let links = LinkSet::from_world(&w);
        let (grid, policy) = (FrequencyGrid::default(), ProtectionPolicy::default());
        let sel = selection(&grid, &policy, &ctx, &links);
        let a = select_exhaustive(&sel, &w, &FrequencyAssignment(vec![None, None])).unwrap();
        assert_eq!(a, FrequencyAssignment::all(&[499.0, 513.0]));
        assert_eq!(oracle(&sel, &w).0, sel.objective(&w, &a).unwrap());
    }

    #[test]
    fn max_separation_examples() {
        let grid = FrequencyGrid::default();
        let full = grid.candidates_mhz.clone();
        let none = FrequencyAssignment(vec![None, None]);
        assert_eq!(max_separation(&grid, &[full.clone(), full.clone()], &none), FrequencyAssignment::all(&[499.0, 513.0]));
        assert_eq!(
            max_separation(&grid, &[vec![499.0, 501.0], vec![511.0, 513.0]], &none),
            FrequencyAssignment::all(&[499.0, 513.0])
        );
        let fine = FrequencyGrid::uniform(499.0, 513.0, 1.0);
        let one = max_separation(&fine, &[fine.candidates_mhz.clone()], &FrequencyAssignment(vec![None]));
        assert_eq!(one, FrequencyAssignment::all(&[506.0]));
        // on the 2 MHz grid 505 and 507 are equally far from both channels
        let tie = max_separation(&grid, &[full.clone()], &FrequencyAssignment(vec![None]));
        assert_eq!(tie, FrequencyAssignment::all(&[505.0]));
        let tie = max_separation(&grid, &[full], &FrequencyAssignment::all(&[507.0]));
        assert_eq!(tie, FrequencyAssignment::all(&[507.0]));
    }

    #[test]
    fn dtt_only_examples() {
        let cur = FrequencyAssignment::all(&[503.0, 506.0]);
        let a = dtt_protect_only(&[vec![501.0, 503.0], vec![505.0, 507.0]], &cur);
        assert_eq!(a, FrequencyAssignment::all(&[503.0, 505.0]));
        let shared = dtt_protect_only(&[vec![509.0], vec![509.0]], &FrequencyAssignment(vec![None, None]));
        assert_eq!(shared, FrequencyAssignment::all(&[509.0, 509.0]));
        let vacated = dtt_protect_only(&[vec![], vec![509.0]], &cur);
        assert_eq!(vacated, FrequencyAssignment(vec![None, Some(509.0)]));
    }

    #[test]
    fn switch_counting() {
        let c = vec![FrequencyAssignment::all(&[501.0, 509.0]); 5];
        assert_eq!(count_switches(&c), vec![0, 0]);
        let alt: Vec<FrequencyAssignment> =
            (0..10).map(|i| FrequencyAssignment::all(&[if i % 2 == 0 { 501.0 } else { 503.0 }, 509.0])).collect();
        assert_eq!(count_switches(&alt), vec![9, 0]);
        let vac = vec![
            FrequencyAssignment::all(&[501.0]),
            FrequencyAssignment(vec![None]),
            FrequencyAssignment::all(&[501.0]),
        ];
        assert_eq!(count_switches(&vac), vec![2]);
    }

    #[test]
    fn strategy_names_round_trip() {
        for s in Strategy::ALL {
            assert_eq!(s.name().parse::<Strategy>().unwrap(), s);
        }
        assert!("greedy".parse::<Strategy>().is_err());
    }

    /// Independent enumeration: nested loops over the raw grid, own
    /// feasibility check and own min over links.
    fn oracle(sel: &Selection, w: &WorldState) -> (f64, Vec<Option<f64>>) {
        let grid = &sel.grid.candidates_mhz;
        let ok = |k: usize, f: f64| {
            w.platoons[k]
                .members
                .iter()
                .all(|m| dtt_constraint_ok(sel.policy, sel.ctx, w, *m, f).unwrap())
        };
        let opts: Vec<Vec<Option<f64>>> = (0..2)
            .map(|k| {
                let v: Vec<Option<f64>> = grid.iter().filter(|f| ok(k, **f)).map(|f| Some(*f)).collect();
                if v.is_empty() {
                    vec![None]
                } else {
                    v
                }
            })
            .collect();
        let mut best = (f64::NEG_INFINITY, vec![]);
        for a in &opts[0] {
            for b in &opts[1] {
                let asg = FrequencyAssignment(vec![*a, *b]);
                let mut m = f64::INFINITY;
                for l in &sel.links.links {
                    if asg.get(l.platoon).is_some() {
                        m = m.min(sinr(w, sel.ctx, l.rx, l.tx, &asg).unwrap());
                    }
                }
                if m > best.0 {
                    best = (m, vec![*a, *b]);
                }
            }
        }
        best
    }

    fn random_instance(xs: &[f64], dtt: f64) -> (WorldState, RemDatabase) {
        let mut w = small_world(2, 3);
        for (v, x) in w.vehicles.iter_mut().filter(|v| v.is_platoon()).zip(xs) {
            v.x = *x;
        }
        let rem = with_receivers(
            flat_rem(&[(23, dtt), (27, dtt + 4.0)]),
            &[(1, 300.0, 60.0, &[(23, dtt), (27, dtt + 4.0)]), (2, 1500.0, 200.0, &[(23, dtt - 3.0), (27, dtt + 1.0)])],
        );
        (w, rem)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn exhaustive_matches_oracle_and_dominates(
            xs in prop::collection::vec(-1500.0f64..3000.0, 6),
            dtt in -85.0f64..-60.0,
        ) {
            let (w, rem) = random_instance(&xs, dtt);
            let (radio, acir) = ctx_parts();
            let ctx = RadioContext { mode: InterferenceMode::HiddenOnly, ..RadioContext::new(&radio, &acir, &rem, 0.2) };
            let links = LinkSet::from_world(&w);
            let grid = FrequencyGrid::uniform(499.0, 513.0, 2.0);
            let policy = ProtectionPolicy::default();
            let sel = selection(&grid, &policy, &ctx, &links);
            let cur = FrequencyAssignment(vec![None, None]);
            let ex = select_exhaustive(&sel, &w, &cur).unwrap();
            let value = sel.objective(&w, &ex).unwrap();
            let (want, _) = oracle(&sel, &w);
            prop_assert_eq!(value, want);
            let feasible = sel.feasible_sets(&w).unwrap();
            for s in [Strategy::MaxSep, Strategy::DttOnly] {
                let a = sel.select(s, &w, &cur).unwrap();
                prop_assert!(value >= sel.objective(&w, &a).unwrap());
                for (k, set) in feasible.iter().enumerate() {
                    if let Some(f) = a.get(k) {
                        prop_assert!(set.contains(&f));
                        for m in &w.platoons[k].members {
                            prop_assert!(dtt_constraint_ok(&policy, &ctx, &w, *m, f).unwrap());
                        }
                    } else {
                        prop_assert!(set.is_empty());
                    }
                }
            }
            prop_assert_eq!(select_exhaustive(&sel, &w, &cur).unwrap(), ex);
        }

        #[test]
        fn tighter_sir_never_enlarges_feasible_set(
            xs in prop::collection::vec(-1500.0f64..3000.0, 6),
            dtt in -85.0f64..-60.0,
            extra in 0.0f64..20.0,
        ) {
            let (w, rem) = random_instance(&xs, dtt);
            let (radio, acir) = ctx_parts();
            let ctx = RadioContext::new(&radio, &acir, &rem, 0.2);
            let grid = FrequencyGrid::default();
            let p = ProtectionPolicy::default();
            let strict = ProtectionPolicy { sir_min_db: p.sir_min_db + extra, ..p.clone() };
            for k in 0..2 {
                let loose = feasible_frequencies(&p, &grid, &ctx, &w, k).unwrap();
                let tight = feasible_frequencies(&strict, &grid, &ctx, &w, k).unwrap();
                prop_assert!(tight.iter().all(|f| loose.contains(f)));
            }
        }

        #[test]
        fn larger_offset_never_breaks_protection(
            x in -1000.0f64..1000.0,
            dtt in -79.0f64..-40.0,
        ) {
            let mut w = small_world(1, 2);
            let tx = w.platoons[0].leader();
            w.vehicles[tx].x = x;
            let rem = with_receivers(flat_rem(&[(23, dtt)]), &[(1, 0.0, 80.0, &[(23, dtt)])]);
            let (radio, acir) = ctx_parts();
            let ctx = RadioContext::new(&radio, &acir, &rem, 0.2);
            let policy = ProtectionPolicy::default();
            let grid = FrequencyGrid::uniform(491.0, 521.0, 0.5);
            let ok: Vec<bool> = grid.candidates_mhz.iter().map(|f| dtt_constraint_ok(&policy, &ctx, &w, tx, *f).unwrap()).collect();
            // feasibility is monotone in the offset from 490 MHz
            prop_assert!(ok.windows(2).all(|p| !p[0] || p[1]));
        }
    }
}
