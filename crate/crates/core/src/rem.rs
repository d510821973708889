//! Radio environment map built from drive-test measurements.
//!
//! The map is one-dimensional along the measured route: each TV channel is
//! split into blocks of consecutive measurement locations, each block gets a
//! first-order least-squares fit in the dB domain, and the residual standard
//! deviation is kept as the local shadowing estimate. Protected DTT receivers
//! are stored next to the segments with their own per-channel power.

use std::collections::BTreeMap;
use std::io::{BufRead, Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::RemError;
use crate::units::{dbm_to_mw, mw_to_dbm, uhf_channel_center_mhz};

pub const REM_SCHEMA_VERSION: u64 = 1;

/// Samples closer than this on the same channel are treated as duplicates.
pub const DUPLICATE_TOLERANCE_M: f64 = 0.1;

/// Default number of measurement locations per fitted segment.
pub const DEFAULT_SEGMENT_LEN: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSample {
    pub route_distance: f64,
    pub channel_id: u32,
    pub rx_power_dbm: f64,
    pub position: Option<(f64, f64)>,
    pub timestamp: Option<f64>,
}

impl MeasurementSample {
    pub fn new(route_distance: f64, channel_id: u32, rx_power_dbm: f64) -> Self {
        Self {
            route_distance,
            channel_id,
            rx_power_dbm,
            position: None,
            timestamp: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemSegment {
    pub channel_id: u32,
    pub d_start: f64,
    pub d_end: f64,
    /// dB per metre.
    pub slope: f64,
    /// dBm at `d_start`.
    pub intercept: f64,
    /// Residual standard deviation, dB.
    pub sigma: f64,
}

impl RemSegment {
    pub fn eval(&self, route_distance: f64) -> f64 {
        self.intercept + self.slope * (route_distance - self.d_start)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DttChannel {
    pub channel_id: u32,
    pub center_mhz: f64,
}

impl DttChannel {
    pub fn uhf(channel_id: u32) -> Self {
        Self {
            channel_id,
            center_mhz: uhf_channel_center_mhz(channel_id),
        }
    }
}

/// Location of a DTT receiver next to the motorway.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DttReceiverSite {
    pub id: u32,
    pub longitudinal_position: f64,
    pub distance_to_motorway: f64,
    pub group: u32,
}

/// The ten receivers of the measured scenario.
pub fn reference_receivers() -> Vec<DttReceiverSite> {
    [
        (1, 240.0, 120.0, 1),
        (2, 4520.0, 164.0, 3),
        (3, 4320.0, 244.0, 3),
        (4, 320.0, 45.0, 1),
        (5, 1687.0, 80.0, 2),
        (6, 4112.0, 304.0, 3),
        (7, 632.0, 140.0, 1),
        (8, 485.0, 270.0, 1),
        (9, 1463.0, 154.0, 2),
        (10, 2087.0, 127.0, 2),
    ]
    .into_iter()
    .map(|(id, x, d, g)| DttReceiverSite {
        id,
        longitudinal_position: x,
        distance_to_motorway: d,
        group: g,
    })
    .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DttReceiverEntry {
    pub id: u32,
    pub longitudinal_position: f64,
    pub distance_to_motorway: f64,
    pub group: u32,
    /// Received DTT power per channel id, dBm.
    pub power_dbm: BTreeMap<u32, f64>,
}

impl DttReceiverEntry {
    pub fn power(&self, channel_id: u32) -> Result<f64, RemError> {
        self.power_dbm
            .get(&channel_id)
            .copied()
            .ok_or(RemError::MissingReceiverPower(self.id, channel_id))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RemDatabase {
    pub segments: BTreeMap<u32, Vec<RemSegment>>,
    pub dtt_receivers: Vec<DttReceiverEntry>,
    pub dtt_channels: Vec<DttChannel>,
}

#[derive(Serialize, Deserialize)]
struct RemFile {
    version: u64,
    segments: BTreeMap<u32, Vec<RemSegment>>,
    dtt_receivers: Vec<DttReceiverEntry>,
    dtt_channels: Vec<DttChannel>,
}

impl RemDatabase {
    /// Builds a database from per-channel measurement lists: fills gaps,
    /// fits segments and registers each receiver with the map's mean power
    /// at its longitudinal position.
    pub fn build(
        samples: &BTreeMap<u32, Vec<MeasurementSample>>,
        gaps: GapPolicy,
        segment_len: usize,
        receivers: &[DttReceiverSite],
    ) -> Result<Self, RemError> {
        let mut db = RemDatabase::default();
        for (&channel, list) in samples {
            let filled = interpolate_gaps(list, gaps)?;
            db.segments.insert(channel, fit_segments(&filled, segment_len)?);
            db.dtt_channels.push(DttChannel::uhf(channel));
        }
        db.register_receivers(receivers)?;
        Ok(db)
    }

    /// Replaces the receiver registry, taking each receiver's power from the
    /// route model at its longitudinal position.
    pub fn register_receivers(&mut self, receivers: &[DttReceiverSite]) -> Result<(), RemError> {
        let mut entries = Vec::with_capacity(receivers.len());
        for site in receivers {
            let mut power_dbm = BTreeMap::new();
            for ch in &self.dtt_channels {
                let (mean, _) = self.query_power(ch.channel_id, site.longitudinal_position)?;
                power_dbm.insert(ch.channel_id, mean);
            }
            entries.push(DttReceiverEntry {
                id: site.id,
                longitudinal_position: site.longitudinal_position,
                distance_to_motorway: site.distance_to_motorway,
                group: site.group,
                power_dbm,
            });
        }
        self.dtt_receivers = entries;
        Ok(())
    }

    pub fn channel(&self, channel_id: u32) -> Option<&DttChannel> {
        self.dtt_channels.iter().find(|c| c.channel_id == channel_id)
    }

    pub fn receiver(&self, id: u32) -> Option<&DttReceiverEntry> {
        self.dtt_receivers.iter().find(|r| r.id == id)
    }

    /// Covered route range of one channel.
    pub fn coverage(&self, channel_id: u32) -> Result<(f64, f64), RemError> {
        let segs = self
            .segments
            .get(&channel_id)
            .filter(|s| !s.is_empty())
            .ok_or(RemError::UnknownChannel(channel_id))?;
        Ok((segs[0].d_start, segs[segs.len() - 1].d_end))
    }

    /// Range covered by every channel of the map.
    pub fn common_coverage(&self) -> Option<(f64, f64)> {
        let mut out: Option<(f64, f64)> = None;
        for ch in self.segments.keys() {
            let (a, b) = self.coverage(*ch).ok()?;
            out = Some(match out {
                None => (a, b),
                Some((lo, hi)) => (lo.max(a), hi.min(b)),
            });
        }
        out
    }

    /// Mean received power (dBm) and shadowing deviation (dB) at a route
    /// distance. Segments own the half-open interval `[d_start, d_end)`,
    /// except the last one, which also owns its end point.
    pub fn query_power(&self, channel_id: u32, route_distance: f64) -> Result<(f64, f64), RemError> {
        let segs = self
            .segments
            .get(&channel_id)
            .filter(|s| !s.is_empty())
            .ok_or(RemError::UnknownChannel(channel_id))?;
        let start = segs[0].d_start;
        let end = segs[segs.len() - 1].d_end;
        if !(route_distance >= start && route_distance <= end) {
            return Err(RemError::Coverage {
                channel: channel_id,
                distance: route_distance,
                start,
                end,
            });
        }
        // first segment whose start is beyond the query, minus one
        let idx = segs.partition_point(|s| s.d_start <= route_distance) - 1;
        let seg = &segs[idx];
        Ok((seg.eval(route_distance), seg.sigma))
    }

    pub fn save<W: Write>(&self, writer: W) -> Result<(), RemError> {
        let file = RemFile {
            version: REM_SCHEMA_VERSION,
            segments: self.segments.clone(),
            dtt_receivers: self.dtt_receivers.clone(),
            dtt_channels: self.dtt_channels.clone(),
        };
        serde_json::to_writer_pretty(writer, &file)?;
        Ok(())
    }

    pub fn load<R: Read>(mut reader: R) -> Result<Self, RemError> {
        let mut text = String::new();
        reader.read_to_string(&mut text)?;
        let value: serde_json::Value = serde_json::from_str(&text)?;
        let found = value.get("version").and_then(|v| v.as_u64()).unwrap_or(0);
        if found != REM_SCHEMA_VERSION {
            return Err(RemError::Version {
                found,
                expected: REM_SCHEMA_VERSION,
            });
        }
        let file: RemFile = serde_json::from_value(value)?;
        Ok(RemDatabase {
            segments: file.segments,
            dtt_receivers: file.dtt_receivers,
            dtt_channels: file.dtt_channels,
        })
    }

    pub fn save_path(&self, path: impl AsRef<std::path::Path>) -> Result<(), RemError> {
        let f = std::fs::File::create(path)?;
        self.save(std::io::BufWriter::new(f))
    }

    pub fn load_path(path: impl AsRef<std::path::Path>) -> Result<Self, RemError> {
        Self::load(std::fs::File::open(path)?)
    }
}

/// Parses a measurement CSV (`route_distance_m,channel_id,rx_power_dbm[,lat,lon,timestamp_s]`,
/// `#` comments allowed) into per-channel lists sorted by route distance,
/// with duplicates merged.
pub fn ingest_samples<R: BufRead>(reader: R) -> Result<BTreeMap<u32, Vec<MeasurementSample>>, RemError> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let headers = rdr
        .headers()
        .map_err(|e| RemError::Parse {
            line: 1,
            msg: e.to_string(),
        })?
        .clone();
    let expected = ["route_distance_m", "channel_id", "rx_power_dbm"];
    if headers.len() < 3 || headers.iter().take(3).ne(expected.iter().copied()) {
        return Err(RemError::Parse {
            line: headers.position().map(|p| p.line()).unwrap_or(1),
            msg: format!("expected header starting with {}", expected.join(",")),
        });
    }

    let mut raw: Vec<MeasurementSample> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| RemError::Parse {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            msg: e.to_string(),
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        raw.push(parse_record(&rec, line)?);
    }
    if raw.is_empty() {
        return Err(RemError::EmptyInput);
    }

    let mut by_channel: BTreeMap<u32, Vec<MeasurementSample>> = BTreeMap::new();
    for s in raw {
        by_channel.entry(s.channel_id).or_default().push(s);
    }
    for list in by_channel.values_mut() {
        list.sort_by(|a, b| a.route_distance.total_cmp(&b.route_distance));
        *list = merge_duplicates(std::mem::take(list));
    }
    Ok(by_channel)
}

fn parse_record(rec: &csv::StringRecord, line: u64) -> Result<MeasurementSample, RemError> {
    let err = |msg: String| RemError::Parse { line, msg };
    if rec.len() != 3 && rec.len() != 6 {
        return Err(err(format!("expected 3 or 6 fields, found {}", rec.len())));
    }
    let finite = |name: &str, s: &str| -> Result<f64, RemError> {
        let v: f64 = s.parse().map_err(|_| err(format!("{name}: cannot parse {s:?}")))?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(err(format!("{name}: non-finite value {s:?}")))
        }
    };
    let route_distance = finite("route_distance_m", &rec[0])?;
    if route_distance < 0.0 {
        return Err(err(format!("route_distance_m must be non-negative, got {route_distance}")));
    }
    let channel_id: u32 = rec[1]
        .parse()
        .map_err(|_| err(format!("channel_id: cannot parse {:?}", &rec[1])))?;
    let rx_power_dbm = finite("rx_power_dbm", &rec[2])?;
    let (position, timestamp) = if rec.len() == 6 {
        let opt = |name: &str, s: &str| -> Result<Option<f64>, RemError> {
            if s.is_empty() {
                Ok(None)
            } else {
                finite(name, s).map(Some)
            }
        };
        let lat = opt("lat", &rec[3])?;
        let lon = opt("lon", &rec[4])?;
        (lat.zip(lon), opt("timestamp_s", &rec[5])?)
    } else {
        (None, None)
    };
    Ok(MeasurementSample {
        route_distance,
        channel_id,
        rx_power_dbm,
        position,
        timestamp,
    })
}

/// Averages runs of samples within [`DUPLICATE_TOLERANCE_M`] of the run's
/// first sample. Power is averaged in milliwatts. Input must be sorted.
fn merge_duplicates(sorted: Vec<MeasurementSample>) -> Vec<MeasurementSample> {
    let mut out: Vec<MeasurementSample> = Vec::with_capacity(sorted.len());
    let mut i = 0;
    while i < sorted.len() {
        let anchor = sorted[i].route_distance;
        let mut j = i + 1;
        while j < sorted.len() && sorted[j].route_distance - anchor <= DUPLICATE_TOLERANCE_M {
            j += 1;
        }
        if j - i == 1 {
            out.push(sorted[i].clone());
        } else {
            let group = &sorted[i..j];
            let n = group.len() as f64;
            let mw = group.iter().map(|s| dbm_to_mw(s.rx_power_dbm)).sum::<f64>() / n;
            let d = group.iter().map(|s| s.route_distance).sum::<f64>() / n;
            out.push(MeasurementSample {
                route_distance: d,
                channel_id: group[0].channel_id,
                rx_power_dbm: mw_to_dbm(mw),
                position: group[0].position,
                timestamp: group[0].timestamp,
            });
        }
        i = j;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapPolicy {
    /// Expected distance between consecutive locations. `None` uses the
    /// median spacing of the input.
    pub nominal_spacing: Option<f64>,
    /// Largest gap that may be bridged by interpolation.
    pub max_gap: f64,
}

impl Default for GapPolicy {
    fn default() -> Self {
        Self {
            nominal_spacing: None,
            max_gap: 200.0,
        }
    }
}

/// Fills spacing gaps with points linearly interpolated in dB.
///
/// A gap of at least 1.5 nominal spacings receives `round(gap / spacing) - 1`
/// evenly placed points; original samples are kept untouched.
pub fn interpolate_gaps(samples: &[MeasurementSample], policy: GapPolicy) -> Result<Vec<MeasurementSample>, RemError> {
    if samples.len() < 2 {
        return Err(RemError::InsufficientData {
            needed: 2,
            got: samples.len(),
        });
    }
    let spacing = match policy.nominal_spacing {
        Some(s) => s,
        None => {
            let mut diffs: Vec<f64> = samples
                .windows(2)
                .map(|w| w[1].route_distance - w[0].route_distance)
                .collect();
            diffs.sort_by(f64::total_cmp);
            diffs[diffs.len() / 2]
        }
    };
    let mut out = Vec::with_capacity(samples.len());
    for w in samples.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        out.push(a.clone());
        let gap = b.route_distance - a.route_distance;
        if gap > policy.max_gap {
            return Err(RemError::GapTooLarge {
                at: a.route_distance,
                gap,
                max_gap: policy.max_gap,
            });
        }
        if spacing > 0.0 && gap >= 1.5 * spacing {
            let pieces = (gap / spacing).round() as usize;
            for k in 1..pieces {
                let frac = k as f64 / pieces as f64;
                out.push(MeasurementSample {
                    route_distance: a.route_distance + frac * gap,
                    channel_id: a.channel_id,
                    rx_power_dbm: a.rx_power_dbm + frac * (b.rx_power_dbm - a.rx_power_dbm),
                    position: None,
                    timestamp: None,
                });
            }
        }
    }
    out.push(samples[samples.len() - 1].clone());
    Ok(out)
}

/// Least-squares line through `(x, y)` pairs, returned as
/// `(slope, intercept_at_x0, residual_std)` where `x0` is the first abscissa.
/// The residual deviation divides by the number of points.
pub fn fit_line(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let x0 = xs[0];
    let mx = xs.iter().map(|x| x - x0).sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let dx = x - x0 - mx;
        sxx += dx * dx;
        sxy += dx * (y - my);
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let sse: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let r = y - (intercept + slope * (x - x0));
            r * r
        })
        .sum();
    (slope, intercept, (sse / n).sqrt())
}

/// Fits one first-order segment per block of `segment_len` consecutive
/// samples. A trailing block of at least two samples gets its own segment;
/// a single leftover sample is folded into the previous block.
pub fn fit_segments(samples: &[MeasurementSample], segment_len: usize) -> Result<Vec<RemSegment>, RemError> {
    if samples.len() < 2 {
        return Err(RemError::InsufficientData {
            needed: 2,
            got: samples.len(),
        });
    }
    let segment_len = segment_len.max(2);
    let mut bounds: Vec<(usize, usize)> = Vec::new();
    let mut start = 0;
    while start < samples.len() {
        let end = (start + segment_len).min(samples.len());
        bounds.push((start, end));
        start = end;
    }
    if let Some(&(s, e)) = bounds.last() {
        if e - s < 2 && bounds.len() > 1 {
            bounds.pop();
            bounds.last_mut().unwrap().1 = e;
        }
    }

    let channel_id = samples[0].channel_id;
    let mut segs = Vec::with_capacity(bounds.len());
    for (k, &(s, e)) in bounds.iter().enumerate() {
        let block = &samples[s..e];
        let xs: Vec<f64> = block.iter().map(|m| m.route_distance).collect();
        let ys: Vec<f64> = block.iter().map(|m| m.rx_power_dbm).collect();
        let (slope, intercept, sigma) = fit_line(&xs, &ys);
        let d_end = match bounds.get(k + 1) {
            Some(&(next, _)) => samples[next].route_distance,
            None => xs[xs.len() - 1],
        };
        segs.push(RemSegment {
            channel_id,
            d_start: xs[0],
            d_end,
            slope,
            intercept,
            sigma,
        });
    }
    Ok(segs)
}
