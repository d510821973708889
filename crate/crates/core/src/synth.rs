//! Synthetic drive-test campaign: two DTT channels measured along a route,
//! recorded in bunches with short gaps between them.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::RemError;
use crate::rem::MeasurementSample;

/// Mean received power along the route, linear between knots `(m, dBm)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelProfile {
    pub channel_id: u32,
    pub knots: Vec<(f64, f64)>,
}

impl ChannelProfile {
    pub fn mean_at(&self, d: f64) -> f64 {
        let k = &self.knots;
        if d <= k[0].0 {
            return k[0].1;
        }
        for w in k.windows(2) {
            if d <= w[1].0 {
                let t = (d - w[0].0) / (w[1].0 - w[0].0);
                return w[0].1 + t * (w[1].1 - w[0].1);
            }
        }
        k[k.len() - 1].1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CampaignConfig {
    pub route_length_m: f64,
    pub spacing_m: f64,
    /// Locations recorded back to back before a saving pause.
    pub bunch_len: usize,
    /// Locations skipped during each pause.
    pub gap_len: usize,
    /// Shadowing deviation drawn uniformly per stretch, dB.
    pub sigma_range_db: (f64, f64),
    pub stretch_m: f64,
    pub position_jitter_m: f64,
    pub channels: Vec<ChannelProfile>,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        Self {
            route_length_m: 8000.0,
            spacing_m: 10.0,
            bunch_len: 50,
            gap_len: 1,
            sigma_range_db: (2.5, 4.0),
            stretch_m: 200.0,
            position_jitter_m: 1.0,
            channels: vec![
                ChannelProfile {
                    channel_id: 23,
                    knots: vec![
                        (0.0, -73.0),
                        (700.0, -75.0),
                        (1300.0, -81.0),
                        (2300.0, -83.0),
                        (3200.0, -79.0),
                        (4000.0, -75.0),
                        (4700.0, -76.0),
                        (5500.0, -82.0),
                        (8000.0, -86.0),
                    ],
                },
                ChannelProfile {
                    channel_id: 27,
                    knots: vec![
                        (0.0, -67.0),
                        (800.0, -69.0),
                        (1500.0, -72.0),
                        (2500.0, -74.0),
                        (3500.0, -70.0),
                        (4300.0, -68.0),
                        (5200.0, -73.0),
                        (8000.0, -77.0),
                    ],
                },
            ],
        }
    }
}

/// Draws a campaign. Both channels are measured at the same locations, as a
/// single receiver sweeping the band would.
pub fn generate_campaign(cfg: &CampaignConfig, seed: u64) -> Vec<MeasurementSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = (cfg.route_length_m / cfg.spacing_m).floor() as usize + 1;
    let period = cfg.bunch_len + cfg.gap_len;
    let mut locations = Vec::new();
    for i in 0..n {
        if i % period >= cfg.bunch_len {
            continue;
        }
        let jitter = if i == 0 || i == n - 1 {
            0.0
        } else {
            rng.random_range(-cfg.position_jitter_m..=cfg.position_jitter_m)
        };
        locations.push(i as f64 * cfg.spacing_m + jitter);
    }

    let stretches = (cfg.route_length_m / cfg.stretch_m).ceil() as usize + 1;
    let mut out = Vec::with_capacity(locations.len() * cfg.channels.len());
    for ch in &cfg.channels {
        let sigmas: Vec<f64> = (0..stretches)
            .map(|_| rng.random_range(cfg.sigma_range_db.0..=cfg.sigma_range_db.1))
            .collect();
        for &d in &locations {
            let sigma = sigmas[(d / cfg.stretch_m) as usize];
            let noise = Normal::new(0.0, sigma).expect("finite sigma").sample(&mut rng);
            out.push(MeasurementSample::new(d, ch.channel_id, ch.mean_at(d) + noise));
        }
    }
    out
}

pub fn write_campaign_csv<W: Write>(samples: &[MeasurementSample], writer: W) -> Result<(), RemError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["route_distance_m", "channel_id", "rx_power_dbm"])
        .map_err(csv_err)?;
    for s in samples {
        w.write_record([
            format!("{:.2}", s.route_distance),
            s.channel_id.to_string(),
            format!("{:.3}", s.rx_power_dbm),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> RemError {
    RemError::Io(std::io::Error::other(e))
}

/// Exact line samples, one channel, for round-trip checks.
pub fn line_campaign(channel_id: u32, n: usize, spacing: f64, intercept: f64, slope: f64) -> Vec<MeasurementSample> {
    (0..n)
        .map(|i| {
            let d = i as f64 * spacing;
            MeasurementSample::new(d, channel_id, intercept + slope * d)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rem::{ingest_samples, reference_receivers, GapPolicy, RemDatabase, DEFAULT_SEGMENT_LEN};

    #[test]
    fn profile_interpolates() {
        let p = ChannelProfile {
            channel_id: 1,
            knots: vec![(0.0, -70.0), (100.0, -80.0)],
        };
        assert_eq!(p.mean_at(-5.0), -70.0);
        assert_eq!(p.mean_at(50.0), -75.0);
        assert_eq!(p.mean_at(500.0), -80.0);
    }

    #[test]
    fn campaign_round_trips_through_csv_and_fits() {
        let cfg = CampaignConfig::default();
        let s = generate_campaign(&cfg, 11);
        assert_eq!(s, generate_campaign(&cfg, 11));
        let mut buf = Vec::new();
        write_campaign_csv(&s, &mut buf).unwrap();
        let by_ch = ingest_samples(&buf[..]).unwrap();
        assert_eq!(by_ch.len(), 2);
        let db = RemDatabase::build(&by_ch, GapPolicy::default(), DEFAULT_SEGMENT_LEN, &reference_receivers()).unwrap();
        for segs in db.segments.values() {
            assert!(segs.iter().all(|g| g.sigma > 1.0 && g.sigma < 5.5));
        }
        let (lo, hi) = db.common_coverage().unwrap();
        assert!(lo <= 0.0 && hi >= 7990.0);
        // the higher channel is usually the stronger one
        let stronger = (0..80)
            .filter(|i| {
                let d = *i as f64 * 100.0;
                db.query_power(27, d).unwrap().0 > db.query_power(23, d).unwrap().0
            })
            .count();
        assert!(stronger > 70);
    }
}
