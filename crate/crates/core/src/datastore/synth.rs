//! Synthetic advection fields for desk-scale experiments.
//!
//! Gaussian blobs drift (and optionally orbit) across a periodic grid.
//! Feature 0 is a temperature-like target, features 1 and 2 carry the
//! local blob velocity (east and north components weighted by blob
//! presence), further features are signed mixtures of the target with
//! noise.

use chrono::{TimeDelta, TimeZone, Utc};
use ndarray::Array4;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::grid::{FeatureInfo, GridSeries};
use crate::error::{Error, Result};

/// One blob; positions and velocities are in cells and cells per step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Blob {
    pub row: f64,
    pub col: f64,
    pub vel_row: f64,
    pub vel_col: f64,
    pub sigma: f64,
    pub amplitude: f64,
    /// Radius and angular speed (radians per step) of an orbit superposed
    /// on the drift.
    pub orbit_radius: f64,
    pub angular_velocity: f64,
    pub phase: f64,
}

impl Blob {
    pub fn drifting(row: f64, col: f64, vel_row: f64, vel_col: f64, sigma: f64, amplitude: f64) -> Self {
        Self {
            row,
            col,
            vel_row,
            vel_col,
            sigma,
            amplitude,
            orbit_radius: 0.0,
            angular_velocity: 0.0,
            phase: 0.0,
        }
    }

    fn center(&self, t: f64) -> (f64, f64) {
        let a = self.angular_velocity * t + self.phase;
        (
            self.row + self.vel_row * t + self.orbit_radius * a.sin(),
            self.col + self.vel_col * t + self.orbit_radius * a.cos(),
        )
    }

    fn velocity(&self, t: f64) -> (f64, f64) {
        let a = self.angular_velocity * t + self.phase;
        let rw = self.orbit_radius * self.angular_velocity;
        (self.vel_row + rw * a.cos(), self.vel_col - rw * a.sin())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub height: usize,
    pub width: usize,
    pub len_time: usize,
    pub features: usize,
    pub seed: u64,
    /// Explicit blobs; drawn from the seed when empty.
    pub blobs: Vec<Blob>,
    pub base_temperature: f64,
    /// Standard deviation of the noise added to mixture features.
    pub noise: f64,
    pub step_hours: i64,
}

impl SynthConfig {
    pub fn new(height: usize, width: usize, len_time: usize, features: usize, seed: u64) -> Self {
        Self {
            height,
            width,
            len_time,
            features,
            seed,
            blobs: Vec::new(),
            base_temperature: 280.0,
            noise: 0.1,
            step_hours: 3,
        }
    }
}

fn random_blobs(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Vec<Blob> {
    let count = (cfg.height * cfg.width / 80).clamp(2, 12);
    (0..count)
        .map(|b| {
            let speed = rng.random_range(0.3..1.0);
            let heading = rng.random_range(0.0..std::f64::consts::TAU);
            let sign = if b % 3 == 2 { -1.0 } else { 1.0 };
            let orbit = rng.random_bool(0.5);
            Blob {
                row: rng.random_range(0.0..cfg.height as f64),
                col: rng.random_range(0.0..cfg.width as f64),
                vel_row: speed * heading.sin(),
                vel_col: speed * heading.cos(),
                sigma: rng.random_range(1.2..2.5),
                amplitude: sign * rng.random_range(6.0..12.0),
                orbit_radius: if orbit { rng.random_range(1.0..3.0) } else { 0.0 },
                angular_velocity: if orbit { rng.random_range(-0.2..0.2) } else { 0.0 },
                phase: rng.random_range(0.0..std::f64::consts::TAU),
            }
        })
        .collect()
}

/// Squared distance on the torus.
fn wrapped_sq(a: f64, b: f64, period: f64) -> f64 {
    let d = (a - b).rem_euclid(period);
    let d = d.min(period - d);
    d * d
}

pub fn synth_from_config(cfg: &SynthConfig) -> Result<GridSeries> {
    if cfg.height < 3 || cfg.width < 3 || cfg.len_time < 1 || cfg.features < 1 {
        return Err(Error::Domain(format!(
            "synthetic grid needs M, N >= 3 and T, d >= 1, got {}x{}, T={}, d={}",
            cfg.height, cfg.width, cfg.len_time, cfg.features
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let blobs = if cfg.blobs.is_empty() {
        random_blobs(cfg, &mut rng)
    } else {
        cfg.blobs.clone()
    };
    let (m, n, d) = (cfg.height, cfg.width, cfg.features);
    let mixes: Vec<f64> = (3..d)
        .map(|k| {
            let w = rng.random_range(0.3..1.0);
            if k % 2 == 0 { -w } else { w }
        })
        .collect();
    let noise = Normal::new(0.0, cfg.noise.max(0.0))
        .map_err(|e| Error::Domain(format!("noise: {e}")))?;
    let mut values = Array4::<f32>::zeros((cfg.len_time, d, m, n));
    for t in 0..cfg.len_time {
        let tf = t as f64;
        let centers: Vec<_> = blobs.iter().map(|b| (b.center(tf), b.velocity(tf))).collect();
        for i in 0..m {
            for j in 0..n {
                let (mut temp, mut u, mut v) = (0.0, 0.0, 0.0);
                for (b, ((r, c), (vr, vc))) in blobs.iter().zip(&centers) {
                    let r2 = wrapped_sq(i as f64, *r, m as f64) + wrapped_sq(j as f64, *c, n as f64);
                    let g = (-r2 / (2.0 * b.sigma * b.sigma)).exp();
                    temp += b.amplitude * g;
                    u += vc * g;
                    v += -vr * g;
                }
                values[[t, 0, i, j]] = (cfg.base_temperature + temp) as f32;
                if d > 1 {
                    values[[t, 1, i, j]] = u as f32;
                }
                if d > 2 {
                    values[[t, 2, i, j]] = v as f32;
                }
                for (k, w) in mixes.iter().enumerate() {
                    let e = if cfg.noise > 0.0 { noise.sample(&mut rng) } else { 0.0 };
                    values[[t, 3 + k, i, j]] = (w * temp + e) as f32;
                }
            }
        }
    }
    let mut features = vec![FeatureInfo::new("temperature", "K")];
    if d > 1 {
        features.push(FeatureInfo::new("u_wind", "cells/step"));
    }
    if d > 2 {
        features.push(FeatureInfo::new("v_wind", "cells/step"));
    }
    features.extend((3..d).map(|k| FeatureInfo::new(format!("mix{k}"), "")));
    let lat: Vec<f64> = (0..m).map(|i| 45.0 - 0.25 * i as f64).collect();
    let lon: Vec<f64> = (0..n).map(|j| 20.0 + 0.25 * j as f64).collect();
    GridSeries::from_axes(
        values,
        features,
        &lat,
        &lon,
        Utc.with_ymd_and_hms(2000, 1, 1, 0, 0, 0).unwrap(),
        TimeDelta::hours(cfg.step_hours),
    )
}

/// Seeded random blobs on an `M x N` grid.
pub fn synth_advection(m: usize, n: usize, t: usize, d: usize, seed: u64) -> Result<GridSeries> {
    synth_from_config(&SynthConfig::new(m, n, t, d, seed))
}
