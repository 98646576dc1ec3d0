use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::GenerationSeries;

const SUNRISE: f64 = 6.0;
const SUNSET: f64 = 18.0;

fn half_sine(hour: usize) -> f64 {
    let h = hour as f64;
    if (SUNRISE..=SUNSET).contains(&h) {
        (std::f64::consts::PI * (h - SUNRISE) / (SUNSET - SUNRISE)).sin().max(0.0)
    } else {
        0.0
    }
}

/// Mean-one lognormal factor exp(σξ − σ²/2).
fn lognormal(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return 1.0;
    }
    let xi: f64 = StandardNormal.sample(rng);
    (sigma * xi - 0.5 * sigma * sigma).exp()
}

/// Hourly solar output: a half-sine between 06:00 and 18:00 scaled by `peak_kw`, with a
/// day-level and an hour-level multiplicative lognormal factor of scale `noise_scale`.
pub fn synth_solar_series(days: usize, peak_kw: f64, noise_scale: f64, seed: u64) -> GenerationSeries {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(days * 24);
    for _ in 0..days {
        let day = lognormal(&mut rng, noise_scale);
        for h in 0..24 {
            let hour = lognormal(&mut rng, 0.5 * noise_scale);
            values.push((peak_kw * half_sine(h) * day * hour).max(0.0));
        }
    }
    GenerationSeries {
        label: format!("synthetic-solar(seed={seed})"),
        start_hour: 0,
        values,
        demand_max: None,
    }
}

/// Residential load shape with a morning and a larger evening bump, peaking near 1.
fn load_shape(hour: usize) -> f64 {
    let h = hour as f64;
    let bump = |centre: f64, width: f64| (-((h - centre) / width).powi(2)).exp();
    0.35 + 0.35 * bump(7.5, 1.5) + 0.65 * bump(19.0, 2.0)
}

/// Hourly demand ceiling series: `base_kw` times the load shape, with the same noise
/// structure as the solar generator.
pub fn synth_demand_series(days: usize, base_kw: f64, noise_scale: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_d3a4_d000_0001);
    let mut values = Vec::with_capacity(days * 24);
    for _ in 0..days {
        let day = lognormal(&mut rng, noise_scale);
        for h in 0..24 {
            let hour = lognormal(&mut rng, 0.5 * noise_scale);
            values.push((base_kw * load_shape(h) * day * hour).max(0.0));
        }
    }
    values
}
