//! A small styled racer for generating labelled play corpora.
//!
//! The car drives a 1-D looped track with a lateral offset.  A style is a
//! target speed plus per-channel Gaussian action noise; the driver is a
//! proportional controller (accelerate toward the target speed, steer back
//! toward the track center against a position-dependent drift).  Every
//! step records the rendered observation and the noisy 2-D action
//! (steer, accel).
//!
//! Rendering stacks the last `frames` grayscale frames.  Each frame has
//! three coarse, heavily quantized elements — a track strip with a marker
//! block at the car's (quantized) position and lateral offset, and a speed
//! bar whose length tracks the current speed — plus a handful of
//! *detail pixels* that encode the continuous state at full precision,
//! emulating the fine sensor detail of real game frames.  The detail
//! pixels sit in rows that a half-pixel-centered 8x8 downsample never
//! samples, so raw frames essentially never repeat exactly while
//! downsampled codes recur heavily.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::dataset::{
    Action, ActionSpace, DatasetError, ObsShape, Observation, PlayDataset, PlaySample,
};

/// Simulator configuration (track, physics, rendering).
#[derive(Clone, Debug)]
pub struct SimConfig {
    /// Track length in position units; position wraps modulo this.
    pub track_len: f64,
    /// Speed ceiling; the speed bar is scaled against this.
    pub v_max: f64,
    /// Proportional gain of the speed controller.
    pub k_accel: f64,
    /// Proportional gain of the steering controller.
    pub k_steer: f64,
    /// Lateral units moved per unit of applied steer.
    pub steer_gain: f64,
    /// Speed units gained per unit of applied accel.
    pub accel_gain: f64,
    /// Linear drag coefficient on speed.
    pub drag: f64,
    /// Amplitude of the position-dependent lateral drift.
    pub curve_amp: f64,
    /// Frames stacked into one observation.
    pub frames: usize,
    /// Frame height in pixels.
    pub height: usize,
    /// Frame width in pixels.
    pub width: usize,
    /// Steps per episode.
    pub episode_len: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            track_len: 4096.0,
            v_max: 100.0,
            k_accel: 0.2,
            k_steer: 0.8,
            steer_gain: 0.3,
            accel_gain: 1.0,
            drag: 0.004,
            curve_amp: 0.05,
            frames: 4,
            height: 32,
            width: 32,
            episode_len: 256,
        }
    }
}

impl SimConfig {
    pub fn obs_shape(&self) -> ObsShape {
        ObsShape(vec![self.frames, self.height, self.width])
    }

    pub fn action_space(&self) -> ActionSpace {
        ActionSpace::Continuous { dim: 2 }
    }

    fn validate(&self) -> Result<(), SimError> {
        if self.height < 24 || self.width < 16 {
            return Err(SimError::BadConfig("frames must be at least 24x16".into()));
        }
        if self.frames == 0 || self.episode_len == 0 {
            return Err(SimError::BadConfig("frames and episode length must be positive".into()));
        }
        if !(self.track_len > 0.0 && self.v_max > 0.0) {
            return Err(SimError::BadConfig("track length and v_max must be positive".into()));
        }
        Ok(())
    }
}

/// One playstyle: a target speed and action noise levels.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StyleSpec {
    pub target_speed: f64,
    pub sigma_steer: f64,
    pub sigma_accel: f64,
}

/// Standard deviations for the graded noise levels: level 0 is noiseless,
/// level k has (steer, accel) stds (0.01 k, 0.005 k).
pub fn noise_level_stds(level: u32) -> (f64, f64) {
    (0.01 * level as f64, 0.005 * level as f64)
}

/// Canonical dataset id for a (speed, noise level) grid cell.
pub fn style_id(speed: f64, level: u32) -> String {
    if speed.fract() == 0.0 {
        format!("s{}_n{}", speed as i64, level)
    } else {
        format!("s{speed:.2}_n{level}")
    }
}

/// Errors from simulation and grid generation.
#[derive(Debug, Error)]
pub enum SimError {
    #[error("bad simulator config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

/// Continuous car state.
#[derive(Clone, Copy, Debug)]
pub struct CarState {
    /// Position along the looped track, in `[0, track_len)`.
    pub pos: f64,
    /// Lateral offset from the track center, in `[-1, 1]`.
    pub lat: f64,
    /// Current speed, in `[0, v_max]`.
    pub speed: f64,
}

/// Deterministic seed mixing (splitmix64 over the packed inputs), used to
/// derive per-style and per-episode seeds from one base seed.
pub fn mix_seed(base: u64, a: u64, b: u64) -> u64 {
    let mut x = base ^ a.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ b.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    for _ in 0..2 {
        x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = x;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        x = z ^ (z >> 31);
    }
    x
}

/// A standard normal draw via Box-Muller (keeps the dependency footprint
/// to the plain RNG).
pub(crate) fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    let mut u1: f64 = rng.random();
    while u1 <= f64::MIN_POSITIVE {
        u1 = rng.random();
    }
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

fn fract_pixel(x: f64) -> u8 {
    ((x.fract() + 1.0).fract() * 256.0).floor().clamp(0.0, 255.0) as u8
}

/// Rasterize one frame from a car state.
fn render_frame(cfg: &SimConfig, s: &CarState) -> Vec<u8> {
    let (h, w) = (cfg.height, cfg.width);
    let mut px = vec![0u8; h * w];

    // Track strip occupying the middle half of the frame.
    let strip_top = h / 4;
    let strip_bot = 3 * h / 4 - 1;
    for y in strip_top..=strip_bot {
        for x in 0..w {
            px[y * w + x] = 50;
        }
    }

    // Marker block: quantized track position (column) and lateral offset
    // (row band).  Quantization keeps the strip content piecewise constant
    // so downsampled states recur across episodes.
    let marker_w = w / 8 + 1;
    let marker_x = ((s.pos / cfg.track_len * w as f64).floor() as usize).min(w - 1);
    let mid = (strip_top + strip_bot) as f64 / 2.0;
    let span = (strip_bot - strip_top) as f64 / 2.0 - 2.0;
    let center = mid + s.lat.clamp(-1.0, 1.0) * span;
    let band_top = ((center - 2.0).floor() as isize).clamp(strip_top as isize, strip_bot as isize) as usize;
    let band_bot = ((center + 2.0).floor() as isize).clamp(strip_top as isize, strip_bot as isize) as usize;
    for y in band_top..=band_bot {
        for dx in 0..marker_w {
            let x = (marker_x + dx) % w;
            px[y * w + x] = 230;
        }
    }

    // Speed bar near the bottom: length tracks current speed.
    let bar_top = h - 7;
    let bar_bot = h - 2;
    let bar_len = ((s.speed / cfg.v_max * w as f64).round() as usize).min(w);
    for y in bar_top..=bar_bot {
        for x in 0..bar_len {
            px[y * w + x] = 255;
        }
    }

    // Detail pixels: continuous state at full precision, in row 0 — a row
    // that half-pixel-centered downsampling to w/4 x h/4 never samples.
    px[0] = fract_pixel(s.pos / cfg.track_len * 997.0);
    px[1] = fract_pixel((s.lat + 1.0) * 463.0);
    px[2] = fract_pixel(s.speed / cfg.v_max * 757.0);
    px[3] = fract_pixel(s.pos / cfg.track_len * 8191.0);

    px
}

/// Stack the most recent `cfg.frames` states into one observation, oldest
/// first.  Histories shorter than the stack repeat their earliest state.
pub fn render_observation(cfg: &SimConfig, history: &[CarState]) -> Result<Observation, SimError> {
    cfg.validate()?;
    if history.is_empty() {
        return Err(SimError::BadConfig("empty state history".into()));
    }
    let mut data = Vec::with_capacity(cfg.frames * cfg.height * cfg.width);
    for slot in 0..cfg.frames {
        // Oldest frame first: slot 0 is `frames - 1` steps back.
        let back = cfg.frames - 1 - slot;
        let idx = history.len().saturating_sub(1 + back);
        data.extend_from_slice(&render_frame(cfg, &history[idx]));
    }
    Ok(Observation::new(cfg.obs_shape(), data)?)
}

/// Run one episode and record (observation, noisy action) per step.
pub fn run_episode(
    cfg: &SimConfig,
    style: &StyleSpec,
    len: usize,
    seed: u64,
) -> Result<Vec<PlaySample>, SimError> {
    cfg.validate()?;
    if !(style.target_speed > 0.0 && style.target_speed <= cfg.v_max) {
        return Err(SimError::BadConfig(format!(
            "target speed {} outside (0, {}]",
            style.target_speed, cfg.v_max
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Seeded initial conditions: somewhere on the track, roughly on
    // center, already near (but below) the target speed.
    let mut state = CarState {
        pos: rng.random::<f64>() * cfg.track_len,
        lat: (rng.random::<f64>() * 2.0 - 1.0) * 0.3,
        speed: style.target_speed * (0.85 + 0.1 * rng.random::<f64>()),
    };
    let mut history: Vec<CarState> = Vec::with_capacity(len);
    let mut samples = Vec::with_capacity(len);
    for _ in 0..len {
        history.push(state);
        let observation = render_observation(cfg, &history)?;

        // Proportional controller plus the style's Gaussian noise.
        let steer_cmd = (-cfg.k_steer * state.lat).clamp(-1.0, 1.0);
        let accel_cmd = (cfg.k_accel * (style.target_speed - state.speed)).clamp(-1.0, 1.0);
        let steer = steer_cmd + style.sigma_steer * standard_normal(&mut rng);
        let accel = accel_cmd + style.sigma_accel * standard_normal(&mut rng);
        samples.push(PlaySample {
            observation,
            action: Action::Continuous(vec![steer as f32, accel as f32]),
        });

        // Advance the car under the applied (re-clamped) action.
        let drift = cfg.curve_amp * (std::f64::consts::TAU * state.pos / cfg.track_len).sin();
        state.speed = (state.speed + cfg.accel_gain * accel.clamp(-1.0, 1.0) - cfg.drag * state.speed)
            .clamp(0.0, cfg.v_max);
        state.lat = (state.lat + cfg.steer_gain * steer.clamp(-1.0, 1.0) + drift).clamp(-1.0, 1.0);
        state.pos = (state.pos + state.speed).rem_euclid(cfg.track_len);
    }
    Ok(samples)
}

/// One cell of a generated style grid.
#[derive(Clone, Debug)]
pub struct GridEntry {
    pub id: String,
    pub style: StyleSpec,
    pub noise_level: u32,
    pub dataset: PlayDataset,
}

/// Build one dataset for a style: enough episodes to cover `samples`,
/// concatenated in seed order, then subsampled without replacement.
pub fn generate_style_dataset(
    cfg: &SimConfig,
    id: &str,
    style: &StyleSpec,
    samples: usize,
    seed: u64,
) -> Result<PlayDataset, SimError> {
    cfg.validate()?;
    if samples == 0 {
        return Err(SimError::BadConfig("zero samples requested".into()));
    }
    let episodes = samples.div_ceil(cfg.episode_len) + 1;
    let mut pool = Vec::with_capacity(episodes * cfg.episode_len);
    for e in 0..episodes {
        pool.extend(run_episode(cfg, style, cfg.episode_len, mix_seed(seed, e as u64, 0x01))?);
    }
    let full = PlayDataset::new(id, cfg.obs_shape(), cfg.action_space(), pool)?;
    let mut subset = full.sample_subset(samples, mix_seed(seed, 0, 0x02))?;
    subset.set_id(id);
    Ok(subset)
}

/// Generate the full speeds x noise-levels grid of style datasets.
///
/// Entries come back in row-major grid order (speeds outer, levels inner);
/// ids follow [`style_id`].  Each cell draws from its own seed stream, so
/// any sub-grid is reproducible independently of the rest.
pub fn generate_style_grid(
    cfg: &SimConfig,
    speeds: &[f64],
    noise_levels: &[u32],
    samples: usize,
    seed: u64,
) -> Result<Vec<GridEntry>, SimError> {
    let mut entries = Vec::with_capacity(speeds.len() * noise_levels.len());
    for (si, &speed) in speeds.iter().enumerate() {
        for (ni, &level) in noise_levels.iter().enumerate() {
            let (sigma_steer, sigma_accel) = noise_level_stds(level);
            let style = StyleSpec { target_speed: speed, sigma_steer, sigma_accel };
            let id = style_id(speed, level);
            let cell_seed = mix_seed(seed, si as u64, ni as u64);
            let dataset = generate_style_dataset(cfg, &id, &style, samples, cell_seed)?;
            entries.push(GridEntry { id, style, noise_level: level, dataset });
        }
    }
    Ok(entries)
}

/// A style-agnostic training pool: episodes from every given style,
/// interleaved, then subsampled to `samples`.
pub fn generate_pool(
    cfg: &SimConfig,
    styles: &[StyleSpec],
    samples: usize,
    seed: u64,
) -> Result<PlayDataset, SimError> {
    cfg.validate()?;
    if styles.is_empty() || samples == 0 {
        return Err(SimError::BadConfig("pool needs styles and samples".into()));
    }
    let per_style = samples.div_ceil(styles.len());
    let episodes = per_style.div_ceil(cfg.episode_len) + 1;
    let mut pool = Vec::new();
    for (si, style) in styles.iter().enumerate() {
        for e in 0..episodes {
            pool.extend(run_episode(
                cfg,
                style,
                cfg.episode_len,
                mix_seed(seed, si as u64, 0x100 + e as u64),
            )?);
        }
    }
    let full = PlayDataset::new("pool", cfg.obs_shape(), cfg.action_space(), pool)?;
    let mut subset = full.sample_subset(samples, mix_seed(seed, 0, 0x03))?;
    subset.set_id("pool");
    Ok(subset)
}
