//! Synthetic driver population with planted accident risk.
//!
//! Each driver gets a behavioural profile. Its expected indicator values are
//! computed in closed form from the profile (the oracle), accident outcomes
//! per severity are drawn from logistic models with planted coefficients
//! evaluated at those oracle values, and an event log consistent with the
//! profile can be emitted for pipeline checks.
//!
//! Randomness: driver `i` draws its profile and outcomes from ChaCha stream
//! `2i` and its event log from stream `2i + 1` of the root seed, so results
//! do not depend on thread scheduling or on how many logs are written.

use std::collections::BTreeMap;
use std::f64::consts::SQRT_2;

use chrono::{Duration, FixedOffset, NaiveDate, TimeZone, Timelike, Utc};
use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Gamma, LogNormal, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::calendar::{parse_utc_offset, HolidayCalendar};
use crate::error::{Error, Result};
use crate::features::{AccelBand, FeatureValues, QualityFlags, Window, WindowKind};
use crate::glm::{fit_expected, sigmoid, DesignMatrix, FitOptions, INTERCEPT};
use crate::ingest::{Axis, EventPackage, GeoPoint, Payload};
use crate::labeling::{ClaimRecord, Severity, Target};
use crate::trips::EARTH_RADIUS_KM;

const DEFAULT_CONFIG: &str = include_str!("../data/synth_default.toml");

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GammaSpec {
    pub shape: f64,
    pub mean: f64,
}

impl GammaSpec {
    fn sample(&self, rng: &mut impl Rng) -> f64 {
        Gamma::new(self.shape, self.mean / self.shape)
            .expect("validated gamma parameters")
            .sample(rng)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PeakSpec {
    pub base: f64,
    /// Standard deviation of the driver-wide component.
    pub driver_sd: f64,
    /// Standard deviation of the per-slice component.
    pub slice_sd: f64,
    pub range: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PopulationParams {
    pub trips_per_day: GammaSpec,
    /// Holiday trip rate relative to business days, uniform range.
    pub holiday_factor: [f64; 2],
    /// Driver mean trip length (km).
    pub trip_length_mean: GammaSpec,
    /// Log-scale spread of trip lengths, uniform range.
    pub trip_length_sigma: [f64; 2],
    /// Beta parameters of the share of trips starting at night (00-06).
    pub night_share: [f64; 2],
    /// Beta parameters of the share of trips starting 08-10.
    pub morning_share: [f64; 2],
    /// Beta parameters of the share of trips starting 18-20.
    pub evening_share: [f64; 2],
    /// Normal mean and sd of the driver's mean cruising speed (kph).
    pub city_speed_mean: [f64; 2],
    pub city_speed_mean_range: [f64; 2],
    /// Log-scale spread of leg speeds, uniform range.
    pub city_speed_sigma: [f64; 2],
    pub min_speed_kph: f64,
    pub peak: PeakSpec,
    /// Stationary time between ignition and first movement, seconds.
    pub idle_s: [i64; 2],
    /// Nominal leg length between position fixes (km).
    pub leg_km: f64,
    /// Acceleration-event intensity distributions, events per 100 km.
    pub accel: BTreeMap<String, GammaSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClaimParams {
    pub ins_sum_mean: f64,
    pub ins_sum_sigma: f64,
    /// Probability of an extra culprit claim with zero loss.
    pub zero_loss_rate: f64,
    /// Probability of an extra claim where the driver was not at fault.
    pub non_culprit_rate: f64,
    pub weak_ratio: [f64; 2],
    pub medium_ratio: [f64; 2],
    pub strong_ratio: [f64; 2],
}

/// Planted logistic model for one severity, written per standard deviation
/// around the population mean profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantedModel {
    /// Log-odds of a driver whose planted features all sit at their means.
    pub centre_log_odds: f64,
    /// Log-odds change per population standard deviation of each feature.
    #[serde(default)]
    pub per_sd: BTreeMap<String, f64>,
}

/// Population mean and standard deviation of an oracle feature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Moment {
    pub mean: f64,
    pub sd: f64,
}

impl PlantedModel {
    /// Raw-unit coefficients with the intercept under `const`.
    pub fn raw(&self, moments: &BTreeMap<String, Moment>) -> Result<BTreeMap<String, f64>> {
        let mut out = BTreeMap::new();
        let mut intercept = self.centre_log_odds;
        for (name, &effect) in &self.per_sd {
            let m = moments
                .get(name)
                .ok_or_else(|| Error::Config(format!("no population moment for planted feature `{name}`")))?;
            let beta = effect / m.sd;
            intercept -= beta * m.mean;
            out.insert(name.clone(), beta);
        }
        out.insert(INTERCEPT.to_string(), intercept);
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub n_drivers: usize,
    pub weeks: u32,
    pub seed: u64,
    pub start_date: NaiveDate,
    pub timezone: String,
    pub population: PopulationParams,
    pub claims: ClaimParams,
    /// Frozen population moments used to convert per-sd effects to raw
    /// coefficients, so planted values do not depend on the seed.
    pub moments: BTreeMap<String, Moment>,
    /// Planted models keyed by severity (`weak`, `medium`, `strong`).
    /// A severity without a model never occurs.
    #[serde(default)]
    pub planted: BTreeMap<String, PlantedModel>,
}

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Config(msg()))
    }
}

fn check_range(name: &str, r: [f64; 2], lo: f64, hi: f64) -> Result<()> {
    check(r[0] >= lo && r[1] <= hi && r[0] <= r[1], || {
        format!("{name} range {:?} must be ordered within [{lo}, {hi}]", r)
    })
}

impl SynthConfig {
    /// The shipped default configuration.
    pub fn default_config() -> Self {
        Self::from_toml(DEFAULT_CONFIG).expect("bundled synth config is valid")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: SynthConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn tz(&self) -> Result<FixedOffset> {
        parse_utc_offset(&self.timezone).map_err(Error::Config)
    }

    pub fn validate(&self) -> Result<()> {
        check(self.n_drivers >= 2, || format!("n_drivers must be at least 2, got {}", self.n_drivers))?;
        check(self.weeks >= 1, || "weeks must be at least 1".into())?;
        self.tz()?;
        let p = &self.population;
        for (name, g) in [("trips_per_day", p.trips_per_day), ("trip_length_mean", p.trip_length_mean)]
            .into_iter()
            .chain(p.accel.iter().map(|(k, g)| (k.as_str(), *g)))
        {
            check(g.shape > 0.0 && g.mean > 0.0, || format!("{name}: gamma shape and mean must be positive"))?;
        }
        for band in AccelBand::ALL {
            check(p.accel.contains_key(band.name()), || format!("accel intensity for `{}` missing", band.name()))?;
        }
        if let Some(k) = p.accel.keys().find(|k| !AccelBand::ALL.iter().any(|b| b.name() == k.as_str())) {
            return Err(Error::Config(format!("unknown accel band `{k}`")));
        }
        check(p.trip_length_mean.mean > 0.5, || "trip_length_mean must exceed 0.5 km".into())?;
        check_range("holiday_factor", p.holiday_factor, 0.0, f64::INFINITY)?;
        check_range("trip_length_sigma", p.trip_length_sigma, 1e-6, 5.0)?;
        check_range("city_speed_sigma", p.city_speed_sigma, 1e-6, 5.0)?;
        check_range("city_speed_mean_range", p.city_speed_mean_range, p.min_speed_kph, f64::INFINITY)?;
        check_range("peak.range", p.peak.range, p.city_speed_mean_range[1], 400.0)?;
        for (name, b) in [("night_share", p.night_share), ("morning_share", p.morning_share), ("evening_share", p.evening_share)] {
            check(b[0] > 0.0 && b[1] > 0.0, || format!("{name}: beta parameters must be positive"))?;
        }
        check(p.min_speed_kph > 0.0, || "min_speed_kph must be positive".into())?;
        check(p.leg_km > 0.0, || "leg_km must be positive".into())?;
        check(p.idle_s[0] >= 0 && p.idle_s[0] <= p.idle_s[1], || "idle_s must be an ordered non-negative range".into())?;
        let c = &self.claims;
        check(c.ins_sum_mean > 0.0 && c.ins_sum_sigma >= 0.0, || "ins_sum parameters must be positive".into())?;
        for (name, r) in [("zero_loss_rate", c.zero_loss_rate), ("non_culprit_rate", c.non_culprit_rate)] {
            check((0.0..=1.0).contains(&r), || format!("{name} must lie in [0, 1]"))?;
        }
        for (sev, r) in [
            (Severity::Weak, c.weak_ratio),
            (Severity::Medium, c.medium_ratio),
            (Severity::Strong, c.strong_ratio),
        ] {
            check(
                r[0] < r[1]
                    && crate::labeling::severity_of_ratio(r[0]) == sev
                    && crate::labeling::severity_of_ratio(r[1]) == sev,
                || format!("{sev}_ratio {:?} must lie inside the {sev} band", r),
            )?;
        }
        for (target, model) in &self.planted {
            check(matches!(target.as_str(), "weak" | "medium" | "strong"), || {
                format!("planted target `{target}` must be weak, medium or strong")
            })?;
            for name in model.per_sd.keys() {
                check(FeatureValues::NAMES.contains(&name.as_str()), || format!("unknown planted feature `{name}`"))?;
                let m = self.moments.get(name);
                check(m.is_some_and(|m| m.sd > 0.0), || format!("moment for `{name}` missing or zero sd"))?;
            }
        }
        Ok(())
    }

    /// Raw planted coefficients per severity.
    pub fn planted_raw(&self) -> Result<BTreeMap<String, BTreeMap<String, f64>>> {
        self.planted
            .iter()
            .map(|(k, m)| Ok((k.clone(), m.raw(&self.moments)?)))
            .collect()
    }

    pub fn days(&self) -> i64 {
        7 * self.weeks as i64
    }

    /// Lifetime window covering the observation period.
    pub fn window(&self) -> Result<Window> {
        let last = self.start_date + Duration::days(self.days() - 1);
        Ok(Window::lifetime(self.start_date, last, &self.tz()?))
    }
}

/// Hour-of-day slice used for start-hour propensities and speed peaks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slice {
    Night,
    Morning,
    Evening,
    Other,
}

impl Slice {
    pub fn of_hour(hour: u32) -> Slice {
        match hour {
            0..=5 => Slice::Night,
            8 | 9 => Slice::Morning,
            18 | 19 => Slice::Evening,
            _ => Slice::Other,
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriverProfile {
    pub device_id: String,
    pub trips_per_day: f64,
    pub holiday_factor: f64,
    pub trip_length_mean: f64,
    pub trip_length_sigma: f64,
    /// Probability that a trip starts in each local hour.
    pub hour_weights: [f64; 24],
    pub city_speed_mean: f64,
    pub city_speed_sigma: f64,
    pub min_speed_kph: f64,
    /// Top speed reached in each slice: night, morning, evening, other.
    pub peaks: [f64; 4],
    pub accel_per_100km: [f64; 9],
    pub idle_s: [i64; 2],
    pub leg_km: f64,
    pub home: GeoPoint,
    pub ins_sum: f64,
}

fn phi(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// Log-normal clamped to `[lo, hi]`.
#[derive(Debug, Clone, Copy)]
struct ClampedLogNormal {
    mu: f64,
    sigma: f64,
    lo: f64,
    hi: f64,
}

impl ClampedLogNormal {
    fn with_mean(mean: f64, sigma: f64, lo: f64, hi: f64) -> Self {
        ClampedLogNormal {
            mu: mean.ln() - sigma * sigma / 2.0,
            sigma,
            lo,
            hi,
        }
    }

    fn cdf_raw(&self, x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else {
            phi((x.ln() - self.mu) / self.sigma)
        }
    }

    /// `P(V < x)` for the clamped variable.
    fn p_below(&self, x: f64) -> f64 {
        if x <= self.lo {
            0.0
        } else if x > self.hi {
            1.0
        } else {
            self.cdf_raw(x)
        }
    }

    /// `E[V^k]` over the unclamped interval `(lo, hi)`.
    fn partial_moment(&self, k: f64) -> f64 {
        let s2 = self.sigma * self.sigma;
        let z = |x: f64| (x.ln() - self.mu - k * s2) / self.sigma;
        (k * self.mu + k * k * s2 / 2.0).exp() * (phi(z(self.hi)) - phi(z(self.lo)))
    }

    fn mean(&self) -> f64 {
        self.lo * self.cdf_raw(self.lo) + self.hi * (1.0 - self.cdf_raw(self.hi)) + self.partial_moment(1.0)
    }

    fn mean_inverse(&self) -> f64 {
        self.cdf_raw(self.lo) / self.lo + (1.0 - self.cdf_raw(self.hi)) / self.hi + self.partial_moment(-1.0)
    }

    fn sample(&self, rng: &mut impl Rng) -> f64 {
        let v: f64 = LogNormal::new(self.mu, self.sigma).expect("validated").sample(rng);
        v.clamp(self.lo, self.hi)
    }
}

impl DriverProfile {
    pub fn slice_share(&self, slice: Slice) -> f64 {
        (0..24u32)
            .filter(|&h| Slice::of_hour(h) == slice)
            .map(|h| self.hour_weights[h as usize])
            .sum()
    }

    fn leg_speed(&self) -> ClampedLogNormal {
        let hi = self.peaks.iter().copied().fold(f64::INFINITY, f64::min);
        ClampedLogNormal::with_mean(self.city_speed_mean, self.city_speed_sigma, self.min_speed_kph, hi)
    }

    /// Trip length is `0.5 + X` with `X` log-normal of mean `m − 0.5`.
    fn trip_length_log_params(&self) -> (f64, f64) {
        let s = self.trip_length_sigma;
        ((self.trip_length_mean - 0.5).ln() - s * s / 2.0, s)
    }

    fn trip_length_below(&self, km: f64) -> f64 {
        if km <= 0.5 {
            return 0.0;
        }
        let (mu, s) = self.trip_length_log_params();
        phi(((km - 0.5).ln() - mu) / s)
    }

    fn sample_trip_length(&self, rng: &mut impl Rng) -> f64 {
        let (mu, s) = self.trip_length_log_params();
        0.5 + LogNormal::new(mu, s).expect("validated").sample(rng)
    }
}

fn uniform(rng: &mut impl Rng, r: [f64; 2]) -> f64 {
    if r[0] < r[1] {
        rng.random_range(r[0]..r[1])
    } else {
        r[0]
    }
}

fn sample_profile(device_id: String, p: &PopulationParams, claims: &ClaimParams, rng: &mut impl Rng) -> DriverProfile {
    let trips_per_day = p.trips_per_day.sample(rng);
    let holiday_factor = uniform(rng, p.holiday_factor);
    let trip_length_mean = p.trip_length_mean.sample(rng).max(1.0);
    let trip_length_sigma = uniform(rng, p.trip_length_sigma);

    let beta = |b: [f64; 2], rng: &mut dyn rand::RngCore| -> f64 { Beta::new(b[0], b[1]).expect("validated").sample(rng) };
    let mut night = beta(p.night_share, rng);
    let mut morning = beta(p.morning_share, rng);
    let mut evening = beta(p.evening_share, rng);
    let named = night + morning + evening;
    if named > 0.9 {
        let f = 0.9 / named;
        night *= f;
        morning *= f;
        evening *= f;
    }
    let other = 1.0 - night - morning - evening;
    let mut hour_weights = [0.0; 24];
    for (h, w) in hour_weights.iter_mut().enumerate() {
        *w = match Slice::of_hour(h as u32) {
            Slice::Night => night / 6.0,
            Slice::Morning => morning / 2.0,
            Slice::Evening => evening / 2.0,
            Slice::Other => other / 14.0,
        };
    }

    let speed_normal = Normal::new(p.city_speed_mean[0], p.city_speed_mean[1]).expect("validated");
    let city_speed_mean = speed_normal
        .sample(rng)
        .clamp(p.city_speed_mean_range[0], p.city_speed_mean_range[1]);
    let city_speed_sigma = uniform(rng, p.city_speed_sigma);

    let driver_g: f64 = rng.sample(rand_distr::StandardNormal);
    let mut peaks = [0.0; 4];
    for peak in peaks.iter_mut() {
        let e: f64 = rng.sample(rand_distr::StandardNormal);
        *peak = (p.peak.base + p.peak.driver_sd * driver_g + p.peak.slice_sd * e).clamp(p.peak.range[0], p.peak.range[1]);
    }

    let mut accel_per_100km = [0.0; 9];
    for band in AccelBand::ALL {
        accel_per_100km[band.index()] = p.accel[band.name()].sample(rng);
    }

    let home = GeoPoint {
        lat: rng.random_range(45.0..60.0),
        lon: rng.random_range(30.0..60.0),
    };
    let s = claims.ins_sum_sigma;
    let ins_sum = LogNormal::new(claims.ins_sum_mean.ln() - s * s / 2.0, s)
        .expect("validated")
        .sample(rng)
        .round()
        .max(1.0);

    DriverProfile {
        device_id,
        trips_per_day,
        holiday_factor,
        trip_length_mean,
        trip_length_sigma,
        hour_weights,
        city_speed_mean,
        city_speed_sigma,
        min_speed_kph: p.min_speed_kph,
        peaks,
        accel_per_100km,
        idle_s: p.idle_s,
        leg_km: p.leg_km,
        home,
        ins_sum,
    }
}

/// Expected indicator values for `profile` over `window`, computed from the
/// profile's distributions without touching any event data.
///
/// Slice mileage is attributed by trip start hour. The speeding
/// placeholders have no closed form and are reported as 0.
pub fn oracle_features(profile: &DriverProfile, window: &Window, calendar: &HolidayCalendar) -> FeatureValues {
    let days = window.days();
    let n_days = days.len() as f64;
    let business = days.iter().filter(|d| calendar.is_business_day(**d)).count() as f64;
    let holiday = n_days - business;

    let lambda = profile.trips_per_day;
    let lambda_h = lambda * profile.holiday_factor;
    let trips = lambda * business + lambda_h * holiday;
    let coverage = business * (1.0 - (-lambda).exp()) + holiday * (1.0 - (-lambda_h).exp());
    let m = profile.trip_length_mean;
    let mileage = m * trips;

    let share = |s: Slice| profile.slice_share(s);
    let hours_share = |pred: &dyn Fn(u32) -> bool| -> f64 {
        (0..24u32).filter(|&h| pred(h)).map(|h| profile.hour_weights[h as usize]).sum()
    };
    let day = hours_share(&crate::features::slices::is_daytime);
    let evening = share(Slice::Evening);
    let ratio = |a: f64, b: f64| if b > 0.0 { a / b } else { 0.0 };

    let v = profile.leg_speed();
    let peak_if = |s: Slice| if share(s) > 0.0 { profile.peaks[s.index()] } else { 0.0 };
    let max_sp = [Slice::Night, Slice::Morning, Slice::Evening, Slice::Other]
        .into_iter()
        .map(peak_if)
        .fold(0.0, f64::max);
    let idle_mean = (profile.idle_s[0] + profile.idle_s[1]) as f64 / 2.0;

    let mut f = FeatureValues {
        mileage,
        trips_day: ratio(trips, coverage),
        below_10_pr: 100.0 * profile.trip_length_below(10.0),
        below_30_pr: 100.0 * profile.trip_length_below(30.0),
        over_200: 100.0 * (1.0 - profile.trip_length_below(200.0)),
        over_400: 100.0 * (1.0 - profile.trip_length_below(400.0)),
        d_total_m: ratio(mileage, n_days),
        avg_trip_mil: m,
        avg_trip_dur: idle_mean + m * v.mean_inverse() * 3600.0,
        d_business_m: if business > 0.0 { m * lambda } else { 0.0 },
        d_day_m: ratio(mileage * day, n_days),
        d_evening_jam_m: ratio(mileage * evening, n_days),
        d_morning_jam_m: ratio(mileage * share(Slice::Morning), n_days),
        d_holi_m: if holiday > 0.0 { m * lambda_h } else { 0.0 },
        d_night_m: ratio(mileage * share(Slice::Night), n_days),
        day_m_pr: 100.0 * day,
        ej_m_pr: 100.0 * evening,
        avg_sp: v.mean(),
        max_sp,
        max_ej_sp: peak_if(Slice::Evening),
        max_mj_sp: peak_if(Slice::Morning),
        max_n_sp: peak_if(Slice::Night),
        m_pr_below_20: 100.0 * v.p_below(20.0),
        m_pr_below_60: 100.0 * v.p_below(60.0),
        m_pr_over_100: 100.0 * (1.0 - v.p_below(100.0)),
        m_pr_over_130: 100.0 * (1.0 - v.p_below(130.0)),
        ..FeatureValues::default()
    };
    for band in AccelBand::ALL {
        f.set(band.name(), profile.accel_per_100km[band.index()]);
    }
    f
}

/// Linear predictor of a raw planted model at feature values `x`.
pub fn planted_log_odds(raw: &BTreeMap<String, f64>, x: &FeatureValues) -> f64 {
    raw.iter()
        .map(|(name, &beta)| {
            if name == INTERCEPT {
                beta
            } else {
                beta * x.get(name).expect("validated feature name")
            }
        })
        .sum()
}

/// A generated claim with the class the generator intended.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthClaim {
    pub claim: ClaimRecord,
    pub intended: Severity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthDriver {
    pub profile: DriverProfile,
    pub oracle: FeatureValues,
    /// True accident probabilities for weak, medium, strong (0 when no
    /// model is planted) and any.
    pub probabilities: [f64; 4],
    /// Realised accident per severity: weak, medium, strong.
    pub accidents: [bool; 3],
    pub claims: Vec<SynthClaim>,
}

#[derive(Debug, Clone)]
pub struct Population {
    pub config: SynthConfig,
    pub window: Window,
    pub planted_raw: BTreeMap<String, BTreeMap<String, f64>>,
    pub drivers: Vec<SynthDriver>,
}

fn driver_rng(seed: u64, index: usize, events: bool) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2 * index as u64 + events as u64);
    rng
}

pub fn device_id(index: usize) -> String {
    format!("drv{index:05}")
}

const SEVERITIES: [(Severity, &str); 3] = [
    (Severity::Weak, "weak"),
    (Severity::Medium, "medium"),
    (Severity::Strong, "strong"),
];

fn ratio_band(c: &ClaimParams, s: Severity) -> [f64; 2] {
    match s {
        Severity::Weak => c.weak_ratio,
        Severity::Medium => c.medium_ratio,
        _ => c.strong_ratio,
    }
}

fn generate_driver(
    config: &SynthConfig,
    planted: &BTreeMap<String, BTreeMap<String, f64>>,
    window: &Window,
    calendar: &HolidayCalendar,
    index: usize,
) -> SynthDriver {
    let mut rng = driver_rng(config.seed, index, false);
    let profile = sample_profile(device_id(index), &config.population, &config.claims, &mut rng);
    let oracle = oracle_features(&profile, window, calendar);

    let mut probabilities = [0.0; 4];
    let mut accidents = [false; 3];
    let mut claims = Vec::new();
    let claim = |loss: f64, culprit: bool| ClaimRecord {
        device_id: profile.device_id.clone(),
        loss_size: loss,
        ins_sum: profile.ins_sum,
        culprit,
    };
    for (k, (severity, name)) in SEVERITIES.iter().enumerate() {
        let p = planted.get(*name).map_or(0.0, |raw| sigmoid(planted_log_odds(raw, &oracle)));
        probabilities[k] = p;
        let u: f64 = rng.random();
        let r = uniform(&mut rng, ratio_band(&config.claims, *severity));
        if u < p {
            accidents[k] = true;
            claims.push(SynthClaim {
                claim: claim((r * profile.ins_sum).round(), true),
                intended: *severity,
            });
        }
    }
    probabilities[3] = 1.0 - probabilities[..3].iter().map(|p| 1.0 - p).product::<f64>();

    if rng.random::<f64>() < config.claims.zero_loss_rate {
        claims.push(SynthClaim {
            claim: claim(0.0, true),
            intended: Severity::None,
        });
    }
    let u: f64 = rng.random();
    let r = uniform(&mut rng, [config.claims.weak_ratio[0], config.claims.strong_ratio[1]]);
    if u < config.claims.non_culprit_rate {
        claims.push(SynthClaim {
            claim: claim((r * profile.ins_sum).round(), false),
            intended: Severity::None,
        });
    }

    SynthDriver {
        profile,
        oracle,
        probabilities,
        accidents,
        claims,
    }
}

/// Draws the whole population (profiles, oracle features, outcomes and
/// claims). Event logs are generated separately per driver.
pub fn generate_population(config: &SynthConfig, calendar: &HolidayCalendar) -> Result<Population> {
    config.validate()?;
    let window = config.window()?;
    let planted_raw = config.planted_raw()?;
    let drivers = (0..config.n_drivers)
        .into_par_iter()
        .map(|i| generate_driver(config, &planted_raw, &window, calendar, i))
        .collect();
    Ok(Population {
        config: config.clone(),
        window,
        planted_raw,
        drivers,
    })
}

/// Event log of one driver over the configured period, time-ordered.
pub fn generate_events(
    config: &SynthConfig,
    calendar: &HolidayCalendar,
    index: usize,
    profile: &DriverProfile,
) -> Result<Vec<EventPackage>> {
    let tz = config.tz()?;
    let mut rng = driver_rng(config.seed, index, true);
    let hours = WeightedIndex::new(profile.hour_weights).map_err(|e| Error::Config(e.to_string()))?;
    let speed = profile.leg_speed();
    let km_per_degree = EARTH_RADIUS_KM * std::f64::consts::PI / 180.0;
    let dev = profile.device_id.as_str();

    let mut events = Vec::new();
    let mut lat = profile.home.lat;
    let mut busy_until = tz
        .from_local_datetime(&config.start_date.and_hms_opt(0, 0, 0).expect("midnight"))
        .single()
        .expect("fixed offset")
        .with_timezone(&Utc);
    let mut peaked = [false; 4];

    for d in 0..config.days() {
        let date = config.start_date + Duration::days(d);
        let rate = if calendar.is_business_day(date) {
            profile.trips_per_day
        } else {
            profile.trips_per_day * profile.holiday_factor
        };
        let n = if rate > 0.0 {
            Poisson::new(rate).expect("positive rate").sample(&mut rng) as usize
        } else {
            0
        };
        let mut starts: Vec<chrono::DateTime<Utc>> = (0..n)
            .map(|_| {
                let hour = hours.sample(&mut rng) as u32;
                let second = rng.random_range(0..3600);
                let local = date.and_hms_opt(hour, 0, 0).expect("valid hour") + Duration::seconds(second);
                tz.from_local_datetime(&local).single().expect("fixed offset").with_timezone(&Utc)
            })
            .collect();
        starts.sort();

        for planned in starts {
            let t_on = planned.max(busy_until + Duration::seconds(120));
            let length = profile.sample_trip_length(&mut rng);
            let legs = (length / profile.leg_km).ceil().max(1.0) as usize;
            let leg_km = length / legs as f64;
            let idle = rng.random_range(profile.idle_s[0]..=profile.idle_s[1]);
            let t_move = t_on + Duration::seconds(idle);
            let north = lat <= profile.home.lat;
            let step = leg_km / km_per_degree * if north { 1.0 } else { -1.0 };

            events.push(EventPackage::new(dev, t_on, Payload::IgnitionOn));
            events.push(EventPackage::new(dev, t_move, Payload::Position(GeoPoint { lat, lon: profile.home.lon })));
            let mut t = t_move;
            for j in 0..legs {
                let mut v = speed.sample(&mut rng);
                if j == 0 {
                    // The first leg of the first trip in each slice runs at the
                    // slice's peak speed, when that leg fits in its start hour.
                    let local = t.with_timezone(&tz);
                    let slice = Slice::of_hour(local.hour()).index();
                    let peak = profile.peaks[slice];
                    let dur = (leg_km / peak * 3600.0).round().max(1.0) as i64;
                    let end_local = (t + Duration::seconds(dur)).with_timezone(&tz);
                    if !peaked[slice] && end_local.hour() == local.hour() && end_local.date_naive() == local.date_naive() {
                        peaked[slice] = true;
                        v = peak;
                    }
                }
                events.push(EventPackage::new(dev, t, Payload::Speed { speed_kph: v, position: None }));
                t += Duration::seconds((leg_km / v * 3600.0).round().max(1.0) as i64);
                lat += step;
                events.push(EventPackage::new(dev, t, Payload::Position(GeoPoint { lat, lon: profile.home.lon })));
            }
            events.push(EventPackage::new(dev, t, Payload::IgnitionOff));

            let span = (t - t_move).num_seconds();
            for band in AccelBand::ALL {
                let mean = profile.accel_per_100km[band.index()] * length / 100.0;
                if mean <= 0.0 {
                    continue;
                }
                let count = Poisson::new(mean).expect("positive mean").sample(&mut rng) as usize;
                for _ in 0..count {
                    let at = t_move + Duration::seconds(rng.random_range(0..=span));
                    let (lo, hi) = band.interval_g();
                    let hi = if hi.is_finite() { hi } else { lo + 0.3 };
                    let g = rng.random_range(lo..hi);
                    let (axis, accel_g) = match band {
                        AccelBand::A1 | AccelBand::A2 | AccelBand::A3 => (Axis::Longitudinal, g),
                        AccelBand::D1 | AccelBand::D2 | AccelBand::D3 => (Axis::Longitudinal, -g),
                        _ => (Axis::Lateral, if rng.random::<bool>() { g } else { -g }),
                    };
                    events.push(EventPackage::new(dev, at, Payload::Acceleration { axis, accel_g, position: None }));
                }
            }
            busy_until = t;
        }
    }
    events.sort_by_key(|e| e.timestamp);
    Ok(events)
}

/// Oracle design for `columns` with the population's realised target.
pub fn oracle_design(pop: &Population, target: Target, columns: &[impl AsRef<str>]) -> Result<DesignMatrix> {
    let names: Vec<String> = columns.iter().map(|c| c.as_ref().to_string()).collect();
    let cols = names
        .iter()
        .map(|n| {
            pop.drivers
                .iter()
                .map(|d| d.oracle.get(n).ok_or_else(|| Error::InvalidArgument(format!("unknown feature `{n}`"))))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let y = pop.drivers.iter().map(|d| pop.target_value(d, target)).collect();
    Ok(DesignMatrix::from_columns(names, cols, y)?)
}

impl Population {
    pub fn target_value(&self, d: &SynthDriver, target: Target) -> u8 {
        (match target {
            Target::Any => d.accidents.iter().any(|&a| a),
            Target::Weak => d.accidents[0],
            Target::Medium => d.accidents[1],
            Target::Strong => d.accidents[2],
        }) as u8
    }

    /// Coefficients of the logistic projection of the true `any`
    /// probability onto `columns`. `any` is the union of the severity
    /// events, which is not itself logistic in the features.
    pub fn any_pseudo_truth(&self, columns: &[impl AsRef<str>]) -> Result<BTreeMap<String, f64>> {
        let design = oracle_design(self, Target::Any, columns)?;
        let probs: Vec<f64> = self.drivers.iter().map(|d| d.probabilities[3]).collect();
        let beta = fit_expected(&design, &probs, &FitOptions::default())?;
        Ok(design.column_names().into_iter().zip(beta).collect())
    }

    /// True coefficients for a target, restricted to `columns`: planted
    /// values for severities, the projection for `any`.
    pub fn truth(&self, target: Target, columns: &[impl AsRef<str>]) -> Result<BTreeMap<String, f64>> {
        match target {
            Target::Any => self.any_pseudo_truth(columns),
            t => Ok(self.planted_raw.get(t.as_str()).cloned().unwrap_or_default()),
        }
    }

    pub fn claims(&self) -> Vec<ClaimRecord> {
        self.drivers
            .iter()
            .flat_map(|d| d.claims.iter().map(|c| c.claim.clone()))
            .collect()
    }

    /// Oracle feature rows for every driver over the lifetime window.
    pub fn oracle_records(&self) -> Vec<crate::features::FeatureRecord> {
        self.drivers
            .iter()
            .map(|d| crate::features::FeatureRecord {
                device_id: d.profile.device_id.clone(),
                window_kind: WindowKind::Lifetime,
                window_start: self.window.start.to_rfc3339(),
                values: d.oracle,
                quality: QualityFlags::default(),
            })
            .collect()
    }

    /// Digest of all driver profiles.
    pub fn profiles_sha256(&self) -> String {
        let mut buf = Vec::new();
        for d in &self.drivers {
            buf.extend_from_slice(serde_json::to_string(&d.profile).expect("profile serializes").as_bytes());
            buf.push(b'\n');
        }
        crate::io::sha256_hex(&buf)
    }
}

/// Population mean and standard deviation (n − 1) of oracle features over
/// `n` drivers, used to freeze the `moments` table of a config.
pub fn population_moments(config: &SynthConfig, calendar: &HolidayCalendar, n: usize, seed: u64) -> Result<BTreeMap<String, Moment>> {
    let mut cfg = config.clone();
    cfg.n_drivers = n;
    cfg.seed = seed;
    cfg.planted.clear();
    let pop = generate_population(&cfg, calendar)?;
    Ok(FeatureValues::NAMES
        .iter()
        .map(|&name| {
            let v: Vec<f64> = pop.drivers.iter().map(|d| d.oracle.get(name).expect("catalog name")).collect();
            let mean = v.iter().sum::<f64>() / n as f64;
            let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
            (name.to_string(), Moment { mean, sd })
        })
        .collect())
}
