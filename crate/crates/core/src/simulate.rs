//! Synthetic n-of-1 data from explicit potential-outcome mechanisms, and the
//! forced-assignment Monte Carlo oracle for mean potential outcomes.
//!
//! Weekly outcomes follow
//! `Y_w = baseline + Σ_k φ_k (Y_{w-k} − baseline) + offset + ε_w`, where the
//! offset comes from the carryover kernel given the period's treatment level,
//! the week within the period and earlier periods' treatments. Within each
//! period both potential trajectories are generated from the same observed
//! history and the same noise draws; the observed trajectory is the one for
//! the assigned level.

use chrono::{Days, NaiveDate};
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::PeriodPlan;
use crate::error::{Error, Result};
use crate::seed::{self, stream};
use crate::series::{DailyRecord, StartDay, WeeklyPoint, WeeklySeries};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PeriodLengths {
    Fixed { length: usize },
    Uniform { min: usize, max: usize },
}

impl PeriodLengths {
    pub fn max(&self) -> usize {
        match *self {
            PeriodLengths::Fixed { length } => length,
            PeriodLengths::Uniform { max, .. } => max,
        }
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> usize {
        match *self {
            PeriodLengths::Fixed { length } => length,
            PeriodLengths::Uniform { min, max } => rng.random_range(min..=max),
        }
    }
}

/// Value of a within-period profile at week `j` (1-based); the last entry
/// persists past the end and an empty profile is 1.
fn profile_at(profile: &[f64], j: usize) -> f64 {
    profile
        .get(j.min(profile.len()).wrapping_sub(1))
        .copied()
        .unwrap_or(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Kernel {
    /// Treated weeks gain `effect × week_shape[j]`; every week also gains
    /// `lag_coefficients[k−1]` when the period k back was treated.
    Additive {
        effect: f64,
        week_shape: Vec<f64>,
        lag_coefficients: Vec<f64>,
    },
    /// Treatment effect profile by week chosen from the two previous
    /// periods' treatments; control weeks receive no offset.
    HistoryTable {
        /// Previous period untreated.
        after_untreated: Vec<f64>,
        /// Previous period treated, the one before it untreated.
        after_one_treated: Vec<f64>,
        /// Both previous periods treated.
        after_two_treated: Vec<f64>,
    },
}

impl Kernel {
    pub fn none() -> Kernel {
        Kernel::Additive {
            effect: 0.0,
            week_shape: vec![],
            lag_coefficients: vec![],
        }
    }

    /// Offset at week `j` of a period under `level`, given earlier periods'
    /// treatments (`history[0]` is the immediately preceding period).
    pub fn offset(&self, level: u8, j: usize, history: &[u8]) -> f64 {
        let prior = |k: usize| history.get(k).copied().unwrap_or(0);
        match self {
            Kernel::Additive {
                effect,
                week_shape,
                lag_coefficients,
            } => {
                let carry: f64 = lag_coefficients
                    .iter()
                    .enumerate()
                    .map(|(k, c)| c * f64::from(prior(k)))
                    .sum();
                f64::from(level) * effect * profile_at(week_shape, j) + carry
            }
            Kernel::HistoryTable {
                after_untreated,
                after_one_treated,
                after_two_treated,
            } => {
                if level == 0 {
                    return 0.0;
                }
                let profile = match (prior(0), prior(1)) {
                    (0, _) => after_untreated,
                    (_, 0) => after_one_treated,
                    _ => after_two_treated,
                };
                profile_at(profile, j)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Number of periods (τ).
    pub n_periods: usize,
    pub period_lengths: PeriodLengths,
    pub baseline: f64,
    /// Autoregressive coefficients on lagged outcomes (φ_1, φ_2, ...).
    pub ar: Vec<f64>,
    pub kernel: Kernel,
    /// Log-odds change in treatment propensity per unit of the last
    /// pre-period outcome above baseline; ignored when randomized.
    pub confounding: f64,
    /// Treatment propensity at baseline.
    pub base_propensity: f64,
    /// Fair-coin assignment of every period.
    pub randomized: bool,
    pub noise_sd: f64,
    pub seed: u64,
    /// Weight (kg) that outcome 0 corresponds to in daily exports.
    pub center_kg: f64,
    /// Probability that a daily weight is dropped in daily exports.
    pub missing_rate: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n_periods: 100,
            period_lengths: PeriodLengths::Uniform { min: 2, max: 8 },
            baseline: 0.0,
            ar: vec![],
            kernel: Kernel::none(),
            confounding: 0.0,
            base_propensity: 0.5,
            randomized: false,
            noise_sd: 1.0,
            seed: 0,
            center_kg: 80.0,
            missing_rate: 0.0,
        }
    }
}

/// Largest eigenvalue modulus of the AR companion matrix.
pub fn spectral_radius(ar: &[f64]) -> f64 {
    let p = ar.len();
    if p == 0 {
        return 0.0;
    }
    let mut m = DMatrix::<f64>::zeros(p, p);
    for (k, &phi) in ar.iter().enumerate() {
        m[(0, k)] = phi;
    }
    for i in 1..p {
        m[(i, i - 1)] = 1.0;
    }
    m.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_periods == 0 {
            return bad("n_periods must be positive".into());
        }
        match self.period_lengths {
            PeriodLengths::Fixed { length: 0 } => return bad("period length must be positive".into()),
            PeriodLengths::Uniform { min, max } if min == 0 || min > max => {
                return bad(format!("invalid period length range {min}..={max}"))
            }
            _ => {}
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return bad(format!("noise sd must be finite and non-negative, got {}", self.noise_sd));
        }
        if !(0.0..1.0).contains(&self.missing_rate) {
            return bad(format!("missing rate must lie in [0, 1), got {}", self.missing_rate));
        }
        if !(self.base_propensity > 0.0 && self.base_propensity < 1.0) {
            return bad(format!("base propensity must lie in (0, 1), got {}", self.base_propensity));
        }
        let rho = spectral_radius(&self.ar);
        if rho.is_nan() || rho >= 1.0 {
            return bad(format!("autoregression is not stable (spectral radius {rho:.4})"));
        }
        Ok(())
    }

    fn propensity(&self, last_outcome: Option<f64>) -> f64 {
        if self.randomized {
            return 0.5;
        }
        let p0 = self.base_propensity;
        let lift = last_outcome.map_or(0.0, |y| self.confounding * (y - self.baseline));
        1.0 / (1.0 + (-((p0 / (1.0 - p0)).ln() + lift)).exp())
    }
}

/// Everything the simulator knows and the analyzer must not see.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HiddenTruth {
    pub config: SimConfig,
    pub period_lengths: Vec<usize>,
    pub assignments: Vec<u8>,
    /// Active days per week (out of 7) in each period.
    pub active_days: Vec<u8>,
    /// `potential[w][a]`: potential outcome of week w under level a for its period.
    pub potential: Vec<[f64; 2]>,
    pub observed: Vec<f64>,
    pub propensities: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub series: WeeklySeries,
    pub plan: PeriodPlan,
    pub truth: HiddenTruth,
}

const LOW_DAYS: [u8; 3] = [0, 1, 2];
const HIGH_DAYS: [u8; 3] = [5, 6, 7];

pub fn simulate_series(config: &SimConfig) -> Result<Simulation> {
    config.validate()?;
    let mut period_rng = seed::rng(config.seed, &[stream::SIM_PERIODS]);
    let mut assign_rng = seed::rng(config.seed, &[stream::SIM_ASSIGN]);
    let mut noise_rng = seed::rng(config.seed, &[stream::SIM_NOISE]);
    let noise = Normal::new(0.0, config.noise_sd).map_err(|e| Error::Config(e.to_string()))?;

    let mut lengths = Vec::with_capacity(config.n_periods);
    let mut assignments: Vec<u8> = Vec::with_capacity(config.n_periods);
    let mut active_days = Vec::with_capacity(config.n_periods);
    let mut propensities = Vec::with_capacity(config.n_periods);
    let mut observed: Vec<f64> = Vec::new();
    let mut potential: Vec<[f64; 2]> = Vec::new();

    for _ in 0..config.n_periods {
        let m = config.period_lengths.draw(&mut period_rng);
        let p = config.propensity(observed.last().copied());
        let a = u8::from(assign_rng.random_bool(p));
        let pool = if a == 1 { HIGH_DAYS } else { LOW_DAYS };
        let previous = active_days.last().copied();
        let choices: Vec<u8> = pool.iter().copied().filter(|&d| Some(d) != previous).collect();
        let days = choices[period_rng.random_range(0..choices.len())];
        // history[0] is the immediately preceding period
        let history: Vec<u8> = assignments.iter().rev().copied().collect();

        let start = observed.len();
        let mut branches = [Vec::with_capacity(m), Vec::with_capacity(m)];
        for j in 1..=m {
            let eps = noise.sample(&mut noise_rng);
            for (level, branch) in branches.iter_mut().enumerate() {
                let past = |k: usize| -> Option<f64> {
                    // k weeks back from week j of this period
                    if k < j {
                        Some(branch[j - 1 - k])
                    } else {
                        (start + j - 1).checked_sub(k).map(|w| observed[w])
                    }
                };
                let ar: f64 = config
                    .ar
                    .iter()
                    .enumerate()
                    .map(|(i, phi)| phi * past(i + 1).map_or(0.0, |y| y - config.baseline))
                    .sum();
                let y = config.baseline + ar + config.kernel.offset(level as u8, j, &history) + eps;
                branch.push(y);
            }
        }
        potential.extend(branches[0].iter().zip(&branches[1]).map(|(&y0, &y1)| [y0, y1]));
        observed.extend_from_slice(&branches[a as usize]);
        lengths.push(m);
        assignments.push(a);
        active_days.push(days);
        propensities.push(p);
    }

    let exposure: Vec<f64> = lengths
        .iter()
        .zip(&active_days)
        .flat_map(|(&m, &d)| std::iter::repeat_n(f64::from(d) / 7.0, m))
        .collect();
    let series = WeeklySeries {
        points: observed
            .iter()
            .zip(&exposure)
            .enumerate()
            .map(|(i, (&y, &x))| WeeklyPoint {
                week_index: i + 1,
                outcome: Some(y),
                exposure: Some(x),
                imputed_outcome: false,
                imputed_exposure: false,
                days_recorded: 7,
            })
            .collect(),
        center: config.center_kg,
        start_day: StartDay::default(),
    };
    let plan = PeriodPlan::from_lengths(&exposure, &lengths)?.with_labels(assignments.clone())?;
    Ok(Simulation {
        series,
        plan,
        truth: HiddenTruth {
            config: config.clone(),
            period_lengths: lengths,
            assignments,
            active_days,
            potential,
            observed,
            propensities,
        },
    })
}

/// First Monday of 2012, the first date of daily exports.
pub fn daily_start() -> NaiveDate {
    NaiveDate::from_ymd_opt(2012, 1, 2).expect("valid date")
}

/// Daily records for a simulation: every day of week w weighs
/// `center_kg + Y_w`, and the first `active_days` days of each week are active.
/// Weights are dropped independently at `missing_rate`.
pub fn to_daily(sim: &Simulation) -> Vec<DailyRecord> {
    let cfg = &sim.truth.config;
    let mut rng = seed::rng(cfg.seed, &[stream::SIM_MISSING]);
    let days_per_week: Vec<u8> = sim
        .truth
        .period_lengths
        .iter()
        .zip(&sim.truth.active_days)
        .flat_map(|(&m, &d)| std::iter::repeat_n(d, m))
        .collect();
    let mut records = Vec::with_capacity(7 * sim.truth.observed.len());
    for (w, (&y, &active)) in sim.truth.observed.iter().zip(&days_per_week).enumerate() {
        for d in 0..7u8 {
            let date = daily_start() + Days::new((7 * w + d as usize) as u64);
            let dropped = cfg.missing_rate > 0.0 && rng.random_bool(cfg.missing_rate);
            records.push(DailyRecord {
                date,
                weight: (!dropped).then_some(cfg.center_kg + y),
                activity: Some(d < active),
            });
        }
    }
    records
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthWeek {
    pub week: usize,
    pub e1: f64,
    pub e0: f64,
    pub apte: f64,
    pub se_e1: f64,
    pub se_e0: f64,
    pub se_apte: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthTrajectory {
    pub weeks: Vec<TruthWeek>,
    pub n_reps: usize,
}

impl TruthTrajectory {
    pub fn apte(&self) -> Vec<f64> {
        self.weeks.iter().map(|w| w.apte).collect()
    }
}

fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let m = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

/// Per replication, a dataset is generated under the natural assignment
/// mechanism and every period's potential outcome under each forced level is
/// read off its branch; the replicate value at (a, j) averages them over
/// periods lasting at least j weeks. Means and standard errors are taken
/// across replications.
pub fn oracle_apte(config: &SimConfig, horizon: usize, n_reps: usize) -> Result<TruthTrajectory> {
    if n_reps < 100 {
        return Err(Error::Config(format!("oracle needs at least 100 replications, got {n_reps}")));
    }
    config.validate()?;
    let support = config.period_lengths.max();
    let horizon = if horizon > support {
        log::warn!("oracle horizon {horizon} exceeds the longest possible period; truncated to {support}");
        support
    } else {
        horizon
    };
    let reps: Vec<Vec<Option<[f64; 3]>>> = (0..n_reps)
        .into_par_iter()
        .map(|r| {
            let cfg = SimConfig {
                seed: seed::derive(config.seed, &[stream::SIM_REPLICATE, r as u64]),
                ..config.clone()
            };
            let sim = simulate_series(&cfg)?;
            Ok(replicate_means(&sim.truth, horizon))
        })
        .collect::<Result<_>>()?;

    let mut weeks = Vec::with_capacity(horizon);
    for j in 0..horizon {
        let vals: Vec<[f64; 3]> = reps.iter().filter_map(|r| r[j]).collect();
        if vals.len() < 2 {
            log::warn!("week {} is reached in fewer than two replications; horizon truncated", j + 1);
            break;
        }
        let col = |i: usize| mean_se(&vals.iter().map(|v| v[i]).collect::<Vec<_>>());
        let (e1, se_e1) = col(1);
        let (e0, se_e0) = col(0);
        let (apte, se_apte) = col(2);
        weeks.push(TruthWeek {
            week: j + 1,
            e1,
            e0,
            apte,
            se_e1,
            se_e0,
            se_apte,
        });
    }
    Ok(TruthTrajectory { weeks, n_reps })
}

/// Per week: mean Y⁰, mean Y¹ and their difference over periods reaching it.
fn replicate_means(truth: &HiddenTruth, horizon: usize) -> Vec<Option<[f64; 3]>> {
    let mut sums = vec![[0.0; 2]; horizon];
    let mut counts = vec![0usize; horizon];
    let mut start = 0;
    for &m in &truth.period_lengths {
        for j in 0..m.min(horizon) {
            let po = truth.potential[start + j];
            sums[j][0] += po[0];
            sums[j][1] += po[1];
            counts[j] += 1;
        }
        start += m;
    }
    sums.iter()
        .zip(&counts)
        .map(|(s, &c)| {
            (c > 0).then(|| {
                let e0 = s[0] / c as f64;
                let e1 = s[1] / c as f64;
                [e0, e1, e1 - e0]
            })
        })
        .collect()
}

pub const SCENARIOS: [&str; 7] = [
    "null",
    "confounded-null",
    "additive-effect",
    "slow-decay",
    "slow-onset",
    "randomized-N1RT",
    "carryover",
];

/// Canned configurations by name.
pub fn scenario(name: &str) -> Option<SimConfig> {
    let base = SimConfig::default();
    let cfg = match name {
        "null" => SimConfig { ar: vec![0.5], ..base },
        "confounded-null" => SimConfig {
            n_periods: 200,
            period_lengths: PeriodLengths::Uniform { min: 4, max: 12 },
            ar: vec![0.7],
            confounding: 2.0,
            ..base
        },
        "additive-effect" => SimConfig {
            ar: vec![0.5],
            kernel: Kernel::Additive {
                effect: -0.3,
                week_shape: vec![],
                lag_coefficients: vec![],
            },
            noise_sd: 0.5,
            ..base
        },
        // treated weeks follow 6/j against a constant control level of 1
        "slow-decay" => SimConfig {
            n_periods: 200,
            period_lengths: PeriodLengths::Fixed { length: 3 },
            baseline: 1.0,
            kernel: Kernel::Additive {
                effect: 5.0,
                week_shape: vec![1.0, 0.4, 0.2],
                lag_coefficients: vec![],
            },
            ..base
        },
        "slow-onset" => SimConfig {
            n_periods: 200,
            period_lengths: PeriodLengths::Fixed { length: 3 },
            baseline: 1.0,
            kernel: Kernel::Additive {
                effect: 5.0,
                week_shape: vec![0.2, 0.4, 1.0],
                lag_coefficients: vec![],
            },
            ..base
        },
        "randomized-N1RT" => SimConfig {
            n_periods: 200,
            period_lengths: PeriodLengths::Uniform { min: 4, max: 10 },
            ar: vec![0.5],
            kernel: Kernel::Additive {
                effect: 1.0,
                week_shape: vec![],
                lag_coefficients: vec![0.3],
            },
            randomized: true,
            ..base
        },
        // treated-week means 6, 6/j and 2 after zero, one and two treated periods
        "carryover" => SimConfig {
            n_periods: 200,
            period_lengths: PeriodLengths::Fixed { length: 3 },
            baseline: 1.0,
            kernel: Kernel::HistoryTable {
                after_untreated: vec![5.0],
                after_one_treated: vec![5.0, 2.0, 1.0],
                after_two_treated: vec![1.0],
            },
            randomized: true,
            ..base
        },
        _ => return None,
    };
    Some(cfg)
}

pub fn scenario_library() -> Vec<(&'static str, SimConfig)> {
    SCENARIOS
        .iter()
        .map(|&n| (n, scenario(n).expect("listed scenario exists")))
        .collect()
}
