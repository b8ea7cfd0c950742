//! Synthetic experiments: random tensor trains, exact-SNR noise, fiber
//! masking, completion, and median aggregation over seeded trials.

use std::io::Write;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::completion::{complete, Combine, CompletionConfig};
use crate::error::HarnessError;
use crate::numlin::DEFAULT_RANK_TOL;
use crate::pattern::{mask_apply, random_pattern, validate};
use crate::subspace::SubspaceMethod;
use crate::tensor::{validate_ranks, DenseTensor, TTDecomposition};

/// Train with independent standard normal core entries.
pub fn random_tt(shape: &[usize], ranks: &[usize], seed: u64) -> Result<TTDecomposition, HarnessError> {
    validate_ranks(shape, ranks)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..shape.len())
        .map(|n| {
            (0..ranks[n] * shape[n] * ranks[n + 1])
                .map(|_| StandardNormal.sample(&mut rng))
                .collect()
        })
        .collect();
    Ok(TTDecomposition::from_flat(shape, ranks, data)?)
}

/// Adds i.i.d. Gaussian noise rescaled so that `20 log10(||X|| / ||E||)`
/// equals `snr_db` exactly. An infinite SNR returns `t` unchanged.
pub fn add_noise(t: &DenseTensor, snr_db: f64, seed: u64) -> Result<DenseTensor, HarnessError> {
    if t.values().iter().any(|v| !v.is_finite()) {
        return Err(HarnessError::NonFinite);
    }
    let norm = t.frobenius_norm();
    if norm == 0.0 {
        return Err(HarnessError::ZeroReference);
    }
    if snr_db == f64::INFINITY {
        return Ok(t.clone());
    }
    if snr_db.is_nan() {
        return Err(HarnessError::InvalidSpec("SNR is NaN".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise: Vec<f64> = (0..t.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
    let noise_norm = noise.iter().map(|v| v * v).sum::<f64>().sqrt();
    let scale = norm * 10f64.powf(-snr_db / 20.0) / noise_norm;
    let values = t.values().iter().zip(&noise).map(|(x, e)| x + scale * e).collect();
    Ok(DenseTensor::new(t.shape().to_vec(), values)?)
}

/// `||a - b||_F / ||a||_F`.
pub fn relative_error(a: &DenseTensor, b: &DenseTensor) -> Result<f64, HarnessError> {
    if a.shape() != b.shape() {
        return Err(HarnessError::ShapeMismatch(a.shape().to_vec(), b.shape().to_vec()));
    }
    let norm = a.frobenius_norm();
    if norm == 0.0 {
        return Err(HarnessError::ZeroReference);
    }
    let diff: f64 = a.values().iter().zip(b.values()).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(diff.sqrt() / norm)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub shape: Vec<usize>,
    pub ranks_true: Vec<usize>,
    pub ranks_fit: Vec<usize>,
    /// `f64::INFINITY` means noiseless.
    pub snr_db: Vec<f64>,
    pub missing_rate: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub method: SubspaceMethod,
    pub combine: Combine,
    pub tol: f64,
}

impl ExperimentSpec {
    pub fn new(shape: Vec<usize>, ranks: Vec<usize>) -> Self {
        Self {
            shape,
            ranks_true: ranks.clone(),
            ranks_fit: ranks,
            snr_db: vec![f64::INFINITY],
            missing_rate: vec![0.0],
            trials: 1,
            seed: 0,
            method: SubspaceMethod::Intersection,
            combine: Combine::None,
            tol: DEFAULT_RANK_TOL,
        }
    }

    fn check(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::InvalidSpec(m));
        if self.trials == 0 {
            return bad("trials must be >= 1".into());
        }
        if self.shape.len() < 3 {
            return bad("completion needs at least three modes".into());
        }
        if let Some(r) = self.missing_rate.iter().find(|r| !(0.0..1.0).contains(*r)) {
            return bad(format!("missing rate {r} not in [0, 1)"));
        }
        if self.snr_db.iter().any(|s| s.is_nan()) {
            return bad("SNR is NaN".into());
        }
        validate_ranks(&self.shape, &self.ranks_true)?;
        validate_ranks(&self.shape, &self.ranks_fit)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub snr_db: f64,
    pub missing_rate: f64,
    pub trial: usize,
    pub method: SubspaceMethod,
    pub combine: Combine,
    /// `None` when completion failed.
    pub relative_error: Option<f64>,
    /// Time spent inside `complete`.
    pub wall_time_s: f64,
    pub valid_pattern: bool,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub snr_db: f64,
    pub missing_rate: f64,
    /// Median over trials with a valid pattern and a successful completion.
    pub median_error: Option<f64>,
    pub median_wall_time_s: Option<f64>,
    pub counted: usize,
    pub invalid_patterns: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub trials: Vec<TrialResult>,
    pub summary: Vec<CellSummary>,
}

pub const CSV_HEADER: &str = "snr_db,missing_rate,trial,method,combine,relative_error,wall_time_s,valid_pattern";

impl SweepResult {
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{CSV_HEADER}")?;
        for t in &self.trials {
            let err = t.relative_error.map_or_else(|| "NaN".to_string(), |e| format!("{e:e}"));
            writeln!(
                out,
                "{},{},{},{},{},{},{:.6},{}",
                t.snr_db, t.missing_rate, t.trial, t.method, t.combine, err, t.wall_time_s, t.valid_pattern
            )?;
        }
        Ok(())
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Stable per-trial seed: splitmix64 chained over the seed and the three
/// indices, so adding grid points leaves every other trial unchanged.
pub fn trial_seed(seed: u64, snr_index: usize, rate_index: usize, trial: usize) -> u64 {
    [snr_index, rate_index, trial]
        .iter()
        .fold(splitmix64(seed), |h, &i| splitmix64(h ^ i as u64))
}

/// Sub-seeds for the train, the noise and the pattern of one trial.
fn stream_seeds(trial: u64) -> (u64, u64, u64) {
    (splitmix64(trial ^ 1), splitmix64(trial ^ 2), splitmix64(trial ^ 3))
}

/// Runs one trial; never fails, failures are recorded in the result.
pub fn run_trial(spec: &ExperimentSpec, snr_index: usize, rate_index: usize, trial: usize) -> TrialResult {
    let snr_db = spec.snr_db[snr_index];
    let missing_rate = spec.missing_rate[rate_index];
    let mut result = TrialResult {
        snr_db,
        missing_rate,
        trial,
        method: spec.method,
        combine: spec.combine,
        relative_error: None,
        wall_time_s: 0.0,
        valid_pattern: false,
        failure: None,
    };
    let (tt_seed, noise_seed, pattern_seed) = stream_seeds(trial_seed(spec.seed, snr_index, rate_index, trial));
    let order = spec.shape.len();
    let prepared = (|| -> Result<_, String> {
        let clean = random_tt(&spec.shape, &spec.ranks_true, tt_seed).map_err(|e| e.to_string())?.to_dense();
        let noisy = add_noise(&clean, snr_db, noise_seed).map_err(|e| e.to_string())?;
        let pattern = random_pattern(&spec.shape[..order - 1], missing_rate, pattern_seed).map_err(|e| e.to_string())?;
        let masked = mask_apply(&noisy, &pattern).map_err(|e| e.to_string())?;
        Ok((clean, pattern, masked))
    })();
    let (clean, pattern, masked) = match prepared {
        Ok(v) => v,
        Err(e) => {
            result.failure = Some(e);
            return result;
        }
    };
    let cfg = CompletionConfig {
        ranks: spec.ranks_fit.clone(),
        method: spec.method,
        combine: spec.combine,
        tol: spec.tol,
        validate_first: false,
        solver: Default::default(),
    };
    let start = Instant::now();
    let outcome = complete(&masked, &pattern, &cfg);
    result.wall_time_s = start.elapsed().as_secs_f64();
    match outcome {
        Ok(c) => {
            result.valid_pattern = c.diagnostics.validation.overall_valid;
            match relative_error(&clean, &c.tt.to_dense()) {
                Ok(e) => result.relative_error = Some(e),
                Err(e) => result.failure = Some(e.to_string()),
            }
        }
        Err(e) => {
            result.valid_pattern = validate(&pattern, &spec.ranks_fit).is_ok_and(|r| r.overall_valid);
            result.failure = Some(e.to_string());
        }
    }
    result
}

/// Median of a non-empty slice (mean of the two middle values for even length).
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
}

fn summarize(snr_db: f64, missing_rate: f64, trials: &[TrialResult]) -> CellSummary {
    let counted: Vec<&TrialResult> = trials
        .iter()
        .filter(|t| t.valid_pattern && t.relative_error.is_some())
        .collect();
    let errors: Vec<f64> = counted.iter().filter_map(|t| t.relative_error).collect();
    let times: Vec<f64> = counted.iter().map(|t| t.wall_time_s).collect();
    CellSummary {
        snr_db,
        missing_rate,
        median_error: median(&errors),
        median_wall_time_s: median(&times),
        counted: counted.len(),
        invalid_patterns: trials.iter().filter(|t| !t.valid_pattern).count(),
        failures: trials.iter().filter(|t| t.relative_error.is_none()).count(),
    }
}

/// Every `(snr, rate, trial)` combination in grid order, trials run one after
/// another so that wall times are not distorted by each other.
pub fn run_sweep(spec: &ExperimentSpec) -> Result<SweepResult, HarnessError> {
    spec.check()?;
    let mut trials = Vec::new();
    let mut summary = Vec::new();
    for (si, &snr) in spec.snr_db.iter().enumerate() {
        for (ri, &rate) in spec.missing_rate.iter().enumerate() {
            let cell: Vec<TrialResult> = (0..spec.trials).map(|t| run_trial(spec, si, ri, t)).collect();
            summary.push(summarize(snr, rate, &cell));
            trials.extend(cell);
        }
    }
    Ok(SweepResult { trials, summary })
}
