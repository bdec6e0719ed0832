//! Validation strategies, the metric suite and the station air-temperature
//! regression.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::container::Container;
use crate::error::{Error, Result, Violation};
use crate::raster::{FeatureRaster, Era5Series, SceneStack};
use crate::recon::{reconstruct_days, train, PipelineConfig, ReconstructionResult, RECON_KIND};
use crate::seed::stream_rng;
use crate::synth::GroundTruth;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    #[serde(rename = "MAE")]
    pub mae: f64,
    #[serde(rename = "RMSE")]
    pub rmse: f64,
    /// Missing when the truth has no variance.
    #[serde(rename = "R2")]
    pub r2: Option<f64>,
    #[serde(rename = "R2_missing_reason", default, skip_serializing_if = "Option::is_none")]
    pub r2_missing_reason: Option<String>,
    #[serde(rename = "Bias")]
    pub bias: f64,
    #[serde(rename = "Cov@95", default, skip_serializing_if = "Option::is_none")]
    pub cov95: Option<f64>,
    pub n: usize,
}

pub fn compute_metrics(pred: &[f64], truth: &[f64], intervals: Option<(&[f64], &[f64])>) -> Result<Metrics> {
    let n = truth.len();
    if pred.len() != n {
        return Err(Error::invalid(
            "metrics input",
            Violation::LengthMismatch { expected: n, actual: pred.len() },
            None,
        ));
    }
    if n < 2 {
        return Err(Error::InsufficientData(format!("metrics need at least 2 values, got {n}")));
    }
    if let Some(i) = pred.iter().chain(truth).position(|v| !v.is_finite()) {
        return Err(Error::invalid("metrics input", Violation::NonFinite, Some(i % n)));
    }
    let nf = n as f64;
    let (mut abs, mut sq, mut sum) = (0.0, 0.0, 0.0);
    for (p, t) in pred.iter().zip(truth) {
        let e = p - t;
        abs += e.abs();
        sq += e * e;
        sum += e;
    }
    let tmean = truth.iter().sum::<f64>() / nf;
    let sst: f64 = truth.iter().map(|t| (t - tmean).powi(2)).sum();
    let (r2, r2_missing_reason) = if sst > 0.0 {
        (Some(1.0 - sq / sst), None)
    } else {
        (None, Some("truth has zero variance".to_string()))
    };
    let cov95 = match intervals {
        None => None,
        Some((lo, hi)) => {
            if lo.len() != n || hi.len() != n {
                return Err(Error::invalid("metrics intervals", Violation::ShapeMismatch, None));
            }
            let inside = (0..n).filter(|&i| lo[i] <= truth[i] && truth[i] <= hi[i]).count();
            Some(inside as f64 / nf)
        }
    };
    Ok(Metrics {
        mae: abs / nf,
        rmse: (sq / nf).sqrt(),
        r2,
        r2_missing_reason,
        bias: sum / nf,
        cov95,
        n,
    })
}

/// Clear-sky test set built by laying another day's cloud pattern over an
/// almost clear day.
#[derive(Debug, Clone, PartialEq)]
pub struct HypotheticalMask {
    /// Target day with the masked cells set to NaN.
    pub training: Vec<f32>,
    pub test_pixels: Vec<usize>,
    pub truth: Vec<f64>,
}

/// Cloud pattern of a day: true where the day has no valid value.
pub fn cloud_pattern(day: &[f32]) -> Vec<bool> {
    day.iter().map(|v| v.is_nan()).collect()
}

pub fn hypothetical_mask(target: &[f32], pattern: &[bool]) -> Result<HypotheticalMask> {
    let n = target.len();
    if pattern.len() != n {
        return Err(Error::invalid("cloud pattern", Violation::ShapeMismatch, None));
    }
    let n_valid = target.iter().filter(|v| !v.is_nan()).count();
    if (n_valid as f64) < 0.99 * n as f64 {
        return Err(Error::Domain(format!(
            "target day must be at least 99% valid, found {:.3}",
            n_valid as f64 / n as f64
        )));
    }
    let mut training = target.to_vec();
    let mut test_pixels = Vec::new();
    for p in 0..n {
        if pattern[p] && !target[p].is_nan() {
            test_pixels.push(p);
            training[p] = f32::NAN;
        }
    }
    let remaining = n_valid - test_pixels.len();
    if (remaining as f64) < 0.01 * n as f64 {
        return Err(Error::InsufficientData(format!(
            "pattern leaves {remaining} of {n} training pixels (< 1%)"
        )));
    }
    let truth = test_pixels.iter().map(|&p| target[p] as f64).collect();
    Ok(HypotheticalMask {
        training,
        test_pixels,
        truth,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Holds out `round(fraction * n_valid)` valid pixels of a heavily clouded
/// day, uniformly without replacement. The draw depends only on
/// `(seed, day)`.
pub fn holdout_split(day_values: &[f32], day: u16, fraction: f64, seed: u64) -> Result<Split> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::Domain(format!("holdout fraction {fraction} outside [0, 1]")));
    }
    let mut valid: Vec<usize> = (0..day_values.len()).filter(|&p| !day_values[p].is_nan()).collect();
    if valid.len() < 10 {
        return Err(Error::InsufficientData(format!(
            "day {day} has {} valid pixels, need at least 10",
            valid.len()
        )));
    }
    let cloud = 1.0 - valid.len() as f64 / day_values.len() as f64;
    if cloud <= 0.8 {
        return Err(Error::Domain(format!(
            "day {day} cloud cover {cloud:.3} is not above 0.8"
        )));
    }
    let k = (fraction * valid.len() as f64).round() as usize;
    let mut rng = stream_rng(seed, "holdout", day as u64);
    for i in 0..k {
        let j = rng.random_range(i..valid.len());
        valid.swap(i, j);
    }
    let mut test = valid[..k].to_vec();
    let mut train = valid[k..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    Ok(Split { train, test })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LstSource {
    Observed,
    Reconstructed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationRow {
    pub station_id: String,
    pub pixel_row: usize,
    pub pixel_col: usize,
    pub day: u16,
    pub air_temp_k: f64,
    pub ndvi: f64,
    pub elev_m: f64,
    pub sol: f64,
    pub sza_deg: f64,
    pub lst_source: LstSource,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct StationTable {
    pub rows: Vec<StationRow>,
}

pub const STATION_HEADER: [&str; 10] = [
    "station_id",
    "pixel_row",
    "pixel_col",
    "day",
    "air_temp_k",
    "ndvi",
    "elev_m",
    "sol",
    "sza_deg",
    "lst_source",
];

impl StationTable {
    pub fn new(rows: Vec<StationRow>) -> Result<Self> {
        let t = StationTable { rows };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, r) in self.rows.iter().enumerate() {
            if ![r.air_temp_k, r.ndvi, r.elev_m, r.sol, r.sza_deg].iter().all(|v| v.is_finite()) {
                return Err(Error::invalid("station table", Violation::NonFinite, Some(i)));
            }
            if !(200.0..=340.0).contains(&r.air_temp_k) {
                return Err(Error::invalid("station table", Violation::TemperatureOutOfRange, Some(i)));
            }
            if !(0.0..=90.0).contains(&r.sza_deg) {
                return Err(Error::invalid(
                    "station table",
                    Violation::Other("solar zenith angle outside [0, 90]".into()),
                    Some(i),
                ));
            }
            if !(1..=366).contains(&r.day) {
                return Err(Error::invalid("station table", Violation::DayOutOfRange, Some(i)));
            }
        }
        Ok(())
    }

    pub fn from_reader(r: impl Read) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        if header != STATION_HEADER {
            return Err(Error::Format(format!(
                "station header must be `{}`, found `{}`",
                STATION_HEADER.join(","),
                header.join(",")
            )));
        }
        let rows = rdr.deserialize().collect::<std::result::Result<Vec<StationRow>, _>>()?;
        StationTable::new(rows)
    }

    pub fn to_writer(&self, w: impl Write) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        for r in &self.rows {
            wtr.serialize(r)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_reader(std::fs::File::open(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_writer(std::io::BufWriter::new(std::fs::File::create(path)?))
    }

    pub fn filter(&self, source: LstSource) -> Vec<&StationRow> {
        self.rows.iter().filter(|r| r.lst_source == source).collect()
    }
}

pub const AIRTEMP_COLUMNS: [&str; 6] = ["lst", "ndvi", "elev_m", "sol", "sza_deg", "intercept"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AirTempModel {
    /// Coefficients of lst, ndvi, elevation, solar factor and zenith angle.
    pub alpha: [f64; 5],
    pub intercept: f64,
    /// Columns that were identically zero and got a zero coefficient.
    #[serde(default)]
    pub dropped: Vec<String>,
}

fn design_row(r: &StationRow, lst: f64) -> [f64; 6] {
    [lst, r.ndvi, r.elev_m, r.sol, r.sza_deg, 1.0]
}

/// Least squares by modified Gram-Schmidt on norm-scaled columns with one
/// reorthogonalization pass. All-zero columns get a zero coefficient; any
/// other dependent column is an error naming the columns it depends on.
pub fn least_squares(cols: &[Vec<f64>], names: &[&str], y: &[f64]) -> Result<(Vec<f64>, Vec<usize>)> {
    let p = cols.len();
    let n = y.len();
    let mut q: Vec<Vec<f64>> = Vec::new();
    let mut kept: Vec<usize> = Vec::new();
    let mut dropped = Vec::new();
    let mut r = vec![vec![0.0; p]; p]; // r[k][j] for kept index k
    let mut scale = vec![0.0; p];
    for j in 0..p {
        if cols[j].len() != n {
            return Err(Error::invalid("design column", Violation::LengthMismatch { expected: n, actual: cols[j].len() }, Some(j)));
        }
        let norm = cols[j].iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            dropped.push(j);
            continue;
        }
        scale[j] = norm;
        let mut v: Vec<f64> = cols[j].iter().map(|x| x / norm).collect();
        let mut proj = vec![0.0; kept.len()];
        for _ in 0..2 {
            for (k, qk) in q.iter().enumerate() {
                let d: f64 = qk.iter().zip(&v).map(|(a, b)| a * b).sum();
                proj[k] += d;
                v.iter_mut().zip(qk).for_each(|(vi, qi)| *vi -= d * qi);
            }
        }
        let rest = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if rest < 1e-10 {
            let with: Vec<&str> = kept
                .iter()
                .zip(&proj)
                .filter(|(_, c)| c.abs() > 1e-8)
                .map(|(&k, _)| names[k])
                .collect();
            return Err(Error::Domain(format!(
                "design matrix is rank deficient: column `{}` is collinear with [{}]",
                names[j],
                with.join(", ")
            )));
        }
        v.iter_mut().for_each(|x| *x /= rest);
        let kk = kept.len();
        for (k, c) in proj.into_iter().enumerate() {
            r[k][kk] = c;
        }
        r[kk][kk] = rest;
        q.push(v);
        kept.push(j);
    }
    // R beta' = Q^T y on the kept columns.
    let m = kept.len();
    let qty: Vec<f64> = q.iter().map(|qk| qk.iter().zip(y).map(|(a, b)| a * b).sum()).collect();
    let mut bs = vec![0.0; m];
    for i in (0..m).rev() {
        let mut s = qty[i];
        for k in i + 1..m {
            s -= r[i][k] * bs[k];
        }
        bs[i] = s / r[i][i];
    }
    let mut beta = vec![0.0; p];
    for (i, &j) in kept.iter().enumerate() {
        beta[j] = bs[i] / scale[j];
    }
    Ok((beta, dropped))
}

pub const MIN_AIRTEMP_ROWS: usize = 20;

/// Ordinary least squares of air temperature on
/// `[lst, ndvi, elev, sol, sza, 1]`.
pub fn fit_airtemp(rows: &[&StationRow], lst: &[f64]) -> Result<AirTempModel> {
    if rows.len() != lst.len() {
        return Err(Error::invalid(
            "air temperature fit",
            Violation::LengthMismatch { expected: rows.len(), actual: lst.len() },
            None,
        ));
    }
    if rows.len() < MIN_AIRTEMP_ROWS {
        return Err(Error::InsufficientData(format!(
            "air temperature fit needs at least {MIN_AIRTEMP_ROWS} rows, got {}",
            rows.len()
        )));
    }
    if let Some(i) = lst.iter().position(|v| !v.is_finite()) {
        return Err(Error::invalid("air temperature fit lst", Violation::NonFinite, Some(i)));
    }
    let design: Vec<[f64; 6]> = rows.iter().zip(lst).map(|(r, &l)| design_row(r, l)).collect();
    let cols: Vec<Vec<f64>> = (0..6).map(|j| design.iter().map(|d| d[j]).collect()).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.air_temp_k).collect();
    let (beta, dropped) = least_squares(&cols, &AIRTEMP_COLUMNS, &y)?;
    Ok(AirTempModel {
        alpha: [beta[0], beta[1], beta[2], beta[3], beta[4]],
        intercept: beta[5],
        dropped: dropped.into_iter().map(|j| AIRTEMP_COLUMNS[j].to_string()).collect(),
    })
}

pub fn predict_airtemp(model: &AirTempModel, row: &StationRow, lst: f64) -> f64 {
    let d = design_row(row, lst);
    model.alpha.iter().zip(&d).map(|(a, x)| a * x).sum::<f64>() + model.intercept
}

/// Day-major grid of model temperatures used as the reconstructed input to
/// the station regression.
#[derive(Debug, Clone, PartialEq)]
pub struct LstCube {
    pub days: Vec<u16>,
    pub n_pixels: usize,
    pub values: Vec<f64>,
}

impl LstCube {
    pub fn from_results(results: &[ReconstructionResult]) -> Self {
        LstCube {
            days: results.iter().map(|r| r.day).collect(),
            n_pixels: results.first().map_or(0, |r| r.mean.len()),
            values: results.iter().flat_map(|r| r.mean.iter().copied()).collect(),
        }
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        c.expect_kind(RECON_KIND)?;
        Ok(LstCube {
            days: c.days.iter().map(|&d| d as u16).collect(),
            n_pixels: c.plane_len(),
            values: c.data.iter().map(|&v| v as f64).collect(),
        })
    }

    pub fn get(&self, day: u16, pixel: usize) -> Option<f64> {
        let i = self.days.binary_search(&day).ok()?;
        (pixel < self.n_pixels).then(|| self.values[i * self.n_pixels + pixel])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ValidationConfig {
    /// Days at least this valid are clear-sky candidates.
    pub clear_threshold: f64,
    pub max_clear_days: usize,
    /// Days with a valid fraction below this are heavily clouded.
    pub heavy_valid_below: f64,
    pub holdout_fraction: f64,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        ValidationConfig {
            clear_threshold: 0.99,
            max_clear_days: 3,
            heavy_valid_below: 0.2,
            holdout_fraction: 0.2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyReport {
    pub strategy: String,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    #[serde(default)]
    pub days: Vec<u16>,
    /// Metric blocks keyed by what was evaluated.
    #[serde(default)]
    pub metrics: BTreeMap<String, Metrics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub airtemp_models: Option<BTreeMap<String, AirTempModel>>,
}

impl StrategyReport {
    fn skipped(strategy: &str, reason: impl Into<String>) -> Self {
        StrategyReport {
            strategy: strategy.into(),
            status: Status::Skipped,
            reason: Some(reason.into()),
            days: Vec::new(),
            metrics: BTreeMap::new(),
            airtemp_models: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub dataset: String,
    pub seed: u64,
    pub strategies: Vec<StrategyReport>,
}

pub const CLEAR_SKY: &str = "clear-sky";
pub const HEAVY_CLOUD: &str = "heavy-cloud";
pub const AIR_TEMPERATURE: &str = "air-temperature";

/// Held-out cells of one day with their true values.
#[derive(Debug, Clone)]
struct TestDay {
    day: u16,
    day_index: usize,
    pixels: Vec<usize>,
    truth: Vec<f64>,
}

fn clear_sky_days(stack: &SceneStack, cfg: &ValidationConfig, seed: u64) -> Result<Vec<TestDay>> {
    let n = stack.n_pixels() as f64;
    let frac: Vec<f64> = (0..stack.days().len()).map(|i| stack.n_valid(i) as f64 / n).collect();
    let mut targets: Vec<usize> = (0..frac.len()).filter(|&i| frac[i] >= cfg.clear_threshold).collect();
    let patterns: Vec<usize> = (0..frac.len()).filter(|&i| frac[i] < cfg.clear_threshold && frac[i] >= 0.01).collect();
    if targets.is_empty() || patterns.is_empty() {
        return Ok(Vec::new());
    }
    let mut rng = stream_rng(seed, "validation-clear", 0);
    for i in 0..targets.len().min(cfg.max_clear_days) {
        let j = rng.random_range(i..targets.len());
        targets.swap(i, j);
    }
    targets.truncate(cfg.max_clear_days);
    targets.sort_unstable();
    let mut out = Vec::new();
    for t in targets {
        let pattern = patterns[rng.random_range(0..patterns.len())];
        let m = hypothetical_mask(stack.day_values(t), &cloud_pattern(stack.day_values(pattern)))?;
        out.push(TestDay {
            day: stack.days()[t],
            day_index: t,
            pixels: m.test_pixels,
            truth: m.truth,
        });
    }
    Ok(out)
}

fn heavy_cloud_days(stack: &SceneStack, cfg: &ValidationConfig, seed: u64) -> Result<Vec<TestDay>> {
    let n = stack.n_pixels() as f64;
    let mut out = Vec::new();
    for (i, &day) in stack.days().iter().enumerate() {
        let nv = stack.n_valid(i);
        if nv as f64 / n >= cfg.heavy_valid_below || nv < 10 {
            continue;
        }
        let vals = stack.day_values(i);
        let s = holdout_split(vals, day, cfg.holdout_fraction, seed)?;
        out.push(TestDay {
            day,
            day_index: i,
            truth: s.test.iter().map(|&p| vals[p] as f64).collect(),
            pixels: s.test,
        });
    }
    Ok(out)
}

fn score(tests: &[TestDay], results: &BTreeMap<u16, ReconstructionResult>) -> Result<Metrics> {
    let (mut pred, mut truth, mut lo, mut hi) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for t in tests {
        let r = &results[&t.day];
        for (&p, &v) in t.pixels.iter().zip(&t.truth) {
            pred.push(r.mean[p]);
            lo.push(r.lower95[p]);
            hi.push(r.upper95[p]);
            truth.push(v);
        }
    }
    compute_metrics(&pred, &truth, Some((&lo, &hi)))
}

/// Fits both station models and reports each model's fit.
pub fn airtemp_validation(
    stations: &StationTable,
    stack: &SceneStack,
    recon: &LstCube,
) -> Result<(BTreeMap<String, Metrics>, BTreeMap<String, AirTempModel>)> {
    let (h, w) = (stack.shape().height, stack.shape().width);
    let mut metrics = BTreeMap::new();
    let mut models = BTreeMap::new();
    for (label, source) in [("observed-lst", LstSource::Observed), ("reconstructed-lst", LstSource::Reconstructed)] {
        let rows = stations.filter(source);
        let mut lst = Vec::with_capacity(rows.len());
        for (i, r) in rows.iter().enumerate() {
            if r.pixel_row >= h || r.pixel_col >= w {
                return Err(Error::invalid("station pixel", Violation::BadCellIndex, Some(i)));
            }
            let p = r.pixel_row * w + r.pixel_col;
            let v = match source {
                LstSource::Observed => stack
                    .day_index(r.day)
                    .map(|d| stack.value(d, p) as f64)
                    .filter(|v| !v.is_nan()),
                LstSource::Reconstructed => recon.get(r.day, p),
            };
            match v {
                Some(v) => lst.push(v),
                None => {
                    return Err(Error::InsufficientData(format!(
                        "station {} day {} has no {label} value at pixel ({}, {})",
                        r.station_id, r.day, r.pixel_row, r.pixel_col
                    )))
                }
            }
        }
        let model = fit_airtemp(&rows, &lst)?;
        let pred: Vec<f64> = rows.iter().zip(&lst).map(|(r, &l)| predict_airtemp(&model, r, l)).collect();
        let truth: Vec<f64> = rows.iter().map(|r| r.air_temp_k).collect();
        metrics.insert(label.to_string(), compute_metrics(&pred, &truth, None)?);
        models.insert(label.to_string(), model);
    }
    Ok((metrics, models))
}

/// Runs the three strategies. Clear-sky and heavy-cloud test cells are
/// withheld together and the pipeline is retrained once on what remains;
/// the station strategy uses the supplied reconstruction of the full stack.
#[allow(clippy::too_many_arguments)]
pub fn validate_all(
    dataset: &str,
    stack: &SceneStack,
    era5: &Era5Series,
    features: &FeatureRaster,
    stations: Option<&StationTable>,
    recon: Option<&LstCube>,
    pipeline: &PipelineConfig,
    cfg: &ValidationConfig,
    seed: u64,
) -> Result<ValidationReport> {
    let clear = clear_sky_days(stack, cfg, seed)?;
    let heavy = heavy_cloud_days(stack, cfg, seed)?;
    let mut strategies = Vec::new();

    let mut results = BTreeMap::new();
    if !clear.is_empty() || !heavy.is_empty() {
        let withheld: Vec<(usize, usize)> = clear
            .iter()
            .chain(&heavy)
            .flat_map(|t| t.pixels.iter().map(move |&p| (t.day_index, p)))
            .collect();
        let training = stack.without_cells(&withheld);
        tracing::info!(cells = withheld.len(), "retraining without validation cells");
        let trained = train(&training, era5, features, &pipeline.fit, &pipeline.gp, &pipeline.recon, seed)?;
        let mut days: Vec<u16> = clear.iter().chain(&heavy).map(|t| t.day).collect();
        days.sort_unstable();
        days.dedup();
        for r in reconstruct_days(&trained.atc.ensemble, &trained.gps, era5, features, &training, &days, &pipeline.recon)? {
            results.insert(r.day, r);
        }
    }

    for (name, tests, none_reason) in [
        (CLEAR_SKY, &clear, "no clear day with a usable cloud pattern from another day"),
        (HEAVY_CLOUD, &heavy, "no day above 80% cloud cover with at least 10 valid pixels"),
    ] {
        let n_test: usize = tests.iter().map(|t| t.pixels.len()).sum();
        if tests.is_empty() || n_test < 2 {
            strategies.push(StrategyReport::skipped(name, none_reason));
            continue;
        }
        let mut metrics = BTreeMap::new();
        metrics.insert("reconstruction".to_string(), score(tests, &results)?);
        strategies.push(StrategyReport {
            strategy: name.into(),
            status: Status::Ok,
            reason: None,
            days: tests.iter().map(|t| t.day).collect(),
            metrics,
            airtemp_models: None,
        });
    }

    strategies.push(match (stations, recon) {
        (None, _) => StrategyReport::skipped(AIR_TEMPERATURE, "no station table supplied"),
        (_, None) => StrategyReport::skipped(AIR_TEMPERATURE, "no reconstruction supplied"),
        (Some(st), Some(rc)) => {
            let (metrics, models) = airtemp_validation(st, stack, rc)?;
            let mut days: Vec<u16> = st.rows.iter().map(|r| r.day).collect();
            days.sort_unstable();
            days.dedup();
            StrategyReport {
                strategy: AIR_TEMPERATURE.into(),
                status: Status::Ok,
                reason: None,
                days,
                metrics,
                airtemp_models: Some(models),
            }
        }
    });

    Ok(ValidationReport {
        dataset: dataset.into(),
        seed,
        strategies,
    })
}

/// Coefficients used to plant station air temperature on synthetic data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantedAirTemp {
    pub alpha: [f64; 5],
    pub intercept: f64,
    pub noise_sd: f64,
}

impl Default for PlantedAirTemp {
    fn default() -> Self {
        PlantedAirTemp {
            alpha: [0.8, -2.0, -0.0065, 1.5, -0.05],
            intercept: 60.0,
            noise_sd: 1.0,
        }
    }
}

/// Stations at random pixels reporting every day of the truth calendar.
/// Rows on days the stack observes the pixel are flagged observed; all
/// others reconstructed. Air temperature is planted from the true surface
/// temperature.
pub fn synthetic_stations(
    truth: &GroundTruth,
    stack: &SceneStack,
    n_stations: usize,
    planted: &PlantedAirTemp,
    seed: u64,
) -> Result<StationTable> {
    let shape = stack.shape();
    let n = shape.n_pixels();
    if n_stations == 0 || n_stations > n {
        return Err(Error::Config(format!("station count {n_stations} must be in 1..={n}")));
    }
    let mut rng = stream_rng(seed, "stations", 0);
    let noise = Normal::new(0.0, planted.noise_sd).map_err(|e| Error::Config(e.to_string()))?;
    let mut pixels: Vec<usize> = (0..n).collect();
    for i in 0..n_stations {
        let j = rng.random_range(i..n);
        pixels.swap(i, j);
    }
    let mut rows = Vec::new();
    for (s, &p) in pixels[..n_stations].iter().enumerate() {
        let ndvi = rng.random_range(0.05..0.8);
        let elev = rng.random_range(0.0..200.0);
        for &day in &truth.days {
            let sol = 0.5 + 0.5 * (2.0 * std::f64::consts::PI * (day as f64 - 172.0) / 365.0).cos() + rng.random_range(-0.1..0.1);
            // Noon zenith angle at 40.7 N.
            let declination = -23.44 * (2.0 * std::f64::consts::PI * (day as f64 + 10.0) / 365.0).cos();
            let sza = (40.7 - declination).clamp(0.0, 90.0);
            let lst = truth.lst_day(day)?[p];
            let cov = [lst, ndvi, elev, sol, sza];
            let ta = planted.alpha.iter().zip(&cov).map(|(a, x)| a * x).sum::<f64>() + planted.intercept + noise.sample(&mut rng);
            let observed = stack
                .day_index(day)
                .map(|d| !stack.value(d, p).is_nan())
                .unwrap_or(false);
            rows.push(StationRow {
                station_id: format!("S{s:03}"),
                pixel_row: p / shape.width,
                pixel_col: p % shape.width,
                day,
                air_temp_k: ta.clamp(200.0, 340.0),
                ndvi,
                elev_m: elev,
                sol,
                sza_deg: sza,
                lst_source: if observed { LstSource::Observed } else { LstSource::Reconstructed },
            });
        }
    }
    StationTable::new(rows)
}
