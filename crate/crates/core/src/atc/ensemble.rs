use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{atc_forward, DeficiencyReport, Eatc};
use crate::container::Container;
use crate::error::{Error, Result, Violation};
use crate::raster::{Era5Series, MAX_DAYS};

pub const ENSEMBLE_KIND: &str = "atc-ensemble";
const PARAM_NAMES: [&str; 4] = ["C", "A", "phi", "b"];

/// Snapshot ensemble of per-pixel cycle parameters, stored snapshot-major.
#[derive(Debug, Clone, PartialEq)]
pub struct AtcEnsemble {
    height: usize,
    width: usize,
    snapshot_epochs: Vec<u32>,
    params: Vec<Eatc>,
}

/// Per-pixel ensemble statistics for one day.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleDay {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl AtcEnsemble {
    pub fn new(height: usize, width: usize, snapshot_epochs: Vec<u32>, params: Vec<Eatc>) -> Result<Self> {
        let j = snapshot_epochs.len();
        if height == 0 || width == 0 {
            return Err(Error::invalid("ensemble", Violation::ZeroDimension, None));
        }
        if j < 2 {
            return Err(Error::invalid(
                "ensemble",
                Violation::Other(format!("needs at least 2 snapshots, got {j}")),
                None,
            ));
        }
        if params.len() != j * height * width {
            return Err(Error::invalid(
                "ensemble",
                Violation::LengthMismatch {
                    expected: j * height * width,
                    actual: params.len(),
                },
                None,
            ));
        }
        if let Some(i) = params.iter().position(|p| !p.is_finite()) {
            return Err(Error::invalid("ensemble", Violation::NonFinite, Some(i)));
        }
        Ok(AtcEnsemble {
            height,
            width,
            snapshot_epochs,
            params,
        })
    }

    /// A degenerate ensemble of `copies` identical snapshots.
    pub fn replicate(height: usize, width: usize, pixels: &[Eatc], copies: usize) -> Result<Self> {
        let params = (0..copies).flat_map(|_| pixels.iter().copied()).collect();
        AtcEnsemble::new(height, width, (1..=copies as u32).collect(), params)
    }

    pub fn grid(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn n_pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn n_snapshots(&self) -> usize {
        self.snapshot_epochs.len()
    }

    pub fn snapshot_epochs(&self) -> &[u32] {
        &self.snapshot_epochs
    }

    pub fn snapshot(&self, j: usize) -> &[Eatc] {
        let n = self.n_pixels();
        &self.params[j * n..(j + 1) * n]
    }

    pub fn last_snapshot(&self) -> &[Eatc] {
        self.snapshot(self.n_snapshots() - 1)
    }

    /// Only the final snapshot, duplicated so the result is still a valid
    /// ensemble with zero spread.
    pub fn collapse_to_last(&self) -> AtcEnsemble {
        let last = self.last_snapshot();
        let epoch = *self.snapshot_epochs.last().unwrap();
        AtcEnsemble {
            height: self.height,
            width: self.width,
            snapshot_epochs: vec![epoch, epoch],
            params: last.iter().chain(last).copied().collect(),
        }
    }

    /// Parameters of one pixel across all snapshots.
    pub fn pixel(&self, p: usize) -> impl Iterator<Item = &Eatc> + '_ {
        (0..self.n_snapshots()).map(move |j| &self.params[j * self.n_pixels() + p])
    }

    /// Snapshot-averaged parameters of every pixel; the phase is averaged on
    /// the circle.
    pub fn mean_params(&self) -> Vec<Eatc> {
        let j = self.n_snapshots() as f64;
        (0..self.n_pixels())
            .map(|p| {
                let (mut c, mut a, mut b, mut s, mut k) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for e in self.pixel(p) {
                    c += e.c;
                    a += e.a;
                    b += e.b;
                    let (sin, cos) = (super::OMEGA * e.phi).sin_cos();
                    s += sin;
                    k += cos;
                }
                Eatc {
                    c: c / j,
                    a: a / j,
                    phi: s.atan2(k) / super::OMEGA,
                    b: b / j,
                }
                .canonical()
            })
            .collect()
    }

    /// Restricts the ensemble to a rectangular window.
    pub fn crop(&self, row0: usize, col0: usize, height: usize, width: usize) -> Result<AtcEnsemble> {
        if row0 + height > self.height || col0 + width > self.width || height == 0 || width == 0 {
            return Err(Error::invalid("ensemble crop", Violation::ShapeMismatch, None));
        }
        let mut params = Vec::with_capacity(self.n_snapshots() * height * width);
        for j in 0..self.n_snapshots() {
            let snap = self.snapshot(j);
            for r in row0..row0 + height {
                params.extend_from_slice(&snap[r * self.width + col0..r * self.width + col0 + width]);
            }
        }
        AtcEnsemble::new(height, width, self.snapshot_epochs.clone(), params)
    }

    fn check_day(&self, day: u16, era5: &Era5Series) -> Result<Vec<f64>> {
        if day == 0 || day as usize > MAX_DAYS {
            return Err(Error::Domain(format!("day {day} outside [1, {MAX_DAYS}]")));
        }
        if era5.grid() != (self.height, self.width) {
            return Err(Error::invalid("era5", Violation::ShapeMismatch, None));
        }
        era5.day_grid(day)
    }

    /// Mean, sample sd and a central percentile interval of the snapshot
    /// predictions at every pixel.
    pub fn predict_day(&self, day: u16, era5: &Era5Series, level: f64) -> Result<EnsembleDay> {
        check_level(level, self.n_snapshots())?;
        let forcing = self.check_day(day, era5)?;
        let n = self.n_pixels();
        let mut out = EnsembleDay {
            mean: Vec::with_capacity(n),
            sd: Vec::with_capacity(n),
            lower: Vec::with_capacity(n),
            upper: Vec::with_capacity(n),
        };
        let tail = 0.5 * (1.0 - level);
        let mut preds = Vec::with_capacity(self.n_snapshots());
        for (p, &e) in forcing.iter().enumerate() {
            preds.clear();
            preds.extend(self.pixel(p).map(|q| atc_forward(q, day as f64, e)));
            let (mean, sd) = mean_sd(&preds);
            preds.sort_by(f64::total_cmp);
            out.mean.push(mean);
            out.sd.push(sd);
            out.lower.push(percentile_linear(&preds, tail).min(mean));
            out.upper.push(percentile_linear(&preds, 1.0 - tail).max(mean));
        }
        Ok(out)
    }

    pub fn save(&self, path: impl AsRef<Path>, deficiency: Option<&DeficiencyReport>) -> Result<()> {
        let path = path.as_ref();
        let mut files = serde_json::Map::new();
        for (k, name) in PARAM_NAMES.iter().enumerate() {
            let file = sibling(path, name);
            let data: Vec<f32> = self
                .params
                .iter()
                .map(|p| [p.c, p.a, p.phi, p.b][k] as f32)
                .collect();
            let mut c = Container::new(
                [self.n_snapshots(), self.height, self.width],
                self.snapshot_epochs.clone(),
                data,
            )
            .with_kind(ENSEMBLE_KIND);
            c.set_meta("parameter", serde_json::Value::from(*name));
            c.save(&file)?;
            let rel = file.file_name().unwrap().to_string_lossy().into_owned();
            files.insert(name.to_string(), serde_json::Value::from(rel));
        }
        let manifest = Manifest {
            kind: ENSEMBLE_KIND.to_string(),
            height: self.height,
            width: self.width,
            snapshot_epochs: self.snapshot_epochs.clone(),
            files,
            deficiency: deficiency.cloned(),
        };
        std::fs::write(path, serde_json::to_string_pretty(&manifest)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let manifest: Manifest = serde_json::from_slice(&std::fs::read(path)?)?;
        if manifest.kind != ENSEMBLE_KIND {
            return Err(Error::Format(format!("'{}' is not an ensemble manifest", path.display())));
        }
        let dir = path.parent().unwrap_or(Path::new("."));
        let mut planes = Vec::with_capacity(4);
        for name in PARAM_NAMES {
            let file = manifest
                .files
                .get(name)
                .and_then(|v| v.as_str())
                .ok_or_else(|| Error::Format(format!("ensemble manifest lacks parameter '{name}'")))?;
            let c = Container::load(dir.join(file))?;
            c.expect_kind(ENSEMBLE_KIND)?;
            if c.dims != [manifest.snapshot_epochs.len(), manifest.height, manifest.width] {
                return Err(Error::Format(format!("ensemble parameter '{name}' has dims {:?}", c.dims)));
            }
            planes.push(c.data);
        }
        let params = (0..planes[0].len())
            .map(|i| Eatc {
                c: planes[0][i] as f64,
                a: planes[1][i] as f64,
                phi: planes[2][i] as f64,
                b: planes[3][i] as f64,
            })
            .collect();
        AtcEnsemble::new(manifest.height, manifest.width, manifest.snapshot_epochs, params)
    }
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    kind: String,
    height: usize,
    width: usize,
    snapshot_epochs: Vec<u32>,
    files: serde_json::Map<String, serde_json::Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    deficiency: Option<DeficiencyReport>,
}

fn sibling(path: &Path, param: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "ensemble".into());
    path.with_file_name(format!("{stem}.{param}.lstc"))
}

fn check_level(level: f64, j: usize) -> Result<()> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Domain(format!("interval level {level} outside (0, 1)")));
    }
    let needed = (2.0 / (1.0 - level) - 1e-9).ceil() as usize;
    if j < needed {
        return Err(Error::Domain(format!(
            "a {level} interval needs at least {needed} snapshots, ensemble has {j}"
        )));
    }
    Ok(())
}

fn mean_sd(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let shift = x[0];
    let mean = shift + x.iter().map(|v| v - shift).sum::<f64>() / n;
    if x.len() < 2 {
        return (mean, 0.0);
    }
    let ss = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
    (mean, (ss / (n - 1.0)).sqrt())
}

/// Quantile of ascending `sorted` by linear interpolation between order
/// statistics at position `(n - 1) q`.
pub fn percentile_linear(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of an empty sample");
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Ensemble mean and sample standard deviation of the prediction grids.
pub fn ensemble_predict(ens: &AtcEnsemble, day: u16, era5: &Era5Series) -> Result<(Vec<f64>, Vec<f64>)> {
    let forcing = ens.check_day(day, era5)?;
    let mut mean = Vec::with_capacity(forcing.len());
    let mut sd = Vec::with_capacity(forcing.len());
    let mut preds = Vec::with_capacity(ens.n_snapshots());
    for (p, &e) in forcing.iter().enumerate() {
        preds.clear();
        preds.extend(ens.pixel(p).map(|q| atc_forward(q, day as f64, e)));
        let (m, s) = mean_sd(&preds);
        mean.push(m);
        sd.push(s);
    }
    Ok((mean, sd))
}

/// Central `level` percentile interval of the snapshot predictions.
pub fn atc_interval(ens: &AtcEnsemble, day: u16, era5: &Era5Series, level: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let d = ens.predict_day(day, era5, level)?;
    Ok((d.lower, d.upper))
}
