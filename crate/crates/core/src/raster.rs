//! Raster domain types: the observed scene stack, the coarse reanalysis
//! forcing, and the per-pixel feature raster.

use std::path::Path;

use serde_json::Value;

use crate::container::Container;
use crate::error::{Error, Result, Violation};

pub const MAX_DAYS: usize = 366;
pub const MIN_TEMP_K: f32 = 180.0;
pub const MAX_TEMP_K: f32 = 360.0;

pub const KIND_STACK: &str = "scene-stack";
pub const KIND_ERA5: &str = "era5";
pub const KIND_FEATURES: &str = "features";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridShape {
    pub n_days: usize,
    pub height: usize,
    pub width: usize,
}

impl GridShape {
    pub fn new(n_days: usize, height: usize, width: usize) -> Result<Self> {
        if n_days == 0 || height == 0 || width == 0 {
            return Err(Error::invalid("grid shape", Violation::ZeroDimension, None));
        }
        if n_days > MAX_DAYS {
            return Err(Error::invalid("grid shape", Violation::TooManyDays, None));
        }
        Ok(GridShape {
            n_days,
            height,
            width,
        })
    }

    pub fn n_pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn len(&self) -> usize {
        self.n_days * self.n_pixels()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn check_days(context: &'static str, days: &[u16]) -> Result<()> {
    for (i, &d) in days.iter().enumerate() {
        if d == 0 || d as usize > MAX_DAYS {
            return Err(Error::invalid(context, Violation::DayOutOfRange, Some(i)));
        }
        if i > 0 && days[i - 1] >= d {
            return Err(Error::invalid(context, Violation::DaysNotIncreasing, Some(i)));
        }
    }
    Ok(())
}

fn days_from_labels(context: &'static str, labels: &[u32]) -> Result<Vec<u16>> {
    labels
        .iter()
        .enumerate()
        .map(|(i, &d)| {
            u16::try_from(d).map_err(|_| Error::invalid(context, Violation::DayOutOfRange, Some(i)))
        })
        .collect()
}

/// A (days x height x width) cube of land surface temperature in kelvin.
/// NaN marks cells that were not observed or were cloud-masked.
#[derive(Debug, Clone)]
pub struct SceneStack {
    shape: GridShape,
    days: Vec<u16>,
    temps: Vec<f32>,
}

/// Bitwise equality, so two stacks with gaps in the same cells compare equal.
impl PartialEq for SceneStack {
    fn eq(&self, other: &Self) -> bool {
        self.shape == other.shape
            && self.days == other.days
            && self
                .temps
                .iter()
                .zip(&other.temps)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

impl SceneStack {
    pub fn new(days: Vec<u16>, height: usize, width: usize, temps: Vec<f32>) -> Result<Self> {
        let shape = GridShape::new(days.len(), height, width)?;
        check_days("scene stack", &days)?;
        if temps.len() != shape.len() {
            return Err(Error::invalid(
                "scene stack",
                Violation::LengthMismatch {
                    expected: shape.len(),
                    actual: temps.len(),
                },
                None,
            ));
        }
        for (i, &t) in temps.iter().enumerate() {
            if t.is_nan() {
                continue;
            }
            if !t.is_finite() {
                return Err(Error::invalid("scene stack", Violation::NonFinite, Some(i)));
            }
            if !(MIN_TEMP_K..=MAX_TEMP_K).contains(&t) {
                return Err(Error::invalid(
                    "scene stack",
                    Violation::TemperatureOutOfRange,
                    Some(i),
                ));
            }
        }
        Ok(SceneStack { shape, days, temps })
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn days(&self) -> &[u16] {
        &self.days
    }

    pub fn temps(&self) -> &[f32] {
        &self.temps
    }

    pub fn n_pixels(&self) -> usize {
        self.shape.n_pixels()
    }

    pub fn day_index(&self, doy: u16) -> Option<usize> {
        self.days.binary_search(&doy).ok()
    }

    pub fn day_values(&self, index: usize) -> &[f32] {
        let n = self.n_pixels();
        &self.temps[index * n..(index + 1) * n]
    }

    pub fn value(&self, day_index: usize, pixel: usize) -> f32 {
        self.temps[day_index * self.n_pixels() + pixel]
    }

    /// Fraction of the day's cells holding a finite temperature.
    pub fn valid_fraction(&self, day_index: usize) -> Result<f64> {
        if day_index >= self.shape.n_days {
            return Err(Error::Domain(format!(
                "day index {day_index} out of range for {} days",
                self.shape.n_days
            )));
        }
        Ok(valid_fraction_of(self.day_values(day_index)))
    }

    pub fn n_valid(&self, day_index: usize) -> usize {
        self.day_values(day_index).iter().filter(|v| !v.is_nan()).count()
    }

    /// Valid observations of one pixel as `(day_of_year, kelvin)` pairs.
    pub fn pixel_series(&self, pixel: usize) -> Vec<(u16, f64)> {
        let n = self.n_pixels();
        self.days
            .iter()
            .enumerate()
            .filter_map(|(i, &d)| {
                let t = self.temps[i * n + pixel];
                (!t.is_nan()).then_some((d, t as f64))
            })
            .collect()
    }

    /// Keeps only the listed day indices (which must be increasing).
    pub fn select_days(&self, indices: &[usize]) -> Result<SceneStack> {
        let n = self.n_pixels();
        let mut days = Vec::with_capacity(indices.len());
        let mut temps = Vec::with_capacity(indices.len() * n);
        for &i in indices {
            if i >= self.shape.n_days {
                return Err(Error::Domain(format!("day index {i} out of range")));
            }
            days.push(self.days[i]);
            temps.extend_from_slice(self.day_values(i));
        }
        SceneStack::new(days, self.shape.height, self.shape.width, temps)
    }

    /// Returns a copy with the given cells (day index, pixel) set invalid.
    pub fn without_cells(&self, cells: &[(usize, usize)]) -> SceneStack {
        let n = self.n_pixels();
        let mut temps = self.temps.clone();
        for &(d, p) in cells {
            temps[d * n + p] = f32::NAN;
        }
        SceneStack {
            shape: self.shape,
            days: self.days.clone(),
            temps,
        }
    }

    /// Folds a separate validity mask into the stack. The mask container
    /// must have the same dims; a cell is kept only where the mask holds a
    /// finite non-zero value.
    pub fn fold_mask(&self, mask: &Container) -> Result<SceneStack> {
        let dims = [self.shape.n_days, self.shape.height, self.shape.width];
        if mask.dims != dims {
            return Err(Error::invalid("mask", Violation::ShapeMismatch, None));
        }
        let temps = self
            .temps
            .iter()
            .zip(&mask.data)
            .map(|(&t, &m)| if m.is_finite() && m != 0.0 { t } else { f32::NAN })
            .collect();
        Ok(SceneStack {
            shape: self.shape,
            days: self.days.clone(),
            temps,
        })
    }

    pub fn to_container(&self) -> Container {
        Container::new(
            [self.shape.n_days, self.shape.height, self.shape.width],
            self.days.iter().map(|&d| d as u32).collect(),
            self.temps.clone(),
        )
        .with_kind(KIND_STACK)
    }

    /// Accepts any container whose kind is absent or `scene-stack`; the
    /// stack invariants are always enforced.
    pub fn from_container(c: Container) -> Result<Self> {
        if let Some(kind) = c.kind() {
            if kind != KIND_STACK {
                return Err(Error::Format(format!("expected a scene stack, found '{kind}'")));
            }
        }
        let days = days_from_labels("scene stack", &c.days)?;
        SceneStack::new(days, c.dims[1], c.dims[2], c.data)
    }
}

pub fn valid_fraction_of(values: &[f32]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().filter(|v| !v.is_nan()).count() as f64 / values.len() as f64
}

pub fn load_stack(path: impl AsRef<Path>) -> Result<SceneStack> {
    SceneStack::from_container(Container::load(path)?)
}

/// Validation happens at construction, so nothing invalid reaches the disk.
pub fn save_stack(stack: &SceneStack, path: impl AsRef<Path>) -> Result<()> {
    stack.to_container().save(path)
}

/// Daily coarse-resolution skin temperature, one series per coarse cell,
/// with each fine pixel mapped to its nearest cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Era5Series {
    days: Vec<u16>,
    height: usize,
    width: usize,
    n_cells: usize,
    values: Vec<f32>,
    cell_map: Vec<u32>,
}

impl Era5Series {
    pub fn new(
        days: Vec<u16>,
        n_cells: usize,
        values: Vec<f32>,
        height: usize,
        width: usize,
        cell_map: Vec<u32>,
    ) -> Result<Self> {
        GridShape::new(days.len(), height, width)?;
        if n_cells == 0 {
            return Err(Error::invalid("era5", Violation::ZeroDimension, None));
        }
        check_days("era5", &days)?;
        if values.len() != days.len() * n_cells {
            return Err(Error::invalid(
                "era5",
                Violation::LengthMismatch {
                    expected: days.len() * n_cells,
                    actual: values.len(),
                },
                None,
            ));
        }
        if cell_map.len() != height * width {
            return Err(Error::invalid(
                "era5 cell map",
                Violation::LengthMismatch {
                    expected: height * width,
                    actual: cell_map.len(),
                },
                None,
            ));
        }
        for (i, &v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::invalid("era5", Violation::NonFinite, Some(i)));
            }
            if !(MIN_TEMP_K..=MAX_TEMP_K).contains(&v) {
                return Err(Error::invalid("era5", Violation::TemperatureOutOfRange, Some(i)));
            }
        }
        if let Some(i) = cell_map.iter().position(|&c| c as usize >= n_cells) {
            return Err(Error::invalid("era5 cell map", Violation::BadCellIndex, Some(i)));
        }
        Ok(Era5Series {
            days,
            height,
            width,
            n_cells,
            values,
            cell_map,
        })
    }

    pub fn days(&self) -> &[u16] {
        &self.days
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn cell_map(&self) -> &[u32] {
        &self.cell_map
    }

    pub fn grid(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn day_index(&self, doy: u16) -> Option<usize> {
        self.days.binary_search(&doy).ok()
    }

    pub fn cell_value(&self, day_index: usize, cell: usize) -> f64 {
        self.values[day_index * self.n_cells + cell] as f64
    }

    /// Forcing value for a pixel on a day of year, if the day is covered.
    pub fn value(&self, doy: u16, pixel: usize) -> Option<f64> {
        self.day_index(doy)
            .map(|i| self.cell_value(i, self.cell_map[pixel] as usize))
    }

    /// Per-pixel forcing for one day of year.
    pub fn day_grid(&self, doy: u16) -> Result<Vec<f64>> {
        let i = self
            .day_index(doy)
            .ok_or_else(|| Error::Domain(format!("era5 series does not cover day {doy}")))?;
        Ok(self
            .cell_map
            .iter()
            .map(|&c| self.cell_value(i, c as usize))
            .collect())
    }

    /// Checks that every stack day has a forcing value and the grids agree.
    pub fn check_covers(&self, stack: &SceneStack) -> Result<()> {
        let shape = stack.shape();
        if (shape.height, shape.width) != (self.height, self.width) {
            return Err(Error::invalid("era5", Violation::ShapeMismatch, None));
        }
        if let Some(i) = stack.days().iter().position(|&d| self.day_index(d).is_none()) {
            return Err(Error::Domain(format!(
                "day axis mismatch: stack day {} (index {i}) has no era5 value",
                stack.days()[i]
            )));
        }
        Ok(())
    }

    pub fn to_container(&self) -> Container {
        let mut c = Container::new(
            [self.days.len(), 1, self.n_cells],
            self.days.iter().map(|&d| d as u32).collect(),
            self.values.clone(),
        )
        .with_kind(KIND_ERA5);
        c.set_meta("height", Value::from(self.height));
        c.set_meta("width", Value::from(self.width));
        c.set_meta("cell_map", Value::from(self.cell_map.clone()));
        c
    }

    pub fn from_container(c: Container) -> Result<Self> {
        c.expect_kind(KIND_ERA5)?;
        let usize_meta = |key: &str| {
            c.meta_value(key)
                .and_then(Value::as_u64)
                .map(|v| v as usize)
                .ok_or_else(|| Error::Format(format!("era5 container lacks '{key}'")))
        };
        let height = usize_meta("height")?;
        let width = usize_meta("width")?;
        let cell_map = c
            .meta_value("cell_map")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::Format("era5 container lacks 'cell_map'".into()))?
            .iter()
            .map(|v| {
                v.as_u64()
                    .and_then(|x| u32::try_from(x).ok())
                    .ok_or_else(|| Error::Format("bad cell_map entry".into()))
            })
            .collect::<Result<Vec<u32>>>()?;
        let days = days_from_labels("era5", &c.days)?;
        if c.dims[1] != 1 {
            return Err(Error::Format("era5 container must have dims [days, 1, cells]".into()));
        }
        Era5Series::new(days, c.dims[2], c.data, height, width, cell_map)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Era5Series::from_container(Container::load(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_container().save(path)
    }
}

/// Per-pixel feature vectors, band-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRaster {
    n_features: usize,
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl FeatureRaster {
    pub fn new(n_features: usize, height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if n_features == 0 || height == 0 || width == 0 {
            return Err(Error::invalid("features", Violation::ZeroDimension, None));
        }
        let expected = n_features * height * width;
        if data.len() != expected {
            return Err(Error::invalid(
                "features",
                Violation::LengthMismatch {
                    expected,
                    actual: data.len(),
                },
                None,
            ));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid("features", Violation::NonFinite, Some(i)));
        }
        Ok(FeatureRaster {
            n_features,
            height,
            width,
            data,
        })
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn grid(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn n_pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn band(&self, f: usize) -> &[f32] {
        let n = self.n_pixels();
        &self.data[f * n..(f + 1) * n]
    }

    pub fn pixel(&self, pixel: usize) -> Vec<f64> {
        let n = self.n_pixels();
        (0..self.n_features)
            .map(|f| self.data[f * n + pixel] as f64)
            .collect()
    }

    /// Row-major `(pixels.len() x F)` matrix of the selected pixels.
    pub fn rows(&self, pixels: &[usize]) -> Vec<f64> {
        let n = self.n_pixels();
        let f_dim = self.n_features;
        let mut out = vec![0.0; pixels.len() * f_dim];
        for (r, &p) in pixels.iter().enumerate() {
            for f in 0..f_dim {
                out[r * f_dim + f] = self.data[f * n + p] as f64;
            }
        }
        out
    }

    pub fn to_container(&self) -> Container {
        Container::new(
            [self.n_features, self.height, self.width],
            (1..=self.n_features as u32).collect(),
            self.data.clone(),
        )
        .with_kind(KIND_FEATURES)
    }

    pub fn from_container(c: Container) -> Result<Self> {
        c.expect_kind(KIND_FEATURES)?;
        FeatureRaster::new(c.dims[0], c.dims[1], c.dims[2], c.data)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        FeatureRaster::from_container(Container::load(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_container().save(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stack_2x2x2() -> SceneStack {
        SceneStack::new(
            vec![10, 20],
            2,
            2,
            vec![290.0, f32::NAN, 291.5, 300.25, 280.0, 281.0, 282.0, 283.0],
        )
        .unwrap()
    }

    #[test]
    fn save_load_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.lstc");
        let stack = stack_2x2x2();
        save_stack(&stack, &path).unwrap();
        let bytes_a = std::fs::read(&path).unwrap();
        let back = load_stack(&path).unwrap();
        assert_eq!(back.days(), stack.days());
        for (a, b) in back.temps().iter().zip(stack.temps()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        save_stack(&back, &path).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), bytes_a);
    }

    #[test]
    fn same_stack_saves_identical_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (dir.path().join("a.lstc"), dir.path().join("b.lstc"));
        save_stack(&stack_2x2x2(), &a).unwrap();
        save_stack(&stack_2x2x2(), &b).unwrap();
        assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
    }

    #[test]
    fn one_cell_stack_file_size() {
        let stack = SceneStack::new(vec![1], 1, 1, vec![300.0]).unwrap();
        let bytes = stack.to_container().to_bytes().unwrap();
        let header = r#"{"dims":[1,1,1],"days":[1],"dtype":"f32le","order":"day-major,row-major","meta":{"kind":"scene-stack"}}"#;
        assert_eq!(bytes.len(), 6 + 8 + header.len() + 4);
    }

    #[test]
    fn day_ordering_is_validated_before_write() {
        let err = SceneStack::new(vec![5, 5], 1, 1, vec![300.0, 300.0]).unwrap_err();
        match err {
            Error::Invalid { violation, index, .. } => {
                assert_eq!(violation, Violation::DaysNotIncreasing);
                assert_eq!(index, Some(1));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn loader_rejects_out_of_range_temperature_with_index() {
        let c = Container::new([1, 1, 3], vec![1], vec![300.0, 400.0, 290.0]);
        match SceneStack::from_container(c) {
            Err(Error::Invalid { violation, index, .. }) => {
                assert_eq!(violation.code(), "temperature_out_of_range");
                assert_eq!(index, Some(1));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn loader_rejects_bad_days() {
        let c = Container::new([1, 1, 1], vec![367], vec![300.0]);
        assert!(matches!(
            SceneStack::from_container(c),
            Err(Error::Invalid { violation: Violation::DayOutOfRange, .. })
        ));
        let c = Container::new([1, 1, 1], vec![0], vec![300.0]);
        assert!(SceneStack::from_container(c).is_err());
    }

    #[test]
    fn valid_fraction_examples() {
        let all_nan = SceneStack::new(vec![1], 2, 2, vec![f32::NAN; 4]).unwrap();
        assert_eq!(all_nan.valid_fraction(0).unwrap(), 0.0);
        let full = SceneStack::new(vec![1], 2, 2, vec![300.0; 4]).unwrap();
        assert_eq!(full.valid_fraction(0).unwrap(), 1.0);
        let one_nan = SceneStack::new(vec![1], 2, 2, vec![300.0, f32::NAN, 300.0, 300.0]).unwrap();
        assert_eq!(one_nan.valid_fraction(0).unwrap(), 0.75);
        assert!(one_nan.valid_fraction(1).is_err());
    }

    #[test]
    fn mask_is_folded_in() {
        let stack = SceneStack::new(vec![1], 1, 3, vec![300.0, 301.0, 302.0]).unwrap();
        let mask = Container::new([1, 1, 3], vec![1], vec![1.0, 0.0, f32::NAN]);
        let folded = stack.fold_mask(&mask).unwrap();
        assert_eq!(folded.temps()[0], 300.0);
        assert!(folded.temps()[1].is_nan());
        assert!(folded.temps()[2].is_nan());
    }

    #[test]
    fn era5_round_trip_and_lookup() {
        let e = Era5Series::new(vec![1, 2], 2, vec![280.0, 281.0, 282.0, 283.0], 1, 3, vec![0, 1, 1]).unwrap();
        let back = Era5Series::from_container(
            Container::from_bytes(&e.to_container().to_bytes().unwrap()).unwrap(),
        )
        .unwrap();
        assert_eq!(back, e);
        assert_eq!(e.value(2, 2), Some(283.0));
        assert_eq!(e.value(3, 0), None);
        assert!(Era5Series::new(vec![1], 1, vec![f32::NAN], 1, 1, vec![0]).is_err());
        assert!(Era5Series::new(vec![1], 1, vec![280.0], 1, 1, vec![4]).is_err());
    }

    #[test]
    fn feature_rows_are_pixel_major() {
        let f = FeatureRaster::new(2, 1, 2, vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let rows = f.rows(&[1, 0]);
        assert_eq!(rows.len(), 4);
        assert!((rows[0] - 0.2).abs() < 1e-7 && (rows[1] - 0.4).abs() < 1e-7);
        assert!(FeatureRaster::new(1, 1, 1, vec![f32::NAN]).is_err());
    }
}
