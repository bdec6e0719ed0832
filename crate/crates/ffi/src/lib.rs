//! C interface. Every function returns a `DelagStatus`; on failure the
//! message is kept per thread and read back with `delag_last_error_message`.
//! Objects are opaque handles released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use delag_core::eval::compute_metrics;
use delag_core::geo::{crosstrack_ratio, overlap_fraction};
use delag_core::raster::{load_stack, Era5Series, FeatureRaster, SceneStack};
use delag_core::recon::{reconstruct_day, train, PipelineConfig, ReconstructionResult, Trained};
use delag_core::synth::{generate, SynthConfig};
use delag_core::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DelagStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    Validation = 5,
    Config = 6,
    Domain = 7,
    InsufficientData = 8,
    Numeric = 9,
    Panic = 10,
}

/// Per-pixel layers of a reconstructed day.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DelagLayer {
    Mean = 0,
    Lower = 1,
    Upper = 2,
    VarAtc = 3,
    VarGp = 4,
    /// NaN where the pixel was not observed.
    Observed = 5,
    /// Observations where present, model mean elsewhere.
    Seamless = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DelagMetrics {
    pub mae: f64,
    pub rmse: f64,
    /// NaN when the truth has no variance.
    pub r2: f64,
    pub bias: f64,
    /// NaN when no intervals were given.
    pub cov95: f64,
    pub n: usize,
}

/// Scene stack with its ERA5 series and static features.
pub struct DelagDataset {
    stack: SceneStack,
    era5: Era5Series,
    features: FeatureRaster,
}

/// Fitted cycle ensemble and per-day residual models.
pub struct DelagModel {
    trained: Trained,
    config: PipelineConfig,
}

/// One reconstructed day.
pub struct DelagDay {
    result: ReconstructionResult,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> DelagStatus {
    match e {
        Error::Io(_) => DelagStatus::Io,
        Error::Format(_) | Error::Truncated { .. } | Error::Json(_) | Error::Csv(_) => DelagStatus::Format,
        Error::Invalid { .. } => DelagStatus::Validation,
        Error::Config(_) => DelagStatus::Config,
        Error::Domain(_) => DelagStatus::Domain,
        Error::InsufficientData(_) => DelagStatus::InsufficientData,
        Error::Numeric(_) | Error::Diverged { .. } => DelagStatus::Numeric,
    }
}

enum Fail {
    Null(&'static str),
    Arg(String),
    Core(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Core(e)
    }
}

/// Runs `f`, turning errors and panics into a status plus stored message.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> DelagStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            DelagStatus::Ok
        }
        Ok(Err(Fail::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            DelagStatus::NullPointer
        }
        Ok(Err(Fail::Arg(msg))) => {
            set_error(format!("invalid argument: {msg}"));
            DelagStatus::InvalidArgument
        }
        Ok(Err(Fail::Core(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {msg}"));
            DelagStatus::Panic
        }
    }
}

unsafe fn borrow<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Null(what))
}

unsafe fn out_ptr<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or(Fail::Null(what))
}

unsafe fn path_arg(p: *const c_char, what: &'static str) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail::Arg(format!("{what} is not UTF-8")))?;
    Ok(PathBuf::from(s))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn delag_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Length in bytes of the last error message on this thread, without the
/// terminating NUL. Zero when the last call succeeded.
#[no_mangle]
pub extern "C" fn delag_last_error_length() -> usize {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(0, |c| c.as_bytes().len()))
}

/// Copies the last error message into `buf` (NUL-terminated, truncated to
/// fit). Returns the number of bytes written without the NUL, or -1 if
/// `buf` is null or `len` is zero.
///
/// # Safety
/// `buf` must point to at least `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn delag_last_error_message(buf: *mut c_char, len: usize) -> c_int {
    if buf.is_null() || len == 0 {
        return -1;
    }
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let bytes = e.as_ref().map_or(&[][..], |c| c.as_bytes());
        let n = bytes.len().min(len - 1);
        ptr::copy_nonoverlapping(bytes.as_ptr().cast(), buf, n);
        *buf.add(n) = 0;
        n as c_int
    })
}

/// Ratio of swept width to parallel length at `latitude_deg`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn delag_crosstrack_ratio(latitude_deg: f64, out: *mut f64) -> DelagStatus {
    guard(|| {
        *out_ptr(out, "out")? = crosstrack_ratio(latitude_deg)?;
        Ok(())
    })
}

/// Fraction of the parallel imaged twice per cycle.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn delag_overlap_fraction(latitude_deg: f64, out: *mut f64) -> DelagStatus {
    guard(|| {
        *out_ptr(out, "out")? = overlap_fraction(latitude_deg)?;
        Ok(())
    })
}

/// Loads a dataset from three container files.
///
/// # Safety
/// Paths must be NUL-terminated strings; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn delag_dataset_load(
    stack_path: *const c_char,
    era5_path: *const c_char,
    features_path: *const c_char,
    out: *mut *mut DelagDataset,
) -> DelagStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let stack = load_stack(path_arg(stack_path, "stack_path")?)?;
        let era5 = Era5Series::load(path_arg(era5_path, "era5_path")?)?;
        let features = FeatureRaster::load(path_arg(features_path, "features_path")?)?;
        era5.check_covers(&stack)?;
        *out = Box::into_raw(Box::new(DelagDataset { stack, era5, features }));
        Ok(())
    })
}

/// Generates a synthetic dataset with default settings on a
/// `height` x `width` grid.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn delag_dataset_generate(
    height: usize,
    width: usize,
    seed: u64,
    out: *mut *mut DelagDataset,
) -> DelagStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let cfg = SynthConfig {
            height,
            width,
            seed,
            era5_cell_size: SynthConfig::default().era5_cell_size.min(height.max(1)).min(width.max(1)),
            ..Default::default()
        };
        let d = generate(&cfg)?;
        *out = Box::into_raw(Box::new(DelagDataset {
            stack: d.stack,
            era5: d.era5,
            features: d.features,
        }));
        Ok(())
    })
}

/// Number of scenes and grid size.
///
/// # Safety
/// `ds` must be a live handle; outputs must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn delag_dataset_shape(
    ds: *const DelagDataset,
    n_days: *mut usize,
    height: *mut usize,
    width: *mut usize,
) -> DelagStatus {
    guard(|| {
        let shape = borrow(ds, "dataset")?.stack.shape();
        *out_ptr(n_days, "n_days")? = shape.n_days;
        *out_ptr(height, "height")? = shape.height;
        *out_ptr(width, "width")? = shape.width;
        Ok(())
    })
}

/// Copies the acquisition days (day of year) into `buf`.
///
/// # Safety
/// `ds` must be a live handle; `buf` must hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn delag_dataset_days(ds: *const DelagDataset, buf: *mut u16, len: usize) -> DelagStatus {
    guard(|| {
        let days = borrow(ds, "dataset")?.stack.days();
        if buf.is_null() {
            return Err(Fail::Null("buf"));
        }
        if len != days.len() {
            return Err(Fail::Arg(format!("buffer holds {len} values, need {}", days.len())));
        }
        ptr::copy_nonoverlapping(days.as_ptr(), buf, len);
        Ok(())
    })
}

/// # Safety
/// `ds` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn delag_dataset_free(ds: *mut DelagDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Fits the cycle ensemble and residual models. `config_json` holds
/// pipeline settings (`fit`, `gp`, `recon` objects) and may be null for
/// defaults.
///
/// # Safety
/// `ds` must be a live handle; `config_json` null or NUL-terminated;
/// `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn delag_model_train(
    ds: *const DelagDataset,
    config_json: *const c_char,
    seed: u64,
    out: *mut *mut DelagModel,
) -> DelagStatus {
    guard(|| {
        let ds = borrow(ds, "dataset")?;
        let out = out_ptr(out, "out")?;
        let config: PipelineConfig = if config_json.is_null() {
            PipelineConfig::default()
        } else {
            let text = CStr::from_ptr(config_json)
                .to_str()
                .map_err(|_| Fail::Arg("config_json is not UTF-8".into()))?;
            serde_json::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))?
        };
        config.fit.validate()?;
        config.gp.validate()?;
        let trained = train(&ds.stack, &ds.era5, &ds.features, &config.fit, &config.gp, &config.recon, seed)?;
        *out = Box::into_raw(Box::new(DelagModel { trained, config }));
        Ok(())
    })
}

/// # Safety
/// `m` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn delag_model_free(m: *mut DelagModel) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Reconstructs day of year `day` (1..=365) on the dataset grid.
///
/// # Safety
/// Handles must be live; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn delag_reconstruct_day(
    model: *const DelagModel,
    ds: *const DelagDataset,
    day: u16,
    out: *mut *mut DelagDay,
) -> DelagStatus {
    guard(|| {
        let m = borrow(model, "model")?;
        let ds = borrow(ds, "dataset")?;
        let out = out_ptr(out, "out")?;
        if !(1..=365).contains(&day) {
            return Err(Fail::Arg(format!("day {day} outside 1..=365")));
        }
        let result = reconstruct_day(
            &m.trained.atc.ensemble,
            m.trained.gps.get(day),
            &ds.era5,
            &ds.features,
            &ds.stack,
            day,
            &m.config.recon,
        )?;
        *out = Box::into_raw(Box::new(DelagDay { result }));
        Ok(())
    })
}

/// Number of pixels in each layer of `day`; zero for a null handle.
///
/// # Safety
/// `day` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn delag_day_len(day: *const DelagDay) -> usize {
    day.as_ref().map_or(0, |d| d.result.mean.len())
}

/// Copies one layer into `buf`, which must hold exactly
/// `delag_day_len(day)` values.
///
/// # Safety
/// `day` must be a live handle; `buf` must hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn delag_day_layer(day: *const DelagDay, layer: DelagLayer, buf: *mut f64, len: usize) -> DelagStatus {
    guard(|| {
        let r = &borrow(day, "day")?.result;
        if buf.is_null() {
            return Err(Fail::Null("buf"));
        }
        if len != r.mean.len() {
            return Err(Fail::Arg(format!("buffer holds {len} values, need {}", r.mean.len())));
        }
        let seamless;
        let src: &[f64] = match layer {
            DelagLayer::Mean => &r.mean,
            DelagLayer::Lower => &r.lower95,
            DelagLayer::Upper => &r.upper95,
            DelagLayer::VarAtc => &r.var_atc,
            DelagLayer::VarGp => &r.var_gp,
            DelagLayer::Observed => &r.observed,
            DelagLayer::Seamless => {
                seamless = r.seamless();
                &seamless
            }
        };
        ptr::copy_nonoverlapping(src.as_ptr(), buf, len);
        Ok(())
    })
}

/// # Safety
/// `day` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn delag_day_free(day: *mut DelagDay) {
    if !day.is_null() {
        drop(Box::from_raw(day));
    }
}

/// Error statistics of `pred` against `truth`. `lower` and `upper` may
/// both be null; otherwise coverage of the intervals is reported too.
///
/// # Safety
/// Non-null arrays must hold `n` values; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn delag_metrics(
    pred: *const f64,
    truth: *const f64,
    lower: *const f64,
    upper: *const f64,
    n: usize,
    out: *mut DelagMetrics,
) -> DelagStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        if pred.is_null() || truth.is_null() {
            return Err(Fail::Null("pred/truth"));
        }
        let pred = std::slice::from_raw_parts(pred, n);
        let truth = std::slice::from_raw_parts(truth, n);
        let intervals = match (lower.is_null(), upper.is_null()) {
            (true, true) => None,
            (false, false) => Some((std::slice::from_raw_parts(lower, n), std::slice::from_raw_parts(upper, n))),
            _ => return Err(Fail::Arg("lower and upper must both be set or both be null".into())),
        };
        let m = compute_metrics(pred, truth, intervals)?;
        *out = DelagMetrics {
            mae: m.mae,
            rmse: m.rmse,
            r2: m.r2.unwrap_or(f64::NAN),
            bias: m.bias,
            cov95: m.cov95.unwrap_or(f64::NAN),
            n: m.n,
        };
        Ok(())
    })
}
