//! C ABI for the loadprompt toolkit.
//!
//! Conventions:
//! - every fallible function returns an [`LpStatus`]; `LP_STATUS_OK` is zero;
//! - on failure, [`lp_last_error`] describes the error on the calling thread;
//! - strings handed out by the library are freed with [`lp_string_free`];
//! - handles are freed with their matching `*_free` function, which accepts NULL.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::ffi::{c_char, CStr, CString};
use std::fs::File;
use std::io::BufReader;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use loadprompt::codec::{DEFAULT_DECIMALS, DEFAULT_TEMPLATE};
use loadprompt::data::{format_timestamp, ingest_csv, make_windows, parse_timestamp, split_by_months, repair_gaps};
use loadprompt::eval::{evaluate_building, mae, rmse, EvalConfig};
use loadprompt::experiment::{synth_dataset, BackendSpec, RemoteOptions, SynthDatasetConfig};
use loadprompt::{forecast, LoadSeries, MonthSplit, PromptTemplate, RolloutConfig, WindowSpec};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidArgument = 2,
    DataError = 3,
    CodecError = 4,
    BackendError = 5,
    EvalError = 6,
    Panic = 7,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(LpStatus, String);

impl Failure {
    fn new(status: LpStatus, message: impl ToString) -> Self {
        Self(status, message.to_string())
    }
}

fn set_last_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> LpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            LpStatus::Ok
        }
        Ok(Err(Failure(status, message))) => {
            set_last_error(&message);
            status
        }
        Err(_) => {
            set_last_error("internal panic");
            LpStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::new(LpStatus::NullArgument, format!("{what} is NULL")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::new(LpStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut()
        .ok_or_else(|| Failure::new(LpStatus::NullArgument, format!("{what} is NULL")))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| Failure::new(LpStatus::NullArgument, format!("{what} is NULL")))
}

fn c_string(s: &str) -> *mut c_char {
    CString::new(s.replace('\0', " "))
        .expect("nul bytes removed")
        .into_raw()
}

/// Message for the last failed call on this thread, or NULL.
/// Valid until the next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn lp_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Frees a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn lp_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Sentence template handle.
pub struct LpTemplate(PromptTemplate);

/// Loaded buildings keyed by id.
pub struct LpDataset(BTreeMap<String, LoadSeries>);

/// Creates a template. `pattern` may be NULL for the default sentence.
///
/// # Safety
/// `pattern` is NULL or a valid C string; `out` is a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lp_template_new(
    pattern: *const c_char,
    decimals: u32,
    out_template: *mut *mut LpTemplate,
) -> LpStatus {
    guard(|| {
        let slot = out(out_template, "out_template")?;
        let pattern = if pattern.is_null() {
            DEFAULT_TEMPLATE
        } else {
            text(pattern, "pattern")?
        };
        let template = PromptTemplate::new(pattern, decimals)
            .map_err(|e| Failure::new(LpStatus::CodecError, e))?;
        *slot = Box::into_raw(Box::new(LpTemplate(template)));
        Ok(())
    })
}

/// # Safety
/// `template` is NULL or came from [`lp_template_new`].
#[no_mangle]
pub unsafe extern "C" fn lp_template_free(template: *mut LpTemplate) {
    if !template.is_null() {
        drop(Box::from_raw(template));
    }
}

/// Renders one sentence. `timestamp` uses `YYYY-MM-DD HH:00`.
///
/// # Safety
/// Pointers must be valid; the returned string is freed with [`lp_string_free`].
#[no_mangle]
pub unsafe extern "C" fn lp_template_render(
    template: *const LpTemplate,
    timestamp: *const c_char,
    value: f64,
    out_sentence: *mut *mut c_char,
) -> LpStatus {
    guard(|| {
        let template = handle(template, "template")?;
        let slot = out(out_sentence, "out_sentence")?;
        let ts = parse_timestamp(text(timestamp, "timestamp")?)
            .map_err(|e| Failure::new(LpStatus::InvalidArgument, e))?;
        if !value.is_finite() || value < 0.0 {
            return Err(Failure::new(LpStatus::InvalidArgument, "value must be finite and non-negative"));
        }
        *slot = c_string(template.0.render_at(ts, value).as_str());
        Ok(())
    })
}

/// Parses a sentence that matches the template exactly.
///
/// # Safety
/// Pointers must be valid; the timestamp string is freed with [`lp_string_free`].
#[no_mangle]
pub unsafe extern "C" fn lp_template_parse(
    template: *const LpTemplate,
    sentence: *const c_char,
    out_timestamp: *mut *mut c_char,
    out_value: *mut f64,
) -> LpStatus {
    guard(|| {
        let template = handle(template, "template")?;
        let sentence = text(sentence, "sentence")?;
        let ts_slot = out(out_timestamp, "out_timestamp")?;
        let value_slot = out(out_value, "out_value")?;
        let (ts, value) = template
            .0
            .parse_strict(sentence)
            .map_err(|e| Failure::new(LpStatus::CodecError, e))?;
        *ts_slot = c_string(&format_timestamp(&ts));
        *value_slot = value;
        Ok(())
    })
}

/// Extracts the last number in free-form text.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn lp_parse_lenient(sentence: *const c_char, out_value: *mut f64) -> LpStatus {
    guard(|| {
        let sentence = text(sentence, "sentence")?;
        let slot = out(out_value, "out_value")?;
        *slot = loadprompt::parse_lenient(sentence).map_err(|e| Failure::new(LpStatus::CodecError, e))?;
        Ok(())
    })
}

/// Reads a `timestamp,building_id,consumption_kwh` CSV file.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn lp_dataset_load_csv(path: *const c_char, out_dataset: *mut *mut LpDataset) -> LpStatus {
    guard(|| {
        let path = text(path, "path")?;
        let slot = out(out_dataset, "out_dataset")?;
        let file = File::open(path).map_err(|e| Failure::new(LpStatus::DataError, format!("{path}: {e}")))?;
        let data = ingest_csv(BufReader::new(file)).map_err(|e| Failure::new(LpStatus::DataError, e))?;
        *slot = Box::into_raw(Box::new(LpDataset(data)));
        Ok(())
    })
}

/// Generates `buildings` synthetic series of `days` days.
///
/// # Safety
/// `out_dataset` must be valid.
#[no_mangle]
pub unsafe extern "C" fn lp_dataset_synth(
    seed: u64,
    days: usize,
    buildings: usize,
    out_dataset: *mut *mut LpDataset,
) -> LpStatus {
    guard(|| {
        let slot = out(out_dataset, "out_dataset")?;
        let config = SynthDatasetConfig {
            seed,
            days,
            buildings,
            ..SynthDatasetConfig::default()
        };
        let data = synth_dataset(&config).map_err(|e| Failure::new(LpStatus::InvalidArgument, e))?;
        *slot = Box::into_raw(Box::new(LpDataset(data)));
        Ok(())
    })
}

/// # Safety
/// `dataset` is NULL or came from a `lp_dataset_*` constructor.
#[no_mangle]
pub unsafe extern "C" fn lp_dataset_free(dataset: *mut LpDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Number of buildings, or 0 for NULL.
///
/// # Safety
/// `dataset` is NULL or valid.
#[no_mangle]
pub unsafe extern "C" fn lp_dataset_len(dataset: *const LpDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.0.len())
}

/// Building id at `index` in sorted order.
///
/// # Safety
/// Pointers must be valid; the result is freed with [`lp_string_free`].
#[no_mangle]
pub unsafe extern "C" fn lp_dataset_building_id(
    dataset: *const LpDataset,
    index: usize,
    out_id: *mut *mut c_char,
) -> LpStatus {
    guard(|| {
        let dataset = handle(dataset, "dataset")?;
        let slot = out(out_id, "out_id")?;
        let id = dataset.0.keys().nth(index).ok_or_else(|| {
            Failure::new(
                LpStatus::InvalidArgument,
                format!("index {index} out of range ({} buildings)", dataset.0.len()),
            )
        })?;
        *slot = c_string(id);
        Ok(())
    })
}

/// Number of hourly records for one building.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn lp_dataset_series_len(
    dataset: *const LpDataset,
    building: *const c_char,
    out_len: *mut usize,
) -> LpStatus {
    guard(|| {
        let dataset = handle(dataset, "dataset")?;
        let slot = out(out_len, "out_len")?;
        *slot = series(dataset, text(building, "building")?)?.len();
        Ok(())
    })
}

/// Evaluation settings. Obtain defaults from [`lp_eval_options_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LpEvalOptions {
    pub n: usize,
    pub m: usize,
    pub stride: usize,
    pub train_months: usize,
    pub val_months: usize,
    pub test_months: usize,
    pub max_gap_hours: usize,
    pub retry_limit: u32,
    /// Non-zero for a growing context instead of a sliding one.
    pub growing_context: u8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LpMetrics {
    pub rmse: f64,
    pub mae: f64,
    pub windows: usize,
    pub faults: usize,
}

#[no_mangle]
pub extern "C" fn lp_eval_options_default() -> LpEvalOptions {
    let eval = EvalConfig::default();
    let months = MonthSplit::default();
    LpEvalOptions {
        n: eval.rollout.n,
        m: eval.rollout.m,
        stride: eval.stride,
        train_months: months.train,
        val_months: months.val,
        test_months: months.test,
        max_gap_hours: loadprompt::data::DEFAULT_MAX_GAP_HOURS,
        retry_limit: eval.rollout.retry_limit,
        growing_context: 0,
    }
}

fn series<'a>(dataset: &'a LpDataset, building: &str) -> Result<&'a LoadSeries, Failure> {
    dataset.0.get(building).ok_or_else(|| {
        let known: Vec<&str> = dataset.0.keys().map(String::as_str).collect();
        Failure::new(
            LpStatus::DataError,
            format!("unknown building {building:?}; available: {}", known.join(", ")),
        )
    })
}

fn eval_config(options: &LpEvalOptions) -> Result<EvalConfig, Failure> {
    let rollout = RolloutConfig {
        n: options.n,
        m: options.m,
        context_mode: if options.growing_context != 0 {
            loadprompt::ContextMode::Growing
        } else {
            loadprompt::ContextMode::Sliding
        },
        retry_limit: options.retry_limit,
        ..RolloutConfig::default()
    };
    rollout
        .validate()
        .map_err(|e| Failure::new(LpStatus::InvalidArgument, e))?;
    if options.stride == 0 {
        return Err(Failure::new(LpStatus::InvalidArgument, "stride must be positive"));
    }
    Ok(EvalConfig {
        rollout,
        stride: options.stride,
    })
}

struct Prepared {
    split: loadprompt::DatasetSplit,
    template: PromptTemplate,
    config: EvalConfig,
    spec: BackendSpec,
}

unsafe fn prepare(
    dataset: *const LpDataset,
    building: *const c_char,
    backend: *const c_char,
    template: *const LpTemplate,
    options: *const LpEvalOptions,
) -> Result<Prepared, Failure> {
    let dataset = handle(dataset, "dataset")?;
    let options = options.as_ref().copied().unwrap_or_else(|| lp_eval_options_default());
    let template = match template.as_ref() {
        Some(t) => t.0.clone(),
        None => PromptTemplate::new(DEFAULT_TEMPLATE, DEFAULT_DECIMALS).expect("default template is valid"),
    };
    let spec: BackendSpec = text(backend, "backend")?
        .parse()
        .map_err(|e: String| Failure::new(LpStatus::InvalidArgument, e))?;
    let series = series(dataset, text(building, "building")?)?;
    let months = MonthSplit {
        train: options.train_months,
        val: options.val_months,
        test: options.test_months,
    };
    let split = repair_gaps(series, options.max_gap_hours)
        .and_then(|s| split_by_months(&s, months))
        .map_err(|e| Failure::new(LpStatus::DataError, e))?;
    Ok(Prepared {
        split,
        template,
        config: eval_config(&options)?,
        spec,
    })
}

/// Scores one backend on one building's test split.
///
/// `template` and `options` may be NULL for defaults.
///
/// # Safety
/// Non-NULL pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn lp_evaluate(
    dataset: *const LpDataset,
    building: *const c_char,
    backend: *const c_char,
    template: *const LpTemplate,
    options: *const LpEvalOptions,
    out_metrics: *mut LpMetrics,
) -> LpStatus {
    guard(|| {
        let slot = out(out_metrics, "out_metrics")?;
        let p = prepare(dataset, building, backend, template, options)?;
        let backend = p
            .spec
            .build(&p.template, &p.split, &p.split, &RemoteOptions::default())
            .map_err(|e| Failure::new(LpStatus::BackendError, e))?;
        let row = evaluate_building(&p.spec.to_string(), &p.split, backend.as_ref(), &p.template, &p.config)
            .map_err(|e| Failure::new(LpStatus::EvalError, e))?;
        let metrics = row.metrics().expect("evaluate_building reports metrics");
        *slot = LpMetrics {
            rmse: metrics.rmse,
            mae: metrics.mae,
            windows: metrics.windows,
            faults: metrics.faults,
        };
        Ok(())
    })
}

/// Forecasts test window `window` and returns its audit record as JSON.
///
/// # Safety
/// Non-NULL pointers must be valid; the result is freed with [`lp_string_free`].
#[no_mangle]
pub unsafe extern "C" fn lp_forecast_json(
    dataset: *const LpDataset,
    building: *const c_char,
    backend: *const c_char,
    template: *const LpTemplate,
    options: *const LpEvalOptions,
    window: usize,
    out_json: *mut *mut c_char,
) -> LpStatus {
    guard(|| {
        let slot = out(out_json, "out_json")?;
        let p = prepare(dataset, building, backend, template, options)?;
        let spec = WindowSpec::new(p.config.rollout.n, p.config.rollout.m, p.config.stride)
            .map_err(|e| Failure::new(LpStatus::InvalidArgument, e))?;
        let windows = make_windows(&p.split.test, spec);
        let w = windows.get(window).ok_or_else(|| {
            Failure::new(
                LpStatus::InvalidArgument,
                format!("window {window} out of range ({} windows)", windows.len()),
            )
        })?;
        let backend = p
            .spec
            .build(&p.template, &p.split, &p.split, &RemoteOptions::default())
            .map_err(|e| Failure::new(LpStatus::BackendError, e))?;
        let result = forecast(
            p.split.test.building_id(),
            w.observation,
            backend.as_ref(),
            &p.template,
            &p.config.rollout,
        )
        .map_err(|e| Failure::new(LpStatus::EvalError, e))?;
        *slot = c_string(&result.to_json());
        Ok(())
    })
}

unsafe fn pair<'a>(pred: *const f64, truth: *const f64, len: usize) -> Result<(&'a [f64], &'a [f64]), Failure> {
    if len == 0 {
        return Err(Failure::new(LpStatus::InvalidArgument, "empty input"));
    }
    if pred.is_null() || truth.is_null() {
        return Err(Failure::new(LpStatus::NullArgument, "array is NULL"));
    }
    Ok((std::slice::from_raw_parts(pred, len), std::slice::from_raw_parts(truth, len)))
}

/// Root mean squared error of two arrays of length `len`.
///
/// # Safety
/// Both arrays hold at least `len` values.
#[no_mangle]
pub unsafe extern "C" fn lp_rmse(pred: *const f64, truth: *const f64, len: usize, out_value: *mut f64) -> LpStatus {
    guard(|| {
        let slot = out(out_value, "out_value")?;
        let (p, t) = pair(pred, truth, len)?;
        *slot = rmse(p, t).map_err(|e| Failure::new(LpStatus::InvalidArgument, e))?;
        Ok(())
    })
}

/// Mean absolute error of two arrays of length `len`.
///
/// # Safety
/// Both arrays hold at least `len` values.
#[no_mangle]
pub unsafe extern "C" fn lp_mae(pred: *const f64, truth: *const f64, len: usize, out_value: *mut f64) -> LpStatus {
    guard(|| {
        let slot = out(out_value, "out_value")?;
        let (p, t) = pair(pred, truth, len)?;
        *slot = mae(p, t).map_err(|e| Failure::new(LpStatus::InvalidArgument, e))?;
        Ok(())
    })
}
