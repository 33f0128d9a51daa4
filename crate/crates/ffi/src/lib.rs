//! C interface.
//!
//! Datasets and fits are opaque handles created by this library and
//! released with the matching `*_free` function. Every fallible call
//! returns a [`SubmetaStatus`]; on failure [`submeta_last_error`] describes
//! the most recent error on the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use submeta::data::{parse_dataset, DataError, MetaDataset};
use submeta::datasets::{bundled, Outcome, Variant};
use submeta::mcmc::{McmcError, SamplerConfig};
use submeta::models::{fit, ModelError, ModelKind};
use submeta::priors::{beta_from_counts, beta_from_moments, beta_from_range, HyperPriors, PriorError};
use submeta::PosteriorSummary;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubmetaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidInput = 3,
    Convergence = 4,
    NotFound = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubmetaModel {
    M1 = 0,
    M2 = 1,
    M2Neg = 2,
    M3 = 3,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubmetaOutcome {
    Pfs = 0,
    Os = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubmetaVariant {
    Main = 0,
    Sensitivity = 1,
}

/// Opaque dataset handle.
pub struct SubmetaDataset(MetaDataset);

/// Opaque posterior summary handle.
pub struct SubmetaFit(PosteriorSummary);

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SubmetaBlockCounts {
    pub positive_only: usize,
    pub both: usize,
    pub negative_only: usize,
    pub mixed: usize,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SubmetaSamplerConfig {
    pub n_chains: usize,
    pub burn_in: usize,
    pub samples: usize,
    pub thin: usize,
    pub seed: u64,
}

/// Posterior summary of one parameter; `rhat` is NaN for a single chain.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SubmetaParamSummary {
    pub mean: f64,
    pub median: f64,
    pub sd: f64,
    pub lower: f64,
    pub upper: f64,
    pub rhat: f64,
    pub ess: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

struct Failure(SubmetaStatus, String);

impl Failure {
    fn invalid(e: impl ToString) -> Self {
        Failure(SubmetaStatus::InvalidInput, e.to_string())
    }
}

impl From<DataError> for Failure {
    fn from(e: DataError) -> Self {
        Failure::invalid(e)
    }
}

impl From<PriorError> for Failure {
    fn from(e: PriorError) -> Self {
        Failure::invalid(e)
    }
}

impl From<ModelError> for Failure {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Mcmc(ref m @ McmcError::AdaptationFailure { .. }) => {
                Failure(SubmetaStatus::Convergence, m.to_string())
            }
            other => Failure::invalid(other),
        }
    }
}

/// Runs `f`, converting errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SubmetaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SubmetaStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            SubmetaStatus::Panic
        }
    }
}

fn non_null<T>(p: *const T, what: &str) -> Result<(), Failure> {
    if p.is_null() {
        Err(Failure(SubmetaStatus::NullPointer, format!("{what} is null")))
    } else {
        Ok(())
    }
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    non_null(p, what)?;
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(SubmetaStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

/// Message for the last failed call on this thread, or NULL. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn submeta_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Parses a dataset CSV held in a NUL-terminated string.
///
/// # Safety
/// `csv` must be a valid C string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn submeta_dataset_parse(csv: *const c_char, out: *mut *mut SubmetaDataset) -> SubmetaStatus {
    guard(|| {
        non_null(out, "out")?;
        let text = read_str(csv, "csv")?;
        let ds = parse_dataset(text)?;
        *out = Box::into_raw(Box::new(SubmetaDataset(ds)));
        Ok(())
    })
}

/// One of the bundled colorectal-cancer datasets.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn submeta_dataset_bundled(
    outcome: SubmetaOutcome,
    variant: SubmetaVariant,
    out: *mut *mut SubmetaDataset,
) -> SubmetaStatus {
    guard(|| {
        non_null(out, "out")?;
        let outcome = match outcome {
            SubmetaOutcome::Pfs => Outcome::Pfs,
            SubmetaOutcome::Os => Outcome::Os,
        };
        let variant = match variant {
            SubmetaVariant::Main => Variant::Main,
            SubmetaVariant::Sensitivity => Variant::Sensitivity,
        };
        *out = Box::into_raw(Box::new(SubmetaDataset(bundled(outcome, variant))));
        Ok(())
    })
}

/// Number of studies, or 0 for a null handle.
///
/// # Safety
/// `ds` must be null or a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn submeta_dataset_len(ds: *const SubmetaDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.0.len())
}

/// # Safety
/// `ds` must be a live dataset handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn submeta_dataset_block_counts(
    ds: *const SubmetaDataset,
    out: *mut SubmetaBlockCounts,
) -> SubmetaStatus {
    guard(|| {
        non_null(ds, "dataset")?;
        non_null(out, "out")?;
        let c = (*ds).0.block_counts();
        *out = SubmetaBlockCounts {
            positive_only: c.positive_only,
            both: c.both,
            negative_only: c.negative_only,
            mixed: c.mixed,
        };
        Ok(())
    })
}

/// # Safety
/// `ds` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn submeta_dataset_free(ds: *mut SubmetaDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

fn sampler_config(c: SamplerConfig) -> SubmetaSamplerConfig {
    SubmetaSamplerConfig { n_chains: c.n_chains, burn_in: c.burn_in, samples: c.samples, thin: c.thin, seed: c.seed }
}

/// 4 chains, 5 000 burn-in and 20 000 retained iterations.
#[no_mangle]
pub extern "C" fn submeta_sampler_desk(seed: u64) -> SubmetaSamplerConfig {
    sampler_config(SamplerConfig::desk(seed))
}

/// 4 chains, 50 000 burn-in and 100 000 retained iterations.
#[no_mangle]
pub extern "C" fn submeta_sampler_paper(seed: u64) -> SubmetaSamplerConfig {
    sampler_config(SamplerConfig::paper(seed))
}

/// Fits `model` with the default vague hyperpriors.
///
/// # Safety
/// `ds` must be a live dataset handle; `config` and `out` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn submeta_fit(
    ds: *const SubmetaDataset,
    model: SubmetaModel,
    config: *const SubmetaSamplerConfig,
    out: *mut *mut SubmetaFit,
) -> SubmetaStatus {
    guard(|| {
        non_null(ds, "dataset")?;
        non_null(config, "config")?;
        non_null(out, "out")?;
        let c = &*config;
        let sc = SamplerConfig {
            n_chains: c.n_chains,
            burn_in: c.burn_in,
            samples: c.samples,
            thin: c.thin,
            seed: c.seed,
            ..SamplerConfig::desk(c.seed)
        };
        let kind = match model {
            SubmetaModel::M1 => ModelKind::M1,
            SubmetaModel::M2 => ModelKind::M2,
            SubmetaModel::M2Neg => ModelKind::M2Neg,
            SubmetaModel::M3 => ModelKind::M3,
        };
        let summary = fit(kind, &(*ds).0, HyperPriors::default(), &sc)?;
        *out = Box::into_raw(Box::new(SubmetaFit(summary)));
        Ok(())
    })
}

/// Number of summarized parameters, or 0 for a null handle.
///
/// # Safety
/// `fit` must be null or a live fit handle.
#[no_mangle]
pub unsafe extern "C" fn submeta_fit_param_count(fit: *const SubmetaFit) -> usize {
    fit.as_ref().map_or(0, |f| f.0.rows.len())
}

/// Summary of the parameter called `name`, e.g. "d_pos" or "tau_beta_sq".
///
/// # Safety
/// `fit` must be a live fit handle, `name` a valid C string and `out` a
/// valid pointer.
#[no_mangle]
pub unsafe extern "C" fn submeta_fit_param(
    fit: *const SubmetaFit,
    name: *const c_char,
    out: *mut SubmetaParamSummary,
) -> SubmetaStatus {
    guard(|| {
        non_null(fit, "fit")?;
        non_null(out, "out")?;
        let name = read_str(name, "name")?;
        let r = (*fit)
            .0
            .get(name)
            .ok_or_else(|| Failure(SubmetaStatus::NotFound, format!("no parameter `{name}`")))?;
        *out = SubmetaParamSummary {
            mean: r.mean,
            median: r.median,
            sd: r.sd,
            lower: r.lower,
            upper: r.upper,
            rhat: r.rhat.unwrap_or(f64::NAN),
            ess: r.ess,
        };
        Ok(())
    })
}

/// # Safety
/// `fit` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn submeta_fit_free(fit: *mut SubmetaFit) {
    if !fit.is_null() {
        drop(Box::from_raw(fit));
    }
}

unsafe fn write_shapes(
    alpha: *mut f64,
    beta: *mut f64,
    f: impl FnOnce() -> Result<submeta::data::ProportionPrior, PriorError>,
) -> SubmetaStatus {
    guard(|| {
        non_null(alpha, "alpha")?;
        non_null(beta, "beta")?;
        let p = f()?;
        *alpha = p.alpha;
        *beta = p.beta;
        Ok(())
    })
}

/// Beta shapes with the given mean and variance.
///
/// # Safety
/// `alpha` and `beta` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn submeta_beta_from_moments(mean: f64, variance: f64, alpha: *mut f64, beta: *mut f64) -> SubmetaStatus {
    write_shapes(alpha, beta, || beta_from_moments(mean, variance))
}

/// Beta shapes from `n_negative` biomarker-negative out of `n_known`.
///
/// # Safety
/// `alpha` and `beta` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn submeta_beta_from_counts(
    n_negative: u64,
    n_known: u64,
    alpha: *mut f64,
    beta: *mut f64,
) -> SubmetaStatus {
    write_shapes(alpha, beta, || beta_from_counts(n_negative, n_known))
}

/// Beta shapes from a range read as mean +/- 2 sd.
///
/// # Safety
/// `alpha` and `beta` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn submeta_beta_from_range(low: f64, high: f64, alpha: *mut f64, beta: *mut f64) -> SubmetaStatus {
    write_shapes(alpha, beta, || beta_from_range(low, high))
}
