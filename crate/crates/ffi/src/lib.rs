//! C interface to the feature extractor and verifier.
//!
//! Every object crosses the boundary as an opaque pointer created by a
//! `fsf_*_load`/`fsf_*_new` call and released by the matching `fsf_*_free`.
//! Fallible calls return an `FsfStatus`; on failure a message is kept in a
//! thread-local slot readable with `fsf_last_error_message`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use fusiform::autoencoder::AutoencoderModel;
use fusiform::checkpoint;
use fusiform::config::RunConfig;
use fusiform::fusiform::{Extractor, FeatureBundle, Reconstructor};
use fusiform::perceptual::PerceptualModel;
use fusiform::synth::preprocess;
use fusiform::verifier::{fuse, VerifierModel};
use fusiform::{Error, Tensor};

/// Status codes. Values match the exit codes of the `fusiform` binary.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FsfStatus {
    FsfOk = 0,
    FsfErrNull = 1,
    FsfErrArgument = 2,
    FsfErrMissingFile = 3,
    FsfErrIo = 4,
    FsfErrCrc = 5,
    FsfErrFormat = 6,
    FsfErrIncompatible = 7,
    FsfErrNumeric = 8,
    FsfErrData = 9,
    FsfErrShape = 10,
    FsfErrPanic = 11,
}

impl From<&Error> for FsfStatus {
    fn from(e: &Error) -> Self {
        match e.exit_code() {
            2 => FsfStatus::FsfErrArgument,
            3 => FsfStatus::FsfErrMissingFile,
            4 => FsfStatus::FsfErrIo,
            5 => FsfStatus::FsfErrCrc,
            6 => FsfStatus::FsfErrFormat,
            7 => FsfStatus::FsfErrIncompatible,
            8 => FsfStatus::FsfErrNumeric,
            9 => FsfStatus::FsfErrData,
            10 => FsfStatus::FsfErrShape,
            _ => FsfStatus::FsfErrArgument,
        }
    }
}

/// Run configuration.
pub struct FsfConfig(RunConfig);
/// Frozen autoencoder.
pub struct FsfAutoencoder(AutoencoderModel);
/// Frozen perceptual network.
pub struct FsfPerceptual(PerceptualModel);
/// Trained verifier head.
pub struct FsfVerifier(VerifierModel);
/// Features of one image.
pub struct FsfFeatures(FeatureBundle);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

enum Fail {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> FsfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FsfStatus::FsfOk,
        Ok(Err(Fail::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            FsfStatus::FsfErrNull
        }
        Ok(Err(Fail::Lib(e))) => {
            set_error(e.to_string());
            FsfStatus::from(&e)
        }
        Err(_) => {
            set_error("internal panic".into());
            FsfStatus::FsfErrPanic
        }
    }
}

unsafe fn get<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Null(what))
}

unsafe fn text<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail::Lib(Error::InvalidArgument(format!("{what} is not UTF-8"))))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail::Null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn free<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn fsf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Length in bytes of the last error message on this thread, excluding the
/// terminator. Zero if there is none.
#[no_mangle]
pub extern "C" fn fsf_last_error_length() -> usize {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(0, |s| s.as_bytes().len()))
}

/// Copies the last error message into `buf` (truncated, always terminated)
/// and returns the full message length.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn fsf_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let bytes = e.as_ref().map_or(&[][..], |s| s.as_bytes());
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr().cast(), buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Toy preset configuration.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fsf_config_toy(out: *mut *mut FsfConfig) -> FsfStatus {
    guard(|| put(out, FsfConfig(RunConfig::toy())))
}

/// Parses `key=value` configuration text.
///
/// # Safety
/// `config_text` must be a NUL-terminated string; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fsf_config_parse(config_text: *const c_char, out: *mut *mut FsfConfig) -> FsfStatus {
    guard(|| {
        let cfg = RunConfig::parse(text(config_text, "config_text")?)?;
        cfg.validate()?;
        put(out, FsfConfig(cfg))
    })
}

/// # Safety
/// `config` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn fsf_config_free(config: *mut FsfConfig) {
    free(config)
}

/// Input side length expected by models built from `config`.
///
/// # Safety
/// `config` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn fsf_config_image_size(config: *const FsfConfig) -> usize {
    config.as_ref().map_or(0, |c| c.0.image_size)
}

/// # Safety
/// Pointers must be valid; `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn fsf_autoencoder_load(
    path: *const c_char,
    config: *const FsfConfig,
    out: *mut *mut FsfAutoencoder,
) -> FsfStatus {
    guard(|| {
        let model = checkpoint::load_autoencoder(Path::new(text(path, "path")?), &get(config, "config")?.0)?;
        put(out, FsfAutoencoder(model))
    })
}

/// # Safety
/// `model` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn fsf_autoencoder_free(model: *mut FsfAutoencoder) {
    free(model)
}

/// # Safety
/// Pointers must be valid; `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn fsf_perceptual_load(
    path: *const c_char,
    config: *const FsfConfig,
    out: *mut *mut FsfPerceptual,
) -> FsfStatus {
    guard(|| {
        let model = checkpoint::load_perceptual(Path::new(text(path, "path")?), &get(config, "config")?.0)?;
        put(out, FsfPerceptual(model))
    })
}

/// # Safety
/// `model` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn fsf_perceptual_free(model: *mut FsfPerceptual) {
    free(model)
}

/// # Safety
/// Pointers must be valid; `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn fsf_verifier_load(
    path: *const c_char,
    config: *const FsfConfig,
    out: *mut *mut FsfVerifier,
) -> FsfStatus {
    guard(|| {
        let model = checkpoint::load_verifier(Path::new(text(path, "path")?), &get(config, "config")?.0)?;
        put(out, FsfVerifier(model))
    })
}

/// # Safety
/// `model` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn fsf_verifier_free(model: *mut FsfVerifier) {
    free(model)
}

/// Extracts features from one planar RGB image (`3 * height * width` floats,
/// channel-major, any value range). The image is min-max normalized and
/// resized to the model's input size first.
///
/// # Safety
/// `pixels` must be valid for `3 * height * width` reads; handles must be live.
#[no_mangle]
pub unsafe extern "C" fn fsf_extract(
    autoencoder: *const FsfAutoencoder,
    perceptual: *const FsfPerceptual,
    pixels: *const f32,
    height: usize,
    width: usize,
    out: *mut *mut FsfFeatures,
) -> FsfStatus {
    guard(|| {
        let ae = &get(autoencoder, "autoencoder")?.0;
        let p = &get(perceptual, "perceptual")?.0;
        if pixels.is_null() {
            return Err(Fail::Null("pixels"));
        }
        if height == 0 || width == 0 {
            return Err(Error::InvalidArgument("image has zero extent".into()).into());
        }
        let data = std::slice::from_raw_parts(pixels, 3 * height * width).to_vec();
        let image = preprocess(&Tensor::new([3, height, width], data)?, ae.image_size())?;
        let bundle = Extractor::new(ae, p)?.extract(&image)?;
        put(out, FsfFeatures(bundle))
    })
}

/// # Safety
/// `features` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn fsf_features_free(features: *mut FsfFeatures) {
    free(features)
}

/// Lengths of the coarse (`v_c`) and detail (`v_d`) vectors.
///
/// # Safety
/// `features` must be live; `vc_len` and `vd_len` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fsf_features_dims(
    features: *const FsfFeatures,
    vc_len: *mut usize,
    vd_len: *mut usize,
) -> FsfStatus {
    guard(|| {
        let f = &get(features, "features")?.0;
        if vc_len.is_null() || vd_len.is_null() {
            return Err(Fail::Null("length output"));
        }
        *vc_len = f.v_c.len();
        *vd_len = f.v_d.len();
        Ok(())
    })
}

/// Copies `v_c` and `v_d` into caller buffers whose capacities must be at
/// least the lengths reported by `fsf_features_dims`.
///
/// # Safety
/// Buffers must be valid for the given capacities.
#[no_mangle]
pub unsafe extern "C" fn fsf_features_copy(
    features: *const FsfFeatures,
    vc: *mut f32,
    vc_cap: usize,
    vd: *mut f32,
    vd_cap: usize,
) -> FsfStatus {
    guard(|| {
        let f = &get(features, "features")?.0;
        if vc.is_null() || vd.is_null() {
            return Err(Fail::Null("feature buffer"));
        }
        if vc_cap < f.v_c.len() || vd_cap < f.v_d.len() {
            return Err(Error::InvalidArgument(format!(
                "buffers hold {vc_cap}/{vd_cap}, need {}/{}",
                f.v_c.len(),
                f.v_d.len()
            ))
            .into());
        }
        ptr::copy_nonoverlapping(f.v_c.as_ptr(), vc, f.v_c.len());
        ptr::copy_nonoverlapping(f.v_d.as_ptr(), vd, f.v_d.len());
        Ok(())
    })
}

/// Same-identity probability for two feature sets, in (0, 1).
///
/// # Safety
/// Handles must be live; `score` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fsf_verify(
    verifier: *const FsfVerifier,
    a: *const FsfFeatures,
    b: *const FsfFeatures,
    score: *mut f32,
) -> FsfStatus {
    guard(|| {
        let v = &get(verifier, "verifier")?.0;
        let (a, b) = (&get(a, "a")?.0, &get(b, "b")?.0);
        if score.is_null() {
            return Err(Fail::Null("score"));
        }
        let fused = fuse(a, b, v.config.mode, v.config.abs_diff)?;
        *score = v.predict(&fused)?;
        Ok(())
    })
}
