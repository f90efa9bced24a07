//! C ABI for the riac pipeline: opaque model handles, integer status
//! codes, and a thread-local last-error message. The header is generated
//! by cbindgen into `include/riac.h` at build time.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use riac::net::{ArchConfig, RiacNetModel};
use riac::tensor::{read_checkpoint, write_checkpoint, Tensor};
use riac::Error;

/// Status codes returned by every fallible function. Non-zero means
/// failure; `riac_last_error_message` describes the most recent one on the
/// calling thread.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RiacStatus {
    RiacOk = 0,
    /// A bad argument: null pointer, wrong size, invalid hyperparameter.
    RiacInvalidArgument = 2,
    /// A file exists but its contents are malformed.
    RiacParseError = 3,
    /// The underlying read or write failed.
    RiacIoError = 4,
    /// A numeric self-check failed.
    RiacVerificationError = 5,
    /// An unexpected internal failure (including a caught panic).
    RiacInternalError = 1,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(err: &Error) -> RiacStatus {
    match err.exit_code() {
        2 => RiacStatus::RiacInvalidArgument,
        3 => RiacStatus::RiacParseError,
        4 => RiacStatus::RiacIoError,
        5 => RiacStatus::RiacVerificationError,
        _ => RiacStatus::RiacInternalError,
    }
}

fn fail(err: &Error) -> RiacStatus {
    set_error(&err.to_string());
    status_of(err)
}

fn invalid(msg: &str) -> RiacStatus {
    set_error(msg);
    RiacStatus::RiacInvalidArgument
}

/// Runs `f` with panics converted to `RiacInternalError` so unwinding
/// never crosses the FFI boundary.
fn guarded(f: impl FnOnce() -> RiacStatus) -> RiacStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => {
            set_error("internal panic");
            RiacStatus::RiacInternalError
        }
    }
}

/// Opaque handle to one part-branch model.
pub struct RiacModel {
    inner: RiacNetModel,
}

/// The most recent error message on this thread, as a NUL-terminated
/// string. The pointer stays valid until the next failing call on the same
/// thread. Never null; empty before the first failure.
#[no_mangle]
pub extern "C" fn riac_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

unsafe fn path_arg<'a>(ptr: *const c_char) -> Result<&'a Path, RiacStatus> {
    if ptr.is_null() {
        return Err(invalid("path must not be null"));
    }
    match CStr::from_ptr(ptr).to_str() {
        Ok(s) => Ok(Path::new(s)),
        Err(_) => Err(invalid("path must be valid UTF-8")),
    }
}

fn build_arch(
    image_size: usize,
    branch_channels: usize,
    hidden: usize,
    n_classes: usize,
) -> Result<ArchConfig, RiacStatus> {
    if n_classes < 2 {
        return Err(invalid("n_classes must be at least 2"));
    }
    let arch = ArchConfig::reduced(image_size, branch_channels, hidden, n_classes);
    arch.validate().map_err(|e| fail(&e))?;
    Ok(arch)
}

/// Creates a freshly initialized model and stores the handle in `out`.
/// Pass 224/64/128 for the reference architecture. The handle must be
/// released with `riac_model_free`.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn riac_model_new(
    image_size: usize,
    branch_channels: usize,
    hidden: usize,
    n_classes: usize,
    seed: u64,
    out: *mut *mut RiacModel,
) -> RiacStatus {
    guarded(|| {
        if out.is_null() {
            return invalid("out must not be null");
        }
        let arch = match build_arch(image_size, branch_channels, hidden, n_classes) {
            Ok(a) => a,
            Err(s) => return s,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match RiacNetModel::new(arch, &mut rng) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(RiacModel { inner }));
                RiacStatus::RiacOk
            }
            Err(e) => fail(&e),
        }
    })
}

/// Creates a model with the given architecture and loads its weights from
/// a checkpoint written by `riac_model_save` (or the `riac train` CLI).
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer to
/// writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn riac_model_load(
    path: *const c_char,
    image_size: usize,
    branch_channels: usize,
    hidden: usize,
    n_classes: usize,
    out: *mut *mut RiacModel,
) -> RiacStatus {
    guarded(|| {
        if out.is_null() {
            return invalid("out must not be null");
        }
        let path = match path_arg(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        let arch = match build_arch(image_size, branch_channels, hidden, n_classes) {
            Ok(a) => a,
            Err(s) => return s,
        };
        let entries = match read_checkpoint(path) {
            Ok(e) => e,
            Err(e) => return fail(&e),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut model = match RiacNetModel::new(arch, &mut rng) {
            Ok(m) => m,
            Err(e) => return fail(&e),
        };
        if let Err(e) = model.load_named_tensors(&entries) {
            return fail(&e);
        }
        *out = Box::into_raw(Box::new(RiacModel { inner: model }));
        RiacStatus::RiacOk
    })
}

/// Writes the model's weights and batch-norm running statistics to `path`.
///
/// # Safety
/// `model` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn riac_model_save(model: *const RiacModel, path: *const c_char) -> RiacStatus {
    guarded(|| {
        let Some(model) = model.as_ref() else {
            return invalid("model must not be null");
        };
        let path = match path_arg(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        match write_checkpoint(path, &model.inner.to_named_tensors()) {
            Ok(()) => RiacStatus::RiacOk,
            Err(e) => fail(&e),
        }
    })
}

/// Releases a handle. Passing null is a no-op.
///
/// # Safety
/// `model` must have come from this library and not been freed already.
#[no_mangle]
pub unsafe extern "C" fn riac_model_free(model: *mut RiacModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// The model's expected square input edge in pixels, or 0 for null.
///
/// # Safety
/// `model` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn riac_model_image_size(model: *const RiacModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.arch.image_size)
}

/// The model's class count, or 0 for null.
///
/// # Safety
/// `model` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn riac_model_num_classes(model: *const RiacModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.arch.n_classes)
}

/// Runs eval-mode inference on one RGB image and writes a probability per
/// class. `image` is row-major height x width x 3 with values in [0, 1]
/// and must hold `image_size * image_size * 3` doubles; `probs` must hold
/// `n_classes` doubles. The output sums to 1.
///
/// # Safety
/// `model` must be a live handle; `image` and `probs` must point to
/// buffers of at least `image_len` and `probs_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn riac_model_predict(
    model: *const RiacModel,
    image: *const f64,
    image_len: usize,
    probs: *mut f64,
    probs_len: usize,
) -> RiacStatus {
    guarded(|| {
        let Some(model) = model.as_ref() else {
            return invalid("model must not be null");
        };
        if image.is_null() || probs.is_null() {
            return invalid("image and probs must not be null");
        }
        let arch = &model.inner.arch;
        let want = arch.image_size * arch.image_size * 3;
        if image_len != want {
            return invalid(&format!("image must hold {want} doubles, got {image_len}"));
        }
        if probs_len != arch.n_classes {
            return invalid(&format!(
                "probs must hold {} doubles, got {probs_len}",
                arch.n_classes
            ));
        }
        let data = std::slice::from_raw_parts(image, image_len).to_vec();
        let tensor = match Tensor::new(vec![arch.image_size, arch.image_size, 3], data) {
            Ok(t) => t,
            Err(e) => return fail(&e),
        };
        match model.inner.predict(&tensor) {
            Ok(p) => {
                std::slice::from_raw_parts_mut(probs, probs_len).copy_from_slice(&p);
                RiacStatus::RiacOk
            }
            Err(e) => fail(&e),
        }
    })
}

/// Runs the full gradient-check suite (every primitive and the composed
/// blocks) and returns `RiacOk` when every check passes.
#[no_mangle]
pub extern "C" fn riac_gradcheck(seed: u64) -> RiacStatus {
    guarded(|| match riac::verify::gradcheck_suite(None, seed) {
        Ok(results) => {
            if let Some(worst) = results.iter().find(|r| !r.passed()) {
                set_error(&format!(
                    "{}: max relative error {:.3e} exceeds {:.3e}",
                    worst.name, worst.max_rel_err, worst.threshold
                ));
                RiacStatus::RiacVerificationError
            } else {
                RiacStatus::RiacOk
            }
        }
        Err(e) => fail(&e),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ptr;

    #[test]
    fn model_roundtrip_through_c_abi() {
        let dir = tempfile::tempdir().unwrap();
        let path = CString::new(dir.path().join("m.ckpt").to_str().unwrap()).unwrap();
        unsafe {
            let mut model: *mut RiacModel = ptr::null_mut();
            assert_eq!(riac_model_new(16, 4, 6, 3, 7, &mut model), RiacStatus::RiacOk);
            assert_eq!(riac_model_image_size(model), 16);
            assert_eq!(riac_model_num_classes(model), 3);

            let image = vec![0.25f64; 16 * 16 * 3];
            let mut probs = vec![0.0f64; 3];
            assert_eq!(
                riac_model_predict(model, image.as_ptr(), image.len(), probs.as_mut_ptr(), 3),
                RiacStatus::RiacOk
            );
            assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);

            assert_eq!(riac_model_save(model, path.as_ptr()), RiacStatus::RiacOk);
            let mut loaded: *mut RiacModel = ptr::null_mut();
            assert_eq!(
                riac_model_load(path.as_ptr(), 16, 4, 6, 3, &mut loaded),
                RiacStatus::RiacOk
            );
            let mut probs2 = vec![0.0f64; 3];
            assert_eq!(
                riac_model_predict(loaded, image.as_ptr(), image.len(), probs2.as_mut_ptr(), 3),
                RiacStatus::RiacOk
            );
            assert_eq!(probs, probs2);

            riac_model_free(model);
            riac_model_free(loaded);
        }
    }

    #[test]
    fn errors_set_message_and_code() {
        unsafe {
            let mut model: *mut RiacModel = ptr::null_mut();
            assert_eq!(
                riac_model_new(15, 4, 6, 3, 0, &mut model),
                RiacStatus::RiacInvalidArgument
            );
            let msg = CStr::from_ptr(riac_last_error_message()).to_str().unwrap();
            assert!(msg.contains("image size"), "{msg}");

            let missing = CString::new("/no/such/file.ckpt").unwrap();
            assert_eq!(
                riac_model_load(missing.as_ptr(), 16, 4, 6, 3, &mut model),
                RiacStatus::RiacIoError
            );

            assert_eq!(
                riac_model_predict(ptr::null(), ptr::null(), 0, ptr::null_mut(), 0),
                RiacStatus::RiacInvalidArgument
            );
        }
    }
}
