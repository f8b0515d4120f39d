//! C ABI for the nlspike kernels.
//!
//! The surface is an opaque configuration handle plus flat-array entry
//! points returning error codes. Inputs arrive as doubles and are quantized
//! onto the kernels' 8-bit front-end grids internally, exactly as the
//! experiment harness does, so bindings observe the same numerics as the
//! Rust API. Every function is panic-safe at the boundary.

use std::ffi::c_int;
use std::panic::{catch_unwind, AssertUnwindSafe};

use nlspike::divneuron::DivisionError;
use nlspike::fixedq::{quantize, QGrid, QValue};
use nlspike::nlsops::{self, NlsConfig, NlsError};

pub const NLSPIKE_OK: c_int = 0;
pub const NLSPIKE_ERR_NULL_ARGUMENT: c_int = 1;
pub const NLSPIKE_ERR_INVALID_CONFIG: c_int = 2;
pub const NLSPIKE_ERR_EMPTY_INPUT: c_int = 3;
pub const NLSPIKE_ERR_DENOMINATOR_UNDERFLOW: c_int = 4;
pub const NLSPIKE_ERR_NON_FINITE_INPUT: c_int = 5;
pub const NLSPIKE_ERR_INTERNAL: c_int = 6;

/// Opaque kernel configuration. Create with `nlspike_config_new`, release
/// with `nlspike_config_free`.
pub struct NlspikeConfig {
    inner: NlsConfig,
}

fn err_code(e: &NlsError) -> c_int {
    match e {
        NlsError::Division(DivisionError::DenominatorUnderflow { .. }) => {
            NLSPIKE_ERR_DENOMINATOR_UNDERFLOW
        }
        NlsError::EmptyInput => NLSPIKE_ERR_EMPTY_INPUT,
        _ => NLSPIKE_ERR_INTERNAL,
    }
}

fn guarded(f: impl FnOnce() -> c_int) -> c_int {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or(NLSPIKE_ERR_INTERNAL)
}

fn quantize_slice(xs: &[f64], grid: QGrid) -> Option<Vec<QValue>> {
    if xs.iter().any(|v| !v.is_finite()) {
        return None;
    }
    Some(xs.iter().map(|&v| quantize(v.clamp(grid.min_value(), grid.max_value()), grid).value).collect())
}

/// Build a kernel configuration. `h` is the clipping half-interval, `k` the
/// exponential table segment count (power of two), `t`/`l` the division
/// window and population sizes (powers of two), `n_cordic` the CORDIC
/// iteration count. On success writes the handle to `out` and returns 0.
#[no_mangle]
pub unsafe extern "C" fn nlspike_config_new(
    h: f64,
    k: u32,
    t: u32,
    l: u32,
    n_cordic: u32,
    out: *mut *mut NlspikeConfig,
) -> c_int {
    if out.is_null() {
        return NLSPIKE_ERR_NULL_ARGUMENT;
    }
    guarded(|| match NlsConfig::new(h, k, t, l, n_cordic) {
        Ok(inner) => {
            unsafe { *out = Box::into_raw(Box::new(NlspikeConfig { inner })) };
            NLSPIKE_OK
        }
        Err(_) => NLSPIKE_ERR_INVALID_CONFIG,
    })
}

/// Release a configuration handle. Accepts NULL.
#[no_mangle]
pub unsafe extern "C" fn nlspike_config_free(cfg: *mut NlspikeConfig) {
    if !cfg.is_null() {
        drop(unsafe { Box::from_raw(cfg) });
    }
}

/// Spiking softmax over `len` logits; writes `len` probabilities to `out`.
#[no_mangle]
pub unsafe extern "C" fn nlspike_softmax(
    cfg: *const NlspikeConfig,
    logits: *const f64,
    len: usize,
    out: *mut f64,
) -> c_int {
    if cfg.is_null() || logits.is_null() || out.is_null() {
        return NLSPIKE_ERR_NULL_ARGUMENT;
    }
    if len == 0 {
        return NLSPIKE_ERR_EMPTY_INPUT;
    }
    guarded(|| {
        let cfg = unsafe { &(*cfg).inner };
        let zs = unsafe { std::slice::from_raw_parts(logits, len) };
        let Some(zq) = quantize_slice(zs, cfg.input_grid()) else {
            return NLSPIKE_ERR_NON_FINITE_INPUT;
        };
        match nlsops::nls_softmax(&zq, cfg) {
            Ok(p) => {
                let out = unsafe { std::slice::from_raw_parts_mut(out, len) };
                for (slot, v) in out.iter_mut().zip(&p) {
                    *slot = v.to_f64();
                }
                NLSPIKE_OK
            }
            Err(e) => err_code(&e),
        }
    })
}

/// Spiking SiLU of one scalar; writes the result to `out`.
#[no_mangle]
pub unsafe extern "C" fn nlspike_silu(cfg: *const NlspikeConfig, x: f64, out: *mut f64) -> c_int {
    if cfg.is_null() || out.is_null() {
        return NLSPIKE_ERR_NULL_ARGUMENT;
    }
    guarded(|| {
        let cfg = unsafe { &(*cfg).inner };
        if !x.is_finite() {
            return NLSPIKE_ERR_NON_FINITE_INPUT;
        }
        let grid = nlsops::input_grid(cfg.h.max(x.abs().max(1.0)));
        let xq = quantize(x, grid).value;
        match nlsops::nls_silu(xq, cfg) {
            Ok(v) => {
                unsafe { *out = v.to_f64() };
                NLSPIKE_OK
            }
            Err(e) => err_code(&e),
        }
    })
}

/// Spiking RMSNorm over `len` activations; writes `len` values to `out`.
#[no_mangle]
pub unsafe extern "C" fn nlspike_rmsnorm(
    cfg: *const NlspikeConfig,
    x: *const f64,
    len: usize,
    eps: f64,
    out: *mut f64,
) -> c_int {
    norm_entry(cfg, x, len, eps, out, nlsops::nls_rmsnorm)
}

/// Spiking LayerNorm (mean subtraction then RMSNorm); writes `len` values.
#[no_mangle]
pub unsafe extern "C" fn nlspike_layernorm(
    cfg: *const NlspikeConfig,
    x: *const f64,
    len: usize,
    eps: f64,
    out: *mut f64,
) -> c_int {
    norm_entry(cfg, x, len, eps, out, nlsops::nls_layernorm)
}

fn norm_entry(
    cfg: *const NlspikeConfig,
    x: *const f64,
    len: usize,
    eps: f64,
    out: *mut f64,
    op: fn(&[QValue], f64, &NlsConfig) -> Result<Vec<QValue>, NlsError>,
) -> c_int {
    if cfg.is_null() || x.is_null() || out.is_null() {
        return NLSPIKE_ERR_NULL_ARGUMENT;
    }
    if len == 0 {
        return NLSPIKE_ERR_EMPTY_INPUT;
    }
    if !eps.is_finite() || eps < 0.0 {
        return NLSPIKE_ERR_NON_FINITE_INPUT;
    }
    guarded(|| {
        let cfg = unsafe { &(*cfg).inner };
        let xs = unsafe { std::slice::from_raw_parts(x, len) };
        let Some(xq) = quantize_slice(xs, QGrid::signed(8, -5)) else {
            return NLSPIKE_ERR_NON_FINITE_INPUT;
        };
        match op(&xq, eps, cfg) {
            Ok(y) => {
                let out = unsafe { std::slice::from_raw_parts_mut(out, len) };
                for (slot, v) in out.iter_mut().zip(&y) {
                    *slot = v.to_f64();
                }
                NLSPIKE_OK
            }
            Err(e) => err_code(&e),
        }
    })
}

/// Per-class relative error bound of the spiking softmax.
#[no_mangle]
pub unsafe extern "C" fn nlspike_bound_softmax(cfg: *const NlspikeConfig) -> f64 {
    if cfg.is_null() {
        return f64::NAN;
    }
    nlsops::bound_softmax(unsafe { &(*cfg).inner })
}

/// Absolute error bound of the spiking SiLU at input magnitude `x`.
#[no_mangle]
pub unsafe extern "C" fn nlspike_bound_silu(cfg: *const NlspikeConfig, x: f64) -> f64 {
    if cfg.is_null() {
        return f64::NAN;
    }
    nlsops::bound_silu(x, unsafe { &(*cfg).inner })
}

/// Per-coordinate relative error bound of the spiking RMSNorm at dimension `d`.
#[no_mangle]
pub unsafe extern "C" fn nlspike_bound_rmsnorm(cfg: *const NlspikeConfig, d: usize) -> f64 {
    if cfg.is_null() || d == 0 {
        return f64::NAN;
    }
    nlsops::bound_rms(d, unsafe { &(*cfg).inner })
}

/// Size in bytes of the serialized exponential lookup table.
#[no_mangle]
pub unsafe extern "C" fn nlspike_lut_size(cfg: *const NlspikeConfig) -> usize {
    if cfg.is_null() {
        return 0;
    }
    unsafe { &(*cfg).inner }.exp_table.to_bytes().len()
}

/// Serialize the exponential lookup table into `buf` (capacity `cap`).
/// Returns 0 and sets `written`; fails with `NLSPIKE_ERR_EMPTY_INPUT` when
/// the buffer is too small.
#[no_mangle]
pub unsafe extern "C" fn nlspike_lut_emit(
    cfg: *const NlspikeConfig,
    buf: *mut u8,
    cap: usize,
    written: *mut usize,
) -> c_int {
    if cfg.is_null() || buf.is_null() || written.is_null() {
        return NLSPIKE_ERR_NULL_ARGUMENT;
    }
    guarded(|| {
        let bytes = unsafe { &(*cfg).inner }.exp_table.to_bytes();
        if bytes.len() > cap {
            return NLSPIKE_ERR_EMPTY_INPUT;
        }
        unsafe {
            std::ptr::copy_nonoverlapping(bytes.as_ptr(), buf, bytes.len());
            *written = bytes.len();
        }
        NLSPIKE_OK
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn handle() -> *mut NlspikeConfig {
        let mut out: *mut NlspikeConfig = std::ptr::null_mut();
        let rc = unsafe { nlspike_config_new(5.0, 64, 16, 256, 8, &mut out) };
        assert_eq!(rc, NLSPIKE_OK);
        assert!(!out.is_null());
        out
    }

    #[test]
    fn config_lifecycle_and_validation() {
        let h = handle();
        unsafe { nlspike_config_free(h) };
        unsafe { nlspike_config_free(std::ptr::null_mut()) };
        let mut out: *mut NlspikeConfig = std::ptr::null_mut();
        assert_eq!(unsafe { nlspike_config_new(5.0, 63, 16, 256, 8, &mut out) }, NLSPIKE_ERR_INVALID_CONFIG);
        assert_eq!(
            unsafe { nlspike_config_new(5.0, 64, 16, 256, 8, std::ptr::null_mut()) },
            NLSPIKE_ERR_NULL_ARGUMENT
        );
    }

    #[test]
    fn softmax_matches_rust_api() {
        let h = handle();
        let z = [0.3, -1.0, 2.0, 0.0];
        let mut out = [0.0f64; 4];
        let rc = unsafe { nlspike_softmax(h, z.as_ptr(), 4, out.as_mut_ptr()) };
        assert_eq!(rc, NLSPIKE_OK);
        let cfg = NlsConfig::recommended();
        let zq: Vec<QValue> = z.iter().map(|&v| quantize(v, cfg.input_grid()).value).collect();
        let want = nlsops::nls_softmax(&zq, &cfg).unwrap();
        for i in 0..4 {
            assert_eq!(out[i], want[i].to_f64());
        }
        let sum: f64 = out.iter().sum();
        assert!((sum - 1.0).abs() < 0.05);
        unsafe { nlspike_config_free(h) };
    }

    #[test]
    fn silu_and_norms_run_through_the_boundary() {
        let h = handle();
        let mut y = 0.0f64;
        assert_eq!(unsafe { nlspike_silu(h, 1.5, &mut y) }, NLSPIKE_OK);
        assert!((y - 1.5 / (1.0 + (-1.5f64).exp())).abs() < 0.01);
        assert_eq!(unsafe { nlspike_silu(h, f64::NAN, &mut y) }, NLSPIKE_ERR_NON_FINITE_INPUT);

        let x = [1.0, -2.0, 0.5, 3.0];
        let mut out = [0.0f64; 4];
        assert_eq!(unsafe { nlspike_rmsnorm(h, x.as_ptr(), 4, 1e-5, out.as_mut_ptr()) }, NLSPIKE_OK);
        assert!(out[0] > 0.0 && out[1] < 0.0);
        assert_eq!(unsafe { nlspike_layernorm(h, x.as_ptr(), 4, 1e-5, out.as_mut_ptr()) }, NLSPIKE_OK);

        let zeros = [0.0f64; 4];
        assert_eq!(
            unsafe { nlspike_rmsnorm(h, zeros.as_ptr(), 4, 0.0, out.as_mut_ptr()) },
            NLSPIKE_ERR_DENOMINATOR_UNDERFLOW
        );
        assert_eq!(
            unsafe { nlspike_rmsnorm(h, std::ptr::null(), 4, 0.0, out.as_mut_ptr()) },
            NLSPIKE_ERR_NULL_ARGUMENT
        );
        unsafe { nlspike_config_free(h) };
    }

    #[test]
    fn bounds_and_lut_are_exposed() {
        let h = handle();
        let b = unsafe { nlspike_bound_softmax(h) };
        assert!(b > 7.0e-3 && b < 8.0e-3);
        assert!(unsafe { nlspike_bound_silu(h, 5.0) } <= 0.038);
        assert!(unsafe { nlspike_bound_rmsnorm(h, 64) } > 0.0);
        assert!(unsafe { nlspike_bound_softmax(std::ptr::null()) }.is_nan());

        let size = unsafe { nlspike_lut_size(h) };
        assert_eq!(size, 20 + 64 + 128);
        let mut buf = vec![0u8; size];
        let mut written = 0usize;
        let rc = unsafe { nlspike_lut_emit(h, buf.as_mut_ptr(), buf.len(), &mut written) };
        assert_eq!(rc, NLSPIKE_OK);
        assert_eq!(written, size);
        let cfg = NlsConfig::recommended();
        assert_eq!(buf, cfg.exp_table.to_bytes());
        unsafe { nlspike_config_free(h) };
    }
}
