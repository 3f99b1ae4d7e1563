//! C ABI over the `tbdoa` estimator.
//!
//! Objects cross the boundary as opaque handles (`TbdoaSystem`,
//! `TbdoaTensor`) created and destroyed by this library. Every fallible call
//! returns a `TbdoaStatus`; on failure the message is kept per thread and can
//! be copied out with `tbdoa_last_error_message`. Complex data travels as
//! interleaved `re, im` doubles, matrices column-major, tensors first index
//! fastest.
//!
//! No panic crosses the boundary: one is reported as `TBDOA_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use tbdoa::array::{simulate_cpi, Scene, SimulationConfig, Target};
use tbdoa::cp::{als_decompose, CpConfig};
use tbdoa::doa::{estimate_doas, DoaConfig};
use tbdoa::experiments::{System, SystemConfig};
use tbdoa::tensor::{ComplexMatrix, Tensor3};
use tbdoa::{Complex64, Error};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TbdoaStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// An argument is out of range or inconsistent with another.
    InvalidArgument = 2,
    /// An output buffer is shorter than the result.
    BufferTooSmall = 3,
    TensorError = 4,
    ArrayError = 5,
    CpError = 6,
    DoaError = 7,
    /// ALS stopped at its iteration limit without converging.
    NotConverged = 8,
    Panic = 9,
}

/// Array, beamspace and CPI parameters.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TbdoaSystemParams {
    /// Transmit elements M.
    pub tx_elements: usize,
    /// Receive elements N.
    pub rx_elements: usize,
    /// Transmit element spacing in wavelengths.
    pub tx_spacing: f64,
    /// Receive aperture in wavelengths; positions are drawn once from `geometry_seed`.
    pub rx_aperture: f64,
    pub geometry_seed: u64,
    /// Transmit beams K.
    pub beams: usize,
    pub sector_min_deg: f64,
    pub sector_max_deg: f64,
    /// Grid step of the sector averaging, degrees.
    pub beam_grid_step: f64,
    /// Pulses per CPI Q.
    pub pulses: usize,
}

impl From<&SystemConfig> for TbdoaSystemParams {
    fn from(c: &SystemConfig) -> Self {
        Self {
            tx_elements: c.tx_elements,
            rx_elements: c.rx_elements,
            tx_spacing: c.tx_spacing,
            rx_aperture: c.rx_aperture,
            geometry_seed: c.geometry_seed,
            beams: c.beams,
            sector_min_deg: c.sector.min_deg,
            sector_max_deg: c.sector.max_deg,
            beam_grid_step: c.beam_grid_step,
            pulses: c.pulses,
        }
    }
}

impl From<&TbdoaSystemParams> for SystemConfig {
    fn from(p: &TbdoaSystemParams) -> Self {
        let mut c = SystemConfig {
            tx_elements: p.tx_elements,
            rx_elements: p.rx_elements,
            tx_spacing: p.tx_spacing,
            rx_aperture: p.rx_aperture,
            geometry_seed: p.geometry_seed,
            beams: p.beams,
            beam_grid_step: p.beam_grid_step,
            pulses: p.pulses,
            ..SystemConfig::default()
        };
        c.sector.min_deg = p.sector_min_deg;
        c.sector.max_deg = p.sector_max_deg;
        c
    }
}

/// Array geometry plus designed beamspace matrix.
pub struct TbdoaSystem {
    inner: System,
    tx_spacing: f64,
}

/// Dense K×N×Q complex tensor.
pub struct TbdoaTensor {
    inner: Tensor3,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

struct Failure(TbdoaStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Tensor(_) => TbdoaStatus::TensorError,
            Error::Array(_) => TbdoaStatus::ArrayError,
            Error::Cp(_) => TbdoaStatus::CpError,
            Error::Doa(_) | Error::Target { .. } => TbdoaStatus::DoaError,
            _ => TbdoaStatus::InvalidArgument,
        };
        Failure(status, format!("{}: {e}", e.module()))
    }
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(TbdoaStatus::InvalidArgument, msg.into())
}

fn null(name: &str) -> Failure {
    Failure(TbdoaStatus::NullPointer, format!("{name} is null"))
}

/// Runs `f`, converting errors and panics into a status plus the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> TbdoaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            TbdoaStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            TbdoaStatus::Panic
        }
    }
}

/// Borrows `len` elements, or an empty slice when `len` is 0.
unsafe fn input<'a, T>(p: *const T, len: usize, name: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(name));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn output<'a, T>(p: *mut T, len: usize, name: &str) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(name));
    }
    Ok(slice::from_raw_parts_mut(p, len))
}

unsafe fn handle<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(name))
}

fn complex_from_interleaved(v: &[f64]) -> Vec<Complex64> {
    v.chunks_exact(2)
        .map(|c| Complex64::new(c[0], c[1]))
        .collect()
}

fn write_interleaved(src: &[Complex64], dst: &mut [f64]) {
    for (z, d) in src.iter().zip(dst.chunks_exact_mut(2)) {
        d[0] = z.re;
        d[1] = z.im;
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn tbdoa_version() -> *const c_char {
    static VERSION: &CStr =
        match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
            Ok(v) => v,
            Err(_) => panic!("version string"),
        };
    VERSION.as_ptr()
}

/// Copies the calling thread's last error message into `buf` (truncated,
/// always NUL-terminated when `len > 0`). Returns the full message length
/// plus one, so a return value above `len` means truncation.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn tbdoa_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        bytes.len() + 1
    })
}

/// Fills `out` with the default parameters (M = N = 10, K = 4, Q = 64,
/// d_t = 0.5, sector [−15°, 15°]).
///
/// # Safety
/// `out` must be null or point to a writable `TbdoaSystemParams`.
#[no_mangle]
pub unsafe extern "C" fn tbdoa_system_params_default(out: *mut TbdoaSystemParams) -> TbdoaStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = TbdoaSystemParams::from(&SystemConfig::default());
        Ok(())
    })
}

/// Draws the receive geometry and designs the beamspace matrix.
///
/// # Safety
/// `params` must point to a valid `TbdoaSystemParams`; `out` to writable
/// storage for a handle, which receives a new system on success (release it
/// with `tbdoa_system_free`).
#[no_mangle]
pub unsafe extern "C" fn tbdoa_system_new(
    params: *const TbdoaSystemParams,
    out: *mut *mut TbdoaSystem,
) -> TbdoaStatus {
    guard(|| {
        let p = handle(params, "params")?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = ptr::null_mut();
        if p.pulses == 0 {
            return Err(invalid("pulses must be at least 1"));
        }
        if !(p.tx_spacing > 0.0 && p.tx_spacing <= 0.5) {
            return Err(invalid("tx_spacing must lie in (0, 0.5]"));
        }
        let cfg = SystemConfig::from(p);
        let inner = cfg.build()?;
        *out = Box::into_raw(Box::new(TbdoaSystem {
            inner,
            tx_spacing: p.tx_spacing,
        }));
        Ok(())
    })
}

/// Releases a system; null is ignored.
///
/// # Safety
/// `system` must be null or a handle from `tbdoa_system_new` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tbdoa_system_free(system: *mut TbdoaSystem) {
    if !system.is_null() {
        drop(Box::from_raw(system));
    }
}

/// Writes M (transmit elements) and K (beams) of a system.
///
/// # Safety
/// `system` must be a live handle; `m` and `k` writable.
#[no_mangle]
pub unsafe extern "C" fn tbdoa_system_dims(
    system: *const TbdoaSystem,
    m: *mut usize,
    k: *mut usize,
) -> TbdoaStatus {
    guard(|| {
        let s = handle(system, "system")?;
        let m = m.as_mut().ok_or_else(|| null("m"))?;
        let k = k.as_mut().ok_or_else(|| null("k"))?;
        *m = s.inner.beamspace.tx_elements();
        *k = s.inner.beamspace.beams();
        Ok(())
    })
}

/// Copies the M×K beamspace matrix, column-major interleaved, into `out`
/// (`len` ≥ 2·M·K doubles).
///
/// # Safety
/// `system` must be a live handle; `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn tbdoa_system_beamspace(
    system: *const TbdoaSystem,
    out: *mut f64,
    len: usize,
) -> TbdoaStatus {
    guard(|| {
        let s = handle(system, "system")?;
        let w = s.inner.beamspace.matrix();
        let need = 2 * w.len();
        if len < need {
            return Err(Failure(
                TbdoaStatus::BufferTooSmall,
                format!("beamspace needs {need} doubles, got {len}"),
            ));
        }
        write_interleaved(w.as_slice(), output(out, len, "out")?);
        Ok(())
    })
}

/// Wraps `2·k·n·q` interleaved doubles (first index fastest) as a tensor.
///
/// # Safety
/// `data` must point to `len` readable doubles; `out` to writable handle storage.
#[no_mangle]
pub unsafe extern "C" fn tbdoa_tensor_new(
    k: usize,
    n: usize,
    q: usize,
    data: *const f64,
    len: usize,
    out: *mut *mut TbdoaTensor,
) -> TbdoaStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = ptr::null_mut();
        let count = k
            .checked_mul(n)
            .and_then(|x| x.checked_mul(q))
            .filter(|&c| c > 0)
            .ok_or_else(|| invalid("tensor dimensions must be positive"))?;
        if len != 2 * count {
            return Err(invalid(format!(
                "{k}x{n}x{q} tensor needs {} doubles, got {len}",
                2 * count
            )));
        }
        let values = complex_from_interleaved(input(data, len, "data")?);
        let inner = Tensor3::from_vec((k, n, q), values)?;
        *out = Box::into_raw(Box::new(TbdoaTensor { inner }));
        Ok(())
    })
}

/// Releases a tensor; null is ignored.
///
/// # Safety
/// `tensor` must be null or a live handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tbdoa_tensor_free(tensor: *mut TbdoaTensor) {
    if !tensor.is_null() {
        drop(Box::from_raw(tensor));
    }
}

/// Writes the tensor dimensions.
///
/// # Safety
/// `tensor` must be a live handle; `k`, `n`, `q` writable.
#[no_mangle]
pub unsafe extern "C" fn tbdoa_tensor_dims(
    tensor: *const TbdoaTensor,
    k: *mut usize,
    n: *mut usize,
    q: *mut usize,
) -> TbdoaStatus {
    guard(|| {
        let t = handle(tensor, "tensor")?;
        let (kd, nd, qd) = t.inner.dims();
        *k.as_mut().ok_or_else(|| null("k"))? = kd;
        *n.as_mut().ok_or_else(|| null("n"))? = nd;
        *q.as_mut().ok_or_else(|| null("q"))? = qd;
        Ok(())
    })
}

/// Copies the tensor entries, interleaved and first index fastest, into
/// `out` (`len` ≥ 2·K·N·Q doubles).
///
/// # Safety
/// `tensor` must be a live handle; `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn tbdoa_tensor_data(
    tensor: *const TbdoaTensor,
    out: *mut f64,
    len: usize,
) -> TbdoaStatus {
    guard(|| {
        let t = handle(tensor, "tensor")?;
        let data = t.inner.as_slice();
        if len < 2 * data.len() {
            return Err(Failure(
                TbdoaStatus::BufferTooSmall,
                format!("tensor needs {} doubles, got {len}", 2 * data.len()),
            ));
        }
        write_interleaved(data, output(out, len, "out")?);
        Ok(())
    })
}

/// Simulates one CPI of `num_targets` targets. `coefficients` holds
/// `2·num_targets` interleaved doubles. `snr_db` is per tensor entry against
/// unit target power; pass `INFINITY` for a noiseless tensor.
///
/// # Safety
/// `system` must be a live handle; the three arrays must hold the stated
/// number of doubles; `out` must be writable handle storage.
#[no_mangle]
pub unsafe extern "C" fn tbdoa_simulate(
    system: *const TbdoaSystem,
    angles_deg: *const f64,
    coefficients: *const f64,
    dopplers: *const f64,
    num_targets: usize,
    snr_db: f64,
    seed: u64,
    out: *mut *mut TbdoaTensor,
) -> TbdoaStatus {
    guard(|| {
        let s = handle(system, "system")?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = ptr::null_mut();
        if num_targets == 0 {
            return Err(invalid("num_targets must be at least 1"));
        }
        let angles = input(angles_deg, num_targets, "angles_deg")?;
        let coeffs =
            complex_from_interleaved(input(coefficients, 2 * num_targets, "coefficients")?);
        let dopplers = input(dopplers, num_targets, "dopplers")?;
        let scene = Scene::new(
            (0..num_targets)
                .map(|l| Target {
                    theta_deg: angles[l],
                    coefficient: coeffs[l],
                    doppler: dopplers[l],
                })
                .collect(),
        )?;
        let sim = SimulationConfig {
            pulses: s.inner.pulses,
            snr_db,
            seed,
            pulse_duration: 1.0,
        };
        let inner = simulate_cpi(&s.inner.geometry, &scene, &s.inner.beamspace, &sim)?;
        *out = Box::into_raw(Box::new(TbdoaTensor { inner }));
        Ok(())
    })
}

fn doa_config(s: &TbdoaSystem) -> DoaConfig {
    DoaConfig {
        tx_spacing: s.tx_spacing,
        ..DoaConfig::default()
    }
}

fn write_angles(est: &[tbdoa::doa::DoaEstimate], out: *mut f64, len: usize) -> Result<(), Failure> {
    if len < est.len() {
        return Err(Failure(
            TbdoaStatus::BufferTooSmall,
            format!("{} angles, buffer holds {len}", est.len()),
        ));
    }
    // SAFETY: the caller guarantees `out` holds `len` doubles.
    let dst = unsafe { output(out, len, "angles_out")? };
    for (d, e) in dst.iter_mut().zip(est) {
        *d = e.theta_deg;
    }
    Ok(())
}

/// Decomposes `tensor` at rank `num_targets` (default ALS settings, `seed`
/// for any random start) and writes one angle in degrees per target, in CP
/// column order, to `angles_out`.
///
/// # Safety
/// `system` and `tensor` must be live handles; `angles_out` must point to
/// `angles_len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn tbdoa_estimate(
    system: *const TbdoaSystem,
    tensor: *const TbdoaTensor,
    num_targets: usize,
    seed: u64,
    angles_out: *mut f64,
    angles_len: usize,
) -> TbdoaStatus {
    guard(|| {
        let s = handle(system, "system")?;
        let t = handle(tensor, "tensor")?;
        if num_targets == 0 {
            return Err(invalid("num_targets must be at least 1"));
        }
        let (k, _, _) = t.inner.dims();
        if k != s.inner.beamspace.beams() {
            return Err(invalid(format!(
                "tensor has {k} beams, system has K = {}",
                s.inner.beamspace.beams()
            )));
        }
        let cfg = CpConfig {
            seed,
            ..CpConfig::new(num_targets)
        };
        let cp = als_decompose(&t.inner, &cfg)?;
        if !cp.converged {
            return Err(Failure(
                TbdoaStatus::NotConverged,
                format!("ALS did not converge in {} iterations", cfg.max_iter),
            ));
        }
        let est = estimate_doas(&cp.factors.x, &s.inner.beamspace, &doa_config(s))?;
        write_angles(&est, angles_out, angles_len)
    })
}

/// Roots the transmit signatures directly: `signatures` is a K×L
/// column-major interleaved matrix (`2·K·num_targets` doubles), one target
/// per column, any complex scale.
///
/// # Safety
/// `system` must be a live handle; `signatures` must hold the stated number
/// of doubles; `angles_out` must point to `angles_len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn tbdoa_estimate_from_signatures(
    system: *const TbdoaSystem,
    signatures: *const f64,
    num_targets: usize,
    angles_out: *mut f64,
    angles_len: usize,
) -> TbdoaStatus {
    guard(|| {
        let s = handle(system, "system")?;
        if num_targets == 0 {
            return Err(invalid("num_targets must be at least 1"));
        }
        let k = s.inner.beamspace.beams();
        let values =
            complex_from_interleaved(input(signatures, 2 * k * num_targets, "signatures")?);
        let x = ComplexMatrix::from_column_slice(k, num_targets, &values);
        let est = estimate_doas(&x, &s.inner.beamspace, &doa_config(s))?;
        write_angles(&est, angles_out, angles_len)
    })
}
