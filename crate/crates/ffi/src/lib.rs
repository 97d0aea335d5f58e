//! C ABI over `prpl`: a replay buffer holding opaque byte payloads, scheme
//! priorities and the loss functions.
//!
//! Every function returns a [`PrplStatus`]; on failure a message is kept for
//! the calling thread and can be read with [`prpl_last_error`]. Outputs are
//! written through caller-provided pointers only on success. A buffer handle
//! must not be used from two threads at once.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use prpl::losses::{pal_lambda, DatasetStats, LossKind, LossSpec};
use prpl::replay::{ReplayBuffer, SchemeConfig, SchemeKind};
use prpl::rng::seeded;
use prpl::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrplStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Empty = 3,
    Domain = 4,
    PayloadTooLarge = 5,
    Snapshot = 6,
    Io = 7,
    BufferTooSmall = 8,
    Panic = 9,
}

/// Values of `PrplSchemeConfig::kind`; equal to the snapshot scheme tags.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrplSchemeKind {
    Uniform = 0,
    Per = 1,
    Lap = 2,
}

/// Values of `PrplLossSpec::kind`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrplLossKind {
    L1 = 0,
    Mse = 1,
    Huber = 2,
    Pal = 3,
    PerTau = 4,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrplSchemeConfig {
    pub kind: u32,
    pub alpha: f64,
    pub beta: f64,
    pub epsilon: f64,
    pub kappa: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrplLossSpec {
    pub kind: u32,
    pub kappa: f64,
    pub alpha: f64,
    pub tau: f64,
    pub beta: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrplDatasetStats {
    pub lambda: f64,
    pub eta: f64,
    pub n: usize,
}

/// Opaque buffer handle.
pub struct PrplBuffer {
    inner: ReplayBuffer<Vec<u8>>,
    max_payload: usize,
}

impl PrplBuffer {
    pub fn core(&self) -> &ReplayBuffer<Vec<u8>> {
        &self.inner
    }
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

struct Fail(PrplStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::InvalidArgument(_) | Error::InvalidPair(_) => PrplStatus::InvalidArgument,
            Error::EmptyStructure(_) => PrplStatus::Empty,
            Error::Domain(_) | Error::DegenerateDistribution(_) => PrplStatus::Domain,
            Error::Snapshot(_) | Error::Audit(_) => PrplStatus::Snapshot,
            Error::Io(_) => PrplStatus::Io,
        };
        Fail(status, e.to_string())
    }
}

fn fail(status: PrplStatus, msg: impl Into<String>) -> Fail {
    Fail(status, msg.into())
}

type Res<T> = Result<T, Fail>;

fn guard(f: impl FnOnce() -> Res<()>) -> PrplStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PrplStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            PrplStatus::Panic
        }
    }
}

fn non_null<T>(p: *const T, what: &str) -> Res<()> {
    if p.is_null() {
        Err(fail(PrplStatus::NullPointer, format!("{what} is null")))
    } else {
        Ok(())
    }
}

/// Borrow `len` elements; a null pointer is allowed when `len` is 0.
unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Res<&'a [T]> {
    if len == 0 {
        return Ok(&[]);
    }
    non_null(p, what)?;
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, what: &str) -> Res<&'a mut [T]> {
    if len == 0 {
        return Ok(&mut []);
    }
    non_null(p, what)?;
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn buffer<'a>(p: *const PrplBuffer) -> Res<&'a PrplBuffer> {
    non_null(p, "buffer")?;
    Ok(&*p)
}

unsafe fn buffer_mut<'a>(p: *mut PrplBuffer) -> Res<&'a mut PrplBuffer> {
    non_null(p, "buffer")?;
    Ok(&mut *p)
}

unsafe fn path(p: *const c_char) -> Res<PathBuf> {
    non_null(p, "path")?;
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(PrplStatus::InvalidArgument, "path is not UTF-8"))?;
    Ok(PathBuf::from(s))
}

pub fn scheme_from_c(c: &PrplSchemeConfig) -> Result<SchemeConfig, Error> {
    let kind = u8::try_from(c.kind)
        .ok()
        .and_then(SchemeKind::from_tag)
        .ok_or_else(|| Error::InvalidArgument(format!("unknown scheme kind {}", c.kind)))?;
    let cfg = SchemeConfig {
        kind,
        alpha: c.alpha,
        beta: c.beta,
        epsilon: c.epsilon,
        kappa: c.kappa,
        beta_anneal: None,
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn scheme_to_c(s: &SchemeConfig) -> PrplSchemeConfig {
    PrplSchemeConfig {
        kind: s.kind.tag() as u32,
        alpha: s.alpha,
        beta: s.beta,
        epsilon: s.epsilon,
        kappa: s.kappa,
    }
}

pub fn loss_from_c(c: &PrplLossSpec) -> Result<LossSpec, Error> {
    let kind = match c.kind {
        0 => LossKind::L1,
        1 => LossKind::Mse,
        2 => LossKind::Huber,
        3 => LossKind::Pal,
        4 => LossKind::PerTau,
        k => return Err(Error::InvalidArgument(format!("unknown loss kind {k}"))),
    };
    let spec = LossSpec {
        kind,
        kappa: c.kappa,
        alpha: c.alpha,
        tau: c.tau,
        beta: c.beta,
    };
    spec.validate()?;
    Ok(spec)
}

/// NUL-terminated crate version. Static storage.
#[no_mangle]
pub extern "C" fn prpl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or an empty string. Valid
/// until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn prpl_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Default parameters for scheme `kind`.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn prpl_scheme_default(kind: u32, out: *mut PrplSchemeConfig) -> PrplStatus {
    guard(|| {
        non_null(out, "out")?;
        let kind = u8::try_from(kind)
            .ok()
            .and_then(SchemeKind::from_tag)
            .ok_or_else(|| fail(PrplStatus::InvalidArgument, format!("unknown scheme kind {kind}")))?;
        *out = scheme_to_c(&SchemeConfig::default_for(kind));
        Ok(())
    })
}

/// # Safety
/// `scheme` must point to a valid config and `out` be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn prpl_buffer_new(
    capacity: usize,
    scheme: *const PrplSchemeConfig,
    max_payload: usize,
    out: *mut *mut PrplBuffer,
) -> PrplStatus {
    guard(|| {
        non_null(scheme, "scheme")?;
        non_null(out, "out")?;
        let cfg = scheme_from_c(&*scheme)?;
        let inner = ReplayBuffer::new(capacity, cfg)?;
        *out = Box::into_raw(Box::new(PrplBuffer { inner, max_payload }));
        Ok(())
    })
}

/// Releases a buffer. Null is ignored.
///
/// # Safety
/// `buf` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn prpl_buffer_free(buf: *mut PrplBuffer) {
    if !buf.is_null() {
        let _ = catch_unwind(AssertUnwindSafe(|| drop(Box::from_raw(buf))));
    }
}

/// # Safety
/// `buf` must be a live handle, `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn prpl_buffer_len(buf: *const PrplBuffer, out: *mut usize) -> PrplStatus {
    guard(|| {
        let b = buffer(buf)?;
        non_null(out, "out")?;
        *out = b.inner.len();
        Ok(())
    })
}

/// # Safety
/// `buf` must be a live handle, `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn prpl_buffer_capacity(buf: *const PrplBuffer, out: *mut usize) -> PrplStatus {
    guard(|| {
        let b = buffer(buf)?;
        non_null(out, "out")?;
        *out = b.inner.capacity();
        Ok(())
    })
}

/// Copies `len` bytes into the next slot; the slot id goes to `out_slot`.
///
/// # Safety
/// `data` must be readable for `len` bytes (may be null if `len` is 0).
#[no_mangle]
pub unsafe extern "C" fn prpl_buffer_add(
    buf: *mut PrplBuffer,
    data: *const u8,
    len: usize,
    out_slot: *mut usize,
) -> PrplStatus {
    guard(|| {
        let b = buffer_mut(buf)?;
        non_null(out_slot, "out_slot")?;
        if len > b.max_payload {
            return Err(fail(
                PrplStatus::PayloadTooLarge,
                format!("payload of {len} bytes exceeds limit {}", b.max_payload),
            ));
        }
        let bytes = slice(data, len, "data")?.to_vec();
        *out_slot = b.inner.add(bytes);
        Ok(())
    })
}

/// Borrowed view of a slot's payload, valid until the slot is overwritten
/// or the buffer freed.
///
/// # Safety
/// `buf` must be a live handle, outputs valid for writes.
#[no_mangle]
pub unsafe extern "C" fn prpl_buffer_payload(
    buf: *const PrplBuffer,
    slot: usize,
    out_data: *mut *const u8,
    out_len: *mut usize,
) -> PrplStatus {
    guard(|| {
        let b = buffer(buf)?;
        non_null(out_data, "out_data")?;
        non_null(out_len, "out_len")?;
        let p = b
            .inner
            .get(slot)
            .ok_or_else(|| fail(PrplStatus::InvalidArgument, format!("slot {slot} not in use")))?;
        *out_data = p.as_ptr();
        *out_len = p.len();
        Ok(())
    })
}

/// Draws `batch` slots using a generator seeded with `seed`. Each output
/// array must hold `batch` elements.
///
/// # Safety
/// Output pointers must be valid for `batch` writes.
#[no_mangle]
pub unsafe extern "C" fn prpl_buffer_sample(
    buf: *mut PrplBuffer,
    batch: usize,
    seed: u64,
    out_indices: *mut usize,
    out_probabilities: *mut f64,
    out_is_weights: *mut f64,
) -> PrplStatus {
    guard(|| {
        let b = buffer_mut(buf)?;
        let idx = slice_mut(out_indices, batch, "out_indices")?;
        let probs = slice_mut(out_probabilities, batch, "out_probabilities")?;
        let weights = slice_mut(out_is_weights, batch, "out_is_weights")?;
        let mut rng = seeded(seed);
        let s = b.inner.sample(batch, &mut rng)?;
        idx.copy_from_slice(&s.indices);
        probs.copy_from_slice(&s.probabilities);
        weights.copy_from_slice(&s.is_weights);
        Ok(())
    })
}

/// # Safety
/// `slots` and `abs_deltas` must be readable for `n` elements.
#[no_mangle]
pub unsafe extern "C" fn prpl_buffer_update_priorities(
    buf: *mut PrplBuffer,
    slots: *const usize,
    abs_deltas: *const f64,
    n: usize,
) -> PrplStatus {
    guard(|| {
        let b = buffer_mut(buf)?;
        let s = slice(slots, n, "slots")?;
        let d = slice(abs_deltas, n, "abs_deltas")?;
        b.inner.update_priorities(s, d)?;
        Ok(())
    })
}

/// Serialises the buffer. With `out` null or `cap` too small, only the
/// required size is stored in `out_len` and `BufferTooSmall` is returned.
///
/// # Safety
/// `out` must be writable for `cap` bytes when non-null.
#[no_mangle]
pub unsafe extern "C" fn prpl_buffer_to_bytes(
    buf: *const PrplBuffer,
    out: *mut u8,
    cap: usize,
    out_len: *mut usize,
) -> PrplStatus {
    guard(|| {
        let b = buffer(buf)?;
        non_null(out_len, "out_len")?;
        let bytes = b.inner.to_snapshot_bytes();
        *out_len = bytes.len();
        if out.is_null() || cap < bytes.len() {
            return Err(fail(
                PrplStatus::BufferTooSmall,
                format!("snapshot needs {} bytes, got {cap}", bytes.len()),
            ));
        }
        ptr::copy_nonoverlapping(bytes.as_ptr(), out, bytes.len());
        Ok(())
    })
}

fn restore(inner: ReplayBuffer<Vec<u8>>, max_payload: usize) -> Res<PrplBuffer> {
    if let Some(slot) = (0..inner.len()).find(|&i| inner.get(i).is_some_and(|p| p.len() > max_payload)) {
        return Err(fail(
            PrplStatus::PayloadTooLarge,
            format!("slot {slot} holds a payload above the limit {max_payload}"),
        ));
    }
    Ok(PrplBuffer { inner, max_payload })
}

/// # Safety
/// `data` must be readable for `len` bytes, `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn prpl_buffer_from_bytes(
    data: *const u8,
    len: usize,
    max_payload: usize,
    out: *mut *mut PrplBuffer,
) -> PrplStatus {
    guard(|| {
        non_null(out, "out")?;
        let bytes = slice(data, len, "data")?;
        let b = restore(ReplayBuffer::from_snapshot_bytes(bytes)?, max_payload)?;
        *out = Box::into_raw(Box::new(b));
        Ok(())
    })
}

/// # Safety
/// `file` must be a NUL-terminated UTF-8 path.
#[no_mangle]
pub unsafe extern "C" fn prpl_buffer_save(buf: *const PrplBuffer, file: *const c_char) -> PrplStatus {
    guard(|| {
        let b = buffer(buf)?;
        let p = path(file)?;
        std::fs::write(&p, b.inner.to_snapshot_bytes()).map_err(|e| fail(PrplStatus::Io, e.to_string()))
    })
}

/// # Safety
/// `file` must be a NUL-terminated UTF-8 path, `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn prpl_buffer_load(
    file: *const c_char,
    max_payload: usize,
    out: *mut *mut PrplBuffer,
) -> PrplStatus {
    guard(|| {
        non_null(out, "out")?;
        let p = path(file)?;
        let bytes = std::fs::read(&p).map_err(|e| fail(PrplStatus::Io, e.to_string()))?;
        let b = restore(ReplayBuffer::from_snapshot_bytes(&bytes)?, max_payload)?;
        *out = Box::into_raw(Box::new(b));
        Ok(())
    })
}

/// Priority the scheme assigns to an absolute TD error.
///
/// # Safety
/// `scheme` must be valid, `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn prpl_priority_of(
    scheme: *const PrplSchemeConfig,
    abs_delta: f64,
    out: *mut f64,
) -> PrplStatus {
    guard(|| {
        non_null(scheme, "scheme")?;
        non_null(out, "out")?;
        let cfg = scheme_from_c(&*scheme)?;
        if !(abs_delta >= 0.0 && abs_delta.is_finite()) {
            return Err(fail(PrplStatus::InvalidArgument, format!("bad absolute error {abs_delta}")));
        }
        *out = cfg.priority_of(abs_delta);
        Ok(())
    })
}

/// Elementwise loss values and gradients. `stats` may be null, in which case
/// λ and η are computed from `deltas` for the losses that need them.
///
/// # Safety
/// `deltas`, `out_values` and `out_grads` must hold `n` elements.
#[no_mangle]
pub unsafe extern "C" fn prpl_losses(
    spec: *const PrplLossSpec,
    deltas: *const f64,
    n: usize,
    stats: *const PrplDatasetStats,
    out_values: *mut f64,
    out_grads: *mut f64,
) -> PrplStatus {
    guard(|| {
        non_null(spec, "spec")?;
        let spec = loss_from_c(&*spec)?;
        let d = slice(deltas, n, "deltas")?;
        let values = slice_mut(out_values, n, "out_values")?;
        let grads = slice_mut(out_grads, n, "out_grads")?;
        if n == 0 {
            return Ok(());
        }
        let stats = if !stats.is_null() {
            let s = &*stats;
            Some(DatasetStats::new(s.lambda, s.eta, s.n)?)
        } else if spec.kind.needs_stats() {
            Some(DatasetStats::for_loss(&spec, d)?)
        } else {
            None
        };
        let mut v = Vec::with_capacity(n);
        let mut g = Vec::with_capacity(n);
        for &x in d {
            v.push(spec.value(x, stats.as_ref())?);
            g.push(spec.grad(x, stats.as_ref())?);
        }
        values.copy_from_slice(&v);
        grads.copy_from_slice(&g);
        Ok(())
    })
}

/// PAL normaliser `λ = Σ max(|δ|^α, κ^α) / N`.
///
/// # Safety
/// `deltas` must hold `n` elements, `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn prpl_pal_lambda(
    deltas: *const f64,
    n: usize,
    alpha: f64,
    kappa: f64,
    out: *mut f64,
) -> PrplStatus {
    guard(|| {
        non_null(out, "out")?;
        let d = slice(deltas, n, "deltas")?;
        *out = pal_lambda(d, alpha, kappa)?;
        Ok(())
    })
}
