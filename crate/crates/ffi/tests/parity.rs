use std::ffi::{CStr, CString};
use std::ptr;

use prpl::losses::{DatasetStats, LossSpec};
use prpl::replay::{ReplayBuffer, SchemeConfig, SchemeKind};
use prpl::rng::{seeded, unit_f64};
use prpl_ffi::*;
use rand::{Rng, RngCore};

fn c_scheme(kind: PrplSchemeKind) -> PrplSchemeConfig {
    let mut s = PrplSchemeConfig { kind: 99, alpha: 0.0, beta: 0.0, epsilon: 0.0, kappa: 0.0 };
    assert_eq!(unsafe { prpl_scheme_default(kind as u32, &mut s) }, PrplStatus::Ok);
    s
}

fn new_buffer(capacity: usize, scheme: &PrplSchemeConfig, max_payload: usize) -> *mut PrplBuffer {
    let mut b = ptr::null_mut();
    assert_eq!(unsafe { prpl_buffer_new(capacity, scheme, max_payload, &mut b) }, PrplStatus::Ok);
    b
}

fn add(b: *mut PrplBuffer, data: &[u8]) -> usize {
    let mut slot = usize::MAX;
    assert_eq!(unsafe { prpl_buffer_add(b, data.as_ptr(), data.len(), &mut slot) }, PrplStatus::Ok);
    slot
}

fn payload(b: *const PrplBuffer, slot: usize) -> Vec<u8> {
    let (mut p, mut n) = (ptr::null(), 0usize);
    assert_eq!(unsafe { prpl_buffer_payload(b, slot, &mut p, &mut n) }, PrplStatus::Ok);
    unsafe { std::slice::from_raw_parts(p, n) }.to_vec()
}

struct Batch {
    indices: Vec<usize>,
    probabilities: Vec<f64>,
    is_weights: Vec<f64>,
}

fn sample(b: *mut PrplBuffer, batch: usize, seed: u64) -> Result<Batch, PrplStatus> {
    let mut out = Batch {
        indices: vec![0; batch],
        probabilities: vec![0.0; batch],
        is_weights: vec![0.0; batch],
    };
    let st = unsafe {
        prpl_buffer_sample(
            b,
            batch,
            seed,
            out.indices.as_mut_ptr(),
            out.probabilities.as_mut_ptr(),
            out.is_weights.as_mut_ptr(),
        )
    };
    if st == PrplStatus::Ok {
        Ok(out)
    } else {
        Err(st)
    }
}

fn snapshot(b: *const PrplBuffer) -> Vec<u8> {
    let mut len = 0usize;
    assert_eq!(unsafe { prpl_buffer_to_bytes(b, ptr::null_mut(), 0, &mut len) }, PrplStatus::BufferTooSmall);
    let mut out = vec![0u8; len];
    assert_eq!(unsafe { prpl_buffer_to_bytes(b, out.as_mut_ptr(), out.len(), &mut len) }, PrplStatus::Ok);
    out
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(prpl_last_error()) }.to_string_lossy().into_owned()
}

#[test]
fn singleton_sample_returns_payload() {
    let b = new_buffer(4, &c_scheme(PrplSchemeKind::Per), 16);
    let slot = add(b, b"hello");
    let s = sample(b, 1, 7).unwrap();
    assert_eq!(s.indices, vec![slot]);
    assert_eq!(payload(b, s.indices[0]), b"hello");
    assert_eq!(s.probabilities, vec![1.0]);
    unsafe { prpl_buffer_free(b) };
}

#[test]
fn slot_assignment_and_ring_match_core() {
    let scheme = c_scheme(PrplSchemeKind::Lap);
    let b = new_buffer(100, &scheme, 8);
    let mut core: ReplayBuffer<Vec<u8>> = ReplayBuffer::new(100, SchemeConfig::lap()).unwrap();
    for i in 0..1000u32 {
        let bytes = i.to_le_bytes().to_vec();
        assert_eq!(add(b, &bytes), core.add(bytes));
    }
    let mut len = 0;
    unsafe { prpl_buffer_len(b, &mut len) };
    assert_eq!(len, 100);
    assert_eq!(payload(b, 0), 900u32.to_le_bytes());
    unsafe { prpl_buffer_free(b) };
}

#[test]
fn mirrored_operations_are_bit_identical() {
    for kind in [PrplSchemeKind::Uniform, PrplSchemeKind::Per, PrplSchemeKind::Lap] {
        let scheme = c_scheme(kind);
        let b = new_buffer(257, &scheme, 64);
        let mut core: ReplayBuffer<Vec<u8>> =
            ReplayBuffer::new(257, prpl_ffi::scheme_from_c(&scheme).unwrap()).unwrap();
        let mut rng = seeded(kind as u64 + 100);
        for op in 0..10_000u64 {
            match rng.random_range(0..3) {
                0 => {
                    let len = rng.random_range(0..=64);
                    let mut bytes = vec![0u8; len];
                    rng.fill_bytes(&mut bytes);
                    assert_eq!(add(b, &bytes), core.add(bytes));
                }
                1 if !core.is_empty() => {
                    let batch = rng.random_range(1..=16);
                    let seed = rng.next_u64();
                    let got = sample(b, batch, seed).unwrap();
                    let want = core.sample(batch, &mut seeded(seed)).unwrap();
                    assert_eq!(got.indices, want.indices, "op {op}");
                    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
                    assert_eq!(bits(&got.probabilities), bits(&want.probabilities));
                    assert_eq!(bits(&got.is_weights), bits(&want.is_weights));
                    for (i, t) in got.indices.iter().zip(&want.transitions) {
                        assert_eq!(&payload(b, *i), t);
                    }
                }
                _ if !core.is_empty() => {
                    let n = rng.random_range(1..=8);
                    let slots: Vec<usize> = (0..n).map(|_| rng.random_range(0..core.len())).collect();
                    let deltas: Vec<f64> = (0..n).map(|_| 5.0 * unit_f64(&mut rng)).collect();
                    let st = unsafe { prpl_buffer_update_priorities(b, slots.as_ptr(), deltas.as_ptr(), n) };
                    assert_eq!(st, PrplStatus::Ok);
                    core.update_priorities(&slots, &deltas).unwrap();
                }
                _ => {}
            }
        }
        assert_eq!(snapshot(b), core.to_snapshot_bytes());
        unsafe { prpl_buffer_free(b) };
    }
}

#[test]
fn uniform_weights_are_one() {
    let b = new_buffer(8, &c_scheme(PrplSchemeKind::Uniform), 4);
    for i in 0..5u8 {
        add(b, &[i]);
    }
    assert!(sample(b, 32, 3).unwrap().is_weights.iter().all(|&w| w == 1.0));
    unsafe { prpl_buffer_free(b) };
}

#[test]
fn zero_error_keeps_epsilon_floor() {
    let b = new_buffer(8, &c_scheme(PrplSchemeKind::Per), 4);
    let slot = add(b, b"x");
    let d = 0.0;
    assert_eq!(unsafe { prpl_buffer_update_priorities(b, &slot, &d, 1) }, PrplStatus::Ok);
    let s = sample(b, 3, 1).unwrap();
    assert_eq!(s.indices, vec![slot; 3]);
    unsafe { prpl_buffer_free(b) };
}

#[test]
fn errors_are_reported() {
    let b = new_buffer(4, &c_scheme(PrplSchemeKind::Per), 2);
    assert!(matches!(sample(b, 1, 0), Err(PrplStatus::Empty)));
    assert!(!last_error().is_empty());
    let mut slot = 0;
    let big = [0u8; 3];
    assert_eq!(unsafe { prpl_buffer_add(b, big.as_ptr(), 3, &mut slot) }, PrplStatus::PayloadTooLarge);
    assert!(last_error().contains("exceeds"));
    assert_eq!(unsafe { prpl_buffer_add(ptr::null_mut(), big.as_ptr(), 1, &mut slot) }, PrplStatus::NullPointer);
    let d = 1.0;
    let bad_slot = 3usize;
    assert_eq!(unsafe { prpl_buffer_update_priorities(b, &bad_slot, &d, 1) }, PrplStatus::InvalidArgument);

    let mut cfg = c_scheme(PrplSchemeKind::Per);
    cfg.kind = 7;
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { prpl_buffer_new(4, &cfg, 1, &mut out) }, PrplStatus::InvalidArgument);
    assert!(out.is_null());
    unsafe { prpl_buffer_free(b) };
}

#[test]
fn snapshot_round_trips() {
    let scheme = c_scheme(PrplSchemeKind::Lap);
    let b = new_buffer(16, &scheme, 32);
    for i in 0..20u8 {
        add(b, &vec![i; i as usize]);
    }
    let slots = [1usize, 4, 9];
    let deltas = [0.2, 3.0, 7.5];
    unsafe { prpl_buffer_update_priorities(b, slots.as_ptr(), deltas.as_ptr(), 3) };
    let bytes = snapshot(b);

    let mut restored = ptr::null_mut();
    assert_eq!(unsafe { prpl_buffer_from_bytes(bytes.as_ptr(), bytes.len(), 32, &mut restored) }, PrplStatus::Ok);
    assert_eq!(snapshot(restored), bytes);
    assert_eq!(sample(b, 8, 5).unwrap().indices, sample(restored, 8, 5).unwrap().indices);

    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("buf.prpl").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { prpl_buffer_save(b, path.as_ptr()) }, PrplStatus::Ok);
    let mut loaded = ptr::null_mut();
    assert_eq!(unsafe { prpl_buffer_load(path.as_ptr(), 32, &mut loaded) }, PrplStatus::Ok);
    assert_eq!(snapshot(loaded), snapshot(b));
    let from_core = ReplayBuffer::<Vec<u8>>::from_snapshot_bytes(&snapshot(b)).unwrap();
    assert_eq!(from_core.to_snapshot_bytes(), snapshot(b));

    let mut small = ptr::null_mut();
    assert_eq!(
        unsafe { prpl_buffer_from_bytes(bytes.as_ptr(), bytes.len(), 4, &mut small) },
        PrplStatus::PayloadTooLarge
    );
    let mut corrupt = bytes.clone();
    corrupt[0] = b'X';
    assert_eq!(
        unsafe { prpl_buffer_from_bytes(corrupt.as_ptr(), corrupt.len(), 32, &mut small) },
        PrplStatus::Snapshot
    );
    let missing = CString::new(dir.path().join("none").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { prpl_buffer_load(missing.as_ptr(), 32, &mut small) }, PrplStatus::Io);
    assert!(small.is_null());
    unsafe {
        prpl_buffer_free(b);
        prpl_buffer_free(restored);
        prpl_buffer_free(loaded);
    }
}

fn losses(spec: &PrplLossSpec, deltas: &[f64], stats: Option<&PrplDatasetStats>) -> (Vec<f64>, Vec<f64>) {
    let mut v = vec![f64::NAN; deltas.len()];
    let mut g = vec![f64::NAN; deltas.len()];
    let st = unsafe {
        prpl_losses(
            spec,
            deltas.as_ptr(),
            deltas.len(),
            stats.map_or(ptr::null(), |s| s as *const _),
            v.as_mut_ptr(),
            g.as_mut_ptr(),
        )
    };
    assert_eq!(st, PrplStatus::Ok, "{}", last_error());
    (v, g)
}

fn spec(kind: PrplLossKind, kappa: f64, alpha: f64, tau: f64, beta: f64) -> PrplLossSpec {
    PrplLossSpec { kind: kind as u32, kappa, alpha, tau, beta }
}

#[test]
fn loss_examples() {
    let pal = spec(PrplLossKind::Pal, 1.0, 1.0, 0.0, 0.0);
    let stats = PrplDatasetStats { lambda: 1.5, eta: 1.0, n: 2 };
    let (_, g) = losses(&pal, &[0.5, 2.0], Some(&stats));
    assert!((g[0] - 1.0 / 3.0).abs() < 1e-15 && (g[1] - 4.0 / 3.0).abs() < 1e-15);
    // λ from the batch itself is the same 1.5 here.
    assert_eq!(losses(&pal, &[0.5, 2.0], None).1, g);

    let mse = spec(PrplLossKind::Mse, 0.0, 0.0, 0.0, 0.0);
    assert_eq!(losses(&mse, &[3.0], None), (vec![4.5], vec![3.0]));
    assert_eq!(losses(&mse, &[], None), (vec![], vec![]));

    let mut lambda = 0.0;
    let d = [0.5, 2.0];
    assert_eq!(unsafe { prpl_pal_lambda(d.as_ptr(), 2, 1.0, 1.0, &mut lambda) }, PrplStatus::Ok);
    assert_eq!(lambda, 1.5);

    let bad = spec(PrplLossKind::PerTau, 1.0, 1.0, 0.0, 1.0);
    let (mut v, mut g) = (0.0, 0.0);
    assert_eq!(
        unsafe { prpl_losses(&bad, d.as_ptr(), 1, ptr::null(), &mut v, &mut g) },
        PrplStatus::InvalidArgument
    );
}

#[test]
fn losses_match_core_bitwise() {
    let mut rng = seeded(5);
    let specs = [
        spec(PrplLossKind::L1, 1.0, 0.0, 0.0, 0.0),
        spec(PrplLossKind::Mse, 1.0, 0.0, 0.0, 0.0),
        spec(PrplLossKind::Huber, 0.7, 0.0, 0.0, 0.0),
        spec(PrplLossKind::Pal, 1.0, 0.4, 0.0, 0.0),
        spec(PrplLossKind::PerTau, 1.0, 0.6, 2.0, 0.4),
    ];
    for s in &specs {
        let core_spec: LossSpec = prpl_ffi::loss_from_c(s).unwrap();
        for _ in 0..200 {
            let n = rng.random_range(1..64);
            let deltas: Vec<f64> = (0..n).map(|_| 6.0 * unit_f64(&mut rng) - 3.0).collect();
            let (v, g) = losses(s, &deltas, None);
            let stats = core_spec
                .kind
                .needs_stats()
                .then(|| DatasetStats::for_loss(&core_spec, &deltas).unwrap());
            for (i, &d) in deltas.iter().enumerate() {
                assert_eq!(v[i].to_bits(), core_spec.value(d, stats.as_ref()).unwrap().to_bits());
                assert_eq!(g[i].to_bits(), core_spec.grad(d, stats.as_ref()).unwrap().to_bits());
            }
        }
    }
}

#[test]
fn priority_of_matches_core() {
    for kind in [SchemeKind::Uniform, SchemeKind::Per, SchemeKind::Lap] {
        let core = SchemeConfig::default_for(kind);
        let c = prpl_ffi::scheme_to_c(&core);
        for d in [0.0, 0.3, 1.0, 2.5, 40.0] {
            let mut p = 0.0;
            assert_eq!(unsafe { prpl_priority_of(&c, d, &mut p) }, PrplStatus::Ok);
            assert_eq!(p.to_bits(), core.priority_of(d).to_bits());
        }
        let mut p = 0.0;
        assert_eq!(unsafe { prpl_priority_of(&c, -1.0, &mut p) }, PrplStatus::InvalidArgument);
    }
}
