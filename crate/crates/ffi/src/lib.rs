//! C ABI over `kac-core`.
//!
//! Every function returns a [`KacStatus`]; on failure a message is kept per
//! thread and can be read with [`kac_last_error_message`]. Simulations are
//! opaque handles created by `kac_simulation_new*` and released with
//! [`kac_simulation_free`]. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use kac_core::engine::{run_rng, EventLoop};
use kac_core::init::{self, ParticleSystem};
use kac_core::metrics::{entropy_knn, w1_1d, w1_assignment};
use kac_core::model::{self, CollisionKernel, TrueMaxwell, VelocityPair};
use kac_core::Error;
use rand_chacha::ChaCha8Rng;

/// Result code of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KacStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Domain = 3,
    Numerical = 4,
    Unsupported = 5,
    Io = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KacKernelKind {
    HardSpheres = 0,
    CutoffMaxwell = 1,
    TrueMaxwell = 2,
}

/// Collision kernel parameters. `kind` holds a `KacKernelKind` value.
/// `constant` is used by hard spheres and true Maxwell molecules (0 selects
/// the unit angular mass for the latter); `cutoff` is the angular cutoff of
/// true Maxwell molecules.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct KacKernelSpec {
    pub kind: u32,
    pub constant: f64,
    pub cutoff: f64,
}

/// Opaque simulation: a particle system, its event loop and its random stream.
pub struct KacSimulation {
    system: ParticleSystem,
    events: EventLoop,
    rng: ChaCha8Rng,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> KacStatus {
    match err {
        Error::Precondition(_) | Error::Config(_) => KacStatus::InvalidArgument,
        Error::Domain(_) => KacStatus::Domain,
        Error::Numerical { .. } => KacStatus::Numerical,
        Error::UnsupportedOracle(_) => KacStatus::Unsupported,
        Error::Io(_) | Error::Serialization(_) => KacStatus::Io,
    }
}

enum Failure {
    Null(&'static str),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure::Core(Error::Precondition(msg.into()))
}

/// Run `body`, translating errors and panics into status codes.
fn guard(body: impl FnOnce() -> Result<(), Failure>) -> KacStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            KacStatus::Ok
        }
        Ok(Err(Failure::Null(name))) => {
            set_error(format!("null pointer: {name}"));
            KacStatus::NullPointer
        }
        Ok(Err(Failure::Core(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {msg}"));
            KacStatus::Panic
        }
    }
}

unsafe fn input<'a, T>(p: *const T, len: usize, name: &'static str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Null(name));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn output<'a, T>(p: *mut T, len: usize, name: &'static str) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(Failure::Null(name));
    }
    Ok(slice::from_raw_parts_mut(p, len))
}

unsafe fn write<T>(p: *mut T, value: T, name: &'static str) -> Result<(), Failure> {
    if p.is_null() {
        return Err(Failure::Null(name));
    }
    *p = value;
    Ok(())
}

unsafe fn sim_ref<'a>(sim: *const KacSimulation) -> Result<&'a KacSimulation, Failure> {
    sim.as_ref().ok_or(Failure::Null("simulation"))
}

unsafe fn sim_mut<'a>(sim: *mut KacSimulation) -> Result<&'a mut KacSimulation, Failure> {
    sim.as_mut().ok_or(Failure::Null("simulation"))
}

fn kernel_from(spec: &KacKernelSpec, dim: usize) -> Result<CollisionKernel, Failure> {
    const HS: u32 = KacKernelKind::HardSpheres as u32;
    const GMM: u32 = KacKernelKind::CutoffMaxwell as u32;
    const TMM: u32 = KacKernelKind::TrueMaxwell as u32;
    Ok(match spec.kind {
        HS => CollisionKernel::hard_spheres(spec.constant)?,
        GMM => CollisionKernel::CutoffMaxwell,
        TMM => CollisionKernel::TrueMaxwell(if spec.constant == 0.0 {
            TrueMaxwell::normalized(spec.cutoff, dim)?
        } else {
            TrueMaxwell::new(spec.cutoff, spec.constant, dim)?
        }),
        other => return Err(invalid(format!("unknown kernel kind {other}"))),
    })
}

fn build(system: ParticleSystem, kernel: &KacKernelSpec, seed: u64) -> Result<Box<KacSimulation>, Failure> {
    let kernel = kernel_from(kernel, system.dim())?;
    let events = EventLoop::new(&system, &kernel)?;
    Ok(Box::new(KacSimulation {
        system,
        events,
        rng: run_rng(seed, 0),
    }))
}

/// Copy the message of the last failed call on this thread into `buffer`
/// (NUL-terminated, truncated to `capacity`). Returns the full message length
/// in bytes, or 0 if the last call succeeded.
///
/// # Safety
/// `buffer` must be valid for `capacity` bytes, or null with `capacity == 0`.
#[no_mangle]
pub unsafe extern "C" fn kac_last_error_message(buffer: *mut c_char, capacity: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else { return 0 };
        let bytes = msg.as_bytes();
        if !buffer.is_null() && capacity > 0 {
            let n = bytes.len().min(capacity - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buffer, n);
            *buffer.add(n) = 0;
        }
        bytes.len()
    })
}

/// Simulation from explicit velocities (`particles × dim`, row-major).
///
/// # Safety
/// `velocities` must hold `particles * dim` doubles; `kernel` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn kac_simulation_new(
    velocities: *const f64,
    particles: usize,
    dim: usize,
    kernel: *const KacKernelSpec,
    seed: u64,
    out: *mut *mut KacSimulation,
) -> KacStatus {
    guard(|| {
        let len = particles.checked_mul(dim).ok_or_else(|| invalid("particles × dim overflows"))?;
        let v = input(velocities, len, "velocities")?;
        let kernel = kernel.as_ref().ok_or(Failure::Null("kernel"))?;
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        if dim == 0 {
            return Err(invalid("dimension must be positive"));
        }
        let system = ParticleSystem::from_velocities(dim, v.to_vec())?;
        *out = Box::into_raw(build(system, kernel, seed)?);
        Ok(())
    })
}

/// Simulation started from `particles` iid Gaussian velocities with per-particle
/// energy `energy`, projected onto the energy sphere when `sphere` is nonzero.
///
/// # Safety
/// `kernel` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn kac_simulation_new_gaussian(
    particles: usize,
    dim: usize,
    energy: f64,
    sphere: i32,
    kernel: *const KacKernelSpec,
    seed: u64,
    out: *mut *mut KacSimulation,
) -> KacStatus {
    guard(|| {
        let kernel = kernel.as_ref().ok_or(Failure::Null("kernel"))?;
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        if dim == 0 {
            return Err(invalid("dimension must be positive"));
        }
        let f0 = init::OneParticleDensity::gaussian(dim, energy / dim as f64)?;
        let mut rng = run_rng(seed, u64::MAX);
        let mut system = init::sample_iid(&f0, particles, &mut rng)?;
        if sphere != 0 {
            system = if dim == 1 {
                init::condition_to_energy_sphere(&system, energy)?
            } else {
                init::condition_to_sphere(&system, energy)?
            };
        }
        *out = Box::into_raw(build(system, kernel, seed)?);
        Ok(())
    })
}

/// Release a simulation. Null is ignored.
///
/// # Safety
/// `sim` must come from `kac_simulation_new*` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn kac_simulation_free(sim: *mut KacSimulation) {
    if !sim.is_null() {
        drop(Box::from_raw(sim));
    }
}

/// One candidate event; `accepted` (optional) receives 1 if a collision happened.
///
/// # Safety
/// `sim` must be a live handle; `accepted` may be null.
#[no_mangle]
pub unsafe extern "C" fn kac_simulation_step(sim: *mut KacSimulation, accepted: *mut i32) -> KacStatus {
    guard(|| {
        let s = sim_mut(sim)?;
        let outcome = s.events.step(&mut s.system, &mut s.rng)?;
        if !accepted.is_null() {
            *accepted = outcome.accepted as i32;
        }
        Ok(())
    })
}

/// Advance the clock to exactly `time`.
///
/// # Safety
/// `sim` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn kac_simulation_advance_to(sim: *mut KacSimulation, time: f64) -> KacStatus {
    guard(|| {
        let s = sim_mut(sim)?;
        s.events.advance_to(&mut s.system, time, &mut s.rng)?;
        Ok(())
    })
}

/// # Safety
/// `sim` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn kac_simulation_time(sim: *const KacSimulation, out: *mut f64) -> KacStatus {
    guard(|| write(out, sim_ref(sim)?.system.time, "out"))
}

/// # Safety
/// `sim` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn kac_simulation_particles(sim: *const KacSimulation, out: *mut usize) -> KacStatus {
    guard(|| write(out, sim_ref(sim)?.system.n(), "out"))
}

/// # Safety
/// `sim` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn kac_simulation_dim(sim: *const KacSimulation, out: *mut usize) -> KacStatus {
    guard(|| write(out, sim_ref(sim)?.system.dim(), "out"))
}

/// Total kinetic energy `Σ|v_i|²`.
///
/// # Safety
/// `sim` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn kac_simulation_energy(sim: *const KacSimulation, out: *mut f64) -> KacStatus {
    guard(|| write(out, sim_ref(sim)?.system.recompute_totals().1, "out"))
}

/// Accepted collisions so far.
///
/// # Safety
/// `sim` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn kac_simulation_collisions(sim: *const KacSimulation, out: *mut u64) -> KacStatus {
    guard(|| write(out, sim_ref(sim)?.events.telemetry().accepted, "out"))
}

/// Copy all velocities (`particles × dim`) into `out`, which holds `capacity` doubles.
///
/// # Safety
/// `sim` must be a live handle and `out` valid for `capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn kac_simulation_velocities(sim: *const KacSimulation, out: *mut f64, capacity: usize) -> KacStatus {
    guard(|| {
        let v = sim_ref(sim)?.system.velocities();
        if capacity < v.len() {
            return Err(invalid(format!("buffer holds {capacity} doubles, need {}", v.len())));
        }
        output(out, v.len(), "out")?.copy_from_slice(v);
        Ok(())
    })
}

/// Elastic collision of `vi`, `vj` (each of length `dim`) along the unit vector `sigma`.
///
/// # Safety
/// All pointers must be valid for `dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn kac_collide_pair(
    dim: usize,
    vi: *const f64,
    vj: *const f64,
    sigma: *const f64,
    out_vi: *mut f64,
    out_vj: *mut f64,
) -> KacStatus {
    guard(|| {
        if dim == 0 {
            return Err(invalid("dimension must be positive"));
        }
        let pair = VelocityPair::new(input(vi, dim, "vi")?.to_vec(), input(vj, dim, "vj")?.to_vec())?;
        let post = model::collide_pair(&pair, input(sigma, dim, "sigma")?)?;
        output(out_vi, dim, "out_vi")?.copy_from_slice(&post.vi);
        output(out_vj, dim, "out_vj")?.copy_from_slice(&post.vj);
        Ok(())
    })
}

/// Kac's rotation of the scalar pair `(vi, vj)` by `theta`.
///
/// # Safety
/// `out_vi` and `out_vj` must be valid.
#[no_mangle]
pub unsafe extern "C" fn kac_rotate(vi: f64, vj: f64, theta: f64, out_vi: *mut f64, out_vj: *mut f64) -> KacStatus {
    guard(|| {
        if !(vi.is_finite() && vj.is_finite() && theta.is_finite()) {
            return Err(invalid("arguments must be finite"));
        }
        let (a, b) = model::kac_rotate(vi, vj, theta);
        write(out_vi, a, "out_vi")?;
        write(out_vj, b, "out_vj")
    })
}

/// Exact W1 between two one-dimensional samples.
///
/// # Safety
/// `xs` and `ys` must hold `n` and `m` doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn kac_w1_1d(xs: *const f64, n: usize, ys: *const f64, m: usize, out: *mut f64) -> KacStatus {
    guard(|| {
        let w = w1_1d(input(xs, n, "xs")?, input(ys, m, "ys")?)?;
        write(out, w, "out")
    })
}

/// Exact W1 between two equal-size point clouds in `R^dim` by optimal assignment.
///
/// # Safety
/// `xs` and `ys` must hold `points * dim` doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn kac_w1_assignment(
    xs: *const f64,
    ys: *const f64,
    points: usize,
    dim: usize,
    out: *mut f64,
) -> KacStatus {
    guard(|| {
        let len = points.checked_mul(dim).ok_or_else(|| invalid("points × dim overflows"))?;
        let w = w1_assignment(input(xs, len, "xs")?, input(ys, len, "ys")?, dim)?;
        write(out, w, "out")
    })
}

/// Kozachenko–Leonenko differential entropy of `points` samples in `R^dim`.
///
/// # Safety
/// `samples` must hold `points * dim` doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn kac_entropy_knn(samples: *const f64, points: usize, dim: usize, k: usize, out: *mut f64) -> KacStatus {
    guard(|| {
        let len = points.checked_mul(dim).ok_or_else(|| invalid("points × dim overflows"))?;
        let h = entropy_knn(input(samples, len, "samples")?, dim, k)?;
        write(out, h.value, "out")
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::rand_core::{RngCore, SeedableRng};

    fn last_error() -> String {
        let mut buf = vec![0 as c_char; 256];
        let n = unsafe { kac_last_error_message(buf.as_mut_ptr(), buf.len()) };
        let bytes: Vec<u8> = buf.iter().take(n.min(255)).map(|&c| c as u8).collect();
        String::from_utf8(bytes).unwrap()
    }

    const GMM: KacKernelSpec = KacKernelSpec {
        kind: KacKernelKind::CutoffMaxwell as u32,
        constant: 0.0,
        cutoff: 0.0,
    };

    #[test]
    fn simulation_lifecycle_conserves_energy() {
        let mut sim = ptr::null_mut();
        let status = unsafe { kac_simulation_new_gaussian(100, 3, 3.0, 1, &GMM, 5, &mut sim) };
        assert_eq!(status, KacStatus::Ok);
        let mut e0 = 0.0;
        let mut e1 = 0.0;
        let mut t = 0.0;
        let mut hits = 0u64;
        let mut n = 0usize;
        unsafe {
            assert_eq!(kac_simulation_energy(sim, &mut e0), KacStatus::Ok);
            assert_eq!(kac_simulation_advance_to(sim, 2.0), KacStatus::Ok);
            let mut accepted = 0;
            assert_eq!(kac_simulation_step(sim, &mut accepted), KacStatus::Ok);
            assert_eq!(accepted, 1);
            kac_simulation_energy(sim, &mut e1);
            kac_simulation_time(sim, &mut t);
            kac_simulation_collisions(sim, &mut hits);
            kac_simulation_particles(sim, &mut n);
        }
        assert!((e1 - e0).abs() <= 1e-12 * e0);
        assert!((e0 - 300.0).abs() < 1e-9);
        assert!(t > 2.0);
        // About N/2 collisions per unit time with the 1/N rate scaling.
        assert!(hits > 50 && hits < 200, "{hits}");
        assert_eq!(n, 100);
        let mut v = vec![0.0; 300];
        unsafe {
            assert_eq!(kac_simulation_velocities(sim, v.as_mut_ptr(), 299), KacStatus::InvalidArgument);
            assert_eq!(kac_simulation_velocities(sim, v.as_mut_ptr(), 300), KacStatus::Ok);
            assert_eq!(kac_simulation_advance_to(sim, 1.0), KacStatus::InvalidArgument);
            kac_simulation_free(sim);
        }
        assert!((v.iter().map(|x| x * x).sum::<f64>() - e1).abs() < 1e-9);
    }

    #[test]
    fn same_seed_same_trajectory() {
        let v0: Vec<f64> = (0..40).map(|i| ((i * 37 % 11) as f64 - 5.0) / 3.0).collect();
        let hs = KacKernelSpec {
            kind: KacKernelKind::HardSpheres as u32,
            constant: 1.0,
            cutoff: 0.0,
        };
        let mut out = [vec![0.0; 40], vec![0.0; 40]];
        for buf in out.iter_mut() {
            let mut sim = ptr::null_mut();
            unsafe {
                assert_eq!(kac_simulation_new(v0.as_ptr(), 20, 2, &hs, 9, &mut sim), KacStatus::Ok);
                assert_eq!(kac_simulation_advance_to(sim, 1.5), KacStatus::Ok);
                kac_simulation_velocities(sim, buf.as_mut_ptr(), 40);
                kac_simulation_free(sim);
            }
        }
        assert_eq!(out[0], out[1]);
        assert_ne!(out[0], v0);
    }

    #[test]
    fn errors_are_reported() {
        let mut sim = ptr::null_mut();
        let status = unsafe { kac_simulation_new(ptr::null(), 4, 3, &GMM, 1, &mut sim) };
        assert_eq!(status, KacStatus::NullPointer);
        assert!(last_error().contains("velocities"));
        let one = [1.0, 2.0, 3.0];
        let status = unsafe { kac_simulation_new(one.as_ptr(), 1, 3, &GMM, 1, &mut sim) };
        assert_eq!(status, KacStatus::InvalidArgument);
        assert!(last_error().contains("N ≥ 2"), "{}", last_error());
        let tmm = KacKernelSpec {
            kind: KacKernelKind::TrueMaxwell as u32,
            constant: 0.0,
            cutoff: 0.0,
        };
        let status = unsafe { kac_simulation_new_gaussian(10, 3, 3.0, 0, &tmm, 1, &mut sim) };
        assert_ne!(status, KacStatus::Ok);
        assert!(sim.is_null());
        let unknown = KacKernelSpec { kind: 17, ..GMM };
        let status = unsafe { kac_simulation_new_gaussian(10, 3, 3.0, 0, &unknown, 1, &mut sim) };
        assert_eq!(status, KacStatus::InvalidArgument);
        unsafe {
            assert_eq!(kac_simulation_step(ptr::null_mut(), ptr::null_mut()), KacStatus::NullPointer);
            kac_simulation_free(ptr::null_mut());
        }
        let mut x = 0.0;
        assert_eq!(unsafe { kac_w1_1d([1.0].as_ptr(), 1, [2.0].as_ptr(), 1, &mut x) }, KacStatus::Ok);
        assert_eq!(last_error(), "");
        assert_eq!(x, 1.0);
    }

    #[test]
    fn pure_functions() {
        let (mut a, mut b) = (0.0, 0.0);
        unsafe { kac_rotate(1.0, 0.0, std::f64::consts::FRAC_PI_2, &mut a, &mut b) };
        assert!(a.abs() < 1e-15 && (b + 1.0).abs() < 1e-15);
        let vi = [1.0, 0.0];
        let vj = [-1.0, 0.0];
        let sigma = [0.0, 1.0];
        let mut oi = [0.0; 2];
        let mut oj = [0.0; 2];
        let s = unsafe { kac_collide_pair(2, vi.as_ptr(), vj.as_ptr(), sigma.as_ptr(), oi.as_mut_ptr(), oj.as_mut_ptr()) };
        assert_eq!(s, KacStatus::Ok);
        assert_eq!(oi, [0.0, 1.0]);
        assert_eq!(oj, [0.0, -1.0]);
        let bad = [0.0, 2.0];
        let s = unsafe { kac_collide_pair(2, vi.as_ptr(), vj.as_ptr(), bad.as_ptr(), oi.as_mut_ptr(), oj.as_mut_ptr()) };
        assert_eq!(s, KacStatus::InvalidArgument);
        let xs = [0.0, 0.0, 1.0, 1.0];
        let ys = [1.0, 1.0, 0.0, 0.0];
        let mut w = -1.0;
        assert_eq!(unsafe { kac_w1_assignment(xs.as_ptr(), ys.as_ptr(), 2, 2, &mut w) }, KacStatus::Ok);
        assert_eq!(w, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<f64> = (0..2000).map(|_| (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64).collect();
        let mut h = f64::NAN;
        assert_eq!(unsafe { kac_entropy_knn(pts.as_ptr(), 2000, 1, 3, &mut h) }, KacStatus::Ok);
        // Uniform on [0,1): entropy 0.
        assert!(h.abs() < 0.05, "{h}");
        assert_eq!(unsafe { kac_entropy_knn(pts.as_ptr(), 2, 1, 3, &mut h) }, KacStatus::InvalidArgument);
    }
}
