#ifndef KAC_H
#define KAC_H

#include <stddef.h>
#include <stdint.h>

typedef enum KacKernelKind {
  KAC_KERNEL_KIND_HARD_SPHERES = 0,
  KAC_KERNEL_KIND_CUTOFF_MAXWELL = 1,
  KAC_KERNEL_KIND_TRUE_MAXWELL = 2,
} KacKernelKind;

/**
 * Result code of every call.
 */
typedef enum KacStatus {
  KAC_STATUS_OK = 0,
  KAC_STATUS_NULL_POINTER = 1,
  KAC_STATUS_INVALID_ARGUMENT = 2,
  KAC_STATUS_DOMAIN = 3,
  KAC_STATUS_NUMERICAL = 4,
  KAC_STATUS_UNSUPPORTED = 5,
  KAC_STATUS_IO = 6,
  KAC_STATUS_PANIC = 7,
} KacStatus;

/**
 * Opaque simulation: a particle system, its event loop and its random stream.
 */
typedef struct KacSimulation KacSimulation;

/**
 * Collision kernel parameters. `kind` holds a `KacKernelKind` value.
 * `constant` is used by hard spheres and true Maxwell molecules (0 selects
 * the unit angular mass for the latter); `cutoff` is the angular cutoff of
 * true Maxwell molecules.
 */
typedef struct KacKernelSpec {
  uint32_t kind;
  double constant;
  double cutoff;
} KacKernelSpec;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copy the message of the last failed call on this thread into `buffer`
 * (NUL-terminated, truncated to `capacity`). Returns the full message length
 * in bytes, or 0 if the last call succeeded.
 *
 * # Safety
 * `buffer` must be valid for `capacity` bytes, or null with `capacity == 0`.
 */
size_t kac_last_error_message(char *buffer, size_t capacity);

/**
 * Simulation from explicit velocities (`particles × dim`, row-major).
 *
 * # Safety
 * `velocities` must hold `particles * dim` doubles; `kernel` and `out` must be valid.
 */
enum KacStatus kac_simulation_new(const double *velocities,
                                  size_t particles,
                                  size_t dim,
                                  const struct KacKernelSpec *kernel,
                                  uint64_t seed,
                                  struct KacSimulation **out);

/**
 * Simulation started from `particles` iid Gaussian velocities with per-particle
 * energy `energy`, projected onto the energy sphere when `sphere` is nonzero.
 *
 * # Safety
 * `kernel` and `out` must be valid pointers.
 */
enum KacStatus kac_simulation_new_gaussian(size_t particles,
                                           size_t dim,
                                           double energy,
                                           int32_t sphere,
                                           const struct KacKernelSpec *kernel,
                                           uint64_t seed,
                                           struct KacSimulation **out);

/**
 * Release a simulation. Null is ignored.
 *
 * # Safety
 * `sim` must come from `kac_simulation_new*` and not be used afterwards.
 */
void kac_simulation_free(struct KacSimulation *sim);

/**
 * One candidate event; `accepted` (optional) receives 1 if a collision happened.
 *
 * # Safety
 * `sim` must be a live handle; `accepted` may be null.
 */
enum KacStatus kac_simulation_step(struct KacSimulation *sim, int32_t *accepted);

/**
 * Advance the clock to exactly `time`.
 *
 * # Safety
 * `sim` must be a live handle.
 */
enum KacStatus kac_simulation_advance_to(struct KacSimulation *sim, double time);

/**
 * # Safety
 * `sim` must be a live handle and `out` valid.
 */
enum KacStatus kac_simulation_time(const struct KacSimulation *sim, double *out);

/**
 * # Safety
 * `sim` must be a live handle and `out` valid.
 */
enum KacStatus kac_simulation_particles(const struct KacSimulation *sim, size_t *out);

/**
 * # Safety
 * `sim` must be a live handle and `out` valid.
 */
enum KacStatus kac_simulation_dim(const struct KacSimulation *sim, size_t *out);

/**
 * Total kinetic energy `Σ|v_i|²`.
 *
 * # Safety
 * `sim` must be a live handle and `out` valid.
 */
enum KacStatus kac_simulation_energy(const struct KacSimulation *sim, double *out);

/**
 * Accepted collisions so far.
 *
 * # Safety
 * `sim` must be a live handle and `out` valid.
 */
enum KacStatus kac_simulation_collisions(const struct KacSimulation *sim, uint64_t *out);

/**
 * Copy all velocities (`particles × dim`) into `out`, which holds `capacity` doubles.
 *
 * # Safety
 * `sim` must be a live handle and `out` valid for `capacity` doubles.
 */
enum KacStatus kac_simulation_velocities(const struct KacSimulation *sim,
                                         double *out,
                                         size_t capacity);

/**
 * Elastic collision of `vi`, `vj` (each of length `dim`) along the unit vector `sigma`.
 *
 * # Safety
 * All pointers must be valid for `dim` doubles.
 */
enum KacStatus kac_collide_pair(size_t dim,
                                const double *vi,
                                const double *vj,
                                const double *sigma,
                                double *out_vi,
                                double *out_vj);

/**
 * Kac's rotation of the scalar pair `(vi, vj)` by `theta`.
 *
 * # Safety
 * `out_vi` and `out_vj` must be valid.
 */
enum KacStatus kac_rotate(double vi, double vj, double theta, double *out_vi, double *out_vj);

/**
 * Exact W1 between two one-dimensional samples.
 *
 * # Safety
 * `xs` and `ys` must hold `n` and `m` doubles; `out` must be valid.
 */
enum KacStatus kac_w1_1d(const double *xs, size_t n, const double *ys, size_t m, double *out);

/**
 * Exact W1 between two equal-size point clouds in `R^dim` by optimal assignment.
 *
 * # Safety
 * `xs` and `ys` must hold `points * dim` doubles; `out` must be valid.
 */
enum KacStatus kac_w1_assignment(const double *xs,
                                 const double *ys,
                                 size_t points,
                                 size_t dim,
                                 double *out);

/**
 * Kozachenko–Leonenko differential entropy of `points` samples in `R^dim`.
 *
 * # Safety
 * `samples` must hold `points * dim` doubles; `out` must be valid.
 */
enum KacStatus kac_entropy_knn(const double *samples,
                               size_t points,
                               size_t dim,
                               size_t k,
                               double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* KAC_H */
