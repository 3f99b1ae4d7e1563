#ifndef TBDOA_H
#define TBDOA_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stddef.h>
#include <stdint.h>

// Result code of every fallible call.
typedef enum TbdoaStatus {
  TBDOA_STATUS_OK = 0,
  // A required pointer argument was null.
  TBDOA_STATUS_NULL_POINTER = 1,
  // An argument is out of range or inconsistent with another.
  TBDOA_STATUS_INVALID_ARGUMENT = 2,
  // An output buffer is shorter than the result.
  TBDOA_STATUS_BUFFER_TOO_SMALL = 3,
  TBDOA_STATUS_TENSOR_ERROR = 4,
  TBDOA_STATUS_ARRAY_ERROR = 5,
  TBDOA_STATUS_CP_ERROR = 6,
  TBDOA_STATUS_DOA_ERROR = 7,
  // ALS stopped at its iteration limit without converging.
  TBDOA_STATUS_NOT_CONVERGED = 8,
  TBDOA_STATUS_PANIC = 9,
} TbdoaStatus;

// Array geometry plus designed beamspace matrix.
typedef struct TbdoaSystem TbdoaSystem;

// Dense K×N×Q complex tensor.
typedef struct TbdoaTensor TbdoaTensor;

// Array, beamspace and CPI parameters.
typedef struct TbdoaSystemParams {
  // Transmit elements M.
  size_t tx_elements;
  // Receive elements N.
  size_t rx_elements;
  // Transmit element spacing in wavelengths.
  double tx_spacing;
  // Receive aperture in wavelengths; positions are drawn once from `geometry_seed`.
  double rx_aperture;
  uint64_t geometry_seed;
  // Transmit beams K.
  size_t beams;
  double sector_min_deg;
  double sector_max_deg;
  // Grid step of the sector averaging, degrees.
  double beam_grid_step;
  // Pulses per CPI Q.
  size_t pulses;
} TbdoaSystemParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *tbdoa_version(void);

// Copies the calling thread's last error message into `buf` (truncated,
// always NUL-terminated when `len > 0`). Returns the full message length
// plus one, so a return value above `len` means truncation.
//
// # Safety
// `buf` must be null or point to `len` writable bytes.
size_t tbdoa_last_error_message(char *buf, size_t len);

// Fills `out` with the default parameters (M = N = 10, K = 4, Q = 64,
// d_t = 0.5, sector [−15°, 15°]).
//
// # Safety
// `out` must be null or point to a writable `TbdoaSystemParams`.
enum TbdoaStatus tbdoa_system_params_default(struct TbdoaSystemParams *out);

// Draws the receive geometry and designs the beamspace matrix.
//
// # Safety
// `params` must point to a valid `TbdoaSystemParams`; `out` to writable
// storage for a handle, which receives a new system on success (release it
// with `tbdoa_system_free`).
enum TbdoaStatus tbdoa_system_new(const struct TbdoaSystemParams *params, struct TbdoaSystem **out);

// Releases a system; null is ignored.
//
// # Safety
// `system` must be null or a handle from `tbdoa_system_new` not yet freed.
void tbdoa_system_free(struct TbdoaSystem *system);

// Writes M (transmit elements) and K (beams) of a system.
//
// # Safety
// `system` must be a live handle; `m` and `k` writable.
enum TbdoaStatus tbdoa_system_dims(const struct TbdoaSystem *system, size_t *m, size_t *k);

// Copies the M×K beamspace matrix, column-major interleaved, into `out`
// (`len` ≥ 2·M·K doubles).
//
// # Safety
// `system` must be a live handle; `out` must point to `len` writable doubles.
enum TbdoaStatus tbdoa_system_beamspace(const struct TbdoaSystem *system, double *out, size_t len);

// Wraps `2·k·n·q` interleaved doubles (first index fastest) as a tensor.
//
// # Safety
// `data` must point to `len` readable doubles; `out` to writable handle storage.
enum TbdoaStatus tbdoa_tensor_new(size_t k,
                                  size_t n,
                                  size_t q,
                                  const double *data,
                                  size_t len,
                                  struct TbdoaTensor **out);

// Releases a tensor; null is ignored.
//
// # Safety
// `tensor` must be null or a live handle not yet freed.
void tbdoa_tensor_free(struct TbdoaTensor *tensor);

// Writes the tensor dimensions.
//
// # Safety
// `tensor` must be a live handle; `k`, `n`, `q` writable.
enum TbdoaStatus tbdoa_tensor_dims(const struct TbdoaTensor *tensor,
                                   size_t *k,
                                   size_t *n,
                                   size_t *q);

// Copies the tensor entries, interleaved and first index fastest, into
// `out` (`len` ≥ 2·K·N·Q doubles).
//
// # Safety
// `tensor` must be a live handle; `out` must point to `len` writable doubles.
enum TbdoaStatus tbdoa_tensor_data(const struct TbdoaTensor *tensor, double *out, size_t len);

// Simulates one CPI of `num_targets` targets. `coefficients` holds
// `2·num_targets` interleaved doubles. `snr_db` is per tensor entry against
// unit target power; pass `INFINITY` for a noiseless tensor.
//
// # Safety
// `system` must be a live handle; the three arrays must hold the stated
// number of doubles; `out` must be writable handle storage.
enum TbdoaStatus tbdoa_simulate(const struct TbdoaSystem *system,
                                const double *angles_deg,
                                const double *coefficients,
                                const double *dopplers,
                                size_t num_targets,
                                double snr_db,
                                uint64_t seed,
                                struct TbdoaTensor **out);

// Decomposes `tensor` at rank `num_targets` (default ALS settings, `seed`
// for any random start) and writes one angle in degrees per target, in CP
// column order, to `angles_out`.
//
// # Safety
// `system` and `tensor` must be live handles; `angles_out` must point to
// `angles_len` writable doubles.
enum TbdoaStatus tbdoa_estimate(const struct TbdoaSystem *system,
                                const struct TbdoaTensor *tensor,
                                size_t num_targets,
                                uint64_t seed,
                                double *angles_out,
                                size_t angles_len);

// Roots the transmit signatures directly: `signatures` is a K×L
// column-major interleaved matrix (`2·K·num_targets` doubles), one target
// per column, any complex scale.
//
// # Safety
// `system` must be a live handle; `signatures` must hold the stated number
// of doubles; `angles_out` must point to `angles_len` writable doubles.
enum TbdoaStatus tbdoa_estimate_from_signatures(const struct TbdoaSystem *system,
                                                const double *signatures,
                                                size_t num_targets,
                                                double *angles_out,
                                                size_t angles_len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TBDOA_H */
