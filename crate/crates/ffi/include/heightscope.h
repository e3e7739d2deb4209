/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#ifndef HEIGHTSCOPE_H
#define HEIGHTSCOPE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define HS_OK 0

/**
 * A required pointer argument was null.
 */
#define HS_ERR_NULL 1

#define HS_ERR_INVALID_ARGUMENT 2

/**
 * Unreadable or invalid scenario config, or an unknown preset.
 */
#define HS_ERR_CONFIG 3

#define HS_ERR_RUNTIME 4

/**
 * The output buffer is too small; the required length was still written.
 */
#define HS_ERR_BUFFER_TOO_SMALL 5

#define HS_ERR_PANIC 6

#define HS_METHOD_GS 0

#define HS_METHOD_SBYS 1

#define HS_METHOD_MUSIC 2

#define HS_METHOD_BURG 3

/**
 * Antenna layout handle.
 */
typedef struct HsLayout HsLayout;

/**
 * Completed sweep handle.
 */
typedef struct HsSweep HsSweep;

typedef struct HsComplex {
  double re;
  double im;
} HsComplex;

/**
 * One line of a sweep's result table. `wall_time_s` is NaN unless the
 * sweep was timed.
 */
typedef struct HsResultRow {
  double snr_db;
  /**
   * One of the `HS_METHOD_*` codes.
   */
  int32_t method;
  double pd;
  double far;
  double de;
  uint64_t trials;
  double wall_time_s;
} HsResultRow;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread into `buf` (NUL-terminated,
 * truncated to `len`) and returns the full message length excluding NUL.
 * Pass a null `buf` to query the length.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t hs_last_error_message(char *buf, size_t len);

/**
 * Library version as a static NUL-terminated string.
 */
const char *hs_version(void);

/**
 * Creates a single-aperture layout from a preset name such as `bumper_6x8`.
 *
 * # Safety
 * `name` must be a NUL-terminated string; `out` must be writable.
 */
int32_t hs_layout_preset(const char *name, struct HsLayout **out);

/**
 * Releases a layout. Null is ignored.
 *
 * # Safety
 * `layout` must come from [`hs_layout_preset`] and not be used afterwards.
 */
void hs_layout_free(struct HsLayout *layout);

/**
 * # Safety
 * `layout` must be a live handle; `out` must be writable.
 */
int32_t hs_layout_aperture_count(const struct HsLayout *layout, size_t *out);

/**
 * Virtual channels (`Tx × Rx`) of one aperture.
 *
 * # Safety
 * `layout` must be a live handle; `out` must be writable.
 */
int32_t hs_layout_virtual_channels(const struct HsLayout *layout, size_t aperture, size_t *out);

/**
 * Four-path multipath steering vector of one aperture for a target at
 * `azimuth` (rad), `height` (m) and slant `range` (m) from the layout's
 * reference point. Entries are Tx-major. `written` receives the channel
 * count even when `out_len` is too small.
 *
 * # Safety
 * `layout` must be a live handle, `out` must hold `out_len` elements and
 * `written` must be writable.
 */
int32_t hs_multipath_steering(const struct HsLayout *layout,
                              size_t aperture,
                              double azimuth,
                              double height,
                              double range,
                              struct HsComplex rho,
                              double wavelength,
                              struct HsComplex *out,
                              size_t out_len,
                              size_t *written);

/**
 * Block OMP on a dense `rows × cols` column-major dictionary with group
 * `labels` (1-based, covering `1..=G`). Stops after `max_groups` selections
 * (0: no limit) or once the residual falls to `residual_fraction` of `‖y‖`
 * (≤ 0: disabled). Writes `cols` coefficients and up to `selected_cap`
 * selected labels; `selected_len` receives the selection count.
 *
 * # Safety
 * Buffers must hold the stated number of elements; `coefficients`,
 * `selected` and `selected_len` must be writable.
 */
int32_t hs_bomp(const struct HsComplex *matrix,
                size_t rows,
                size_t cols,
                const uint32_t *labels,
                const struct HsComplex *y,
                size_t max_groups,
                double residual_fraction,
                struct HsComplex *coefficients,
                uint32_t *selected,
                size_t selected_cap,
                size_t *selected_len);

/**
 * Runs a sweep described by TOML text (the CLI's scenario format).
 * `jobs` = 0 uses every core; results do not depend on it.
 *
 * # Safety
 * `config_toml` must be a NUL-terminated string; `out` must be writable.
 */
int32_t hs_sweep_run(const char *config_toml, size_t jobs, struct HsSweep **out);

/**
 * Releases a sweep. Null is ignored.
 *
 * # Safety
 * `sweep` must come from [`hs_sweep_run`] and not be used afterwards.
 */
void hs_sweep_free(struct HsSweep *sweep);

/**
 * Number of result rows, or 0 for a null handle.
 *
 * # Safety
 * `sweep` must be null or a live handle.
 */
size_t hs_sweep_row_count(const struct HsSweep *sweep);

/**
 * # Safety
 * `sweep` must be a live handle; `out` must be writable.
 */
int32_t hs_sweep_row(const struct HsSweep *sweep, size_t index, struct HsResultRow *out);

/**
 * The result table as CSV text, identical to the CLI's `results.csv`.
 * Release it with [`hs_string_free`].
 *
 * # Safety
 * `sweep` must be a live handle; `out` must be writable.
 */
int32_t hs_sweep_csv(const struct HsSweep *sweep, char **out);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not be used afterwards.
 */
void hs_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HEIGHTSCOPE_H */
