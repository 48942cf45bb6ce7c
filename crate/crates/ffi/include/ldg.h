#ifndef LDG_H
#define LDG_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum LdgStatus {
  LDG_STATUS_OK = 0,
  LDG_STATUS_NULL_POINTER = 1,
  LDG_STATUS_INVALID_ARGUMENT = 2,
  LDG_STATUS_IO = 3,
  LDG_STATUS_SOLVE_FAILED = 4,
  LDG_STATUS_NO_DEFECT = 5,
  LDG_STATUS_MULTIPLE_DEFECTS = 6,
  LDG_STATUS_ANALYSIS_FAILED = 7,
  LDG_STATUS_PANIC = 8,
} LdgStatus;

/*
 Opaque tensor field on a disk.
 */
typedef struct LdgField LdgField;

typedef struct LdgSolveInfo {
  size_t iterations;
  bool converged;
  double energy;
  double potential_mass;
} LdgSolveInfo;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Library version as a static NUL-terminated string.
 */
const char *ldg_version(void);

/*
 Message for the last failed call on this thread; empty after a success.
 The pointer stays valid until the next call on the same thread.
 */
const char *ldg_last_error(void);

/*
 Creates a radially melted field on a disk of `n` cells per side with the
 standard boundary loop of odd `winding`.

 # Safety
 `out` must be a valid pointer to writable storage for one handle.
 */
enum LdgStatus ldg_field_new_disk(size_t n, double radius, int32_t winding, struct LdgField **out);

/*
 Releases a handle; null is ignored.

 # Safety
 `field` must be null or a handle not yet freed.
 */
void ldg_field_free(struct LdgField *field);

/*
 Number of grid cells, including exterior ones.

 # Safety
 `field` must be a live handle and `out` writable.
 */
enum LdgStatus ldg_field_len(const struct LdgField *field, size_t *out);

/*
 Copies six components `xx, xy, xz, yy, yz, zz` per cell into `buf`,
 which must hold `6 * len` doubles.

 # Safety
 `field` must be a live handle and `buf` must point to `buf_len` doubles.
 */
enum LdgStatus ldg_field_copy_values(const struct LdgField *field, double *buf, size_t buf_len);

/*
 Total energy at `eps` with the standard potential.

 # Safety
 `field` must be a live handle and `out` writable.
 */
enum LdgStatus ldg_field_energy(const struct LdgField *field, double eps, double *out);

/*
 Runs the gradient flow at `eps` in place. Non-convergence within
 `max_iters` is reported through `info`, not the status.

 # Safety
 `field` must be a live handle; `info` may be null.
 */
enum LdgStatus ldg_solve(struct LdgField *field,
                         double eps,
                         size_t max_iters,
                         double rel_tol,
                         struct LdgSolveInfo *info);

/*
 Position and peak distance-to-projection of the defect core.

 # Safety
 `field` must be a live handle; `x`, `y`, `peak` must be writable.
 */
enum LdgStatus ldg_locate_defect(const struct LdgField *field, double *x, double *y, double *peak);

/*
 Bulk potential of one symmetric tensor given as `xx, xy, xz, yy, yz, zz`.

 # Safety
 `u` must point to six doubles and `out` must be writable.
 */
enum LdgStatus ldg_potential_w(const double *u, double *out);

/*
 Writes the field as a snapshot CSV.

 # Safety
 `field` must be a live handle and `path` a NUL-terminated string.
 */
enum LdgStatus ldg_field_save(const struct LdgField *field, const char *path);

/*
 Replaces the field values from a snapshot written on the same grid.

 # Safety
 `field` must be a live handle and `path` a NUL-terminated string.
 */
enum LdgStatus ldg_field_load(struct LdgField *field, const char *path);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* LDG_H */
