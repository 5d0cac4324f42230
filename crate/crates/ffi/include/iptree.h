#ifndef IPTREE_H
#define IPTREE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum IptStatus {
  IPT_STATUS_OK = 0,
  // A required pointer argument was null.
  IPT_STATUS_NULL_POINTER = 1,
  // A string argument was not valid UTF-8.
  IPT_STATUS_INVALID_UTF8 = 2,
  // Malformed JSON or an unusable argument.
  IPT_STATUS_BAD_INPUT = 3,
  // The input is well formed but fails validation (not an IP tree,
  // hierarchy cannot be embedded).
  IPT_STATUS_INVALID = 4,
  // A numeric parameter is out of range.
  IPT_STATUS_DOMAIN = 5,
  // An internal panic was caught.
  IPT_STATUS_PANIC = 6,
} IptStatus;

// Values of the `model` argument of [`ipt_tree_build`].
typedef enum IptModel {
  IPT_MODEL_BROWNIAN = 0,
  IPT_MODEL_ALPHA_THETA = 1,
  IPT_MODEL_FAT_CANTOR = 2,
} IptModel;

// Opaque hierarchy handle.
typedef struct IptHierarchy IptHierarchy;

// Opaque tree handle.
typedef struct IptTree IptTree;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. The pointer
// stays valid until the next failing call on the same thread.
const char *ipt_last_error(void);

// Release a string returned by this library. Null is ignored.
//
// # Safety
// `s` must come from this library and not have been freed.
void ipt_string_free(char *s);

// The one-point tree with a unit pending atom at the root.
//
// # Safety
// `out` must be valid for writes.
enum IptStatus ipt_tree_new(struct IptTree **out);

// Parse and validate a tree from JSON.
//
// # Safety
// `json` must be a NUL-terminated string; `out` must be valid for writes.
enum IptStatus ipt_tree_from_json(const char *json, struct IptTree **out);

// # Safety
// `tree` must be a live handle; `out` must be valid for writes.
enum IptStatus ipt_tree_to_json(const struct IptTree *tree, char **out);

// Grow a random tree by `steps` bead crushes. `alpha` and `theta` are
// read for the two-parameter model, `depth` for the fat Cantor model and
// `truncation` for both string-of-beads models.
//
// # Safety
// `out` must be valid for writes.
enum IptStatus ipt_tree_build(uint32_t model,
                              double alpha,
                              double theta,
                              uint32_t depth,
                              size_t truncation,
                              size_t steps,
                              uint64_t seed,
                              struct IptTree **out);

// Run the interval-partition check. Either output may be null.
//
// # Safety
// `tree` must be a live handle; non-null outputs must be valid for writes.
enum IptStatus ipt_tree_check(const struct IptTree *tree, bool *valid, double *max_residual);

// Masses of the atomic, skeleton-density and pending parts of the weight.
//
// # Safety
// `tree` must be a live handle; outputs must be valid for writes.
enum IptStatus ipt_tree_decompose(const struct IptTree *tree,
                                  double *atomic,
                                  double *density,
                                  double *pending);

// Hex digest identifying the tree up to mass-structural isomorphism.
//
// # Safety
// `tree` must be a live handle; `out` must be valid for writes.
enum IptStatus ipt_tree_canonical_form(const struct IptTree *tree, char **out);

// # Safety
// `a` and `b` must be live handles; `out` must be valid for writes.
enum IptStatus ipt_ms_equivalent(const struct IptTree *a, const struct IptTree *b, bool *out);

// Prokhorov distance between the weights of two trees. A `grid` of zero
// or less means no discretization, which fails for weights with density.
//
// # Safety
// `a` and `b` must be live handles; `out` must be valid for writes.
enum IptStatus ipt_prokhorov(const struct IptTree *a,
                             const struct IptTree *b,
                             double grid,
                             double *out);

// # Safety
// `tree` must be a live handle; `out` must be valid for writes.
enum IptStatus ipt_tree_render_svg(const struct IptTree *tree, char **out);

// # Safety
// `tree` must be null or a live handle not used afterwards.
void ipt_tree_free(struct IptTree *tree);

// Hierarchy of `n` seeded samples from an IP tree, labelled `1..=n`.
//
// # Safety
// `tree` must be a live handle; `out` must be valid for writes.
enum IptStatus ipt_sample_hierarchy(const struct IptTree *tree,
                                    size_t n,
                                    uint64_t seed,
                                    struct IptHierarchy **out);

// # Safety
// `json` must be a NUL-terminated string; `out` must be valid for writes.
enum IptStatus ipt_hierarchy_from_json(const char *json, struct IptHierarchy **out);

// # Safety
// `h` must be a live handle; `out` must be valid for writes.
enum IptStatus ipt_hierarchy_to_json(const struct IptHierarchy *h, char **out);

// Number of labels.
//
// # Safety
// `h` must be a live handle; `out` must be valid for writes.
enum IptStatus ipt_hierarchy_len(const struct IptHierarchy *h, size_t *out);

// Tree rebuilt from a hierarchy by `k` spinal steps. Hierarchies on
// `1..=2n+1` are first relabelled to `-n..=n`. Unless `raw` is set the
// union of sample paths is replaced by its IP representative.
//
// # Safety
// `h` must be a live handle; `out` must be valid for writes.
enum IptStatus ipt_reconstruct(const struct IptHierarchy *h,
                               size_t k,
                               bool raw,
                               struct IptTree **out);

// # Safety
// `h` must be null or a live handle not used afterwards.
void ipt_hierarchy_free(struct IptHierarchy *h);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* IPTREE_H */
