#ifndef RECOVERY_DIFFUSION_H
#define RECOVERY_DIFFUSION_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum RdStatus {
  RD_STATUS_OK = 0,
  RD_STATUS_NULL_POINTER = 1,
  RD_STATUS_INVALID_ARGUMENT = 2,
  RD_STATUS_IO = 3,
  RD_STATUS_PARSE = 4,
  RD_STATUS_DATA = 5,
  RD_STATUS_CONFIG = 6,
  RD_STATUS_PANIC = 7,
} RdStatus;

typedef enum RdContiguity {
  RD_CONTIGUITY_QUEEN = 0,
  RD_CONTIGUITY_ROOK = 1,
  RD_CONTIGUITY_BISHOP = 2,
} RdContiguity;

// Opaque graph handle.
typedef struct RdGraph RdGraph;

// Opaque threshold vector handle.
typedef struct RdThresholds RdThresholds;

typedef struct RdGraphMetrics {
  size_t nodes;
  size_t edges;
  double average_degree;
  double density;
} RdGraphMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or NULL. The pointer
// stays valid until the next call into this library on the same thread.
const char *rd_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *rd_version(void);

// Builds a graph over nodes `0..node_count` from parallel endpoint arrays.
//
// # Safety
// `src` and `dst` must each point to `edge_count` readable values and
// `out` must be a valid pointer to write the handle to.
enum RdStatus rd_graph_from_edges(size_t node_count,
                                  const uint32_t *src,
                                  const uint32_t *dst,
                                  size_t edge_count,
                                  struct RdGraph **out);

// Reads a `src,dst` edge list and an optional `id` node list.
//
// # Safety
// `edges_path` must be a NUL-terminated string, `nodes_path` NULL or a
// NUL-terminated string, and `out` a valid pointer.
enum RdStatus rd_graph_from_edge_csv(const char *edges_path,
                                     const char *nodes_path,
                                     struct RdGraph **out);

// Builds a contiguity graph from a GeoJSON feature collection.
//
// # Safety
// `geojson_path` must be a NUL-terminated string and `out` a valid pointer.
enum RdStatus rd_graph_from_geojson(const char *geojson_path,
                                    enum RdContiguity rule,
                                    double snap_tolerance,
                                    struct RdGraph **out);

// Number of nodes, or 0 for NULL.
//
// # Safety
// `graph` must be NULL or a live handle.
size_t rd_graph_node_count(const struct RdGraph *graph);

// Copies node `index`'s id into `buf` (NUL-terminated, truncated to
// `buf_len`) and stores the full id length in `id_len`.
//
// # Safety
// `graph` must be a live handle, `buf` must hold `buf_len` bytes (or be
// NULL with `buf_len` 0) and `id_len` must be NULL or writable.
enum RdStatus rd_graph_node_id(const struct RdGraph *graph,
                               size_t index,
                               char *buf,
                               size_t buf_len,
                               size_t *id_len);

// # Safety
// `graph` must be a live handle and `out` a valid pointer.
enum RdStatus rd_graph_metrics(const struct RdGraph *graph, struct RdGraphMetrics *out);

// # Safety
// `graph` must be NULL or a handle not yet freed.
void rd_graph_free(struct RdGraph *graph);

// Threshold vector from `len` values in `[0, 1]`; `seeds` may be NULL.
// Seed entries are forced to 0.
//
// # Safety
// `values` (and `seeds` when non-NULL) must hold `len` readable items and
// `out` must be a valid pointer.
enum RdStatus rd_thresholds_new(const double *values,
                                const bool *seeds,
                                size_t len,
                                struct RdThresholds **out);

// Reads an `id,threshold,is_seed` table aligned to `graph`.
//
// # Safety
// `graph` must be a live handle, `path` NUL-terminated and `out` valid.
enum RdStatus rd_thresholds_from_csv(const struct RdGraph *graph,
                                     const char *csv_path,
                                     struct RdThresholds **out);

// Copies the threshold values into `out_values` (`len` must equal the
// vector length).
//
// # Safety
// `thresholds` must be a live handle and `out_values` writable for `len`.
enum RdStatus rd_thresholds_values(const struct RdThresholds *thresholds,
                                   double *out_values,
                                   size_t len);

// # Safety
// `thresholds` must be NULL or a handle not yet freed.
void rd_thresholds_free(struct RdThresholds *thresholds);

// Simulates recovery and writes each node's first recovered week (or -1)
// to `weeks_out`. `initial` (NULL for none) marks nodes recovered at week 0.
//
// # Safety
// Handles must be live; `initial` (when non-NULL) and `weeks_out` must
// hold `node_count` items.
enum RdStatus rd_simulate(const struct RdGraph *graph,
                          const struct RdThresholds *thresholds,
                          const bool *initial,
                          size_t horizon,
                          size_t first_update_week,
                          int32_t *weeks_out,
                          size_t node_count);

// Recovered-node count for each week `0..=horizon` from recovery weeks.
//
// # Safety
// `weeks` must hold `node_count` items and `counts_out` `horizon + 1`.
enum RdStatus rd_recovered_counts(const int32_t *weeks,
                                  size_t node_count,
                                  size_t horizon,
                                  size_t *counts_out);

// Node-weeks over `1..=horizon` where two trajectories, given as
// recovery weeks, disagree.
//
// # Safety
// `empirical` and `simulated` must each hold `node_count` items and
// `out` must be writable.
enum RdStatus rd_zero_one_loss(const int32_t *empirical,
                               const int32_t *simulated,
                               size_t node_count,
                               size_t horizon,
                               size_t *out);

// Percent gain of `recovered_with` over `recovered_without`.
//
// # Safety
// `out` must be writable.
enum RdStatus rd_increment_rate(size_t recovered_with, size_t recovered_without, double *out);

// Recovered count at the horizon when `members` start recovered.
//
// # Safety
// Handles must be live, `members` must hold `member_count` items and
// `out` must be writable.
enum RdStatus rd_multiplier_objective(const struct RdGraph *graph,
                                      const struct RdThresholds *thresholds,
                                      const size_t *members,
                                      size_t member_count,
                                      size_t horizon,
                                      size_t first_update_week,
                                      size_t *out);

// Fits thresholds to per-node recovery durations (weeks, graph node
// order) with the GA. Writes the fitted thresholds and the final loss.
//
// # Safety
// `graph` must be a live handle, `durations` and `thresholds_out` must
// hold `node_count` items and `loss_out` must be writable.
enum RdStatus rd_fit_thresholds(const struct RdGraph *graph,
                                const double *durations,
                                size_t node_count,
                                double seed_cutoff_weeks,
                                size_t horizon,
                                size_t first_update_week,
                                size_t population_size,
                                size_t max_iterations,
                                uint64_t rng_seed,
                                double *thresholds_out,
                                size_t *loss_out);

// GA search for a size-`size` multiplier set over all nodes. Writes the
// selected node indices (ascending) and the recovered count with them.
//
// # Safety
// Handles must be live, `members_out` must hold `size` items and
// `recovered_out` must be writable.
enum RdStatus rd_search_multipliers(const struct RdGraph *graph,
                                    const struct RdThresholds *thresholds,
                                    size_t size,
                                    size_t horizon,
                                    size_t first_update_week,
                                    size_t population_size,
                                    size_t max_iterations,
                                    uint64_t rng_seed,
                                    size_t *members_out,
                                    size_t *recovered_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RECOVERY_DIFFUSION_H */
