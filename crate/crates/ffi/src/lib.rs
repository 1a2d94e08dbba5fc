//! C ABI over the recovery-diffusion core.
//!
//! Graphs and threshold vectors cross the boundary as opaque handles
//! created by `rd_*_new`/`rd_graph_from_*` and released with the matching
//! `*_free`. Every fallible call returns an [`RdStatus`]; on failure the
//! message is available from [`rd_last_error_message`] on the same thread.
//! Recovery weeks are `int32_t`, with `-1` for a node that never recovers.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use recovery_diffusion::contiguity::{build_contiguity_graph, ContiguityKind, ContiguityRule};
use recovery_diffusion::diffusion::{DiffusionSchedule, RecoverySimulator, ThresholdVector};
use recovery_diffusion::empirical::{recovery_week_loss, RecoveryDurationTable};
use recovery_diffusion::fit::{build_fit_problem, fit_thresholds};
use recovery_diffusion::ga::GaConfig;
use recovery_diffusion::graph::{graph_metrics, SpatialGraph};
use recovery_diffusion::multiplier::{increment_rate, multiplier_objective, search_multipliers, MultiplierProblem};
use recovery_diffusion::{io, Error};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RdStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    Data = 5,
    Config = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RdContiguity {
    Queen = 0,
    Rook = 1,
    Bishop = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RdGraphMetrics {
    pub nodes: usize,
    pub edges: usize,
    pub average_degree: f64,
    pub density: f64,
}

/// Opaque graph handle.
pub struct RdGraph {
    inner: SpatialGraph,
}

/// Opaque threshold vector handle.
pub struct RdThresholds {
    inner: ThresholdVector,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> RdStatus {
    match e {
        Error::Io { .. } => RdStatus::Io,
        Error::Parse { .. } => RdStatus::Parse,
        Error::InvalidConfig(_)
        | Error::InvalidSchedule(_)
        | Error::InvalidTolerance(_)
        | Error::EnumerationCap { .. } => RdStatus::Config,
        _ => RdStatus::Data,
    }
}

enum Failure {
    Status(RdStatus, String),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

fn null(what: &str) -> Failure {
    Failure::Status(RdStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure::Status(RdStatus::InvalidArgument, msg.into())
}

/// Runs `body`, recording any error or panic for `rd_last_error_message`.
fn guard(body: impl FnOnce() -> Result<(), Failure>) -> RdStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            RdStatus::Ok
        }
        Ok(Err(Failure::Status(status, msg))) => {
            set_error(msg);
            status
        }
        Ok(Err(Failure::Core(e))) => {
            let status = status_of(&e);
            set_error(e.to_string());
            status
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal error: {msg}"));
            RdStatus::Panic
        }
    }
}

unsafe fn slice<'a, T>(ptr: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

unsafe fn slice_mut<'a, T>(ptr: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(ptr, len))
}

unsafe fn path(ptr: *const c_char, what: &str) -> Result<PathBuf, Failure> {
    if ptr.is_null() {
        return Err(null(what));
    }
    let s = CStr::from_ptr(ptr)
        .to_str()
        .map_err(|_| invalid(format!("{what} is not valid UTF-8")))?;
    Ok(PathBuf::from(s))
}

unsafe fn handle<'a, T>(ptr: *const T, what: &str) -> Result<&'a T, Failure> {
    ptr.as_ref().ok_or_else(|| null(what))
}

fn schedule(horizon: usize, first_update_week: usize) -> Result<DiffusionSchedule, Failure> {
    Ok(DiffusionSchedule::new(horizon, first_update_week)?)
}

fn week_code(w: Option<usize>) -> i32 {
    w.map_or(-1, |w| w as i32)
}

fn week_from_code(code: i32) -> Option<usize> {
    usize::try_from(code).ok()
}

/// Message of the last failed call on this thread, or NULL. The pointer
/// stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn rd_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn rd_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds a graph over nodes `0..node_count` from parallel endpoint arrays.
///
/// # Safety
/// `src` and `dst` must each point to `edge_count` readable values and
/// `out` must be a valid pointer to write the handle to.
#[no_mangle]
pub unsafe extern "C" fn rd_graph_from_edges(
    node_count: usize,
    src: *const u32,
    dst: *const u32,
    edge_count: usize,
    out: *mut *mut RdGraph,
) -> RdStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let src = slice(src, edge_count, "src")?;
        let dst = slice(dst, edge_count, "dst")?;
        let edges: Vec<(usize, usize)> = src.iter().zip(dst).map(|(&a, &b)| (a as usize, b as usize)).collect();
        if let Some(&(a, b)) = edges.iter().find(|(a, b)| *a >= node_count || *b >= node_count) {
            return Err(invalid(format!("edge ({a}, {b}) references a node outside 0..{node_count}")));
        }
        let ids = (0..node_count).map(|i| i.to_string()).collect();
        let g = SpatialGraph::from_index_edges(ids, &edges)?;
        *out = Box::into_raw(Box::new(RdGraph { inner: g }));
        Ok(())
    })
}

/// Reads a `src,dst` edge list and an optional `id` node list.
///
/// # Safety
/// `edges_path` must be a NUL-terminated string, `nodes_path` NULL or a
/// NUL-terminated string, and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rd_graph_from_edge_csv(
    edges_path: *const c_char,
    nodes_path: *const c_char,
    out: *mut *mut RdGraph,
) -> RdStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let edges = path(edges_path, "edges_path")?;
        let nodes = if nodes_path.is_null() {
            None
        } else {
            Some(path(nodes_path, "nodes_path")?)
        };
        let g = io::read_edge_list(&edges, nodes.as_deref())?;
        *out = Box::into_raw(Box::new(RdGraph { inner: g }));
        Ok(())
    })
}

/// Builds a contiguity graph from a GeoJSON feature collection.
///
/// # Safety
/// `geojson_path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rd_graph_from_geojson(
    geojson_path: *const c_char,
    rule: RdContiguity,
    snap_tolerance: f64,
    out: *mut *mut RdGraph,
) -> RdStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let units = io::read_geojson_units(&path(geojson_path, "geojson_path")?)?;
        let kind = match rule {
            RdContiguity::Queen => ContiguityKind::Queen,
            RdContiguity::Rook => ContiguityKind::Rook,
            RdContiguity::Bishop => ContiguityKind::Bishop,
        };
        let g = build_contiguity_graph(&units, ContiguityRule::new(kind).with_tolerance(snap_tolerance))?;
        *out = Box::into_raw(Box::new(RdGraph { inner: g }));
        Ok(())
    })
}

/// Number of nodes, or 0 for NULL.
///
/// # Safety
/// `graph` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rd_graph_node_count(graph: *const RdGraph) -> usize {
    graph.as_ref().map_or(0, |g| g.inner.len())
}

/// Copies node `index`'s id into `buf` (NUL-terminated, truncated to
/// `buf_len`) and stores the full id length in `id_len`.
///
/// # Safety
/// `graph` must be a live handle, `buf` must hold `buf_len` bytes (or be
/// NULL with `buf_len` 0) and `id_len` must be NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn rd_graph_node_id(
    graph: *const RdGraph,
    index: usize,
    buf: *mut c_char,
    buf_len: usize,
    id_len: *mut usize,
) -> RdStatus {
    guard(|| {
        let g = &handle(graph, "graph")?.inner;
        if index >= g.len() {
            return Err(invalid(format!("node index {index} out of range 0..{}", g.len())));
        }
        let id = g.id(index).as_bytes();
        if !id_len.is_null() {
            *id_len = id.len();
        }
        if buf_len > 0 {
            let dst = slice_mut(buf.cast::<u8>(), buf_len, "buf")?;
            let n = id.len().min(buf_len - 1);
            dst[..n].copy_from_slice(&id[..n]);
            dst[n] = 0;
        }
        Ok(())
    })
}

/// # Safety
/// `graph` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rd_graph_metrics(graph: *const RdGraph, out: *mut RdGraphMetrics) -> RdStatus {
    guard(|| {
        let g = &handle(graph, "graph")?.inner;
        if out.is_null() {
            return Err(null("out"));
        }
        let m = graph_metrics(g)?;
        *out = RdGraphMetrics {
            nodes: m.n,
            edges: m.m,
            average_degree: m.avg_degree,
            density: m.density,
        };
        Ok(())
    })
}

/// # Safety
/// `graph` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rd_graph_free(graph: *mut RdGraph) {
    if !graph.is_null() {
        drop(Box::from_raw(graph));
    }
}

/// Threshold vector from `len` values in `[0, 1]`; `seeds` may be NULL.
/// Seed entries are forced to 0.
///
/// # Safety
/// `values` (and `seeds` when non-NULL) must hold `len` readable items and
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rd_thresholds_new(
    values: *const f64,
    seeds: *const bool,
    len: usize,
    out: *mut *mut RdThresholds,
) -> RdStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let values = slice(values, len, "values")?.to_vec();
        let tau = if seeds.is_null() {
            ThresholdVector::new(values)?
        } else {
            ThresholdVector::with_seeds(values, slice(seeds, len, "seeds")?.to_vec())?
        };
        *out = Box::into_raw(Box::new(RdThresholds { inner: tau }));
        Ok(())
    })
}

/// Reads an `id,threshold,is_seed` table aligned to `graph`.
///
/// # Safety
/// `graph` must be a live handle, `path` NUL-terminated and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn rd_thresholds_from_csv(
    graph: *const RdGraph,
    csv_path: *const c_char,
    out: *mut *mut RdThresholds,
) -> RdStatus {
    guard(|| {
        let g = &handle(graph, "graph")?.inner;
        if out.is_null() {
            return Err(null("out"));
        }
        let tau = io::read_thresholds(&path(csv_path, "csv_path")?, g)?;
        *out = Box::into_raw(Box::new(RdThresholds { inner: tau }));
        Ok(())
    })
}

/// Copies the threshold values into `out_values` (`len` must equal the
/// vector length).
///
/// # Safety
/// `thresholds` must be a live handle and `out_values` writable for `len`.
#[no_mangle]
pub unsafe extern "C" fn rd_thresholds_values(
    thresholds: *const RdThresholds,
    out_values: *mut f64,
    len: usize,
) -> RdStatus {
    guard(|| {
        let tau = &handle(thresholds, "thresholds")?.inner;
        if len != tau.len() {
            return Err(invalid(format!("buffer holds {len} values, vector has {}", tau.len())));
        }
        slice_mut(out_values, len, "out_values")?.copy_from_slice(tau.values());
        Ok(())
    })
}

/// # Safety
/// `thresholds` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rd_thresholds_free(thresholds: *mut RdThresholds) {
    if !thresholds.is_null() {
        drop(Box::from_raw(thresholds));
    }
}

/// Simulates recovery and writes each node's first recovered week (or -1)
/// to `weeks_out`. `initial` (NULL for none) marks nodes recovered at week 0.
///
/// # Safety
/// Handles must be live; `initial` (when non-NULL) and `weeks_out` must
/// hold `node_count` items.
#[no_mangle]
pub unsafe extern "C" fn rd_simulate(
    graph: *const RdGraph,
    thresholds: *const RdThresholds,
    initial: *const bool,
    horizon: usize,
    first_update_week: usize,
    weeks_out: *mut i32,
    node_count: usize,
) -> RdStatus {
    guard(|| {
        let g = &handle(graph, "graph")?.inner;
        let tau = &handle(thresholds, "thresholds")?.inner;
        if node_count != g.len() {
            return Err(invalid(format!("node_count {node_count} but graph has {} nodes", g.len())));
        }
        let init = if initial.is_null() {
            vec![false; g.len()]
        } else {
            slice(initial, node_count, "initial")?.to_vec()
        };
        let sim = RecoverySimulator::new(g, schedule(horizon, first_update_week)?)?;
        let weeks = sim.recovery_weeks(tau.values(), &init)?;
        let out = slice_mut(weeks_out, node_count, "weeks_out")?;
        for (slot, w) in out.iter_mut().zip(weeks) {
            *slot = week_code(w);
        }
        Ok(())
    })
}

/// Recovered-node count for each week `0..=horizon` from recovery weeks.
///
/// # Safety
/// `weeks` must hold `node_count` items and `counts_out` `horizon + 1`.
#[no_mangle]
pub unsafe extern "C" fn rd_recovered_counts(
    weeks: *const i32,
    node_count: usize,
    horizon: usize,
    counts_out: *mut usize,
) -> RdStatus {
    guard(|| {
        let weeks = slice(weeks, node_count, "weeks")?;
        let out = slice_mut(counts_out, horizon + 1, "counts_out")?;
        out.fill(0);
        for w in weeks.iter().filter_map(|&c| week_from_code(c)) {
            for slot in out.iter_mut().skip(w) {
                *slot += 1;
            }
        }
        Ok(())
    })
}

/// Node-weeks over `1..=horizon` where two trajectories, given as
/// recovery weeks, disagree.
///
/// # Safety
/// `empirical` and `simulated` must each hold `node_count` items and
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rd_zero_one_loss(
    empirical: *const i32,
    simulated: *const i32,
    node_count: usize,
    horizon: usize,
    out: *mut usize,
) -> RdStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let e: Vec<Option<usize>> = slice(empirical, node_count, "empirical")?.iter().map(|&c| week_from_code(c)).collect();
        let s: Vec<Option<usize>> = slice(simulated, node_count, "simulated")?.iter().map(|&c| week_from_code(c)).collect();
        *out = recovery_week_loss(&e, &s, horizon);
        Ok(())
    })
}

/// Percent gain of `recovered_with` over `recovered_without`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rd_increment_rate(recovered_with: usize, recovered_without: usize, out: *mut f64) -> RdStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = increment_rate(recovered_with, recovered_without)?;
        Ok(())
    })
}

/// Recovered count at the horizon when `members` start recovered.
///
/// # Safety
/// Handles must be live, `members` must hold `member_count` items and
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rd_multiplier_objective(
    graph: *const RdGraph,
    thresholds: *const RdThresholds,
    members: *const usize,
    member_count: usize,
    horizon: usize,
    first_update_week: usize,
    out: *mut usize,
) -> RdStatus {
    guard(|| {
        let g = &handle(graph, "graph")?.inner;
        let tau = &handle(thresholds, "thresholds")?.inner;
        if out.is_null() {
            return Err(null("out"));
        }
        let members = slice(members, member_count, "members")?;
        let problem = MultiplierProblem::new(g, tau, schedule(horizon, first_update_week)?, member_count)?;
        *out = multiplier_objective(members, &problem)?;
        Ok(())
    })
}

/// Fits thresholds to per-node recovery durations (weeks, graph node
/// order) with the GA. Writes the fitted thresholds and the final loss.
///
/// # Safety
/// `graph` must be a live handle, `durations` and `thresholds_out` must
/// hold `node_count` items and `loss_out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rd_fit_thresholds(
    graph: *const RdGraph,
    durations: *const f64,
    node_count: usize,
    seed_cutoff_weeks: f64,
    horizon: usize,
    first_update_week: usize,
    population_size: usize,
    max_iterations: usize,
    rng_seed: u64,
    thresholds_out: *mut f64,
    loss_out: *mut usize,
) -> RdStatus {
    guard(|| {
        let g = &handle(graph, "graph")?.inner;
        if node_count != g.len() {
            return Err(invalid(format!("node_count {node_count} but graph has {} nodes", g.len())));
        }
        if loss_out.is_null() {
            return Err(null("loss_out"));
        }
        let d = slice(durations, node_count, "durations")?;
        let table = RecoveryDurationTable::new(g.ids().iter().cloned().zip(d.iter().copied()))?;
        let problem = build_fit_problem(g, &table, seed_cutoff_weeks, schedule(horizon, first_update_week)?)?;
        let config = GaConfig {
            population_size,
            max_iterations,
            rng_seed,
            ..Default::default()
        };
        let fit = fit_thresholds(&problem, &config)?;
        slice_mut(thresholds_out, node_count, "thresholds_out")?.copy_from_slice(fit.thresholds.values());
        *loss_out = fit.final_loss;
        Ok(())
    })
}

/// GA search for a size-`size` multiplier set over all nodes. Writes the
/// selected node indices (ascending) and the recovered count with them.
///
/// # Safety
/// Handles must be live, `members_out` must hold `size` items and
/// `recovered_out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rd_search_multipliers(
    graph: *const RdGraph,
    thresholds: *const RdThresholds,
    size: usize,
    horizon: usize,
    first_update_week: usize,
    population_size: usize,
    max_iterations: usize,
    rng_seed: u64,
    members_out: *mut usize,
    recovered_out: *mut usize,
) -> RdStatus {
    guard(|| {
        let g = &handle(graph, "graph")?.inner;
        let tau = &handle(thresholds, "thresholds")?.inner;
        if recovered_out.is_null() {
            return Err(null("recovered_out"));
        }
        let problem = MultiplierProblem::new(g, tau, schedule(horizon, first_update_week)?, size)?;
        let config = GaConfig {
            population_size,
            max_iterations,
            rng_seed,
            ..Default::default()
        };
        let result = search_multipliers(&problem, &config)?;
        slice_mut(members_out, size, "members_out")?.copy_from_slice(&result.members);
        *recovered_out = result.recovered_with;
        Ok(())
    })
}
