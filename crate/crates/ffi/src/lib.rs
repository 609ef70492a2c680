//! C ABI for obdkit.
//!
//! Every function returns an [`ObdStatus`]. On failure a message is kept in a
//! thread-local slot readable with [`obd_last_error_message`]. Panics never
//! cross the boundary; they are reported as `OBD_STATUS_PANIC`.
//!
//! Quads are passed as `double[8]` in `x1, y1, ..., x4, y4` order and key
//! edges as two `double[4]` arrays. Detection sets and evaluators are opaque
//! handles owned by the caller and released with their `_free` function.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use obdkit::codec::{decode, encode, is_valid_matching, KeyEdges, MatchingType};
use obdkit::eval::{match_image, sweep_thresholds, GtInstance, ImageTally, MatchConfig, IgnoreRule};
use obdkit::geom::{iou, Quad};
use obdkit::postproc::{suppress_indices, SuppressionConfig, SuppressionMode};
use obdkit::rpp::{fuse, peak_mass, s_obd, ScoreVector, ScoredDetection, KEY_EDGE_COUNT};
use obdkit::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObdStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    NonFinite = 3,
    DegenerateQuad = 4,
    OutOfRange = 5,
    BufferTooSmall = 6,
    Panic = 99,
}

/// Suppression overlap measure.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObdSuppressionMode {
    Polygonal = 0,
    AxisAligned = 1,
}

/// Best point of a confidence sweep.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ObdEvalResult {
    pub recall: f64,
    pub precision: f64,
    pub hmean: f64,
    pub best_threshold: f64,
    pub matches: u64,
    pub detections: u64,
    pub gts: u64,
}

/// Opaque set of scored detections.
pub struct ObdDetections {
    items: Vec<ScoredDetection>,
}

/// Opaque accumulator of per-image matching results.
pub struct ObdEvaluator {
    cfg: MatchConfig,
    tallies: Vec<ImageTally>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(ObdStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::NonFinite => ObdStatus::NonFinite,
            Error::DegenerateQuad(_) => ObdStatus::DegenerateQuad,
            Error::InvalidMatchingId(_)
            | Error::BinOutOfRange { .. }
            | Error::ScoreOutOfRange { .. }
            | Error::GammaOutOfRange(_) => ObdStatus::OutOfRange,
            _ => ObdStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(ObdStatus::NullPointer, format!("{what} is null"))
}

fn set_error(msg: Option<String>) {
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = msg.map(|m| CString::new(m.replace('\0', " ")).expect("no interior nul"));
    });
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> ObdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(None);
            ObdStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(Some(msg));
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(Some(format!("panic: {msg}")));
            ObdStatus::Panic
        }
    }
}

unsafe fn read<'a, T>(p: *const T, n: usize, what: &str) -> Result<&'a [T], Failure> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(p, n))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn read_quad(p: *const f64, what: &str) -> Result<Quad, Failure> {
    let c = read(p, 8, what)?;
    Ok(Quad::from_coords(c.try_into().expect("8 values"))?)
}

unsafe fn read_key_edges(xs: *const f64, ys: *const f64) -> Result<KeyEdges, Failure> {
    let xs: [f64; 4] = read(xs, 4, "xs")?.try_into().expect("4 values");
    let ys: [f64; 4] = read(ys, 4, "ys")?.try_into().expect("4 values");
    Ok(KeyEdges::new(xs, ys)?)
}

unsafe fn read_vectors(scores: *const f64, m: usize) -> Result<Vec<ScoreVector>, Failure> {
    if m == 0 {
        return Err(Error::EmptyScoreVector.into());
    }
    let all = read(scores, KEY_EDGE_COUNT * m, "scores")?;
    all.chunks(m)
        .map(|c| ScoreVector::new(c.to_vec()).map_err(Failure::from))
        .collect()
}

/// Copies the last error message of this thread into `buf` (nul-terminated,
/// truncated to `len`). Returns the full message length without the nul, or
/// 0 if the last call succeeded.
#[no_mangle]
pub unsafe extern "C" fn obd_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|slot| {
        let slot = slot.borrow();
        let Some(msg) = slot.as_ref() else {
            if !buf.is_null() && len > 0 {
                *buf = 0;
            }
            return 0;
        };
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Sorted key edges and matching type id of a quad.
#[no_mangle]
pub unsafe extern "C" fn obd_encode(
    coords: *const f64,
    xs_out: *mut f64,
    ys_out: *mut f64,
    matching_out: *mut u8,
) -> ObdStatus {
    guard(|| {
        let q = read_quad(coords, "coords")?;
        if xs_out.is_null() || ys_out.is_null() {
            return Err(null("output"));
        }
        let mt_out = out(matching_out, "matching_out")?;
        let (ke, mt) = encode(&q)?;
        ptr::copy_nonoverlapping(ke.xs.as_ptr(), xs_out, 4);
        ptr::copy_nonoverlapping(ke.ys.as_ptr(), ys_out, 4);
        *mt_out = mt.id();
        Ok(())
    })
}

/// Rebuilds the quad for a matching type. Key edges need not be sorted.
#[no_mangle]
pub unsafe extern "C" fn obd_decode(
    xs: *const f64,
    ys: *const f64,
    matching: u8,
    coords_out: *mut f64,
) -> ObdStatus {
    guard(|| {
        let ke = read_key_edges(xs, ys)?;
        let mt = MatchingType::from_id(matching)?;
        if coords_out.is_null() {
            return Err(null("coords_out"));
        }
        ptr::copy_nonoverlapping(decode(&ke, mt).coords().as_ptr(), coords_out, 8);
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn obd_is_valid_matching(
    xs: *const f64,
    ys: *const f64,
    matching: u8,
    valid_out: *mut bool,
) -> ObdStatus {
    guard(|| {
        let ke = read_key_edges(xs, ys)?;
        let mt = MatchingType::from_id(matching)?;
        *out(valid_out, "valid_out")? = is_valid_matching(&ke, mt);
        Ok(())
    })
}

/// Exact polygon IoU of two simple quads.
#[no_mangle]
pub unsafe extern "C" fn obd_iou(a: *const f64, b: *const f64, iou_out: *mut f64) -> ObdStatus {
    guard(|| {
        let (qa, qb) = (read_quad(a, "a")?, read_quad(b, "b")?);
        *out(iou_out, "iou_out")? = iou(&qa, &qb);
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn obd_peak_mass(scores: *const f64, len: usize, mass_out: *mut f64) -> ObdStatus {
    guard(|| {
        let v = ScoreVector::new(read(scores, len, "scores")?.to_vec())?;
        *out(mass_out, "mass_out")? = peak_mass(v.values())?;
        Ok(())
    })
}

/// `scores` holds 8 vectors of `m` entries, row-major.
#[no_mangle]
pub unsafe extern "C" fn obd_s_obd(scores: *const f64, m: usize, s_out: *mut f64) -> ObdStatus {
    guard(|| {
        let vs = read_vectors(scores, m)?;
        *out(s_out, "s_out")? = s_obd(&vs)?;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn obd_fuse(s_box: f64, s_obd: f64, gamma: f64, fused_out: *mut f64) -> ObdStatus {
    guard(|| {
        *out(fused_out, "fused_out")? = fuse(s_box, s_obd, gamma)?;
        Ok(())
    })
}

#[no_mangle]
pub extern "C" fn obd_detections_new() -> *mut ObdDetections {
    Box::into_raw(Box::new(ObdDetections { items: Vec::new() }))
}

#[no_mangle]
pub unsafe extern "C" fn obd_detections_free(dets: *mut ObdDetections) {
    if !dets.is_null() {
        drop(Box::from_raw(dets));
    }
}

#[no_mangle]
pub unsafe extern "C" fn obd_detections_len(dets: *const ObdDetections) -> usize {
    dets.as_ref().map_or(0, |d| d.items.len())
}

#[no_mangle]
pub unsafe extern "C" fn obd_detections_push(dets: *mut ObdDetections, coords: *const f64, score: f64) -> ObdStatus {
    guard(|| {
        let d = out(dets, "dets")?;
        if !(0.0..=1.0).contains(&score) {
            return Err(Failure(ObdStatus::OutOfRange, format!("score {score} outside [0, 1]")));
        }
        d.items.push(ScoredDetection::new(read_quad(coords, "coords")?, score));
        Ok(())
    })
}

/// Pushes a detection with its 8 key-edge score vectors of `m` entries.
#[no_mangle]
pub unsafe extern "C" fn obd_detections_push_with_scores(
    dets: *mut ObdDetections,
    coords: *const f64,
    s_box: f64,
    scores: *const f64,
    m: usize,
) -> ObdStatus {
    guard(|| {
        let d = out(dets, "dets")?;
        if !(0.0..=1.0).contains(&s_box) {
            return Err(Failure(ObdStatus::OutOfRange, format!("score {s_box} outside [0, 1]")));
        }
        let q = read_quad(coords, "coords")?;
        let vs = read_vectors(scores, m)?;
        d.items.push(ScoredDetection::new(q, s_box).with_ke_scores(vs));
        Ok(())
    })
}

/// Fuses box and key-edge scores of every detection that has vectors.
#[no_mangle]
pub unsafe extern "C" fn obd_detections_rescore(dets: *mut ObdDetections, gamma: f64) -> ObdStatus {
    guard(|| {
        let d = out(dets, "dets")?;
        if !(0.0..=2.0).contains(&gamma) {
            return Err(Error::GammaOutOfRange(gamma).into());
        }
        for det in &mut d.items {
            det.rescore(gamma)?;
        }
        Ok(())
    })
}

/// Ranking score (fused if rescored) of detection `index`.
#[no_mangle]
pub unsafe extern "C" fn obd_detections_score(dets: *const ObdDetections, index: usize, score_out: *mut f64) -> ObdStatus {
    guard(|| {
        let d = dets.as_ref().ok_or_else(|| null("dets"))?;
        let det = d
            .items
            .get(index)
            .ok_or_else(|| Failure(ObdStatus::OutOfRange, format!("index {index} out of range")))?;
        *out(score_out, "score_out")? = det.score();
        Ok(())
    })
}

/// Greedy suppression. Writes the kept input indices, best first, into
/// `kept_out` (capacity `cap`) and their count into `n_kept`. With too
/// small a buffer nothing is written except `n_kept`, and the call returns
/// `OBD_STATUS_BUFFER_TOO_SMALL`.
#[no_mangle]
pub unsafe extern "C" fn obd_detections_suppress(
    dets: *const ObdDetections,
    mode: ObdSuppressionMode,
    threshold: f64,
    kept_out: *mut usize,
    cap: usize,
    n_kept: *mut usize,
) -> ObdStatus {
    guard(|| {
        let d = dets.as_ref().ok_or_else(|| null("dets"))?;
        let n_out = out(n_kept, "n_kept")?;
        let mode = match mode {
            ObdSuppressionMode::Polygonal => SuppressionMode::Polygonal,
            ObdSuppressionMode::AxisAligned => SuppressionMode::AxisAligned,
        };
        let kept = suppress_indices(&d.items, &SuppressionConfig::new(mode, threshold)?);
        *n_out = kept.len();
        if kept.len() > cap {
            return Err(Failure(
                ObdStatus::BufferTooSmall,
                format!("{} indices do not fit in {cap}", kept.len()),
            ));
        }
        if !kept.is_empty() {
            if kept_out.is_null() {
                return Err(null("kept_out"));
            }
            ptr::copy_nonoverlapping(kept.as_ptr(), kept_out, kept.len());
        }
        Ok(())
    })
}

/// New evaluator; `ignore_by_detection_area` selects intersection over
/// detection area instead of IoU for "do not care" regions.
#[no_mangle]
pub extern "C" fn obd_evaluator_new(iou_threshold: f64, ignore_by_detection_area: bool) -> *mut ObdEvaluator {
    let rule = if ignore_by_detection_area {
        IgnoreRule::IntersectionOverDetection
    } else {
        IgnoreRule::Iou
    };
    match MatchConfig::new(iou_threshold, rule) {
        Ok(cfg) => {
            set_error(None);
            Box::into_raw(Box::new(ObdEvaluator {
                cfg,
                tallies: Vec::new(),
            }))
        }
        Err(e) => {
            set_error(Some(e.to_string()));
            ptr::null_mut()
        }
    }
}

#[no_mangle]
pub unsafe extern "C" fn obd_evaluator_free(ev: *mut ObdEvaluator) {
    if !ev.is_null() {
        drop(Box::from_raw(ev));
    }
}

/// Matches one image. `gt_coords` holds `n_gt` quads, `gt_ignore` one flag
/// per ground truth (may be null: all cared for), `det_coords` and
/// `det_scores` hold `n_det` detections.
#[no_mangle]
pub unsafe extern "C" fn obd_evaluator_add_image(
    ev: *mut ObdEvaluator,
    gt_coords: *const f64,
    gt_ignore: *const bool,
    n_gt: usize,
    det_coords: *const f64,
    det_scores: *const f64,
    n_det: usize,
) -> ObdStatus {
    guard(|| {
        let ev = out(ev, "evaluator")?;
        let gc = read(gt_coords, 8 * n_gt, "gt_coords")?;
        let ignore = if gt_ignore.is_null() {
            vec![false; n_gt]
        } else {
            read(gt_ignore, n_gt, "gt_ignore")?.to_vec()
        };
        let gts = gc
            .chunks(8)
            .zip(ignore)
            .map(|(c, ignore)| {
                Ok(GtInstance {
                    quad: Quad::from_coords(c.try_into().expect("8 values"))?,
                    ignore,
                })
            })
            .collect::<Result<Vec<_>, Failure>>()?;
        let dc = read(det_coords, 8 * n_det, "det_coords")?;
        let ds = read(det_scores, n_det, "det_scores")?;
        let dets = dc
            .chunks(8)
            .zip(ds)
            .map(|(c, &s)| Ok(ScoredDetection::new(Quad::from_coords(c.try_into().expect("8 values"))?, s)))
            .collect::<Result<Vec<_>, Failure>>()?;
        ev.tallies.push(match_image(&dets, &gts, &ev.cfg));
        Ok(())
    })
}

/// Best-Hmean point over all confidence cutoffs of the images added so far.
#[no_mangle]
pub unsafe extern "C" fn obd_evaluator_sweep(ev: *const ObdEvaluator, result_out: *mut ObdEvalResult) -> ObdStatus {
    guard(|| {
        let ev = ev.as_ref().ok_or_else(|| null("evaluator"))?;
        let r = sweep_thresholds(&ev.tallies).best;
        *out(result_out, "result_out")? = ObdEvalResult {
            recall: r.recall,
            precision: r.precision,
            hmean: r.hmean,
            best_threshold: r.best_threshold,
            matches: r.matches as u64,
            detections: r.detections as u64,
            gts: r.gts as u64,
        };
        Ok(())
    })
}
