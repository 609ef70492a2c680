//! Text formats.
//!
//! Quads are stored one per line as `x1,y1,x2,y2,x3,y3,x4,y4` followed by an
//! optional field: a score in `[0, 1]` for detections, a transcription for
//! ground truth (`###` marks a "do not care" region). Coordinates are
//! written with at most two decimals and scores with at most six, trailing
//! zeros dropped, so values already on that grid round-trip exactly.
//!
//! A dataset is a directory of `<image>.txt` files. Key-edge score vectors
//! live next to the detection file in `<image>.scores.jsonl`, one record
//! `{"det": i, "ke_scores": [[...], ...]}` per detection that has them.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::codec::{HalfEncoded, KeyEdges, MatchingType};
use crate::error::{Error, Result};
use crate::eval::GtInstance;
use crate::geom::Quad;
use crate::rpp::{ScoreVector, ScoredDetection};

pub const IGNORE_MARK: &str = "###";
const SIDECAR_SUFFIX: &str = ".scores.jsonl";

/// Parsed items plus the indices of those whose quad is not simple.
#[derive(Debug, Clone, PartialEq)]
pub struct Parsed<T> {
    pub items: Vec<T>,
    pub non_simple: Vec<usize>,
}

/// One non-blank line split into its quad and the raw trailing text.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadLine<'a> {
    pub line: usize,
    pub quad: Quad,
    pub rest: Option<&'a str>,
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Splits text into quad lines. Blank lines are skipped; line numbers are
/// 1-based. `path` only labels errors.
pub fn quad_lines<'a>(text: &'a str, path: &Path) -> Result<Vec<QuadLine<'a>>> {
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let raw = raw.trim();
        if raw.is_empty() {
            continue;
        }
        let mut fields = raw.splitn(9, ',');
        let mut c = [0.0; 8];
        for (k, slot) in c.iter_mut().enumerate() {
            let f = fields
                .next()
                .ok_or_else(|| parse_err(path, line, format!("expected 8 coordinates, found {k}")))?;
            *slot = f
                .trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| parse_err(path, line, format!("coordinate {} is not a finite number: `{}`", k + 1, f.trim())))?;
        }
        let quad = Quad::from_coords(c).map_err(|e| parse_err(path, line, e.to_string()))?;
        out.push(QuadLine {
            line,
            quad,
            rest: fields.next().map(str::trim),
        });
    }
    Ok(out)
}

fn flag_non_simple<T>(items: Vec<T>, quad: impl Fn(&T) -> &Quad) -> Parsed<T> {
    let non_simple = items
        .iter()
        .enumerate()
        .filter(|(_, t)| !quad(t).is_simple())
        .map(|(i, _)| i)
        .collect();
    Parsed { items, non_simple }
}

/// Ground truth: an optional trailing transcription, `###` meaning ignore.
pub fn parse_gt_str(text: &str, path: &Path) -> Result<Parsed<GtInstance>> {
    let items = quad_lines(text, path)?
        .into_iter()
        .map(|l| GtInstance {
            quad: l.quad,
            ignore: l.rest == Some(IGNORE_MARK),
        })
        .collect();
    Ok(flag_non_simple(items, |g| &g.quad))
}

/// Detections: an optional trailing score in `[0, 1]`, default 1.
pub fn parse_dets_str(text: &str, path: &Path) -> Result<Parsed<ScoredDetection>> {
    let items = quad_lines(text, path)?
        .into_iter()
        .map(|l| {
            let s_box = match l.rest {
                None | Some("") => 1.0,
                Some(s) => s
                    .parse::<f64>()
                    .ok()
                    .filter(|v| (0.0..=1.0).contains(v))
                    .ok_or_else(|| parse_err(path, l.line, format!("score `{s}` is not a number in [0, 1]")))?,
            };
            Ok(ScoredDetection::new(l.quad, s_box))
        })
        .collect::<Result<_>>()?;
    Ok(flag_non_simple(items, |d| &d.quad))
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn parse_gt(path: &Path) -> Result<Parsed<GtInstance>> {
    parse_gt_str(&read_text(path)?, path)
}

pub fn parse_dets(path: &Path) -> Result<Parsed<ScoredDetection>> {
    parse_dets_str(&read_text(path)?, path)
}

/// At most `decimals` decimals, trailing zeros and `-0` removed.
fn format_fixed(v: f64, decimals: usize) -> String {
    let s = format!("{v:.decimals$}");
    let s = if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        &s
    };
    if s == "-0" {
        "0".to_string()
    } else {
        s.to_string()
    }
}

pub fn format_coord(v: f64) -> String {
    format_fixed(v, 2)
}

pub fn format_score(v: f64) -> String {
    format_fixed(v, 6)
}

pub fn format_quad(q: &Quad) -> String {
    q.coords().iter().map(|&c| format_coord(c)).collect::<Vec<_>>().join(",")
}

pub fn format_gt_line(g: &GtInstance) -> String {
    if g.ignore {
        format!("{},{IGNORE_MARK}", format_quad(&g.quad))
    } else {
        format_quad(&g.quad)
    }
}

pub fn format_det_line(d: &ScoredDetection) -> String {
    format!("{},{}", format_quad(&d.quad), format_score(d.score()))
}

fn write_lines(path: &Path, lines: impl Iterator<Item = String>) -> Result<()> {
    let mut buf = String::new();
    for l in lines {
        buf.push_str(&l);
        buf.push('\n');
    }
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::File::create(path)
        .and_then(|mut f| f.write_all(buf.as_bytes()))
        .map_err(|e| Error::io(path, e))
}

pub fn write_gt(path: &Path, gts: &[GtInstance]) -> Result<()> {
    write_lines(path, gts.iter().map(format_gt_line))
}

/// Writes the detection file and, if any detection carries score vectors,
/// its sidecar. A stale sidecar is removed otherwise.
pub fn write_dets(path: &Path, dets: &[ScoredDetection]) -> Result<()> {
    write_lines(path, dets.iter().map(format_det_line))?;
    let side = sidecar_path(path);
    let records: Vec<String> = dets
        .iter()
        .enumerate()
        .filter_map(|(det, d)| {
            let ke_scores = d.ke_scores.as_ref()?;
            Some(serde_json::to_string(&SidecarRecord {
                det,
                ke_scores: ke_scores.clone(),
            }))
        })
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    if records.is_empty() {
        if side.exists() {
            fs::remove_file(&side).map_err(|e| Error::io(&side, e))?;
        }
        Ok(())
    } else {
        write_lines(&side, records.into_iter())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SidecarRecord {
    pub det: usize,
    pub ke_scores: Vec<ScoreVector>,
}

/// `dir/img.txt` -> `dir/img.scores.jsonl`.
pub fn sidecar_path(det_file: &Path) -> PathBuf {
    let stem = det_file.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    det_file.with_file_name(format!("{stem}{SIDECAR_SUFFIX}"))
}

/// Attaches sidecar vectors to `dets`, if the sidecar exists.
pub fn attach_sidecar(det_file: &Path, dets: &mut [ScoredDetection]) -> Result<()> {
    let side = sidecar_path(det_file);
    if !side.exists() {
        return Ok(());
    }
    let text = read_text(&side)?;
    for (i, raw) in text.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        let rec: SidecarRecord = serde_json::from_str(raw).map_err(|e| parse_err(&side, i + 1, e.to_string()))?;
        let n = dets.len();
        let d = dets
            .get_mut(rec.det)
            .ok_or_else(|| parse_err(&side, i + 1, format!("detection index {} out of range ({n} detections)", rec.det)))?;
        if rec.ke_scores.len() != crate::rpp::KEY_EDGE_COUNT {
            return Err(parse_err(&side, i + 1, Error::WrongVectorCount(rec.ke_scores.len()).to_string()));
        }
        d.ke_scores = Some(rec.ke_scores);
    }
    Ok(())
}

/// Image key of a dataset file: the stem without a `gt_` or `res_` prefix.
/// `None` for files that are not quad files.
pub fn image_key(path: &Path) -> Option<String> {
    let name = path.file_name()?.to_str()?;
    if name.ends_with(SIDECAR_SUFFIX) {
        return None;
    }
    let stem = name.strip_suffix(".txt")?;
    let stem = stem.strip_prefix("gt_").or_else(|| stem.strip_prefix("res_")).unwrap_or(stem);
    Some(stem.to_string())
}

/// Quad files of a dataset directory keyed by image, in key order.
pub fn dataset_files(dir: &Path) -> Result<BTreeMap<String, PathBuf>> {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if !path.is_file() {
            continue;
        }
        if let Some(key) = image_key(&path) {
            if let Some(prev) = out.insert(key.clone(), path.clone()) {
                return Err(Error::InvalidArgument(format!(
                    "{} and {} both map to image `{key}`",
                    prev.display(),
                    path.display()
                )));
            }
        }
    }
    Ok(out)
}

pub fn read_gt_dir(dir: &Path) -> Result<BTreeMap<String, Parsed<GtInstance>>> {
    dataset_files(dir)?
        .into_iter()
        .map(|(k, p)| Ok((k, parse_gt(&p)?)))
        .collect()
}

/// Detections with their sidecar vectors attached.
pub fn read_det_dir(dir: &Path) -> Result<BTreeMap<String, Parsed<ScoredDetection>>> {
    dataset_files(dir)?
        .into_iter()
        .map(|(k, p)| {
            let mut parsed = parse_dets(&p)?;
            attach_sidecar(&p, &mut parsed.items)?;
            Ok((k, parsed))
        })
        .collect()
}

pub fn write_det_dir(dir: &Path, images: &BTreeMap<String, Vec<ScoredDetection>>) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (key, dets) in images {
        write_dets(&dir.join(format!("{key}.txt")), dets)?;
    }
    Ok(())
}

pub fn write_gt_dir(dir: &Path, images: &BTreeMap<String, Vec<GtInstance>>) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (key, gts) in images {
        write_gt(&dir.join(format!("{key}.txt")), gts)?;
    }
    Ok(())
}

/// Grid placement of one encoded quad.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridRecord {
    /// `[x_min, y_min, x_max, y_max]`.
    pub window: [f64; 4],
    pub m: u32,
    pub x_bins: [u32; 4],
    pub y_bins: [u32; 4],
}

/// One line of a key-edge file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeRecord {
    /// Source line in the quad file.
    pub line: usize,
    pub xs: [f64; 4],
    pub ys: [f64; 4],
    pub matching_type: u8,
    pub perm: [u8; 4],
    pub valid: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub half: Option<HalfEncoded>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

impl KeRecord {
    pub fn key_edges(&self) -> Result<KeyEdges> {
        KeyEdges::new(self.xs, self.ys)
    }

    pub fn matching(&self) -> Result<MatchingType> {
        MatchingType::from_id(self.matching_type)
    }
}

pub fn parse_ke_str(text: &str, path: &Path) -> Result<Vec<KeRecord>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| parse_err(path, i + 1, e.to_string())))
        .collect()
}

/// Serializes one record per line.
pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let lines: Vec<String> = records
        .iter()
        .map(serde_json::to_string)
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    write_lines(path, lines.into_iter())
}
