//! Command-line surface.
//!
//! Every subcommand writes deterministic output for fixed flags; nothing is
//! read from the environment. Failures surface as [`Error`]s, which the
//! binary prints as a one-line JSON record on stderr.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::codec::{encode, decode, half_encode, is_valid_matching, GridSpec, DEFAULT_GRID_M};
use crate::error::{Error, Result};
use crate::eval::{
    evaluate_at, match_dataset, sweep_thresholds, EvalResult, GtInstance, IgnoreRule, MatchConfig,
    DEFAULT_IOU_THRESHOLD,
};
use crate::io::{self, format_quad, format_score, GridRecord, KeRecord};
use crate::postproc::{suppress, SuppressionConfig, SuppressionMode, DEFAULT_NMS_THRESHOLD, DEFAULT_PNMS_THRESHOLD};
use crate::protocols::{self, InstabilityReport, Perturbation, Protocol};
use crate::rpp::{ScoredDetection, DEFAULT_GAMMA, DEFAULT_PROMINENCE};
use crate::synth::{proposal_window, synth_scene, SynthConfig};

#[derive(Debug, Parser)]
#[command(name = "obdkit", version, about = "Orderless quadrilateral encoding, re-scoring, polygonal NMS and evaluation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Encode quads as key edges and matching types (JSON lines).
    Encode(EncodeArgs),
    /// Rebuild quads from key-edge records.
    Decode(DecodeArgs),
    /// Fuse classifier and key-edge scores for a detection directory.
    Rescore(RescoreArgs),
    /// Greedy suppression of overlapping detections.
    Pnms(PnmsArgs),
    /// Precision, recall and Hmean against ground truth.
    Eval(EvalArgs),
    /// Measure how vertex-ordering protocols react to small perturbations.
    Ambiguity(AmbiguityArgs),
    /// Write a synthetic ground-truth and detection dataset.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct EncodeArgs {
    /// Quad file, one `x1,y1,...,x4,y4[,extra]` per line.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Bins per axis of the key-edge grid.
    #[arg(long, default_value_t = DEFAULT_GRID_M)]
    pub grid_m: u32,
    /// Grid window `x_min,y_min,x_max,y_max`; default is each quad's bounding
    /// box padded by 10% per side.
    #[arg(long)]
    pub window: Option<String>,
    /// Also emit half-line values.
    #[arg(long)]
    pub half_encode: bool,
}

#[derive(Debug, Args)]
pub struct DecodeArgs {
    /// Key-edge records from `encode`.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Drop records whose matching type does not give a simple quad.
    #[arg(long)]
    pub filter_invalid: bool,
}

#[derive(Debug, Args)]
pub struct RescoreArgs {
    /// Detection directory with `.scores.jsonl` sidecars.
    #[arg(long)]
    pub dets: PathBuf,
    /// Weight of the key-edge score, in [0, 2].
    #[arg(long, default_value_t = DEFAULT_GAMMA)]
    pub gamma: f64,
    #[arg(long)]
    pub out: PathBuf,
    /// Write per-detection peak patterns to `<out>/peaks.jsonl`.
    #[arg(long)]
    pub report_peaks: bool,
    /// Minimum height of a secondary peak, relative to the maximum.
    #[arg(long, default_value_t = DEFAULT_PROMINENCE)]
    pub prominence: f64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Polygonal,
    AxisAligned,
}

#[derive(Debug, Args)]
pub struct PnmsArgs {
    #[arg(long)]
    pub dets: PathBuf,
    #[arg(long, value_enum, default_value_t = ModeArg::Polygonal)]
    pub mode: ModeArg,
    /// Overlap above which the lower-scored detection is dropped; defaults
    /// to 0.15 (polygonal) or 0.3 (axis-aligned).
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum IgnoreArg {
    /// IoU with the "do not care" region.
    Iou,
    /// Intersection over detection area.
    Iod,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long)]
    pub dets: PathBuf,
    #[arg(long, default_value_t = DEFAULT_IOU_THRESHOLD)]
    pub iou: f64,
    #[arg(long, value_enum, default_value_t = IgnoreArg::Iou)]
    pub ignore_rule: IgnoreArg,
    /// Search the confidence cutoff maximizing Hmean.
    #[arg(long)]
    pub sweep: bool,
    /// JSON-lines report path.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum CorpusArg {
    /// Random star-shaped quads.
    Random,
    /// Inputs on each protocol's decision boundary.
    Adversarial,
}

#[derive(Debug, Args)]
pub struct AmbiguityArgs {
    /// `all` or a comma-separated subset of clockwise,dmpnet,textboxes,qrn,obd.
    #[arg(long, default_value = "all")]
    pub protocols: String,
    /// `rotate:<degrees>` or `jitter:<pixels>`.
    #[arg(long, default_value = "rotate:5")]
    pub perturb: String,
    #[arg(long, default_value_t = 10_000)]
    pub trials: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// `csv` or `jsonl` to print records on stdout (table on stderr), or a
    /// file path (`.csv` or JSON lines) with the table on stdout.
    #[arg(long, default_value = "csv")]
    pub out: String,
    /// Quad file to perturb instead of a generated corpus.
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = CorpusArg::Random)]
    pub corpus: CorpusArg,
    /// Size of the random corpus.
    #[arg(long, default_value_t = 1000)]
    pub corpus_size: usize,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Ground-truth quads in total.
    #[arg(long, default_value_t = 200)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub images: usize,
    #[arg(long, default_value_t = 1.0)]
    pub jitter: f64,
    #[arg(long, default_value_t = 0.2)]
    pub duplicates: f64,
    #[arg(long, default_value_t = 0.1)]
    pub shifted: f64,
    /// Negatives per ground truth.
    #[arg(long, default_value_t = 0.3)]
    pub negatives: f64,
    /// Fraction of negatives with multi-peak key-edge scores.
    #[arg(long, default_value_t = 0.5)]
    pub multi_peak: f64,
    #[arg(long, default_value_t = DEFAULT_GRID_M)]
    pub grid_m: u32,
}

pub fn run(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    match &cli.command {
        Command::Encode(a) => cmd_encode(a, out),
        Command::Decode(a) => cmd_decode(a, out),
        Command::Rescore(a) => cmd_rescore(a, out),
        Command::Pnms(a) => cmd_pnms(a, out),
        Command::Eval(a) => cmd_eval(a, out),
        Command::Ambiguity(a) => cmd_ambiguity(a, out, err),
        Command::Synth(a) => cmd_synth(a, out),
    }
}

fn emit(w: &mut dyn Write, text: &str) -> Result<()> {
    w.write_all(text.as_bytes()).map_err(|e| Error::io("<stdout>", e))
}

fn parse_window(s: &str) -> Result<crate::geom::Rect> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::InvalidArgument(format!("bad window `{s}`")))?;
    match v[..] {
        [a, b, c, d] => Ok(crate::geom::Rect::new(a, b, c, d)),
        _ => Err(Error::InvalidArgument(format!("window needs 4 numbers, got `{s}`"))),
    }
}

fn cmd_encode(a: &EncodeArgs, out: &mut dyn Write) -> Result<()> {
    let fixed = a.window.as_deref().map(parse_window).transpose()?;
    if let Some(w) = fixed {
        GridSpec::new(w, a.grid_m)?;
    } else if a.grid_m < 2 {
        return Err(Error::InvalidGrid(format!("m = {}, need at least 2 bins", a.grid_m)));
    }
    let text = io::read_text(&a.input)?;
    let lines = io::quad_lines(&text, &a.input)?;
    let mut records = Vec::with_capacity(lines.len());
    let mut invalid = 0;
    for l in &lines {
        let (ke, mt) = encode(&l.quad).map_err(|e| Error::Parse {
            path: a.input.clone(),
            line: l.line,
            message: e.to_string(),
        })?;
        let grid = GridSpec::new(fixed.unwrap_or_else(|| proposal_window(&l.quad)), a.grid_m)?;
        let (x_bins, y_bins) = grid.quantize_key_edges(&ke);
        let w = grid.window();
        let valid = is_valid_matching(&ke, mt);
        invalid += usize::from(!valid);
        records.push(KeRecord {
            line: l.line,
            xs: ke.xs,
            ys: ke.ys,
            matching_type: mt.id(),
            perm: mt.perm(),
            valid,
            grid: Some(GridRecord {
                window: [w.x_min, w.y_min, w.x_max, w.y_max],
                m: grid.m(),
                x_bins,
                y_bins,
            }),
            half: a.half_encode.then(|| {
                let (mx, my) = ke.mean();
                half_encode(&ke, mx, my)
            }),
            score: l.rest.and_then(|s| s.parse::<f64>().ok()).filter(|s| (0.0..=1.0).contains(s)),
        });
    }
    io::write_jsonl(&a.out, &records)?;
    emit(out, &format!("encoded {} quads ({invalid} with an invalid matching type)\n", records.len()))
}

fn cmd_decode(a: &DecodeArgs, out: &mut dyn Write) -> Result<()> {
    let records = io::parse_ke_str(&io::read_text(&a.input)?, &a.input)?;
    let mut lines = Vec::new();
    let mut dropped = 0;
    for r in &records {
        let (ke, mt) = (r.key_edges()?, r.matching()?);
        if a.filter_invalid && !is_valid_matching(&ke, mt) {
            dropped += 1;
            continue;
        }
        let q = decode(&ke, mt);
        lines.push(match r.score {
            Some(s) => format!("{},{}", format_quad(&q), format_score(s)),
            None => format_quad(&q),
        });
    }
    let mut text = lines.join("\n");
    if !text.is_empty() {
        text.push('\n');
    }
    std::fs::write(&a.out, text).map_err(|e| Error::io(&a.out, e))?;
    emit(out, &format!("decoded {} quads, dropped {dropped}\n", lines.len()))
}

fn flatten<T>(m: BTreeMap<String, io::Parsed<T>>) -> BTreeMap<String, Vec<T>> {
    m.into_iter().map(|(k, p)| (k, p.items)).collect()
}

#[derive(Serialize)]
struct PeakRecord {
    image: String,
    det: usize,
    pattern: Option<crate::rpp::PeakPattern>,
    s_box: f64,
    s_obd: Option<f64>,
    score: f64,
}

fn cmd_rescore(a: &RescoreArgs, out: &mut dyn Write) -> Result<()> {
    if !(0.0..=2.0).contains(&a.gamma) {
        return Err(Error::GammaOutOfRange(a.gamma));
    }
    if !(0.0..=1.0).contains(&a.prominence) {
        return Err(Error::InvalidArgument(format!("prominence {} outside [0, 1]", a.prominence)));
    }
    let mut images = flatten(io::read_det_dir(&a.dets)?);
    let mut peaks = Vec::new();
    let (mut fused, mut total) = (0, 0);
    for (key, dets) in images.iter_mut() {
        for (i, d) in dets.iter_mut().enumerate() {
            d.rescore(a.gamma)?;
            total += 1;
            fused += usize::from(d.fused.is_some());
            if a.report_peaks {
                peaks.push(PeakRecord {
                    image: key.clone(),
                    det: i,
                    pattern: d.peak_pattern(a.prominence),
                    s_box: d.s_box,
                    s_obd: d.s_obd().transpose()?,
                    score: d.score(),
                });
            }
        }
    }
    io::write_det_dir(&a.out, &images)?;
    if a.report_peaks {
        io::write_jsonl(&a.out.join("peaks.jsonl"), &peaks)?;
    }
    emit(
        out,
        &format!("rescored {fused} of {total} detections (gamma {}); the rest keep their box score\n", a.gamma),
    )
}

fn cmd_pnms(a: &PnmsArgs, out: &mut dyn Write) -> Result<()> {
    let (mode, default) = match a.mode {
        ModeArg::Polygonal => (SuppressionMode::Polygonal, DEFAULT_PNMS_THRESHOLD),
        ModeArg::AxisAligned => (SuppressionMode::AxisAligned, DEFAULT_NMS_THRESHOLD),
    };
    let cfg = SuppressionConfig::new(mode, a.threshold.unwrap_or(default))?;
    let images = flatten(io::read_det_dir(&a.dets)?);
    let (mut before, mut after) = (0, 0);
    let kept: BTreeMap<String, Vec<ScoredDetection>> = images
        .into_iter()
        .map(|(k, dets)| {
            let s = suppress(&dets, &cfg);
            before += dets.len();
            after += s.len();
            (k, s)
        })
        .collect();
    io::write_det_dir(&a.out, &kept)?;
    emit(out, &format!("kept {after} of {before} detections\n"))
}

#[derive(Serialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum EvalRecord<'a> {
    Image {
        image: &'a str,
        gts: usize,
        detections: usize,
        matches: usize,
        ignored: usize,
        non_simple_gts: usize,
        non_simple_dets: usize,
    },
    Curve(EvalResult),
    Summary {
        iou_threshold: f64,
        swept: bool,
        #[serde(flatten)]
        result: EvalResult,
    },
}

fn cmd_eval(a: &EvalArgs, out: &mut dyn Write) -> Result<()> {
    let rule = match a.ignore_rule {
        IgnoreArg::Iou => IgnoreRule::Iou,
        IgnoreArg::Iod => IgnoreRule::IntersectionOverDetection,
    };
    let cfg = MatchConfig::new(a.iou, rule)?;
    let gt = io::read_gt_dir(&a.gt)?;
    let dets = io::read_det_dir(&a.dets)?;
    let keys: Vec<String> = gt.keys().chain(dets.keys()).cloned().collect::<std::collections::BTreeSet<_>>().into_iter().collect();
    let empty_gt = io::Parsed::<GtInstance> {
        items: vec![],
        non_simple: vec![],
    };
    let empty_det = io::Parsed::<ScoredDetection> {
        items: vec![],
        non_simple: vec![],
    };
    let pairs: Vec<(Vec<GtInstance>, Vec<ScoredDetection>)> = keys
        .iter()
        .map(|k| {
            (
                gt.get(k).unwrap_or(&empty_gt).items.clone(),
                dets.get(k).unwrap_or(&empty_det).items.clone(),
            )
        })
        .collect();
    let tallies = match_dataset(&pairs, &cfg);
    let (result, curve) = if a.sweep {
        let s = sweep_thresholds(&tallies);
        (s.best, s.curve)
    } else {
        (evaluate_at(&tallies, f64::NEG_INFINITY), vec![])
    };

    let mut records = Vec::new();
    let mut table = String::new();
    writeln!(table, "{:<24} {:>6} {:>6} {:>6} {:>8}", "image", "gts", "dets", "tp", "ignored").ok();
    for (k, t) in keys.iter().zip(&tallies) {
        let tp = t.true_positives();
        let ignored = t.records.len() - tp - t.false_positives();
        let detections = t.records.len() - ignored;
        writeln!(table, "{:<24} {:>6} {:>6} {:>6} {:>8}", k, t.care_gts, detections, tp, ignored).ok();
        records.push(EvalRecord::Image {
            image: k,
            gts: t.care_gts,
            detections,
            matches: tp,
            ignored,
            non_simple_gts: gt.get(k).map_or(0, |p| p.non_simple.len()),
            non_simple_dets: dets.get(k).map_or(0, |p| p.non_simple.len()),
        });
    }
    records.extend(curve.into_iter().map(EvalRecord::Curve));
    records.push(EvalRecord::Summary {
        iou_threshold: a.iou,
        swept: a.sweep,
        result,
    });
    writeln!(
        table,
        "\nthreshold {:.4}  recall {:.4}  precision {:.4}  hmean {:.4}  ({} / {} dets, {} gts)",
        if a.sweep { result.best_threshold } else { 0.0 },
        result.recall,
        result.precision,
        result.hmean,
        result.matches,
        result.detections,
        result.gts
    )
    .ok();
    if let Some(path) = &a.out {
        io::write_jsonl(path, &records)?;
    }
    emit(out, &table)
}

fn ambiguity_table(reports: &[InstabilityReport]) -> String {
    let mut t = String::new();
    writeln!(t, "{:<10} {:>8} {:>10} {:>12} {:>12} {:>12}", "protocol", "trials", "flip_rate", "mean_shift", "max_shift", "max_disp").ok();
    for r in reports {
        writeln!(
            t,
            "{:<10} {:>8} {:>10.4} {:>12.4} {:>12.4} {:>12.4}",
            r.protocol.name(),
            r.trials,
            r.flip_rate,
            r.mean_target_shift,
            r.max_target_shift,
            r.max_displacement
        )
        .ok();
    }
    t
}

fn ambiguity_csv(reports: &[InstabilityReport]) -> String {
    let mut t = String::from("protocol,trials,flip_rate,mean_target_shift,max_target_shift,max_displacement\n");
    for r in reports {
        writeln!(
            t,
            "{},{},{},{},{},{}",
            r.protocol.name(),
            r.trials,
            r.flip_rate,
            r.mean_target_shift,
            r.max_target_shift,
            r.max_displacement
        )
        .ok();
    }
    t
}

fn ambiguity_jsonl(reports: &[InstabilityReport]) -> Result<String> {
    let mut t = String::new();
    for r in reports {
        t.push_str(&serde_json::to_string(r).map_err(|e| Error::InvalidArgument(e.to_string()))?);
        t.push('\n');
    }
    Ok(t)
}

fn cmd_ambiguity(a: &AmbiguityArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    let protocols = Protocol::parse_list(&a.protocols)?;
    let perturbation: Perturbation = a.perturb.parse()?;
    let corpus = match (&a.input, a.corpus) {
        (Some(p), _) => io::quad_lines(&io::read_text(p)?, p)?.into_iter().map(|l| l.quad).collect(),
        (None, CorpusArg::Random) => protocols::random_corpus(a.corpus_size, a.seed),
        (None, CorpusArg::Adversarial) => Protocol::BASELINES
            .iter()
            .flat_map(|&p| protocols::adversarial_corpus(p))
            .collect(),
    };
    let reports = protocols::measure_instability_for(&corpus, &protocols, perturbation, a.trials, a.seed)?;
    let table = ambiguity_table(&reports);
    match a.out.as_str() {
        "csv" => {
            emit(err, &table)?;
            emit(out, &ambiguity_csv(&reports))
        }
        "jsonl" => {
            emit(err, &table)?;
            emit(out, &ambiguity_jsonl(&reports)?)
        }
        path => {
            let path = Path::new(path);
            let body = if path.extension().is_some_and(|e| e == "csv") {
                ambiguity_csv(&reports)
            } else {
                ambiguity_jsonl(&reports)?
            };
            std::fs::write(path, body).map_err(|e| Error::io(path, e))?;
            emit(out, &table)
        }
    }
}

#[derive(Serialize)]
struct KindRecord<'a> {
    image: &'a str,
    det: usize,
    kind: crate::synth::DetKind,
}

fn cmd_synth(a: &SynthArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = SynthConfig {
        n_quads: a.n,
        images: a.images,
        jitter: a.jitter,
        duplicate_frac: a.duplicates,
        shifted_frac: a.shifted,
        negative_frac: a.negatives,
        multi_peak_frac: a.multi_peak,
        grid_m: a.grid_m,
        seed: a.seed,
    };
    let images = synth_scene(&cfg)?;
    let gts: BTreeMap<String, Vec<GtInstance>> = images.iter().map(|i| (i.key.clone(), i.gts.clone())).collect();
    let dets: BTreeMap<String, Vec<ScoredDetection>> = images.iter().map(|i| (i.key.clone(), i.dets.clone())).collect();
    io::write_gt_dir(&a.out.join("gt"), &gts)?;
    io::write_det_dir(&a.out.join("dets"), &dets)?;
    let kinds: Vec<KindRecord> = images
        .iter()
        .flat_map(|i| {
            i.kinds.iter().enumerate().map(|(det, &kind)| KindRecord {
                image: &i.key,
                det,
                kind,
            })
        })
        .collect();
    io::write_jsonl(&a.out.join("kinds.jsonl"), &kinds)?;
    emit(
        out,
        &format!(
            "wrote {} images, {} ground truths, {} detections to {}\n",
            images.len(),
            gts.values().map(Vec::len).sum::<usize>(),
            dets.values().map(Vec::len).sum::<usize>(),
            a.out.display()
        ),
    )
}
