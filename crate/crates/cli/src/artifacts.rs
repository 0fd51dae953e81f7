//! Artifact files: CSV tables, JSON documents, the SVG region map, and PGM
//! debug frames. Every file starts with a header carrying the tool
//! version, the resolved config hash, and the master seed, so any artifact
//! can be traced to the run that produced it. Floats are written with
//! Rust's shortest round-trip formatting, so reading a table back loses
//! nothing.

use crate::config::Resolved;
use reachbridge_core::geom::StateBox;
use reachbridge_core::verify::{
    CellRecord, GroundTruth, Metrics, VerdictMap, Verdict,
};
use serde::Serialize;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug)]
pub struct ArtifactError(pub String);

impl std::fmt::Display for ArtifactError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for ArtifactError {}

impl From<std::io::Error> for ArtifactError {
    fn from(e: std::io::Error) -> Self {
        ArtifactError(e.to_string())
    }
}

fn err<T>(message: impl Into<String>) -> Result<T, ArtifactError> {
    Err(ArtifactError(message.into()))
}

/// `# reachbridge <version> config=<hash> seed=<seed>`; the comment-style
/// header line shared by every artifact format.
pub fn header(r: &Resolved) -> String {
    format!(
        "# reachbridge {TOOL_VERSION} config={} seed={}",
        r.hash,
        r.seed()
    )
}

pub fn ensure_out_dir(r: &Resolved) -> Result<(), ArtifactError> {
    fs::create_dir_all(&r.out)?;
    Ok(())
}

fn write_file(path: &Path, contents: &str) -> Result<(), ArtifactError> {
    let mut f = fs::File::create(path)?;
    f.write_all(contents.as_bytes())?;
    Ok(())
}

/// Notes ride in the last CSV column; commas and newlines are flattened so
/// the table stays one record per line.
fn csv_note(note: &Option<String>) -> String {
    note.as_deref()
        .unwrap_or("")
        .replace(['\n', '\r'], " ")
        .replace(',', ";")
}

fn box_columns(prefix: &str, dim: usize) -> String {
    (0..dim)
        .map(|i| format!("{prefix}_lo{i},{prefix}_hi{i}"))
        .collect::<Vec<_>>()
        .join(",")
}

fn box_cells(b: &StateBox) -> String {
    b.dims()
        .iter()
        .map(|iv| format!("{},{}", iv.lo, iv.hi))
        .collect::<Vec<_>>()
        .join(",")
}

// ==================== tables ====================

/// Per-region calibration results.
pub fn write_bounds_csv(
    r: &Resolved,
    regions: &[reachbridge_core::verify::CalibratedRegion],
) -> Result<PathBuf, ArtifactError> {
    let dim = r.params.state_dim();
    let mut text = String::new();
    writeln!(text, "{}", header(r)).unwrap();
    writeln!(
        text,
        "region_id,{},kind,bound,alpha,samples,settled,note",
        box_columns("region", dim)
    )
    .unwrap();
    for region in regions {
        writeln!(
            text,
            "{},{},{},{},{},{},{},{}",
            region.id,
            box_cells(&region.region),
            region.bound.kind.name(),
            region.bound.value,
            region.bound.alpha,
            region.bound.sample_count,
            region.settled,
            csv_note(&region.note)
        )
        .unwrap();
    }
    let path = r.out.join("bounds.csv");
    write_file(&path, &text)?;
    Ok(path)
}

/// One reach tube, a row per step.
pub fn write_tube_csv(
    r: &Resolved,
    tube: &reachbridge_core::reach::ReachTube,
) -> Result<PathBuf, ArtifactError> {
    let dim = tube.dim();
    let mut text = String::new();
    writeln!(text, "{}", header(r)).unwrap();
    writeln!(text, "step,{}", box_columns("set", dim)).unwrap();
    for (t, set) in tube.sets.iter().enumerate() {
        writeln!(text, "{t},{}", box_cells(&set.hull())).unwrap();
    }
    let path = r.out.join("tube.csv");
    write_file(&path, &text)?;
    Ok(path)
}

/// The full verdict map, one row per verification cell in grid order.
pub fn write_verdicts_csv(r: &Resolved, map: &VerdictMap) -> Result<PathBuf, ArtifactError> {
    let dim = r.params.state_dim();
    let mut text = String::new();
    writeln!(text, "{}", header(r)).unwrap();
    writeln!(
        text,
        "index,{},controller_id,bound,verdict,gt,note",
        box_columns("cell", dim)
    )
    .unwrap();
    for cell in &map.cells {
        writeln!(
            text,
            "{},{},{},{},{},{},{}",
            cell.index,
            box_cells(&cell.cell),
            cell.controller_id,
            cell.bound_value,
            cell.verdict.name(),
            cell.gt.name(),
            csv_note(&cell.note)
        )
        .unwrap();
    }
    let path = r.out.join("verdicts.csv");
    write_file(&path, &text)?;
    Ok(path)
}

/// Ground-truth labels, one row per cell in grid order.
pub fn write_labels_csv(r: &Resolved, labels: &[GroundTruth]) -> Result<PathBuf, ArtifactError> {
    let mut text = String::new();
    writeln!(text, "{}", header(r)).unwrap();
    writeln!(text, "index,label").unwrap();
    for (i, label) in labels.iter().enumerate() {
        writeln!(text, "{i},{}", label.name()).unwrap();
    }
    let path = r.out.join("labels.csv");
    write_file(&path, &text)?;
    Ok(path)
}

// ==================== JSON documents ====================

#[derive(Serialize)]
struct Enveloped<'a, T: Serialize> {
    tool_version: &'static str,
    config_hash: &'a str,
    seed: u64,
    #[serde(flatten)]
    payload: T,
}

fn write_json<T: Serialize>(
    r: &Resolved,
    name: &str,
    payload: T,
) -> Result<PathBuf, ArtifactError> {
    let doc = Enveloped {
        tool_version: TOOL_VERSION,
        config_hash: &r.hash,
        seed: r.seed(),
        payload,
    };
    let text = serde_json::to_string_pretty(&doc)
        .map_err(|e| ArtifactError(format!("serializing {name}: {e}")))?;
    let path = r.out.join(name);
    write_file(&path, &(text + "\n"))?;
    Ok(path)
}

pub fn write_metrics_json(r: &Resolved, metrics: &Metrics) -> Result<PathBuf, ArtifactError> {
    #[derive(Serialize)]
    struct Doc<'a> {
        metrics: &'a Metrics,
    }
    write_json(r, "metrics.json", Doc { metrics })
}

#[derive(Serialize)]
pub struct ModelDoc<'a> {
    pub region_id: u64,
    pub region: &'a StateBox,
    pub net: &'a reachbridge_core::controllers::LdcNetwork,
    pub report: Option<&'a reachbridge_core::distill::TrainReport>,
}

pub fn write_model_json(r: &Resolved, doc: ModelDoc<'_>) -> Result<PathBuf, ArtifactError> {
    write_json(r, &format!("model-{:04}.ldc.json", doc.region_id), doc)
}

// ==================== PGM frames ====================

pub fn write_frame_pgm(
    r: &Resolved,
    index: usize,
    frame: &reachbridge_core::highdim::ImageFrame,
) -> Result<PathBuf, ArtifactError> {
    let path = r.out.join(format!("frame-{index:03}.pgm"));
    let mut f = fs::File::create(&path)?;
    // PGM carries the provenance header as a comment after the magic line.
    frame.write_pgm(&mut f, &header(r))?;
    Ok(path)
}

// ==================== reading tables back ====================

/// Rows of a CSV artifact with the provenance header and column row
/// stripped.
pub fn read_csv_rows(path: &Path) -> Result<Vec<Vec<String>>, ArtifactError> {
    let text = fs::read_to_string(path)
        .map_err(|e| ArtifactError(format!("cannot read {}: {e}", path.display())))?;
    let mut rows = Vec::new();
    let mut saw_columns = false;
    for line in text.lines() {
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        if !saw_columns {
            saw_columns = true;
            continue;
        }
        rows.push(line.split(',').map(str::to_string).collect());
    }
    Ok(rows)
}

fn parse_f64(s: &str, what: &str) -> Result<f64, ArtifactError> {
    s.parse::<f64>()
        .map_err(|_| ArtifactError(format!("{what}: not a number: {s:?}")))
}

/// Rebuild a verdict map from `verdicts.csv`. Calibrated regions are not
/// part of the table, so the map carries none; scoring and drawing only
/// need the cells.
pub fn read_verdicts_csv(path: &Path, dim: usize) -> Result<VerdictMap, ArtifactError> {
    let rows = read_csv_rows(path)?;
    if rows.is_empty() {
        return err(format!("{}: no verdict rows", path.display()));
    }
    let mut cells = Vec::with_capacity(rows.len());
    for row in &rows {
        if row.len() != 2 * dim + 6 {
            return err(format!(
                "{}: expected {} columns, got {}",
                path.display(),
                2 * dim + 6,
                row.len()
            ));
        }
        let index: usize = row[0]
            .parse()
            .map_err(|_| ArtifactError(format!("bad cell index {:?}", row[0])))?;
        let mut lower = Vec::with_capacity(dim);
        let mut upper = Vec::with_capacity(dim);
        for i in 0..dim {
            lower.push(parse_f64(&row[1 + 2 * i], "cell bound")?);
            upper.push(parse_f64(&row[2 + 2 * i], "cell bound")?);
        }
        let cell = StateBox::from_bounds(&lower, &upper)
            .map_err(|e| ArtifactError(format!("row {index}: {e}")))?;
        let controller_id: u64 = row[1 + 2 * dim]
            .parse()
            .map_err(|_| ArtifactError(format!("bad controller id {:?}", row[1 + 2 * dim])))?;
        let bound_value = parse_f64(&row[2 + 2 * dim], "bound")?;
        let verdict = match row[3 + 2 * dim].as_str() {
            "safe" => Verdict::Safe,
            "unsafe" => Verdict::Unsafe,
            other => return err(format!("unknown verdict {other:?}")),
        };
        let gt = parse_label(&row[4 + 2 * dim])?;
        let note = row.get(5 + 2 * dim).filter(|s| !s.is_empty()).cloned();
        cells.push(CellRecord {
            index,
            cell,
            controller_id,
            bound_value,
            verdict,
            gt,
            note,
        });
    }
    let domain = cells
        .iter()
        .skip(1)
        .fold(cells[0].cell.clone(), |acc, c| acc.hull(&c.cell));
    Ok(VerdictMap {
        domain,
        cells,
        regions: Vec::new(),
    })
}

fn parse_label(s: &str) -> Result<GroundTruth, ArtifactError> {
    match s {
        "safe" => Ok(GroundTruth::Safe),
        "unsafe" => Ok(GroundTruth::Unsafe),
        "unknown" => Ok(GroundTruth::Unknown),
        other => err(format!("unknown label {other:?}")),
    }
}

/// Read `labels.csv` back into grid-ordered labels.
pub fn read_labels_csv(path: &Path) -> Result<Vec<GroundTruth>, ArtifactError> {
    let rows = read_csv_rows(path)?;
    let mut labels = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        if row.len() != 2 {
            return err(format!("{}: expected 2 columns", path.display()));
        }
        let index: usize = row[0]
            .parse()
            .map_err(|_| ArtifactError(format!("bad label index {:?}", row[0])))?;
        if index != i {
            return err(format!("label rows out of order at {index}"));
        }
        labels.push(parse_label(&row[1])?);
    }
    Ok(labels)
}

// ==================== the region map ====================

/// Draw the verdict map as a static SVG: green cells are verified safe,
/// red cells are not, and cells whose ground truth is safe carry a
/// diagonal hatch overlay so false negatives (solid red with hatch) and
/// false positives (green without hatch) stand out. Only 2-dimensional
/// domains can be drawn.
pub fn write_map_svg(r: &Resolved, map: &VerdictMap) -> Result<Option<PathBuf>, ArtifactError> {
    if map.domain.dim() != 2 || map.cells.is_empty() {
        return Ok(None);
    }
    let d0 = map.domain.dim_interval(0);
    let d1 = map.domain.dim_interval(1);
    let (w, h) = (640.0, 640.0);
    let margin = 46.0;
    let sx = w / (d0.hi - d0.lo);
    let sy = h / (d1.hi - d1.lo);
    let px = |x: f64| margin + (x - d0.lo) * sx;
    // SVG y grows downward; state dimension 1 grows upward.
    let py = |y: f64| margin + (d1.hi - y) * sy;

    let mut text = String::new();
    writeln!(text, "<!-- {} -->", header(r).trim_start_matches("# ")).unwrap();
    writeln!(
        text,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {vw} {vh}" font-family="sans-serif" font-size="13">"#,
        vw = w + 2.0 * margin,
        vh = h + 2.0 * margin + 26.0
    )
    .unwrap();
    writeln!(
        text,
        r##"<defs><pattern id="gt" patternUnits="userSpaceOnUse" width="7" height="7" patternTransform="rotate(45)"><line x1="0" y1="0" x2="0" y2="7" stroke="#ffffff" stroke-width="1.8" stroke-opacity="0.85"/></pattern></defs>"##
    )
    .unwrap();
    writeln!(
        text,
        r##"<rect x="0" y="0" width="100%" height="100%" fill="#fafafa"/>"##
    )
    .unwrap();
    for cell in &map.cells {
        let c0 = cell.cell.dim_interval(0);
        let c1 = cell.cell.dim_interval(1);
        let (x, y) = (px(c0.lo), py(c1.hi));
        let (cw, ch) = ((c0.hi - c0.lo) * sx, (c1.hi - c1.lo) * sy);
        let fill = match cell.verdict {
            Verdict::Safe => "#2e7d32",
            Verdict::Unsafe => "#c62828",
        };
        writeln!(
            text,
            r#"<rect x="{x:.2}" y="{y:.2}" width="{cw:.2}" height="{ch:.2}" fill="{fill}" shape-rendering="crispEdges"/>"#
        )
        .unwrap();
        if cell.gt == GroundTruth::Safe {
            writeln!(
                text,
                r##"<rect x="{x:.2}" y="{y:.2}" width="{cw:.2}" height="{ch:.2}" fill="url(#gt)" shape-rendering="crispEdges"/>"##
            )
            .unwrap();
        }
    }
    writeln!(
        text,
        r##"<rect x="{margin}" y="{margin}" width="{w}" height="{h}" fill="none" stroke="#333" stroke-width="1"/>"##
    )
    .unwrap();
    // Axis extent labels.
    writeln!(
        text,
        r#"<text x="{x}" y="{y}" text-anchor="middle">{v}</text>"#,
        x = px(d0.lo),
        y = margin + h + 18.0,
        v = d0.lo
    )
    .unwrap();
    writeln!(
        text,
        r#"<text x="{x}" y="{y}" text-anchor="middle">{v}</text>"#,
        x = px(d0.hi),
        y = margin + h + 18.0,
        v = d0.hi
    )
    .unwrap();
    writeln!(
        text,
        r#"<text x="{x}" y="{y}" text-anchor="end" dominant-baseline="middle">{v}</text>"#,
        x = margin - 6.0,
        y = py(d1.lo),
        v = d1.lo
    )
    .unwrap();
    writeln!(
        text,
        r#"<text x="{x}" y="{y}" text-anchor="end" dominant-baseline="middle">{v}</text>"#,
        x = margin - 6.0,
        y = py(d1.hi),
        v = d1.hi
    )
    .unwrap();
    // Legend.
    let ly = margin + h + 34.0;
    writeln!(
        text,
        r##"<rect x="{margin}" y="{y}" width="14" height="14" fill="#2e7d32"/><text x="{tx}" y="{ty}">verified safe</text>"##,
        y = ly,
        tx = margin + 20.0,
        ty = ly + 12.0
    )
    .unwrap();
    writeln!(
        text,
        r##"<rect x="{x}" y="{y}" width="14" height="14" fill="#c62828"/><text x="{tx}" y="{ty}">not verified</text>"##,
        x = margin + 140.0,
        y = ly,
        tx = margin + 160.0,
        ty = ly + 12.0
    )
    .unwrap();
    writeln!(
        text,
        r##"<rect x="{x}" y="{y}" width="14" height="14" fill="#888"/><rect x="{x}" y="{y}" width="14" height="14" fill="url(#gt)"/><text x="{tx}" y="{ty}">ground truth safe</text>"##,
        x = margin + 280.0,
        y = ly,
        tx = margin + 300.0,
        ty = ly + 12.0
    )
    .unwrap();
    writeln!(text, "</svg>").unwrap();
    let path = r.out.join("map.svg");
    write_file(&path, &text)?;
    Ok(Some(path))
}
