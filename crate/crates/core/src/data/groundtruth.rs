//! Query → valid-reference relations for the three evaluation protocols:
//! metric radius over planar poses, frame window over aligned traverses,
//! and explicit annotated pairs.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::Read;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "protocol", rename_all = "snake_case")]
pub enum Protocol {
    Radius { radius_m: f64 },
    FrameWindow { window: usize },
    PairList,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    pub protocol: Protocol,
    mapping: BTreeMap<String, BTreeSet<String>>,
}

impl GroundTruth {
    pub fn new(protocol: Protocol) -> Self {
        Self {
            protocol,
            mapping: BTreeMap::new(),
        }
    }

    /// Declares `query` with an empty valid set if it is not present yet.
    pub fn declare(&mut self, query: impl Into<String>) {
        self.mapping.entry(query.into()).or_default();
    }

    /// Returns false if the pair was already present.
    pub fn insert(&mut self, query: impl Into<String>, reference: impl Into<String>) -> bool {
        self.mapping
            .entry(query.into())
            .or_default()
            .insert(reference.into())
    }

    pub fn valid(&self, query: &str) -> Option<&BTreeSet<String>> {
        self.mapping.get(query)
    }

    pub fn is_match(&self, query: &str, reference: &str) -> bool {
        self.mapping
            .get(query)
            .is_some_and(|refs| refs.contains(reference))
    }

    pub fn queries(&self) -> impl Iterator<Item = &str> {
        self.mapping.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &BTreeSet<String>)> {
        self.mapping.iter().map(|(q, r)| (q.as_str(), r))
    }

    pub fn len(&self) -> usize {
        self.mapping.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mapping.is_empty()
    }

    /// Ids from `queries` that have no entry at all.
    pub fn missing<'a>(&self, queries: impl IntoIterator<Item = &'a str>) -> Vec<String> {
        queries
            .into_iter()
            .filter(|q| !self.mapping.contains_key(*q))
            .map(str::to_owned)
            .collect()
    }
}

/// Planar positions in meters.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PoseTable {
    rows: Vec<(String, f64, f64)>,
}

impl PoseTable {
    pub fn new(rows: Vec<(String, f64, f64)>) -> Result<Self> {
        let mut seen = HashSet::new();
        for (id, x, y) in &rows {
            if !x.is_finite() || !y.is_finite() {
                return Err(Error::Data(format!("pose of {id:?} is not finite ({x}, {y})")));
            }
            if !seen.insert(id.as_str()) {
                return Err(Error::Data(format!("duplicate pose id {id:?}")));
            }
        }
        Ok(Self { rows })
    }

    pub fn rows(&self) -> &[(String, f64, f64)] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Reference `r` is valid for query `q` iff their distance is at most
/// `radius_m` (inclusive).
pub fn build_ground_truth_radius(
    queries: &PoseTable,
    references: &PoseTable,
    radius_m: f64,
) -> Result<GroundTruth> {
    if !(radius_m > 0.0) || !radius_m.is_finite() {
        return Err(Error::Config(format!("radius must be positive, got {radius_m}")));
    }
    let mut gt = GroundTruth::new(Protocol::Radius { radius_m });
    for (q, qx, qy) in queries.rows() {
        gt.declare(q.clone());
        for (r, rx, ry) in references.rows() {
            if (qx - rx).hypot(qy - ry) <= radius_m {
                gt.insert(q.clone(), r.clone());
            }
        }
    }
    Ok(gt)
}

/// Frame-window rule on aligned traverses whose ids are the frame indices
/// `0..query_count`.
pub fn build_ground_truth_frames(query_count: usize, window: i64) -> Result<GroundTruth> {
    let ids: Vec<String> = (0..query_count).map(|i| i.to_string()).collect();
    frames_for_ids(&ids, &ids, window)
}

/// Reference `j` is valid for query `i` iff `|i − j| ≤ window`, where the
/// indices are positions in the two ordered id lists.
pub fn frames_for_ids(queries: &[String], references: &[String], window: i64) -> Result<GroundTruth> {
    if window < 0 {
        return Err(Error::Config(format!("frame window must be ≥ 0, got {window}")));
    }
    let window = window as usize;
    let mut gt = GroundTruth::new(Protocol::FrameWindow { window });
    for (i, q) in queries.iter().enumerate() {
        gt.declare(q.clone());
        let lo = i.saturating_sub(window);
        let hi = (i + window + 1).min(references.len());
        for r in references.iter().take(hi).skip(lo) {
            gt.insert(q.clone(), r.clone());
        }
    }
    Ok(gt)
}

/// A parsed pair list with the 1-based line numbers of duplicate rows.
#[derive(Clone, Debug)]
pub struct PairList {
    pub gt: GroundTruth,
    pub duplicate_lines: Vec<u64>,
}

/// Parses `query_id,ref_id` CSV rows. A leading `query_id,ref_id` header is
/// skipped, a row with an empty `ref_id` declares a query without valid
/// references, and every id in `manifest` is declared even if absent.
pub fn parse_pair_list<R: Read>(input: R, manifest: Option<&[String]>) -> Result<PairList> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(input);
    let mut gt = GroundTruth::new(Protocol::PairList);
    let mut duplicate_lines = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row?;
        let line = row.position().map(|p| p.line()).unwrap_or(i as u64 + 1);
        if i == 0 && row.len() == 2 && &row[0] == "query_id" && &row[1] == "ref_id" {
            continue;
        }
        if row.len() != 2 || row[0].is_empty() {
            return Err(Error::Data(format!(
                "pair list line {line}: expected `query_id,ref_id`, got {} field(s)",
                row.len()
            )));
        }
        if row[1].is_empty() {
            gt.declare(&row[0]);
        } else if !gt.insert(&row[0], &row[1]) {
            duplicate_lines.push(line);
        }
    }
    for q in manifest.into_iter().flatten() {
        gt.declare(q.clone());
    }
    Ok(PairList {
        gt,
        duplicate_lines,
    })
}

pub fn load_pair_list(path: impl AsRef<Path>, manifest: Option<&[String]>) -> Result<GroundTruth> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let parsed = parse_pair_list(file, manifest)?;
    for line in &parsed.duplicate_lines {
        log::warn!("{}: duplicate pair on line {line} ignored", path.display());
    }
    Ok(parsed.gt)
}

/// Writes `query_id,ref_id` rows; queries with no valid reference get a row
/// with an empty `ref_id` so the file round-trips through [`load_pair_list`].
pub fn write_ground_truth(gt: &GroundTruth, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["query_id", "ref_id"])?;
    for (q, refs) in gt.iter() {
        if refs.is_empty() {
            w.write_record([q, ""])?;
        }
        for r in refs {
            w.write_record([q, r.as_str()])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn header_index(headers: &csv::StringRecord, name: &str) -> Option<usize> {
    headers.iter().position(|h| h.trim().eq_ignore_ascii_case(name))
}

/// Reads a pose or manifest CSV with columns `image_id,x,y` (extra columns
/// ignored). Rows lacking coordinates are reported together.
pub fn read_pose_table(path: impl AsRef<Path>) -> Result<PoseTable> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers = reader.headers()?.clone();
    let (id_col, x_col, y_col) = match (
        header_index(&headers, "image_id"),
        header_index(&headers, "x"),
        header_index(&headers, "y"),
    ) {
        (Some(i), Some(x), Some(y)) => (i, x, y),
        _ => {
            return Err(Error::Data(format!(
                "{}: pose table needs image_id, x and y columns",
                path.display()
            )))
        }
    };
    let mut rows = Vec::new();
    let mut missing = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let id = rec.get(id_col).unwrap_or("").to_owned();
        if id.is_empty() {
            return Err(Error::Data(format!("{}: line {line} has no image_id", path.display())));
        }
        let coord = |c: usize| -> Result<Option<f64>> {
            match rec.get(c).unwrap_or("") {
                "" => Ok(None),
                s => s.parse().map(Some).map_err(|_| {
                    Error::Data(format!("{}: line {line}: bad coordinate {s:?}", path.display()))
                }),
            }
        };
        match (coord(x_col)?, coord(y_col)?) {
            (Some(x), Some(y)) => rows.push((id, x, y)),
            _ => missing.push(id),
        }
    }
    if !missing.is_empty() {
        return Err(Error::Data(format!(
            "{}: missing pose for ids: {}",
            path.display(),
            missing.join(", ")
        )));
    }
    PoseTable::new(rows)
}

/// Ordered image ids from a manifest CSV (`image_id` column, or the first
/// column when there is no such header). Row order defines frame indices.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<String>> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)?;
    let headers = reader.headers()?.clone();
    let col = header_index(&headers, "image_id");
    let mut ids = Vec::new();
    if col.is_none() {
        if let Some(first) = headers.get(0).filter(|s| !s.is_empty()) {
            ids.push(first.to_owned());
        }
    }
    let col = col.unwrap_or(0);
    let mut seen: HashSet<String> = ids.iter().cloned().collect();
    for rec in reader.records() {
        let rec = rec?;
        let id = rec.get(col).unwrap_or("").to_owned();
        if id.is_empty() {
            continue;
        }
        if !seen.insert(id.clone()) {
            return Err(Error::Data(format!("{}: duplicate id {id:?}", path.display())));
        }
        ids.push(id);
    }
    Ok(ids)
}
