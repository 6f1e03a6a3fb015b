//! Bandwidth maps: which cells carry high-bandwidth coverage, where a trip
//! starts, and where it must end.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use super::{Cell, EnvError};

/// One bandwidth allocation over a grid: a set of high-bandwidth cells plus
/// fixed start and destination cells. Bandwidth is binary; a cell is either
/// in the set or not.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BandwidthMap {
    rows: usize,
    cols: usize,
    high_bw: BTreeSet<Cell>,
    start: Cell,
    destination: Cell,
    map_id: u32,
}

impl BandwidthMap {
    pub fn new(
        rows: usize,
        cols: usize,
        start: Cell,
        destination: Cell,
        high_bw: impl IntoIterator<Item = Cell>,
        map_id: u32,
    ) -> Result<Self, EnvError> {
        if rows < 1 || cols < 1 {
            return Err(EnvError::Config(format!(
                "grid must be at least 1x1, got {rows}x{cols}"
            )));
        }
        let inside = |cell: Cell| cell.row < rows && cell.col < cols;
        if !inside(start) {
            return Err(EnvError::Config(format!(
                "start {start} lies outside the {rows}x{cols} grid"
            )));
        }
        if !inside(destination) {
            return Err(EnvError::Config(format!(
                "destination {destination} lies outside the {rows}x{cols} grid"
            )));
        }
        if start == destination {
            return Err(EnvError::Config(format!(
                "start and destination must differ, both are {start}"
            )));
        }
        let high_bw: BTreeSet<Cell> = high_bw.into_iter().collect();
        if let Some(&cell) = high_bw.iter().find(|&&c| !inside(c)) {
            return Err(EnvError::Config(format!(
                "high-bandwidth cell {cell} lies outside the {rows}x{cols} grid"
            )));
        }
        Ok(Self {
            rows,
            cols,
            high_bw,
            start,
            destination,
            map_id,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn start(&self) -> Cell {
        self.start
    }

    pub fn destination(&self) -> Cell {
        self.destination
    }

    pub fn map_id(&self) -> u32 {
        self.map_id
    }

    pub fn is_high_bw(&self, cell: Cell) -> bool {
        self.high_bw.contains(&cell)
    }

    /// High-bandwidth cells in row-major order.
    pub fn high_bw_cells(&self) -> impl Iterator<Item = Cell> + '_ {
        self.high_bw.iter().copied()
    }

    pub fn high_bw_count(&self) -> usize {
        self.high_bw.len()
    }

    /// A copy with a different id, for assembling sampled sets from files.
    pub fn with_map_id(mut self, map_id: u32) -> Self {
        self.map_id = map_id;
        self
    }

    /// Serializes to the map file format: `rows cols`, `start r c`,
    /// `dest r c`, `highbw k`, then k lines of `r c` in row-major order.
    pub fn to_map_string(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("{} {}\n", self.rows, self.cols));
        out.push_str(&format!("start {} {}\n", self.start.row, self.start.col));
        out.push_str(&format!(
            "dest {} {}\n",
            self.destination.row, self.destination.col
        ));
        out.push_str(&format!("highbw {}\n", self.high_bw.len()));
        for cell in &self.high_bw {
            out.push_str(&format!("{} {}\n", cell.row, cell.col));
        }
        out
    }

    pub fn write_map_file(&self, path: &Path) -> Result<(), EnvError> {
        fs::write(path, self.to_map_string()).map_err(|source| EnvError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    /// Reads a map file, assigning the given id.
    pub fn read_map_file(path: &Path, map_id: u32) -> Result<Self, EnvError> {
        let text = fs::read_to_string(path).map_err(|source| EnvError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text, map_id).map_err(|message| EnvError::Format {
            path: path.display().to_string(),
            message,
        })
    }

    fn parse(text: &str, map_id: u32) -> Result<Self, String> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());

        let header = lines.next().ok_or("empty map file")?;
        let (rows, cols) = parse_pair(header)
            .ok_or_else(|| format!("expected `rows cols`, got {header:?}"))?;

        let start = parse_labeled_cell(lines.next(), "start")?;
        let dest = parse_labeled_cell(lines.next(), "dest")?;

        let hb_line = lines.next().ok_or("missing `highbw k` line")?;
        let mut fields = hb_line.split_whitespace();
        if fields.next() != Some("highbw") {
            return Err(format!("expected `highbw k`, got {hb_line:?}"));
        }
        let k: usize = fields
            .next()
            .ok_or("missing high-bandwidth count")?
            .parse()
            .map_err(|_| format!("bad high-bandwidth count in {hb_line:?}"))?;

        let mut high_bw = Vec::with_capacity(k);
        for i in 0..k {
            let line = lines
                .next()
                .ok_or_else(|| format!("expected {k} high-bandwidth cells, found {i}"))?;
            let (r, c) = parse_pair(line)
                .ok_or_else(|| format!("expected `r c`, got {line:?}"))?;
            high_bw.push(Cell::new(r, c));
        }
        if let Some(extra) = lines.next() {
            return Err(format!("unexpected trailing content {extra:?}"));
        }

        Self::new(rows, cols, start, dest, high_bw, map_id).map_err(|e| e.to_string())
    }
}

fn parse_pair(line: &str) -> Option<(usize, usize)> {
    let mut fields = line.split_whitespace();
    let a = fields.next()?.parse().ok()?;
    let b = fields.next()?.parse().ok()?;
    if fields.next().is_some() {
        return None;
    }
    Some((a, b))
}

fn parse_labeled_cell(line: Option<&str>, label: &str) -> Result<Cell, String> {
    let line = line.ok_or_else(|| format!("missing `{label} r c` line"))?;
    let mut fields = line.split_whitespace();
    if fields.next() != Some(label) {
        return Err(format!("expected `{label} r c`, got {line:?}"));
    }
    let r: usize = fields
        .next()
        .ok_or_else(|| format!("missing row in {line:?}"))?
        .parse()
        .map_err(|_| format!("bad row in {line:?}"))?;
    let c: usize = fields
        .next()
        .ok_or_else(|| format!("missing col in {line:?}"))?
        .parse()
        .map_err(|_| format!("bad col in {line:?}"))?;
    Ok(Cell::new(r, c))
}
