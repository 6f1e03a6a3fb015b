//! Traffic ingestion: from a raw traversal-count heatmap to a grid of
//! densities and delay indices.
//!
//! The pipeline mirrors how a city heatmap becomes a simulation grid: rotate
//! the points so road stretches run vertical/horizontal, crop the area of
//! interest, bin the points into equal-size cells, and sum traversal counts
//! per cell. Summed counts are the cell's traffic density; densities map onto
//! four delay-index categories that model how long a vehicle spends in the
//! cell.

use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Density thresholds separating the four traffic categories.
pub const THRESHOLD_MEDIUM_LOW: f64 = 1100.0;
pub const THRESHOLD_MEDIUM_HIGH: f64 = 2200.0;
pub const THRESHOLD_HIGH: f64 = 2900.0;

/// The four delay-index values, lowest category first.
pub const DELAY_VALUES: [f64; 4] = [1.5, 2.0, 2.5, 3.0];

/// Errors from heatmap ingestion and grid file I/O.
#[derive(Debug, Error)]
pub enum IngestError {
    #[error("density must be a finite non-negative number, got {0}")]
    InvalidDensity(f64),
    #[error("invalid ingest spec: {0}")]
    InvalidSpec(String),
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: row {row}: {message}")]
    Parse {
        path: String,
        /// 1-based row number, counting the header as row 1.
        row: usize,
        message: String,
    },
    #[error("{path}: {message}")]
    Format { path: String, message: String },
}

/// One point of a traversal-count heatmap, in abstract planar units.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
pub struct HeatPoint {
    pub x: f64,
    pub y: f64,
    pub traversals: u64,
}

/// Axis-aligned crop box, applied after rotation.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct CropBox {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl CropBox {
    pub fn width(&self) -> f64 {
        self.max_x - self.min_x
    }

    pub fn height(&self) -> f64 {
        self.max_y - self.min_y
    }

    fn centroid(&self) -> (f64, f64) {
        (
            (self.min_x + self.max_x) / 2.0,
            (self.min_y + self.max_y) / 2.0,
        )
    }

    fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.min_x && x <= self.max_x && y >= self.min_y && y <= self.max_y
    }
}

/// How to turn a point cloud into a grid: rotation about the crop-box
/// centroid, the crop box itself, and the grid resolution.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct IngestSpec {
    /// Rotation in degrees, counterclockwise, about the crop-box centroid.
    pub rotation_degrees: f64,
    pub crop: CropBox,
    pub rows: usize,
    pub cols: usize,
}

impl IngestSpec {
    fn validate(&self) -> Result<(), IngestError> {
        if self.rows < 1 || self.cols < 1 {
            return Err(IngestError::InvalidSpec(format!(
                "grid must be at least 1x1, got {}x{}",
                self.rows, self.cols
            )));
        }
        if !(self.crop.width() > 0.0) || !(self.crop.height() > 0.0) {
            return Err(IngestError::InvalidSpec(format!(
                "crop box must have positive width and height, got {} x {}",
                self.crop.width(),
                self.crop.height()
            )));
        }
        if !self.rotation_degrees.is_finite() {
            return Err(IngestError::InvalidSpec(format!(
                "rotation must be finite, got {}",
                self.rotation_degrees
            )));
        }
        Ok(())
    }
}

/// Per-cell traffic densities with derived delay indices.
///
/// `mean_density` is the arithmetic mean over all cells and acts as the
/// reference level for the per-step punishment. An all-zero grid would make
/// that mean zero, so it is substituted with 1 and the punishment degenerates
/// gracefully to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct TrafficGrid {
    rows: usize,
    cols: usize,
    density: Vec<f64>,
    delay: Vec<f64>,
    mean_density: f64,
}

impl TrafficGrid {
    /// Builds a grid from row-major densities, deriving delay indices and the
    /// mean density.
    pub fn from_densities(
        rows: usize,
        cols: usize,
        density: Vec<f64>,
    ) -> Result<Self, IngestError> {
        if rows < 1 || cols < 1 {
            return Err(IngestError::InvalidSpec(format!(
                "grid must be at least 1x1, got {rows}x{cols}"
            )));
        }
        if density.len() != rows * cols {
            return Err(IngestError::InvalidSpec(format!(
                "expected {} densities for a {rows}x{cols} grid, got {}",
                rows * cols,
                density.len()
            )));
        }
        let delay = density
            .iter()
            .map(|&d| categorize_traffic(d))
            .collect::<Result<Vec<_>, _>>()?;
        let total: f64 = density.iter().sum();
        let mean_density = if total == 0.0 {
            1.0
        } else {
            total / (rows * cols) as f64
        };
        Ok(Self {
            rows,
            cols,
            density,
            delay,
            mean_density,
        })
    }

    /// A grid with the same density everywhere. Handy for tests and synthetic
    /// setups where traffic should not matter.
    pub fn uniform(rows: usize, cols: usize, density: f64) -> Result<Self, IngestError> {
        Self::from_densities(rows, cols, vec![density; rows * cols])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn density(&self, row: usize, col: usize) -> f64 {
        self.density[row * self.cols + col]
    }

    pub fn delay(&self, row: usize, col: usize) -> f64 {
        self.delay[row * self.cols + col]
    }

    pub fn mean_density(&self) -> f64 {
        self.mean_density
    }

    pub fn densities(&self) -> &[f64] {
        &self.density
    }

    /// Serializes to the plain-text grid format: first line `rows cols`, then
    /// `rows` lines of `cols` space-separated densities. Delay indices are
    /// always derived, never stored.
    pub fn to_grid_string(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("{} {}\n", self.rows, self.cols));
        for r in 0..self.rows {
            let line: Vec<String> = (0..self.cols)
                .map(|c| format!("{}", self.density(r, c)))
                .collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn write_grid_file(&self, path: &Path) -> Result<(), IngestError> {
        fs::write(path, self.to_grid_string()).map_err(|source| IngestError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn read_grid_file(path: &Path) -> Result<Self, IngestError> {
        let text = fs::read_to_string(path).map_err(|source| IngestError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse_grid(&text).map_err(|message| IngestError::Format {
            path: path.display().to_string(),
            message,
        })
    }

    fn parse_grid(text: &str) -> Result<Self, String> {
        let mut lines = text.lines();
        let header = lines.next().ok_or("empty grid file")?;
        let mut dims = header.split_whitespace();
        let rows: usize = dims
            .next()
            .ok_or("missing rows in header")?
            .parse()
            .map_err(|_| format!("bad rows in header {header:?}"))?;
        let cols: usize = dims
            .next()
            .ok_or("missing cols in header")?
            .parse()
            .map_err(|_| format!("bad cols in header {header:?}"))?;
        let mut density = Vec::with_capacity(rows * cols);
        for (i, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            for field in line.split_whitespace() {
                let d: f64 = field
                    .parse()
                    .map_err(|_| format!("bad density {field:?} on grid line {}", i + 1))?;
                density.push(d);
            }
        }
        if density.len() != rows * cols {
            return Err(format!(
                "expected {} densities, found {}",
                rows * cols,
                density.len()
            ));
        }
        Self::from_densities(rows, cols, density).map_err(|e| e.to_string())
    }
}

impl fmt::Display for TrafficGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in 0..self.rows {
            for c in 0..self.cols {
                if c > 0 {
                    write!(f, " ")?;
                }
                write!(f, "{:.1}", self.delay(r, c))?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// Maps a traffic density onto its delay index.
///
/// Categories are half-open intervals with the boundary value owned by the
/// higher category: `[0, 1100)` is 1.5, `[1100, 2200)` is 2.0,
/// `[2200, 2900)` is 2.5, and `[2900, inf)` is 3.0.
pub fn categorize_traffic(density: f64) -> Result<f64, IngestError> {
    if !density.is_finite() || density < 0.0 {
        return Err(IngestError::InvalidDensity(density));
    }
    Ok(if density < THRESHOLD_MEDIUM_LOW {
        DELAY_VALUES[0]
    } else if density < THRESHOLD_MEDIUM_HIGH {
        DELAY_VALUES[1]
    } else if density < THRESHOLD_HIGH {
        DELAY_VALUES[2]
    } else {
        DELAY_VALUES[3]
    })
}

/// Rotates, crops, and bins heatmap points into a [`TrafficGrid`].
///
/// Points are rotated by `spec.rotation_degrees` about the crop-box centroid,
/// points outside the (closed) crop box are discarded, and the rest are
/// binned into `rows x cols` equal-size cells. Per-cell density is the sum of
/// traversal counts. Points exactly on an interior bin boundary go to the
/// higher-index bin; the outer max edges belong to the last bin.
pub fn bin_heatmap(points: &[HeatPoint], spec: &IngestSpec) -> Result<TrafficGrid, IngestError> {
    spec.validate()?;
    let (cx, cy) = spec.crop.centroid();
    let theta = spec.rotation_degrees.to_radians();
    let (sin, cos) = theta.sin_cos();
    let cell_w = spec.crop.width() / spec.cols as f64;
    let cell_h = spec.crop.height() / spec.rows as f64;

    let mut density = vec![0.0; spec.rows * spec.cols];
    for p in points {
        if !p.x.is_finite() || !p.y.is_finite() {
            return Err(IngestError::InvalidSpec(format!(
                "heat point has non-finite coordinates ({}, {})",
                p.x, p.y
            )));
        }
        let dx = p.x - cx;
        let dy = p.y - cy;
        let rx = cx + dx * cos - dy * sin;
        let ry = cy + dx * sin + dy * cos;
        if !spec.crop.contains(rx, ry) {
            continue;
        }
        let col = (((rx - spec.crop.min_x) / cell_w).floor() as usize).min(spec.cols - 1);
        let row = (((ry - spec.crop.min_y) / cell_h).floor() as usize).min(spec.rows - 1);
        density[row * spec.cols + col] += p.traversals as f64;
    }
    TrafficGrid::from_densities(spec.rows, spec.cols, density)
}

/// Reads heatmap points from a CSV file with the exact header
/// `x,y,traversals`.
pub fn load_heatmap_csv(path: &Path) -> Result<Vec<HeatPoint>, IngestError> {
    let display = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|source| IngestError::Io {
        path: display.clone(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    let headers = reader.headers().map_err(|e| IngestError::Format {
        path: display.clone(),
        message: e.to_string(),
    })?;
    let expected = ["x", "y", "traversals"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(IngestError::Format {
            path: display,
            message: format!("expected header `x,y,traversals`, got {headers:?}"),
        });
    }

    let mut points = Vec::new();
    // Header is row 1; the first data row is row 2.
    for (idx, record) in reader.records().enumerate() {
        let row = idx + 2;
        let record = record.map_err(|e| IngestError::Parse {
            path: display.clone(),
            row,
            message: e.to_string(),
        })?;
        let parse_err = |message: String| IngestError::Parse {
            path: display.clone(),
            row,
            message,
        };
        if record.len() != 3 {
            return Err(parse_err(format!("expected 3 fields, got {}", record.len())));
        }
        let x: f64 = record[0]
            .parse()
            .map_err(|_| parse_err(format!("bad x value {:?}", &record[0])))?;
        let y: f64 = record[1]
            .parse()
            .map_err(|_| parse_err(format!("bad y value {:?}", &record[1])))?;
        let traversals: u64 = record[2]
            .parse()
            .map_err(|_| parse_err(format!("bad traversal count {:?}", &record[2])))?;
        if !x.is_finite() || !y.is_finite() {
            return Err(parse_err("coordinates must be finite".to_string()));
        }
        points.push(HeatPoint { x, y, traversals });
    }
    Ok(points)
}
