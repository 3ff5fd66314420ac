//! World geometry, requests, couriers and the dispatching action space.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of dispatching actions: a 5x5 neighbourhood times four patrol budgets.
pub const NUM_ACTIONS: usize = 100;
/// Patrol budgets (minutes) a courier can be given inside its target grid.
pub const PATROL_OPTIONS: [u32; 4] = [0, 10, 20, 30];
/// Half-width of the candidate neighbourhood.
pub const ACTION_RADIUS: i32 = 2;

pub const DEFAULT_CELL_KM: f64 = 1.0;
pub const DEFAULT_SPEED_KM_PER_MIN: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Integer grid coordinate; `x` is the column, `y` the row.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub x: usize,
    pub y: usize,
}

impl Cell {
    pub const fn new(x: usize, y: usize) -> Self {
        Self { x, y }
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridType {
    Intense,
    Peripheral,
    Empty,
}

/// How grid-to-grid legs are measured.
#[derive(Clone, Debug, PartialEq)]
pub enum DistanceModel {
    EuclideanCenters,
    /// Row-major `cells x cells` matrix of kilometres between grids. `source`
    /// is the file the matrix came from, kept so instances can be saved again.
    Matrix { source: String, km: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridWorld {
    pub width: usize,
    pub height: usize,
    pub cell_size_km: f64,
    pub speed_km_per_min: f64,
    grid_types: Vec<GridType>,
    distance: DistanceModel,
}

impl GridWorld {
    pub fn new(
        width: usize,
        height: usize,
        cell_size_km: f64,
        speed_km_per_min: f64,
        grid_types: Vec<GridType>,
        distance: DistanceModel,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Config(format!(
                "grid world must be at least 1x1, got {width}x{height}"
            )));
        }
        if !(cell_size_km > 0.0 && cell_size_km.is_finite()) {
            return Err(Error::Config(format!(
                "cell size must be positive, got {cell_size_km}"
            )));
        }
        if !(speed_km_per_min > 0.0 && speed_km_per_min.is_finite()) {
            return Err(Error::Config(format!(
                "courier speed must be positive, got {speed_km_per_min}"
            )));
        }
        let cells = width * height;
        if grid_types.len() != cells {
            return Err(Error::Config(format!(
                "grid type map has {} entries, world has {cells} grids",
                grid_types.len()
            )));
        }
        if let DistanceModel::Matrix { km, .. } = &distance {
            validate_matrix(km, cells)?;
        }
        Ok(Self {
            width,
            height,
            cell_size_km,
            speed_km_per_min,
            grid_types,
            distance,
        })
    }

    /// Euclidean world with the default 1 km cells and 0.5 km/min couriers.
    pub fn euclidean(width: usize, height: usize, grid_types: Vec<GridType>) -> Result<Self> {
        Self::new(
            width,
            height,
            DEFAULT_CELL_KM,
            DEFAULT_SPEED_KM_PER_MIN,
            grid_types,
            DistanceModel::EuclideanCenters,
        )
    }

    /// Uniform world where every grid has the same type.
    pub fn uniform(width: usize, height: usize, grid_type: GridType) -> Result<Self> {
        Self::euclidean(width, height, vec![grid_type; width * height])
    }

    pub fn num_cells(&self) -> usize {
        self.width * self.height
    }

    pub fn grid_types(&self) -> &[GridType] {
        &self.grid_types
    }

    pub fn distance_model(&self) -> &DistanceModel {
        &self.distance
    }

    pub fn grid_type(&self, cell: Cell) -> GridType {
        self.grid_types[self.cell_index(cell)]
    }

    pub fn cell_index(&self, cell: Cell) -> usize {
        debug_assert!(cell.x < self.width && cell.y < self.height);
        cell.y * self.width + cell.x
    }

    pub fn cell_at(&self, index: usize) -> Cell {
        Cell::new(index % self.width, index / self.width)
    }

    pub fn extent_km(&self) -> (f64, f64) {
        (
            self.width as f64 * self.cell_size_km,
            self.height as f64 * self.cell_size_km,
        )
    }

    pub fn contains(&self, p: Point) -> bool {
        let (w, h) = self.extent_km();
        (0.0..=w).contains(&p.x) && (0.0..=h).contains(&p.y)
    }

    /// Grid containing `p`. Points on the far boundary belong to the last row/column.
    pub fn cell_of(&self, p: Point) -> Cell {
        let gx = (p.x / self.cell_size_km).floor().max(0.0) as usize;
        let gy = (p.y / self.cell_size_km).floor().max(0.0) as usize;
        Cell::new(gx.min(self.width - 1), gy.min(self.height - 1))
    }

    pub fn center(&self, cell: Cell) -> Point {
        Point::new(
            (cell.x as f64 + 0.5) * self.cell_size_km,
            (cell.y as f64 + 0.5) * self.cell_size_km,
        )
    }

    /// Cell shifted by `(dx, dy)` and clipped to the board.
    pub fn offset_cell(&self, cell: Cell, dx: i32, dy: i32) -> Cell {
        let x = (cell.x as i64 + dx as i64).clamp(0, self.width as i64 - 1) as usize;
        let y = (cell.y as i64 + dy as i64).clamp(0, self.height as i64 - 1) as usize;
        Cell::new(x, y)
    }

    /// Travel distance in km between two points.
    pub fn distance_km(&self, from: Point, to: Point) -> f64 {
        match &self.distance {
            DistanceModel::EuclideanCenters => from.distance(&to),
            DistanceModel::Matrix { km, .. } => {
                let a = self.cell_index(self.cell_of(from));
                let b = self.cell_index(self.cell_of(to));
                if a == b {
                    from.distance(&to)
                } else {
                    km[a * self.num_cells() + b]
                }
            }
        }
    }

    /// Distance in km between two grid centres under the active distance model.
    pub fn grid_distance_km(&self, from: Cell, to: Cell) -> f64 {
        self.distance_km(self.center(from), self.center(to))
    }

    /// Travel time in minutes at the world's courier speed.
    pub fn travel_time(&self, from: Point, to: Point) -> f64 {
        self.distance_km(from, to) / self.speed_km_per_min
    }
}

fn validate_matrix(km: &[f64], cells: usize) -> Result<()> {
    if km.len() != cells * cells {
        return Err(Error::Config(format!(
            "distance matrix has {} entries, expected {}x{}",
            km.len(),
            cells,
            cells
        )));
    }
    for (i, &d) in km.iter().enumerate() {
        if !(d.is_finite() && d >= 0.0) {
            return Err(Error::Config(format!(
                "distance matrix entry ({}, {}) = {d} is not a non-negative number",
                i / cells,
                i % cells
            )));
        }
        if i / cells == i % cells && d != 0.0 {
            return Err(Error::Config(format!(
                "distance matrix diagonal ({}, {}) must be zero, got {d}",
                i / cells,
                i % cells
            )));
        }
    }
    Ok(())
}

/// Reads a grid-to-grid distance matrix in km.
///
/// The header row lists grid indices `0..cells` in row-major order, optionally
/// preceded by a label column; data rows may likewise lead with their own grid index.
pub fn load_distance_matrix(path: &Path, cells: usize) -> Result<Vec<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers = reader.headers()?.clone();
    let labelled = headers.len() == cells + 1;
    if headers.len() != cells && !labelled {
        return Err(Error::Config(format!(
            "distance matrix header has {} columns, expected {cells}",
            headers.len()
        )));
    }
    for (k, h) in headers.iter().skip(usize::from(labelled)).enumerate() {
        if h.parse::<usize>().ok() != Some(k) {
            return Err(Error::Config(format!(
                "distance matrix header column {k} should be grid index {k}, found `{h}`"
            )));
        }
    }
    let mut km = Vec::with_capacity(cells * cells);
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != headers.len() {
            return Err(Error::Config(format!(
                "distance matrix row {row} has {} columns, expected {}",
                record.len(),
                headers.len()
            )));
        }
        for field in record.iter().skip(usize::from(labelled)) {
            let v: f64 = field.parse().map_err(|_| {
                Error::Config(format!("distance matrix row {row}: `{field}` is not a number"))
            })?;
            km.push(v);
        }
    }
    validate_matrix(&km, cells)?;
    Ok(km)
}

/// Writes a matrix in the format accepted by [`load_distance_matrix`].
pub fn save_distance_matrix(path: &Path, km: &[f64], cells: usize) -> Result<()> {
    validate_matrix(km, cells)?;
    let mut writer = csv::Writer::from_path(path)?;
    let mut header = vec!["grid".to_string()];
    header.extend((0..cells).map(|g| g.to_string()));
    writer.write_record(&header)?;
    for (g, row) in km.chunks(cells).enumerate() {
        let mut record = vec![g.to_string()];
        record.extend(row.iter().map(|d| d.to_string()));
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RequestStatus {
    Pending,
    Locked,
    Served,
    Expired,
}

impl RequestStatus {
    fn name(self) -> &'static str {
        match self {
            RequestStatus::Pending => "Pending",
            RequestStatus::Locked => "Locked",
            RequestStatus::Served => "Served",
            RequestStatus::Expired => "Expired",
        }
    }
}

/// A pickup order with a hard start-time window.
#[derive(Clone, Debug, PartialEq)]
pub struct Request {
    pub id: u64,
    pub location: Point,
    /// Row-major index of the grid containing `location`.
    pub grid: usize,
    pub arrival: f64,
    pub earliest: f64,
    pub latest: f64,
    pub service_time: f64,
    pub price: f64,
    pub status: RequestStatus,
}

impl Request {
    fn transition(&mut self, allowed: &[RequestStatus], to: RequestStatus) -> Result<()> {
        if allowed.contains(&self.status) {
            self.status = to;
            Ok(())
        } else {
            Err(Error::StatusTransition {
                id: self.id,
                from: self.status.name(),
                to: to.name(),
            })
        }
    }

    pub fn lock(&mut self) -> Result<()> {
        self.transition(&[RequestStatus::Pending], RequestStatus::Locked)
    }

    pub fn serve(&mut self) -> Result<()> {
        self.transition(&[RequestStatus::Locked], RequestStatus::Served)
    }

    pub fn expire(&mut self) -> Result<()> {
        self.transition(
            &[RequestStatus::Pending, RequestStatus::Locked],
            RequestStatus::Expired,
        )
    }

    pub fn is_pending(&self) -> bool {
        self.status == RequestStatus::Pending
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CourierStatus {
    Free,
    Walking,
    Picking,
}

/// Straight-line walk towards a target grid centre.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Walk {
    pub from: Point,
    pub depart: f64,
    pub to: Point,
    pub arrive: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Courier {
    pub id: usize,
    pub position: Point,
    pub status: CourierStatus,
    pub speed_km_per_min: f64,
    pub fleet: usize,
    /// Estimated completion time of the current plan; equals the current time while free.
    pub busy_until: f64,
    /// Where the current plan is expected to end.
    pub plan_end: Point,
    pub revenue: f64,
    pub walk: Option<Walk>,
}

impl Courier {
    pub fn new(id: usize, position: Point, speed_km_per_min: f64, fleet: usize) -> Self {
        Self {
            id,
            position,
            status: CourierStatus::Free,
            speed_km_per_min,
            fleet,
            busy_until: 0.0,
            plan_end: position,
            revenue: 0.0,
            walk: None,
        }
    }

    /// Position at `now`, interpolating along an in-progress walk.
    pub fn position_at(&self, now: f64) -> Point {
        match (self.status, self.walk) {
            (CourierStatus::Walking, Some(w)) if w.arrive > w.depart => {
                let f = ((now - w.depart) / (w.arrive - w.depart)).clamp(0.0, 1.0);
                Point::new(
                    w.from.x + f * (w.to.x - w.from.x),
                    w.from.y + f * (w.to.y - w.from.y),
                )
            }
            _ => self.position,
        }
    }
}

/// A dispatching decision: move to the grid `(dx, dy)` away and patrol there.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ActionSpec {
    pub dx: i32,
    pub dy: i32,
    pub patrol_minutes: u32,
}

impl ActionSpec {
    pub fn new(dx: i32, dy: i32, patrol_minutes: u32) -> Result<Self> {
        let a = Self {
            dx,
            dy,
            patrol_minutes,
        };
        if dx.abs() > ACTION_RADIUS
            || dy.abs() > ACTION_RADIUS
            || !PATROL_OPTIONS.contains(&patrol_minutes)
        {
            return Err(Error::ActionSpec {
                dx,
                dy,
                patrol: patrol_minutes,
            });
        }
        Ok(a)
    }

    pub fn index(&self) -> usize {
        let side = (2 * ACTION_RADIUS + 1) as usize;
        let gx = (self.dx + ACTION_RADIUS) as usize;
        let gy = (self.dy + ACTION_RADIUS) as usize;
        (gy * side + gx) * PATROL_OPTIONS.len() + (self.patrol_minutes / 10) as usize
    }

    pub fn from_index(index: usize) -> Result<Self> {
        if index >= NUM_ACTIONS {
            return Err(Error::ActionIndex(index));
        }
        let side = (2 * ACTION_RADIUS + 1) as usize;
        let patrol = PATROL_OPTIONS[index % PATROL_OPTIONS.len()];
        let spot = index / PATROL_OPTIONS.len();
        Ok(Self {
            dx: (spot % side) as i32 - ACTION_RADIUS,
            dy: (spot / side) as i32 - ACTION_RADIUS,
            patrol_minutes: patrol,
        })
    }

    /// All 100 actions in index order.
    pub fn all() -> impl Iterator<Item = ActionSpec> {
        (0..NUM_ACTIONS).map(|i| Self::from_index(i).expect("index in range"))
    }

    pub fn patrol(&self) -> f64 {
        f64::from(self.patrol_minutes)
    }

    pub fn target(&self, from: Cell, world: &GridWorld) -> Cell {
        world.offset_cell(from, self.dx, self.dy)
    }
}
