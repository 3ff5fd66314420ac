//! Scenario presets, Poisson request generation and instance files.

use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::domain::{
    load_distance_matrix, Cell, DistanceModel, GridType, GridWorld, Point, Request,
    RequestStatus, DEFAULT_CELL_KM, DEFAULT_SPEED_KM_PER_MIN,
};
use crate::error::{Error, Result};
use crate::seeds::derive_seed;

/// Arrival rates (requests per minute per grid) for the two non-empty grid types.
pub const INTENSE_RATES: [f64; 8] = [0.05, 0.00, 0.00, 0.10, 0.04, 0.00, 0.00, 0.05];
pub const PERIPHERAL_RATES: [f64; 8] = [0.01, 0.06, 0.01, 0.01, 0.01, 0.06, 0.05, 0.01];
/// Share of intense, peripheral and empty grids.
pub const GRID_TYPE_SHARES: [f64; 3] = [0.05, 0.15, 0.80];

pub const PRESET_NAMES: [&str; 7] = [
    "base",
    "median",
    "large",
    "small_tw",
    "low_dyn",
    "random_grid",
    "desk",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateMatrix {
    pub intense: Vec<f64>,
    pub peripheral: Vec<f64>,
}

impl RateMatrix {
    pub fn table() -> Self {
        Self {
            intense: INTENSE_RATES.to_vec(),
            peripheral: PERIPHERAL_RATES.to_vec(),
        }
    }

    pub fn zeros(periods: usize) -> Self {
        Self {
            intense: vec![0.0; periods],
            peripheral: vec![0.0; periods],
        }
    }

    /// Per-minute rate for a grid type in a period. Empty grids never generate.
    pub fn rate(&self, grid_type: GridType, period: usize) -> f64 {
        match grid_type {
            GridType::Intense => self.intense[period],
            GridType::Peripheral => self.peripheral[period],
            GridType::Empty => 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridTypeMode {
    Fixed(Vec<GridType>),
    /// Each instance draws every grid's type independently with these probabilities.
    Random {
        intense: f64,
        peripheral: f64,
        empty: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    pub width: usize,
    pub height: usize,
    pub cell_km: f64,
    pub speed_km_per_min: f64,
    pub horizon_minutes: f64,
    pub periods: usize,
    pub rates: RateMatrix,
    /// Multiplier applied to every rate; the larger worlds scale demand this way.
    pub rate_scale: f64,
    pub grid_types: GridTypeMode,
    pub delta_t1: f64,
    pub delta_t2: f64,
    pub dod: f64,
    pub courier_count: usize,
    pub courier_start: Cell,
    pub seed: u64,
}

impl ScenarioConfig {
    pub fn base() -> Self {
        Self {
            name: "base".into(),
            width: 20,
            height: 20,
            cell_km: DEFAULT_CELL_KM,
            speed_km_per_min: DEFAULT_SPEED_KM_PER_MIN,
            horizon_minutes: 480.0,
            periods: 8,
            rates: RateMatrix::table(),
            rate_scale: 1.0,
            grid_types: GridTypeMode::Fixed(standard_layout(20, 20)),
            delta_t1: 0.0,
            delta_t2: 60.0,
            dod: 0.9,
            courier_count: 10,
            courier_start: Cell::new(10, 10),
            seed: 0,
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        let mut c = Self::base();
        c.name = name.to_string();
        match name {
            "base" => {}
            "median" => {
                c.courier_count = 30;
                c.rate_scale = 3.0;
            }
            "large" => {
                c.courier_count = 100;
                c.rate_scale = 15.0;
            }
            "small_tw" => c.delta_t2 = 20.0,
            "low_dyn" => c.dod = 0.5,
            "random_grid" => {
                c.grid_types = GridTypeMode::Random {
                    intense: GRID_TYPE_SHARES[0],
                    peripheral: GRID_TYPE_SHARES[1],
                    empty: GRID_TYPE_SHARES[2],
                }
            }
            "desk" => {
                c.width = 8;
                c.height = 8;
                c.grid_types = GridTypeMode::Fixed(standard_layout(8, 8));
                c.courier_count = 4;
                c.courier_start = Cell::new(4, 4);
                // 3 intense + 10 peripheral grids give 175.2 expected requests; scale to ~150.
                c.rate_scale = 0.85;
            }
            _ => {
                return Err(Error::UnknownName {
                    kind: "scenario",
                    name: name.into(),
                })
            }
        }
        Ok(c)
    }

    pub fn period_length(&self) -> f64 {
        self.horizon_minutes / self.periods as f64
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.width == 0 || self.height == 0 {
            return fail(format!("world must be at least 1x1, got {}x{}", self.width, self.height));
        }
        if self.periods == 0 || !(self.horizon_minutes > 0.0) {
            return fail("horizon and period count must be positive".into());
        }
        let ratio = self.horizon_minutes / self.periods as f64;
        if (ratio.round() - ratio).abs() > 1e-9 {
            return fail(format!(
                "horizon {} is not divisible into {} periods",
                self.horizon_minutes, self.periods
            ));
        }
        if self.rates.intense.len() != self.periods || self.rates.peripheral.len() != self.periods {
            return fail(format!("rate matrix must have {} periods per row", self.periods));
        }
        let rates = self.rates.intense.iter().chain(&self.rates.peripheral);
        if rates.clone().any(|&r| !(r >= 0.0 && r.is_finite()))
            || !(self.rate_scale >= 0.0 && self.rate_scale.is_finite())
        {
            return fail("arrival rates must be finite and non-negative".into());
        }
        if !(0.0..=1.0).contains(&self.dod) {
            return fail(format!("degree of dynamism must lie in [0, 1], got {}", self.dod));
        }
        if self.delta_t1 < 0.0 || self.delta_t2 < 0.0 {
            return fail("time-window offsets must be non-negative".into());
        }
        if self.courier_start.x >= self.width || self.courier_start.y >= self.height {
            return fail(format!("courier start {} lies outside the board", self.courier_start));
        }
        match &self.grid_types {
            GridTypeMode::Fixed(map) if map.len() != self.width * self.height => fail(format!(
                "grid type map has {} entries, expected {}",
                map.len(),
                self.width * self.height
            )),
            GridTypeMode::Random {
                intense,
                peripheral,
                empty,
            } if [intense, peripheral, empty].iter().any(|p| !(**p >= 0.0))
                || ((intense + peripheral + empty) - 1.0).abs() > 1e-9 =>
            {
                fail("grid type probabilities must be non-negative and sum to 1".into())
            }
            _ => Ok(()),
        }
    }

    /// Expected number of generated requests for a given grid type map.
    pub fn expected_requests(&self, grid_types: &[GridType]) -> f64 {
        let len = self.period_length();
        grid_types
            .iter()
            .map(|&t| {
                (0..self.periods)
                    .map(|m| self.rates.rate(t, m) * self.rate_scale * len)
                    .sum::<f64>()
            })
            .sum()
    }
}

/// Deterministic city layout: a compact downtown of intense grids at the board
/// centre, ringed by the peripheral grids; everything further out is empty.
/// Ties in distance go to the lower grid index.
pub fn standard_layout(width: usize, height: usize) -> Vec<GridType> {
    let n = width * height;
    let n_intense = ((GRID_TYPE_SHARES[0] * n as f64).round() as usize).clamp(1, n);
    let n_peripheral = ((GRID_TYPE_SHARES[1] * n as f64).round() as usize).min(n - n_intense);
    let (cx, cy) = (width as f64 / 2.0, height as f64 / 2.0);
    let dist = |i: usize| ((i % width) as f64 + 0.5 - cx).hypot((i / width) as f64 + 0.5 - cy);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| dist(a).total_cmp(&dist(b)).then(a.cmp(&b)));
    let mut types = vec![GridType::Empty; n];
    for (rank, &i) in order.iter().enumerate().take(n_intense + n_peripheral) {
        types[i] = if rank < n_intense {
            GridType::Intense
        } else {
            GridType::Peripheral
        };
    }
    types
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceMeta {
    pub scenario: String,
    pub seed: u64,
    pub couriers: usize,
    pub start: Cell,
}

/// One day of requests plus the world they live in.
#[derive(Clone, Debug, PartialEq)]
pub struct ProblemInstance {
    pub meta: InstanceMeta,
    pub world: GridWorld,
    pub requests: Vec<Request>,
    pub horizon: f64,
}

impl ProblemInstance {
    pub fn total_price(&self) -> f64 {
        self.requests.iter().map(|r| r.price).sum()
    }

    fn sort_requests(&mut self) {
        self.requests
            .sort_by(|a, b| a.arrival.total_cmp(&b.arrival).then(a.id.cmp(&b.id)));
    }
}

fn draw_grid_types(config: &ScenarioConfig, rng: &mut ChaCha8Rng) -> Vec<GridType> {
    match &config.grid_types {
        GridTypeMode::Fixed(map) => map.clone(),
        GridTypeMode::Random {
            intense,
            peripheral,
            ..
        } => (0..config.width * config.height)
            .map(|_| {
                let u: f64 = rng.random();
                if u < *intense {
                    GridType::Intense
                } else if u < intense + peripheral {
                    GridType::Peripheral
                } else {
                    GridType::Empty
                }
            })
            .collect(),
    }
}

/// Generates the raw request stream (before any degree-of-dynamism rewrite).
pub fn generate_instance(config: &ScenarioConfig) -> Result<ProblemInstance> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let grid_types = draw_grid_types(config, &mut rng);
    let world = GridWorld::new(
        config.width,
        config.height,
        config.cell_km,
        config.speed_km_per_min,
        grid_types,
        DistanceModel::EuclideanCenters,
    )?;
    let period_len = config.period_length();
    let mut requests = Vec::new();
    for g in 0..world.num_cells() {
        let cell = world.cell_at(g);
        let grid_type = world.grid_type(cell);
        for m in 0..config.periods {
            let rate = config.rates.rate(grid_type, m) * config.rate_scale;
            if rate <= 0.0 {
                continue;
            }
            let gaps = Exp::new(rate).map_err(|e| Error::Config(e.to_string()))?;
            let (start, end) = (m as f64 * period_len, (m + 1) as f64 * period_len);
            let mut t = start;
            loop {
                t += gaps.sample(&mut rng);
                if t >= end {
                    break;
                }
                let location = Point::new(
                    (cell.x as f64 + rng.random::<f64>()) * config.cell_km,
                    (cell.y as f64 + rng.random::<f64>()) * config.cell_km,
                );
                let earliest = t + config.delta_t1;
                requests.push(Request {
                    id: 0,
                    location,
                    grid: g,
                    arrival: t,
                    earliest,
                    latest: earliest + config.delta_t2,
                    service_time: f64::from(rng.random_range(2u32..=4)),
                    price: f64::from(rng.random_range(1u32..=5)),
                    status: RequestStatus::Pending,
                });
            }
        }
    }
    requests.sort_by(|a, b| a.arrival.total_cmp(&b.arrival).then(a.grid.cmp(&b.grid)));
    for (i, r) in requests.iter_mut().enumerate() {
        r.id = i as u64;
    }
    Ok(ProblemInstance {
        meta: InstanceMeta {
            scenario: config.name.clone(),
            seed: config.seed,
            couriers: config.courier_count,
            start: config.courier_start,
        },
        world,
        requests,
        horizon: config.horizon_minutes,
    })
}

/// Reveals a random `ceil((1 - dod) * N)` subset of requests at time 0.
///
/// Each advanced request keeps its own window offsets relative to arrival.
pub fn apply_dod(mut instance: ProblemInstance, dod: f64, seed: u64) -> Result<ProblemInstance> {
    if !(0.0..=1.0).contains(&dod) {
        return Err(Error::Config(format!("degree of dynamism must lie in [0, 1], got {dod}")));
    }
    let n = instance.requests.len();
    let advanced = (((1.0 - dod) * n as f64) - 1e-9).ceil().max(0.0) as usize;
    if advanced == 0 {
        return Ok(instance);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in sample(&mut rng, n, advanced.min(n)) {
        let r = &mut instance.requests[i];
        let lead = r.earliest - r.arrival;
        let width = r.latest - r.earliest;
        r.arrival = 0.0;
        r.earliest = lead;
        r.latest = lead + width;
    }
    instance.sort_requests();
    Ok(instance)
}

/// Full instance for a scenario: generation followed by the DOD rewrite.
pub fn build_instance(config: &ScenarioConfig) -> Result<ProblemInstance> {
    let raw = generate_instance(config)?;
    apply_dod(raw, config.dod, derive_seed(config.seed, "dod", 0))
}

// ---------------------------------------------------------------------------
// JSON instance files
// ---------------------------------------------------------------------------

pub fn save_instance(instance: &ProblemInstance, path: &Path) -> Result<()> {
    let world = &instance.world;
    let distance = match world.distance_model() {
        DistanceModel::EuclideanCenters => "euclidean".to_string(),
        DistanceModel::Matrix { source, .. } => format!("matrix:{source}"),
    };
    let requests: Vec<Value> = instance
        .requests
        .iter()
        .map(|r| {
            json!({
                "id": r.id,
                "x": r.location.x,
                "y": r.location.y,
                "t": r.arrival,
                "earliest": r.earliest,
                "latest": r.latest,
                "service": r.service_time,
                "price": r.price,
            })
        })
        .collect();
    let doc = json!({
        "meta": instance.meta,
        "world": {
            "width": world.width,
            "height": world.height,
            "cell_km": world.cell_size_km,
            "speed": world.speed_km_per_min,
            "grid_types": world.grid_types(),
            "distance": distance,
        },
        "horizon": instance.horizon,
        "requests": requests,
    });
    std::fs::write(path, serde_json::to_string_pretty(&doc)?)?;
    Ok(())
}

fn schema(path: &str, message: impl Into<String>) -> Error {
    Error::Schema {
        path: path.to_string(),
        message: message.into(),
    }
}

fn field<'a>(obj: &'a Map<String, Value>, key: &str, path: &str) -> Result<&'a Value> {
    obj.get(key)
        .ok_or_else(|| schema(&join(path, key), "missing field"))
}

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

fn object<'a>(v: &'a Value, path: &str) -> Result<&'a Map<String, Value>> {
    v.as_object().ok_or_else(|| schema(path, "expected an object"))
}

fn number(obj: &Map<String, Value>, key: &str, path: &str) -> Result<f64> {
    let p = join(path, key);
    let v = field(obj, key, path)?
        .as_f64()
        .ok_or_else(|| schema(&p, "expected a number"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(schema(&p, "expected a finite number"))
    }
}

fn unsigned(obj: &Map<String, Value>, key: &str, path: &str) -> Result<u64> {
    field(obj, key, path)?
        .as_u64()
        .ok_or_else(|| schema(&join(path, key), "expected a non-negative integer"))
}

pub fn load_instance(path: &Path) -> Result<ProblemInstance> {
    let text = std::fs::read_to_string(path)?;
    let doc: Value = serde_json::from_str(&text)?;
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse_instance(&doc, &base_dir)
}

/// Parses an instance document; relative matrix paths resolve against `base_dir`.
pub fn parse_instance(doc: &Value, base_dir: &Path) -> Result<ProblemInstance> {
    let root = object(doc, "")?;
    let meta: InstanceMeta = serde_json::from_value(field(root, "meta", "")?.clone())
        .map_err(|e| schema("meta", e.to_string()))?;
    let w = object(field(root, "world", "")?, "world")?;
    let width = unsigned(w, "width", "world")? as usize;
    let height = unsigned(w, "height", "world")? as usize;
    let cell_km = number(w, "cell_km", "world")?;
    let speed = match w.get("speed") {
        Some(_) => number(w, "speed", "world")?,
        None => DEFAULT_SPEED_KM_PER_MIN,
    };
    let grid_types: Vec<GridType> = serde_json::from_value(field(w, "grid_types", "world")?.clone())
        .map_err(|e| schema("world.grid_types", e.to_string()))?;
    let distance_spec = field(w, "distance", "world")?
        .as_str()
        .ok_or_else(|| schema("world.distance", "expected a string"))?;
    let distance = if distance_spec == "euclidean" {
        DistanceModel::EuclideanCenters
    } else if let Some(source) = distance_spec.strip_prefix("matrix:") {
        let p = PathBuf::from(source);
        let full = if p.is_absolute() { p } else { base_dir.join(p) };
        let km = load_distance_matrix(&full, width * height)?;
        DistanceModel::Matrix {
            source: source.to_string(),
            km,
        }
    } else {
        return Err(schema(
            "world.distance",
            format!("expected \"euclidean\" or \"matrix:<path>\", got `{distance_spec}`"),
        ));
    };
    let world = GridWorld::new(width, height, cell_km, speed, grid_types, distance)
        .map_err(|e| schema("world", e.to_string()))?;
    let horizon = number(root, "horizon", "")?;

    let list = field(root, "requests", "")?
        .as_array()
        .ok_or_else(|| schema("requests", "expected an array"))?;
    let mut requests = Vec::with_capacity(list.len());
    for (k, item) in list.iter().enumerate() {
        let p = format!("requests[{k}]");
        let r = object(item, &p)?;
        let location = Point::new(number(r, "x", &p)?, number(r, "y", &p)?);
        if !world.contains(location) {
            return Err(schema(&p, "location lies outside the world"));
        }
        let arrival = number(r, "t", &p)?;
        let earliest = number(r, "earliest", &p)?;
        let latest = number(r, "latest", &p)?;
        let service_time = number(r, "service", &p)?;
        let price = number(r, "price", &p)?;
        if latest < earliest {
            return Err(schema(&join(&p, "latest"), "latest start precedes earliest start"));
        }
        if !(0.0..horizon).contains(&arrival) {
            return Err(schema(&join(&p, "t"), "arrival lies outside [0, horizon)"));
        }
        if service_time < 0.0 || price < 0.0 {
            return Err(schema(&p, "service time and price must be non-negative"));
        }
        requests.push(Request {
            id: unsigned(r, "id", &p)?,
            location,
            grid: world.cell_index(world.cell_of(location)),
            arrival,
            earliest,
            latest,
            service_time,
            price,
            status: RequestStatus::Pending,
        });
    }
    let mut seen = std::collections::HashSet::new();
    for (k, r) in requests.iter().enumerate() {
        if !seen.insert(r.id) {
            return Err(schema(&format!("requests[{k}].id"), "duplicate request id"));
        }
    }
    if meta.start.x >= width || meta.start.y >= height {
        return Err(schema("meta.start", "courier start lies outside the world"));
    }
    let mut instance = ProblemInstance {
        meta,
        world,
        requests,
        horizon,
    };
    instance.sort_requests();
    Ok(instance)
}
