//! Image-like courier observations: channels over the 9x9 neighbourhood.

use serde::{Deserialize, Serialize};

use crate::baselines::{expected_profit_scores, Scoring};
use crate::domain::{ActionSpec, Cell, PATROL_OPTIONS};
use crate::sim::Snapshot;

/// Half-width of the observed window.
pub const VIEW_RADIUS: i32 = 4;
pub const VIEW_SIDE: usize = (2 * VIEW_RADIUS + 1) as usize;
pub const VIEW_CELLS: usize = VIEW_SIDE * VIEW_SIDE;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Courier count, pending count, pending price, distance.
    #[default]
    Basic,
    /// Basic plus the predicted profit rate for each patrol option.
    Ep,
}

impl Variant {
    pub fn channels(self) -> usize {
        match self {
            Variant::Basic => 4,
            Variant::Ep => 4 + PATROL_OPTIONS.len(),
        }
    }

    pub fn input_len(self) -> usize {
        self.channels() * VIEW_CELLS
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Basic => "basic",
            Variant::Ep => "ep",
        }
    }
}

/// Divisors applied to raw values. The courier channel is divided by the fleet
/// size and the distance channel by the largest distance in the window.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalizers {
    pub count: f64,
    pub price: f64,
    pub rate: f64,
}

impl Default for Normalizers {
    fn default() -> Self {
        Self {
            count: 10.0,
            price: 30.0,
            rate: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StateFeatures {
    pub variant: Variant,
    pub courier: usize,
    pub time: f64,
    /// Channel-major, then rows (dy = -4..=4), then columns (dx = -4..=4).
    pub data: Vec<f64>,
}

impl StateFeatures {
    pub fn get(&self, channel: usize, dx: i32, dy: i32) -> f64 {
        self.data[slot(channel, dx, dy)]
    }

    pub fn channel(&self, channel: usize) -> &[f64] {
        &self.data[channel * VIEW_CELLS..(channel + 1) * VIEW_CELLS]
    }
}

fn slot(channel: usize, dx: i32, dy: i32) -> usize {
    let row = (dy + VIEW_RADIUS) as usize;
    let col = (dx + VIEW_RADIUS) as usize;
    channel * VIEW_CELLS + row * VIEW_SIDE + col
}

pub fn encode(snapshot: &Snapshot<'_>, courier: usize, variant: Variant) -> StateFeatures {
    encode_with(snapshot, courier, variant, &Normalizers::default())
}

pub fn encode_with(
    snapshot: &Snapshot<'_>,
    courier: usize,
    variant: Variant,
    norm: &Normalizers,
) -> StateFeatures {
    let world = snapshot.world;
    let origin = snapshot.courier_cell(courier);
    let fleet = snapshot.couriers.len().max(1) as f64;
    let mut data = vec![0.0; variant.input_len()];

    let mut max_dist: f64 = 0.0;
    for dy in -VIEW_RADIUS..=VIEW_RADIUS {
        for dx in -VIEW_RADIUS..=VIEW_RADIUS {
            let (x, y) = (origin.x as i64 + dx as i64, origin.y as i64 + dy as i64);
            if x < 0 || y < 0 || x >= world.width as i64 || y >= world.height as i64 {
                continue;
            }
            let cell = Cell::new(x as usize, y as usize);
            let stats = snapshot.stats(cell);
            data[slot(0, dx, dy)] = stats.courier_count as f64 / fleet;
            data[slot(1, dx, dy)] = stats.pending_count as f64 / norm.count;
            data[slot(2, dx, dy)] = stats.pending_price.max(0.0) / norm.price;
            let d = world.grid_distance_km(origin, cell);
            data[slot(3, dx, dy)] = d;
            max_dist = max_dist.max(d);
        }
    }
    if max_dist > 0.0 {
        for v in &mut data[3 * VIEW_CELLS..4 * VIEW_CELLS] {
            *v /= max_dist;
        }
    }

    if variant == Variant::Ep {
        let from = snapshot.couriers[courier].position_at(snapshot.now);
        let scores = expected_profit_scores(snapshot, from, snapshot.now, Scoring::Rate);
        for (i, spec) in ActionSpec::all().enumerate() {
            let (x, y) = (origin.x as i64 + spec.dx as i64, origin.y as i64 + spec.dy as i64);
            if x < 0 || y < 0 || x >= world.width as i64 || y >= world.height as i64 {
                continue;
            }
            let k = (spec.patrol_minutes / 10) as usize;
            data[slot(4 + k, spec.dx, spec.dy)] = scores[i] / norm.rate;
        }
    }
    StateFeatures {
        variant,
        courier,
        time: snapshot.now,
        data,
    }
}
