//! Hand-designed dispatchers: random, greedy-by-value (GHAV), greedy-by-expected-
//! profit (GHEP) and max-weight bipartite matching (MBM).

mod matching;

pub use matching::{max_weight_matching, Assignment, WeightMatrix};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{ActionSpec, Cell, CourierStatus, Point, NUM_ACTIONS, PATROL_OPTIONS};
use crate::error::Result;
use crate::routing::{estimate_grid_profits, ProfitEstimate};
use crate::sim::{Dispatcher, Snapshot};

/// How an expected-profit estimate is turned into an action score.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scoring {
    /// Predicted price per predicted minute.
    #[default]
    Rate,
    /// Predicted price alone.
    Profit,
}

impl Scoring {
    pub fn score(self, e: &ProfitEstimate) -> f64 {
        match self {
            Scoring::Rate => e.rate(),
            Scoring::Profit => e.price,
        }
    }
}

/// Index of the largest score; ties go to the smaller index.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

pub fn random_action(rng: &mut ChaCha8Rng) -> usize {
    rng.random_range(0..NUM_ACTIONS)
}

/// Raw pending price of the target grid per minute of travel plus patrol.
/// Patrol-0 actions only relocate and never collect, so they score 0.
pub fn ghav_scores(snapshot: &Snapshot<'_>, courier: usize) -> [f64; NUM_ACTIONS] {
    let world = snapshot.world;
    let from = snapshot.couriers[courier].position_at(snapshot.now);
    let origin = world.cell_of(from);
    let mut scores = [0.0; NUM_ACTIONS];
    for (i, spec) in ActionSpec::all().enumerate() {
        let target = spec.target(origin, world);
        if spec.patrol_minutes == 0 {
            continue;
        }
        let price = snapshot.stats(target).pending_price;
        let time = world.travel_time(from, world.center(target)) + spec.patrol();
        scores[i] = price / time;
    }
    scores
}

pub fn ghav_action(snapshot: &Snapshot<'_>, courier: usize) -> usize {
    pick(snapshot, courier, &ghav_scores(snapshot, courier))
}

/// Argmax of `scores`; when nothing in reach scores above zero, a relocation
/// step toward the nearest grid with pending requests instead (action 0 if
/// nothing is pending anywhere).
fn pick(snapshot: &Snapshot<'_>, courier: usize, scores: &[f64; NUM_ACTIONS]) -> usize {
    let best = argmax(scores);
    if scores[best] > 0.0 {
        return best;
    }
    toward_demand(snapshot, courier).unwrap_or(best)
}

/// Patrol-0 step of at most two grids per axis toward the closest grid
/// holding pending requests.
pub fn toward_demand(snapshot: &Snapshot<'_>, courier: usize) -> Option<usize> {
    let world = snapshot.world;
    let origin = snapshot.courier_cell(courier);
    let here = world.center(origin);
    let goal = (0..world.num_cells())
        .filter(|&g| !snapshot.pending_by_grid[g].is_empty())
        .map(|g| world.cell_at(g))
        .min_by(|a, b| {
            here.distance(&world.center(*a))
                .total_cmp(&here.distance(&world.center(*b)))
        })?;
    let step = |to: usize, from: usize| (to as i32 - from as i32).clamp(-2, 2);
    let spec = ActionSpec::new(step(goal.x, origin.x), step(goal.y, origin.y), 0)
        .expect("step within action radius");
    Some(spec.index())
}

/// Expected-profit scores of all 100 actions for a courier that will be free at
/// `from` at time `at`. The planner runs once per distinct target grid.
pub fn expected_profit_scores(
    snapshot: &Snapshot<'_>,
    from: Point,
    at: f64,
    scoring: Scoring,
) -> [f64; NUM_ACTIONS] {
    let world = snapshot.world;
    let origin = world.cell_of(from);
    let mut cache: Vec<(Cell, [ProfitEstimate; 4])> = Vec::with_capacity(25);
    let mut scores = [0.0; NUM_ACTIONS];
    for (i, spec) in ActionSpec::all().enumerate() {
        let target = spec.target(origin, world);
        let k = match cache.iter().position(|(c, _)| *c == target) {
            Some(k) => k,
            None => {
                let pending = snapshot.pending_in(target);
                cache.push((target, estimate_grid_profits(world, from, at, target, &pending)));
                cache.len() - 1
            }
        };
        let slot = PATROL_OPTIONS
            .iter()
            .position(|&p| p == spec.patrol_minutes)
            .unwrap_or(0);
        scores[i] = scoring.score(&cache[k].1[slot]);
    }
    scores
}

pub fn ghep_action(snapshot: &Snapshot<'_>, courier: usize, scoring: Scoring) -> usize {
    let from = snapshot.couriers[courier].position_at(snapshot.now);
    pick(snapshot, courier, &expected_profit_scores(snapshot, from, snapshot.now, scoring))
}

/// Couriers that will be available within this many minutes take part in MBM.
pub const MBM_LOOKAHEAD_MINUTES: f64 = 20.0;

/// Per-courier best action for every reachable grid, as used by the matching.
#[derive(Clone, Debug)]
struct GridOffer {
    grid: usize,
    action: usize,
    weight: f64,
}

fn grid_offers(snapshot: &Snapshot<'_>, from: Point, at: f64, scoring: Scoring) -> Vec<GridOffer> {
    let world = snapshot.world;
    let origin = world.cell_of(from);
    let scores = expected_profit_scores(snapshot, from, at, scoring);
    let mut offers: Vec<GridOffer> = Vec::new();
    for (i, spec) in ActionSpec::all().enumerate() {
        let grid = world.cell_index(spec.target(origin, world));
        match offers.iter_mut().find(|o| o.grid == grid) {
            Some(o) if scores[i] > o.weight => {
                o.action = i;
                o.weight = scores[i];
            }
            Some(_) => {}
            None => offers.push(GridOffer {
                grid,
                action: i,
                weight: scores[i],
            }),
        }
    }
    offers
}

/// MBM decision for `courier`.
///
/// Rows are the couriers available within the lookahead, in id order; busy
/// ones are placed at their planned end point and free time. Columns are target
/// grids, so no two couriers are sent to the same grid in one round; a row's
/// weight for a grid is its best action score into that grid. Only the
/// requesting courier's match is used. An unmatched or zero-weight match falls
/// back to GHEP.
pub fn mbm_action(snapshot: &Snapshot<'_>, courier: usize, scoring: Scoring) -> Result<usize> {
    let now = snapshot.now;
    let mut rows: Vec<(usize, Vec<GridOffer>)> = Vec::new();
    for (id, c) in snapshot.couriers.iter().enumerate() {
        let (from, at) = if id == courier || c.status == CourierStatus::Free {
            (c.position_at(now), now)
        } else if c.busy_until <= now + MBM_LOOKAHEAD_MINUTES {
            (c.plan_end, c.busy_until.max(now))
        } else {
            continue;
        };
        rows.push((id, grid_offers(snapshot, from, at, scoring)));
    }
    let mut grids: Vec<usize> = rows
        .iter()
        .flat_map(|(_, offers)| offers.iter().map(|o| o.grid))
        .collect();
    grids.sort_unstable();
    grids.dedup();
    let cols = grids.len().max(rows.len());
    let mut weights = WeightMatrix::zeros(rows.len(), cols);
    for (r, (_, offers)) in rows.iter().enumerate() {
        for o in offers {
            let c = grids.binary_search(&o.grid).expect("grid collected above");
            weights.set(r, c, o.weight);
        }
    }
    let assignment = max_weight_matching(&weights)?;
    let r = rows
        .iter()
        .position(|(id, _)| *id == courier)
        .expect("requesting courier is always a row");
    let col = assignment.columns[r];
    if col < grids.len() && weights.get(r, col) > 0.0 {
        if let Some(o) = rows[r].1.iter().find(|o| o.grid == grids[col]) {
            return Ok(o.action);
        }
    }
    Ok(ghep_action(snapshot, courier, scoring))
}

#[derive(Clone, Debug)]
pub struct RandomPolicy;

impl Dispatcher for RandomPolicy {
    fn dispatch(&mut self, _: &Snapshot<'_>, _: usize, rng: &mut ChaCha8Rng) -> Result<usize> {
        Ok(random_action(rng))
    }
}

#[derive(Clone, Debug)]
pub struct Ghav;

impl Dispatcher for Ghav {
    fn dispatch(&mut self, s: &Snapshot<'_>, courier: usize, _: &mut ChaCha8Rng) -> Result<usize> {
        Ok(ghav_action(s, courier))
    }
}

#[derive(Clone, Debug, Default)]
pub struct Ghep {
    pub scoring: Scoring,
}

impl Dispatcher for Ghep {
    fn dispatch(&mut self, s: &Snapshot<'_>, courier: usize, _: &mut ChaCha8Rng) -> Result<usize> {
        Ok(ghep_action(s, courier, self.scoring))
    }
}

#[derive(Clone, Debug, Default)]
pub struct Mbm {
    pub scoring: Scoring,
}

impl Dispatcher for Mbm {
    fn dispatch(&mut self, s: &Snapshot<'_>, courier: usize, _: &mut ChaCha8Rng) -> Result<usize> {
        mbm_action(s, courier, self.scoring)
    }
}

/// Several dispatchers sharing one fleet; `groups[c]` selects the policy of courier `c`.
pub struct FleetDispatcher {
    pub policies: Vec<Box<dyn Dispatcher + Send>>,
    pub groups: Vec<usize>,
}

impl Dispatcher for FleetDispatcher {
    fn dispatch(&mut self, s: &Snapshot<'_>, courier: usize, rng: &mut ChaCha8Rng) -> Result<usize> {
        let g = self.groups[courier];
        self.policies[g].dispatch(s, courier, rng)
    }

    fn fleet_of(&self, courier: usize) -> usize {
        self.groups[courier]
    }
}

#[cfg(test)]
mod tests;
