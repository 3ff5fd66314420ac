//! Discrete-event courier simulator.
//!
//! Requests appear at their arrival time and disappear at their latest start.
//! Whenever a courier becomes free the dispatcher picks a target grid and a
//! patrol budget; on reaching the grid the courier plans a pickup route over
//! the requests pending there, locks them, serves them and reports the
//! collected price as the reward of that decision.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{
    ActionSpec, Cell, Courier, CourierStatus, GridWorld, Request, RequestStatus, Walk, NUM_ACTIONS,
};
use crate::error::{Error, Result};
use crate::routing::{plan_route, validate_route, Route};
use crate::scenario::ProblemInstance;

/// Length of the pause taken when a decision would otherwise consume no time.
pub const IDLE_MINUTES: f64 = 1.0;

/// Picks an action index for a free courier.
pub trait Dispatcher {
    fn dispatch(
        &mut self,
        snapshot: &Snapshot<'_>,
        courier: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<usize>;

    /// Fleet tag reported for `courier`; mixed fleets override this.
    fn fleet_of(&self, _courier: usize) -> usize {
        0
    }
}

impl<D: Dispatcher + ?Sized> Dispatcher for Box<D> {
    fn dispatch(
        &mut self,
        snapshot: &Snapshot<'_>,
        courier: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<usize> {
        (**self).dispatch(snapshot, courier, rng)
    }

    fn fleet_of(&self, courier: usize) -> usize {
        (**self).fleet_of(courier)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GridStats {
    pub pending_count: usize,
    pub pending_price: f64,
    pub courier_count: usize,
}

/// Read-only view of the simulation at a decision instant.
#[derive(Clone, Copy)]
pub struct Snapshot<'a> {
    pub now: f64,
    pub world: &'a GridWorld,
    /// Every request of the instance, in instance order, with its current status.
    pub requests: &'a [Request],
    /// Indices into `requests` of the pending requests of each grid.
    pub pending_by_grid: &'a [Vec<usize>],
    pub couriers: &'a [Courier],
    pub grid_stats: &'a [GridStats],
}

impl<'a> Snapshot<'a> {
    pub fn pending_in(&self, cell: Cell) -> Vec<&'a Request> {
        self.pending_by_grid[self.world.cell_index(cell)]
            .iter()
            .map(|&i| &self.requests[i])
            .collect()
    }

    pub fn pending(&self) -> impl Iterator<Item = &'a Request> + '_ {
        self.pending_by_grid
            .iter()
            .flatten()
            .map(|&i| &self.requests[i])
    }

    pub fn stats(&self, cell: Cell) -> &'a GridStats {
        &self.grid_stats[self.world.cell_index(cell)]
    }

    /// Grid the courier is in right now (walking couriers count where they are).
    pub fn courier_cell(&self, courier: usize) -> Cell {
        self.world
            .cell_of(self.couriers[courier].position_at(self.now))
    }

    /// Aggregates rebuilt from the request and courier lists.
    pub fn recompute_stats(&self) -> Vec<GridStats> {
        let mut stats = vec![GridStats::default(); self.world.num_cells()];
        for r in self.requests.iter().filter(|r| r.is_pending() && r.arrival <= self.now) {
            stats[r.grid].pending_count += 1;
            stats[r.grid].pending_price += r.price;
        }
        for c in 0..self.couriers.len() {
            stats[self.world.cell_index(self.courier_cell(c))].courier_count += 1;
        }
        stats
    }
}

/// One executed dispatching decision.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionRecord {
    pub courier: usize,
    /// Position of this decision in the courier's own trajectory.
    pub seq: usize,
    pub decision_time: f64,
    pub origin: Cell,
    pub target: Cell,
    pub action: usize,
    pub patrol: u32,
    pub arrival_time: f64,
    pub reward: f64,
    pub completion_time: f64,
    pub served: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub scenario: String,
    pub seed: u64,
    pub served_price: f64,
    pub total_price: f64,
    pub score: f64,
    pub courier_revenue: Vec<f64>,
    pub courier_fleet: Vec<usize>,
    /// Per-courier decision logs in decision order.
    pub actions: Vec<Vec<ActionRecord>>,
    pub served_requests: usize,
    pub expired_requests: usize,
    pub unresolved_requests: usize,
    pub route_violations: usize,
}

impl EpisodeResult {
    /// Revenue summed per fleet tag, indexed by tag.
    pub fn fleet_revenue(&self) -> Vec<f64> {
        let groups = self.courier_fleet.iter().max().map_or(0, |m| m + 1);
        let mut out = vec![0.0; groups];
        for (&f, &r) in self.courier_fleet.iter().zip(&self.courier_revenue) {
            out[f] += r;
        }
        out
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    /// Trajectory rows: courier_id, decision_time, from_gx, from_gy, to_gx, to_gy,
    /// patrol, reward, completion_time.
    pub fn write_trajectory_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "courier_id",
            "decision_time",
            "from_gx",
            "from_gy",
            "to_gx",
            "to_gy",
            "patrol",
            "reward",
            "completion_time",
        ])?;
        for a in self.actions.iter().flatten() {
            w.write_record(&[
                a.courier.to_string(),
                a.decision_time.to_string(),
                a.origin.x.to_string(),
                a.origin.y.to_string(),
                a.target.x.to_string(),
                a.target.y.to_string(),
                a.patrol.to_string(),
                a.reward.to_string(),
                a.completion_time.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum EventKind {
    RequestArrival,
    CourierArrive,
    RouteComplete,
    CourierFree,
    RequestExpiry,
}

#[derive(Clone, Copy, Debug)]
struct Event {
    time: f64,
    kind: EventKind,
    /// Courier id or request index.
    subject: usize,
    seq: u64,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    // Reversed: BinaryHeap is a max-heap and we pop the earliest event.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then(other.kind.cmp(&self.kind))
            .then(other.subject.cmp(&self.subject))
            .then(other.seq.cmp(&self.seq))
    }
}

struct Active {
    record: usize,
    target: Cell,
    patrol: f64,
    route: Option<Route>,
}

/// A single episode in progress.
pub struct Simulation {
    world: GridWorld,
    horizon: f64,
    requests: Vec<Request>,
    index_of: HashMap<u64, usize>,
    pending_by_grid: Vec<Vec<usize>>,
    grid_stats: Vec<GridStats>,
    couriers: Vec<Courier>,
    active: Vec<Option<Active>>,
    actions: Vec<Vec<ActionRecord>>,
    queue: BinaryHeap<Event>,
    seq: u64,
    now: f64,
    last_event_time: f64,
    route_violations: usize,
    scenario: String,
    seed: u64,
}

impl Simulation {
    pub fn new(instance: &ProblemInstance, seed: u64) -> Self {
        let world = instance.world.clone();
        let start = world.center(instance.meta.start);
        let couriers: Vec<Courier> = (0..instance.meta.couriers)
            .map(|id| Courier::new(id, start, world.speed_km_per_min, 0))
            .collect();
        let mut sim = Self {
            pending_by_grid: vec![Vec::new(); world.num_cells()],
            grid_stats: vec![GridStats::default(); world.num_cells()],
            horizon: instance.horizon,
            requests: instance.requests.clone(),
            index_of: instance
                .requests
                .iter()
                .enumerate()
                .map(|(i, r)| (r.id, i))
                .collect(),
            active: (0..couriers.len()).map(|_| None).collect(),
            actions: vec![Vec::new(); couriers.len()],
            couriers,
            world,
            queue: BinaryHeap::new(),
            seq: 0,
            now: 0.0,
            last_event_time: 0.0,
            route_violations: 0,
            scenario: instance.meta.scenario.clone(),
            seed,
        };
        for r in sim.requests.iter_mut() {
            r.status = RequestStatus::Pending;
        }
        for i in 0..sim.requests.len() {
            let t = sim.requests[i].arrival;
            sim.push(t, EventKind::RequestArrival, i);
        }
        for c in 0..sim.couriers.len() {
            sim.push(0.0, EventKind::CourierFree, c);
        }
        sim
    }

    fn push(&mut self, time: f64, kind: EventKind, subject: usize) {
        self.seq += 1;
        self.queue.push(Event {
            time,
            kind,
            subject,
            seq: self.seq,
        });
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn snapshot(&self) -> Snapshot<'_> {
        Snapshot {
            now: self.now,
            world: &self.world,
            requests: &self.requests,
            pending_by_grid: &self.pending_by_grid,
            couriers: &self.couriers,
            grid_stats: &self.grid_stats,
        }
    }

    fn refresh_courier_counts(&mut self) {
        for s in self.grid_stats.iter_mut() {
            s.courier_count = 0;
        }
        for c in &self.couriers {
            let g = self.world.cell_index(self.world.cell_of(c.position_at(self.now)));
            self.grid_stats[g].courier_count += 1;
        }
    }

    fn remove_pending(&mut self, index: usize) {
        let r = &self.requests[index];
        let list = &mut self.pending_by_grid[r.grid];
        if let Ok(pos) = list.binary_search(&index) {
            list.remove(pos);
            self.grid_stats[r.grid].pending_count -= 1;
            self.grid_stats[r.grid].pending_price -= r.price;
            if self.grid_stats[r.grid].pending_count == 0 {
                self.grid_stats[r.grid].pending_price = 0.0;
            }
        }
    }

    /// Processes the next event. Returns `false` once the queue is exhausted.
    pub fn step<D: Dispatcher + ?Sized>(
        &mut self,
        dispatcher: &mut D,
        rng: &mut ChaCha8Rng,
    ) -> Result<bool> {
        let Some(ev) = self.queue.pop() else {
            return Ok(false);
        };
        debug_assert!(ev.time >= self.last_event_time);
        self.last_event_time = ev.time;
        self.now = ev.time;
        match ev.kind {
            EventKind::RequestArrival => {
                let i = ev.subject;
                let (grid, price, latest) = {
                    let r = &self.requests[i];
                    (r.grid, r.price, r.latest)
                };
                let list = &mut self.pending_by_grid[grid];
                let pos = list.binary_search(&i).unwrap_or_else(|p| p);
                list.insert(pos, i);
                self.grid_stats[grid].pending_count += 1;
                self.grid_stats[grid].pending_price += price;
                self.push(latest.max(self.now), EventKind::RequestExpiry, i);
            }
            EventKind::RequestExpiry => {
                let i = ev.subject;
                if self.requests[i].is_pending() {
                    self.remove_pending(i);
                    self.requests[i].expire()?;
                }
            }
            EventKind::CourierFree => self.on_free(ev.subject, dispatcher, rng)?,
            EventKind::CourierArrive => self.on_arrive(ev.subject)?,
            EventKind::RouteComplete => self.on_complete(ev.subject)?,
        }
        Ok(true)
    }

    fn on_free<D: Dispatcher + ?Sized>(
        &mut self,
        c: usize,
        dispatcher: &mut D,
        rng: &mut ChaCha8Rng,
    ) -> Result<()> {
        self.couriers[c].busy_until = self.now;
        if self.now >= self.horizon {
            return Ok(());
        }
        self.refresh_courier_counts();
        let index = dispatcher.dispatch(&self.snapshot(), c, rng)?;
        if index >= NUM_ACTIONS {
            return Err(Error::InvalidDispatch {
                courier: c,
                time: self.now,
                index,
            });
        }
        let action = ActionSpec::from_index(index)?;
        let now = self.now;
        let courier = &mut self.couriers[c];
        let origin = self.world.cell_of(courier.position);
        let target = action.target(origin, &self.world);
        let center = self.world.center(target);
        let travel = self.world.travel_time(courier.position, center);
        courier.status = CourierStatus::Walking;
        courier.walk = Some(Walk {
            from: courier.position,
            depart: now,
            to: center,
            arrive: now + travel,
        });
        courier.busy_until = now + travel + action.patrol();
        courier.plan_end = center;
        let seq = self.actions[c].len();
        self.actions[c].push(ActionRecord {
            courier: c,
            seq,
            decision_time: now,
            origin,
            target,
            action: index,
            patrol: action.patrol_minutes,
            arrival_time: now + travel,
            reward: 0.0,
            completion_time: f64::NAN,
            served: Vec::new(),
        });
        self.active[c] = Some(Active {
            record: seq,
            target,
            patrol: action.patrol(),
            route: None,
        });
        self.push(now + travel, EventKind::CourierArrive, c);
        Ok(())
    }

    fn on_arrive(&mut self, c: usize) -> Result<()> {
        let now = self.now;
        let (target, patrol, record) = {
            let a = self.active[c].as_ref().expect("arriving courier has an action");
            (a.target, a.patrol, a.record)
        };
        let center = self.world.center(target);
        let g = self.world.cell_index(target);
        let candidates: Vec<&Request> = self.pending_by_grid[g]
            .iter()
            .map(|&i| &self.requests[i])
            .filter(|r| r.latest >= now)
            .collect();
        let route = plan_route(&self.world, center, now, patrol, &candidates);
        let violations = validate_route(&route, &self.world, |id| {
            candidates.iter().copied().find(|r| r.id == id)
        });
        self.route_violations += violations.len();
        let indices: Vec<usize> = route
            .stops
            .iter()
            .map(|s| {
                self.pending_by_grid[g]
                    .iter()
                    .copied()
                    .find(|&i| self.requests[i].id == s.request)
                    .expect("routed request is pending in the target grid")
            })
            .collect();
        for i in indices {
            self.remove_pending(i);
            self.requests[i].lock()?;
        }
        let decision_time = self.actions[c][record].decision_time;
        let mut completion = if route.is_empty() {
            now + patrol
        } else {
            route.end_time
        };
        if completion <= decision_time {
            completion = decision_time + IDLE_MINUTES;
        }
        let courier = &mut self.couriers[c];
        courier.position = center;
        courier.walk = None;
        courier.status = CourierStatus::Picking;
        courier.busy_until = completion;
        courier.plan_end = route.end_point;
        self.active[c].as_mut().expect("active").route = Some(route);
        self.push(completion, EventKind::RouteComplete, c);
        Ok(())
    }

    fn on_complete(&mut self, c: usize) -> Result<()> {
        let active = self.active[c].take().expect("completing courier has an action");
        let route = active.route.expect("route planned on arrival");
        let mut served = Vec::with_capacity(route.stops.len());
        for stop in &route.stops {
            let i = self.index_of[&stop.request];
            self.requests[i].serve()?;
            served.push(stop.request);
        }
        let courier = &mut self.couriers[c];
        courier.revenue += route.total_price;
        courier.position = route.end_point;
        courier.status = CourierStatus::Free;
        courier.busy_until = self.now;
        courier.plan_end = route.end_point;
        let rec = &mut self.actions[c][active.record];
        rec.reward = route.total_price;
        rec.completion_time = self.now;
        rec.served = served;
        self.push(self.now, EventKind::CourierFree, c);
        Ok(())
    }

    pub fn finish<D: Dispatcher + ?Sized>(self, dispatcher: &D) -> EpisodeResult {
        let total_price: f64 = self.requests.iter().map(|r| r.price).sum();
        let served_price: f64 = self.couriers.iter().map(|c| c.revenue).sum();
        let count = |s: RequestStatus| self.requests.iter().filter(|r| r.status == s).count();
        EpisodeResult {
            scenario: self.scenario,
            seed: self.seed,
            served_price,
            total_price,
            score: if total_price > 0.0 {
                served_price / total_price
            } else {
                0.0
            },
            courier_revenue: self.couriers.iter().map(|c| c.revenue).collect(),
            courier_fleet: (0..self.couriers.len())
                .map(|c| dispatcher.fleet_of(c))
                .collect(),
            actions: self.actions,
            served_requests: count(RequestStatus::Served),
            expired_requests: count(RequestStatus::Expired),
            unresolved_requests: count(RequestStatus::Pending) + count(RequestStatus::Locked),
            route_violations: self.route_violations,
        }
    }
}

/// Runs one full episode. `seed` drives the dispatcher's random stream.
pub fn run_episode<D: Dispatcher + ?Sized>(
    instance: &ProblemInstance,
    dispatcher: &mut D,
    seed: u64,
) -> Result<EpisodeResult> {
    let mut sim = Simulation::new(instance, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    while sim.step(dispatcher, &mut rng)? {}
    Ok(sim.finish(dispatcher))
}
