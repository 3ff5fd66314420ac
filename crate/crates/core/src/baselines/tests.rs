use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::domain::{Courier, GridType, GridWorld, Request, RequestStatus};
use crate::scenario::{build_instance, ScenarioConfig};
use crate::sim::{run_episode, GridStats};

/// Owned data behind a hand-built snapshot.
struct Board {
    now: f64,
    world: GridWorld,
    requests: Vec<Request>,
    pending: Vec<Vec<usize>>,
    couriers: Vec<Courier>,
    stats: Vec<GridStats>,
}

impl Board {
    fn new(world: GridWorld, requests: Vec<Request>, couriers: Vec<Courier>, now: f64) -> Self {
        let mut pending = vec![Vec::new(); world.num_cells()];
        let mut stats = vec![GridStats::default(); world.num_cells()];
        for (i, r) in requests.iter().enumerate() {
            if r.is_pending() && r.arrival <= now {
                pending[r.grid].push(i);
                stats[r.grid].pending_count += 1;
                stats[r.grid].pending_price += r.price;
            }
        }
        for c in &couriers {
            stats[world.cell_index(world.cell_of(c.position_at(now)))].courier_count += 1;
        }
        Self {
            now,
            world,
            requests,
            pending,
            couriers,
            stats,
        }
    }

    fn from_snapshot(s: &Snapshot<'_>, price_scale: f64) -> Self {
        let requests = s
            .requests
            .iter()
            .map(|r| Request {
                price: r.price * price_scale,
                ..r.clone()
            })
            .collect();
        Self::new(s.world.clone(), requests, s.couriers.to_vec(), s.now)
    }

    fn snapshot(&self) -> Snapshot<'_> {
        Snapshot {
            now: self.now,
            world: &self.world,
            requests: &self.requests,
            pending_by_grid: &self.pending,
            couriers: &self.couriers,
            grid_stats: &self.stats,
        }
    }
}

fn world5() -> GridWorld {
    GridWorld::uniform(5, 5, GridType::Intense).unwrap()
}

fn courier_at(id: usize, x: f64, y: f64) -> Courier {
    Courier::new(id, Point::new(x, y), 0.5, 0)
}

fn req(id: u64, x: f64, y: f64, latest: f64, price: f64) -> Request {
    let world = world5();
    let location = Point::new(x, y);
    Request {
        id,
        location,
        grid: world.cell_index(world.cell_of(location)),
        arrival: 0.0,
        earliest: 0.0,
        latest,
        service_time: 3.0,
        price,
        status: RequestStatus::Pending,
    }
}

fn idx(dx: i32, dy: i32, patrol: u32) -> usize {
    ActionSpec::new(dx, dy, patrol).unwrap().index()
}

#[test]
fn random_is_reproducible_and_uniform() {
    let mut a = ChaCha8Rng::seed_from_u64(1);
    let mut b = ChaCha8Rng::seed_from_u64(1);
    let xs: Vec<usize> = (0..50).map(|_| random_action(&mut a)).collect();
    let ys: Vec<usize> = (0..50).map(|_| random_action(&mut b)).collect();
    assert_eq!(xs, ys);

    let draws = 100_000;
    let mut counts = [0usize; NUM_ACTIONS];
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..draws {
        counts[random_action(&mut rng)] += 1;
    }
    let p = 1.0 / NUM_ACTIONS as f64;
    let mean = draws as f64 * p;
    let sd = (draws as f64 * p * (1.0 - p)).sqrt();
    for (a, &c) in counts.iter().enumerate() {
        assert!((c as f64 - mean).abs() <= 3.0 * sd, "action {a}: {c}");
    }
}

#[test]
fn random_targets_from_corner_stay_in_bounds() {
    let world = world5();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..500 {
        let spec = ActionSpec::from_index(random_action(&mut rng)).unwrap();
        let t = spec.target(Cell::new(0, 4), &world);
        assert!(t.x < 5 && t.y < 5);
    }
}

#[test]
fn ghav_empty_world_picks_action_zero() {
    let board = Board::new(world5(), vec![], vec![courier_at(0, 2.5, 2.5)], 0.0);
    let s = board.snapshot();
    assert_eq!(ghav_action(&s, 0), 0);
    assert_eq!(ghep_action(&s, 0, Scoring::Rate), 0);
    assert_eq!(mbm_action(&s, 0, Scoring::Rate).unwrap(), 0);
}

#[test]
fn ghav_scores_price_per_minute() {
    // Grid (4,2) is 2 km = 4 minutes from the centre of (2,2).
    let board = Board::new(
        world5(),
        vec![req(0, 4.5, 2.5, 100.0, 10.0)],
        vec![courier_at(0, 2.5, 2.5)],
        0.0,
    );
    let scores = ghav_scores(&board.snapshot(), 0);
    assert!((scores[idx(2, 0, 10)] - 10.0 / 14.0).abs() < 1e-12);
    assert!((scores[idx(2, 0, 30)] - 10.0 / 34.0).abs() < 1e-12);
    // Patrol 0 relocates without collecting.
    assert_eq!(scores[idx(2, 0, 0)], 0.0);
    assert_eq!(ghav_action(&board.snapshot(), 0), idx(2, 0, 10));
}

#[test]
fn idle_couriers_step_toward_distant_demand() {
    let world = GridWorld::uniform(12, 12, GridType::Intense).unwrap();
    let far = Request {
        grid: world.cell_index(Cell::new(11, 0)),
        location: Point::new(11.5, 0.5),
        ..req(0, 0.5, 0.5, 300.0, 4.0)
    };
    let board = Board::new(world, vec![far], vec![courier_at(0, 2.5, 2.5)], 0.0);
    let s = board.snapshot();
    let step = ActionSpec::new(2, -2, 0).unwrap().index();
    assert_eq!(toward_demand(&s, 0), Some(step));
    assert_eq!(ghav_action(&s, 0), step);
    assert_eq!(ghep_action(&s, 0, Scoring::Rate), step);
}

#[test]
fn ghav_prefers_nearer_grid() {
    let board = Board::new(
        world5(),
        vec![req(0, 3.5, 2.5, 100.0, 10.0), req(1, 0.5, 0.5, 100.0, 10.0)],
        vec![courier_at(0, 2.5, 2.5)],
        0.0,
    );
    let a = ActionSpec::from_index(ghav_action(&board.snapshot(), 0)).unwrap();
    assert_eq!((a.dx, a.dy), (1, 0));
}

#[test]
fn ghep_ignores_requests_expiring_before_arrival() {
    let board = Board::new(
        world5(),
        vec![req(0, 4.5, 2.5, 3.0, 10.0)],
        vec![courier_at(0, 2.5, 2.5)],
        0.0,
    );
    let scores = expected_profit_scores(&board.snapshot(), Point::new(2.5, 2.5), 0.0, Scoring::Rate);
    for p in PATROL_OPTIONS {
        assert_eq!(scores[idx(2, 0, p)], 0.0);
    }
    assert!(ghav_scores(&board.snapshot(), 0)[idx(2, 0, 10)] > 0.0);
}

#[test]
fn ghep_and_ghav_disagree_when_raw_price_is_not_collectible() {
    // Grid A (3,2): three clustered price-5 requests.
    // Grid B (1,2): price 20 on paper, but the 15 expires before anyone arrives.
    let requests = vec![
        req(0, 3.4, 2.5, 200.0, 5.0),
        req(1, 3.5, 2.6, 200.0, 5.0),
        req(2, 3.6, 2.4, 200.0, 5.0),
        req(3, 1.5, 2.5, 200.0, 5.0),
        req(4, 1.5, 2.4, 1.0, 15.0),
    ];
    let board = Board::new(world5(), requests, vec![courier_at(0, 2.5, 2.5)], 0.0);
    let s = board.snapshot();
    let ghav = ActionSpec::from_index(ghav_action(&s, 0)).unwrap();
    let ghep = ActionSpec::from_index(ghep_action(&s, 0, Scoring::Rate)).unwrap();
    assert_eq!((ghav.dx, ghav.dy), (-1, 0));
    assert_eq!((ghep.dx, ghep.dy), (1, 0));
}

#[test]
fn scoring_switch_changes_objective() {
    let board = Board::new(
        world5(),
        vec![req(0, 3.5, 2.5, 200.0, 5.0), req(1, 0.5, 2.5, 200.0, 6.0)],
        vec![courier_at(0, 2.5, 2.5)],
        0.0,
    );
    let s = board.snapshot();
    let rate = ActionSpec::from_index(ghep_action(&s, 0, Scoring::Rate)).unwrap();
    let profit = ActionSpec::from_index(ghep_action(&s, 0, Scoring::Profit)).unwrap();
    assert_eq!(rate.dx, 1);
    assert_eq!(profit.dx, -2);
}

#[test]
fn mbm_sends_two_couriers_to_their_nearer_grids() {
    // Alone, courier 0 would take the slightly richer grid that courier 1 is
    // standing in; the matching sends it the other way.
    let requests = vec![req(0, 0.5, 2.5, 200.0, 10.0), req(1, 4.5, 2.5, 200.0, 10.5)];
    let couriers = vec![courier_at(0, 2.5, 2.5), courier_at(1, 4.5, 2.5)];
    let board = Board::new(world5(), requests, couriers, 0.0);
    let s = board.snapshot();
    let greedy = ActionSpec::from_index(ghep_action(&s, 0, Scoring::Rate)).unwrap();
    assert_eq!(greedy.target(Cell::new(2, 2), s.world), Cell::new(4, 2));
    let a0 = ActionSpec::from_index(mbm_action(&s, 0, Scoring::Rate).unwrap()).unwrap();
    let a1 = ActionSpec::from_index(mbm_action(&s, 1, Scoring::Rate).unwrap()).unwrap();
    assert_eq!(a0.target(Cell::new(2, 2), s.world), Cell::new(0, 2));
    assert_eq!(a1.target(Cell::new(4, 2), s.world), Cell::new(4, 2));
}

#[test]
fn mbm_ignores_couriers_busy_beyond_lookahead() {
    let requests = vec![req(0, 0.5, 2.5, 200.0, 10.0), req(1, 4.5, 4.5, 200.0, 2.0)];
    let mut busy = courier_at(1, 0.5, 2.5);
    busy.status = CourierStatus::Picking;
    busy.busy_until = 25.0;
    busy.plan_end = Point::new(0.5, 2.5);
    let target_of = |board: &Board| {
        let a = mbm_action(&board.snapshot(), 0, Scoring::Rate).unwrap();
        ActionSpec::from_index(a).unwrap().target(Cell::new(2, 2), &board.world)
    };
    let board = Board::new(world5(), requests.clone(), vec![courier_at(0, 2.5, 2.5), busy.clone()], 0.0);
    assert_eq!(target_of(&board), Cell::new(0, 2));

    // Free within the lookahead and already standing there: courier 0 goes elsewhere.
    busy.busy_until = 5.0;
    let board = Board::new(world5(), requests, vec![courier_at(0, 2.5, 2.5), busy], 0.0);
    assert_eq!(target_of(&board), Cell::new(4, 4));
}

/// Checks properties at every decision of a real episode, then defers to GHEP.
struct Probe {
    decisions: usize,
}

impl Dispatcher for Probe {
    fn dispatch(&mut self, s: &Snapshot<'_>, courier: usize, _: &mut ChaCha8Rng) -> Result<usize> {
        self.decisions += 1;
        let ghep = ghep_action(s, courier, Scoring::Rate);
        if s.couriers.len() == 1 {
            assert_eq!(mbm_action(s, courier, Scoring::Rate)?, ghep);
        }
        let scaled = Board::from_snapshot(s, 3.7);
        let t = scaled.snapshot();
        assert_eq!(ghep_action(&t, courier, Scoring::Rate), ghep);
        assert_eq!(ghav_action(&t, courier), ghav_action(s, courier));
        Ok(ghep)
    }
}

#[test]
fn properties_hold_along_real_episodes() {
    for couriers in [1, 4] {
        let mut cfg = ScenarioConfig::preset("desk").unwrap();
        cfg.courier_count = couriers;
        cfg.seed = 11;
        let inst = build_instance(&cfg).unwrap();
        let mut probe = Probe { decisions: 0 };
        run_episode(&inst, &mut probe, 0).unwrap();
        assert!(probe.decisions > 20);
    }
}

#[test]
fn fleet_dispatcher_routes_by_group() {
    let mut fleet = FleetDispatcher {
        policies: vec![Box::new(Ghav), Box::new(RandomPolicy)],
        groups: vec![0, 1, 1],
    };
    assert_eq!(fleet.fleet_of(2), 1);
    let board = Board::new(world5(), vec![], vec![courier_at(0, 2.5, 2.5)], 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert_eq!(fleet.dispatch(&board.snapshot(), 0, &mut rng).unwrap(), 0);
}
