//! Within-grid pickup routing: an orienteering problem with time windows solved
//! by deterministic greedy insertion.

use serde::{Deserialize, Serialize};

use crate::domain::{Cell, GridWorld, Point, Request, PATROL_OPTIONS};

const EPS: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stop {
    pub request: u64,
    pub planned_start: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Route {
    pub stops: Vec<Stop>,
    pub start_point: Point,
    pub start_time: f64,
    pub budget: f64,
    pub total_price: f64,
    pub end_time: f64,
    pub end_point: Point,
}

impl Route {
    pub fn empty(start: Point, start_time: f64, budget: f64) -> Self {
        Self {
            stops: Vec::new(),
            start_point: start,
            start_time,
            budget,
            total_price: 0.0,
            end_time: start_time,
            end_point: start,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.stops.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.end_time - self.start_time
    }
}

/// Timeline of a partial route over candidate indices.
struct Timeline {
    order: Vec<usize>,
    arrive: Vec<f64>,
    start: Vec<f64>,
    depart: Vec<f64>,
    /// Largest delay of each stop's start that keeps every later window and the budget.
    max_shift: Vec<f64>,
}

impl Timeline {
    fn new() -> Self {
        Self {
            order: Vec::new(),
            arrive: Vec::new(),
            start: Vec::new(),
            depart: Vec::new(),
            max_shift: Vec::new(),
        }
    }

    fn end_time(&self, start_time: f64) -> f64 {
        self.depart.last().copied().unwrap_or(start_time)
    }
}

struct Planner<'a> {
    world: &'a GridWorld,
    start: Point,
    start_time: f64,
    deadline: f64,
    candidates: &'a [&'a Request],
}

impl Planner<'_> {
    fn location(&self, pos: Option<usize>, tl: &Timeline) -> Point {
        pos.map_or(self.start, |p| self.candidates[tl.order[p]].location)
    }

    fn rebuild(&self, tl: &mut Timeline) {
        let n = tl.order.len();
        tl.arrive.clear();
        tl.start.clear();
        tl.depart.clear();
        let (mut t, mut at) = (self.start_time, self.start);
        for &c in &tl.order {
            let r = self.candidates[c];
            let arrive = t + self.world.travel_time(at, r.location);
            let start = arrive.max(r.earliest);
            tl.arrive.push(arrive);
            tl.start.push(start);
            t = start + r.service_time;
            tl.depart.push(t);
            at = r.location;
        }
        tl.max_shift = vec![0.0; n];
        for k in (0..n).rev() {
            let r = self.candidates[tl.order[k]];
            let downstream = if k + 1 < n {
                (tl.start[k + 1] - tl.arrive[k + 1]) + tl.max_shift[k + 1]
            } else {
                self.deadline - tl.depart[k]
            };
            tl.max_shift[k] = (r.latest - tl.start[k]).min(downstream);
        }
    }

    /// Full re-simulation of an explicit order; used when an insertion would pull
    /// later stops earlier (only possible under non-metric distance matrices).
    fn simulate(&self, order: &[usize]) -> Option<f64> {
        let (mut t, mut at) = (self.start_time, self.start);
        for &c in order {
            let r = self.candidates[c];
            let start = (t + self.world.travel_time(at, r.location)).max(r.earliest);
            if start > r.latest + EPS {
                return None;
            }
            t = start + r.service_time;
            at = r.location;
        }
        (t <= self.deadline + EPS).then_some(t)
    }

    /// Feasibility and end-time delta of inserting `cand` before position `pos`.
    fn try_insert(&self, tl: &Timeline, cand: usize, pos: usize) -> Option<f64> {
        let r = self.candidates[cand];
        let prev = pos.checked_sub(1);
        let depart_prev = prev.map_or(self.start_time, |p| tl.depart[p]);
        let arrive = depart_prev + self.world.travel_time(self.location(prev, tl), r.location);
        let start = arrive.max(r.earliest);
        if start > r.latest + EPS {
            return None;
        }
        let depart = start + r.service_time;
        let old_end = tl.end_time(self.start_time);
        if pos == tl.order.len() {
            return (depart <= self.deadline + EPS).then_some(depart - old_end);
        }
        let next = self.candidates[tl.order[pos]];
        let shift = depart + self.world.travel_time(r.location, next.location) - tl.arrive[pos];
        if shift < 0.0 {
            let mut order = tl.order.clone();
            order.insert(pos, cand);
            return self.simulate(&order).map(|end| end - old_end);
        }
        if shift > (tl.start[pos] - tl.arrive[pos]) + tl.max_shift[pos] + EPS {
            return None;
        }
        let mut delta = shift;
        for k in pos..tl.order.len() {
            delta = (delta - (tl.start[k] - tl.arrive[k])).max(0.0);
            if delta == 0.0 {
                break;
            }
        }
        Some(delta)
    }

    fn run(&self) -> Timeline {
        let mut tl = Timeline::new();
        let mut routed = vec![false; self.candidates.len()];
        loop {
            // (ratio, latest, id, position, candidate)
            let mut best: Option<(f64, f64, u64, usize, usize)> = None;
            for (c, r) in self.candidates.iter().enumerate() {
                if routed[c] {
                    continue;
                }
                for pos in 0..=tl.order.len() {
                    let Some(delta) = self.try_insert(&tl, c, pos) else {
                        continue;
                    };
                    let ratio = if delta <= EPS {
                        f64::INFINITY
                    } else {
                        r.price / delta
                    };
                    let better = match best {
                        None => true,
                        Some((br, bl, bid, bpos, _)) => {
                            ratio > br
                                || (ratio == br
                                    && (r.latest < bl
                                        || (r.latest == bl
                                            && (r.id < bid || (r.id == bid && pos < bpos)))))
                        }
                    };
                    if better {
                        best = Some((ratio, r.latest, r.id, pos, c));
                    }
                }
            }
            let Some((_, _, _, pos, c)) = best else {
                break;
            };
            routed[c] = true;
            tl.order.insert(pos, c);
            self.rebuild(&mut tl);
        }
        tl
    }

    fn finish(&self, tl: Timeline, budget: f64) -> Route {
        let stops: Vec<Stop> = tl
            .order
            .iter()
            .zip(&tl.start)
            .map(|(&c, &s)| Stop {
                request: self.candidates[c].id,
                planned_start: s,
            })
            .collect();
        let total_price = tl.order.iter().map(|&c| self.candidates[c].price).sum();
        let end_point = tl
            .order
            .last()
            .map_or(self.start, |&c| self.candidates[c].location);
        Route {
            stops,
            start_point: self.start,
            start_time: self.start_time,
            budget,
            total_price,
            end_time: tl.end_time(self.start_time),
            end_point,
        }
    }
}

fn greedy(
    world: &GridWorld,
    start: Point,
    start_time: f64,
    budget: f64,
    candidates: &[&Request],
) -> Route {
    let planner = Planner {
        world,
        start,
        start_time,
        deadline: start_time + budget,
        candidates,
    };
    let tl = if budget > 0.0 {
        planner.run()
    } else {
        Timeline::new()
    };
    planner.finish(tl, budget)
}

fn better_route(a: &Route, b: &Route) -> bool {
    a.total_price > b.total_price || (a.total_price == b.total_price && a.end_time < b.end_time)
}

/// Plans a pickup route from `start` within `budget` minutes.
///
/// Greedy insertion is run for `budget` and for every smaller patrol option;
/// the most valuable of those routes is returned, so the collected price never
/// decreases as the budget grows.
pub fn plan_route(
    world: &GridWorld,
    start: Point,
    start_time: f64,
    budget: f64,
    candidates: &[&Request],
) -> Route {
    let mut best: Option<Route> = None;
    let smaller = PATROL_OPTIONS
        .iter()
        .map(|&b| f64::from(b))
        .filter(|&b| b > 0.0 && b < budget);
    for b in smaller.chain(std::iter::once(budget)) {
        let r = greedy(world, start, start_time, b, candidates);
        best = match best {
            Some(prev) if better_route(&prev, &r) => Some(prev),
            _ => Some(r),
        };
    }
    Route {
        budget,
        ..best.expect("at least one budget evaluated")
    }
}

/// Routes for every patrol option at once, sharing the smaller-budget runs.
pub fn plan_routes_by_patrol(
    world: &GridWorld,
    start: Point,
    start_time: f64,
    candidates: &[&Request],
) -> [Route; 4] {
    let mut routes = PATROL_OPTIONS.map(|b| greedy(world, start, start_time, f64::from(b), candidates));
    for k in 1..routes.len() {
        if better_route(&routes[k - 1], &routes[k]) {
            routes[k] = Route {
                budget: routes[k].budget,
                ..routes[k - 1].clone()
            };
        }
    }
    routes
}

/// Predicted gain of sending a courier to a grid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProfitEstimate {
    pub price: f64,
    /// Travel plus time spent in the grid.
    pub total_time: f64,
    pub travel: f64,
}

impl ProfitEstimate {
    /// Price per minute; zero when no time is spent.
    pub fn rate(&self) -> f64 {
        if self.total_time > 0.0 {
            self.price / self.total_time
        } else {
            0.0
        }
    }
}

/// Estimates for all four patrol budgets of one target grid.
///
/// `pending` lists the requests currently pending in `target`; those that
/// expire before the courier can reach the grid centre are ignored.
pub fn estimate_grid_profits(
    world: &GridWorld,
    from: Point,
    now: f64,
    target: Cell,
    pending: &[&Request],
) -> [ProfitEstimate; 4] {
    let center = world.center(target);
    let travel = world.travel_time(from, center);
    let arrival = now + travel;
    let alive: Vec<&Request> = pending
        .iter()
        .copied()
        .filter(|r| r.latest >= arrival)
        .collect();
    if alive.is_empty() {
        return PATROL_OPTIONS.map(|p| ProfitEstimate {
            price: 0.0,
            total_time: travel + f64::from(p),
            travel,
        });
    }
    let routes = plan_routes_by_patrol(world, center, arrival, &alive);
    let mut out = [ProfitEstimate {
        price: 0.0,
        total_time: 0.0,
        travel,
    }; 4];
    for (k, route) in routes.iter().enumerate() {
        out[k] = route_estimate(route, travel, f64::from(PATROL_OPTIONS[k]));
    }
    out
}

fn route_estimate(route: &Route, travel: f64, patrol: f64) -> ProfitEstimate {
    let in_grid = if route.is_empty() {
        patrol
    } else {
        route.end_time - route.start_time
    };
    ProfitEstimate {
        price: route.total_price,
        total_time: travel + in_grid,
        travel,
    }
}

/// Estimate for a single patrol budget.
pub fn estimate_profit(
    world: &GridWorld,
    from: Point,
    now: f64,
    target: Cell,
    patrol: f64,
    pending: &[&Request],
) -> ProfitEstimate {
    let center = world.center(target);
    let travel = world.travel_time(from, center);
    let arrival = now + travel;
    let alive: Vec<&Request> = pending
        .iter()
        .copied()
        .filter(|r| r.latest >= arrival)
        .collect();
    let route = plan_route(world, center, arrival, patrol, &alive);
    route_estimate(&route, travel, patrol)
}

/// A broken route invariant found by [`validate_route`].
#[derive(Clone, Debug, PartialEq)]
pub enum RouteViolation {
    UnknownRequest(u64),
    Duplicate(u64),
    StartsBeforeArrival { request: u64, planned: f64, arrival: f64 },
    OutsideWindow { request: u64, planned: f64 },
    NeedlessWait { request: u64, planned: f64, expected: f64 },
    OverBudget { duration: f64, budget: f64 },
    EndTime { reported: f64, actual: f64 },
    EndPoint,
    Price { reported: f64, actual: f64 },
}

/// Walks the route timeline from scratch and reports every violated invariant.
pub fn validate_route<'a>(
    route: &Route,
    world: &GridWorld,
    lookup: impl Fn(u64) -> Option<&'a Request>,
) -> Vec<RouteViolation> {
    let tol = 1e-6;
    let mut out = Vec::new();
    let mut seen = std::collections::HashSet::new();
    let (mut t, mut at, mut price) = (route.start_time, route.start_point, 0.0);
    for stop in &route.stops {
        let Some(r) = lookup(stop.request) else {
            out.push(RouteViolation::UnknownRequest(stop.request));
            continue;
        };
        if !seen.insert(stop.request) {
            out.push(RouteViolation::Duplicate(stop.request));
        }
        let arrival = t + world.travel_time(at, r.location);
        if stop.planned_start < arrival - tol {
            out.push(RouteViolation::StartsBeforeArrival {
                request: r.id,
                planned: stop.planned_start,
                arrival,
            });
        }
        if stop.planned_start < r.earliest - tol || stop.planned_start > r.latest + tol {
            out.push(RouteViolation::OutsideWindow {
                request: r.id,
                planned: stop.planned_start,
            });
        }
        let expected = arrival.max(r.earliest);
        if (stop.planned_start - expected).abs() > tol {
            out.push(RouteViolation::NeedlessWait {
                request: r.id,
                planned: stop.planned_start,
                expected,
            });
        }
        t = stop.planned_start + r.service_time;
        at = r.location;
        price += r.price;
    }
    if (route.end_time - t).abs() > tol {
        out.push(RouteViolation::EndTime {
            reported: route.end_time,
            actual: t,
        });
    }
    if route.end_point.distance(&at) > tol {
        out.push(RouteViolation::EndPoint);
    }
    if t - route.start_time > route.budget + tol {
        out.push(RouteViolation::OverBudget {
            duration: t - route.start_time,
            budget: route.budget,
        });
    }
    if (route.total_price - price).abs() > tol {
        out.push(RouteViolation::Price {
            reported: route.total_price,
            actual: price,
        });
    }
    out
}

#[cfg(test)]
#[path = "../tests/common/oracles.rs"]
mod oracles;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{GridType, RequestStatus};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn req(id: u64, x: f64, y: f64, earliest: f64, latest: f64, service: f64, price: f64) -> Request {
        Request {
            id,
            location: Point::new(x, y),
            grid: 0,
            arrival: earliest,
            earliest,
            latest,
            service_time: service,
            price,
            status: RequestStatus::Pending,
        }
    }

    fn world() -> GridWorld {
        GridWorld::uniform(20, 20, GridType::Intense).unwrap()
    }

    fn check(route: &Route, world: &GridWorld, reqs: &[Request]) {
        let v = validate_route(route, world, |id| reqs.iter().find(|r| r.id == id));
        assert!(v.is_empty(), "violations: {v:?}");
    }

    #[test]
    fn zero_budget_gives_empty_route() {
        let w = world();
        let r = req(1, 0.0, 1.0, 0.0, 100.0, 2.0, 5.0);
        let route = plan_route(&w, Point::new(0.0, 0.0), 0.0, 0.0, &[&r]);
        assert!(route.is_empty());
        assert_eq!(route.total_price, 0.0);
        assert_eq!(route.end_point, Point::new(0.0, 0.0));
    }

    #[test]
    fn single_request_hand_timeline() {
        let w = world();
        let r = req(1, 0.0, 1.0, 100.0, 160.0, 3.0, 5.0);
        let route = plan_route(&w, Point::new(0.0, 0.0), 100.0, 10.0, &[&r]);
        assert_eq!(route.stops.len(), 1);
        assert!((route.stops[0].planned_start - 102.0).abs() < 1e-12);
        assert!((route.end_time - 105.0).abs() < 1e-12);
        assert_eq!(route.total_price, 5.0);
        assert!(route.duration() <= 10.0);
        check(&route, &w, &[r]);
    }

    #[test]
    fn waiting_is_allowed_and_counted() {
        let w = world();
        let r = req(1, 0.0, 1.0, 106.0, 160.0, 3.0, 5.0);
        let route = plan_route(&w, Point::new(0.0, 0.0), 100.0, 10.0, &[&r]);
        assert_eq!(route.stops[0].planned_start, 106.0);
        assert_eq!(route.end_time, 109.0);
        let tight = plan_route(&w, Point::new(0.0, 0.0), 100.0, 8.0, &[&r]);
        assert!(tight.is_empty());
    }

    #[test]
    fn expired_and_unreachable_are_skipped() {
        let w = world();
        let gone = req(1, 0.0, 1.0, 0.0, 101.0, 3.0, 5.0);
        let far = req(2, 20.0, 0.0, 100.0, 200.0, 3.0, 5.0);
        let route = plan_route(&w, Point::new(0.0, 0.0), 100.0, 30.0, &[&gone, &far]);
        assert!(route.is_empty());
    }

    #[test]
    fn ratio_prefers_cheap_close_requests() {
        let w = world();
        let near = req(1, 0.0, 0.5, 0.0, 200.0, 2.0, 3.0);
        let far = req(2, 0.0, 2.0, 0.0, 200.0, 2.0, 4.0);
        let route = plan_route(&w, Point::new(0.0, 0.0), 0.0, 30.0, &[&far, &near]);
        assert_eq!(route.stops[0].request, 1);
        assert_eq!(route.total_price, 7.0);
        check(&route, &w, &[near, far]);
    }

    #[test]
    fn deterministic_output() {
        let w = world();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let reqs: Vec<Request> = (0..12).map(|i| random_request(&mut rng, i)).collect();
        let refs: Vec<&Request> = reqs.iter().collect();
        let a = plan_route(&w, Point::new(0.5, 0.5), 0.0, 30.0, &refs);
        let b = plan_route(&w, Point::new(0.5, 0.5), 0.0, 30.0, &refs);
        assert_eq!(a, b);
    }

    fn random_request(rng: &mut ChaCha8Rng, id: u64) -> Request {
        let earliest = rng.random_range(0.0..20.0);
        req(
            id,
            rng.random_range(0.0..1.0),
            rng.random_range(0.0..1.0),
            earliest,
            earliest + rng.random_range(0.0..30.0),
            f64::from(rng.random_range(2u32..=4)),
            f64::from(rng.random_range(1u32..=5)),
        )
    }

    #[test]
    fn estimate_examples() {
        let w = world();
        let cell = Cell::new(0, 0);
        let empty = estimate_profit(&w, Point::new(0.5, 1.5), 0.0, cell, 20.0, &[]);
        assert_eq!(empty.price, 0.0);
        assert!((empty.total_time - 22.0).abs() < 1e-12);

        // courier 1 km away from the centre (0.5, 0.5): travel 2 minutes.
        let r = req(1, 0.5, 1.0, 100.0, 160.0, 3.0, 5.0);
        let e = estimate_profit(&w, Point::new(0.5, 1.5), 98.0, cell, 10.0, &[&r]);
        assert_eq!(e.price, 5.0);
        assert!((e.total_time - (2.0 + 1.0 + 3.0)).abs() < 1e-12);

        // hand timeline from the planning example, shifted so travel is exactly 2
        let r = req(2, 0.5, 1.5, 100.0, 160.0, 3.0, 5.0);
        let e = estimate_profit(&w, Point::new(0.5, -0.5), 98.0, cell, 10.0, &[&r]);
        assert_eq!(e.price, 5.0);
        assert!((e.total_time - 7.0).abs() < 1e-12);

        let expired = req(3, 0.5, 0.5, 0.0, 99.0, 3.0, 5.0);
        let e = estimate_profit(&w, Point::new(0.5, 1.5), 98.0, cell, 10.0, &[&expired]);
        assert_eq!(e.price, 0.0);
    }

    #[test]
    fn grid_profits_agree_with_single_estimates() {
        let w = world();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..50 {
            let reqs: Vec<Request> = (0..7).map(|i| random_request(&mut rng, i)).collect();
            let refs: Vec<&Request> = reqs.iter().collect();
            let from = Point::new(rng.random_range(0.0..3.0), rng.random_range(0.0..3.0));
            let all = estimate_grid_profits(&w, from, 1.0, Cell::new(0, 0), &refs);
            for (k, &p) in PATROL_OPTIONS.iter().enumerate() {
                let one = estimate_profit(&w, from, 1.0, Cell::new(0, 0), f64::from(p), &refs);
                assert_eq!(all[k], one);
            }
        }
    }

    #[test]
    fn validator_flags_broken_routes() {
        let w = world();
        let r = req(1, 0.0, 1.0, 100.0, 160.0, 3.0, 5.0);
        let mut route = plan_route(&w, Point::new(0.0, 0.0), 100.0, 10.0, &[&r]);
        route.total_price = 4.0;
        route.stops[0].planned_start = 101.0;
        let v = validate_route(&route, &w, |id| (id == 1).then_some(&r));
        assert!(v.iter().any(|x| matches!(x, RouteViolation::Price { .. })));
        assert!(v.iter().any(|x| matches!(x, RouteViolation::StartsBeforeArrival { .. })));
    }

    fn oracle_case(start: Point, t0: f64, budget: f64, reqs: &[Request]) -> oracles::OptwCase {
        oracles::OptwCase {
            start: (start.x, start.y),
            start_time: t0,
            budget,
            speed: 0.5,
            items: reqs
                .iter()
                .map(|r| oracles::OptwItem {
                    x: r.location.x,
                    y: r.location.y,
                    earliest: r.earliest,
                    latest: r.latest,
                    service: r.service_time,
                    price: r.price,
                })
                .collect(),
        }
    }

    #[test]
    fn never_exceeds_brute_force_and_matches_single_feasible() {
        let w = world();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for case in 0..150 {
            let n = rng.random_range(0..=7);
            let reqs: Vec<Request> = (0..n).map(|i| random_request(&mut rng, i)).collect();
            let refs: Vec<&Request> = reqs.iter().collect();
            let start = Point::new(rng.random_range(0.0..1.0), rng.random_range(0.0..1.0));
            let t0 = rng.random_range(0.0..10.0);
            let budget = f64::from(PATROL_OPTIONS[case % 4]);
            let route = plan_route(&w, start, t0, budget, &refs);
            check(&route, &w, &reqs);
            let best = oracles::brute_force_optw(&oracle_case(start, t0, budget, &reqs));
            assert!(route.total_price <= best.price + 1e-9);
            if best.feasible_singletons <= 1 {
                assert_eq!(route.total_price, best.price);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn price_is_monotone_in_budget(seed in 0u64..10_000, n in 0usize..10) {
            let w = world();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let reqs: Vec<Request> = (0..n as u64).map(|i| random_request(&mut rng, i)).collect();
            let refs: Vec<&Request> = reqs.iter().collect();
            let start = Point::new(0.5, 0.5);
            let mut last = 0.0;
            for &b in &PATROL_OPTIONS {
                let route = plan_route(&w, start, 5.0, f64::from(b), &refs);
                check(&route, &w, &reqs);
                prop_assert!(route.total_price >= last);
                last = route.total_price;
            }
        }
    }
}
