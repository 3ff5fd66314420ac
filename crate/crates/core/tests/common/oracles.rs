//! Independent brute-force oracles. Plain data in, plain data out: nothing here
//! touches the library's planning or matching code.
#![allow(dead_code)]

#[derive(Clone, Debug)]
pub struct OptwItem {
    pub x: f64,
    pub y: f64,
    pub earliest: f64,
    pub latest: f64,
    pub service: f64,
    pub price: f64,
}

#[derive(Clone, Debug)]
pub struct OptwCase {
    pub start: (f64, f64),
    pub start_time: f64,
    pub budget: f64,
    pub speed: f64,
    pub items: Vec<OptwItem>,
}

#[derive(Clone, Debug)]
pub struct OptwOptimum {
    pub price: f64,
    /// How many items can be served on their own.
    pub feasible_singletons: usize,
}

/// Exhaustive search over every ordered subset of items.
pub fn brute_force_optw(case: &OptwCase) -> OptwOptimum {
    const TOL: f64 = 1e-9;
    let deadline = case.start_time + case.budget;
    let travel = |a: (f64, f64), b: (f64, f64)| (a.0 - b.0).hypot(a.1 - b.1) / case.speed;

    fn dfs(
        case: &OptwCase,
        used: &mut Vec<bool>,
        at: (f64, f64),
        t: f64,
        price: f64,
        deadline: f64,
        travel: &dyn Fn((f64, f64), (f64, f64)) -> f64,
        best: &mut f64,
    ) {
        if price > *best {
            *best = price;
        }
        for i in 0..case.items.len() {
            if used[i] {
                continue;
            }
            let it = &case.items[i];
            let start = (t + travel(at, (it.x, it.y))).max(it.earliest);
            if start > it.latest + TOL || start + it.service > deadline + TOL {
                continue;
            }
            used[i] = true;
            dfs(
                case,
                used,
                (it.x, it.y),
                start + it.service,
                price + it.price,
                deadline,
                travel,
                best,
            );
            used[i] = false;
        }
    }

    let mut best = 0.0;
    let mut used = vec![false; case.items.len()];
    dfs(
        case,
        &mut used,
        case.start,
        case.start_time,
        0.0,
        deadline,
        &travel,
        &mut best,
    );
    let feasible_singletons = case
        .items
        .iter()
        .filter(|it| {
            let start = (case.start_time + travel(case.start, (it.x, it.y))).max(it.earliest);
            start <= it.latest + TOL && start + it.service <= deadline + TOL
        })
        .count();
    OptwOptimum {
        price: best,
        feasible_singletons,
    }
}

/// Best one-to-one assignment of every row to a distinct column, by enumeration.
/// Returns the value and the lexicographically smallest optimal assignment
/// (ties within `tol`).
pub fn brute_force_assignment(weights: &[Vec<f64>], tol: f64) -> (f64, Vec<usize>) {
    let rows = weights.len();
    let cols = weights.first().map_or(0, Vec::len);
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut current = Vec::with_capacity(rows);
    let mut used = vec![false; cols];

    fn rec(
        weights: &[Vec<f64>],
        used: &mut Vec<bool>,
        current: &mut Vec<usize>,
        value: f64,
        tol: f64,
        best: &mut Option<(f64, Vec<usize>)>,
    ) {
        let row = current.len();
        if row == weights.len() {
            // Enumeration is lexicographic, so only a strictly better value replaces.
            match best {
                Some((b, _)) if value <= *b + tol => {}
                _ => *best = Some((value, current.clone())),
            }
            return;
        }
        for c in 0..used.len() {
            if used[c] {
                continue;
            }
            used[c] = true;
            current.push(c);
            rec(weights, used, current, value + weights[row][c], tol, best);
            current.pop();
            used[c] = false;
        }
    }

    rec(weights, &mut used, &mut current, 0.0, tol, &mut best);
    best.unwrap_or((0.0, Vec::new()))
}
