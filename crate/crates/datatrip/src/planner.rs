//! Exact planners for the data-requirement-constrained routing problem.
//!
//! [`optimal_route`] is the ground truth the learners are judged against: the
//! minimum-trip-time route from start to destination whose accumulated
//! transfer meets the data requirement. [`bandwidth_unaware_route`] ignores
//! the requirement and reports whether it was met by luck;
//! [`traffic_unaware_route`] minimizes hop count instead of time. All three
//! run a least-cost search over (cell, heading, transferred-data) states and
//! tie-break equal-cost routes by the lexicographically smallest action
//! sequence (forward < left < right). [`brute_force_optimal`] is a separate
//! exhaustive solver used to validate the search on small instances.
//!
//! Search internals work in integer half-units of delay (1.5 becomes 3), so
//! cost comparisons are exact. Transfer amounts are quantized to the data
//! resolution `q`, rounding down: the planner never claims more transfer than
//! the environment would deliver, so a plan it calls feasible is feasible
//! when replayed.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::collections::HashMap;
use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::env::{
    self, initial_state, transfer_amount, Action, BandwidthMap, Cell, EnvParams, Heading,
    RewardConfig,
};
use crate::traffic::TrafficGrid;

/// Cap on search-graph states, guarding memory on misconfigured inputs
/// (for example an absurdly fine data resolution).
pub const DEFAULT_NODE_BUDGET: usize = 5_000_000;

/// Errors from planning and plan file I/O.
#[derive(Debug, Error)]
pub enum PlanError {
    #[error("invalid planner input: {0}")]
    Config(String),
    #[error("instance too large for exhaustive search: {0}")]
    TooLarge(String),
    #[error("failed to write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// One executed step of a plan: the action and the state after it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanStep {
    pub action: Action,
    pub cell: Cell,
    pub time_after: f64,
    pub data_after: f64,
}

/// A complete route: the action sequence with per-step effects, plus totals
/// computed by replaying the actions through the environment's own step
/// function, so they match a live rollout bit for bit.
///
/// When no route satisfies the requirement (or the node budget is exhausted)
/// the plan is empty with `total_time` infinite and `feasible` false.
#[derive(Debug, Clone, PartialEq)]
pub struct RoutePlan {
    pub start: Cell,
    pub steps: Vec<PlanStep>,
    /// Sum of delay indices over entered cells; infinite when no route exists.
    pub total_time: f64,
    pub total_hops: usize,
    pub data_transferred: f64,
    /// Whether the route ends at the destination with the requirement met.
    pub feasible: bool,
}

impl RoutePlan {
    pub fn actions(&self) -> Vec<Action> {
        self.steps.iter().map(|s| s.action).collect()
    }

    /// Start cell followed by the cell after each step. Off-grid bumps show
    /// up as a repeated cell.
    pub fn cells(&self) -> Vec<Cell> {
        let mut cells = Vec::with_capacity(self.steps.len() + 1);
        cells.push(self.start);
        cells.extend(self.steps.iter().map(|s| s.cell));
        cells
    }

    fn no_route(start: Cell) -> Self {
        Self {
            start,
            steps: Vec::new(),
            total_time: f64::INFINITY,
            total_hops: 0,
            data_transferred: 0.0,
            feasible: false,
        }
    }
}

/// Replays an action sequence through the environment and packages the
/// result as a [`RoutePlan`]. This is the only place plan totals come from;
/// planners never account time or transfer themselves.
pub fn plan_from_actions(
    actions: &[Action],
    map: &BandwidthMap,
    traffic: &TrafficGrid,
    params: &EnvParams,
) -> Result<RoutePlan, PlanError> {
    validate(map, traffic, params)?;
    let mut replay_params = *params;
    replay_params.step_limit = u32::try_from(actions.len() + 1)
        .map_err(|_| PlanError::Config("plan too long to replay".into()))?;
    let reward_cfg = RewardConfig::default();

    let mut state = initial_state(map, &replay_params);
    let mut steps = Vec::with_capacity(actions.len());
    for &action in actions {
        let out = env::step(&state, action, map, traffic, &reward_cfg, &replay_params)
            .map_err(|e| PlanError::Config(format!("plan not executable: {e}")))?;
        state = out.next_state;
        steps.push(PlanStep {
            action,
            cell: state.cell,
            time_after: state.trip_time,
            data_after: state.data_remaining,
        });
    }

    let feasible = state.cell == map.destination() && state.requirement_met();
    Ok(RoutePlan {
        start: map.start(),
        steps,
        total_time: state.trip_time,
        total_hops: actions.len(),
        data_transferred: params.requirement - state.data_remaining,
        feasible,
    })
}

/// Minimum-trip-time route meeting the data requirement, with the default
/// node budget.
pub fn optimal_route(
    map: &BandwidthMap,
    traffic: &TrafficGrid,
    params: &EnvParams,
) -> Result<RoutePlan, PlanError> {
    optimal_route_with_budget(map, traffic, params, DEFAULT_NODE_BUDGET)
}

/// [`optimal_route`] with an explicit state budget; exhausting the budget
/// yields a no-route plan rather than an error.
pub fn optimal_route_with_budget(
    map: &BandwidthMap,
    traffic: &TrafficGrid,
    params: &EnvParams,
    node_budget: usize,
) -> Result<RoutePlan, PlanError> {
    validate(map, traffic, params)?;
    let buckets = required_buckets(params);
    match search(map, traffic, params, CostModel::DelayIndex, buckets, node_budget) {
        Some(actions) => plan_from_actions(&actions, map, traffic, params),
        None => Ok(RoutePlan::no_route(map.start())),
    }
}

/// Minimum-trip-time route that ignores the data requirement entirely. The
/// returned plan's `feasible` flag reports whether the requirement happened
/// to be met en route, with no detour made for it.
pub fn bandwidth_unaware_route(
    map: &BandwidthMap,
    traffic: &TrafficGrid,
    params: &EnvParams,
) -> Result<RoutePlan, PlanError> {
    validate(map, traffic, params)?;
    match search(map, traffic, params, CostModel::DelayIndex, 0, DEFAULT_NODE_BUDGET) {
        Some(actions) => plan_from_actions(&actions, map, traffic, params),
        None => Ok(RoutePlan::no_route(map.start())),
    }
}

/// Minimum-hop-count route meeting the data requirement, blind to traffic.
/// `total_time` is then whatever the true delay indices say about that
/// route, which is the point of the comparison.
pub fn traffic_unaware_route(
    map: &BandwidthMap,
    traffic: &TrafficGrid,
    params: &EnvParams,
) -> Result<RoutePlan, PlanError> {
    validate(map, traffic, params)?;
    let buckets = required_buckets(params);
    match search(map, traffic, params, CostModel::UnitHops, buckets, DEFAULT_NODE_BUDGET) {
        Some(actions) => plan_from_actions(&actions, map, traffic, params),
        None => Ok(RoutePlan::no_route(map.start())),
    }
}

/// Exhaustive enumeration of action sequences up to `max_hops`, driven by
/// the environment's own step function over exact (unquantized) transfer
/// amounts. Refuses grids larger than 5x5 or horizons beyond 20 hops.
///
/// Exists to validate [`optimal_route`] and is independent of its search:
/// states are expanded layer by layer with only safe pruning (a state is
/// dropped when another at the same cell and heading has no more data left
/// to transfer and strictly less elapsed time).
pub fn brute_force_optimal(
    map: &BandwidthMap,
    traffic: &TrafficGrid,
    params: &EnvParams,
    max_hops: usize,
) -> Result<RoutePlan, PlanError> {
    validate(map, traffic, params)?;
    if map.rows() > 5 || map.cols() > 5 {
        return Err(PlanError::TooLarge(format!(
            "grid is {}x{}, exhaustive search allows at most 5x5",
            map.rows(),
            map.cols()
        )));
    }
    if max_hops > 20 {
        return Err(PlanError::TooLarge(format!(
            "max_hops {max_hops} exceeds the exhaustive-search limit of 20"
        )));
    }

    let mut bf_params = *params;
    bf_params.step_limit = max_hops as u32 + 1;
    let reward_cfg = RewardConfig::default();

    // Best feasible completion found so far: (trip_time, action sequence),
    // minimized by time and then lexicographically.
    let mut best: Option<(f64, Vec<Action>)> = None;

    type Key = (Cell, Heading, u64);
    let start = initial_state(map, &bf_params);
    let mut layer: HashMap<Key, (f64, Vec<Action>, env::EpisodeState)> = HashMap::new();
    layer.insert(
        (start.cell, start.heading, start.data_remaining.to_bits()),
        (0.0, Vec::new(), start),
    );

    for _ in 0..max_hops {
        let mut next_layer: HashMap<Key, (f64, Vec<Action>, env::EpisodeState)> = HashMap::new();
        for (_, (time, seq, state)) in layer {
            if let Some((best_time, _)) = &best {
                if time > *best_time {
                    continue;
                }
            }
            for action in Action::ALL {
                let out = env::step(&state, action, map, traffic, &reward_cfg, &bf_params)
                    .expect("layer states are non-terminal");
                let nstate = out.next_state;
                let ntime = nstate.trip_time;
                let mut nseq = seq.clone();
                nseq.push(action);

                if nstate.cell == map.destination() && nstate.requirement_met() {
                    let candidate = (ntime, nseq);
                    let better = match &best {
                        None => true,
                        Some((bt, bs)) => {
                            candidate.0 < *bt || (candidate.0 == *bt && candidate.1 < *bs)
                        }
                    };
                    if better {
                        best = Some(candidate);
                    }
                    continue;
                }

                let key = (nstate.cell, nstate.heading, nstate.data_remaining.to_bits());
                match next_layer.get(&key) {
                    Some((t, s, _)) if (*t, s) <= (ntime, &nseq) => {}
                    _ => {
                        next_layer.insert(key, (ntime, nseq, nstate));
                    }
                }
            }
        }

        // Dominance pruning within each (cell, heading) group: a state with
        // no more data remaining and strictly less time always finishes at
        // least as fast, whatever the suffix.
        let entries: Vec<(Key, f64)> = next_layer
            .iter()
            .map(|(k, (t, _, _))| (*k, *t))
            .collect();
        next_layer.retain(|&(cell, heading, dr_bits), (time, _, _)| {
            !entries.iter().any(|&((c2, h2, dr2), t2)| {
                c2 == cell
                    && h2 == heading
                    && f64::from_bits(dr2) <= f64::from_bits(dr_bits)
                    && t2 < *time
            })
        });
        layer = next_layer;
        if layer.is_empty() {
            break;
        }
    }

    match best {
        Some((_, seq)) => plan_from_actions(&seq, map, traffic, params),
        None => Ok(RoutePlan::no_route(map.start())),
    }
}

/// Serializes the per-step table: `step,action,row,col,time_after,data_after`.
pub fn plan_csv_string(plan: &RoutePlan) -> String {
    let mut out = String::from("step,action,row,col,time_after,data_after\n");
    for (i, s) in plan.steps.iter().enumerate() {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            i + 1,
            s.action,
            s.cell.row,
            s.cell.col,
            s.time_after,
            s.data_after
        ));
    }
    out
}

/// Serializes the one-line summary: `total_time,total_hops,feasible`.
pub fn summary_csv_string(plan: &RoutePlan) -> String {
    format!(
        "total_time,total_hops,feasible\n{},{},{}\n",
        plan.total_time, plan.total_hops, plan.feasible
    )
}

pub fn write_plan_csv(path: &Path, plan: &RoutePlan) -> Result<(), PlanError> {
    fs::write(path, plan_csv_string(plan)).map_err(|source| PlanError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn write_plan_summary_csv(path: &Path, plan: &RoutePlan) -> Result<(), PlanError> {
    fs::write(path, summary_csv_string(plan)).map_err(|source| PlanError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn validate(map: &BandwidthMap, traffic: &TrafficGrid, params: &EnvParams) -> Result<(), PlanError> {
    if map.rows() != traffic.rows() || map.cols() != traffic.cols() {
        return Err(PlanError::Config(format!(
            "map is {}x{} but the traffic grid is {}x{}",
            map.rows(),
            map.cols(),
            traffic.rows(),
            traffic.cols()
        )));
    }
    params.validate().map_err(|e| PlanError::Config(e.to_string()))
}

/// How many quantized transfer units the route must accumulate.
fn required_buckets(params: &EnvParams) -> u64 {
    if params.requirement <= 0.0 {
        return 0;
    }
    let b = (params.requirement / params.data_resolution()).ceil();
    if b >= u64::MAX as f64 {
        u64::MAX
    } else {
        b as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum CostModel {
    /// Edge cost is the entered cell's delay index (the current cell's for
    /// off-grid bumps), in half-units.
    DelayIndex,
    /// Every action costs 1: hop counting for the traffic-blind baseline.
    UnitHops,
}

/// Search graph over (cell, heading, transferred-bucket) states. The bucket
/// saturates at `required`: more transfer than the requirement is worthless.
struct Graph<'a> {
    traffic: &'a TrafficGrid,
    rows: usize,
    cols: usize,
    required: u64,
    /// Quantized transfer gain per cell, zero for low-bandwidth cells.
    gains: Vec<u64>,
    model: CostModel,
}

impl<'a> Graph<'a> {
    fn new(
        map: &BandwidthMap,
        traffic: &'a TrafficGrid,
        params: &EnvParams,
        model: CostModel,
        required: u64,
    ) -> Self {
        let q = params.data_resolution();
        let mut gains = vec![0u64; map.rows() * map.cols()];
        for cell in map.high_bw_cells() {
            let amount = transfer_amount(cell, traffic, params.transfer_scale);
            let buckets = (amount / q).floor();
            gains[cell.index(map.cols())] = if buckets >= u64::MAX as f64 {
                u64::MAX
            } else {
                buckets as u64
            };
        }
        Self {
            traffic,
            rows: map.rows(),
            cols: map.cols(),
            required,
            gains,
            model,
        }
    }

    fn node_count(&self) -> u128 {
        (self.rows * self.cols) as u128 * 4 * (self.required as u128 + 1)
    }

    fn node_id(&self, cell: Cell, heading: Heading, bucket: u64) -> usize {
        (cell.index(self.cols) * 4 + heading.index()) * (self.required as usize + 1)
            + bucket as usize
    }

    fn cost_of(&self, cell: Cell) -> u32 {
        match self.model {
            CostModel::DelayIndex => (self.traffic.delay(cell.row, cell.col) * 2.0) as u32,
            CostModel::UnitHops => 1,
        }
    }

    /// The single transition for (state, action): where the agent ends up,
    /// its new heading and bucket, and the edge cost in half-units.
    fn edge(&self, cell: Cell, heading: Heading, bucket: u64, action: Action) -> (Cell, Heading, u64, u32) {
        let nh = action.rotate(heading);
        let (dr, dc) = nh.delta();
        let tr = cell.row as isize + dr;
        let tc = cell.col as isize + dc;
        if tr >= 0 && tc >= 0 && (tr as usize) < self.rows && (tc as usize) < self.cols {
            let target = Cell::new(tr as usize, tc as usize);
            let gain = self.gains[target.index(self.cols)];
            let nb = bucket.saturating_add(gain).min(self.required);
            (target, nh, nb, self.cost_of(target))
        } else {
            (cell, nh, bucket, self.cost_of(cell))
        }
    }
}

/// Finds the minimum-cost action sequence from the start state to any
/// (destination, heading, full-bucket) state, lexicographically smallest
/// among cost ties. Returns `None` when unreachable or over budget.
///
/// One Dijkstra pass over the reversed graph computes `h`, the exact cost
/// from every state to the goal set. The optimal cost is then `h(start)`,
/// and the lex-min sequence falls out of a greedy walk that always takes the
/// first action (forward, left, right) staying on a shortest path, i.e.
/// keeping `cost so far + edge + h(next) == h(start)`. Costs are integers,
/// so the equality is exact.
fn search(
    map: &BandwidthMap,
    traffic: &TrafficGrid,
    params: &EnvParams,
    model: CostModel,
    required: u64,
    node_budget: usize,
) -> Option<Vec<Action>> {
    let graph = Graph::new(map, traffic, params, model, required);
    if graph.node_count() > node_budget as u128 {
        return None;
    }
    let n = graph.node_count() as usize;

    let mut reverse_adj: Vec<Vec<(u32, u32)>> = vec![Vec::new(); n];
    for row in 0..graph.rows {
        for col in 0..graph.cols {
            let cell = Cell::new(row, col);
            for heading in Heading::ALL {
                for bucket in 0..=required {
                    let u = graph.node_id(cell, heading, bucket);
                    for action in Action::ALL {
                        let (nc, nh, nb, cost) = graph.edge(cell, heading, bucket, action);
                        let v = graph.node_id(nc, nh, nb);
                        reverse_adj[v].push((u as u32, cost));
                    }
                }
            }
        }
    }

    let mut h = vec![u64::MAX; n];
    let mut heap: BinaryHeap<Reverse<(u64, u32)>> = BinaryHeap::new();
    for heading in Heading::ALL {
        let goal = graph.node_id(map.destination(), heading, required);
        h[goal] = 0;
        heap.push(Reverse((0, goal as u32)));
    }
    while let Some(Reverse((d, u))) = heap.pop() {
        if d > h[u as usize] {
            continue;
        }
        for &(w, cost) in &reverse_adj[u as usize] {
            let nd = d + u64::from(cost);
            if nd < h[w as usize] {
                h[w as usize] = nd;
                heap.push(Reverse((nd, w)));
            }
        }
    }

    let mut cell = map.start();
    let mut heading = params.initial_heading;
    let mut bucket = 0u64;
    let best = h[graph.node_id(cell, heading, bucket)];
    if best == u64::MAX {
        return None;
    }

    let mut actions = Vec::new();
    let mut cost_so_far = 0u64;
    while !(cell == map.destination() && bucket == required) {
        let step = Action::ALL.iter().copied().find_map(|action| {
            let (nc, nh, nb, cost) = graph.edge(cell, heading, bucket, action);
            let reach = h[graph.node_id(nc, nh, nb)];
            (reach != u64::MAX && cost_so_far + u64::from(cost) + reach == best)
                .then_some((action, nc, nh, nb, cost))
        });
        let (action, nc, nh, nb, cost) =
            step.expect("a shortest-path edge exists below the optimal cost");
        actions.push(action);
        cell = nc;
        heading = nh;
        bucket = nb;
        cost_so_far += u64::from(cost);
        assert!(actions.len() <= n, "lexicographic extraction cycled");
    }
    Some(actions)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use Action::{Forward as F, Left as L, Right as R};

    fn uniform(rows: usize, cols: usize, density: f64) -> TrafficGrid {
        TrafficGrid::uniform(rows, cols, density).unwrap()
    }

    fn params_with(requirement: f64, heading: Heading) -> EnvParams {
        let mut p = EnvParams::new(requirement);
        p.initial_heading = heading;
        p
    }

    /// 3x3 uniform grid, start in the destination's row facing along it,
    /// one high-bandwidth cell two rows below the direct path.
    fn detour_instance() -> (BandwidthMap, TrafficGrid, EnvParams) {
        let traffic = uniform(3, 3, 1000.0);
        let map = BandwidthMap::new(
            3,
            3,
            Cell::new(0, 0),
            Cell::new(0, 2),
            [Cell::new(2, 1)],
            0,
        )
        .unwrap();
        (map, traffic, params_with(1.0, Heading::East))
    }

    #[test]
    fn detour_to_the_far_cell_costs_nine() {
        // Hand oracle: the direct path is 2 moves but infeasible; any
        // feasible route must reach (2,1) (3 moves minimum from the start)
        // and then the destination (3 more), so 6 moves of delay 1.5 = 9.0.
        let (map, traffic, params) = detour_instance();
        let plan = optimal_route(&map, &traffic, &params).unwrap();
        assert_eq!(plan.total_time, 9.0);
        assert_eq!(plan.total_hops, 6);
        assert!(plan.feasible);
        assert_eq!(plan.data_transferred, 1.0);
        assert_eq!(plan.actions(), vec![F, R, F, L, L, F]);

        let brute = brute_force_optimal(&map, &traffic, &params, 20).unwrap();
        assert_eq!(brute.total_time, 9.0);
        assert!(brute.feasible);
    }

    #[test]
    fn zero_requirement_reduces_to_shortest_path() {
        let traffic = uniform(3, 3, 1000.0);
        let map =
            BandwidthMap::new(3, 3, Cell::new(1, 0), Cell::new(1, 2), [], 0).unwrap();
        let params = params_with(0.0, Heading::North);
        let plan = optimal_route(&map, &traffic, &params).unwrap();
        let manhattan = 2.0;
        assert_eq!(plan.total_time, manhattan * 1.5);
        assert_eq!(plan.actions(), vec![R, F]);
        assert!(plan.feasible);
        assert_eq!(plan.data_transferred, 0.0);

        let brute = brute_force_optimal(&map, &traffic, &params, 10).unwrap();
        assert_eq!(brute.total_time, plan.total_time);
    }

    #[test]
    fn corridor_reversal_turns_against_the_wall() {
        // 1x3 corridor, start in the middle facing east, destination behind.
        // The only way to come about is to turn into the wall (staying put)
        // and turn again, so the optimal plan has a wasted move in it.
        let traffic = uniform(1, 3, 1000.0);
        let map = BandwidthMap::new(1, 3, Cell::new(0, 1), Cell::new(0, 0), [], 0).unwrap();
        let params = params_with(0.0, Heading::East);
        let plan = optimal_route(&map, &traffic, &params).unwrap();
        assert_eq!(plan.actions(), vec![L, L]);
        assert_eq!(plan.total_time, 3.0);
        assert_eq!(plan.cells(), vec![Cell::new(0, 1), Cell::new(0, 1), Cell::new(0, 0)]);

        let brute = brute_force_optimal(&map, &traffic, &params, 10).unwrap();
        assert_eq!(brute.total_time, 3.0);
    }

    #[test]
    fn equal_cost_routes_resolve_to_lex_smallest_actions() {
        // Every 4-move route from (2,0) to (0,2) on a uniform grid costs the
        // same, so the tie-break alone decides: forward twice, then right,
        // then forward.
        let traffic = uniform(3, 3, 1000.0);
        let map = BandwidthMap::new(3, 3, Cell::new(2, 0), Cell::new(0, 2), [], 0).unwrap();
        let params = params_with(0.0, Heading::North);
        let plan = optimal_route(&map, &traffic, &params).unwrap();
        assert_eq!(plan.actions(), vec![F, F, R, F]);
        assert_eq!(plan.total_time, 6.0);
    }

    /// 4x4 grid with a dense middle row. Start and destination sit on that
    /// row; the only high-bandwidth cell is on the clear northern rim.
    fn dense_shortcut_instance() -> (BandwidthMap, TrafficGrid, EnvParams) {
        let mut densities = vec![0.0; 16];
        densities[1 * 4 + 1] = 3000.0;
        densities[1 * 4 + 2] = 3000.0;
        let traffic = TrafficGrid::from_densities(4, 4, densities).unwrap();
        let map = BandwidthMap::new(
            4,
            4,
            Cell::new(1, 0),
            Cell::new(1, 3),
            [Cell::new(0, 2)],
            0,
        )
        .unwrap();
        (map, traffic, params_with(1.0, Heading::East))
    }

    #[test]
    fn hop_optimal_route_is_strictly_slower_through_dense_cells() {
        // Hand oracle: five moves are needed either way (the high-bandwidth
        // cell forces a detour), so the hop-blind planner happily cuts
        // through the two delay-3.0 cells (3+3+1.5+1.5+1.5 = 10.5) while the
        // time-optimal route hugs the clear rim (5 * 1.5 = 7.5).
        let (map, traffic, params) = dense_shortcut_instance();

        let optimal = optimal_route(&map, &traffic, &params).unwrap();
        assert_eq!(optimal.total_time, 7.5);
        assert_eq!(optimal.actions(), vec![L, R, F, F, R]);
        assert!(optimal.feasible);

        let hop_blind = traffic_unaware_route(&map, &traffic, &params).unwrap();
        assert_eq!(hop_blind.total_hops, 5);
        assert_eq!(hop_blind.actions(), vec![F, F, L, R, R]);
        assert_eq!(hop_blind.total_time, 10.5);
        assert!(hop_blind.feasible);
        assert!(hop_blind.total_time > optimal.total_time);

        let brute = brute_force_optimal(&map, &traffic, &params, 12).unwrap();
        assert_eq!(brute.total_time, 7.5);
    }

    #[test]
    fn requirement_blind_route_skips_the_detour() {
        // On the dense-shortcut instance the unconstrained time optimum goes
        // straight down the middle row (3+3+1.5 = 7.5 over three moves),
        // never touching the high-bandwidth cell.
        let (map, traffic, params) = dense_shortcut_instance();
        let plan = bandwidth_unaware_route(&map, &traffic, &params).unwrap();
        assert_eq!(plan.actions(), vec![F, F, F]);
        assert_eq!(plan.total_time, 7.5);
        assert!(!plan.feasible);
        assert_eq!(plan.data_transferred, 0.0);
    }

    #[test]
    fn requirement_met_for_free_when_coverage_sits_on_the_fast_path() {
        // Clear middle row walled in by slower rows, high-bandwidth cell on
        // the unique time-optimal straight line: the requirement-blind route
        // is feasible with zero detour and matches the constrained optimum.
        let mut densities = vec![1200.0; 16];
        for col in 0..4 {
            densities[1 * 4 + col] = 0.0;
        }
        let traffic = TrafficGrid::from_densities(4, 4, densities).unwrap();
        let map = BandwidthMap::new(
            4,
            4,
            Cell::new(1, 0),
            Cell::new(1, 3),
            [Cell::new(1, 2)],
            0,
        )
        .unwrap();
        let params = params_with(1.0, Heading::East);

        let blind = bandwidth_unaware_route(&map, &traffic, &params).unwrap();
        assert_eq!(blind.actions(), vec![F, F, F]);
        assert_eq!(blind.total_time, 4.5);
        assert!(blind.feasible);
        assert_eq!(blind.data_transferred, 1.0);

        let optimal = optimal_route(&map, &traffic, &params).unwrap();
        assert_eq!(optimal.total_time, 4.5);

        let brute = brute_force_optimal(&map, &traffic, &params, 12).unwrap();
        assert_eq!(brute.total_time, 4.5);
    }

    #[test]
    fn uniform_density_makes_hops_and_time_agree() {
        let traffic = uniform(4, 4, 1000.0);
        let map = BandwidthMap::new(
            4,
            4,
            Cell::new(0, 0),
            Cell::new(3, 3),
            [Cell::new(2, 2)],
            0,
        )
        .unwrap();
        let params = params_with(1.0, Heading::South);
        let optimal = optimal_route(&map, &traffic, &params).unwrap();
        let hop_blind = traffic_unaware_route(&map, &traffic, &params).unwrap();
        assert_eq!(optimal.total_time, hop_blind.total_time);
        assert!(optimal.feasible && hop_blind.feasible);
    }

    #[test]
    fn infeasible_requirement_reports_no_route() {
        let traffic = uniform(3, 3, 1000.0);
        let map = BandwidthMap::new(3, 3, Cell::new(1, 0), Cell::new(1, 2), [], 0).unwrap();
        let params = params_with(1.0, Heading::North);

        let plan = optimal_route(&map, &traffic, &params).unwrap();
        assert!(!plan.feasible);
        assert!(plan.total_time.is_infinite());
        assert!(plan.steps.is_empty());

        let brute = brute_force_optimal(&map, &traffic, &params, 15).unwrap();
        assert!(!brute.feasible);
        assert!(brute.total_time.is_infinite());

        // The requirement-blind planner still routes, it just fails the
        // requirement.
        let blind = bandwidth_unaware_route(&map, &traffic, &params).unwrap();
        assert!(!blind.feasible);
        assert_eq!(blind.total_time, 3.0);
    }

    #[test]
    fn brute_force_refuses_big_inputs() {
        let traffic = uniform(6, 6, 1000.0);
        let map = BandwidthMap::new(6, 6, Cell::new(0, 0), Cell::new(5, 5), [], 0).unwrap();
        let params = params_with(0.0, Heading::North);
        assert!(matches!(
            brute_force_optimal(&map, &traffic, &params, 10),
            Err(PlanError::TooLarge(_))
        ));

        let traffic = uniform(3, 3, 1000.0);
        let map = BandwidthMap::new(3, 3, Cell::new(0, 0), Cell::new(2, 2), [], 0).unwrap();
        assert!(matches!(
            brute_force_optimal(&map, &traffic, &params, 21),
            Err(PlanError::TooLarge(_))
        ));
    }

    #[test]
    fn brute_force_matches_hand_shortest_on_two_by_two() {
        let traffic = uniform(2, 2, 1000.0);
        let map = BandwidthMap::new(2, 2, Cell::new(0, 0), Cell::new(1, 1), [], 0).unwrap();
        let params = params_with(0.0, Heading::North);
        let brute = brute_force_optimal(&map, &traffic, &params, 10).unwrap();
        assert_eq!(brute.total_time, 3.0);
        assert_eq!(brute.actions(), vec![R, R]);
        let plan = optimal_route(&map, &traffic, &params).unwrap();
        assert_eq!(plan.total_time, 3.0);
    }

    #[test]
    fn node_budget_exhaustion_reports_no_route() {
        let (map, traffic, params) = detour_instance();
        let plan = optimal_route_with_budget(&map, &traffic, &params, 10).unwrap();
        assert!(!plan.feasible);
        assert!(plan.total_time.is_infinite());
    }

    #[test]
    fn dimension_mismatch_is_a_config_error() {
        let traffic = uniform(4, 4, 1000.0);
        let map = BandwidthMap::new(3, 3, Cell::new(0, 0), Cell::new(2, 2), [], 0).unwrap();
        let params = params_with(0.0, Heading::North);
        assert!(matches!(
            optimal_route(&map, &traffic, &params),
            Err(PlanError::Config(_))
        ));
    }

    #[test]
    fn csv_output_is_stable() {
        let traffic = uniform(1, 3, 1000.0);
        let map = BandwidthMap::new(1, 3, Cell::new(0, 1), Cell::new(0, 0), [], 0).unwrap();
        let params = params_with(0.0, Heading::East);
        let plan = optimal_route(&map, &traffic, &params).unwrap();
        assert_eq!(
            plan_csv_string(&plan),
            "step,action,row,col,time_after,data_after\n\
             1,left,0,1,1.5,0\n\
             2,left,0,0,3,0\n"
        );
        assert_eq!(
            summary_csv_string(&plan),
            "total_time,total_hops,feasible\n3,2,true\n"
        );
    }

    #[test]
    fn replaying_the_plan_through_the_environment_reproduces_totals() {
        let (map, traffic, params) = dense_shortcut_instance();
        let plan = optimal_route(&map, &traffic, &params).unwrap();

        let mut env = env::Env::new(
            vec![map.clone()],
            traffic.clone(),
            RewardConfig::default(),
            params,
            0,
        )
        .unwrap();
        env.reset_on_map(0);
        let mut last = None;
        for action in plan.actions() {
            last = Some(env.step(action).unwrap());
        }
        let end = last.unwrap();
        assert_eq!(end.next_state.trip_time, plan.total_time);
        assert!(end.terminal);
        assert_eq!(
            params.requirement - end.next_state.data_remaining,
            plan.data_transferred
        );
    }

    fn gcd(mut a: u64, mut b: u64) -> u64 {
        while b != 0 {
            let t = a % b;
            a = b;
            b = t;
        }
        a
    }

    /// Random 4x4 instance whose densities are chosen so that every transfer
    /// amount, and the matching data resolution, is an exact binary
    /// fraction. On these instances quantized feasibility coincides with
    /// exact feasibility, which is what makes bitwise agreement between the
    /// two solvers a fair test.
    fn exact_instance(seed: u64) -> (BandwidthMap, TrafficGrid, EnvParams) {
        const REPRESENTATIVES: [f64; 4] = [768.0, 2048.0, 2560.0, 3072.0];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let densities: Vec<f64> = (0..16)
            .map(|_| REPRESENTATIVES[rng.random_range(0..4)])
            .collect();
        let sum: u64 = densities.iter().map(|&d| d as u64).sum();
        let traffic = TrafficGrid::from_densities(4, 4, densities).unwrap();

        let start_idx = rng.random_range(0..16);
        let mut dest_idx = rng.random_range(0..16);
        while dest_idx == start_idx {
            dest_idx = rng.random_range(0..16);
        }
        let cell_at = |i: usize| Cell::new(i / 4, i % 4);

        let k = rng.random_range(0..=3);
        let mut high_bw = Vec::new();
        while high_bw.len() < k {
            let c = cell_at(rng.random_range(0..16));
            if !high_bw.contains(&c) {
                high_bw.push(c);
            }
        }

        let requirement = rng.random_range(0..=2u64);
        let map = BandwidthMap::new(4, 4, cell_at(start_idx), cell_at(dest_idx), high_bw, 0)
            .unwrap();

        let mut params = EnvParams::new(requirement as f64);
        params.initial_heading = Heading::ALL[rng.random_range(0..4)];
        let g = if requirement == 0 {
            1 << 14
        } else {
            gcd(sum, requirement << 14)
        };
        params.quantizer = Some(g as f64 / 16384.0);
        (map, traffic, params)
    }

    #[test]
    fn search_agrees_with_brute_force_on_seeded_instances() {
        for seed in 0..40 {
            let (map, traffic, params) = exact_instance(seed);
            let plan = optimal_route(&map, &traffic, &params).unwrap();
            let brute = brute_force_optimal(&map, &traffic, &params, 20).unwrap();
            assert_eq!(
                plan.feasible, brute.feasible,
                "feasibility mismatch on seed {seed}"
            );
            if plan.feasible {
                assert_eq!(
                    plan.total_time, brute.total_time,
                    "trip time mismatch on seed {seed}"
                );
            }
        }
    }

    #[test]
    fn tighter_requirement_never_speeds_the_route() {
        for seed in 100..120 {
            let (map, traffic, mut params) = exact_instance(seed);
            params.quantizer = Some(1.0 / 256.0);
            let mut previous = 0.0;
            for requirement in [0.0, 1.0, 2.0, 3.0] {
                params.requirement = requirement;
                let plan = optimal_route(&map, &traffic, &params).unwrap();
                assert!(
                    plan.total_time >= previous,
                    "requirement {requirement} got faster on seed {seed}"
                );
                previous = plan.total_time;
            }
        }
    }

    #[test]
    fn extra_coverage_never_slows_the_route() {
        for seed in 200..220 {
            let (map, traffic, params) = exact_instance(seed);
            let base = optimal_route(&map, &traffic, &params).unwrap();

            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xc0ffee);
            let extra = loop {
                let c = Cell::new(rng.random_range(0..4), rng.random_range(0..4));
                if !map.is_high_bw(c) {
                    break c;
                }
            };
            let richer = BandwidthMap::new(
                4,
                4,
                map.start(),
                map.destination(),
                map.high_bw_cells().chain([extra]),
                0,
            )
            .unwrap();
            let improved = optimal_route(&richer, &traffic, &params).unwrap();
            assert!(
                improved.total_time <= base.total_time,
                "extra coverage slowed seed {seed}"
            );
        }
    }

    #[test]
    fn baselines_sandwich_the_optimum() {
        for seed in 300..330 {
            let (map, traffic, params) = exact_instance(seed);
            let optimal = optimal_route(&map, &traffic, &params).unwrap();
            let blind = bandwidth_unaware_route(&map, &traffic, &params).unwrap();
            let hop_blind = traffic_unaware_route(&map, &traffic, &params).unwrap();

            assert!(
                blind.total_time <= optimal.total_time,
                "relaxation exceeded the optimum on seed {seed}"
            );
            assert_eq!(
                optimal.feasible, hop_blind.feasible,
                "constrained solvers disagree on feasibility, seed {seed}"
            );
            if optimal.feasible {
                assert!(
                    optimal.total_time <= hop_blind.total_time,
                    "hop-blind route beat the optimum on seed {seed}"
                );
            }
        }
    }
}
