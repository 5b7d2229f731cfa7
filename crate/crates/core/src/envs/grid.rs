//! Noisy gridworlds, optionally with walls, and the Grid10 reset domain.

use std::collections::{HashSet, VecDeque};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::mdp::{Environment, MdpTemplate};
use crate::error::{validation, Result};

/// Action order used throughout: north, east, south, west. Row 0 is the
/// northern edge, so north decreases `y`.
pub const MOVES: [(i64, i64); 4] = [(0, -1), (1, 0), (0, 1), (-1, 0)];
pub const ACTION_NAMES: [&str; 4] = ["north", "east", "south", "west"];

/// Unit vector of each action with `y` pointing north, for arrow plots.
pub fn action_unit(a: usize) -> (f64, f64) {
    let (dx, dy) = MOVES[a];
    (dx as f64, -dy as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardCell {
    pub cell: [usize; 2],
    pub value: f64,
}

/// Arriving in `target` teleports the agent to `to`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResetRule {
    pub target: [usize; 2],
    pub to: [usize; 2],
}

fn default_sigma() -> f64 {
    0.5
}

fn default_gamma() -> f64 {
    0.95
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub width: usize,
    pub height: usize,
    /// Blocked edges, each given by the two adjacent cells `[[x, y], [x, y]]`.
    #[serde(default)]
    pub walls: Vec<[[usize; 2]; 2]>,
    #[serde(default)]
    pub rewards: Vec<RewardCell>,
    #[serde(default = "default_sigma")]
    pub noise_sigma: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    /// Start cell; `None` means a uniform initial distribution.
    #[serde(default)]
    pub start: Option<[usize; 2]>,
    #[serde(default)]
    pub reset: Option<ResetRule>,
}

impl GridSpec {
    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            walls: Vec::new(),
            rewards: Vec::new(),
            noise_sigma: default_sigma(),
            gamma: default_gamma(),
            start: None,
            reset: None,
        }
    }

    /// The Grid10 layout: `+1` on entering the far corner, which sends the
    /// agent back to the origin corner where every episode starts.
    pub fn grid10(width: usize, height: usize) -> Self {
        let target = [width.saturating_sub(1), height.saturating_sub(1)];
        Self {
            rewards: vec![RewardCell { cell: target, value: 1.0 }],
            start: Some([0, 0]),
            reset: Some(ResetRule { target, to: [0, 0] }),
            ..Self::empty(width, height)
        }
    }
}

/// Cell layout and wall structure.
#[derive(Clone, Debug, PartialEq)]
pub struct GridGeometry {
    pub width: usize,
    pub height: usize,
    blocked: HashSet<(usize, usize)>,
}

impl GridGeometry {
    pub fn new(width: usize, height: usize, walls: &[[[usize; 2]; 2]]) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(validation("grid dimensions must be positive"));
        }
        let mut geom = Self { width, height, blocked: HashSet::new() };
        for &[a, b] in walls {
            if !geom.in_bounds(a) || !geom.in_bounds(b) {
                return Err(validation(format!("wall {a:?}-{b:?} lies outside the grid")));
            }
            if a[0].abs_diff(b[0]) + a[1].abs_diff(b[1]) != 1 {
                return Err(validation(format!("wall {a:?}-{b:?} does not separate adjacent cells")));
            }
            let (i, j) = (geom.index(a[0], a[1]), geom.index(b[0], b[1]));
            geom.blocked.insert((i.min(j), i.max(j)));
        }
        Ok(geom)
    }

    pub fn n_states(&self) -> usize {
        self.width * self.height
    }

    fn in_bounds(&self, c: [usize; 2]) -> bool {
        c[0] < self.width && c[1] < self.height
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    #[inline]
    pub fn coords(&self, s: usize) -> (usize, usize) {
        (s % self.width, s / self.width)
    }

    fn offset(&self, s: usize, dx: i64, dy: i64) -> Option<usize> {
        let (x, y) = self.coords(s);
        let (nx, ny) = (x as i64 + dx, y as i64 + dy);
        if nx < 0 || ny < 0 || nx >= self.width as i64 || ny >= self.height as i64 {
            return None;
        }
        Some(self.index(nx as usize, ny as usize))
    }

    fn edge_open(&self, i: usize, j: usize) -> bool {
        !self.blocked.contains(&(i.min(j), i.max(j)))
    }

    /// The orthogonal neighbour in direction `(dx, dy)` if it exists and no
    /// wall is in the way.
    pub fn step(&self, s: usize, dx: i64, dy: i64) -> Option<usize> {
        self.offset(s, dx, dy).filter(|&t| self.edge_open(s, t))
    }

    /// Whether the 3x3 neighbour `t + (dx, dy)` can be reached from `t`;
    /// diagonals need one open L-shaped path.
    fn local(&self, t: usize, dx: i64, dy: i64) -> Option<usize> {
        match (dx, dy) {
            (0, 0) => Some(t),
            (0, _) | (_, 0) => self.step(t, dx, dy),
            _ => {
                let target = self.offset(t, dx, dy)?;
                let via_x = self.step(t, dx, 0).and_then(|m| self.step(m, 0, dy));
                let via_y = self.step(t, 0, dy).and_then(|m| self.step(m, dx, 0));
                (via_x.is_some() || via_y.is_some()).then_some(target)
            }
        }
    }

    /// Noisy-move distribution over next cells.
    ///
    /// Mass `exp(-|c - t|^2 / (2 sigma^2))` goes to each cell `c` of the 3x3
    /// block around the target `t`; mass of cells that are off the grid or cut
    /// off by walls stays at `s`. A blocked target keeps the agent in place.
    pub fn noisy_row(&self, s: usize, a: usize, sigma: f64) -> Vec<f64> {
        let mut row = vec![0.0; self.n_states()];
        let (dx, dy) = MOVES[a];
        let Some(t) = self.step(s, dx, dy) else {
            row[s] = 1.0;
            return row;
        };
        let mut total = 0.0;
        for oy in -1..=1i64 {
            for ox in -1..=1i64 {
                let d2 = (ox * ox + oy * oy) as f64;
                let w = if d2 == 0.0 { 1.0 } else { (-d2 / (2.0 * sigma * sigma)).exp() };
                if w == 0.0 {
                    continue;
                }
                let dest = self.local(t, ox, oy).unwrap_or(s);
                row[dest] += w;
                total += w;
            }
        }
        for p in &mut row {
            *p /= total;
        }
        row
    }

    /// Wall-respecting shortest-path distances to `goal`; `None` if unreachable.
    pub fn bfs_distances(&self, goal: usize) -> Vec<Option<u32>> {
        let mut dist = vec![None; self.n_states()];
        dist[goal] = Some(0);
        let mut queue = VecDeque::from([goal]);
        while let Some(u) = queue.pop_front() {
            let du = dist[u].unwrap_or(0);
            for &(dx, dy) in &MOVES {
                if let Some(v) = self.step(u, dx, dy) {
                    if dist[v].is_none() {
                        dist[v] = Some(du + 1);
                        queue.push_back(v);
                    }
                }
            }
        }
        dist
    }

    /// Integer cell coordinates, the input to the grid distance kernel.
    pub fn cell_points(&self) -> Vec<(i64, i64)> {
        (0..self.n_states())
            .map(|s| {
                let (x, y) = self.coords(s);
                (x as i64, y as i64)
            })
            .collect()
    }
}

/// A built gridworld: geometry plus the tabular environment.
#[derive(Clone, Debug)]
pub struct GridWorld {
    pub spec: GridSpec,
    pub geometry: GridGeometry,
    pub env: Environment,
}

fn validate_spec(spec: &GridSpec, geom: &GridGeometry) -> Result<()> {
    if !(spec.noise_sigma >= 0.0 && spec.noise_sigma.is_finite()) {
        return Err(validation("noise_sigma must be finite and nonnegative"));
    }
    if !(spec.gamma > 0.0 && spec.gamma < 1.0) {
        return Err(validation("gamma must lie in (0, 1)"));
    }
    for r in &spec.rewards {
        if !geom.in_bounds(r.cell) {
            return Err(validation(format!("reward cell {:?} lies outside the grid", r.cell)));
        }
        if !r.value.is_finite() {
            return Err(validation("reward values must be finite"));
        }
    }
    if let Some(start) = spec.start {
        if !geom.in_bounds(start) {
            return Err(validation(format!("start cell {start:?} lies outside the grid")));
        }
    }
    if let Some(reset) = spec.reset {
        if !geom.in_bounds(reset.target) || !geom.in_bounds(reset.to) {
            return Err(validation("reset cells must lie inside the grid"));
        }
    }
    if !spec.rewards.is_empty() {
        let origin = spec.start.unwrap_or([0, 0]);
        let dist = geom.bfs_distances(geom.index(origin[0], origin[1]));
        if spec.rewards.iter().all(|r| dist[geom.index(r.cell[0], r.cell[1])].is_none()) {
            return Err(validation("walls cut the start off from every reward cell"));
        }
    }
    Ok(())
}

pub fn build_gridworld(spec: &GridSpec) -> Result<GridWorld> {
    let geometry = GridGeometry::new(spec.width, spec.height, &spec.walls)?;
    validate_spec(spec, &geometry)?;
    let n = geometry.n_states();
    let physical: Vec<DMatrix<f64>> = (0..MOVES.len())
        .map(|a| {
            let mut m = DMatrix::zeros(n, n);
            for s in 0..n {
                for (next, p) in geometry.noisy_row(s, a, spec.noise_sigma).into_iter().enumerate() {
                    m[(s, next)] = p;
                }
            }
            m
        })
        .collect();

    let mut arrival_reward = vec![0.0; n];
    for r in &spec.rewards {
        arrival_reward[geometry.index(r.cell[0], r.cell[1])] += r.value;
    }
    let mut reset: Vec<usize> = (0..n).collect();
    if let Some(rule) = spec.reset {
        reset[geometry.index(rule.target[0], rule.target[1])] = geometry.index(rule.to[0], rule.to[1]);
    }
    let initial = match spec.start {
        Some([x, y]) => {
            let mut v = vec![0.0; n];
            v[geometry.index(x, y)] = 1.0;
            v
        }
        None => vec![1.0 / n as f64; n],
    };
    let template =
        MdpTemplate { n_states: n, n_actions: MOVES.len(), arrival_reward, reset, gamma: spec.gamma, initial };
    let env = Environment::table(physical, template)?;
    Ok(GridWorld { spec: spec.clone(), geometry, env })
}

/// Grid10 on a `width x height` grid with the given noise and discount.
pub fn build_grid10(width: usize, height: usize, noise_sigma: f64, gamma: f64) -> Result<GridWorld> {
    build_gridworld(&GridSpec { noise_sigma, gamma, ..GridSpec::grid10(width, height) })
}
