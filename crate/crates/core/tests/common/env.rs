//! Independent checks of generated layouts and of the maze reward.

use std::collections::{HashSet, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sitt_core::envs::color_maze::MOVES;
use sitt_core::envs::{generate_path, Cell, MazeDims, MazeEnv, MazeLayout, Outcome, Pos};

/// Maximal straight runs of the walk `start, path…` as `(dx, dy, length)`.
pub fn segments(l: &MazeLayout) -> Vec<(i32, i32, usize)> {
    let mut walk = vec![l.start()];
    walk.extend_from_slice(l.path());
    let mut runs: Vec<(i32, i32, usize)> = Vec::new();
    for w in walk.windows(2) {
        let d = (w[1].x - w[0].x, w[1].y - w[0].y);
        match runs.last_mut() {
            Some(r) if (r.0, r.1) == d => r.2 += 1,
            _ => runs.push((d.0, d.1, 1)),
        }
    }
    runs
}

fn reachable(l: &MazeLayout, from: Pos, passable: impl Fn(Cell) -> bool) -> HashSet<Pos> {
    let mut seen = HashSet::from([from]);
    let mut queue = VecDeque::from([from]);
    while let Some(p) = queue.pop_front() {
        for (dx, dy) in MOVES {
            let q = Pos::new(p.x + dx, p.y + dy);
            if let Some(c) = l.cell(q) {
                if passable(c) && seen.insert(q) {
                    queue.push_back(q);
                }
            }
        }
    }
    seen
}

/// Every construction rule a layout breaks, as readable messages.
pub fn layout_violations(l: &MazeLayout, dims: MazeDims) -> Vec<String> {
    let mut v = Vec::new();
    let g = dims.grid_size as i32;
    let b = ((dims.grid_size - dims.region_size) / 2) as i32;
    let in_region = |p: Pos| p.x >= b && p.x < g - b && p.y >= b && p.y < g - b;
    if l.width() != dims.grid_size || l.height() != dims.grid_size {
        v.push(format!("grid {}×{}", l.width(), l.height()));
    }
    for y in 0..g {
        for x in 0..g {
            let p = Pos::new(x, y);
            let c = l.cell(p).expect("in grid");
            if !in_region(p) && matches!(c, Cell::Lava | Cell::Path) {
                v.push(format!("{c:?} in the border at {p:?}"));
            }
            if in_region(p) && matches!(c, Cell::Empty | Cell::Goal) {
                v.push(format!("{c:?} inside the region at {p:?}"));
            }
        }
    }
    let runs = segments(l);
    for (i, &(dx, dy, n)) in runs.iter().enumerate() {
        if i % 2 == 0 {
            if (dx, dy) != (0, -1) || !(3..=5).contains(&n) {
                v.push(format!("segment {i} should go up 3–5 cells, got ({dx},{dy})×{n}"));
            }
        } else if dy != 0 || !(1..=4).contains(&n) {
            v.push(format!(
                "segment {i} should be horizontal with 1–4 cells, got ({dx},{dy})×{n}"
            ));
        }
    }
    if runs.len() % 2 != 0 {
        v.push("path does not end with a horizontal segment".into());
    }
    let last = *l.path().last().expect("non-empty path");
    if last.y != b || l.goal() != Pos::new(last.x, b - 1) || l.cell(l.goal()) != Some(Cell::Goal) {
        v.push(format!(
            "goal {:?} is not directly above the last path cell {last:?}",
            l.goal()
        ));
    }
    if l.start().y != g - b || !in_region(Pos::new(l.start().x, g - b - 1)) {
        v.push(format!("start {:?} is not on the border below the region", l.start()));
    }
    let path_cells: HashSet<Pos> = l.path().iter().copied().collect();
    if path_cells.len() != l.path().len() {
        v.push("path crosses itself".into());
    }
    let on_path = reachable(l, l.path()[0], |c| c == Cell::Path);
    if on_path != path_cells {
        v.push("path cells are not one connected chain".into());
    }
    let all_path = (0..g)
        .flat_map(|y| (0..g).map(move |x| Pos::new(x, y)))
        .filter(|&p| l.cell(p) == Some(Cell::Path))
        .count();
    if all_path != path_cells.len() {
        v.push("stray Path cells".into());
    }
    if !reachable(l, l.start(), |c| c != Cell::Lava).contains(&l.goal()) {
        v.push("goal unreachable from the start".into());
    }
    v
}

fn action_towards(from: Pos, to: Pos) -> usize {
    MOVES
        .iter()
        .position(|&(dx, dy)| from.x + dx == to.x && from.y + dy == to.y)
        .expect("adjacent cells")
}

/// Replays trajectories and compares the summed reward of each episode with
/// `10·success + 0.5·new path cells − 0.5·revisits − 0.1·fail` counted from
/// the visited positions. Even episodes take uniform random actions; odd ones
/// walk the path forwards with probability 0.8 and backwards otherwise, so
/// revisits and successes occur. Returns the largest absolute mismatch and
/// the number of successful episodes.
pub fn reward_identity(layout: &MazeLayout, episodes: usize, horizon: u32, seed: u64) -> (f64, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut env = MazeEnv::new(layout.clone(), horizon);
    let mut route = vec![layout.start()];
    route.extend_from_slice(layout.path());
    route.push(layout.goal());
    let mut worst: f64 = 0.0;
    let mut successes = 0;
    for ep in 0..episodes {
        env.reset();
        let mut pos = layout.start();
        let mut k = 0;
        let (mut total, mut fresh, mut revisits, mut steps) = (0.0, 0u32, 0u32, 0u32);
        let mut seen = HashSet::new();
        let outcome = loop {
            let a = if ep % 2 == 0 {
                rng.random_range(0..4)
            } else if k == 0 || rng.random_bool(0.8) {
                k += 1;
                action_towards(route[k - 1], route[k])
            } else {
                k -= 1;
                action_towards(route[k + 1], route[k])
            };
            let t = env.step(a).unwrap();
            total += t.reward;
            steps += 1;
            let q = Pos::new(pos.x + MOVES[a].0, pos.y + MOVES[a].1);
            if layout.cell(q).is_some() {
                pos = q;
            }
            if layout.cell(q) == Some(Cell::Path) {
                if seen.insert(pos) {
                    fresh += 1;
                } else {
                    revisits += 1;
                }
            }
            assert_eq!(env.state.pos, pos, "position diverged from the independent walk");
            if t.outcome != Outcome::Running {
                assert!(steps <= horizon);
                break t.outcome;
            }
        };
        successes += usize::from(outcome == Outcome::Success);
        let success = f64::from(u8::from(outcome == Outcome::Success));
        let fail = f64::from(u8::from(outcome == Outcome::Fail));
        let expected = 10.0 * success + 0.5 * fresh as f64 - 0.5 * revisits as f64 - 0.1 * fail;
        worst = worst.max((total - expected).abs());
    }
    (worst, successes)
}

/// Layout properties over `count` consecutive seeds; returns the failing seeds with reasons.
pub fn layout_suite(count: u64, dims: MazeDims) -> Vec<(u64, Vec<String>)> {
    (0..count)
        .filter_map(|seed| {
            let l = generate_path(seed, dims).expect("generation never fails");
            let v = layout_violations(&l, dims);
            (!v.is_empty()).then_some((seed, v))
        })
        .collect()
}
