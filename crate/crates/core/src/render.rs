//! Text and portable-pixmap renders of layouts, trajectories and occupancy grids.
//!
//! Text legend: `.` empty, `#` lava, `o` path, `G` goal, `S` start, `*` a
//! visited cell, `@` the final position. Occupancy text shows visit counts
//! `1`–`9` and `+` for ten or more.

use crate::envs::Outcome;
use crate::envs::{Cell, MazeLayout, Pos};
use crate::error::{Error, Result};
use crate::eval::EpisodeRecord;

/// Per-cell visit counts over a set of trajectories on one grid size.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Occupancy {
    pub width: usize,
    pub height: usize,
    pub counts: Vec<u32>,
}

impl Occupancy {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            counts: vec![0; width * height],
        }
    }

    /// Counts every position after the start of `trajectory`.
    pub fn add(&mut self, trajectory: &[Pos]) -> Result<()> {
        for p in trajectory.iter().skip(1) {
            if p.x < 0 || p.y < 0 || p.x as usize >= self.width || p.y as usize >= self.height {
                return Err(Error::InvalidArgument(format!("position {p:?} outside the grid")));
            }
            self.counts[p.y as usize * self.width + p.x as usize] += 1;
        }
        Ok(())
    }

    pub fn get(&self, p: Pos) -> u32 {
        self.counts[p.y as usize * self.width + p.x as usize]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }

    pub fn max(&self) -> u32 {
        self.counts.iter().copied().max().unwrap_or(0)
    }
}

/// Fraction of evaluation steps that land on Path or Lava cells, over all episodes.
pub fn maze_cell_fraction(layouts: &[MazeLayout], episodes: &[EpisodeRecord]) -> f64 {
    let (mut inside, mut total) = (0u64, 0u64);
    for (l, e) in layouts.iter().zip(episodes) {
        for p in e.positions.iter().skip(1) {
            total += 1;
            if matches!(l.cell(*p), Some(Cell::Path | Cell::Lava)) {
                inside += 1;
            }
        }
    }
    if total == 0 {
        0.0
    } else {
        inside as f64 / total as f64
    }
}

/// Fraction of the steps of successful episodes that land inside the maze region.
pub fn region_step_fraction(layouts: &[MazeLayout], episodes: &[EpisodeRecord]) -> f64 {
    let (mut inside, mut total) = (0u64, 0u64);
    for (l, e) in layouts.iter().zip(episodes) {
        if e.outcome != Outcome::Success {
            continue;
        }
        let r = l.region();
        for p in e.positions.iter().skip(1) {
            total += 1;
            if r.contains(*p) {
                inside += 1;
            }
        }
    }
    if total == 0 {
        0.0
    } else {
        inside as f64 / total as f64
    }
}

/// Layout with one trajectory drawn over it.
pub fn trajectory_text(layout: &MazeLayout, trajectory: &[Pos]) -> String {
    let mut grid: Vec<Vec<char>> = layout.to_text().lines().map(|l| l.chars().collect()).collect();
    for (i, p) in trajectory.iter().enumerate().skip(1) {
        let c = &mut grid[p.y as usize][p.x as usize];
        if i + 1 == trajectory.len() {
            *c = '@';
        } else if *c != 'S' && *c != 'G' {
            *c = '*';
        }
    }
    join(grid)
}

/// Layout with visit counts drawn over it.
pub fn occupancy_text(layout: &MazeLayout, occ: &Occupancy) -> String {
    let mut grid: Vec<Vec<char>> = layout.to_text().lines().map(|l| l.chars().collect()).collect();
    for (y, row) in grid.iter_mut().enumerate() {
        for (x, c) in row.iter_mut().enumerate() {
            let n = occ.get(Pos::new(x as i32, y as i32));
            if n > 0 {
                *c = if n > 9 {
                    '+'
                } else {
                    char::from_digit(n, 10).expect("digit")
                };
            }
        }
    }
    join(grid)
}

fn join(grid: Vec<Vec<char>>) -> String {
    grid.into_iter()
        .map(|r| r.into_iter().chain(std::iter::once('\n')).collect::<String>())
        .collect()
}

fn cell_color(c: Cell) -> [u8; 3] {
    match c {
        Cell::Empty => [235, 235, 235],
        Cell::Lava => [200, 50, 40],
        Cell::Path => [60, 150, 70],
        Cell::Goal => [240, 200, 20],
    }
}

const START_COLOR: [u8; 3] = [70, 70, 200];
const TRACE_COLOR: [u8; 3] = [20, 60, 230];

/// Binary PPM (`P6`) of the layout with each cell drawn as a `scale × scale`
/// block, blended towards blue in proportion to its visit count.
pub fn ppm(layout: &MazeLayout, occ: Option<&Occupancy>, scale: usize) -> Result<Vec<u8>> {
    if scale == 0 {
        return Err(Error::InvalidArgument("render scale must be ≥ 1".into()));
    }
    let (w, h) = (layout.width(), layout.height());
    let max = occ.map_or(0, Occupancy::max).max(1) as f64;
    let mut out = format!("P6\n{} {}\n255\n", w * scale, h * scale).into_bytes();
    for y in 0..h * scale {
        for x in 0..w * scale {
            let p = Pos::new((x / scale) as i32, (y / scale) as i32);
            let base = if p == layout.start() {
                START_COLOR
            } else {
                cell_color(layout.cell(p).expect("in bounds"))
            };
            let t = occ.map_or(0.0, |o| o.get(p) as f64 / max);
            let px = if t > 0.0 {
                let a = 0.35 + 0.65 * t;
                std::array::from_fn(|i| ((1.0 - a) * base[i] as f64 + a * TRACE_COLOR[i] as f64).round() as u8)
            } else {
                base
            };
            out.extend_from_slice(&px);
        }
    }
    Ok(out)
}
