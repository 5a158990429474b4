//! Color Maze layouts: procedural path generation and the plain-text grid format.
//!
//! The grid holds a square maze region centered with an empty border around it.
//! A single path crosses the region from bottom to top. Generation walks upward
//! from the start cell (on the border, directly below the entry column),
//! alternating vertical segments of 3–5 cells and horizontal segments of 1–4
//! cells. Vertical segments always move up; horizontal segments move left or
//! right. Once a vertical segment reaches the top row of the region, one last
//! horizontal segment runs along that row and the Goal is placed on the border
//! directly above the final path cell. Every other region cell is Lava.
//!
//! Sampled segments that would leave the region (or leave 1–2 rows that no
//! vertical segment can fill) are resampled up to [`SEGMENT_RETRIES`] times;
//! after that the whole path is restarted, at most [`MAX_RESTARTS`] times.
//!
//! Text format, one character per cell: `.` Empty, `#` Lava, `o` Path,
//! `G` Goal, `S` Start (an Empty cell).

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

pub const SEGMENT_RETRIES: usize = 16;
pub const MAX_RESTARTS: usize = 64;
pub const VERTICAL_LEN: (u32, u32) = (3, 5);
pub const HORIZONTAL_LEN: (u32, u32) = (1, 4);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Cell {
    Empty,
    Lava,
    Path,
    Goal,
}

impl Cell {
    pub fn to_char(self) -> char {
        match self {
            Cell::Empty => '.',
            Cell::Lava => '#',
            Cell::Path => 'o',
            Cell::Goal => 'G',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Pos {
    pub x: i32,
    pub y: i32,
}

impl Pos {
    pub const fn new(x: i32, y: i32) -> Self {
        Self { x, y }
    }

    pub fn manhattan(self, other: Pos) -> i32 {
        (self.x - other.x).abs() + (self.y - other.y).abs()
    }
}

/// Grid and maze-region sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MazeDims {
    pub grid_size: usize,
    pub region_size: usize,
}

impl Default for MazeDims {
    fn default() -> Self {
        Self {
            grid_size: 21,
            region_size: 15,
        }
    }
}

impl MazeDims {
    /// Desk-scale maze: 11×11 grid, 7×7 region.
    pub fn scaled() -> Self {
        Self {
            grid_size: 11,
            region_size: 7,
        }
    }

    pub fn border(&self) -> usize {
        (self.grid_size - self.region_size) / 2
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.region_size >= VERTICAL_LEN.0 as usize
            && self.grid_size > self.region_size
            && (self.grid_size - self.region_size) % 2 == 0
            && self.border() >= 1;
        if !ok {
            return Err(Error::Config(format!(
                "maze region {0}×{0} must be at least 3 wide and centered in the {1}×{1} grid with a border of at least one cell",
                self.region_size, self.grid_size
            )));
        }
        Ok(())
    }
}

/// Axis-aligned rectangle of cells `[x0, x0 + w) × [y0, y0 + h)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Region {
    pub x0: i32,
    pub y0: i32,
    pub w: i32,
    pub h: i32,
}

impl Region {
    pub fn contains(&self, p: Pos) -> bool {
        p.x >= self.x0 && p.x < self.x0 + self.w && p.y >= self.y0 && p.y < self.y0 + self.h
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MazeLayout {
    width: usize,
    height: usize,
    region: Region,
    cells: Vec<Cell>,
    start: Pos,
    goal: Pos,
    /// Path cells in order from the entry to the cell below the goal.
    path: Vec<Pos>,
}

impl MazeLayout {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn region(&self) -> Region {
        self.region
    }

    pub fn start(&self) -> Pos {
        self.start
    }

    pub fn goal(&self) -> Pos {
        self.goal
    }

    pub fn path(&self) -> &[Pos] {
        &self.path
    }

    pub fn in_bounds(&self, p: Pos) -> bool {
        p.x >= 0 && p.y >= 0 && (p.x as usize) < self.width && (p.y as usize) < self.height
    }

    pub fn index(&self, p: Pos) -> usize {
        p.y as usize * self.width + p.x as usize
    }

    /// Cell at `p`, or `None` outside the grid.
    pub fn cell(&self, p: Pos) -> Option<Cell> {
        self.in_bounds(p).then(|| self.cells[self.index(p)])
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    /// Checks every structural invariant of a layout.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Generation(m));
        if self.cells.len() != self.width * self.height {
            return bad("cell count does not match grid size".into());
        }
        if self.path.is_empty() {
            return bad("empty path".into());
        }
        if self.cell(self.goal) != Some(Cell::Goal) {
            return bad("goal cell missing".into());
        }
        if self.region.contains(self.start) || self.cell(self.start) != Some(Cell::Empty) {
            return bad("start must be an empty border cell".into());
        }
        if self.start.manhattan(self.path[0]) != 1 {
            return bad("path entry is not adjacent to the start".into());
        }
        if self.goal.manhattan(*self.path.last().expect("non-empty")) != 1 {
            return bad("goal is not adjacent to the final path cell".into());
        }
        for w in self.path.windows(2) {
            if w[0].manhattan(w[1]) != 1 {
                return bad(format!("path broken between {:?} and {:?}", w[0], w[1]));
            }
        }
        let mut on_path = vec![false; self.cells.len()];
        for &p in &self.path {
            if !self.region.contains(p) {
                return bad(format!("path cell {p:?} outside the maze region"));
            }
            let i = self.index(p);
            if on_path[i] {
                return bad(format!("path revisits {p:?}"));
            }
            on_path[i] = true;
        }
        for y in 0..self.height as i32 {
            for x in 0..self.width as i32 {
                let p = Pos::new(x, y);
                let c = self.cells[self.index(p)];
                let expected = if p == self.goal {
                    Cell::Goal
                } else if on_path[self.index(p)] {
                    Cell::Path
                } else if self.region.contains(p) {
                    Cell::Lava
                } else {
                    Cell::Empty
                };
                if c != expected {
                    return bad(format!("cell {p:?} is {c:?}, expected {expected:?}"));
                }
            }
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity((self.width + 1) * self.height);
        for y in 0..self.height as i32 {
            for x in 0..self.width as i32 {
                let p = Pos::new(x, y);
                s.push(if p == self.start {
                    'S'
                } else {
                    self.cells[self.index(p)].to_char()
                });
            }
            s.push('\n');
        }
        s
    }

    /// Parses the text grid. The maze region is the bounding box of Lava and
    /// Path cells; the path order is recovered by walking from the start.
    pub fn from_text(text: &str) -> Result<Self> {
        let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
        let height = lines.len();
        let width = lines.first().map_or(0, |l| l.chars().count());
        if height == 0 || width == 0 {
            return Err(Error::LayoutParse {
                line: 1,
                message: "empty layout".into(),
            });
        }
        let mut cells = Vec::with_capacity(width * height);
        let mut start = None;
        let mut goal = None;
        for (y, line) in lines.iter().enumerate() {
            let chars: Vec<char> = line.chars().collect();
            if chars.len() != width {
                return Err(Error::LayoutParse {
                    line: y + 1,
                    message: format!("expected {width} cells, found {}", chars.len()),
                });
            }
            for (x, ch) in chars.into_iter().enumerate() {
                let p = Pos::new(x as i32, y as i32);
                let cell = match ch {
                    '.' => Cell::Empty,
                    '#' => Cell::Lava,
                    'o' => Cell::Path,
                    'G' => Cell::Goal,
                    'S' => Cell::Empty,
                    other => {
                        return Err(Error::LayoutParse {
                            line: y + 1,
                            message: format!("unknown cell character {other:?}"),
                        })
                    }
                };
                let slot = match ch {
                    'S' => Some(&mut start),
                    'G' => Some(&mut goal),
                    _ => None,
                };
                if let Some(slot) = slot {
                    if slot.replace(p).is_some() {
                        return Err(Error::LayoutParse {
                            line: y + 1,
                            message: format!("duplicate {ch:?} cell"),
                        });
                    }
                }
                cells.push(cell);
            }
        }
        let start = start.ok_or(Error::LayoutParse {
            line: height,
            message: "no start cell".into(),
        })?;
        let goal = goal.ok_or(Error::LayoutParse {
            line: height,
            message: "no goal cell".into(),
        })?;
        let (mut x0, mut y0, mut x1, mut y1) = (i32::MAX, i32::MAX, i32::MIN, i32::MIN);
        for (i, c) in cells.iter().enumerate() {
            if matches!(c, Cell::Lava | Cell::Path) {
                let (x, y) = ((i % width) as i32, (i / width) as i32);
                x0 = x0.min(x);
                y0 = y0.min(y);
                x1 = x1.max(x);
                y1 = y1.max(y);
            }
        }
        if x0 > x1 {
            return Err(Error::LayoutParse {
                line: 1,
                message: "no maze region".into(),
            });
        }
        let region = Region {
            x0,
            y0,
            w: x1 - x0 + 1,
            h: y1 - y0 + 1,
        };
        let mut layout = Self {
            width,
            height,
            region,
            cells,
            start,
            goal,
            path: Vec::new(),
        };
        layout.path = layout.walk_path();
        layout.validate().map_err(|e| Error::LayoutParse {
            line: 0,
            message: e.to_string(),
        })?;
        Ok(layout)
    }

    fn walk_path(&self) -> Vec<Pos> {
        let mut path = Vec::new();
        let mut prev = self.start;
        let mut cur = self.start;
        loop {
            let next = neighbors(cur)
                .into_iter()
                .find(|&n| n != prev && self.cell(n) == Some(Cell::Path) && !path.contains(&n));
            match next {
                Some(n) => {
                    path.push(n);
                    prev = cur;
                    cur = n;
                }
                None => return path,
            }
        }
    }
}

/// Up, right, down, left.
pub fn neighbors(p: Pos) -> [Pos; 4] {
    [
        Pos::new(p.x, p.y - 1),
        Pos::new(p.x + 1, p.y),
        Pos::new(p.x, p.y + 1),
        Pos::new(p.x - 1, p.y),
    ]
}

/// Generates the layout for `seed`; a pure function of `(seed, dims)`.
pub fn generate_path(seed: u64, dims: MazeDims) -> Result<MazeLayout> {
    dims.validate()?;
    let mut r = rng::from_seed(seed);
    let size = dims.grid_size as i32;
    let border = dims.border() as i32;
    let region = Region {
        x0: border,
        y0: border,
        w: dims.region_size as i32,
        h: dims.region_size as i32,
    };
    for _ in 0..MAX_RESTARTS {
        let entry_x = region.x0 + r.random_range(0..region.w as u32) as i32;
        let start = Pos::new(entry_x, region.y0 + region.h);
        if let Some(path) = try_path(&mut r, region, start) {
            let last = *path.last().expect("non-empty path");
            let goal = Pos::new(last.x, region.y0 - 1);
            let mut cells = vec![Cell::Empty; (size * size) as usize];
            for y in region.y0..region.y0 + region.h {
                for x in region.x0..region.x0 + region.w {
                    cells[(y * size + x) as usize] = Cell::Lava;
                }
            }
            for p in &path {
                cells[(p.y * size + p.x) as usize] = Cell::Path;
            }
            cells[(goal.y * size + goal.x) as usize] = Cell::Goal;
            let layout = MazeLayout {
                width: dims.grid_size,
                height: dims.grid_size,
                region,
                cells,
                start,
                goal,
                path,
            };
            debug_assert!(layout.validate().is_ok());
            return Ok(layout);
        }
    }
    Err(Error::Generation(format!(
        "no valid path after {MAX_RESTARTS} restarts (seed {seed})"
    )))
}

fn try_path<R: Rng>(r: &mut R, region: Region, start: Pos) -> Option<Vec<Pos>> {
    let mut path = Vec::new();
    let mut cur = start;
    let mut rows_left = region.h as u32;
    loop {
        let v = (0..SEGMENT_RETRIES)
            .map(|_| r.random_range(VERTICAL_LEN.0..=VERTICAL_LEN.1))
            .find(|&v| v <= rows_left && (v == rows_left || rows_left - v >= VERTICAL_LEN.0))?;
        for _ in 0..v {
            cur.y -= 1;
            path.push(cur);
        }
        rows_left -= v;
        let (dir, h) = (0..SEGMENT_RETRIES)
            .map(|_| {
                let dir: i32 = if r.random_bool(0.5) { 1 } else { -1 };
                (dir, r.random_range(HORIZONTAL_LEN.0..=HORIZONTAL_LEN.1) as i32)
            })
            .find(|&(dir, h)| {
                let end = cur.x + dir * h;
                end >= region.x0 && end < region.x0 + region.w
            })?;
        for _ in 0..h {
            cur.x += dir;
            path.push(cur);
        }
        if rows_left == 0 {
            return Some(path);
        }
    }
}
