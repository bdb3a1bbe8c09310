//! Occupancy grids and breadth-first grid search.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::geometry::Point;

/// Cell adjacency used for grid paths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Connectivity {
    #[default]
    Four,
    Eight,
}

impl Connectivity {
    fn offsets(self) -> &'static [(i64, i64)] {
        match self {
            Connectivity::Four => &[(0, -1), (-1, 0), (1, 0), (0, 1)],
            Connectivity::Eight => &[
                (-1, -1),
                (0, -1),
                (1, -1),
                (-1, 0),
                (1, 0),
                (-1, 1),
                (0, 1),
                (1, 1),
            ],
        }
    }
}

/// A cell index: column, row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub col: usize,
    pub row: usize,
}

impl Cell {
    pub const fn new(col: usize, row: usize) -> Self {
        Self { col, row }
    }
}

/// Grid geometry: dimensions in cells, meters per cell, and the world
/// position of the lower-left corner of cell (0, 0).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridGeometry {
    pub width: usize,
    pub height: usize,
    pub resolution: f64,
    pub origin: Point,
}

impl GridGeometry {
    pub fn new(width: usize, height: usize, resolution: f64, origin: Point) -> Option<Self> {
        (width > 0
            && height > 0
            && resolution > 0.0
            && resolution.is_finite()
            && origin.is_finite())
        .then_some(Self {
            width,
            height,
            resolution,
            origin,
        })
    }

    pub fn cell_count(&self) -> usize {
        self.width * self.height
    }

    pub fn index(&self, cell: Cell) -> usize {
        cell.row * self.width + cell.col
    }

    pub fn cell_at(&self, idx: usize) -> Cell {
        Cell::new(idx % self.width, idx / self.width)
    }

    /// The cell containing `p`, or `None` outside the grid.
    pub fn cell_of(&self, p: Point) -> Option<Cell> {
        if !p.is_finite() {
            return None;
        }
        let cx = ((p.x - self.origin.x) / self.resolution).floor();
        let cy = ((p.y - self.origin.y) / self.resolution).floor();
        if cx < 0.0 || cy < 0.0 || cx >= self.width as f64 || cy >= self.height as f64 {
            return None;
        }
        Some(Cell::new(cx as usize, cy as usize))
    }

    pub fn center(&self, cell: Cell) -> Point {
        Point::new(
            self.origin.x + (cell.col as f64 + 0.5) * self.resolution,
            self.origin.y + (cell.row as f64 + 0.5) * self.resolution,
        )
    }

    pub fn neighbors(&self, cell: Cell, conn: Connectivity) -> impl Iterator<Item = Cell> + '_ {
        conn.offsets().iter().filter_map(move |&(dx, dy)| {
            let c = cell.col as i64 + dx;
            let r = cell.row as i64 + dy;
            (c >= 0 && r >= 0 && (c as usize) < self.width && (r as usize) < self.height)
                .then(|| Cell::new(c as usize, r as usize))
        })
    }

    /// Cells whose centers fall inside the axis-aligned rectangle.
    pub fn cells_in_rect(&self, rect: &Rect) -> Vec<Cell> {
        let mut out = Vec::new();
        let (x0, x1) = (rect.x0.min(rect.x1), rect.x0.max(rect.x1));
        let (y0, y1) = (rect.y0.min(rect.y1), rect.y0.max(rect.y1));
        for row in 0..self.height {
            for col in 0..self.width {
                let c = self.center(Cell::new(col, row));
                if c.x >= x0 && c.x <= x1 && c.y >= y0 && c.y <= y1 {
                    out.push(Cell::new(col, row));
                }
            }
        }
        out
    }
}

/// Axis-aligned rectangle in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

/// Per-cell knowledge state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellState {
    Unknown,
    Free,
    Obstacle,
}

/// Breadth-first search from `start` to `goal`. `passable` is consulted for
/// every cell except `start`. Neighbor expansion order is fixed, so the
/// returned path is deterministic. The path includes both endpoints.
pub fn bfs_path(
    geom: &GridGeometry,
    start: Cell,
    goal: Cell,
    conn: Connectivity,
    passable: impl Fn(Cell) -> bool,
) -> Option<Vec<Cell>> {
    if start == goal {
        return Some(vec![start]);
    }
    if !passable(goal) {
        return None;
    }
    let mut parent = vec![usize::MAX; geom.cell_count()];
    let start_idx = geom.index(start);
    parent[start_idx] = start_idx;
    let mut queue = VecDeque::from([start]);
    while let Some(cell) = queue.pop_front() {
        for next in geom.neighbors(cell, conn) {
            let idx = geom.index(next);
            if parent[idx] != usize::MAX || !passable(next) {
                continue;
            }
            parent[idx] = geom.index(cell);
            if next == goal {
                let mut path = vec![goal];
                let mut cur = idx;
                while cur != start_idx {
                    cur = parent[cur];
                    path.push(geom.cell_at(cur));
                }
                path.reverse();
                return Some(path);
            }
            queue.push_back(next);
        }
    }
    None
}

/// Step counts from `start` to every cell (`None` where unreachable).
pub fn bfs_distances(
    geom: &GridGeometry,
    start: Cell,
    conn: Connectivity,
    passable: impl Fn(Cell) -> bool,
) -> Vec<Option<usize>> {
    let mut dist = vec![None; geom.cell_count()];
    dist[geom.index(start)] = Some(0);
    let mut queue = VecDeque::from([start]);
    while let Some(cell) = queue.pop_front() {
        let d = dist[geom.index(cell)].unwrap_or(0);
        for next in geom.neighbors(cell, conn) {
            let idx = geom.index(next);
            if dist[idx].is_none() && passable(next) {
                dist[idx] = Some(d + 1);
                queue.push_back(next);
            }
        }
    }
    dist
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geom(w: usize, h: usize) -> GridGeometry {
        GridGeometry::new(w, h, 1.0, Point::new(0.0, 0.0)).unwrap()
    }

    #[test]
    fn cell_lookup_and_centers() {
        let g = GridGeometry::new(4, 3, 0.5, Point::new(-1.0, -1.0)).unwrap();
        assert_eq!(g.cell_of(Point::new(-1.0, -1.0)), Some(Cell::new(0, 0)));
        assert_eq!(g.cell_of(Point::new(0.99, 0.49)), Some(Cell::new(3, 2)));
        assert_eq!(g.cell_of(Point::new(1.0, 0.0)), None);
        assert_eq!(g.center(Cell::new(1, 1)), Point::new(-0.25, -0.25));
    }

    #[test]
    fn rejects_degenerate_geometry() {
        assert!(GridGeometry::new(0, 3, 1.0, Point::new(0.0, 0.0)).is_none());
        assert!(GridGeometry::new(3, 3, 0.0, Point::new(0.0, 0.0)).is_none());
    }

    #[test]
    fn bfs_routes_around_wall() {
        let g = geom(5, 5);
        // wall at col 2, rows 0..=3
        let wall = |c: Cell| c.col == 2 && c.row <= 3;
        let path = bfs_path(
            &g,
            Cell::new(0, 0),
            Cell::new(4, 0),
            Connectivity::Four,
            |c| !wall(c),
        )
        .unwrap();
        assert_eq!(path.first(), Some(&Cell::new(0, 0)));
        assert_eq!(path.last(), Some(&Cell::new(4, 0)));
        assert_eq!(path.len(), 13);
        let full_wall = |c: Cell| c.col == 2;
        assert!(bfs_path(
            &g,
            Cell::new(0, 0),
            Cell::new(4, 0),
            Connectivity::Four,
            |c| !full_wall(c)
        )
        .is_none());
    }

    #[test]
    fn eight_connected_cuts_corners() {
        let g = geom(5, 5);
        let p = bfs_path(
            &g,
            Cell::new(0, 0),
            Cell::new(4, 4),
            Connectivity::Eight,
            |_| true,
        )
        .unwrap();
        assert_eq!(p.len(), 5);
        let d = bfs_distances(&g, Cell::new(0, 0), Connectivity::Four, |_| true);
        assert_eq!(d[g.index(Cell::new(4, 4))], Some(8));
    }

    #[test]
    fn rect_rasterizes_by_cell_center() {
        let g = geom(10, 10);
        let cells = g.cells_in_rect(&Rect {
            x0: 2.0,
            y0: 2.0,
            x1: 4.0,
            y1: 3.0,
        });
        assert_eq!(cells, vec![Cell::new(2, 2), Cell::new(3, 2)]);
    }
}
