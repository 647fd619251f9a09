//! Maps used by the experiments besides the bundled office.

use std::collections::VecDeque;

use rand::Rng;

use crate::grid::{Cell, GridMap};

/// Corridors on rows 3, 5 and 7 lead from the shop column to room1, which
/// is the whole right column; row 1 is a slightly longer loop.
pub const CROSSROADS: &str = "MAP v1 19 9
###################
#................1#
#.###############1#
#................1#
#.###############1#
#S...............1#
#.###############1#
#................1#
###################
";

pub fn crossroads() -> GridMap {
    GridMap::parse(CROSSROADS).expect("bundled map parses")
}

/// Interior cells of corridor row `y` of [`CROSSROADS`].
pub fn crossroads_corridor(y: usize) -> Vec<Cell> {
    (2..=16).map(|x| Cell::new(x, y)).collect()
}

/// A `size` x `size` map with a wall border, random interior walls with
/// probability `density`, the shop in the top-left corner and rooms 1-3 in
/// the other corners. Cells cut off from the shop become walls; draws that
/// cut off a room are rejected.
pub fn random_map<R: Rng + ?Sized>(size: usize, density: f64, rng: &mut R) -> GridMap {
    assert!(size >= 5, "map too small");
    let corners = [
        (Cell::new(1, 1), 'S'),
        (Cell::new(size - 2, size - 2), '1'),
        (Cell::new(size - 2, 1), '2'),
        (Cell::new(1, size - 2), '3'),
    ];
    loop {
        let mut g = vec![vec!['#'; size]; size];
        for row in g.iter_mut().take(size - 1).skip(1) {
            for c in row.iter_mut().take(size - 1).skip(1) {
                *c = if rng.random::<f64>() < density { '#' } else { '.' };
            }
        }
        // keep a free ring around each corner place
        for (c, glyph) in corners {
            for dy in 0..=1 {
                for dx in 0..=1 {
                    let x = if c.x == 1 { c.x + dx } else { c.x - dx };
                    let y = if c.y == 1 { c.y + dy } else { c.y - dy };
                    g[y][x] = '.';
                }
            }
            g[c.y][c.x] = glyph;
        }
        let reach = reachable(&g, corners[0].0);
        if corners.iter().any(|(c, _)| !reach[c.y][c.x]) {
            continue;
        }
        for (y, row) in g.iter_mut().enumerate() {
            for (x, c) in row.iter_mut().enumerate() {
                if !reach[y][x] {
                    *c = '#';
                }
            }
        }
        let mut text = format!("MAP v1 {size} {size}\n");
        for row in &g {
            text.extend(row.iter());
            text.push('\n');
        }
        return GridMap::parse(&text).expect("generated map is valid");
    }
}

fn reachable(g: &[Vec<char>], from: Cell) -> Vec<Vec<bool>> {
    let mut seen = vec![vec![false; g[0].len()]; g.len()];
    let mut queue = VecDeque::from([from]);
    seen[from.y][from.x] = true;
    while let Some(c) = queue.pop_front() {
        for (dx, dy) in [(0i64, -1i64), (0, 1), (-1, 0), (1, 0)] {
            let (x, y) = ((c.x as i64 + dx) as usize, (c.y as i64 + dy) as usize);
            if g[y][x] != '#' && !seen[y][x] {
                seen[y][x] = true;
                queue.push_back(Cell::new(x, y));
            }
        }
    }
    seen
}
