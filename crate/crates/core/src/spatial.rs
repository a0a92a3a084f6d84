//! Uniform grid for cutoff-radius neighbour queries.

use crate::geometry::{Rect, Vec2};

#[derive(Debug, Clone)]
pub struct NeighborGrid {
    origin: Vec2,
    cell: f64,
    nx: usize,
    ny: usize,
    /// Agent indices sorted by cell; `starts[c]..starts[c + 1]` is cell `c`.
    sorted: Vec<usize>,
    starts: Vec<usize>,
}

impl NeighborGrid {
    /// Grid covering `bounds` (padded by one cell) with cells of side `cutoff`.
    pub fn new(bounds: Rect, cutoff: f64) -> Self {
        let origin = bounds.min - Vec2::new(cutoff, cutoff);
        let nx = ((bounds.width() + 2.0 * cutoff) / cutoff).ceil() as usize + 1;
        let ny = ((bounds.height() + 2.0 * cutoff) / cutoff).ceil() as usize + 1;
        Self {
            origin,
            cell: cutoff,
            nx,
            ny,
            sorted: Vec::new(),
            starts: vec![0; nx * ny + 1],
        }
    }

    fn cell_of(&self, p: Vec2) -> (usize, usize) {
        let ix = ((p.x - self.origin.x) / self.cell).floor();
        let iy = ((p.y - self.origin.y) / self.cell).floor();
        (
            (ix.max(0.0) as usize).min(self.nx - 1),
            (iy.max(0.0) as usize).min(self.ny - 1),
        )
    }

    /// Counting-sort the positions into cells.
    pub fn rebuild(&mut self, positions: impl Iterator<Item = Vec2> + Clone) {
        let cells: Vec<usize> = positions
            .map(|p| {
                let (ix, iy) = self.cell_of(p);
                iy * self.nx + ix
            })
            .collect();
        self.starts.iter_mut().for_each(|s| *s = 0);
        for &c in &cells {
            self.starts[c + 1] += 1;
        }
        for c in 0..self.nx * self.ny {
            self.starts[c + 1] += self.starts[c];
        }
        let mut fill = self.starts.clone();
        self.sorted.clear();
        self.sorted.resize(cells.len(), 0);
        for (i, &c) in cells.iter().enumerate() {
            self.sorted[fill[c]] = i;
            fill[c] += 1;
        }
    }

    fn bucket(&self, ix: usize, iy: usize) -> &[usize] {
        let c = iy * self.nx + ix;
        &self.sorted[self.starts[c]..self.starts[c + 1]]
    }

    /// Visit every unordered pair `(i, j)` whose cells are adjacent, each
    /// exactly once. Callers apply the exact distance cutoff themselves.
    pub fn for_each_candidate_pair(&self, mut f: impl FnMut(usize, usize)) {
        const FORWARD: [(isize, isize); 4] = [(1, 0), (-1, 1), (0, 1), (1, 1)];
        for iy in 0..self.ny {
            for ix in 0..self.nx {
                let here = self.bucket(ix, iy);
                for (a, &i) in here.iter().enumerate() {
                    for &j in &here[a + 1..] {
                        f(i, j);
                    }
                }
                for (dx, dy) in FORWARD {
                    let (jx, jy) = (ix as isize + dx, iy as isize + dy);
                    if jx < 0 || jy < 0 || jx >= self.nx as isize || jy >= self.ny as isize {
                        continue;
                    }
                    for &j in self.bucket(jx as usize, jy as usize) {
                        for &i in here {
                            f(i, j);
                        }
                    }
                }
            }
        }
    }

    /// Indices in the 3x3 block of cells around `p` (superset of everything
    /// within one cell side of `p`).
    pub fn candidates_near(&self, p: Vec2) -> Vec<usize> {
        let (cx, cy) = self.cell_of(p);
        let mut out = Vec::new();
        for iy in cy.saturating_sub(1)..=(cy + 1).min(self.ny - 1) {
            for ix in cx.saturating_sub(1)..=(cx + 1).min(self.nx - 1) {
                out.extend_from_slice(self.bucket(ix, iy));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeSet;

    #[test]
    fn pairs_match_brute_force() {
        let bounds = Rect {
            min: Vec2::new(0.0, 0.0),
            max: Vec2::new(12.0, 7.0),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<Vec2> = (0..200)
            .map(|_| Vec2::new(rng.gen_range(0.0..12.0), rng.gen_range(0.0..7.0)))
            .collect();
        let cutoff = 1.5;
        let mut grid = NeighborGrid::new(bounds, cutoff);
        grid.rebuild(pts.iter().copied());

        let mut seen = BTreeSet::new();
        grid.for_each_candidate_pair(|i, j| {
            let key = (i.min(j), i.max(j));
            assert!(seen.insert(key), "pair {key:?} visited twice");
        });
        for i in 0..pts.len() {
            for j in i + 1..pts.len() {
                if pts[i].distance(pts[j]) <= cutoff {
                    assert!(seen.contains(&(i, j)), "missed close pair {i},{j}");
                }
            }
            let near = grid.candidates_near(pts[i]);
            for j in 0..pts.len() {
                if pts[i].distance(pts[j]) <= cutoff {
                    assert!(near.contains(&j));
                }
            }
        }
    }
}
