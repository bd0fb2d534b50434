use super::{periodic_distance, wrap_delta};

/// Uniform bucket grid over the periodic box for near-neighbour queries.
pub(crate) struct Buckets {
    per_side: usize,
    cell: f64,
    box_side: f64,
    dimension: usize,
    slots: Vec<Vec<usize>>,
    points: Vec<Vec<f64>>,
}

impl Buckets {
    /// `min_cell` is the smallest admissible bucket width; queries with reach up to
    /// `min_cell` only need the 3^d surrounding buckets.
    pub fn new(box_side: f64, dimension: usize, min_cell: f64) -> Self {
        let per_side = ((box_side / min_cell.max(1e-12)).floor() as usize).clamp(1, 1 << 10);
        let per_side = per_side.min(max_per_side(dimension));
        Self {
            per_side,
            cell: box_side / per_side as f64,
            box_side,
            dimension,
            slots: vec![Vec::new(); per_side.pow(dimension as u32)],
            points: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i]
    }

    fn coord(&self, x: f64) -> usize {
        let c = (x.rem_euclid(self.box_side) / self.cell).floor() as usize;
        c.min(self.per_side - 1)
    }

    fn slot_of(&self, p: &[f64]) -> usize {
        let mut idx = 0;
        for k in (0..self.dimension).rev() {
            idx = idx * self.per_side + self.coord(p[k]);
        }
        idx
    }

    pub fn insert(&mut self, p: Vec<f64>) -> usize {
        let id = self.points.len();
        let slot = self.slot_of(&p);
        self.slots[slot].push(id);
        self.points.push(p);
        id
    }

    /// Visit all stored points whose bucket lies within `ring` buckets of `p` along
    /// every axis. Each point is visited at most once.
    pub fn for_each_within_ring(&self, p: &[f64], ring: usize, mut f: impl FnMut(usize)) {
        if 2 * ring + 1 >= self.per_side {
            for slot in &self.slots {
                for &id in slot {
                    f(id);
                }
            }
            return;
        }
        let n = self.per_side as isize;
        let reach = 2 * ring + 1;
        let base: Vec<isize> = (0..self.dimension)
            .map(|k| self.coord(p[k]) as isize)
            .collect();
        let mut offs = vec![0isize; self.dimension];
        let total = reach.pow(self.dimension as u32);
        for t in 0..total {
            let mut r = t;
            for o in offs.iter_mut() {
                *o = (r % reach) as isize - ring as isize;
                r /= reach;
            }
            let mut idx = 0usize;
            for k in (0..self.dimension).rev() {
                let c = (base[k] + offs[k]).rem_euclid(n) as usize;
                idx = idx * self.per_side + c;
            }
            for &id in &self.slots[idx] {
                f(id);
            }
        }
    }

    /// True if some stored point lies strictly closer than `dist` to `p`.
    /// Requires `dist <= bucket width`.
    pub fn any_closer_than(&self, p: &[f64], dist: f64) -> bool {
        let mut found = false;
        let d2 = dist * dist;
        self.for_each_within_ring(p, 1, |id| {
            if !found {
                let q = &self.points[id];
                let s: f64 = p
                    .iter()
                    .zip(q)
                    .map(|(a, b)| {
                        let d = wrap_delta(a - b, self.box_side);
                        d * d
                    })
                    .sum();
                if s < d2 {
                    found = true;
                }
            }
        });
        found
    }

    /// Nearest stored point other than `skip`, with its distance.
    pub fn nearest(&self, p: &[f64], skip: Option<usize>) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        let max_ring = self.per_side / 2 + 1;
        for ring in 1..=max_ring {
            self.for_each_within_ring(p, ring, |id| {
                if Some(id) == skip {
                    return;
                }
                let d = periodic_distance(p, &self.points[id], self.box_side);
                if best.map_or(true, |(_, b)| d < b) {
                    best = Some((id, d));
                }
            });
            // Everything within `ring` bucket widths is covered after this ring.
            if let Some((_, b)) = best {
                if b <= ring as f64 * self.cell {
                    break;
                }
            }
            if 2 * ring + 1 >= self.per_side {
                break;
            }
        }
        best
    }
}

fn max_per_side(dimension: usize) -> usize {
    match dimension {
        2 => 1 << 10,
        _ => 1 << 7,
    }
}
