//! Union-find connected components over the merge-angle predicate.

use copg_core::range::RangeImage;

/// Merge angle from the triangle sensor / far point / near point: the angle
/// at the far point between the direction back to the sensor and the
/// direction to the near point.
pub fn merge_angle_geometric(d1: f64, d2: f64, alpha_deg: f64) -> f64 {
    let (far, near) = if d1 >= d2 { (d1, d2) } else { (d2, d1) };
    let a = alpha_deg.to_radians();
    let far_pt = [far, 0.0];
    let near_pt = [near * a.cos(), near * a.sin()];
    let to_sensor = [-far_pt[0], -far_pt[1]];
    let to_near = [near_pt[0] - far_pt[0], near_pt[1] - far_pt[1]];
    let dot = to_sensor[0] * to_near[0] + to_sensor[1] * to_near[1];
    let cross = to_sensor[0] * to_near[1] - to_sensor[1] * to_near[0];
    cross.abs().atan2(dot).to_degrees()
}

struct Dsu {
    parent: Vec<usize>,
}

impl Dsu {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra] = rb;
        }
    }
}

/// Component root per cell, `None` for empty cells. Vertical edges join rows
/// `r` and `r + 1`; horizontal edges join columns `c` and `c + 1 mod cols`.
pub fn union_find_components(img: &RangeImage, theta_min: f64) -> Vec<Option<usize>> {
    let (rows, cols) = (img.rows(), img.cols());
    let ranges = img.ranges();
    let occupied = |cell: usize| img.point_index(cell / cols, cell % cols).is_some();
    let mut dsu = Dsu::new(rows * cols);
    let consider = |dsu: &mut Dsu, a: usize, b: usize, alpha: f64| {
        if occupied(a) && occupied(b) && merge_angle_geometric(ranges[a], ranges[b], alpha) > theta_min {
            dsu.union(a, b);
        }
    };
    let rows_deg = img.row_angles();
    let cols_deg = img.col_angles();
    for r in 0..rows {
        for c in 0..cols {
            let cell = r * cols + c;
            if r + 1 < rows {
                consider(&mut dsu, cell, cell + cols, (rows_deg[r] - rows_deg[r + 1]).abs());
            }
            if cols > 1 {
                let nc = (c + 1) % cols;
                let alpha = (cols_deg[nc] - cols_deg[c]).rem_euclid(360.0);
                consider(&mut dsu, cell, r * cols + nc, alpha);
            }
        }
    }
    (0..rows * cols)
        .map(|cell| occupied(cell).then(|| dsu.find(cell)))
        .collect()
}

/// Whether two labelings induce the same partition (a bijection between
/// label values exists and empty cells agree).
pub fn same_partition<A: Copy + Ord, B: Copy + Ord>(a: &[Option<A>], b: &[Option<B>]) -> bool {
    use std::collections::BTreeMap;
    if a.len() != b.len() {
        return false;
    }
    let mut fwd: BTreeMap<A, B> = BTreeMap::new();
    let mut back: BTreeMap<B, A> = BTreeMap::new();
    for (x, y) in a.iter().zip(b) {
        match (x, y) {
            (None, None) => {}
            (Some(x), Some(y)) => {
                if *fwd.entry(*x).or_insert(*y) != *y || *back.entry(*y).or_insert(*x) != *x {
                    return false;
                }
            }
            _ => return false,
        }
    }
    true
}

/// A random range image mixing a few depth layers with small jitter, so the
/// merge predicate goes both ways. Returns the image and a threshold.
pub fn random_image<R: rand::Rng>(rng: &mut R) -> (RangeImage, f64) {
    use copg_core::range::RangeImageSpec;
    let rows = rng.gen_range(1..=12);
    let cols = rng.gen_range(1..=40);
    let spec = RangeImageSpec {
        rows,
        cols,
        elevation_min: -rng.gen_range(2.0..30.0),
        elevation_max: rng.gen_range(0.0..5.0),
    };
    let layers: Vec<f64> = (0..rng.gen_range(1..=4)).map(|_| rng.gen_range(2.0..80.0)).collect();
    let fill = rng.gen_range(0.3..=1.0);
    let jitter = rng.gen_range(0.0..0.3);
    let mut ranges = vec![0.0; rows * cols];
    let mut index = vec![None; rows * cols];
    for cell in 0..rows * cols {
        if rng.gen_bool(fill) {
            let base = layers[rng.gen_range(0..layers.len())];
            ranges[cell] = base * (1.0 + rng.gen_range(-jitter..=jitter));
            index[cell] = Some(cell);
        }
    }
    let img = RangeImage::from_parts(
        rows,
        cols,
        ranges,
        index,
        (0..rows).map(|r| spec.row_angle(r)).collect(),
        (0..cols).map(|c| spec.col_angle(c)).collect(),
    )
    .expect("valid random image");
    (img, rng.gen_range(1.0..45.0))
}
