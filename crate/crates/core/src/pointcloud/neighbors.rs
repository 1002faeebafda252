use super::{squared_distance, Point3, PointCloud};
use crate::error::{Error, Result};
use crate::registry::Registry;

/// Result of a nearest-neighbor query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    /// Index of the neighbor in the indexed point sequence.
    pub index: usize,
    pub point: Point3,
    pub distance: f64,
}

/// Exact nearest-neighbor search over a fixed point set.
///
/// Among equidistant candidates the lowest point index wins, so every
/// implementation returns the same neighbor for the same query.
pub trait NearestNeighbor: Send + Sync {
    fn nearest(&self, query: &Point3) -> Neighbor;

    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub type NeighborIndexFactory = fn(&[Point3]) -> Result<Box<dyn NearestNeighbor>>;

/// Built-in index strategies: `kd-tree` (default) and `linear-scan`.
pub fn neighbor_index_registry() -> Registry<NeighborIndexFactory> {
    let mut reg: Registry<NeighborIndexFactory> = Registry::new("nearest-neighbor index");
    reg.register("kd-tree", |p| Ok(Box::new(KdTree::build(p)?)))
        .register("linear-scan", |p| Ok(Box::new(LinearScan::new(p)?)));
    reg
}

/// Single query by linear scan; building an index does not pay off for one query.
pub fn nearest_neighbor(x: &Point3, cloud: &PointCloud) -> (Point3, f64) {
    let n = scan(cloud.points(), x);
    (n.point, n.distance)
}

#[inline]
fn better(d2: f64, index: usize, best_d2: f64, best_index: usize) -> bool {
    d2 < best_d2 || (d2 == best_d2 && index < best_index)
}

fn scan(points: &[Point3], q: &Point3) -> Neighbor {
    let mut best = (f64::INFINITY, usize::MAX);
    for (i, p) in points.iter().enumerate() {
        let d2 = squared_distance(p, q);
        if better(d2, i, best.0, best.1) {
            best = (d2, i);
        }
    }
    Neighbor {
        index: best.1,
        point: points[best.1],
        distance: best.0.sqrt(),
    }
}

/// O(n) reference search.
#[derive(Debug, Clone)]
pub struct LinearScan {
    points: Vec<Point3>,
}

impl LinearScan {
    pub fn new(points: &[Point3]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyCloud);
        }
        Ok(Self {
            points: points.to_vec(),
        })
    }
}

impl NearestNeighbor for LinearScan {
    fn nearest(&self, query: &Point3) -> Neighbor {
        scan(&self.points, query)
    }

    fn len(&self) -> usize {
        self.points.len()
    }
}

const LEAF_SIZE: usize = 8;

#[derive(Debug, Clone)]
enum Node {
    Leaf {
        start: u32,
        end: u32,
    },
    Split {
        axis: u8,
        value: f64,
        left: u32,
        right: u32,
    },
}

/// Exact KD-tree, split at the median of the widest axis.
///
/// Points with a coordinate equal to the split value may land on either
/// side; the search visits the far side whenever the slab distance does not
/// exceed the current best, which keeps results exact including ties.
#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<Point3>,
    order: Vec<u32>,
    nodes: Vec<Node>,
}

impl KdTree {
    pub fn build(points: &[Point3]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyCloud);
        }
        let mut tree = Self {
            points: points.to_vec(),
            order: (0..points.len() as u32).collect(),
            nodes: Vec::with_capacity(2 * points.len() / LEAF_SIZE + 1),
        };
        tree.build_node(0, points.len());
        Ok(tree)
    }

    pub fn from_cloud(cloud: &PointCloud) -> Self {
        Self::build(cloud.points()).expect("point clouds are nonempty")
    }

    fn build_node(&mut self, start: usize, end: usize) -> u32 {
        let id = self.nodes.len() as u32;
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf {
                start: start as u32,
                end: end as u32,
            });
            return id;
        }
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for &i in &self.order[start..end] {
            let p = &self.points[i as usize];
            for k in 0..3 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        let axis = (0..3)
            .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
            .unwrap();
        if hi[axis] - lo[axis] == 0.0 {
            // All remaining points coincide.
            self.nodes.push(Node::Leaf {
                start: start as u32,
                end: end as u32,
            });
            return id;
        }
        let mid = (end - start) / 2;
        let points = &self.points;
        self.order[start..end].select_nth_unstable_by(mid, |&a, &b| {
            points[a as usize][axis]
                .total_cmp(&points[b as usize][axis])
                .then(a.cmp(&b))
        });
        let value = self.points[self.order[start + mid] as usize][axis];
        self.nodes.push(Node::Split {
            axis: axis as u8,
            value,
            left: 0,
            right: 0,
        });
        let left = self.build_node(start, start + mid);
        let right = self.build_node(start + mid, end);
        if let Node::Split {
            left: l, right: r, ..
        } = &mut self.nodes[id as usize]
        {
            *l = left;
            *r = right;
        }
        id
    }

    fn search(&self, node: u32, q: &Point3, best: &mut (f64, usize)) {
        match self.nodes[node as usize] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start as usize..end as usize] {
                    let i = i as usize;
                    let d2 = squared_distance(&self.points[i], q);
                    if better(d2, i, best.0, best.1) {
                        *best = (d2, i);
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[axis as usize] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, best);
                if diff * diff <= best.0 {
                    self.search(far, q, best);
                }
            }
        }
    }
}

impl NearestNeighbor for KdTree {
    fn nearest(&self, query: &Point3) -> Neighbor {
        let mut best = (f64::INFINITY, usize::MAX);
        self.search(0, query, &mut best);
        Neighbor {
            index: best.1,
            point: self.points[best.1],
            distance: best.0.sqrt(),
        }
    }

    fn len(&self) -> usize {
        self.points.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn two_candidates() {
        let p = PointCloud::new(vec![[1.0, 0.0, 0.0], [0.0, 2.0, 0.0]]).unwrap();
        assert_eq!(nearest_neighbor(&[0.0; 3], &p), ([1.0, 0.0, 0.0], 1.0));
        let n = KdTree::from_cloud(&p).nearest(&[0.0; 3]);
        assert_eq!((n.point, n.distance, n.index), ([1.0, 0.0, 0.0], 1.0, 0));
    }

    #[test]
    fn member_query_has_zero_distance() {
        let p = PointCloud::new(vec![[0.3, 0.1, 0.2], [1.0, 1.0, 1.0], [-2.0, 0.0, 5.0]]).unwrap();
        for x in p.points() {
            assert_eq!(nearest_neighbor(x, &p), (*x, 0.0));
        }
    }

    #[test]
    fn ties_resolve_to_lowest_index() {
        let pts: Vec<Point3> = (0..40)
            .map(|i| if i % 2 == 0 { [1.0, 0.0, 0.0] } else { [-1.0, 0.0, 0.0] })
            .collect();
        let tree = KdTree::build(&pts).unwrap();
        assert_eq!(tree.nearest(&[0.0; 3]).index, 0);
        assert_eq!(tree.nearest(&[-0.5, 0.0, 0.0]).index, 1);
        assert_eq!(LinearScan::new(&pts).unwrap().nearest(&[0.0; 3]).index, 0);
    }

    #[test]
    fn kd_tree_matches_linear_scan_512_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let pts: Vec<Point3> = (0..512)
            .map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)])
            .collect();
        let tree = KdTree::build(&pts).unwrap();
        let oracle = LinearScan::new(&pts).unwrap();
        for _ in 0..100 {
            let q = [rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5)];
            assert_eq!(tree.nearest(&q), oracle.nearest(&q));
        }
    }

    #[test]
    fn registry_builds_both_indices() {
        let reg = neighbor_index_registry();
        assert_eq!(reg.names(), vec!["kd-tree", "linear-scan"]);
        let pts = [[0.0; 3], [1.0, 1.0, 1.0]];
        for name in reg.names() {
            let idx = reg.get(name).unwrap()(&pts).unwrap();
            assert_eq!(idx.nearest(&[0.9, 0.9, 0.9]).index, 1);
        }
        assert!(matches!(reg.get("kd-tree").unwrap()(&[]), Err(Error::EmptyCloud)));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn no_point_is_strictly_closer(
            // Coarse grid coordinates produce many exact ties.
            pts in prop::collection::vec(prop::array::uniform3(-8i32..8), 1..2048),
            q in prop::array::uniform3(-10i32..10),
        ) {
            let pts: Vec<Point3> = pts.iter().map(|p| p.map(|v| v as f64 * 0.25)).collect();
            let q = q.map(|v| v as f64 * 0.25);
            let n = KdTree::build(&pts).unwrap().nearest(&q);
            for y in &pts {
                prop_assert!(n.distance <= squared_distance(y, &q).sqrt());
            }
            prop_assert_eq!(n, LinearScan::new(&pts).unwrap().nearest(&q));
        }
    }
}
