//! Static k-d tree for exact fixed-radius and k-nearest-neighbor queries.
//!
//! Distances are Euclidean in `D` dimensions; a 2D tree over xy coordinates
//! ignores z. Radius queries return every point with distance `<= r`. kNN
//! results are ordered by distance, ties broken by the lower point index.

use alloc::collections::BinaryHeap;
use alloc::vec::Vec;
use core::cmp::Ordering;

const LEAF_SIZE: usize = 16;

#[derive(Debug, Clone)]
struct Node<const D: usize> {
    lo: [f64; D],
    hi: [f64; D],
    // leaf: [start, end) into `order`; inner: child node ids
    a: u32,
    b: u32,
    leaf: bool,
}

#[derive(Debug, Clone)]
pub struct KdTree<const D: usize> {
    order: Vec<u32>,
    sorted: Vec<[f64; D]>,
    nodes: Vec<Node<D>>,
}

#[inline]
fn dist2<const D: usize>(a: &[f64; D], b: &[f64; D]) -> f64 {
    let mut s = 0.0;
    for d in 0..D {
        let t = a[d] - b[d];
        s += t * t;
    }
    s
}

#[inline]
fn box_dist2<const D: usize>(q: &[f64; D], lo: &[f64; D], hi: &[f64; D]) -> f64 {
    let mut s = 0.0;
    for d in 0..D {
        let t = if q[d] < lo[d] {
            lo[d] - q[d]
        } else if q[d] > hi[d] {
            q[d] - hi[d]
        } else {
            0.0
        };
        s += t * t;
    }
    s
}

#[derive(Clone, Copy, PartialEq)]
struct Cand {
    d2: f64,
    idx: u32,
}

impl Eq for Cand {}

impl Ord for Cand {
    fn cmp(&self, o: &Self) -> Ordering {
        self.d2
            .partial_cmp(&o.d2)
            .unwrap_or(Ordering::Equal)
            .then(self.idx.cmp(&o.idx))
    }
}

impl PartialOrd for Cand {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

impl<const D: usize> KdTree<D> {
    pub fn new(points: &[[f64; D]]) -> Self {
        assert!(points.len() < u32::MAX as usize, "too many points");
        let mut order: Vec<u32> = (0..points.len() as u32).collect();
        let mut nodes = Vec::new();
        if !points.is_empty() {
            build(points, &mut order, 0, &mut nodes);
        }
        let sorted = order.iter().map(|&i| points[i as usize]).collect();
        KdTree {
            order,
            sorted,
            nodes,
        }
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// Calls `f(index, squared_distance)` for every point within `r` of `q`,
    /// in unspecified order.
    pub fn for_each_within<F: FnMut(usize, f64)>(&self, q: &[f64; D], r: f64, mut f: F) {
        if self.nodes.is_empty() || r < 0.0 {
            return;
        }
        let r2 = r * r;
        let mut stack: Vec<u32> = Vec::with_capacity(64);
        stack.push(0);
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id as usize];
            if box_dist2(q, &node.lo, &node.hi) > r2 {
                continue;
            }
            if node.leaf {
                for k in node.a as usize..node.b as usize {
                    let d2 = dist2(q, &self.sorted[k]);
                    if d2 <= r2 {
                        f(self.order[k] as usize, d2);
                    }
                }
            } else {
                stack.push(node.a);
                stack.push(node.b);
            }
        }
    }

    /// Indices of all points within distance `r` of `q`, ascending.
    pub fn within(&self, q: &[f64; D], r: f64) -> Vec<usize> {
        let mut out = Vec::new();
        self.for_each_within(q, r, |i, _| out.push(i));
        out.sort_unstable();
        out
    }

    /// Number of points within distance `r` of `q`.
    pub fn count_within(&self, q: &[f64; D], r: f64) -> usize {
        let mut n = 0;
        self.for_each_within(q, r, |_, _| n += 1);
        n
    }

    /// The `k` nearest points as `(index, distance)`, nearest first.
    pub fn nearest_k(&self, q: &[f64; D], k: usize) -> Vec<(usize, f64)> {
        if k == 0 || self.nodes.is_empty() {
            return Vec::new();
        }
        use num_traits::Float;
        let mut heap: BinaryHeap<Cand> = BinaryHeap::with_capacity(k + 1);
        self.knn_rec(0, q, k, &mut heap);
        let mut v = heap.into_sorted_vec();
        v.truncate(k);
        v.into_iter()
            .map(|c| (c.idx as usize, c.d2.sqrt()))
            .collect()
    }

    pub fn nearest(&self, q: &[f64; D]) -> Option<(usize, f64)> {
        self.nearest_k(q, 1).into_iter().next()
    }

    fn knn_rec(&self, id: u32, q: &[f64; D], k: usize, heap: &mut BinaryHeap<Cand>) {
        let node = &self.nodes[id as usize];
        if heap.len() == k {
            let worst = heap.peek().unwrap().d2;
            if box_dist2(q, &node.lo, &node.hi) > worst {
                return;
            }
        }
        if node.leaf {
            for j in node.a as usize..node.b as usize {
                let c = Cand {
                    d2: dist2(q, &self.sorted[j]),
                    idx: self.order[j],
                };
                if heap.len() < k {
                    heap.push(c);
                } else if c < *heap.peek().unwrap() {
                    heap.pop();
                    heap.push(c);
                }
            }
        } else {
            let (l, r) = (node.a, node.b);
            let dl = {
                let n = &self.nodes[l as usize];
                box_dist2(q, &n.lo, &n.hi)
            };
            let dr = {
                let n = &self.nodes[r as usize];
                box_dist2(q, &n.lo, &n.hi)
            };
            if dl <= dr {
                self.knn_rec(l, q, k, heap);
                self.knn_rec(r, q, k, heap);
            } else {
                self.knn_rec(r, q, k, heap);
                self.knn_rec(l, q, k, heap);
            }
        }
    }
}

fn build<const D: usize>(
    points: &[[f64; D]],
    order: &mut [u32],
    offset: usize,
    nodes: &mut Vec<Node<D>>,
) -> u32 {
    let mut lo = [f64::INFINITY; D];
    let mut hi = [f64::NEG_INFINITY; D];
    for &i in order.iter() {
        let p = &points[i as usize];
        for d in 0..D {
            lo[d] = lo[d].min(p[d]);
            hi[d] = hi[d].max(p[d]);
        }
    }
    let id = nodes.len() as u32;
    nodes.push(Node {
        lo,
        hi,
        a: offset as u32,
        b: (offset + order.len()) as u32,
        leaf: true,
    });
    if order.len() <= LEAF_SIZE {
        return id;
    }
    let mut axis = 0;
    for d in 1..D {
        if hi[d] - lo[d] > hi[axis] - lo[axis] {
            axis = d;
        }
    }
    if hi[axis] - lo[axis] <= 0.0 {
        // all points coincide
        return id;
    }
    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |&a, &b| {
        points[a as usize][axis]
            .partial_cmp(&points[b as usize][axis])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    let (left, right) = order.split_at_mut(mid);
    let l = build(points, left, offset, nodes);
    let r = build(points, right, offset + mid, nodes);
    let node = &mut nodes[id as usize];
    node.leaf = false;
    node.a = l;
    node.b = r;
    id
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn line_radius() {
        let t = KdTree::<1>::new(&[[0.0], [1.0], [2.0]]);
        assert_eq!(t.within(&[0.0], 1.0), vec![0, 1]);
        assert_eq!(t.within(&[0.0], 0.0), vec![0]);
        assert!(t.within(&[10.0], 1.0).is_empty());
    }

    #[test]
    fn knn_ties_by_index() {
        let pts = [[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0], [5.0, 5.0]];
        let t = KdTree::<2>::new(&pts);
        let nn = t.nearest_k(&[0.0, 0.0], 3);
        assert_eq!(nn.iter().map(|p| p.0).collect::<Vec<_>>(), vec![0, 1, 2]);
    }

    #[test]
    fn empty_and_duplicates() {
        let t = KdTree::<3>::new(&[]);
        assert!(t.within(&[0.0; 3], 1.0).is_empty());
        assert!(t.nearest(&[0.0; 3]).is_none());
        let dup = vec![[1.0, 1.0, 1.0]; 100];
        let t = KdTree::<3>::new(&dup);
        assert_eq!(t.within(&[1.0; 3], 0.0).len(), 100);
        let nn = t.nearest_k(&[1.0; 3], 4);
        assert_eq!(nn.iter().map(|p| p.0).collect::<Vec<_>>(), vec![0, 1, 2, 3]);
    }
}
