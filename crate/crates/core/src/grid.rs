//! Vertex-centred grid on the closed unit square.
//!
//! Interior nodes `(i, j)` with `1 <= i, j <= n-1` are numbered row by row.
//! The `4n` perimeter nodes form a closed loop traversed counterclockwise
//! starting at the corner `(0, 0)`; corners are ordinary loop members, so
//! consecutive loop nodes are always one mesh width apart.

use crate::error::{Error, Result};

/// Where a grid vertex lives in the unknown storage.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Node {
    Interior(usize),
    Loop(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Bottom,
    Right,
    Top,
    Left,
}

impl Side {
    /// Outward unit normal as integer grid steps.
    pub fn outward(self) -> (i64, i64) {
        match self {
            Side::Bottom => (0, -1),
            Side::Right => (1, 0),
            Side::Top => (0, 1),
            Side::Left => (-1, 0),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LoopKind {
    Edge(Side),
    /// Corner shared by the two listed sides.
    Corner(Side, Side),
}

/// Three collinear nodes along the inward normal of one side: the boundary
/// node itself, then the first and second nodes inward.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NormalStencil {
    pub nodes: [(usize, usize); 3],
    pub side: Side,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InwardStencil {
    Edge(NormalStencil),
    /// One stencil per incident side; the normal derivative is their average.
    Corner([NormalStencil; 2]),
}

#[derive(Clone, Debug)]
pub struct Grid {
    n: usize,
    loop_coords: Vec<(usize, usize)>,
    loop_kinds: Vec<LoopKind>,
    // (n+1)^2 lookup, x fastest
    nodes: Vec<Node>,
    // vertex adjacency in CSR form: (neighbour vertex, edge weight)
    edge_ptr: Vec<usize>,
    edges: Vec<(usize, f64)>,
}

impl Grid {
    pub fn new(n: usize) -> Result<Self> {
        if n < 4 {
            return Err(Error::GridTooSmall(n));
        }
        let mut loop_coords = Vec::with_capacity(4 * n);
        for k in 0..n {
            loop_coords.push((k, 0));
        }
        for k in 0..n {
            loop_coords.push((n, k));
        }
        for k in 0..n {
            loop_coords.push((n - k, n));
        }
        for k in 0..n {
            loop_coords.push((0, n - k));
        }
        let loop_kinds = loop_coords
            .iter()
            .map(|&(i, j)| classify(n, i, j))
            .collect();

        let mut nodes = vec![Node::Interior(usize::MAX); (n + 1) * (n + 1)];
        for j in 1..n {
            for i in 1..n {
                nodes[j * (n + 1) + i] = Node::Interior((j - 1) * (n - 1) + (i - 1));
            }
        }
        for (k, &(i, j)) in loop_coords.iter().enumerate() {
            nodes[j * (n + 1) + i] = Node::Loop(k);
        }

        let mut edge_ptr = vec![0];
        let mut edges = Vec::with_capacity(4 * (n + 1) * (n + 1));
        for j in 0..=n {
            for i in 0..=n {
                let here = nodes[j * (n + 1) + i];
                let cands = [
                    (i + 1 <= n).then(|| (i + 1, j)),
                    i.checked_sub(1).map(|a| (a, j)),
                    (j + 1 <= n).then(|| (i, j + 1)),
                    j.checked_sub(1).map(|b| (i, b)),
                ];
                for (a, b) in cands.into_iter().flatten() {
                    let v = b * (n + 1) + a;
                    // an edge joining two perimeter vertices runs along the boundary
                    let on_boundary =
                        matches!(here, Node::Loop(_)) && matches!(nodes[v], Node::Loop(_));
                    edges.push((v, if on_boundary { 0.5 } else { 1.0 }));
                }
                edge_ptr.push(edges.len());
            }
        }
        Ok(Self {
            n,
            loop_coords,
            loop_kinds,
            nodes,
            edge_ptr,
            edges,
        })
    }

    /// Number of vertices, `(n+1)^2`.
    pub fn vertex_count(&self) -> usize {
        (self.n + 1) * (self.n + 1)
    }

    /// Flat vertex index of `(i, j)`, x fastest.
    pub fn vertex(&self, i: usize, j: usize) -> usize {
        j * (self.n + 1) + i
    }

    pub fn vertex_node(&self, v: usize) -> Node {
        self.nodes[v]
    }

    pub fn node_vertex(&self, node: Node) -> usize {
        let (i, j) = match node {
            Node::Interior(idx) => self.interior_coords(idx),
            Node::Loop(k) => self.loop_coords[k],
        };
        self.vertex(i, j)
    }

    /// Control-volume area of a vertex in units of `h^2`: 1 inside, 1/2 on an
    /// edge, 1/4 at a corner.
    pub fn vertex_weight(&self, v: usize) -> f64 {
        match self.nodes[v] {
            Node::Interior(_) => 1.0,
            Node::Loop(k) => match self.loop_kinds[k] {
                LoopKind::Edge(_) => 0.5,
                LoopKind::Corner(..) => 0.25,
            },
        }
    }

    /// Grid edges at vertex `v` with their quadrature weights (1/2 for
    /// edges lying on the perimeter, 1 otherwise).
    pub fn vertex_edges(&self, v: usize) -> &[(usize, f64)] {
        &self.edges[self.edge_ptr[v]..self.edge_ptr[v + 1]]
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn n_int(&self) -> usize {
        (self.n - 1) * (self.n - 1)
    }

    pub fn n_loop(&self) -> usize {
        4 * self.n
    }

    /// Flat interior index of `(i, j)`, if the vertex is interior.
    pub fn interior_index(&self, i: usize, j: usize) -> Option<usize> {
        match self.node(i, j)? {
            Node::Interior(idx) => Some(idx),
            Node::Loop(_) => None,
        }
    }

    pub fn interior_coords(&self, idx: usize) -> (usize, usize) {
        let m = self.n - 1;
        (idx % m + 1, idx / m + 1)
    }

    pub fn loop_coords(&self, k: usize) -> (usize, usize) {
        self.loop_coords[k]
    }

    pub fn loop_kind(&self, k: usize) -> LoopKind {
        self.loop_kinds[k]
    }

    pub fn node(&self, i: usize, j: usize) -> Option<Node> {
        if i > self.n || j > self.n {
            return None;
        }
        Some(self.nodes[j * (self.n + 1) + i])
    }

    /// Physical position of a vertex.
    pub fn position(&self, i: usize, j: usize) -> (f64, f64) {
        (i as f64 * self.h(), j as f64 * self.h())
    }

    /// The four axis neighbours of an interior node, as `[E, W, N, S]`.
    pub fn neighbours(&self, idx: usize) -> [Node; 4] {
        let (i, j) = self.interior_coords(idx);
        let at = |i: usize, j: usize| self.nodes[j * (self.n + 1) + i];
        [at(i + 1, j), at(i - 1, j), at(i, j + 1), at(i, j - 1)]
    }

    pub fn next(&self, k: usize) -> usize {
        (k + 1) % self.n_loop()
    }

    pub fn prev(&self, k: usize) -> usize {
        (k + self.n_loop() - 1) % self.n_loop()
    }

    pub fn inward_normal_stencil(&self, k: usize) -> Result<InwardStencil> {
        if k >= self.n_loop() {
            return Err(Error::LoopIndex {
                index: k,
                len: self.n_loop(),
            });
        }
        let (i, j) = self.loop_coords[k];
        Ok(match self.loop_kinds[k] {
            LoopKind::Edge(side) => InwardStencil::Edge(self.side_stencil(i, j, side)),
            LoopKind::Corner(a, b) => {
                InwardStencil::Corner([self.side_stencil(i, j, a), self.side_stencil(i, j, b)])
            }
        })
    }

    fn side_stencil(&self, i: usize, j: usize, side: Side) -> NormalStencil {
        let (ox, oy) = side.outward();
        let step = |s: i64| {
            (
                (i as i64 - s * ox) as usize,
                (j as i64 - s * oy) as usize,
            )
        };
        NormalStencil {
            nodes: [(i, j), step(1), step(2)],
            side,
        }
    }
}

fn classify(n: usize, i: usize, j: usize) -> LoopKind {
    let side_x = match i {
        0 => Some(Side::Left),
        _ if i == n => Some(Side::Right),
        _ => None,
    };
    let side_y = match j {
        0 => Some(Side::Bottom),
        _ if j == n => Some(Side::Top),
        _ => None,
    };
    match (side_x, side_y) {
        (Some(a), Some(b)) => LoopKind::Corner(b, a),
        (Some(s), None) | (None, Some(s)) => LoopKind::Edge(s),
        (None, None) => unreachable!("({i}, {j}) is not on the perimeter"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn counts() {
        let g = Grid::new(4).unwrap();
        assert_eq!((g.n_int(), g.n_loop(), g.h()), (9, 16, 0.25));
        let g = Grid::new(100).unwrap();
        assert_eq!((g.n_int(), g.n_loop(), g.h()), (9801, 400, 0.01));
        assert!(matches!(Grid::new(3), Err(Error::GridTooSmall(3))));
    }

    #[test]
    fn stencils() {
        let g = Grid::new(10).unwrap();
        let k = (0..g.n_loop()).find(|&k| g.loop_coords(k) == (3, 0)).unwrap();
        let InwardStencil::Edge(s) = g.inward_normal_stencil(k).unwrap() else {
            panic!("expected an edge stencil");
        };
        assert_eq!(s.nodes, [(3, 0), (3, 1), (3, 2)]);
        assert_eq!(s.side.outward(), (0, -1));

        let InwardStencil::Corner([a, b]) = g.inward_normal_stencil(0).unwrap() else {
            panic!("expected a corner stencil");
        };
        let mut triples = [a.nodes, b.nodes];
        triples.sort();
        assert_eq!(
            triples,
            [[(0, 0), (0, 1), (0, 2)], [(0, 0), (1, 0), (2, 0)]]
        );

        let k = (0..g.n_loop()).find(|&k| g.loop_coords(k) == (10, 5)).unwrap();
        let InwardStencil::Edge(s) = g.inward_normal_stencil(k).unwrap() else {
            panic!("expected an edge stencil");
        };
        assert_eq!(s.nodes, [(10, 5), (9, 5), (8, 5)]);
        assert_eq!(s.side.outward(), (1, 0));

        assert!(g.inward_normal_stencil(40).is_err());
    }

    #[test]
    fn corners_are_classified() {
        let g = Grid::new(6).unwrap();
        let corners: Vec<_> = (0..g.n_loop())
            .filter(|&k| matches!(g.loop_kind(k), LoopKind::Corner(..)))
            .map(|k| g.loop_coords(k))
            .collect();
        assert_eq!(corners, vec![(0, 0), (6, 0), (6, 6), (0, 6)]);
    }

    proptest! {
        #[test]
        fn index_maps_are_bijective(n in 4usize..40) {
            let g = Grid::new(n).unwrap();
            for idx in 0..g.n_int() {
                let (i, j) = g.interior_coords(idx);
                prop_assert_eq!(g.node(i, j), Some(Node::Interior(idx)));
            }
            let mut seen = vec![false; (n + 1) * (n + 1)];
            for k in 0..g.n_loop() {
                let (i, j) = g.loop_coords(k);
                prop_assert_eq!(g.node(i, j), Some(Node::Loop(k)));
                prop_assert!(!seen[j * (n + 1) + i]);
                seen[j * (n + 1) + i] = true;
            }
            prop_assert_eq!(seen.iter().filter(|&&s| s).count(), 4 * n);
        }

        #[test]
        fn loop_neighbours_are_one_step_apart(n in 4usize..40) {
            let g = Grid::new(n).unwrap();
            for k in 0..g.n_loop() {
                let (a, b) = (g.loop_coords(k), g.loop_coords(g.next(k)));
                let d = a.0.abs_diff(b.0) + a.1.abs_diff(b.1);
                prop_assert_eq!(d, 1);
            }
        }

        #[test]
        fn stencils_stay_in_square(n in 4usize..30) {
            let g = Grid::new(n).unwrap();
            for k in 0..g.n_loop() {
                let stencils = match g.inward_normal_stencil(k).unwrap() {
                    InwardStencil::Edge(s) => vec![s],
                    InwardStencil::Corner(s) => s.to_vec(),
                };
                for s in stencils {
                    for (i, j) in s.nodes {
                        prop_assert!(g.node(i, j).is_some());
                    }
                }
            }
        }

        #[test]
        fn vertex_adjacency_is_symmetric(n in 4usize..20) {
            let g = Grid::new(n).unwrap();
            let mut area = 0.0;
            for v in 0..g.vertex_count() {
                area += g.vertex_weight(v);
                prop_assert_eq!(g.node_vertex(g.vertex_node(v)), v);
                for &(u, w) in g.vertex_edges(v) {
                    prop_assert!(g.vertex_edges(u).contains(&(v, w)));
                }
            }
            prop_assert!((area - (n * n) as f64).abs() < 1e-9);
        }

        #[test]
        fn interior_neighbours_are_consistent(n in 4usize..30) {
            let g = Grid::new(n).unwrap();
            for idx in 0..g.n_int() {
                let (i, j) = g.interior_coords(idx);
                let expect = [(i + 1, j), (i - 1, j), (i, j + 1), (i, j - 1)]
                    .map(|(a, b)| g.node(a, b).unwrap());
                prop_assert_eq!(g.neighbours(idx), expect);
            }
        }
    }
}
