//! Dense reference for one time step, built from the discrete energies
//! rather than from stencils: every quadratic form is recovered by
//! polarisation, `H_ab = E(e_a + e_b) - E(e_a) - E(e_b)`, and the system is
//! solved with a dense LU factorisation.

#![allow(dead_code)]

use hypch::field::{BulkField, LoopField};
use hypch::grid::{Grid, Node};
use hypch::model::{f_prime, g_prime, ModelParams};
use hypch::operators::{dirichlet_energy_bulk, dirichlet_energy_loop};
use hypch::State;
use nalgebra::{DMatrix, DVector};

pub struct DenseStep {
    /// phi on all vertices, x fastest (perimeter entries are psi).
    pub phi: Vec<f64>,
    /// bulk chemical potential on all vertices.
    pub mu: Vec<f64>,
    pub mu_gamma: Vec<f64>,
}

fn vertex_nodes(grid: &Grid) -> Vec<Node> {
    let n = grid.n();
    let mut out = Vec::new();
    for j in 0..=n {
        for i in 0..=n {
            out.push(grid.node(i, j).unwrap());
        }
    }
    out
}

fn split(grid: &Grid, nodes: &[Node], x: &[f64]) -> (BulkField, LoopField) {
    let mut phi = BulkField::zeros(grid);
    let mut psi = LoopField::zeros(grid);
    for (v, node) in nodes.iter().enumerate() {
        match *node {
            Node::Interior(i) => phi[i] = x[v],
            Node::Loop(k) => psi[k] = x[v],
        }
    }
    (phi, psi)
}

fn polarise(dim: usize, energy: impl Fn(&[f64]) -> f64) -> DMatrix<f64> {
    let unit = |a: usize| {
        let mut e = vec![0.0; dim];
        e[a] = 1.0;
        e
    };
    let diag: Vec<f64> = (0..dim).map(|a| energy(&unit(a))).collect();
    DMatrix::from_fn(dim, dim, |a, b| {
        if a == b {
            2.0 * diag[a]
        } else {
            let mut e = unit(a);
            e[b] = 1.0;
            energy(&e) - diag[a] - diag[b]
        }
    })
}

/// Control area in units of h^2, from coordinates alone.
fn area(n: usize, i: usize, j: usize) -> f64 {
    let edge = |k: usize| k == 0 || k == n;
    match (edge(i), edge(j)) {
        (true, true) => 0.25,
        (true, false) | (false, true) => 0.5,
        (false, false) => 1.0,
    }
}

pub fn dense_step(state: &State, grid: &Grid, p: &ModelParams) -> DenseStep {
    let n = grid.n();
    let h = grid.h();
    let nodes = vertex_nodes(grid);
    let nv = nodes.len();
    let nl = grid.n_loop();
    let hd = polarise(nv, |x| {
        let (a, b) = split(grid, &nodes, x);
        dirichlet_energy_bulk(&a, &b, grid).unwrap()
    });
    let hg = polarise(nl, |x| {
        dirichlet_energy_loop(&LoopField::from_vec(grid, x.to_vec()).unwrap(), grid).unwrap()
    });
    let c: Vec<f64> = (0..nv).map(|v| area(n, v % (n + 1), v / (n + 1)) * h * h).collect();
    let old = |v: usize| match nodes[v] {
        Node::Interior(i) => (state.phi[i], state.phi_rate[i]),
        Node::Loop(k) => (state.psi[k], state.psi_rate[k]),
    };
    let a1 = (p.beta1 / p.tau + 1.0) / p.tau;
    let a2 = (p.beta2 / p.tau + 1.0) / p.tau;

    // unknowns: [phi (nv) | mu (nv) | mu_gamma (nl)]
    let dim = 2 * nv + nl;
    let (im, ig) = (nv, 2 * nv);
    let mut a = DMatrix::<f64>::zeros(dim, dim);
    let mut b = DVector::<f64>::zeros(dim);
    let mut row = 0;
    // bulk evolution, tested against every vertex hat
    for v in 0..nv {
        let (u0, r0) = old(v);
        a[(row, v)] = c[v] * a1;
        for w in 0..nv {
            a[(row, im + w)] += p.m1 * hd[(v, w)];
        }
        b[row] = c[v] * (a1 * u0 + p.beta1 / p.tau * r0);
        row += 1;
    }
    // surface evolution
    for k in 0..nl {
        let v = nodes.iter().position(|nd| *nd == Node::Loop(k)).unwrap();
        a[(row, v)] = h * a2;
        for l in 0..nl {
            a[(row, ig + l)] += p.m2 * hg[(k, l)];
        }
        b[row] = h * (a2 * state.psi[k] + p.beta2 / p.tau * state.psi_rate[k]);
        row += 1;
    }
    // chemical potentials: variations of the linearised energy
    for v in 0..nv {
        let (u0, _) = old(v);
        a[(row, im + v)] = c[v];
        for w in 0..nv {
            a[(row, w)] -= hd[(v, w)];
        }
        a[(row, v)] -= c[v] * p.s1;
        b[row] = c[v] * (f_prime(u0, p.eps) - p.s1 * u0);
        if let Node::Loop(k) = nodes[v] {
            a[(row, ig + k)] = h;
            for l in 0..nl {
                let vl = nodes.iter().position(|nd| *nd == Node::Loop(l)).unwrap();
                a[(row, vl)] -= hg[(k, l)];
            }
            a[(row, v)] -= h * p.s2;
            b[row] += h * (g_prime(u0, p.delta) - p.s2 * u0);
        }
        row += 1;
    }
    assert_eq!(row, dim);
    let x = a.lu().solve(&b).expect("dense system is nonsingular");
    DenseStep {
        phi: x.rows(0, nv).iter().copied().collect(),
        mu: x.rows(im, nv).iter().copied().collect(),
        mu_gamma: x.rows(ig, nl).iter().copied().collect(),
    }
}

/// Largest difference between the sparse solution vector and the dense one,
/// over every block.
pub fn max_block_difference(
    x: &[f64],
    layout: &hypch::scheme::UnknownLayout,
    grid: &Grid,
    dense: &DenseStep,
) -> f64 {
    let nodes = vertex_nodes(grid);
    let mut worst: f64 = 0.0;
    for (v, node) in nodes.iter().enumerate() {
        worst = worst.max((x[layout.phi_col(*node)] - dense.phi[v]).abs());
        worst = worst.max((x[layout.mu_col(*node)] - dense.mu[v]).abs());
    }
    for k in 0..grid.n_loop() {
        worst = worst.max((x[layout.mu_gamma + k] - dense.mu_gamma[k]).abs());
    }
    worst
}

/// Case 3 data with reproducible nonzero rates.
pub fn oracle_state(grid: &Grid, with_rates: bool) -> State {
    use rand::{Rng, SeedableRng};
    let f = |x: f64, y: f64| (2.0 * std::f64::consts::PI * x).sin() * (2.0 * std::f64::consts::PI * y).cos();
    let mut s = State::new(grid, BulkField::from_fn(grid, f), LoopField::from_fn(grid, f)).unwrap();
    if with_rates {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        s.phi_rate.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
        s.psi_rate.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
    }
    s
}
