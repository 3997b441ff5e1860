//! Node-valued fields: one value per interior node, or one per loop node.

use std::ops::{Deref, DerefMut};

use crate::error::{Error, Result};
use crate::grid::{Grid, Node};

macro_rules! node_field {
    ($(#[$meta:meta])* $name:ident, $len:ident, $what:literal) => {
        $(#[$meta])*
        #[derive(Clone, Debug, PartialEq)]
        pub struct $name(Vec<f64>);

        impl $name {
            pub fn zeros(grid: &Grid) -> Self {
                Self(vec![0.0; grid.$len()])
            }

            pub fn constant(grid: &Grid, value: f64) -> Self {
                Self(vec![value; grid.$len()])
            }

            pub fn from_vec(grid: &Grid, values: Vec<f64>) -> Result<Self> {
                check_len($what, grid.$len(), values.len())?;
                Ok(Self(values))
            }

            pub fn into_vec(self) -> Vec<f64> {
                self.0
            }

            pub(crate) fn check(&self, grid: &Grid) -> Result<()> {
                check_len($what, grid.$len(), self.0.len())
            }
        }

        impl Deref for $name {
            type Target = [f64];
            fn deref(&self) -> &[f64] {
                &self.0
            }
        }

        impl DerefMut for $name {
            fn deref_mut(&mut self) -> &mut [f64] {
                &mut self.0
            }
        }
    };
}

node_field!(
    /// Values on the `(n-1)^2` interior nodes in grid ordering.
    BulkField,
    n_int,
    "bulk field"
);
node_field!(
    /// Values on the `4n` perimeter nodes in loop ordering.
    LoopField,
    n_loop,
    "loop field"
);

impl BulkField {
    /// Samples `f(x, y)` at every interior node.
    pub fn from_fn(grid: &Grid, f: impl Fn(f64, f64) -> f64) -> Self {
        Self(
            (0..grid.n_int())
                .map(|idx| {
                    let (i, j) = grid.interior_coords(idx);
                    let (x, y) = grid.position(i, j);
                    f(x, y)
                })
                .collect(),
        )
    }
}

impl LoopField {
    /// Samples `f(x, y)` at every perimeter node.
    pub fn from_fn(grid: &Grid, f: impl Fn(f64, f64) -> f64) -> Self {
        Self(
            (0..grid.n_loop())
                .map(|k| {
                    let (i, j) = grid.loop_coords(k);
                    let (x, y) = grid.position(i, j);
                    f(x, y)
                })
                .collect(),
        )
    }
}

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::SizeMismatch {
            what,
            expected,
            got,
        });
    }
    Ok(())
}

/// Reads a vertex value, taking boundary values from the loop field.
#[inline]
pub fn node_value(phi: &[f64], psi: &[f64], node: Node) -> f64 {
    match node {
        Node::Interior(idx) => phi[idx],
        Node::Loop(k) => psi[k],
    }
}

/// Assembles the full `(n+1) x (n+1)` vertex array, x fastest.
pub fn full_field(phi: &BulkField, psi: &LoopField, grid: &Grid) -> Result<Vec<f64>> {
    phi.check(grid)?;
    psi.check(grid)?;
    let n = grid.n();
    let mut out = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            out.push(node_value(phi, psi, grid.node(i, j).expect("in range")));
        }
    }
    Ok(out)
}

/// Splits an `(n+1)^2` vertex array back into interior and loop fields.
pub fn split_full(full: Vec<f64>, grid: &Grid) -> Result<(BulkField, LoopField)> {
    check_len("vertex field", grid.vertex_count(), full.len())?;
    let mut phi = vec![0.0; grid.n_int()];
    let mut psi = vec![0.0; grid.n_loop()];
    for (v, x) in full.into_iter().enumerate() {
        match grid.vertex_node(v) {
            Node::Interior(i) => phi[i] = x,
            Node::Loop(k) => psi[k] = x,
        }
    }
    Ok((BulkField::from_vec(grid, phi)?, LoopField::from_vec(grid, psi)?))
}
