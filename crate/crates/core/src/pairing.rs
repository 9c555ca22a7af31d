//! Adjoint pairings `<X g, h>` against `<g, X* h>` in `X^0`.

use serde::Serialize;

use crate::backward::{op_b, op_g, op_l, op_t, solve_r, FixedPointOptions};
use crate::error::Result;
use crate::field::{inner_x0, norm_x0, SpaceTimeField};
use crate::forward::{solve_b_star, solve_g_star, solve_l_star, solve_r_star, solve_t_star};
use crate::model::Model;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Operator {
    T,
    G(usize),
    B,
    R,
    L,
}

impl Operator {
    pub fn label(&self) -> String {
        match self {
            Operator::T => "T".into(),
            Operator::G(j) => format!("G{}", j + 1),
            Operator::B => "B".into(),
            Operator::R => "R".into(),
            Operator::L => "L".into(),
        }
    }

    /// Every operator of the suite for `d` driving components.
    pub fn all(d: usize) -> Vec<Operator> {
        let mut v = vec![Operator::T];
        v.extend((0..d).map(Operator::G));
        v.extend([Operator::B, Operator::R, Operator::L]);
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Pairing {
    pub operator: Operator,
    /// `<X g, h>`.
    pub forward: f64,
    /// `<g, X* h>`.
    pub adjoint: f64,
    /// `|forward - adjoint| / (||g|| ||h||)`.
    pub mismatch: f64,
}

/// Evaluates one pairing.
pub fn pairing(
    model: &Model,
    op: Operator,
    g: &SpaceTimeField,
    h: &SpaceTimeField,
    opts: &FixedPointOptions,
) -> Result<Pairing> {
    let (grid, tree) = (model.grid, model.tree);
    let xg = match op {
        Operator::T => op_t(model, g)?,
        Operator::G(j) => op_g(model, g)?.swap_remove(j),
        Operator::B => op_b(model, g)?,
        Operator::R => solve_r(model, g, opts, None)?.g,
        Operator::L => op_l(model, g, opts)?.v,
    };
    let forward = inner_x0(&xg, h, grid, tree)?;
    drop(xg);
    let xh = match op {
        Operator::T => solve_t_star(model, h)?,
        Operator::G(j) => solve_g_star(model, j, h)?,
        Operator::B => solve_b_star(model, h)?,
        Operator::R => solve_r_star(model, h)?,
        Operator::L => solve_l_star(model, h)?,
    };
    let adjoint = inner_x0(g, &xh, grid, tree)?;
    let scale = norm_x0(g, grid, tree) * norm_x0(h, grid, tree);
    Ok(Pairing {
        operator: op,
        forward,
        adjoint,
        mismatch: if scale > 0.0 {
            (forward - adjoint).abs() / scale
        } else {
            0.0
        },
    })
}
