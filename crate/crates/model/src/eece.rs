//! Event enrichment: two sigmoid gates that blend an event's sentence context
//! and schema (event-type) representations into its token embeddings in the
//! graph template.
//!
//! `g_r = σ(W_r h_c + U_r h_s)`, `h_r = g_r ⊙ h_c + (1 − g_r) ⊙ h_s`,
//! `g_e = σ(W_e h_g + U_e h_r)`, `h̃_g = g_e ⊙ h_g + (1 − g_e) ⊙ h_r`.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::params::{ParamId, ParamStore};
use crate::tape::{sigmoid, Tape, Var};
use crate::tensor::{Matrix, Scalar};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FusionError {
    #[error("expected vectors of length {expected}, got {got}")]
    Shape { expected: usize, got: usize },
}

/// Ablation switches; each reproduces one reduced variant of the model.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ablation {
    /// Seeded random triple order instead of farthest-first.
    #[serde(default)]
    pub no_dist: bool,
    /// `h_r = h_s`.
    #[serde(default)]
    pub no_ctxt: bool,
    /// `h_r = h_c`.
    #[serde(default)]
    pub no_schm: bool,
    /// Drop the contrastive term from the objective.
    #[serde(default)]
    pub no_ctrst: bool,
}

impl Ablation {
    pub fn from_flag(flag: &str) -> Option<Self> {
        let mut a = Ablation::default();
        match flag {
            "no_dist" => a.no_dist = true,
            "no_ctxt" => a.no_ctxt = true,
            "no_schm" => a.no_schm = true,
            "no_ctrst" => a.no_ctrst = true,
            "none" => {}
            _ => return None,
        }
        Some(a)
    }

    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        if self.no_dist {
            parts.push("w/o Dist.");
        }
        if self.no_ctxt {
            parts.push("w/o Ctxt.");
        }
        if self.no_schm {
            parts.push("w/o Schm.");
        }
        if self.no_ctrst {
            parts.push("w/o Ctrst.");
        }
        if parts.is_empty() {
            "full".to_string()
        } else {
            parts.join(" ")
        }
    }

    /// Whether the graph template receives any enrichment at all.
    pub fn fuses(&self) -> bool {
        !(self.no_ctxt && self.no_schm)
    }
}

/// The four `d×d` gate matrices.
#[derive(Clone, Debug)]
pub struct FusionParams {
    pub w_r: ParamId,
    pub u_r: ParamId,
    pub w_e: ParamId,
    pub u_e: ParamId,
}

impl FusionParams {
    pub fn new<S: Scalar, R: Rng>(
        store: &mut ParamStore<S>,
        prefix: &str,
        hidden: usize,
        rng: &mut R,
    ) -> Self {
        let std = 1.0 / (hidden as f64).sqrt();
        FusionParams {
            w_r: store.add_normal(format!("{prefix}.w_r"), hidden, hidden, std, rng),
            u_r: store.add_normal(format!("{prefix}.u_r"), hidden, hidden, std, rng),
            w_e: store.add_normal(format!("{prefix}.w_e"), hidden, hidden, std, rng),
            u_e: store.add_normal(format!("{prefix}.u_e"), hidden, hidden, std, rng),
        }
    }
}

fn mat_vec<S: Scalar>(m: &Matrix<S>, x: &[S]) -> Vec<S> {
    (0..m.rows).map(|i| crate::tensor::dot(m.row(i), x)).collect()
}

fn check<S: Scalar>(w: &Matrix<S>, u: &Matrix<S>, a: &[S], b: &[S]) -> Result<(), FusionError> {
    let d = a.len();
    for got in [b.len(), w.rows, w.cols, u.rows, u.cols] {
        if got != d {
            return Err(FusionError::Shape { expected: d, got });
        }
    }
    Ok(())
}

/// `σ(W a + U b)` and `g ⊙ a + (1 − g) ⊙ b`.
pub fn gate<S: Scalar>(
    a: &[S],
    b: &[S],
    w: &Matrix<S>,
    u: &Matrix<S>,
) -> Result<(Vec<S>, Vec<S>), FusionError> {
    check(w, u, a, b)?;
    let wa = mat_vec(w, a);
    let ub = mat_vec(u, b);
    let g: Vec<S> = wa.iter().zip(&ub).map(|(&x, &y)| sigmoid(x + y)).collect();
    let out = g
        .iter()
        .zip(a.iter().zip(b))
        .map(|(&g, (&x, &y))| g * x + (S::one() - g) * y)
        .collect();
    Ok((g, out))
}

/// Event enrichment vector `h_r` from context `h_c` and schema `h_s`.
pub fn fuse_semantic<S: Scalar>(
    h_c: &[S],
    h_s: &[S],
    w_r: &Matrix<S>,
    u_r: &Matrix<S>,
) -> Result<Vec<S>, FusionError> {
    gate(h_c, h_s, w_r, u_r).map(|(_, out)| out)
}

/// Enriched token embedding `h̃_g` from the template embedding `h_g` and `h_r`.
pub fn fuse_event<S: Scalar>(
    h_g: &[S],
    h_r: &[S],
    w_e: &Matrix<S>,
    u_e: &Matrix<S>,
) -> Result<Vec<S>, FusionError> {
    gate(h_g, h_r, w_e, u_e).map(|(_, out)| out)
}

/// Row-batched gate on the tape: row `i` of the result fuses row `i` of `a` and `b`.
pub fn fuse_rows<S: Scalar>(tape: &mut Tape<S>, a: Var, b: Var, w: Var, u: Var) -> Var {
    let wa = tape.matmul_nt(a, w);
    let ub = tape.matmul_nt(b, u);
    let pre = tape.add(wa, ub);
    let g = tape.sigmoid(pre);
    // g ⊙ a + (1 − g) ⊙ b  ==  b + g ⊙ (a − b)
    let diff = tape.sub(a, b);
    let scaled = tape.mul(g, diff);
    tape.add(b, scaled)
}

/// The whole gate chain for single vectors, as tape nodes.
pub fn fuse_chain<S: Scalar>(
    tape: &mut Tape<S>,
    h_g: Var,
    h_c: Var,
    h_s: Var,
    params: [Var; 4],
) -> Var {
    let [w_r, u_r, w_e, u_e] = params;
    let h_r = fuse_rows(tape, h_c, h_s, w_r, u_r);
    fuse_rows(tape, h_g, h_r, w_e, u_e)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gates_average() {
        let z = Matrix::<f64>::zeros(3, 3);
        let out = fuse_semantic(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0], &z, &z).unwrap();
        assert_eq!(out, vec![2.0, 2.0, 2.0]);
        let out = fuse_event(&[0.0, 4.0, 0.0], &[2.0, 0.0, 0.0], &z, &z).unwrap();
        assert_eq!(out, vec![1.0, 2.0, 0.0]);
    }

    #[test]
    fn equal_inputs_pass_through() {
        let w = Matrix::from_vec(2, 2, vec![0.3, -1.0, 2.0, 0.1]);
        let u = Matrix::from_vec(2, 2, vec![-0.4, 0.5, 0.9, -2.0]);
        let h = [0.7f64, -1.3];
        let out = fuse_semantic(&h, &h, &w, &u).unwrap();
        for (a, b) in out.iter().zip(&h) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn saturated_gate_keeps_template_embedding() {
        let w = Matrix::from_vec(2, 2, vec![1e6, 0.0, 0.0, 1e6]);
        let u = Matrix::<f64>::zeros(2, 2);
        let out = fuse_event(&[1.0, 2.0], &[5.0, 5.0], &w, &u).unwrap();
        assert_eq!(out, vec![1.0, 2.0]);
    }

    #[test]
    fn shape_errors() {
        let w = Matrix::<f64>::zeros(2, 2);
        assert!(fuse_semantic(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0], &w, &w).is_err());
        assert!(fuse_semantic(&[1.0, 2.0], &[1.0], &w, &w).is_err());
    }

    #[test]
    fn ablation_flags() {
        assert!(Ablation::from_flag("no_ctxt").unwrap().no_ctxt);
        assert!(Ablation::from_flag("bogus").is_none());
        let both = Ablation {
            no_ctxt: true,
            no_schm: true,
            ..Ablation::default()
        };
        assert!(!both.fuses());
        assert_eq!(both.label(), "w/o Ctxt. w/o Schm.");
    }
}
