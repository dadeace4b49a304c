use cgep_model::eece::{fuse_event, fuse_rows, fuse_semantic};
use cgep_model::tape::Tape;
use cgep_model::tensor::Matrix;
use proptest::prelude::*;

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Scalar-loop reference: `g_i = σ(Σ_j W_ij a_j + Σ_j U_ij b_j)`, `g_i a_i + (1 − g_i) b_i`.
fn oracle(a: &[f64], b: &[f64], w: &[f64], u: &[f64]) -> Vec<f64> {
    let d = a.len();
    (0..d)
        .map(|i| {
            let mut s = 0.0;
            for j in 0..d {
                s += w[i * d + j] * a[j] + u[i * d + j] * b[j];
            }
            let g = sigmoid(s);
            g * a[i] + (1.0 - g) * b[i]
        })
        .collect()
}

fn case() -> impl Strategy<Value = (usize, usize, Vec<f64>)> {
    (1usize..6, 1usize..4).prop_flat_map(|(d, rows)| {
        let n = 2 * rows * d + 2 * d * d;
        (Just(d), Just(rows), prop::collection::vec(-3.0f64..3.0, n))
    })
}

proptest! {
    #[test]
    fn tape_and_plain_match_scalar_loop((d, rows, xs) in case()) {
        let (a, rest) = xs.split_at(rows * d);
        let (b, rest) = rest.split_at(rows * d);
        let (w, u) = rest.split_at(d * d);
        let (wm, um) = (Matrix::from_vec(d, d, w.to_vec()), Matrix::from_vec(d, d, u.to_vec()));
        let mut tape = Tape::<f64>::new();
        let av = tape.constant(Matrix::from_vec(rows, d, a.to_vec()));
        let bv = tape.constant(Matrix::from_vec(rows, d, b.to_vec()));
        let wv = tape.constant(wm.clone());
        let uv = tape.constant(um.clone());
        let out = fuse_rows(&mut tape, av, bv, wv, uv);
        for r in 0..rows {
            let ar = &a[r * d..(r + 1) * d];
            let br = &b[r * d..(r + 1) * d];
            let want = oracle(ar, br, w, u);
            let plain_r = fuse_semantic(ar, br, &wm, &um).unwrap();
            let plain_e = fuse_event(ar, br, &wm, &um).unwrap();
            for i in 0..d {
                prop_assert!((tape.value(out).get(r, i) - want[i]).abs() < 1e-12);
                prop_assert!((plain_r[i] - want[i]).abs() < 1e-12);
                prop_assert!((plain_e[i] - want[i]).abs() < 1e-12);
                // the output stays between the two inputs
                let (lo, hi) = (ar[i].min(br[i]), ar[i].max(br[i]));
                prop_assert!(want[i] >= lo - 1e-12 && want[i] <= hi + 1e-12);
            }
        }
    }
}
