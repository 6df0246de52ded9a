mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sgn_core::sparse::stack_kkt_blocks;
use sgn_core::{CscMatrix, DenseMatrix, TripletMatrix};

fn random_triplets(rng: &mut ChaCha8Rng, rows: usize, cols: usize, density: f64) -> TripletMatrix {
    let mut t = TripletMatrix::new(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            if rng.random::<f64>() < density {
                t.push(i, j, rng.random_range(-1.0..1.0));
                // duplicates must be summed
                if rng.random::<f64>() < 0.1 {
                    t.push(i, j, rng.random_range(-1.0..1.0));
                }
            }
        }
    }
    t
}

#[test]
fn matvec_matches_triplet_accumulation() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let t = random_triplets(&mut rng, 20, 20, 0.2);
    let m = t.to_csc().unwrap();
    for _ in 0..10 {
        let v: Vec<f64> = (0..20).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut oracle = vec![0.0; 20];
        for &(i, j, a) in t.entries() {
            oracle[i] += a * v[j];
        }
        let y = m.spmv(&v).unwrap();
        assert!(common::rel(&y, &oracle) <= 1e-14);
    }
}

#[test]
fn dense_expansion_of_rectangular_matrix() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let t = random_triplets(&mut rng, 15, 7, 0.3);
    let mut oracle = DenseMatrix::zeros(15, 7);
    for &(i, j, a) in t.entries() {
        oracle[(i, j)] += a;
    }
    let d = t.to_csc().unwrap().to_dense();
    assert!(common::max_abs_diff(&d, &oracle) <= 1e-14);
}

#[test]
fn kkt_blocks_equal_dense_concatenation() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (nx, np) = (8, 3);
    let mut blk = |r, c| random_triplets(&mut rng, r, c, 0.4).to_csc().unwrap();
    let a0 = blk(nx, nx);
    let a = a0.add_scaled(1.0, &a0.transpose()).unwrap();
    let c0 = blk(np, np);
    let c = c0.add_scaled(1.0, &c0.transpose()).unwrap();
    let b = blk(np, nx);
    let jx = blk(nx, nx);
    let jp = blk(nx, np);
    let k = stack_kkt_blocks(&a, &b, &c, &jx, &jp).unwrap().to_dense();
    let n = 2 * nx + np;
    let (ad, bd, cd, jxd, jpd) = (
        a.to_dense(),
        b.to_dense(),
        c.to_dense(),
        jx.to_dense(),
        jp.to_dense(),
    );
    let oracle = DenseMatrix::from_fn(n, n, |i, j| {
        let blk = |v: usize| {
            if v < nx {
                0
            } else if v < nx + np {
                1
            } else {
                2
            }
        };
        let (bi, bj) = (blk(i), blk(j));
        let (li, lj) = (i - [0, nx, nx + np][bi], j - [0, nx, nx + np][bj]);
        match (bi, bj) {
            (0, 0) => ad[(li, lj)],
            (0, 1) => bd[(lj, li)],
            (0, 2) => jxd[(lj, li)],
            (1, 0) => bd[(li, lj)],
            (1, 1) => cd[(li, lj)],
            (1, 2) => jpd[(lj, li)],
            (2, 0) => jxd[(li, lj)],
            (2, 1) => jpd[(li, lj)],
            _ => 0.0,
        }
    });
    assert_eq!(common::max_abs_diff(&k, &oracle), 0.0);
}

fn arb_matrix() -> impl Strategy<Value = (usize, usize, Vec<(usize, usize, f64)>)> {
    (1usize..12, 1usize..12).prop_flat_map(|(r, c)| {
        (
            Just(r),
            Just(c),
            prop::collection::vec((0..r, 0..c, -10.0f64..10.0), 0..40),
        )
    })
}

proptest! {
    #[test]
    fn csc_structure_is_canonical((r, c, e) in arb_matrix()) {
        let m = TripletMatrix::from_entries(r, c, e).to_csc().unwrap();
        let cp = m.col_ptr();
        prop_assert_eq!(cp.len(), c + 1);
        prop_assert_eq!(cp[c], m.nnz());
        for j in 0..c {
            let rows = &m.row_idx()[cp[j]..cp[j + 1]];
            prop_assert!(rows.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(rows.iter().all(|&i| i < r));
        }
    }

    #[test]
    fn transpose_is_an_involution_and_adjoint((r, c, e) in arb_matrix(), seed in 0u64..1000) {
        let m = TripletMatrix::from_entries(r, c, e).to_csc().unwrap();
        prop_assert_eq!(m.transpose().transpose(), m.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u: Vec<f64> = (0..r).map(|_| rng.random_range(-1.0..1.0)).collect();
        let v: Vec<f64> = (0..c).map(|_| rng.random_range(-1.0..1.0)).collect();
        let lhs: f64 = m.spmv(&v).unwrap().iter().zip(&u).map(|(a, b)| a * b).sum();
        let rhs: f64 = m.spmv_transpose(&u).unwrap().iter().zip(&v).map(|(a, b)| a * b).sum();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
    }

    #[test]
    fn matrix_market_round_trip_is_exact((r, c, e) in arb_matrix()) {
        let m = TripletMatrix::from_entries(r, c, e).to_csc().unwrap();
        let mut buf = Vec::new();
        m.write_matrix_market(&mut buf).unwrap();
        let back = CscMatrix::read_matrix_market(std::io::BufReader::new(&buf[..])).unwrap();
        prop_assert_eq!(back, m);
    }
}
