use globalsdp::kkt::kkt_residuals;
use globalsdp::oracle::{sup_bisection, GridSpec};
use globalsdp::problems::{assemble_truss_matrices, make_fractional, TrussModel};
use globalsdp::solver::{feasibility_margin, InnerOpts};
use globalsdp::{gen_eig_min, SymMat, XBox};
use proptest::prelude::*;

fn spd(n: usize) -> impl Strategy<Value = SymMat> {
    proptest::collection::vec(-1.0..1.0f64, n * n).prop_map(move |g| {
        SymMat::from_fn(n, |i, j| (0..n).map(|k| g[i * n + k] * g[j * n + k]).sum::<f64>() + if i == j { 0.5 } else { 0.0 })
    })
}

fn sym(n: usize) -> impl Strategy<Value = SymMat> {
    proptest::collection::vec(-3.0..3.0f64, n * (n + 1) / 2).prop_map(|d| SymMat::from_packed(d).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn eigh_is_orthonormal_and_reconstructs(a in (1usize..7).prop_flat_map(sym)) {
        let s = a.eigh().unwrap();
        let n = a.dim();
        let q = s.eigenvector_matrix();
        for i in 0..n {
            for j in 0..n {
                let dot: f64 = (0..n).map(|k| q[i * n + k] * q[j * n + k]).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                prop_assert!((dot - want).abs() <= 1e-10);
            }
        }
        let r = s.reconstruct();
        for i in 0..n {
            for j in 0..=i {
                prop_assert!((r.get(i, j) - a.get(i, j)).abs() <= 1e-8 * a.max_abs().max(1.0));
            }
        }
        prop_assert!(s.eigenvalues().windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn generalized_eigenvalue_is_the_sup(k in sym(4), m in spd(4)) {
        let direct = gen_eig_min(&k, &m).unwrap();
        let sup = sup_bisection(&k, &m, 1e-15).unwrap();
        prop_assert!((direct - sup).abs() <= 1e-8 * (1.0 + direct.abs()));
    }

    #[test]
    fn truss_eigenvalue_rises_with_uniform_scaling(s in 1.0..3.0f64) {
        // with nonstructural mass, scaling all areas up raises λ
        let t = TrussModel::two_bar();
        let mats = assemble_truss_matrices(&t).unwrap();
        let x = [0.3, 0.4];
        let xs = [0.3 * s, 0.4 * s];
        prop_assert!(mats.fundamental_eigenvalue(&xs).unwrap() >= mats.fundamental_eigenvalue(&x).unwrap() - 1e-12);
    }

    #[test]
    fn margin_is_nondecreasing_in_y(y1 in -0.5..1.5f64, dy in 0.0..0.5f64, x0 in 0.0..10.0f64) {
        let p = make_fractional();
        let opts = InnerOpts::default();
        let a = feasibility_margin(&p, y1, &[x0], &opts).unwrap();
        let b = feasibility_margin(&p, y1 + dy, &[x0], &opts).unwrap();
        prop_assert!(b.t >= a.t - 1e-9);
    }

    #[test]
    fn residuals_scale_with_multipliers(c in 0.1..10.0f64) {
        // at the analytic optimum of the fractional program only stat_y moves
        let p = make_fractional();
        let r = kkt_residuals(&p, &[0.0], 0.0, &SymMat::from_diag(&[c]), &SymMat::from_diag(&[c])).unwrap();
        prop_assert!((r.stat_y - (1.0 - c).abs()).abs() <= 1e-12);
        prop_assert!(r.stat_x <= 1e-12 && r.comp_a <= 1e-12 && r.comp_b <= 1e-12);
    }

    #[test]
    fn grid_points_stay_in_range(lo in -5.0..5.0f64, w in 0.0..3.0f64, step in 0.05..1.0f64, i in 0u64..1000) {
        let g = GridSpec::new(vec![lo, lo], vec![lo + w, lo + 2.0 * w], vec![step, step]).unwrap();
        let x = g.point(i % g.points());
        prop_assert!(x[0] >= lo && x[0] <= lo + w);
        prop_assert!(x[1] >= lo && x[1] <= lo + 2.0 * w);
    }

    #[test]
    fn box_projection_is_idempotent(v in proptest::collection::vec(-20.0..20.0f64, 3)) {
        let b = XBox::new(vec![-1.0, 0.0, 2.0], vec![1.0, 5.0, 2.5]).unwrap();
        let mut p = v.clone();
        b.project(&mut p);
        prop_assert!(b.contains(&p));
        let mut q = p.clone();
        b.project(&mut q);
        prop_assert_eq!(p, q);
    }
}
