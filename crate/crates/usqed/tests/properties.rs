use ndarray::Array2;
use num_complex::Complex64 as C64;
use proptest::prelude::*;
use usqed::cli::fmt_e;
use usqed::floquet::to_zone;
use usqed::qops::{build_algebra, dagger, identity, max_abs, parity_operator, HilbertSpec};

proptest! {
    #[test]
    fn fmt_e_is_c_style_and_round_trips(x in -1e30f64..1e30) {
        let s = fmt_e(x);
        // d.dddddddddddde[+-]dd (at least two exponent digits)
        let (mant, exp) = s.split_once('e').unwrap();
        let mant = mant.strip_prefix('-').unwrap_or(mant);
        prop_assert_eq!(mant.len(), 14);
        prop_assert_eq!(mant.as_bytes()[1], b'.');
        prop_assert!(exp.starts_with('+') || exp.starts_with('-'));
        prop_assert!(exp.len() >= 3);
        let back: f64 = s.parse().unwrap();
        let scale = x.abs().max(1e-300);
        prop_assert!((back - x).abs() / scale < 1e-11);
    }

    #[test]
    fn to_zone_lands_in_the_zone_and_preserves_phase(
        x in -50.0f64..50.0,
        omega_d in 0.1f64..10.0,
    ) {
        let z = to_zone(x, omega_d);
        prop_assert!(z > -omega_d / 2.0 - 1e-12 && z <= omega_d / 2.0 + 1e-12);
        let k = (x - z) / omega_d;
        prop_assert!((k - k.round()).abs() < 1e-9, "offset {k} not an integer");
    }

    #[test]
    fn parity_is_a_hermitian_involution(cutoff in 2usize..24) {
        let space = HilbertSpec::rabi(cutoff).unwrap();
        let p = parity_operator(&space).unwrap();
        prop_assert!(max_abs(&(p.matrix.dot(&p.matrix) - identity(space.dim()))) < 1e-12);
        prop_assert!(max_abs(&(dagger(&p.matrix) - &p.matrix)) < 1e-12);
    }

    #[test]
    fn truncated_ccr_holds_below_the_edge(cutoff in 3usize..30) {
        let space = HilbertSpec::new(cutoff, 1, 0).unwrap();
        let alg = build_algebra(&space).unwrap();
        let comm = alg.a[0].dot(&alg.adag[0]) - alg.adag[0].dot(&alg.a[0]);
        // [a, a'] = 1 except in the edge entry, which carries -(N-1)
        for i in 0..cutoff - 1 {
            prop_assert!((comm[[i, i]] - C64::new(1.0, 0.0)).norm() < 1e-12);
        }
        prop_assert!(
            (comm[[cutoff - 1, cutoff - 1]] - C64::new(1.0 - cutoff as f64, 0.0)).norm() < 1e-12
        );
    }

    #[test]
    fn arbitrary_bytes_never_panic_the_config_parser(
        cmd_sel in 0usize..7,
        bytes in proptest::collection::vec(any::<u8>(), 0..400),
    ) {
        const COMMANDS: [&str; 7] = [
            "spectrum", "validity-map", "steady", "g2", "floquet", "gauge-scan", "nope",
        ];
        let _ = usqed::cli::check_config(COMMANDS[cmd_sel], &bytes);
    }

    #[test]
    fn spin_algebra_su2_relations(cutoff in 2usize..16) {
        let space = HilbertSpec::rabi(cutoff).unwrap();
        let alg = build_algebra(&space).unwrap();
        let two_i_sz: Array2<C64> = (alg.sx[0].dot(&alg.sy[0]) - alg.sy[0].dot(&alg.sx[0]))
            .mapv(|z| z);
        let expect = alg.sz[0].mapv(|z| z * C64::new(0.0, 2.0));
        prop_assert!(max_abs(&(two_i_sz - expect)) < 1e-12);
        prop_assert!(max_abs(&(alg.sx[0].dot(&alg.sx[0]) - identity(space.dim()))) < 1e-12);
    }
}
