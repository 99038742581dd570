//! Property-based invariants over randomized inputs.

use num_complex::Complex64;
use proptest::prelude::*;

use natocc::fock::{apply_excitation, enumerate_determinants, sector_filter, SectorLabel};
use natocc::linalg::eigh;
use natocc::rdm::one_rdm;
use natocc::sector_map::{build_amplitude_map, invert_map};

fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let mut acc = 1usize;
    for i in 0..k {
        acc = acc * (n - i) / (i + 1);
    }
    acc
}

proptest! {
    #[test]
    fn enumeration_is_a_bijection(n in 0usize..5, sites in 1usize..5) {
        prop_assume!(n <= 2 * sites);
        let dets = enumerate_determinants(n, sites).unwrap();
        prop_assert_eq!(dets.len(), binomial(2 * sites, n));
        for w in dets.windows(2) {
            prop_assert!(w[0].bits() < w[1].bits());
        }
        for d in &dets {
            prop_assert_eq!(d.particle_count(), n);
        }
    }

    #[test]
    fn sector_sizes_partition_every_basis(n in 1usize..4, sites in 2usize..5) {
        prop_assume!(n <= 2 * sites);
        let dets = enumerate_determinants(n, sites).unwrap();
        let mut total = 0usize;
        for two_m in -(n as i64)..=n as i64 {
            for bloch in 0..sites {
                total += sector_filter(&dets, SectorLabel::new(two_m, bloch), sites).len();
            }
        }
        prop_assert_eq!(total, dets.len());
    }

    #[test]
    fn excitation_round_trip_sign(index in 0usize..56, p in 0usize..8, q in 0usize..8) {
        let dets = enumerate_determinants(3, 4).unwrap();
        let d = dets[index % dets.len()];
        prop_assume!(p != q && !d.occupied(p) && d.occupied(q));
        let (mid, s1) = apply_excitation(d, p, q).unwrap();
        let (back, s2) = apply_excitation(mid, q, p).unwrap();
        prop_assert_eq!(back, d);
        prop_assert_eq!(s1 * s2, 1);
    }

    #[test]
    fn one_body_matrix_is_physical(seed in 0u64..500) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
        let basis = enumerate_determinants(3, 3).unwrap();
        let mut psi: Vec<Complex64> = (0..basis.len())
            .map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
            .collect();
        let norm = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        for z in &mut psi {
            *z /= norm;
        }
        let rdm = one_rdm(&psi, &basis, 6).unwrap();
        prop_assert!(natocc::linalg::hermiticity_error(&rdm.gamma) < 1e-12);
        prop_assert!((rdm.trace() - 3.0).abs() < 1e-10);
        let (vals, _) = eigh(&rdm.gamma);
        for v in vals {
            prop_assert!(v > -1e-10 && v < 1.0 + 1e-9);
        }
    }

    #[test]
    fn amplitude_map_round_trip(raw in proptest::collection::vec(1e-6..1.0f64, 6)) {
        let dets = enumerate_determinants(3, 4).unwrap();
        let basis = sector_filter(&dets, SectorLabel::new(1, 1), 4);
        let map = build_amplitude_map(&basis, 4).unwrap();
        let set = invert_map(&map).unwrap();
        let total: f64 = raw.iter().sum();
        let f: Vec<f64> = raw.iter().map(|x| x / total).collect();
        let n = map.occupations_from_amplitudes(&f);
        let back = set.amplitudes_from_occupations(&n).unwrap();
        for (a, b) in f.iter().zip(back.iter()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
