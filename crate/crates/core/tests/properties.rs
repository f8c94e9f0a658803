use iterint::coefficients::{default_degree, for_each_index};
use iterint::combinatorics::{multiplicity_structure, MAX_PARTITION_K};
use iterint::expansion::{LegendreCoarsener, TermEvaluator};
use iterint::*;
use proptest::prelude::*;
use std::collections::BTreeSet;

/// Every set of `r` disjoint pairs over `{0..k}`, found by brute force over
/// subsets of all `k(k-1)/2` pairs.
fn brute_force_matchings(k: usize, r: usize) -> BTreeSet<Vec<(usize, usize)>> {
    let all: Vec<(usize, usize)> = (0..k).flat_map(|a| (a + 1..k).map(move |b| (a, b))).collect();
    let mut out = BTreeSet::new();
    for mask in 0u64..(1u64 << all.len()) {
        if mask.count_ones() as usize != r {
            continue;
        }
        let chosen: Vec<(usize, usize)> = (0..all.len()).filter(|&e| mask >> e & 1 == 1).map(|e| all[e]).collect();
        let mut used = vec![false; k];
        let disjoint = chosen.iter().all(|&(a, b)| {
            let ok = !used[a] && !used[b];
            used[a] = true;
            used[b] = true;
            ok
        });
        if disjoint {
            out.insert(chosen);
        }
    }
    out
}

fn factorial(n: usize) -> u128 {
    (1..=n as u128).product()
}

#[test]
fn partition_count_matches_brute_force() {
    for k in 2..=7 {
        for r in 1..=k / 2 {
            let listed = enumerate_pair_partitions(k, r).unwrap();
            let brute = brute_force_matchings(k, r);
            assert_eq!(listed.len(), brute.len(), "k={k} r={r}");
            let got: BTreeSet<Vec<(usize, usize)>> = listed.iter().map(|p| p.pairs().to_vec()).collect();
            assert_eq!(got, brute);
            let formula = factorial(k) / (2u128.pow(r as u32) * factorial(r) * factorial(k - 2 * r));
            assert_eq!(pair_partition_count(k, r), formula);
        }
    }
}

#[test]
fn partition_count_law_up_to_cap() {
    for k in 1..=MAX_PARTITION_K {
        for r in 0..=k / 2 {
            let formula = factorial(k) / (2u128.pow(r as u32) * factorial(r) * factorial(k - 2 * r));
            assert_eq!(pair_partition_count(k, r), formula);
        }
    }
    // Involutions: Σ_r count(k, r) is the telephone number.
    let telephone = [1u128, 1, 2, 4, 10, 26, 76, 232, 764, 2620, 9496, 35696, 140152];
    for (k, &t) in telephone.iter().enumerate().skip(1) {
        assert_eq!((0..=k / 2).map(|r| pair_partition_count(k, r)).sum::<u128>(), t);
    }
}

fn table(seed: u64, m: usize, p: usize) -> GaussianTable64 {
    sample_table(seed, m, p, BasisKind::LegendreShifted, Interval::new(0.0, 0.8).unwrap()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn partitions_round_trip_through_text(k in 2usize..=11, r_frac in 0.0f64..1.0) {
        let r = 1 + ((k / 2 - 1) as f64 * r_frac).round() as usize;
        let listed = enumerate_pair_partitions(k, r).unwrap();
        let mut seen = BTreeSet::new();
        for p in &listed {
            let text = p.to_string();
            let back: PairPartition = text.parse().unwrap();
            prop_assert_eq!(&back, p);
            prop_assert_eq!(p.singles().len(), k - 2 * r);
            for &(a, b) in p.pairs() {
                prop_assert!(a < b);
            }
            prop_assert!(seen.insert(text));
        }
        prop_assert!(listed.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn three_forms_agree(
        seed in any::<u64>(),
        idx in prop::collection::vec((0usize..=3, 0usize..=3), 1..=7),
    ) {
        let tab = table(seed, 3, 3);
        let mi = MultiIndex::new(idx.iter().map(|x| x.0).collect()).unwrap();
        let jx: Vec<usize> = idx.iter().map(|x| x.1).collect();
        let a = term_partition(&mi, &jx, &tab).unwrap();
        let b = term_hermite(&mi, &jx, &tab).unwrap();
        let c = term_recurrence(&mi, &jx, &tab).unwrap();
        let scale = a.abs().max(b.abs()).max(c.abs()).max(1.0);
        prop_assert!((a - b).abs() <= 1e-10 * scale, "{} vs {}", a, b);
        prop_assert!((a - c).abs() <= 1e-10 * scale, "{} vs {}", a, c);
    }

    #[test]
    fn term_is_symmetric_under_joint_permutation(
        seed in any::<u64>(),
        idx in prop::collection::vec((0usize..=2, 0usize..=2), 2..=5),
        shift in 0usize..5,
    ) {
        // J'' sums over all time orderings, so it depends only on the multiset
        // of (i, j) pairs.
        let tab = table(seed, 2, 2);
        let mut rotated = idx.clone();
        rotated.rotate_left(shift % idx.len());
        let eval = |v: &[(usize, usize)]| {
            let mi = MultiIndex::new(v.iter().map(|x| x.0).collect()).unwrap();
            let jx: Vec<usize> = v.iter().map(|x| x.1).collect();
            term_hermite(&mi, &jx, &tab).unwrap()
        };
        let (a, b) = (eval(&idx), eval(&rotated));
        prop_assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0));
    }

    #[test]
    fn residual_is_nonnegative_and_monotone(
        k in 1usize..=3,
        weights in prop::collection::vec((0u32..=2, 0.25f64..2.0), 3),
        start in -1.0f64..1.0,
        len in 0.2f64..2.0,
        basis in prop_oneof![Just(BasisKind::LegendreShifted), Just(BasisKind::Trigonometric)],
    ) {
        let iv = Interval::new(start, start + len).unwrap();
        let ws = weights[..k]
            .iter()
            .map(|&(q, s)| if q == 0 { WeightSpec::constant(s) } else { WeightSpec::PowerOfElapsed { q, scale: s } })
            .collect();
        let ks = KernelSpec::new(ws, iv).unwrap();
        let pmax = if k == 3 { 3 } else { 5 };
        let degree = default_degree(&ks, pmax);
        let full = build_tensor(&ks, &vec![pmax; k], basis, degree).unwrap();
        let mut last = f64::INFINITY;
        for p in 0..=pmax {
            let t = full.truncate(&vec![p; k]).unwrap();
            let res = truncation_residual(&ks, &t).unwrap();
            prop_assert!(res >= -1e-10);
            prop_assert!(res <= last + 1e-12);
            last = res;
        }
    }

    #[test]
    fn expansion_is_linear_in_coefficients(seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let iv = Interval::new(0.0, 0.8).unwrap();
        let k1 = KernelSpec::unit(2, iv).unwrap();
        let k2 = KernelSpec::new(vec![WeightSpec::PowerOfElapsed { q: 1, scale: 1.0 }, WeightSpec::constant(2.0)], iv).unwrap();
        let t1 = build_tensor(&k1, &[2, 3], BasisKind::LegendreShifted, 16).unwrap();
        let t2 = build_tensor(&k2, &[2, 3], BasisKind::LegendreShifted, 16).unwrap();
        let combined: Vec<f64> = t1.values().iter().zip(t2.values()).map(|(x, y)| a * x + b * y).collect();
        let t3 = CoefficientTensor::from_values(vec![2, 3], combined, BasisKind::LegendreShifted, iv).unwrap();
        let tab = table(seed, 2, 3);
        for mi in [vec![1, 2], vec![2, 2], vec![0, 1]] {
            let mi = MultiIndex::new(mi).unwrap();
            let f = |t: &CoefficientTensor64| approximate_integral(t, &mi, &tab, TermForm::Recurrence).unwrap();
            let lhs = f(&t3);
            let rhs = a * f(&t1) + b * f(&t2);
            prop_assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1.0));
        }
    }

    #[test]
    fn tensor_archive_round_trips(p1 in 0usize..4, p2 in 0usize..4, q in 0u32..3) {
        let iv = Interval::new(0.25, 1.5).unwrap();
        let ks = KernelSpec::new(vec![WeightSpec::PowerOfElapsed { q, scale: 1.5 }, WeightSpec::unit()], iv).unwrap();
        let t = build_tensor(&ks, &[p1, p2], BasisKind::Trigonometric, 16).unwrap();
        let back = CoefficientTensor64::from_json(&t.to_json()).unwrap();
        prop_assert_eq!(back, t);
    }

    #[test]
    fn multiplicity_blocks_cover_positions(mi in prop::collection::vec(0usize..4, 1..10)) {
        let ms = multiplicity_structure(&mi);
        let mut all: Vec<usize> = ms.block_positions().iter().flatten().copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..mi.len()).collect::<Vec<_>>());
        for (v, block) in ms.distinct_values().iter().zip(ms.block_positions()) {
            prop_assert!(block.iter().all(|&q| mi[q] == *v));
        }
        prop_assert_eq!(ms.multiplicities().iter().sum::<usize>(), mi.len());
    }

    #[test]
    fn single_precision_tracks_double(seed in any::<u64>()) {
        let t64 = table(seed, 2, 2);
        let iv32 = Interval::new(0.0f32, 0.8).unwrap();
        let rows: Vec<Vec<f32>> = (1..=2).map(|i| t64.row(i).iter().map(|&v| v as f32).collect()).collect();
        let t32 = GaussianTable32::from_rows(rows, BasisKind::LegendreShifted, iv32).unwrap();
        let mi = MultiIndex::new(vec![1, 1, 2]).unwrap();
        let jx = [1, 1, 0];
        let a = term_hermite(&mi, &jx, &t64).unwrap();
        let b = term_hermite(&mi, &jx, &t32).unwrap();
        prop_assert!((a - b as f64).abs() <= 1e-4 * a.abs().max(1.0));
    }
}

#[test]
fn full_grid_equivalence_small_k() {
    let tab = table(2024, 2, 2);
    for k in 1..=4usize {
        let partition = TermEvaluator::new(k, TermForm::Partition).unwrap();
        let count = 3usize.pow(k as u32);
        for icode in 0..count {
            for jcode in 0..count {
                let digits = |c: usize| (0..k).map(|l| c / 3usize.pow(l as u32) % 3).collect::<Vec<_>>();
                let mi = MultiIndex::new(digits(icode)).unwrap();
                let jx = digits(jcode);
                let a = partition.eval(&mi, &jx, &tab).unwrap();
                let b = term_hermite(&mi, &jx, &tab).unwrap();
                let c = term_recurrence(&mi, &jx, &tab).unwrap();
                let scale = a.abs().max(1.0);
                assert!((a - b).abs() <= 1e-10 * scale && (a - c).abs() <= 1e-10 * scale);
            }
        }
    }
}

#[test]
fn double_integral_closed_forms() {
    // With ψ ≡ 1 the k = 2 expansion reproduces the Itô identities at every p.
    let iv = Interval::new(0.0, 0.5).unwrap();
    let ks = KernelSpec::unit(2, iv).unwrap();
    let tab = sample_table(77, 2, 6, BasisKind::LegendreShifted, iv).unwrap();
    let dw = |i: usize| 0.5f64.sqrt() * tab.get(i, 0);
    for p in [0, 2, 6] {
        let t = build_tensor(&ks, &[p, p], BasisKind::LegendreShifted, 16).unwrap();
        let j = |a: usize, b: usize| approximate_integral(&t, &MultiIndex::new(vec![a, b]).unwrap(), &tab, TermForm::Hermite).unwrap();
        assert!((j(1, 1) - (dw(1) * dw(1) - 0.5) / 2.0).abs() < 1e-12);
        assert!((j(1, 2) + j(2, 1) - dw(1) * dw(2)).abs() < 1e-12);
        assert!((j(0, 1) + j(1, 0) - 0.5 * dw(1)).abs() < 1e-12);
    }
}

#[test]
fn coarsening_matches_direct_projection() {
    // A Legendre polynomial path-functional computed on halves and merged
    // equals the whole-interval value: check with deterministic "increments"
    // dw = f(τ) dτ, for which ζ_j = ∫ φ_j f dτ exactly.
    let p = 5;
    let f = |t: f64| 1.0 + t - 3.0 * t * t + t.powi(4);
    let rule = gauss_legendre::<f64>(12).unwrap();
    let project = |iv: &Interval64| -> Vec<f64> {
        (0..=p).map(|j| rule.integrate(iv, |t| eval_basis(BasisKind::LegendreShifted, j, t, iv).unwrap() * f(t))).collect()
    };
    let whole = Interval::new(0.0, 1.0).unwrap();
    let pieces: Vec<Interval64> = whole.panels(4);
    let mut stacked = Vec::new();
    for piece in &pieces {
        stacked.extend(project(piece));
    }
    let merger = LegendreCoarsener::<f64>::new(4, p).unwrap();
    let mut out = vec![0.0; p + 1];
    merger.merge_row(&stacked, &mut out);
    for (a, b) in out.iter().zip(project(&whole)) {
        assert!((a - b).abs() < 1e-13, "{a} vs {b}");
    }
}

#[test]
fn lexicographic_index_order() {
    let mut seen = Vec::new();
    for_each_index(&[1, 2], |jx| seen.push(jx.to_vec()));
    assert_eq!(seen, vec![vec![0, 0], vec![0, 1], vec![0, 2], vec![1, 0], vec![1, 1], vec![1, 2]]);
}
