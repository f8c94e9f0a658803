//! Release acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any criterion fails.

use std::collections::BTreeSet;
use std::time::Instant;

use iterint::oracle::coupled_mse_curve;
use iterint::rng::{derive_seed, normal_at};
use iterint::sde::{strong_error, CatalogSystem, Reference, Scheme, SchemeConfig, StrongErrorRow};
use iterint::stats::{log_log_slope, MeanEstimate};
use iterint::*;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * 1f64.max(a.abs()).max(b.abs())
}

fn mi(v: &[usize]) -> MultiIndex {
    MultiIndex::new(v.to_vec()).unwrap()
}

fn check(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

// ---------------------------------------------------------------------------
// 1. partition counts

fn partition_counts() -> Outcome {
    for (k, r, want) in [(2, 1, 1), (4, 2, 3), (4, 1, 6), (5, 1, 10), (5, 2, 15)] {
        let got = enumerate_pair_partitions(k, r).map_err(|e| e.to_string())?.len();
        check(got == want, format!("(k={k}, r={r}): {got} partitions, want {want}"))?;
    }
    Ok("1, 3, 6, 10, 15".into())
}

// ---------------------------------------------------------------------------
// 2. three-form equivalence

fn all_tuples(k: usize, base: usize) -> Vec<Vec<usize>> {
    (0..base.pow(k as u32))
        .map(|mut n| {
            (0..k)
                .map(|_| {
                    let d = n % base;
                    n /= base;
                    d
                })
                .collect()
        })
        .collect()
}

fn three_forms_agree(m: &MultiIndex, jx: &[usize], tab: &GaussianTable64) -> Result<(), String> {
    let a = term_partition(m, jx, tab).map_err(|e| e.to_string())?;
    let b = term_hermite(m, jx, tab).map_err(|e| e.to_string())?;
    let c = term_recurrence(m, jx, tab).map_err(|e| e.to_string())?;
    check(
        rel_close(a, b, 1e-10) && rel_close(a, c, 1e-10),
        format!("i={m} j={jx:?}: partition {a}, hermite {b}, recurrence {c}"),
    )
}

fn three_form_equivalence() -> Outcome {
    let iv = Interval64::unit();
    let tab = sample_table(2024, 3, 4, BasisKind::LegendreShifted, iv).unwrap();
    let mut cases = 0usize;
    for k in 1..=4 {
        let grid = all_tuples(k, 3);
        for idx in &grid {
            let m = mi(idx);
            for jx in &grid {
                three_forms_agree(&m, jx, &tab)?;
                cases += 1;
            }
        }
    }
    for k in [5usize, 6] {
        for case in 0..10_000u64 {
            let h = derive_seed(77, &[k as u64, case]);
            let idx: Vec<usize> = (0..k).map(|l| ((h >> (2 * l)) % 3) as usize).collect();
            let jx: Vec<usize> = (0..k).map(|l| ((h >> (20 + 2 * l)) % 3) as usize).collect();
            three_forms_agree(&mi(&idx), &jx, &tab)?;
            cases += 1;
        }
    }
    Ok(format!("{cases} cases within 1e-10 relative"))
}

// ---------------------------------------------------------------------------
// 3. explicit formulas for k = 2..5, transcribed by hand.
//
// Each entry is "sign pairs|singles" with one-based positions; the leading
// product of all ζ is the r = 0 term and is implicit.

const EXPLICIT: [&[&str]; 4] = [
    &["-12|"],
    &["-12|3", "-23|1", "-13|2"],
    &[
        "-12|34", "-13|24", "-14|23", "-23|14", "-24|13", "-34|12", "+12,34|", "+13,24|", "+14,23|",
    ],
    &[
        "-12|345", "-13|245", "-14|235", "-15|234", "-23|145", "-24|135", "-25|134", "-34|125", "-35|124", "-45|123",
        "+12,34|5", "+12,35|4", "+12,45|3", "+13,24|5", "+13,25|4", "+13,45|2", "+14,23|5", "+14,25|3", "+14,35|2",
        "+15,23|4", "+15,24|3", "+15,34|2", "+23,45|1", "+24,35|1", "+25,34|1",
    ],
];

type Monomial = (i32, BTreeSet<(usize, usize)>, BTreeSet<usize>);

fn parse_monomial(s: &str) -> Monomial {
    let sign = if s.starts_with('-') { -1 } else { 1 };
    let (pairs, singles) = s[1..].split_once('|').unwrap();
    let digit = |c: char| c.to_digit(10).unwrap() as usize - 1;
    let pairs = pairs
        .split(',')
        .map(|p| {
            let mut cs = p.chars().map(digit);
            let (a, b) = (cs.next().unwrap(), cs.next().unwrap());
            (a.min(b), a.max(b))
        })
        .collect();
    (sign, pairs, singles.chars().map(digit).collect())
}

fn generated_monomials(k: usize) -> Result<BTreeSet<Monomial>, String> {
    let mut out = BTreeSet::new();
    for r in 1..=k / 2 {
        for p in enumerate_pair_partitions(k, r).map_err(|e| e.to_string())? {
            let sign = if r % 2 == 0 { 1 } else { -1 };
            let pairs = p.pairs().iter().map(|&(a, b)| (a.min(b), a.max(b))).collect();
            out.insert((sign, pairs, p.singles().iter().copied().collect()));
        }
    }
    Ok(out)
}

fn eval_monomials(set: &BTreeSet<Monomial>, idx: &[usize], jx: &[usize], tab: &GaussianTable64) -> f64 {
    let z = |q: usize| tab.get(idx[q], jx[q]);
    let mut total: f64 = (0..idx.len()).map(z).product();
    for (sign, pairs, singles) in set {
        let active = pairs.iter().all(|&(a, b)| idx[a] == idx[b] && idx[a] != 0 && jx[a] == jx[b]);
        if active {
            total += *sign as f64 * singles.iter().map(|&q| z(q)).product::<f64>();
        }
    }
    total
}

fn explicit_formulas() -> Outcome {
    let iv = Interval64::unit();
    let tab = sample_table(5, 2, 2, BasisKind::LegendreShifted, iv).unwrap();
    let mut monomials = 0;
    for (n, listed) in EXPLICIT.iter().enumerate() {
        let k = n + 2;
        let hand: BTreeSet<Monomial> = listed.iter().map(|s| parse_monomial(s)).collect();
        check(hand.len() == listed.len(), format!("k={k}: duplicate transcription"))?;
        let generated = generated_monomials(k)?;
        check(
            hand == generated,
            format!("k={k}: generated {} monomials, transcribed {}", generated.len(), hand.len()),
        )?;
        monomials += hand.len() + 1;
        // The numeric partition form must evaluate the same polynomial.
        let grid = all_tuples(k, 3);
        for idx in &grid {
            let m = mi(idx);
            for jx in &grid {
                let want = eval_monomials(&hand, idx, jx, &tab);
                let got = term_partition(&m, jx, &tab).map_err(|e| e.to_string())?;
                check(rel_close(got, want, 1e-12), format!("k={k} i={idx:?} j={jx:?}: {got} vs {want}"))?;
            }
        }
    }
    Ok(format!("{monomials} monomials for k=2..5 match, numeric evaluation agrees"))
}

// ---------------------------------------------------------------------------
// 4. Hermite and Wiener-term moments

fn hermite_moments() -> Outcome {
    let draws: Vec<f64> = (0..1_000_000u64).map(|s| normal_at(31, &[s])).collect();
    let fact = [1.0, 1.0, 2.0, 6.0, 24.0];
    for n in 0..=4u32 {
        for m in n..=4u32 {
            let hn = HermiteDegree::new(n).unwrap();
            let hm = HermiteDegree::new(m).unwrap();
            let prods: Vec<f64> = draws.iter().map(|&z| hermite(hn, z) * hermite(hm, z)).collect();
            let target = if n == m { fact[n as usize] } else { 0.0 };
            let est = MeanEstimate::from_samples(&prods);
            check(est.agrees_with(target, 5.0, 0.0), format!("E[H{n} H{m}] = {} ± {}", est.mean, est.stderr))?;
        }
    }
    let iv = Interval64::unit();
    let cases: [(&[usize], &[usize], f64); 5] = [
        (&[1, 1], &[2, 2], 2.0),
        (&[1, 1, 1], &[2, 2, 2], 6.0),
        (&[2, 2, 2, 2], &[1, 1, 1, 1], 24.0),
        (&[1, 2], &[0, 3], 1.0),
        (&[1, 2, 3], &[1, 0, 2], 1.0),
    ];
    for (idx, jx, target) in cases {
        let m = mi(idx);
        let squares: Vec<f64> = (0..200_000u64)
            .map(|s| {
                let tab = sample_table(derive_seed(41, &[s]), 3, 3, BasisKind::LegendreShifted, iv).unwrap();
                term_hermite(&m, jx, &tab).unwrap().powi(2)
            })
            .collect();
        let est = MeanEstimate::from_samples(&squares);
        check(
            est.agrees_with(target, 5.0, 0.0),
            format!("E[term²] for i={idx:?}: {} ± {}, want {target}", est.mean, est.stderr),
        )?;
    }
    Ok("E[H_n H_m] = n!δ at 1e6 draws; E[term²] = k! repeated, 1 distinct".into())
}

// ---------------------------------------------------------------------------
// 5. coefficients and Parseval residual

/// Exact shifted-Legendre coefficients of 1{t1 < t2} on [0,1], from
/// ∫_0^t φ_b = (φ_{b+1}/√(2b+3) − φ_{b−1}/√(2b−1)) / (2√(2b+1)) for b ≥ 1
/// and ∫_0^t φ_0 = φ_0/2 + φ_1/(2√3). Index order is [j1, j2].
fn exact_unit_coefficient(j1: usize, j2: usize) -> f64 {
    let s = |n: usize| ((2 * n + 1) as f64).sqrt();
    if j1 == 0 {
        return match j2 {
            0 => 0.5,
            1 => 0.5 / s(1),
            _ => 0.0,
        };
    }
    let scale = 0.5 / s(j1);
    if j2 == j1 + 1 {
        scale / s(j1 + 1)
    } else if j2 + 1 == j1 {
        -scale / s(j2)
    } else {
        0.0
    }
}

fn parseval_suite() -> Outcome {
    let iv = Interval64::unit();
    let ks = KernelSpec64::unit(2, iv).unwrap();
    let basis = BasisKind::LegendreShifted;
    let c00 = fourier_coefficient(&ks, &[0, 0], basis, 16).map_err(|e| e.to_string())?;
    check((c00 - 0.5).abs() < 1e-13, format!("C(0,0) = {c00}"))?;
    let norm = kernel_l2_norm_sq(&ks, 16).map_err(|e| e.to_string())?;
    check((norm - 0.5).abs() < 1e-13, format!("‖K‖² = {norm}"))?;

    let full = build_tensor(&ks, &[12, 12], basis, 32).map_err(|e| e.to_string())?;
    for j1 in 0..=12 {
        for j2 in 0..=12 {
            let got = full.get(&[j1, j2]).unwrap();
            let want = exact_unit_coefficient(j1, j2);
            check((got - want).abs() < 1e-13, format!("C({j1},{j2}) = {got}, exact {want}"))?;
        }
    }
    let mut prev = f64::INFINITY;
    let mut last = 0.0;
    for p in 0..=12 {
        let res = truncation_residual(&ks, &full.truncate(&[p, p]).unwrap()).map_err(|e| e.to_string())?;
        let oracle_sq: f64 = (0..=p)
            .flat_map(|a| (0..=p).map(move |b| exact_unit_coefficient(a, b).powi(2)))
            .sum();
        let oracle = 0.5 - oracle_sq;
        check((res - oracle).abs() < 1e-12, format!("p={p}: residual {res}, oracle {oracle}"))?;
        if p == 0 {
            check((res - 0.25).abs() < 1e-13, format!("residual at p=(0,0) is {res}"))?;
        }
        check(res <= prev + 1e-15, format!("residual increased at p={p}"))?;
        prev = res;
        last = res;
    }
    // The oracle gives exactly 1/(4(2p+1)) = 1/100 at p = 12, so the release
    // threshold is pinned to that value up to quadrature roundoff.
    let pinned = 1.0 / (4.0 * 25.0);
    check(
        (last - pinned).abs() <= 1e-12,
        format!("residual at p=(12,12) is {last:.19}, pinned {pinned}"),
    )?;
    Ok(format!(
        "C(0,0)=0.5, ‖K‖²=0.5, residual 0.25 → {last:.19} (pinned 1/100 ± 1e-12), monotone"
    ))
}

// ---------------------------------------------------------------------------
// 6. coupled mean-square convergence, k = 2

fn coupled_k2() -> Outcome {
    let iv = Interval64::unit();
    let ks = KernelSpec64::unit(2, iv).unwrap();
    let ps = [0usize, 1, 2, 4, 8];
    let n_grid = 20_000;
    let full = build_tensor(&ks, &[8, 8], BasisKind::LegendreShifted, 32).unwrap();
    let tensors: Vec<_> = ps.iter().map(|&p| full.truncate(&[p, p]).unwrap()).collect();
    let curve = coupled_mse_curve(&mi(&[1, 2]), &ks, &tensors, n_grid, 10_000, 6).map_err(|e| e.to_string())?;
    let bias = 1.0 / n_grid as f64;
    let mut detail = Vec::new();
    for (p, row) in ps.iter().zip(&curve) {
        check(
            (row.sample_mse - row.analytic_residual).abs() <= 5.0 * row.stderr + bias,
            format!("p={p}: sample {} ± {}, analytic {}", row.sample_mse, row.stderr, row.analytic_residual),
        )?;
        detail.push(format!("p={p}: {:.5}/{:.5}", row.sample_mse, row.analytic_residual));
    }
    for (w, ps) in curve.windows(2).zip(ps.windows(2)) {
        let noise = 3.0 * (w[0].stderr.powi(2) + w[1].stderr.powi(2)).sqrt();
        check(
            w[1].sample_mse < w[0].sample_mse - noise,
            format!("no decrease beyond noise from p={} to p={}", ps[0], ps[1]),
        )?;
    }
    Ok(format!("sample/analytic {}", detail.join(", ")))
}

// ---------------------------------------------------------------------------
// 7. k = 3 sanity

fn sanity_k3() -> Outcome {
    let iv = Interval64::unit();
    let ks = KernelSpec64::unit(3, iv).unwrap();
    let n_grid = 10_000;
    let full = build_tensor(&ks, &[2, 2, 2], BasisKind::LegendreShifted, 16).unwrap();
    let tensors = vec![full.truncate(&[0, 0, 0]).unwrap(), full];
    let curve = coupled_mse_curve(&mi(&[1, 2, 3]), &ks, &tensors, n_grid, 10_000, 7).map_err(|e| e.to_string())?;
    let (m2, se) = (curve[0].oracle_second_moment, curve[0].oracle_second_moment_stderr);
    // Left-point sums over N cells have second moment (N-1)(N-2)/(6N²).
    let bias = 3.0 / n_grid as f64;
    check(
        (m2 - 1.0 / 6.0).abs() <= 5.0 * se + bias,
        format!("E[J²] = {m2} ± {se}, want 1/6"),
    )?;
    let noise = 3.0 * (curve[0].stderr.powi(2) + curve[1].stderr.powi(2)).sqrt();
    check(
        curve[1].sample_mse < curve[0].sample_mse - noise,
        format!("MSE p=2 {} not below p=0 {}", curve[1].sample_mse, curve[0].sample_mse),
    )?;
    Ok(format!(
        "E[J²] = {m2:.5} ± {se:.5}; MSE p=0 {:.5}, p=2 {:.5}",
        curve[0].sample_mse, curve[1].sample_mse
    ))
}

// ---------------------------------------------------------------------------
// 8. SDE strong orders

fn rows_for(rows: &[StrongErrorRow], scheme: Scheme, p: usize) -> Vec<&StrongErrorRow> {
    rows.iter().filter(|r| r.scheme == scheme && r.p == p).collect()
}

fn sde_demo() -> Outcome {
    let iv = Interval64::unit();
    let hs: Vec<f64> = (4..=7).map(|e| 2f64.powi(-e)).collect();
    let trials = 1000;
    let cfg = |scheme, h, p| SchemeConfig { scheme, h, p, seed: 0 };

    let sys = CatalogSystem::BilinearNonCommutative2D;
    let mut cfgs = Vec::new();
    for &h in &hs {
        cfgs.push(cfg(Scheme::EulerMaruyama, h, 0));
        cfgs.push(cfg(Scheme::Milstein, h, 8));
    }
    let reference = Reference::Scheme(cfg(Scheme::EulerMaruyama, hs[3] / 256.0, 0));
    let rows = strong_error(&sys.system::<f64>(), &cfgs, &reference, trials, 8, &sys.initial_state(), &iv)
        .map_err(|e| e.to_string())?;
    let slope = |scheme, p| {
        let r = rows_for(&rows, scheme, p);
        let xs: Vec<f64> = r.iter().map(|r| r.h).collect();
        let ys: Vec<f64> = r.iter().map(|r| r.rmse).collect();
        log_log_slope(&xs, &ys)
    };
    let euler = slope(Scheme::EulerMaruyama, 0);
    let milstein = slope(Scheme::Milstein, 8);
    check((euler - 0.5).abs() <= 0.15, format!("Euler slope {euler}"))?;
    check(milstein >= 0.9, format!("Milstein p=8 slope {milstein}"))?;

    let sys = CatalogSystem::LinearScalar2Noise;
    let mut cfgs = Vec::new();
    for &h in &hs {
        cfgs.push(cfg(Scheme::Milstein, h, 0));
        cfgs.push(cfg(Scheme::Milstein, h, 8));
    }
    let rows = strong_error(&sys.system::<f64>(), &cfgs, &Reference::ClosedForm, trials, 9, &sys.initial_state(), &iv)
        .map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for (a, b) in rows_for(&rows, Scheme::Milstein, 0).iter().zip(rows_for(&rows, Scheme::Milstein, 8)) {
        let se = a.stderr.max(b.stderr);
        check(
            (a.rmse - b.rmse).abs() <= 3.0 * se,
            format!("commutative h={}: p=0 {} vs p=8 {} (SE {se})", a.h, a.rmse, b.rmse),
        )?;
        worst = worst.max((a.rmse - b.rmse).abs() / se);
    }
    Ok(format!(
        "Euler slope {euler:.3}, Milstein(p=8) slope {milstein:.3}; commutative |Δ RMSE| ≤ {worst:.2e} SE"
    ))
}

// ---------------------------------------------------------------------------
// 9. CLI determinism

fn run_cli(args: &[&str]) -> (i32, Vec<u8>) {
    let mut argv = vec!["iterint".to_string()];
    argv.extend(args.iter().map(|s| s.to_string()));
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = iterint_cli::run_with(argv, &mut out, &mut err);
    (code, out)
}

fn cli_determinism() -> Outcome {
    let invocations: &[&[&str]] = &[
        &["partitions", "--k", "6", "--r", "2"],
        &["partitions", "--k", "5", "--r", "1", "--format", "json"],
        &["coeffs", "--k", "3", "--p", "3", "--weights", "pow:1,const,const:2"],
        &["coeffs", "--k", "2", "--p", "4", "--basis", "trig", "--format", "csv"],
        &["sample", "--mi", "1,2", "--p", "6", "--trials", "50", "--seed", "11"],
        &["term", "--mi", "1,1,2", "--j", "2,2,0", "--seed", "12", "--format", "json"],
        &["convergence", "--mi", "1,2", "--p-values", "0,2", "--n-grid", "400", "--trials", "100", "--seed", "13"],
        &["sde-demo", "--system", "bilinear2d", "--scheme", "milstein", "--h", "0.25,0.125", "--p", "2", "--trials", "20", "--seed", "14"],
        &["sde-demo", "--system", "scalar2", "--scheme", "euler", "--h", "0.5", "--trials", "20", "--seed", "15"],
    ];
    for args in invocations {
        let (c1, o1) = run_cli(args);
        let (c2, o2) = run_cli(args);
        check(c1 == 0 && c2 == 0, format!("{args:?} exited with {c1}/{c2}"))?;
        check(!o1.is_empty() && o1 == o2, format!("{args:?} output differs between runs"))?;
    }
    Ok(format!("{} invocations byte-identical across two runs", invocations.len()))
}

// ---------------------------------------------------------------------------

fn main() {
    let criteria: [Criterion; 9] = [
        ("partition counts", partition_counts),
        ("three-form equivalence", three_form_equivalence),
        ("explicit formulas k=2..5", explicit_formulas),
        ("Hermite moments", hermite_moments),
        ("coefficients and Parseval residual", parseval_suite),
        ("coupled convergence k=2", coupled_k2),
        ("k=3 sanity", sanity_k3),
        ("SDE strong orders", sde_demo),
        ("CLI determinism", cli_determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (n, (name, f)) in criteria.iter().enumerate() {
        let id = (n + 1).to_string();
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let outcome = f();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {id} ({name}): PASS [{secs:.1}s] {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {id} ({name}): FAIL [{secs:.1}s] {detail}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
