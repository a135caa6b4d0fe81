//! Acceptance gate for the toolkit: twelve end-to-end criteria, one test
//! each, covering the closed-form constants, the golden two-piece norms,
//! and every fuzz-suite family at its full advertised trial count.
//!
//! Run with `cargo test -p varlp-core --test acceptance -- --nocapture`
//! to see one `criterion NN: PASS — …` line per criterion; a failing
//! criterion panics with the offending margin or value instead.

use varlp_core::{
    constant_a, constant_bp, generate_instance, norm_nakano, norm_ode, phi_exact_step,
    phi_numeric, run_suite, sort_by_exponent, to_unit_interval, norm_weighted, Check,
    CheckReport, ExponentProfile, GenConfig, HalfLineInstance, HalfLineSpec, ReportFile,
    SortDirection, StepFunction, DEFAULT_TOL,
};

fn pass(n: u32, what: &str) {
    println!("criterion {n:>2}: PASS — {what}");
}

/// Panic with the check's worst margin and failure count unless it passed.
fn expect_clean(report: &CheckReport) {
    assert!(
        report.passed(),
        "check `{}` failed: worst_margin={:e}, {} failure(s), first: {:?}",
        report.check,
        report.worst_margin,
        report.failures.len(),
        report.failures.first(),
    );
}

fn stat(report: &CheckReport, key: &str) -> f64 {
    report
        .stats
        .iter()
        .find(|(k, _)| k == key)
        .unwrap_or_else(|| panic!("check `{}` has no stat `{key}`", report.check))
        .1
}

/// f ≡ 1 with exponent 1 on [0, ½) and 2 on [½, 1).
fn golden_two_piece() -> (StepFunction, ExponentProfile) {
    let f = StepFunction::from_pieces(&[(0.5, 1.0), (0.5, 1.0)]).unwrap();
    let p = ExponentProfile::from_pieces(&[(0.5, 1.0), (0.5, 2.0)]).unwrap();
    (f, p)
}

#[test]
fn criterion_01_defining_equations_of_the_constants() {
    let a = constant_a();
    assert!((a * a.ln() - 1.0).abs() <= 1e-14, "a·ln a = {:e}", a * a.ln());
    assert_eq!((a * 100.0).round() / 100.0, 1.76, "a = {a} should round to 1.76");

    assert_eq!(constant_bp(1.0).unwrap(), 1.0, "b_1 must be exactly 1");
    assert_eq!(constant_bp(f64::INFINITY).unwrap(), 2.0, "b_∞ must be exactly 2");

    let golden_ratio = (1.0 + 5f64.sqrt()) / 2.0;
    let b2 = constant_bp(2.0).unwrap();
    assert!(
        (b2 - golden_ratio).abs() <= 1e-12,
        "b_2 = {b2}, expected {golden_ratio}"
    );
    pass(1, "a·ln a = 1 to 1e-14 (a ≈ 1.76), b_1 = 1, b_2 = (1+√5)/2, b_∞ = 2");
}

#[test]
fn criterion_02_golden_norms_on_the_two_piece_instance() {
    let (f, p) = golden_two_piece();

    let nakano = norm_nakano(&f, &p, DEFAULT_TOL).unwrap().value;
    let expected_nakano = (1.0 + 5f64.sqrt()) / 4.0;
    assert!(
        (nakano - expected_nakano).abs() <= 1e-10,
        "Nakano = {nakano}, expected (1+√5)/4 = {expected_nakano}"
    );

    let ode = norm_ode(&f, &p).value;
    let expected_ode = 3f64.sqrt() / 2.0;
    assert!(
        (ode - expected_ode).abs() <= 1e-12,
        "ODE = {ode}, expected √3/2 = {expected_ode}"
    );

    let (f_dec, p_dec) = sort_by_exponent(&f, &p, SortDirection::Decreasing);
    let ode_dec = norm_ode(&f_dec, &p_dec).value;
    let expected_dec = 0.5f64.sqrt() + 0.5;
    assert!(
        (ode_dec - expected_dec).abs() <= 1e-12,
        "decreasing-sorted ODE = {ode_dec}, expected 1/√2 + ½ = {expected_dec}"
    );
    pass(2, "two-piece norms: Nakano = (1+√5)/4, ODE = √3/2, sorted ODE = 1/√2 + ½");
}

#[test]
fn criterion_03_constant_exponent_reduces_to_classical_lp() {
    let cfg = GenConfig::new(3);
    let reports = run_suite(&cfg, 10_000, &[Check::ConstantExponent]).unwrap();
    expect_clean(&reports[0]);
    pass(3, "10⁴ instances, p ≡ p₀ ∈ {1, 1.5, 2, 7, 64}: ODE norm = classical L^p₀ to 1e-12");
}

#[test]
fn criterion_04_sandwich_inequalities() {
    let cfg = GenConfig::new(4);
    let checks = [
        Check::MoNakanoSandwich,
        Check::OdeNakanoSandwich,
        Check::SupBound,
        Check::RestrictedLower,
        Check::PointwiseOrder,
    ];
    let reports = run_suite(&cfg, 10_000, &checks).unwrap();
    for r in &reports {
        expect_clean(r);
    }
    let worst_sup_ratio = stat(&reports[2], "worst_ratio");
    assert!(
        worst_sup_ratio < std::f64::consts::E,
        "ODE/sup ratio {worst_sup_ratio} reached e"
    );
    pass(
        4,
        "10⁴ trials each: MO/Nakano, ODE/Nakano, sup, restricted and pointwise bounds all hold",
    );
}

#[test]
fn criterion_05_rearrangement_bounds_and_monotone_profiles() {
    let cfg = GenConfig::new(5);
    let reports = run_suite(
        &cfg,
        1_000,
        &[Check::PermSandwich, Check::PermFactor, Check::MonotoneUnit],
    )
    .unwrap();
    for r in &reports {
        expect_clean(r);
    }
    let min_gap = stat(&reports[2], "min_gap_from_one");
    assert!(min_gap > 0.0, "monotone-profile norm touched 1 (gap {min_gap})");
    pass(
        5,
        "10³ instances × 10² shuffles: sorted bounds, b_p̄ factor, Nakano invariance, strict monotone gaps",
    );
}

#[test]
fn criterion_06_decomposition_chains_at_2_to_8_blocks() {
    let cfg = GenConfig::new(6);
    let checks = [
        Check::ChainLower,
        Check::ChainUpper,
        Check::ChainOde,
        Check::ChainModular,
    ];
    let reports = run_suite(&cfg, 10_000, &checks).unwrap();
    let mut worst = 0.0f64;
    for r in &reports {
        expect_clean(r);
        for n in 2..=8usize {
            let u = stat(r, &format!("worst_utilization_n{n}"));
            assert!(
                u > 0.0,
                "check `{}` never sampled a {n}-block split",
                r.check
            );
            assert!(
                u <= 1.0 + 1e-6,
                "check `{}` exhausted its constant at {n} blocks: utilization {u}",
                r.check
            );
            worst = worst.max(u);
        }
    }
    pass(
        6,
        &format!(
            "10⁴ trials × 4 chains, 2–8 blocks: constants 2(1+ae) and b_p̄ hold, worst utilization {worst:.3}"
        ),
    );
}

#[test]
fn criterion_07_tensor_fold_order() {
    let cfg = GenConfig::new(7);
    let reports = run_suite(&cfg, 10_000, &[Check::FoldOrder]).unwrap();
    expect_clean(&reports[0]);
    pass(7, "10⁴ tensors up to 3×3×3×3: adjacent r ≤ s exponent swaps never lower the fold");
}

#[test]
fn criterion_08_extreme_split_limit() {
    let cfg = GenConfig::new(8);
    let reports = run_suite(&cfg, 1, &[Check::ExtremeSplit]).unwrap();
    expect_clean(&reports[0]);
    let dec = stat(&reports[0], "dec_at_1e12");
    let inc = stat(&reports[0], "inc_at_1e12");
    assert!(dec > 1.9, "decreasing arrangement reached only {dec} at p = 1e12");
    assert!(inc < 1.1, "increasing arrangement still {inc} at p = 1e12");
    pass(
        8,
        &format!("head-piece norm over p ∈ {{1e3..1e12}} monotone, ends at {dec:.4} / {inc:.4}"),
    );
}

#[test]
fn criterion_09_modular_derivative_is_minus_one() {
    let cfg = GenConfig::new(9);
    let reports = run_suite(&cfg, 1_000, &[Check::ModularDerivative]).unwrap();
    expect_clean(&reports[0]);
    let analytic_gap = stat(&reports[0], "max_analytic_gap");
    let fd_gap = stat(&reports[0], "max_fd_gap");
    assert!(analytic_gap <= 1e-10, "analytic derivative off by {analytic_gap:e}");
    assert!(fd_gap <= 1e-6, "finite differences off by {fd_gap:e}");
    pass(
        9,
        &format!("10³ normalized instances: dλ-modular = −1 (gap {analytic_gap:.1e}, FD gap {fd_gap:.1e})"),
    );
}

#[test]
fn criterion_10_half_line_image_norm_converges() {
    let spec = HalfLineSpec::from_json(r#"{"pieces": [{"len": 1.0, "f": 1.0, "p": 2.0, "w": 1.0}]}"#)
        .unwrap();
    let inst = HalfLineInstance::from_spec(&spec).unwrap();
    let source = inst.norm(DEFAULT_TOL).unwrap();

    let mut discrepancies = Vec::new();
    for refine in [8usize, 16, 32, 64, 128, 256, 512] {
        let (f, p, w) = to_unit_interval(&inst, refine).unwrap();
        let image = norm_weighted(&f, &p, &w, DEFAULT_TOL).unwrap().value;
        discrepancies.push((image - source).abs());
    }
    for pair in discrepancies.windows(2) {
        assert!(
            pair[1] <= 0.6 * pair[0],
            "doubling the refinement only moved the discrepancy {:e} → {:e}",
            pair[0],
            pair[1]
        );
    }
    let last = *discrepancies.last().unwrap();
    assert!(last < 1e-4, "discrepancy at refine = 512 still {last:e}");
    pass(
        10,
        &format!("half-line image norm: ratio ≤ 0.6 per doubling, {last:.1e} at refine = 512"),
    );
}

#[test]
fn criterion_11_numeric_curve_realizes_the_zero_limit() {
    let cfg = GenConfig::new(11);
    let eps_ladder = [1e-4, 1e-8, 1e-12];
    for trial in 0..1_000u64 {
        let (f, p) = generate_instance(&cfg, trial);
        let exact = phi_exact_step(&f, &p).terminal();
        let mut previous = f64::INFINITY;
        for eps0 in eps_ladder {
            let numeric = phi_numeric(&f, &p, 1, eps0).unwrap().terminal();
            assert!(
                numeric <= previous,
                "trial {trial}: shrinking eps0 to {eps0:e} raised φ(1) {previous} → {numeric}"
            );
            let gap = (numeric - exact).abs();
            assert!(
                gap <= eps0,
                "trial {trial}: φ(1) with eps0 = {eps0:e} is {gap:e} from the exact value"
            );
            previous = numeric;
        }
    }
    pass(11, "10³ instances: φ(1) monotone in eps0 ∈ {1e-4, 1e-8, 1e-12} and within eps0 of exact");
}

#[test]
fn criterion_12_reports_are_byte_identical_serial_vs_parallel() {
    let cfg = GenConfig::new(12);
    let checks = [
        Check::MoNakanoSandwich,
        Check::OdeNakanoSandwich,
        Check::ChainOde,
        Check::NormAxioms,
    ];
    let trials = 200;

    let parallel = ReportFile::new(cfg, trials, run_suite(&cfg, trials, &checks).unwrap());
    let serial_pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap();
    let serial = serial_pool.install(|| {
        ReportFile::new(cfg, trials, run_suite(&cfg, trials, &checks).unwrap())
    });

    assert_eq!(
        serial.to_json(),
        parallel.to_json(),
        "serial and parallel reports differ"
    );
    assert!(parallel.passed);
    pass(12, "fuzz reports are byte-identical between a 1-thread pool and the global pool");
}
