//! End-to-end acceptance checks: one test per numbered criterion of the
//! build contract, each printing a single PASS/FAIL line with its headline
//! numbers (run with `--nocapture` to see the lines for passing tests).

use std::collections::BTreeSet;
use std::sync::{Mutex, MutexGuard, OnceLock};
use std::time::Instant;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use shellwalk::boundary::{busemann, count_sphere_walk, verify_matrixnorm, BoundaryModel};
use shellwalk::discrepancy::{
    decay_rate_fit, discrepancy, etk_bound, max_fourier, sqrt_rational, walk_step,
    TorusAtomicMeasure,
};
use shellwalk::enumerate::{
    enumerate_ball, fit_critical_exponent, srw_measure, BallIndex, EnumerationConfig,
};
use shellwalk::interval::rational_to_f64;
use shellwalk::matrix::{sanov_presentation, sanov_word_presentation, GroupElement};
use shellwalk::spectral::{build_shell_operator, kesten_crosscheck, operator_norm_estimate};
use shellwalk::torus::{
    act, ergodic_character_error, ergodic_character_error_mc, exponent_scan_cached, ScanCache,
    TargetFamily, TorusPoint,
};
use shellwalk::torus::log_count_slope;
use shellwalk::walks::return_prob_norm_estimate;
use shellwalk::word::{sphere_size, sphere_words, Word};

/// The runtime budgets are per criterion, so criteria must not time-share
/// cores with each other; every test takes this lock before starting its
/// clock.
fn dedicated() -> MutexGuard<'static, ()> {
    static GATE: Mutex<()> = Mutex::new(());
    GATE.lock().unwrap_or_else(|e| e.into_inner())
}

fn report(number: u32, name: &str, result: Result<String, String>) {
    match result {
        Ok(detail) => println!("criterion {number} ({name}): PASS - {detail}"),
        Err(detail) => {
            println!("criterion {number} ({name}): FAIL - {detail}");
            panic!("criterion {number} ({name}) failed: {detail}");
        }
    }
}

fn rat(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

/// Radius-12 ball of the standard pair under the displacement metric, shared
/// by the orbit-statistics criteria.
fn shared_ball() -> &'static BallIndex {
    static BALL: OnceLock<BallIndex> = OnceLock::new();
    BALL.get_or_init(|| {
        enumerate_ball(&sanov_presentation(), 12, &EnumerationConfig::default())
            .expect("radius-12 ball enumerates")
    })
}

#[test]
fn criterion_1_tree_exactness() {
    let _gate = dedicated();
    let t = Instant::now();
    let result = (|| -> Result<String, String> {
        let model = BoundaryModel::new(2).map_err(|e| e.to_string())?;
        let mut table = Vec::new();
        for n in 1..=15u32 {
            let count = count_sphere_walk(2, n);
            let expected = 4 * 3u64.pow(n - 1);
            if count != expected {
                return Err(format!("sphere count at {n}: {count} != {expected}"));
            }
            table.push((n, count));
            // Every length-n cylinder carries the same measure, so the shell
            // total is the exact product count * measure.
            let word = Word::from_letters(&vec![1i32; n as usize]);
            let shadow = model.shadow(word).map_err(|e| e.to_string())?;
            let total =
                BigRational::from_integer(BigInt::from(count)) * model.ps_measure(&shadow);
            if !total.is_one() {
                return Err(format!("cylinder measures at {n} sum to {total}"));
            }
        }
        // Small shells again by materialized summation, cylinder by cylinder.
        for n in 1..=8u32 {
            let mut sum = BigRational::zero();
            for w in model.sphere(n) {
                sum += model.ps_measure(&model.shadow(w).map_err(|e| e.to_string())?);
            }
            if !sum.is_one() {
                return Err(format!("materialized cylinder sum at {n}: {sum}"));
            }
        }
        let fit = fit_critical_exponent::<f64>(&table).map_err(|e| e.to_string())?;
        let err = (fit.delta - 3f64.ln()).abs();
        if err > 1e-9 {
            return Err(format!("growth fit {} vs ln 3: error {err:.3e}", fit.delta));
        }
        let secs = t.elapsed().as_secs_f64();
        if secs >= 10.0 {
            return Err(format!("runtime {secs:.1}s exceeds the 10s budget"));
        }
        Ok(format!("spheres exact to n=15, delta error {err:.1e}, {secs:.1}s"))
    })();
    report(1, "tree exactness", result);
}

#[test]
fn criterion_2_column_sum_certificates() {
    let _gate = dedicated();
    let t = Instant::now();
    let result = (|| -> Result<String, String> {
        let model = BoundaryModel::new(2).map_err(|e| e.to_string())?;
        let pairs: Vec<(u32, u32)> =
            (2..=4u32).flat_map(|n| (n + 2..=n + 5).map(move |r| (r, n))).collect();
        assert_eq!(pairs.len(), 12);
        let report = verify_matrixnorm(&model, &pairs, 500).map_err(|e| e.to_string())?;
        // One constant bounds every normalized ratio; for n >= 2 the closed
        // form keeps it below 3/8.
        let c = report.max_ratio;
        if !(c.is_finite() && c <= 0.376) {
            return Err(format!("fitted constant {c} out of range"));
        }
        let mut dense_checked = 0usize;
        for check in &report.checks {
            let bound =
                c * (check.n as f64).powi(2) * 3f64.powf(-(check.r as f64) - check.n as f64 / 2.0);
            if check.gershgorin_f64 > bound * (1.0 + 1e-12) {
                return Err(format!(
                    "({}, {}): column sum {} above fitted envelope {bound}",
                    check.r, check.n, check.gershgorin_f64
                ));
            }
            if let Some(dense) = check.dense_spectral {
                dense_checked += 1;
                if dense > check.gershgorin_f64 * (1.0 + 1e-9) {
                    return Err(format!(
                        "({}, {}): dense norm {dense} above certificate {}",
                        check.r, check.n, check.gershgorin_f64
                    ));
                }
            }
        }
        if dense_checked != 3 {
            return Err(format!("expected 3 dense cross-checks, did {dense_checked}"));
        }
        let secs = t.elapsed().as_secs_f64();
        if secs >= 300.0 {
            return Err(format!("runtime {secs:.1}s exceeds the 5min budget"));
        }
        Ok(format!("12 certificates, fitted C = {c:.4}, 3 dense cross-checks, {secs:.1}s"))
    })();
    report(2, "column-sum certificates", result);
}

#[test]
fn criterion_3_return_probability_envelope() {
    let _gate = dedicated();
    let t = Instant::now();
    let result = (|| -> Result<String, String> {
        let p = sanov_word_presentation();
        let ball = enumerate_ball(&p, 10, &EnumerationConfig::default())
            .map_err(|e| e.to_string())?;
        let shells = ball.shells(1);
        let delta = 3f64.ln();
        let mut fitted_c = f64::NEG_INFINITY;
        for n in 2..=10u32 {
            let mu = shells
                .shells
                .iter()
                .find(|s| s.n == n)
                .ok_or_else(|| format!("no shell at {n}"))?;
            if mu.word_sphere().is_none() {
                return Err(format!("shell {n} is not tagged as a full sphere"));
            }
            let est = return_prob_norm_estimate::<f64>(mu, 8, 10_000_000);
            if est.truncated {
                return Err(format!("return sequence truncated at shell {n}"));
            }
            let r8 = est.roots[7];
            let lhs = -2.0 * r8.ln();
            if lhs > delta * n as f64 + 1e-9 {
                return Err(format!("shell {n}: -2 log r_8 = {lhs} above delta n"));
            }
            fitted_c = fitted_c.max(delta * n as f64 - 2.0 * (n as f64).ln() - lhs);
        }
        if fitted_c > 5.0 {
            return Err(format!("fitted envelope constant {fitted_c} exceeds 5"));
        }
        let secs = t.elapsed().as_secs_f64();
        if secs >= 300.0 {
            return Err(format!("runtime {secs:.1}s exceeds the 5min budget"));
        }
        Ok(format!("shells 2..=10, K=8, fitted C = {fitted_c:.3} <= 5, {secs:.1}s"))
    })();
    report(3, "return-probability envelope", result);
}

#[test]
fn criterion_4_kesten_crosscheck() {
    let _gate = dedicated();
    let t = Instant::now();
    let result = (|| -> Result<String, String> {
        let p = sanov_presentation();
        let mu = srw_measure(&p);
        let target = 3f64.sqrt() / 2.0;
        let rep = kesten_crosscheck::<f64>(&mu, 2000, 8, 10_000_000, 1e-6, 120, 2)
            .map_err(|e| e.to_string())?;
        let lattice = rep.lattice.value;
        let walk = rep.walk.norm_estimate();
        if rep.gap > 0.02 {
            return Err(format!("lattice {lattice:.4} vs walk {walk:.4}: gap {:.4}", rep.gap));
        }
        if (lattice - target).abs() > 0.02 {
            return Err(format!("lattice {lattice:.4} off target {target:.4}"));
        }
        if (walk - target).abs() > 0.02 {
            return Err(format!("walk {walk:.4} off target {target:.4}"));
        }
        let mut prev = 0.0f64;
        let mut profile = Vec::new();
        for window in [50u32, 100, 200, 400] {
            let op = build_shell_operator(&mu, window).map_err(|e| e.to_string())?;
            let est =
                operator_norm_estimate::<f64>(&op, 1e-6, 250, 2).map_err(|e| e.to_string())?;
            if est.value + 1e-9 < prev {
                return Err(format!("window profile not monotone at {window}: {est:?}"));
            }
            prev = est.value;
            profile.push(format!("{window}:{:.4}", est.value));
        }
        let secs = t.elapsed().as_secs_f64();
        if secs >= 120.0 {
            return Err(format!("runtime {secs:.1}s exceeds the 2min budget"));
        }
        Ok(format!(
            "lattice {lattice:.4}, walk {walk:.4}, target {target:.4}; profile {}; {secs:.1}s",
            profile.join(" ")
        ))
    })();
    report(4, "kesten cross-check", result);
}

#[test]
fn criterion_5_shrinking_target_slopes() {
    let _gate = dedicated();
    let t = Instant::now();
    let result = (|| -> Result<String, String> {
        let ball = shared_ball();
        let delta_fit = fit_critical_exponent::<f64>(&ball.growth_table())
            .map_err(|e| e.to_string())?
            .delta;
        let alphas = [0.25f64, 0.5, 1.5];
        let cache = ScanCache::new(ball, &alphas).map_err(|e| e.to_string())?;
        let target = TargetFamily::ball(TorusPoint::zero(2));
        let mut slope_sums = [0.0f64; 2];
        for seed in 0..100u64 {
            let x = TorusPoint::random_uniform(2, seed);
            let scan =
                exponent_scan_cached(&cache, ball, &x, &target).map_err(|e| e.to_string())?;
            for ai in 0..2 {
                let s = log_count_slope(&scan.counts[ai], 2, 12)
                    .ok_or_else(|| format!("seed {seed}, alpha {}: no slope", alphas[ai]))?;
                slope_sums[ai] += s;
            }
            // Finiteness evidence: the alpha = 1.5 count settles.
            let c = &scan.counts[2];
            if !(c[10] == c[11] && c[11] == c[12]) {
                return Err(format!(
                    "seed {seed}: alpha 1.5 counts still growing: {:?}",
                    &c[9..=12]
                ));
            }
        }
        let mut detail = Vec::new();
        for (ai, &alpha) in alphas[..2].iter().enumerate() {
            let avg = slope_sums[ai] / 100.0;
            let want = delta_fit - alpha;
            if (avg - want).abs() > 0.15 {
                return Err(format!(
                    "alpha {alpha}: averaged slope {avg:.3} vs delta_fit - alpha = {want:.3}"
                ));
            }
            detail.push(format!("alpha {alpha}: slope {avg:.3} (want {want:.3})"));
        }
        let secs = t.elapsed().as_secs_f64();
        if secs >= 600.0 {
            return Err(format!("runtime {secs:.1}s exceeds the 10min budget"));
        }
        Ok(format!(
            "100 seeds, delta_fit {delta_fit:.3}; {}; alpha 1.5 settled on every seed; {secs:.1}s",
            detail.join("; ")
        ))
    })();
    report(5, "shrinking-target slopes", result);
}

#[test]
fn criterion_6_character_errors() {
    let _gate = dedicated();
    let t = Instant::now();
    let result = (|| -> Result<String, String> {
        let ball = shared_ball();
        let delta_fit = fit_critical_exponent::<f64>(&ball.growth_table())
            .map_err(|e| e.to_string())?
            .delta;
        let shells = ball.shells(1);
        let mut fitted_c = 0.0f64;
        let mut worst_sigma = 0.0f64;
        let mut tested = 0usize;
        for shell in shells.shells.iter().filter(|s| s.n <= 8) {
            for freq in [[1i64, 0], [1, 1]] {
                let b = vec![BigInt::from(freq[0]), BigInt::from(freq[1])];
                let exact = ergodic_character_error(shell, &b).map_err(|e| e.to_string())?;
                let exact_f = rational_to_f64(&exact);
                let n = shell.n as f64;
                let envelope = n * n * (-delta_fit * n / 2.0).exp();
                fitted_c = fitted_c.max(exact_f / envelope);
                let mc = ergodic_character_error_mc(shell, &b, 100_000, 23)
                    .map_err(|e| e.to_string())?;
                let dev = (exact_f - mc.mean).abs();
                let sigma = if mc.stderr > 0.0 {
                    dev / mc.stderr
                } else if dev == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                };
                worst_sigma = worst_sigma.max(sigma);
                if sigma > 3.0 {
                    return Err(format!(
                        "shell {} freq {freq:?}: exact {exact_f:.5e} vs MC {:.5e} is {sigma:.2} sigma",
                        shell.n, mc.mean
                    ));
                }
                tested += 1;
            }
        }
        if !(fitted_c.is_finite() && fitted_c > 0.0) {
            return Err(format!("degenerate fitted constant {fitted_c}"));
        }
        if fitted_c > 50.0 {
            return Err(format!("fitted envelope constant {fitted_c} implausibly large"));
        }
        let secs = t.elapsed().as_secs_f64();
        if secs >= 300.0 {
            return Err(format!("runtime {secs:.1}s exceeds the 5min budget"));
        }
        Ok(format!(
            "{tested} shell/frequency pairs, fitted C = {fitted_c:.3}, worst MC deviation {worst_sigma:.2} sigma, {secs:.1}s"
        ))
    })();
    report(6, "character errors", result);
}

#[test]
fn criterion_7_equidistribution_suite() {
    let _gate = dedicated();
    let t = Instant::now();
    let result = (|| -> Result<String, String> {
        // (a) The explicit equidistribution bound dominates the exact
        // discrepancy on randomized atomic measures.
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for case in 0..100 {
            let n = rng.gen_range(5..=20);
            let w = BigRational::new(BigInt::one(), BigInt::from(n));
            let atoms: Vec<(TorusPoint, BigRational)> = (0..n)
                .map(|_| {
                    let coord = |rng: &mut ChaCha8Rng| {
                        let d = rng.gen_range(1..=24i64);
                        rat(rng.gen_range(0..d), d)
                    };
                    (TorusPoint::exact(vec![coord(&mut rng), coord(&mut rng)]), w.clone())
                })
                .collect();
            let nu = TorusAtomicMeasure::new(atoms).map_err(|e| e.to_string())?;
            let d = discrepancy(&nu).map_err(|e| e.to_string())?;
            for window in [1u32, 4, 16] {
                let bound = etk_bound(&nu, window).map_err(|e| e.to_string())?.bound;
                if d.value_f64 > bound + 1e-9 {
                    return Err(format!(
                        "case {case}, window {window}: discrepancy {} above bound {bound}",
                        d.value_f64
                    ));
                }
            }
        }

        // (b) Rational origin: the walk stays on the 1/21 grid and its
        // discrepancy never drops below 0.045.
        let p = sanov_presentation();
        let mu = srw_measure(&p);
        let mut nu =
            TorusAtomicMeasure::delta(TorusPoint::exact(vec![rat(1, 3), rat(1, 7)]));
        let floor_value = rat(9, 200);
        let grid = BigInt::from(21);
        let mut min_disc = f64::INFINITY;
        for k in 0..=12u32 {
            if k > 0 {
                nu = walk_step(&mu, &nu, 1_000).map_err(|e| e.to_string())?;
            }
            for (point, _) in nu.atoms() {
                for c in point.coords() {
                    if (&grid % c.denom()) != BigInt::zero() {
                        return Err(format!("step {k}: atom escaped the 1/21 grid: {c}"));
                    }
                }
            }
            let d = discrepancy(&nu).map_err(|e| e.to_string())?;
            min_disc = min_disc.min(d.value_f64);
            if d.value < floor_value {
                return Err(format!("step {k}: discrepancy {} below 0.045", d.value_f64));
            }
        }

        // (c) Badly approximable origin: the peak Fourier coefficient decays
        // log-linearly in the step count.
        let x = TorusPoint::real(vec![
            sqrt_rational(2, 160) - BigRational::one(),
            sqrt_rational(3, 160) - BigRational::one(),
        ]);
        let mut nu = TorusAtomicMeasure::delta(x);
        let mut samples = Vec::new();
        for k in 1..=12u32 {
            nu = walk_step(&mu, &nu, 1_200_000).map_err(|e| e.to_string())?;
            if k >= 4 {
                let mf = max_fourier(&nu, 50).map_err(|e| e.to_string())?;
                samples.push((k, mf));
            }
        }
        let fit = decay_rate_fit(&samples).ok_or("no decay fit")?;
        if fit.rate >= 0.0 {
            return Err(format!("peak Fourier slope {:.4} is not negative", fit.rate));
        }
        let secs = t.elapsed().as_secs_f64();
        if secs >= 600.0 {
            return Err(format!("runtime {secs:.1}s exceeds the 10min budget"));
        }
        Ok(format!(
            "bound dominated 100 measures; grid walk discrepancy >= {min_disc:.4}; decay slope {:.4}; {secs:.1}s",
            fit.rate
        ))
    })();
    report(7, "equidistribution suite", result);
}

#[test]
fn criterion_8_invariant_suites() {
    let _gate = dedicated();
    let t = Instant::now();
    let result = (|| -> Result<String, String> {
        // (a) Action identity on 10^4 random triples, exact arithmetic.
        let p = sanov_presentation();
        let gens: Vec<GroupElement> =
            p.symmetric_generators().into_iter().map(|(_, g)| g).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let random_element = |rng: &mut ChaCha8Rng| {
            let len = rng.gen_range(0..=6);
            let mut g = GroupElement::identity(2);
            for _ in 0..len {
                g = g.compose(&gens[rng.gen_range(0..4)]).expect("2x2 product");
            }
            g
        };
        let e = GroupElement::identity(2);
        for trial in 0..10_000 {
            let g = random_element(&mut rng);
            let h = random_element(&mut rng);
            let d = rng.gen_range(1..=97i64);
            let x = TorusPoint::exact(vec![
                rat(rng.gen_range(0..d), d),
                rat(rng.gen_range(0..d), d),
            ]);
            let gh = g.compose(&h).expect("2x2 product");
            let via_product = act(&gh, &x).map_err(|e| e.to_string())?;
            let via_steps =
                act(&g, &act(&h, &x).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
            if via_product.coords() != via_steps.coords() {
                return Err(format!("trial {trial}: (gh).x != g.(h.x)"));
            }
            if act(&e, &x).map_err(|e| e.to_string())?.coords() != x.coords() {
                return Err(format!("trial {trial}: identity moved a point"));
            }
        }

        // (b) Busemann word identity, exhaustive over all pairs to length 8.
        let mut words = vec![Word::identity()];
        for n in 1..=8usize {
            words.extend(sphere_words(2, n));
        }
        let total_words = words.len();
        words
            .par_iter()
            .try_for_each(|g| {
                let gi = g.inverse();
                for h in &words {
                    let lhs = busemann(g, h);
                    let rhs = gi.concat(h).len() as i64 - g.len() as i64;
                    if lhs != rhs {
                        return Err(format!("busemann mismatch at g={g:?}, h={h:?}"));
                    }
                }
                Ok(())
            })?;

        // (c) The level sets partition each sphere: exhaustive over S_n for
        // n <= 6 with deterministic samples of g at radius n + 3.
        let model = BoundaryModel::new(2).map_err(|e| e.to_string())?;
        for n in 1..=6u32 {
            let r = n + 3;
            let pool: Vec<Word> = model.sphere(r);
            let step = (pool.len() / 25).max(1);
            for g in pool.iter().step_by(step) {
                let mut seen: BTreeSet<Vec<i32>> = BTreeSet::new();
                let mut total = 0u64;
                for a in 0..=n {
                    let xs = model.x_a_set(g, n, a, 0).map_err(|e| e.to_string())?;
                    total += xs.len() as u64;
                    for w in xs {
                        if !seen.insert(w.letters().to_vec()) {
                            return Err(format!("duplicate level-set member at n={n}, a={a}"));
                        }
                    }
                }
                if total != sphere_size(2, n as usize) {
                    return Err(format!(
                        "level sets cover {total} of {} words at n={n}",
                        sphere_size(2, n as usize)
                    ));
                }
            }
        }

        // (d) Constructed operators: self-adjoint with norm at most one.
        let mu = srw_measure(&p);
        let word_ball = enumerate_ball(
            &sanov_word_presentation(),
            3,
            &EnumerationConfig::default(),
        )
        .map_err(|e| e.to_string())?;
        let word_shells = word_ball.shells(1);
        let sphere_mu = word_shells
            .shells
            .iter()
            .find(|s| s.n == 2)
            .ok_or("no length-2 sphere measure")?;
        let mut operators = Vec::new();
        for window in [5u32, 16, 50] {
            operators.push(build_shell_operator(&mu, window).map_err(|e| e.to_string())?);
        }
        operators.push(build_shell_operator(sphere_mu, 12).map_err(|e| e.to_string())?);
        let mut vec_rng = ChaCha8Rng::seed_from_u64(3);
        for op in &operators {
            if !op.is_self_adjoint() {
                return Err("constructed operator is not self-adjoint".into());
            }
            let dim = op.dim();
            let v: Vec<f64> = (0..dim).map(|_| vec_rng.gen_range(-1.0..1.0)).collect();
            let w: Vec<f64> = (0..dim).map(|_| vec_rng.gen_range(-1.0..1.0)).collect();
            let mut av = vec![0.0; dim];
            let mut aw = vec![0.0; dim];
            op.apply(&v, &mut av);
            op.apply(&w, &mut aw);
            let dot = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).map(|(x, y)| x * y).sum() };
            let lhs = dot(&av, &w);
            let rhs = dot(&v, &aw);
            if (lhs - rhs).abs() > 1e-8 * (1.0 + lhs.abs().max(rhs.abs())) {
                return Err(format!("adjointness defect {lhs} vs {rhs}"));
            }
            let est = operator_norm_estimate::<f64>(op, 1e-7, 300, 3).map_err(|e| e.to_string())?;
            if est.value > 1.0 + 1e-9 {
                return Err(format!("norm estimate {} above one", est.value));
            }
        }

        // (e) Power-mean monotonicity of the return-probability roots.
        for measure in [&mu, sphere_mu] {
            let est = return_prob_norm_estimate::<f64>(measure, 8, 10_000_000);
            if est.roots.windows(2).any(|w| w[1] + 1e-12 < w[0]) {
                return Err(format!("return roots not monotone: {:?}", est.roots));
            }
        }

        let secs = t.elapsed().as_secs_f64();
        if secs >= 300.0 {
            return Err(format!("runtime {secs:.1}s exceeds the 5min budget"));
        }
        Ok(format!(
            "10^4 exact action triples, {total_words}^2 cocycle identities, level-set partitions to n=6, {} operators self-adjoint with norm <= 1, monotone return roots; {secs:.1}s",
            operators.len()
        ))
    })();
    report(8, "invariant suites", result);
}
