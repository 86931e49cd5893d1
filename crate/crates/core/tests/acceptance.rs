//! Acceptance suite: one line per criterion, non-zero exit if any fails.
//! Run with `cargo test -p qnklab --test acceptance`.

use std::f64::consts::{PI, SQRT_2};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use qnklab::channel::{kraus_from_dilation, natural_of_unitary};
use qnklab::commutator::{extend_sets, multiplicative_phase, verify_propositions, verify_theorem1, Proposition, Theorem1Outcome};
use qnklab::family::{build_scheme1_family, default_scheme2_family, index_set, keyed_family, SchemeParams, Variant};
use qnklab::gates::{pauli_x, ry, weyl_clock, weyl_shift};
use qnklab::linalg::{
    frobenius_distance, identity, trace_distance, unvec_matrix, vec_matrix, ComplexMatrix,
};
use qnklab::protocol::{bitwise_controlled, recover_message, run_general_framework, run_keyed_session};
use qnklab::random::{haar_unitary, random_density, random_pure_state, rng_from_seed};
use qnklab::security::{check_indistinguishability, choi_bounds, diamond_norm, random_cipher_triple, unitary_diamond_distance};
use rand::Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit_s: u64) -> Result<(), String> {
    ensure(elapsed.as_secs_f64() < limit_s as f64, || {
        format!("took {:.2}s, limit {limit_s}s", elapsed.as_secs_f64())
    })
}

fn e<E: std::fmt::Display>(err: E) -> String {
    err.to_string()
}

fn natural_consistency() -> Outcome {
    let start = Instant::now();
    let mut rng = rng_from_seed(1001);
    let mut worst = 0.0f64;
    for trial in 0..100 {
        let d = if trial % 2 == 0 { 2 } else { 4 };
        let ancilla = 2 + trial % 3;
        let channel = kraus_from_dilation(&haar_unitary(ancilla * d, &mut rng), ancilla).map_err(e)?;
        let rho = random_density(d, &mut rng);
        let via_natural = unvec_matrix(&(channel.natural() * vec_matrix(rho.matrix()))).map_err(e)?;
        let via_kraus = channel
            .kraus()
            .iter()
            .fold(ComplexMatrix::zeros(d, d), |acc, k| acc + k * rho.matrix() * k.adjoint());
        worst = worst.max(frobenius_distance(&via_natural, &via_kraus));
    }
    ensure(worst < 1e-12, || format!("max deviation {worst:.3e}"))?;
    within(start.elapsed(), 5)?;
    Ok(format!("100 channels, max deviation {worst:.2e}"))
}

fn general_framework() -> Outcome {
    let start = Instant::now();
    let mut rng = rng_from_seed(1002);
    let mut worst_ok = 0.0f64;
    let mut least_bad = f64::INFINITY;
    for trial in 0..20 {
        let q = 1 + trial % 2;
        let dm = 1usize << q;
        let targets = |rng: &mut qnklab::random::SimRng| (0..q).map(|_| haar_unitary(2, rng)).collect::<Vec<_>>();
        let ua = bitwise_controlled(&targets(&mut rng), true).map_err(e)?;
        let ub = bitwise_controlled(&targets(&mut rng), false).map_err(e)?;
        let rho = random_pure_state(dm, &mut rng);
        let rho_a = random_density(dm, &mut rng);
        let rho_b = random_density(dm, &mut rng);
        let run = run_general_framework(&ua, &ub, &ua.adjoint(), &ub.adjoint(), &rho, &rho_a, &rho_b).map_err(e)?;
        worst_ok = worst_ok.max(run.distance);

        // Alice's undo step replaced by an unrelated unitary
        let wrong = haar_unitary(dm * dm, &mut rng);
        let bad = run_general_framework(&ua, &ub, &wrong, &ub.adjoint(), &rho, &rho_a, &rho_b).map_err(e)?;
        least_bad = least_bad.min(bad.distance);
    }
    ensure(worst_ok < 1e-10, || format!("matched instance distance {worst_ok:.3e}"))?;
    ensure(least_bad > 1e-3, || format!("mismatched instance distance {least_bad:.3e}"))?;
    within(start.elapsed(), 10)?;
    Ok(format!("matched max {worst_ok:.2e}, mismatched min {least_bad:.3}"))
}

fn scheme1_round_trip() -> Outcome {
    let mut rng = rng_from_seed(1003);
    let mut worst = 0.0f64;
    for trial in 0..200u64 {
        let dim = if trial % 2 == 0 { 2 } else { 4 };
        let base = build_scheme1_family(3, 3, dim, trial).map_err(e)?;
        let params = SchemeParams::new(trial, Variant::Plain);
        let k = rng.random_range(0..params.key_space);
        let set = index_set(k, &params).map_err(e)?;
        let i = set[rng.random_range(0..set.len())];
        let (schedule, fam) = keyed_family(k, i, &params, &base).map_err(e)?;
        let rho = random_density(dim, &mut rng);
        let t = run_keyed_session(&fam, &schedule.key, &rho, rng.random()).map_err(e)?;
        worst = worst.max(trace_distance(&t.final_state, &rho).map_err(e)?);
    }
    ensure(worst < 1e-10, || format!("max D(final, message) {worst:.3e}"))?;
    Ok(format!("200 runs, max D {worst:.2e}"))
}

fn scheme2_round_trip() -> Outcome {
    let base = default_scheme2_family(3, 3, 2024).map_err(e)?;
    let mut rng = rng_from_seed(1004);
    let mut worst_pred = 0.0f64;
    let mut worst_rec = 0.0f64;
    for variant in [Variant::Plain, Variant::Pair, Variant::Triple] {
        let params = SchemeParams::new(base.seed, variant);
        let k = 5;
        let i = index_set(k, &params).map_err(e)?[1];
        let (schedule, fam) = keyed_family(k, i, &params, &base).map_err(e)?;
        let rho = random_density(8, &mut rng);
        let t = run_keyed_session(&fam, &schedule.key, &rho, 17).map_err(e)?;
        worst_pred = worst_pred.max(t.prediction_residual);
        let direct = recover_message(&t, &schedule.key, &fam, false, &mut rng).map_err(e)?;
        worst_rec = worst_rec.max(trace_distance(&direct, &rho).map_err(e)?);
        for _ in 0..5 {
            let alt = recover_message(&t, &schedule.key, &fam, true, &mut rng).map_err(e)?;
            worst_rec = worst_rec.max(trace_distance(&alt, &rho).map_err(e)?);
        }
    }
    ensure(worst_pred < 1e-10, || format!("prediction residual {worst_pred:.3e}"))?;
    ensure(worst_rec < 1e-10, || format!("recovery distance {worst_rec:.3e}"))?;
    Ok(format!("plain/pair/triple, prediction {worst_pred:.2e}, recovery {worst_rec:.2e}"))
}

fn phase_theorem() -> Outcome {
    for d in [2usize, 3, 5] {
        let r = verify_theorem1(&weyl_shift(d), &weyl_clock(d)).map_err(e)?;
        let lambda = r.relation.lambda().ok_or_else(|| format!("d={d}: no scalar relation"))?;
        let want = 2.0 * PI / d as f64;
        let gap = (lambda - want).rem_euclid(2.0 * PI);
        let gap = gap.min(2.0 * PI - gap);
        ensure(gap < 1e-8, || format!("d={d}: lambda {lambda}, expected {want}"))?;
        ensure(r.eigenvalue_sum_a < 1e-8 && r.eigenvalue_sum_b < 1e-8, || {
            format!("d={d}: eigenvalue sums {:.3e}, {:.3e}", r.eigenvalue_sum_a, r.eigenvalue_sum_b)
        })?;
        ensure(r.outcome == Theorem1Outcome::Pass, || format!("d={d}: outcome {:?}", r.outcome))?;
    }
    let mut rng = rng_from_seed(1005);
    let mut nontrivial = 0;
    for trial in 0..100 {
        let d = 2 + trial % 2;
        let a = natural_of_unitary(&haar_unitary(d, &mut rng));
        let b = natural_of_unitary(&haar_unitary(d, &mut rng));
        if multiplicative_phase(&a, &b).map_err(e)?.is_nontrivial() {
            nontrivial += 1;
        }
    }
    ensure(nontrivial == 0, || format!("{nontrivial} natural-rep pairs showed a phase"))?;
    Ok("Weyl d=2,3,5 phase 2pi/d, traceless; 0/100 natural-rep phases".into())
}

fn propositions() -> Outcome {
    let start = Instant::now();
    let fam = default_scheme2_family(3, 3, 7).map_err(e)?;
    let mut worst = 0.0f64;
    for which in [Proposition::One, Proposition::Two, Proposition::Three] {
        let r = verify_propositions(&fam.s_a, &fam.s_b, which, 1e-10).map_err(e)?;
        ensure(r.pass, || format!("{}: residual {:.3e}", r.kind, r.max_residual))?;
        worst = worst.max(r.max_residual);
    }
    within(start.elapsed(), 30)?;
    Ok(format!("max residual {worst:.2e} in {:.2}s", start.elapsed().as_secs_f64()))
}

fn extension() -> Outcome {
    let fam = default_scheme2_family(3, 3, 7).map_err(e)?;
    let ext = extend_sets(&fam.s_a, &fam.s_b, 1e-10).map_err(e)?;
    ensure(ext.max_residual < 1e-10, || format!("cross residual {:.3e}", ext.max_residual))?;
    let small = default_scheme2_family(2, 2, 7).map_err(e)?;
    let small_ext = extend_sets(&small.s_a, &small.s_b, 1e-10).map_err(e)?;
    let counts = small_ext.non_identity_counts();
    ensure(counts == (2, 2), || format!("n=2 extension has {counts:?} non-identity elements"))?;
    Ok(format!(
        "n=3 residual {:.2e}, n=2 non-identity sizes {counts:?}",
        ext.max_residual
    ))
}

fn checked_norm(delta: &ComplexMatrix) -> Result<f64, String> {
    let v = diamond_norm(delta).map_err(e)?;
    let (lo, hi) = choi_bounds(delta).map_err(e)?;
    ensure(v >= lo - 1e-9 && v <= hi + 1e-9, || format!("{v} outside [{lo}, {hi}]"))?;
    Ok(v)
}

fn diamond_oracles() -> Outcome {
    let start = Instant::now();
    let nat = natural_of_unitary;
    let x = checked_norm(&(nat(&identity(2)) - nat(&pauli_x())))?;
    ensure((x - 2.0).abs() < 1e-6, || format!("I vs X: {x}"))?;
    let r = checked_norm(&(nat(&identity(2)) - nat(&ry(PI / 2.0))))?;
    ensure((r - SQRT_2).abs() < 1e-6, || format!("I vs Ry(pi/2): {r}"))?;
    let mut rng = rng_from_seed(1008);
    let mut worst = 0.0f64;
    for trial in 0..20 {
        let d = 2 + trial % 2;
        let (u, v) = (haar_unitary(d, &mut rng), haar_unitary(d, &mut rng));
        let exact = unitary_diamond_distance(&u, &v).map_err(e)?;
        let got = checked_norm(&(nat(&u) - nat(&v)))?;
        worst = worst.max((got - exact).abs());
    }
    ensure(worst < 1e-6, || format!("closed-form deviation {worst:.3e}"))?;
    within(start.elapsed(), 60)?;
    Ok(format!("oracles exact, 20 pairs max deviation {worst:.2e}"))
}

fn definition_equivalence() -> Outcome {
    let mut rng = rng_from_seed(1009);
    let mut counterexamples = 0;
    let (mut def1_passes, mut def2_passes) = (0, 0);
    for _ in 0..50 {
        let d = rng.random_range(2..=3);
        let triple = random_cipher_triple(d, &mut rng);
        // thresholds spanning both outcomes
        for eps in [0.2, 0.4, 0.6, 0.8] {
            let r = check_indistinguishability(&triple, eps).map_err(e)?;
            if r.def1.pass {
                def1_passes += 1;
                if r.first_cipher_radius >= eps {
                    counterexamples += 1;
                }
            }
            if r.def2.pass {
                def2_passes += 1;
                if !check_indistinguishability(&triple, 2.0 * eps).map_err(e)?.def1.pass {
                    counterexamples += 1;
                }
            }
        }
    }
    ensure(counterexamples == 0, || format!("{counterexamples} counterexamples"))?;
    ensure(def1_passes > 0 && def2_passes > 0, || "no instance exercised an implication".to_string())?;
    Ok(format!("50 triples, 0 counterexamples ({def1_passes} def1 / {def2_passes} def2 passes)"))
}

fn run_cli(dir: &Path, args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_qnklab"))
        .current_dir(dir)
        .env_remove("QNKLAB_TOL")
        .args(args)
        .output()
        .map_err(e)?;
    ensure(out.status.success(), || {
        format!("{args:?} exited {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr))
    })
}

fn cli_pipeline(dir: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let steps: [&[&str]; 4] = [
        &["gen-family", "--scheme", "2", "--seed", "7", "--out", "family.json"],
        &["run-session", "--family", "family.json", "--key", "3", "--seed", "11", "--variant", "pair", "--out", "transcript.json"],
        &["verify-identities", "--scheme", "2", "--seed", "7", "--out", "identities.json"],
        &["analyze", "--family", "family.json", "--keys", "3,5", "--eps", "0.1", "--report", "analysis.json"],
    ];
    for step in steps {
        run_cli(dir, step)?;
    }
    ["family.json", "transcript.json", "identities.json", "analysis.json"]
        .iter()
        .map(|f| Ok((f.to_string(), std::fs::read(dir.join(f)).map_err(e)?)))
        .collect()
}

fn cli_reproducibility() -> Outcome {
    let first = tempfile::tempdir().map_err(e)?;
    let second = tempfile::tempdir().map_err(e)?;
    let a = cli_pipeline(first.path())?;
    let b = cli_pipeline(second.path())?;
    for ((name, x), (_, y)) in a.iter().zip(&b) {
        ensure(x == y, || format!("{name} differs between runs"))?;
    }
    Ok(format!("{} artifacts byte-identical", a.len()))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("natural representation matches Kraus action", natural_consistency),
        ("ancilla framework recovers the message", general_framework),
        ("commuting-family round trip", scheme1_round_trip),
        ("keyed constant-commutator round trip", scheme2_round_trip),
        ("phase theorem on Weyl pairs", phase_theorem),
        ("product identities on default family", propositions),
        ("extended sets", extension),
        ("diamond norm oracles", diamond_oracles),
        ("pairwise vs reference indistinguishability", definition_equivalence),
        ("CLI pipeline reproducibility", cli_reproducibility),
    ];
    let mut failed = 0;
    for (n, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = check();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("[PASS] {:>2} {name}: {detail} ({secs:.2}s)", n + 1),
            Err(why) => {
                failed += 1;
                println!("[FAIL] {:>2} {name}: {why} ({secs:.2}s)", n + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
