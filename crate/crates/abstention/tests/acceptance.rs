//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line
//! with the measured quantity next to its threshold.
//!
//! Criteria 1 and 2 pin rate-separation targets at desk-scale budgets; with
//! the theory-faithful confidence widths implemented here those budgets sit
//! deep in the pre-asymptotic plateau, so the two tests document the
//! measured slopes and are expected to stay red until the budgets grow by
//! orders of magnitude. Everything else is green.

use abstention::adaptive::{default_c1, run_adaptive, AdaptiveOptions};
use abstention::classifier::Decision;
use abstention::engine::Status;
use abstention::estimate::{confidence_radius, SmoothnessParams};
use abstention::fixed_cost::run_algorithm1;
use abstention::glm::{reassemble, recover_direction};
use abstention::known_marginal::{run_algorithm2, Algo2Options};
use abstention::oracle::Oracle;
use abstention::partition::{Cell, TreeParams};
use abstention::problems::{make_glm_instance, make_linear_1d, McOptions, PsiSpec};
use abstention::risk::{fit_rate, passive_plugin, risk_of, RiskMode};
use abstention::trace::{Action, RunTrace};
use abstention::unlabelled::{run_algorithm3, Algo3Options, DeParams};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use std::collections::HashMap;
use std::time::Instant;

const LAMBDA: f64 = 0.2;
const DELTA: f64 = 0.2;

fn linear_setup() -> (abstention::problems::ProblemInstance, TreeParams, SmoothnessParams) {
    (
        make_linear_1d(),
        TreeParams::default_for_dim(1).unwrap(),
        SmoothnessParams::new(1.0, 1.0),
    )
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

/// Replay a trace, tracking per-cell geometry and label statistics, and
/// count confidence violations `|eta_hat - eta(center)| > e_t` over every
/// sampled cell at every round.
fn replay_confidence_violations(
    trace: &RunTrace,
    instance: &abstention::problems::ProblemInstance,
    n: u64,
) -> u64 {
    let mut cells: HashMap<(u32, u64), Cell> = HashMap::new();
    cells.insert((0, 1), Cell::root(instance.dim));
    let mut stats: HashMap<(u32, u64), (u64, u64)> = HashMap::new();
    let mut violations = 0;
    for row in &trace.rows {
        match row.action {
            Action::Refine => {
                if let Some(cell) = cells.get(&(row.h, row.i)).cloned() {
                    let (a, b) = cell.split();
                    cells.insert(a.id(), a);
                    cells.insert(b.id(), b);
                }
            }
            Action::Label { y } => {
                let e = stats.entry((row.h, row.i)).or_insert((0, 0));
                e.0 += 1;
                e.1 += u64::from(y);
            }
            _ => {}
        }
        // Audit every sampled cell at this round.
        for (id, (cnt, sum)) in &stats {
            if *cnt == 0 {
                continue;
            }
            let Some(cell) = cells.get(id) else { continue };
            let eta_hat = *sum as f64 / *cnt as f64;
            let eta = instance.eta(&cell.center());
            if (eta_hat - eta).abs() > confidence_radius(row.t, *cnt, n) {
                violations += 1;
            }
        }
    }
    violations
}

#[test]
fn criterion_01_rate_fixed_cost() {
    let (inst, tp, sm) = linear_setup();
    let mc = McOptions { samples: 10_000 };
    let t0 = Instant::now();
    let mut budgets = Vec::new();
    let mut medians = Vec::new();
    for p in 7..=13u32 {
        let n = 1u64 << p;
        let ex: Vec<f64> = (0..20u64)
            .map(|rep| {
                let seed = 1_000 * p as u64 + rep;
                let mut oracle = Oracle::membership(n, seed);
                let out = run_algorithm1(&inst, &mut oracle, n, LAMBDA, sm, tp).unwrap();
                let mut rng = ChaCha12Rng::seed_from_u64(seed + 7);
                risk_of(&inst, &out.classifier, RiskMode::Fixed { lambda: LAMBDA }, &mc, &mut rng)
                    .excess
            })
            .collect();
        budgets.push(n);
        medians.push(median(ex));
    }
    let elapsed = t0.elapsed();
    let fit = fit_rate(&budgets, &medians).unwrap();
    let pass = fit.slope <= -0.8 && elapsed.as_secs() <= 600;
    println!(
        "criterion 01 {}: fixed-cost slope over n=2^7..2^13 is {:.3} (need <= -0.8), medians {:?}, runtime {:?} (cap 600 s)",
        if pass { "PASS" } else { "FAIL" },
        fit.slope,
        medians,
        elapsed
    );
    assert!(
        elapsed.as_secs() <= 600,
        "sweep exceeded the single-threaded runtime budget"
    );
    assert!(
        fit.slope <= -0.8,
        "fitted slope {:.3} above -0.8: desk-scale budgets are pre-asymptotic \
         for the implemented confidence widths (see medians {:?})",
        fit.slope,
        medians
    );
}

#[test]
fn criterion_02_active_passive_separation() {
    let (inst, tp, sm) = linear_setup();
    let mc = McOptions { samples: 10_000 };
    let mut budgets = Vec::new();
    let mut med_active = Vec::new();
    let mut med_passive = Vec::new();
    for p in 7..=13u32 {
        let n = 1u64 << p;
        let mut ex_a = Vec::new();
        let mut ex_p = Vec::new();
        for rep in 0..20u64 {
            let seed = 2_000 * p as u64 + rep;
            let mut oracle = Oracle::membership(n, seed);
            let out = run_algorithm1(&inst, &mut oracle, n, LAMBDA, sm, tp).unwrap();
            let mut rng = ChaCha12Rng::seed_from_u64(seed + 13);
            ex_a.push(
                risk_of(&inst, &out.classifier, RiskMode::Fixed { lambda: LAMBDA }, &mc, &mut rng)
                    .excess,
            );
            let g = passive_plugin(&inst, n, RiskMode::Fixed { lambda: LAMBDA }, DELTA, &mut rng)
                .unwrap();
            ex_p.push(
                risk_of(&inst, &g, RiskMode::Fixed { lambda: LAMBDA }, &mc, &mut rng).excess,
            );
        }
        budgets.push(n);
        med_active.push(median(ex_a));
        med_passive.push(median(ex_p));
    }
    let fa = fit_rate(&budgets, &med_active).unwrap();
    let fp = fit_rate(&budgets, &med_passive).unwrap();
    let passive_in_window = (-0.65..=-0.35).contains(&fp.slope);
    let active_steeper = fa.slope <= fp.slope - 0.2;
    println!(
        "criterion 02 {}: passive slope {:.3} (window [-0.65, -0.35]), active slope {:.3} (need <= passive - 0.2)",
        if passive_in_window && active_steeper { "PASS" } else { "FAIL" },
        fp.slope,
        fa.slope
    );
    assert!(
        passive_in_window,
        "passive slope {:.3} outside [-0.65, -0.35]: on this instance the plug-in \
         baseline is dominated by grid-alignment effects at these budgets (medians {:?})",
        fp.slope,
        med_passive
    );
    assert!(
        active_steeper,
        "active slope {:.3} not 0.2 steeper than passive {:.3}",
        fa.slope,
        fp.slope
    );
}

#[test]
fn criterion_03_known_marginal_feasibility() {
    let (inst, tp, sm) = linear_setup();
    let mut ok = 0;
    for seed in 0..100u64 {
        let mut oracle = Oracle::membership(1024, 31_000 + seed);
        let out =
            run_algorithm2(&inst, &mut oracle, 1024, DELTA, sm, tp, Algo2Options::default())
                .unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let m = out
            .classifier
            .abstain_measure(&inst, &McOptions { samples: 100 }, &mut rng);
        if m.stderr == 0.0 && (m.value - DELTA).abs() <= 1e-9 {
            ok += 1;
        }
    }
    println!(
        "criterion 03 {}: known-marginal abstention equals delta within 1e-9 in {ok}/100 runs (need 100)",
        if ok == 100 { "PASS" } else { "FAIL" }
    );
    assert_eq!(ok, 100);
}

#[test]
fn criterion_04_empirical_marginal_feasibility() {
    let (inst, tp, sm) = linear_setup();
    let mut ok = 0;
    for seed in 0..100u64 {
        let mut oracle = Oracle::membership(1024, 41_000 + seed);
        let out = run_algorithm3(
            &inst,
            &mut oracle,
            1024,
            DELTA,
            sm,
            tp,
            None,
            Algo3Options::default(), // upfront m = 4 n^2
        )
        .unwrap();
        assert!(out.m_n >= 4 * 1024 * 1024);
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let m = out
            .classifier
            .abstain_measure(&inst, &McOptions { samples: 100 }, &mut rng);
        if m.value <= DELTA + 1e-12 {
            ok += 1;
        }
    }
    println!(
        "criterion 04 {}: true abstention <= delta in {ok}/100 runs with upfront 4n^2 unlabelled samples (need >= 95)",
        if ok >= 95 { "PASS" } else { "FAIL" }
    );
    assert!(ok >= 95, "only {ok}/100 feasible");
}

#[test]
fn criterion_05_unlabelled_budget_bound() {
    let (inst, tp, sm) = linear_setup();
    let mut worst_ratio = 0.0f64;
    for (c2, alpha2) in [(1.0f64, 1.0f64), (1.0, 0.75), (0.5, 1.0)] {
        let de = DeParams { c2, alpha2 };
        let bound = 64.0 * (1024f64).powf(2.0 * alpha2)
            / (c2.powi(4) * (sm.l * tp.v1.powf(sm.beta)).powf(2.0 * alpha2));
        for seed in 0..20u64 {
            let mut oracle = Oracle::membership(1024, 51_000 + seed);
            let out = run_algorithm3(
                &inst,
                &mut oracle,
                1024,
                DELTA,
                sm,
                tp,
                Some(de),
                Algo3Options::default(),
            )
            .unwrap();
            worst_ratio = worst_ratio.max(out.m_n as f64 / bound);
            assert!(
                (out.m_n as f64) <= bound,
                "m_n = {} exceeds bound {bound:.0} at (c2, alpha2) = ({c2}, {alpha2})",
                out.m_n
            );
        }
    }
    println!(
        "criterion 05 PASS: every detectability-mode run stayed within its unlabelled budget bound (worst ratio {worst_ratio:.4})"
    );
}

#[test]
fn criterion_06_threshold_sandwich() {
    let (inst, tp, sm) = linear_setup();
    let gamma_delta = 0.1; // analytic for the linear instance at delta = 0.2
    let mut rounds = 0u64;
    let mut good = 0u64;
    for seed in 0..50u64 {
        let n = 1024;
        let mut oracle = Oracle::membership(n, 61_000 + seed);
        let out =
            run_algorithm2(&inst, &mut oracle, n, DELTA, sm, tp, Algo2Options::default()).unwrap();
        // Confidence-clean filter: skip runs with any coverage violation.
        if replay_confidence_violations(&out.trace, &inst, n) > 0 {
            continue;
        }
        for row in &out.trace.rows {
            let (Some(g1), Some(g2), Some(j)) = (row.gamma1, row.gamma2, row.j_t) else {
                continue;
            };
            if !j.is_finite() {
                continue;
            }
            rounds += 1;
            let lower_ok = -2.0 * j <= g1 - gamma_delta && g1 - gamma_delta <= 0.0;
            let upper_ok = (g2 - gamma_delta).abs() <= j;
            if lower_ok && upper_ok {
                good += 1;
            }
        }
    }
    let frac = good as f64 / rounds.max(1) as f64;
    println!(
        "criterion 06 {}: threshold sandwich held on {:.2}% of {} audited rounds (need >= 95%)",
        if frac >= 0.95 { "PASS" } else { "FAIL" },
        100.0 * frac,
        rounds
    );
    assert!(rounds > 0);
    assert!(frac >= 0.95);
}

#[test]
fn criterion_07_discarded_region() {
    let (inst, tp, sm) = linear_setup();
    let n = 50u64;
    let mut violations = 0;
    for seed in 0..500u64 {
        let mut oracle = Oracle::stream(n, 71_000 + seed);
        let out = run_algorithm1(&inst, &mut oracle, n, LAMBDA, sm, tp).unwrap();
        let discarded_mass: f64 = out
            .leaves
            .iter()
            .filter(|l| l.status == Status::Discarded)
            .map(|l| inst.box_measure(&l.cell).unwrap())
            .sum();
        if discarded_mass > 1.0 / n as f64 {
            violations += 1;
        }
    }
    let frac = violations as f64 / 500.0;
    println!(
        "criterion 07 {}: discarded-region mass exceeded 1/n in {:.1}% of 500 stream runs (need <= 5%)",
        if frac <= 0.05 { "PASS" } else { "FAIL" },
        100.0 * frac
    );
    assert!(frac <= 0.05);
}

#[test]
fn criterion_08_confidence_coverage() {
    let (inst, tp, sm) = linear_setup();
    let n = 200u64;
    let mut bad_runs = 0;
    for seed in 0..200u64 {
        let mut oracle = Oracle::membership(n, 81_000 + seed);
        let out = run_algorithm1(&inst, &mut oracle, n, LAMBDA, sm, tp).unwrap();
        if replay_confidence_violations(&out.trace, &inst, n) > 0 {
            bad_runs += 1;
        }
    }
    let frac = bad_runs as f64 / 200.0;
    println!(
        "criterion 08 {}: confidence coverage violated in {:.1}% of 200 runs (need <= 10%)",
        if frac <= 0.10 { "PASS" } else { "FAIL" },
        100.0 * frac
    );
    assert!(frac <= 0.10);
}

#[test]
fn criterion_09_adaptive_parity_and_refine_bounds() {
    let (inst, tp, sm) = linear_setup();
    let n = 4096u64;
    let mc = McOptions { samples: 10_000 };
    let mut adaptive_ex = Vec::new();
    let mut plain_ex = Vec::new();
    let mut events_checked = 0usize;
    for seed in 0..20u64 {
        let mut oracle = Oracle::membership(n, 91_000 + seed);
        let out =
            run_adaptive(&inst, &mut oracle, n, LAMBDA, tp, AdaptiveOptions::default()).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(seed + 3);
        adaptive_ex.push(
            risk_of(&inst, &out.classifier, RiskMode::Fixed { lambda: LAMBDA }, &mc, &mut rng)
                .excess,
        );
        // Refine-count bounds on every refined cell, with the run's own c1
        // and the true per-cell variation W = cell width (eta(x) = x).
        let c1 = default_c1(n);
        for ev in &out.refine_events {
            let w = ev.cell.upper[0] - ev.cell.lower[0];
            let lo = 4.0 * c1 * c1 / (w * w);
            let hi = out.batch_size as f64 + 256.0 * c1 * c1 * (n as f64).ln() / (w * w);
            assert!(
                (ev.n1 as f64) >= lo && (ev.n1 as f64) <= hi,
                "refine of cell ({}, {}) at n1 = {} outside [{lo:.0}, {hi:.0}]",
                ev.cell.depth,
                ev.cell.index,
                ev.n1
            );
            events_checked += 1;
        }

        let mut oracle = Oracle::membership(n, 92_000 + seed);
        let out1 = run_algorithm1(&inst, &mut oracle, n, LAMBDA, sm, tp).unwrap();
        plain_ex.push(
            risk_of(&inst, &out1.classifier, RiskMode::Fixed { lambda: LAMBDA }, &mc, &mut rng)
                .excess,
        );
    }
    let ma = median(adaptive_ex);
    let mp = median(plain_ex);
    let pass = ma <= 5.0 * mp;
    println!(
        "criterion 09 {}: adaptive median excess {:.4} vs non-adaptive {:.4} (need <= 5x); refine-count bounds checked on {} events",
        if pass { "PASS" } else { "FAIL" },
        ma,
        mp,
        events_checked
    );
    assert!(pass, "adaptive {ma} > 5 x {mp}");
}

#[test]
fn criterion_10_glm_recovery() {
    // Noiseless reassembly is exact.
    let mut rng = ChaCha12Rng::seed_from_u64(5);
    for dim in [2usize, 3, 5] {
        for _ in 0..100 {
            let mut w: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            if w[0].abs() < 1e-3 {
                w[0] = 0.2;
            }
            let norm: f64 = w.iter().map(|v| v * v).sum::<f64>().sqrt();
            for v in &mut w {
                *v /= norm;
            }
            let angles: Vec<f64> = (1..dim).map(|j| w[j].atan2(w[0])).collect();
            let (w_hat, _) = reassemble(dim, &angles, w[0].signum()).unwrap();
            let err: f64 = w_hat
                .iter()
                .zip(&w)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            assert!(err <= 1e-6, "noiseless reassembly error {err} at dim {dim}");
        }
    }

    // Noisy recovery: psi(z) = z/4, D = 3, n = 5000 per pair.
    let w_star = {
        let v = [0.62f64, 0.55, -0.56];
        let n: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        vec![v[0] / n, v[1] / n, v[2] / n]
    };
    let inst = make_glm_instance(&w_star, PsiSpec::LinearQuarter).unwrap();
    let mut ok = 0;
    for seed in 0..100u64 {
        let rd = recover_direction(&inst, 5000, 0.4, 31_000 + seed).unwrap();
        let err: f64 = rd
            .w_hat
            .iter()
            .zip(&w_star)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        if err <= 0.1 {
            ok += 1;
        }
    }
    println!(
        "criterion 10 {}: direction recovered within 0.1 in {ok}/100 runs (need >= 90); noiseless reassembly exact",
        if ok >= 90 { "PASS" } else { "FAIL" }
    );
    assert!(ok >= 90, "only {ok}/100 within 0.1");
}

#[test]
fn criterion_11_property_corpus() {
    // The detailed randomized corpus lives in tests/properties.rs; this
    // criterion-level check runs a compact cross-section and requires zero
    // violations of the monotonicity/tiling/ledger invariants.
    let (inst, tp, sm) = linear_setup();
    let mut violations = 0u64;
    let mut runs = 0u64;
    for seed in 0..100u64 {
        for algo in 0..3 {
            let n = 16 + (seed % 8) * 16;
            let trace;
            let leaves;
            let labels;
            match algo {
                0 => {
                    let mut oracle = Oracle::membership(n, seed);
                    let out = run_algorithm1(&inst, &mut oracle, n, LAMBDA, sm, tp).unwrap();
                    labels = out.labels_used;
                    trace = out.trace;
                    leaves = out.leaves;
                }
                1 => {
                    let mut oracle = Oracle::membership(n, seed);
                    let out =
                        run_algorithm2(&inst, &mut oracle, n, DELTA, sm, tp, Algo2Options::default())
                            .unwrap();
                    labels = out.labels_used;
                    trace = out.trace;
                    leaves = out.leaves;
                }
                _ => {
                    let mut oracle = Oracle::membership(n, seed);
                    let out = run_algorithm3(
                        &inst,
                        &mut oracle,
                        n,
                        DELTA,
                        sm,
                        tp,
                        None,
                        Algo3Options { upfront_factor: 1.0, ..Default::default() },
                    )
                    .unwrap();
                    labels = out.labels_used;
                    trace = out.trace;
                    leaves = out.leaves;
                }
            }
            runs += 1;
            // Budget ledger: one unit per label row, never exceeding n.
            let label_rows = trace
                .rows
                .iter()
                .filter(|r| matches!(r.action, Action::Label { .. }))
                .count() as u64;
            if label_rows != labels || labels > n {
                violations += 1;
            }
            // Candidate index non-increasing.
            let finite: Vec<f64> = trace
                .rows
                .iter()
                .map(|r| r.i_value)
                .filter(|v| v.is_finite())
                .collect();
            if finite.windows(2).any(|w| w[1] > w[0] + 1e-9) {
                violations += 1;
            }
            // Leaf tiling: volumes sum to 1 and envelopes stay ordered.
            let vol: f64 = leaves.iter().map(|l| l.cell.volume()).sum();
            if (vol - 1.0).abs() > 1e-9 {
                violations += 1;
            }
            if leaves.iter().any(|l| l.lower > l.upper) {
                violations += 1;
            }
        }
    }
    println!(
        "criterion 11 {}: {violations} invariant violations across {runs} randomized runs (need 0)",
        if violations == 0 { "PASS" } else { "FAIL" }
    );
    assert_eq!(violations, 0);
}
