//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test -p energy-sde --test acceptance`. Criteria listed in
//! `KNOWN_FAILURES` are reported as FAIL but do not fail the run; each one
//! carries a companion check that does have to pass.

use std::collections::{HashSet, VecDeque};
use std::process::Command;
use std::time::{Duration, Instant};

use energy_sde::experiments::{
    convergence_study, noise_band_widths, normalized_index, persistence_estimate, sensitivity_sweep,
    ErrorSetup, ErrorTable, Qoi, SensitivitySetup, DEFAULT_DT_LIST,
};
use energy_sde::model::{jacobian, ModelParams, NoiseIntensities, Param, State};
use energy_sde::sde::{simulate, simulate_ensemble, Positivity, Scheme, SimConfig};
use energy_sde::stability::{
    classify_equilibrium, find_equilibria, persistence_bound, Branch, PersistenceBound, PersistenceSpec,
    SpectralVerdict,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// The literal origin spectrum {a1, -z1, -s1 s3, -d2} drops the d3/d1 coupling
/// between X1 and X4 that is present in the Jacobian itself.
const KNOWN_FAILURES: &[u32] = &[1];

const P: ModelParams = ModelParams::BASELINE;
const SIGMA: NoiseIntensities = NoiseIntensities::BASELINE;

struct Outcome {
    id: u32,
    name: &'static str,
    pass: bool,
    detail: String,
    elapsed: Duration,
    limit: Duration,
}

fn run(id: u32, name: &'static str, limit_s: u64, f: impl FnOnce() -> (bool, String)) -> Outcome {
    let t0 = Instant::now();
    let (pass, detail) = f();
    let elapsed = t0.elapsed();
    let limit = Duration::from_secs(limit_s);
    let o = Outcome {
        id,
        name,
        pass: pass && elapsed <= limit,
        detail,
        elapsed,
        limit,
    };
    let tag = match (o.pass, KNOWN_FAILURES.contains(&id)) {
        (true, _) => "PASS",
        (false, true) => "FAIL (known)",
        (false, false) => "FAIL",
    };
    println!(
        "[{tag}] criterion {:>2} {}: {} ({:.2}s, limit {}s)",
        o.id,
        o.name,
        o.detail,
        o.elapsed.as_secs_f64(),
        o.limit.as_secs()
    );
    o
}

// Independent oracles

fn oracle_drift(x: &State, p: &ModelParams) -> State {
    let [x1, x2, x3, x4] = *x;
    [
        p.a1 * x1 * (1.0 - x1 / p.w) - p.a2 * x2 * (x2 + x3) - p.d3 * x4,
        -p.z1 * x2 - p.z2 * x3 + p.z3 * x1 * (p.n - (x1 - x3)),
        p.s1 * x3 * (p.s2 * x1 - p.s3),
        p.d1 * x1 - p.d2 * x4,
    ]
}

fn sup_norm(v: &State) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Exact origin spectrum: X2 and X3 decouple, X1 and X4 form a 2x2 block.
fn origin_spectrum_oracle(p: &ModelParams) -> [f64; 4] {
    let disc = ((p.a1 + p.d2).powi(2) - 4.0 * p.d1 * p.d3).sqrt();
    let mut v = [
        0.5 * (p.a1 - p.d2 + disc),
        -p.z1,
        -p.s1 * p.s3,
        0.5 * (p.a1 - p.d2 - disc),
    ];
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

fn criterion_1() -> (bool, String) {
    let eqs = find_equilibria(&P).unwrap();
    let e0 = &eqs[0];
    assert_eq!(e0.branch, Branch::Trivial);
    let r = classify_equilibrium(&P, e0, &SIGMA, None).unwrap();
    let mut got: Vec<f64> = r.eigenvalues.iter().map(|z| z.re).collect();
    got.sort_by(|a, b| b.total_cmp(a));
    let imag_ok = r.eigenvalues.iter().all(|z| z.im.abs() < 1e-10);

    let exact = origin_spectrum_oracle(&P);
    let exact_err = got.iter().zip(exact).map(|(g, e)| (g - e).abs()).fold(0.0, f64::max);
    // Companion check: the computed spectrum is the true spectrum of J(E0).
    assert!(exact_err < 1e-10 && imag_ok, "origin spectrum {got:?} vs exact {exact:?}");
    assert_eq!(r.verdict, SpectralVerdict::Unstable);

    let mut literal: [f64; 4] = [0.8, -0.6, -0.42, -0.5];
    literal.sort_by(|a, b| b.total_cmp(a));
    let literal_err = got.iter().zip(literal).map(|(g, e)| (g - e).abs()).fold(0.0, f64::max);
    let pass = literal_err < 1e-10 && r.verdict == SpectralVerdict::Unstable;
    (
        pass,
        format!(
            "eigenvalues {:?}; max dev from {{0.8,-0.6,-0.42,-0.5}} = {:.3e}; max dev from exact J(E0) spectrum = {:.1e}; verdict {}",
            got.iter().map(|v| format!("{v:.6}")).collect::<Vec<_>>(),
            literal_err,
            exact_err,
            r.verdict.name()
        ),
    )
}

/// Lower face of the grid `(0, 10]^4` with spacing `h` is index 0.
fn grid_near_zeros(p: &ModelParams, h: f64, n: usize, tol: f64) -> Vec<[usize; 4]> {
    let g = |i: usize| (i + 1) as f64 * h;
    let mut hits = Vec::new();
    for i1 in 0..n {
        let x1 = g(i1);
        for i4 in 0..n {
            let x4 = g(i4);
            // |f4| and |f3| bound the sup norm from below and depend on few coordinates.
            if (p.d1 * x1 - p.d2 * x4).abs() > tol {
                continue;
            }
            for i3 in 0..n {
                let x3 = g(i3);
                if (p.s1 * x3 * (p.s2 * x1 - p.s3)).abs() > tol {
                    continue;
                }
                for i2 in 0..n {
                    let x = [x1, g(i2), x3, x4];
                    if sup_norm(&oracle_drift(&x, p)) <= tol {
                        hits.push([i1, i2, i3, i4]);
                    }
                }
            }
        }
    }
    hits
}

/// Hits in connected clusters (king-move adjacency) that touch the lower
/// boundary are shadows of zeros on the boundary of the orthant.
fn interior_clusters(hits: &[[usize; 4]]) -> (usize, usize) {
    let set: HashSet<[usize; 4]> = hits.iter().copied().collect();
    let mut seen = HashSet::new();
    let (mut boundary, mut interior) = (0, 0);
    for &start in hits {
        if !seen.insert(start) {
            continue;
        }
        let mut queue = VecDeque::from([start]);
        let mut touches = false;
        while let Some(c) = queue.pop_front() {
            touches |= c.contains(&0);
            for d in 0..81usize {
                let off = [d % 3, (d / 3) % 3, (d / 9) % 3, d / 27];
                if off == [1, 1, 1, 1] {
                    continue;
                }
                let mut nb = c;
                let mut ok = true;
                for k in 0..4 {
                    match (c[k] + off[k]).checked_sub(1) {
                        Some(v) => nb[k] = v,
                        None => ok = false,
                    }
                }
                if ok && set.contains(&nb) && seen.insert(nb) {
                    queue.push_back(nb);
                }
            }
        }
        if touches {
            boundary += 1;
        } else {
            interior += 1;
        }
    }
    (boundary, interior)
}

/// Sup of the infinity-norm of the Jacobian over `[0, 10]^4`, bounded entrywise.
fn lipschitz_bound(p: &ModelParams, hi: f64) -> f64 {
    let rows = [
        p.a1 * (1.0f64).max((1.0 - 2.0 * hi / p.w).abs()) + p.a2 * 3.0 * hi + p.a2 * hi + p.d3,
        p.z3 * (p.n.abs() + 2.0 * hi + hi) + p.z1 + (p.z2 + p.z3 * hi),
        p.s1 * p.s2 * hi + p.s1 * (p.s2 * hi + p.s3),
        p.d1 + p.d2,
    ];
    rows.into_iter().fold(0.0, f64::max)
}

fn criterion_2() -> (bool, String) {
    let mut notes = Vec::new();
    let mut ok = true;

    let cases = [
        ("baseline", P),
        ("a2=1,z3=0.5", P.with(Param::A2, 1.0).with(Param::Z3, 0.5)),
        ("z2=0.05", P.with(Param::Z2, 0.05)),
    ];
    let mut feasible_count = 0;
    let mut worst = 0.0f64;
    for (_, p) in &cases {
        for e in find_equilibria(p).unwrap() {
            if e.feasible {
                feasible_count += 1;
                let r = sup_norm(&oracle_drift(&e.point, p));
                worst = worst.max(r);
                ok &= r < 1e-9;
            }
        }
    }
    notes.push(format!("{feasible_count} feasible equilibria over 3 parameter sets, worst residual {worst:.1e}"));

    let eqs = find_equilibria(&P).unwrap();
    let reason = |b: Branch| {
        eqs.iter()
            .filter(|e| e.branch == b)
            .map(|e| (e.feasible, e.infeasibility_reason.clone().unwrap_or_default()))
            .collect::<Vec<_>>()
    };
    let ni = reason(Branch::NoImport);
    let it = reason(Branch::ImportThreshold);
    let baseline_ok = eqs.len() == 3
        && eqs[0].feasible
        && ni.len() == 1
        && !ni[0].0
        && ni[0].1.contains("no sign change")
        && it.len() == 1
        && !it[0].0
        && it[0].1.contains("negative discriminant");
    ok &= baseline_ok;
    notes.push(format!("baseline branches infeasible with scan/discriminant reasons: {baseline_ok}"));

    let h = 0.05;
    let tol = 0.5 * h * lipschitz_bound(&P, 10.0);
    let hits = grid_near_zeros(&P, h, 200, tol);
    let (boundary, interior) = interior_clusters(&hits);
    ok &= interior == 0;
    notes.push(format!(
        "grid (0,10]^4 step {h}: {} points with |f| <= L h/2 = {tol:.3}, {boundary} boundary cluster(s), {interior} interior",
        hits.len()
    ));
    (ok, notes.join("; "))
}

fn fmt_errs(t: &ErrorTable) -> String {
    t.rms_errors.iter().map(|v| format!("{v:.3e}")).collect::<Vec<_>>().join(", ")
}

fn criterion_6() -> (bool, String) {
    let noise = NoiseIntensities::zero();
    let mut ok = true;
    let mut notes = Vec::new();
    // No policy until just before the collapse of X1 and X2, then the
    // projection floor over the full horizon with the floor in the oracle too.
    for (positivity, t_end) in [(Positivity::None, 4.0), (Positivity::default(), 50.0)] {
        let floor = match positivity {
            Positivity::Projection { eps } => eps,
            _ => f64::NEG_INFINITY,
        };
        let cfg = |scheme| SimConfig {
            scheme,
            positivity,
            t_end,
            ..SimConfig::default()
        };
        let em = simulate(&cfg(Scheme::EulerMaruyama), &P, &noise).unwrap();
        let mil = simulate(&cfg(Scheme::Milstein), &P, &noise).unwrap();
        let bits = |t: &energy_sde::Trajectory| {
            t.states.iter().flat_map(|x| x.map(f64::to_bits)).collect::<Vec<_>>()
        };
        let identical = bits(&em) == bits(&mil);
        let dt = cfg(Scheme::EulerMaruyama).dt;
        let euler = |x: &State| -> State {
            let f = oracle_drift(x, &P);
            std::array::from_fn(|i| (x[i] + dt * f[i]).max(floor))
        };
        let mut y = em.states[0];
        let (mut local, mut global) = (0.0f64, 0.0f64);
        for k in 0..em.states.len() - 1 {
            let next = em.states[k + 1];
            let step = euler(&em.states[k]);
            local = local.max(sup_norm(&std::array::from_fn(|i| step[i] - next[i])));
            y = euler(&y);
            global = global.max(sup_norm(&std::array::from_fn(|i| y[i] - next[i])));
        }
        ok &= identical && local < 1e-12;
        notes.push(format!(
            "{} T={t_end}: EM==Milstein bitwise {identical}, explicit Euler per-step dev {local:.1e}, whole-path dev {global:.1e}",
            positivity.name()
        ));
    }
    (ok, notes.join("; "))
}

fn criterion_7() -> (bool, String) {
    let cfg = SimConfig::default();
    let s = simulate_ensemble(&cfg, &P, &SIGMA, 1000).unwrap();
    let floor = s.min.iter().flatten().fold(f64::INFINITY, |m, &v| m.min(v));
    let eps = match cfg.positivity {
        Positivity::Projection { eps } => eps,
        _ => unreachable!(),
    };
    (
        floor >= eps,
        format!(
            "1000 paths x {} steps: min state {floor:.3e} (eps {eps:.0e}), {} clamps applied",
            s.times.len() - 1,
            s.total_clamps
        ),
    )
}

fn criterion_8() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let x: State = std::array::from_fn(|_| rng.random_range(0.1..=10.0));
        let j = jacobian(&x, &P).unwrap();
        for c in 0..4 {
            let h = 1e-5 * x[c].max(1.0);
            let mut xp = x;
            let mut xm = x;
            xp[c] += h;
            xm[c] -= h;
            let (fp, fm) = (oracle_drift(&xp, &P), oracle_drift(&xm, &P));
            for r in 0..4 {
                let fd = (fp[r] - fm[r]) / (2.0 * h);
                // relative error with a unit floor so exact zeros compare absolutely
                let rel = (j[(r, c)] - fd).abs() / j[(r, c)].abs().max(1.0);
                worst = worst.max(rel);
            }
        }
    }
    (worst < 1e-6, format!("100 states in [0.1,10]^4, max relative entry error {worst:.2e}"))
}

fn criterion_9() -> (bool, String) {
    let spec = PersistenceSpec {
        c: [1.0; 4],
        eta: 1.0,
        kappa: 0.5,
    };
    // (eta - 0.5 sum c_i sigma_i^2) / kappa
    let expected = (1.0 - 0.5 * (0.01 + 0.01 + 0.0064 + 0.0144)) / 0.5;
    let value = match persistence_bound(&spec, &SIGMA).unwrap() {
        PersistenceBound::Bound { value } => value,
        other => panic!("unexpected {other:?}"),
    };
    let arith = (value - 1.9592).abs() <= 1e-12 && (value - expected).abs() <= 1e-15;
    let est = persistence_estimate(spec.c, &SimConfig::default(), &P, &SIGMA, 200).unwrap();
    let positive = est.component_averages.iter().all(|&v| v > 0.0);
    (
        arith && positive,
        format!(
            "bound {value:.15}; T=50 time averages over 200 paths {:?}",
            est.component_averages.map(|v| format!("{v:.4}"))
        ),
    )
}

fn criterion_10() -> (bool, String) {
    let (_, _, _, s) = normalized_index(0.8, 0.1, |p| Ok(2.5 * p)).unwrap();
    let probe = (s - 1.0).abs() <= 1e-12;
    let setup = SensitivitySetup::default();
    let table = sensitivity_sweep(&P, &SIGMA, &setup).unwrap();
    let ranking = table.ranking(Qoi::AvgDemand);
    let rank = table.rank_of(Param::A1, Qoi::AvgDemand);
    let top: Vec<String> = ranking.iter().take(3).map(|(p, s)| format!("{p}={s:.3}")).collect();
    (
        probe && rank.is_some_and(|r| r <= 2),
        format!(
            "linear probe S = {s}; |S_a1| rank {rank:?} of {} (T={}, {} paths); top {}",
            ranking.len(),
            setup.sim.t_end,
            setup.n_paths,
            top.join(", ")
        ),
    )
}

fn criterion_11() -> (bool, String) {
    // Horizon at the first import surge. Later the band is set by the timing of
    // boom-bust cycles and the -sigma^2/2 drift of ln X3 rather than the spread.
    let cfg = SimConfig {
        t_end: 5.0,
        ..SimConfig::default()
    };
    let sigmas = [0.02, 0.08, 0.3];
    let w = noise_band_widths(&P, &SIGMA, 2, &sigmas, &cfg, 300).unwrap();
    (
        w.windows(2).all(|p| p[1] >= p[0]),
        format!(
            "X3 band widths at T=5 over 300 paths at sigma3 {sigmas:?}: {:?}",
            w.iter().map(|v| format!("{v:.3e}")).collect::<Vec<_>>()
        ),
    )
}

fn criterion_12() -> (bool, String) {
    let bin = env!("CARGO_BIN_EXE_energy-sde");
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let mut outputs = Vec::new();
    for d in &dirs {
        for sub in [&["simulate"][..], &["ensemble", "--paths", "20", "--t-end", "5"][..]] {
            let status = Command::new(bin)
                .args(sub)
                .args(["--dt", "0.01", "--seed", "7", "--out"])
                .arg(d.path())
                .env_remove("ENERGY_SDE_SEED")
                .output()
                .unwrap();
            assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
        }
        let mut files = Vec::new();
        for f in ["trajectory.csv", "ensemble.csv"] {
            files.push(std::fs::read(d.path().join(f)).unwrap());
        }
        outputs.push(files);
    }
    let same = outputs[0] == outputs[1];
    // Thread count must not change ensemble results.
    let cfg = SimConfig {
        t_end: 2.0,
        ..SimConfig::default()
    };
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
    let a = one.install(|| simulate_ensemble(&cfg, &P, &SIGMA, 150).unwrap());
    let b = four.install(|| simulate_ensemble(&cfg, &P, &SIGMA, 150).unwrap());
    let threads_same = a == b;
    (
        same && threads_same,
        format!(
            "simulate --seed 7 (T=50) and ensemble CSVs byte-identical across runs: {same}; 1 vs 4 threads identical: {threads_same}"
        ),
    )
}

fn main() {
    // Respect `cargo test -- --list` style invocations from the harness.
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let mut outcomes = vec![
        run(1, "trivial-equilibrium spectrum", 1, criterion_1),
        run(2, "equilibrium residuals and grid scan", 30, criterion_2),
    ];

    let setup = ErrorSetup::default_for(&P).unwrap();
    let study = |scheme| convergence_study(scheme, &P, &SIGMA, &setup, &DEFAULT_DT_LIST, None).unwrap();
    let mut em = None;
    outcomes.push(run(3, "EM strong rate", 120, || {
        let t = study(Scheme::EulerMaruyama);
        let rate = t.fitted_rate.unwrap();
        let line = format!(
            "T={}, {} paths, x0 {:?}, dt {:?}, RMS errors [{}], fitted slope {rate:.3}",
            setup.t_end,
            setup.n_paths,
            setup.x0,
            t.dt_values,
            fmt_errs(&t)
        );
        em = Some(t);
        ((0.35..=0.75).contains(&rate), line)
    }));
    let em = em.unwrap();
    outcomes.push(run(4, "Milstein strong rate", 120, || {
        let mil = study(Scheme::Milstein);
        let rate = mil.fitted_rate.unwrap();
        let below = mil.strong_errors.iter().zip(&em.strong_errors).all(|(m, e)| m < e);
        (
            (0.8..=1.2).contains(&rate) && below,
            format!("RMS errors [{}], fitted slope {rate:.3}, below EM at every dt: {below}", fmt_errs(&mil)),
        )
    }));
    outcomes.push(run(5, "EM error magnitude", 120, || {
        let i = em.dt_values.iter().position(|&d| d == 0.01).unwrap();
        let v = em.rms_errors[i];
        let ratio = v / 1.68e-2;
        (
            (0.1..=10.0).contains(&ratio),
            format!("RMS error at dt=0.01 is {v:.3e}, ratio to 1.68e-2 = {ratio:.3} (MSE {:.3e})", em.strong_errors[i]),
        )
    }));
    outcomes.push(run(6, "noise-free reduction", 1, criterion_6));
    outcomes.push(run(7, "positivity under projection", 120, criterion_7));
    outcomes.push(run(8, "Jacobian vs finite differences", 1, criterion_8));
    outcomes.push(run(9, "persistence arithmetic", 60, criterion_9));
    outcomes.push(run(10, "sensitivity ranking", 300, criterion_10));
    outcomes.push(run(11, "noise-band monotonicity", 120, criterion_11));
    outcomes.push(run(12, "determinism", 120, criterion_12));

    let unexpected: Vec<u32> = outcomes
        .iter()
        .filter(|o| !o.pass && !KNOWN_FAILURES.contains(&o.id))
        .map(|o| o.id)
        .collect();
    let newly_passing: Vec<u32> = outcomes
        .iter()
        .filter(|o| o.pass && KNOWN_FAILURES.contains(&o.id))
        .map(|o| o.id)
        .collect();
    let passed = outcomes.iter().filter(|o| o.pass).count();
    println!("acceptance: {passed}/{} PASS", outcomes.len());
    if !newly_passing.is_empty() {
        println!("acceptance: known failures now passing {newly_passing:?}; update KNOWN_FAILURES");
    }
    if !unexpected.is_empty() || !newly_passing.is_empty() {
        println!("acceptance: unexpected results {unexpected:?}");
        std::process::exit(1);
    }
}
