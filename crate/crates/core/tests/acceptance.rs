mod common;

use std::time::{Duration, Instant};

use ndarray::{array, Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{loglog_slope, random_strong_digraph, FrozenOracle};
use stpp::harness::{
    run_experiment, theoretical_stepsize_convex, theoretical_stepsize_nonconvex, transient_bound,
    ExperimentConfig, Regime, TreeSummary,
};
use stpp::mixing::{
    build_pull_matrix, build_push_matrix, indicator_power, int_matmul, metropolis_weights,
    spectral_norm_defect, MixingKind, MixingMatrix, TreeMatrix,
};
use stpp::optimizers::{
    dsgd_step, dsgt_step, init_state, pushdiging_step, sgp_step, stpp_init, Algorithm, Optimizer,
    SwarmState,
};
use stpp::oracles::{
    gen_logistic, gen_quadratic, stochastic_gradient, LogisticParams, Oracle, QuadraticParams,
    QuadraticProblem,
};
use stpp::topology::{
    center_root, gen_directed_ring, gen_grid_n, gen_ring, gen_static_exponential, tree_stats,
    DirectedGraph, SpanningTreePair, TreeStats,
};

const CORPUS_SIZE: usize = 200;
const CORPUS_MAX_N: usize = 32;
const CORPUS_SEED: u64 = 2024;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

struct TreeCase {
    n: usize,
    r: TreeMatrix,
    c: TreeMatrix,
    trees: SpanningTreePair,
    pull: TreeStats,
    push: TreeStats,
}

fn corpus() -> Vec<TreeCase> {
    let mut rng = ChaCha8Rng::seed_from_u64(CORPUS_SEED);
    (0..CORPUS_SIZE)
        .map(|i| {
            let n = 2 + i % (CORPUS_MAX_N - 1);
            let density = [0.0, 0.05, 0.15, 0.4][i % 4];
            let g = random_strong_digraph(&mut rng, n, density);
            let trees = SpanningTreePair::extract(&g, 1).unwrap();
            TreeCase {
                n,
                r: build_pull_matrix(&trees.pull).unwrap(),
                c: build_push_matrix(&trees.push).unwrap(),
                pull: tree_stats(&trees.pull),
                push: tree_stats(&trees.push),
                trees,
            }
        })
        .collect()
}

fn matrix_exactness() -> Outcome {
    let g = gen_directed_ring(6).unwrap();
    let trees = SpanningTreePair::extract(&g, 1).unwrap();
    let r = build_pull_matrix(&trees.pull).unwrap();
    let c = build_push_matrix(&trees.push).unwrap();
    let expected_r = array![
        [1, 0, 0, 0, 0, 0],
        [1, 0, 0, 0, 0, 0],
        [0, 1, 0, 0, 0, 0],
        [0, 0, 1, 0, 0, 0],
        [0, 0, 0, 1, 0, 0],
        [0, 0, 0, 0, 1, 0],
    ];
    let expected_c = array![
        [1, 0, 0, 0, 0, 1],
        [0, 0, 0, 0, 0, 0],
        [0, 1, 0, 0, 0, 0],
        [0, 0, 1, 0, 0, 0],
        [0, 0, 0, 1, 0, 0],
        [0, 0, 0, 0, 1, 0],
    ];
    let r_ok = r.entries() == expected_r;
    let c_ok = c.entries() == expected_c;
    outcome(r_ok && c_ok, format!("R exact: {r_ok}, C exact: {c_ok}"))
}

fn indicator_equivalence(cases: &[TreeCase]) -> Outcome {
    let mut checked = 0usize;
    let mut mismatches = 0usize;
    for case in cases {
        let r = case.r.entries().clone();
        let c = case.c.entries().clone();
        let (mut rk, mut ck) = (r.clone(), c.clone());
        for k in 1..=case.n {
            if k > 1 {
                rk = int_matmul(&rk, &r);
                ck = int_matmul(&ck, &c);
            }
            if rk != indicator_power(&case.trees.pull, k).predicted_power() {
                mismatches += 1;
            }
            if ck != indicator_power(&case.trees.push, k).predicted_power() {
                mismatches += 1;
            }
            checked += 2;
        }
    }
    outcome(
        mismatches == 0,
        format!("{checked} powers compared, {mismatches} mismatches"),
    )
}

fn collapse_and_defect(cases: &[TreeCase]) -> Outcome {
    let mut collapse_failures = 0usize;
    let mut worst_slack = f64::INFINITY;
    for case in cases {
        let n = case.n;
        let broadcast = Array2::from_shape_fn((n, n), |(_, j)| i64::from(j == 0));
        let converge = Array2::from_shape_fn((n, n), |(i, _)| i64::from(i == 0));
        if case.r.power(case.pull.d) != broadcast || case.c.power(case.push.d) != converge {
            collapse_failures += 1;
        }
        for (m, stats) in [(&case.r, &case.pull), (&case.c, &case.push)] {
            for k in 0..stats.d {
                let defect = spectral_norm_defect(m, k);
                let bound = 2.0 * (n - stats.counts[k]) as f64 + 1e-9;
                worst_slack = worst_slack.min(bound - defect * defect);
            }
        }
    }
    outcome(
        collapse_failures == 0 && worst_slack >= 0.0,
        format!("collapse failures {collapse_failures}, min bound slack {worst_slack:.3e}"),
    )
}

fn tree_statistics() -> Outcome {
    let g = gen_directed_ring(6).unwrap();
    let trees = SpanningTreePair::extract(&g, 1).unwrap();
    let pull = tree_stats(&trees.pull);
    let push = tree_stats(&trees.push);
    // The chain puts exactly one node at each depth 0..=5.
    let depths = [0usize, 1, 2, 3, 4, 5];
    let n = depths.len();
    let d = *depths.iter().max().unwrap();
    let hand: f64 = (0..d)
        .map(|k| (n - depths.iter().filter(|&&x| x <= k).count()) as f64)
        .sum::<f64>()
        / n as f64;
    let pass = pull.d == 5 && push.d == 5 && pull.avg == hand && push.avg == hand && hand == 2.5;
    outcome(
        pass,
        format!(
            "d_R={} d_C={} r_avg={} c_avg={} hand={hand}",
            pull.d, push.d, pull.avg, push.avg
        ),
    )
}

/// Rounds to a multiple of 2^-20 so tree sums are exact in f64.
fn dyadic(m: &Array2<f64>) -> Array2<f64> {
    let scale = (1u64 << 20) as f64;
    m.mapv(|v| (v * scale).round() / scale)
}

fn conservation_and_propagation() -> Outcome {
    let cfg = ExperimentConfig::logistic_reference(Algorithm::Stpp);
    let n = cfg.topology.n;
    let problem = cfg.problem.build(n, cfg.dataset_seed()).unwrap();
    let g = cfg.topology.build().unwrap();
    let trees = SpanningTreePair::extract(&g, 1).unwrap();
    let r = build_pull_matrix(&trees.pull).unwrap();
    let c = build_push_matrix(&trees.push).unwrap();
    let (d_r, d_c) = (trees.pull.diameter(), trees.push.diameter());
    let opt = Optimizer::stpp(r, c).unwrap();

    let mut state = stpp_init(
        &problem,
        Array1::zeros(problem.dim()).view(),
        cfg.repetition_seed(0),
    )
    .unwrap();
    let mut worst = 0.0f64;
    for t in 0..1000u64 {
        opt.step(
            &mut state,
            cfg.schedule.stepsize_at(cfg.effective_gamma(), t),
            &problem,
        )
        .unwrap();
        let ysum = state.y.as_ref().unwrap().sum_axis(ndarray::Axis(0));
        let gsum = state.g.sum_axis(ndarray::Axis(0));
        let err = (&ysum - &gsum).iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let scale = gsum.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        worst = worst.max(err / scale);
    }

    let p = problem.dim();
    let g0 = dyadic(&stpp::optimizers::sample_gradients(
        &problem,
        &Array2::zeros((n, p)),
        7,
        0,
    ));
    let frozen = FrozenOracle { grads: g0.clone() };
    let mut absorb = stpp_init(&frozen, Array1::zeros(p).view(), 0).unwrap();
    for _ in 0..d_c {
        opt.step(&mut absorb, 0.0, &frozen).unwrap();
    }
    let total = g0.sum_axis(ndarray::Axis(0));
    let y = absorb.y.as_ref().unwrap();
    let absorbed = y.row(0) == total
        && y.rows()
            .into_iter()
            .skip(1)
            .all(|row| row.iter().all(|&v| v == 0.0));

    let zero = FrozenOracle {
        grads: Array2::zeros((n, p)),
    };
    let x0 = Array2::from_shape_fn((n, p), |(i, j)| (i * p + j) as f64);
    let mut spread = SwarmState {
        x: x0.clone(),
        y: Some(Array2::zeros((n, p))),
        g: Array2::zeros((n, p)),
        push_sum: None,
        t: 0,
        seed: 0,
        root: 0,
    };
    for _ in 0..d_r {
        opt.step(&mut spread, 0.3, &zero).unwrap();
    }
    let propagated = spread.x.rows().into_iter().all(|row| row == x0.row(0));

    outcome(
        worst <= 1e-9 && absorbed && propagated,
        format!("max relative mass violation {worst:.3e}, root absorption {absorbed}, pull propagation {propagated}"),
    )
}

fn hand_trace() -> Outcome {
    let q = QuadraticProblem::new(
        vec![array![1.0], array![1.0]],
        vec![array![0.0], array![2.0]],
        0.0,
    )
    .unwrap();
    let opt = Optimizer::for_graph(Algorithm::Stpp, &gen_directed_ring(2).unwrap(), 1).unwrap();
    let mut s = stpp_init(&q, array![0.0].view(), 0).unwrap();
    opt.step(&mut s, 0.1, &q).unwrap();
    let x1 = s.x.clone();
    let y1 = s.y.clone().unwrap();
    opt.step(&mut s, 0.1, &q).unwrap();
    let x2 = s.x.clone();
    let pass =
        x1 == array![[0.0], [0.0]] && y1 == array![[-2.0], [0.0]] && x2 == array![[0.2], [0.2]];
    outcome(
        pass,
        format!(
            "X1={:?} Y1={:?} X2={:?}",
            x1.column(0).to_vec(),
            y1.column(0).to_vec(),
            x2.column(0).to_vec()
        ),
    )
}

fn root_gap(state: &SwarmState, xs: &Array1<f64>) -> f64 {
    let d = &state.x.row(state.root) - xs;
    d.dot(&d)
}

fn strongly_convex_convergence() -> Outcome {
    let (n, p, mu, l) = (8usize, 10usize, 1.0, 10.0);
    let kappa = l / mu;
    let g = gen_directed_ring(n).unwrap();
    let trees = SpanningTreePair::extract(&g, 1).unwrap();
    let summary = TreeSummary::from_trees(&trees);
    let opt = Optimizer::for_graph(Algorithm::Stpp, &g, 1).unwrap();
    let params = QuadraticParams {
        n,
        p,
        mu,
        l,
        heterogeneity: 1.0,
        sigma: 0.0,
    };
    let problem = gen_quadratic(params, 11).unwrap();
    let xs = problem.minimizer().unwrap().clone();

    let horizon = (200.0 * kappa * (summary.d_r + summary.d_c) as f64) as u64;
    let gamma_det = theoretical_stepsize_convex(&summary, l, mu, horizon)
        .unwrap()
        .branches[1];
    let mut s = stpp_init(&problem, Array1::zeros(p).view(), 0).unwrap();
    let init_gap = root_gap(&s, &xs);
    for _ in 0..horizon {
        opt.step(&mut s, gamma_det, &problem).unwrap();
    }
    let det_gap = root_gap(&s, &xs);

    let long = 100_000u64;
    let reps = 3u64;
    let noisy = problem.clone().with_sigma(1.0);
    let gamma_full = theoretical_stepsize_convex(&summary, l, mu, long)
        .unwrap()
        .value;
    let mut noisy_gap = 0.0;
    for rep in 0..reps {
        let mut s = stpp_init(&noisy, Array1::zeros(p).view(), 100 + rep).unwrap();
        for _ in 0..long {
            opt.step(&mut s, gamma_full, &noisy).unwrap();
        }
        noisy_gap += root_gap(&s, &xs) / reps as f64;
    }
    let pass = det_gap <= 1e-10 && noisy_gap <= init_gap / 1e3;
    outcome(
        pass,
        format!(
            "sigma=0: gamma={gamma_det:.3e}, T={horizon}, gap {init_gap:.3e} -> {det_gap:.3e} (need <= 1e-10); \
             sigma=1: gamma={gamma_full:.3e}, T={long}, mean gap {noisy_gap:.3e} (need <= {:.3e})",
            init_gap / 1e3
        ),
    )
}

fn linear_speedup() -> Outcome {
    let iterations = 20_000u64;
    let window = iterations / 10;
    let seeds = 5u64;
    let mut finals = Vec::new();
    for n in [4usize, 16] {
        let g = gen_static_exponential(n).unwrap();
        let trees = SpanningTreePair::extract(&g, 1).unwrap();
        let summary = TreeSummary::from_trees(&trees);
        let opt = Optimizer::for_graph(Algorithm::Stpp, &g, 1).unwrap();
        let params = QuadraticParams {
            n,
            p: 20,
            mu: 1.0,
            l: 1.0,
            heterogeneity: 0.0,
            sigma: 1.0,
        };
        let problem = gen_quadratic(params, 5).unwrap();
        let x0 = Array1::zeros(problem.dim());
        let delta_f = problem.value(x0.view()) - problem.optimal_value().unwrap();
        let gamma = theoretical_stepsize_nonconvex(
            &summary,
            problem.smoothness(),
            1.0,
            delta_f,
            iterations,
        )
        .unwrap()
        .branches[1];
        let mut acc = 0.0;
        for seed in 0..seeds {
            let mut s = stpp_init(&problem, x0.view(), seed).unwrap();
            for t in 0..iterations {
                opt.step(&mut s, gamma, &problem).unwrap();
                if t + 1 > iterations - window {
                    let gr = problem.gradient(s.x.row(s.root));
                    acc += gr.dot(&gr);
                }
            }
        }
        finals.push(acc / (seeds * window) as f64);
    }
    let ratio = finals[1] / finals[0];
    outcome(
        ratio <= 0.6,
        format!(
            "tail ||grad||^2: n=4 {:.3e}, n=16 {:.3e}, ratio {ratio:.3} (need <= 0.6)",
            finals[0], finals[1]
        ),
    )
}

type Family = (
    &'static str,
    fn(usize) -> stpp::Result<DirectedGraph>,
    Option<(f64, f64)>,
);

fn transient_slopes() -> Outcome {
    let ns: Vec<usize> = (4..=10).map(|e| 1usize << e).collect();
    let xs: Vec<f64> = ns.iter().map(|&n| n as f64).collect();
    let families: [Family; 4] = [
        ("di-ring", gen_directed_ring, Some((7.0, 3.0))),
        ("ring", gen_ring, Some((7.0, 3.0))),
        ("grid", gen_grid_n, Some((4.0, 1.5))),
        ("static-exp", gen_static_exponential, None),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, gen, expected) in families {
        let mut nc = Vec::new();
        let mut sc = Vec::new();
        for &n in &ns {
            let g = gen(n).unwrap();
            let trees = SpanningTreePair::extract(&g, center_root(&g).unwrap()).unwrap();
            let (pull, push) = (tree_stats(&trees.pull), tree_stats(&trees.push));
            nc.push(transient_bound(&pull, &push, Regime::Nonconvex));
            sc.push(transient_bound(&pull, &push, Regime::StronglyConvex));
        }
        let (a, b) = (loglog_slope(&xs, &nc), loglog_slope(&xs, &sc));
        match expected {
            Some((ea, eb)) => pass &= (a - ea).abs() <= 0.15 && (b - eb).abs() <= 0.15,
            None => pass &= a <= 1.3,
        }
        parts.push(format!("{name} {a:.2}/{b:.2}"));
    }
    outcome(
        pass,
        format!("nonconvex/strongly-convex slopes: {}", parts.join(", ")),
    )
}

fn logistic_ordering() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for seed in 0..3u64 {
        let final_norm = |alg| {
            let mut cfg = ExperimentConfig::logistic_reference(alg);
            cfg.seed = seed;
            run_experiment(&cfg)
                .unwrap()
                .final_row()
                .metrics
                .grad_norm_sq_root
        };
        let (stpp, dsgd, sgp) = (
            final_norm(Algorithm::Stpp),
            final_norm(Algorithm::Dsgd),
            final_norm(Algorithm::Sgp),
        );
        pass &= stpp <= 1.5 * dsgd && stpp <= 1.5 * sgp;
        parts.push(format!(
            "seed {seed}: stpp {stpp:.3e} dsgd {dsgd:.3e} sgp {sgp:.3e}"
        ));
    }
    outcome(pass, parts.join("; "))
}

fn baseline_reductions() -> Outcome {
    let single = LogisticParams {
        n: 1,
        ..LogisticParams::reference()
    };
    let problem = gen_logistic(single, 3).unwrap();
    let g1 = DirectedGraph::from_edges(1, []).unwrap();
    let x0 = Array1::<f64>::zeros(problem.dim());
    let (gamma, seed, steps) = (0.05, 9u64, 50u64);

    let mut sgd = vec![x0.clone()];
    let mut x = x0.clone();
    for t in 0..steps {
        let g = stochastic_gradient(&problem, 0, x.view(), seed, t).value;
        x = &x - &(gamma * &g);
        sgd.push(x.clone());
    }
    let mut identical = true;
    for alg in Algorithm::ALL {
        let opt = Optimizer::for_graph(alg, &g1, 1).unwrap();
        let mut s = opt.init(&problem, x0.view(), seed, 0).unwrap();
        for expected in &sgd[1..] {
            opt.step(&mut s, gamma, &problem).unwrap();
            identical &= s.x.row(0) == *expected;
        }
    }

    let n = 8;
    let ring = gen_ring(n).unwrap();
    let w = metropolis_weights(&ring).unwrap();
    let a = MixingMatrix::new(w.weights().clone(), MixingKind::Doubly).unwrap();
    let q = gen_quadratic(
        QuadraticParams {
            n,
            p: 6,
            mu: 0.5,
            l: 2.0,
            heterogeneity: 1.0,
            sigma: 0.5,
        },
        4,
    )
    .unwrap();
    let x0 = Array1::from_shape_fn(6, |j| j as f64 - 2.0);
    let start = |alg| init_state(alg, &q, x0.view(), 21, 0).unwrap();
    let (mut dsgd, mut sgp) = (start(Algorithm::Dsgd), start(Algorithm::Sgp));
    let (mut dsgt, mut pd) = (start(Algorithm::Dsgt), start(Algorithm::PushDiging));
    let mut worst = 0.0f64;
    let max_diff =
        |a: &Array2<f64>, b: &Array2<f64>| (a - b).iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for _ in 0..100 {
        dsgd_step(&mut dsgd, &w, 0.05, &q).unwrap();
        sgp_step(&mut sgp, &a, 0.05, &q).unwrap();
        dsgt_step(&mut dsgt, &w, 0.05, &q).unwrap();
        pushdiging_step(&mut pd, &a, 0.05, &q).unwrap();
        worst = worst
            .max(max_diff(&dsgd.x, &sgp.x))
            .max(max_diff(&dsgt.x, &pd.x));
    }
    outcome(
        identical && worst <= 1e-12,
        format!(
            "n=1 bit-identical to SGD: {identical}; doubly stochastic max deviation {worst:.3e}"
        ),
    )
}

fn main() {
    let cases = corpus();
    type Check<'a> = Box<dyn Fn() -> Outcome + 'a>;
    let criteria: Vec<(&str, Duration, Check)> = vec![
        (
            "tree matrices reproduce the directed-ring example",
            Duration::from_secs(1),
            Box::new(matrix_exactness),
        ),
        (
            "matrix powers equal distance indicators",
            Duration::from_secs(30),
            Box::new(|| indicator_equivalence(&cases)),
        ),
        (
            "diameter collapse and defect bound",
            Duration::from_secs(30),
            Box::new(|| collapse_and_defect(&cases)),
        ),
        (
            "tree statistics of the six-node chain",
            Duration::from_secs(1),
            Box::new(tree_statistics),
        ),
        (
            "mass conservation, root absorption, pull propagation",
            Duration::from_secs(10),
            Box::new(conservation_and_propagation),
        ),
        (
            "two-agent hand trace",
            Duration::from_secs(1),
            Box::new(hand_trace),
        ),
        (
            "strongly convex convergence at the theoretical stepsize",
            Duration::from_secs(120),
            Box::new(strongly_convex_convergence),
        ),
        (
            "linear speedup on static exponential graphs",
            Duration::from_secs(180),
            Box::new(linear_speedup),
        ),
        (
            "transient-iteration scaling exponents",
            Duration::from_secs(5),
            Box::new(transient_slopes),
        ),
        (
            "logistic ordering against DSGD and SGP",
            Duration::from_secs(300),
            Box::new(logistic_ordering),
        ),
        (
            "baseline reductions",
            Duration::from_secs(10),
            Box::new(baseline_reductions),
        ),
    ];
    let mut failed = Vec::new();
    for (i, (name, budget, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = check();
        let elapsed = start.elapsed();
        let pass = result.pass && elapsed <= *budget;
        println!(
            "criterion {:>2} {} | {name} | {} | {:.2}s (budget {}s)",
            i + 1,
            if pass { "PASS" } else { "FAIL" },
            result.detail,
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
        if !pass {
            failed.push(i + 1);
        }
    }
    println!(
        "acceptance: {} passed, {} failed {:?}",
        criteria.len() - failed.len(),
        failed.len(),
        failed
    );
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
