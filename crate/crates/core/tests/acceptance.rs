// Acceptance criteria 1-9. Runs as a plain binary so every criterion prints
// its own PASS/FAIL line; exits non-zero if any criterion fails.

mod common;

use std::process::ExitCode;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use algossip::analysis::{
    bound_thm1, bound_thm2, check_bounds, hindsight_global, hindsight_time, knows_mu, BoundFormula,
    FlowNetwork,
};
use algossip::engine::{self, ExchangeTrace, RunConfig, RunResult, Transmission};
use algossip::field::{decode, CoefficientVector, FieldSpec, Payload};
use algossip::graph::Topology;
use algossip::par::{self, Execution};
use algossip::protocols::{AgState, PacketSummary, Protocol, SourceAssignment};

use common::*;

const KS: [usize; 3] = [1, 4, 16];
const TRIALS: u64 = 50;
const C: u64 = 16;

type Criterion = fn() -> Outcome;

struct Outcome {
    pass: bool,
    detail: String,
}

fn placements(g: &Topology, k: usize) -> [(&'static str, SourceAssignment); 2] {
    [
        (
            "eccentric",
            SourceAssignment::single(g.most_eccentric_node(), k),
        ),
        ("spread", SourceAssignment::spread(g.n(), k)),
    ]
}

fn run_trials(
    protocol: Protocol,
    g: &Arc<Topology>,
    sources: &SourceAssignment,
    trials: u64,
) -> Vec<RunResult> {
    let configs: Vec<RunConfig> = (0..trials)
        .map(|s| RunConfig::new(protocol, g.clone(), sources.clone()).with_seed(s))
        .collect();
    par::map(Execution::best_available(), &configs, |c| {
        engine::run(c).unwrap()
    })
}

/// Per-cell whp check: at most one of `TRIALS` trials may exceed `bound`.
fn whp_campaign(
    protocol: Protocol,
    graphs: &[&str],
    bound: impl Fn(&Stats, usize) -> u64,
    formula: Option<BoundFormula>,
) -> Outcome {
    let mut cells = 0;
    let mut failures = Vec::new();
    let mut worst = 0.0f64;
    let mut runs = 0;
    for spec in graphs {
        let g = graph(spec);
        let st = stats(&g);
        for k in KS {
            for (label, sources) in placements(&g, k) {
                let results = run_trials(protocol, &g, &sources, TRIALS);
                let b = bound(&st, k);
                let report = check_bounds(&results, &g, spec, k, protocol, formula, C).unwrap();
                assert_eq!(
                    report.bound, b,
                    "{spec} k={k}: library bound disagrees with oracle"
                );
                let over = results
                    .iter()
                    .filter(|r| r.completion_round.is_none_or(|t| t > b))
                    .count();
                assert_eq!(over, report.violations);
                for r in &results {
                    assert!(r.payloads_verified || r.completion_round.is_none());
                    if let Some(t) = r.completion_round {
                        worst = worst.max(t as f64 / b as f64);
                    }
                }
                runs += results.len();
                cells += 1;
                if over > 1 {
                    failures.push(format!("{spec}/k={k}/{label}: {over} over {b}"));
                }
            }
        }
    }
    Outcome {
        pass: failures.is_empty(),
        detail: format!(
            "{cells} cells, {runs} runs, worst observed/bound {worst:.3}{}",
            if failures.is_empty() {
                String::new()
            } else {
                format!("; failing: {}", failures.join(", "))
            }
        ),
    }
}

fn criterion_1() -> Outcome {
    let mut runs = 0;
    let mut failures = Vec::new();
    let mut worst = 0.0f64;
    for spec in SUITE {
        let g = graph(spec);
        let st = stats(&g);
        for k in KS {
            for (label, sources) in placements(&g, k) {
                let r = &run_trials(Protocol::Rr, &g, &sources, 1)[0];
                let b = oracle_bound_rr(&st, k);
                let report =
                    check_bounds(std::slice::from_ref(r), &g, spec, k, Protocol::Rr, None, C)
                        .unwrap();
                assert_eq!(report.bound, b);
                assert_eq!(report.formula, BoundFormula::Thm3);
                runs += 1;
                match r.completion_round {
                    Some(t) if t <= b && r.payloads_verified => {
                        worst = worst.max(t as f64 / b as f64)
                    }
                    other => failures.push(format!("{spec}/k={k}/{label}: {other:?} > {b}")),
                }
            }
        }
    }
    Outcome {
        pass: failures.is_empty(),
        detail: format!(
            "{runs} runs, zero tolerance, worst observed/bound {worst:.3} {}",
            failures.join(", ")
        ),
    }
}

fn criterion_2() -> Outcome {
    whp_campaign(Protocol::Ag, SUITE, |s, k| oracle_bound_thm1(s, k, C), None)
}

fn criterion_3() -> Outcome {
    let mut o = whp_campaign(
        Protocol::Ag,
        &["star:50", "barbell:20,20"],
        |s, k| oracle_bound_thm2(s, k, C),
        Some(BoundFormula::Thm2),
    );
    let path = graph("path:50");
    let st = stats(&path);
    let mut arith = Vec::new();
    for k in KS {
        let (t1, t2) = (oracle_bound_thm1(&st, k, C), oracle_bound_thm2(&st, k, C));
        assert_eq!((t1, t2), (bound_thm1(&path, k, C), bound_thm2(&path, k, C)));
        o.pass &= t2 <= t1;
        arith.push(format!("k={k}: thm2 {t2} <= thm1 {t1}"));
    }
    o.detail = format!("{}; path(50) {}", o.detail, arith.join(", "));
    o
}

fn criterion_4() -> Outcome {
    let g = graph("cycle:8");
    let k = 2;
    let sources = SourceAssignment::spread(g.n(), k);
    let configs: Vec<RunConfig> = (0..200)
        .map(|s| {
            RunConfig::new(Protocol::Ag, g.clone(), sources.clone())
                .with_field(FieldSpec::GF256)
                .with_seed(s)
                .with_trace(true)
        })
        .collect();
    let pairs: Vec<(Option<u64>, Option<u64>)> =
        par::map(Execution::best_available(), &configs, |c| {
            let r = engine::run(c).unwrap();
            let trace = r.trace.as_ref().unwrap();
            let h = hindsight_global(trace, &c.sources, g.n(), Execution::Sequential);
            (r.completion_round, h)
        });
    let equal = pairs.iter().filter(|(a, b)| a.is_some() && a == b).count();
    let never_later = pairs.iter().all(|&(a, b)| match (a, b) {
        (Some(a), Some(b)) => b <= a,
        (None, _) => true,
        (Some(_), None) => false,
    });
    // information moves at most one hop per round
    let ecc = apsp(g.n(), &g.edges().collect::<Vec<_>>());
    let far = (0..g.n())
        .map(|v| sources.origins().iter().map(|&o| ecc[o][v]).max().unwrap())
        .max()
        .unwrap() as u64;
    let hop_ok = pairs.iter().all(|&(_, h)| h.is_none_or(|h| h >= far));
    let fraction = equal as f64 / pairs.len() as f64;
    let floor = 1.0 - 8.0 / 256.0 - 0.05;
    Outcome {
        pass: fraction >= floor && never_later && hop_ok,
        detail: format!(
            "equal in {equal}/200 = {fraction:.3} (floor {floor:.3}); hindsight <= gossip always: {never_later}; hindsight >= farthest-source distance {far}: {hop_ok}"
        ),
    }
}

fn criterion_5() -> Outcome {
    let field = FieldSpec::GF2;
    let mut sets = 0u64;
    let mut mismatches = 0u64;
    for k in 1..=4usize {
        let vectors: Vec<u32> = (1..1u32 << k).collect();
        let to_cv = |x: u32| CoefficientVector((0..k).map(|i| ((x >> i) & 1) as u16).collect());
        for mask in 0u64..(1 << vectors.len()) {
            let set: Vec<u32> = (0..vectors.len())
                .filter(|&i| (mask >> i) & 1 == 1)
                .map(|i| vectors[i])
                .collect();
            let rows: Vec<Vec<u32>> = set
                .iter()
                .map(|&x| (0..k).map(|i| (x >> i) & 1).collect())
                .collect();
            let full = oracle_rank(&rows, 1) == k;
            let mut state = AgState::new(0, vec![], field, k, 2, std::iter::empty());
            for &x in &set {
                state.on_receive(&to_cv(x), &Payload(vec![0, 0]));
            }
            let mut all_known = true;
            for mu in 1..1u32 << k {
                let oracle = set.iter().any(|&s| (s & mu).count_ones() % 2 == 1);
                let lib = knows_mu(&state, &to_cv(mu)).unwrap();
                if oracle != lib {
                    mismatches += 1;
                }
                all_known &= oracle;
            }
            if full != all_known || (state.rank() == k) != full {
                mismatches += 1;
            }
            sets += 1;
        }
    }
    Outcome {
        pass: mismatches == 0,
        detail: format!("{sets} coefficient sets over GF(2), k <= 4; {mismatches} mismatches"),
    }
}

fn criterion_6() -> Outcome {
    let mut runs = 0;
    let mut failures = Vec::new();
    let mut worst = 0.0f64;
    for spec in SUITE {
        let g = graph(spec);
        for k in KS {
            for (label, sources) in placements(&g, k) {
                for r in run_trials(Protocol::Tree, &g, &sources, 10) {
                    runs += 1;
                    let tree = r.tree.as_ref().unwrap();
                    let Some(d_prime) = spanning_tree_diameter(&g, &tree.parents) else {
                        failures.push(format!(
                            "{spec}/k={k}/{label}/seed {}: parents not a spanning tree",
                            r.seed
                        ));
                        continue;
                    };
                    assert_eq!(tree.tree_diameter, Some(d_prime));
                    let b = 2 * (k as u64 + d_prime as u64) + 2;
                    match tree.forwarding_rounds {
                        Some(f) if f <= b && r.payloads_verified => {
                            worst = worst.max(f as f64 / b as f64)
                        }
                        other => failures.push(format!(
                            "{spec}/k={k}/{label}/seed {}: {other:?} > {b}",
                            r.seed
                        )),
                    }
                }
            }
        }
    }
    Outcome {
        pass: failures.is_empty(),
        detail: format!(
            "{runs} runs, worst forwarding/bound {worst:.3} {}",
            failures.join(", ")
        ),
    }
}

/// Diameter of the parent forest if it is a spanning tree of `g`.
fn spanning_tree_diameter(g: &Topology, parents: &[Option<usize>]) -> Option<usize> {
    let n = g.n();
    if parents.len() != n || parents.iter().filter(|p| p.is_none()).count() != 1 {
        return None;
    }
    let mut edges = Vec::new();
    for (v, p) in parents.iter().enumerate() {
        if let Some(p) = *p {
            if !g.neighbors(v).contains(&p) {
                return None;
            }
            edges.push((v, p));
        }
    }
    let d = apsp(n, &edges);
    let diam = d.iter().flatten().copied().max().unwrap();
    (diam < n).then_some(diam)
}

fn criterion_7() -> Outcome {
    whp_campaign(
        Protocol::Pug,
        SUITE,
        |s, k| oracle_bound_thm2(s, k, C),
        None,
    )
}

fn criterion_8() -> Outcome {
    // max-flow vs. min-cut over every arc subset (<= 10 arcs) of the complete
    // digraph on 4 nodes; capacities enumerated exhaustively in {1,2} up to 6
    // arcs, and drawn from 1..=3 beyond that
    let pairs: Vec<(usize, usize)> = (0..4)
        .flat_map(|u| (0..4).filter(move |&v| v != u).map(move |v| (u, v)))
        .collect();
    let mut networks = 0u64;
    let mut flow_bad = 0u64;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for mask in 0u32..(1 << pairs.len()) {
        let chosen: Vec<(usize, usize)> = (0..pairs.len())
            .filter(|&i| (mask >> i) & 1 == 1)
            .map(|i| pairs[i])
            .collect();
        if chosen.len() > 10 {
            continue;
        }
        let cap_sets: Vec<Vec<u64>> = if chosen.len() <= 6 {
            (0u32..1 << chosen.len())
                .map(|c| {
                    (0..chosen.len())
                        .map(|i| 1 + ((c >> i) & 1) as u64)
                        .collect()
                })
                .collect()
        } else {
            (0..4)
                .map(|_| (0..chosen.len()).map(|_| rng.gen_range(1..=3)).collect())
                .collect()
        };
        for caps in cap_sets {
            let arcs: Vec<(usize, usize, u64)> = chosen
                .iter()
                .zip(&caps)
                .map(|(&(u, v), &c)| (u, v, c))
                .collect();
            let mut net = FlowNetwork::new(4);
            for &(u, v, c) in &arcs {
                net.add_arc(u, v, c);
            }
            networks += 1;
            if net.max_flow(0, 3) != brute_min_cut(4, &arcs, 0, 3) {
                flow_bad += 1;
            }
        }
    }

    // hindsight vs. exhaustive per-message routing on path(3) and cycle(4)
    let mut traces = 0u64;
    let mut hind_bad = 0u64;
    for (spec, n) in [("path:3", 3usize), ("cycle:4", 4)] {
        let g = graph(spec);
        let edges: Vec<(usize, usize)> = g.edges().collect();
        for k in 1..=2usize {
            for origins in origin_layouts(n, k) {
                let sources = SourceAssignment::new(origins.clone());
                for seed in 0..40u64 {
                    let trace = if seed % 2 == 0 {
                        let cfg = RunConfig::new(Protocol::Ag, g.clone(), sources.clone())
                            .with_seed(seed)
                            .with_trace(true)
                            .with_max_rounds(6);
                        engine::run(&cfg).unwrap().trace.unwrap()
                    } else {
                        random_trace(&edges, 6, seed)
                    };
                    traces += 1;
                    for v in 0..n {
                        if hindsight_time(&trace, &sources, n, v)
                            != brute_hindsight(&trace, &origins, v)
                        {
                            hind_bad += 1;
                        }
                    }
                }
            }
        }
    }
    Outcome {
        pass: flow_bad == 0 && hind_bad == 0,
        detail: format!(
            "{networks} flow networks ({flow_bad} mismatches); {traces} traces x all sinks ({hind_bad} hindsight mismatches)"
        ),
    }
}

fn origin_layouts(n: usize, k: usize) -> Vec<Vec<usize>> {
    if k == 1 {
        (0..n).map(|a| vec![a]).collect()
    } else {
        (0..n)
            .flat_map(|a| (0..n).map(move |b| vec![a, b]))
            .collect()
    }
}

/// Each round, each edge independently carries a transmission in either,
/// both or no direction.
fn random_trace(edges: &[(usize, usize)], rounds: usize, seed: u64) -> ExchangeTrace {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for _ in 0..rounds {
        let mut round = Vec::new();
        for &(u, v) in edges {
            if rng.gen_bool(0.35) {
                round.push(Transmission {
                    from: u,
                    to: v,
                    packet: PacketSummary::Empty,
                });
            }
            if rng.gen_bool(0.35) {
                round.push(Transmission {
                    from: v,
                    to: u,
                    packet: PacketSummary::Empty,
                });
            }
        }
        out.push(round);
    }
    ExchangeTrace { rounds: out }
}

fn criterion_9() -> Outcome {
    let mut systems = 0;
    let mut decode_bad = 0;
    for (m, field) in [
        (1u32, FieldSpec::GF2),
        (8, FieldSpec::GF256),
        (16, FieldSpec::GF65536),
    ] {
        let poly = poly_for(m);
        let mut rng = ChaCha8Rng::seed_from_u64(900 + m as u64);
        let mut done = 0;
        while done < 1000 {
            let k = rng.gen_range(1..=8usize);
            let extra = rng.gen_range(0..=2usize);
            let plen = 2 * rng.gen_range(1..=6usize);
            let rows: Vec<Vec<u32>> = (0..k + extra)
                .map(|_| (0..k).map(|_| rng.gen_range(0..1u32 << m)).collect())
                .collect();
            if oracle_rank(&rows, m) < k {
                continue;
            }
            let messages: Vec<Vec<u8>> = (0..k)
                .map(|_| (0..plen).map(|_| rng.gen()).collect())
                .collect();
            let packets: Vec<(CoefficientVector, Payload)> = rows
                .iter()
                .map(|r| {
                    let coeffs = CoefficientVector(r.iter().map(|&x| x as u16).collect());
                    (coeffs, Payload(encode(r, &messages, m, poly)))
                })
                .collect();
            let decoded = decode(&field, &packets, k).unwrap();
            if decoded.iter().map(|p| p.0.clone()).collect::<Vec<_>>() != messages {
                decode_bad += 1;
            }
            done += 1;
            systems += 1;
        }
    }

    // exhaustive field axioms for m in {1, 8}
    let mut axiom_bad = 0u64;
    for (m, field) in [(1u32, FieldSpec::GF2), (8, FieldSpec::GF256)] {
        let poly = poly_for(m);
        let q = 1u32 << m;
        let table: Vec<Vec<u16>> = (0..q)
            .map(|a| (0..q).map(|b| field.mul(a as u16, b as u16)).collect())
            .collect();
        for a in 0..q {
            for b in 0..q {
                let ab = table[a as usize][b as usize];
                if ab as u32 != gf_mul(a, b, m, poly) || ab != table[b as usize][a as usize] {
                    axiom_bad += 1;
                }
            }
            if table[a as usize][1] != a as u16 {
                axiom_bad += 1;
            }
            if a != 0 {
                let inv = field.inv(a as u16).unwrap();
                if table[a as usize][inv as usize] != 1 {
                    axiom_bad += 1;
                }
            }
        }
        for a in 0..q as usize {
            for b in 0..q as usize {
                let ab = table[a][b] as usize;
                for c in 0..q as usize {
                    if table[ab][c] != table[a][table[b][c] as usize]
                        || table[a][b ^ c] != table[a][b] ^ table[a][c]
                    {
                        axiom_bad += 1;
                    }
                }
            }
        }
    }
    Outcome {
        pass: decode_bad == 0 && axiom_bad == 0,
        detail: format!("{systems} full-rank systems ({decode_bad} decode mismatches); field axioms exhaustive for m=1,8 ({axiom_bad} violations)"),
    }
}

/// Encodes each payload symbol-wise with the reference multiplier.
fn encode(coeffs: &[u32], messages: &[Vec<u8>], m: u32, poly: u32) -> Vec<u8> {
    let plen = messages[0].len();
    let mut out = vec![0u8; plen];
    for (&c, msg) in coeffs.iter().zip(messages) {
        match m {
            1 => {
                if c == 1 {
                    out.iter_mut().zip(msg).for_each(|(o, x)| *o ^= x);
                }
            }
            8 => out
                .iter_mut()
                .zip(msg)
                .for_each(|(o, &x)| *o ^= gf_mul(c, x as u32, 8, poly) as u8),
            _ => {
                for i in (0..plen).step_by(2) {
                    let sym = u16::from_be_bytes([msg[i], msg[i + 1]]) as u32;
                    let p = (gf_mul(c, sym, 16, poly) as u16).to_be_bytes();
                    out[i] ^= p[0];
                    out[i + 1] ^= p[1];
                }
            }
        }
    }
    out
}

fn main() -> ExitCode {
    let criteria: [(&str, Criterion); 9] = [
        ("round-robin exact bound min{3n,DD}+Dk", criterion_1),
        ("algebraic gossip within 16D(D+k+log n)", criterion_2),
        ("refined bound 16(min{3n,DD}+D(k+log n))", criterion_3),
        ("gossip equals hindsight routing time", criterion_4),
        ("knowledge <=> full rank", criterion_5),
        ("tree forwarding within 2(k+D')+2", criterion_6),
        (
            "prioritized uniform gossip within refined bound",
            criterion_7,
        ),
        ("flow and hindsight oracle soundness", criterion_8),
        ("field arithmetic and decoding", criterion_9),
    ];
    let mut all = true;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = std::time::Instant::now();
        let o = f();
        all &= o.pass;
        println!(
            "criterion {}: {} - {name}: {} [{:.1}s]",
            i + 1,
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            start.elapsed().as_secs_f64()
        );
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
