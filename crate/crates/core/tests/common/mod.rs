// Independent reference implementations the integration tests check the
// library against. Nothing here calls into the code under test except to
// read plain data (edge lists, traces).
#![allow(dead_code)]

use std::collections::HashMap;
use std::sync::Arc;

use algossip::engine::ExchangeTrace;
use algossip::graph::{GraphFamily, Topology};

pub const SUITE: &[&str] = &[
    "path:50",
    "cycle:64",
    "star:50",
    "binary_tree:63",
    "grid2d:8x8",
    "random_regular:64,4,1",
    "random_regular:64,4,2",
    "random_regular:64,4,3",
    "barbell:20,20",
];

pub fn graph(spec: &str) -> Arc<Topology> {
    Arc::new(spec.parse::<GraphFamily>().unwrap().generate().unwrap())
}

/// Carry-less multiply then reduce, bit by bit.
pub fn gf_mul(a: u32, b: u32, m: u32, poly: u32) -> u32 {
    let mut prod: u64 = 0;
    for i in 0..m {
        if (b >> i) & 1 == 1 {
            prod ^= (a as u64) << i;
        }
    }
    for bit in (m..2 * m).rev() {
        if (prod >> bit) & 1 == 1 {
            prod ^= (poly as u64) << (bit - m);
        }
    }
    prod as u32
}

pub fn poly_for(m: u32) -> u32 {
    match m {
        1 => 0b11,
        8 => 0x11b,
        16 => 0x1100b,
        _ => unreachable!(),
    }
}

/// Inverse by exhaustive search (fine for m <= 8; m = 16 via a^(q-2)).
pub fn gf_inv(a: u32, m: u32, poly: u32) -> u32 {
    assert!(a != 0);
    if m <= 8 {
        return (1..1u32 << m)
            .find(|&x| gf_mul(a, x, m, poly) == 1)
            .unwrap();
    }
    let mut e = (1u64 << m) - 2;
    let (mut base, mut acc) = (a, 1);
    while e > 0 {
        if e & 1 == 1 {
            acc = gf_mul(acc, base, m, poly);
        }
        base = gf_mul(base, base, m, poly);
        e >>= 1;
    }
    acc
}

/// Rank by textbook Gaussian elimination on a copy.
pub fn oracle_rank(rows: &[Vec<u32>], m: u32) -> usize {
    let poly = poly_for(m);
    let mut a: Vec<Vec<u32>> = rows.to_vec();
    let cols = a.first().map_or(0, |r| r.len());
    let mut r = 0;
    for c in 0..cols {
        let Some(p) = (r..a.len()).find(|&i| a[i][c] != 0) else {
            continue;
        };
        a.swap(r, p);
        let inv = gf_inv(a[r][c], m, poly);
        for i in 0..a.len() {
            if i != r && a[i][c] != 0 {
                let f = gf_mul(a[i][c], inv, m, poly);
                let pivot = a[r].clone();
                for (x, &y) in a[i].iter_mut().zip(&pivot) {
                    *x ^= gf_mul(f, y, m, poly);
                }
            }
        }
        r += 1;
    }
    r
}

/// All-pairs hop distances by Floyd-Warshall over the edge list.
pub fn apsp(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<usize>> {
    const INF: usize = usize::MAX / 4;
    let mut d = vec![vec![INF; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = 0;
    }
    for &(u, v) in edges {
        d[u][v] = 1;
        d[v][u] = 1;
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if d[i][k] + d[k][j] < d[i][j] {
                    d[i][j] = d[i][k] + d[k][j];
                }
            }
        }
    }
    d
}

pub struct Stats {
    pub n: usize,
    pub delta: usize,
    pub diameter: usize,
}

pub fn stats(g: &Topology) -> Stats {
    let edges: Vec<_> = g.edges().collect();
    let n = g.n();
    let mut deg = vec![0; n];
    for &(u, v) in &edges {
        deg[u] += 1;
        deg[v] += 1;
    }
    let d = apsp(n, &edges);
    Stats {
        n,
        delta: deg.into_iter().max().unwrap_or(0),
        diameter: d.iter().flatten().copied().max().unwrap_or(0),
    }
}

pub fn clog2(n: usize) -> u64 {
    let mut l = 0;
    while (1usize << l) < n {
        l += 1;
    }
    l
}

pub fn oracle_bound_rr(s: &Stats, k: usize) -> u64 {
    (3 * s.n).min(s.delta * s.diameter) as u64 + (s.delta * k) as u64
}

pub fn oracle_bound_thm1(s: &Stats, k: usize, c: u64) -> u64 {
    c * s.delta as u64 * (s.diameter as u64 + k as u64 + clog2(s.n))
}

pub fn oracle_bound_thm2(s: &Stats, k: usize, c: u64) -> u64 {
    c * ((3 * s.n).min(s.delta * s.diameter) as u64 + s.delta as u64 * (k as u64 + clog2(s.n)))
}

/// Min cut by enumerating every vertex partition with s on one side and t on
/// the other.
pub fn brute_min_cut(nodes: usize, arcs: &[(usize, usize, u64)], s: usize, t: usize) -> u64 {
    let others: Vec<usize> = (0..nodes).filter(|&v| v != s && v != t).collect();
    let mut best = u64::MAX;
    for mask in 0u32..(1 << others.len()) {
        let mut side = vec![false; nodes];
        side[s] = true;
        for (i, &v) in others.iter().enumerate() {
            if (mask >> i) & 1 == 1 {
                side[v] = true;
            }
        }
        let cut: u64 = arcs
            .iter()
            .filter(|&&(u, v, _)| side[u] && !side[v])
            .map(|a| a.2)
            .sum();
        best = best.min(cut);
    }
    best
}

/// Every time-respecting walk from `origin` that is at `v` after `horizon`
/// rounds, as the set of (round, transmission index) it uses. Between rounds
/// a walk either stays put or follows one recorded transmission.
fn walks(
    trace: &ExchangeTrace,
    origin: usize,
    v: usize,
    horizon: usize,
) -> Vec<Vec<(usize, usize)>> {
    let mut out = Vec::new();
    let mut stack = vec![(origin, 0usize, Vec::new())];
    while let Some((at, t, used)) = stack.pop() {
        if t == horizon {
            if at == v {
                out.push(used);
            }
            continue;
        }
        stack.push((at, t + 1, used.clone()));
        if let Some(round) = trace.rounds.get(t) {
            for (i, tx) in round.iter().enumerate() {
                if tx.from == at {
                    let mut u = used.clone();
                    u.push((t, i));
                    stack.push((tx.to, t + 1, u));
                }
            }
        }
    }
    out
}

/// Smallest T such that each message can be given its own walk to `v` within
/// T rounds with no transmission carrying two messages.
pub fn brute_hindsight(trace: &ExchangeTrace, origins: &[usize], v: usize) -> Option<u64> {
    for t in 0..=trace.rounds.len() {
        let options: Vec<_> = origins.iter().map(|&o| walks(trace, o, v, t)).collect();
        if assign(&options, 0, &mut HashMap::new()) {
            return Some(t as u64);
        }
    }
    None
}

fn assign(
    options: &[Vec<Vec<(usize, usize)>>],
    i: usize,
    used: &mut HashMap<(usize, usize), ()>,
) -> bool {
    if i == options.len() {
        return true;
    }
    for w in &options[i] {
        if w.iter().any(|e| used.contains_key(e)) {
            continue;
        }
        for &e in w {
            used.insert(e, ());
        }
        let ok = assign(options, i + 1, used);
        for e in w {
            used.remove(e);
        }
        if ok {
            return true;
        }
    }
    false
}
