//! Self-checks printed by `lbc verify` and by replay scenario files.

use lbc_core::analysis::{cb_rates, compute_r2, pipeline, CbStress};
use lbc_core::engine::replay_three_flows;
use lbc_core::schedule::{cim_route, com_route, compound_p1, compound_p2, im_route};
use lbc_core::sequencing::replay_hold_down;
use lbc_core::{Matrix, PortAddress, SlotSchedule, SwitchGeometry};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Named pass/fail outcome with a short explanation.
pub struct Outcome {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Outcome {
    fn new(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            pass,
            detail: detail.into(),
        }
    }
}

// Reference interconnections of the first IM, CIM and COM for k = 3, as
// (from, to) pairs per slot. The COM entry for input 2 at slot 0 follows the
// routing rule (2 -> 2).
const K3_IM: [[(usize, usize); 3]; 3] = [
    [(0, 0), (1, 1), (2, 2)],
    [(0, 1), (1, 2), (2, 0)],
    [(0, 2), (1, 0), (2, 1)],
];
const K3_CIM: [[(usize, usize); 3]; 3] = K3_IM;
const K3_COM: [[(usize, usize); 3]; 3] = [
    [(0, 0), (1, 1), (2, 2)],
    [(0, 2), (1, 0), (2, 1)],
    [(0, 1), (1, 2), (2, 0)],
];

const K2_P1: [[u8; 4]; 4] = [[1, 0, 0, 1], [0, 1, 1, 0], [0, 1, 1, 0], [1, 0, 0, 1]];
const K2_P2: [[u8; 4]; 4] = [[1, 0, 1, 0], [1, 0, 1, 0], [0, 1, 0, 1], [0, 1, 0, 1]];

/// Largest `k` for which the rate pipeline is checked; its cost grows as
/// `N³`.
const PIPELINE_MAX_K: usize = 8;
const RANDOM_MATRICES: usize = 20;

/// Prints the module-0 configuration for one period.
pub fn configuration_table(geo: &SwitchGeometry) -> String {
    let sched = SlotSchedule::new(*geo);
    let mut out = String::new();
    for t in 0..geo.k() as u64 {
        out.push_str(&format!("t={t}\n"));
        for row in sched.module_zero_configuration(t) {
            out.push_str(&format!("  {row}\n"));
        }
    }
    out
}

fn is_permutation(mut v: Vec<usize>) -> bool {
    v.sort_unstable();
    v.iter().enumerate().all(|(i, &x)| i == x)
}

pub fn schedule_suite(geo: &SwitchGeometry) -> Vec<Outcome> {
    let k = geo.k();
    let sched = SlotSchedule::new(*geo);
    let horizon = 4 * k as u64;
    let mut out = Vec::new();

    let periodic = (0..horizon).all(|t| {
        (0..k).all(|x| {
            im_route(x, t, geo) == im_route(x, t + k as u64, geo)
                && cim_route(x, t, geo) == cim_route(x, t + k as u64, geo)
                && com_route(x, t, geo) == com_route(x, t + k as u64, geo)
        })
    });
    out.push(Outcome::new("periodicity", periodic, format!("period {k}")));

    let perms = (0..horizon).all(|t| {
        is_permutation((0..k).map(|x| im_route(x, t, geo)).collect())
            && is_permutation((0..k).map(|x| cim_route(x, t, geo)).collect())
            && is_permutation((0..k).map(|x| com_route(x, t, geo)).collect())
    });
    out.push(Outcome::new("each slot is a permutation", perms, ""));

    let p1 = compound_p1(geo);
    let p2 = compound_p2(geo);
    let disjoint = [&p1, &p2].iter().all(|p| {
        (0..p.size()).all(|r| p.row(r).iter().all(|&x| x <= 1))
            && p.row_sums().iter().all(|&s| s == k)
            && p.col_sums().iter().all(|&s| s == k)
    });
    out.push(Outcome::new(
        "slot permutations are disjoint over a period",
        disjoint,
        "compound matrices are 0/1 with k ones per row and column",
    ));

    let mut staggered = true;
    for u in 0..geo.ports() {
        let ip = PortAddress::new(u / geo.n(), u % geo.n());
        for t in 0..horizon {
            let link = sched.link_for_input(ip, t);
            let next = sched.link_for_input(ip, t + 1);
            staggered &= sched.om_for_link(link, t) == ip.module
                && next.cim == (link.cim + 1) % geo.m()
                && sched.om_for_link(next, t + 1) == ip.module;
        }
    }
    out.push(Outcome::new(
        "staggered symmetry",
        staggered,
        "each IP advances one CIM per slot and reaches its own OM index",
    ));

    if k == 3 {
        let mut diff = 0;
        for t in 0..3 {
            for row in sched.module_zero_configuration(t as u64) {
                let x = row.im.0;
                diff += usize::from(row.im != K3_IM[t][x])
                    + usize::from(row.cim != K3_CIM[t][x])
                    + usize::from(row.com != K3_COM[t][x]);
            }
        }
        out.push(Outcome::new(
            "k=3 reference configuration",
            diff == 0,
            format!("{diff} of 27 interconnections differ"),
        ));
    }
    if k == 2 {
        let ok1 = (0..4).all(|r| p1.row(r) == K2_P1[r]);
        let ok2 = (0..4).all(|r| p2.row(r) == K2_P2[r]);
        out.push(Outcome::new("k=2 reference P1", ok1, ""));
        out.push(Outcome::new("k=2 reference P2", ok2, ""));
    }
    out
}

fn random_admissible(n: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let raw = Matrix::from_fn(n, n, |_, _| rng.gen::<f64>());
    let peak = raw
        .row_sums()
        .into_iter()
        .chain(raw.col_sums())
        .fold(0.0, f64::max);
    let fill = rng.gen_range(0.1..=1.0);
    Matrix::from_fn(n, n, |u, v| raw[(u, v)] / peak * fill)
}

pub fn analysis_suite(geo: &SwitchGeometry, seed: u64) -> Vec<Outcome> {
    let k = geo.k();
    let n = geo.ports();
    let mut out = Vec::new();

    let rates = [
        (CbStress::AllToOneModule, 1.0 / (k * k) as f64),
        (CbStress::ModuleToModule, 1.0 / k as f64),
        (CbStress::SingleFlow, 1.0 / geo.m() as f64),
    ];
    let cb_ok = rates.iter().all(|&(p, want)| {
        let (arr, svc) = cb_rates(p, geo);
        (arr - want).abs() < 1e-15 && (svc - 1.0 / k as f64).abs() < 1e-15
    });
    out.push(Outcome::new("CB arrival and service rates", cb_ok, ""));

    if k > PIPELINE_MAX_K {
        out.push(Outcome::new(
            "rate pipeline identities",
            true,
            format!("skipped for k > {PIPELINE_MAX_K}"),
        ));
        return out;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p1 = compound_p1(geo);
    let (mut r5_err, mut r2_err, mut support) = (0.0f64, 0.0f64, true);
    for _ in 0..RANDOM_MATRICES {
        let r1 = random_admissible(n, &mut rng);
        let r2 = match compute_r2(&r1, &p1, k) {
            Ok(r2) => r2,
            Err(e) => return vec![Outcome::new("rate pipeline", false, e.to_string())],
        };
        for (a, b) in r2.row_sums().iter().zip(r1.row_sums()) {
            r2_err = r2_err.max((a - b).abs());
        }
        for u in 0..n {
            for c in 0..geo.links() {
                support &= (r2[(u, c)] > 0.0) == (p1.get(u, c) == 1);
            }
        }
        match pipeline(&r1, geo) {
            Ok(st) => {
                for (v, cs) in r1.col_sums().iter().enumerate() {
                    r5_err = r5_err.max((st.r5[v] - cs).abs());
                }
            }
            Err(e) => return vec![Outcome::new("rate pipeline", false, e.to_string())],
        }
    }
    out.push(Outcome::new(
        "R2 keeps each input's load on the P1 support",
        support && r2_err < 1e-9,
        format!("{RANDOM_MATRICES} random admissible matrices, max row error {r2_err:.1e}"),
    ));
    out.push(Outcome::new(
        "R5 equals column sums of R1",
        r5_err < 1e-9,
        format!("max error {r5_err:.1e}"),
    ));
    out
}

pub fn replay_suite() -> Vec<Outcome> {
    let mut out = Vec::new();
    let slots = |foreign| -> Result<Vec<u64>, String> {
        replay_hold_down(3, foreign)
            .map(|ev| ev.iter().map(|e| e.slot).collect())
            .map_err(|e| e.to_string())
    };
    for (foreign, want) in [(3usize, vec![2u64, 3, 13, 14]), (0, vec![2, 3, 5, 6])] {
        let (pass, detail) = match slots(foreign) {
            Ok(got) => (got == want, format!("expected {want:?}, got {got:?}")),
            Err(e) => (false, e),
        };
        out.push(Outcome::new(
            format!("hold-down replay, {foreign} foreign cells"),
            pass,
            detail,
        ));
    }
    match replay_three_flows() {
        Ok(flows) => {
            let ins: Vec<Vec<u64>> = flows.iter().map(|f| f.vomq_in.clone()).collect();
            let outs: Vec<Vec<u64>> = flows.iter().map(|f| f.vomq_out.clone()).collect();
            let want_in = vec![vec![1, 2, 3], vec![2, 6, 7], vec![3, 10, 11]];
            let want_out = vec![vec![4, 5, 6], vec![7, 8, 9], vec![10, 11, 12]];
            out.push(Outcome::new(
                "three-flow VOMQ arrivals",
                ins == want_in,
                format!("expected {want_in:?}, got {ins:?}"),
            ));
            out.push(Outcome::new(
                "three-flow VOMQ departures",
                outs == want_out,
                format!("expected {want_out:?}, got {outs:?}"),
            ));
        }
        Err(e) => out.push(Outcome::new("three-flow replay", false, e.to_string())),
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suites_pass_for_small_switches() {
        for k in 1..=5 {
            let geo = SwitchGeometry::symmetric(k).unwrap();
            for o in schedule_suite(&geo)
                .into_iter()
                .chain(analysis_suite(&geo, 1))
            {
                assert!(o.pass, "k={k}: {} {}", o.name, o.detail);
            }
        }
        assert!(replay_suite().iter().all(|o| o.pass));
    }

    #[test]
    fn table_lists_every_slot() {
        let geo = SwitchGeometry::symmetric(3).unwrap();
        let table = configuration_table(&geo);
        assert_eq!(table.lines().count(), 12);
        assert!(table.contains("I_c(0,2) -> L_COM(0,2)"));
    }
}
