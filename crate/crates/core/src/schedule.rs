//! Deterministic, periodic configuration of the IM, CIM and COM stages.
//!
//! At slot `t`:
//! - `IM(i)` connects `IP(i, s)` to `L_IM(i, r)` with `r = (s + t) mod m`;
//! - `CIM(r)` connects `L_IM(i, r)` to `L_CIM(r, p)` with `p = (i + t) mod k`;
//! - `COM(r)` connects `I_C(r, p)` to `L_COM(r, j)` with `j = (p - t) mod k`.
//!
//! The pattern repeats every `k` slots. No matching or arbitration is needed
//! in any of these stages.

use std::fmt;

use crate::topology::{LinkAddress, PortAddress, SwitchGeometry};

/// Mathematical modulus; the result is always in `[0, modulus)`.
pub fn wrap(value: i64, modulus: usize) -> usize {
    value.rem_euclid(modulus as i64) as usize
}

/// CIM reached from input port `s` of an IM at slot `t`.
pub fn im_route(s: usize, t: u64, geometry: &SwitchGeometry) -> usize {
    ((s as u64 + t) % geometry.m() as u64) as usize
}

/// CIM output reached from the link of `IM(i)` at slot `t`.
pub fn cim_route(i: usize, t: u64, geometry: &SwitchGeometry) -> usize {
    ((i as u64 + t) % geometry.k() as u64) as usize
}

/// OM reached from COM input `p` at slot `t`.
pub fn com_route(p: usize, t: u64, geometry: &SwitchGeometry) -> usize {
    let k = geometry.k() as u64;
    wrap(p as i64 - (t % k) as i64, geometry.k())
}

/// The slot in `(after, after + k]` at which COM input `p` next connects to
/// `OM(j)`.
pub fn next_com_service(p: usize, j: usize, after: u64, geometry: &SwitchGeometry) -> u64 {
    let k = geometry.k() as u64;
    // (p - t) mod k == j  <=>  t == p - j (mod k)
    let phase = wrap(p as i64 - j as i64, geometry.k()) as u64;
    let mut t = after + 1;
    t += (phase + k - t % k) % k;
    t
}

/// Configuration view of the whole fabric over one period.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SlotSchedule {
    geometry: SwitchGeometry,
}

impl SlotSchedule {
    pub fn new(geometry: SwitchGeometry) -> Self {
        Self { geometry }
    }

    pub fn geometry(&self) -> &SwitchGeometry {
        &self.geometry
    }

    pub fn period(&self) -> usize {
        self.geometry.k()
    }

    /// The CIM output link that `ip` is connected to at slot `t`.
    pub fn link_for_input(&self, ip: PortAddress, t: u64) -> LinkAddress {
        let r = im_route(ip.port, t, &self.geometry);
        let p = cim_route(ip.module, t, &self.geometry);
        LinkAddress::new(r, p)
    }

    /// The OM that `link` is connected to at slot `t`.
    pub fn om_for_link(&self, link: LinkAddress, t: u64) -> usize {
        com_route(link.port, t, &self.geometry)
    }

    /// Interconnections of `IM(0)`, `CIM(0)` and `COM(0)` at slot `t`, one
    /// entry per module port.
    pub fn module_zero_configuration(&self, t: u64) -> Vec<ConfigurationRow> {
        let geo = &self.geometry;
        (0..geo.k())
            .map(|x| ConfigurationRow {
                slot: t,
                im: (x, im_route(x, t, geo)),
                cim: (x, cim_route(x, t, geo)),
                com: (x, com_route(x, t, geo)),
            })
            .collect()
    }
}

/// One line of the module-0 configuration table.
///
/// `im = (s, r)` means `IP(0,s) -> L_IM(0,r)`; `cim = (i, p)` means
/// `L_IM(i,0) -> L_CIM(0,p)`; `com = (p, j)` means `I_c(0,p) -> L_COM(0,j)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConfigurationRow {
    pub slot: u64,
    pub im: (usize, usize),
    pub cim: (usize, usize),
    pub com: (usize, usize),
}

impl fmt::Display for ConfigurationRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "IP(0,{}) -> L_IM(0,{})  |  L_IM({},0) -> L_CIM(0,{})  |  I_c(0,{}) -> L_COM(0,{})",
            self.im.0, self.im.1, self.cim.0, self.cim.1, self.com.0, self.com.1
        )
    }
}

/// A 0/1 matrix summing the `k` per-slot permutations of a stage over one
/// period.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompoundPermutation {
    size: usize,
    period: usize,
    entries: Vec<u8>,
}

impl CompoundPermutation {
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn period(&self) -> usize {
        self.period
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.entries[row * self.size + col]
    }

    pub fn row(&self, row: usize) -> &[u8] {
        &self.entries[row * self.size..(row + 1) * self.size]
    }

    /// Column indices of the nonzero entries in `row`.
    pub fn row_support(&self, row: usize) -> Vec<usize> {
        self.row(row)
            .iter()
            .enumerate()
            .filter(|(_, &x)| x != 0)
            .map(|(c, _)| c)
            .collect()
    }

    pub fn row_sums(&self) -> Vec<usize> {
        (0..self.size)
            .map(|r| self.row(r).iter().map(|&x| x as usize).sum())
            .collect()
    }

    pub fn col_sums(&self) -> Vec<usize> {
        (0..self.size)
            .map(|c| (0..self.size).map(|r| self.get(r, c) as usize).sum())
            .collect()
    }

    fn accumulate(
        size: usize,
        period: usize,
        mut hits: impl FnMut(&mut dyn FnMut(usize, usize)),
    ) -> Self {
        let mut counts = vec![0u32; size * size];
        hits(&mut |row, col| counts[row * size + col] += 1);
        // Disjointness: each input-output pair is connected in exactly one
        // permutation of the period.
        debug_assert!(counts.iter().all(|&c| c <= 1));
        Self {
            size,
            period,
            entries: counts.into_iter().map(|c| c.min(1) as u8).collect(),
        }
    }
}

impl fmt::Display for CompoundPermutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in 0..self.size {
            let row: Vec<String> = self.row(r).iter().map(|x| x.to_string()).collect();
            writeln!(f, "[{}]", row.join(" "))?;
        }
        Ok(())
    }
}

/// Compound IM-CIM permutation `P1`: rows are input ports `u = i*k + s`,
/// columns are CIM links `r*k + p`.
pub fn compound_p1(geometry: &SwitchGeometry) -> CompoundPermutation {
    let k = geometry.k();
    let n = geometry.n();
    let size = geometry.ports();
    CompoundPermutation::accumulate(size, k, |hit| {
        for t in 0..k as u64 {
            for i in 0..k {
                for s in 0..n {
                    let r = im_route(s, t, geometry);
                    let p = cim_route(i, t, geometry);
                    hit(i * k + s, r * k + p);
                }
            }
        }
    })
}

/// Compound COM permutation `P2`: rows are COM inputs `r*k + p`, columns are
/// `j*k + r` for the COM output link `L_COM(r, j)`.
pub fn compound_p2(geometry: &SwitchGeometry) -> CompoundPermutation {
    let k = geometry.k();
    let m = geometry.m();
    let size = geometry.ports();
    CompoundPermutation::accumulate(size, k, |hit| {
        for t in 0..k as u64 {
            for r in 0..m {
                for p in 0..k {
                    let j = com_route(p, t, geometry);
                    hit(r * k + p, j * k + r);
                }
            }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn g(k: usize) -> SwitchGeometry {
        SwitchGeometry::symmetric(k).unwrap()
    }

    #[test]
    fn im_route_examples() {
        assert_eq!(im_route(0, 0, &g(3)), 0);
        assert_eq!(im_route(0, 1, &g(3)), 1);
        assert_eq!(im_route(2, 2, &g(3)), 1);
    }

    #[test]
    fn cim_route_examples() {
        assert_eq!(cim_route(0, 0, &g(3)), 0);
        assert_eq!(cim_route(1, 1, &g(3)), 2);
        assert_eq!(cim_route(2, 2, &g(3)), 1);
    }

    #[test]
    fn com_route_examples() {
        assert_eq!(com_route(0, 0, &g(3)), 0);
        assert_eq!(com_route(0, 1, &g(3)), 2);
        assert_eq!(com_route(2, 2, &g(3)), 0);
    }

    #[test]
    fn negative_modulus_is_normalised() {
        assert_eq!(wrap(-2, 5), 3);
        assert_eq!(wrap(-5, 5), 0);
        assert_eq!(com_route(0, 4, &g(5)), 1);
    }

    #[test]
    fn next_com_service_is_strictly_after() {
        let geo = g(3);
        for p in 0..3 {
            for j in 0..3 {
                for after in 0..9u64 {
                    let t = next_com_service(p, j, after, &geo);
                    assert!(t > after && t <= after + 3);
                    assert_eq!(com_route(p, t, &geo), j);
                }
            }
        }
    }

    #[test]
    fn p1_for_two_by_two_modules() {
        let p1 = compound_p1(&g(2));
        assert_eq!(p1.row_support(0), vec![0, 3]);
        assert_eq!(p1.row_support(1), vec![1, 2]);
        assert_eq!(p1.row_support(2), vec![1, 2]);
        assert_eq!(p1.row_support(3), vec![0, 3]);
    }

    #[test]
    fn p2_for_two_by_two_modules() {
        let p2 = compound_p2(&g(2));
        assert_eq!(p2.row_support(0), vec![0, 2]);
        assert_eq!(p2.row_support(1), vec![0, 2]);
        assert_eq!(p2.row_support(2), vec![1, 3]);
        assert_eq!(p2.row_support(3), vec![1, 3]);
    }

    #[test]
    fn single_module_is_identity() {
        assert_eq!(compound_p1(&g(1)).row(0), &[1]);
        assert_eq!(compound_p2(&g(1)).row(0), &[1]);
    }

    // Closed forms derived by eliminating t from the routing equations:
    // IP(i,s) reaches link (r,p) iff r - s == p - i (mod k); COM input
    // (r,p) reaches column j*k + r' iff r' == r.
    #[test]
    fn compound_matrices_match_closed_form_for_k3() {
        let geo = g(3);
        let p1 = compound_p1(&geo);
        let p2 = compound_p2(&geo);
        for u in 0..9 {
            let (i, s) = (u / 3, u % 3);
            for col in 0..9 {
                let (r, p) = (col / 3, col % 3);
                let expect = wrap(r as i64 - s as i64, 3) == wrap(p as i64 - i as i64, 3);
                assert_eq!(p1.get(u, col) == 1, expect, "P1[{u}][{col}]");
                let expect2 = col % 3 == u / 3;
                assert_eq!(p2.get(u, col) == 1, expect2, "P2[{u}][{col}]");
            }
        }
        assert!(p1.row_sums().iter().all(|&x| x == 3));
        assert!(p1.col_sums().iter().all(|&x| x == 3));
        assert!(p2.row_sums().iter().all(|&x| x == 3));
        assert!(p2.col_sums().iter().all(|&x| x == 3));
    }

    proptest! {
        #[test]
        fn configuration_is_periodic(k in 1usize..9, x in 0usize..9, t in 0u64..1000) {
            let geo = g(k);
            let x = x % k;
            let kk = k as u64;
            prop_assert_eq!(im_route(x, t, &geo), im_route(x, t + kk, &geo));
            prop_assert_eq!(cim_route(x, t, &geo), cim_route(x, t + kk, &geo));
            prop_assert_eq!(com_route(x, t, &geo), com_route(x, t + kk, &geo));
        }

        #[test]
        fn each_slot_is_a_permutation(k in 1usize..9, t in 0u64..1000) {
            let geo = g(k);
            let mut im: Vec<usize> = (0..k).map(|s| im_route(s, t, &geo)).collect();
            let mut cim: Vec<usize> = (0..k).map(|i| cim_route(i, t, &geo)).collect();
            let mut com: Vec<usize> = (0..k).map(|p| com_route(p, t, &geo)).collect();
            im.sort_unstable();
            cim.sort_unstable();
            com.sort_unstable();
            let id: Vec<usize> = (0..k).collect();
            prop_assert_eq!(im, id.clone());
            prop_assert_eq!(cim, id.clone());
            prop_assert_eq!(com, id);
        }

        #[test]
        fn compound_matrices_are_disjoint_and_regular(k in 1usize..8) {
            let geo = g(k);
            for p in [compound_p1(&geo), compound_p2(&geo)] {
                prop_assert!(p.row_sums().iter().all(|&x| x == k));
                prop_assert!(p.col_sums().iter().all(|&x| x == k));
            }
        }

        #[test]
        fn staggered_symmetry(k in 1usize..9, i in 0usize..9, s in 0usize..9, t in 0u64..500) {
            let geo = g(k);
            let sched = SlotSchedule::new(geo);
            let ip = PortAddress::new(i % k, s % k);
            let link = sched.link_for_input(ip, t);
            prop_assert_eq!(sched.om_for_link(link, t), ip.module);
            let next = sched.link_for_input(ip, t + 1);
            prop_assert_eq!(next.cim, (link.cim + 1) % k);
            prop_assert_eq!(sched.om_for_link(next, t + 1), ip.module);
        }
    }
}
