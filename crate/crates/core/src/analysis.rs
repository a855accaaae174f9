//! Analytical cross-checks for the simulator: stage-by-stage traffic rates,
//! crosspoint-buffer load bounds and queue drift over simulated traces.
//!
//! Rate matrices use input ports `u = i*k + s` as rows. Intermediate stage
//! matrices use CIM links `r*k + p` as columns.

use crate::engine::StageSeries;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::schedule::{compound_p1, compound_p2, CompoundPermutation};
use crate::topology::SwitchGeometry;

fn check_square(r1: &Matrix, geometry: &SwitchGeometry) -> Result<()> {
    let n = geometry.ports();
    if r1.rows() != n || r1.cols() != n {
        return Err(Error::Dimension(format!(
            "rate matrix is {}x{}, switch has {n} ports",
            r1.rows(),
            r1.cols()
        )));
    }
    Ok(())
}

/// Traffic from each input to each CIM link: every input spreads its total
/// load evenly over the `k` links it visits in one period.
pub fn compute_r2(r1: &Matrix, p1: &CompoundPermutation, k: usize) -> Result<Matrix> {
    if p1.size() != r1.rows() {
        return Err(Error::Dimension("P1 size differs from R1".into()));
    }
    let sums = r1.row_sums();
    Ok(Matrix::from_fn(r1.rows(), p1.size(), |u, c| {
        sums[u] * f64::from(p1.get(u, c)) / k as f64
    }))
}

/// The part of [`compute_r2`] destined for `OM(j)`.
pub fn decompose_r2(
    r1: &Matrix,
    p1: &CompoundPermutation,
    geometry: &SwitchGeometry,
    j: usize,
) -> Result<Matrix> {
    check_square(r1, geometry)?;
    let (k, m) = (geometry.k(), geometry.m());
    let to_om: Vec<f64> = (0..r1.rows())
        .map(|u| r1.row(u)[j * m..(j + 1) * m].iter().sum())
        .collect();
    Ok(Matrix::from_fn(r1.rows(), p1.size(), |u, c| {
        to_om[u] * f64::from(p1.get(u, c)) / k as f64
    }))
}

/// Traffic for `OM(j)` after the COM stage. Entry `(u, r*k+p)` is kept
/// where COM `r` connects input `p` to `OM(j)` during the period, which it
/// does for every `p`; the COM stage reorders in time but drops nothing.
pub fn compute_r3(
    r2_j: &Matrix,
    p2: &CompoundPermutation,
    geometry: &SwitchGeometry,
    j: usize,
) -> Result<Matrix> {
    let k = geometry.k();
    if r2_j.cols() != p2.size() {
        return Err(Error::Dimension("P2 size differs from R2(j)".into()));
    }
    Ok(Matrix::from_fn(r2_j.rows(), r2_j.cols(), |u, c| {
        r2_j[(u, c)] * f64::from(p2.get(c, j * k + c / k))
    }))
}

/// Share of `R3(j)` destined for `OP(j, d)`, split in proportion to each
/// input's rate to that port.
pub fn split_r3(
    r1: &Matrix,
    r3_j: &Matrix,
    geometry: &SwitchGeometry,
    j: usize,
    d: usize,
) -> Result<Matrix> {
    check_square(r1, geometry)?;
    let m = geometry.m();
    let share: Vec<f64> = (0..r1.rows())
        .map(|u| {
            let to_om: f64 = r1.row(u)[j * m..(j + 1) * m].iter().sum();
            if to_om > 0.0 {
                r1[(u, j * m + d)] / to_om
            } else {
                0.0
            }
        })
        .collect();
    Ok(Matrix::from_fn(r3_j.rows(), r3_j.cols(), |u, c| {
        r3_j[(u, c)] * share[u]
    }))
}

/// Per-COM arrival rates at output `v`: `Ds * R3(j,d) * As`, where `Ds` is
/// an `m x N` matrix of ones and `As` selects one link column per input.
pub fn compute_r4(r3_jd: &Matrix, geometry: &SwitchGeometry) -> Result<Vec<f64>> {
    let n = geometry.ports();
    let k = geometry.k();
    let ds = Matrix::from_fn(geometry.m(), n, |_, _| 1.0);
    let a_s = Matrix::from_fn(r3_jd.cols(), 1, |c, _| if c % k == 0 { 1.0 } else { 0.0 });
    let out = ds.matmul(r3_jd)?.matmul(&a_s)?;
    Ok(out.as_slice().to_vec())
}

pub fn compute_r5(r4_v: &[f64]) -> f64 {
    r4_v.iter().sum()
}

/// Every stage of the rate pipeline for one input rate matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct StageTraffic {
    pub r2: Matrix,
    /// `R2(j)`, indexed by OM.
    pub r2_by_om: Vec<Matrix>,
    /// `R3(j)`, indexed by OM.
    pub r3: Vec<Matrix>,
    /// `R4(v)`, indexed by output port.
    pub r4: Vec<Vec<f64>>,
    /// `R5(v)`, indexed by output port.
    pub r5: Vec<f64>,
}

pub fn pipeline(r1: &Matrix, geometry: &SwitchGeometry) -> Result<StageTraffic> {
    check_square(r1, geometry)?;
    let p1 = compound_p1(geometry);
    let p2 = compound_p2(geometry);
    let (k, m) = (geometry.k(), geometry.m());
    let r2 = compute_r2(r1, &p1, k)?;
    let mut r2_by_om = Vec::with_capacity(k);
    let mut r3 = Vec::with_capacity(k);
    let mut r4 = Vec::with_capacity(geometry.ports());
    for j in 0..k {
        let r2j = decompose_r2(r1, &p1, geometry, j)?;
        let r3j = compute_r3(&r2j, &p2, geometry, j)?;
        for d in 0..m {
            r4.push(compute_r4(&split_r3(r1, &r3j, geometry, j, d)?, geometry)?);
        }
        r2_by_om.push(r2j);
        r3.push(r3j);
    }
    let r5 = r4.iter().map(|v| compute_r5(v)).collect();
    Ok(StageTraffic {
        r2,
        r2_by_om,
        r3,
        r4,
        r5,
    })
}

/// Crosspoint-buffer stress patterns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CbStress {
    /// All IPs send only to the OPs of one OM.
    AllToOneModule,
    /// All IPs of one IM send to all OPs of one OM.
    ModuleToModule,
    /// One IP sends at full rate to one OP.
    SingleFlow,
}

/// Worst-case arrival rate into one CB and the round-robin lower bound on
/// its service rate, for the largest admissible per-flow rate under
/// `pattern`.
pub fn cb_rates(pattern: CbStress, geometry: &SwitchGeometry) -> (f64, f64) {
    let (k, m) = (geometry.k() as f64, geometry.m() as f64);
    let n_ports = geometry.ports() as f64;
    // R_CB = 1/(mk) · Σ over k COM paths · Σ over k IMs of λ; a single flow
    // contributes one term per COM path only.
    let arrival = match pattern {
        CbStress::AllToOneModule => k * k * (1.0 / n_ports) / (m * k),
        CbStress::ModuleToModule => k * k * (1.0 / k) / (m * k),
        CbStress::SingleFlow => k / (m * k),
    };
    (arrival, 1.0 / k)
}

/// Outcome of [`drift_check`] on one stage.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftReport {
    /// Slot of the first recursion mismatch, if any.
    pub recursion_error: Option<u64>,
    /// Slot of the first departure count above the service bound.
    pub service_violation: Option<u64>,
    /// Largest excess of occupancy over its initial value.
    pub max_drift: u64,
    /// Least-squares growth of occupancy over the second half of the trace,
    /// in cells per slot.
    pub slope: f64,
    pub bounded: bool,
}

/// Checks `N(t) = N(t-1) + A(t) - D(t)` on a stage history, that no slot
/// serves more than `service_bound` cells, and that occupancy never rises
/// more than `cap` cells above its starting value.
pub fn drift_check(series: &StageSeries, service_bound: u32, cap: u64) -> DriftReport {
    let mut prev = series.initial as i64;
    let mut recursion_error = None;
    let mut service_violation = None;
    let mut max_drift = 0u64;
    for (t, ((&occ, &a), &d)) in series
        .occupancy
        .iter()
        .zip(&series.arrivals)
        .zip(&series.departures)
        .enumerate()
    {
        let expected = prev + i64::from(a) - i64::from(d);
        if recursion_error.is_none() && expected != i64::from(occ) {
            recursion_error = Some(t as u64);
        }
        if service_violation.is_none() && d > service_bound {
            service_violation = Some(t as u64);
        }
        max_drift = max_drift.max(u64::from(occ).saturating_sub(series.initial));
        prev = i64::from(occ);
    }
    let slope = growth_slope(&series.occupancy[series.occupancy.len() / 2..]);
    DriftReport {
        recursion_error,
        service_violation,
        max_drift,
        slope,
        bounded: recursion_error.is_none() && service_violation.is_none() && max_drift <= cap,
    }
}

fn growth_slope(ys: &[u32]) -> f64 {
    let n = ys.len() as f64;
    if ys.len() < 2 {
        return 0.0;
    }
    let mean_x = (n - 1.0) / 2.0;
    let mean_y = ys.iter().map(|&y| f64::from(y)).sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (x, &y) in ys.iter().enumerate() {
        let dx = x as f64 - mean_x;
        sxy += dx * (f64::from(y) - mean_y);
        sxx += dx * dx;
    }
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g(k: usize) -> SwitchGeometry {
        SwitchGeometry::symmetric(k).unwrap()
    }

    fn sample_r1() -> Matrix {
        Matrix::from_rows(vec![
            vec![0.1, 0.2, 0.3, 0.4],
            vec![0.25, 0.25, 0.0, 0.5],
            vec![0.3, 0.1, 0.2, 0.1],
            vec![0.2, 0.4, 0.1, 0.0],
        ])
        .unwrap()
    }

    #[test]
    fn r2_spreads_row_sums_over_p1_support() {
        let geo = g(2);
        let r1 = sample_r1();
        let p1 = compound_p1(&geo);
        let r2 = compute_r2(&r1, &p1, 2).unwrap();
        // Row 0 total 1.0 lands as 0.5 at links 0 and 3.
        assert_eq!(r2.row(0), &[0.5, 0.0, 0.0, 0.5]);
        for u in 0..4 {
            assert!((r2.row_sums()[u] - r1.row_sums()[u]).abs() < 1e-12);
        }
        assert_eq!(
            compute_r2(&Matrix::zeros(4, 4), &p1, 2).unwrap().total(),
            0.0
        );
    }

    #[test]
    fn r3_split_sums_back() {
        let geo = g(2);
        let r1 = sample_r1();
        let p1 = compound_p1(&geo);
        let p2 = compound_p2(&geo);
        for j in 0..2 {
            let r3 = compute_r3(&decompose_r2(&r1, &p1, &geo, j).unwrap(), &p2, &geo, j).unwrap();
            let parts: Vec<Matrix> = (0..2)
                .map(|d| split_r3(&r1, &r3, &geo, j, d).unwrap())
                .collect();
            let mut sum = Matrix::zeros(4, 4);
            for p in &parts {
                for u in 0..4 {
                    for c in 0..4 {
                        sum[(u, c)] += p[(u, c)];
                    }
                }
            }
            assert!(sum.max_abs_diff(&r3) < 1e-12);
        }
    }

    #[test]
    fn r4_of_uniform_traffic() {
        let geo = g(2);
        let r1 = Matrix::from_fn(4, 4, |_, _| 1.0 / 16.0);
        let st = pipeline(&r1, &geo).unwrap();
        for v in 0..4 {
            assert_eq!(st.r4[v].len(), 2);
            for x in &st.r4[v] {
                assert!((x - 0.125).abs() < 1e-12);
            }
            assert!((st.r5[v] - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn r5_is_column_sum() {
        let geo = g(2);
        let r1 = sample_r1();
        let st = pipeline(&r1, &geo).unwrap();
        for (v, cs) in r1.col_sums().iter().enumerate() {
            assert!((st.r5[v] - cs).abs() < 1e-9);
        }
        assert!(pipeline(&Matrix::zeros(3, 3), &geo).is_err());
    }

    #[test]
    fn cb_rate_values() {
        let (a, s) = cb_rates(CbStress::AllToOneModule, &g(3));
        assert!((a - 1.0 / 9.0).abs() < 1e-15 && (s - 1.0 / 3.0).abs() < 1e-15);
        let (b, _) = cb_rates(CbStress::ModuleToModule, &g(3));
        assert!((b - 1.0 / 3.0).abs() < 1e-15);
        for p in [
            CbStress::AllToOneModule,
            CbStress::ModuleToModule,
            CbStress::SingleFlow,
        ] {
            assert_eq!(cb_rates(p, &g(1)), (1.0, 1.0));
        }
    }

    #[test]
    fn drift_of_idle_and_growing_queues() {
        let idle = StageSeries {
            initial: 0,
            occupancy: vec![0; 10],
            arrivals: vec![0; 10],
            departures: vec![0; 10],
        };
        let r = drift_check(&idle, 1, 5);
        assert_eq!(r.max_drift, 0);
        assert!(r.bounded);

        let growing = StageSeries {
            initial: 0,
            occupancy: (1..=100).collect(),
            arrivals: vec![2; 100],
            departures: vec![1; 100],
        };
        let r = drift_check(&growing, 1, 50);
        assert_eq!(r.max_drift, 100);
        assert!((r.slope - 1.0).abs() < 1e-9);
        assert!(!r.bounded);

        let mut broken = growing.clone();
        broken.occupancy[10] += 1;
        assert_eq!(drift_check(&broken, 1, 500).recursion_error, Some(10));
        assert_eq!(drift_check(&growing, 0, 500).service_violation, Some(0));
    }
}
