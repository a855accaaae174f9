//! Slot-synchronous arrival generators and their declared rate matrices.
//!
//! All generators draw from one ChaCha8 stream seeded from the traffic
//! specification, consuming it input by input in ascending order each slot,
//! so a specification always yields the same arrival sequence.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::topology::SwitchGeometry;

/// Tolerance on row and column sums in [`check_admissible`].
pub const ADMISSIBLE_TOL: f64 = 1e-9;

/// How stress pattern (a) spreads a source's cells over the OM's ports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Spread {
    #[default]
    Uniform,
    RoundRobin,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pattern {
    BernoulliUniform,
    /// ON-OFF bursts with mean length `burst_mean` cells.
    Bursty {
        burst_mean: f64,
    },
    /// Fraction `omega` of each input's load goes to the port with the same
    /// index.
    Unbalanced {
        omega: f64,
    },
    /// Every input sends only to output `port`.
    Hotspot {
        port: usize,
    },
    /// Inputs `IP(i,i)` send to the ports of `OM(0)`, `ρ/N` per flow.
    StressA {
        spread: Spread,
    },
    /// Every IP of `IM(i)` sends to every OP of `OM(i)`, `ρ/k` per flow.
    StressB,
}

impl Pattern {
    pub fn name(&self) -> &'static str {
        match self {
            Pattern::BernoulliUniform => "bernoulli_uniform",
            Pattern::Bursty { .. } => "bursty",
            Pattern::Unbalanced { .. } => "unbalanced",
            Pattern::Hotspot { .. } => "hotspot",
            Pattern::StressA { .. } => "stress_a",
            Pattern::StressB => "stress_b",
        }
    }

    /// The pattern's parameter as printed in result rows.
    pub fn param(&self) -> String {
        match self {
            Pattern::Bursty { burst_mean } => format!("{burst_mean}"),
            Pattern::Unbalanced { omega } => format!("{omega}"),
            Pattern::Hotspot { port } => format!("{port}"),
            _ => String::new(),
        }
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrafficSpec {
    pub pattern: Pattern,
    pub load: f64,
    pub seed: u64,
}

impl TrafficSpec {
    pub fn new(pattern: Pattern, load: f64, seed: u64) -> Self {
        Self {
            pattern,
            load,
            seed,
        }
    }

    /// Checks parameter ranges. Loads above 1 are accepted only where the
    /// per-input rate stays a probability (hot-spot overload runs).
    pub fn validate(&self, geometry: &SwitchGeometry) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidTraffic(msg));
        if !(self.load.is_finite() && self.load >= 0.0) {
            return bad(format!(
                "load {} must be finite and non-negative",
                self.load
            ));
        }
        match self.pattern {
            Pattern::Bursty { burst_mean } if !(burst_mean.is_finite() && burst_mean >= 1.0) => {
                return bad(format!("burst mean {burst_mean} must be at least 1"));
            }
            Pattern::Unbalanced { omega } if !(0.0..=1.0).contains(&omega) => {
                return bad(format!("omega {omega} outside [0, 1]"));
            }
            Pattern::Hotspot { port } if port >= geometry.ports() => {
                return bad(format!(
                    "hot-spot port {port} outside [0, {})",
                    geometry.ports()
                ));
            }
            _ => {}
        }
        let rates = self.rate_matrix(geometry);
        if let Some(u) = rates
            .row_sums()
            .iter()
            .position(|&s| s > 1.0 + ADMISSIBLE_TOL)
        {
            return bad(format!("input {u} would need more than one cell per slot"));
        }
        Ok(())
    }

    /// Long-run `λ_{u,v}` the generator converges to.
    pub fn rate_matrix(&self, geometry: &SwitchGeometry) -> Matrix {
        let rho = self.load;
        let n = geometry.ports();
        match self.pattern {
            Pattern::BernoulliUniform | Pattern::Bursty { .. } => {
                rate_matrix_uniform(rho, geometry)
            }
            Pattern::Unbalanced { omega } => rate_matrix_unbalanced(rho, omega, geometry),
            Pattern::Hotspot { port } => rate_matrix_hotspot(rho, port, geometry),
            Pattern::StressA { .. } => {
                let (k, m) = (geometry.k(), geometry.m());
                // 1/N per flow at full load, so each source sends 1/k in all.
                Matrix::from_fn(n, n, |u, v| {
                    let source = u / k == u % k;
                    if source && v < m {
                        rho / n as f64
                    } else {
                        0.0
                    }
                })
            }
            Pattern::StressB => {
                let (k, m) = (geometry.k(), geometry.m());
                Matrix::from_fn(
                    n,
                    n,
                    |u, v| {
                        if u / k == v / m {
                            rho / m as f64
                        } else {
                            0.0
                        }
                    },
                )
            }
        }
    }

    pub fn generator(&self, geometry: &SwitchGeometry) -> Result<TrafficGenerator> {
        self.validate(geometry)?;
        let rng = ChaCha8Rng::seed_from_u64(self.seed);
        let n = geometry.ports();
        let kind = match self.pattern {
            Pattern::Bursty { burst_mean } => {
                GenKind::Bursty(Bursty::new(n, self.load, burst_mean)?)
            }
            Pattern::StressA {
                spread: Spread::RoundRobin,
            } => {
                let k = geometry.k();
                let m = geometry.m();
                let sources = (0..geometry.n().min(k)).map(|i| i * k + i).collect();
                GenKind::RoundRobin {
                    sources,
                    prob: self.load * m as f64 / n as f64,
                    targets: m,
                    next: vec![0; n],
                }
            }
            _ => GenKind::Rates(RateDriven::new(&self.rate_matrix(geometry))),
        };
        Ok(TrafficGenerator { rng, kind })
    }
}

pub fn rate_matrix_uniform(rho: f64, geometry: &SwitchGeometry) -> Matrix {
    let n = geometry.ports();
    Matrix::from_fn(n, n, |_, _| rho / n as f64)
}

/// `ρ(ω + (1-ω)/N)` on the diagonal and `ρ(1-ω)/N` elsewhere.
pub fn rate_matrix_unbalanced(rho: f64, omega: f64, geometry: &SwitchGeometry) -> Matrix {
    let n = geometry.ports();
    let off = rho * (1.0 - omega) / n as f64;
    Matrix::from_fn(n, n, |u, v| if u == v { rho * omega + off } else { off })
}

/// Column `h` at `ρ/N`, zero elsewhere.
pub fn rate_matrix_hotspot(rho: f64, h: usize, geometry: &SwitchGeometry) -> Matrix {
    let n = geometry.ports();
    Matrix::from_fn(n, n, |_, v| if v == h { rho / n as f64 } else { 0.0 })
}

/// Whether every row and column sum is at most 1.
pub fn check_admissible(rates: &Matrix) -> bool {
    let within = |s: &f64| *s <= 1.0 + ADMISSIBLE_TOL;
    rates.as_slice().iter().all(|&x| x >= 0.0)
        && rates.row_sums().iter().all(within)
        && rates.col_sums().iter().all(within)
}

/// Per-input Bernoulli draw against the row sum, then a destination by
/// inverse CDF over the row.
#[derive(Debug, Clone)]
struct RateDriven {
    totals: Vec<f64>,
    cdf: Vec<Vec<f64>>,
}

impl RateDriven {
    fn new(rates: &Matrix) -> Self {
        let cdf: Vec<Vec<f64>> = (0..rates.rows())
            .map(|u| {
                let mut acc = 0.0;
                rates
                    .row(u)
                    .iter()
                    .map(|x| {
                        acc += x;
                        acc
                    })
                    .collect()
            })
            .collect();
        let totals = cdf
            .iter()
            .map(|c| c.last().copied().unwrap_or(0.0))
            .collect();
        Self { totals, cdf }
    }
}

#[derive(Debug, Clone, Copy)]
struct SourceState {
    /// Cells left in the current burst, the current one included.
    on_left: u64,
    off_left: u64,
    dest: usize,
}

#[derive(Debug, Clone)]
struct Bursty {
    n: usize,
    on_len: Geometric,
    off_len: Option<Geometric>,
    state: Vec<SourceState>,
    started: bool,
}

impl Bursty {
    fn new(n: usize, rho: f64, burst_mean: f64) -> Result<Self> {
        let geo = |p: f64| Geometric::new(p).map_err(|e| Error::InvalidTraffic(e.to_string()));
        let on_len = geo(1.0 / burst_mean)?;
        // OFF mean l(1-ρ)/ρ on {0, 1, ...} makes the ON fraction exactly ρ.
        let off_len = if rho > 0.0 {
            let mu = burst_mean * (1.0 - rho) / rho;
            Some(geo(1.0 / (1.0 + mu))?)
        } else {
            None
        };
        if rho > 1.0 {
            return Err(Error::InvalidTraffic(format!("bursty load {rho} above 1")));
        }
        let state = vec![
            SourceState {
                on_left: 0,
                off_left: 0,
                dest: 0,
            };
            n
        ];
        Ok(Self {
            n,
            on_len,
            off_len,
            state,
            started: false,
        })
    }
}

#[derive(Debug, Clone)]
enum GenKind {
    Rates(RateDriven),
    Bursty(Bursty),
    RoundRobin {
        sources: Vec<usize>,
        prob: f64,
        targets: usize,
        next: Vec<usize>,
    },
}

#[derive(Debug, Clone)]
pub struct TrafficGenerator {
    rng: ChaCha8Rng,
    kind: GenKind,
}

impl TrafficGenerator {
    /// Appends this slot's arrivals as `(input, output)` pairs, in input
    /// order, to `out` (which is cleared first).
    pub fn arrivals(&mut self, out: &mut Vec<(usize, usize)>) {
        out.clear();
        let rng = &mut self.rng;
        match &mut self.kind {
            GenKind::Rates(r) => {
                for (u, (&total, cdf)) in r.totals.iter().zip(&r.cdf).enumerate() {
                    if total <= 0.0 {
                        continue;
                    }
                    let x: f64 = rng.gen();
                    if x < total {
                        let v = cdf.partition_point(|&c| c <= x).min(cdf.len() - 1);
                        out.push((u, v));
                    }
                }
            }
            GenKind::Bursty(b) => {
                let Some(off_len) = b.off_len else { return };
                if !b.started {
                    for s in &mut b.state {
                        s.off_left = off_len.sample(rng);
                    }
                    b.started = true;
                }
                for (u, s) in b.state.iter_mut().enumerate() {
                    if s.on_left == 0 {
                        if s.off_left > 0 {
                            s.off_left -= 1;
                            continue;
                        }
                        s.on_left = 1 + b.on_len.sample(rng);
                        s.dest = rng.gen_range(0..b.n);
                    }
                    out.push((u, s.dest));
                    s.on_left -= 1;
                    if s.on_left == 0 {
                        s.off_left = off_len.sample(rng);
                    }
                }
            }
            GenKind::RoundRobin {
                sources,
                prob,
                targets,
                next,
            } => {
                for &u in sources.iter() {
                    if rng.gen::<f64>() < *prob {
                        out.push((u, next[u]));
                        next[u] = (next[u] + 1) % *targets;
                    }
                }
            }
        }
    }
}

/// Long-run empirical rate matrix of a generator over `slots` slots.
pub fn empirical_rates(
    gen: &mut TrafficGenerator,
    geometry: &SwitchGeometry,
    slots: u64,
) -> Matrix {
    let n = geometry.ports();
    let mut counts = Matrix::zeros(n, n);
    let mut buf = Vec::new();
    for _ in 0..slots {
        gen.arrivals(&mut buf);
        for &(u, v) in &buf {
            counts[(u, v)] += 1.0;
        }
    }
    Matrix::from_fn(n, n, |u, v| counts[(u, v)] / slots as f64)
}
