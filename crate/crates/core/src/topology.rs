//! Addressing and index arithmetic for the four-stage fabric.
//!
//! Ports are addressed as `(module, port)` pairs and flattened to a single
//! index in `[0, N)`: inputs as `u = i*k + s`, outputs as `v = j*m + d`, and
//! CIM output links as `r*k + p`. All indices are zero-based.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Switch dimensions. Only the symmetric `n = k = m` configuration is
/// supported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SwitchGeometry {
    n: usize,
    k: usize,
    m: usize,
}

impl SwitchGeometry {
    pub fn new(n: usize, k: usize, m: usize) -> Result<Self> {
        if n == 0 || k == 0 || m == 0 {
            return Err(Error::InvalidGeometry(format!(
                "n, k and m must all be at least 1 (got n={n}, k={k}, m={m})"
            )));
        }
        if n != k || k != m {
            return Err(Error::InvalidGeometry(format!(
                "only symmetric geometries n = k = m are supported (got n={n}, k={k}, m={m})"
            )));
        }
        Ok(Self { n, k, m })
    }

    /// The symmetric geometry with `k` modules per stage and `N = k²` ports.
    pub fn symmetric(k: usize) -> Result<Self> {
        Self::new(k, k, k)
    }

    /// Ports per IM / OM.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of IMs / OMs; also the configuration period in slots.
    pub fn k(&self) -> usize {
        self.k
    }

    /// Number of CIMs / COMs.
    pub fn m(&self) -> usize {
        self.m
    }

    /// Total number of input (and output) ports.
    pub fn ports(&self) -> usize {
        self.n * self.k
    }

    /// Number of CIM output links (`L_CIM`), one VOMQ set each.
    pub fn links(&self) -> usize {
        self.m * self.k
    }

    pub fn input(&self, flat: usize) -> Result<PortAddress> {
        check("input port", flat, self.ports())?;
        Ok(PortAddress::new(flat / self.k, flat % self.k))
    }

    pub fn output(&self, flat: usize) -> Result<PortAddress> {
        check("output port", flat, self.ports())?;
        Ok(PortAddress::new(flat / self.m, flat % self.m))
    }

    pub fn link(&self, flat: usize) -> Result<LinkAddress> {
        check("CIM link", flat, self.links())?;
        Ok(LinkAddress::new(flat / self.k, flat % self.k))
    }
}

/// `IP(i, s)` or `OP(j, d)`: module index and port within the module.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PortAddress {
    pub module: usize,
    pub port: usize,
}

impl PortAddress {
    pub const fn new(module: usize, port: usize) -> Self {
        Self { module, port }
    }

    pub fn validate(&self, geometry: &SwitchGeometry) -> Result<()> {
        check("module", self.module, geometry.k())?;
        check("port", self.port, geometry.n())
    }
}

/// `L_CIM(r, p)`: output `p` of `CIM(r)`, equivalently input `I_C(r, p)` of
/// `COM(r)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LinkAddress {
    pub cim: usize,
    pub port: usize,
}

impl LinkAddress {
    pub const fn new(cim: usize, port: usize) -> Self {
        Self { cim, port }
    }

    pub fn validate(&self, geometry: &SwitchGeometry) -> Result<()> {
        check("CIM", self.cim, geometry.m())?;
        check("CIM port", self.port, geometry.k())
    }
}

/// `u = i*k + s`
pub fn flat_input_index(addr: PortAddress, geometry: &SwitchGeometry) -> Result<usize> {
    addr.validate(geometry)?;
    Ok(addr.module * geometry.k() + addr.port)
}

/// `v = j*m + d`
pub fn flat_output_index(addr: PortAddress, geometry: &SwitchGeometry) -> Result<usize> {
    addr.validate(geometry)?;
    Ok(addr.module * geometry.m() + addr.port)
}

/// `υ = r*k + p`
pub fn link_flat_index(link: LinkAddress, geometry: &SwitchGeometry) -> Result<usize> {
    link.validate(geometry)?;
    Ok(link.cim * geometry.k() + link.port)
}

fn check(what: &'static str, index: usize, bound: usize) -> Result<()> {
    if index < bound {
        Ok(())
    } else {
        Err(Error::OutOfRange { what, index, bound })
    }
}
