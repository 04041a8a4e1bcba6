//! Demand response of customers to posted prices.
//!
//! Own price weighs twice as much as the rival's. All functions are pure.

use crate::error::{Error, Result};

/// Own and rival price for one origin-destination pair and slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PricePair {
    own: f64,
    rival: f64,
    p_max: f64,
}

impl PricePair {
    pub fn new(own: f64, rival: f64, p_max: f64) -> Result<Self> {
        if !(p_max.is_finite() && p_max > 0.0) {
            return Err(Error::InvalidArgument(format!("p_max must be positive, got {p_max}")));
        }
        for (name, p) in [("own", own), ("rival", rival)] {
            if !(0.0..=p_max).contains(&p) {
                return Err(Error::InvalidArgument(format!("{name} price {p} outside [0, {p_max}]")));
            }
        }
        Ok(Self { own, rival, p_max })
    }

    pub fn own(&self) -> f64 {
        self.own
    }

    pub fn rival(&self) -> f64 {
        self.rival
    }

    pub fn p_max(&self) -> f64 {
        self.p_max
    }

    pub fn swapped(&self) -> Self {
        Self {
            own: self.rival,
            rival: self.own,
            p_max: self.p_max,
        }
    }
}

fn check_base(base: f64) -> Result<()> {
    if base.is_finite() && base >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("base demand must be >= 0, got {base}")))
    }
}

/// Affine share `1/2 - p_i/p_max + p_k/(2 p_max)` without the base factor.
#[inline]
pub fn share(own: f64, rival: f64, p_max: f64) -> f64 {
    0.5 - own / p_max + rival / (2.0 * p_max)
}

/// Unclipped demand for one RSP; negative when the rival is much cheaper.
pub fn linear_demand(base: f64, prices: PricePair) -> Result<f64> {
    check_base(base)?;
    Ok(base * share(prices.own, prices.rival, prices.p_max))
}

/// Demand seen by one RSP in the duopoly: the linear demand clipped at zero.
pub fn duopoly_demand(base: f64, prices: PricePair) -> Result<f64> {
    Ok(linear_demand(base, prices)?.max(0.0))
}

/// Own price at and above which the duopoly demand is zero.
pub fn zero_demand_threshold(rival: f64, p_max: f64) -> f64 {
    p_max / 2.0 + rival / 2.0
}

/// Lowest price an RSP with no demand can post: the price that deters the
/// rival the most while keeping its own demand at zero.
pub fn deterrence_price(rival: f64, p_max: f64) -> f64 {
    zero_demand_threshold(rival, p_max)
}

/// Customers served by both RSPs together. Only meaningful while both
/// clipped demands are positive.
pub fn total_served(base: f64, prices: PricePair) -> Result<f64> {
    check_base(base)?;
    let mine = duopoly_demand(base, prices)?;
    let theirs = duopoly_demand(base, prices.swapped())?;
    if mine <= 0.0 || theirs <= 0.0 {
        return Err(Error::InvalidArgument(
            "total served demand requires both RSPs to have positive demand".into(),
        ));
    }
    Ok(base * (1.0 - prices.own / (2.0 * prices.p_max) - prices.rival / (2.0 * prices.p_max)))
}

/// Demand of a single RSP alone in the market.
pub fn monopoly_demand(base: f64, price: f64, p_max: f64) -> Result<f64> {
    check_base(base)?;
    if !(p_max.is_finite() && p_max > 0.0) {
        return Err(Error::InvalidArgument(format!("p_max must be positive, got {p_max}")));
    }
    if !(0.0..=p_max).contains(&price) {
        return Err(Error::InvalidArgument(format!("price {price} outside [0, {p_max}]")));
    }
    Ok(base * (1.0 - price / p_max))
}
