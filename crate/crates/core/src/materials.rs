//! Conductivity and (nonlinear) reluctivity laws.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::mesh::{Mesh2D, RegionKind, RegionTag};
use crate::{Error, Result, NU0};

/// Reluctivity as a function of the squared flux density `B²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ReluctivityLaw {
    Linear { nu: f64 },
    /// `nu(B²) = k1 + k2 * exp(k3 * B²)`.
    Brauer { k1: f64, k2: f64, k3: f64 },
}

impl ReluctivityLaw {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ReluctivityLaw::Linear { nu } if !(nu > 0.0 && nu.is_finite()) => {
                Err(Error::Material(format!("linear reluctivity must be positive, got {nu}")))
            }
            ReluctivityLaw::Brauer { k1, k2, k3 }
                if !(k1 > 0.0 && k2 >= 0.0 && k3 >= 0.0)
                    || !(k1.is_finite() && k2.is_finite() && k3.is_finite()) =>
            {
                Err(Error::Material(format!(
                    "Brauer law needs k1 > 0, k2 >= 0, k3 >= 0, got ({k1}, {k2}, {k3})"
                )))
            }
            _ => Ok(()),
        }
    }

    pub fn is_linear(&self) -> bool {
        match *self {
            ReluctivityLaw::Linear { .. } => true,
            ReluctivityLaw::Brauer { k2, k3, .. } => k2 == 0.0 || k3 == 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaterialModel {
    /// Electrical conductivity in S/m.
    pub conductivity: f64,
    pub law: ReluctivityLaw,
}

impl MaterialModel {
    /// Nonconducting vacuum-like material used for air and coils.
    pub const AIR: MaterialModel = MaterialModel {
        conductivity: 0.0,
        law: ReluctivityLaw::Linear { nu: NU0 },
    };

    pub fn validate(&self) -> Result<()> {
        if !(self.conductivity >= 0.0 && self.conductivity.is_finite()) {
            return Err(Error::Material(format!(
                "conductivity must be nonnegative, got {}",
                self.conductivity
            )));
        }
        self.law.validate()
    }

    pub fn nu(&self, b2: f64) -> Result<f64> {
        nu(&self.law, b2)
    }

    pub fn dnu_db2(&self, b2: f64) -> Result<f64> {
        dnu_db2(&self.law, b2)
    }
}

/// Reluctivity in m/H at squared flux density `b2` (T²).
pub fn nu(law: &ReluctivityLaw, b2: f64) -> Result<f64> {
    check_b2(b2)?;
    Ok(match *law {
        ReluctivityLaw::Linear { nu } => nu,
        ReluctivityLaw::Brauer { k1, k2, k3 } => k1 + k2 * (k3 * b2).exp(),
    })
}

/// Derivative of the reluctivity with respect to `B²`.
pub fn dnu_db2(law: &ReluctivityLaw, b2: f64) -> Result<f64> {
    check_b2(b2)?;
    Ok(match *law {
        ReluctivityLaw::Linear { .. } => 0.0,
        ReluctivityLaw::Brauer { k2, k3, .. } => k2 * k3 * (k3 * b2).exp(),
    })
}

fn check_b2(b2: f64) -> Result<()> {
    if b2 >= 0.0 {
        Ok(())
    } else {
        Err(Error::Material(format!("B^2 must be nonnegative, got {b2}")))
    }
}

/// Region-to-material map. Air and coils share one nonconducting material.
#[derive(Debug, Clone, PartialEq)]
pub struct MaterialTable {
    pub air: MaterialModel,
    pub conductors: BTreeMap<u32, MaterialModel>,
}

impl Default for MaterialTable {
    fn default() -> Self {
        Self {
            air: MaterialModel::AIR,
            conductors: BTreeMap::new(),
        }
    }
}

impl MaterialTable {
    pub fn with_conductor(mut self, id: u32, model: MaterialModel) -> Self {
        self.conductors.insert(id, model);
        self
    }

    pub fn lookup(&self, tag: &RegionTag) -> Result<&MaterialModel> {
        match tag.kind {
            RegionKind::Conductor(id) => self
                .conductors
                .get(&id)
                .ok_or_else(|| Error::Material(format!("no material defined for conductor:{id}"))),
            RegionKind::Air | RegionKind::Coil(_) => Ok(&self.air),
        }
    }

    /// Checks the table against a mesh: every conductor tag has a material,
    /// conductors conduct, and the nonconducting material is linear with
    /// zero conductivity.
    pub fn validate_for(&self, mesh: &Mesh2D) -> Result<()> {
        self.air.validate()?;
        if self.air.conductivity != 0.0 {
            return Err(Error::Material("air and coil regions must have zero conductivity".into()));
        }
        if !self.air.law.is_linear() {
            return Err(Error::Material(
                "nonlinear reluctivity is only supported in conducting regions".into(),
            ));
        }
        for (id, m) in &self.conductors {
            m.validate()
                .map_err(|e| Error::Material(format!("conductor:{id}: {e}")))?;
            if !(m.conductivity > 0.0) {
                return Err(Error::Material(format!(
                    "conductor:{id} must have positive conductivity"
                )));
            }
        }
        for tag in mesh.regions() {
            self.lookup(tag)?;
        }
        Ok(())
    }

    pub fn is_linear(&self) -> bool {
        self.air.law.is_linear() && self.conductors.values().all(|m| m.law.is_linear())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const STEEL: ReluctivityLaw = ReluctivityLaw::Brauer {
        k1: 49.4,
        k2: 1.46,
        k3: 520.6,
    };

    #[test]
    fn linear_is_constant() {
        let law = ReluctivityLaw::Linear { nu: 100.0 };
        assert_eq!(nu(&law, 5.0).unwrap(), 100.0);
        assert_eq!(dnu_db2(&law, 3.0).unwrap(), 0.0);
    }

    #[test]
    fn brauer_at_zero() {
        let law = ReluctivityLaw::Brauer { k1: 3.0, k2: 0.25, k3: 7.0 };
        assert_eq!(nu(&law, 0.0).unwrap(), 3.25);
    }

    #[test]
    fn brauer_default_parameters() {
        let expected = 49.4 + 1.46 * 520.6_f64.exp();
        let got = nu(&STEEL, 1.0).unwrap();
        assert!(((got - expected) / expected).abs() < 1e-15);
        assert!(got.is_finite());
    }

    #[test]
    fn degenerate_brauer_has_zero_slope() {
        let law = ReluctivityLaw::Brauer { k1: 10.0, k2: 0.0, k3: 4.0 };
        for b2 in [0.0, 0.5, 3.0] {
            assert_eq!(dnu_db2(&law, b2).unwrap(), 0.0);
        }
        assert!(law.is_linear());
    }

    #[test]
    fn slope_matches_central_difference() {
        let law = ReluctivityLaw::Brauer { k1: 795.0, k2: 1.0, k3: 2.3 };
        for b2 in [0.0, 0.3, 1.0, 2.5, 4.0] {
            let d = 1e-6 * f64::max(1.0, b2);
            // one-sided at the origin since nu is undefined for b2 < 0
            let fd = if b2 < d {
                (nu(&law, b2 + d).unwrap() - nu(&law, b2).unwrap()) / d
            } else {
                (nu(&law, b2 + d).unwrap() - nu(&law, b2 - d).unwrap()) / (2.0 * d)
            };
            let exact = dnu_db2(&law, b2).unwrap();
            let tol = if b2 < d { 1e-5 } else { 1e-6 };
            assert!(((fd - exact) / exact).abs() < tol, "b2={b2}: fd={fd}, exact={exact}");
        }
    }

    #[test]
    fn rejects_negative_b2() {
        assert!(nu(&STEEL, -1e-3).is_err());
        assert!(dnu_db2(&STEEL, -1.0).is_err());
    }

    #[test]
    fn validation() {
        assert!(ReluctivityLaw::Linear { nu: 0.0 }.validate().is_err());
        assert!(ReluctivityLaw::Brauer { k1: 0.0, k2: 1.0, k3: 1.0 }.validate().is_err());
        assert!(ReluctivityLaw::Brauer { k1: 1.0, k2: -1.0, k3: 1.0 }.validate().is_err());
        assert!(STEEL.validate().is_ok());
        let bad = MaterialModel { conductivity: -1.0, law: STEEL };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn nonlinear_air_rejected() {
        let mesh = crate::mesh::generate_rect_mesh(1.0, 1.0, 2, 2, |_| RegionTag::AIR).unwrap();
        let mut table = MaterialTable::default();
        table.air.law = STEEL;
        assert!(table.validate_for(&mesh).is_err());
    }

    #[test]
    fn missing_conductor_material() {
        let mesh =
            crate::mesh::generate_rect_mesh(1.0, 1.0, 2, 2, |_| RegionTag::conductor(7)).unwrap();
        let err = MaterialTable::default().validate_for(&mesh).unwrap_err();
        assert!(err.to_string().contains("conductor:7"));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn brauer_bounded_below_and_monotone(
                k1 in 1e-3f64..1e4, k2 in 0.0f64..10.0, k3 in 0.0f64..10.0, b2 in 0.0f64..9.0
            ) {
                let law = ReluctivityLaw::Brauer { k1, k2, k3 };
                prop_assert!(nu(&law, b2).unwrap() >= k1);
                prop_assert!(dnu_db2(&law, b2).unwrap() >= 0.0);
            }
        }
    }
}
