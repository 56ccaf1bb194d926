use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Boundary prices of the gate price system, JPY/kg.
///
/// Below the threshold `B` a specific duty `D` applies; between `B` and the
/// gate price `G` the levy tops the price up to the floor `F = D + B`; at or
/// above `G` the larger of `r * c` and `F - c` is charged.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpsBoundary {
    pub gate: f64,
    pub threshold: f64,
    pub floor: f64,
    pub specific_duty: f64,
    pub ad_valorem: f64,
    pub carcass_scaled: bool,
}

impl GpsBoundary {
    pub fn new(gate: f64, threshold: f64, floor: f64, specific_duty: f64, ad_valorem: f64) -> Result<Self> {
        let b = Self {
            gate,
            threshold,
            floor,
            specific_duty,
            ad_valorem,
            carcass_scaled: false,
        };
        b.validate()?;
        Ok(b)
    }

    /// Build from `G`, `F`, `D`, `r`, deriving `B = F - D`.
    pub fn from_floor(gate: f64, floor: f64, specific_duty: f64, ad_valorem: f64) -> Result<Self> {
        Self::new(gate, floor - specific_duty, floor, specific_duty, ad_valorem)
    }

    /// Non-carcass pork boundary in force since JFY2000:
    /// G = 524, F = 546.35, D = 482, r = 4.3%.
    pub fn pork_jfy2000() -> Self {
        Self::from_floor(524.0, 546.35, 482.0, 0.043).expect("valid constant boundary")
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [self.gate, self.threshold, self.floor, self.specific_duty, self.ad_valorem];
        if fields.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("GPS boundary values must be finite".into()));
        }
        if (self.floor - (self.specific_duty + self.threshold)).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "GPS floor {} != specific duty {} + threshold {}",
                self.floor, self.specific_duty, self.threshold
            )));
        }
        if !(0.0 < self.threshold && self.threshold < self.gate) {
            return Err(Error::InvalidParameter(format!(
                "GPS threshold {} must lie in (0, gate {})",
                self.threshold, self.gate
            )));
        }
        if !(0.0..1.0).contains(&self.ad_valorem) {
            return Err(Error::InvalidParameter(format!(
                "GPS ad valorem rate {} outside [0, 1)",
                self.ad_valorem
            )));
        }
        Ok(())
    }
}

/// Levy per kg on an import priced at `cif` JPY/kg.
pub fn gps_duty(cif: f64, b: &GpsBoundary) -> f64 {
    if cif < b.threshold {
        b.specific_duty
    } else if cif < b.gate {
        b.floor - cif
    } else {
        (b.ad_valorem * cif).max(b.floor - cif)
    }
}

/// Carcass items carry 3/4 of the boundary values; the rate is unchanged.
pub fn scale_for_carcass(b: &GpsBoundary) -> Result<GpsBoundary> {
    if b.carcass_scaled {
        return Err(Error::AlreadyScaled);
    }
    const MEAT_CONTENT: f64 = 0.75;
    Ok(GpsBoundary {
        gate: b.gate * MEAT_CONTENT,
        threshold: b.threshold * MEAT_CONTENT,
        floor: b.floor * MEAT_CONTENT,
        specific_duty: b.specific_duty * MEAT_CONTENT,
        ad_valorem: b.ad_valorem,
        carcass_scaled: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn baseline_arms() {
        let b = GpsBoundary::pork_jfy2000();
        assert!((b.threshold - 64.35).abs() < 1e-9);
        assert!((gps_duty(400.0, &b) - 146.35).abs() < 1e-9);
        assert!((400.0 + gps_duty(400.0, &b) - 546.35).abs() < 1e-9);
        assert!((gps_duty(60.0, &b) - 482.0).abs() < 1e-9);
        assert!((60.0 + gps_duty(60.0, &b) - 542.0).abs() < 1e-9);
        // both arms evaluated: 0.043 * 600 = 25.8 and 546.35 - 600 < 0
        assert!((gps_duty(600.0, &b) - 25.8).abs() < 1e-9);
    }

    #[test]
    fn carcass_scaling() {
        let s = scale_for_carcass(&GpsBoundary::pork_jfy2000()).unwrap();
        assert!((s.gate - 393.0).abs() < 1e-9);
        assert!((s.floor - 409.7625).abs() < 1e-9);
        assert!((s.specific_duty - 361.5).abs() < 1e-9);
        assert!((s.threshold - 48.2625).abs() < 1e-9);
        assert!((s.floor - (s.specific_duty + s.threshold)).abs() < 1e-9);
        assert_eq!(s.ad_valorem, 0.043);
        assert!(matches!(scale_for_carcass(&s), Err(Error::AlreadyScaled)));
    }

    #[test]
    fn invalid_boundaries_rejected() {
        assert!(GpsBoundary::new(524.0, 64.0, 546.35, 482.0, 0.043).is_err());
        assert!(GpsBoundary::from_floor(50.0, 546.35, 482.0, 0.043).is_err());
        assert!(GpsBoundary::from_floor(524.0, 546.35, 482.0, 1.0).is_err());
    }

    /// Boundary with (1 + r) G = F, the case where the levy is continuous at G.
    fn continuous_boundary(gate: f64, r: f64, d_frac: f64) -> GpsBoundary {
        let floor = (1.0 + r) * gate;
        GpsBoundary::from_floor(gate, floor, floor * d_frac, r).unwrap()
    }

    proptest! {
        #[test]
        fn continuous_at_threshold_and_gate(gate in 100.0..1000.0f64, r in 0.001..0.3f64, d_frac in 0.5..0.99f64) {
            let b = continuous_boundary(gate, r, d_frac);
            let eps = 1e-9 * gate;
            prop_assert!((gps_duty(b.threshold - eps, &b) - gps_duty(b.threshold, &b)).abs() < 1e-6);
            prop_assert!((gps_duty(b.gate - eps, &b) - gps_duty(b.gate, &b)).abs() < 1e-6);
            prop_assert!((b.gate - eps + gps_duty(b.gate - eps, &b) - b.floor).abs() < 1e-6);
        }

        #[test]
        fn post_tariff_price_floor(c in 1.0..2000.0f64, gate in 100.0..1000.0f64, r in 0.0..0.3f64, d_frac in 0.5..0.99f64) {
            let b = continuous_boundary(gate, r, d_frac);
            let post = c + gps_duty(c, &b);
            if b.threshold <= c && c < b.gate {
                prop_assert!((post - b.floor).abs() < 1e-9);
            } else if c >= b.gate {
                prop_assert!(post >= b.floor - 1e-9);
            }
            let post_up = (c * 1.01) + gps_duty(c * 1.01, &b);
            prop_assert!(post_up >= post - 1e-9);
        }
    }
}
