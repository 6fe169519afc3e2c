//! Physical constants (CODATA 2018 / SI 2019 exact values).

/// Reduced Planck constant ℏ (J·s). Exact since the 2019 SI redefinition.
pub const HBAR: f64 = 1.054_571_817e-34;

/// Elementary charge e (C). Exact since the 2019 SI redefinition.
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;

/// Atomic mass unit u (kg), CODATA 2018.
pub const ATOMIC_MASS_UNIT: f64 = 1.660_539_066_60e-27;

/// Electron mass (u), CODATA 2018.
pub const ELECTRON_MASS_AMU: f64 = 5.485_799_090_65e-4;

/// Atomic mass of ²⁵Mg (u), AME2020.
pub const MG25_ATOM_MASS_AMU: f64 = 24.985_836_966;

/// Ionic mass of ²⁵Mg⁺ (u): atomic mass minus one electron.
pub const MG25_ION_MASS_AMU: f64 = MG25_ATOM_MASS_AMU - ELECTRON_MASS_AMU;

/// Fixed bundle of the fundamental constants used at module boundaries.
///
/// Values are pinned to CODATA 2018 and cannot be modified after
/// construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysConstants {
    hbar: f64,
    elementary_charge: f64,
    atomic_mass_unit: f64,
}

impl PhysConstants {
    pub const fn codata2018() -> Self {
        Self {
            hbar: HBAR,
            elementary_charge: ELEMENTARY_CHARGE,
            atomic_mass_unit: ATOMIC_MASS_UNIT,
        }
    }

    /// ℏ (J·s)
    pub const fn hbar(&self) -> f64 {
        self.hbar
    }

    /// e (C)
    pub const fn elementary_charge(&self) -> f64 {
        self.elementary_charge
    }

    /// u (kg)
    pub const fn atomic_mass_unit(&self) -> f64 {
        self.atomic_mass_unit
    }
}

impl Default for PhysConstants {
    fn default() -> Self {
        Self::codata2018()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constants_strictly_positive() {
        let c = PhysConstants::default();
        assert!(c.hbar() > 0.0);
        assert!(c.elementary_charge() > 0.0);
        assert!(c.atomic_mass_unit() > 0.0);
    }

    #[test]
    fn mg25_ion_mass() {
        // 24.985836966 u - 0.000548579909 u
        assert!((MG25_ION_MASS_AMU - 24.985_288_386_091).abs() < 1e-9);
    }
}
