use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::AccelError;
use crate::repro::ReferenceData;
use crate::search_space::OpCounts;

/// Energy per million operations, in mJ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyCoeffs {
    pub e_mult: f64,
    pub e_shift: f64,
    pub e_add: f64,
}

impl EnergyCoeffs {
    pub fn energy(&self, ops: &OpCounts) -> f64 {
        self.e_mult * ops.mults + self.e_shift * ops.shifts + self.e_add * ops.adds
    }
}

impl Default for EnergyCoeffs {
    /// Fit on the bundled multiplication-based and multiplication-free rows.
    fn default() -> Self {
        static FIT: OnceLock<EnergyCoeffs> = OnceLock::new();
        *FIT.get_or_init(|| {
            let data = ReferenceData::bundled();
            fit_energy_coeffs(&data.baseline_energy_rows()).expect("bundled rows span all three op kinds")
        })
    }
}

/// Least-squares fit of `energy = e_mult*mults + e_shift*shifts + e_add*adds`.
pub fn fit_energy_coeffs(rows: &[(OpCounts, f64)]) -> Result<EnergyCoeffs, AccelError> {
    if rows.len() < 3 {
        return Err(AccelError::SingularSystem);
    }
    let a = DMatrix::from_fn(rows.len(), 3, |i, j| {
        let o = &rows[i].0;
        [o.mults, o.shifts, o.adds][j]
    });
    let b = DVector::from_iterator(rows.len(), rows.iter().map(|r| r.1));
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    if svd.singular_values.min() <= smax * 1e-10 {
        return Err(AccelError::SingularSystem);
    }
    let x = svd.solve(&b, smax * 1e-12).map_err(|_| AccelError::SingularSystem)?;
    Ok(EnergyCoeffs {
        e_mult: x[0],
        e_shift: x[1],
        e_add: x[2],
    })
}
