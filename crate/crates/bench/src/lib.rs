//! Fixtures shared by the benchmarks.

use zjet_core::lojasiewicz::{estimate_condition, EstimateConfig};
use zjet_core::trivializer::{calibrate_constants, CalibrationConfig, Deformation, VectorField};
use zjet_core::{GermPair, PolyGermMap, Result, ZSpec};

/// `f = x^2`, `f1 = x^2 + x^3` on R^2 with `Z = {x = 0}`, calibrated and ready to flow.
pub fn cubic_field() -> Result<VectorField> {
    let f = PolyGermMap::scalar(2, 2, &[(1, &[2, 0])])?;
    let f1 = PolyGermMap::scalar(2, 2, &[(1, &[2, 0]), (1, &[3, 0])])?;
    let pair = GermPair::new(f, f1, ZSpec::subspace(2, vec![0])?)?;
    let def = Deformation::new(&pair, 0)?;
    let report = estimate_condition(&pair.f, &pair.z, 2, &EstimateConfig::dyadic(0.5, 4, 512, 0))?;
    let consts = calibrate_constants(&def, &pair.z, &report, &CalibrationConfig::default())?;
    VectorField::new(def, pair.z.clone(), consts)
}

/// `x^2 y^2` against the coordinate cross, the classical failure of the estimate.
pub fn cross_germ() -> Result<(PolyGermMap, ZSpec)> {
    Ok((PolyGermMap::scalar(2, 4, &[(1, &[2, 2])])?, ZSpec::hyperplane_union(2, vec![0, 1])?))
}
