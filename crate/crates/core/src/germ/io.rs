use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{Germ, PolyGermMap, Poly, Term, ZSpec, ZSpecDef};
use crate::error::{Error, Result};

/// On-disk germ definition.
///
/// ```json
/// {"n": 2, "m": 1, "k": 2,
///  "components": [[{"exponents": [2, 0], "coeff": "1"}]],
///  "z": {"analytic": {"set": "subspace", "coords": [0]}}}
/// ```
///
/// Rational coefficients are strings and round-trip exactly; numbers are read as doubles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GermFile {
    pub n: usize,
    pub m: usize,
    pub k: u32,
    pub components: Vec<Vec<Term>>,
    #[serde(default)]
    pub z: ZSpecDef,
}

impl GermFile {
    pub fn from_germ(f: &PolyGermMap, z: &ZSpec) -> Self {
        GermFile {
            n: f.n(),
            m: f.m(),
            k: f.k(),
            components: f.components().iter().map(Poly::to_terms).collect(),
            z: z.to_def(),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("germ files always serialize")
    }

    pub fn germ(&self) -> Result<PolyGermMap> {
        if self.components.len() != self.m {
            return Err(Error::invalid(format!(
                "declared m = {} but {} components given",
                self.m,
                self.components.len()
            )));
        }
        let comps = self
            .components
            .iter()
            .map(|c| Poly::from_terms(self.n, c.iter().cloned()))
            .collect::<Result<Vec<_>>>()?;
        PolyGermMap::new(self.n, self.k, comps)
    }

    /// Builds the germ and resolves its singular set (the implicit variant uses the germ itself).
    pub fn load(&self) -> Result<(PolyGermMap, ZSpec)> {
        let f = self.germ()?;
        let shared: Arc<dyn Germ> = Arc::new(f.clone());
        let z = ZSpec::resolve(&self.z, self.n, Some(shared))?;
        Ok((f, z))
    }
}
