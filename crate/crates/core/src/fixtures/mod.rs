//! Reference curves and published regression tables used as test fixtures.

use crate::error::{Error, Result};
use crate::lexicon::PopularityCurve;
use crate::report::TableSpec;
use crate::synth::{PlantedCurve, PLANTED_RANKS, PLANTED_SLOW_SCALE};

/// Published LoFF range for one language together with the planted-curve
/// parameters that reproduce it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoffFixture {
    pub language: &'static str,
    /// Published range, in thousands of ranks.
    pub k0_kw: u32,
    pub k1_kw: u32,
    pub fast_weight: f64,
    pub fast_scale: f64,
    pub sigma: f64,
    pub seed: u64,
}

const SIGMA: f64 = 0.005;

macro_rules! fixture {
    ($lang:literal, $k0:literal, $k1:literal, $a:literal, $s:literal, $seed:literal) => {
        LoffFixture {
            language: $lang,
            k0_kw: $k0,
            k1_kw: $k1,
            fast_weight: $a,
            fast_scale: $s,
            sigma: SIGMA,
            seed: $seed,
        }
    };
}

pub const LOFF_FIXTURES: [LoffFixture; 12] = [
    fixture!("ar", 5, 9, 0.8268918680596269, 0.004509337199461066, 1),
    fixture!("de", 5, 9, 0.8268918680596269, 0.004509337199461066, 2),
    fixture!("en", 5, 9, 0.8268918680596269, 0.004509337199461066, 3),
    fixture!("es", 5, 9, 0.8268918680596269, 0.004509337199461066, 4),
    fixture!("fr", 5, 9, 0.8268918680596269, 0.004509337199461066, 5),
    fixture!("it", 5, 11, 0.8104316297482259, 0.004561834331786442, 6),
    fixture!("ms", 6, 21, 0.7121546193422934, 0.006055091045059765, 7),
    fixture!("nl", 5, 10, 0.8185156704484353, 0.004535656192554142, 8),
    fixture!("pt", 5, 9, 0.8268918680596269, 0.004509337199461066, 9),
    fixture!("ru", 5, 8, 0.8366762429599226, 0.004479718153934517, 10),
    fixture!("tr", 5, 11, 0.8104316297482259, 0.004561834331786442, 11),
    fixture!("zh", 5, 16, 0.7662858982593703, 0.004716254942431414, 12),
];

impl LoffFixture {
    pub fn planted(&self) -> PlantedCurve {
        PlantedCurve {
            fast_weight: self.fast_weight,
            fast_scale: self.fast_scale,
            slow_scale: PLANTED_SLOW_SCALE,
            ranks: PLANTED_RANKS,
        }
    }

    pub fn curve(&self) -> PopularityCurve {
        self.planted()
            .materialize(self.language, self.sigma, self.seed)
    }
}

pub fn loff_fixture(language: &str) -> Result<&'static LoffFixture> {
    LOFF_FIXTURES
        .iter()
        .find(|f| f.language == language)
        .ok_or_else(|| Error::InvalidInput(format!("no LoFF fixture for language {language:?}")))
}

const CALIBRATION_TABLE: &str = include_str!("../../fixtures/calibration_model_a.json");
const GENDER_GAP_TABLE: &str = include_str!("../../fixtures/gender_gap_model_d.json");

/// Published fixed-effect calibration model, coefficients and fit statistics.
pub fn calibration_table() -> TableSpec {
    serde_json::from_str(CALIBRATION_TABLE).expect("bundled fixture parses")
}

/// Published gender-gap model with the civic-by-Internet interaction and
/// geographic controls.
pub fn gender_gap_table() -> TableSpec {
    serde_json::from_str(GENDER_GAP_TABLE).expect("bundled fixture parses")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parameters_reproduce_published_ranges() {
        for f in &LOFF_FIXTURES {
            let p = f.planted();
            let k0 = p.true_k0().unwrap();
            let k1 = p.true_k1().unwrap();
            assert!(
                (k0 / (f.k0_kw as f64 * 1000.0) - 1.0).abs() < 1e-4,
                "{} k0 {k0}",
                f.language
            );
            assert!(
                (k1 / (f.k1_kw as f64 * 1000.0) - 1.0).abs() < 1e-4,
                "{} k1 {k1}",
                f.language
            );
        }
    }

    #[test]
    fn published_tables_parse() {
        let a = calibration_table();
        assert_eq!(a.models[0].n, 98);
        assert_eq!(a.models[0].coefficients.len(), 13);
        let d = gender_gap_table();
        assert_eq!(d.models[0].f_df, (8, 92));
    }

    #[test]
    fn lookup() {
        assert_eq!(loff_fixture("ms").unwrap().k1_kw, 21);
        assert!(loff_fixture("xx").is_err());
    }
}
