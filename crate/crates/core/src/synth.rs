//! Synthetic survey fixture with a known cross-view latent structure.
//!
//! Two of the generated views (demographics and laboratory) share a
//! three-dimensional latent whose per-component mixing strengths pin the
//! population canonical correlations exactly; downstream code can therefore
//! be checked against ground truth with no network access. The remaining
//! views carry enough structure for the classification task: body measures
//! correlate with the first latent coordinate, and the questionnaire holds
//! the diagnosis answer and habits, with fasting glucose in the laboratory
//! view driving the label.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::table::{CellValue, ColumnTable, MissingCode};

pub const DEFAULT_CANONICAL_CORRELATIONS: [f64; 3] = [0.9, 0.6, 0.3];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n: usize,
    pub seed: u64,
    /// population canonical correlations between demographics and laboratory
    pub canonical_correlations: [f64; 3],
    /// chance that a respondent's insulin measurement is absent; thins the
    /// paired-view complete-case pool without touching the label
    pub lab_missing_rate: f64,
    /// chance of a missing BMI or drinks-per-day answer
    pub feature_missing_rate: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n: 2000,
            seed: 7,
            canonical_correlations: DEFAULT_CANONICAL_CORRELATIONS,
            lab_missing_rate: 0.35,
            feature_missing_rate: 0.01,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthViews {
    pub demographics: ColumnTable,
    pub body_measures: ColumnTable,
    pub laboratory: ColumnTable,
    pub questionnaire: ColumnTable,
}

/// Invertible 3×3 mixes applied to each view's latent-bearing coordinates;
/// invertible linear maps leave canonical correlations unchanged.
const MIX_X: [[f64; 3]; 3] = [[1.0, 0.2, -0.1], [0.1, 0.9, 0.3], [-0.2, 0.1, 1.1]];
const MIX_Y: [[f64; 3]; 3] = [[0.8, -0.3, 0.1], [0.2, 1.0, -0.2], [0.1, 0.4, 0.9]];

fn mix3(a: &[[f64; 3]; 3], v: [f64; 3]) -> [f64; 3] {
    [
        a[0][0] * v[0] + a[0][1] * v[1] + a[0][2] * v[2],
        a[1][0] * v[0] + a[1][1] * v[1] + a[1][2] * v[2],
        a[2][0] * v[0] + a[2][1] * v[1] + a[2][2] * v[2],
    ]
}

/// Standard normal via Box-Muller; two uniforms per draw keeps the stream
/// layout independent of call parity.
fn normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

pub fn generate(config: &SynthConfig) -> SynthViews {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n = config.n;
    let rho = config.canonical_correlations;

    let mut demo: Vec<Vec<CellValue>> = vec![Vec::with_capacity(n); 6];
    let mut body: Vec<Vec<CellValue>> = vec![Vec::with_capacity(n); 7];
    let mut lab: Vec<Vec<CellValue>> = vec![Vec::with_capacity(n); 6];
    let mut quest: Vec<Vec<CellValue>> = vec![Vec::with_capacity(n); 7];

    for i in 0..n {
        let seqn = CellValue::Num((i + 1) as f64);
        let z = [normal(&mut rng), normal(&mut rng), normal(&mut rng)];

        // per-component latent shares: corr(xs_j, ys_j) = rho_j by construction
        let mut xs = [0.0; 3];
        let mut ys = [0.0; 3];
        for j in 0..3 {
            let s = rho[j].sqrt();
            let t = (1.0 - rho[j]).sqrt();
            xs[j] = s * z[j] + t * normal(&mut rng);
            ys[j] = s * z[j] + t * normal(&mut rng);
        }
        let mx = mix3(&MIX_X, xs);
        let my = mix3(&MIX_Y, ys);

        demo[0].push(seqn.clone());
        demo[1].push(CellValue::Num(47.0 + 14.0 * mx[0])); // AGE
        demo[2].push(CellValue::Num(if rng.gen::<bool>() { 1.0 } else { 2.0 })); // GENDER
        demo[3].push(CellValue::Num(rng.gen_range(1..=5) as f64)); // RACE_ETHNICITY
        demo[4].push(CellValue::Num(6.5 + 2.8 * mx[1])); // HOUSEHOLD_INCOME
        demo[5].push(CellValue::Num(3.4 + 1.1 * mx[2])); // EDUCATION_LEVEL

        let eh = normal(&mut rng); // shared height/weight factor
        body[0].push(seqn.clone());
        body[1].push(CellValue::Num(168.0 + 9.0 * (0.9 * eh + 0.44 * normal(&mut rng))));
        body[2].push(CellValue::Num(
            80.0 + 15.0 * (0.55 * z[0] + 0.55 * eh + 0.63 * normal(&mut rng)),
        ));
        let bmi = 28.0 + 5.0 * (0.8 * z[0] + 0.25 * z[2] + 0.55 * normal(&mut rng));
        body[3].push(maybe_missing(bmi, config.feature_missing_rate, &mut rng));
        body[4].push(CellValue::Num(
            98.0 + 13.0 * (0.85 * z[0] + 0.25 * z[1] + 0.45 * normal(&mut rng)),
        ));
        body[5].push(CellValue::Num(
            121.0 + 14.0 * (0.5 * z[0] + 0.3 * z[1] + 0.81 * normal(&mut rng)),
        ));
        body[6].push(CellValue::Num(
            72.0 + 10.0 * (0.4 * z[0] + 0.92 * normal(&mut rng)),
        ));

        // glucose lives in span(ys) + independent noise, so it adds no new
        // latent-correlated direction and the canonical spectrum is intact
        let glucose = 104.0 + 18.0 * ys[0] + 2.5 * normal(&mut rng);
        lab[0].push(seqn.clone());
        lab[1].push(CellValue::Num(5.6 + 0.7 * my[0])); // GLYCOHEMOGLOBIN
        lab[2].push(CellValue::Num(130.0 + 45.0 * my[1])); // TRIGLYCERIDES
        lab[3].push(CellValue::Num(190.0 + 35.0 * my[2])); // CHOLESTEROL
        lab[4].push(CellValue::Num(glucose)); // FASTING_GLUCOSE
        let insulin = 12.0 + 4.0 * (0.5 * ys[1] + 0.87 * normal(&mut rng));
        lab[5].push(maybe_missing(insulin, config.lab_missing_rate, &mut rng));

        let diagnosed = ys[0] + 0.5 * normal(&mut rng) > 1.7;
        let smoker = rng.gen::<f64>() < 0.25;
        quest[0].push(seqn);
        quest[1].push(CellValue::Num(if diagnosed { 1.0 } else { 2.0 })); // DIAGNOSED_DIABETES
        quest[2].push(CellValue::Num(
            if z[0] + 1.2 * normal(&mut rng) > 0.9 { 1.0 } else { 2.0 },
        )); // FAMILY_HISTORY
        quest[3].push(CellValue::Num(
            if 0.5 * z[0] + 0.87 * normal(&mut rng) > 0.9 { 1.0 } else { 2.0 },
        )); // HYPERTENSION
        let drinks = (2.0 + 1.5 * normal(&mut rng)).max(0.0);
        quest[4].push(maybe_missing(drinks, config.feature_missing_rate, &mut rng));
        quest[5].push(CellValue::Num(if smoker { 1.0 } else { 2.0 })); // SMOKER
        quest[6].push(CellValue::Num(if smoker {
            (12.0 + 6.0 * normal(&mut rng)).max(1.0).round()
        } else {
            0.0
        })); // CIGS_PER_DAY
    }

    SynthViews {
        demographics: build_table(
            &["SEQN", "AGE", "GENDER", "RACE_ETHNICITY", "HOUSEHOLD_INCOME", "EDUCATION_LEVEL"],
            demo,
        ),
        body_measures: build_table(
            &["SEQN", "HEIGHT", "WEIGHT", "BMI", "WAIST", "SYSTOLIC_BP", "DIASTOLIC_BP"],
            body,
        ),
        laboratory: build_table(
            &[
                "SEQN",
                "GLYCOHEMOGLOBIN",
                "TRIGLYCERIDES",
                "CHOLESTEROL",
                "FASTING_GLUCOSE",
                "INSULIN",
            ],
            lab,
        ),
        questionnaire: build_table(
            &[
                "SEQN",
                "DIAGNOSED_DIABETES",
                "FAMILY_HISTORY",
                "HYPERTENSION",
                "ALCOHOL_PER_DAY",
                "SMOKER",
                "CIGS_PER_DAY",
            ],
            quest,
        ),
    }
}

fn maybe_missing(v: f64, rate: f64, rng: &mut ChaCha8Rng) -> CellValue {
    if rng.gen::<f64>() < rate {
        CellValue::Missing(MissingCode::DOT)
    } else {
        CellValue::Num(v)
    }
}

fn build_table(names: &[&str], columns: Vec<Vec<CellValue>>) -> ColumnTable {
    let mut t = ColumnTable::new(names[0]);
    for (name, col) in names.iter().zip(columns) {
        t.push_column(*name, col).expect("generator schema is fixed");
    }
    t
}
