//! Seeded synthetic repositories with known invariance classes.
//!
//! Backgrounds carry two adjacent keywords of a chain `scene 00 - scene 01 - ...`,
//! so mined confidences form a path and semantic distance grows with chain
//! offset. Each target shows its own object over one chain keyword. Models follow
//! one of three signal profiles in semantic distance `d`:
//!
//! * invariant: `S = c`
//! * borderline: `S = c - 0.1 d`
//! * variant: `S = c - 0.4 d`, with one distance band dropped to a fifth
//!
//! plus Gaussian noise, clamped to `[0, 1]`. A prediction counts as correct when `S >= 0.5`.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::assessor::{AnnotationRow, AnnotationSet, Label};
use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::io;
use crate::mining::confidences;
use crate::ontology::build_ontology;
use crate::pipeline::PipelineConfig;
use crate::rng;
use crate::search::{search_all, CompositionManifest};
use crate::signals::{assign_distances, DistanceAssignment, RawMeasurement};

pub const POSITIONS: [&str; 2] = ["Max@CONF", "Max@CONV-1"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Invariant,
    Borderline,
    Variant,
}

impl Profile {
    pub const ALL: [Profile; 3] = [Profile::Invariant, Profile::Borderline, Profile::Variant];

    pub fn label(self) -> Label {
        match self {
            Profile::Invariant => 3,
            Profile::Borderline => 2,
            Profile::Variant => 1,
        }
    }

    pub fn slope(self) -> f64 {
        match self {
            Profile::Invariant => 0.0,
            Profile::Borderline => -0.1,
            Profile::Variant => -0.4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    /// Length of the keyword chain.
    pub keywords: usize,
    pub backgrounds: usize,
    pub targets: usize,
    /// Backgrounds sampled per target.
    pub n: usize,
    pub models_per_profile: usize,
    pub noise: f64,
    pub seed: u64,
    pub annotators: usize,
    /// Chance that an annotator replaces the true label with another one.
    pub label_noise: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            keywords: 8,
            backgrounds: 70,
            targets: 10,
            n: 8,
            models_per_profile: 20,
            noise: 0.02,
            seed: 0,
            annotators: 3,
            label_noise: 0.0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.keywords < 2 {
            return Err(Error::invalid("synth needs at least 2 keywords"));
        }
        for (name, v) in [
            ("backgrounds", self.backgrounds),
            ("targets", self.targets),
            ("n", self.n),
            ("models_per_profile", self.models_per_profile),
            ("annotators", self.annotators),
        ] {
            if v == 0 {
                return Err(Error::invalid(format!("{name} must be >= 1")));
            }
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::invalid("noise must be finite and >= 0"));
        }
        if !(0.0..=1.0).contains(&self.label_noise) {
            return Err(Error::invalid("label_noise must be in [0, 1]"));
        }
        Ok(())
    }

    /// Pipeline settings that reproduce the bundle's manifest.
    pub fn pipeline_config(&self) -> PipelineConfig {
        PipelineConfig {
            max_level: self.keywords - 1,
            n: self.n,
            seed: self.seed,
            ..PipelineConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthBundle {
    pub corpus: Corpus,
    pub manifest: CompositionManifest,
    pub distances: DistanceAssignment,
    pub measurements: Vec<RawMeasurement>,
    pub annotations: AnnotationSet,
    pub profiles: BTreeMap<String, Profile>,
    pub config: PipelineConfig,
}

impl SynthBundle {
    pub fn truth(&self) -> BTreeMap<String, Label> {
        self.profiles.iter().map(|(m, p)| (m.clone(), p.label())).collect()
    }

    /// Writes `corpus.jsonl`, `manifest.jsonl`, `measurements.jsonl`,
    /// `annotations.jsonl`, `truth.json` and `pipeline.json`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.corpus.save(&dir.join("corpus.jsonl"))?;
        self.manifest.save(&dir.join("manifest.jsonl"))?;
        io::write_jsonl(&dir.join("measurements.jsonl"), &self.measurements)?;
        self.annotations.save(&dir.join("annotations.jsonl"))?;
        io::write_json(&dir.join("truth.json"), &self.truth())?;
        self.config.save(&dir.join("pipeline.json"))
    }
}

fn scene(i: usize) -> String {
    format!("scene {i:02}")
}

fn build_corpus(spec: &SynthSpec) -> Result<Corpus> {
    let mut b = Corpus::builder();
    for j in 0..spec.backgrounds {
        let c = j % (spec.keywords - 1);
        b.background(&format!("bg-{j:04}"), &[&scene(c), &scene(c + 1)])?;
    }
    for t in 0..spec.targets {
        let object = format!("object {t:03}");
        b.target(&format!("target-{t:03}"), &[&object, &scene(t % spec.keywords)], &object)?;
    }
    b.build()
}

fn signal(profile: Profile, base: f64, d: f64, dropped: Option<i64>) -> f64 {
    let s = base + profile.slope() * d;
    if dropped == Some(d.floor() as i64) {
        s * 0.2
    } else {
        s
    }
}

pub fn generate(spec: &SynthSpec) -> Result<SynthBundle> {
    spec.validate()?;
    let config = spec.pipeline_config();
    let corpus = build_corpus(spec)?;
    let support = config.miner.run(&corpus, config.min_support())?;
    let onto = build_ontology(&confidences(&support), config.min_confidence)?;
    let manifest = search_all(&corpus, &onto, &config.search_params())?;
    let distances = assign_distances(&corpus, &onto, &manifest, config.max_level)?;

    let images: Vec<(String, f64)> = manifest
        .by_target()
        .into_iter()
        .flat_map(|(t, rows)| {
            std::iter::once((t.to_string(), 0.0)).chain(
                rows.into_iter()
                    .map(|r| (r.test_id.clone(), distances.get(&r.test_id).unwrap_or(0.0))),
            )
        })
        .collect();
    let bands: Vec<i64> = images
        .iter()
        .map(|(_, d)| d.floor() as i64)
        .filter(|&b| b >= 1)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();

    let noise = Normal::new(0.0, spec.noise).map_err(|e| Error::invalid(e.to_string()))?;
    let total = spec.models_per_profile * 3;
    let mut profiles = BTreeMap::new();
    let mut measurements = Vec::new();
    for i in 0..total {
        let model_id = format!("model-{i:03}");
        let profile = Profile::ALL[i % 3];
        let mut r = rng::stream(spec.seed, &format!("model/{model_id}"));
        let base: f64 = r.random_range(0.85..0.95);
        let dropped = match profile {
            Profile::Variant if !bands.is_empty() => Some(bands[r.random_range(0..bands.len())]),
            _ => None,
        };
        for (test_id, d) in &images {
            let clean = signal(profile, base, *d, dropped);
            let conf = (clean + noise.sample(&mut r)).clamp(0.0, 1.0);
            let conv = (0.1 + 0.8 * clean + noise.sample(&mut r)).clamp(0.0, 1.0);
            for (position, value) in POSITIONS.iter().zip([conf, conv]) {
                measurements.push(RawMeasurement {
                    model_id: model_id.clone(),
                    test_id: test_id.clone(),
                    position: position.to_string(),
                    value: Some(value),
                    vector: None,
                    correct: Some(conf >= 0.5),
                });
            }
        }
        profiles.insert(model_id, profile);
    }

    let mut annotations = AnnotationSet::new();
    for a in 1..=spec.annotators {
        let annotator = format!("coder-{a}");
        let mut r = rng::stream(spec.seed, &format!("annotator/{annotator}"));
        for (model_id, p) in &profiles {
            let mut label = p.label();
            if r.random_bool(spec.label_noise) {
                label = (label + r.random_range(0..2)) % 3 + 1;
            }
            annotations.insert(AnnotationRow {
                model_id: model_id.clone(),
                annotator: annotator.clone(),
                label,
                ts: None,
            })?;
        }
    }

    Ok(SynthBundle {
        corpus,
        manifest,
        distances,
        measurements,
        annotations,
        profiles,
        config,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assessor::{extract_features, FEATURE_NAMES};
    use crate::resample::{interpolate, RbfConfig};
    use crate::signals::{build_point_cloud, reduce_measurements, Dif, Modality};

    fn small() -> SynthSpec {
        SynthSpec {
            models_per_profile: 2,
            ..SynthSpec::default()
        }
    }

    #[test]
    fn validates_spec() {
        assert!(SynthSpec { keywords: 1, ..small() }.validate().is_err());
        assert!(SynthSpec { noise: -1.0, ..small() }.validate().is_err());
        assert!(SynthSpec { targets: 0, ..small() }.validate().is_err());
        assert!(small().validate().is_ok());
    }

    #[test]
    fn bundle_passes_validators() {
        let b = generate(&small()).unwrap();
        b.manifest.validate(&b.corpus).unwrap();
        assert_eq!(b.manifest.by_target().len(), 10);
        assert!(b.manifest.by_target().values().all(|rows| rows.len() == 8));
        assert_eq!(b.profiles.len(), 6);
        assert_eq!(b.annotations.len(), 18);
        assert_eq!(b.annotations.majority(), b.truth());
        assert_eq!(b.measurements.len(), 6 * 10 * 9 * 2);
    }

    #[test]
    fn distances_follow_the_chain() {
        let b = generate(&small()).unwrap();
        let d: Vec<f64> = b.manifest.rows.iter().map(|r| b.distances.get(&r.test_id).unwrap()).collect();
        assert!(d.iter().all(|&x| x >= 0.5));
        assert!(d.iter().any(|&x| x >= 3.0));
    }

    #[test]
    fn same_seed_same_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (dir.path().join("a"), dir.path().join("b"));
        generate(&small()).unwrap().write(&a).unwrap();
        generate(&small()).unwrap().write(&b).unwrap();
        for f in ["corpus.jsonl", "manifest.jsonl", "measurements.jsonl", "annotations.jsonl", "truth.json", "pipeline.json"] {
            assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
        }
    }

    fn matrix_for(b: &SynthBundle, model: &str, dif: Dif) -> crate::resample::VarianceMatrix<f64> {
        let ms = reduce_measurements::<f64>(b.measurements.clone(), Modality::Max).unwrap();
        let cloud = build_point_cloud(&ms, &b.distances, &b.manifest, model, POSITIONS[0], dif, None).unwrap();
        interpolate(&cloud, &RbfConfig::default()).unwrap()
    }

    #[test]
    fn noiseless_invariant_model_has_zero_matrix() {
        let b = generate(&SynthSpec { noise: 0.0, ..small() }).unwrap();
        assert_eq!(b.profiles["model-000"], Profile::Invariant);
        let m = matrix_for(&b, "model-000", Dif::Subtract);
        assert!(m.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn variant_model_decays_with_distance() {
        let b = generate(&SynthSpec { noise: 0.0, ..small() }).unwrap();
        assert_eq!(b.profiles["model-002"], Profile::Variant);
        let m = matrix_for(&b, "model-002", Dif::Subtract);
        let fs = extract_features(&m);
        let f = |name: &str| fs[FEATURE_NAMES.iter().position(|n| *n == name).unwrap()].1;
        // Element (i, j) holds S(d_i) - S(d_j): far rows minus near columns is negative.
        assert!(f("quad_hl_mean") < 0.0);
        assert!(f("quad_lh_mean") > 0.0);
        assert!(f("upper_minus_lower") > 0.0);
        let inv = extract_features(&matrix_for(&b, "model-000", Dif::Subtract));
        assert!(f("abs_mean") > inv[4].1);
    }
}
