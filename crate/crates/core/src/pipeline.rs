//! File-to-file stages and the chained pipeline. Every stage returns a JSON
//! summary object suitable for a single output line.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::assessor::{
    self, AnnotationSet, AssessorKind, AssessorModel, Dataset, EvalConfig, FeatureTable, Label, TrainParams,
};
use crate::corpus::{load_corpus, Corpus};
use crate::error::{Error, Result};
use crate::io;
use crate::mining::{self, confidences, MinSupport, SupportTable};
use crate::ontology::{build_ontology, Ontology};
use crate::resample::{self, RbfConfig, VarianceMatrix};
use crate::search::{self, CompositionManifest, SearchParams};
use crate::signals::{self, Dif, DistanceAssignment, MeasurementSet, Modality, PointCloud};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Miner {
    Apriori,
    #[default]
    Fpgrowth,
    Bruteforce,
}

impl Miner {
    pub fn run(self, corpus: &Corpus, min_support: MinSupport) -> Result<SupportTable> {
        match self {
            Miner::Apriori => mining::mine_apriori(corpus, min_support),
            Miner::Fpgrowth => mining::mine_fpgrowth(corpus, min_support),
            Miner::Bruteforce => mining::mine_bruteforce(corpus, min_support),
        }
    }
}

impl fmt::Display for Miner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Miner::Apriori => "apriori",
            Miner::Fpgrowth => "fpgrowth",
            Miner::Bruteforce => "bruteforce",
        })
    }
}

impl FromStr for Miner {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "apriori" => Ok(Miner::Apriori),
            "fpgrowth" => Ok(Miner::Fpgrowth),
            "bruteforce" => Ok(Miner::Bruteforce),
            _ => Err(Error::invalid(format!("unknown miner {s:?}"))),
        }
    }
}

/// Everything `pipeline` needs. Relative paths resolve against the config file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub corpus: PathBuf,
    pub measurements: PathBuf,
    pub annotations: PathBuf,
    pub out_dir: PathBuf,
    pub miner: Miner,
    pub min_support: u64,
    pub min_confidence: f64,
    pub max_level: usize,
    pub n: usize,
    pub weights: Vec<f64>,
    pub seed: u64,
    pub modality: Modality,
    pub dif: Dif,
    pub r: usize,
    pub radius: f64,
    pub sigma: f64,
    pub k: usize,
    pub render_scale: usize,
    pub trees: usize,
    pub rounds: usize,
    pub repeats: usize,
    pub train_frac: f64,
    /// The first entry fills the report's headline fields.
    pub assessors: Vec<AssessorKind>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let rbf = RbfConfig::<f64>::default();
        let eval = EvalConfig::default();
        PipelineConfig {
            corpus: "corpus.jsonl".into(),
            measurements: "measurements.jsonl".into(),
            annotations: "annotations.jsonl".into(),
            out_dir: "out".into(),
            miner: Miner::default(),
            min_support: 3,
            min_confidence: 0.0,
            max_level: 4,
            n: 10,
            weights: Vec::new(),
            seed: 0,
            modality: Modality::default(),
            dif: Dif::default(),
            r: rbf.r,
            radius: rbf.radius,
            sigma: rbf.sigma,
            k: rbf.k,
            render_scale: 8,
            trees: eval.trees,
            rounds: eval.rounds,
            repeats: eval.repeats,
            train_frac: eval.train_frac,
            assessors: AssessorKind::ALL.to_vec(),
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<PipelineConfig> {
        io::read_json(path)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_json(path, self)
    }

    pub fn min_support(&self) -> MinSupport {
        MinSupport::Count(self.min_support)
    }

    pub fn search_params(&self) -> SearchParams {
        SearchParams {
            n: self.n,
            max_level: self.max_level,
            weights: self.weights.clone(),
            seed: self.seed,
        }
    }

    pub fn rbf(&self) -> RbfConfig<f64> {
        RbfConfig {
            r: self.r,
            radius: self.radius,
            sigma: self.sigma,
            k: self.k,
        }
    }

    pub fn eval(&self) -> EvalConfig {
        EvalConfig {
            repeats: self.repeats,
            train_frac: self.train_frac,
            trees: self.trees,
            rounds: self.rounds,
            seed: self.seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.min_support().validate()?;
        check_min_confidence(self.min_confidence)?;
        check_search(&self.search_params())?;
        self.rbf().validate()?;
        self.eval().validate()?;
        if self.render_scale == 0 {
            return Err(Error::invalid("render_scale must be >= 1"));
        }
        if self.assessors.is_empty() {
            return Err(Error::invalid("at least one assessor kind is required"));
        }
        Ok(())
    }
}

pub fn check_min_confidence(c: f64) -> Result<()> {
    if !(0.0..1.0).contains(&c) {
        return Err(Error::invalid(format!("min_confidence must be in [0, 1), got {c}")));
    }
    Ok(())
}

pub fn check_search(p: &SearchParams) -> Result<()> {
    search::band_quotas(&[], p.n, &p.effective_weights()).map(|_| ())
}

/// File-name stem for a `(model, position)` artifact.
pub fn artifact_stem(model_id: &str, position: &str) -> String {
    let clean = |s: &str| -> String {
        s.chars()
            .map(|c| if c.is_ascii_alphanumeric() || "@.-_".contains(c) { c } else { '_' })
            .collect()
    };
    format!("{}__{}", clean(model_id), clean(position))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// `*.json` files of a directory, sorted by name.
pub fn json_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let p = entry.map_err(|e| Error::io(dir, e))?.path();
        if p.extension().is_some_and(|e| e == "json") {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

fn display(p: &Path) -> String {
    p.display().to_string()
}

/// Loads an ontology and aligns it with the corpus keyword table.
pub fn load_aligned_ontology(path: &Path, corpus: &Corpus) -> Result<Ontology> {
    let onto = Ontology::load(path)?;
    Ok(if onto.keywords() == corpus.keyword_table() {
        onto
    } else {
        onto.reindex(corpus.keyword_table())
    })
}

pub fn mine(corpus: &Path, miner: Miner, min_support: MinSupport, out: &Path) -> Result<Value> {
    min_support.validate()?;
    let corpus = load_corpus(corpus, None)?;
    let table = miner.run(&corpus, min_support)?;
    table.save(out)?;
    Ok(json!({
        "stage": "mine",
        "miner": miner.to_string(),
        "transactions": table.total_images(),
        "frequent_keywords": table.singletons().count(),
        "frequent_pairs": table.pairs().count(),
        "out": display(out),
    }))
}

pub fn ontology(support: &Path, min_confidence: f64, out: &Path) -> Result<Value> {
    check_min_confidence(min_confidence)?;
    let table = SupportTable::load(support)?;
    let onto = build_ontology(&confidences(&table), min_confidence)?;
    onto.save(out)?;
    Ok(json!({
        "stage": "build-ontology",
        "keywords": onto.keywords().len(),
        "edges": onto.edge_count(),
        "out": display(out),
    }))
}

pub fn expand(ontology: &Path, keywords: &[String], max_level: usize) -> Result<Value> {
    let onto = Ontology::load(ontology)?;
    let seed = keywords
        .iter()
        .map(|k| {
            let norm = crate::corpus::normalize_keyword(k);
            onto.keyword_id(&norm).ok_or(Error::UnknownKeyword(norm))
        })
        .collect::<Result<Vec<_>>>()?;
    let exp = onto.expand(&seed, max_level)?;
    let names = |set: &std::collections::BTreeSet<crate::corpus::KeywordId>| -> Vec<String> {
        let mut v: Vec<String> = set.iter().map(|&k| onto.keywords()[k.index()].clone()).collect();
        v.sort();
        v
    };
    let levels: Vec<Vec<String>> = (0..=max_level).map(|i| names(exp.level(i))).collect();
    let frontiers: Vec<Vec<String>> = (0..=max_level).map(|i| names(&exp.frontier(i))).collect();
    Ok(json!({
        "stage": "expand",
        "levels": levels,
        "frontiers": frontiers,
        "fixed_point": exp.reached_fixed_point(),
    }))
}

pub fn search(corpus: &Path, ontology: &Path, params: &SearchParams, out: &Path) -> Result<Value> {
    check_search(params)?;
    let corpus = load_corpus(corpus, None)?;
    let onto = load_aligned_ontology(ontology, &corpus)?;
    let manifest = search::search_all(&corpus, &onto, params)?;
    manifest.save(out)?;
    Ok(json!({
        "stage": "search",
        "targets": manifest.by_target().len(),
        "testing_images": manifest.rows.len(),
        "out": display(out),
    }))
}

pub fn distances(corpus: &Path, ontology: &Path, manifest: &Path, max_level: usize, out: &Path) -> Result<Value> {
    let corpus = load_corpus(corpus, None)?;
    let onto = load_aligned_ontology(ontology, &corpus)?;
    let manifest = CompositionManifest::load(manifest)?;
    let dist = signals::assign_distances(&corpus, &onto, &manifest, max_level)?;
    let annotated = dist.annotate(&manifest);
    annotated.save(out)?;
    let max = annotated.rows.iter().filter_map(|r| r.distance).fold(0.0, f64::max);
    Ok(json!({
        "stage": "distances",
        "rows": annotated.rows.len(),
        "max_distance": max,
        "out": display(out),
    }))
}

pub fn load_measurements(path: &Path, modality: Modality) -> Result<MeasurementSet<f64>> {
    signals::reduce_measurements(signals::load_raw_measurements(path)?, modality)
}

pub fn pointclouds(
    measurements: &Path,
    manifest: &Path,
    modality: Modality,
    dif: Dif,
    out_dir: &Path,
) -> Result<Value> {
    let manifest = CompositionManifest::load(manifest)?;
    let dist = DistanceAssignment::from_manifest(&manifest)?;
    let ms = load_measurements(measurements, modality)?;
    let clouds = signals::build_point_clouds(&ms, &dist, &manifest, dif, None)?;
    create_dir(out_dir)?;
    for c in &clouds {
        c.save(&out_dir.join(format!("{}.json", artifact_stem(&c.model_id, &c.position))))?;
    }
    Ok(json!({
        "stage": "pointcloud",
        "clouds": clouds.len(),
        "points_per_cloud": clouds.first().map_or(0, |c| c.len()),
        "out": display(out_dir),
    }))
}

pub fn resample(clouds_dir: &Path, cfg: &RbfConfig<f64>, out_dir: &Path) -> Result<Value> {
    cfg.validate()?;
    let files = json_files(clouds_dir)?;
    create_dir(out_dir)?;
    for f in &files {
        let cloud = PointCloud::<f64>::load(f)?;
        let m = resample::interpolate(&cloud, cfg)?;
        m.save(&out_dir.join(f.file_name().expect("json file name")))?;
    }
    Ok(json!({
        "stage": "resample",
        "matrices": files.len(),
        "r": cfg.r,
        "out": display(out_dir),
    }))
}

/// Writes `<stem>.png` per matrix and, when clouds are given, `<stem>_scatter.png`.
pub fn render(matrices_dir: &Path, clouds_dir: Option<&Path>, scale: usize, out_dir: &Path) -> Result<Value> {
    if scale == 0 {
        return Err(Error::invalid("scale must be >= 1"));
    }
    create_dir(out_dir)?;
    let mut images = 0;
    for f in json_files(matrices_dir)? {
        let m = VarianceMatrix::<f64>::load(&f)?;
        let stem = artifact_stem(&m.model_id, &m.position);
        resample::write_png(&resample::render(&m, scale)?, &out_dir.join(format!("{stem}.png")))?;
        images += 1;
    }
    if let Some(dir) = clouds_dir {
        for f in json_files(dir)? {
            let c = PointCloud::<f64>::load(&f)?;
            let stem = artifact_stem(&c.model_id, &c.position);
            let img = resample::render_scatter(&c, 256)?;
            resample::write_png(&img, &out_dir.join(format!("{stem}_scatter.png")))?;
            images += 1;
        }
    }
    Ok(json!({ "stage": "render", "images": images, "out": display(out_dir) }))
}

pub fn load_matrices(dir: &Path) -> Result<Vec<VarianceMatrix<f64>>> {
    json_files(dir)?.iter().map(|f| VarianceMatrix::load(f)).collect()
}

pub fn feature_table(matrices: &[VarianceMatrix<f64>]) -> Result<FeatureTable> {
    let mut by_model: BTreeMap<&str, Vec<&VarianceMatrix<f64>>> = BTreeMap::new();
    for m in matrices {
        by_model.entry(&m.model_id).or_default().push(m);
    }
    FeatureTable::from_vectors(by_model.into_iter().map(|(id, ms)| assessor::feature_vector(id, &ms)))
}

pub fn features(matrices_dir: &Path, out: &Path) -> Result<Value> {
    let table = feature_table(&load_matrices(matrices_dir)?)?;
    table.save(out)?;
    Ok(json!({
        "stage": "features",
        "models": table.rows.len(),
        "features": table.names.len(),
        "out": display(out),
    }))
}

/// Measurements and distance-annotated manifest, for the worst-case baseline.
#[derive(Debug, Clone, Copy)]
pub struct BaselineInputs<'a> {
    pub measurements: &'a Path,
    pub manifest: &'a Path,
    pub modality: Modality,
}

impl BaselineInputs<'_> {
    pub fn scalars(&self) -> Result<BTreeMap<String, f64>> {
        let manifest = CompositionManifest::load(self.manifest)?;
        let dist = DistanceAssignment::from_manifest(&manifest)?;
        let ms = load_measurements(self.measurements, self.modality)?;
        assessor::worst_case_scalars(&ms, &dist)
    }
}

fn dataset(
    features: &Path,
    labels: &BTreeMap<String, Label>,
    baseline: Option<BaselineInputs<'_>>,
) -> Result<Dataset> {
    let table = FeatureTable::load(features)?;
    let scalars = baseline.map(|b| b.scalars()).transpose()?;
    Dataset::new(&table, labels, scalars.as_ref())
}

fn needs_baseline(kinds: &[AssessorKind], baseline: Option<BaselineInputs<'_>>) -> Result<()> {
    if kinds.contains(&AssessorKind::ThresholdBaseline) && baseline.is_none() {
        return Err(Error::invalid(
            "threshold_baseline needs measurements with correctness flags and a distance manifest",
        ));
    }
    Ok(())
}

pub fn train(
    features: &Path,
    annotations: &Path,
    kind: AssessorKind,
    params: &TrainParams,
    baseline: Option<BaselineInputs<'_>>,
    out: &Path,
) -> Result<Value> {
    if params.trees == 0 || params.rounds == 0 {
        return Err(Error::invalid("trees and rounds must be at least 1"));
    }
    needs_baseline(&[kind], baseline)?;
    let labels = AnnotationSet::load(annotations)?.majority();
    let ds = dataset(features, &labels, baseline.filter(|_| kind == AssessorKind::ThresholdBaseline))?;
    let model = assessor::train(kind, &ds, params)?;
    model.save(out)?;
    let preds = model.predict_dataset(&ds)?;
    let hits = ds.model_ids.iter().zip(&ds.y).filter(|(m, y)| preds[*m] == **y).count();
    Ok(json!({
        "stage": "train",
        "kind": kind,
        "models": ds.len(),
        "training_accuracy": hits as f64 / ds.len() as f64,
        "out": display(out),
    }))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub model_id: String,
    pub label: Label,
    pub name: String,
}

pub fn assess(model: &Path, features: &Path, baseline: Option<BaselineInputs<'_>>, out: &Path) -> Result<Value> {
    let model = AssessorModel::load(model)?;
    needs_baseline(&[model.kind()], baseline)?;
    let table = FeatureTable::load(features)?;
    // Every model is scored; the dataset wants labels, so give each a placeholder.
    let all: BTreeMap<String, Label> = table.rows.iter().map(|r| (r.model_id.clone(), 2)).collect();
    let scalars = match model.kind() {
        AssessorKind::ThresholdBaseline => Some(baseline.expect("checked").scalars()?),
        _ => None,
    };
    let ds = Dataset::new(&table, &all, scalars.as_ref())?;
    let preds: Vec<Prediction> = model
        .predict_dataset(&ds)?
        .into_iter()
        .map(|(model_id, label)| Prediction {
            model_id,
            label,
            name: assessor::annotations::LABEL_NAMES[(label - 1) as usize].to_string(),
        })
        .collect();
    io::write_jsonl(out, &preds)?;
    let mut counts = [0usize; 3];
    for p in &preds {
        counts[(p.label - 1) as usize] += 1;
    }
    Ok(json!({
        "stage": "assess",
        "kind": model.kind(),
        "models": preds.len(),
        "label_counts": counts,
        "out": display(out),
    }))
}

pub fn evaluate(
    features: &Path,
    annotations: &Path,
    cfg: &EvalConfig,
    kinds: &[AssessorKind],
    baseline: Option<BaselineInputs<'_>>,
    out: &Path,
) -> Result<Value> {
    cfg.validate()?;
    needs_baseline(kinds, baseline)?;
    let ann = AnnotationSet::load(annotations)?;
    let ds = dataset(features, &ann.majority(), baseline)?;
    let report = assessor::evaluate(&ds, cfg, kinds, Some(ann.irr()))?;
    io::write_json(out, &report)?;
    Ok(json!({
        "stage": "evaluate",
        "models": report.models,
        "repeats": report.repeats,
        "headline": report.headline,
        "accuracy_mean": report.accuracy_mean,
        "accuracy_std": report.accuracy_std,
        "kappa_mean": report.kappa.mean,
        "out": display(out),
    }))
}

/// Output locations of a pipeline run.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn support(&self) -> PathBuf {
        self.root.join("support.json")
    }
    pub fn ontology(&self) -> PathBuf {
        self.root.join("ontology.json")
    }
    pub fn manifest(&self) -> PathBuf {
        self.root.join("manifest.jsonl")
    }
    pub fn distances(&self) -> PathBuf {
        self.root.join("distances.jsonl")
    }
    pub fn clouds(&self) -> PathBuf {
        self.root.join("clouds")
    }
    pub fn matrices(&self) -> PathBuf {
        self.root.join("matrices")
    }
    pub fn renders(&self) -> PathBuf {
        self.root.join("render")
    }
    pub fn features(&self) -> PathBuf {
        self.root.join("features.json")
    }
    pub fn model(&self, kind: AssessorKind) -> PathBuf {
        self.root.join("models").join(format!("{kind}.json"))
    }
    pub fn report(&self) -> PathBuf {
        self.root.join("report.json")
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn staged<T>(stage: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Data(format!("stage {stage}: {e}")))
}

/// Runs every stage in order. Returns the per-stage summaries.
pub fn run_pipeline(config_path: &Path) -> Result<Value> {
    let cfg = PipelineConfig::load(config_path)?;
    cfg.validate()?;
    let base = config_path.parent().unwrap_or(Path::new("."));
    run_pipeline_with(&cfg, base)
}

pub fn run_pipeline_with(cfg: &PipelineConfig, base: &Path) -> Result<Value> {
    cfg.validate()?;
    let corpus = resolve(base, &cfg.corpus);
    let measurements = resolve(base, &cfg.measurements);
    let annotations = resolve(base, &cfg.annotations);
    let l = Layout {
        root: resolve(base, &cfg.out_dir),
    };
    create_dir(&l.root)?;
    create_dir(&l.root.join("models"))?;
    let mut stages = vec![
        staged("mine", mine(&corpus, cfg.miner, cfg.min_support(), &l.support()))?,
        staged("build-ontology", ontology(&l.support(), cfg.min_confidence, &l.ontology()))?,
        staged("search", search(&corpus, &l.ontology(), &cfg.search_params(), &l.manifest()))?,
        staged(
            "distances",
            distances(&corpus, &l.ontology(), &l.manifest(), cfg.max_level, &l.distances()),
        )?,
        staged(
            "pointcloud",
            pointclouds(&measurements, &l.distances(), cfg.modality, cfg.dif, &l.clouds()),
        )?,
        staged("resample", resample(&l.clouds(), &cfg.rbf(), &l.matrices()))?,
        staged("render", render(&l.matrices(), Some(&l.clouds()), cfg.render_scale, &l.renders()))?,
        staged("features", features(&l.matrices(), &l.features()))?,
    ];
    let distances_path = l.distances();
    let baseline = BaselineInputs {
        measurements: &measurements,
        manifest: &distances_path,
        modality: cfg.modality,
    };
    let params = TrainParams {
        trees: cfg.trees,
        rounds: cfg.rounds,
        seed: cfg.seed,
    };
    for &kind in &cfg.assessors {
        stages.push(staged(
            "train",
            train(&l.features(), &annotations, kind, &params, Some(baseline), &l.model(kind)),
        )?);
    }
    stages.push(staged(
        "evaluate",
        evaluate(
            &l.features(),
            &annotations,
            &cfg.eval(),
            &cfg.assessors,
            Some(baseline),
            &l.report(),
        ),
    )?);
    Ok(json!({ "stage": "pipeline", "stages": stages }))
}
