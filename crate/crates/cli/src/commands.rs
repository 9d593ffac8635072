//! One function per subcommand. Each reads its inputs, writes its outputs
//! atomically under the workspace and leaves a run manifest beside them.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use kinegen::analysis::{
    class_features, distance_table, feature_histograms, flag_outliers, flatten_population, histogram_csv, mean_profile,
    pca2, projection_csv, tsne2, Feature, HistogramCell, PointMeta, Projection2D,
};
use kinegen::classifier::{render_table, run_table_suite, EvalReport, TABLE_FOOTER};
use kinegen::ingest::{pad_class, read_recording, segment};
use kinegen::timegan::{sample, train as train_timegan, TimeGanModel};
use kinegen::{ClassLabel, Provenance, Trial, TrialSet};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::plot::{self, Mark, Panel, Series, PALETTE};
use crate::workspace::{load_archive, read_text, sidecar, Run, Workspace};

pub struct Context {
    pub config: RunConfig,
    pub ws: Workspace,
}

impl Context {
    pub fn new(config: RunConfig) -> Self {
        let ws = Workspace::new(config.workspace.clone());
        Context { config, ws }
    }

    fn run(&self, command: &str) -> Run<'_> {
        Run::new(&self.ws, command, self.config.hash(), self.config.seed)
    }
}

const SURROGATE_NOTE: &str = "surrogate peak-amplitude statistics are chosen defaults, not published values";

pub fn surrogate(ctx: &Context, out: Option<PathBuf>) -> Result<PathBuf> {
    let out = out.unwrap_or_else(|| ctx.ws.surrogate_archive());
    let set = kinegen::surrogate::make_surrogate(&ctx.config.surrogate)?;
    let mut run = ctx.run("surrogate");
    run.provenance(Provenance::Surrogate);
    run.note(SURROGATE_NOTE);
    run.write_archive(&out, &set)?;
    run.finish(&sidecar(&out))?;
    log::info!("wrote {} surrogate trials to {}", set.len(), out.display());
    Ok(out)
}

/// Labels sidecar: `recording_id,class`, one row per recording file.
fn read_labels(path: &Path) -> Result<BTreeMap<String, ClassLabel>> {
    let text = read_text(path)?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header: Vec<String> = rdr.headers().map_err(|e| kinegen::Error::Parse(e.to_string()))?.iter().map(str::to_owned).collect();
    if header != ["recording_id", "class"] {
        return Err(kinegen::Error::Parse(format!("{}: header must be recording_id,class", path.display())).into());
    }
    let mut labels = BTreeMap::new();
    for record in rdr.records() {
        let record = record.map_err(|e| kinegen::Error::Parse(e.to_string()))?;
        let label: ClassLabel = record[1].parse()?;
        if labels.insert(record[0].to_owned(), label).is_some() {
            return Err(kinegen::Error::Validation(format!("recording {} is labelled twice", &record[0])).into());
        }
    }
    Ok(labels)
}

pub fn ingest(ctx: &Context, recordings: &Path, labels_path: &Path, out: Option<PathBuf>) -> Result<PathBuf> {
    let out = out.unwrap_or_else(|| ctx.ws.real_archive());
    let labels = read_labels(labels_path)?;
    let mut files: Vec<PathBuf> = std::fs::read_dir(recordings)
        .map_err(CliError::io(recordings))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(kinegen::Error::Validation(format!("no recording CSVs in {}", recordings.display())).into());
    }
    let mut run = ctx.run("ingest");
    run.input(labels_path)?;
    let mut trials = Vec::new();
    for path in &files {
        let id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let label = *labels
            .get(&id)
            .ok_or_else(|| kinegen::Error::Validation(format!("recording {id} has no entry in {}", labels_path.display())))?;
        run.input(path)?;
        let rec = read_recording(&id, read_text(path)?.as_bytes())?;
        let speed = rec.speed()?;
        for (k, span) in segment(&speed)?.iter().enumerate() {
            let raw = Trial::new(format!("{id}-{k:03}"), label, speed[span.start..=span.end].to_vec(), rec.rate)?;
            match raw.trimmed() {
                Ok(t) if t.len() >= ctx.config.ingest.min_samples => trials.push(t),
                _ => log::warn!("dropping segment {} of {id}: shorter than {} samples", k, ctx.config.ingest.min_samples),
            }
        }
    }
    let set = TrialSet::new(trials, Provenance::Real)?;
    run.provenance(Provenance::Real);
    run.write_archive(&out, &set)?;
    run.finish(&sidecar(&out))?;
    log::info!("ingested {} trials from {} recordings", set.len(), files.len());
    Ok(out)
}

pub fn train(ctx: &Context, archive: &Path, class: ClassLabel, out: Option<PathBuf>) -> Result<PathBuf> {
    let out = out.unwrap_or_else(|| ctx.ws.model_dir(class));
    let set = load_archive(archive, Provenance::Real)?.trimmed()?;
    let trials = set.of_class(class);
    if trials.is_empty() {
        return Err(kinegen::Error::Validation(format!("{} has no {class} trials", archive.display())).into());
    }
    let batch = pad_class(&trials)?;
    let config = ctx.config.timegan_for(class);
    log::info!("training {class} on {} trials of padded length {}", batch.n(), batch.length);
    let model = train_timegan(&batch, &config)?;
    let mut run = ctx.run("train");
    run.input(archive)?;
    for (name, text) in model.to_files()? {
        run.write(&out.join(name), text.as_bytes())?;
    }
    run.finish(&out.join("run.json"))?;
    Ok(out)
}

pub fn load_model(dir: &Path) -> Result<TimeGanModel> {
    Ok(TimeGanModel::from_files(|name| std::fs::read_to_string(dir.join(name)).map_err(kinegen::Error::from))?)
}

pub fn generate(ctx: &Context, model_dir: &Path, n: Option<usize>, out: Option<PathBuf>) -> Result<PathBuf> {
    let model = load_model(model_dir)?;
    let n = n
        .or(ctx.config.generate.per_class)
        .ok_or_else(|| CliError::Usage("pass --n or set generate.per_class".into()))?;
    let out = out.unwrap_or_else(|| ctx.ws.synthetic_archive(model.label));
    let set = sample(&model, n, ctx.config.generate_seed(model.label))?;
    let mut run = ctx.run("generate");
    run.input(&model_dir.join(kinegen::timegan::MANIFEST_FILE))?;
    run.provenance(Provenance::Synthetic);
    run.write_archive(&out, &set)?;
    run.finish(&sidecar(&out))?;
    Ok(out)
}

fn load_pair(real: &Path, synthetic: &[PathBuf]) -> Result<(TrialSet, TrialSet)> {
    let real_set = load_archive(real, Provenance::Real)?.trimmed()?;
    let mut parts = Vec::new();
    for p in synthetic {
        parts.push(load_archive(p, Provenance::Synthetic)?.trimmed()?);
    }
    let synth = TrialSet::merged(parts, Provenance::Synthetic)?;
    Ok((real_set, synth))
}

pub fn eval(ctx: &Context, real: &Path, synthetic: &[PathBuf], out: Option<PathBuf>) -> Result<Vec<EvalReport>> {
    let out = out.unwrap_or_else(|| ctx.ws.reports());
    let (real_set, synth) = load_pair(real, synthetic)?;
    let reports = run_table_suite(&real_set, &synth, &ctx.config.classifier)?;
    let mut run = ctx.run("eval");
    run.input(real)?;
    for p in synthetic {
        run.input(p)?;
    }
    run.write_json(&out.join("eval.json"), &reports)?;
    let table = format!("{}\n{TABLE_FOOTER}\n", render_table(&reports));
    run.write(&out.join("eval.txt"), table.as_bytes())?;
    run.finish(&out.join("eval.run.json"))?;
    Ok(reports)
}

/// Per-class, per-source feature means and standard deviations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureSummary {
    pub class: ClassLabel,
    pub source: String,
    pub n: usize,
    pub md_mean: f64,
    pub md_std: f64,
    pub pa_mean: f64,
    pub pa_std: f64,
    pub ad_md_mean: f64,
    pub ad_md_std: f64,
}

fn summarise(set: &TrialSet, source: &str) -> Result<Vec<FeatureSummary>> {
    let mut out = Vec::new();
    for class in ClassLabel::ALL {
        let f = class_features(set, class)?;
        if f.is_empty() {
            continue;
        }
        let ms = |feature: Feature| {
            let v: Vec<f64> = f.iter().map(|x| x.get(feature)).collect();
            let m = v.iter().sum::<f64>() / v.len() as f64;
            (m, (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt())
        };
        let (md_mean, md_std) = ms(Feature::Md);
        let (pa_mean, pa_std) = ms(Feature::Pa);
        let (ad_md_mean, ad_md_std) = ms(Feature::AdMd);
        out.push(FeatureSummary { class, source: source.to_owned(), n: f.len(), md_mean, md_std, pa_mean, pa_std, ad_md_mean, ad_md_std });
    }
    Ok(out)
}

pub fn feature_summary_csv(rows: &[FeatureSummary]) -> String {
    let mut out = String::from("class,source,n,md_mean,md_std,pa_mean,pa_std,ad_md_mean,ad_md_std\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.class, r.source, r.n, r.md_mean, r.md_std, r.pa_mean, r.pa_std, r.ad_md_mean, r.ad_md_std
        );
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutlierReport {
    pub source: String,
    pub trials: usize,
    pub flagged: BTreeSet<String>,
    pub percent: f64,
}

struct Profile {
    class: ClassLabel,
    source: &'static str,
    rate: f64,
    mean: Vec<f64>,
    std: Vec<f64>,
}

fn profiles(set: &TrialSet, source: &'static str) -> Result<Vec<Profile>> {
    let mut out = Vec::new();
    for class in ClassLabel::ALL {
        let trials = set.of_class(class);
        if trials.is_empty() {
            continue;
        }
        let batch = pad_class(&trials)?;
        let (mean, std) = mean_profile(&batch.rows)?;
        out.push(Profile { class, source, rate: trials[0].rate, mean: mean.to_vec(), std: std.to_vec() });
    }
    Ok(out)
}

fn source_color(source: &str) -> &'static str {
    if source == "real" { PALETTE[0] } else { PALETTE[1] }
}

fn profile_plot(profiles: &[Profile]) -> String {
    let panels: Vec<Panel> = ClassLabel::ALL
        .iter()
        .map(|&class| {
            let mut series = Vec::new();
            for p in profiles.iter().filter(|p| p.class == class) {
                let x: Vec<f64> = (0..p.mean.len()).map(|i| i as f64 / p.rate).collect();
                let lo = p.mean.iter().zip(&p.std).map(|(m, s)| m - s).collect();
                let hi = p.mean.iter().zip(&p.std).map(|(m, s)| m + s).collect();
                let color = source_color(p.source);
                series.push(Series { name: String::new(), color, mark: Mark::Band { x: x.clone(), lo, hi } });
                series.push(Series { name: p.source.to_owned(), color, mark: Mark::Line(x.into_iter().zip(p.mean.iter().copied()).collect()) });
            }
            Panel { title: class.to_string(), x_label: "time [s]".into(), y_label: "velocity [m/s]".into(), series }
        })
        .collect();
    plot::render(&panels, 2)
}

fn projection_plot(projection: &Projection2D, meta: &[PointMeta], title: &str) -> String {
    let panels: Vec<Panel> = ["real", "synthetic"]
        .iter()
        .map(|&source| {
            let series = ClassLabel::ALL
                .iter()
                .enumerate()
                .map(|(k, &class)| {
                    let pts = meta
                        .iter()
                        .zip(projection.points.rows())
                        .filter(|(m, _)| m.class == class && m.source == source)
                        .map(|(_, p)| (p[0], p[1]))
                        .collect();
                    Series { name: class.to_string(), color: PALETTE[k + 2], mark: Mark::Points(pts) }
                })
                .collect();
            Panel { title: format!("{title}: {source}"), x_label: "dim 1".into(), y_label: "dim 2".into(), series }
        })
        .collect();
    plot::render(&panels, 2)
}

fn histogram_plot(cells: &[HistogramCell]) -> String {
    let panels: Vec<Panel> = cells
        .iter()
        .map(|c| {
            let h = |counts: &[usize]| counts.iter().map(|&v| v as f64).collect::<Vec<_>>();
            Panel {
                title: format!("{} {} (W1 = {:.3})", c.class, c.feature.name(), c.wasserstein),
                x_label: c.feature.name().into(),
                y_label: "count".into(),
                series: vec![
                    Series { name: "real".into(), color: PALETTE[0], mark: Mark::Bars { edges: c.edges.clone(), heights: h(&c.counts_real) } },
                    Series { name: "synthetic".into(), color: PALETTE[1], mark: Mark::Bars { edges: c.edges.clone(), heights: h(&c.counts_synth) } },
                ],
            }
        })
        .collect();
    plot::render(&panels, 3)
}

pub fn analyze(ctx: &Context, real: &Path, synthetic: &[PathBuf], out: Option<PathBuf>, plots: Option<PathBuf>) -> Result<()> {
    let out = out.unwrap_or_else(|| ctx.ws.reports());
    let plots = plots.unwrap_or_else(|| ctx.ws.plots());
    let (real_set, synth) = load_pair(real, synthetic)?;
    let mut run = ctx.run("analyze");
    run.input(real)?;
    for p in synthetic {
        run.input(p)?;
    }

    let mut summary = summarise(&real_set, "real")?;
    summary.extend(summarise(&synth, "synthetic")?);
    run.write(&out.join("features.csv"), feature_summary_csv(&summary).as_bytes())?;

    let mut outliers = Vec::new();
    for (source, set) in [("real", &real_set), ("synthetic", &synth)] {
        let flagged = flag_outliers(set)?;
        let percent = if set.is_empty() { 0.0 } else { 100.0 * flagged.len() as f64 / set.len() as f64 };
        outliers.push(OutlierReport { source: source.to_owned(), trials: set.len(), flagged, percent });
    }
    run.write_json(&out.join("outliers.json"), &outliers)?;

    let mut profs = profiles(&real_set, "real")?;
    profs.extend(profiles(&synth, "synthetic")?);
    let mut csv = String::from("class,source,step,time,mean,std\n");
    for p in &profs {
        for (i, (m, s)) in p.mean.iter().zip(&p.std).enumerate() {
            let _ = writeln!(csv, "{},{},{},{},{},{}", p.class, p.source, i, i as f64 / p.rate, m, s);
        }
    }
    run.write(&out.join("mean_profiles.csv"), csv.as_bytes())?;
    run.write(&plots.join("mean_profiles.svg"), profile_plot(&profs).as_bytes())?;

    let cells = feature_histograms(&real_set, &synth)?;
    run.write(&out.join("histograms.csv"), histogram_csv(&cells).as_bytes())?;
    run.write_json(&out.join("distances.json"), &distance_table(&cells))?;
    run.write(&plots.join("histograms.svg"), histogram_plot(&cells).as_bytes())?;

    let (population, meta) = flatten_population(&[("real", &real_set), ("synthetic", &synth)])?;
    let pca = pca2(&population)?;
    run.write(&out.join("projection_pca.csv"), projection_csv(&pca, &meta)?.as_bytes())?;
    run.write_json(&out.join("projection_pca.json"), &pca.meta)?;
    run.write(&plots.join("pca.svg"), projection_plot(&pca, &meta, "PCA").as_bytes())?;

    if ctx.config.analysis.tsne {
        let cfg = ctx.config.analysis.tsne_config();
        if (population.nrows() as f64) < 3.0 * cfg.perplexity {
            log::warn!("skipping t-SNE: {} points are too few for perplexity {}", population.nrows(), cfg.perplexity);
            run.note("t-SNE skipped: too few points for the configured perplexity");
        } else {
            let tsne = tsne2(&population, &cfg)?;
            run.write(&out.join("projection_tsne.csv"), projection_csv(&tsne, &meta)?.as_bytes())?;
            run.write_json(&out.join("projection_tsne.json"), &tsne.meta)?;
            run.write(&plots.join("tsne.svg"), projection_plot(&tsne, &meta, "t-SNE").as_bytes())?;
        }
    }
    run.finish(&out.join("analyze.run.json"))?;
    Ok(())
}

/// Surrogate data, one model per class, as many synthetic trials as real
/// ones per class, then evaluation and analysis.
pub fn pipeline(ctx: &Context) -> Result<()> {
    let archive = surrogate(ctx, None)?;
    let real = load_archive(&archive, Provenance::Surrogate)?;
    let mut synthetic = Vec::new();
    for class in ClassLabel::ALL {
        let model = train(ctx, &archive, class, None)?;
        let n = ctx.config.generate.per_class.unwrap_or_else(|| real.count(class));
        synthetic.push(generate(ctx, &model, Some(n), None)?);
    }
    eval(ctx, &archive, &synthetic, None)?;
    analyze(ctx, &archive, &synthetic, None, None)?;
    Ok(())
}
