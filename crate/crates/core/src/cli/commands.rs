use std::fs::{self, File};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use rayon::prelude::*;

use super::{
    CliError, ConfigFile, EvalArgs, FeatureChoice, Format, ModelChoice, PredictArgs, PrepArgs,
    ReportArgs, ReportFormat, ScalarChoice, TableArgs, TrainArgs,
};
use crate::corpus::{dataset_stats, load_documents, Document, Label, LabelMode};
use crate::features::{FeatureKind, Featurizer};
use crate::metrics::{
    classification_report, confusion_matrix, render_confusion, render_confusion_html, JsonReport,
};
use crate::models::{lr_fit, nb_fit, predict as argmax, sgd_fit, TrainConfig};
use crate::persistence::{
    decode, encode, peek_scalar_bits, BundleMetadata, Classifier, ModelBundle, PersistError,
};
use crate::scalar::Scalar;
use crate::textprep::{load_lemma_file, load_stopword_file, preprocess_corpus, PipelineConfig};
use crate::Exact;

fn read_corpus(paths: &[PathBuf], mode: LabelMode) -> Result<Vec<Document>, CliError> {
    let mut docs = Vec::new();
    for path in paths {
        let file = File::open(path).map_err(|e| CliError::read(path, e))?;
        let part =
            load_documents(io::BufReader::new(file), mode).map_err(|source| CliError::Corpus {
                path: path.clone(),
                source,
            })?;
        docs.extend(part);
    }
    Ok(docs)
}

fn pipeline(tables: &TableArgs, config: &ConfigFile) -> Result<PipelineConfig, CliError> {
    let mut cfg = PipelineConfig::default();
    if let Some(path) = tables
        .stopwords
        .clone()
        .or_else(|| config.path("stopwords"))
    {
        cfg = cfg.with_stopwords(load_stopword_file(&path)?)?;
    }
    if let Some(path) = tables.lemmas.clone().or_else(|| config.path("lemmas")) {
        cfg = cfg.with_lemma_exceptions(load_lemma_file(&path)?)?;
    }
    Ok(cfg)
}

fn load_config(path: Option<&Path>) -> Result<ConfigFile, CliError> {
    path.map(ConfigFile::load)
        .transpose()
        .map(Option::unwrap_or_default)
}

/// Sends `text` to `out`, or to stdout when no path is given.
fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| CliError::write(path, e)),
        None => {
            let mut stdout = io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|e| CliError::write(Path::new("<stdout>"), e))
        }
    }
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    // writing to memory cannot fail
    w.write_record(header).expect("in-memory csv");
    for row in rows {
        w.write_record(&row).expect("in-memory csv");
    }
    w.into_inner().expect("in-memory csv")
}

fn emit_bytes(out: Option<&Path>, bytes: &[u8]) -> Result<(), CliError> {
    match out {
        Some(path) => fs::write(path, bytes).map_err(|e| CliError::write(path, e)),
        None => io::stdout()
            .lock()
            .write_all(bytes)
            .map_err(|e| CliError::write(Path::new("<stdout>"), e)),
    }
}

pub(super) fn prep(args: &PrepArgs) -> Result<(), CliError> {
    let config = load_config(args.config.as_deref())?;
    let cfg = pipeline(&args.tables, &config)?;
    let docs = read_corpus(&args.inputs, LabelMode::Detect)?;
    let clean = preprocess_corpus(&docs, &cfg);
    let rows = clean.into_iter().map(|d| {
        vec![
            d.id,
            d.label
                .map(|l| l.display_name().to_string())
                .unwrap_or_default(),
            d.tokens.join(","),
        ]
    });
    emit_bytes(
        args.out.as_deref(),
        &csv_bytes(&["public_id", "label", "tokens"], rows),
    )
}

/// Training options after merging flags, config file and defaults.
#[derive(Debug, Clone, PartialEq)]
pub(super) struct TrainSettings {
    pub model: ModelChoice,
    pub features: FeatureKind,
    pub scalar: ScalarChoice,
    pub train: TrainConfig,
    pub timestamp: u64,
}

fn enum_value<E: ValueEnum>(config: &ConfigFile, key: &str) -> Result<Option<E>, CliError> {
    config
        .raw(key)
        .map(|v| {
            E::from_str(v, true).map_err(|e| CliError::Usage(format!("config key `{key}`: {e}")))
        })
        .transpose()
}

pub(super) fn resolve_train(
    args: &TrainArgs,
    config: &ConfigFile,
) -> Result<TrainSettings, CliError> {
    let model = match args.model {
        Some(m) => m,
        None => enum_value::<ModelChoice>(config, "model")?
            .ok_or_else(|| CliError::Usage("no model given; pass --model nb|lr|sgd".into()))?,
    };
    let features: FeatureKind = match args.features {
        Some(f) => f.into(),
        None => enum_value::<FeatureChoice>(config, "features")?
            .map_or(model.standard_features(), Into::into),
    };
    let force = args.force || config.flag("force")?;
    if features != model.standard_features() && !force {
        return Err(CliError::Usage(format!(
            "model {} is paired with {} features; pass --force to use {} features",
            model.kind().name(),
            model.standard_features().name(),
            features.name()
        )));
    }
    let scalar = match args.scalar {
        Some(s) => s,
        None => enum_value(config, "scalar")?.unwrap_or(ScalarChoice::F64),
    };

    let d = TrainConfig::default();
    let train = TrainConfig {
        nb_alpha: args
            .nb_alpha
            .or(config.get("nb_alpha")?)
            .unwrap_or(d.nb_alpha),
        lr_c: args.c.or(config.get("c")?).unwrap_or(d.lr_c),
        lr_tol: args.tol.or(config.get("tol")?).unwrap_or(d.lr_tol),
        lr_max_iter: args
            .max_iter
            .or(config.get("max_iter")?)
            .unwrap_or(d.lr_max_iter),
        sgd_alpha: args
            .sgd_alpha
            .or(config.get("sgd_alpha")?)
            .unwrap_or(d.sgd_alpha),
        sgd_max_epochs: args
            .epochs
            .or(config.get("epochs")?)
            .unwrap_or(d.sgd_max_epochs),
        sgd_tol: args.sgd_tol.or(config.get("sgd_tol")?).unwrap_or(d.sgd_tol),
        sgd_patience: args
            .patience
            .or(config.get("patience")?)
            .unwrap_or(d.sgd_patience),
        seed: args.seed.or(config.get("seed")?).unwrap_or(d.seed),
    };
    train.validate()?;

    let timestamp = match args.timestamp.or(config.get("timestamp")?) {
        Some(t) => t,
        None => match std::env::var("SOURCE_DATE_EPOCH") {
            Ok(v) => v.trim().parse().map_err(|_| {
                CliError::Usage(format!("SOURCE_DATE_EPOCH must be an integer, got `{v}`"))
            })?,
            Err(_) => 0,
        },
    };
    Ok(TrainSettings {
        model,
        features,
        scalar,
        train,
        timestamp,
    })
}

fn fit_bundle<T: Scalar>(
    docs: &[Document],
    pipeline: PipelineConfig,
    s: &TrainSettings,
) -> Result<ModelBundle<T>, CliError> {
    let counts = dataset_stats(docs).map_err(|source| CliError::Corpus {
        path: PathBuf::from("<training data>"),
        source,
    })?;
    let clean = preprocess_corpus(docs, &pipeline);
    let features = Featurizer::<T>::fit(&clean, s.features);
    let x = features.transform_all(&clean);
    let y: Vec<Label> = docs.iter().filter_map(|d| d.label).collect();
    let model = match s.model {
        ModelChoice::Nb => Classifier::NaiveBayes(nb_fit(&x, &y, T::lit(s.train.nb_alpha))?),
        ModelChoice::Lr => Classifier::Linear(lr_fit(&x, &y, &s.train)?),
        ModelChoice::Sgd => Classifier::Linear(sgd_fit(&x, &y, &s.train)?),
    };
    let metadata = BundleMetadata {
        n_train_docs: counts.total,
        class_counts: counts,
        created_unix: s.timestamp,
    };
    ModelBundle::new(pipeline, features, model, metadata).map_err(|source| CliError::Bundle {
        path: PathBuf::from("<new bundle>"),
        source,
    })
}

fn train_summary<T: Scalar>(b: &ModelBundle<T>) -> String {
    let mut out = format!(
        "trained {} on {} {} features from {} documents\n",
        b.model_kind().name(),
        b.features.vocab.len(),
        b.feature_kind().name(),
        b.metadata.n_train_docs
    );
    for l in Label::ALL {
        out += &format!(
            "  {:<16} {}\n",
            l.display_name(),
            b.metadata.class_counts.get(l)
        );
    }
    out += if b.model.converged() {
        "converged: yes\n"
    } else {
        "converged: no (iteration limit reached)\n"
    };
    out
}

pub(super) fn train(args: &TrainArgs) -> Result<(), CliError> {
    let config = load_config(args.config.as_deref())?;
    let settings = resolve_train(args, &config)?;
    let cfg = pipeline(&args.tables, &config)?;
    let docs = read_corpus(&args.inputs, LabelMode::Labeled)?;
    let (bytes, summary) = match settings.scalar {
        ScalarChoice::F32 => {
            let b = fit_bundle::<f32>(&docs, cfg, &settings)?;
            (encode(&b), train_summary(&b))
        }
        ScalarChoice::F64 => {
            let b = fit_bundle::<f64>(&docs, cfg, &settings)?;
            (encode(&b), train_summary(&b))
        }
    };
    fs::write(&args.out, bytes).map_err(|e| CliError::write(&args.out, e))?;
    if summary.contains("converged: no") {
        eprintln!("warning: training stopped at the iteration limit");
    }
    emit(None, &summary)
}

fn read_bundle_bytes(path: &Path) -> Result<(Vec<u8>, u8), CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::read(path, e))?;
    let bits = peek_scalar_bits(&bytes).map_err(|source| CliError::Bundle {
        path: path.to_path_buf(),
        source,
    })?;
    Ok((bytes, bits))
}

fn open_bundle<T: Scalar>(path: &Path, bytes: &[u8]) -> Result<ModelBundle<T>, CliError> {
    decode(bytes).map_err(|source| CliError::Bundle {
        path: path.to_path_buf(),
        source,
    })
}

/// Predicted label and raw scores per document, in input order.
fn score_docs<T: Scalar>(
    bundle: &ModelBundle<T>,
    docs: &[Document],
) -> Result<Vec<(Label, [f64; 4])>, CliError> {
    let clean = preprocess_corpus(docs, &bundle.pipeline);
    clean
        .par_iter()
        .map(|d| {
            let scores = bundle.scores(d)?;
            Ok((argmax(&scores)?, scores.map(|s| s.widen())))
        })
        .collect()
}

fn with_bundle<R>(
    path: &Path,
    f32_fn: impl FnOnce(ModelBundle<f32>) -> Result<R, CliError>,
    f64_fn: impl FnOnce(ModelBundle<f64>) -> Result<R, CliError>,
) -> Result<R, CliError> {
    let (bytes, bits) = read_bundle_bytes(path)?;
    match bits {
        32 => f32_fn(open_bundle(path, &bytes)?),
        64 => f64_fn(open_bundle(path, &bytes)?),
        other => Err(CliError::Bundle {
            path: path.to_path_buf(),
            source: PersistError::Validation {
                field: "scalar_bits",
                reason: format!("unsupported width {other}"),
            },
        }),
    }
}

pub(super) fn eval(args: &EvalArgs) -> Result<(), CliError> {
    let docs = read_corpus(&args.inputs, LabelMode::Labeled)?;
    let (title, scored) = with_bundle(
        &args.bundle,
        |b| Ok((grid_title(&b), score_docs(&b, &docs)?)),
        |b| Ok((grid_title(&b), score_docs(&b, &docs)?)),
    )?;
    let truth: Vec<Label> = docs.iter().filter_map(|d| d.label).collect();
    let predicted: Vec<Label> = scored.iter().map(|(l, _)| *l).collect();
    let conf = confusion_matrix(&truth, &predicted)?;
    let text = format!(
        "{}\n{}",
        classification_report::<Exact>(&conf).to_text(),
        render_confusion(&conf, &title)
    );

    if let Some(path) = &args.html {
        fs::write(path, render_confusion_html(&conf, &title))
            .map_err(|e| CliError::write(path, e))?;
    }
    match args.format {
        Format::Text => emit(args.out.as_deref(), &text),
        Format::Json => {
            let report = classification_report::<f64>(&conf).to_json();
            let json = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
            if args.out.is_some() {
                emit(None, &text)?;
            }
            emit(args.out.as_deref(), &json)
        }
    }
}

fn grid_title<T: Scalar>(b: &ModelBundle<T>) -> String {
    format!(
        "Confusion matrix: {} with {} features",
        b.model_kind().name(),
        b.feature_kind().name()
    )
}

pub const PREDICTION_HEADER: [&str; 6] = [
    "public_id",
    "predicted_label",
    "score_false",
    "score_true",
    "score_partially_false",
    "score_other",
];

pub(super) fn predict(args: &PredictArgs) -> Result<(), CliError> {
    let docs = read_corpus(&args.inputs, LabelMode::Unlabeled)?;
    let scored = with_bundle(
        &args.bundle,
        |b| score_docs(&b, &docs),
        |b| score_docs(&b, &docs),
    )?;
    let rows = docs.iter().zip(scored).map(|(d, (label, scores))| {
        let mut row = vec![d.id.clone(), label.display_name().to_string()];
        row.extend(scores.iter().map(|s| s.to_string()));
        row
    });
    emit_bytes(args.out.as_deref(), &csv_bytes(&PREDICTION_HEADER, rows))
}

pub(super) fn report(args: &ReportArgs) -> Result<(), CliError> {
    let text = fs::read_to_string(&args.input).map_err(|e| CliError::read(&args.input, e))?;
    let json: JsonReport = serde_json::from_str(&text).map_err(|source| CliError::Report {
        path: args.input.clone(),
        source,
    })?;
    let conf = json.confusion()?;
    let title = "Confusion matrix";
    let rendered = match args.format {
        ReportFormat::Text => {
            format!(
                "{}\n{}",
                classification_report::<Exact>(&conf).to_text(),
                render_confusion(&conf, title)
            )
        }
        ReportFormat::Html => render_confusion_html(&conf, title),
    };
    emit(args.out.as_deref(), &rendered)
}
