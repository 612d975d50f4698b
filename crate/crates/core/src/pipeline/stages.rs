//! Stage orchestration: each stage reads the previous stage's artifacts from
//! the workspace, writes its own under a per-stage subdirectory, and is
//! byte-reproducible given the same inputs and seed. Existing artifacts are
//! never overwritten without `force`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::chooser::{
    build_link_graph, choose_general, pair_probability, resolve_links, Candidate, Choice,
    Decision, Method, TestTriple,
};
use crate::error::{Error, Result};
use crate::io::{load_matrix, save_matrix};
use crate::numeric::{Matrix, Rng, Vector};
use crate::pipeline::config::{PipelineConfig, Strategy};
use crate::pipeline::manifest::{load_test_manifest, load_train_manifest, TestRecord};
use crate::rbm::{load_rbm, save_rbm, train_stack, RbmStack, RbmVariant, Standardizer};
use crate::siamese::{
    load_siamese, save_siamese, train, LossConfig, SiameseParams, TrainOptions,
};
use crate::text::{encode_bow, normalize_token, Vocabulary};
use crate::vision::{
    extract_image_features, prune_zero_columns, select_columns, RasterImage,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Features,
    Vocab,
    Rbm,
    Siamese,
    Choose,
    Evaluate,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Features => "features",
            Stage::Vocab => "vocab",
            Stage::Rbm => "rbm",
            Stage::Siamese => "siamese",
            Stage::Choose => "choose",
            Stage::Evaluate => "evaluate",
        }
    }

    pub fn parse(s: &str) -> Result<Stage> {
        match s {
            "features" => Ok(Stage::Features),
            "vocab" => Ok(Stage::Vocab),
            "rbm" => Ok(Stage::Rbm),
            "siamese" => Ok(Stage::Siamese),
            "choose" => Ok(Stage::Choose),
            "evaluate" => Ok(Stage::Evaluate),
            other => Err(Error::Usage(format!("unknown stage '{other}'"))),
        }
    }

    pub const ALL: [Stage; 6] = [
        Stage::Features,
        Stage::Vocab,
        Stage::Rbm,
        Stage::Siamese,
        Stage::Choose,
        Stage::Evaluate,
    ];
}

/// Artifact paths inside a workspace directory.
pub struct Workspace {
    root: PathBuf,
}

impl Workspace {
    pub fn new(root: &Path) -> Workspace {
        Workspace {
            root: root.to_path_buf(),
        }
    }

    fn stage_dir(&self, stage: Stage) -> PathBuf {
        self.root.join(stage.as_str())
    }

    pub fn train_image_l1(&self) -> PathBuf {
        self.stage_dir(Stage::Features).join("train_image_l1.mat")
    }
    pub fn test_image_l1(&self) -> PathBuf {
        self.stage_dir(Stage::Features).join("test_image_l1.mat")
    }
    pub fn organizer_kept(&self) -> PathBuf {
        self.stage_dir(Stage::Features).join("organizer_kept.txt")
    }
    pub fn vocab_file(&self) -> PathBuf {
        self.stage_dir(Stage::Vocab).join("vocab.txt")
    }
    pub fn train_bow(&self) -> PathBuf {
        self.stage_dir(Stage::Vocab).join("train_bow.mat")
    }
    pub fn test_bow_a(&self) -> PathBuf {
        self.stage_dir(Stage::Vocab).join("test_bow_a.mat")
    }
    pub fn test_bow_b(&self) -> PathBuf {
        self.stage_dir(Stage::Vocab).join("test_bow_b.mat")
    }
    pub fn image_rbm(&self, layer: usize) -> PathBuf {
        self.stage_dir(Stage::Rbm).join(format!("image_rbm{layer}.ckpt"))
    }
    pub fn text_rbm(&self, layer: usize) -> PathBuf {
        self.stage_dir(Stage::Rbm).join(format!("text_rbm{layer}.ckpt"))
    }
    pub fn image_standardizer(&self) -> PathBuf {
        self.stage_dir(Stage::Rbm).join("image_standardizer.mat")
    }
    pub fn train_image_l2(&self) -> PathBuf {
        self.stage_dir(Stage::Rbm).join("train_image_l2.mat")
    }
    pub fn train_text_l2(&self) -> PathBuf {
        self.stage_dir(Stage::Rbm).join("train_text_l2.mat")
    }
    pub fn test_image_l2(&self) -> PathBuf {
        self.stage_dir(Stage::Rbm).join("test_image_l2.mat")
    }
    pub fn test_text_a_l2(&self) -> PathBuf {
        self.stage_dir(Stage::Rbm).join("test_text_a_l2.mat")
    }
    pub fn test_text_b_l2(&self) -> PathBuf {
        self.stage_dir(Stage::Rbm).join("test_text_b_l2.mat")
    }
    pub fn siamese_checkpoint(&self) -> PathBuf {
        self.stage_dir(Stage::Siamese).join("siamese.ckpt")
    }
    pub fn siamese_history(&self) -> PathBuf {
        self.stage_dir(Stage::Siamese).join("history.tsv")
    }
    pub fn decisions(&self) -> PathBuf {
        self.stage_dir(Stage::Choose).join("decisions.tsv")
    }
    pub fn metrics(&self) -> PathBuf {
        self.stage_dir(Stage::Evaluate).join("metrics.txt")
    }
}

fn require_artifact(path: &Path, producing_stage: Stage) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::StageOrdering(format!(
            "missing {}; run the '{}' stage first",
            path.display(),
            producing_stage.as_str()
        )))
    }
}

fn guard_outputs(paths: &[PathBuf], force: bool) -> Result<()> {
    if force {
        return Ok(());
    }
    for p in paths {
        if p.exists() {
            return Err(Error::Validation(format!(
                "artifact {} already exists; pass --force to overwrite",
                p.display()
            )));
        }
    }
    Ok(())
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E3779B97F4A7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Stable per-stage seed derivation so stages can run in separate processes.
fn stage_seed(seed: u64, salt: u64) -> u64 {
    splitmix64(seed ^ splitmix64(salt))
}

fn resolve_path(base: &Path, raw: &str) -> PathBuf {
    let p = Path::new(raw);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn is_vector_file(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()),
        Some("vec") | Some("mat")
    )
}

fn decode_raster(path: &Path) -> Result<RasterImage> {
    let img = image::open(path)
        .map_err(|e| Error::Format(format!("decoding {}: {e}", path.display())))?
        .to_rgb8();
    RasterImage::from_rgb8(img.width() as usize, img.height() as usize, img.into_raw())
}

fn load_vector_file(path: &Path) -> Result<Vec<f64>> {
    let m = load_matrix(path)?;
    if m.nrows() != 1 {
        return Err(Error::Format(format!(
            "vector file {} has {} rows, expected 1",
            path.display(),
            m.nrows()
        )));
    }
    Ok(m.row(0).to_vec())
}

/// Whitespace-delimited text matrix (organizer feature files).
fn load_delimited_matrix(path: &Path) -> Result<Matrix> {
    let body = fs::read_to_string(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, line) in body.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: std::result::Result<Vec<f64>, _> = line
            .split_whitespace()
            .map(|tok| tok.parse::<f64>())
            .collect();
        let row = row.map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: idx + 1,
            detail: e.to_string(),
        })?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(Error::Parse {
                    path: path.display().to_string(),
                    line: idx + 1,
                    detail: format!("row has {} columns, expected {}", row.len(), first.len()),
                });
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Validation(format!(
            "{} has no rows",
            path.display()
        )));
    }
    let cols = rows[0].len();
    Matrix::from_shape_vec((rows.len(), cols), rows.into_iter().flatten().collect())
        .map_err(|e| Error::Format(e.to_string()))
}

fn feature_rows_to_matrix(rows: Vec<Vec<f64>>, what: &str) -> Result<Matrix> {
    let cols = rows[0].len();
    if let Some(bad) = rows.iter().position(|r| r.len() != cols) {
        return Err(Error::Dimension(format!(
            "{what}: row {bad} has {} values, expected {cols}",
            rows[bad].len()
        )));
    }
    let n = rows.len();
    Matrix::from_shape_vec((n, cols), rows.into_iter().flatten().collect())
        .map_err(|e| Error::Format(e.to_string()))
}

/// Level-1 image features for every manifest entry. Raster files go through
/// the descriptor bank; `.vec`/`.mat` files are taken as precomputed level-1
/// vectors (the synthetic path).
fn extract_split(
    paths: &[PathBuf],
    organizer_rows: Option<&Matrix>,
    what: &str,
) -> Result<Matrix> {
    let mut rows = Vec::with_capacity(paths.len());
    for (i, path) in paths.iter().enumerate() {
        if is_vector_file(path) {
            if organizer_rows.is_some() {
                return Err(Error::Usage(
                    "organizer features apply to raster images, not precomputed vectors".into(),
                ));
            }
            rows.push(load_vector_file(path)?);
        } else {
            let img = decode_raster(path)?;
            let organizer_row: Option<Vec<f64>> =
                organizer_rows.map(|m| m.row(i).to_vec());
            let fv = extract_image_features(&img, organizer_row.as_deref())?;
            rows.push(fv.values);
        }
    }
    feature_rows_to_matrix(rows, what)
}

pub fn run_features(
    cfg: &PipelineConfig,
    base: &Path,
    ws: &Workspace,
    force: bool,
) -> Result<()> {
    let train = load_train_manifest(&resolve_path(base, &cfg.train_manifest))?;
    let test = load_test_manifest(&resolve_path(base, &cfg.test_manifest))?;
    let mut outputs = vec![ws.train_image_l1(), ws.test_image_l1()];
    if cfg.features.use_organizer {
        outputs.push(ws.organizer_kept());
    }
    guard_outputs(&outputs, force)?;
    fs::create_dir_all(ws.stage_dir(Stage::Features))?;

    let (train_org, test_org, kept) = if cfg.features.use_organizer {
        let train_path = cfg.features.organizer_train.as_ref().ok_or_else(|| {
            Error::Validation("use_organizer set but organizer_train missing".into())
        })?;
        let test_path = cfg.features.organizer_test.as_ref().ok_or_else(|| {
            Error::Validation("use_organizer set but organizer_test missing".into())
        })?;
        let raw_train = load_delimited_matrix(&resolve_path(base, train_path))?;
        if raw_train.nrows() != train.len() {
            return Err(Error::Validation(format!(
                "organizer file has {} rows, train manifest has {}",
                raw_train.nrows(),
                train.len()
            )));
        }
        let (pruned, kept) =
            prune_zero_columns(&raw_train, cfg.features.organizer_expected_kept)?;
        let raw_test = load_delimited_matrix(&resolve_path(base, test_path))?;
        if raw_test.nrows() != test.len() {
            return Err(Error::Validation(format!(
                "organizer test file has {} rows, test manifest has {}",
                raw_test.nrows(),
                test.len()
            )));
        }
        let test_pruned = select_columns(&raw_test, &kept);
        (Some(pruned), Some(test_pruned), Some(kept))
    } else {
        (None, None, None)
    };

    let train_paths: Vec<PathBuf> = train.iter().map(|r| r.image_path.clone()).collect();
    let test_paths: Vec<PathBuf> = test.iter().map(|r| r.image_path.clone()).collect();
    let train_l1 = extract_split(&train_paths, train_org.as_ref(), "train image features")?;
    let test_l1 = extract_split(&test_paths, test_org.as_ref(), "test image features")?;
    if train_l1.ncols() != test_l1.ncols() {
        return Err(Error::Dimension(format!(
            "train features have {} dims but test features {}",
            train_l1.ncols(),
            test_l1.ncols()
        )));
    }
    save_matrix(&ws.train_image_l1(), &train_l1)?;
    save_matrix(&ws.test_image_l1(), &test_l1)?;
    if let Some(kept) = kept {
        let mut body = String::new();
        for k in kept {
            writeln!(body, "{k}").unwrap();
        }
        fs::write(ws.organizer_kept(), body)?;
    }
    Ok(())
}

pub fn run_vocab(cfg: &PipelineConfig, base: &Path, ws: &Workspace, force: bool) -> Result<()> {
    let train = load_train_manifest(&resolve_path(base, &cfg.train_manifest))?;
    let test = load_test_manifest(&resolve_path(base, &cfg.test_manifest))?;
    let outputs = [
        ws.vocab_file(),
        ws.train_bow(),
        ws.test_bow_a(),
        ws.test_bow_b(),
    ];
    guard_outputs(&outputs, force)?;
    fs::create_dir_all(ws.stage_dir(Stage::Vocab))?;

    let corpus: Vec<Vec<String>> = train.iter().map(|r| r.tags.clone()).collect();
    let vocab = Vocabulary::build(&corpus, cfg.vocab.size)?;
    vocab.save(&ws.vocab_file())?;

    let encode_all = |tag_lists: Vec<&Vec<String>>| -> Result<Matrix> {
        let mut m = Matrix::zeros((tag_lists.len(), vocab.len()));
        for (r, tags) in tag_lists.iter().enumerate() {
            let bow = encode_bow(tags, &vocab)?;
            for (c, bit) in bow.bits().iter().enumerate() {
                m[[r, c]] = *bit as f64;
            }
        }
        Ok(m)
    };
    save_matrix(&ws.train_bow(), &encode_all(train.iter().map(|r| &r.tags).collect())?)?;
    save_matrix(&ws.test_bow_a(), &encode_all(test.iter().map(|r| &r.desc_a).collect())?)?;
    save_matrix(&ws.test_bow_b(), &encode_all(test.iter().map(|r| &r.desc_b).collect())?)?;
    Ok(())
}

fn save_stack(ws: &Workspace, stack: &RbmStack, modality: &str) -> Result<()> {
    let (p1, p2) = match modality {
        "image" => (ws.image_rbm(1), ws.image_rbm(2)),
        _ => (ws.text_rbm(1), ws.text_rbm(2)),
    };
    save_rbm(&p1, &stack.layer1)?;
    save_rbm(&p2, &stack.layer2)?;
    if let Some(st) = &stack.standardizer {
        save_matrix(&ws.image_standardizer(), &st.to_matrix())?;
    }
    Ok(())
}

/// Reloads a trained stack from its checkpoints (used by downstream tools
/// that embed new data with a finished workspace).
pub fn load_stack(ws: &Workspace, modality: &str) -> Result<RbmStack> {
    let (p1, p2) = match modality {
        "image" => (ws.image_rbm(1), ws.image_rbm(2)),
        _ => (ws.text_rbm(1), ws.text_rbm(2)),
    };
    require_artifact(&p1, Stage::Rbm)?;
    require_artifact(&p2, Stage::Rbm)?;
    let layer1 = load_rbm(&p1)?;
    let layer2 = load_rbm(&p2)?;
    let standardizer = if modality == "image" && ws.image_standardizer().exists() {
        Some(Standardizer::from_matrix(&load_matrix(&ws.image_standardizer())?)?)
    } else {
        None
    };
    Ok(RbmStack {
        layer1,
        layer2,
        standardizer,
    })
}

pub fn run_rbm(cfg: &PipelineConfig, _base: &Path, ws: &Workspace, force: bool) -> Result<()> {
    require_artifact(&ws.train_image_l1(), Stage::Features)?;
    require_artifact(&ws.train_bow(), Stage::Vocab)?;
    let mut outputs = vec![
        ws.image_rbm(1),
        ws.image_rbm(2),
        ws.text_rbm(1),
        ws.text_rbm(2),
        ws.train_image_l2(),
        ws.train_text_l2(),
        ws.test_image_l2(),
        ws.test_text_a_l2(),
        ws.test_text_b_l2(),
    ];
    if cfg.rbm.image.variant()? == RbmVariant::Gaussian {
        outputs.push(ws.image_standardizer());
    }
    guard_outputs(&outputs, force)?;
    fs::create_dir_all(ws.stage_dir(Stage::Rbm))?;

    let train_image = load_matrix(&ws.train_image_l1())?;
    let (img_cfg1, img_cfg2) = cfg.rbm.image.cd_configs(stage_seed(cfg.seed, 1))?;
    let mut img_rng = Rng::from_seed(img_cfg1.seed);
    let image_stack = train_stack(
        &train_image,
        [cfg.rbm.image.hidden1, cfg.rbm.image.hidden2],
        cfg.rbm.image.variant()?,
        &img_cfg1,
        &img_cfg2,
        &mut img_rng,
    )?;
    save_stack(ws, &image_stack, "image")?;
    save_matrix(&ws.train_image_l2(), &image_stack.forward_batch(&train_image)?)?;
    let test_image = load_matrix(&ws.test_image_l1())?;
    save_matrix(&ws.test_image_l2(), &image_stack.forward_batch(&test_image)?)?;

    let train_bow = load_matrix(&ws.train_bow())?;
    let (txt_cfg1, txt_cfg2) = cfg.rbm.text.cd_configs(stage_seed(cfg.seed, 2))?;
    let mut txt_rng = Rng::from_seed(txt_cfg1.seed);
    let text_stack = train_stack(
        &train_bow,
        [cfg.rbm.text.hidden1, cfg.rbm.text.hidden2],
        cfg.rbm.text.variant()?,
        &txt_cfg1,
        &txt_cfg2,
        &mut txt_rng,
    )?;
    save_stack(ws, &text_stack, "text")?;
    save_matrix(&ws.train_text_l2(), &text_stack.forward_batch(&train_bow)?)?;
    save_matrix(
        &ws.test_text_a_l2(),
        &text_stack.forward_batch(&load_matrix(&ws.test_bow_a())?)?,
    )?;
    save_matrix(
        &ws.test_text_b_l2(),
        &text_stack.forward_batch(&load_matrix(&ws.test_bow_b())?)?,
    )?;
    Ok(())
}

pub fn run_siamese(cfg: &PipelineConfig, _base: &Path, ws: &Workspace, force: bool) -> Result<()> {
    require_artifact(&ws.train_image_l2(), Stage::Rbm)?;
    require_artifact(&ws.train_text_l2(), Stage::Rbm)?;
    let outputs = [ws.siamese_checkpoint(), ws.siamese_history()];
    guard_outputs(&outputs, force)?;
    fs::create_dir_all(ws.stage_dir(Stage::Siamese))?;

    let images = load_matrix(&ws.train_image_l2())?;
    let texts = load_matrix(&ws.train_text_l2())?;
    if images.nrows() != texts.nrows() || images.ncols() != texts.ncols() {
        return Err(Error::Dimension(format!(
            "level-2 shapes differ: image {:?} vs text {:?}",
            images.dim(),
            texts.dim()
        )));
    }
    let positives: Vec<(Vector, Vector)> = (0..images.nrows())
        .map(|r| (images.row(r).to_owned(), texts.row(r).to_owned()))
        .collect();

    let mut rng = Rng::from_seed(stage_seed(cfg.seed, 3));
    let mut params = SiameseParams::init(images.ncols(), cfg.siamese.code_dim, &mut rng);
    let loss_cfg = LossConfig {
        alpha: cfg.siamese.alpha,
        lambda: cfg.siamese.lambda.fixed_value(),
        sparsity: cfg.siamese.sparsity,
        seed: cfg.seed,
    };
    let opts = TrainOptions {
        epochs: cfg.siamese.epochs,
        batch_size: cfg.siamese.batch_size,
        learning_rate: cfg.siamese.learning_rate,
        momentum: cfg.siamese.momentum,
        lambda_from_upper_bound: cfg.siamese.lambda.is_auto()?,
    };
    let history = train(&mut params, &positives, &loss_cfg, &opts, &mut rng)?;
    save_siamese(&ws.siamese_checkpoint(), &params)?;

    let mut body = String::from("# epoch\timage\ttext\tcompat\ttotal\n");
    for (e, l) in history.iter().enumerate() {
        writeln!(body, "{e}\t{}\t{}\t{}\t{}", l.image, l.text, l.compat, l.total).unwrap();
    }
    fs::write(ws.siamese_history(), body)?;
    Ok(())
}

/// Builds scored test triples from the manifest and the level-2 artifacts.
fn assemble_triples(records: &[TestRecord], ws: &Workspace) -> Result<Vec<TestTriple>> {
    let image_l2 = load_matrix(&ws.test_image_l2())?;
    let text_a_l2 = load_matrix(&ws.test_text_a_l2())?;
    let text_b_l2 = load_matrix(&ws.test_text_b_l2())?;
    if image_l2.nrows() != records.len()
        || text_a_l2.nrows() != records.len()
        || text_b_l2.nrows() != records.len()
    {
        return Err(Error::Validation(format!(
            "level-2 artifacts cover {} rows but the test manifest has {}",
            image_l2.nrows(),
            records.len()
        )));
    }
    let normalize =
        |tokens: &[String]| tokens.iter().map(|t| normalize_token(t)).collect();
    records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            TestTriple::new(
        r.id.clone(),
                image_l2.row(i).to_owned(),
                Candidate {
                    tokens: normalize(&r.desc_a),
                    text_vec: text_a_l2.row(i).to_owned(),
                },
                Candidate {
                    tokens: normalize(&r.desc_b),
                    text_vec: text_b_l2.row(i).to_owned(),
                },
                r.gold,
            )
        })
        .collect()
}

pub fn run_choose(cfg: &PipelineConfig, base: &Path, ws: &Workspace, force: bool) -> Result<()> {
    require_artifact(&ws.test_image_l2(), Stage::Rbm)?;
    require_artifact(&ws.siamese_checkpoint(), Stage::Siamese)?;
    guard_outputs(&[ws.decisions()], force)?;
    fs::create_dir_all(ws.stage_dir(Stage::Choose))?;

    let records = load_test_manifest(&resolve_path(base, &cfg.test_manifest))?;
    let triples = assemble_triples(&records, ws)?;
    let siamese = load_siamese(&ws.siamese_checkpoint())?;

    let decisions: Vec<Decision> = match cfg.strategy {
        Strategy::General => triples
            .iter()
            .map(|t| choose_general(t, &siamese))
            .collect::<Result<_>>()?,
        Strategy::Link => {
            let graph = build_link_graph(&triples)?;
            resolve_links(&graph, &triples, &siamese)?
        }
    };

    for d in &decisions {
        if d.tie {
            eprintln!(
                "warning: triple {} scored an exact tie; choosing candidate A",
                d.id
            );
        }
    }

    let mut body =
        String::from("# id\tchosen\tscore_a\tscore_b\tmethod\tp_first\tprob_a_correct\n");
    for d in &decisions {
        // Eq.-style probability in the file's candidate order (A first):
        // small p_first means A fits better; prob_a_correct = 1 - p_first.
        let (p_first, _degenerate) = pair_probability(d.score_a, d.score_b)?;
        writeln!(
            body,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            d.id,
            d.chosen.as_str(),
            d.score_a,
            d.score_b,
            d.method.as_str(),
            p_first,
            1.0 - p_first
        )
        .unwrap();
    }
    fs::write(ws.decisions(), body)?;
    Ok(())
}

/// One parsed row of decisions.tsv.
#[derive(Debug, Clone)]
pub struct DecisionRow {
    pub id: String,
    pub chosen: Choice,
    pub score_a: f64,
    pub score_b: f64,
    pub method: Method,
    pub prob_a: f64,
}

pub fn load_decisions(path: &Path) -> Result<Vec<DecisionRow>> {
    let body = fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for (idx, line) in body.lines().enumerate() {
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 7 {
            return Err(Error::Parse {
                path: path.display().to_string(),
                line: idx + 1,
                detail: format!("expected 7 fields, found {}", fields.len()),
            });
        }
        let parse_f = |s: &str| -> Result<f64> {
            s.parse::<f64>().map_err(|e| Error::Parse {
                path: path.display().to_string(),
                line: idx + 1,
                detail: e.to_string(),
            })
        };
        rows.push(DecisionRow {
            id: fields[0].to_string(),
            chosen: Choice::parse(fields[1])?,
            score_a: parse_f(fields[2])?,
            score_b: parse_f(fields[3])?,
            method: match fields[4] {
                "general" => Method::General,
                "link" => Method::Link,
                other => {
                    return Err(Error::Parse {
                        path: path.display().to_string(),
                        line: idx + 1,
                        detail: format!("unknown method '{other}'"),
                    })
                }
            },
            prob_a: parse_f(fields[6])?,
        });
    }
    if rows.is_empty() {
        return Err(Error::Validation(format!(
            "no decisions in {}",
            path.display()
        )));
    }
    Ok(rows)
}

/// Accuracy and AUC of decisions against gold labels.
pub fn evaluate_decisions(
    decisions: &[DecisionRow],
    gold: &[(String, Choice)],
) -> Result<(f64, f64)> {
    if decisions.len() != gold.len() {
        return Err(Error::Validation(format!(
            "{} decisions vs {} gold labels",
            decisions.len(),
            gold.len()
        )));
    }
    let mut correct = 0usize;
    let mut scored = Vec::with_capacity(decisions.len());
    for (d, (gid, gchoice)) in decisions.iter().zip(gold) {
        if &d.id != gid {
            return Err(Error::Validation(format!(
                "decision id '{}' does not align with gold id '{gid}'",
                d.id
            )));
        }
        if d.chosen == *gchoice {
            correct += 1;
        }
        scored.push((d.prob_a, *gchoice == Choice::A));
    }
    let accuracy = correct as f64 / decisions.len() as f64;
    let auc = crate::chooser::auc(&scored)?;
    Ok((accuracy, auc))
}

pub fn run_evaluate(cfg: &PipelineConfig, base: &Path, ws: &Workspace, force: bool) -> Result<()> {
    require_artifact(&ws.decisions(), Stage::Choose)?;
    guard_outputs(&[ws.metrics()], force)?;
    fs::create_dir_all(ws.stage_dir(Stage::Evaluate))?;

    let records = load_test_manifest(&resolve_path(base, &cfg.test_manifest))?;
    let gold: Vec<(String, Choice)> = records
        .iter()
        .map(|r| {
            r.gold
                .map(|g| (r.id.clone(), g))
                .ok_or_else(|| {
                    Error::Validation(format!("test record {} has no gold label", r.id))
                })
        })
        .collect::<Result<_>>()?;
    let decisions = load_decisions(&ws.decisions())?;
    let (accuracy, auc) = evaluate_decisions(&decisions, &gold)?;

    let body = format!(
        "accuracy\t{accuracy}\nauc\t{auc}\nn\t{}\nstrategy\t{}\n",
        decisions.len(),
        cfg.strategy.as_str()
    );
    fs::write(ws.metrics(), body)?;
    Ok(())
}

/// Dispatches one stage by name.
pub fn run_stage(
    stage: Stage,
    cfg: &PipelineConfig,
    base: &Path,
    workspace: &Path,
    force: bool,
) -> Result<()> {
    cfg.validate()?;
    fs::create_dir_all(workspace)?;
    let ws = Workspace::new(workspace);
    match stage {
        Stage::Features => run_features(cfg, base, &ws, force),
        Stage::Vocab => run_vocab(cfg, base, &ws, force),
        Stage::Rbm => run_rbm(cfg, base, &ws, force),
        Stage::Siamese => run_siamese(cfg, base, &ws, force),
        Stage::Choose => run_choose(cfg, base, &ws, force),
        Stage::Evaluate => run_evaluate(cfg, base, &ws, force),
    }
}

/// Runs every stage in order.
pub fn run_all(cfg: &PipelineConfig, base: &Path, workspace: &Path, force: bool) -> Result<()> {
    for stage in Stage::ALL {
        run_stage(stage, cfg, base, workspace, force)?;
    }
    Ok(())
}

/// Reads a metrics file back as (key, value) pairs.
pub fn load_metrics(path: &Path) -> Result<Vec<(String, String)>> {
    let body = fs::read_to_string(path)?;
    Ok(body
        .lines()
        .filter(|l| !l.trim().is_empty())
        .filter_map(|l| {
            l.split_once('\t')
                .map(|(k, v)| (k.to_string(), v.to_string()))
        })
        .collect())
}
