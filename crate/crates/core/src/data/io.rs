//! Readers and writers.
//!
//! Text formats are canonical: writing a value that was just read from a
//! file written by this module reproduces the file byte for byte. Doubles
//! are printed in their shortest round-trip form (CSV and most JSON) or with
//! 17 significant digits (RDM JSON); both parse back to the identical value.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::{BranchedModel, ModelDims, ModuleParams, BOX_DIM};
use crate::rsa::{FeatureDump, RdmStack};
use crate::search::{CostModel, PlanRepr, SharingPlan};
use crate::train::{Example, TaskDataset, TrainConfig, TrainReport};

pub const CHECKPOINT_MAGIC: &[u8; 5] = b"BFRG1";
pub const DATASET_META_FILE: &str = "dataset.json";
pub const FEATURE_MANIFEST_FILE: &str = "manifest.json";

/// Prefixes an I/O error with the path it concerns.
fn at(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    }
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(at(parent))?;
        }
    }
    fs::write(path, bytes).map_err(at(path))
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(at(path))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    write_bytes(path, text.as_bytes())
}

fn read_text(path: &Path) -> Result<String> {
    let bytes = read_bytes(path)?;
    String::from_utf8(bytes).map_err(|e| {
        Error::parse(
            format!("{}: byte {}", path.display(), e.utf8_error().valid_up_to()),
            "file is not valid UTF-8",
        )
    })
}

// ---------------------------------------------------------------- JSON

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)
        .map_err(|e| Error::InvalidConfig(format!("cannot serialize: {e}")))?;
    s.push('\n');
    Ok(s)
}

/// Parses JSON, reporting syntax errors with their position and shape
/// errors with the offending field.
pub fn from_json<T: DeserializeOwned>(text: &str, origin: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| json_error(e, origin))
}

fn json_error(e: serde_json::Error, origin: &str) -> Error {
    use serde_json::error::Category;
    let location = format!("{origin}:{}:{}", e.line(), e.column());
    match e.classify() {
        Category::Data => {
            let msg = e.to_string();
            let field = msg
                .split('`')
                .nth(1)
                .map(str::to_owned)
                .unwrap_or_else(|| location.clone());
            Error::schema(field, msg)
        }
        _ => Error::parse(location, e.to_string()),
    }
}

pub fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_text(path, &to_json(value)?)
}

pub fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    from_json(&read_text(path)?, &path.display().to_string())
}

/// One line per module, each group written inline.
pub fn plan_to_json(plan: &SharingPlan) -> Result<String> {
    let repr = PlanRepr::from(plan.clone());
    let mut s = format!(
        "{{\n  \"num_tasks\": {},\n  \"partitions\": [",
        repr.num_tasks
    );
    for (m, groups) in repr.partitions.iter().enumerate() {
        let inner: Vec<String> = groups
            .iter()
            .map(|g| {
                format!(
                    "[{}]",
                    g.iter()
                        .map(usize::to_string)
                        .collect::<Vec<_>>()
                        .join(", ")
                )
            })
            .collect();
        let sep = if m + 1 < repr.partitions.len() {
            ","
        } else {
            ""
        };
        let _ = write!(s, "\n    [{}]{sep}", inner.join(", "));
    }
    if !repr.partitions.is_empty() {
        s.push_str("\n  ");
    }
    s.push_str("]\n}\n");
    Ok(s)
}

/// Keeps the module index of structural plan errors, which plain serde
/// deserialization would flatten into a message.
pub fn plan_from_json(text: &str, origin: &str) -> Result<SharingPlan> {
    let repr: PlanRepr = from_json(text, origin)?;
    SharingPlan::try_from(repr)
}

pub fn save_plan(path: &Path, plan: &SharingPlan) -> Result<()> {
    write_text(path, &plan_to_json(plan)?)
}

pub fn load_plan(path: &Path) -> Result<SharingPlan> {
    plan_from_json(&read_text(path)?, &path.display().to_string())
}

pub fn load_costs(path: &Path) -> Result<CostModel> {
    let costs: CostModel = load_json(path)?;
    costs.validate()?;
    Ok(costs)
}

pub fn load_train_config(path: &Path) -> Result<TrainConfig> {
    let cfg: TrainConfig = load_json(path)?;
    cfg.validate()?;
    Ok(cfg)
}

// ---------------------------------------------------------------- RDM

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RdmFile {
    num_tasks: usize,
    num_modules: usize,
    matrices: Vec<Vec<Vec<f64>>>,
}

fn fmt_17(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn rdm_to_json(stack: &RdmStack) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{{");
    let _ = writeln!(s, "  \"num_tasks\": {},", stack.num_tasks());
    let _ = writeln!(s, "  \"num_modules\": {},", stack.num_modules());
    if stack.num_modules() == 0 {
        s.push_str("  \"matrices\": []\n}\n");
        return s;
    }
    s.push_str("  \"matrices\": [\n");
    for (m, rdm) in stack.matrices().iter().enumerate() {
        s.push_str("    [\n");
        for r in 0..rdm.rows() {
            let row: Vec<String> = rdm.row(r).iter().map(|&v| fmt_17(v)).collect();
            let sep = if r + 1 < rdm.rows() { "," } else { "" };
            let _ = writeln!(s, "      [{}]{sep}", row.join(", "));
        }
        let sep = if m + 1 < stack.num_modules() { "," } else { "" };
        let _ = writeln!(s, "    ]{sep}");
    }
    s.push_str("  ]\n}\n");
    s
}

pub fn rdm_from_json(text: &str, origin: &str) -> Result<RdmStack> {
    let file: RdmFile = from_json(text, origin)?;
    if file.matrices.len() != file.num_modules {
        return Err(Error::schema(
            "num_modules",
            format!(
                "declares {} modules but {} matrices follow",
                file.num_modules,
                file.matrices.len()
            ),
        ));
    }
    let n = file.num_tasks;
    let matrices = file
        .matrices
        .iter()
        .enumerate()
        .map(|(m, rows)| {
            if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                return Err(Error::schema(
                    format!("matrices[{m}]"),
                    format!("expected a {n}x{n} array"),
                ));
            }
            Matrix::from_rows(rows)
        })
        .collect::<Result<Vec<_>>>()?;
    RdmStack::new(n, matrices).map_err(|e| Error::schema("matrices", e.to_string()))
}

pub fn save_rdm(path: &Path, stack: &RdmStack) -> Result<()> {
    write_text(path, &rdm_to_json(stack))
}

pub fn load_rdm(path: &Path) -> Result<RdmStack> {
    rdm_from_json(&read_text(path)?, &path.display().to_string())
}

// ---------------------------------------------------------------- CSV

/// Shortest representation that parses back to the same double.
fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

/// Splits into lines, checks the header and yields numbered data rows.
fn csv_rows<'a>(
    text: &'a str,
    origin: &str,
    mut expected_header: impl FnMut(&[&str]) -> Result<(), String>,
) -> Result<Vec<(usize, Vec<&'a str>)>> {
    let mut lines = text
        .split('\n')
        .enumerate()
        .map(|(i, l)| (i + 1, l.strip_suffix('\r').unwrap_or(l)));
    let (_, header) = lines
        .next()
        .filter(|(_, h)| !h.is_empty())
        .ok_or_else(|| Error::parse(format!("{origin}:1"), "missing header row"))?;
    let cols: Vec<&str> = header.split(',').collect();
    expected_header(&cols).map_err(|m| Error::parse(format!("{origin}:1"), m))?;
    let mut rows = Vec::new();
    let mut ended = false;
    for (line_no, line) in lines {
        if line.is_empty() {
            ended = true;
            continue;
        }
        if ended {
            return Err(Error::parse(
                format!("{origin}:{}", line_no - 1),
                "blank line inside data",
            ));
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols.len() {
            return Err(Error::parse(
                format!("{origin}:{line_no}"),
                format!("expected {} fields, found {}", cols.len(), fields.len()),
            ));
        }
        rows.push((line_no, fields));
    }
    Ok(rows)
}

fn parse_f64(s: &str, origin: &str, line: usize, col: usize) -> Result<f64> {
    let v: f64 = s.parse().map_err(|_| {
        Error::parse(
            format!("{origin}:{line}:{}", col + 1),
            format!("`{s}` is not a number"),
        )
    })?;
    if !v.is_finite() {
        return Err(Error::parse(
            format!("{origin}:{line}:{}", col + 1),
            "value is not finite",
        ));
    }
    Ok(v)
}

fn dataset_header(d: usize) -> Vec<String> {
    (0..d)
        .map(|i| format!("x{i}"))
        .chain(std::iter::once("class".to_string()))
        .chain((0..BOX_DIM).map(|i| format!("b{i}")))
        .collect()
}

/// One row per example: input columns `x0..`, the 0-based class, then the
/// four box coordinates `b0..b3`.
pub fn dataset_to_csv(dataset: &TaskDataset) -> String {
    let mut s = dataset_header(dataset.input_dim()).join(",");
    s.push('\n');
    for ex in dataset.examples() {
        let fields: Vec<String> = ex
            .input
            .iter()
            .map(|&v| fmt_f64(v))
            .chain(std::iter::once(ex.class.to_string()))
            .chain(ex.bbox.iter().map(|&v| fmt_f64(v)))
            .collect();
        s.push_str(&fields.join(","));
        s.push('\n');
    }
    s
}

pub fn dataset_from_csv(
    text: &str,
    origin: &str,
    task_id: usize,
    num_classes: usize,
) -> Result<TaskDataset> {
    let mut input_dim = 0;
    let rows = csv_rows(text, origin, |cols| {
        if cols.len() < BOX_DIM + 2 {
            return Err(format!("expected input, class and {BOX_DIM} box columns"));
        }
        input_dim = cols.len() - BOX_DIM - 1;
        let want = dataset_header(input_dim);
        match cols.iter().zip(&want).position(|(a, b)| a != b) {
            Some(i) => Err(format!(
                "column {} should be `{}`, found `{}`",
                i + 1,
                want[i],
                cols[i]
            )),
            None => Ok(()),
        }
    })?;
    let examples = rows
        .into_iter()
        .map(|(line, f)| {
            let input = (0..input_dim)
                .map(|c| parse_f64(f[c], origin, line, c))
                .collect::<Result<Vec<_>>>()?;
            let class: usize = f[input_dim].parse().map_err(|_| {
                Error::parse(
                    format!("{origin}:{line}:{}", input_dim + 1),
                    format!("`{}` is not a class index", f[input_dim]),
                )
            })?;
            if class >= num_classes {
                return Err(Error::parse(
                    format!("{origin}:{line}:{}", input_dim + 1),
                    format!("class {class} outside [0, {num_classes})"),
                ));
            }
            let mut bbox = [0.0; BOX_DIM];
            for (k, b) in bbox.iter_mut().enumerate() {
                let c = input_dim + 1 + k;
                *b = parse_f64(f[c], origin, line, c)?;
                if !(0.0..=1.0).contains(b) {
                    return Err(Error::parse(
                        format!("{origin}:{line}:{}", c + 1),
                        "box coordinate outside [0, 1]",
                    ));
                }
            }
            Ok(Example { input, class, bbox })
        })
        .collect::<Result<Vec<_>>>()?;
    TaskDataset::new(task_id, num_classes, input_dim, examples)
}

fn feature_header(d: usize) -> Vec<String> {
    (0..d).map(|i| format!("f{i}")).collect()
}

/// One row per probe input, header `f0,f1,...`.
pub fn feature_to_csv(features: &Matrix) -> String {
    let mut s = feature_header(features.cols()).join(",");
    s.push('\n');
    for row in features.row_iter() {
        let fields: Vec<String> = row.iter().map(|&v| fmt_f64(v)).collect();
        s.push_str(&fields.join(","));
        s.push('\n');
    }
    s
}

pub fn feature_from_csv(text: &str, origin: &str) -> Result<Matrix> {
    let mut d = 0;
    let rows = csv_rows(text, origin, |cols| {
        d = cols.len();
        let want = feature_header(d);
        match cols.iter().zip(&want).position(|(a, b)| a != b) {
            Some(i) => Err(format!(
                "column {} should be `{}`, found `{}`",
                i + 1,
                want[i],
                cols[i]
            )),
            None => Ok(()),
        }
    })?;
    let data = rows
        .iter()
        .map(|(line, f)| {
            f.iter()
                .enumerate()
                .map(|(c, v)| parse_f64(v, origin, *line, c))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Matrix::from_vec(data.len(), d, data.concat())
}

// ---------------------------------------------------------------- dataset directories

/// Sidecar describing a directory of per-task dataset files.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetMeta {
    pub num_tasks: usize,
    pub input_dim: usize,
    pub class_counts: Vec<usize>,
    /// File names relative to the directory, one per task.
    pub files: Vec<String>,
}

/// Writes `task_<t>.csv` (1-based) for each dataset plus `dataset.json`.
pub fn save_datasets(dir: &Path, datasets: &[TaskDataset]) -> Result<DatasetMeta> {
    let first = datasets
        .first()
        .ok_or_else(|| Error::DimensionMismatch("no datasets to save".into()))?;
    if datasets.iter().any(|d| d.input_dim() != first.input_dim()) {
        return Err(Error::DimensionMismatch(
            "datasets differ in input width".into(),
        ));
    }
    fs::create_dir_all(dir).map_err(at(dir))?;
    let files: Vec<String> = (1..=datasets.len())
        .map(|t| format!("task_{t}.csv"))
        .collect();
    for (d, f) in datasets.iter().zip(&files) {
        write_text(&dir.join(f), &dataset_to_csv(d))?;
    }
    let meta = DatasetMeta {
        num_tasks: datasets.len(),
        input_dim: first.input_dim(),
        class_counts: datasets.iter().map(TaskDataset::num_classes).collect(),
        files,
    };
    save_json(&dir.join(DATASET_META_FILE), &meta)?;
    Ok(meta)
}

pub fn load_datasets(dir: &Path) -> Result<Vec<TaskDataset>> {
    let meta: DatasetMeta = load_json(&dir.join(DATASET_META_FILE))?;
    if meta.files.len() != meta.num_tasks {
        return Err(Error::schema(
            "files",
            format!("expected {} entries", meta.num_tasks),
        ));
    }
    if meta.class_counts.len() != meta.num_tasks {
        return Err(Error::schema(
            "class_counts",
            format!("expected {} entries", meta.num_tasks),
        ));
    }
    meta.files
        .iter()
        .enumerate()
        .map(|(t, f)| {
            let path = dir.join(f);
            let ds = dataset_from_csv(
                &read_text(&path)?,
                &path.display().to_string(),
                t,
                meta.class_counts[t],
            )?;
            if ds.input_dim() != meta.input_dim {
                return Err(Error::schema(
                    "input_dim",
                    format!(
                        "{} has {} input columns, expected {}",
                        f,
                        ds.input_dim(),
                        meta.input_dim
                    ),
                ));
            }
            Ok(ds)
        })
        .collect()
}

// ---------------------------------------------------------------- feature dumps

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DumpEntry {
    /// 1-based task id.
    pub task: usize,
    /// 1-based module id.
    pub module: usize,
    /// Relative to the manifest's directory.
    pub path: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureManifest {
    pub num_tasks: usize,
    pub num_modules: usize,
    pub num_probes: usize,
    /// Feature width of each module.
    pub feature_dims: Vec<usize>,
    pub dumps: Vec<DumpEntry>,
}

/// Writes `features_t<task>_m<module>.csv` (1-based) for each dump and a
/// `manifest.json` listing them. Returns the manifest path.
pub fn save_feature_dumps(dir: &Path, dumps: &[FeatureDump]) -> Result<PathBuf> {
    let num_tasks = dumps.iter().map(|d| d.task_id + 1).max().unwrap_or(0);
    let num_modules = dumps.iter().map(|d| d.module_id + 1).max().unwrap_or(0);
    let num_probes = dumps.first().map_or(0, FeatureDump::num_probes);
    let mut feature_dims = vec![0; num_modules];
    fs::create_dir_all(dir).map_err(at(dir))?;
    let mut entries = Vec::with_capacity(dumps.len());
    for d in dumps {
        let slot = &mut feature_dims[d.module_id];
        if *slot != 0 && *slot != d.feature_dim() {
            return Err(Error::DimensionMismatch(format!(
                "module {} has dumps of width {} and {}",
                d.module_id + 1,
                slot,
                d.feature_dim()
            )));
        }
        *slot = d.feature_dim();
        let name = format!("features_t{}_m{}.csv", d.task_id + 1, d.module_id + 1);
        write_text(&dir.join(&name), &feature_to_csv(&d.features))?;
        entries.push(DumpEntry {
            task: d.task_id + 1,
            module: d.module_id + 1,
            path: name,
        });
    }
    let manifest = FeatureManifest {
        num_tasks,
        num_modules,
        num_probes,
        feature_dims,
        dumps: entries,
    };
    let path = dir.join(FEATURE_MANIFEST_FILE);
    save_json(&path, &manifest)?;
    Ok(path)
}

pub fn load_feature_dumps(manifest_path: &Path) -> Result<(FeatureManifest, Vec<FeatureDump>)> {
    let manifest: FeatureManifest = load_json(manifest_path)?;
    if manifest.feature_dims.len() != manifest.num_modules {
        return Err(Error::schema(
            "feature_dims",
            format!("expected {} entries", manifest.num_modules),
        ));
    }
    let base = manifest_path.parent().unwrap_or(Path::new(""));
    let dumps = manifest
        .dumps
        .iter()
        .enumerate()
        .map(|(i, e)| {
            if e.task == 0
                || e.task > manifest.num_tasks
                || e.module == 0
                || e.module > manifest.num_modules
            {
                return Err(Error::schema(
                    format!("dumps[{i}]"),
                    "task or module id out of range (ids are 1-based)",
                ));
            }
            let path = base.join(&e.path);
            let features = feature_from_csv(&read_text(&path)?, &path.display().to_string())?;
            if features.rows() != manifest.num_probes {
                return Err(Error::InconsistentProbeCount {
                    expected: manifest.num_probes,
                    found: features.rows(),
                });
            }
            if features.cols() != manifest.feature_dims[e.module - 1] {
                return Err(Error::schema(
                    format!("dumps[{i}]"),
                    format!(
                        "{} has {} columns, manifest says {}",
                        e.path,
                        features.cols(),
                        manifest.feature_dims[e.module - 1]
                    ),
                ));
            }
            FeatureDump::new(e.task - 1, e.module - 1, features)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((manifest, dumps))
}

// ---------------------------------------------------------------- training report

/// Flat per-epoch loss table: `epoch,task_1,...,task_N,validation`. Tasks
/// that did not contribute in an epoch, and a missing validation loss, are
/// left empty.
pub fn report_loss_csv(report: &TrainReport) -> String {
    let n = report.iterations_per_task.len();
    let mut s = String::from("epoch");
    for t in 1..=n {
        let _ = write!(s, ",task_{t}");
    }
    s.push_str(",validation\n");
    let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
    for e in &report.epochs {
        let _ = write!(s, "{}", e.epoch + 1);
        for l in &e.task_losses {
            let _ = write!(s, ",{}", opt(*l));
        }
        let _ = writeln!(s, ",{}", opt(e.validation_loss));
    }
    s
}

// ---------------------------------------------------------------- checkpoint

/// Binary layout, integers as little-endian `u64`, doubles as little-endian
/// IEEE-754:
///
/// ```text
/// "BFRG1"
/// input_dim
/// n, backbone_dims[n]
/// n, module_dims[n]
/// n, class_counts[n]
/// n, plan JSON (n bytes of UTF-8)
/// n_arrays
/// n_arrays × (len, values[len])
/// ```
///
/// Each parameter object contributes two arrays, its row-major weight then
/// its bias, in arena order: backbone layers, shareable modules by module
/// then by group (groups ordered by smallest task), then per task the class
/// head and the box head.
pub fn checkpoint_to_bytes(model: &BranchedModel) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    let dims = model.dims();
    let put = |out: &mut Vec<u8>, v: usize| out.extend_from_slice(&(v as u64).to_le_bytes());
    put(&mut out, dims.input_dim);
    for list in [&dims.backbone_dims, &dims.module_dims, &dims.class_counts] {
        put(&mut out, list.len());
        for &v in list.iter() {
            put(&mut out, v);
        }
    }
    let plan =
        serde_json::to_string(model.plan()).map_err(|e| Error::InvalidPlan(e.to_string()))?;
    put(&mut out, plan.len());
    out.extend_from_slice(plan.as_bytes());
    put(&mut out, model.params().len() * 2);
    for p in model.params() {
        for arr in [p.weight.as_slice(), p.bias.as_slice()] {
            put(&mut out, arr.len());
            for v in arr {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    origin: &'a str,
}

impl Reader<'_> {
    fn err(&self, msg: impl Into<String>) -> Error {
        Error::parse(format!("{}: offset {}", self.origin, self.pos), msg)
    }

    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.err("unexpected end of file"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u64(&mut self) -> Result<usize> {
        let b = self.take(8)?;
        let v = u64::from_le_bytes(b.try_into().expect("8 bytes"));
        usize::try_from(v).map_err(|_| self.err("length does not fit in memory"))
    }

    /// Length prefix of something at least `unit` bytes per element.
    fn len(&mut self, unit: usize) -> Result<usize> {
        let at = self.pos;
        let n = self.u64()?;
        if n.saturating_mul(unit) > self.bytes.len() - self.pos {
            self.pos = at;
            return Err(self.err(format!("length {n} exceeds the remaining data")));
        }
        Ok(n)
    }

    fn usizes(&mut self) -> Result<Vec<usize>> {
        let n = self.len(8)?;
        (0..n).map(|_| self.u64()).collect()
    }

    fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = self.len(8)?;
        let b = self.take(n * 8)?;
        Ok(b.chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}

pub fn checkpoint_from_bytes(bytes: &[u8], origin: &str) -> Result<BranchedModel> {
    let mut r = Reader {
        bytes,
        pos: 0,
        origin,
    };
    if r.take(CHECKPOINT_MAGIC.len()).ok() != Some(CHECKPOINT_MAGIC.as_slice()) {
        r.pos = 0;
        return Err(r.err("not a checkpoint (bad magic bytes)"));
    }
    let input_dim = r.u64()?;
    let dims = ModelDims {
        input_dim,
        backbone_dims: r.usizes()?,
        module_dims: r.usizes()?,
        class_counts: r.usizes()?,
    };
    let plan_len = r.len(1)?;
    let plan_at = r.pos;
    let plan_text = std::str::from_utf8(r.take(plan_len)?).map_err(|_| {
        Error::parse(
            format!("{origin}: offset {plan_at}"),
            "embedded plan is not UTF-8",
        )
    })?;
    let plan = plan_from_json(plan_text, &format!("{origin} (embedded plan)"))?;
    let num_arrays = r.len(8)?;
    if num_arrays % 2 != 0 {
        return Err(r.err("parameter arrays must come in weight/bias pairs"));
    }
    let mut params = Vec::with_capacity(num_arrays / 2);
    for _ in 0..num_arrays / 2 {
        let at = r.pos;
        let weight = r.f64s()?;
        let bias = r.f64s()?;
        let out = bias.len();
        if out == 0 || weight.len() % out != 0 {
            r.pos = at;
            return Err(r.err("weight length is not a multiple of the bias length"));
        }
        params.push(ModuleParams {
            weight: Matrix::from_vec(out, weight.len() / out, weight)?,
            bias,
        });
    }
    if r.pos != bytes.len() {
        return Err(r.err("trailing bytes after the last parameter array"));
    }
    BranchedModel::from_parts(dims, plan, params)
}

pub fn save_checkpoint(path: &Path, model: &BranchedModel) -> Result<()> {
    write_bytes(path, &checkpoint_to_bytes(model)?)
}

pub fn load_checkpoint(path: &Path) -> Result<BranchedModel> {
    checkpoint_from_bytes(&read_bytes(path)?, &path.display().to_string())
}
