//! Multi-label datasets: ARFF and CSV ingestion, label filtering,
//! principal-component summary.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix};
use crate::rng;

/// Formats a real with 17 significant digits, enough for an exact round trip.
pub fn format_real(v: f64) -> String {
    if v == 0.0 {
        // Keeps "-0" and "0" apart without the exponent noise.
        return if v.is_sign_negative() {
            "-0".into()
        } else {
            "0".into()
        };
    }
    format!("{v:.16e}")
}

/// Features with a leading intercept column plus a binary label matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// `n × p`, column 0 all ones.
    pub x: Matrix,
    /// `n × K`, entries 0.0 or 1.0.
    pub y: Matrix,
    /// Names of the `p - 1` non-intercept features.
    pub feature_names: Vec<String>,
    pub label_names: Vec<String>,
}

impl Dataset {
    /// Assembles a dataset from raw feature rows (no intercept) and labels.
    pub fn new(
        features: Matrix,
        y: Matrix,
        feature_names: Vec<String>,
        label_names: Vec<String>,
    ) -> Result<Self> {
        let n = features.rows();
        let ones = Matrix::from_vec(n, 1, vec![1.0; n])?;
        let ds = Dataset {
            x: ones.hstack(&features)?,
            y,
            feature_names,
            label_names,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        if self.x.rows() != self.y.rows() {
            return Err(Error::dims(format!(
                "{} feature rows but {} label rows",
                self.x.rows(),
                self.y.rows()
            )));
        }
        if self.feature_names.len() + 1 != self.x.cols() {
            return Err(Error::dims("feature names do not match feature columns"));
        }
        if self.label_names.len() != self.y.cols() {
            return Err(Error::dims("label names do not match label columns"));
        }
        if self.x.row_iter().any(|r| r.first() != Some(&1.0)) {
            return Err(Error::dims("first feature column must be the intercept"));
        }
        if let Some(pos) = self.y.as_slice().iter().position(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::NonBinaryLabel {
                name: self.label_names[pos % self.y.cols()].clone(),
                value: self.y.as_slice()[pos].to_string(),
                line: 0,
            });
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.x.rows()
    }

    /// Feature dimension including the intercept.
    pub fn p(&self) -> usize {
        self.x.cols()
    }

    pub fn k(&self) -> usize {
        self.y.cols()
    }

    pub fn label_column(&self, k: usize) -> Vec<f64> {
        self.y.column(k)
    }

    pub fn subset(&self, rows: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select_rows(rows),
            y: self.y.select_rows(rows),
            feature_names: self.feature_names.clone(),
            label_names: self.label_names.clone(),
        }
    }

    /// Seeded subsample without replacement; the whole set when `n >= rows`.
    pub fn subsample(&self, n: usize, seed: u64) -> Dataset {
        if n >= self.n() {
            return self.clone();
        }
        let mut idx: Vec<usize> = (0..self.n()).collect();
        idx.shuffle(&mut rng::stream(seed, 0));
        idx.truncate(n);
        idx.sort_unstable();
        self.subset(&idx)
    }

    /// Non-intercept features centred and scaled to unit variance.
    /// Constant columns are left centred only.
    pub fn standardized(&self) -> Dataset {
        let mut out = self.clone();
        let n = self.n() as f64;
        for j in 1..self.p() {
            let col = self.x.column(j);
            let mean = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
            for i in 0..self.n() {
                out.x[(i, j)] = (self.x[(i, j)] - mean) / sd;
            }
        }
        out
    }
}

/// How label attributes/columns are identified.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LabelSpec {
    /// Explicit label names.
    Names(Vec<String>),
    /// The last `k` attributes are labels.
    LastCount(usize),
    /// CSV only: columns whose header starts with `label:`.
    Prefixed,
}

#[derive(Debug, Clone)]
enum AttrKind {
    Numeric,
    Nominal(Vec<String>),
}

#[derive(Debug, Clone)]
struct Attribute {
    name: String,
    kind: AttrKind,
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

/// Splits on commas outside single or double quotes; trims and unquotes.
fn split_fields(s: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut quote: Option<char> = None;
    let mut escaped = false;
    for c in s.chars() {
        if escaped {
            cur.push(c);
            escaped = false;
            continue;
        }
        match (quote, c) {
            (Some(_), '\\') => escaped = true,
            (Some(q), c) if c == q => quote = None,
            (Some(_), c) => cur.push(c),
            (None, '\'' | '"') => quote = Some(c),
            (None, ',') => out.push(std::mem::take(&mut cur).trim().to_string()),
            (None, c) => cur.push(c),
        }
    }
    out.push(cur.trim().to_string());
    out
}

/// Reads a leading (possibly quoted) token; returns it and the remainder.
fn take_token(s: &str) -> (String, &str) {
    let s = s.trim_start();
    if let Some(q) = s.chars().next().filter(|c| *c == '\'' || *c == '"') {
        let body = &s[1..];
        if let Some(end) = body.find(q) {
            return (body[..end].to_string(), &body[end + 1..]);
        }
        return (body.to_string(), "");
    }
    match s.find(char::is_whitespace) {
        Some(end) => (s[..end].to_string(), &s[end..]),
        None => (s.to_string(), ""),
    }
}

fn parse_attribute(rest: &str, line: usize) -> Result<Attribute> {
    let (name, rest) = take_token(rest);
    let ty = rest.trim();
    if name.is_empty() || ty.is_empty() {
        return Err(parse_err(line, "malformed @attribute"));
    }
    let kind = if ty.starts_with('{') {
        let inner = ty
            .strip_prefix('{')
            .and_then(|t| t.strip_suffix('}'))
            .ok_or_else(|| parse_err(line, "unterminated nominal value list"))?;
        AttrKind::Nominal(split_fields(inner))
    } else {
        match ty.to_ascii_lowercase().as_str() {
            "numeric" | "real" | "integer" => AttrKind::Numeric,
            other => {
                return Err(parse_err(
                    line,
                    format!("unsupported attribute type `{other}`"),
                ))
            }
        }
    };
    Ok(Attribute { name, kind })
}

/// Attribute indices that are labels, in declaration order.
fn resolve_labels(names: &[String], spec: &LabelSpec) -> Result<Vec<usize>> {
    match spec {
        LabelSpec::LastCount(k) => {
            if *k == 0 || *k >= names.len() {
                return Err(Error::InvalidConfig(format!(
                    "{k} trailing labels out of {} attributes",
                    names.len()
                )));
            }
            Ok(((names.len() - k)..names.len()).collect())
        }
        LabelSpec::Names(wanted) => {
            let mut idx = Vec::with_capacity(wanted.len());
            for w in wanted {
                let pos = names
                    .iter()
                    .position(|n| n == w)
                    .ok_or_else(|| Error::UnknownLabelName(w.clone()))?;
                idx.push(pos);
            }
            idx.sort_unstable();
            idx.dedup();
            Ok(idx)
        }
        LabelSpec::Prefixed => {
            let idx: Vec<usize> = names
                .iter()
                .enumerate()
                .filter(|(_, n)| n.starts_with("label:"))
                .map(|(i, _)| i)
                .collect();
            if idx.is_empty() {
                return Err(Error::InvalidConfig("no `label:` columns found".into()));
            }
            Ok(idx)
        }
    }
}

fn label_value(raw: &str, name: &str, line: usize) -> Result<f64> {
    match raw.trim() {
        "0" | "0.0" => Ok(0.0),
        "1" | "1.0" => Ok(1.0),
        other => Err(Error::NonBinaryLabel {
            name: name.to_string(),
            value: other.to_string(),
            line,
        }),
    }
}

/// Numeric value of a non-label attribute. Nominal values that read as
/// numbers keep that number; other nominal values map to their category index.
fn feature_value(raw: &str, attr: &Attribute, line: usize) -> Result<f64> {
    let raw = raw.trim();
    if raw == "?" {
        return Err(parse_err(
            line,
            format!("missing value for `{}`", attr.name),
        ));
    }
    let v = match &attr.kind {
        AttrKind::Numeric => raw
            .parse::<f64>()
            .map_err(|_| parse_err(line, format!("`{raw}` is not numeric ({})", attr.name)))?,
        AttrKind::Nominal(values) => match raw.parse::<f64>() {
            Ok(v) => v,
            Err(_) => values.iter().position(|c| c == raw).ok_or_else(|| {
                parse_err(line, format!("`{raw}` not a category of {}", attr.name))
            })? as f64,
        },
    };
    if !v.is_finite() {
        return Err(parse_err(
            line,
            format!("non-finite value for `{}`", attr.name),
        ));
    }
    Ok(v)
}

/// Parses ARFF text (dense or sparse `@data` rows).
pub fn parse_arff(text: &str, labels: &LabelSpec) -> Result<Dataset> {
    let mut attrs: Vec<Attribute> = Vec::new();
    let mut lines = text.lines().enumerate();
    let mut in_data = false;
    for (i, raw) in lines.by_ref() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('%') {
            continue;
        }
        let lower = line.to_ascii_lowercase();
        if lower.starts_with("@relation") {
            continue;
        } else if lower.starts_with("@attribute") {
            attrs.push(parse_attribute(&line["@attribute".len()..], i + 1)?);
        } else if lower.starts_with("@data") {
            in_data = true;
            break;
        } else {
            return Err(parse_err(i + 1, format!("unexpected header line `{line}`")));
        }
    }
    if !in_data {
        return Err(parse_err(text.lines().count(), "no @data section"));
    }
    let names: Vec<String> = attrs.iter().map(|a| a.name.clone()).collect();
    let label_idx = resolve_labels(&names, labels)?;
    for &l in &label_idx {
        if let AttrKind::Nominal(vals) = &attrs[l].kind {
            if vals.iter().any(|v| v != "0" && v != "1") {
                return Err(Error::NonBinaryLabel {
                    name: attrs[l].name.clone(),
                    value: vals.join(","),
                    line: 0,
                });
            }
        }
    }
    let mut is_label = vec![false; attrs.len()];
    label_idx.iter().for_each(|&l| is_label[l] = true);
    let feature_idx: Vec<usize> = (0..attrs.len()).filter(|&j| !is_label[j]).collect();

    let mut feat = Vec::new();
    let mut lab = Vec::new();
    let mut rows = 0;
    let mut record = vec![String::new(); attrs.len()];
    for (i, raw) in lines {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('%') {
            continue;
        }
        let lineno = i + 1;
        if let Some(body) = line.strip_prefix('{') {
            let body = body
                .strip_suffix('}')
                .ok_or_else(|| parse_err(lineno, "unterminated sparse row"))?;
            record.iter_mut().for_each(|r| {
                r.clear();
                r.push('0');
            });
            for entry in split_fields(body).into_iter().filter(|e| !e.is_empty()) {
                let (idx, val) = take_token(&entry);
                let idx: usize = idx
                    .parse()
                    .map_err(|_| parse_err(lineno, format!("bad sparse index `{idx}`")))?;
                if idx >= attrs.len() {
                    return Err(parse_err(
                        lineno,
                        format!("sparse index {idx} out of range"),
                    ));
                }
                record[idx] = val
                    .trim()
                    .trim_matches(|c| c == '\'' || c == '"')
                    .to_string();
            }
            // Sparse zero of a nominal attribute means its first category.
            for (j, a) in attrs.iter().enumerate() {
                if let AttrKind::Nominal(v) = &a.kind {
                    if record[j] == "0" && !v.is_empty() && v[0] != "0" && !is_label[j] {
                        record[j] = v[0].clone();
                    }
                }
            }
        } else {
            let fields = split_fields(line);
            if fields.len() != attrs.len() {
                return Err(parse_err(
                    lineno,
                    format!("{} values for {} attributes", fields.len(), attrs.len()),
                ));
            }
            record.clone_from_slice(&fields);
        }
        for &j in &feature_idx {
            feat.push(feature_value(&record[j], &attrs[j], lineno)?);
        }
        for &j in &label_idx {
            lab.push(label_value(&record[j], &attrs[j].name, lineno)?);
        }
        rows += 1;
    }

    Dataset::new(
        Matrix::from_vec(rows, feature_idx.len(), feat)?,
        Matrix::from_vec(rows, label_idx.len(), lab)?,
        feature_idx.iter().map(|&j| names[j].clone()).collect(),
        label_idx.iter().map(|&j| names[j].clone()).collect(),
    )
}

pub fn load_arff(path: impl AsRef<Path>, labels: &LabelSpec) -> Result<Dataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_arff(&text, labels)
}

fn quote_name(name: &str) -> String {
    if name
        .chars()
        .any(|c| c.is_whitespace() || ",{}'\"%".contains(c))
    {
        format!("'{}'", name.replace('\\', "\\\\").replace('\'', "\\'"))
    } else {
        name.to_string()
    }
}

/// Dense ARFF rendering: numeric features, then `{0,1}` labels.
pub fn write_arff(ds: &Dataset, relation: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "@relation {}", quote_name(relation));
    for f in &ds.feature_names {
        let _ = writeln!(s, "@attribute {} numeric", quote_name(f));
    }
    for l in &ds.label_names {
        let _ = writeln!(s, "@attribute {} {{0,1}}", quote_name(l));
    }
    s.push_str("@data\n");
    for i in 0..ds.n() {
        let feats = ds.x.row(i)[1..].iter().map(|&v| format_real(v));
        let labs = ds.y.row(i).iter().map(|&v| {
            if v == 1.0 {
                "1".to_string()
            } else {
                "0".to_string()
            }
        });
        s.push_str(&feats.chain(labs).collect::<Vec<_>>().join(","));
        s.push('\n');
    }
    s
}

pub fn save_arff(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let relation = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("dataset");
    fs::write(path, write_arff(ds, relation)).map_err(|e| Error::io(path, e))
}

/// Parses CSV with a header row. Label columns come from the `label:`
/// prefix, explicit names, or a trailing count.
pub fn parse_csv(text: &str, labels: &LabelSpec) -> Result<Dataset> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| parse_err(1, "empty CSV"))?;
    let names = split_fields(header);
    let label_idx = resolve_labels(&names, labels)?;
    let mut is_label = vec![false; names.len()];
    label_idx.iter().for_each(|&l| is_label[l] = true);
    let feature_idx: Vec<usize> = (0..names.len()).filter(|&j| !is_label[j]).collect();
    let numeric = |name: &str| Attribute {
        name: name.to_string(),
        kind: AttrKind::Numeric,
    };

    let mut feat = Vec::new();
    let mut lab = Vec::new();
    let mut rows = 0;
    for (i, raw) in lines {
        let lineno = i + 1;
        let fields = split_fields(raw);
        if fields.len() != names.len() {
            return Err(parse_err(
                lineno,
                format!("{} fields for {} columns", fields.len(), names.len()),
            ));
        }
        for &j in &feature_idx {
            feat.push(feature_value(&fields[j], &numeric(&names[j]), lineno)?);
        }
        for &j in &label_idx {
            lab.push(label_value(&fields[j], &names[j], lineno)?);
        }
        rows += 1;
    }
    let strip = |n: &String| n.strip_prefix("label:").unwrap_or(n).to_string();
    Dataset::new(
        Matrix::from_vec(rows, feature_idx.len(), feat)?,
        Matrix::from_vec(rows, label_idx.len(), lab)?,
        feature_idx.iter().map(|&j| names[j].clone()).collect(),
        label_idx.iter().map(|&j| strip(&names[j])).collect(),
    )
}

pub fn load_csv(path: impl AsRef<Path>, labels: &LabelSpec) -> Result<Dataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv(&text, labels)
}

fn csv_field(name: &str) -> String {
    if name.contains([',', '"', '\'']) {
        format!("\"{}\"", name.replace('"', "\\\""))
    } else {
        name.to_string()
    }
}

/// CSV rendering with `label:`-prefixed label columns.
pub fn write_csv(ds: &Dataset) -> String {
    let mut s = String::new();
    let header: Vec<String> = ds
        .feature_names
        .iter()
        .map(|f| csv_field(f))
        .chain(
            ds.label_names
                .iter()
                .map(|l| csv_field(&format!("label:{l}"))),
        )
        .collect();
    s.push_str(&header.join(","));
    s.push('\n');
    for i in 0..ds.n() {
        let feats = ds.x.row(i)[1..].iter().map(|&v| format_real(v));
        let labs = ds.y.row(i).iter().map(|&v| {
            if v == 1.0 {
                "1".to_string()
            } else {
                "0".to_string()
            }
        });
        s.push_str(&feats.chain(labs).collect::<Vec<_>>().join(","));
        s.push('\n');
    }
    s
}

pub fn save_csv(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, write_csv(ds)).map_err(|e| Error::io(path, e))
}

/// Loads by extension: `.arff` or `.csv`.
pub fn load_dataset(path: impl AsRef<Path>, labels: &LabelSpec) -> Result<Dataset> {
    let path = path.as_ref();
    match path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
    {
        Some(ext) if ext == "arff" => load_arff(path, labels),
        Some(ext) if ext == "csv" => load_csv(path, labels),
        _ => Err(Error::InvalidConfig(format!(
            "{}: expected a .arff or .csv file",
            path.display()
        ))),
    }
}

/// Keeps the `k` most frequent labels (ties by lower index, original column
/// order preserved) and drops rows whose retained labels are all 0 or all 1.
pub fn top_k_labels(ds: &Dataset, k: usize) -> Result<Dataset> {
    let total = ds.k();
    if k == 0 || k > total {
        return Err(Error::InvalidConfig(format!(
            "top-k with k={k} and {total} labels"
        )));
    }
    if k == 1 {
        return Err(Error::InvalidConfig(
            "top-k with k=1 removes every row (a single label is always all-0 or all-1)".into(),
        ));
    }
    let counts: Vec<f64> = (0..total)
        .map(|j| ds.label_column(j).iter().sum())
        .collect();
    let mut by_freq: Vec<usize> = (0..total).collect();
    by_freq.sort_by(|&a, &b| counts[b].total_cmp(&counts[a]).then(a.cmp(&b)));
    let mut keep = by_freq[..k].to_vec();
    keep.sort_unstable();

    let rows: Vec<usize> = (0..ds.n())
        .filter(|&i| {
            let s: f64 = keep.iter().map(|&j| ds.y[(i, j)]).sum();
            s > 0.0 && s < k as f64
        })
        .collect();
    let mut y = Matrix::zeros(rows.len(), k);
    for (r, &i) in rows.iter().enumerate() {
        for (c, &j) in keep.iter().enumerate() {
            y[(r, c)] = ds.y[(i, j)];
        }
    }
    Ok(Dataset {
        x: ds.x.select_rows(&rows),
        y,
        feature_names: ds.feature_names.clone(),
        label_names: keep.iter().map(|&j| ds.label_names[j].clone()).collect(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrincipalComponent {
    /// Projection of each centred row on the leading direction.
    pub scores: Vec<f64>,
    pub explained_variance_ratio: f64,
    /// Unit-norm leading eigenvector of the covariance.
    pub direction: Vec<f64>,
}

const POWER_MAX_ITER: usize = 10_000;

/// Leading principal component of the rows of `x` by power iteration on the
/// centred covariance. Constant columns (such as the intercept) add nothing.
pub fn first_principal_component(x: &Matrix) -> Result<PrincipalComponent> {
    let n = x.rows();
    let p = x.cols();
    if n < 2 {
        return Err(Error::dims("principal component needs at least two rows"));
    }
    let means: Vec<f64> = (0..p)
        .map(|j| (0..n).map(|i| x[(i, j)]).sum::<f64>() / n as f64)
        .collect();
    let mut cov = Matrix::zeros(p, p);
    for row in x.row_iter() {
        let c: Vec<f64> = row.iter().zip(&means).map(|(v, m)| v - m).collect();
        for a in 0..p {
            if c[a] == 0.0 {
                continue;
            }
            let ca = c[a];
            let cr = cov.row_mut(a);
            for b in a..p {
                cr[b] += ca * c[b];
            }
        }
    }
    for a in 0..p {
        for b in a..p {
            let v = cov[(a, b)] / (n - 1) as f64;
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }
    let trace: f64 = (0..p).map(|j| cov[(j, j)]).sum();
    if trace <= 0.0 {
        return Err(Error::NoVariance);
    }

    // Start from the covariance column with the largest norm; it cannot be
    // orthogonal to the leading eigenvector unless the spectrum is flat.
    let start = (0..p)
        .max_by(|&a, &b| {
            let na = dot(cov.row(a), cov.row(a));
            let nb = dot(cov.row(b), cov.row(b));
            na.total_cmp(&nb).then(b.cmp(&a))
        })
        .unwrap_or(0);
    let mut v = cov.row(start).to_vec();
    normalize(&mut v);
    let mut eigen = 0.0;
    for _ in 0..POWER_MAX_ITER {
        let mut w = cov.mul_vec(&v);
        let next = dot(&w, &v);
        normalize(&mut w);
        let delta = w
            .iter()
            .zip(&v)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        v = w;
        let settled = (next - eigen).abs() <= 1e-14 * next.abs() && delta <= 1e-10;
        eigen = next;
        if settled {
            break;
        }
    }
    let eigen = dot(&cov.mul_vec(&v), &v);
    let scores = x
        .row_iter()
        .map(|row| {
            row.iter()
                .zip(&means)
                .zip(&v)
                .map(|((r, m), d)| (r - m) * d)
                .sum()
        })
        .collect();
    Ok(PrincipalComponent {
        scores,
        explained_variance_ratio: eigen / trace,
        direction: v,
    })
}

fn normalize(v: &mut [f64]) {
    let norm = dot(v, v).sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}
