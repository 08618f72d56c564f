//! Plain-text dataset directories: `edges.tsv`, `features.csv`, `labels.tsv`
//! and an optional `split.tsv`.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::graph::{Graph, Labels, SplitMasks};
use crate::synthetic::{make_splits, SplitSizes};

pub const EDGES_FILE: &str = "edges.tsv";
pub const FEATURES_FILE: &str = "features.csv";
pub const LABELS_FILE: &str = "labels.tsv";
pub const SPLIT_FILE: &str = "split.tsv";

/// Directive that pins the class count, written as the first line of `labels.tsv`.
const CLASSES_DIRECTIVE: &str = "# classes";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestOptions {
    /// Seed of the generated split when `split.tsv` is absent.
    pub split_seed: u64,
    pub split: SplitSizes,
    /// Class count; defaults to the `# classes` directive or `max id + 1`.
    pub num_classes: Option<usize>,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

/// Non-blank, non-comment lines with their 1-based numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn parse_id(path: &Path, line: usize, tok: &str, what: &str) -> Result<usize> {
    tok.parse()
        .map_err(|_| parse_err(path, line, format!("{what} {tok:?} is not a non-negative integer")))
}

fn read_features(path: &Path) -> Result<Tensor> {
    let text = read(path)?;
    let mut width = None;
    let mut data = Vec::new();
    let mut rows = 0;
    for (ln, line) in content_lines(&text) {
        let mut count = 0;
        for tok in line.split(',') {
            let v: f64 = tok
                .trim()
                .parse()
                .map_err(|_| parse_err(path, ln, format!("{:?} is not a number", tok.trim())))?;
            if !v.is_finite() {
                return Err(parse_err(path, ln, format!("non-finite feature {v}")));
            }
            data.push(v);
            count += 1;
        }
        match width {
            None => width = Some(count),
            Some(w) if w != count => {
                return Err(parse_err(
                    path,
                    ln,
                    format!("expected {w} features, found {count}"),
                ))
            }
            _ => {}
        }
        rows += 1;
    }
    let width = width.ok_or_else(|| parse_err(path, 0, "no feature rows"))?;
    Tensor::matrix(rows, width, data)
}

fn read_edges(path: &Path, n: usize) -> Result<Vec<(usize, usize)>> {
    let text = read(path)?;
    let mut edges = Vec::new();
    for (ln, line) in content_lines(&text) {
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 2 {
            return Err(parse_err(
                path,
                ln,
                format!("expected two node ids, found {} fields", toks.len()),
            ));
        }
        let i = parse_id(path, ln, toks[0], "node id")?;
        let j = parse_id(path, ln, toks[1], "node id")?;
        if i >= n || j >= n {
            return Err(parse_err(
                path,
                ln,
                format!("node id {} >= node count {n}", i.max(j)),
            ));
        }
        edges.push((i, j));
    }
    Ok(edges)
}

fn read_labels(path: &Path, n: usize, num_classes: Option<usize>) -> Result<Labels> {
    let text = read(path)?;
    let directive = text.lines().next().and_then(|l| {
        l.trim()
            .strip_prefix(CLASSES_DIRECTIVE)
            .map(|rest| rest.trim().to_string())
    });
    let declared = match directive {
        Some(v) => Some(parse_id(path, 1, &v, "class count")?),
        None => None,
    };
    if let (Some(a), Some(b)) = (declared, num_classes) {
        if a != b {
            return Err(Error::Config(format!(
                "{} declares {a} classes but {b} were requested",
                path.display()
            )));
        }
    }
    // (line, node, ids, written as a set)
    let mut rows = Vec::new();
    for (ln, line) in content_lines(&text) {
        let mut toks = line.splitn(2, char::is_whitespace);
        let node = parse_id(path, ln, toks.next().unwrap_or(""), "node id")?;
        if node >= n {
            return Err(parse_err(path, ln, format!("node id {node} >= node count {n}")));
        }
        let spec = toks.next().unwrap_or("").trim();
        let is_set = spec.contains(',');
        let ids = spec
            .split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(|t| parse_id(path, ln, t, "class id"))
            .collect::<Result<Vec<_>>>()?;
        if !is_set && ids.len() != 1 {
            return Err(parse_err(path, ln, "expected a node id and a class id"));
        }
        rows.push((ln, node, ids, is_set));
    }
    let multi = rows.iter().any(|r| r.3);
    let max_id = rows.iter().flat_map(|r| r.2.iter()).max().map_or(0, |m| m + 1);
    let c = num_classes.or(declared).unwrap_or(max_id);
    let mut seen = vec![false; n];
    for (ln, node, ids, _) in &rows {
        if std::mem::replace(&mut seen[*node], true) {
            return Err(parse_err(path, *ln, format!("node {node} labeled twice")));
        }
        if let Some(&bad) = ids.iter().find(|&&l| l >= c) {
            return Err(parse_err(
                path,
                *ln,
                format!("class id {bad} >= class count {c}"),
            ));
        }
    }
    if multi {
        let mut sets = vec![Vec::new(); n];
        for (_, node, ids, _) in rows {
            sets[node] = ids;
        }
        return Ok(Labels::multi(sets, c));
    }
    if let Some(missing) = seen.iter().position(|&s| !s) {
        return Err(Error::Structural(format!("node {missing} has no label")));
    }
    let mut classes = vec![0; n];
    for (_, node, ids, _) in rows {
        classes[node] = ids[0];
    }
    Ok(Labels::Single {
        classes,
        num_classes: c,
    })
}

fn read_split(path: &Path, n: usize) -> Result<SplitMasks> {
    let text = read(path)?;
    let mut s = SplitMasks::empty(n);
    let mut seen = HashSet::new();
    for (ln, line) in content_lines(&text) {
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 2 {
            return Err(parse_err(path, ln, "expected a node id and train|val|test"));
        }
        let node = parse_id(path, ln, toks[0], "node id")?;
        if node >= n {
            return Err(parse_err(path, ln, format!("node id {node} >= node count {n}")));
        }
        if !seen.insert(node) {
            return Err(parse_err(path, ln, format!("node {node} assigned twice")));
        }
        let mask = match toks[1] {
            "train" => &mut s.train,
            "val" => &mut s.val,
            "test" => &mut s.test,
            other => {
                return Err(parse_err(
                    path,
                    ln,
                    format!("unknown split {other:?}, expected train, val or test"),
                ))
            }
        };
        mask[node] = true;
    }
    Ok(s)
}

/// Split for a dataset without `split.tsv`: stratified per class for
/// single-label data, uniform for multi-label data.
fn generated_split(labels: &Labels, opts: &IngestOptions) -> Result<SplitMasks> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.split_seed);
    let sz = opts.split;
    match labels {
        Labels::Single { classes, .. } => {
            make_splits(classes, sz.train_per_class, sz.val, sz.test, &mut rng)
        }
        Labels::Multi { sets, num_classes } => {
            let n = sets.len();
            let train = sz.train_per_class * num_classes;
            if train + sz.val + sz.test > n {
                return Err(Error::Split(format!(
                    "{n} nodes cannot hold {train} + {} + {} split nodes",
                    sz.val, sz.test
                )));
            }
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng);
            let (t, rest) = order.split_at(train);
            let (v, rest) = rest.split_at(sz.val);
            SplitMasks::from_indices(n, t, v, &rest[..sz.test])
        }
    }
}

/// Reads a dataset directory. Duplicate and reversed edge lines collapse to
/// one undirected edge.
pub fn ingest_dataset(dir: &Path, opts: &IngestOptions) -> Result<Graph> {
    if !dir.is_dir() {
        return Err(Error::io(
            dir,
            std::io::Error::new(std::io::ErrorKind::NotFound, "dataset directory not found"),
        ));
    }
    let features = read_features(&dir.join(FEATURES_FILE))?;
    let n = features.rows();
    let edges = read_edges(&dir.join(EDGES_FILE), n)?;
    let labels = read_labels(&dir.join(LABELS_FILE), n, opts.num_classes)?;
    let split_path = dir.join(SPLIT_FILE);
    let split = if split_path.exists() {
        read_split(&split_path, n)?
    } else {
        generated_split(&labels, opts)?
    };
    Graph::from_edge_list(n, &edges, features, labels)?.with_split(split)
}

fn write(path: PathBuf, text: &str) -> Result<()> {
    fs::write(&path, text).map_err(|e| Error::io(path, e))
}

/// Writes `g` in the format read by [`ingest_dataset`]; re-ingesting the
/// directory yields an equal graph. `split.tsv` is omitted when no node is
/// assigned to a split.
pub fn export_dataset(g: &Graph, dir: &Path) -> Result<()> {
    let x = g.features();
    if x.cols() == 0 {
        return Err(Error::Config(
            "cannot export a graph without feature columns".into(),
        ));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let mut edges = String::new();
    for i in 0..g.num_nodes() {
        for &j in g.neighbors(i).iter().filter(|&&j| j >= i) {
            writeln!(edges, "{i}\t{j}").expect("writing to a String");
        }
    }
    write(dir.join(EDGES_FILE), &edges)?;

    let mut feats = String::new();
    for r in 0..x.rows() {
        let row: Vec<String> = x.row(r).iter().map(|v| v.to_string()).collect();
        feats.push_str(&row.join(","));
        feats.push('\n');
    }
    write(dir.join(FEATURES_FILE), &feats)?;

    let mut labels = format!("{CLASSES_DIRECTIVE} {}\n", g.num_classes());
    match g.labels() {
        Labels::Single { classes, .. } => {
            for (i, c) in classes.iter().enumerate() {
                writeln!(labels, "{i}\t{c}").expect("writing to a String");
            }
        }
        Labels::Multi { sets, .. } => {
            for (i, s) in sets.iter().enumerate() {
                let ids: Vec<String> = s.iter().map(usize::to_string).collect();
                // a trailing comma keeps 0- and 1-element sets multi-label
                let tail = if s.len() < 2 { "," } else { "" };
                writeln!(labels, "{i}\t{}{tail}", ids.join(",")).expect("writing to a String");
            }
        }
    }
    write(dir.join(LABELS_FILE), &labels)?;

    let split = g.split();
    let split_path = dir.join(SPLIT_FILE);
    let mut text = String::new();
    for i in 0..g.num_nodes() {
        let tag = if split.train[i] {
            "train"
        } else if split.val[i] {
            "val"
        } else if split.test[i] {
            "test"
        } else {
            continue;
        };
        writeln!(text, "{i}\t{tag}").expect("writing to a String");
    }
    if text.is_empty() {
        if split_path.exists() {
            fs::remove_file(&split_path).map_err(|e| Error::io(&split_path, e))?;
        }
        return Ok(());
    }
    write(split_path, &text)
}

#[cfg(test)]
mod tests;
