//! Dataset ingestion: the canonical on-disk format, plus a converter from the
//! public `.content`/`.cites` citation-network distribution.
//!
//! Canonical layout under `<root>/<name>/`:
//!
//! - `manifest.json` — `{ "name", "num_nodes", "num_features", "num_classes" }`
//! - `edges.csv` — header `src,dst`, one undirected edge per row, 0-indexed
//! - `features.csv` — N rows of F comma-separated decimals
//! - `labels.csv` — N rows, one integer each (optional)
//! - `splits.json` — `{ "train": [...], "val": [...], "test": [...] }` (optional)

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::graph::{Graph, Splits};
use crate::linalg::CsrMatrix;
use crate::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    name: String,
    num_nodes: usize,
    num_features: usize,
    num_classes: usize,
}

/// Loader options. Row normalization rescales each feature row to sum 1,
/// the conventional preprocessing for bag-of-words citation datasets.
#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    pub row_normalize_features: bool,
}

/// Loads `<root>/<name>` in the canonical format.
pub fn load_dataset(root: &Path, name: &str) -> Result<Graph> {
    load_dataset_with(root, name, LoadOptions::default())
}

/// [`load_dataset`] with explicit options.
pub fn load_dataset_with(root: &Path, name: &str, opts: LoadOptions) -> Result<Graph> {
    let dir = root.join(name);
    let manifest_path = dir.join("manifest.json");
    let manifest_text =
        fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: Manifest = serde_json::from_str(&manifest_text)?;

    let edges = read_edges(&dir.join("edges.csv"), manifest.num_nodes)?;
    let features = read_features(
        &dir.join("features.csv"),
        manifest.num_nodes,
        manifest.num_features,
    )?;

    let labels_path = dir.join("labels.csv");
    let labels = if labels_path.exists() {
        Some(read_labels(&labels_path, manifest.num_nodes)?)
    } else {
        None
    };

    let splits_path = dir.join("splits.json");
    let splits = if splits_path.exists() {
        let text = fs::read_to_string(&splits_path).map_err(|e| Error::io(&splits_path, e))?;
        Some(serde_json::from_str::<Splits>(&text)?)
    } else {
        None
    };

    let num_classes = labels.is_some().then_some(manifest.num_classes);
    let g = Graph::new(
        manifest.name,
        manifest.num_nodes,
        edges,
        features,
        labels,
        num_classes,
        splits,
    )?;
    Ok(if opts.row_normalize_features {
        g.with_row_normalized_features()
    } else {
        g
    })
}

/// Writes `g` to `dir` in the canonical format. Reloading yields an
/// identical graph.
pub fn save_canonical(g: &Graph, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let manifest = Manifest {
        name: g.name().to_string(),
        num_nodes: g.num_nodes(),
        num_features: g.num_features(),
        num_classes: g.num_classes().unwrap_or(0),
    };
    write_text(
        &dir.join("manifest.json"),
        &format!("{}\n", serde_json::to_string_pretty(&manifest)?),
    )?;

    let edges_path = dir.join("edges.csv");
    let mut w = buf_writer(&edges_path)?;
    writeln!(w, "src,dst").map_err(|e| Error::io(&edges_path, e))?;
    for &(u, v) in g.edges() {
        writeln!(w, "{u},{v}").map_err(|e| Error::io(&edges_path, e))?;
    }
    w.flush().map_err(|e| Error::io(&edges_path, e))?;

    let feat_path = dir.join("features.csv");
    let mut w = buf_writer(&feat_path)?;
    let f = g.features();
    let ncols = f.ncols();
    let mut row_buf = String::new();
    for i in 0..g.num_nodes() {
        row_buf.clear();
        let (cols, vals) = f.row(i);
        let mut k = 0;
        for j in 0..ncols {
            if j > 0 {
                row_buf.push(',');
            }
            if k < cols.len() && cols[k] as usize == j {
                // `{}` on f64 is the shortest representation that parses back
                // to the same value, so the round-trip is exact.
                row_buf.push_str(&format!("{}", vals[k]));
                k += 1;
            } else {
                row_buf.push('0');
            }
        }
        row_buf.push('\n');
        w.write_all(row_buf.as_bytes())
            .map_err(|e| Error::io(&feat_path, e))?;
    }
    w.flush().map_err(|e| Error::io(&feat_path, e))?;

    if let Some(labels) = g.labels() {
        let path = dir.join("labels.csv");
        let mut w = buf_writer(&path)?;
        for &y in labels {
            writeln!(w, "{y}").map_err(|e| Error::io(&path, e))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
    }

    if let Some(splits) = g.splits() {
        write_text(
            &dir.join("splits.json"),
            &format!("{}\n", serde_json::to_string(splits)?),
        )?;
    }
    Ok(())
}

fn buf_writer(path: &Path) -> Result<BufWriter<fs::File>> {
    Ok(BufWriter::new(
        fs::File::create(path).map_err(|e| Error::io(path, e))?,
    ))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_edges(path: &Path, num_nodes: usize) -> Result<Vec<(u32, u32)>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines().enumerate();
    match lines.next() {
        Some((_, Ok(h))) if h.trim() == "src,dst" => {}
        Some((_, Ok(h))) => {
            return Err(Error::parse(path, 1, format!("expected header 'src,dst', got '{h}'")))
        }
        Some((_, Err(e))) => return Err(Error::io(path, e)),
        None => return Err(Error::parse(path, 1, "empty edges file")),
    }
    let mut edges = Vec::new();
    for (idx, line) in lines {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let lineno = idx + 1;
        let (a, b) = line
            .split_once(',')
            .ok_or_else(|| Error::parse(path, lineno, "expected 'src,dst'"))?;
        let u: u32 = a
            .trim()
            .parse()
            .map_err(|_| Error::parse(path, lineno, format!("bad node id '{a}'")))?;
        let v: u32 = b
            .trim()
            .parse()
            .map_err(|_| Error::parse(path, lineno, format!("bad node id '{b}'")))?;
        if u as usize >= num_nodes || v as usize >= num_nodes {
            return Err(Error::parse(
                path,
                lineno,
                format!("edge ({u}, {v}) out of range for {num_nodes} nodes"),
            ));
        }
        edges.push((u, v));
    }
    Ok(edges)
}

fn read_features(path: &Path, num_nodes: usize, num_features: usize) -> Result<CsrMatrix> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::with_capacity(1 << 20, file);
    let mut triplets = Vec::new();
    let mut rows = 0usize;
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.is_empty() {
            continue;
        }
        let lineno = idx + 1;
        if rows >= num_nodes {
            return Err(Error::parse(path, lineno, "more feature rows than nodes"));
        }
        let mut ncols = 0usize;
        for (j, tok) in line.split(',').enumerate() {
            ncols = j + 1;
            if tok == "0" {
                continue;
            }
            let v: f64 = tok.trim().parse().map_err(|_| {
                Error::parse(path, lineno, format!("bad feature value '{tok}' in column {j}"))
            })?;
            if v != 0.0 {
                triplets.push((rows as u32, j as u32, v));
            }
        }
        if ncols != num_features {
            return Err(Error::parse(
                path,
                lineno,
                format!("row has {ncols} columns, manifest says {num_features}"),
            ));
        }
        rows += 1;
    }
    if rows != num_nodes {
        return Err(Error::parse(
            path,
            rows + 1,
            format!("{rows} feature rows, manifest says {num_nodes}"),
        ));
    }
    CsrMatrix::from_triplets(num_nodes, num_features, triplets)
}

fn read_labels(path: &Path, num_nodes: usize) -> Result<Vec<u32>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut labels = Vec::with_capacity(num_nodes);
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let y: u32 = line
            .parse()
            .map_err(|_| Error::parse(path, idx + 1, format!("bad label '{line}'")))?;
        labels.push(y);
    }
    if labels.len() != num_nodes {
        return Err(Error::parse(
            path,
            labels.len() + 1,
            format!("{} labels, manifest says {num_nodes}", labels.len()),
        ));
    }
    Ok(labels)
}

/// How many nodes go to each split when converting a raw distribution that
/// ships without splits: 20 training nodes per class, then 500 validation and
/// 1000 test nodes, the protocol of the standard citation benchmarks.
#[derive(Debug, Clone, Copy)]
pub struct SplitSpec {
    pub train_per_class: usize,
    pub val: usize,
    pub test: usize,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_per_class: 20,
            val: 500,
            test: 1000,
            seed: 0,
        }
    }
}

/// Parses the public `.content` / `.cites` citation-network distribution
/// found at `<source>/<name>.content` and `<source>/<name>.cites`.
///
/// `.content` rows are `<id> <w_1> ... <w_F> <class>`; `.cites` rows are
/// `<cited> <citing>` with string ids. Citations to unknown ids are dropped
/// (both public tarballs contain dangling references). Since this
/// distribution carries no splits, they are drawn per `split_spec`.
pub fn convert_content_cites(source: &Path, name: &str, split_spec: SplitSpec) -> Result<Graph> {
    let content_path = source.join(format!("{name}.content"));
    let cites_path = source.join(format!("{name}.cites"));

    let file = fs::File::open(&content_path).map_err(|e| Error::io(&content_path, e))?;
    let mut ids: std::collections::HashMap<String, u32> = std::collections::HashMap::new();
    let mut class_names: Vec<String> = Vec::new();
    let mut labels: Vec<u32> = Vec::new();
    let mut triplets: Vec<(u32, u32, f64)> = Vec::new();
    let mut num_features: Option<usize> = None;

    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(&content_path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let lineno = idx + 1;
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() < 3 {
            return Err(Error::parse(&content_path, lineno, "expected id, features, class"));
        }
        let f = toks.len() - 2;
        match num_features {
            None => num_features = Some(f),
            Some(expected) if expected != f => {
                return Err(Error::parse(
                    &content_path,
                    lineno,
                    format!("row has {f} feature columns, expected {expected}"),
                ));
            }
            _ => {}
        }
        let node = ids.len() as u32;
        if ids.insert(toks[0].to_string(), node).is_some() {
            return Err(Error::parse(
                &content_path,
                lineno,
                format!("duplicate node id '{}'", toks[0]),
            ));
        }
        for (j, tok) in toks[1..1 + f].iter().enumerate() {
            let v: f64 = tok.parse().map_err(|_| {
                Error::parse(&content_path, lineno, format!("bad feature value '{tok}'"))
            })?;
            if v != 0.0 {
                triplets.push((node, j as u32, v));
            }
        }
        let class_tok = toks[toks.len() - 1];
        let class = match class_names.iter().position(|c| c == class_tok) {
            Some(c) => c as u32,
            None => {
                class_names.push(class_tok.to_string());
                (class_names.len() - 1) as u32
            }
        };
        labels.push(class);
    }

    let num_nodes = ids.len();
    if num_nodes == 0 {
        return Err(Error::parse(&content_path, 1, "no nodes found"));
    }
    let num_features =
        num_features.ok_or_else(|| Error::parse(&content_path, 1, "no feature columns"))?;

    let file = fs::File::open(&cites_path).map_err(|e| Error::io(&cites_path, e))?;
    let mut edge_set: std::collections::BTreeSet<(u32, u32)> = std::collections::BTreeSet::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(&cites_path, e))?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let lineno = idx + 1;
        let mut toks = line.split_whitespace();
        let (a, b) = match (toks.next(), toks.next()) {
            (Some(a), Some(b)) => (a, b),
            _ => return Err(Error::parse(&cites_path, lineno, "expected two node ids")),
        };
        let (Some(&u), Some(&v)) = (ids.get(a), ids.get(b)) else {
            continue; // dangling citation
        };
        if u == v {
            continue;
        }
        edge_set.insert((u.min(v), u.max(v)));
    }

    let features = CsrMatrix::from_triplets(num_nodes, num_features, triplets)?;
    let splits = draw_splits(&labels, class_names.len(), num_nodes, split_spec)?;
    Graph::new(
        name,
        num_nodes,
        edge_set.into_iter().collect(),
        features,
        Some(labels),
        Some(class_names.len()),
        Some(splits),
    )
}

fn draw_splits(
    labels: &[u32],
    num_classes: usize,
    num_nodes: usize,
    spec: SplitSpec,
) -> Result<Splits> {
    let needed = spec.train_per_class * num_classes + spec.val + spec.test;
    if needed > num_nodes {
        return Err(Error::InvalidConfig(format!(
            "split spec needs {needed} nodes, dataset has {num_nodes}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut order: Vec<u32> = (0..num_nodes as u32).collect();
    order.shuffle(&mut rng);

    let mut train = Vec::new();
    let mut per_class = vec![0usize; num_classes];
    let mut rest = Vec::new();
    for &i in &order {
        let y = labels[i as usize] as usize;
        if per_class[y] < spec.train_per_class {
            per_class[y] += 1;
            train.push(i);
        } else {
            rest.push(i);
        }
    }
    if let Some(y) = per_class.iter().position(|&c| c < spec.train_per_class) {
        return Err(Error::InvalidConfig(format!(
            "class {y} has fewer than {} nodes",
            spec.train_per_class
        )));
    }
    let val: Vec<u32> = rest[..spec.val].to_vec();
    let test: Vec<u32> = rest[spec.val..spec.val + spec.test].to_vec();
    train.sort_unstable();
    Ok(Splits {
        train,
        val: {
            let mut v = val;
            v.sort_unstable();
            v
        },
        test: {
            let mut t = test;
            t.sort_unstable();
            t
        },
    })
}

/// Copies an already-canonical dataset directory, validating it on the way.
pub fn copy_canonical(source: &Path, name: &str, out_dir: &Path) -> Result<Graph> {
    let root = source
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    let dir_name = source
        .file_name()
        .and_then(|s| s.to_str())
        .unwrap_or(name)
        .to_string();
    let g = load_dataset(&root, &dir_name)?;
    save_canonical(&g, out_dir)?;
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_graph() -> Graph {
        let features = CsrMatrix::from_triplets(
            4,
            3,
            [
                (0, 0, 1.0),
                (0, 2, 0.25),
                (1, 1, 2.0),
                (3, 0, 0.07142857142857142),
            ],
        )
        .unwrap();
        Graph::new(
            "tiny",
            4,
            vec![(0, 1), (1, 2), (2, 3)],
            features,
            Some(vec![0, 1, 0, 1]),
            Some(2),
            Some(Splits {
                train: vec![0, 1],
                val: vec![2],
                test: vec![3],
            }),
        )
        .unwrap()
    }

    #[test]
    fn roundtrip_preserves_everything() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path();
        let g = tiny_graph();
        save_canonical(&g, &root.join("tiny")).unwrap();
        let back = load_dataset(root, "tiny").unwrap();
        assert_eq!(back.num_nodes(), g.num_nodes());
        assert_eq!(back.edges(), g.edges());
        assert_eq!(back.features().as_ref(), g.features().as_ref());
        assert_eq!(back.labels(), g.labels());
        assert_eq!(back.splits(), g.splits());
        assert_eq!(back.num_classes(), g.num_classes());
    }

    #[test]
    fn missing_file_names_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let err = load_dataset(dir.path(), "absent").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("manifest.json"), "unhelpful error: {msg}");
    }

    #[test]
    fn truncated_edges_file_is_a_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path();
        save_canonical(&tiny_graph(), &root.join("tiny")).unwrap();
        fs::write(root.join("tiny/edges.csv"), "src,dst\n0,1\n9,2\n").unwrap();
        let err = load_dataset(root, "tiny").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("edges.csv") && msg.contains("line 3"), "{msg}");
    }

    #[test]
    fn feature_column_count_checked() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path();
        save_canonical(&tiny_graph(), &root.join("tiny")).unwrap();
        fs::write(root.join("tiny/features.csv"), "1,0\n0,1\n0,0\n0,0\n").unwrap();
        let err = load_dataset(root, "tiny").unwrap_err();
        assert!(err.to_string().contains("features.csv"));
    }

    #[test]
    fn row_normalization_option() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path();
        save_canonical(&tiny_graph(), &root.join("tiny")).unwrap();
        let opts = LoadOptions {
            row_normalize_features: true,
        };
        let g = load_dataset_with(root, "tiny", opts).unwrap();
        assert!((g.features().get(0, 0) - 0.8).abs() < 1e-12);
        assert!((g.features().get(0, 2) - 0.2).abs() < 1e-12);
    }

    #[test]
    fn content_cites_conversion() {
        let dir = tempfile::tempdir().unwrap();
        let src = dir.path();
        // 5 nodes, 2 features, 2 classes; one dangling citation; one duplicate.
        fs::write(
            src.join("demo.content"),
            "n0 1 0 red\nn1 0 1 blue\nn2 1 1 red\nn3 0 1 blue\nn4 1 0 red\n",
        )
        .unwrap();
        fs::write(
            src.join("demo.cites"),
            "n0 n1\nn1 n0\nn2 n3\nn3 n4\nn9 n0\nn4 n4\n",
        )
        .unwrap();
        let spec = SplitSpec {
            train_per_class: 1,
            val: 1,
            test: 1,
            seed: 7,
        };
        let g = convert_content_cites(src, "demo", spec).unwrap();
        assert_eq!(g.num_nodes(), 5);
        assert_eq!(g.num_edges(), 3); // dedup + dangling + self-loop dropped
        assert_eq!(g.num_classes(), Some(2));
        let s = g.splits().unwrap();
        assert_eq!(s.train.len(), 2);
        assert_eq!(s.val.len(), 1);
        assert_eq!(s.test.len(), 1);
        let labels = g.labels().unwrap();
        assert_eq!(labels[0], labels[2]);
        assert_ne!(labels[0], labels[1]);
    }
}
