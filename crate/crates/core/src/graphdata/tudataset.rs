//! TUDataset plain-text layout.
//!
//! A dataset `NAME` lives in one directory as
//!
//! * `NAME_A.txt`: one `i, j` line per directed edge, 1-based global node ids
//! * `NAME_graph_indicator.txt`: 1-based graph id of every global node
//! * `NAME_graph_labels.txt`: one integer class label per graph
//! * `NAME_node_attributes.txt` (optional): comma-separated reals per node
//! * `NAME_node_labels.txt` (optional): integer label per node, one-hot encoded
//!
//! Separators are a comma with optional surrounding spaces; LF and CRLF line
//! endings are both accepted.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{DataError, Dataset, Graph};
use crate::tensor::DenseMatrix;

struct TextFile {
    name: String,
    lines: Vec<(usize, String)>,
}

impl TextFile {
    fn read(path: &Path) -> Result<Self, DataError> {
        let text = fs::read_to_string(path).map_err(|source| DataError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let lines = text
            .split('\n')
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim_end_matches('\r').trim().to_string()))
            .filter(|(_, l)| !l.is_empty())
            .collect();
        Ok(Self {
            name: file_name(path),
            lines,
        })
    }

    fn error(&self, line: usize, message: impl Into<String>) -> DataError {
        DataError::Parse {
            file: self.name.clone(),
            line,
            message: message.into(),
        }
    }

    fn fields<'a>(&self, line: usize, text: &'a str) -> Result<Vec<&'a str>, DataError> {
        let fields: Vec<&str> = text.split(',').map(str::trim).collect();
        if fields.iter().any(|f| f.is_empty()) {
            return Err(self.error(line, format!("empty field in '{text}'")));
        }
        Ok(fields)
    }

    fn int(&self, line: usize, field: &str) -> Result<i64, DataError> {
        field
            .parse::<i64>()
            .map_err(|_| self.error(line, format!("expected an integer, found '{field}'")))
    }

    fn ints(&self) -> Result<Vec<(usize, i64)>, DataError> {
        self.lines
            .iter()
            .map(|(ln, text)| {
                let fields = self.fields(*ln, text)?;
                Ok((*ln, self.int(*ln, fields[0])?))
            })
            .collect()
    }
}

fn file_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn required(dir: &Path, name: &str, suffix: &str) -> Result<PathBuf, DataError> {
    let path = dir.join(format!("{name}_{suffix}.txt"));
    if path.is_file() {
        Ok(path)
    } else {
        Err(DataError::MissingFile { path })
    }
}

fn optional(dir: &Path, name: &str, suffix: &str) -> Option<PathBuf> {
    let path = dir.join(format!("{name}_{suffix}.txt"));
    path.is_file().then_some(path)
}

/// Reads dataset `name` from `dir`.
pub fn parse_tudataset(dir: impl AsRef<Path>, name: &str) -> Result<Dataset, DataError> {
    let dir = dir.as_ref();
    let a_file = TextFile::read(&required(dir, name, "A")?)?;
    let ind_file = TextFile::read(&required(dir, name, "graph_indicator")?)?;
    let label_file = TextFile::read(&required(dir, name, "graph_labels")?)?;

    // node -> (graph, local index)
    let indicator = ind_file.ints()?;
    let mut num_graphs = 0usize;
    for &(ln, gid) in &indicator {
        if gid < 1 {
            return Err(ind_file.error(ln, format!("graph id {gid} must be at least 1")));
        }
        num_graphs = num_graphs.max(gid as usize);
    }
    let num_nodes_total = indicator.len();
    let mut sizes = vec![0usize; num_graphs];
    let mut placement = Vec::with_capacity(num_nodes_total);
    for &(_, gid) in &indicator {
        let g = gid as usize - 1;
        placement.push((g, sizes[g]));
        sizes[g] += 1;
    }
    if let Some(empty) = sizes.iter().position(|&s| s == 0) {
        return Err(DataError::Inconsistent {
            file: ind_file.name.clone(),
            message: format!("graph {} has no nodes", empty + 1),
        });
    }

    let mut edges: Vec<Vec<(usize, usize)>> = vec![Vec::new(); num_graphs];
    for (ln, text) in &a_file.lines {
        let fields = a_file.fields(*ln, text)?;
        if fields.len() != 2 {
            return Err(a_file.error(*ln, format!("expected 'i, j', found '{text}'")));
        }
        let mut ends = [0usize; 2];
        for (slot, f) in ends.iter_mut().zip(&fields) {
            let id = a_file.int(*ln, f)?;
            if id < 1 || id as usize > num_nodes_total {
                return Err(a_file.error(
                    *ln,
                    format!("node {id} belongs to no graph ({num_nodes_total} nodes indicated)"),
                ));
            }
            *slot = id as usize - 1;
        }
        let (gu, lu) = placement[ends[0]];
        let (gv, lv) = placement[ends[1]];
        if gu != gv {
            return Err(a_file.error(
                *ln,
                format!(
                    "edge {}-{} crosses graphs {} and {}",
                    ends[0] + 1,
                    ends[1] + 1,
                    gu + 1,
                    gv + 1
                ),
            ));
        }
        edges[gu].push((lu, lv));
    }

    let raw_labels = label_file.ints()?;
    if raw_labels.len() != num_graphs {
        return Err(DataError::Inconsistent {
            file: label_file.name.clone(),
            message: format!("{} labels for {num_graphs} graphs", raw_labels.len()),
        });
    }
    let classes: BTreeMap<i64, usize> = raw_labels
        .iter()
        .map(|&(_, l)| l)
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .enumerate()
        .map(|(i, l)| (l, i))
        .collect();

    let mut columns: Vec<Vec<f64>> = Vec::new();
    let mut attr_dim = 0usize;
    if let Some(path) = optional(dir, name, "node_attributes") {
        let f = TextFile::read(&path)?;
        check_row_count(&f, num_nodes_total)?;
        for (ln, text) in &f.lines {
            let fields = f.fields(*ln, text)?;
            if attr_dim == 0 {
                attr_dim = fields.len();
            } else if fields.len() != attr_dim {
                return Err(f.error(*ln, format!("expected {attr_dim} values, found {}", fields.len())));
            }
            let mut row = Vec::with_capacity(attr_dim);
            for field in fields {
                let v: f64 = field
                    .parse()
                    .map_err(|_| f.error(*ln, format!("expected a real number, found '{field}'")))?;
                if !v.is_finite() {
                    return Err(f.error(*ln, format!("non-finite attribute '{field}'")));
                }
                row.push(v);
            }
            columns.push(row);
        }
    }
    if let Some(path) = optional(dir, name, "node_labels") {
        let f = TextFile::read(&path)?;
        check_row_count(&f, num_nodes_total)?;
        let node_labels = f.ints()?;
        let values: BTreeMap<i64, usize> = node_labels
            .iter()
            .map(|&(_, l)| l)
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .enumerate()
            .map(|(i, l)| (l, i))
            .collect();
        if columns.is_empty() {
            columns = vec![Vec::new(); num_nodes_total];
        }
        for (row, (_, l)) in columns.iter_mut().zip(&node_labels) {
            let mut onehot = vec![0.0; values.len()];
            onehot[values[l]] = 1.0;
            row.extend(onehot);
        }
        attr_dim += values.len();
    }
    if columns.is_empty() {
        columns = vec![vec![1.0]; num_nodes_total];
        attr_dim = 1;
    }

    let mut per_graph: Vec<Vec<f64>> = sizes.iter().map(|&s| Vec::with_capacity(s * attr_dim)).collect();
    for (node, row) in columns.iter().enumerate() {
        per_graph[placement[node].0].extend_from_slice(row);
    }

    let mut graphs = Vec::with_capacity(num_graphs);
    for (g, (values, edge_list)) in per_graph.into_iter().zip(edges).enumerate() {
        let attrs = DenseMatrix::new(sizes[g], attr_dim, values).map_err(|e| DataError::Inconsistent {
            file: format!("{name}_node_attributes.txt"),
            message: e.to_string(),
        })?;
        let label = classes[&raw_labels[g].1];
        graphs.push(Graph::new(sizes[g], edge_list, attrs, Some(label))?);
    }
    Dataset::new(name, graphs, classes.len())
}

fn check_row_count(f: &TextFile, expected: usize) -> Result<(), DataError> {
    if f.lines.len() == expected {
        return Ok(());
    }
    let line = if f.lines.len() > expected {
        f.lines[expected].0
    } else {
        f.lines.last().map(|l| l.0 + 1).unwrap_or(1)
    };
    Err(f.error(
        line,
        format!("{} rows for {expected} nodes", f.lines.len()),
    ))
}

/// Writes `dataset` under `dir` in the same layout, with real-valued node
/// attributes and class indices as graph labels.
pub fn write_tudataset(dataset: &Dataset, dir: impl AsRef<Path>, name: &str) -> Result<(), DataError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|source| DataError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let (mut a, mut ind, mut labels, mut attrs) = (String::new(), String::new(), String::new(), String::new());
    let mut offset = 0usize;
    for (gi, g) in dataset.graphs().iter().enumerate() {
        let label = g.label().ok_or_else(|| {
            DataError::InvalidDataset(format!("graph {gi} has no label and cannot be written"))
        })?;
        for &(u, v) in g.edges() {
            let _ = writeln!(a, "{}, {}", offset + u + 1, offset + v + 1);
            let _ = writeln!(a, "{}, {}", offset + v + 1, offset + u + 1);
        }
        for r in 0..g.num_nodes() {
            let _ = writeln!(ind, "{}", gi + 1);
            let row: Vec<String> = g.attributes().row(r).iter().map(|v| v.to_string()).collect();
            let _ = writeln!(attrs, "{}", row.join(", "));
        }
        let _ = writeln!(labels, "{label}");
        offset += g.num_nodes();
    }
    for (suffix, body) in [
        ("A", a),
        ("graph_indicator", ind),
        ("graph_labels", labels),
        ("node_attributes", attrs),
    ] {
        let path = dir.join(format!("{name}_{suffix}.txt"));
        fs::write(&path, body).map_err(|source| DataError::Io { path, source })?;
    }
    Ok(())
}
