//! Flat-file ingestion: delimited action logs, edge lists, and declared
//! friend counts, parsed into the core domain model with validation and
//! summary statistics.
//!
//! Formats (tab- or comma-delimited, auto-detected; one optional header
//! row; `#` lines are comments):
//! - actions: `user,item,timestamp[,kind[,rating]]`
//! - edges: `user,user`
//! - declared degrees: `user,count`

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use feedinf_core::model::{ActivityLogBuilder, ItemId, KindId, UserId};
use feedinf_core::{ActivityLog, SocialGraph};

use crate::error::{CliError, CliResult};

/// String-id to dense-index mapping, preserving first-seen order.
#[derive(Default, Debug, Clone)]
pub struct Interner {
    names: Vec<String>,
    index: HashMap<String, u32>,
}

impl Interner {
    pub fn intern(&mut self, name: &str) -> u32 {
        if let Some(&i) = self.index.get(name) {
            return i;
        }
        let i = self.names.len() as u32;
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), i);
        i
    }

    pub fn get(&self, name: &str) -> Option<u32> {
        self.index.get(name).copied()
    }

    pub fn name(&self, i: u32) -> &str {
        &self.names[i as usize]
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

/// Input files and parse options for one dataset.
#[derive(Debug, Clone, Default)]
pub struct DatasetManifest {
    /// Action files with an optional kind label (`path` or `path:kind`).
    pub actions: Vec<(PathBuf, Option<String>)>,
    pub edges: PathBuf,
    pub declared_degrees: Option<PathBuf>,
    /// Kind names declared up front; with any declaration (here or via
    /// file labels) unknown kind-column values are rejected.
    pub kinds: Vec<String>,
    /// Skip malformed lines with a warning instead of failing.
    pub lenient: bool,
    /// Drop action lines whose rating column is below this value.
    pub min_rating: Option<f64>,
}

/// Per-run ingestion counters.
#[derive(Debug, Clone, Default, Serialize)]
pub struct IngestReport {
    pub input_lines: u64,
    pub accepted_lines: u64,
    pub rejected_lines: u64,
    pub header_lines: u64,
    pub filtered_rating_lines: u64,
    pub self_edges_dropped: u64,
}

/// A loaded dataset: the core structures plus the id mappings back to the
/// source identifiers.
#[derive(Debug)]
pub struct Dataset {
    pub log: ActivityLog,
    pub graph: SocialGraph,
    pub users: Interner,
    pub items: Interner,
}

impl Dataset {
    pub fn kind_id(&self, name: &str) -> CliResult<KindId> {
        self.log
            .kind_id(name)
            .ok_or_else(|| CliError::data(format!("unknown action kind `{name}`")))
    }
}

fn detect_delimiter(first_line: &str) -> char {
    if first_line.contains('\t') {
        '\t'
    } else {
        ','
    }
}

fn looks_like_action_header(fields: &[&str]) -> bool {
    fields.len() >= 3 && fields[2].parse::<i64>().is_err() && {
        let f = fields[2].to_ascii_lowercase();
        f.contains("time") || f == "ts"
    }
}

fn looks_like_id_header(fields: &[&str], names: &[&str]) -> bool {
    fields
        .iter()
        .any(|f| names.contains(&f.to_ascii_lowercase().as_str()))
}

struct LineReader {
    reader: BufReader<File>,
    path: String,
    line_no: u64,
    buf: String,
}

impl LineReader {
    fn open(path: &Path) -> CliResult<Self> {
        let file = File::open(path).map_err(|e| {
            CliError::Runtime(anyhow::anyhow!("cannot open {}: {e}", path.display()))
        })?;
        Ok(LineReader {
            reader: BufReader::new(file),
            path: path.display().to_string(),
            line_no: 0,
            buf: String::new(),
        })
    }

    fn next_line(&mut self) -> CliResult<Option<(u64, &str)>> {
        self.buf.clear();
        let n = self.reader.read_line(&mut self.buf)?;
        if n == 0 {
            return Ok(None);
        }
        self.line_no += 1;
        Ok(Some((self.line_no, self.buf.trim_end_matches(['\n', '\r']))))
    }
}

type ParsedAction = (u32, u32, i64, u16);

/// Loads and validates one dataset. Strict mode fails on the first
/// malformed line (naming file and line); lenient mode skips and counts.
pub fn load_dataset(manifest: &DatasetManifest) -> CliResult<(Dataset, IngestReport)> {
    let mut users = Interner::default();
    let mut items = Interner::default();
    let mut kinds = Interner::default();
    let mut report = IngestReport::default();

    let mut declared_kinds: Vec<String> = manifest.kinds.clone();
    for (_, label) in &manifest.actions {
        if let Some(k) = label {
            if !declared_kinds.contains(k) {
                declared_kinds.push(k.clone());
            }
        }
    }
    let closed_kinds = !declared_kinds.is_empty();
    for k in &declared_kinds {
        kinds.intern(k);
    }

    let mut actions: Vec<ParsedAction> = Vec::new();
    for (path, label) in &manifest.actions {
        parse_action_file(
            path,
            label.as_deref(),
            manifest,
            closed_kinds,
            &mut users,
            &mut items,
            &mut kinds,
            &mut actions,
            &mut report,
        )?;
    }
    if kinds.is_empty() {
        kinds.intern("action");
    }

    let mut edges: Vec<(UserId, UserId)> = Vec::new();
    {
        let mut reader = LineReader::open(&manifest.edges)?;
        let path = reader.path.clone();
        let mut first = true;
        let mut delim = ',';
        while let Some((line_no, line)) = reader.next_line()? {
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if first {
                delim = detect_delimiter(line);
                first = false;
                let fields: Vec<&str> = line.split(delim).collect();
                if looks_like_id_header(
                    &fields,
                    &["user", "user1", "user2", "friend", "source", "target", "u", "v"],
                ) {
                    report.header_lines += 1;
                    continue;
                }
            }
            report.input_lines += 1;
            let fields: Vec<&str> = line.split(delim).collect();
            if fields.len() != 2 || fields.iter().any(|f| f.is_empty()) {
                reject(
                    &mut report,
                    manifest.lenient,
                    format!("{path}:{line_no}: edge line needs exactly 2 fields"),
                )?;
                continue;
            }
            let a = users.intern(fields[0]);
            let b = users.intern(fields[1]);
            edges.push((UserId(a), UserId(b)));
            report.accepted_lines += 1;
        }
    }

    let declared = match &manifest.declared_degrees {
        None => None,
        Some(path) => {
            let mut map: Vec<(u32, u32)> = Vec::new();
            let mut reader = LineReader::open(path)?;
            let path = reader.path.clone();
            let mut first = true;
            let mut delim = ',';
            while let Some((line_no, line)) = reader.next_line()? {
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                if first {
                    delim = detect_delimiter(line);
                    first = false;
                    let fields: Vec<&str> = line.split(delim).collect();
                    if fields.len() == 2 && fields[1].parse::<u32>().is_err() {
                        report.header_lines += 1;
                        continue;
                    }
                }
                report.input_lines += 1;
                let fields: Vec<&str> = line.split(delim).collect();
                let parsed = (fields.len() == 2)
                    .then(|| fields[1].parse::<u32>().ok())
                    .flatten();
                match parsed {
                    Some(count) => {
                        map.push((users.intern(fields[0]), count));
                        report.accepted_lines += 1;
                    }
                    None => reject(
                        &mut report,
                        manifest.lenient,
                        format!("{path}:{line_no}: declared-degree line needs `user,count`"),
                    )?,
                }
            }
            Some(map)
        }
    };

    let n_users = users.len() as u32;
    let kind_names: Vec<String> = (0..kinds.len()).map(|i| kinds.name(i as u32).to_string()).collect();
    let mut builder = ActivityLogBuilder::new(n_users, kind_names);
    for &(u, i, t, k) in &actions {
        builder.push(UserId(u), ItemId(i), t, KindId(k));
    }
    let log = builder.build();

    let (mut graph, self_edges) = SocialGraph::from_edges(n_users, edges);
    report.self_edges_dropped = self_edges;
    if let Some(pairs) = declared {
        let mut vec: Vec<Option<u32>> = vec![None; n_users as usize];
        for (u, c) in pairs {
            vec[u as usize] = Some(c);
        }
        // Validate against adjacency: declared counts below the observed
        // degree are inconsistent.
        for u in 0..n_users {
            if let Some(c) = vec[u as usize] {
                let deg = graph.degree(UserId(u)) as u32;
                if c < deg {
                    if manifest.lenient {
                        vec[u as usize] = Some(deg);
                    } else {
                        return Err(CliError::data(format!(
                            "user `{}` declares {c} friends but {deg} are present",
                            users.name(u)
                        )));
                    }
                }
            }
        }
        graph.set_declared_degrees(vec);
    }

    Ok((
        Dataset {
            log,
            graph,
            users,
            items,
        },
        report,
    ))
}

#[allow(clippy::too_many_arguments)]
fn parse_action_file(
    path: &Path,
    label: Option<&str>,
    manifest: &DatasetManifest,
    closed_kinds: bool,
    users: &mut Interner,
    items: &mut Interner,
    kinds: &mut Interner,
    actions: &mut Vec<ParsedAction>,
    report: &mut IngestReport,
) -> CliResult<()> {
    let mut reader = LineReader::open(path)?;
    let path_s = reader.path.clone();
    let mut first = true;
    let mut delim = ',';
    while let Some((line_no, line)) = reader.next_line()? {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if first {
            delim = detect_delimiter(line);
            first = false;
            let fields: Vec<&str> = line.split(delim).collect();
            if looks_like_action_header(&fields) {
                report.header_lines += 1;
                continue;
            }
        }
        report.input_lines += 1;
        let fields: Vec<&str> = line.split(delim).collect();
        match parse_action_line(&fields, label, manifest, closed_kinds, kinds) {
            Ok(Some((user, item, time, kind))) => {
                actions.push((users.intern(user), items.intern(item), time, kind));
                report.accepted_lines += 1;
            }
            Ok(None) => {
                report.filtered_rating_lines += 1;
                report.accepted_lines += 1;
            }
            Err(msg) => reject(report, manifest.lenient, format!("{path_s}:{line_no}: {msg}"))?,
        }
    }
    Ok(())
}

type ActionFields<'a> = (&'a str, &'a str, i64, u16);

fn parse_action_line<'a>(
    fields: &[&'a str],
    label: Option<&str>,
    manifest: &DatasetManifest,
    closed_kinds: bool,
    kinds: &mut Interner,
) -> Result<Option<ActionFields<'a>>, String> {
    if fields.len() < 3 || fields.len() > 5 {
        return Err(format!(
            "action line needs 3-5 fields (user,item,timestamp[,kind[,rating]]), got {}",
            fields.len()
        ));
    }
    let (user, item) = (fields[0], fields[1]);
    if user.is_empty() || item.is_empty() {
        return Err("empty user or item field".to_string());
    }
    let time: i64 = fields[2]
        .parse()
        .map_err(|_| format!("unparseable timestamp `{}`", fields[2]))?;
    if time < 0 {
        return Err(format!("negative timestamp `{time}`"));
    }
    let kind_name = match (fields.get(3), label) {
        (Some(&col), Some(lbl)) if !col.is_empty() && col != lbl => {
            return Err(format!(
                "kind column `{col}` conflicts with file label `{lbl}`"
            ));
        }
        (Some(&col), _) if !col.is_empty() => col,
        (_, Some(lbl)) => lbl,
        _ => "action",
    };
    let kind = match kinds.get(kind_name) {
        Some(k) => k,
        None if closed_kinds => return Err(format!("unknown action kind `{kind_name}`")),
        None => kinds.intern(kind_name),
    };
    if let Some(min) = manifest.min_rating {
        let Some(&rating_s) = fields.get(4) else {
            return Err("rating filter set but line has no rating column".to_string());
        };
        let rating: f64 = rating_s
            .parse()
            .map_err(|_| format!("unparseable rating `{rating_s}`"))?;
        if rating < min {
            return Ok(None);
        }
    }
    Ok(Some((user, item, time, kind as u16)))
}

fn reject(report: &mut IngestReport, lenient: bool, msg: String) -> CliResult<()> {
    report.rejected_lines += 1;
    if lenient {
        eprintln!("warning: skipped {msg}");
        Ok(())
    } else {
        Err(CliError::data(msg))
    }
}

/// (mean, standard error of the mean, median) of a count distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DistSummary {
    pub mean: f64,
    pub std_error: f64,
    pub median: f64,
}

impl DistSummary {
    pub fn of(values: &[u64]) -> DistSummary {
        if values.is_empty() {
            return DistSummary {
                mean: 0.0,
                std_error: 0.0,
                median: 0.0,
            };
        }
        let n = values.len() as f64;
        let mean = values.iter().map(|&v| v as f64).sum::<f64>() / n;
        let std_error = if values.len() < 2 {
            0.0
        } else {
            let ss: f64 = values
                .iter()
                .map(|&v| (v as f64 - mean) * (v as f64 - mean))
                .sum();
            (ss / (n - 1.0)).sqrt() / n.sqrt()
        };
        let mut sorted = values.to_vec();
        sorted.sort_unstable();
        let mid = sorted.len() / 2;
        let median = if sorted.len() % 2 == 1 {
            sorted[mid] as f64
        } else {
            (sorted[mid - 1] as f64 + sorted[mid] as f64) / 2.0
        };
        DistSummary {
            mean,
            std_error,
            median,
        }
    }
}

/// Dataset-level summary statistics.
#[derive(Debug, Clone, Serialize)]
pub struct DatasetStats {
    pub user_count: u64,
    pub item_count: u64,
    pub action_count: u64,
    pub action_count_by_kind: Vec<(String, u64)>,
    /// Over users with at least one action.
    pub actions_per_user: DistSummary,
    /// Over items with at least one action.
    pub actions_per_item: DistSummary,
    /// Over all users known to the dataset, zero-degree users included.
    pub friends_per_user: DistSummary,
}

/// Summary statistics over a loaded dataset.
pub fn dataset_stats(log: &ActivityLog, graph: &SocialGraph) -> DatasetStats {
    let n_users = log.n_users();
    let mut per_user = vec![0u64; n_users as usize];
    let mut per_item: HashMap<u32, u64> = HashMap::new();
    let mut by_kind = Vec::new();
    for (k, name) in log.kinds().iter().enumerate() {
        let kl = log.kind(KindId(k as u16));
        by_kind.push((name.clone(), kl.n_events()));
        for u in 0..n_users {
            let events = kl.events(UserId(u));
            per_user[u as usize] += events.len() as u64;
            for e in events {
                *per_item.entry(e.item.0).or_insert(0) += 1;
            }
        }
    }
    let active_users: Vec<u64> = per_user.iter().copied().filter(|&c| c > 0).collect();
    let mut item_counts: Vec<(u32, u64)> = per_item.into_iter().collect();
    item_counts.sort_unstable_by_key(|&(i, _)| i);
    let item_values: Vec<u64> = item_counts.iter().map(|&(_, c)| c).collect();
    let degrees: Vec<u64> = (0..graph.n_users())
        .map(|u| graph.degree(UserId(u)) as u64)
        .collect();
    DatasetStats {
        user_count: active_users.len() as u64,
        item_count: item_values.len() as u64,
        action_count: log.n_events(),
        action_count_by_kind: by_kind,
        actions_per_user: DistSummary::of(&active_users),
        actions_per_item: DistSummary::of(&item_values),
        friends_per_user: DistSummary::of(&degrees),
    }
}

fn stamp(w: &mut dyn Write, digest: Option<&str>) -> std::io::Result<()> {
    if let Some(d) = digest {
        writeln!(w, "# manifest={d}")?;
    }
    Ok(())
}

/// Writes one actions file for the given log (which may be a synthetic
/// variant sharing the dataset's id maps).
pub fn write_actions_file(
    log: &ActivityLog,
    ds: &Dataset,
    path: &Path,
    digest: Option<&str>,
) -> CliResult<()> {
    let mut w = std::io::BufWriter::new(File::create(path)?);
    stamp(&mut w, digest)?;
    writeln!(w, "user,item,timestamp,kind")?;
    for a in log.iter_actions() {
        writeln!(
            w,
            "{},{},{},{}",
            ds.users.name(a.user.0),
            ds.items.name(a.item.0),
            a.time,
            log.kinds()[a.kind.0 as usize]
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_edges_file(ds: &Dataset, path: &Path, digest: Option<&str>) -> CliResult<()> {
    let mut w = std::io::BufWriter::new(File::create(path)?);
    stamp(&mut w, digest)?;
    writeln!(w, "user1,user2")?;
    for u in 0..ds.graph.n_users() {
        for &v in ds.graph.neighbors(UserId(u)) {
            if u < v.0 {
                writeln!(w, "{},{}", ds.users.name(u), ds.users.name(v.0))?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_degrees_file(ds: &Dataset, path: &Path, digest: Option<&str>) -> CliResult<()> {
    let mut w = std::io::BufWriter::new(File::create(path)?);
    stamp(&mut w, digest)?;
    writeln!(w, "user,count")?;
    for u in 0..ds.graph.n_users() {
        if let Some(c) = ds.graph.declared_degree(UserId(u)) {
            writeln!(w, "{},{}", ds.users.name(u), c)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes a dataset back to flat files (`actions.csv`, `edges.csv`, and
/// `degrees.csv` when declared degrees exist). Reloading the result yields
/// identical structures. A manifest digest, when given, is stamped as a
/// comment line on each file.
pub fn write_dataset(ds: &Dataset, dir: &Path, digest: Option<&str>) -> CliResult<()> {
    std::fs::create_dir_all(dir)?;
    write_actions_file(&ds.log, ds, &dir.join("actions.csv"), digest)?;
    write_edges_file(ds, &dir.join("edges.csv"), digest)?;
    if ds.graph.has_declared_degrees() {
        write_degrees_file(ds, &dir.join("degrees.csv"), digest)?;
    }
    Ok(())
}

/// Builds a [`Dataset`] around generated core structures, assigning
/// synthetic printable ids (`u<N>`, `i<N>`).
pub fn dataset_from_generated(log: ActivityLog, graph: SocialGraph) -> Dataset {
    let mut users = Interner::default();
    for u in 0..log.n_users() {
        users.intern(&format!("u{u}"));
    }
    let mut items = Interner::default();
    let max_item = log
        .iter_actions()
        .map(|a| a.item.0)
        .max()
        .map(|m| m + 1)
        .unwrap_or(0);
    for i in 0..max_item {
        items.intern(&format!("i{i}"));
    }
    Dataset {
        log,
        graph,
        users,
        items,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::TempDir;

    fn write_file(dir: &Path, name: &str, content: &str) -> PathBuf {
        let path = dir.join(name);
        let mut f = File::create(&path).unwrap();
        f.write_all(content.as_bytes()).unwrap();
        path
    }

    fn basic_manifest(dir: &Path, actions: &str, edges: &str) -> DatasetManifest {
        DatasetManifest {
            actions: vec![(write_file(dir, "actions.csv", actions), None)],
            edges: write_file(dir, "edges.csv", edges),
            ..DatasetManifest::default()
        }
    }

    #[test]
    fn symmetric_edge_lines_collapse() {
        let tmp = TempDir::new().unwrap();
        let m = basic_manifest(tmp.path(), "a,x,1\nb,y,2\n", "a,b\nb,a\n");
        let (ds, _) = load_dataset(&m).unwrap();
        assert_eq!(ds.graph.n_edges(), 1);
        let a = ds.users.get("a").unwrap();
        let b = ds.users.get("b").unwrap();
        assert!(ds.graph.is_edge(UserId(a), UserId(b)));
    }

    #[test]
    fn negative_timestamp_is_an_error_naming_the_line() {
        let tmp = TempDir::new().unwrap();
        let m = basic_manifest(tmp.path(), "a,x,5\nb,y,-3\n", "a,b\n");
        let err = load_dataset(&m).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("actions.csv:2"), "{msg}");
        assert!(msg.contains("negative timestamp"), "{msg}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn lenient_mode_counts_rejected_lines() {
        let tmp = TempDir::new().unwrap();
        let mut m = basic_manifest(
            tmp.path(),
            "a,x,5\nbadline\nb,y,7\nc,z,oops\n",
            "a,b\n",
        );
        m.lenient = true;
        let (ds, report) = load_dataset(&m).unwrap();
        assert_eq!(report.rejected_lines, 2);
        assert_eq!(ds.log.n_events(), 2);
        // accepted + rejected covers every action input line (plus 1 edge).
        assert_eq!(report.accepted_lines + report.rejected_lines, report.input_lines);
    }

    #[test]
    fn line_count_oracle_on_large_fixture() {
        let tmp = TempDir::new().unwrap();
        let mut content = String::new();
        let mut expect_ok = 0u64;
        for i in 0..10_000 {
            if i % 100 == 7 {
                content.push_str(&format!("u{i},i{},notatime\n", i % 50));
            } else {
                content.push_str(&format!("u{},i{},{}\n", i % 500, i % 50, i));
                expect_ok += 1;
            }
        }
        let mut m = basic_manifest(tmp.path(), &content, "u0,u1\n");
        m.lenient = true;
        let (ds, report) = load_dataset(&m).unwrap();
        let stats = dataset_stats(&ds.log, &ds.graph);
        assert_eq!(stats.action_count, expect_ok);
        assert_eq!(report.rejected_lines, 10_000 - expect_ok);
    }

    #[test]
    fn tab_delimiter_and_header_detection() {
        let tmp = TempDir::new().unwrap();
        let m = basic_manifest(
            tmp.path(),
            "user\titem\ttimestamp\na\tx\t5\nb\ty\t9\n",
            "user1,user2\na,b\n",
        );
        let (ds, report) = load_dataset(&m).unwrap();
        assert_eq!(ds.log.n_events(), 2);
        assert_eq!(report.header_lines, 2);
        assert_eq!(ds.graph.n_edges(), 1);
    }

    #[test]
    fn kind_column_and_labels() {
        let tmp = TempDir::new().unwrap();
        let dir = tmp.path();
        let loves = write_file(dir, "loves.csv", "a,x,1\nb,y,2\n");
        let listens = write_file(dir, "listens.csv", "a,x,3\na,z,4\n");
        let m = DatasetManifest {
            actions: vec![
                (loves, Some("love".to_string())),
                (listens, Some("listen".to_string())),
            ],
            edges: write_file(dir, "e.csv", "a,b\n"),
            ..DatasetManifest::default()
        };
        let (ds, _) = load_dataset(&m).unwrap();
        assert!(ds.log.kind_id("love").is_some());
        assert!(ds.log.kind_id("listen").is_some());
        assert_eq!(ds.log.kind(ds.kind_id("love").unwrap()).n_events(), 2);
    }

    #[test]
    fn unknown_kind_rejected_when_kinds_declared() {
        let tmp = TempDir::new().unwrap();
        let dir = tmp.path();
        let acts = write_file(dir, "a.csv", "a,x,1,love\nb,y,2,ban\n");
        let m = DatasetManifest {
            actions: vec![(acts, None)],
            edges: write_file(dir, "e.csv", "a,b\n"),
            kinds: vec!["love".to_string()],
            ..DatasetManifest::default()
        };
        let err = load_dataset(&m).unwrap_err();
        assert!(err.to_string().contains("unknown action kind `ban`"));
    }

    #[test]
    fn rating_filter_drops_low_ratings() {
        let tmp = TempDir::new().unwrap();
        let dir = tmp.path();
        let acts = write_file(dir, "a.csv", "a,x,1,rate,4.5\nb,y,2,rate,2.0\n");
        let m = DatasetManifest {
            actions: vec![(acts, None)],
            edges: write_file(dir, "e.csv", "a,b\n"),
            min_rating: Some(3.0),
            ..DatasetManifest::default()
        };
        let (ds, report) = load_dataset(&m).unwrap();
        assert_eq!(ds.log.n_events(), 1);
        assert_eq!(report.filtered_rating_lines, 1);
    }

    #[test]
    fn declared_degree_below_observed_is_invalid() {
        let tmp = TempDir::new().unwrap();
        let dir = tmp.path();
        let mut m = basic_manifest(dir, "a,x,1\n", "a,b\na,c\n");
        m.declared_degrees = Some(write_file(dir, "deg.csv", "a,1\n"));
        let err = load_dataset(&m).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn stats_basic_arithmetic() {
        let tmp = TempDir::new().unwrap();
        // Users with 1, 2, 3 actions: mean 2, median 2.
        let m = basic_manifest(
            tmp.path(),
            "a,x,1\nb,x,2\nb,y,3\nc,x,4\nc,y,5\nc,z,6\n",
            "a,b\n",
        );
        let (ds, _) = load_dataset(&m).unwrap();
        let stats = dataset_stats(&ds.log, &ds.graph);
        assert_eq!(stats.actions_per_user.mean, 2.0);
        assert_eq!(stats.actions_per_user.median, 2.0);
        assert_eq!(stats.user_count, 3);
        assert_eq!(stats.item_count, 3);
        assert_eq!(stats.action_count, 6);
    }

    #[test]
    fn single_user_std_error_is_zero() {
        let values = [7u64];
        let d = DistSummary::of(&values);
        assert_eq!(d.std_error, 0.0);
        assert_eq!(d.mean, 7.0);
        assert_eq!(d.median, 7.0);
    }

    #[test]
    fn stats_match_two_pass_oracle() {
        // Independent reference: a plain two-pass mean/SE/median over the
        // same count vectors, compared at tight tolerance.
        let mut counts: Vec<u64> = Vec::new();
        let mut state = 88172645463325252u64;
        for _ in 0..997 {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            counts.push(state % 1000);
        }
        let d = DistSummary::of(&counts);
        let n = counts.len() as f64;
        let mean: f64 = counts.iter().map(|&c| c as f64).sum::<f64>() / n;
        let var: f64 = counts
            .iter()
            .map(|&c| (c as f64 - mean).powi(2))
            .sum::<f64>()
            / (n - 1.0);
        let se = var.sqrt() / n.sqrt();
        let mut sorted = counts.clone();
        sorted.sort_unstable();
        let median = sorted[sorted.len() / 2] as f64; // odd length
        assert!((d.mean - mean).abs() / mean.abs() < 1e-9);
        assert!((d.std_error - se).abs() / se.abs() < 1e-9);
        assert_eq!(d.median, median);
    }

    #[test]
    fn round_trip_preserves_structures() {
        let tmp = TempDir::new().unwrap();
        let dir = tmp.path();
        let acts = write_file(
            dir,
            "a.csv",
            "a,x,1,love\nb,y,2,love\na,z,3,listen\nc,x,9,listen\n",
        );
        let m = DatasetManifest {
            actions: vec![(acts, None)],
            edges: write_file(dir, "e.csv", "a,b\nb,c\n"),
            declared_degrees: Some(write_file(dir, "d.csv", "a,5\nb,2\nc,3\n")),
            ..DatasetManifest::default()
        };
        let (ds, _) = load_dataset(&m).unwrap();
        let out = tmp.path().join("roundtrip");
        write_dataset(&ds, &out, Some("digest123")).unwrap();
        let m2 = DatasetManifest {
            actions: vec![(out.join("actions.csv"), None)],
            edges: out.join("edges.csv"),
            declared_degrees: Some(out.join("degrees.csv")),
            ..DatasetManifest::default()
        };
        let (ds2, _) = load_dataset(&m2).unwrap();
        assert_eq!(ds.log, ds2.log);
        assert_eq!(ds.graph, ds2.graph);
    }
}
