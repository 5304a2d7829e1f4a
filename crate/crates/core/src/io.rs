//! File formats: the binary embedding file, its CSV import/export, label
//! files, the JSON ranking report, and training checkpoints.
//!
//! Binary embedding file, all integers little-endian:
//!
//! ```text
//! "ICSR" | version u16 | flags u16 | N u64 | D u32 | K u32
//! N×D f64 features (row-major) | N u32 assignments | [N u32 truth labels]
//! ```
//!
//! Flag bit 0 marks the trailing truth block. Sample ids are implicit
//! (`0..N`).

use std::path::Path;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::RankingConfig;
use crate::dataset::EmbeddingSet;
use crate::error::{Error, Result};
use crate::ranking::RankedGroups;
use crate::trainer::{ClassifierModel, TrainState};

pub const EMBEDDING_MAGIC: &[u8; 4] = b"ICSR";
pub const EMBEDDING_VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 2 + 8 + 4 + 4;
const FLAG_TRUTH: u16 = 1;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"ICSK";
pub const CHECKPOINT_VERSION: u16 = 1;

pub const REPORT_SCHEMA: &str = "icsr.ranking.v1";

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingFile {
    pub set: EmbeddingSet,
    pub truth: Option<Vec<usize>>,
}

/// Sequential little-endian reader that names the field it fails on.
struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Cursor { buf, pos: 0 }
    }

    fn take(&mut self, n: usize, field: &'static str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| {
            Error::format(field, format!("truncated at byte {} ({} bytes total)", self.pos, self.buf.len()))
        })?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u16(&mut self, field: &'static str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, field)?.try_into().unwrap()))
    }

    fn u32(&mut self, field: &'static str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, field)?.try_into().unwrap()))
    }

    fn u64(&mut self, field: &'static str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, field)?.try_into().unwrap()))
    }

    fn u128(&mut self, field: &'static str) -> Result<u128> {
        Ok(u128::from_le_bytes(self.take(16, field)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize, field: &'static str) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| Error::format(field, "size overflow"))?, field)?;
        Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }

    fn u32s(&mut self, n: usize, field: &'static str) -> Result<Vec<u32>> {
        let bytes = self.take(n.checked_mul(4).ok_or_else(|| Error::format(field, "size overflow"))?, field)?;
        Ok(bytes.chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().unwrap())).collect())
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::format(
                "length",
                format!("{} trailing bytes after the declared payload", self.buf.len() - self.pos),
            ));
        }
        Ok(())
    }
}

fn to_u32(v: usize, field: &'static str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::format(field, format!("{v} does not fit in u32")))
}

pub fn encode_embeddings(file: &EmbeddingFile) -> Result<Vec<u8>> {
    let set = &file.set;
    let n = set.len();
    let mut out = Vec::with_capacity(HEADER_LEN + n * (set.dim * 8 + 8));
    out.extend_from_slice(EMBEDDING_MAGIC);
    out.extend_from_slice(&EMBEDDING_VERSION.to_le_bytes());
    let flags = if file.truth.is_some() { FLAG_TRUTH } else { 0 };
    out.extend_from_slice(&flags.to_le_bytes());
    out.extend_from_slice(&(n as u64).to_le_bytes());
    out.extend_from_slice(&to_u32(set.dim, "D")?.to_le_bytes());
    out.extend_from_slice(&to_u32(set.num_clusters, "K")?.to_le_bytes());
    for v in &set.features {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for &a in &set.assignments {
        out.extend_from_slice(&to_u32(a, "assignments")?.to_le_bytes());
    }
    if let Some(truth) = &file.truth {
        if truth.len() != n {
            return Err(Error::format("truth", format!("{} labels for {n} samples", truth.len())));
        }
        for &t in truth {
            out.extend_from_slice(&to_u32(t, "truth")?.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_embeddings(buf: &[u8]) -> Result<EmbeddingFile> {
    let mut c = Cursor::new(buf);
    if c.take(4, "magic")? != EMBEDDING_MAGIC {
        return Err(Error::format("magic", "expected \"ICSR\""));
    }
    let version = c.u16("version")?;
    if version != EMBEDDING_VERSION {
        return Err(Error::format(
            "version",
            format!("unsupported version {version}, expected {EMBEDDING_VERSION}"),
        ));
    }
    let flags = c.u16("flags")?;
    if flags & !FLAG_TRUTH != 0 {
        return Err(Error::format("flags", format!("unknown flag bits {flags:#06x}")));
    }
    let n = usize::try_from(c.u64("N")?).map_err(|_| Error::format("N", "too large"))?;
    let dim = c.u32("D")? as usize;
    let k = c.u32("K")? as usize;
    if dim == 0 {
        return Err(Error::format("D", "must be >= 1"));
    }

    let per_row = dim
        .checked_mul(8)
        .and_then(|b| b.checked_add(if flags & FLAG_TRUTH != 0 { 8 } else { 4 }))
        .ok_or_else(|| Error::format("D", "size overflow"))?;
    let expected = n
        .checked_mul(per_row)
        .and_then(|b| b.checked_add(HEADER_LEN))
        .ok_or_else(|| Error::format("N", "size overflow"))?;
    if expected != buf.len() {
        return Err(Error::format(
            "length",
            format!("header declares {expected} bytes (N = {n}, D = {dim}), file has {}", buf.len()),
        ));
    }

    let features = c.f64s(n * dim, "features")?;
    if let Some(i) = features.iter().position(|v| !v.is_finite()) {
        return Err(Error::format("features", format!("non-finite value at ({}, {})", i / dim, i % dim)));
    }
    let assignments: Vec<usize> = c.u32s(n, "assignments")?.into_iter().map(|a| a as usize).collect();
    if let Some((i, a)) = assignments.iter().enumerate().find(|(_, &a)| a >= k) {
        return Err(Error::format("assignments", format!("value {a} at row {i} is >= K = {k}")));
    }
    let truth = if flags & FLAG_TRUTH != 0 {
        Some(c.u32s(n, "truth")?.into_iter().map(|t| t as usize).collect())
    } else {
        None
    };
    c.finish()?;

    let set = EmbeddingSet {
        features,
        dim,
        assignments,
        num_clusters: k,
        sample_ids: (0..n as u64).collect(),
    };
    if let Some(v) = crate::dataset::validate(&set).into_iter().next() {
        return Err(Error::format("assignments", v.to_string()));
    }
    Ok(EmbeddingFile { set, truth })
}

/// CSV with header `id,dim0,...,dim{D-1},cluster[,truth]`.
pub fn write_embeddings_csv(file: &EmbeddingFile, out: impl std::io::Write) -> Result<()> {
    let set = &file.set;
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["id".to_string()];
    header.extend((0..set.dim).map(|d| format!("dim{d}")));
    header.push("cluster".into());
    if file.truth.is_some() {
        header.push("truth".into());
    }
    w.write_record(&header).map_err(csv_err)?;
    for i in 0..set.len() {
        let mut rec = vec![set.sample_ids[i].to_string()];
        // `{:?}` keeps the shortest round-tripping representation.
        rec.extend(set.row(i).iter().map(|v| format!("{v:?}")));
        rec.push(set.assignments[i].to_string());
        if let Some(t) = &file.truth {
            rec.push(t[i].to_string());
        }
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    Error::format("csv", e.to_string())
}

pub fn read_embeddings_csv(input: impl std::io::Read) -> Result<EmbeddingFile> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers().map_err(csv_err)?.clone();
    let cols: Vec<&str> = header.iter().map(str::trim).collect();
    if cols.first() != Some(&"id") {
        return Err(Error::format("header", "first column must be `id`"));
    }
    let has_truth = cols.last() == Some(&"truth");
    let cluster_col = cols.len() - if has_truth { 2 } else { 1 };
    if cols.get(cluster_col) != Some(&"cluster") || cluster_col < 2 {
        return Err(Error::format("header", "expected id,dim0..dimD-1,cluster[,truth]"));
    }
    let dim = cluster_col - 1;
    for (d, name) in cols[1..cluster_col].iter().enumerate() {
        if *name != format!("dim{d}") {
            return Err(Error::format("header", format!("column {} should be dim{d}, found `{name}`", d + 1)));
        }
    }

    let mut ids = Vec::new();
    let mut features = Vec::new();
    let mut assignments = Vec::new();
    let mut truth = Vec::new();
    for (row, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        if rec.len() != cols.len() {
            return Err(Error::format("row", format!("row {row} has {} fields, expected {}", rec.len(), cols.len())));
        }
        let parse_u = |i: usize, field: &'static str| -> Result<u64> {
            rec[i].trim().parse().map_err(|_| Error::format(field, format!("row {row}: `{}` is not an integer", &rec[i])))
        };
        ids.push(parse_u(0, "id")?);
        for i in 1..=dim {
            let v: f64 = rec[i]
                .trim()
                .parse()
                .map_err(|_| Error::format("features", format!("row {row}: `{}` is not a number", &rec[i])))?;
            if !v.is_finite() {
                return Err(Error::format("features", format!("non-finite value at ({row}, {})", i - 1)));
            }
            features.push(v);
        }
        assignments.push(parse_u(cluster_col, "cluster")? as usize);
        if has_truth {
            truth.push(parse_u(cluster_col + 1, "truth")? as usize);
        }
    }
    let k = assignments.iter().max().map_or(0, |m| m + 1);
    let set = EmbeddingSet {
        features,
        dim,
        assignments,
        num_clusters: k,
        sample_ids: ids,
    };
    if let Some(v) = crate::dataset::validate(&set).into_iter().next() {
        return Err(Error::format("cluster", v.to_string()));
    }
    Ok(EmbeddingFile {
        set,
        truth: has_truth.then_some(truth),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Binary,
    Csv,
}

impl Format {
    /// `.csv` paths are CSV, everything else binary.
    pub fn from_path(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => Format::Csv,
            _ => Format::Binary,
        }
    }
}

pub fn read_embeddings(path: &Path, format: Format) -> Result<EmbeddingFile> {
    match format {
        Format::Binary => decode_embeddings(&std::fs::read(path)?),
        Format::Csv => read_embeddings_csv(std::fs::File::open(path)?),
    }
}

pub fn write_embeddings(path: &Path, file: &EmbeddingFile, format: Format) -> Result<()> {
    match format {
        Format::Binary => std::fs::write(path, encode_embeddings(file)?)?,
        Format::Csv => write_embeddings_csv(file, std::io::BufWriter::new(std::fs::File::create(path)?))?,
    }
    Ok(())
}

/// One non-negative integer label per line; blank lines and `#` comments
/// are skipped.
pub fn parse_labels(text: &str) -> Result<Vec<usize>> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
        .map(|(i, l)| {
            l.parse()
                .map_err(|_| Error::format("labels", format!("line {}: `{l}` is not a label", i + 1)))
        })
        .collect()
}

pub fn format_labels(labels: &[usize]) -> String {
    let mut s = String::with_capacity(labels.len() * 3);
    for l in labels {
        s.push_str(&l.to_string());
        s.push('\n');
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    pub cluster_id: usize,
    pub size: usize,
    pub k_values: Vec<usize>,
    pub groups: Vec<Vec<u64>>,
    pub group_sizes: Vec<usize>,
    pub residual: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingReport {
    pub schema: String,
    pub tool_version: String,
    pub epoch: usize,
    pub config: RankingConfig,
    /// `p_j` after the epoch-block increments.
    pub effective_p: Vec<f64>,
    pub clusters: Vec<ClusterReport>,
}

impl RankingReport {
    pub fn new(config: &RankingConfig, epoch: usize, ranked: &[RankedGroups]) -> Result<Self> {
        let clusters = ranked
            .iter()
            .map(|g| {
                let size = g.len();
                let k_values = if size >= 2 {
                    crate::config::resolve_k_sweep(config, size)?
                } else {
                    Vec::new()
                };
                Ok(ClusterReport {
                    cluster_id: g.cluster_id,
                    size,
                    k_values,
                    groups: g.groups.clone(),
                    group_sizes: g.group_sizes(),
                    residual: g.residual.clone(),
                })
            })
            .collect::<Result<_>>()?;
        Ok(RankingReport {
            schema: REPORT_SCHEMA.into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            epoch,
            config: config.clone(),
            effective_p: config.p_fractions_at(epoch),
            clusters,
        })
    }

    pub fn ranked_groups(&self) -> Vec<RankedGroups> {
        self.clusters
            .iter()
            .map(|c| RankedGroups {
                cluster_id: c.cluster_id,
                groups: c.groups.clone(),
                residual: c.residual.clone(),
            })
            .collect()
    }
}

/// Checkpoint layout, little-endian:
///
/// ```text
/// "ICSK" | version u16 | epoch u64 | D u32 | K u32 | hidden u32 (0 = none)
/// P u64 | P f64 params | P f64 momentum | N u64 | N u32 assignments
/// 32-byte generator seed | stream u64 | word position u128
/// ```
pub fn encode_checkpoint(state: &TrainState) -> Result<Vec<u8>> {
    let m = &state.model;
    if state.velocity.len() != m.params.len() {
        return Err(Error::format("velocity", "length differs from the parameter count"));
    }
    let mut out = Vec::with_capacity(96 + m.params.len() * 16 + state.assignments.len() * 4);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(state.epoch as u64).to_le_bytes());
    out.extend_from_slice(&to_u32(m.dim, "D")?.to_le_bytes());
    out.extend_from_slice(&to_u32(m.classes, "K")?.to_le_bytes());
    out.extend_from_slice(&to_u32(m.hidden.unwrap_or(0), "hidden")?.to_le_bytes());
    out.extend_from_slice(&(m.params.len() as u64).to_le_bytes());
    for p in m.params.iter().chain(&state.velocity) {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out.extend_from_slice(&(state.assignments.len() as u64).to_le_bytes());
    for &a in &state.assignments {
        out.extend_from_slice(&to_u32(a, "assignments")?.to_le_bytes());
    }
    out.extend_from_slice(&state.rng.get_seed());
    out.extend_from_slice(&state.rng.get_stream().to_le_bytes());
    out.extend_from_slice(&state.rng.get_word_pos().to_le_bytes());
    Ok(out)
}

pub fn decode_checkpoint(buf: &[u8]) -> Result<TrainState> {
    use rand::SeedableRng;

    let mut c = Cursor::new(buf);
    if c.take(4, "magic")? != CHECKPOINT_MAGIC {
        return Err(Error::format("magic", "expected \"ICSK\""));
    }
    let version = c.u16("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::format("version", format!("unsupported checkpoint version {version}")));
    }
    let epoch = usize::try_from(c.u64("epoch")?).map_err(|_| Error::format("epoch", "too large"))?;
    let dim = c.u32("D")? as usize;
    let classes = c.u32("K")? as usize;
    let hidden = match c.u32("hidden")? {
        0 => None,
        h => Some(h as usize),
    };
    let count = c.u64("params")? as usize;
    if count != ClassifierModel::param_count(dim, classes, hidden) {
        return Err(Error::format("params", format!("{count} parameters do not match the declared shape")));
    }
    let params = c.f64s(count, "params")?;
    let velocity = c.f64s(count, "velocity")?;
    let n = c.u64("N")? as usize;
    let assignments: Vec<usize> = c.u32s(n, "assignments")?.into_iter().map(|a| a as usize).collect();
    if assignments.iter().any(|&a| a >= classes) {
        return Err(Error::format("assignments", format!("label >= K = {classes}")));
    }
    let seed: [u8; 32] = c.take(32, "rng")?.try_into().unwrap();
    let stream = c.u64("rng")?;
    let word_pos = c.u128("rng")?;
    c.finish()?;

    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_stream(stream);
    rng.set_word_pos(word_pos);
    Ok(TrainState {
        epoch,
        model: ClassifierModel {
            dim,
            classes,
            hidden,
            params,
        },
        velocity,
        assignments,
        rng,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate, BenchmarkSpec};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn sample_file(truth: bool) -> EmbeddingFile {
        let (set, t) = generate(&BenchmarkSpec {
            num_classes: 3,
            per_cluster: 10,
            dim: 4,
            ..BenchmarkSpec::standard(1)
        })
        .unwrap();
        EmbeddingFile {
            set,
            truth: truth.then_some(t),
        }
    }

    #[test]
    fn binary_layout() {
        let f = sample_file(true);
        let bytes = encode_embeddings(&f).unwrap();
        assert_eq!(&bytes[..4], b"ICSR");
        assert_eq!(bytes.len(), 24 + 30 * 4 * 8 + 30 * 4 * 2);
        assert_eq!(decode_embeddings(&bytes).unwrap(), f);
        let plain = sample_file(false);
        assert_eq!(encode_embeddings(&plain).unwrap().len(), 24 + 30 * 4 * 8 + 30 * 4);
    }

    fn field_of(err: Error) -> &'static str {
        match err {
            Error::Format { field, .. } => field,
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn corrupt_headers_name_the_field() {
        let good = encode_embeddings(&sample_file(true)).unwrap();
        let mut bad = good.clone();
        bad[0] = b'X';
        assert_eq!(field_of(decode_embeddings(&bad).unwrap_err()), "magic");
        let mut bad = good.clone();
        bad[4] = 9;
        assert_eq!(field_of(decode_embeddings(&bad).unwrap_err()), "version");
        let mut bad = good.clone();
        bad[6] = 0x80;
        assert_eq!(field_of(decode_embeddings(&bad).unwrap_err()), "flags");
        let mut bad = good.clone();
        bad[8] = 200;
        assert_eq!(field_of(decode_embeddings(&bad).unwrap_err()), "length");
        let mut bad = good.clone();
        bad[20..24].copy_from_slice(&1u32.to_le_bytes());
        assert_eq!(field_of(decode_embeddings(&bad).unwrap_err()), "assignments");
        assert_eq!(field_of(decode_embeddings(&good[..10]).unwrap_err()), "N");
        let mut bad = good.clone();
        bad.push(0);
        assert_eq!(field_of(decode_embeddings(&bad).unwrap_err()), "length");
        let mut bad = good;
        bad[24..32].copy_from_slice(&f64::NAN.to_le_bytes());
        assert_eq!(field_of(decode_embeddings(&bad).unwrap_err()), "features");
    }

    #[test]
    fn csv_round_trip() {
        let f = sample_file(true);
        let mut buf = Vec::new();
        write_embeddings_csv(&f, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("id,dim0,dim1,dim2,dim3,cluster,truth\n"));
        assert_eq!(read_embeddings_csv(&buf[..]).unwrap(), f);
    }

    #[test]
    fn csv_rejects_bad_header_and_values() {
        assert!(read_embeddings_csv("x,dim0,cluster\n1,2,0\n".as_bytes()).is_err());
        assert!(read_embeddings_csv("id,dim0,cluster\n1,abc,0\n".as_bytes()).is_err());
        let ok = read_embeddings_csv("id,dim0,cluster\n5,0.5,0\n7,1.5,1\n".as_bytes()).unwrap();
        assert_eq!(ok.set.sample_ids, vec![5, 7]);
        assert_eq!(ok.set.num_clusters, 2);
        assert!(ok.truth.is_none());
    }

    #[test]
    fn labels_parse() {
        assert_eq!(parse_labels("1\n# c\n\n2\n0\n").unwrap(), vec![1, 2, 0]);
        assert!(parse_labels("1\n-2\n").is_err());
        assert_eq!(parse_labels(&format_labels(&[3, 1, 4])).unwrap(), vec![3, 1, 4]);
    }

    #[test]
    fn checkpoint_round_trip_restores_rng_stream() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let model = ClassifierModel::init(4, 3, Some(5), &mut rng);
        let _: f64 = rng.random();
        let state = TrainState {
            epoch: 17,
            velocity: (0..model.params.len()).map(|i| i as f64 * 0.5).collect(),
            model,
            assignments: vec![0, 2, 1, 1],
            rng: rng.clone(),
        };
        let bytes = encode_checkpoint(&state).unwrap();
        let mut back = decode_checkpoint(&bytes).unwrap();
        assert_eq!(back, state);
        let mut orig = rng;
        assert_eq!(back.rng.random::<u64>(), orig.random::<u64>());

        let mut bad = bytes.clone();
        bad[..4].copy_from_slice(b"ICSR");
        assert!(matches!(decode_checkpoint(&bad), Err(Error::Format { field: "magic", .. })));
        assert!(decode_checkpoint(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn report_round_trips_through_json() {
        let f = sample_file(false);
        let cfg = RankingConfig::default();
        let ranked = crate::ranking::rank_all(&f.set, &cfg, 50).unwrap();
        let report = RankingReport::new(&cfg, 50, &ranked).unwrap();
        let json = serde_json::to_string(&report).unwrap();
        let back: RankingReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, report);
        assert_eq!(back.ranked_groups(), ranked);
        assert_eq!(back.schema, REPORT_SCHEMA);
        assert!((back.effective_p[0] - 0.16).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn binary_encoding_round_trips(
            n in 1usize..20,
            dim in 1usize..5,
            seed in 0u64..1000,
            with_truth in any::<bool>(),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let features: Vec<f64> = (0..n * dim).map(|_| rng.random_range(-1e6..1e6)).collect();
            let set = EmbeddingSet::new(features, dim, (0..n).map(|i| i % 2.min(n)).collect(), 2.min(n)).unwrap();
            let truth = with_truth.then(|| (0..n).map(|_| rng.random_range(0..9)).collect());
            let file = EmbeddingFile { set, truth };
            let bytes = encode_embeddings(&file).unwrap();
            let back = decode_embeddings(&bytes).unwrap();
            prop_assert_eq!(&back, &file);
            prop_assert_eq!(encode_embeddings(&back).unwrap(), bytes);
        }
    }
}
