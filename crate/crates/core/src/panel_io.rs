//! Panel definitions, read-count ingestion and lCNR features.
//!
//! A panel is a JSON object mapping gene names to the ordered list of
//! amplicon ids tiling the gene. Counts arrive as a tab-separated file with
//! the header `sample_id amplicon_id test_count ref_count`. The log
//! copy-number ratio of an amplicon is `ln(test + c) - ln(ref + c)`, shifted
//! by the median over every amplicon of the sample.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats;

/// Pseudo-count added to both counts before taking logs.
pub const DEFAULT_PSEUDO_COUNT: f64 = 0.5;

const COUNTS_HEADER: [&str; 4] = ["sample_id", "amplicon_id", "test_count", "ref_count"];
const LCNR_HEADER: [&str; 3] = ["gene", "amplicon_id", "lcnr"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneDef {
    pub name: String,
    pub amplicon_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PanelDef {
    genes: Vec<GeneDef>,
    index: HashMap<String, (usize, usize)>,
}

impl PanelDef {
    pub fn new(genes: Vec<GeneDef>) -> Result<Self> {
        if genes.is_empty() {
            return Err(Error::invalid("panel has no genes"));
        }
        let mut names = HashSet::new();
        let mut index = HashMap::new();
        for (j, g) in genes.iter().enumerate() {
            if !names.insert(g.name.as_str()) {
                return Err(Error::invalid(format!("duplicate gene name `{}`", g.name)));
            }
            if g.amplicon_ids.is_empty() {
                return Err(Error::invalid(format!(
                    "gene `{}` has no amplicons",
                    g.name
                )));
            }
            for (k, a) in g.amplicon_ids.iter().enumerate() {
                if index.insert(a.clone(), (j, k)).is_some() {
                    return Err(Error::invalid(format!(
                        "amplicon id `{a}` appears more than once"
                    )));
                }
            }
        }
        Ok(PanelDef { genes, index })
    }

    /// Panel with `sizes[j]` amplicons named `<gene>_<k>`.
    pub fn synthetic(names: &[String], sizes: &[usize]) -> Result<Self> {
        let genes = names
            .iter()
            .zip(sizes)
            .map(|(n, &s)| GeneDef {
                name: n.clone(),
                amplicon_ids: (1..=s).map(|k| format!("{n}_{k}")).collect(),
            })
            .collect();
        PanelDef::new(genes)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let map: IndexMap<String, Vec<String>> = serde_json::from_str(text)?;
        PanelDef::new(
            map.into_iter()
                .map(|(name, amplicon_ids)| GeneDef { name, amplicon_ids })
                .collect(),
        )
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        PanelDef::from_json_str(&text)
    }

    pub fn to_json_string(&self) -> String {
        let map: IndexMap<&str, &Vec<String>> = self
            .genes
            .iter()
            .map(|g| (g.name.as_str(), &g.amplicon_ids))
            .collect();
        serde_json::to_string_pretty(&map).expect("panel serializes")
    }

    pub fn genes(&self) -> &[GeneDef] {
        &self.genes
    }

    pub fn gene_names(&self) -> Vec<String> {
        self.genes.iter().map(|g| g.name.clone()).collect()
    }

    pub fn gene_sizes(&self) -> Vec<usize> {
        self.genes.iter().map(|g| g.amplicon_ids.len()).collect()
    }

    pub fn n_amplicons(&self) -> usize {
        self.genes.iter().map(|g| g.amplicon_ids.len()).sum()
    }

    /// `(gene index, position within gene)` of an amplicon id.
    pub fn locate(&self, amplicon_id: &str) -> Option<(usize, usize)> {
        self.index.get(amplicon_id).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountsRecord {
    pub sample_id: String,
    pub amplicon_id: String,
    pub test_count: u64,
    pub ref_count: u64,
}

/// All counts of one sample, arranged in panel order.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleCounts {
    pub sample_id: String,
    /// `records[j][k]` is amplicon `k` of gene `j`.
    pub records: Vec<Vec<CountsRecord>>,
}

impl SampleCounts {
    pub fn test_counts(&self) -> Vec<Vec<f64>> {
        self.records
            .iter()
            .map(|g| g.iter().map(|r| r.test_count as f64).collect())
            .collect()
    }

    pub fn ref_counts(&self) -> Vec<Vec<f64>> {
        self.records
            .iter()
            .map(|g| g.iter().map(|r| r.ref_count as f64).collect())
            .collect()
    }
}

/// Distinct ways a counts file can be rejected.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CountsProblem {
    BadHeader,
    MalformedRow,
    UnknownAmplicon,
    DuplicateRecord,
    MissingAmplicon,
}

impl fmt::Display for CountsProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            CountsProblem::BadHeader => "bad header",
            CountsProblem::MalformedRow => "malformed row",
            CountsProblem::UnknownAmplicon => "unknown amplicon id",
            CountsProblem::DuplicateRecord => "duplicate (sample, amplicon) record",
            CountsProblem::MissingAmplicon => "missing amplicon",
        };
        f.write_str(s)
    }
}

fn counts_error(path: &Path, line: usize, problem: CountsProblem, detail: String) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: format!("{problem}: {detail}"),
    }
}

/// Classify a counts-file parse error; `None` for other error kinds.
pub fn counts_problem(err: &Error) -> Option<CountsProblem> {
    let Error::Parse { message, .. } = err else {
        return None;
    };
    [
        CountsProblem::BadHeader,
        CountsProblem::MalformedRow,
        CountsProblem::UnknownAmplicon,
        CountsProblem::DuplicateRecord,
        CountsProblem::MissingAmplicon,
    ]
    .into_iter()
    .find(|p| message.starts_with(&p.to_string()))
}

pub fn load_counts(path: &Path, panel: &PanelDef) -> Result<Vec<SampleCounts>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_counts(file, path, panel)
}

/// Parse a counts TSV from any reader; `path` is used for diagnostics only.
pub fn parse_counts<R: std::io::Read>(
    reader: R,
    path: &Path,
    panel: &PanelDef,
) -> Result<Vec<SampleCounts>> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);

    let header = rdr
        .headers()
        .map_err(|e| counts_error(path, 1, CountsProblem::BadHeader, e.to_string()))?
        .clone();
    let cols: Vec<&str> = header.iter().map(str::trim).collect();
    if cols != COUNTS_HEADER {
        return Err(counts_error(
            path,
            1,
            CountsProblem::BadHeader,
            format!(
                "expected `{}`, found `{}`",
                COUNTS_HEADER.join("\t"),
                cols.join("\t")
            ),
        ));
    }

    let mut order: Vec<String> = Vec::new();
    let mut per_sample: HashMap<String, (usize, Vec<Vec<Option<CountsRecord>>>)> = HashMap::new();
    let sizes = panel.gene_sizes();

    for row in rdr.records() {
        let row = row.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            counts_error(path, line, CountsProblem::MalformedRow, e.to_string())
        })?;
        let line = row.position().map(|p| p.line() as usize).unwrap_or(0);
        if row.iter().all(|f| f.trim().is_empty()) {
            continue;
        }
        if row.len() != 4 {
            return Err(counts_error(
                path,
                line,
                CountsProblem::MalformedRow,
                format!("expected 4 fields, found {}", row.len()),
            ));
        }
        let field = |i: usize| row.get(i).unwrap_or("").trim();
        let parse_count = |i: usize| -> Result<u64> {
            field(i).parse::<u64>().map_err(|_| {
                counts_error(
                    path,
                    line,
                    CountsProblem::MalformedRow,
                    format!("`{}` is not a non-negative integer count", field(i)),
                )
            })
        };
        let sample_id = field(0).to_string();
        let amplicon_id = field(1).to_string();
        if sample_id.is_empty() {
            return Err(counts_error(
                path,
                line,
                CountsProblem::MalformedRow,
                "empty sample_id".into(),
            ));
        }
        let test_count = parse_count(2)?;
        let ref_count = parse_count(3)?;
        let Some((j, k)) = panel.locate(&amplicon_id) else {
            return Err(counts_error(
                path,
                line,
                CountsProblem::UnknownAmplicon,
                format!("`{amplicon_id}` is not on the panel"),
            ));
        };
        let entry = per_sample.entry(sample_id.clone()).or_insert_with(|| {
            order.push(sample_id.clone());
            (line, sizes.iter().map(|&n| vec![None; n]).collect())
        });
        let slot = &mut entry.1[j][k];
        if slot.is_some() {
            return Err(counts_error(
                path,
                line,
                CountsProblem::DuplicateRecord,
                format!("sample `{sample_id}` amplicon `{amplicon_id}` seen before"),
            ));
        }
        *slot = Some(CountsRecord {
            sample_id,
            amplicon_id,
            test_count,
            ref_count,
        });
    }

    let mut out = Vec::with_capacity(order.len());
    for sample_id in order {
        let (first_line, slots) = per_sample.remove(&sample_id).expect("recorded sample");
        let mut records = Vec::with_capacity(slots.len());
        for (j, gene) in slots.into_iter().enumerate() {
            let mut recs = Vec::with_capacity(gene.len());
            for (k, slot) in gene.into_iter().enumerate() {
                match slot {
                    Some(r) => recs.push(r),
                    None => return Err(counts_error(
                        path,
                        first_line,
                        CountsProblem::MissingAmplicon,
                        format!(
                            "sample `{sample_id}` (first row at this line) has no record for `{}`",
                            panel.genes()[j].amplicon_ids[k]
                        ),
                    )),
                }
            }
            records.push(recs);
        }
        out.push(SampleCounts { sample_id, records });
    }
    if out.is_empty() {
        return Err(counts_error(
            path,
            1,
            CountsProblem::MalformedRow,
            "no data rows".into(),
        ));
    }
    Ok(out)
}

/// `ln(test + c) - ln(reference + c)`.
///
/// `c` may be zero only when both counts are positive. Reference counts are
/// real-valued because averaged references are allowed.
pub fn compute_raw_lcnr(test_count: f64, ref_count: f64, c: f64) -> Result<f64> {
    if !(test_count >= 0.0) || !(ref_count >= 0.0) {
        return Err(Error::invalid(format!(
            "counts must be non-negative (test {test_count}, ref {ref_count})"
        )));
    }
    if !(c >= 0.0) || !c.is_finite() {
        return Err(Error::invalid(format!(
            "pseudo-count must be a non-negative finite number, got {c}"
        )));
    }
    if c == 0.0 && (test_count == 0.0 || ref_count == 0.0) {
        return Err(Error::invalid(
            "pseudo-count must be positive when a count is zero",
        ));
    }
    let v = (test_count + c).ln() - (ref_count + c).ln();
    if !v.is_finite() {
        return Err(Error::Numerical(format!(
            "non-finite lCNR from counts {test_count}/{ref_count}"
        )));
    }
    Ok(v)
}

/// Per-amplicon lCNR values of one sample, grouped by gene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LcnrMatrix {
    pub sample_id: String,
    pub genes: Vec<String>,
    pub amplicon_ids: Vec<Vec<String>>,
    pub values: Vec<Vec<f64>>,
    pub pseudo_count: f64,
}

impl LcnrMatrix {
    pub fn new(
        sample_id: impl Into<String>,
        genes: Vec<String>,
        amplicon_ids: Vec<Vec<String>>,
        values: Vec<Vec<f64>>,
        pseudo_count: f64,
    ) -> Result<Self> {
        if genes.len() != values.len() || genes.len() != amplicon_ids.len() {
            return Err(Error::invalid(
                "gene, amplicon and value lists differ in length",
            ));
        }
        for (j, (ids, vals)) in amplicon_ids.iter().zip(&values).enumerate() {
            if ids.len() != vals.len() {
                return Err(Error::invalid(format!(
                    "gene `{}`: amplicon/value count mismatch",
                    genes[j]
                )));
            }
            if vals.is_empty() {
                return Err(Error::invalid(format!(
                    "gene `{}` has no amplicons",
                    genes[j]
                )));
            }
            if let Some(v) = vals.iter().find(|v| !v.is_finite()) {
                return Err(Error::invalid(format!(
                    "gene `{}` has non-finite lCNR {v}",
                    genes[j]
                )));
            }
        }
        Ok(LcnrMatrix {
            sample_id: sample_id.into(),
            genes,
            amplicon_ids,
            values,
            pseudo_count,
        })
    }

    /// Matrix laid out on `panel` with the given values.
    pub fn on_panel(
        sample_id: impl Into<String>,
        panel: &PanelDef,
        values: Vec<Vec<f64>>,
        pseudo_count: f64,
    ) -> Result<Self> {
        LcnrMatrix::new(
            sample_id,
            panel.gene_names(),
            panel
                .genes()
                .iter()
                .map(|g| g.amplicon_ids.clone())
                .collect(),
            values,
            pseudo_count,
        )
    }

    pub fn n_genes(&self) -> usize {
        self.values.len()
    }

    pub fn gene_sizes(&self) -> Vec<usize> {
        self.values.iter().map(Vec::len).collect()
    }

    pub fn flat_values(&self) -> Vec<f64> {
        self.values.iter().flatten().copied().collect()
    }

    pub fn map_values<F: Fn(f64) -> f64>(&self, f: F) -> LcnrMatrix {
        LcnrMatrix {
            values: self
                .values
                .iter()
                .map(|g| g.iter().map(|&v| f(v)).collect())
                .collect(),
            ..self.clone()
        }
    }
}

/// Subtract the global median over all amplicons.
pub fn median_normalize(raw: &LcnrMatrix) -> Result<LcnrMatrix> {
    let flat = raw.flat_values();
    if flat.is_empty() {
        return Err(Error::invalid(format!(
            "sample `{}` has no amplicons",
            raw.sample_id
        )));
    }
    let med = stats::median(&flat);
    Ok(raw.map_values(|v| v - med))
}

/// Average reference counts per amplicon across the named reference samples.
pub fn averaged_reference(
    samples: &[SampleCounts],
    reference_ids: &[String],
) -> Result<Vec<Vec<f64>>> {
    if reference_ids.is_empty() {
        return Err(Error::Config(
            "at least one reference sample is required".into(),
        ));
    }
    let mut acc: Option<Vec<Vec<f64>>> = None;
    for id in reference_ids {
        let s = samples
            .iter()
            .find(|s| &s.sample_id == id)
            .ok_or_else(|| Error::Config(format!("reference sample `{id}` not found in counts")))?;
        let t = s.test_counts();
        match acc.as_mut() {
            None => acc = Some(t),
            Some(a) => {
                for (ga, gt) in a.iter_mut().zip(&t) {
                    for (x, y) in ga.iter_mut().zip(gt) {
                        *x += y;
                    }
                }
            }
        }
    }
    let n = reference_ids.len() as f64;
    Ok(acc
        .expect("non-empty reference list")
        .into_iter()
        .map(|g| g.into_iter().map(|v| v / n).collect())
        .collect())
}

/// Normalized lCNR matrices for every non-reference sample.
///
/// With reference samples the reference counts are the per-amplicon mean of
/// their test counts; without any, each record's own `ref_count` is used.
/// Reference samples are excluded from the output.
pub fn build_lcnr(
    panel: &PanelDef,
    samples: &[SampleCounts],
    reference_ids: &[String],
    pseudo_count: f64,
) -> Result<Vec<LcnrMatrix>> {
    let reference = if reference_ids.is_empty() {
        None
    } else {
        Some(averaged_reference(samples, reference_ids)?)
    };
    let mut out = Vec::new();
    for s in samples
        .iter()
        .filter(|s| !reference_ids.contains(&s.sample_id))
    {
        let test = s.test_counts();
        let refc = reference.clone().unwrap_or_else(|| s.ref_counts());
        let mut values = Vec::with_capacity(test.len());
        for (gt, gr) in test.iter().zip(&refc) {
            values.push(
                gt.iter()
                    .zip(gr)
                    .map(|(&t, &r)| compute_raw_lcnr(t, r, pseudo_count))
                    .collect::<Result<Vec<f64>>>()?,
            );
        }
        let raw = LcnrMatrix::on_panel(s.sample_id.clone(), panel, values, pseudo_count)?;
        out.push(median_normalize(&raw)?);
    }
    Ok(out)
}

pub fn write_counts_tsv(path: &Path, records: &[CountsRecord]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "{}", COUNTS_HEADER.join("\t")).map_err(io)?;
    for r in records {
        writeln!(
            w,
            "{}\t{}\t{}\t{}",
            r.sample_id, r.amplicon_id, r.test_count, r.ref_count
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn write_lcnr_tsv(path: &Path, m: &LcnrMatrix) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "{}", LCNR_HEADER.join("\t")).map_err(io)?;
    for ((gene, ids), vals) in m.genes.iter().zip(&m.amplicon_ids).zip(&m.values) {
        for (id, v) in ids.iter().zip(vals) {
            writeln!(w, "{gene}\t{id}\t{v:?}").map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

/// Read an lCNR TSV written by [`write_lcnr_tsv`]. Genes appear in order of
/// first occurrence.
pub fn read_lcnr_tsv(path: &Path, sample_id: &str, pseudo_count: f64) -> Result<LcnrMatrix> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate();
    let header_ok = lines
        .next()
        .map(|(_, h)| h.split('\t').map(str::trim).eq(LCNR_HEADER))
        .unwrap_or(false);
    if !header_ok {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: format!("expected header `{}`", LCNR_HEADER.join("\t")),
        });
    }
    let mut genes: IndexMap<String, (Vec<String>, Vec<f64>)> = IndexMap::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split('\t').collect();
        let bad = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        if parts.len() != 3 {
            return Err(bad(format!("expected 3 fields, found {}", parts.len())));
        }
        let v: f64 = parts[2]
            .trim()
            .parse()
            .map_err(|_| bad(format!("`{}` is not a number", parts[2])))?;
        let entry = genes.entry(parts[0].trim().to_string()).or_default();
        entry.0.push(parts[1].trim().to_string());
        entry.1.push(v);
    }
    let (names, rest): (Vec<String>, Vec<(Vec<String>, Vec<f64>)>) = genes.into_iter().unzip();
    let (ids, values) = rest.into_iter().unzip();
    LcnrMatrix::new(sample_id, names, ids, values, pseudo_count)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn one_gene(values: Vec<f64>) -> LcnrMatrix {
        let ids = (0..values.len()).map(|i| format!("a{i}")).collect();
        LcnrMatrix::new("s", vec!["G".into()], vec![ids], vec![values], 0.5).unwrap()
    }

    #[test]
    fn raw_lcnr_examples() {
        assert_eq!(compute_raw_lcnr(100.0, 100.0, 0.5).unwrap(), 0.0);
        assert!(
            (compute_raw_lcnr(200.0, 100.0, 0.0).unwrap() - std::f64::consts::LN_2).abs() < 1e-15
        );
        assert_eq!(compute_raw_lcnr(0.0, 0.0, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn raw_lcnr_rejects_bad_pseudo_count() {
        assert!(compute_raw_lcnr(0.0, 5.0, 0.0).is_err());
        assert!(compute_raw_lcnr(5.0, 0.0, -1.0).is_err());
        assert!(compute_raw_lcnr(-1.0, 5.0, 0.5).is_err());
        assert!(compute_raw_lcnr(5.0, 5.0, 0.0).is_ok());
    }

    #[test]
    fn median_normalize_examples() {
        let out = median_normalize(&one_gene(vec![0.1, 0.3, 0.5])).unwrap();
        let expect = [-0.2, 0.0, 0.2];
        for (a, b) in out.values[0].iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
        let out = median_normalize(&one_gene(vec![0.7; 4])).unwrap();
        assert!(out.values[0].iter().all(|&v| v == 0.0));
        let out = median_normalize(&one_gene(vec![0.0, 1.0])).unwrap();
        assert_eq!(out.values[0], vec![-0.5, 0.5]);
    }

    #[test]
    fn empty_matrix_rejected() {
        assert!(LcnrMatrix::new("s", vec!["G".into()], vec![vec![]], vec![vec![]], 0.5).is_err());
    }

    #[test]
    fn panel_invariants() {
        let dup_gene = vec![
            GeneDef {
                name: "A".into(),
                amplicon_ids: vec!["x".into()],
            },
            GeneDef {
                name: "A".into(),
                amplicon_ids: vec!["y".into()],
            },
        ];
        assert!(PanelDef::new(dup_gene).is_err());
        let dup_amp = vec![
            GeneDef {
                name: "A".into(),
                amplicon_ids: vec!["x".into()],
            },
            GeneDef {
                name: "B".into(),
                amplicon_ids: vec!["x".into()],
            },
        ];
        assert!(PanelDef::new(dup_amp).is_err());
        let empty = vec![GeneDef {
            name: "A".into(),
            amplicon_ids: vec![],
        }];
        assert!(PanelDef::new(empty).is_err());
    }

    #[test]
    fn panel_json_preserves_order() {
        let p = PanelDef::from_json_str(
            r#"{"KIT": ["k1","k2"], "ERBB2": ["e1"], "MET": ["m1","m2","m3"]}"#,
        )
        .unwrap();
        assert_eq!(p.gene_names(), vec!["KIT", "ERBB2", "MET"]);
        assert_eq!(p.n_amplicons(), 6);
        assert_eq!(p.locate("m2"), Some((2, 1)));
        let back = PanelDef::from_json_str(&p.to_json_string()).unwrap();
        assert_eq!(back, p);
    }

    proptest! {
        #[test]
        fn normalization_idempotent_and_shift_invariant(
            vals in prop::collection::vec(-5.0f64..5.0, 1..40),
            shift in -10.0f64..10.0,
        ) {
            let m = one_gene(vals);
            let once = median_normalize(&m).unwrap();
            let twice = median_normalize(&once).unwrap();
            let shifted = median_normalize(&m.map_values(|v| v + shift)).unwrap();
            prop_assert!(stats::median(&once.flat_values()).abs() < 1e-12);
            for ((a, b), c) in once.values[0].iter().zip(&twice.values[0]).zip(&shifted.values[0]) {
                prop_assert!((a - b).abs() < 1e-12);
                prop_assert!((a - c).abs() < 1e-12);
            }
        }

        #[test]
        fn raw_lcnr_antisymmetric(s in 0u64..10_000, r in 0u64..10_000, c in 0.01f64..5.0) {
            let a = compute_raw_lcnr(s as f64, r as f64, c).unwrap();
            let b = compute_raw_lcnr(r as f64, s as f64, c).unwrap();
            prop_assert!((a + b).abs() < 1e-12);
        }
    }
}
