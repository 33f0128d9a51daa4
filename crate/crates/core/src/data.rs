//! Study-level effect estimates and the dataset format shared by every model.
//!
//! A dataset is a CSV file with the header
//!
//! ```text
//! study,y_pos,se_pos,y_neg,se_neg,y_mix,se_mix,prop_alpha,prop_beta
//! ```
//!
//! with one study per row. Empty cells and the literal `NA` both mean
//! "not reported". Lines starting with `#` are comments.

use std::collections::HashSet;
use std::fmt;

use thiserror::Error;

pub const HEADER: [&str; 9] = [
    "study", "y_pos", "se_pos", "y_neg", "se_neg", "y_mix", "se_mix", "prop_alpha", "prop_beta",
];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DataError {
    #[error("bad header: expected `{}`, found `{found}`", HEADER.join(","))]
    Header { found: String },
    #[error("line {line}: expected {expected} fields, found {found}")]
    FieldCount { line: u64, expected: usize, found: usize },
    #[error("line {line}, column `{column}`: cannot parse `{value}` as a number")]
    Number { line: u64, column: &'static str, value: String },
    #[error("line {line}: {message}")]
    Csv { line: u64, message: String },
    #[error("study `{study}`: {reason}")]
    Validation { study: String, reason: String },
    #[error("dataset contains no studies")]
    Empty,
}

/// A log-scale treatment effect and its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectEstimate {
    pub y: f64,
    pub se: f64,
}

impl EffectEstimate {
    pub fn new(y: f64, se: f64) -> Result<Self, String> {
        if !y.is_finite() {
            return Err(format!("effect estimate {y} is not finite"));
        }
        if !(se.is_finite() && se > 0.0) {
            return Err(format!("standard error {se} must be positive and finite"));
        }
        Ok(Self { y, se })
    }

    pub fn variance(&self) -> f64 {
        self.se * self.se
    }

    pub fn precision(&self) -> f64 {
        1.0 / self.variance()
    }
}

/// Beta prior on the proportion of biomarker-negative patients in a mixed study.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProportionPrior {
    pub alpha: f64,
    pub beta: f64,
}

impl ProportionPrior {
    pub fn new(alpha: f64, beta: f64) -> Result<Self, String> {
        if !(alpha.is_finite() && alpha > 0.0 && beta.is_finite() && beta > 0.0) {
            return Err(format!("beta shapes ({alpha}, {beta}) must be positive and finite"));
        }
        let prior = Self { alpha, beta };
        let m = prior.mean();
        if !(m > 0.0 && m < 1.0) {
            return Err(format!("beta({alpha}, {beta}) has degenerate mean {m}"));
        }
        Ok(prior)
    }

    pub fn mean(&self) -> f64 {
        self.alpha / (self.alpha + self.beta)
    }

    pub fn variance(&self) -> f64 {
        let s = self.alpha + self.beta;
        self.alpha * self.beta / (s * s * (s + 1.0))
    }
}

impl fmt::Display for ProportionPrior {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Beta({}, {})", self.alpha, self.beta)
    }
}

/// Which populations a study reports on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Block {
    PositiveOnly,
    Both,
    NegativeOnly,
    Mixed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyRecord {
    pub study_id: String,
    pub positive: Option<EffectEstimate>,
    pub negative: Option<EffectEstimate>,
    pub mixed: Option<EffectEstimate>,
    pub proportion_prior: Option<ProportionPrior>,
}

impl StudyRecord {
    pub fn new(
        study_id: impl Into<String>,
        positive: Option<EffectEstimate>,
        negative: Option<EffectEstimate>,
        mixed: Option<EffectEstimate>,
        proportion_prior: Option<ProportionPrior>,
    ) -> Result<Self, DataError> {
        let record = Self { study_id: study_id.into(), positive, negative, mixed, proportion_prior };
        record.validate()?;
        Ok(record)
    }

    pub fn positive_only(study_id: impl Into<String>, y: f64, se: f64) -> Result<Self, DataError> {
        let id = study_id.into();
        let est = EffectEstimate::new(y, se).map_err(|reason| invalid(&id, reason))?;
        Self::new(id, Some(est), None, None, None)
    }

    pub fn both(
        study_id: impl Into<String>,
        positive: (f64, f64),
        negative: (f64, f64),
    ) -> Result<Self, DataError> {
        let id = study_id.into();
        let pos = EffectEstimate::new(positive.0, positive.1).map_err(|r| invalid(&id, r))?;
        let neg = EffectEstimate::new(negative.0, negative.1).map_err(|r| invalid(&id, r))?;
        Self::new(id, Some(pos), Some(neg), None, None)
    }

    pub fn negative_only(study_id: impl Into<String>, y: f64, se: f64) -> Result<Self, DataError> {
        let id = study_id.into();
        let est = EffectEstimate::new(y, se).map_err(|reason| invalid(&id, reason))?;
        Self::new(id, None, Some(est), None, None)
    }

    pub fn mixed(
        study_id: impl Into<String>,
        y: f64,
        se: f64,
        prior: ProportionPrior,
    ) -> Result<Self, DataError> {
        let id = study_id.into();
        let est = EffectEstimate::new(y, se).map_err(|reason| invalid(&id, reason))?;
        Self::new(id, None, None, Some(est), Some(prior))
    }

    fn validate(&self) -> Result<(), DataError> {
        if self.study_id.trim().is_empty() {
            return Err(invalid(&self.study_id, "empty study label"));
        }
        if self.positive.is_none() && self.negative.is_none() && self.mixed.is_none() {
            return Err(invalid(&self.study_id, "no estimates"));
        }
        if self.mixed.is_some() && (self.positive.is_some() || self.negative.is_some()) {
            return Err(invalid(
                &self.study_id,
                "mixed estimate reported together with subgroup estimates; keep either the mixed or the subgroup results",
            ));
        }
        if self.mixed.is_some() && self.proportion_prior.is_none() {
            return Err(invalid(&self.study_id, "mixed estimate without a proportion prior"));
        }
        Ok(())
    }

    pub fn block(&self) -> Block {
        match (self.positive.is_some(), self.negative.is_some(), self.mixed.is_some()) {
            (_, _, true) => Block::Mixed,
            (true, true, false) => Block::Both,
            (true, false, false) => Block::PositiveOnly,
            (false, true, false) => Block::NegativeOnly,
            (false, false, false) => unreachable!("validated record has an estimate"),
        }
    }
}

fn invalid(study: &str, reason: impl Into<String>) -> DataError {
    DataError::Validation { study: study.to_string(), reason: reason.into() }
}

/// Study counts per reporting pattern.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BlockCounts {
    pub positive_only: usize,
    pub both: usize,
    pub negative_only: usize,
    pub mixed: usize,
}

impl BlockCounts {
    pub fn total(&self) -> usize {
        self.positive_only + self.both + self.negative_only + self.mixed
    }

    pub fn as_tuple(&self) -> (usize, usize, usize, usize) {
        (self.positive_only, self.both, self.negative_only, self.mixed)
    }
}

impl fmt::Display for BlockCounts {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "positive-only {}, both {}, negative-only {}, mixed {}",
            self.positive_only, self.both, self.negative_only, self.mixed
        )
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetaDataset {
    studies: Vec<StudyRecord>,
    counts: BlockCounts,
}

impl MetaDataset {
    /// Builds a dataset; study labels must be unique.
    pub fn new(studies: Vec<StudyRecord>) -> Result<Self, DataError> {
        let mut seen = HashSet::new();
        for s in &studies {
            s.validate()?;
            if !seen.insert(s.study_id.as_str()) {
                return Err(invalid(&s.study_id, "duplicate study label"));
            }
        }
        let counts = count_blocks(&studies);
        Ok(Self { studies, counts })
    }

    pub fn studies(&self) -> &[StudyRecord] {
        &self.studies
    }

    pub fn len(&self) -> usize {
        self.studies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.studies.is_empty()
    }

    pub fn block_counts(&self) -> BlockCounts {
        self.counts
    }

    /// Keeps the studies for which `f` returns a record, in order.
    pub fn filter_map(&self, f: impl FnMut(&StudyRecord) -> Option<StudyRecord>) -> MetaDataset {
        let studies: Vec<_> = self.studies.iter().filter_map(f).collect();
        let counts = count_blocks(&studies);
        MetaDataset { studies, counts }
    }

    pub fn to_csv(&self) -> String {
        let mut out = HEADER.join(",");
        out.push('\n');
        for s in &self.studies {
            let mut cells = vec![quote_label(&s.study_id)];
            for est in [s.positive, s.negative, s.mixed] {
                match est {
                    Some(e) => {
                        cells.push(e.y.to_string());
                        cells.push(e.se.to_string());
                    }
                    None => cells.extend(["NA".to_string(), "NA".to_string()]),
                }
            }
            match s.proportion_prior {
                Some(p) => {
                    cells.push(p.alpha.to_string());
                    cells.push(p.beta.to_string());
                }
                None => cells.extend(["NA".to_string(), "NA".to_string()]),
            }
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

fn quote_label(label: &str) -> String {
    if label.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", label.replace('"', "\"\""))
    } else {
        label.to_string()
    }
}

fn count_blocks(studies: &[StudyRecord]) -> BlockCounts {
    let mut c = BlockCounts::default();
    for s in studies {
        match s.block() {
            Block::PositiveOnly => c.positive_only += 1,
            Block::Both => c.both += 1,
            Block::NegativeOnly => c.negative_only += 1,
            Block::Mixed => c.mixed += 1,
        }
    }
    c
}

/// Number of studies in each reporting block.
pub fn classify_blocks(dataset: &MetaDataset) -> BlockCounts {
    dataset.block_counts()
}

fn cell_value(
    raw: &str,
    line: u64,
    column: &'static str,
) -> Result<Option<f64>, DataError> {
    let v = raw.trim();
    if v.is_empty() || v == "NA" {
        return Ok(None);
    }
    v.parse::<f64>()
        .ok()
        .filter(|x| x.is_finite())
        .map(Some)
        .ok_or_else(|| DataError::Number { line, column, value: v.to_string() })
}

fn pair(
    study: &str,
    a: Option<f64>,
    b: Option<f64>,
    what: &str,
) -> Result<Option<(f64, f64)>, DataError> {
    match (a, b) {
        (Some(a), Some(b)) => Ok(Some((a, b))),
        (None, None) => Ok(None),
        _ => Err(invalid(study, format!("{what} is half missing"))),
    }
}

/// Parses a dataset CSV. Study order is preserved.
pub fn parse_dataset(text: &str) -> Result<MetaDataset, DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());

    let header = reader
        .headers()
        .map_err(|e| DataError::Csv { line: 1, message: e.to_string() })?
        .clone();
    if header.len() != HEADER.len() || header.iter().zip(HEADER).any(|(a, b)| a != b) {
        return Err(DataError::Header { found: header.iter().collect::<Vec<_>>().join(",") });
    }

    let mut studies = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| DataError::Csv {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        if row.len() == 1 && row[0].is_empty() {
            continue;
        }
        if row.len() != HEADER.len() {
            return Err(DataError::FieldCount { line, expected: HEADER.len(), found: row.len() });
        }
        let id = row[0].to_string();
        let mut nums = [None; 8];
        for (k, slot) in nums.iter_mut().enumerate() {
            *slot = cell_value(&row[k + 1], line, HEADER[k + 1])?;
        }
        let est = |k: usize, what: &str| -> Result<Option<EffectEstimate>, DataError> {
            pair(&id, nums[k], nums[k + 1], what)?
                .map(|(y, se)| EffectEstimate::new(y, se).map_err(|r| invalid(&id, r)))
                .transpose()
        };
        let positive = est(0, "positive-subgroup estimate")?;
        let negative = est(2, "negative-subgroup estimate")?;
        let mixed = est(4, "mixed-population estimate")?;
        let prior = pair(&id, nums[6], nums[7], "proportion prior")?
            .map(|(a, b)| ProportionPrior::new(a, b).map_err(|r| invalid(&id, r)))
            .transpose()?;
        studies.push(StudyRecord::new(id, positive, negative, mixed, prior)?);
    }
    if studies.is_empty() {
        return Err(DataError::Empty);
    }
    MetaDataset::new(studies)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn with_header(rows: &str) -> String {
        format!("{}\n{rows}", HEADER.join(","))
    }

    #[test]
    fn mixed_row_with_prior() {
        let ds = parse_dataset(&with_header("Bokemeyer 2009,NA,NA,NA,NA,0.01,0.13,135.25,178.56\n"))
            .unwrap();
        let s = &ds.studies()[0];
        assert_eq!(s.study_id, "Bokemeyer 2009");
        assert_eq!(s.mixed, Some(EffectEstimate { y: 0.01, se: 0.13 }));
        assert_eq!(s.proportion_prior, Some(ProportionPrior { alpha: 135.25, beta: 178.56 }));
        assert!(s.positive.is_none() && s.negative.is_none());
        assert_eq!(s.block(), Block::Mixed);
    }

    #[test]
    fn both_subgroups_row() {
        let ds = parse_dataset(&with_header("Douillard 2014,-0.13,0.10,0.16,0.11,NA,NA,NA,NA\n"))
            .unwrap();
        let s = &ds.studies()[0];
        assert_eq!(s.positive, Some(EffectEstimate { y: -0.13, se: 0.10 }));
        assert_eq!(s.negative, Some(EffectEstimate { y: 0.16, se: 0.11 }));
        assert_eq!(ds.block_counts().as_tuple(), (0, 1, 0, 0));
    }

    #[test]
    fn empty_cells_mean_missing() {
        let ds = parse_dataset(&with_header("A,-0.1,0.2,,,,,,\n")).unwrap();
        assert_eq!(ds.block_counts().as_tuple(), (1, 0, 0, 0));
    }

    #[test]
    fn all_missing_is_rejected() {
        let err = parse_dataset(&with_header("X,NA,NA,NA,NA,NA,NA,NA,NA\n")).unwrap_err();
        match err {
            DataError::Validation { study, reason } => {
                assert_eq!(study, "X");
                assert_eq!(reason, "no estimates");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_number_reports_position() {
        let err = parse_dataset(&with_header("A,-0.1,0.2,NA,NA,NA,NA,NA,NA\nB,abc,0.1,NA,NA,NA,NA,NA,NA\n"))
            .unwrap_err();
        assert_eq!(err, DataError::Number { line: 3, column: "y_pos", value: "abc".into() });
    }

    #[test]
    fn mixed_without_prior_names_study() {
        let err = parse_dataset(&with_header("Sobrero 2008,NA,NA,NA,NA,-0.03,0.07,NA,NA\n")).unwrap_err();
        assert!(matches!(err, DataError::Validation { ref study, .. } if study == "Sobrero 2008"));
    }

    #[test]
    fn triplicate_reporting_is_rejected() {
        let err = parse_dataset(&with_header("T,-0.1,0.1,0.2,0.1,0.0,0.1,10,10\n")).unwrap_err();
        assert!(matches!(err, DataError::Validation { .. }));
    }

    #[test]
    fn non_positive_se_is_rejected() {
        assert!(parse_dataset(&with_header("A,-0.1,0,NA,NA,NA,NA,NA,NA\n")).is_err());
        assert!(parse_dataset(&with_header("A,-0.1,-0.2,NA,NA,NA,NA,NA,NA\n")).is_err());
    }

    #[test]
    fn half_pair_is_rejected() {
        assert!(parse_dataset(&with_header("A,-0.1,NA,NA,NA,NA,NA,NA,NA\n")).is_err());
    }

    #[test]
    fn bad_header_and_wrong_width() {
        assert!(matches!(parse_dataset("a,b\n1,2\n"), Err(DataError::Header { .. })));
        assert!(matches!(
            parse_dataset(&with_header("A,-0.1,0.2\n")),
            Err(DataError::FieldCount { line: 2, .. })
        ));
        assert_eq!(parse_dataset(&with_header("")), Err(DataError::Empty));
    }

    #[test]
    fn duplicate_labels_rejected() {
        let err = parse_dataset(&with_header(
            "A,-0.1,0.2,NA,NA,NA,NA,NA,NA\nA,0.1,0.2,NA,NA,NA,NA,NA,NA\n",
        ))
        .unwrap_err();
        assert!(matches!(err, DataError::Validation { ref reason, .. } if reason.contains("duplicate")));
    }

    #[test]
    fn comments_and_negative_only_rows() {
        let ds = parse_dataset(&with_header(
            "# provenance note\nN1,NA,NA,-0.05,0.10,NA,NA,NA,NA\nP1,-0.15,0.17,NA,NA,NA,NA,NA,NA\n",
        ))
        .unwrap();
        assert_eq!(classify_blocks(&ds).as_tuple(), (1, 0, 1, 0));
        assert_eq!(ds.studies()[0].study_id, "N1");
    }

    #[test]
    fn single_positive_study_blocks() {
        let ds = MetaDataset::new(vec![StudyRecord::positive_only("P", 0.1, 0.2).unwrap()]).unwrap();
        assert_eq!(classify_blocks(&ds).as_tuple(), (1, 0, 0, 0));
    }

    fn estimate() -> impl Strategy<Value = EffectEstimate> {
        (-3.0f64..3.0, 0.01f64..2.0).prop_map(|(y, se)| EffectEstimate { y, se })
    }

    fn record(idx: usize) -> impl Strategy<Value = StudyRecord> {
        let prior = (0.5f64..500.0, 0.5f64..500.0).prop_map(|(a, b)| ProportionPrior { alpha: a, beta: b });
        prop_oneof![
            estimate().prop_map(move |e| StudyRecord {
                study_id: format!("study {idx}"),
                positive: Some(e),
                negative: None,
                mixed: None,
                proportion_prior: None,
            }),
            (estimate(), estimate()).prop_map(move |(p, n)| StudyRecord {
                study_id: format!("s,{idx}"),
                positive: Some(p),
                negative: Some(n),
                mixed: None,
                proportion_prior: None,
            }),
            estimate().prop_map(move |e| StudyRecord {
                study_id: format!("neg \"{idx}\""),
                positive: None,
                negative: Some(e),
                mixed: None,
                proportion_prior: None,
            }),
            (estimate(), prior).prop_map(move |(e, p)| StudyRecord {
                study_id: format!("mix{idx}"),
                positive: None,
                negative: None,
                mixed: Some(e),
                proportion_prior: Some(p),
            }),
        ]
    }

    fn dataset() -> impl Strategy<Value = MetaDataset> {
        (1usize..12)
            .prop_flat_map(|n| (0..n).map(record).collect::<Vec<_>>())
            .prop_map(|v| MetaDataset::new(v).unwrap())
    }

    proptest! {
        #[test]
        fn csv_round_trip(ds in dataset()) {
            let text = ds.to_csv();
            let back = parse_dataset(&text).unwrap();
            prop_assert_eq!(&back, &ds);
            prop_assert_eq!(back.to_csv(), text);
        }

        #[test]
        fn blocks_partition_studies(ds in dataset()) {
            let c = classify_blocks(&ds);
            prop_assert_eq!(c.total(), ds.len());
        }
    }
}
