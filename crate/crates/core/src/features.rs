//! The 25 handcrafted wide features.
//!
//! Thirteen continuous features (`x_c`) cover interaction volume, balance,
//! fluency and uptake; twelve discrete counts are bucketed geometrically and
//! one-hot encoded into `x_d`. Lexicons, bucket boundaries, the Jaccard
//! variant and the tokenizer all live in a [`FeatureCatalog`] so a model
//! checkpoint can carry the exact extraction recipe it was trained with.

use std::collections::HashSet;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::corpus::{Dataset, QuestionSample, Speaker, Utterance};
use crate::error::{Error, Result};

// ---------------------------------------------------------------------------
// Tokenizer
// ---------------------------------------------------------------------------

fn is_cjk(c: char) -> bool {
    matches!(c,
        '\u{4E00}'..='\u{9FFF}'   // CJK Unified Ideographs
        | '\u{3400}'..='\u{4DBF}' // Extension A
        | '\u{F900}'..='\u{FAFF}' // Compatibility Ideographs
    )
}

/// Unicode-aware tokenizer: splits on whitespace and punctuation, emits each
/// CJK ideograph as its own token, lowercases ASCII.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for c in text.chars() {
        if is_cjk(c) {
            if !current.is_empty() {
                tokens.push(std::mem::take(&mut current));
            }
            tokens.push(c.to_string());
        } else if c.is_alphanumeric() {
            current.push(c.to_ascii_lowercase());
        } else if !current.is_empty() {
            tokens.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

/// Set Jaccard similarity `|A∩B| / |A∪B|`; 0 when both sides are empty.
pub fn jaccard(a: &[String], b: &[String]) -> f64 {
    let sa: HashSet<&str> = a.iter().map(|s| s.as_str()).collect();
    let sb: HashSet<&str> = b.iter().map(|s| s.as_str()).collect();
    let union = sa.union(&sb).count();
    if union == 0 {
        return 0.0;
    }
    sa.intersection(&sb).count() as f64 / union as f64
}

// ---------------------------------------------------------------------------
// Catalog
// ---------------------------------------------------------------------------

/// Bucket table over the non-negative integers: `starts[i]` is the first
/// count of bucket `i`; the last bucket is open-ended.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BucketTable {
    starts: Vec<u64>,
}

impl BucketTable {
    pub fn new(starts: Vec<u64>) -> Result<Self> {
        if starts.first() != Some(&0) {
            return Err(Error::Config("bucket table must start at 0".into()));
        }
        if starts.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("bucket starts must be strictly increasing".into()));
        }
        Ok(BucketTable { starts })
    }

    /// Geometric default: {0},{1},{2},{3-4},{5-8},{9-16},{17-32},{33-64},{65+}.
    pub fn geometric() -> Self {
        BucketTable {
            starts: vec![0, 1, 2, 3, 5, 9, 17, 33, 65],
        }
    }

    pub fn num_buckets(&self) -> usize {
        self.starts.len()
    }

    /// Index of the unique bucket containing `count`.
    pub fn index_of(&self, count: u64) -> usize {
        match self.starts.binary_search(&count) {
            Ok(i) => i,
            Err(i) => i - 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JaccardMode {
    /// All teacher tokens vs all student tokens in the segment.
    WholeSegment,
    /// Mean over adjacent teacher→student utterance pairs.
    PerExchangeMean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContinuousId {
    DurationS,
    Jaccard,
    TeacherTimeRatio,
    StudentTimeRatio,
    TeacherWordsPerSentence,
    StudentWordsPerSentence,
    WordRatioSmoothed,
    StudentLatencyMeanS,
    MaxSilenceGapS,
    TurnSwitchRatePerMin,
    StudentTypeTokenRatio,
    TeacherQuestionFrac,
    StudentAffirmationFrac,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountId {
    TeacherWords,
    StudentWords,
    TeacherSentences,
    StudentSentences,
    StudentShortSentences,
    TeacherQuestions,
    StudentQuestions,
    TurnSwitches,
    StudentAffirmations,
    TeacherPraises,
    StudentHesitations,
    LongSilences,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuousDescriptor {
    pub name: String,
    pub unit: String,
    pub id: ContinuousId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteDescriptor {
    pub name: String,
    pub id: CountId,
    pub buckets: BucketTable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lexicons {
    pub affirmation: Vec<String>,
    pub praise: Vec<String>,
    pub hesitation: Vec<String>,
}

impl Default for Lexicons {
    fn default() -> Self {
        let v = |items: &[&str]| items.iter().map(|s| s.to_string()).collect();
        Lexicons {
            affirmation: v(&[
                "yes", "yeah", "got it", "i see", "okay", "懂了", "会了", "明白", "对", "嗯",
            ]),
            praise: v(&["good", "great", "well done", "nice", "很好", "不错", "真棒", "棒"]),
            hesitation: v(&["um", "uh", "hmm", "emm", "呃", "那个", "这个"]),
        }
    }
}

/// Everything `extract` needs: 13 continuous + 12 discrete descriptors,
/// lexicons, bucket tables and the tokenizer/Jaccard variants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureCatalog {
    pub continuous: Vec<ContinuousDescriptor>,
    pub discrete: Vec<DiscreteDescriptor>,
    pub lexicons: Lexicons,
    pub jaccard_mode: JaccardMode,
    /// Gaps strictly longer than this count as long silences (seconds).
    pub silence_gap_s: f64,
}

impl Default for FeatureCatalog {
    fn default() -> Self {
        use ContinuousId::*;
        use CountId::*;
        let cont = |name: &str, unit: &str, id| ContinuousDescriptor {
            name: name.to_string(),
            unit: unit.to_string(),
            id,
        };
        let disc = |name: &str, id| DiscreteDescriptor {
            name: name.to_string(),
            id,
            buckets: BucketTable::geometric(),
        };
        FeatureCatalog {
            continuous: vec![
                cont("duration_s", "seconds", DurationS),
                cont("jaccard", "ratio", Jaccard),
                cont("teacher_time_ratio", "ratio", TeacherTimeRatio),
                cont("student_time_ratio", "ratio", StudentTimeRatio),
                cont("teacher_words_per_sentence", "tokens", TeacherWordsPerSentence),
                cont("student_words_per_sentence", "tokens", StudentWordsPerSentence),
                cont("word_ratio_smoothed", "quotient", WordRatioSmoothed),
                cont("student_latency_mean_s", "seconds", StudentLatencyMeanS),
                cont("max_silence_gap_s", "seconds", MaxSilenceGapS),
                cont("turn_switch_rate_per_min", "per-minute", TurnSwitchRatePerMin),
                cont("student_type_token_ratio", "ratio", StudentTypeTokenRatio),
                cont("teacher_question_frac", "ratio", TeacherQuestionFrac),
                cont("student_affirmation_frac", "ratio", StudentAffirmationFrac),
            ],
            discrete: vec![
                disc("teacher_word_count", TeacherWords),
                disc("student_word_count", StudentWords),
                disc("teacher_sentence_count", TeacherSentences),
                disc("student_sentence_count", StudentSentences),
                disc("student_short_sentence_count", StudentShortSentences),
                disc("teacher_question_count", TeacherQuestions),
                disc("student_question_count", StudentQuestions),
                disc("turn_switch_count", TurnSwitches),
                disc("student_affirmation_count", StudentAffirmations),
                disc("teacher_praise_count", TeacherPraises),
                disc("student_hesitation_count", StudentHesitations),
                disc("long_silence_count", LongSilences),
            ],
            lexicons: Lexicons::default(),
            jaccard_mode: JaccardMode::WholeSegment,
            silence_gap_s: 5.0,
        }
    }
}

impl FeatureCatalog {
    pub fn validate(&self) -> Result<()> {
        if self.continuous.len() != 13 || self.discrete.len() != 12 {
            return Err(Error::Config(format!(
                "catalog must have 13 continuous + 12 discrete features, got {} + {}",
                self.continuous.len(),
                self.discrete.len()
            )));
        }
        Ok(())
    }

    /// Total width of the one-hot encoding `x_d`.
    pub fn x_d_len(&self) -> usize {
        self.discrete.iter().map(|d| d.buckets.num_buckets()).sum()
    }

    /// Header names for the featurize CSV: 25 feature names.
    pub fn feature_names(&self) -> Vec<String> {
        self.continuous
            .iter()
            .map(|c| c.name.clone())
            .chain(self.discrete.iter().map(|d| d.name.clone()))
            .collect()
    }

    /// Apply overrides from a catalog config file.
    pub fn from_toml(text: &str) -> Result<FeatureCatalog> {
        #[derive(Deserialize)]
        struct CatalogFile {
            lexicons: Option<Lexicons>,
            buckets: Option<Vec<u64>>,
            jaccard: Option<JaccardMode>,
            silence_gap_s: Option<f64>,
        }
        let file: CatalogFile =
            toml::from_str(text).map_err(|e| Error::Config(format!("catalog file: {e}")))?;
        let mut catalog = FeatureCatalog::default();
        if let Some(lex) = file.lexicons {
            catalog.lexicons = lex;
        }
        if let Some(starts) = file.buckets {
            let table = BucketTable::new(starts)?;
            for d in &mut catalog.discrete {
                d.buckets = table.clone();
            }
        }
        if let Some(mode) = file.jaccard {
            catalog.jaccard_mode = mode;
        }
        if let Some(gap) = file.silence_gap_s {
            catalog.silence_gap_s = gap;
        }
        Ok(catalog)
    }
}

/// Locate `count` in its bucket table.
pub fn encode_bucket(count: u64, table: &BucketTable) -> usize {
    table.index_of(count)
}

// ---------------------------------------------------------------------------
// Extraction
// ---------------------------------------------------------------------------

/// Extracted wide features for one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WideFeatures {
    /// 13 continuous values, catalog order.
    pub x_c: Vec<f64>,
    /// 12 raw counts, catalog order.
    pub counts: Vec<u64>,
    /// One-hot bucket encoding, one block per count feature.
    pub x_d: Vec<f64>,
    /// Flat index of the hot entry per block (row-gather fast path).
    pub hot: Vec<usize>,
}

impl WideFeatures {
    /// Rebuild the one-hot encoding from raw parts.
    pub fn from_parts(x_c: Vec<f64>, counts: Vec<u64>, catalog: &FeatureCatalog) -> Result<Self> {
        if x_c.len() != catalog.continuous.len() || counts.len() != catalog.discrete.len() {
            return Err(Error::FeatureMismatch {
                expected: catalog.continuous.len() + catalog.discrete.len(),
                got: x_c.len() + counts.len(),
            });
        }
        let mut x_d = vec![0.0; catalog.x_d_len()];
        let mut hot = Vec::with_capacity(counts.len());
        let mut offset = 0;
        for (count, desc) in counts.iter().zip(catalog.discrete.iter()) {
            let idx = offset + desc.buckets.index_of(*count);
            x_d[idx] = 1.0;
            hot.push(idx);
            offset += desc.buckets.num_buckets();
        }
        Ok(WideFeatures {
            x_c,
            counts,
            x_d,
            hot,
        })
    }
}

fn ends_with_question(text: &str) -> bool {
    matches!(text.trim_end().chars().last(), Some('?') | Some('？'))
}

fn matches_lexicon(text_lc: &str, lexicon: &[String]) -> bool {
    lexicon.iter().any(|p| text_lc.contains(p.as_str()))
}

fn occurrence_count(text_lc: &str, lexicon: &[String]) -> u64 {
    lexicon
        .iter()
        .map(|p| text_lc.matches(p.as_str()).count() as u64)
        .sum()
}

struct Prepared<'a> {
    utts: Vec<&'a Utterance>,
    tokens: Vec<Vec<String>>,
    text_lc: Vec<String>,
}

fn prepare(sample: &QuestionSample) -> Prepared<'_> {
    let mut utts: Vec<&Utterance> = sample.utterances.iter().collect();
    // extraction re-sorts by time so list order never matters
    utts.sort_by(|a, b| {
        a.start_s
            .total_cmp(&b.start_s)
            .then(a.end_s.total_cmp(&b.end_s))
            .then((a.speaker == Speaker::Student).cmp(&(b.speaker == Speaker::Student)))
            .then(a.text.cmp(&b.text))
    });
    let tokens: Vec<Vec<String>> = utts.iter().map(|u| tokenize(&u.text)).collect();
    let text_lc: Vec<String> = utts.iter().map(|u| u.text.to_ascii_lowercase()).collect();
    Prepared {
        utts,
        tokens,
        text_lc,
    }
}

fn clamp01(v: f64) -> f64 {
    v.clamp(0.0, 1.0)
}

/// Compute all 25 features for one sample.
pub fn extract(sample: &QuestionSample, catalog: &FeatureCatalog) -> Result<WideFeatures> {
    catalog.validate()?;
    let p = prepare(sample);
    let n = p.utts.len();

    let is_teacher: Vec<bool> = p.utts.iter().map(|u| u.speaker == Speaker::Teacher).collect();
    let start_min = p.utts.iter().map(|u| u.start_s).fold(f64::INFINITY, f64::min);
    let end_max = p.utts.iter().map(|u| u.end_s).fold(f64::NEG_INFINITY, f64::max);
    let duration = (end_max - start_min).max(0.0);

    let teacher_time: f64 = p.utts.iter().filter(|u| u.speaker == Speaker::Teacher).map(|u| u.duration()).sum();
    let student_time: f64 = p.utts.iter().filter(|u| u.speaker == Speaker::Student).map(|u| u.duration()).sum();

    let teacher_sentences = is_teacher.iter().filter(|&&t| t).count() as u64;
    let student_sentences = (n as u64) - teacher_sentences;

    let teacher_words: u64 = p.tokens.iter().zip(&is_teacher).filter(|(_, &t)| t).map(|(tk, _)| tk.len() as u64).sum();
    let student_words: u64 = p.tokens.iter().zip(&is_teacher).filter(|(_, &t)| !t).map(|(tk, _)| tk.len() as u64).sum();

    let student_short = p
        .tokens
        .iter()
        .zip(&is_teacher)
        .filter(|(tk, &t)| !t && tk.len() < 3)
        .count() as u64;

    let teacher_questions = p.utts.iter().zip(&is_teacher).filter(|(u, &t)| t && ends_with_question(&u.text)).count() as u64;
    let student_questions = p.utts.iter().zip(&is_teacher).filter(|(u, &t)| !t && ends_with_question(&u.text)).count() as u64;

    let turn_switches = is_teacher.windows(2).filter(|w| w[0] != w[1]).count() as u64;

    let student_affirmations = p
        .text_lc
        .iter()
        .zip(&is_teacher)
        .filter(|(t, &teach)| !teach && matches_lexicon(t, &catalog.lexicons.affirmation))
        .count() as u64;
    let teacher_praises = p
        .text_lc
        .iter()
        .zip(&is_teacher)
        .filter(|(t, &teach)| teach && matches_lexicon(t, &catalog.lexicons.praise))
        .count() as u64;
    let student_hesitations: u64 = p
        .text_lc
        .iter()
        .zip(&is_teacher)
        .filter(|(_, &teach)| !teach)
        .map(|(t, _)| occurrence_count(t, &catalog.lexicons.hesitation))
        .sum();

    let gaps: Vec<f64> = (1..n)
        .map(|i| (p.utts[i].start_s - p.utts[i - 1].end_s).max(0.0))
        .collect();
    let long_silences = gaps.iter().filter(|&&g| g > catalog.silence_gap_s).count() as u64;
    let max_gap = gaps.iter().cloned().fold(0.0f64, f64::max);

    let latencies: Vec<f64> = (1..n)
        .filter(|&i| is_teacher[i - 1] && !is_teacher[i])
        .map(|i| (p.utts[i].start_s - p.utts[i - 1].end_s).max(0.0))
        .collect();
    let latency_mean = if latencies.is_empty() {
        0.0
    } else {
        latencies.iter().sum::<f64>() / latencies.len() as f64
    };

    let jac = match catalog.jaccard_mode {
        JaccardMode::WholeSegment => {
            let t_tokens: Vec<String> = p.tokens.iter().zip(&is_teacher).filter(|(_, &t)| t).flat_map(|(tk, _)| tk.clone()).collect();
            let s_tokens: Vec<String> = p.tokens.iter().zip(&is_teacher).filter(|(_, &t)| !t).flat_map(|(tk, _)| tk.clone()).collect();
            if s_tokens.is_empty() {
                0.0
            } else {
                jaccard(&t_tokens, &s_tokens)
            }
        }
        JaccardMode::PerExchangeMean => {
            let pairs: Vec<f64> = (1..n)
                .filter(|&i| is_teacher[i - 1] && !is_teacher[i])
                .map(|i| jaccard(&p.tokens[i - 1], &p.tokens[i]))
                .collect();
            if pairs.is_empty() {
                0.0
            } else {
                pairs.iter().sum::<f64>() / pairs.len() as f64
            }
        }
    };

    let student_token_set: HashSet<&str> = p
        .tokens
        .iter()
        .zip(&is_teacher)
        .filter(|(_, &t)| !t)
        .flat_map(|(tk, _)| tk.iter().map(|s| s.as_str()))
        .collect();

    let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };

    let mut x_c = Vec::with_capacity(13);
    for desc in &catalog.continuous {
        let v = match desc.id {
            ContinuousId::DurationS => duration,
            ContinuousId::Jaccard => jac,
            ContinuousId::TeacherTimeRatio => {
                if duration > 0.0 { clamp01(teacher_time / duration) } else { 0.0 }
            }
            ContinuousId::StudentTimeRatio => {
                if duration > 0.0 { clamp01(student_time / duration) } else { 0.0 }
            }
            ContinuousId::TeacherWordsPerSentence => ratio(teacher_words, teacher_sentences),
            ContinuousId::StudentWordsPerSentence => ratio(student_words, student_sentences),
            ContinuousId::WordRatioSmoothed => (student_words as f64 + 1.0) / (teacher_words as f64 + 1.0),
            ContinuousId::StudentLatencyMeanS => latency_mean,
            ContinuousId::MaxSilenceGapS => max_gap,
            ContinuousId::TurnSwitchRatePerMin => {
                if duration > 0.0 { turn_switches as f64 * 60.0 / duration } else { 0.0 }
            }
            ContinuousId::StudentTypeTokenRatio => ratio(student_token_set.len() as u64, student_words),
            ContinuousId::TeacherQuestionFrac => ratio(teacher_questions, teacher_sentences),
            ContinuousId::StudentAffirmationFrac => ratio(student_affirmations, student_sentences),
        };
        if !v.is_finite() {
            return Err(Error::Numeric {
                op: "extract",
                msg: format!("feature {} is {v}", desc.name),
            });
        }
        x_c.push(v);
    }

    let counts: Vec<u64> = catalog
        .discrete
        .iter()
        .map(|d| match d.id {
            CountId::TeacherWords => teacher_words,
            CountId::StudentWords => student_words,
            CountId::TeacherSentences => teacher_sentences,
            CountId::StudentSentences => student_sentences,
            CountId::StudentShortSentences => student_short,
            CountId::TeacherQuestions => teacher_questions,
            CountId::StudentQuestions => student_questions,
            CountId::TurnSwitches => turn_switches,
            CountId::StudentAffirmations => student_affirmations,
            CountId::TeacherPraises => teacher_praises,
            CountId::StudentHesitations => student_hesitations,
            CountId::LongSilences => long_silences,
        })
        .collect();

    WideFeatures::from_parts(x_c, counts, catalog)
}

// ---------------------------------------------------------------------------
// CSV export / ingest
// ---------------------------------------------------------------------------

/// Export `25 features + label` rows, one per sample, dataset order.
pub fn write_features_csv<W: Write>(ds: &Dataset, catalog: &FeatureCatalog, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = catalog.feature_names();
    header.push("label".to_string());
    w.write_record(&header).map_err(csv_err)?;
    for sample in &ds.samples {
        let wf = extract(sample, catalog)?;
        let mut record: Vec<String> = wf.x_c.iter().map(|v| format!("{v}")).collect();
        record.extend(wf.counts.iter().map(|c| c.to_string()));
        record.push(sample.label.to_string());
        w.write_record(&record).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Re-ingest a featurize CSV; the one-hot encoding is rebuilt from counts.
pub fn read_features_csv<R: Read>(
    reader: R,
    catalog: &FeatureCatalog,
) -> Result<Vec<(WideFeatures, usize)>> {
    let mut r = csv::Reader::from_reader(reader);
    let header = r.headers().map_err(csv_err)?.clone();
    let mut want = catalog.feature_names();
    want.push("label".to_string());
    let got: Vec<&str> = header.iter().collect();
    if got != want.iter().map(|s| s.as_str()).collect::<Vec<_>>() {
        return Err(Error::Data(format!("csv header mismatch: {got:?}")));
    }
    let n_cont = catalog.continuous.len();
    let n_disc = catalog.discrete.len();
    let mut out = Vec::new();
    for (i, record) in r.records().enumerate() {
        let record = record.map_err(csv_err)?;
        if record.len() != n_cont + n_disc + 1 {
            return Err(Error::Data(format!("csv row {} has {} fields", i + 2, record.len())));
        }
        let parse_f = |s: &str| -> Result<f64> {
            s.parse::<f64>().map_err(|e| Error::Data(format!("csv row {}: {e}", i + 2)))
        };
        let parse_u = |s: &str| -> Result<u64> {
            s.parse::<u64>().map_err(|e| Error::Data(format!("csv row {}: {e}", i + 2)))
        };
        let x_c: Vec<f64> = record.iter().take(n_cont).map(parse_f).collect::<Result<_>>()?;
        let counts: Vec<u64> = record
            .iter()
            .skip(n_cont)
            .take(n_disc)
            .map(parse_u)
            .collect::<Result<_>>()?;
        let label = record.get(n_cont + n_disc).unwrap().parse::<usize>()
            .map_err(|e| Error::Data(format!("csv row {}: label: {e}", i + 2)))?;
        out.push((WideFeatures::from_parts(x_c, counts, catalog)?, label));
    }
    Ok(out)
}

fn csv_err(e: csv::Error) -> Error {
    Error::Data(format!("csv: {e}"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::QuestionSample;

    fn utt(speaker: Speaker, text: &str, start: f64, end: f64) -> Utterance {
        Utterance {
            speaker,
            text: text.to_string(),
            start_s: start,
            end_s: end,
        }
    }

    #[test]
    fn tokenize_whitespace_split_and_lowercase() {
        assert_eq!(tokenize("I got it"), vec!["i", "got", "it"]);
    }

    #[test]
    fn tokenize_cjk_per_character() {
        assert_eq!(tokenize("这道题会了"), vec!["这", "道", "题", "会", "了"]);
    }

    #[test]
    fn tokenize_strips_punctuation() {
        assert_eq!(tokenize("x=2, yes!"), vec!["x", "2", "yes"]);
        assert_eq!(tokenize(""), Vec::<String>::new());
    }

    #[test]
    fn jaccard_cases() {
        let a = vec!["a".to_string(), "b".to_string()];
        let b = vec!["b".to_string(), "c".to_string()];
        assert_eq!(jaccard(&a, &a), 1.0);
        let disjoint = vec!["z".to_string()];
        assert_eq!(jaccard(&a, &disjoint), 0.0);
        assert!((jaccard(&a, &b) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(jaccard(&[], &[]), 0.0);
    }

    #[test]
    fn bucket_examples() {
        let t = BucketTable::geometric();
        assert_eq!(encode_bucket(0, &t), 0);
        assert_eq!(encode_bucket(7, &t), 4);
        assert_eq!(encode_bucket(1_000_000, &t), 8);
        assert_eq!(encode_bucket(65, &t), 8);
        assert_eq!(encode_bucket(64, &t), 7);
    }

    #[test]
    fn bucket_table_validation() {
        assert!(BucketTable::new(vec![1, 2]).is_err());
        assert!(BucketTable::new(vec![0, 2, 2]).is_err());
        assert!(BucketTable::new(vec![0, 3, 10]).is_ok());
    }

    #[test]
    fn two_utterance_duration_and_switches() {
        let sample = QuestionSample::new(
            "a",
            0,
            vec![
                utt(Speaker::Teacher, "look at this problem", 0.0, 10.0),
                utt(Speaker::Student, "i see", 10.0, 20.0),
            ],
        )
        .unwrap();
        let catalog = FeatureCatalog::default();
        let wf = extract(&sample, &catalog).unwrap();
        assert_eq!(wf.x_c[0], 20.0); // duration
        assert_eq!(wf.counts[7], 1); // turn switches
    }

    #[test]
    fn no_student_utterances_degenerates_to_zero() {
        let sample = QuestionSample::new(
            "a",
            0,
            vec![
                utt(Speaker::Teacher, "look here", 0.0, 5.0),
                utt(Speaker::Teacher, "this is a square?", 5.0, 9.0),
            ],
        )
        .unwrap();
        let catalog = FeatureCatalog::default();
        let wf = extract(&sample, &catalog).unwrap();
        assert_eq!(wf.counts[1], 0); // student words
        assert_eq!(wf.counts[3], 0); // student sentences
        assert_eq!(wf.x_c[1], 0.0); // jaccard
        assert_eq!(wf.x_c[3], 0.0); // student time ratio
        assert_eq!(wf.x_c[5], 0.0); // student words per sentence
    }

    #[test]
    fn each_one_hot_block_has_exactly_one_bit() {
        let sample = QuestionSample::new(
            "a",
            0,
            vec![
                utt(Speaker::Teacher, "what is x?", 0.0, 3.0),
                utt(Speaker::Student, "um x is 2", 3.5, 6.0),
            ],
        )
        .unwrap();
        let catalog = FeatureCatalog::default();
        let wf = extract(&sample, &catalog).unwrap();
        assert_eq!(wf.x_d.len(), catalog.x_d_len());
        assert_eq!(wf.x_d.len(), 108);
        let mut offset = 0;
        for d in &catalog.discrete {
            let block = &wf.x_d[offset..offset + d.buckets.num_buckets()];
            assert_eq!(block.iter().sum::<f64>(), 1.0);
            offset += d.buckets.num_buckets();
        }
        assert_eq!(wf.hot.len(), 12);
    }

    #[test]
    fn catalog_toml_overrides() {
        let text = r#"
            buckets = [0, 2, 8]
            jaccard = "per_exchange_mean"
            [lexicons]
            affirmation = ["si"]
            praise = ["bravo"]
            hesitation = ["eh"]
        "#;
        let catalog = FeatureCatalog::from_toml(text).unwrap();
        assert_eq!(catalog.discrete[0].buckets.num_buckets(), 3);
        assert_eq!(catalog.jaccard_mode, JaccardMode::PerExchangeMean);
        assert_eq!(catalog.lexicons.affirmation, vec!["si"]);
        assert_eq!(catalog.x_d_len(), 36);
    }

    #[test]
    fn per_exchange_jaccard_variant() {
        // teacher->student pairs: ({what,is,x}, {x,is,2}) -> 2/4 and
        // ({good}, {thanks}) -> 0; mean = 0.25
        let sample = QuestionSample::new(
            "a",
            0,
            vec![
                utt(Speaker::Teacher, "what is x", 0.0, 1.0),
                utt(Speaker::Student, "x is 2", 1.0, 2.0),
                utt(Speaker::Teacher, "good", 2.0, 3.0),
                utt(Speaker::Student, "thanks", 3.0, 4.0),
            ],
        )
        .unwrap();
        let mut catalog = FeatureCatalog::default();
        catalog.jaccard_mode = JaccardMode::PerExchangeMean;
        let wf = extract(&sample, &catalog).unwrap();
        assert!((wf.x_c[1] - 0.25).abs() < 1e-15, "{}", wf.x_c[1]);
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let samples = vec![
            QuestionSample::new(
                "a",
                1,
                vec![
                    utt(Speaker::Teacher, "what is one third plus one third?", 0.0, 4.25),
                    utt(Speaker::Student, "um two thirds", 4.75, 6.5),
                ],
            )
            .unwrap(),
            QuestionSample::new(
                "b",
                0,
                vec![
                    utt(Speaker::Teacher, "看这道题?", 0.0, 2.0),
                    utt(Speaker::Student, "嗯 会了", 2.1, 3.3),
                ],
            )
            .unwrap(),
        ];
        let ds = Dataset::new(samples, 2).unwrap();
        let catalog = FeatureCatalog::default();
        let mut buf = Vec::new();
        write_features_csv(&ds, &catalog, &mut buf).unwrap();
        let rows = read_features_csv(buf.as_slice(), &catalog).unwrap();
        assert_eq!(rows.len(), 2);
        for (sample, (wf, label)) in ds.samples.iter().zip(rows.iter()) {
            let direct = extract(sample, &catalog).unwrap();
            assert_eq!(*label, sample.label);
            assert_eq!(wf.counts, direct.counts);
            assert_eq!(wf.x_d, direct.x_d);
            for (a, b) in wf.x_c.iter().zip(direct.x_c.iter()) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
