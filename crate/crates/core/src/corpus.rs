//! Transcript data model and ingestion.
//!
//! A [`QuestionSample`] is one example-question conversation segment:
//! time-ordered utterances plus a mastery label. Samples arrive as UTF-8
//! JSONL, one object per line, with fields `sample_id`, `label`,
//! `utterances[{speaker, text, start_s, end_s}]` and optional `grade` /
//! `class_id`. Missing timestamps are estimated from word counts and the
//! sample is flagged `timing_estimated` so duration features degrade
//! gracefully.

use std::cmp::Ordering;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::tokenize;
use crate::rng::SeededRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Speaker {
    Teacher,
    Student,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Utterance {
    pub speaker: Speaker,
    pub text: String,
    pub start_s: f64,
    pub end_s: f64,
}

impl Utterance {
    pub fn duration(&self) -> f64 {
        self.end_s - self.start_s
    }

    fn order_key(&self, other: &Utterance) -> Ordering {
        self.start_s
            .total_cmp(&other.start_s)
            .then(self.end_s.total_cmp(&other.end_s))
            .then((self.speaker == Speaker::Student).cmp(&(other.speaker == Speaker::Student)))
            .then(self.text.cmp(&other.text))
    }
}

/// One example-question segment: the unit of classification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionSample {
    pub sample_id: String,
    pub label: usize,
    pub utterances: Vec<Utterance>,
    pub grade: Option<String>,
    pub class_id: Option<String>,
    /// True when timestamps were estimated from word counts at ingest.
    #[serde(default)]
    pub timing_estimated: bool,
}

impl QuestionSample {
    /// Validates invariants and stores utterances sorted by time.
    pub fn new(
        sample_id: impl Into<String>,
        label: usize,
        mut utterances: Vec<Utterance>,
    ) -> Result<Self> {
        let sample_id = sample_id.into();
        let invalid = |msg: String| Error::Validation {
            sample_id: sample_id.clone(),
            msg,
        };
        if utterances.is_empty() {
            return Err(invalid("no utterances".into()));
        }
        for u in &utterances {
            if u.text.trim().is_empty() {
                return Err(invalid("empty utterance text".into()));
            }
            if !u.start_s.is_finite() || !u.end_s.is_finite() || u.start_s < 0.0 {
                return Err(invalid(format!(
                    "bad timestamps [{}, {}]",
                    u.start_s, u.end_s
                )));
            }
            if u.end_s < u.start_s {
                return Err(invalid(format!(
                    "end_s {} before start_s {}",
                    u.end_s, u.start_s
                )));
            }
        }
        if !utterances.iter().any(|u| u.speaker == Speaker::Teacher) {
            return Err(invalid("no teacher utterance".into()));
        }
        utterances.sort_by(|a, b| a.order_key(b));
        Ok(QuestionSample {
            sample_id,
            label,
            utterances,
            grade: None,
            class_id: None,
            timing_estimated: false,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SplitTag {
    Train,
    Val,
    Test,
    Unsplit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub samples: Vec<QuestionSample>,
    pub num_classes: usize,
    pub split_tag: SplitTag,
}

impl Dataset {
    pub fn new(samples: Vec<QuestionSample>, num_classes: usize) -> Result<Self> {
        let ds = Dataset {
            samples,
            num_classes,
            split_tag: SplitTag::Unsplit,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::Config(format!(
                "num_classes must be >= 2, got {}",
                self.num_classes
            )));
        }
        let mut seen = std::collections::HashSet::new();
        for s in &self.samples {
            if s.label >= self.num_classes {
                return Err(Error::Validation {
                    sample_id: s.sample_id.clone(),
                    msg: format!("label {} >= num_classes {}", s.label, self.num_classes),
                });
            }
            if !seen.insert(s.sample_id.as_str()) {
                return Err(Error::Validation {
                    sample_id: s.sample_id.clone(),
                    msg: "duplicate sample_id".into(),
                });
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.label).collect()
    }

    pub fn label_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.num_classes];
        for s in &self.samples {
            counts[s.label] += 1;
        }
        counts
    }
}

// ---------------------------------------------------------------------------
// JSONL wire format
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct UtteranceWire {
    speaker: String,
    text: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    start_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    end_s: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct SampleWire {
    sample_id: String,
    label: i64,
    utterances: Vec<UtteranceWire>,
    #[serde(skip_serializing_if = "Option::is_none")]
    grade: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    class_id: Option<String>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    timing_estimated: bool,
}

/// Words-per-second assumed when timestamps must be estimated.
const ESTIMATED_SECONDS_PER_WORD: f64 = 0.4;

fn sample_from_wire(wire: SampleWire) -> Result<QuestionSample> {
    let invalid = |msg: String| Error::Validation {
        sample_id: wire.sample_id.clone(),
        msg,
    };
    if wire.label < 0 {
        return Err(invalid(format!("negative label {}", wire.label)));
    }
    let mut estimated = wire.timing_estimated;
    let mut cursor = 0.0f64;
    let mut utterances = Vec::with_capacity(wire.utterances.len());
    for u in &wire.utterances {
        let speaker = match u.speaker.as_str() {
            "teacher" => Speaker::Teacher,
            "student" => Speaker::Student,
            other => return Err(invalid(format!("unknown speaker tag {other:?}"))),
        };
        let (start_s, end_s) = match (u.start_s, u.end_s) {
            (Some(s), Some(e)) => {
                cursor = cursor.max(e);
                (s, e)
            }
            _ => {
                // proportional to word count, laid out after everything seen so far
                estimated = true;
                let words = tokenize(&u.text).len().max(1);
                let start = cursor;
                cursor += words as f64 * ESTIMATED_SECONDS_PER_WORD;
                (start, cursor)
            }
        };
        utterances.push(Utterance {
            speaker,
            text: u.text.clone(),
            start_s,
            end_s,
        });
    }
    let mut sample = QuestionSample::new(wire.sample_id, wire.label as usize, utterances)?;
    sample.grade = wire.grade;
    sample.class_id = wire.class_id;
    sample.timing_estimated = estimated;
    Ok(sample)
}

fn sample_to_wire(s: &QuestionSample) -> SampleWire {
    SampleWire {
        sample_id: s.sample_id.clone(),
        label: s.label as i64,
        utterances: s
            .utterances
            .iter()
            .map(|u| UtteranceWire {
                speaker: match u.speaker {
                    Speaker::Teacher => "teacher".to_string(),
                    Speaker::Student => "student".to_string(),
                },
                text: u.text.clone(),
                start_s: Some(u.start_s),
                end_s: Some(u.end_s),
            })
            .collect(),
        grade: s.grade.clone(),
        class_id: s.class_id.clone(),
        timing_estimated: s.timing_estimated,
    }
}

/// Parse a JSONL transcript stream; `K` is inferred as `max(label)+1`.
pub fn parse_transcripts<R: BufRead>(reader: R) -> Result<Dataset> {
    parse_transcripts_with_classes(reader, None)
}

/// Parse with an explicit class count instead of inferring it.
pub fn parse_transcripts_with_classes<R: BufRead>(
    reader: R,
    num_classes: Option<usize>,
) -> Result<Dataset> {
    let mut samples = Vec::new();
    let mut max_label = 0usize;
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let wire: SampleWire = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            msg: e.to_string(),
        })?;
        let sample = sample_from_wire(wire)?;
        max_label = max_label.max(sample.label);
        samples.push(sample);
    }
    if samples.is_empty() {
        return Err(Error::EmptyDataset("no samples in transcript stream".into()));
    }
    let k = num_classes.unwrap_or(max_label + 1).max(2);
    Dataset::new(samples, k)
}

/// Write a dataset back out as JSONL, one sample per line.
pub fn write_transcripts<W: Write>(ds: &Dataset, mut writer: W) -> Result<()> {
    for s in &ds.samples {
        serde_json::to_writer(&mut writer, &sample_to_wire(s))
            .map_err(|e| Error::Data(format!("serialize {}: {e}", s.sample_id)))?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Stratified split
// ---------------------------------------------------------------------------

/// Seeded stratified split into train/val/test.
///
/// Per class: a seeded shuffle, floor allocation, then leftover samples go
/// to whichever split is furthest behind its cumulative target, so per-class
/// counts stay within ±1 of `ratio × class size` and the global sizes track
/// the requested ratios. Classes with fewer samples than splits are placed
/// entirely in train with a warning.
pub fn split_dataset(
    ds: &Dataset,
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<(Dataset, Dataset, Dataset)> {
    let r = [ratios.0, ratios.1, ratios.2];
    if r.iter().any(|&x| x <= 0.0) {
        return Err(Error::Config(format!("ratios must be positive: {r:?}")));
    }
    let sum: f64 = r.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("ratios sum to {sum}, expected 1")));
    }
    if ds.len() < 3 {
        return Err(Error::Data(format!(
            "need at least 3 samples to split, got {}",
            ds.len()
        )));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); ds.num_classes];
    for (i, s) in ds.samples.iter().enumerate() {
        by_class[s.label].push(i);
    }
    if let Some(empty) = by_class.iter().position(|v| v.is_empty()) {
        return Err(Error::Data(format!("class {empty} has no samples")));
    }

    let mut rng = SeededRng::new(seed);
    let mut parts: [Vec<usize>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    let mut cum_target = [0.0f64; 3];
    let mut alloc = [0usize; 3];

    for (class, mut idx) in by_class.into_iter().enumerate() {
        rng.shuffle(&mut idx);
        let m = idx.len();
        for s in 0..3 {
            cum_target[s] += r[s] * m as f64;
        }
        if m < 3 {
            log::warn!("class {class} has only {m} samples; placing all in train");
            alloc[0] += m;
            parts[0].extend(idx);
            continue;
        }
        let mut take = [0usize; 3];
        for s in 0..3 {
            take[s] = (r[s] * m as f64).floor() as usize;
        }
        let mut leftover = m - take.iter().sum::<usize>();
        let mut given = [false; 3];
        while leftover > 0 {
            let mut best = usize::MAX;
            let mut best_deficit = f64::NEG_INFINITY;
            for s in 0..3 {
                if given[s] {
                    continue;
                }
                let deficit = cum_target[s] - (alloc[s] + take[s]) as f64;
                if deficit > best_deficit + 1e-12 {
                    best_deficit = deficit;
                    best = s;
                }
            }
            take[best] += 1;
            given[best] = true;
            leftover -= 1;
        }
        let mut offset = 0;
        for s in 0..3 {
            parts[s].extend(&idx[offset..offset + take[s]]);
            alloc[s] += take[s];
            offset += take[s];
        }
    }

    let build = |indices: &Vec<usize>, tag: SplitTag| -> Dataset {
        let mut sorted = indices.clone();
        sorted.sort_unstable();
        Dataset {
            samples: sorted.iter().map(|&i| ds.samples[i].clone()).collect(),
            num_classes: ds.num_classes,
            split_tag: tag,
        }
    };
    Ok((
        build(&parts[0], SplitTag::Train),
        build(&parts[1], SplitTag::Val),
        build(&parts[2], SplitTag::Test),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn utt(speaker: Speaker, text: &str, start: f64, end: f64) -> Utterance {
        Utterance {
            speaker,
            text: text.to_string(),
            start_s: start,
            end_s: end,
        }
    }

    #[test]
    fn minimal_line_parses_with_inferred_k() {
        let line = r#"{"sample_id":"a","label":1,"utterances":[{"speaker":"teacher","text":"看这道题","start_s":0,"end_s":2}]}"#;
        let ds = parse_transcripts(line.as_bytes()).unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.num_classes, 2);
        assert_eq!(ds.samples[0].sample_id, "a");
    }

    #[test]
    fn end_before_start_is_validation_error_naming_sample() {
        let line = r#"{"sample_id":"a","label":1,"utterances":[{"speaker":"teacher","text":"看这道题","start_s":2,"end_s":1}]}"#;
        match parse_transcripts(line.as_bytes()) {
            Err(Error::Validation { sample_id, .. }) => assert_eq!(sample_id, "a"),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn ten_lines_three_labels() {
        let mut text = String::new();
        for i in 0..10 {
            text.push_str(&format!(
                r#"{{"sample_id":"s{i}","label":{},"utterances":[{{"speaker":"teacher","text":"t","start_s":0,"end_s":1}}]}}"#,
                i % 3
            ));
            text.push('\n');
        }
        let ds = parse_transcripts(text.as_bytes()).unwrap();
        assert_eq!(ds.len(), 10);
        assert_eq!(ds.num_classes, 3);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let text = "{\"sample_id\":\"a\",\"label\":0,\"utterances\":[{\"speaker\":\"teacher\",\"text\":\"t\",\"start_s\":0,\"end_s\":1}]}\nnot json\n";
        match parse_transcripts(text.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_speaker_and_negative_label_rejected() {
        let bad_speaker = r#"{"sample_id":"x","label":0,"utterances":[{"speaker":"robot","text":"t","start_s":0,"end_s":1}]}"#;
        assert!(matches!(
            parse_transcripts(bad_speaker.as_bytes()),
            Err(Error::Validation { .. })
        ));
        let bad_label = r#"{"sample_id":"x","label":-1,"utterances":[{"speaker":"teacher","text":"t","start_s":0,"end_s":1}]}"#;
        assert!(matches!(
            parse_transcripts(bad_label.as_bytes()),
            Err(Error::Validation { .. })
        ));
    }

    #[test]
    fn empty_stream_is_empty_dataset_error() {
        assert!(matches!(
            parse_transcripts("".as_bytes()),
            Err(Error::EmptyDataset(_))
        ));
    }

    #[test]
    fn missing_timestamps_are_estimated_and_flagged() {
        let line = r#"{"sample_id":"a","label":0,"utterances":[{"speaker":"teacher","text":"one two three"},{"speaker":"student","text":"four five"}]}"#;
        let ds = parse_transcripts(line.as_bytes()).unwrap();
        let s = &ds.samples[0];
        assert!(s.timing_estimated);
        assert!(s.utterances[0].end_s > s.utterances[0].start_s);
        assert!(s.utterances[1].start_s >= s.utterances[0].end_s);
    }

    #[test]
    fn utterances_resorted_by_start_time() {
        let sample = QuestionSample::new(
            "a",
            0,
            vec![
                utt(Speaker::Student, "later", 5.0, 6.0),
                utt(Speaker::Teacher, "earlier", 0.0, 2.0),
            ],
        )
        .unwrap();
        assert_eq!(sample.utterances[0].text, "earlier");
    }

    #[test]
    fn teacher_required() {
        let err = QuestionSample::new("a", 0, vec![utt(Speaker::Student, "hi", 0.0, 1.0)]);
        assert!(matches!(err, Err(Error::Validation { .. })));
    }

    #[test]
    fn parse_serialize_parse_is_identity() {
        let text = concat!(
            r#"{"sample_id":"a","label":1,"utterances":[{"speaker":"teacher","text":"看这道题","start_s":0.0,"end_s":2.5},{"speaker":"student","text":"会了","start_s":2.5,"end_s":3.25}],"grade":"g8"}"#,
            "\n",
            r#"{"sample_id":"b","label":0,"utterances":[{"speaker":"teacher","text":"next one"}]}"#,
            "\n"
        );
        let ds1 = parse_transcripts(text.as_bytes()).unwrap();
        let mut buf = Vec::new();
        write_transcripts(&ds1, &mut buf).unwrap();
        let ds2 = parse_transcripts(buf.as_slice()).unwrap();
        assert_eq!(ds1, ds2);
    }

    fn hundred_sample_dataset() -> Dataset {
        let samples: Vec<QuestionSample> = (0..100)
            .map(|i| {
                QuestionSample::new(
                    format!("s{i}"),
                    i % 2,
                    vec![utt(Speaker::Teacher, "t", 0.0, 1.0)],
                )
                .unwrap()
            })
            .collect();
        Dataset::new(samples, 2).unwrap()
    }

    #[test]
    fn stratified_split_sizes_and_composition() {
        let ds = hundred_sample_dataset();
        let (train, val, test) = split_dataset(&ds, (0.7, 0.15, 0.15), 7).unwrap();
        assert_eq!(train.len(), 70);
        assert_eq!(val.len(), 15);
        assert_eq!(test.len(), 15);
        for split in [&train, &val, &test] {
            let counts = split.label_counts();
            let m = split.len() as f64;
            for c in 0..2 {
                assert!(
                    (counts[c] as f64 - m / 2.0).abs() <= 1.0,
                    "class {c} count {} in split of {m}",
                    counts[c]
                );
            }
        }
        let train_counts = train.label_counts();
        assert_eq!(train_counts, vec![35, 35]);
    }

    #[test]
    fn split_is_deterministic_for_fixed_seed() {
        let ds = hundred_sample_dataset();
        let a = split_dataset(&ds, (0.7, 0.15, 0.15), 7).unwrap();
        let b = split_dataset(&ds, (0.7, 0.15, 0.15), 7).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
        assert_eq!(a.2, b.2);
    }

    #[test]
    fn bad_ratios_are_config_error() {
        let ds = hundred_sample_dataset();
        assert!(matches!(
            split_dataset(&ds, (0.5, 0.5, 0.1), 1),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn tiny_class_goes_entirely_to_train() {
        let mut samples: Vec<QuestionSample> = (0..20)
            .map(|i| {
                QuestionSample::new(format!("a{i}"), 0, vec![utt(Speaker::Teacher, "t", 0.0, 1.0)])
                    .unwrap()
            })
            .collect();
        for i in 0..2 {
            samples.push(
                QuestionSample::new(format!("b{i}"), 1, vec![utt(Speaker::Teacher, "t", 0.0, 1.0)])
                    .unwrap(),
            );
        }
        let ds = Dataset::new(samples, 2).unwrap();
        let (train, val, test) = split_dataset(&ds, (0.6, 0.2, 0.2), 3).unwrap();
        assert_eq!(train.label_counts()[1], 2);
        assert_eq!(val.label_counts()[1], 0);
        assert_eq!(test.label_counts()[1], 0);
    }

    #[test]
    fn split_is_partition() {
        let ds = hundred_sample_dataset();
        let (train, val, test) = split_dataset(&ds, (0.5, 0.25, 0.25), 11).unwrap();
        let mut ids: Vec<&str> = train
            .samples
            .iter()
            .chain(val.samples.iter())
            .chain(test.samples.iter())
            .map(|s| s.sample_id.as_str())
            .collect();
        ids.sort_unstable();
        let mut want: Vec<String> = (0..100).map(|i| format!("s{i}")).collect();
        want.sort();
        assert_eq!(ids, want.iter().map(|s| s.as_str()).collect::<Vec<_>>());
    }
}
