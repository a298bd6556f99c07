//! Seeded synthetic corpus generator with a controllable planted signal.
//!
//! Each sample carries two independent-looking channels that the two model
//! components can pick up:
//!
//! - a *duration* channel visible only through timestamps: the ratio of
//!   student to teacher speaking time lands in a class-specific band when
//!   the channel fires, and in a separate neutral band when it does not;
//! - a *text* channel visible only through token identity: three marker
//!   tokens appended to student utterances come from a class-specific
//!   vocabulary when the channel fires, from a neutral one otherwise.
//!
//! Whether each channel fires is Bernoulli with probability equal to its
//! strength; a coupling knob shrinks the probability that both stay silent,
//! which raises the joint ceiling without touching the marginals. Token
//! counts, utterance counts and every timestamp distribution are identical
//! across classes, so neither channel leaks into the other's features.
//!
//! The generator reports the Bayes accuracy of each channel and of the
//! joint rule, both in closed form and as measured by its own oracle
//! classifier on a fresh held-out draw.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{Dataset, QuestionSample, Speaker, Utterance};
use crate::error::{Error, Result};
use crate::rng::SeededRng;

/// Markers appended per sample by the text channel.
const CUES_PER_SAMPLE: usize = 3;
/// Tokens per cue vocabulary; draws are without replacement.
const CUE_VOCAB_SIZE: usize = 4;
/// Student/teacher time ratio at the bottom of the neutral band.
const RATIO_BASE: f64 = 0.35;
/// Exponential rate of the band-position → time-ratio map.
const RATIO_RATE: f64 = 0.4;
/// Band geometry: neutral band and per-class bands on the latent axis.
const NEUTRAL_BAND: (f64, f64) = (-1.5, -1.0);
const CLASS_BAND_WIDTH: f64 = 0.5;
/// Highest class count the cue vocabularies support.
const MAX_CLASSES: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalConfig {
    /// Probability the duration channel fires, in [0, 1].
    pub wide_strength: f64,
    /// Probability the text channel fires, in [0, 1].
    pub text_strength: f64,
    /// Shrinks P(neither channel fires) below independence, in [0, 1].
    pub coupling: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_samples: usize,
    pub num_classes: usize,
    pub signal: SignalConfig,
    /// Filler vocabulary for utterance text.
    pub vocab: Vec<String>,
    /// Probability the recorded label is resampled uniformly.
    pub noise: f64,
}

fn default_vocab() -> Vec<String> {
    [
        "equation", "solve", "digit", "fraction", "square", "angle", "graph", "line", "point",
        "slope", "value", "term", "factor", "plus", "minus", "times", "divide", "equal", "side",
        "triangle", "circle", "area", "root", "power", "total", "difference", "half", "third",
        "double", "step",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_samples: 5000,
            num_classes: 3,
            signal: SignalConfig {
                wide_strength: 0.67,
                text_strength: 0.67,
                coupling: 0.0,
            },
            vocab: default_vocab(),
            noise: 0.0,
        }
    }
}

impl SynthConfig {
    /// Built-in presets.
    ///
    /// `default` is the two-class benchmark calibration: each marginal rule
    /// sits at 0.78 and the joint rule at 0.93 in closed form. `k3` is the
    /// same calibration for three classes.
    pub fn preset(name: &str) -> Result<SynthConfig> {
        match name {
            "default" => Ok(SynthConfig {
                n_samples: 5000,
                num_classes: 2,
                signal: SignalConfig {
                    wide_strength: 0.56,
                    text_strength: 0.56,
                    // p00 = 0.44² · (1-coupling) = 0.14 → joint 0.93
                    coupling: 1.0 - 0.14 / 0.1936,
                },
                vocab: default_vocab(),
                noise: 0.0,
            }),
            "k3" => Ok(SynthConfig {
                n_samples: 5000,
                num_classes: 3,
                signal: SignalConfig {
                    wide_strength: 0.67,
                    text_strength: 0.67,
                    // p00 = 0.33² · (1-coupling) = 0.105 → joint 0.93
                    coupling: 1.0 - 0.105 / 0.1089,
                },
                vocab: default_vocab(),
                noise: 0.0,
            }),
            other => Err(Error::Config(format!("unknown preset {other:?}"))),
        }
    }

    /// Load from a TOML config file with an embedded preset table.
    ///
    /// Top-level keys override whatever the selected preset provides.
    pub fn from_toml(text: &str) -> Result<SynthConfig> {
        #[derive(Deserialize)]
        struct PresetDef {
            n_samples: Option<usize>,
            num_classes: Option<usize>,
            wide_strength: Option<f64>,
            text_strength: Option<f64>,
            coupling: Option<f64>,
            noise: Option<f64>,
            vocab: Option<Vec<String>>,
        }
        #[derive(Deserialize)]
        struct SynthFile {
            preset: Option<String>,
            n_samples: Option<usize>,
            num_classes: Option<usize>,
            wide_strength: Option<f64>,
            text_strength: Option<f64>,
            coupling: Option<f64>,
            noise: Option<f64>,
            vocab: Option<Vec<String>>,
            #[serde(default)]
            presets: HashMap<String, PresetDef>,
        }
        let file: SynthFile =
            toml::from_str(text).map_err(|e| Error::Config(format!("synth config: {e}")))?;
        let mut cfg = match file.preset.as_deref() {
            None => SynthConfig::preset("default")?,
            Some(name) => {
                if let Some(def) = file.presets.get(name) {
                    let mut base = SynthConfig::preset("default")?;
                    apply(&mut base, &def.n_samples, &def.num_classes, &def.wide_strength,
                          &def.text_strength, &def.coupling, &def.noise, &def.vocab);
                    base
                } else {
                    SynthConfig::preset(name)?
                }
            }
        };
        apply(&mut cfg, &file.n_samples, &file.num_classes, &file.wide_strength,
              &file.text_strength, &file.coupling, &file.noise, &file.vocab);
        #[allow(clippy::too_many_arguments)]
        fn apply(
            cfg: &mut SynthConfig,
            n: &Option<usize>,
            k: &Option<usize>,
            ws: &Option<f64>,
            ts: &Option<f64>,
            cp: &Option<f64>,
            noise: &Option<f64>,
            vocab: &Option<Vec<String>>,
        ) {
            if let Some(v) = n {
                cfg.n_samples = *v;
            }
            if let Some(v) = k {
                cfg.num_classes = *v;
            }
            if let Some(v) = ws {
                cfg.signal.wide_strength = *v;
            }
            if let Some(v) = ts {
                cfg.signal.text_strength = *v;
            }
            if let Some(v) = cp {
                cfg.signal.coupling = *v;
            }
            if let Some(v) = noise {
                cfg.noise = *v;
            }
            if let Some(v) = vocab {
                cfg.vocab = v.clone();
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab.is_empty() {
            return Err(Error::Config("synthetic vocab is empty".into()));
        }
        if self.num_classes < 2 || self.num_classes > MAX_CLASSES {
            return Err(Error::Config(format!(
                "num_classes must be in [2, {MAX_CLASSES}], got {}",
                self.num_classes
            )));
        }
        if self.n_samples < self.num_classes {
            return Err(Error::Config(format!(
                "n_samples {} < num_classes {}",
                self.n_samples, self.num_classes
            )));
        }
        for (name, v) in [
            ("wide_strength", self.signal.wide_strength),
            ("text_strength", self.signal.text_strength),
            ("coupling", self.signal.coupling),
            ("noise", self.noise),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must be in [0,1], got {v}")));
            }
        }
        Ok(())
    }
}

/// Bayes rates of the planted signal, closed-form and oracle-estimated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BayesReport {
    pub n_heldout: usize,
    /// Oracle estimates on a fresh held-out draw.
    pub joint_accuracy: f64,
    pub wide_accuracy: f64,
    pub text_accuracy: f64,
    /// Closed-form values implied by the configuration.
    pub analytic_joint: f64,
    pub analytic_wide: f64,
    pub analytic_text: f64,
}

/// Joint distribution of (duration fires, text fires).
fn fire_probs(signal: &SignalConfig) -> [f64; 4] {
    let (pw, pt, kappa) = (signal.wide_strength, signal.text_strength, signal.coupling);
    let lower = (1.0 - pw - pt).max(0.0);
    let upper = (1.0 - pw).min(1.0 - pt);
    let p00 = ((1.0 - pw) * (1.0 - pt) * (1.0 - kappa)).clamp(lower, upper);
    let p10 = (1.0 - pt) - p00;
    let p01 = (1.0 - pw) - p00;
    let p11 = 1.0 - p00 - p10 - p01;
    [p11, p10, p01, p00]
}

fn cue_vocab(class: Option<usize>) -> Vec<String> {
    let tag = match class {
        Some(c) => c.to_string(),
        None => "x".to_string(),
    };
    (0..CUE_VOCAB_SIZE).map(|j| format!("cw{tag}t{j}")).collect()
}

fn band_to_ratio(t: f64) -> f64 {
    RATIO_BASE * (RATIO_RATE * (t - NEUTRAL_BAND.0)).exp()
}

fn ratio_to_band(r: f64) -> f64 {
    (r / RATIO_BASE).ln() / RATIO_RATE + NEUTRAL_BAND.0
}

fn draw_sample(rng: &mut SeededRng, cfg: &SynthConfig, index: usize) -> QuestionSample {
    let k = cfg.num_classes;
    let probs = fire_probs(&cfg.signal);

    // base transcript first: everything here is class-independent
    let n_pairs = 3 + rng.below(4);
    struct Line {
        teacher: bool,
        words: Vec<String>,
    }
    let mut lines: Vec<Line> = Vec::new();
    let pick = |rng: &mut SeededRng, vocab: &[String]| vocab[rng.below(vocab.len())].clone();
    for _ in 0..n_pairs {
        let mut extra_teacher = 0;
        if rng.uniform() < 0.25 {
            extra_teacher = 1;
        }
        for _ in 0..=extra_teacher {
            let n_words = 4 + rng.below(7);
            let mut words: Vec<String> = (0..n_words).map(|_| pick(rng, &cfg.vocab)).collect();
            if rng.uniform() < 0.15 {
                words.insert(0, "good".to_string());
            }
            if rng.uniform() < 0.3 {
                let last = words.last_mut().unwrap();
                last.push('?');
            }
            lines.push(Line {
                teacher: true,
                words,
            });
        }
        let n_words = 2 + rng.below(5);
        let mut words: Vec<String> = (0..n_words).map(|_| pick(rng, &cfg.vocab)).collect();
        if rng.uniform() < 0.25 {
            words.insert(0, "okay".to_string());
        }
        if rng.uniform() < 0.2 {
            words.insert(0, "um".to_string());
        }
        lines.push(Line {
            teacher: false,
            words,
        });
    }
    // which student lines receive a marker token (class-independent)
    let student_line_ids: Vec<usize> = lines
        .iter()
        .enumerate()
        .filter(|(_, l)| !l.teacher)
        .map(|(i, _)| i)
        .collect();
    let cue_slots = rng.choose_distinct(student_line_ids.len(), CUES_PER_SAMPLE);

    // label and channel states
    let label = rng.below(k);
    let u = rng.uniform();
    let (wide_fires, text_fires) = if u < probs[0] {
        (true, true)
    } else if u < probs[0] + probs[1] {
        (true, false)
    } else if u < probs[0] + probs[1] + probs[2] {
        (false, true)
    } else {
        (false, false)
    };

    // duration channel: latent band position → student/teacher time ratio
    let t = if wide_fires {
        let lo = label as f64;
        rng.range(lo, lo + CLASS_BAND_WIDTH)
    } else {
        rng.range(NEUTRAL_BAND.0, NEUTRAL_BAND.1)
    };
    let ratio = band_to_ratio(t);

    // text channel: marker tokens, drawn without replacement
    let vocab = cue_vocab(if text_fires { Some(label) } else { None });
    let picks = rng.choose_distinct(CUE_VOCAB_SIZE, CUES_PER_SAMPLE);
    for (slot, vocab_idx) in cue_slots.iter().zip(picks.iter()) {
        let line = &mut lines[student_line_ids[*slot]];
        line.words.push(vocab[*vocab_idx].clone());
    }

    // teacher durations are free; student durations are scaled to the ratio
    let teacher_durs: Vec<f64> = lines
        .iter()
        .filter(|l| l.teacher)
        .map(|l| 0.35 * l.words.len() as f64 + rng.range(0.2, 0.6))
        .collect();
    let teacher_total: f64 = teacher_durs.iter().sum();
    let student_weights: Vec<f64> = lines
        .iter()
        .filter(|l| !l.teacher)
        .map(|l| l.words.len() as f64)
        .collect();
    let weight_total: f64 = student_weights.iter().sum();
    let student_total = teacher_total * ratio;

    let mut utterances = Vec::with_capacity(lines.len());
    let mut cursor = 0.0f64;
    let (mut ti, mut si) = (0usize, 0usize);
    for (i, line) in lines.iter().enumerate() {
        if i > 0 {
            cursor += if rng.uniform() < 0.04 {
                rng.range(5.5, 7.5)
            } else {
                rng.range(0.1, 0.9)
            };
        }
        let dur = if line.teacher {
            let d = teacher_durs[ti];
            ti += 1;
            d
        } else {
            let d = student_total * student_weights[si] / weight_total;
            si += 1;
            d
        };
        utterances.push(Utterance {
            speaker: if line.teacher {
                Speaker::Teacher
            } else {
                Speaker::Student
            },
            text: line.words.join(" "),
            start_s: cursor,
            end_s: cursor + dur,
        });
        cursor += dur;
    }

    let recorded = if cfg.noise > 0.0 && rng.uniform() < cfg.noise {
        rng.below(k)
    } else {
        label
    };
    QuestionSample::new(format!("syn{index:05}"), recorded, utterances)
        .expect("generated sample is valid")
}

/// Oracle band/marker read-out from a finished transcript.
fn oracle_channels(sample: &QuestionSample, k: usize) -> (Option<usize>, Option<usize>) {
    let teacher_total: f64 = sample
        .utterances
        .iter()
        .filter(|u| u.speaker == Speaker::Teacher)
        .map(|u| u.duration())
        .sum();
    let student_total: f64 = sample
        .utterances
        .iter()
        .filter(|u| u.speaker == Speaker::Student)
        .map(|u| u.duration())
        .sum();
    let t = ratio_to_band(student_total / teacher_total);
    let tol = 1e-6;
    let mut wide = None;
    for c in 0..k {
        let lo = c as f64;
        if t >= lo - tol && t <= lo + CLASS_BAND_WIDTH + tol {
            wide = Some(c);
            break;
        }
    }

    let mut text = None;
    'outer: for u in &sample.utterances {
        if u.speaker != Speaker::Student {
            continue;
        }
        for token in u.text.split(' ') {
            if let Some(rest) = token.strip_prefix("cw") {
                if let Some(tag_end) = rest.find('t') {
                    if let Ok(c) = rest[..tag_end].parse::<usize>() {
                        if c < k {
                            text = Some(c);
                            break 'outer;
                        }
                    }
                }
            }
        }
    }
    (wide, text)
}

fn analytic_rates(cfg: &SynthConfig) -> (f64, f64, f64) {
    let k = cfg.num_classes as f64;
    let probs = fire_probs(&cfg.signal);
    let p00 = probs[3];
    let chance = 1.0 / k;
    let wide = cfg.signal.wide_strength + (1.0 - cfg.signal.wide_strength) * chance;
    let text = cfg.signal.text_strength + (1.0 - cfg.signal.text_strength) * chance;
    let joint = 1.0 - p00 * (1.0 - chance);
    // label noise dilutes every rule toward chance
    let dilute = |acc: f64| (1.0 - cfg.noise) * acc + cfg.noise * chance;
    (dilute(joint), dilute(wide), dilute(text))
}

/// Generate a seeded corpus and its Bayes report.
pub fn generate_synthetic(cfg: &SynthConfig, seed: u64) -> Result<(Dataset, BayesReport)> {
    cfg.validate()?;
    let root = SeededRng::new(seed);

    let mut data_rng = root.substream("synth-data");
    let samples: Vec<QuestionSample> = (0..cfg.n_samples)
        .map(|i| draw_sample(&mut data_rng, cfg, i))
        .collect();
    let dataset = Dataset::new(samples, cfg.num_classes)?;

    // fresh draw for the oracle estimate
    let mut held_rng = root.substream("synth-heldout");
    let n_heldout = cfg.n_samples.max(1000);
    let k = cfg.num_classes;
    let chance = 1.0 / k as f64;
    let (mut joint_sum, mut wide_sum, mut text_sum) = (0.0f64, 0.0, 0.0);
    for i in 0..n_heldout {
        let drawn = draw_sample(&mut held_rng, cfg, i);
        let (b_wide, b_text) = oracle_channels(&drawn, k);
        let score = |guess: Option<usize>| match guess {
            Some(c) if c == drawn.label => 1.0,
            Some(_) => 0.0,
            None => chance,
        };
        wide_sum += score(b_wide);
        text_sum += score(b_text);
        joint_sum += score(b_wide.or(b_text));
    }
    let (analytic_joint, analytic_wide, analytic_text) = analytic_rates(cfg);
    let report = BayesReport {
        n_heldout,
        joint_accuracy: joint_sum / n_heldout as f64,
        wide_accuracy: wide_sum / n_heldout as f64,
        text_accuracy: text_sum / n_heldout as f64,
        analytic_joint,
        analytic_wide,
        analytic_text,
    };
    Ok((dataset, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick_cfg(k: usize, wide: f64, text: f64) -> SynthConfig {
        SynthConfig {
            n_samples: 600,
            num_classes: k,
            signal: SignalConfig {
                wide_strength: wide,
                text_strength: text,
                coupling: 0.0,
            },
            vocab: default_vocab(),
            noise: 0.0,
        }
    }

    #[test]
    fn zero_strength_is_chance_level() {
        let (_, report) = generate_synthetic(&quick_cfg(2, 0.0, 0.0), 5).unwrap();
        assert!((report.wide_accuracy - 0.5).abs() < 0.03, "{report:?}");
        assert!((report.text_accuracy - 0.5).abs() < 0.03, "{report:?}");
        assert!((report.joint_accuracy - 0.5).abs() < 0.03, "{report:?}");
        assert_eq!(report.analytic_joint, 0.5);
    }

    #[test]
    fn full_wide_strength_makes_marginal_equal_joint() {
        let (_, report) = generate_synthetic(&quick_cfg(2, 1.0, 0.0), 6).unwrap();
        assert_eq!(report.wide_accuracy, report.joint_accuracy);
        assert_eq!(report.analytic_wide, report.analytic_joint);
        assert!((report.wide_accuracy - 1.0).abs() < 1e-12);
    }

    #[test]
    fn default_preset_hits_calibration_targets() {
        let cfg = SynthConfig::preset("default").unwrap();
        assert!((fire_probs(&cfg.signal)[3] - 0.14).abs() < 1e-12);
        let (ds, report) = generate_synthetic(&cfg, 1).unwrap();
        assert_eq!(ds.len(), 5000);
        assert_eq!(ds.num_classes, 2);
        assert!((report.analytic_wide - 0.78).abs() < 1e-9);
        assert!((report.analytic_text - 0.78).abs() < 1e-9);
        assert!((report.analytic_joint - 0.93).abs() < 1e-9);
        assert!((report.wide_accuracy - 0.78).abs() < 0.02, "{report:?}");
        assert!((report.text_accuracy - 0.78).abs() < 0.02, "{report:?}");
        assert!((report.joint_accuracy - 0.93).abs() < 0.02, "{report:?}");
    }

    #[test]
    fn generation_is_bit_identical_across_runs() {
        let cfg = quick_cfg(3, 0.5, 0.5);
        let (a, ra) = generate_synthetic(&cfg, 42).unwrap();
        let (b, rb) = generate_synthetic(&cfg, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(ra, rb);
    }

    #[test]
    fn empty_vocab_is_config_error() {
        let mut cfg = quick_cfg(2, 0.5, 0.5);
        cfg.vocab.clear();
        assert!(matches!(
            generate_synthetic(&cfg, 1),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn generated_samples_are_structurally_valid() {
        let (ds, _) = generate_synthetic(&quick_cfg(3, 0.7, 0.7), 9).unwrap();
        for s in &ds.samples {
            assert!(s.utterances.iter().any(|u| u.speaker == Speaker::Teacher));
            let students = s
                .utterances
                .iter()
                .filter(|u| u.speaker == Speaker::Student)
                .count();
            assert!(students >= 3);
            for u in &s.utterances {
                assert!(u.end_s >= u.start_s);
            }
        }
    }

    #[test]
    fn toml_preset_table_and_overrides() {
        let text = r#"
            preset = "small"
            noise = 0.05

            [presets.small]
            n_samples = 50
            num_classes = 2
            wide_strength = 0.4
            text_strength = 0.9
        "#;
        let cfg = SynthConfig::from_toml(text).unwrap();
        assert_eq!(cfg.n_samples, 50);
        assert_eq!(cfg.signal.wide_strength, 0.4);
        assert_eq!(cfg.signal.text_strength, 0.9);
        assert_eq!(cfg.noise, 0.05);
        assert!(SynthConfig::from_toml("preset = \"nope\"").is_err());
    }
}
