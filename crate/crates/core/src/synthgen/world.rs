use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{SynthConfig, SynthError};
use crate::trial_data::{Enrollment, Gender, Label, Match, PhoneMatch, Track, TrialId, TrialKey, TrialRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Source {
    Cts,
    Afv,
}

#[derive(Debug, Clone)]
pub(crate) struct Speaker {
    pub id: String,
    pub gender: Gender,
    /// Primary language first.
    pub languages: Vec<usize>,
}

#[derive(Debug, Clone)]
pub(crate) struct Segment {
    pub id: String,
    pub speaker: usize,
    pub source: Source,
    pub language: usize,
    /// Phone index for CTS segments.
    pub phone: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum ModelKind {
    Cts1,
    Cts3,
    Image,
}

#[derive(Debug, Clone)]
pub(crate) struct Model {
    pub id: String,
    pub speaker: usize,
    pub kind: ModelKind,
    /// Enrollment segment indices (empty for image models).
    pub segments: Vec<usize>,
    /// Enrollment image id for image models.
    pub image: Option<String>,
}

/// Speakers, enrollment models and test segments of a synthetic
/// evaluation.
#[derive(Debug, Clone)]
pub struct World {
    pub(crate) speakers: Vec<Speaker>,
    pub(crate) segments: Vec<Segment>,
    pub(crate) models: Vec<Model>,
    pub(crate) tests: Vec<usize>,
}

/// ChaCha stream for speaker `i` of a given purpose; purposes occupy
/// disjoint stream ranges.
pub(crate) fn stream(seed: u64, purpose: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((purpose << 40) | index);
    rng
}

pub(crate) const STRUCTURE: u64 = 1;

/// Whether element `j` of `n` is among `m` evenly spread picks.
fn spread(j: usize, m: usize, n: usize) -> bool {
    (j + 1) * m / n > j * m / n
}

impl World {
    pub fn build(config: &SynthConfig) -> Result<World, SynthError> {
        config.validate()?;
        let n_lang = config.languages.len();
        let n_male = config.n_male();
        let n_female = config.n_speakers - n_male;
        let multi = |n: usize| {
            if n_lang < 2 {
                0
            } else {
                (n as f64 * config.multilingual_fraction).round() as usize
            }
        };
        let (multi_male, multi_female) = (multi(n_male), multi(n_female));

        let mut speakers = Vec::with_capacity(config.n_speakers);
        let mut segments = Vec::new();
        let mut models = Vec::new();
        let mut tests = Vec::new();
        for i in 0..config.n_speakers {
            let (gender, rank, n_multi) = if i < n_male {
                (Gender::Male, i, multi_male)
            } else {
                (Gender::Female, i - n_male, multi_female)
            };
            let primary = i % n_lang;
            let mut languages = vec![primary];
            if rank < n_multi {
                languages.push((primary + 1 + (i / n_lang) % (n_lang - 1)) % n_lang);
            }
            let id = format!("spk{i:04}");
            let mut rng = stream(config.seed, STRUCTURE, i as u64);
            let n_test = rng.random_range(config.test_segments_min..=config.test_segments_max);

            let enroll = |k: usize, segments: &mut Vec<Segment>| {
                segments.push(Segment {
                    id: format!("{id}_enr{k}"),
                    speaker: i,
                    source: Source::Cts,
                    language: primary,
                    phone: Some(0),
                });
                segments.len() - 1
            };
            let e1 = enroll(1, &mut segments);
            models.push(Model {
                id: format!("{id}_cts1"),
                speaker: i,
                kind: ModelKind::Cts1,
                segments: vec![e1],
                image: None,
            });
            if config.three_segment_models && config.track == Track::Audio {
                let segs = (2..=4).map(|k| enroll(k, &mut segments)).collect();
                models.push(Model {
                    id: format!("{id}_cts3"),
                    speaker: i,
                    kind: ModelKind::Cts3,
                    segments: segs,
                    image: None,
                });
            }
            models.push(Model {
                id: format!("{id}_img"),
                speaker: i,
                kind: ModelKind::Image,
                segments: Vec::new(),
                image: Some(format!("{id}_selfie")),
            });

            let n_afv = (n_test as f64 * config.afv_fraction).round() as usize;
            let (mut k_cts, mut k_afv) = (0usize, 0usize);
            for j in 0..n_test {
                let source = if spread(j, n_afv, n_test) { Source::Afv } else { Source::Cts };
                let k = match source {
                    Source::Cts => &mut k_cts,
                    Source::Afv => &mut k_afv,
                };
                let language = languages[*k % languages.len()];
                let phone = match source {
                    Source::Cts => Some((*k / languages.len()) % 2),
                    Source::Afv => None,
                };
                *k += 1;
                segments.push(Segment {
                    id: format!("{id}_tst{j:02}"),
                    speaker: i,
                    source,
                    language,
                    phone,
                });
                tests.push(segments.len() - 1);
            }
            speakers.push(Speaker { id, gender, languages });
        }
        Ok(World {
            speakers,
            segments,
            models,
            tests,
        })
    }

    fn track_models(&self, track: Track) -> impl Iterator<Item = &Model> {
        self.models.iter().filter(move |m| match track {
            Track::Audio => matches!(m.kind, ModelKind::Cts1 | ModelKind::Cts3),
            Track::AudioVisual => m.kind == ModelKind::Cts1,
            Track::Visual => m.kind == ModelKind::Image,
        })
    }

    fn track_tests(&self, track: Track) -> impl Iterator<Item = &Segment> {
        self.tests
            .iter()
            .map(|&t| &self.segments[t])
            .filter(move |s| track == Track::Audio || s.source == Source::Afv)
    }

    fn record(&self, model: &Model, test: &Segment, track: Track) -> TrialRecord {
        let speaker = &self.speakers[model.speaker];
        let target = model.speaker == test.speaker;
        let (source, language, phone) = match model.kind {
            ModelKind::Image => (Source::Cts, self.speakers[model.speaker].languages[0], None),
            _ => {
                let e = &self.segments[model.segments[0]];
                (e.source, e.language, e.phone)
            }
        };
        let flag = |b: bool| if b { Match::Y } else { Match::N };
        let phone_match = match (phone, test.phone) {
            (Some(a), Some(b)) if target && a == b => PhoneMatch::Y,
            (Some(_), Some(_)) => PhoneMatch::N,
            _ => PhoneMatch::NotApplicable,
        };
        TrialRecord {
            id: TrialId::new(model.id.clone(), test.id.clone()).expect("generated ids are valid tokens"),
            label: if target { Label::Target } else { Label::Nontarget },
            gender: speaker.gender,
            source_match: match model.kind {
                ModelKind::Image => Match::N,
                _ => flag(source == test.source),
            },
            language_match: flag(language == test.language),
            phone_match,
            num_enroll_segments: if model.kind == ModelKind::Cts3 { 3 } else { 1 },
            track,
        }
    }

    /// All same-gender model x test pairs of `track`, after checking that
    /// every required partition cell has target trials and that each
    /// gender has non-target trials.
    pub fn key(&self, track: Track) -> Result<TrialKey, SynthError> {
        let tests: Vec<&Segment> = self.track_tests(track).collect();
        let mut records = Vec::new();
        for m in self.track_models(track) {
            let g = self.speakers[m.speaker].gender;
            for t in &tests {
                if self.speakers[t.speaker].gender == g {
                    records.push(self.record(m, t, track));
                }
            }
        }
        Ok(TrialKey::new(track, records)?)
    }

    pub fn enrollment(&self, track: Track) -> Enrollment {
        let mut e = Enrollment::new();
        for m in self.track_models(track) {
            match &m.image {
                Some(img) => {
                    e.add(&m.id, img);
                }
                None => {
                    for &s in &m.segments {
                        e.add(&m.id, &self.segments[s].id);
                    }
                }
            }
        }
        e
    }

    pub fn n_speakers(&self) -> usize {
        self.speakers.len()
    }
}

/// Target cells `(gender, source_match, language_match)` the config asks
/// for. A gender is required when it has speakers; source levels follow
/// `afv_fraction` (audio) or are fixed by the track; cross-language
/// targets are required when multilingual speakers are configured.
pub fn required_cells(config: &SynthConfig) -> Vec<(Gender, Match, Match)> {
    let mut genders = Vec::new();
    if config.n_male() > 0 {
        genders.push(Gender::Male);
    }
    if config.n_speakers > config.n_male() {
        genders.push(Gender::Female);
    }
    let sources: Vec<Match> = match config.track {
        Track::Audio => {
            let mut v = Vec::new();
            if config.afv_fraction < 1.0 {
                v.push(Match::Y);
            }
            if config.afv_fraction > 0.0 {
                v.push(Match::N);
            }
            v
        }
        Track::AudioVisual | Track::Visual => vec![Match::N],
    };
    let mut languages = vec![Match::Y];
    if config.track != Track::Visual && config.multilingual_fraction > 0.0 && config.languages.len() >= 2 {
        languages.push(Match::N);
    }
    let mut out = Vec::new();
    for &g in &genders {
        for &s in &sources {
            for &l in &languages {
                out.push((g, s, l));
            }
        }
    }
    out
}

fn audit(key: &TrialKey, config: &SynthConfig) -> Result<(), SynthError> {
    let mut present = BTreeSet::new();
    let mut nontarget_genders = BTreeSet::new();
    for r in key.records() {
        if r.is_target() {
            present.insert((r.gender, r.source_match, r.language_match));
        } else {
            nontarget_genders.insert(r.gender);
        }
    }
    for (g, s, l) in required_cells(config) {
        if config.track == Track::Visual {
            if !key.records().iter().any(|r| r.is_target() && r.gender == g) {
                return Err(SynthError::EmptyCell(format!("gender={g} has no target trials")));
            }
        } else if !present.contains(&(g, s, l)) {
            return Err(SynthError::EmptyCell(format!(
                "gender={g},source_match={s},language_match={l} has no target trials"
            )));
        }
        if !nontarget_genders.contains(&g) {
            return Err(SynthError::EmptyCell(format!(
                "gender={g} has no non-target trials (needs at least 2 speakers)"
            )));
        }
    }
    Ok(())
}

/// Builds the world for `config` and returns its audited trial key.
pub fn generate_key(config: &SynthConfig) -> Result<TrialKey, SynthError> {
    let key = World::build(config)?.key(config.track)?;
    audit(&key, config)?;
    Ok(key)
}

pub fn generate_enrollment(config: &SynthConfig) -> Result<Enrollment, SynthError> {
    Ok(World::build(config)?.enrollment(config.track))
}

impl World {
    pub(crate) fn audited_key(&self, config: &SynthConfig) -> Result<TrialKey, SynthError> {
        let key = self.key(config.track)?;
        audit(&key, config)?;
        Ok(key)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spread_counts() {
        for n in 1..12 {
            for m in 0..=n {
                assert_eq!((0..n).filter(|&j| spread(j, m, n)).count(), m);
            }
        }
    }

    #[test]
    fn dev_like_key_has_no_cross_gender_trials() {
        let config = SynthConfig {
            n_speakers: 20,
            male_fraction: 0.25,
            ..SynthConfig::default()
        };
        let world = World::build(&config).unwrap();
        assert_eq!(world.speakers.iter().filter(|s| s.gender == Gender::Male).count(), 5);
        let key = generate_key(&config).unwrap();
        let gender_of = |id: &str| {
            let spk = &id[..7];
            world.speakers.iter().find(|s| s.id == spk).unwrap().gender
        };
        for r in key.records() {
            assert_eq!(gender_of(&r.id.model_id), gender_of(&r.id.segment_id));
            assert_eq!(r.gender, gender_of(&r.id.model_id));
        }
    }

    #[test]
    fn single_language_single_source() {
        let config = SynthConfig {
            languages: vec!["english".into()],
            afv_fraction: 0.0,
            ..SynthConfig::default()
        };
        let key = generate_key(&config).unwrap();
        assert!(key
            .records()
            .iter()
            .all(|r| r.language_match == Match::Y && r.source_match == Match::Y));
    }

    #[test]
    fn lonely_gender_reported() {
        let config = SynthConfig {
            n_speakers: 10,
            male_fraction: 0.1,
            ..SynthConfig::default()
        };
        assert!(matches!(generate_key(&config), Err(SynthError::EmptyCell(_))));
    }

    #[test]
    fn record_invariants_hold() {
        for track in Track::ALL {
            let config = SynthConfig {
                track: *track,
                ..SynthConfig::default()
            };
            let key = generate_key(&config).unwrap();
            assert!(key.records().iter().all(|r| r.check().is_ok()));
            assert!(key.has_both_classes());
        }
    }
}
