use std::collections::BTreeMap;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_distr::{Beta, Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::domain::{AnxietyRange, ClassId, Cohort, ExamSeries, PeerJudgment, StudentId, StudentRecord};
use crate::error::{Error, Result};
use crate::rng::{Purpose, StreamKey, StreamRng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum AnxietyDistribution {
    Uniform,
    Beta { a: f64, b: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticCohortSpec {
    pub n_classes: usize,
    pub class_size_range: [usize; 2],
    /// Mean reported out-degree of students who report any friend.
    pub friend_degree_mean: f64,
    /// Probability that a tie is drawn from the same within-class ability tercile.
    pub homophily: f64,
    /// Std of the per-epoch random-walk step of latent ability.
    pub ability_drift: f64,
    pub anxiety_distribution: AnxietyDistribution,
    pub friendless_fraction: f64,
    pub epochs: usize,
    /// Std of per-class raw-score offsets, in units of the ability scale.
    pub class_offset_sd: f64,
    pub judgments_per_student: usize,
    pub anxiety_range: AnxietyRange,
}

impl Default for SyntheticCohortSpec {
    fn default() -> Self {
        Self {
            n_classes: 12,
            class_size_range: [30, 45],
            friend_degree_mean: 4.0,
            homophily: 0.6,
            ability_drift: 0.25,
            anxiety_distribution: AnxietyDistribution::Uniform,
            friendless_fraction: 0.13,
            epochs: 6,
            class_offset_sd: 0.5,
            judgments_per_student: 2,
            anxiety_range: AnxietyRange::default(),
        }
    }
}

impl SyntheticCohortSpec {
    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.class_size_range;
        if self.n_classes == 0 || lo < 4 || lo > hi {
            return Err(Error::Config(format!(
                "need n_classes >= 1 and 4 <= min <= max class size, got {} and {:?}",
                self.n_classes, self.class_size_range
            )));
        }
        if !(0.0..=1.0).contains(&self.homophily) || !(0.0..1.0).contains(&self.friendless_fraction) {
            return Err(Error::Config(
                "homophily must be in [0, 1] and friendless_fraction in [0, 1)".into(),
            ));
        }
        if !(self.friend_degree_mean >= 1.0) || !(self.ability_drift >= 0.0) || !(self.class_offset_sd >= 0.0) {
            return Err(Error::Config(
                "friend_degree_mean must be >= 1, ability_drift and class_offset_sd >= 0".into(),
            ));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if let AnxietyDistribution::Beta { a, b } = self.anxiety_distribution {
            if !(a > 0.0 && b > 0.0) {
                return Err(Error::Config("beta parameters must be > 0".into()));
            }
        }
        Ok(())
    }
}

/// Generated data plus the latent per-student ability at generation time.
#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub cohort: Cohort,
    pub scores: ExamSeries,
    pub ability: BTreeMap<StudentId, f64>,
}

/// Ability tercile (0, 1, 2) of each member by within-class rank.
pub fn ability_terciles(abilities: &[f64]) -> Vec<usize> {
    let n = abilities.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| abilities[a].total_cmp(&abilities[b]).then(a.cmp(&b)));
    let mut out = vec![0; n];
    for (rank, &i) in order.iter().enumerate() {
        out[i] = rank * 3 / n;
    }
    out
}

fn rng(seed: u64, extra: u64) -> StreamRng {
    StreamKey::new(Purpose::Synthetic).extra(extra).stream(seed)
}

/// Deterministic cohort and exam series. Ties stay within classes; a tie
/// is drawn from the owner's ability tercile with probability `homophily`
/// and from the whole class otherwise.
pub fn generate_synthetic(spec: &SyntheticCohortSpec, seed: u64) -> Result<SyntheticData> {
    spec.validate()?;
    let mut r = rng(seed, 0);
    let std_normal = Normal::new(0.0, 1.0).expect("valid normal");
    let [lo, hi] = spec.class_size_range;

    let mut students = Vec::new();
    let mut ability = BTreeMap::new();
    let mut offsets = Vec::new();
    let mut class_of = Vec::new();
    for c in 0..spec.n_classes {
        let size = r.random_range(lo..=hi);
        offsets.push(spec.class_offset_sd * std_normal.sample(&mut r));
        let class_id = ClassId(format!("C{:02}", c + 1));
        for _ in 0..size {
            let id = StudentId(students.len() as u32 + 1);
            ability.insert(id, std_normal.sample(&mut r));
            let anxiety = match spec.anxiety_distribution {
                AnxietyDistribution::Uniform => r.random::<f64>(),
                AnxietyDistribution::Beta { a, b } => Beta::new(a, b).expect("validated").sample(&mut r),
            };
            let range = spec.anxiety_range;
            students.push(StudentRecord {
                id,
                class_id: class_id.clone(),
                friends: Vec::new(),
                anxiety_raw: (range.lo + anxiety * (range.hi - range.lo)).clamp(range.lo, range.hi),
                peer_judgments: Vec::new(),
            });
            class_of.push(c);
        }
    }

    let n = students.len();
    let friendless_count = (spec.friendless_fraction * n as f64).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut r);
    let mut friendless = vec![false; n];
    for &i in &order[..friendless_count] {
        friendless[i] = true;
    }

    let mut members: Vec<Vec<usize>> = vec![Vec::new(); spec.n_classes];
    for (i, &c) in class_of.iter().enumerate() {
        members[c].push(i);
    }
    let extra_degree = Poisson::new(spec.friend_degree_mean - 1.0).ok();
    for class in &members {
        let abil: Vec<f64> = class.iter().map(|&i| ability[&students[i].id]).collect();
        let tercile = ability_terciles(&abil);
        for (pos, &i) in class.iter().enumerate() {
            if friendless[i] {
                continue;
            }
            let same: Vec<usize> = (0..class.len())
                .filter(|&q| q != pos && tercile[q] == tercile[pos])
                .collect();
            let any: Vec<usize> = (0..class.len()).filter(|&q| q != pos).collect();
            let extra = extra_degree.map_or(0.0, |d| d.sample(&mut r)) as usize;
            let degree = (1 + extra).min(any.len());
            let mut picked = Vec::with_capacity(degree);
            let mut attempts = 0;
            while picked.len() < degree && attempts < 50 * degree {
                attempts += 1;
                let pool = if r.random::<f64>() < spec.homophily {
                    &same
                } else {
                    &any
                };
                if let Some(&q) = pool.as_slice().choose(&mut r) {
                    if !picked.contains(&q) {
                        picked.push(q);
                    }
                }
            }
            if picked.is_empty() {
                // tercile of one: fall back to any classmate
                picked.push(*any.as_slice().choose(&mut r).expect("classes have >= 4 members"));
            }
            picked.sort_unstable();
            students[i].friends = picked.iter().map(|&q| students[class[q]].id).collect();
        }
        for &i in class {
            if friendless[i] {
                continue;
            }
            let others: Vec<usize> = class.iter().copied().filter(|&q| q != i).collect();
            let mut targets: Vec<usize> = others
                .choose_multiple(&mut r, spec.judgments_per_student.min(others.len()))
                .copied()
                .collect();
            targets.sort_unstable();
            students[i].peer_judgments = targets
                .into_iter()
                .map(|q| PeerJudgment {
                    target: students[q].id,
                    valence: (r.random::<f64>() * 2.0 - 1.0).clamp(-1.0, 1.0),
                })
                .collect();
        }
    }

    let mut scores = BTreeMap::new();
    for (i, s) in students.iter().enumerate() {
        let mut latent = ability[&s.id];
        let mut row = Vec::with_capacity(spec.epochs);
        for t in 0..spec.epochs {
            if t > 0 {
                latent += spec.ability_drift * std_normal.sample(&mut r);
            }
            let raw = 70.0 + 10.0 * (offsets[class_of[i]] + latent);
            // two decimals keeps CSV output short and exact on reload
            row.push((raw * 100.0).round() / 100.0);
        }
        scores.insert(s.id, row);
    }

    Ok(SyntheticData {
        cohort: Cohort::new(students, spec.anxiety_range)?,
        scores: ExamSeries::new(spec.epochs, scores)?,
        ability,
    })
}
