//! Nearest-profile attribution: which model does a text's dash and
//! markdown behavior look like?
//!
//! Profiles carry up to four features — em rate and markdown-feature rate,
//! each under unconstrained and constrained prompting. Distances are
//! z-scored per feature so the wide-ranging em column cannot drown out the
//! narrow markdown ones, then combined root-mean-square over whichever
//! features both sides actually have. This is a similarity ranking, not an
//! identification: scores say "closest", never "written by".

use std::fs;
use std::path::Path;
use std::sync::LazyLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::suppression::Condition;

/// Measured rates for one model (or pseudo-model, like the pooled human
/// baseline). Absent features simply drop out of distance comparisons.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelProfile {
    pub model_name: String,
    pub provider: String,
    pub em_unconstrained: Option<f64>,
    pub em_constrained: Option<f64>,
    pub md_unconstrained: Option<f64>,
    pub md_constrained: Option<f64>,
}

impl ModelProfile {
    fn feature(&self, f: Feature) -> Option<f64> {
        match f {
            Feature::EmUnconstrained => self.em_unconstrained,
            Feature::EmConstrained => self.em_constrained,
            Feature::MdUnconstrained => self.md_unconstrained,
            Feature::MdConstrained => self.md_constrained,
        }
    }

    fn is_complete(&self) -> bool {
        Feature::ALL.iter().all(|f| self.feature(*f).is_some())
    }
}

/// The rates measured from a query text, already slotted into profile
/// columns. Use [`QueryMetrics::from_measured`] to do the slotting.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct QueryMetrics {
    pub em_unconstrained: Option<f64>,
    pub em_constrained: Option<f64>,
    pub md_unconstrained: Option<f64>,
    pub md_constrained: Option<f64>,
}

impl QueryMetrics {
    /// Slots measured rates by collection condition. A known condition maps
    /// rates onto that condition's columns (both suppressed conditions are
    /// "constrained"); an unknown condition fills both columns with the
    /// same measurement, letting either column match.
    pub fn from_measured(
        em_per_1k: f64,
        md_per_1k: Option<f64>,
        condition: Option<Condition>,
    ) -> QueryMetrics {
        let mut q = QueryMetrics::default();
        let (unconstrained, constrained) = match condition {
            Some(Condition::Unconstrained) => (true, false),
            Some(Condition::MdSuppressed) | Some(Condition::EmSuppressed) => (false, true),
            None => (true, true),
        };
        if unconstrained {
            q.em_unconstrained = Some(em_per_1k);
            q.md_unconstrained = md_per_1k;
        }
        if constrained {
            q.em_constrained = Some(em_per_1k);
            q.md_constrained = md_per_1k;
        }
        q
    }

    fn feature(&self, f: Feature) -> Option<f64> {
        match f {
            Feature::EmUnconstrained => self.em_unconstrained,
            Feature::EmConstrained => self.em_constrained,
            Feature::MdUnconstrained => self.md_unconstrained,
            Feature::MdConstrained => self.md_constrained,
        }
    }
}

impl From<&ModelProfile> for QueryMetrics {
    fn from(p: &ModelProfile) -> QueryMetrics {
        QueryMetrics {
            em_unconstrained: p.em_unconstrained,
            em_constrained: p.em_constrained,
            md_unconstrained: p.md_unconstrained,
            md_constrained: p.md_constrained,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Feature {
    EmUnconstrained,
    EmConstrained,
    MdUnconstrained,
    MdConstrained,
}

impl Feature {
    const ALL: [Feature; 4] = [
        Feature::EmUnconstrained,
        Feature::EmConstrained,
        Feature::MdUnconstrained,
        Feature::MdConstrained,
    ];

    fn index(self) -> usize {
        match self {
            Feature::EmUnconstrained => 0,
            Feature::EmConstrained => 1,
            Feature::MdUnconstrained => 2,
            Feature::MdConstrained => 3,
        }
    }
}

/// Per-feature population spread used for z-scoring. Computed only over
/// profiles that carry all four features, so partial pseudo-profiles never
/// skew the scale. A zero spread falls back to unscaled differences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureStats {
    sd: [f64; 4],
}

/// Population standard deviation per feature over the complete profiles in
/// `profiles`. With no complete rows every spread is zero and distances
/// degrade to raw differences.
pub fn feature_stats(profiles: &[ModelProfile]) -> FeatureStats {
    let complete: Vec<&ModelProfile> = profiles.iter().filter(|p| p.is_complete()).collect();
    let mut sd = [0.0f64; 4];
    if complete.is_empty() {
        return FeatureStats { sd };
    }
    let n = complete.len() as f64;
    for f in Feature::ALL {
        let values: Vec<f64> = complete
            .iter()
            .map(|p| p.feature(f).expect("complete profile"))
            .collect();
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        sd[f.index()] = var.sqrt();
    }
    FeatureStats { sd }
}

static BUILTIN: LazyLock<Vec<ModelProfile>> = LazyLock::new(|| {
    parse_profiles_csv(include_str!("attribution/builtin_profiles.csv"))
        .expect("builtin profile table parses")
});

static BUILTIN_STATS: LazyLock<FeatureStats> = LazyLock::new(|| feature_stats(&BUILTIN));

/// The shipped profile table: twelve instruction-tuned models measured
/// under the two-condition protocol (roughly 10,000 words per cell), plus a
/// pooled human-baseline pseudo-profile with no markdown columns. The
/// human row uses its one pooled em rate for both conditions, since human
/// writing was not collected under prompting conditions at all.
pub fn builtin_profiles() -> Vec<ModelProfile> {
    BUILTIN.clone()
}

fn parse_profiles_csv(data: &str) -> Result<Vec<ModelProfile>> {
    let mut reader = csv::Reader::from_reader(data.as_bytes());
    let mut profiles = Vec::new();
    for record in reader.deserialize() {
        let profile: ModelProfile = record.map_err(|e| Error::Malformed {
            what: "profile csv".to_owned(),
            detail: e.to_string(),
        })?;
        if profile.model_name.trim().is_empty() {
            return Err(Error::Validation("profile with empty model_name".to_owned()));
        }
        profiles.push(profile);
    }
    if profiles.is_empty() {
        return Err(Error::EmptySet("profile csv".to_owned()));
    }
    Ok(profiles)
}

/// Loads a profile table from a CSV file with the same header as the
/// builtin table. Empty cells mean the feature was not measured.
pub fn load_profiles(path: impl AsRef<Path>) -> Result<Vec<ModelProfile>> {
    let path = path.as_ref();
    let data = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_profiles_csv(&data)
}

/// Serializes profiles back to the canonical CSV form.
pub fn profiles_to_csv(profiles: &[ModelProfile]) -> Result<String> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for profile in profiles {
        writer.serialize(profile).map_err(|e| Error::Malformed {
            what: "profile csv".to_owned(),
            detail: e.to_string(),
        })?;
    }
    let bytes = writer.into_inner().map_err(|e| Error::Malformed {
        what: "profile csv".to_owned(),
        detail: e.to_string(),
    })?;
    Ok(String::from_utf8(bytes).expect("csv is utf-8"))
}

fn allowed_features(known_condition: Option<Condition>) -> &'static [Feature] {
    match known_condition {
        None => &Feature::ALL,
        Some(Condition::Unconstrained) => {
            &[Feature::EmUnconstrained, Feature::MdUnconstrained]
        }
        Some(Condition::MdSuppressed) | Some(Condition::EmSuppressed) => {
            &[Feature::EmConstrained, Feature::MdConstrained]
        }
    }
}

/// Distance under an explicit feature scale: root-mean-square of z-score
/// differences over the features present on both sides (restricted to the
/// known condition's columns, if any). Zero exactly when query and profile
/// agree on every compared feature; errors when nothing is comparable.
pub fn distance_with_stats(
    query: &QueryMetrics,
    profile: &ModelProfile,
    stats: &FeatureStats,
    known_condition: Option<Condition>,
) -> Result<f64> {
    let mut sum = 0.0f64;
    let mut n = 0usize;
    for f in allowed_features(known_condition) {
        let (Some(q), Some(p)) = (query.feature(*f), profile.feature(*f)) else {
            continue;
        };
        let sd = stats.sd[f.index()];
        let diff = if sd > 0.0 { (q - p) / sd } else { q - p };
        sum += diff * diff;
        n += 1;
    }
    if n == 0 {
        return Err(Error::Validation(format!(
            "no usable features shared with profile '{}'",
            profile.model_name
        )));
    }
    Ok((sum / n as f64).sqrt())
}

/// Distance against the builtin feature scale. Use this when comparing to
/// builtin profiles; [`attribute`] scales custom tables over themselves.
pub fn distance(
    query: &QueryMetrics,
    profile: &ModelProfile,
    known_condition: Option<Condition>,
) -> Result<f64> {
    distance_with_stats(query, profile, &BUILTIN_STATS, known_condition)
}

/// One entry in an attribution ranking.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedProfile {
    pub model_name: String,
    pub provider: String,
    pub distance: f64,
    /// Softmax of negated distance over the whole ranking: comparable
    /// across queries, but still a similarity weight, not a probability of
    /// authorship.
    pub normalized_score: f64,
}

/// A full ranking plus the query that produced it. `ties` lists groups of
/// models whose distances are exactly equal (bitwise f64 equality), in
/// ranking order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionResult {
    pub query: QueryMetrics,
    pub ranked: Vec<RankedProfile>,
    pub ties: Vec<Vec<String>>,
}

/// Ranks every profile by distance to the query, nearest first. Profiles
/// sharing no usable feature with the query are an error (a ranking that
/// silently skipped rows would be misleading). Ordering among exact ties
/// follows the profile table.
pub fn attribute(
    query: &QueryMetrics,
    profiles: &[ModelProfile],
    known_condition: Option<Condition>,
) -> Result<AttributionResult> {
    if profiles.is_empty() {
        return Err(Error::EmptySet("profile table".to_owned()));
    }
    let stats = feature_stats(profiles);
    let mut ranked: Vec<RankedProfile> = Vec::with_capacity(profiles.len());
    for profile in profiles {
        let d = distance_with_stats(query, profile, &stats, known_condition)?;
        ranked.push(RankedProfile {
            model_name: profile.model_name.clone(),
            provider: profile.provider.clone(),
            distance: d,
            normalized_score: 0.0,
        });
    }
    ranked.sort_by(|a, b| a.distance.total_cmp(&b.distance));
    let weights: Vec<f64> = ranked.iter().map(|r| (-r.distance).exp()).collect();
    let total: f64 = weights.iter().sum();
    for (entry, weight) in ranked.iter_mut().zip(&weights) {
        entry.normalized_score = weight / total;
    }
    let mut ties: Vec<Vec<String>> = Vec::new();
    let mut i = 0usize;
    while i < ranked.len() {
        let mut j = i + 1;
        while j < ranked.len() && ranked[j].distance == ranked[i].distance {
            j += 1;
        }
        if j - i > 1 {
            ties.push(ranked[i..j].iter().map(|r| r.model_name.clone()).collect());
        }
        i = j;
    }
    Ok(AttributionResult {
        query: *query,
        ranked,
        ties,
    })
}

/// How much of a model's em-dash habit survives constrained prompting:
/// constrained rate / unconstrained rate. `None` when there is no
/// unconstrained baseline to divide by.
pub fn suppression_resistance(profile: &ModelProfile) -> Option<f64> {
    match (profile.em_unconstrained, profile.em_constrained) {
        (Some(u), Some(c)) if u > 0.0 => Some(c / u),
        _ => None,
    }
}
