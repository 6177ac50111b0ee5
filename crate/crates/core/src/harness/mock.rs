//! Deterministic offline clients for tests, demos, and dry runs.

use rand::seq::index::sample as index_sample;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::attribution::{builtin_profiles, ModelProfile};
use crate::harness::client::{GenerateError, Generation, GenerationParams, ProviderClient};
use crate::suppression::Condition;

/// An offline "model" that writes filler prose with exact artifact rates.
///
/// Output is a pure function of `(seed, prompt)`, so reruns and resumed
/// runs reproduce byte-identical samples. The word target is parsed back
/// out of the prompt; the condition is inferred from which suppression
/// sentences the prompt carries, and the mock obeys instructions
/// perfectly: the markdown ban empties the markdown rate, and the em-dash
/// ban empties the em rate.
///
/// Em dashes are emitted spaced (`word — word`), which leaves the word
/// count untouched; markdown features are emitted as bold wraps
/// (`**word**`), at most one per word, so rates above 1000/1k are capped.
/// Generation stops at `max_tokens` words: a target beyond that yields a
/// truncated result, mid-sentence, exactly `max_tokens` words long.
pub struct MockClient {
    target_em_per_1k: f64,
    target_md_per_1k: f64,
    seed: u64,
}

impl MockClient {
    pub fn new(target_em_per_1k: f64, target_md_per_1k: f64, seed: u64) -> MockClient {
        MockClient {
            target_em_per_1k: target_em_per_1k.max(0.0),
            target_md_per_1k: target_md_per_1k.max(0.0),
            seed,
        }
    }
}

impl ProviderClient for MockClient {
    fn generate(
        &self,
        prompt: &str,
        params: &GenerationParams,
    ) -> Result<Generation, GenerateError> {
        let condition = condition_from_prompt(prompt);
        let requested = words_from_prompt(prompt).unwrap_or(1000);
        let capacity = (params.max_tokens as usize).max(1);
        let words = requested.min(capacity);
        let truncated = requested > capacity;
        let em_target = match condition {
            Condition::EmSuppressed => 0,
            _ => (words as f64 * self.target_em_per_1k / 1000.0).round() as usize,
        };
        let md_target = match condition {
            Condition::Unconstrained => {
                (words as f64 * self.target_md_per_1k / 1000.0).round() as usize
            }
            _ => 0,
        };
        let mut rng = rng_for(self.seed, prompt);
        let text = filler_prose(words, em_target, md_target, truncated, &mut rng);
        Ok(Generation { text, truncated })
    }
}

/// Seeds a portable RNG from the pair (seed, prompt). Hashing goes through
/// SHA-256 because the std hasher is not stable across releases.
fn rng_for(seed: u64, prompt: &str) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(prompt.as_bytes());
    let digest = hasher.finalize();
    let mut first8 = [0u8; 8];
    first8.copy_from_slice(&digest[..8]);
    ChaCha8Rng::seed_from_u64(u64::from_le_bytes(first8))
}

/// Reads the condition off the prompt by which bans it contains.
fn condition_from_prompt(prompt: &str) -> Condition {
    if prompt.contains("Do not use em dashes.") {
        Condition::EmSuppressed
    } else if prompt.contains("Do not use any markdown formatting") {
        Condition::MdSuppressed
    } else {
        Condition::Unconstrained
    }
}

/// Parses `Write a {N}-word essay` back out of the prompt.
fn words_from_prompt(prompt: &str) -> Option<usize> {
    let rest = prompt.strip_prefix("Write a ")?;
    let digits: String = rest.chars().take_while(char::is_ascii_digit).collect();
    if digits.is_empty() || !rest[digits.len()..].starts_with("-word") {
        return None;
    }
    digits.parse().ok()
}

const VOCAB: [&str; 40] = [
    "the", "quiet", "harbor", "keeps", "its", "own", "time", "and", "light", "moves", "over",
    "stone", "walls", "while", "gulls", "trade", "places", "on", "worn", "pilings", "a",
    "ferry", "crosses", "before", "noon", "carrying", "letters", "crates", "of", "fruit",
    "slow", "news", "from", "other", "towns", "salt", "air", "settles", "into", "everything",
];

/// Builds prose with exactly `words` countable words, `em_count` spaced em
/// dashes, and `bold_count` bold-wrapped words.
fn filler_prose(
    words: usize,
    em_count: usize,
    bold_count: usize,
    truncated: bool,
    rng: &mut ChaCha8Rng,
) -> String {
    if words == 0 {
        return String::new();
    }
    // Lay out sentence boundaries first so dash gaps stay intra-sentence.
    let mut sentence_end = vec![false; words]; // true: word ends a sentence
    let mut i = 0usize;
    while i < words {
        let len = rng.gen_range(8..=14).min(words - i);
        i += len;
        sentence_end[i - 1] = true;
    }
    // Eligible em-dash gaps sit between two words of the same sentence.
    let gaps: Vec<usize> = (0..words.saturating_sub(1))
        .filter(|&g| !sentence_end[g])
        .collect();
    let mut dashes_at = vec![0usize; words.saturating_sub(1)];
    if !gaps.is_empty() && em_count > 0 {
        let base = em_count / gaps.len();
        let extra = em_count % gaps.len();
        for &g in &gaps {
            dashes_at[g] = base;
        }
        for idx in index_sample(rng, gaps.len(), extra) {
            dashes_at[gaps[idx]] += 1;
        }
    }
    let mut bold_at = vec![false; words];
    for idx in index_sample(rng, words, bold_count.min(words)) {
        bold_at[idx] = true;
    }

    let mut out = String::new();
    let mut sentences_in_paragraph = 0usize;
    let mut paragraph_target = rng.gen_range(3..=5);
    let mut start_of_sentence = true;
    for w in 0..words {
        let mut word = (*VOCAB
            .get(rng.gen_range(0..VOCAB.len()))
            .expect("vocab index in range"))
        .to_owned();
        if start_of_sentence {
            let mut chars = word.chars();
            if let Some(first) = chars.next() {
                word = first.to_uppercase().collect::<String>() + chars.as_str();
            }
            start_of_sentence = false;
        }
        if bold_at[w] {
            word = format!("**{word}**");
        }
        out.push_str(&word);
        let last_word = w + 1 == words;
        if sentence_end[w] {
            if !(truncated && last_word) {
                out.push('.');
            }
            start_of_sentence = true;
            sentences_in_paragraph += 1;
            if last_word {
                continue;
            }
            if sentences_in_paragraph >= paragraph_target {
                out.push_str("\n\n");
                sentences_in_paragraph = 0;
                paragraph_target = rng.gen_range(3..=5);
            } else {
                out.push(' ');
            }
        } else if !last_word {
            for _ in 0..dashes_at[w] {
                out.push_str(" \u{2014}");
            }
            out.push(' ');
        }
    }
    out
}

/// A mock that impersonates whichever model each call names, using the
/// builtin profile table for target rates: the unconstrained em rate under
/// condition A, the constrained rate under condition B, and the
/// unconstrained markdown rate. Models not in the table fall back to
/// middle-of-the-road rates.
pub struct ProfileMockClient {
    seed: u64,
    profiles: Vec<ModelProfile>,
}

const FALLBACK_EM_PER_1K: f64 = 5.0;
const FALLBACK_MD_PER_1K: f64 = 2.0;

impl ProfileMockClient {
    pub fn new(seed: u64) -> ProfileMockClient {
        ProfileMockClient {
            seed,
            profiles: builtin_profiles(),
        }
    }

    fn rates_for(&self, model_name: &str, condition: Condition) -> (f64, f64) {
        let profile = self
            .profiles
            .iter()
            .find(|p| p.model_name.eq_ignore_ascii_case(model_name));
        let em = profile
            .and_then(|p| match condition {
                Condition::Unconstrained => p.em_unconstrained,
                Condition::MdSuppressed | Condition::EmSuppressed => p.em_constrained,
            })
            .unwrap_or(FALLBACK_EM_PER_1K);
        let md = profile
            .and_then(|p| p.md_unconstrained)
            .unwrap_or(FALLBACK_MD_PER_1K);
        (em, md)
    }
}

impl ProviderClient for ProfileMockClient {
    fn generate(
        &self,
        prompt: &str,
        params: &GenerationParams,
    ) -> Result<Generation, GenerateError> {
        let condition = condition_from_prompt(prompt);
        let (em, md) = self.rates_for(&params.model_name, condition);
        MockClient::new(em, md, self.seed).generate(prompt, params)
    }
}
