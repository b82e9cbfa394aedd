use std::collections::HashSet;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use super::stopwords::ENGLISH_STOPWORDS;
use super::{normalize_word, word_count, words, MultimodalRecord};

/// Admission rules for incoming posts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterPolicy {
    pub min_words: usize,
    pub require_image: bool,
    pub reject_retweets: bool,
    pub english_stopword_ratio_min: f64,
}

impl Default for FilterPolicy {
    fn default() -> Self {
        FilterPolicy {
            min_words: 5,
            require_image: true,
            reject_retweets: true,
            english_stopword_ratio_min: 0.12,
        }
    }
}

impl FilterPolicy {
    /// Accepts every record.
    pub fn permissive() -> Self {
        FilterPolicy {
            min_words: 0,
            require_image: false,
            reject_retweets: false,
            english_stopword_ratio_min: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.min_words < 1 {
            return Err("filter.min_words must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.english_stopword_ratio_min) {
            return Err("filter.english_stopword_ratio_min must lie in [0, 1]".into());
        }
        Ok(())
    }
}

/// Why a record was turned away. Checked in declaration order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rejection {
    TooFewWords,
    NotEnglish,
    NoImage,
    Retweet,
}

/// Pluggable language test applied to the record text.
pub trait LanguageCheck {
    fn is_english(&self, text: &str) -> bool;
}

/// Fraction of words found in a built-in English stopword list.
#[derive(Debug, Clone, Copy)]
pub struct StopwordRatio {
    pub min_ratio: f64,
}

fn stopword_set() -> &'static HashSet<&'static str> {
    static SET: OnceLock<HashSet<&'static str>> = OnceLock::new();
    SET.get_or_init(|| ENGLISH_STOPWORDS.iter().copied().collect())
}

impl StopwordRatio {
    pub fn ratio(text: &str) -> f64 {
        let set = stopword_set();
        let (mut total, mut hits) = (0usize, 0usize);
        for w in words(text) {
            total += 1;
            if set.contains(normalize_word(w).as_str()) {
                hits += 1;
            }
        }
        if total == 0 {
            0.0
        } else {
            hits as f64 / total as f64
        }
    }
}

impl LanguageCheck for StopwordRatio {
    fn is_english(&self, text: &str) -> bool {
        Self::ratio(text) >= self.min_ratio
    }
}

/// Applies `policy` with a custom language check.
pub fn admit_with(
    record: &MultimodalRecord,
    policy: &FilterPolicy,
    language: &dyn LanguageCheck,
) -> Result<(), Rejection> {
    if word_count(&record.text) < policy.min_words {
        return Err(Rejection::TooFewWords);
    }
    if !language.is_english(&record.text) {
        return Err(Rejection::NotEnglish);
    }
    if policy.require_image && record.images.is_empty() {
        return Err(Rejection::NoImage);
    }
    if policy.reject_retweets && record.is_retweet {
        return Err(Rejection::Retweet);
    }
    Ok(())
}

/// True iff the record passes every rule of `policy`, using the stopword
/// ratio as the English check.
pub fn admit(record: &MultimodalRecord, policy: &FilterPolicy) -> bool {
    let language = StopwordRatio {
        min_ratio: policy.english_stopword_ratio_min,
    };
    admit_with(record, policy, &language).is_ok()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::ImageItem;
    use proptest::prelude::*;

    fn post(text: &str, images: usize, is_retweet: bool) -> MultimodalRecord {
        MultimodalRecord {
            id: "x".into(),
            text: text.into(),
            is_retweet,
            created_at: 0,
            images: (0..images)
                .map(|i| ImageItem::new(format!("i{i}"), vec![1.0, 0.0]))
                .collect(),
        }
    }

    #[test]
    fn short_text_is_rejected() {
        assert!(!admit(&post("nice day", 1, false), &FilterPolicy::default()));
    }

    #[test]
    fn stopword_rich_sentence_is_admitted() {
        assert!(admit(&post("this is a very good day", 1, false), &FilterPolicy::default()));
    }

    #[test]
    fn retweets_and_imageless_posts_are_rejected() {
        let policy = FilterPolicy::default();
        assert!(!admit(&post("this is a very good day", 1, true), &policy));
        assert!(!admit(&post("this is a very good day", 0, false), &policy));
    }

    #[test]
    fn non_english_text_is_rejected() {
        let r = post("questa giornata davvero molto bella oggi", 1, false);
        let language = StopwordRatio { min_ratio: 0.12 };
        assert_eq!(
            admit_with(&r, &FilterPolicy::default(), &language),
            Err(Rejection::NotEnglish)
        );
    }

    #[test]
    fn punctuation_does_not_hide_stopwords() {
        assert!((StopwordRatio::ratio("The, cat! IS. here?") - 0.75).abs() < 1e-12);
    }

    #[test]
    fn custom_language_check_is_used() {
        struct Never;
        impl LanguageCheck for Never {
            fn is_english(&self, _: &str) -> bool {
                false
            }
        }
        let r = post("this is a very good day", 1, false);
        assert_eq!(
            admit_with(&r, &FilterPolicy::default(), &Never),
            Err(Rejection::NotEnglish)
        );
    }

    #[test]
    fn default_policy_is_valid_and_zero_words_is_not() {
        assert!(FilterPolicy::default().validate().is_ok());
        assert!(FilterPolicy::permissive().validate().is_err());
    }

    proptest! {
        #[test]
        fn permissive_policy_admits_everything(
            text in ".{0,60}",
            images in 0usize..3,
            rt in any::<bool>(),
        ) {
            prop_assert!(admit(&post(&text, images, rt), &FilterPolicy::permissive()));
        }

        #[test]
        fn admit_is_deterministic(text in "[a-z ]{0,60}", images in 0usize..3, rt in any::<bool>()) {
            let r = post(&text, images, rt);
            let policy = FilterPolicy::default();
            prop_assert_eq!(admit(&r, &policy), admit(&r.clone(), &policy));
        }
    }
}
