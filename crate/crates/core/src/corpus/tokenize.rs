use unicode_segmentation::UnicodeSegmentation;

use crate::lexicon::FrequencyLexicon;

const HYPHENS: [&str; 3] = ["-", "\u{2010}", "\u{2011}"];
const APOSTROPHES: [char; 2] = ['\'', '\u{2019}'];
const MAX_HAN_WORD: usize = 16;

fn is_wordlike(s: &str) -> bool {
    s.chars().any(char::is_alphanumeric)
}

fn is_han(c: char) -> bool {
    matches!(c as u32,
        0x3400..=0x4DBF | 0x4E00..=0x9FFF | 0xF900..=0xFAFF | 0x20000..=0x2FFFF | 0x30000..=0x3134F)
}

/// Lowercased Unicode word tokens; punctuation-only segments are dropped.
///
/// With a lexicon, apostrophe and hyphen compounds are kept whole only when
/// the joined form is a lexicon entry; zh runs of Han characters are split by
/// greedy longest match against the lexicon.
pub fn tokenize(text: &str, language: &str, lexicon: Option<&FrequencyLexicon>) -> Vec<String> {
    let lower = text.to_lowercase();
    let segs: Vec<&str> = lower.split_word_bounds().collect();
    let mut out = Vec::new();
    let zh = language == "zh";
    let mut i = 0;
    while i < segs.len() {
        if zh && segs[i].chars().all(is_han) && !segs[i].is_empty() {
            let mut run = String::new();
            while i < segs.len() && !segs[i].is_empty() && segs[i].chars().all(is_han) {
                run.push_str(segs[i]);
                i += 1;
            }
            segment_han(&run, lexicon, &mut out);
            continue;
        }
        if !is_wordlike(segs[i]) {
            i += 1;
            continue;
        }
        // maximal hyphen-connected chain of words starting at i
        let mut chain = vec![segs[i]];
        let mut j = i;
        while j + 2 < segs.len() && HYPHENS.contains(&segs[j + 1]) && is_wordlike(segs[j + 2]) {
            chain.push(segs[j + 2]);
            j += 2;
        }
        i = j + 1;
        let mut k = 0;
        while k < chain.len() {
            let mut taken = 1;
            if let Some(lex) = lexicon {
                for m in (k + 2..=chain.len()).rev() {
                    if lex.contains(&chain[k..m].join("-")) {
                        taken = m - k;
                        break;
                    }
                }
            }
            if taken > 1 {
                out.push(chain[k..k + taken].join("-"));
            } else {
                push_word(chain[k], lexicon, &mut out);
            }
            k += taken;
        }
    }
    out
}

fn push_word(word: &str, lexicon: Option<&FrequencyLexicon>, out: &mut Vec<String>) {
    let has_apostrophe = word.contains(APOSTROPHES);
    match lexicon {
        Some(lex) if has_apostrophe && !lex.contains(word) => {
            out.extend(
                word.split(APOSTROPHES)
                    .filter(|p| is_wordlike(p))
                    .map(str::to_string),
            );
        }
        _ => out.push(word.to_string()),
    }
}

fn segment_han(run: &str, lexicon: Option<&FrequencyLexicon>, out: &mut Vec<String>) {
    let chars: Vec<char> = run.chars().collect();
    let max_len = lexicon.map_or(1, |l| l.max_word_chars().clamp(1, MAX_HAN_WORD));
    let mut i = 0;
    while i < chars.len() {
        let mut take = 1;
        if let Some(lex) = lexicon {
            for len in (2..=max_len.min(chars.len() - i)).rev() {
                let cand: String = chars[i..i + len].iter().collect();
                if lex.contains(&cand) {
                    take = len;
                    break;
                }
            }
        }
        out.push(chars[i..i + take].iter().collect());
        i += take;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lex(words: &[&str]) -> FrequencyLexicon {
        FrequencyLexicon::from_entries(
            "en",
            words
                .iter()
                .enumerate()
                .map(|(i, w)| (w.to_string(), 1000 - i as u64))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn basic_examples() {
        assert_eq!(tokenize("Hello, WORLD", "en", None), vec!["hello", "world"]);
        assert!(tokenize("", "en", None).is_empty());
        assert!(tokenize("?! ... 🙂", "en", None).is_empty());
        assert_eq!(tokenize("#Tag @user", "en", None), vec!["tag", "user"]);
    }

    #[test]
    fn apostrophe_policy_follows_lexicon() {
        let with = lex(&["don't", "stop"]);
        assert_eq!(
            tokenize("don't stop", "en", Some(&with)),
            vec!["don't", "stop"]
        );
        let without = lex(&["don", "t", "stop"]);
        assert_eq!(
            tokenize("don't stop", "en", Some(&without)),
            vec!["don", "t", "stop"]
        );
        assert_eq!(tokenize("Don’t", "en", Some(&with)), vec!["don", "t"]);
    }

    #[test]
    fn hyphen_policy_follows_lexicon() {
        let l = lex(&["well-known", "fact"]);
        assert_eq!(
            tokenize("a well-known fact", "en", Some(&l)),
            vec!["a", "well-known", "fact"]
        );
        assert_eq!(
            tokenize("a well-made fact", "en", Some(&l)),
            vec!["a", "well", "made", "fact"]
        );
        assert_eq!(
            tokenize("x-well-known", "en", Some(&l)),
            vec!["x", "well-known"]
        );
        assert_eq!(tokenize("well-known", "en", None), vec!["well", "known"]);
    }

    #[test]
    fn zh_greedy_longest_match() {
        let l = FrequencyLexicon::from_entries(
            "zh",
            vec![
                ("中国".into(), 10),
                ("中国人".into(), 5),
                ("人".into(), 4),
                ("很好".into(), 3),
            ],
        )
        .unwrap();
        assert_eq!(
            tokenize("中国人很好!", "zh", Some(&l)),
            vec!["中国人", "很好"]
        );
        assert_eq!(
            tokenize("中国人很好", "zh", None),
            vec!["中", "国", "人", "很", "好"]
        );
        assert_eq!(
            tokenize("我用Rust", "zh", Some(&l)),
            vec!["我", "用", "rust"]
        );
    }

    proptest! {
        #[test]
        fn stateless_across_posts(a in "[a-zA-Z ,.'-]{0,40}", b in "[a-zA-Z ,.'-]{0,40}") {
            let l = lex(&["it's", "a-b"]);
            let mut joined = tokenize(&a, "en", Some(&l));
            joined.extend(tokenize(&b, "en", Some(&l)));
            let mut together = tokenize(&format!("{a}\n{b}"), "en", Some(&l));
            joined.sort();
            together.sort();
            prop_assert_eq!(joined, together);
        }
    }
}
