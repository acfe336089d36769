use unicode_normalization::UnicodeNormalization;
use unicode_segmentation::UnicodeSegmentation;

/// Scripts written without spaces; each of their characters is a token.
fn is_unspaced_script(c: char) -> bool {
    matches!(c as u32,
        0x3005..=0x3007          // ideographic iteration/closing marks, zero
        | 0x3040..=0x309F        // hiragana
        | 0x30A0..=0x30FF        // katakana
        | 0x31F0..=0x31FF        // katakana phonetic extensions
        | 0x3400..=0x4DBF        // CJK extension A
        | 0x4E00..=0x9FFF        // CJK unified ideographs
        | 0xF900..=0xFAFF        // CJK compatibility ideographs
        | 0x1100..=0x11FF        // hangul jamo
        | 0x3130..=0x318F        // hangul compatibility jamo
        | 0xA960..=0xA97F
        | 0xAC00..=0xD7AF        // hangul syllables
        | 0xD7B0..=0xD7FF
        | 0x20000..=0x2FA1F      // CJK extensions B-F, compatibility supplement
        | 0x30000..=0x323AF)
}

/// NFKC-normalizes, lowercases and splits `text` at Unicode word boundaries.
/// Han, kana and Hangul runs become one token per character; segments with
/// no alphanumeric character are dropped.
pub fn tokenize(text: &str) -> Vec<String> {
    let folded: String = text.nfkc().collect::<String>().to_lowercase();
    let mut tokens = Vec::new();
    for word in folded.unicode_words() {
        if !word.chars().any(is_unspaced_script) {
            tokens.push(word.to_owned());
            continue;
        }
        let mut run = String::new();
        for c in word.chars() {
            if is_unspaced_script(c) {
                if !run.is_empty() {
                    tokens.push(std::mem::take(&mut run));
                }
                tokens.push(c.to_string());
            } else {
                run.push(c);
            }
        }
        if !run.is_empty() {
            tokens.push(run);
        }
    }
    tokens
}
