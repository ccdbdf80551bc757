//! Whitespace + punctuation tokenizer with exact byte offsets, and the
//! stable open-vocabulary token hash.

use crate::domain::Document;

/// Split on whitespace runs, then peel leading/trailing ASCII
/// punctuation characters into their own tokens. Offsets are
/// end-exclusive byte offsets into the original text. Deterministic;
/// empty text yields zero tokens.
pub fn tokenize(doc_id: &str, text: &str) -> Document {
    let mut tokens = Vec::new();
    let mut offsets = Vec::new();

    let bytes = text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        // skip whitespace run
        let mut it = text[i..].char_indices();
        let (_, ch) = it.next().unwrap();
        if ch.is_whitespace() {
            i += ch.len_utf8();
            continue;
        }
        // word = run of non-whitespace
        let start = i;
        let mut end = i;
        for (off, ch) in text[i..].char_indices() {
            if ch.is_whitespace() {
                break;
            }
            end = i + off + ch.len_utf8();
        }
        split_word(text, start, end, &mut tokens, &mut offsets);
        i = end;
    }

    Document {
        doc_id: doc_id.to_string(),
        text: text.to_string(),
        tokens,
        token_char_offsets: offsets,
        gold_clusters: None,
    }
}

fn split_word(
    text: &str,
    mut start: usize,
    mut end: usize,
    tokens: &mut Vec<String>,
    offsets: &mut Vec<(usize, usize)>,
) {
    let mut leading: Vec<(usize, usize)> = Vec::new();
    let mut trailing: Vec<(usize, usize)> = Vec::new();

    while start < end {
        let ch = text[start..].chars().next().unwrap();
        if ch.is_ascii_punctuation() {
            leading.push((start, start + 1));
            start += 1;
        } else {
            break;
        }
    }
    while end > start {
        let ch = text[..end].chars().next_back().unwrap();
        if ch.is_ascii_punctuation() {
            trailing.push((end - 1, end));
            end -= 1;
        } else {
            break;
        }
    }

    for (s, e) in leading {
        tokens.push(text[s..e].to_string());
        offsets.push((s, e));
    }
    if start < end {
        tokens.push(text[start..end].to_string());
        offsets.push((start, end));
    }
    for (s, e) in trailing.into_iter().rev() {
        tokens.push(text[s..e].to_string());
        offsets.push((s, e));
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// Stable token id: FNV-1a 64-bit over the token's UTF-8 bytes, reduced
/// modulo the vocabulary size. Identical across runs and platforms.
pub fn token_id(token: &str, vocab_size: usize) -> usize {
    debug_assert!(vocab_size > 0);
    let mut h = FNV_OFFSET;
    for b in token.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    (h % vocab_size as u64) as usize
}
