/// Tokens per whitespace-delimited unit, in tenths (1.3).
pub const TOKENS_PER_WORD_TENTHS: usize = 13;

/// `ceil(words * 1.3)` in integer arithmetic.
pub fn tokens_for_words(words: usize) -> usize {
    (words * TOKENS_PER_WORD_TENTHS).div_ceil(10)
}

/// Fallback token count for endpoints that report no usage: whitespace
/// units scaled by 1.3 to account for punctuation and sub-word splits,
/// rounded up.
pub fn estimate_tokens(text: &str) -> usize {
    tokens_for_words(text.split_whitespace().count())
}
