use super::RewardFunction;
use crate::error::Result;
use crate::synthdata::Token;

/// Levenshtein distance over tokens with unit costs.
pub fn token_edit_distance(a: &[Token], b: &[Token]) -> usize {
    strsim::generic_levenshtein(&a.to_vec(), &b.to_vec())
}

/// `1 − ED / max(|hyp|, |ref|)`; 1 for two empty sequences.
pub fn edit_similarity(hyp: &[Token], reference: &[Token]) -> f64 {
    let longest = hyp.len().max(reference.len());
    if longest == 0 {
        return 1.0;
    }
    1.0 - token_edit_distance(hyp, reference) as f64 / longest as f64
}

#[derive(Debug, Clone, Default)]
pub struct EditSimilarity;

impl RewardFunction for EditSimilarity {
    fn name(&self) -> &str {
        "edit_sim"
    }

    fn evaluate(&self, hypothesis: &[Token], reference: &[Token]) -> Result<f64> {
        Ok(edit_similarity(hypothesis, reference))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_cases() {
        assert_eq!(token_edit_distance(&[4, 5, 6], &[4, 5, 6]), 0);
        assert_eq!(token_edit_distance(&[], &[4, 5]), 2);
        assert_eq!(token_edit_distance(&[4, 5, 6], &[4, 9, 6]), 1);
        assert_eq!(edit_similarity(&[4, 5], &[4, 6]), 0.5);
    }
}
