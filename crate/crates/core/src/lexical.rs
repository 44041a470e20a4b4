//! Token-overlap scoring used when no model is available.

use std::collections::HashSet;

/// Lowercased maximal runs of alphanumeric characters.
pub fn word_set(text: &str) -> HashSet<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// `|W(text) ∩ reference| / |reference|`, or 0 when `reference` is empty.
pub fn overlap_score(text: &str, reference: &HashSet<String>) -> f64 {
    if reference.is_empty() {
        return 0.0;
    }
    let words = word_set(text);
    let shared = reference.iter().filter(|w| words.contains(*w)).count();
    shared as f64 / reference.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenizes_on_non_alphanumerics() {
        let w = word_set("Launch-Vehicle, ORBIT  orbit 40Hz!");
        let mut v: Vec<_> = w.into_iter().collect();
        v.sort();
        assert_eq!(v, ["40hz", "launch", "orbit", "vehicle"]);
    }

    #[test]
    fn overlap_fraction() {
        let reference = word_set("launch vehicle system");
        assert_eq!(overlap_score("launch vehicle orbit", &reference), 2.0 / 3.0);
        assert_eq!(overlap_score("anything", &word_set("")), 0.0);
        assert_eq!(overlap_score("", &reference), 0.0);
    }
}
