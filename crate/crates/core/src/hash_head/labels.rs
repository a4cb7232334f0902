use crate::error::{Error, Result};

/// Multi-hot class membership vector.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct LabelVector(Vec<bool>);

impl LabelVector {
    pub fn new(bits: Vec<bool>) -> Self {
        LabelVector(bits)
    }

    pub fn from_indices(classes: usize, set: &[usize]) -> Self {
        let mut bits = vec![false; classes];
        for &i in set {
            bits[i] = true;
        }
        LabelVector(bits)
    }

    /// Parses a string of `0`/`1` characters.
    pub fn parse(s: &str) -> Result<Self> {
        s.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::Format(format!("label bit '{other}' is not 0/1"))),
            })
            .collect::<Result<Vec<_>>>()
            .map(LabelVector)
    }

    pub fn to_bit_string(&self) -> String {
        self.0.iter().map(|&b| if b { '1' } else { '0' }).collect()
    }

    pub fn classes(&self) -> usize {
        self.0.len()
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    pub fn count(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.0.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
    }

    pub fn shares_label(&self, other: &LabelVector) -> bool {
        self.0.iter().zip(&other.0).any(|(&a, &b)| a && b)
    }
}

/// Cosine similarity of two label vectors; 0 when either is empty.
pub fn label_similarity(a: &LabelVector, b: &LabelVector) -> f64 {
    let (na, nb) = (a.count(), b.count());
    if na == 0 || nb == 0 {
        return 0.0;
    }
    let shared = a.0.iter().zip(&b.0).filter(|(&x, &y)| x && y).count();
    shared as f64 / ((na as f64).sqrt() * (nb as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn similarity_examples() {
        let one = LabelVector::parse("0100").unwrap();
        assert_eq!(label_similarity(&one, &one), 1.0);
        let other = LabelVector::parse("1000").unwrap();
        assert_eq!(label_similarity(&one, &other), 0.0);
        let a = LabelVector::parse("110").unwrap();
        let b = LabelVector::parse("101").unwrap();
        // 1 / (√2 · √2)
        assert!((label_similarity(&a, &b) - 0.5).abs() < 1e-15);
        let empty = LabelVector::parse("000").unwrap();
        assert_eq!(label_similarity(&empty, &a), 0.0);
    }

    #[test]
    fn parse_rejects_garbage() {
        assert!(LabelVector::parse("01x").is_err());
        assert_eq!(LabelVector::parse("0110").unwrap().to_bit_string(), "0110");
    }

    proptest! {
        #[test]
        fn similarity_symmetric_bounded(a in prop::collection::vec(any::<bool>(), 6), b in prop::collection::vec(any::<bool>(), 6)) {
            let (la, lb) = (LabelVector::new(a.clone()), LabelVector::new(b.clone()));
            let s = label_similarity(&la, &lb);
            prop_assert_eq!(s, label_similarity(&lb, &la));
            prop_assert!((0.0..=1.0 + 1e-12).contains(&s));
            let parallel = la.count() > 0 && a == b;
            prop_assert_eq!((s - 1.0).abs() < 1e-12, parallel);
        }
    }
}
