use std::fmt;

use serde::{Deserialize, Serialize};

use super::EvalError;

/// pass@1 as the exact ratio solved / total.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PassAt1 {
    pub solved: u64,
    pub total: u64,
}

pub fn pass_at_1(results: &[bool]) -> Result<PassAt1, EvalError> {
    if results.is_empty() {
        return Err(EvalError::EmptyResults);
    }
    Ok(PassAt1 {
        solved: results.iter().filter(|&&s| s).count() as u64,
        total: results.len() as u64,
    })
}

impl PassAt1 {
    pub fn new(solved: u64, total: u64) -> Result<PassAt1, EvalError> {
        if total == 0 {
            return Err(EvalError::EmptyResults);
        }
        if solved > total {
            return Err(EvalError::Invalid(format!("{solved} solved out of {total}")));
        }
        Ok(PassAt1 { solved, total })
    }

    pub fn value(&self) -> f64 {
        self.solved as f64 / self.total as f64
    }

    /// The ratio scaled by 10^`decimals` and rounded half up, in integers.
    fn scaled(&self, scale: u128) -> u128 {
        let num = u128::from(self.solved) * scale;
        let den = u128::from(self.total);
        (2 * num + den) / (2 * den)
    }

    /// Fraction rounded to `decimals` places, e.g. `0.3293`.
    pub fn fraction_string(&self, decimals: u32) -> String {
        fixed_point(self.scaled(10u128.pow(decimals)), decimals)
    }

    /// Percentage rounded to `decimals` places, e.g. `32.93%`.
    pub fn percent_string(&self, decimals: u32) -> String {
        format!(
            "{}%",
            fixed_point(self.scaled(10u128.pow(decimals + 2)), decimals)
        )
    }
}

fn fixed_point(scaled: u128, decimals: u32) -> String {
    if decimals == 0 {
        return scaled.to_string();
    }
    let unit = 10u128.pow(decimals);
    format!(
        "{}.{:0width$}",
        scaled / unit,
        scaled % unit,
        width = decimals as usize
    )
}

impl fmt::Display for PassAt1 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.percent_string(2))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_cell_formatting() {
        let p = PassAt1::new(54, 164).unwrap();
        assert_eq!(p.to_string(), "32.93%");
        assert_eq!(p.fraction_string(4), "0.3293");
    }

    #[test]
    fn extremes_and_errors() {
        assert_eq!(pass_at_1(&[true; 7]).unwrap().value(), 1.0);
        assert_eq!(pass_at_1(&[false; 7]).unwrap().value(), 0.0);
        assert_eq!(pass_at_1(&[true; 7]).unwrap().to_string(), "100.00%");
        assert_eq!(pass_at_1(&[false; 3]).unwrap().to_string(), "0.00%");
        assert!(matches!(pass_at_1(&[]), Err(EvalError::EmptyResults)));
        assert!(PassAt1::new(3, 2).is_err());
    }

    #[test]
    fn rounds_half_up() {
        assert_eq!(PassAt1::new(1, 8).unwrap().percent_string(1), "12.5%");
        assert_eq!(PassAt1::new(1, 8).unwrap().percent_string(0), "13%");
        assert_eq!(PassAt1::new(2, 3).unwrap().fraction_string(3), "0.667");
    }
}
