use std::fmt;

use num_rational::Ratio;

use super::LayoutError;

const MAX_FRACTION_DIGITS: u32 = 6;
const MAX_INTEGER: u64 = 1_000_000;

/// A strictly positive, exactly representable decimal ratio.
///
/// Values carry at most six fractional digits and are at most one million,
/// which keeps every allocation computed from them inside `u128`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SplitRatio(Ratio<u64>);

impl SplitRatio {
    pub const ONE: SplitRatio = SplitRatio(Ratio::new_raw(1, 1));

    pub fn integer(n: u64) -> Option<Self> {
        (n > 0 && n <= MAX_INTEGER).then(|| SplitRatio(Ratio::from_integer(n)))
    }

    /// `num / 10^scale`, reduced.
    pub fn decimal(num: u64, scale: u32) -> Option<Self> {
        if num == 0 || scale > MAX_FRACTION_DIGITS {
            return None;
        }
        let r = Ratio::new(num, 10u64.pow(scale));
        (r <= Ratio::from_integer(MAX_INTEGER)).then_some(SplitRatio(r))
    }

    pub fn numer(&self) -> u64 {
        *self.0.numer()
    }

    pub fn denom(&self) -> u64 {
        *self.0.denom()
    }

    pub fn as_f64(&self) -> f64 {
        self.numer() as f64 / self.denom() as f64
    }

    /// Multiplies by a positive integer, if the result stays in range.
    pub fn scaled(&self, k: u64) -> Option<Self> {
        let r = Ratio::new(self.numer().checked_mul(k)?, self.denom());
        (k > 0 && r <= Ratio::from_integer(MAX_INTEGER)).then_some(SplitRatio(r))
    }

    pub(crate) fn parse_token(token: &str, position: usize) -> Result<Self, LayoutError> {
        let malformed = || LayoutError::MalformedNumber { token: token.to_string(), position };
        let (negative, body) = match token.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, token.strip_prefix('+').unwrap_or(token)),
        };
        let (int_part, frac_part) = match body.split_once('.') {
            Some((i, f)) => (i, f),
            None => (body, ""),
        };
        let digits_only = |s: &str| s.bytes().all(|b| b.is_ascii_digit());
        if int_part.is_empty() && frac_part.is_empty() || !digits_only(int_part) || !digits_only(frac_part) {
            return Err(malformed());
        }
        let frac_trimmed = frac_part.trim_end_matches('0');
        let int_trimmed = int_part.trim_start_matches('0');
        if frac_trimmed.len() as u32 > MAX_FRACTION_DIGITS || int_trimmed.len() > 7 {
            return Err(malformed());
        }
        let scale = frac_trimmed.len() as u32;
        let int_value: u64 = if int_trimmed.is_empty() { 0 } else { int_trimmed.parse().map_err(|_| malformed())? };
        let frac_value: u64 =
            if frac_trimmed.is_empty() { 0 } else { frac_trimmed.parse().map_err(|_| malformed())? };
        let num = int_value * 10u64.pow(scale) + frac_value;
        if num == 0 || negative {
            return Err(LayoutError::NonPositiveRatio { token: token.to_string(), position });
        }
        SplitRatio::decimal(num, scale).ok_or_else(malformed)
    }
}

impl fmt::Display for SplitRatio {
    /// Shortest exact decimal form. Denominators are always of the form
    /// `2^a 5^b`, so the expansion terminates.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (num, den) = (self.numer(), self.denom());
        let int = num / den;
        let mut rem = num % den;
        if rem == 0 {
            return write!(f, "{int}");
        }
        let mut frac = String::new();
        while rem != 0 {
            rem *= 10;
            frac.push(char::from(b'0' + (rem / den) as u8));
            rem %= den;
        }
        write!(f, "{int}.{frac}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> SplitRatio {
        SplitRatio::parse_token(s, 0).unwrap()
    }

    #[test]
    fn decimal_forms_reduce() {
        assert_eq!(parse("0.50"), parse(".5"));
        assert_eq!(parse("2.0"), SplitRatio::integer(2).unwrap());
        assert_eq!(parse("007").to_string(), "7");
        assert_eq!(parse("0.125").to_string(), "0.125");
        assert_eq!(parse("1.").to_string(), "1");
    }

    #[test]
    fn rejects_out_of_range() {
        assert!(SplitRatio::parse_token("0.0000001", 0).is_err());
        assert!(SplitRatio::parse_token("10000000", 0).is_err());
        assert!(SplitRatio::parse_token(".", 0).is_err());
        assert!(SplitRatio::parse_token("1.2.3", 0).is_err());
    }
}
