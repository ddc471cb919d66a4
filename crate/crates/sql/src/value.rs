use std::cmp::Ordering;
use std::fmt;

use num_rational::Ratio;
use num_traits::{CheckedAdd, CheckedDiv, CheckedMul, CheckedSub, Signed, ToPrimitive, Zero};

/// Exact numeric type used for non-integral results (AVG, decimal literals).
pub type Exact = Ratio<i64>;

/// A single SQL value.
///
/// Numbers are kept exact: integers as `i64`, reals as a reduced rational.
/// `Num` keeps its "real" type even when integral (`AVG` of integers, `2.0`),
/// so later integer-vs-real arithmetic follows the usual SQL typing rules.
/// There is no floating point anywhere in the evaluator.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Value {
    Null,
    Int(i64),
    Num(Exact),
    Text(String),
}

impl Value {
    pub fn text(s: impl Into<String>) -> Self {
        Value::Text(s.into())
    }

    pub fn is_null(&self) -> bool {
        matches!(self, Value::Null)
    }

    /// Normalizes a rational with denominator one into an integer.
    pub fn from_exact(r: Exact) -> Self {
        if r.is_integer() {
            Value::Int(r.to_integer())
        } else {
            Value::Num(r)
        }
    }

    pub(crate) fn as_exact(&self) -> Option<Exact> {
        match self {
            Value::Int(i) => Some(Exact::from_integer(*i)),
            Value::Num(r) => Some(*r),
            Value::Text(s) => parse_numeric_text(s),
            Value::Null => None,
        }
    }

    fn numeric_rank(&self) -> u8 {
        match self {
            Value::Null => 0,
            Value::Int(_) | Value::Num(_) => 1,
            Value::Text(_) => 2,
        }
    }

    /// Total order used by ORDER BY, GROUP BY and MIN/MAX:
    /// NULL < numbers < text, text compared bytewise.
    pub fn sort_cmp(&self, other: &Value) -> Ordering {
        match (self, other) {
            (Value::Int(a), Value::Int(b)) => a.cmp(b),
            (Value::Text(a), Value::Text(b)) => a.as_bytes().cmp(b.as_bytes()),
            (Value::Int(_) | Value::Num(_), Value::Int(_) | Value::Num(_)) => self.as_exact().cmp(&other.as_exact()),
            _ => self.numeric_rank().cmp(&other.numeric_rank()),
        }
    }

    /// Comparison used by `=`, `<`, ... . Returns `None` when either side is
    /// NULL. A text operand that reads as a number is compared numerically
    /// against a numeric operand (column-affinity behaviour).
    pub fn sql_cmp(&self, other: &Value) -> Option<Ordering> {
        match (self, other) {
            (Value::Null, _) | (_, Value::Null) => None,
            (Value::Text(a), Value::Text(b)) => Some(a.as_bytes().cmp(b.as_bytes())),
            (Value::Text(t), n) | (n, Value::Text(t)) => {
                let swapped = matches!(self, Value::Text(_));
                let ord = match parse_numeric_text(t) {
                    Some(tv) => n.as_exact().map(|nv| nv.cmp(&tv)),
                    None => Some(Ordering::Less),
                }?;
                Some(if swapped { ord.reverse() } else { ord })
            }
            _ => Some(self.sort_cmp(other)),
        }
    }

    /// SQL truthiness: nonzero numbers are true, NULL is unknown.
    pub fn truth(&self) -> Option<bool> {
        match self {
            Value::Null => None,
            Value::Int(i) => Some(*i != 0),
            Value::Num(r) => Some(!r.is_zero()),
            Value::Text(s) => Some(numeric_prefix(s).map(|r| !r.is_zero()).unwrap_or(false)),
        }
    }

    pub fn from_bool(b: Option<bool>) -> Value {
        match b {
            None => Value::Null,
            Some(true) => Value::Int(1),
            Some(false) => Value::Int(0),
        }
    }

    /// Operand coercion for arithmetic: text becomes its numeric prefix or 0.
    fn arith_operand(&self) -> Option<Exact> {
        match self {
            Value::Null => None,
            Value::Int(i) => Some(Exact::from_integer(*i)),
            Value::Num(r) => Some(*r),
            Value::Text(s) => Some(numeric_prefix(s).unwrap_or_else(Exact::zero)),
        }
    }

    fn both_int(&self, other: &Value) -> Option<(i64, i64)> {
        match (self, other) {
            (Value::Int(a), Value::Int(b)) => Some((*a, *b)),
            _ => None,
        }
    }

    pub(crate) fn arith(&self, op: ArithOp, other: &Value) -> Result<Value, ArithError> {
        if self.is_null() || other.is_null() {
            return Ok(Value::Null);
        }
        if let Some((a, b)) = self.both_int(other) {
            let out = match op {
                ArithOp::Add => a.checked_add(b),
                ArithOp::Sub => a.checked_sub(b),
                ArithOp::Mul => a.checked_mul(b),
                ArithOp::Div => {
                    if b == 0 {
                        return Ok(Value::Null);
                    }
                    a.checked_div(b)
                }
                ArithOp::Rem => {
                    if b == 0 {
                        return Ok(Value::Null);
                    }
                    a.checked_rem(b)
                }
            };
            return out.map(Value::Int).ok_or(ArithError::Overflow);
        }
        let (a, b) = match (self.arith_operand(), other.arith_operand()) {
            (Some(a), Some(b)) => (a, b),
            _ => return Ok(Value::Null),
        };
        let out = match op {
            ArithOp::Add => a.checked_add(&b),
            ArithOp::Sub => a.checked_sub(&b),
            ArithOp::Mul => a.checked_mul(&b),
            ArithOp::Div => {
                if b.is_zero() {
                    return Ok(Value::Null);
                }
                a.checked_div(&b)
            }
            ArithOp::Rem => {
                // Remainder works on the integer parts of both operands.
                let (ai, bi) = (a.trunc().to_integer(), b.trunc().to_integer());
                if bi == 0 {
                    return Ok(Value::Null);
                }
                return ai.checked_rem(bi).map(|r| Value::Num(Exact::from_integer(r))).ok_or(ArithError::Overflow);
            }
        };
        // Once a real operand is involved the result stays real, even when integral.
        out.map(Value::Num).ok_or(ArithError::Overflow)
    }

    pub(crate) fn negate(&self) -> Result<Value, ArithError> {
        match self {
            Value::Null => Ok(Value::Null),
            Value::Int(i) => i.checked_neg().map(Value::Int).ok_or(ArithError::Overflow),
            other => {
                let r = other.arith_operand().unwrap_or_else(Exact::zero);
                Ok(Value::Num(-r))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Div,
    Rem,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum ArithError {
    Overflow,
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Null => f.write_str("NULL"),
            Value::Int(i) => write!(f, "{i}"),
            Value::Num(r) => f.write_str(&format_exact(r)),
            Value::Text(s) => f.write_str(s),
        }
    }
}

/// Renders an exact number: integers without a decimal point, everything
/// else rounded half away from zero to two decimals.
pub fn format_exact(r: &Exact) -> String {
    if r.is_integer() {
        return r.to_integer().to_string();
    }
    let negative = r.is_negative();
    let abs = r.abs();
    // Scaled by 100 with half-up rounding, computed in i128 to stay exact.
    let numer = *abs.numer() as i128;
    let denom = *abs.denom() as i128;
    let scaled = (numer * 200 + denom) / (denom * 2);
    let int_part = scaled / 100;
    let frac = scaled % 100;
    let sign = if negative && scaled != 0 { "-" } else { "" };
    format!("{sign}{int_part}.{frac:02}")
}

/// Exact decimal rendering for rationals whose denominator has only the
/// prime factors 2 and 5 (anything parsed from a decimal literal).
pub fn exact_decimal_string(r: &Exact) -> Option<String> {
    if r.is_integer() {
        return Some(format!("{}.0", r.to_integer()));
    }
    let mut denom = *r.denom() as i128;
    let mut scale_pow = 0u32;
    let (mut twos, mut fives) = (0u32, 0u32);
    while denom % 2 == 0 {
        denom /= 2;
        twos += 1;
    }
    while denom % 5 == 0 {
        denom /= 5;
        fives += 1;
    }
    if denom != 1 {
        return None;
    }
    scale_pow += twos.max(fives);
    let scale = 10i128.checked_pow(scale_pow)?;
    let scaled = (*r.numer() as i128) * scale / (*r.denom() as i128);
    let sign = if scaled < 0 { "-" } else { "" };
    let abs = scaled.abs();
    let int_part = abs / scale;
    let frac = abs % scale;
    Some(format!("{sign}{int_part}.{frac:0width$}", width = scale_pow as usize))
}

/// Parses a plain decimal string ("12", "-3.50", "0.333") into an exact
/// rational. Exponents and other forms are rejected.
pub fn parse_decimal(s: &str) -> Option<Exact> {
    let s = s.trim();
    let (negative, digits) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s.strip_prefix('+').unwrap_or(s)),
    };
    if digits.is_empty() {
        return None;
    }
    let (int_part, frac_part) = match digits.split_once('.') {
        Some((i, f)) => (i, f),
        None => (digits, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.bytes().all(|b| b.is_ascii_digit()) || !frac_part.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let frac_part = frac_part.trim_end_matches('0');
    if frac_part.len() > 18 {
        return None;
    }
    let scale = 10i64.checked_pow(frac_part.len() as u32)?;
    let int_val: i64 = if int_part.is_empty() { 0 } else { int_part.parse().ok()? };
    let frac_val: i64 = if frac_part.is_empty() { 0 } else { frac_part.parse().ok()? };
    let numer = int_val.checked_mul(scale)?.checked_add(frac_val)?;
    let r = Exact::new(numer, scale);
    Some(if negative { -r } else { r })
}

/// Converts a float to the exact rational of its shortest decimal
/// representation. Used when comparing against engines that return floats.
pub fn exact_from_f64(x: f64) -> Option<Exact> {
    if !x.is_finite() {
        return None;
    }
    let repr = format!("{x}");
    parse_decimal(&repr)
}

fn parse_numeric_text(s: &str) -> Option<Exact> {
    parse_decimal(s)
}

fn numeric_prefix(s: &str) -> Option<Exact> {
    let t = s.trim_start();
    let mut end = 0;
    let bytes = t.as_bytes();
    if end < bytes.len() && (bytes[end] == b'-' || bytes[end] == b'+') {
        end += 1;
    }
    let mut seen_dot = false;
    while end < bytes.len() && (bytes[end].is_ascii_digit() || (bytes[end] == b'.' && !seen_dot)) {
        seen_dot |= bytes[end] == b'.';
        end += 1;
    }
    parse_decimal(&t[..end])
}

impl ToPrimitive for Value {
    fn to_i64(&self) -> Option<i64> {
        match self {
            Value::Int(i) => Some(*i),
            Value::Num(r) => r.to_integer().into(),
            _ => None,
        }
    }

    fn to_u64(&self) -> Option<u64> {
        self.to_i64().and_then(|i| u64::try_from(i).ok())
    }

    fn to_f64(&self) -> Option<f64> {
        match self {
            Value::Int(i) => Some(*i as f64),
            Value::Num(r) => Some(*r.numer() as f64 / *r.denom() as f64),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_formatting_rounds_half_up() {
        assert_eq!(format_exact(&Exact::new(5, 2)), "2.50");
        assert_eq!(format_exact(&Exact::new(469, 200)), "2.35");
        assert_eq!(format_exact(&Exact::new(1, 3)), "0.33");
        assert_eq!(format_exact(&Exact::new(2, 3)), "0.67");
        assert_eq!(format_exact(&Exact::new(-469, 200)), "-2.35");
        assert_eq!(format_exact(&Exact::new(8, 4)), "2");
        assert_eq!(format_exact(&Exact::new(1, 1000)), "0.00");
    }

    #[test]
    fn decimal_parsing() {
        assert_eq!(parse_decimal("10.0"), Some(Exact::from_integer(10)));
        assert_eq!(parse_decimal("-2.5"), Some(Exact::new(-5, 2)));
        assert_eq!(parse_decimal(".5"), Some(Exact::new(1, 2)));
        assert_eq!(parse_decimal("abc"), None);
        assert_eq!(parse_decimal("1e5"), None);
        assert_eq!(parse_decimal(""), None);
        assert_eq!(parse_decimal("."), None);
    }

    #[test]
    fn float_bridge_matches_exact_rounding() {
        // 469/200 is not representable in binary; the shortest repr recovers it.
        let f = 469.0 / 200.0;
        assert_eq!(format_exact(&exact_from_f64(f).unwrap()), "2.35");
        assert_eq!(format_exact(&exact_from_f64(1.0 / 3.0).unwrap()), "0.33");
    }

    #[test]
    fn integer_division_truncates_like_sqlite() {
        let d = Value::Int(-7).arith(ArithOp::Div, &Value::Int(2)).unwrap();
        assert_eq!(d, Value::Int(-3));
        let m = Value::Int(-7).arith(ArithOp::Rem, &Value::Int(3)).unwrap();
        assert_eq!(m, Value::Int(-1));
        let z = Value::Int(5).arith(ArithOp::Div, &Value::Int(0)).unwrap();
        assert_eq!(z, Value::Null);
    }

    #[test]
    fn comparison_ordering() {
        assert_eq!(Value::Int(2).sql_cmp(&Value::Num(Exact::new(5, 2))), Some(Ordering::Less));
        assert_eq!(Value::Int(2).sql_cmp(&Value::text("2")), Some(Ordering::Equal));
        assert_eq!(Value::Int(2).sql_cmp(&Value::text("abc")), Some(Ordering::Less));
        assert_eq!(Value::text("abc").sql_cmp(&Value::Int(2)), Some(Ordering::Greater));
        assert_eq!(Value::Null.sql_cmp(&Value::Int(1)), None);
        assert_eq!(Value::Null.sort_cmp(&Value::Int(1)), Ordering::Less);
        assert_eq!(Value::text("B").sort_cmp(&Value::text("a")), Ordering::Less);
    }
}
