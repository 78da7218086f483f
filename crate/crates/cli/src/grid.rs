//! Parameter lists on the command line: `5`, `1,2,4`, `3..6` (inclusive),
//! or any comma-separated mix of these.

use std::str::FromStr;

#[derive(Debug, Clone, PartialEq)]
pub struct List<T>(pub Vec<T>);

impl<T> List<T> {
    pub fn values(&self) -> &[T] {
        &self.0
    }
}

pub trait Steppable: Copy + PartialOrd {
    fn succ(self) -> Option<Self>;
}

macro_rules! steppable {
    ($($t:ty),*) => {$(
        impl Steppable for $t {
            fn succ(self) -> Option<Self> {
                self.checked_add(1)
            }
        }
    )*};
}
steppable!(u32, u64, i64);

const MAX_RANGE: usize = 1 << 20;

pub fn parse_int_list<T>(s: &str) -> Result<List<T>, String>
where
    T: Steppable + FromStr,
    T::Err: std::fmt::Display,
{
    let parse = |x: &str| x.trim().parse::<T>().map_err(|e| format!("'{}': {e}", x.trim()));
    let mut out = Vec::new();
    for part in s.split(',') {
        if let Some((a, b)) = part.split_once("..") {
            let (mut a, b) = (parse(a)?, parse(b)?);
            if a > b {
                return Err(format!("empty range '{part}'"));
            }
            loop {
                out.push(a);
                if out.len() > MAX_RANGE {
                    return Err(format!("range '{part}' has more than {MAX_RANGE} values"));
                }
                if a >= b {
                    break;
                }
                a = a.succ().ok_or("range overflow")?;
            }
        } else {
            out.push(parse(part)?);
        }
    }
    Ok(List(out))
}

pub fn parse_float_list(s: &str) -> Result<List<f64>, String> {
    s.split(',')
        .map(|x| {
            let v: f64 = x.trim().parse().map_err(|e| format!("'{}': {e}", x.trim()))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(format!("'{}' is not finite", x.trim()))
            }
        })
        .collect::<Result<_, _>>()
        .map(List)
}
