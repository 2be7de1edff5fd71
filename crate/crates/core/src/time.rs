//! Exact global time and per-node clock rates.
//!
//! All simulator arithmetic runs on reduced rationals so that event ordering
//! never depends on floating-point rounding. Values are written and parsed as
//! decimal strings (`"12.5"`), integers, or fractions (`"5/3"`).

use std::fmt;
use std::ops::{Add, Div, Mul, Sub};
use std::str::FromStr;

use num_rational::Ratio;
use num_traits::{Signed, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub type Rational = Ratio<i128>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid number {input:?}: {reason}")]
pub struct ParseTimeError {
    pub input: String,
    pub reason: &'static str,
}

/// A point or duration on the simulator's global time axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Time(Rational);

impl Time {
    pub const ZERO: Time = Time(Ratio::new_raw(0, 1));

    pub fn from_integer(v: i128) -> Self {
        Time(Rational::from_integer(v))
    }

    pub fn new(numer: i128, denom: i128) -> Self {
        Time(Rational::new(numer, denom))
    }

    pub fn from_rational(r: Rational) -> Self {
        Time(r)
    }

    pub fn as_rational(&self) -> Rational {
        self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn is_positive(&self) -> bool {
        self.0.is_positive()
    }

    pub fn is_negative(&self) -> bool {
        self.0.is_negative()
    }

    /// Lossy conversion for reporting only.
    pub fn to_f64(&self) -> f64 {
        self.0.to_f64().unwrap_or(f64::NAN)
    }

    pub fn max(self, other: Time) -> Time {
        if other > self {
            other
        } else {
            self
        }
    }
}

impl Add for Time {
    type Output = Time;
    fn add(self, rhs: Time) -> Time {
        Time(self.0 + rhs.0)
    }
}

impl Sub for Time {
    type Output = Time;
    fn sub(self, rhs: Time) -> Time {
        Time(self.0 - rhs.0)
    }
}

impl Mul<Rational> for Time {
    type Output = Time;
    fn mul(self, rhs: Rational) -> Time {
        Time(self.0 * rhs)
    }
}

impl Div<Rational> for Time {
    type Output = Time;
    fn div(self, rhs: Rational) -> Time {
        Time(self.0 / rhs)
    }
}

impl fmt::Display for Time {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_rational(f, self.0)
    }
}

impl FromStr for Time {
    type Err = ParseTimeError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_rational(s).map(Time)
    }
}

/// Local clock rate: ticks per unit of global time. Always positive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Rate(Rational);

impl Rate {
    pub const ONE: Rate = Rate(Ratio::new_raw(1, 1));

    pub fn new(numer: i128, denom: i128) -> Self {
        Rate(Rational::new(numer, denom))
    }

    pub fn as_rational(&self) -> Rational {
        self.0
    }

    pub fn is_positive(&self) -> bool {
        self.0.is_positive()
    }
}

impl Default for Rate {
    fn default() -> Self {
        Rate::ONE
    }
}

impl fmt::Display for Rate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_rational(f, self.0)
    }
}

impl FromStr for Rate {
    type Err = ParseTimeError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_rational(s).map(Rate)
    }
}

macro_rules! string_serde {
    ($ty:ty) => {
        impl Serialize for $ty {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.collect_str(self)
            }
        }

        impl<'de> Deserialize<'de> for $ty {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                #[derive(Deserialize)]
                #[serde(untagged)]
                enum Repr {
                    Int(i64),
                    Str(String),
                }
                match Repr::deserialize(d)? {
                    Repr::Int(v) => Ok(<$ty>::from_str(&v.to_string()).map_err(serde::de::Error::custom)?),
                    Repr::Str(s) => s.parse().map_err(serde::de::Error::custom),
                }
            }
        }
    };
}

string_serde!(Time);
string_serde!(Rate);

fn parse_rational(input: &str) -> Result<Rational, ParseTimeError> {
    let err = |reason| ParseTimeError { input: input.to_string(), reason };
    let s = input.trim();
    if s.is_empty() {
        return Err(err("empty"));
    }
    if let Some((num, den)) = s.split_once('/') {
        let num: i128 = num.trim().parse().map_err(|_| err("bad numerator"))?;
        let den: i128 = den.trim().parse().map_err(|_| err("bad denominator"))?;
        if den == 0 {
            return Err(err("zero denominator"));
        }
        return Ok(Rational::new(num, den));
    }
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s),
    };
    let (int_part, frac_part) = body.split_once('.').unwrap_or((body, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(err("no digits"));
    }
    if !int_part.chars().all(|c| c.is_ascii_digit()) || !frac_part.chars().all(|c| c.is_ascii_digit()) {
        return Err(err("expected a decimal or fraction"));
    }
    if frac_part.len() > 30 {
        return Err(err("too many fractional digits"));
    }
    let digits = format!("{int_part}{frac_part}");
    let numer: i128 = if digits.is_empty() { 0 } else { digits.parse().map_err(|_| err("out of range"))? };
    let denom = 10i128.pow(frac_part.len() as u32);
    let value = Rational::new(numer, denom);
    Ok(if neg { -value } else { value })
}

/// Terminating fractions print as decimals, everything else as `num/den`.
fn write_rational(f: &mut fmt::Formatter<'_>, r: Rational) -> fmt::Result {
    let (numer, denom) = (*r.numer(), *r.denom());
    if denom == 1 {
        return write!(f, "{numer}");
    }
    let mut rest = denom;
    let (mut twos, mut fives) = (0u32, 0u32);
    while rest % 2 == 0 {
        rest /= 2;
        twos += 1;
    }
    while rest % 5 == 0 {
        rest /= 5;
        fives += 1;
    }
    if rest != 1 {
        return write!(f, "{numer}/{denom}");
    }
    let places = twos.max(fives);
    let scaled = numer * (10i128.pow(places) / denom);
    let sign = if scaled < 0 { "-" } else { "" };
    let abs = scaled.unsigned_abs();
    let pow = 10u128.pow(places);
    write!(f, "{sign}{}.{:0width$}", abs / pow, abs % pow, width = places as usize)
}

/// Per-node clock rate and phase; local tick `k` of node `i` happens at
/// global time `phase[i] + k / rate[i]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClockMap {
    rates: Vec<Rate>,
    phases: Vec<Time>,
}

impl ClockMap {
    pub fn new(rates: Vec<Rate>, phases: Vec<Time>) -> Self {
        assert_eq!(rates.len(), phases.len(), "one rate and one phase per node");
        assert!(rates.iter().all(Rate::is_positive), "clock rates must be positive");
        Self { rates, phases }
    }

    pub fn len(&self) -> usize {
        self.rates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rates.is_empty()
    }

    pub fn rate(&self, node: usize) -> Rate {
        self.rates[node]
    }

    pub fn phase(&self, node: usize) -> Time {
        self.phases[node]
    }

    pub fn local_to_global(&self, node: usize, tick: u64) -> Time {
        self.phases[node] + Time::from_integer(tick as i128) / self.rates[node].as_rational()
    }

    /// Latest local tick reached at global time `t`; zero before the phase.
    pub fn global_to_local(&self, node: usize, t: Time) -> u64 {
        let elapsed = t - self.phases[node];
        if elapsed.is_negative() {
            return 0;
        }
        let ticks = (elapsed * self.rates[node].as_rational()).as_rational().floor();
        ticks.to_integer() as u64
    }
}
