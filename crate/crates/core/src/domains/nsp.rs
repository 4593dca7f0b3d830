//! Nurse scheduling over five days with a morning and an evening shift each.
//!
//! Every shift is staffed by exactly one nurse and nobody works both shifts
//! of a day. Shift `s` is day `s / 2`, morning when `s` is even.

use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::text::{fmt_real, Lines};
use crate::error::{CoreError, Result};

pub const DAYS: usize = 5;
pub const SHIFTS: usize = 2 * DAYS;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NspInstance {
    pub nurses: Vec<String>,
    pub seniority: Vec<f64>,
    /// `preference[n][s]` in {0, 1, 2, 3}.
    pub preference: Vec<[u8; SHIFTS]>,
    pub q_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NspSolution {
    pub nurse_of_shift: [usize; SHIFTS],
}

pub fn is_evening(shift: usize) -> bool {
    shift % 2 == 1
}

impl NspInstance {
    pub fn new(nurses: Vec<String>, seniority: Vec<f64>, preference: Vec<[u8; SHIFTS]>, q_max: f64) -> Result<Self> {
        let inst = Self {
            nurses,
            seniority,
            preference,
            q_max,
        };
        inst.validate()?;
        Ok(inst)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.nurses.len();
        if n < 2 {
            return Err(CoreError::Argument("at least two nurses are needed to staff a day".into()));
        }
        if self.seniority.len() != n || self.preference.len() != n {
            return Err(CoreError::Structural("seniority and preferences must cover every nurse".into()));
        }
        if self.preference.iter().flatten().any(|&p| p > 3) {
            return Err(CoreError::Argument("preferences must lie in {0, 1, 2, 3}".into()));
        }
        if !(self.q_max > 0.0) {
            return Err(CoreError::Argument("q_max must be positive".into()));
        }
        Ok(())
    }

    /// Five nurses with seniorities (3, 2, 1, 0, 0) and the same
    /// (morning, evening) preferences every day: (3,0), (3,1), (3,2), (0,3), (1,3).
    pub fn weekly_reference() -> Self {
        let pairs = [(3u8, 0u8), (3, 1), (3, 2), (0, 3), (1, 3)];
        let preference = pairs
            .iter()
            .map(|&(m, e)| {
                let mut row = [0u8; SHIFTS];
                for d in 0..DAYS {
                    row[2 * d] = m;
                    row[2 * d + 1] = e;
                }
                row
            })
            .collect();
        Self::new(
            crate::fairness::entity_names("n", 5),
            vec![3.0, 2.0, 1.0, 0.0, 0.0],
            preference,
            15.0,
        )
        .expect("reference instance is valid")
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("nsp v1\n");
        let _ = writeln!(s, "q_max {}", fmt_real(self.q_max));
        for (i, name) in self.nurses.iter().enumerate() {
            let prefs: Vec<String> = self.preference[i].iter().map(|p| p.to_string()).collect();
            let _ = writeln!(s, "nurse {} {} {}", name, fmt_real(self.seniority[i]), prefs.join(" "));
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = Lines::new(text);
        lines.expect_header("nsp v1")?;
        let (ln, q) = lines.keyed("q_max")?;
        let q_max = Lines::real_at(ln, &q, 0)?;
        let (mut nurses, mut seniority, mut preference) = (Vec::new(), Vec::new(), Vec::new());
        while let Some((ln, f)) = lines.next_keyed("nurse")? {
            if f.len() != 2 + SHIFTS {
                return Err(CoreError::Parse {
                    line: ln,
                    msg: format!("expected name, seniority and {SHIFTS} preferences"),
                });
            }
            nurses.push(f[0].to_string());
            seniority.push(Lines::real_at(ln, &f, 1)?);
            let mut row = [0u8; SHIFTS];
            for (s, r) in row.iter_mut().enumerate() {
                let v = Lines::int_at(ln, &f, 2 + s)?;
                *r = u8::try_from(v).map_err(|_| CoreError::Parse {
                    line: ln,
                    msg: "preference too large".into(),
                })?;
            }
            preference.push(row);
        }
        lines.expect_end()?;
        Self::new(nurses, seniority, preference, q_max)
    }
}

pub fn nsp_check(instance: &NspInstance, step: usize, sol: &NspSolution) -> Result<()> {
    let violation = |constraint: String| Err(CoreError::ConstraintViolation { step, constraint });
    if sol.nurse_of_shift.iter().any(|&n| n >= instance.nurses.len()) {
        return violation("shift staffed by an unknown nurse".into());
    }
    for d in 0..DAYS {
        if sol.nurse_of_shift[2 * d] == sol.nurse_of_shift[2 * d + 1] {
            return violation(format!("nurse works both shifts of day {}", d + 1));
        }
    }
    Ok(())
}

/// `(1/q_max) * sum over evening shifts of the assigned nurse's seniority`.
pub fn nsp_quality(instance: &NspInstance, sol: &NspSolution) -> f64 {
    let mut q = 0.0;
    for s in (0..SHIFTS).filter(|&s| is_evening(s)) {
        q += instance.seniority[sol.nurse_of_shift[s]];
    }
    q / instance.q_max
}

/// Preference points collected by each nurse.
pub fn nsp_utilities(instance: &NspInstance, sol: &NspSolution) -> Vec<f64> {
    let mut u = vec![0.0; instance.nurses.len()];
    for (s, &n) in sol.nurse_of_shift.iter().enumerate() {
        u[n] += instance.preference[n][s] as f64;
    }
    u
}

/// Streams every feasible roster, ordered lexicographically by the nurse
/// assigned to shift 0, then shift 1, and so on.
pub fn nsp_enumerate(instance: &NspInstance) -> impl Iterator<Item = NspSolution> {
    let n = instance.nurses.len();
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|m| (0..n).filter(move |&e| e != m).map(move |e| (m, e)))
        .collect();
    let total = pairs.len().pow(DAYS as u32);
    (0..total).map(move |mut code| {
        let mut nurse_of_shift = [0usize; SHIFTS];
        for d in (0..DAYS).rev() {
            let (m, e) = pairs[code % pairs.len()];
            code /= pairs.len();
            nurse_of_shift[2 * d] = m;
            nurse_of_shift[2 * d + 1] = e;
        }
        NspSolution { nurse_of_shift }
    })
}
