//! Course assignment: each course is taught by one lecturer in full or split
//! in halves between two distinct lecturers.

use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::text::{fmt_real, Lines};
use crate::error::{CoreError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapInstance {
    pub lecturers: Vec<String>,
    pub courses: Vec<String>,
    /// `skill[l][c]`.
    pub skill: Vec<Vec<f64>>,
    pub q_max: f64,
    /// Unavailable lecturers per time step; its length is the number of steps.
    pub unavailable: Vec<Vec<usize>>,
}

/// Load matrix `load[l][c]` with entries in {0, 0.5, 1}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapSolution {
    pub load: Vec<Vec<f64>>,
}

impl CapSolution {
    /// Per-lecturer total load.
    pub fn loads(&self) -> Vec<f64> {
        self.load.iter().map(|row| row.iter().sum()).collect()
    }
}

impl CapInstance {
    pub fn new(
        lecturers: Vec<String>,
        courses: Vec<String>,
        skill: Vec<Vec<f64>>,
        q_max: f64,
        unavailable: Vec<Vec<usize>>,
    ) -> Result<Self> {
        let inst = Self {
            lecturers,
            courses,
            skill,
            q_max,
            unavailable,
        };
        inst.validate()?;
        Ok(inst)
    }

    pub fn validate(&self) -> Result<()> {
        let (nl, nc) = (self.lecturers.len(), self.courses.len());
        if nl == 0 || nc == 0 {
            return Err(CoreError::Argument("course assignment needs lecturers and courses".into()));
        }
        if self.skill.len() != nl || self.skill.iter().any(|r| r.len() != nc) {
            return Err(CoreError::Structural("skill matrix must be lecturers x courses".into()));
        }
        if self.skill.iter().flatten().any(|s| !(*s >= 0.0)) {
            return Err(CoreError::Argument("skills must be nonnegative".into()));
        }
        if !(self.q_max > 0.0) {
            return Err(CoreError::Argument("q_max must be positive".into()));
        }
        if self.unavailable.is_empty() {
            return Err(CoreError::Argument("at least one time step required".into()));
        }
        if self.unavailable.iter().flatten().any(|&l| l >= nl) {
            return Err(CoreError::Argument("unavailable lecturer index out of range".into()));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        self.unavailable.len()
    }

    /// Same lecturers and courses every step, nobody unavailable.
    pub fn uniform(lecturers: Vec<String>, courses: Vec<String>, skill: Vec<Vec<f64>>, q_max: f64, steps: usize) -> Result<Self> {
        Self::new(lecturers, courses, skill, q_max, vec![Vec::new(); steps.max(1)])
    }

    fn available(&self, step: usize) -> Vec<usize> {
        (0..self.lecturers.len())
            .filter(|l| !self.unavailable[step].contains(l))
            .collect()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("cap v1\n");
        let _ = writeln!(s, "lecturers {}", self.lecturers.join(" "));
        let _ = writeln!(s, "courses {}", self.courses.join(" "));
        let _ = writeln!(s, "q_max {}", fmt_real(self.q_max));
        for (l, row) in self.skill.iter().enumerate() {
            let vals: Vec<String> = row.iter().map(|v| fmt_real(*v)).collect();
            let _ = writeln!(s, "skill {} {}", self.lecturers[l], vals.join(" "));
        }
        let _ = writeln!(s, "steps {}", self.steps());
        for (t, un) in self.unavailable.iter().enumerate() {
            if !un.is_empty() {
                let names: Vec<&str> = un.iter().map(|&l| self.lecturers[l].as_str()).collect();
                let _ = writeln!(s, "unavailable {} {}", t, names.join(" "));
            }
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = Lines::new(text);
        lines.expect_header("cap v1")?;
        let lecturers = lines.keyed("lecturers")?.1.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        let courses = lines.keyed("courses")?.1.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        let (ln, q) = lines.keyed("q_max")?;
        let q_max = Lines::real_at(ln, &q, 0)?;
        let mut skill = vec![Vec::new(); lecturers.len()];
        for _ in 0..lecturers.len() {
            let (ln, f) = lines.keyed("skill")?;
            let l = lecturers
                .iter()
                .position(|n| n == f.first().copied().unwrap_or(""))
                .ok_or_else(|| CoreError::Parse { line: ln, msg: "unknown lecturer".into() })?;
            skill[l] = (1..f.len()).map(|i| Lines::real_at(ln, &f, i)).collect::<Result<_>>()?;
        }
        let (ln, st) = lines.keyed("steps")?;
        let steps = Lines::int_at(ln, &st, 0)?;
        let mut unavailable = vec![Vec::new(); steps];
        while let Some((ln, f)) = lines.next_keyed("unavailable")? {
            let t = Lines::int_at(ln, &f, 0)?;
            if t >= steps {
                return Err(CoreError::Parse { line: ln, msg: "step out of range".into() });
            }
            for name in &f[1..] {
                let l = lecturers
                    .iter()
                    .position(|n| n == name)
                    .ok_or_else(|| CoreError::Parse { line: ln, msg: format!("unknown lecturer {name}") })?;
                unavailable[t].push(l);
            }
        }
        lines.expect_end()?;
        Self::new(lecturers, courses, skill, q_max, unavailable)
    }
}

/// All feasible assignments at `step`, sorted lexicographically by the
/// lecturer-major load matrix.
pub fn cap_enumerate(instance: &CapInstance, step: usize) -> Result<Vec<CapSolution>> {
    if step >= instance.steps() {
        return Err(CoreError::Argument(format!("step {step} beyond the instance's {} steps", instance.steps())));
    }
    let avail = instance.available(step);
    if avail.is_empty() {
        return Err(CoreError::Infeasible(format!("no lecturer available at step {step}")));
    }
    let nl = instance.lecturers.len();
    // Per-course options as load columns.
    let mut options: Vec<Vec<f64>> = Vec::new();
    for &l in &avail {
        let mut col = vec![0.0; nl];
        col[l] = 1.0;
        options.push(col);
    }
    for (i, &a) in avail.iter().enumerate() {
        for &b in &avail[i + 1..] {
            let mut col = vec![0.0; nl];
            col[a] = 0.5;
            col[b] = 0.5;
            options.push(col);
        }
    }
    let nc = instance.courses.len();
    let mut out = Vec::new();
    let mut idx = vec![0usize; nc];
    loop {
        let mut load = vec![vec![0.0; nc]; nl];
        for (c, &o) in idx.iter().enumerate() {
            for l in 0..nl {
                load[l][c] = options[o][l];
            }
        }
        out.push(CapSolution { load });
        let mut c = nc;
        loop {
            if c == 0 {
                out.sort_by(|a, b| cmp_matrix(&a.load, &b.load));
                return Ok(out);
            }
            c -= 1;
            idx[c] += 1;
            if idx[c] < options.len() {
                break;
            }
            idx[c] = 0;
        }
    }
}

fn cmp_matrix(a: &[Vec<f64>], b: &[Vec<f64>]) -> std::cmp::Ordering {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(std::cmp::Ordering::Equal)
}

pub fn cap_check(instance: &CapInstance, step: usize, sol: &CapSolution) -> Result<()> {
    let (nl, nc) = (instance.lecturers.len(), instance.courses.len());
    let violation = |constraint: String| Err(CoreError::ConstraintViolation { step, constraint });
    if sol.load.len() != nl || sol.load.iter().any(|r| r.len() != nc) {
        return violation("load matrix must be lecturers x courses".into());
    }
    for c in 0..nc {
        let col: Vec<f64> = (0..nl).map(|l| sol.load[l][c]).collect();
        if col.iter().any(|&x| x != 0.0 && x != 0.5 && x != 1.0) {
            return violation(format!("course {} has a load outside {{0, 0.5, 1}}", instance.courses[c]));
        }
        let sum: f64 = col.iter().sum();
        if sum != 1.0 {
            return violation(format!("course {} carries total load {sum}, expected 1", instance.courses[c]));
        }
    }
    if let Some(un) = instance.unavailable.get(step) {
        for &l in un {
            if sol.load[l].iter().any(|&x| x != 0.0) {
                return violation(format!("lecturer {} is unavailable", instance.lecturers[l]));
            }
        }
    }
    Ok(())
}

/// `(1/q_max) * sum_{l,c} load * skill`.
pub fn cap_quality(instance: &CapInstance, sol: &CapSolution) -> f64 {
    let mut q = 0.0;
    for (row, srow) in sol.load.iter().zip(&instance.skill) {
        for (x, s) in row.iter().zip(srow) {
            q += x * s;
        }
    }
    q / instance.q_max
}

/// Course load per lecturer.
pub fn cap_utilities(instance: &CapInstance, sol: &CapSolution) -> Result<Vec<f64>> {
    let loads = sol.loads();
    if loads.len() != instance.lecturers.len() {
        return Err(CoreError::Structural("load matrix does not match the lecturer list".into()));
    }
    if loads.iter().all(|&l| l == 0.0) {
        return Err(CoreError::Infeasible("empty assignment".into()));
    }
    Ok(loads)
}
