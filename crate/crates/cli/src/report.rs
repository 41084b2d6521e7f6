//! Analysis pipeline and its report.

use std::fmt::Write as _;
use std::time::Instant;

use corrlab::completion::{Correlator, MarginClass};
use corrlab::geometry::{
    exposedness_from, inequalities, is_extreme, is_local, membership_analytic, membership_sdp,
    self_tests_singlet_2x2, ExposednessStatus, ExposednessVerdict, ExtremalityStatus,
    ExtremalityVerdict, Hyperplane, InequalityValue, LocalityVerdict,
};
use corrlab::linalg::{SymMatrix, Tolerances};
use corrlab::Error;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Largest `n + m` for which the CLI runs the locality program.
pub const CLI_LOCALITY_LIMIT: usize = 14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Analytic,
    Sdp,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MembershipReport {
    pub member: bool,
    pub method: Method,
    /// Largest minimum eigenvalue over completions (SDP only).
    pub margin: Option<f64>,
    pub class: Option<MarginClass>,
    /// Analytic verdict, when the scenario has one.
    pub analytic: Option<bool>,
    /// Violated box and cycle inequalities.
    pub violated: Vec<InequalityValue>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub membership: f64,
    pub extremality: Option<f64>,
    pub exposedness: Option<f64>,
    pub locality: Option<f64>,
    pub self_test: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub input: Correlator,
    pub membership: MembershipReport,
    pub extremality: Option<ExtremalityVerdict>,
    pub exposedness: Option<ExposednessVerdict>,
    pub locality: Option<LocalityVerdict>,
    pub self_test: Option<bool>,
    pub completion: Option<SymMatrix>,
    pub dual: Option<SymMatrix>,
    pub tolerances: Tolerances,
    /// Seconds per stage.
    pub timings: Timings,
    pub notes: Vec<String>,
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let t = Instant::now();
    let v = f();
    (v, t.elapsed().as_secs_f64())
}

fn analytic_applicable(c: &Correlator) -> bool {
    c.n().min(c.m()) <= 2
}

pub fn membership(
    c: &Correlator,
    method: Method,
    tol: &Tolerances,
) -> Result<MembershipReport, CliError> {
    let analytic = if analytic_applicable(c) && method != Method::Sdp {
        Some(membership_analytic(c, tol)?)
    } else if method == Method::Analytic {
        return Err(CliError::Usage(format!(
            "analytic membership needs min(n, m) <= 2, got {}x{}",
            c.n(),
            c.m()
        )));
    } else {
        None
    };
    let sdp = if method == Method::Analytic {
        None
    } else {
        Some(membership_sdp(c, tol)?)
    };
    let member = sdp
        .as_ref()
        .map_or_else(|| analytic.as_ref().is_some_and(|a| a.member), |s| s.member);
    let violated = match &analytic {
        Some(a) => a.violated.clone(),
        None if !member && analytic_applicable(c) => inequalities(c)?
            .into_iter()
            .filter(|v| v.slack < -tol.tight_abs)
            .collect(),
        None => Vec::new(),
    };
    Ok(MembershipReport {
        member,
        method,
        margin: sdp.as_ref().map(|s| s.margin),
        class: sdp.as_ref().map(|s| s.class),
        analytic: analytic.map(|a| a.member),
        violated,
    })
}

/// Membership, then extremality and exposedness for members, locality,
/// and the self-test flag for 2×2 inputs.
pub fn analyze(
    c: &Correlator,
    method: Method,
    tol: &Tolerances,
) -> Result<AnalysisReport, CliError> {
    let mut notes = Vec::new();
    let mut timings = Timings::default();
    let (mem, t) = timed(|| membership(c, method, tol));
    let mem = mem?;
    timings.membership = t;
    if let (Some(a), Some(class)) = (mem.analytic, mem.class) {
        if a != mem.member {
            notes.push(format!(
                "analytic ({a}) and SDP ({class:?}) membership disagree; SDP verdict kept"
            ));
        }
    }

    let mut extremality = None;
    let mut exposedness = None;
    if mem.member {
        let (v, t) = timed(|| is_extreme(c, tol));
        timings.extremality = Some(t);
        let v = v?;
        if v.status == ExtremalityStatus::Inconclusive {
            notes.push(format!(
                "extremality inconclusive: rank {} completion, rank {} dual, nullspace dimension {}",
                v.evidence.rank_completion, v.evidence.rank_dual, v.null_dim
            ));
        }
        if v.status == ExtremalityStatus::Extreme {
            let (e, t) = timed(|| exposedness_from(&v, tol));
            timings.exposedness = Some(t);
            exposedness = Some(e?);
        }
        extremality = Some(v);
    }

    let locality = if c.n() + c.m() <= CLI_LOCALITY_LIMIT {
        let (l, t) = timed(|| is_local(c, tol));
        timings.locality = Some(t);
        Some(l?)
    } else {
        notes.push(format!("locality skipped: n + m > {CLI_LOCALITY_LIMIT}"));
        None
    };

    let self_test = if c.n() == 2 && c.m() == 2 {
        if mem.member {
            let (s, t) = timed(|| self_tests_singlet_2x2(c, tol));
            timings.self_test = Some(t);
            Some(s?)
        } else {
            Some(false)
        }
    } else {
        None
    };

    let evidence = extremality.as_ref().map(|v| &v.evidence);
    Ok(AnalysisReport {
        input: c.clone(),
        completion: evidence.and_then(|e| e.completion.clone()),
        dual: evidence.and_then(|e| e.dual_certificate.as_ref().map(|d| d.z.clone())),
        membership: mem,
        extremality,
        exposedness,
        locality,
        self_test,
        tolerances: *tol,
        timings,
        notes,
    })
}

/// `v` with 17 significant digits.
pub fn num(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let exp = v.abs().log10().floor() as i32;
    if (-5..17).contains(&exp) {
        format!("{:.*}", (16 - exp) as usize, v)
    } else {
        format!("{v:.16e}")
    }
}

pub fn write_matrix(out: &mut String, rows: &[Vec<f64>]) {
    for row in rows {
        let cells: Vec<String> = row.iter().map(|v| format!("{:>24}", num(*v))).collect();
        let _ = writeln!(out, "    {}", cells.join(" "));
    }
}

fn write_hyperplane(out: &mut String, h: &Hyperplane) {
    let _ = writeln!(out, "  hyperplane (normalized), offset {}:", num(h.offset));
    write_matrix(out, &h.coefficients);
}

impl AnalysisReport {
    pub fn to_text(&self) -> String {
        let mut o = String::new();
        let c = &self.input;
        let _ = writeln!(o, "input {}x{}:", c.n(), c.m());
        write_matrix(&mut o, &c.to_rows());

        let m = &self.membership;
        let _ = write!(
            o,
            "membership: {}",
            if m.member { "member" } else { "not a member" }
        );
        let _ = write!(o, " (method {:?}", m.method);
        if let Some(margin) = m.margin {
            let _ = write!(o, ", margin {}", num(margin));
        }
        if let Some(a) = m.analytic {
            let _ = write!(
                o,
                ", analytic {}",
                if a { "member" } else { "not a member" }
            );
        }
        let _ = writeln!(o, ")");
        for v in &m.violated {
            let _ = writeln!(o, "  violated: {}  (slack {})", v.inequality, num(v.slack));
        }

        if let Some(v) = &self.extremality {
            let e = &v.evidence;
            let _ = writeln!(
                o,
                "extremality: {:?} ({:?}); rank {}, Hadamard rank {}, dual rank {}, unique {}, strict complementarity {}, nullspace dimension {}",
                v.status, v.reason, e.rank_completion, e.rank_hadamard, e.rank_dual, e.unique,
                v.strict_complementarity, v.null_dim
            );
        }
        if let Some(x) = &self.completion {
            let _ = writeln!(o, "completion:");
            write_matrix(&mut o, &x.to_rows());
        }
        if let Some(z) = &self.dual {
            let _ = writeln!(o, "dual:");
            write_matrix(&mut o, &z.to_rows());
        }
        if let Some(x) = &self.exposedness {
            let _ = writeln!(
                o,
                "exposedness: {:?} (nullspace dimension {})",
                x.status, x.null_dim
            );
            if let (ExposednessStatus::Exposed, Some(h)) = (x.status, &x.hyperplane) {
                write_hyperplane(&mut o, &h.normalized());
            }
        }
        if let Some(l) = &self.locality {
            let _ = writeln!(
                o,
                "locality: {} (L1 distance {})",
                if l.local { "local" } else { "not local" },
                num(l.distance)
            );
        }
        if let Some(s) = self.self_test {
            let _ = writeln!(o, "self-test: {s}");
        }
        let t = &self.tolerances;
        let _ = writeln!(
            o,
            "tolerances: rank_rel {:e} null_rel {:e} tight_abs {:e} sdp_gap {:e} psd_abs {:e}",
            t.rank_rel, t.null_rel, t.tight_abs, t.sdp_gap, t.psd_abs
        );
        let tm = &self.timings;
        let stage = |s: Option<f64>| s.map_or("-".to_string(), |v| format!("{:.6}", v));
        let _ = writeln!(
            o,
            "timings (s): membership {:.6} extremality {} exposedness {} locality {} self-test {}",
            tm.membership,
            stage(tm.extremality),
            stage(tm.exposedness),
            stage(tm.locality),
            stage(tm.self_test)
        );
        for n in &self.notes {
            let _ = writeln!(o, "note: {n}");
        }
        o
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::NumericalFailure(_) | Error::InvariantViolation(_) => {
                CliError::Solver(e.to_string())
            }
            _ => CliError::Parse(e.to_string()),
        }
    }
}
