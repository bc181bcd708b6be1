//! Check outcomes and their certificates.

use std::collections::BTreeMap;

use serde::{Serialize, Serializer};

use crate::numerics::{to_rows, to_vec_pairs, CMat, CVec};

/// Epistemic status of a check.
///
/// `ProvenPass` is only issued by checks with an exact criterion (complete
/// positivity, fixed-argument operator inequalities). Search-based checks
/// report `NoViolationFound` when the search fails, which is not a proof.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    ProvenPass,
    ProvenViolation,
    NoViolationFound,
}

pub(crate) fn ser_mat<S: Serializer>(m: &CMat, s: S) -> Result<S::Ok, S::Error> {
    to_rows(m).serialize(s)
}

pub(crate) fn ser_vec<S: Serializer>(v: &CVec, s: S) -> Result<S::Ok, S::Error> {
    to_vec_pairs(v).serialize(s)
}

fn ser_vecs<S: Serializer>(vs: &[CVec], s: S) -> Result<S::Ok, S::Error> {
    vs.iter().map(to_vec_pairs).collect::<Vec<_>>().serialize(s)
}

/// Failure of the generalized Schwarz block at `a`: the block has eigenvalue
/// `-lambda` with unit eigenvector `(u, v)`.
#[derive(Debug, Clone, Serialize)]
pub struct SchwarzWitness {
    #[serde(serialize_with = "ser_mat")]
    pub a: CMat,
    #[serde(serialize_with = "ser_vec")]
    pub u: CVec,
    #[serde(serialize_with = "ser_vec")]
    pub v: CVec,
    pub lambda: f64,
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Certificate {
    /// Unit vector `w` with `⟨w|M|w⟩ = value` for the tested matrix `M`.
    Eigenvector {
        #[serde(serialize_with = "ser_vec")]
        vector: CVec,
    },
    /// Schmidt decomposition `w = Σ_l a_l ⊗ b_l` of a low-rank test vector.
    SchmidtVector {
        #[serde(serialize_with = "ser_vecs")]
        a: Vec<CVec>,
        #[serde(serialize_with = "ser_vecs")]
        b: Vec<CVec>,
        #[serde(serialize_with = "ser_vec")]
        vector: CVec,
    },
    Schwarz(SchwarzWitness),
    /// Arguments of an operator inequality together with the eigenvector of the
    /// violated difference.
    OperatorArguments {
        #[serde(serialize_with = "ser_mat")]
        k: CMat,
        #[serde(serialize_with = "ser_mat")]
        x: CMat,
        #[serde(serialize_with = "ser_vec")]
        vector: CVec,
    },
    /// Matrix argument of a block test and the eigenvector of its negative eigenvalue.
    Argument {
        #[serde(serialize_with = "ser_mat")]
        x: CMat,
        #[serde(serialize_with = "ser_vec")]
        vector: CVec,
    },
    /// Superoperator inequality at `(x, y)`; `vector` is a column-stacked matrix.
    Superoperator {
        #[serde(serialize_with = "ser_mat")]
        x: CMat,
        #[serde(serialize_with = "ser_mat")]
        y: CMat,
        #[serde(serialize_with = "ser_vec")]
        vector: CVec,
    },
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckVerdict {
    pub check: String,
    pub status: Status,
    /// Best (smallest) value of the tested quantity, typically a minimum eigenvalue.
    pub value: f64,
    /// Norm scale used in the relative tolerance.
    pub scale: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub certificate: Option<Certificate>,
    pub restarts: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub detail: BTreeMap<String, f64>,
}

impl CheckVerdict {
    pub fn new(check: impl Into<String>, status: Status, value: f64, scale: f64) -> Self {
        Self {
            check: check.into(),
            status,
            value,
            scale,
            certificate: None,
            restarts: 0,
            seed: None,
            detail: BTreeMap::new(),
        }
    }

    pub fn with_certificate(mut self, c: Certificate) -> Self {
        self.certificate = Some(c);
        self
    }

    pub fn with_detail(mut self, key: &str, v: f64) -> Self {
        self.detail.insert(key.to_string(), v);
        self
    }

    pub fn with_search(mut self, restarts: usize, seed: u64) -> Self {
        self.restarts = restarts;
        self.seed = Some(seed);
        self
    }

    pub fn is_violation(&self) -> bool {
        self.status == Status::ProvenViolation
    }

    pub fn passed(&self) -> bool {
        self.status == Status::ProvenPass
    }
}

/// Exact PSD verdict from a minimum eigenvalue against a precomputed threshold.
pub(crate) fn exact_verdict(
    check: &str,
    min_eig: f64,
    scale: f64,
    psd: bool,
    certificate: Certificate,
) -> CheckVerdict {
    if psd {
        CheckVerdict::new(check, Status::ProvenPass, min_eig, scale)
    } else {
        CheckVerdict::new(check, Status::ProvenViolation, min_eig, scale).with_certificate(certificate)
    }
}
