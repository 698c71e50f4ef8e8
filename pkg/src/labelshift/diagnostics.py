"""Likelihood derivatives, identifiability checks, curvature quantities, and
finite-sample bound ingredients for the weight estimators."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .simplex import PredictorTable, ProbVector, WeightVector

IDENTIFIABILITY_EIG_FLOOR = 1e-10


@dataclass(frozen=True)
class BoundTerms:
    term1: float
    term2: float
    total: float


@dataclass(frozen=True)
class DiagnosticsReport:
    log_likelihood: float
    gradient: np.ndarray
    hessian: np.ndarray
    sigma_min: float          # min eigenvalue of the negated Hessian
    tau: float                # min over target support of f(x)^T w
    second_moment_min_eig: float
    identifiable: bool
    bound_terms: BoundTerms | None

    def to_json(self) -> dict:
        return {
            "log_likelihood": self.log_likelihood,
            "gradient": list(self.gradient),
            "hessian": [list(r) for r in self.hessian],
            "sigma_min": self.sigma_min,
            "tau": self.tau,
            "second_moment_min_eig": self.second_moment_min_eig,
            "identifiable": self.identifiable,
            "bound_terms": None
            if self.bound_terms is None
            else {
                "term1": self.bound_terms.term1,
                "term2": self.bound_terms.term2,
                "total": self.bound_terms.total,
            },
        }


def _table_arrays(table: PredictorTable):
    F = table.outputs_matrix()
    m = table.normalized_masses()
    return F, m


def _weights_array(w) -> np.ndarray:
    return w.weights if isinstance(w, WeightVector) else np.asarray(w, dtype=float)


def _inner_or_raise(F, m, w):
    inner = F @ w
    bad = (inner <= 0) & (m > 0)
    if bad.any():
        raise InputError(
            f"non-positive likelihood f(x)^T w at support point {int(np.argmax(bad))}"
        )
    return inner


def log_likelihood(table: PredictorTable, w) -> float:
    """Mass-weighted mean of log f(x)^T w over the target support.

    Accepts a WeightVector or a raw array (for finite-difference probes off
    the constraint slice)."""
    F, m = _table_arrays(table)
    inner = _inner_or_raise(F, m, _weights_array(w))
    keep = m > 0
    return float(m[keep] @ np.log(inner[keep]))


def likelihood_gradient(table: PredictorTable, w) -> np.ndarray:
    """E_t[f(x) / f(x)^T w]."""
    F, m = _table_arrays(table)
    inner = _inner_or_raise(F, m, _weights_array(w))
    return F.T @ (m / np.where(inner > 0, inner, 1.0))


def likelihood_hessian(table: PredictorTable, w) -> np.ndarray:
    """-E_t[f(x) f(x)^T / (f(x)^T w)^2]; symmetric negative semidefinite."""
    F, m = _table_arrays(table)
    inner = _inner_or_raise(F, m, _weights_array(w))
    scaled = F * (np.sqrt(m) / np.where(inner > 0, inner, 1.0))[:, None]
    return -(scaled.T @ scaled)


def second_moment(arg) -> np.ndarray:
    """Empirical E_s[f f^T] from LabeledSamples or a PredictorTable."""
    if isinstance(arg, PredictorTable):
        F, m = _table_arrays(arg)
    else:
        samples = list(arg)
        if not samples:
            raise InputError("second moment needs at least one sample")
        F = np.array([s.output.entries for s in samples])
        m = np.full(len(samples), 1.0 / len(samples))
    scaled = F * np.sqrt(m)[:, None]
    return scaled.T @ scaled


def check_identifiability(arg) -> tuple[bool, float]:
    """Invertibility of E_s[f f^T] via its minimum eigenvalue."""
    M = second_moment(arg)
    min_eig = float(np.linalg.eigvalsh(M)[0])
    return min_eig > IDENTIFIABILITY_EIG_FLOOR, min_eig


def condition_tau(table: PredictorTable, w) -> float:
    """Empirical surrogate for the likelihood lower bound: min over positive-
    mass support points of f(x)^T w."""
    F, m = _table_arrays(table)
    inner = F @ _weights_array(w)
    return float(inner[m > 0].min())


def compute_bound_terms(
    sigma_min_c: float,
    sigma_min_f: float,
    tau: float,
    calib_error: float,
    w_star_norm: float,
    m: int,
    n: int,
    delta: float,
) -> BoundTerms:
    """Finite-sample error bound pieces, with the hidden universal constant
    reported as 1. Zero curvature yields an explicitly infinite bound."""
    if m < 1 or n < 1 or not 0 < delta < 1:
        raise InputError("need m, n >= 1 and delta in (0, 1)")
    if min(sigma_min_c, sigma_min_f, tau) < 0 or calib_error < 0 or w_star_norm < 0:
        raise InputError("bound ingredients must be nonnegative")
    sqrt_m = math.sqrt(math.log(4.0 / delta) / m)
    term1 = sqrt_m / sigma_min_c if sigma_min_c > 0 else math.inf
    term2 = (
        (sqrt_m + calib_error * w_star_norm) / sigma_min_f if sigma_min_f > 0 else math.inf
    )
    return BoundTerms(term1, term2, term1 + term2)


def eigenvalue_sandwich_check(
    table: PredictorTable, w: WeightVector, p_s: ProbVector, slack: float = 1e-8
) -> bool:
    """Check p_min^2 * sigma_f <= sigma_{f,w} <= sigma_f / tau^2, where sigma_f
    is the minimum eigenvalue of E_t[f f^T] and sigma_{f,w} of the negated
    likelihood Hessian."""
    F, m = _table_arrays(table)
    scaled = F * np.sqrt(m)[:, None]
    sigma_f = float(np.linalg.eigvalsh(scaled.T @ scaled)[0])
    sigma_fw = float(np.linalg.eigvalsh(-likelihood_hessian(table, w))[0])
    tau = condition_tau(table, w)
    if tau <= 0:
        raise InputError("sandwich check requires tau > 0 on the instance")
    p_min = float(p_s.entries.min())
    return (p_min ** 2) * sigma_f <= sigma_fw + slack and sigma_fw <= sigma_f / tau ** 2 + slack


def gaussian_cdf(x: float) -> float:
    return 0.5 * (1.0 + math.erf(x / math.sqrt(2.0)))


def example1_closed_form(alpha: float, c: float, mu: float) -> tuple[float, float]:
    """Population likelihood-maximization error for the threshold classifier on
    the two-Gaussian mixture.

    Returns (w0, error) where w0 is the first weight coordinate of the
    population optimum (clipped to the feasible [0, 2]) and error is the
    L1 estimation error 2|w0 - 2 alpha|. The interior stationary point is
    cross-checked against the equivalent product form before clipping.
    """
    if not 0.0 <= alpha <= 1.0:
        raise InputError("alpha must lie in [0, 1]")
    if abs(c - 0.5) < 1e-12:
        raise InputError("c = 0.5 is a degenerate classifier: weights unidentifiable")
    phi = gaussian_cdf(mu)  # p_s(x >= 0 | y = 0)
    pt_le0 = alpha * (1.0 - phi) + (1.0 - alpha) * phi
    w0_raw = (2.0 * pt_le0 - 2.0 * c) / (1.0 - 2.0 * c)
    err_raw = 2.0 * abs(w0_raw - 2.0 * alpha)
    err_display = 4.0 * abs((1.0 - 2.0 * alpha) * (phi - c) / (1.0 - 2.0 * c))
    if abs(err_raw - err_display) > 1e-12:
        raise AssertionError(
            f"closed-form routes disagree: {err_raw} vs {err_display}"
        )
    w0 = min(max(w0_raw, 0.0), 2.0)  # feasibility of the constrained optimum
    return w0, 2.0 * abs(w0 - 2.0 * alpha)


def diagnostics_report(
    table: PredictorTable,
    w: WeightVector,
    bound_terms: BoundTerms | None = None,
) -> DiagnosticsReport:
    """Assemble the full report at a given weight vector."""
    H = likelihood_hessian(table, w)
    sigma_min = float(np.linalg.eigvalsh(-H)[0])
    identifiable, min_eig = check_identifiability(table)
    return DiagnosticsReport(
        log_likelihood=log_likelihood(table, w),
        gradient=likelihood_gradient(table, w),
        hessian=H,
        sigma_min=max(sigma_min, 0.0),
        tau=condition_tau(table, w),
        second_moment_min_eig=min_eig,
        identifiable=identifiable,
        bound_terms=bound_terms,
    )
