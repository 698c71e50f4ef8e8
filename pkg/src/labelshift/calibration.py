"""Post-hoc calibration: bias-corrected temperature scaling (BCTS),
confusion-row calibration, and canonical calibration-error estimation."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceError, InputError
from .confusion import ConfusionMatrix
from .simplex import LabeledSample, PredictorTable, ProbVector, grouped_table

ARMIJO_C = 1e-4
ARMIJO_SHRINK = 0.5


@dataclass(frozen=True)
class BctsParams:
    """Temperature T and per-class biases b of the map
    softmax(log(x)/T + b)."""

    temperature: float
    biases: np.ndarray

    def __post_init__(self):
        if not (np.isfinite(self.temperature) and self.temperature > 0):
            raise InputError(f"temperature must be positive, got {self.temperature}")
        b = np.array(self.biases, dtype=float)
        if not np.all(np.isfinite(b)):
            raise InputError("biases must be finite")
        b.setflags(write=False)
        object.__setattr__(self, "biases", b)

    def to_json(self) -> dict:
        return {"temperature": self.temperature, "biases": list(self.biases)}

    @classmethod
    def from_json(cls, obj: dict) -> "BctsParams":
        return cls(float(obj["temperature"]), np.asarray(obj["biases"], dtype=float))


@dataclass(frozen=True)
class BctsFit:
    params: BctsParams
    converged: bool
    iterations: int
    final_grad_norm: float
    loss_trace: tuple


@dataclass(frozen=True)
class CalibrationReport:
    """Canonical calibration error and the per-group table behind it."""

    calibration_error: float
    per_group: tuple  # of (output ProbVector, label-mean ProbVector, mass)


def clip_probs(entries, eps: float = 1e-12) -> ProbVector:
    """Clip zero entries to eps and renormalize (for log-domain transforms)."""
    e = np.maximum(np.asarray(entries, dtype=float), eps)
    return ProbVector(e / e.sum())


def _bcts_transform(logp: np.ndarray, inv_t: float, b: np.ndarray) -> np.ndarray:
    z = logp * inv_t + b
    z -= z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def bcts_apply(params: BctsParams, output: ProbVector) -> ProbVector:
    """softmax(log(output)/T + b). Requires strictly positive entries."""
    if np.any(output.entries <= 0):
        raise InputError("bcts_apply requires strictly positive probabilities (pre-clip zeros)")
    g = _bcts_transform(np.log(output.entries), 1.0 / params.temperature, params.biases)
    return ProbVector.normalized(g, tol=1e-9)


def bcts_apply_matrix(params: BctsParams, outputs: np.ndarray, eps: float = 1e-12) -> np.ndarray:
    """Vectorized transform of an (n, k) matrix, clipping zeros first."""
    p = np.maximum(outputs, eps)
    p = p / p.sum(axis=-1, keepdims=True)
    return _bcts_transform(np.log(p), 1.0 / params.temperature, params.biases)


def _bcts_loss_grad(logp, onehot, inv_t, b, loss):
    g = _bcts_transform(logp, inv_t, b)
    n = logp.shape[0]
    if loss == "nll":
        val = -np.log(np.maximum((g * onehot).sum(axis=1), 1e-300)).mean()
        dz = (g - onehot) / n
    else:  # mse
        diff = g - onehot
        val = (diff ** 2).sum(axis=1).mean()
        # dz through the softmax Jacobian diag(g) - g g^T
        dg = 2.0 * diff / n
        dz = g * (dg - (dg * g).sum(axis=1, keepdims=True))
    grad_inv_t = float((dz * logp).sum())
    grad_b = dz.sum(axis=0)
    return val, grad_inv_t, grad_b


def bcts_fit(validation, loss: str = "nll", tol: float = 1e-8, max_iters: int = 10_000) -> BctsFit:
    """Fit BCTS by full-batch descent on (1/T, b) with backtracking line search.

    Deterministic: initialized at the identity (T=1, b=0), Armijo backtracking
    from unit step. Raises ConvergenceError with the final gradient norm if the
    iteration budget runs out.
    """
    if loss not in ("nll", "mse"):
        raise InputError(f"unknown loss: {loss}")
    samples = list(validation)
    k = samples[0].output.k
    if len(samples) < k + 1:
        raise InputError(f"need at least k+1={k + 1} validation samples")
    labels = np.array([s.label for s in samples])
    if np.unique(labels).size < 2:
        raise InputError("validation set is degenerate: only one class present")
    probs = np.array([clip_probs(s.output.entries).entries for s in samples])
    logp = np.log(probs)
    onehot = np.zeros((len(samples), k))
    onehot[np.arange(len(samples)), labels] = 1.0

    inv_t, b = 1.0, np.zeros(k)
    val, g_t, g_b = _bcts_loss_grad(logp, onehot, inv_t, b, loss)
    trace = [val]
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        gnorm = float(np.sqrt(g_t ** 2 + (g_b ** 2).sum()))
        if gnorm < tol:
            converged = True
            break
        step = 1.0
        sq = g_t ** 2 + (g_b ** 2).sum()
        while True:
            nt, nb = inv_t - step * g_t, b - step * g_b
            if nt > 0:
                nval, ng_t, ng_b = _bcts_loss_grad(logp, onehot, nt, nb, loss)
                if nval <= val - ARMIJO_C * step * sq:
                    break
            step *= ARMIJO_SHRINK
            if step < 1e-18:
                # flat to machine precision
                nt, nb, nval, ng_t, ng_b = inv_t, b, val, g_t, g_b
                break
        if nval >= val and step < 1e-18:
            converged = gnorm < 1e-6  # loss-flat stop; gradient nearly zero
            break
        inv_t, b, val, g_t, g_b = nt, nb, nval, ng_t, ng_b
        trace.append(val)
    gnorm = float(np.sqrt(g_t ** 2 + (g_b ** 2).sum()))
    params = BctsParams(1.0 / inv_t, b - b.mean())  # softmax is shift-invariant in b
    if not converged and gnorm >= tol and it >= max_iters:
        raise ConvergenceError(f"BCTS fit did not converge: final gradient norm {gnorm:.3e}")
    return BctsFit(params, True, it, gnorm, tuple(trace))


def confusion_row_calibrate(confusion: ConfusionMatrix) -> PredictorTable:
    """Map each hard prediction yhat=i to the row-normalized p_s(y|yhat=i).

    The resulting k-entry table is a calibrated predictor over the hard
    prediction, with mass p_s(yhat=i) per entry.
    """
    joint = confusion.joint
    row_sums = joint.sum(axis=1)
    for i, s in enumerate(row_sums):
        if s <= 0:
            raise InputError(f"confusion row for prediction {i} has zero mass")
    rows = joint / row_sums[:, None]
    return grouped_table(
        [ProbVector.normalized(r, tol=1e-9) for r in rows], row_sums, "probability"
    )


def estimate_calibration_error(samples) -> CalibrationReport:
    """Canonical calibration error E(f) = sqrt(E_s ||f - f_c||^2) with f_c the
    empirical label mean per exact-output group."""
    samples = list(samples)
    if not samples:
        raise InputError("calibration error needs at least one sample")
    k = samples[0].output.k
    groups: dict[bytes, list] = {}
    for s in samples:
        groups.setdefault(s.output.entries.tobytes(), []).append(s)
    n = len(samples)
    sq = 0.0
    per_group = []
    for members in groups.values():
        out = members[0].output
        mean = np.zeros(k)
        for s in members:
            mean[s.label] += 1.0
        mean /= len(members)
        mass = len(members) / n
        sq += mass * float(((out.entries - mean) ** 2).sum())
        per_group.append((out, ProbVector(mean), mass))
    return CalibrationReport(float(np.sqrt(sq)), tuple(per_group))


def calibration_error_of_table(table: PredictorTable, posteriors) -> float:
    """E(f) when the per-group posteriors are known exactly (population form)."""
    masses = table.normalized_masses()
    sq = 0.0
    for (out, _), mass, post in zip(table.support, masses, posteriors):
        p = post.entries if isinstance(post, ProbVector) else np.asarray(post, float)
        sq += mass * float(((out.entries - p) ** 2).sum())
    return float(np.sqrt(sq))
