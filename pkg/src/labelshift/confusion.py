"""Hard and soft confusion matrices p_s(yhat, y) and target prediction marginals."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .simplex import SIMPLEX_TOL, ProbVector, _freeze


@dataclass(frozen=True)
class ConfusionMatrix:
    """Joint distribution estimate joint[i][j] = p_s(yhat=i, y=j).

    Column sums are the source label marginal p_s(y), kept as metadata.
    """

    joint: np.ndarray
    column_marginal: ProbVector
    kind: str  # "hard" | "soft"

    def __post_init__(self):
        j = _freeze(self.joint)
        if self.kind not in ("hard", "soft"):
            raise InputError(f"unknown confusion kind: {self.kind}")
        k = self.column_marginal.k
        if j.shape != (k, k):
            raise InputError(f"confusion matrix shape {j.shape} does not match k={k}")
        if np.any(j < -SIMPLEX_TOL):
            raise InputError("confusion matrix has negative entries")
        if abs(j.sum() - 1.0) > SIMPLEX_TOL:
            raise InputError(f"confusion matrix total mass {j.sum()} != 1")
        if np.max(np.abs(j.sum(axis=0) - self.column_marginal.entries)) > SIMPLEX_TOL:
            raise InputError("confusion column sums disagree with column marginal")
        object.__setattr__(self, "joint", j)

    @property
    def k(self) -> int:
        return self.column_marginal.k


def _outputs_labels(samples):
    samples = list(samples)
    if not samples:
        raise InputError("confusion matrix needs at least one sample")
    outputs = np.array([s.output.entries for s in samples])
    labels = np.array([s.label for s in samples])
    return outputs, labels


def build_hard_confusion(samples) -> ConfusionMatrix:
    """Count-based joint with yhat = argmax output (ties to the lowest index)."""
    outputs, labels = _outputs_labels(samples)
    n, k = outputs.shape
    pred = outputs.argmax(axis=1)  # np.argmax breaks ties toward the lowest index
    joint = np.zeros((k, k))
    np.add.at(joint, (pred, labels), 1.0)
    joint /= n
    return ConfusionMatrix(joint, ProbVector(joint.sum(axis=0)), "hard")


def build_soft_confusion(samples) -> ConfusionMatrix:
    """Expectation form: joint[i][j] = mean over samples of output[i] * 1{label=j}.

    No random prediction is drawn; this is the variance-free estimator of the
    same joint, and equals the empirical second moment E_s[f f^T] re-indexed as
    p_s(yhat, y) when the predictor is calibrated on the sample.
    """
    outputs, labels = _outputs_labels(samples)
    n, k = outputs.shape
    joint = np.zeros((k, k))
    for j in range(k):
        mask = labels == j
        if mask.any():
            joint[:, j] = outputs[mask].sum(axis=0)
    joint /= n
    return ConfusionMatrix(joint, ProbVector.normalized(joint.sum(axis=0), tol=1e-9), "soft")


def build_target_prediction_marginal(target_outputs, kind: str) -> ProbVector:
    """mu-hat = p_t(yhat): argmax frequencies (hard) or mean output (soft)."""
    outputs = [o.entries if isinstance(o, ProbVector) else np.asarray(o, float) for o in target_outputs]
    if not outputs:
        raise InputError("target prediction marginal needs at least one output")
    outputs = np.array(outputs)
    n, k = outputs.shape
    if kind == "hard":
        counts = np.bincount(outputs.argmax(axis=1), minlength=k).astype(float)
        return ProbVector(counts / n)
    if kind == "soft":
        return ProbVector.normalized(outputs.mean(axis=0), tol=1e-9)
    raise InputError(f"unknown marginal kind: {kind}")
