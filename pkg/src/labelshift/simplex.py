"""Probability-vector and weight-vector types shared by every estimator.

A weight vector w lives on the affine slice W = {w >= 0 : sum_y w_y p_s(y) = 1}
fixed by a source label marginal p_s. All shift estimators optimize over W.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InputError

SIMPLEX_TOL = 1e-9


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class ProbVector:
    """Point on the probability simplex: entries >= 0, summing to 1."""

    entries: np.ndarray

    def __post_init__(self):
        e = _freeze(self.entries)
        if e.ndim != 1 or e.size == 0:
            raise InputError("probability vector must be a nonempty 1-D array")
        if not np.all(np.isfinite(e)):
            raise InputError("probability vector has non-finite entries")
        if np.any(e < 0):
            raise InputError(f"negative probability entry: {e.min()}")
        s = e.sum()
        if abs(s - 1.0) > SIMPLEX_TOL:
            raise InputError(f"probabilities sum to {s}, off by more than {SIMPLEX_TOL}")
        object.__setattr__(self, "entries", e)

    @classmethod
    def normalized(cls, entries, tol: float = 1e-6) -> "ProbVector":
        """Renormalize entries whose sum is within tol of 1; reject beyond.

        Renormalization is permitted only here, at construction, so that drift
        inside long iterative runs stays detectable.
        """
        e = np.asarray(entries, dtype=float)
        s = e.sum()
        if abs(s - 1.0) > tol:
            raise InputError(f"probabilities sum to {s}, beyond renormalization tolerance {tol}")
        return cls(e / s)

    @property
    def k(self) -> int:
        return self.entries.size

    def __len__(self) -> int:
        return self.entries.size


@dataclass(frozen=True)
class WeightVector:
    """Importance weights w with w >= 0 and sum_y w_y p_s(y) = 1."""

    weights: np.ndarray
    source_marginal: ProbVector
    check_nonneg: bool = field(default=True, compare=False)

    def __post_init__(self):
        w = _freeze(self.weights)
        p = self.source_marginal.entries
        if w.shape != p.shape:
            raise InputError("weights and source marginal have mismatched lengths")
        if not np.all(np.isfinite(w)):
            raise InputError("weight vector has non-finite entries")
        if self.check_nonneg and np.any(w < -SIMPLEX_TOL):
            raise InputError(f"negative weight entry: {w.min()}")
        dot = float(w @ p)
        if abs(dot - 1.0) > SIMPLEX_TOL:
            raise InputError(f"weights violate sum_y w_y p_s(y) = 1 (got {dot})")
        object.__setattr__(self, "weights", w)

    @property
    def k(self) -> int:
        return self.weights.size


@dataclass(frozen=True)
class LabeledSample:
    """A predictor output paired with the true class index (0-based)."""

    output: ProbVector
    label: int

    def __post_init__(self):
        if not 0 <= self.label < self.output.k:
            raise InputError(f"label {self.label} out of range for k={self.output.k}")


@dataclass(frozen=True)
class PredictorTable:
    """Finite-support predictor: distinct output vectors with masses.

    Masses are probabilities (source side) or counts (target side) per `kind`.
    Support vectors are distinct under exact bitwise equality of entries.
    """

    support: tuple  # of (ProbVector, float)
    kind: str  # "probability" | "count"

    def __post_init__(self):
        if self.kind not in ("probability", "count"):
            raise InputError(f"unknown mass kind: {self.kind}")
        if len(self.support) == 0:
            raise InputError("predictor table must have nonempty support")
        seen = set()
        total = 0.0
        for out, mass in self.support:
            if mass < 0:
                raise InputError(f"negative mass {mass} in predictor table")
            key = out.entries.tobytes()
            if key in seen:
                raise InputError("duplicate output vector in predictor table support")
            seen.add(key)
            total += mass
        if self.kind == "probability" and abs(total - 1.0) > SIMPLEX_TOL:
            raise InputError(f"probability masses sum to {total}")
        object.__setattr__(self, "support", tuple(self.support))

    @property
    def k(self) -> int:
        return self.support[0][0].k

    def outputs_matrix(self) -> np.ndarray:
        """Support outputs stacked as an (s, k) array."""
        return np.array([out.entries for out, _ in self.support])

    def masses(self) -> np.ndarray:
        return np.array([m for _, m in self.support])

    def normalized_masses(self) -> np.ndarray:
        m = self.masses()
        return m / m.sum()


def grouped_table(outputs, masses, kind: str) -> PredictorTable:
    """Build a PredictorTable, merging bitwise-identical outputs by summing mass."""
    acc: dict[bytes, list] = {}
    for out, mass in zip(outputs, masses):
        if not isinstance(out, ProbVector):
            out = ProbVector(np.asarray(out, dtype=float))
        key = out.entries.tobytes()
        if key in acc:
            acc[key][1] += mass
        else:
            acc[key] = [out, float(mass)]
    return PredictorTable(tuple((o, m) for o, m in acc.values()), kind)


def project_to_weight_simplex(v, source_marginal: ProbVector) -> WeightVector:
    """Euclidean projection of v onto W = {w >= 0 : w . p_s = 1}.

    Solves the KKT system of min ||v - w||^2: w_y = max(0, v_y - lam * p_y)
    with lam chosen so the affine constraint holds. The active set is a prefix
    of the coordinates sorted by v_y / p_y, so we scan prefixes directly.
    """
    p = source_marginal.entries
    if np.any(p <= 0):
        raise InputError("projection requires a strictly positive source marginal")
    v = np.asarray(v, dtype=float)
    if v.shape != p.shape:
        raise InputError("vector and source marginal have mismatched lengths")

    order = np.argsort(-(v / p))  # descending ratios; active sets are prefixes
    vs, ps = v[order], p[order]
    lam = None
    for j in range(1, len(v) + 1):
        cand = (vs[:j] @ ps[:j] - 1.0) / (ps[:j] ** 2).sum()
        # consistent iff coordinates in the prefix stay nonnegative and the
        # first excluded coordinate would be clipped
        if vs[j - 1] - cand * ps[j - 1] < -1e-12:
            continue
        if j < len(v) and vs[j] - cand * ps[j] > 1e-12:
            continue
        lam = cand
        break
    if lam is None:  # numerically impossible, guarded for safety
        lam = (vs @ ps - 1.0) / (ps ** 2).sum()
    w = np.maximum(v - lam * p, 0.0)
    w /= w @ p  # remove last-bit drift
    return WeightVector(w, source_marginal)


def weights_to_target_marginal(w: WeightVector) -> ProbVector:
    """Target label marginal p_t(y) = w_y * p_s(y)."""
    return ProbVector.normalized(w.weights * w.source_marginal.entries, tol=1e-9)
