"""Concrete predictors: Gaussian-mixture posterior, threshold classifier,
tabular predictors, and binned aggregation for two-class problems."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import InputError
from .simplex import LabeledSample, PredictorTable, ProbVector, grouped_table


@dataclass(frozen=True)
class GmmSpec:
    """Two-Gaussian mixture: class 0 ~ N(mu, 1), class 1 ~ N(-mu, 1)."""

    mu: float
    source_marginal: ProbVector

    def __post_init__(self):
        if not np.isfinite(self.mu):
            raise InputError("mu must be finite")
        if self.source_marginal.k != 2:
            raise InputError("GmmSpec requires a 2-class source marginal")


@dataclass(frozen=True)
class ThresholdPredictorSpec:
    """Probabilistic threshold classifier at x = 0 with confidence level c."""

    c: float

    def __post_init__(self):
        if not 0.0 <= self.c <= 1.0:
            raise InputError(f"threshold parameter c={self.c} outside [0, 1]")


def gmm_posterior(spec: GmmSpec, x) -> np.ndarray:
    """Vectorized Bayes posterior p_s(y|x) for the two-Gaussian mixture.

    Via the logistic of the log density ratio: log(pi0/pi1) + 2*mu*x.
    """
    pi0, pi1 = spec.source_marginal.entries
    x = np.asarray(x, dtype=float)
    p0 = expit(np.log(pi0 / pi1) + 2.0 * spec.mu * x)
    return np.stack([p0, 1.0 - p0], axis=-1)


def gmm_bayes_predict(spec: GmmSpec, x: float) -> ProbVector:
    """Posterior p_s(y|x) at a single point."""
    return ProbVector(gmm_posterior(spec, float(x)))


def threshold_predict(spec: ThresholdPredictorSpec, x: float) -> ProbVector:
    """[c, 1-c] for x >= 0, else [1-c, c].

    With class 0 centered at +mu, the classifier is calibrated exactly when
    c equals the class-0 mass right of the threshold, p_s(x >= 0 | y = 0).
    """
    c = spec.c
    if x >= 0:
        return ProbVector(np.array([c, 1.0 - c]))
    return ProbVector(np.array([1.0 - c, c]))


def threshold_outputs(spec: ThresholdPredictorSpec, xs) -> np.ndarray:
    """Vectorized threshold_predict over an array of inputs."""
    c = spec.c
    xs = np.asarray(xs, dtype=float)
    return np.where((xs >= 0)[:, None], np.array([c, 1.0 - c]), np.array([1.0 - c, c]))


@dataclass(frozen=True)
class BinnedPredictor:
    """Result of bin_aggregate: the aggregated table plus the bin remapping."""

    table: PredictorTable
    n_bins: int
    bin_outputs: dict  # bin index -> np.ndarray output
    empty_bins: tuple

    def bin_index(self, output: ProbVector) -> int:
        return min(int(output.entries[0] * self.n_bins), self.n_bins - 1)

    def bin_indices(self, outputs: np.ndarray) -> np.ndarray:
        return np.minimum((outputs[:, 0] * self.n_bins).astype(int), self.n_bins - 1)

    def remap(self, output: ProbVector) -> ProbVector:
        """Replace an output by its bin's aggregated vector."""
        idx = self.bin_index(output)
        if idx not in self.bin_outputs:
            raise InputError(f"output falls in bin {idx}, which has zero source mass")
        return ProbVector(self.bin_outputs[idx])

    def remap_matrix(self, outputs: np.ndarray) -> np.ndarray:
        """Vectorized remap of an (n, 2) output matrix."""
        idx = self.bin_indices(outputs)
        hit_empty = [b for b in np.unique(idx) if b not in self.bin_outputs]
        if hit_empty:
            raise InputError(f"outputs fall in zero-mass bins {hit_empty}")
        lookup = np.zeros((self.n_bins, outputs.shape[1]))
        for b, vec in self.bin_outputs.items():
            lookup[b] = vec
        return lookup[idx]


def bin_aggregate_arrays(
    outputs: np.ndarray, labels: np.ndarray, n_bins: int, values: str = "label_mean"
) -> BinnedPredictor:
    """Array form of bin_aggregate over (n, 2) outputs and 0/1 labels."""
    if n_bins < 1:
        raise InputError("n_bins must be >= 1")
    if values not in ("label_mean", "output_mean"):
        raise InputError(f"unknown bin value mode: {values}")
    outputs = np.asarray(outputs, dtype=float)
    labels = np.asarray(labels)
    n = outputs.shape[0]
    if n == 0:
        raise InputError("bin_aggregate needs at least one sample")
    k = outputs.shape[1]
    if k != 2:
        raise InputError("equal-width binning is defined for 2-class outputs only")
    idx = np.minimum((outputs[:, 0] * n_bins).astype(int), n_bins - 1)

    counts = np.bincount(idx, minlength=n_bins).astype(float)
    if values == "label_mean":
        sums1 = np.bincount(idx, weights=labels.astype(float), minlength=n_bins)
        with np.errstate(invalid="ignore"):
            frac1 = sums1 / counts
        vecs = np.stack([1.0 - frac1, frac1], axis=1)
    else:
        sums = np.stack(
            [np.bincount(idx, weights=outputs[:, j], minlength=n_bins) for j in range(k)],
            axis=1,
        )
        with np.errstate(invalid="ignore"):
            vecs = sums / counts[:, None]

    nonempty = np.flatnonzero(counts > 0)
    empty = tuple(int(b) for b in np.flatnonzero(counts == 0))
    table = grouped_table(
        [ProbVector.normalized(vecs[b], tol=1e-9) for b in nonempty],
        counts[nonempty] / n,
        "probability",
    )
    return BinnedPredictor(table, n_bins, {int(b): vecs[b] for b in nonempty}, empty)


def bin_aggregate(samples, n_bins: int, values: str = "label_mean") -> BinnedPredictor:
    """Aggregate two-class outputs over equal-width bins of the first coordinate.

    Each bin's vector is the mean one-hot label of the source samples landing in
    it (values="label_mean", the default, which makes the binned predictor
    calibrated on its building sample), or the mean raw output
    (values="output_mean"). Bins with zero source mass are excluded.
    """
    samples = list(samples)
    if not samples:
        raise InputError("bin_aggregate needs at least one sample")
    outputs = np.array([s.output.entries for s in samples])
    labels = np.array([s.label for s in samples])
    return bin_aggregate_arrays(outputs, labels, n_bins, values)


def tabular_predictor(outputs) -> PredictorTable:
    """Verbatim table from (output, mass) pairs; duplicates merged by summing mass."""
    outputs = list(outputs)
    if not outputs:
        raise InputError("tabular predictor needs at least one row")
    return grouped_table([o for o, _ in outputs], [m for _, m in outputs], "probability")


def samples_from_outputs(outputs, labels) -> list:
    """Wrap parallel (n, k) outputs and labels as LabeledSample objects."""
    return [
        LabeledSample(ProbVector.normalized(np.asarray(o, dtype=float), tol=1e-6), int(l))
        for o, l in zip(outputs, labels)
    ]
