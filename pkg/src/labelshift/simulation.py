"""Synthetic benchmark harness: Gaussian-mixture sampling, Dirichlet target
shift, trial execution, and MSE aggregation.

All randomness flows through a counter-based generator (Philox) keyed by a
base seed and trial indices, so any trial can be reproduced in isolation and
trials may run concurrently without sharing state.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from .errors import InputError, LabelShiftError
from .calibration import bcts_apply_matrix, BctsParams
from .confusion import build_hard_confusion, build_soft_confusion, build_target_prediction_marginal
from .diagnostics import check_identifiability
from .estimators import (
    EstimatorConfig,
    bbse,
    mlls_cm,
    mlls_em,
    mlls_grad,
    rlls,
)
from .predictors import GmmSpec, bin_aggregate_arrays, gmm_posterior, samples_from_outputs
from .simplex import PredictorTable, ProbVector, WeightVector, grouped_table


def rng_for(base_seed: int, *indices: int) -> np.random.Generator:
    """Counter-based generator for a (seed, index...) key."""
    ss = np.random.SeedSequence(base_seed, spawn_key=tuple(indices))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class ShiftSpec:
    """Target-marginal protocol: symmetric Dirichlet draw or an explicit prior."""

    mode: str  # "dirichlet" | "explicit"
    alpha: float | None = None
    target_marginal: ProbVector | None = None

    def __post_init__(self):
        if self.mode == "dirichlet":
            if self.alpha is None or self.alpha <= 0:
                raise InputError("dirichlet shift requires alpha > 0")
        elif self.mode == "explicit":
            if self.target_marginal is None:
                raise InputError("explicit shift requires a target marginal")
        else:
            raise InputError(f"unknown shift mode: {self.mode}")

    @property
    def param_label(self) -> str:
        if self.mode == "dirichlet":
            return f"alpha={self.alpha:g}"
        return "pt=" + ",".join(f"{v:g}" for v in self.target_marginal.entries)

    def draw(self, k: int, rng: np.random.Generator) -> ProbVector:
        if self.mode == "explicit":
            if self.target_marginal.k != k:
                raise InputError("explicit target marginal has the wrong length")
            return self.target_marginal
        draw = rng.dirichlet(np.full(k, self.alpha))
        return ProbVector.normalized(draw, tol=1e-9)


@dataclass(frozen=True)
class TrialReport:
    method: str
    w_hat: WeightVector | None
    w_star: WeightVector
    squared_error: float
    seed: int
    m: int
    min_eig: float | None = None
    error_message: str | None = None


@dataclass(frozen=True)
class ExperimentConfig:
    gmm: GmmSpec
    shifts: tuple  # of ShiftSpec
    methods: tuple  # of method names
    m_values: tuple  # of target sample sizes
    n_trials: int
    base_seed: int
    n_source: int = 1000
    rlls_lambda: float = 1e-3
    tol: float = 1e-6
    max_iters: int = 2000
    bins: int | None = None
    w_star_from: str = "marginal"  # or "realized"
    miscalibration: BctsParams | None = None

    def __post_init__(self):
        if not self.methods:
            raise InputError("experiment needs at least one method")
        if self.n_trials < 1 or self.n_source < 1:
            raise InputError("invalid trial configuration")
        if self.w_star_from not in ("marginal", "realized"):
            raise InputError(f"unknown w_star_from: {self.w_star_from}")


def sample_gmm(spec: GmmSpec, marginal: ProbVector, n: int, seed, *indices) -> tuple:
    """Draw (x, label) pairs: labels by inverse-CDF of the marginal, x by
    inverse-CDF Gaussians at mean +mu (class 0) or -mu (class 1)."""
    if n < 0:
        raise InputError("n must be nonnegative")
    rng = seed if isinstance(seed, np.random.Generator) else rng_for(seed, *indices)
    u = rng.random(n)
    labels = (u >= marginal.entries[0]).astype(int)
    z = ndtri(rng.random(n))
    xs = z + np.where(labels == 0, spec.mu, -spec.mu)
    return xs, labels


def sample_dirichlet_shift(alpha: float, k: int, seed, *indices) -> ProbVector:
    """Symmetric Dirichlet(alpha) draw."""
    if alpha <= 0:
        raise InputError("alpha must be positive")
    rng = seed if isinstance(seed, np.random.Generator) else rng_for(seed, *indices)
    return ProbVector.normalized(rng.dirichlet(np.full(k, alpha)), tol=1e-9)


def resample_by_marginal(pool_xs, pool_labels, target_marginal: ProbVector, n: int, seed, *indices):
    """Two-stage target sampling: y ~ p_t(y), then x uniform (with replacement)
    among pool examples with that label."""
    rng = seed if isinstance(seed, np.random.Generator) else rng_for(seed, *indices)
    pool_xs = np.asarray(pool_xs)
    pool_labels = np.asarray(pool_labels)
    k = target_marginal.k
    by_class = [np.flatnonzero(pool_labels == y) for y in range(k)]
    for y in range(k):
        if target_marginal.entries[y] > 0 and by_class[y].size == 0:
            raise InputError(f"class {y} has positive target mass but no pool examples")
    cum = np.cumsum(target_marginal.entries)
    labels = np.searchsorted(cum, rng.random(n), side="right")
    labels = np.minimum(labels, k - 1)
    xs = np.empty(n, dtype=pool_xs.dtype)
    for y in range(k):
        mask = labels == y
        cnt = int(mask.sum())
        if cnt:
            xs[mask] = pool_xs[by_class[y][rng.integers(0, by_class[y].size, cnt)]]
    return xs, labels


CONFUSION_METHODS = ("bbse_hard", "bbse_soft", "rlls", "mlls_cm")


def target_table_from_outputs(outputs: np.ndarray) -> "PredictorTable":
    """Group an (m, k) output matrix into a count table over distinct rows."""
    uniq, counts = np.unique(np.asarray(outputs, dtype=float), axis=0, return_counts=True)
    return grouped_table(
        [ProbVector.normalized(row, tol=1e-6) for row in uniq], counts.astype(float), "count"
    )


def _estimate_once(method, cfg, source_samples, target_list, target_table, source_marginal):
    est_cfg = EstimatorConfig(
        method=method,
        max_iters=cfg.max_iters,
        tol=cfg.tol,
        rlls_lambda=cfg.rlls_lambda,
        clip_negative=True,
    )
    if method in ("bbse_hard", "bbse_soft"):
        kind = "hard" if method == "bbse_hard" else "soft"
        conf = (build_hard_confusion if kind == "hard" else build_soft_confusion)(source_samples)
        mu = build_target_prediction_marginal(target_list, kind)
        return bbse(conf, mu, clip_negative=True)
    if method == "rlls":
        conf = build_hard_confusion(source_samples)
        mu = build_target_prediction_marginal(target_list, "hard")
        return rlls(conf, mu, cfg.rlls_lambda, est_cfg)
    if method in ("mlls_em", "mlls_grad"):
        solver = mlls_em if method == "mlls_em" else mlls_grad
        return solver(target_table, source_marginal, est_cfg)
    if method == "mlls_cm":
        return mlls_cm(source_samples, target_list, source_marginal, est_cfg)
    raise InputError(f"unknown method: {method}")


def run_single_trial(cfg: ExperimentConfig, shift_idx: int, m_idx: int, trial: int):
    """Generate data for one (shift, m, trial) cell and run every method on it.

    Returns a list of TrialReport, one per method; per-method failures are
    recorded in-report rather than aborting.
    """
    shift = cfg.shifts[shift_idx]
    m = cfg.m_values[m_idx]
    seed_key = (shift_idx, m_idx, trial)
    spec = cfg.gmm
    p_s = spec.source_marginal
    k = p_s.k

    p_t = shift.draw(k, rng_for(cfg.base_seed, *seed_key, 0))
    src_x, src_y = sample_gmm(spec, p_s, cfg.n_source, cfg.base_seed, *seed_key, 1)
    tgt_x, tgt_y = sample_gmm(spec, p_t, m, cfg.base_seed, *seed_key, 2)

    src_outputs = gmm_posterior(spec, src_x)
    tgt_outputs = gmm_posterior(spec, tgt_x)
    if cfg.miscalibration is not None:
        src_outputs = bcts_apply_matrix(cfg.miscalibration, src_outputs)
        tgt_outputs = bcts_apply_matrix(cfg.miscalibration, tgt_outputs)

    min_eig = None
    if cfg.bins is not None:
        binned = bin_aggregate_arrays(src_outputs, src_y, cfg.bins)
        src_outputs = binned.remap_matrix(src_outputs)
        tgt_outputs = binned.remap_matrix(tgt_outputs)
        _, min_eig = check_identifiability(binned.table)

    needs_samples = any(m in CONFUSION_METHODS for m in cfg.methods)
    source_samples = samples_from_outputs(src_outputs, src_y) if needs_samples else None
    tgt_list = (
        [ProbVector.normalized(o, tol=1e-6) for o in tgt_outputs] if needs_samples else None
    )
    target_table = (
        target_table_from_outputs(tgt_outputs)
        if any(m in ("mlls_em", "mlls_grad") for m in cfg.methods)
        else None
    )

    if cfg.w_star_from == "marginal":
        w_star_vec = p_t.entries / p_s.entries
    else:
        freq = np.bincount(tgt_y, minlength=k) / m
        w_star_vec = freq / p_s.entries
    w_star = WeightVector(w_star_vec / (w_star_vec @ p_s.entries), p_s)

    reports = []
    for method in cfg.methods:
        seed64 = int(np.random.SeedSequence(cfg.base_seed, spawn_key=seed_key).generate_state(1)[0])
        try:
            res = _estimate_once(method, cfg, source_samples, tgt_list, target_table, p_s)
            sq = float(((res.weights.weights - w_star.weights) ** 2).sum())
            reports.append(
                TrialReport(method, res.weights, w_star, sq, seed64, m, min_eig)
            )
        except LabelShiftError as exc:
            reports.append(
                TrialReport(method, None, w_star, math.nan, seed64, m, min_eig, str(exc))
            )
    return reports


@dataclass(frozen=True)
class AggregateRow:
    shift_param: str
    method: str
    m: int
    n_trials: int
    mse: float
    stderr: float
    n_failed: int = 0
    mean_min_eig: float | None = None


def aggregate(cfg: ExperimentConfig, reports_by_cell: dict) -> list:
    rows = []
    for (shift_idx, m_idx), cell_reports in sorted(reports_by_cell.items()):
        by_method: dict[str, list] = {m: [] for m in cfg.methods}
        for rep in cell_reports:
            by_method[rep.method].append(rep)
        for method in cfg.methods:
            reps = by_method[method]
            errs = np.array([r.squared_error for r in reps])
            ok = errs[~np.isnan(errs)]
            mse = float(ok.mean()) if ok.size else math.nan
            stderr = float(ok.std(ddof=1) / math.sqrt(ok.size)) if ok.size > 1 else math.nan
            eigs = [r.min_eig for r in reps if r.min_eig is not None]
            rows.append(
                AggregateRow(
                    cfg.shifts[shift_idx].param_label,
                    method,
                    cfg.m_values[m_idx],
                    len(reps),
                    mse,
                    stderr,
                    int(np.isnan(errs).sum()),
                    float(np.mean(eigs)) if eigs else None,
                )
            )
    return rows


def run_trials(cfg: ExperimentConfig, max_workers: int = 1):
    """Execute the full sweep; byte-identical results for identical configs.

    Returns (reports, aggregate rows). Reports are keyed by trial indices and
    reduced in key order, so worker count never changes the output.
    """
    cells = [
        (si, mi, t)
        for si in range(len(cfg.shifts))
        for mi in range(len(cfg.m_values))
        for t in range(cfg.n_trials)
    ]
    results: dict = {}
    if max_workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            for key, reps in zip(cells, pool.map(lambda c: run_single_trial(cfg, *c), cells)):
                results[key] = reps
    else:
        for key in cells:
            results[key] = run_single_trial(cfg, *key)

    reports_by_cell: dict = {}
    all_reports = []
    for (si, mi, t) in cells:
        reports_by_cell.setdefault((si, mi), []).extend(results[(si, mi, t)])
        all_reports.extend(results[(si, mi, t)])
    return all_reports, aggregate(cfg, reports_by_cell)


def aggregate_to_csv(rows) -> str:
    lines = ["shift_param,method,m,n_trials,mse,stderr"]
    for r in rows:
        lines.append(f"{r.shift_param},{r.method},{r.m},{r.n_trials},{r.mse:.10g},{r.stderr:.10g}")
    return "\n".join(lines) + "\n"
