"""Collapse metrics for feature/decoder pairs in multivariate regression.

Three scores quantify how far a trained (H, W) pair is from the analytic
optimum of the regularized free-feature model:

* ``nrc1``: do feature vectors live in their own top-n principal subspace?
* ``nrc2``: do feature vectors live in the decoder's row space?
* ``nrc3``: does W W^T match the shrunk target spectrum Sigma^(1/2) -
  sqrt(gamma) I up to scale?

All three vanish at the closed-form optimum (with gamma = c for ``nrc3``).
The module also computes explained variance ratios of the centered features
and the best gamma for ``nrc3`` (closed form when a trace condition holds,
bracketed golden-section search otherwise).
"""

from __future__ import annotations

import json
import os
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .dataset import TargetMatrix, TargetStats
from .errors import (
    ConfigMissing,
    DegenerateInput,
    DimensionError,
    GammaOutOfRangeWarning,
    ZeroFeatureWarning,
)
from .ufm import PINV_CUTOFF, UFMConfig

GAMMA_GRID_POINTS = 200  # bracketing grid for the gamma search
GAMMA_EDGE = 1e-9  # search domain is (eps, lambda_min - eps), eps = GAMMA_EDGE * lambda_min


@dataclass(frozen=True)
class NRCReport:
    """All collapse metrics for one (H, W) snapshot.

    ``nrc3``, ``gamma_used`` and ``residual_whiteness`` are None when not
    applicable (single target dimension, or no config/targets supplied).
    ``evr`` always holds the full spectrum, min(d, M) entries.
    """

    nrc1: float
    nrc2: float
    nrc3: float | None
    gamma_used: float | None
    gamma_source: str
    evr: np.ndarray
    residual_whiteness: float | None

    def to_json(self) -> str:
        payload = {
            "nrc1": self.nrc1,
            "nrc2": self.nrc2,
            "nrc3": self.nrc3,
            "gamma_used": self.gamma_used,
            "gamma_source": self.gamma_source,
            "evr": self.evr.tolist(),
            "residual_whiteness": self.residual_whiteness,
        }
        return json.dumps(payload, sort_keys=True)


def nrc1(features: np.ndarray, n: int) -> float:
    """Mean squared residual of unit-normalized feature columns outside their
    own top-n principal subspace (uncentered principal components)."""
    h = np.asarray(features, dtype=float)
    if h.ndim != 2:
        raise DimensionError("features must be a 2-D matrix")
    d, m = h.shape
    if not 1 <= n <= min(d, m):
        raise DimensionError(f"need 1 <= n <= min(d, M) = {min(d, m)}, got n={n}")
    if not np.any(h):
        raise DegenerateInput("features are identically zero")
    u, _, _ = np.linalg.svd(h, full_matrices=False)
    return _mean_offspan_residual(h, u[:, :n])


def nrc2(features: np.ndarray, weights: np.ndarray) -> float:
    """Mean squared residual of unit-normalized feature columns outside the
    row space of the decoder."""
    h = np.asarray(features, dtype=float)
    w = np.asarray(weights, dtype=float)
    if h.ndim != 2 or w.ndim != 2:
        raise DimensionError("features and weights must be 2-D matrices")
    if w.shape[1] != h.shape[0]:
        raise DimensionError(
            f"weights have {w.shape[1]} columns but features have {h.shape[0]} rows"
        )
    if not np.any(w):
        raise DegenerateInput("decoder is identically zero")
    if not np.any(h):
        raise DegenerateInput("features are identically zero")
    _, s, vt = np.linalg.svd(w, full_matrices=False)
    rank = int(np.count_nonzero(s > PINV_CUTOFF * s[0]))
    return _mean_offspan_residual(h, vt[:rank].T)


def nrc3(weights: np.ndarray, stats: TargetStats, gamma: float) -> float | None:
    """Squared Frobenius distance between W W^T and Sigma^(1/2) -
    sqrt(gamma) I, both scaled to unit Frobenius norm.

    Returns None for a single target dimension, where any nonzero W W^T
    trivially matches the 1x1 reference up to scale.
    """
    w = np.asarray(weights, dtype=float)
    n = stats.n
    if w.ndim != 2 or w.shape[0] != n:
        raise DimensionError(f"weights must have {n} rows, got shape {w.shape}")
    if n == 1:
        return None
    if gamma <= 0 or not np.isfinite(gamma):
        raise ValueError(f"gamma must be a positive real, got {gamma!r}")
    gram = w @ w.T
    target = stats.sqrt_covariance - np.sqrt(gamma) * np.eye(n)
    gram_norm = float(np.linalg.norm(gram))
    target_norm = float(np.linalg.norm(target))
    if gram_norm == 0.0:
        raise DegenerateInput("decoder is identically zero")
    if target_norm == 0.0:
        raise DegenerateInput(
            "sqrt-covariance minus sqrt(gamma) I vanishes; metric undefined"
        )
    diff = gram / gram_norm - target / target_norm
    return float(np.sum(diff * diff))


def optimal_gamma(weights: np.ndarray, stats: TargetStats):
    """Best gamma for ``nrc3``, as ``(gamma, source)``.

    When tr(Sigma^(1/2)) exceeds tr(W W^T) the unnormalized objective
    ||W W^T - Sigma^(1/2) + sqrt(gamma) I||_F^2 has the closed-form minimizer
    [(tr(Sigma^(1/2)) - tr(W W^T)) / n]^2 (source "closed_form"); a value at
    or beyond lambda_min is still returned, with a warning. Otherwise the
    normalized metric is minimized by golden-section search over
    (0, lambda_min) after a 200-point bracketing scan (source "search").
    Single target dimension: (None, "na").
    """
    w = np.asarray(weights, dtype=float)
    n = stats.n
    if n == 1:
        return None, "na"
    if w.ndim != 2 or w.shape[0] != n:
        raise DimensionError(f"weights must have {n} rows, got shape {w.shape}")
    trace_gap = float(np.trace(stats.sqrt_covariance) - np.trace(w @ w.T))
    if trace_gap > 0.0:
        gamma = (trace_gap / n) ** 2
        if gamma >= stats.lambda_min:
            warnings.warn(
                f"closed-form gamma {gamma:.6g} is outside (0, lambda_min="
                f"{stats.lambda_min:.6g})",
                GammaOutOfRangeWarning,
                stacklevel=2,
            )
        return gamma, "closed_form"
    lam_min = stats.lambda_min
    eps = GAMMA_EDGE * lam_min
    grid = np.linspace(eps, lam_min - eps, GAMMA_GRID_POINTS)

    def objective(g: float) -> float:
        if not eps <= g <= lam_min - eps:
            return np.inf
        try:
            value = nrc3(w, stats, g)
        except DegenerateInput:
            return np.inf
        return value if value is not None else np.inf

    values = np.array([objective(g) for g in grid])
    best = int(np.argmin(values))
    lo = grid[max(best - 1, 0)]
    hi = grid[min(best + 1, GAMMA_GRID_POINTS - 1)]
    gamma = float(grid[best])
    if lo < grid[best] < hi:
        try:
            result = optimize.minimize_scalar(
                objective, bracket=(lo, grid[best], hi), method="golden"
            )
            x = float(np.clip(result.x, eps, lam_min - eps))
            if np.isfinite(x) and objective(x) <= values[best]:
                gamma = x
        except ValueError:
            pass
    return gamma, "search"


def explained_variance_ratio(features: np.ndarray, k: int) -> np.ndarray:
    """Fraction of centered-feature variance captured by each of the top k
    principal directions, descending."""
    h = np.asarray(features, dtype=float)
    if h.ndim != 2:
        raise DimensionError("features must be a 2-D matrix")
    d, m = h.shape
    if not 1 <= k <= min(d, m):
        raise DimensionError(f"need 1 <= k <= min(d, M) = {min(d, m)}, got k={k}")
    centered = h - h.mean(axis=1, keepdims=True)
    s = np.linalg.svd(centered, compute_uv=False)
    total = float(np.sum(s * s))
    if total == 0.0:
        raise DegenerateInput("features have no variance")
    return (s[:k] * s[:k]) / total


def nrc_report(
    features: np.ndarray,
    weights: np.ndarray,
    stats: TargetStats,
    cfg: UFMConfig | None = None,
    gamma_policy: str = "auto",
    gamma: float | None = None,
    targets=None,
    bias: np.ndarray | None = None,
) -> NRCReport:
    """All metrics for one snapshot.

    ``gamma_policy``: "auto" uses :func:`optimal_gamma`; "supplied" uses the
    explicit ``gamma``; "exact_c" uses cfg.c (requires ``cfg``). Residual
    whiteness ||E E^T / M - c I||_F is reported only when ``cfg``,
    ``targets`` and ``bias`` are all given; otherwise None.
    """
    h = np.asarray(features, dtype=float)
    w = np.asarray(weights, dtype=float)
    n = stats.n
    value1 = nrc1(h, n)
    value2 = nrc2(h, w)
    if n == 1:
        value3, gamma_used, source = None, None, "na"
    elif gamma_policy == "auto":
        gamma_used, source = optimal_gamma(w, stats)
        value3 = nrc3(w, stats, gamma_used) if gamma_used is not None else None
    elif gamma_policy == "supplied":
        if gamma is None:
            raise ConfigMissing("gamma_policy 'supplied' needs an explicit gamma")
        gamma_used, source = float(gamma), "supplied"
        value3 = nrc3(w, stats, gamma_used)
    elif gamma_policy == "exact_c":
        if cfg is None:
            raise ConfigMissing("gamma_policy 'exact_c' needs a UFMConfig")
        gamma_used, source = cfg.c, "supplied"
        value3 = nrc3(w, stats, gamma_used)
    else:
        raise ValueError(f"unknown gamma_policy {gamma_policy!r}")
    evr = explained_variance_ratio(h, min(h.shape))
    whiteness = None
    if cfg is not None and targets is not None and bias is not None:
        tm = targets if isinstance(targets, TargetMatrix) else TargetMatrix(targets)
        e = w @ h + np.asarray(bias, dtype=float).ravel()[:, None] - tm.values
        whiteness = float(
            np.linalg.norm(e @ e.T / tm.num_samples - cfg.c * np.eye(n))
        )
    return NRCReport(
        nrc1=value1,
        nrc2=value2,
        nrc3=value3,
        gamma_used=gamma_used,
        gamma_source=source,
        evr=evr,
        residual_whiteness=whiteness,
    )


def append_report_csv(path, step: int, report: NRCReport) -> None:
    """Append one report row to a CSV log, writing the header on first use.

    Header: step,nrc1,nrc2,nrc3,gamma,evr1..evrK,whiteness. Non-applicable
    values are written as nan.
    """
    k = len(report.evr)
    need_header = not os.path.exists(path) or os.path.getsize(path) == 0
    with open(path, "a", encoding="utf-8") as fh:
        if need_header:
            evr_cols = ",".join(f"evr{i + 1}" for i in range(k))
            fh.write(f"step,nrc1,nrc2,nrc3,gamma,{evr_cols},whiteness\n")
        cells = [str(step)]
        cells.extend(
            _fmt(v)
            for v in (report.nrc1, report.nrc2, report.nrc3, report.gamma_used)
        )
        cells.extend(_fmt(v) for v in report.evr)
        cells.append(_fmt(report.residual_whiteness))
        fh.write(",".join(cells) + "\n")


def _fmt(value) -> str:
    if value is None:
        return "nan"
    return "%.17g" % float(value)


def _mean_offspan_residual(h: np.ndarray, basis: np.ndarray) -> float:
    """Average over columns of ||h_i/||h_i|| - P h_i/||h_i||||^2 for the
    orthogonal projector P onto span(basis). Zero columns count as 0."""
    norms = np.linalg.norm(h, axis=0)
    zero = norms == 0.0
    if np.any(zero):
        warnings.warn(
            f"{int(zero.sum())} zero feature column(s) contribute 0",
            ZeroFeatureWarning,
            stacklevel=3,
        )
    safe = np.where(zero, 1.0, norms)
    unit = h / safe
    coords = basis.T @ unit
    resid = 1.0 - np.sum(coords * coords, axis=0)
    resid = np.clip(resid, 0.0, None)
    resid[zero] = 0.0
    return float(resid.mean())
