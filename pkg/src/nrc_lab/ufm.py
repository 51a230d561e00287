"""Closed-form global minima of the regularized free-feature regression model.

The model treats the feature matrix H (d x M) as a free variable alongside a
linear decoder W (n x d) and bias b, minimizing

    L(W, H, b) = 1/(2M) ||W H + b 1^T - Y||_F^2
               + lambda_h/(2M) ||H||_F^2 + lambda_w/2 ||W||_F^2.

With c := lambda_h * lambda_w > 0 the minimizers have an explicit spectral
form in the eigenbasis of the target covariance; with c = 0 there is instead
an infinite family of zero-loss solutions parameterized by a null-space
component. Both constructions live here, together with a gradient-residual
check that certifies critical points.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import TargetMatrix, TargetStats, load_matrix, write_matrix
from .errors import (
    BoundaryCWarning,
    DimensionError,
    NumericalError,
    RankDeficientW,
    RegimeError,
    UseNoRegularizationSolver,
)

# |c - lambda_i| <= BOUNDARY_RTOL * lambda_i flags a regime-boundary config.
BOUNDARY_RTOL = 1e-12

# Singular values below PINV_CUTOFF * sigma_max are treated as zero.
PINV_CUTOFF = 1e-12

# Numerical rank of a decoder: singular values above RANK_CUTOFF * sigma_max.
RANK_CUTOFF = 1e-8


@dataclass(frozen=True)
class UFMConfig:
    """Regularization strengths; ``c`` is always their exact product."""

    lambda_h: float
    lambda_w: float
    c: float = field(init=False)

    def __post_init__(self):
        lh, lw = float(self.lambda_h), float(self.lambda_w)
        if not (np.isfinite(lh) and np.isfinite(lw)):
            raise ValueError("regularization constants must be finite")
        if lh < 0 or lw < 0:
            raise ValueError("regularization constants must be nonnegative")
        object.__setattr__(self, "lambda_h", lh)
        object.__setattr__(self, "lambda_w", lw)
        object.__setattr__(self, "c", lh * lw)


@dataclass(frozen=True)
class UFMSolution:
    """A global minimizer (W, H, b) plus the spectral data it was built from.

    ``shrunk_spectrum`` holds (sqrt(lambda_i) - sqrt(c))_+ for each target
    eigenvalue, ``active_rank`` the number of strictly positive entries, and
    ``rotation`` the semi-orthogonal factor that parameterizes the solution
    family. ``notes`` carries non-fatal warnings raised during construction.
    """

    weights: np.ndarray
    features: np.ndarray
    bias: np.ndarray
    rotation: np.ndarray
    active_rank: int
    shrunk_spectrum: np.ndarray
    lambda_h: float
    lambda_w: float
    rotation_seed: int
    loss: float
    notes: tuple = ()

    @property
    def c(self) -> float:
        return self.lambda_h * self.lambda_w

    def config(self) -> UFMConfig:
        return UFMConfig(self.lambda_h, self.lambda_w)

    def save(self, directory) -> None:
        """Write W.csv, H.csv, b.csv and meta.json into ``directory``."""
        out = Path(directory)
        out.mkdir(parents=True, exist_ok=True)
        write_matrix(out / "W.csv", self.weights)
        write_matrix(out / "H.csv", self.features)
        write_matrix(out / "b.csv", self.bias)
        meta = {
            "active_rank": int(self.active_rank),
            "c": self.c,
            "lambda_h": self.lambda_h,
            "lambda_w": self.lambda_w,
            "rotation_seed": int(self.rotation_seed),
            "loss": self.loss,
            "shrunk_spectrum": self.shrunk_spectrum.tolist(),
            "notes": list(self.notes),
        }
        (out / "meta.json").write_text(
            json.dumps(meta, sort_keys=True, indent=2) + "\n", encoding="utf-8"
        )

    @classmethod
    def load(cls, directory) -> "UFMSolution":
        src = Path(directory)
        meta = json.loads((src / "meta.json").read_text(encoding="utf-8"))
        w = load_matrix(src / "W.csv", layout="cols")
        h = load_matrix(src / "H.csv", layout="cols")
        b = load_matrix(src / "b.csv", layout="cols").ravel()
        rotation = sample_semi_orthogonal(
            w.shape[0], w.shape[1], meta["rotation_seed"]
        )
        return cls(
            weights=w,
            features=h,
            bias=b,
            rotation=rotation,
            active_rank=int(meta["active_rank"]),
            shrunk_spectrum=np.asarray(meta["shrunk_spectrum"], dtype=float),
            lambda_h=float(meta["lambda_h"]),
            lambda_w=float(meta["lambda_w"]),
            rotation_seed=int(meta["rotation_seed"]),
            loss=float(meta["loss"]),
            notes=tuple(meta.get("notes", ())),
        )


@dataclass(frozen=True)
class NoRegSolution:
    """One member of the zero-regularization solution family.

    The feature matrix decomposes as H = W^+ Y + (I - W^+ W) Z: a row-space
    part fixed by the targets plus an arbitrary null-space part.
    """

    weights: np.ndarray
    pseudo_inverse: np.ndarray
    null_component: np.ndarray
    features: np.ndarray


@dataclass(frozen=True)
class GradientResiduals:
    """Frobenius norms of the three analytic partial gradients."""

    grad_h_norm: float
    grad_w_norm: float
    grad_b_norm: float

    def max_norm(self) -> float:
        return max(self.grad_h_norm, self.grad_w_norm, self.grad_b_norm)


def sample_semi_orthogonal(n: int, d: int, seed: int) -> np.ndarray:
    """Deterministic n x d matrix with orthonormal rows (R R^T = I_n).

    Rows come from a QR orthonormalization of a seeded Gaussian draw, with
    signs fixed so the result does not depend on LAPACK's sign conventions.
    """
    if n > d:
        raise DimensionError(f"need n <= d for orthonormal rows, got n={n}, d={d}")
    if n < 1:
        raise DimensionError("n must be at least 1")
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((d, n))
    q, r = np.linalg.qr(g)
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return (q * signs).T


def solve_closed_form(
    stats: TargetStats,
    cfg: UFMConfig,
    targets,
    rotation_seed: int = 0,
    feature_dim: int | None = None,
) -> UFMSolution:
    """Construct a global minimizer from the target spectrum.

    In the eigenbasis of the covariance, each spectral direction carries
    weight (sqrt(lambda_i) - sqrt(c))_+; directions with lambda_i below c are
    shut off entirely. The decoder is W = (lambda_h/lambda_w)^{1/4} U
    diag(sqrt(weight_i)) R for a seeded semi-orthogonal R, the features are
    H = sqrt(lambda_w/lambda_h) W^T Sigma^{-1/2} (Y - mean), and the bias is
    the target mean. When c exceeds every eigenvalue this degenerates to the
    all-zero solution. ``feature_dim`` defaults to 8 n.
    """
    tm = targets if isinstance(targets, TargetMatrix) else TargetMatrix(targets)
    n = stats.n
    if tm.n != n:
        raise DimensionError(
            f"stats are for {n} target dimensions but Y has {tm.n}"
        )
    if cfg.c == 0.0:
        raise UseNoRegularizationSolver(
            "c = lambda_h * lambda_w is zero; the regularized closed form "
            "does not apply, use solve_no_regularization"
        )
    d = int(feature_dim) if feature_dim is not None else 8 * n
    if d < n:
        raise DimensionError(f"feature_dim must be at least n={n}, got {d}")

    notes = []
    for i, lam in enumerate(stats.eigenvalues):
        if abs(cfg.c - lam) <= BOUNDARY_RTOL * lam:
            msg = (
                f"c={cfg.c!r} sits on the regime boundary at eigenvalue "
                f"{i + 1} ({lam!r}); the optimum is non-strict there"
            )
            notes.append(msg)
            warnings.warn(msg, BoundaryCWarning, stacklevel=2)

    sqrt_c = np.sqrt(cfg.c)
    shrunk = np.clip(np.sqrt(stats.eigenvalues) - sqrt_c, 0.0, None)
    j_star = int(np.count_nonzero(shrunk > 0.0))
    rotation = sample_semi_orthogonal(n, d, rotation_seed)
    scale = (cfg.lambda_h / cfg.lambda_w) ** 0.25
    w = scale * (stats.eigenvectors * np.sqrt(shrunk)) @ rotation
    centered = tm.values - stats.mean[:, None]
    h = np.sqrt(cfg.lambda_w / cfg.lambda_h) * (
        w.T @ (stats.inverse_sqrt() @ centered)
    )
    b = stats.mean.copy()
    m = tm.num_samples
    resid = w @ h + b[:, None] - tm.values
    loss = (
        0.5 / m * float(np.sum(resid * resid))
        + 0.5 * cfg.lambda_h / m * float(np.sum(h * h))
        + 0.5 * cfg.lambda_w * float(np.sum(w * w))
    )
    return UFMSolution(
        weights=w,
        features=h,
        bias=b,
        rotation=rotation,
        active_rank=j_star,
        shrunk_spectrum=shrunk,
        lambda_h=cfg.lambda_h,
        lambda_w=cfg.lambda_w,
        rotation_seed=int(rotation_seed),
        loss=loss,
        notes=tuple(notes),
    )


def optimal_loss(stats: TargetStats, cfg: UFMConfig) -> float:
    """Minimal objective value as a function of the spectrum alone.

    Active directions (lambda_i >= c) each contribute c/2 +
    sqrt(c)(sqrt(lambda_i) - sqrt(c)); shut-off directions contribute
    lambda_i/2, the cost of predicting the mean. c = 0 gives zero loss.
    """
    c = cfg.c
    if c == 0.0:
        return 0.0
    sqrt_c = np.sqrt(c)
    lam = stats.eigenvalues
    active = lam >= c
    total = np.sum(0.5 * c + sqrt_c * (np.sqrt(lam[active]) - sqrt_c))
    total += 0.5 * np.sum(lam[~active])
    return float(total)


def residual(
    sol: UFMSolution, targets, stats: TargetStats, cfg: UFMConfig
) -> np.ndarray:
    """Prediction error E = W H + b 1^T - Y of a closed-form solution.

    Valid only in the fully active regime c < lambda_min, where E equals
    -sqrt(c) Sigma^{-1/2} (Y - mean) and the per-sample error covariance
    E E^T / M is exactly c I_n: the optimal predictor's mistakes are white.
    Both identities are asserted before returning.
    """
    tm = targets if isinstance(targets, TargetMatrix) else TargetMatrix(targets)
    if cfg.c >= stats.lambda_min:
        raise RegimeError(
            f"residual identities require c < lambda_min "
            f"(c={cfg.c:.3e}, lambda_min={stats.lambda_min:.3e})"
        )
    y = tm.values
    m = tm.num_samples
    e = sol.weights @ sol.features + sol.bias[:, None] - y
    centered = y - stats.mean[:, None]
    predicted = -np.sqrt(cfg.c) * (stats.inverse_sqrt() @ centered)
    y_norm = float(np.linalg.norm(y))
    tol = 1e-9 * float(np.linalg.norm(predicted)) + 1e-12 * (1.0 + y_norm)
    err = float(np.linalg.norm(e - predicted))
    if err > tol:
        raise NumericalError(
            f"residual deviates from -sqrt(c) Sigma^(-1/2) (Y - mean) by "
            f"{err:.3e} (tolerance {tol:.3e})"
        )
    gram = e @ e.T / m
    gram_err = float(np.linalg.norm(gram - cfg.c * np.eye(tm.n)))
    gram_tol = 1e-9 * np.sqrt(tm.n) * cfg.c + 1e-14 * (1.0 + y_norm**2 / m)
    if gram_err > gram_tol:
        raise NumericalError(
            f"residual covariance deviates from c I by {gram_err:.3e} "
            f"(tolerance {gram_tol:.3e})"
        )
    return e


def solve_no_regularization(targets, weights: np.ndarray, null_component: np.ndarray) -> NoRegSolution:
    """Zero-loss solution H = W^+ Y + (I - W^+ W) Z for a full-row-rank W.

    Any null-space component Z yields the same (zero) fit, which is what
    makes the unregularized problem's minimizers non-unique.
    """
    tm = targets if isinstance(targets, TargetMatrix) else TargetMatrix(targets)
    w = np.asarray(weights, dtype=float)
    z = np.asarray(null_component, dtype=float)
    if w.ndim != 2:
        raise DimensionError("weights must be a 2-D matrix")
    n, d = w.shape
    if n != tm.n:
        raise DimensionError(f"weights have {n} rows but targets have {tm.n}")
    if d < n:
        raise DimensionError(f"need d >= n, got d={d}, n={n}")
    if z.shape != (d, tm.num_samples):
        raise DimensionError(
            f"null component must be {d} x {tm.num_samples}, got {z.shape}"
        )
    u, s, vt = np.linalg.svd(w, full_matrices=False)
    if s.size == 0 or np.count_nonzero(s > RANK_CUTOFF * s[0]) < n:
        raise RankDeficientW(
            f"weights must have full row rank {n}; singular values {s}"
        )
    keep = s > PINV_CUTOFF * s[0]
    inv_s = np.where(keep, 1.0 / np.where(keep, s, 1.0), 0.0)
    pinv = vt.T @ (inv_s[:, None] * u.T)
    h = pinv @ tm.values + (z - pinv @ (w @ z))
    m = tm.num_samples
    loss = 0.5 / m * float(np.sum((w @ h - tm.values) ** 2))
    bound = 1e-18 * float(np.sum(tm.values**2)) / m
    if loss > max(bound, 1e-300):
        raise NumericalError(
            f"null-space construction failed to reach machine-zero loss "
            f"({loss:.3e} > {bound:.3e})"
        )
    return NoRegSolution(
        weights=w, pseudo_inverse=pinv, null_component=z, features=h
    )


def verify_critical_point(features, weights, bias, targets, cfg: UFMConfig) -> GradientResiduals:
    """Frobenius norms of the analytic gradients at (H, W, b).

    All three vanish at any critical point of the objective, so near-zero
    norms certify a candidate solution without rerunning an optimizer.
    """
    h = np.asarray(features, dtype=float)
    w = np.asarray(weights, dtype=float)
    b = np.asarray(bias, dtype=float).ravel()
    tm = targets if isinstance(targets, TargetMatrix) else TargetMatrix(targets)
    y = tm.values
    if h.ndim != 2 or w.ndim != 2:
        raise DimensionError("features and weights must be 2-D matrices")
    n, d = w.shape
    if h.shape[0] != d or h.shape[1] != y.shape[1] or y.shape[0] != n or b.shape != (n,):
        raise DimensionError(
            f"inconsistent shapes: W {w.shape}, H {h.shape}, b {b.shape}, "
            f"Y {y.shape}"
        )
    m = y.shape[1]
    e = w @ h + b[:, None] - y
    grad_h = (w.T @ e) / m + (cfg.lambda_h / m) * h
    grad_w = (e @ h.T) / m + cfg.lambda_w * w
    grad_b = e.sum(axis=1) / m
    return GradientResiduals(
        grad_h_norm=float(np.linalg.norm(grad_h)),
        grad_w_norm=float(np.linalg.norm(grad_w)),
        grad_b_norm=float(np.linalg.norm(grad_b)),
    )
