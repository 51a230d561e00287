"""Target matrices, their spectral statistics, and synthetic data generation.

The library-wide convention is samples-as-columns: a target matrix is n x M
(n target dimensions, M samples) and an input matrix is D x M. CSV files on
disk may use either orientation; see :func:`load_matrix` and :func:`oriented`.

All operations here are pure functions over immutable inputs (arrays are
treated as read-only by convention); randomness is driven entirely by the
explicit seed in :class:`SyntheticSpec`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimensionError,
    EmptyInput,
    NotPSD,
    ParseError,
    RankDeficientTargets,
)

# Scale-free detection threshold for a rank-deficient target covariance:
# lambda_min <= RANK_TOLERANCE * lambda_max fails.
RANK_TOLERANCE = 1e-10

_TEACHER_WIDTH = 32  # hidden width of the fixed random two-layer teacher


@dataclass(frozen=True)
class TargetMatrix:
    """An n x M matrix of regression targets, one sample per column."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2:
            raise DimensionError(f"target matrix must be 2-D, got shape {v.shape}")
        n, m = v.shape
        if n < 1 or m < 2:
            raise DimensionError(f"need n >= 1 and M >= 2, got n={n}, M={m}")
        if n > m:
            raise DimensionError(
                f"need n <= M for a full-rank covariance, got n={n} > M={m}"
            )
        if not np.all(np.isfinite(v)):
            raise DimensionError("target matrix contains non-finite entries")
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def num_samples(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class TargetStats:
    """Precomputed spectral facts about a target matrix.

    ``eigenvalues`` are descending; ``eigenvectors`` holds the matching
    orthonormal eigenvectors as columns. ``pearson`` lists the pairwise
    correlations of the target components, (i, j) pairs with i < j in
    lexicographic order, so it has length n(n-1)/2.
    """

    mean: np.ndarray
    covariance: np.ndarray
    sqrt_covariance: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    pearson: np.ndarray

    @property
    def n(self) -> int:
        return self.covariance.shape[0]

    @property
    def lambda_min(self) -> float:
        return float(self.eigenvalues[-1])

    @property
    def lambda_max(self) -> float:
        return float(self.eigenvalues[0])

    def inverse_sqrt(self) -> np.ndarray:
        """The inverse of the symmetric square root of the covariance."""
        u = self.eigenvectors
        inv = u @ np.diag(1.0 / np.sqrt(self.eigenvalues)) @ u.T
        return 0.5 * (inv + inv.T)

    def to_json(self) -> str:
        """Serialize as a JSON object with row-major nested arrays."""
        payload = {
            "mean": self.mean.tolist(),
            "covariance": self.covariance.tolist(),
            "sqrt_covariance": self.sqrt_covariance.tolist(),
            "eigenvalues": self.eigenvalues.tolist(),
            "pearson": self.pearson.tolist(),
        }
        return json.dumps(payload, sort_keys=True)


@dataclass(frozen=True)
class SyntheticSpec:
    """Recipe for a synthetic regression dataset with a prescribed target
    covariance."""

    input_dim: int
    target_dim: int
    num_samples: int
    target_covariance: np.ndarray
    map_kind: str = "linear"  # "linear" | "mlp-teacher"
    noise_std: float = 0.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(
            self, "target_covariance", np.asarray(self.target_covariance, dtype=float)
        )
        if self.map_kind not in ("linear", "mlp-teacher"):
            raise ValueError(f"unknown map_kind {self.map_kind!r}")
        if self.input_dim < 1 or self.target_dim < 1 or self.num_samples < 2:
            raise DimensionError("input_dim, target_dim >= 1 and num_samples >= 2 required")
        if self.target_dim > min(self.input_dim, self.num_samples):
            raise DimensionError(
                "target_dim must not exceed min(input_dim, num_samples)"
            )
        if self.noise_std < 0:
            raise ValueError("noise_std must be nonnegative")
        cov = self.target_covariance
        if cov.shape != (self.target_dim, self.target_dim):
            raise DimensionError(
                f"target_covariance must be {self.target_dim} x {self.target_dim}, "
                f"got {cov.shape}"
            )
        _require_spd(cov, "target_covariance")


@dataclass(frozen=True)
class RegressionDataset:
    """Paired inputs (D x M) and targets (n x M)."""

    inputs: np.ndarray
    targets: TargetMatrix

    def __post_init__(self):
        object.__setattr__(self, "inputs", np.asarray(self.inputs, dtype=float))
        if self.inputs.ndim != 2:
            raise DimensionError("inputs must be a 2-D matrix")
        if self.inputs.shape[1] != self.targets.num_samples:
            raise DimensionError(
                f"inputs have {self.inputs.shape[1]} columns but targets have "
                f"{self.targets.num_samples}"
            )


def load_matrix(
    path, layout: str = "rows", header: bool = False, allow_non_finite: bool = False
) -> np.ndarray:
    """Parse a numeric CSV file into a matrix.

    ``layout`` declares which axis of the file holds samples ("rows" or
    "cols"); the returned array keeps the file's orientation. Use
    :func:`oriented` to convert to the internal samples-as-columns
    convention. ``header=True`` skips the first row. Non-finite entries are
    rejected unless ``allow_non_finite`` is set (trace logs use nan for
    not-applicable fields).
    """
    if layout not in ("rows", "cols"):
        raise ValueError(f"layout must be 'rows' or 'cols', got {layout!r}")
    with open(path, encoding="utf-8") as fh:
        lines = [ln.rstrip("\n").rstrip("\r") for ln in fh]
    lines = [ln for ln in lines if ln.strip() != ""]
    if header:
        lines = lines[1:]
    if not lines:
        raise EmptyInput(f"no data rows in {path}")
    rows = []
    width = None
    for i, line in enumerate(lines, start=1):
        cells = line.split(",")
        if width is None:
            width = len(cells)
        elif len(cells) != width:
            raise ParseError(
                f"{path}: row {i} has {len(cells)} columns, expected {width}"
            )
        parsed = []
        for j, cell in enumerate(cells, start=1):
            try:
                value = float(cell)
            except ValueError:
                raise ParseError(
                    f"{path}: ParseError at row {i}, column {j}: {cell.strip()!r} "
                    "is not numeric"
                ) from None
            if not allow_non_finite and not np.isfinite(value):
                raise ParseError(
                    f"{path}: ParseError at row {i}, column {j}: non-finite value"
                )
            parsed.append(value)
        rows.append(parsed)
    return np.array(rows, dtype=float)


def oriented(mat: np.ndarray, layout: str) -> np.ndarray:
    """Return ``mat`` in the samples-as-columns convention given the layout it
    was stored with."""
    if layout == "rows":
        return np.ascontiguousarray(mat.T)
    if layout == "cols":
        return mat
    raise ValueError(f"layout must be 'rows' or 'cols', got {layout!r}")


def write_matrix(path, mat: np.ndarray) -> None:
    """Write a matrix (or vector, saved as one row) as CSV with enough digits
    for value-exact round-trips."""
    m = np.atleast_2d(np.asarray(mat, dtype=float))
    np.savetxt(path, m, delimiter=",", fmt="%.17g")


def compute_target_stats(targets) -> TargetStats:
    """Mean, covariance (1/M normalization), eigensystem, symmetric square
    root, and pairwise correlations of a target matrix.

    Eigenvalues are returned in non-increasing order. Equal eigenvalues keep
    the order produced by the symmetric eigensolver; each eigenvector is then
    sign-normalized so its largest-magnitude entry is positive, making the
    output deterministic.
    """
    tm = targets if isinstance(targets, TargetMatrix) else TargetMatrix(targets)
    y = tm.values
    m = tm.num_samples
    mean = y.mean(axis=1)
    centered = y - mean[:, None]
    cov = (centered @ centered.T) / m
    cov = 0.5 * (cov + cov.T)
    evals, evecs = np.linalg.eigh(cov)
    evals = evals[::-1].copy()
    evecs = evecs[:, ::-1].copy()
    evecs = _fix_eigenvector_signs(evecs)
    lam_min, lam_max = evals[-1], evals[0]
    if lam_min <= RANK_TOLERANCE * lam_max or lam_max <= 0.0:
        raise RankDeficientTargets(
            f"target covariance is numerically rank deficient "
            f"(lambda_min={lam_min:.3e}, lambda_max={lam_max:.3e})",
            lambda_min=float(lam_min),
        )
    sqrt_cov = evecs @ np.diag(np.sqrt(evals)) @ evecs.T
    sqrt_cov = 0.5 * (sqrt_cov + sqrt_cov.T)
    n = tm.n
    pearson = np.array(
        [
            cov[i, j] / np.sqrt(cov[i, i] * cov[j, j])
            for i in range(n)
            for j in range(i + 1, n)
        ]
    )
    return TargetStats(
        mean=mean,
        covariance=cov,
        sqrt_covariance=sqrt_cov,
        eigenvalues=evals,
        eigenvectors=evecs,
        pearson=pearson,
    )


def symmetric_psd_sqrt(mat: np.ndarray) -> np.ndarray:
    """Symmetric PSD square root via eigendecomposition.

    Eigenvalues in [-tol, 0) are clamped to zero; anything below -tol raises
    :class:`NotPSD`. The result R is symmetric and satisfies R @ R = mat to
    1e-9 relative Frobenius.
    """
    s = np.asarray(mat, dtype=float)
    _require_symmetric(s)
    evals, evecs = np.linalg.eigh(s)
    if evals.min(initial=0.0) < -1e-10:
        raise NotPSD(
            f"matrix has eigenvalue {evals.min():.3e} below the PSD tolerance -1e-10"
        )
    root = evecs @ np.diag(np.sqrt(np.clip(evals, 0.0, None))) @ evecs.T
    return 0.5 * (root + root.T)


def generate_synthetic(spec: SyntheticSpec) -> RegressionDataset:
    """Draw a dataset whose empirical target covariance matches the spec.

    Inputs are standard Gaussian. Raw targets come from a random linear map
    or a fixed random two-layer tanh teacher of the inputs (plus optional
    Gaussian noise), then are centered, whitened by the empirical inverse
    square root, and colored by the requested covariance's square root, so
    the empirical spectrum is controlled exactly. Deterministic per seed.
    """
    rng = np.random.default_rng(spec.seed)
    d_in, n, m = spec.input_dim, spec.target_dim, spec.num_samples
    x = rng.standard_normal((d_in, m))
    if spec.map_kind == "linear":
        b = rng.standard_normal((n, d_in)) / np.sqrt(d_in)
        raw = b @ x
    else:
        b1 = rng.standard_normal((_TEACHER_WIDTH, d_in)) / np.sqrt(d_in)
        b2 = rng.standard_normal((n, _TEACHER_WIDTH)) / np.sqrt(_TEACHER_WIDTH)
        raw = b2 @ np.tanh(b1 @ x)
    if spec.noise_std > 0:
        raw = raw + spec.noise_std * rng.standard_normal((n, m))
    centered = raw - raw.mean(axis=1, keepdims=True)
    emp_cov = (centered @ centered.T) / m
    emp_cov = 0.5 * (emp_cov + emp_cov.T)
    evals, evecs = np.linalg.eigh(emp_cov)
    if evals[-1] <= 0.0 or evals[0] <= RANK_TOLERANCE * evals[-1]:
        raise RankDeficientTargets(
            "raw teacher targets are rank deficient; cannot whiten",
            lambda_min=float(evals[0]),
        )
    inv_sqrt = evecs @ np.diag(1.0 / np.sqrt(evals)) @ evecs.T
    colored = symmetric_psd_sqrt(spec.target_covariance) @ (inv_sqrt @ centered)
    return RegressionDataset(inputs=x, targets=TargetMatrix(colored))


def _fix_eigenvector_signs(evecs: np.ndarray) -> np.ndarray:
    out = evecs.copy()
    for k in range(out.shape[1]):
        pivot = np.argmax(np.abs(out[:, k]))
        if out[pivot, k] < 0:
            out[:, k] = -out[:, k]
    return out


def _require_symmetric(s: np.ndarray, tol: float = 1e-10) -> None:
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {s.shape}")
    scale = max(1.0, float(np.abs(s).max(initial=0.0)))
    if np.abs(s - s.T).max(initial=0.0) > tol * scale:
        raise DimensionError("matrix is not symmetric within tolerance")


def _require_spd(cov: np.ndarray, name: str) -> None:
    _require_symmetric(cov)
    evals = np.linalg.eigvalsh(cov)
    tol = 1e-10 * max(1.0, float(np.abs(evals).max(initial=0.0)))
    if evals.min() <= tol:
        raise NotPSD(f"{name} is not positive definite (min eigenvalue {evals.min():.3e})")
