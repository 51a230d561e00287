"""Gradient-descent trainers that reproduce collapse dynamics.

Two optimizers share one recipe (full-batch descent, constant learning rate,
Gaussian init, per-log-step collapse metrics):

* :func:`train_ufm_gd` descends the free-feature objective directly in
  (H, W, b). With c > 0 it should land on the closed-form optimum; with
  c = 0 it finds one of the non-collapsed zero-loss solutions.
* :func:`train_mlp` trains a small relu network f(x) = W h(x) + b by manual
  backpropagation, either with uniform weight decay on every parameter or
  with the feature/decoder penalty pair that mimics the free-feature model.

Both return a :class:`TrainTrace` that streams to CSV, and both are
deterministic functions of their configs. :func:`finite_diff_check` and
:func:`finite_diff_check_mlp` certify the analytic gradients.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import backend
from .dataset import (
    RegressionDataset,
    TargetMatrix,
    compute_target_stats,
    write_matrix,
)
from .errors import (
    DimensionError,
    DivergenceError,
    NumericalError,
    ValidationError,
)
from .metrics import NRCReport, nrc_report
from .ufm import UFMConfig

LOSS_CAP = 1e12  # objective beyond this (or non-finite) counts as divergence
KINK_MARGIN = 1e-3  # pre-activations closer to 0 than this invalidate relu checks


@dataclass(frozen=True)
class TrainConfig:
    """Shared optimizer settings for both trainers."""

    learning_rate: float
    steps: int
    log_every: int = 1000
    seed: int = 0
    init_scale: float = 0.1
    weight_decay: float = 0.0
    penultimate_relu: bool = True

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValidationError("learning_rate must be positive")
        if self.steps < 1 or self.log_every < 1:
            raise ValidationError("steps and log_every must be positive integers")
        if not self.init_scale > 0:
            raise ValidationError("init_scale must be positive")
        if self.weight_decay < 0:
            raise ValidationError("weight_decay must be nonnegative")


@dataclass(frozen=True)
class MLPArch:
    """Shape of the relu network; the feature dimension is the last hidden
    width."""

    input_dim: int
    hidden_dims: tuple
    target_dim: int
    activation: str = "relu"

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(v) for v in self.hidden_dims))
        if self.input_dim < 1 or self.target_dim < 1:
            raise ValidationError("input_dim and target_dim must be positive")
        if not self.hidden_dims or any(v < 1 for v in self.hidden_dims):
            raise ValidationError("hidden_dims must be a nonempty list of positives")
        if self.activation != "relu":
            raise ValidationError(f"unsupported activation {self.activation!r}")

    @property
    def feature_dim(self) -> int:
        return self.hidden_dims[-1]


@dataclass(frozen=True)
class MLPParams:
    """All trainable tensors: hidden stack plus linear decoder and bias."""

    hidden_weights: tuple
    hidden_biases: tuple
    decoder: np.ndarray
    bias: np.ndarray


@dataclass
class TrainTrace:
    """Logged series plus the final parameters.

    ``final_state`` is (H, W, b) for the free-feature trainer and
    (MLPParams, decoder, bias) for the network trainer.
    """

    steps: list = field(default_factory=list)
    loss: list = field(default_factory=list)
    mse: list = field(default_factory=list)
    r_squared: list = field(default_factory=list)
    nrc_reports: list = field(default_factory=list)
    final_state: tuple = ()

    def append(self, step: int, loss: float, mse: float, r2: float, report: NRCReport):
        self.steps.append(int(step))
        self.loss.append(float(loss))
        self.mse.append(float(mse))
        self.r_squared.append(float(r2))
        self.nrc_reports.append(report)

    def to_csv(self, path) -> None:
        """Write `step,loss,mse,r2,nrc1,nrc2,nrc3,gamma,whiteness`, one row
        per logged step, nan for non-applicable fields."""
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("step,loss,mse,r2,nrc1,nrc2,nrc3,gamma,whiteness\n")
            for i, step in enumerate(self.steps):
                rep = self.nrc_reports[i]
                cells = [str(step)]
                cells.extend(
                    _fmt(v)
                    for v in (
                        self.loss[i],
                        self.mse[i],
                        self.r_squared[i],
                        rep.nrc1,
                        rep.nrc2,
                        rep.nrc3,
                        rep.gamma_used,
                        rep.residual_whiteness,
                    )
                )
                fh.write(",".join(cells) + "\n")


def ufm_loss(features, weights, bias, targets, cfg: UFMConfig) -> float:
    """Objective value 1/(2M)||W H + b 1^T - Y||^2 + lambda_h/(2M)||H||^2 +
    lambda_w/2 ||W||^2."""
    h, w, b, y = _check_ufm_shapes(features, weights, bias, targets)
    m = y.shape[1]
    e = w @ h + b[:, None] - y
    return (
        0.5 / m * float(np.vdot(e, e))
        + 0.5 * cfg.lambda_h / m * float(np.vdot(h, h))
        + 0.5 * cfg.lambda_w * float(np.vdot(w, w))
    )


def ufm_gradients(features, weights, bias, targets, cfg: UFMConfig):
    """Analytic partial gradients (gH, gW, gb) of :func:`ufm_loss`."""
    h, w, b, y = _check_ufm_shapes(features, weights, bias, targets)
    m = y.shape[1]
    e = w @ h + b[:, None] - y
    grad_h = (w.T @ e) / m + (cfg.lambda_h / m) * h
    grad_w = (e @ h.T) / m + cfg.lambda_w * w
    grad_b = e.sum(axis=1) / m
    return grad_h, grad_w, grad_b


def train_ufm_gd(
    targets, cfg: UFMConfig, tc: TrainConfig, feature_dim: int | None = None
) -> TrainTrace:
    """Full-batch descent on the free-feature objective from Gaussian init.

    Logs loss, fit term, pooled R^2 and a collapse report every
    ``tc.log_every`` steps (gamma policy: exact c when c > 0, otherwise
    best-gamma search). The feature dimension defaults to 8 n. Raises
    :class:`DivergenceError` when the objective passes 1e12 or leaves the
    finite range.
    """
    tm = targets if isinstance(targets, TargetMatrix) else TargetMatrix(targets)
    n, m = tm.n, tm.num_samples
    d = int(feature_dim) if feature_dim is not None else 8 * n
    if d < n:
        raise ValidationError(f"feature_dim must be at least n={n}, got {d}")
    stats = compute_target_stats(tm)
    y = np.ascontiguousarray(tm.values)
    rng = np.random.default_rng(tc.seed)
    w = tc.init_scale * rng.standard_normal((n, d))
    h = tc.init_scale * rng.standard_normal((d, m))
    b = tc.init_scale * rng.standard_normal(n)
    policy = "exact_c" if cfg.c > 0 else "auto"
    center_norm_sq = float(np.vdot(tm.values - stats.mean[:, None], tm.values - stats.mean[:, None]))

    trace = TrainTrace()
    last_ok_loss = np.nan

    def log_point(step: int) -> float:
        e = w @ h + b[:, None] - y
        fit = 0.5 / m * float(np.vdot(e, e))
        loss = (
            fit
            + 0.5 * cfg.lambda_h / m * float(np.vdot(h, h))
            + 0.5 * cfg.lambda_w * float(np.vdot(w, w))
        )
        if not np.isfinite(loss) or loss > LOSS_CAP:
            raise DivergenceError(
                f"objective diverged by step {step} (loss {loss!r})",
                last_finite_step=max(step - 1, 0),
                last_finite_loss=last_ok_loss,
            )
        r2 = 1.0 - float(np.vdot(e, e)) / center_norm_sq
        report = nrc_report(
            h, w, stats, cfg=cfg, gamma_policy=policy, targets=tm, bias=b
        )
        trace.append(step, loss, fit, r2, report)
        return loss

    last_ok_loss = log_point(0)
    done = 0
    while done < tc.steps:
        chunk = min(tc.log_every, tc.steps - done)
        taken, diverged, kernel_loss = backend.run_gd_chunk(
            w, h, b, y, cfg.lambda_h, cfg.lambda_w,
            tc.learning_rate, chunk, LOSS_CAP,
        )
        done += taken
        if diverged:
            raise DivergenceError(
                f"objective diverged at step {done} (loss {kernel_loss!r})",
                last_finite_step=max(done - 1, 0),
                last_finite_loss=last_ok_loss,
            )
        last_ok_loss = log_point(done)
    trace.final_state = (h, w, b)
    return trace


def mlp_forward(arch: MLPArch, params: MLPParams, inputs, penultimate_relu: bool = True):
    """Predictions and last-layer features of the network.

    Relu is applied after every hidden layer; with ``penultimate_relu``
    false the last hidden layer stays linear so the features can take
    negative values.
    """
    acts, _ = _forward_cache(arch, params, inputs, penultimate_relu)
    features = acts[-1]
    pred = params.decoder @ features + params.bias[:, None]
    return pred, features


def init_mlp_params(arch: MLPArch, seed: int, init_scale: float = 0.1) -> MLPParams:
    """Entrywise Gaussian init of every tensor, deterministic per seed."""
    rng = np.random.default_rng(seed)
    widths = [arch.input_dim, *arch.hidden_dims]
    hw, hb = [], []
    for k in range(1, len(widths)):
        hw.append(init_scale * rng.standard_normal((widths[k], widths[k - 1])))
        hb.append(init_scale * rng.standard_normal(widths[k]))
    decoder = init_scale * rng.standard_normal((arch.target_dim, arch.feature_dim))
    bias = init_scale * rng.standard_normal(arch.target_dim)
    return MLPParams(tuple(hw), tuple(hb), decoder, bias)


def train_mlp(
    data: RegressionDataset,
    arch: MLPArch,
    tc: TrainConfig,
    ufm_reg: UFMConfig | None = None,
) -> TrainTrace:
    """Train the relu network by full-batch backprop descent.

    Regularization modes are mutually exclusive: weight decay applies
    tc.weight_decay to every trainable tensor; passing ``ufm_reg`` instead
    penalizes the last-layer features (lambda_h) and decoder (lambda_w) with
    no decay elsewhere, and requires tc.weight_decay = 0. Collapse reports
    use the exact-c gamma policy in the second mode and the best-gamma
    search in the first.
    """
    if ufm_reg is not None and tc.weight_decay != 0.0:
        raise ValidationError(
            "feature/decoder penalty mode requires weight_decay = 0"
        )
    x = np.ascontiguousarray(data.inputs)
    tm = data.targets
    y = tm.values
    n, m = tm.n, tm.num_samples
    if arch.input_dim != x.shape[0] or arch.target_dim != n:
        raise DimensionError(
            f"arch expects input_dim={arch.input_dim}, target_dim="
            f"{arch.target_dim}; data has {x.shape[0]} and {n}"
        )
    stats = compute_target_stats(tm)
    params = init_mlp_params(arch, tc.seed, tc.init_scale)
    policy = "exact_c" if ufm_reg is not None else "auto"
    report_cfg = ufm_reg
    center_norm_sq = float(
        np.vdot(y - stats.mean[:, None], y - stats.mean[:, None])
    )

    trace = TrainTrace()
    last_ok = (0, np.nan)

    def log_point(step, loss, e, features):
        fit = 0.5 / m * float(np.vdot(e, e))
        r2 = 1.0 - float(np.vdot(e, e)) / center_norm_sq
        report = nrc_report(
            features,
            params.decoder,
            stats,
            cfg=report_cfg,
            gamma_policy=policy,
            targets=tm,
            bias=params.bias,
        )
        trace.append(step, loss, fit, r2, report)

    for step in range(tc.steps + 1):
        acts, zs = _forward_cache(arch, params, x, tc.penultimate_relu)
        features = acts[-1]
        e = params.decoder @ features + params.bias[:, None] - y
        loss = 0.5 / m * float(np.vdot(e, e)) + _reg_term(
            params, features, m, tc.weight_decay, ufm_reg
        )
        if not np.isfinite(loss) or loss > LOSS_CAP:
            raise DivergenceError(
                f"objective diverged at step {step} (loss {loss!r})",
                last_finite_step=last_ok[0],
                last_finite_loss=last_ok[1],
            )
        last_ok = (step, loss)
        if step % tc.log_every == 0 or step == tc.steps:
            log_point(step, loss, e, features)
        if step == tc.steps:
            break
        params = _descend_mlp(
            arch, params, acts, zs, e, m, tc, ufm_reg
        )
    trace.final_state = (params, params.decoder, params.bias)
    return trace


def finite_diff_check(point, targets, cfg: UFMConfig, step: float) -> float:
    """Max relative error between analytic gradients and central finite
    differences over every coordinate of a (H, W, b) point."""
    if not 1e-8 <= step <= 1e-2:
        raise ValidationError(f"step must lie in [1e-8, 1e-2], got {step}")
    h0, w0, b0 = (np.asarray(a, dtype=float).copy() for a in point)
    analytic = ufm_gradients(h0, w0, b0, targets, cfg)
    arrays = [h0, w0, b0]
    worst = 0.0
    for idx, arr in enumerate(arrays):
        grad = analytic[idx]
        flat = arr.ravel()
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + step
            up = ufm_loss(arrays[0], arrays[1], arrays[2], targets, cfg)
            flat[k] = orig - step
            down = ufm_loss(arrays[0], arrays[1], arrays[2], targets, cfg)
            flat[k] = orig
            if not (np.isfinite(up) and np.isfinite(down)):
                raise NumericalError("non-finite loss at a perturbed point")
            numeric = (up - down) / (2.0 * step)
            a = float(grad.ravel()[k])
            denom = max(abs(a), abs(numeric), 1e-12)
            worst = max(worst, abs(a - numeric) / denom)
    return worst


def finite_diff_check_mlp(
    arch: MLPArch,
    params: MLPParams,
    inputs,
    targets,
    step: float,
    weight_decay: float = 0.0,
    ufm_reg: UFMConfig | None = None,
    penultimate_relu: bool = True,
    kink_margin: float = KINK_MARGIN,
) -> float:
    """Max relative error of the backprop gradients vs central differences.

    Requires every relu pre-activation to sit at least ``kink_margin`` away
    from zero, so no perturbation can cross a kink; violations raise
    :class:`NumericalError` (pick a different seed or instance).
    """
    if not 1e-8 <= step <= 1e-2:
        raise ValidationError(f"step must lie in [1e-8, 1e-2], got {step}")
    x = np.asarray(inputs, dtype=float)
    tm = targets if isinstance(targets, TargetMatrix) else TargetMatrix(targets)
    _, zs = _forward_cache(arch, params, x, penultimate_relu)
    num_hidden = len(arch.hidden_dims)
    for k, z in enumerate(zs):
        relu_here = k < num_hidden - 1 or penultimate_relu
        if relu_here and z.size and float(np.abs(z).min()) <= kink_margin:
            raise NumericalError(
                f"pre-activation within {kink_margin} of a relu kink at "
                f"hidden layer {k + 1}; the finite-difference check is "
                "unreliable here"
            )
    analytic = _mlp_gradients(arch, params, x, tm.values, weight_decay, ufm_reg, penultimate_relu)
    tensors = [*params.hidden_weights, *params.hidden_biases, params.decoder, params.bias]
    worst = 0.0
    for tensor, grad in zip(tensors, analytic):
        flat = tensor.ravel()
        gflat = grad.ravel()
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + step
            up = _mlp_loss(arch, params, x, tm.values, weight_decay, ufm_reg, penultimate_relu)
            flat[k] = orig - step
            down = _mlp_loss(arch, params, x, tm.values, weight_decay, ufm_reg, penultimate_relu)
            flat[k] = orig
            if not (np.isfinite(up) and np.isfinite(down)):
                raise NumericalError("non-finite loss at a perturbed point")
            numeric = (up - down) / (2.0 * step)
            a = float(gflat[k])
            denom = max(abs(a), abs(numeric), 1e-12)
            worst = max(worst, abs(a - numeric) / denom)
    return worst


def save_ufm_state(directory, features, weights, bias, meta: dict) -> None:
    """Write W.csv, H.csv, b.csv plus meta.json (trainer-produced state)."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    write_matrix(out / "W.csv", weights)
    write_matrix(out / "H.csv", features)
    write_matrix(out / "b.csv", bias)
    (out / "meta.json").write_text(
        json.dumps(meta, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )


def save_mlp_params(directory, arch: MLPArch, params: MLPParams) -> None:
    """Write one CSV per tensor plus arch.json."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    for k, (aw, ab) in enumerate(zip(params.hidden_weights, params.hidden_biases)):
        write_matrix(out / f"layer{k}.csv", aw)
        write_matrix(out / f"layer{k}_bias.csv", ab)
    write_matrix(out / "decoder.csv", params.decoder)
    write_matrix(out / "bias.csv", params.bias)
    arch_payload = {
        "input_dim": arch.input_dim,
        "hidden_dims": list(arch.hidden_dims),
        "target_dim": arch.target_dim,
        "activation": arch.activation,
    }
    (out / "arch.json").write_text(
        json.dumps(arch_payload, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )


def _check_ufm_shapes(features, weights, bias, targets):
    h = np.asarray(features, dtype=float)
    w = np.asarray(weights, dtype=float)
    b = np.asarray(bias, dtype=float).ravel()
    y = targets.values if isinstance(targets, TargetMatrix) else np.asarray(targets, dtype=float)
    if h.ndim != 2 or w.ndim != 2 or y.ndim != 2:
        raise DimensionError("H, W and Y must be 2-D matrices")
    n, d = w.shape
    if h.shape != (d, y.shape[1]) or y.shape[0] != n or b.shape != (n,):
        raise DimensionError(
            f"inconsistent shapes: W {w.shape}, H {h.shape}, b {b.shape}, Y {y.shape}"
        )
    return h, w, b, y


def _forward_cache(arch: MLPArch, params: MLPParams, x, penultimate_relu: bool):
    """Activations [input, layer1, ..., features] and pre-activations."""
    if x.ndim != 2 or x.shape[0] != arch.input_dim:
        raise DimensionError(
            f"inputs must be {arch.input_dim} x M, got {x.shape}"
        )
    acts = [np.asarray(x, dtype=float)]
    zs = []
    num_hidden = len(arch.hidden_dims)
    for k, (aw, ab) in enumerate(zip(params.hidden_weights, params.hidden_biases)):
        z = aw @ acts[-1] + ab[:, None]
        zs.append(z)
        relu_here = k < num_hidden - 1 or penultimate_relu
        acts.append(np.maximum(z, 0.0) if relu_here else z)
    return acts, zs


def _reg_term(params, features, m, weight_decay, ufm_reg):
    if ufm_reg is not None:
        return 0.5 * ufm_reg.lambda_h / m * float(np.vdot(features, features)) + (
            0.5 * ufm_reg.lambda_w * float(np.vdot(params.decoder, params.decoder))
        )
    if weight_decay == 0.0:
        return 0.0
    total = float(np.vdot(params.decoder, params.decoder))
    total += float(np.vdot(params.bias, params.bias))
    for aw, ab in zip(params.hidden_weights, params.hidden_biases):
        total += float(np.vdot(aw, aw)) + float(np.vdot(ab, ab))
    return 0.5 * weight_decay * total


def _mlp_loss(arch, params, x, y, weight_decay, ufm_reg, penultimate_relu):
    acts, _ = _forward_cache(arch, params, x, penultimate_relu)
    features = acts[-1]
    e = params.decoder @ features + params.bias[:, None] - y
    m = y.shape[1]
    return 0.5 / m * float(np.vdot(e, e)) + _reg_term(
        params, features, m, weight_decay, ufm_reg
    )


def _backprop(arch, params, acts, zs, e, m, weight_decay, ufm_reg, penultimate_relu):
    """Gradients from a cached forward pass, in the order
    [hidden weights..., hidden biases..., decoder, bias]."""
    features = acts[-1]
    g_dec = (e @ features.T) / m
    g_bias = e.sum(axis=1) / m
    delta = (params.decoder.T @ e) / m
    if ufm_reg is not None:
        g_dec = g_dec + ufm_reg.lambda_w * params.decoder
        delta = delta + (ufm_reg.lambda_h / m) * features
    if weight_decay != 0.0:
        g_dec = g_dec + weight_decay * params.decoder
        g_bias = g_bias + weight_decay * params.bias
    num_hidden = len(arch.hidden_dims)
    gw_list = [None] * num_hidden
    gb_list = [None] * num_hidden
    for k in range(num_hidden - 1, -1, -1):
        relu_here = k < num_hidden - 1 or penultimate_relu
        if relu_here:
            delta = delta * (zs[k] > 0.0)
        gw_list[k] = delta @ acts[k].T
        gb_list[k] = delta.sum(axis=1)
        if weight_decay != 0.0:
            gw_list[k] = gw_list[k] + weight_decay * params.hidden_weights[k]
            gb_list[k] = gb_list[k] + weight_decay * params.hidden_biases[k]
        if k > 0:
            delta = params.hidden_weights[k].T @ delta
    return [*gw_list, *gb_list, g_dec, g_bias]


def _mlp_gradients(arch, params, x, y, weight_decay, ufm_reg, penultimate_relu):
    acts, zs = _forward_cache(arch, params, x, penultimate_relu)
    e = params.decoder @ acts[-1] + params.bias[:, None] - y
    return _backprop(
        arch, params, acts, zs, e, y.shape[1], weight_decay, ufm_reg, penultimate_relu
    )


def _descend_mlp(arch, params, acts, zs, e, m, tc, ufm_reg):
    """One descent step; returns new params (reuses the cached forward)."""
    grads = _backprop(
        arch, params, acts, zs, e, m, tc.weight_decay, ufm_reg, tc.penultimate_relu
    )
    num_hidden = len(arch.hidden_dims)
    lr = tc.learning_rate
    new_hw = tuple(
        aw - lr * g for aw, g in zip(params.hidden_weights, grads[:num_hidden])
    )
    new_hb = tuple(
        ab - lr * g
        for ab, g in zip(params.hidden_biases, grads[num_hidden : 2 * num_hidden])
    )
    return MLPParams(
        new_hw,
        new_hb,
        params.decoder - lr * grads[-2],
        params.bias - lr * grads[-1],
    )


def _fmt(value) -> str:
    if value is None:
        return "nan"
    return "%.17g" % float(value)
