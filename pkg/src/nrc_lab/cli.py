"""Command-line front end.

Subcommands: ``gen`` (synthetic datasets), ``solve`` (closed-form optimum +
collapse report), ``train ufm`` / ``train mlp`` (descent traces), ``metrics``
(reports on dumped matrices), ``sweep`` (grids over c or weight decay).

Every run is deterministic given its flags; outputs are CSV/JSON written
with full double precision. Flag values override config-file values override
defaults, and the resolved settings are recorded as resolved_config.json in
the output directory. Exit codes: 0 success, 1 runtime or numerical failure,
2 usage or validation failure. ``NRC_LAB_THREADS`` caps sweep parallelism.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .dataset import (
    SyntheticSpec,
    TargetMatrix,
    compute_target_stats,
    generate_synthetic,
    load_matrix,
    oriented,
    write_matrix,
)
from .errors import NrcLabError, ValidationError
from .metrics import append_report_csv, nrc_report
from .trainer import (
    MLPArch,
    TrainConfig,
    save_mlp_params,
    save_ufm_state,
    train_mlp,
    train_ufm_gd,
)
from .ufm import UFMConfig, optimal_loss, solve_closed_form

_FMT = "%.17g"


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not hasattr(args, "func"):
            parser.print_help()
            return 2
        args.func(args)
        return 0
    except ValidationError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except (FileNotFoundError, IsADirectoryError, NotADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NrcLabError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nrc-lab",
        description="Closed-form optima, collapse metrics, and descent "
        "trainers for regularized multivariate regression with free features.",
    )
    sub = parser.add_subparsers(dest="command")

    gen = sub.add_parser("gen", help="generate a synthetic dataset")
    gen.add_argument("--config", help="JSON file with defaults for this command")
    gen.add_argument("--n", type=int, help="target dimension")
    gen.add_argument("--d-in", type=int, dest="d_in", help="input dimension")
    gen.add_argument("--m", type=int, help="number of samples")
    gen.add_argument(
        "--sigma",
        help="target covariance: diag:a,b,... | iso:v | file:path.csv",
    )
    gen.add_argument("--map", choices=["linear", "mlp-teacher"], dest="map_kind")
    gen.add_argument("--noise", type=float, dest="noise_std")
    gen.add_argument("--seed", type=int)
    gen.add_argument("-o", "--out", required=True)
    gen.set_defaults(func=cmd_gen)

    solve = sub.add_parser(
        "solve", help="closed-form optimum and collapse report for a target file"
    )
    solve.add_argument("--config")
    solve.add_argument("--y", help="target CSV path")
    solve.add_argument("--layout", choices=["rows", "cols"])
    solve.add_argument("--header", action="store_true", default=None)
    solve.add_argument("--lambda-h", type=float, dest="lambda_h")
    solve.add_argument("--lambda-w", type=float, dest="lambda_w")
    solve.add_argument("--rotation-seed", type=int, dest="rotation_seed")
    solve.add_argument("--feature-dim", type=int, dest="feature_dim")
    solve.add_argument("--gamma", dest="gamma", help="exact-c | auto")
    solve.add_argument("-o", "--out", required=True)
    solve.set_defaults(func=cmd_solve)

    train = sub.add_parser("train", help="gradient-descent trainers")
    train_sub = train.add_subparsers(dest="trainer")

    tu = train_sub.add_parser("ufm", help="descend the free-feature objective")
    tu.add_argument("--config")
    tu.add_argument("--y")
    tu.add_argument("--layout", choices=["rows", "cols"])
    tu.add_argument("--header", action="store_true", default=None)
    tu.add_argument("--lambda-h", type=float, dest="lambda_h")
    tu.add_argument("--lambda-w", type=float, dest="lambda_w")
    tu.add_argument("--feature-dim", type=int, dest="feature_dim")
    tu.add_argument("--lr", type=float, dest="learning_rate")
    tu.add_argument("--steps", type=int)
    tu.add_argument("--log-every", type=int, dest="log_every")
    tu.add_argument("--seed", type=int)
    tu.add_argument("--init-scale", type=float, dest="init_scale")
    tu.add_argument("-o", "--out", required=True)
    tu.set_defaults(func=cmd_train_ufm)

    tm = train_sub.add_parser("mlp", help="train the relu network")
    tm.add_argument("--config")
    tm.add_argument("--x")
    tm.add_argument("--y")
    tm.add_argument("--layout", choices=["rows", "cols"])
    tm.add_argument("--header", action="store_true", default=None)
    tm.add_argument("--hidden", help="comma-separated hidden widths, e.g. 64,64")
    tm.add_argument("--wd", type=float, dest="weight_decay")
    tm.add_argument("--lambda-h", type=float, dest="lambda_h")
    tm.add_argument("--lambda-w", type=float, dest="lambda_w")
    tm.add_argument(
        "--penultimate-relu",
        action=argparse.BooleanOptionalAction,
        default=None,
    )
    tm.add_argument("--holdout", type=float, help="holdout fraction in [0, 0.5]")
    tm.add_argument("--lr", type=float, dest="learning_rate")
    tm.add_argument("--steps", type=int)
    tm.add_argument("--log-every", type=int, dest="log_every")
    tm.add_argument("--seed", type=int)
    tm.add_argument("--init-scale", type=float, dest="init_scale")
    tm.add_argument("-o", "--out", required=True)
    tm.set_defaults(func=cmd_train_mlp)

    met = sub.add_parser("metrics", help="collapse report for dumped matrices")
    met.add_argument("--config")
    met.add_argument("--h", help="feature matrix CSV (feature dims as rows)")
    met.add_argument("--w", help="decoder CSV (targets x features)")
    met.add_argument("--y", help="target CSV")
    met.add_argument("--b", help="optional bias CSV (enables whiteness)")
    met.add_argument("--layout", choices=["rows", "cols"], help="layout of --y")
    met.add_argument("--header", action="store_true", default=None)
    met.add_argument("--gamma", help="auto | exact-c | positive float")
    met.add_argument("--lambda-h", type=float, dest="lambda_h")
    met.add_argument("--lambda-w", type=float, dest="lambda_w")
    met.add_argument("--log", help="CSV file to append one report row to")
    met.add_argument("--step", type=int, help="step index for --log rows")
    met.add_argument("--format", choices=["json", "csv"])
    met.add_argument("-o", "--out")
    met.set_defaults(func=cmd_metrics)

    sweep = sub.add_parser("sweep", help="grid over c (closed form) or weight decay (MLP)")
    sweep.add_argument("--config")
    sweep.add_argument("--mode", choices=["closed-form", "mlp"])
    sweep.add_argument("--grid", help="comma-separated grid values")
    sweep.add_argument("--seeds", help="comma-separated seeds")
    sweep.add_argument("--x")
    sweep.add_argument("--y")
    sweep.add_argument("--layout", choices=["rows", "cols"])
    sweep.add_argument("--header", action="store_true", default=None)
    sweep.add_argument("--hidden")
    sweep.add_argument("--lr", type=float, dest="learning_rate")
    sweep.add_argument("--steps", type=int)
    sweep.add_argument("--log-every", type=int, dest="log_every")
    sweep.add_argument("--init-scale", type=float, dest="init_scale")
    sweep.add_argument("--rotation-seed", type=int, dest="rotation_seed")
    sweep.add_argument("--feature-dim", type=int, dest="feature_dim")
    sweep.add_argument("-o", "--out", required=True)
    sweep.set_defaults(func=cmd_sweep)

    return parser


def cmd_gen(args) -> None:
    defaults = {
        "n": None, "d_in": None, "m": None, "sigma": None,
        "map_kind": "linear", "noise_std": 0.0, "seed": 0,
    }
    cfg = _resolve(defaults, args, ["n", "d_in", "m", "sigma", "map_kind", "noise_std", "seed"])
    for key in ("n", "d_in", "m", "sigma"):
        if cfg[key] is None:
            raise ValidationError(f"missing required setting '{key}'")
    n = int(cfg["n"])
    sigma = _parse_sigma(str(cfg["sigma"]), n)
    spec = SyntheticSpec(
        input_dim=int(cfg["d_in"]),
        target_dim=n,
        num_samples=int(cfg["m"]),
        target_covariance=sigma,
        map_kind=str(cfg["map_kind"]),
        noise_std=float(cfg["noise_std"]),
        seed=int(cfg["seed"]),
    )
    data = generate_synthetic(spec)
    out = _ensure_out(args.out)
    write_matrix(out / "X.csv", data.inputs.T)
    write_matrix(out / "Y.csv", data.targets.values.T)
    payload = {
        "input_dim": spec.input_dim,
        "target_dim": spec.target_dim,
        "num_samples": spec.num_samples,
        "target_covariance": sigma.tolist(),
        "map_kind": spec.map_kind,
        "noise_std": spec.noise_std,
        "seed": spec.seed,
        "layout": "rows",
    }
    _write_json(out / "spec.json", payload)
    _write_json(out / "resolved_config.json", _jsonable(cfg))
    print(f"wrote X.csv, Y.csv, spec.json to {out}")


def cmd_solve(args) -> None:
    defaults = {
        "y": None, "layout": "rows", "header": False,
        "lambda_h": 0.01, "lambda_w": 0.01,
        "rotation_seed": 0, "feature_dim": None, "gamma": "exact-c",
    }
    cfg = _resolve(defaults, args, list(defaults))
    if cfg["y"] is None:
        raise ValidationError("missing required setting 'y'")
    tm = _load_targets(cfg)
    stats = compute_target_stats(tm)
    ucfg = UFMConfig(float(cfg["lambda_h"]), float(cfg["lambda_w"]))
    sol = solve_closed_form(
        stats,
        ucfg,
        tm,
        rotation_seed=int(cfg["rotation_seed"]),
        feature_dim=cfg["feature_dim"],
    )
    out = _ensure_out(args.out)
    sol.save(out / "solution")
    gamma_policy = _gamma_policy(cfg["gamma"])
    if sol.active_rank == 0:
        print("degenerate optimum (W,H,b)=(0,0,ybar)")
        report_payload = {
            "degenerate": True,
            "note": "all spectral directions shut off (c above every eigenvalue)",
        }
    else:
        policy, gamma_value = gamma_policy
        report = nrc_report(
            sol.features, sol.weights, stats,
            cfg=ucfg, gamma_policy=policy, gamma=gamma_value,
            targets=tm, bias=sol.bias,
        )
        report_payload = json.loads(report.to_json())
    _write_json(out / "report.json", report_payload)
    _write_json(out / "resolved_config.json", _jsonable(cfg))
    for note in sol.notes:
        print(f"note: {note}", file=sys.stderr)
    print(f"loss={_FMT % sol.loss}")
    print(f"j_star={sol.active_rank}")
    print(f"optimal_loss={_FMT % optimal_loss(stats, ucfg)}")


def cmd_train_ufm(args) -> None:
    defaults = {
        "y": None, "layout": "rows", "header": False,
        "lambda_h": 0.01, "lambda_w": 0.01, "feature_dim": None,
        "learning_rate": 0.1, "steps": 10000, "log_every": 1000,
        "seed": 0, "init_scale": 0.1,
    }
    cfg = _resolve(defaults, args, list(defaults))
    if cfg["y"] is None:
        raise ValidationError("missing required setting 'y'")
    tm = _load_targets(cfg)
    ucfg = UFMConfig(float(cfg["lambda_h"]), float(cfg["lambda_w"]))
    tc = TrainConfig(
        learning_rate=float(cfg["learning_rate"]),
        steps=int(cfg["steps"]),
        log_every=int(cfg["log_every"]),
        seed=int(cfg["seed"]),
        init_scale=float(cfg["init_scale"]),
    )
    trace = train_ufm_gd(tm, ucfg, tc, feature_dim=cfg["feature_dim"])
    out = _ensure_out(args.out)
    trace.to_csv(out / "trace.csv")
    h, w, b = trace.final_state
    save_ufm_state(
        out / "final_state", h, w, b,
        {
            "c": ucfg.c,
            "lambda_h": ucfg.lambda_h,
            "lambda_w": ucfg.lambda_w,
            "loss": trace.loss[-1],
            "steps": tc.steps,
            "seed": tc.seed,
        },
    )
    _write_json(out / "resolved_config.json", _jsonable(cfg))
    print(f"final_loss={_FMT % trace.loss[-1]}")


def cmd_train_mlp(args) -> None:
    defaults = {
        "x": None, "y": None, "layout": "rows", "header": False,
        "hidden": "64,64", "weight_decay": 0.0,
        "lambda_h": None, "lambda_w": None,
        "penultimate_relu": True, "holdout": 0.0,
        "learning_rate": 0.05, "steps": 5000, "log_every": 500,
        "seed": 0, "init_scale": 0.1,
    }
    cfg = _resolve(defaults, args, list(defaults))
    for key in ("x", "y"):
        if cfg[key] is None:
            raise ValidationError(f"missing required setting '{key}'")
    layout = str(cfg["layout"])
    header = bool(cfg["header"])
    x = oriented(load_matrix(cfg["x"], layout=layout, header=header), layout)
    tm = TargetMatrix(oriented(load_matrix(cfg["y"], layout=layout, header=header), layout))
    if x.shape[1] != tm.num_samples:
        raise ValidationError(
            f"inputs have {x.shape[1]} samples but targets have {tm.num_samples}"
        )
    holdout = float(cfg["holdout"])
    if not 0.0 <= holdout <= 0.5:
        raise ValidationError("holdout fraction must lie in [0, 0.5]")
    m_test = int(round(holdout * tm.num_samples))
    x_train, y_train = x[:, : x.shape[1] - m_test], tm.values[:, : tm.num_samples - m_test]
    data = _as_dataset(x_train, y_train)
    hidden = _parse_ints(str(cfg["hidden"]))
    arch = MLPArch(
        input_dim=x.shape[0], hidden_dims=hidden, target_dim=tm.n
    )
    ufm_reg = None
    if cfg["lambda_h"] is not None or cfg["lambda_w"] is not None:
        if cfg["lambda_h"] is None or cfg["lambda_w"] is None:
            raise ValidationError(
                "feature/decoder penalty mode needs both lambda_h and lambda_w"
            )
        ufm_reg = UFMConfig(float(cfg["lambda_h"]), float(cfg["lambda_w"]))
    tc = TrainConfig(
        learning_rate=float(cfg["learning_rate"]),
        steps=int(cfg["steps"]),
        log_every=int(cfg["log_every"]),
        seed=int(cfg["seed"]),
        init_scale=float(cfg["init_scale"]),
        weight_decay=float(cfg["weight_decay"]),
        penultimate_relu=bool(cfg["penultimate_relu"]),
    )
    trace = train_mlp(data, arch, tc, ufm_reg=ufm_reg)
    out = _ensure_out(args.out)
    trace.to_csv(out / "trace.csv")
    params = trace.final_state[0]
    save_mlp_params(out / "final_state", arch, params)
    _write_json(out / "resolved_config.json", _jsonable(cfg))
    print(f"final_loss={_FMT % trace.loss[-1]}")
    print(f"final_r2={_FMT % trace.r_squared[-1]}")
    if m_test > 0:
        from .trainer import mlp_forward

        pred, _ = mlp_forward(arch, params, x[:, -m_test:], tc.penultimate_relu)
        e = pred - tm.values[:, -m_test:]
        mse = 0.5 / m_test * float(np.vdot(e, e))
        centered = tm.values[:, -m_test:] - tm.values[:, -m_test:].mean(axis=1, keepdims=True)
        denom = float(np.vdot(centered, centered))
        r2 = 1.0 - float(np.vdot(e, e)) / denom if denom > 0 else float("nan")
        print(f"holdout_mse={_FMT % mse}")
        print(f"holdout_r2={_FMT % r2}")


def cmd_metrics(args) -> None:
    defaults = {
        "h": None, "w": None, "y": None, "b": None,
        "layout": "rows", "header": False, "gamma": "auto",
        "lambda_h": None, "lambda_w": None,
        "log": None, "step": 0, "format": "json",
    }
    cfg = _resolve(defaults, args, list(defaults))
    for key in ("h", "w", "y"):
        if cfg[key] is None:
            raise ValidationError(f"missing required setting '{key}'")
    h = load_matrix(cfg["h"], layout="cols", header=bool(cfg["header"]))
    w = load_matrix(cfg["w"], layout="cols", header=bool(cfg["header"]))
    tm = _load_targets(cfg)
    stats = compute_target_stats(tm)
    ucfg = None
    if cfg["lambda_h"] is not None and cfg["lambda_w"] is not None:
        ucfg = UFMConfig(float(cfg["lambda_h"]), float(cfg["lambda_w"]))
    policy, gamma_value = _gamma_policy(cfg["gamma"])
    if policy == "exact_c" and ucfg is None:
        raise ValidationError("--gamma exact-c needs --lambda-h and --lambda-w")
    bias = None
    if cfg["b"] is not None:
        bias = load_matrix(cfg["b"], layout="cols").ravel()
    report = nrc_report(
        h, w, stats, cfg=ucfg, gamma_policy=policy, gamma=gamma_value,
        targets=tm, bias=bias,
    )
    if cfg["log"] is not None:
        append_report_csv(cfg["log"], int(cfg["step"]), report)
    if cfg["format"] == "json":
        text = report.to_json()
    else:
        k = len(report.evr)
        evr_cols = ",".join(f"evr{i + 1}" for i in range(k))
        header_line = f"step,nrc1,nrc2,nrc3,gamma,{evr_cols},whiteness"
        cells = [str(int(cfg["step"]))]
        cells += [_cell(v) for v in (report.nrc1, report.nrc2, report.nrc3, report.gamma_used)]
        cells += [_cell(v) for v in report.evr]
        cells.append(_cell(report.residual_whiteness))
        text = header_line + "\n" + ",".join(cells)
    print(text)
    if args.out:
        out = _ensure_out(args.out)
        name = "report.json" if cfg["format"] == "json" else "report.csv"
        (out / name).write_text(text + "\n", encoding="utf-8")
        _write_json(out / "resolved_config.json", _jsonable(cfg))


def cmd_sweep(args) -> None:
    defaults = {
        "mode": None, "grid": None, "seeds": "0",
        "x": None, "y": None, "layout": "rows", "header": False,
        "hidden": "64,64", "learning_rate": 0.05, "steps": 2000,
        "log_every": 500, "init_scale": 0.1,
        "rotation_seed": 0, "feature_dim": None,
    }
    cfg = _resolve(defaults, args, list(defaults))
    if cfg["mode"] is None:
        raise ValidationError("missing required setting 'mode'")
    if cfg["grid"] is None:
        raise ValidationError("missing required setting 'grid'")
    grid = _parse_floats(str(cfg["grid"]))
    if len(grid) < 2:
        raise ValidationError("grid needs at least 2 values")
    seeds = _parse_ints(str(cfg["seeds"]))
    if cfg["y"] is None:
        raise ValidationError("missing required setting 'y'")
    tm = _load_targets(cfg)
    mode = str(cfg["mode"])
    x = None
    if mode == "mlp":
        if cfg["x"] is None:
            raise ValidationError("mlp sweep needs --x")
        layout = str(cfg["layout"])
        x = oriented(
            load_matrix(cfg["x"], layout=layout, header=bool(cfg["header"])), layout
        )
        if x.shape[1] != tm.num_samples:
            raise ValidationError("inputs and targets disagree on sample count")
    out = _ensure_out(args.out)
    cell_dir = out / "cells"
    cell_dir.mkdir(exist_ok=True)
    cells = [(gv, seed) for gv in grid for seed in seeds]

    def run_cell(index: int) -> Path:
        gv, seed = cells[index]
        path = cell_dir / f"cell_{index:04d}.csv"
        rows = []
        try:
            if mode == "closed-form":
                rows = _closed_form_cell(tm, gv, seed, cfg)
            else:
                rows = _mlp_cell(x, tm, gv, seed, cfg)
            status = "ok"
        except NrcLabError as exc:
            rows = [_sweep_row(mode, gv, seed, None, {}, f"failed:{type(exc).__name__}")]
            status = "failed"
        with open(path, "w", encoding="utf-8") as fh:
            for row in rows:
                fh.write(row + "\n")
        return path

    env_threads = os.environ.get("NRC_LAB_THREADS", "").strip()
    workers = int(env_threads) if env_threads else len(cells)
    workers = max(1, min(workers, len(cells)))
    with ThreadPoolExecutor(max_workers=workers) as pool:
        paths = list(pool.map(run_cell, range(len(cells))))

    header_line = (
        "mode,grid_value,seed,step,loss,mse,r2,nrc1,nrc2,nrc3,gamma,whiteness,status"
    )
    with open(out / "sweep.csv", "w", encoding="utf-8") as fh:
        fh.write(header_line + "\n")
        for path in paths:
            fh.write(path.read_text(encoding="utf-8"))
    _write_json(out / "resolved_config.json", _jsonable(cfg))
    print(f"wrote sweep.csv with {len(cells)} cells to {out}")


def _closed_form_cell(tm, c_value, seed, cfg):
    if c_value <= 0:
        raise ValidationError("closed-form sweep values must be positive c")
    lam = float(np.sqrt(c_value))
    ucfg = UFMConfig(lam, lam)
    stats = compute_target_stats(tm)
    sol = solve_closed_form(
        stats, ucfg, tm,
        rotation_seed=int(cfg["rotation_seed"]) + seed,
        feature_dim=cfg["feature_dim"],
    )
    e = sol.weights @ sol.features + sol.bias[:, None] - tm.values
    m = tm.num_samples
    fit = 0.5 / m * float(np.vdot(e, e))
    centered = tm.values - stats.mean[:, None]
    r2 = 1.0 - float(np.vdot(e, e)) / float(np.vdot(centered, centered))
    if sol.active_rank == 0:
        return [_sweep_row("closed-form", c_value, seed, 0, {
            "loss": sol.loss, "mse": fit, "r2": r2,
        }, "ok")]
    report = nrc_report(
        sol.features, sol.weights, stats, cfg=ucfg,
        gamma_policy="exact_c", targets=tm, bias=sol.bias,
    )
    values = {
        "loss": sol.loss, "mse": fit, "r2": r2,
        "nrc1": report.nrc1, "nrc2": report.nrc2, "nrc3": report.nrc3,
        "gamma": report.gamma_used, "whiteness": report.residual_whiteness,
    }
    return [_sweep_row("closed-form", c_value, seed, 0, values, "ok")]


def _mlp_cell(x, tm, wd_value, seed, cfg):
    if wd_value < 0:
        raise ValidationError("weight decay grid values must be nonnegative")
    data = _as_dataset(x, tm.values)
    arch = MLPArch(
        input_dim=x.shape[0],
        hidden_dims=_parse_ints(str(cfg["hidden"])),
        target_dim=tm.n,
    )
    tc = TrainConfig(
        learning_rate=float(cfg["learning_rate"]),
        steps=int(cfg["steps"]),
        log_every=int(cfg["log_every"]),
        seed=seed,
        init_scale=float(cfg["init_scale"]),
        weight_decay=float(wd_value),
    )
    trace = train_mlp(data, arch, tc)
    rows = []
    for i, step in enumerate(trace.steps):
        rep = trace.nrc_reports[i]
        values = {
            "loss": trace.loss[i], "mse": trace.mse[i], "r2": trace.r_squared[i],
            "nrc1": rep.nrc1, "nrc2": rep.nrc2, "nrc3": rep.nrc3,
            "gamma": rep.gamma_used, "whiteness": rep.residual_whiteness,
        }
        rows.append(_sweep_row("mlp", wd_value, seed, step, values, "ok"))
    return rows


def _sweep_row(mode, grid_value, seed, step, values, status) -> str:
    cells = [
        mode,
        _cell(grid_value),
        str(seed),
        "nan" if step is None else str(step),
    ]
    for key in ("loss", "mse", "r2", "nrc1", "nrc2", "nrc3", "gamma", "whiteness"):
        cells.append(_cell(values.get(key)))
    cells.append(status)
    return ",".join(cells)


def _as_dataset(x, y):
    from .dataset import RegressionDataset

    return RegressionDataset(inputs=x, targets=TargetMatrix(y))


def _gamma_policy(raw) -> tuple:
    value = str(raw).strip().lower()
    if value in ("auto",):
        return "auto", None
    if value in ("exact-c", "exact_c", "c"):
        return "exact_c", None
    try:
        gamma = float(value)
    except ValueError:
        raise ValidationError(
            f"--gamma must be auto, exact-c, or a positive float, got {raw!r}"
        ) from None
    if gamma <= 0 or not np.isfinite(gamma):
        raise ValidationError(f"--gamma float must be positive, got {raw!r}")
    return "supplied", gamma


def _load_targets(cfg) -> TargetMatrix:
    layout = str(cfg["layout"])
    mat = load_matrix(cfg["y"], layout=layout, header=bool(cfg["header"]))
    return TargetMatrix(oriented(mat, layout))


def _parse_sigma(raw: str, n: int) -> np.ndarray:
    if raw.startswith("diag:"):
        values = _parse_floats(raw[len("diag:"):])
        if len(values) != n:
            raise ValidationError(
                f"--sigma diag needs {n} values, got {len(values)}"
            )
        return np.diag(values)
    if raw.startswith("iso:"):
        v = _parse_floats(raw[len("iso:"):])
        if len(v) != 1:
            raise ValidationError("--sigma iso needs exactly one value")
        return v[0] * np.eye(n)
    if raw.startswith("file:"):
        mat = load_matrix(raw[len("file:"):], layout="cols")
        return mat
    raise ValidationError(
        f"--sigma must start with diag:, iso:, or file:, got {raw!r}"
    )


def _parse_floats(raw: str):
    try:
        parts = [p for p in raw.split(",") if p.strip() != ""]
        return [float(p) for p in parts]
    except ValueError:
        raise ValidationError(f"expected comma-separated numbers, got {raw!r}") from None


def _parse_ints(raw: str):
    try:
        parts = [p for p in raw.split(",") if p.strip() != ""]
        return [int(p) for p in parts]
    except ValueError:
        raise ValidationError(f"expected comma-separated integers, got {raw!r}") from None


def _resolve(defaults: dict, args, keys) -> dict:
    resolved = dict(defaults)
    config_path = getattr(args, "config", None)
    if config_path:
        try:
            raw = Path(config_path).read_text(encoding="utf-8")
            loaded = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ValidationError(
                f"config {config_path}: invalid JSON at line {exc.lineno}, "
                f"column {exc.colno}"
            ) from None
        if not isinstance(loaded, dict):
            raise ValidationError(
                f"config {config_path}: top level must be a JSON object"
            )
        for key, value in loaded.items():
            if key not in defaults:
                raise ValidationError(f"config {config_path}: unknown field '{key}'")
            resolved[key] = value
    for key in keys:
        flag = getattr(args, key, None)
        if flag is not None:
            resolved[key] = flag
    return resolved


def _ensure_out(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path, payload) -> None:
    Path(path).write_text(
        json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )


def _jsonable(cfg: dict) -> dict:
    out = {}
    for key, value in cfg.items():
        if isinstance(value, np.ndarray):
            out[key] = value.tolist()
        elif isinstance(value, (np.integer, np.floating)):
            out[key] = value.item()
        else:
            out[key] = value
    return out


def _cell(value) -> str:
    if value is None:
        return "nan"
    return _FMT % float(value)


if __name__ == "__main__":
    sys.exit(main())
