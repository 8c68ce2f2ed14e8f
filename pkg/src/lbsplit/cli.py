"""Command line harness: experiments, training, comparison, self test.

Configuration is a flat key=value text file (dots namespace the keys)
mirrored one to one by command line flags; flags win over the file.
Unknown keys are rejected.  Every run writes a manifest.json next to its
outputs with the resolved configuration, library version, wall time and
final metrics.  All randomness derives from the seed, and trace files
omit wall clock timings unless trace.timing=true, so a rerun with the
same configuration reproduces its outputs byte for byte.

Exit codes: 0 success, 2 configuration error, 3 I/O error, 4 numerical
fault.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

from . import __version__
from .baselines import SolverConfig, admm_solve, drs_solve, fbs_solve, fista_solve
from .core import SeededRng
from .denoise import (
    HashNoise,
    ResidualConvNet,
    TrainConfig,
    builtin_denoisers,
    load_weights,
    save_weights,
    synthetic_corpus,
    train,
)
from .errors import (
    ConfigError,
    DimensionError,
    DomainError,
    InputError,
    NumericalError,
)
from .imaging import (
    blurred_observation,
    build_completion,
    build_deblur,
    masked_observation,
    psnr,
    quality,
    random_mask,
)
from .operators import load_kernel
from .pnm import read_mask, read_pnm, write_mask, write_pnm
from .selftest import run_selftest
from .solver import LbsConfig, lbs_solve

__all__ = ["main", "parse_config_text", "serialize_config", "resolve_config"]

# key -> (type tag, default or None when task dependent / optional)
CONFIG_KEYS = {
    "input": ("str", None),
    "output_dir": ("str", "out"),
    "mask": ("str", None),
    "kernel": ("str", None),
    "ground_truth": ("str", None),
    "seed": ("int", 0),
    "missing": ("float", 0.4),
    "noise_sigma": ("float", 0.0),
    "degrade": ("bool", False),
    "solver": ("str", "lbs"),
    "fidelity.rho": ("float", None),
    "coupling.eta": ("float", 0.02),
    "reg.p": ("float", 0.8),
    "wavelet.levels": ("int", 3),
    "geometry.mu": ("float", 0.01),
    "geometry.mu_u": ("float", 0.01),
    "geometry.mu_vh": ("float", 0.001),
    "geometry.mu_vv": ("float", 0.001),
    "solver.rho": ("float", None),
    "solver.gamma": ("float", 1.0),
    "solver.lambda": ("float", 1.0),
    "solver.c": ("float", None),
    "solver.tol": ("float", 1e-4),
    "solver.max_iters": ("int", 500),
    "solver.descent_check": ("bool", True),
    "denoiser.kind": ("str", "identity"),
    "denoiser.weights": ("str", None),
    "denoiser.tau": ("float", 0.05),
    "denoiser.sigma": ("float", 0.5),
    "compare.solvers": ("str", "lbs,fbs,fista"),
    "deblur.block_order": ("str", "u,vh,vv"),
    "trace.timing": ("bool", False),
    "train.sigma": ("float", 0.1),
    "train.epochs": ("int", 20),
    "train.batches": ("int", 40),
    "train.batch": ("int", 16),
    "train.lr": ("float", 0.5),
    "train.patch": ("int", 35),
    "train.images": ("int", 24),
    "train.size": ("int", 96),
    "out": ("str", "weights.bin"),
}

SOLVERS = ("lbs", "fbs", "fista", "admm", "drs")
DEBLUR_SOLVERS = ("lbs", "fbs", "fista")
DENOISER_KINDS = ("identity", "median3x3", "wavelet_shrink", "trained", "noise")


def _parse_value(key: str, text: str):
    kind = CONFIG_KEYS[key][0]
    text = text.strip()
    try:
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
        if kind == "bool":
            low = text.lower()
            if low in ("true", "1", "yes", "on"):
                return True
            if low in ("false", "0", "no", "off"):
                return False
            raise ValueError("not a boolean: %r" % text)
        return text
    except ValueError as exc:
        raise ConfigError("bad value for %s: %s" % (key, exc)) from exc


def _format_value(key: str, value) -> str:
    kind = CONFIG_KEYS[key][0]
    if kind == "bool":
        return "true" if value else "false"
    if kind == "float":
        return repr(float(value))
    return str(value)


def parse_config_text(text: str) -> dict:
    """Parse flat key=value lines; # starts a comment; unknown keys rejected."""
    cfg = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError("line %d: expected key=value, got %r" % (lineno, raw))
        key, value = line.split("=", 1)
        key = key.strip()
        if key not in CONFIG_KEYS:
            raise ConfigError("line %d: unknown key %r" % (lineno, key))
        if key in cfg:
            raise ConfigError("line %d: duplicate key %r" % (lineno, key))
        cfg[key] = _parse_value(key, value)
    return cfg


def serialize_config(cfg: dict) -> str:
    """Canonical text form; parse_config_text inverts it exactly."""
    lines = ["%s=%s" % (k, _format_value(k, cfg[k])) for k in sorted(cfg)]
    return "\n".join(lines) + ("\n" if lines else "")


def resolve_config(path=None, sets=(), flags=None) -> dict:
    """Merge config file, --set pairs and mirrored flags (flags win)."""
    cfg = {}
    if path:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise InputError("cannot read config %s: %s" % (path, exc)) from exc
        cfg.update(parse_config_text(text))
    for item in sets:
        if "=" not in item:
            raise ConfigError("--set expects key=value, got %r" % item)
        key, value = item.split("=", 1)
        key = key.strip()
        if key not in CONFIG_KEYS:
            raise ConfigError("unknown key %r" % key)
        cfg[key] = _parse_value(key, value)
    if flags:
        for key, value in flags.items():
            if value is not None:
                cfg[key] = _parse_value(key, value)
    return cfg


def cfg_get(cfg: dict, key: str):
    if key in cfg:
        return cfg[key]
    return CONFIG_KEYS[key][1]


def _require(cfg: dict, key: str, command: str):
    value = cfg_get(cfg, key)
    if value is None:
        raise ConfigError("%s requires %s (flag --%s or config key)" % (command, key, key))
    return value


def _threads() -> int:
    raw = os.environ.get("LBS_THREADS", "1")
    try:
        n = int(raw)
    except ValueError as exc:
        raise ConfigError("LBS_THREADS must be an integer, got %r" % raw) from exc
    if n < 1:
        raise ConfigError("LBS_THREADS must be >= 1, got %d" % n)
    return n


def _write_manifest(output_dir: str, payload: dict):
    payload = dict(payload)
    payload["version"] = __version__
    path = os.path.join(output_dir, "manifest.json")
    tmp = path + ".tmp"
    try:
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
        os.replace(tmp, path)
    except OSError as exc:
        raise InputError("cannot write manifest %s: %s" % (path, exc)) from exc
    return path


def _ensure_outdir(cfg: dict) -> str:
    out = cfg_get(cfg, "output_dir")
    try:
        os.makedirs(out, exist_ok=True)
    except OSError as exc:
        raise InputError("cannot create output dir %s: %s" % (out, exc)) from exc
    return out


def _image_denoiser(cfg: dict, rng: SeededRng):
    kind = cfg_get(cfg, "denoiser.kind")
    if kind not in DENOISER_KINDS:
        raise ConfigError(
            "denoiser.kind must be one of %s, got %r" % (", ".join(DENOISER_KINDS), kind)
        )
    if kind == "identity":
        return None
    if kind == "trained":
        path = cfg_get(cfg, "denoiser.weights")
        if not path:
            raise ConfigError("denoiser.kind=trained requires denoiser.weights")
        return load_weights(path)
    if kind == "noise":
        return HashNoise(sigma=cfg_get(cfg, "denoiser.sigma"), seed=cfg_get(cfg, "seed"))
    return builtin_denoisers(
        tau=cfg_get(cfg, "denoiser.tau"), levels=cfg_get(cfg, "wavelet.levels")
    )[kind]


def _lbs_config(cfg: dict) -> LbsConfig:
    return LbsConfig(
        rho=cfg_get(cfg, "solver.rho"),
        gamma=cfg_get(cfg, "solver.gamma"),
        lam=cfg_get(cfg, "solver.lambda"),
        c=cfg_get(cfg, "solver.c"),
        tol=cfg_get(cfg, "solver.tol"),
        max_iters=cfg_get(cfg, "solver.max_iters"),
        descent_check=cfg_get(cfg, "solver.descent_check"),
    )


def _baseline_config(cfg: dict) -> SolverConfig:
    return SolverConfig(
        rho=cfg_get(cfg, "solver.rho"),
        gamma=cfg_get(cfg, "solver.gamma"),
        tol=cfg_get(cfg, "solver.tol"),
        max_iters=cfg_get(cfg, "solver.max_iters"),
    )


def _run_one_solver(name, app, cfg, denoiser_img, rec_fn):
    problem = app.problem
    x0 = app.initial_point()
    if name == "lbs":
        td = app.denoiser_op(denoiser_img) if denoiser_img is not None else None
        return lbs_solve(problem, x0, td, _lbs_config(cfg), rec_fn)
    base = _baseline_config(cfg)
    if name == "fbs":
        return fbs_solve(problem, x0, base, rec_fn)
    if name == "fista":
        return fista_solve(problem, x0, base, rec_fn)
    if name == "drs":
        return drs_solve(problem, x0, base, rec_fn)
    if name == "admm":
        return admm_solve(problem, x0, base, rec_fn)
    raise ConfigError("unknown solver %r, expected one of %s" % (name, ", ".join(SOLVERS)))


def _trace_summary(trace, tol) -> dict:
    last = trace.rows[-1]
    rel = 10.0 ** last.iter_error if last.iter_error is not None else 0.0
    return {
        "iterations": trace.iterations,
        "converged": bool(rel <= tol),
        "final_psi": trace.rows[-1].psi,
    }


def _completion_channel(cfg, rng, channel_img, keep, gt_channel, solver, denoiser_img):
    rho_f = cfg_get(cfg, "fidelity.rho")
    if rho_f is None:
        rho_f = 0.02
    y = masked_observation(channel_img, keep)
    app = build_completion(
        y,
        keep,
        rho_fidelity=rho_f,
        p=cfg_get(cfg, "reg.p"),
        mu=cfg_get(cfg, "geometry.mu"),
        levels=cfg_get(cfg, "wavelet.levels"),
        rng=rng.substream("lipschitz"),
    )
    rec_fn = app.rec_error_fn(gt_channel) if gt_channel is not None else None
    x, trace = _run_one_solver(solver, app, cfg, denoiser_img, rec_fn)
    return app.image_of(x), trace, y


def cmd_complete(cfg: dict) -> dict:
    """Mask-and-restore experiment; the input plays ground truth unless a
    mask file designates it as the observation itself."""
    out = _ensure_outdir(cfg)
    seed = cfg_get(cfg, "seed")
    rng = SeededRng(seed)
    solver = cfg_get(cfg, "solver")
    if solver not in SOLVERS:
        raise ConfigError("solver must be one of %s, got %r" % (", ".join(SOLVERS), solver))
    img = read_pnm(_require(cfg, "input", "complete"))
    mask_path = cfg_get(cfg, "mask")
    if mask_path:
        keep = read_mask(mask_path)
        gt = read_pnm(cfg_get(cfg, "ground_truth")) if cfg_get(cfg, "ground_truth") else None
    else:
        shape = img.shape[:2]
        keep = random_mask(rng.substream("mask"), shape, cfg_get(cfg, "missing"))
        gt = img
    if keep.shape != img.shape[:2]:
        raise DimensionError("mask shape %s does not match image %s" % (keep.shape, img.shape))
    denoiser_img = _image_denoiser(cfg, rng)
    channels = [img] if img.ndim == 2 else [img[:, :, k] for k in range(3)]
    gts = (
        None
        if gt is None
        else ([gt] if gt.ndim == 2 else [gt[:, :, k] for k in range(3)])
    )
    restored = []
    traces = []
    observed = []
    for k, ch in enumerate(channels):
        gch = gts[k] if gts is not None else None
        rch, trace, ych = _completion_channel(
            cfg, rng.substream("ch%d" % k), ch, keep, gch, solver, denoiser_img
        )
        restored.append(rch)
        traces.append(trace)
        observed.append(ych)

    suffix = "pgm" if img.ndim == 2 else "ppm"
    restored_img = restored[0] if img.ndim == 2 else np.stack(restored, axis=2)
    observed_img = observed[0] if img.ndim == 2 else np.stack(observed, axis=2)
    paths = {
        "restored": os.path.join(out, "restored.%s" % suffix),
        "observed": os.path.join(out, "observed.%s" % suffix),
        "mask": os.path.join(out, "mask.pgm"),
    }
    write_pnm(paths["restored"], restored_img)
    write_pnm(paths["observed"], observed_img)
    write_mask(paths["mask"], keep)
    timing = cfg_get(cfg, "trace.timing")
    trace_paths = []
    for k, trace in enumerate(traces):
        name = "trace_%s.csv" % solver if len(traces) == 1 else "trace_%s_c%d.csv" % (solver, k)
        tp = os.path.join(out, name)
        trace.to_csv(tp, include_timing=timing)
        trace_paths.append(tp)
    paths["traces"] = trace_paths

    metrics = dict(_trace_summary(traces[0], cfg_get(cfg, "solver.tol")))
    if gts is not None:
        q = [quality(r, g) for r, g in zip(restored, gts)]
        metrics["psnr"] = sum(v.psnr for v in q) / len(q)
        metrics["ssim"] = sum(v.ssim for v in q) / len(q)
        metrics["input_psnr"] = sum(psnr(o, g) for o, g in zip(observed, gts)) / len(q)
    return {"command": "complete", "solver": solver, "outputs": paths, "metrics": metrics}


def cmd_deblur(cfg: dict) -> dict:
    """Deblur an observation, or degrade-then-restore with degrade=true."""
    out = _ensure_outdir(cfg)
    seed = cfg_get(cfg, "seed")
    rng = SeededRng(seed)
    solver = cfg_get(cfg, "solver")
    if solver not in SOLVERS:
        raise ConfigError("solver must be one of %s, got %r" % (", ".join(SOLVERS), solver))
    if solver not in DEBLUR_SOLVERS:
        raise ConfigError(
            "deblurring supports %s; %s would need a proximal map of the coupled "
            "quadratic" % (", ".join(DEBLUR_SOLVERS), solver)
        )
    img = read_pnm(_require(cfg, "input", "deblur"))
    if img.ndim != 2:
        raise ConfigError("deblur expects a single channel PGM input")
    kernel = load_kernel(_require(cfg, "kernel", "deblur"))
    if cfg_get(cfg, "degrade"):
        gt = img
        y = blurred_observation(
            img, kernel, cfg_get(cfg, "noise_sigma"), rng.substream("noise")
        )
    else:
        gt = read_pnm(cfg_get(cfg, "ground_truth")) if cfg_get(cfg, "ground_truth") else None
        y = img
    rho_f = cfg_get(cfg, "fidelity.rho")
    if rho_f is None:
        rho_f = 0.005
    order = tuple(s.strip() for s in cfg_get(cfg, "deblur.block_order").split(","))
    app = build_deblur(
        y,
        kernel,
        rho_fidelity=rho_f,
        eta=cfg_get(cfg, "coupling.eta"),
        p=cfg_get(cfg, "reg.p"),
        weights=(
            cfg_get(cfg, "geometry.mu_u"),
            cfg_get(cfg, "geometry.mu_vh"),
            cfg_get(cfg, "geometry.mu_vv"),
        ),
        block_order=order,
        rng=rng.substream("lipschitz"),
    )
    denoiser_img = _image_denoiser(cfg, rng)
    rec_fn = app.rec_error_fn(gt) if gt is not None else None
    x, trace = _run_one_solver(solver, app, cfg, denoiser_img, rec_fn)
    restored = app.image_of(x)

    paths = {
        "restored": os.path.join(out, "restored.pgm"),
        "observed": os.path.join(out, "observed.pgm"),
    }
    write_pnm(paths["restored"], restored)
    write_pnm(paths["observed"], y)
    tp = os.path.join(out, "trace_%s.csv" % solver)
    trace.to_csv(tp, include_timing=cfg_get(cfg, "trace.timing"))
    paths["traces"] = [tp]

    metrics = dict(_trace_summary(trace, cfg_get(cfg, "solver.tol")))
    if gt is not None:
        q = quality(np.clip(restored, 0, 1), gt)
        metrics["psnr"] = q.psnr
        metrics["ssim"] = q.ssim
        metrics["input_psnr"] = psnr(y, gt)
    return {"command": "deblur", "solver": solver, "outputs": paths, "metrics": metrics}


def cmd_train(cfg: dict) -> dict:
    """Train the residual denoiser on the procedural corpus."""
    out_path = cfg_get(cfg, "out")
    parent = os.path.dirname(out_path)
    if parent:
        try:
            os.makedirs(parent, exist_ok=True)
        except OSError as exc:
            raise InputError("cannot create %s: %s" % (parent, exc)) from exc
    rng = SeededRng(cfg_get(cfg, "seed"))
    corpus = synthetic_corpus(
        rng.substream("corpus"), cfg_get(cfg, "train.images"), cfg_get(cfg, "train.size")
    )
    net = ResidualConvNet((1, 8, 8, 1)).init_uniform(rng.substream("init"))
    tc = TrainConfig(
        sigma=cfg_get(cfg, "train.sigma"),
        epochs=cfg_get(cfg, "train.epochs"),
        batches_per_epoch=cfg_get(cfg, "train.batches"),
        batch_size=cfg_get(cfg, "train.batch"),
        patch_size=cfg_get(cfg, "train.patch"),
        learning_rate=cfg_get(cfg, "train.lr"),
    )
    result = train(net, corpus, tc, rng.substream("train"))
    save_weights(out_path, net)
    return {
        "command": "train-denoiser",
        "outputs": {"weights": out_path},
        "metrics": {
            "initial_loss": result.initial_loss,
            "final_loss": result.final_loss,
            "val_input_mse": result.val_input_mse,
            "val_output_mse": result.val_output_mse,
            "steps": len(result.losses),
        },
    }


def cmd_compare(cfg: dict) -> dict:
    """Run several solvers on one seeded instance and tabulate."""
    out = _ensure_outdir(cfg)
    solvers = [s.strip() for s in cfg_get(cfg, "compare.solvers").split(",") if s.strip()]
    if not solvers:
        raise ConfigError("compare.solvers must name at least one solver")
    for s in solvers:
        if s not in SOLVERS:
            raise ConfigError("unknown solver %r in compare.solvers" % s)
    seed = cfg_get(cfg, "seed")
    rng = SeededRng(seed)
    img = read_pnm(_require(cfg, "input", "compare"))
    if img.ndim != 2:
        raise ConfigError("compare expects a single channel PGM input")
    keep = random_mask(rng.substream("mask"), img.shape, cfg_get(cfg, "missing"))
    gt = img
    denoiser_img = _image_denoiser(cfg, rng)
    timing = cfg_get(cfg, "trace.timing")
    tol = cfg_get(cfg, "solver.tol")
    table = []
    paths = {"traces": []}
    for name in solvers:
        t0 = time.perf_counter()
        restored, trace, _ = _completion_channel(
            cfg, rng.substream("solve"), img, keep, gt, name, denoiser_img
        )
        wall = time.perf_counter() - t0
        tp = os.path.join(out, "trace_%s.csv" % name)
        trace.to_csv(tp, include_timing=timing)
        paths["traces"].append(tp)
        q = quality(restored, gt)
        row = dict(_trace_summary(trace, tol))
        row.update(
            {"solver": name, "psnr": q.psnr, "ssim": q.ssim, "wall_time_s": round(wall, 3)}
        )
        table.append(row)
    header = "%-7s %9s %10s %14s %8s %8s %10s" % (
        "solver", "iters", "converged", "final_psi", "psnr", "ssim", "time_s"
    )
    print(header)
    for row in table:
        print(
            "%-7s %9d %10s %14.6g %8.3f %8.4f %10.3f"
            % (
                row["solver"],
                row["iterations"],
                str(row["converged"]),
                row["final_psi"],
                row["psnr"],
                row["ssim"],
                row["wall_time_s"],
            )
        )
    return {"command": "compare", "outputs": paths, "metrics": {"table": table}}


def cmd_selftest(cfg: dict) -> dict:
    failures = run_selftest(verbose=True)
    if failures:
        raise NumericalError("%d self test check(s) failed" % failures)
    return {"command": "selftest", "outputs": {}, "metrics": {"failures": 0}}


COMMANDS = {
    "complete": cmd_complete,
    "deblur": cmd_deblur,
    "train-denoiser": cmd_train,
    "compare": cmd_compare,
    "selftest": cmd_selftest,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lbsplit",
        description="Safeguarded learned splitting: experiments and utilities.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, help="run %s" % name)
        p.add_argument("--config", default=None, help="key=value config file")
        p.add_argument(
            "--set",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            dest="sets",
            help="override a single config key (repeatable)",
        )
        for key, (kind, _default) in CONFIG_KEYS.items():
            p.add_argument("--%s" % key, dest=key, default=None, metavar=kind.upper())
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    ns = parser.parse_args(argv)
    flags = {key: getattr(ns, key) for key in CONFIG_KEYS if getattr(ns, key) is not None}
    try:
        threads = _threads()
        cfg = resolve_config(ns.config, ns.sets, flags)
        t0 = time.perf_counter()
        payload = COMMANDS[ns.command](cfg)
        payload["config"] = {k: _format_value(k, v) for k, v in sorted(cfg.items())}
        payload["seed"] = cfg_get(cfg, "seed")
        payload["threads"] = threads
        payload["wall_time_s"] = round(time.perf_counter() - t0, 3)
        if ns.command == "selftest":
            print("selftest: all checks passed")
        else:
            out_dir = (
                os.path.dirname(cfg_get(cfg, "out")) or "."
                if ns.command == "train-denoiser"
                else cfg_get(cfg, "output_dir")
            )
            if ns.command == "train-denoiser":
                os.makedirs(out_dir, exist_ok=True)
            manifest = _write_manifest(out_dir, payload)
            print("wrote %s" % manifest)
        return 0
    except (ConfigError, DomainError, DimensionError) as exc:
        print("config error: %s" % exc, file=sys.stderr)
        return 2
    except (InputError, OSError) as exc:
        print("I/O error: %s" % exc, file=sys.stderr)
        return 3
    except NumericalError as exc:
        print("numerical fault: %s" % exc, file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
