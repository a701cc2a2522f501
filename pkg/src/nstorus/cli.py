"""Command-line entry point.

Configuration comes from an optional JSON file (--config) with individual
flags overriding file values. Every command is deterministic given
(config, seed); reports embed a content hash of the config. Exit codes:
0 all checks passed, 1 scientific failure, 2 usage or config error.
"""

import argparse
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from .field import SpectralField, from_json, orthonormal_gram, sobolev_norm_sq
from .flow import (
    FlowError,
    export_trajectory_csv,
    export_trajectory_sidecar,
    integrate_tilde,
    mild_residual,
    strong_residual,
)
from .lattice import enumerate_wavevectors, project_perp, signed_difference
from .measure import AdmissibilityError, MeasureSpec, sample
from .measure import RngStream
from .nonlinear import (
    b_oracle,
    b_truncated,
    convention_constants,
    drift_state_inner,
    frame_independence_residual,
    series_partial_sums,
)
from .field import GridSpec, get_layout
from .verify import (
    VerificationReport,
    divergence_sweep,
    invariance_test,
    observables_from_config,
    pushforward_test,
)

DESK_CONFIG = {
    "dim": 2, "radius": 3, "alpha": 0.0, "ell": 3.0, "nu": 0.5,
    "horizon": 1.0, "steps": 400, "samples": 10000, "seed": 42,
    "mean": None, "observables": None, "threads": None,
    "format": "json", "out": None,
}

FLAG_KEYS = ("dim", "radius", "alpha", "ell", "nu", "horizon", "steps",
             "samples", "seed", "out", "format")


class ConfigError(Exception):
    pass


def _load_config(args):
    cfg = dict(DESK_CONFIG)
    if args.config:
        try:
            with open(args.config) as fh:
                file_cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as err:
            raise ConfigError(f"cannot read config {args.config}: {err}")
        if not isinstance(file_cfg, dict):
            raise ConfigError("config file must hold a JSON object")
        cfg.update(file_cfg)
    for key in FLAG_KEYS:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    if cfg["format"] not in ("json", "csv"):
        raise ConfigError(f"unknown format {cfg['format']!r}")
    return cfg


def _spec(cfg):
    try:
        return MeasureSpec(
            dim=int(cfg["dim"]), radius=int(cfg["radius"]),
            alpha=float(cfg["alpha"]), ell=float(cfg["ell"]),
            nu=float(cfg["nu"]),
            mean=tuple(cfg["mean"]) if cfg.get("mean") else None,
        )
    except (TypeError, ValueError) as err:
        raise ConfigError(f"invalid spec parameters: {err}")


def _public_config(cfg, **extra):
    out = {k: cfg.get(k) for k in DESK_CONFIG}
    out.update(extra)
    return out


def _emit(report, cfg):
    text = report.to_json() if cfg["format"] == "json" else report.to_csv()
    if cfg.get("out"):
        Path(cfg["out"]).write_text(text)
    else:
        sys.stdout.write(text)


def _row(check_id, value, tol, passed=None, t=0.0, ref=0.0):
    ok = (abs(value) <= tol) if passed is None else bool(passed)
    return {"id": check_id, "t": t, "mean0": None, "meanT": float(value),
            "ref": ref, "se": None, "z": None,
            "verdict": "pass" if ok else "fail"}


def cmd_verify_basis(cfg):
    t0 = time.perf_counter()
    spec = _spec(cfg)
    d, n = spec.dim, spec.radius
    rows = []

    gram, _ = orthonormal_gram(d, n)
    dev = float(np.max(np.abs(gram - np.eye(gram.shape[0]))))
    rows.append(_row("orthonormality_gram", dev, 1e-10))

    modes = enumerate_wavevectors(d, n)
    frame_dev = 0.0
    convention_ok = True
    for k in modes:
        F = np.asarray(k.frame, dtype=float)
        kv = k.as_array()
        frame_dev = max(frame_dev, float(np.max(np.abs(F @ kv))))
        gram_f = F @ F.T
        frame_dev = max(frame_dev, float(np.max(np.abs(
            gram_f - k.norm_sq * np.eye(d - 1)))))
        for row_vec in F:
            nz = row_vec[np.abs(row_vec) > 1e-12]
            if d > 2 and nz.size and nz[0] < 0:
                convention_ok = False
        if d == 2:
            expected = np.array([-k.components[1], k.components[0]], dtype=float)
            if not np.array_equal(F[0], expected):
                convention_ok = False
    rows.append(_row("frame_suite", frame_dev, 1e-10))
    rows.append(_row("frame_convention", 0.0 if convention_ok else 1.0, 0.5))

    rng = np.random.default_rng(int(cfg["seed"]))
    proj_dev = 0.0
    for k in modes[:: max(1, len(modes) // 50)]:
        kv = k.as_array()
        for _ in range(4):
            v = rng.standard_normal(d)
            pv = project_perp(k, v)
            proj_dev = max(proj_dev, abs(float(pv @ kv)) / k.norm)
            proj_dev = max(proj_dev, float(np.max(np.abs(project_perp(k, pv) - pv))))
        proj_dev = max(proj_dev, float(np.max(np.abs(project_perp(k, kv)))))
    rows.append(_row("projector_suite", proj_dev, 1e-12))

    sd_bad = 0
    for _ in range(200):
        k = modes[rng.integers(len(modes))]
        h = modes[rng.integers(len(modes))]
        got = signed_difference(k, h)
        if k.components == h.components:
            sd_bad += got is not None
            continue
        if got is None:
            sd_bad += 1
            continue
        m, sg = got
        diff = np.array(k.components) - np.array(h.components)
        sd_bad += not np.array_equal(sg * m.as_array(), diff)
    rows.append(_row("signed_difference_suite", float(sd_bad), 0.5))

    report = VerificationReport(
        kind="verify-basis", config=_public_config(cfg), seed=int(cfg["seed"]),
        rows=rows, sample_count=len(modes),
        runtime_sec=time.perf_counter() - t0,
    )
    _emit(report, cfg)
    return 0 if report.passed else 1


def _random_field(layout, rng, with_mean):
    coeffs = rng.standard_normal(layout.size) * 0.5
    mean = rng.standard_normal(layout.dim) * 0.5 if with_mean else None
    return SpectralField(layout, coeffs, mean)


def cmd_verify_nonlinear(cfg):
    t0 = time.perf_counter()
    spec = _spec(cfg)
    d, n = spec.dim, spec.radius
    rows = []
    notes = {"convention_constants": convention_constants((d,))}
    series_only = bool(cfg.get("series_only", False))
    mutate = bool(cfg.get("mutate", False))

    if not series_only:
        spec.require_admissible()
        layout = get_layout(d, n)
        rng = np.random.default_rng(int(cfg["seed"]))
        grid = GridSpec(d, 4 * n + 2)
        worst = 0.0
        for i in range(int(cfg.get("fields", 20))):
            f = _random_field(layout, rng, with_mean=(i % 3 == 0))
            ours = b_truncated(f, n).field_out
            ref = b_oracle(f, grid).field_out
            num = math.sqrt(sobolev_norm_sq(
                SpectralField(layout, ours.coeffs - ref.coeffs, np.zeros(d)), 0.0))
            den = math.sqrt(sobolev_norm_sq(ref, 0.0)) + 1e-300
            worst = max(worst, num / den)
        rows.append(_row("oracle_equivalence_rel", worst, 1e-9))

        sweep = divergence_sweep(
            spec, int(cfg.get("points", 10)),
            [float(s) for s in cfg.get("s_list", [0.0, 0.5, 1.0])],
            seed=int(cfg["seed"]),
            plus_scale=1.01 if mutate else 1.0,
        )
        rows.append(_row(
            "divergence_sweep_max_ratio", sweep.notes["worst"]["ratio"], 1.0,
            passed=sweep.passed))
        notes["divergence_worst"] = sweep.notes["worst"]
        if mutate:
            notes["mutation"] = "lambda_plus scaled by 1.01; failure expected"

        ortho_rs = [0.0]
        if d == 2:
            ortho_rs.append(1.0)
        ortho_rs.append(spec.ell)
        f = _random_field(layout, rng, with_mean=False)
        scale_bound = 1e-10 * (1.0 + sobolev_norm_sq(f, spec.ell))
        for r in ortho_rs:
            val = drift_state_inner(f, spec, s=0.0, r=r)
            rows.append(_row(f"orthogonality_r({r:g})", val, scale_bound))

        rows.append(_row(
            "frame_independence",
            frame_independence_residual(d, n, seed=int(cfg["seed"])), 1e-10))

    cutoffs = cfg.get("cutoffs") or ([10, 20, 40] if d == 2 else [5, 10, 20])
    cutoffs = [int(c) for c in cutoffs]
    tables = [series_partial_sums(spec, c, c) for c in cutoffs]
    for c, tab in zip(cutoffs, tables):
        rows.append(_row(f"series_S({c})", tab.S, math.inf, passed=True))
    growth = (tables[-1].S - tables[-2].S) / tables[-2].S
    rows.append(_row("series_cauchy_growth", growth, 0.05))
    lo, hi = cfg.get("h_window", [5, 20] if d == 2 else [2, 5])
    tab = tables[-1]
    win = (tab.h_norm_sq >= lo * lo) & (tab.h_norm_sq <= hi * hi)
    if win.any():
        ratio = tab.inner_over_scaling(spec.alpha)[win]
        rows.append(_row("series_scaling_ratio_min", float(ratio.min()), math.inf,
                         passed=ratio.min() >= 0.1))
        rows.append(_row("series_scaling_ratio_max", float(ratio.max()), math.inf,
                         passed=ratio.max() <= 10.0))

    report = VerificationReport(
        kind="verify-nonlinear", config=_public_config(
            cfg, series_only=series_only, mutate=mutate),
        seed=int(cfg["seed"]), rows=rows, sample_count=int(cfg.get("fields", 20)),
        runtime_sec=time.perf_counter() - t0, notes=notes,
    )
    _emit(report, cfg)
    return 0 if report.passed else 1


def _initial_field(cfg, spec):
    init = cfg.get("initial_field")
    if init is None:
        spec.require_admissible()
        return sample(spec, RngStream(int(cfg["seed"]), 0))
    if isinstance(init, str):
        return from_json(Path(init).read_text())
    layout = get_layout(spec.dim, spec.radius)
    modes = {tuple(m["k"]): (m["u"], m["v"]) for m in init.get("modes", [])}
    return SpectralField.from_modes(spec.dim, spec.radius, modes,
                                    init.get("mean"))


def cmd_run(cfg):
    t0 = time.perf_counter()
    spec = _spec(cfg)
    steps = int(cfg["steps"])
    if steps < 2 or steps % 2 != 0:
        raise ConfigError("steps must be even and >= 2 (residual quadrature)")
    u0 = _initial_field(cfg, spec)
    traj = integrate_tilde(u0, float(cfg["horizon"]), steps, spec)

    out = cfg.get("out") or "trajectory.csv"
    export_trajectory_csv(traj, out)
    sidecar = str(Path(out).with_suffix(".json"))
    export_trajectory_sidecar(traj, spec, sidecar,
                              extra={"seed": int(cfg["seed"])})

    rows = []
    tol_mild = float(cfg.get("tol_mild", 1e-6))
    tol_strong = float(cfg.get("tol_strong", 1e-6))
    _, mild = mild_residual(traj, spec)
    _, strong = strong_residual(traj, spec)
    rows.append(_row("mild_residual_max", float(mild.max()), tol_mild,
                     t=float(cfg["horizon"])))
    rows.append(_row("strong_residual_max", float(strong.max()), tol_strong,
                     t=float(cfg["horizon"])))
    if spec.nu == 0.0:
        r_list = [0.0] + ([1.0] if spec.dim == 2 else []) + [spec.ell]
        for r in r_list:
            norms = np.array([sobolev_norm_sq(f, r)
                              for f in traj.states_physical])
            drift = float(np.max(np.abs(norms - norms[0])) / norms[0])
            rows.append(_row(f"conservation_rel_drift_r({r:g})", drift, 1e-8,
                             t=float(cfg["horizon"])))

    report = VerificationReport(
        kind="run", config=_public_config(cfg, initial_field=bool(cfg.get(
            "initial_field"))), seed=int(cfg["seed"]), rows=rows,
        sample_count=1, runtime_sec=time.perf_counter() - t0,
        notes={"trajectory_csv": out, "sidecar": sidecar},
    )
    text = report.to_json() if cfg["format"] == "json" else report.to_csv()
    sys.stdout.write(text)
    return 0 if report.passed else 1


def cmd_invariance(cfg):
    spec = _spec(cfg)
    spec.require_admissible()
    report = invariance_test(
        spec, float(cfg["horizon"]), int(cfg["samples"]), int(cfg["steps"]),
        observables=observables_from_config(spec, cfg.get("observables")),
        seed=int(cfg["seed"]), threads=cfg.get("threads"),
    )
    _emit(report, cfg)
    return 0 if report.passed else 1


def cmd_pushforward(cfg):
    spec = _spec(cfg)
    spec.require_admissible()
    t_list = [float(t) for t in cfg.get("t_list", [0.25, 0.5, 1.0])]
    report = pushforward_test(
        spec, t_list, int(cfg["samples"]), int(cfg["steps"]),
        observables=observables_from_config(spec, cfg.get("observables")),
        seed=int(cfg["seed"]), threads=cfg.get("threads"),
    )
    _emit(report, cfg)
    return 0 if report.passed else 1


def cmd_series(cfg):
    t0 = time.perf_counter()
    spec = _spec(cfg)
    d = spec.dim
    cutoffs = cfg.get("cutoffs") or ([10, 20, 40] if d == 2 else [5, 10, 20])
    cutoffs = [int(c) for c in cutoffs]
    if len(cutoffs) < 2:
        raise ConfigError("series needs at least two cutoffs")
    rows = []
    tables = [series_partial_sums(spec, c, c) for c in cutoffs]
    for c, tab in zip(cutoffs, tables):
        rows.append(_row(f"series_S({c})", tab.S, math.inf, passed=True))
    for (c0, t_a), (c1, t_b) in zip(zip(cutoffs, tables),
                                    zip(cutoffs[1:], tables[1:])):
        growth = (t_b.S - t_a.S) / t_a.S
        rows.append(_row(f"series_growth_{c0}_to_{c1}", growth, 0.05))
    report = VerificationReport(
        kind="series", config=_public_config(cfg, cutoffs=cutoffs),
        seed=int(cfg["seed"]), rows=rows, sample_count=0,
        runtime_sec=time.perf_counter() - t0,
    )
    _emit(report, cfg)
    return 0 if report.passed else 1


COMMANDS = {
    "verify-basis": cmd_verify_basis,
    "verify-nonlinear": cmd_verify_nonlinear,
    "run": cmd_run,
    "invariance": cmd_invariance,
    "pushforward": cmd_pushforward,
    "series": cmd_series,
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="nstorus",
        description="Spectral Galerkin simulator and statistical verifier "
                    "for periodic Navier-Stokes with Gaussian random data.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=str, default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--samples", type=int, default=None)
        p.add_argument("--steps", type=int, default=None)
        p.add_argument("--dim", type=int, default=None)
        p.add_argument("--radius", type=int, default=None)
        p.add_argument("--alpha", type=float, default=None)
        p.add_argument("--ell", type=float, default=None)
        p.add_argument("--nu", type=float, default=None)
        p.add_argument("--horizon", type=float, default=None)
        p.add_argument("--out", type=str, default=None)
        p.add_argument("--format", type=str, default=None,
                       choices=("json", "csv"))
        if name == "verify-nonlinear":
            p.add_argument("--series-only", dest="series_only",
                           action="store_true", default=None)
            p.add_argument("--mutate", action="store_true", default=None)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _load_config(args)
        if getattr(args, "series_only", None):
            cfg["series_only"] = True
        if getattr(args, "mutate", None):
            cfg["mutate"] = True
        return COMMANDS[args.command](cfg)
    except (ConfigError, AdmissibilityError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except FlowError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
