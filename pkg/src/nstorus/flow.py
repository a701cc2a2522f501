"""Integration of the transformed Galerkin ODE d/ds u~ = -B~(s, u~) and the
mild/strong residual diagnostics on recovered physical trajectories.

The tilde change of variables makes the system non-stiff, so classical
fixed-step RK4 applies; physical states are recovered exactly by modewise
e^{-t nu |k|^2} unscaling. The mean flow u_0 is constant along every
trajectory (the drift has no mean output).
"""

import csv
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import kernels
from .field import SpectralField, get_layout, sobolev_norm_sq
from .nonlinear import build_term_table, drift_matrix, extend_ones, stage_weights


class FlowError(RuntimeError):
    pass


def resolve_threads(threads=None):
    """Worker count: explicit arg, else NSTORUS_THREADS, else min(4, cpus).
    Affects speed only; results are bitwise independent of it."""
    if threads is not None:
        return max(1, int(threads))
    env = os.environ.get("NSTORUS_THREADS", "").strip()
    if env:
        return max(1, int(env))
    return min(4, os.cpu_count() or 1)


def integrate_batch(spec, X0, T, steps, snap_steps, threads=None, backend=None):
    """RK4 over rows of X0 (coefficient matrix). Returns (len(snap_steps),
    M, C) snapshots of the tilde states. Chunked over samples; chunking
    cannot change results (rows are independent, reductions happen later in
    fixed sample order)."""
    if T <= 0 or steps < 1:
        raise FlowError("need T > 0 and steps >= 1")
    _, impl = kernels.get_backend(backend)
    mean = tuple(spec.mean) if spec.mean else None
    table = build_term_table(spec.dim, spec.radius, mean=mean)
    dt = T / steps
    w_stages = stage_weights(table, 0.0, dt, steps, spec.nu)
    snap_steps = np.asarray(sorted(int(s) for s in snap_steps), dtype=np.int64)
    if snap_steps.size and (snap_steps[0] < 0 or snap_steps[-1] > steps):
        raise FlowError("snapshot steps outside [0, steps]")
    X0 = np.atleast_2d(np.asarray(X0, dtype=float))
    M = X0.shape[0]
    Xext = extend_ones(X0)
    nworkers = min(resolve_threads(threads), M)

    def run(a, b):
        return impl.rk4_batch(
            Xext[a:b], dt, table.i1, table.i2, table.seg_bounds, table.seg_slots,
            w_stages, snap_steps,
        )

    try:
        if nworkers <= 1:
            return run(0, M)
        bounds = np.linspace(0, M, nworkers + 1).astype(int)
        out = np.empty((snap_steps.size, M, X0.shape[1]))
        with ThreadPoolExecutor(max_workers=nworkers) as pool:
            futures = [
                (a, b, pool.submit(run, a, b))
                for a, b in zip(bounds[:-1], bounds[1:])
                if b > a
            ]
            for a, b, fut in futures:
                out[:, a:b, :] = fut.result()
        return out
    except FloatingPointError as err:
        raise FlowError(f"trajectory overflow: {err}") from err


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    states_tilde: list
    states_physical: list
    scheme: str
    step: float

    @property
    def spec_dim(self):
        return self.states_tilde[0].dim


def _unscale_matrix(layout, times, tilde_states, nu):
    """Physical coefficients e^{-t nu |k|^2} u~_k(t), rows indexed by time."""
    lam = layout.slot_norm_sq
    return tilde_states * np.exp(-nu * np.outer(times, lam))


def integrate_tilde(u0, T, M, spec, backend=None):
    """Full-resolution single trajectory (every step recorded)."""
    if u0.radius != spec.radius or u0.dim != spec.dim:
        raise FlowError("initial field layout must match spec (radius, dim)")
    layout = u0.layout
    mean_field = tuple(u0.mean) if u0.mean.any() else None
    spec_mean = tuple(spec.mean) if spec.mean else None
    if mean_field != spec_mean:
        spec = type(spec)(spec.dim, spec.radius, spec.alpha, spec.ell, spec.nu,
                          mean=mean_field)
    snaps = integrate_batch(
        spec, u0.coeffs[None, :], T, M, snap_steps=range(M + 1),
        threads=1, backend=backend,
    )[:, 0, :]
    times = T / M * np.arange(M + 1)
    phys = _unscale_matrix(layout, times, snaps, spec.nu)
    states_t = [SpectralField(layout, snaps[i], u0.mean) for i in range(M + 1)]
    states_p = [SpectralField(layout, phys[i], u0.mean) for i in range(M + 1)]
    return Trajectory(times=times, states_tilde=states_t, states_physical=states_p,
                      scheme="rk4", step=T / M)


def euler_mode(u0, T, M, spec, backend=None):
    """nu = 0 flow; tilde and physical trajectories coincide."""
    if spec.nu != 0.0:
        raise FlowError("euler_mode requires nu = 0")
    return integrate_tilde(u0, T, M, spec, backend=backend)


def _simpson_weights(j, dt):
    # composite Simpson over grid points 0..j (j even)
    w = np.zeros(j + 1)
    w[0] = w[j] = 1.0
    w[1:j:2] = 4.0
    w[2:j:2] = 2.0
    return w * dt / 3.0


def _residual_common(traj, spec):
    M = len(traj.times) - 1
    if M % 2 != 0:
        raise FlowError("residual quadrature needs an even step count")
    layout = traj.states_physical[0].layout
    phys = np.stack([f.coeffs for f in traj.states_physical])
    table = build_term_table(
        spec.dim, spec.radius,
        mean=tuple(traj.states_physical[0].mean) if traj.states_physical[0].mean.any() else None,
    )
    drift = drift_matrix(table, phys)
    return M, layout, phys, drift


def mild_residual(traj, spec):
    """(times, residuals) of the Duhamel form at even grid points:
    || U(t) - e^{t nu D} u0 + int_0^t e^{(t-s) nu D} B(U(s)) ds ||_alpha."""
    M, layout, phys, drift = _residual_common(traj, spec)
    lam = layout.slot_norm_sq
    dt = traj.step
    u0 = phys[0]
    out_t, out_r = [], []
    for j in range(0, M + 1, 2):
        t = traj.times[j]
        if j == 0:
            integral = np.zeros_like(u0)
        else:
            w = _simpson_weights(j, dt)
            decay = np.exp(-spec.nu * np.outer(t - traj.times[:j + 1], lam))
            integral = (w[:, None] * decay * drift[:j + 1]).sum(axis=0)
        resid = phys[j] - np.exp(-t * spec.nu * lam) * u0 + integral
        res_field = SpectralField(layout, resid, np.zeros(layout.dim))
        out_t.append(t)
        out_r.append(math.sqrt(sobolev_norm_sq(res_field, spec.alpha)))
    return np.array(out_t), np.array(out_r)


def strong_residual(traj, spec):
    """|| U(t) - u0 - int_0^t (nu Delta U - B(U)) ds ||_alpha at even points."""
    M, layout, phys, drift = _residual_common(traj, spec)
    lam = layout.slot_norm_sq
    dt = traj.step
    u0 = phys[0]
    integrand = -spec.nu * lam[None, :] * phys - drift
    out_t, out_r = [], []
    for j in range(0, M + 1, 2):
        t = traj.times[j]
        if j == 0:
            integral = np.zeros_like(u0)
        else:
            w = _simpson_weights(j, dt)
            integral = (w[:, None] * integrand[:j + 1]).sum(axis=0)
        resid = phys[j] - u0 - integral
        res_field = SpectralField(layout, resid, np.zeros(layout.dim))
        out_t.append(t)
        out_r.append(math.sqrt(sobolev_norm_sq(res_field, spec.alpha)))
    return np.array(out_t), np.array(out_r)


def integrate_physical_etd1(u0, T, M, spec):
    """Exponential Euler on the stiff physical form, as an independent
    cross-check of tilde-RK4 + unscaling. First order; use small steps."""
    layout = u0.layout
    lam = layout.slot_norm_sq
    mean = tuple(u0.mean) if u0.mean.any() else None
    table = build_term_table(spec.dim, spec.radius, mean=mean)
    dt = T / M
    z = -dt * spec.nu * lam
    decay = np.exp(z)
    phi1 = np.where(np.abs(z) < 1e-12, 1.0, np.expm1(z) / np.where(z == 0, 1.0, z))
    x = u0.coeffs.copy()
    for _ in range(M):
        b = drift_matrix(table, x[None, :])[0]
        x = decay * x + dt * phi1 * (-b)
    return SpectralField(layout, x, u0.mean)


def export_trajectory_csv(traj, path):
    layout = traj.states_tilde[0].layout
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "mode", "p", "u", "v", "u_phys", "v_phys"])
        for i, t in enumerate(traj.times):
            ft, fp = traj.states_tilde[i], traj.states_physical[i]
            for j, k in enumerate(layout.modes):
                for p in range(layout.pol):
                    writer.writerow([
                        repr(float(t)),
                        " ".join(str(c) for c in k.components),
                        p + 1,
                        repr(float(ft.coeffs[layout.u_slot(j, p)])),
                        repr(float(ft.coeffs[layout.v_slot(j, p)])),
                        repr(float(fp.coeffs[layout.u_slot(j, p)])),
                        repr(float(fp.coeffs[layout.v_slot(j, p)])),
                    ])


def export_trajectory_sidecar(traj, spec, path, extra=None):
    meta = {
        "dim": spec.dim, "radius": spec.radius, "alpha": spec.alpha,
        "ell": spec.ell, "nu": spec.nu, "mean": list(spec.mean) if spec.mean else None,
        "scheme": traj.scheme, "step": traj.step, "horizon": float(traj.times[-1]),
        "kernel_backend": kernels.BACKEND,
    }
    if extra:
        meta.update(extra)
    with open(path, "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
