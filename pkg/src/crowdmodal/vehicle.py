"""Quarter-car suspension: state-space model, discrete filtering, transfer magnitude.

State vector ``[x_s, v_s, x_u, v_u]``. The same system matrix serves two input
realizations: absolute coordinates driven by base displacement and velocity,
and coordinates relative to the base driven directly by base acceleration.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class QuarterCar:
    suspension_stiffness: float
    suspension_damping: float
    sprung_mass: float
    unsprung_mass: float
    tire_stiffness: float
    tire_damping: float

    def __post_init__(self):
        for name in ("suspension_stiffness", "sprung_mass", "unsprung_mass", "tire_stiffness"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        for name in ("suspension_damping", "tire_damping"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")


#: (k_s, c_s, m_s, m_u, k_t, c_t) for the four simulated vehicles.
PRESETS = {
    "V1": QuarterCar(62.30, 6.0, 1.0, 0.15, 653.0, 0.0),
    "V2": QuarterCar(128.7, 3.86, 1.0, 0.162, 643.0, 0.0),
    "V3": QuarterCar(2.7e5, 6000.0, 3400.0, 350.0, 9.5e5, 300.0),
    "V4": QuarterCar(5700.0, 290.0, 466.5, 49.8, 1.35e5, 1400.0),
}

RIGID = QuarterCar(1e9, 1e6, 1.0, 0.15, 1e9, 1e6)


@dataclass(frozen=True)
class StateSpaceModel:
    A: np.ndarray
    B: np.ndarray       # absolute coords; columns: base displacement, base velocity
    B_acc: np.ndarray   # relative coords; column: base acceleration
    C: np.ndarray       # sprung-mass absolute acceleration (either realization)
    D: np.ndarray
    D_acc: np.ndarray

    @property
    def eigenvalues(self):
        return np.linalg.eigvals(self.A)

    def damped_frequencies(self):
        """Distinct damped natural frequencies [Hz], ascending."""
        ev = self.eigenvalues
        return np.sort(np.abs(ev[ev.imag > 0].imag)) / (2 * np.pi)


def build_state_space(qc):
    ks, cs = qc.suspension_stiffness, qc.suspension_damping
    ms, mu = qc.sprung_mass, qc.unsprung_mass
    kt, ct = qc.tire_stiffness, qc.tire_damping
    A = np.array([
        [0.0, 1.0, 0.0, 0.0],
        [-ks / ms, -cs / ms, ks / ms, cs / ms],
        [0.0, 0.0, 0.0, 1.0],
        [ks / mu, cs / mu, -(ks + kt) / mu, -(cs + ct) / mu],
    ])
    B = np.array([[0.0, 0.0], [0.0, 0.0], [0.0, 0.0], [kt / mu, ct / mu]])
    B_acc = np.array([[0.0], [-1.0], [0.0], [-1.0]])
    C = A[1:2, :].copy()
    return StateSpaceModel(A, B, B_acc, C, np.zeros((1, 2)), np.zeros((1, 1)))


def discretize(A, B, dt, hold="foh"):
    """Exact hold-equivalent discretization through one augmented matrix exponential.

    Returns ``(Phi, G0, G1)`` with ``x[k+1] = Phi x[k] + G0 u[k] + G1 (u[k+1] - u[k])``.
    ``G1`` is zero for a zero-order hold.
    """
    n, m = B.shape
    if hold == "zoh":
        M = np.zeros((n + m, n + m))
        M[:n, :n] = A
        M[:n, n:] = B
        E = expm(M * dt)
        return E[:n, :n], E[:n, n:], np.zeros((n, m))
    if hold != "foh":
        raise ValueError(f"hold must be 'zoh' or 'foh', got {hold!r}")
    M = np.zeros((n + 2 * m, n + 2 * m))
    M[:n, :n] = A * dt
    M[:n, n:n + m] = B * dt
    M[n:n + m, n + m:] = np.eye(m)
    E = expm(M)
    return E[:n, :n], E[:n, n:n + m], E[:n, n + m:]


def _simulate(Phi, G0, G1, C, D, u, x0):
    x = x0.copy()
    y = np.empty(u.shape[0])
    for k in range(u.shape[0]):
        y[k] = C @ x + D @ u[k]
        if k + 1 < u.shape[0]:
            x = Phi @ x + G0 @ u[k] + G1 @ (u[k + 1] - u[k])
    return y


def _integrate(sig, dt):
    out = np.concatenate([[0.0], np.cumsum(0.5 * (sig[1:] + sig[:-1]) * dt)])
    t = np.arange(sig.size)
    return out - np.polyval(np.polyfit(t, out, 1), t)


def filter_scan(ssm, base_accel, fs, f_max=None, input_mode="acceleration", hold="foh"):
    """Sprung-mass absolute acceleration for a uniformly sampled base acceleration.

    ``input_mode="acceleration"`` drives the base-relative realization directly.
    ``input_mode="displacement"`` integrates twice (trapezoid, linear detrend after
    each pass) and drives the absolute realization with displacement and velocity.
    """
    u = np.asarray(base_accel, dtype=float)
    if u.ndim != 1:
        raise ValueError("base_accel must be 1-D")
    if f_max is not None:
        if fs < 4 * f_max:
            raise ValueError(f"fs={fs} Hz is below 4x the highest frequency of interest ({f_max} Hz)")
        if fs < 20 * f_max:
            log.warning("fs=%.1f Hz is below 20x f_max=%.1f Hz; discretization error may be visible", fs, f_max)
    if u.size == 0:
        return u.copy()
    dt = 1.0 / fs
    if input_mode == "acceleration":
        Phi, G0, G1 = discretize(ssm.A, ssm.B_acc, dt, hold)
        return _simulate(Phi, G0, G1, ssm.C[0], ssm.D_acc[0], u[:, None], np.zeros(4))
    if input_mode == "displacement":
        vel = _integrate(u, dt)
        disp = _integrate(vel, dt)
        uu = np.column_stack([disp, vel])
        Phi, G0, G1 = discretize(ssm.A, ssm.B, dt, hold)
        x0 = np.array([disp[0], vel[0], disp[0], vel[0]])
        return _simulate(Phi, G0, G1, ssm.C[0], ssm.D[0], uu, x0)
    raise ValueError(f"input_mode must be 'acceleration' or 'displacement', got {input_mode!r}")


def transfer_magnitude(ssm, f):
    """``|H(f)|`` from base acceleration to sprung-mass acceleration."""
    f = np.asarray(f, dtype=float)
    if np.any(f < 0):
        raise ValueError("frequency must be nonnegative")
    out = np.empty(f.shape)
    eye = np.eye(ssm.A.shape[0])
    for idx, fi in np.ndenumerate(f):
        s = 2j * np.pi * fi
        h = ssm.C @ np.linalg.solve(s * eye - ssm.A, ssm.B_acc) + ssm.D_acc
        out[idx] = abs(h[0, 0])
    return out if out.ndim else float(out)


def assign_presets(n_scans, pool, seed):
    """Draw one preset name per scan uniformly from ``pool``; reproducible from ``seed``."""
    pool = list(pool)
    if not pool:
        raise ValueError("vehicle preset pool is empty")
    rng = np.random.default_rng(seed)
    return [pool[i] for i in rng.integers(0, len(pool), n_scans)]
