"""Analytic ground-truth model of a simply supported deck.

Modal frequencies are injected (not derived from plate mechanics); shapes are
sinusoidal in the span direction and, for torsional modes, linear across the
deck width. Responses to impulse trains are evaluated in closed form.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

DEFAULT_FREQUENCIES = (5.51, 9.93, 12.34, 20.26, 24.99)
DEFAULT_KINDS = ("V1", "V2", "T1", "V3", "T2")

_KIND_RE = re.compile(r"^([VT])(\d+)$")


class DomainError(ValueError):
    """A point lies outside the deck."""


@dataclass(frozen=True)
class BeamSpec:
    span_length: float = 3.06
    deck_width: float = 0.635
    lane_offsets: tuple = (0.25, 0.0)

    def __post_init__(self):
        if self.span_length <= 0:
            raise ValueError("span_length must be positive")
        if self.deck_width <= 0:
            raise ValueError("deck_width must be positive")
        object.__setattr__(self, "lane_offsets", tuple(float(y) for y in self.lane_offsets))
        for y in self.lane_offsets:
            if abs(y) > self.deck_width / 2:
                raise ValueError(f"lane offset {y} outside deck half-width {self.deck_width / 2}")


def parse_kind(kind):
    """Split a shape label such as ``"T2"`` into ``("T", 2)``."""
    m = _KIND_RE.match(str(kind).strip().upper())
    if not m:
        raise ValueError(f"bad mode shape kind {kind!r}; expected V<k> or T<k>")
    order = int(m.group(2))
    if order < 1:
        raise ValueError(f"mode order must be >= 1, got {kind!r}")
    return m.group(1), order


@dataclass(frozen=True)
class BeamModalModel:
    frequencies: tuple = DEFAULT_FREQUENCIES
    kinds: tuple = DEFAULT_KINDS
    damping: tuple = field(default=None)
    modal_mass: tuple = field(default=None)

    def __post_init__(self):
        n = len(self.frequencies)
        freqs = tuple(float(f) for f in self.frequencies)
        damping = (0.01,) * n if self.damping is None else tuple(float(z) for z in self.damping)
        masses = (1.0,) * n if self.modal_mass is None else tuple(float(m) for m in self.modal_mass)
        kinds = tuple(str(k).upper() for k in self.kinds)
        if n == 0:
            raise ValueError("model needs at least one mode")
        if not (len(kinds) == len(damping) == len(masses) == n):
            raise ValueError("frequencies, kinds, damping and modal_mass must have equal length")
        if any(f <= 0 for f in freqs) or np.any(np.diff(freqs) <= 0):
            raise ValueError("frequencies must be positive and strictly increasing")
        if any(not 0 < z < 1 for z in damping):
            raise ValueError("damping ratios must lie in (0, 1)")
        if any(m <= 0 for m in masses):
            raise ValueError("modal masses must be positive")
        for k in kinds:
            parse_kind(k)
        object.__setattr__(self, "frequencies", freqs)
        object.__setattr__(self, "kinds", kinds)
        object.__setattr__(self, "damping", damping)
        object.__setattr__(self, "modal_mass", masses)

    @property
    def n_modes(self):
        return len(self.frequencies)

    def omega(self, n):
        return 2 * np.pi * self.frequencies[n]

    def omega_d(self, n):
        z = self.damping[n]
        return self.omega(n) * np.sqrt(1 - z * z)


@dataclass(frozen=True)
class ImpulseTrain:
    """Impulses as parallel arrays: time [s], x [m], y [m], magnitude [N s]."""

    times: np.ndarray
    x: np.ndarray
    y: np.ndarray
    magnitude: np.ndarray

    def __post_init__(self):
        arrays = [np.asarray(a, dtype=float).ravel() for a in (self.times, self.x, self.y, self.magnitude)]
        if len({a.size for a in arrays}) != 1:
            raise ValueError("impulse arrays must have equal length")
        if np.any(np.diff(arrays[0]) < 0):
            raise ValueError("impulse times must be nondecreasing")
        if np.any(arrays[3] <= 0):
            raise ValueError("impulse magnitudes must be positive")
        for name, a in zip(("times", "x", "y", "magnitude"), arrays):
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    def __len__(self):
        return self.times.size

    @classmethod
    def empty(cls):
        return cls(np.empty(0), np.empty(0), np.empty(0), np.empty(0))

    def concat(self, other):
        times = np.concatenate([self.times, other.times])
        order = np.argsort(times, kind="stable")
        return ImpulseTrain(
            times[order],
            np.concatenate([self.x, other.x])[order],
            np.concatenate([self.y, other.y])[order],
            np.concatenate([self.magnitude, other.magnitude])[order],
        )


def random_impulse_train(spec, rate, magnitude_range, t_end, rng, t_start=0.0):
    """Poisson impulse arrivals on ``[t_start, t_end)`` at uniform deck locations."""
    if rate < 0:
        raise ValueError("rate must be nonnegative")
    p_min, p_max = magnitude_range
    if not 0 < p_min <= p_max:
        raise ValueError("magnitude range must satisfy 0 < p_min <= p_max")
    n = rng.poisson(rate * (t_end - t_start)) if rate > 0 else 0
    times = np.sort(rng.uniform(t_start, t_end, n))
    x = rng.uniform(0.0, spec.span_length, n)
    half = spec.deck_width / 2
    y = rng.uniform(-half, half, n)
    mag = rng.uniform(p_min, p_max, n)
    _check_points(spec, x, y)
    return ImpulseTrain(times, x, y, mag)


def _check_points(spec, x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    tol = 1e-12 * spec.span_length
    if np.any(x < -tol) or np.any(x > spec.span_length + tol):
        raise DomainError(f"x outside [0, {spec.span_length}]")
    if np.any(np.abs(y) > spec.deck_width / 2 + tol):
        raise DomainError(f"|y| exceeds deck half-width {spec.deck_width / 2}")


def eval_mode_shape(model, spec, n, x, y):
    """Shape value of mode ``n`` at deck points ``(x, y)``; broadcasts."""
    _check_points(spec, x, y)
    kind, k = parse_kind(model.kinds[n])
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    phi = np.sin(k * np.pi * x / spec.span_length)
    if kind == "T":
        phi = phi * (2 * y / spec.deck_width)
    else:
        phi = phi * np.ones_like(y)
    return phi


def reference_shape(model, spec, n, positions, y):
    """Absolute shape of mode ``n`` along a lane, max-normalized when nonzero."""
    phi = np.abs(eval_mode_shape(model, spec, n, positions, np.full(np.shape(positions), y)))
    peak = phi.max()
    return phi / peak if peak > 0 else phi


def _modal_terms(model, train, spec, t, n):
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(t < 0):
        raise ValueError("t must be nonnegative")
    if len(train) == 0:
        return t, None, None
    amp = eval_mode_shape(model, spec, n, train.x, train.y) * train.magnitude
    amp = amp / (model.modal_mass[n] * model.omega_d(n))
    tau = t[:, None] - train.times[None, :]
    active = tau >= 0
    tau = np.where(active, tau, 0.0)
    return t, tau, np.where(active, amp[None, :], 0.0)


def modal_displacement_response(model, train, t, n, spec):
    """Modal coordinate ``q_n(t)`` by Duhamel superposition of impulse responses."""
    t, tau, amp = _modal_terms(model, train, spec, t, n)
    if tau is None:
        return np.zeros_like(t)
    a = model.damping[n] * model.omega(n)
    wd = model.omega_d(n)
    return np.sum(amp * np.exp(-a * tau) * np.sin(wd * tau), axis=1)


def modal_acceleration_response(model, train, t, n, spec):
    """Second time derivative of ``q_n(t)``, differentiated analytically.

    The velocity jump at each impulse contributes a delta that is omitted;
    the returned value is the smooth part of the acceleration.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(t < 0):
        raise ValueError("t must be nonnegative")
    if len(train) == 0:
        return np.zeros_like(t)
    a = model.damping[n] * model.omega(n)
    wd = model.omega_d(n)
    if a * max(t.max(), train.times.max()) > 600:
        return _modal_acceleration_direct(model, train, t, n, spec)
    # q_n = Im(sum_i c_i exp(lam (t - t_i))) so q_n'' = Im(lam**2 ...); prefix sums over
    # time-sorted impulses give every evaluation time in one pass.
    lam = complex(-a, wd)
    c = eval_mode_shape(model, spec, n, train.x, train.y) * train.magnitude
    c = c / (model.modal_mass[n] * wd)
    prefix = np.concatenate([[0.0], np.cumsum(c * np.exp(-lam * train.times))])
    k = np.searchsorted(train.times, t, side="right")
    return np.imag(lam * lam * np.exp(lam * t) * prefix[k])


def _modal_acceleration_direct(model, train, t, n, spec):
    t, tau, amp = _modal_terms(model, train, spec, t, n)
    a = model.damping[n] * model.omega(n)
    wd = model.omega_d(n)
    env = np.exp(-a * tau)
    return np.sum(amp * env * ((a * a - wd * wd) * np.sin(wd * tau) - 2 * a * wd * np.cos(wd * tau)), axis=1)


def acceleration_at(model, spec, train, x, y, t, modes=None):
    """Deck acceleration at ``(x, y)`` and times ``t``.

    ``x`` may be an array matching ``t`` (a moving observer) or a scalar.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    x = np.broadcast_to(np.asarray(x, dtype=float), t.shape)
    y = np.broadcast_to(np.asarray(y, dtype=float), t.shape)
    _check_points(spec, x, y)
    out = np.zeros_like(t)
    for n in range(model.n_modes) if modes is None else modes:
        out += eval_mode_shape(model, spec, n, x, y) * modal_acceleration_response(model, train, t, n, spec)
    return out
