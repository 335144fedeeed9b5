"""Mobile-sensor scan synthesis: trajectories, bumps, noise, sampling jitter."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .beam import acceleration_at

SPEED_PRESETS = {"slow": 0.0950, "medium": 0.1138, "fast": 0.1453}
MIN_SAMPLES = 32


@dataclass(frozen=True)
class Trajectory:
    lane_offset: float
    speed: float
    span_length: float
    sampling_rate: float = 100.0
    start_time: float = 0.0
    direction: str = "forward"

    def __post_init__(self):
        if self.speed <= 0:
            raise ValueError(f"speed must be positive, got {self.speed}")
        if self.sampling_rate <= 0:
            raise ValueError("sampling_rate must be positive")
        if self.span_length <= 0:
            raise ValueError("span_length must be positive")
        if self.direction not in ("forward", "reverse"):
            raise ValueError(f"direction must be 'forward' or 'reverse', got {self.direction!r}")

    @property
    def duration(self):
        return self.span_length / self.speed

    def position(self, t):
        """Position along the span at absolute time ``t``."""
        s = self.speed * (np.asarray(t, dtype=float) - self.start_time)
        return self.span_length - s if self.direction == "reverse" else s


def make_trajectory(speed, span_length, lane_offset=0.0, sampling_rate=100.0,
                    direction="forward", start_time=0.0):
    """Build a constant-speed trajectory; ``speed`` is m/s or a preset name."""
    if isinstance(speed, str):
        try:
            speed = SPEED_PRESETS[speed]
        except KeyError:
            raise ValueError(f"unknown speed preset {speed!r}; choose from {sorted(SPEED_PRESETS)}") from None
    return Trajectory(float(lane_offset), float(speed), float(span_length), float(sampling_rate),
                      float(start_time), direction)


@dataclass(frozen=True)
class RoadProfile:
    """Fixed-position bumps whose injected acceleration scales as ``v**exponent``."""

    positions: tuple = ()
    severity: float = 0.0
    half_width: float = 0.005
    exponent: float = 2.0

    def __post_init__(self):
        object.__setattr__(self, "positions", tuple(float(p) for p in self.positions))
        sev = np.broadcast_to(np.asarray(self.severity, dtype=float), (len(self.positions),))
        if np.any(sev < 0):
            raise ValueError("bump severities must be nonnegative")
        if self.half_width <= 0:
            raise ValueError("bump half_width must be positive")

    @property
    def severities(self):
        return np.broadcast_to(np.asarray(self.severity, dtype=float), (len(self.positions),))

    def acceleration(self, x, speed):
        """Raised-cosine pulses centred on each bump, scaled by ``speed**exponent``."""
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for xb, s in zip(self.positions, self.severities):
            u = (x - xb) / self.half_width
            out += np.where(np.abs(u) <= 1, 0.5 * (1 + np.cos(np.pi * u)), 0.0) * s
        return out * speed ** self.exponent


@dataclass(frozen=True)
class ScanRecord:
    scan_id: str
    vehicle_id: str
    trajectory: Trajectory
    t: np.ndarray
    a: np.ndarray
    seed: int | None = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        a = np.asarray(self.a, dtype=float)
        if t.shape != a.shape or t.ndim != 1:
            raise ValueError("t and a must be 1-D arrays of equal length")
        if np.any(np.diff(t) <= 0):
            raise ValueError("timestamps must be strictly increasing")
        t.setflags(write=False)
        a.setflags(write=False)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "a", a)

    def __eq__(self, other):
        if not isinstance(other, ScanRecord):
            return NotImplemented
        return (self.scan_id == other.scan_id and self.vehicle_id == other.vehicle_id
                and self.trajectory == other.trajectory and self.seed == other.seed
                and np.array_equal(self.t, other.t) and np.array_equal(self.a, other.a))

    @property
    def positions(self):
        return np.clip(self.trajectory.position(self.t), 0.0, self.trajectory.span_length)

    @property
    def sampling_rate(self):
        return self.trajectory.sampling_rate

    def is_uniform(self, rtol=1e-6):
        dt = np.diff(self.t)
        return bool(np.all(np.abs(dt - 1 / self.sampling_rate) <= rtol / self.sampling_rate))


def nominal_times(traj):
    n = int(np.floor(traj.duration * traj.sampling_rate + 1e-9)) + 1
    return traj.start_time + np.arange(n) / traj.sampling_rate


def synthesize_scan(model, spec, train, traj, profile=None, noise_std=0.0, seed=None,
                    jitter=0.0, scan_id="scan", vehicle_id="vehicle"):
    """Sample deck acceleration along ``traj`` with bumps, noise and timestamp jitter.

    ``jitter`` is the maximum timestamp perturbation as a fraction of the nominal
    sampling interval; the first and last samples stay on the nominal grid.
    """
    if noise_std < 0:
        raise ValueError("noise_std must be nonnegative")
    if not 0 <= jitter < 0.5:
        raise ValueError("jitter must lie in [0, 0.5)")
    if abs(traj.lane_offset) > spec.deck_width / 2 or traj.span_length > spec.span_length + 1e-12:
        raise ValueError("trajectory leaves the deck")
    rng = np.random.default_rng(seed)
    t = nominal_times(traj)
    if t.size < MIN_SAMPLES:
        raise ValueError(f"scan would have {t.size} samples; need at least {MIN_SAMPLES}")
    if jitter > 0:
        dt = rng.uniform(-jitter, jitter, t.size) / traj.sampling_rate
        dt[0] = dt[-1] = 0.0
        t = t + dt
    x = np.clip(traj.position(t), 0.0, traj.span_length)
    a = acceleration_at(model, spec, train, x, traj.lane_offset, t)
    if profile is not None and profile.positions:
        a = a + profile.acceleration(x, traj.speed)
    if noise_std > 0:
        a = a + rng.normal(0.0, noise_std, t.size)
    return ScanRecord(scan_id, vehicle_id, traj, t, a, seed)


def resample_uniform(scan, target_fs=100.0):
    """Linear interpolation onto a uniform grid starting at the first timestamp."""
    if scan.t.size < 2:
        raise ValueError("need at least 2 samples to resample")
    t0, t1 = scan.t[0], scan.t[-1]
    n = int(np.floor((t1 - t0) * target_fs + 1e-6)) + 1
    tu = t0 + np.arange(n) / target_fs
    tu[-1] = min(tu[-1], t1)
    au = np.interp(tu, scan.t, scan.a)
    traj = scan.trajectory
    new_traj = Trajectory(traj.lane_offset, traj.speed, traj.span_length, float(target_fs),
                          traj.start_time, traj.direction)
    return ScanRecord(scan.scan_id, scan.vehicle_id, new_traj, tu, au, scan.seed, dict(scan.meta))
