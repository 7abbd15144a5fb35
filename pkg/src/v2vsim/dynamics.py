"""Longitudinal vehicle dynamics and fuel evaluation.

Force balance along the road::

    F_t - F_hydr = (m_v + m_r) dv/dt + F_r + F_a + F_g
    F_a = c1 v^2,  F_r = c2 cos(alpha),  F_g = m_v g sin(alpha)

The *forward* direction integrates speed from given traction and brake
forces. The *backward* direction recovers the forces from a speed trace, maps
traction to an engine operating point and reads a fuel map.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.integrate import cumulative_trapezoid, trapezoid
from scipy.interpolate import RegularGridInterpolator

from .config import get_float, read_kv
from .errors import ConfigError, InputError


@dataclass(frozen=True)
class VehicleParams:
    """Physical constants of one vehicle.

    ``gear_table`` holds ``(min_speed, ratio)`` pairs: a gear is engaged from
    its threshold speed up to the next threshold. Speeds below the first
    threshold use the first gear.
    """

    m_v: float
    m_r: float
    c1: float
    c2: float
    R_w: float
    eta: float
    gear_table: tuple[tuple[float, float], ...] = ((0.0, 1.0),)
    g: float = 9.81

    def __post_init__(self):
        object.__setattr__(self, "gear_table", tuple((float(t), float(r)) for t, r in self.gear_table))
        if not self.m_v > 0:
            raise ConfigError(f"m_v must be positive, got {self.m_v}")
        if not self.m_r >= 0 or not self.c1 >= 0 or not self.c2 >= 0:
            raise ConfigError("m_r, c1 and c2 must be non-negative")
        if not self.R_w > 0:
            raise ConfigError(f"R_w must be positive, got {self.R_w}")
        if not 0 < self.eta <= 1:
            raise ConfigError(f"eta must lie in (0, 1], got {self.eta}")
        if not self.gear_table:
            raise ConfigError("gear_table must not be empty")
        thresholds = [t for t, _ in self.gear_table]
        if any(b <= a for a, b in zip(thresholds, thresholds[1:])):
            raise ConfigError(f"gear thresholds must increase strictly: {thresholds}")
        if any(not r > 0 for _, r in self.gear_table):
            raise ConfigError("gear ratios must be positive")

    @property
    def mass(self) -> float:
        return self.m_v + self.m_r

    def gear_ratio(self, v):
        thresholds = np.array([t for t, _ in self.gear_table])
        ratios = np.array([r for _, r in self.gear_table])
        idx = np.clip(np.searchsorted(thresholds, v, side="right") - 1, 0, len(ratios) - 1)
        out = ratios[idx]
        return float(out) if np.ndim(out) == 0 else out

    @classmethod
    def from_mapping(cls, values: dict) -> VehicleParams:
        gears = ((0.0, 1.0),)
        raw = values.get("gear_table")
        if raw:
            try:
                gears = tuple(
                    (float(t), float(r))
                    for t, r in (pair.split(":") for pair in raw.replace(",", " ").split())
                )
            except ValueError:
                raise ConfigError(
                    f"gear_table must look like '0:3.5 8:2.1 15:1.4', got {raw!r}") from None
        return cls(
            m_v=get_float(values, "m_v"),
            m_r=get_float(values, "m_r", 0.0),
            c1=get_float(values, "c1"),
            c2=get_float(values, "c2"),
            R_w=get_float(values, "r_w"),
            eta=get_float(values, "eta", 1.0),
            gear_table=gears,
            g=get_float(values, "g", 9.81),
        )

    @classmethod
    def from_file(cls, path) -> VehicleParams:
        return cls.from_mapping(read_kv(path))


@dataclass(frozen=True)
class RoadProfile:
    """Road angle (radians) against travelled distance, linear in between.

    Outside the sampled range the nearest end value holds.
    """

    distances: tuple[float, ...] = (0.0,)
    alphas: tuple[float, ...] = (0.0,)

    def __post_init__(self):
        object.__setattr__(self, "distances", tuple(float(d) for d in self.distances))
        object.__setattr__(self, "alphas", tuple(float(a) for a in self.alphas))
        if not self.distances or len(self.distances) != len(self.alphas):
            raise ConfigError("road profile needs matching, non-empty distance and angle samples")
        if any(b <= a for a, b in zip(self.distances, self.distances[1:])):
            raise ConfigError("road profile distances must increase strictly")
        if any(not abs(a) < math.pi / 2 for a in self.alphas):
            raise ConfigError("road angles must satisfy |alpha| < pi/2")

    @classmethod
    def flat(cls) -> RoadProfile:
        return cls()

    def alpha_at(self, s):
        return np.interp(s, self.distances, self.alphas)

    @classmethod
    def from_csv(cls, stream) -> RoadProfile:
        reader = csv.DictReader(stream)
        if reader.fieldnames is None or not {"distance", "alpha"} <= set(reader.fieldnames):
            raise ConfigError("road profile CSV needs header 'distance,alpha'")
        rows = [(float(r["distance"]), float(r["alpha"])) for r in reader]
        if not rows:
            raise ConfigError("road profile CSV has no rows")
        return cls(tuple(d for d, _ in rows), tuple(a for _, a in rows))


class ForceBreakdown(NamedTuple):
    F_t: float
    F_hydr: float
    F_a: float
    F_r: float
    F_g: float


class EngineOperatingPoint(NamedTuple):
    T_ice: float
    omega_ice: float


def resistive_forces(params: VehicleParams, v, alpha):
    """(F_a, F_r, F_g) at speed ``v`` on angle ``alpha``; no rolling force at standstill."""
    v = np.asarray(v, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    f_a = params.c1 * v * v
    f_r = np.where(v > 0, params.c2 * np.cos(alpha), 0.0)
    f_g = params.m_v * params.g * np.sin(alpha)
    return f_a, f_r, f_g


@dataclass(frozen=True, eq=False)
class SpeedTrace:
    time: np.ndarray
    speed: np.ndarray
    position: np.ndarray


def forward_simulate(params: VehicleParams, profile: RoadProfile, inputs, v0: float,
                     dt: float) -> SpeedTrace:
    """Explicit-Euler integration driven by ``inputs[k] = (F_t, F_hydr)``.

    Input ``k`` acts over ``[k dt, (k+1) dt]``, so N inputs give N + 1 samples.
    Speed never goes negative.
    """
    if not dt > 0:
        raise ConfigError(f"dt must be positive, got {dt}")
    if not (math.isfinite(v0) and v0 >= 0):
        raise InputError(f"v0 must be finite and non-negative, got {v0}")
    forces = np.asarray(inputs, dtype=float).reshape(-1, 2)
    if not np.all(np.isfinite(forces)):
        bad = int(np.argmax(~np.isfinite(forces).all(axis=1)))
        raise InputError(f"non-finite input force at step {bad}: {forces[bad].tolist()}")

    n = len(forces)
    speed = np.empty(n + 1)
    pos = np.empty(n + 1)
    speed[0], pos[0] = v0, 0.0
    mass = params.mass
    flat = not any(profile.alphas)
    weight = params.m_v * params.g
    f_t, f_hydr = forces[:, 0].tolist(), forces[:, 1].tolist()
    v, x = float(v0), 0.0
    for k in range(n):
        alpha = 0.0 if flat else float(profile.alpha_at(x))
        f_r = params.c2 * math.cos(alpha) if v > 0 else 0.0
        f_a = params.c1 * v * v
        f_g = weight * math.sin(alpha)
        accel = (f_t[k] - f_hydr[k] - f_r - f_a - f_g) / mass
        v, x = max(v + dt * accel, 0.0), x + dt * v
        speed[k + 1] = v
        pos[k + 1] = x
    return SpeedTrace(dt * np.arange(n + 1), speed, pos)


@dataclass(frozen=True, eq=False)
class ForceTrace:
    """Per-sample force decomposition from the backward direction."""

    time: np.ndarray
    speed: np.ndarray
    accel: np.ndarray
    position: np.ndarray
    F_t: np.ndarray
    F_hydr: np.ndarray
    F_a: np.ndarray
    F_r: np.ndarray
    F_g: np.ndarray

    def __len__(self):
        return len(self.time)

    def __getitem__(self, k) -> ForceBreakdown:
        return ForceBreakdown(float(self.F_t[k]), float(self.F_hydr[k]), float(self.F_a[k]),
                              float(self.F_r[k]), float(self.F_g[k]))


def _check_speeds(speeds, dt):
    if not dt > 0:
        raise ConfigError(f"dt must be positive, got {dt}")
    v = np.asarray(speeds, dtype=float)
    if v.ndim != 1 or len(v) < 2:
        raise InputError("speed trace needs at least two samples")
    if not np.all(np.isfinite(v)):
        raise InputError("speed trace contains non-finite values")
    if np.any(v < 0):
        k = int(np.argmax(v < 0))
        raise InputError(f"negative speed {v[k]} at sample {k}")
    return v


def backward_forces(params: VehicleParams, profile: RoadProfile, speeds, dt: float) -> ForceTrace:
    """Forces that reproduce ``speeds`` (sampled every ``dt``).

    Acceleration comes from central differences, one-sided at the ends.
    Positive demand goes to traction and negative demand to the hydraulic
    brake, never both at once.
    """
    v = _check_speeds(speeds, dt)
    accel = np.gradient(v, dt)
    position = cumulative_trapezoid(v, dx=dt, initial=0.0)
    alpha = profile.alpha_at(position)
    f_a, f_r, f_g = resistive_forces(params, v, alpha)
    demand = params.mass * accel + f_r + f_a + f_g
    f_t = np.where(demand > 0, demand, 0.0)
    f_hydr = np.where(demand < 0, -demand, 0.0)
    return ForceTrace(dt * np.arange(len(v)), v, accel, position, f_t, f_hydr, f_a, f_r, f_g)


def engine_point(F_t, v, params: VehicleParams):
    """Engine torque ``F_t R_w / (eta gamma)`` and speed ``v gamma / R_w``.

    Works on scalars (returns an :class:`EngineOperatingPoint` of floats) and
    on arrays alike.
    """
    gamma = params.gear_ratio(v)
    torque = np.asarray(F_t, dtype=float) * params.R_w / (params.eta * gamma)
    omega = np.asarray(v, dtype=float) * gamma / params.R_w
    if np.ndim(torque) == 0 and np.ndim(omega) == 0:
        return EngineOperatingPoint(float(torque), float(omega))
    return EngineOperatingPoint(torque, omega)


@dataclass(frozen=True, eq=False)
class FuelMap:
    """Fuel rate in g/s on a (torque N·m, engine speed rad/s) grid.

    ``rate[i, j]`` belongs to ``torque_axis[i]`` and ``omega_axis[j]``.
    """

    torque_axis: np.ndarray
    omega_axis: np.ndarray
    rate: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.torque_axis, dtype=float)
        w = np.asarray(self.omega_axis, dtype=float)
        r = np.asarray(self.rate, dtype=float)
        for name, axis in (("torque", t), ("omega", w)):
            if axis.ndim != 1 or len(axis) < 2:
                raise ConfigError(f"fuel map {name} axis needs at least two points")
            if np.any(np.diff(axis) <= 0):
                raise ConfigError(f"fuel map {name} axis must increase strictly")
        if r.shape != (len(t), len(w)):
            raise ConfigError(f"fuel map body shape {r.shape} does not match axes {(len(t), len(w))}")
        if not np.all(np.isfinite(r)) or np.any(r < 0):
            raise ConfigError("fuel map rates must be finite and non-negative")
        object.__setattr__(self, "torque_axis", t)
        object.__setattr__(self, "omega_axis", w)
        object.__setattr__(self, "rate", r)
        object.__setattr__(self, "_interp", RegularGridInterpolator((t, w), r, method="linear"))

    def lookup(self, torque, omega):
        """Bilinear rate and a clamp flag, elementwise.

        Points off the grid are moved to the nearest grid bound first.
        """
        torque, omega = np.broadcast_arrays(np.asarray(torque, dtype=float),
                                            np.asarray(omega, dtype=float))
        tq = np.clip(torque, self.torque_axis[0], self.torque_axis[-1])
        om = np.clip(omega, self.omega_axis[0], self.omega_axis[-1])
        clamped = (tq != torque) | (om != omega)
        rate = self._interp(np.stack([tq, om], axis=-1).reshape(-1, 2)).reshape(tq.shape)
        return rate, clamped

    @classmethod
    def willans(cls, torque_axis, omega_axis, idle_rate: float, slope: float) -> FuelMap:
        """Map whose rate is ``idle_rate + slope * torque * omega`` (g/s, slope in g/J)."""
        t = np.asarray(torque_axis, dtype=float)
        w = np.asarray(omega_axis, dtype=float)
        return cls(t, w, idle_rate + slope * np.outer(t, w))

    @classmethod
    def from_csv(cls, stream) -> FuelMap:
        rows = [r for r in csv.reader(stream) if r and any(c.strip() for c in r)]
        if len(rows) < 3:
            raise ConfigError("fuel map CSV needs an omega header row and at least two torque rows")
        try:
            omega = [float(c) for c in rows[0][1:]]
            torque = [float(r[0]) for r in rows[1:]]
            body = [[float(c) for c in r[1:]] for r in rows[1:]]
        except ValueError as exc:
            raise ConfigError(f"fuel map CSV: {exc}") from None
        if any(len(r) != len(omega) for r in body):
            raise ConfigError("fuel map CSV rows must all have one rate per omega column")
        return cls(np.array(torque), np.array(omega), np.array(body))

    def to_csv(self, sink) -> None:
        writer = csv.writer(sink, lineterminator="\n")
        writer.writerow(["torque\\omega", *(repr(float(w)) for w in self.omega_axis)])
        for t, row in zip(self.torque_axis, self.rate):
            writer.writerow([repr(float(t)), *(repr(float(x)) for x in row)])


def fuel_rate(fmap: FuelMap, pt: EngineOperatingPoint) -> tuple[float, bool]:
    """Instantaneous fuel rate (g/s) at one operating point, plus the clamp flag."""
    rate, clamped = fmap.lookup(pt.T_ice, pt.omega_ice)
    return float(rate), bool(clamped)


@dataclass(frozen=True, eq=False)
class FuelResult:
    total: float
    time: np.ndarray
    rate: np.ndarray
    clamped: np.ndarray
    torque: np.ndarray
    omega: np.ndarray
    forces: ForceTrace

    @property
    def n_clamped(self) -> int:
        return int(np.count_nonzero(self.clamped))


def total_fuel(params: VehicleParams, profile: RoadProfile, fmap: FuelMap, speeds,
               dt: float) -> FuelResult:
    """Backward forces, engine points and map rates per sample; trapezoid total in grams."""
    forces = backward_forces(params, profile, speeds, dt)
    torque, omega = engine_point(forces.F_t, forces.speed, params)
    rate, clamped = fmap.lookup(torque, omega)
    total = float(trapezoid(rate, dx=dt))
    return FuelResult(total, forces.time, rate, clamped, torque, omega, forces)
