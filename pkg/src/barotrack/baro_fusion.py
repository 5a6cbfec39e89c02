"""Barometric height and its Kalman fusion with vertical acceleration.

One filter runs per device. The state is ``[height, vertical velocity]``;
the world-frame vertical free acceleration drives the prediction as a
control input and the pressure-derived height is the measurement.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np

from .errors import NonMonotonicTime

GRAVITY = 9.80665
DEFAULT_SCALE_M_PER_HPA = 8.43
STANDARD_PRESSURE_HPA = 1013.25


@dataclass(frozen=True)
class BaroModel:
    """Linear local pressure-to-height model.

    ``scale`` is metres per hPa of pressure *drop* (the negated local lapse),
    ``bias`` is a height offset in metres.
    """

    scale: float = DEFAULT_SCALE_M_PER_HPA
    bias: float = 0.0
    reference_pressure: float = STANDARD_PRESSURE_HPA

    def __post_init__(self):
        if not np.isfinite(self.scale) or self.scale == 0.0:
            raise ValueError("scale must be finite and nonzero")
        if not self.reference_pressure > 0.0:
            raise ValueError("reference_pressure must be positive")


def pressure_to_height(p, model: BaroModel):
    p = np.asarray(p, dtype=float)
    if np.any(p <= 0.0):
        raise ValueError("pressure must be positive")
    h = model.scale * (model.reference_pressure - p) + model.bias
    return float(h) if h.ndim == 0 else h


def height_to_pressure(h, model: BaroModel):
    """Inverse of :func:`pressure_to_height`."""
    p = model.reference_pressure - (np.asarray(h, dtype=float) - model.bias) / model.scale
    return float(p) if p.ndim == 0 else p


def barometric_formula_height(p, p0: float = STANDARD_PRESSURE_HPA) -> np.ndarray:
    """International standard atmosphere altitude above the level where ``p == p0``."""
    return 44330.0 * (1.0 - (np.asarray(p, dtype=float) / p0) ** (1.0 / 5.255))


@dataclass(frozen=True)
class FilterParams:
    q_accel: float = 0.5
    r_meas: float = 0.0025
    p0_height: float = 1.0
    p0_velocity: float = 1.0
    nominal_dt: float = 1.0 / 30.0
    subtract_gravity: bool = False

    def __post_init__(self):
        if not (self.q_accel > 0 and self.r_meas > 0):
            raise ValueError("q_accel and r_meas must be positive")
        if not self.nominal_dt > 0:
            raise ValueError("nominal_dt must be positive")


@dataclass(frozen=True)
class KfState:
    x: np.ndarray
    P: np.ndarray
    q_accel: float = 0.5
    r_meas: float = 0.0025

    @classmethod
    def initial(cls, height: float, params: FilterParams = FilterParams(), velocity: float = 0.0,
                p_height: float | None = None) -> "KfState":
        ph = params.p0_height if p_height is None else p_height
        return cls(
            x=np.array([height, velocity], dtype=float),
            P=np.diag([ph, params.p0_velocity]).astype(float),
            q_accel=params.q_accel,
            r_meas=params.r_meas,
        )

    @property
    def height(self) -> float:
        return float(self.x[0])


@dataclass(frozen=True)
class FilteredHeight:
    h: float
    source_time: float


def kf_predict(s: KfState, a_vertical: float, dt: float) -> KfState:
    if not dt > 0:
        raise ValueError("dt must be positive")
    f = np.array([[1.0, dt], [0.0, 1.0]])
    g = np.array([0.5 * dt * dt, dt])
    x = f @ s.x + g * a_vertical
    p = f @ s.P @ f.T + s.q_accel * np.outer(g, g)
    p = 0.5 * (p + p.T)
    return replace(s, x=x, P=p)


def kf_update(s: KfState, h_meas: float, t: float = 0.0) -> tuple[KfState, FilteredHeight]:
    """Measurement update with ``H = [1, 0]`` in Joseph form (keeps P PSD)."""
    hvec = np.array([1.0, 0.0])
    innov_var = s.P[0, 0] + s.r_meas
    k = s.P[:, 0] / innov_var
    x = s.x + k * (h_meas - s.x[0])
    ikh = np.eye(2) - np.outer(k, hvec)
    p = ikh @ s.P @ ikh.T + s.r_meas * np.outer(k, k)
    p = 0.5 * (p + p.T)
    new = replace(s, x=x, P=p)
    return new, FilteredHeight(h=float(x[0]), source_time=t)


def vertical_free_acceleration(a_world_y, params: FilterParams):
    """Vertical free acceleration; raw accelerometer input has gravity removed when configured."""
    return a_world_y - GRAVITY if params.subtract_gravity else a_world_y


class HeightFilter:
    """Streaming wrapper around ``KfState`` for one device."""

    def __init__(self, model: BaroModel, params: FilterParams = FilterParams(),
                 init_height: float | None = None):
        self.model = model
        self.params = params
        self.state: KfState | None = None
        self.last_t: float | None = None
        self._init_height = init_height

    def step(self, t: float, pressure: float, a_vertical: float) -> FilteredHeight:
        h_meas = pressure_to_height(pressure, self.model)
        a = vertical_free_acceleration(a_vertical, self.params)
        if self.state is None:
            if self._init_height is None:
                self.state = KfState.initial(h_meas, self.params, p_height=self.params.r_meas)
            else:
                self.state = KfState.initial(self._init_height, self.params)
            self.last_t = t
            self.state, out = kf_update(self.state, h_meas, t)
            return out
        if t < self.last_t:
            raise NonMonotonicTime(f"timestamp {t} precedes {self.last_t}")
        dt = t - self.last_t
        if dt > 0:
            nominal = self.params.nominal_dt
            n = max(1, int(round(dt / nominal)))
            for _ in range(n):
                self.state = kf_predict(self.state, a, dt / n)
        self.last_t = t
        self.state, out = kf_update(self.state, h_meas, t)
        return out


def fuse_stream(
    frames: Iterable[Sequence[float]],
    model: BaroModel,
    params: FilterParams = FilterParams(),
    init_height: float | None = None,
) -> list[FilteredHeight]:
    """Filter a stream of ``(t, pressure_hpa, a_vertical)`` tuples.

    A gap longer than the nominal step is bridged with several predict steps.
    """
    filt = HeightFilter(model, params, init_height=init_height)
    return [filt.step(float(t), float(p), float(a)) for t, p, a in frames]
