"""Adaptive Dormand–Prince 5(4) integration with dense output and event monitoring.

The stepping loop runs in a numba kernel that records every accepted step
(time, state, derivative).  Events and decimation are derived afterwards
from that record, and the same record backs cubic Hermite dense output.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .model import (
    Formulation,
    ModelParams,
    LOG_FAUNA_OFFSET,
    field_by_code,
    make_state,
    region_bounds,
)

log = logging.getLogger(__name__)

REGION_EXIT = "region_exit"
EQUILIBRIUM_CAPTURE = "equilibrium_capture"
STEP_FLOOR = "step_floor_hit"

FAUNA = 1
REGION_RTOL = 1e-9
CAPTURE_STEPS = 50


class IntegrationError(RuntimeError):
    """The integrator could not reach the requested end time."""


@dataclass(frozen=True)
class IntegrationConfig:
    t_end: float
    rel_tol: float = 1e-8
    abs_tol: float = 1e-10
    max_steps: int = 20_000_000
    min_step: float = 1e-12
    record_stride: int = 1
    max_step: float = np.inf
    capture_tol: float = 1e-6
    # integrate ln|F| instead of F; fauna then cannot underflow to zero
    log_fauna: bool = False

    def __post_init__(self):
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ValueError("tolerances must be positive")
        if not self.t_end > 0:
            raise ValueError(f"t_end must be positive, got {self.t_end!r}")
        if self.max_steps < 1 or self.record_stride < 1:
            raise ValueError("max_steps and record_stride must be at least 1")
        if not 0 < self.min_step <= self.max_step:
            raise ValueError("need 0 < min_step <= max_step")


@dataclass(frozen=True)
class Event:
    time: float
    kind: str
    detail: str = ""


@dataclass
class Trajectory:
    """Solution record.

    ``times``/``states`` are the decimated output; ``step_times``,
    ``step_states`` and ``step_derivs`` hold every accepted step and back
    the Hermite interpolant.
    """

    formulation: Formulation
    step_times: np.ndarray
    step_states: np.ndarray
    step_derivs: np.ndarray
    events: list = field(default_factory=list)
    record_stride: int = 1
    # ln|F| at each accepted step when integrated in log-fauna mode
    step_log_fauna: np.ndarray | None = None

    @property
    def times(self) -> np.ndarray:
        return self.step_times[self._record_index()]

    @property
    def states(self) -> np.ndarray:
        return self.step_states[self._record_index()]

    def _record_index(self) -> np.ndarray:
        n = len(self.step_times)
        idx = np.arange(0, n, self.record_stride)
        if idx[-1] != n - 1:
            idx = np.append(idx, n - 1)
        return idx

    @property
    def t_end(self) -> float:
        return float(self.step_times[-1])

    @property
    def final_state(self) -> np.ndarray:
        return self.step_states[-1]

    def events_of(self, kind: str) -> list:
        return [e for e in self.events if e.kind == kind]

    def sample(self, t) -> np.ndarray:
        """Cubic Hermite interpolation of the state at time(s) t."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        ts, ys, fs = self.step_times, self.step_states, self.step_derivs
        if np.any(t < ts[0] - 1e-12 * max(1.0, abs(ts[0]))) or np.any(t > ts[-1] * (1 + 1e-12) + 1e-300):
            raise ValueError("sample times outside the integrated interval")
        i = np.clip(np.searchsorted(ts, t, side="right") - 1, 0, len(ts) - 2)
        h = ts[i + 1] - ts[i]
        s = ((t - ts[i]) / h)[:, None]
        h = h[:, None]
        h00 = (1 + 2 * s) * (1 - s) ** 2
        h10 = s * (1 - s) ** 2
        h01 = s * s * (3 - 2 * s)
        h11 = s * s * (s - 1)
        return h00 * ys[i] + h10 * h * fs[i] + h01 * ys[i + 1] + h11 * h * fs[i + 1]

    def window(self, t_start: float) -> slice:
        """Slice of accepted steps with time >= t_start."""
        return slice(int(np.searchsorted(self.step_times, t_start, side="left")), None)


def distance_to(s, equilibrium) -> float:
    """Euclidean distance with each component scaled by max(1, |equilibrium component|).

    Not symmetric: the scaling comes from the second argument.
    """
    x = np.asarray(s, dtype=float)
    e = np.asarray(equilibrium, dtype=float)
    return float(np.sqrt(np.sum(((x - e) / np.maximum(1.0, np.abs(e))) ** 2, axis=-1)))


def distances_to(states: np.ndarray, equilibrium) -> np.ndarray:
    """Row-wise ``distance_to`` for an (n, d) array."""
    e = np.asarray(equilibrium, dtype=float)
    return np.sqrt(np.sum(((np.asarray(states) - e) / np.maximum(1.0, np.abs(e))) ** 2, axis=1))


# ---------------------------------------------------------------------------
# Dormand–Prince kernel

_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = np.array(
    [
        [0, 0, 0, 0, 0, 0],
        [1 / 5, 0, 0, 0, 0, 0],
        [3 / 40, 9 / 40, 0, 0, 0, 0],
        [44 / 45, -56 / 15, 32 / 9, 0, 0, 0],
        [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729, 0, 0],
        [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656, 0],
        [35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
    ]
)
# fifth-order weights minus embedded fourth-order weights
_E = np.array([71 / 57600, 0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])

OK, MAX_STEPS, NON_FINITE = 0, 1, 2


@njit(cache=True)
def _scale(sign, rtol, atol, magnitude):
    # sign 0 marks a log-coordinate component: absolute error there is relative error in the population
    if sign == 0.0:
        return rtol
    return atol + rtol * magnitude


@njit(cache=True)
def _initial_step(code, p, t0, y0, f0, rtol, atol, t_span, signs, out):
    n = y0.size
    d0 = 0.0
    d1 = 0.0
    for i in range(n):
        sc = _scale(signs[i], rtol, atol, abs(y0[i]))
        d0 = max(d0, abs(y0[i]) / sc)
        d1 = max(d1, abs(f0[i]) / sc)
    if d0 < 1e-5 or d1 < 1e-5:
        h0 = 1e-6
    else:
        h0 = 0.01 * d0 / d1
    h0 = min(h0, t_span)
    y1 = y0 + h0 * f0
    field_by_code(code, p, y1, out)
    d2 = 0.0
    for i in range(n):
        sc = _scale(signs[i], rtol, atol, abs(y0[i]))
        d2 = max(d2, abs(out[i] - f0[i]) / sc)
    d2 /= h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    return min(100 * h0, h1, t_span)


@njit(cache=True)
def dp54(code, p, y0, t0, t_end, rtol, atol, h_min, h_max, max_steps, signs, C, A, E):
    n = y0.size
    cap = 1024
    ts = np.empty(cap)
    ys = np.empty((cap, n))
    fs = np.empty((cap, n))
    floor = np.zeros(cap, dtype=np.bool_)
    K = np.empty((7, n))
    tmp = np.empty(n)
    y = y0.copy()
    f = np.empty(n)
    field_by_code(code, p, y, f)
    ts[0] = t0
    ys[0] = y
    fs[0] = f
    count = 1
    t = t0
    h = _initial_step(code, p, t0, y, f, rtol, atol, t_end - t0, signs, tmp)
    h = min(max(h, h_min), h_max)
    status = OK
    attempts = 0
    ynew = np.empty(n)
    while t < t_end:
        if attempts >= max_steps:
            status = MAX_STEPS
            break
        attempts += 1
        at_floor = False
        if h <= h_min:
            h = h_min
            at_floor = True
        last = False
        if t + h >= t_end or t + 1.01 * h >= t_end:
            h = t_end - t
            last = True
        K[0] = f
        for s in range(1, 7):
            for i in range(n):
                acc = 0.0
                for j in range(s):
                    acc += A[s, j] * K[j, i]
                tmp[i] = y[i] + h * acc
            field_by_code(code, p, tmp, K[s])
        # stage 7 state is the fifth-order solution (FSAL)
        for i in range(n):
            ynew[i] = tmp[i]
        err = 0.0
        finite = True
        for i in range(n):
            e = 0.0
            for s in range(7):
                e += E[s] * K[s, i]
            e *= h
            sc = _scale(signs[i], rtol, atol, max(abs(y[i]), abs(ynew[i])))
            err = max(err, abs(e) / sc)
            if not np.isfinite(ynew[i]):
                finite = False
        if not finite or not np.isfinite(err):
            if at_floor:
                status = NON_FINITE
                break
            h *= 0.25
            continue
        if err > 1.0 and not at_floor:
            h = max(h * max(0.2, 0.9 * err ** -0.2), 0.0)
            continue
        # positivity: reject steps leaving the sign domain by more than atol
        bad = False
        for i in range(n):
            if signs[i] * ynew[i] < -atol:
                bad = True
        if bad and not at_floor:
            h *= 0.5
            continue
        clamped = False
        for i in range(n):
            if signs[i] * ynew[i] < 0.0:
                ynew[i] = 0.0
                clamped = True
        if last:
            t = t_end
        else:
            t = t + h
        for i in range(n):
            y[i] = ynew[i]
        if clamped:
            field_by_code(code, p, y, f)
        else:
            for i in range(n):
                f[i] = K[6, i]
        if count == cap:
            cap *= 2
            ts2 = np.empty(cap)
            ys2 = np.empty((cap, n))
            fs2 = np.empty((cap, n))
            fl2 = np.zeros(cap, dtype=np.bool_)
            ts2[:count] = ts[:count]
            ys2[:count] = ys[:count]
            fs2[:count] = fs[:count]
            fl2[:count] = floor[:count]
            ts, ys, fs, floor = ts2, ys2, fs2, fl2
        ts[count] = t
        ys[count] = y
        fs[count] = f
        floor[count] = at_floor
        count += 1
        if err == 0.0:
            fac = 5.0
        else:
            fac = min(5.0, max(0.2, 0.9 * err ** -0.2))
        h = min(h * fac, h_max)
    return ts[:count], ys[:count], fs[:count], floor[:count], status


# ---------------------------------------------------------------------------
# driver


def _run_lengths(mask: np.ndarray):
    """Start indices and lengths of consecutive True runs."""
    if mask.size == 0:
        return np.array([], int), np.array([], int)
    m = np.concatenate([[False], mask, [False]])
    d = np.diff(m.astype(np.int8))
    starts = np.flatnonzero(d == 1)
    ends = np.flatnonzero(d == -1)
    return starts, ends - starts


def _full_coordinates(formulation: Formulation, states: np.ndarray) -> np.ndarray:
    if formulation is Formulation.COMPET:
        return states * np.array([1.0, -1.0, -1.0])
    return states


def integrate(
    params: ModelParams,
    formulation: Formulation,
    initial,
    config: IntegrationConfig,
    equilibria=None,
) -> Trajectory:
    """Integrate one formulation from ``initial`` over [0, config.t_end].

    ``equilibria`` (reports from ``equilibria_all``) are used for capture
    events; they are computed when omitted.  Region-exit events are
    monitored for the full and competitive formulations.
    """
    formulation = Formulation(formulation)
    y0 = np.asarray(make_state(formulation, initial), dtype=float)
    code, signs = formulation.code, formulation.signs
    use_log = config.log_fauna and y0[FAUNA] != 0.0
    if use_log:
        code += LOG_FAUNA_OFFSET
        signs = signs.copy()
        signs[FAUNA] = 0.0
        y0 = y0.copy()
        y0[FAUNA] = np.log(abs(y0[FAUNA]))
    ts, ys, fs, floor, status = dp54(
        code,
        params.vector,
        y0,
        0.0,
        float(config.t_end),
        config.rel_tol,
        config.abs_tol,
        config.min_step,
        float(config.max_step),
        int(config.max_steps),
        signs,
        _C,
        _A,
        _E,
    )
    if status == MAX_STEPS:
        raise IntegrationError(f"max_steps ({config.max_steps}) exceeded at t = {ts[-1]!r}")
    if status == NON_FINITE:
        raise IntegrationError(f"non-finite state at t = {ts[-1]!r}")
    log_fauna = None
    if use_log:
        log_fauna = ys[:, FAUNA].copy()
        fauna = formulation.signs[FAUNA] * np.exp(log_fauna)
        ys[:, FAUNA] = fauna
        fs[:, FAUNA] *= fauna
    events = []
    starts, lengths = _run_lengths(floor)
    for s in starts:
        events.append(Event(float(ts[s]), STEP_FLOOR))
    if starts.size:
        log.info("step floor hit in %d episodes", starts.size)
    if formulation is not Formulation.REDUCED:
        bounds = region_bounds(params)
        outside = bounds.excess_many(_full_coordinates(formulation, ys)) > REGION_RTOL
        for s in _run_lengths(outside)[0]:
            events.append(Event(float(ts[s]), REGION_EXIT))
    if equilibria is None:
        from .equilibria import equilibria_all

        equilibria = equilibria_all(params)
    for eq in equilibria:
        target = eq.in_formulation(formulation)
        near = distances_to(ys, target) < config.capture_tol
        st, ln = _run_lengths(near)
        # first qualifying approach only; later flicker at the tolerance edge is noise
        for s, n in zip(st, ln):
            if n >= CAPTURE_STEPS:
                events.append(Event(float(ts[s + CAPTURE_STEPS - 1]), EQUILIBRIUM_CAPTURE, eq.kind.value))
                break
    events.sort(key=lambda e: e.time)
    return Trajectory(formulation, ts, ys, fs, events, config.record_stride, log_fauna)
