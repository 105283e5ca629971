"""Parameters, state types, vector fields and invariant-region bounds.

Three formulations of the same dynamics are provided:

* ``full``: domestic humans, wild fauna and humans hunting in the wild.
* ``reduced``: the two-dimensional system obtained when migration between
  the domestic and wild compartments is fast.
* ``compet``: the full system after flipping the sign of the two wild
  components, which turns it into a competitive system.

Vector fields are written as numba kernels over a flat parameter vector so
the integrator can call them without Python overhead; the public ``rhs_*``
functions wrap them for ordinary use.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, fields, replace
from functools import cached_property

import numpy as np
from numba import njit

# magnitude below which a negative component is treated as roundoff
DUST = 1e-30


class Formulation(str, enum.Enum):
    FULL = "full"
    REDUCED = "reduced"
    COMPET = "compet"

    @property
    def dim(self) -> int:
        return 2 if self is Formulation.REDUCED else 3

    @property
    def code(self) -> int:
        return _FORMULATION_CODES[self]

    @property
    def signs(self) -> np.ndarray:
        """Sign of each component inside the biological domain."""
        if self is Formulation.COMPET:
            return np.array([1.0, -1.0, -1.0])
        return np.ones(self.dim)


_FORMULATION_CODES = {Formulation.FULL: 0, Formulation.REDUCED: 1, Formulation.COMPET: 2}


# ---------------------------------------------------------------------------
# errors


class ParameterError(ValueError):
    """Base class for invalid model parameters."""


class NonPositiveRateError(ParameterError):
    pass


class SignAssumptionError(ParameterError):
    """Mortality does not exceed food production."""


class AnthropisationError(ParameterError):
    pass


class BetaBoundError(ParameterError):
    def __init__(self, message: str, beta_star: float):
        super().__init__(message)
        self.beta_star = beta_star


class EpsilonError(ParameterError):
    pass


class StateDomainError(ValueError):
    """A state component has the wrong sign for its formulation."""


# ---------------------------------------------------------------------------
# parameters

# order of the flat parameter vector handed to the kernels
_I, _E, _FD, _MU, _MD, _MW, _R, _K, _ALPHA, _BETA, _LAM = range(11)


@dataclass(frozen=True, kw_only=True)
class ModelParams:
    """Model parameters, validated on construction.

    The four parameters that the analyses vary (hunting rate, anthropisation,
    human boost, immigration) have no default; the rest default to the
    baseline used throughout the simulations.
    """

    hunting_rate: float
    anthropisation: float
    human_boost: float
    immigration: float
    diet_fraction: float = 0.4
    food_production: float = 0.005
    mortality: float = 0.02
    mig_to_wild: float = 0.826
    mig_to_domestic: float = 4.13
    fauna_growth: float = 0.8
    carrying_capacity: float = 7200.0
    epsilon: float = 1.0

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, bool) or not isinstance(v, (int, float, np.floating, np.integer)):
                raise ParameterError(f"{f.name} must be a real number, got {v!r}")
            if not math.isfinite(v):
                raise ParameterError(f"{f.name} must be finite, got {v!r}")
            object.__setattr__(self, f.name, float(v))
        _check(self)

    @property
    def m(self) -> float:
        """Ratio of migration rates m_D / m_W."""
        return self.mig_to_wild / self.mig_to_domestic

    @property
    def net_mortality(self) -> float:
        return self.mortality - self.food_production

    @property
    def beta_star(self) -> float:
        return beta_star(self)

    @cached_property
    def vector(self) -> np.ndarray:
        """Flat float64 parameter vector in kernel order."""
        v = np.array(
            [
                self.immigration,
                self.diet_fraction,
                self.food_production,
                self.mortality,
                self.mig_to_wild,
                self.mig_to_domestic,
                self.fauna_growth,
                self.carrying_capacity,
                self.anthropisation,
                self.human_boost,
                self.hunting_rate,
            ]
        )
        v.setflags(write=False)
        return v

    def replace(self, **changes) -> "ModelParams":
        return replace(self, **changes)

    def with_time_scale(self, epsilon: float) -> "ModelParams":
        """Treat the stored migration rates as slow-time rates and divide by epsilon."""
        if not epsilon > 0:
            raise EpsilonError(f"epsilon must be > 0, got {epsilon!r}")
        return replace(
            self,
            mig_to_wild=self.mig_to_wild / epsilon,
            mig_to_domestic=self.mig_to_domestic / epsilon,
            epsilon=epsilon,
        )


def _beta_star_raw(p: ModelParams) -> float:
    one_a = 1.0 - p.anthropisation
    return 4.0 * p.net_mortality / (p.m * p.diet_fraction * p.fauna_growth * one_a**2 * p.carrying_capacity)


def _check(p: ModelParams) -> None:
    positive = (
        "mortality",
        "mig_to_wild",
        "mig_to_domestic",
        "fauna_growth",
        "carrying_capacity",
        "diet_fraction",
    )
    for name in positive:
        if getattr(p, name) <= 0:
            raise NonPositiveRateError(f"{name} must be > 0, got {getattr(p, name)!r}")
    for name in ("immigration", "human_boost", "food_production", "hunting_rate"):
        if getattr(p, name) < 0:
            raise NonPositiveRateError(f"{name} must be >= 0, got {getattr(p, name)!r}")
    if p.diet_fraction > 1:
        raise ParameterError(f"diet_fraction must lie in (0, 1], got {p.diet_fraction!r}")
    if p.epsilon <= 0:
        raise EpsilonError(f"epsilon must be > 0, got {p.epsilon!r}")
    if p.mortality <= p.food_production:
        raise SignAssumptionError(
            f"mortality ({p.mortality!r}) must exceed food_production ({p.food_production!r})"
        )
    if not 0 <= p.anthropisation < 1:
        raise AnthropisationError(f"anthropisation must lie in [0, 1), got {p.anthropisation!r}")
    m = p.m
    if not (math.isfinite(m) and m > 0):
        raise NonPositiveRateError(f"migration ratio must be finite and positive, got {m!r}")
    bs = _beta_star_raw(p)
    if p.human_boost >= bs:
        raise BetaBoundError(
            f"human_boost ({p.human_boost!r}) must be below beta* = {bs:.6g}", beta_star=bs
        )


def validate(params: ModelParams) -> ModelParams:
    """Re-check every parameter invariant and return params unchanged."""
    _check(params)
    return params


def beta_star(params: ModelParams) -> float:
    """Upper bound on the human boost for which the invariant region is bounded."""
    return _beta_star_raw(params)


# ---------------------------------------------------------------------------
# states


def _coerce(values, signs, names, cls):
    out = []
    for v, s, name in zip(values, signs, names):
        v = float(v)
        if not math.isfinite(v):
            raise StateDomainError(f"{cls}.{name} must be finite, got {v!r}")
        if s * v < 0:
            if abs(v) < DUST:
                v = 0.0
            else:
                sign = ">= 0" if s > 0 else "<= 0"
                raise StateDomainError(f"{cls}.{name} must be {sign}, got {v!r}")
        out.append(v + 0.0)  # drop negative zero
    return out


class _State:
    _signs: tuple = ()

    def __post_init__(self):
        names = [f.name for f in fields(self)]
        vals = _coerce([getattr(self, n) for n in names], self._signs, names, type(self).__name__)
        for n, v in zip(names, vals):
            object.__setattr__(self, n, v)

    def __iter__(self):
        return iter(tuple(getattr(self, f.name) for f in fields(self)))

    def __len__(self):
        return len(fields(self))

    def __array__(self, dtype=None, copy=None):
        return np.array(tuple(self), dtype=dtype or float)


@dataclass(frozen=True)
class StateFull(_State):
    h_domestic: float
    fauna: float
    h_wild: float
    _signs = (1, 1, 1)


@dataclass(frozen=True)
class StateReduced(_State):
    h_domestic: float
    fauna: float
    _signs = (1, 1)


@dataclass(frozen=True)
class StateCompet(_State):
    h_d: float
    f_w: float
    h_w: float
    _signs = (1, -1, -1)


STATE_TYPES = {
    Formulation.FULL: StateFull,
    Formulation.REDUCED: StateReduced,
    Formulation.COMPET: StateCompet,
}


def make_state(formulation: Formulation, values) -> _State:
    vals = list(np.asarray(values, dtype=float).ravel())
    formulation = Formulation(formulation)
    if len(vals) != formulation.dim:
        raise StateDomainError(f"{formulation.value} state needs {formulation.dim} components, got {len(vals)}")
    return STATE_TYPES[formulation](*vals)


def to_compet(s: StateFull) -> StateCompet:
    if not isinstance(s, StateFull):
        s = StateFull(*s)
    return StateCompet(s.h_domestic, -s.fauna, -s.h_wild)


def from_compet(s: StateCompet) -> StateFull:
    if not isinstance(s, StateCompet):
        s = StateCompet(*s)
    return StateFull(s.h_d, -s.f_w, -s.h_w)


# ---------------------------------------------------------------------------
# vector fields


@njit(cache=True)
def full_field(p, y, out):
    I, e, fd, mu, md, mw, r, K, a, b, lam = p[0], p[1], p[2], p[3], p[4], p[5], p[6], p[7], p[8], p[9], p[10]
    hd, fw, hw = y[0], y[1], y[2]
    out[0] = I + e * lam * fw * hw + (fd - mu) * hd - md * hd + mw * hw
    out[1] = r * (1.0 - a) * (1.0 + b * hw) * (1.0 - fw / (K * (1.0 - a))) * fw - lam * fw * hw
    out[2] = md * hd - mw * hw


@njit(cache=True)
def reduced_field(p, y, out):
    I, e, fd, mu, md, mw, r, K, a, b, lam = p[0], p[1], p[2], p[3], p[4], p[5], p[6], p[7], p[8], p[9], p[10]
    m = md / mw
    hd, fw = y[0], y[1]
    out[0] = (I + (fd - mu) * hd + e * m * lam * fw * hd) / (1.0 + m)
    out[1] = (1.0 - a) * (1.0 + b * m * hd) * r * (1.0 - fw / ((1.0 - a) * K)) * fw - m * lam * fw * hd


@njit(cache=True)
def compet_field(p, y, out):
    I, e, fd, mu, md, mw, r, K, a, b, lam = p[0], p[1], p[2], p[3], p[4], p[5], p[6], p[7], p[8], p[9], p[10]
    hd, fw, hw = y[0], y[1], y[2]
    out[0] = I + e * lam * hw * fw + (fd - mu) * hd - md * hd - mw * hw
    out[1] = (1.0 - a) * (1.0 - b * hw) * r * (1.0 + fw / (K * (1.0 - a))) * fw + lam * fw * hw
    out[2] = -md * hd - mw * hw


# Log-fauna variants: y[1] holds ln|F| and out[1] its time derivative.  The
# fauna equation is F times a per-capita rate, so the log form never
# underflows to the invariant face F = 0.


@njit(cache=True)
def full_log_field(p, y, out):
    I, e, fd, mu, md, mw, r, K, a, b, lam = p[0], p[1], p[2], p[3], p[4], p[5], p[6], p[7], p[8], p[9], p[10]
    hd, fw, hw = y[0], np.exp(y[1]), y[2]
    out[0] = I + e * lam * fw * hw + (fd - mu) * hd - md * hd + mw * hw
    out[1] = r * (1.0 - a) * (1.0 + b * hw) * (1.0 - fw / (K * (1.0 - a))) - lam * hw
    out[2] = md * hd - mw * hw


@njit(cache=True)
def reduced_log_field(p, y, out):
    I, e, fd, mu, md, mw, r, K, a, b, lam = p[0], p[1], p[2], p[3], p[4], p[5], p[6], p[7], p[8], p[9], p[10]
    m = md / mw
    hd, fw = y[0], np.exp(y[1])
    out[0] = (I + (fd - mu) * hd + e * m * lam * fw * hd) / (1.0 + m)
    out[1] = (1.0 - a) * (1.0 + b * m * hd) * r * (1.0 - fw / ((1.0 - a) * K)) - m * lam * hd


@njit(cache=True)
def compet_log_field(p, y, out):
    I, e, fd, mu, md, mw, r, K, a, b, lam = p[0], p[1], p[2], p[3], p[4], p[5], p[6], p[7], p[8], p[9], p[10]
    hd, fw, hw = y[0], -np.exp(y[1]), y[2]
    out[0] = I + e * lam * hw * fw + (fd - mu) * hd - md * hd - mw * hw
    out[1] = (1.0 - a) * (1.0 - b * hw) * r * (1.0 + fw / (K * (1.0 - a))) + lam * hw
    out[2] = -md * hd - mw * hw


LOG_FAUNA_OFFSET = 3


@njit(cache=True)
def field_by_code(code, p, y, out):
    if code == 0:
        full_field(p, y, out)
    elif code == 1:
        reduced_field(p, y, out)
    elif code == 2:
        compet_field(p, y, out)
    elif code == 3:
        full_log_field(p, y, out)
    elif code == 4:
        reduced_log_field(p, y, out)
    else:
        compet_log_field(p, y, out)


def _eval(fn, params: ModelParams, s, dim: int) -> np.ndarray:
    y = np.asarray(s, dtype=float)
    if y.shape != (dim,):
        raise ValueError(f"expected a state with {dim} components, got shape {y.shape}")
    out = np.empty(dim)
    fn(params.vector, y, out)
    return out


def rhs_full(params: ModelParams, s) -> np.ndarray:
    """Time derivative of (H_D, F_W, H_W)."""
    return _eval(full_field, params, s, 3)


def rhs_reduced(params: ModelParams, s) -> np.ndarray:
    """Time derivative of (H_D, F_W) under fast migration."""
    return _eval(reduced_field, params, s, 2)


def rhs_compet(params: ModelParams, s) -> np.ndarray:
    """Time derivative of (h_D, f_W, h_W) = (H_D, -F_W, -H_W)."""
    return _eval(compet_field, params, s, 3)


def rhs(params: ModelParams, formulation: Formulation, s) -> np.ndarray:
    formulation = Formulation(formulation)
    return {
        Formulation.FULL: rhs_full,
        Formulation.REDUCED: rhs_reduced,
        Formulation.COMPET: rhs_compet,
    }[formulation](params, s)


# ---------------------------------------------------------------------------
# invariant region


@dataclass(frozen=True)
class RegionBounds:
    """Bounds of the compact invariant region Omega.

    Omega is {H_D + e F_W <= s_max, F_W <= fauna_max, H_W <= h_wild_max}
    in the non-negative orthant.  ``absorbing_fauna_bound`` is the fauna
    level that trajectories of the competitive system always exceed in
    finite time, when such a level exists.
    """

    s_max: float
    fauna_max: float
    h_wild_max: float
    diet_fraction: float
    absorbing_fauna_bound: float | None = None

    def excess(self, s) -> float:
        """Largest relative violation of the region constraints (<= 0 inside)."""
        y = np.asarray(s, dtype=float)
        return float(np.max(self.excess_many(y[None, :])))

    def excess_many(self, states: np.ndarray) -> np.ndarray:
        """Row-wise relative violation for an (n, 3) array of full states."""
        y = np.asarray(states, dtype=float)
        hd, fw, hw = y[:, 0], y[:, 1], y[:, 2]
        parts = np.stack(
            [
                (hd + self.diet_fraction * fw - self.s_max) / self.s_max,
                (fw - self.fauna_max) / self.fauna_max,
                (hw - self.h_wild_max) / self.h_wild_max,
                -hd / self.s_max,
                -fw / self.fauna_max,
                -hw / self.h_wild_max,
            ]
        )
        return parts.max(axis=0)

    def contains(self, s, rtol: float = 1e-9) -> bool:
        return self.excess(s) <= rtol

    def violates_joint_only(self, s, rtol: float = 1e-9) -> bool:
        """True when only the combined H_D + e F_W bound fails."""
        hd, fw, hw = np.asarray(s, dtype=float)
        joint = (hd + self.diet_fraction * fw - self.s_max) / self.s_max > rtol
        per = hd <= self.s_max * (1 + rtol) and fw <= self.fauna_max * (1 + rtol) and hw <= self.h_wild_max * (1 + rtol)
        return bool(joint and per)


def region_bounds(params: ModelParams) -> RegionBounds:
    p = params
    one_a = 1.0 - p.anthropisation
    e, r, K, m, b = p.diet_fraction, p.fauna_growth, p.carrying_capacity, p.m, p.human_boost
    d = p.net_mortality
    s_max = (p.immigration + (d + one_a * r / 4.0) * e * one_a * K) / (d - e * r * one_a**2 * K * m * b / 4.0)
    absorbing = None
    if b > 0 and p.hunting_rate < one_a * b * r:
        absorbing = K * (one_a - p.hunting_rate / (b * r))
    return RegionBounds(
        s_max=s_max,
        fauna_max=one_a * K,
        h_wild_max=m * s_max,
        diet_fraction=e,
        absorbing_fauna_bound=absorbing,
    )
