"""Equilibria, Jacobians, Routh–Hurwitz classification and thresholds."""
from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .model import (
    Formulation,
    ModelParams,
    StateFull,
    rhs,
    to_compet,
)

# relative tolerance below which a tested quantity counts as zero
THRESHOLD_RTOL = 1e-12


class Kind(str, enum.Enum):
    TRIVIAL = "trivial"
    FAUNA_ONLY = "fauna_only"
    HUMAN_ONLY = "human_only"
    COEXISTENCE = "coexistence"


class Stability(str, enum.Enum):
    LAS = "LAS"
    UNSTABLE = "Unstable"
    INDETERMINATE = "Indeterminate"


class NoCoexistenceError(ValueError):
    """The coexistence equilibrium does not exist for these parameters."""


class DeltaStabMismatch(UserWarning):
    """Closed-form and Jacobian routes to the stability discriminant disagree."""


@dataclass(frozen=True)
class EquilibriumReport:
    kind: Kind
    state: StateFull
    local_stability: Stability
    eigen_summary: tuple

    def in_formulation(self, formulation: Formulation) -> np.ndarray:
        """Equilibrium coordinates in the given formulation."""
        formulation = Formulation(formulation)
        if formulation is Formulation.COMPET:
            return np.asarray(to_compet(self.state))
        if formulation is Formulation.REDUCED:
            return np.asarray(self.state)[:2]
        return np.asarray(self.state)


@dataclass(frozen=True)
class PFRoots:
    discriminant: float
    root_low: float
    root_high: float


@dataclass(frozen=True)
class ThresholdReport:
    n_threshold: float
    beta_star: float
    delta_stab: float | None = None
    lambda_min: float | None = None
    lambda_max: float | None = None
    lambda_star: float | None = None


# ---------------------------------------------------------------------------
# fauna quadratic


def pf_coefficients(params: ModelParams) -> tuple[float, float, float]:
    """Coefficients (a, b, c) of the fauna quadratic a X^2 + b X + c.

    Its smaller root is the fauna level at coexistence when there is
    immigration.
    """
    p = params
    e, r, K, lam, m = p.diet_fraction, p.fauna_growth, p.carrying_capacity, p.hunting_rate, p.m
    one_a, d, I, b = 1.0 - p.anthropisation, p.net_mortality, p.immigration, p.human_boost
    a2 = e * r / K
    a1 = -(e * one_a * r + d * r / (lam * m * K) + I * b * r / (lam * K))
    a0 = d * one_a * r / (lam * m) - I * (1.0 - one_a * b * r / lam)
    return a2, a1, a0


def pf_eval(params: ModelParams, x: float) -> float:
    a, b, c = pf_coefficients(params)
    return (a * x + b) * x + c


def pf_discriminant(params: ModelParams) -> float:
    """Discriminant of the fauna quadratic, written as a sum of non-negative terms.

    Expanding b^2 - 4ac gives (e(1-a)r - x - y)^2 + 4 e r I / K with
    x = (mu-f) r / (lam m K) and y = I beta r / (lam K), so it is positive
    whenever there is immigration.
    """
    p = params
    e, r, K, lam, m = p.diet_fraction, p.fauna_growth, p.carrying_capacity, p.hunting_rate, p.m
    one_a, d, I, b = 1.0 - p.anthropisation, p.net_mortality, p.immigration, p.human_boost
    base = e * one_a * r - d * r / (lam * m * K) - I * b * r / (lam * K)
    return base * base + 4.0 * e * r * I / K


def pf_roots(params: ModelParams) -> PFRoots:
    p = params
    one_a, K = 1.0 - p.anthropisation, p.carrying_capacity
    if p.hunting_rate <= 0:
        raise ValueError("the fauna quadratic needs a positive hunting rate")
    disc = pf_discriminant(p)
    if p.immigration == 0:
        r1 = one_a * K
        r2 = p.net_mortality / (p.diet_fraction * p.hunting_rate * p.m)
        return PFRoots(disc, min(r1, r2), max(r1, r2))
    if not disc > 0:
        raise ArithmeticError(f"fauna quadratic discriminant is not positive ({disc!r})")
    a, b, c = pf_coefficients(p)
    q = -0.5 * (b + math.copysign(math.sqrt(disc), b))
    x1, x2 = q / a, c / q
    return PFRoots(disc, min(x1, x2), max(x1, x2))


# ---------------------------------------------------------------------------
# thresholds


def threshold_n(params: ModelParams) -> float:
    """Coexistence threshold N; coexistence exists iff N > 1."""
    p = params
    one_a, d = 1.0 - p.anthropisation, p.net_mortality
    if p.immigration == 0:
        return p.m * p.diet_fraction * p.hunting_rate * one_a * p.carrying_capacity / d
    if p.hunting_rate == 0:
        return math.inf
    return p.fauna_growth * one_a * (d / (p.m * p.immigration) + p.human_boost) / p.hunting_rate


def lambda_bounds(params: ModelParams) -> float:
    """Hunting rate at which N = 1: a lower bound without immigration, an upper one with."""
    p = params
    one_a, d = 1.0 - p.anthropisation, p.net_mortality
    if p.immigration == 0:
        return d / (one_a * p.diet_fraction * p.m * p.carrying_capacity)
    return one_a * p.fauna_growth * (d / (p.m * p.immigration) + p.human_boost)


def _near_one(n: float) -> bool:
    return abs(n - 1.0) <= THRESHOLD_RTOL


def coexistence_state(params: ModelParams) -> StateFull | None:
    """Closed-form coexistence equilibrium, or None when N <= 1."""
    p = params
    n = threshold_n(p)
    if not n > 1 or _near_one(n):
        return None
    one_a, K, r, b, lam = 1.0 - p.anthropisation, p.carrying_capacity, p.fauna_growth, p.human_boost, p.hunting_rate
    e, m, d = p.diet_fraction, p.m, p.net_mortality
    if p.immigration == 0:
        f = d / (lam * m * e)
        h = one_a * r * (1.0 - f / (K * one_a)) / (m * (lam - b * one_a * r + b * r * f / K))
    elif lam == 0:
        f, h = one_a * K, p.immigration / d
    else:
        f = pf_roots(p).root_low
        h = p.immigration / (d - e * lam * m * f)
    return StateFull(h, f, m * h)


# ---------------------------------------------------------------------------
# Jacobians


def jacobian(params: ModelParams, formulation: Formulation, s) -> np.ndarray:
    """Closed-form Jacobian of the chosen vector field at s."""
    p = params
    formulation = Formulation(formulation)
    y = np.asarray(s, dtype=float)
    I, e, fd, mu, md, mw, r, K, a, b, lam = p.vector
    one_a = 1.0 - a
    if formulation is Formulation.FULL:
        hd, fw, hw = y
        logistic = 1.0 - fw / (K * one_a)
        return np.array(
            [
                [fd - mu - md, e * lam * hw, e * lam * fw + mw],
                [0.0, r * one_a * (1.0 + b * hw) * (1.0 - 2.0 * fw / (K * one_a)) - lam * hw,
                 (r * one_a * b * logistic - lam) * fw],
                [md, 0.0, -mw],
            ]
        )
    if formulation is Formulation.REDUCED:
        hd, fw = y
        m = md / mw
        return np.array(
            [
                [(fd - mu + e * m * lam * fw) / (1.0 + m), e * m * lam * hd / (1.0 + m)],
                [m * (-lam + b * one_a * r * (1.0 - fw / (one_a * K))) * fw,
                 one_a * (1.0 + b * m * hd) * r * (1.0 - 2.0 * fw / (one_a * K)) - lam * m * hd],
            ]
        )
    hd, fw, hw = y
    return np.array(
        [
            [fd - mu - md, e * lam * hw, e * lam * fw - mw],
            [0.0, r * one_a * (1.0 - b * hw) * (1.0 + 2.0 * fw / (K * one_a)) + lam * hw,
             (lam - one_a * b * r - b * r * fw / K) * fw],
            [-md, 0.0, -mw],
        ]
    )


def jacobian_fd(params: ModelParams, formulation: Formulation, s, rel_step: float = 1e-6) -> np.ndarray:
    """Central finite-difference Jacobian, used as an oracle."""
    y = np.asarray(s, dtype=float)
    n = y.size
    out = np.empty((n, n))
    for j in range(n):
        h = rel_step * max(1.0, abs(y[j]))
        up, dn = y.copy(), y.copy()
        up[j] += h
        dn[j] -= h
        out[:, j] = (rhs(params, formulation, up) - rhs(params, formulation, dn)) / (2 * h)
    return out


def char_poly(matrix: np.ndarray) -> tuple:
    """Monic characteristic-polynomial coefficients without the leading 1.

    2x2: (a1, a0) = (-trace, det); 3x3: (a2, a1, a0) with a2 = -trace,
    a1 = sum of principal 2x2 minors, a0 = -det.
    """
    J = np.asarray(matrix, dtype=float)
    if J.shape == (2, 2):
        return (-(J[0, 0] + J[1, 1]), J[0, 0] * J[1, 1] - J[0, 1] * J[1, 0])
    if J.shape != (3, 3):
        raise ValueError(f"expected a 2x2 or 3x3 matrix, got {J.shape}")
    tr = J[0, 0] + J[1, 1] + J[2, 2]
    minors = (
        J[0, 0] * J[1, 1] - J[0, 1] * J[1, 0]
        + J[0, 0] * J[2, 2] - J[0, 2] * J[2, 0]
        + J[1, 1] * J[2, 2] - J[1, 2] * J[2, 1]
    )
    det = (
        J[0, 0] * (J[1, 1] * J[2, 2] - J[1, 2] * J[2, 1])
        - J[0, 1] * (J[1, 0] * J[2, 2] - J[1, 2] * J[2, 0])
        + J[0, 2] * (J[1, 0] * J[2, 1] - J[1, 1] * J[2, 0])
    )
    return (-tr, minors, -det)


def _scale(coeffs) -> float:
    # typical eigenvalue magnitude: a_k scales like rho^(n-k)
    n = len(coeffs)
    return max(abs(c) ** (1.0 / (i + 1)) for i, c in enumerate(coeffs)) or 1.0


def routh_hurwitz(coeffs, tol: float = THRESHOLD_RTOL) -> Stability:
    """Stability from monic characteristic-polynomial coefficients.

    ``coeffs`` is (a1, a0) for X^2 + a1 X + a0 or (a2, a1, a0) for
    X^3 + a2 X^2 + a1 X + a0.  A tested quantity counts as zero when it is
    within ``tol`` of the matching power of the eigenvalue scale.
    """
    c = [float(x) for x in coeffs]
    if len(c) not in (2, 3):
        raise ValueError("routh_hurwitz handles dimension 2 or 3 only")
    rho = _scale(c)
    tests = [(x, rho ** (i + 1)) for i, x in enumerate(c)]
    if len(c) == 3:
        a2, a1, a0 = c
        tests.append((a2 * a1 - a0, rho**3))
    if any(q < -tol * s for q, s in tests):
        return Stability.UNSTABLE
    if any(abs(q) <= tol * s for q, s in tests):
        return Stability.INDETERMINATE
    return Stability.LAS


def _stability_at(params: ModelParams, formulation: Formulation, state: StateFull):
    f = Formulation(formulation)
    y = np.asarray(to_compet(state)) if f is Formulation.COMPET else np.asarray(state)[: f.dim]
    coeffs = char_poly(jacobian(params, f, y))
    return routh_hurwitz(coeffs), tuple(float(x) for x in coeffs)


# ---------------------------------------------------------------------------
# equilibria


def equilibria_all(params: ModelParams, formulation: Formulation = Formulation.FULL) -> list[EquilibriumReport]:
    """Every equilibrium that exists for params, with its local stability.

    Stability is judged from the Jacobian of ``formulation``; the reduced
    formulation gives (trace, det)-style 2-D summaries.
    """
    p = params
    d = p.net_mortality
    states: list[tuple[Kind, StateFull]] = []
    if p.immigration == 0:
        states.append((Kind.TRIVIAL, StateFull(0.0, 0.0, 0.0)))
        states.append((Kind.FAUNA_ONLY, StateFull(0.0, (1.0 - p.anthropisation) * p.carrying_capacity, 0.0)))
    else:
        h = p.immigration / d
        states.append((Kind.HUMAN_ONLY, StateFull(h, 0.0, p.m * h)))
    co = coexistence_state(p)
    if co is not None:
        states.append((Kind.COEXISTENCE, co))
    out = []
    for kind, s in states:
        stab, summary = _stability_at(p, formulation, s)
        out.append(EquilibriumReport(kind, s, stab, summary))
    return out


# ---------------------------------------------------------------------------
# Hopf discriminant


def _coexistence_poly_exact(params: ModelParams) -> tuple:
    """Characteristic-polynomial coefficients of the competitive Jacobian at
    the coexistence equilibrium, in exact rational arithmetic.

    Fast migration makes the m_D m_W products cancel in a1 and a0, and a
    scarce fauna equilibrium makes the generic fauna diagonal entry cancel
    against the hunting term.  The entries are therefore kept exact (from
    the float parameters and equilibrium) and the fauna diagonal uses its
    equilibrium-reduced form r (1 - beta h_W) f / K.
    """
    co = coexistence_state(params)
    if co is None:
        raise NoCoexistenceError("coexistence equilibrium absent (N <= 1)")
    I, e, fd, mu, md, mw, r, K, a, b, lam = (Fraction(float(v)) for v in params.vector)
    _, f, hw = (Fraction(float(v)) for v in to_compet(co))
    J = (
        (fd - mu - md, e * lam * hw, e * lam * f - mw),
        (Fraction(0), r * (1 - b * hw) * f / K, (lam - (1 - a) * b * r - b * r * f / K) * f),
        (-md, Fraction(0), -mw),
    )
    tr = J[0][0] + J[1][1] + J[2][2]
    minors = (
        J[0][0] * J[1][1] - J[0][1] * J[1][0]
        + J[0][0] * J[2][2] - J[0][2] * J[2][0]
        + J[1][1] * J[2][2] - J[1][2] * J[2][1]
    )
    det = (
        J[0][0] * (J[1][1] * J[2][2] - J[1][2] * J[2][1])
        - J[0][1] * (J[1][0] * J[2][2] - J[1][2] * J[2][0])
        + J[0][2] * (J[1][0] * J[2][1] - J[1][1] * J[2][0])
    )
    return -tr, minors, -det


def delta_stab_jacobian(params: ModelParams) -> float:
    """a2 a1 - a0 of the competitive Jacobian at the coexistence equilibrium."""
    a2, a1, a0 = _coexistence_poly_exact(params)
    return float(a2 * a1 - a0)


def delta_stab_closed_form(params: ModelParams) -> float:
    """Closed-form a2 a1 - a0 in competitive coordinates (f*, h_W* <= 0)."""
    p = params
    co = coexistence_state(p)
    if co is None:
        raise NoCoexistenceError("coexistence equilibrium absent (N <= 1)")
    if p.hunting_rate == 0:
        raise ValueError("closed form needs a positive hunting rate")
    _, f, hw = to_compet(co)
    e, r, K, lam, m = p.diet_fraction, p.fauna_growth, p.carrying_capacity, p.hunting_rate, p.m
    one_a, d, I, b = 1.0 - p.anthropisation, p.net_mortality, p.immigration, p.human_boost
    md, mw = p.mig_to_wild, p.mig_to_domestic
    damp = r * (1.0 - b * hw) * f / K
    a2 = d + md - damp + mw
    if I == 0:
        a1 = -(d + md + mw) * damp
        a0 = -md * e * lam * one_a * r * (1.0 + f / (one_a * K)) * f
    else:
        shift = d / (e * lam * m) + f
        a1 = -(d + md + mw) * damp + shift * e * lam * md
        inner = math.sqrt(pf_discriminant(p)) / (e * r) - I * b / (lam * K * e) - b * hw / K * shift
        a0 = -md * lam * e * r * inner * f
    return a2 * a1 - a0


def delta_stab(params: ModelParams, rtol: float = 1e-8) -> float:
    """Hopf discriminant at the coexistence equilibrium; > 0 means locally stable.

    Both the closed form and the Jacobian route are evaluated; the Jacobian
    value is returned and a ``DeltaStabMismatch`` warning flags any
    disagreement beyond ``rtol``.
    """
    dj = delta_stab_jacobian(params)
    if params.hunting_rate > 0:
        dc = delta_stab_closed_form(params)
        if abs(dc - dj) > rtol * max(1.0, abs(dj)):
            warnings.warn(
                f"closed-form discriminant {dc!r} differs from Jacobian value {dj!r}",
                DeltaStabMismatch,
                stacklevel=2,
            )
    return dj


def coexistence_coefficients(params: ModelParams) -> tuple[float, float, float]:
    """(a2, a1, a0) at the coexistence equilibrium, each correctly rounded from exact arithmetic."""
    return tuple(float(c) for c in _coexistence_poly_exact(params))


# ---------------------------------------------------------------------------
# critical hunting rate


def _hopf_lambda(params: ModelParams, scale_mw_term_by_diet: bool = False) -> float:
    p = params
    if p.immigration > 0 or p.human_boost > 0:
        raise ValueError("the critical hunting rate is defined only without immigration and human boost")
    e, r, K = p.diet_fraction, p.fauna_growth, p.carrying_capacity
    one_a, d, md, mw = 1.0 - p.anthropisation, p.net_mortality, p.mig_to_wild, p.mig_to_domestic
    B = d + md + mw
    C = mw * d / (e if scale_mw_term_by_diet else 1.0) + B * B
    return C * (1.0 + math.sqrt(1.0 + 4.0 * one_a * mw * r * d * B / C**2)) / (2.0 * e * md * one_a * K)


def lambda_star(params: ModelParams) -> float:
    """Hunting rate at which the coexistence equilibrium loses stability.

    For hunting rates below it (and above the existence bound) coexistence is
    stable; above it a limit cycle takes over.  Defined for no immigration and
    no human boost.
    """
    return _hopf_lambda(params)


def hopf_polynomial(params: ModelParams, x: float) -> float:
    """Quadratic in the hunting rate whose positive root is ``lambda_star``."""
    p = params
    e, r, K = p.diet_fraction, p.fauna_growth, p.carrying_capacity
    one_a, d, md, mw = 1.0 - p.anthropisation, p.net_mortality, p.mig_to_wild, p.mig_to_domestic
    B = d + md + mw
    C = mw * d + B * B
    return one_a * K * md * e * x * x - C * x - r * d * mw * B / (K * md * e)


def thresholds(params: ModelParams) -> ThresholdReport:
    p = params
    n = threshold_n(p)
    ds = None
    if n > 1 and not _near_one(n):
        ds = delta_stab(p)
    kw = {}
    if p.immigration == 0:
        kw["lambda_min"] = lambda_bounds(p)
        if p.human_boost == 0:
            kw["lambda_star"] = lambda_star(p)
    else:
        kw["lambda_max"] = lambda_bounds(p)
    return ThresholdReport(n_threshold=n, beta_star=p.beta_star, delta_stab=ds, **kw)
