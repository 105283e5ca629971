"""Long-term classification, attractor detection, cycle metrics, grid sweeps
and the fast-migration (QSSA) fidelity comparison."""
from __future__ import annotations

import enum
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .equilibria import (
    EquilibriumReport,
    Kind,
    Stability,
    ThresholdReport,
    char_poly,
    coexistence_coefficients,
    equilibria_all,
    jacobian,
    routh_hurwitz,
    thresholds,
)
from .integrate import IntegrationConfig, Trajectory, distances_to, integrate
from .model import Formulation, ModelParams, ParameterError, beta_star

FAUNA = 1

# Cycle troughs reach fauna levels near 1e-42, far below the generic
# absolute tolerance; attractor runs use error control that stays relative
# down there so successive cycles are resolved consistently.
ATTRACTOR_ABS_TOL = 1e-200
# Near a weakly attracting equilibrium the accepted-step error settles into a
# bias of roughly 25 rel_tol; 1e-10 keeps it well below the 1e-6 capture test.
ATTRACTOR_REL_TOL = 1e-10


class Verdict(str, enum.Enum):
    FAUNA_ONLY_GAS = "fauna_only_gas"
    HUMAN_ONLY_GAS = "human_only_gas"
    COEXISTENCE_GAS = "coexistence_gas"
    LIMIT_CYCLE = "limit_cycle"
    BOUNDARY = "boundary"

    @property
    def label(self) -> str:
        return _LABELS[self]


_LABELS = {
    Verdict.FAUNA_ONLY_GAS: "FaunaOnlyGAS",
    Verdict.HUMAN_ONLY_GAS: "HumanOnlyGAS",
    Verdict.COEXISTENCE_GAS: "CoexistenceGAS",
    Verdict.LIMIT_CYCLE: "LimitCycle",
    Verdict.BOUNDARY: "Boundary",
}

# equilibrium kind expected to attract for each GAS verdict
ATTRACTING_KIND = {
    Verdict.FAUNA_ONLY_GAS: Kind.FAUNA_ONLY,
    Verdict.HUMAN_ONLY_GAS: Kind.HUMAN_ONLY,
    Verdict.COEXISTENCE_GAS: Kind.COEXISTENCE,
}


@dataclass(frozen=True)
class OutcomeClass:
    verdict: Verdict
    thresholds: ThresholdReport | None
    equilibria: list = field(default_factory=list)
    reason: str = ""


@dataclass(frozen=True)
class CycleInfo:
    period: float
    minima: tuple
    maxima: tuple
    min_fauna: float
    converged: bool
    peak_times: tuple = ()
    peak_values: tuple = ()

    @property
    def amplitude(self) -> tuple:
        """Peak-to-trough range per variable."""
        return tuple(hi - lo for lo, hi in zip(self.minima, self.maxima))


@dataclass(frozen=True)
class Attractor:
    """Outcome of ``detect_attractor``: kind is equilibrium, cycle or undecided."""

    kind: str
    trajectory: Trajectory
    equilibrium: EquilibriumReport | None = None
    cycle: CycleInfo | None = None


EQUILIBRIUM, CYCLE, UNDECIDED = "equilibrium", "cycle", "undecided"


# ---------------------------------------------------------------------------
# analytic classification


def classify(params: ModelParams) -> OutcomeClass:
    """Long-term behaviour from the coexistence threshold and the Hopf discriminant."""
    th = thresholds(params)
    eqs = equilibria_all(params)
    n = th.n_threshold
    if abs(n - 1.0) <= 1e-12:
        return OutcomeClass(Verdict.BOUNDARY, th, eqs, "coexistence threshold N = 1")
    if n < 1:
        v = Verdict.FAUNA_ONLY_GAS if params.immigration == 0 else Verdict.HUMAN_ONLY_GAS
        return OutcomeClass(v, th, eqs)
    stab = routh_hurwitz(coexistence_coefficients(params))
    if stab is Stability.LAS:
        return OutcomeClass(Verdict.COEXISTENCE_GAS, th, eqs)
    if stab is Stability.UNSTABLE:
        return OutcomeClass(Verdict.LIMIT_CYCLE, th, eqs)
    return OutcomeClass(Verdict.BOUNDARY, th, eqs, "Hopf discriminant within tolerance of 0")


def relaxation_time(params: ModelParams, formulation: Formulation = Formulation.FULL) -> float:
    """1/|Re| of the slowest eigenvalue at the equilibrium that governs the long run.

    That is the coexistence equilibrium when it exists, otherwise the
    boundary equilibrium the dynamics settle on.
    """
    eqs = {e.kind: e for e in equilibria_all(params, formulation)}
    eq = eqs.get(Kind.COEXISTENCE) or eqs.get(Kind.FAUNA_ONLY) or eqs.get(Kind.HUMAN_ONLY)
    formulation = Formulation(formulation)
    J = jacobian(params, formulation, eq.in_formulation(formulation))
    rate = np.min(np.abs(np.linalg.eigvals(J).real))
    return math.inf if rate == 0 else 1.0 / rate


# ---------------------------------------------------------------------------
# peaks and cycles


def _fauna_series(traj: Trajectory):
    """Fauna values and derivatives at each accepted step (positive orientation)."""
    sign = -1.0 if traj.formulation is Formulation.COMPET else 1.0
    return sign * traj.step_states[:, FAUNA], sign * traj.step_derivs[:, FAUNA]


def _hermite_parts(y0, y1, d0, d1):
    # derivative of the unit-interval cubic Hermite: A s^2 + B s + C
    A = 6 * y0 + 3 * d0 - 6 * y1 + 3 * d1
    B = -6 * y0 - 4 * d0 + 6 * y1 - 2 * d1
    return A, B, d0


def _hermite_value(y0, y1, d0, d1, s):
    return (1 + 2 * s) * (1 - s) ** 2 * y0 + s * (1 - s) ** 2 * d0 + s * s * (3 - 2 * s) * y1 + s * s * (s - 1) * d1


def _critical_points(ts, y, dy, maxima: bool):
    """Times and values of local extrema, refined on the Hermite interpolant."""
    if maxima:
        idx = np.flatnonzero((dy[:-1] > 0) & (dy[1:] <= 0))
    else:
        idx = np.flatnonzero((dy[:-1] < 0) & (dy[1:] >= 0))
    if idx.size == 0:
        return np.array([]), np.array([])
    h = ts[idx + 1] - ts[idx]
    y0, y1 = y[idx], y[idx + 1]
    d0, d1 = h * dy[idx], h * dy[idx + 1]
    A, B, C = _hermite_parts(y0, y1, d0, d1)
    lo = np.zeros_like(h)
    hi = np.ones_like(h)
    sgn = 1.0 if maxima else -1.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        up = sgn * ((A * mid + B) * mid + C) > 0
        lo = np.where(up, mid, lo)
        hi = np.where(up, hi, mid)
    s = 0.5 * (lo + hi)
    vals = _hermite_value(y0, y1, d0, d1, s)
    # keep the refined value inside the bracket given by the step endpoints
    vals = np.maximum(vals, np.maximum(y0, y1)) if maxima else np.minimum(vals, np.minimum(y0, y1))
    return ts[idx] + s * h, vals


def fauna_peaks(traj: Trajectory, t_start: float = -math.inf):
    """Times and values of fauna local maxima after ``t_start``."""
    f, df = _fauna_series(traj)
    t, v = _critical_points(traj.step_times, f, df, maxima=True)
    keep = t >= t_start
    return t[keep], v[keep]


def _agree(x: np.ndarray, rtol: float) -> bool:
    return bool(np.all(np.abs(np.diff(x)) <= rtol * np.abs(x[:-1])))


def _extrema(traj: Trajectory, t0: float, t1: float):
    """Per-variable min and max over [t0, t1] from the dense output."""
    ts, ys, fs = traj.step_times, traj.step_states, traj.step_derivs
    i0 = max(int(np.searchsorted(ts, t0)) - 1, 0)
    i1 = min(int(np.searchsorted(ts, t1)) + 1, len(ts))
    sl = slice(i0, i1)
    ends = traj.sample([t0, t1])
    inside = (ts[sl] >= t0) & (ts[sl] <= t1)
    mins, maxs = [], []
    for k in range(ys.shape[1]):
        vals = [ends[:, k], ys[sl][inside, k]]
        for maxima in (True, False):
            tc, vc = _critical_points(ts[sl], ys[sl, k], fs[sl, k], maxima)
            vals.append(vc[(tc >= t0) & (tc <= t1)])
        allv = np.concatenate(vals)
        mins.append(float(allv.min()))
        maxs.append(float(allv.max()))
    return tuple(mins), tuple(maxs)


def cycle_metrics(traj: Trajectory, n_peaks: int = 8, rtol: float = 1e-3, t_start: float = -math.inf) -> CycleInfo:
    """Period and extrema of a periodic orbit from the last ``n_peaks`` fauna maxima."""
    pt, pv = fauna_peaks(traj, t_start)
    if pt.size < n_peaks:
        raise ValueError(f"need at least {n_peaks} fauna peaks, found {pt.size}")
    pt, pv = pt[-n_peaks:], pv[-n_peaks:]
    spacing = np.diff(pt)
    period = float(spacing.mean())
    mins, maxs = _extrema(traj, float(pt[-2]), float(pt[-1]))
    sign = -1.0 if traj.formulation is Formulation.COMPET else 1.0
    fauna_vals = (sign * mins[FAUNA], sign * maxs[FAUNA])
    if sign < 0:
        mins, maxs = _orient(mins, maxs)
    return CycleInfo(
        period=period,
        minima=mins,
        maxima=maxs,
        min_fauna=min(fauna_vals),
        converged=_agree(pv, rtol) and _agree(spacing, rtol),
        peak_times=tuple(pt),
        peak_values=tuple(pv),
    )


def _orient(mins, maxs):
    # competitive coordinates flip the wild components; report biological sign
    lo = (mins[0], -maxs[1], -maxs[2])
    hi = (maxs[0], -mins[1], -mins[2])
    return lo, hi


# ---------------------------------------------------------------------------
# numerical attractor detection


def detect_attractor(
    params: ModelParams,
    initial,
    horizon: float,
    formulation: Formulation = Formulation.FULL,
    config: IntegrationConfig | None = None,
    transient: float = 0.5,
    final_fraction: float = 0.1,
    eq_tol: float = 1e-6,
    n_peaks: int = 8,
    cycle_rtol: float = 1e-3,
    cycle_clearance: float = 1e-3,
) -> Attractor:
    """Integrate for ``horizon`` years and name what the orbit settles on.

    Equilibrium when the final ``final_fraction`` of the run stays within
    ``eq_tol`` of one equilibrium; cycle when, after the transient, the last
    ``n_peaks`` fauna maxima agree in value and spacing within ``cycle_rtol``
    while the orbit keeps ``cycle_clearance`` from every equilibrium.

    The default configuration integrates ln F_W so that deep fauna troughs
    cannot underflow onto the fauna-free face.
    """
    formulation = Formulation(formulation)
    if config is None:
        config = IntegrationConfig(t_end=horizon, rel_tol=ATTRACTOR_REL_TOL, abs_tol=ATTRACTOR_ABS_TOL, log_fauna=True)
    elif config.t_end != horizon:
        config = IntegrationConfig(**{**config.__dict__, "t_end": horizon})
    eqs = equilibria_all(params, formulation)
    traj = integrate(params, formulation, initial, config, equilibria=eqs)
    ts, ys = traj.step_times, traj.step_states

    tail = ts >= horizon * (1.0 - final_fraction)
    for eq in eqs:
        d = distances_to(ys[tail], eq.in_formulation(formulation))
        if d.size and np.all(d < eq_tol):
            return Attractor(EQUILIBRIUM, traj, equilibrium=eq)

    t_after = horizon * transient
    pt, pv = fauna_peaks(traj, t_after)
    if pt.size >= n_peaks:
        pt, pv = pt[-n_peaks:], pv[-n_peaks:]
        if _agree(pv, cycle_rtol) and _agree(np.diff(pt), cycle_rtol):
            seg = (ts >= pt[0]) & (ts <= pt[-1])
            clear = all(np.all(distances_to(ys[seg], e.in_formulation(formulation)) > cycle_clearance) for e in eqs)
            if clear:
                info = cycle_metrics(traj, n_peaks, cycle_rtol, t_after)
                return Attractor(CYCLE, traj, cycle=info)
    return Attractor(UNDECIDED, traj)


# ---------------------------------------------------------------------------
# two-parameter sweep


@dataclass(frozen=True)
class GridCell:
    lambda_f: float
    alpha: float
    verdict: Verdict
    n_threshold: float = math.nan
    delta_stab: float = math.nan
    reason: str = ""


@dataclass(frozen=True)
class BifurcationGrid:
    """Verdicts on a (hunting rate, anthropisation) lattice.

    ``cells`` is ordered alpha-major: all hunting rates for the first alpha,
    then the next alpha.
    """

    lambda_axis: np.ndarray
    alpha_axis: np.ndarray
    cells: tuple

    def verdicts(self) -> np.ndarray:
        """Array of shape (len(alpha_axis), len(lambda_axis)) of Verdict."""
        out = np.empty(len(self.cells), dtype=object)
        out[:] = [c.verdict for c in self.cells]
        return out.reshape(len(self.alpha_axis), len(self.lambda_axis))

    def count(self, *verdicts: Verdict) -> int:
        return sum(c.verdict in verdicts for c in self.cells)


def _axis(bounds, n: int) -> np.ndarray:
    lo, hi = bounds
    if n < 2:
        raise ValueError("grid resolution must be at least 2 per axis")
    if not hi > lo:
        raise ValueError(f"axis range must be increasing, got {bounds!r}")
    return np.linspace(lo, hi, n)


def _cell(base: ModelParams, lam: float, alpha: float, beta_fraction) -> GridCell:
    try:
        changes = {"hunting_rate": lam, "anthropisation": alpha}
        if beta_fraction is not None:
            probe = base.replace(human_boost=0.0, **changes)
            changes["human_boost"] = beta_fraction * beta_star(probe)
        params = base.replace(**changes)
        out = classify(params)
    except (ParameterError, ArithmeticError, ValueError) as exc:
        return GridCell(lam, alpha, Verdict.BOUNDARY, reason=str(exc))
    th = out.thresholds
    ds = th.delta_stab if th.delta_stab is not None else math.nan
    return GridCell(lam, alpha, out.verdict, th.n_threshold, ds, out.reason)


def sweep_workers() -> int:
    """Worker count from ECODYN_THREADS (default 1)."""
    raw = os.environ.get("ECODYN_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def bifurcation_grid(
    base: ModelParams,
    lambda_range: tuple,
    alpha_range: tuple,
    resolution: tuple,
    beta_fraction: float | None = None,
    workers: int | None = None,
) -> BifurcationGrid:
    """Classify every cell of a (hunting rate, anthropisation) grid.

    With ``beta_fraction`` set, each cell uses human_boost =
    beta_fraction * beta*(alpha) recomputed for that cell's alpha.
    Cells whose parameters fail validation become Boundary with a reason.
    """
    lam_axis = _axis(lambda_range, resolution[0])
    alpha_axis = _axis(alpha_range, resolution[1])
    jobs = [(lam, a) for a in alpha_axis for lam in lam_axis]
    workers = workers or sweep_workers()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            cells = list(pool.map(lambda j: _cell(base, j[0], j[1], beta_fraction), jobs))
    else:
        cells = [_cell(base, lam, a, beta_fraction) for lam, a in jobs]
    return BifurcationGrid(lam_axis, alpha_axis, tuple(cells))


# ---------------------------------------------------------------------------
# fast-migration reduction fidelity


@dataclass(frozen=True)
class QSSAGap:
    epsilon: float
    sup_gap_hd: float
    sup_gap_fw: float
    sup_gap_hw: float


def qssa_compare(
    params: ModelParams,
    eps_list,
    initial,
    horizon: float,
    n_grid: int = 2001,
    config: IntegrationConfig | None = None,
) -> list[QSSAGap]:
    """Sup-norm gaps between the full system with migration rates divided by
    epsilon and the reduced system, on a shared uniform grid over (0, horizon].

    The migration rates stored in ``params`` are read as slow-time rates.
    The reduced system starts from the total human population split at the
    migration balance, H_D = (H_D0 + H_W0) / (1 + m).
    """
    cfg = config or IntegrationConfig(t_end=horizon)
    if cfg.t_end != horizon:
        cfg = IntegrationConfig(**{**cfg.__dict__, "t_end": horizon})
    y0 = np.asarray(initial, dtype=float)
    m = params.m
    grid = np.linspace(0.0, horizon, n_grid)[1:]
    red = integrate(params, Formulation.REDUCED, ((y0[0] + y0[2]) / (1 + m), y0[1]), cfg, equilibria=[])
    rs = red.sample(grid)
    out = []
    for eps in eps_list:
        if not eps > 0:
            raise ValueError(f"epsilon must be positive, got {eps!r}")
        full = integrate(params.with_time_scale(eps), Formulation.FULL, y0, cfg, equilibria=[])
        fs = full.sample(grid)
        out.append(
            QSSAGap(
                float(eps),
                float(np.max(np.abs(fs[:, 0] - rs[:, 0]))),
                float(np.max(np.abs(fs[:, 1] - rs[:, 1]))),
                float(np.max(np.abs(fs[:, 2] - m * rs[:, 0]))),
            )
        )
    return out
