"""Random parameter draws over the documented value ranges."""
from __future__ import annotations

import numpy as np

from ecodyn.model import ModelParams, beta_star

BASELINE = dict(hunting_rate=0.01425, anthropisation=0.0, human_boost=0.0, immigration=0.0)

# parameter set of the fast-migration comparison figure; migration rates are slow-time values
QSSA_SET = dict(
    hunting_rate=0.015,
    anthropisation=0.1,
    human_boost=0.0,
    immigration=0.0,
    fauna_growth=0.6,
    carrying_capacity=7250.0,
    diet_fraction=0.2,
    mortality=0.02,
    food_production=0.0,
    mig_to_wild=0.0019,
    mig_to_domestic=0.066,
)


def baseline(**changes) -> ModelParams:
    return ModelParams(**{**BASELINE, **changes})


def draw_params(rng: np.random.Generator, immigration=None, beta_zero=False, **fixed) -> ModelParams:
    """One valid parameter set drawn from the value ranges of the field data."""
    mw = rng.uniform(2.28, 73.0)
    mu = rng.uniform(0.015, 0.03)
    kw = dict(
        mortality=mu,
        food_production=rng.uniform(0.0, min(0.0164, 0.9 * mu)),
        mig_to_domestic=mw,
        mig_to_wild=rng.uniform(0.17, 0.52) * mw,
        fauna_growth=rng.uniform(0.44, 0.84),
        carrying_capacity=rng.uniform(900.0, 34000.0),
        diet_fraction=rng.uniform(0.05, 1.0),
        anthropisation=rng.uniform(0.0, 0.95),
        hunting_rate=10 ** rng.uniform(-5, 0),
        human_boost=0.0,
    )
    if immigration is None:
        immigration = 0.0 if rng.random() < 0.5 else 10 ** rng.uniform(-3, 1)
    kw["immigration"] = immigration
    kw.update(fixed)
    p = ModelParams(**kw)
    if not beta_zero and "human_boost" not in fixed:
        p = p.replace(human_boost=rng.uniform(0.0, 0.99) * beta_star(p))
    return p


def draw_coexisting(rng: np.random.Generator, count: int, **kw) -> list[ModelParams]:
    """Draw until ``count`` parameter sets with N clearly above 1 are found."""
    from ecodyn.equilibria import threshold_n

    out = []
    while len(out) < count:
        p = draw_params(rng, **kw)
        if 1.0 + 1e-6 < threshold_n(p) < 1e6:
            out.append(p)
    return out


def interior_start(rng: np.random.Generator, params: ModelParams, formulation: str = "full") -> np.ndarray:
    """Random positive state inside the invariant region.

    Each component is the equilibrium scale times a log-uniform factor in
    [0.1, 10].  Starts with populations orders of magnitude away from
    equilibrium push fauna to exp(-1e4) and below, and the return from such
    depths takes far longer than the relaxation time, so the draw stays
    within a decade of the attractor.  The reduced formulation gets
    (H_D, F_W) with H_W = m H_D implied.
    """
    from ecodyn.equilibria import Kind, equilibria_all
    from ecodyn.model import region_bounds

    eqs = {e.kind: np.asarray(e.state, dtype=float) for e in equilibria_all(params)}
    scale = eqs.get(Kind.COEXISTENCE)
    if scale is None:
        humans = eqs.get(Kind.HUMAN_ONLY, np.ones(3))
        fauna = (1 - params.anthropisation) * params.carrying_capacity
        scale = np.array([max(humans[0], 1.0), fauna, max(humans[2], 1.0)])
    bounds = region_bounds(params)
    while True:
        state = scale * 10 ** rng.uniform(-1, 1, 3)
        if formulation == "reduced":
            state[2] = params.m * state[0]
        if bounds.contains(state):
            return state[:2] if formulation == "reduced" else state
