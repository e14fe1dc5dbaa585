import math

import numpy as np
import pytest

from uavnoma.model import DesignPoint, SchemeKind, tau_length
from uavnoma.scenario import ScenarioParams, generate_scenario


def random_point(s, scheme, rng, floor=1e-3):
    """A random feasible design point, covering the cell."""
    prm = s.params
    n_tau = tau_length(s, SchemeKind(scheme))
    tau = rng.dirichlet(np.ones(n_tau)) if n_tau > 1 else np.ones(1)
    tau = np.maximum(tau, floor)
    tau /= tau.sum()
    p = np.maximum(rng.dirichlet(np.ones(s.num_users)), floor)
    p = p / p.sum() * prm.total_power
    R = prm.cell_radius
    b_lo = max(prm.beamwidth_min, math.atan(R / prm.altitude_max))
    beam = rng.uniform(b_lo, min(prm.beamwidth_max, 1.5))
    a_lo = max(prm.altitude_min, R / math.tan(beam))
    alt = rng.uniform(a_lo, prm.altitude_max)
    return DesignPoint(tau, p, alt**2, beam**2)


@pytest.fixture(scope="session")
def scen20():
    return generate_scenario(ScenarioParams(seed=0))


@pytest.fixture(scope="session")
def scen2():
    return generate_scenario(ScenarioParams(seed=0, num_users=2))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
