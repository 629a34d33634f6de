import numpy as np
import pytest

from gaswarm.gas import GasConstants, Instance, rest_state, toy_station


def random_toy_instance(rng: np.random.Generator, horizon: int = 2) -> Instance:
    """Loose random instance on the toy station: balanced flows, random start."""
    net = toy_station()
    flows = np.empty((3, horizon))
    for t in range(horizon):
        n, s = rng.uniform(-600, -20, size=2)
        flows[:, t] = (-(n + s), n, s)
    pressures = rng.uniform(38.0, 72.0, size=(3, horizon))
    constants = GasConstants(temperature=rng.uniform(278, 293), norm_density=rng.uniform(0.78, 0.84),
                             molar_mass=rng.uniform(17, 19))
    state = rest_state(net, rng.uniform(40, 70), mode=net.modes[rng.integers(4)].id,
                       constants=constants)
    return Instance(flows, pressures, state, 1800.0, horizon)


@pytest.fixture
def toy():
    return toy_station()


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
