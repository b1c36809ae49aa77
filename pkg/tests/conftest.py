import numpy as np
import pytest
from hypothesis import settings

from ffabc.md import HELIUM_SIGMA, SimSettings
from ffabc.models import GaussianToyModel, simulate_gaussian_toy
from ffabc.summaries import SummaryVector

settings.register_profile("ffabc", deadline=None, max_examples=40, derandomize=True)
settings.load_profile("ffabc")

LIQUID_DENSITY = 0.8 / HELIUM_SIGMA**3


@pytest.fixture
def toy():
    """Gaussian-toy model, its observed summary and the conjugate posterior (mean, std)."""
    x = simulate_gaussian_toy(2.0, 100, 12345)
    obs = SummaryVector(("mean",), (float(x.mean()),))
    return GaussianToyModel(100), obs, (float(x.mean()), 0.1)


@pytest.fixture
def small_liquid():
    """A cheap dense-fluid state point for structure tests (64 atoms)."""
    return SimSettings.at_density(
        64, LIQUID_DENSITY, temperature=12.0, dt=5.0, n_steps=400, n_equilibration=200,
        record_every=10, cutoff=0.5,
    )


def conjugate_posterior(xbar: float, n: int = 100) -> tuple[float, float]:
    return xbar, 1.0 / np.sqrt(n)


@pytest.fixture
def liquid():
    """The desk-scale calibration state point: 125 atoms, reduced density 0.8, 12 K."""
    return SimSettings.at_density(
        125, LIQUID_DENSITY, temperature=12.0, dt=5.0, n_steps=2000, n_equilibration=500, record_every=10,
    )


# ---------------------------------------------------------------------------
# acceptance report: one line per criterion in the terminal summary

ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def criterion():
    def record(number: int, passed: bool, detail: str) -> bool:
        ACCEPTANCE[number] = (bool(passed), detail)
        print(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
