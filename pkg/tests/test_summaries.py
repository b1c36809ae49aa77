import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ffabc.md import HELIUM_EPSILON, HELIUM_SIGMA, LJParams, SimSettings, Trajectory, simulate_lj
from ffabc.summaries import (
    FeatureExtractionError,
    MissingSummary,
    MsdCurve,
    RdfCurve,
    SummaryVector,
    UnwrappedCoordinatesMissing,
    compute_boltzmann_series,
    compute_msd,
    compute_rdf,
    extract_rdf_features,
    kl_divergence,
    msd_slope,
    rdf_mean,
    read_rdf_file,
    summary_distance,
    write_rdf_file,
)
from ffabc.units import BOLTZMANN, parse_quantity


def _traj(positions, box, times=None, potential=None, kinetic=None, unwrapped=None, pv=None):
    positions = np.asarray(positions, dtype=float)
    f, n = positions.shape[:2]
    return Trajectory(
        times=np.arange(f, dtype=float) if times is None else np.asarray(times, dtype=float),
        positions=positions,
        velocities=np.zeros_like(positions),
        potential=np.zeros((f, n)) if potential is None else np.asarray(potential, dtype=float),
        kinetic=np.zeros((f, n)) if kinetic is None else np.asarray(kinetic, dtype=float),
        pv_term=np.zeros(f) if pv is None else np.asarray(pv, dtype=float),
        box_length=box,
        unwrapped=None if unwrapped is None else np.asarray(unwrapped, dtype=float),
    )


# ---------------------------------------------------------------------------
# RDF


def test_rdf_single_pair():
    traj = _traj([[[1.0, 1.0, 1.0], [1.37, 1.0, 1.0]]], box=4.0)
    rdf = compute_rdf(traj, n_bins=20, r_max=2.0)
    k = int(0.37 / 0.1)
    assert rdf.g[k] > 0
    assert np.count_nonzero(rdf.g) == 1


def test_rdf_ideal_gas():
    s = SimSettings(n_particles=216, box_length=3.0, temperature=300.0, n_steps=4000, n_equilibration=0,
                    record_every=40, cutoff=1.0, thermostat_damping=None)
    x0 = np.random.default_rng(3).uniform(0, 3.0, size=(216, 3))
    traj = simulate_lj(LJParams(HELIUM_SIGMA, 0.0), s, initial_positions=x0)
    rdf = compute_rdf(traj, n_bins=15, r_max=1.5)
    sel = rdf.r > 0.2 * traj.box_length
    assert np.abs(rdf.g[sel] - 1.0).max() < 0.1


def _reference_rdf(traj, n_bins, r_max):
    # straightforward double loop, independent of the numba kernel
    edges = np.linspace(0, r_max, n_bins + 1)
    counts = np.zeros(n_bins)
    L = traj.box_length
    for x in traj.positions:
        d = x[:, None, :] - x[None, :, :]
        d -= L * np.round(d / L)
        r = np.sqrt((d**2).sum(-1))[~np.eye(len(x), dtype=bool)]
        counts += np.histogram(r, edges)[0]
    counts /= traj.n_frames
    rho = traj.n_particles / L**3
    return counts / (traj.n_particles * rho * 4 / 3 * np.pi * (edges[1:] ** 3 - edges[:-1] ** 3))


def test_rdf_matches_reference(small_liquid):
    traj = simulate_lj(LJParams(HELIUM_SIGMA, HELIUM_EPSILON), small_liquid)
    rdf = compute_rdf(traj, 60, traj.box_length / 2)
    np.testing.assert_allclose(rdf.g, _reference_rdf(traj, 60, traj.box_length / 2), rtol=1e-12)


def test_rdf_liquid_peak(liquid):
    # At rho sigma^3 = 0.8 the first peak sits near 1.064 sigma, a little
    # inside the pair minimum; the 0.7 liquid keeps it within a few percent.
    s = liquid.with_(n_steps=4000, cutoff=0.6, box_length=(125 / (0.7 / HELIUM_SIGMA**3)) ** (1 / 3))
    traj = simulate_lj(LJParams(HELIUM_SIGMA, HELIUM_EPSILON), s)
    rdf = compute_rdf(traj, 100, traj.box_length / 2)
    feats = extract_rdf_features(rdf)
    assert feats["S8"] == pytest.approx(2 ** (1 / 6) * HELIUM_SIGMA, rel=0.05)


def test_rdf_range_checked():
    traj = _traj([[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]], box=2.0)
    with pytest.raises(ValueError):
        compute_rdf(traj, 10, 1.5)


# ---------------------------------------------------------------------------
# MSD


def test_msd_stationary():
    x = np.tile(np.random.default_rng(0).uniform(0, 2, (1, 5, 3)), (10, 1, 1))
    msd = compute_msd(_traj(x, 2.0, unwrapped=x))
    assert np.all(msd.msd == 0)


def test_msd_ballistic():
    v = np.array([0.3, -0.1, 0.2])
    t = np.arange(11) * 0.5
    xu = (t[:, None] * v)[:, None, :]
    msd = compute_msd(_traj(np.mod(xu, 5.0), 5.0, times=t, unwrapped=xu))
    np.testing.assert_allclose(msd.msd, (v @ v) * msd.t**2, rtol=1e-12)


def test_msd_random_walk():
    rng = np.random.default_rng(1)
    s2, dt = 0.01, 0.2
    steps = rng.normal(0, math.sqrt(s2), size=(400, 200, 3))
    xu = np.cumsum(steps, axis=0)
    msd = compute_msd(_traj(np.mod(xu, 10.0), 10.0, times=np.arange(400) * dt, unwrapped=xu))
    assert msd_slope(msd) == pytest.approx(3 * s2 / dt, rel=0.10)


def test_msd_needs_unwrapped():
    with pytest.raises(UnwrappedCoordinatesMissing):
        compute_msd(_traj(np.zeros((3, 2, 3)), 1.0))


def test_slope_of_exact_line():
    d = parse_quantity("1.3e-5 cm^2/s", "diffusion")
    t = np.linspace(0, 10, 50)
    assert msd_slope(MsdCurve(t, 6 * d * t)) == pytest.approx(6 * d, rel=1e-12)
    assert msd_slope(MsdCurve(t, np.full_like(t, 3.0))) == 0.0


def test_slope_closed_form():
    rng = np.random.default_rng(2)
    t = np.linspace(0, 5, 40)
    y = 0.7 * t + rng.normal(0, 0.05, t.size)
    window = (1.0, 4.0)
    sel = (t >= 1.0) & (t <= 4.0)
    A = np.column_stack([np.ones(sel.sum()), t[sel]])
    beta = np.linalg.solve(A.T @ A, A.T @ y[sel])
    assert msd_slope(MsdCurve(t, y), window) == pytest.approx(beta[1], abs=1e-12)


# ---------------------------------------------------------------------------
# features


def _triangle():
    r = np.round(np.arange(0.01, 1.0, 0.01), 10)
    g = np.interp(r, [0.0, 0.2, 0.3, 0.4, 1.0], [0.0, 0.0, 2.5, 0.0, 0.0])
    return RdfCurve(r, g, "O-O")


def test_triangle_features():
    c = _triangle()
    f = extract_rdf_features(c)
    # extrema sit on grid nodes, so recovery is exact
    assert f["S8"] == pytest.approx(0.3, abs=1e-12)
    assert f["S7"] == pytest.approx(2.5, abs=1e-12)
    assert f["S5"] == pytest.approx(0.4, abs=1e-12)
    assert f["S6"] == pytest.approx(np.mean(c.g))
    assert f["S4"] == pytest.approx(0.25, abs=1e-12)


def test_oh_curve_gives_first_three():
    c = _triangle()
    f = extract_rdf_features(RdfCurve(c.r, c.g, "O-H"))
    assert f.names == ("S1", "S2", "S3")


def test_mean_of_flat_curve():
    r = np.linspace(0.1, 1, 50)
    assert rdf_mean(RdfCurve(r, np.ones_like(r))) == 1.0


def test_flat_curve_has_no_maximum():
    r = np.linspace(0.1, 1, 50)
    with pytest.raises(FeatureExtractionError):
        extract_rdf_features(RdfCurve(r, np.ones_like(r)))


@given(st.floats(0.25, 0.5), st.floats(1.3, 4.0), st.floats(0.05, 0.15))
def test_constructed_extrema_within_grid_spacing(r_peak, height, width):
    r = np.arange(0.002, 1.2, 0.004)
    r_min = r_peak + width
    g = np.interp(r, [0, r_peak - width, r_peak, r_min, r_min + 0.1, 1.2],
                  [0, 0, height, 0.5, 1.0, 1.0])
    f = extract_rdf_features(RdfCurve(r, g))
    h = 0.004
    assert abs(f["S8"] - r_peak) <= h
    assert abs(f["S5"] - r_min) <= h
    assert f["S7"] == pytest.approx(height, abs=height / width * h)


def test_rdf_file_roundtrip(tmp_path):
    c = _triangle()
    write_rdf_file(c, tmp_path / "g.dat", r_unit="A")
    back = read_rdf_file(tmp_path / "g.dat")
    np.testing.assert_allclose(back.r, c.r, rtol=1e-9)
    np.testing.assert_allclose(back.g, c.g, rtol=1e-9)
    assert back.species_pair == "O-O"


def test_rdf_file_needs_units(tmp_path):
    (tmp_path / "g.dat").write_text("# pair: O-O\n0.1 0\n0.2 1\n0.3 1\n")
    with pytest.raises(ValueError, match="r_unit"):
        read_rdf_file(tmp_path / "g.dat")


# ---------------------------------------------------------------------------
# Boltzmann factors and distances


def test_boltzmann_zero_enthalpy():
    traj = _traj(np.zeros((4, 3, 3)), 1.0)
    assert np.all(compute_boltzmann_series(traj, 300.0).values == 1.0)


def test_boltzmann_single_particle():
    kt = BOLTZMANN * 300.0
    traj = _traj(np.zeros((1, 1, 3)), 1.0, kinetic=[[kt]])
    assert compute_boltzmann_series(traj, 300.0).values[0] == pytest.approx(math.exp(-1))


def test_boltzmann_two_particles():
    T = 50.0
    beta = 1 / (BOLTZMANN * T)
    u = [[0.2, -0.3]]
    k = [[0.1, 0.4]]
    pv = [0.06]
    h1, h2 = 0.2 + 0.1 + 0.03, -0.3 + 0.4 + 0.03
    traj = _traj(np.zeros((1, 2, 3)), 1.0, potential=u, kinetic=k, pv=pv)
    expected = (math.exp(-beta * h1) + math.exp(-beta * h2)) / 2
    assert compute_boltzmann_series(traj, T).values[0] == pytest.approx(expected, rel=1e-12)


def test_kl_identical_is_zero():
    x = np.random.default_rng(0).normal(size=500)
    assert kl_divergence(x, x) == 0.0


def test_kl_gaussian_closed_form():
    rng = np.random.default_rng(0)
    a, b = rng.normal(0, 1, 200_000), rng.normal(1, 1, 200_000)
    assert kl_divergence(a, b) == pytest.approx(0.5, rel=0.15)


def test_kl_nonnegative():
    rng = np.random.default_rng(4)
    for _ in range(100):
        a = rng.normal(rng.uniform(-1, 1), rng.uniform(0.5, 2), 50)
        b = rng.normal(rng.uniform(-1, 1), rng.uniform(0.5, 2), 80)
        assert kl_divergence(a, b) >= 0


def test_summary_distance_examples():
    a = SummaryVector(("S1", "S2"), (1.0, 2.0))
    b = SummaryVector(("S1", "S2"), (3.0, 2.0))
    assert summary_distance(a, b, [1, 2]) == 1.0
    assert summary_distance(a, a, [1, 2]) == 0.0
    with pytest.raises(MissingSummary):
        summary_distance(a, b, [3])


def test_summary_distance_scalar_oracle():
    rng = np.random.default_rng(5)
    for _ in range(20):
        va, vb = rng.normal(size=9), rng.normal(size=9)
        a = SummaryVector(tuple(f"S{i}" for i in range(1, 10)), va)
        b = SummaryVector(tuple(f"S{i}" for i in range(1, 10)), vb)
        total = 0.0
        for i in range(9):
            total += abs(float(va[i]) - float(vb[i]))
        assert summary_distance(a, b, range(1, 10)) == pytest.approx(total / 9, abs=1e-12)


def test_nonfinite_distance_is_inf():
    a = SummaryVector(("S4",), (float("nan"),))
    b = SummaryVector(("S4",), (1.0,))
    assert summary_distance(a, b, [4]) == math.inf
