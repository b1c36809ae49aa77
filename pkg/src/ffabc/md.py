"""Desk-scale Lennard-Jones molecular dynamics.

NVT velocity-Verlet integration of a monatomic Lennard-Jones fluid in a cubic
periodic box, with an optional weak-coupling (Berendsen) velocity-rescaling
thermostat. Pair interactions are truncated at the cutoff without shifting.
Units are nm, ps, zJ and yg (see :mod:`ffabc.units`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numba
import numpy as np

from .units import BOLTZMANN, FS_PER_PS

HELIUM_MASS = 6.64  # yg, i.e. 6.64e-6 ag
HELIUM_SIGMA = 0.2556  # nm
HELIUM_EPSILON = 0.141  # zJ
# 1000 atoms in a 27.3 nm cube
HELIUM_NUMBER_DENSITY = 1000 / 27.3**3


class SimulationBlowup(RuntimeError):
    """Raised when the integration produces non-finite or unusable state."""

    def __init__(self, step: int, reason: str):
        super().__init__(f"simulation blew up at step {step}: {reason}")
        self.step = step
        self.reason = reason


@dataclass(frozen=True)
class LJParams:
    sigma: float  # nm
    epsilon: float  # zJ

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        # epsilon = 0 is allowed: it is the ideal gas used in tests
        if not self.epsilon >= 0:
            raise ValueError(f"epsilon must be non-negative, got {self.epsilon}")

    def as_array(self) -> np.ndarray:
        return np.array([self.sigma, self.epsilon])


@dataclass(frozen=True)
class SimSettings:
    """Computational setup of one forward simulation.

    The defaults are the desk-scale helium setup: 125 atoms at the number
    density of 1000 atoms in a 27.3 nm box, 300 K, 2 fs steps.
    """

    n_particles: int = 125
    box_length: float = (125 / HELIUM_NUMBER_DENSITY) ** (1 / 3)
    dt: float = 2.0  # fs
    n_steps: int = 10_000
    record_every: int = 10
    temperature: float = 300.0
    cutoff: float = 0.639
    thermostat_damping: float | None = 2.0  # ps; None switches the thermostat off
    particle_mass: float = HELIUM_MASS
    rng_seed: int = 0
    n_equilibration: int = 1_000

    def __post_init__(self):
        if self.n_particles < 1:
            raise ValueError("n_particles must be >= 1")
        if not self.box_length > 0:
            raise ValueError("box_length must be positive")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.n_steps < 1 or self.record_every < 1:
            raise ValueError("n_steps and record_every must be >= 1")
        if self.n_equilibration < 0:
            raise ValueError("n_equilibration must be >= 0")
        if not 0 < self.cutoff <= self.box_length / 2:
            raise ValueError(
                f"cutoff {self.cutoff} must lie in (0, box_length/2 = {self.box_length / 2}]"
            )
        if self.thermostat_damping is not None and not self.thermostat_damping > 0:
            raise ValueError("thermostat_damping must be positive or None")
        if not self.particle_mass > 0:
            raise ValueError("particle_mass must be positive")

    @classmethod
    def at_density(cls, n_particles: int, number_density: float, **kw) -> "SimSettings":
        return cls(n_particles=n_particles, box_length=(n_particles / number_density) ** (1 / 3), **kw)

    def with_(self, **kw) -> "SimSettings":
        return replace(self, **kw)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Recorded frames of one run. Arrays are indexed ``[frame, particle, ...]``.

    ``times`` are in ps from the start of production. ``positions`` are wrapped
    into the box; ``unwrapped`` carries the continuous coordinates used for
    displacement analysis (``None`` for imported wrapped-only data).
    """

    times: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray
    potential: np.ndarray
    kinetic: np.ndarray
    pv_term: np.ndarray
    box_length: float
    unwrapped: np.ndarray | None = None
    pair_shift: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        f, n = self.positions.shape[:2]
        if self.times.shape != (f,):
            raise ValueError("times must have one entry per frame")
        if f > 1 and not np.all(np.diff(self.times) > 0):
            raise ValueError("frame times must strictly increase")
        for name in ("velocities", "unwrapped"):
            arr = getattr(self, name)
            if arr is not None and arr.shape != (f, n, 3):
                raise ValueError(f"{name} has shape {arr.shape}, expected {(f, n, 3)}")
        for name in ("potential", "kinetic"):
            if getattr(self, name).shape != (f, n):
                raise ValueError(f"{name} must be (frames, particles)")
        for arr in (self.times, self.positions, self.velocities, self.potential, self.kinetic, self.pv_term):
            arr.setflags(write=False)

    @property
    def n_frames(self) -> int:
        return self.positions.shape[0]

    @property
    def n_particles(self) -> int:
        return self.positions.shape[1]

    @property
    def volume(self) -> float:
        return self.box_length**3

    def total_energy(self, shifted: bool = False) -> np.ndarray:
        """Kinetic plus potential energy per frame.

        With ``shifted=True`` each interacting pair is counted with the potential
        shifted to zero at the cutoff, the quantity actually conserved by
        truncated-force dynamics.
        """
        e = self.kinetic.sum(axis=1) + self.potential.sum(axis=1)
        if shifted:
            if self.pair_shift is None:
                raise ValueError("trajectory carries no cutoff-shift data")
            e = e - self.pair_shift
        return e

    def momentum(self, mass: float) -> np.ndarray:
        return mass * self.velocities.sum(axis=1)

    def temperature(self, mass: float | None = None) -> np.ndarray:
        dof = max(3 * self.n_particles - 3, 1)
        return 2.0 * self.kinetic.sum(axis=1) / (dof * BOLTZMANN)

    def enthalpy(self) -> np.ndarray:
        """Per-particle enthalpy ``u_i + k_i + P V / N``, shape (frames, particles)."""
        return self.potential + self.kinetic + (self.pv_term / self.n_particles)[:, None]


def lj_pair_energy(r, params: LJParams, cutoff: float | None = None):
    """Pair energy ``4 eps ((sigma/r)^12 - (sigma/r)^6)``, zero beyond ``cutoff``."""
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise ValueError("pair distance must be positive (overlapping particles)")
    sr6 = (params.sigma / r) ** 6
    e = 4.0 * params.epsilon * (sr6 * sr6 - sr6)
    if cutoff is not None:
        e = np.where(r > cutoff, 0.0, e)
    return e if e.ndim else float(e)


@numba.njit(cache=True, nogil=True, fastmath=False)
def _forces(x, box, sigma, epsilon, rc2, forces, upot):
    """Fill ``forces`` and per-particle ``upot``; return (virial, n_pairs, ok)."""
    n = x.shape[0]
    forces[:] = 0.0
    upot[:] = 0.0
    virial = 0.0
    npairs = 0
    s2 = sigma * sigma
    half = 0.5 * box
    for i in range(n - 1):
        xi0 = x[i, 0]
        xi1 = x[i, 1]
        xi2 = x[i, 2]
        for j in range(i + 1, n):
            d0 = xi0 - x[j, 0]
            d1 = xi1 - x[j, 1]
            d2 = xi2 - x[j, 2]
            if d0 > half:
                d0 -= box
            elif d0 < -half:
                d0 += box
            if d1 > half:
                d1 -= box
            elif d1 < -half:
                d1 += box
            if d2 > half:
                d2 -= box
            elif d2 < -half:
                d2 += box
            r2 = d0 * d0 + d1 * d1 + d2 * d2
            if r2 < rc2:
                if r2 == 0.0:
                    return virial, npairs, False
                sr2 = s2 / r2
                sr6 = sr2 * sr2 * sr2
                e = 4.0 * epsilon * (sr6 * sr6 - sr6)
                # f_ij . r_ij
                rf = 24.0 * epsilon * (2.0 * sr6 * sr6 - sr6)
                fs = rf / r2
                forces[i, 0] += fs * d0
                forces[i, 1] += fs * d1
                forces[i, 2] += fs * d2
                forces[j, 0] -= fs * d0
                forces[j, 1] -= fs * d1
                forces[j, 2] -= fs * d2
                upot[i] += 0.5 * e
                upot[j] += 0.5 * e
                virial += rf
                npairs += 1
    ok = True
    for i in range(n):
        if not (math.isfinite(forces[i, 0]) and math.isfinite(forces[i, 1]) and math.isfinite(forces[i, 2])):
            ok = False
    return virial, npairs, ok


@numba.njit(cache=True, nogil=True)
def _run(
    x, xu, v, box, sigma, epsilon, rc, mass, dt, n_equil, n_steps, record_every,
    t_target, tau, kb,
    rec_x, rec_xu, rec_v, rec_u, rec_k, rec_pv, rec_np,
):
    """Integrate in place. Returns (status, step): status 0 ok, 1 non-finite, 2 jump."""
    n = x.shape[0]
    rc2 = rc * rc
    forces = np.zeros_like(x)
    upot = np.zeros(n)
    dof = max(3 * n - 3, 1)
    virial, npairs, ok = _forces(x, box, sigma, epsilon, rc2, forces, upot)
    if not ok:
        return 1, 0
    total = n_equil + n_steps
    frame = 0
    half_dt_m = 0.5 * dt / mass
    max_move = 0.5 * box
    for step in range(total + 1):
        prod = step - n_equil
        if prod >= 0 and prod % record_every == 0:
            kin = 0.0
            for i in range(n):
                ki = 0.5 * mass * (v[i, 0] ** 2 + v[i, 1] ** 2 + v[i, 2] ** 2)
                rec_k[frame, i] = ki
                kin += ki
                rec_u[frame, i] = upot[i]
                for a in range(3):
                    rec_x[frame, i, a] = x[i, a]
                    rec_xu[frame, i, a] = xu[i, a]
                    rec_v[frame, i, a] = v[i, a]
            rec_pv[frame] = (2.0 * kin + virial) / 3.0
            rec_np[frame] = npairs
            frame += 1
        if step == total:
            break
        for i in range(n):
            for a in range(3):
                v[i, a] += half_dt_m * forces[i, a]
                dx = dt * v[i, a]
                if not math.isfinite(dx):
                    return 1, step + 1
                if abs(dx) > max_move:
                    return 2, step + 1
                xu[i, a] += dx
                xa = x[i, a] + dx
                xa -= box * math.floor(xa / box)
                if xa >= box:
                    xa -= box
                x[i, a] = xa
        virial, npairs, ok = _forces(x, box, sigma, epsilon, rc2, forces, upot)
        if not ok:
            return 1, step + 1
        kin = 0.0
        for i in range(n):
            for a in range(3):
                v[i, a] += half_dt_m * forces[i, a]
                kin += 0.5 * mass * v[i, a] * v[i, a]
        if tau > 0.0 and kin > 0.0:
            t_inst = 2.0 * kin / (dof * kb)
            lam2 = 1.0 + dt / tau * (t_target / t_inst - 1.0)
            if lam2 < 0.64:
                lam2 = 0.64
            elif lam2 > 1.5625:
                lam2 = 1.5625
            lam = math.sqrt(lam2)
            for i in range(n):
                for a in range(3):
                    v[i, a] *= lam
    return 0, total


def lattice_positions(n_particles: int, box_length: float) -> np.ndarray:
    """First ``n_particles`` sites of the smallest simple-cubic lattice filling the box."""
    side = math.ceil(round(n_particles ** (1 / 3), 9))
    a = box_length / side
    idx = np.arange(side)
    grid = np.stack(np.meshgrid(idx, idx, idx, indexing="ij"), axis=-1).reshape(-1, 3)
    return (grid[:n_particles] + 0.5) * a


def maxwell_boltzmann(n_particles: int, temperature: float, mass: float, rng) -> np.ndarray:
    """Velocities at ``temperature`` with the centre-of-mass motion removed."""
    scale = math.sqrt(BOLTZMANN * temperature / mass)
    v = rng.normal(0.0, scale, size=(n_particles, 3))
    v -= v.mean(axis=0)
    return v


def simulate_lj(
    params: LJParams,
    settings: SimSettings,
    initial_positions: np.ndarray | None = None,
    initial_velocities: np.ndarray | None = None,
) -> Trajectory:
    """Run one NVT simulation and return the recorded production frames.

    Raises
    ------
    SimulationBlowup
        If forces or coordinates become non-finite, or a particle moves more than
        half a box length within one step (the minimum image is then meaningless).
    """
    s = settings
    rng = np.random.default_rng(s.rng_seed)
    n = s.n_particles
    if initial_positions is None:
        x = lattice_positions(n, s.box_length)
    else:
        x = np.array(initial_positions, dtype=float).reshape(n, 3)
    if initial_velocities is None:
        v = maxwell_boltzmann(n, s.temperature, s.particle_mass, rng)
    else:
        v = np.array(initial_velocities, dtype=float).reshape(n, 3)
    x = np.mod(x, s.box_length)
    xu = x.copy()

    n_frames = s.n_steps // s.record_every + 1
    rec_x = np.empty((n_frames, n, 3))
    rec_xu = np.empty((n_frames, n, 3))
    rec_v = np.empty((n_frames, n, 3))
    rec_u = np.empty((n_frames, n))
    rec_k = np.empty((n_frames, n))
    rec_pv = np.empty(n_frames)
    rec_np = np.empty(n_frames, dtype=np.int64)
    dt = s.dt / FS_PER_PS
    tau = s.thermostat_damping if s.thermostat_damping is not None else 0.0

    status, step = _run(
        x, xu, v, float(s.box_length), float(params.sigma), float(params.epsilon), float(s.cutoff),
        float(s.particle_mass), dt, s.n_equilibration, s.n_steps, s.record_every,
        float(s.temperature), float(tau), BOLTZMANN,
        rec_x, rec_xu, rec_v, rec_u, rec_k, rec_pv, rec_np,
    )
    if status == 1:
        raise SimulationBlowup(step, "non-finite force or coordinate")
    if status == 2:
        raise SimulationBlowup(step, "particle displacement exceeded half the box in one step")

    v_rc = float(lj_pair_energy(s.cutoff, params))
    return Trajectory(
        times=np.arange(n_frames) * s.record_every * dt,
        positions=rec_x,
        velocities=rec_v,
        potential=rec_u,
        kinetic=rec_k,
        pv_term=rec_pv,
        box_length=float(s.box_length),
        unwrapped=rec_xu,
        pair_shift=rec_np * v_rc,
    )


# ---------------------------------------------------------------------------
# plain-text trajectory export

def write_trajectory(traj: Trajectory, path) -> None:
    """Write frames as blocks::

        # frame <k>
        N <n> box <L> time <t>
        x y z vx vy vz u k      (one line per particle, wrapped coordinates)
    """
    with open(path, "w") as fh:
        for f in range(traj.n_frames):
            fh.write(f"# frame {f}\n")
            fh.write(f"N {traj.n_particles} box {float(traj.box_length)!r} time {float(traj.times[f])!r}\n")
            block = np.column_stack(
                [traj.positions[f], traj.velocities[f], traj.potential[f], traj.kinetic[f]]
            )
            np.savetxt(fh, block, fmt="%.17g")


def read_trajectory(path) -> Trajectory:
    """Read the format of :func:`write_trajectory`. The result has no unwrapped coordinates."""
    lines = Path(path).read_text().splitlines()
    times, blocks = [], []
    box = None
    i = 0
    while i < len(lines):
        if lines[i].startswith("#") or not lines[i].strip():
            i += 1
            continue
        head = lines[i].split()
        if head[0] != "N":
            raise ValueError(f"line {i + 1}: expected frame header, got {lines[i]!r}")
        n = int(head[1])
        box = float(head[3])
        times.append(float(head[5]))
        blocks.append(np.loadtxt(lines[i + 1 : i + 1 + n], ndmin=2))
        i += 1 + n
    data = np.stack(blocks)
    return Trajectory(
        times=np.array(times),
        positions=data[:, :, 0:3],
        velocities=data[:, :, 3:6],
        potential=data[:, :, 6],
        kinetic=data[:, :, 7],
        pv_term=np.full(len(times), np.nan),
        box_length=box,
    )
