"""Single-temperature Hamiltonian Monte Carlo.

A trajectory draws momenta p_i ~ N(0, m_i * T), propagates (w, p) with
velocity Verlet for L steps, and accepts with log-probability
(U_old - U_new) / T where U = E + sum(p^2 / 2m).  Proposals leaving the
uniform prior box are rejected outright; non-finite energies or gradients
are treated as rejections so the chain stays valid.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import FailedToTune
from .network import PriorBox, in_support


@dataclass
class HmcConfig:
    temperature: float
    dt: float
    n_steps: int
    mass: np.ndarray | float = 1.0

    def __post_init__(self):
        if self.temperature <= 0 or self.dt <= 0 or self.n_steps < 1:
            raise ValueError("need T > 0, dt > 0, L >= 1")


@dataclass
class TrajectoryOutcome:
    accepted: bool
    w: np.ndarray
    energy: float          # potential energy of the returned state
    u_initial: float
    u_final: float
    log_accept: float      # (U_o - U_n) / T


def velocity_verlet(w, p, grad_fn, dt, n_steps, mass=1.0):
    """Kick-drift-kick integration of (w, p) for n_steps steps.

    Returns (w, p, ok); ok is False when a gradient went non-finite, in
    which case the trajectory must be counted as rejected.
    """
    w = np.array(w, dtype=float)
    p = np.array(p, dtype=float)
    g = grad_fn(w)
    if not np.all(np.isfinite(g)):
        return w, p, False
    for _ in range(n_steps):
        p -= 0.5 * dt * g
        w += dt * p / mass
        g = grad_fn(w)
        if not np.all(np.isfinite(g)):
            return w, p, False
        p -= 0.5 * dt * g
    return w, p, True


def hmc_trajectory(w, energy_fn, grad_fn, cfg: HmcConfig, rng,
                   box: PriorBox | None = None,
                   current_energy: float | None = None) -> TrajectoryOutcome:
    """One HMC proposal from w; returns the accepted or retained state."""
    T = cfg.temperature
    mass = cfg.mass
    e_old = energy_fn(w) if current_energy is None else current_energy
    p0 = rng.normal(0.0, np.sqrt(np.asarray(mass, dtype=float) * T), size=w.shape)
    u_old = e_old + float(np.sum(p0 * p0 / (2.0 * mass)))

    w_new, p_new, ok = velocity_verlet(w, p0, grad_fn, cfg.dt, cfg.n_steps, mass)
    log_u = np.log(rng.uniform())
    if not ok:
        return TrajectoryOutcome(False, w, e_old, u_old, np.inf, -np.inf)

    e_new = energy_fn(w_new)
    if not np.isfinite(e_new):
        return TrajectoryOutcome(False, w, e_old, u_old, np.inf, -np.inf)
    u_new = e_new + float(np.sum(p_new * p_new / (2.0 * mass)))
    alpha = (u_old - u_new) / T

    inside = box is None or in_support(w_new, box)
    if inside and log_u < alpha:
        return TrajectoryOutcome(True, w_new, e_new, u_old, u_new, alpha)
    return TrajectoryOutcome(False, w, e_old, u_old, u_new, alpha)


@dataclass
class StepSizeController:
    """Multiplicative step-size tuner targeting acceptance in (0.6, 0.7)."""

    dt: float
    band: tuple[float, float] = (0.6, 0.7)
    probe_batch: int = 20
    grow: float = 1.1
    shrink: float = 0.9
    # near a hard prior-box wall the workable dt can be orders of magnitude
    # below dt0, so allow a long geometric descent before giving up
    max_rounds: int = 200


def measure_acceptance(w, energy_fn, grad_fn, cfg: HmcConfig, rng, box,
                       n_probe: int) -> float:
    """Acceptance rate of n_probe probe trajectories started from a copy of w.

    Probe outcomes never feed back into the main chain.
    """
    state = np.array(w, dtype=float)
    e = energy_fn(state)
    accepted = 0
    for _ in range(n_probe):
        out = hmc_trajectory(state, energy_fn, grad_fn, cfg, rng, box, e)
        state, e = out.w, out.energy
        accepted += out.accepted
    return accepted / n_probe


def tune_step_size(controller: StepSizeController, w, energy_fn, grad_fn,
                   cfg: HmcConfig, rng, box: PriorBox | None = None) -> float:
    """Adjust dt until probe acceptance falls inside the target band.

    Raises FailedToTune when the round cap is hit outside the band.
    """
    lo, hi = controller.band
    dt = controller.dt
    rate = None
    for _ in range(controller.max_rounds):
        rate = measure_acceptance(w, energy_fn, grad_fn, replace(cfg, dt=dt),
                                  rng, box, controller.probe_batch)
        if rate > hi:
            dt *= controller.grow
        elif rate < lo:
            dt *= controller.shrink
        else:
            controller.dt = dt
            return dt
    raise FailedToTune(dt, rate)
