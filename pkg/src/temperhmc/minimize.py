"""Fast inertial energy minimiser.

Single velocity Verlet steps with an adaptive time step: after a downhill
step dt grows by a fixed increment; after an uphill step the momenta are
zeroed, the state reverts to the saved best, and dt shrinks by a fixed
factor.  Related to FIRE, but without FIRE's velocity re-projection: the
momentum direction is never re-normalised, only reset.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NonFiniteEnergy


@dataclass
class RMinConfig:
    n_steps: int = 2000
    dt0: float = 0.1
    dt_increment: float = 0.05
    dt_factor: float = 0.95
    energy_tol: float = 1e-10       # stop once E drops below this
    stall_rel_tol: float = 1e-12    # ... or improvement stalls for stall_window steps
    stall_window: int = 100


@dataclass
class RMinResult:
    w: np.ndarray
    energy: float
    n_steps: int
    trace: list = field(default_factory=list)   # (step, best energy, dt)


def rmin(w0, energy_fn, grad_fn, cfg: RMinConfig = None) -> RMinResult:
    """Minimise energy_fn from w0; returns the best state seen.

    Deterministic: identical (w0, cfg, energy_fn) give identical traces.
    """
    cfg = cfg or RMinConfig()
    w = np.array(w0, dtype=float)
    p = np.zeros_like(w)
    e = energy_fn(w)
    if not np.isfinite(e):
        raise NonFiniteEnergy(f"non-finite starting energy {e}")

    dt = cfg.dt0
    trace = []
    last_improve_e = e
    last_improve_step = 0
    g = grad_fn(w)
    steps_done = 0
    for step in range(cfg.n_steps):
        w_save, e_save, g_save = w.copy(), e, g
        # one Verlet step (mass 1)
        p_half = p - 0.5 * dt * g
        w = w + dt * p_half
        g_new = grad_fn(w)
        e_new = energy_fn(w)
        if np.isfinite(e_new) and e_new < e_save:
            p = p_half - 0.5 * dt * g_new
            g = g_new
            e = e_new
            dt += cfg.dt_increment
        else:
            p = np.zeros_like(w)
            w, e, g = w_save, e_save, g_save
            dt *= cfg.dt_factor
        trace.append((step, e, dt))
        steps_done = step + 1
        if e < cfg.energy_tol:
            break
        if e < last_improve_e * (1.0 - cfg.stall_rel_tol):
            last_improve_e = e
            last_improve_step = step
        elif step - last_improve_step >= cfg.stall_window:
            break
    return RMinResult(w, e, steps_done, trace)
