"""Independent reference values for experiment checks.

Everything here is computed without the solver: closed forms where they
exist, otherwise plain cumulative-sum simulation or a deterministic ODE
integrator.  Experiments compare their output against these routes, so
nothing in this module may import from the solver or mean-field code.
"""
from __future__ import annotations

import math

import numpy as np

from ..errors import InvalidArgumentError
from ..rng import RngKey
from ..segments import TimeGrid

__all__ = [
    "halfline_reflection_moments",
    "simulate_folded_paths",
    "delay_ode_first_interval",
    "delay_ode_mean",
]


def halfline_reflection_moments(horizon: float) -> dict[str, float]:
    """Exact terminal moments for driftless unit reflection at zero.

    The reflected state has the law of |W(T)|; the compensating process
    is its local time at zero, whose mean equals E|W(T)|.
    """
    if horizon <= 0.0:
        raise InvalidArgumentError(f"horizon must be positive, got {horizon}")
    half_normal_mean = math.sqrt(2.0 * horizon / math.pi)
    return {
        "mean": half_normal_mean,
        "second_moment": horizon,
        "local_time_mean": half_normal_mean,
    }


def simulate_folded_paths(
    key: RngKey,
    grid: TimeGrid,
    n_paths: int,
    batch: int = 65536,
) -> tuple[np.ndarray, np.ndarray]:
    """Terminal |W(T)| and its local time, by direct path folding.

    Uses the identity L(T) = |W(T)| - sum sgn(W(t_k)) dW(t_k), evaluated
    on the same grid; no projection scheme is involved, which makes this
    an independent check on reflection output.  Returns two arrays of
    length ``n_paths``.
    """
    if n_paths <= 0:
        raise InvalidArgumentError(f"n_paths must be positive, got {n_paths}")
    if batch <= 0:
        raise InvalidArgumentError(f"batch must be positive, got {batch}")
    terminal = np.empty(n_paths, dtype=np.float64)
    local_time = np.empty(n_paths, dtype=np.float64)
    root_dt = math.sqrt(grid.dt)
    done = 0
    block = 0
    while done < n_paths:
        take = min(batch, n_paths - done)
        gen = key.child(block).generator()
        dw = gen.standard_normal((take, grid.steps)) * root_dt
        w = np.cumsum(dw, axis=1)
        # sign is sampled at the left endpoint of each increment
        signs = np.sign(np.concatenate([np.zeros((take, 1)), w[:, :-1]], axis=1))
        abs_end = np.abs(w[:, -1])
        terminal[done:done + take] = abs_end
        local_time[done:done + take] = abs_end - np.sum(signs * dw, axis=1)
        done += take
        block += 1
    return terminal, local_time


def delay_ode_first_interval(coupling: float, times: np.ndarray) -> np.ndarray:
    """Mean flow before the delayed feedback activates.

    With unit history the mean obeys m' = -m + coupling on the first
    delay interval, giving coupling + (1 - coupling) * exp(-t).
    """
    t = np.asarray(times, dtype=np.float64)
    if np.any(t < 0.0):
        raise InvalidArgumentError("times must be nonnegative")
    return coupling + (1.0 - coupling) * np.exp(-t)


def delay_ode_mean(coupling: float, grid: TimeGrid, refine: int = 20) -> np.ndarray:
    """Method-of-steps integration of m' = -m + coupling * m(t - r0).

    History is identically 1 on [-r0, 0].  Integrates with Heun steps on
    a grid refined ``refine``-fold so every delayed lookup lands on a
    stored node; returns the values at the coarse grid times 0..horizon
    (``grid.steps + 1`` entries).
    """
    if refine < 1:
        raise InvalidArgumentError(f"refine must be at least 1, got {refine}")
    h = grid.dt / refine
    n_fine = grid.steps * refine
    lag = grid.delay_steps * refine
    # storage covers the history interval so delayed lookups are plain indexing
    values = np.empty(lag + n_fine + 1, dtype=np.float64)
    values[: lag + 1] = 1.0

    def rate(m: float, delayed: float) -> float:
        return -m + coupling * delayed

    if lag == 0:
        # degenerate delay: the equation is a plain linear ODE
        for j in range(n_fine):
            k1 = rate(values[j], values[j])
            predictor = values[j] + h * k1
            k2 = rate(predictor, predictor)
            values[j + 1] = values[j] + 0.5 * h * (k1 + k2)
        return values[::refine].copy()

    for i in range(n_fine):
        j = lag + i
        # lag >= 1 keeps both delayed lookups on already-written nodes
        k1 = rate(values[j], values[j - lag])
        predictor = values[j] + h * k1
        k2 = rate(predictor, values[j + 1 - lag])
        values[j + 1] = values[j] + 0.5 * h * (k1 + k2)
    return values[lag::refine].copy()
