"""Path and mean-field coefficients, moduli of continuity, and the
regularisation helpers (window mollifier, Monte Carlo smoothing,
sup-norm cutoff).

A drift coefficient maps (t, segment) to a vector in R^d; a diffusion
coefficient maps to a d x m matrix.  Mean-field variants take an
empirical segment law as a third argument and only read it through its
``moment`` functionals, so they are decoupled from the law container.

Batch evaluation is the primitive: ``eval_batch(t, values, grid)``
receives the stacked windows of many particles, shape (N, window, d),
and returns (N, d) or (N, d, m).  Single-segment evaluation wraps it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from .errors import InvalidArgumentError
from .rng import RngKey
from .segments import Segment, TimeGrid, sup_norm

__all__ = [
    "LinearModulus",
    "LogModulus",
    "ModulusKappa",
    "eval_kappa",
    "PathCoefficient",
    "MeanFieldCoefficient",
    "FunctionCoefficient",
    "drift_zero",
    "drift_constant",
    "drift_linear_delay",
    "drift_log_lipschitz",
    "diffusion_constant",
    "diffusion_zero",
    "mf_drift_linear",
    "mf_drift_second_moment",
    "mf_diffusion_constant",
    "mollify_segment",
    "smooth_coefficient",
    "truncate_coefficient",
]


# ---------------------------------------------------------------------------
# Moduli of continuity
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LinearModulus:
    """kappa(x) = gain * x with gain > 0."""

    gain: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.gain) and self.gain > 0.0):
            raise InvalidArgumentError("linear modulus gain must be positive")


@dataclass(frozen=True)
class LogModulus:
    """kappa(x) = x*log(1/x) for 0 < x <= branch, extended affinely beyond.

    The branch point must lie in (0, 1/e]; the extension uses the
    one-sided derivative log(1/branch) - 1, which keeps the modulus
    concave and continuous (and strictly increasing when branch < 1/e).
    """

    branch: float = 0.25

    def __post_init__(self) -> None:
        if not (0.0 < self.branch <= math.exp(-1.0)):
            raise InvalidArgumentError("log modulus branch must lie in (0, 1/e]")


ModulusKappa = Union[LinearModulus, LogModulus]


def eval_kappa(kappa: ModulusKappa, x):
    """Evaluate the modulus; accepts scalars or arrays, requires x >= 0."""
    a = np.asarray(x, dtype=float)
    if np.any(a < 0.0) or not np.all(np.isfinite(a)):
        raise InvalidArgumentError("modulus argument must be finite and >= 0")
    if isinstance(kappa, LinearModulus):
        out = kappa.gain * a
    elif isinstance(kappa, LogModulus):
        b = kappa.branch
        safe = np.where(a > 0.0, a, 1.0)
        core = safe * np.log(1.0 / safe)
        slope = math.log(1.0 / b) - 1.0
        tail = b * math.log(1.0 / b) + slope * (a - b)
        out = np.where(a > b, tail, np.where(a > 0.0, core, 0.0))
    else:
        raise InvalidArgumentError(f"unknown modulus type {type(kappa).__name__}")
    return float(out) if np.ndim(x) == 0 else out


# ---------------------------------------------------------------------------
# Coefficient base classes
# ---------------------------------------------------------------------------


class PathCoefficient:
    """Base class for (t, segment) -> value coefficients.

    Attributes
    ----------
    dim : int
        State dimension d of the segments consumed.
    width : int or None
        Number of noise columns m for a diffusion coefficient, None for
        a drift.
    bound : float or None
        Known uniform bound on the output norm, when one exists.
    lipschitz_sq : float or None
        Known constant L with |f(t,z1)-f(t,z2)|^2 <= L*||z1-z2||_inf^2.
    """

    dim: int = 1
    width: int | None = None
    bound: float | None = None
    lipschitz_sq: float | None = None

    def eval_batch(self, t: float, values: np.ndarray, grid: TimeGrid) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, t: float, seg: Segment) -> np.ndarray:
        out = self.eval_batch(t, seg.values[None, :, :], seg.grid)
        return out[0]


class MeanFieldCoefficient:
    """Base class for (t, segment, law) -> value coefficients.

    The law argument may be any object exposing ``moment(name)`` for
    the functionals sup_sq, eval_end, and eval_delay.
    """

    dim: int = 1
    width: int | None = None
    bound: float | None = None

    def eval_batch(self, t: float, values: np.ndarray, law, grid: TimeGrid) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, t: float, seg: Segment, law) -> np.ndarray:
        out = self.eval_batch(t, seg.values[None, :, :], law, seg.grid)
        return out[0]


class FunctionCoefficient(PathCoefficient):
    """Adapter for a plain (t, Segment) -> array callable."""

    def __init__(
        self,
        fn: Callable[[float, Segment], np.ndarray],
        dim: int,
        width: int | None = None,
        bound: float | None = None,
        lipschitz_sq: float | None = None,
    ) -> None:
        self._fn = fn
        self.dim = int(dim)
        self.width = None if width is None else int(width)
        self.bound = bound
        self.lipschitz_sq = lipschitz_sq

    def eval_batch(self, t, values, grid):
        rows = [np.asarray(self._fn(t, Segment(grid, v)), dtype=float) for v in values]
        return np.stack(rows, axis=0)

    def __call__(self, t, seg):
        return np.asarray(self._fn(t, seg), dtype=float)


# ---------------------------------------------------------------------------
# Catalogue: path coefficients
# ---------------------------------------------------------------------------


class _ZeroDrift(PathCoefficient):
    def __init__(self, dim: int) -> None:
        self.dim = int(dim)
        self.bound = 0.0
        self.lipschitz_sq = 0.0

    def eval_batch(self, t, values, grid):
        return np.zeros((values.shape[0], self.dim))


class _ConstantDrift(PathCoefficient):
    def __init__(self, value) -> None:
        v = np.atleast_1d(np.asarray(value, dtype=float))
        if v.ndim != 1 or not np.all(np.isfinite(v)):
            raise InvalidArgumentError("constant drift needs a finite vector")
        self._v = v
        self.dim = v.size
        self.bound = float(np.linalg.norm(v))
        self.lipschitz_sq = 0.0

    def eval_batch(self, t, values, grid):
        return np.broadcast_to(self._v, (values.shape[0], self.dim)).copy()


class _LinearDelayDrift(PathCoefficient):
    """f(t, z) = -pull * z(0) + push * z(-r0), componentwise."""

    def __init__(self, pull: float, push: float, dim: int = 1) -> None:
        if not (math.isfinite(pull) and math.isfinite(push)):
            raise InvalidArgumentError("linear delay drift needs finite gains")
        self.pull = float(pull)
        self.push = float(push)
        self.dim = int(dim)
        self.lipschitz_sq = 2.0 * (pull * pull + push * push)

    def eval_batch(self, t, values, grid):
        return -self.pull * values[:, -1, :] + self.push * values[:, 0, :]


class _LogLipschitzDrift(PathCoefficient):
    """Scalar drift -sign(z(0)) * kappa(min(|z(0)|, 1)).

    Nonincreasing in z(0), hence one-sided Lipschitz with any positive
    modulus; bounded by kappa(1).
    """

    def __init__(self, kappa: ModulusKappa) -> None:
        self.kappa = kappa
        self.dim = 1
        self.bound = eval_kappa(kappa, 1.0)

    def eval_batch(self, t, values, grid):
        z = values[:, -1, 0]
        mag = eval_kappa(self.kappa, np.minimum(np.abs(z), 1.0))
        return (-np.sign(z) * mag)[:, None]


class _ConstantDiffusion(PathCoefficient):
    def __init__(self, matrix, dim: int | None = None, width: int | None = None) -> None:
        g = np.asarray(matrix, dtype=float)
        if g.ndim == 0:
            d = int(dim or 1)
            w = int(width or 1)
            g = float(g) * np.eye(d, w)
        if g.ndim != 2 or not np.all(np.isfinite(g)):
            raise InvalidArgumentError("constant diffusion needs a finite d x m matrix")
        self._g = g
        self.dim = g.shape[0]
        self.width = g.shape[1]
        self.bound = float(np.linalg.norm(g))
        self.lipschitz_sq = 0.0
        self._g.flags.writeable = False

    def eval_batch(self, t, values, grid):
        return np.broadcast_to(self._g, (values.shape[0],) + self._g.shape)


def drift_zero(dim: int = 1) -> PathCoefficient:
    return _ZeroDrift(dim)


def drift_constant(value) -> PathCoefficient:
    return _ConstantDrift(value)


def drift_linear_delay(pull: float, push: float, dim: int = 1) -> PathCoefficient:
    """Linear delay feedback; Lipschitz with L = 2*(pull^2 + push^2)."""
    return _LinearDelayDrift(pull, push, dim)


def drift_log_lipschitz(kappa: ModulusKappa | None = None) -> PathCoefficient:
    return _LogLipschitzDrift(kappa if kappa is not None else LogModulus())


def diffusion_constant(matrix, dim: int | None = None, width: int | None = None) -> PathCoefficient:
    return _ConstantDiffusion(matrix, dim, width)


def diffusion_zero(dim: int = 1, width: int = 1) -> PathCoefficient:
    return _ConstantDiffusion(np.zeros((dim, width)))


# ---------------------------------------------------------------------------
# Catalogue: mean-field coefficients
# ---------------------------------------------------------------------------


class _MeanFieldLinearDrift(MeanFieldCoefficient):
    """b(t, z, mu) = -(z(0) - coupling * <mu, eval_delay>)."""

    def __init__(self, coupling: float = 1.0, dim: int = 1) -> None:
        if not math.isfinite(coupling):
            raise InvalidArgumentError("mean-field coupling must be finite")
        self.coupling = float(coupling)
        self.dim = int(dim)

    def eval_batch(self, t, values, law, grid):
        anchor = np.asarray(law.moment("eval_delay"), dtype=float)
        return -(values[:, -1, :] - self.coupling * anchor)


class _MeanFieldSecondMomentDrift(MeanFieldCoefficient):
    """b(t, z, mu) = -z(0) / (1 + <mu, sup_sq>)."""

    def __init__(self, dim: int = 1) -> None:
        self.dim = int(dim)

    def eval_batch(self, t, values, law, grid):
        denom = 1.0 + float(law.moment("sup_sq"))
        return -values[:, -1, :] / denom


class _MeanFieldConstantDiffusion(MeanFieldCoefficient):
    def __init__(self, matrix, dim: int | None = None, width: int | None = None) -> None:
        inner = _ConstantDiffusion(matrix, dim, width)
        self._inner = inner
        self.dim = inner.dim
        self.width = inner.width
        self.bound = inner.bound

    def eval_batch(self, t, values, law, grid):
        return self._inner.eval_batch(t, values, grid)


def mf_drift_linear(coupling: float = 1.0, dim: int = 1) -> MeanFieldCoefficient:
    return _MeanFieldLinearDrift(coupling, dim)


def mf_drift_second_moment(dim: int = 1) -> MeanFieldCoefficient:
    return _MeanFieldSecondMomentDrift(dim)


def mf_diffusion_constant(matrix, dim: int | None = None, width: int | None = None) -> MeanFieldCoefficient:
    return _MeanFieldConstantDiffusion(matrix, dim, width)


# ---------------------------------------------------------------------------
# Window mollifier
# ---------------------------------------------------------------------------


def mollify_segment(zeta: Segment, n: int) -> Segment:
    """Averaged, rescaled copy of a segment.

    Each output sample at offset s is ``n`` times the integral over
    ``r in [s, min(s + 1/n, 1)]`` of ``scale * zeta(min(r, 0))``, where
    ``scale = min(||zeta||_inf, n) / ||zeta||_inf`` (taken as 1 for the
    zero segment).  The integrand is piecewise linear, so the integral
    is computed exactly on the refinement of the window grid by the
    integration endpoints and 0.

    The output sup-norm never exceeds ``min(||zeta||_inf, n)``.
    """
    if not (isinstance(n, (int, np.integer)) and n >= 1):
        raise InvalidArgumentError("mollifier index n must be an integer >= 1")
    grid = zeta.grid
    sup = sup_norm(zeta)
    scale = 1.0 if sup == 0.0 else min(sup, float(n)) / sup
    theta = grid.window_times()
    out = np.empty_like(zeta.values)
    width = 1.0 / n
    for j, s in enumerate(theta):
        hi = min(s + width, 1.0)
        pts = np.unique(np.concatenate([[s, hi], theta[(theta > s) & (theta < hi)]]))
        clipped = np.minimum(pts, 0.0)
        vals = np.empty((pts.size, zeta.dim))
        for c in range(zeta.dim):
            vals[:, c] = np.interp(clipped, theta, zeta.values[:, c])
        gaps = np.diff(pts)
        integral = 0.5 * np.sum(gaps[:, None] * (vals[:-1] + vals[1:]), axis=0)
        out[j] = n * scale * integral
    return Segment(grid, out)


# ---------------------------------------------------------------------------
# Monte Carlo smoothing
# ---------------------------------------------------------------------------


class _SmoothedCoefficient(PathCoefficient):
    def __init__(self, base: PathCoefficient, n: int, mc_samples: int, key: RngKey) -> None:
        self._base = base
        self._n = int(n)
        self._mc = int(mc_samples)
        self._key = key
        self._cache: dict[tuple[int, float, int], np.ndarray] = {}
        self.dim = base.dim
        self.width = base.width
        self.bound = base.bound

    def _perturbations(self, grid: TimeGrid, dim: int) -> np.ndarray:
        ck = (grid.delay_steps, grid.dt, dim)
        hit = self._cache.get(ck)
        if hit is not None:
            return hit
        gen = self._key.child(grid.delay_steps, dim).generator()
        m0 = grid.delay_steps
        steps = gen.standard_normal((self._mc, m0, dim)) * math.sqrt(grid.dt)
        walk = np.zeros((self._mc, m0 + 1, dim))
        np.cumsum(steps, axis=1, out=walk[:, 1:, :])
        pert = walk / self._n
        pert.flags.writeable = False
        self._cache[ck] = pert
        return pert

    def eval_batch(self, t, values, grid):
        pert = self._perturbations(grid, values.shape[2])
        nbatch = values.shape[0]
        rows = []
        for i in range(nbatch):
            smooth = mollify_segment(Segment(grid, values[i]), self._n).values
            stacked = smooth[None, :, :] + pert
            outs = self._base.eval_batch(t, stacked, grid)
            rows.append(np.mean(outs, axis=0))
        return np.stack(rows, axis=0)


def smooth_coefficient(
    f: PathCoefficient, n: int, mc_samples: int, rng_stream: RngKey
) -> PathCoefficient:
    """Monte Carlo smoothing of a path coefficient.

    Evaluates the base coefficient at the mollified segment plus
    ``1/n`` times an auxiliary Brownian path on the delay window,
    averaged over ``mc_samples`` paths drawn once per grid from the
    given stream.  Deterministic for a fixed stream; a bound on the
    base coefficient is inherited unchanged.
    """
    if not (isinstance(n, (int, np.integer)) and n >= 1):
        raise InvalidArgumentError("smoothing index n must be an integer >= 1")
    if not (isinstance(mc_samples, (int, np.integer)) and mc_samples >= 1):
        raise InvalidArgumentError("mc_samples must be an integer >= 1")
    return _SmoothedCoefficient(f, n, mc_samples, rng_stream)


# ---------------------------------------------------------------------------
# Sup-norm cutoff
# ---------------------------------------------------------------------------


class _TruncatedCoefficient(PathCoefficient):
    def __init__(self, base: PathCoefficient, radius: float, ramp: float) -> None:
        self._base = base
        self.radius = float(radius)
        self.ramp = float(ramp)
        self.dim = base.dim
        self.width = base.width
        self.bound = base.bound

    def _weights(self, values: np.ndarray) -> np.ndarray:
        sups = np.max(np.linalg.norm(values, axis=2), axis=1)
        return np.clip(1.0 - (sups - self.radius) / self.ramp, 0.0, 1.0)

    def eval_batch(self, t, values, grid):
        h = self._weights(values)
        out = self._base.eval_batch(t, values, grid)
        shape = (-1,) + (1,) * (out.ndim - 1)
        return out * h.reshape(shape)


def truncate_coefficient(f: PathCoefficient, radius: float, ramp: float) -> PathCoefficient:
    """Multiply a coefficient by the sup-norm cutoff
    ``h(z) = clip(1 - (||z||_inf - radius)/ramp, 0, 1)``.

    ``h`` is 1 inside the radius, 0 beyond radius + ramp, and
    ``1/ramp``-Lipschitz in the sup-norm in between.
    """
    if not (math.isfinite(radius) and radius >= 0.0):
        raise InvalidArgumentError("cutoff radius must be finite and >= 0")
    if not (math.isfinite(ramp) and ramp > 0.0):
        raise InvalidArgumentError("cutoff ramp must be finite and positive")
    return _TruncatedCoefficient(f, radius, ramp)
