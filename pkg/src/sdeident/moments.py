"""First- and second-moment propagation for both SDE classes.

Two independent routes are public wherever the quantity solves a linear ODE:
a block/matrix exponential route and a fixed-step RK4 route. Each serves as
the other's oracle in the test suite.

Conventions: for additive models ``seconds`` holds the covariance V(t) with
V(0) = 0; for multiplicative models it holds the raw second moment
P(t) = E[X X^T] with P(0) = x0 x0^T.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._io import open_text_sink
from .exceptions import IndefiniteCovarianceError
from .linalg import matexp, unvec
from .models import (
    AdditiveSDE,
    MultiplicativeSDE,
    derive_additive,
    derive_multiplicative,
    require_valid,
)

__all__ = [
    "MomentCurve",
    "TransitionMoments",
    "mean_curve",
    "covariance_additive",
    "cross_covariance_additive",
    "second_moment_multiplicative",
    "transition_moments_additive",
    "moment_curve",
    "rk4_fixed",
    "DEFAULT_ODE_STEP",
]

# Fixed RK4 step: moments are smooth, fixed stepping keeps runs deterministic.
DEFAULT_ODE_STEP = 1e-3


@dataclass(frozen=True)
class TransitionMoments:
    """One-step Gaussian transition: ``x' ~ Normal(phi @ x, sigma)``."""

    phi: np.ndarray
    sigma: np.ndarray


@dataclass(frozen=True)
class MomentCurve:
    """Mean vectors and second-order matrices on an increasing time grid.

    ``seconds[i]`` is the covariance (additive) or raw second moment
    (multiplicative) at ``times[i]``. ``notes`` records computation
    fallbacks (e.g. a singular drift block forcing an ODE route).
    """

    times: np.ndarray
    means: np.ndarray
    seconds: np.ndarray
    notes: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "times", np.asarray(self.times, dtype=float))
        object.__setattr__(self, "means", np.asarray(self.means, dtype=float))
        object.__setattr__(self, "seconds", np.asarray(self.seconds, dtype=float))

    @property
    def d(self) -> int:
        return self.means.shape[1]

    def to_csv(self, path, full: bool = False) -> None:
        """Write ``time, mean_1..d, second_11, second_21, ...`` rows.

        Default emits the lower triangle of each second-moment matrix in
        column-major order; ``full=True`` emits all d^2 entries
        (column-major).
        """
        d = self.d
        if full:
            pairs = [(i, j) for j in range(d) for i in range(d)]
        else:
            pairs = [(i, j) for j in range(d) for i in range(j, d)]
        header = (
            ["time"]
            + [f"mean_{i + 1}" for i in range(d)]
            + [f"second_{i + 1}{j + 1}" for i, j in pairs]
        )
        lines = [",".join(header)]
        for t, mu, S in zip(self.times, self.means, self.seconds):
            row = [repr(float(t))]
            row += [repr(float(x)) for x in mu]
            row += [repr(float(S[i, j])) for i, j in pairs]
            lines.append(",".join(row))
        with open_text_sink(path) as fh:
            fh.write("\n".join(lines) + "\n")


def _check_times(times) -> np.ndarray:
    times = np.asarray(times, dtype=float).reshape(-1)
    if times.size == 0:
        raise ValueError("empty time grid")
    if not np.all(np.isfinite(times)):
        raise ValueError("non-finite time grid")
    if np.any(np.diff(times) <= 0):
        raise ValueError("time grid must be strictly increasing")
    if times[0] < 0:
        raise ValueError("times must be nonnegative")
    return times


def rk4_fixed(f, y0: np.ndarray, t0: float, t1: float, step: float) -> np.ndarray:
    """Classical RK4 with a fixed step, landing exactly on ``t1``."""
    y = np.array(y0, dtype=float)
    if t1 == t0:
        return y
    n = max(1, math.ceil((t1 - t0) / step))
    h = (t1 - t0) / n
    t = t0
    for _ in range(n):
        k1 = f(t, y)
        k2 = f(t + 0.5 * h, y + 0.5 * h * k1)
        k3 = f(t + 0.5 * h, y + 0.5 * h * k2)
        k4 = f(t + h, y + h * k3)
        y = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        t += h
    return y


def mean_curve(model, times) -> np.ndarray:
    """Mean trajectory ``e^{A t} x0`` (both classes share the mean ODE
    m' = A m)."""
    require_valid(model)
    times = _check_times(times)
    return np.stack([matexp(model.A, t) @ model.x0 for t in times])


def transition_moments_additive(model: AdditiveSDE, delta: float) -> TransitionMoments:
    """Exact one-step transition moments over a step of length ``delta``.

    ``phi = e^{A delta}``; ``sigma = int_0^delta e^{A s} G G^T e^{A^T s} ds``
    computed from the exponential of the block matrix ``[[A, H], [0, -A^T]]``
    (matrix fraction decomposition). ``sigma`` is symmetrized; eigenvalues in
    ``(-tol, 0)`` are clipped to zero, below ``-tol`` is an error (tol is
    1e-12 relative to the largest eigenvalue) -- that distinguishes round-off
    from a genuinely indefinite result.
    """
    require_valid(model)
    if delta <= 0:
        raise ValueError("delta must be positive")
    H = derive_additive(model).noise_cov
    tm = _transition_with_H(np.asarray(model.A, float), H, delta)
    phi, sigma = tm.phi, tm.sigma

    evals, evecs = np.linalg.eigh(sigma)
    tol = 1e-12 * max(1.0, float(evals[-1]))
    if evals[0] < -tol:
        raise IndefiniteCovarianceError(
            f"transition covariance indefinite: min eigenvalue {evals[0]:.3e}"
        )
    if evals[0] < 0:
        sigma = (evecs * np.clip(evals, 0.0, None)) @ evecs.T
        sigma = 0.5 * (sigma + sigma.T)
    return TransitionMoments(phi=phi, sigma=sigma)


def _lyapunov_grid(A, H, times, method, step):
    """V(t) solving V' = A V + V A^T + H, V(0) = 0, on the given grid."""
    d = A.shape[0]
    out = np.zeros((times.size, d, d))
    if method == "exp":
        V = np.zeros((d, d))
        prev = 0.0
        for i, t in enumerate(times):
            dt = t - prev
            if dt > 0:
                tm = _transition_with_H(A, H, dt)
                V = tm.phi @ V @ tm.phi.T + tm.sigma
                V = 0.5 * (V + V.T)
            out[i] = V
            prev = t
        return out
    if method == "ode":

        def rhs(_, y):
            V = y.reshape(d, d)
            dV = A @ V + V @ A.T + H
            return dV.reshape(-1)

        y = np.zeros(d * d)
        prev = 0.0
        for i, t in enumerate(times):
            y = rk4_fixed(rhs, y, prev, t, step)
            V = y.reshape(d, d)
            out[i] = 0.5 * (V + V.T)
            prev = t
        return out
    raise ValueError(f"unknown method {method!r}; use 'exp' or 'ode'")


def _transition_with_H(A, H, delta) -> TransitionMoments:
    d = A.shape[0]
    block = np.zeros((2 * d, 2 * d))
    block[:d, :d] = A
    block[:d, d:] = H
    block[d:, d:] = -A.T
    E = matexp(block, delta)
    phi = E[:d, :d]
    sigma = E[:d, d:] @ phi.T
    return TransitionMoments(phi=phi, sigma=0.5 * (sigma + sigma.T))


def covariance_additive(
    model: AdditiveSDE, times, method: str = "exp", step: float = DEFAULT_ODE_STEP
) -> np.ndarray:
    """Covariance V(t) of the additive model on a time grid.

    ``method="exp"`` propagates the discrete recursion
    V(t+dt) = phi V phi^T + sigma with exact transition moments;
    ``method="ode"`` integrates the Lyapunov ODE V' = A V + V A^T + H by
    fixed-step RK4. The two agree to discretization error and cross-check
    each other.
    """
    require_valid(model)
    times = _check_times(times)
    H = derive_additive(model).noise_cov
    return _lyapunov_grid(np.asarray(model.A, float), H, times, method, step)


def cross_covariance_additive(
    model: AdditiveSDE, t: float, h: float, method: str = "exp"
) -> np.ndarray:
    """Lagged covariance E[(X_{t+h} - m)(X_t - m)^T] = e^{A h} V(t).

    For ``h < 0`` the transpose relation ``V(t+h) e^{A^T (-h)}`` is used
    (the definition only fixes h >= 0; negative lags follow by symmetry of
    the joint Gaussian law).
    """
    require_valid(model)
    if t < 0:
        raise ValueError("t must be nonnegative")
    if h >= 0:
        V = covariance_additive(model, [t], method=method)[0] if t > 0 else np.zeros(
            (model.d, model.d)
        )
        return matexp(model.A, h) @ V
    s = t + h
    if s < 0:
        raise ValueError("t + h must be nonnegative")
    V = covariance_additive(model, [s], method=method)[0] if s > 0 else np.zeros(
        (model.d, model.d)
    )
    return V @ matexp(model.A, -h).T


def second_moment_multiplicative(
    model: MultiplicativeSDE,
    times,
    method: str = "exp",
    step: float = DEFAULT_ODE_STEP,
) -> np.ndarray:
    """Second moment P(t) = E[X_t X_t^T] of the multiplicative model.

    ``method="exp"`` evaluates the vectorized solution
    ``vec(P(t)) = e^{M t} vec(x0 x0^T)`` with M the Kronecker-structured
    moment generator; ``method="rk4"`` integrates
    P' = A P + P A^T + sum_k G_k P G_k^T directly.
    """
    require_valid(model)
    times = _check_times(times)
    d = model.d
    out = np.zeros((times.size, d, d))
    if method == "exp":
        derived = derive_multiplicative(model)
        for i, t in enumerate(times):
            P = unvec(matexp(derived.moment_gen, t) @ derived.v0, d, d)
            out[i] = 0.5 * (P + P.T)
        return out
    if method == "rk4":
        A = np.asarray(model.A, float)

        def rhs(_, y):
            P = y.reshape(d, d)
            dP = A @ P + P @ A.T
            for g in model.Gs:
                dP = dP + g @ P @ g.T
            return dP.reshape(-1)

        y = np.outer(model.x0, model.x0).reshape(-1)
        prev = 0.0
        for i, t in enumerate(times):
            y = rk4_fixed(rhs, y, prev, t, step)
            P = y.reshape(d, d)
            out[i] = 0.5 * (P + P.T)
            prev = t
        return out
    raise ValueError(f"unknown method {method!r}; use 'exp' or 'rk4'")


def moment_curve(model, times, method: str = "exp", step: float = DEFAULT_ODE_STEP):
    """Bundle means and second-order matrices into a :class:`MomentCurve`."""
    times = _check_times(times)
    means = mean_curve(model, times)
    if isinstance(model, AdditiveSDE):
        seconds = covariance_additive(model, times, method=method, step=step)
    elif isinstance(model, MultiplicativeSDE):
        m = "rk4" if method == "ode" else method
        seconds = second_moment_multiplicative(model, times, method=m, step=step)
    else:
        raise TypeError(f"unsupported model type {type(model).__name__}")
    return MomentCurve(times=times, means=means, seconds=seconds)
