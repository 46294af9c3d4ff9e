"""Trajectory generation.

Euler-Maruyama stepping for both SDE classes (and for the affine
post-intervention systems), exact Gaussian transition sampling for additive
models, and the closed-form solution for commuting multiplicative systems.

All generators are deterministic functions of their arguments: the noise
stream derives from ``SeedSequence((seed, replication))`` and paths are
advanced together as one vectorized block.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from ._io import open_text_sink
from .exceptions import CommutativityError, NonFiniteTrajectoryError
from .identifiability import check_commuting
from .intervention import PostInterventionAdditive, PostInterventionMultiplicative
from .linalg import matexp
from .models import AdditiveSDE, MultiplicativeSDE, require_valid
from .moments import transition_moments_additive

__all__ = [
    "TrajectorySet",
    "simulate_em",
    "simulate_exact_additive",
    "simulate_commuting_explicit",
    "load_trajectories",
]


@dataclass(frozen=True)
class TrajectorySet:
    """N paths observed on a shared increasing time grid.

    ``paths`` has shape (N, n_obs, d); every path starts at the model's
    initial state and contains only finite values (blow-ups raise during
    generation instead of propagating NaNs).
    """

    times: np.ndarray
    paths: np.ndarray
    seed: int
    scheme: str

    def __post_init__(self):
        object.__setattr__(self, "times", np.asarray(self.times, dtype=float))
        object.__setattr__(self, "paths", np.asarray(self.paths, dtype=float))

    @property
    def n_paths(self) -> int:
        return self.paths.shape[0]

    @property
    def n_obs(self) -> int:
        return self.paths.shape[1]

    @property
    def d(self) -> int:
        return self.paths.shape[2]

    def to_csv(self, path) -> None:
        """Write ``replicate,time,x_1..x_d`` rows, one per (path, grid time)."""
        with open_text_sink(path) as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["replicate", "time"] + [f"x_{i + 1}" for i in range(self.d)]
            )
            for p in range(self.n_paths):
                for i, t in enumerate(self.times):
                    writer.writerow(
                        [p, repr(float(t))]
                        + [repr(float(v)) for v in self.paths[p, i]]
                    )


def load_trajectories(path) -> TrajectorySet:
    """Read the CSV format written by :meth:`TrajectorySet.to_csv`."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[:2] != ["replicate", "time"] or len(header) < 3:
            raise ValueError("expected header replicate,time,x_1..x_d")
        d = len(header) - 2
        by_rep: dict = {}
        for row in reader:
            if not row:
                continue
            rep = int(row[0])
            by_rep.setdefault(rep, []).append([float(v) for v in row[1:]])
    if not by_rep:
        raise ValueError("no trajectory rows found")
    reps = sorted(by_rep)
    first = np.asarray(by_rep[reps[0]], dtype=float)
    times = first[:, 0]
    paths = np.zeros((len(reps), times.size, d))
    for i, rep in enumerate(reps):
        block = np.asarray(by_rep[rep], dtype=float)
        if block.shape != first.shape or not np.allclose(block[:, 0], times):
            raise ValueError(f"replicate {rep} has an inconsistent time grid")
        paths[i] = block[:, 1:]
    return TrajectorySet(times=times, paths=paths, seed=0, scheme="imported")


def _grid(T: float, n_obs: int) -> np.ndarray:
    if T <= 0:
        raise ValueError("T must be positive")
    if n_obs < 2:
        raise ValueError("n_obs must be >= 2")
    return np.linspace(0.0, T, n_obs)


def _rng(seed: int, replication: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((int(seed), int(replication))))


def _check_finite(X: np.ndarray, t: float) -> None:
    if not np.all(np.isfinite(X)):
        bad = np.flatnonzero(~np.all(np.isfinite(X), axis=1))[0]
        raise NonFiniteTrajectoryError(bad, t)


def _em_stepper(model):
    """Return (x0, m, step) where step(X, dt, xi) advances all paths."""
    if isinstance(model, AdditiveSDE):
        require_valid(model)
        A, G = model.A, model.G

        def step(X, dt, xi):
            return X + (X @ A.T) * dt + (xi @ G.T) * np.sqrt(dt)

        return model.x0, model.m, step
    if isinstance(model, MultiplicativeSDE):
        require_valid(model)
        A, Gs = model.A, model.Gs

        def step(X, dt, xi):
            Xn = X + (X @ A.T) * dt
            s = np.sqrt(dt)
            for k, g in enumerate(Gs):
                Xn = Xn + (X @ g.T) * (s * xi[:, k : k + 1])
            return Xn

        return model.x0, model.m, step
    if isinstance(model, PostInterventionAdditive):
        A, G, b = model.a22, model.g2, model.drift_const

        def step(X, dt, xi):
            return X + (X @ A.T + b) * dt + (xi @ G.T) * np.sqrt(dt)

        return model.y0, G.shape[1], step
    if isinstance(model, PostInterventionMultiplicative):
        A, b = model.a22, model.drift_const
        loads = list(zip(model.gs22, model.noise_consts))

        def step(X, dt, xi):
            Xn = X + (X @ A.T + b) * dt
            s = np.sqrt(dt)
            for k, (g, c) in enumerate(loads):
                Xn = Xn + (X @ g.T + c) * (s * xi[:, k : k + 1])
            return Xn

        return model.y0, len(loads), step
    raise TypeError(f"cannot simulate model type {type(model).__name__}")


def simulate_em(
    model,
    T: float,
    n_obs: int,
    n_sub: int = 10,
    N: int = 1,
    seed: int = 0,
    *,
    replication: int = 0,
    dW: np.ndarray | None = None,
) -> TrajectorySet:
    """Euler-Maruyama simulation on ``n_obs`` equally spaced observations.

    Each observation interval is refined into ``n_sub`` internal sub-steps,
    decoupling discretization bias from the observation grid. ``dW``
    optionally supplies the standard-normal draws, shape
    ``((n_obs-1)*n_sub, N, m)``, enabling common-noise comparisons.
    """
    times = _grid(T, n_obs)
    if n_sub < 1:
        raise ValueError("n_sub must be >= 1")
    if N < 1:
        raise ValueError("N must be >= 1")
    x0, m, step = _em_stepper(model)
    d = x0.size
    dt = T / ((n_obs - 1) * n_sub)
    if dW is not None:
        dW = np.asarray(dW, dtype=float)
        if dW.shape != ((n_obs - 1) * n_sub, N, m):
            raise ValueError(
                f"dW must have shape {((n_obs - 1) * n_sub, N, m)}, got {dW.shape}"
            )
    rng = _rng(seed, replication)

    X = np.tile(x0, (N, 1))
    paths = np.zeros((N, n_obs, d))
    paths[:, 0] = X
    k = 0
    for i in range(1, n_obs):
        for _ in range(n_sub):
            xi = dW[k] if dW is not None else rng.standard_normal((N, m))
            X = step(X, dt, xi)
            k += 1
        _check_finite(X, times[i])
        paths[:, i] = X
    return TrajectorySet(times=times, paths=paths, seed=int(seed), scheme="euler")


def simulate_exact_additive(
    model: AdditiveSDE,
    T: float,
    n_obs: int,
    N: int = 1,
    seed: int = 0,
    *,
    replication: int = 0,
) -> TrajectorySet:
    """Sample the additive model exactly via its Gaussian transition law.

    Each step draws ``x' ~ Normal(phi x, sigma)`` with the exact one-step
    moments, so there is no discretization bias at any grid resolution.
    """
    require_valid(model)
    times = _grid(T, n_obs)
    if N < 1:
        raise ValueError("N must be >= 1")
    delta = T / (n_obs - 1)
    tm = transition_moments_additive(model, delta)
    evals, evecs = np.linalg.eigh(tm.sigma)
    L = evecs * np.sqrt(np.clip(evals, 0.0, None))
    rng = _rng(seed, replication)

    d = model.d
    X = np.tile(model.x0, (N, 1))
    paths = np.zeros((N, n_obs, d))
    paths[:, 0] = X
    for i in range(1, n_obs):
        X = X @ tm.phi.T + rng.standard_normal((N, d)) @ L.T
        _check_finite(X, times[i])
        paths[:, i] = X
    return TrajectorySet(times=times, paths=paths, seed=int(seed), scheme="exact")


def simulate_commuting_explicit(
    model: MultiplicativeSDE,
    T: float,
    n_obs: int,
    N: int = 1,
    seed: int = 0,
    *,
    replication: int = 0,
    dW: np.ndarray | None = None,
) -> TrajectorySet:
    """Exact paths of a commuting multiplicative system.

    Requires all drift/noise matrices to commute pairwise (checked).
    Evaluates ``X_t = exp((A - 1/2 sum_k G_k^2) t + sum_k G_k W_{k,t}) x0``
    at each grid time, one matrix exponential per (path, time); intended for
    modest path counts. ``dW`` optionally supplies the standard-normal grid
    increments, shape ``(n_obs-1, N, m)``.
    """
    require_valid(model)
    commute = check_commuting(model).condition("commutativity")
    if not commute.passed:
        raise CommutativityError(
            "drift/noise matrices do not commute "
            f"(relative commutator {commute.singular_values[0]:.3e})"
        )
    times = _grid(T, n_obs)
    if N < 1:
        raise ValueError("N must be >= 1")
    d, m = model.d, model.m
    drift_eff = np.asarray(model.A, float) - 0.5 * sum(g @ g for g in model.Gs)

    if dW is not None:
        dW = np.asarray(dW, dtype=float)
        if dW.shape != (n_obs - 1, N, m):
            raise ValueError(
                f"dW must have shape {(n_obs - 1, N, m)}, got {dW.shape}"
            )
    rng = _rng(seed, replication)

    W = np.zeros((N, m))
    paths = np.zeros((N, n_obs, d))
    paths[:, 0] = np.tile(model.x0, (N, 1))
    for i in range(1, n_obs):
        dt = times[i] - times[i - 1]
        xi = dW[i - 1] if dW is not None else rng.standard_normal((N, m))
        W = W + np.sqrt(dt) * xi
        for p in range(N):
            expo = drift_eff * times[i]
            for k, g in enumerate(model.Gs):
                expo = expo + g * W[p, k]
            paths[p, i] = matexp(expo) @ model.x0
        _check_finite(paths[:, i], times[i])
    return TrajectorySet(
        times=times, paths=paths, seed=int(seed), scheme="commuting-explicit"
    )
