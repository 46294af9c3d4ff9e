"""Constant interventions: clamp one coordinate and study what remains.

Clamping coordinate ``l`` to a constant turns a d-dimensional linear SDE
into a (d-1)-dimensional affine SDE in the surviving coordinates. This
module builds that reduced system (by permuting the clamped coordinate to
the front and reading off blocks) and computes its first and second moments,
either in closed form (additive case, invertible surviving drift block) or
by fixed-step RK4 integration.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .linalg import matexp
from .models import AdditiveSDE, MultiplicativeSDE, require_valid
from .moments import DEFAULT_ODE_STEP, MomentCurve, _lyapunov_grid, rk4_fixed

__all__ = [
    "InterventionSpec",
    "PostInterventionAdditive",
    "PostInterventionMultiplicative",
    "intervene",
    "post_moments_additive",
    "post_moments_multiplicative",
    "compare_post_intervention",
    "reassemble_full_state",
]


@dataclass(frozen=True)
class InterventionSpec:
    """Clamp coordinate ``coordinate`` (1-based, 1..d) to ``value``."""

    coordinate: int
    value: float


def _split(spec: InterventionSpec, d: int):
    l = spec.coordinate
    if not 1 <= l <= d:
        raise ValueError(f"coordinate must be in 1..{d}, got {l}")
    if d < 2:
        raise ValueError("intervention needs at least one surviving coordinate")
    # permutation moving the clamped coordinate to the front
    order = [l - 1] + [i for i in range(d) if i != l - 1]
    return np.asarray(order, dtype=int)


@dataclass(frozen=True)
class PostInterventionAdditive:
    """Affine OU system for the surviving coordinates of an additive model.

    dY = (a21 * value + a22 Y) dt + g2 dW, Y(0) = y0.
    """

    a21: np.ndarray
    a22: np.ndarray
    g2: np.ndarray
    y0: np.ndarray
    value: float
    coordinate: int

    @property
    def drift_const(self) -> np.ndarray:
        return self.a21 * self.value

    @property
    def d(self) -> int:
        return self.y0.size


@dataclass(frozen=True)
class PostInterventionMultiplicative:
    """Affine system with state-proportional noise for the surviving
    coordinates of a multiplicative model.

    dY = (a21 * value + a22 Y) dt + sum_k (gs21[k] * value + gs22[k] Y) dW_k.
    """

    a21: np.ndarray
    a22: np.ndarray
    gs21: tuple
    gs22: tuple
    y0: np.ndarray
    value: float
    coordinate: int

    @property
    def drift_const(self) -> np.ndarray:
        return self.a21 * self.value

    @property
    def noise_consts(self) -> tuple:
        return tuple(g21 * self.value for g21 in self.gs21)

    @property
    def d(self) -> int:
        return self.y0.size


def intervene(model, spec: InterventionSpec):
    """Build the post-intervention system for a constant clamp.

    The clamped coordinate is permuted to the front so the block reads are
    literal: ``a21`` couples the clamp into the survivors, ``a22`` is the
    surviving drift, and the noise loadings are sliced the same way.
    """
    require_valid(model)
    d = model.x0.size
    order = _split(spec, d)
    A = np.asarray(model.A, float)[np.ix_(order, order)]
    x0 = np.asarray(model.x0, float)[order]
    if isinstance(model, AdditiveSDE):
        G = np.asarray(model.G, float)[order, :]
        return PostInterventionAdditive(
            a21=A[1:, 0].copy(),
            a22=A[1:, 1:].copy(),
            g2=G[1:, :].copy(),
            y0=x0[1:].copy(),
            value=float(spec.value),
            coordinate=int(spec.coordinate),
        )
    if isinstance(model, MultiplicativeSDE):
        gs21 = []
        gs22 = []
        for g in model.Gs:
            gp = np.asarray(g, float)[np.ix_(order, order)]
            gs21.append(gp[1:, 0].copy())
            gs22.append(gp[1:, 1:].copy())
        return PostInterventionMultiplicative(
            a21=A[1:, 0].copy(),
            a22=A[1:, 1:].copy(),
            gs21=tuple(gs21),
            gs22=tuple(gs22),
            y0=x0[1:].copy(),
            value=float(spec.value),
            coordinate=int(spec.coordinate),
        )
    raise TypeError(f"unsupported model type {type(model).__name__}")


def reassemble_full_state(paths: np.ndarray, spec: InterventionSpec) -> np.ndarray:
    """Insert the clamped coordinate back into reduced paths.

    ``paths`` has shape (..., d-1); the result has shape (..., d) with the
    clamped coordinate identically equal to the intervention value.
    """
    paths = np.asarray(paths, dtype=float)
    d = paths.shape[-1] + 1
    l = spec.coordinate
    if not 1 <= l <= d:
        raise ValueError(f"coordinate must be in 1..{d}")
    out = np.empty(paths.shape[:-1] + (d,), dtype=float)
    out[..., l - 1] = spec.value
    rest = [i for i in range(d) if i != l - 1]
    out[..., rest] = paths
    return out


def _mean_curve_affine(a22, b, y0, times, step):
    """Mean of dY = (b + a22 Y) dt; closed form when a22 is invertible."""
    sv = np.linalg.svd(a22, compute_uv=False)
    invertible = sv.size > 0 and sv[-1] > 1e-12 * max(sv[0], 1.0)
    n = times.size
    dsur = y0.size
    means = np.zeros((n, dsur))
    if invertible:
        shift = np.linalg.solve(a22, b)
        eye = np.eye(dsur)
        for i, t in enumerate(times):
            E = matexp(a22, t)
            means[i] = E @ y0 + (E - eye) @ shift
        return means, False
    y = np.array(y0, dtype=float)
    prev = 0.0
    for i, t in enumerate(times):
        y = rk4_fixed(lambda _, m: b + a22 @ m, y, prev, t, step)
        means[i] = y
        prev = t
    return means, True


def post_moments_additive(
    model: AdditiveSDE,
    spec: InterventionSpec,
    times,
    step: float = DEFAULT_ODE_STEP,
) -> MomentCurve:
    """Mean and covariance of the surviving coordinates after the clamp.

    The reduced system is an affine OU process: the mean follows
    m' = a21*value + a22 m and the covariance the Lyapunov equation with
    noise block g2 g2^T. A singular ``a22`` switches the mean to RK4
    integration (recorded in the curve's notes).
    """
    post = model if isinstance(model, PostInterventionAdditive) else intervene(
        model, spec
    )
    times = np.asarray(times, dtype=float).reshape(-1)
    means, fell_back = _mean_curve_affine(
        post.a22, post.drift_const, post.y0, times, step
    )
    H2 = post.g2 @ post.g2.T
    seconds = _lyapunov_grid(post.a22, 0.5 * (H2 + H2.T), times, "exp", step)
    notes = ("mean via RK4 fallback (singular surviving drift block)",) if fell_back else ()
    return MomentCurve(times=times, means=means, seconds=seconds, notes=notes)


def post_moments_multiplicative(
    model: MultiplicativeSDE,
    spec: InterventionSpec,
    times,
    step: float = DEFAULT_ODE_STEP,
) -> MomentCurve:
    """Mean and raw second moment of the survivors after the clamp.

    Integrates the coupled linear ODE system for (m, P) by fixed-step RK4
    from m(0) = y0, P(0) = y0 y0^T. The noise constants seed P with
    value-dependent source terms, so the curve depends on the clamp value
    even when the surviving noise blocks vanish.
    """
    post = (
        model
        if isinstance(model, PostInterventionMultiplicative)
        else intervene(model, spec)
    )
    times = np.asarray(times, dtype=float).reshape(-1)
    dsur = post.d
    b = post.drift_const
    a22 = post.a22
    loads = list(zip(post.gs22, post.noise_consts))

    def rhs(_, y):
        mvec = y[:dsur]
        P = y[dsur:].reshape(dsur, dsur)
        dm = b + a22 @ mvec
        dP = np.outer(mvec, b) + np.outer(b, mvec) + a22 @ P + P @ a22.T
        for g22, c in loads:
            gm = g22 @ mvec
            dP = dP + np.outer(c, c) + np.outer(gm, c) + np.outer(c, gm)
            dP = dP + g22 @ P @ g22.T
        return np.concatenate([dm, dP.reshape(-1)])

    y = np.concatenate([post.y0, np.outer(post.y0, post.y0).reshape(-1)])
    means = np.zeros((times.size, dsur))
    seconds = np.zeros((times.size, dsur, dsur))
    prev = 0.0
    for i, t in enumerate(times):
        y = rk4_fixed(rhs, y, prev, t, step)
        if not np.all(np.isfinite(y)):
            raise FloatingPointError(
                f"post-intervention moments blew up by t={t:g}"
            )
        means[i] = y[:dsur]
        P = y[dsur:].reshape(dsur, dsur)
        seconds[i] = 0.5 * (P + P.T)
        prev = t
    return MomentCurve(times=times, means=means, seconds=seconds)


def compare_post_intervention(
    model_a,
    model_b,
    spec: InterventionSpec,
    times,
    step: float = DEFAULT_ODE_STEP,
) -> dict:
    """Max deviations between post-intervention moment curves of two models.

    Returns ``{"max_mean_diff": ..., "max_cov_diff": ...}``; for
    multiplicative models the second entry compares raw second moments.
    """
    if isinstance(model_a, AdditiveSDE) and isinstance(model_b, AdditiveSDE):
        ca = post_moments_additive(model_a, spec, times, step=step)
        cb = post_moments_additive(model_b, spec, times, step=step)
    elif isinstance(model_a, MultiplicativeSDE) and isinstance(
        model_b, MultiplicativeSDE
    ):
        ca = post_moments_multiplicative(model_a, spec, times, step=step)
        cb = post_moments_multiplicative(model_b, spec, times, step=step)
    else:
        raise TypeError("compare_post_intervention requires two models of one class")
    return {
        "max_mean_diff": float(np.max(np.abs(ca.means - cb.means))),
        "max_cov_diff": float(np.max(np.abs(ca.seconds - cb.seconds))),
    }


def comparison_report_json(report: dict, indent: int = 2) -> str:
    return json.dumps(report, indent=indent, sort_keys=True)
