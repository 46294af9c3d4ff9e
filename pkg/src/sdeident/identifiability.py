"""Identifiability decisions for linear SDE generators.

Additive models get a sufficient-and-necessary rank test (necessary only
when the drift has distinct eigenvalues), a controllability shortcut, a
geometric diagnosis of failures in terms of drift-invariant subspaces, and a
constructive confounder realizing the necessity direction. Multiplicative
models get the sufficient pair of rank conditions on the state Krylov space
and the vectorized second-moment Krylov space, plus the commuting-case
variant. A Monte-Carlo probe checks that randomly drawn systems satisfy the
conditions generically.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .exceptions import RepeatedEigenvaluesError
from .linalg import (
    RealBlockEigen,
    krylov_columns,
    numerical_rank,
    real_block_eigen,
)
from .models import (
    AdditiveSDE,
    MultiplicativeSDE,
    derive_additive,
    derive_multiplicative,
    require_valid,
)

__all__ = [
    "IdentReport",
    "ConditionCheck",
    "SubspaceDiagnosis",
    "check_additive",
    "check_controllability",
    "check_multiplicative",
    "check_commuting",
    "diagnose_subspace",
    "construct_confounder",
    "genericity_probe",
    "WEIGHT_ZERO_RTOL",
    "COMMUTATOR_RTOL",
]

IDENTIFIABLE = "identifiable"
UNIDENTIFIABLE = "unidentifiable"
INCONCLUSIVE = "inconclusive"

# Block-weight |w| below WEIGHT_ZERO_RTOL * ||Q^-1 gamma|| counts as zero
# (scale-free test of invariant-subspace confinement).
WEIGHT_ZERO_RTOL = 1e-8

# Commutators with Frobenius norm below COMMUTATOR_RTOL * scale count as zero.
COMMUTATOR_RTOL = 1e-10


@dataclass(frozen=True)
class ConditionCheck:
    name: str
    required_rank: int
    achieved_rank: int
    singular_values: np.ndarray
    passed: bool

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "required_rank": int(self.required_rank),
            "achieved_rank": int(self.achieved_rank),
            "singular_values": [float(s) for s in self.singular_values],
            "passed": bool(self.passed),
        }


@dataclass(frozen=True)
class SubspaceDiagnosis:
    """A drift-invariant proper subspace confining all tested vectors.

    ``block_index`` (0-based) names the eigen-block whose weight vanishes in
    every tested vector; ``weights[j]`` is |w_j| for tested vector j (all
    below the zero tolerance).
    """

    block_index: int
    block_kind: str
    weights: np.ndarray
    eigenstructure: RealBlockEigen

    def to_dict(self) -> dict:
        return {
            "block_index": self.block_index,
            "block_kind": self.block_kind,
            "weights": [float(w) for w in self.weights],
        }


@dataclass(frozen=True)
class IdentReport:
    """Outcome of an identifiability check.

    ``verdict`` is one of ``identifiable`` / ``unidentifiable`` /
    ``inconclusive``; the three-valued form prevents overclaiming where the
    underlying condition is one-sided.
    """

    verdict: str
    conditions: tuple
    diagnosis: SubspaceDiagnosis | None = None
    tolerances: dict = field(default_factory=dict)

    def condition(self, name: str) -> ConditionCheck:
        for c in self.conditions:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "conditions": [c.to_dict() for c in self.conditions],
            "diagnosis": self.diagnosis.to_dict() if self.diagnosis else None,
            "tolerances": dict(self.tolerances),
        }

    def to_json(self, indent: int = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent, sort_keys=True)


def _rank_condition(name, matrix, required, rel_tol) -> ConditionCheck:
    rank, sv = numerical_rank(matrix, rel_tol=rel_tol)
    return ConditionCheck(
        name=name,
        required_rank=required,
        achieved_rank=rank,
        singular_values=sv,
        passed=rank == required,
    )


def diagnose_subspace(A, vectors, rel_tol: float = WEIGHT_ZERO_RTOL):
    """Find an eigen-block of ``A`` whose weight vanishes in every vector.

    Decomposes each vector in the real block eigenbasis of ``A`` (distinct
    eigenvalues required) and returns the first block whose component is
    below ``rel_tol`` times the vector's transformed norm for every tested
    vector, or ``None`` when no such block exists -- by the geometric
    criterion the latter happens exactly when the joint Krylov matrix has
    full rank.
    """
    eig = real_block_eigen(A)
    Qinv = np.linalg.inv(eig.Q)
    coords = [Qinv @ np.asarray(g, dtype=float).reshape(-1) for g in vectors]
    norms = [max(np.linalg.norm(c), np.finfo(float).tiny) for c in coords]
    for k, sl in enumerate(eig.block_slices):
        weights = np.array([np.linalg.norm(c[sl]) for c in coords])
        if np.all(weights < rel_tol * np.asarray(norms)):
            return SubspaceDiagnosis(
                block_index=k,
                block_kind=eig.block_kinds[k],
                weights=weights,
                eigenstructure=eig,
            )
    return None


def _additive_seeds(model: AdditiveSDE):
    H = derive_additive(model).noise_cov
    return [model.x0] + [H[:, j] for j in range(model.d)]


def check_additive(
    model: AdditiveSDE, rank_rtol: float | None = None
) -> IdentReport:
    """Decide identifiability of an additive model from its initial state.

    Builds the joint Krylov matrix of the initial state and the columns of
    the noise covariance and tests for full rank. With distinct drift
    eigenvalues the test is equivalent to identifiability, and a failure is
    explained by an invariant-subspace diagnosis; with repeated eigenvalues
    full rank still suffices but a deficient rank is inconclusive.
    """
    require_valid(model)
    d = model.d
    seeds = _additive_seeds(model)
    cond = _rank_condition(
        "joint-krylov", krylov_columns(model.A, seeds, d), d, rank_rtol
    )

    distinct = True
    try:
        real_block_eigen(model.A)
    except RepeatedEigenvaluesError:
        distinct = False

    diagnosis = None
    if cond.passed:
        verdict = IDENTIFIABLE
    elif distinct:
        verdict = UNIDENTIFIABLE
        diagnosis = diagnose_subspace(model.A, seeds)
    else:
        verdict = INCONCLUSIVE

    return IdentReport(
        verdict=verdict,
        conditions=(cond,),
        diagnosis=diagnosis,
        tolerances=_tols(rank_rtol),
    )


def check_controllability(
    model: AdditiveSDE, rank_rtol: float | None = None
) -> IdentReport:
    """Controllability test: full rank of ``[G | AG | ... | A^{d-1} G]``.

    Passing is sufficient for identifiability from any initial state, so a
    pass implies the joint-Krylov condition also passes (verified; a
    contradiction would mean inconsistent rank tolerances and raises).
    Failing is not informative on its own, hence ``inconclusive``.
    """
    require_valid(model)
    d = model.d
    seeds = [model.G[:, j] for j in range(model.m)]
    cond = _rank_condition(
        "controllability", krylov_columns(model.A, seeds, d), d, rank_rtol
    )
    if cond.passed:
        main = check_additive(model, rank_rtol=rank_rtol)
        if not main.condition("joint-krylov").passed:
            raise RuntimeError(
                "rank tolerance inconsistency: controllability passed but the "
                "joint Krylov condition failed"
            )
        verdict = IDENTIFIABLE
    else:
        verdict = INCONCLUSIVE
    return IdentReport(
        verdict=verdict, conditions=(cond,), tolerances=_tols(rank_rtol)
    )


def _multiplicative_conditions(model: MultiplicativeSDE, rank_rtol):
    d = model.d
    derived = derive_multiplicative(model)
    k_state = _rank_condition(
        "state-krylov", krylov_columns(model.A, [model.x0], d), d, rank_rtol
    )
    depth = (d * d + d) // 2
    k_moment = _rank_condition(
        "moment-krylov",
        krylov_columns(derived.moment_gen, [derived.v0], depth),
        depth,
        rank_rtol,
    )
    return k_state, k_moment


def check_multiplicative(
    model: MultiplicativeSDE, rank_rtol: float | None = None
) -> IdentReport:
    """Sufficient conditions for the multiplicative model.

    ``state-krylov``: the initial state excites all drift directions;
    ``moment-krylov``: the vectorized initial second moment excites the full
    symmetric-matrix subspace under the moment generator. Both passing gives
    ``identifiable``; anything else is ``inconclusive`` (the pair is
    sufficient but not necessary).
    """
    require_valid(model)
    k_state, k_moment = _multiplicative_conditions(model, rank_rtol)
    verdict = IDENTIFIABLE if (k_state.passed and k_moment.passed) else INCONCLUSIVE
    return IdentReport(
        verdict=verdict,
        conditions=(k_state, k_moment),
        tolerances=_tols(rank_rtol),
    )


def check_commuting(
    model: MultiplicativeSDE,
    rank_rtol: float | None = None,
    commutator_rtol: float = COMMUTATOR_RTOL,
) -> IdentReport:
    """Identifiability via the closed-form solution of commuting systems.

    Requires (a) all drift/noise matrices to commute pairwise, (b) the
    joint Krylov condition with the state-noise covariance
    ``sum_k G_k x0 x0^T G_k^T`` in place of G G^T, and (c) the same
    moment-Krylov condition as :func:`check_multiplicative`. All three
    passing gives ``identifiable``; otherwise ``inconclusive``.
    """
    require_valid(model)
    d = model.d
    A = np.asarray(model.A, float)

    worst = 0.0
    scale = max(np.linalg.norm(A), 1.0)
    for g in model.Gs:
        gn = max(np.linalg.norm(g), 1.0)
        worst = max(worst, np.linalg.norm(A @ g - g @ A) / (scale * gn))
    for i, gi in enumerate(model.Gs):
        for gj in model.Gs[i + 1 :]:
            ni = max(np.linalg.norm(gi), 1.0)
            nj = max(np.linalg.norm(gj), 1.0)
            worst = max(worst, np.linalg.norm(gi @ gj - gj @ gi) / (ni * nj))
    commute = ConditionCheck(
        name="commutativity",
        required_rank=0,
        achieved_rank=0,
        singular_values=np.array([worst]),
        passed=bool(worst <= commutator_rtol),
    )

    H = np.zeros((d, d))
    for g in model.Gs:
        gx = g @ model.x0
        H += np.outer(gx, gx)
    H = 0.5 * (H + H.T)
    seeds = [model.x0] + [H[:, j] for j in range(d)]
    joint = _rank_condition(
        "joint-krylov-statenoise", krylov_columns(A, seeds, d), d, rank_rtol
    )
    _, k_moment = _multiplicative_conditions(model, rank_rtol)

    verdict = (
        IDENTIFIABLE
        if (commute.passed and joint.passed and k_moment.passed)
        else INCONCLUSIVE
    )
    tols = _tols(rank_rtol)
    tols["commutator_rtol"] = commutator_rtol
    return IdentReport(
        verdict=verdict, conditions=(commute, joint, k_moment), tolerances=tols
    )


def construct_confounder(model: AdditiveSDE, c: float = 1.0) -> AdditiveSDE:
    """Build an observationally equivalent model with a different drift.

    Only defined for additive models diagnosed unidentifiable with distinct
    drift eigenvalues. Perturbs the drift by ``Q D Q^{-1}`` where D hits only
    the vanished eigen-block: the scalar ``c`` for a real block, ``c * I_2``
    for a complex pair (that form commutes with the rotation-scaling block,
    so the exponential factors exactly). The returned model shares G and x0
    and reproduces the same mean and covariance functions; callers verify
    that equality numerically.
    """
    if c == 0:
        raise ValueError("confounder perturbation c must be nonzero")
    report = check_additive(model)
    if report.verdict != UNIDENTIFIABLE or report.diagnosis is None:
        raise ValueError(
            "confounder construction requires a model diagnosed unidentifiable "
            f"(got verdict {report.verdict!r})"
        )
    diag = report.diagnosis
    eig = diag.eigenstructure
    d = model.d
    D = np.zeros((d, d))
    sl = eig.block_slices[diag.block_index]
    if diag.block_kind == "real":
        D[sl, sl] = c
    else:
        D[sl, sl] = c * np.eye(2)
    A2 = model.A + eig.Q @ D @ np.linalg.inv(eig.Q)
    return AdditiveSDE(A=A2, G=model.G, x0=model.x0)


def genericity_probe(
    d: int,
    m: int,
    model_kind: str,
    n_samples: int,
    seed: int = 0,
    rank_rtol: float | None = None,
) -> float:
    """Fraction of standard-normal random systems satisfying the conditions.

    Parameters are drawn i.i.d. N(0, 1); the violation set has Lebesgue
    measure zero, so the expected fraction is 1.0. Per-sample RNG streams
    are split from the seed, so the result is reproducible and independent
    of evaluation order.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    if model_kind not in ("additive", "multiplicative"):
        raise ValueError(f"unknown model_kind {model_kind!r}")
    streams = np.random.SeedSequence(seed).spawn(n_samples)
    hits = 0
    for ss in streams:
        rng = np.random.default_rng(ss)
        x0 = rng.standard_normal(d)
        A = rng.standard_normal((d, d))
        if model_kind == "additive":
            G = rng.standard_normal((d, m))
            model = AdditiveSDE(A=A, G=G, x0=x0)
            if check_additive(model, rank_rtol=rank_rtol).condition(
                "joint-krylov"
            ).passed:
                hits += 1
        else:
            Gs = tuple(rng.standard_normal((d, d)) for _ in range(m))
            model = MultiplicativeSDE(A=A, Gs=Gs, x0=x0)
            k_state, k_moment = _multiplicative_conditions(model, rank_rtol)
            if k_state.passed and k_moment.passed:
                hits += 1
    return hits / n_samples


def _tols(rank_rtol) -> dict:
    from .linalg import DEFAULT_RANK_SCALE

    return {
        "rank_rtol": rank_rtol,
        "rank_rtol_default_scale": DEFAULT_RANK_SCALE,
        "weight_zero_rtol": WEIGHT_ZERO_RTOL,
    }
