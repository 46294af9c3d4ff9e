"""Model definitions for the two linear SDE classes and derived quantities.

``AdditiveSDE``:        dX = A X dt + G dW            (G is d x m)
``MultiplicativeSDE``:  dX = A X dt + sum_k G_k X dW_k (each G_k is d x d)

Models are immutable value objects. ``validate`` reports violations as data
so malformed inputs can be diagnosed instead of rejected at construction.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ModelValidationError
from .linalg import kron_product, kron_sum, vec

__all__ = [
    "AdditiveSDE",
    "MultiplicativeSDE",
    "AdditiveDerived",
    "MultiplicativeDerived",
    "derive_additive",
    "derive_multiplicative",
    "validate",
    "require_valid",
    "model_from_dict",
    "model_to_dict",
    "load_model",
    "save_model",
]


def _freeze(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class AdditiveSDE:
    """Linear SDE with state-independent noise: drift A, noise loading G,
    deterministic initial state x0."""

    A: np.ndarray
    G: np.ndarray
    x0: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "A", _freeze(self.A))
        object.__setattr__(self, "G", _freeze(np.atleast_2d(self.G)))
        object.__setattr__(self, "x0", _freeze(np.ravel(self.x0)))

    @property
    def d(self) -> int:
        return self.x0.size

    @property
    def m(self) -> int:
        return self.G.shape[1]


@dataclass(frozen=True)
class MultiplicativeSDE:
    """Linear SDE with state-proportional noise: drift A and one square
    loading matrix per Brownian coordinate."""

    A: np.ndarray
    Gs: tuple
    x0: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "A", _freeze(self.A))
        object.__setattr__(
            self, "Gs", tuple(_freeze(np.atleast_2d(g)) for g in self.Gs)
        )
        object.__setattr__(self, "x0", _freeze(np.ravel(self.x0)))

    @property
    def d(self) -> int:
        return self.x0.size

    @property
    def m(self) -> int:
        return len(self.Gs)


@dataclass(frozen=True)
class AdditiveDerived:
    """Quantities shared by the additive-case analyses.

    ``noise_cov`` is G G^T, symmetrized exactly; downstream rank tests and
    moment ODEs assume exact symmetry.
    """

    noise_cov: np.ndarray


@dataclass(frozen=True)
class MultiplicativeDerived:
    """Quantities shared by the multiplicative-case analyses.

    ``moment_gen`` is the d^2 x d^2 generator of the vectorized
    second-moment ODE, ``A (+) A + sum_k G_k x G_k``; ``v0`` is
    ``vec(x0 x0^T)``, its initial state.
    """

    moment_gen: np.ndarray
    v0: np.ndarray


def derive_additive(model: AdditiveSDE) -> AdditiveDerived:
    require_valid(model)
    H = model.G @ model.G.T
    return AdditiveDerived(noise_cov=_freeze(0.5 * (H + H.T)))


def derive_multiplicative(model: MultiplicativeSDE) -> MultiplicativeDerived:
    require_valid(model)
    big = kron_sum(model.A, model.A)
    for g in model.Gs:
        big = big + kron_product(g, g)
    v0 = vec(np.outer(model.x0, model.x0))
    return MultiplicativeDerived(moment_gen=_freeze(big), v0=_freeze(v0))


def validate(model) -> list:
    """Return a list of violation strings; empty iff the model is well formed."""
    out = []

    def check_finite(name, arr):
        if not np.all(np.isfinite(arr)):
            out.append(f"{name} not finite")

    if isinstance(model, AdditiveSDE):
        A, G, x0 = model.A, model.G, model.x0
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            out.append("A not square")
        if G.ndim != 2:
            out.append("G not a matrix")
        if x0.size < 1:
            out.append("x0 empty")
        if A.ndim == 2 and A.shape[0] == A.shape[1]:
            if A.shape[0] != x0.size:
                out.append("A and x0 dimension mismatch")
            if G.ndim == 2 and G.shape[0] != A.shape[0]:
                out.append("G row count does not match A")
        if G.ndim == 2 and G.shape[1] < 1:
            out.append("G has no columns")
        check_finite("A", A)
        check_finite("G", G)
        check_finite("x0", x0)
    elif isinstance(model, MultiplicativeSDE):
        A, x0 = model.A, model.x0
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            out.append("A not square")
        if x0.size < 1:
            out.append("x0 empty")
        if len(model.Gs) < 1:
            out.append("Gs empty")
        for k, g in enumerate(model.Gs, start=1):
            if g.shape != A.shape:
                out.append(f"G_{k} shape {g.shape} does not match A")
            check_finite(f"G_{k}", g)
        if A.ndim == 2 and A.shape[0] == A.shape[1] and A.shape[0] != x0.size:
            out.append("A and x0 dimension mismatch")
        check_finite("A", A)
        check_finite("x0", x0)
    else:
        out.append(f"unsupported model type {type(model).__name__}")
    return out


def require_valid(model) -> None:
    violations = validate(model)
    if violations:
        raise ModelValidationError(violations)


def model_to_dict(model) -> dict:
    if isinstance(model, AdditiveSDE):
        return {
            "type": "additive",
            "A": model.A.tolist(),
            "G": model.G.tolist(),
            "x0": model.x0.tolist(),
        }
    if isinstance(model, MultiplicativeSDE):
        return {
            "type": "multiplicative",
            "A": model.A.tolist(),
            "Gs": [g.tolist() for g in model.Gs],
            "x0": model.x0.tolist(),
        }
    raise TypeError(f"unsupported model type {type(model).__name__}")


def model_from_dict(data: dict):
    """Build a model from the JSON schema
    ``{"type": "additive"|"multiplicative", "A": [[...]],
    "G": [[...]] or "Gs": [[[...]], ...], "x0": [...]}``
    (matrices as row-major arrays of arrays)."""
    try:
        kind = data["type"]
    except (TypeError, KeyError):
        raise ModelValidationError(["missing 'type' field"]) from None
    try:
        if kind == "additive":
            return AdditiveSDE(A=data["A"], G=data["G"], x0=data["x0"])
        if kind == "multiplicative":
            return MultiplicativeSDE(A=data["A"], Gs=tuple(data["Gs"]), x0=data["x0"])
    except KeyError as exc:
        raise ModelValidationError([f"missing field {exc.args[0]!r}"]) from None
    except (ValueError, TypeError) as exc:
        raise ModelValidationError([f"malformed field: {exc}"]) from None
    raise ModelValidationError([f"unknown model type {kind!r}"])


def load_model(path):
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ModelValidationError([f"invalid JSON: {exc}"]) from None
    return model_from_dict(data)


def save_model(model, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model), fh, indent=2)
        fh.write("\n")
