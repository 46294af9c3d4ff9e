"""Built-in benchmark systems and experiment scenarios.

Five 2-dimensional systems with known identifiability status, shipped as
fixtures so the benchmark tables can be reproduced without transcribing
matrices: an identifiable and an unidentifiable additive pair, and an
identifiable multiplicative system plus two variants violating exactly one
of the two sufficient conditions.
"""

from __future__ import annotations

from .estimate import ExperimentSpec
from .models import AdditiveSDE, MultiplicativeSDE

__all__ = [
    "additive_identifiable",
    "additive_unidentifiable",
    "multiplicative_identifiable",
    "multiplicative_unid_a1",
    "multiplicative_unid_a2",
    "MODEL_PRESETS",
    "SCENARIOS",
    "scenario_spec",
]


def additive_identifiable() -> AdditiveSDE:
    return AdditiveSDE(
        A=[[1.76, -0.1], [0.98, 0.0]],
        G=[[-0.11, -0.14], [-0.29, -0.22]],
        x0=[1.87, -0.98],
    )


def additive_unidentifiable() -> AdditiveSDE:
    # x0 and every column of G G^T sit in the drift-invariant line
    # spanned by [1, -1], so the rank condition fails by construction
    return AdditiveSDE(
        A=[[1.0, 2.0], [1.0, 0.0]],
        G=[[0.11, 0.22], [-0.11, -0.22]],
        x0=[1.0, -1.0],
    )


def multiplicative_identifiable() -> MultiplicativeSDE:
    return MultiplicativeSDE(
        A=[[1.76, -0.1], [0.98, 0.0]],
        Gs=(
            [[-0.11, -0.14], [-0.29, -0.22]],
            [[-0.17, 0.59], [0.81, 0.18]],
        ),
        x0=[1.87, -0.98],
    )


def multiplicative_unid_a1() -> MultiplicativeSDE:
    # A x0 = 3 x0: the state Krylov condition fails
    return MultiplicativeSDE(
        A=[[2.0, 1.0], [3.0, 0.0]],
        Gs=(
            [[-0.11, -0.14], [-0.29, -0.22]],
            [[-0.17, 0.59], [0.81, 0.18]],
        ),
        x0=[1.0, 1.0],
    )


def multiplicative_unid_a2() -> MultiplicativeSDE:
    # state Krylov passes but the moment Krylov condition fails
    return MultiplicativeSDE(
        A=[[1.0, -2.0], [-1.0, 0.0]],
        Gs=(
            [[-0.3, 0.4], [-0.7, 0.2]],
            [[0.8, 0.2], [-0.2, -0.4]],
        ),
        x0=[1.0, -1.0],
    )


MODEL_PRESETS = {
    "additive-identifiable": additive_identifiable,
    "additive-unidentifiable": additive_unidentifiable,
    "multiplicative-identifiable": multiplicative_identifiable,
    "multiplicative-unid-a1": multiplicative_unid_a1,
    "multiplicative-unid-a2": multiplicative_unid_a2,
}

# Benchmark scenario names accepted by the CLI `reproduce` command.
SCENARIOS = {
    "table1-id": additive_identifiable,
    "table1-unid": additive_unidentifiable,
    "table2-id": multiplicative_identifiable,
    "table2-unid-a1": multiplicative_unid_a1,
    "table2-unid-a2": multiplicative_unid_a2,
}


def scenario_spec(
    name: str,
    N_list,
    replications: int,
    seed: int = 0,
    n_obs: int = 50,
    T: float = 1.0,
    n_sub: int | None = None,
) -> ExperimentSpec:
    """Experiment spec for a named scenario: 50 observations on [0, 1],
    EM-generated data, truth-plus-2 initialization.

    ``n_sub`` defaults per scenario: additive data uses 10 sub-steps (the
    exact transition likelihood tolerates fine simulation), multiplicative
    data uses 1 (observations generated by the same one-step scheme the
    approximate likelihood assumes, keeping the refit correctly specified).
    """
    if name not in SCENARIOS:
        raise KeyError(
            f"unknown scenario {name!r}; choose from {sorted(SCENARIOS)}"
        )
    if n_sub is None:
        n_sub = 10 if name.startswith("table1") else 1
    return ExperimentSpec(
        true_model=SCENARIOS[name](),
        N_list=tuple(int(n) for n in N_list),
        n_obs=n_obs,
        T=T,
        replications=replications,
        seed=seed,
        scheme="em",
        n_sub=n_sub,
    )
