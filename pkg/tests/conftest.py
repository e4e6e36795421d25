import numpy as np
import pytest

from interurn import (
    DirichletColumns,
    RandomScaled,
    SingleBallMultinomial,
    SystemSpec,
    UrnSpec,
    validate_spec,
)

# Mean matrices of the running two-urn example; H2 is the symmetric variant
# consistent with the worked eigenvalues (0.75) and limit (1/2, 1/2).
H1 = np.array([[0.75, 0.5], [0.25, 0.5]])
H2 = np.array([[7 / 8, 1 / 8], [1 / 8, 7 / 8]])


def two_urn_system(alpha, beta, model=SingleBallMultinomial):
    W = np.array([[alpha, 1 - alpha], [1 - beta, beta]])
    return validate_spec(
        SystemSpec(
            K=2,
            W=W,
            urns=(UrnSpec(model(H1)), UrnSpec(model(H2))),
        )
    )


def single_urn_system(H, model=SingleBallMultinomial, **kw):
    H = np.asarray(H, dtype=float)
    return validate_spec(
        SystemSpec(K=H.shape[0], W=np.array([[1.0]]), urns=(UrnSpec(model(H, **kw)),))
    )


def rank1_follower_system(beta=0.5):
    """Leader H1 feeding a follower whose mean matrix has equal columns, so the
    leader's second eigendirection is annihilated by the coupling."""
    Hf = np.array([[0.9, 0.9], [0.1, 0.1]])
    W = np.array([[1.0, 0.0], [1 - beta, beta]])
    return validate_spec(
        SystemSpec(
            K=2,
            W=W,
            urns=(UrnSpec(SingleBallMultinomial(H1)), UrnSpec(SingleBallMultinomial(Hf))),
        )
    )


@pytest.fixture(scope="session")
def ex1_system():
    return two_urn_system(1.0, 1.0)


@pytest.fixture(scope="session")
def ex2_system():
    return two_urn_system(0.8, 0.8)


@pytest.fixture(scope="session")
def ex3_system():
    return two_urn_system(1.0, 0.5)
