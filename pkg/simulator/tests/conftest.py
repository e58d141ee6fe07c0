from pathlib import Path

import numpy as np
import pytest

from app.core.config import BUNDLED_SCENARIOS
from app.schemas.game import TABLE_COURNOT
from app.services.game_model import CallableCost, GameSpec, build_cournot_game, build_quadratic_game, make_cluster

# Equilibrium of the bundled Cournot game from its first-order conditions: cluster 1 is
# interior, cluster 2 has its a = 3 and a = 2 factories at the production limit 10.
_S1 = 137467 / 1097  # P - X_1 at the equilibrium
_S2 = 589137 / 4388  # P - X_2
COURNOT_NE = np.array(
    [
        (_S1 - 10) / 10,
        (_S1 - 11) / 16,
        (_S1 - 9) / 8,
        (_S1 - 12) / 10,
        10.0,
        (_S2 - 11) / 14,
        (_S2 - 12) / 18,
        10.0,
    ]
)


@pytest.fixture
def cournot_spec() -> GameSpec:
    return build_cournot_game(TABLE_COURNOT)


@pytest.fixture
def quadratic_spec() -> GameSpec:
    """Two clusters, one target inside and one partly outside its box."""
    return build_quadratic_game(
        [[(0.0, 2.0), (0.0, 2.0)], [(-1.0, 1.0), (-1.0, 1.0), (-1.0, 1.0)]],
        [[1.5, 0.5], [0.2, -0.3, 3.0]],
    )


def zero_game(sizes: list[int], width: float = 1.0) -> GameSpec:
    clusters = tuple(make_cluster([(0.0, width)] * n) for n in sizes)
    return GameSpec(
        clusters=clusters,
        cost=CallableCost(lambda i, j, x: np.zeros(x.shape[:-1]), lambda i, j, x: np.zeros(x.shape[:-1] + (sizes[i],))),
        name="zero",
    )


@pytest.fixture
def cournot_toml() -> Path:
    return BUNDLED_SCENARIOS["cournot"]


@pytest.fixture
def quadratic_toml() -> Path:
    return BUNDLED_SCENARIOS["quadratic"]


@pytest.fixture
def out_dir(tmp_path: Path) -> Path:
    path = tmp_path / "runs"
    path.mkdir()
    return path
