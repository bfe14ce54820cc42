import numpy as np
import pytest

from blockbn.dataio import DiscreteDataset, GroundTruthNetwork, NetworkNode


def make_dataset(columns: dict, arities: dict | None = None) -> DiscreteDataset:
    names = list(columns)
    cols = [np.asarray(columns[n], dtype=np.int64) for n in names]
    ars = [(arities or {}).get(n, int(c.max()) + 1) for n, c in zip(names, cols)]
    return DiscreteDataset(names, cols, ars)


def chain_network(p_a=(0.3, 0.7), p_b=((0.9, 0.1), (0.2, 0.8)), p_c=((0.6, 0.4), (0.1, 0.9))):
    return GroundTruthNetwork(
        [
            NetworkNode("A", ["a0", "a1"], [], np.array([p_a])),
            NetworkNode("B", ["b0", "b1"], ["A"], np.array(p_b)),
            NetworkNode("C", ["c0", "c1"], ["B"], np.array(p_c)),
        ]
    )


def block_network(copy=0.95):
    """Two independent groups of three strongly coupled binary variables."""
    nodes = []
    for g in ("A", "B"):
        nodes.append(NetworkNode(f"{g}1", ["0", "1"], [], np.array([[0.5, 0.5]])))
        for k in (2, 3):
            nodes.append(
                NetworkNode(f"{g}{k}", ["0", "1"], [f"{g}{k - 1}"],
                            np.array([[copy, 1 - copy], [1 - copy, copy]]))
            )
    return GroundTruthNetwork(nodes)


@pytest.fixture
def chain():
    return chain_network()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
