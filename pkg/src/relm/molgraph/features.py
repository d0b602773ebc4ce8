"""Numeric featurization of molecular graphs for the encoder.

Node features concatenate one-hot blocks for element, degree and formal
charge plus two flags (aromatic, has explicit hydrogens).  The adjacency
matrix is symmetrically normalized with self-loops:
D^{-1/2} (A + I) D^{-1/2}.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .types import MAX_ABS_CHARGE, SUPPORTED_ELEMENTS, MolecularGraph, UnknownElement

# formal charges are one-hot over -MAX_ABS_CHARGE .. +MAX_ABS_CHARGE
_CHARGE_WIDTH = 2 * MAX_ABS_CHARGE + 1
_FLAG_WIDTH = 2


@dataclass(frozen=True)
class FeatureConfig:
    """Featurization settings; feature_dim is fully determined by them."""

    element_vocab: tuple[str, ...] = SUPPORTED_ELEMENTS
    max_degree: int = 6

    def __post_init__(self) -> None:
        if len(set(self.element_vocab)) != len(self.element_vocab):
            raise ValueError("element_vocab has duplicates")
        if not self.element_vocab:
            raise ValueError("element_vocab is empty")
        if self.max_degree < 1:
            raise ValueError("max_degree must be >= 1")

    @property
    def feature_dim(self) -> int:
        return (
            len(self.element_vocab)
            + (self.max_degree + 1)
            + _CHARGE_WIDTH
            + _FLAG_WIDTH
        )


def graph_features(
    graph: MolecularGraph, config: FeatureConfig
) -> tuple[np.ndarray, np.ndarray]:
    """Return (node feature matrix, normalized adjacency) for ``graph``.

    Shapes are (n, feature_dim) and (n, n), both float64.  Degrees above
    max_degree land in the top degree bucket; elements outside the
    vocabulary raise UnknownElement.
    """
    n = graph.num_atoms
    element_index = {e: i for i, e in enumerate(config.element_vocab)}
    x = np.zeros((n, config.feature_dim), dtype=np.float64)
    degree_base = len(config.element_vocab)
    charge_base = degree_base + config.max_degree + 1
    flag_base = charge_base + _CHARGE_WIDTH
    for i, atom in enumerate(graph.atoms):
        if atom.element not in element_index:
            raise UnknownElement(
                f"element {atom.element!r} is outside the feature vocabulary"
            )
        x[i, element_index[atom.element]] = 1.0
        x[i, degree_base + min(graph.degree(i), config.max_degree)] = 1.0
        x[i, charge_base + atom.formal_charge + MAX_ABS_CHARGE] = 1.0
        x[i, flag_base] = 1.0 if atom.aromatic else 0.0
        x[i, flag_base + 1] = 1.0 if atom.explicit_h > 0 else 0.0

    a = np.eye(n, dtype=np.float64)
    for bond in graph.bonds:
        a[bond.a, bond.b] = 1.0
        a[bond.b, bond.a] = 1.0
    degree = a.sum(axis=1)
    # dividing by sqrt(d_i * d_j) keeps entries exact when the product is
    # a perfect square (e.g. the two-node graph yields exactly 1/2)
    a_norm = a / np.sqrt(np.outer(degree, degree))
    return x, a_norm
