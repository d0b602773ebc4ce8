"""SMILES writer.

Emits one fragment per graph via depth-first traversal from atom 0.
The output is deterministic (neighbors visited in index order) and
re-parses to a graph isomorphic to the input.  Ring-closure bond symbols
are written on the closing side.
"""

from __future__ import annotations

from .types import (
    AROMATIC_ELEMENTS,
    ORGANIC_SUBSET,
    Atom,
    Bond,
    BondOrder,
    MolecularGraph,
    UnsupportedFeature,
)

_BOND_SYMBOL = {
    BondOrder.SINGLE: "-",
    BondOrder.DOUBLE: "=",
    BondOrder.TRIPLE: "#",
    BondOrder.AROMATIC: ":",
}


def serialize(graph: MolecularGraph) -> str:
    """Write ``graph`` as a single-fragment SMILES string."""
    n = graph.num_atoms
    adjacency: list[list[tuple[int, BondOrder]]] = [
        graph.neighbors(i) for i in range(n)
    ]

    # first pass: spanning tree and ring (back) edges, in emission order
    parent: dict[int, int | None] = {0: None}
    children: dict[int, list[int]] = {i: [] for i in range(n)}
    ring_edges: list[frozenset[int]] = []
    seen_rings: set[frozenset[int]] = set()
    visit_order: dict[int, int] = {}

    stack = [0]
    while stack:
        u = stack.pop()
        if u in visit_order:
            continue
        visit_order[u] = len(visit_order)
        for v, _ in reversed(adjacency[u]):
            if v not in visit_order and v not in parent:
                parent[v] = u
                children[u].append(v)
                stack.append(v)
            elif v in visit_order and parent.get(u) != v:
                pair = frozenset((u, v))
                if pair not in seen_rings:
                    seen_rings.add(pair)
                    ring_edges.append(pair)

    if len(visit_order) != n:
        raise UnsupportedFeature(
            "graph is disconnected; serialize one fragment at a time"
        )

    # reversed() above makes the stack pop children in index order, but
    # children lists were appended in reversed order; restore index order
    for u in children:
        children[u].sort()

    order_of: dict[frozenset[int], BondOrder] = {
        bond.pair: bond.order for bond in graph.bonds
    }

    # assign ring-closure digits; a digit frees up once both ends are written
    ring_digit: dict[frozenset[int], int] = {}
    rings_at: dict[int, list[frozenset[int]]] = {i: [] for i in range(n)}
    for pair in ring_edges:
        for endpoint in sorted(pair, key=lambda x: visit_order[x]):
            rings_at[endpoint].append(pair)

    free_digits = list(range(99, 0, -1))
    open_digits: set[frozenset[int]] = set()

    out: list[str] = []

    def bond_text(order: BondOrder, a: Atom, b: Atom) -> str:
        if order is BondOrder.SINGLE:
            return "-" if (a.aromatic and b.aromatic) else ""
        if order is BondOrder.AROMATIC:
            return "" if (a.aromatic and b.aromatic) else ":"
        return _BOND_SYMBOL[order]

    def emit(u: int) -> None:
        out.append(_atom_token(graph.atoms[u]))
        for pair in rings_at[u]:
            (other,) = pair - {u}
            if pair not in open_digits:
                if not free_digits:
                    raise UnsupportedFeature("more than 99 open ring bonds")
                ring_digit[pair] = free_digits.pop()
                open_digits.add(pair)
                out.append(_digit_token(ring_digit[pair]))
            else:
                order = order_of[pair]
                out.append(
                    bond_text(order, graph.atoms[u], graph.atoms[other])
                )
                out.append(_digit_token(ring_digit[pair]))
                open_digits.discard(pair)
                free_digits.append(ring_digit[pair])
        kids = children[u]
        for idx, v in enumerate(kids):
            text = bond_text(
                order_of[frozenset((u, v))], graph.atoms[u], graph.atoms[v]
            )
            if idx < len(kids) - 1:
                out.append("(" + text)
                emit(v)
                out.append(")")
            else:
                out.append(text)
                emit(v)

    emit(0)
    return "".join(out)


def _digit_token(digit: int) -> str:
    return str(digit) if digit <= 9 else f"%{digit:02d}"


def _atom_token(atom: Atom) -> str:
    symbol = atom.element.lower() if atom.aromatic else atom.element
    bare_ok = (
        atom.element in ORGANIC_SUBSET
        and atom.formal_charge == 0
        and atom.explicit_h == 0
        and (not atom.aromatic or atom.element in AROMATIC_ELEMENTS)
    )
    if bare_ok:
        return symbol
    if atom.explicit_h > 99:
        raise UnsupportedFeature(
            f"cannot write explicit hydrogen count {atom.explicit_h}"
        )
    parts = ["[", symbol]
    if atom.explicit_h == 1:
        parts.append("H")
    elif atom.explicit_h > 1:
        parts.append(f"H{atom.explicit_h}")
    if atom.formal_charge == 1:
        parts.append("+")
    elif atom.formal_charge == -1:
        parts.append("-")
    elif atom.formal_charge > 1:
        parts.append(f"+{atom.formal_charge}")
    elif atom.formal_charge < -1:
        parts.append(f"-{abs(atom.formal_charge)}")
    parts.append("]")
    return "".join(parts)
