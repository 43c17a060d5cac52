"""Variable-pair co-occurrence from tree branches and network export.

Walking every tree of every posterior draw, each internal node whose child is
also internal contributes one unordered pair of split variables (an immediate
parent-child pair on a decision path; grandparent pairs are not counted).
Pair counts are pooled globally across all trees and draws before a single
normalization by the total count. (Normalizing per tree and averaging would
be the other defensible reading; it is deliberately not implemented, so the
matrix entries remain exact pooled frequencies.) Pairs above a threshold
become the edges of an undirected interaction network.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError
from .trees import Ensemble, Tree

DEFAULT_EDGE_THRESHOLD = 0.01


@dataclass
class InteractionMatrix:
    """Symmetric normalized co-occurrence weights.

    Identical-variable pairs (same variable at parent and child) are counted
    in the normalization but live only on the diagonal; the upper triangle
    plus diagonal sums to 1 whenever any pair was seen.
    """

    weights: np.ndarray  # p x p symmetric
    total_pairs: int
    includes_diagonal: bool = True

    @property
    def p(self) -> int:
        return self.weights.shape[0]

    @property
    def is_empty(self) -> bool:
        return self.total_pairs == 0


@dataclass
class InteractionNetwork:
    """Weighted undirected graph of variable interactions."""

    names: list[str]  # node names, only variables incident to an edge
    edges: list[tuple[str, str, float]]  # (name_a, name_b, weight), a before b
    threshold: float
    degrees: dict[str, int] = field(default_factory=dict)

    @property
    def n_nodes(self) -> int:
        return len(self.names)


def _iter_trees(draws) -> list[Tree]:
    """Flatten whatever container of posterior trees we were handed."""
    if isinstance(draws, Tree):
        return [draws]
    if isinstance(draws, Ensemble):
        return list(draws.trees)
    trees: list[Tree] = []
    if hasattr(draws, "stages"):  # stacked classifier
        for stage in draws.stages:
            for ens in stage.ensembles:
                trees.extend(ens.trees)
        return trees
    if hasattr(draws, "ensembles"):  # regression / binary draws
        for ens in draws.ensembles:
            trees.extend(ens.trees)
        return trees
    for item in draws:  # plain iterable of trees or ensembles
        if isinstance(item, Ensemble):
            trees.extend(item.trees)
        else:
            trees.append(item)
    return trees


def co_occurrence(draws, grid) -> InteractionMatrix:
    """Normalized parent-child split-variable pair counts over all trees.

    ``grid`` fixes the number of predictors. An all-leaf posterior yields an
    empty (flagged, not erroneous) matrix.
    """
    p = grid.p if hasattr(grid, "p") else int(grid)
    counts = np.zeros((p, p), dtype=np.int64)
    total = 0
    for tree in _iter_trees(draws):
        for nid, node in tree.nodes.items():
            if node.is_leaf:
                continue
            for child_id in (2 * nid, 2 * nid + 1):
                child = tree.nodes.get(child_id)
                if child is None or child.is_leaf:
                    continue
                a, b = sorted((node.var, child.var))
                counts[a, b] += 1
                total += 1
    weights = np.zeros((p, p))
    if total > 0:
        upper = counts / total
        weights = upper + np.triu(upper, k=1).T  # mirror for exact symmetry
    return InteractionMatrix(weights=weights, total_pairs=total)


def build_network(matrix: InteractionMatrix, threshold: float = DEFAULT_EDGE_THRESHOLD,
                  names: list[str] | None = None) -> InteractionNetwork:
    """Retain off-diagonal pairs with weight >= threshold as undirected edges.

    Self-pairs stay out of the network (they are diagonal mass only). Node
    order follows variable index; node set is the variables incident to a
    retained edge.
    """
    if names is None:
        names = [f"X{j + 1}" for j in range(matrix.p)]
    if len(names) != matrix.p:
        raise DataError(f"{len(names)} names for {matrix.p} variables")
    edges: list[tuple[str, str, float]] = []
    degrees: dict[str, int] = {}
    for a in range(matrix.p):
        for b in range(a + 1, matrix.p):
            w = float(matrix.weights[a, b])
            if w >= threshold and w > 0:
                edges.append((names[a], names[b], w))
                degrees[names[a]] = degrees.get(names[a], 0) + 1
                degrees[names[b]] = degrees.get(names[b], 0) + 1
    nodes = [names[j] for j in range(matrix.p) if names[j] in degrees]
    return InteractionNetwork(names=nodes, edges=edges, threshold=float(threshold),
                              degrees=degrees)


def _fmt_weight(w: float) -> str:
    return f"{w:.6g}"


def to_dot(net: InteractionNetwork) -> str:
    """Undirected DOT rendition with weight and penwidth edge attributes."""
    lines = ["graph interactions {"]
    for name in net.names:
        lines.append(f'  "{name}";')
    max_w = max((w for _, _, w in net.edges), default=1.0)
    for a, b, w in net.edges:
        pen = 0.5 + 4.5 * (w / max_w if max_w > 0 else 0.0)
        lines.append(
            f'  "{a}" -- "{b}" [weight={_fmt_weight(w)}, penwidth={pen:.3f}];'
        )
    lines.append("}")
    return "\n".join(lines) + "\n"


def to_node_link(net: InteractionNetwork) -> dict:
    """JSON-ready node-link document (includes per-node degree)."""
    return {
        "threshold": net.threshold,
        "nodes": [{"id": name, "degree": net.degrees.get(name, 0)} for name in net.names],
        "links": [
            {"source": a, "target": b, "weight": float(_fmt_weight(w))}
            for a, b, w in net.edges
        ],
    }


def from_node_link(doc: dict) -> InteractionNetwork:
    """Rebuild a network from its node-link document."""
    edges = [(l["source"], l["target"], float(l["weight"])) for l in doc["links"]]
    degrees = {n["id"]: int(n["degree"]) for n in doc["nodes"]}
    return InteractionNetwork(
        names=[n["id"] for n in doc["nodes"]],
        edges=edges,
        threshold=float(doc["threshold"]),
        degrees=degrees,
    )


def export_network(net: InteractionNetwork, path, fmt: str = "json") -> None:
    """Write the network as DOT or node-link JSON."""
    if fmt == "dot":
        text = to_dot(net)
    elif fmt == "json":
        text = json.dumps(to_node_link(net), indent=2) + "\n"
    else:
        raise DataError(f"unknown network format {fmt!r} (expected 'dot' or 'json')")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)
