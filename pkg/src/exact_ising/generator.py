"""Random planar and K33-free test models.

Planar graphs: grow a random embedded tree (each new leaf is inserted at a
random position in the rotation of a random existing vertex), then
triangulate every face.  K33-free graphs: start from K5 and repeatedly glue
a new K5 or random planar piece onto a free edge of an existing piece.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .decomposition import DecompositionNode, NiceDecomposition
from .graph import Graph, PlanarEmbedding, complete_graph, triangulate
from .model import IsingModel

COUPLING_STD = 0.1


@dataclass(frozen=True)
class GeneratedModel:
    model: IsingModel
    decomposition: NiceDecomposition
    seed: int

    def to_dict(self) -> dict:
        return {"model": self.model.to_dict(), "decomposition": self.decomposition.to_dict(),
                "seed": self.seed}


def _rng(seed):
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def random_planar(n, seed=None) -> PlanarEmbedding:
    """Random simple biconnected planar graph on ``n >= 3`` vertices, embedded."""
    if n < 3:
        raise ValueError("random_planar needs n >= 3")
    rng = _rng(seed)
    edges = []
    rot = [[]]
    for v in range(1, n):
        p = int(rng.integers(v))
        e = len(edges)
        edges.append((p, v))
        rot[p].insert(int(rng.integers(len(rot[p]) + 1)), e)
        rot.append([e])
    tree = PlanarEmbedding(Graph(n, edges), rot)
    tri, _ = triangulate(tree)
    return tri


def random_planar_model(n, seed=None, std=COUPLING_STD) -> IsingModel:
    """Zero-field model on :func:`random_planar` with ``N(0, std^2)`` couplings."""
    rng = _rng(seed)
    g = random_planar(n, rng).graph
    return IsingModel(g, rng.normal(0.0, std, g.m))


def random_k33_free(n, seed=None, std=COUPLING_STD) -> GeneratedModel:
    """Random K33-free model on exactly ``n >= 5`` vertices with a 5-nice decomposition.

    Pieces share one edge with the piece they are attached to; the shared
    pair is the navel of the new piece.
    """
    if n < 5:
        raise ValueError("random_k33_free needs n >= 5")
    rng = _rng(seed)
    seed_out = seed if isinstance(seed, (int, np.integer)) else None
    k5 = complete_graph(5)
    pieces = [{"parent": None, "vertices": list(range(5)), "edges": list(k5.edges),
               "free": set(k5.edges)}]
    size = 5
    while size < n:
        room = n - size
        if room >= 3 and rng.random() < 0.5:
            local = complete_graph(5)
        else:
            s = int(rng.integers(3, room + 3))
            local = random_planar(s, rng).graph
        hosts = [i for i, p in enumerate(pieces) if p["free"]]
        host = hosts[int(rng.integers(len(hosts)))]
        free = sorted(pieces[host]["free"])
        u, v = free[int(rng.integers(len(free)))]
        if rng.random() < 0.5:
            u, v = v, u
        a, b = local.edges[int(rng.integers(local.m))]
        ids = {a: u, b: v}
        for x in range(local.n):
            if x not in ids:
                ids[x] = size
                size += 1
        pedges = [(min(ids[x], ids[y]), max(ids[x], ids[y])) for x, y in local.edges]
        shared = (min(u, v), max(u, v))
        pieces[host]["free"].discard(shared)
        pieces.append({"parent": host, "vertices": sorted(ids.values()), "edges": pedges,
                       "free": set(pedges) - {shared}})
    all_edges = sorted({e for p in pieces for e in p["edges"]})
    g = Graph(n, all_edges)
    model = IsingModel(g, rng.normal(0.0, std, g.m))
    nodes = {i: DecompositionNode(i, p["parent"], tuple(p["vertices"]), tuple(p["edges"]))
             for i, p in enumerate(pieces)}
    return GeneratedModel(model, NiceDecomposition(5, 0, nodes), seed_out)
