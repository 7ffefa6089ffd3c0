"""Graphs, planar embeddings, face triangulation and the expanded dual.

Embeddings are rotation systems: for every vertex the cyclic order of its
incident edges.  Internally edge ``e = (u, v)`` owns two darts, ``2e``
(u to v) and ``2e + 1`` (v to u).  The face to the left of a dart continues
with the dart preceding its reverse in the rotation of the head vertex.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property

import networkx as nx
import numpy as np

from .errors import IsingError


# ---------------------------------------------------------------------------
# Graph
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Graph:
    """Simple undirected graph on vertices ``0..n-1``.

    Edges are stored as ``(min, max)`` pairs; the edge index is the position
    in ``edges``.
    """

    n: int
    edges: tuple = ()

    def __post_init__(self):
        norm = []
        seen = set()
        for e in self.edges:
            v, w = int(e[0]), int(e[1])
            if v == w:
                raise ValueError(f"self-loop at vertex {v}")
            if not (0 <= v < self.n and 0 <= w < self.n):
                raise ValueError(f"edge ({v}, {w}) out of range for n={self.n}")
            p = (v, w) if v < w else (w, v)
            if p in seen:
                raise ValueError(f"duplicate edge {p}")
            seen.add(p)
            norm.append(p)
        object.__setattr__(self, "edges", tuple(norm))

    @property
    def m(self) -> int:
        return len(self.edges)

    @cached_property
    def edge_index(self) -> dict:
        return {e: i for i, e in enumerate(self.edges)}

    @cached_property
    def adjacency(self) -> list:
        adj = [[] for _ in range(self.n)]
        for v, w in self.edges:
            adj[v].append(w)
            adj[w].append(v)
        return adj

    def has_edge(self, v, w) -> bool:
        return ((v, w) if v < w else (w, v)) in self.edge_index

    def find_edge(self, v, w):
        return self.edge_index.get((v, w) if v < w else (w, v))

    def degree(self, v) -> int:
        return len(self.adjacency[v])

    def components(self) -> list:
        """Connected components as sorted vertex lists."""
        label = [-1] * self.n
        comps = []
        for s in range(self.n):
            if label[s] >= 0:
                continue
            label[s] = len(comps)
            stack, comp = [s], [s]
            while stack:
                v = stack.pop()
                for w in self.adjacency[v]:
                    if label[w] < 0:
                        label[w] = label[s]
                        stack.append(w)
                        comp.append(w)
            comps.append(sorted(comp))
        return comps

    def is_connected(self) -> bool:
        return self.n <= 1 or len(self.components()) == 1

    def induced(self, vertices) -> tuple:
        """Induced subgraph with relabelled vertices.

        Returns ``(subgraph, vertex_map, edge_map)`` where ``vertex_map[i]`` is
        the original id of new vertex ``i`` and ``edge_map[j]`` the original
        index of new edge ``j``.
        """
        vertices = list(vertices)
        local = {v: i for i, v in enumerate(vertices)}
        sub_edges, edge_map = [], []
        for idx, (v, w) in enumerate(self.edges):
            if v in local and w in local:
                sub_edges.append((local[v], local[w]))
                edge_map.append(idx)
        return Graph(len(vertices), tuple(sub_edges)), vertices, edge_map

    def to_networkx(self) -> nx.Graph:
        g = nx.Graph()
        g.add_nodes_from(range(self.n))
        g.add_edges_from(self.edges)
        return g

    def to_dict(self) -> dict:
        return {"n": self.n, "edges": [list(e) for e in self.edges]}

    @classmethod
    def from_dict(cls, data) -> "Graph":
        return cls(int(data["n"]), tuple(tuple(e) for e in data["edges"]))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text) -> "Graph":
        return cls.from_dict(json.loads(text))


def complete_graph(n) -> Graph:
    return Graph(n, tuple((i, j) for i in range(n) for j in range(i + 1, n)))


def cycle_graph(n) -> Graph:
    return Graph(n, tuple((i, (i + 1) % n) for i in range(n)))


def path_graph(n) -> Graph:
    return Graph(n, tuple((i, i + 1) for i in range(n - 1)))


def grid_graph(rows, cols) -> Graph:
    edges = []
    for r in range(rows):
        for c in range(cols):
            v = r * cols + c
            if c + 1 < cols:
                edges.append((v, v + 1))
            if r + 1 < rows:
                edges.append((v, v + cols))
    return Graph(rows * cols, tuple(edges))


def complete_bipartite(a, b) -> Graph:
    return Graph(a + b, tuple((i, a + j) for i in range(a) for j in range(b)))


# ---------------------------------------------------------------------------
# Rotation systems and faces (shared with multigraph code elsewhere)
# ---------------------------------------------------------------------------

def dart_tail(edges, d):
    return edges[d >> 1][d & 1]


def dart_head(edges, d):
    return edges[d >> 1][1 - (d & 1)]


def rotation_to_darts(edges, rotation):
    """Convert per-vertex edge-index rotations into outgoing-dart rotations."""
    out = []
    for v, rot in enumerate(rotation):
        ds = []
        for e in rot:
            a, b = edges[e]
            ds.append(2 * e if a == v else 2 * e + 1)
        out.append(ds)
    return out


def face_walks(edges, dart_rotation):
    """Trace all faces of a rotation system.

    Returns ``(faces, face_of)`` where ``faces`` is a list of dart cycles and
    ``face_of[d]`` the face containing dart ``d``.
    """
    nd = 2 * len(edges)
    prev_in_rot = [0] * nd
    for rot in dart_rotation:
        k = len(rot)
        for i, d in enumerate(rot):
            prev_in_rot[d] = rot[i - 1] if k else d
    face_of = [-1] * nd
    faces = []
    for start in range(nd):
        if face_of[start] >= 0:
            continue
        fid = len(faces)
        walk = []
        d = start
        while face_of[d] < 0:
            face_of[d] = fid
            walk.append(d)
            d = prev_in_rot[d ^ 1]
        faces.append(walk)
    return faces, face_of


# ---------------------------------------------------------------------------
# Planar embedding
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PlanarEmbedding:
    """A graph together with a rotation system (cyclic edge order per vertex)."""

    graph: Graph
    rotation: tuple

    def __post_init__(self):
        rot = tuple(tuple(int(e) for e in r) for r in self.rotation)
        object.__setattr__(self, "rotation", rot)
        if len(rot) != self.graph.n:
            raise ValueError("rotation must list every vertex")
        for v, r in enumerate(rot):
            if sorted(r) != sorted(self.graph.edge_index[(min(v, w), max(v, w))]
                                   for w in self.graph.adjacency[v]):
                raise ValueError(f"rotation at vertex {v} does not match its edges")

    @cached_property
    def darts(self) -> list:
        return rotation_to_darts(self.graph.edges, self.rotation)

    @cached_property
    def _faces(self):
        return face_walks(self.graph.edges, self.darts)

    @property
    def faces(self) -> list:
        """Faces as lists of darts."""
        return self._faces[0]

    @property
    def face_of(self) -> list:
        return self._faces[1]

    def face_vertices(self, face) -> list:
        return [dart_tail(self.graph.edges, d) for d in face]

    def euler_ok(self) -> bool:
        """Check ``V - E + F = 2`` on every connected component."""
        g = self.graph
        comp_of = [0] * g.n
        comps = g.components()
        for ci, comp in enumerate(comps):
            for v in comp:
                comp_of[v] = ci
        v_count = [len(c) for c in comps]
        e_count = [0] * len(comps)
        f_count = [0] * len(comps)
        for v, w in g.edges:
            e_count[comp_of[v]] += 1
        for face in self.faces:
            f_count[comp_of[dart_tail(g.edges, face[0])]] += 1
        for ci in range(len(comps)):
            faces = f_count[ci] if e_count[ci] else 1
            if v_count[ci] - e_count[ci] + faces != 2:
                return False
        return True

    def is_triangulated(self) -> bool:
        return all(len(f) == 3 for f in self.faces)

    def to_dict(self) -> dict:
        d = self.graph.to_dict()
        d["rotation"] = [list(r) for r in self.rotation]
        return d

    @classmethod
    def from_dict(cls, data) -> "PlanarEmbedding":
        return cls(Graph.from_dict(data), tuple(tuple(r) for r in data["rotation"]))


@dataclass(frozen=True)
class NonPlanarWitness:
    """Kuratowski subgraph certifying non-planarity."""

    kind: str  # "K5" or "K33"
    edges: tuple = field(default=())


def planar_embed(graph: Graph):
    """Return a :class:`PlanarEmbedding` of ``graph`` or a :class:`NonPlanarWitness`."""
    planar, emb = nx.check_planarity(graph.to_networkx(), counterexample=True)
    if not planar:
        degs = [d for _, d in emb.degree() if d >= 3]
        kind = "K5" if degs and max(degs) >= 4 and len(degs) == 5 else "K33"
        return NonPlanarWitness(kind, tuple(sorted(tuple(sorted(e)) for e in emb.edges())))
    rotation = []
    for v in range(graph.n):
        if graph.degree(v) == 0:
            rotation.append(())
            continue
        order = list(emb.neighbors_cw_order(v))
        rotation.append(tuple(graph.find_edge(v, w) for w in order))
    result = PlanarEmbedding(graph, tuple(rotation))
    if not result.euler_ok():
        raise IsingError("embedding failed the Euler check")
    return result


def is_planar(graph: Graph) -> bool:
    return isinstance(planar_embed(graph), PlanarEmbedding)


# ---------------------------------------------------------------------------
# Triangulation
# ---------------------------------------------------------------------------

def triangulate(embedding: PlanarEmbedding):
    """Add chords until every face is a triangle.

    The graph must be connected with at least three vertices.  Chords never
    duplicate an existing edge.  Returns ``(embedding, added_edges)`` where
    the added edges are indices into the new graph's edge list (they are
    appended after the original edges).
    """
    g = embedding.graph
    if g.n < 3:
        raise ValueError("triangulation needs at least 3 vertices")
    if not g.is_connected():
        raise ValueError("triangulation needs a connected graph")
    edges = list(g.edges)
    adj = set(g.edges)
    rot_next, rot_prev = {}, {}
    for rot in embedding.darts:
        k = len(rot)
        for i, d in enumerate(rot):
            rot_next[d] = rot[(i + 1) % k]
            rot_prev[d] = rot[i - 1]
    added = []

    def tail(d):
        return edges[d >> 1][d & 1]

    def insert_after(d_new, d_ref):
        # place d_new right after d_ref in the rotation of their common tail
        nxt = rot_next[d_ref]
        rot_next[d_ref] = d_new
        rot_prev[d_new] = d_ref
        rot_next[d_new] = nxt
        rot_prev[nxt] = d_new

    for face in [list(f) for f in embedding.faces]:
        k = len(face)
        if k <= 3:
            continue
        nxt_f = {face[i]: face[(i + 1) % k] for i in range(k)}
        prv_f = {face[i]: face[i - 1] for i in range(k)}
        cur = face[0]
        stall = 0
        while k > 3:
            d1 = nxt_f[cur]
            d2 = nxt_f[d1]
            a, b = tail(cur), tail(d2)
            key = (a, b) if a < b else (b, a)
            if a != b and key not in adj:
                e = len(edges)
                edges.append((a, b))
                adj.add(key)
                added.append(e)
                chord, back = 2 * e, 2 * e + 1
                # chord leaves a between cur and the reverse of the previous dart
                insert_after(chord, cur)
                insert_after(back, d2)
                # the triangle cur, d1, back is closed off; the face continues
                p = prv_f[cur]
                nxt_f[p] = chord
                prv_f[chord] = p
                nxt_f[chord] = d2
                prv_f[d2] = chord
                k -= 1
                cur = chord
                stall = 0
            else:
                cur = d1
                stall += 1
                if stall > 2 * k:
                    raise IsingError("no admissible chord found while triangulating")
    new_graph = Graph(g.n, tuple(edges))
    # Graph keeps (min, max) order; appended edges were already normalised
    rotation = []
    for v in range(g.n):
        first = None
        for d in (embedding.darts[v] if embedding.darts[v] else []):
            first = d
            break
        if first is None:
            # vertex had no edges before; every vertex has one after, find it
            first = next(2 * e + (0 if edges[e][0] == v else 1)
                         for e in added if v in edges[e])
        order = [first >> 1]
        d = rot_next[first]
        while d != first:
            order.append(d >> 1)
            d = rot_next[d]
        rotation.append(tuple(order))
    return PlanarEmbedding(new_graph, tuple(rotation)), added


# ---------------------------------------------------------------------------
# Expanded dual
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExpandedDual:
    """Expanded dual of a triangulated planar graph.

    Star vertex ``d`` is the Fisher-city corner attached to dart ``d`` of the
    source graph.  Star edge ``e < E`` is the intercity edge crossing source
    edge ``e`` (so ``g_map`` is the identity on those indices); the remaining
    ``2E`` star edges are city edges.
    """

    source: PlanarEmbedding
    star: PlanarEmbedding
    intercity_edges: tuple
    city_edges: tuple
    g_map: tuple

    @property
    def base_matching(self) -> tuple:
        return self.intercity_edges


def expanded_dual(embedding: PlanarEmbedding) -> ExpandedDual:
    g = embedding.graph
    faces = embedding.faces
    if any(len(f) != 3 for f in faces):
        raise ValueError("expanded dual requires a triangulated embedding")
    m = g.m
    nstar = 2 * m
    edges = [(2 * e, 2 * e + 1) for e in range(m)]
    city_of_pair = {}
    for face in faces:
        for i in range(3):
            a, b = face[i], face[(i + 1) % 3]
            city_of_pair[(a, b)] = len(edges)
            edges.append((a, b) if a < b else (b, a))
    rotation = []
    nxt_in_face = {}
    prv_in_face = {}
    for face in faces:
        for i in range(3):
            nxt_in_face[face[i]] = face[(i + 1) % 3]
            prv_in_face[face[i]] = face[i - 1]
    for d in range(nstar):
        nd, pd = nxt_in_face[d], prv_in_face[d]
        rotation.append((d >> 1, city_of_pair[(d, nd)], city_of_pair[(pd, d)]))
    star = PlanarEmbedding(Graph(nstar, tuple(edges)), tuple(rotation))
    inter = tuple(range(m))
    city = tuple(range(m, len(edges)))
    return ExpandedDual(embedding, star, inter, city, inter)
