"""Planar separators and nested dissection on embedded multigraphs.

The separator follows the classic level-structure construction: cut along
two breadth-first levels around the median level, and if the middle band is
still too heavy, shrink the inner levels to a single root and cut the band
along a fundamental cycle of a triangulation.  Resulting pieces have at
most ``2n/3`` vertices and the separator at most ``2 * sqrt(2) * sqrt(n)``
vertices.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field


# ---------------------------------------------------------------------------
# Light embedded multigraph
# ---------------------------------------------------------------------------

class EmbeddedGraph:
    """Rotation system over ``edges`` where ``rot[v]`` lists outgoing darts.

    Dart ``2e`` runs ``edges[e][0] -> edges[e][1]``, dart ``2e + 1`` back.
    """

    __slots__ = ("n", "edges", "rot")

    def __init__(self, n, edges, rot):
        self.n = n
        self.edges = edges
        self.rot = rot

    @classmethod
    def from_embedding(cls, emb):
        return cls(emb.graph.n, list(emb.graph.edges), [list(r) for r in emb.darts])

    def head(self, d):
        return self.edges[d >> 1][1 - (d & 1)]

    def adjacency(self):
        edges = self.edges
        return [[edges[d >> 1][1 - (d & 1)] for d in r] for r in self.rot]

    def induced(self, vertices):
        """Induced sub-embedding; returns (graph, local_to_global list)."""
        local = {v: i for i, v in enumerate(vertices)}
        edges, rot = [], [[] for _ in vertices]
        new_id = {}
        old_edges = self.edges
        for i, v in enumerate(vertices):
            for d in self.rot[v]:
                e = d >> 1
                a, b = old_edges[e]
                w = b if (d & 1) == 0 else a
                if w not in local:
                    continue
                ne = new_id.get(e)
                if ne is None:
                    ne = len(edges)
                    new_id[e] = ne
                    edges.append((local[a], local[b]))
                rot[i].append(2 * ne + (d & 1))
        return EmbeddedGraph(len(vertices), edges, rot), list(vertices)

    def contract_pairs(self, pairs):
        """Contract each edge ``pairs[k] = (a, b)`` into vertex ``k``.

        Every vertex must lie in exactly one pair and each pair must be an
        edge.  Loops are dropped and each parallel class is reduced to one
        representative edge (the same one at both ends), so the rotation
        system stays planar.
        """
        owner = [0] * self.n
        for k, (a, b) in enumerate(pairs):
            owner[a] = k
            owner[b] = k
        old_edges = self.edges
        seqs = []
        rep = {}
        for k, (a, b) in enumerate(pairs):
            seq = []
            for x, y in ((a, b), (b, a)):
                r = self.rot[x]
                start = None
                for i, d in enumerate(r):
                    e = d >> 1
                    if old_edges[e][1 - (d & 1)] == y:
                        start = i
                        break
                if start is None:
                    raise ValueError("pair is not an edge of the graph")
                for i in range(1, len(r)):
                    d = r[(start + i) % len(r)]
                    e = d >> 1
                    j = owner[old_edges[e][1 - (d & 1)]]
                    if j == k:
                        continue
                    seq.append((d, j))
                    key = (k, j) if k < j else (j, k)
                    if key not in rep or e < rep[key]:
                        rep[key] = e
            seqs.append(seq)
        edges = sorted(rep)
        new_id = {key: i for i, key in enumerate(edges)}
        rot = []
        for k, seq in enumerate(seqs):
            out = []
            for d, j in seq:
                key = (k, j) if k < j else (j, k)
                if rep[key] == d >> 1:
                    ne = new_id[key]
                    out.append(2 * ne if key[0] == k else 2 * ne + 1)
            rot.append(out)
        return EmbeddedGraph(len(pairs), edges, rot)


def faces_of(g: EmbeddedGraph):
    nd = 2 * len(g.edges)
    prev_in_rot = [0] * nd
    for r in g.rot:
        for i, d in enumerate(r):
            prev_in_rot[d] = r[i - 1]
    face_of = [-1] * nd
    faces = []
    for s in range(nd):
        if face_of[s] >= 0:
            continue
        fid = len(faces)
        walk = []
        d = s
        while face_of[d] < 0:
            face_of[d] = fid
            walk.append(d)
            d = prev_in_rot[d ^ 1]
        faces.append(walk)
    return faces, face_of


def components(n, adj, removed=None):
    removed = removed or set()
    label = [-1] * n
    comps = []
    for s in range(n):
        if label[s] >= 0 or s in removed:
            continue
        cid = len(comps)
        label[s] = cid
        comp = [s]
        stack = [s]
        while stack:
            v = stack.pop()
            for w in adj[v]:
                if label[w] < 0 and w not in removed:
                    label[w] = cid
                    comp.append(w)
                    stack.append(w)
        comps.append(comp)
    return comps


# ---------------------------------------------------------------------------
# Separator
# ---------------------------------------------------------------------------

@dataclass
class Separation:
    part1: list
    part2: list
    separator: list
    pieces: list = field(default_factory=list)


def _group(pieces, n):
    """Split pieces into two groups, neither heavier than 2n/3 when possible."""
    pieces = sorted(pieces, key=len, reverse=True)
    if not pieces:
        return [], []
    if 3 * len(pieces[0]) >= n:
        return list(pieces[0]), [v for p in pieces[1:] for v in p]
    a, b = [], []
    for p in pieces:
        if 3 * len(a) < n:
            a.extend(p)
        else:
            b.extend(p)
    return a, b


def _bfs_levels(adj, root, allowed=None):
    level = {root: 0}
    order = [root]
    parent = {root: -1}
    q = deque([root])
    while q:
        v = q.popleft()
        for w in adj[v]:
            if w not in level and (allowed is None or w in allowed):
                level[w] = level[v] + 1
                parent[w] = v
                order.append(w)
                q.append(w)
    return level, parent, order


def planar_separator(g: EmbeddedGraph) -> Separation:
    """Separate a planar embedded graph (possibly disconnected)."""
    n = g.n
    adj = g.adjacency()
    comps = components(n, adj)
    big = max(comps, key=len) if comps else []
    if 3 * len(big) <= 2 * n:
        a, b = _group(comps, n)
        return Separation(a, b, [], comps)
    if len(comps) > 1:
        sub, back = g.induced(big)
        inner = planar_separator(sub)
        sep = [back[v] for v in inner.separator]
        pieces = [[back[v] for v in p] for p in inner.pieces]
        pieces += [c for c in comps if c is not big]
    else:
        sep = _connected_separator(g, adj)
        pieces = components(n, adj, set(sep))
    a, b = _group(pieces, n)
    return Separation(a, b, sep, pieces)


def _connected_separator(g: EmbeddedGraph, adj):
    n = g.n
    root = 0
    level, parent, order = _bfs_levels(adj, root)
    depth = level[order[-1]]
    sizes = [0] * (depth + 2)
    for v in order:
        sizes[level[v]] += 1

    def lsize(l):
        return sizes[l] if 0 <= l <= depth else 0

    cum = 0
    l1 = 0
    for l in range(depth + 1):
        cum += sizes[l]
        if 2 * cum >= n:
            l1 = l
            break
    k = cum
    l0 = None
    for l in range(l1, -2, -1):
        if lsize(l) + 2 * (l1 - l) <= 2 * math.sqrt(k):
            l0 = l
            break
    if l0 is None:
        l0 = min(range(-1, l1 + 1), key=lambda l: lsize(l) + 2 * (l1 - l))
    l2 = None
    for l in range(l1 + 1, depth + 2):
        if lsize(l) + 2 * (l - l1 - 1) <= 2 * math.sqrt(n - k):
            l2 = l
            break
    if l2 is None:
        l2 = min(range(l1 + 1, depth + 2), key=lambda l: lsize(l) + 2 * (l - l1 - 1))
    level_sep = [v for v in order if level[v] == l0 or level[v] == l2]
    middle = [v for v in order if l0 < level[v] < l2]
    if 3 * len(middle) <= 2 * n:
        return level_sep
    cycle = _cycle_separator(g, adj, level, parent, l0, l2, middle)
    return level_sep + cycle


def _boundary_darts(g, inner_set, parent, start):
    """Darts leaving ``inner_set`` in the cyclic order seen after shrinking it.

    Walks around the breadth-first tree of the inner set, so the result is
    the rotation of the vertex obtained by contracting the whole set.
    """
    rot, edges = g.rot, g.edges
    out = []
    stack = [[start, 0, 0, len(rot[start])]]
    while stack:
        fr = stack[-1]
        v, begin, i, limit = fr
        if i >= limit:
            stack.pop()
            continue
        fr[2] = i + 1
        r = rot[v]
        d = r[(begin + i) % len(r)]
        e = edges[d >> 1]
        w = e[1 - (d & 1)]
        if w in inner_set:
            if parent.get(w) == v:
                rw = rot[w]
                stack.append([w, rw.index(d ^ 1) + 1, 0, len(rw) - 1])
            continue
        out.append(d)
    return out


def _cycle_separator(g, adj, level, parent, l0, l2, middle):
    """Fundamental-cycle cut of the band of levels strictly between l0 and l2."""
    from .graph import Graph, PlanarEmbedding, triangulate

    root = next(v for v in level if level[v] == 0)
    if l0 >= 0:
        inner = [v for v in level if level[v] <= l0]
        band = middle
    else:
        inner = [root]
        band = [v for v in middle if v != root]
    local = {v: i + 1 for i, v in enumerate(band)}
    inner_set = set(inner)
    old_edges = g.edges
    m = len(band) + 1
    nbr_rot = [[] for _ in range(m)]
    rep_to_root = {}
    for d in _boundary_darts(g, inner_set, parent, root):
        w = old_edges[d >> 1][1 - (d & 1)]
        if w in local and local[w] not in rep_to_root:
            rep_to_root[local[w]] = d >> 1
            nbr_rot[0].append(local[w])
    for v in band:
        i = local[v]
        seen = set()
        for d in g.rot[v]:
            e = d >> 1
            w = old_edges[e][1 - (d & 1)]
            if w in local:
                if local[w] not in seen:
                    seen.add(local[w])
                    nbr_rot[i].append(local[w])
            elif w in inner_set and rep_to_root.get(i) == e:
                nbr_rot[i].append(0)
    if m < 3:
        return list(band)
    edge_list = sorted({(min(i, w), max(i, w)) for i in range(m) for w in nbr_rot[i]})
    graph = Graph(m, tuple(edge_list))
    rotation = tuple(tuple(graph.find_edge(i, w) for w in nbr_rot[i]) for i in range(m))
    emb = PlanarEmbedding(graph, rotation)
    emb, _ = triangulate(emb)
    graph = emb.graph
    lev, par, order = _bfs_levels(graph.adjacency, 0)
    faces, face_of = emb.faces, emb.face_of
    tree_edge = set()
    for v in order[1:]:
        tree_edge.add(graph.find_edge(v, par[v]))
    outer = face_of[emb.darts[0][0]]
    fparent = {outer: None}
    forder = [outer]
    q = deque([outer])
    while q:
        f = q.popleft()
        for d in faces[f]:
            e = d >> 1
            if e in tree_edge:
                continue
            h = face_of[d ^ 1]
            if h not in fparent:
                fparent[h] = e
                forder.append(h)
                q.append(h)
    sub = {f: 1 for f in forder}
    for f in reversed(forder[1:]):
        e = fparent[f]
        other = face_of[2 * e] if face_of[2 * e] != f else face_of[2 * e + 1]
        sub[other] += sub[f]
    total = len(band)
    best = None
    for f in forder[1:]:
        e = fparent[f]
        u, w = graph.edges[e]
        path_u, path_w = [u], [w]
        x, y = u, w
        while lev[x] > lev[y]:
            x = par[x]
            path_u.append(x)
        while lev[y] > lev[x]:
            y = par[y]
            path_w.append(y)
        while x != y:
            x = par[x]
            y = par[y]
            path_u.append(x)
            path_w.append(y)
        cyc = path_u + path_w[:-1]
        inside = 1 + (sub[f] - len(cyc)) // 2
        on_band = len(cyc) - (1 if 0 in cyc else 0)
        score = max(inside, total - inside - on_band)
        if best is None or score < best[0]:
            best = (score, cyc)
            if 3 * score <= 2 * total:
                break
    back = {i: v for v, i in local.items()}
    return [back[i] for i in best[1] if i != 0]


# ---------------------------------------------------------------------------
# Nested dissection
# ---------------------------------------------------------------------------

@dataclass
class DissectionNode:
    """Vertices eliminated at this node and the child subtrees."""

    vertices: list
    children: list = field(default_factory=list)


def nested_dissection(g: EmbeddedGraph, vertices=None, leaf_size=16, top=None):
    """Nested dissection tree over ``vertices`` of ``g`` (default: all).

    ``top`` optionally fixes the top-level separator.  Each node's
    ``vertices`` are eliminated after those of all its descendants.
    """
    if vertices is None:
        vertices = list(range(g.n))
    if top is None and len(vertices) <= leaf_size:
        return DissectionNode(list(vertices))
    if len(vertices) == g.n:
        sub, back = g, list(range(g.n))
    else:
        sub, back = g.induced(vertices)
    if top is None:
        sep_local = planar_separator(sub).separator
    else:
        pos = {v: i for i, v in enumerate(back)}
        sep_local = [pos[v] for v in top]
    node = DissectionNode([back[v] for v in sep_local])
    for comp in components(sub.n, sub.adjacency(), set(sep_local)):
        child = nested_dissection(sub, comp, leaf_size)
        _relabel(child, back)
        node.children.append(child)
    return node


def _relabel(node, back):
    node.vertices = [back[v] for v in node.vertices]
    for c in node.children:
        _relabel(c, back)


def postorder(node):
    out = []
    stack = [(node, False)]
    while stack:
        nd, done = stack.pop()
        if done:
            out.append(nd)
            continue
        stack.append((nd, True))
        for c in reversed(nd.children):
            stack.append((c, False))
    return out
