"""Weighted perfect matchings on planar graphs of degree at most three.

The partition function ``Z = sum_M prod_{e in M} c_e`` is the Pfaffian of a
Kasteleyn matrix ``K`` built from a Pfaffian orientation, so
``log Z = 0.5 * log|det K|``.  Vertices are ordered so that the edges of a
base perfect matching occupy consecutive slots ``(2k, 2k+1)``; swapping the
two columns of every such slot gives a matrix ``Kbar`` whose leading
principal minors are nonsingular, and ``Kbar`` is factorized by 2x2 block
elimination.  Slots follow a nested dissection order of the graph obtained
by contracting the base matching, and elimination is organised in frontal
matrices along the dissection tree.

Sampling uses the separator recursion: draw the matching edges at a
separator from conditional probabilities given by minors of ``K^-1``, then
recurse independently on the remaining pieces.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .errors import NoPerfectMatching, NumericalBreakdown
from .graph import Graph, PlanarEmbedding, face_walks
from .matching import perfect_matching
from .separator import (EmbeddedGraph, components, nested_dissection,
                        planar_separator, postorder)

PIVOT_TOL = 1e-12
LEAF_PAIRS = 24        # dissection leaves, in matched pairs
DENSE_SAMPLE = 64      # subproblems up to this many vertices are sampled densely
DENSE_INVERSE = 3000   # dense K^-1 for edge probabilities up to this size
REFRESH_TOL = 1e-8     # draw probabilities off by more than this trigger a fresh inverse


# ---------------------------------------------------------------------------
# Model
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PMModel:
    """Perfect-matching model: planar graph, positive edge weights, embedding.

    ``base_pm`` optionally lists edge indices of a known perfect matching.
    """

    graph: Graph
    weights: np.ndarray
    embedding: PlanarEmbedding
    base_pm: tuple = None

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "weights", w)
        if w.shape != (self.graph.m,):
            raise ValueError("one weight per edge is required")
        if not np.all(w > 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite and strictly positive")
        if any(self.graph.degree(v) > 3 for v in range(self.graph.n)):
            raise ValueError("vertex degree above 3 is not supported")
        if self.embedding.graph is not self.graph and self.embedding.graph != self.graph:
            raise ValueError("embedding must belong to the model graph")


@dataclass
class KasteleynSystem:
    """Orientation, base matching and elimination order of a model."""

    orientation: np.ndarray
    base_pm: list
    order: list = field(default_factory=list)
    log_det: float = float("nan")


# ---------------------------------------------------------------------------
# Pfaffian orientation
# ---------------------------------------------------------------------------

def pfaffian_orient(model: PMModel) -> np.ndarray:
    """Orientation with an odd number of clockwise edges on every inner face.

    Returns ``+1`` for edge ``(u, v)`` oriented ``u -> v`` (as stored) and
    ``-1`` otherwise.  Each connected component gets its own outer face.
    """
    g = model.graph
    edges = g.edges
    faces, face_of = face_walks(edges, model.embedding.darts)
    orient = np.zeros(g.m, dtype=int)
    # spanning forest, arbitrarily oriented
    seen = [False] * g.n
    tree = np.zeros(g.m, dtype=bool)
    for s in range(g.n):
        if seen[s]:
            continue
        seen[s] = True
        stack = [s]
        while stack:
            v = stack.pop()
            for d in model.embedding.darts[v]:
                e = d >> 1
                w = edges[e][1 - (d & 1)]
                if not seen[w]:
                    seen[w] = True
                    tree[e] = True
                    orient[e] = 1
                    stack.append(w)
    # faces form a tree through the non-tree edges; fix faces leaves first
    fdone = [False] * len(faces)
    for root in range(len(faces)):
        if fdone[root]:
            continue
        # root = first face met in this component serves as the outer face
        fdone[root] = True
        order = [root]
        parent_edge = {root: -1}
        i = 0
        while i < len(order):
            f = order[i]
            i += 1
            for d in faces[f]:
                e = d >> 1
                if tree[e]:
                    continue
                h = face_of[d ^ 1]
                if not fdone[h]:
                    fdone[h] = True
                    parent_edge[h] = e
                    order.append(h)
        for f in reversed(order[1:]):
            pe = parent_edge[f]
            agree = 0
            pdart = None
            for d in faces[f]:
                e = d >> 1
                if e == pe:
                    pdart = d
                    continue
                if (orient[e] == 1) == ((d & 1) == 0):
                    agree += 1
            # make the count odd; the parent edge is traversed along pdart
            want_agree = agree % 2 == 0
            along = 1 if (pdart & 1) == 0 else -1
            orient[pe] = along if want_agree else -along
    return orient


def kasteleyn_entries(model: PMModel, orient=None):
    """Per-vertex lists ``(neighbour, K[v, neighbour], edge)``."""
    if orient is None:
        orient = pfaffian_orient(model)
    nbrs = [[] for _ in range(model.graph.n)]
    for e, (u, v) in enumerate(model.graph.edges):
        val = model.weights[e] * orient[e]
        nbrs[u].append((v, val, e))
        nbrs[v].append((u, -val, e))
    return nbrs


def kasteleyn_matrix(model: PMModel, orient=None) -> np.ndarray:
    """Dense Kasteleyn matrix (for tests and small problems)."""
    n = model.graph.n
    K = np.zeros((n, n))
    for v, row in enumerate(kasteleyn_entries(model, orient)):
        for w, val, _ in row:
            K[v, w] = val
    return K


# ---------------------------------------------------------------------------
# Base matching and nested dissection
# ---------------------------------------------------------------------------

def _base_pairs(model: PMModel):
    g = model.graph
    if model.base_pm is not None:
        pairs = [g.edges[e] for e in model.base_pm]
        covered = sorted(v for p in pairs for v in p)
        if covered != list(range(g.n)):
            raise ValueError("base_pm is not a perfect matching")
        return pairs
    if g.n % 2:
        raise NoPerfectMatching("odd number of vertices")
    match = perfect_matching(range(g.n), g.adjacency)
    return [(v, match[v]) for v in range(g.n) if v < match[v]]


def _balanced(model: PMModel):
    """Rescale weights so every base-matched edge has weight one.

    Multiplying all edges at ``v`` by ``d_v`` multiplies every perfect
    matching by ``prod_v d_v``, so probabilities are unchanged and
    ``log Z = log Z' - sum_v log d_v``.  Returns ``(model', that offset)``.
    """
    pairs = _base_pairs(model)
    g = model.graph
    d = np.ones(g.n)
    base = []
    for a, b in pairs:
        e = g.find_edge(a, b)
        base.append(e)
        d[a] = d[b] = model.weights[e] ** -0.5
    if not g.m:
        return model, 0.0
    uv = np.array(g.edges, dtype=int)
    w = model.weights * d[uv[:, 0]] * d[uv[:, 1]]
    return PMModel(g, w, model.embedding, tuple(base)), -float(np.log(d).sum())


def nested_dissection_order(system_or_model, leaf_size=LEAF_PAIRS):
    """Vertex order: base-matched pairs in nested dissection order.

    Accepts a :class:`PMModel` (a base matching is found or taken from the
    model).  Returns ``(order, tree, pairs)``: ``order`` lists vertices with
    matched partners adjacent, ``tree`` is the dissection tree over pair
    indices.
    """
    model = system_or_model
    pairs = _base_pairs(model)
    eg = EmbeddedGraph.from_embedding(model.embedding)
    gss = eg.contract_pairs(pairs)
    tree = nested_dissection(gss, leaf_size=leaf_size)
    order = []
    for node in postorder(tree):
        for p in node.vertices:
            order.extend(pairs[p])
    return order, tree, pairs


# ---------------------------------------------------------------------------
# Frontal 2x2 block elimination
# ---------------------------------------------------------------------------

def _eliminate(F, s2):
    """Eliminate the leading ``s2`` rows/columns of a frontal matrix.

    The leading block always consists of whole base-matched pairs, so its
    Schur complement in ``K`` is nonsingular whatever the order inside the
    block; it is factorized with partial pivoting restricted to the block.
    The trailing block of ``F`` is overwritten with its Schur complement.
    Returns ``log|det|`` of the leading block.
    """
    A = F[:s2, :s2]
    rows = np.abs(A).max(axis=1)
    lu, piv = lu_factor(A, check_finite=False)
    d = np.abs(np.diag(lu))
    perm = np.arange(s2)
    for i, p in enumerate(piv):
        perm[i], perm[p] = perm[p], perm[i]
    # each pivot is compared with the scale of the row it came from
    if not np.all(np.isfinite(d)) or np.any(d <= PIVOT_TOL * rows[perm]):
        i = int(np.argmin(d / np.maximum(rows[perm], 1e-300)))
        raise NumericalBreakdown(f"singular pivot block (pivot {d[i]:.3e}, row scale {rows[perm][i]:.3e})")
    if s2 < F.shape[0]:
        X = lu_solve((lu, piv), F[:s2, s2:], check_finite=False)
        F[s2:, s2:] -= F[s2:, :s2] @ X
    return float(np.log(d).sum())


class _Factorization:
    """Multifrontal elimination of ``Kbar`` for one (sub)problem.

    ``nbrs`` gives Kasteleyn entries by local vertex, ``pairs`` the base
    matching in local ids and ``eg`` the embedded graph in local ids.
    """

    def __init__(self, nbrs, pairs, eg, top=None, keep_root=False, leaf_size=LEAF_PAIRS):
        self.pairs = pairs
        n = sum(2 for _ in pairs)
        pair_of = [0] * n
        slot = [0] * n
        partner = [0] * n
        for k, (a, b) in enumerate(pairs):
            pair_of[a] = pair_of[b] = k
            slot[a], slot[b] = 0, 1
            partner[a], partner[b] = b, a
        self.pair_of, self.slot, self.partner = pair_of, slot, partner
        gss = eg.contract_pairs(pairs)
        gadj = gss.adjacency()
        tree = nested_dissection(gss, leaf_size=leaf_size, top=top)
        nodes = postorder(tree)
        pos = [0] * len(pairs)
        last = {}
        c = 0
        for nd in nodes:
            for p in nd.vertices:
                pos[p] = c
                c += 1
            last[id(nd)] = c - 1
        self.order = [v for nd in nodes for p in nd.vertices for v in pairs[p]]
        self.tree = tree
        logdet = 0.0
        updates = {}
        boundary = {}
        root_front = None
        for nd in nodes:
            S = nd.vertices
            lim = last[id(nd)]
            cand = set()
            for ch in nd.children:
                cand.update(boundary[id(ch)])
            for p in S:
                cand.update(gadj[p])
            bnd = sorted((q for q in cand if pos[q] > lim), key=pos.__getitem__)
            fpairs = list(S) + bnd
            fidx = {p: i for i, p in enumerate(fpairs)}
            size = 2 * len(fpairs)
            F = np.zeros((size, size))
            for p in S:
                pp = pos[p]
                for x in pairs[p]:
                    rx = 2 * fidx[p] + slot[x]
                    for y, val, _ in nbrs[x]:
                        q = pair_of[y]
                        if pos[q] > pp or (q == p and x < y):
                            ry = 2 * fidx[q] + slot[y]
                            # K[x, y] sits in column slot of partner(y)
                            F[rx, 2 * fidx[q] + 1 - slot[y]] += val
                            F[ry, 2 * fidx[p] + 1 - slot[x]] -= val
            for ch in nd.children:
                cb = boundary.pop(id(ch))
                U = updates.pop(id(ch))
                if not cb:
                    continue
                idx = np.empty(2 * len(cb), dtype=int)
                for i, q in enumerate(cb):
                    idx[2 * i] = 2 * fidx[q]
                    idx[2 * i + 1] = 2 * fidx[q] + 1
                F[np.ix_(idx, idx)] += U
            if nd is tree and keep_root:
                root_front = (F, fpairs)
                break
            logdet += _eliminate(F, 2 * len(S))
            updates[id(nd)] = F[2 * len(S):, 2 * len(S):]
            boundary[id(nd)] = bnd
        self.logdet = logdet
        self.root_front = root_front

    def front_index(self, fpairs):
        fidx = {p: i for i, p in enumerate(fpairs)}
        return [2 * fidx[self.pair_of[v]] + self.slot[v] for v in range(len(self.pair_of))
                if self.pair_of[v] in fidx]


def _local_problem(model: PMModel):
    orient = pfaffian_orient(model)
    nbrs = kasteleyn_entries(model, orient)
    pairs = _base_pairs(model)
    eg = EmbeddedGraph.from_embedding(model.embedding)
    return orient, nbrs, pairs, eg


def kasteleyn_system(model: PMModel) -> KasteleynSystem:
    orient, nbrs, pairs, eg = _local_problem(model)
    if not pairs:
        return KasteleynSystem(orient, [], [], 0.0)
    fac = _Factorization(nbrs, pairs, eg)
    return KasteleynSystem(orient, pairs, fac.order, fac.logdet)


def log_partition(model: PMModel) -> float:
    """``log Z`` of the perfect-matching model, ``0.5 * log|det K|``."""
    if model.graph.n == 0:
        return 0.0
    model, offset = _balanced(model)
    return 0.5 * kasteleyn_system(model).log_det + offset


# ---------------------------------------------------------------------------
# Edge probabilities
# ---------------------------------------------------------------------------

def _dense_kinv(model: PMModel, orient=None):
    K = kasteleyn_matrix(model, orient)
    try:
        return np.linalg.inv(K)
    except np.linalg.LinAlgError as exc:
        raise NoPerfectMatching("Kasteleyn matrix is singular") from exc


def _removed_ratio(model, orient, e):
    """``Z(G - {u, v}) / Z(G)`` for edge ``e = (u, v)`` via two factorizations."""
    g = model.graph
    u, v = g.edges[e]
    nbrs = kasteleyn_entries(model, orient)
    pairs = _base_pairs(model)
    eg = EmbeddedGraph.from_embedding(model.embedding)
    full = _Factorization(nbrs, pairs, eg).logdet
    keep = [x for x in range(g.n) if x != u and x != v]
    local = {x: i for i, x in enumerate(keep)}
    sub_nbrs = [[(local[y], val, ed) for y, val, ed in nbrs[x] if y in local] for x in keep]
    sub_eg, _ = eg.induced(keep)
    adj = [[y for y, _, _ in row] for row in sub_nbrs]
    partner = {}
    for a, b in pairs:
        if a in local and b in local:
            partner[local[a]] = local[b]
            partner[local[b]] = local[a]
    match = perfect_matching(range(len(keep)), adj, partner)
    sub_pairs = [(x, match[x]) for x in range(len(keep)) if x < match[x]]
    part = _Factorization(sub_nbrs, sub_pairs, sub_eg).logdet if sub_pairs else 0.0
    return math.exp(0.5 * (part - full))


def pm_edge_probability(model: PMModel, edge) -> float:
    """Probability that edge ``edge`` (index or endpoint pair) is in the matching."""
    g = model.graph
    e = edge if isinstance(edge, (int, np.integer)) else g.find_edge(*edge)
    if e is None:
        raise ValueError("edge not in graph")
    model, _ = _balanced(model)
    orient = pfaffian_orient(model)
    if g.n <= DENSE_INVERSE:
        kinv = _dense_kinv(model, orient)
        u, v = g.edges[e]
        return float(model.weights[e] * abs(kinv[u, v]))
    return float(model.weights[e] * _removed_ratio(model, orient, e))


def pm_edge_probabilities(model: PMModel) -> np.ndarray:
    """Inclusion probability of every edge."""
    g = model.graph
    model, _ = _balanced(model)
    orient = pfaffian_orient(model)
    if g.n <= DENSE_INVERSE:
        kinv = _dense_kinv(model, orient)
        uv = np.array(g.edges, dtype=int).reshape(-1, 2)
        return model.weights * np.abs(kinv[uv[:, 0], uv[:, 1]])
    return np.array([model.weights[e] * _removed_ratio(model, orient, e) for e in range(g.m)])


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------

def _draw_edges(order, adj_w, alive, saturated, kinv, rng, chosen):
    """Saturate every vertex of ``order`` by drawing matching edges.

    ``adj_w[v]`` lists ``(neighbour, weight, edge_id)``.  ``B`` holds
    ``K^-1`` restricted to the separator and its neighbours; after an edge
    ``(v, j)`` is drawn it is replaced by the inverse of the Kasteleyn matrix
    with ``v`` and ``j`` deleted, a rank-2 Schur update.  Then
    ``P(v ~ j | drawn so far) = c_vj * |B[v, j]|``.
    """
    wl = sorted({v for v in order if v not in saturated}
                | {j for v in order for j, _, _ in adj_w[v] if j in alive and j not in saturated})
    at = {v: i for i, v in enumerate(wl)}
    B = np.array(kinv(wl, wl), dtype=float)
    for v in order:
        if v in saturated:
            continue
        cands = [(j, c, e) for j, c, e in adj_w[v] if j in alive and j not in saturated]
        if not cands:
            raise NoPerfectMatching("vertex cannot be saturated")
        a = at[v]
        probs = np.array([c * abs(B[a, at[j]]) for j, c, _ in cands])
        total = probs.sum()
        if not np.isfinite(total) or total <= 0 or abs(total - 1.0) > 1e-4:
            raise NumericalBreakdown(f"separator probabilities sum to {total}")
        i = int(rng.choice(len(cands), p=probs / total))
        j, c, e = cands[i]
        b = at[j]
        s = B[a, b]
        # inverse of the skew 2x2 pivot [[0, s], [-s, 0]] is [[0, -1/s], [1/s, 0]]
        cols = B[:, [a, b]]
        rows = B[[a, b], :]
        B -= (np.outer(cols[:, 1], rows[0]) - np.outer(cols[:, 0], rows[1])) / s
        saturated.add(v)
        saturated.add(j)
        chosen.append(e)


def _sample_dense_batch(model: PMModel, size, rng):
    """``size`` draws for a small model sharing the sequential draw tree.

    Every draw saturates vertices in index order, so draws that agree so far
    share the same conditional probabilities.  At each decision the batch is
    split by a multinomial count instead of drawing one by one.
    """
    g = model.graph
    orient = pfaffian_orient(model)
    nbrs = kasteleyn_entries(model, orient)
    K = kasteleyn_matrix(model, orient)
    B0 = _dense_kinv(model, orient)
    out = []

    def split(B, sat, chosen, count):
        v = next((x for x in range(g.n) if not sat[x]), None)
        if v is None:
            out.append((tuple(sorted(chosen)), count))
            return
        cands = [(j, e) for j, _, e in nbrs[v] if not sat[j]]
        if not cands:
            raise NoPerfectMatching("vertex cannot be saturated")
        probs = np.array([model.weights[e] * abs(B[v, j]) for j, e in cands])
        total = probs.sum()
        if not np.isfinite(total) or abs(total - 1.0) > REFRESH_TOL:
            # the chained rank-2 updates lost accuracy: invert the remaining block afresh
            idx = np.flatnonzero(~np.asarray(sat))
            B = B.copy()
            try:
                B[np.ix_(idx, idx)] = np.linalg.inv(K[np.ix_(idx, idx)])
            except np.linalg.LinAlgError as exc:
                raise NumericalBreakdown("singular Kasteleyn block") from exc
            probs = np.array([model.weights[e] * abs(B[v, j]) for j, e in cands])
            total = probs.sum()
        if not np.isfinite(total) or abs(total - 1.0) > 1e-4:
            raise NumericalBreakdown(f"draw probabilities sum to {total}")
        counts = rng.multinomial(count, probs / total)
        for (j, e), k in zip(cands, counts):
            if not k:
                continue
            s = B[v, j]
            Bn = B - (np.outer(B[:, j], B[v]) - np.outer(B[:, v], B[j])) / s
            sat[v] = sat[j] = True
            chosen.append(e)
            split(Bn, sat, chosen, int(k))
            chosen.pop()
            sat[v] = sat[j] = False

    split(B0, [False] * g.n, [], int(size))
    draws = [m for m, k in out for _ in range(k)]
    perm = rng.permutation(len(draws))
    return [draws[i] for i in perm]


def sample_pm(model: PMModel, seed=None, size=None):
    """Draw perfect matchings with probability proportional to their weight.

    Returns sorted edge indices, or a list of ``size`` such tuples drawn
    independently.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    if model.graph.n:
        model, _ = _balanced(model)
    if size is not None:
        if model.graph.n == 0:
            return [()] * size
        if model.graph.n <= DENSE_SAMPLE:
            return _sample_dense_batch(model, size, rng)
        return [sample_pm(model, rng) for _ in range(size)]
    g = model.graph
    if g.n == 0:
        return ()
    orient = pfaffian_orient(model)
    nbrs = kasteleyn_entries(model, orient)
    adj_w = [[(w, model.weights[e], e) for w, _, e in row] for row in nbrs]
    eg = EmbeddedGraph.from_embedding(model.embedding)
    base = _base_pairs(model)
    partner = {}
    for a, b in base:
        partner[a], partner[b] = b, a
    chosen = []
    saturated = set()
    stack = [list(range(g.n))]
    while stack:
        verts = stack.pop()
        alive = set(verts)
        if len(verts) <= DENSE_SAMPLE:
            local = {v: i for i, v in enumerate(verts)}
            K = np.zeros((len(verts), len(verts)))
            for v in verts:
                for w, val, _ in nbrs[v]:
                    if w in local:
                        K[local[v], local[w]] = val
            try:
                Kinv = np.linalg.inv(K)
            except np.linalg.LinAlgError as exc:
                raise NumericalBreakdown("singular Kasteleyn block") from exc

            def kinv(xs, ys, Kinv=Kinv, local=local):
                return Kinv[np.ix_([local[x] for x in xs], [local[y] for y in ys])]

            _draw_edges(verts, adj_w, alive, saturated, kinv, rng, chosen)
            continue
        # base matching of this piece: repair the inherited one
        init = {v: partner[v] for v in verts if partner.get(v) in alive}
        sub_adj = {v: [w for w, _, _ in nbrs[v] if w in alive] for v in verts}
        match = perfect_matching(verts, sub_adj, init)
        for v in verts:
            partner[v] = match[v]
        local = {v: i for i, v in enumerate(verts)}
        pairs = [(local[v], local[match[v]]) for v in verts if v < match[v]]
        sub_nbrs = [[(local[w], val, e) for w, val, e in nbrs[v] if w in alive] for v in verts]
        sub_eg, _ = eg.induced(verts)
        gss = sub_eg.contract_pairs(pairs)
        sep = planar_separator(gss).separator
        pair_of = {}
        for k, (a, b) in enumerate(pairs):
            pair_of[a] = pair_of[b] = k
        p3 = [x for k in sep for x in pairs[k]]
        wset = set(p3)
        for x in p3:
            for y, _, _ in sub_nbrs[x]:
                wset.add(y)
        top = sorted({pair_of[x] for x in wset})
        fac = _Factorization(sub_nbrs, pairs, sub_eg, top=top, keep_root=True)
        F, fpairs = fac.root_front
        try:
            D = np.linalg.inv(F)
        except np.linalg.LinAlgError as exc:
            raise NumericalBreakdown("singular separator front") from exc
        fidx = {p: i for i, p in enumerate(fpairs)}

        def idx(x, fidx=fidx, fac=fac):
            return 2 * fidx[fac.pair_of[x]] + fac.slot[x]

        def kinv(xs, ys, D=D, local=local, fac=fac, idx=idx):
            rows = [idx(fac.partner[local[x]]) for x in xs]
            cols = [idx(local[y]) for y in ys]
            return D[np.ix_(rows, cols)]

        _draw_edges([verts[x] for x in p3], adj_w, alive, saturated, kinv, rng, chosen)
        rest = [v for v in verts if v not in saturated]
        rest_local = {v: i for i, v in enumerate(rest)}
        radj = [[rest_local[w] for w, _, _ in nbrs[v] if w in rest_local] for v in rest]
        for comp in components(len(rest), radj):
            stack.append([rest[i] for i in comp])
    return tuple(sorted(chosen))
