"""Zero-field Ising models on planar graphs.

Each connected component is triangulated (new edges get ``J = 0``) and
mapped to its expanded dual.  Spin configurations up to a global flip are in
bijection with perfect matchings of the expanded dual: the intercity edge
crossing ``{v, w}`` is matched exactly when ``x_v = x_w``.  With weights
``exp(2 J_e)`` on intercity edges and ``1`` on city edges,

    log Z = log Z* + log 2 - sum_e J_e.

Conditioning on up to three connected spins is reduced to this by
contracting conditioned pairs.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from functools import cached_property

import networkx as nx
import numpy as np
from scipy.linalg import lu_factor
from scipy.linalg.lapack import dgetri

from .errors import DisconnectedConditionSet, NonPlanar, NonZeroField, NumericalBreakdown
from .graph import Graph, NonPlanarWitness, expanded_dual, planar_embed, triangulate
from .model import Condition, IsingModel, as_condition
from .pm import PMModel, log_partition, pfaffian_orient, pm_edge_probabilities, sample_pm

LOG2 = math.log(2.0)
EQUILIBRATE_SWEEPS = 4
# the inverse-based edge probabilities are recomputed from determinant
# ratios when the per-vertex coverage is off by more than this
REFINE_CHECK = 1e-9


def _log_4cosh(J):
    a = abs(J)
    return a + LOG2 + math.log1p(math.exp(-2.0 * a))


@dataclass
class _Component:
    """One connected component and its matching model (if it has >= 3 vertices)."""

    vertices: list
    edges: list          # global edge ids, in the order of the local graph
    graph: Graph         # local graph
    J: np.ndarray        # local couplings
    pm: PMModel = None
    tri_edges: tuple = ()   # local vertex pairs of the triangulated graph
    tree: list = None       # (child, parent, triangulated edge id) in BFS order
    gauge: np.ndarray = None  # reference configuration x*; couplings seen by the matching are J x*_v x*_w
    Jg: np.ndarray = None

    @property
    def n(self):
        return len(self.vertices)


def _components(model: IsingModel):
    g = model.graph
    out = []
    for comp in g.components():
        verts = sorted(comp)
        sub, _, emap = g.induced(verts)
        c = _Component(verts, list(emap), sub, model.J[list(emap)] if emap else np.zeros(0))
        if c.n >= 3:
            _attach_matching(c)
        out.append(c)
    return out


def _reference_configuration(n, edges, J):
    """Low-energy spins: a maximum-|J| spanning tree (Prim), then greedy flips."""
    adj = [[] for _ in range(n)]
    for (a, b), j in zip(edges, J):
        adj[a].append((b, j))
        adj[b].append((a, j))
    x = np.zeros(n, dtype=int)
    x[0] = 1
    heap = [(-abs(j), 0, w, j) for w, j in adj[0]]
    heapq.heapify(heap)
    while heap:
        _, v, w, j = heapq.heappop(heap)
        if x[w]:
            continue
        x[w] = x[v] if j >= 0 else -x[v]
        for y, jy in adj[w]:
            if not x[y]:
                heapq.heappush(heap, (-abs(jy), w, y, jy))
    x[x == 0] = 1
    # greedy single-spin descent towards a ground state
    if edges:
        uv = np.array(edges, dtype=int)
        J = np.asarray(J, dtype=float)
        for _ in range(4 * n):
            s = J * x[uv[:, 0]] * x[uv[:, 1]]
            local = np.bincount(uv[:, 0], s, n) + np.bincount(uv[:, 1], s, n)
            v = int(np.argmin(local))
            if local[v] >= -1e-12:
                break
            x[v] = -x[v]
    return x


def _attach_matching(c: _Component):
    emb = planar_embed(c.graph)
    if isinstance(emb, NonPlanarWitness):
        raise NonPlanar(f"graph is not planar ({emb.kind} obstruction)")
    tri, added = triangulate(emb)
    dual = expanded_dual(tri)
    # gauge so the all-equal configuration (the base matching) is heavy
    uv = np.array(c.graph.edges, dtype=int).reshape(-1, 2)
    c.gauge = _reference_configuration(c.n, c.graph.edges, c.J)
    c.Jg = c.J * c.gauge[uv[:, 0]] * c.gauge[uv[:, 1]]
    J = np.concatenate([c.Jg, np.zeros(len(added))])
    tg = tri.graph
    # triangulate appends new edges after the originals
    assert tuple(tg.edges[:c.graph.m]) == tuple(c.graph.edges)
    w = np.ones(dual.star.graph.m)
    w[list(dual.intercity_edges)] = np.exp(2.0 * J[list(dual.g_map)])
    c.pm = PMModel(dual.star.graph, w, dual.star, tuple(dual.intercity_edges))
    c.tri_edges = tg.edges
    # BFS tree on the triangulated graph; intercity edge id equals source edge id
    adj = [[] for _ in range(tg.n)]
    for e, (a, b) in enumerate(tg.edges):
        adj[a].append((b, e))
        adj[b].append((a, e))
    seen = [False] * tg.n
    seen[0] = True
    order = [0]
    tree = []
    for v in order:
        for w_, e in adj[v]:
            if not seen[w_]:
                seen[w_] = True
                order.append(w_)
                tree.append((w_, v, e))
    c.tree = tree


class PlanarIsing:
    """Reusable solver for one zero-field planar model."""

    def __init__(self, model: IsingModel):
        if not model.zero_field:
            raise NonZeroField("the planar engine requires all fields to be zero")
        self.model = model
        self.components = _components(model)

    @cached_property
    def log_Z(self) -> float:
        total = 0.0
        for c in self.components:
            if c.n == 1:
                total += LOG2
            elif c.n == 2:
                total += _log_4cosh(float(c.J[0]))
            else:
                total += log_partition(c.pm) + LOG2 - float(np.sum(c.Jg))
        return total

    def pairwise_marginals(self) -> np.ndarray:
        """``E[x_v x_w]`` for every edge of the model."""
        out = np.zeros(self.model.graph.m)
        for c in self.components:
            if c.n == 2:
                out[c.edges[0]] = math.tanh(float(c.J[0]))
            elif c.n >= 3:
                p = pm_edge_probabilities(c.pm)
                m = c.graph.m
                # intercity edge ids coincide with triangulated edge ids
                uv = np.array(c.graph.edges, dtype=int)
                sign = c.gauge[uv[:, 0]] * c.gauge[uv[:, 1]]
                out[c.edges] = sign * np.clip(2.0 * p[:m] - 1.0, -1.0, 1.0)
        return out

    def sample(self, rng, size):
        """``(size, N)`` array of independent configurations."""
        X = np.empty((size, self.model.n), dtype=np.int8)
        for c in self.components:
            X[:, c.vertices] = self._sample_component(c, rng, size)
        return X

    def _sample_component(self, c, rng, size):
        flip = rng.choice(np.array([-1, 1], dtype=np.int8), size=size)
        if c.n == 1:
            return flip[:, None]
        if c.n == 2:
            p_eq = 1.0 / (1.0 + math.exp(-2.0 * float(c.J[0])))
            same = np.where(rng.random(size) < p_eq, 1, -1).astype(np.int8)
            return np.stack([flip, flip * same], axis=1)
        draws = sample_pm(c.pm, rng, size=size)
        ntri = len(c.tri_edges)
        saturated = np.zeros((size, ntri), dtype=bool)
        for i, M in enumerate(draws):
            Ma = np.fromiter(M, dtype=np.int64)
            saturated[i, Ma[Ma < ntri]] = True
        X = np.empty((size, c.n), dtype=np.int8)
        X[:, 0] = 1
        for child, parent, e in c.tree:
            X[:, child] = np.where(saturated[:, e], X[:, parent], -X[:, parent])
        return X * flip[:, None] * c.gauge[None, :].astype(np.int8)


def _rng(seed):
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def log_Z_planar(model: IsingModel) -> float:
    """Exact ``log Z`` of a zero-field planar model."""
    return PlanarIsing(model).log_Z


def sample_planar(model: IsingModel, seed=None, size=None):
    """Exact sample(s): a vector of +-1 spins, or a ``(size, N)`` array."""
    X = PlanarIsing(model).sample(_rng(seed), 1 if size is None else size)
    return X[0] if size is None else X


def pairwise_marginal(model: IsingModel, edge) -> float:
    """``E[x_v x_w]`` for one edge (index or endpoint pair)."""
    g = model.graph
    e = edge if isinstance(edge, (int, np.integer)) else g.find_edge(*edge)
    if e is None:
        raise ValueError("edge not in graph")
    return float(PlanarIsing(model).pairwise_marginals()[e])


def pairwise_marginals(model: IsingModel) -> np.ndarray:
    return PlanarIsing(model).pairwise_marginals()


# ---------------------------------------------------------------------------
# Conditioning
# ---------------------------------------------------------------------------

def _check_condition(model: IsingModel, cond: Condition):
    if not model.zero_field:
        raise NonZeroField("the planar engine requires all fields to be zero")
    if len(cond) > 3:
        raise ValueError("at most three spins can be conditioned on")
    for v in cond.vertices:
        if not 0 <= v < model.n:
            raise ValueError(f"vertex {v} out of range")
    vs = cond.vertices
    if len(vs) >= 2:
        reach = {vs[0]}
        grew = True
        while grew:
            grew = False
            for v in vs:
                if v not in reach and any(model.graph.has_edge(v, w) for w in reach):
                    reach.add(v)
                    grew = True
        if len(reach) != len(vs):
            raise DisconnectedConditionSet("conditioned vertices must be connected")


def _contract(model: IsingModel, u, h, s1, s2):
    """Merge ``h`` into ``u`` with ``x_u = s1``, ``x_h = s2``.

    The merged vertex ``z`` stands for ``x_u / s1 = x_h / s2`` and is later
    fixed to ``+1``.  Returns ``(reduced model, constant, relabel)``, where
    ``relabel[v]`` is the new id of every old vertex except ``h``.
    """
    relabel = {}
    k = 0
    for v in range(model.n):
        if v != h:
            relabel[v] = k
            k += 1
    relabel_h = relabel[u]
    const = 0.0
    merged = {}
    for e, (a, b) in enumerate(model.graph.edges):
        J = float(model.J[e])
        if {a, b} == {u, h}:
            const += J * s1 * s2
            continue
        fa = s1 if a == u else s2 if a == h else 1
        fb = s1 if b == u else s2 if b == h else 1
        na = relabel_h if a == h else relabel[a]
        nb = relabel_h if b == h else relabel[b]
        key = (min(na, nb), max(na, nb))
        merged[key] = merged.get(key, 0.0) + J * fa * fb
    keys = sorted(merged)
    reduced = IsingModel(Graph(model.n - 1, keys), np.array([merged[k_] for k_ in keys]))
    return reduced, const, relabel


def _reduction_chain(model: IsingModel, cond: Condition):
    """Contract until at most one conditioned spin remains.

    Returns ``(final model, final condition, constant, steps)``.
    """
    steps = []
    const = 0.0
    while len(cond) >= 2:
        items = list(cond.assignments)
        pair = None
        for i in range(len(items)):
            for j in range(i + 1, len(items)):
                if model.graph.has_edge(items[i][0], items[j][0]):
                    pair = (i, j)
                    break
            if pair:
                break
        (u, s1), (h, s2) = items[pair[0]], items[pair[1]]
        reduced, c, relabel = _contract(model, u, h, s1, s2)
        const += c
        rest = [(relabel[v], s) for k, (v, s) in enumerate(items) if k not in pair]
        steps.append((model.n, u, h, s1, s2, relabel))
        cond = Condition(tuple([(relabel[u], 1)] + rest))
        model = reduced
    return model, cond, const, steps


def conditional_log_Z(model: IsingModel, cond) -> float:
    """``log`` of the partition function restricted to configurations
    agreeing with ``cond``."""
    cond = as_condition(cond)
    _check_condition(model, cond)
    if len(cond) == 0:
        return log_Z_planar(model)
    reduced, last, const, _ = _reduction_chain(model, cond)
    return const + log_Z_planar(reduced) - LOG2


def conditional_sample(model: IsingModel, cond, seed=None, size=None):
    """Exact sample(s) from the model conditioned on ``cond``."""
    cond = as_condition(cond)
    _check_condition(model, cond)
    rng = _rng(seed)
    m = 1 if size is None else size
    if len(cond) == 0:
        X = PlanarIsing(model).sample(rng, m)
        return X[0] if size is None else X
    reduced, last, _, steps = _reduction_chain(model, cond)
    X = PlanarIsing(reduced).sample(rng, m)
    v, s = last.assignments[0]
    X = X * (s * X[:, v])[:, None]
    # expand contracted vertices, innermost step first
    for n_old, u, h, s1, s2, relabel in reversed(steps):
        Y = np.empty((m, n_old), dtype=np.int8)
        z = relabel[u]
        for old, new in relabel.items():
            Y[:, old] = X[:, new]
        Y[:, u] = s1 * X[:, z]
        Y[:, h] = s2 * X[:, z]
        X = Y
    return X[0] if size is None else X


# ---------------------------------------------------------------------------
# Reusable structure for repeated evaluation
# ---------------------------------------------------------------------------

class PlanarTemplate:
    """Coupling-independent part of the planar reduction, for many evaluations.

    Embedding, triangulation, expanded dual and Pfaffian orientation depend on
    the graph only, so they are built once.  Each evaluation fixes a gauge,
    rescales so every intercity edge has weight one (city edges then weigh
    ``exp(-Jg_a - Jg_b)``) and uses a dense pivoted LU of the Kasteleyn
    matrix.  Intended for small graphs evaluated many times, e.g. inside an
    optimizer; the nested dissection engine remains the general path.
    """

    def __init__(self, graph: Graph):
        self.graph = graph
        self.parts = []
        # zero-field Z factorises over biconnected blocks: each block is
        # solved on its own and shared cut vertices are divided out
        self.n_components = len(graph.components())
        nxg = nx.Graph(graph.edges)
        for block in nx.biconnected_components(nxg):
            verts = sorted(block)
            sub, _, emap = graph.induced(verts)
            part = {"vertices": verts, "edges": np.array(emap, dtype=int), "graph": sub}
            if len(verts) >= 3:
                emb = planar_embed(sub)
                if isinstance(emb, NonPlanarWitness):
                    raise NonPlanar(f"graph is not planar ({emb.kind} obstruction)")
                tri, added = triangulate(emb)
                dual = expanded_dual(tri)
                star = dual.star.graph
                pm = PMModel(star, np.ones(star.m), dual.star, tuple(dual.intercity_edges))
                orient = pfaffian_orient(pm)
                uv = np.array(star.edges, dtype=int)
                mt = tri.graph.m
                part.update(n_star=star.n, su=uv[:, 0], sv=uv[:, 1], orient=orient.astype(float),
                            n_tri=mt, city_src=(uv[mt:, 0] >> 1, uv[mt:, 1] >> 1),
                            local_uv=np.array(sub.edges, dtype=int).reshape(-1, 2))
            self.parts.append(part)
        self._reduced = {}

    def _factor(self, part, Jl):
        gauge = _reference_configuration(len(part["vertices"]), part["graph"].edges, Jl)
        luv = part["local_uv"]
        sign = gauge[luv[:, 0]] * gauge[luv[:, 1]]
        Jg = Jl * sign
        Jt = np.zeros(part["n_tri"])
        Jt[:len(Jg)] = Jg
        self._last_Jt = Jt
        mt = part["n_tri"]
        w = np.ones(len(part["su"]))
        a, b = part["city_src"]
        w[mt:] = np.exp(-Jt[a] - Jt[b])
        n = part["n_star"]
        su, sv = part["su"], part["sv"]
        # symmetric equilibration K -> D K D towards unit row maxima, done
        # on the edge list since K is zero off the edges
        val = w.copy()
        logd = np.zeros(n)
        for _ in range(EQUILIBRATE_SWEEPS):
            r = np.zeros(n)
            np.maximum.at(r, su, val)
            np.maximum.at(r, sv, val)
            f = 1.0 / np.sqrt(r)
            val *= f[su] * f[sv]
            logd += np.log(f)
        val *= part["orient"]
        K = np.zeros((n, n))
        K[su, sv] = val
        K[sv, su] = -val
        lu, piv = lu_factor(K, check_finite=False)
        d = np.abs(np.diag(lu))
        if not np.all(d > 0):
            raise NumericalBreakdown("singular Kasteleyn matrix")
        logdet = float(np.sum(np.log(d)))
        log_z = 0.5 * logdet - float(np.sum(logd)) + float(np.sum(Jg)) + LOG2
        return log_z, (K, lu, piv, logd, logdet), sign

    def evaluate(self, J, marginals=False):
        """``log Z`` and, if requested, ``E[x_v x_w]`` per edge."""
        J = np.asarray(J, dtype=float)
        total = self.n_components * LOG2
        pair = np.zeros(self.graph.m) if marginals else None
        for part in self.parts:
            Jl = J[part["edges"]]
            if len(part["vertices"]) == 2:
                total += _log_4cosh(float(Jl[0])) - LOG2
                if marginals:
                    pair[part["edges"][0]] = math.tanh(float(Jl[0]))
                continue
            lz, fac, sign = self._factor(part, Jl)
            total += lz - LOG2
            if marginals:
                K, lu, piv, logd, logdet = fac
                kinv, info = dgetri(lu, piv)
                if info != 0:
                    raise NumericalBreakdown("singular Kasteleyn matrix")
                ids = np.arange(part["n_tri"])
                a, b = 2 * ids, 2 * ids + 1
                # intercity weight is one before scaling: p = |K^-1[a, b]|
                p = np.abs(kinv[a, b]) * np.exp(logd[a] + logd[b])
                if self._coverage_error(part, kinv, logd, p) > REFINE_CHECK:
                    p = self._deletion_probabilities(K, logdet, len(Jl))
                p = p[:len(Jl)]
                pair[part["edges"]] = sign * np.clip(2.0 * p - 1.0, -1.0, 1.0)
        return total, pair

    @staticmethod
    def _deletion_probabilities(K, logdet, count):
        """``P(e in M) = 1 - sqrt(det K_{-e} / det K)`` for the first ``count``
        intercity edges.

        Slower than reading ``K^-1`` but accurate when ``K`` is badly
        conditioned: determinants come from a backward stable LU.
        """
        p = np.empty(count)
        for i in range(count):
            a, b = 2 * i, 2 * i + 1
            kab, kba = K[a, b], K[b, a]
            K[a, b] = K[b, a] = 0.0
            s, ld = np.linalg.slogdet(K)
            K[a, b], K[b, a] = kab, kba
            p[i] = 1.0 - (math.exp(0.5 * (ld - logdet)) if s > 0 else 0.0)
        if np.any(p < -1e-9) or np.any(p > 1 + 1e-9):
            raise NumericalBreakdown("edge probabilities outside [0, 1]")
        return np.clip(p, 0.0, 1.0)

    def _coverage_error(self, part, kinv, logd, p_inter):
        # every star vertex is covered by exactly one of its three edges
        mt = part["n_tri"]
        su, sv = part["su"][mt:], part["sv"][mt:]
        a, b = part["city_src"]
        w = np.exp(-self._last_Jt[a] - self._last_Jt[b])
        pc = w * np.abs(kinv[su, sv]) * np.exp(logd[su] + logd[sv])
        cover = np.zeros(part["n_star"])
        cover[0::2] += p_inter
        cover[1::2] += p_inter
        np.add.at(cover, su, pc)
        np.add.at(cover, sv, pc)
        return float(np.abs(cover - 1.0).max())

    def log_Z(self, J) -> float:
        return self.evaluate(J)[0]

    def pairwise_marginals(self, J) -> np.ndarray:
        return self.evaluate(J, marginals=True)[1]

    def _reduction(self, vertices):
        """Contract the connected set ``vertices`` into one vertex (structure only)."""
        key = tuple(vertices)
        if key in self._reduced:
            return self._reduced[key]
        K = set(vertices)
        z = min(K)
        relabel, k = {}, 0
        for v in range(self.graph.n):
            if v not in K or v == z:
                relabel[v] = k
                k += 1
        for v in K:
            relabel[v] = relabel[z]
        target, spin_of, internal = [], [], []
        keys = {}
        for e, (a, b) in enumerate(self.graph.edges):
            if a in K and b in K:
                internal.append(e)
                target.append(-1)
                spin_of.append(-1)
                continue
            na, nb = relabel[a], relabel[b]
            p = (min(na, nb), max(na, nb))
            target.append(keys.setdefault(p, len(keys)))
            spin_of.append(a if a in K else b if b in K else -1)
        reduced = Graph(k, list(keys))
        out = (planar_template(reduced), np.array(target, dtype=int), np.array(spin_of, dtype=int),
               np.array(internal, dtype=int))
        self._reduced[key] = out
        return out

    def conditional_log_Z(self, J, cond) -> float:
        """``log`` partition function restricted to ``cond`` (connected, at most 3 spins)."""
        cond = as_condition(cond)
        J = np.asarray(J, dtype=float)
        if len(cond) == 0:
            return self.log_Z(J)
        _check_condition(IsingModel(self.graph, J), cond)
        order = sorted(cond.assignments)
        spins = dict(order)
        tmpl, target, spin_of, internal = self._reduction(tuple(v for v, _ in order))
        s = np.ones(len(J))
        has = spin_of >= 0
        s[has] = [spins[v] for v in spin_of[has]]
        ext = target >= 0
        Jr = np.bincount(target[ext], weights=J[ext] * s[ext], minlength=tmpl.graph.m)
        const = sum(J[e] * spins[self.graph.edges[e][0]] * spins[self.graph.edges[e][1]] for e in internal)
        return float(const) + tmpl.log_Z(Jr) - LOG2


_TEMPLATES = {}


def planar_template(graph: Graph) -> PlanarTemplate:
    """Cached :class:`PlanarTemplate` for ``graph`` (keyed by its edge list)."""
    key = (graph.n, graph.edges)
    tmpl = _TEMPLATES.get(key)
    if tmpl is None:
        if len(_TEMPLATES) >= 512:
            _TEMPLATES.clear()
        tmpl = _TEMPLATES[key] = PlanarTemplate(graph)
    return tmpl
