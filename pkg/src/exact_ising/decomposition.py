"""Tree decompositions into planar and small pieces glued along <= 3 vertices.

Inference is a leaves-to-root pass.  For a node ``t`` with navel ``K`` the
log partition function of everything below ``t`` conditioned on the navel
spins has the form

    log Z_{|y} = A + B y1 y2 + C y1 y3 + D y2 y3

by global flip symmetry, so a child is summarised by a constant and at most
three extra couplings on its navel.  The aggregated model of a node (its own
couplings plus the children's navel couplings) is evaluated by enumeration
when it has at most ``c`` vertices, and by the planar conditioning engine
otherwise.  Sampling goes root to leaves, drawing each node conditioned on
its navel.  A second, root-to-leaves pass of outside messages turns every
node's aggregated model into the exact marginal on its vertices, which
gives all pairwise marginals.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .errors import InvalidDecomposition, NonZeroField
from .graph import Graph, NonPlanarWitness, planar_embed
from .model import IsingModel
from .planar import (LOG2, conditional_log_Z, conditional_sample, log_Z_planar,
                     pairwise_marginals, planar_template, sample_planar)


# ---------------------------------------------------------------------------
# Structure
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DecompositionNode:
    id: int
    parent: int = None
    vertices: tuple = ()
    edges: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "vertices", tuple(sorted(int(v) for v in self.vertices)))
        object.__setattr__(self, "edges", tuple(sorted((min(int(a), int(b)), max(int(a), int(b)))
                                                       for a, b in self.edges)))


@dataclass
class NiceDecomposition:
    """Rooted tree of subgraphs; navels are derived from parent overlaps."""

    c: int
    root: int
    nodes: dict = field(default_factory=dict)

    def __post_init__(self):
        if not isinstance(self.nodes, dict):
            self.nodes = {nd.id: nd for nd in self.nodes}
        self._children = None

    @property
    def children(self) -> dict:
        if self._children is None:
            ch = {i: [] for i in self.nodes}
            for nd in self.nodes.values():
                if nd.parent is not None and nd.parent in ch:
                    ch[nd.parent].append(nd.id)
            for v in ch.values():
                v.sort()
            self._children = ch
        return self._children

    def navel(self, t) -> tuple:
        nd = self.nodes[t]
        if nd.parent is None:
            return ()
        return tuple(sorted(set(nd.vertices) & set(self.nodes[nd.parent].vertices)))

    def preorder(self) -> list:
        out, stack = [], [self.root]
        while stack:
            t = stack.pop()
            out.append(t)
            stack.extend(reversed(self.children[t]))
        return out

    def postorder(self) -> list:
        return self.preorder()[::-1]

    def depth(self) -> dict:
        d = {self.root: 0}
        for t in self.preorder():
            for ch in self.children[t]:
                d[ch] = d[t] + 1
        return d

    def to_dict(self) -> dict:
        return {"c": self.c, "root": self.root,
                "nodes": [{"id": nd.id, "parent": nd.parent, "vertices": list(nd.vertices),
                           "edges": [list(e) for e in nd.edges]}
                          for nd in sorted(self.nodes.values(), key=lambda x: x.id)]}

    @classmethod
    def from_dict(cls, data) -> "NiceDecomposition":
        nodes = [DecompositionNode(int(d["id"]), None if d.get("parent") is None else int(d["parent"]),
                                   tuple(d["vertices"]), tuple(tuple(e) for e in d.get("edges", ())))
                 for d in data["nodes"]]
        return cls(int(data["c"]), int(data["root"]), {nd.id: nd for nd in nodes})

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text) -> "NiceDecomposition":
        return cls.from_dict(json.loads(text))


def single_node(graph: Graph, c=0) -> NiceDecomposition:
    """Whole graph in one node."""
    return NiceDecomposition(c, 0, {0: DecompositionNode(0, None, tuple(range(graph.n)), graph.edges)})


@dataclass(frozen=True)
class Violation:
    node: int
    condition: str
    message: str

    def __str__(self):
        return f"node {self.node}: condition {self.condition}: {self.message}"


def _is_planar(n, edges) -> bool:
    return not isinstance(planar_embed(Graph(n, edges)), NonPlanarWitness)


def _local_graph(vertices, pairs):
    idx = {v: i for i, v in enumerate(vertices)}
    return len(vertices), sorted({(min(idx[a], idx[b]), max(idx[a], idx[b])) for a, b in pairs})


def validate(graph: Graph, dec: NiceDecomposition) -> list:
    """Check the decomposition; returns a list of :class:`Violation` (empty if valid).

    Conditions: ``tree`` (rooted tree structure), ``1`` (each navel equals
    the overlap of the subtree with the rest), ``2`` (navels have at most
    three vertices), ``3`` (every node is planar or has at most ``c``
    vertices), ``4`` (large nodes stay planar with all attachment-set edges
    added) and ``5`` (the nodes are subgraphs whose union is the graph).
    """
    out = []
    nodes = dec.nodes
    if dec.root not in nodes:
        return [Violation(dec.root, "tree", "root id is not a node")]
    if nodes[dec.root].parent is not None:
        out.append(Violation(dec.root, "tree", "root has a parent"))
    for nd in nodes.values():
        if nd.id != dec.root and (nd.parent is None or nd.parent not in nodes):
            out.append(Violation(nd.id, "tree", "parent missing"))
    if out:
        return out
    order = dec.preorder()
    if len(order) != len(nodes):
        return [Violation(t, "tree", "node unreachable from the root (cycle in parent links)")
                for t in nodes if t not in set(order)]

    # 5: subgraphs of G that cover G
    seen_v = set()
    seen_e = set()
    for nd in nodes.values():
        vs = set(nd.vertices)
        bad_v = [v for v in vs if not 0 <= v < graph.n]
        if bad_v:
            out.append(Violation(nd.id, "5", f"vertices {bad_v} not in the graph"))
        for a, b in nd.edges:
            if a not in vs or b not in vs:
                out.append(Violation(nd.id, "5", f"edge {(a, b)} has an endpoint outside the node"))
            elif not graph.has_edge(a, b):
                out.append(Violation(nd.id, "5", f"edge {(a, b)} is not an edge of the graph"))
            seen_e.add((a, b))
        seen_v |= vs
    missing_v = set(range(graph.n)) - seen_v
    if missing_v:
        out.append(Violation(dec.root, "5", f"vertices {sorted(missing_v)[:10]} are in no node"))
    missing_e = [e for e in graph.edges if tuple(e) not in seen_e]
    if missing_e:
        out.append(Violation(dec.root, "5", f"edges {missing_e[:10]} are in no node"))

    # 1: occurrences of every vertex form a connected subtree
    tin, tout = {}, {}
    clock = 0
    stack = [(dec.root, False)]
    while stack:
        t, done = stack.pop()
        if done:
            tout[t] = clock - 1
            continue
        tin[t] = clock
        clock += 1
        stack.append((t, True))
        for ch in reversed(dec.children[t]):
            stack.append((ch, False))
    occ = {}
    for nd in nodes.values():
        for v in nd.vertices:
            occ.setdefault(v, []).append(tin[nd.id])
    lo = {v: min(x) for v, x in occ.items()}
    hi = {v: max(x) for v, x in occ.items()}
    for nd in nodes.values():
        pv = set(nodes[nd.parent].vertices) if nd.parent is not None else set()
        for v in nd.vertices:
            if v in pv:
                continue
            # t is the top of a group of occurrences of v; any occurrence
            # outside its subtree breaks K = V(G_<=t) & V(G_not<=t)
            if lo[v] < tin[nd.id] or hi[v] > tout[nd.id]:
                out.append(Violation(nd.id, "1", f"vertex {v} occurs outside the subtree but not in the navel"))

    # 2, 3, 4
    for nd in nodes.values():
        K = dec.navel(nd.id)
        if len(K) > 3:
            out.append(Violation(nd.id, "2", f"navel has {len(K)} vertices"))
        big = len(nd.vertices) > dec.c
        if big:
            n_loc, e_loc = _local_graph(nd.vertices, nd.edges)
            if not _is_planar(n_loc, e_loc):
                out.append(Violation(nd.id, "3", f"{len(nd.vertices)} vertices (> c={dec.c}) and nonplanar"))
                continue
            extra = list(nd.edges)
            for S in [K] + [dec.navel(ch) for ch in dec.children[nd.id]]:
                extra += [(a, b) for i, a in enumerate(S) for b in S[i + 1:]]
            n_loc, e_loc = _local_graph(nd.vertices, extra)
            if not _is_planar(n_loc, e_loc):
                out.append(Violation(nd.id, "4", "nonplanar after adding attachment-set edges"))
    return out


# ---------------------------------------------------------------------------
# Navel coefficients
# ---------------------------------------------------------------------------

_H3 = np.array([[1, 1, 1, 1],
                [1, 1, -1, -1],
                [1, -1, 1, -1],
                [1, -1, -1, 1]], dtype=float)

# assignments with the first spin fixed to +1, in table order
_ASSIGN = {
    0: [()],
    1: [(1,)],
    2: [(1, 1), (1, -1)],
    3: [(1, 1, 1), (1, 1, -1), (1, -1, 1), (1, -1, -1)],
}


def solve_navel3_coefficients(table):
    """``(A, B, C, D)`` with ``log Z_{|y} = A + B y1y2 + C y1y3 + D y2y3``.

    ``table`` holds the log-values for ``(+1,+1,+1), (+1,+1,-1),
    (+1,-1,+1), (+1,-1,-1)``.  The system matrix ``H`` satisfies
    ``H^T H = 4 I``.
    """
    return tuple(float(x) for x in _H3.T @ np.asarray(table, dtype=float) / 4.0)


def navel_coefficients(table):
    """Coefficients ``(A, B, C, D)`` for a table of 1, 2 or 4 entries."""
    table = [float(x) for x in table]
    if len(table) == 1:
        return (table[0], 0.0, 0.0, 0.0)
    if len(table) == 2:
        return (0.5 * (table[0] + table[1]), 0.5 * (table[0] - table[1]), 0.0, 0.0)
    return solve_navel3_coefficients(table)


def _coefficient_couplings(navel, coef):
    """Pair couplings ``{(v, w): J}`` from navel coefficients."""
    _, B, C, D = coef
    out = {}
    if len(navel) >= 2 and B:
        out[(navel[0], navel[1])] = B
    if len(navel) == 3:
        if C:
            out[(navel[0], navel[2])] = C
        if D:
            out[(navel[1], navel[2])] = D
    return out


# ---------------------------------------------------------------------------
# Node models
# ---------------------------------------------------------------------------

_CONFIGS = {}


def _configs(n):
    if n not in _CONFIGS:
        idx = np.arange(1 << n, dtype=np.int64)
        _CONFIGS[n] = (2 * ((idx[:, None] >> np.arange(n)) & 1) - 1).astype(np.int8)
    return _CONFIGS[n]


class _NodeModel:
    """Couplings on the vertices of one node (global ids), with a log constant."""

    def __init__(self, vertices, couplings, brute, dense=False):
        self.vertices = vertices
        self.index = {v: i for i, v in enumerate(vertices)}
        self.couplings = couplings
        self.brute = brute
        self.dense = dense

    def with_couplings(self, extra, sign=1.0):
        cp = dict(self.couplings)
        for k, J in extra.items():
            cp[k] = cp.get(k, 0.0) + sign * J
        return _NodeModel(self.vertices, cp, self.brute, self.dense)

    def ising(self, connect=()):
        """Local :class:`IsingModel`; zero couplings are added on ``connect`` pairs."""
        cp = {}
        for (a, b), J in self.couplings.items():
            i, j = self.index[a], self.index[b]
            cp[(min(i, j), max(i, j))] = cp.get((min(i, j), max(i, j)), 0.0) + J
        for a, b in connect:
            i, j = self.index[a], self.index[b]
            cp.setdefault((min(i, j), max(i, j)), 0.0)
        keys = sorted(cp)
        return IsingModel(Graph(len(self.vertices), keys), np.array([cp[k] for k in keys]))

    def energies(self):
        X = _configs(len(self.vertices)).astype(float)
        e = np.zeros(len(X))
        for (a, b), J in self.couplings.items():
            e += J * X[:, self.index[a]] * X[:, self.index[b]]
        return X, e

    def table(self, navel):
        """Log partition function conditioned on each navel assignment
        (first spin +1), in :data:`_ASSIGN` order."""
        if self.brute:
            X, e = self.energies()
            out = []
            for s in _ASSIGN[len(navel)]:
                mask = np.ones(len(X), dtype=bool)
                for v, sv in zip(navel, s):
                    mask &= X[:, self.index[v]] == sv
                out.append(float(logsumexp(e[mask])))
            return out
        model = self.ising(_navel_pairs(navel))
        loc = [self.index[v] for v in navel]
        if self.dense:
            tmpl = planar_template(model.graph)
            return [tmpl.conditional_log_Z(model.J, list(zip(loc, s))) for s in _ASSIGN[len(navel)]]
        if not navel:
            return [log_Z_planar(model)]
        return [conditional_log_Z(model, list(zip(loc, s))) for s in _ASSIGN[len(navel)]]

    def dense_stats(self, pairs):
        """``(log Z, {pair: E[x_a x_b]})`` from one dense planar evaluation."""
        model = self.ising(pairs)
        lz, m = planar_template(model.graph).evaluate(model.J, marginals=True)
        out = {}
        for a, b in pairs:
            out[(a, b)] = float(m[model.graph.find_edge(self.index[a], self.index[b])])
        return lz, out

    def pair_marginals(self, pairs):
        """``E[x_a x_b]`` for the requested global pairs."""
        if self.brute:
            X, e = self.energies()
            p = np.exp(e - logsumexp(e))
            return [float(p @ (X[:, self.index[a]] * X[:, self.index[b]])) for a, b in pairs]
        model = self.ising(pairs)
        if self.dense:
            m = planar_template(model.graph).pairwise_marginals(model.J)
        else:
            m = pairwise_marginals(model)
        out = []
        for a, b in pairs:
            i, j = self.index[a], self.index[b]
            out.append(float(m[model.graph.find_edge(i, j)]))
        return out

    def sample(self, navel, spins, rng, size):
        """``(size, |V|)`` draws conditioned on ``navel`` taking ``spins``."""
        if self.brute:
            X, e = self.energies()
            mask = np.ones(len(X), dtype=bool)
            for v, s in zip(navel, spins):
                mask &= X[:, self.index[v]] == s
            ids = np.flatnonzero(mask)
            p = np.exp(e[ids] - logsumexp(e[ids]))
            pick = rng.choice(ids, size=size, p=p / p.sum())
            return _configs(len(self.vertices))[pick]
        model = self.ising(_navel_pairs(navel))
        if not navel:
            return sample_planar(model, rng, size=size)
        cond = [(self.index[v], int(s)) for v, s in zip(navel, spins)]
        return conditional_sample(model, cond, rng, size=size)


def _navel_pairs(navel):
    return [(a, b) for i, a in enumerate(navel) for b in navel[i + 1:]]


NAVEL_FLOOR = 1e-9


def _table_from_marginals(navel, log_z, corr):
    """Conditional table from navel correlations, or ``None`` if too small to trust.

    With zero fields the navel distribution is flip symmetric, so for up to
    three spins ``P(y) = (1 + sum_{i<j} y_i y_j E[x_i x_j]) / 2^|K|``.
    """
    out = []
    for s in _ASSIGN[len(navel)]:
        p = 1.0
        for i in range(len(navel)):
            for j in range(i + 1, len(navel)):
                p += s[i] * s[j] * corr[(navel[i], navel[j])]
        if p < NAVEL_FLOOR:
            return None
        out.append(log_z + math.log(p) - len(navel) * LOG2)
    return out


# ---------------------------------------------------------------------------
# Solver
# ---------------------------------------------------------------------------

class DecompositionSolver:
    """Inference, sampling and marginals for a model with a decomposition.

    Edges that appear in several nodes carry their coupling in the deepest
    such node only (lowest id on ties) and zero elsewhere.  ``dense=True``
    evaluates planar nodes with cached :class:`PlanarTemplate` structures,
    which pays off when the same decomposition is solved many times.
    """

    def __init__(self, model: IsingModel, dec: NiceDecomposition, check=True, dense=False):
        if not model.zero_field:
            raise NonZeroField("decomposition inference requires all fields to be zero")
        if check:
            bad = validate(model.graph, dec)
            if bad:
                raise InvalidDecomposition("; ".join(str(v) for v in bad[:5]))
        self.model = model
        self.dec = dec
        depth = dec.depth()
        owner = {}
        for t in sorted(dec.nodes):
            for e in dec.nodes[t].edges:
                if e not in owner or depth[t] > depth[owner[e]]:
                    owner[e] = t
        self.owner = owner
        self.navels = {t: dec.navel(t) for t in dec.nodes}
        self.local = {}
        for t, nd in dec.nodes.items():
            cp = {}
            for e in nd.edges:
                gi = model.graph.find_edge(*e)
                cp[e] = float(model.J[gi]) if owner[e] == t else 0.0
            self.local[t] = _NodeModel(nd.vertices, cp, len(nd.vertices) <= dec.c, dense)
        self._upward()

    def _upward(self):
        self.coef = {}
        self.aggregated = {}
        self.constant = {}
        for t in self.dec.postorder():
            node = self.local[t]
            const = 0.0
            extra = {}
            for ch in self.dec.children[t]:
                c = self.coef[ch]
                const += c[0]
                for k, J in _coefficient_couplings(self.navels[ch], c).items():
                    extra[k] = extra.get(k, 0.0) + J
            agg = node.with_couplings(extra)
            self.aggregated[t] = agg
            self.constant[t] = const
            K = self.navels[t]
            table = [v + const for v in agg.table(K)]
            self.coef[t] = navel_coefficients(table)
        self.log_Z = self.coef[self.dec.root][0]

    def sample(self, rng, size):
        X = np.zeros((size, self.model.n), dtype=np.int8)
        for t in self.dec.preorder():
            agg = self.aggregated[t]
            K = self.navels[t]
            cols = list(agg.vertices)
            if not K:
                X[:, cols] = agg.sample((), (), rng, size)
                continue
            kcols = list(K)
            keys = X[:, kcols]
            codes = ((keys > 0).astype(np.int64) << np.arange(len(K))).sum(axis=1)
            for code in np.unique(codes):
                rows = np.flatnonzero(codes == code)
                spins = keys[rows[0]]
                X[np.ix_(rows, cols)] = agg.sample(K, spins, rng, len(rows))
        return X

    def _owned_pairs(self):
        by_node = {}
        for e, t in self.owner.items():
            by_node.setdefault(t, []).append(e)
        return by_node

    def marginal_models(self) -> dict:
        """Per node, a model whose distribution is the exact marginal on its vertices.

        For dense planar nodes the outside messages to the children come from
        one marginal evaluation of the node (navel correlations), falling
        back to conditional partition functions when a navel assignment is
        too improbable for that to be accurate.
        """
        full = {self.dec.root: self.aggregated[self.dec.root]}
        owned = self._owned_pairs()
        self._stats = {}
        for t in self.dec.preorder():
            kids = self.dec.children[t]
            node = full[t]
            stats = None
            if kids and node.dense and not node.brute:
                pairs = list(dict.fromkeys(owned.get(t, []) + [p for ch in kids
                                                               for p in _navel_pairs(self.navels[ch])]))
                stats = node.dense_stats(pairs)
                self._stats[t] = stats[1]
            for ch in kids:
                K = self.navels[ch]
                cc = _coefficient_couplings(K, self.coef[ch])
                table = None
                if stats is not None:
                    whole = _table_from_marginals(K, stats[0], stats[1])
                    if whole is not None:
                        table = []
                        for val, s in zip(whole, _ASSIGN[len(K)]):
                            spin = dict(zip(K, s))
                            table.append(val - sum(J * spin[a] * spin[b] for (a, b), J in cc.items()))
                if table is None:
                    table = node.with_couplings(cc, sign=-1.0).table(K)
                out_coef = navel_coefficients(table)
                full[ch] = self.aggregated[ch].with_couplings(_coefficient_couplings(K, out_coef))
        return full

    def pairwise_marginals(self) -> np.ndarray:
        """``E[x_v x_w]`` for every edge of the model."""
        full = self.marginal_models()
        out = np.zeros(self.model.graph.m)
        for t, pairs in self._owned_pairs().items():
            if t in self._stats:
                vals = [self._stats[t][p] for p in pairs]
            else:
                vals = full[t].pair_marginals(pairs)
            for e, val in zip(pairs, vals):
                out[self.model.graph.find_edge(*e)] = val
        return out


def infer(model: IsingModel, dec: NiceDecomposition) -> float:
    """Exact ``log Z`` via the decomposition."""
    return DecompositionSolver(model, dec).log_Z


def sample(model: IsingModel, dec: NiceDecomposition, seed=None, size=None):
    """Exact sample(s) via the decomposition."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    X = DecompositionSolver(model, dec).sample(rng, 1 if size is None else size)
    return X[0] if size is None else X


def edge_marginals(model: IsingModel, dec: NiceDecomposition) -> np.ndarray:
    return DecompositionSolver(model, dec).pairwise_marginals()
