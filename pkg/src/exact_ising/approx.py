"""Upper bounds on log Z for square grids with fields.

Fields are turned into couplings to an extra apex vertex, so the grid model
``(G, mu, J)`` becomes the zero-field model ``(G', 0, J')`` with
``Z(G, mu, J) = Z(G', 0, J') / 2``.  For a family of tractable spanning
subgraphs ``G^(r)`` of ``G'`` and convex weights ``rho``, convexity of
``log Z`` gives

    log Z(G', 0, J') <= sum_r rho_r log Z(G^(r), 0, J^(r))

whenever ``sum_r rho_r Jhat^(r) = J'`` (``Jhat`` pads with zeros).  The bound
is minimised jointly over ``rho`` and ``theta_r = rho_r J^(r)``: in these
variables the objective is a sum of perspective functions, hence jointly
convex, and the constraint is linear in ``theta`` only.

Members are either planar (solved by :class:`PlanarTemplate`) or come with a
nice decomposition (solved by :class:`DecompositionSolver` in dense mode).
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .decomposition import DecompositionNode, DecompositionSolver, NiceDecomposition
from .errors import InfeasibleFamily
from .graph import Graph, grid_graph
from .model import IsingModel
from .oracle import grid_transfer_marginals
from .planar import LOG2, planar_template

GTOL = 1e-5
MAX_ITER = 200
W_MIN = 1e-3   # lower bound on the unnormalised member weights


# ---------------------------------------------------------------------------
# Apex model
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ApexModel:
    """Grid model with fields and the equivalent zero-field apex model.

    Apex graph edges: the grid edges in :func:`grid_graph` order, then
    ``(v, apex)`` for ``v = 0 .. H^2 - 1``.
    """

    H: int
    grid: IsingModel
    model: IsingModel

    @property
    def apex(self) -> int:
        return self.H * self.H

    @property
    def n_grid_edges(self) -> int:
        return self.grid.graph.m

    def apex_edge(self, v) -> int:
        return self.n_grid_edges + int(v)


def apex_graph(H) -> Graph:
    g = grid_graph(H, H)
    a = H * H
    return Graph(a + 1, list(g.edges) + [(v, a) for v in range(a)])


def build_apex(H, mu, J) -> ApexModel:
    """Apex model with ``J' = (J, mu)``; ``Z(G, mu, J) = Z(G', 0, J') / 2``."""
    if H < 2:
        raise ValueError("H must be at least 2")
    g = grid_graph(H, H)
    J = np.asarray(J, dtype=float)
    mu = np.asarray(mu, dtype=float).reshape(-1)
    if J.shape != (g.m,) or mu.shape != (H * H,):
        raise ValueError("J must have one value per grid edge and mu one per vertex")
    grid = IsingModel(g, J, mu)
    return ApexModel(H, grid, IsingModel(apex_graph(H), np.concatenate([J, mu])))


def random_grid_model(H, alpha, seed=None) -> ApexModel:
    """``mu ~ U(-0.5, 0.5)``, ``J ~ U(-alpha, alpha)``, both resampled per call."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    m = grid_graph(H, H).m
    mu = rng.uniform(-0.5, 0.5, H * H)
    J = rng.uniform(-alpha, alpha, m)
    return build_apex(H, mu, J)


# ---------------------------------------------------------------------------
# Families
# ---------------------------------------------------------------------------

@dataclass
class Member:
    """Spanning subgraph of ``G'`` given by apex-graph edge indices.

    ``decomposition`` is ``None`` for planar members.
    """

    name: str
    edges: np.ndarray
    n: int
    pairs: tuple
    decomposition: NiceDecomposition = None

    @property
    def graph(self) -> Graph:
        if not hasattr(self, "_graph"):
            self._graph = Graph(self.n, self.pairs)
        return self._graph

    def evaluate(self, J):
        """``(log Z, E[x_v x_w] per member edge)`` at couplings ``J``."""
        if self.decomposition is None:
            return planar_template(self.graph).evaluate(J, marginals=True)
        solver = DecompositionSolver(IsingModel(self.graph, J), self.decomposition,
                                     check=False, dense=True)
        return solver.log_Z, solver.pairwise_marginals()


@dataclass
class SpanningFamily:
    name: str
    H: int
    members: list

    def coverage(self) -> np.ndarray:
        cnt = np.zeros(apex_graph(self.H).m, dtype=int)
        for mb in self.members:
            cnt[mb.edges] += 1
        return cnt

    def check(self, apex: ApexModel):
        if apex.H != self.H:
            raise InfeasibleFamily(f"family built for H={self.H}, model has H={apex.H}")
        missing = np.flatnonzero(self.coverage() == 0)
        if len(missing):
            raise InfeasibleFamily(f"{len(missing)} apex-graph edges are covered by no member "
                                   f"(first: {apex.model.graph.edges[missing[0]]})")


def _member(name, H, pairs, dec=None) -> Member:
    G = apex_graph(H)
    idx = sorted({G.find_edge(a, b) for a, b in pairs})
    if any(i is None for i in idx):
        raise ValueError("member uses a pair that is not an apex-graph edge")
    return Member(name, np.array(idx, dtype=int), G.n, tuple(G.edges[i] for i in idx), dec)


def _grid_pairs(H, keep):
    """Grid edges ``((r, c), (r', c'))`` passing ``keep``, as vertex pairs."""
    out = []
    for r in range(H):
        for c in range(H):
            if c + 1 < H and keep((r, c), (r, c + 1)):
                out.append((r * H + c, r * H + c + 1))
            if r + 1 < H and keep((r, c), (r + 1, c)):
                out.append((r * H + c, (r + 1) * H + c))
    return out


def _transpose(H, v):
    if v == H * H:
        return v
    r, c = divmod(v, H)
    return c * H + r


def independent_member(H) -> Member:
    a = H * H
    return _member("independent", H, [(v, a) for v in range(a)])


def psg_family(H) -> SpanningFamily:
    """Planar separator pattern for every column gap and row gap, plus apex-only.

    Member for the gap between columns ``c`` and ``c+1``: all grid edges
    except the ``H`` that cross the gap, with the apex joined to both columns
    next to the gap (each is on the outer face of its half).
    """
    if H < 3:
        raise ValueError("psg_family needs H >= 3")
    a = H * H
    members = []
    for transpose in (False, True):
        for c in range(H - 1):
            pairs = _grid_pairs(H, lambda p, q: not (p[1] == c and q[1] == c + 1))
            pairs += [(r * H + c, a) for r in range(H)] + [(r * H + c + 1, a) for r in range(H)]
            if transpose:
                pairs = [(_transpose(H, x), _transpose(H, y)) for x, y in pairs]
            members.append(_member(f"{'row' if transpose else 'col'}-gap-{c}", H, pairs))
    members.append(independent_member(H))
    return SpanningFamily("psg", H, members)


def _dsg_member(H, m):
    """Decomposition nodes ``(name, vertices, pairs, parent)`` for inner column ``m``."""
    a = H * H

    def v(r, c):
        return r * H + c

    # left block: columns < m, column m hanging off it by its horizontal
    # edges, vertical edges of column m kept in disjoint pairs of rows; the
    # apex sees columns m-1 and m (each pair leaves a face that reaches both)
    pairs_rows = [(r, r + 1) for r in range(0, H - 1, 2)]
    left = _grid_pairs(H, lambda p, q: q[1] <= m - 1 or (p[1] == m - 1 and q[1] == m))
    left += [(v(r, m), v(r + 1, m)) for r, _ in pairs_rows]
    left += [(v(r, c), a) for r in range(H) for c in (m - 1, m)]
    left_v = [v(r, c) for r in range(H) for c in range(m + 1)] + [a]
    # right block: columns > m, apex on its inner boundary column
    right = _grid_pairs(H, lambda p, q: p[1] >= m + 1)
    right += [(v(r, m + 1), a) for r in range(H)]
    right_v = [v(r, c) for r in range(H) for c in range(m + 1, H)] + [a]
    # junction: one vertical pair of column m with its two edges to the right
    r0, r1 = pairs_rows[(len(pairs_rows) - 1) // 2]
    junc_v = [a, v(r0, m), v(r1, m), v(r0, m + 1), v(r1, m + 1)]
    junc = [(v(r0, m), v(r0, m + 1)), (v(r1, m), v(r1, m + 1))]
    # root at the larger block: the other one is solved once per navel assignment
    if len(left_v) >= len(right_v):
        return [("left", left_v, left, None), ("junction", junc_v, junc, "left"),
                ("right", right_v, right, "junction")]
    return [("right", right_v, right, None), ("junction", junc_v, junc, "right"),
            ("left", left_v, left, "junction")]


def dsg_family(H) -> SpanningFamily:
    """Decomposition-based pattern for every inner column and row, plus apex-only.

    Member for inner column ``m``: the left block (columns ``< m``) with
    column ``m`` attached by its horizontal edges and every other vertical
    edge of column ``m``; the apex joins columns ``m-1``, ``m`` and ``m+1``.
    The right block (columns ``> m``) is a separate planar node reconnected
    to the left one through a junction node carrying two of the edges
    between columns ``m`` and ``m+1``.  Compared with a column-gap member
    it covers a third column of fields at the cost of a few grid edges.
    """
    if H < 4:
        raise ValueError("dsg_family needs H >= 4")
    members = []
    for transpose in (False, True):
        for m in range(1, H - 1):
            nodes = _dsg_member(H, m)
            ids = {name: i for i, (name, _, _, _) in enumerate(nodes)}
            tr = (lambda x: _transpose(H, x)) if transpose else (lambda x: x)
            dn = {}
            all_pairs = []
            for name, verts, pairs, parent in nodes:
                pairs = [(tr(x), tr(y)) for x, y in pairs]
                all_pairs += pairs
                dn[ids[name]] = DecompositionNode(ids[name], None if parent is None else ids[parent],
                                                  tuple(tr(x) for x in verts), tuple(pairs))
            dec = NiceDecomposition(10, 0, dn)
            members.append(_member(f"{'row' if transpose else 'col'}-{m}", H, all_pairs, dec))
    members.append(independent_member(H))
    return SpanningFamily("dsg", H, members)


def whole_graph_family(apex: ApexModel, dec: NiceDecomposition) -> SpanningFamily:
    """Single member ``G'`` itself (needs a valid decomposition of ``G'``)."""
    G = apex.model.graph
    return SpanningFamily("whole", apex.H, [_member("whole", apex.H, G.edges, dec)])


# ---------------------------------------------------------------------------
# Optimisation
# ---------------------------------------------------------------------------

@dataclass
class BoundResult:
    """Optimised upper bound ``h`` on ``log Z(G', 0, J')``.

    ``log_Z_grid`` is the implied bound on ``log Z(G, mu, J)`` (``h - log 2``).
    """

    bound: float
    rho: np.ndarray
    J: list
    M: list
    member_log_Z: np.ndarray
    trace: list
    iterations: int
    grad_norm: float
    converged: bool
    residual: float
    apex: ApexModel = None
    family: SpanningFamily = None
    wall_ms: float = 0.0

    @property
    def log_Z_grid(self) -> float:
        return self.bound - LOG2


class _Objective:
    """Bound as a function of ``(phi, w)`` with the constraint built in.

    ``theta = phi - (S phi - J') / k`` where ``S`` sums over the members
    containing each edge and ``k`` counts them, so ``sum_r theta_r = J'``
    for every ``phi``.  ``rho = w / sum(w)`` and ``J_r = theta_r / rho_r``.
    """

    def __init__(self, apex: ApexModel, family: SpanningFamily):
        family.check(apex)
        self.apex = apex
        self.family = family
        self.target = apex.model.J
        self.k = family.coverage().astype(float)
        self.slices = []
        start = 0
        for mb in family.members:
            self.slices.append(slice(start, start + len(mb.edges)))
            start += len(mb.edges)
        self.L = start
        self.edge_of = np.concatenate([mb.edges for mb in family.members])
        self.R = len(family.members)
        self.cache = {}

    def theta(self, phi):
        S = np.bincount(self.edge_of, weights=phi, minlength=len(self.target))
        corr = (S - self.target) / self.k
        return phi - corr[self.edge_of]

    def project(self, g):
        S = np.bincount(self.edge_of, weights=g, minlength=len(self.target))
        return g - (S / self.k)[self.edge_of]

    def split(self, x):
        return x[:self.L], x[self.L:]

    def members_at(self, x):
        key = x.tobytes()
        if key in self.cache:
            return self.cache[key]
        phi, w = self.split(x)
        rho = w / w.sum()
        th = self.theta(phi)
        Js, Ms, Ls = [], [], np.zeros(self.R)
        for r, mb in enumerate(self.family.members):
            Jr = th[self.slices[r]] / rho[r]
            lz, M = mb.evaluate(Jr)
            Js.append(Jr)
            Ms.append(M)
            Ls[r] = lz
        out = (rho, th, Js, Ms, Ls)
        self.cache = {key: out}
        return out

    def value_and_grad(self, x):
        rho, th, Js, Ms, Ls = self.members_at(x)
        phi, w = self.split(x)
        f = float(rho @ Ls)
        g_theta = np.concatenate(Ms)
        g_phi = self.project(g_theta)
        g_rho = np.array([Ls[r] - Ms[r] @ Js[r] for r in range(self.R)])
        g_w = (g_rho - rho @ g_rho) / w.sum()
        return f, np.concatenate([g_phi, g_w])

    def initial(self):
        phi = (self.target / self.k)[self.edge_of]
        return np.concatenate([phi, np.ones(self.R)])


def projected_grad_norm(x, g, bounds) -> float:
    out = 0.0
    for xi, gi, (lo, hi) in zip(x, g, bounds):
        if lo is not None and xi <= lo and gi > 0:
            continue
        if hi is not None and xi >= hi and gi < 0:
            continue
        out = max(out, abs(gi))
    return out


def optimize_bound(apex: ApexModel, family: SpanningFamily, max_iter=MAX_ITER, gtol=GTOL) -> BoundResult:
    """Minimise the convex-combination bound over ``rho`` and ``{J^(r)}``.

    Limited-memory quasi-Newton with box constraints (``w >= W_MIN``) and a
    line search; stops when the projected gradient's infinity norm is below
    ``gtol`` or after ``max_iter`` iterations.  Raises
    :class:`InfeasibleFamily` when some edge of ``G'`` is in no member.
    """
    t0 = time.perf_counter()
    obj = _Objective(apex, family)
    x0 = obj.initial()
    bounds = [(None, None)] * obj.L + [(W_MIN, None)] * obj.R
    f0, _ = obj.value_and_grad(x0)
    trace = [f0]

    def callback(xk):
        trace.append(obj.value_and_grad(xk)[0])

    if obj.R == 1:
        res_x, nit = x0, 0
    else:
        res = minimize(obj.value_and_grad, x0, jac=True, method="L-BFGS-B", bounds=bounds,
                       callback=callback,
                       options={"maxiter": max_iter, "gtol": gtol, "ftol": 1e-15,
                                "maxcor": 20, "maxls": 40})
        res_x, nit = res.x, int(res.nit)
    f, g = obj.value_and_grad(res_x)
    rho, th, Js, Ms, Ls = obj.members_at(res_x)
    pg = projected_grad_norm(res_x, g, bounds) if obj.R > 1 else 0.0
    Jhat = np.zeros(len(obj.target))
    for r, mb in enumerate(family.members):
        np.add.at(Jhat, mb.edges, rho[r] * Js[r])
    residual = float(np.abs(Jhat - obj.target).max())
    return BoundResult(f, rho, Js, Ms, Ls, trace, nit, pg, pg <= gtol, residual, apex, family,
                       1e3 * (time.perf_counter() - t0))


# ---------------------------------------------------------------------------
# Marginals and errors
# ---------------------------------------------------------------------------

def approx_marginals(result: BoundResult):
    """Estimates of ``P(x_v x_w = 1)`` per grid edge and ``P(x_v = 1)`` per grid vertex.

    Both are ``(1 + sum_r rho_r M^(r)_e) / 2``; the singleton uses the apex
    edge of ``v``.
    """
    G = result.apex.model.graph
    M = np.zeros(G.m)
    for r, mb in enumerate(result.family.members):
        np.add.at(M, mb.edges, result.rho[r] * result.M[r])
    m = result.apex.n_grid_edges
    pair = np.clip(0.5 * M[:m] + 0.5, 0.0, 1.0)
    single = np.clip(0.5 * M[m:] + 0.5, 0.0, 1.0)
    return pair, single


@dataclass(frozen=True)
class ExactReference:
    log_Z: float             # log Z(G, mu, J)
    pair: np.ndarray         # P(x_v x_w = 1) per grid edge
    single: np.ndarray       # P(x_v = 1) per grid vertex


def central_vertex(H) -> int:
    return (H // 2) * H + H // 2


def error_metrics(result: BoundResult, exact: ExactReference):
    """``(e_logZ, e_pair, e_singleton)``.

    ``e_logZ = (log Z_alg - log Z_true) / H^2``, ``e_pair`` is the mean
    absolute error of ``P(x_v x_w = 1)`` over grid edges and ``e_singleton``
    the absolute error of ``P(x_v = 1)`` at the central vertex.
    """
    H = result.apex.H
    pair, single = approx_marginals(result)
    c = central_vertex(H)
    return ((result.log_Z_grid - exact.log_Z) / (H * H),
            float(np.mean(np.abs(pair - exact.pair))),
            float(abs(single[c] - exact.single[c])))


def exact_reference(apex: ApexModel) -> ExactReference:
    lz, pair, single = grid_transfer_marginals(apex.H, apex.grid.J, apex.grid.mu)
    return ExactReference(lz, 0.5 * (1.0 + pair), 0.5 * (1.0 + single))
