"""Exhaustive reference computations used to check the exact engines.

Nothing here depends on the matching or decomposition machinery: Ising
quantities are summed over all ``2^N`` configurations, perfect matchings are
enumerated by backtracking, and square grids use a row transfer matrix.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import TooLarge
from .graph import grid_graph

MAX_BRUTE = 24
CHUNK = 1 << 16


def _configs(n, start, stop):
    """Spin configurations with index bit ``i`` set meaning ``x_i = +1``."""
    idx = np.arange(start, stop, dtype=np.int64)
    bits = (idx[:, None] >> np.arange(n, dtype=np.int64)) & 1
    return 2.0 * bits - 1.0


def _exponents(model, start, stop):
    X = _configs(model.n, start, stop)
    out = X @ model.mu
    if model.graph.m:
        uv = np.array(model.graph.edges, dtype=int)
        out = out + (X[:, uv[:, 0]] * X[:, uv[:, 1]]) @ model.J
    return X, out


def _check_size(n):
    if n > MAX_BRUTE:
        raise TooLarge(f"{n} vertices exceeds the enumeration limit of {MAX_BRUTE}")


def brute_force_log_Z(model) -> float:
    """``log Z`` by summing all ``2^N`` weights (fields allowed)."""
    _check_size(model.n)
    total = 1 << model.n
    parts = []
    for s in range(0, total, CHUNK):
        _, ex = _exponents(model, s, min(total, s + CHUNK))
        parts.append(logsumexp(ex))
    return float(logsumexp(parts))


def brute_force_marginals(model):
    """Return ``(pairwise, singleton)``: ``E[x_v x_w]`` per edge and ``E[x_v]``."""
    _check_size(model.n)
    logz = brute_force_log_Z(model)
    total = 1 << model.n
    pair = np.zeros(model.graph.m)
    single = np.zeros(model.n)
    uv = np.array(model.graph.edges, dtype=int).reshape(-1, 2)
    for s in range(0, total, CHUNK):
        X, ex = _exponents(model, s, min(total, s + CHUNK))
        p = np.exp(ex - logz)
        single += p @ X
        if model.graph.m:
            pair += p @ (X[:, uv[:, 0]] * X[:, uv[:, 1]])
    return pair, single


@dataclass(frozen=True)
class ExactDistribution:
    """Dense distribution over configurations (index bit i set: ``x_i = +1``)."""

    n: int
    probabilities: np.ndarray

    @classmethod
    def from_model(cls, model) -> "ExactDistribution":
        _check_size(model.n)
        _, ex = _exponents(model, 0, 1 << model.n)
        p = np.exp(ex - logsumexp(ex))
        return cls(model.n, p / p.sum())

    @classmethod
    def conditional(cls, model, assignments) -> "ExactDistribution":
        """Distribution conditioned on ``(vertex, spin)`` assignments."""
        base = cls.from_model(model)
        X = _configs(model.n, 0, 1 << model.n)
        mask = np.ones(len(X), dtype=bool)
        for v, s in assignments:
            mask &= X[:, v] == s
        p = np.where(mask, base.probabilities, 0.0)
        return cls(model.n, p / p.sum())

    def indices(self, samples) -> np.ndarray:
        S = np.asarray(samples).reshape(-1, self.n)
        return ((S > 0).astype(np.int64) << np.arange(self.n, dtype=np.int64)).sum(axis=1)

    def empirical(self, samples) -> np.ndarray:
        counts = np.bincount(self.indices(samples), minlength=1 << self.n)
        return counts / max(1, counts.sum())

    def total_variation(self, samples) -> float:
        return 0.5 * float(np.abs(self.empirical(samples) - self.probabilities).sum())


def empirical_kl(exact: ExactDistribution, samples) -> float:
    """``KL(empirical || exact)`` with the convention ``0 log 0 = 0``."""
    q = exact.empirical(samples)
    nz = q > 0
    return float(np.sum(q[nz] * np.log(q[nz] / exact.probabilities[nz])))


def enumerate_pms(graph, weights):
    """All perfect matchings of ``graph`` by backtracking.

    Returns ``(log of the weighted sum, list of matchings)``; each matching
    is a sorted tuple of edge indices.  The log is ``-inf`` when none exist.
    """
    _check_size(graph.n)
    weights = np.asarray(weights, dtype=float)
    inc = [[] for _ in range(graph.n)]
    for e, (v, w) in enumerate(graph.edges):
        inc[v].append((w, e))
        inc[w].append((v, e))
    used = [False] * graph.n
    found = []
    current = []

    def rec():
        v = next((i for i in range(graph.n) if not used[i]), None)
        if v is None:
            found.append(tuple(sorted(current)))
            return
        used[v] = True
        for w, e in inc[v]:
            if not used[w]:
                used[w] = True
                current.append(e)
                rec()
                current.pop()
                used[w] = False
        used[v] = False

    rec()
    if not found:
        return float("-inf"), []
    logs = [float(np.sum(np.log(weights[list(m)]))) for m in found]
    return float(logsumexp(logs)), found


def grid_transfer_log_Z(H, J, mu) -> float:
    """Exact ``log Z`` of an ``H x H`` grid with fields by a row transfer.

    ``J`` follows the edge order of ``grid_graph(H, H)`` and ``mu`` is row
    major.  Vertical couplings are applied one column at a time so memory
    stays at ``2^H``.
    """
    if H > 14:
        raise TooLarge("grid transfer is limited to H <= 14")
    g = grid_graph(H, H)
    J = np.asarray(J, dtype=float)
    mu = np.asarray(mu, dtype=float).reshape(H, H)
    horiz = np.zeros((H, max(H - 1, 0)))
    vert = np.zeros((max(H - 1, 0), H))
    for e, (a, b) in enumerate(g.edges):
        r, c = divmod(a, H)
        if b == a + 1:
            horiz[r, c] = J[e]
        else:
            vert[r, c] = J[e]
    X = _configs(H, 0, 1 << H)

    def row_energy(r):
        out = X @ mu[r]
        if H > 1:
            out = out + (X[:, :-1] * X[:, 1:]) @ horiz[r]
        return out

    v = row_energy(0)
    shape = (2,) * H
    for r in range(1, H):
        t = v.reshape(shape[::-1])  # axis H-1-c carries bit c
        for c in range(H):
            ax = H - 1 - c
            lo = np.take(t, 0, axis=ax)  # x_c = -1
            hi = np.take(t, 1, axis=ax)  # x_c = +1
            jc = vert[r - 1, c]
            new_lo = np.logaddexp(lo + jc, hi - jc)   # x'_c = -1
            new_hi = np.logaddexp(lo - jc, hi + jc)   # x'_c = +1
            t = np.stack([new_lo, new_hi], axis=ax)
        v = t.reshape(-1) + row_energy(r)
    return float(logsumexp(v))


def grid_transfer_marginals(H, J, mu):
    """``(log Z, E[x_v x_w] per grid edge, E[x_v] per vertex)`` by forward-backward.

    Rows are the states of a chain with a dense ``2^H x 2^H`` transfer
    matrix, so this is limited to ``H <= 10``.
    """
    if H > 10:
        raise TooLarge("grid marginals are limited to H <= 10")
    g = grid_graph(H, H)
    J = np.asarray(J, dtype=float)
    mu = np.asarray(mu, dtype=float).reshape(H, H)
    X = _configs(H, 0, 1 << H)
    horiz = {}
    vert = {}
    for e, (a, b) in enumerate(g.edges):
        r, c = divmod(a, H)
        (horiz if b == a + 1 else vert)[(r, c)] = e
    hJ = np.zeros((H, max(H - 1, 0)))
    vJ = np.zeros((max(H - 1, 0), H))
    for (r, c), e in horiz.items():
        hJ[r, c] = J[e]
    for (r, c), e in vert.items():
        vJ[r, c] = J[e]
    HX = X[:, :-1] * X[:, 1:]
    row = [X @ mu[r] + HX @ hJ[r] for r in range(H)]
    trans = [(X * vJ[r]) @ X.T for r in range(H - 1)]   # trans[r][x, y]

    fwd = [row[0]]
    for r in range(1, H):
        fwd.append(logsumexp(fwd[-1][:, None] + trans[r - 1], axis=0) + row[r])
    bwd = [np.zeros(1 << H) for _ in range(H)]
    for r in range(H - 2, -1, -1):
        bwd[r] = logsumexp(trans[r] + (row[r + 1] + bwd[r + 1])[None, :], axis=1)
    log_z = float(logsumexp(fwd[-1]))

    pair = np.zeros(g.m)
    single = np.zeros(H * H)
    for r in range(H):
        p = np.exp(fwd[r] + bwd[r] - log_z)
        single[r * H:(r + 1) * H] = p @ X
        for c in range(H - 1):
            pair[horiz[(r, c)]] = p @ HX[:, c]
        if r + 1 < H:
            joint = np.exp(fwd[r][:, None] + trans[r] + (row[r + 1] + bwd[r + 1])[None, :] - log_z)
            for c in range(H):
                pair[vert[(r, c)]] = X[:, c] @ joint @ X[:, c]
    return log_z, pair, single
