"""Decompositions of K33-free and K5-free graphs into nice decompositions.

K33-free graphs: split every biconnected block into its triconnected
components; each nonplanar component must be K5.  Dropping the virtual
edges leaves a 5-nice decomposition.

K5-free graphs: pieces are split along 2-vertex cuts and then along
3-vertex cuts that leave at least three components, adding a virtual
edge (or triangle) on the cut to every side, until each piece is planar
or a small Moebius-ladder-like graph.  Virtual edges are construction
only and are removed from the final nodes.

Cuts are found by exhaustive search with a DFS articulation test, which is
fine for graphs with up to a few hundred vertices.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import networkx as nx
from networkx.algorithms import isomorphism

from .decomposition import DecompositionNode, NiceDecomposition
from .errors import NotBiconnected, NotK33Free, NotK5Free
from .graph import Graph


# ---------------------------------------------------------------------------
# DFS helpers
# ---------------------------------------------------------------------------

def _removal_counts(vertices, adj, removed=frozenset()):
    """Components of the graph minus ``removed``, and per vertex the count after removing it too.

    ``adj`` maps a vertex to an iterable of ``(neighbour, edge_id)``; parallel
    edges are fine.  Returns ``(n_components, {v: n_components_without_v})``.
    """
    disc, low = {}, {}
    pieces = {}
    n_comp = 0
    clock = 0
    for r in vertices:
        if r in removed or r in disc:
            continue
        n_comp += 1
        disc[r] = low[r] = clock
        clock += 1
        root_children = 0
        stack = [(r, None, iter(adj[r]))]
        pieces[r] = 0
        while stack:
            v, pe, it = stack[-1]
            advanced = False
            for w, e in it:
                if w in removed or e == pe:
                    continue
                if w not in disc:
                    disc[w] = low[w] = clock
                    clock += 1
                    pieces[w] = 1  # the part containing the parent
                    stack.append((w, e, iter(adj[w])))
                    advanced = True
                    break
                low[v] = min(low[v], disc[w])
            if advanced:
                continue
            stack.pop()
            if stack:
                p = stack[-1][0]
                low[p] = min(low[p], low[v])
                if p == r:
                    root_children += 1
                elif low[v] >= disc[p]:
                    pieces[p] += 1
        pieces[r] = root_children
    return n_comp, {v: n_comp - 1 + k for v, k in pieces.items()}


def _component_sets(vertices, adj, removed):
    seen = set(removed)
    out = []
    for r in vertices:
        if r in seen:
            continue
        comp = [r]
        seen.add(r)
        i = 0
        while i < len(comp):
            for w, _ in adj[comp[i]]:
                if w not in seen:
                    seen.add(w)
                    comp.append(w)
            i += 1
        out.append(comp)
    return out


def _adjacency(edge_list):
    """``edge_list`` is ``[(eid, u, v)]``; returns ``(sorted vertices, adj)``."""
    adj = {}
    for e, u, v in edge_list:
        adj.setdefault(u, []).append((v, e))
        adj.setdefault(v, []).append((u, e))
    return sorted(adj), adj


def _planar_pairs(pairs) -> bool:
    return nx.check_planarity(nx.Graph(list(pairs)))[0]


# ---------------------------------------------------------------------------
# Biconnected components
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BlockForest:
    """Blocks as lists of edge indices, plus the cut vertices."""

    graph: Graph
    blocks: tuple
    cut_vertices: tuple

    def block_vertices(self, i) -> tuple:
        return tuple(sorted({v for e in self.blocks[i] for v in self.graph.edges[e]}))


def biconnected_components(graph: Graph) -> BlockForest:
    """Edge partition into biconnected blocks (bridges are 1-edge blocks)."""
    adj = [[] for _ in range(graph.n)]
    for e, (v, w) in enumerate(graph.edges):
        adj[v].append((w, e))
        adj[w].append((v, e))
    disc, low = {}, {}
    blocks, cuts = [], set()
    clock = 0
    for r in range(graph.n):
        if r in disc or not adj[r]:
            continue
        disc[r] = low[r] = clock
        clock += 1
        estack = []
        root_children = 0
        stack = [(r, None, iter(adj[r]))]
        while stack:
            v, pe, it = stack[-1]
            advanced = False
            for w, e in it:
                if e == pe:
                    continue
                if w not in disc:
                    disc[w] = low[w] = clock
                    clock += 1
                    estack.append(e)
                    stack.append((w, e, iter(adj[w])))
                    advanced = True
                    break
                if disc[w] < disc[v]:
                    estack.append(e)
                    low[v] = min(low[v], disc[w])
            if advanced:
                continue
            stack.pop()
            if not stack:
                continue
            p = stack[-1][0]
            low[p] = min(low[p], low[v])
            if low[v] >= disc[p]:
                blk = []
                while True:
                    e = estack.pop()
                    blk.append(e)
                    if e == pe:
                        break
                blocks.append(sorted(blk))
                if p == r:
                    root_children += 1
                else:
                    cuts.add(p)
        if root_children > 1:
            cuts.add(r)
    return BlockForest(graph, tuple(tuple(b) for b in blocks), tuple(sorted(cuts)))


# ---------------------------------------------------------------------------
# Triconnected components
# ---------------------------------------------------------------------------

@dataclass
class TriconnectedComponent:
    kind: str  # "triconnected", "bond" or "cycle"
    edges: tuple  # edge ids; ids >= graph.m are virtual


@dataclass
class TriconnectedTree:
    """Triconnected components of a biconnected graph.

    ``endpoints`` maps every edge id (real ``< graph.m`` and virtual) to its
    vertex pair; ``links`` lists ``(i, j, virtual_edge_id)`` between
    components sharing a virtual edge.
    """

    graph: Graph
    endpoints: dict
    components: list
    links: list = field(default_factory=list)

    def vertices(self, i) -> tuple:
        return tuple(sorted({v for e in self.components[i].edges for v in self.endpoints[e]}))

    def real_edges(self, i) -> list:
        return [e for e in self.components[i].edges if e < self.graph.m]

    def virtual_edges(self, i) -> list:
        return [e for e in self.components[i].edges if e >= self.graph.m]

    def pairs(self, i) -> list:
        return [tuple(sorted(self.endpoints[e])) for e in self.components[i].edges]

    def kinds(self) -> list:
        return sorted(c.kind for c in self.components)

    def total_edges(self) -> int:
        return sum(len(c.edges) for c in self.components)

    def reassemble(self) -> list:
        """Real edges after merging all components along their virtual edges."""
        return sorted(e for i in range(len(self.components)) for e in self.real_edges(i))

    def signature(self) -> list:
        """Isomorphism-free summary: sorted ``(kind, vertices, real edge ids)``."""
        return sorted((c.kind, self.vertices(i), tuple(sorted(self.real_edges(i))))
                      for i, c in enumerate(self.components))


def _find_separation(edge_ids, ends):
    """A separation pair of the multigraph and one separation class, or ``None``."""
    verts, adj = _adjacency([(e, *ends[e]) for e in edge_ids])
    for a in verts:
        _, counts = _removal_counts(verts, adj, frozenset([a]))
        for b in verts:
            if b != a and counts.get(b, 0) >= 2:
                comps = _component_sets(verts, adj, {a, b})
                first = set(comps[0])
                E1 = [e for e in edge_ids if ends[e][0] in first or ends[e][1] in first]
                E2 = [e for e in edge_ids if e not in set(E1)]
                return a, b, E1, E2
    return None


def triconnected_components(bicomp: Graph) -> TriconnectedTree:
    """Split along separation pairs, then merge adjacent bonds and adjacent cycles."""
    if bicomp.n < 3:
        raise NotBiconnected("triconnected components need at least 3 vertices")
    used = {v for e in bicomp.edges for v in e}
    if len(used) != bicomp.n or len(biconnected_components(bicomp).blocks) != 1:
        raise NotBiconnected("input graph is not biconnected")
    ends = {e: tuple(uv) for e, uv in enumerate(bicomp.edges)}
    next_id = [bicomp.m]

    def virtual(a, b):
        e = next_id[0]
        next_id[0] += 1
        ends[e] = (min(a, b), max(a, b))
        return e

    final = []
    work = [list(range(bicomp.m))]
    while work:
        C = work.pop()
        groups = {}
        for e in C:
            groups.setdefault(tuple(sorted(ends[e])), []).append(e)
        if len(groups) == 1:
            final.append(TriconnectedComponent("bond", tuple(sorted(C))))
            continue
        multi = next((p for p, es in groups.items() if len(es) >= 2), None)
        if multi is not None:
            v = virtual(*multi)
            final.append(TriconnectedComponent("bond", tuple(sorted(groups[multi] + [v]))))
            work.append([e for e in C if e not in set(groups[multi])] + [v])
            continue
        nv = len({x for e in C for x in ends[e]})
        if nv == 3:
            final.append(TriconnectedComponent("cycle", tuple(sorted(C))))
            continue
        sep = _find_separation(C, ends)
        if sep is None:
            final.append(TriconnectedComponent("triconnected", tuple(sorted(C))))
            continue
        a, b, E1, E2 = sep
        v = virtual(a, b)
        work.append(E1 + [v])
        work.append(E2 + [v])

    # merge bonds with bonds and cycles with cycles along shared virtual edges
    alive = dict(enumerate(final))
    owner = {}
    for i, c in alive.items():
        for e in c.edges:
            if e >= bicomp.m:
                owner.setdefault(e, []).append(i)
    for e in sorted(owner):
        i, j = owner[e]
        if i == j or alive[i].kind != alive[j].kind or alive[i].kind == "triconnected":
            continue
        merged = tuple(sorted(x for x in alive[i].edges + alive[j].edges if x != e))
        alive[i] = TriconnectedComponent(alive[i].kind, merged)
        for x in alive[j].edges:
            if x >= bicomp.m and x != e:
                owner[x] = [i if k == j else k for k in owner[x]]
        owner[e] = [i, i]
        del alive[j]
    ids = sorted(alive)
    remap = {old: new for new, old in enumerate(ids)}
    comps = [alive[i] for i in ids]
    links = sorted((remap[min(o)], remap[max(o)], e) for e, o in owner.items() if o[0] != o[1])
    live_virtual = {e for c in comps for e in c.edges if e >= bicomp.m}
    ends = {e: uv for e, uv in ends.items() if e < bicomp.m or e in live_virtual}
    return TriconnectedTree(bicomp, ends, comps, links)


# ---------------------------------------------------------------------------
# Assembling a nice decomposition
# ---------------------------------------------------------------------------

def _is_k5(vertices, pairs) -> bool:
    return len(vertices) == 5 and len(set(pairs)) == 10


def _assemble(graph: Graph, pieces, links, c) -> NiceDecomposition:
    """Root the undirected tree ``links`` over ``pieces`` (``(vertices, edges)``) at piece 0."""
    nbr = {i: [] for i in range(len(pieces))}
    for i, j in links:
        nbr[i].append(j)
        nbr[j].append(i)
    order, parent = [0], {0: None}
    k = 0
    while k < len(order):
        t = order[k]
        k += 1
        for s in sorted(nbr[t]):
            if s not in parent:
                parent[s] = t
                order.append(s)
    if len(order) != len(pieces):
        raise RuntimeError("piece links do not form a tree")
    new = {old: i for i, old in enumerate(order)}
    nodes = {}
    for old in order:
        vs, es = pieces[old]
        p = parent[old]
        nodes[new[old]] = DecompositionNode(new[old], None if p is None else new[p], tuple(vs),
                                            tuple(graph.edges[e] for e in es))
    return NiceDecomposition(c, 0, nodes)


def _stitch(graph: Graph, block_pieces):
    """Join per-block piece trees along cut vertices and connected components.

    ``block_pieces(edge_ids) -> (pieces, links)`` decomposes one block.
    Returns ``(pieces, links)`` for the whole graph.
    """
    forest = biconnected_components(graph)
    pieces, links = [], []
    block_nodes = []
    for blk in forest.blocks:
        bp, bl = block_pieces(list(blk))
        off = len(pieces)
        pieces.extend(bp)
        links.extend((off + i, off + j) for i, j in bl)
        block_nodes.append(list(range(off, off + len(bp))))
    holder = {}  # vertex -> blocks containing it
    for b in range(len(forest.blocks)):
        for v in forest.block_vertices(b):
            holder.setdefault(v, []).append(b)

    def node_with(b, v):
        return min(i for i in block_nodes[b] if v in pieces[i][0])

    roots = []
    seen_blocks = set()
    for comp in graph.components():
        blocks_here = sorted({b for v in comp for b in holder.get(v, [])})
        if not blocks_here:
            pieces.append(((comp[0],), []))
            roots.append(len(pieces) - 1)
            continue
        start = blocks_here[0]
        roots.append(block_nodes[start][0])
        seen_blocks.add(start)
        queue = [start]
        while queue:
            b = queue.pop(0)
            for v in forest.block_vertices(b):
                for b2 in holder[v]:
                    if b2 not in seen_blocks:
                        seen_blocks.add(b2)
                        links.append((node_with(b, v), node_with(b2, v)))
                        queue.append(b2)
    # node 0 must be a root for _assemble; all other component roots hang off it
    first = roots[0]
    links.extend((first, r) for r in roots[1:])
    if first != 0:
        pieces[0], pieces[first] = pieces[first], pieces[0]
        swap = {0: first, first: 0}
        links = [(swap.get(i, i), swap.get(j, j)) for i, j in links]
    return pieces, links


def _k33_block(graph: Graph):
    def run(blk):
        if len(blk) == 1:
            return [(graph.edges[blk[0]], [blk[0]])], []
        vs = sorted({v for e in blk for v in graph.edges[e]})
        loc = {v: i for i, v in enumerate(vs)}
        sub = Graph(len(vs), [(loc[graph.edges[e][0]], loc[graph.edges[e][1]]) for e in blk])
        tree = triconnected_components(sub)
        pieces = []
        for i, comp in enumerate(tree.components):
            lv = tree.vertices(i)
            if comp.kind == "triconnected":
                pairs = tree.pairs(i)
                if not _planar_pairs(pairs) and not _is_k5(lv, pairs):
                    raise NotK33Free(f"triconnected component on {len(lv)} vertices is nonplanar and not K5")
            pieces.append(([vs[x] for x in lv], [blk[e] for e in tree.real_edges(i)]))
        return pieces, [(i, j) for i, j, _ in tree.links]
    return run


def k33_decompose(graph: Graph) -> NiceDecomposition:
    """5-nice decomposition of a K33-free graph; raises :class:`NotK33Free` otherwise."""
    if graph.n == 0:
        return NiceDecomposition(5, 0, {0: DecompositionNode(0, None, (), ())})
    pieces, links = _stitch(graph, _k33_block(graph))
    return _assemble(graph, pieces, links, 5)


# ---------------------------------------------------------------------------
# K5-free graphs
# ---------------------------------------------------------------------------

def mobius_ladder(k) -> Graph:
    """``V_{2k}``: the cycle ``C_{2k}`` plus the ``k`` diameters."""
    n = 2 * k
    edges = [(i, (i + 1) % n) for i in range(n)] + [(i, i + k) for i in range(k)]
    return Graph(n, sorted({(min(a, b), max(a, b)) for a, b in edges}))


_LADDERS = {}


def is_mobius_subgraph(pairs) -> bool:
    """True when the graph given by ``pairs`` is a subgraph of ``V_6`` or ``V_8``."""
    g = nx.Graph(list(pairs))
    if g.number_of_nodes() > 8:
        return False
    for k in (3, 4):
        if 2 * k < g.number_of_nodes():
            continue
        if k not in _LADDERS:
            _LADDERS[k] = mobius_ladder(k).to_networkx()
        if isomorphism.GraphMatcher(_LADDERS[k], g).subgraph_is_monomorphic():
            return True
    return False


def has_k5_minor(pairs) -> bool:
    """Exhaustive K5-minor test by vertex deletions and edge contractions (small graphs)."""
    start = frozenset(frozenset(p) for p in pairs if p[0] != p[1])
    seen = set()

    def rec(es):
        if es in seen:
            return False
        seen.add(es)
        vs = {v for e in es for v in e}
        if len(es) < 10 or len(vs) < 5:
            return False
        if len(vs) == 5:
            return len(es) == 10
        for v in vs:
            if rec(frozenset(e for e in es if v not in e)):
                return True
        for e in es:
            a, b = sorted(e)
            merged = set()
            for f in es:
                if f == e:
                    continue
                x, y = tuple(f)
                x = a if x == b else x
                y = a if y == b else y
                if x != y:
                    merged.add(frozenset((x, y)))
            if rec(frozenset(merged)):
                return True
        return False

    return rec(start)


def _find_cut(vertices, pairs, size, parts):
    """A vertex set of ``size`` whose removal leaves ``>= parts`` components."""
    verts, adj = _adjacency([(i, a, b) for i, (a, b) in enumerate(sorted(pairs))])
    for fixed in itertools.combinations(verts, size - 1):
        _, counts = _removal_counts(verts, adj, frozenset(fixed))
        for c in verts:
            if c in fixed or c < fixed[-1]:
                continue
            if counts.get(c, 0) >= parts:
                X = set(fixed) | {c}
                return sorted(X), _component_sets(verts, adj, X)
    return None


def _k5_block(graph: Graph):
    def run(blk):
        if len(blk) == 1:
            return [(graph.edges[blk[0]], [blk[0]])], []
        leaves, links = [], []

        def split(vs, real, virt):
            """Returns the index of the first leaf produced from this piece."""
            pairs = {graph.edges[e] for e in real} | virt
            if _planar_pairs(pairs):
                leaves.append((sorted(vs), sorted(real)))
                return
            if len(vs) <= 8 and (is_mobius_subgraph(pairs) or not has_k5_minor(pairs)):
                leaves.append((sorted(vs), sorted(real)))
                return
            cut = _find_cut(vs, pairs, 2, 2) or _find_cut(vs, pairs, 3, 3)
            if cut is None:
                raise NotK5Free(f"piece on {len(vs)} vertices is nonplanar, has no 2- or 3-cut "
                                "and is not a small K5-minor-free graph")
            X, comps = cut
            Xs = set(X)
            clique = {(a, b) for a, b in itertools.combinations(X, 2)}
            inside = [e for e in real if set(graph.edges[e]) <= Xs]
            starts = []
            for k, comp in enumerate(comps):
                part = set(comp) | Xs
                r = [e for e in real if set(graph.edges[e]) <= part and not set(graph.edges[e]) <= Xs]
                if k == 0:
                    r += inside
                v2 = {p for p in virt if set(p) <= part} | clique
                first = len(leaves)
                split(part, r, v2)
                starts.append(range(first, len(leaves)))
            holders = [min(i for i in rng if Xs <= set(leaves[i][0])) for rng in starts]
            links.extend((holders[0], h) for h in holders[1:])

        vs = {v for e in blk for v in graph.edges[e]}
        split(vs, list(blk), set())
        return leaves, links
    return run


def k5_decompose(graph: Graph) -> NiceDecomposition:
    """8-nice decomposition of a K5-free graph; raises :class:`NotK5Free` otherwise."""
    if graph.n == 0:
        return NiceDecomposition(8, 0, {0: DecompositionNode(0, None, (), ())})
    pieces, links = _stitch(graph, _k5_block(graph))
    return _assemble(graph, pieces, links, 8)
