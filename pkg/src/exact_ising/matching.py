"""Perfect-matching search on general graphs.

Augmenting paths are found one exposed vertex at a time with blossom
shrinking.  All per-search state lives in dictionaries so a search only
pays for the region it explores, which keeps repairs of an almost perfect
matching cheap.
"""
from __future__ import annotations

from collections import deque

from .errors import NoPerfectMatching


def _augment_from(root, adj, match):
    parent = {}
    base = {}
    even = {root}
    touched = [root]

    def b(v):
        return base.get(v, v)

    def lca(x, y):
        seen = set()
        while True:
            x = b(x)
            seen.add(x)
            if match.get(x, -1) < 0:
                break
            x = parent[match[x]]
        while True:
            y = b(y)
            if y in seen:
                return y
            y = parent[match[y]]

    def mark(v, stop, child, in_blossom):
        while b(v) != stop:
            in_blossom.add(b(v))
            in_blossom.add(b(match[v]))
            parent[v] = child
            child = match[v]
            v = parent[match[v]]

    q = deque([root])
    while q:
        v = q.popleft()
        for w in adj[v]:
            if b(v) == b(w) or match.get(v, -1) == w:
                continue
            if w == root or (match.get(w, -1) >= 0 and match[w] in parent):
                cur = lca(v, w)
                in_blossom = set()
                mark(v, cur, w, in_blossom)
                mark(w, cur, v, in_blossom)
                for x in touched:
                    if b(x) in in_blossom:
                        base[x] = cur
                        if x not in even:
                            even.add(x)
                            q.append(x)
            elif w not in parent:
                parent[w] = v
                touched.append(w)
                mw = match.get(w, -1)
                if mw < 0:
                    # augment along the alternating path ending at w
                    x = w
                    while x >= 0:
                        px = parent[x]
                        nxt = match.get(px, -1)
                        match[x] = px
                        match[px] = x
                        x = nxt
                    return True
                even.add(mw)
                touched.append(mw)
                q.append(mw)
    return False


def perfect_matching(vertices, adj, initial=None) -> dict:
    """Return a perfect matching as a partner dictionary.

    ``adj`` maps each vertex to its neighbours (only vertices in
    ``vertices`` may appear).  ``initial`` is an optional partial matching
    (partner dictionary) to extend.  Raises :class:`NoPerfectMatching`.
    """
    vertices = list(vertices)
    match = {}
    if initial:
        for v, w in initial.items():
            match[v] = w
    else:
        for v in vertices:
            if v in match:
                continue
            for w in adj[v]:
                if w not in match:
                    match[v] = w
                    match[w] = v
                    break
    for v in vertices:
        if v in match:
            continue
        if not _augment_from(v, adj, match):
            raise NoPerfectMatching(f"no perfect matching covers vertex {v}")
    return match
