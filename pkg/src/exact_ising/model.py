"""Ising model and conditioning types."""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .graph import Graph


@dataclass(frozen=True)
class IsingModel:
    """Ising model ``P(X) ~ exp(sum_v mu_v x_v + sum_e J_e x_v x_w)``."""

    graph: Graph
    J: np.ndarray
    mu: np.ndarray = None

    def __post_init__(self):
        J = np.asarray(self.J, dtype=float).reshape(-1)
        mu = np.zeros(self.graph.n) if self.mu is None else np.asarray(self.mu, dtype=float).reshape(-1)
        if J.shape != (self.graph.m,):
            raise ValueError(f"expected {self.graph.m} couplings, got {J.shape[0]}")
        if mu.shape != (self.graph.n,):
            raise ValueError(f"expected {self.graph.n} fields, got {mu.shape[0]}")
        object.__setattr__(self, "J", J)
        object.__setattr__(self, "mu", mu)

    @property
    def n(self) -> int:
        return self.graph.n

    @property
    def zero_field(self) -> bool:
        return not np.any(self.mu)

    def coupling(self, v, w) -> float:
        e = self.graph.find_edge(v, w)
        return 0.0 if e is None else float(self.J[e])

    def log_weight(self, x) -> float:
        """Exponent of the unnormalised weight of configuration ``x``."""
        x = np.asarray(x, dtype=float)
        uv = np.array(self.graph.edges, dtype=int).reshape(-1, 2)
        return float(self.mu @ x + np.sum(self.J * x[uv[:, 0]] * x[uv[:, 1]]))

    def to_dict(self) -> dict:
        d = self.graph.to_dict()
        d["J"] = [float(v) for v in self.J]
        d["mu"] = [float(v) for v in self.mu]
        return d

    @classmethod
    def from_dict(cls, data) -> "IsingModel":
        g = Graph.from_dict(data)
        mu = data.get("mu")
        return cls(g, np.array(data.get("J", [0.0] * g.m), dtype=float),
                   None if mu is None else np.array(mu, dtype=float))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text) -> "IsingModel":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class Condition:
    """Fixed spins: a tuple of ``(vertex, spin)`` with spin in {-1, +1}."""

    assignments: tuple = ()

    def __post_init__(self):
        items = tuple((int(v), int(s)) for v, s in self.assignments)
        if len({v for v, _ in items}) != len(items):
            raise ValueError("conditioned vertices must be distinct")
        if any(s not in (-1, 1) for _, s in items):
            raise ValueError("spins must be -1 or +1")
        object.__setattr__(self, "assignments", items)

    @property
    def vertices(self) -> list:
        return [v for v, _ in self.assignments]

    @property
    def spins(self) -> list:
        return [s for _, s in self.assignments]

    def __len__(self):
        return len(self.assignments)


def as_condition(cond) -> Condition:
    if isinstance(cond, Condition):
        return cond
    if isinstance(cond, dict):
        return Condition(tuple(cond.items()))
    return Condition(tuple(cond))
