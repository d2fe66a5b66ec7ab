"""Named example graphs and the closed-form secular functions known for two of them."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .graph import GraphError, MetricGraph, build_graph

__all__ = ["BUILTIN_NAMES", "builtin", "default_lengths", "closed_form_FR", "pumpkin_chain"]

BUILTIN_NAMES = ("figure8", "dumbbell", "chain1221", "chain321", "pumpkin-chain:p1,p2,...")


def default_lengths(n: int) -> list[float]:
    """pi, e, 1, sqrt2, sqrt3, sqrt5, then square roots of further primes."""
    base = [math.pi, math.e, 1.0, math.sqrt(2.0), math.sqrt(3.0), math.sqrt(5.0)]
    p = 7
    while len(base) < n:
        if all(p % q for q in range(2, int(p ** 0.5) + 1)):
            base.append(math.sqrt(p))
        p += 1
    return base[:n]


def pumpkin_chain(sizes: Sequence[int], lengths: Sequence[float] | None = None) -> MetricGraph:
    """``[p1, ..., pn]`` chain: ``p_k`` parallel edges between ``v_{k-1}`` and ``v_k``.

    Pumpkins are ordered left to right and the edges inside a pumpkin take
    consecutive lengths, so edge ``j`` gets ``lengths[j]``.
    """
    sizes = [int(p) for p in sizes]
    if not sizes or any(p < 1 for p in sizes):
        raise GraphError(f"invalid pumpkin sizes {sizes}")
    E = sum(sizes)
    lengths = default_lengths(E) if lengths is None else list(lengths)
    if len(lengths) != E:
        raise GraphError(f"chain {sizes} needs {E} lengths, got {len(lengths)}")
    edges = []
    j = 0
    for k, p in enumerate(sizes):
        for _ in range(p):
            edges.append((j, k, k + 1, lengths[j]))
            j += 1
    return build_graph(range(len(sizes) + 1), edges)


def builtin(name: str, lengths: Sequence[float] | None = None) -> MetricGraph:
    """Construct a named example graph, optionally overriding its lengths."""
    key = name.strip().lower()
    if key in ("figure8", "figure-8"):
        ls = [math.pi, math.e] if lengths is None else list(lengths)
        _check(ls, 2, name)
        return build_graph([0], [(0, 0, 0, ls[0]), (1, 0, 0, ls[1])])
    if key == "dumbbell":
        # loops carry x1 and x3, the bridge carries x2
        ls = [math.pi, math.e, 1.0] if lengths is None else list(lengths)
        _check(ls, 3, name)
        return build_graph([0, 1], [(0, 0, 0, ls[0]), (1, 0, 1, ls[1]), (2, 1, 1, ls[2])])
    if key == "chain321":
        return pumpkin_chain([3, 2, 1], lengths)
    if key == "chain1221":
        return pumpkin_chain([1, 2, 2, 1], lengths)
    if key.startswith("pumpkin-chain"):
        _, _, spec = key.partition(":")
        try:
            sizes = [int(s) for s in spec.replace("[", "").replace("]", "").split(",") if s.strip()]
        except ValueError:
            raise GraphError(f"bad pumpkin-chain spec {name!r}") from None
        return pumpkin_chain(sizes, lengths)
    raise GraphError(f"unknown builtin graph {name!r}")


def _check(ls: Sequence[float], n: int, name: str) -> None:
    if len(ls) != n:
        raise GraphError(f"{name} needs {n} lengths, got {len(ls)}")


def closed_form_FR(name: str, x, alpha) -> np.ndarray:
    """Printed closed-form F_R for figure8 and dumbbell, vectorized over leading axes."""
    x = np.asarray(x, dtype=float)
    a = np.asarray(alpha, dtype=float)
    key = name.strip().lower()
    if key in ("figure8", "figure-8"):
        x1, x2 = x[..., 0], x[..., 1]
        a1, a2 = a[..., 0], a[..., 1]
        return 2.0 * (np.cos(a2) * np.sin(x1) + np.cos(a1) * np.sin(x2) - np.sin(x1 + x2))
    if key == "dumbbell":
        x1, x2, x3 = x[..., 0], x[..., 1], x[..., 2]
        a1, a2 = a[..., 0], a[..., 1]
        return (16.0 / 9.0) * np.cos(x2) * (
            np.cos(a1) * np.sin(x3) + np.cos(a2) * np.sin(x1) - np.sin(x1 + x3)
        ) - (8.0 / 9.0) * np.sin(x2) * (
            4.0 * (np.cos(a1) - np.cos(x1)) * (np.cos(a2) - np.cos(x3)) - np.sin(x1) * np.sin(x3)
        )
    raise GraphError(f"no closed form for {name!r}")
