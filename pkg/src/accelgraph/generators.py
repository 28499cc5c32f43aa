"""Deterministic edge-list generators for the benchmark corpus."""

from __future__ import annotations

import random

from .graph import even_sizes


def path_edges(n: int) -> list[tuple[int, int]]:
    return [(i, i + 1) for i in range(n - 1)]


def cycle_edges(n: int) -> list[tuple[int, int]]:
    if n == 1:
        return []
    return [(i, (i + 1) % n) for i in range(n)]


def star_edges(n: int) -> list[tuple[int, int]]:
    return [(0, i) for i in range(1, n)]


def random_edges(n: int, p: float, seed: int) -> list[tuple[int, int]]:
    """Connected random digraph: a backbone cycle plus Binomial extras.

    The backbone guarantees strong connectivity; extra edges are sampled per
    source with expected count p * (n - 1), deterministic under the seed.
    """
    rng = random.Random(seed)
    edges = cycle_edges(n)
    seen = {(s, d) for s, d in edges}
    for src in range(n):
        extra = sum(1 for _ in range(n - 1) if rng.random() < p) if n <= 512 else (
            _binomial(rng, n - 1, p)
        )
        for _ in range(extra):
            dst = rng.randrange(n)
            if dst != src and (src, dst) not in seen:
                seen.add((src, dst))
                edges.append((src, dst))
    return edges


def _binomial(rng: random.Random, n: int, p: float) -> int:
    # Normal approximation keeps generation O(edges) for large n.
    mu = n * p
    sigma = (n * p * (1.0 - p)) ** 0.5
    return max(0, min(n, round(rng.gauss(mu, sigma))))


def component_edges(n: int, k: int, p: float, seed: int) -> list[tuple[int, int]]:
    """k disconnected random components on contiguous id ranges.

    Component boundaries align with an even contiguous split of the id space,
    so any contiguous partitioning into k parts keeps every edge internal.
    Each component is a chain (for connectivity) plus random internal extras.
    """
    if k < 1 or k > n:
        raise ValueError(f"component count must be in [1, {n}], got {k}")
    rng = random.Random(seed)
    edges: list[tuple[int, int]] = []
    start = 0
    for size in even_sizes(n, k):
        ids = range(start, start + size)
        seen = set()
        for i in range(start, start + size - 1):
            edges.append((i, i + 1))
            seen.add((i, i + 1))
        for src in ids:
            for dst in ids:
                if src != dst and (src, dst) not in seen and rng.random() < p:
                    seen.add((src, dst))
                    edges.append((src, dst))
        start += size
    return edges


def generate(kind: str, n: int, *, k: int = 2, p: float = 0.05, seed: int = 0) -> list[tuple[int, int]]:
    if n < 1:
        raise ValueError(f"vertex count must be >= 1, got {n}")
    if kind == "path":
        return path_edges(n)
    if kind == "cycle":
        return cycle_edges(n)
    if kind == "star":
        return star_edges(n)
    if kind == "random":
        return random_edges(n, p, seed)
    if kind == "components":
        return component_edges(n, k, p, seed)
    raise ValueError(f"unknown graph kind {kind!r}")


def write_edge_list(edges: list[tuple[int, int]], path) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        for src, dst in edges:
            fh.write(f"{src} {dst}\n")
