"""Minimum-weight perfect matching on a detector graph."""

import logging
import math
from collections import OrderedDict
from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations
from typing import Tuple

import networkx as nx
import numpy as np

from .conf import DEFAULT_SETTINGS, get_setting

logger = logging.getLogger(__name__)

BOUNDARY = -1


@dataclass(frozen=True)
class DecodeResult:
    flip: bool
    weight: float
    pairs: Tuple[Tuple[int, int], ...]
    greedy: bool = False


def edge_weight(p):
    return math.log((1 - p) / p)


def decoding_graph(model):
    """Weighted graph with a single boundary node."""
    graph = nx.Graph()
    graph.add_nodes_from(range(model.num_detectors + 1))
    for (u, v), (p, flip) in model.edges.items():
        if p <= 0:
            continue
        p = min(p, 0.5 - 1e-12)
        graph.add_edge(u, v, weight=edge_weight(p), flip=flip, probability=p)
    return graph


class MatchingDecoder:
    """Exact matching by subset dynamic programming, greedy with pairwise swaps above the exact limit."""

    def __init__(self, model, exact_limit=None, cache_size=None):
        self.model = model
        self.graph = decoding_graph(model)
        self.boundary = model.boundary
        if exact_limit is None:
            exact_limit = get_setting("DECODER_EXACT_LIMIT", DEFAULT_SETTINGS["DECODER_EXACT_LIMIT"])
        self.exact_limit = exact_limit
        self._paths = {}
        if cache_size is None:
            cache_size = get_setting("DECODER_CACHE_SIZE", DEFAULT_SETTINGS["DECODER_CACHE_SIZE"])
        self.cache_size = cache_size
        # least recently decoded syndromes first
        self._cache = OrderedDict()

    def _from(self, source):
        if source not in self._paths:
            lengths, paths = nx.single_source_dijkstra(self.graph, source, weight="weight")
            parity = {}
            for target, path in paths.items():
                flip = False
                for u, v in zip(path, path[1:]):
                    flip ^= self.graph.edges[u, v]["flip"]
                parity[target] = flip
            self._paths[source] = (lengths, parity)
        return self._paths[source]

    def distance(self, u, v):
        """``(weight, observable parity)`` of the shortest path, ``inf`` if disconnected."""
        lengths, parity = self._from(u)
        if v not in lengths:
            return math.inf, False
        return lengths[v], parity[v]

    def _tables(self, defects):
        m = len(defects)
        pair = np.full((m, m), math.inf)
        edge = np.empty(m)
        for i, u in enumerate(defects):
            edge[i] = self.distance(u, self.boundary)[0]
            for j in range(i + 1, m):
                pair[i, j] = pair[j, i] = self.distance(u, defects[j])[0]
        return pair, edge

    def _exact(self, tables, m):
        pair, edge = tables

        @lru_cache(maxsize=None)
        def best(mask):
            if mask == 0:
                return 0.0, ()
            i = (mask & -mask).bit_length() - 1
            rest = mask & ~(1 << i)
            w, chosen = best(rest)
            option = (edge[i] + w, ((i, BOUNDARY),) + chosen)
            for j in range(i + 1, m):
                if rest >> j & 1:
                    w, chosen = best(rest & ~(1 << j))
                    candidate = pair[i, j] + w
                    if candidate < option[0]:
                        option = (candidate, ((i, j),) + chosen)
            return option

        return best((1 << m) - 1)

    def _greedy(self, tables, m):
        pair, edge = tables

        def cost(i, j):
            if i == BOUNDARY:
                i, j = j, i
            if i == BOUNDARY:
                return 0.0
            return edge[i] if j == BOUNDARY else pair[i, j]

        def normal(p):
            return (p[1], p[0]) if p[0] == BOUNDARY else p

        options = [(edge[i], i, BOUNDARY) for i in range(m)]
        options += [(pair[i, j], i, j) for i in range(m) for j in range(i + 1, m)]
        options.sort()
        used = set()
        pairs = []
        for _, i, j in options:
            if i in used or j in used:
                continue
            pairs.append((i, j))
            used.update((i, j))
            used.discard(BOUNDARY)

        improved = True
        while improved:
            improved = False
            for a, b in combinations(range(len(pairs)), 2):
                (i, j), (k, l) = pairs[a], pairs[b]
                current = cost(i, j) + cost(k, l)
                for first, second in (((i, k), (j, l)), ((i, l), (j, k))):
                    if cost(*first) + cost(*second) < current - 1e-12:
                        pairs[a], pairs[b] = normal(first), normal(second)
                        improved = True
                        break
                if improved:
                    break
        pairs = [p for p in pairs if p != (BOUNDARY, BOUNDARY)]
        return sum(cost(i, j) for i, j in pairs), tuple(pairs)

    def match(self, defects):
        """Matching of the defect list; pairs refer to positions in ``defects``."""
        defects = tuple(int(d) for d in defects)
        m = len(defects)
        if m == 0:
            return 0.0, (), False
        tables = self._tables(defects)
        if m <= self.exact_limit:
            weight, pairs = self._exact(tables, m)
            return weight, pairs, False
        logger.warning(f"{m} defects exceed the exact matching limit {self.exact_limit}, using greedy")
        weight, pairs = self._greedy(tables, m)
        return weight, pairs, True

    def _parity(self, defects, pairs):
        flip = False
        for i, j in pairs:
            target = self.boundary if j == BOUNDARY else defects[j]
            flip ^= self.distance(defects[i], target)[1]
        return flip

    def decode(self, detectors):
        """Predicted observable flip for one detector bitstring."""
        defects = tuple(int(i) for i in np.flatnonzero(detectors))
        if defects in self._cache:
            self._cache.move_to_end(defects)
            return self._cache[defects]
        weight, pairs, greedy = self.match(defects)
        result = DecodeResult(
            flip=self._parity(defects, pairs),
            weight=weight,
            pairs=tuple((defects[i], self.boundary if j == BOUNDARY else defects[j]) for i, j in pairs),
            greedy=greedy,
        )
        self._cache[defects] = result
        if len(self._cache) > self.cache_size:
            self._cache.popitem(last=False)
        return result

    def decode_batch(self, detectors):
        """Predicted flips and greedy flags for a ``(shots, detectors)`` array."""
        results = [self.decode(row) for row in detectors]
        return np.array([r.flip for r in results]), np.array([r.greedy for r in results])


def exhaustive_matching_weight(decoder, defects):
    """Minimum over every involution of the defects, each paired or sent to the boundary."""
    defects = list(defects)

    def search(remaining):
        if not remaining:
            return 0.0
        first, rest = remaining[0], remaining[1:]
        best = decoder.distance(first, decoder.boundary)[0] + search(rest)
        for k, other in enumerate(rest):
            w = decoder.distance(first, other)[0]
            best = min(best, w + search(rest[:k] + rest[k + 1:]))
        return best

    return search(defects)
