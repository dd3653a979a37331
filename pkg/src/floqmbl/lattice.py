"""Qubit graphs for the Floquet circuits: open chains and heavy-hexagon patches.

A lattice bundles its edges, an ordered partition of the edges into gate
layers, and integer coordinates used for distances. Sites are 0-based.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import InvalidSizeError, PatternError

CHAIN = "chain"
HEAVY_HEX = "heavy_hex"

# hexagon count -> number of triangle rows in the nested patch
_HEX_ROWS = {1: 1, 3: 2, 6: 3, 10: 4}


@dataclass(frozen=True)
class Lattice:
    """Immutable qubit graph with an ordered edge-layer partition.

    Attributes
    ----------
    n_sites : int
        Number of qubits.
    edges : tuple of (int, int)
        Unordered site pairs, stored with ``a < b`` in ascending order.
    layers : tuple of tuple of (int, int)
        Disjoint matchings whose union is ``edges``; applied in order.
    coords : np.ndarray
        Integer coordinates, shape ``(n_sites, dim)``.
    kind : str
        ``"chain"`` or ``"heavy_hex"``.
    """

    n_sites: int
    edges: tuple
    layers: tuple
    coords: np.ndarray = field(repr=False, compare=False)
    kind: str = CHAIN

    def __post_init__(self):
        self.coords.setflags(write=False)

    def neighbors(self, site: int) -> list[int]:
        return sorted([b for a, b in self.edges if a == site]
                      + [a for a, b in self.edges if b == site])

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.n_sites, dtype=int)
        for a, b in self.edges:
            deg[a] += 1
            deg[b] += 1
        return deg

    def to_json(self) -> str:
        return json.dumps({
            "kind": self.kind,
            "sites": self.n_sites,
            "coords": self.coords.tolist(),
            "edges": [list(e) for e in self.edges],
            "layers": [[list(e) for e in layer] for layer in self.layers],
        })

    @classmethod
    def from_json(cls, text: str) -> "Lattice":
        doc = json.loads(text)
        lat = cls(
            n_sites=int(doc["sites"]),
            edges=tuple(tuple(e) for e in doc["edges"]),
            layers=tuple(tuple(tuple(e) for e in layer) for layer in doc["layers"]),
            coords=np.asarray(doc["coords"], dtype=np.int64),
            kind=doc["kind"],
        )
        check_layers(lat)
        return lat


@dataclass(frozen=True)
class SitePattern:
    """One classical bit per site (0 is |0>, 1 is |1>)."""

    bits: tuple

    @classmethod
    def from_string(cls, text: str) -> "SitePattern":
        """Parse ``"0101"``; character ``i`` is site ``i``."""
        return cls(tuple(int(c) for c in text))

    def __len__(self) -> int:
        return len(self.bits)

    def __str__(self) -> str:
        return "".join(str(b) for b in self.bits)

    @property
    def index(self) -> int:
        """Little-endian basis index (site 0 is the least significant bit)."""
        return sum(b << i for i, b in enumerate(self.bits))

    def sets(self) -> tuple[np.ndarray, np.ndarray]:
        """Sites initialised to 0 and to 1."""
        arr = np.asarray(self.bits)
        return np.flatnonzero(arr == 0), np.flatnonzero(arr == 1)


def check_layers(lattice: Lattice) -> None:
    """Raise ``ValueError`` unless the layers partition the edges into matchings."""
    seen = set()
    for layer in lattice.layers:
        touched = set()
        for a, b in layer:
            if a in touched or b in touched:
                raise ValueError(f"site reused inside a layer at edge {(a, b)}")
            touched.update((a, b))
            if (a, b) in seen:
                raise ValueError(f"edge {(a, b)} appears in two layers")
            seen.add((a, b))
    if seen != set(lattice.edges):
        raise ValueError("layers do not cover the edge set")


def build_chain(n: int) -> Lattice:
    """Open chain with the two-layer brickwork partition.

    Layer 1 holds the pairs ``(2i, 2i+1)`` and layer 2 the pairs
    ``(2i+1, 2i+2)``.

    Examples
    --------
    >>> build_chain(4).layers
    (((0, 1), (2, 3)), ((1, 2),))
    """
    if int(n) != n or n < 2:
        raise InvalidSizeError(f"a chain needs at least 2 sites, got {n}")
    n = int(n)
    c1 = tuple((2 * i, 2 * i + 1) for i in range(n // 2))
    c2 = tuple((2 * i + 1, 2 * i + 2) for i in range((n - 1) // 2))
    edges = tuple(sorted(c1 + c2))
    coords = np.arange(n, dtype=np.int64)[:, None]
    return Lattice(n, edges, (c1, c2), coords, CHAIN)


def _brick_hexagons(rows: int) -> list[tuple[int, int]]:
    # triangle of hexagons in brick-wall coordinates; row r holds r+1 bricks
    return [(-r + 2 * i, r) for r in range(rows) for i in range(r + 1)]


def _heavy_hex_from_bricks(bricks: Sequence[tuple[int, int]]):
    """Heavy-hex qubits for a set of honeycomb bricks.

    Honeycomb vertices sit at even doubled coordinates and edge qubits at the
    midpoints, so every physical link has unit Manhattan length.
    """
    verts, links = set(), set()
    for x0, y in bricks:
        for j in (0, 1):
            for i in range(3):
                verts.add((x0 + i, y + j))
            links.add(((x0, y + j), (x0 + 1, y + j)))
            links.add(((x0 + 1, y + j), (x0 + 2, y + j)))
        links.add(((x0, y), (x0, y + 1)))
        links.add(((x0 + 2, y), (x0 + 2, y + 1)))
    points = {(2 * x, 2 * y) for x, y in verts}
    bonds = []
    for (ax, ay), (bx, by) in links:
        mid = (ax + bx, ay + by)
        points.add(mid)
        bonds.append(((2 * ax, 2 * ay), mid))
        bonds.append((mid, (2 * bx, 2 * by)))
    order = sorted(points, key=lambda p: (p[1], p[0]))
    index = {p: i for i, p in enumerate(order)}
    edges = sorted(tuple(sorted((index[a], index[b]))) for a, b in bonds)
    coords = np.array(order, dtype=np.int64)
    return coords, edges


def _edge_coloring(n_sites: int, edges: Sequence[tuple[int, int]], n_colors: int):
    """Proper edge colouring of a bipartite graph with max degree ``n_colors``.

    Edges are coloured greedily in the given order; when no colour is free at
    both ends, an alternating two-colour path is flipped (König's argument).
    """
    color_at = [dict() for _ in range(n_sites)]  # site -> {color: neighbour}
    for a, b in edges:
        free_a = [c for c in range(n_colors) if c not in color_at[a]]
        free_b = [c for c in range(n_colors) if c not in color_at[b]]
        common = [c for c in free_a if c in free_b]
        if common:
            c = common[0]
        else:
            ca, cb = free_a[0], free_b[0]
            # walk the path from b that alternates ca, cb and swap its colours
            path, v, want = [], b, ca
            while want in color_at[v]:
                w = color_at[v][want]
                path.append((v, w, want))
                v, want = w, (cb if want == ca else ca)
            for v, w, c_old in path:
                del color_at[v][c_old]
                del color_at[w][c_old]
            for v, w, c_old in path:
                c_new = cb if c_old == ca else ca
                color_at[v][c_new] = w
                color_at[w][c_new] = v
            c = ca
        color_at[a][c] = b
        color_at[b][c] = a
    layers = [[] for _ in range(n_colors)]
    for a, b in edges:
        c = next(col for col, w in color_at[a].items() if w == b)
        layers[c].append((a, b))
    return tuple(tuple(sorted(layer)) for layer in layers)


def build_heavy_hex(rings: int) -> Lattice:
    """Heavy-hexagon patch of 1, 3, 6 or 10 hexagons (12, 28, 49, 75 qubits).

    Hexagons are stacked as a growing triangle so that each patch contains
    the previous one.
    """
    if rings not in _HEX_ROWS:
        raise InvalidSizeError(f"hexagon count must be one of {sorted(_HEX_ROWS)}, got {rings}")
    coords, edges = _heavy_hex_from_bricks(_brick_hexagons(_HEX_ROWS[rings]))
    layers = _edge_coloring(len(coords), edges, 3)
    lat = Lattice(len(coords), tuple(edges), layers, coords, HEAVY_HEX)
    check_layers(lat)
    return lat


def heavy_hex_sheet(width: int, height: int) -> Lattice:
    """Rectangular heavy-hex sheet of ``width x height`` bricks.

    Intended for lattice sums such as the noise form factor; no gate layers
    beyond a valid colouring are implied.
    """
    if width < 1 or height < 1:
        raise InvalidSizeError("sheet dimensions must be positive")
    bricks = [(2 * i + (r % 2), r) for r in range(height) for i in range(width)]
    coords, edges = _heavy_hex_from_bricks(bricks)
    layers = _edge_coloring(len(coords), edges, 3)
    return Lattice(len(coords), tuple(edges), layers, coords, HEAVY_HEX)


def cdw_pattern(lattice: Lattice) -> SitePattern:
    """Charge-density-wave pattern: a proper two-colouring of the sites.

    Chains use the alternating ``0101...`` word. On heavy-hex patches site 0
    is set to 1; the other colouring follows from :func:`flip`.
    Raises :class:`PatternError` if the graph is not bipartite.
    """
    color = [-1] * lattice.n_sites
    adj = [[] for _ in range(lattice.n_sites)]
    for a, b in lattice.edges:
        adj[a].append(b)
        adj[b].append(a)
    for root in range(lattice.n_sites):
        if color[root] >= 0:
            continue
        color[root] = 1
        queue = deque([root])
        while queue:
            v = queue.popleft()
            for w in adj[v]:
                if color[w] < 0:
                    color[w] = 1 - color[v]
                    queue.append(w)
                elif color[w] == color[v]:
                    raise PatternError("lattice is not bipartite")
    if lattice.kind == CHAIN:
        # chains use the 0101... convention so site 0 starts empty
        color = [i % 2 for i in range(lattice.n_sites)]
    return SitePattern(tuple(color))


def flip(pattern: SitePattern) -> SitePattern:
    return SitePattern(tuple(1 - b for b in pattern.bits))


def site_distance(lattice: Lattice, a: int, b: int) -> int:
    """Manhattan distance between the coordinates of two sites."""
    for s in (a, b):
        if not 0 <= s < lattice.n_sites:
            raise IndexError(f"site {s} outside 0..{lattice.n_sites - 1}")
    return int(np.abs(lattice.coords[a] - lattice.coords[b]).sum())


def distances_from(lattice: Lattice, center: int) -> np.ndarray:
    """Manhattan distances from ``center`` to every site."""
    if not 0 <= center < lattice.n_sites:
        raise IndexError(f"site {center} outside 0..{lattice.n_sites - 1}")
    return np.abs(lattice.coords - lattice.coords[center]).sum(axis=1)


def graph_distances(lattice: Lattice, source: int) -> np.ndarray:
    """Breadth-first hop counts from ``source``; unreachable sites get -1."""
    dist = np.full(lattice.n_sites, -1, dtype=int)
    adj = [[] for _ in range(lattice.n_sites)]
    for a, b in lattice.edges:
        adj[a].append(b)
        adj[b].append(a)
    dist[source] = 0
    queue = deque([source])
    while queue:
        v = queue.popleft()
        for w in adj[v]:
            if dist[w] < 0:
                dist[w] = dist[v] + 1
                queue.append(w)
    return dist


def center_site(lattice: Lattice) -> int:
    """Site closest to the coordinate centroid (lowest index on ties)."""
    centroid = lattice.coords.mean(axis=0)
    d = np.abs(lattice.coords - centroid).sum(axis=1)
    return int(np.argmin(d))
