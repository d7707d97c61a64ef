"""Shared test helpers: hand-built grid worlds and independent reference
implementations used to cross-check the package (kept deliberately naive)."""

from __future__ import annotations

from zsnav.env_graph import EnvironmentGraph, ViewSplit, Viewpoint

_QUADRANT = {(1, 0): 0, (0, 1): 1, (-1, 0): 2, (0, -1): 3}


def grid_graph(
    cells: dict[str, tuple[int, int]],
    edges: list[tuple[str, str]],
    tags: dict[str, list[str]] | None = None,
    spacing: float = 2.0,
    scan_id: str = "test",
) -> EnvironmentGraph:
    """Build a world from lattice cells; neighbors go into heading quadrants."""
    tags = tags or {}
    by_split: dict[str, dict[int, list[str]]] = {n: {0: [], 1: [], 2: [], 3: []} for n in cells}
    for a, b in edges:
        (x1, y1), (x2, y2) = cells[a], cells[b]
        by_split[a][_QUADRANT[(x2 - x1, y2 - y1)]].append(b)
        by_split[b][_QUADRANT[(x1 - x2, y1 - y2)]].append(a)
    viewpoints = {}
    for node, (x, y) in cells.items():
        viewpoints[node] = Viewpoint(
            id=node,
            position=(x * spacing, y * spacing, 0.0),
            splits=tuple(
                ViewSplit(
                    split_index=k,
                    image_ref=f"{scan_id}/{node}/split{k}",
                    visible_neighbors=tuple(sorted(by_split[node][k])),
                    semantic_tags=tuple(tags.get(node, [])),
                )
                for k in range(4)
            ),
        )
    normalized = tuple(
        sorted((min(a, b), max(a, b), float(spacing)) for a, b in edges)
    )
    return EnvironmentGraph(scan_id=scan_id, viewpoints=viewpoints, edges=normalized)


def chain_graph(n: int, spacing: float = 2.0, scan_id: str = "chain") -> EnvironmentGraph:
    cells = {f"c{i:02d}": (i, 0) for i in range(n)}
    edges = [(f"c{i:02d}", f"c{i + 1:02d}") for i in range(n - 1)]
    return grid_graph(cells, edges, spacing=spacing, scan_id=scan_id)


def dijkstra_reference(g: EnvironmentGraph, source: str) -> dict[str, float]:
    """O(V^2) Dijkstra without a heap; independent of the package's version."""
    dist = {node: float("inf") for node in g.viewpoints}
    dist[source] = 0.0
    unvisited = set(g.viewpoints)
    while unvisited:
        node = min(unvisited, key=lambda n: dist[n])
        unvisited.discard(node)
        if dist[node] == float("inf"):
            break
        for nb in g.neighbors(node):
            candidate = dist[node] + g.edge_length(node, nb)
            if candidate < dist[nb]:
                dist[nb] = candidate
    return dist


def bfs_hops_reference(g: EnvironmentGraph, sources: set[str]) -> dict[str, int]:
    """Plain frontier-by-frontier BFS, independent of the package's version."""
    dist = {s: 0 for s in sources}
    frontier = sorted(sources)
    hops = 0
    while frontier:
        hops += 1
        nxt = []
        for node in frontier:
            for nb in g.neighbors(node):
                if nb not in dist:
                    dist[nb] = hops
                    nxt.append(nb)
        frontier = sorted(nxt)
    return dist


def enumerate_simple_paths(g: EnvironmentGraph, a: str, b: str):
    """Yield (length, path) for every simple path; exponential, small graphs only."""

    def walk(node: str, length: float, path: list[str]):
        if node == b:
            yield length, list(path)
            return
        for nb in g.neighbors(node):
            if nb not in path:
                path.append(nb)
                yield from walk(nb, length + g.edge_length(node, nb), path)
                path.pop()

    yield from walk(a, 0.0, [a])
