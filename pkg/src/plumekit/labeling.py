"""Ground-truth machinery: thresholding, components, contours, source labels.

The automated part of a semi-automated labeling flow: threshold a ratio
field into a candidate mask, split it into connected components, trace each
component's outer boundary as a closed polygon on the pixel-corner grid,
and attribute components to named emission sources by nearest centroid.
Operator-refined masks enter through the CLI as override files; nothing
here edits masks interactively.

Contours live on the pixel corner lattice: pixel (x, y) occupies the unit
square with corners (x, y) .. (x+1, y+1), so a single foreground pixel at
the origin traces to (0,0)(1,0)(1,1)(0,1)(0,0) and the shoelace area of a
hole-free component equals its pixel count.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .raster import Field, Mask
from .validation import InvariantError

_STRUCTURES = {
    4: np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool),
    8: np.ones((3, 3), dtype=bool),
}


@dataclass(frozen=True)
class Component:
    """One connected foreground region."""

    id: int
    pixel_list: tuple[tuple[int, int], ...]  # (x, y) pairs in raster order
    area_px: int
    bbox: tuple[int, int, int, int]  # inclusive (x0, y0, x1, y1)
    centroid: tuple[float, float]


@dataclass(frozen=True)
class Contour:
    """Closed outer-boundary polygon of one component.

    Vertices are (x, y) corner-lattice points; the first vertex is repeated
    at the end.
    """

    vertices: tuple[tuple[int, int], ...]
    component_id: int

    def shoelace_area(self) -> float:
        xs = np.array([v[0] for v in self.vertices], dtype=np.float64)
        ys = np.array([v[1] for v in self.vertices], dtype=np.float64)
        return float(abs(np.sum(xs[:-1] * ys[1:] - xs[1:] * ys[:-1])) / 2.0)


def mask_from_threshold(field: Field, threshold: float, direction: str) -> Mask:
    """Binary mask of pixels strictly beyond the threshold.

    direction="below" marks values < threshold (plumes in ratio fields sit
    below a negative cut); "above" marks values > threshold.
    """
    if direction == "below":
        hits = field.values < threshold
    elif direction == "above":
        hits = field.values > threshold
    else:
        raise InvariantError(f"direction must be 'below' or 'above', got {direction!r}")
    return Mask(hits.astype(np.uint8))


def connected_components(mask: Mask, connectivity: int = 8) -> list[Component]:
    """Maximal connected foreground sets under 4- or 8-connectivity.

    Components are ordered (and numbered 1..N) by the raster position of
    their first pixel.
    """
    if connectivity not in _STRUCTURES:
        raise InvariantError(f"connectivity must be 4 or 8, got {connectivity}")
    fg = mask.labels != 0
    labeled, n = ndimage.label(fg, structure=_STRUCTURES[connectivity])
    if n == 0:
        return []

    components = []
    flat_first = {}
    for raw_id in range(1, n + 1):
        ys, xs = np.nonzero(labeled == raw_id)
        flat_first[raw_id] = (int(ys[0]), int(xs[0]))
        components.append((raw_id, ys, xs))
    components.sort(key=lambda item: flat_first[item[0]])

    out = []
    for new_id, (_, ys, xs) in enumerate(components, start=1):
        pixels = tuple((int(x), int(y)) for y, x in zip(ys, xs))
        out.append(
            Component(
                id=new_id,
                pixel_list=pixels,
                area_px=len(pixels),
                bbox=(int(xs.min()), int(ys.min()), int(xs.max()), int(ys.max())),
                centroid=(float(xs.mean()), float(ys.mean())),
            )
        )
    return out


def _boundary_edges(pixels: set[tuple[int, int]]) -> dict:
    """Directed corner-lattice edges with the component interior on the left."""
    edges: dict[tuple[int, int], list[tuple[int, int]]] = {}

    def add(a, b):
        edges.setdefault(a, []).append(b)

    for x, y in pixels:
        if (x, y - 1) not in pixels:  # north side
            add((x, y), (x + 1, y))
        if (x + 1, y) not in pixels:  # east side
            add((x + 1, y), (x + 1, y + 1))
        if (x, y + 1) not in pixels:  # south side
            add((x + 1, y + 1), (x, y + 1))
        if (x - 1, y) not in pixels:  # west side
            add((x, y + 1), (x, y))
    return edges


def _trace_outer(edges: dict) -> tuple[tuple[int, int], ...]:
    """Walk boundary edges into the outer closed polygon.

    The walk starts at the topmost-leftmost corner and, where several edges
    leave one corner (diagonal pixel contacts), prefers the leftmost turn,
    which keeps diagonally-touching squares on a single loop.
    """
    start = min(edges, key=lambda v: (v[1], v[0]))
    polygon = [start]
    # First move from the start corner is unique: its one outgoing edge.
    current = edges[start].pop(0)
    direction = (current[0] - start[0], current[1] - start[1])
    polygon.append(current)

    while current != start:
        candidates = edges.get(current, [])
        if not candidates:
            raise InvariantError("open boundary: mask edges do not close")
        if len(candidates) == 1:
            nxt = candidates.pop(0)
        else:
            dx, dy = direction
            # preference: left turn, straight, right turn
            for preferred in ((dy, -dx), (dx, dy), (-dy, dx)):
                target = (current[0] + preferred[0], current[1] + preferred[1])
                if target in candidates:
                    nxt = target
                    candidates.remove(target)
                    break
            else:
                nxt = candidates.pop(0)
        direction = (nxt[0] - current[0], nxt[1] - current[1])
        polygon.append(nxt)
        current = nxt
    return tuple(polygon)


def extract_contours(mask: Mask) -> list[Contour]:
    """Outer boundary polygon of every component (8-connectivity).

    Inner boundaries of holes are not emitted; for hole-free components the
    polygon's shoelace area equals the component pixel count.
    """
    contours = []
    for comp in connected_components(mask, connectivity=8):
        edges = _boundary_edges(set(comp.pixel_list))
        contours.append(Contour(vertices=_trace_outer(edges), component_id=comp.id))
    return contours


def assign_sources(
    components: list[Component],
    vent_locations: list[tuple[str, tuple[float, float]]],
    shape: tuple[int, int],
) -> Mask:
    """Label each component with its nearest vent (1-based vent index).

    Distance is Euclidean between the component centroid and the vent
    position; ties break toward the lower vent index. ``shape`` is the
    (height, width) of the output mask.
    """
    if not vent_locations:
        raise InvariantError("at least one vent location required")
    labels = np.zeros(shape, dtype=np.uint8)
    for comp in components:
        cx, cy = comp.centroid
        best_idx = 0
        best_d2 = None
        for idx, (_, (vx, vy)) in enumerate(vent_locations):
            d2 = (cx - vx) ** 2 + (cy - vy) ** 2
            if best_d2 is None or d2 < best_d2:
                best_d2 = d2
                best_idx = idx
        for x, y in comp.pixel_list:
            labels[y, x] = best_idx + 1
    return Mask(labels)


def contours_to_geojson(contours: list[Contour]) -> dict:
    """GeoJSON-style FeatureCollection in pixel coordinates."""
    return {
        "type": "FeatureCollection",
        "features": [
            {
                "type": "Feature",
                "properties": {
                    "component_id": c.component_id,
                    "area_px": c.shoelace_area(),
                },
                "geometry": {
                    "type": "Polygon",
                    "coordinates": [[list(v) for v in c.vertices]],
                },
            }
            for c in contours
        ],
    }
