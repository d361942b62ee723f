"""
Domain representations: masked regular grids, indexed triangle meshes and
fixed-value constraint sets, together with their file parsers and generators.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.spatial import cKDTree

from .errors import (
    DegenerateFaceError,
    DomainError,
    MeshFormatError,
    NonManifoldEdgeError,
    SnapError,
)
from .settings import DEFAULT_SETTINGS

logger = logging.getLogger(__name__)

# 8-neighborhood offsets (di, dj), di along x (columns), dj along y (rows)
_NEIGHBORHOOD = [(di, dj) for dj in (-1, 0, 1) for di in (-1, 0, 1) if (di, dj) != (0, 0)]


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


def interior_mask(mask: np.ndarray) -> np.ndarray:
    """Masked nodes whose 8 neighbors are all masked."""
    mask = np.asarray(mask, dtype=bool)
    ny, nx = mask.shape
    padded = np.pad(mask, 1, constant_values=False)
    inside = mask.copy()
    for di, dj in _NEIGHBORHOOD:
        inside &= padded[1 + dj:1 + dj + ny, 1 + di:1 + di + nx]
    return inside


@dataclass(frozen=True, eq=False)
class GridDomain:
    """
    Regular 2D grid restricted to a mask.

    Unknowns are the masked nodes, numbered row-major (rows along y). Node
    (i, j) sits at ``origin + h·(i, j)``.
    """

    nx: int
    ny: int
    h: float
    mask: np.ndarray
    origin: Tuple[float, float] = (0.0, 0.0)
    node_index: np.ndarray = field(init=False, repr=False)
    grid_ij: np.ndarray = field(init=False, repr=False)
    interior: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if not self.h > 0:
            raise DomainError(f"grid spacing must be positive, got {self.h}")
        if self.nx < 3 or self.ny < 3:
            raise DomainError(f"grid needs at least 3x3 nodes, got {self.nx}x{self.ny}")
        mask = np.array(self.mask, dtype=bool)
        if mask.shape != (self.ny, self.nx):
            raise DomainError(f"mask shape {mask.shape} does not match grid ({self.ny}, {self.nx})")

        node_index = np.full(mask.shape, -1, dtype=np.int64)
        rows, cols = np.nonzero(mask)  # row-major order
        node_index[rows, cols] = np.arange(rows.size)
        inside = interior_mask(mask)

        object.__setattr__(self, "mask", _frozen(mask))
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))
        object.__setattr__(self, "node_index", _frozen(node_index))
        object.__setattr__(self, "grid_ij", _frozen(np.column_stack([cols, rows])))
        object.__setattr__(self, "interior", _frozen(node_index[inside]))

    @property
    def n(self) -> int:
        return int(self.grid_ij.shape[0])

    @property
    def n_interior(self) -> int:
        return int(self.interior.size)

    @property
    def dim(self) -> int:
        return 2

    @property
    def positions(self) -> np.ndarray:
        return np.asarray(self.origin) + self.h * self.grid_ij.astype(float)

    @property
    def bbox_diagonal(self) -> float:
        p = self.positions
        return float(np.linalg.norm(p.max(axis=0) - p.min(axis=0)))

    def neighbor(self, nodes: np.ndarray, di: int, dj: int) -> np.ndarray:
        """Index of the node offset by (di, dj) from each of ``nodes``; -1 if unmasked."""
        ij = self.grid_ij[nodes]
        i = ij[:, 0] + di
        j = ij[:, 1] + dj
        valid = (i >= 0) & (i < self.nx) & (j >= 0) & (j < self.ny)
        result = np.full(len(nodes), -1, dtype=np.int64)
        result[valid] = self.node_index[j[valid], i[valid]]
        return result


@dataclass(frozen=True, eq=False)
class TriMesh:
    """
    Indexed triangle mesh in 2D or 3D.

    2D triangles are reoriented counter-clockwise. Edges are stored once with
    their (up to two) incident faces and the vertex opposite the edge in
    each face; ``face_edges[f, c]`` is the edge opposite corner ``c``.
    """

    positions: np.ndarray
    triangles: np.ndarray
    degenerate_tol: float = DEFAULT_SETTINGS["tolerances"]["degenerate_area"]
    edges: np.ndarray = field(init=False, repr=False)
    edge_faces: np.ndarray = field(init=False, repr=False)
    edge_opposite: np.ndarray = field(init=False, repr=False)
    face_edges: np.ndarray = field(init=False, repr=False)
    face_areas: np.ndarray = field(init=False, repr=False)
    boundary_vertices: np.ndarray = field(init=False, repr=False)
    interior_vertices: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        positions = np.array(self.positions, dtype=float)
        triangles = np.array(self.triangles, dtype=np.int64)
        if positions.ndim != 2 or positions.shape[1] not in (2, 3):
            raise DomainError(f"positions must be (n, 2) or (n, 3), got {positions.shape}")
        if triangles.ndim != 2 or triangles.shape[1] != 3 or triangles.shape[0] == 0:
            raise DomainError(f"triangles must be a non-empty (m, 3) array, got {triangles.shape}")
        n = positions.shape[0]
        if triangles.min() < 0 or triangles.max() >= n:
            raise DomainError("triangle index out of range")
        unused = np.setdiff1d(np.arange(n), triangles.reshape(-1))
        if unused.size:
            raise DomainError(f"vertex {int(unused[0])} is not referenced by any triangle")

        areas = self._signed_areas(positions, triangles)
        if positions.shape[1] == 2:
            flipped = areas < 0
            if flipped.any():
                logger.debug("reorienting %d clockwise triangles", int(flipped.sum()))
                triangles[flipped] = triangles[flipped][:, [0, 2, 1]]
            areas = np.abs(areas)
        extent = positions.max(axis=0) - positions.min(axis=0)
        threshold = self.degenerate_tol * float(extent @ extent)
        bad = np.flatnonzero(areas <= threshold)
        if bad.size:
            raise DegenerateFaceError(int(bad[0]), float(areas[bad[0]]))

        self._derive_edges(triangles)
        object.__setattr__(self, "positions", _frozen(positions))
        object.__setattr__(self, "triangles", _frozen(triangles))
        object.__setattr__(self, "face_areas", _frozen(areas))

    @staticmethod
    def _signed_areas(positions: np.ndarray, triangles: np.ndarray) -> np.ndarray:
        e1 = positions[triangles[:, 1]] - positions[triangles[:, 0]]
        e2 = positions[triangles[:, 2]] - positions[triangles[:, 0]]
        if positions.shape[1] == 2:
            return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
        return 0.5 * np.linalg.norm(np.cross(e1, e2), axis=1)

    def _derive_edges(self, triangles: np.ndarray) -> None:
        m = triangles.shape[0]
        # half-edge f*3 + c is the edge opposite corner c of face f
        half = np.stack(
            [triangles[:, [1, 2]], triangles[:, [2, 0]], triangles[:, [0, 1]]], axis=1
        ).reshape(-1, 2)
        keys = np.sort(half, axis=1)
        edges, inverse, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
        inverse = inverse.reshape(-1)
        overfull = np.flatnonzero(counts > 2)
        if overfull.size:
            e = edges[overfull[0]]
            raise NonManifoldEdgeError((int(e[0]), int(e[1])), int(counts[overfull[0]]))

        order = np.argsort(inverse, kind="stable")
        sorted_edges = inverse[order]
        slot = np.ones(order.size, dtype=np.int64)
        slot[np.r_[True, sorted_edges[1:] != sorted_edges[:-1]]] = 0
        edge_faces = np.full((edges.shape[0], 2), -1, dtype=np.int64)
        edge_opposite = np.full((edges.shape[0], 2), -1, dtype=np.int64)
        edge_faces[sorted_edges, slot] = order // 3
        edge_opposite[sorted_edges, slot] = triangles.reshape(-1)[order]

        boundary = np.unique(edges[counts == 1])
        interior = np.setdiff1d(np.arange(int(triangles.max()) + 1), boundary)
        object.__setattr__(self, "edges", _frozen(edges))
        object.__setattr__(self, "edge_faces", _frozen(edge_faces))
        object.__setattr__(self, "edge_opposite", _frozen(edge_opposite))
        object.__setattr__(self, "face_edges", _frozen(inverse.reshape(m, 3)))
        object.__setattr__(self, "boundary_vertices", _frozen(boundary))
        object.__setattr__(self, "interior_vertices", _frozen(interior))

    @property
    def n(self) -> int:
        return int(self.positions.shape[0])

    @property
    def m(self) -> int:
        return int(self.triangles.shape[0])

    @property
    def k(self) -> int:
        return int(self.edges.shape[0])

    @property
    def dim(self) -> int:
        return int(self.positions.shape[1])

    @property
    def boundary_edges(self) -> np.ndarray:
        return np.flatnonzero(self.edge_faces[:, 1] < 0)

    @property
    def is_closed(self) -> bool:
        return self.boundary_edges.size == 0

    @property
    def total_area(self) -> float:
        return float(self.face_areas.sum())

    @property
    def mean_edge_length(self) -> float:
        d = self.positions[self.edges[:, 0]] - self.positions[self.edges[:, 1]]
        return float(np.linalg.norm(d, axis=1).mean())

    @property
    def bbox_diagonal(self) -> float:
        p = self.positions
        return float(np.linalg.norm(p.max(axis=0) - p.min(axis=0)))

    def with_positions(self, positions: np.ndarray) -> "TriMesh":
        """Same connectivity, new vertex positions."""
        return TriMesh(positions, self.triangles, self.degenerate_tol)


@dataclass(frozen=True, eq=False)
class BarDomain:
    """Uniform 1D grid of n nodes at x = h·i, used for the bending bar."""

    n: int
    h: float

    def __post_init__(self):
        if self.n < 5:
            raise DomainError(f"bar needs at least 5 nodes, got {self.n}")
        if not self.h > 0:
            raise DomainError(f"bar spacing must be positive, got {self.h}")

    @property
    def dim(self) -> int:
        return 1

    @property
    def positions(self) -> np.ndarray:
        return self.h * np.arange(self.n, dtype=float).reshape(-1, 1)

    @property
    def interior(self) -> np.ndarray:
        return np.arange(1, self.n - 1)

    @property
    def bbox_diagonal(self) -> float:
        return self.h * (self.n - 1)


Domain = Union[GridDomain, TriMesh, BarDomain]


@dataclass(frozen=True, eq=False)
class ConstraintSet:
    """Fixed values at node or vertex indices."""

    indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        indices = np.array(self.indices, dtype=np.int64).reshape(-1)
        values = np.array(self.values, dtype=float).reshape(-1)
        if indices.size != values.size:
            raise ValueError(f"{indices.size} constraint indices but {values.size} values")
        unique, counts = np.unique(indices, return_counts=True)
        if np.any(counts > 1):
            raise ValueError(f"constraint index {int(unique[counts > 1][0])} appears more than once")
        object.__setattr__(self, "indices", _frozen(indices))
        object.__setattr__(self, "values", _frozen(values))

    @classmethod
    def from_pairs(cls, pairs: Iterable[Tuple[int, float]]) -> "ConstraintSet":
        pairs = list(pairs)
        return cls([p[0] for p in pairs], [p[1] for p in pairs])

    @classmethod
    def empty(cls) -> "ConstraintSet":
        return cls([], [])

    def __len__(self) -> int:
        return int(self.indices.size)

    def check_range(self, n: int) -> None:
        if self.indices.size and (self.indices.min() < 0 or self.indices.max() >= n):
            bad = self.indices[(self.indices < 0) | (self.indices >= n)][0]
            raise ValueError(f"constraint index {int(bad)} out of range for {n} unknowns")


# ---------------------------------------------------------------------------
# Mesh files


def _content_lines(text: str) -> List[Tuple[int, List[str]]]:
    """Non-empty lines with comments removed, as (line number, tokens)."""
    lines = []
    for number, raw in enumerate(text.splitlines(), start=1):
        tokens = raw.split("#", 1)[0].split()
        if tokens:
            lines.append((number, tokens))
    return lines


def _as_text(data: Union[bytes, str]) -> str:
    if isinstance(data, bytes):
        try:
            return data.decode("utf-8")
        except UnicodeDecodeError as e:
            raise MeshFormatError(f"mesh file is not ASCII/UTF-8 text: {e}")
    return data


def _planar_positions(coords: np.ndarray) -> np.ndarray:
    """Drop a z column that is identically zero."""
    if coords.shape[1] == 3 and not np.any(coords[:, 2]):
        return coords[:, :2].copy()
    return coords


def _parse_off(text: str) -> Tuple[np.ndarray, np.ndarray]:
    lines = _content_lines(text)
    if not lines or not lines[0][1][0].endswith("OFF"):
        raise MeshFormatError("missing OFF header", 1)
    number, tokens = lines[0]
    counts = tokens[1:]
    cursor = 1
    if not counts:
        if len(lines) < 2:
            raise MeshFormatError("missing vertex/face counts", number)
        number, counts = lines[1]
        cursor = 2
    try:
        nv, nf = int(counts[0]), int(counts[1])
    except (ValueError, IndexError):
        raise MeshFormatError("malformed vertex/face counts", number)
    if nv < 0 or nf < 0 or len(lines) < cursor + nv + nf:
        raise MeshFormatError(f"expected {nv} vertices and {nf} faces", number)

    coords = np.empty((nv, 3))
    for row in range(nv):
        number, tokens = lines[cursor + row]
        if len(tokens) < 3:
            raise MeshFormatError("vertex needs 3 coordinates", number)
        try:
            coords[row] = [float(t) for t in tokens[:3]]
        except ValueError:
            raise MeshFormatError("malformed vertex coordinates", number)
    cursor += nv

    faces = np.empty((nf, 3), dtype=np.int64)
    for row in range(nf):
        number, tokens = lines[cursor + row]
        try:
            size = int(tokens[0])
            indices = [int(t) for t in tokens[1:size + 1]]
        except ValueError:
            raise MeshFormatError("malformed face indices", number)
        if size != 3 or len(indices) != 3:
            raise MeshFormatError(f"face {row} is not a triangle", number)
        if min(indices) < 0 or max(indices) >= nv:
            raise MeshFormatError(f"face {row} index out of range", number)
        faces[row] = indices
    return _planar_positions(coords), faces


def _parse_obj(text: str) -> Tuple[np.ndarray, np.ndarray]:
    vertices: List[List[float]] = []
    faces: List[List[int]] = []
    widths = set()
    for number, tokens in _content_lines(text):
        kind = tokens[0]
        if kind == "v":
            try:
                values = [float(t) for t in tokens[1:4]]
            except ValueError:
                raise MeshFormatError("malformed vertex coordinates", number)
            if len(values) < 2:
                raise MeshFormatError("vertex needs at least 2 coordinates", number)
            widths.add(len(values))
            vertices.append(values + [0.0] * (3 - len(values)))
        elif kind == "f":
            if len(tokens) != 4:
                raise MeshFormatError(f"face {len(faces)} is not a triangle", number)
            indices = []
            for t in tokens[1:]:
                try:
                    index = int(t.split("/")[0])
                except ValueError:
                    raise MeshFormatError("malformed face indices", number)
                # OBJ indices are 1-based; negative ones count back from the last vertex
                index = index - 1 if index > 0 else len(vertices) + index
                if index < 0 or index >= len(vertices):
                    raise MeshFormatError(f"face {len(faces)} index out of range", number)
                indices.append(index)
            faces.append(indices)
    if not vertices or not faces:
        raise MeshFormatError("OBJ file has no vertices or no faces")
    coords = np.array(vertices)
    if widths == {2}:
        return coords[:, :2].copy(), np.array(faces, dtype=np.int64)
    return _planar_positions(coords), np.array(faces, dtype=np.int64)


def parse_mesh(data: Union[bytes, str], format: str = "off",
               degenerate_tol: float = DEFAULT_SETTINGS["tolerances"]["degenerate_area"]) -> TriMesh:
    """
    Parse an ASCII OFF or OBJ triangle mesh.

    Meshes whose z coordinates are all zero are returned as 2D meshes. A face
    is degenerate when its area is at most ``degenerate_tol`` times the
    squared bounding-box diagonal.

    Raises:
        MeshFormatError: malformed header, indices or non-triangle faces
        DegenerateFaceError: zero-area triangle
        NonManifoldEdgeError: edge shared by more than two triangles
    """
    text = _as_text(data)
    format = format.lower().lstrip(".")
    if format == "off":
        positions, faces = _parse_off(text)
    elif format == "obj":
        positions, faces = _parse_obj(text)
    else:
        raise ValueError(f"Unsupported mesh format: {format}")
    if faces.shape[0] == 0:
        raise MeshFormatError("mesh has no faces")
    return TriMesh(positions, faces, degenerate_tol)


def serialize_off(mesh: TriMesh) -> str:
    """OFF text with shortest round-trip coordinates (2D meshes get z = 0)."""
    lines = ["OFF", f"{mesh.n} {mesh.m} 0"]
    for p in mesh.positions:
        coords = list(p) + [0.0] * (3 - len(p))
        lines.append(" ".join(repr(float(c)) for c in coords))
    for t in mesh.triangles:
        lines.append(f"3 {t[0]} {t[1]} {t[2]}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Grid masks


def parse_pgm(data: bytes) -> np.ndarray:
    """Decode a P2 or P5 PGM image into a (height, width) array, top row first."""
    magic = data[:2]
    if magic not in (b"P2", b"P5"):
        raise MeshFormatError("not a PGM image (expected P2 or P5 header)")

    pos = 2
    tokens: List[bytes] = []
    while len(tokens) < 3:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos >= len(data):
            raise MeshFormatError("truncated PGM header")
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    try:
        width, height, maxval = (int(t) for t in tokens)
    except ValueError:
        raise MeshFormatError("malformed PGM header")
    if width <= 0 or height <= 0 or not 0 < maxval < 65536:
        raise MeshFormatError("invalid PGM dimensions or maxval")

    count = width * height
    if magic == b"P5":
        pos += 1  # single whitespace byte before the raster
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        if len(data) - pos < count * dtype.itemsize:
            raise MeshFormatError("truncated PGM raster")
        pixels = np.frombuffer(data, dtype=dtype, count=count, offset=pos).astype(np.int64)
    else:
        try:
            values = [int(v) for v in data[pos:].split()]
        except ValueError:
            raise MeshFormatError("malformed PGM pixel value")
        if len(values) < count:
            raise MeshFormatError("truncated PGM raster")
        pixels = np.array(values[:count], dtype=np.int64)
    return pixels.reshape(height, width)


def encode_pgm(pixels: np.ndarray) -> bytes:
    """Encode an 8-bit (height, width) array, top row first, as binary P5."""
    pixels = np.asarray(pixels, dtype=np.uint8)
    header = f"P5\n{pixels.shape[1]} {pixels.shape[0]}\n255\n".encode("ascii")
    return header + pixels.tobytes()


def grid_from_mask(image: bytes, h: float, threshold: int = 128,
                   origin: Tuple[float, float] = (0.0, 0.0)) -> GridDomain:
    """
    Build a grid domain from a PGM mask; pixels ≥ threshold are inside.

    The image's top row becomes the grid's largest y.
    """
    pixels = parse_pgm(image)
    mask = (pixels >= threshold)[::-1]
    domain = GridDomain(mask.shape[1], mask.shape[0], h, mask, origin)
    if domain.n_interior == 0:
        raise DomainError("grid mask has no interior nodes")
    logger.debug("grid %dx%d: %d masked, %d interior", domain.nx, domain.ny,
                 domain.n, domain.n_interior)
    return domain


def rectangle_grid(nx: int, ny: int, h: float,
                   origin: Tuple[float, float] = (0.0, 0.0)) -> GridDomain:
    return GridDomain(nx, ny, h, np.ones((ny, nx), dtype=bool), origin)


def grid_from_predicate(nx: int, ny: int, h: float, origin: Tuple[float, float],
                        inside: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> GridDomain:
    """Mask the nodes where ``inside(x, y)`` holds."""
    x = origin[0] + h * np.arange(nx)
    y = origin[1] + h * np.arange(ny)
    xx, yy = np.meshgrid(x, y)
    return GridDomain(nx, ny, h, np.asarray(inside(xx, yy), dtype=bool), origin)


def annulus_grid(r0: float, r1: float, n: int) -> GridDomain:
    """n×n grid over [-r1, r1]² masked to r0 ≤ |x| ≤ r1."""
    if not 0 < r0 < r1:
        raise DomainError(f"annulus needs 0 < r0 < r1, got r0={r0}, r1={r1}")
    h = 2.0 * r1 / (n - 1)
    slack = 1e-12 * r1

    def inside(x, y):
        r = np.hypot(x, y)
        return (r >= r0 - slack) & (r <= r1 + slack)

    return grid_from_predicate(n, n, h, (-r1, -r1), inside)


# ---------------------------------------------------------------------------
# Mesh generators


def _ring_strip(inner: np.ndarray, outer: np.ndarray) -> np.ndarray:
    """Counter-clockwise triangles between two closed rings of equal length."""
    inner_next = np.roll(inner, -1)
    outer_next = np.roll(outer, -1)
    return np.concatenate([
        np.column_stack([inner, outer, outer_next]),
        np.column_stack([inner, outer_next, inner_next]),
    ])


def annulus_mesh(r0: float, r1: float, nr: int, ntheta: int) -> TriMesh:
    """Structured annulus with nr+1 rings of ntheta vertices each."""
    if not 0 < r0 < r1:
        raise DomainError(f"annulus needs 0 < r0 < r1, got r0={r0}, r1={r1}")
    if nr < 1 or ntheta < 3:
        raise DomainError(f"annulus needs nr >= 1 and ntheta >= 3, got {nr}, {ntheta}")
    radii = r0 + (r1 - r0) * np.arange(nr + 1) / nr
    theta = 2.0 * np.pi * np.arange(ntheta) / ntheta
    positions = np.column_stack([
        np.outer(radii, np.cos(theta)).reshape(-1),
        np.outer(radii, np.sin(theta)).reshape(-1),
    ])
    rings = np.arange((nr + 1) * ntheta).reshape(nr + 1, ntheta)
    triangles = np.concatenate([_ring_strip(rings[l], rings[l + 1]) for l in range(nr)])
    return TriMesh(positions, triangles)


def disk_mesh(radius: float, nr: int, ntheta: int) -> TriMesh:
    """Disk with a center vertex and nr rings of ntheta vertices."""
    if radius <= 0 or nr < 1 or ntheta < 3:
        raise DomainError("disk needs radius > 0, nr >= 1 and ntheta >= 3")
    radii = radius * np.arange(1, nr + 1) / nr
    theta = 2.0 * np.pi * np.arange(ntheta) / ntheta
    ring_points = np.column_stack([
        np.outer(radii, np.cos(theta)).reshape(-1),
        np.outer(radii, np.sin(theta)).reshape(-1),
    ])
    positions = np.vstack([[0.0, 0.0], ring_points])
    rings = 1 + np.arange(nr * ntheta).reshape(nr, ntheta)
    fan = np.column_stack([np.zeros(ntheta, dtype=np.int64), rings[0], np.roll(rings[0], -1)])
    strips = [_ring_strip(rings[l], rings[l + 1]) for l in range(nr - 1)]
    return TriMesh(positions, np.concatenate([fan] + strips))


def square_mesh(n: int) -> TriMesh:
    """Unit square with (n+1)² vertices numbered like a grid of spacing 1/n."""
    if n < 1:
        raise DomainError("square mesh needs n >= 1")
    t = np.arange(n + 1) / n
    xx, yy = np.meshgrid(t, t)
    positions = np.column_stack([xx.reshape(-1), yy.reshape(-1)])
    ids = np.arange((n + 1) ** 2).reshape(n + 1, n + 1)
    a = ids[:-1, :-1].reshape(-1)
    b = ids[:-1, 1:].reshape(-1)
    c = ids[1:, 1:].reshape(-1)
    d = ids[1:, :-1].reshape(-1)
    triangles = np.concatenate([np.column_stack([a, b, c]), np.column_stack([a, c, d])])
    return TriMesh(positions, triangles)


def icosphere(subdivisions: int = 2, radius: float = 1.0) -> TriMesh:
    """Closed sphere from a subdivided icosahedron (20·4^s faces)."""
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    vertices = [
        [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
        [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
        [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
    ]
    faces = [
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ]
    points = [np.array(v, dtype=float) / np.linalg.norm(v) for v in vertices]
    for _ in range(subdivisions):
        midpoints = {}

        def midpoint(a: int, b: int) -> int:
            key = (min(a, b), max(a, b))
            if key not in midpoints:
                p = points[a] + points[b]
                points.append(p / np.linalg.norm(p))
                midpoints[key] = len(points) - 1
            return midpoints[key]

        refined = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            refined += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
        faces = refined
    return TriMesh(radius * np.array(points), np.array(faces))


# ---------------------------------------------------------------------------
# Point constraints


def snap_points(domain: Domain, points: Sequence[Sequence[float]],
                values: Sequence[float]) -> ConstraintSet:
    """
    Snap each point to its nearest node or vertex.

    Ties go to the lowest index. Points farther than 2h (grids) or twice the
    mean edge length (meshes) from every node are rejected, as are two points
    landing on the same index.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    values = np.asarray(values, dtype=float).reshape(-1)
    if points.shape[0] != values.size:
        raise ValueError(f"{points.shape[0]} points but {values.size} values")
    if points.shape[1] != domain.dim:
        raise SnapError(f"points have {points.shape[1]} coordinates, domain has {domain.dim}")
    limit = 2.0 * (domain.mean_edge_length if isinstance(domain, TriMesh) else domain.h)

    positions = domain.positions
    tree = cKDTree(positions)
    nearest_dist, _ = tree.query(points)
    indices = np.empty(points.shape[0], dtype=np.int64)
    for row, (p, d) in enumerate(zip(points, nearest_dist)):
        if d > limit:
            raise SnapError(f"point {row} {tuple(p)} is {d:.3g} from the nearest node (limit {limit:.3g})")
        candidates = np.array(sorted(tree.query_ball_point(p, d * (1 + 1e-9) + 1e-300)))
        dist = np.linalg.norm(positions[candidates] - p, axis=1)
        indices[row] = candidates[dist <= dist.min() * (1 + 1e-12)].min()

    unique, counts = np.unique(indices, return_counts=True)
    if np.any(counts > 1):
        clash = unique[counts > 1][0]
        rows = np.flatnonzero(indices == clash)
        raise SnapError(f"points {rows.tolist()} snap to the same node {int(clash)}")
    return ConstraintSet(indices, values)
