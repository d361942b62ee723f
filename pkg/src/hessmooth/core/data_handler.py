"""
Data handler for reading domains and point data and writing result files.
"""

import csv
import io
import os
from pathlib import Path
from typing import List, Literal, Optional, Sequence, Tuple

import numpy as np

from ..domain import (
    Domain,
    GridDomain,
    TriMesh,
    encode_pgm,
    grid_from_mask,
    parse_mesh,
    serialize_off,
    snap_points,
)
from ..errors import MeshFormatError
from ..settings import DEFAULT_SETTINGS

FileFormat = Literal['off', 'obj', 'pgm', 'csv']


def format_float(value: float) -> str:
    """Shortest decimal that round-trips to the same double."""
    return repr(float(value))


class DataHandler:
    """Handles loading of meshes, grid masks and CSV inputs, and saving of result files."""

    def __init__(self, heatmap_range: Optional[Sequence[float]] = None,
                 degenerate_tol: float = DEFAULT_SETTINGS["tolerances"]["degenerate_area"]):
        """
        Initialize data handler.

        Args:
            heatmap_range: Fixed (lo, hi) color range for heatmaps. If None,
                each file is normalized by its own min/max.
            degenerate_tol: Relative area below which a loaded mesh face is
                rejected as degenerate
        """
        self.heatmap_range = tuple(heatmap_range) if heatmap_range is not None else None
        self.degenerate_tol = degenerate_tol

    def detect_format(self, filepath: str) -> FileFormat:
        """
        Detect file format based on extension.

        Raises:
            ValueError: If file extension is not recognized
        """
        ext = Path(filepath).suffix.lower()
        if ext in ('.off', '.obj', '.pgm', '.csv'):
            return ext[1:]
        raise ValueError(f"Unsupported file format: {ext or filepath}")

    def _read_bytes(self, filepath: str) -> bytes:
        if not os.path.exists(filepath):
            raise FileNotFoundError(f"File not found: {filepath}")
        with open(filepath, 'rb') as f:
            return f.read()

    def load_domain(self, mesh: Optional[str] = None, grid: Optional[str] = None,
                    h: Optional[float] = None, threshold: int = 128) -> Domain:
        """
        Load a triangle mesh (OFF/OBJ) or a PGM grid mask.

        Args:
            mesh: Path to the mesh file
            grid: Path to the PGM mask
            h: Grid spacing, required with ``grid``
            threshold: Pixels at or above this value are inside the grid domain
        """
        if (mesh is None) == (grid is None):
            raise ValueError("exactly one of a mesh or a grid is required")
        if mesh is not None:
            format_type = self.detect_format(mesh)
            if format_type not in ('off', 'obj'):
                raise ValueError(f"mesh must be .off or .obj, got {mesh}")
            return parse_mesh(self._read_bytes(mesh), format_type, self.degenerate_tol)
        if h is None:
            raise ValueError("grid spacing --h is required with a grid")
        return grid_from_mask(self._read_bytes(grid), h, threshold)

    def _read_csv(self, filepath: str, headers: Sequence[Sequence[str]]) -> Tuple[List[str], np.ndarray]:
        """Rows of floats under one of the accepted headers."""
        text = self._read_bytes(filepath).decode('utf-8-sig')
        rows = [row for row in csv.reader(io.StringIO(text)) if any(cell.strip() for cell in row)]
        if not rows:
            raise MeshFormatError(f"{filepath}: empty CSV file", 1)
        header = [cell.strip().lower() for cell in rows[0]]
        if header not in [list(h) for h in headers]:
            expected = " or ".join(",".join(h) for h in headers)
            raise MeshFormatError(f"{filepath}: expected header {expected}, got {','.join(header)}", 1)
        values = np.empty((len(rows) - 1, len(header)))
        for number, row in enumerate(rows[1:], start=2):
            if len(row) != len(header):
                raise MeshFormatError(f"{filepath}: expected {len(header)} columns", number)
            try:
                values[number - 2] = [float(cell) for cell in row]
            except ValueError:
                raise MeshFormatError(f"{filepath}: malformed number", number)
        return header, values

    def load_scattered_csv(self, filepath: str) -> Tuple[np.ndarray, np.ndarray]:
        """Load ``x,y[,z],value`` rows as (points, values)."""
        _, table = self._read_csv(filepath, [('x', 'y', 'value'), ('x', 'y', 'z', 'value')])
        return table[:, :-1], table[:, -1]

    def load_points_csv(self, filepath: str) -> np.ndarray:
        """Load ``x,y[,z]`` rows."""
        _, table = self._read_csv(filepath, [('x', 'y'), ('x', 'y', 'z')])
        return table

    def load_handles(self, filepath: str, domain: Domain) -> np.ndarray:
        """Handle indices from an ``index`` column or from positions snapped to the domain."""
        header, table = self._read_csv(filepath, [('index',), ('x', 'y'), ('x', 'y', 'z')])
        if header == ['index']:
            indices = table[:, 0]
            if np.any(indices != np.round(indices)):
                raise MeshFormatError(f"{filepath}: handle indices must be integers")
            return indices.astype(np.int64)
        return snap_points(domain, table, np.zeros(len(table))).indices

    def load_field_csv(self, filepath: str, n: int) -> np.ndarray:
        """Load an ``index,value`` field covering every node exactly once."""
        _, table = self._read_csv(filepath, [('index', 'value')])
        indices = table[:, 0].astype(np.int64)
        if indices.size != n or np.any(np.sort(indices) != np.arange(n)):
            raise MeshFormatError(f"{filepath}: field must list each of the {n} indices once")
        values = np.empty(n)
        values[indices] = table[:, 1]
        return values

    def save_table(self, filepath: str, header: Sequence[str], rows) -> None:
        """Write CSV rows; floats use shortest round-trip form."""
        with open(filepath, 'w', encoding='utf-8', newline='') as f:
            writer = csv.writer(f, lineterminator='\n')
            writer.writerow(header)
            for row in rows:
                writer.writerow([
                    '' if cell is None else
                    str(cell) if isinstance(cell, (int, np.integer)) else format_float(cell)
                    for cell in row
                ])

    def _gray_levels(self, values: np.ndarray) -> np.ndarray:
        lo, hi = self.heatmap_range if self.heatmap_range else (values.min(), values.max())
        if hi <= lo:
            return np.zeros(values.shape, dtype=np.uint8)
        scaled = np.clip((values - lo) / (hi - lo), 0.0, 1.0)
        return np.round(255.0 * scaled).astype(np.uint8)

    def heatmap(self, grid: GridDomain, values: np.ndarray) -> bytes:
        """P5 image of a grid field; unmasked pixels are black and the top row is the largest y."""
        image = np.zeros((grid.ny, grid.nx), dtype=np.uint8)
        image[grid.grid_ij[:, 1], grid.grid_ij[:, 0]] = self._gray_levels(values)
        return encode_pgm(image[::-1])

    def ply(self, mesh: TriMesh, values: np.ndarray) -> str:
        """ASCII PLY with the field as grayscale vertex color."""
        gray = self._gray_levels(values)
        lines = [
            "ply", "format ascii 1.0",
            f"element vertex {mesh.n}",
            "property float x", "property float y", "property float z",
            "property uchar red", "property uchar green", "property uchar blue",
            f"element face {mesh.m}",
            "property list uchar int vertex_indices",
            "end_header",
        ]
        for p, g in zip(mesh.positions, gray):
            coords = list(p) + [0.0] * (3 - len(p))
            lines.append(" ".join(format_float(c) for c in coords) + f" {g} {g} {g}")
        for t in mesh.triangles:
            lines.append(f"3 {t[0]} {t[1]} {t[2]}")
        return "\n".join(lines) + "\n"

    def save_field(self, out_dir: str, stem: str, domain: Domain, values: np.ndarray) -> List[Path]:
        """
        Write ``<stem>.csv`` plus a ``.pgm`` heatmap (grids) or ``.ply`` (meshes).

        Returns:
            Paths written
        """
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        values = np.asarray(values, dtype=float)
        written = [out / f"{stem}.csv"]
        self.save_table(written[0], ['index', 'value'], enumerate(values))
        if isinstance(domain, GridDomain):
            path = out / f"{stem}.pgm"
            path.write_bytes(self.heatmap(domain, values))
            written.append(path)
        elif isinstance(domain, TriMesh):
            path = out / f"{stem}.ply"
            path.write_text(self.ply(domain, values), encoding='utf-8')
            written.append(path)
        return written

    def save_spectrum(self, filepath: str, eigenvalues: np.ndarray) -> None:
        self.save_table(filepath, ['index', 'eigenvalue'], enumerate(eigenvalues))

    def save_mesh_off(self, filepath: str, mesh: TriMesh) -> None:
        with open(filepath, 'w', encoding='utf-8', newline='\n') as f:
            f.write(serialize_off(mesh))
