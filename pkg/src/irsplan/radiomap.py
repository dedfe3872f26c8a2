"""Spatial grid of averaged beamforming-optimal SNR, with lossless persistence.

Cells tile the workspace exactly; each cell averages the optimal SNR of
``n_draws`` channel realizations drawn at its center, in the linear domain.
Per-cell seeds are ``seed XOR (iy * nx + ix)`` so parallel generation is
deterministic regardless of scheduling.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .channel import optimal_snr_samples
from .errors import FileFormatError, UnsupportedVersionError
from .scenario import LinkClass, Scenario, los_class_batch

log = logging.getLogger(__name__)

_FORMAT_TAG = "irsplan-radiomap"
_FORMAT_VERSION = 1
_COLUMNS = "ix,iy,x,y,ap_class,irs_class,avg_opt_snr_linear,n_draws"


@dataclass(frozen=True)
class RadioMap:
    """Immutable grid of averaged optimal SNR values plus LOS labels."""

    nx: int
    ny: int
    cell_size: float
    origin: tuple                 # (xmin, ymin)
    avg_snr: np.ndarray           # (ny, nx) linear SNR
    n_draws: np.ndarray           # (ny, nx) int
    ap_los: np.ndarray            # (ny, nx) bool
    irs_los: np.ndarray           # (ny, nx) bool
    scenario_hash: str
    seed: int

    def __post_init__(self):
        if self.nx < 1 or self.ny < 1:
            raise ValueError("grid must have at least one cell per axis")
        for name in ("avg_snr", "n_draws", "ap_los", "irs_los"):
            arr = getattr(self, name)
            if arr.shape != (self.ny, self.nx):
                raise ValueError(f"{name} must have shape (ny, nx)")
        if np.any(self.avg_snr < 0):
            raise ValueError("averaged SNR must be nonnegative")
        if np.any(self.n_draws < 1):
            raise ValueError("every cell needs at least one draw")

    def cell_centers(self) -> tuple:
        """(xs, ys) 1-D center coordinates along each axis."""
        x0, y0 = self.origin
        xs = x0 + (np.arange(self.nx) + 0.5) * self.cell_size
        ys = y0 + (np.arange(self.ny) + 0.5) * self.cell_size
        return xs, ys

    def link_class(self, ix: int, iy: int) -> LinkClass:
        return LinkClass(bool(self.ap_los[iy, ix]), bool(self.irs_los[iy, ix]))

    def lookup(self, q) -> float:
        """Bilinearly interpolated SNR at an arbitrary position (diagnostic).

        Positions outside the grid clamp to the nearest cell with a logged
        warning; the fitted model, not the raw map, drives the optimizer.
        """
        x0, y0 = self.origin
        fx = (q[0] - x0) / self.cell_size - 0.5
        fy = (q[1] - y0) / self.cell_size - 0.5
        if not (-0.5 <= fx <= self.nx - 0.5 and -0.5 <= fy <= self.ny - 0.5):
            log.warning("radio-map lookup at %s is outside the grid; clamping", q)
        fx = min(max(fx, 0.0), self.nx - 1.0)
        fy = min(max(fy, 0.0), self.ny - 1.0)
        ix, iy = int(fx), int(fy)
        ix1, iy1 = min(ix + 1, self.nx - 1), min(iy + 1, self.ny - 1)
        tx, ty = fx - ix, fy - iy
        z = self.avg_snr
        return float(
            (1 - ty) * ((1 - tx) * z[iy, ix] + tx * z[iy, ix1])
            + ty * ((1 - tx) * z[iy1, ix] + tx * z[iy1, ix1])
        )

    def equals(self, other: "RadioMap") -> bool:
        return (
            (self.nx, self.ny, self.cell_size, self.origin, self.scenario_hash, self.seed)
            == (other.nx, other.ny, other.cell_size, other.origin, other.scenario_hash,
                other.seed)
            and np.array_equal(self.avg_snr, other.avg_snr)
            and np.array_equal(self.n_draws, other.n_draws)
            and np.array_equal(self.ap_los, other.ap_los)
            and np.array_equal(self.irs_los, other.irs_los)
        )


def build_map(scenario: Scenario, nx: int = 100, ny: int = 60,
              draws_per_cell: int = 200, seed: int = 0, workers: int = 1) -> RadioMap:
    """Generate the radio map on an nx-by-ny grid of cell centers.

    The (square) cell size must tile the workspace exactly. Each cell is
    classified geometrically, then averages ``draws_per_cell`` closed-form
    optimal SNR samples from its own seeded stream.
    """
    if nx < 2 or ny < 2:
        raise ValueError("need at least a 2x2 grid")
    if draws_per_cell < 1:
        raise ValueError("need at least one draw per cell")
    xmin, xmax, ymin, ymax = scenario.workspace
    cell_x = (xmax - xmin) / nx
    cell_y = (ymax - ymin) / ny
    if abs(cell_x - cell_y) > 1e-9:
        raise ValueError(
            f"grid {nx}x{ny} does not tile the workspace with square cells "
            f"({cell_x:.6g} vs {cell_y:.6g})"
        )

    xs = xmin + (np.arange(nx) + 0.5) * cell_x
    ys = ymin + (np.arange(ny) + 0.5) * cell_x
    grid = np.stack(np.meshgrid(xs, ys), axis=-1).reshape(-1, 2)   # row-major over (iy, ix)
    ap_los, irs_los = los_class_batch(grid, scenario)
    ap_los = ap_los.reshape(ny, nx)
    irs_los = irs_los.reshape(ny, nx)

    avg = np.zeros((ny, nx))

    def fill_row(iy: int):
        for ix in range(nx):
            link = LinkClass(bool(ap_los[iy, ix]), bool(irs_los[iy, ix]))
            cell_seed = seed ^ (iy * nx + ix)
            samples = optimal_snr_samples(
                np.array([xs[ix], ys[iy]]), scenario, link, draws_per_cell, cell_seed
            )
            avg[iy, ix] = samples.mean()

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(fill_row, range(ny)))
    else:
        for iy in range(ny):
            fill_row(iy)

    return RadioMap(
        nx=nx, ny=ny, cell_size=cell_x, origin=(xmin, ymin),
        avg_snr=avg, n_draws=np.full((ny, nx), draws_per_cell, dtype=np.int64),
        ap_los=ap_los, irs_los=irs_los,
        scenario_hash=scenario.channel_fingerprint(), seed=seed,
    )


# ---------------------------------------------------------------------------
# Persistence. Versioned header, one CSV row per cell, floats written with
# Python's shortest round-trip repr so that load(save(m)) == m exactly.


def save_map(radio_map: RadioMap, path) -> None:
    lines = [
        f"# {_FORMAT_TAG} v{_FORMAT_VERSION}",
        f"# nx={radio_map.nx} ny={radio_map.ny} cell_size={radio_map.cell_size!r}"
        f" xmin={radio_map.origin[0]!r} ymin={radio_map.origin[1]!r}",
        f"# scenario={radio_map.scenario_hash} seed={radio_map.seed}",
        _COLUMNS,
    ]
    xs, ys = radio_map.cell_centers()
    for iy in range(radio_map.ny):
        for ix in range(radio_map.nx):
            lines.append(
                f"{ix},{iy},{xs[ix]!r},{ys[iy]!r},"
                f"{'LOS' if radio_map.ap_los[iy, ix] else 'NLOS'},"
                f"{'LOS' if radio_map.irs_los[iy, ix] else 'NLOS'},"
                f"{float(radio_map.avg_snr[iy, ix])!r},{int(radio_map.n_draws[iy, ix])}"
            )
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def _header_fields(line: str, lineno: int, path) -> dict:
    out = {}
    for token in line.lstrip("# ").split():
        if "=" not in token:
            raise FileFormatError("malformed header token", path=path, line=lineno,
                                  field=token)
        key, value = token.split("=", 1)
        out[key] = value
    return out


def load_map(path) -> RadioMap:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise FileFormatError("empty file", path=path, line=1)

    head = lines[0].lstrip("# ").split()
    if len(head) != 2 or head[0] != _FORMAT_TAG:
        raise FileFormatError(f"not a {_FORMAT_TAG} file", path=path, line=1)
    if head[1] != f"v{_FORMAT_VERSION}":
        raise UnsupportedVersionError(
            f"unsupported version {head[1]} (expected v{_FORMAT_VERSION})",
            path=path, line=1,
        )
    if len(lines) < 4:
        raise FileFormatError("truncated header", path=path, line=len(lines))

    try:
        geo = _header_fields(lines[1], 2, path)
        meta = _header_fields(lines[2], 3, path)
        nx, ny = int(geo["nx"]), int(geo["ny"])
        cell = float(geo["cell_size"])
        origin = (float(geo["xmin"]), float(geo["ymin"]))
        scenario_hash = meta["scenario"]
        seed = int(meta["seed"])
    except (KeyError, ValueError) as exc:
        raise FileFormatError(f"bad header: {exc}", path=path, line=2) from None

    if lines[3] != _COLUMNS:
        raise FileFormatError("unexpected column header", path=path, line=4,
                              field=lines[3])

    expected = nx * ny
    rows = lines[4:]
    if len(rows) != expected:
        raise FileFormatError(
            f"expected {expected} cell rows, found {len(rows)} (truncated or padded)",
            path=path, line=len(lines),
        )

    avg = np.zeros((ny, nx))
    draws = np.zeros((ny, nx), dtype=np.int64)
    ap_los = np.zeros((ny, nx), dtype=bool)
    irs_los = np.zeros((ny, nx), dtype=bool)
    seen = np.zeros((ny, nx), dtype=bool)
    for offset, row in enumerate(rows):
        lineno = offset + 5
        parts = row.split(",")
        if len(parts) != 8:
            raise FileFormatError("expected 8 fields", path=path, line=lineno)
        try:
            ix, iy = int(parts[0]), int(parts[1])
        except ValueError:
            raise FileFormatError("bad cell index", path=path, line=lineno,
                                  field=parts[0]) from None
        if not (0 <= ix < nx and 0 <= iy < ny):
            raise FileFormatError("cell index out of range", path=path, line=lineno,
                                  field=f"{ix},{iy}")
        for label, pos in (("ap_class", 4), ("irs_class", 5)):
            if parts[pos] not in ("LOS", "NLOS"):
                raise FileFormatError("class must be LOS or NLOS", path=path,
                                      line=lineno, field=label)
        try:
            avg[iy, ix] = float(parts[6])
            draws[iy, ix] = int(parts[7])
        except ValueError as exc:
            raise FileFormatError(f"bad numeric field: {exc}", path=path,
                                  line=lineno, field=parts[6]) from None
        ap_los[iy, ix] = parts[4] == "LOS"
        irs_los[iy, ix] = parts[5] == "LOS"
        seen[iy, ix] = True
    if not seen.all():
        raise FileFormatError("duplicate and missing cell rows", path=path,
                              line=len(lines))

    return RadioMap(nx=nx, ny=ny, cell_size=cell, origin=origin, avg_snr=avg,
                    n_draws=draws, ap_los=ap_los, irs_los=irs_los,
                    scenario_hash=scenario_hash, seed=seed)
