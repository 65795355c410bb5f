"""Plot tables, BGRID rasters and plot-to-pixel co-registration.

BGRID layout
------------
Five ASCII header lines, each terminated by ``\\n``::

    BGRID1
    <ncols> <nrows> <nbands>
    <x0> <y0> <pixel_size>
    <nodata>
    <band name> <band name> ...

followed by ``nbands * nrows * ncols`` little-endian float32 values,
band-sequential, row-major from the top-left pixel. ``x0, y0`` is the
top-left corner of the top-left pixel.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

MAGIC = "BGRID1"
REQUIRED_COLUMNS = ("plot_id", "x", "y", "forest", "agb_t1", "agb_t2")


class FormatError(ValueError):
    """Malformed BGRID header or payload."""


class PayloadLengthError(FormatError):
    """Payload byte count disagrees with the declared grid size."""


class GeometryError(ValueError):
    """Rasters that should share a grid do not."""


class SchemaError(ValueError):
    """Plot table is missing a required column."""


class RowError(ValueError):
    """A plot table row could not be parsed."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


@dataclass(frozen=True)
class PlotRecord:
    plot_id: str
    x: float
    y: float
    forest: int
    agb_t1: float
    agb_t2: float
    delta_agb: float


def parse_plot_table(text: str) -> list[PlotRecord]:
    """Parse a comma-delimited plot table.

    Extra columns are ignored. ``delta_agb`` is computed as
    ``agb_t2 - agb_t1``; row order is preserved.
    """
    reader = csv.reader(io.StringIO(text))
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise SchemaError("empty plot table: header row required") from None
    for col in REQUIRED_COLUMNS:
        if col not in header:
            raise SchemaError(f"missing required column {col!r}")
    pos = {name: header.index(name) for name in REQUIRED_COLUMNS}

    records: list[PlotRecord] = []
    seen: set[str] = set()
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) < len(header):
            raise RowError(lineno, f"expected {len(header)} fields, got {len(row)}")
        plot_id = row[pos["plot_id"]].strip()
        if plot_id in seen:
            raise RowError(lineno, f"duplicate plot_id {plot_id!r}")
        seen.add(plot_id)

        vals = {}
        for col in ("x", "y", "agb_t1", "agb_t2"):
            raw = row[pos[col]].strip()
            try:
                vals[col] = float(raw)
            except ValueError:
                raise RowError(lineno, f"non-numeric {col} value {raw!r}") from None
            if not math.isfinite(vals[col]):
                raise RowError(lineno, f"non-finite {col} value {raw!r}")
        for col in ("agb_t1", "agb_t2"):
            if vals[col] < 0:
                raise RowError(lineno, f"negative {col} ({vals[col]})")
        forest_raw = row[pos["forest"]].strip()
        if forest_raw not in ("0", "1"):
            raise RowError(lineno, f"forest indicator must be 0 or 1, got {forest_raw!r}")

        records.append(
            PlotRecord(
                plot_id=plot_id,
                x=vals["x"],
                y=vals["y"],
                forest=int(forest_raw),
                agb_t1=vals["agb_t1"],
                agb_t2=vals["agb_t2"],
                delta_agb=vals["agb_t2"] - vals["agb_t1"],
            )
        )
    return records


def format_plot_table(plots: Iterable[PlotRecord]) -> str:
    """Inverse of :func:`parse_plot_table` (``delta_agb`` is not written)."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(REQUIRED_COLUMNS)
    for p in plots:
        writer.writerow([p.plot_id, repr(p.x), repr(p.y), p.forest, repr(p.agb_t1), repr(p.agb_t2)])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# Rasters
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GridGeometry:
    ncols: int
    nrows: int
    x0: float
    y0: float
    pixel_size: float

    @property
    def pixel_area_ha(self) -> float:
        return self.pixel_size * self.pixel_size / 10_000.0


@dataclass
class RasterStack:
    """Named float32 layers on a shared square-pixel grid.

    ``bands`` maps band name to a ``(nrows, ncols)`` float32 array; insertion
    order is the band order written to disk.
    """

    ncols: int
    nrows: int
    x0: float
    y0: float
    pixel_size: float
    nodata: float
    bands: dict[str, np.ndarray]
    epoch_label: str = ""
    # Header tokens as read from disk, reused on write when the numeric
    # value is unchanged so that read -> write is byte-identical.
    _tokens: dict[str, str] = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self) -> None:
        if not (isinstance(self.pixel_size, (int, float)) and self.pixel_size > 0):
            raise FormatError(f"pixel_size must be > 0, got {self.pixel_size}")
        for name in ("x0", "y0", "pixel_size"):
            if not math.isfinite(getattr(self, name)):
                raise FormatError(f"non-finite header geometry {name}")
        if self.ncols < 0 or self.nrows < 0:
            raise FormatError("negative grid dimensions")
        for name, arr in self.bands.items():
            if not name or any(c.isspace() for c in name):
                raise FormatError(f"invalid band name {name!r}")
            a = np.asarray(arr, dtype="<f4")
            if a.shape != (self.nrows, self.ncols):
                raise FormatError(
                    f"band {name!r} has shape {a.shape}, expected {(self.nrows, self.ncols)}"
                )
            self.bands[name] = a

    @property
    def geometry(self) -> GridGeometry:
        return GridGeometry(self.ncols, self.nrows, self.x0, self.y0, self.pixel_size)

    @property
    def band_names(self) -> list[str]:
        return list(self.bands)

    def nodata_mask(self, band: str) -> np.ndarray:
        """Boolean grid, True where ``band`` holds the nodata sentinel."""
        a = self.bands[band]
        if math.isnan(self.nodata):
            return np.isnan(a)
        return a == np.float32(self.nodata)

    def any_nodata(self) -> np.ndarray:
        out = np.zeros((self.nrows, self.ncols), dtype=bool)
        for name in self.bands:
            out |= self.nodata_mask(name)
        return out


ForestMask = RasterStack  # single band named "mask" with values in {0, 1, nodata}


def _parse_number(token: str, what: str) -> float:
    try:
        return float(token)
    except ValueError:
        raise FormatError(f"cannot parse {what} from {token!r}") from None


def _format_number(value: float, token: str | None) -> str:
    if token is not None:
        try:
            same = float(token) == value or (math.isnan(value) and math.isnan(float(token)))
        except ValueError:
            same = False
        if same:
            return token
    if float(value).is_integer():
        return str(int(value))
    return repr(float(value))


def read_raster(data: bytes, epoch_label: str = "") -> RasterStack:
    """Decode a BGRID byte string."""
    lines: list[bytes] = []
    offset = 0
    for _ in range(5):
        nl = data.find(b"\n", offset)
        if nl < 0:
            if not lines or lines[0] != MAGIC.encode():
                raise FormatError("bad magic: not a BGRID1 file")
            raise FormatError("truncated header")
        lines.append(data[offset:nl])
        offset = nl + 1
        if len(lines) == 1 and lines[0] != MAGIC.encode():
            raise FormatError("bad magic: not a BGRID1 file")
    try:
        text = [ln.decode("ascii") for ln in lines]
    except UnicodeDecodeError:
        raise FormatError("non-ASCII header") from None

    dims = text[1].split(" ")
    if len(dims) != 3:
        raise FormatError("line 2 must hold 'ncols nrows nbands'")
    try:
        ncols, nrows, nbands = (int(t) for t in dims)
    except ValueError:
        raise FormatError(f"bad dimensions {text[1]!r}") from None
    if min(ncols, nrows, nbands) < 0:
        raise FormatError("negative dimensions")

    geo = text[2].split(" ")
    if len(geo) != 3:
        raise FormatError("line 3 must hold 'x0 y0 pixel_size'")
    x0, y0, px = (_parse_number(t, "geometry") for t in geo)
    if not all(math.isfinite(v) for v in (x0, y0, px)):
        raise FormatError("NaN or infinite value in header geometry")
    nodata = _parse_number(text[3], "nodata")

    names = text[4].split(" ") if text[4] else []
    if len(names) != nbands:
        raise FormatError(f"declared {nbands} bands but {len(names)} names")
    if len(set(names)) != len(names):
        raise FormatError("duplicate band names")

    expected = nbands * nrows * ncols * 4
    payload = data[offset:]
    if len(payload) != expected:
        raise PayloadLengthError(
            f"payload holds {len(payload)} bytes, expected {expected} "
            f"({nbands}x{nrows}x{ncols} float32)"
        )
    values = np.frombuffer(payload, dtype="<f4").reshape(nbands, nrows, ncols)
    bands = {name: values[i].copy() for i, name in enumerate(names)}
    tokens = {"x0": geo[0], "y0": geo[1], "pixel_size": geo[2], "nodata": text[3]}
    return RasterStack(ncols, nrows, x0, y0, px, nodata, bands, epoch_label, tokens)


def write_raster(stack: RasterStack) -> bytes:
    """Encode a stack as BGRID bytes."""
    tok = stack._tokens
    header = "\n".join(
        [
            MAGIC,
            f"{stack.ncols} {stack.nrows} {len(stack.bands)}",
            " ".join(
                _format_number(getattr(stack, k), tok.get(k)) for k in ("x0", "y0", "pixel_size")
            ),
            _format_number(stack.nodata, tok.get("nodata")),
            " ".join(stack.bands),
        ]
    )
    payload = b"".join(np.ascontiguousarray(a, dtype="<f4").tobytes() for a in stack.bands.values())
    return header.encode("ascii") + b"\n" + payload


def same_geometry(a: RasterStack, b: RasterStack) -> bool:
    return a.geometry == b.geometry


def check_geometry(stacks: Sequence[RasterStack]) -> None:
    """Raise :class:`GeometryError` unless all stacks share one grid."""
    for s in stacks[1:]:
        if s.geometry != stacks[0].geometry:
            raise GeometryError(
                f"grid geometry mismatch: {s.epoch_label or 'stack'} {s.geometry} "
                f"vs {stacks[0].epoch_label or 'stack'} {stacks[0].geometry}"
            )


# ---------------------------------------------------------------------------
# Co-registration
# ---------------------------------------------------------------------------


def locate_pixel(stack: RasterStack | GridGeometry, x: float, y: float) -> tuple[int, int] | None:
    """Return ``(row, col)`` of the cell containing ``(x, y)``, or None.

    Cells are half-open: the left and top edges belong to the cell.
    """
    col = math.floor((x - stack.x0) / stack.pixel_size)
    row = math.floor((stack.y0 - y) / stack.pixel_size)
    if 0 <= row < stack.nrows and 0 <= col < stack.ncols:
        return row, col
    return None


@dataclass
class PlotSpectra:
    """Per-plot pixel values for every (epoch, band) pair.

    ``values[(epoch, band)]`` is a float64 array aligned with ``plot_ids``;
    flagged plots carry NaN there. ``flags`` holds ``""`` for usable plots,
    otherwise ``"out_of_bounds"`` or ``"nodata"``.
    """

    plot_ids: list[str]
    values: dict[tuple[str, str], np.ndarray]
    flags: list[str]

    @property
    def usable(self) -> np.ndarray:
        return np.array([f == "" for f in self.flags], dtype=bool)

    def bands_for(self, epoch: str) -> list[str]:
        return [b for (e, b) in self.values if e == epoch]


def extract_plot_spectra(plots: Sequence[PlotRecord], stacks: Sequence[RasterStack]) -> PlotSpectra:
    """Sample every band of every stack at each plot centre.

    Stacks are keyed by their ``epoch_label``, which must be unique.
    """
    if not stacks:
        raise ValueError("at least one raster stack is required")
    labels = [s.epoch_label for s in stacks]
    if len(set(labels)) != len(labels):
        raise ValueError(f"epoch labels must be unique, got {labels}")
    check_geometry(stacks)

    n = len(plots)
    values = {
        (s.epoch_label, b): np.full(n, np.nan) for s in stacks for b in s.bands
    }
    nodata_grids = [s.any_nodata() for s in stacks]
    flags = []
    for i, p in enumerate(plots):
        cell = locate_pixel(stacks[0], p.x, p.y)
        if cell is None:
            flags.append("out_of_bounds")
            continue
        r, c = cell
        if any(g[r, c] for g in nodata_grids):
            flags.append("nodata")
            continue
        flags.append("")
        for s in stacks:
            for b, arr in s.bands.items():
                values[(s.epoch_label, b)][i] = float(arr[r, c])
    return PlotSpectra([p.plot_id for p in plots], values, flags)
