"""Unit-propertime worldline loops: generation, persistence, extents.

Loops are discretized closed Brownian bridges in three dimensions carrying
the weight exp(-(1/4) int_0^1 ydot^2 dtau).  Loop ``k`` of an ensemble is a
pure function of ``(seed, k)``, so ensembles too large to hold in memory can
be regenerated loop by loop on demand.
"""
from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field
from typing import BinaryIO, Iterator

import numpy as np

ALGORITHM_ID = "bridge-v1"
FORMAT_VERSION = 1
MAGIC = b"WLGE"
MIN_POINTS = 4

_AXES = {"x": 0, "y": 1, "z": 2}
_HEADER = struct.Struct("<4sIQQQ")
_LEN = struct.Struct("<I")


class EnsembleFormatError(ValueError):
    """Raised for a stream that is not a readable ensemble file."""


class CorruptEnsembleError(EnsembleFormatError):
    """Raised when an ensemble file is truncated or carries excess data."""


@dataclass(frozen=True)
class WorldlineLoop:
    """Closed polygon of ``n_points`` points in R^3 with its center of mass at 0.

    Point ``i`` sits at propertime ``i / n_points``; the closing edge joins the
    last point back to the first.
    """

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValueError(f"points must have shape (N, 3), got {pts.shape}")
        if pts.shape[0] < MIN_POINTS:
            raise ValueError(f"a loop needs at least {MIN_POINTS} points, got {pts.shape[0]}")
        if pts.flags.writeable:
            pts = pts.copy() if pts is self.points else pts
            pts.flags.writeable = False
        object.__setattr__(self, "points", pts)

    @property
    def n_points(self) -> int:
        return self.points.shape[0]

    def mirrored(self, axis: str = "x") -> "WorldlineLoop":
        """Reflection of the loop through the plane normal to ``axis``."""
        pts = self.points.copy()
        pts[:, _axis_index(axis)] *= -1.0
        return WorldlineLoop(pts)


def _axis_index(axis: str) -> int:
    try:
        return _AXES[axis]
    except KeyError:
        raise ValueError(f"axis must be one of x, y, z; got {axis!r}") from None


def loop_rng(seed: int, k: int) -> np.random.Generator:
    """Random stream for loop ``k``; depends on nothing but ``(seed, k)``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(k,))))


def generate_unit_loop(n_points: int, rng: np.random.Generator) -> WorldlineLoop:
    """Draw one closed Brownian bridge with unit propertime.

    A random walk of ``n_points`` Gaussian steps (variance ``2/n_points`` per
    dimension) is closed by removing the linear drift and then shifted so the
    point average vanishes.
    """
    if n_points < MIN_POINTS:
        raise ValueError(f"n_points must be >= {MIN_POINTS}, got {n_points}")
    steps = rng.standard_normal((n_points, 3))
    steps *= np.sqrt(2.0 / n_points)
    walk = np.cumsum(steps, axis=0)
    # point i holds W_i - (i/N) W_N for i = 0..N-1; W_0 = 0 and point N == point 0
    pts = np.empty_like(walk)
    pts[0] = 0.0
    pts[1:] = walk[:-1]
    frac = np.arange(n_points, dtype=np.float64) / n_points
    pts -= frac[:, None] * walk[-1]
    pts -= pts.mean(axis=0)
    pts.flags.writeable = False
    return WorldlineLoop(pts)


def extent(loop: WorldlineLoop, axis: str = "z") -> float:
    """max - min of one coordinate over the loop's points."""
    col = loop.points[:, _axis_index(axis)]
    return float(col.max() - col.min())


@dataclass(frozen=True)
class LoopEnsemble:
    """A reproducible collection of loops.

    When ``coords`` is None the ensemble is lazy: ``loop(k)`` regenerates loop
    ``k`` from ``(seed, k)``.  Otherwise ``coords`` holds the coordinates with
    shape ``(count, n_points, 3)`` (possibly a read-only memory map).
    """

    count: int
    n_points: int
    seed: int
    algorithm_id: str = ALGORITHM_ID
    format_version: int = FORMAT_VERSION
    coords: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.count < 1:
            raise ValueError(f"count must be >= 1, got {self.count}")
        if self.n_points < MIN_POINTS:
            raise ValueError(f"n_points must be >= {MIN_POINTS}, got {self.n_points}")
        if not 0 <= self.seed < 2**64:
            raise ValueError(f"seed must fit in an unsigned 64-bit integer, got {self.seed}")
        if self.coords is not None and self.coords.shape != (self.count, self.n_points, 3):
            raise ValueError(
                f"coords shape {self.coords.shape} does not match "
                f"({self.count}, {self.n_points}, 3)"
            )
        if self.coords is None and self.algorithm_id != ALGORITHM_ID:
            raise ValueError(f"cannot regenerate loops for algorithm {self.algorithm_id!r}")

    @property
    def is_lazy(self) -> bool:
        return self.coords is None

    def loop(self, k: int) -> WorldlineLoop:
        if not 0 <= k < self.count:
            raise IndexError(f"loop index {k} out of range for {self.count} loops")
        if self.coords is None:
            return generate_unit_loop(self.n_points, loop_rng(self.seed, k))
        return WorldlineLoop(self.coords[k])

    @property
    def loops(self) -> "_LoopView":
        return _LoopView(self)

    def __len__(self) -> int:
        return self.count

    def __iter__(self) -> Iterator[WorldlineLoop]:
        for k in range(self.count):
            yield self.loop(k)

    def materialize(self) -> "LoopEnsemble":
        """Copy of this ensemble with all coordinates held in memory."""
        if self.coords is not None:
            return self
        coords = np.empty((self.count, self.n_points, 3))
        for k in range(self.count):
            coords[k] = self.loop(k).points
        coords.flags.writeable = False
        return LoopEnsemble(self.count, self.n_points, self.seed, self.algorithm_id,
                            self.format_version, coords)

    def nbytes(self) -> int:
        """Size of the serialized ensemble in bytes."""
        return (_HEADER.size + _LEN.size + len(self.algorithm_id.encode("utf-8"))
                + 24 * self.count * self.n_points)


class _LoopView:
    def __init__(self, ensemble: LoopEnsemble):
        self._ens = ensemble

    def __len__(self) -> int:
        return self._ens.count

    def __getitem__(self, k: int) -> WorldlineLoop:
        if k < 0:
            k += self._ens.count
        return self._ens.loop(k)

    def __iter__(self) -> Iterator[WorldlineLoop]:
        return iter(self._ens)


def generate_ensemble(count: int, n_points: int, seed: int, lazy: bool = False) -> LoopEnsemble:
    """Ensemble of ``count`` loops whose loop ``k`` is drawn from stream ``(seed, k)``.

    With ``lazy=True`` nothing is generated up front.
    """
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    ens = LoopEnsemble(count=count, n_points=n_points, seed=seed)
    return ens if lazy else ens.materialize()


def _pack_header(ens: LoopEnsemble) -> bytes:
    alg = ens.algorithm_id.encode("utf-8")
    return (_HEADER.pack(MAGIC, ens.format_version, ens.count, ens.n_points, ens.seed)
            + _LEN.pack(len(alg)) + alg)


def save_ensemble(ensemble: LoopEnsemble, destination: BinaryIO) -> None:
    """Write the ensemble header and little-endian float64 coordinates.

    Lazy ensembles are streamed one loop at a time.
    """
    destination.write(_pack_header(ensemble))
    for loop in ensemble:
        destination.write(np.ascontiguousarray(loop.points, dtype="<f8").tobytes())


def _read_exact(source: BinaryIO, n: int, what: str) -> bytes:
    buf = source.read(n)
    if len(buf) != n:
        raise CorruptEnsembleError(f"truncated ensemble: expected {n} bytes of {what}, got {len(buf)}")
    return buf


def _parse_header(source: BinaryIO) -> tuple[int, int, int, int, str]:
    head = source.read(_HEADER.size)
    if len(head) < len(MAGIC) or head[: len(MAGIC)] != MAGIC:
        raise EnsembleFormatError("not an ensemble file (bad magic bytes)")
    if len(head) != _HEADER.size:
        raise CorruptEnsembleError("truncated ensemble header")
    _, version, count, n_points, seed = _HEADER.unpack(head)
    if version != FORMAT_VERSION:
        raise EnsembleFormatError(f"unsupported format version {version} (expected {FORMAT_VERSION})")
    (alg_len,) = _LEN.unpack(_read_exact(source, _LEN.size, "header"))
    try:
        alg = _read_exact(source, alg_len, "algorithm id").decode("utf-8")
    except UnicodeDecodeError as exc:
        raise EnsembleFormatError("algorithm id is not valid UTF-8") from exc
    if count < 1 or n_points < MIN_POINTS:
        raise CorruptEnsembleError(f"invalid header: count={count}, n_points={n_points}")
    return version, count, n_points, seed, alg


def load_ensemble(source: BinaryIO) -> LoopEnsemble:
    """Read an ensemble written by :func:`save_ensemble` into memory."""
    version, count, n_points, seed, alg = _parse_header(source)
    nbytes = 24 * count * n_points
    payload = _read_exact(source, nbytes, "coordinates")
    if source.read(1):
        raise CorruptEnsembleError("trailing bytes after coordinate payload")
    coords = np.frombuffer(payload, dtype="<f8").astype(np.float64).reshape(count, n_points, 3)
    coords.flags.writeable = False
    return LoopEnsemble(count, n_points, seed, alg, version, coords)


def open_ensemble(path) -> LoopEnsemble:
    """Memory-map an ensemble file; suited to files larger than RAM."""
    with open(path, "rb") as fh:
        version, count, n_points, seed, alg = _parse_header(fh)
        offset = fh.tell()
        fh.seek(0, io.SEEK_END)
        size = fh.tell()
    expected = offset + 24 * count * n_points
    if size < expected:
        raise CorruptEnsembleError(f"truncated ensemble {path}: {size} bytes, expected {expected}")
    if size > expected:
        raise CorruptEnsembleError(f"trailing bytes in ensemble {path}")
    coords = np.memmap(path, dtype="<f8", mode="r", offset=offset, shape=(count, n_points, 3))
    return LoopEnsemble(count, n_points, seed, alg, version, coords)
