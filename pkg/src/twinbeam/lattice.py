"""Computational grids and complex field envelopes.

All numerical modules share one discretization: an (x, y, t) box sampled on
power-of-two grids, with the field stored as a complex envelope normalized so
that |value|^2 is photons per grid cell.  The spectral counterpart uses the
unitary DFT, so photon bookkeeping is identical in either domain.  Axis order
of the value arrays is (y, x, t); ny = 1 selects the reduced 2D+1 geometry.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

MAGIC_LATTICE = b"TBL1"

REAL = "real"
SPECTRAL = "spectral"


def _is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class LatticeSpec:
    """Grid geometry: sample counts and spacings (SI units).

    nx, ny, nt must each be a power of two; dy is kept even for ny = 1,
    where it acts as the slab thickness of the reduced geometry.
    """

    nx: int
    ny: int
    nt: int
    dx: float
    dy: float
    dt: float

    def __post_init__(self):
        for name in ("nx", "ny", "nt"):
            n = getattr(self, name)
            if not isinstance(n, (int, np.integer)) or not _is_power_of_two(int(n)):
                raise ValueError(f"{name}={n}: size not power of two")
        for name in ("dx", "dy", "dt"):
            d = getattr(self, name)
            if not (d > 0):
                raise ValueError(f"{name}={d}: spacing must be positive")

    @property
    def shape(self) -> tuple:
        return (self.ny, self.nx, self.nt)

    @property
    def ncells(self) -> int:
        return self.ny * self.nx * self.nt

    @property
    def cell_volume(self) -> float:
        """dx*dy*dt, the (area x time) element one cell represents."""
        return self.dx * self.dy * self.dt

    # Real-space axes are centered on zero; spectral axes use the standard
    # wrap-around order with zero frequency at index 0.
    def x_axis(self) -> np.ndarray:
        return (np.arange(self.nx) - self.nx // 2) * self.dx

    def y_axis(self) -> np.ndarray:
        return (np.arange(self.ny) - self.ny // 2) * self.dy

    def t_axis(self) -> np.ndarray:
        return (np.arange(self.nt) - self.nt // 2) * self.dt

    def qx_axis(self) -> np.ndarray:
        return 2.0 * np.pi * np.fft.fftfreq(self.nx, d=self.dx)

    def qy_axis(self) -> np.ndarray:
        return 2.0 * np.pi * np.fft.fftfreq(self.ny, d=self.dy)

    def omega_axis(self) -> np.ndarray:
        return 2.0 * np.pi * np.fft.fftfreq(self.nt, d=self.dt)

    def to_dict(self) -> dict:
        return {"nx": self.nx, "ny": self.ny, "nt": self.nt,
                "dx": self.dx, "dy": self.dy, "dt": self.dt}


@dataclass
class ComplexLattice:
    """A complex envelope on a LatticeSpec grid.

    values has shape (ny, nx, nt); domain_tag is REAL or SPECTRAL.
    Treated as immutable: operations return new lattices.
    """

    spec: LatticeSpec
    values: np.ndarray
    domain_tag: str = REAL

    def __post_init__(self):
        if self.values.shape != self.spec.shape:
            raise ValueError(
                f"values shape {self.values.shape} != spec shape {self.spec.shape}")
        if self.domain_tag not in (REAL, SPECTRAL):
            raise ValueError(f"unknown domain_tag {self.domain_tag!r}")

    def copy(self) -> "ComplexLattice":
        return ComplexLattice(self.spec, self.values.copy(), self.domain_tag)


def make_lattice(spec: LatticeSpec) -> ComplexLattice:
    """All-zero lattice in the real domain."""
    return ComplexLattice(spec, np.zeros(spec.shape, dtype=np.complex128), REAL)


def to_spectral(f: ComplexLattice) -> ComplexLattice:
    """Unitary DFT along all axes (real -> spectral)."""
    if f.domain_tag != REAL:
        raise ValueError("to_spectral: lattice is not in the real domain")
    vals = np.fft.fftn(f.values, norm="ortho")
    return ComplexLattice(f.spec, vals, SPECTRAL)


def from_spectral(f: ComplexLattice) -> ComplexLattice:
    """Unitary inverse DFT along all axes (spectral -> real)."""
    if f.domain_tag != SPECTRAL:
        raise ValueError("from_spectral: lattice is not in the spectral domain")
    vals = np.fft.ifftn(f.values, norm="ortho")
    return ComplexLattice(f.spec, vals, REAL)


def photon_number(f: ComplexLattice, subtract_vacuum: bool = False) -> float:
    """Total photons sum(|values|^2), optionally minus ncells/2.

    The half-photon-per-cell subtraction removes the symmetric-ordering
    vacuum contribution of the stochastic input noise; the result may be
    negative for pure vacuum fluctuations and is returned as-is.  The sum
    is domain-independent (unitary transforms).
    """
    n = float(np.sum(np.abs(f.values) ** 2))
    if subtract_vacuum:
        n -= f.spec.ncells / 2.0
    return n


def save_lattice(path, f: ComplexLattice) -> None:
    """Binary dump: "TBL1", u32 nx ny nt, f64 dx dy dt, f32 (re, im) pairs.

    Pair order is t fastest-varying, then x, then y, i.e. C order of the
    (ny, nx, nt) value array.  Little-endian throughout.
    """
    spec = f.spec
    header = MAGIC_LATTICE + struct.pack(
        "<IIIddd", spec.nx, spec.ny, spec.nt, spec.dx, spec.dy, spec.dt)
    body = np.ascontiguousarray(f.values.astype(np.complex64))
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(body.view(np.float32).astype("<f4").tobytes())


class FormatError(ValueError):
    """Malformed binary artifact; carries the byte offset of the problem."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


def load_lattice(path) -> ComplexLattice:
    """Read a "TBL1" dump written by save_lattice.

    The file format does not record the domain; dumps are written from
    real-domain fields and loaded as such.
    """
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != MAGIC_LATTICE:
        raise FormatError(f"bad magic {raw[:4]!r}, expected {MAGIC_LATTICE!r}", 0)
    header_len = 4 + struct.calcsize("<IIIddd")
    if len(raw) < header_len:
        raise FormatError("truncated header", len(raw))
    nx, ny, nt, dx, dy, dt = struct.unpack_from("<IIIddd", raw, 4)
    try:
        spec = LatticeSpec(int(nx), int(ny), int(nt), dx, dy, dt)
    except ValueError as exc:
        raise FormatError(f"invalid header fields: {exc}", 4) from exc
    expected = header_len + spec.ncells * 8
    if len(raw) != expected:
        raise FormatError(
            f"payload size {len(raw) - header_len} != {spec.ncells * 8}", header_len)
    flat = np.frombuffer(raw, dtype="<f4", offset=header_len)
    vals = flat.astype(np.float32).view(np.complex64).reshape(spec.shape)
    return ComplexLattice(spec, vals.astype(np.complex128), REAL)
