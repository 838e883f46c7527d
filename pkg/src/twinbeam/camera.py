"""Imaging-spectrometer + EMCCD chain: far-field mapping and detection.

The down-converted field at the crystal exit is decomposed into (q_x, Omega)
plane waves, the slit selects q_y = 0, and each spectral cell is deposited on
the camera's (theta, lambda) pixel grid.  Frames are stored as (angular,
spectral) = (row, column) images; pixel coordinates are (i, j) = (row, col)
throughout, with center_pixel marking (collinear direction, degenerate
wavelength).  Detection applies quantum efficiency and transmission, Poisson
shot noise, an optional EM excess-noise stage, the electrons-per-DN
calibration, Gaussian dark noise, and bit-depth quantization.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, asdict

import numpy as np
from scipy.constants import c as C_LIGHT

from .lattice import (FormatError, SPECTRAL, ComplexLattice, LatticeSpec,
                      to_spectral)
from .medium import ORDINARY, CrystalMedium, index

MAGIC_FRAMES = b"TBF1"


@dataclass(frozen=True)
class CameraSpec:
    pixels_spectral: int = 256
    pixels_angular: int = 64
    wavelength_window: tuple = (683e-9, 713e-9)
    angle_window: tuple = (-16e-3, 16e-3)
    quantum_efficiency: float = 0.9
    electrons_per_dn: float = 5.4
    dark_mean: float = 100.0
    dark_sigma: float = 2.0
    em_excess_noise: bool = False
    bit_depth: int = 16
    optical_transmission: float = 1.0

    def __post_init__(self):
        if self.wavelength_window[1] <= self.wavelength_window[0]:
            raise ValueError("empty wavelength window")
        if self.angle_window[1] <= self.angle_window[0]:
            raise ValueError("empty angle window")
        if not (0 < self.quantum_efficiency <= 1):
            raise ValueError("quantum_efficiency must lie in (0, 1]")
        if not (self.electrons_per_dn > 0):
            raise ValueError("electrons_per_dn must be positive")
        if not (0 < self.optical_transmission <= 1):
            raise ValueError("optical_transmission must lie in (0, 1]")

    @property
    def shape(self) -> tuple:
        return (self.pixels_angular, self.pixels_spectral)

    @property
    def wavelength_pitch(self) -> float:
        lo, hi = self.wavelength_window
        return (hi - lo) / self.pixels_spectral

    @property
    def angle_pitch(self) -> float:
        lo, hi = self.angle_window
        return (hi - lo) / self.pixels_angular

    def wavelength_axis(self) -> np.ndarray:
        lo, _ = self.wavelength_window
        return lo + (np.arange(self.pixels_spectral) + 0.5) * self.wavelength_pitch

    def angle_axis(self) -> np.ndarray:
        lo, _ = self.angle_window
        return lo + (np.arange(self.pixels_angular) + 0.5) * self.angle_pitch

    def to_dict(self) -> dict:
        d = asdict(self)
        d["wavelength_window"] = list(self.wavelength_window)
        d["angle_window"] = list(self.angle_window)
        return d


@dataclass
class FrameStack:
    """Detected frames (DN, uint16) plus camera metadata and provenance."""

    frames: np.ndarray
    camera: CameraSpec
    center_pixel: tuple
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.frames.ndim != 3:
            raise ValueError("frames must be a (count, height, width) array")
        if self.frames.shape[1:] != self.camera.shape:
            raise ValueError(
                f"frame dims {self.frames.shape[1:]} != camera {self.camera.shape}")
        i0, j0 = self.center_pixel
        if not (0 <= i0 < self.frames.shape[1] and 0 <= j0 < self.frames.shape[2]):
            raise ValueError("center_pixel outside image")

    def __len__(self) -> int:
        return self.frames.shape[0]


def _spectral_values(a: ComplexLattice) -> np.ndarray:
    f = a if a.domain_tag == SPECTRAL else to_spectral(a)
    return f.values


def _cell_coordinates(spec: LatticeSpec, medium: CrystalMedium):
    """(theta, lambda) of every (q_x, Omega) cell on the q_y = 0 slice."""
    qx = spec.qx_axis()[:, None]
    om = medium.omega_signal + spec.omega_axis()[None, :]
    lam = 2.0 * np.pi * C_LIGHT / om
    k = index(medium, lam, ORDINARY) * om / C_LIGHT
    theta = qx / k
    return theta, np.broadcast_to(lam, theta.shape)


def _scatter_bilinear(weights: np.ndarray, theta: np.ndarray,
                      lam: np.ndarray, camera: CameraSpec) -> np.ndarray:
    """Deposit per-cell photon weights onto the pixel grid.

    Forward bilinear scatter conserves the deposited photon number exactly
    for cells whose four target pixels are inside the image; partial edge
    overlaps lose the outside share.
    """
    h, w = camera.shape
    u = (theta - camera.angle_window[0]) / camera.angle_pitch - 0.5
    v = (lam - camera.wavelength_window[0]) / camera.wavelength_pitch - 0.5
    i0 = np.floor(u).astype(np.int64)
    j0 = np.floor(v).astype(np.int64)
    fu = u - i0
    fv = v - j0
    image = np.zeros((h, w))
    flat = image.ravel()
    for di, dj, wt in ((0, 0, (1 - fu) * (1 - fv)), (0, 1, (1 - fu) * fv),
                       (1, 0, fu * (1 - fv)), (1, 1, fu * fv)):
        ii = i0 + di
        jj = j0 + dj
        ok = (ii >= 0) & (ii < h) & (jj >= 0) & (jj < w)
        np.add.at(flat, (ii[ok] * w + jj[ok]), (weights * wt)[ok])
    return image


def far_field_map(a: ComplexLattice, medium: CrystalMedium,
                  camera: CameraSpec) -> np.ndarray:
    """(theta, lambda) photon image of the down-converted field.

    Returns photons per pixel (symmetric-ordered; the half-photon vacuum
    background is still included -- see vacuum_baseline_map).
    """
    spec = a.spec
    vals = _spectral_values(a)
    slab = vals[0]  # q_y = 0 slice; for ny = 1 this is the whole field
    theta, lam = _cell_coordinates(spec, medium)
    _check_window_overlap(theta, lam, camera)
    return _scatter_bilinear(np.abs(slab) ** 2, theta, lam, camera)


def _check_window_overlap(theta, lam, camera: CameraSpec) -> None:
    th_lo, th_hi = theta.min(), theta.max()
    lm_lo, lm_hi = lam.min(), lam.max()
    if th_hi < camera.angle_window[0] or th_lo > camera.angle_window[1] or \
            lm_hi < camera.wavelength_window[0] or \
            lm_lo > camera.wavelength_window[1]:
        raise ValueError(
            "camera window outside simulated bandwidth: grid covers "
            f"theta [{th_lo:.3g}, {th_hi:.3g}] rad, lambda "
            f"[{lm_lo:.3g}, {lm_hi:.3g}] m")


def vacuum_baseline_map(spec: LatticeSpec, medium: CrystalMedium,
                        camera: CameraSpec) -> np.ndarray:
    """Expected pixel image of the half-photon-per-cell vacuum background.

    Subtracting this from far_field_map output is the Wigner symmetric-
    ordering correction at the image stage.
    """
    theta, lam = _cell_coordinates(spec, medium)
    weights = np.full(theta.shape, 0.5)
    return _scatter_bilinear(weights, theta, lam, camera)


def detect(image: np.ndarray, camera: CameraSpec, rng_seed: int) -> np.ndarray:
    """Detect a photon image into a DN frame (uint16).

    Expects nonnegative intensities (clip Wigner-corrected images first).
    Chain: Poisson(eta*T*n) photoelectrons, optional EM excess-noise Gamma
    stage (variance doubling at unit mean gain), electrons -> DN, Gaussian
    dark offset, rounding and bit-depth clamp.
    """
    if np.any(image < 0):
        raise ValueError("detect expects nonnegative intensities")
    rng = np.random.default_rng(rng_seed)
    mean_e = camera.quantum_efficiency * camera.optical_transmission * image
    electrons = rng.poisson(mean_e).astype(float)
    if camera.em_excess_noise:
        positive = electrons > 0
        gamma = rng.gamma(np.where(positive, electrons, 1.0))
        electrons = np.where(positive, gamma, 0.0)
    dn = electrons / camera.electrons_per_dn
    dn = dn + rng.normal(camera.dark_mean, camera.dark_sigma, size=dn.shape)
    top = float(2 ** camera.bit_depth - 1)
    return np.clip(np.rint(dn), 0, top).astype(np.uint16)


def center_pixel_for(medium: CrystalMedium, camera: CameraSpec) -> tuple:
    """(row, col) of (collinear direction, degenerate wavelength)."""
    lam0 = medium.signal_center_wavelength
    j0 = int(np.clip(
        np.rint((lam0 - camera.wavelength_window[0]) / camera.wavelength_pitch
                - 0.5), 0, camera.pixels_spectral - 1))
    i0 = int(np.clip(
        np.rint((0.0 - camera.angle_window[0]) / camera.angle_pitch - 0.5),
        0, camera.pixels_angular - 1))
    return (i0, j0)


def acquire_stack(outputs, medium: CrystalMedium, camera: CameraSpec,
                  seeds, provenance: dict | None = None) -> FrameStack:
    """Detect one frame per ensemble output into a FrameStack.

    outputs yields PdcState (or bare ComplexLattice) exit fields; seeds is an
    integer base (frame i uses base + i) or an explicit sequence.  The Wigner
    half-photon baseline is subtracted per frame with negatives clipped to
    zero; the clipped-cell count is recorded in the provenance.
    """
    frames = []
    baseline = None
    clipped_cells = 0
    for i, out in enumerate(outputs):
        a = out.a if hasattr(out, "a") else out
        if baseline is None:
            baseline = vacuum_baseline_map(a.spec, medium, camera)
        image = far_field_map(a, medium, camera) - baseline
        clipped_cells += int(np.count_nonzero(image < 0))
        image = np.clip(image, 0.0, None)
        seed = seeds + i if isinstance(seeds, (int, np.integer)) else seeds[i]
        frames.append(detect(image, camera, seed))
    if not frames:
        raise ValueError("acquire_stack needs at least one output")
    prov = dict(provenance or {})
    prov.update(n_frames=len(frames), clipped_cells=clipped_cells)
    return FrameStack(np.stack(frames), camera,
                      center_pixel_for(medium, camera), prov)


def save_stack(path, stack: FrameStack) -> None:
    """Binary frame file plus a JSON sidecar (camera spec + provenance).

    Layout: "TBF1", u32 count, height, width, center_i, center_j,
    f64 lambda_min, lambda_max, theta_min, theta_max, then frames as
    row-major little-endian u16.
    """
    n, h, w = stack.frames.shape
    cam = stack.camera
    header = MAGIC_FRAMES + struct.pack(
        "<IIIIIdddd", n, h, w, stack.center_pixel[0], stack.center_pixel[1],
        cam.wavelength_window[0], cam.wavelength_window[1],
        cam.angle_window[0], cam.angle_window[1])
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(stack.frames, dtype="<u2").tobytes())
    sidecar = {"camera": cam.to_dict(), "provenance": stack.provenance}
    with open(str(path) + ".json", "w") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)


def load_stack(path) -> FrameStack:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != MAGIC_FRAMES:
        raise FormatError(f"bad magic {raw[:4]!r}, expected {MAGIC_FRAMES!r}", 0)
    header_len = 4 + struct.calcsize("<IIIIIdddd")
    if len(raw) < header_len:
        raise FormatError("truncated header", len(raw))
    n, h, w, ci, cj, lmin, lmax, tmin, tmax = struct.unpack_from(
        "<IIIIIdddd", raw, 4)
    expected = header_len + n * h * w * 2
    if len(raw) != expected:
        raise FormatError(
            f"payload size {len(raw) - header_len} != {n * h * w * 2}",
            header_len)
    frames = np.frombuffer(raw, dtype="<u2", offset=header_len).reshape(n, h, w)
    try:
        with open(str(path) + ".json") as fh:
            sidecar = json.load(fh)
        cam_dict = dict(sidecar["camera"])
        cam_dict["wavelength_window"] = tuple(cam_dict["wavelength_window"])
        cam_dict["angle_window"] = tuple(cam_dict["angle_window"])
        camera = CameraSpec(**cam_dict)
        provenance = sidecar.get("provenance", {})
    except FileNotFoundError:
        camera = CameraSpec(
            pixels_spectral=w, pixels_angular=h,
            wavelength_window=(lmin, lmax), angle_window=(tmin, tmax))
        provenance = {}
    if camera.shape != (h, w):
        raise FormatError("sidecar camera dims disagree with frame dims", 4)
    return FrameStack(np.ascontiguousarray(frames).astype(np.uint16),
                      camera, (int(ci), int(cj)), provenance)
