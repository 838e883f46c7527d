"""Measurement mathematics: correlation maps, widths, g2, modes, pump dips.

Everything here works on stacks of detected frames, real-valued after dark
subtraction.  The normalized intensity correlation between a seed pixel and
every other pixel,

    Gamma[k, l] = <I_seed * I[k, l]> / (<I_seed> <I[k, l]>),

averaged over the frame ensemble, contains the auto-correlation lobe at the
seed and the twin-beam cross-correlation lobe at the point-symmetric pixel
about the (collinear, degenerate) center.  Pixel coordinates are (row, col) =
(angular, spectral); horizontal sections are spectral, vertical angular.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .camera import CameraSpec, FrameStack
from .lattice import ComplexLattice


@dataclass
class Peak:
    pixel: tuple
    value: float


@dataclass
class CorrelationMap:
    gamma: np.ndarray
    seed_pixel: tuple
    auto_peak: Peak
    cross_peak: Peak
    sections: dict = field(default_factory=dict)
    flagged: np.ndarray | None = None

    def section(self, which: str) -> np.ndarray:
        return self.sections[which]


def dark_subtract(stack, dark) -> np.ndarray:
    """Frames minus the dark level (scalar or per-pixel map), as floats.

    Negative residuals are retained: clipping would bias the means.
    """
    frames = stack.frames if isinstance(stack, FrameStack) else np.asarray(stack)
    frames = frames.astype(float)
    dark = np.asarray(dark, dtype=float)
    if dark.ndim not in (0, 2):
        raise ValueError("dark must be a scalar or a 2D map")
    if dark.ndim == 2 and dark.shape != frames.shape[1:]:
        raise ValueError(
            f"dark map {dark.shape} incompatible with frames {frames.shape[1:]}")
    return frames - dark


def gamma_map(frames: np.ndarray, seed_pixel: tuple,
              center_pixel: tuple | None = None,
              cross_window: int = 16, auto_window: int = 3) -> CorrelationMap:
    """Normalized seed-vs-all intensity correlation matrix.

    Pixels whose mean intensity is <= 0 get gamma = 1 and are flagged.  The
    auto peak is the maximum in a +-auto_window neighborhood of the seed; the
    cross peak the maximum in a +-cross_window box around the point-symmetric
    pixel 2*center - seed (requires center_pixel).  Sections are the full
    gamma row (spectral) and column (angular) through each peak.
    """
    frames = np.asarray(frames, dtype=float)
    if frames.ndim != 3 or frames.shape[0] < 2:
        raise ValueError("need a (n_frames >= 2, height, width) stack")
    si, sj = seed_pixel
    mean = frames.mean(axis=0)
    seed_vals = frames[:, si, sj]
    seed_mean = seed_vals.mean()
    if seed_mean <= 0:
        raise ValueError(f"seed pixel {seed_pixel} has nonpositive mean")
    corr = np.einsum("n,nij->ij", seed_vals, frames) / frames.shape[0]
    denom = seed_mean * mean
    flagged = mean <= 0
    gamma = np.ones_like(mean)
    np.divide(corr, denom, out=gamma, where=~flagged)

    h, w = gamma.shape

    def window_max(ci, cj, half):
        i_lo, i_hi = max(0, ci - half), min(h, ci + half + 1)
        j_lo, j_hi = max(0, cj - half), min(w, cj + half + 1)
        sub = gamma[i_lo:i_hi, j_lo:j_hi]
        k = int(np.argmax(sub))
        di, dj = divmod(k, sub.shape[1])
        pix = (i_lo + di, j_lo + dj)
        return Peak(pix, float(gamma[pix]))

    auto = window_max(si, sj, auto_window)
    sections = {
        "auto_spectral": gamma[auto.pixel[0], :].copy(),
        "auto_angular": gamma[:, auto.pixel[1]].copy(),
    }
    if center_pixel is not None:
        ci = 2 * center_pixel[0] - si
        cj = 2 * center_pixel[1] - sj
        if not (0 <= ci < h and 0 <= cj < w):
            raise ValueError(
                f"symmetric pixel ({ci}, {cj}) outside image; check center")
        cross = window_max(ci, cj, cross_window)
        sections["cross_spectral"] = gamma[cross.pixel[0], :].copy()
        sections["cross_angular"] = gamma[:, cross.pixel[1]].copy()
    else:
        cross = Peak(seed_pixel, float(gamma[si, sj]))
    return CorrelationMap(gamma, (si, sj), auto, cross, sections, flagged)


def fwhm_of_section(profile: np.ndarray, baseline: float = 1.0,
                    pitch: float = 1.0) -> float:
    """Width between the half-maximum crossings of (profile - baseline).

    Crossings are located by linear interpolation between samples; the
    default baseline 1 is the uncorrelated level of Gamma.  Raises if no
    crossing exists on either side or if a sample beyond the located
    interval re-exceeds the half level (multi-lobe ambiguity).
    """
    p = np.asarray(profile, dtype=float) - baseline
    if p.ndim != 1 or p.size < 3:
        raise ValueError("profile must be a 1D array with >= 3 samples")
    ipk = int(np.argmax(p))
    half = p[ipk] / 2.0
    if not (p[ipk] > 0):
        raise ValueError("no crossing: profile never exceeds the baseline")

    def cross_left():
        for i in range(ipk, 0, -1):
            if p[i - 1] <= half < p[i]:
                return (i - 1) + (half - p[i - 1]) / (p[i] - p[i - 1])
        raise ValueError("no crossing found left of the peak")

    def cross_right():
        for i in range(ipk, p.size - 1):
            if p[i] > half >= p[i + 1]:
                return i + (p[i] - half) / (p[i] - p[i + 1])
        raise ValueError("no crossing found right of the peak")

    xl = cross_left()
    xr = cross_right()
    il = int(np.floor(xl))
    ir = int(np.ceil(xr))
    outside = np.concatenate((p[:il], p[ir + 1:]))
    if outside.size and np.max(outside) > half:
        k = int(np.argmax(outside))
        raise ValueError(
            f"multi-lobe ambiguity: sample beyond the half-maximum interval "
            f"reaches {np.max(outside) + baseline:.4g} (half level "
            f"{half + baseline:.4g}, interval [{xl:.2f}, {xr:.2f}], "
            f"outside index {k})")
    return float((xr - xl) * pitch)


def g2_estimate(frames: np.ndarray, region=None,
                camera: CameraSpec | None = None,
                binning: tuple = (1, 1)) -> dict:
    """Region-averaged per-pixel g2 = <I^2>/<I>^2 over the frame ensemble.

    frames must already be dark-subtracted (DN).  With a CameraSpec the
    corrected estimate removes the detection-noise floor per pixel:
    (sigma_dark^2 + <n_e> F + quantization) / <n_e>^2 in electron units,
    F = 2 with the EM stage, else 1.  Without a camera the corrected value
    equals the raw one.

    binning=(bi, bj) sums blocks of pixels into macro-pixels first: the
    resulting 1/(g2 - 1) then counts coherence cells per macro-pixel area,
    which is how the mode number of a region is accessed when individual
    pixels resolve less than one coherence cell.  Noise floors add per
    constituent pixel.
    """
    frames = np.asarray(frames, dtype=float)
    if frames.ndim != 3 or frames.shape[0] < 2:
        raise ValueError("need a (n_frames >= 2, height, width) stack")
    sub = frames if region is None else frames[(slice(None),) + _as_index(region)]
    bi, bj = binning
    n_per_macro = 1
    if bi > 1 or bj > 1:
        if sub.ndim != 3:
            raise ValueError("binning requires a rectangular (slice) region")
        n, h, w = sub.shape
        h2, w2 = (h // bi) * bi, (w // bj) * bj
        sub = sub[:, :h2, :w2].reshape(n, h2 // bi, bi, w2 // bj, bj)
        sub = sub.sum(axis=(2, 4))
        n_per_macro = bi * bj
    mean = sub.mean(axis=0)
    second = (sub ** 2).mean(axis=0)
    ok = mean > 0
    if not np.any(ok):
        raise ValueError("region has no pixels with positive mean intensity")
    g2_px = second[ok] / mean[ok] ** 2
    g2_raw = float(g2_px.mean())
    if camera is None:
        return {"g2_raw": g2_raw, "g2_corrected": g2_raw}
    gain = camera.electrons_per_dn
    excess = 2.0 if camera.em_excess_noise else 1.0
    n_e = mean[ok] * gain
    dark_var_e = n_per_macro * (camera.dark_sigma * gain) ** 2
    quant_var_e = n_per_macro * gain ** 2 / 12.0
    floor = (dark_var_e + quant_var_e + n_e * excess) / n_e ** 2
    g2_corr = float((g2_px - floor).mean())
    return {"g2_raw": g2_raw, "g2_corrected": g2_corr}


def _as_index(region):
    if isinstance(region, np.ndarray) and region.dtype == bool:
        return (region,)
    return tuple(region)


def mode_count(g2: float) -> float:
    """Effective mode number K = 1/(g2 - 1); needs super-Poissonian g2."""
    if not (g2 > 1.0):
        raise ValueError(
            f"g2={g2:.6g} <= 1: super-Poissonian excess absent")
    return 1.0 / (g2 - 1.0)


def photons_from_dn(frames: np.ndarray, camera: CameraSpec,
                    losses: float = 1.0, region=None,
                    dark=None) -> float:
    """Mean photons per pixel inferred from raw DN frames.

    photons = (mean DN - dark) * electrons_per_dn / (eta * losses * T);
    dark defaults to the camera's dark_mean.
    """
    if not (0 < losses <= 1):
        raise ValueError("losses must lie in (0, 1]")
    throughput = camera.quantum_efficiency * losses * camera.optical_transmission
    if throughput <= 0:
        raise ValueError("nonpositive throughput")
    frames = np.asarray(frames, dtype=float)
    if dark is None:
        dark = camera.dark_mean
    sub = frames if region is None else frames[(slice(None),) + _as_index(region)]
    excess_dn = float(sub.mean()) - float(np.mean(dark))
    return excess_dn * camera.electrons_per_dn / throughput


@dataclass
class PumpDiagnostics:
    spectral_section: np.ndarray
    spectral_section_ref: np.ndarray
    spatial_section: np.ndarray
    spatial_section_ref: np.ndarray
    spectral_diff_map: np.ndarray
    spatial_diff: np.ndarray
    omega_axis: np.ndarray
    x_axis: np.ndarray
    dip_depth: float
    dip_fwhm: float
    dip_offset: float


def pump_profiles(pump_exit: ComplexLattice,
                  reference: ComplexLattice) -> PumpDiagnostics:
    """Pump depletion diagnostics against a least-intense reference exit field.

    Spectral section: |temporal spectrum|^2 at the beam center, normalized to
    its peak.  Spatial section: time-integrated |b|^2 along x at the y
    center, normalized to unit area.  Diff maps subtract the reference's
    normalized distribution.  Dip metrics come from the spatial difference:
    depth is relative to the reference at the dip, FWHM spans the dip's
    half-depth crossings, offset is the dip position minus the reference
    beam centroid (m).
    """
    if pump_exit.spec != reference.spec:
        raise ValueError("pump_exit and reference must share one LatticeSpec")
    spec = pump_exit.spec
    iy = spec.ny // 2
    x = spec.x_axis()

    def spatial(lattice):
        prof = np.sum(np.abs(lattice.values[iy]) ** 2, axis=1)
        return prof / np.sum(prof)

    def spectral_map(lattice):
        spect = np.abs(np.fft.fftshift(
            np.fft.fft(lattice.values[iy], axis=1, norm="ortho"), axes=1)) ** 2
        return spect / np.max(spect)

    sp_out = spatial(pump_exit)
    sp_ref = spatial(reference)
    sm_out = spectral_map(pump_exit)
    sm_ref = spectral_map(reference)
    ix_out = int(np.argmax(sp_out))
    ix_ref = int(np.argmax(sp_ref))
    spec_sec = sm_out[ix_out] / np.max(sm_out[ix_out])
    spec_sec_ref = sm_ref[ix_ref] / np.max(sm_ref[ix_ref])

    diff = sp_out - sp_ref
    i_dip = int(np.argmin(diff))
    depth = float(diff[i_dip] / sp_ref[i_dip]) if sp_ref[i_dip] > 0 else 0.0
    centroid_ref = float(np.sum(x * sp_ref))
    offset = float(x[i_dip] - centroid_ref)
    try:
        fwhm = fwhm_of_section(-diff, baseline=0.0, pitch=spec.dx)
    except ValueError:
        fwhm = float("nan")
    return PumpDiagnostics(
        spectral_section=spec_sec, spectral_section_ref=spec_sec_ref,
        spatial_section=sp_out, spatial_section_ref=sp_ref,
        spectral_diff_map=sm_out - sm_ref, spatial_diff=diff,
        omega_axis=np.fft.fftshift(spec.omega_axis()), x_axis=x,
        dip_depth=depth, dip_fwhm=float(fwhm), dip_offset=offset)
