"""Nonlinear crystal model: refractive indices, walk-off, dispersion tables.

The crystal is described by two Sellmeier coefficient sets (ordinary and
extraordinary) of the common form

    n^2(lm) = a + b / (lm^2 - c) - d * lm^2,   lm in micrometers,

a cut angle (angle between optic axis and propagation direction), the
effective nonlinear coefficient, and the two carrier wavelengths.  Carrier
quantities (wave numbers, walk-off, collinear mismatch) are derivable but
overridable, since the experimentally realized tuning is never known exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.constants import c as C_LIGHT

ORDINARY = "ordinary"
EXTRAORDINARY_AT_CUT = "extraordinary-at-cut"


@dataclass(frozen=True)
class SellmeierSet:
    """One-pole Sellmeier coefficients with their validity window (m)."""

    a: float
    b: float
    c: float
    d: float
    lambda_min: float
    lambda_max: float

    def n(self, wavelength_m):
        lm = np.asarray(wavelength_m, dtype=float)
        if np.any(lm < self.lambda_min) or np.any(lm > self.lambda_max):
            raise ValueError(
                f"wavelength outside Sellmeier validity window "
                f"[{self.lambda_min:g}, {self.lambda_max:g}] m")
        lm2 = (lm * 1e6) ** 2
        n2 = self.a + self.b / (lm2 - self.c) - self.d * lm2
        return np.sqrt(n2)

    def dn_dlambda(self, wavelength_m):
        """Analytic dn/d(lambda) in 1/m, used for group velocities."""
        lm = np.asarray(wavelength_m, dtype=float)
        lm_um = lm * 1e6
        lm2 = lm_um ** 2
        n = self.n(wavelength_m)
        # d(n^2)/d(lm_um) = -2*lm_um * (b/(lm2-c)^2 + d)
        dn2 = -2.0 * lm_um * (self.b / (lm2 - self.c) ** 2 + self.d)
        return dn2 / (2.0 * n) * 1e6

    def to_dict(self) -> dict:
        return {"a": self.a, "b": self.b, "c": self.c, "d": self.d,
                "lambda_min": self.lambda_min, "lambda_max": self.lambda_max}


# Standard published beta-barium-borate data (lm in um, 0.22-1.06 um window).
BBO_ORDINARY = SellmeierSet(2.7405, 0.0184, 0.0179, 0.0155, 0.22e-6, 1.06e-6)
BBO_EXTRAORDINARY = SellmeierSet(2.3730, 0.0128, 0.0156, 0.0044, 0.22e-6, 1.06e-6)


@dataclass(frozen=True)
class CrystalMedium:
    """Uniaxial chi2 crystal cut for type-I degenerate down-conversion.

    The pump propagates as extraordinary-at-cut, the down-converted field as
    ordinary.  walkoff_angle and collinear_mismatch may be given explicitly;
    None means "derive from the index model".
    """

    length: float = 8e-3
    cut_angle: float = np.deg2rad(37.0)
    sellmeier_o: SellmeierSet = BBO_ORDINARY
    sellmeier_e: SellmeierSet = BBO_EXTRAORDINARY
    deff: float = 2.0e-12
    pump_center_wavelength: float = 349e-9
    signal_center_wavelength: float = 698e-9
    walkoff_angle: float | None = None
    collinear_mismatch: float | None = None

    def __post_init__(self):
        if not (self.length > 0):
            raise ValueError(f"length={self.length}: must be positive")
        if not (0 < self.cut_angle < np.pi / 2):
            raise ValueError(f"cut_angle={self.cut_angle}: must lie in (0, pi/2)")
        if self.deff < 0:
            raise ValueError(f"deff={self.deff}: must be nonnegative")

    @property
    def degenerate(self) -> bool:
        return abs(self.signal_center_wavelength
                   - 2.0 * self.pump_center_wavelength) <= \
            1e-12 * self.signal_center_wavelength

    @property
    def omega_pump(self) -> float:
        return 2.0 * np.pi * C_LIGHT / self.pump_center_wavelength

    @property
    def omega_signal(self) -> float:
        return 2.0 * np.pi * C_LIGHT / self.signal_center_wavelength


def index(medium: CrystalMedium, wavelength_m, polarization: str):
    """Refractive index at the given wavelength(s).

    "ordinary" evaluates n_o; "extraordinary-at-cut" combines n_o and n_e at
    the cut angle with the standard uniaxial relation
    n(theta)^-2 = cos^2/n_o^2 + sin^2/n_e^2.
    """
    lm = np.asarray(wavelength_m, dtype=float)
    if np.any(lm <= 0):
        raise ValueError("wavelength must be positive")
    if polarization == ORDINARY:
        return medium.sellmeier_o.n(lm)
    if polarization == EXTRAORDINARY_AT_CUT:
        no = medium.sellmeier_o.n(lm)
        ne = medium.sellmeier_e.n(lm)
        ct2 = np.cos(medium.cut_angle) ** 2
        st2 = np.sin(medium.cut_angle) ** 2
        return 1.0 / np.sqrt(ct2 / no ** 2 + st2 / ne ** 2)
    raise ValueError(f"unknown polarization {polarization!r}")


def group_index(medium: CrystalMedium, wavelength_m: float, polarization: str) -> float:
    """n_g = n - lambda * dn/dlambda for the chosen polarization."""
    lm = float(wavelength_m)
    if polarization == ORDINARY:
        n = float(medium.sellmeier_o.n(lm))
        dn = float(medium.sellmeier_o.dn_dlambda(lm))
        return n - lm * dn
    if polarization == EXTRAORDINARY_AT_CUT:
        no = float(medium.sellmeier_o.n(lm))
        ne = float(medium.sellmeier_e.n(lm))
        dno = float(medium.sellmeier_o.dn_dlambda(lm))
        dne = float(medium.sellmeier_e.dn_dlambda(lm))
        ct2 = np.cos(medium.cut_angle) ** 2
        st2 = np.sin(medium.cut_angle) ** 2
        nth = 1.0 / np.sqrt(ct2 / no ** 2 + st2 / ne ** 2)
        dnth = nth ** 3 * (ct2 * dno / no ** 3 + st2 * dne / ne ** 3)
        return nth - lm * dnth
    raise ValueError(f"unknown polarization {polarization!r}")


def walkoff_angle(medium: CrystalMedium) -> float:
    """Pump spatial walk-off magnitude (rad) at the cut angle.

    tan(rho) = (n_theta^2 / 2) |1/n_e^2 - 1/n_o^2| sin(2 theta), evaluated at
    the pump carrier.  The override on the medium wins when set.  The walk-off
    direction is +x by convention.
    """
    if medium.walkoff_angle is not None:
        return medium.walkoff_angle
    lm = medium.pump_center_wavelength
    no = float(medium.sellmeier_o.n(lm))
    ne = float(medium.sellmeier_e.n(lm))
    nth = float(index(medium, lm, EXTRAORDINARY_AT_CUT))
    tan_rho = (nth ** 2 / 2.0) * abs(1.0 / ne ** 2 - 1.0 / no ** 2) \
        * np.sin(2.0 * medium.cut_angle)
    return float(np.arctan(tan_rho))


def phase_matching_angle(medium: CrystalMedium) -> float:
    """Cut angle (rad) giving collinear degenerate phase matching.

    Solves n_e(theta, lambda_p) = n_o(lambda_s) for the configured carriers.
    """
    lp = medium.pump_center_wavelength
    ls = medium.signal_center_wavelength
    no_p = float(medium.sellmeier_o.n(lp))
    ne_p = float(medium.sellmeier_e.n(lp))
    n_target = float(medium.sellmeier_o.n(ls)) * \
        (2.0 * lp / ls)  # n_p needed so k_p = 2 k_s for general carriers
    inv2 = 1.0 / n_target ** 2
    s2 = (inv2 - 1.0 / no_p ** 2) / (1.0 / ne_p ** 2 - 1.0 / no_p ** 2)
    if not (0.0 <= s2 <= 1.0):
        raise ValueError("no phase-matching angle exists for these carriers")
    return float(np.arcsin(np.sqrt(s2)))


@dataclass
class DispersionTable:
    """Precomputed k_z(q_x, q_y, Omega) for pump and down-converted fields.

    kz arrays are the real propagating part sqrt(k^2 - q^2) where k^2 >= q^2;
    kappa arrays hold the evanescent decay rate sqrt(q^2 - k^2) elsewhere
    (and zero on propagating cells).  Arrays have shape (ny, nx, nt) matching
    the spectral layout of ComplexLattice values.
    """

    kz_signal: np.ndarray
    kappa_signal: np.ndarray
    kz_pump: np.ndarray
    kappa_pump: np.ndarray
    k_signal0: float
    k_pump0: float
    dk0: float
    v_ref: float
    rho: float
    evanescent_signal: np.ndarray = field(repr=False, default=None)
    evanescent_pump: np.ndarray = field(repr=False, default=None)


def _kz_field(n_of_lambda, omega0: float, spec) -> tuple:
    """(kz, kappa) on the spectral grid for a field with carrier omega0."""
    qx = spec.qx_axis()[None, :, None]
    qy = spec.qy_axis()[:, None, None]
    om = omega0 + spec.omega_axis()[None, None, :]
    lam = 2.0 * np.pi * C_LIGHT / om
    k = n_of_lambda(lam) * om / C_LIGHT
    kz2 = k ** 2 - qx ** 2 - qy ** 2
    kz = np.sqrt(np.maximum(kz2, 0.0))
    kappa = np.sqrt(np.maximum(-kz2, 0.0))
    return kz, kappa


def build_dispersion(medium: CrystalMedium, spec) -> DispersionTable:
    """Dispersion table for the lattice's spectral axes.

    Type-I: pump extraordinary-at-cut, signal ordinary.  The reference group
    velocity of the co-moving frame is the pump's; the collinear mismatch
    dk0 = k_p0 - 2 k_s0 is derived unless overridden on the medium.
    """
    n_s = lambda lam: index(medium, lam, ORDINARY)
    n_p = lambda lam: index(medium, lam, EXTRAORDINARY_AT_CUT)
    kz_s, kap_s = _kz_field(n_s, medium.omega_signal, spec)
    kz_p, kap_p = _kz_field(n_p, medium.omega_pump, spec)
    k_s0 = float(n_s(medium.signal_center_wavelength)) * medium.omega_signal / C_LIGHT
    k_p0 = float(n_p(medium.pump_center_wavelength)) * medium.omega_pump / C_LIGHT
    if medium.collinear_mismatch is not None:
        dk0 = medium.collinear_mismatch
    else:
        dk0 = k_p0 - 2.0 * k_s0
    ng = group_index(medium, medium.pump_center_wavelength, EXTRAORDINARY_AT_CUT)
    return DispersionTable(
        kz_signal=kz_s, kappa_signal=kap_s,
        kz_pump=kz_p, kappa_pump=kap_p,
        k_signal0=k_s0, k_pump0=k_p0, dk0=float(dk0),
        v_ref=C_LIGHT / ng, rho=walkoff_angle(medium),
        evanescent_signal=kap_s > 0, evanescent_pump=kap_p > 0,
    )


def tuned_for_collinear_degeneracy(medium: CrystalMedium) -> CrystalMedium:
    """Copy of the medium with cut_angle set to the phase-matching angle."""
    return replace(medium, cut_angle=phase_matching_angle(medium))
