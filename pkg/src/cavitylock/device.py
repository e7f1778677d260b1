"""Charge/flux-tunable cavity model built on the CPT ground band.

The Cooper-pair-transistor island is diagonalized in the charge basis: the
Hamiltonian is symmetric tridiagonal with diagonal 4*E_c*(N - n_g/2)**2 and
off-diagonal E_J(phi_ext).  The ground-band curvature with respect to the
phase conjugate to the external flux sets the inverse Josephson inductance,
and a calibrated map turns that curvature into the resonant-frequency
surface omega0(n_g, phi_ext).

Energies are in Hz (E/h); flux is in units of the flux quantum; all
angular frequencies are rad/s.  The flux-to-phase conversion constant is
folded into the surface calibration, so inverse inductance is carried in
Hz per flux-quantum squared.

All functions here are pure; the surface calibration is memoized on the
parameter values.
"""
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh_tridiagonal
from scipy.optimize import brentq

from .errors import CalibrationError, ConfigurationError, DomainError, NumericalAccuracyError

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class BiasPoint:
    """Gate polarization number and external flux (units of Phi0)."""

    n_g: float
    phi_ext: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.n_g) and math.isfinite(self.phi_ext)):
            raise DomainError(f"non-finite bias point ({self.n_g}, {self.phi_ext})")

    def reduced(self):
        """Canonical representative: n_g in [-1, 1), phi_ext in [-0.5, 0.5).

        Charge states shift by whole Cooper pairs (period 2 in n_g) and the
        flux bias is 1-periodic.
        """
        ng = math.fmod(self.n_g + 1.0, 2.0)
        if ng < 0.0:
            ng += 2.0
        phi = math.fmod(self.phi_ext + 0.5, 1.0)
        if phi < 0.0:
            phi += 1.0
        return BiasPoint(ng - 1.0, phi - 0.5)

    def shifted(self, dn=0.0, dphi=0.0):
        return BiasPoint(self.n_g + dn, self.phi_ext + dphi)


@dataclass(frozen=True)
class CptParams:
    """Island charging/Josephson energies (Hz) and charge-basis truncation."""

    e_c: float = 10e9
    e_j0: float = 6e9
    n_trunc: int = 12

    def __post_init__(self):
        if not (self.e_c > 0 and self.e_j0 > 0):
            raise ConfigurationError("E_c and E_J0 must be positive")
        if self.n_trunc < 2:
            raise ConfigurationError(f"n_trunc must be >= 2, got {self.n_trunc}")


def josephson_energy(phi_ext, cpt):
    """Effective junction coupling E_J(phi_ext) = E_J0*|cos(pi*phi)| in Hz.

    Symmetric-SQUID form; the spectrum only depends on |E_J|.
    """
    return cpt.e_j0 * abs(math.cos(math.pi * phi_ext))


def _tridiagonal(bias, cpt):
    n = np.arange(-cpt.n_trunc, cpt.n_trunc + 1)
    diag = 4.0 * cpt.e_c * (n - bias.n_g / 2.0) ** 2
    off = np.full(2 * cpt.n_trunc, josephson_energy(bias.phi_ext, cpt))
    return diag, off


def cpt_ground_energy(bias, cpt):
    """Lowest eigenvalue (Hz) of the charge-basis CPT Hamiltonian."""
    if not isinstance(bias, BiasPoint):
        bias = BiasPoint(*bias)
    diag, off = _tridiagonal(bias, cpt)
    w = eigh_tridiagonal(diag, off, select="i", select_range=(0, 0), eigvals_only=True)
    return float(w[0])


def _ground_solution(bias, cpt):
    diag, off = _tridiagonal(bias, cpt)
    w, v = eigh_tridiagonal(diag, off)
    return w, v


def _invl_exact(bias, cpt):
    """Exact d2E0/dphi_ext2 via first/second-order perturbation sums.

    With H = D + E_J(phi)*T (T the 0/1 tridiagonal pattern),
    E0'' = E_J''*<0|T|0> + 2*E_J'^2 * sum_m |<m|T|0>|^2/(E0-Em),
    exact at machine precision; used for the resonance surface where the
    finite-difference route would be limited by eigensolver noise.
    """
    w, v = _ground_solution(bias, cpt)
    g = v[:, 0]
    tg = np.zeros_like(g)
    tg[:-1] += g[1:]
    tg[1:] += g[:-1]
    c = math.cos(math.pi * bias.phi_ext)
    sgn = 1.0 if c >= 0 else -1.0
    ejp = -math.pi * cpt.e_j0 * math.sin(math.pi * bias.phi_ext) * sgn
    ejpp = -math.pi ** 2 * cpt.e_j0 * abs(c)
    t00 = float(g @ tg)
    amps = v[:, 1:].T @ tg
    gaps = w[0] - w[1:]
    s2 = 2.0 * float(np.sum(amps ** 2 / gaps))
    return ejpp * t00 + ejp ** 2 * s2


def josephson_inductance_inv(bias, cpt, step=3e-4, rel_tol=1e-5):
    """Inverse Josephson inductance as the ground-band flux curvature.

    Central second finite difference of :func:`cpt_ground_energy` with one
    Richardson halving.  Units: Hz per flux-quantum squared (the conversion
    to henries is absorbed by the surface calibration).

    Raises NumericalAccuracyError when halving the step moves the estimate
    by more than ``rel_tol`` relative (typically right at a band
    degeneracy, e.g. odd n_g with phi_ext near +-0.5); the error carries
    both estimates.
    """
    if not isinstance(bias, BiasPoint):
        bias = BiasPoint(*bias)

    def d2(h):
        ep = cpt_ground_energy(bias.shifted(dphi=h), cpt)
        e0 = cpt_ground_energy(bias, cpt)
        em = cpt_ground_energy(bias.shifted(dphi=-h), cpt)
        return (ep - 2.0 * e0 + em) / h ** 2

    coarse = d2(step)
    fine = d2(step / 2.0)
    rich = (4.0 * fine - coarse) / 3.0
    scale = max(abs(rich), abs(coarse), 1e-12 * cpt.e_c)
    if abs(fine - coarse) > rel_tol * scale:
        raise NumericalAccuracyError(
            "flux-curvature finite difference did not converge at "
            f"bias ({bias.n_g}, {bias.phi_ext}): D2(h)={coarse:.6e}, "
            f"D2(h/2)={fine:.6e}",
            estimates=(coarse, fine),
        )
    return rich


@dataclass(frozen=True)
class TunabilityModel:
    """Map from ground-band curvature to the resonance surface.

    ``kind="saturating"`` (default) uses
        omega0 = anchor - chi * D**2 / (1 + s_plus*max(D,0) + s_minus*max(-D,0)),
    with D the curvature deviation from its (0,0) value, normalized by that
    value.  The three parameters are calibrated against ``span`` (full
    surface tunability), ``gate_slope`` (d omega0/d n_g at ``slope_bias``)
    and ``flux_share`` (depth of the curvature-deficit side relative to the
    span).  The map is peaked at the (0,0) curvature: the band curvature
    grows toward charge degeneracy but shrinks toward flux frustration, so
    no monotone function of it can put the surface maximum at (0,0).

    ``kind="linear"`` is the plain first-order participation form
    omega0 = anchor - chi*D; it reproduces the gate axis but tunes the
    wrong way with flux, and is kept for comparison only.
    """

    kind: str = "saturating"
    span: float = TWO_PI * 140e6
    gate_slope: float = -TWO_PI * 4e6 / 0.022
    slope_bias: tuple = (0.6, 0.0)
    flux_share: float = 0.6

    def __post_init__(self):
        if self.kind not in ("saturating", "linear"):
            raise ConfigurationError(f"unknown tunability model kind {self.kind!r}")
        if self.span <= 0:
            raise ConfigurationError("tunability span must be positive")


@dataclass(frozen=True)
class CavityParams:
    """Everything needed to evaluate omega0(bias) and the sideband response."""

    omega_bare: float = TWO_PI * 5.757e9
    kappa_int: float = TWO_PI * 0.3e6
    kappa_ext: float = TWO_PI * 0.97e6
    # softening Kerr, sized so the shift reaches ~0.8 linewidths at ten
    # photons while staying below the bistability bifurcation there
    kerr_k: float = -TWO_PI * 0.1e6
    cpt: CptParams = field(default_factory=CptParams)
    tunability: TunabilityModel = field(default_factory=TunabilityModel)

    def __post_init__(self):
        if self.kappa_int < 0 or self.kappa_ext <= 0:
            raise ConfigurationError("need kappa_int >= 0 and kappa_ext > 0")

    @property
    def kappa_tot(self):
        return self.kappa_int + self.kappa_ext


@dataclass(frozen=True)
class SurfaceCalibration:
    """Fitted map parameters; attached to CavityParams via the cache."""

    invl_ref: float
    chi: float
    s_plus: float
    s_minus: float
    anchor: float
    span: float
    kind: str

    def h(self, dev):
        dev = np.asarray(dev, dtype=float)
        if self.kind == "linear":
            return dev
        den = 1.0 + self.s_plus * np.maximum(dev, 0.0) + self.s_minus * np.maximum(-dev, 0.0)
        return dev * dev / den

    def omega0_from_invl(self, invl):
        dev = (np.asarray(invl, dtype=float) - self.invl_ref) / abs(self.invl_ref)
        return self.anchor - self.chi * self.h(dev)


_CAL_CACHE = {}

# calibration grid; the half-open flux range avoids the band-degeneracy
# cusp at (odd n_g, phi = +-0.5) where the curvature is not defined
_CAL_NG = np.linspace(-1.0, 1.0, 81)
_CAL_PHI = np.linspace(-0.48, 0.48, 49)


def _cal_key(cav):
    t = cav.tunability
    return (cav.omega_bare, cav.cpt.e_c, cav.cpt.e_j0, cav.cpt.n_trunc,
            t.kind, t.span, t.gate_slope, t.slope_bias, t.flux_share)


def calibrate_tunability(cav):
    """Fit the tunability map for these device parameters (memoized).

    Raises CalibrationError when the requested span/slope combination is
    not reachable for the given CPT energies.
    """
    key = _cal_key(cav)
    cal = _CAL_CACHE.get(key)
    if cal is not None:
        return cal

    cpt = cav.cpt
    t = cav.tunability
    ref = _invl_exact(BiasPoint(0.0, 0.0), cpt)
    grid = np.array([[_invl_exact(BiasPoint(ng, phi), cpt) for phi in _CAL_PHI]
                     for ng in _CAL_NG])
    dev = (grid - ref) / abs(ref)

    if t.kind == "linear":
        # two-parameter form: scale to the span, anchor centered on bare
        chi = t.span / (dev.max() - dev.min())
        anchor = cav.omega_bare + t.span / 2.0 + chi * dev.min()
        cal = SurfaceCalibration(ref, chi, 0.0, 0.0, anchor, t.span, "linear")
        _CAL_CACHE[key] = cal
        return cal

    nb, pb = t.slope_bias
    h_fd = 1e-3
    d06 = (_invl_exact(BiasPoint(nb, pb), cpt) - ref) / abs(ref)
    dprime = (_invl_exact(BiasPoint(nb + h_fd, pb), cpt)
              - _invl_exact(BiasPoint(nb - h_fd, pb), cpt)) / (2.0 * h_fd * abs(ref))
    dev_pos = np.maximum(dev, 0.0)
    dev_neg = np.minimum(dev, 0.0)

    def h_pos_max(sp):
        return float(np.max(dev_pos ** 2 / (1.0 + sp * dev_pos)))

    def slope_ratio(sp):
        hp = d06 * (2.0 + sp * d06) / (1.0 + sp * d06) ** 2
        return hp * dprime / h_pos_max(sp)

    target_ratio = abs(t.gate_slope) / t.span
    lo, hi = 0.0, 200.0
    f_lo = slope_ratio(lo) - target_ratio
    f_hi = slope_ratio(hi) - target_ratio
    if f_lo * f_hi > 0:
        raise CalibrationError(
            "tunability calibration infeasible: slope/span ratio "
            f"{target_ratio:.3f} per unit n_g not reachable for "
            f"E_J0/E_c = {cpt.e_j0 / cpt.e_c:.3f} "
            f"(reachable range ~ [{slope_ratio(lo):.3f}, {slope_ratio(hi):.3f}])")
    s_plus = brentq(lambda s: slope_ratio(s) - target_ratio, lo, hi, xtol=1e-10)
    chi = t.span / h_pos_max(s_plus)

    flux_target = t.flux_share * t.span

    def flux_depth(sm):
        return chi * float(np.max(dev_neg ** 2 / (1.0 + sm * (-dev_neg))))

    if flux_depth(0.0) <= flux_target:
        s_minus = 0.0
    else:
        s_minus = brentq(lambda s: flux_depth(s) - flux_target, 0.0, 1e4, xtol=1e-10)

    anchor = cav.omega_bare + t.span / 2.0
    cal = SurfaceCalibration(ref, chi, s_plus, s_minus, anchor, t.span, "saturating")

    # sanity: peak must sit at the reference deviation, i.e. at (0,0)
    surf = cal.omega0_from_invl(grid)
    i0 = np.argmin(np.abs(_CAL_NG))
    j0 = np.argmin(np.abs(_CAL_PHI))
    if surf.max() > surf[i0, j0] + 1e-3:
        raise CalibrationError("calibrated surface maximum moved away from (0,0)")
    _CAL_CACHE[key] = cal
    return cal


def _parity_bias(bias, parity):
    if parity == "even":
        return bias
    if parity == "odd":
        # one unpaired electron shifts the island charge by 1e
        return BiasPoint(bias.n_g - 1.0, bias.phi_ext)
    raise ConfigurationError(f"parity must be 'even' or 'odd', got {parity!r}")


def resonant_frequency(bias, cav, parity="even"):
    """Resonance omega0 (rad/s) at a bias point, for either parity band."""
    if not isinstance(bias, BiasPoint):
        bias = BiasPoint(*bias)
    cal = calibrate_tunability(cav)
    b = _parity_bias(bias, parity).reduced()
    invl = _invl_exact(b, cav.cpt)
    return float(cal.omega0_from_invl(invl))


def coupling_coefficient(bias, cav, which="gate", parity="even", step=1e-4):
    """d omega0 / d bias along one axis, by central finite difference.

    Returns rad/s per unit n_g (which="gate") or rad/s per Phi0
    (which="flux").
    """
    if not isinstance(bias, BiasPoint):
        bias = BiasPoint(*bias)
    if which == "gate":
        hi = resonant_frequency(bias.shifted(dn=step), cav, parity)
        lo = resonant_frequency(bias.shifted(dn=-step), cav, parity)
    elif which == "flux":
        hi = resonant_frequency(bias.shifted(dphi=step), cav, parity)
        lo = resonant_frequency(bias.shifted(dphi=-step), cav, parity)
    else:
        raise ConfigurationError(f"which must be 'gate' or 'flux', got {which!r}")
    return (hi - lo) / (2.0 * step)


class FrequencyLookup:
    """Dense gate-axis tables of omega0 for both parity bands.

    The closed-loop engine needs omega0 at every controller step; direct
    eigensolves would dominate the runtime, so both parity bands are
    tabulated once on a uniform n_g grid (at the run's base flux) and
    linearly interpolated.  Flux noise enters to first order through the
    local flux coupling.
    """

    def __init__(self, cav, phi_ext=0.0, n_points=4001):
        cal = calibrate_tunability(cav)
        ng = np.linspace(-1.0, 1.0, n_points)
        invl = np.array([_invl_exact(BiasPoint(g, phi_ext), cav.cpt) for g in ng])
        even = cal.omega0_from_invl(invl)
        # odd band = even band sampled one electron over; same table shifted
        self.ng0 = float(ng[0])
        self.inv_dn = (n_points - 1) / 2.0
        self.even = even
        # plain-float copy: scalar lookups in the loop engine stay unboxed
        self._tab = even.tolist()
        self.n_points = n_points
        self.phi_ext = phi_ext

    def omega0(self, n_g, parity_odd=False):
        x = n_g - 1.0 if parity_odd else n_g
        x = math.fmod(x + 1.0, 2.0)
        if x < 0.0:
            x += 2.0
        x -= 1.0
        pos = (x - self.ng0) * self.inv_dn
        i = int(pos)
        if i >= self.n_points - 1:
            i = self.n_points - 2
        frac = pos - i
        tab = self._tab
        return tab[i] * (1.0 - frac) + tab[i + 1] * frac

    def max_interp_error(self, cav, samples=200, seed=5):
        rng = np.random.default_rng(seed)
        ngs = rng.uniform(-1, 1, samples)
        errs = [abs(self.omega0(g) - resonant_frequency(BiasPoint(g, self.phi_ext), cav))
                for g in ngs]
        return max(errs)


def device_sweep(cav, ng_values, phi_values, parity="even"):
    """Resonance and coupling grids for CSV export.

    Returns an array of rows (n_g, phi_ext, omega0_Hz, g_gate_Hz, g_flux_Hz).
    """
    rows = []
    for ng in ng_values:
        for phi in phi_values:
            b = BiasPoint(float(ng), float(phi))
            w0 = resonant_frequency(b, cav, parity)
            gg = coupling_coefficient(b, cav, "gate", parity)
            gf = coupling_coefficient(b, cav, "flux", parity)
            rows.append((b.n_g, b.phi_ext, w0 / TWO_PI, gg / TWO_PI, gf / TWO_PI))
    return np.array(rows)
