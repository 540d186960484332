"""Spectral model of the microring photon-pair sources.

The pair generation process inside a pumped ring resonator is modelled as the
product of three factors: the cavity field enhancement at the signal
frequency, the same at the idler frequency, and the two-pump-photon amplitude
at the sum frequency. The last factor is the self-convolution of the
intra-cavity pump field (pump line shape filtered by the pump resonance).
Waveguide dispersion is treated as flat over one free spectral range, so no
phase-matching factor appears.

All frequencies are in GHz, measured as offsets: signal and idler axes are
relative to their nominal resonances (one FSR above/below the pump), the pump
axis is relative to the pump laser. A ring's ``center_frequency`` shifts its
whole resonance comb by that offset while the pump laser stays fixed.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.signal import fftconvolve

# Pump-band sampling for the two-photon amplitude: resolve the narrower of the
# pump line and the cavity line, reach well into the Lorentzian tails, and cap
# the grid so pathological inputs cannot exhaust memory.
_PUMP_RESOLVE = 16
_PUMP_REACH = 4.0
_PUMP_MAX_POINTS = 1 << 20


@dataclass(frozen=True)
class RingParams:
    """Microring resonator: resonance offset, linewidth, and FSR, all in GHz."""

    center_frequency: float
    linewidth_fwhm: float
    fsr: float

    def __post_init__(self):
        if self.linewidth_fwhm <= 0:
            raise ValueError(f"linewidth_fwhm must be positive, got {self.linewidth_fwhm}")
        if self.fsr <= self.linewidth_fwhm:
            raise ValueError("fsr must exceed the linewidth")

    def shifted(self, detuning):
        """Copy of this ring with every resonance moved by ``detuning`` GHz."""
        return replace(self, center_frequency=self.center_frequency + detuning)


@dataclass(frozen=True)
class PumpParams:
    """Pulsed pump laser: duration (ps), linewidth (GHz), rep rate (MHz), brightness."""

    pulse_duration: float
    linewidth_fwhm: float
    rep_rate: float
    pairs_per_pulse: float

    def __post_init__(self):
        for name in ("pulse_duration", "linewidth_fwhm", "rep_rate", "pairs_per_pulse"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.pairs_per_pulse >= 0.5:
            raise ValueError("pairs_per_pulse must be well below 1 (low-gain regime)")


@dataclass(frozen=True)
class JsaGrid:
    """Discretised complex joint spectral amplitude over a signal x idler grid.

    ``magnitude_only`` marks grids imported from intensity measurements, whose
    Schmidt numbers are only lower bounds on the true mode count.
    """

    signal_freqs: np.ndarray
    idler_freqs: np.ndarray
    amplitudes: np.ndarray
    magnitude_only: bool = field(default=False)

    def __post_init__(self):
        object.__setattr__(self, "signal_freqs", np.asarray(self.signal_freqs, dtype=float))
        object.__setattr__(self, "idler_freqs", np.asarray(self.idler_freqs, dtype=float))
        object.__setattr__(self, "amplitudes", np.asarray(self.amplitudes, dtype=complex))
        if self.amplitudes.shape != (self.signal_freqs.size, self.idler_freqs.size):
            raise ValueError("amplitude array shape does not match the axes")
        for name, axis in (("signal_freqs", self.signal_freqs), ("idler_freqs", self.idler_freqs)):
            if axis.size < 2 or np.any(np.diff(axis) <= 0):
                raise ValueError(f"{name} must be strictly increasing with >= 2 points")

    def norm(self):
        """sqrt of the summed squared magnitude (1 for a normalised grid)."""
        return float(np.sqrt(np.sum(np.abs(self.amplitudes) ** 2)))

    def normalized(self):
        """Copy rescaled so the squared magnitudes sum to one."""
        n = self.norm()
        if n == 0:
            raise ValueError("cannot normalise an all-zero grid")
        return replace(self, amplitudes=self.amplitudes / n)


@dataclass(frozen=True)
class SchmidtResult:
    """Schmidt number and normalised singular values of a JSA grid."""

    schmidt_number: float
    singular_values: np.ndarray
    lower_bound: bool = False


def cavity_enhancement(ring, nu):
    """Lorentzian field response (G/2) / (G/2 + i(nu - nu0)), unity on resonance."""
    half = 0.5 * ring.linewidth_fwhm
    return half / (half + 1j * (np.asarray(nu, dtype=float) - ring.center_frequency))


def pump_envelope(pump, nu):
    """Transform-limited Gaussian pump amplitude centred on the pump resonance.

    The intensity FWHM equals ``pump.linewidth_fwhm`` and the amplitude is
    scaled so the intensity integrates to one over frequency (GHz).
    """
    w = pump.linewidth_fwhm
    peak = np.sqrt(np.sqrt(4.0 * np.log(2.0) / np.pi) / w)
    return peak * np.exp(-2.0 * np.log(2.0) * (np.asarray(nu, dtype=float) / w) ** 2)


def _two_photon_amplitude(ring, pump, sums):
    """Self-convolution of the intra-cavity pump amplitude, sampled at ``sums``.

    The intra-cavity field is the pump envelope filtered by the ring's pump
    resonance (offset by the ring's centre shift). The convolution is done on
    a uniform auxiliary grid and interpolated at the requested sum frequencies.
    """
    w = pump.linewidth_fwhm
    g = ring.linewidth_fwhm
    pad = abs(ring.center_frequency)
    half = _PUMP_REACH * (w + g) + pad
    step = min(w, g) / _PUMP_RESOLVE
    n = int(np.ceil(2.0 * half / step)) + 1
    n = min(n, _PUMP_MAX_POINTS)
    nu = np.linspace(-half, half, n)
    du = nu[1] - nu[0]
    intracavity = cavity_enhancement(ring, nu) * pump_envelope(pump, nu)
    conv = fftconvolve(intracavity, intracavity) * du
    conv_axis = np.linspace(-2.0 * half, 2.0 * half, 2 * n - 1)
    sums = np.asarray(sums, dtype=float)
    re = np.interp(sums, conv_axis, conv.real, left=0.0, right=0.0)
    im = np.interp(sums, conv_axis, conv.imag, left=0.0, right=0.0)
    return re + 1j * im


def compute_jsa(ring, pump, grid_half_width=None, n_points=64, pump_broadening=1.0):
    """Model joint spectral amplitude of one ring on an n x n grid.

    The grid spans +/- grid_half_width GHz around the nominal signal and idler
    resonances (default three cavity linewidths, capturing the bulk of the
    Lorentzian energy). The returned grid is normalised.

    ``pump_broadening`` scales the effective pump linewidth; real devices show
    somewhat wider joint spectra than the linear model (self-phase modulation
    in the cavity), and this knob lets users match that empirically.
    """
    if n_points < 16:
        raise ValueError("n_points must be at least 16")
    if grid_half_width is None:
        grid_half_width = 3.0 * ring.linewidth_fwhm
    if grid_half_width <= 0:
        raise ValueError("grid_half_width must be positive")
    if pump_broadening <= 0:
        raise ValueError("pump_broadening must be positive")
    if pump_broadening != 1.0:
        pump = replace(pump, linewidth_fwhm=pump.linewidth_fwhm * pump_broadening)

    axis = np.linspace(-grid_half_width, grid_half_width, n_points)
    # Sums x_i + y_j live on a uniform grid of 2n-1 points when both axes are
    # the same linspace; evaluate the two-photon amplitude once per sum value.
    sums = np.linspace(-2.0 * grid_half_width, 2.0 * grid_half_width, 2 * n_points - 1)
    a2 = _two_photon_amplitude(ring, pump, sums)
    ls = cavity_enhancement(ring, axis)
    li = cavity_enhancement(ring, axis)
    idx = np.arange(n_points)
    amplitudes = ls[:, None] * li[None, :] * a2[idx[:, None] + idx[None, :]]
    grid = JsaGrid(axis, axis.copy(), amplitudes)
    return grid.normalized()


def schmidt_decompose(jsa):
    """Singular value decomposition of the amplitude grid.

    Returns the Schmidt number K = 1 / sum(lambda^4) where lambda are the
    singular values normalised to unit squared sum. K = 1 means the grid is
    separable (rank one); magnitude-only grids yield lower bounds.
    """
    total = jsa.norm()
    if total == 0:
        raise ValueError("all-zero grid has no Schmidt decomposition")
    svals = np.linalg.svd(jsa.amplitudes, compute_uv=False)
    svals = svals / np.sqrt(np.sum(svals**2))
    k = 1.0 / float(np.sum(svals**4))
    return SchmidtResult(k, svals, lower_bound=jsa.magnitude_only)


def hom_visibility(schmidt):
    """1/K, the triggered Hong-Ou-Mandel dip visibility of the source."""
    return 1.0 / schmidt.schmidt_number


def _check_same_axes(a, b):
    if a.signal_freqs.shape != b.signal_freqs.shape or a.idler_freqs.shape != b.idler_freqs.shape:
        raise ValueError("grids have different shapes")
    if not (np.allclose(a.signal_freqs, b.signal_freqs, rtol=0, atol=1e-9)
            and np.allclose(a.idler_freqs, b.idler_freqs, rtol=0, atol=1e-9)):
        raise ValueError("grids are sampled on different axes")


def jsa_overlap(a, b):
    """Normalised inner product sum(conj(a) * b) of two grids on the same axes.

    Complex valued; |sigma| = 1 iff the grids agree up to a global phase.
    """
    _check_same_axes(a, b)
    na, nb = a.norm(), b.norm()
    if na == 0 or nb == 0:
        raise ValueError("overlap with an all-zero grid is undefined")
    return complex(np.sum(a.amplitudes.conj() * b.amplitudes) / (na * nb))


def jsd_overlap(a, b):
    """Overlap of the magnitudes, sum(|a| * |b|), insensitive to phase.

    This is the statistic available from intensity-only joint spectra; it
    upper-bounds |jsa_overlap| of the same grids.
    """
    _check_same_axes(a, b)
    na, nb = a.norm(), b.norm()
    if na == 0 or nb == 0:
        raise ValueError("overlap with an all-zero grid is undefined")
    return float(np.sum(np.abs(a.amplitudes) * np.abs(b.amplitudes)) / (na * nb))


@dataclass(frozen=True)
class SweepPoint:
    """One detuning-sweep sample: detuning (GHz), |sigma|, predicted visibility."""

    detuning: float
    sigma_mag: float
    visibility: float


def detuning_sweep(ring_a, ring_b, pump, detunings, background_floor,
                   beta=0.5, ceiling=1.0, n_points=64):
    """Overlap and fringe visibility as ring_a is swept over ring_b.

    For each detuning d, ring_a's resonances shift by d and the overlap
    |sigma(d)| with ring_b is evaluated on a grid wide enough to contain both
    combs. The predicted visibility is

        V(d) = max(ceiling * 2 sqrt(beta (1-beta)) * |sigma(d)|, background_floor)

    where ``ceiling`` (default 1, the ideal case) caps the observable
    visibility to account for multi-pair background.
    """
    detunings = np.asarray(detunings, dtype=float)
    if detunings.size and not np.all(np.isfinite(detunings)):
        raise ValueError("detunings must be finite")
    gmax = max(ring_a.linewidth_fwhm, ring_b.linewidth_fwhm)
    span = max(
        abs(ring_a.center_frequency) + (abs(detunings).max() if detunings.size else 0.0),
        abs(ring_b.center_frequency),
    )
    half_width = 3.0 * gmax + span
    n_eff = int(min(max(n_points, np.ceil(n_points * half_width / (3.0 * gmax))), 512))

    v_ideal = 2.0 * np.sqrt(beta * (1.0 - beta))
    ref = compute_jsa(ring_b, pump, half_width, n_eff)
    points = []
    for d in detunings:
        shifted = compute_jsa(ring_a.shifted(d), pump, half_width, n_eff)
        sigma_mag = abs(jsa_overlap(ref, shifted))
        vis = max(ceiling * v_ideal * sigma_mag, background_floor)
        points.append(SweepPoint(float(d), sigma_mag, vis))
    return points


def jsa_to_csv(jsa, path):
    """Write the grid as rows (nu_signal, nu_idler, re, im), signal-major."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["nu_signal_ghz", "nu_idler_ghz", "re", "im"])
        for i, ns in enumerate(jsa.signal_freqs):
            for j, ni in enumerate(jsa.idler_freqs):
                a = jsa.amplitudes[i, j]
                writer.writerow([f"{ns:.9g}", f"{ni:.9g}", f"{a.real:.12g}", f"{a.imag:.12g}"])


def jsa_from_csv(path):
    """Read a grid written by jsa_to_csv, or a magnitude-only grid.

    Accepts either (nu_signal, nu_idler, re, im) columns or a three-column
    (nu_signal, nu_idler, magnitude) layout from intensity measurements; the
    latter sets the magnitude_only flag. The grid is normalised on load.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [row for row in reader if row]
    ncols = len(header)
    if ncols not in (3, 4):
        raise ValueError(f"expected 3 or 4 columns, got {ncols}")
    data = np.asarray(rows, dtype=float)
    signal = np.unique(data[:, 0])
    idler = np.unique(data[:, 1])
    if data.shape[0] != signal.size * idler.size:
        raise ValueError("grid rows do not form a complete signal x idler product")
    amps = np.zeros((signal.size, idler.size), dtype=complex)
    si = np.searchsorted(signal, data[:, 0])
    ii = np.searchsorted(idler, data[:, 1])
    if ncols == 4:
        amps[si, ii] = data[:, 2] + 1j * data[:, 3]
        magnitude_only = False
    else:
        amps[si, ii] = np.abs(data[:, 2])
        magnitude_only = True
    return JsaGrid(signal, idler, amps, magnitude_only=magnitude_only).normalized()


def jsa_to_json(jsa):
    """JSON-ready dict: axes plus row-major re/im arrays."""
    return {
        "signal_freqs_ghz": jsa.signal_freqs.tolist(),
        "idler_freqs_ghz": jsa.idler_freqs.tolist(),
        "re": jsa.amplitudes.real.tolist(),
        "im": jsa.amplitudes.imag.tolist(),
        "magnitude_only": jsa.magnitude_only,
    }


def jsa_from_json(obj):
    """Inverse of jsa_to_json; normalises on load."""
    amps = np.asarray(obj["re"], dtype=float) + 1j * np.asarray(obj["im"], dtype=float)
    grid = JsaGrid(
        obj["signal_freqs_ghz"], obj["idler_freqs_ghz"], amps,
        magnitude_only=bool(obj.get("magnitude_only", False)),
    )
    return grid.normalized()


def save_jsa_json(jsa, path):
    with open(path, "w") as fh:
        json.dump(jsa_to_json(jsa), fh, sort_keys=True, indent=1)


def load_jsa_json(path):
    with open(path) as fh:
        return jsa_from_json(json.load(fh))
