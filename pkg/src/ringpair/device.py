"""Chip model: two-qubit state preparation, analysis optics, and photon counting.

The prepared state is parametrised by the source balance beta, the spectral
overlap sigma, and the pair phase theta. Measurement settings are the four
on-chip phases (theta_sy, theta_sz, theta_iy, theta_iz); each qubit's
analysis unitary is an MZI rotation about Y preceded by a Z phase. Counting
folds in arm transmission, detector efficiency, and a flat accidental
background set by a coincidence-to-accidental ratio.
"""

from __future__ import annotations

import configparser
import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import qstate


@dataclass(frozen=True)
class StateParams:
    """Pair-superposition parameters: balance, overlap, and total phase.

    ``sigma`` may be passed complex; its phase is folded into ``theta`` at
    construction so the stored overlap is a real magnitude.
    """

    beta: float
    sigma: float
    theta: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError(f"beta must be in [0, 1], got {self.beta}")
        s = complex(self.sigma)
        mag = abs(s)
        if mag > 1.0 + 1e-12:
            raise ValueError(f"|sigma| = {mag} exceeds 1 (state would not be PSD)")
        object.__setattr__(self, "sigma", min(mag, 1.0))
        object.__setattr__(self, "theta", float(self.theta) - math.atan2(s.imag, s.real))


@dataclass(frozen=True)
class DeviceConfig:
    """Passive-optics and counting parameters of the chip.

    Coupler reflectivities are power splitting ratios; 0.5 reproduces ideal
    rotations. ``car`` is the coincidence-to-accidental ratio of the flat
    background model (math.inf disables accidentals).
    """

    first_coupler_reflectivity: float = 0.5
    signal_coupler_in: float = 0.5
    signal_coupler_out: float = 0.5
    idler_coupler_in: float = 0.5
    idler_coupler_out: float = 0.5
    filter_bandwidth: float = 35.0
    filter_selectivity_db: float = 22.0
    filter_fsr: float = 640.0
    per_arm_transmission: float = 1.0
    detector_efficiency: float = 1.0
    rep_rate: float = 51.0
    car: float = 10.0

    def __post_init__(self):
        for name in ("first_coupler_reflectivity", "signal_coupler_in", "signal_coupler_out",
                     "idler_coupler_in", "idler_coupler_out", "per_arm_transmission",
                     "detector_efficiency"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        if self.filter_selectivity_db < 0:
            raise ValueError("filter_selectivity_db must be >= 0")
        if self.car <= 0:
            raise ValueError("car must be positive (use math.inf for no accidentals)")


@dataclass(frozen=True)
class MeasurementSetting:
    """One projective configuration of the four analysis phases (radians)."""

    theta_sy: float = 0.0
    theta_sz: float = 0.0
    theta_iy: float = 0.0
    theta_iz: float = 0.0


@dataclass(frozen=True)
class CountRecord:
    """Simulated counts for one setting: four port-pair coincidences plus background."""

    setting: MeasurementSetting
    coincidences: np.ndarray
    accidentals_estimate: float
    integration_time: float

    def __post_init__(self):
        counts = np.asarray(self.coincidences, dtype=float)
        if counts.shape != (4,) or np.any(counts < 0):
            raise ValueError("coincidences must be four non-negative counts")
        object.__setattr__(self, "coincidences", counts)


def build_state(params):
    """Density matrix of the pair superposition.

    Diagonal (beta, 0, 0, 1-beta) with |00><11| coherence
    exp(-i theta) sqrt(beta (1-beta)) sigma. The output satisfies the
    density-matrix validator for any admissible parameters.
    """
    beta, sigma, theta = params.beta, params.sigma, params.theta
    coherence = np.exp(-1j * theta) * math.sqrt(beta * (1.0 - beta)) * sigma
    rho = np.zeros((4, 4), dtype=complex)
    rho[0, 0] = beta
    rho[3, 3] = 1.0 - beta
    rho[0, 3] = coherence
    rho[3, 0] = np.conj(coherence)
    return qstate.validate_density_matrix(rho)


def balance_from_brightness(mu_top, mu_bottom, coupler_reflectivity, weighting="quadratic"):
    """Source balance from per-pulse pair rates and the pump-splitting coupler.

    The coupler sends fraction r of the pump power to the top source. With
    pair generation quadratic in pump power (the default weighting), the
    balance is r^2 mu_t / (r^2 mu_t + (1-r)^2 mu_b). ``weighting`` may also
    be "linear" (weights r, 1-r) or "none" (raw brightness ratio); the
    alternatives exist because the measured-balance accounting of real
    devices is not uniquely pinned by these three numbers.
    """
    if mu_top < 0 or mu_bottom < 0 or mu_top + mu_bottom == 0:
        raise ValueError("pair rates must be non-negative and not both zero")
    r = coupler_reflectivity
    if weighting == "quadratic":
        wt, wb = r * r, (1.0 - r) ** 2
    elif weighting == "linear":
        wt, wb = r, 1.0 - r
    elif weighting == "none":
        wt, wb = 1.0, 1.0
    else:
        raise ValueError(f"unknown weighting {weighting!r}")
    top = wt * mu_top
    bottom = wb * mu_bottom
    if top + bottom == 0:
        raise ValueError("weighted rates are both zero")
    return top / (top + bottom)


def rz(theta):
    """Relative-phase rotation diag(1, exp(i theta))."""
    return np.array([[1.0, 0.0], [0.0, np.exp(1j * theta)]], dtype=complex)


def ry(theta):
    """Real rotation [[cos t/2, -sin t/2], [sin t/2, cos t/2]]."""
    c, s = math.cos(theta / 2.0), math.sin(theta / 2.0)
    return np.array([[c, -s], [s, c]], dtype=complex)


def coupler(reflectivity):
    """Directional coupler as a real rotation with power splitting ratio r."""
    r = math.sqrt(reflectivity)
    t = math.sqrt(1.0 - reflectivity)
    return np.array([[r, -t], [t, r]], dtype=complex)


_SWAP_PORTS = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
_CAL_OUT = np.diag([1.0, 1j])
_CAL_IN = np.diag([1.0, 1j])


def mzi_transfer(theta, r_in=0.5, r_out=0.5):
    """Calibrated Mach-Zehnder transfer: coupler, phase theta, coupler.

    The raw coupler-phase-coupler product carries fixed phase offsets and a
    port ordering that the on-chip calibration absorbs; with those folded in,
    50:50 couplers reproduce ry(theta) exactly. Imbalanced couplers reduce
    the interferometer extinction but keep the transfer unitary.
    """
    raw = coupler(r_out) @ np.diag([1.0, np.exp(1j * theta)]) @ coupler(r_in)
    return np.exp(-0.5j * theta) * (_CAL_OUT @ _SWAP_PORTS @ raw @ _CAL_IN)


def analysis_unitary(setting, config=None):
    """Two-qubit analysis unitary (signal MZI x idler MZI, each after a Z phase)."""
    if config is None:
        us = ry(setting.theta_sy)
        ui = ry(setting.theta_iy)
    else:
        us = mzi_transfer(setting.theta_sy, config.signal_coupler_in, config.signal_coupler_out)
        ui = mzi_transfer(setting.theta_iy, config.idler_coupler_in, config.idler_coupler_out)
    return np.kron(us @ rz(setting.theta_sz), ui @ rz(setting.theta_iz))


def measurement_probabilities(rho, setting, config=None):
    """Probabilities of the four coincidence port pairs for one setting.

    Applies the analysis unitary and reads the diagonal; the result sums to
    one. With ideal (or default) couplers the rotations are exactly
    ry(theta_y) rz(theta_z) on each qubit.
    """
    u = analysis_unitary(setting, config)
    probs = np.real(np.diag(u @ rho @ u.conj().T))
    return np.clip(probs, 0.0, None)


def coincidence_rate(config, pump):
    """Detected coincidence rate (1/s) before port splitting: pairs per second
    times both arms' transmission and both detectors' efficiency."""
    pairs_per_s = config.rep_rate * 1e6 * pump.pairs_per_pulse
    return pairs_per_s * config.per_arm_transmission**2 * config.detector_efficiency**2


def required_arm_transmission(config, pump, target_cps):
    """Per-arm transmission that would yield ``target_cps`` detected coincidences."""
    pairs_per_s = config.rep_rate * 1e6 * pump.pairs_per_pulse
    base = pairs_per_s * config.detector_efficiency**2
    if base <= 0:
        raise ValueError("zero base rate; check rep rate, brightness, and efficiency")
    return math.sqrt(target_cps / base)


def simulate_counts(rho, setting, config, pump, integration_time, rng_seed):
    """Draw Poisson coincidence counts for one setting.

    Per-port expectation is the detected coincidence rate times the port
    probability and the integration time; a flat accidental background of
    total rate (true rate / car) is spread evenly over the four port pairs.
    Deterministic for a fixed seed.
    """
    if integration_time < 0:
        raise ValueError("integration_time must be non-negative")
    probs = measurement_probabilities(rho, setting, config)
    rate = coincidence_rate(config, pump)
    accidental_rate = 0.0 if math.isinf(config.car) else rate / config.car
    expected = rate * probs * integration_time + accidental_rate * integration_time / 4.0
    rng = np.random.default_rng(rng_seed)
    counts = rng.poisson(expected)
    return CountRecord(
        setting=setting,
        coincidences=counts.astype(float),
        accidentals_estimate=accidental_rate * integration_time,
        integration_time=float(integration_time),
    )


def filter_transmission(config, nu_offset):
    """Power transmission of the pump-rejection filter at an offset from its peak.

    A Lorentzian passband of FWHM ``filter_bandwidth`` repeats every
    ``filter_fsr``; between peaks the transmission floors at the filter's
    selectivity (-selectivity_db).
    """
    nu = np.asarray(nu_offset, dtype=float)
    folded = (nu + 0.5 * config.filter_fsr) % config.filter_fsr - 0.5 * config.filter_fsr
    half = 0.5 * config.filter_bandwidth
    lineshape = half**2 / (half**2 + folded**2)
    floor = 10.0 ** (-config.filter_selectivity_db / 10.0)
    out = np.maximum(lineshape, floor)
    return float(out) if np.isscalar(nu_offset) else out


def records_to_csv(records, path):
    """Write count records as CSV with one row per setting."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["theta_sy", "theta_sz", "theta_iy", "theta_iz",
                         "c00", "c01", "c10", "c11", "t", "accidentals"])
        for rec in records:
            s = rec.setting
            writer.writerow(
                [f"{s.theta_sy:.12g}", f"{s.theta_sz:.12g}",
                 f"{s.theta_iy:.12g}", f"{s.theta_iz:.12g}"]
                + [f"{c:.12g}" for c in rec.coincidences]
                + [f"{rec.integration_time:.12g}", f"{rec.accidentals_estimate:.12g}"]
            )


def records_from_csv(path):
    """Read count records written by records_to_csv (accidentals column optional)."""
    records = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            setting = MeasurementSetting(
                float(row["theta_sy"]), float(row["theta_sz"]),
                float(row["theta_iy"]), float(row["theta_iz"]),
            )
            counts = [float(row[k]) for k in ("c00", "c01", "c10", "c11")]
            records.append(CountRecord(
                setting=setting,
                coincidences=np.asarray(counts),
                accidentals_estimate=float(row.get("accidentals", 0.0) or 0.0),
                integration_time=float(row["t"]),
            ))
    return records


def load_device_config(path):
    """Build a DeviceConfig from an INI-style file with nested sections.

    Recognised sections and keys:
        [couplers] first_reflectivity, signal_in, signal_out, idler_in, idler_out
        [filters] bandwidth_ghz, selectivity_db, fsr_ghz
        [detectors] efficiency
        [counting] per_arm_transmission, car, rep_rate_mhz
    Missing keys fall back to the DeviceConfig defaults.
    """
    parser = configparser.ConfigParser()
    with open(path) as fh:
        parser.read_file(fh)
    return device_config_from_mapping(
        {section: dict(parser[section]) for section in parser.sections()})


def device_config_from_mapping(sections):
    """DeviceConfig from a nested {section: {key: value}} mapping (values may be strings)."""
    def get(section, key, default):
        try:
            return float(sections[section][key])
        except KeyError:
            return default

    d = DeviceConfig()
    return DeviceConfig(
        first_coupler_reflectivity=get("couplers", "first_reflectivity",
                                       d.first_coupler_reflectivity),
        signal_coupler_in=get("couplers", "signal_in", d.signal_coupler_in),
        signal_coupler_out=get("couplers", "signal_out", d.signal_coupler_out),
        idler_coupler_in=get("couplers", "idler_in", d.idler_coupler_in),
        idler_coupler_out=get("couplers", "idler_out", d.idler_coupler_out),
        filter_bandwidth=get("filters", "bandwidth_ghz", d.filter_bandwidth),
        filter_selectivity_db=get("filters", "selectivity_db", d.filter_selectivity_db),
        filter_fsr=get("filters", "fsr_ghz", d.filter_fsr),
        per_arm_transmission=get("counting", "per_arm_transmission", d.per_arm_transmission),
        detector_efficiency=get("detectors", "efficiency", d.detector_efficiency),
        rep_rate=get("counting", "rep_rate_mhz", d.rep_rate),
        car=get("counting", "car", d.car),
    )
