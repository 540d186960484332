"""CHSH evaluation: closed form, fixed-settings correlators, and the optimal bound.

Settings are (theta_y, theta_z) pairs fed to the device rotations; a setting
measures the spin direction (-sin(ty) cos(tz), sin(ty) sin(tz), cos(ty)) on
the Bloch sphere. The canonical settings reproduce the closed form
S = sqrt(2) (1 + 2 sigma sqrt(beta (1 - beta))) for the pair-superposition
states, for any total phase once the idler Z offsets compensate it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import device, qstate

S_CLASSICAL_BOUND = 2.0
S_QUANTUM_MAXIMUM = 2.0 * math.sqrt(2.0)


@dataclass(frozen=True)
class ChshSettings:
    """Four measurement directions as (theta_y, theta_z) pairs."""

    a: tuple
    a_prime: tuple
    b: tuple
    b_prime: tuple


@dataclass(frozen=True)
class ChshResult:
    s_value: float
    standard_error: float = 0.0
    correlators: tuple = ()

    @property
    def violated(self):
        return self.s_value > S_CLASSICAL_BOUND

    def violation_sigmas(self):
        """(S - 2) / stderr, or inf when the value is exact."""
        if self.standard_error == 0.0:
            return math.inf if self.violated else 0.0
        return (self.s_value - S_CLASSICAL_BOUND) / self.standard_error

    def violation_fraction(self):
        """(S - 2) / (2 sqrt(2) - 2), the violation as a fraction of the quantum range."""
        return (self.s_value - S_CLASSICAL_BOUND) / (S_QUANTUM_MAXIMUM - S_CLASSICAL_BOUND)


def canonical_settings(theta=0.0):
    """Textbook maximal-violation settings, phase-compensated by ``theta``.

    Signal measures Z and X; idler measures the diagonal directions rotated
    into the frame where the pair coherence is real.
    """
    return ChshSettings(
        a=(0.0, 0.0),
        a_prime=(-math.pi / 2.0, 0.0),
        b=(-math.pi / 4.0, -theta),
        b_prime=(math.pi / 4.0, -theta),
    )


def chsh_model(beta, sigma_mag):
    """Closed-form S of the pair-superposition state: sqrt(2)(1 + 2 s sqrt(b(1-b)))."""
    if not 0.0 <= beta <= 1.0:
        raise ValueError("beta must be in [0, 1]")
    if not 0.0 <= sigma_mag <= 1.0:
        raise ValueError("sigma_mag must be in [0, 1]")
    return math.sqrt(2.0) * (1.0 + 2.0 * sigma_mag * math.sqrt(beta * (1.0 - beta)))


def correlator(rho, signal_setting, idler_setting, config=None):
    """E = p00 - p01 - p10 + p11 for one pair of single-qubit settings."""
    setting = device.MeasurementSetting(
        theta_sy=signal_setting[0], theta_sz=signal_setting[1],
        theta_iy=idler_setting[0], theta_iz=idler_setting[1],
    )
    p = device.measurement_probabilities(rho, setting, config)
    return float(p[0] - p[1] - p[2] + p[3])


def chsh_fixed_settings(rho, settings, config=None):
    """S = E(a,b) + E(a,b') + E(a',b) - E(a',b') from exact probabilities."""
    e_ab = correlator(rho, settings.a, settings.b, config)
    e_abp = correlator(rho, settings.a, settings.b_prime, config)
    e_apb = correlator(rho, settings.a_prime, settings.b, config)
    e_apbp = correlator(rho, settings.a_prime, settings.b_prime, config)
    s = e_ab + e_abp + e_apb - e_apbp
    return ChshResult(s, 0.0, (e_ab, e_abp, e_apb, e_apbp))


def correlation_matrix(rho):
    """3x3 matrix T_ij = Tr(rho sigma_i x sigma_j)."""
    paulis = (qstate.PAULI_X, qstate.PAULI_Y, qstate.PAULI_Z)
    t = np.empty((3, 3))
    for i, si in enumerate(paulis):
        for j, sj in enumerate(paulis):
            t[i, j] = np.real(np.trace(rho @ np.kron(si, sj)))
    return t

def chsh_optimal(rho):
    """Best achievable S over all settings: 2 sqrt(t1^2 + t2^2) with t1 >= t2
    the two largest singular values of the correlation matrix."""
    svals = np.linalg.svd(correlation_matrix(rho), compute_uv=False)
    return 2.0 * math.sqrt(svals[0] ** 2 + svals[1] ** 2)


def visibility_from_state(beta, sigma_mag):
    """Fringe visibility of the pair-superposition state: 2 s sqrt(b(1-b))."""
    if not 0.0 <= beta <= 1.0:
        raise ValueError("beta must be in [0, 1]")
    if not 0.0 <= sigma_mag <= 1.0:
        raise ValueError("sigma_mag must be in [0, 1]")
    return 2.0 * sigma_mag * math.sqrt(beta * (1.0 - beta))


def s_from_visibility(v, convention):
    """Convert a fringe visibility to S.

    "additive" assumes the closed form with v = 2 sigma sqrt(beta(1-beta)),
    giving sqrt(2)(1+v); "multiplicative" assumes isotropic noise, giving
    2 sqrt(2) v. The two agree only at v = 1.
    """
    if not 0.0 <= v <= 1.0:
        raise ValueError("visibility must be in [0, 1]")
    if convention == "additive":
        return math.sqrt(2.0) * (1.0 + v)
    if convention == "multiplicative":
        return S_QUANTUM_MAXIMUM * v
    raise ValueError(f"unknown convention {convention!r}; use 'additive' or 'multiplicative'")


def correlator_from_counts(record):
    """(E, stderr) from one count record, after flat accidental subtraction."""
    adjusted = np.clip(record.coincidences - record.accidentals_estimate / 4.0, 0.0, None)
    total = adjusted.sum()
    if total == 0:
        raise ValueError("no counts left after accidental subtraction")
    signs = np.array([1.0, -1.0, -1.0, 1.0])
    e = float((signs * adjusted).sum() / total)
    # Independent-Poisson propagation through the ratio.
    var = float(np.sum(record.coincidences * (signs - e) ** 2)) / total**2
    return e, math.sqrt(max(var, 0.0))


def chsh_from_counts(records, n_mc=500, rng_seed=0):
    """Estimate S and its uncertainty from four count records (ab, ab', a'b, a'b').

    The standard error comes from Monte-Carlo resampling of the four
    correlators within their Poisson-propagated errors.
    """
    if len(records) != 4:
        raise ValueError("need exactly four count records")
    estimates = [correlator_from_counts(rec) for rec in records]
    es = np.array([e for e, _ in estimates])
    errs = np.array([err for _, err in estimates])
    signs = np.array([1.0, 1.0, 1.0, -1.0])
    s = float((signs * es).sum())
    rng = np.random.default_rng(rng_seed)
    samples = (signs * rng.normal(es, errs, size=(n_mc, 4))).sum(axis=1)
    return ChshResult(s, float(samples.std(ddof=1)), tuple(es.tolist()))


def report(result, settings=None):
    """JSON-ready summary of a CHSH evaluation."""
    out = {
        "s": result.s_value,
        "standard_error": result.standard_error,
        "violated": bool(result.violated),
        "violation_fraction": result.violation_fraction(),
        "correlators": list(result.correlators),
    }
    sig = result.violation_sigmas()
    out["violation_sigmas"] = None if math.isinf(sig) else sig
    if settings is not None:
        out["settings"] = {
            "a": list(settings.a), "a_prime": list(settings.a_prime),
            "b": list(settings.b), "b_prime": list(settings.b_prime),
        }
    return out
