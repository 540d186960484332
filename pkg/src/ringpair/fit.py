"""Regression utilities: sinusoidal fringe fits and heater phase calibration.

Fringe fitting exploits that the model offset*(1 + V cos(theta - phase0)) is
exactly linear in (offset, offset*V*cos(phase0), offset*V*sin(phase0)), so a
single weighted linear solve finds the global optimum; no iteration or start
guessing is needed. Heater calibration is genuinely nonlinear (the phase is
quadratic in voltage) and uses seeded multi-start least squares.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

from . import device


class FitError(RuntimeError):
    """Nonlinear fit failed to converge; carries the best parameters found."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


@dataclass(frozen=True)
class FringeData:
    """Sampled coincidence fringe: phases (radians) and counts, optional errors."""

    phases: np.ndarray
    counts: np.ndarray
    count_errors: np.ndarray | None = None

    def __post_init__(self):
        phases = np.asarray(self.phases, dtype=float)
        counts = np.asarray(self.counts, dtype=float)
        object.__setattr__(self, "phases", phases)
        object.__setattr__(self, "counts", counts)
        if phases.ndim != 1 or phases.size < 5 or counts.shape != phases.shape:
            raise ValueError("need matching phase/count arrays of length >= 5")
        if np.any(counts < 0):
            raise ValueError("counts must be non-negative")
        if self.count_errors is not None:
            errors = np.asarray(self.count_errors, dtype=float)
            if errors.shape != phases.shape or np.any(errors <= 0):
                raise ValueError("count_errors must be positive and match the data length")
            object.__setattr__(self, "count_errors", errors)


@dataclass(frozen=True)
class FringeFit:
    """Fitted fringe offset*(1 + visibility*cos(theta - phase0)) with errors."""

    offset: float
    amplitude: float
    visibility: float
    phase0: float
    offset_err: float
    amplitude_err: float
    visibility_err: float
    phase0_err: float
    residual_variance: float
    phase_defined: bool


@dataclass(frozen=True)
class HeaterCalibration:
    """Quadratic phase-voltage law theta(V) = theta0 + kappa V^2 for one heater."""

    theta0: float
    kappa: float
    reflectivity: float
    scale: float
    residual: float
    degenerate: bool = False


@dataclass(frozen=True)
class CalibrationModel:
    heaters: dict = field(default_factory=dict)

    def reflectivities(self):
        return {name: cal.reflectivity for name, cal in self.heaters.items()}


def fit_fringe(data):
    """Weighted least-squares fit of a sinusoidal coincidence fringe.

    Phases must span at least pi. Parameter standard errors come from the
    residual-scaled covariance; on noiseless model data they are zero. When
    the fitted amplitude is consistent with zero the phase is meaningless and
    ``phase_defined`` is False.
    """
    theta = data.phases
    if theta.max() - theta.min() < math.pi - 1e-9:
        raise ValueError("phase span must be at least pi for a stable fringe fit")

    design = np.column_stack([np.ones_like(theta), np.cos(theta), np.sin(theta)])
    weights = 1.0 / data.count_errors if data.count_errors is not None else np.ones_like(theta)
    a_mat = design * weights[:, None]
    b_vec = data.counts * weights
    gram = a_mat.T @ a_mat
    if np.linalg.matrix_rank(gram) < 3:
        raise ValueError("singular normal equations; phases do not resolve the fringe")
    coef, *_ = np.linalg.lstsq(a_mat, b_vec, rcond=None)
    offset, a, b = coef
    if offset <= 0:
        raise ValueError(f"fitted offset {offset:.3g} is not positive")

    residuals = (design @ coef - data.counts) * weights
    dof = theta.size - 3
    residual_variance = float(residuals @ residuals / dof) if dof > 0 else 0.0
    cov = residual_variance * np.linalg.inv(gram)

    amplitude = math.hypot(a, b)
    visibility = amplitude / offset
    phase0 = math.atan2(b, a)

    # Delta-method propagation to (amplitude, visibility, phase0).
    if amplitude > 0:
        g_amp = np.array([0.0, a / amplitude, b / amplitude])
        g_vis = np.array([-visibility / offset, a / (amplitude * offset), b / (amplitude * offset)])
        g_phi = np.array([0.0, -b / amplitude**2, a / amplitude**2])
        amplitude_err = math.sqrt(max(g_amp @ cov @ g_amp, 0.0))
        visibility_err = math.sqrt(max(g_vis @ cov @ g_vis, 0.0))
        phase0_err = math.sqrt(max(g_phi @ cov @ g_phi, 0.0))
    else:
        amplitude_err = visibility_err = math.sqrt(max(cov[1, 1] + cov[2, 2], 0.0))
        phase0_err = math.inf

    phase_defined = amplitude > 1e-9 * offset and (amplitude_err == 0.0 or amplitude > amplitude_err)
    return FringeFit(
        offset=float(offset), amplitude=float(amplitude), visibility=float(visibility),
        phase0=float(phase0), offset_err=float(math.sqrt(max(cov[0, 0], 0.0))),
        amplitude_err=float(amplitude_err), visibility_err=float(visibility_err),
        phase0_err=float(phase0_err), residual_variance=residual_variance,
        phase_defined=phase_defined,
    )


def mzi_intensity(voltage, theta0, kappa, reflectivity, scale):
    """Bright-light output of one interferometer versus heater voltage.

    Resistive heating makes the phase quadratic in voltage; the fringe
    contrast is set by the (shared) coupler reflectivity.
    """
    v = np.asarray(voltage, dtype=float)
    r = reflectivity
    offset = r * r + (1.0 - r) ** 2
    contrast = 2.0 * r * (1.0 - r)
    return scale * (offset - contrast * np.cos(theta0 + kappa * v * v))


def _fit_single_heater(voltages, intensities, max_evaluations=2000):
    v = np.asarray(voltages, dtype=float)
    y = np.asarray(intensities, dtype=float)
    if v.size < 10 or y.shape != v.shape:
        raise ValueError("need at least 10 (voltage, intensity) samples per heater")

    y_max = y.max()
    if y_max <= 0 or y.std() < 1e-9 * max(y_max, 1.0):
        # Flat response: theta0 and kappa cannot be separated.
        return HeaterCalibration(theta0=math.nan, kappa=0.0, reflectivity=0.5,
                                 scale=float(y.mean()), residual=0.0, degenerate=True)

    # Frequency seed: resample onto a uniform grid in u = V^2 where the
    # response is sinusoidal, and take the dominant FFT bin.
    u = v * v
    order = np.argsort(u)
    u_lin = np.linspace(u[order][0], u[order][-1], 256)
    y_lin = np.interp(u_lin, u[order], y[order])
    spectrum = np.abs(np.fft.rfft(y_lin - y_lin.mean()))
    k_bin = max(int(np.argmax(spectrum[1:])) + 1, 1)
    du = u_lin[-1] - u_lin[0]
    kappa_seed = 2.0 * math.pi * k_bin / du if du > 0 else 1.0

    def residuals(params):
        theta0, kappa, refl, scale = params
        return mzi_intensity(v, theta0, kappa, refl, scale) - y

    best = None
    converged = False
    lower = [-2.0 * math.pi, 0.0, 0.0, 0.0]
    upper = [2.0 * math.pi, np.inf, 1.0, np.inf]
    # Starts far from the right basin can wander for the whole budget, so try
    # the FFT-seeded start first and stop as soon as residuals reach a small
    # fraction of the signal scale (wrong-frequency fits cannot get there).
    good_enough = 0.5 * v.size * (0.02 * y_max) ** 2
    for kappa0 in (kappa_seed, 0.5 * kappa_seed, 2.0 * kappa_seed):
        for theta0 in (0.0, 0.5 * math.pi, math.pi, 1.5 * math.pi):
            start = [theta0, kappa0, 0.45, y_max]
            sol = least_squares(residuals, start, bounds=(lower, upper),
                                xtol=1e-12, ftol=1e-12, gtol=1e-12,
                                max_nfev=max_evaluations)
            converged = converged or sol.status > 0
            if best is None or sol.cost < best.cost:
                best = sol
            if best.cost < good_enough:
                break
        if best.cost < good_enough:
            break

    theta0, kappa, refl, scale = best.x
    # Fold out the reflectivity mirror symmetry and the phase sign/offset
    # ambiguities into a canonical branch.
    refl = max(refl, 1.0 - refl)
    theta0 = theta0 % (2.0 * math.pi)
    cal = HeaterCalibration(
        theta0=float(theta0), kappa=float(kappa), reflectivity=float(refl),
        scale=float(scale), residual=float(2.0 * best.cost),
        degenerate=bool(kappa * (u.max() - u.min()) < 1e-3),
    )
    if not converged:
        raise FitError("heater calibration did not converge", best=cal)
    return cal


def calibrate_phase_voltage(sweeps):
    """Fit the phase-voltage law and coupler reflectivity for each heater.

    ``sweeps`` maps heater names to (voltages, intensities) arrays. Heaters
    with no modulation are returned flagged degenerate rather than fitted.
    """
    heaters = {name: _fit_single_heater(v, i) for name, (v, i) in sweeps.items()}
    return CalibrationModel(heaters=heaters)


@dataclass(frozen=True)
class VisibilityPoint:
    detuning: float
    visibility: float
    stderr: float


def visibility_vs_detuning(sweep_points, counts_per_point=300.0, n_phases=16,
                           rng_seed=0, phase0=0.0):
    """Simulate and fit one fringe per detuning-sweep point.

    Each point's fringe has the sweep's predicted visibility, Poisson counting
    noise at ``counts_per_point`` mean counts, and is fitted back with
    fit_fringe; the result is a (detuning, visibility, stderr) curve. Fits are
    unweighted: pooled residual variance gives slightly conservative but
    well-calibrated visibility errors on Poisson fringes, where per-point
    observed-count weights undercover.
    """
    if len(sweep_points) < 5:
        raise ValueError("need at least 5 detuning points")
    seeds = np.random.SeedSequence(rng_seed).spawn(len(sweep_points))
    thetas = np.linspace(0.0, 2.0 * math.pi, n_phases, endpoint=False)
    curve = []
    for point, seed in zip(sweep_points, seeds):
        rng = np.random.default_rng(seed)
        expected = counts_per_point * (1.0 + point.visibility * np.cos(thetas - phase0))
        counts = rng.poisson(expected).astype(float)
        fitted = fit_fringe(FringeData(thetas, counts))
        curve.append(VisibilityPoint(point.detuning, fitted.visibility, fitted.visibility_err))
    return curve
