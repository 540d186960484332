"""Over-complete two-qubit state tomography with a constrained least-squares fit.

The measurement catalogue projects each qubit onto one of six states (the Z,
X, and Y eigenpairs), giving nine hardware settings of four recorded port
pairs each, 36 projectors in total. Reconstruction searches over density
matrices written as L L^dag / Tr(L L^dag) with L lower triangular, so the
estimate is Hermitian, unit trace, and positive semi-definite by
construction, and minimises the squared mismatch between measured and
predicted probabilities. Uncertainties come from re-reconstructing resampled
probability sets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

from . import bell, device, qstate

N_PROJECTORS = 36

# (theta_y, theta_z) per measured axis, chosen so that output port 0 (1)
# detects the first (second) label of each eigenpair under ry(ty) rz(tz).
_AXIS_SETTINGS = {
    "Z": (0.0, 0.0),
    "X": (-math.pi / 2.0, 0.0),
    "Y": (-math.pi / 2.0, -math.pi / 2.0),
}
_AXIS_LABELS = {"Z": ("0", "1"), "X": ("+", "-"), "Y": ("+i", "-i")}
_AXIS_ORDER = ("Z", "X", "Y")

# Lower-triangular layout of the 16 real search parameters: four real diagonal
# entries followed by re/im pairs for the strictly lower entries.
_LOWER_POSITIONS = ((1, 0), (2, 0), (2, 1), (3, 0), (3, 1), (3, 2))


class TomographyError(RuntimeError):
    """Reconstruction failed to converge; carries the best iterate found."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


@dataclass(frozen=True)
class ProjectorEntry:
    signal_label: str
    idler_label: str
    setting: device.MeasurementSetting
    ports: tuple
    matrix: np.ndarray


@dataclass(frozen=True)
class ProbabilityEstimates:
    """36 projector probabilities with standard errors, in catalogue order."""

    p: np.ndarray
    stderr: np.ndarray
    raw_counts: np.ndarray | None = None
    accidentals_per_basis: np.ndarray | None = None

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        s = np.asarray(self.stderr, dtype=float)
        if p.shape != (N_PROJECTORS,) or s.shape != (N_PROJECTORS,):
            raise ValueError(f"expected {N_PROJECTORS} probabilities and errors")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "stderr", s)


@dataclass(frozen=True)
class ClsResult:
    rho: np.ndarray
    objective: float
    params: np.ndarray
    n_evaluations: int
    converged: bool


@dataclass(frozen=True)
class TomoResult:
    """Reconstructed state with Monte-Carlo uncertainties on derived metrics."""

    rho_hat: np.ndarray
    mc_samples: int
    purity: float
    purity_err: float
    s_optimal: float
    s_optimal_err: float
    s_fixed: float
    s_fixed_err: float
    objective: float
    fidelity_to_target: float | None = None
    fidelity_err: float | None = None
    samples: dict = field(default_factory=dict)


def measurement_settings():
    """The nine hardware settings, signal axis major (Z, X, Y each)."""
    settings = []
    for s_axis in _AXIS_ORDER:
        for i_axis in _AXIS_ORDER:
            sy, sz = _AXIS_SETTINGS[s_axis]
            iy, iz = _AXIS_SETTINGS[i_axis]
            settings.append(device.MeasurementSetting(sy, sz, iy, iz))
    return settings


def projector_set():
    """The 36-entry catalogue of rank-one two-qubit projectors.

    Entries are grouped four at a time per hardware setting, ordered by
    output port pair (0,0), (0,1), (1,0), (1,1).
    """
    entries = []
    for s_axis in _AXIS_ORDER:
        for i_axis in _AXIS_ORDER:
            sy, sz = _AXIS_SETTINGS[s_axis]
            iy, iz = _AXIS_SETTINGS[i_axis]
            setting = device.MeasurementSetting(sy, sz, iy, iz)
            for sp in (0, 1):
                for ip in (0, 1):
                    s_label = _AXIS_LABELS[s_axis][sp]
                    i_label = _AXIS_LABELS[i_axis][ip]
                    vec = qstate.two_qubit_ket(s_label, i_label)
                    entries.append(ProjectorEntry(
                        signal_label=s_label,
                        idler_label=i_label,
                        setting=setting,
                        ports=(sp, ip),
                        matrix=qstate.projector(vec),
                    ))
    return entries


def _projector_stack():
    return np.stack([entry.matrix for entry in projector_set()])


_PI_STACK = None


def _pi_stack():
    global _PI_STACK
    if _PI_STACK is None:
        _PI_STACK = _projector_stack()
    return _PI_STACK


def probabilities_from_state(rho, config=None):
    """Noiseless 36-vector of projector probabilities, in catalogue order."""
    probs = []
    for setting in measurement_settings():
        probs.extend(device.measurement_probabilities(rho, setting, config))
    return np.asarray(probs)


def estimate_probabilities(records, stderr_scale=1.0):
    """Probability estimates from nine count records (one per hardware setting).

    Each record's accidental estimate is split evenly over its four ports and
    subtracted (floored at zero) before normalising by the basis total. The
    standard error is the independent-Poisson propagation sqrt(n)/total with
    zero-count bins floored at one count, times ``stderr_scale`` (exposed
    because residual-based per-count uncertainties may exceed Poisson).
    """
    if len(records) != 9:
        raise ValueError(f"expected 9 records, got {len(records)}")
    p = np.empty(N_PROJECTORS)
    err = np.empty(N_PROJECTORS)
    raw = np.empty(N_PROJECTORS)
    acc = np.empty(9)
    for k, rec in enumerate(records):
        counts = np.asarray(rec.coincidences, dtype=float)
        adjusted = np.clip(counts - rec.accidentals_estimate / 4.0, 0.0, None)
        total = adjusted.sum()
        if total <= 0:
            raise ValueError(f"basis {k} (setting {rec.setting}) has no counts")
        sl = slice(4 * k, 4 * k + 4)
        p[sl] = adjusted / total
        err[sl] = np.sqrt(np.maximum(counts, 1.0)) / total * stderr_scale
        raw[sl] = counts
        acc[k] = rec.accidentals_estimate
    return ProbabilityEstimates(p, err, raw_counts=raw, accidentals_per_basis=acc)


def _params_to_l(x):
    l = np.zeros((4, 4), dtype=complex)
    l[np.diag_indices(4)] = x[:4]
    for k, (r, c) in enumerate(_LOWER_POSITIONS):
        l[r, c] = x[4 + 2 * k] + 1j * x[5 + 2 * k]
    return l


def _l_to_params(l):
    x = np.empty(16)
    x[:4] = np.real(np.diag(l))
    for k, (r, c) in enumerate(_LOWER_POSITIONS):
        x[4 + 2 * k] = l[r, c].real
        x[5 + 2 * k] = l[r, c].imag
    return x


def _rho_from_params(x):
    l = _params_to_l(x)
    a = l @ l.conj().T
    return a / np.trace(a).real


def _residuals_and_jac(x, p_target, pi_stack):
    """Residual vector P_model - p and its analytic 36x16 Jacobian."""
    l = _params_to_l(x)
    a = l @ l.conj().T
    t = np.trace(a).real
    q = np.einsum("kij,ji->k", pi_stack, a).real
    p_model = q / t
    res = p_model - p_target

    # dQ_k / dL_rc from Tr(Pi (dL L^dag + L dL^dag)) = 2 Re (L^dag Pi)_{cr} dRe
    # and -2 Im (L^dag Pi)_{cr} dIm; dT/dL_rc is the same with Pi = identity.
    w = np.einsum("ab,kbc->kac", l.conj().T, pi_stack)
    jac = np.empty((N_PROJECTORS, 16))
    for d in range(4):
        dq = 2.0 * w[:, d, d].real
        dt = 2.0 * l[d, d].real
        jac[:, d] = (dq - p_model * dt) / t
    for k, (r, c) in enumerate(_LOWER_POSITIONS):
        entry = w[:, c, r]
        dt_re = 2.0 * l[r, c].real
        dt_im = 2.0 * l[r, c].imag
        jac[:, 4 + 2 * k] = (2.0 * entry.real - p_model * dt_re) / t
        jac[:, 5 + 2 * k] = (-2.0 * entry.imag - p_model * dt_im) / t
    return res, jac


def cls_reconstruct(estimates, n_starts=5, rng_seed=0, max_evaluations=10_000,
                    x0=None, ftol=1e-15, xtol=1e-15, gtol=1e-15):
    """Constrained least-squares estimate of the density matrix.

    Minimises sum_i (P_ex(i) - Tr(Pi_i rho))^2 over the Cholesky-parametrised
    physical set, from an identity-scaled start plus ``n_starts - 1`` random
    starts (or a single caller-provided ``x0``). Raises TomographyError with
    the best iterate attached if no start converges within the evaluation
    budget. Default tolerances drive noiseless problems to the numerical
    floor; callers with noisy data may relax them.
    """
    p_target = estimates.p if isinstance(estimates, ProbabilityEstimates) \
        else np.asarray(estimates, dtype=float)
    if p_target.shape != (N_PROJECTORS,):
        raise ValueError(f"expected {N_PROJECTORS} probabilities")
    pi_stack = _pi_stack()

    if x0 is not None:
        starts = [np.asarray(x0, dtype=float)]
    else:
        rng = np.random.default_rng(rng_seed)
        identity = np.zeros(16)
        identity[:4] = 0.5
        starts = [identity] + [rng.normal(scale=0.4, size=16) for _ in range(n_starts - 1)]

    # scipy queries residuals and Jacobian separately; share one evaluation.
    cache = {"key": None, "value": None}

    def evaluate(x):
        key = x.tobytes()
        if cache["key"] != key:
            cache["key"] = key
            cache["value"] = _residuals_and_jac(x, p_target, pi_stack)
        return cache["value"]

    def fun(x):
        return evaluate(x)[0]

    def jac(x):
        return evaluate(x)[1]

    best = None
    evaluations = 0
    any_converged = False
    for start in starts:
        sol = least_squares(fun, start, jac=jac, method="trf",
                            xtol=xtol, ftol=ftol, gtol=gtol,
                            max_nfev=max_evaluations)
        evaluations += sol.nfev
        objective = 2.0 * sol.cost
        any_converged = any_converged or sol.status > 0
        if best is None or objective < best[0]:
            best = (objective, sol.x, sol.status)
        if objective < 1e-16:
            break

    objective, x_best, _ = best
    result = ClsResult(
        rho=qstate.validate_density_matrix(_rho_from_params(x_best)),
        objective=float(objective),
        params=x_best,
        n_evaluations=evaluations,
        converged=any_converged,
    )
    if not any_converged:
        raise TomographyError(
            f"no start converged within {max_evaluations} evaluations "
            f"(best objective {objective:.3e})", best=result)
    return result


def _resample_normal(estimates, rng):
    p = rng.normal(estimates.p, estimates.stderr)
    return np.clip(p, 0.0, 1.0)


def _resample_counts(estimates, rng):
    if estimates.raw_counts is None:
        raise ValueError("count bootstrap requires estimates built from records")
    p = np.empty(N_PROJECTORS)
    for k in range(9):
        sl = slice(4 * k, 4 * k + 4)
        counts = rng.poisson(estimates.raw_counts[sl])
        adjusted = np.clip(counts - estimates.accidentals_per_basis[k] / 4.0, 0.0, None)
        total = adjusted.sum()
        p[sl] = adjusted / total if total > 0 else 0.25
    return p


def monte_carlo(estimates, n=500, rng_seed=0, target=None, method="normal",
                keep_samples=False):
    """Reconstruct, then propagate uncertainties by resampling the probabilities.

    ``method`` "normal" perturbs each probability within its standard error
    (clipped to [0, 1], the default); "poisson" bootstraps the raw counts.
    Central values are taken from the unperturbed reconstruction and error
    bars are sample standard deviations over ``n`` re-reconstructions, each
    warm-started from the central solution.
    """
    if n < 2:
        raise ValueError("need at least 2 Monte-Carlo samples")
    if method not in ("normal", "poisson"):
        raise ValueError(f"unknown resampling method {method!r}")
    base = cls_reconstruct(estimates, rng_seed=rng_seed)
    rho = base.rho

    # Phase of the pair coherence, used to orient the fixed CHSH settings.
    theta_hat = -math.atan2(rho[0, 3].imag, rho[0, 3].real)
    settings = bell.canonical_settings(theta_hat)

    def metrics(r):
        out = {
            "purity": qstate.purity(r),
            "s_optimal": bell.chsh_optimal(r),
            "s_fixed": bell.chsh_fixed_settings(r, settings).s_value,
        }
        if target is not None:
            out["fidelity"] = qstate.fidelity(r, target)
        return out

    central = metrics(rho)
    rng = np.random.default_rng(rng_seed)
    resample = _resample_normal if method == "normal" else _resample_counts
    samples = {key: np.empty(n) for key in central}
    for i in range(n):
        p_i = resample(estimates, rng)
        # Warm start from the central solution. Sample objectives are noise
        # dominated and PSD-boundary solutions creep under machine-precision
        # tolerances; these settings move no metric by more than ~3e-4, two
        # orders below typical Monte-Carlo spreads. A sample that still hits
        # the budget is at the flat bottom of its basin, so its best iterate
        # is kept rather than aborting the whole uncertainty run.
        try:
            rec = cls_reconstruct(p_i, x0=base.params, ftol=1e-12, xtol=1e-10,
                                  gtol=1e-7, max_evaluations=4000)
        except TomographyError as exc:
            rec = exc.best
        for key, value in metrics(rec.rho).items():
            samples[key][i] = value

    spread = {key: float(arr.std(ddof=1)) for key, arr in samples.items()}
    return TomoResult(
        rho_hat=rho,
        mc_samples=n,
        purity=central["purity"],
        purity_err=spread["purity"],
        s_optimal=central["s_optimal"],
        s_optimal_err=spread["s_optimal"],
        s_fixed=central["s_fixed"],
        s_fixed_err=spread["s_fixed"],
        objective=base.objective,
        fidelity_to_target=central.get("fidelity"),
        fidelity_err=spread.get("fidelity"),
        samples={k: v.copy() for k, v in samples.items()} if keep_samples else {},
    )


def tomography_report(result, target=None, include_samples=False):
    """JSON-ready bundle of the reconstruction and its derived metrics."""
    out = {
        "rho_hat": qstate.rho_to_json(result.rho_hat),
        "mc_samples": result.mc_samples,
        "objective": result.objective,
        "purity": result.purity,
        "purity_err": result.purity_err,
        "s_optimal": result.s_optimal,
        "s_optimal_err": result.s_optimal_err,
        "s_fixed": result.s_fixed,
        "s_fixed_err": result.s_fixed_err,
    }
    if result.fidelity_to_target is not None:
        out["fidelity_to_target"] = result.fidelity_to_target
        out["fidelity_err"] = result.fidelity_err
    if target is not None:
        out["target"] = qstate.rho_to_json(target)
    if include_samples and result.samples:
        out["samples"] = {k: v.tolist() for k, v in result.samples.items()}
    return out
