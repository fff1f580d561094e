"""Weighted nonlinear least squares (Levenberg-Marquardt) with uncertainty estimates.

The engine minimises ``0.5 * sum(r**2)`` for a user-supplied vector of already
weighted residuals ``r``. Strictly positive parameters can be flagged for a
log-space transform; the optimizer then works on ``log(p)`` and maps standard
errors back with the delta method.

Derivatives are always central finite differences.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import (
    FitDidNotConverge,
    InsufficientData,
    NonFiniteResidual,
    SingularJacobian,
)

__all__ = [
    "Objective",
    "FitOptions",
    "FitResult",
    "least_squares",
    "numeric_jacobian",
    "covariance",
]

# Singular-value ratio (column-normalised Jacobian) below which the problem is
# treated as rank deficient.
_RANK_RTOL = 1e-8


@dataclass(frozen=True)
class Objective:
    """Residual model handed to :func:`least_squares`.

    ``residuals`` maps a parameter vector (natural units) to the weighted
    residual vector. ``log_params`` marks parameters that must stay positive.
    """

    residuals: Callable[[np.ndarray], np.ndarray]
    names: Sequence[str]
    log_params: Optional[Sequence[bool]] = None

    @property
    def n_params(self):
        return len(self.names)

    def _log_mask(self):
        if self.log_params is None:
            return np.zeros(self.n_params, dtype=bool)
        mask = np.asarray(self.log_params, dtype=bool)
        if mask.shape != (self.n_params,):
            raise ValueError("log_params must have one flag per parameter")
        return mask

    def to_internal(self, params):
        p = np.array(params, dtype=float)
        mask = self._log_mask()
        if np.any(p[mask] <= 0):
            raise ValueError("log-space parameters must start strictly positive")
        p[mask] = np.log(p[mask])
        return p

    def to_natural(self, theta):
        p = np.array(theta, dtype=float)
        mask = self._log_mask()
        p[mask] = np.exp(p[mask])
        return p

    def internal_residuals(self, theta):
        return np.asarray(self.residuals(self.to_natural(theta)), dtype=float)


@dataclass(frozen=True)
class FitOptions:
    max_iterations: int = 200
    ssr_rtol: float = 1e-12
    step_rtol: float = 1e-10
    fd_rel_step: float = 1e-6
    initial_damping: float = 1e-3

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        for name in ("ssr_rtol", "step_rtol", "fd_rel_step", "initial_damping"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")


@dataclass(frozen=True)
class FitResult:
    parameters: dict
    std_errors: Optional[dict]
    ssr: float
    dof: int
    converged: bool
    iterations: int
    flags: tuple = ()
    ssr_history: tuple = ()
    singular_direction: Optional[tuple] = None

    def __getitem__(self, name):
        return self.parameters[name]

    def error(self, name):
        if self.std_errors is None:
            return None
        return self.std_errors[name]


def numeric_jacobian(func, at, rel_step=1e-6):
    """Central-difference Jacobian of ``func`` at ``at``.

    The step for parameter ``j`` is ``rel_step * max(|at_j|, 1)``.
    """
    x = np.asarray(at, dtype=float)
    f0 = np.asarray(func(x), dtype=float)
    jac = np.empty((f0.size, x.size))
    for j in range(x.size):
        h = rel_step * max(abs(x[j]), 1.0)
        xp = x.copy()
        xm = x.copy()
        xp[j] += h
        xm[j] -= h
        fp = np.asarray(func(xp), dtype=float)
        fm = np.asarray(func(xm), dtype=float)
        if not (np.all(np.isfinite(fp)) and np.all(np.isfinite(fm))):
            raise NonFiniteResidual(
                f"non-finite residuals while differentiating parameter {j}", x.copy()
            )
        jac[:, j] = (fp - fm) / (2.0 * h)
    return jac


def _rank_check(jac):
    norms = np.linalg.norm(jac, axis=0)
    if np.any(norms == 0):
        direction = (norms == 0).astype(float)
        raise SingularJacobian(
            "residuals do not depend on some parameters", tuple(direction / np.linalg.norm(direction))
        )
    _, s, vt = np.linalg.svd(jac / norms, full_matrices=False)
    if s[-1] < _RANK_RTOL * s[0]:
        v = vt[-1] / norms
        v = v / np.linalg.norm(v)
        raise SingularJacobian(
            f"Jacobian is rank deficient (singular value ratio {s[-1] / s[0]:.3g})",
            tuple(v),
        )


def covariance(obj, at, ssr, dof, absolute_sigma=False, rel_step=1e-6):
    """Standard errors of the parameters of ``obj`` at natural-unit point ``at``.

    The parameter covariance in the internal space is ``s2 * inv(J^T J)`` with
    ``s2 = ssr/dof``, or ``s2 = 1`` when ``absolute_sigma`` is set (residuals
    already divided by known standard deviations). Log-space parameters are
    mapped back with ``se_p = p * se_log_p``.
    """
    return _covariance_internal(obj, obj.to_internal(at), ssr, dof, absolute_sigma, rel_step)


def _covariance_internal(obj, theta, ssr, dof, absolute_sigma, rel_step):
    if dof < 1:
        raise InsufficientData(f"need at least one residual degree of freedom, got {dof}")
    jac = numeric_jacobian(obj.internal_residuals, theta, rel_step)
    _rank_check(jac)
    cov = np.linalg.inv(jac.T @ jac)
    if not absolute_sigma:
        cov = cov * (ssr / dof)
    se = np.sqrt(np.diag(cov))
    natural = obj.to_natural(theta)
    mask = obj._log_mask()
    se[mask] = natural[mask] * se[mask]
    return dict(zip(obj.names, (float(v) for v in se)))


def _damping_diag(jtj):
    d = np.diag(jtj).copy()
    d[d <= 0] = 1.0
    return d


def _predicted_decrease(jac, r, step):
    jr = jac @ step
    return -(2.0 * (r @ jr) + jr @ jr)


def least_squares(obj, init, opts=None, absolute_sigma=False):
    """Minimise the squared norm of ``obj.residuals`` starting from ``init``.

    Damping is multiplied by 10 after a rejected step and by 0.1 after an
    accepted one. Convergence is declared when an accepted step changes the
    sum of squares by less than ``ssr_rtol`` (relative) or a proposed step is
    shorter than ``step_rtol`` relative to the parameter vector. A final step
    whose ssr change is within ``ssr_rtol`` in either direction is also taken
    when the linearised model predicts a decrease; there the objective has hit
    its rounding floor, so ``ssr_history`` is non-increasing up to ``ssr_rtol``.

    Raises FitDidNotConverge (with the last iterate attached) when the
    iteration budget runs out.
    """
    opts = opts or FitOptions()
    theta = obj.to_internal(init)
    r = obj.internal_residuals(theta)
    if not np.all(np.isfinite(r)):
        raise NonFiniteResidual("residuals are not finite at the initial point", obj.to_natural(theta))
    if r.size < obj.n_params:
        raise InsufficientData(
            f"{r.size} residuals cannot constrain {obj.n_params} parameters"
        )
    ssr = float(r @ r)
    history = [ssr]
    lam = opts.initial_damping
    converged = ssr == 0.0
    iterations = 0
    jac = numeric_jacobian(obj.internal_residuals, theta, opts.fd_rel_step) if not converged else None

    while not converged and iterations < opts.max_iterations:
        iterations += 1
        jtj = jac.T @ jac
        grad = jac.T @ r
        lhs = jtj + lam * np.diag(_damping_diag(jtj))
        step = np.linalg.lstsq(lhs, -grad, rcond=None)[0]
        if np.linalg.norm(step) <= opts.step_rtol * (np.linalg.norm(theta) + opts.step_rtol):
            converged = True
            break
        trial = theta + step
        ssr_trial = np.inf
        with np.errstate(over="ignore", invalid="ignore"):
            if np.all(np.isfinite(obj.to_natural(trial))):
                r_trial = obj.internal_residuals(trial)
                if np.all(np.isfinite(r_trial)):
                    ssr_trial = float(r_trial @ r_trial)
        if ssr_trial <= ssr:
            rel = (ssr - ssr_trial) / ssr if ssr > 0 else 0.0
            theta, r, ssr = trial, r_trial, ssr_trial
            history.append(ssr)
            lam *= 0.1
            if rel < opts.ssr_rtol or ssr == 0.0:
                converged = True
                break
            jac = numeric_jacobian(obj.internal_residuals, theta, opts.fd_rel_step)
        elif ssr_trial - ssr <= opts.ssr_rtol * ssr and _predicted_decrease(jac, r, step) > 0:
            # Below the rounding floor of the objective: ssr can no longer rank
            # the two points, the linear model still can. Take the step and stop.
            theta, r, ssr = trial, r_trial, ssr_trial
            history.append(ssr)
            converged = True
            break
        else:
            lam *= 10.0

    params = obj.to_natural(theta)
    names = list(obj.names)
    dof = r.size - obj.n_params
    result_kwargs = dict(
        parameters=dict(zip(names, (float(v) for v in params))),
        ssr=ssr,
        dof=dof,
        iterations=iterations,
        ssr_history=tuple(history),
    )
    if not converged:
        result = FitResult(std_errors=None, converged=False, flags=("max_iterations",), **result_kwargs)
        raise FitDidNotConverge(
            f"no convergence after {opts.max_iterations} iterations", result
        )

    flags = []
    std_errors = None
    direction = None
    if dof >= 1:
        try:
            std_errors = _covariance_internal(obj, theta, ssr, dof, absolute_sigma, opts.fd_rel_step)
        except SingularJacobian as exc:
            flags.append("singular")
            direction = exc.direction
    else:
        flags.append("zero_dof")
    return FitResult(
        std_errors=std_errors,
        converged=True,
        flags=tuple(flags),
        singular_direction=direction,
        **result_kwargs,
    )
