"""Small unconstrained optimizer for smooth likelihoods.

BFGS on the inverse Hessian with Armijo backtracking, followed by a few
safeguarded Newton steps on a finite-difference Hessian so that the final
gradient norm is limited by rounding rather than by the quasi-Newton model.
"""

from dataclasses import dataclass

import numpy as np

__all__ = ["OptimResult", "minimize", "fd_hessian"]


@dataclass
class OptimResult:
    x: np.ndarray
    fun: float
    grad: np.ndarray
    n_iter: int
    converged: bool
    message: str


def fd_hessian(grad, x, rel_step=1e-5):
    """Symmetrized central difference of an analytic gradient."""
    x = np.asarray(x, dtype=float)
    k = x.size
    H = np.empty((k, k))
    for i in range(k):
        h = rel_step * max(1.0, abs(x[i]))
        e = np.zeros(k)
        e[i] = h
        H[:, i] = (grad(x + e) - grad(x - e)) / (2 * h)
    return 0.5 * (H + H.T)


def _backtrack(fun, x, f0, g0, p, c1=1e-4, shrink=0.5, max_halvings=60):
    slope = float(g0 @ p)
    alpha = 1.0
    for _ in range(max_halvings):
        x_new = x + alpha * p
        f_new = fun(x_new)
        if np.isfinite(f_new) and f_new <= f0 + c1 * alpha * slope:
            return alpha, x_new, f_new
        alpha *= shrink
    return 0.0, x, f0


def minimize(fun, grad, x0, gtol=1e-6, steptol=1e-10, maxiter=500, max_step=5.0, polish=True,
             active=None):
    """Minimize ``fun`` from ``x0``.

    ``fun`` may return ``inf``/``nan`` to reject a trial point. Convergence is
    declared when the Euclidean gradient norm drops below ``gtol`` or the
    accepted step falls below ``steptol``. ``active(x, g)``, if given, returns
    a boolean mask of free coordinates; the others are parked (held fixed, as
    at a bound of a reparameterization) and ignored by the gradient test.
    """
    if active is None:
        def active(x, g):
            return np.ones(x.size, dtype=bool)

    x = np.array(x0, dtype=float)
    f = fun(x)
    if not np.isfinite(f):
        raise FloatingPointError("objective is not finite at the starting point")
    g = grad(x)
    k = x.size
    Hinv = np.eye(k)
    first = True
    n_iter = 0
    message = "iteration cap reached"
    converged = False

    mask = active(x, g)
    while n_iter < maxiter:
        new_mask = active(x, g)
        if not np.array_equal(new_mask, mask):
            Hinv, first = np.eye(k), True
        mask = new_mask
        if np.linalg.norm(g[mask]) < gtol:
            converged, message = True, "gradient norm below tolerance"
            break
        gm = np.where(mask, g, 0.0)
        p = -Hinv @ gm
        p[~mask] = 0.0
        if not gm @ p < 0:
            Hinv = np.eye(k)
            p = -gm
        big = np.max(np.abs(p))
        if big > max_step:
            p *= max_step / big
        alpha, x_new, f_new = _backtrack(fun, x, f, g, p)
        n_iter += 1
        step = alpha * p
        if alpha == 0.0 or np.max(np.abs(step)) < steptol:
            if not np.allclose(Hinv, np.eye(k)):
                # Retry once along steepest descent before giving up.
                Hinv = np.eye(k)
                first = True
                continue
            converged, message = True, "step size below tolerance"
            break
        g_new = grad(x_new)
        s, y = step, np.where(mask, g_new - g, 0.0)
        sy = float(s @ y)
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            if first:
                Hinv = np.eye(k) * sy / float(y @ y)
                first = False
            rho = 1.0 / sy
            V = np.eye(k) - rho * np.outer(s, y)
            Hinv = V @ Hinv @ V.T + rho * np.outer(s, s)
        x, f, g = x_new, f_new, g_new

    if polish:
        x, f, g, n_newton, ok = _newton_polish(fun, grad, x, f, g, gtol, active)
        n_iter += n_newton
        if ok:
            converged, message = True, "gradient norm below tolerance"
    return OptimResult(x, float(f), g, n_iter, converged, message)


def _newton_polish(fun, grad, x, f, g, gtol, active, max_newton=20):
    # Newton converges quadratically, so aim well below gtol for cheap extra digits.
    target = 1e-3 * gtol
    n = 0
    while n < max_newton:
        m = active(x, g)
        gnorm = np.linalg.norm(g[m])
        if gnorm < target:
            break
        H = fd_hessian(grad, x)[np.ix_(m, m)]
        try:
            L = np.linalg.cholesky(H)
        except np.linalg.LinAlgError:
            return x, f, g, n, False
        p = np.zeros(x.size)
        p[m] = -np.linalg.solve(L.T, np.linalg.solve(L, g[m]))
        n += 1
        # Near the optimum the objective is flat to rounding; judge the step
        # by the gradient instead.
        noise = 1e-12 * max(1.0, abs(f))
        for alpha in 0.5 ** np.arange(30):
            x_new = x + alpha * p
            f_new = fun(x_new)
            if not np.isfinite(f_new) or f_new > f + noise:
                continue
            g_new = grad(x_new)
            if np.linalg.norm(g_new[m]) < gnorm or f_new < f - noise:
                break
        else:
            break
        x, f, g = x_new, f_new, g_new
        if np.linalg.norm(g[m]) > 0.5 * gnorm:
            # No quadratic progress: the gradient is at its rounding floor.
            break
    return x, f, g, n, bool(np.linalg.norm(g[active(x, g)]) < gtol)
