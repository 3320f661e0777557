"""Special functions needed by the survival families.

The regularized incomplete beta function is evaluated with its continued
fraction, run as a forward recurrence so that the partial derivatives with
respect to both shape parameters come out of the same pass. Normal CDF
helpers delegate to :mod:`scipy.special`.
"""

import numpy as np
from scipy import special as sp

__all__ = [
    "log_betainc",
    "log_ndtr",
    "ndtr",
    "ndtri",
]

ndtr = sp.ndtr
ndtri = sp.ndtri
log_ndtr = sp.log_ndtr

_TINY = 1e-300
_EPS = 1e-15


def _cf_log_grad(a, b, x, xc, maxiter):
    """log I_x(a, b) and its (a, b) partials from the continued fraction.

    Only accurate where x < (a + 1) / (a + b + 2); callers handle the switch.
    """
    # Continued fraction 1 / (1 + d1 / (1 + d2 / ...)) as A_n / B_n, seeded
    # with (A_0, A_1) = (0, 1) and (B_0, B_1) = (1, 1). Converged entries are
    # frozen; only the active set keeps iterating.
    size = x.shape[0]
    f_out = np.empty(size)
    df_out = np.empty((2, size))
    idx = np.arange(size)
    aa, bb, xx = a, b, x

    A_prev2, A_prev = np.zeros(size), np.ones(size)
    B_prev2 = np.ones(size)
    dA_prev2 = np.zeros((2, size))
    dA_prev = np.zeros((2, size))
    dB_prev2 = np.zeros((2, size))
    dB_prev = np.zeros((2, size))
    f_old = np.ones(size)
    df_old = np.zeros((2, size))

    n = 1
    for _ in range(maxiter):
        if n % 2 == 1:
            m = (n - 1) // 2
            num = (aa + m) * (aa + bb + m)
            den = (aa + 2 * m) * (aa + 2 * m + 1)
            d = -xx * num / den
            dd_a = d * (1 / (aa + m) + 1 / (aa + bb + m) - 1 / (aa + 2 * m) - 1 / (aa + 2 * m + 1))
            dd_b = d / (aa + bb + m)
        else:
            m = n // 2
            den = (aa + 2 * m - 1) * (aa + 2 * m)
            d = xx * m * (bb - m) / den
            dd_a = -d * (1 / (aa + 2 * m - 1) + 1 / (aa + 2 * m))
            dd_b = xx * m / den
        dd = np.stack([dd_a, dd_b])

        A = A_prev + d * A_prev2
        B = 1.0 + d * B_prev2  # B_{n-1} is held at 1 by the rescaling
        dA = dA_prev + d * dA_prev2 + dd * A_prev2
        dB = dB_prev + d * dB_prev2 + dd * B_prev2

        # Common rescaling keeps the recurrence in range and leaves A/B intact.
        s = 1.0 / np.where(np.abs(B) < _TINY, _TINY, B)
        A_prev2, A_prev = A_prev * s, A * s
        B_prev2 = s
        dA_prev2, dA_prev = dA_prev * s, dA * s
        dB_prev2, dB_prev = dB_prev * s, dB * s

        f = A_prev
        df = dA_prev - f * dB_prev
        n += 1
        if n % 2 == 1:
            done = (np.abs(f - f_old) <= _EPS * np.abs(f)) & np.all(
                np.abs(df - df_old) <= 1e-13 * (np.abs(df) + np.abs(f)), axis=0
            )
            if np.any(done):
                f_out[idx[done]] = f[done]
                df_out[:, idx[done]] = df[:, done]
                keep = ~done
                if not np.any(keep):
                    break
                idx, aa, bb, xx = idx[keep], aa[keep], bb[keep], xx[keep]
                A_prev2, A_prev, B_prev2 = A_prev2[keep], A_prev[keep], B_prev2[keep]
                dA_prev2, dA_prev = dA_prev2[:, keep], dA_prev[:, keep]
                dB_prev2, dB_prev = dB_prev2[:, keep], dB_prev[:, keep]
                f, df = f[keep], df[:, keep]
            f_old, df_old = f, df
    else:
        raise ArithmeticError("incomplete beta continued fraction did not converge")

    f, df = f_out, df_out
    log_front = a * np.log(x) + b * np.log(xc) - np.log(a) - sp.betaln(a, b)
    dfront_a = np.log(x) - 1 / a - sp.digamma(a) + sp.digamma(a + b)
    dfront_b = np.log(xc) - sp.digamma(b) + sp.digamma(a + b)
    logI = log_front + np.log(f)
    return logI, dfront_a + df[0] / f, dfront_b + df[1] / f


def log_betainc(a, b, x, xc=None, maxiter=20000):
    """Log of the regularized incomplete beta I_x(a, b) with shape partials.

    Parameters
    ----------
    a, b : array_like
        Positive shape parameters.
    x : array_like
        Evaluation points in [0, 1].
    xc : array_like, optional
        ``1 - x``, when the caller can compute it without cancellation.

    Returns
    -------
    logI, dlogI_da, dlogI_db : ndarray
        ``log I_x(a, b)`` and its partial derivatives in ``a`` and ``b``
        at fixed ``x``.
    """
    if xc is None:
        xc = 1.0 - np.asarray(x, dtype=float)
    a, b, x, xc = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (a, b, x, xc)))
    logI = np.empty(x.shape)
    ga = np.zeros(x.shape)
    gb = np.zeros(x.shape)

    lo = x <= 0
    hi = xc <= 0
    logI[lo] = -np.inf
    logI[hi] = 0.0

    interior = ~(lo | hi)
    direct = interior & (x < (a + 1) / (a + b + 2))
    flip = interior & ~direct

    if np.any(direct):
        l, da, db = _cf_log_grad(a[direct], b[direct], x[direct], xc[direct], maxiter)
        logI[direct], ga[direct], gb[direct] = l, da, db
    if np.any(flip):
        # I_x(a, b) = 1 - I_{1-x}(b, a)
        l, db_, da_ = _cf_log_grad(b[flip], a[flip], xc[flip], x[flip], maxiter)
        J = np.exp(l)
        logI[flip] = np.log1p(-J)
        scale = -J / (1 - J)
        ga[flip] = scale * da_
        gb[flip] = scale * db_
    return logI, ga, gb
