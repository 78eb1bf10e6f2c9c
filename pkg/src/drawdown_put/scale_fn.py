"""
Scale functions of the log-price X_t = x + (r - sigma^2/2) t + sigma B_t.

W(x) = C e^x - C e^{gamma x} and Z(x) = 1 + r * int_0^x W(y) dy, with
gamma = -2r/sigma^2 and C = 1/(r + sigma^2/2). Every function accepts a float
or a numpy array and returns the same shape (a plain float for scalars).
"""

import numpy as np
from numpy.typing import ArrayLike

from .models import DomainError, ModelParams

# exp overflows just above 709; past this point W and Z go through their logs.
LOG_STABLE_THRESHOLD = 500.0


def gamma(params: ModelParams) -> float:
    """Second root of psi(theta) = r; always negative."""
    return -2.0 * params.r / params.sigma**2


def c_const(params: ModelParams) -> float:
    return 1.0 / (params.r + 0.5 * params.sigma**2)


def _out(values: np.ndarray) -> float | np.ndarray:
    return values.item() if values.ndim == 0 else values


def _half_line(x: ArrayLike, name: str = "x", strict: bool = False) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if np.any(np.isnan(arr)):
        raise DomainError(f"{name} contains NaN")
    if strict and np.any(arr <= 0):
        raise DomainError(f"{name} must be strictly positive, got min {arr.min()!r}")
    if np.any(arr < 0):
        raise DomainError(
            f"scale functions live on [0, inf); {name} has min {arr.min()!r}"
        )
    return arr


def _split(x: np.ndarray, small_fn, large_fn) -> np.ndarray:
    """Evaluate small_fn below LOG_STABLE_THRESHOLD and large_fn above it."""
    flat = np.atleast_1d(x)
    out = np.empty_like(flat)
    small = flat <= LOG_STABLE_THRESHOLD
    out[small] = small_fn(flat[small])
    if np.any(~small):
        with np.errstate(over="ignore"):
            out[~small] = large_fn(flat[~small])
    return out.reshape(x.shape)


def log_scale_w(params: ModelParams, x: ArrayLike) -> float | np.ndarray:
    """log W(x); -inf at x = 0."""
    x = _half_line(x)
    g = gamma(params)
    with np.errstate(divide="ignore"):
        return _out(np.log(c_const(params)) + x + np.log(-np.expm1((g - 1.0) * x)))


def scale_w(params: ModelParams, x: ArrayLike) -> float | np.ndarray:
    """First scale function W(x) = C(e^x - e^{gamma x})."""
    x = _half_line(x)
    g, big_c = gamma(params), c_const(params)
    return _out(
        _split(
            x,
            lambda s: big_c * np.exp(s) * -np.expm1((g - 1.0) * s),
            lambda s: np.exp(log_scale_w(params, s)),
        )
    )


def scale_w_derivs(
    params: ModelParams, x: ArrayLike
) -> tuple[float | np.ndarray, float | np.ndarray]:
    """(W'(x), W''(x))."""
    x = _half_line(x)
    g, big_c = gamma(params), c_const(params)
    log_c = np.log(big_c)
    w1 = _split(
        x,
        lambda s: big_c * (np.exp(s) - g * np.exp(g * s)),
        lambda s: np.exp(log_c + s + np.log1p(-g * np.exp((g - 1.0) * s))),
    )
    w2 = _split(
        x,
        lambda s: big_c * (np.exp(s) - g * g * np.exp(g * s)),
        lambda s: np.exp(log_c + s + np.log1p(-g * g * np.exp((g - 1.0) * s))),
    )
    return _out(w1), _out(w2)


def log_scale_z(params: ModelParams, x: ArrayLike) -> float | np.ndarray:
    """log Z(x), using that the constant of the antiderivative vanishes."""
    x = _half_line(x)
    g = gamma(params)
    rc = params.r * c_const(params)
    return _out(x + np.log(rc) + np.log1p(-np.exp((g - 1.0) * x) / g))


def scale_z(params: ModelParams, x: ArrayLike) -> float | np.ndarray:
    """Second scale function Z(x) = 1 + rC(e^x - 1) - (rC/gamma)(e^{gamma x} - 1)."""
    x = _half_line(x)
    g = gamma(params)
    rc = params.r * c_const(params)
    return _out(
        _split(
            x,
            lambda s: 1.0 + rc * np.expm1(s) - (rc / g) * np.expm1(g * s),
            lambda s: np.exp(log_scale_z(params, s)),
        )
    )


def scale_z_deriv(params: ModelParams, x: ArrayLike) -> float | np.ndarray:
    """Z'(x), differentiated term by term from the antiderivative."""
    x = _half_line(x)
    g = gamma(params)
    rc = params.r * c_const(params)
    return _out(
        _split(
            x,
            lambda s: rc * np.exp(s) - (rc / g) * g * np.exp(g * s),
            lambda s: np.exp(np.log(rc) + s + np.log(-np.expm1((g - 1.0) * s))),
        )
    )


def scale_w_ratio(params: ModelParams, num: ArrayLike, den: ArrayLike) -> float | np.ndarray:
    """W(num)/W(den) as exp(num - den) times a ratio of expm1 terms; no overflow."""
    num = _half_line(num, "num")
    den = _half_line(den, "den", strict=True)
    g = gamma(params)
    return _out(np.exp(num - den) * np.expm1((g - 1.0) * num) / np.expm1((g - 1.0) * den))


def exit_above(params: ModelParams, s: ArrayLike, t: ArrayLike) -> float | np.ndarray:
    """E[e^{-r T}; the log-price climbs t - s before dropping s], i.e. W(s)/W(t)."""
    return scale_w_ratio(params, s, t)


def exit_below(params: ModelParams, s: ArrayLike, t: ArrayLike) -> float | np.ndarray:
    """
    Z(s) - Z(t) W(s)/W(t): discounted probability of leaving [0, t] through 0
    when started at s. Algebraically
    e^{gamma s} (1 - e^{(gamma-1)(t-s)}) / (1 - e^{(gamma-1) t}),
    exactly 1 at s = 0 and 0 at s = t, with no positive exponents for s <= t.
    """
    s = _half_line(s, "s")
    t = _half_line(t, "t", strict=True)
    g = gamma(params)
    return _out(np.exp(g * s) * np.expm1((g - 1.0) * (t - s)) / np.expm1((g - 1.0) * t))


def lambda_c(params: ModelParams, d: ArrayLike) -> float | np.ndarray:
    """lambda(d, r) = W'(d)/W(d) > 1."""
    d = _half_line(d, "d", strict=True)
    g = gamma(params)
    u = np.exp((g - 1.0) * d)
    return _out((1.0 - g * u) / -np.expm1((g - 1.0) * d))


def lambda_excess(params: ModelParams, d: ArrayLike) -> float | np.ndarray:
    """lambda(d, r) - 1 = (1 - gamma) e^{(gamma-1) d} / (1 - e^{(gamma-1) d}), accurate when lambda rounds to 1."""
    d = _half_line(d, "d", strict=True)
    g = gamma(params)
    return _out((1.0 - g) * np.exp((g - 1.0) * d) / -np.expm1((g - 1.0) * d))


def log_lambda_excess(params: ModelParams, d: ArrayLike) -> float | np.ndarray:
    """log(lambda(d, r) - 1); stays finite where lambda_excess underflows to 0."""
    d = _half_line(d, "d", strict=True)
    g = gamma(params)
    return _out(np.log(1.0 - g) + (g - 1.0) * d - np.log(-np.expm1((g - 1.0) * d)))


def delta_c(params: ModelParams, d: ArrayLike) -> float | np.ndarray:
    """
    Delta(d, r) = (sigma^2/2)[W'(d) - W''(d)/lambda(d, r)].

    W'^2 - W W'' collapses to C^2 (1 - gamma)^2 e^{(1 + gamma) d}, which gives
    Delta = (1 - gamma) e^{gamma d} / (1 - gamma e^{(gamma - 1) d}).
    """
    d = _half_line(d, "d", strict=True)
    g = gamma(params)
    return _out((1.0 - g) * np.exp(g * d) / (1.0 - g * np.exp((g - 1.0) * d)))


def drawdown_laplace(params: ModelParams) -> float:
    """E[e^{-r tau_D}] = Z(c) - r W(c)^2 / W'(c); coincides with Delta(c, r)."""
    w = scale_w(params, params.c)
    w1, _ = scale_w_derivs(params, params.c)
    return scale_z(params, params.c) - params.r * w * w / w1


def drawdown_max_density(params: ModelParams, y: ArrayLike) -> float | np.ndarray:
    """Discounted density in y of the running-maximum gain at tau_D: Delta lambda e^{-lambda y}."""
    y = _half_line(y, "y")
    lam = lambda_c(params, params.c)
    return _out(delta_c(params, params.c) * lam * np.exp(-lam * y))


def laplace_exponent(params: ModelParams, theta: ArrayLike) -> float | np.ndarray:
    """psi(theta) = (r - sigma^2/2) theta + sigma^2 theta^2 / 2."""
    theta = np.asarray(theta, dtype=float)
    half_var = 0.5 * params.sigma**2
    return _out((params.r - half_var) * theta + half_var * theta**2)


def laplace_root(params: ModelParams) -> float:
    """Larger root of psi(theta) = r; the Laplace transform of W exists beyond it."""
    half_var = 0.5 * params.sigma**2
    b = params.r - half_var
    disc = np.sqrt(b * b + 4.0 * half_var * params.r)
    return float((-b + disc) / (2.0 * half_var))
