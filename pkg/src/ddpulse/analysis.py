"""Decay and line-shape fits.

Both fits work on internally normalized abscissae (divided by the data
span), so results scale exactly with the units of ``x``.  Minimization is
``scipy.optimize.least_squares`` in Levenberg-Marquardt mode with a
finite-difference Jacobian.

The estimator classes at the bottom wrap the functional API in the
scikit-learn ``fit``/``predict`` interface.
"""

from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted, check_X_y, check_array

from ._validation import check_positive, check_series
from .exceptions import InvalidInputError

XTOL = 1e-12
MAX_NFEV = 2000
N_SEEDS = 16
_SERIES_CUTOFF = 1e-8


@dataclass(frozen=True)
class DataSeries:
    """Sampled curve with strictly increasing ``x`` and optional ``sigma``."""

    x: np.ndarray
    y: np.ndarray
    sigma: np.ndarray = None

    def __post_init__(self):
        x, y, sigma = check_series(self.x, self.y, self.sigma)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "sigma", sigma)

    def __len__(self):
        return self.x.size


@dataclass(frozen=True)
class FitDiagnostics:
    residual_norm: float
    iterations: int
    converged: bool
    status: int
    message: str


@dataclass(frozen=True)
class DecayFit:
    gamma_max: float
    t2: float
    amplitude: float
    offset: float
    diagnostics: FitDiagnostics

    @classmethod
    def from_rate(cls, gamma_max, amplitude, offset, diagnostics):
        return cls(gamma_max, 2.0 / gamma_max, amplitude, offset, diagnostics)


@dataclass(frozen=True)
class LorentzianFit:
    center: float
    fwhm: float
    depth: float
    asymptote: float
    diagnostics: FitDiagnostics


def _uniform_average(z):
    # (1 - e^-z)/z, with its Taylor series near 0
    z = np.asarray(z, dtype=float)
    small = np.abs(z) < _SERIES_CUTOFF
    safe = np.where(small, 1.0, z)
    return np.where(small, 1.0 - z / 2 + z * z / 6, -np.expm1(-safe) / safe)


def flat_rate_decay_model(t, gamma_max, amplitude=1.0, offset=0.0):
    """Exponential decay averaged over rates uniform in ``[0, gamma_max]``.

    ``amplitude * (1 - exp(-gamma_max t)) / (gamma_max t) + offset``.

    Raises
    ------
    InvalidParameterError
        If ``gamma_max <= 0``.
    """
    gamma_max = check_positive(gamma_max, "gamma_max")
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise InvalidInputError("t must be >= 0")
    out = amplitude * _uniform_average(gamma_max * t) + offset
    return float(out) if out.ndim == 0 else out


def _diagnostics(res, jac_rank_ok):
    converged = bool(res.status > 0 and jac_rank_ok)
    return FitDiagnostics(
        residual_norm=float(np.sqrt(2 * res.cost)),
        iterations=int(res.nfev),
        converged=converged,
        status=int(res.status),
        message=str(res.message),
    )


def _full_rank(jac, rtol=1e-8):
    s = np.linalg.svd(jac, compute_uv=False)
    return bool(s.size and s[-1] > rtol * s[0])


def _lm(fun, p0):
    return least_squares(
        fun, p0, method="lm", xtol=XTOL, ftol=1e-15, gtol=1e-15, max_nfev=MAX_NFEV
    )


def _linear_amplitudes(basis, y, weights, fit_offset, offset):
    """Best amplitude (and offset) for a fixed shape column ``basis``."""
    if fit_offset:
        A = np.column_stack([basis, np.ones_like(basis)]) * weights[:, None]
        coef, *_ = np.linalg.lstsq(A, y * weights, rcond=None)
        return float(coef[0]), float(coef[1])
    denom = np.dot(basis * weights, basis * weights)
    amp = np.dot(basis * weights, (y - offset) * weights) / denom if denom > 0 else 0.0
    return float(amp), float(offset)


def fit_flat_rate_decay(data, fit_offset=True, offset=0.0):
    """Fit :func:`flat_rate_decay_model` to ``data``.

    Parameters
    ----------
    data : DataSeries
        Decay curve; ``sigma`` (if present) weights the residuals.
    fit_offset : bool
        Float the offset; otherwise it is held at ``offset``.

    Returns
    -------
    DecayFit
        ``t2 = 2 / gamma_max``.  Non-convergence (including degenerate data
        such as a constant curve) is reported in ``diagnostics.converged``.

    Notes
    -----
    16 log-spaced seeds for ``gamma_max`` span ``[0.1, 100] / T_span``.  At
    each seed amplitude and offset are solved linearly, then all parameters
    are refined by Levenberg-Marquardt.  The rate is optimized as
    ``log(gamma_max T_span)``.
    """
    npar = 3 if fit_offset else 2
    x, y, sigma = check_series(data.x, data.y, data.sigma, min_points=npar + 1)
    span = x[-1] - x[0]
    u = x / span
    weights = np.ones_like(y) if sigma is None else 1.0 / sigma

    def unpack(p):
        c = p[2] if fit_offset else offset
        return np.exp(p[0]), p[1], c

    def resid(p):
        g, amp, c = unpack(p)
        return (amp * _uniform_average(g * u) + c - y) * weights

    best = None
    for g0 in np.geomspace(0.1, 100.0, N_SEEDS):
        amp0, c0 = _linear_amplitudes(_uniform_average(g0 * u), y, weights, fit_offset, offset)
        p0 = [np.log(g0), amp0] + ([c0] if fit_offset else [])
        res = _lm(resid, np.array(p0))
        if best is None or res.cost < best.cost:
            best = res
    g, amp, c = unpack(best.x)
    diag = _diagnostics(best, _full_rank(best.jac))
    return DecayFit.from_rate(float(g / span), float(amp), float(c), diag)


def lorentzian_model(x, center, fwhm, depth, asymptote=1.0):
    """``asymptote - depth (w/2)^2 / ((x - center)^2 + (w/2)^2)``."""
    hw2 = (0.5 * fwhm) ** 2
    x = np.asarray(x, dtype=float)
    return asymptote - depth * hw2 / ((x - center) ** 2 + hw2)


def _lorentz_guess(u, y):
    base = np.median(y)
    k = int(np.argmax(np.abs(y - base)))
    depth = base - y[k]
    half = np.abs(y - base) < 0.5 * abs(depth)
    left = np.nonzero(half[:k])[0]
    right = np.nonzero(half[k:])[0]
    lo = u[left[-1]] if left.size else None
    hi = u[k + right[0]] if right.size else None
    if lo is not None and hi is not None:
        width = hi - lo
    elif lo is not None or hi is not None:
        width = 2 * abs((hi if hi is not None else lo) - u[k])
    else:
        width = 0.1
    return u[k], max(width, np.min(np.diff(u))), depth, base


def fit_lorentzian(data, fit_asymptote=True, asymptote=1.0):
    """Fit a Lorentzian dip (or peak, with negative depth) to ``data``.

    The center starts at the point farthest from the median and the width at
    the half-depth crossings around it; a few width multiples are tried as
    extra starts.

    Returns
    -------
    LorentzianFit
    """
    npar = 4 if fit_asymptote else 3
    x, y, sigma = check_series(data.x, data.y, data.sigma, min_points=max(5, npar + 1))
    span = x[-1] - x[0]
    u = (x - x[0]) / span
    weights = np.ones_like(y) if sigma is None else 1.0 / sigma

    def unpack(p):
        c = p[3] if fit_asymptote else asymptote
        return p[0], np.exp(p[1]), p[2], c

    def resid(p):
        f0, w, depth, c = unpack(p)
        return (lorentzian_model(u, f0, w, depth, c) - y) * weights

    f0, w0, depth0, base = _lorentz_guess(u, y)
    if not fit_asymptote:
        base = asymptote
    best = None
    for scale in (1.0, 0.5, 2.0):
        shape = -lorentzian_model(u, f0, w0 * scale, 1.0, 0.0)
        depth, c = _linear_amplitudes(shape, y, weights, fit_asymptote, base)
        p0 = [f0, np.log(w0 * scale), depth] + ([c] if fit_asymptote else [])
        res = _lm(resid, np.array(p0, dtype=float))
        if best is None or res.cost < best.cost:
            best = res
    f0, w, depth, c = unpack(best.x)
    diag = _diagnostics(best, _full_rank(best.jac))
    return LorentzianFit(float(x[0] + f0 * span), float(w * span), float(depth), float(c), diag)


class _CurveRegressor(RegressorMixin, BaseEstimator):
    """Shared plumbing: a single feature column, sorted before fitting."""

    def _series(self, X, y, sample_weight):
        X, y = check_X_y(X, y, y_numeric=True)
        if X.shape[1] != 1:
            raise InvalidInputError(f"expected a single feature column, got {X.shape[1]}")
        order = np.argsort(X[:, 0], kind="stable")
        sigma = None
        if sample_weight is not None:
            sw = np.asarray(sample_weight, dtype=float)[order]
            if np.any(sw <= 0):
                raise InvalidInputError("sample_weight must be positive")
            sigma = 1.0 / np.sqrt(sw)
        return DataSeries(X[order, 0], y[order], sigma)

    def _x(self, X):
        check_is_fitted(self)
        X = check_array(X)
        if X.shape[1] != 1:
            raise InvalidInputError(f"expected a single feature column, got {X.shape[1]}")
        return X[:, 0]


class FlatRateDecayRegressor(_CurveRegressor):
    """Estimator form of :func:`fit_flat_rate_decay`.

    Attributes
    ----------
    gamma_max_, t2_, amplitude_, offset_ : float
    result_ : DecayFit
    """

    def __init__(self, fit_offset=True, offset=0.0):
        self.fit_offset = fit_offset
        self.offset = offset

    def fit(self, X, y, sample_weight=None):
        result = fit_flat_rate_decay(self._series(X, y, sample_weight), self.fit_offset, self.offset)
        self.result_ = result
        self.gamma_max_ = result.gamma_max
        self.t2_ = result.t2
        self.amplitude_ = result.amplitude
        self.offset_ = result.offset
        return self

    def predict(self, X):
        return flat_rate_decay_model(self._x(X), self.gamma_max_, self.amplitude_, self.offset_)


class LorentzianRegressor(_CurveRegressor):
    """Estimator form of :func:`fit_lorentzian`.

    Attributes
    ----------
    center_, fwhm_, depth_, asymptote_ : float
    result_ : LorentzianFit
    """

    def __init__(self, fit_asymptote=True, asymptote=1.0):
        self.fit_asymptote = fit_asymptote
        self.asymptote = asymptote

    def fit(self, X, y, sample_weight=None):
        result = fit_lorentzian(self._series(X, y, sample_weight), self.fit_asymptote, self.asymptote)
        self.result_ = result
        self.center_ = result.center
        self.fwhm_ = result.fwhm
        self.depth_ = result.depth
        self.asymptote_ = result.asymptote
        return self

    def predict(self, X):
        return lorentzian_model(self._x(X), self.center_, self.fwhm_, self.depth_, self.asymptote_)
