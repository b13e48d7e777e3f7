"""Posterior-mean denoisers for the spike-slab input and the two output
channels, plus a slow quadrature oracle for the output posterior."""

from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.special import erfcx, expit, ndtr

from .channel import SignalPrior, Channel
from .errors import (InvalidThreshold, NonPositiveVariance,
                     QuadratureNonConvergence)

_SQRT_2PI = np.sqrt(2.0 * np.pi)


def _phi(x):
    return np.exp(-0.5 * x * x) / _SQRT_2PI


def inverse_mills(alpha):
    """phi(alpha) / Q(alpha), stable over the whole real line.

    The erfcx form is exact but overflows once alpha < -26 or so; far in
    that regime Q(alpha) ~ 1 and the ratio collapses to phi(alpha).
    """
    alpha = np.asarray(alpha, dtype=float)
    safe = np.maximum(alpha, -25.0)
    with np.errstate(over="ignore"):
        main = 2.0 / (_SQRT_2PI * erfcx(safe / np.sqrt(2.0)))
    out = np.where(alpha > -25.0, main, _phi(alpha))
    return out if out.ndim else float(out)


def _check_var(value, name):
    if not np.all(np.asarray(value) > 0.0):
        raise NonPositiveVariance(f"{name} must be positive, got {value}")


def _spike_slab_parts(u, a, s2, prior):
    """Responsibility, slab Wiener mean, and slab posterior variance."""
    rho = prior.rho
    v2 = a * a * prior.slab_var + s2
    wiener = (a / rho) * u / v2
    var_post = (1.0 / rho) * s2 / v2
    if rho == 1.0:
        resp = np.ones_like(np.asarray(u, dtype=float))
    else:
        log_odds = (np.log(rho) - np.log1p(-rho)
                    + 0.5 * np.log(s2 / v2)
                    + 0.5 * u * u * (1.0 / s2 - 1.0 / v2))
        resp = expit(log_odds)
    return resp, wiener, var_post


def f_in(u, a, s2, prior):
    """Posterior mean E[X | aX + sqrt(s2) G = u] under the spike-slab prior."""
    _check_var(s2, "s2")
    u = np.asarray(u, dtype=float)
    resp, wiener, _ = _spike_slab_parts(u, a, s2, prior)
    out = resp * wiener
    return out if out.ndim else float(out)


def f_in_second_moment(u, a, s2, prior):
    """Posterior second moment E[X^2 | u]."""
    _check_var(s2, "s2")
    u = np.asarray(u, dtype=float)
    resp, wiener, var_post = _spike_slab_parts(u, a, s2, prior)
    out = resp * (wiener * wiener + var_post)
    return out if out.ndim else float(out)


def f_in_prime(u, a, s2, prior):
    """d f_in / du = a * Var[X | u] / s2 (posterior-variance identity)."""
    _check_var(s2, "s2")
    u = np.asarray(u, dtype=float)
    resp, wiener, var_post = _spike_slab_parts(u, a, s2, prior)
    var_total = resp * (wiener * wiener + var_post) - (resp * wiener) ** 2
    out = a * var_total / s2
    return out if out.ndim else float(out)


def f_out_linear(theta, y, v, sigma2):
    """Score-style output update for y = z + w: (theta - y) / (v + sigma2)."""
    _check_var(v, "v")
    _check_var(sigma2, "sigma2")
    theta = np.asarray(theta, dtype=float)
    out = (theta - y) / (v + sigma2)
    return out if out.ndim else float(out)


def f_out_clip(theta, y, v, sigma2, clip_threshold):
    """Output update for y = clip(z + w, A), branch chosen by where y sits.

    Interior samples behave linearly; saturated ones contribute a one-sided
    inverse-Mills term from the censored Gaussian tail.
    """
    _check_var(v, "v")
    _check_var(sigma2, "sigma2")
    a = clip_threshold
    if a is None or not (a > 0.0):
        raise InvalidThreshold(a)
    theta = np.asarray(theta, dtype=float)
    y = np.asarray(y, dtype=float)
    denom = v + sigma2
    sd = np.sqrt(denom)
    alpha = (a - theta) / sd
    beta = (a + theta) / sd
    out = np.where(y >= a, -inverse_mills(alpha) / sd,
                   np.where(y <= -a, inverse_mills(beta) / sd,
                            (theta - y) / denom))
    return out if out.ndim else float(out)


def f_out_prime(theta, y, v, sigma2, channel):
    """Partial derivative of the output update in theta."""
    _check_var(v, "v")
    _check_var(sigma2, "sigma2")
    theta = np.asarray(theta, dtype=float)
    denom = v + sigma2
    if channel.kind == "linear":
        out = np.broadcast_to(1.0 / denom, np.broadcast(theta, y).shape).copy()
        return out if out.ndim else float(out)
    a = channel.clip_threshold
    y = np.asarray(y, dtype=float)
    sd = np.sqrt(denom)
    alpha = (a - theta) / sd
    beta = (a + theta) / sd
    m_a = inverse_mills(alpha)
    m_b = inverse_mills(beta)
    out = np.where(y >= a, m_a * (m_a - alpha) / denom,
                   np.where(y <= -a, m_b * (m_b - beta) / denom,
                            1.0 / denom))
    return out if out.ndim else float(out)


def posterior_z_oracle(theta, y, v, channel, rel_tol=1e-9):
    """E[Z | theta, y] by adaptive quadrature against the exact likelihood.

    Scalar-only reference implementation; used to cross-check the closed
    forms, not in the iteration loop.
    """
    _check_var(v, "v")
    sigma = np.sqrt(channel.noise_var)
    sv = np.sqrt(v)
    if channel.kind == "linear":
        def lik(z):
            return _phi((y - z) / sigma) / sigma
        y_ref = y
    else:
        a = channel.clip_threshold
        if y >= a:
            def lik(z):
                return ndtr((z - a) / sigma)
        elif y <= -a:
            def lik(z):
                return ndtr(-(z + a) / sigma)
        else:
            def lik(z):
                return _phi((y - z) / sigma) / sigma
        y_ref = min(max(y, -a), a)

    lo = min(theta, y_ref) - 45.0 * max(sv, sigma)
    hi = max(theta, y_ref) + 45.0 * max(sv, sigma)

    def prior_pdf(z):
        return _phi((z - theta) / sv) / sv

    den, den_err = quad(lambda z: lik(z) * prior_pdf(z), lo, hi,
                        limit=250, epsabs=0.0, epsrel=1e-12,
                        points=[theta, y_ref])
    num, num_err = quad(lambda z: z * lik(z) * prior_pdf(z), lo, hi,
                        limit=250, epsabs=0.0, epsrel=1e-12,
                        points=[theta, y_ref])
    if den <= 0.0 or den_err > rel_tol * den or \
            num_err > rel_tol * max(abs(num), den * max(abs(theta), sv)):
        raise QuadratureNonConvergence(
            f"posterior quadrature error too large (den={den:.3e}, "
            f"den_err={den_err:.3e}, num_err={num_err:.3e})")
    return num / den


@dataclass(frozen=True)
class InnerDenoiser:
    """Input-side posterior-mean denoiser bound to a prior."""

    prior: SignalPrior

    def f(self, u, a, s2):
        return f_in(u, a, s2, self.prior)

    def df(self, u, a, s2):
        return f_in_prime(u, a, s2, self.prior)


@dataclass(frozen=True)
class OuterDenoiser:
    """Output-side update bound to a channel."""

    channel: Channel

    def f(self, theta, y, v):
        ch = self.channel
        if ch.kind == "linear":
            return f_out_linear(theta, y, v, ch.noise_var)
        return f_out_clip(theta, y, v, ch.noise_var, ch.clip_threshold)

    def df(self, theta, y, v):
        return f_out_prime(theta, y, v, self.channel.noise_var, self.channel)


def bayes_denoisers(prior, channel):
    return InnerDenoiser(prior), OuterDenoiser(channel)
