"""Scalar state evolution for the multi-node GAMP family.

Per node the pre-denoising outer state is summarized by the Gram moments
(E[Z^2], E[Z Z_t], E[Z_t^2]) of the true/iterate pair plus the variance
parameter v; the inner state by the effective-channel pair (a, Sigma).
Expectations over the clip channel reduce to closed-form truncated-Gaussian
pieces inside a single Gauss-Hermite sum.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from .denoiser import _phi, f_in, f_in_prime, inverse_mills
from .errors import (NoConvergence, NonPositiveVariance,
                     QuadratureToleranceExceeded)
from .network import EdgeStore, cp_aggregate, cp_sweep
from .quad import PANEL_ORDER, panel_breaks, panel_quadrature

LEMMA_TOL = 1e-6
CONSISTENCY_GATE = 1e-7
MONOTONE_TOL = 1e-8


@dataclass
class SeTrajectory:
    mse: np.ndarray                      # (iterations+1, node_count)
    cp_sweeps: np.ndarray                # (iterations+1,)
    diagnostics: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)

    @property
    def mse_max(self):
        return self.mse.max(axis=1)


def _is_bayes_consistent(v, ez2, ezzt, ezt2):
    scale = max(ez2, abs(v), 1e-12)
    return (abs(ezzt - ezt2) <= CONSISTENCY_GATE * scale
            and abs(v - (ez2 - ezzt)) <= CONSISTENCY_GATE * scale)


def outer_moments(v, ezz, channel, order=PANEL_ORDER):
    """Moments of the output update M = f_out(Z_t, y; v) under the scalar
    model (Z, Z_t) jointly Gaussian with Gram matrix `ezz`.

    Returns (E[M^2], xi_out, zeta) where xi_out averages the derivative in
    the first argument at fixed y and zeta is the distributional derivative
    of the composite map z -> f_out(z_t, channel(z + w)); for the clip
    channel zeta picks up boundary terms where the composition jumps.

    When the inputs describe a matched posterior state the three moments
    coincide; that identity is asserted to LEMMA_TOL and a violation raises
    QuadratureToleranceExceeded.
    """
    ez2, ezzt, ezt2 = (float(m) for m in ezz)
    v = float(v)
    if not v > 0.0:
        raise NonPositiveVariance(f"v must be positive, got {v}")
    if min(ez2, ezt2) < 0.0:
        raise NonPositiveVariance(f"variances must be >= 0, got {ezz}")
    sigma2 = channel.noise_var
    denom = v + sigma2

    if channel.kind == "linear":
        em2 = (ez2 - 2.0 * ezzt + ezt2 + sigma2) / denom ** 2
        xi = 1.0 / denom
        zeta = xi
    else:
        a = channel.clip_threshold
        b = np.sqrt(ezt2)
        r = ezzt / b if b > 0.0 else 0.0
        q2 = max(ez2 - r * r, 0.0)
        vs = q2 + sigma2
        s_s = np.sqrt(vs)
        sd = np.sqrt(denom)
        if b > 0.0:
            # censoring boundaries sit where r*g or b*g crosses +-a; refine
            # panels there since the transition width shrinks with noise
            feats = []
            if r != 0.0:
                feats += [(a / r, s_s / abs(r)), (-a / r, s_s / abs(r))]
            feats += [(a / b, sd / b), (-a / b, sd / b)]
            g, w = panel_quadrature(
                panel_breaks(1.0, 0.0, 12.0, tuple(feats)), order)
            w = w * _phi(g)
        else:
            g, w = np.zeros(1), np.ones(1)

        theta = b * g
        c = r * g
        alpha_h = (a - c) / s_s
        alpha_l = (-a - c) / s_s
        phi_h, phi_l = _phi(alpha_h), _phi(alpha_l)
        p_mid = ndtr(alpha_h) - ndtr(alpha_l)
        p_hi = ndtr(-alpha_h)
        p_lo = ndtr(alpha_l)
        es1 = c * p_mid - s_s * (phi_h - phi_l)
        es2 = (c * c + vs) * p_mid \
            + s_s * (c - a) * phi_l - s_s * (c + a) * phi_h

        alpha_f = (a - theta) / sd
        beta_f = (a + theta) / sd
        m_a = inverse_mills(alpha_f)
        m_b = inverse_mills(beta_f)

        em2_g = (theta * theta * p_mid - 2.0 * theta * es1 + es2) / denom ** 2 \
            + (m_a * m_a * p_hi + m_b * m_b * p_lo) / denom
        xi_g = (p_mid
                + m_a * (m_a - alpha_f) * p_hi
                + m_b * (m_b - beta_f) * p_lo) / denom
        zeta_g = p_mid / denom \
            + (m_a - alpha_f) / sd * (phi_h / s_s) \
            + (m_b - beta_f) / sd * (phi_l / s_s)
        em2 = float(w @ em2_g)
        xi = float(w @ xi_g)
        zeta = float(w @ zeta_g)

    if _is_bayes_consistent(v, ez2, ezzt, ezt2):
        ref = max(abs(em2), 1e-12)
        if abs(xi - em2) > LEMMA_TOL * ref:
            raise QuadratureToleranceExceeded(
                f"matched-state identity xi_out == E[M^2] violated: "
                f"{xi} vs {em2}")
        if abs(zeta - xi) > LEMMA_TOL * ref:
            raise QuadratureToleranceExceeded(
                f"matched-state identity zeta == xi_out violated: "
                f"{zeta} vs {xi}")
    return em2, xi, zeta


def inner_moments(a, sigma, prior, order=PANEL_ORDER):
    """Moments of the input denoiser on U = a X + N(0, sigma).

    Returns (mse, xi_in, E[X f], E[f^2]).  The posterior-mean identities
    E[X f] = E[f^2] = E[X^2] - mse are asserted to LEMMA_TOL.

    Within the slab branch (X, U) is jointly Gaussian, so the cross moments
    reduce exactly to one-dimensional integrals against the U marginals.
    """
    if not sigma > 0.0:
        raise NonPositiveVariance(f"sigma must be positive, got {sigma}")
    rho = prior.rho
    sx2 = prior.slab_var
    su2 = a * a * sx2 + sigma
    kappa = a * sx2 / su2

    if rho == 1.0:
        # pure Gaussian prior: the denoiser is linear and everything closes
        mse = sx2 * sigma / su2
        exf = a * a * sx2 * sx2 / su2
        return mse, kappa, exf, exf

    # responsibility switch location/width in u for panel refinement
    v1, v2 = sigma, su2
    k = 1.0 / v1 - 1.0 / v2
    c0 = np.log(rho / (1.0 - rho)) + 0.5 * np.log(v1 / v2)
    if c0 < 0.0:
        u_s = np.sqrt(-2.0 * c0 / k)
        w_s = 4.0 / (k * u_s)
    else:
        u_s = 0.0
        w_s = np.sqrt(2.0 / k)
    feats = ((u_s, w_s), (-u_s, w_s))

    def marginal(std):
        u, w = panel_quadrature(panel_breaks(std, 0.0, 12.0, feats), order)
        w = w * _phi(u / std) / std
        fv = f_in(u, a, sigma, prior)
        dv = f_in_prime(u, a, sigma, prior)
        return (float(w @ (fv * fv)), float(w @ (u * fv)), float(w @ dv))

    slab_f2, slab_uf, slab_df = marginal(np.sqrt(su2))
    spike_f2, _, spike_df = marginal(np.sqrt(sigma))

    # E[X f(U)] on the slab via E[X|U] = kappa U; spike contributes zero
    exf_slab = kappa * slab_uf
    mse_slab = sx2 - 2.0 * exf_slab + slab_f2
    mse = rho * mse_slab + (1.0 - rho) * spike_f2
    exf = rho * exf_slab
    ef2 = rho * slab_f2 + (1.0 - rho) * spike_f2
    xi_in = rho * slab_df + (1.0 - rho) * spike_df

    ex2 = prior.second_moment
    scale = max(ex2, abs(mse))
    if abs(exf - ef2) > LEMMA_TOL * scale or \
            abs(exf - (ex2 - mse)) > LEMMA_TOL * scale:
        raise QuadratureToleranceExceeded(
            f"posterior-mean identities violated: E[Xf]={exf}, "
            f"E[f^2]={ef2}, E[X^2]-mse={ex2 - mse}")
    return mse, xi_in, exf, ef2


def se_consensus(net, em2, xi_out, store, sweeps):
    """Consensus step on the deterministic payload triple
    (1/(L E[M^2]), 1, 1/xi_out); returns composed per-node
    (Sigma, eta, sigma2_bar) plus the raw incoming aggregate."""
    L = net.node_count
    em2 = np.asarray(em2, dtype=float)
    xi_out = np.asarray(xi_out, dtype=float)
    local = np.stack([1.0 / (L * em2), np.ones(L), 1.0 / xi_out], axis=1)
    for _ in range(sweeps):
        cp_sweep(net, local, store)
    agg = cp_aggregate(net, store)
    sigma_c, eta, sigma2_bar = _compose(local[:, 0], xi_out, agg, L)
    return sigma_c, eta, sigma2_bar, agg


def _compose(own_sigma_term, xi_out, agg, L):
    sigma_c = own_sigma_term + agg[:, 0]
    eta = 1.0 + agg[:, 1]
    sigma2_bar = (1.0 / xi_out + agg[:, 2]) / L
    return sigma_c, eta, sigma2_bar


def se_dgamp(net, schedule, prior, channel, delta, iterations=None,
             order=PANEL_ORDER):
    """State evolution of the consensus algorithm (undamped branch).

    `delta` is the per-node sampling ratio M[l]/N, scalar or length-L.
    Tracks per-node MSE; the effective-noise identity sigma2_bar == Sigma
    is asserted each iteration, and MSE monotonicity across consensus-
    aligned iterations is recorded as a warning when violated.
    """
    L = net.node_count
    iters = schedule.iterations if iterations is None else iterations
    delta = np.broadcast_to(np.asarray(delta, dtype=float), (L,)).copy()
    if np.any(delta <= 0.0):
        raise NonPositiveVariance(f"delta must be positive, got {delta}")
    ex2 = prior.second_moment

    ez2 = ex2 / (L * delta)
    ezzt = np.zeros(L)
    ezt2 = np.zeros(L)
    v = ez2.copy()
    em2 = np.zeros(L)
    xi = np.zeros(L)
    zeta = np.zeros(L)

    store = EdgeStore(net, shape=(3,))
    agg = np.zeros((L, 3))

    mse = np.zeros((iters + 1, L))
    mse[0] = ex2
    cp_sweeps = np.zeros(iters + 1, dtype=int)
    diag = {k: np.zeros((iters, L)) for k in
            ("Sigma", "eta", "sigma2_bar", "em2", "xi_out", "zeta",
             "xi_in", "v")}
    warnings = []

    for t in range(iters):
        active = schedule.active_mask(t, L)
        for l in np.flatnonzero(active):
            em2[l], xi[l], zeta[l] = outer_moments(
                v[l], (ez2[l], ezzt[l], ezt2[l]), channel, order)
        if schedule.is_event(t):
            sigma_c, eta, sigma2_bar, agg = se_consensus(
                net, em2, xi, store, schedule.J)
            cp_sweeps[t + 1:] += schedule.J
        else:
            sigma_c, eta, sigma2_bar = _compose(
                1.0 / (L * em2), xi, agg, L)
        for l in np.flatnonzero(active):
            if abs(sigma2_bar[l] - sigma_c[l]) > LEMMA_TOL * sigma_c[l]:
                raise QuadratureToleranceExceeded(
                    f"effective-noise identity sigma2_bar == Sigma violated "
                    f"at t={t}, node {l}: {sigma2_bar[l]} vs {sigma_c[l]}")
            ms, xin, exf, ef2 = inner_moments(
                eta[l] / L, sigma_c[l], prior, order)
            mse_scale = L * delta[l]
            v[l] = ms / mse_scale
            ezzt[l] = exf / mse_scale
            ezt2[l] = ef2 / mse_scale
            mse[t + 1, l] = ms
            diag["xi_in"][t, l] = xin
        inactive = ~active
        mse[t + 1, inactive] = mse[t, inactive]
        diag["Sigma"][t] = sigma_c
        diag["eta"][t] = eta
        diag["sigma2_bar"][t] = sigma2_bar
        diag["em2"][t] = em2
        diag["xi_out"][t] = xi
        diag["zeta"][t] = zeta
        diag["v"][t] = v

    aligned = [tt for tt in range(1, iters + 1)
               if (tt - 1) % schedule.T == 0]
    for prev, cur in zip(aligned, aligned[1:]):
        bad = mse[cur] > mse[prev] + MONOTONE_TOL * np.maximum(mse[prev], 1.0)
        for l in np.flatnonzero(bad):
            warnings.append(
                f"MSE increased across consensus-aligned iterations "
                f"{prev} -> {cur} at node {l}: "
                f"{mse[prev, l]} -> {mse[cur, l]}")
    return SeTrajectory(mse=mse, cp_sweeps=cp_sweeps, diagnostics=diag,
                        warnings=warnings)


def se_centralized(prior, channel, delta_total, node_count, iterations,
                   order=PANEL_ORDER):
    """State evolution of the fully-coordinated variant; the recursion
    collapses to one scalar track regardless of node_count."""
    if not delta_total > 0.0:
        raise NonPositiveVariance(f"delta_total must be positive, got {delta_total}")
    ex2 = prior.second_moment
    ez2 = ex2 / delta_total
    ezzt = 0.0
    ezt2 = 0.0
    v = ez2

    mse = np.zeros((iterations + 1, 1))
    mse[0] = ex2
    diag = {k: np.zeros((iterations, 1)) for k in
            ("Sigma", "sigma2_bar", "em2", "xi_out", "zeta", "xi_in", "v")}

    for t in range(iterations):
        em2, xi, zeta = outer_moments(v, (ez2, ezzt, ezt2), channel, order)
        sigma_c = 1.0 / em2
        sigma2_bar = 1.0 / xi
        if abs(sigma2_bar - sigma_c) > LEMMA_TOL * sigma_c:
            raise QuadratureToleranceExceeded(
                f"effective-noise identity violated at t={t}: "
                f"{sigma2_bar} vs {sigma_c}")
        ms, xin, exf, ef2 = inner_moments(1.0, sigma_c, prior, order)
        v = ms / delta_total
        ezzt = exf / delta_total
        ezt2 = ef2 / delta_total
        mse[t + 1] = ms
        diag["Sigma"][t] = sigma_c
        diag["sigma2_bar"][t] = sigma2_bar
        diag["em2"][t] = em2
        diag["xi_out"][t] = xi
        diag["zeta"][t] = zeta
        diag["xi_in"][t] = xin
        diag["v"][t] = v
    return SeTrajectory(mse=mse,
                        cp_sweeps=np.zeros(iterations + 1, dtype=int),
                        diagnostics=diag)


def se_naive(net, gamma, prior, channel, delta, iterations,
             order=PANEL_ORDER):
    """State evolution of the one-hop averaging baseline with the matched
    (genie) input denoiser for the mixed effective channel."""
    if gamma < 0.0:
        raise ValueError(f"gamma must be >= 0, got {gamma}")
    L = net.node_count
    delta = np.broadcast_to(np.asarray(delta, dtype=float), (L,)).copy()
    if np.any(delta <= 0.0):
        raise NonPositiveVariance(f"delta must be positive, got {delta}")
    ex2 = prior.second_moment

    ez2 = ex2 / (L * delta)
    ezzt = np.zeros(L)
    ezt2 = np.zeros(L)
    v = ez2.copy()
    em2 = np.zeros(L)
    xi = np.zeros(L)

    mse = np.zeros((iterations + 1, L))
    mse[0] = ex2
    diag = {k: np.zeros((iterations, L)) for k in
            ("Sigma", "em2", "xi_out", "xi_in", "v")}

    for t in range(iterations):
        for l in range(L):
            em2[l], xi[l], _ = outer_moments(
                v[l], (ez2[l], ezzt[l], ezt2[l]), channel, order)
        inv = 1.0 / (L * em2)
        for l in range(L):
            nbrs = list(net.neighbors[l])
            d_l = len(nbrs)
            sigma_c = (1.0 - gamma * d_l) ** 2 * inv[l] \
                + gamma * gamma * float(np.sum(inv[nbrs]))
            ms, xin, exf, ef2 = inner_moments(1.0 / L, sigma_c, prior, order)
            mse_scale = L * delta[l]
            v[l] = ms / mse_scale
            ezzt[l] = exf / mse_scale
            ezt2[l] = ef2 / mse_scale
            mse[t + 1, l] = ms
            diag["Sigma"][t, l] = sigma_c
            diag["xi_in"][t, l] = xin
        diag["em2"][t] = em2
        diag["xi_out"][t] = xi
        diag["v"][t] = v
    return SeTrajectory(mse=mse,
                        cp_sweeps=np.zeros(iterations + 1, dtype=int),
                        diagnostics=diag)


def fixed_point(source, tol=1e-10, max_iter=500):
    """First iteration where the per-node MSE stops moving.

    `source` is an SeTrajectory, an MSE array (rows = iterations), or a
    callable mapping an iteration budget to either of those.  Returns
    (mse_row_at_convergence, t) for the first t with
    |mse[t+1] - mse[t]| < tol * max(mse[t], 1e-12) at every node; raises
    NoConvergence with the final step size if the trajectory never settles.
    """
    if callable(source):
        source = source(max_iter)
    arr = source.mse if isinstance(source, SeTrajectory) else \
        np.asarray(source, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    delta = np.inf
    for t in range(arr.shape[0] - 1):
        step = np.abs(arr[t + 1] - arr[t])
        gate = tol * np.maximum(arr[t], 1e-12)
        delta = float(np.max(step))
        if np.all(step < gate):
            return arr[t + 1], t
    raise NoConvergence(delta, arr.shape[0] - 1)
