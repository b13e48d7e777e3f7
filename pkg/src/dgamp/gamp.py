"""Multi-node GAMP simulators: consensus-based, centralized, and the naive
neighborhood-averaging baseline.

All three share the same per-node outer/inner structure; they differ only in
how the per-node linear estimates get combined between the two half-steps.
"""

from dataclasses import dataclass, field

import numpy as np

from .denoiser import bayes_denoisers
from .errors import DivergenceError, NonPositiveSigma2, ZeroXiOut
from .network import EdgeStore, cp_aggregate, cp_sweep

XI_OUT_FLOOR = 1e-14
MSE_DIVERGENCE_LIMIT = 1e6


@dataclass(frozen=True)
class Schedule:
    """Consensus schedule: events every T iterations, J sweeps per event,
    node l active while (t mod T) < T_per_node[l]."""

    T: int
    J: int
    iterations: int
    T_per_node: tuple = None

    def __post_init__(self):
        if self.T < 1 or self.J < 1 or self.iterations < 1:
            raise ValueError("T, J, iterations must all be >= 1")
        if self.T_per_node is not None:
            tl = tuple(int(t) for t in self.T_per_node)
            if min(tl) < 1 or max(tl) != self.T:
                raise ValueError(
                    f"per-node periods must lie in [1, T] with max == T, got {tl}")
            object.__setattr__(self, "T_per_node", tl)

    def periods(self, node_count):
        if self.T_per_node is None:
            return np.full(node_count, self.T, dtype=int)
        if len(self.T_per_node) != node_count:
            raise ValueError(
                f"T_per_node has {len(self.T_per_node)} entries for "
                f"{node_count} nodes")
        return np.array(self.T_per_node, dtype=int)

    def active_mask(self, t, node_count):
        return (t % self.T) < self.periods(node_count)

    def is_event(self, t):
        return t % self.T == 0


@dataclass
class NodeState:
    """Everything node l carries between iterations."""

    node_count: int
    z_tilde: np.ndarray
    v: float
    x_hat: np.ndarray
    z_hat: np.ndarray = None
    xi_out: float = None
    xi_in: float = None
    x_msg: np.ndarray = None


@dataclass
class Trajectory:
    mse: np.ndarray                      # (iterations+1, node_count)
    cp_sweeps: np.ndarray                # (iterations+1,)
    diagnostics: dict = field(default_factory=dict)
    inputs: dict = field(default_factory=dict)

    @property
    def mse_max(self):
        return self.mse.max(axis=1)


def outer_step(state, y, A, denoiser):
    """Output half-step: posterior z estimate, sensitivity, linear message."""
    state.z_hat = denoiser.f(state.z_tilde, y, state.v)
    xi = float(np.mean(denoiser.df(state.z_tilde, y, state.v)))
    if abs(xi) < XI_OUT_FLOOR:
        raise ZeroXiOut(xi)
    state.xi_out = xi
    state.x_msg = state.x_hat / state.node_count - (A.T @ state.z_hat) / xi
    return state


class ConsensusBuffers:
    """Warm-started edge stores for the three consensus payloads."""

    def __init__(self, net, n):
        self.x = EdgeStore(net, shape=(n,))
        self.count = EdgeStore(net)
        self.inv_xi = EdgeStore(net)


def consensus_exchange(net, x_msg, xi_out, buffers, sweeps):
    """Run `sweeps` synchronous consensus rounds on the stacked payloads and
    return the per-node incoming aggregates (x sum, count, 1/xi sum)."""
    ones = np.ones(net.node_count)
    inv_xi = 1.0 / np.asarray(xi_out, dtype=float)
    for _ in range(sweeps):
        cp_sweep(net, x_msg, buffers.x)
        cp_sweep(net, ones, buffers.count)
        cp_sweep(net, inv_xi, buffers.inv_xi)
    return (cp_aggregate(net, buffers.x),
            cp_aggregate(net, buffers.count),
            cp_aggregate(net, buffers.inv_xi))


def inner_step(state, x_bar, count_agg, inv_xi_agg, A, y_len, denoiser, chi):
    """Input half-step from this node's message plus stale aggregates."""
    L = state.node_count
    x_tilde = state.x_msg + x_bar
    eta = 1.0 + count_agg
    sigma2 = (1.0 / state.xi_out + inv_xi_agg) / L
    if not sigma2 > 0.0:
        raise NonPositiveSigma2(sigma2)
    a = eta / L
    n = x_tilde.shape[0]
    f_val = denoiser.f(x_tilde, a, sigma2)
    xi_in = float(np.mean(denoiser.df(x_tilde, a, sigma2)))
    state.x_hat = chi * f_val + (1.0 - chi) * state.x_hat
    state.v = chi * (n / y_len) * sigma2 * xi_in / eta + (1.0 - chi) * state.v
    state.z_tilde = A @ state.x_hat \
        + (n * xi_in) / (L * y_len * state.xi_out) * state.z_hat
    state.xi_in = xi_in
    return state, x_tilde, eta, sigma2


def _init_states(instance):
    L, N, M = instance.L, instance.N, instance.M
    ex2 = instance.prior.second_moment
    return [NodeState(node_count=L,
                      z_tilde=np.zeros(int(M[l])),
                      v=N * ex2 / (L * int(M[l])),
                      x_hat=np.zeros(N))
            for l in range(L)]


def _mse_row(states, x):
    n = x.shape[0]
    return np.array([np.sum((s.x_hat - x) ** 2) / n for s in states])


def _check_divergence(mse_row, t):
    m = float(mse_row.max())
    if m > MSE_DIVERGENCE_LIMIT:
        raise DivergenceError(m).annotate(t, int(mse_row.argmax()))


def run_dgamp(instance, net, schedule, denoisers=None, chi=1.0,
              collect_inputs=()):
    """Decentralized GAMP over a tree with periodic consensus events.

    Inactive nodes hold every field of their state bitwise; consensus
    aggregates persist unchanged between events while each node's own
    contribution stays current.
    """
    inner, outer = denoisers or bayes_denoisers(instance.prior,
                                                instance.channel)
    L, N = instance.L, instance.N
    x = instance.x
    states = _init_states(instance)
    buffers = ConsensusBuffers(net, N)
    x_bar = np.zeros((L, N))
    count_agg = np.zeros(L)
    inv_xi_agg = np.zeros(L)

    iters = schedule.iterations
    mse = np.zeros((iters + 1, L))
    mse[0] = _mse_row(states, x)
    cp_sweeps = np.zeros(iters + 1, dtype=int)
    diag = {k: np.zeros((iters, L)) for k in
            ("eta", "sigma2", "v", "xi_out", "xi_in")}
    collect_inputs = set(collect_inputs)
    captured = {}

    for t in range(iters):
        active = schedule.active_mask(t, L)
        for l in np.flatnonzero(active):
            try:
                outer_step(states[l], instance.y[l], instance.A[l], outer)
            except ZeroXiOut as err:
                raise err.annotate(t, l)
        if schedule.is_event(t):
            x_msg = np.stack([s.x_msg for s in states])
            xi_out = np.array([s.xi_out for s in states])
            x_bar, count_agg, inv_xi_agg = consensus_exchange(
                net, x_msg, xi_out, buffers, schedule.J)
            cp_sweeps[t + 1:] += schedule.J
        grab = t in collect_inputs
        if grab:
            captured[t] = {"x_tilde": np.full((L, N), np.nan),
                           "eta": np.full(L, np.nan),
                           "sigma2": np.full(L, np.nan)}
        for l in np.flatnonzero(active):
            try:
                _, x_tilde, eta, sigma2 = inner_step(
                    states[l], x_bar[l], count_agg[l], inv_xi_agg[l],
                    instance.A[l], int(instance.M[l]), inner, chi)
            except NonPositiveSigma2 as err:
                raise err.annotate(t, l)
            if grab:
                captured[t]["x_tilde"][l] = x_tilde
                captured[t]["eta"][l] = eta
                captured[t]["sigma2"][l] = sigma2
        for l in range(L):
            s = states[l]
            diag["eta"][t, l] = 1.0 + count_agg[l]
            diag["sigma2"][t, l] = (
                (1.0 / s.xi_out + inv_xi_agg[l]) / L
                if s.xi_out is not None else np.nan)
            diag["v"][t, l] = s.v
            diag["xi_out"][t, l] = np.nan if s.xi_out is None else s.xi_out
            diag["xi_in"][t, l] = np.nan if s.xi_in is None else s.xi_in
        mse[t + 1] = _mse_row(states, x)
        _check_divergence(mse[t + 1], t)
    return Trajectory(mse=mse, cp_sweeps=cp_sweeps, diagnostics=diag,
                      inputs=captured)


def run_centralized(instance, denoisers=None, chi=1.0, iterations=50):
    """Fully-coordinated variant: exact aggregation every iteration and one
    shared signal estimate."""
    inner, outer = denoisers or bayes_denoisers(instance.prior,
                                                instance.channel)
    L, N, M = instance.L, instance.N, instance.M
    x = instance.x
    states = _init_states(instance)
    x_hat = np.zeros(N)

    mse = np.zeros((iterations + 1, L))
    mse[0] = np.sum(x ** 2) / N
    diag = {k: np.zeros((iterations, L)) for k in
            ("sigma2", "v", "xi_out", "xi_in")}

    for t in range(iterations):
        for l in range(L):
            states[l].x_hat = x_hat
            try:
                outer_step(states[l], instance.y[l], instance.A[l], outer)
            except ZeroXiOut as err:
                raise err.annotate(t, l)
        x_tilde = np.sum([s.x_msg for s in states], axis=0)
        sigma2 = float(np.mean([1.0 / s.xi_out for s in states]))
        if not sigma2 > 0.0:
            raise NonPositiveSigma2(sigma2).annotate(t, -1)
        f_val = inner.f(x_tilde, 1.0, sigma2)
        xi_in = float(np.mean(inner.df(x_tilde, 1.0, sigma2)))
        x_hat = chi * f_val + (1.0 - chi) * x_hat
        for l in range(L):
            s = states[l]
            s.xi_in = xi_in
            s.v = chi * (N / int(M[l])) * sigma2 * xi_in / L \
                + (1.0 - chi) * s.v
            s.z_tilde = instance.A[l] @ x_hat \
                + (N * xi_in) / (L * int(M[l]) * s.xi_out) * s.z_hat
            diag["sigma2"][t, l] = sigma2
            diag["v"][t, l] = s.v
            diag["xi_out"][t, l] = s.xi_out
            diag["xi_in"][t, l] = xi_in
        mse[t + 1] = np.sum((x_hat - x) ** 2) / N
        _check_divergence(mse[t + 1], t)
    return Trajectory(mse=mse,
                      cp_sweeps=np.zeros(iterations + 1, dtype=int),
                      diagnostics=diag)


def run_naive(instance, net, gamma, denoisers=None, chi=1.0, iterations=50):
    """One-hop averaging baseline: each node mixes its neighbors' current
    messages with weight gamma instead of running consensus."""
    if gamma < 0.0:
        raise ValueError(f"gamma must be >= 0, got {gamma}")
    inner, outer = denoisers or bayes_denoisers(instance.prior,
                                                instance.channel)
    L, N, M = instance.L, instance.N, instance.M
    x = instance.x
    states = _init_states(instance)

    mse = np.zeros((iterations + 1, L))
    mse[0] = _mse_row(states, x)
    diag = {k: np.zeros((iterations, L)) for k in
            ("sigma2", "v", "xi_out", "xi_in")}

    for t in range(iterations):
        for l in range(L):
            try:
                outer_step(states[l], instance.y[l], instance.A[l], outer)
            except ZeroXiOut as err:
                raise err.annotate(t, l)
        x_msg = np.stack([s.x_msg for s in states])
        inv_xi = np.array([1.0 / s.xi_out for s in states])
        for l in range(L):
            s = states[l]
            nbrs = list(net.neighbors[l])
            x_tilde = x_msg[l] + gamma * np.sum(x_msg[nbrs] - x_msg[l],
                                                axis=0)
            s_mix = inv_xi[l] + gamma * np.sum(inv_xi[nbrs] - inv_xi[l])
            sigma2 = s_mix / L
            if not sigma2 > 0.0:
                raise NonPositiveSigma2(sigma2).annotate(t, l)
            a = 1.0 / L
            f_val = inner.f(x_tilde, a, sigma2)
            xi_in = float(np.mean(inner.df(x_tilde, a, sigma2)))
            s.x_hat = chi * f_val + (1.0 - chi) * s.x_hat
            s.v = chi * (N / int(M[l])) * sigma2 * xi_in \
                + (1.0 - chi) * s.v
            s.z_tilde = instance.A[l] @ s.x_hat \
                + (N * xi_in) / (L * int(M[l]) * s.xi_out) * s.z_hat
            s.xi_in = xi_in
            diag["sigma2"][t, l] = sigma2
            diag["v"][t, l] = s.v
            diag["xi_out"][t, l] = s.xi_out
            diag["xi_in"][t, l] = xi_in
        mse[t + 1] = _mse_row(states, x)
        _check_divergence(mse[t + 1], t)
    return Trajectory(mse=mse,
                      cp_sweeps=np.zeros(iterations + 1, dtype=int),
                      diagnostics=diag)
