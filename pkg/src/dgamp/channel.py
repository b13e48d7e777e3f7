"""Signal prior, measurement channels, and problem-instance sampling."""

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, InvalidDensity, InvalidThreshold

CHANNEL_KINDS = ("linear", "clip")


@dataclass(frozen=True)
class SignalPrior:
    """Bernoulli-Gauss prior with unit second moment: x ~ rho N(0, 1/rho)."""

    rho: float

    def __post_init__(self):
        if not (0.0 < self.rho <= 1.0):
            raise InvalidDensity(self.rho)

    @property
    def second_moment(self):
        return 1.0

    @property
    def slab_var(self):
        return 1.0 / self.rho


@dataclass(frozen=True)
class Channel:
    """Measurement channel y = z + w (linear) or y = clip(z + w, A)."""

    kind: str
    noise_var: float
    clip_threshold: float = None

    def __post_init__(self):
        if self.kind not in CHANNEL_KINDS:
            raise ValueError(f"unknown channel kind {self.kind!r}")
        if not (self.noise_var > 0.0):
            raise ValueError(f"noise_var must be positive, got {self.noise_var}")
        if self.kind == "clip":
            a = self.clip_threshold
            if a is None or not (a > 0.0):
                raise InvalidThreshold(a)

    @property
    def snr_db(self):
        return -10.0 * np.log10(self.noise_var)

    @classmethod
    def from_snr_db(cls, kind, snr_db, clip_threshold=None):
        return cls(kind, 10.0 ** (-snr_db / 10.0), clip_threshold)


@dataclass
class MeasurementInstance:
    """One sampled problem: signal, per-node matrices, noise, observations."""

    x: np.ndarray
    A: list
    w: list
    z: list
    y: list
    M: np.ndarray
    N: int
    L: int
    prior: SignalPrior
    channel: Channel
    seed: int = None
    trial: int = 0
    extras: dict = field(default_factory=dict)


def _rng(seed):
    return np.random.default_rng(seed)


def sample_signal(n, prior, seed):
    """Draw x in R^n from the spike-slab prior."""
    rng = _rng(seed)
    mask = rng.random(n) < prior.rho
    slab = rng.standard_normal(n) * np.sqrt(prior.slab_var)
    return np.where(mask, slab, 0.0)


def sample_matrix(m, n, node_count, seed):
    """Gaussian sensing matrix with entry variance 1/(node_count * m)."""
    rng = _rng(seed)
    return rng.standard_normal((m, n)) / np.sqrt(node_count * m)


def apply_channel(channel, z, w):
    z = np.asarray(z, dtype=float)
    w = np.asarray(w, dtype=float)
    if z.shape != w.shape:
        raise DimensionMismatch(f"z {z.shape} vs w {w.shape}")
    s = z + w
    if channel.kind == "linear":
        return s
    a = channel.clip_threshold
    return np.clip(s, -a, a)


def sample_instance(net, M, prior, channel, N, seed, trial=0):
    """Sample a full multi-node instance.

    Sub-streams are keyed off (trial, component, node) so adding a node or
    trial never perturbs the draws of the others.
    """
    L = net.node_count
    M = np.broadcast_to(np.asarray(M, dtype=int), (L,)).copy()
    if np.any(M < 1):
        raise DimensionMismatch(f"per-node measurement counts must be >= 1, got {M}")

    def stream(*key):
        return np.random.SeedSequence(entropy=int(seed), spawn_key=key)

    x = sample_signal(N, prior, stream(trial, 0, 0))
    A, w, z, y = [], [], [], []
    for l in range(L):
        Al = sample_matrix(int(M[l]), N, L, stream(trial, 1, l))
        wl = _rng(stream(trial, 2, l)).standard_normal(int(M[l])) \
            * np.sqrt(channel.noise_var)
        zl = Al @ x
        A.append(Al)
        w.append(wl)
        z.append(zl)
        y.append(apply_channel(channel, zl, wl))
    return MeasurementInstance(x=x, A=A, w=w, z=z, y=y, M=M, N=N, L=L,
                               prior=prior, channel=channel,
                               seed=int(seed), trial=int(trial))
