"""Exception hierarchy for the dgamp package."""


class DgampError(Exception):
    """Base class for all package-specific errors."""


class TopologyError(DgampError):
    """Base class for tree-validation failures."""


class SelfLoop(TopologyError):
    def __init__(self, node):
        self.node = node
        super().__init__(f"self-loop at node {node}")


class DuplicateEdge(TopologyError):
    def __init__(self, u, v):
        self.edge = (u, v)
        super().__init__(f"duplicate edge ({u}, {v})")


class CycleDetected(TopologyError):
    def __init__(self, u, v):
        self.edge = (u, v)
        super().__init__(f"edge ({u}, {v}) closes a cycle")


class Disconnected(TopologyError):
    def __init__(self, node):
        self.node = node
        super().__init__(f"node {node} is not reachable from node 0")


class InvalidDensity(DgampError):
    def __init__(self, rho):
        super().__init__(f"signal density must lie in (0, 1], got {rho}")


class DimensionMismatch(DgampError):
    pass


class NonPositiveVariance(DgampError):
    pass


class InvalidThreshold(DgampError):
    def __init__(self, a):
        super().__init__(f"clip threshold must be positive, got {a}")


class QuadratureNonConvergence(DgampError):
    pass


class GampRuntimeError(DgampError):
    """Simulation-time failure; carries (iteration, node) once annotated."""

    t = None
    node = None

    def annotate(self, t, node):
        self.t = t
        self.node = node
        self.args = (f"{self.args[0]} (iteration {t}, node {node})",)
        return self


class ZeroXiOut(GampRuntimeError):
    def __init__(self, xi):
        super().__init__(f"|xi_out| = {abs(xi):.3e} below floor; trial diverged")


class NonPositiveSigma2(GampRuntimeError):
    def __init__(self, sigma2):
        super().__init__(f"sigma^2 = {sigma2:.3e} is not positive")


class DivergenceError(GampRuntimeError):
    def __init__(self, mse):
        self.mse = mse
        super().__init__(f"MSE {mse:.3e} exceeded the divergence limit")


class QuadratureToleranceExceeded(DgampError):
    pass


class NoConvergence(DgampError):
    def __init__(self, delta, iterations):
        self.delta = delta
        self.iterations = iterations
        super().__init__(
            f"no fixed point within {iterations} iterations "
            f"(last delta {delta:.3e})")


class ConfigInvalid(DgampError):
    def __init__(self, field, reason):
        self.field = field
        self.reason = reason
        super().__init__(f"config field '{field}': {reason}")
