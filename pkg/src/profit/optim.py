"""First-order optimizers (SGD, RMSProp, Adam) behind one step interface.

``step`` is a pure function: it never mutates its inputs and returns fresh
parameter and state objects, so identical ``(state, theta, g)`` triples give
bitwise-identical outputs.  States may therefore be handed between threads
but are meant to be owned by exactly one training loop at a time.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DimensionMismatchError, NonFiniteError

KINDS = ("sgd", "rmsprop", "adam")


@dataclass(frozen=True)
class OptimizerSpec:
    """Algorithm choice plus its constants.

    ``learning_rate`` must be positive; the EMA decays (``rho`` for RMSProp,
    ``beta1``/``beta2`` for Adam) must lie in [0, 1); ``epsilon`` must be
    positive.  Constants irrelevant to ``kind`` are carried but unused.

    ``decay`` applies classic inverse-time annealing: the rate used at update
    t (0-indexed) is learning_rate / (1 + decay * t).  Zero keeps the rate
    constant.
    """

    kind: str
    learning_rate: float
    rho: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    decay: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown optimizer kind {self.kind!r}, expected one of {KINDS}")
        if not (np.isfinite(self.learning_rate) and self.learning_rate > 0):
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate!r}")
        for name in ("rho", "beta1", "beta2"):
            val = getattr(self, name)
            if not (0.0 <= val < 1.0):
                raise ValueError(f"{name} must be in [0, 1), got {val!r}")
        if not (np.isfinite(self.epsilon) and self.epsilon > 0):
            raise ValueError(f"epsilon must be positive, got {self.epsilon!r}")
        if not (np.isfinite(self.decay) and self.decay >= 0):
            raise ValueError(f"decay must be finite and >= 0, got {self.decay!r}")

    def rate_at(self, t: int) -> float:
        """Learning rate for 0-indexed update t under inverse-time annealing."""
        return self.learning_rate / (1.0 + self.decay * t)


def sgd(learning_rate: float) -> OptimizerSpec:
    return OptimizerSpec("sgd", learning_rate)


def rmsprop(
    learning_rate: float, rho: float = 0.9, epsilon: float = 1e-8, decay: float = 0.0
) -> OptimizerSpec:
    return OptimizerSpec("rmsprop", learning_rate, rho=rho, epsilon=epsilon, decay=decay)


def adam(
    learning_rate: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    epsilon: float = 1e-8,
) -> OptimizerSpec:
    return OptimizerSpec("adam", learning_rate, beta1=beta1, beta2=beta2, epsilon=epsilon)


@dataclass(frozen=True)
class OptimizerState:
    """Accumulator buffers aligned with an n-dimensional parameter vector.

    SGD keeps no buffers; RMSProp keeps the squared-gradient EMA ``v``;
    Adam keeps first/second moment EMAs ``m``/``v``.  ``t`` counts steps.
    """

    spec: OptimizerSpec
    n: int
    t: int = 0
    buffers: dict = field(default_factory=dict)


def init_state(spec: OptimizerSpec, n: int) -> OptimizerState:
    """Allocate zeroed buffers for ``spec`` over an n-dimensional vector."""
    if n < 1:
        raise ValueError(f"dimension must be >= 1, got {n}")
    if spec.kind == "sgd":
        buffers = {}
    elif spec.kind == "rmsprop":
        buffers = {"v": np.zeros(n)}
    else:  # adam
        buffers = {"m": np.zeros(n), "v": np.zeros(n)}
    return OptimizerState(spec=spec, n=n, t=0, buffers=buffers)


def step(
    state: OptimizerState, theta: np.ndarray, g: np.ndarray
) -> tuple[np.ndarray, OptimizerState]:
    """Apply one update; returns the new parameters and the advanced state."""
    if theta.shape != (state.n,) or g.shape != (state.n,):
        raise DimensionMismatchError(
            f"step: state dimension {state.n} vs theta {theta.shape} / gradient {g.shape}"
        )
    if not np.isfinite(g).all():
        raise NonFiniteError("step: gradient contains NaN or Inf")

    spec = state.spec
    lr = spec.rate_at(state.t)
    if spec.kind == "sgd":
        update = g * lr
        theta_new = np.subtract(theta, update, out=update)
        new_buffers = {}
    elif spec.kind == "rmsprop":
        # spelled with out= buffers to avoid temporaries on the hot path;
        # the arithmetic (order and rounding) is exactly
        #   v = rho * v_old + (1 - rho) * g * g
        #   theta - lr * g / (sqrt(v) + eps)
        c = g * (1.0 - spec.rho)
        c *= g
        v = state.buffers["v"] * spec.rho
        v += c
        denom = np.sqrt(v, out=c)
        denom += spec.epsilon
        update = g * lr
        update /= denom
        theta_new = np.subtract(theta, update, out=update)
        new_buffers = {"v": v}
    else:  # adam, bias-corrected
        t = state.t + 1
        m = spec.beta1 * state.buffers["m"] + (1.0 - spec.beta1) * g
        v = spec.beta2 * state.buffers["v"] + (1.0 - spec.beta2) * g * g
        m_hat = m / (1.0 - spec.beta1**t)
        v_hat = v / (1.0 - spec.beta2**t)
        theta_new = theta - lr * m_hat / (np.sqrt(v_hat) + spec.epsilon)
        new_buffers = {"m": m, "v": v}

    return theta_new, replace(state, t=state.t + 1, buffers=new_buffers)
