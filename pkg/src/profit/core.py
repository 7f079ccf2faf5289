"""The PROFIT optimizer wrapper: temporal gradient orthogonalization.

One outer step: save the weights, let a reference optimizer wander for
``n_ref`` fresh batches, measure the displacement ``delta``, take the
gradient at the displaced point on one more fresh batch, and gate it: when
the gradient opposes the displacement (``omega = <delta, g> < 0``) the
conflicting component is rejected.  The weights are then restored to the
saved state and the main optimizer takes the single real update.

The reference optimizer state persists across outer steps (it is
instantiated once), and the main optimizer's accumulators are never rolled
back when the weights are restored; only the weights revert.
"""

from collections.abc import Callable, Iterator
from dataclasses import dataclass

import numpy as np

from . import optim
from .errors import BatchStreamExhaustedError, NonFiniteError
from .optim import OptimizerSpec, OptimizerState
from .paramvec import dot, norm, orthogonal_reject

# gradient_fn(theta, batch) -> flat gradient at theta on that batch
GradientFn = Callable[..., np.ndarray]


@dataclass(frozen=True)
class ProfitConfig:
    """Hyperparameters of the wrapper.

    ``n_ref`` reference steps are taken per outer step, each on a fresh
    batch, so one outer step consumes ``n_ref + 1`` batches.  ``warmup_steps``
    plain main-optimizer steps run before any projection logic engages; use
    them when the fine-tuning distribution is far from the original one.
    """

    n_ref: int
    main: OptimizerSpec
    reference: OptimizerSpec
    warmup_steps: int = 0

    def __post_init__(self):
        if self.n_ref < 1:
            raise ValueError(f"n_ref must be >= 1, got {self.n_ref}")
        if self.warmup_steps < 0:
            raise ValueError(f"warmup_steps must be >= 0, got {self.warmup_steps}")


@dataclass(frozen=True)
class ProfitStepTrace:
    """Observability record for one outer step.

    ``projected`` is true only when ``omega < 0`` and the displacement was
    usable; ``degenerate`` marks the near-zero-displacement fallback where
    the gradient passed through unprojected.
    """

    omega: float
    projected: bool
    degenerate: bool
    delta_norm: float
    g_norm: float
    batches_consumed: int

    CSV_HEADER = "step,omega,projected,delta_norm,g_norm,batches_consumed,degenerate"

    def csv_row(self, step: int) -> str:
        return (
            f"{step},{self.omega!r},{int(self.projected)},{self.delta_norm!r},"
            f"{self.g_norm!r},{self.batches_consumed},{int(self.degenerate)}"
        )


def _next_batch(batch_source: Iterator, needed: int):
    try:
        return next(batch_source)
    except StopIteration:
        raise BatchStreamExhaustedError(
            f"batch stream exhausted: a PROFIT step requires n_ref + 1 = {needed} batches"
        ) from None


def profit_step(
    theta: np.ndarray,
    config: ProfitConfig,
    main_state: OptimizerState,
    ref_state: OptimizerState,
    batch_source: Iterator,
    gradient_fn: GradientFn,
) -> tuple[np.ndarray, OptimizerState, OptimizerState, ProfitStepTrace]:
    """One outer step; consumes exactly ``n_ref + 1`` batches.

    Returns the updated weights, both advanced optimizer states, and the
    step trace.
    """
    needed = config.n_ref + 1
    theta_ref = theta.copy()

    # explore with the reference optimizer
    cur = theta
    for _ in range(config.n_ref):
        batch = _next_batch(batch_source, needed)
        g = gradient_fn(cur, batch)
        cur, ref_state = optim.step(ref_state, cur, g)

    delta = cur - theta_ref
    if not np.isfinite(delta).all():
        raise NonFiniteError("profit_step: non-finite displacement after reference steps")

    batch = _next_batch(batch_source, needed)
    g = gradient_fn(cur, batch)
    if not np.isfinite(g).all():
        raise NonFiniteError("profit_step: non-finite gradient at the displaced point")

    omega = dot(delta, g)
    g_norm = norm(g)
    projected = False
    degenerate = False
    if omega < 0.0:
        g, degenerate = orthogonal_reject(g, delta)
        projected = not degenerate

    # restore the saved state, then take the single main update
    theta_new, main_state = optim.step(main_state, theta_ref, g)
    trace = ProfitStepTrace(
        omega=omega,
        projected=projected,
        degenerate=degenerate,
        delta_norm=norm(delta),
        g_norm=g_norm,
        batches_consumed=needed,
    )
    return theta_new, main_state, ref_state, trace


def run_plain_training(
    theta: np.ndarray,
    state: OptimizerState,
    n_steps: int,
    batch_source: Iterator,
    gradient_fn: GradientFn,
    eval_hooks=(),
    eval_every: int = 0,
    metrics: list | None = None,
    step_offset: int = 0,
) -> tuple[np.ndarray, OptimizerState]:
    """Ordinary single-optimizer loop, one batch per step.

    Also serves as the warmup phase of PROFIT training, so a warmup-only run
    is bit-identical to plain fine-tuning on the same stream.
    """
    for i in range(n_steps):
        batch = _next_batch(batch_source, 1)
        g = gradient_fn(theta, batch)
        theta, state = optim.step(state, theta, g)
        if eval_every and (i + 1) % eval_every == 0 and metrics is not None:
            metrics.append(_run_hooks(eval_hooks, step_offset + i + 1, theta))
    return theta, state


def _run_hooks(eval_hooks, step: int, theta: np.ndarray) -> dict:
    entry = {"step": step}
    for hook in eval_hooks:
        entry.update(hook(step, theta))
    return entry


def run_profit_training(
    theta0: np.ndarray,
    config: ProfitConfig,
    n_steps: int,
    batch_source: Iterator,
    gradient_fn: GradientFn,
    eval_hooks=(),
    eval_every: int = 0,
) -> tuple[np.ndarray, list, list]:
    """Warmup (if configured) followed by ``n_steps`` PROFIT outer steps.

    ``n_steps`` counts main-optimizer updates; the extra reference batches
    are bookkept in the returned traces.  ``eval_hooks`` are callables
    ``(step, theta) -> dict`` merged into a metrics entry every
    ``eval_every`` main updates (0 disables).  The starting weights are
    assumed to come from a converged model; that precondition cannot be
    checked here and violating it gives poor results.

    Returns ``(theta_final, traces, metrics)``.
    """
    n = theta0.shape[0]
    main_state = optim.init_state(config.main, n)
    ref_state = optim.init_state(config.reference, n)
    traces: list = []
    metrics: list = []

    theta, main_state = run_plain_training(
        theta0,
        main_state,
        config.warmup_steps,
        batch_source,
        gradient_fn,
        eval_hooks,
        eval_every,
        metrics,
        step_offset=0,
    )

    offset = config.warmup_steps
    for i in range(n_steps):
        theta, main_state, ref_state, trace = profit_step(
            theta, config, main_state, ref_state, batch_source, gradient_fn
        )
        traces.append(trace)
        if eval_every and (i + 1) % eval_every == 0:
            metrics.append(_run_hooks(eval_hooks, offset + i + 1, theta))
    return theta, traces, metrics
