"""Unit tests for the outer-step wrapper: gating, restoration, accounting."""

import itertools

import numpy as np
import pytest

from profit import optim
from profit.core import (
    ProfitConfig,
    ProfitStepTrace,
    profit_step,
    run_plain_training,
    run_profit_training,
)
from profit.errors import BatchStreamExhaustedError, NonFiniteError
from profit.paramvec import dot, norm


def endless():
    return itertools.count()


def constant_gradient(c):
    return lambda theta, batch: c


def bowl_gradient(center):
    """Gradient of the unit quadratic 0.5 * ||theta - center||^2."""
    return lambda theta, batch: theta - center


def sgd_config(n_ref=1, lr_main=0.1, lr_ref=0.1, warmup=0):
    return ProfitConfig(
        n_ref=n_ref,
        main=optim.sgd(lr_main),
        reference=optim.sgd(lr_ref),
        warmup_steps=warmup,
    )


def make_states(config, n):
    return optim.init_state(config.main, n), optim.init_state(config.reference, n)


# ---------------------------------------------------------------- config


def test_config_rejects_zero_reference_steps():
    with pytest.raises(ValueError, match="n_ref"):
        sgd_config(n_ref=0)


def test_config_rejects_negative_warmup():
    with pytest.raises(ValueError, match="warmup"):
        sgd_config(warmup=-1)


def test_trace_csv_row_matches_header_order():
    trace = ProfitStepTrace(
        omega=-0.5, projected=True, degenerate=False,
        delta_norm=1.25, g_norm=2.5, batches_consumed=2,
    )
    assert ProfitStepTrace.CSV_HEADER == (
        "step,omega,projected,delta_norm,g_norm,batches_consumed,degenerate"
    )
    assert trace.csv_row(7) == "7,-0.5,1,1.25,2.5,2,0"


# ------------------------------------------------------------- the gate


def test_aligned_gradient_passes_through_untouched():
    """omega >= 0: the main update uses the raw displaced-point gradient."""
    theta0 = np.array([1.0, -2.0, 0.5])
    config = sgd_config(lr_main=0.05, lr_ref=0.1)
    main_state, ref_state = make_states(config, 3)

    g_ref = np.array([1.0, 0.0, 0.0])
    g_disp = np.array([-3.0, 1.0, 2.0])  # <delta, g> = 0.3 > 0
    feed = iter([g_ref, g_disp])
    theta_new, _, _, trace = profit_step(
        theta0, config, main_state, ref_state, endless(),
        lambda theta, batch: next(feed),
    )

    delta = -0.1 * g_ref
    assert trace.omega == pytest.approx(dot(delta, g_disp))
    assert trace.omega > 0.0
    assert not trace.projected and not trace.degenerate
    # bitwise: replicate the single main update from the restored weights
    expected, _ = optim.step(optim.init_state(config.main, 3), theta0, g_disp)
    assert np.array_equal(theta_new, expected)


def test_opposed_gradient_is_orthogonally_rejected():
    """omega < 0: the component along the displacement is removed."""
    theta0 = np.zeros(3)
    config = sgd_config(lr_main=0.05, lr_ref=0.1)
    main_state, ref_state = make_states(config, 3)

    g_ref = np.array([1.0, 0.0, 0.0])
    g_disp = np.array([2.0, 1.0, -1.0])  # delta = (-0.1, 0, 0), omega = -0.2
    feed = iter([g_ref, g_disp])
    theta_new, _, _, trace = profit_step(
        theta0, config, main_state, ref_state, endless(),
        lambda theta, batch: next(feed),
    )

    delta = np.array([-0.1, 0.0, 0.0])
    projected = g_disp - (dot(g_disp, delta) / dot(delta, delta)) * delta
    assert trace.omega == pytest.approx(-0.2)
    assert trace.projected and not trace.degenerate
    assert abs(dot(projected, delta)) <= 1e-10 * norm(projected) * norm(delta)
    expected, _ = optim.step(optim.init_state(config.main, 3), theta0, projected)
    assert np.array_equal(theta_new, expected)


def test_vanishing_displacement_falls_back_to_raw_gradient():
    """omega < 0 but ||delta||^2 below threshold: gradient passes unprojected."""
    theta0 = np.zeros(3)
    config = sgd_config(lr_main=0.05, lr_ref=1e-15)
    main_state, ref_state = make_states(config, 3)

    g = np.ones(3)  # delta = -1e-15 * ones, omega = -3e-15 < 0, |delta|^2 = 3e-30
    theta_new, _, _, trace = profit_step(
        theta0, config, main_state, ref_state, endless(), constant_gradient(g),
    )
    assert trace.omega < 0.0
    assert trace.degenerate and not trace.projected
    expected, _ = optim.step(optim.init_state(config.main, 3), theta0, g)
    assert np.array_equal(theta_new, expected)


def test_weights_are_restored_before_the_main_update():
    """A zero final gradient leaves the weights bit-identical to the start,
    even though the reference optimizer wandered away in between."""
    rng = np.random.default_rng(5)
    theta0 = rng.standard_normal(8)
    config = sgd_config(n_ref=3, lr_ref=0.5)
    main_state, ref_state = make_states(config, 8)

    calls = []

    def gradient(theta, batch):
        calls.append(theta.copy())
        if len(calls) <= 3:
            return np.ones(8)
        return np.zeros(8)

    theta_new, _, _, trace = profit_step(
        theta0, config, main_state, ref_state, endless(), gradient,
    )
    assert trace.delta_norm > 1.0  # the reference really moved
    assert np.array_equal(theta_new, theta0)
    # the displaced-point gradient was evaluated away from theta0
    assert not np.array_equal(calls[-1], theta0)


# --------------------------------------------------- zero-update guarantee


@pytest.mark.parametrize("n", [1, 5])
def test_linear_loss_yields_no_update(n):
    """For a loss with constant gradient, 100 outer steps move nothing."""
    c = np.linspace(1.0, 2.0, n)
    theta0 = np.full(n, 0.75)
    config = ProfitConfig(n_ref=2, main=optim.sgd(0.05), reference=optim.sgd(0.01))
    theta, traces, _ = run_profit_training(
        theta0.copy(), config, 100, endless(), constant_gradient(c),
    )
    assert norm(theta - theta0) <= 1e-12
    assert all(t.projected for t in traces)


# ------------------------------------------------------- quadratic bowls


def test_shifted_bowl_main_update_protects_the_old_minimum():
    """Fine-tuning a bowl at b from the minimum of a bowl at a: every main
    update ends closer to a (in old-task loss) than the displaced point was."""
    a = np.array([0.0, 0.0])
    b = np.array([1.0, 1.0])
    lr = 1e-3
    config = ProfitConfig(n_ref=1, main=optim.sgd(lr), reference=optim.sgd(lr))
    main_state, ref_state = make_states(config, 2)
    gradient = bowl_gradient(b)

    def old_loss(theta):
        return 0.5 * float(np.sum((theta - a) ** 2))

    theta = a.copy()
    for _ in range(20):
        theta_ref = theta.copy()
        disp = theta_ref - lr * gradient(theta_ref, None)  # replayed reference step
        theta, main_state, ref_state, _ = profit_step(
            theta, config, main_state, ref_state, endless(), gradient,
        )
        assert old_loss(theta) < old_loss(disp)


# ------------------------------------------------------- batch accounting


@pytest.mark.parametrize("n_ref", [1, 2, 5])
def test_each_outer_step_consumes_n_ref_plus_one_batches(n_ref):
    config = ProfitConfig(n_ref=n_ref, main=optim.sgd(0.01), reference=optim.sgd(0.01))
    consumed = []

    def counting_source():
        for i in itertools.count():
            consumed.append(i)
            yield i

    theta, traces, _ = run_profit_training(
        np.zeros(4), config, 100, counting_source(), constant_gradient(np.zeros(4)),
    )
    assert all(t.batches_consumed == n_ref + 1 for t in traces)
    assert len(traces) == 100
    assert len(consumed) == 100 * (n_ref + 1)


def test_exhausted_stream_is_a_hard_error():
    config = sgd_config(n_ref=1)
    main_state, ref_state = make_states(config, 2)
    one_batch = iter([0])
    with pytest.raises(BatchStreamExhaustedError, match=r"n_ref \+ 1 = 2"):
        profit_step(
            np.zeros(2), config, main_state, ref_state, one_batch,
            constant_gradient(np.ones(2)),
        )


# --------------------------------------------------------- state handling


def test_reference_state_persists_and_counters_advance():
    config = ProfitConfig(n_ref=2, main=optim.sgd(0.05), reference=optim.rmsprop(0.01))
    main_state, ref_state = make_states(config, 3)
    theta = np.zeros(3)
    gradient = constant_gradient(np.array([1.0, -1.0, 2.0]))

    theta, main_state, ref_state, _ = profit_step(
        theta, config, main_state, ref_state, endless(), gradient,
    )
    v_after_one = ref_state.buffers["v"].copy()
    assert ref_state.t == 2 and main_state.t == 1
    assert v_after_one.any()

    theta, main_state, ref_state, _ = profit_step(
        theta, config, main_state, ref_state, endless(), gradient,
    )
    assert ref_state.t == 4 and main_state.t == 2
    # the accumulator kept growing from its step-1 value, not from zero
    assert np.all(ref_state.buffers["v"] > v_after_one)


def test_main_accumulators_survive_weight_restoration():
    """Restoration reverts weights only; the main optimizer's memory builds up."""
    config = ProfitConfig(n_ref=1, main=optim.rmsprop(0.01), reference=optim.sgd(0.01))
    main_state, ref_state = make_states(config, 2)
    theta = np.zeros(2)
    # reference sees (1, 0); the displaced gradient (-1, 1) gives omega > 0,
    # so the main optimizer ingests it raw and its accumulator must grow
    feed = itertools.cycle([np.array([1.0, 0.0]), np.array([-1.0, 1.0])])
    gradient = lambda theta, batch: next(feed)  # noqa: E731
    previous = np.zeros(2)
    for expected_t in (1, 2, 3):
        theta, main_state, ref_state, trace = profit_step(
            theta, config, main_state, ref_state, endless(), gradient,
        )
        assert trace.omega > 0.0
        assert main_state.t == expected_t
        assert np.all(main_state.buffers["v"] > previous)
        previous = main_state.buffers["v"].copy()


# ------------------------------------------------------------ full runs


def test_warmup_only_run_is_bit_identical_to_plain_training():
    rng = np.random.default_rng(11)
    theta0 = rng.standard_normal(6)
    center = rng.standard_normal(6)
    config = ProfitConfig(
        n_ref=1, main=optim.rmsprop(0.02), reference=optim.sgd(0.01), warmup_steps=5,
    )
    via_wrapper, traces, _ = run_profit_training(
        theta0.copy(), config, 0, endless(), bowl_gradient(center),
    )
    plain, _ = run_plain_training(
        theta0.copy(), optim.init_state(config.main, 6), 5, endless(),
        bowl_gradient(center),
    )
    assert traces == []
    assert np.array_equal(via_wrapper, plain)


def test_zero_steps_zero_warmup_returns_start_and_consumes_nothing():
    theta0 = np.array([1.0, 2.0])
    empty = iter([])
    theta, traces, metrics = run_profit_training(
        theta0, sgd_config(), 0, empty, constant_gradient(np.ones(2)),
    )
    assert np.array_equal(theta, theta0)
    assert traces == [] and metrics == []


def test_metrics_cadence_spans_warmup_and_outer_steps():
    seen = []

    def hook(step, theta):
        seen.append(step)
        return {"n": float(norm(theta))}

    config = ProfitConfig(
        n_ref=1, main=optim.sgd(0.01), reference=optim.sgd(0.01), warmup_steps=2,
    )
    _, _, metrics = run_profit_training(
        np.ones(3), config, 3, endless(),
        bowl_gradient(np.zeros(3)), eval_hooks=(hook,), eval_every=1,
    )
    assert seen == [1, 2, 3, 4, 5]
    assert [m["step"] for m in metrics] == [1, 2, 3, 4, 5]
    assert all("n" in m for m in metrics)


def test_eval_every_zero_disables_metrics():
    _, _, metrics = run_profit_training(
        np.ones(2), sgd_config(warmup=2), 2, endless(),
        bowl_gradient(np.zeros(2)),
        eval_hooks=((lambda step, theta: {"x": 1.0}),), eval_every=0,
    )
    assert metrics == []


# ------------------------------------------------------------- bad input


def test_nonfinite_displaced_gradient_is_rejected():
    config = sgd_config()
    main_state, ref_state = make_states(config, 2)
    feed = iter([np.ones(2), np.array([np.nan, 0.0])])
    with pytest.raises(NonFiniteError, match="displaced"):
        profit_step(
            np.zeros(2), config, main_state, ref_state, endless(),
            lambda theta, batch: next(feed),
        )


def test_nonfinite_displacement_is_rejected():
    config = ProfitConfig(n_ref=1, main=optim.sgd(0.1), reference=optim.sgd(10.0))
    main_state, ref_state = make_states(config, 2)
    with np.errstate(over="ignore"), pytest.raises(NonFiniteError, match="displacement"):
        profit_step(
            np.zeros(2), config, main_state, ref_state, endless(),
            constant_gradient(np.full(2, 1.7e308)),
        )
