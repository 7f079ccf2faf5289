"""Shared fixtures: a fast reduced-scale experiment plan and golden files.

The tiny plan keeps the full training dynamics (noisy batches, annealed
RMSProp baseline, every fine-tuning strategy) at a size where a whole
experiment takes well under a second, so determinism and regression checks
stay cheap.  The golden CSVs under tests/golden/ were produced by the first
pinned run of that plan and must never be regenerated casually: a diff there
means behavior changed.
"""

from pathlib import Path

import pytest

from profit import toy

GOLDEN_DIR = Path(__file__).parent / "golden"


def make_tiny_plan(**overrides) -> toy.ExperimentPlan:
    """The reduced-scale plan behind the golden files."""
    base = dict(
        dims=(2, 32, 32, 1),
        batch_size=32,
        baseline_steps=1500,
        finetune_steps=200,
        seeds=(0, 1, 2),
    )
    base.update(overrides)
    return toy.ExperimentPlan(**base)


@pytest.fixture(scope="session")
def tiny_plan() -> toy.ExperimentPlan:
    return make_tiny_plan()


@pytest.fixture(scope="session")
def tiny_baselines(tiny_plan):
    """Baseline models for the tiny plan, trained once per session."""
    return {seed: toy.train_baseline(tiny_plan, seed) for seed in tiny_plan.seeds}


@pytest.fixture(scope="session")
def golden_dir() -> Path:
    return GOLDEN_DIR
