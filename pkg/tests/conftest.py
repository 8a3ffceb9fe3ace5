"""Shared fixtures and the acceptance-summary reporter.

The fast unit tests run on a deliberately tiny problem (`small_cfg`); the
full-size defaults only appear in test_acceptance.py, which records one
PASS/FAIL line per criterion into the terminal summary via the hook below.
"""

from __future__ import annotations

import pytest
from hypothesis import settings

from conlab import (
    AugConfig,
    DatasetSpec,
    ModelConfig,
    ProbeConfig,
    RunConfig,
    TrainConfig,
    generate_dataset,
)

settings.register_profile("suite", deadline=None)
settings.load_profile("suite")

# one line per acceptance criterion, filled in by tests/test_acceptance.py
ACCEPTANCE_LINES: list[str] = []


def record_acceptance(line: str) -> None:
    ACCEPTANCE_LINES.append(line)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def small_cfg() -> RunConfig:
    """A few seconds of end-to-end training instead of minutes."""
    return RunConfig(
        dataset=DatasetSpec(
            n_classes=3,
            input_dim=8,
            n_train=240,
            n_test=90,
            cluster_spread=0.6,
            mean_radius=3.0,
            seed=7,
        ),
        model=ModelConfig(trunk=(16, 12), proj_hidden=None, embed_dim=8),
        train=TrainConfig(
            tau=0.2,
            momentum_m=0.99,
            queue_size=48,
            label_ratio=1.0,
            batch_size=24,
            epochs=3,
            lr=0.05,
            sgd_momentum=0.9,
            weight_decay=5e-4,
            aug=AugConfig(noise_std=0.15, dropout_p=0.0),
            loss="unicon",
            seed=3,
        ),
        probe=ProbeConfig(epochs=8, lr=0.5, batch_size=64, knn_k=5),
    )


@pytest.fixture(scope="session")
def small_dataset(small_cfg):
    return generate_dataset(small_cfg.dataset)
