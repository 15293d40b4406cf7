import numpy as np
import pytest
import torch

# Keep CI timings stable and gradients deterministic on small machines.
torch.set_num_threads(1)

# One "[n] PASS/FAIL description" line per acceptance criterion, filled in by
# tests/test_acceptance.py and echoed after the run.
CRITERION_LINES = []


def pytest_terminal_summary(terminalreporter):
    if not CRITERION_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(CRITERION_LINES):
        terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture(scope="session")
def tiny_backbone_cfg():
    """Smallest legal backbone; used wherever the full widths would be slow."""
    from padstream.backbone import BackboneConfig

    return BackboneConfig(
        in_channels=3, stage_channels=(4, 4, 4, 4, 4), blocks_per_stage=(1, 1, 1, 1, 1)
    )
