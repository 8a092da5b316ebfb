import sys
from pathlib import Path

import numpy as np
import pytest
import torch
from hypothesis import settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")
torch.set_num_threads(1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def identity_camera():
    from graytrack.geometry import CameraModel

    # focal 1, a 1x1 image-plane square rendered at 512 pixels per unit.
    return CameraModel(np.eye(3), np.zeros(3), 1.0, 512, 512, pixels_per_unit=512.0)


@pytest.fixture
def genesis():
    from graytrack.scenes import genesis_scenario

    return genesis_scenario(0)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "VERDICTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
