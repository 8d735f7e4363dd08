"""Shared helpers: smooth synthetic test images that stay away from the
pixel gamut so luma embedding never clips."""

import numpy as np
import pytest
from scipy.ndimage import gaussian_filter

from wmeval.imageops import RasterImage


def texture_image(width: int, height: int, channels: int = 1,
                  seed: int = 0) -> RasterImage:
    """Low-frequency random texture with pixel values in [16, 239]."""
    rng = np.random.default_rng(seed)
    if channels == 1:
        g = gaussian_filter(rng.standard_normal((height, width)), sigma=3.0)
    else:
        g = gaussian_filter(rng.standard_normal((height, width, channels)),
                            sigma=(3.0, 3.0, 0.0))
    lo, hi = g.min(), g.max()
    px = 16.0 + (g - lo) / (hi - lo) * (239.0 - 16.0)
    return RasterImage(np.rint(px).astype(np.uint8))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One pass/fail line per acceptance criterion at the end of the run."""
    rows = {}
    for status, token in (("passed", "PASS"), ("failed", "FAIL"),
                          ("error", "FAIL")):
        for rep in terminalreporter.stats.get(status, []):
            nodeid = getattr(rep, "nodeid", "")
            if "test_acceptance.py" in nodeid:
                rows.setdefault(nodeid.split("::")[-1], token)
    if rows:
        terminalreporter.write_line("")
        terminalreporter.write_line("acceptance criteria:")
        for name in sorted(rows):
            terminalreporter.write_line(f"  [{rows[name]}] {name}")


@pytest.fixture
def gray_image():
    return texture_image(64, 64, 1, seed=11)


@pytest.fixture
def rgb_image():
    return texture_image(64, 64, 3, seed=12)
