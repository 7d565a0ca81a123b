import numpy as np
import pytest

from gdrkit.imagecore import ImageRgb
from gdrkit.rng import make_rng


@pytest.fixture
def rng():
    return make_rng(1234, "tests")


def random_image(seed: int, h: int = 16, w: int = 16, masked: bool = False) -> ImageRgb:
    data = make_rng(seed, "img").uniform(0.0, 1.0, (h, w, 3))
    if masked:
        from gdrkit.imagecore import inscribed_circle_mask

        return ImageRgb(data, inscribed_circle_mask(h, w))
    return ImageRgb(data)


def constant_image(value, h: int = 8, w: int = 8) -> ImageRgb:
    return ImageRgb(np.full((h, w, 3), value, dtype=np.float64))


# One line per acceptance criterion, printed after the run.
ACCEPTANCE = {}


def record_criterion(number: int, passed: bool, detail: str) -> None:
    ACCEPTANCE[number] = (passed, detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
