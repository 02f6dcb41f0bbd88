import numpy as np
import pytest

from canids.can_log import CanFrame


def make_frames(payloads, aid=0x0D0, start=0.0, step=0.01, injected=None):
    out = []
    for k, p in enumerate(payloads):
        inj = bool(injected[k]) if injected is not None else False
        out.append(CanFrame(round(start + k * step, 6), aid, len(p), bytes(p), inj))
    return out


def random_frames(n, seed=0, aid=0x0D0):
    rng = np.random.default_rng(seed)
    return make_frames([rng.integers(0, 256, 8, dtype=np.uint8).tobytes() for _ in range(n)], aid=aid)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")
