import numpy as np
import pytest


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


@pytest.fixture
def rng():
    return make_rng(20240917)


@pytest.fixture
def verdict(capsys):
    """Print one PASS/FAIL line straight to the terminal."""

    def emit(name: str, ok: bool, detail: str = ""):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
        return ok

    return emit
