"""Shared fixtures: the bench-scale parameter set used across the suite."""

import numpy as np
import pytest

from pklink.channel import PkParams

# Bench hardware constants: shared pump flow and the rate pair it realizes.
BENCH_K_A = 3.27e-3
BENCH_K_E = 1.51e-3
BENCH_FLOW = 0.98
BENCH_V = BENCH_FLOW / BENCH_K_E  # 649.0066225165563 mL
BENCH_DOSE = 130.0


@pytest.fixture
def bench_pk() -> PkParams:
    return PkParams(k_e=BENCH_K_E, V=BENCH_V, k_a=BENCH_K_A)


@pytest.fixture
def bench_iv_pk() -> PkParams:
    return PkParams(k_e=BENCH_K_E, V=BENCH_V)


def rel_max(a, b, scale=None) -> float:
    """Sup-norm difference relative to the larger input sup-norm."""
    a = np.asarray(a)
    b = np.asarray(b)
    if scale is None:
        scale = max(np.max(np.abs(a)), np.max(np.abs(b)))
    if scale == 0.0:
        return 0.0
    return float(np.max(np.abs(a - b)) / scale)
