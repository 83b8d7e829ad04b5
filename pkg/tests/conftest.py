import numpy as np
import pytest


def random_pd_gamma(rng, n, decay=None):
    """Autocovariance of a random stationary process, guaranteed PD.

    Built from a strictly positive symmetric spectral density so the implied
    Toeplitz matrix is positive definite by Bochner's theorem, then lightly
    scaled to keep gamma[0] O(1).
    """
    m = 4 * n
    power = rng.uniform(0.05, 1.0, size=m // 2 + 1)
    if decay is not None:
        power *= np.exp(-decay * np.arange(m // 2 + 1) / m)
    spec = np.empty(m)
    spec[: m // 2 + 1] = power
    spec[m // 2 + 1 :] = power[1 : (m + 1) // 2][::-1]
    gamma = np.fft.ifft(spec).real[:n]
    gamma /= gamma[0]
    gamma[0] += rng.uniform(0.0, 0.5)
    return gamma


@pytest.fixture
def rng():
    return np.random.default_rng(20240831)


def pytest_runtest_logreport(report):
    """One visible pass/fail line per acceptance criterion."""
    if report.when == "call" and "test_acceptance" in report.nodeid:
        name = report.nodeid.split("::")[-1]
        status = "PASS" if report.passed else "FAIL"
        print(f"\n[acceptance] {name}: {status}", flush=True)
