import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from lagquant.fields import Gaussian, Trig, real_from_modes

settings.register_profile("lagquant", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("lagquant")

ACCEPTANCE_LINES = []


def random_plane_function(rng, n=1, band=2, real=True):
    """Real (or complex) band-limited function with gaussian coefficients."""
    half = {}
    modes = [m for m in np.ndindex(*([2 * band + 1] * n))]
    modes = [tuple(v - band for v in m) for m in modes]
    chosen = [m for m in modes if rng.uniform() < 0.6] or [modes[len(modes) // 2]]
    for m in chosen:
        c = Gaussian(rng.uniform(-0.5, 0.5, n), rng.uniform(1.0, 4.0),
                     complex(rng.normal(), rng.normal()))
        if real:
            neg = tuple(-v for v in m)
            if neg in half:
                continue
            if not any(m):
                c = Gaussian(c.center, c.decay, c.amp.real)
        half[m] = c
    if real:
        return real_from_modes(half)
    from lagquant.fields import FiberedFunction
    return FiberedFunction(n, half)


def random_torus_function(rng, n=1, band=1, freq=2):
    half = {}
    for m in np.ndindex(*([2 * band + 1] * n)):
        m = tuple(v - band for v in m)
        if tuple(-v for v in m) in half:
            continue
        terms = []
        for q in np.ndindex(*([2 * freq + 1] * n)):
            q = tuple(float(v - freq) for v in q)
            terms.append((q, complex(rng.normal(), rng.normal()) / 4))
        c = Trig(terms, n)
        if not any(m):
            # real-valued zero mode: symmetrize
            c = Trig(list(c.terms) + [(tuple(-v for v in q), a.conjugate()) for q, a in c.terms], n)
        half[m] = c
    return real_from_modes(half, base="torus")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
