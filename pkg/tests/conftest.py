import numpy as np
import pytest

from ivsforecast import kernels
from ivsforecast.surface_data import SurfacePanel, SyntheticConfig, generate_synthetic


@pytest.fixture(params=kernels.available_backends())
def backend(request):
    """Each importable kernel implementation in turn."""
    return kernels.backend_module(request.param)


@pytest.fixture
def use_backend(request, monkeypatch):
    """Route the package-level kernel names to one implementation."""

    def apply(name):
        mod = kernels.backend_module(name)
        for attr in ("ets_filter", "ets_sse_grad", "arma_css", "best_split", "block_bootstrap_means"):
            monkeypatch.setattr(kernels, attr, getattr(mod, attr))
        return mod

    return apply


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def random_panel(rng, n=50, date="2020-01-02", iv=None):
    m = rng.uniform(90, 110, n)
    tau = rng.uniform(1 / 12, 2, n)
    values = rng.uniform(0.2, 0.4, n) if iv is None else iv(m, tau)
    return SurfacePanel(date, m, tau, values, np.ones(n, dtype=int))


@pytest.fixture
def small_ct_series():
    cfg = SyntheticConfig(n_days=80, quotes_per_day=40, model="CT", phi=0.95, innovation_sd=0.01, noise_sd=0.005)
    return generate_synthetic(cfg, 11)
