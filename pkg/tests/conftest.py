import pytest

from afcmemsim.afc import prepare_comb
from afcmemsim.echo import discretize_ensemble, gaussian_pulse
from afcmemsim.models import CavityParams, CombSpec
from afcmemsim.settings import get_settings


@pytest.fixture(autouse=True)
def configuracion_limpia(monkeypatch):
    """Evita que variables AFCMEMSIM_* del entorno alteren los tests."""
    for name in ("THREADS", "LOG_LEVEL", "OUT_DIR", "P_BURN", "SIDEHOLE_DEPTH"):
        monkeypatch.delenv(f"AFCMEMSIM_{name}", raising=False)
    get_settings.cache_clear()
    yield
    get_settings.cache_clear()


@pytest.fixture(scope="session")
def cavidad():
    return CavityParams()


@pytest.fixture(scope="session")
def peine():
    return CombSpec(n_teeth=21, delta=10e6, finesse=4.86, eta_spectral=0.95)


@pytest.fixture(scope="session")
def espectro_peine(peine):
    return prepare_comb(peine, kappa_ions=1778e6)


@pytest.fixture(scope="session")
def ensamble(espectro_peine, cavidad, peine):
    return discretize_ensemble(espectro_peine, cavidad, peine.delta)


@pytest.fixture(scope="session")
def pulso_15ns():
    # traza de [-60, 160] ns a 25 ps
    return gaussian_pulse(0.0, 15e-9, 25e-12, -60e-9, 160e-9)
