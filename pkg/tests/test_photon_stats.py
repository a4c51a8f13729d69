import math

import numpy as np
import pytest

from afcmemsim.errors import ErrorCode, ValidationFailure
from afcmemsim.fitkit import FitProblem, fit, visibility
from afcmemsim.models import Estimate, validate
from afcmemsim.photon_stats import (
    CoincidenceRecord, franson_model, g2_from_counts, heralded_efficiency, sample_fringe,
    synthetic_record, window_counts, witness,
)


# --- g2 ---------------------------------------------------------------------------

def test_luz_sin_correlacion_da_g2_uno():
    assert g2_from_counts(synthetic_record(250, 250)).value == pytest.approx(1.0)


def test_g2_del_par_anunciado():
    estimate = g2_from_counts(synthetic_record(454, 100))
    assert estimate.value == pytest.approx(4.54)
    assert estimate.sigma == pytest.approx((4 / 400) * math.sqrt(454 + 454 ** 2 / 400))
    assert estimate.value > 2.0


def test_g2_sin_accidentales():
    with pytest.raises(ValidationFailure) as info:
        g2_from_counts(synthetic_record(454, 0))
    assert info.value.code is ErrorCode.InsufficientAccidentals


def test_g2_sin_ventanas_laterales():
    record = synthetic_record(454, 100, n_bins=3)
    with pytest.raises(ValidationFailure) as info:
        g2_from_counts(record)
    assert info.value.code is ErrorCode.InsufficientAccidentals


def test_g2_invariante_ante_escala_de_adquisicion():
    base = g2_from_counts(synthetic_record(454, 100, acquisition=1.0))
    scaled = g2_from_counts(synthetic_record(454 * 9, 100 * 9, acquisition=9.0))
    assert scaled.value == pytest.approx(base.value)
    assert scaled.sigma == pytest.approx(base.sigma / 3.0)


def test_ventana_fuera_del_histograma():
    record = synthetic_record(10, 1, n_bins=11)
    assert window_counts(record, 0.0) == 10
    assert window_counts(record, 100e-9) is None


def test_registro_con_cuentas_invalidas():
    with pytest.raises(ValidationFailure) as info:
        validate(CoincidenceRecord(counts=[1, -2, 3], bin_width=1e-9, delay0=0.0))
    assert info.value.code is ErrorCode.NegativeCounts
    with pytest.raises(ValidationFailure) as info:
        validate(CoincidenceRecord(counts=[1, 2, 3], bin_width=1e-9, delay0=0.0, coincidence_window=0.0))
    assert info.value.code is ErrorCode.WindowNonPositive


# --- testigo ------------------------------------------------------------------------

def test_testigo_con_los_datos_medidos():
    result = witness(Estimate(value=4.54, sigma=0.30), Estimate(value=0.5117, sigma=0.0119),
                     Estimate(value=0.5130, sigma=0.0121))
    assert result.w == pytest.approx(-0.1037, abs=1e-3)
    assert result.w == pytest.approx(1 / 6.54 - 0.51235 / 2, rel=1e-12)
    assert result.sigma_w == pytest.approx(0.0082, abs=1e-4)
    assert result.sigma_w == pytest.approx(0.0092, rel=0.15)
    assert result.violation_sigmas > 11
    assert set(result.as_record()) == {"w", "sigma_w", "g2", "sigma_g2", "v_mean", "sigma_v_mean"}


def test_testigo_del_lado_separable():
    result = witness(Estimate(value=2.0), Estimate(value=0.0), Estimate(value=0.0))
    assert result.w == pytest.approx(0.25)
    assert result.sigma_w == 0.0


def test_testigo_con_g2_muy_grande():
    result = witness(Estimate(value=1e12), Estimate(value=0.0), Estimate(value=0.0))
    assert 0.0 < result.w < 1e-11


@pytest.mark.parametrize("g2", [1.0, 2.0, 4.54, 20.0])
def test_frontera_separable(g2):
    boundary = 2.0 / (g2 + 2.0)
    at = witness(Estimate(value=g2), Estimate(value=boundary), Estimate(value=boundary))
    assert at.w == 0.0
    below = witness(Estimate(value=g2), Estimate(value=0.9 * boundary), Estimate(value=0.9 * boundary))
    assert below.w > 0.0


def test_testigo_monotono_por_diferencias_finitas():
    def w(g2, v):
        return witness(Estimate(value=g2), Estimate(value=v), Estimate(value=v)).w

    h = 1e-6
    for g2, v in [(4.54, 0.512), (2.0, 0.2), (10.0, 0.8)]:
        d_g2 = (w(g2 + h, v) - w(g2 - h, v)) / (2 * h)
        d_v = (w(g2, v + h) - w(g2, v - h)) / (2 * h)
        assert d_g2 == pytest.approx(-1.0 / (g2 + 2.0) ** 2, abs=1e-6)
        assert d_v == pytest.approx(-0.5, abs=1e-6)
        assert d_g2 < 0 and d_v < 0


def test_visibilidad_fuera_de_rango():
    with pytest.raises(ValidationFailure) as info:
        witness(Estimate(value=4.54), Estimate(value=1.2), Estimate(value=0.5))
    assert info.value.code is ErrorCode.VisibilityOutOfRange
    with pytest.raises(ValidationFailure) as info:
        witness(Estimate(value=0.0), Estimate(value=0.5), Estimate(value=0.5))
    assert info.value.code is ErrorCode.NonPositiveG2


# --- franjas Franson ------------------------------------------------------------

def test_franja_plana_sin_visibilidad():
    phases = np.linspace(0, 2 * np.pi, 17)
    np.testing.assert_allclose(franson_model(phases, 100.0, 0.0, 0.3), 100.0)


def test_contraste_entre_fases_opuestas():
    phi0 = 0.7
    high = franson_model(phi0, 300.0, 0.512, phi0)
    low = franson_model(phi0 + np.pi, 300.0, 0.512, phi0)
    assert (high - low) / (high + low) == pytest.approx(0.512)


def test_franja_muestreada_recupera_la_visibilidad():
    phases = np.linspace(0, 2 * np.pi, 24, endpoint=False)
    counts = sample_fringe(phases, 500.0, 0.512, phi0=0.4, seed=11)
    result = fit(FitProblem(model="fringe", x=phases, y=counts, sigma=np.sqrt(np.maximum(counts, 1.0))))
    estimate = visibility(result)
    assert abs(estimate.value - 0.512) < 3 * estimate.sigma
    assert estimate.sigma > 0


def test_muestreo_sin_semilla():
    with pytest.raises(ValidationFailure) as info:
        sample_fringe([0.0, 1.0], 100.0, 0.5)
    assert info.value.code is ErrorCode.SeedRequired


def test_muestreo_reproducible():
    phases = np.linspace(0, np.pi, 8)
    np.testing.assert_array_equal(sample_fringe(phases, 80.0, 0.5, seed=3),
                                  sample_fringe(phases, 80.0, 0.5, seed=3))


# --- eficiencia anunciada ---------------------------------------------------

def test_eficiencia_igual_a_la_referencia():
    record = synthetic_record(5000, 50)
    assert heralded_efficiency(record, record).value == pytest.approx(1.0)


def test_eficiencia_anunciada_de_8_6_por_ciento():
    reference = synthetic_record(10100, 100)
    stored = synthetic_record(960, 100)
    estimate = heralded_efficiency(stored, reference)
    assert estimate.value == pytest.approx(0.086)
    expected = 0.086 * math.sqrt((960 + 400 / 16) / 860 ** 2 + (10100 + 400 / 16) / 10000 ** 2)
    assert estimate.sigma == pytest.approx(expected)


def test_eficiencia_normaliza_la_adquisicion():
    reference = synthetic_record(10100, 100, acquisition=1.0)
    stored = synthetic_record(1920, 200, acquisition=2.0)
    assert heralded_efficiency(stored, reference).value == pytest.approx(0.086)


def test_eficiencia_sin_cuentas_almacenadas():
    reference = synthetic_record(10100, 100)
    estimate = heralded_efficiency(synthetic_record(0, 0), reference)
    assert estimate.value == 0.0
    assert estimate.sigma == pytest.approx(1.0 / 10000)


def test_referencia_vacia():
    with pytest.raises(ValidationFailure) as info:
        heralded_efficiency(synthetic_record(10, 1), synthetic_record(0, 0))
    assert info.value.code is ErrorCode.ReferenceEmpty
