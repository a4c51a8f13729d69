import math

import numpy as np
import pytest

from afcmemsim.afc import inhomogeneous_profile, prepare_comb
from afcmemsim.cavity import transmission
from afcmemsim.echo import (
    afc_efficiency_analytic, discretize_ensemble, echo_time, efficiency_from_trace,
    gaussian_pulse, multiplex, propagate, pulse_train, simulate_time_domain, sweep_finesse,
    transfer_function,
)
from afcmemsim.errors import DomainError, ErrorCode, NumericFailure, ValidationFailure
from afcmemsim.models import CavityParams, CombSpec, EnsembleParams, Spectrum, ToothShape, Waveform


def _l2(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


def test_formula_analitica_con_valores_del_dispositivo(cavidad, peine):
    result = afc_efficiency_analytic(cavidad, peine)
    # evaluación escalar independiente
    c = 1778 / 1110
    c_eff = (0.95 / 4.86 + 0.05) * c
    bracket = (1 / (4.86 * (1 / 0.95 - 1) + 1)) * (991 / 1110) * 4 * c_eff / (1 + c_eff) ** 2
    eta_d = math.exp(-math.pi ** 2 / (2 * math.log(2) * 4.86 ** 2))
    assert result.eta_total == pytest.approx(bracket ** 2 * eta_d, rel=1e-12)
    assert result.eta_total == pytest.approx(0.2455, abs=5e-4)
    assert result.bracket == pytest.approx(0.5761, abs=5e-4)
    assert result.eta_d == pytest.approx(0.7398, abs=5e-4)
    assert result.c_bare == pytest.approx(1.6018, abs=5e-4)
    assert result.c_eff == pytest.approx(0.3932, abs=5e-4)
    # eficiencia medida en el óptimo: 23.3 +- 0.5 %
    assert abs(result.eta_total - 0.233) < 0.02


@pytest.mark.parametrize("finesse", [1.5, 3.0, 4.86, 10.0])
@pytest.mark.parametrize("eta_s", [0.0, 0.5, 0.95, 1.0])
def test_identidad_bracket_cuadrado(cavidad, finesse, eta_s):
    result = afc_efficiency_analytic(cavidad, CombSpec(finesse=finesse, eta_spectral=eta_s))
    assert result.eta_total == pytest.approx(result.bracket ** 2 * result.eta_d, rel=1e-12, abs=1e-300)
    assert 0.0 <= result.eta_total <= 1.0


def test_sin_acoplamiento_externo_no_hay_eco(peine):
    assert afc_efficiency_analytic(CavityParams(kappa_ext=0.0), peine).eta_total == 0.0


def test_limite_de_fineza_infinita(cavidad):
    result = afc_efficiency_analytic(cavidad, CombSpec(finesse=1e6, eta_spectral=1.0))
    assert result.c_eff < 1e-5
    assert result.eta_total < 1e-9


def test_fineza_no_mayor_que_uno(cavidad):
    with pytest.raises(DomainError) as info:
        afc_efficiency_analytic(cavidad, CombSpec(finesse=1.0))
    assert info.value.code is ErrorCode.FinesseTooLow


def test_dientes_cuadrados_usan_sinc(cavidad):
    result = afc_efficiency_analytic(cavidad, CombSpec(finesse=4.0, tooth_shape=ToothShape.square))
    assert result.eta_d == pytest.approx((math.sin(math.pi / 4) / (math.pi / 4)) ** 2)


def test_barrido_de_fineza(cavidad, peine):
    grid = np.linspace(1.5, 15.0, 1351)
    sweep = sweep_finesse(cavidad, peine, grid, threads=4)
    # la fórmula tal como está escrita tiene su máximo cerca de F = 3.9
    assert 3.7 <= sweep.best_finesse <= 4.1
    assert 0.255 <= sweep.best.eta_total <= 0.265
    k = np.array([p.k_match for p in sweep.points])
    assert np.all(np.diff(k) > 0)
    # K = 1 donde k_ext = k_loss + k_ions_eff
    crossing = grid[int(np.argmin(np.abs(k - 1.0)))]
    assert crossing == pytest.approx(0.95 / ((991e6 - 119e6) / 1778e6 - 0.05), abs=0.02)
    assert [p.finesse for p in sweep.points] == list(grid)


def test_barrido_limite_k(cavidad):
    sweep = sweep_finesse(cavidad, CombSpec(eta_spectral=1.0), [10.0, 1e3, 1e7])
    k = [p.k_match for p in sweep.points]
    assert k[-1] == pytest.approx(991 / 119, rel=1e-5)
    assert k[0] < k[1] < k[-1]


def test_transferencia_sin_absorcion_es_la_cavidad(cavidad):
    grid = np.linspace(-2e9, 2e9, 4001)
    empty = inhomogeneous_profile(EnsembleParams(), grid, kappa_ions=0.0)
    s21 = transfer_function(cavidad, empty)
    expected = transmission(cavidad, grid, 0.0)
    np.testing.assert_allclose(s21.values, expected.values, atol=1e-12)


def test_transferencia_absorcion_plana(cavidad):
    grid = np.linspace(-1e9, 1e9, 2001)
    flat = inhomogeneous_profile(EnsembleParams(inhom_fwhm=1e18), grid, kappa_ions=1778e6)
    s21 = transfer_function(cavidad, flat)
    expected = transmission(cavidad, grid, 1778e6)
    np.testing.assert_allclose(s21.values, expected.values, atol=1e-9)


def test_transferencia_periodica_en_el_peine(cavidad, peine, espectro_peine):
    s21 = transfer_function(cavidad, espectro_peine)
    freqs = s21.freqs
    magnitude = np.abs(s21.values)
    band = np.abs(freqs) <= 50e6
    shift = int(round(10e6 / s21.df))
    inner = np.nonzero(band)[0]
    np.testing.assert_allclose(magnitude[inner], magnitude[inner + shift], rtol=0.02)
    assert np.ptp(magnitude[band]) > 0.05


def test_transferencia_grilla_incompatible(cavidad, espectro_peine):
    with pytest.raises(ValidationFailure) as info:
        transfer_function(cavidad, espectro_peine, grid=np.linspace(-5e9, 5e9, 11))
    assert info.value.code is ErrorCode.GridMismatch


def test_propagar_identidad(pulso_15ns):
    ones = Spectrum.from_grid(np.linspace(-2e9, 2e9, 401), np.ones(401, dtype=complex))
    out = propagate(pulso_15ns, ones)
    np.testing.assert_allclose(out.samples, pulso_15ns.samples, atol=1e-12 * np.abs(pulso_15ns.samples).max())


def test_propagar_detecta_aliasing():
    narrow = Spectrum.from_grid(np.linspace(-10e6, 10e6, 201), np.ones(201, dtype=complex))
    short = gaussian_pulse(0.0, 1e-9, 25e-12, -10e-9, 10e-9)
    with pytest.raises(NumericFailure) as info:
        propagate(short, narrow)
    assert info.value.code is ErrorCode.AliasingDetected


def test_eco_a_los_100_ns_y_pasividad(cavidad, espectro_peine, pulso_15ns):
    out = propagate(pulso_15ns, transfer_function(cavidad, espectro_peine))
    assert echo_time(out, 50e-9) == pytest.approx(100e-9, abs=7.5e-9)
    assert out.energy() <= pulso_15ns.energy() * (1 + 1e-9)


def test_eficiencia_numerica_coincide_con_la_formula(cavidad, peine, espectro_peine, pulso_15ns):
    out = propagate(pulso_15ns, transfer_function(cavidad, espectro_peine))
    eta = efficiency_from_trace(out, pulso_15ns, 100e-9, 30e-9)
    analytic = afc_efficiency_analytic(cavidad, peine).eta_total
    assert eta == pytest.approx(analytic, rel=0.10)


@pytest.mark.parametrize("finesse", [2.0, 3.0, 7.0, 10.0])
@pytest.mark.parametrize("eta_s", [0.8, 1.0])
def test_eficiencia_numerica_en_fineza_y_eta_s(cavidad, pulso_15ns, finesse, eta_s):
    comb = CombSpec(n_teeth=21, delta=10e6, finesse=finesse, eta_spectral=eta_s)
    spec = prepare_comb(comb, kappa_ions=cavidad.kappa_ions)
    out = propagate(pulso_15ns, transfer_function(cavidad, spec))
    eta = efficiency_from_trace(out, pulso_15ns, 100e-9, 30e-9)
    assert eta == pytest.approx(afc_efficiency_analytic(cavidad, comb).eta_total, rel=0.10)


@pytest.mark.parametrize("delta", [2e6, 10e6, 50e6])
def test_tiempo_del_eco(cavidad, delta):
    comb = CombSpec(n_teeth=21, delta=delta, finesse=4.86, eta_spectral=0.95)
    spec = prepare_comb(comb, kappa_ions=1778e6)
    fwhm = 0.15 / delta
    dt = fwhm / 200
    pulse = gaussian_pulse(0.0, fwhm, dt, -4 * fwhm, 1.6 / delta)
    out = propagate(pulse, transfer_function(cavidad, spec))
    assert echo_time(out, 0.5 / delta) == pytest.approx(1 / delta, abs=fwhm)


def test_eficiencia_desde_traza_trivial(pulso_15ns):
    assert efficiency_from_trace(pulso_15ns, pulso_15ns, 50e-9, 220e-9) == pytest.approx(1.0)
    zero = Waveform(t0=pulso_15ns.t0, dt=pulso_15ns.dt, samples=np.zeros(pulso_15ns.samples.size))
    assert efficiency_from_trace(zero, pulso_15ns, 100e-9, 30e-9) == 0.0
    with pytest.raises(ValidationFailure) as info:
        efficiency_from_trace(pulso_15ns, pulso_15ns, 1.0, 30e-9)
    assert info.value.code is ErrorCode.EmptyWindow


def test_discretizacion_plana_y_vacia(cavidad):
    grid = np.linspace(-100e6, 100e6, 2001)
    flat = inhomogeneous_profile(EnsembleParams(inhom_fwhm=1e18), grid, kappa_ions=1778e6)
    disc = discretize_ensemble(flat, cavidad, 10e6)
    assert disc.self_energy(0.0)[0] == pytest.approx(1778e6 / 2, rel=5e-3)
    empty = discretize_ensemble(inhomogeneous_profile(EnsembleParams(), grid, kappa_ions=0.0), cavidad, 10e6)
    assert empty.couplings.size == 0 or np.all(empty.couplings == 0)


def test_discretizacion_calibrada_y_convergente(ensamble, espectro_peine, cavidad, peine):
    assert ensamble.calibration_error < 5e-3
    finer = discretize_ensemble(espectro_peine, cavidad, peine.delta, bins_per_tooth_period=64)
    points = np.linspace(-100e6, 100e6, 41)
    coarse = ensamble.self_energy(points, broadening=peine.delta / 16)
    fine = finer.self_energy(points, broadening=peine.delta / 16)
    assert np.max(np.abs(coarse - fine)) / np.max(np.abs(fine)) < 1e-3


def test_discretizacion_insuficiente(espectro_peine, cavidad, peine):
    with pytest.raises(NumericFailure) as info:
        discretize_ensemble(espectro_peine, cavidad, peine.delta, bins_per_tooth_period=2)
    assert info.value.code is ErrorCode.CalibrationFailed


def test_temporal_sin_iones_es_filtro_de_cavidad(cavidad, pulso_15ns):
    grid = np.linspace(-200e6, 200e6, 401)
    empty = inhomogeneous_profile(EnsembleParams(), grid, kappa_ions=0.0)
    disc = discretize_ensemble(empty, cavidad, 10e6)
    result = simulate_time_domain(disc, cavidad, pulso_15ns)
    wide = np.linspace(-5e9, 5e9, 20001)
    reference = propagate(pulso_15ns, transmission(cavidad, wide, 0.0))
    assert _l2(result.output_trace.samples, reference.samples) < 0.01


def test_temporal_coincide_con_funcion_de_transferencia(ensamble, cavidad, espectro_peine, pulso_15ns):
    td = simulate_time_domain(ensamble, cavidad, pulso_15ns).output_trace
    tf = propagate(pulso_15ns, transfer_function(cavidad, espectro_peine))
    window = np.abs(pulso_15ns.times - 100e-9) <= 15e-9
    assert _l2(td.samples[window], tf.samples[window]) < 0.01


def test_temporal_pasivo_y_lineal(ensamble, cavidad, pulso_15ns):
    base = simulate_time_domain(ensamble, cavidad, pulso_15ns).output_trace
    assert base.energy() <= pulso_15ns.energy() * (1 + 1e-9)
    scaled = simulate_time_domain(ensamble, cavidad, pulso_15ns.scaled(3.0)).output_trace
    np.testing.assert_allclose(scaled.samples, 3.0 * base.samples, rtol=1e-10, atol=1e-12 * np.abs(base.samples).max())


def test_temporal_convergencia_en_dt(ensamble, cavidad):
    coarse_in = gaussian_pulse(0.0, 15e-9, 25e-12, -60e-9, 160e-9)
    fine_in = gaussian_pulse(0.0, 15e-9, 12.5e-12, -60e-9, 160e-9)
    coarse = simulate_time_domain(ensamble, cavidad, coarse_in).output_trace
    fine = simulate_time_domain(ensamble, cavidad, fine_in).output_trace
    eta_coarse = efficiency_from_trace(coarse, coarse_in, 100e-9, 30e-9)
    eta_fine = efficiency_from_trace(fine, fine_in, 100e-9, 30e-9)
    assert eta_coarse == pytest.approx(eta_fine, rel=2e-3)


def test_temporal_paso_demasiado_grande(ensamble, cavidad):
    pulse = gaussian_pulse(0.0, 15e-9, 1e-9, -60e-9, 160e-9)
    with pytest.raises(ValidationFailure) as info:
        simulate_time_domain(ensamble, cavidad, pulse)
    assert info.value.code is ErrorCode.StepTooLarge


def test_multiplexado_un_modo(cavidad, peine, espectro_peine):
    train = pulse_train(1, 30e-9, 15e-9, 25e-12, 160e-9)
    result = multiplex(train, peine, cavidad, spec=espectro_peine)
    single = propagate(train.waveform, transfer_function(cavidad, espectro_peine))
    expected = efficiency_from_trace(single, train.waveform, train.centers[0] + 100e-9, 30e-9)
    assert result.per_mode[0] == pytest.approx(expected, rel=1e-9)


def test_multiplexado_nueve_modos(cavidad):
    comb = CombSpec(n_teeth=41, delta=10e6, finesse=4.86, eta_spectral=0.95)
    slot = 1 / (10e6 * 9)
    train = pulse_train(9, slot, 5e-9, 50e-12, 220e-9)
    result = multiplex(train, comb, cavidad)
    expected = [c + 100e-9 for c in train.centers]
    assert np.all(np.diff(result.echo_times) > 0)
    np.testing.assert_allclose(result.echo_times, expected, atol=5e-9)
    assert 0.0 < result.collective < afc_efficiency_analytic(cavidad, comb).eta_total * 1.1
    per_mode = np.asarray(result.per_mode)
    assert np.std(per_mode) / np.mean(per_mode) < 0.2


def test_multiplexado_dieciocho_modos(cavidad):
    comb = CombSpec(n_teeth=81, delta=5e6, finesse=4.86, eta_spectral=0.95)
    slot = 200e-9 / 18
    train = pulse_train(18, slot, 5e-9, 50e-12, 420e-9)
    result = multiplex(train, comb, cavidad)
    assert len(result.echo_times) == 18
    assert np.all(np.diff(result.echo_times) > 0)
    np.testing.assert_allclose(result.echo_times, [c + 200e-9 for c in train.centers], atol=5e-9)


def test_multiplexado_excede_el_almacenamiento(cavidad, peine):
    train = pulse_train(12, 10e-9, 3e-9, 50e-12, 220e-9)
    with pytest.raises(ValidationFailure) as info:
        multiplex(train, peine, cavidad)
    assert info.value.code is ErrorCode.ModesOverrun
