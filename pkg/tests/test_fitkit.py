import numpy as np
import pytest

from afcmemsim import fitkit
from afcmemsim.errors import ErrorCode, NumericFailure, ValidationFailure
from afcmemsim.fitkit import FitProblem, evaluate, fit, visibility


def test_exponencial_sin_ruido_recupera_tau():
    t = np.linspace(0.0, 1000.0, 40)
    y = 0.8 * np.exp(-t / 277.6)
    result = fit(FitProblem(model="exp_decay", x=t, y=y))
    assert result.converged
    assert result.value("tau") == pytest.approx(277.6, rel=1e-6)
    assert result.value("amplitude") == pytest.approx(0.8, rel=1e-6)


def test_franja_sin_ruido_recupera_visibilidad():
    phi = np.linspace(0.0, 2 * np.pi, 24, endpoint=False)
    y = evaluate("fringe", phi, [120.0, 0.5117, 0.3])
    result = fit(FitProblem(model="fringe", x=phi, y=y, initial_guess=[100.0, 0.3, 0.0]))
    assert result.value("visibility") == pytest.approx(0.5117, rel=1e-6)
    v = visibility(result)
    assert v.value == pytest.approx(0.5117, rel=1e-6)


def test_visibilidad_igual_a_max_min_de_la_curva():
    phi = np.linspace(0.0, 2 * np.pi, 30, endpoint=False)
    y = evaluate("fringe", phi, [50.0, 0.5130, -1.0])
    result = fit(FitProblem(model="fringe", x=phi, y=y))
    curve = result.curve(np.linspace(0.0, 2 * np.pi, 100001))
    from_curve = (curve.max() - curve.min()) / (curve.max() + curve.min())
    assert visibility(result).value == pytest.approx(abs(result.value("visibility")), abs=1e-12)
    assert from_curve == pytest.approx(0.5130, abs=1e-8)


def test_franja_plana_tiene_visibilidad_nula():
    phi = np.linspace(0.0, 2 * np.pi, 16, endpoint=False)
    result = fit(FitProblem(model="fringe", x=phi, y=np.full(16, 40.0)))
    assert abs(visibility(result).value) < 1e-9


def test_visibilidad_con_amplitud_no_positiva():
    phi = np.linspace(0.0, 2 * np.pi, 16, endpoint=False)
    y = evaluate("fringe", phi, [-10.0, 0.2, 0.0])
    result = fit(FitProblem(model="fringe", x=phi, y=y, initial_guess=[-9.0, 0.2, 0.1]))
    with pytest.raises(ValidationFailure) as info:
        visibility(result)
    assert info.value.code is ErrorCode.NonPositiveAmplitude


def test_jacobiano_singular():
    phi = np.linspace(0.0, 2 * np.pi, 16, endpoint=False)
    y = evaluate("fringe", phi, [10.0, 0.5, 0.0])
    with pytest.raises(NumericFailure) as info:
        fit(FitProblem(model="fringe", x=phi, y=y, initial_guess=[10.0, 0.0, 0.0]))
    assert info.value.code is ErrorCode.SingularJacobian


def test_problemas_invalidos():
    with pytest.raises(ValidationFailure) as info:
        fit(FitProblem(model="exp_decay", x=[0.0, 1.0], y=[1.0, 0.5]))
    assert info.value.code is ErrorCode.InsufficientData
    with pytest.raises(ValidationFailure) as info:
        fit(FitProblem(model="exp_decay", x=[0, 1, 2], y=[1, 0.5, 0.2], sigma=[1, 0, 1]))
    assert info.value.code is ErrorCode.NonPositiveSigma
    with pytest.raises(ValidationFailure) as info:
        fit(FitProblem(model="voigt", x=[0, 1, 2], y=[1, 0.5, 0.2]))
    assert info.value.code is ErrorCode.UnknownModel


def test_costo_no_crece_en_pasos_aceptados():
    rng = np.random.default_rng(3)
    x = np.linspace(-5.0, 5.0, 120)
    y = evaluate("gaussian_pulse", x, [2.0, 0.4, 1.5, 0.1]) + rng.normal(0.0, 0.02, x.size)
    result = fit(FitProblem(model="gaussian_pulse", x=x, y=y, sigma=np.full(x.size, 0.02)))
    trace = np.array(result.cost_trace)
    assert np.all(np.diff(trace) <= 0.0)
    assert result.value("fwhm") == pytest.approx(1.5, abs=0.05)


def test_covarianza_simetrica_semidefinida():
    rng = np.random.default_rng(5)
    x = np.linspace(-3.0, 3.0, 200)
    y = evaluate("lorentzian", x, [0.2, 0.8, 0.7, 1.0]) + rng.normal(0.0, 0.01, x.size)
    result = fit(FitProblem(model="lorentzian", x=x, y=y))
    cov = result.covariance
    np.testing.assert_allclose(cov, cov.T)
    assert np.all(np.linalg.eigvalsh(cov) >= -1e-18)
    assert result.chi2_reduced >= 0.0


def test_invariancia_ante_traslacion():
    x = np.linspace(-4.0, 4.0, 161)
    y = evaluate("lorentzian", x, [0.3, 1.1, 0.6, 2.0])
    base = fit(FitProblem(model="lorentzian", x=x, y=y))
    shifted = fit(FitProblem(model="lorentzian", x=x + 7.0, y=y))
    assert shifted.value("x0") == pytest.approx(base.value("x0") + 7.0, abs=1e-8)
    assert shifted.value("fwhm") == pytest.approx(base.value("fwhm"), rel=1e-8)
    assert shifted.value("depth") == pytest.approx(base.value("depth"), rel=1e-8)


def test_doble_exponencial():
    t = np.linspace(0.0, 60.0, 120)
    y = evaluate("exp_decay2", t, [1.0, 2.0, 0.5, 20.0])
    result = fit(FitProblem(model="exp_decay2", x=t, y=y, initial_guess=[0.8, 1.5, 0.6, 15.0]))
    assert result.value("tau1") == pytest.approx(2.0, rel=1e-5)
    assert result.value("tau2") == pytest.approx(20.0, rel=1e-5)


def test_oraculo_de_grilla_en_una_instancia():
    rng = np.random.default_rng(11)
    t = np.linspace(0.0, 900.0, 30)
    sigma = 0.01
    y = 0.8 * np.exp(-t / 277.6) + rng.normal(0.0, sigma, t.size)
    result = fit(FitProblem(model="exp_decay", x=t, y=y, sigma=np.full(t.size, sigma)))

    amps = np.linspace(0.7, 0.9, 201)
    taus = np.linspace(240.0, 320.0, 401)
    chi2 = ((y[None, None, :] - amps[:, None, None] * np.exp(-t / taus[:, None])[None, :, :]) ** 2).sum(-1)
    i, j = np.unravel_index(np.argmin(chi2), chi2.shape)
    assert result.value("amplitude") == pytest.approx(amps[i], abs=2 * (amps[1] - amps[0]))
    assert result.value("tau") == pytest.approx(taus[j], abs=2 * (taus[1] - taus[0]))


def test_cobertura_montecarlo_y_chi2():
    rng = np.random.default_rng(2024)
    t = np.linspace(0.0, 900.0, 30)
    sigma = 0.01
    truth = np.array([0.8, 277.6])
    clean = 0.8 * np.exp(-t / 277.6)
    inside_2 = 0
    inside_3 = np.zeros(2)
    chi2 = []
    reps = 500
    for _ in range(reps):
        y = clean + rng.normal(0.0, sigma, t.size)
        result = fit(FitProblem(model="exp_decay", x=t, y=y, sigma=np.full(t.size, sigma)))
        pulls = np.abs(result.params - truth) / result.errors
        inside_2 += bool(pulls[1] <= 2.0)
        inside_3 += pulls <= 3.0
        chi2.append(result.chi2_reduced)
    # 2 sigma tiene cobertura nominal 95.45 %; se deja margen binomial
    assert inside_2 / reps >= 0.93
    assert np.all(inside_3 / reps >= 0.99)
    assert np.mean(chi2) == pytest.approx(1.0, abs=0.2)


def test_cobertura_de_la_vida_media_con_ruido_proporcional():
    t = np.linspace(0.0, 1450.0, 30)
    clean = 1000.0 * np.exp(-t / 277.6)
    sigma = 0.05 * clean
    inside = 0
    for seed in range(200):
        rng = np.random.default_rng(seed)
        y = clean + rng.normal(0.0, sigma)
        result = fit(FitProblem(model="exp_decay", x=t, y=y, sigma=sigma))
        assert result.converged
        tau = result.estimate("tau")
        inside += bool(abs(tau.value - 277.6) <= 2.0 * tau.sigma)
    assert inside / 200 >= 0.95


def test_amortiguamiento_saturado_lejos_del_minimo_no_converge(monkeypatch, caplog):
    # modelo que solo es finito muy cerca de a = 1: ningún paso amortiguado baja el costo
    def lineal_fragil(x, a):
        return np.where(abs(a - 1.0) < 1e-6, a * x, np.nan)

    monkeypatch.setitem(fitkit.MODELS, "lineal_fragil",
                        fitkit.FitModel(lineal_fragil, ("a",), lambda x, y: np.array([1.0])))
    monkeypatch.setattr(fitkit, "LAMBDA_MAX", 1e3)
    x = np.linspace(1.0, 10.0, 10)
    with caplog.at_level("WARNING", logger="afcmemsim.fitkit"):
        result = fit(FitProblem(model="lineal_fragil", x=x, y=3.0 * x))
    assert not result.converged
    assert result.value("a") == 1.0
    assert "gradiente no nulo" in caplog.text


def test_minimo_en_una_cota_converge():
    t = np.linspace(0.0, 1000.0, 40)
    y = 0.8 * np.exp(-t / 277.6)
    upper = np.array([0.5, np.inf])
    result = fit(FitProblem(model="exp_decay", x=t, y=y, upper=upper))
    assert result.converged
    assert result.value("amplitude") == pytest.approx(0.5)
