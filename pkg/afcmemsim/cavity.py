# cavity.py
"""
Respuesta estacionaria del anillo acoplado al bus: transmisión entrada-salida
con carga de iones, saturación con la potencia y extracción de Q/ER mediante
ajustes Fano.

Convención de fase: los campos evolucionan como exp(-i 2 pi delta t), de modo que
t(delta) = 1 - kappa_ext / (-i delta + kappa_tot / 2). Es el conjugado de la
forma con +i delta; |t|^2 es idéntico.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional

import numpy as np

from .errors import AfcMemError, DomainError, ErrorCode, NumericFailure, ValidationFailure
from .fitkit import FitProblem, fano_dip, fit
from .models import CavityParams, DomainModel, Spectrum, validate

logger = logging.getLogger(__name__)

NOISE_FACTOR = 3.0


class SaturationModel(DomainModel):
    """Saturación homogénea de dos niveles: kappa_ions(P) = kappa_ions0 / (1 + P/p_sat)"""

    kappa_ions0: float = 1778e6
    p_sat: float = 1e-6

    def violations(self):
        out = []
        if not (self.kappa_ions0 >= 0.0):
            out.append((ErrorCode.NegativeRate, f"kappa_ions0 = {self.kappa_ions0}"))
        if not (self.p_sat > 0.0):
            out.append((ErrorCode.NonPositiveSaturation, f"p_sat = {self.p_sat}"))
        return out


class FanoFitResult(DomainModel):
    """
    Resultado de fano_extract.

    params = [f_center, fwhm, depth, s, baseline, slope] en unidades físicas, con
    s = 1/fano_q y la línea de base baseline + slope * (f - f_grid_center).
    """

    q_loaded: float
    extinction_ratio: float
    f_center: float
    fwhm: float
    depth: float
    fano_q: float
    baseline: float
    slope: float
    covariance: np.ndarray
    converged: bool = True

    @property
    def extinction_ratio_db(self) -> float:
        return 10.0 * math.log10(self.extinction_ratio)

    def violations(self):
        out = []
        if not (self.q_loaded > 0):
            out.append((ErrorCode.NoResonance, f"q_loaded = {self.q_loaded}"))
        if not (self.extinction_ratio >= 1.0):
            out.append((ErrorCode.NoResonance, f"extinction_ratio = {self.extinction_ratio} < 1"))
        if not np.allclose(self.covariance, self.covariance.T):
            out.append((ErrorCode.SingularJacobian, "covarianza no simétrica"))
        return out


class PowerPoint(DomainModel):
    power: float
    kappa_ions: float
    q_loaded: float
    extinction_ratio: float

    @property
    def extinction_ratio_db(self) -> float:
        return 10.0 * math.log10(self.extinction_ratio)


def transmission(params: CavityParams, detuning, kappa_ions_eff: float) -> Spectrum:
    """
    Transmisión de campo compleja t(delta) del anillo sobre la grilla de desintonía.

    Args:
        params: presupuesto de pérdidas (kappa_ions se reemplaza por kappa_ions_eff)
        detuning: grilla uniforme de desintonías respecto de f_res, en Hz
        kappa_ions_eff: pérdida efectiva de los iones, en Hz

    Returns:
        Spectrum complejo; la transmisión en potencia es |values|^2
    """
    validate(params)
    if not kappa_ions_eff >= 0:
        raise ValidationFailure(ErrorCode.NegativeRate, f"kappa_ions_eff = {kappa_ions_eff}")
    grid = np.asarray(detuning, dtype=float)
    if not np.all(np.isfinite(grid)):
        raise ValidationFailure(ErrorCode.NonFiniteSamples, "grilla de desintonía no finita")
    return Spectrum.from_grid(grid, field_transmission(params, grid, kappa_ions_eff))


def field_transmission(params: CavityParams, detuning, kappa_ions_eff: float) -> np.ndarray:
    """t(delta) en desintonías arbitrarias (sin exigir grilla uniforme)"""
    kappa = params.kappa_ext + params.kappa_loss + kappa_ions_eff
    return 1.0 - params.kappa_ext / (-1j * np.asarray(detuning, dtype=float) + kappa / 2.0)


def power_transmission(spectrum: Spectrum) -> Spectrum:
    return Spectrum(f0=spectrum.f0, df=spectrum.df, values=np.abs(spectrum.values) ** 2)


def resonance_grid(kappa_total: float, n_points: int = 801, span_linewidths: float = 20.0) -> np.ndarray:
    """Grilla simétrica que cubre span_linewidths anchos de línea alrededor de 0"""
    half = span_linewidths * kappa_total / 2.0
    return np.linspace(-half, half, n_points)


def synthetic_resonance(fwhm: float, depth: float = 0.9, x0: float = 0.0,
                        fano_q: float = math.inf, baseline: float = 1.0, slope: float = 0.0,
                        n_points: int = 801, span_linewidths: float = 20.0) -> Spectrum:
    """
    Espectro de potencia sintético con el mismo modelo Fano que usa fano_extract.
    La grilla queda centrada en x0.
    """
    grid = x0 + resonance_grid(fwhm, n_points, span_linewidths)
    s = 0.0 if math.isinf(fano_q) else 1.0 / fano_q
    u = grid - x0
    values = fano_dip(u, 0.0, fwhm, depth, s, baseline, slope)
    return Spectrum.from_grid(grid, values)


def _noise_level(y: np.ndarray) -> float:
    # MAD de la segunda diferencia: para ruido blanco su desvío es sigma * sqrt(6)
    if y.size < 3:
        return 0.0
    return 1.4826 * float(np.median(np.abs(np.diff(y, 2)))) / math.sqrt(6.0)


def fano_extract(spectrum: Spectrum, f_ref: float = 0.0) -> FanoFitResult:
    """
    Ajusta una caída Lorentziana con asimetría Fano y línea de base lineal.

    Args:
        spectrum: transmisión en potencia (si es compleja se usa |t|^2)
        f_ref: frecuencia absoluta que corresponde a desintonía 0; Q se calcula
            como (f_ref + f_center) / fwhm

    Returns:
        FanoFitResult con Q cargado, ER lineal (y en dB) y covarianza física
    """
    validate(spectrum)
    values = spectrum.values
    y = np.abs(values) ** 2 if np.iscomplexobj(values) else np.asarray(values, dtype=float)
    x = spectrum.freqs

    n_edge = max(2, y.size // 20)
    norm = float(np.median(np.concatenate([y[:n_edge], y[-n_edge:]])))
    depth = norm - float(np.min(y))
    noise = _noise_level(y)
    if not norm > 0 or depth <= max(NOISE_FACTOR * noise, 1e-9 * abs(norm)):
        raise DomainError(ErrorCode.NoResonance,
                          f"profundidad {depth:.3e} por debajo del umbral (ruido {noise:.3e})")

    center = float(np.mean(x))
    half_span = float(np.ptp(x)) / 2.0
    u = (x - center) / half_span
    yn = y / norm
    lower = np.array([-np.inf, 1e-12, 0.0, -np.inf, -np.inf, -np.inf])
    upper = np.array([np.inf, np.inf, 1.0, np.inf, np.inf, np.inf])
    result = fit(FitProblem(model="fano", x=u, y=yn, lower=lower, upper=upper))
    if not result.converged:
        raise NumericFailure(ErrorCode.FitDiverged, "el ajuste Fano no convergió")

    x0, fwhm_u, dip, s, c0, c1 = result.params
    f_center = center + x0 * half_span
    fwhm = abs(fwhm_u) * half_span
    scale = np.diag([half_span, half_span, 1.0, 1.0, norm, norm / half_span])
    covariance = scale @ result.covariance @ scale

    dense = np.linspace(u[0], u[-1], 20 * u.size + 1)
    curve = result.curve(dense)
    i_min = int(np.argmin(curve))
    local_base = c0 + c1 * dense[i_min]
    floor = max(float(curve[i_min]), 1e-15 * local_base)
    extinction = max(local_base / floor, 1.0)

    q_loaded = (f_ref + f_center) / fwhm
    logger.debug(f"Fano: f_center={f_center:.6e} fwhm={fwhm:.6e} ER={extinction:.4g} "
                 f"iteraciones={result.iterations}")
    return FanoFitResult(q_loaded=q_loaded, extinction_ratio=extinction, f_center=f_ref + f_center,
                         fwhm=fwhm, depth=float(dip), fano_q=math.inf if s == 0 else 1.0 / s,
                         baseline=float(c0 * norm), slope=float(c1 * norm / half_span),
                         covariance=covariance, converged=result.converged)


def kappa_ions_at_power(model: SaturationModel, p_on_chip: float) -> float:
    """kappa_ions(P) = kappa_ions0 / (1 + P/p_sat); P = inf da 0"""
    validate(model)
    if not p_on_chip >= 0:
        raise DomainError(ErrorCode.NegativePower, f"potencia {p_on_chip} W < 0")
    if math.isinf(p_on_chip):
        return 0.0
    return model.kappa_ions0 / (1.0 + p_on_chip / model.p_sat)


def power_sweep(params: CavityParams, model: SaturationModel, powers,
                threads: int = 1, n_points: int = 801) -> List[PowerPoint]:
    """
    Barrido en potencia: para cada P arma la transmisión con kappa_ions(P),
    ajusta Fano y devuelve Q cargado y ER.

    Args:
        params: cavidad fría; params.kappa_ions no se usa (lo reemplaza el modelo)
        model: ley de saturación
        powers: potencias en chip, W, en orden creciente
        threads: hilos para el barrido

    Returns:
        Lista de PowerPoint en el mismo orden que powers
    """
    validate(params)
    validate(model)
    powers = [float(p) for p in np.atleast_1d(np.asarray(powers, dtype=float))]
    if any(p < 0 for p in powers):
        raise DomainError(ErrorCode.NegativePower, "potencia negativa en el barrido")
    if any(b < a for a, b in zip(powers, powers[1:])):
        raise ValidationFailure(ErrorCode.PowersNotSorted, "las potencias deben estar en orden creciente")

    def _point(item):
        index, power = item
        try:
            kappa_ions = kappa_ions_at_power(model, power)
            kappa = params.kappa_total + kappa_ions
            grid = resonance_grid(kappa, n_points)
            spectrum = power_transmission(transmission(params, grid, kappa_ions))
            extracted = fano_extract(spectrum, f_ref=params.f_res)
        except AfcMemError as err:
            raise type(err)(err.code, f"potencia #{index} ({power:.3e} W): {err.message}") from err
        return PowerPoint(power=power, kappa_ions=kappa_ions, q_loaded=extracted.q_loaded,
                          extinction_ratio=extracted.extinction_ratio)

    logger.info(f"Barrido de potencia: {len(powers)} puntos, {threads} hilo(s)")
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        return list(pool.map(_point, enumerate(powers)))


def critical_power(params: CavityParams, model: SaturationModel) -> Optional[float]:
    """
    Potencia en la que kappa_ext = kappa_loss + kappa_ions(P), o None si no existe
    """
    target = params.kappa_ext - params.kappa_loss
    if target <= 0 or model.kappa_ions0 <= target:
        return None
    return model.p_sat * (model.kappa_ions0 / target - 1.0)
