# photon_stats.py
"""
Estadística de pares de fotones: g2 cruzado desde histogramas de coincidencias,
modelo de franjas Franson, testigo de entrelazamiento y eficiencia anunciada.
"""
import logging
import math
from typing import Optional, Tuple

import numpy as np
from pydantic import field_validator

from .errors import ErrorCode, ValidationFailure
from .models import DomainModel, Estimate, validate

logger = logging.getLogger(__name__)


class CoincidenceRecord(DomainModel):
    """
    Histograma de coincidencias: counts[k] en el retardo delay0 + k * bin_width.
    """

    counts: np.ndarray
    bin_width: float
    delay0: float
    singles_s: float = 0.0
    singles_i: float = 0.0
    acquisition: float = 1.0
    coincidence_window: float = 1e-9

    @field_validator("counts", mode="before")
    @classmethod
    def _as_counts(cls, v):
        arr = np.array(v, dtype=float, copy=True).ravel()
        arr.flags.writeable = False
        return arr

    @property
    def delays(self) -> np.ndarray:
        return self.delay0 + self.bin_width * np.arange(self.counts.size)

    def violations(self):
        out = []
        if self.counts.size == 0 or np.any(self.counts < 0) or not np.all(self.counts == np.round(self.counts)):
            out.append((ErrorCode.NegativeCounts, "las cuentas deben ser enteros >= 0"))
        if not (self.coincidence_window > 0 and self.bin_width > 0):
            out.append((ErrorCode.WindowNonPositive,
                        f"ventana {self.coincidence_window}, bin {self.bin_width}"))
        if not self.acquisition > 0:
            out.append((ErrorCode.WindowNonPositive, f"adquisición {self.acquisition} s"))
        if self.singles_s < 0 or self.singles_i < 0:
            out.append((ErrorCode.NegativeCounts, "cuentas simples negativas"))
        return out


def synthetic_record(central: float, accidental: float, window: float = 1e-9, n_bins: int = 41,
                     acquisition: float = 1.0) -> CoincidenceRecord:
    """Histograma plano en accidental con el bin central en central (bin = ventana)"""
    counts = np.full(n_bins, float(accidental))
    counts[n_bins // 2] = float(central)
    return CoincidenceRecord(counts=counts, bin_width=window, delay0=-(n_bins // 2) * window,
                             acquisition=acquisition, coincidence_window=window)


def window_counts(rec: CoincidenceRecord, center: float, window: Optional[float] = None) -> Optional[float]:
    """Suma de los bins cuyo retardo cae en |d - center| <= window/2; None si la ventana sale del histograma"""
    window = rec.coincidence_window if window is None else window
    delays = rec.delays
    tol = 1e-9 * rec.bin_width
    if center - window / 2.0 < delays[0] - rec.bin_width / 2.0 - tol or \
            center + window / 2.0 > delays[-1] + rec.bin_width / 2.0 + tol:
        return None
    mask = np.abs(delays - center) <= window / 2.0 + tol
    return float(np.sum(rec.counts[mask]))


def _side_counts(rec: CoincidenceRecord, center: float, n_side: int, side_spacing: float) -> Tuple[float, int]:
    total, used = 0.0, 0
    for k in range(1, n_side // 2 + 1):
        for sign in (-1.0, 1.0):
            counts = window_counts(rec, center + sign * k * side_spacing)
            if counts is not None:
                total += counts
                used += 1
    return total, used


def g2_from_counts(rec: CoincidenceRecord, center: float = 0.0, n_side: int = 4,
                   side_spacing: Optional[float] = None) -> Estimate:
    """
    g2 = C / mean(S_j): C en la ventana central y S_j en n_side ventanas laterales
    a center +- k * side_spacing (por omisión 3 ventanas de coincidencia).

    sigma por propagación Poisson: sigma^2 = (n/S)^2 (C + C^2/S), con S = sum S_j.
    """
    validate(rec)
    side_spacing = 3.0 * rec.coincidence_window if side_spacing is None else side_spacing
    central = window_counts(rec, center)
    side, used = _side_counts(rec, center, n_side, side_spacing)
    if central is None or used < 2:
        raise ValidationFailure(ErrorCode.InsufficientAccidentals,
                                f"se identificaron {used} ventanas laterales dentro del histograma")
    if side <= 0:
        raise ValidationFailure(ErrorCode.InsufficientAccidentals, "sin coincidencias accidentales")
    g2 = used * central / side
    sigma = (used / side) * math.sqrt(central + central ** 2 / side)
    logger.debug(f"g2: C={central:.0f}, S={side:.0f} en {used} ventanas -> {g2:.4f} +- {sigma:.4f}")
    return Estimate(value=g2, sigma=sigma)


class WitnessResult(DomainModel):
    w: float
    sigma_w: float
    g2: Estimate
    v_mean: Estimate

    @property
    def violation_sigmas(self) -> float:
        """Cuántos sigma por debajo del límite separable W >= 0"""
        return -self.w / self.sigma_w if self.sigma_w > 0 else math.inf

    def as_record(self) -> dict:
        return {"w": self.w, "sigma_w": self.sigma_w, "g2": self.g2.value, "sigma_g2": self.g2.sigma,
                "v_mean": self.v_mean.value, "sigma_v_mean": self.v_mean.sigma}

    def violations(self):
        if not self.sigma_w >= 0:
            return [(ErrorCode.NonPositiveSigma, f"sigma_w = {self.sigma_w}")]
        return []


def witness(g2: Estimate, v1: Estimate, v2: Estimate) -> WitnessResult:
    """
    W = 1/(g2 + 2) - V/2 con V = (v1 + v2)/2.

    Propagación de primer orden:
        sigma_W^2 = (sigma_g2 / (g2 + 2)^2)^2 + (sigma_V / 2)^2,  sigma_V = sqrt(s1^2 + s2^2) / 2
    """
    if not g2.value > 0:
        raise ValidationFailure(ErrorCode.NonPositiveG2, f"g2 = {g2.value}")
    for v in (v1, v2):
        if not 0.0 <= v.value <= 1.0:
            raise ValidationFailure(ErrorCode.VisibilityOutOfRange, f"visibilidad {v.value}")
    v_mean = Estimate(value=(v1.value + v2.value) / 2.0, sigma=math.hypot(v1.sigma, v2.sigma) / 2.0)
    w = 1.0 / (g2.value + 2.0) - v_mean.value / 2.0
    sigma_w = math.hypot(g2.sigma / (g2.value + 2.0) ** 2, v_mean.sigma / 2.0)
    result = validate(WitnessResult(w=w, sigma_w=sigma_w, g2=g2, v_mean=v_mean))
    logger.info(f"Testigo: W = {w:.4f} +- {sigma_w:.4f} ({result.violation_sigmas:.1f} sigma)")
    return result


def franson_model(phase, amplitude: float, visibility: float, phi0: float = 0.0,
                  offset: float = 0.0) -> np.ndarray:
    """Coincidencias del pico central: A (1 + V cos(phi - phi0)) + offset"""
    if amplitude < 0:
        raise ValidationFailure(ErrorCode.NonPositiveAmplitude, f"A = {amplitude}")
    phase = np.asarray(phase, dtype=float)
    return amplitude * (1.0 + visibility * np.cos(phase - phi0)) + offset


def sample_fringe(phase, amplitude: float, visibility: float, phi0: float = 0.0, offset: float = 0.0,
                  seed: Optional[int] = None) -> np.ndarray:
    """Franja con ruido Poisson; sin seed no hay muestreo"""
    if seed is None:
        raise ValidationFailure(ErrorCode.SeedRequired, "el muestreo Poisson requiere seed")
    rng = np.random.default_rng(seed)
    return rng.poisson(franson_model(phase, amplitude, visibility, phi0, offset)).astype(float)


def _net_counts(rec: CoincidenceRecord, center: float, n_side: int, side_spacing: float) -> Tuple[float, float]:
    """Coincidencias centrales menos el fondo lateral medio, y su varianza Poisson"""
    central = window_counts(rec, center)
    if central is None:
        raise ValidationFailure(ErrorCode.ReferenceEmpty, f"la ventana en {center:.3e} s sale del histograma")
    side, used = _side_counts(rec, center, n_side, side_spacing)
    background = side / used if used else 0.0
    variance = central + (side / used ** 2 if used else 0.0)
    return central - background, variance


def heralded_efficiency(stored: CoincidenceRecord, reference: CoincidenceRecord,
                        stored_center: float = 0.0, reference_center: float = 0.0,
                        n_side: int = 4, side_spacing: Optional[float] = None) -> Estimate:
    """
    Eficiencia anunciada: coincidencias netas en la ventana del eco sobre las
    de la referencia sin memoria, normalizadas por tiempo de adquisición.

    Con cero cuentas almacenadas devuelve 0 y un sigma de una cuenta.
    """
    validate(stored)
    validate(reference)
    spacing_s = 3.0 * stored.coincidence_window if side_spacing is None else side_spacing
    spacing_r = 3.0 * reference.coincidence_window if side_spacing is None else side_spacing
    net_r, var_r = _net_counts(reference, reference_center, n_side, spacing_r)
    if not net_r > 0:
        raise ValidationFailure(ErrorCode.ReferenceEmpty, "la referencia no tiene coincidencias netas")
    net_s, var_s = _net_counts(stored, stored_center, n_side, spacing_s)
    scale = reference.acquisition / stored.acquisition
    if net_s <= 0:
        return Estimate(value=0.0, sigma=scale * math.sqrt(max(var_s, 1.0)) / net_r)
    eta = scale * net_s / net_r
    sigma = eta * math.sqrt(var_s / net_s ** 2 + var_r / net_r ** 2)
    logger.info(f"Eficiencia anunciada: {eta:.4f} +- {sigma:.4f}")
    return Estimate(value=eta, sigma=sigma)
