# afc.py
"""
Preparación del peine atómico (AFC): perfil inhomogéneo, quemado de huecos con
almacenamiento en el reservorio hiperfino, construcción del peine, huecos
laterales superhiperfinos, optimización del campo magnético y decaimiento.

AbsorptionSpectrum guarda la población inicial (kappa_ions local, en Hz) y la
fracción almacenada por bin; la absorción activa es initial * (1 - shelved), así
que activa + almacenada = inicial en cada bin.
"""
import logging
import math
from typing import Iterable, Optional, Sequence, Tuple

import numpy as np
from pydantic import field_validator
from scipy.optimize import minimize_scalar

from .errors import DomainError, ErrorCode, ValidationFailure
from .models import CombSpec, DomainModel, EnsembleParams, Spectrum, ToothShape, validate
from .settings import get_settings

logger = logging.getLogger(__name__)

FOUR_LN2 = 4.0 * math.log(2.0)
# altura de un diente gaussiano de área igual a la de un diente cuadrado de ancho FWHM
GAUSSIAN_TOOTH_HEIGHT = 2.0 * math.sqrt(math.log(2.0) / math.pi)

# calibración: 1.855 T lleva los huecos de Nb y Li a 20 y 30 MHz
CALIBRATION_FIELD = 1.855
SLOPE_NB = 20e6 / CALIBRATION_FIELD
SLOPE_LI = 30e6 / CALIBRATION_FIELD


class AbsorptionSpectrum(DomainModel):
    initial: Spectrum
    shelved: np.ndarray

    @field_validator("shelved", mode="before")
    @classmethod
    def _as_float(cls, v):
        arr = np.array(v, dtype=float, copy=True)
        arr.flags.writeable = False
        return arr

    @property
    def freqs(self) -> np.ndarray:
        return self.initial.freqs

    @property
    def active_fraction(self) -> np.ndarray:
        return 1.0 - self.shelved

    @property
    def absorption(self) -> np.ndarray:
        """kappa_ions(delta) activo, en Hz"""
        return self.initial.values * (1.0 - self.shelved)

    @property
    def shelved_population(self) -> np.ndarray:
        return self.initial.values * self.shelved

    def absorption_spectrum(self) -> Spectrum:
        return Spectrum(f0=self.initial.f0, df=self.initial.df, values=self.absorption)

    def with_shelved(self, shelved: np.ndarray) -> "AbsorptionSpectrum":
        return AbsorptionSpectrum(initial=self.initial, shelved=np.clip(shelved, 0.0, 1.0))

    def violations(self):
        out = list(self.initial.violations())
        if self.shelved.shape != self.initial.values.shape:
            out.append((ErrorCode.EmptyGrid, "shelved no coincide con la grilla"))
        elif np.any(self.shelved < 0) or np.any(self.shelved > 1):
            out.append((ErrorCode.DepthOutOfRange, "fracción almacenada fuera de [0, 1]"))
        if np.iscomplexobj(self.initial.values) or np.any(self.initial.values < 0):
            out.append((ErrorCode.NegativeRate, "absorción inicial negativa o compleja"))
        return out


class BurnSequence(DomainModel):
    """
    Secuencia de quemado: chirp triangular de semiancho fm_amplitude en cada
    frecuencia de bombeo, ciclos on/off de cycle_on y espera final wait
    """

    tooth_frequencies: Tuple[float, ...] = ()
    fm_amplitude: float = 2e6
    cycle_on: float = 10e-3
    cycles: int = 50
    wait: float = 0.2

    def violations(self):
        out = []
        if not (self.fm_amplitude > 0):
            out.append((ErrorCode.FmNonPositive, f"fm_amplitude = {self.fm_amplitude}"))
        if self.cycles < 1:
            out.append((ErrorCode.CyclesInvalid, f"cycles = {self.cycles}"))
        if self.wait < 0:
            out.append((ErrorCode.NegativeWait, f"wait = {self.wait}"))
        return out


class SideholeSpec(DomainModel):
    slope_nb: float = SLOPE_NB
    slope_li: float = SLOPE_LI
    relative_depth: float = 0.3

    def violations(self):
        out = []
        if not (self.slope_nb > 0 and self.slope_li > 0):
            out.append((ErrorCode.SlopesNonPositive, f"pendientes ({self.slope_nb}, {self.slope_li})"))
        if not (0.0 <= self.relative_depth <= 1.0):
            out.append((ErrorCode.DepthOutOfRange, f"relative_depth = {self.relative_depth}"))
        return out


def default_sideholes() -> SideholeSpec:
    return SideholeSpec(relative_depth=get_settings().sidehole_depth)


def inhomogeneous_profile(params: EnsembleParams, grid, kappa_ions: float = 1778e6,
                          offset: float = 0.0) -> AbsorptionSpectrum:
    """
    Perfil gaussiano del ensamble con FWHM inhom_fwhm y valor kappa_ions en el centro.

    Args:
        params: parámetros del ensamble
        grid: desintonías uniformes en Hz
        kappa_ions: pérdida de los iones en el centro de la línea
        offset: desintonía del centro de la línea respecto de la grilla
    """
    validate(params)
    grid = np.asarray(grid, dtype=float)
    values = kappa_ions * np.exp(-FOUR_LN2 * (grid - offset) ** 2 / params.inhom_fwhm ** 2)
    return AbsorptionSpectrum(initial=Spectrum.from_grid(grid, values), shelved=np.zeros(grid.size))


def sidehole_offsets(sideholes: SideholeSpec, b_field: float) -> Tuple[float, float]:
    """Corrimientos (Nb, Li) de los huecos laterales, lineales en B"""
    validate(sideholes)
    if b_field < 0:
        raise DomainError(ErrorCode.NegativeField, f"B = {b_field} T < 0")
    return sideholes.slope_nb * b_field, sideholes.slope_li * b_field


def burn_window(freqs: np.ndarray, center: float, fm_amplitude: float, gamma_h: float) -> np.ndarray:
    """Ventana plana de ancho 2*FM convolucionada con una Lorentziana de FWHM gamma_h"""
    half = gamma_h / 2.0
    return (np.arctan((freqs - center + fm_amplitude) / half)
            - np.arctan((freqs - center - fm_amplitude) / half)) / math.pi


def burn_hole(spec: AbsorptionSpectrum, pump_freq: float, seq: BurnSequence,
              ensemble: Optional[EnsembleParams] = None, sideholes: Optional[SideholeSpec] = None,
              b_field: float = 0.0, p_burn: Optional[float] = None) -> AbsorptionSpectrum:
    """
    Quema un hueco en pump_freq: en cada ciclo la población activa dentro de la
    ventana pasa al reservorio con probabilidad p_burn. Con b_field > 0 también
    quema huecos laterales en pump_freq +- corrimientos.

    Con cycles = 0 devuelve el espectro sin cambios.
    """
    ensemble = ensemble or EnsembleParams()
    p_burn = get_settings().p_burn if p_burn is None else p_burn
    if not (seq.fm_amplitude > 0):
        raise ValidationFailure(ErrorCode.FmNonPositive, f"fm_amplitude = {seq.fm_amplitude}")
    if seq.cycles < 0:
        raise ValidationFailure(ErrorCode.CyclesInvalid, f"cycles = {seq.cycles}")
    if not spec.initial.contains(pump_freq):
        raise DomainError(ErrorCode.PumpOutsideGrid, f"bombeo en {pump_freq:.6e} Hz fuera de la grilla")
    if seq.cycles == 0:
        return spec

    freqs = spec.freqs
    dose = burn_window(freqs, pump_freq, seq.fm_amplitude, ensemble.gamma_h)
    if sideholes is not None and b_field > 0:
        for offset in sidehole_offsets(sideholes, b_field):
            for sign in (-1.0, 1.0):
                dose += sideholes.relative_depth * burn_window(
                    freqs, pump_freq + sign * offset, seq.fm_amplitude, ensemble.gamma_h)
    dose = np.clip(dose, 0.0, 1.0)
    remaining = (1.0 - p_burn * dose) ** seq.cycles
    return spec.with_shelved(1.0 - spec.active_fraction * remaining)


def burn_sequence(spec: AbsorptionSpectrum, seq: BurnSequence, **kwargs) -> AbsorptionSpectrum:
    """Quema todos los bombeos de seq y aplica la espera final"""
    validate(seq)
    for pump in seq.tooth_frequencies:
        spec = burn_hole(spec, pump, seq, **kwargs)
    ensemble = kwargs.get("ensemble") or EnsembleParams()
    return decay(spec, seq.wait, ensemble.t_afc)


def tooth_pattern(freqs: np.ndarray, comb: CombSpec) -> np.ndarray:
    """Suma de dientes normalizados (pico 1) en las posiciones del peine"""
    pattern = np.zeros_like(freqs, dtype=float)
    width = comb.tooth_fwhm
    for center in comb.tooth_centers():
        if comb.tooth_shape is ToothShape.gaussian:
            pattern += np.exp(-FOUR_LN2 * (freqs - center) ** 2 / width ** 2)
        else:
            pattern += (np.abs(freqs - center) <= width / 2.0).astype(float)
    return np.clip(pattern, 0.0, 1.0)


def comb_active_fraction(freqs: np.ndarray, comb: CombSpec, sideholes: Optional[SideholeSpec] = None,
                         b_field: float = 0.0) -> np.ndarray:
    """
    Fracción activa objetivo de un canal: (1 - eta) en los valles y dientes de
    área Delta/F, multiplicada por los huecos laterales que deja el bombeo de
    los anti-dientes
    """
    height = GAUSSIAN_TOOTH_HEIGHT if comb.tooth_shape is ToothShape.gaussian else 1.0
    teeth = tooth_pattern(freqs, comb)
    active = (1.0 - comb.eta_spectral) + comb.eta_spectral * height * teeth
    if sideholes is not None and b_field > 0 and sideholes.relative_depth > 0:
        for offset in sidehole_offsets(sideholes, b_field):
            for sign in (-1.0, 1.0):
                pumped = comb.eta_spectral * (1.0 - tooth_pattern(freqs - sign * offset, comb))
                active = active * (1.0 - sideholes.relative_depth * pumped)
    return np.clip(active, 0.0, 1.0)


def build_combs(spec0: AbsorptionSpectrum, combs: Sequence[CombSpec],
                sideholes: Optional[SideholeSpec] = None, b_field: float = 0.0) -> AbsorptionSpectrum:
    """
    Prepara uno o varios peines sobre el mismo ensamble. Cada bin conserva la
    mayor fracción activa entre canales, de modo que los dientes de un canal no
    se borran al bombear los valles de otro.
    """
    validate(spec0)
    if not combs:
        raise ValidationFailure(ErrorCode.TooFewTeeth, "se necesita al menos un peine")
    freqs = spec0.freqs
    active = np.zeros_like(freqs)
    for comb in combs:
        validate(comb)
        lo = comb.center_offset - comb.bandwidth / 2.0
        hi = comb.center_offset + comb.bandwidth / 2.0
        if lo < spec0.initial.f0 or hi > spec0.initial.f_max:
            raise DomainError(ErrorCode.CombOutsideGrid,
                              f"banda del peine [{lo:.4e}, {hi:.4e}] Hz fuera de la grilla")
        active = np.maximum(active, comb_active_fraction(freqs, comb, sideholes, b_field))
    logger.debug(f"Peine(s) preparados: {len(combs)} canal(es), B = {b_field} T")
    return spec0.with_shelved(1.0 - spec0.active_fraction * active)


def build_comb(spec0: AbsorptionSpectrum, comb: CombSpec, sideholes: Optional[SideholeSpec] = None,
               b_field: float = 0.0) -> AbsorptionSpectrum:
    """
    Peine de n_teeth dientes separados delta con fineza F; la absorción residual
    en los valles es (1 - eta_spectral) de la línea de base.

    La dosis de bombeo de los anti-dientes se fija en forma cerrada en lugar de
    iterar burn_hole: el resultado es el estado saturado de esa secuencia.
    """
    return build_combs(spec0, [comb], sideholes, b_field)


def decay(spec: AbsorptionSpectrum, wait: float, t_afc: float) -> AbsorptionSpectrum:
    """La población almacenada vuelve al estado activo como exp(-wait / t_afc)"""
    if wait < 0:
        raise DomainError(ErrorCode.NegativeWait, f"wait = {wait} s")
    if not t_afc > 0:
        raise DomainError(ErrorCode.NonPositiveLifetime, f"t_afc = {t_afc} s")
    return spec.with_shelved(spec.shelved * math.exp(-wait / t_afc))


def offsets_cost(offsets: Iterable[float], delta: float) -> float:
    """Suma de cuadrados de la distancia de cada corrimiento al múltiplo de delta más cercano"""
    total = 0.0
    for offset in offsets:
        r = math.fmod(abs(offset), delta)
        total += min(r, delta - r) ** 2
    return total


def field_cost(b_field: float, delta: float, sideholes: SideholeSpec) -> float:
    return offsets_cost((sideholes.slope_nb * b_field, sideholes.slope_li * b_field), delta)


def optimize_field(delta: float, sideholes: SideholeSpec, b_range: Tuple[float, float]) -> float:
    """
    Campo que lleva los huecos laterales a los valles del peine.

    Búsqueda en grilla (paso tal que el corrimiento más rápido avance delta/100)
    seguida de un refinamiento acotado alrededor de cada mínimo local de la
    grilla que quede dentro del error de discretización del mejor. Ante
    empate gana el menor B.

    Args:
        delta: separación entre dientes, Hz
        sideholes: pendientes calibradas
        b_range: intervalo (B_min, B_max) en T

    Returns:
        B óptimo en T
    """
    if not delta > 0:
        raise DomainError(ErrorCode.DeltaNonPositive, f"delta = {delta}")
    validate(sideholes)
    lo, hi = float(b_range[0]), float(b_range[1])
    if not (hi > lo) or lo < 0:
        raise DomainError(ErrorCode.EmptyFieldRange, f"rango de campo [{lo}, {hi}] T")

    step = delta / (100.0 * max(sideholes.slope_nb, sideholes.slope_li))
    n = int(math.ceil((hi - lo) / step)) + 1
    fields = np.linspace(lo, hi, max(n, 2))
    costs = np.array([field_cost(b, delta, sideholes) for b in fields])
    # error máximo de la grilla dentro de un valle cuadrático
    grid_error = 2.0 * (sideholes.slope_nb ** 2 + sideholes.slope_li ** 2) * (fields[1] - fields[0]) ** 2
    c_grid = float(np.min(costs))
    padded = np.concatenate(([np.inf], costs, [np.inf]))
    local = (costs <= padded[:-2]) & (costs <= padded[2:]) & (costs <= c_grid + grid_error)
    candidates = np.nonzero(local)[0]

    b_best, c_best = float(fields[int(np.argmin(costs))]), c_grid
    for i in candidates:
        bracket_lo = max(lo, float(fields[i]) - step)
        bracket_hi = min(hi, float(fields[i]) + step)
        refined = minimize_scalar(field_cost, bounds=(bracket_lo, bracket_hi), method="bounded",
                                  args=(delta, sideholes), options={"xatol": 1e-12 * max(1.0, hi)})
        if refined.success and refined.fun < c_best:
            b_best, c_best = float(refined.x), float(refined.fun)
    logger.info(f"Campo óptimo B = {b_best:.6f} T (costo {c_best:.3e} Hz^2, {candidates.size} valle(s))")
    return b_best


def comb_grid(comb: CombSpec, span_factor: float = 5.0, points_per_tooth: int = 128) -> np.ndarray:
    """Grilla uniforme centrada en el peine que cubre span_factor veces su ancho de banda"""
    df = comb.delta / points_per_tooth
    half = int(math.ceil(span_factor * comb.bandwidth / (2.0 * df)))
    return comb.center_offset + df * np.arange(-half, half + 1)


def prepare_comb(comb: CombSpec, kappa_ions: float = 1778e6, ensemble: Optional[EnsembleParams] = None,
                 sideholes: Optional[SideholeSpec] = None, b_field: float = 0.0,
                 span_factor: float = 5.0, points_per_tooth: int = 128) -> AbsorptionSpectrum:
    """Perfil inhomogéneo sobre comb_grid con el peine ya preparado"""
    grid = comb_grid(comb, span_factor, points_per_tooth)
    base = inhomogeneous_profile(ensemble or EnsembleParams(), grid, kappa_ions)
    return build_comb(base, comb, sideholes, b_field)
