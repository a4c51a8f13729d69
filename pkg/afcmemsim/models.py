# models.py
"""
Tipos de dominio compartidos por todos los módulos.

Convención de unidades: todas las frecuencias y tasas se guardan en Hz
ordinarios (los valores publicados "/2pi"). Los anchos kappa son anchos
completos (FWHM), de modo que Q = f / kappa_total. El factor 2pi sólo
aparece dentro de las ecuaciones dinámicas.
"""
import enum
import math
from typing import List, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator

from .errors import DomainError, ErrorCode, ValidationFailure

SPEED_OF_LIGHT = 299_792_458.0

Violation = Tuple[ErrorCode, str]


class ToothShape(str, enum.Enum):
    gaussian = "gaussian"
    square = "square"


class DomainModel(BaseModel):
    """Base inmutable; cada tipo declara sus invariantes en violations()"""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    def violations(self) -> List[Violation]:
        return []


def _frozen_array(values, dtype) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.flags.writeable = False
    return arr


class CavityParams(DomainModel):
    """
    Presupuesto de pérdidas del anillo cargado (todas en Hz, FWHM).

    kappa_ext: acoplamiento externo al bus
    kappa_loss: pérdida intrínseca
    kappa_ions: pérdida inducida por el ensamble sin saturar
    f_res: frecuencia de resonancia fría
    """

    kappa_ext: float = 991e6
    kappa_loss: float = 119e6
    kappa_ions: float = 1778e6
    f_res: float = SPEED_OF_LIGHT / 1532.13e-9

    @property
    def kappa_total(self) -> float:
        return self.kappa_ext + self.kappa_loss

    def violations(self) -> List[Violation]:
        out = []
        for name in ("kappa_ext", "kappa_loss", "kappa_ions"):
            value = getattr(self, name)
            if not (value >= 0.0):
                out.append((ErrorCode.NegativeRate, f"{name} = {value} < 0"))
        if not (self.f_res > 0.0):
            out.append((ErrorCode.NonPositiveFrequency, f"f_res = {self.f_res}"))
        if not out and not (self.kappa_total > 0.0):
            out.append((ErrorCode.ZeroTotalLinewidth, "kappa_ext + kappa_loss = 0"))
        return out


class EnsembleParams(DomainModel):
    center_wavelength: float = 1532.13e-9
    inhom_fwhm: float = 202e9
    gamma_h: float = 1.0 / (math.pi * 93.0e-6)
    t_afc: float = 277.6

    def violations(self) -> List[Violation]:
        out = []
        if not (self.inhom_fwhm > self.gamma_h > 0.0):
            out.append((ErrorCode.InvalidLinewidthOrder,
                        f"se requiere inhom_fwhm > gamma_h > 0 ({self.inhom_fwhm}, {self.gamma_h})"))
        if not (self.t_afc > 0.0):
            out.append((ErrorCode.NonPositiveLifetime, f"t_afc = {self.t_afc}"))
        if not (self.center_wavelength > 0.0):
            out.append((ErrorCode.NonPositiveFrequency, "center_wavelength <= 0"))
        return out


class CombSpec(DomainModel):
    """
    Peine AFC: n_teeth dientes separados delta, finesse = delta / FWHM del diente
    """

    n_teeth: int = 21
    delta: float = 10e6
    finesse: float = 4.86
    tooth_shape: ToothShape = ToothShape.gaussian
    eta_spectral: float = 0.95
    center_offset: float = 0.0

    @property
    def tooth_fwhm(self) -> float:
        return self.delta / self.finesse

    @property
    def bandwidth(self) -> float:
        return self.n_teeth * self.delta

    @property
    def storage_time(self) -> float:
        return 1.0 / self.delta

    def tooth_centers(self) -> np.ndarray:
        k = np.arange(self.n_teeth) - (self.n_teeth - 1) / 2.0
        return self.center_offset + k * self.delta

    def violations(self) -> List[Violation]:
        out = []
        if self.n_teeth < 2:
            out.append((ErrorCode.TooFewTeeth, f"n_teeth = {self.n_teeth}"))
        if not (self.delta > 0.0):
            out.append((ErrorCode.DeltaNonPositive, f"delta = {self.delta}"))
        if not (self.finesse > 1.0):
            out.append((ErrorCode.FinesseTooLow, f"finesse = {self.finesse}"))
        if not (0.0 <= self.eta_spectral <= 1.0):
            out.append((ErrorCode.EtaOutOfRange, f"eta_spectral = {self.eta_spectral}"))
        return out


class Waveform(DomainModel):
    """Amplitud compleja en sqrt(fotones/s) muestreada uniformemente desde t0"""

    t0: float
    dt: float
    samples: np.ndarray

    @field_validator("samples", mode="before")
    @classmethod
    def _as_complex(cls, v):
        return _frozen_array(v, complex)

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.samples.size)

    def energy(self) -> float:
        """Número de fotones: integral de |s|^2 dt"""
        return float(np.sum(np.abs(self.samples) ** 2) * self.dt)

    def scaled(self, factor: complex) -> "Waveform":
        return Waveform(t0=self.t0, dt=self.dt, samples=self.samples * factor)

    def violations(self) -> List[Violation]:
        out = []
        if not (self.dt > 0.0):
            out.append((ErrorCode.NonPositiveStep, f"dt = {self.dt}"))
        if not np.all(np.isfinite(self.samples)):
            out.append((ErrorCode.NonFiniteSamples, "muestras no finitas"))
        if self.samples.size == 0:
            out.append((ErrorCode.EmptyGrid, "forma de onda vacía"))
        return out


class Spectrum(DomainModel):
    """Valores (reales o complejos) sobre la grilla de desintonía f0 + k*df"""

    f0: float
    df: float
    values: np.ndarray

    @field_validator("values", mode="before")
    @classmethod
    def _as_array(cls, v):
        arr = np.asarray(v)
        return _frozen_array(arr, complex if np.iscomplexobj(arr) else float)

    @classmethod
    def from_grid(cls, grid: np.ndarray, values) -> "Spectrum":
        grid = np.asarray(grid, dtype=float)
        if grid.size < 2:
            raise DomainError(ErrorCode.EmptyGrid, "la grilla necesita al menos 2 puntos")
        steps = np.diff(grid)
        if not (steps[0] > 0 and np.allclose(steps, steps[0], rtol=1e-6, atol=0.0)):
            raise DomainError(ErrorCode.NonPositiveStep, "la grilla debe ser uniforme y creciente")
        return cls(f0=float(grid[0]), df=float(grid[1] - grid[0]), values=values)

    @property
    def freqs(self) -> np.ndarray:
        return self.f0 + self.df * np.arange(self.values.size)

    @property
    def f_max(self) -> float:
        return self.f0 + self.df * (self.values.size - 1)

    def contains(self, f: float) -> bool:
        return self.f0 <= f <= self.f_max

    def violations(self) -> List[Violation]:
        out = []
        if not (self.df > 0.0):
            out.append((ErrorCode.NonPositiveStep, f"df = {self.df}"))
        if self.values.size == 0:
            out.append((ErrorCode.EmptyGrid, "espectro vacío"))
        elif not np.all(np.isfinite(self.values)):
            out.append((ErrorCode.NonFiniteSamples, "valores no finitos"))
        return out


def uniform_grid(center: float, span: float, df: float) -> np.ndarray:
    """Grilla simétrica alrededor de center con paso df"""
    half = int(math.ceil(span / (2.0 * df)))
    return center + df * np.arange(-half, half + 1)


def q_from_kappa(f_res: float, kappa_total: float) -> float:
    """
    Factor de calidad cargado Q = f_res / kappa_total (kappa en Hz, FWHM)
    """
    if not (f_res > 0.0) or not (kappa_total > 0.0):
        raise DomainError(ErrorCode.NonPositiveFrequency,
                          f"q_from_kappa requiere argumentos positivos ({f_res}, {kappa_total})")
    return f_res / kappa_total


def validate(config: DomainModel) -> DomainModel:
    """
    Devuelve el valor si cumple sus invariantes; si no, lanza ValidationFailure
    con el código del primer invariante violado
    """
    problems = config.violations()
    if problems:
        code, message = problems[0]
        raise ValidationFailure(code, f"{type(config).__name__}: {message}")
    return config


class Estimate(DomainModel):
    """Valor con incertidumbre 1 sigma"""

    value: float
    sigma: float = 0.0
