# echo.py
"""
Eficiencia de almacenamiento del AFC en cavidad, calculada de tres formas:
fórmula analítica, propagación con función de transferencia y simulación
temporal de modos acoplados. Incluye barridos en fineza y multiplexado temporal.

Los campos evolucionan como exp(-i 2 pi delta t) (misma convención que cavity.py).
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.signal import hilbert

from .afc import AbsorptionSpectrum, prepare_comb
from .errors import DomainError, ErrorCode, NumericFailure, ValidationFailure
from .models import (
    CavityParams, CombSpec, DomainModel, EnsembleParams, Spectrum, ToothShape, Waveform, validate,
)

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi
ALIASING_LIMIT = 1e-3
CALIBRATION_LIMIT = 5e-3
DEFAULT_EO_SLOPE = 1.11e9


# ---------------------------------------------------------------------------
# Fórmula analítica
# ---------------------------------------------------------------------------

class EfficiencyBreakdown(DomainModel):
    finesse: float
    eta_total: float
    eta_d: float
    c_bare: float
    c_eff: float
    k_match: float
    bracket: float

    def violations(self):
        out = []
        if not (0.0 <= self.eta_total <= 1.0):
            out.append((ErrorCode.EtaOutOfRange, f"eta_total = {self.eta_total}"))
        return out


def residual_weight(comb: CombSpec) -> float:
    """Fracción de absorción que queda promediada sobre el peine: eta/F + (1 - eta)"""
    return comb.eta_spectral / comb.finesse + (1.0 - comb.eta_spectral)


def dephasing_factor(comb: CombSpec) -> float:
    """Desfase intrínseco de los dientes; los cuadrados usan sinc^2 (extensión)"""
    if comb.tooth_shape is ToothShape.square:
        return float(np.sinc(1.0 / comb.finesse) ** 2)
    return math.exp(-math.pi ** 2 / (2.0 * math.log(2.0) * comb.finesse ** 2))


def afc_efficiency_analytic(params: CavityParams, comb: CombSpec) -> EfficiencyBreakdown:
    """
    Eficiencia del AFC en cavidad:

        eta = [1/(F(1/eta_s - 1) + 1) * (k_ext/k_tot) * 4C'/(1 + C')^2]^2 * eta_d

    con C = k_ions/k_tot, C' = (eta_s/F + 1 - eta_s) C y K = k_ext/(k_loss + k_ions_eff).
    """
    validate(params)
    if not comb.finesse > 1.0:
        raise DomainError(ErrorCode.FinesseTooLow, f"finesse = {comb.finesse}")
    validate(comb)
    kappa_total = params.kappa_total
    weight = residual_weight(comb)
    c_bare = params.kappa_ions / kappa_total
    c_eff = weight * c_bare
    eta_s = comb.eta_spectral
    contrast = 0.0 if eta_s == 0 else 1.0 / (comb.finesse * (1.0 / eta_s - 1.0) + 1.0)
    bracket = contrast * (params.kappa_ext / kappa_total) * 4.0 * c_eff / (1.0 + c_eff) ** 2
    eta_d = dephasing_factor(comb)
    denominator = params.kappa_loss + params.kappa_ions * weight
    k_match = params.kappa_ext / denominator if denominator > 0 else math.inf
    return EfficiencyBreakdown(finesse=comb.finesse, eta_total=bracket ** 2 * eta_d, eta_d=eta_d,
                               c_bare=c_bare, c_eff=c_eff, k_match=k_match, bracket=bracket)


class FinesseSweep(DomainModel):
    points: Tuple[EfficiencyBreakdown, ...]

    @property
    def best(self) -> EfficiencyBreakdown:
        return max(self.points, key=lambda p: p.eta_total)

    @property
    def best_finesse(self) -> float:
        return self.best.finesse


def sweep_finesse(params: CavityParams, comb: CombSpec, f_grid: Sequence[float],
                  eta_overrides: Optional[Sequence[float]] = None, threads: int = 1) -> FinesseSweep:
    """
    Curva teórica eta(F), K(F), C'(F) sobre f_grid. eta_overrides permite fijar
    eta_spectral punto a punto.
    """
    f_grid = [float(f) for f in f_grid]
    if any(not f > 1.0 for f in f_grid):
        raise DomainError(ErrorCode.FinesseTooLow, "la grilla de fineza debe estar en (1, inf)")
    etas = list(eta_overrides) if eta_overrides is not None else [comb.eta_spectral] * len(f_grid)
    if len(etas) != len(f_grid):
        raise ValidationFailure(ErrorCode.EtaOutOfRange, "eta_overrides con largo distinto a f_grid")

    def _point(item):
        finesse, eta = item
        return afc_efficiency_analytic(params, comb.model_copy(update={"finesse": finesse,
                                                                        "eta_spectral": float(eta)}))

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        points = tuple(pool.map(_point, zip(f_grid, etas)))
    sweep = FinesseSweep(points=points)
    logger.info(f"Barrido de fineza: {len(points)} puntos, F* = {sweep.best_finesse:.3f}")
    return sweep


# ---------------------------------------------------------------------------
# Función de transferencia
# ---------------------------------------------------------------------------

def _next_pow2(n: int) -> int:
    return 1 << max(0, int(math.ceil(math.log2(max(n, 1)))))


def ensemble_self_energy(spec: AbsorptionSpectrum, pad_factor: int = 4) -> Tuple[np.ndarray, float]:
    """
    Respuesta compleja del ensamble Sigma(delta) sobre la grilla de spec.

    Re Sigma es la absorción; Im Sigma sale de la transformada de Hilbert de
    (A - b), donde b = min(A) es un fondo plano sin dispersión.
    """
    absorption = spec.absorption
    background = float(np.min(absorption))
    n = absorption.size
    n_pad = _next_pow2(pad_factor * n)
    padded = np.zeros(n_pad)
    start = (n_pad - n) // 2
    padded[start:start + n] = absorption - background
    analytic = hilbert(padded)[start:start + n]
    return analytic + background, background


def transfer_function(params: CavityParams, spec: AbsorptionSpectrum, grid=None,
                      cavity_detuning: float = 0.0) -> Spectrum:
    """
    S(delta) = 1 - k_ext / (-i(delta - delta_c) + (k_ext + k_loss)/2 + Sigma(delta)/2)

    La absorción de los iones sale de spec (params.kappa_ions no se usa). Fuera de
    la grilla de spec la absorción continúa al nivel de fondo.
    """
    validate(params)
    validate(spec)
    sigma, background = ensemble_self_energy(spec)
    freqs = spec.freqs
    if grid is None:
        grid = freqs
    else:
        grid = np.asarray(grid, dtype=float)
        tol = 1e-9 * max(abs(spec.initial.f0), abs(spec.initial.f_max))
        if grid[0] < freqs[0] - tol or grid[-1] > freqs[-1] + tol:
            raise ValidationFailure(ErrorCode.GridMismatch, "la grilla pedida excede la del espectro")
        sigma = np.interp(grid, freqs, sigma.real) + 1j * np.interp(grid, freqs, sigma.imag)
    denominator = (-1j * (grid - cavity_detuning)
                   + (params.kappa_ext + params.kappa_loss) / 2.0 + sigma / 2.0)
    return Spectrum.from_grid(grid, 1.0 - params.kappa_ext / denominator)


def propagate(input: Waveform, s21: Spectrum) -> Waveform:
    """
    Filtra la forma de onda con S21: salida = IFFT(FFT(entrada) * S21).

    La ventana de FFT se rellena con ceros hasta cubrir al menos 1/df para que
    la respuesta no se pliegue sobre la traza. La salida se recorta al largo de
    la entrada.
    """
    validate(input)
    validate(s21)
    n = input.samples.size
    n_fft = _next_pow2(max(2 * n, int(math.ceil(1.0 / (s21.df * input.dt)))))
    spectrum = np.fft.fft(input.samples, n_fft)
    # exp(-i 2 pi delta t): la frecuencia física es -fftfreq
    delta = -np.fft.fftfreq(n_fft, input.dt)
    power = np.abs(spectrum) ** 2
    outside = (delta < s21.f0) | (delta > s21.f_max)
    total = float(power.sum())
    if total > 0 and power[outside].sum() / total > ALIASING_LIMIT:
        raise NumericFailure(ErrorCode.AliasingDetected,
                             f"{100 * power[outside].sum() / total:.3f}% de la energía fuera de la grilla")
    freqs = s21.freqs
    response = (np.interp(delta, freqs, s21.values.real)
                + 1j * np.interp(delta, freqs, np.imag(s21.values)))
    output = np.fft.ifft(spectrum * response)[:n]
    return Waveform(t0=input.t0, dt=input.dt, samples=output)


# ---------------------------------------------------------------------------
# Discretización y simulación temporal
# ---------------------------------------------------------------------------

class EnsembleDiscretization(DomainModel):
    """
    Ensamble discreto: bins en detunings con acoplamiento couplings (Hz). El fondo
    plano kappa_background actúa como pérdida instantánea de la cavidad.
    """

    bins_per_tooth_period: int
    span_factor: float
    couplings: np.ndarray
    detunings: np.ndarray
    kappa_background: float = 0.0
    gamma_h: float = 0.0
    calibration_error: float = 0.0

    def self_energy(self, delta, broadening: float = 0.0) -> np.ndarray:
        """Sigma(delta)/2 = b/2 + sum_k g_k^2 / (gamma_h/2 + eps - i(delta - Delta_k))"""
        delta = np.atleast_1d(np.asarray(delta, dtype=float))
        out = np.full(delta.shape, self.kappa_background / 2.0, dtype=complex)
        if self.couplings.size == 0:
            return out
        g2 = self.couplings ** 2
        for i, d in enumerate(delta):
            out[i] += np.sum(g2 / (self.gamma_h / 2.0 + broadening - 1j * (d - self.detunings)))
        return out


def _reference_self_energy(freqs, excess, df, points, broadening, gamma_h) -> np.ndarray:
    density = excess / TWO_PI
    out = np.empty(points.size, dtype=complex)
    for i, d in enumerate(points):
        out[i] = np.sum(density / (gamma_h / 2.0 + broadening - 1j * (d - freqs))) * df
    return out


def discretize_ensemble(spec: AbsorptionSpectrum, params: CavityParams, tooth_period: float,
                        bins_per_tooth_period: int = 32, span_factor: float = 5.0,
                        gamma_h: Optional[float] = None) -> EnsembleDiscretization:
    """
    Reparte la absorción sobre el fondo en bins espaciados tooth_period/bins,
    con g_k^2 = (A_k - b) d / (2 pi).

    La calibración compara la suma discreta con la cuadratura fina del mismo
    continuo, evaluadas a una desintonía compleja de tooth_period/16; si el error
    relativo supera 0.5 % lanza CalibrationFailed.
    """
    validate(spec)
    validate(params)
    if not tooth_period > 0:
        raise DomainError(ErrorCode.DeltaNonPositive, f"tooth_period = {tooth_period}")
    if bins_per_tooth_period < 1:
        raise ValidationFailure(ErrorCode.CalibrationFailed, "bins_per_tooth_period < 1")
    if gamma_h is None:
        gamma_h = EnsembleParams().gamma_h

    freqs = spec.freqs
    absorption = spec.absorption
    background = float(np.min(absorption))
    excess = absorption - background
    peak = float(np.max(excess))
    empty = EnsembleDiscretization(bins_per_tooth_period=bins_per_tooth_period, span_factor=span_factor,
                                   couplings=np.zeros(0), detunings=np.zeros(0),
                                   kappa_background=background, gamma_h=gamma_h)
    if peak <= 1e-12 * max(float(np.max(absorption)), 0.0):
        return empty

    active = np.nonzero(excess > 1e-3 * peak)[0]
    band_lo, band_hi = freqs[active[0]], freqs[active[-1]]
    center = 0.5 * (band_lo + band_hi)
    half = max(0.5 * (band_hi - band_lo) * span_factor, tooth_period)
    lo, hi = max(freqs[0], center - half), min(freqs[-1], center + half)

    spacing = tooth_period / bins_per_tooth_period
    stride = spacing / spec.initial.df
    if abs(stride - round(stride)) < 1e-9 and round(stride) >= 1:
        mask = (freqs >= lo) & (freqs <= hi)
        bin_freqs = freqs[mask][::int(round(stride))]
        bin_excess = excess[mask][::int(round(stride))]
    else:
        bin_freqs = np.arange(lo, hi + 0.5 * spacing, spacing)
        bin_excess = np.interp(bin_freqs, freqs, excess)
    keep = bin_excess > 1e-9 * peak
    detunings = bin_freqs[keep]
    couplings = np.sqrt(bin_excess[keep] * spacing / TWO_PI)

    disc = EnsembleDiscretization(bins_per_tooth_period=bins_per_tooth_period, span_factor=span_factor,
                                  couplings=couplings, detunings=detunings,
                                  kappa_background=background, gamma_h=gamma_h)
    broadening = tooth_period / 16.0
    n_check = min(256, active.size)
    points = np.linspace(band_lo, band_hi, n_check)
    target = _reference_self_energy(freqs, excess, spec.initial.df, points, broadening, gamma_h)
    achieved = disc.self_energy(points, broadening) - background / 2.0
    error = float(np.max(np.abs(achieved - target)) / np.max(np.abs(target)))
    logger.debug(f"Discretización: {detunings.size} bins, error de calibración {error:.2e}")
    if error > CALIBRATION_LIMIT:
        raise NumericFailure(ErrorCode.CalibrationFailed,
                             f"error de calibración {error:.3%} con {bins_per_tooth_period} bins por período")
    return disc.model_copy(update={"calibration_error": error})


class TimeDomainResult(DomainModel):
    cavity_trace: Waveform
    output_trace: Waveform


def simulate_time_domain(disc: EnsembleDiscretization, params: CavityParams, input: Waveform,
                         schedule=None, eo_slope: float = DEFAULT_EO_SLOPE,
                         frame_offset: float = 0.0) -> TimeDomainResult:
    """
    Integra con RK4 de paso fijo (dt = input.dt) las ecuaciones de modos acoplados

        da/dt  = -(i 2pi delta_c(t) + pi k_tot) a - i sum 2pi g_k b_k + sqrt(2pi k_ext) s_in
        db_k/dt = -(i 2pi Delta_k + pi gamma_h) b_k - i 2pi g_k a
        s_out = s_in - sqrt(2pi k_ext) a

    con delta_c(t) = eo_slope * V(t) - frame_offset. k_tot incluye el fondo plano
    del ensamble.

    Args:
        disc: ensamble discretizado
        params: cavidad (params.kappa_ions no se usa)
        input: campo de entrada en sqrt(fotones/s)
        schedule: VoltageSchedule opcional
        eo_slope: Hz/V del sintonizado electro-óptico
        frame_offset: frecuencia del marco de simulación respecto de la cavidad en 0 V
    """
    validate(params)
    validate(input)
    dt = input.dt
    n = input.samples.size
    times = input.times
    half_times = times + dt / 2.0
    if schedule is not None:
        detuning = eo_slope * schedule.voltage_at(times) - frame_offset
        detuning_half = eo_slope * schedule.voltage_at(half_times) - frame_offset
    else:
        detuning = np.full(n, -frame_offset)
        detuning_half = detuning

    kappa = params.kappa_ext + params.kappa_loss + disc.kappa_background
    fastest = max(float(np.max(np.abs(disc.detunings))) if disc.detunings.size else 0.0,
                  kappa, float(np.max(np.abs(detuning))), float(np.max(np.abs(detuning_half))))
    if dt > 1.0 / (20.0 * fastest):
        raise ValidationFailure(ErrorCode.StepTooLarge,
                                f"dt = {dt:.3e} s > 1/(20 * {fastest:.3e} Hz)")

    s_in = input.samples
    s_half = np.empty_like(s_in)
    s_half[:-1] = 0.5 * (s_in[:-1] + s_in[1:])
    s_half[-1] = s_in[-1]

    feed = math.sqrt(TWO_PI * params.kappa_ext)
    cavity_decay = math.pi * kappa
    g = TWO_PI * disc.couplings
    bin_rates = 1j * TWO_PI * disc.detunings + math.pi * disc.gamma_h

    def rhs(a, b, drive, delta_c):
        da = -(1j * TWO_PI * delta_c + cavity_decay) * a - 1j * np.dot(g, b) + feed * drive
        db = -bin_rates * b - 1j * g * a
        return da, db

    a = 0.0 + 0.0j
    b = np.zeros(disc.couplings.size, dtype=complex)
    cavity = np.empty(n, dtype=complex)
    for k in range(n):
        cavity[k] = a
        if k == n - 1:
            break
        k1a, k1b = rhs(a, b, s_in[k], detuning[k])
        k2a, k2b = rhs(a + 0.5 * dt * k1a, b + 0.5 * dt * k1b, s_half[k], detuning_half[k])
        k3a, k3b = rhs(a + 0.5 * dt * k2a, b + 0.5 * dt * k2b, s_half[k], detuning_half[k])
        k4a, k4b = rhs(a + dt * k3a, b + dt * k3b, s_in[k + 1], detuning[k + 1])
        a = a + dt / 6.0 * (k1a + 2.0 * k2a + 2.0 * k3a + k4a)
        b = b + dt / 6.0 * (k1b + 2.0 * k2b + 2.0 * k3b + k4b)
        if k % 1000 == 0 and not (np.isfinite(a) and np.all(np.isfinite(b))):
            raise NumericFailure(ErrorCode.NumericOverflow, f"valores no finitos en el paso {k}")
    if not np.all(np.isfinite(cavity)):
        raise NumericFailure(ErrorCode.NumericOverflow, "valores no finitos en la traza de la cavidad")

    output = s_in - feed * cavity
    return TimeDomainResult(cavity_trace=Waveform(t0=input.t0, dt=dt, samples=cavity),
                            output_trace=Waveform(t0=input.t0, dt=dt, samples=output))


# ---------------------------------------------------------------------------
# Eficiencia y multiplexado
# ---------------------------------------------------------------------------

def gaussian_pulse(center: float, fwhm: float, dt: float, t_start: float, t_stop: float,
                   photons: float = 0.163) -> Waveform:
    """Pulso gaussiano con FWHM de intensidad fwhm y energía photons"""
    times = np.arange(t_start, t_stop, dt)
    envelope = np.exp(-2.0 * math.log(2.0) * (times - center) ** 2 / fwhm ** 2)
    energy = np.sum(envelope ** 2) * dt
    return Waveform(t0=t_start, dt=dt, samples=envelope * math.sqrt(photons / energy))


def window_energy(trace: Waveform, window_center: float, window: float) -> float:
    if not window > 0:
        raise ValidationFailure(ErrorCode.EmptyWindow, f"ventana {window} s")
    mask = np.abs(trace.times - window_center) <= window / 2.0
    if not np.any(mask):
        raise ValidationFailure(ErrorCode.EmptyWindow,
                                f"la ventana centrada en {window_center:.3e} s no tiene muestras")
    return float(np.sum(np.abs(trace.samples[mask]) ** 2) * trace.dt)


def efficiency_from_trace(output: Waveform, reference: Waveform, window_center: float,
                          window: float) -> float:
    """eta = energía de output dentro de la ventana / energía total de reference"""
    reference_energy = reference.energy()
    if not reference_energy > 0:
        raise ValidationFailure(ErrorCode.EmptyWindow, "la referencia no tiene energía")
    return window_energy(output, window_center, window) / reference_energy


def echo_time(output: Waveform, after: float) -> float:
    """Instante del máximo de |s|^2 para t > after"""
    mask = output.times > after
    if not np.any(mask):
        raise ValidationFailure(ErrorCode.EmptyWindow, f"la traza termina antes de {after:.3e} s")
    intensity = np.abs(output.samples[mask]) ** 2
    return float(output.times[mask][int(np.argmax(intensity))])


class PulseTrain(DomainModel):
    waveform: Waveform
    centers: Tuple[float, ...]
    slot: float
    mode_energy: float


def pulse_train(n_modes: int, slot: float, fwhm: float, dt: float, t_after: float,
                photons: float = 0.163) -> PulseTrain:
    """M pulsos gaussianos centrados en (i + 1/2) * slot; la traza sigue hasta t_after"""
    if n_modes < 1:
        raise ValidationFailure(ErrorCode.ModesOverrun, "se necesita al menos un modo")
    centers = tuple((i + 0.5) * slot for i in range(n_modes))
    times = np.arange(-slot, t_after, dt)
    samples = np.zeros(times.size, dtype=complex)
    for c in centers:
        samples += np.exp(-2.0 * math.log(2.0) * (times - c) ** 2 / fwhm ** 2)
    single = np.exp(-2.0 * math.log(2.0) * (times - centers[0]) ** 2 / fwhm ** 2)
    scale = math.sqrt(photons / (np.sum(single ** 2) * dt))
    return PulseTrain(waveform=Waveform(t0=float(times[0]), dt=dt, samples=samples * scale),
                      centers=centers, slot=slot, mode_energy=photons)


class MultiplexResult(DomainModel):
    per_mode: Tuple[float, ...]
    echo_times: Tuple[float, ...]
    collective: float
    output: Waveform


def multiplex(train: PulseTrain, comb: CombSpec, params: CavityParams,
              spec: Optional[AbsorptionSpectrum] = None) -> MultiplexResult:
    """
    Almacena un tren de M modos en el peine y los recupera tras 1/delta.

    Args:
        train: tren de pulsos (ver pulse_train)
        comb: peine; si no se da spec se prepara sobre comb_grid
        params: cavidad; params.kappa_ions es la absorción sin bombear

    Returns:
        eficiencias por modo (ventana de ancho slot en t_i + 1/delta), sus tiempos de
        eco y la eficiencia colectiva ponderada por energía
    """
    validate(comb)
    storage = comb.storage_time
    if len(train.centers) * train.slot > storage * (1.0 + 1e-9):
        raise ValidationFailure(ErrorCode.ModesOverrun,
                                f"{len(train.centers)} modos de {train.slot:.3e} s no caben en {storage:.3e} s")
    if spec is None:
        spec = prepare_comb(comb, kappa_ions=params.kappa_ions)
    s21 = transfer_function(params, spec)
    output = propagate(train.waveform, s21)

    per_mode = []
    times = []
    for center in train.centers:
        echo_center = center + storage
        energy = window_energy(output, echo_center, train.slot)
        per_mode.append(energy / train.mode_energy)
        mask = np.abs(output.times - echo_center) <= train.slot / 2.0
        intensity = np.abs(output.samples[mask]) ** 2
        times.append(float(output.times[mask][int(np.argmax(intensity))]))
    collective = float(np.sum(per_mode)) * train.mode_energy / train.waveform.energy()
    logger.info(f"Multiplexado: {len(per_mode)} modos, eficiencia colectiva {collective:.4f}")
    return MultiplexResult(per_mode=tuple(per_mode), echo_times=tuple(times),
                           collective=collective, output=output)
