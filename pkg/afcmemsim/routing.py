# routing.py
"""
Ruteo electro-óptico: el voltaje de los electrodos corre la resonancia de la
cavidad (eo_slope Hz/V) y elige en qué canal de frecuencia se almacena y se
recupera cada pulso.

Las simulaciones usan un marco de frecuencia centrado en el promedio de los
canales; la cavidad a voltaje V queda en f_res + eo_slope * V - f_marco.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .afc import AbsorptionSpectrum, build_combs, inhomogeneous_profile
from .cavity import field_transmission
from .echo import (
    DEFAULT_EO_SLOPE, EnsembleDiscretization, discretize_ensemble, gaussian_pulse, residual_weight,
    simulate_time_domain, window_energy,
)
from .errors import ErrorCode, ValidationFailure
from .fitkit import FitProblem, fit
from .models import CavityParams, CombSpec, DomainModel, EnsembleParams, Estimate, Waveform, validate

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi
DEV2_F_RES = 195.7e12
DEV2_Q_LOADED = 3.6e5
MAX_DT = 25e-12


class VoltageSchedule(DomainModel):
    """Voltaje constante por tramos: segments = ((inicio_s, voltaje_V), ...)"""

    segments: Tuple[Tuple[float, float], ...]

    @classmethod
    def constant(cls, voltage: float) -> "VoltageSchedule":
        return cls(segments=((0.0, float(voltage)),))

    @property
    def starts(self) -> np.ndarray:
        return np.array([s for s, _ in self.segments], dtype=float)

    @property
    def voltages(self) -> np.ndarray:
        return np.array([v for _, v in self.segments], dtype=float)

    def voltage_at(self, t) -> np.ndarray:
        """Antes del primer tramo rige el voltaje del primero"""
        index = np.searchsorted(self.starts, np.asarray(t, dtype=float), side="right") - 1
        return self.voltages[np.clip(index, 0, len(self.segments) - 1)]

    def violations(self):
        out = []
        if not self.segments:
            out.append((ErrorCode.SegmentsNotIncreasing, "el programa no tiene tramos"))
            return out
        starts = self.starts
        if not np.all(np.isfinite(starts)) or np.any(np.diff(starts) <= 0):
            out.append((ErrorCode.SegmentsNotIncreasing, "los inicios de tramo deben ser crecientes"))
        if not np.all(np.isfinite(self.voltages)):
            out.append((ErrorCode.NonFiniteVoltage, "voltaje no finito"))
        return out


class Channel(DomainModel):
    label: str
    center_freq: float
    dc_voltage: float


class ChannelPlan(DomainModel):
    """
    Canales de frecuencia: center_freq = f_res + eo_slope * dc_voltage.
    """

    channels: Tuple[Channel, ...]
    eo_slope: float = DEFAULT_EO_SLOPE
    f_res: float = DEV2_F_RES

    @classmethod
    def from_voltages(cls, voltages: Mapping[str, float], eo_slope: float = DEFAULT_EO_SLOPE,
                      f_res: float = DEV2_F_RES) -> "ChannelPlan":
        channels = tuple(Channel(label=label, center_freq=f_res + eo_slope * float(v), dc_voltage=float(v))
                         for label, v in voltages.items())
        return cls(channels=channels, eo_slope=eo_slope, f_res=f_res)

    @property
    def labels(self) -> List[str]:
        return [c.label for c in self.channels]

    def channel(self, label: str) -> Channel:
        for c in self.channels:
            if c.label == label:
                return c
        raise ValidationFailure(ErrorCode.ChannelMismatch, f"canal desconocido {label!r}")

    def frame_center(self) -> float:
        return float(np.mean([c.center_freq for c in self.channels]))

    def _structural(self):
        out = []
        if not self.channels:
            out.append((ErrorCode.ChannelMismatch, "el plan no tiene canales"))
        if len(set(self.labels)) != len(self.labels):
            out.append((ErrorCode.DuplicateChannel, "etiquetas de canal repetidas"))
        if not self.eo_slope > 0:
            out.append((ErrorCode.NonPositiveSlope, f"eo_slope = {self.eo_slope}"))
        tol = 1e-12 * abs(self.f_res) + 1e-6 * abs(self.eo_slope)
        for c in self.channels:
            if abs(c.center_freq - (self.f_res + self.eo_slope * c.dc_voltage)) > tol:
                out.append((ErrorCode.ChannelMismatch,
                            f"canal {c.label!r}: center_freq no coincide con f_res + eo_slope * V"))
        return out

    def violations(self):
        out = self._structural()
        centers = [c.center_freq for c in self.channels]
        if len(set(centers)) != len(centers):
            out.append((ErrorCode.DuplicateChannel, "centros de canal repetidos"))
        return out


def detuning_from_voltage(plan: ChannelPlan, v):
    """Corrimiento de la resonancia: eo_slope * v (exactamente lineal)"""
    return plan.eo_slope * v


def square_wave(period: float, v_hi: float, v_lo: float, duty: float = 0.5, total: float = 0.0,
                t_start: float = 0.0, sim_dt: Optional[float] = None) -> VoltageSchedule:
    """
    Onda cuadrada: v_hi durante duty * period, luego v_lo, repetida hasta cubrir total.

    Args:
        sim_dt: paso de la simulación; el período debe abarcar al menos 2 pasos
    """
    if not period > 0 or (sim_dt is not None and period < 2.0 * sim_dt):
        raise ValidationFailure(ErrorCode.PeriodTooShort, f"período {period:.3e} s")
    if not 0.0 < duty < 1.0:
        raise ValidationFailure(ErrorCode.DutyOutOfRange, f"duty = {duty}")
    n_periods = max(1, int(math.ceil(total / period - 1e-9)))
    segments = []
    for k in range(n_periods):
        start = t_start + k * period
        segments.append((start, float(v_hi)))
        segments.append((start + duty * period, float(v_lo)))
    return validate(VoltageSchedule(segments=tuple(segments)))


def half_cycle_centers(period: float, duty: float, total: float,
                       t_start: float = 0.0) -> Tuple[List[float], List[float]]:
    """Centros de los semiciclos altos y bajos dentro de [t_start, t_start + total)"""
    high, low = [], []
    n_periods = int(math.floor(total / period + 1e-9))
    for k in range(n_periods):
        start = t_start + k * period
        high.append(start + duty * period / 2.0)
        low.append(start + duty * period + (1.0 - duty) * period / 2.0)
    return high, low


def cavity_from_linewidth(f_res: float = DEV2_F_RES, kappa_loaded: Optional[float] = None,
                          comb: Optional[CombSpec] = None, ext_share: float = 0.46,
                          loss_share: float = 0.28) -> CavityParams:
    """
    Presupuesto de pérdidas a partir del ancho cargado: kappa_ext y kappa_loss son
    fracciones de kappa_loaded y el resto lo aportan los iones ya con el peine
    (kappa_ions * peso residual), de modo que el ancho con el peine preparado
    es kappa_loaded.
    """
    if kappa_loaded is None:
        kappa_loaded = f_res / DEV2_Q_LOADED
    ions_share = 1.0 - ext_share - loss_share
    if ext_share < 0 or loss_share < 0 or ions_share < 0:
        raise ValidationFailure(ErrorCode.NegativeRate,
                                f"reparto inválido: ext={ext_share}, loss={loss_share}")
    weight = residual_weight(comb or CombSpec())
    return validate(CavityParams(kappa_ext=ext_share * kappa_loaded, kappa_loss=loss_share * kappa_loaded,
                                 kappa_ions=ions_share * kappa_loaded / weight, f_res=f_res))


class RoutingSetup(DomainModel):
    """
    Todo lo que necesita una corrida de ruteo. comb es la receta común de los
    peines; comb_overrides la reemplaza por canal (center_offset se recalcula).
    """

    plan: ChannelPlan
    cavity: CavityParams
    comb: CombSpec = CombSpec()
    comb_overrides: Dict[str, CombSpec] = {}
    ensemble: EnsembleParams = EnsembleParams()
    pulse_fwhm: float = 6e-9
    window: float = 25e-9
    photons: float = 0.163
    dt: Optional[float] = None
    threads: int = 1

    def comb_for(self, label: str) -> CombSpec:
        offset = self.plan.channel(label).center_freq - self.plan.frame_center()
        return self.comb_overrides.get(label, self.comb).model_copy(update={"center_offset": offset})


class RoutingReport(DomainModel):
    """
    energies[(n, m)]: energía del eco en la ventana del canal m con entrada en f_n.
    eta[n] = energies[(n, n)] / input_energy; chi[(n, m)] = energies[(n, m)] / energies[(n, n)].
    """

    input_energy: float
    energies: Dict[Tuple[str, str], float]
    eta: Dict[str, float]
    chi: Dict[Tuple[str, str], float]

    def rows(self) -> List[dict]:
        """Tabla plana (channel_in, channel_out, energy, eta_or_chi)"""
        out = []
        for (n, m), energy in sorted(self.energies.items()):
            value = self.eta[n] if n == m else self.chi[(n, m)]
            out.append({"channel_in": n, "channel_out": m, "energy": energy, "eta_or_chi": value})
        return out


class _Prepared(DomainModel):
    setup: RoutingSetup
    spectrum: AbsorptionSpectrum
    frame_offset: float
    offsets: Dict[str, float]
    dt: float
    fastest: float


def _prepare(setup: RoutingSetup, schedule: Optional[VoltageSchedule]) -> _Prepared:
    plan = setup.plan
    center = plan.frame_center()
    offsets = {c.label: c.center_freq - center for c in plan.channels}
    combs = [setup.comb_for(label) for label in plan.labels]
    tooth_period = min(c.delta for c in combs)
    edge = max(c.bandwidth / 2.0 + 5.0 * c.delta for c in combs)
    lo = min(offsets.values()) - edge
    hi = max(offsets.values()) + edge
    df = tooth_period / 64.0
    grid = lo + df * np.arange(int(math.ceil((hi - lo) / df)) + 1)
    # el perfil inhomogéneo se centra en la cavidad a 0 V
    base = inhomogeneous_profile(setup.ensemble, grid, setup.cavity.kappa_ions, offset=plan.f_res - center)
    spectrum = build_combs(base, combs)

    frame_offset = center - plan.f_res
    voltages = [c.dc_voltage for c in plan.channels]
    if schedule is not None:
        voltages.extend(schedule.voltages.tolist())
    fastest = max(abs(lo), abs(hi), setup.cavity.kappa_total,
                  max(abs(plan.eo_slope * v - frame_offset) for v in voltages))
    dt = setup.dt if setup.dt is not None else min(MAX_DT, 1.0 / (25.0 * fastest))
    return _Prepared(setup=setup, spectrum=spectrum, frame_offset=frame_offset, offsets=offsets,
                     dt=dt, fastest=fastest)


class PreparedRouting(DomainModel):
    """
    Peines y discretización de un RoutingSetup, reutilizables entre corridas
    de route con distintos programas de voltaje.
    """

    prep: _Prepared
    disc: EnsembleDiscretization
    storage: float

    @property
    def setup(self) -> RoutingSetup:
        return self.prep.setup

    def covers(self, schedule: Optional[VoltageSchedule]) -> bool:
        """True si el paso preparado resuelve todos los voltajes del programa"""
        if schedule is None:
            return True
        plan = self.setup.plan
        fastest = float(np.max(np.abs(plan.eo_slope * schedule.voltages - self.prep.frame_offset)))
        return fastest <= self.prep.fastest


def _check_setup(setup: RoutingSetup) -> None:
    validate(setup.cavity)
    problems = setup.plan._structural()
    if problems:
        code, message = problems[0]
        raise ValidationFailure(code, f"ChannelPlan: {message}")


def prepare_routing(setup: RoutingSetup, schedule: Optional[VoltageSchedule] = None) -> PreparedRouting:
    """Construye los peines y discretiza el ensamble una sola vez"""
    plan = setup.plan
    _check_setup(setup)
    prep = _prepare(setup, schedule)
    storage = 1.0 / min(setup.comb_for(label).delta for label in plan.labels)
    disc = discretize_ensemble(prep.spectrum, setup.cavity, tooth_period=1.0 / storage,
                               gamma_h=setup.ensemble.gamma_h)
    logger.info(f"Ruteo: {len(plan.channels)} canal(es), dt = {prep.dt:.3e} s, {disc.detunings.size} bins")
    return PreparedRouting(prep=prep, disc=disc, storage=storage)


def _echo_energy(prep: _Prepared, disc, carrier: float, t_in: float,
                 schedule: VoltageSchedule, storage: float) -> float:
    setup = prep.setup
    fwhm = setup.pulse_fwhm
    pulse = gaussian_pulse(t_in, fwhm, prep.dt, t_in - 5.0 * fwhm, t_in + storage + setup.window,
                           photons=setup.photons)
    samples = pulse.samples * np.exp(-1j * TWO_PI * carrier * (pulse.times - t_in))
    wave = Waveform(t0=pulse.t0, dt=pulse.dt, samples=samples)
    result = simulate_time_domain(disc, setup.cavity, wave, schedule, setup.plan.eo_slope, prep.frame_offset)
    return window_energy(result.output_trace, t_in + storage, setup.window)


def _default_assignments(plan: ChannelPlan, schedule: VoltageSchedule) -> Dict[str, float]:
    """Para cada canal, el centro del primer tramo con su voltaje"""
    starts = schedule.starts
    voltages = schedule.voltages
    out = {}
    for c in plan.channels:
        for i, v in enumerate(voltages):
            if abs(v - c.dc_voltage) <= 1e-9 * max(1.0, abs(v)) and i + 1 < len(starts):
                out[c.label] = 0.5 * (starts[i] + starts[i + 1])
                break
        else:
            raise ValidationFailure(ErrorCode.ChannelMismatch,
                                    f"el programa nunca pone el canal {c.label!r} ({c.dc_voltage} V)")
    return out


def route(setup: RoutingSetup, schedule: Optional[VoltageSchedule] = None,
          assignments: Optional[Mapping[str, float]] = None,
          prepared: Optional[PreparedRouting] = None) -> RoutingReport:
    """
    Eficiencia por canal y diafonía entre canales.

    Sin schedule (modo estático) cada lectura usa el voltaje DC del canal de
    salida y todas las entradas llegan en t = 0. Con schedule (modo dinámico)
    la entrada en f_n se envía en el instante asignado al canal de salida m,
    de modo que la cavidad está en V_m al recibirla y al emitir el eco.

    Args:
        setup: canales, cavidad y receta de peine
        schedule: programa de voltaje opcional
        assignments: instante de envío por canal (solo modo dinámico); por
            omisión el centro del primer semiciclo de cada canal
        prepared: resultado de prepare_routing(setup) para no repetir la
            discretización; se descarta si su paso no resuelve el programa

    Returns:
        RoutingReport con energías, eta_s y chi para todos los pares
    """
    plan = setup.plan
    _check_setup(setup)
    if prepared is not None and prepared.setup != setup:
        raise ValidationFailure(ErrorCode.ChannelMismatch, "prepared corresponde a otro RoutingSetup")
    if schedule is not None:
        validate(schedule)
        assignments = dict(assignments) if assignments is not None else _default_assignments(plan, schedule)
        unknown = set(assignments) ^ set(plan.labels)
        if unknown:
            raise ValidationFailure(ErrorCode.ChannelMismatch, f"asignaciones sin canal: {sorted(unknown)}")
    elif assignments is not None:
        raise ValidationFailure(ErrorCode.ChannelMismatch, "las asignaciones requieren un programa de voltaje")

    if prepared is None or not prepared.covers(schedule):
        prepared = prepare_routing(setup, schedule)
    prep, disc, storage = prepared.prep, prepared.disc, prepared.storage

    pairs = [(n, m) for n in plan.labels for m in plan.labels]

    def _pair(pair):
        n, m = pair
        if schedule is None:
            return _echo_energy(prep, disc, prep.offsets[n], 0.0,
                                VoltageSchedule.constant(plan.channel(m).dc_voltage), storage)
        return _echo_energy(prep, disc, prep.offsets[n], assignments[m], schedule, storage)

    with ThreadPoolExecutor(max_workers=max(1, setup.threads)) as pool:
        energies = dict(zip(pairs, pool.map(_pair, pairs)))

    input_energy = setup.photons
    eta = {n: energies[(n, n)] / input_energy for n in plan.labels}
    chi = {}
    for n, m in pairs:
        if n == m:
            continue
        matched = energies[(n, n)]
        chi[(n, m)] = float(min(1.0, energies[(n, m)] / matched)) if matched > 0 else 0.0
    for (n, m), value in chi.items():
        logger.debug(f"chi({n} -> {m}) = {value:.3e}")
    return RoutingReport(input_energy=input_energy, energies=energies, eta=eta, chi=chi)


def fits_half_cycle(setup: RoutingSetup, period: float, duty: float = 0.5) -> bool:
    """
    El pulso (+-pulse_fwhm alrededor del centro) y la ventana del eco caben en
    el semiciclo más corto de la onda cuadrada.
    """
    half_cycle = min(duty, 1.0 - duty) * period
    return 2.0 * setup.pulse_fwhm <= half_cycle / 2.0 and setup.window <= half_cycle


def route_periods(setup: RoutingSetup, periods: Sequence[float], duty: float = 0.5,
                  threads: Optional[int] = None) -> Dict[float, RoutingReport]:
    """
    Modo estático (clave 0.0) y una onda cuadrada entre los dos canales por
    cada período, con peines y discretización compartidos. Cada programa dura
    period + storage + window para que el eco caiga en el semiciclo siguiente.
    """
    plan = setup.plan
    for period in periods:
        if not period > 0:
            raise ValidationFailure(ErrorCode.PeriodTooShort, f"período {period:.3e} s")
    if periods and len(plan.channels) != 2:
        raise ValidationFailure(ErrorCode.ChannelMismatch,
                                f"la onda cuadrada necesita 2 canales, hay {len(plan.channels)}")
    for period in periods:
        if not fits_half_cycle(setup, period, duty):
            logger.warning(f"Pulso de {setup.pulse_fwhm * 1e9:.1f} ns o ventana de {setup.window * 1e9:.1f} ns "
                           f"no caben en el semiciclo de T_EO = {period * 1e9:.0f} ns")
    prepared = prepare_routing(setup)
    v_hi, v_lo = (c.dc_voltage for c in plan.channels) if periods else (0.0, 0.0)

    def _one(period: float) -> RoutingReport:
        if period == 0.0:
            return route(setup, prepared=prepared)
        schedule = square_wave(period, v_hi, v_lo, duty=duty, total=period + prepared.storage + setup.window,
                               sim_dt=prepared.prep.dt)
        return route(setup, schedule, prepared=prepared)

    keys = [0.0] + [float(p) for p in periods]
    with ThreadPoolExecutor(max_workers=max(1, threads or setup.threads)) as pool:
        return dict(zip(keys, pool.map(_one, keys)))


def lorentzian_suppression(kappa_loaded: float, separation: float, passes: int = 2) -> float:
    """[(k/2)^2 / ((k/2)^2 + d^2)]^passes"""
    half = kappa_loaded / 2.0
    return (half ** 2 / (half ** 2 + separation ** 2)) ** passes


# ---------------------------------------------------------------------------
# Almacenar, correr y restaurar
# ---------------------------------------------------------------------------

class ShiftResult(DomainModel):
    output: Waveform
    ratio: float
    efficiency: float
    static_efficiency: float
    echo_peak_time: float
    overlap_warning: bool = False


def default_shift_pattern(v_store: float, v_away: float,
                          start: float = 12.5e-9, duration: float = 25e-9) -> Tuple[Tuple[float, float, float], ...]:
    """Tres tramos de 25 ns alternando lejos, de vuelta y lejos; después queda en v_store"""
    return ((start, start + duration, v_away),
            (start + duration, start + 2 * duration, v_store),
            (start + 2 * duration, start + 3 * duration, v_away))


def _shift_schedule(v_store: float, shifts: Sequence[Tuple[float, float, float]], t0: float) -> VoltageSchedule:
    segments = [(t0, float(v_store))]
    for start, stop, voltage in sorted(shifts):
        if start > segments[-1][0]:
            segments.append((float(start), float(voltage)))
        else:
            segments[-1] = (segments[-1][0], float(voltage))
        if math.isfinite(stop):
            segments.append((float(stop), float(v_store)))
    # tramos contiguos con el mismo voltaje se fusionan
    merged = [segments[0]]
    for start, voltage in segments[1:]:
        if start <= merged[-1][0]:
            merged[-1] = (merged[-1][0], voltage)
        elif voltage != merged[-1][1]:
            merged.append((start, voltage))
    return validate(VoltageSchedule(segments=tuple(merged)))


def store_shift_restore(setup: RoutingSetup, label: str,
                        shifts: Sequence[Tuple[float, float, float]] = ()) -> ShiftResult:
    """
    Almacena un pulso en el canal label (entrada en t = 0) y aplica tramos
    (inicio, fin, voltaje) antes del eco; fin = inf deja la cavidad corrida.

    Returns:
        ShiftResult con la traza de salida, eta(corrido)/eta(estático) y el
        instante del máximo del eco. overlap_warning indica que algún tramo
        pisa la ventana de entrada o la del eco.
    """
    plan = setup.plan
    channel = plan.channel(label)
    fwhm = setup.pulse_fwhm
    t0 = -5.0 * fwhm
    schedule = _shift_schedule(channel.dc_voltage, shifts, t0) if shifts else None
    prep = _prepare(setup, schedule)
    storage = setup.comb_for(label).storage_time
    disc = discretize_ensemble(prep.spectrum, setup.cavity, tooth_period=1.0 / storage,
                               gamma_h=setup.ensemble.gamma_h)
    half_window = setup.window / 2.0
    overlap = any(start < half_window and stop > -half_window for start, stop, _ in shifts) or \
        any(start < storage + half_window and stop > storage - half_window for start, stop, _ in shifts)
    if overlap:
        logger.warning("Un tramo de corrimiento pisa la ventana de entrada o la del eco")

    pulse = gaussian_pulse(0.0, fwhm, prep.dt, t0, storage + setup.window, photons=setup.photons)
    carrier = prep.offsets[label]
    wave = Waveform(t0=pulse.t0, dt=pulse.dt, samples=pulse.samples * np.exp(-1j * TWO_PI * carrier * pulse.times))

    static = VoltageSchedule.constant(channel.dc_voltage)
    reference = simulate_time_domain(disc, setup.cavity, wave, static, plan.eo_slope, prep.frame_offset)
    static_eta = window_energy(reference.output_trace, storage, setup.window) / setup.photons
    if shifts:
        shifted = simulate_time_domain(disc, setup.cavity, wave, schedule, plan.eo_slope, prep.frame_offset)
    else:
        shifted = reference
    eta = window_energy(shifted.output_trace, storage, setup.window) / setup.photons

    trace = shifted.output_trace
    mask = np.abs(trace.times - storage) <= half_window
    peak = float(trace.times[mask][int(np.argmax(np.abs(trace.samples[mask]) ** 2))])
    ratio = eta / static_eta if static_eta > 0 else 0.0
    logger.info(f"Corrimiento y restauración: eta = {eta:.4f}, razón {ratio:.4f}, eco en {peak * 1e9:.2f} ns")
    return ShiftResult(output=trace, ratio=ratio, efficiency=eta, static_efficiency=static_eta,
                       echo_peak_time=peak, overlap_warning=overlap)


# ---------------------------------------------------------------------------
# Alineación de frecuencia
# ---------------------------------------------------------------------------

class AlignmentScan(DomainModel):
    voltages: np.ndarray
    signal_counts: np.ndarray
    idler_counts: np.ndarray
    dip_voltage: Estimate


def alignment_scan(cavity: CavityParams, voltages, signal_detuning: float,
                   eo_slope: float = DEFAULT_EO_SLOPE, kappa_ions_eff: Optional[float] = None,
                   signal_rate: float = 1e4, idler_rate: float = 1e4, acquisition: float = 1.0,
                   sample: bool = False, seed: Optional[int] = None) -> AlignmentScan:
    """
    Barrido del voltaje DC frente a una señal fija en f_res + signal_detuning:
    las cuentas de señal caen cuando la cavidad se alinea y las del idler no
    cambian. El mínimo sale del centro de un ajuste Lorentziano.

    Args:
        sample: si True las cuentas son Poisson (requiere seed)
    """
    validate(cavity)
    if not eo_slope > 0:
        raise ValidationFailure(ErrorCode.NonPositiveSlope, f"eo_slope = {eo_slope}")
    voltages = np.asarray(voltages, dtype=float)
    if voltages.size < 5 or not np.all(np.isfinite(voltages)):
        raise ValidationFailure(ErrorCode.InsufficientData, "se necesitan al menos 5 voltajes finitos")
    kappa_ions_eff = cavity.kappa_ions if kappa_ions_eff is None else kappa_ions_eff
    through = np.abs(field_transmission(cavity, signal_detuning - eo_slope * voltages, kappa_ions_eff)) ** 2
    signal = signal_rate * acquisition * through
    idler = np.full(voltages.shape, idler_rate * acquisition)
    sigma = None
    if sample:
        if seed is None:
            raise ValidationFailure(ErrorCode.SeedRequired, "el muestreo Poisson requiere seed")
        rng = np.random.default_rng(seed)
        signal = rng.poisson(signal).astype(float)
        idler = rng.poisson(idler).astype(float)
        sigma = np.sqrt(np.maximum(signal, 1.0))
    result = fit(FitProblem(model="lorentzian", x=voltages, y=signal, sigma=sigma))
    if not result.converged:
        logger.warning("El ajuste Lorentziano de la alineación no convergió")
    dip = result.estimate("x0")
    logger.info(f"Alineación: mínimo en {dip.value:.4f} V")
    return AlignmentScan(voltages=voltages, signal_counts=signal, idler_counts=idler, dip_voltage=dip)
