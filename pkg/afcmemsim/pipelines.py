# pipelines.py
"""
Pipelines de los escenarios: cada uno recibe un Scenario validado y devuelve
tablas listas para graficar más un resumen plano para el manifiesto.
"""
import logging
import math
from pathlib import Path
from typing import Callable, Dict, NamedTuple

import numpy as np
import pandas as pd

from . import repository
from .afc import SideholeSpec, decay, optimize_field, prepare_comb, sidehole_offsets, field_cost
from .cavity import (
    SaturationModel, critical_power, fano_extract, power_sweep, power_transmission, resonance_grid, transmission,
)
from .echo import (
    afc_efficiency_analytic, discretize_ensemble, echo_time, efficiency_from_trace, gaussian_pulse, multiplex,
    propagate, pulse_train, residual_weight, simulate_time_domain, sweep_finesse, transfer_function,
)
from .errors import ConfigError, ErrorCode, NumericFailure
from .fitkit import FitProblem, fit, visibility
from .models import q_from_kappa
from .photon_stats import g2_from_counts, sample_fringe, witness
from .routing import (
    ChannelPlan, RoutingSetup, alignment_scan, route, route_periods, store_shift_restore,
)
from .schemas import Scenario

logger = logging.getLogger(__name__)


class PipelineOutput(NamedTuple):
    tables: Dict[str, pd.DataFrame]
    summary: Dict


def _intensity(waveform) -> np.ndarray:
    return np.abs(waveform.samples) ** 2


def run_transmission(sc: Scenario, threads: int) -> PipelineOutput:
    cavity = sc.device.cavity()
    kappa = cavity.kappa_total + cavity.kappa_ions
    grid = resonance_grid(kappa, sc.run.n_points)
    t = transmission(cavity, grid, cavity.kappa_ions)
    power = power_transmission(t)
    extracted = fano_extract(power, f_ref=cavity.f_res)
    table = pd.DataFrame({"detuning_hz": grid, "t_re": t.values.real, "t_im": t.values.imag,
                          "power": power.values})
    summary = {"q_loaded": extracted.q_loaded, "q_from_kappa": q_from_kappa(cavity.f_res, kappa),
               "fwhm_hz": extracted.fwhm, "extinction_ratio_db": extracted.extinction_ratio_db}
    return PipelineOutput({"transmission": table}, summary)


def run_power_sweep(sc: Scenario, threads: int) -> PipelineOutput:
    cavity = sc.device.cavity()
    model = SaturationModel(kappa_ions0=cavity.kappa_ions, p_sat=sc.device.p_sat)
    points = power_sweep(cavity, model, sc.run.powers, threads=threads, n_points=sc.run.n_points)
    table = pd.DataFrame({"power_w": [p.power for p in points],
                          "kappa_ions_hz": [p.kappa_ions for p in points],
                          "q_loaded": [p.q_loaded for p in points],
                          "extinction_ratio_db": [p.extinction_ratio_db for p in points]})
    best = max(points, key=lambda p: p.extinction_ratio)
    p_crit = critical_power(cavity, model)
    summary = {"critical_power_w": p_crit if p_crit is not None else math.nan,
               "max_er_power_w": best.power, "max_er_db": best.extinction_ratio_db}
    return PipelineOutput({"power_sweep": table}, summary)


def run_prepare_afc(sc: Scenario, threads: int) -> PipelineOutput:
    cavity = sc.device.cavity()
    comb = sc.comb.spec()
    ensemble = sc.device.ensemble_params()
    spectrum = prepare_comb(comb, kappa_ions=cavity.kappa_ions, ensemble=ensemble,
                            sideholes=sc.comb.sideholes(), b_field=sc.comb.b_field)
    if sc.run.wait > 0:
        spectrum = decay(spectrum, sc.run.wait, ensemble.t_afc)
    freqs = spectrum.freqs
    band = np.abs(freqs - comb.center_offset) <= comb.bandwidth / 2.0
    table = pd.DataFrame({"detuning_hz": freqs, "absorption_hz": spectrum.absorption,
                          "active_fraction": spectrum.active_fraction})
    summary = {"mean_absorption_in_band_hz": float(np.mean(spectrum.absorption[band])),
               "residual_weight": residual_weight(comb), "wait_s": sc.run.wait}
    return PipelineOutput({"comb": table}, summary)


def run_optimize_field(sc: Scenario, threads: int) -> PipelineOutput:
    sideholes = sc.comb.sideholes() or SideholeSpec(slope_nb=sc.comb.slope_nb, slope_li=sc.comb.slope_li)
    rows = []
    for delta in sc.run.deltas:
        b = optimize_field(delta, sideholes, sc.run.b_range)
        nb, li = sidehole_offsets(sideholes, b)
        rows.append({"delta_hz": delta, "b_field_t": b, "cost_hz2": field_cost(b, delta, sideholes),
                     "nb_offset_hz": nb, "li_offset_hz": li})
    table = pd.DataFrame(rows)
    return PipelineOutput({"field": table}, {"b_field_t": rows[0]["b_field_t"]})


def run_store(sc: Scenario, threads: int) -> PipelineOutput:
    cavity = sc.device.cavity()
    comb = sc.comb.spec()
    ensemble = sc.device.ensemble_params()
    run = sc.run
    spectrum = prepare_comb(comb, kappa_ions=cavity.kappa_ions, ensemble=ensemble,
                            sideholes=sc.comb.sideholes(), b_field=sc.comb.b_field)
    storage = comb.storage_time
    margin = 4.0 * run.pulse_fwhm
    pulse = gaussian_pulse(0.0, run.pulse_fwhm, run.dt, -margin, storage + max(margin, run.window),
                           photons=run.photons)
    output = propagate(pulse, transfer_function(cavity, spectrum))
    table = {"time_s": pulse.times, "input_intensity": _intensity(pulse),
             "output_transfer_intensity": _intensity(output)}
    summary = {"eta_analytic": afc_efficiency_analytic(cavity, comb).eta_total,
               "eta_transfer": efficiency_from_trace(output, pulse, storage, run.window),
               "echo_time_s": echo_time(output, storage / 2.0)}
    if run.time_domain:
        disc = discretize_ensemble(spectrum, cavity, comb.delta, gamma_h=ensemble.gamma_h)
        simulated = simulate_time_domain(disc, cavity, pulse)
        table["output_time_domain_intensity"] = _intensity(simulated.output_trace)
        summary["eta_time_domain"] = efficiency_from_trace(simulated.output_trace, pulse, storage, run.window)
    return PipelineOutput({"trace": pd.DataFrame(table)}, summary)


def run_multiplex(sc: Scenario, threads: int) -> PipelineOutput:
    cavity = sc.device.cavity()
    comb = sc.comb.spec()
    run = sc.run
    train = pulse_train(run.n_modes, run.slot, run.pulse_fwhm, run.dt,
                        run.n_modes * run.slot + comb.storage_time + run.slot, photons=run.photons)
    spectrum = prepare_comb(comb, kappa_ions=cavity.kappa_ions, ensemble=sc.device.ensemble_params())
    result = multiplex(train, comb, cavity, spectrum)
    modes = pd.DataFrame({"mode": np.arange(1, run.n_modes + 1), "center_s": train.centers,
                          "echo_time_s": result.echo_times, "efficiency": result.per_mode})
    trace = pd.DataFrame({"time_s": train.waveform.times, "input_intensity": _intensity(train.waveform),
                          "output_intensity": _intensity(result.output)})
    per_mode = np.asarray(result.per_mode)
    summary = {"collective_efficiency": result.collective,
               "per_mode_cv": float(np.std(per_mode) / np.mean(per_mode)) if np.mean(per_mode) > 0 else math.nan}
    return PipelineOutput({"modes": modes, "trace": trace}, summary)


def run_sweep_finesse(sc: Scenario, threads: int) -> PipelineOutput:
    sweep = sweep_finesse(sc.device.cavity(), sc.comb.spec(), sc.run.f_grid, threads=threads)
    table = pd.DataFrame({"F": [p.finesse for p in sweep.points], "eta": [p.eta_total for p in sweep.points],
                          "K": [p.k_match for p in sweep.points], "C_eff": [p.c_eff for p in sweep.points],
                          "eta_d": [p.eta_d for p in sweep.points]})
    return PipelineOutput({"sweep": table}, {"best_finesse": sweep.best_finesse, "best_eta": sweep.best.eta_total})


def _routing_setup(sc: Scenario, threads: int) -> RoutingSetup:
    comb = sc.comb.spec()
    cavity = sc.device.cavity(comb)
    plan = ChannelPlan.from_voltages(sc.run.voltages, eo_slope=sc.run.eo_slope, f_res=cavity.f_res)
    return RoutingSetup(plan=plan, cavity=cavity, comb=comb, ensemble=sc.device.ensemble_params(),
                        pulse_fwhm=sc.run.pulse_fwhm, window=sc.run.window, photons=sc.run.photons,
                        threads=threads)


def run_route(sc: Scenario, threads: int) -> PipelineOutput:
    setup = _routing_setup(sc, threads)
    schedule = repository.read_schedule(sc.run.schedule) if sc.run.schedule is not None else None
    if sc.run.periods and len(setup.plan.channels) != 2:
        raise ConfigError(ErrorCode.ConfigInvalid, "el ruteo dinámico con onda cuadrada requiere 2 canales")
    reports = route_periods(setup, sc.run.periods, threads=threads)
    rows = []
    for period, report in reports.items():
        program = "static" if period == 0.0 else "square"
        rows.extend(dict(program=program, t_eo_s=period, **row) for row in report.rows())
    if schedule is not None:
        report = route(setup, schedule)
        rows.extend(dict(program="file", t_eo_s=math.nan, **row) for row in report.rows())
    table = pd.DataFrame(rows, columns=["program", "t_eo_s", "channel_in", "channel_out", "energy", "eta_or_chi"])
    leak = table[table["channel_in"] != table["channel_out"]]["eta_or_chi"]
    stored = table[table["channel_in"] == table["channel_out"]]["eta_or_chi"]
    summary = {"chi_max": float(leak.max()) if not leak.empty else math.nan, "eta_min": float(stored.min())}
    return PipelineOutput({"routing": table}, summary)


def run_shift_restore(sc: Scenario, threads: int) -> PipelineOutput:
    setup = _routing_setup(sc, threads)
    label = sc.run.channel or setup.plan.labels[0]
    shifts = [(s.start, math.inf if s.stop is None else s.stop, s.voltage) for s in sc.run.shifts]
    result = store_shift_restore(setup, label, shifts)
    trace = pd.DataFrame({"time_s": result.output.times, "output_intensity": _intensity(result.output)})
    summary = {"ratio": result.ratio, "efficiency": result.efficiency,
               "static_efficiency": result.static_efficiency, "echo_peak_time_s": result.echo_peak_time,
               "overlap_warning": bool(result.overlap_warning)}
    return PipelineOutput({"trace": trace}, summary)


def run_witness(sc: Scenario, threads: int) -> PipelineOutput:
    run = sc.run
    tables = {}
    g2 = g2_from_counts(repository.read_histogram(run.histogram)) if run.histogram else run.g2.estimate()
    if run.sample:
        phases = np.linspace(0.0, 2.0 * math.pi, run.fringe_points, endpoint=False)
        estimates, frames = [], []
        for port, target in ((1, run.v1.value), (2, run.v2.value)):
            counts = sample_fringe(phases, run.fringe_counts, target, seed=run.seed + port)
            result = fit(FitProblem(model="fringe", x=phases, y=counts, sigma=np.sqrt(np.maximum(counts, 1.0))))
            estimates.append(visibility(result))
            frames.append(pd.DataFrame({"port": port, "phase_rad": phases, "counts": counts}))
        v1, v2 = estimates
        tables["fringes"] = pd.concat(frames, ignore_index=True)
    else:
        v1, v2 = run.v1.estimate(), run.v2.estimate()
    result = witness(g2, v1, v2)
    record = result.as_record()
    tables["witness"] = pd.DataFrame([record])
    return PipelineOutput(tables, record)


def run_fit(sc: Scenario, threads: int) -> PipelineOutput:
    if sc.run.data is None:
        raise ConfigError(ErrorCode.DataUnreadable, "run.data es obligatorio para el ajuste")
    x, y, sigma = repository.read_curve(sc.run.data)
    result = fit(FitProblem(model=sc.run.model, x=x, y=y, sigma=sigma, initial_guess=sc.run.guess))
    if not result.converged:
        raise NumericFailure(ErrorCode.FitDiverged, f"el ajuste '{sc.run.model}' no convergió")
    record = result.as_record()
    curve = pd.DataFrame({"x": x, "y": y, "y_fit": result.curve(x)})
    return PipelineOutput({"fit": pd.DataFrame([record]), "curve": curve}, record)


def run_alignment(sc: Scenario, threads: int) -> PipelineOutput:
    start, stop, n = sc.run.scan_voltages
    scan = alignment_scan(sc.device.cavity(), np.linspace(start, stop, int(n)), sc.run.signal_detuning,
                          eo_slope=sc.run.eo_slope, sample=sc.run.sample, seed=sc.run.seed)
    table = pd.DataFrame({"voltage_v": scan.voltages, "signal_counts": scan.signal_counts,
                          "idler_counts": scan.idler_counts})
    return PipelineOutput({"alignment": table},
                          {"dip_voltage_v": scan.dip_voltage.value, "sigma_dip_voltage_v": scan.dip_voltage.sigma})


PIPELINES: Dict[str, Callable[[Scenario, int], PipelineOutput]] = {
    "transmission": run_transmission,
    "power_sweep": run_power_sweep,
    "prepare_afc": run_prepare_afc,
    "optimize_field": run_optimize_field,
    "store": run_store,
    "multiplex": run_multiplex,
    "sweep_finesse": run_sweep_finesse,
    "route": run_route,
    "shift_restore": run_shift_restore,
    "witness": run_witness,
    "fit": run_fit,
    "alignment": run_alignment,
}


def run_scenario(sc: Scenario, out_dir, threads: int = 1, fmt: str = "csv") -> Dict[str, Path]:
    """
    Corre el pipeline del escenario y recién entonces escribe las tablas (en
    formato fmt) y el manifiesto, de modo que un fallo no deja salidas parciales.
    """
    repository.table_writer(fmt)
    logger.info(f"Escenario '{sc.name}' ({sc.pipeline}) con {threads} hilo(s)")
    output = PIPELINES[sc.pipeline](sc, threads)
    files = repository.write_tables(out_dir, sc.prefix, output.tables, fmt)
    files["manifest"] = repository.write_manifest(out_dir, sc, output.summary, dict(files), fmt)
    logger.info(f"Escenario '{sc.name}' terminado: {len(files)} archivo(s)")
    return files
