# repository.py
"""
Persistencia: escenarios JSON, tablas CSV y manifiesto de corrida.
"""
import hashlib
import json
import logging
from pathlib import Path
from typing import Dict, Optional, Tuple

import numpy as np
import pandas as pd
import scipy

from . import __version__
from .errors import ConfigError, ErrorCode
from .models import validate
from .photon_stats import CoincidenceRecord
from .routing import VoltageSchedule
from .schemas import Scenario

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.12g"


def load_scenario(path, seed: Optional[int] = None) -> Scenario:
    """
    Lee y valida un escenario; seed, si se da, reemplaza run.seed antes de
    validar. Los errores de esquema (pydantic.ValidationError) se propagan
    con sus rutas de campo.
    """
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(ErrorCode.ConfigInvalid, f"no se pudo leer {path}: {e}")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(ErrorCode.ConfigInvalid, f"{path}: JSON inválido ({e})")
    # los CSV referenciados se resuelven relativos al archivo del escenario
    run = data.get("run") if isinstance(data, dict) else None
    if isinstance(run, dict):
        for key in ("data", "histogram", "schedule"):
            if isinstance(run.get(key), str) and not Path(run[key]).is_absolute():
                run[key] = str(Path(path).parent / run[key])
    if seed is not None and isinstance(data, dict):
        data.setdefault("run", {})
        if isinstance(data["run"], dict):
            data["run"]["seed"] = seed
    return Scenario.model_validate(data)


def config_hash(scenario: Scenario) -> str:
    canonical = json.dumps(scenario.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _read_frame(path, columns) -> pd.DataFrame:
    try:
        frame = pd.read_csv(path)
    except (OSError, pd.errors.EmptyDataError, pd.errors.ParserError) as e:
        raise ConfigError(ErrorCode.DataUnreadable, f"no se pudo leer {path}: {e}")
    missing = [c for c in columns if c not in frame.columns]
    if frame.empty or missing:
        raise ConfigError(ErrorCode.DataUnreadable,
                          f"{path}: sin filas o faltan columnas {missing}")
    return frame


def read_curve(path) -> Tuple[np.ndarray, np.ndarray, Optional[np.ndarray]]:
    """CSV (x, y[, sigma]) para fitkit"""
    frame = _read_frame(path, ["x", "y"])
    sigma = frame["sigma"].to_numpy(dtype=float) if "sigma" in frame.columns else None
    return frame["x"].to_numpy(dtype=float), frame["y"].to_numpy(dtype=float), sigma


def read_histogram(path, acquisition: float = 1.0, coincidence_window: Optional[float] = None) -> CoincidenceRecord:
    """CSV (delay_s, counts) con bins uniformes"""
    frame = _read_frame(path, ["delay_s", "counts"])
    delays = frame["delay_s"].to_numpy(dtype=float)
    if delays.size < 2:
        raise ConfigError(ErrorCode.DataUnreadable, f"{path}: se necesitan al menos 2 bins")
    bin_width = float(delays[1] - delays[0])
    return CoincidenceRecord(counts=frame["counts"].to_numpy(), bin_width=bin_width, delay0=float(delays[0]),
                             acquisition=acquisition,
                             coincidence_window=coincidence_window or bin_width)


def read_schedule(path) -> VoltageSchedule:
    """CSV (start_s, voltage_v)"""
    frame = _read_frame(path, ["start_s", "voltage_v"])
    segments = tuple(zip(frame["start_s"].astype(float), frame["voltage_v"].astype(float)))
    return validate(VoltageSchedule(segments=segments))


def _write_csv(table: pd.DataFrame, path: Path) -> None:
    table.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")


TABLE_WRITERS = {"csv": _write_csv}


def table_writer(fmt: str):
    try:
        return TABLE_WRITERS[fmt]
    except KeyError:
        raise ConfigError(ErrorCode.ConfigInvalid,
                          f"formato de tabla {fmt!r} desconocido; disponibles: {sorted(TABLE_WRITERS)}")


def write_tables(out_dir, prefix: str, tables: Dict[str, pd.DataFrame], fmt: str = "csv") -> Dict[str, Path]:
    """Escribe cada tabla como <prefix>_<nombre>.<fmt>"""
    writer = table_writer(fmt)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = {}
    for name in sorted(tables):
        path = out / f"{prefix}_{name}.{fmt}"
        writer(tables[name], path)
        logger.info(f"Tabla escrita: {path}")
        written[name] = path
    return written


def write_manifest(out_dir, scenario: Scenario, summary: Dict, files: Dict[str, Path], fmt: str = "csv") -> Path:
    """Manifiesto sin marcas de tiempo: hash de la configuración, versiones, semilla y resumen"""
    manifest = {
        "scenario": scenario.name,
        "pipeline": scenario.pipeline,
        "config_sha256": config_hash(scenario),
        "seed": scenario.run.seed,
        "format": fmt,
        "versions": {"afcmemsim": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                     "pandas": pd.__version__},
        "files": {name: path.name for name, path in files.items()},
        "summary": summary,
    }
    path = Path(out_dir) / f"{scenario.prefix}_manifest.json"
    path.write_text(json.dumps(manifest, sort_keys=True, indent=2, default=float) + "\n", encoding="utf-8")
    logger.info(f"Manifiesto escrito: {path}")
    return path
