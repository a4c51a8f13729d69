# main.py
"""
CLI de afcmemsim. Códigos de salida: 0 ok, 2 error de configuración, 3 fallo numérico.
"""
import enum
import functools
import logging
from pathlib import Path
from typing import List, Optional

import typer
from pydantic import ValidationError
from rich.console import Console
from rich.table import Table

from .errors import AfcMemError, ConfigError, ErrorCode
from .pipelines import PIPELINES, run_scenario
from .repository import load_scenario
from .schemas import EstimateBlock, Scenario
from .settings import get_settings

logger = logging.getLogger(__name__)

app = typer.Typer(help="Simulador de memorias cuánticas AFC en cavidad", no_args_is_help=True,
                  pretty_exceptions_enable=False)
console = Console()


class OutputFormat(str, enum.Enum):
    csv = "csv"


ConfigOption = typer.Option(None, "--config", help="Escenario JSON")
SeedOption = typer.Option(None, "--seed", help="Semilla (reemplaza run.seed)")
OutOption = typer.Option(None, "--out", help="Directorio de salida")
ThreadsOption = typer.Option(None, "--threads", help="Hilos (por omisión AFCMEMSIM_THREADS)")
FormatOption = typer.Option(OutputFormat.csv, "--format", help="Formato de las tablas")


def guarded(command):
    """Traduce los errores del simulador a mensajes y códigos de salida"""

    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except ValidationError as e:
            for error in e.errors():
                path = ".".join(str(p) for p in error["loc"]) or "<raíz>"
                typer.echo(f"error de configuración en {path}: {error['msg']}", err=True)
            raise typer.Exit(code=2)
        except AfcMemError as e:
            typer.echo(f"error {e.code.value}: {e.message}", err=True)
            raise typer.Exit(code=e.exit_code)

    return wrapper


def _scenario(pipeline: str, config: Optional[Path], seed: Optional[int]) -> Scenario:
    if config is not None:
        scenario = load_scenario(config, seed)
        if scenario.pipeline != pipeline:
            raise ConfigError(ErrorCode.ConfigInvalid,
                              f"el escenario es del pipeline '{scenario.pipeline}', no '{pipeline}'")
        return scenario
    return _with_seed(Scenario(name=pipeline, pipeline=pipeline), seed)


def _with_seed(scenario: Scenario, seed: Optional[int]) -> Scenario:
    if seed is None:
        return scenario
    data = scenario.model_dump()
    data["run"]["seed"] = seed
    return Scenario.model_validate(data)


def _execute(scenario: Scenario, out: Optional[Path], threads: Optional[int],
             fmt: OutputFormat = OutputFormat.csv) -> None:
    settings = get_settings()
    threads = threads or settings.threads
    out_dir = out or scenario.outputs.dir or settings.out_dir
    logger.debug(f"Escenario {scenario.name}: salida en {out_dir}, {threads} hilo(s)")
    files = run_scenario(scenario, out_dir, threads, fmt.value)
    table = Table(title=f"Escenario {scenario.name}")
    table.add_column("salida")
    table.add_column("archivo")
    for name, path in files.items():
        table.add_row(name, str(path))
    console.print(table)


@app.callback()
def main(log_level: Optional[str] = typer.Option(None, "--log-level", help="Nivel de logging")):
    logging.basicConfig(level=(log_level or get_settings().log_level).upper(),
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")


def _pipeline_command(pipeline: str, name: str, help_text: str):
    @guarded
    def command(config: Optional[Path] = ConfigOption, seed: Optional[int] = SeedOption,
                out: Optional[Path] = OutOption, threads: Optional[int] = ThreadsOption,
                fmt: OutputFormat = FormatOption):
        _execute(_scenario(pipeline, config, seed), out, threads, fmt)

    command.__doc__ = help_text
    app.command(name)(command)


_pipeline_command("transmission", "simulate-transmission", "Transmisión del anillo y extracción de Q/ER")
_pipeline_command("power_sweep", "power-sweep", "Barrido de potencia con saturación de los iones")
_pipeline_command("prepare_afc", "prepare-afc", "Preparación del peine sobre el perfil inhomogéneo")
_pipeline_command("optimize_field", "optimize-field", "Campo magnético que ubica los huecos laterales")
_pipeline_command("store", "store", "Almacenamiento de un modo: analítico, transferencia y temporal")
_pipeline_command("multiplex", "multiplex", "Multiplexado temporal de M modos")
_pipeline_command("sweep_finesse", "sweep-finesse", "Curva teórica de eficiencia en función de la fineza")
_pipeline_command("route", "route", "Ruteo electro-óptico: eficiencia y diafonía por canal")


@app.command("run-scenario")
@guarded
def run_scenario_command(path: Optional[Path] = typer.Argument(None, help="Escenario JSON"),
                         config: Optional[Path] = ConfigOption, seed: Optional[int] = SeedOption,
                         out: Optional[Path] = OutOption, threads: Optional[int] = ThreadsOption,
                         fmt: OutputFormat = FormatOption):
    """Corre cualquier escenario (incluidos los empaquetados en afcmemsim/scenarios)"""
    source = path or config
    if source is None:
        raise ConfigError(ErrorCode.ConfigInvalid, "falta el escenario (argumento o --config)")
    _execute(load_scenario(source, seed), out, threads, fmt)


@app.command("fit")
@guarded
def fit_command(model: str = typer.Option(..., "--model", help="Modelo de fitkit"),
                data: Path = typer.Option(..., "--data", help="CSV con columnas x, y[, sigma]"),
                guess: Optional[str] = typer.Option(None, "--guess", help="Valores iniciales separados por coma")):
    """Ajusta un modelo a un CSV e imprime el resultado como líneas clave = valor"""
    initial: Optional[List[float]] = None
    if guess:
        try:
            initial = [float(v) for v in guess.split(",")]
        except ValueError:
            raise ConfigError(ErrorCode.ConfigInvalid, f"--guess inválido: {guess!r}")
    scenario = Scenario.model_validate({"name": "fit", "pipeline": "fit",
                                        "run": {"model": model, "data": str(data), "guess": initial}})
    output = PIPELINES["fit"](scenario, 1)
    for key, value in output.summary.items():
        typer.echo(f"{key} = {value}")


@app.command("witness")
@guarded
def witness_command(config: Optional[Path] = ConfigOption, seed: Optional[int] = SeedOption,
                    g2: float = typer.Option(4.54, "--g2"), g2_sigma: float = typer.Option(0.30, "--g2-sigma"),
                    v1: float = typer.Option(0.5117, "--v1"), v1_sigma: float = typer.Option(0.0119, "--v1-sigma"),
                    v2: float = typer.Option(0.5130, "--v2"), v2_sigma: float = typer.Option(0.0121, "--v2-sigma"),
                    out: Optional[Path] = OutOption, fmt: OutputFormat = FormatOption):
    """Testigo de entrelazamiento W = 1/(g2 + 2) - V/2"""
    if config is not None:
        scenario = _scenario("witness", config, seed)
    else:
        run = {"g2": EstimateBlock(value=g2, sigma=g2_sigma).model_dump(),
               "v1": EstimateBlock(value=v1, sigma=v1_sigma).model_dump(),
               "v2": EstimateBlock(value=v2, sigma=v2_sigma).model_dump()}
        scenario = _with_seed(Scenario.model_validate({"name": "witness", "pipeline": "witness", "run": run}), seed)
    output = PIPELINES["witness"](scenario, 1)
    for key, value in output.summary.items():
        typer.echo(f"{key} = {value:.6g}")
    if out is not None:
        _execute(scenario, out, 1, fmt)


if __name__ == "__main__":
    app()
