# schemas.py
"""
Esquema de los escenarios JSON que consume la CLI.
"""
from typing import Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, model_validator

from .afc import SLOPE_LI, SLOPE_NB, SideholeSpec
from .echo import DEFAULT_EO_SLOPE
from .models import CavityParams, CombSpec, EnsembleParams, Estimate, ToothShape, validate
from .routing import DEV2_F_RES, cavity_from_linewidth

PipelineName = Literal[
    "transmission", "power_sweep", "prepare_afc", "optimize_field", "store", "multiplex",
    "sweep_finesse", "route", "shift_restore", "witness", "fit", "alignment",
]


class Block(BaseModel):
    model_config = ConfigDict(extra="forbid")


class EnsembleBlock(Block):
    inhom_fwhm: float = 202e9
    gamma_h: float = EnsembleParams().gamma_h
    t_afc: float = 277.6


class DeviceBlock(Block):
    """
    Cavidad: presupuesto completo (kappa_ext, kappa_loss, kappa_ions) o el atajo
    kappa_loaded con su reparto ext_share / loss_share.
    """

    kappa_ext: float = 991e6
    kappa_loss: float = 119e6
    kappa_ions: float = 1778e6
    f_res: Optional[float] = None
    kappa_loaded: Optional[float] = None
    ext_share: float = 0.46
    loss_share: float = 0.28
    p_sat: float = 1e-6
    ensemble: EnsembleBlock = EnsembleBlock()

    def cavity(self, comb: Optional[CombSpec] = None) -> CavityParams:
        if self.kappa_loaded is not None:
            return cavity_from_linewidth(self.f_res or DEV2_F_RES, self.kappa_loaded, comb,
                                         self.ext_share, self.loss_share)
        params = dict(kappa_ext=self.kappa_ext, kappa_loss=self.kappa_loss, kappa_ions=self.kappa_ions)
        if self.f_res is not None:
            params["f_res"] = self.f_res
        return validate(CavityParams(**params))

    def ensemble_params(self) -> EnsembleParams:
        return validate(EnsembleParams(inhom_fwhm=self.ensemble.inhom_fwhm, gamma_h=self.ensemble.gamma_h,
                                       t_afc=self.ensemble.t_afc))


class CombBlock(Block):
    n_teeth: int = 21
    delta: float = 10e6
    finesse: float = 4.86
    tooth_shape: ToothShape = ToothShape.gaussian
    eta_spectral: float = 0.95
    sidehole_depth: Optional[float] = None
    slope_nb: float = SLOPE_NB
    slope_li: float = SLOPE_LI
    b_field: float = 0.0

    def spec(self) -> CombSpec:
        return validate(CombSpec(n_teeth=self.n_teeth, delta=self.delta, finesse=self.finesse,
                                 tooth_shape=self.tooth_shape, eta_spectral=self.eta_spectral))

    def sideholes(self) -> Optional[SideholeSpec]:
        if self.sidehole_depth is None:
            return None
        return validate(SideholeSpec(slope_nb=self.slope_nb, slope_li=self.slope_li,
                                     relative_depth=self.sidehole_depth))


class EstimateBlock(Block):
    value: float
    sigma: float = 0.0

    def estimate(self) -> Estimate:
        return Estimate(value=self.value, sigma=self.sigma)


class ShiftBlock(Block):
    start: float
    stop: Optional[float] = None
    voltage: float


class RunBlock(Block):
    """Parámetros de corrida; cada pipeline usa solo los que le corresponden"""

    seed: Optional[int] = None
    sample: bool = False
    n_points: int = 801
    # pulsos y ventanas
    pulse_fwhm: float = 15e-9
    photons: float = 0.163
    dt: float = 25e-12
    window: float = 30e-9
    time_domain: bool = True
    # multiplexado
    n_modes: int = 9
    slot: float = 10e-9
    # barridos
    powers: List[float] = [0.0, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4]
    f_grid: List[float] = [1.5 + 0.25 * k for k in range(35)]
    deltas: List[float] = [10e6]
    b_range: Tuple[float, float] = (0.5, 3.0)
    wait: float = 0.0
    # ruteo
    eo_slope: float = DEFAULT_EO_SLOPE
    voltages: Dict[str, float] = {"ch1": 0.8, "ch2": -0.8}
    periods: List[float] = []
    schedule: Optional[str] = None
    channel: Optional[str] = None
    shifts: List[ShiftBlock] = []
    signal_detuning: float = 0.0
    scan_voltages: Tuple[float, float, int] = (-1.0, 1.0, 201)
    # estadística de pares
    g2: EstimateBlock = EstimateBlock(value=4.54, sigma=0.30)
    v1: EstimateBlock = EstimateBlock(value=0.5117, sigma=0.0119)
    v2: EstimateBlock = EstimateBlock(value=0.5130, sigma=0.0121)
    histogram: Optional[str] = None
    fringe_counts: float = 500.0
    fringe_points: int = 24
    # ajuste
    model: str = "exp_decay"
    data: Optional[str] = None
    guess: Optional[List[float]] = None


class OutputsBlock(Block):
    dir: Optional[str] = None
    prefix: Optional[str] = None


class Scenario(Block):
    name: str
    pipeline: PipelineName
    device: DeviceBlock = DeviceBlock()
    comb: CombBlock = CombBlock()
    run: RunBlock = RunBlock()
    outputs: OutputsBlock = OutputsBlock()

    @model_validator(mode="after")
    def _seed_for_sampling(self):
        if self.run.sample and self.run.seed is None:
            raise ValueError("run.seed es obligatorio cuando run.sample es true")
        return self

    @property
    def prefix(self) -> str:
        return self.outputs.prefix or self.name
