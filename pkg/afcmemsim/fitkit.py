# fitkit.py
"""
Motor de mínimos cuadrados no lineales (Levenberg-Marquardt) con el
catálogo de modelos usado por el simulador: caída Fano/Lorentziana,
decaimientos exponenciales, franja de interferencia y pulso gaussiano.
"""
import logging
import math
from typing import Callable, Dict, NamedTuple, Optional, Tuple

import numpy as np
from pydantic import field_validator

from .errors import ErrorCode, NumericFailure, ValidationFailure
from .models import DomainModel, Estimate

logger = logging.getLogger(__name__)

MAX_ITERATIONS = 200
STEP_TOL = 1e-10
COST_TOL = 1e-10
LAMBDA_START = 1e-3
LAMBDA_MAX = 1e12
# costo relativo a sum(y^2) que se considera ajuste exacto
ZERO_COST = 1e-24
# coseno máximo entre el residuo y cada columna del jacobiano en un punto estacionario
GRAD_TOL = 1e-5
FD_COST = 1e-16
FOUR_LN2 = 4.0 * math.log(2.0)


# ---------------------------------------------------------------------------
# Modelos
# ---------------------------------------------------------------------------

def fano_dip(x, x0, fwhm, depth, s, c0, c1):
    """
    Caída Lorentziana con factor de interferencia Fano y línea de base lineal.

    s = 1/q es la asimetría; s = 0 es el límite Lorentziano simétrico.
    El factor está normalizado para que su máximo valga 1.
    """
    eps = 2.0 * (x - x0) / fwhm
    shape = (1.0 + s * eps) ** 2 / ((1.0 + s * s) * (1.0 + eps * eps))
    return (c0 + c1 * x) * (1.0 - depth * shape)


def lorentzian_dip(x, x0, fwhm, depth, c0):
    eps = 2.0 * (x - x0) / fwhm
    return c0 * (1.0 - depth / (1.0 + eps * eps))


def exp_decay(x, amplitude, tau):
    return amplitude * np.exp(-x / tau)


def exp_decay2(x, a1, tau1, a2, tau2):
    return a1 * np.exp(-x / tau1) + a2 * np.exp(-x / tau2)


def fringe(x, amplitude, visibility, phi0):
    return amplitude * (1.0 + visibility * np.cos(x - phi0))


def gaussian_pulse(x, amplitude, t0, fwhm, offset):
    return amplitude * np.exp(-FOUR_LN2 * (x - t0) ** 2 / fwhm ** 2) + offset


# Estimaciones iniciales

def _half_width(x, profile) -> float:
    """Ancho a media altura de un perfil positivo con un solo máximo"""
    peak = np.max(profile)
    if peak <= 0:
        return float(np.ptp(x)) / 4.0
    above = np.nonzero(profile >= 0.5 * peak)[0]
    width = x[above[-1]] - x[above[0]]
    step = np.median(np.abs(np.diff(x)))
    return float(max(width, 2.0 * step))


def _guess_dip(x, y):
    n_edge = max(2, x.size // 20)
    c0 = float(np.median(np.concatenate([y[:n_edge], y[-n_edge:]])))
    i_min = int(np.argmin(y))
    depth = 1.0 - y[i_min] / c0 if c0 != 0 else 0.5
    fwhm = _half_width(x, c0 - y)
    return float(x[i_min]), fwhm, float(np.clip(depth, 1e-3, 1.0)), c0


def _guess_fano(x, y):
    x0, fwhm, depth, c0 = _guess_dip(x, y)
    return np.array([x0, fwhm, depth, 0.0, c0, 0.0])


def _guess_lorentzian(x, y):
    return np.array(_guess_dip(x, y))


def _guess_exp(x, y):
    mask = y > 0
    if np.count_nonzero(mask) < 2:
        return np.array([float(np.max(np.abs(y))) or 1.0, float(np.ptp(x)) or 1.0])
    slope, intercept = np.polyfit(x[mask], np.log(y[mask]), 1)
    tau = -1.0 / slope if slope < 0 else float(np.ptp(x))
    return np.array([math.exp(intercept), tau])


def _guess_exp2(x, y):
    half = x.size // 2
    a_slow, tau_slow = _guess_exp(x[half:], y[half:])
    fast = y[:half] - exp_decay(x[:half], a_slow, tau_slow)
    a_fast, tau_fast = _guess_exp(x[:half], fast)
    if not tau_fast < tau_slow:
        tau_fast = tau_slow / 10.0
    return np.array([a_fast, tau_fast, a_slow, tau_slow])


def _guess_fringe(x, y):
    # regresión lineal sobre (1, cos, sin): exacta para datos sin ruido
    design = np.column_stack([np.ones_like(x), np.cos(x), np.sin(x)])
    (a, b, c), *_ = np.linalg.lstsq(design, y, rcond=None)
    visibility = math.hypot(b, c) / a if a != 0 else 0.0
    return np.array([a, visibility, math.atan2(c, b)])


def _guess_pulse(x, y):
    offset = float(np.min(y))
    profile = y - offset
    return np.array([float(np.max(profile)), float(x[int(np.argmax(profile))]),
                     _half_width(x, profile), offset])


class FitModel(NamedTuple):
    function: Callable
    param_names: Tuple[str, ...]
    guess: Callable


MODELS: Dict[str, FitModel] = {
    "fano": FitModel(fano_dip, ("x0", "fwhm", "depth", "s", "c0", "c1"), _guess_fano),
    "lorentzian": FitModel(lorentzian_dip, ("x0", "fwhm", "depth", "c0"), _guess_lorentzian),
    "exp_decay": FitModel(exp_decay, ("amplitude", "tau"), _guess_exp),
    "exp_decay2": FitModel(exp_decay2, ("a1", "tau1", "a2", "tau2"), _guess_exp2),
    "fringe": FitModel(fringe, ("amplitude", "visibility", "phi0"), _guess_fringe),
    "gaussian_pulse": FitModel(gaussian_pulse, ("amplitude", "t0", "fwhm", "offset"), _guess_pulse),
}


def get_model(name: str) -> FitModel:
    try:
        return MODELS[name]
    except KeyError:
        raise ValidationFailure(ErrorCode.UnknownModel,
                                f"modelo '{name}' desconocido; disponibles: {sorted(MODELS)}")


def evaluate(name: str, x, params) -> np.ndarray:
    """Evalúa el modelo registrado name en x"""
    return get_model(name).function(np.asarray(x, dtype=float), *params)


# ---------------------------------------------------------------------------
# Problema y resultado
# ---------------------------------------------------------------------------

class FitProblem(DomainModel):
    model: str
    x: np.ndarray
    y: np.ndarray
    sigma: Optional[np.ndarray] = None
    initial_guess: Optional[np.ndarray] = None
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None

    @field_validator("x", "y", "sigma", "initial_guess", "lower", "upper", mode="before")
    @classmethod
    def _as_float(cls, v):
        if v is None:
            return None
        arr = np.array(v, dtype=float, copy=True).ravel()
        arr.flags.writeable = False
        return arr

    def violations(self):
        out = []
        if self.model not in MODELS:
            out.append((ErrorCode.UnknownModel, f"modelo '{self.model}' desconocido"))
            return out
        n_params = len(MODELS[self.model].param_names)
        if self.x.size != self.y.size or self.x.size < n_params + 1:
            out.append((ErrorCode.InsufficientData,
                        f"{self.x.size} puntos para {n_params} parámetros"))
        if self.sigma is not None and (self.sigma.size != self.y.size or np.any(self.sigma <= 0)):
            out.append((ErrorCode.NonPositiveSigma, "sigma debe ser > 0 punto a punto"))
        if self.initial_guess is not None and self.initial_guess.size != n_params:
            out.append((ErrorCode.InsufficientData, "initial_guess con largo incorrecto"))
        return out


class FitResult(DomainModel):
    model: str
    param_names: Tuple[str, ...]
    params: np.ndarray
    covariance: np.ndarray
    chi2_reduced: float
    converged: bool
    iterations: int
    cost_trace: Tuple[float, ...] = ()

    @property
    def errors(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.covariance), 0.0, None))

    def value(self, name: str) -> float:
        return float(self.params[self.param_names.index(name)])

    def estimate(self, name: str) -> Estimate:
        i = self.param_names.index(name)
        return Estimate(value=float(self.params[i]), sigma=float(self.errors[i]))

    def curve(self, x) -> np.ndarray:
        return evaluate(self.model, x, self.params)

    def as_record(self) -> Dict[str, float]:
        """Registro plano clave-valor; la covarianza va aplanada por filas"""
        record: Dict[str, float] = {"model": self.model,
                                    "chi2_reduced": self.chi2_reduced,
                                    "converged": self.converged,
                                    "iterations": self.iterations}
        for name, value, err in zip(self.param_names, self.params, self.errors):
            record[name] = float(value)
            record[f"sigma_{name}"] = float(err)
        n = len(self.param_names)
        for i in range(n):
            for j in range(n):
                record[f"cov_{i}_{j}"] = float(self.covariance[i, j])
        return record


# ---------------------------------------------------------------------------
# Motor
# ---------------------------------------------------------------------------

def _jacobian(function, x, p, f0, weights) -> np.ndarray:
    jac = np.empty((x.size, p.size))
    for j in range(p.size):
        h = max(1e-8, 1e-8 * abs(p[j]))
        shifted = p.copy()
        shifted[j] += h
        jac[:, j] = (function(x, *shifted) - f0) / h
    return jac * weights[:, None]


def _stationary(gradient, normal, cost, scale, p, lower, upper) -> bool:
    """
    Gradiente proyectado nulo: |J_i . r| <= GRAD_TOL |J_i| |r| para cada
    parámetro libre; en una cota solo cuenta el componente que apunta hacia
    adentro. Un residuo al nivel de la diferencia finita también cuenta.
    """
    if cost <= FD_COST * scale:
        return True
    projected = gradient.copy()
    projected[(p <= lower) & (projected < 0)] = 0.0
    projected[(p >= upper) & (projected > 0)] = 0.0
    norms = np.sqrt(np.clip(np.diag(normal), 0.0, None) * cost)
    live = norms > 0
    return bool(np.all(np.abs(projected[live]) <= GRAD_TOL * norms[live]))


def fit(problem: FitProblem) -> FitResult:
    """
    Minimiza sum(((y - modelo(x; p)) / sigma)^2) con pasos Gauss-Newton amortiguados.

    Args:
        problem: datos, modelo y (opcional) estimación inicial y cotas

    Returns:
        FitResult con parámetros, covarianza 1 sigma y chi cuadrado reducido.
        Si se agotan las iteraciones, o si el amortiguamiento se satura con el
        gradiente proyectado lejos de cero, devuelve el mejor punto con
        converged=False.
    """
    problems = problem.violations()
    if problems:
        code, message = problems[0]
        raise ValidationFailure(code, message)

    spec = MODELS[problem.model]
    x, y = problem.x, problem.y
    weights = 1.0 / problem.sigma if problem.sigma is not None else np.ones_like(y)
    lower = problem.lower if problem.lower is not None else np.full(len(spec.param_names), -np.inf)
    upper = problem.upper if problem.upper is not None else np.full(len(spec.param_names), np.inf)

    if problem.initial_guess is not None:
        p = np.array(problem.initial_guess, dtype=float)
    else:
        p = np.asarray(spec.guess(x, y), dtype=float)
    p = np.clip(p, lower, upper)

    f = spec.function(x, *p)
    r = (y - f) * weights
    cost = float(r @ r)
    if not math.isfinite(cost):
        raise NumericFailure(ErrorCode.FitDiverged, "costo no finito en la estimación inicial")
    scale = float(np.sum((y * weights) ** 2)) or 1.0

    jac = _jacobian(spec.function, x, p, f, weights)
    if cost > ZERO_COST * scale:
        dead = ~np.any(jac != 0.0, axis=0) | ~np.all(np.isfinite(jac), axis=0)
        if np.any(dead):
            names = [n for n, d in zip(spec.param_names, dead) if d]
            raise NumericFailure(ErrorCode.SingularJacobian,
                                 f"el modelo no depende de {names} en el punto inicial")

    lam = LAMBDA_START
    trace = [cost]
    converged = False
    iterations = 0
    while iterations < MAX_ITERATIONS:
        if cost <= ZERO_COST * scale:
            converged = True
            break
        iterations += 1
        normal = jac.T @ jac
        gradient = jac.T @ r
        damping = np.diag(normal).copy()
        damping[damping <= 0] = 1e-12 * (np.max(damping) if np.max(damping) > 0 else 1.0)

        accepted = False
        while lam <= LAMBDA_MAX:
            try:
                step = np.linalg.solve(normal + lam * np.diag(damping), gradient)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            p_new = np.clip(p + step, lower, upper)
            f_new = spec.function(x, *p_new)
            r_new = (y - f_new) * weights
            cost_new = float(r_new @ r_new)
            if math.isfinite(cost_new) and cost_new < cost:
                accepted = True
                break
            lam *= 10.0

        if not accepted:
            # ningún paso reduce el costo: solo es convergencia si el gradiente proyectado se anula
            converged = _stationary(gradient, normal, cost, scale, p, lower, upper)
            if not converged:
                logger.warning(f"Ajuste '{problem.model}' detenido con gradiente no nulo (lambda > {LAMBDA_MAX:.0e})")
            break

        rel_step = float(np.linalg.norm(p_new - p) / (np.linalg.norm(p) + 1e-300))
        rel_cost = (cost - cost_new) / cost
        p, f, r, cost = p_new, f_new, r_new, cost_new
        trace.append(cost)
        lam = max(lam / 10.0, 1e-12)
        logger.debug(f"iteración {iterations}: costo={cost:.6e} lambda={lam:.1e}")
        if rel_step < STEP_TOL or rel_cost < COST_TOL:
            converged = True
            break
        jac = _jacobian(spec.function, x, p, f, weights)

    if not converged and iterations >= MAX_ITERATIONS:
        logger.warning(f"Ajuste '{problem.model}' sin converger tras {MAX_ITERATIONS} iteraciones")

    jac = _jacobian(spec.function, x, p, f, weights)
    dof = max(x.size - p.size, 1)
    chi2_reduced = cost / dof
    covariance = np.linalg.pinv(jac.T @ jac)
    if problem.sigma is None:
        covariance = covariance * chi2_reduced
    covariance = 0.5 * (covariance + covariance.T)
    return FitResult(model=problem.model, param_names=spec.param_names, params=p,
                     covariance=covariance, chi2_reduced=chi2_reduced, converged=converged,
                     iterations=iterations, cost_trace=tuple(trace))


def visibility(result: FitResult) -> Estimate:
    """
    Visibilidad de una franja ajustada, V = (max - min) / (max + min) de la curva
    """
    if result.model != "fringe":
        raise ValidationFailure(ErrorCode.UnknownModel, f"se esperaba un ajuste 'fringe', no '{result.model}'")
    amplitude = result.value("amplitude")
    if amplitude <= 0:
        raise ValidationFailure(ErrorCode.NonPositiveAmplitude, f"amplitud ajustada {amplitude} <= 0")
    v = result.value("visibility")
    high = amplitude * (1.0 + abs(v))
    low = amplitude * (1.0 - abs(v))
    return Estimate(value=(high - low) / (high + low), sigma=result.estimate("visibility").sigma)
