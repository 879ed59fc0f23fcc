"""SDE coefficient models, one-step schemes and coupled level simulation.

Models are encoded as a family code plus a small parameter vector so the
compiled kernels can evaluate them without calling back into Python:

* ``AFFINE``: mu(x) = a + b x, sigma(x) = c + d x.  GBM, frozen dynamics and
  additive-noise models are special cases.
* ``CIR``: mu(x) = kappa (theta - x), sigma(x) = s sqrt(max(x, 0)).  The state
  is truncated at 0 after every step and the Milstein correction uses the
  constant s**2 / 4.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .brownian import BrownianGrid, initial_values, refine_values
from .streams import RandomStream

AFFINE = 0
CIR = 1

TERMINAL = 0
DISCOUNTED_CALL = 1


class Scheme(enum.IntEnum):
    EULER = 0
    MILSTEIN = 1

    @property
    def strong_order(self) -> float:
        """Nominal strong order for Lipschitz terminal functionals."""
        return 0.5 if self is Scheme.EULER else 1.0


@njit(cache=True, nogil=True)
def drift(family, p, x):
    if family == CIR:
        return p[0] * (p[1] - x)
    return p[0] + p[1] * x


@njit(cache=True, nogil=True)
def diffusion(family, p, x):
    if family == CIR:
        return p[2] * math.sqrt(max(x, 0.0))
    return p[2] + p[3] * x


@njit(cache=True, nogil=True)
def diffusion_derivative(family, p, x):
    if family == CIR:
        if x > 0.0:
            return p[2] / (2.0 * math.sqrt(x))
        return math.inf
    return p[3]


@njit(cache=True, nogil=True)
def step(family, p, scheme, x, h, db):
    y = x + drift(family, p, x) * h + diffusion(family, p, x) * db
    if scheme == 1:
        if family == CIR:
            y += 0.25 * p[2] * p[2] * (db * db - h)
        else:
            y += 0.5 * diffusion(family, p, x) * diffusion_derivative(family, p, x) * (db * db - h)
    if family == CIR and y < 0.0:
        y = 0.0
    return y


@njit(cache=True, nogil=True)
def terminal_state(values, horizon, level, family, p, x0, scheme):
    h = horizon / (1 << level)
    x = x0
    for j in range(values.shape[0] - 1):
        x = step(family, p, scheme, x, h, values[j + 1] - values[j])
    return x


@njit(cache=True, nogil=True)
def apply_functional(code, fp, x):
    if code == DISCOUNTED_CALL:
        return math.exp(-fp[1] * fp[2]) * max(x - fp[0], 0.0)
    return x


@njit(cache=True, nogil=True)
def level_values(key, counter, max_level, horizon, family, p, x0, scheme, fcode, fp, out):
    """Fill ``out[n] = k(X at level n)`` for n = 0..max_level on one path.

    Returns the advanced draw counter (``counter + 2**max_level``).
    """
    values = initial_values(horizon, key, counter)
    counter += 1
    out[0] = apply_functional(fcode, fp, terminal_state(values, horizon, 0, family, p, x0, scheme))
    for n in range(1, max_level + 1):
        values = refine_values(values, horizon, n - 1, key, counter)
        counter += 1 << (n - 1)
        out[n] = apply_functional(fcode, fp, terminal_state(values, horizon, n, family, p, x0, scheme))
    return counter


@dataclass(frozen=True)
class SdeModel:
    """Scalar SDE dX = mu(X) dt + sigma(X) dB started at ``x0``."""

    name: str
    family: int
    params: tuple[float, ...]
    x0: float
    coeffs: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        p = np.zeros(4)
        p[: len(self.params)] = self.params
        object.__setattr__(self, "coeffs", p)

    def drift(self, x: float) -> float:
        return drift(self.family, self.coeffs, float(x))

    def diffusion(self, x: float) -> float:
        return diffusion(self.family, self.coeffs, float(x))

    def diffusion_derivative(self, x: float) -> float:
        return diffusion_derivative(self.family, self.coeffs, float(x))


def gbm(mu: float = 0.05, sigma: float = 0.2, x0: float = 1.0) -> SdeModel:
    return SdeModel("gbm", AFFINE, (0.0, mu, 0.0, sigma), x0)


def cir(kappa: float = 5.0, theta: float = 0.04, sigma: float = 0.25, x0: float = 0.04) -> SdeModel:
    return SdeModel("cir", CIR, (kappa, theta, sigma), x0)


def affine(a: float, b: float, c: float, d: float, x0: float, name: str = "affine") -> SdeModel:
    return SdeModel(name, AFFINE, (a, b, c, d), x0)


def frozen(x0: float = 1.0) -> SdeModel:
    """mu = sigma = 0: every scheme returns x0 exactly."""
    return SdeModel("frozen", AFFINE, (0.0, 0.0, 0.0, 0.0), x0)


@dataclass(frozen=True)
class TerminalValue:
    code = TERMINAL

    @property
    def params(self) -> np.ndarray:
        return np.zeros(3)

    def __call__(self, x: float) -> float:
        return float(x)


@dataclass(frozen=True)
class DiscountedCall:
    strike: float = 1.0
    rate: float = 0.05
    horizon: float = 1.0
    code = DISCOUNTED_CALL

    @property
    def params(self) -> np.ndarray:
        return np.array([self.strike, self.rate, self.horizon])

    def __call__(self, x: float) -> float:
        return apply_functional(DISCOUNTED_CALL, self.params, float(x))


PathFunctional = TerminalValue | DiscountedCall


@dataclass(frozen=True)
class Problem:
    """Everything needed to simulate k(X_h) at any dyadic level."""

    model: SdeModel
    scheme: Scheme
    functional: PathFunctional = TerminalValue()
    horizon: float = 1.0

    def kernel_args(self):
        return (float(self.horizon), self.model.family, self.model.coeffs, float(self.model.x0),
                int(self.scheme), self.functional.code, self.functional.params)


def euler_step(x: float, h: float, db: float, model: SdeModel) -> float:
    if not h > 0:
        raise ValueError("step size must be positive")
    return step(model.family, model.coeffs, 0, float(x), float(h), float(db))


def milstein_step(x: float, h: float, db: float, model: SdeModel) -> float:
    if not h > 0:
        raise ValueError("step size must be positive")
    return step(model.family, model.coeffs, 1, float(x), float(h), float(db))


def simulate_terminal(grid: BrownianGrid, model: SdeModel, scheme: Scheme) -> float:
    return terminal_state(grid.values, grid.horizon, grid.level, model.family, model.coeffs,
                          float(model.x0), int(scheme))


def simulate_level_terminals(stream: RandomStream, problem: Problem, max_level: int):
    """k-values at levels 0..max_level sharing one Brownian path, plus draws used."""
    if max_level < 0:
        raise ValueError("max_level must be >= 0")
    out = np.empty(max_level + 1)
    start = stream.draws
    end = level_values(stream.key, start, max_level, *problem.kernel_args(), out)
    stream.draws = int(end)
    return out, stream.draws - start
