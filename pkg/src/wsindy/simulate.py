"""Reference solutions for the Lorenz, cubic oscillator, nonlinear Burgers and
hyper-diffusive Kuramoto-Sivashinsky systems."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .core_data import Dataset, make_grid
from .errors import InvalidArgument, SimulationError


@dataclass(frozen=True)
class SimConfig:
    system: str
    t_final: float | None = None
    n_t: int | None = None
    n_x: int | None = None
    initial_condition: tuple | None = None
    atol: float = 1e-12
    rtol: float = 1e-13
    max_dt: float | None = None
    dealias: bool = True
    burn_in: float = 0.0
    extra: dict = field(default_factory=dict)


def lorenz_rhs(t, u):
    x, y, z = u
    return np.array([-10.0 * x + 10.0 * y, 28.0 * x - x * z - y, -8.0 / 3.0 * z + x * y])


def cubic_oscillator_rhs(t, u):
    x, y = u
    return np.array([-0.1 * x**3 + 2.0 * y**3, -2.0 * x**3 - 0.1 * y**3])


def _integrate_ode(rhs, u0, t_final, n_t, atol, rtol):
    t = np.linspace(0.0, t_final, n_t)
    sol = solve_ivp(rhs, (0.0, t_final), np.asarray(u0, dtype=float), method="RK45",
                    t_eval=t, atol=atol, rtol=rtol)
    if not sol.success or not np.all(np.isfinite(sol.y)):
        raise SimulationError(f"integration failed: {sol.message}")
    return t, sol.y.T


def simulate_lorenz(config: SimConfig | None = None) -> Dataset:
    config = config or SimConfig("lorenz")
    T = 10.0 if config.t_final is None else config.t_final
    n_t = 250_001 if config.n_t is None else config.n_t
    u0 = (-8.0, 7.0, 27.0) if config.initial_condition is None else config.initial_condition
    t, U = _integrate_ode(lorenz_rhs, u0, T, n_t, config.atol, config.rtol)
    grid = make_grid([(0.0, T)], [n_t])
    return Dataset(grid, U, meta={"system": "lorenz", "ic": ",".join(map(repr, u0))})


def simulate_cubic_oscillator(config: SimConfig | None = None) -> Dataset:
    config = config or SimConfig("cubic_oscillator")
    T = 25.0 if config.t_final is None else config.t_final
    n_t = 100_001 if config.n_t is None else config.n_t
    u0 = (2.0, 0.0) if config.initial_condition is None else config.initial_condition
    t, U = _integrate_ode(cubic_oscillator_rhs, u0, T, n_t, config.atol, config.rtol)
    grid = make_grid([(0.0, T)], [n_t])
    return Dataset(grid, U, meta={"system": "cubic_oscillator", "ic": ",".join(map(repr, u0))})


def etdrk4_coefficients(L: np.ndarray, dt: float, n_contour: int = 32):
    """Scalar ETDRK4 coefficients by contour averaging, stable for L*dt near 0."""
    r = np.exp(1j * np.pi * (np.arange(1, n_contour + 1) - 0.5) / n_contour)
    LR = dt * L[:, None] + r[None, :]
    E = np.exp(dt * L)
    E2 = np.exp(dt * L / 2)
    Q = dt * np.real(np.mean((np.exp(LR / 2) - 1) / LR, axis=1))
    f1 = dt * np.real(np.mean((-4 - LR + np.exp(LR) * (4 - 3 * LR + LR**2)) / LR**3, axis=1))
    f2 = dt * np.real(np.mean((2 + LR + np.exp(LR) * (-2 + LR)) / LR**3, axis=1))
    f3 = dt * np.real(np.mean((-4 - 3 * LR - LR**2 + np.exp(LR) * (4 - LR)) / LR**3, axis=1))
    return E, E2, Q, f1, f2, f3


class _SpectralProblem:
    """u_t = L u + N(u) on a periodic interval, stepped with ETDRK4 in Fourier space."""

    def __init__(self, n_x, length, symbol, nonlinear, dealias=True):
        self.n = n_x
        self.k = 2 * np.pi / length * np.fft.rfftfreq(n_x, d=1.0 / n_x)
        self.L = symbol(self.k)
        self._nonlinear = nonlinear
        kmax = np.abs(np.fft.rfftfreq(n_x, d=1.0 / n_x)).max()
        self.mask = (np.fft.rfftfreq(n_x, d=1.0 / n_x) < 2.0 / 3.0 * kmax) if dealias else None
        self.pad = 2 * n_x if dealias else n_x

    def to_physical_padded(self, v):
        # zero-padding the spectrum to twice the grid removes aliasing of cubic products
        w = np.zeros(self.pad // 2 + 1, dtype=complex)
        w[: len(v)] = v
        return np.fft.irfft(w, n=self.pad) * (self.pad / self.n)

    def from_physical_padded(self, f):
        w = np.fft.rfft(f) * (self.n / self.pad)
        return w[: self.n // 2 + 1]

    def N(self, v):
        out = self._nonlinear(self, v)
        if self.mask is not None:
            out = out * self.mask
        return out

    def run(self, u0, t_out, max_dt):
        v = np.fft.rfft(u0)
        if self.mask is not None:
            v = v * self.mask
        out = np.empty((len(t_out), self.n))
        out[0] = np.fft.irfft(v, n=self.n)
        dt_out = t_out[1] - t_out[0]
        sub = int(np.ceil(dt_out / max_dt - 1e-9))
        dt = dt_out / sub
        E, E2, Q, f1, f2, f3 = etdrk4_coefficients(self.L, dt)
        for i in range(1, len(t_out)):
            for _ in range(sub):
                Nv = self.N(v)
                a = E2 * v + Q * Nv
                Na = self.N(a)
                b = E2 * v + Q * Na
                Nb = self.N(b)
                c = E2 * a + Q * (2 * Nb - Nv)
                Nc = self.N(c)
                v = E * v + Nv * f1 + 2 * (Na + Nb) * f2 + Nc * f3
            u = np.fft.irfft(v, n=self.n)
            if not np.all(np.isfinite(u)):
                raise SimulationError(f"solution blew up near t = {t_out[i]:.4g}")
            out[i] = u
        return out


def _burgers_nonlinear(prob, v):
    u = prob.to_physical_padded(v)
    # -0.5 d/dx(u^2) - u^3 + 2u^2 + 1
    uu = prob.from_physical_padded(u * u)
    react = prob.from_physical_padded(-(u**3) + 2 * u * u + 1.0)
    return -0.5j * prob.k * uu + react


def _hyper_ks_nonlinear(prob, v):
    u = prob.to_physical_padded(v)
    uu = prob.from_physical_padded(u * u)
    ik = 1j * prob.k
    # -0.5 d/dx(u^2) + 0.1 d^3/dx^3(u^2)
    return (-0.5 * ik + 0.1 * ik**3) * uu


def hyper_ks_symbol(k):
    """Fourier symbol of d^4 + 0.75 d^6."""
    return k**4 - 0.75 * k**6


def simulate_burgers_nl(config: SimConfig | None = None) -> Dataset:
    config = config or SimConfig("burgers_nl")
    n_x = 512 if config.n_x is None else config.n_x
    n_t = 451 if config.n_t is None else config.n_t
    T = 1.5 if config.t_final is None else config.t_final
    x = -1.0 + 2.0 * np.arange(n_x) / n_x
    if config.initial_condition is None:
        u0, ic = np.exp(-36.0 * x**2), "exp(-36x^2)"
    else:
        u0, ic = _ic_values(config.initial_condition, x), "custom"
    prob = _SpectralProblem(n_x, 2.0, lambda k: -0.01 * k**2, _burgers_nonlinear, config.dealias)
    max_dt = config.max_dt or min(8e-4, 0.4 * (2.0 / n_x))
    t = np.linspace(0.0, T, n_t)
    U = prob.run(u0, t, max_dt)
    grid = make_grid([(x[0], x[-1]), (0.0, T)], [n_x, n_t])
    return Dataset(grid, U.T, meta={"system": "burgers_nl", "ic": ic})


def simulate_hyper_ks(config: SimConfig | None = None) -> Dataset:
    config = config or SimConfig("hyper_ks")
    n_x = 256 if config.n_x is None else config.n_x
    n_t = 257 if config.n_t is None else config.n_t
    T = 82.0 if config.t_final is None else config.t_final
    length = 32 * np.pi
    x = length * np.arange(n_x) / n_x
    if config.initial_condition is None:
        u0, ic = np.cos(x / 16) * (1 + np.sin(x / 16)), "cos(x/16)(1+sin(x/16))"
    else:
        u0, ic = _ic_values(config.initial_condition, x), "custom"
    prob = _SpectralProblem(n_x, length, hyper_ks_symbol, _hyper_ks_nonlinear, config.dealias)
    max_dt = config.max_dt or 5e-3
    t0 = float(config.burn_in)
    if t0 > 0:
        u0 = prob.run(u0, np.array([0.0, t0]), max_dt)[-1]
    t = np.linspace(0.0, T, n_t)
    U = prob.run(u0, t, max_dt)
    grid = make_grid([(x[0], x[-1]), (0.0, T)], [n_x, n_t])
    return Dataset(grid, U.T, meta={"system": "hyper_ks", "ic": ic, "burn_in": t0})


def _ic_values(ic, x):
    if callable(ic):
        return np.asarray(ic(x), dtype=float)
    arr = np.asarray(ic, dtype=float)
    if arr.shape != x.shape:
        raise InvalidArgument("initial condition must match the spatial grid")
    return arr


SIMULATORS = {
    "lorenz": simulate_lorenz,
    "cubic_oscillator": simulate_cubic_oscillator,
    "burgers_nl": simulate_burgers_nl,
    "hyper_ks": simulate_hyper_ks,
}


def simulate(config: SimConfig) -> Dataset:
    try:
        fn = SIMULATORS[config.system]
    except KeyError:
        raise InvalidArgument(f"unknown system {config.system!r}") from None
    return fn(config)
