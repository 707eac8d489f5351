"""Hydraulic twin of the pharmacokinetic channel.

Two stirred vessels connected by constant-flow pumps reproduce the
compartment model: an administration vessel (volume V_a) drains into a
central vessel (volume V_b) at flow Q_a, and the central vessel drains to
waste at flow Q_e.  Matching a first-order rate k to a vessel means
choosing Q = k * V, so rate constants and hardware settings are two views
of the same design.  The waste stream carries no signal back, so total
mass splits exactly between the two vessels and the accumulated excreta.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import DoseSchedule, Route
from .errors import ConfigurationError, DomainError

# Fixed-step RK4 stability guard: fastest turnover rate must resolve to
# at least ten steps, mirroring the signal-engine integrator.
MAX_RATE_PER_STEP = 0.1


@dataclass(frozen=True)
class PlatformConfig:
    """Pump flows (mL/s), vessel volumes (mL), and dosing route."""

    Q_a: float
    Q_e: float
    V_a: float
    V_b: float
    route: Route

    def __post_init__(self):
        for name in ("Q_a", "Q_e", "V_a", "V_b"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise DomainError(f"{name} must be positive and finite, got {value}")
        if not isinstance(self.route, Route):
            raise DomainError(f"route must be a Route, got {self.route!r}")

    @property
    def absorption_rate(self) -> float:
        """Effective k_a realized by the hardware: Q_a / V_a."""
        return self.Q_a / self.V_a

    @property
    def elimination_rate(self) -> float:
        """Effective k_e realized by the hardware: Q_e / V_b."""
        return self.Q_e / self.V_b


@dataclass(frozen=True, eq=False)
class PlatformTrace:
    """Simulated vessel concentrations plus mass bookkeeping on a uniform grid."""

    t0: float
    dt: float
    c_a: np.ndarray
    c_b: np.ndarray
    excreta_mass: np.ndarray
    input_mass: np.ndarray
    config: PlatformConfig

    def __post_init__(self):
        n = len(self.c_a)
        for name in ("c_a", "c_b", "excreta_mass", "input_mass"):
            arr = np.array(getattr(self, name), dtype=float)
            if arr.ndim != 1 or arr.size != n:
                raise DomainError("trace arrays must be 1-D and equally long")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def __len__(self):
        return self.c_a.size

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.c_a.size)

    def to_csv(self, path):
        """Write rows t,c_a,c_b,excreta,input with LF line endings."""
        with open(path, "w", newline="") as fh:
            fh.write("t,c_a,c_b,excreta,input\n")
            for t, ca, cb, ex, inp in zip(self.times, self.c_a, self.c_b, self.excreta_mass, self.input_mass):
                fh.write(f"{float(t)!r},{float(ca)!r},{float(cb)!r},{float(ex)!r},{float(inp)!r}\n")


def plan_flows(k_a: float, k_e: float, V_a: float, V_b: float) -> tuple[float, float]:
    """Pump flows that realize the given rate constants in fixed vessels."""
    for name, value in (("k_a", k_a), ("k_e", k_e), ("V_a", V_a), ("V_b", V_b)):
        if not (math.isfinite(value) and value > 0):
            raise DomainError(f"{name} must be positive and finite, got {value}")
    return k_a * V_a, k_e * V_b


def plan_volumes(k_a: float, k_e: float, Q: float) -> tuple[float, float]:
    """Vessel volumes that realize the given rate constants with one shared flow."""
    for name, value in (("k_a", k_a), ("k_e", k_e), ("Q", Q)):
        if not (math.isfinite(value) and value > 0):
            raise DomainError(f"{name} must be positive and finite, got {value}")
    return Q / k_a, Q / k_e


def simulate_platform(
    config: PlatformConfig,
    schedule: DoseSchedule,
    dt: float,
    horizon: float,
) -> PlatformTrace:
    """Integrate the two-vessel hardware model with fixed-step RK4.

    Finite-duration doses are metered in as piecewise-constant rates held
    over whole steps; impulsive doses are injected as instantaneous mass
    jumps at their nearest grid time.  Input mass is accumulated through
    the same stages as the vessel states, so conservation holds to
    rounding error and mass_audit() can verify it strictly.
    """
    if not (math.isfinite(dt) and dt > 0):
        raise DomainError(f"dt must be positive and finite, got {dt}")
    n_steps = int(round(horizon / dt))
    if n_steps < 1:
        raise ConfigurationError(f"horizon {horizon} shorter than one step {dt}")
    ra = config.absorption_rate
    re = config.elimination_rate
    if dt * max(ra, re) > MAX_RATE_PER_STEP:
        raise ConfigurationError(
            f"step size dt={dt} is unstable for turnover rate {max(ra, re)}: "
            f"dt*rate must be <= {MAX_RATE_PER_STEP}"
        )

    rate = np.zeros(n_steps + 1)
    jumps: list[tuple[int, float]] = []
    for event in schedule:
        if event.mass == 0.0:
            continue
        if event.duration == 0.0:
            idx = int(round((event.time) / dt))
            if not (0 <= idx <= n_steps):
                raise ConfigurationError(f"dose at t={event.time} falls outside the horizon")
            jumps.append((idx, event.mass))
        else:
            i0 = int(round(event.time / dt))
            i1 = max(i0 + 1, int(round(event.end / dt)))
            if i0 < 0 or i1 > n_steps:
                raise ConfigurationError(f"dose over [{event.time}, {event.end}] falls outside the horizon")
            rate[i0:i1] += event.mass / ((i1 - i0) * dt)
    jump_map: dict[int, float] = {}
    for idx, mass in jumps:
        jump_map[idx] = jump_map.get(idx, 0.0) + mass

    into_admin = config.route is Route.EXTRAVASCULAR
    rates = rate.tolist()
    c_a = np.zeros(n_steps + 1)
    c_b = np.zeros(n_steps + 1)
    excreta = np.zeros(n_steps + 1)
    input_mass = np.zeros(n_steps + 1)

    a = b = e = total_in = 0.0
    for i in range(n_steps + 1):
        mass = jump_map.get(i)
        if mass is not None:
            if into_admin:
                a += mass
            else:
                b += mass
            total_in += mass
        c_a[i] = a / config.V_a
        c_b[i] = b / config.V_b
        excreta[i] = e
        input_mass[i] = total_in
        if i == n_steps:
            break
        ui = rates[i]
        ua = ui if into_admin else 0.0
        ub = 0.0 if into_admin else ui
        # classical RK4 stages; the input is constant over the step
        a1 = ua - ra * a
        b1 = ra * a - re * b + ub
        e1 = re * b
        a_2 = a + 0.5 * dt * a1
        b_2 = b + 0.5 * dt * b1
        a2 = ua - ra * a_2
        b2 = ra * a_2 - re * b_2 + ub
        e2 = re * b_2
        a_3 = a + 0.5 * dt * a2
        b_3 = b + 0.5 * dt * b2
        a3 = ua - ra * a_3
        b3 = ra * a_3 - re * b_3 + ub
        e3 = re * b_3
        a_4 = a + dt * a3
        b_4 = b + dt * b3
        a4 = ua - ra * a_4
        b4 = ra * a_4 - re * b_4 + ub
        e4 = re * b_4
        a += (dt / 6.0) * (a1 + 2.0 * a2 + 2.0 * a3 + a4)
        b += (dt / 6.0) * (b1 + 2.0 * b2 + 2.0 * b3 + b4)
        e += (dt / 6.0) * (e1 + 2.0 * e2 + 2.0 * e3 + e4)
        total_in += dt * ui

    return PlatformTrace(
        t0=0.0,
        dt=dt,
        c_a=c_a,
        c_b=c_b,
        excreta_mass=excreta,
        input_mass=input_mass,
        config=config,
    )


def mass_audit(trace: PlatformTrace) -> float:
    """Worst-case relative mass-conservation residual over a trace.

    At every sample the mass held in both vessels plus the accumulated
    excreta must equal the mass delivered so far; the residual is scaled
    by the running input mass (with a 1e-12 floor so an all-zero trace
    audits cleanly).
    """
    held = trace.config.V_a * trace.c_a + trace.config.V_b * trace.c_b + trace.excreta_mass
    residual = np.abs(held - trace.input_mass)
    scale = np.maximum(trace.input_mass, 1e-12)
    return float(np.max(residual / scale))
