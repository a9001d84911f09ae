"""Behavioral FeFET model used as the PUF entropy source.

A device carries a static device-to-device (D2D) offset drawn once at
construction and a threshold voltage that is overwritten by erase, strong
program and weak write operations.  Only weak writes are stochastic: each
call adds a fresh cycle-to-cycle (C2C) Gaussian sample, which is the
randomness the PUF registration harvests.

Reads are pure.  The node voltage seen through the transistor is a logistic
function of the gate overdrive, scaled by the voltage on its source rail::

    Vx = V_source * logistic((V_gate - Vth) / read_slope)
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import expit

from .errors import ConfigError, DomainError

REFERENCE_AMPLITUDE = 2.8  # V, pulse amplitude at which weak_mean_base applies
REFERENCE_TEMPERATURE = 25.0  # degC

# C2C noise multipliers for the three measured device geometries.
SIZE_PROFILES = {
    "500x500": 1.0,
    "200x200": 1.2,
    "200x100": 1.4,
}


@dataclass(frozen=True)
class DeviceParams:
    """Population parameters of the threshold-voltage model (volts unless noted).

    ``sigma_d2d`` and ``sigma_c2c`` may be zero to build degenerate,
    noise-free devices for testing; negative values are rejected.
    """

    vth_erased: float = 1.6
    vth_programmed: float = 0.2
    weak_mean_base: float = 0.7
    amplitude_slope: float = 0.375  # V per V of extra pulse amplitude
    temp_slope: float = 0.002  # V per degC above 25 degC
    sigma_d2d: float = 0.20
    sigma_c2c: float = 0.05
    read_slope: float = 0.1
    weak_range: tuple[float, float] = (2.8, 3.6)

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if not self.vth_erased > self.weak_mean_base > self.vth_programmed:
            raise ConfigError(
                "need vth_erased > weak_mean_base > vth_programmed, got "
                f"{self.vth_erased}, {self.weak_mean_base}, {self.vth_programmed}"
            )
        for name in ("sigma_d2d", "sigma_c2c"):
            value = getattr(self, name)
            if not (value >= 0 and math.isfinite(value)):
                raise ConfigError(f"{name} must be finite and >= 0, got {value}")
        if not self.read_slope > 0:
            raise ConfigError(f"read_slope must be > 0, got {self.read_slope}")
        if not self.amplitude_slope > 0:
            raise ConfigError(f"amplitude_slope must be > 0, got {self.amplitude_slope}")
        lo, hi = self.weak_range
        if not lo <= hi:
            raise ConfigError(f"weak_range must be ordered, got {self.weak_range}")

    def with_size_profile(self, profile: str) -> "DeviceParams":
        """Return a copy with ``sigma_c2c`` scaled for a named device size."""
        try:
            scale = SIZE_PROFILES[profile]
        except KeyError:
            raise ConfigError(
                f"unknown size profile {profile!r}; choose from {sorted(SIZE_PROFILES)}"
            ) from None
        return replace(self, sigma_c2c=self.sigma_c2c * scale)

    def weak_mean(self, pulse_amplitude: float, temperature: float) -> float:
        """Population mean Vth after a weak write (before D2D and C2C terms)."""
        return (
            self.weak_mean_base
            - self.amplitude_slope * (pulse_amplitude - REFERENCE_AMPLITUDE)
            - self.temp_slope * (temperature - REFERENCE_TEMPERATURE)
        )

    def separation_margin(self, read_gate: float) -> float:
        """Distance of ``read_gate`` from the nearer saturated state, in units of read_slope."""
        return min(read_gate - self.vth_programmed, self.vth_erased - read_gate) / self.read_slope


@dataclass
class FeFetDevice:
    params: DeviceParams
    d2d_offset: float
    vth: float = field(default=float("nan"))

    def __post_init__(self):
        if math.isnan(self.vth):
            self.vth = self.params.vth_erased

    def __setattr__(self, name, value):
        if name == "d2d_offset" and "d2d_offset" in self.__dict__:
            raise AttributeError("d2d_offset is fixed at construction")
        super().__setattr__(name, value)


def new_device(params: DeviceParams, rng: np.random.Generator) -> FeFetDevice:
    """Sample a device: D2D offset ~ N(0, sigma_d2d^2), Vth starts erased."""
    params.validate()
    offset = float(rng.normal(0.0, params.sigma_d2d)) if params.sigma_d2d > 0 else 0.0
    return FeFetDevice(params=params, d2d_offset=offset)


def erase(dev: FeFetDevice) -> None:
    dev.vth = dev.params.vth_erased


def program_strong(dev: FeFetDevice) -> None:
    dev.vth = dev.params.vth_programmed


def write_weak(
    dev: FeFetDevice,
    pulse_amplitude: float,
    temperature: float,
    rng: np.random.Generator,
) -> None:
    """Partial-switching write: population mean + device offset + fresh C2C draw."""
    p = dev.params
    lo, hi = p.weak_range
    if not lo <= pulse_amplitude <= hi:
        raise DomainError(
            f"pulse amplitude {pulse_amplitude} V outside weak-write range [{lo}, {hi}] V"
        )
    c2c = float(rng.normal(0.0, p.sigma_c2c)) if p.sigma_c2c > 0 else 0.0
    dev.vth = p.weak_mean(pulse_amplitude, temperature) + dev.d2d_offset + c2c


def read_vx(dev: FeFetDevice, gate_voltage: float, source_voltage: float) -> float:
    return float(source_voltage * expit((gate_voltage - dev.vth) / dev.params.read_slope))
