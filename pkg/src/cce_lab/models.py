"""Central-spin scenario descriptors.

Every scenario reduces to the same pure-dephasing form: for a bath
configuration with Overhauser field ``h`` the central splitting is
``E = sqrt(gap**2 + (offset + h)**2)`` and the two qubit branches see
``c_plus * E + H_b`` and ``c_zero * E + H_b``.

* NV center near zero field: branches ``|+>`` and ``|0>`` so
  ``(c_plus, c_zero) = (1, 0)``; gap is the strain splitting ``epsilon`` and
  offset the electron Zeeman frequency ``-gamma_e B``.
* Double dot singlet-triplet qubit: ``(1/2, -1/2)``, gap ``J_ex``, offset 0,
  field ``h1 - h2``.
* Driven spin in the rotating frame: ``(1/2, -1/2)``, gap is the Rabi
  frequency, offset the detuning.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .constants import DEFAULT_CONSTANTS, PhysicalConstants


@dataclass(frozen=True)
class CentralSpinModel:
    scenario = "generic"
    #: 'vector' quantizes each nucleus along its hyperfine vector; 'z' uses A_z only.
    projection = "vector"
    #: 'full' keeps the whole dipolar tensor, 'secular' the high-field form.
    dipolar = "full"
    branch_weights = (1.0, 0.0)

    @property
    def gap_khz(self) -> float:
        raise NotImplementedError

    @property
    def offset_khz(self) -> float:
        raise NotImplementedError

    @property
    def bath_field_gauss(self) -> float:
        raise NotImplementedError

    constants: PhysicalConstants = field(default=DEFAULT_CONSTANTS, repr=False, kw_only=True)
    #: Multiplies the intrinsic bath Hamiltonian (nuclear Zeeman and dipolar terms).
    bath_scale: float = field(default=1.0, kw_only=True)

    def splitting(self, overhauser_khz):
        """Central-spin splitting in kHz for a given Overhauser field."""
        return np.hypot(self.gap_khz, self.offset_khz + np.asarray(overhauser_khz))

    def describe(self) -> dict:
        return {"scenario": self.scenario, "gap_khz": self.gap_khz, "offset_khz": self.offset_khz,
                "bath_field_gauss": self.bath_field_gauss, "branch_weights": list(self.branch_weights),
                "projection": self.projection, "dipolar": self.dipolar, "bath_scale": self.bath_scale}


@dataclass(frozen=True)
class NVModel(CentralSpinModel):
    """NV electron spin near zero field with strain splitting ``epsilon``."""

    B_gauss: float = 0.0
    epsilon_khz: float = 100.0
    scenario = "nv"

    def __post_init__(self):
        if abs(self.B_gauss) > 1.0:
            warnings.warn(f"B = {self.B_gauss} G: dropped second-order terms may no longer be negligible",
                          stacklevel=2)

    @property
    def omega_e_khz(self) -> float:
        return -self.constants.gamma_e_nv * self.B_gauss

    @property
    def gap_khz(self) -> float:
        return self.epsilon_khz

    @property
    def offset_khz(self) -> float:
        return self.omega_e_khz

    @property
    def bath_field_gauss(self) -> float:
        return self.B_gauss

    def clock_field(self, overhauser_khz: float) -> float:
        """Field in G at which ``omega_e + h = 0``."""
        return overhauser_khz / self.constants.gamma_e_nv

    def describe(self) -> dict:
        return dict(super().describe(), B_gauss=self.B_gauss, epsilon_khz=self.epsilon_khz)


@dataclass(frozen=True)
class DoubleDotModel(CentralSpinModel):
    """GaAs singlet-triplet qubit; exchange in GHz, field in T (>= 1 T)."""

    J_ex_ghz: float = -0.24
    B_tesla: float = 1.0
    # static Overhauser difference from nuclei left out of the explicit bath
    frozen_overhauser_khz: float = 0.0
    scenario = "dqd"
    projection = "z"
    dipolar = "secular"
    branch_weights = (0.5, -0.5)

    def __post_init__(self):
        if self.B_tesla < 1.0:
            raise ValueError(f"double-dot model needs B >= 1 T for the secular form, got {self.B_tesla}")

    @property
    def gap_khz(self) -> float:
        return abs(self.J_ex_ghz) * 1e6

    @property
    def offset_khz(self) -> float:
        return self.frozen_overhauser_khz

    @property
    def bath_field_gauss(self) -> float:
        return self.B_tesla * 1e4

    @property
    def omega_e_khz(self) -> float:
        # gamma_e* in rad s^-1 T^-1 -> kHz
        return -self.constants.gamma_e_star_gaas * self.B_tesla / (2 * math.pi) / 1e3

    def describe(self) -> dict:
        return dict(super().describe(), J_ex_ghz=self.J_ex_ghz, B_tesla=self.B_tesla,
                    frozen_overhauser_khz=self.frozen_overhauser_khz)


@dataclass(frozen=True)
class DrivenSpinModel(CentralSpinModel):
    """Resonantly driven spin in the rotating frame (Rabi and rotary echo)."""

    rabi_khz: float = 100.0
    detuning_khz: float = 0.0
    bath_field: float = 1000.0
    scenario = "driven"
    projection = "z"
    dipolar = "secular"
    branch_weights = (0.5, -0.5)

    @property
    def gap_khz(self) -> float:
        return self.rabi_khz

    @property
    def offset_khz(self) -> float:
        return self.detuning_khz

    @property
    def bath_field_gauss(self) -> float:
        return self.bath_field

    def describe(self) -> dict:
        return dict(super().describe(), rabi_khz=self.rabi_khz, detuning_khz=self.detuning_khz)
