"""Physical constants and unit conversions.

User-facing frequencies are ordinary frequencies in kHz and times in ms.
Internally energies are angular frequencies in rad/ms; the single conversion
factor is ``TWO_PI`` (1 kHz = 2*pi rad/ms).
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

TWO_PI = 2.0 * math.pi


def khz_to_rad_per_ms(f):
    return TWO_PI * f


def rad_per_ms_to_khz(w):
    return w / TWO_PI


@dataclass(frozen=True)
class Isotope:
    """Nuclear isotope parameters.

    ``gamma_e7`` is in units of 1e7 rad s^-1 T^-1, ``density_e25`` in
    1e25 cm^-3 and ``hyperfine_e9`` in 1e9 s^-1 (angular).
    """

    name: str
    spin: float
    abundance: float
    gamma_e7: float
    density_e25: float = 0.0
    hyperfine_e9: float = 0.0

    @property
    def gamma_khz_per_gauss(self) -> float:
        # 1e7 rad/s/T -> kHz/G: divide by 2*pi, then 1e7 * 1e-4 * 1e-3 = 1
        return self.gamma_e7 / TWO_PI

    @property
    def hyperfine_khz(self) -> float:
        return self.hyperfine_e9 * 1e6 / TWO_PI


GAAS_ISOTOPES = {
    "As75": Isotope("As75", 1.5, 1.000, 4.60, 9.8, 69.8),
    "Ga69": Isotope("Ga69", 1.5, 0.601, 6.44, 5.8, 58.1),
    "Ga71": Isotope("Ga71", 1.5, 0.399, 8.18, 5.8, 73.8),
}


@dataclass(frozen=True)
class PhysicalConstants:
    """Defaults used throughout; any field can be overridden from JSON."""

    mu0_over_4pi: float = 1e-7  # T m / A
    planck: float = 6.62607015e-34  # J s
    gamma_e_nv: float = -2800.0  # kHz/G
    gamma_n_c13: float = 1.1  # kHz/G
    d_zfs_ghz: float = 2.87
    gamma_e_free: float = -1.76e11  # s^-1 T^-1
    gamma_e_star_gaas: float = 1.32e11  # s^-1 T^-1
    diamond_lattice_nm: float = 0.3567
    gaas_lattice_nm: float = 0.563
    c13_abundance: float = 0.011
    isotopes: Mapping[str, Isotope] = field(default_factory=lambda: dict(GAAS_ISOTOPES))

    def dipolar_prefactor(self, gamma_1: float, gamma_2: float) -> float:
        """``(mu0/4pi) h g1 g2`` in kHz nm^3 for gyromagnetic ratios in kHz/G."""
        # kHz/G -> Hz/T is a factor 1e7; nm^3 -> m^3 is 1e-27; Hz -> kHz 1e-3
        return self.mu0_over_4pi * self.planck * gamma_1 * gamma_2 * 1e14 / 1e-27 * 1e-3

    def to_dict(self) -> dict[str, Any]:
        d = dataclasses.asdict(self)
        d["isotopes"] = {k: dataclasses.asdict(v) for k, v in self.isotopes.items()}
        return d

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


DEFAULT_CONSTANTS = PhysicalConstants()


def constants_from_overrides(overrides: Mapping[str, Any] | None) -> PhysicalConstants:
    """Apply a mapping of overrides on top of the defaults.

    Unknown keys raise ``KeyError`` naming the key. Isotope overrides are
    merged per isotope, e.g. ``{"isotopes": {"Ga69": {"abundance": 0.6}}}``.
    """
    if not overrides:
        return DEFAULT_CONSTANTS
    names = {f.name for f in dataclasses.fields(PhysicalConstants)}
    kwargs: dict[str, Any] = {}
    for key, value in overrides.items():
        if key not in names:
            raise KeyError(f"unknown constant {key!r}")
        if key == "isotopes":
            merged = dict(GAAS_ISOTOPES)
            for iso, fields_ in value.items():
                base = merged.get(iso, Isotope(iso, 1.5, 0.0, 0.0))
                merged[iso] = dataclasses.replace(base, **fields_)
            kwargs[key] = merged
        else:
            kwargs[key] = float(value)
    return dataclasses.replace(DEFAULT_CONSTANTS, **kwargs)


def load_constants(path: str | Path) -> PhysicalConstants:
    with open(path) as fh:
        return constants_from_overrides(json.load(fh))
