"""Random nuclear-spin bath geometries.

Two generators are provided:

* :func:`generate_diamond_bath` places 13C on the diamond lattice around an
  NV center. The vacancy sits at the origin and the crystal is rotated so the
  NV axis ([111], towards the nitrogen) is the z axis.
* :func:`generate_gaas_bath` fills a zincblende GaAs lattice inside the
  envelope of a gate-defined dot with As75/Ga69/Ga71 and attaches the contact
  hyperfine couplings.

Sites are always sorted by distance from the origin, ties broken by
position, so "the nearest n spins" is well defined.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable

import numpy as np

from .constants import DEFAULT_CONSTANTS, PhysicalConstants
from .couplings import hyperfine_vectors

BATH_FORMAT_VERSION = 1

#: Rows map the cubic frame onto (x', y', z') with z' along [111].
NV_FRAME = np.array([
    [1.0, -1.0, 0.0] / np.sqrt(2.0),
    [1.0, 1.0, -2.0] / np.sqrt(6.0),
    [1.0, 1.0, 1.0] / np.sqrt(3.0),
])

_FCC = np.array([[0.0, 0.0, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5], [0.5, 0.5, 0.0]])
_SECOND_BASIS = np.array([0.25, 0.25, 0.25])


class EmptyBathError(ValueError):
    """No site survived the generation criteria."""


@dataclass(frozen=True)
class SpinSite:
    position: np.ndarray
    species: str
    gamma_n: float  # kHz/G
    spin: float
    hyperfine: np.ndarray  # kHz
    group: int = 0


@dataclass(frozen=True)
class DotEnvelope:
    """Hard-wall (z) and parabolic (lateral) dot envelope; lengths in nm."""

    L_z: float = 6.0
    rho_0: float = 30.0

    def __post_init__(self):
        if not (self.L_z > 0 and self.rho_0 > 0):
            raise ValueError("envelope lengths must be positive")

    @property
    def peak_density(self) -> float:
        return (2.0 / self.L_z) / (math.pi * self.rho_0**2)


@dataclass(frozen=True, eq=False)
class SpinBath:
    """Immutable nuclear-spin bath.

    ``hyperfine`` holds the coupling vector of each nucleus to the central
    spin (kHz): the point-dipole axis row for NV baths, ``(0, 0, +-a)`` for
    GaAs contact couplings (negative sign for the second dot, so that the
    z-projection sums to ``h1 - h2``). ``group`` labels independent
    sub-baths; clusters never span groups.
    """

    positions: np.ndarray
    species: tuple[str, ...]
    gammas: np.ndarray
    spins: np.ndarray
    hyperfine: np.ndarray
    groups: np.ndarray
    scenario: str = "generic"
    seed: int | None = None
    metadata: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.species)
        for name in ("positions", "gammas", "spins", "hyperfine", "groups"):
            arr = np.array(getattr(self, name))
            if len(arr) != n:
                raise ValueError(f"{name} has length {len(arr)}, expected {n}")
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "species", tuple(self.species))

    def __len__(self) -> int:
        return len(self.species)

    def __getitem__(self, i: int) -> SpinSite:
        return SpinSite(self.positions[i], self.species[i], float(self.gammas[i]),
                        float(self.spins[i]), self.hyperfine[i], int(self.groups[i]))

    @property
    def sites(self) -> list[SpinSite]:
        return [self[i] for i in range(len(self))]

    @property
    def distances(self) -> np.ndarray:
        return np.linalg.norm(self.positions, axis=1)

    def subset(self, indices: Iterable[int]) -> "SpinBath":
        idx = np.asarray(list(indices), dtype=int)
        return SpinBath(self.positions[idx], tuple(self.species[i] for i in idx), self.gammas[idx],
                        self.spins[idx], self.hyperfine[idx], self.groups[idx], self.scenario,
                        self.seed, dict(self.metadata))

    def nearest(self, n: int) -> "SpinBath":
        """The ``n`` sites closest to the origin (sites are already sorted)."""
        return self.subset(range(min(n, len(self))))

    def scaled(self, hyperfine: float = 1.0) -> "SpinBath":
        return SpinBath(self.positions, self.species, self.gammas, self.spins,
                        self.hyperfine * hyperfine, self.groups, self.scenario, self.seed,
                        dict(self.metadata))

    def to_json(self) -> dict[str, Any]:
        return {
            "version": BATH_FORMAT_VERSION,
            "scenario": self.scenario,
            "seed": self.seed,
            "metadata": self.metadata,
            "sites": [
                {
                    "position_nm": [float(x) for x in self.positions[i]],
                    "species": self.species[i],
                    "spin": float(self.spins[i]),
                    "gamma": float(self.gammas[i]),
                    "hyperfine_khz": [float(x) for x in self.hyperfine[i]],
                    "group": int(self.groups[i]),
                }
                for i in range(len(self))
            ],
        }

    @classmethod
    def from_json(cls, doc: dict[str, Any]) -> "SpinBath":
        sites = doc["sites"]
        return cls(
            positions=np.array([s["position_nm"] for s in sites], dtype=float).reshape(-1, 3),
            species=tuple(s["species"] for s in sites),
            gammas=np.array([s["gamma"] for s in sites], dtype=float),
            spins=np.array([s["spin"] for s in sites], dtype=float),
            hyperfine=np.array([s["hyperfine_khz"] for s in sites], dtype=float).reshape(-1, 3),
            groups=np.array([s.get("group", 0) for s in sites], dtype=int),
            scenario=doc.get("scenario", "generic"),
            seed=doc.get("seed"),
            metadata=doc.get("metadata", {}),
        )

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=1, sort_keys=True)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def load(cls, path: str | Path) -> "SpinBath":
        return cls.from_json(json.loads(Path(path).read_text()))


def sort_order(positions: np.ndarray) -> np.ndarray:
    """Permutation sorting positions by distance, then x, y, z."""
    d = np.round(np.linalg.norm(positions, axis=1), 9)
    return np.lexsort((positions[:, 2], positions[:, 1], positions[:, 0], d))


def _cubic_points(basis: np.ndarray, a: float, half_extent: np.ndarray) -> np.ndarray:
    n = np.ceil(np.asarray(half_extent) / a).astype(int) + 1
    grids = np.meshgrid(*[np.arange(-k, k + 1) for k in n], indexing="ij")
    cells = np.stack([g.ravel() for g in grids], axis=1).astype(float)
    pts = (cells[:, None, :] + basis[None, :, :]).reshape(-1, 3) * a
    inside = np.all(np.abs(pts) <= np.asarray(half_extent) + 1e-12, axis=1)
    return pts[inside]


def diamond_lattice_sites(radius: float, a: float = 0.3567, exclusion: float = 0.0) -> np.ndarray:
    """All diamond-lattice sites with ``exclusion < r <= radius`` in the NV frame, sorted."""
    basis = np.vstack([_FCC, _FCC + _SECOND_BASIS])
    pts = _cubic_points(basis, a, np.full(3, radius)) @ NV_FRAME.T
    r = np.linalg.norm(pts, axis=1)
    keep = (r <= radius + 1e-12) & (r > max(exclusion, 1e-9))
    pts = pts[keep]
    return pts[sort_order(pts)]


def generate_diamond_bath(seed: int, abundance: float = 0.011, radius: float = 3.0,
                          exclusion: float = 0.5, max_sites: int | None = None,
                          constants: PhysicalConstants = DEFAULT_CONSTANTS) -> SpinBath:
    """Random 13C bath around an NV center.

    Each lattice site (sorted order) is occupied independently with
    probability ``abundance``. ``max_sites`` keeps only the nearest sites.
    """
    if not 0.0 <= abundance <= 1.0:
        raise ValueError(f"abundance must lie in [0, 1], got {abundance}")
    if radius <= 0:
        raise ValueError("radius must be positive")
    if radius > 6.0:
        raise ValueError(f"radius {radius} nm exceeds the 6 nm generation limit")
    candidates = diamond_lattice_sites(radius, constants.diamond_lattice_nm, exclusion)
    rng = np.random.default_rng(seed)
    occupied = rng.random(len(candidates)) < abundance
    pts = candidates[occupied]
    if max_sites is not None:
        pts = pts[:max_sites]
    if len(pts) == 0:
        raise EmptyBathError(
            f"no 13C site within {radius} nm (abundance {abundance}, exclusion {exclusion} nm)")
    n = len(pts)
    gamma = np.full(n, constants.gamma_n_c13)
    return SpinBath(
        positions=pts,
        species=("C13",) * n,
        gammas=gamma,
        spins=np.full(n, 0.5),
        hyperfine=hyperfine_vectors(pts, gamma, constants=constants),
        groups=np.zeros(n, dtype=int),
        scenario="nv",
        seed=int(seed),
        metadata={"abundance": abundance, "radius_nm": radius, "exclusion_nm": exclusion,
                  "max_sites": max_sites, "lattice_nm": constants.diamond_lattice_nm,
                  "candidates": int(len(candidates))},
    )


def envelope_density(r, envelope: DotEnvelope) -> np.ndarray:
    """``|f(r)|^2`` in nm^-3; zero outside the slab ``|z| <= L_z/2``."""
    r = np.asarray(r, dtype=float)
    z = r[..., 2]
    rho2 = r[..., 0] ** 2 + r[..., 1] ** 2
    dens = envelope.peak_density * np.cos(np.pi * z / envelope.L_z) ** 2 * np.exp(-rho2 / envelope.rho_0**2)
    return np.where(np.abs(z) <= envelope.L_z / 2, dens, 0.0)


def zincblende_sites(envelope: DotEnvelope, a: float, cutoff: float) -> tuple[np.ndarray, np.ndarray]:
    """Zincblende sites whose envelope density exceeds ``cutoff * max``.

    Returns ``(positions, is_anion)`` sorted by distance. Cations (Ga) occupy
    the fcc sublattice through the origin; anions (As) the one shifted by
    ``a/4 (1, 1, 1)``.
    """
    zmax = envelope.L_z / math.pi * math.acos(math.sqrt(cutoff))
    rmax = envelope.rho_0 * math.sqrt(math.log(1.0 / cutoff))
    basis = np.vstack([_FCC, _FCC + _SECOND_BASIS])
    pts = _cubic_points(basis, a, np.array([rmax, rmax, zmax]))
    # anion flag from fractional coordinates: second basis has offset 1/4
    frac = np.mod(np.round(pts / a * 4), 4)
    anion = np.all(frac % 2 == 1, axis=1)
    dens = envelope_density(pts, envelope)
    keep = dens > cutoff * envelope.peak_density
    pts, anion = pts[keep], anion[keep]
    order = sort_order(pts)
    return pts[order], anion[order]


def generate_gaas_bath(seed: int, envelope: DotEnvelope = DotEnvelope(), lattice_const: float | None = None,
                       cutoff: float = 0.5, max_sites: int | None = 2000, dot: int = 0,
                       center=(0.0, 0.0, 0.0),
                       constants: PhysicalConstants = DEFAULT_CONSTANTS) -> SpinBath:
    """GaAs nuclear bath of one dot with contact couplings ``A_n a^3 |f|^2``.

    Cation sites draw Ga69/Ga71 by natural abundance in sorted order. With
    ``max_sites`` only the most strongly coupled sites are retained.
    ``dot=1`` flips the coupling sign (second dot enters as ``-h2``) and
    ``center`` shifts positions without changing couplings.
    """
    if not 0.0 < cutoff <= 1.0:
        raise ValueError(f"cutoff must lie in (0, 1], got {cutoff}")
    a = constants.gaas_lattice_nm if lattice_const is None else lattice_const
    pts, anion = zincblende_sites(envelope, a, cutoff)
    if len(pts) == 0:
        raise EmptyBathError(f"no lattice site above density cutoff {cutoff}")
    iso = constants.isotopes
    rng = np.random.default_rng(seed)
    u = rng.random(len(pts))
    ga69 = iso["Ga69"].abundance / (iso["Ga69"].abundance + iso["Ga71"].abundance)
    species = np.where(anion, "As75", np.where(u < ga69, "Ga69", "Ga71"))
    a_n = np.array([iso[s].hyperfine_khz for s in species])
    coupling = a_n * a**3 * envelope_density(pts, envelope)
    if max_sites is not None and len(pts) > max_sites:
        # strongest first; stable so equal couplings keep distance order
        keep = np.sort(np.argsort(-coupling, kind="stable")[:max_sites])
        pts, species, coupling = pts[keep], species[keep], coupling[keep]
    # Overhauser variance of the sites not kept: continuum sum of a_j^2 over
    # all sites minus the kept ones, times <m^2> = I(I+1)/3 for I = 3/2
    i4 = 3.0 / (4 * math.pi * envelope.L_z * envelope.rho_0**2)
    ga2 = (iso["Ga69"].abundance * iso["Ga69"].hyperfine_khz**2
           + iso["Ga71"].abundance * iso["Ga71"].hyperfine_khz**2) / (iso["Ga69"].abundance + iso["Ga71"].abundance)
    s_all = (4.0 / a**3) * a**6 * i4 * (iso["As75"].hyperfine_khz**2 + ga2)
    remainder_var = 1.25 * max(s_all - float(np.sum(coupling**2)), 0.0)
    n = len(pts)
    sign = -1.0 if dot else 1.0
    hyperfine = np.zeros((n, 3))
    hyperfine[:, 2] = sign * coupling
    return SpinBath(
        positions=pts + np.asarray(center, dtype=float),
        species=tuple(str(s) for s in species),
        gammas=np.array([iso[s].gamma_khz_per_gauss for s in species]),
        spins=np.array([iso[s].spin for s in species]),
        hyperfine=hyperfine,
        groups=np.full(n, dot, dtype=int),
        scenario="dqd",
        seed=int(seed),
        metadata={"L_z_nm": envelope.L_z, "rho_0_nm": envelope.rho_0, "lattice_nm": a,
                  "cutoff": cutoff, "max_sites": max_sites, "dot": dot,
                  "remainder_variance_khz2": remainder_var},
    )


def merge_baths(baths: list[SpinBath], scenario: str | None = None) -> SpinBath:
    """Concatenate independent baths, keeping their group labels."""
    return SpinBath(
        positions=np.vstack([b.positions for b in baths]),
        species=sum((b.species for b in baths), ()),
        gammas=np.concatenate([b.gammas for b in baths]),
        spins=np.concatenate([b.spins for b in baths]),
        hyperfine=np.vstack([b.hyperfine for b in baths]),
        groups=np.concatenate([b.groups for b in baths]),
        scenario=scenario or baths[0].scenario,
        seed=baths[0].seed,
        metadata={"parts": [dict(b.metadata, seed=b.seed) for b in baths]},
    )


def generate_double_dot_bath(seeds: tuple[int, int], envelope: DotEnvelope = DotEnvelope(),
                             cutoff: float = 0.5, max_sites: int | None = 2000,
                             separation: float = 100.0,
                             constants: PhysicalConstants = DEFAULT_CONSTANTS) -> SpinBath:
    """Two independent dot baths; the second is displaced along x."""
    dots = [
        generate_gaas_bath(seeds[i], envelope, cutoff=cutoff, max_sites=max_sites, dot=i,
                           center=(separation * i, 0.0, 0.0), constants=constants)
        for i in range(2)
    ]
    return merge_baths(dots, "dqd")
