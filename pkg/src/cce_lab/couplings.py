"""Vectorized point-dipole and contact coupling formulas.

Everything here works on plain arrays: positions in nm, gyromagnetic ratios
in kHz/G, couplings returned in kHz.
"""

from __future__ import annotations

import numpy as np

from .constants import DEFAULT_CONSTANTS, PhysicalConstants

Z_AXIS = np.array([0.0, 0.0, 1.0])


def dipolar_tensors(displacement, gamma_1, gamma_2,
                    constants: PhysicalConstants = DEFAULT_CONSTANTS) -> np.ndarray:
    """Point-dipole tensors ``k g1 g2 / r^3 (1 - 3 rhat rhat)`` in kHz.

    ``displacement`` has shape ``(..., 3)``; result has shape ``(..., 3, 3)``.
    """
    r_vec = np.asarray(displacement, dtype=float)
    r = np.linalg.norm(r_vec, axis=-1)
    if np.any(r == 0):
        raise ZeroDivisionError("coincident positions in dipolar coupling")
    rhat = r_vec / r[..., None]
    pref = constants.dipolar_prefactor(1.0, 1.0) * np.asarray(gamma_1) * np.asarray(gamma_2) / r**3
    dyad = np.eye(3) - 3.0 * rhat[..., :, None] * rhat[..., None, :]
    return pref[..., None, None] * dyad


def hyperfine_vectors(positions, gamma_n, gamma_e: float | None = None, nv_axis=Z_AXIS,
                      constants: PhysicalConstants = DEFAULT_CONSTANTS) -> np.ndarray:
    """Axis row of the electron-nuclear point-dipole tensor, shape ``(N, 3)``.

    Contact hyperfine is not included.
    """
    if gamma_e is None:
        gamma_e = constants.gamma_e_nv
    axis = np.asarray(nv_axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    tensors = dipolar_tensors(positions, gamma_e, gamma_n, constants)
    return np.einsum("i,...ij->...j", axis, tensors)


def secular_coefficient(displacement, gamma_1, gamma_2,
                        constants: PhysicalConstants = DEFAULT_CONSTANTS) -> np.ndarray:
    """High-field coefficient ``k g1 g2 / r^3 (1 - 3 cos^2 theta)`` in kHz."""
    r_vec = np.asarray(displacement, dtype=float)
    r = np.linalg.norm(r_vec, axis=-1)
    if np.any(r == 0):
        raise ZeroDivisionError("coincident positions in dipolar coupling")
    cos2 = (r_vec[..., 2] / r) ** 2
    pref = constants.dipolar_prefactor(1.0, 1.0) * np.asarray(gamma_1) * np.asarray(gamma_2) / r**3
    return pref * (1.0 - 3.0 * cos2)


def secular_tensors(coefficient, same_species) -> np.ndarray:
    """Express secular pair couplings as ``I_i . T . I_j`` tensors.

    Homo-nuclear: ``(D/2)(3 Iz Iz - I.I)`` gives ``diag(-D/2, -D/2, D)``.
    Hetero-nuclear: ``D Iz Iz`` gives ``diag(0, 0, D)``.
    """
    d = np.asarray(coefficient, dtype=float)
    same = np.asarray(same_species, dtype=bool)
    out = np.zeros(d.shape + (3, 3))
    out[..., 2, 2] = d
    out[..., 0, 0] = np.where(same, -0.5 * d, 0.0)
    out[..., 1, 1] = out[..., 0, 0]
    return out
