"""Spin operators, tensor-product embedding and Hermitian propagators.

All matrices are dense ``complex128`` numpy arrays. Hamiltonians passed to
the propagator helpers are in angular units (rad/ms) and times in ms.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

#: Largest product-space dimension any embedded operator may have.
MAX_EMBED_DIM = 2**16

HERMITIAN_RTOL = 1e-12


class SpinOpsError(ValueError):
    """Invalid argument passed to a spin-operator helper."""


@dataclass(frozen=True)
class SpinOperators:
    spin: float
    sx: np.ndarray
    sy: np.ndarray
    sz: np.ndarray

    @property
    def dim(self) -> int:
        return self.sz.shape[0]

    @property
    def vector(self) -> np.ndarray:
        """Stacked ``(3, d, d)`` array ``[sx, sy, sz]``."""
        return np.stack([self.sx, self.sy, self.sz])


def _check_spin(s: float) -> int:
    two_s = 2 * s
    if two_s <= 0 or abs(two_s - round(two_s)) > 1e-12:
        raise SpinOpsError(f"spin must be a positive half-integer, got {s!r}")
    return int(round(two_s))


@lru_cache(maxsize=None)
def _spin_matrices(two_s: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    s = two_s / 2
    m = s - np.arange(two_s + 1)
    # <m+1|S+|m> = sqrt(s(s+1) - m(m+1)), basis ordered m = s, s-1, ..., -s
    splus = np.diag(np.sqrt(s * (s + 1) - m[1:] * (m[1:] + 1)), k=1).astype(complex)
    sminus = splus.conj().T
    sx = 0.5 * (splus + sminus)
    sy = -0.5j * (splus - sminus)
    sz = np.diag(m).astype(complex)
    for a in (sx, sy, sz):
        a.flags.writeable = False
    return sx, sy, sz


def spin_operators(s: float) -> SpinOperators:
    """Return the angular-momentum matrices for spin ``s``.

    The basis is ordered by descending projection, ``m = s, s-1, ..., -s``.

    >>> spin_operators(0.5).sz.real.diagonal().tolist()
    [0.5, -0.5]
    """
    two_s = _check_spin(s)
    sx, sy, sz = _spin_matrices(two_s)
    return SpinOperators(two_s / 2, sx, sy, sz)


def projections(s: float) -> np.ndarray:
    """Projection quantum numbers ``s, s-1, ..., -s``."""
    two_s = _check_spin(s)
    return two_s / 2 - np.arange(two_s + 1)


def embed(op: np.ndarray, site_index: int, local_dims: list[int]) -> np.ndarray:
    """Embed a single-site operator into the tensor-product space.

    Returns ``1 x ... x op x ... x 1`` with ``op`` at ``site_index``.
    """
    local_dims = [int(d) for d in local_dims]
    if not 0 <= site_index < len(local_dims):
        raise SpinOpsError(f"site index {site_index} outside {len(local_dims)} sites")
    op = np.asarray(op)
    if op.shape != (local_dims[site_index],) * 2:
        raise SpinOpsError(
            f"operator shape {op.shape} does not match local dimension "
            f"{local_dims[site_index]} of site {site_index}"
        )
    total = int(np.prod(local_dims, dtype=np.int64))
    if total > MAX_EMBED_DIM:
        raise SpinOpsError(f"product space dimension {total} exceeds cap {MAX_EMBED_DIM}")
    left = int(np.prod(local_dims[:site_index], dtype=np.int64))
    right = int(np.prod(local_dims[site_index + 1:], dtype=np.int64))
    return np.kron(np.kron(np.eye(left), op), np.eye(right))


def is_hermitian(h: np.ndarray, rtol: float = HERMITIAN_RTOL) -> bool:
    h = np.asarray(h)
    scale = max(np.abs(h).max(initial=0.0), 1.0)
    return bool(np.abs(h - h.conj().swapaxes(-1, -2)).max(initial=0.0) <= rtol * scale)


def eigh_hermitian(h: np.ndarray, rtol: float = HERMITIAN_RTOL) -> tuple[np.ndarray, np.ndarray]:
    """``numpy.linalg.eigh`` after checking Hermiticity; works on stacks."""
    h = np.asarray(h, dtype=complex)
    if not is_hermitian(h, rtol):
        raise SpinOpsError("matrix is not Hermitian within tolerance")
    return np.linalg.eigh(h)


def expm_i(h: np.ndarray, t: float, sign: int = -1) -> np.ndarray:
    """``exp(sign * i * H * t)`` for Hermitian ``H`` via eigendecomposition."""
    if sign not in (1, -1):
        raise SpinOpsError(f"sign must be +1 or -1, got {sign!r}")
    w, v = eigh_hermitian(h)
    phase = np.exp(sign * 1j * w * t)
    return (v * phase[..., None, :]) @ v.conj().swapaxes(-1, -2)


def batched_kron(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Kronecker product over the last two axes with broadcasting batch axes."""
    a = np.asarray(a)
    b = np.asarray(b)
    out = a[..., :, None, :, None] * b[..., None, :, None, :]
    shape = out.shape
    return out.reshape(shape[:-4] + (shape[-4] * shape[-3], shape[-2] * shape[-1]))


def kron_chain(factors: list[np.ndarray]) -> np.ndarray:
    """Batched Kronecker product of a list of (possibly stacked) matrices."""
    out = factors[0]
    for f in factors[1:]:
        out = batched_kron(out, f)
    return out
