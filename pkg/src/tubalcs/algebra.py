"""Tensor algebra of the t-SVD framework.

Tensors are plain ``numpy`` arrays of shape ``(n1, n2, n3)``.  Flattened with
``order='F'`` they follow the on-disk linearization: column-major inside each
``n1 x n2`` frontal slice, frontal slices stored one after the other.

The spectral representation is a complex array of shape ``(n3, n1, n2)``:
``spec[k]`` is the k-th frontal slice after a DFT along every tube.  Putting
the frequency axis first lets ``numpy`` batch matrix operations over slices.
All products and factorizations run slice by slice in that domain; the
explicit block-circulant matrix is only built by :func:`bcirc_oracle`.
"""

from typing import NamedTuple

import numpy as np

from .errors import (
    DimensionMismatch,
    NotOrthogonal,
    SymmetryViolation,
    TooLarge,
    ZeroTensor,
)

__all__ = [
    "TSvdFactors",
    "TQrFactors",
    "as_tensor3",
    "dft_tubes",
    "idft_tubes",
    "t_product",
    "conj_transpose",
    "identity",
    "t_qr",
    "t_svd",
    "tubal_rank",
    "spectral_norm",
    "condition_number",
    "subspace_distance",
    "orthogonality_error",
    "bcirc_oracle",
    "unfold",
    "fold",
]

SYMMETRY_TOL = 1e-8
BCIRC_MAX_ENTRIES = 10**7


class TSvdFactors(NamedTuple):
    U: np.ndarray
    S: np.ndarray
    V: np.ndarray

    @property
    def rho(self):
        return self.S.shape[0]


class TQrFactors(NamedTuple):
    Q: np.ndarray
    R: np.ndarray


def as_tensor3(a, name="tensor"):
    """Validate ``a`` as a finite real third-order tensor and return it as float64."""
    arr = np.asarray(a)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3:
        raise DimensionMismatch(f"{name} must be 3-dimensional, got shape {arr.shape}")
    if min(arr.shape) < 1:
        raise DimensionMismatch(f"{name} has an empty dimension: {arr.shape}")
    if np.iscomplexobj(arr):
        raise TypeError(f"{name} must be real")
    arr = arr.astype(np.float64, copy=False)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or Inf")
    return arr


def dft_tubes(t):
    """DFT along every tube; returns the ``(n3, n1, n2)`` spectral stack."""
    t = np.asarray(t, dtype=np.float64)
    return np.ascontiguousarray(np.moveaxis(np.fft.fft(t, axis=2), 2, 0))


def _symmetry_residual(s):
    n3 = s.shape[0]
    mirror = np.conj(s[(-np.arange(n3)) % n3])
    return np.linalg.norm(s - mirror), np.linalg.norm(s)


def idft_tubes(s, tol=SYMMETRY_TOL):
    """Inverse of :func:`dft_tubes`.

    Raises :class:`SymmetryViolation` when the stack is not conjugate symmetric
    (relative residual above ``tol``); otherwise the imaginary part of the
    inverse transform is dropped.
    """
    s = np.asarray(s)
    resid, total = _symmetry_residual(s)
    if resid > tol * max(total, 1e-300):
        raise SymmetryViolation(
            f"spectral stack is not conjugate symmetric (relative residual {resid / total:.3e})"
        )
    return np.ascontiguousarray(np.fft.ifft(np.moveaxis(s, 0, 2), axis=2).real)


def _mirror(half, n3):
    """Complete a stack of slices ``0..n3//2`` using conjugate symmetry."""
    full = np.empty((n3,) + half.shape[1:], dtype=np.complex128)
    nh = n3 // 2 + 1
    full[:nh] = half[:nh]
    if n3 > 1:
        k = np.arange(nh, n3)
        full[nh:] = np.conj(half[n3 - k])
    # slice 0 and the Nyquist slice of a real tensor are real
    full[0] = full[0].real
    if n3 % 2 == 0:
        full[n3 // 2] = full[n3 // 2].real
    return full


def t_product(a, b):
    """t-product ``a * b`` of an ``n1 x n2 x n3`` and an ``n2 x n4 x n3`` tensor."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 3 or b.ndim != 3:
        raise DimensionMismatch("t_product expects third-order tensors")
    if a.shape[1] != b.shape[0] or a.shape[2] != b.shape[2]:
        raise DimensionMismatch(f"cannot t-multiply {a.shape} by {b.shape}")
    return idft_tubes(dft_tubes(a) @ dft_tubes(b))


def conj_transpose(a):
    """Transpose every frontal slice and reverse slices ``2..n3``."""
    a = np.asarray(a)
    n3 = a.shape[2]
    order = (-np.arange(n3)) % n3
    return np.ascontiguousarray(np.transpose(a, (1, 0, 2))[:, :, order])


def identity(n, n3):
    eye = np.zeros((n, n, n3))
    eye[:, :, 0] = np.eye(n)
    return eye


def _slice_qr(mats):
    """Reduced QR of each slice with real nonnegative diagonal in R."""
    q, r = np.linalg.qr(mats)
    d = np.diagonal(r, axis1=-2, axis2=-1)
    mag = np.abs(d)
    phase = np.where(mag > 0, d / np.where(mag > 0, mag, 1.0), 1.0)
    q = q * phase[..., None, :]
    r = r * np.conj(phase)[..., :, None]
    return q, r


def t_qr(a, exploit_symmetry=True):
    """Skinny t-QR ``a = Q * R`` with ``Q`` of width ``n2``.

    Each spectral slice of ``R`` is upper triangular with a real nonnegative
    diagonal, which pins down the factorization whenever ``a`` has full
    column rank in every slice.
    """
    a = as_tensor3(a)
    n1, n2, n3 = a.shape
    if n1 < n2:
        raise DimensionMismatch(f"skinny t-QR needs n1 >= n2, got {n1} x {n2}")
    spec = dft_tubes(a)
    if exploit_symmetry:
        q, r = _slice_qr(spec[: n3 // 2 + 1])
        q, r = _mirror(q, n3), _mirror(r, n3)
    else:
        q, r = _slice_qr(spec)
    return TQrFactors(idft_tubes(q), idft_tubes(r))


def _fix_phase(u, vh):
    # make the largest-magnitude entry of each left singular vector real positive
    pivot = np.argmax(np.abs(u), axis=-2)[..., None, :]
    lead = np.take_along_axis(u, pivot, axis=-2)
    mag = np.abs(lead)
    phase = np.where(mag > 0, np.conj(lead) / np.where(mag > 0, mag, 1.0), 1.0)
    return u * phase, vh * np.conj(np.swapaxes(phase, -1, -2))


def _slice_svd(spec, exploit_symmetry):
    n3 = spec.shape[0]
    stack = spec[: n3 // 2 + 1] if exploit_symmetry else spec
    u, s, vh = np.linalg.svd(stack, full_matrices=False)
    # slices 0 and n3/2 are real; with repeated singular values a complex SVD
    # may rotate inside the eigenspace, so redo them in real arithmetic
    for k in {0, n3 // 2} if n3 % 2 == 0 else {0}:
        u[k], s[k], vh[k] = np.linalg.svd(spec[k].real, full_matrices=False)
    u, vh = _fix_phase(u, vh)
    if exploit_symmetry:
        return _mirror(u, n3), _mirror(s.astype(np.complex128), n3).real, _mirror(vh, n3)
    return u, s, vh


def t_svd(a, rank=None, exploit_symmetry=True):
    """Skinny t-SVD ``a = U * S * V^c``.

    ``rank`` truncates to the leading ``rank`` singular tubes; the default keeps
    ``min(n1, n2)``.  Spectral singular values come out nonincreasing in every
    slice.
    """
    a = as_tensor3(a)
    n1, n2, n3 = a.shape
    rho = min(n1, n2)
    if rank is not None:
        if not 0 <= rank <= rho:
            raise ValueError(f"rank must lie in [0, {rho}], got {rank}")
        rho = rank
    u, s, vh = _slice_svd(dft_tubes(a), exploit_symmetry)
    u = u[:, :, :rho]
    v = np.conj(np.swapaxes(vh, 1, 2))[:, :, :rho]
    sdiag = np.zeros((n3, rho, rho), dtype=np.complex128)
    idx = np.arange(rho)
    sdiag[:, idx, idx] = s[:, :rho]
    return TSvdFactors(idft_tubes(u), idft_tubes(sdiag), idft_tubes(v))


def _spectral_singular_values(a):
    return np.linalg.svd(dft_tubes(as_tensor3(a)), compute_uv=False)


def tubal_rank(a, tol=1e-8):
    """Number of singular tubes whose norm exceeds ``tol`` times the largest one."""
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    sv = _spectral_singular_values(a)
    # Parseval: the tube S(i,i,:) has norm sqrt(sum_k s_k^2 / n3)
    tube_norms = np.sqrt(np.sum(sv**2, axis=0) / sv.shape[0])
    top = tube_norms.max(initial=0.0)
    if top == 0:
        return 0
    return int(np.count_nonzero(tube_norms > tol * top))


def spectral_norm(a):
    return float(_spectral_singular_values(a).max(initial=0.0))


def condition_number(a, tol=1e-10):
    sv = _spectral_singular_values(a).ravel()
    top = sv.max(initial=0.0)
    if top == 0:
        raise ZeroTensor("condition number of the zero tensor is undefined")
    return float(top / sv[sv > tol * top].min())


def orthogonality_error(u):
    """Largest entry of ``|u^c * u - I|``."""
    u = as_tensor3(u)
    gram = t_product(conj_transpose(u), u)
    return float(np.abs(gram - identity(u.shape[1], u.shape[2])).max())


def subspace_distance(u1, u2, check_tol=1e-6):
    """Principal angle distance ``||(I - u1 * u1^c) * u2||``."""
    u1 = as_tensor3(u1, "u1")
    u2 = as_tensor3(u2, "u2")
    if u1.shape[0] != u2.shape[0] or u1.shape[2] != u2.shape[2]:
        raise DimensionMismatch(f"incompatible bases {u1.shape} and {u2.shape}")
    for name, u in (("u1", u1), ("u2", u2)):
        err = orthogonality_error(u)
        if err > check_tol:
            raise NotOrthogonal(f"{name} is not orthogonal (max deviation {err:.2e})")
    s1, s2 = dft_tubes(u1), dft_tubes(u2)
    resid = s2 - s1 @ (np.conj(np.swapaxes(s1, 1, 2)) @ s2)
    return float(np.linalg.svd(resid, compute_uv=False).max(initial=0.0))


def unfold(a):
    """Stack the frontal slices vertically: ``(n1 * n3) x n2``."""
    a = np.asarray(a)
    return np.concatenate([a[:, :, k] for k in range(a.shape[2])], axis=0)


def fold(mat, n1, n3):
    mat = np.asarray(mat)
    if mat.shape[0] != n1 * n3:
        raise DimensionMismatch(f"cannot fold {mat.shape[0]} rows into {n1} x {n3}")
    return np.stack([mat[k * n1:(k + 1) * n1] for k in range(n3)], axis=2)


def bcirc_oracle(a):
    """Explicit block-circulant matrix; for tests at desk scale only."""
    a = np.asarray(a, dtype=np.float64)
    n1, n2, n3 = a.shape
    if n1 * n3 * n2 * n3 > BCIRC_MAX_ENTRIES:
        raise TooLarge(f"bcirc of {a.shape} would hold {n1 * n2 * n3 * n3} entries")
    out = np.empty((n1 * n3, n2 * n3))
    for row in range(n3):
        for col in range(n3):
            out[row * n1:(row + 1) * n1, col * n2:(col + 1) * n2] = a[:, :, (row - col) % n3]
    return out
