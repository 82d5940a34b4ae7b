"""Neumann cosine eigenbasis on intervals and rectangles.

Fields are stored as coefficients with respect to the L2-orthonormal
eigenfunctions of -Laplace with homogeneous Neumann conditions,

    phi_0 = 1/sqrt(L),  phi_j(x) = sqrt(2/L) cos(j pi x / L),  j >= 1,

tensorised on rectangles (row-major in (jx, jy)).  Grid values live on the
uniform midpoint grid with ``oversample * k`` nodes per axis, on which the
midpoint rule integrates products of two resolved modes exactly.
"""

from __future__ import annotations

import io
import math
import struct
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np
import scipy.fft

__all__ = [
    "Domain",
    "SpectralBasis",
    "SpectralField",
    "basis_eigenpair",
    "get_basis",
    "to_grid",
    "from_grid",
    "derivative",
    "inner_product_with_grad_basis",
    "pad_coeffs",
    "write_field",
    "read_field",
    "FIELD_MAGIC",
]

FIELD_MAGIC = b"XDIF"
FIELD_VERSION = 1
_SHAPE_TAGS = {"interval": 1, "rectangle": 2}


@dataclass(frozen=True)
class Domain:
    shape: str = "interval"
    lengths: tuple = (math.pi,)
    oversample: int = 3

    def __post_init__(self):
        object.__setattr__(self, "lengths", tuple(float(x) for x in self.lengths))
        if self.shape not in _SHAPE_TAGS:
            raise ValueError(f"unknown domain shape {self.shape!r}")
        if len(self.lengths) != _SHAPE_TAGS[self.shape]:
            raise ValueError(f"{self.shape} needs {_SHAPE_TAGS[self.shape]} side length(s)")
        if not all(x > 0 for x in self.lengths):
            raise ValueError("side lengths must be positive")
        if int(self.oversample) != self.oversample or self.oversample < 2:
            raise ValueError("oversample must be an integer >= 2")

    @classmethod
    def interval(cls, L: float = math.pi, oversample: int = 3) -> "Domain":
        return cls("interval", (L,), oversample)

    @classmethod
    def rectangle(cls, Lx: float, Ly: float, oversample: int = 3) -> "Domain":
        return cls("rectangle", (Lx, Ly), oversample)

    @property
    def ndim(self) -> int:
        return len(self.lengths)

    @property
    def volume(self) -> float:
        return float(np.prod(self.lengths))

    def to_dict(self) -> dict:
        return {"shape": self.shape, "lengths": list(self.lengths), "oversample": self.oversample}


def _axis_nodes(L: float, N: int):
    h = L / N
    return (np.arange(N) + 0.5) * h, h


def _norm(j, L):
    return np.where(np.asarray(j) == 0, 1.0 / math.sqrt(L), math.sqrt(2.0 / L))


def basis_eigenpair(domain: Domain, j) -> tuple[Callable, float]:
    """Return ``(phi_j, lambda_j)``; ``phi_j`` takes one coordinate array per axis."""
    j = tuple(int(a) for a in np.atleast_1d(j))
    if len(j) != domain.ndim or any(a < 0 for a in j):
        raise ValueError(f"multi-index {j} does not fit a {domain.ndim}-d domain")
    eig = sum((a * math.pi / L) ** 2 for a, L in zip(j, domain.lengths))

    def phi(*xs):
        out = 1.0
        for a, L, x in zip(j, domain.lengths, xs):
            out = out * _norm(a, L) * np.cos(a * math.pi * np.asarray(x, dtype=float) / L)
        return out

    return phi, eig


class _Axis:
    """Per-axis cosine/sine tables on the midpoint grid."""

    def __init__(self, L: float, k: int, oversample: int):
        self.L, self.k = L, k
        self.N = oversample * k
        self.x, self.h = _axis_nodes(L, self.N)
        j = np.arange(k)
        self.wavenumber = j * math.pi / L
        self.eig = self.wavenumber**2
        self.norm = _norm(j, L)
        arg = np.outer(self.x, self.wavenumber)
        self.C = self.norm * np.cos(arg)  # phi_j(x_n)
        self.dC = -self.norm * self.wavenumber * np.sin(arg)  # phi_j'(x_n)
        self.dC[:, 0] = 0.0


class SpectralBasis:
    """Transforms between coefficients and midpoint-grid values.

    ``method="matrix"`` sums the cosine series directly; ``method="dct"``
    uses scipy's type II/III cosine and sine transforms.  Both agree to
    rounding and are cross-checked in the test suite.
    """

    def __init__(self, domain: Domain, k: int, method: str = "matrix"):
        if method not in ("matrix", "dct"):
            raise ValueError(f"unknown transform method {method!r}")
        if k < 1:
            raise ValueError("k must be positive")
        self.domain, self.k, self.method = domain, int(k), method
        self.axes = [_Axis(L, self.k, domain.oversample) for L in domain.lengths]
        self.ndim = domain.ndim
        self.coeff_shape = (self.k,) * self.ndim
        self.grid_shape = tuple(a.N for a in self.axes)
        self.cell = float(np.prod([a.h for a in self.axes]))
        if self.ndim == 1:
            self.eigenvalues = self.axes[0].eig.copy()
        else:
            self.eigenvalues = self.axes[0].eig[:, None] + self.axes[1].eig[None, :]
        self.lambda_max = float(np.max(self.eigenvalues))

    # ---- coordinates and quadrature
    def grid(self):
        xs = [a.x for a in self.axes]
        return xs[0] if self.ndim == 1 else np.meshgrid(*xs, indexing="ij")

    def integrate(self, values) -> float:
        return float(np.sum(values) * self.cell)

    def _check_coeffs(self, w):
        w = np.asarray(w, dtype=float)
        if w.shape != self.coeff_shape:
            raise ValueError(f"coefficient array has shape {w.shape}, expected {self.coeff_shape}")
        return w

    def _check_grid(self, v):
        v = np.asarray(v, dtype=float)
        if v.shape != self.grid_shape:
            raise ValueError(f"grid array has shape {v.shape}, expected {self.grid_shape}")
        return v

    # ---- 1-axis kernels
    def _synth(self, ax: _Axis, w, axis: int, deriv: bool):
        """Evaluate sum_j w_j phi_j (or phi_j') along ``axis``."""
        if self.method == "matrix":
            M = ax.dC if deriv else ax.C
            return np.moveaxis(np.tensordot(M, w, axes=([1], [axis])), 0, axis)
        w = np.moveaxis(w, axis, -1)
        pad = np.zeros(w.shape[:-1] + (ax.N,))
        if deriv:
            b = -(ax.norm * ax.wavenumber * w)[..., 1:]
            pad[..., : ax.k - 1] = 0.5 * b
            out = scipy.fft.dst(pad, type=3, axis=-1)
        else:
            c = ax.norm * w
            pad[..., : ax.k] = 0.5 * c
            pad[..., 0] = c[..., 0]
            out = scipy.fft.dct(pad, type=3, axis=-1)
        return np.moveaxis(out, -1, axis)

    def _analyse(self, ax: _Axis, v, axis: int, deriv: bool):
        """Compute sum_n v_n phi_j(x_n) (or phi_j'(x_n)) along ``axis`` (no weights)."""
        if self.method == "matrix":
            M = ax.dC if deriv else ax.C
            return np.moveaxis(np.tensordot(M.T, v, axes=([1], [axis])), 0, axis)
        v = np.moveaxis(v, axis, -1)
        if deriv:
            s = 0.5 * scipy.fft.dst(v, type=2, axis=-1)[..., : ax.k - 1]
            out = np.zeros(v.shape[:-1] + (ax.k,))
            out[..., 1:] = -(ax.norm * ax.wavenumber)[1:] * s
        else:
            out = ax.norm * 0.5 * scipy.fft.dct(v, type=2, axis=-1)[..., : ax.k]
        return np.moveaxis(out, -1, axis)

    # ---- public transforms
    def to_grid(self, w):
        out = self._check_coeffs(w)
        for a, ax in enumerate(self.axes):
            out = self._synth(ax, out, a, False)
        return out

    def from_grid(self, values):
        out = self._check_grid(values)
        for a, ax in enumerate(self.axes):
            out = self._analyse(ax, out, a, False)
        return out * self.cell

    def gradient(self, w):
        """Grid samples of grad(sum w_j phi_j), shape ``(ndim, *grid)``."""
        w = self._check_coeffs(w)
        comps = []
        for d in range(self.ndim):
            out = w
            for a, ax in enumerate(self.axes):
                out = self._synth(ax, out, a, a == d)
            comps.append(out)
        return np.stack(comps)

    def laplacian_coeffs(self, w):
        return -self.eigenvalues * self._check_coeffs(w)

    def laplacian(self, w):
        return self.to_grid(self.laplacian_coeffs(w))

    def grad_laplacian(self, w):
        return self.gradient(self.laplacian_coeffs(w))

    def inner_grad(self, V):
        """(int V . grad phi_i)_i for a vector field sampled on the grid."""
        V = np.asarray(V, dtype=float)
        if V.shape != (self.ndim,) + self.grid_shape:
            raise ValueError(f"vector field has shape {V.shape}, expected {(self.ndim,) + self.grid_shape}")
        total = np.zeros(self.coeff_shape)
        for d in range(self.ndim):
            out = V[d]
            for a, ax in enumerate(self.axes):
                out = self._analyse(ax, out, a, a == d)
            total = total + out
        return total * self.cell

    def sample(self, func: Callable):
        """Evaluate ``func`` (one coordinate array per axis) on the grid."""
        xs = self.grid()
        if self.ndim == 1:
            return np.asarray(func(xs), dtype=float) * np.ones(self.grid_shape)
        return np.asarray(func(*xs), dtype=float) * np.ones(self.grid_shape)


@lru_cache(maxsize=64)
def get_basis(domain: Domain, k: int, method: str = "matrix") -> SpectralBasis:
    return SpectralBasis(domain, k, method)


@dataclass
class SpectralField:
    domain: Domain
    coeffs: np.ndarray
    _grid_cache: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.ndim != self.domain.ndim or len(set(self.coeffs.shape)) != 1:
            raise ValueError("coefficients must be a k-vector (1D) or k-by-k array (2D)")

    @property
    def k(self) -> int:
        return self.coeffs.shape[0]

    @property
    def basis(self) -> SpectralBasis:
        return get_basis(self.domain, self.k)

    def values(self):
        if self._grid_cache is None:
            self._grid_cache = self.basis.to_grid(self.coeffs)
        return self._grid_cache

    def l2_norm(self) -> float:
        return float(np.linalg.norm(self.coeffs))

    def mass(self) -> float:
        return float(self.coeffs.flat[0] * math.sqrt(self.domain.volume))


def to_grid(fld: SpectralField):
    return fld.values()


def from_grid(domain: Domain, k: int, values) -> SpectralField:
    return SpectralField(domain, get_basis(domain, k).from_grid(values))


def derivative(fld: SpectralField, order: str):
    b = fld.basis
    if order == "grad":
        return b.gradient(fld.coeffs)
    if order == "laplacian":
        return b.laplacian(fld.coeffs)
    if order == "grad_laplacian":
        return b.grad_laplacian(fld.coeffs)
    raise ValueError(f"unknown derivative order {order!r}")


def inner_product_with_grad_basis(V, domain: Domain, k: int):
    return get_basis(domain, k).inner_grad(V)


def pad_coeffs(w, k: int):
    """Embed coefficients into a larger space X_k (zero tail) or truncate to it."""
    w = np.asarray(w, dtype=float)
    out = np.zeros((k,) * w.ndim)
    sl = tuple(slice(0, min(k, s)) for s in w.shape)
    out[sl] = w[sl]
    return out


# ---- binary field format


def _pack_field(fld: SpectralField) -> bytes:
    d = fld.domain
    buf = io.BytesIO()
    buf.write(struct.pack("<4sII", FIELD_MAGIC, FIELD_VERSION, _SHAPE_TAGS[d.shape]))
    buf.write(struct.pack(f"<{d.ndim}I", *fld.coeffs.shape))
    buf.write(struct.pack(f"<{d.ndim}d", *d.lengths))
    buf.write(np.ascontiguousarray(fld.coeffs, dtype="<f8").tobytes(order="C"))
    return buf.getvalue()


def write_field(stream, fld: SpectralField) -> None:
    """Write ``fld`` in the little-endian XDIF field format."""
    stream.write(_pack_field(fld))


def _read_exact(stream, n):
    data = stream.read(n)
    if len(data) != n:
        raise EOFError("truncated field record")
    return data


def read_field(stream, oversample: int = 3) -> SpectralField:
    magic, version, tag = struct.unpack("<4sII", _read_exact(stream, 12))
    if magic != FIELD_MAGIC:
        raise ValueError(f"bad field magic {magic!r}")
    if version != FIELD_VERSION:
        raise ValueError(f"unsupported field version {version}")
    shape = {v: s for s, v in _SHAPE_TAGS.items()}.get(tag)
    if shape is None:
        raise ValueError(f"unknown shape tag {tag}")
    ndim = _SHAPE_TAGS[shape]
    ks = struct.unpack(f"<{ndim}I", _read_exact(stream, 4 * ndim))
    Ls = struct.unpack(f"<{ndim}d", _read_exact(stream, 8 * ndim))
    count = int(np.prod(ks))
    coeffs = np.frombuffer(_read_exact(stream, 8 * count), dtype="<f8").reshape(ks).astype(float)
    return SpectralField(Domain(shape, Ls, oversample), coeffs)


def field_from_sampler(domain: Domain, k: int, func: Callable) -> SpectralField:
    b = get_basis(domain, k)
    return SpectralField(domain, b.from_grid(b.sample(func)))

