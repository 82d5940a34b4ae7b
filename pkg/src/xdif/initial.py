"""Named initial-data presets.

Gaussian bumps are reflected across the walls (method of images), so the
sampled data are even about every wall.  That makes them smooth in the
Neumann cosine basis and keeps their spectral coefficients decaying
geometrically; a plain Gaussian has a nonzero wall slope and its
coefficients only decay like 1/j^2.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .galerkin import prepare_initial_data
from .spectral import Domain, SpectralBasis, get_basis, pad_coeffs, read_field

__all__ = ["Bump", "InitialData", "PRESETS"]

PRESETS = ("constant", "gaussian-bump", "two-bump", "file")
_IMAGES = 4


def _reflected_gaussian(x, c: float, w: float, L: float):
    out = np.zeros_like(np.asarray(x, dtype=float))
    for n in range(-_IMAGES, _IMAGES + 1):
        out = out + np.exp(-((x - c - 2 * n * L) ** 2) / (2 * w * w))
        out = out + np.exp(-((x + c - 2 * n * L) ** 2) / (2 * w * w))
    return out


@dataclass(frozen=True)
class Bump:
    """floor + amplitude * (reflected Gaussian of the given width at center)."""

    center: tuple = (1.0,)
    width: float = 0.4
    amplitude: float = 1.0
    floor: float = 0.5

    def __post_init__(self):
        c = self.center
        object.__setattr__(self, "center", tuple(float(x) for x in (c if isinstance(c, (list, tuple)) else (c,))))
        if not self.width > 0:
            raise ValueError("bump width must be positive")
        if self.amplitude < 0 or self.floor < 0:
            raise ValueError("bump amplitude and floor must be nonnegative")

    def profile(self, domain: Domain, *xs):
        if len(self.center) != domain.ndim:
            raise ValueError(f"bump center needs {domain.ndim} coordinate(s)")
        out = 1.0
        for x, c, L in zip(xs, self.center, domain.lengths):
            out = out * _reflected_gaussian(x, c, self.width, L)
        return out

    def __call__(self, domain: Domain, *xs):
        return self.floor + self.amplitude * self.profile(domain, *xs)

    def to_dict(self) -> dict:
        return {"center": list(self.center), "width": self.width,
                "amplitude": self.amplitude, "floor": self.floor}


@dataclass(frozen=True)
class InitialData:
    """Declarative initial data for (u, v).

    kind = "constant":       u, v constant values
    kind = "gaussian-bump":  one bump per species
    kind = "two-bump":       u gets two bumps (bump_u and bump_u2), v one
    kind = "file":           coefficients read from a field file holding u then v
    """

    kind: str = "gaussian-bump"
    u: float = 1.0
    v: float = 1.0
    bump_u: Bump = field(default_factory=lambda: Bump((1.0,), 0.4, 1.0, 0.5))
    bump_v: Bump = field(default_factory=lambda: Bump((2.2,), 0.4, 0.8, 0.5))
    bump_u2: Optional[Bump] = None
    path: Optional[str] = None
    lift: float = 0.1
    target_mass_u: Optional[float] = None
    target_mass_v: Optional[float] = None

    def __post_init__(self):
        if self.kind not in PRESETS:
            raise ValueError(f"unknown initial-data preset {self.kind!r}; expected one of {PRESETS}")
        if self.kind == "constant" and (self.u < 0 or self.v < 0):
            raise ValueError("constant initial data must be nonnegative")
        if self.kind == "two-bump" and self.bump_u2 is None:
            raise ValueError("two-bump preset needs bump_u2")
        if self.kind == "file" and not self.path:
            raise ValueError("file preset needs a path")
        if not self.lift > 0:
            raise ValueError("lift must be positive")

    def _file_coeffs(self, domain: Domain):
        with open(self.path, "rb") as fh:
            fu = read_field(fh, domain.oversample)
            fv = read_field(fh, domain.oversample)
        if fu.domain.lengths != domain.lengths or fu.domain.shape != domain.shape:
            raise ValueError("field file domain does not match the configured domain")
        return fu.coeffs, fv.coeffs

    def raw(self, domain: Domain, k: int):
        """Raw (u0, v0) sampled on the quadrature grid of X_k."""
        b: SpectralBasis = get_basis(domain, k)
        xs = b.grid()
        xs = (xs,) if domain.ndim == 1 else tuple(xs)
        ones = np.ones(b.grid_shape)
        if self.kind == "constant":
            return self.u * ones, self.v * ones
        if self.kind == "file":
            wu, wv = self._file_coeffs(domain)
            u, v = b.to_grid(pad_coeffs(wu, k)), b.to_grid(pad_coeffs(wv, k))
            return np.maximum(u, 0.0), np.maximum(v, 0.0)
        u = self.bump_u(domain, *xs) * ones
        if self.kind == "two-bump":
            u = u + self.bump_u2.amplitude * self.bump_u2.profile(domain, *xs)
        v = self.bump_v(domain, *xs) * ones
        return u, v

    def prepare(self, domain: Domain, k: int):
        """Coefficients (w0, z0) after projection, lift and mass fix."""
        u, v = self.raw(domain, k)
        targets = None
        if self.target_mass_u is not None or self.target_mass_v is not None:
            b = get_basis(domain, k)
            targets = (self.target_mass_u if self.target_mass_u is not None else b.integrate(u),
                       self.target_mass_v if self.target_mass_v is not None else b.integrate(v))
        return prepare_initial_data(u, v, domain, k, targets, lift=self.lift)

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "lift": self.lift}
        if self.kind == "constant":
            out.update(u=self.u, v=self.v)
        elif self.kind == "file":
            out["path"] = self.path
        else:
            out["bump_u"] = self.bump_u.to_dict()
            out["bump_v"] = self.bump_v.to_dict()
            if self.bump_u2 is not None:
                out["bump_u2"] = self.bump_u2.to_dict()
        if self.target_mass_u is not None:
            out["target_mass_u"] = self.target_mass_u
        if self.target_mass_v is not None:
            out["target_mass_v"] = self.target_mass_v
        return out
