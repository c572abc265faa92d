"""Fourier discretization of the unit torus in one or two dimensions.

Fields are plain ``ndarray`` objects of shape ``grid.shape``; space-time
fields stack them along a leading time axis and vector fields along a
leading component axis.  Fourier coefficients are normalized so that the
coefficient of mode k is the average of ``f exp(-2 pi i k.x)`` over the grid.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np

__all__ = ["TorusGrid"]

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class TorusGrid:
    """Uniform periodic grid with ``n`` points per direction on [0,1)^dim."""

    dim: int
    n: int

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim}")
        if self.n < 8 or self.n % 2:
            raise ValueError(f"n must be even and >= 8, got {self.n}")

    @property
    def spacing(self) -> float:
        return 1.0 / self.n

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.dim

    @property
    def size(self) -> int:
        return self.n**self.dim

    @cached_property
    def coords(self) -> tuple[np.ndarray, ...]:
        """Coordinate arrays (x,) or (x, y), each of shape ``grid.shape``."""
        x = np.arange(self.n) / self.n
        return tuple(np.meshgrid(*([x] * self.dim), indexing="ij"))

    @cached_property
    def modes(self) -> tuple[np.ndarray, ...]:
        """Integer wavenumbers per direction in FFT order, Nyquist at -n/2."""
        k = np.fft.fftfreq(self.n, d=1.0 / self.n)
        return tuple(np.meshgrid(*([k] * self.dim), indexing="ij"))

    @cached_property
    def _deriv_modes(self) -> tuple[np.ndarray, ...]:
        # The Nyquist mode is unresolved for odd derivatives of real data;
        # excluding it everywhere keeps div(grad) identical to the Laplacian.
        k = np.fft.fftfreq(self.n, d=1.0 / self.n)
        k[self.n // 2] = 0.0
        return tuple(np.meshgrid(*([k] * self.dim), indexing="ij"))

    @cached_property
    def k_squared(self) -> np.ndarray:
        """|k|^2 over all modes (Nyquist included), for norms."""
        return sum(k**2 for k in self.modes)

    @cached_property
    def laplacian_symbol(self) -> np.ndarray:
        """Symbol of the spectral Laplacian, -4 pi^2 |k|^2 (Nyquist excluded)."""
        return -(TWO_PI**2) * sum(k**2 for k in self._deriv_modes)

    @cached_property
    def fd_laplacian_symbol(self) -> np.ndarray:
        """Symbol of the second-order centered finite-difference Laplacian."""
        h = self.spacing
        return -sum(4.0 / h**2 * np.sin(np.pi * k * h) ** 2 for k in self.modes)

    def check(self, f: np.ndarray, what: str = "field") -> np.ndarray:
        f = np.asarray(f, dtype=float)
        if f.shape != self.shape:
            raise ValueError(f"{what} has shape {f.shape}, grid expects {self.shape}")
        return f

    # -- transforms -----------------------------------------------------------

    def transform(self, f: np.ndarray) -> np.ndarray:
        """Fourier coefficients of a field (or of a stack of fields)."""
        f = np.asarray(f, dtype=float)
        if f.shape[-self.dim :] != self.shape:
            raise ValueError(f"field trailing shape {f.shape[-self.dim:]} != grid shape {self.shape}")
        axes = tuple(range(-self.dim, 0))
        return np.fft.fftn(f, axes=axes) / self.size

    def inverse_transform(self, F: np.ndarray) -> np.ndarray:
        F = np.asarray(F)
        if F.shape[-self.dim :] != self.shape:
            raise ValueError(f"coefficient trailing shape {F.shape[-self.dim:]} != grid shape {self.shape}")
        axes = tuple(range(-self.dim, 0))
        return np.fft.ifftn(F * self.size, axes=axes).real

    # -- differential operators ----------------------------------------------

    def laplacian(self, f: np.ndarray, sigma: float = 1.0) -> np.ndarray:
        """sigma * Laplacian of f, applied spectrally (stacks allowed)."""
        if sigma < 0:
            raise ValueError("diffusivity must be nonnegative")
        return self.inverse_transform(sigma * self.laplacian_symbol * self.transform(f))

    def gradient(self, f: np.ndarray) -> np.ndarray:
        """Spectral gradient; the component axis is inserted before the space axes."""
        F = self.transform(f)
        comps = [self.inverse_transform(1j * TWO_PI * k * F) for k in self._deriv_modes]
        return np.stack(comps, axis=-self.dim - 1)

    def divergence(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if v.shape[-self.dim - 1] != self.dim:
            raise ValueError(f"vector field needs {self.dim} components on axis {-self.dim - 1}")
        total = 0.0
        for j, k in enumerate(self._deriv_modes):
            comp = np.take(v, j, axis=-self.dim - 1)
            total = total + 1j * TWO_PI * k * self.transform(comp)
        return self.inverse_transform(total)

    # -- norms and diagnostics ------------------------------------------------

    def mean(self, f: np.ndarray) -> np.ndarray:
        """Integral over the unit torus (grid average), over the trailing space axes."""
        return np.mean(f, axis=tuple(range(-self.dim, 0)))

    def bessel_norm(self, f: np.ndarray, mu: float) -> float:
        """L2 Bessel-potential norm with weights (1 + 4 pi^2 |k|^2)^mu."""
        F = self.transform(self.check(f))
        weight = (1.0 + TWO_PI**2 * self.k_squared) ** mu
        return float(np.sqrt(np.sum(weight * np.abs(F) ** 2)))

    def holder_seminorm(self, f: np.ndarray, alpha: float) -> float:
        """max |f(x) - f(y)| / d(x, y)^alpha over all grid pairs (geodesic distance).

        A grid lower bound for the continuum seminorm.
        """
        if not (0.0 < alpha <= 1.0):
            raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
        f = self.check(f)
        best = 0.0
        n = self.n
        shifts = np.array(np.meshgrid(*([np.arange(n)] * self.dim), indexing="ij")).reshape(self.dim, -1).T
        for s in shifts:
            if not s.any():
                continue
            wrapped = np.minimum(s, n - s) / n
            dist = float(np.sqrt(np.sum(wrapped**2)))
            diff = np.abs(f - np.roll(f, tuple(s), axis=tuple(range(self.dim))))
            best = max(best, float(diff.max()) / dist**alpha)
        return best

    # -- nonlinear terms ------------------------------------------------------

    def _resample(self, F: np.ndarray, m: int) -> np.ndarray:
        """Zero-pad (m > n) or truncate (m < n) spectra of shape (..., n, n)."""
        n = F.shape[-1]
        lead = F.shape[: -self.dim]
        out = np.zeros(lead + (m,) * self.dim, dtype=complex)
        half = min(n, m) // 2
        idx = np.r_[0:half, -half + 1 : 0] if half > 0 else np.r_[0:0]
        # Nyquist of the smaller grid is dropped: it cannot be split symmetrically.
        sl = np.ix_(*([idx] * self.dim))
        out[(...,) + sl] = F[(...,) + sl]
        return out

    def dealiased(self, fn: Callable[..., np.ndarray], *fields: np.ndarray) -> np.ndarray:
        """Evaluate ``fn(*fields)`` pointwise with 3/2-rule dealiasing.

        Inputs are spectrally interpolated to a grid with 3n/2 points per
        direction, ``fn`` is applied there, and the result is truncated back
        to the resolved modes of this grid.  Inputs may carry leading axes.
        """
        m = 3 * self.n // 2
        m += m % 2
        fine = TorusGrid(self.dim, m)
        up = []
        for f in fields:
            F = self.transform(f)
            up.append(fine.inverse_transform(self._resample(F, m)))
        G = fine.transform(fn(*up))
        return self.inverse_transform(self._resample(G, self.n))
