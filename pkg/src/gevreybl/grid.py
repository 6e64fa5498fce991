"""Grid, spectral fields and the discrete derivative operators.

The tangential variable lives on a torus of length ``Lx`` sampled at ``Nx``
points; the normal variable is a uniform grid on ``[0, Ymax]``.  Fields carry
both a physical array of shape ``(Ny, Nx)`` and the half-spectrum returned by
``numpy.fft.rfft`` (normalized by ``Nx``), computed lazily from one another.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.integrate import cumulative_trapezoid


class ConfigurationError(ValueError):
    """Raised for parameter combinations the numerics cannot honour."""


class GridMismatchError(ValueError):
    """Raised when two fields living on different grids are combined."""


@dataclass(frozen=True)
class Grid:
    """Tensor grid: x-torus of ``Nx`` points and ``Ny`` uniform points in y."""

    Nx: int
    Ny: int
    Lx: float = 2 * np.pi
    Ymax: float = 12.0

    def __post_init__(self):
        if self.Nx < 16 or self.Nx & (self.Nx - 1):
            raise ConfigurationError(f"Nx must be a power of two >= 16, got {self.Nx}")
        if self.Ny < 33:
            raise ConfigurationError(f"Ny must be >= 33, got {self.Ny}")
        if not (self.Lx > 0 and self.Ymax > 0):
            raise ConfigurationError("Lx and Ymax must be positive")

    @property
    def dy(self) -> float:
        return self.Ymax / (self.Ny - 1)

    @property
    def dx(self) -> float:
        return self.Lx / self.Nx

    @property
    def nk(self) -> int:
        return self.Nx // 2 + 1

    @cached_property
    def x(self) -> np.ndarray:
        return np.arange(self.Nx) * self.dx

    @cached_property
    def y(self) -> np.ndarray:
        return np.linspace(0.0, self.Ymax, self.Ny)

    @cached_property
    def xi(self) -> np.ndarray:
        """Non-negative frequencies 2*pi*j/Lx, j = 0..Nx/2."""
        return 2 * np.pi * np.arange(self.nk) / self.Lx

    @cached_property
    def bracket(self) -> np.ndarray:
        """Japanese bracket <xi> = (1 + xi^2)^(1/2)."""
        return np.sqrt(1.0 + self.xi**2)

    @cached_property
    def mode_weight(self) -> np.ndarray:
        """Multiplicity of each half-spectrum entry in the two-sided sum."""
        w = np.full(self.nk, 2.0)
        w[0] = 1.0
        w[-1] = 1.0
        return w

    def mesh(self):
        """Return ``(X, Y)`` arrays of shape ``(Ny, Nx)``."""
        return np.meshgrid(self.x, self.y)

    def to_dict(self) -> dict:
        return {"Nx": self.Nx, "Ny": self.Ny, "Lx": self.Lx, "Ymax": self.Ymax}


class Field:
    """Real scalar field on a :class:`Grid`.

    Either representation may be supplied; the other is produced on demand.
    Both arrays are marked read-only so that snapshots stay immutable.
    """

    __slots__ = ("grid", "_phys", "_spec", "_primary")

    def __init__(self, grid: Grid, phys=None, spec=None):
        if (phys is None) == (spec is None):
            raise ValueError("give exactly one of phys or spec")
        self.grid = grid
        self._phys = None
        self._spec = None
        self._primary = "phys" if phys is not None else "spec"
        if phys is not None:
            arr = np.array(phys, dtype=float)
            if arr.shape != (grid.Ny, grid.Nx):
                raise ValueError(f"phys shape {arr.shape} != {(grid.Ny, grid.Nx)}")
            arr.flags.writeable = False
            self._phys = arr
        else:
            arr = np.array(spec, dtype=complex)
            if arr.shape != (grid.Ny, grid.nk):
                raise ValueError(f"spec shape {arr.shape} != {(grid.Ny, grid.nk)}")
            arr.flags.writeable = False
            self._spec = arr

    @classmethod
    def zeros(cls, grid: Grid) -> "Field":
        return cls(grid, phys=np.zeros((grid.Ny, grid.Nx)))

    @classmethod
    def restore(cls, grid: Grid, phys, spec, primary: str = "phys") -> "Field":
        """Rebuild a field with both cached representations (bitwise resume)."""
        if primary not in ("phys", "spec"):
            raise ValueError(primary)
        f = cls(grid, phys=phys)
        arr = np.array(spec, dtype=complex)
        arr.flags.writeable = False
        f._spec = arr
        f._primary = primary
        return f

    @classmethod
    def from_function(cls, grid: Grid, fn) -> "Field":
        X, Y = grid.mesh()
        return cls(grid, phys=np.broadcast_to(fn(X, Y), X.shape))

    @property
    def phys(self) -> np.ndarray:
        if self._phys is None:
            arr = np.fft.irfft(self._spec * self.grid.Nx, n=self.grid.Nx, axis=-1)
            arr.flags.writeable = False
            self._phys = arr
        return self._phys

    @property
    def spec(self) -> np.ndarray:
        if self._spec is None:
            arr = np.fft.rfft(self._phys, axis=-1) / self.grid.Nx
            arr.flags.writeable = False
            self._spec = arr
        return self._spec

    def full_spec(self) -> np.ndarray:
        """Two-sided coefficients in ``numpy.fft.fft`` ordering."""
        return np.fft.fft(self.phys, axis=-1) / self.grid.Nx

    def _check(self, other: "Field"):
        if other.grid != self.grid:
            raise GridMismatchError(f"{self.grid} vs {other.grid}")

    def _combine(self, other, op):
        if isinstance(other, Field):
            self._check(other)
            if self._primary == other._primary == "phys":
                return Field(self.grid, phys=op(self._phys, other._phys))
            return Field(self.grid, spec=op(self.spec, other.spec))
        if self._primary == "phys":
            return Field(self.grid, phys=op(self._phys, other))
        # adding a constant only touches the mean mode
        spec = np.array(self._spec)
        if op is np.multiply:
            return Field(self.grid, spec=spec * other)
        spec[:, 0] = op(spec[:, 0], other)
        return Field(self.grid, spec=spec)

    def __add__(self, other):
        return self._combine(other, np.add)

    __radd__ = __add__

    def __sub__(self, other):
        return self._combine(other, np.subtract)

    def __rsub__(self, other):
        return (-self) + other

    def __neg__(self):
        if self._primary == "spec":
            return Field(self.grid, spec=-self._spec)
        return Field(self.grid, phys=-self._phys)

    def __mul__(self, c):
        if isinstance(c, Field):
            raise TypeError("use grid.product for field products (dealiased)")
        return self._combine(c, np.multiply)

    __rmul__ = __mul__

    def __truediv__(self, c):
        return self * (1.0 / c)

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.phys)))

    def __repr__(self):
        return f"Field(Nx={self.grid.Nx}, Ny={self.grid.Ny}, max|f|={self.max_abs():.3e})"


def multiplier(f: Field, symbol) -> Field:
    """Apply a Fourier multiplier given on the half-spectrum (broadcast over y)."""
    return Field(f.grid, spec=f.spec * symbol)


def dx(f: Field, order: int = 1) -> Field:
    """Spectral x-derivative; the Nyquist mode is discarded."""
    sym = (1j * f.grid.xi) ** order
    sym = np.array(sym)
    sym[-1] = 0.0
    return multiplier(f, sym)


def _dy_array(a: np.ndarray, h: float) -> np.ndarray:
    out = np.empty_like(a)
    out[1:-1] = (a[2:] - a[:-2]) / (2 * h)
    out[0] = (-3 * a[0] + 4 * a[1] - a[2]) / (2 * h)
    out[-1] = (3 * a[-1] - 4 * a[-2] + a[-3]) / (2 * h)
    return out


def _dyy_array(a: np.ndarray, h: float) -> np.ndarray:
    out = np.empty_like(a)
    out[1:-1] = (a[2:] - 2 * a[1:-1] + a[:-2]) / h**2
    out[0] = (2 * a[0] - 5 * a[1] + 4 * a[2] - a[3]) / h**2
    out[-1] = (2 * a[-1] - 5 * a[-2] + 4 * a[-3] - a[-4]) / h**2
    return out


def _apply_y(f: Field, fn) -> Field:
    # y-stencils commute with the x-transform; acting on the representation
    # the field was built from keeps results independent of cache history
    if f._primary == "spec":
        return Field(f.grid, spec=fn(f._spec, f.grid.dy))
    return Field(f.grid, phys=fn(f._phys, f.grid.dy))


def dy(f: Field) -> Field:
    """Second-order centered y-derivative, one-sided at both ends."""
    return _apply_y(f, _dy_array)


def dyy(f: Field) -> Field:
    """Second-order centered second y-derivative, one-sided at both ends."""
    return _apply_y(f, _dyy_array)


def cumint_y(f: Field) -> Field:
    """Cumulative trapezoid integral from y = 0."""
    return _apply_y(f, lambda a, h: cumulative_trapezoid(a, dx=h, axis=0, initial=0))


def pad_irfft(spec: np.ndarray, N: int) -> np.ndarray:
    """Evaluate a band-limited half-spectrum on the 3/2-padded x-grid."""
    M = 3 * N // 2
    padded = np.zeros(spec.shape[:-1] + (M // 2 + 1,), dtype=complex)
    padded[..., : N // 2] = spec[..., : N // 2]
    return np.fft.irfft(padded, n=M, axis=-1) * M


def truncate_rfft(values: np.ndarray, N: int) -> np.ndarray:
    """Project padded physical values back to the Nx half-spectrum."""
    M = values.shape[-1]
    full = np.fft.rfft(values, axis=-1) / M
    out = np.zeros(values.shape[:-1] + (N // 2 + 1,), dtype=complex)
    out[..., : N // 2] = full[..., : N // 2]
    return out


def product(f: Field, g: Field) -> Field:
    """Dealiased pointwise product (3/2 zero-padding in x)."""
    f._check(g)
    N = f.grid.Nx
    vals = pad_irfft(f.spec, N) * pad_irfft(g.spec, N)
    return Field(f.grid, spec=truncate_rfft(vals, N))


def trapezoid_y(a: np.ndarray, h: float) -> np.ndarray:
    """Trapezoid rule along axis 0."""
    return np.trapezoid(a, dx=h, axis=0)
