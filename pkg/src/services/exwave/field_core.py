"""
Complex field container shared by every stage of the simulator.

A ComplexField wraps a complex128 tensor of shape (..., n, n). Leading
dimensions are batch dimensions; the trailing two are (row y, column x) in
row-major order, so flat index = y * n + x. The math writes pixel coordinates
1-based, storage is 0-based, and the conversion lives only in `flat_index`
and `ComplexField.at`.
"""

from dataclasses import dataclass
from typing import Union

import torch

from .exceptions import InvalidDimensionError, NonFiniteFieldError

DTYPE = torch.complex128
REAL_DTYPE = torch.float64


@dataclass(frozen=True)
class ComplexField:
    """Monochromatic wavefront sampled on a square n×n grid."""
    data: torch.Tensor

    def __post_init__(self):
        data = self.data
        if data.ndim < 2 or data.shape[-1] != data.shape[-2]:
            raise InvalidDimensionError(f"Field must be square, got shape {tuple(data.shape)}")
        if data.shape[-1] == 0:
            raise InvalidDimensionError("Field side length must be at least 1")
        if data.dtype != DTYPE:
            object.__setattr__(self, "data", data.to(DTYPE))
        if not bool(torch.isfinite(self.data).all()):
            raise NonFiniteFieldError("Field contains NaN or Inf amplitudes")

    @property
    def n(self) -> int:
        return self.data.shape[-1]

    @property
    def width(self) -> int:
        return self.n

    @property
    def height(self) -> int:
        return self.n

    @property
    def batch_shape(self) -> torch.Size:
        return self.data.shape[:-2]

    def at(self, x: int, y: int) -> complex:
        """Amplitude at 1-based pixel (x, y) of an unbatched field."""
        return complex(self.data.reshape(-1)[flat_index(x, y, self.n)])

    def flat(self) -> torch.Tensor:
        return self.data.reshape(*self.batch_shape, self.n * self.n)

    def scale(self, alpha: Union[complex, float]) -> "ComplexField":
        return ComplexField(self.data * alpha)

    def __add__(self, other: "ComplexField") -> "ComplexField":
        check_same_dimensions(self, other)
        return ComplexField(self.data + other.data)


def flat_index(x: int, y: int, n: int) -> int:
    """Row-major 0-based index of the 1-based pixel (x, y)."""
    if not (1 <= x <= n and 1 <= y <= n):
        raise InvalidDimensionError(f"Pixel ({x}, {y}) outside a {n}x{n} grid")
    return (y - 1) * n + (x - 1)


def check_same_dimensions(a: ComplexField, b: ComplexField):
    if a.n != b.n:
        raise InvalidDimensionError(f"Field sizes differ: {a.n}x{a.n} vs {b.n}x{b.n}")


def make_field(n: int, fill: complex = 0j) -> ComplexField:
    if n < 1:
        raise InvalidDimensionError(f"Field side length must be at least 1, got {n}")
    return ComplexField(torch.full((n, n), complex(fill), dtype=DTYPE))


def field_from(values) -> ComplexField:
    """Build a field from nested rows, a numpy array or a tensor."""
    return ComplexField(torch.as_tensor(values).to(DTYPE))


def total_intensity(f: ComplexField) -> Union[float, torch.Tensor]:
    """Σ|f_p|² over the plane; a float for one field, a tensor per batch item otherwise."""
    energy = intensity(f.data).sum(dim=(-2, -1))
    if energy.ndim == 0:
        return float(energy)
    return energy


def hadamard(a: ComplexField, b: ComplexField) -> ComplexField:
    check_same_dimensions(a, b)
    return ComplexField(a.data * b.data)


def intensity(data: torch.Tensor) -> torch.Tensor:
    return data.real * data.real + data.imag * data.imag


def inner(a: ComplexField, b: ComplexField) -> complex:
    """⟨a, b⟩ = Σ conj(a_p)·b_p over every element."""
    check_same_dimensions(a, b)
    return complex(torch.sum(a.data.conj() * b.data))


def random_field(n: int, generator: torch.Generator, batch: int = 0) -> ComplexField:
    """Field with independent standard-normal real and imaginary parts."""
    shape = (batch, n, n) if batch else (n, n)
    real = torch.randn(shape, generator=generator, dtype=REAL_DTYPE)
    imag = torch.randn(shape, generator=generator, dtype=REAL_DTYPE)
    return ComplexField(torch.complex(real, imag))
