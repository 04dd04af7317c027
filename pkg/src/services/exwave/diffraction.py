"""
Free-space propagation between parallel planes with the Rayleigh-Sommerfeld
first-solution kernel

    w(Δx, Δy) = (Δz / r²) · (1/(2πr) + 1/(jλ)) · exp(j2πr/λ) · pitch²
    r = sqrt((Δx·pitch)² + (Δy·pitch)² + Δz²)

The fast path is a zero-padded FFT convolution of size 2n per axis; the kernel
is stored with negative offsets wrapped, so the first n×n output window is the
exact linear convolution. `propagate_direct` evaluates the same double sum
through an explicit transfer matrix and serves as the oracle.
"""

import math
from dataclasses import dataclass
from functools import lru_cache

import torch

from .exceptions import InvalidDimensionError, KernelConstructionError
from .field_core import DTYPE, REAL_DTYPE, ComplexField
from .logger import logger


@dataclass(frozen=True)
class PropagationGeometry:
    n: int
    pitch: float
    wavelength: float
    spacing: float

    def __post_init__(self):
        if self.n < 1:
            raise InvalidDimensionError(f"Grid side must be at least 1, got {self.n}")
        for name in ("pitch", "wavelength", "spacing"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise KernelConstructionError(f"{name} must be a positive finite length, got {value}")
        if self.spacing < self.pitch:
            logger.warning(
                f"Layer spacing {self.spacing:.3e} m is below the pixel pitch {self.pitch:.3e} m; "
                "the sampled kernel will be poorly resolved"
            )

    @property
    def transform_size(self) -> int:
        return 2 * self.n


@dataclass(frozen=True)
class RsKernel:
    geometry: PropagationGeometry
    spatial: torch.Tensor       # w at wrapped offsets, (2n, 2n)
    spectrum: torch.Tensor      # fft2 of `spatial`
    adjoint_spectrum: torch.Tensor  # fft2 of conj(`spatial`)

    def value(self, dx: int, dy: int) -> complex:
        """Kernel value at the signed pixel offset (dx, dy)."""
        n = self.geometry.n
        if abs(dx) > n - 1 or abs(dy) > n - 1:
            raise InvalidDimensionError(f"Offset ({dx}, {dy}) outside the kernel support")
        size = self.geometry.transform_size
        return complex(self.spatial[dy % size, dx % size])


def kernel_values(geometry: PropagationGeometry, dx: torch.Tensor, dy: torch.Tensor) -> torch.Tensor:
    """Evaluate w at integer pixel offsets (broadcasting)."""
    pitch = geometry.pitch
    dz = geometry.spacing
    wavelength = geometry.wavelength
    r = torch.sqrt((dx.to(REAL_DTYPE) * pitch) ** 2 + (dy.to(REAL_DTYPE) * pitch) ** 2 + dz * dz)
    axial = dz / (r * r)
    radial = torch.complex(1.0 / (2 * math.pi * r), torch.full_like(r, -1.0 / wavelength))
    carrier = torch.polar(torch.ones_like(r), 2 * math.pi * r / wavelength)
    return axial * radial * carrier * (pitch * pitch)


def wrapped_offsets(n: int) -> torch.Tensor:
    """Signed offset for each index of a 2n transform axis; index n is unused."""
    size = 2 * n
    idx = torch.arange(size)
    return torch.where(idx < n, idx, idx - size)


@lru_cache(maxsize=32)
def build_rs_kernel(geometry: PropagationGeometry) -> RsKernel:
    """Kernel spectra for one geometry; cached so every layer shares them."""
    n = geometry.n
    offsets = wrapped_offsets(n)
    dy, dx = torch.meshgrid(offsets, offsets, indexing="ij")
    spatial = kernel_values(geometry, dx, dy)
    # index n is outside the (2n-1)-wide support
    spatial[n, :] = 0
    spatial[:, n] = 0
    if not bool(torch.isfinite(spatial).all()):
        raise KernelConstructionError(f"Non-finite kernel entries for geometry {geometry}")

    logger.debug(
        f"Built RS kernel: n={n}, pitch={geometry.pitch:.3e}, wavelength={geometry.wavelength:.3e}, "
        f"spacing={geometry.spacing:.3e}"
    )
    return RsKernel(
        geometry=geometry,
        spatial=spatial,
        spectrum=torch.fft.fft2(spatial),
        adjoint_spectrum=torch.fft.fft2(spatial.conj()),
    )


def _check_kernel(f: ComplexField, k: RsKernel):
    if f.n != k.geometry.n:
        raise InvalidDimensionError(f"Field is {f.n}x{f.n} but the kernel was built for n={k.geometry.n}")


def _convolve(data: torch.Tensor, spectrum: torch.Tensor, n: int) -> torch.Tensor:
    size = 2 * n
    padded = torch.fft.fft2(data, s=(size, size))
    return torch.fft.ifft2(padded * spectrum)[..., :n, :n]


def propagate(f: ComplexField, k: RsKernel) -> ComplexField:
    _check_kernel(f, k)
    return ComplexField(_convolve(f.data, k.spectrum, f.n))


def propagate_adjoint(grad_out: ComplexField, k: RsKernel) -> ComplexField:
    """Conjugate transpose of `propagate`: convolution with conj(w), since w(d) == w(-d)."""
    _check_kernel(grad_out, k)
    return ComplexField(_convolve(grad_out.data, k.adjoint_spectrum, grad_out.n))


def transfer_matrix(k: RsKernel) -> torch.Tensor:
    """Dense n²×n² matrix with entry [i, k] = w(p_i − p_k)."""
    n = k.geometry.n
    ys, xs = torch.meshgrid(torch.arange(n), torch.arange(n), indexing="ij")
    xs = xs.reshape(-1)
    ys = ys.reshape(-1)
    dx = xs[:, None] - xs[None, :]
    dy = ys[:, None] - ys[None, :]
    return kernel_values(k.geometry, dx, dy)


def propagate_direct(f: ComplexField, k: RsKernel) -> ComplexField:
    """z_i = Σ_k w(p_i − p_k)·h_k by explicit summation; meant for n ≤ 16."""
    _check_kernel(f, k)
    n = f.n
    matrix = transfer_matrix(k)
    flat = f.data.reshape(-1, n * n)
    summed = (matrix[None, :, :] * flat[:, None, :]).sum(dim=-1)
    return ComplexField(summed.reshape(f.data.shape).to(DTYPE))
