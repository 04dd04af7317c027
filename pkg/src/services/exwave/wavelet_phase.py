"""
Phase parameterizations of a diffractive layer.

Wavelet mode: all pixels at the same L¹ distance from a fixed point q share
one phase, so a layer carries one parameter per concentric "circle" instead
of one per pixel. Dense mode keeps the n² independent phases of the classic
layer and serves as the parameter-count baseline.
"""

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Tuple

import numpy as np
import torch

from .exceptions import CircleMapError, InvalidDimensionError
from .field_core import REAL_DTYPE

TAU = 2 * math.pi
# Largest double strictly below 2π
_TAU_BELOW = math.nextafter(TAU, 0.0)


class PhaseMode(str, Enum):
    WAVELET = "wavelet"
    DENSE = "dense"


@dataclass(frozen=True)
class CircleMap:
    n: int
    q: Tuple[int, int]          # 1-based (x_q, y_q)
    circle_of: torch.Tensor     # (n, n) long, indexed [y, x]
    num_circles: int


@dataclass
class WaveletLayer:
    mode: PhaseMode
    map: Optional[CircleMap] = None
    phases: Optional[torch.Tensor] = None
    dense_phases: Optional[torch.Tensor] = None
    side: int = field(default=0)

    def __post_init__(self):
        if self.mode == PhaseMode.WAVELET:
            if self.map is None or self.phases is None:
                raise CircleMapError("Wavelet layers need a circle map and circle phases")
            if self.phases.shape != (self.map.num_circles,):
                raise InvalidDimensionError(
                    f"Expected {self.map.num_circles} circle phases, got {tuple(self.phases.shape)}"
                )
            self.side = self.map.n
        else:
            if self.dense_phases is None or self.dense_phases.ndim != 1:
                raise InvalidDimensionError("Dense layers need a flat vector of n² phases")
            side = math.isqrt(self.dense_phases.numel())
            if side * side != self.dense_phases.numel():
                raise InvalidDimensionError(f"{self.dense_phases.numel()} phases do not form a square grid")
            self.side = side

    @property
    def n(self) -> int:
        return self.side

    @property
    def param_count(self) -> int:
        return self.parameters.numel()

    @property
    def parameters(self) -> torch.Tensor:
        return self.phases if self.mode == PhaseMode.WAVELET else self.dense_phases

    def set_parameters(self, values: torch.Tensor):
        if values.shape != self.parameters.shape:
            raise InvalidDimensionError(
                f"Parameter shape {tuple(values.shape)} does not match {tuple(self.parameters.shape)}"
            )
        if self.mode == PhaseMode.WAVELET:
            self.phases = values
        else:
            self.dense_phases = values


def center_point(n: int) -> Tuple[int, int]:
    c = (n + 1) // 2
    return c, c


def sample_fixed_point(rng: torch.Generator, n: int, shift: bool) -> Tuple[int, int]:
    """Uniform q over the grid when shifting, else the plane center ⌈n/2⌉."""
    if n < 1:
        raise InvalidDimensionError(f"Grid side must be at least 1, got {n}")
    if not shift:
        return center_point(n)
    xq, yq = torch.randint(1, n + 1, (2,), generator=rng).tolist()
    return xq, yq


def l1_distances(n: int, q: Tuple[int, int]) -> torch.Tensor:
    coords = torch.arange(1, n + 1)
    xq, yq = q
    return (coords[None, :] - xq).abs() + (coords[:, None] - yq).abs()


def build_circle_map(n: int, q: Tuple[int, int]) -> CircleMap:
    if n < 1:
        raise InvalidDimensionError(f"Grid side must be at least 1, got {n}")
    xq, yq = q
    if not (1 <= xq <= n and 1 <= yq <= n):
        raise CircleMapError(f"Fixed point {q} lies outside the {n}x{n} grid")
    distances = l1_distances(n, (xq, yq))
    # ranks of the distinct distances, ascending
    values, circle_of = torch.unique(distances, sorted=True, return_inverse=True)
    return CircleMap(n=n, q=(int(xq), int(yq)), circle_of=circle_of.to(torch.long), num_circles=values.numel())


def expected_circle_count(n: int, q: Tuple[int, int]) -> int:
    xq, yq = q
    return max(xq - 1, n - xq) + max(yq - 1, n - yq) + 1


def _uniform_open_phases(rng: torch.Generator, count: int) -> torch.Tensor:
    phases = torch.rand(count, generator=rng, dtype=REAL_DTYPE) * TAU
    return phases.clamp(min=np.finfo(np.float64).tiny, max=_TAU_BELOW)


def init_wavelet_phases(rng: torch.Generator, circle_map: CircleMap) -> torch.Tensor:
    """One i.i.d. phase in (0, 2π) per circle."""
    return _uniform_open_phases(rng, circle_map.num_circles)


def init_dense_phases(rng: torch.Generator, n: int) -> torch.Tensor:
    """One i.i.d. phase in (0, 2π) per pixel, row-major."""
    if n < 1:
        raise InvalidDimensionError(f"Grid side must be at least 1, got {n}")
    return _uniform_open_phases(rng, n * n)


def make_wavelet_layer(rng_point: torch.Generator, rng_phase: torch.Generator, n: int, shift: bool) -> WaveletLayer:
    q = sample_fixed_point(rng_point, n, shift)
    circle_map = build_circle_map(n, q)
    return WaveletLayer(mode=PhaseMode.WAVELET, map=circle_map, phases=init_wavelet_phases(rng_phase, circle_map))


def make_dense_layer(rng_phase: torch.Generator, n: int) -> WaveletLayer:
    return WaveletLayer(mode=PhaseMode.DENSE, dense_phases=init_dense_phases(rng_phase, n))


def expand_phases(layer: WaveletLayer) -> torch.Tensor:
    """Per-pixel phase grid (n, n)."""
    if layer.mode == PhaseMode.WAVELET:
        return layer.phases[layer.map.circle_of]
    return layer.dense_phases.reshape(layer.n, layer.n)


def reduce_phase_grad(pixel_grad: torch.Tensor, circle_map: CircleMap) -> torch.Tensor:
    """Adjoint of expand_phases: grad_C = Σ_{p∈C} pixel_grad[p]."""
    n = circle_map.n
    if pixel_grad.numel() != n * n:
        raise InvalidDimensionError(f"Expected {n * n} pixel gradients, got {pixel_grad.numel()}")
    return torch.bincount(
        circle_map.circle_of.reshape(-1),
        weights=pixel_grad.reshape(-1).to(REAL_DTYPE),
        minlength=circle_map.num_circles,
    )


def reduce_layer_grad(pixel_grad: torch.Tensor, layer: WaveletLayer) -> torch.Tensor:
    if layer.mode == PhaseMode.WAVELET:
        return reduce_phase_grad(pixel_grad, layer.map)
    return pixel_grad.reshape(-1).clone()


def render_phase_grid(phase_grid: torch.Tensor) -> np.ndarray:
    """8-bit image of sin(φ): round-half-up of (sin φ + 1)/2 · 255."""
    scaled = (torch.sin(phase_grid.to(REAL_DTYPE)) + 1.0) / 2.0 * 255.0
    return torch.floor(scaled + 0.5).clamp(0, 255).to(torch.uint8).numpy()


def render_phase_map(layer: WaveletLayer) -> np.ndarray:
    return render_phase_grid(expand_phases(layer))
