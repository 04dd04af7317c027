"""
Diffractive network: layer stack, expressway output and detector readout.

Forward pass for an input field h⁰:

    z^l = P(h^{l-1}),  h^l = z^l · exp(jφ^l)              l = 1..L
    output = Σ_l w_l · P(h^l)     (expressway enabled)
    output = P(h^L)               (expressway disabled)
    score_c = Σ_{p∈region_c} |output_p|²

P(h^l) for l < L is z^{l+1}, so the expressway terms come for free.

Backward uses the field gradient G = ∂L/∂Re + j·∂L/∂Im:
    G_out   = 2 · g_c · output on region c
    G_h^l   = w_l · P†(G_out) + P†(G_z^{l+1})
    dL/dφ_p = Im(G_h,p · conj(h_p)),   G_z = conj(t) · G_h
    dL/dw_l = Re Σ conj(P(h^l)) · G_out
"""

import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import torch

from .config import NUM_CLASSES
from .diffraction import PropagationGeometry, RsKernel, build_rs_kernel, propagate, propagate_adjoint
from .exceptions import InvalidDimensionError, StaleCacheError
from .field_core import REAL_DTYPE, ComplexField, intensity
from .seeding import STREAM_FIXED_POINT, STREAM_LAYER_PHASES, derive_generator
from .wavelet_phase import (
    PhaseMode,
    WaveletLayer,
    expand_phases,
    make_dense_layer,
    make_wavelet_layer,
    reduce_layer_grad,
)


@dataclass(frozen=True)
class DetectorLayout:
    n: int
    region_size: int
    regions: Tuple[Tuple[int, int], ...]   # 0-based top-left (x0, y0) per class

    def __post_init__(self):
        if len(self.regions) != NUM_CLASSES:
            raise InvalidDimensionError(f"Detector needs {NUM_CLASSES} regions, got {len(self.regions)}")
        if self.region_size < 1:
            raise InvalidDimensionError("Detector regions need a side of at least one pixel")
        covered = set()
        for x0, y0 in self.regions:
            if x0 < 0 or y0 < 0 or x0 + self.region_size > self.n or y0 + self.region_size > self.n:
                raise InvalidDimensionError(f"Detector region at ({x0}, {y0}) leaves the {self.n}x{self.n} plane")
            pixels = {(x, y) for x in range(x0, x0 + self.region_size) for y in range(y0, y0 + self.region_size)}
            if covered & pixels:
                raise InvalidDimensionError(f"Detector region at ({x0}, {y0}) overlaps another region")
            covered |= pixels

    @classmethod
    def default(cls, n: int) -> "DetectorLayout":
        """Two rows of five windows: rows at 1/3 and 2/3 height, columns at odd tenths."""
        if n < 5:
            raise InvalidDimensionError(f"The default detector layout needs n >= 5, got {n}")
        side = max(1, n // 8)
        limit = n - side

        def corner(center: float) -> int:
            return min(max(math.floor(center - side / 2), 0), limit)

        rows = [corner(n / 3), corner(2 * n / 3)]
        cols = [corner((2 * k + 1) * n / 10) for k in range(5)]
        regions = tuple((x0, y0) for y0 in rows for x0 in cols)
        return cls(n=n, region_size=side, regions=regions)

    def masks(self) -> torch.Tensor:
        """(10, n, n) indicator masks."""
        masks = torch.zeros((NUM_CLASSES, self.n, self.n), dtype=REAL_DTYPE)
        s = self.region_size
        for c, (x0, y0) in enumerate(self.regions):
            masks[c, y0:y0 + s, x0:x0 + s] = 1.0
        return masks


@dataclass
class Network:
    layers: List[WaveletLayer]
    kernel: RsKernel
    express_weights: torch.Tensor
    express_enabled: bool
    detector: DetectorLayout
    version: int = 0
    _masks: Optional[torch.Tensor] = field(default=None, repr=False)

    def __post_init__(self):
        n = self.kernel.geometry.n
        for index, layer in enumerate(self.layers, start=1):
            if layer.n != n:
                raise InvalidDimensionError(f"Layer {index} is {layer.n}x{layer.n}, network plane is {n}x{n}")
        if self.detector.n != n:
            raise InvalidDimensionError("Detector layout and network use different plane sizes")
        if self.express_weights.shape != (len(self.layers),):
            raise InvalidDimensionError("Need exactly one expressway weight per layer")
        self._masks = self.detector.masks()

    @property
    def n(self) -> int:
        """Grid side length."""
        return self.kernel.geometry.n

    @property
    def depth(self) -> int:
        """Number of phase layers."""
        return len(self.layers)

    @property
    def geometry(self) -> PropagationGeometry:
        """Geometry the shared kernel was built for."""
        return self.kernel.geometry

    def parameter_vectors(self) -> List[Tuple[str, torch.Tensor]]:
        """Named learnable vectors in a fixed order."""
        vectors = [(f"layer_{i}", layer.parameters) for i, layer in enumerate(self.layers, start=1)]
        if self.express_enabled:
            vectors.append(("express_weights", self.express_weights))
        return vectors

    def set_parameter(self, name: str, values: torch.Tensor):
        """Replace one named vector; the shape must match the current one."""
        if name == "express_weights":
            if values.shape != self.express_weights.shape:
                raise InvalidDimensionError("Expressway weight shape mismatch")
            self.express_weights = values
        else:
            self.layers[int(name.split("_")[1]) - 1].set_parameters(values)
        self.version += 1


@dataclass
class ForwardCache:
    network_id: int
    version: int
    z: List[torch.Tensor]        # z^1..z^L
    h: List[torch.Tensor]        # h⁰..h^L
    carriers: List[torch.Tensor]  # exp(jφ^l)
    output_hops: List[torch.Tensor]  # P(h^l), l = 1..L
    output: torch.Tensor
    scores: torch.Tensor


@dataclass
class Gradients:
    layers: List[torch.Tensor]
    express_weights: torch.Tensor

    def as_named(self, net: Network) -> dict:
        """Gradients keyed like Network.parameter_vectors."""
        named = {f"layer_{i}": g for i, g in enumerate(self.layers, start=1)}
        if net.express_enabled:
            named["express_weights"] = self.express_weights
        return named

    def norms(self) -> List[float]:
        """L2 norm of each layer gradient."""
        return [float(torch.linalg.vector_norm(g)) for g in self.layers]


def phase_carrier(layer: WaveletLayer) -> torch.Tensor:
    """t = exp(jφ) per pixel; amplitudes stay fixed at 1."""
    phases = expand_phases(layer)
    return torch.polar(torch.ones_like(phases), phases)


def modulate(f: ComplexField, layer: WaveletLayer) -> ComplexField:
    """Multiply the field by the layer phase carrier."""
    if f.n != layer.n:
        raise InvalidDimensionError(f"Field is {f.n}x{f.n} but the layer is {layer.n}x{layer.n}")
    return ComplexField(f.data * phase_carrier(layer))


def detector_readout(f: ComplexField, d: DetectorLayout) -> torch.Tensor:
    """Per-class integrated intensity, shape (..., 10)."""
    if f.n != d.n:
        raise InvalidDimensionError(f"Field is {f.n}x{f.n} but the detector plane is {d.n}x{d.n}")
    energy = intensity(f.data)
    s = d.region_size
    scores = [energy[..., y0:y0 + s, x0:x0 + s].sum(dim=(-2, -1)) for x0, y0 in d.regions]
    return torch.stack(scores, dim=-1)


def forward(net: Network, input: ComplexField) -> Tuple[torch.Tensor, ForwardCache]:
    if input.n != net.n:
        raise InvalidDimensionError(f"Input is {input.n}x{input.n}, network expects {net.n}x{net.n}")
    h = [input.data]
    z = []
    carriers = []
    for layer in net.layers:
        z_l = propagate(ComplexField(h[-1]), net.kernel).data
        carrier = phase_carrier(layer)
        z.append(z_l)
        carriers.append(carrier)
        h.append(z_l * carrier)

    last_hop = propagate(ComplexField(h[-1]), net.kernel).data
    output_hops = z[1:] + [last_hop]
    if net.express_enabled:
        output = torch.zeros_like(last_hop)
        for weight, hop in zip(net.express_weights.tolist(), output_hops):
            output = output + hop * weight
    else:
        output = last_hop

    scores = detector_readout(ComplexField(output), net.detector)
    cache = ForwardCache(
        network_id=id(net),
        version=net.version,
        z=z,
        h=h,
        carriers=carriers,
        output_hops=output_hops,
        output=output,
        scores=scores,
    )
    return scores, cache


def forward_field(net: Network, input: ComplexField) -> ComplexField:
    """Output-plane field before the detector readout."""
    _, cache = forward(net, input)
    return ComplexField(cache.output)


def _sum_batch(per_sample: torch.Tensor, batch_ndim: int) -> torch.Tensor:
    """Sum over leading batch dimensions in sample order."""
    if batch_ndim == 0:
        return per_sample
    flat = per_sample.reshape(-1, *per_sample.shape[batch_ndim:])
    total = torch.zeros_like(flat[0])
    for item in flat:
        total = total + item
    return total


def backward(net: Network, cache: ForwardCache, score_grads: torch.Tensor) -> Gradients:
    if cache.network_id != id(net) or cache.version != net.version:
        raise StaleCacheError("Forward cache does not match the current network parameters")
    if score_grads.shape != cache.scores.shape:
        raise InvalidDimensionError(
            f"Score gradients {tuple(score_grads.shape)} do not match scores {tuple(cache.scores.shape)}"
        )
    batch_ndim = cache.output.ndim - 2
    kernel = net.kernel
    score_grads = score_grads.to(REAL_DTYPE)

    # detector adjoint, accumulated class by class
    region_weights = torch.zeros(cache.output.shape, dtype=REAL_DTYPE)
    for c in range(NUM_CLASSES):
        region_weights = region_weights + score_grads[..., c, None, None] * net._masks[c]
    grad_output = 2.0 * region_weights * cache.output

    express_grads = torch.zeros(net.depth, dtype=REAL_DTYPE)
    from_output = propagate_adjoint(ComplexField(grad_output), kernel).data
    if net.express_enabled:
        for index, hop in enumerate(cache.output_hops):
            per_sample = (hop.conj() * grad_output).real.sum(dim=(-2, -1))
            express_grads[index] = float(_sum_batch(per_sample, batch_ndim))

    layer_grads: List[Optional[torch.Tensor]] = [None] * net.depth
    grad_next = None  # P†(G_z^{l+1})
    for index in reversed(range(net.depth)):
        layer = net.layers[index]
        if net.express_enabled:
            grad_h = from_output * float(net.express_weights[index])
            if grad_next is not None:
                grad_h = grad_h + grad_next
        elif grad_next is None:
            grad_h = from_output
        else:
            grad_h = grad_next

        h_l = cache.h[index + 1]
        pixel_grad = (grad_h * h_l.conj()).imag
        layer_grads[index] = reduce_layer_grad(_sum_batch(pixel_grad, batch_ndim), layer)

        if index > 0:
            grad_z = cache.carriers[index].conj() * grad_h
            grad_next = propagate_adjoint(ComplexField(grad_z), kernel).data

    return Gradients(layers=layer_grads, express_weights=express_grads)


def param_count(net: Network) -> int:
    """Trainable scalars, counting expressway weights only when enabled."""
    return sum(layer.param_count for layer in net.layers) + (net.depth if net.express_enabled else 0)


def build_network(
    geometry: PropagationGeometry,
    depth: int,
    master_seed: int,
    shift: bool = True,
    express: bool = True,
    dense: bool = False,
    detector: Optional[DetectorLayout] = None,
) -> Network:
    """Layer l draws q from stream (FIXED_POINT, l) and phases from (LAYER_PHASES, l)."""
    if depth < 1:
        raise InvalidDimensionError(f"Network needs at least one layer, got {depth}")
    layers = []
    for index in range(depth):
        phase_rng = derive_generator(master_seed, STREAM_LAYER_PHASES, index)
        if dense:
            layers.append(make_dense_layer(phase_rng, geometry.n))
        else:
            point_rng = derive_generator(master_seed, STREAM_FIXED_POINT, index)
            layers.append(make_wavelet_layer(point_rng, phase_rng, geometry.n, shift))
    return Network(
        layers=layers,
        kernel=build_rs_kernel(geometry),
        express_weights=torch.full((depth,), 1.0 / depth, dtype=REAL_DTYPE),
        express_enabled=express,
        detector=detector or DetectorLayout.default(geometry.n),
    )
