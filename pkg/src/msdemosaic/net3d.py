"""Residual refinement network: same-size 3D convolutions with explicit
forward and backward passes, ReLU, projection shortcuts, and the six-module
graph whose output residual is added to the initial demosaicked cube.

Feature tensors are (channels, bands, height, width). Convolutions slide
jointly over the spectral axis and both spatial axes with zero padding and
stride 1, so every layer preserves (B, H, W). Internally the hot paths run in
channels-last layout over an optional batch axis, reducing each layer to one
im2col fill plus one GEMM; the adjoint uses the same column matrix for kernel
gradients and a shifted scatter-add for input gradients.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .cube import FeatureCube, SpectralCube, cube_to_features

__all__ = [
    "Conv3dLayer",
    "NetworkConfig",
    "ModuleParams",
    "NetworkParams",
    "conv3d_forward",
    "conv3d_backward",
    "relu",
    "relu_backward",
    "module_forward",
    "module_backward",
    "network_forward",
    "network_forward_batch",
    "network_backward_batch",
    "init_params",
    "param_count",
    "layer_shapes",
    "params_from_arrays",
    "validate_params",
]

_ALLOWED_TAPS = (1, 3)
_FINAL_KERNELS = ("1x1x1", "3x3x3")
_CONV_MODES = ("3d", "2d")
_RELU_PLACEMENTS = ("before-add", "after-add")


def _own_float(values, name: str) -> np.ndarray:
    arr = np.asarray(values)
    if arr.dtype not in (np.float32, np.float64):
        arr = arr.astype(np.float64)
    if not np.isfinite(arr).all():
        raise ValueError(f"{name} contains non-finite values")
    arr = arr.view()
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Conv3dLayer:
    """Same-size 3D convolution layer.

    kernel: (out_channels, in_channels, kb, ky, kx) with each tap count in
    {1, 3}; bias: one scalar per output channel. Stride is 1 and zero padding
    is (kb-1)/2, (ky-1)/2, (kx-1)/2, so output dims equal input dims.
    """

    kernel: np.ndarray
    bias: np.ndarray

    def __post_init__(self) -> None:
        kernel = _own_float(self.kernel, "Conv3dLayer.kernel")
        bias = _own_float(self.bias, "Conv3dLayer.bias")
        if kernel.ndim != 5:
            raise ValueError(f"kernel must be 5-dimensional, got shape {kernel.shape}")
        for t in kernel.shape[2:]:
            if t not in _ALLOWED_TAPS:
                raise ValueError(f"kernel taps must be 1 or 3, got shape {kernel.shape}")
        if bias.shape != (kernel.shape[0],):
            raise ValueError(
                f"bias shape {bias.shape} does not match {kernel.shape[0]} output channels"
            )
        object.__setattr__(self, "kernel", kernel)
        object.__setattr__(self, "bias", bias)

    @property
    def in_channels(self) -> int:
        return self.kernel.shape[1]

    @property
    def out_channels(self) -> int:
        return self.kernel.shape[0]

    @property
    def taps(self) -> tuple[int, int, int]:
        return tuple(self.kernel.shape[2:])


@dataclass(frozen=True)
class NetworkConfig:
    """Structure switches for the six-module refinement graph."""

    module_channels: tuple[int, ...] = (2, 4, 8, 16, 32)
    final_kernel: str = "1x1x1"
    module_shortcuts: bool = True
    longest_shortcut: bool = True
    conv_mode: str = "3d"
    relu_placement: str = "before-add"

    def __post_init__(self) -> None:
        channels = tuple(int(c) for c in self.module_channels)
        if len(channels) != 5:
            raise ValueError(f"module_channels must list 5 counts, got {channels}")
        if any(c < 1 for c in channels):
            raise ValueError(f"module_channels must be positive, got {channels}")
        object.__setattr__(self, "module_channels", channels)
        if self.final_kernel not in _FINAL_KERNELS:
            raise ValueError(f"final_kernel must be one of {_FINAL_KERNELS}")
        if self.conv_mode not in _CONV_MODES:
            raise ValueError(f"conv_mode must be one of {_CONV_MODES}")
        if self.relu_placement not in _RELU_PLACEMENTS:
            raise ValueError(f"relu_placement must be one of {_RELU_PLACEMENTS}")

    def to_dict(self) -> dict:
        return {
            "module_channels": list(self.module_channels),
            "final_kernel": self.final_kernel,
            "module_shortcuts": self.module_shortcuts,
            "longest_shortcut": self.longest_shortcut,
            "conv_mode": self.conv_mode,
            "relu_placement": self.relu_placement,
        }

    @classmethod
    def from_dict(cls, mapping: dict) -> "NetworkConfig":
        unknown = set(mapping) - {
            "module_channels",
            "final_kernel",
            "module_shortcuts",
            "longest_shortcut",
            "conv_mode",
            "relu_placement",
        }
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        fields = dict(mapping)
        if "module_channels" in fields:
            fields["module_channels"] = tuple(fields["module_channels"])
        return cls(**fields)


@dataclass(frozen=True)
class ModuleParams:
    """One residual module: the 3x3x3 main conv plus its 1x1x1 projection shortcut."""

    main: Conv3dLayer
    proj: Conv3dLayer | None


@dataclass(frozen=True)
class NetworkParams:
    """Ordered parameter blocks for modules one to five plus the combiner."""

    modules: tuple[ModuleParams, ...]
    combiner: Conv3dLayer

    def arrays(self) -> list[np.ndarray]:
        """Flat parameter list in a fixed order.

        Per module: main kernel, main bias, then (if present) projection
        kernel, projection bias; finally combiner kernel and bias. Optimizer
        moments, gradients, and checkpoints all follow this order.
        """
        out: list[np.ndarray] = []
        for mp in self.modules:
            out.extend([mp.main.kernel, mp.main.bias])
            if mp.proj is not None:
                out.extend([mp.proj.kernel, mp.proj.bias])
        out.extend([self.combiner.kernel, self.combiner.bias])
        return out

    def replace_arrays(self, arrays: list[np.ndarray]) -> "NetworkParams":
        """Rebuild with new parameter values in :meth:`arrays` order."""
        expected = self.arrays()
        if len(arrays) != len(expected):
            raise ValueError(f"expected {len(expected)} arrays, got {len(arrays)}")
        for old, new in zip(expected, arrays):
            if old.shape != np.shape(new):
                raise ValueError(f"array shape {np.shape(new)} does not match {old.shape}")
        it = iter(arrays)
        modules = []
        for mp in self.modules:
            main = Conv3dLayer(next(it), next(it))
            proj = None if mp.proj is None else Conv3dLayer(next(it), next(it))
            modules.append(ModuleParams(main, proj))
        combiner = Conv3dLayer(next(it), next(it))
        return NetworkParams(tuple(modules), combiner)


# ---------------------------------------------------------------------------
# Layer plans derived from a config


def _main_taps(config: NetworkConfig) -> tuple[int, int, int]:
    return (3 if config.conv_mode == "3d" else 1, 3, 3)


def _final_taps(config: NetworkConfig) -> tuple[int, int, int]:
    if config.final_kernel == "1x1x1":
        return (1, 1, 1)
    return _main_taps(config)


def layer_shapes(config: NetworkConfig) -> list[tuple[str, tuple[int, ...]]]:
    """Named kernel shapes in :meth:`NetworkParams.arrays` layer order."""
    shapes: list[tuple[str, tuple[int, ...]]] = []
    c_in = 1
    for i, c_out in enumerate(config.module_channels, start=1):
        shapes.append((f"module{i}.main", (c_out, c_in) + _main_taps(config)))
        if config.module_shortcuts:
            shapes.append((f"module{i}.proj", (c_out, c_in, 1, 1, 1)))
        c_in = c_out
    shapes.append(("combiner", (1, c_in) + _final_taps(config)))
    return shapes


def param_count(config: NetworkConfig) -> int:
    """Total scalar parameters (kernel taps plus biases) for a config."""
    total = 0
    for _, shape in layer_shapes(config):
        total += int(np.prod(shape)) + shape[0]
    return total


def init_params(config: NetworkConfig, seed=0, dtype=np.float32) -> NetworkParams:
    """Deterministic initialization.

    Hidden kernels are zero-mean Gaussian with variance 2/fan_in; all biases
    are zero. The combiner kernel starts at zero so the untrained network is
    the identity refinement (residual identically zero).
    """
    rng = np.random.default_rng(seed)
    layers: dict[str, Conv3dLayer] = {}
    for name, shape in layer_shapes(config):
        if name == "combiner":
            kernel = np.zeros(shape, dtype=dtype)
        else:
            fan_in = int(np.prod(shape[1:]))
            std = np.sqrt(2.0 / fan_in)
            kernel = (rng.standard_normal(shape) * std).astype(dtype)
        layers[name] = Conv3dLayer(kernel, np.zeros(shape[0], dtype=dtype))
    modules = tuple(
        ModuleParams(layers[f"module{i}.main"], layers.get(f"module{i}.proj"))
        for i in range(1, 6)
    )
    return NetworkParams(modules, layers["combiner"])


def params_from_arrays(config: NetworkConfig, arrays: list[np.ndarray]) -> NetworkParams:
    """Assemble parameters from a flat array list, validating against the config."""
    shapes = layer_shapes(config)
    if len(arrays) != 2 * len(shapes):
        raise ValueError(f"expected {2 * len(shapes)} arrays, got {len(arrays)}")
    layers: dict[str, Conv3dLayer] = {}
    it = iter(arrays)
    for name, shape in shapes:
        kernel = np.asarray(next(it))
        bias = np.asarray(next(it))
        if kernel.shape != shape:
            raise ValueError(f"{name} kernel shape {kernel.shape} does not match {shape}")
        if bias.shape != (shape[0],):
            raise ValueError(f"{name} bias shape {bias.shape} does not match ({shape[0]},)")
        layers[name] = Conv3dLayer(kernel, bias)
    modules = tuple(
        ModuleParams(layers[f"module{i}.main"], layers.get(f"module{i}.proj"))
        for i in range(1, 6)
    )
    return NetworkParams(modules, layers["combiner"])


def validate_params(config: NetworkConfig, params: NetworkParams) -> None:
    """Raise if the parameter block shapes disagree with the config."""
    expected = layer_shapes(config)
    actual = params.arrays()
    if len(actual) != 2 * len(expected):
        raise ValueError(
            f"params hold {len(actual)} arrays but config requires {2 * len(expected)}"
        )
    for (name, shape), kernel in zip(expected, actual[::2]):
        if kernel.shape != shape:
            raise ValueError(f"{name} kernel shape {kernel.shape} does not match {shape}")


# ---------------------------------------------------------------------------
# Raw channels-last kernels. x is (N, B, H, W, C); the public FeatureCube API
# converts at the boundary.


def _to_cl(x: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(np.moveaxis(x, 1, -1))


def _from_cl(x: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(np.moveaxis(x, -1, 1))


def _kernel_matrix(kernel: np.ndarray) -> np.ndarray:
    # (Co, Ci, kb, ky, kx) -> (kb*ky*kx*Ci, Co), row order (tap, ci) matching im2col
    co = kernel.shape[0]
    return np.ascontiguousarray(kernel.transpose(2, 3, 4, 1, 0).reshape(-1, co))


def _im2col(x: np.ndarray, taps: tuple[int, int, int]) -> np.ndarray:
    kb, ky, kx = taps
    n, b, h, w, ci = x.shape
    pb, py, px = (kb - 1) // 2, (ky - 1) // 2, (kx - 1) // 2
    xp = np.pad(x, ((0, 0), (pb, pb), (py, py), (px, px), (0, 0)))
    cols = np.empty((n, b, h, w, kb * ky * kx, ci), dtype=x.dtype)
    t = 0
    for dz in range(kb):
        for dy in range(ky):
            for dx in range(kx):
                cols[..., t, :] = xp[:, dz : dz + b, dy : dy + h, dx : dx + w, :]
                t += 1
    return cols


def _conv_forward_cl(
    x: np.ndarray, layer: Conv3dLayer, keep_cols: bool
) -> tuple[np.ndarray, np.ndarray | None]:
    n, b, h, w, ci = x.shape
    co = layer.out_channels
    if layer.taps == (1, 1, 1):
        out = x.reshape(-1, ci) @ layer.kernel.reshape(co, ci).T
        out += layer.bias
        return out.reshape(n, b, h, w, co), None
    cols = _im2col(x, layer.taps)
    out = cols.reshape(n * b * h * w, -1) @ _kernel_matrix(layer.kernel)
    out += layer.bias
    return out.reshape(n, b, h, w, co), (cols if keep_cols else None)


def _conv_backward_cl(
    x: np.ndarray,
    layer: Conv3dLayer,
    grad_out: np.ndarray,
    cols: np.ndarray | None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    n, b, h, w, ci = x.shape
    co = layer.out_channels
    rows = n * b * h * w
    gmat = grad_out.reshape(rows, co)
    grad_bias = gmat.sum(axis=0)
    if layer.taps == (1, 1, 1):
        w2d = layer.kernel.reshape(co, ci)
        grad_kernel = (gmat.T @ x.reshape(rows, ci)).reshape(co, ci, 1, 1, 1)
        grad_x = (gmat @ w2d).reshape(x.shape)
        return grad_x, grad_kernel, grad_bias
    kb, ky, kx = layer.taps
    if cols is None:
        cols = _im2col(x, layer.taps)
    gk_flat = cols.reshape(rows, -1).T @ gmat  # (taps*Ci, Co)
    grad_kernel = np.ascontiguousarray(
        gk_flat.reshape(kb, ky, kx, ci, co).transpose(4, 3, 0, 1, 2)
    )
    # Input gradient: scatter-add one (Co, Ci) GEMM per tap into the padded plane.
    pb, py, px = (kb - 1) // 2, (ky - 1) // 2, (kx - 1) // 2
    per_tap = _kernel_matrix(layer.kernel).reshape(kb * ky * kx, ci, co)
    gxp = np.zeros((n, b + 2 * pb, h + 2 * py, w + 2 * px, ci), dtype=grad_out.dtype)
    t = 0
    for dz in range(kb):
        for dy in range(ky):
            for dx in range(kx):
                gxp[:, dz : dz + b, dy : dy + h, dx : dx + w, :] += (
                    gmat @ per_tap[t].T
                ).reshape(n, b, h, w, ci)
                t += 1
    grad_x = np.ascontiguousarray(gxp[:, pb : pb + b, py : py + h, px : px + w, :])
    return grad_x, grad_kernel, grad_bias


class _ModuleCache(NamedTuple):
    x: np.ndarray          # module input, channels-last
    pre: np.ndarray | None # pre-ReLU activation (None for the combiner)
    cols: np.ndarray | None


def _module_forward_cl(
    mp: ModuleParams, x: np.ndarray, relu_placement: str, keep: bool
) -> tuple[np.ndarray, _ModuleCache]:
    z, cols = _conv_forward_cl(x, mp.main, keep)
    if mp.proj is None:
        return np.maximum(z, 0), _ModuleCache(x, z, cols)
    p, _ = _conv_forward_cl(x, mp.proj, False)
    if relu_placement == "before-add":
        return np.maximum(z, 0) + p, _ModuleCache(x, z, cols)
    s = z + p
    return np.maximum(s, 0), _ModuleCache(x, s, cols)


def _module_backward_cl(
    mp: ModuleParams, cache: _ModuleCache, grad_y: np.ndarray, relu_placement: str
) -> tuple[np.ndarray, list[np.ndarray]]:
    x, pre, cols = cache
    gated = np.where(pre > 0, grad_y, 0)
    if mp.proj is None:
        gx, gk, gb = _conv_backward_cl(x, mp.main, gated, cols)
        return gx, [gk, gb]
    grad_proj = grad_y if relu_placement == "before-add" else gated
    gx_main, gk_main, gb_main = _conv_backward_cl(x, mp.main, gated, cols)
    gx_proj, gk_proj, gb_proj = _conv_backward_cl(x, mp.proj, grad_proj, None)
    return gx_main + gx_proj, [gk_main, gb_main, gk_proj, gb_proj]


def _network_forward_cl(
    config: NetworkConfig, params: NetworkParams, x0: np.ndarray, keep: bool
) -> tuple[np.ndarray, list[_ModuleCache]]:
    h = x0
    caches = []
    for mp in params.modules:
        h, cache = _module_forward_cl(mp, h, config.relu_placement, keep)
        caches.append(cache)
    out, cols = _conv_forward_cl(h, params.combiner, keep)
    caches.append(_ModuleCache(h, None, cols))
    return out, caches


def _network_backward_cl(
    config: NetworkConfig,
    params: NetworkParams,
    caches: list[_ModuleCache],
    grad_out: np.ndarray,
) -> tuple[list[np.ndarray], np.ndarray]:
    tail = caches[-1]
    g, gk, gb = _conv_backward_cl(tail.x, params.combiner, grad_out, tail.cols)
    grads_reversed = [[gk, gb]]
    for mp, cache in zip(reversed(params.modules), reversed(caches[:-1])):
        g, module_grads = _module_backward_cl(mp, cache, g, config.relu_placement)
        grads_reversed.append(module_grads)
    flat: list[np.ndarray] = []
    for module_grads in reversed(grads_reversed):
        flat.extend(module_grads)
    return flat, g


# ---------------------------------------------------------------------------
# Public layer and network operations


def conv3d_forward(layer: Conv3dLayer, x: FeatureCube) -> FeatureCube:
    """Apply one convolution layer; output dims (out_channels, B, H, W)."""
    if x.channels != layer.in_channels:
        raise ValueError(
            f"input has {x.channels} channels, layer expects {layer.in_channels}"
        )
    y, _ = _conv_forward_cl(_to_cl(x.data[None]), layer, False)
    return FeatureCube(_from_cl(y)[0])


def conv3d_backward(
    layer: Conv3dLayer, x: FeatureCube, grad_out: FeatureCube
) -> tuple[FeatureCube, np.ndarray, np.ndarray]:
    """Exact adjoints of :func:`conv3d_forward`.

    Returns (grad_x, grad_kernel, grad_bias) for the given upstream gradient.
    """
    if x.channels != layer.in_channels:
        raise ValueError(
            f"input has {x.channels} channels, layer expects {layer.in_channels}"
        )
    if grad_out.channels != layer.out_channels:
        raise ValueError(
            f"grad_out has {grad_out.channels} channels, layer emits {layer.out_channels}"
        )
    if grad_out.data.shape[1:] != x.data.shape[1:]:
        raise ValueError(
            f"grad_out dims {grad_out.data.shape[1:]} do not match input "
            f"dims {x.data.shape[1:]}"
        )
    gx, gk, gb = _conv_backward_cl(
        _to_cl(x.data[None]), layer, _to_cl(grad_out.data[None]), None
    )
    return FeatureCube(_from_cl(gx)[0]), gk, gb


def relu(x: FeatureCube) -> FeatureCube:
    """Elementwise max(x, 0)."""
    return FeatureCube(np.maximum(x.data, 0))


def relu_backward(x: FeatureCube, grad_out: FeatureCube) -> FeatureCube:
    """Pass gradient where x > 0, zero elsewhere (zero at x == 0)."""
    if grad_out.data.shape != x.data.shape:
        raise ValueError(
            f"grad_out shape {grad_out.data.shape} does not match input {x.data.shape}"
        )
    return FeatureCube(np.where(x.data > 0, grad_out.data, 0))


def _module_at(params: NetworkParams, i: int) -> ModuleParams:
    if not 1 <= i <= len(params.modules):
        raise ValueError(f"module index {i} out of range 1..{len(params.modules)}")
    return params.modules[i - 1]


def module_forward(
    i: int, params: NetworkParams, x: FeatureCube, relu_placement: str = "before-add"
) -> FeatureCube:
    """One residual module: ReLU(main conv) plus the projection shortcut.

    Default placement computes ReLU(conv3x3x3(x)) + conv1x1x1(x); with
    relu_placement="after-add" the addition happens before the ReLU. Without a
    projection (shortcuts disabled) the module is just ReLU(conv3x3x3(x)).
    """
    mp = _module_at(params, i)
    if x.channels != mp.main.in_channels:
        raise ValueError(
            f"module {i} expects {mp.main.in_channels} input channels, got {x.channels}"
        )
    if relu_placement not in _RELU_PLACEMENTS:
        raise ValueError(f"relu_placement must be one of {_RELU_PLACEMENTS}")
    y, _ = _module_forward_cl(mp, _to_cl(x.data[None]), relu_placement, False)
    return FeatureCube(_from_cl(y)[0])


def module_backward(
    i: int,
    params: NetworkParams,
    x: FeatureCube,
    grad_out: FeatureCube,
    relu_placement: str = "before-add",
) -> tuple[FeatureCube, list[np.ndarray]]:
    """Gradients of :func:`module_forward` wrt input and the module's parameters.

    The parameter gradients come back as [main kernel, main bias] plus
    [proj kernel, proj bias] when the module has a projection shortcut.
    """
    mp = _module_at(params, i)
    if x.channels != mp.main.in_channels:
        raise ValueError(
            f"module {i} expects {mp.main.in_channels} input channels, got {x.channels}"
        )
    if grad_out.channels != mp.main.out_channels:
        raise ValueError(
            f"module {i} emits {mp.main.out_channels} channels, grad_out has "
            f"{grad_out.channels}"
        )
    if relu_placement not in _RELU_PLACEMENTS:
        raise ValueError(f"relu_placement must be one of {_RELU_PLACEMENTS}")
    x_cl = _to_cl(x.data[None])
    _, cache = _module_forward_cl(mp, x_cl, relu_placement, True)
    gx, grads = _module_backward_cl(mp, cache, _to_cl(grad_out.data[None]), relu_placement)
    return FeatureCube(_from_cl(gx)[0]), grads


def network_forward(
    config: NetworkConfig, params: NetworkParams, initial: SpectralCube
) -> tuple[SpectralCube, SpectralCube]:
    """Refine an initial demosaicked cube; returns (refined, residual).

    The residual is the combiner output; with the longest shortcut enabled the
    refined cube is initial + residual, otherwise the residual alone.
    """
    validate_params(config, params)
    features = cube_to_features(initial)
    out, _ = _network_forward_cl(config, params, _to_cl(features.data[None]), False)
    residual = SpectralCube(np.ascontiguousarray(out[0, ..., 0]))
    if config.longest_shortcut:
        refined = SpectralCube(initial.data + residual.data)
    else:
        refined = residual
    return refined, residual


def network_forward_batch(
    config: NetworkConfig,
    params: NetworkParams,
    initial_batch: np.ndarray,
    keep_cache: bool = True,
) -> tuple[np.ndarray, list[_ModuleCache]]:
    """Training fast path over a stacked batch of initial cubes (N, B, H, W)."""
    if initial_batch.ndim != 4:
        raise ValueError(f"initial_batch must be (N, B, H, W), got {initial_batch.shape}")
    out, caches = _network_forward_cl(config, params, initial_batch[..., None], keep_cache)
    residual = out[..., 0]
    refined = initial_batch + residual if config.longest_shortcut else residual
    return refined, caches


def network_backward_batch(
    config: NetworkConfig,
    params: NetworkParams,
    caches: list[_ModuleCache],
    grad_refined: np.ndarray,
) -> list[np.ndarray]:
    """Parameter gradients for a batched forward pass, in :meth:`arrays` order.

    The longest shortcut passes the refined-cube gradient to the residual
    unchanged, so the same upstream gradient applies either way.
    """
    grads, _ = _network_backward_cl(config, params, caches, grad_refined[..., None])
    return grads
