"""Layer modules: parameter registration, initialization, train/eval state.

Parameters and buffers are recorded in registration order; the checkpoint
format serializes them in exactly that order.
"""

from __future__ import annotations

import math

import numpy as np

from . import functional as F
from .tensor import Parameter, Tensor


def kaiming_uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    bound = math.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(np.float32)


class Module:
    """Base class. Attribute assignment registers parameters and submodules."""

    def __init__(self):
        object.__setattr__(self, "_parameters", {})
        object.__setattr__(self, "_buffers", {})
        object.__setattr__(self, "_modules", {})
        object.__setattr__(self, "training", True)

    def __setattr__(self, name, value):
        if isinstance(value, Parameter):
            self._parameters[name] = value
        elif isinstance(value, Module):
            self._modules[name] = value
        object.__setattr__(self, name, value)

    def register_buffer(self, name: str, value: np.ndarray) -> None:
        """Non-trainable state (e.g. batchnorm running statistics)."""
        self._buffers[name] = value
        object.__setattr__(self, name, value)

    def set_buffer(self, name: str, value: np.ndarray) -> None:
        self._buffers[name] = value
        object.__setattr__(self, name, value)

    # -- traversal -------------------------------------------------------------

    def named_parameters(self, prefix: str = ""):
        for name, p in self._parameters.items():
            yield (prefix + name, p)
        for mname, m in self._modules.items():
            yield from m.named_parameters(prefix + mname + ".")

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def named_state(self, prefix: str = ""):
        """Parameters and buffers interleaved in registration order."""
        for name, p in self._parameters.items():
            yield (prefix + name, p.data)
        for name, b in self._buffers.items():
            yield (prefix + name, b)
        for mname, m in self._modules.items():
            yield from m.named_state(prefix + mname + ".")

    def modules(self):
        yield self
        for m in self._modules.values():
            yield from m.modules()

    def train(self, flag: bool = True):
        for m in self.modules():
            object.__setattr__(m, "training", flag)
        return self

    def eval(self):
        return self.train(False)

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def astype(self, dtype):
        """Convert parameters and buffers in place (float64 for grad checks)."""
        for _, p in self.named_parameters():
            p.data = p.data.astype(dtype)
            p.zero_grad()
        for m in self.modules():
            for name, b in m._buffers.items():
                m.set_buffer(name, b.astype(dtype))
        return self

    def _walk(self, prefix: str = ""):
        yield prefix, self
        for name, m in self._modules.items():
            yield from m._walk(prefix + name + ".")

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        """Assign parameters and buffers from a name -> array mapping."""
        for prefix, mod in self._walk():
            for name, p in mod._parameters.items():
                arr = state[prefix + name]
                if tuple(arr.shape) != tuple(p.data.shape):
                    raise ValueError(
                        f"{prefix + name}: shape {arr.shape} != expected {p.data.shape}"
                    )
                p.data = np.ascontiguousarray(arr.astype(p.data.dtype))
                p.zero_grad()
            for name, b in list(mod._buffers.items()):
                arr = state[prefix + name]
                if tuple(arr.shape) != tuple(b.shape):
                    raise ValueError(f"{prefix + name}: shape {arr.shape} != expected {b.shape}")
                mod.set_buffer(name, np.ascontiguousarray(arr.astype(b.dtype)))

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


class Conv2d(Module):
    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel: int,
        rng: np.random.Generator,
        stride: int = 1,
        pad: int = 0,
        bias: bool = True,
    ):
        super().__init__()
        self.stride = stride
        self.pad = pad
        fan_in = in_channels * kernel * kernel
        self.weight = Parameter(
            kaiming_uniform(rng, (out_channels, in_channels, kernel, kernel), fan_in)
        )
        if bias:
            bound = 1.0 / math.sqrt(fan_in)
            self.bias = Parameter(rng.uniform(-bound, bound, size=out_channels).astype(np.float32))
        else:
            self.bias = None

    def forward(self, x: Tensor) -> Tensor:
        return F.conv2d(x, self.weight, self.bias, stride=self.stride, pad=self.pad)


class Linear(Module):
    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator, bias: bool = True):
        super().__init__()
        self.weight = Parameter(kaiming_uniform(rng, (out_features, in_features), in_features))
        if bias:
            bound = 1.0 / math.sqrt(in_features)
            self.bias = Parameter(rng.uniform(-bound, bound, size=out_features).astype(np.float32))
        else:
            self.bias = None

    def forward(self, x: Tensor) -> Tensor:
        return F.linear(x, self.weight, self.bias)


class BatchNorm2d(Module):
    def __init__(self, channels: int, momentum: float = 0.1, eps: float = 1e-5):
        super().__init__()
        self.momentum = momentum
        self.eps = eps
        self.gamma = Parameter(np.ones(channels, dtype=np.float32))
        self.beta = Parameter(np.zeros(channels, dtype=np.float32))
        self.register_buffer("running_mean", np.zeros(channels, dtype=np.float32))
        self.register_buffer("running_var", np.ones(channels, dtype=np.float32))

    def forward(self, x: Tensor) -> Tensor:
        if self.training:
            out, mu, var = F.batchnorm_train(x, self.gamma, self.beta, self.eps)
            n, _, h, w = x.shape
            m = n * h * w
            # unbiased variance feeds the running estimate
            var_u = var * (m / (m - 1)) if m > 1 else var
            mom = self.momentum
            self.set_buffer(
                "running_mean",
                ((1 - mom) * self.running_mean + mom * mu).astype(self.running_mean.dtype),
            )
            self.set_buffer(
                "running_var",
                ((1 - mom) * self.running_var + mom * var_u).astype(self.running_var.dtype),
            )
            return out
        return F.batchnorm_eval(
            x, self.gamma, self.beta, self.running_mean, self.running_var, self.eps
        )


class Sequential(Module):
    def __init__(self, *mods: Module):
        super().__init__()
        for i, m in enumerate(mods):
            setattr(self, f"m{i}", m)
        self._order = [f"m{i}" for i in range(len(mods))]

    def forward(self, x: Tensor) -> Tensor:
        for name in self._order:
            x = getattr(self, name)(x)
        return x


class ConvBnRelu(Module):
    """conv -> batchnorm -> relu, the stem/projection block used throughout."""

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel: int,
        rng: np.random.Generator,
        stride: int = 1,
        pad: int = 0,
    ):
        super().__init__()
        self.conv = Conv2d(in_channels, out_channels, kernel, rng, stride=stride, pad=pad, bias=False)
        self.bn = BatchNorm2d(out_channels)

    def forward(self, x: Tensor) -> Tensor:
        return F.relu(self.bn(self.conv(x)))
