"""Named, seeded learnable parameters."""

from __future__ import annotations

from collections.abc import Iterator, Sequence
from dataclasses import dataclass

import numpy as np

from depthkit.exceptions import ConfigError, ShapeError
from depthkit.helpers import derive_seed
from depthkit.tensor import Tensor, default_dtype


@dataclass(frozen=True)
class InitSpec:
    """Record of how a parameter was initialized."""

    scheme: str
    fan_in: int | None = None
    gain: float = 1.0
    seed: int | None = None


class Parameter(Tensor):
    """A leaf tensor with a unique dotted name, e.g. ``glkam.2.gate_mlp.w0``."""

    __slots__ = ("name", "init_spec")

    def __init__(self, data: np.ndarray, name: str, init_spec: InitSpec):
        super().__init__(data, requires_grad=True)
        self.name = name
        self.init_spec = init_spec

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.shape}, init={self.init_spec.scheme})"


def initialize(shape: Sequence[int], spec: InitSpec, dtype: np.dtype) -> np.ndarray:
    """Materialize an initializer.

    ``kaiming_uniform`` draws from U(-b, b) with b = gain * sqrt(3 / fan_in).
    """
    shape = tuple(shape)
    if spec.scheme == "zeros":
        return np.zeros(shape, dtype=dtype)
    if spec.scheme == "ones":
        return np.ones(shape, dtype=dtype)
    if spec.scheme == "kaiming_uniform":
        if not spec.fan_in:
            raise ValueError("kaiming_uniform needs a positive fan_in")
        bound = spec.gain * np.sqrt(3.0 / spec.fan_in)
        rng = np.random.default_rng(spec.seed)
        return rng.uniform(-bound, bound, size=shape).astype(dtype)
    raise ValueError(f"unknown init scheme {spec.scheme!r}")


class ParameterStore:
    """Registry owning every parameter of a model.

    Names are unique; each parameter's initializer is seeded from the store
    seed and its name, so building the same architecture twice with the same
    seed yields bit-identical weights regardless of construction order.
    """

    def __init__(self, seed: int = 0):
        self.seed = seed
        self._params: dict[str, Parameter] = {}

    def create(
        self,
        name: str,
        shape: Sequence[int],
        init: str = "kaiming_uniform",
        fan_in: int | None = None,
        gain: float = 1.0,
    ) -> Parameter:
        if name in self._params:
            raise ConfigError(f"duplicate parameter name {name!r}")
        spec = InitSpec(
            scheme=init,
            fan_in=fan_in,
            gain=gain,
            seed=derive_seed(self.seed, name) if init == "kaiming_uniform" else None,
        )
        param = Parameter(initialize(shape, spec, default_dtype()), name, spec)
        self._params[name] = param
        return param

    def scope(self, prefix: str) -> Scope:
        return Scope(self, prefix)

    def __len__(self) -> int:
        return len(self._params)

    def __iter__(self) -> Iterator[Parameter]:
        return iter(self._params.values())

    def __getitem__(self, name: str) -> Parameter:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def names(self) -> list[str]:
        return list(self._params)

    def count(self) -> int:
        """Total number of scalar weights."""
        return sum(p.size for p in self._params.values())

    def zero_grad(self) -> None:
        for param in self._params.values():
            param.zero_grad()

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: param.data.copy() for name, param in self._params.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        missing = set(self._params) - set(state)
        unexpected = set(state) - set(self._params)
        if missing or unexpected:
            raise ShapeError(
                f"state mismatch: missing {sorted(missing)}, unexpected {sorted(unexpected)}"
            )
        for name, param in self._params.items():
            value = np.asarray(state[name])
            if value.shape != param.shape:
                raise ShapeError(f"{name}: expected shape {param.shape}, got {value.shape}")
            param.data = value.astype(param.dtype, copy=True)


class Scope:
    """Prefixing view onto a :class:`ParameterStore`."""

    def __init__(self, store: ParameterStore, prefix: str):
        self.store = store
        self.prefix = prefix

    def name(self, leaf: str) -> str:
        return f"{self.prefix}.{leaf}" if self.prefix else leaf

    def create(self, leaf: str, shape: Sequence[int], **kwargs) -> Parameter:
        return self.store.create(self.name(leaf), shape, **kwargs)

    def child(self, leaf: str | int) -> Scope:
        return Scope(self.store, self.name(str(leaf)))


def gradient_coverage(store: ParameterStore) -> list[str]:
    """Names of parameters whose gradient is missing or all zero."""
    return [
        param.name
        for param in store
        if param.grad is None or not np.any(param.grad)
    ]
