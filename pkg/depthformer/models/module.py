"""
Parameter containers for the network components.
"""
import logging
from collections import OrderedDict
from typing import Dict, Iterator, List, Mapping, Optional, Tuple

import numpy as np

from depthformer.core.tensor import Tensor, parameter
from depthformer.exceptions import CheckpointSchemaError

logger = logging.getLogger(__name__)


class Module:
    """
    A named collection of parameter tensors and child modules.

    Attributes holding a `Tensor` that requires gradients, a `Module`, or a
    list of modules are discovered in assignment order, giving every
    parameter a stable dotted name such as ``stages.0.layers.1.mlp_fc1_weight``.
    """

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Tensor]]:
        for attr, value in vars(self).items():
            name = f"{prefix}{attr}"
            if isinstance(value, Tensor) and value.requires_grad:
                yield name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(f"{name}.")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{name}.{i}.")
                    elif isinstance(item, Tensor) and item.requires_grad:
                        yield f"{name}.{i}", item

    def parameters(self) -> List[Tensor]:
        return [p for _, p in self.named_parameters()]

    def parameter_dict(self) -> "OrderedDict[str, Tensor]":
        return OrderedDict(self.named_parameters())

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def state_dict(self) -> "OrderedDict[str, np.ndarray]":
        """Copies of every parameter array keyed by dotted name."""
        return OrderedDict((name, p.data.copy()) for name, p in self.named_parameters())

    def load_state_dict(self, state: Mapping[str, np.ndarray]) -> None:
        """
        Replace parameter values from a name → array mapping.

        Args:
            state: Arrays for every parameter of this module

        Raises:
            CheckpointSchemaError: On missing, unknown or mis-shaped entries
        """
        own = self.parameter_dict()
        missing = [name for name in own if name not in state]
        unknown = [name for name in state if name not in own]
        mismatched = [
            name for name, p in own.items()
            if name in state and tuple(np.shape(state[name])) != p.shape
        ]
        if missing or unknown or mismatched:
            problems = []
            if missing:
                problems.append(f"missing tensors: {', '.join(missing)}")
            if unknown:
                problems.append(f"unknown tensors: {', '.join(unknown)}")
            if mismatched:
                details = ", ".join(f"{n} {tuple(np.shape(state[n]))} != {own[n].shape}" for n in mismatched)
                problems.append(f"shape mismatch: {details}")
            logger.error(f"Rejected state: {'; '.join(problems)}")
            raise CheckpointSchemaError("; ".join(problems), missing + unknown + mismatched)
        for name, p in own.items():
            p.data = np.array(state[name], dtype=np.float64)
            p.grad = None

    def zero_(self, names: Optional[List[str]] = None) -> None:
        """Set the selected (default: all) parameters to zero."""
        for name, p in self.named_parameters():
            if names is None or any(name.startswith(n) for n in names):
                p.data = np.zeros_like(p.data)


def init_linear(rng: np.random.Generator, fan_in: int, fan_out: int, name: str = None) -> Tensor:
    """Uniform Glorot initialization for an affine weight of shape (fan_in, fan_out)."""
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return parameter(rng.uniform(-bound, bound, size=(fan_in, fan_out)), name=name)


def init_conv(rng: np.random.Generator, c_out: int, c_in: int, k: int, name: str = None) -> Tensor:
    """He-uniform initialization for a (c_out, c_in, k, k) kernel."""
    bound = np.sqrt(6.0 / (c_in * k * k))
    return parameter(rng.uniform(-bound, bound, size=(c_out, c_in, k, k)), name=name)


def zeros(*shape: int, name: str = None) -> Tensor:
    return parameter(np.zeros(shape), name=name)


def ones(*shape: int, name: str = None) -> Tensor:
    return parameter(np.ones(shape), name=name)


def randomize(module: Module, rng: np.random.Generator, scale: float = 0.5) -> Module:
    """
    Overwrite every parameter with N(0, scale²) draws.

    Used to build generic instances for gradient checks, where zero-initialized
    heads would hide bugs.
    """
    for _, p in module.named_parameters():
        p.data = rng.normal(0.0, scale, size=p.shape)
    return module


def parameter_summary(module: Module) -> Dict[str, Tuple[int, ...]]:
    return {name: p.shape for name, p in module.named_parameters()}
