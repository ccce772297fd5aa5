"""
Named parameter arrays shared by every model.
"""
from typing import Dict, ItemsView, Iterator, Mapping, Optional, Tuple

import numpy as np


class ParameterStore:
    """Ordered mapping of parameter name to float array, with a frozen flag."""

    def __init__(self, arrays: Optional[Mapping[str, np.ndarray]] = None, frozen: bool = False):
        self._arrays: Dict[str, np.ndarray] = {}
        for name, value in (arrays or {}).items():
            self._arrays[name] = np.asarray(value)
        self.frozen = frozen

    def __getitem__(self, name: str) -> np.ndarray:
        return self._arrays[name]

    def __setitem__(self, name: str, value: np.ndarray) -> None:
        if self.frozen:
            raise PermissionError(f"Cannot modify parameter '{name}' of a frozen store")
        self._arrays[name] = np.asarray(value)

    def __contains__(self, name: object) -> bool:
        return name in self._arrays

    def __iter__(self) -> Iterator[str]:
        return iter(self._arrays)

    def __len__(self) -> int:
        return len(self._arrays)

    def items(self) -> ItemsView[str, np.ndarray]:
        return self._arrays.items()

    def shapes(self) -> Dict[str, Tuple[int, ...]]:
        return {name: value.shape for name, value in self._arrays.items()}

    @property
    def num_scalars(self) -> int:
        return int(sum(value.size for value in self._arrays.values()))

    def copy(self, frozen: Optional[bool] = None) -> "ParameterStore":
        """Deep copy; ``frozen`` defaults to this store's flag."""
        frozen = self.frozen if frozen is None else frozen
        arrays = {name: value.copy() for name, value in self._arrays.items()}
        if frozen:
            for value in arrays.values():
                value.flags.writeable = False
        return ParameterStore(arrays, frozen=frozen)

    def astype(self, dtype: type) -> "ParameterStore":
        return ParameterStore(
            {name: value.astype(dtype) for name, value in self._arrays.items()},
            frozen=self.frozen,
        )

    def freeze(self) -> "ParameterStore":
        """Return a frozen deep copy."""
        return self.copy(frozen=True)

    def with_prefix(self, prefix: str) -> "ParameterStore":
        return ParameterStore(
            {f"{prefix}{name}": value for name, value in self._arrays.items()},
            frozen=self.frozen,
        )

    def subset(self, prefix: str, strip: bool = True) -> "ParameterStore":
        """Parameters whose name starts with ``prefix``."""
        picked = {
            (name[len(prefix):] if strip else name): value
            for name, value in self._arrays.items()
            if name.startswith(prefix)
        }
        return ParameterStore(picked, frozen=self.frozen)

    def equals(self, other: "ParameterStore") -> bool:
        """Bit-exact comparison of names, shapes, dtypes and values."""
        if list(self._arrays) != list(other._arrays):
            return False
        for name, value in self._arrays.items():
            theirs = other[name]
            if value.dtype != theirs.dtype or value.shape != theirs.shape:
                return False
            if value.tobytes() != theirs.tobytes():
                return False
        return True


def uniform_init(rng: np.random.Generator, shape: Tuple[int, ...], fan_in: int,
                 dtype: type = np.float32) -> np.ndarray:
    """Uniform in ±1/sqrt(fan_in)."""
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)
