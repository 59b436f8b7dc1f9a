"""Dense tensors with reverse-mode automatic differentiation on an explicit tape.

Every primitive executed under an active ``Tape`` appends one record.  The
records sit in execution order, which is automatically a topological order of
the value graph, so ``backward`` just replays them once, in reverse.  Storage
is always row-major contiguous; reshape and transpose copy.
"""

from __future__ import annotations

import threading

import numpy as np

from ..errors import DimensionError

DTYPES = {"single": np.float32, "double": np.float64}


class _State(threading.local):
    def __init__(self):
        self.mode = "single"
        self.tapes = []


_state = _State()


def set_precision(mode: str) -> None:
    if mode not in DTYPES:
        raise ValueError(f"unknown precision mode {mode!r}, expected one of {sorted(DTYPES)}")
    _state.mode = mode


def get_precision() -> str:
    return _state.mode


def default_dtype():
    return DTYPES[_state.mode]


class precision:
    """Context manager switching the construction-time float mode.

    Training runs in single precision; finite-difference checks require
    ``precision("double")`` because central differences drown in f32 noise.
    """

    def __init__(self, mode: str):
        if mode not in DTYPES:
            raise ValueError(f"unknown precision mode {mode!r}")
        self.mode = mode
        self._saved = None

    def __enter__(self):
        self._saved = _state.mode
        _state.mode = self.mode
        return self

    def __exit__(self, *exc):
        _state.mode = self._saved
        return False


class NumericsCounters:
    """Counts quiet numeric interventions (currently: division clamps)."""

    def __init__(self):
        self.div_clamps = 0

    def reset(self):
        self.div_clamps = 0


counters = NumericsCounters()


class StructureTrace:
    """Optional log of value-dependent control decisions.

    Primitives append argmax picks, relu sign masks, clamp masks, kNN neighbor
    lists and degeneracy-branch flags while ``enabled``.  The finite-difference
    checker compares the traces of its two perturbed evaluations and skips any
    coordinate whose perturbation crossed a non-differentiable boundary.
    """

    def __init__(self):
        self.enabled = False
        self._items: list[bytes] = []

    def add(self, tag: str, payload) -> None:
        if self.enabled:
            raw = payload.tobytes() if isinstance(payload, np.ndarray) else bytes(payload)
            self._items.append(tag.encode() + raw)

    def clear(self) -> None:
        self._items = []

    def snapshot(self) -> bytes:
        return b"|".join(self._items)


trace = StructureTrace()


class Tape:
    """Ordered record of the primitives executed during one forward pass."""

    def __init__(self):
        self._records = []  # (output tensor, backward closure), execution order
        self._consumed = False

    def __enter__(self):
        _state.tapes.append(self)
        return self

    def __exit__(self, *exc):
        _state.tapes.pop()
        return False

    def __len__(self):
        return len(self._records)


def active_tape():
    return _state.tapes[-1] if _state.tapes else None


def record(out: "Tensor", backward_fn) -> None:
    """Append one op record to the active tape, if any wants it."""
    tape = active_tape()
    if tape is not None and out.requires_grad and not tape._consumed:
        out._tape = tape
        tape._records.append((out, backward_fn))


class Tensor:
    """Dense row-major array with an optional same-shape gradient buffer."""

    __slots__ = ("data", "grad", "requires_grad", "_tape")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        # order="C" keeps 0-d arrays 0-d (ascontiguousarray would promote to 1-d)
        self.data = np.asarray(data, dtype=dtype or default_dtype(), order="C")
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._tape = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        if self.data.size != 1:
            raise DimensionError(f"item() on tensor of shape {self.data.shape}")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy(), requires_grad=False, dtype=self.data.dtype)

    def zero_grad(self) -> None:
        self.grad = None

    def accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype, copy=True)
        else:
            self.grad += g

    def __repr__(self):
        return (f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, "
                f"requires_grad={self.requires_grad})")


def backward(loss: Tensor) -> None:
    """Populate gradients of everything reachable from ``loss``; consume the tape."""
    if loss.data.shape != ():
        raise DimensionError(f"backward needs a scalar loss, got shape {loss.data.shape}")
    tape = loss._tape
    if tape is None or tape._consumed:
        raise RuntimeError("loss is not on a live tape")
    loss.grad = np.ones((), dtype=loss.data.dtype)
    for out, fn in reversed(tape._records):
        if out.grad is not None:
            fn(out.grad)
    tape._records.clear()
    tape._consumed = True


def tensor(data, requires_grad: bool = False, dtype=None) -> Tensor:
    return Tensor(data, requires_grad=requires_grad, dtype=dtype)


def param(data, dtype=None) -> Tensor:
    return Tensor(data, requires_grad=True, dtype=dtype)


def zeros(shape, requires_grad: bool = False, dtype=None) -> Tensor:
    return Tensor(np.zeros(shape, dtype=dtype or default_dtype()), requires_grad=requires_grad)


def ones(shape, requires_grad: bool = False, dtype=None) -> Tensor:
    return Tensor(np.ones(shape, dtype=dtype or default_dtype()), requires_grad=requires_grad)
