"""Named parameter groups, initializers, Adam and the binary checkpoint format."""

from __future__ import annotations

import io
import math
import struct
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import BinaryIO, Iterator, Mapping

import numpy as np

from .autograd import DTYPE, Tensor, parameter

MAGIC = b"SRLCKPT1"


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int, shape=None) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape or (fan_in, fan_out))


def embedding_init(rng: np.random.Generator, rows: int, dim: int) -> np.ndarray:
    limit = math.sqrt(3.0 / dim)
    return rng.uniform(-limit, limit, size=(rows, dim))


class ParamStore:
    """Ordered mapping of parameter-group name to trainable tensor.

    Groups marked frozen stay in the store (and in checkpoints) but are
    skipped by :meth:`trainable`.
    """

    def __init__(self):
        self._params: OrderedDict[str, Tensor] = OrderedDict()
        self._frozen: set[str] = set()

    def add(self, name: str, data, frozen: bool = False) -> Tensor:
        if name in self._params:
            raise KeyError(f"duplicate parameter group {name!r}")
        t = parameter(data, name=name)
        self._params[name] = t
        if frozen:
            self.freeze(name)
        return t

    def freeze(self, name: str) -> None:
        self._frozen.add(name)
        self._params[name].requires_grad = False

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __iter__(self) -> Iterator[str]:
        return iter(self._params)

    def __len__(self) -> int:
        return len(self._params)

    def items(self):
        return self._params.items()

    def trainable(self) -> OrderedDict[str, Tensor]:
        return OrderedDict((k, v) for k, v in self._params.items() if k not in self._frozen)

    def arrays(self) -> OrderedDict[str, np.ndarray]:
        return OrderedDict((k, v.data) for k, v in self._params.items())

    def load_arrays(self, arrays: Mapping[str, np.ndarray], strict: bool = True) -> None:
        for name, arr in arrays.items():
            if name not in self._params:
                if strict:
                    raise KeyError(f"checkpoint group {name!r} not in model")
                continue
            t = self._params[name]
            if t.data.shape != arr.shape:
                raise ValueError(f"{name}: checkpoint shape {arr.shape} != model shape {t.data.shape}")
            t.data = np.array(arr, dtype=DTYPE)
        if strict:
            missing = [k for k in self._params if k not in arrays]
            if missing:
                raise KeyError(f"checkpoint lacks groups {missing}")


@dataclass
class AdamState:
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: Mapping[str, Tensor], state: AdamState) -> AdamState:
    """One bias-corrected Adam update, applied in place to ``params``."""
    for name, p in params.items():
        if p.grad is None:
            raise ValueError(f"adam_step: parameter group {name!r} has no gradient")
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    corr1 = 1.0 - b1**t
    corr2 = 1.0 - b2**t
    for name, p in params.items():
        g = p.grad
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        # lr * (m / corr1) / (sqrt(v / corr2) + eps), same operation order, fewer temporaries
        den = v / corr2
        np.sqrt(den, out=den)
        den += state.eps
        step = m / corr1
        step *= state.lr
        step /= den
        p.data -= step
    return state


# ---------------------------------------------------------------- checkpoints
#
# Layout: MAGIC, then per group until EOF:
#   u32 name length | name (utf-8) | u32 rank | rank x u64 dims | float64 values
# All integers and floats little-endian; values row-major.


def write_checkpoint(dest: str | Path | BinaryIO, arrays: Mapping[str, np.ndarray]) -> None:
    if isinstance(dest, (str, Path)):
        with open(dest, "wb") as fh:
            write_checkpoint(fh, arrays)
        return
    dest.write(MAGIC)
    for name, arr in arrays.items():
        a = np.asarray(arr, dtype="<f8")
        raw = name.encode("utf-8")
        dest.write(struct.pack("<I", len(raw)))
        dest.write(raw)
        dest.write(struct.pack("<I", a.ndim))
        dest.write(struct.pack(f"<{a.ndim}Q", *a.shape))
        dest.write(a.tobytes(order="C"))


def read_checkpoint(src: str | Path | BinaryIO) -> OrderedDict[str, np.ndarray]:
    if isinstance(src, (str, Path)):
        with open(src, "rb") as fh:
            return read_checkpoint(fh)
    data = src.read()
    if data[: len(MAGIC)] != MAGIC:
        raise ValueError("not a checkpoint: bad magic")
    buf = io.BytesIO(data)
    buf.seek(len(MAGIC))
    out: OrderedDict[str, np.ndarray] = OrderedDict()

    def take(n: int) -> bytes:
        chunk = buf.read(n)
        if len(chunk) != n:
            raise ValueError("truncated checkpoint")
        return chunk

    while buf.tell() < len(data):
        (name_len,) = struct.unpack("<I", take(4))
        name = take(name_len).decode("utf-8")
        (rank,) = struct.unpack("<I", take(4))
        dims = struct.unpack(f"<{rank}Q", take(8 * rank))
        count = int(np.prod(dims)) if rank else 1
        values = np.frombuffer(take(8 * count), dtype="<f8")
        out[name] = values.reshape(dims).astype(DTYPE)
    return out
