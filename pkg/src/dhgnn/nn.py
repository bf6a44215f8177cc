"""MLPs, Adam, finite-difference gradient checking, checkpoint files."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .binio import (
    expect_magic,
    read_exact,
    read_f64_block,
    read_u32,
    read_u64,
    write_f64_block,
    write_u32,
    write_u64,
)
from .tensor import Tensor

CHECKPOINT_MAGIC = b"DEHM"


class Mlp:
    """Affine stack with ReLU between layers (none after the last).

    depth counts affine layers; hidden width defaults to the output width.
    Weights and biases start uniform in +-1/sqrt(fan_in).
    """

    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator,
                 depth: int = 2, hidden_dim: int | None = None, name: str = "mlp"):
        if depth < 1:
            raise ValueError("depth must be >= 1")
        hidden = out_dim if hidden_dim is None else hidden_dim
        dims = [in_dim] + [hidden] * (depth - 1) + [out_dim]
        self.name = name
        self.layers: list[tuple[Tensor, Tensor]] = []
        for i, (a, b) in enumerate(zip(dims, dims[1:])):
            bound = 1.0 / math.sqrt(a)
            w = Tensor(rng.uniform(-bound, bound, size=(a, b)),
                       requires_grad=True, name=f"{name}.w{i}")
            bias = Tensor(rng.uniform(-bound, bound, size=(1, b)),
                          requires_grad=True, name=f"{name}.b{i}")
            self.layers.append((w, bias))

    def __call__(self, x: Tensor) -> Tensor:
        h = x
        last = len(self.layers) - 1
        for i, (w, b) in enumerate(self.layers):
            h = h.matmul(w).add(b)
            if i < last:
                h = h.relu()
        return h

    @property
    def params(self) -> list[Tensor]:
        out = []
        for w, b in self.layers:
            out.append(w)
            out.append(b)
        return out


class Adam:
    """Adam with bias correction; a None grad counts as zero."""

    def __init__(self, params: list[Tensor], lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self.t = 0

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


@dataclass
class GradCheckReport:
    checked: int
    max_rel: float
    worst: str
    ok: bool

    def __str__(self) -> str:
        tag = "ok" if self.ok else "FAIL"
        return f"[{tag}] {self.checked} entries, max rel err {self.max_rel:.3e} at {self.worst}"


def grad_check(build_loss, params: list[Tensor], h: float = 1e-5,
               tol: float = 1e-4, abs_floor: float = 1e-7) -> GradCheckReport:
    """Central differences against the backward pass.

    build_loss must rebuild the graph from current param data and return a
    scalar. Entries where both gradients sit below abs_floor are skipped
    (relative error is meaningless against roundoff there).
    """
    for p in params:
        p.grad = None
    loss = build_loss()
    loss.backward()
    analytic = [p.grad.copy() if p.grad is not None else np.zeros_like(p.data)
                for p in params]

    checked = 0
    max_rel = 0.0
    worst = "-"
    for p, ana in zip(params, analytic):
        flat = p.data.reshape(-1)
        aflat = ana.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + h
            fp = build_loss().item()
            flat[i] = old - h
            fm = build_loss().item()
            flat[i] = old
            num = (fp - fm) / (2.0 * h)
            scale = max(abs(num), abs(aflat[i]))
            if scale <= abs_floor:
                continue
            rel = abs(num - aflat[i]) / scale
            checked += 1
            if rel > max_rel:
                max_rel = rel
                worst = f"{p.name or 'param'}[{i}]"
    return GradCheckReport(checked=checked, max_rel=max_rel, worst=worst,
                           ok=max_rel <= tol)


def save_checkpoint(path: str, config: dict, params: dict[str, np.ndarray]) -> None:
    """Named float64 blocks plus a JSON config, all little-endian."""
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        write_u32(f, 1)
        blob = json.dumps(config, sort_keys=True, separators=(",", ":")).encode()
        write_u64(f, len(blob))
        f.write(blob)
        names = sorted(params)
        write_u64(f, len(names))
        for name in names:
            arr = np.atleast_2d(np.asarray(params[name], dtype=np.float64))
            raw = name.encode()
            write_u64(f, len(raw))
            f.write(raw)
            write_u64(f, arr.shape[0])
            write_u64(f, arr.shape[1])
            write_f64_block(f, arr)


def load_checkpoint(path: str) -> tuple[dict, dict[str, np.ndarray]]:
    with open(path, "rb") as f:
        expect_magic(f, CHECKPOINT_MAGIC, "checkpoint")
        version = read_u32(f)
        if version != 1:
            raise ValueError(f"unsupported checkpoint version {version}")
        blob = read_exact(f, read_u64(f))
        config = json.loads(blob.decode())
        params: dict[str, np.ndarray] = {}
        for _ in range(read_u64(f)):
            name = read_exact(f, read_u64(f)).decode()
            rows = read_u64(f)
            cols = read_u64(f)
            params[name] = read_f64_block(f, rows, cols)
    return config, params
