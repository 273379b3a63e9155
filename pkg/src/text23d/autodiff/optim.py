"""AdamW with bias correction, decoupled weight decay and LR schedules."""

from __future__ import annotations

import numpy as np

from ..errors import ContractViolation
from .tensor import Tensor


class Schedule:
    """Learning-rate schedule descriptor."""

    def __init__(self, kind: str, base_lr: float, total_steps: int | None = None,
                 min_lr: float = 0.0):
        if kind not in ("constant", "cosine"):
            raise ContractViolation(f"unknown schedule kind: {kind}")
        if kind == "cosine" and not total_steps:
            raise ContractViolation("cosine schedule needs total_steps")
        self.kind = kind
        self.base_lr = base_lr
        self.total_steps = total_steps
        self.min_lr = min_lr

    def lr_at(self, step: int) -> float:
        if self.kind == "constant":
            return self.base_lr
        frac = min(step / self.total_steps, 1.0)
        return self.min_lr + 0.5 * (self.base_lr - self.min_lr) * (1.0 + np.cos(np.pi * frac))


class AdamW:
    """Decoupled-weight-decay Adam.

    Update (per parameter, after ``t += 1``)::

        m = b1*m + (1-b1)*g          v = b2*v + (1-b2)*g*g
        mhat = m / (1-b1^t)          vhat = v / (1-b2^t)
        p -= lr * (mhat / (sqrt(vhat)+eps) + wd * p)

    Deterministic given (state, params, grads); a missing gradient is
    treated as exactly zero.
    """

    def __init__(self, params: list[Tensor], lr: float = 1e-3,
                 betas: tuple[float, float] = (0.9, 0.96), eps: float = 1e-8,
                 weight_decay: float = 0.0, schedule: Schedule | None = None):
        self.params = list(params)
        self.schedule = schedule if schedule is not None else Schedule("constant", lr)
        self.betas = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.step_count = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    @property
    def lr(self) -> float:
        return self.schedule.lr_at(self.step_count)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        b1, b2 = self.betas
        lr = self.schedule.lr_at(self.step_count)
        self.step_count += 1
        c1 = 1.0 - b1 ** self.step_count
        c2 = 1.0 - b2 ** self.step_count
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            if g is None:
                g = np.zeros_like(p.data)
            if g.shape != p.data.shape:
                raise ContractViolation(
                    f"gradient shape {g.shape} does not match parameter {p.data.shape}")
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            update = (m / c1) / (np.sqrt(v / c2) + self.eps)
            if self.weight_decay:
                update = update + self.weight_decay * p.data
            p.data = p.data - p.data.dtype.type(lr) * update

    def state_dict(self) -> dict:
        return {
            "step_count": self.step_count,
            "m": [m.copy() for m in self.m],
            "v": [v.copy() for v in self.v],
        }

    def load_state_dict(self, state: dict) -> None:
        if len(state["m"]) != len(self.params):
            raise ContractViolation("optimizer state does not match parameter count")
        self.step_count = int(state["step_count"])
        self.m = [np.asarray(m).astype(p.data.dtype) for m, p in zip(state["m"], self.params)]
        self.v = [np.asarray(v).astype(p.data.dtype) for v, p in zip(state["v"], self.params)]
