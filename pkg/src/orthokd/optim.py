"""First-order optimisers with decoupled weight decay.

``optimizer_step`` is functional: it returns fresh parameter arrays and
never writes into the ones it was given.
"""
from __future__ import annotations

import numpy as np

from .errors import ShapeError

ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8


def optimizer_step(params: dict, grads: dict, state: dict, cfg) -> tuple[dict, dict]:
    """One update of ``params`` from ``grads``.

    ``cfg`` needs ``optimizer`` (``"adamw"`` or ``"sgd_momentum"``), ``lr``,
    ``weight_decay`` and ``momentum``.  ``state`` starts as ``{}``.
    """
    for name, g in grads.items():
        if name not in params:
            raise ShapeError(f"gradient for unknown parameter {name!r}")
        if g.shape != params[name].shape:
            raise ShapeError(f"{name}: gradient {g.shape} vs parameter {params[name].shape}")
    lr, wd = cfg.lr, cfg.weight_decay
    t = state.get("t", 0) + 1
    new_params = dict(params)
    if cfg.optimizer == "sgd_momentum":
        bufs = dict(state.get("momentum", {}))
        for name, g in grads.items():
            buf = cfg.momentum * bufs[name] + g if name in bufs else g.copy()
            bufs[name] = buf
            w = params[name]
            new_params[name] = w - lr * wd * w - lr * buf
        return new_params, {"t": t, "momentum": bufs}
    if cfg.optimizer == "adamw":
        b1, b2 = ADAM_BETAS
        ms = dict(state.get("m", {}))
        vs = dict(state.get("v", {}))
        c1 = 1.0 - b1**t
        c2 = 1.0 - b2**t
        for name, g in grads.items():
            m = b1 * ms.get(name, 0.0) + (1.0 - b1) * g
            v = b2 * vs.get(name, 0.0) + (1.0 - b2) * g * g
            ms[name], vs[name] = m, v
            w = params[name] * (1.0 - lr * wd)
            new_params[name] = w - lr * (m / c1) / (np.sqrt(v / c2) + ADAM_EPS)
        return new_params, {"t": t, "m": ms, "v": vs}
    raise ValueError(f"unknown optimizer {cfg.optimizer!r}")
