"""Adam with elementwise gradient clipping."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, Mapping, Tuple

import numpy as np

from core import tensor as tc
from core.errors import ContractError, DimensionError
from core.tensor import Gradient, Tensor

logger = logging.getLogger(__name__)

CLIP_LO = -1.0
CLIP_HI = 1.0


def clip(grads: Gradient, lo: float = CLIP_LO, hi: float = CLIP_HI) -> Gradient:
    """Clamp every gradient entry into [lo, hi]."""
    if lo > hi:
        raise ContractError(f"clip bounds reversed: lo={lo} > hi={hi}")
    return grads.map(lambda g: np.clip(g, lo, hi))


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def fresh(
        cls,
        params: Mapping[str, Tensor],
        lr: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ) -> "AdamState":
        """Zero moments registered once per parameter name."""
        return cls(
            lr=lr,
            beta1=beta1,
            beta2=beta2,
            eps=eps,
            t=0,
            m={name: np.zeros_like(p.data) for name, p in params.items()},
            v={name: np.zeros_like(p.data) for name, p in params.items()},
        )


def adam_step(
    params: Mapping[str, Tensor], grads: Gradient, st: AdamState
) -> Tuple[Dict[str, Tensor], AdamState]:
    """One bias-corrected Adam update. Gradients are expected to be clipped already.

    Returns new parameter tensors and a new state; the inputs are not modified.
    """
    if set(params) != set(grads):
        raise DimensionError(
            f"gradient names {sorted(grads)} do not match parameters {sorted(params)}"
        )
    t = st.t + 1
    bc1 = 1.0 - st.beta1 ** t
    bc2 = 1.0 - st.beta2 ** t
    new_params: Dict[str, Tensor] = {}
    new_m: Dict[str, np.ndarray] = {}
    new_v: Dict[str, np.ndarray] = {}
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise DimensionError(f"gradient for {name} has shape {g.shape}, parameter {p.shape}")
        m_prev = st.m.get(name)
        v_prev = st.v.get(name)
        if m_prev is None or v_prev is None:
            m_prev = np.zeros_like(p.data)
            v_prev = np.zeros_like(p.data)
        m = st.beta1 * m_prev + (1.0 - st.beta1) * g
        v = st.beta2 * v_prev + (1.0 - st.beta2) * (g * g)
        m_hat = m / bc1
        v_hat = v / bc2
        new_params[name] = tc.parameter(p.data - st.lr * m_hat / (np.sqrt(v_hat) + st.eps), name=name)
        new_m[name] = m
        new_v[name] = v
    state = AdamState(lr=st.lr, beta1=st.beta1, beta2=st.beta2, eps=st.eps, t=t, m=new_m, v=new_v)
    return new_params, state


class Adam:
    """Owns an AdamState and applies clip-then-update each call."""

    def __init__(self, state: AdamState, clip_lo: float = CLIP_LO, clip_hi: float = CLIP_HI):
        if clip_lo > clip_hi:
            raise ContractError(f"clip bounds reversed: lo={clip_lo} > hi={clip_hi}")
        self.state = state
        self.clip_lo = clip_lo
        self.clip_hi = clip_hi

    def step(self, params: Mapping[str, Tensor], grads: Gradient) -> Dict[str, Tensor]:
        clipped = clip(grads, self.clip_lo, self.clip_hi)
        new_params, self.state = adam_step(params, clipped, self.state)
        return new_params


__all__ = ["CLIP_LO", "CLIP_HI", "clip", "AdamState", "adam_step", "Adam"]
