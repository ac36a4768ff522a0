from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, Mapping, Optional, Tuple

import numpy as np

from core import cells
from core import tensor as tc
from core.cells import CellKind, CellParams
from core.tensor import Tape, Tensor

logger = logging.getLogger(__name__)

FD_EPS = 1e-5
GRAD_FLOOR = 1e-4
TOLERANCE = 1e-4


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = GRAD_FLOOR) -> np.ndarray:
    """|a - n| / max(|a|, |n|, floor): relative for sizeable entries, absolute near zero."""
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / scale


def numeric_gradient(
    loss_fn: Callable[[Mapping[str, Tensor]], float],
    params: Mapping[str, Tensor],
    name: str,
    entries: np.ndarray,
    eps: float = FD_EPS,
) -> np.ndarray:
    """Central differences of ``loss_fn`` at the given flat entries of one parameter."""
    base = params[name].data
    out = np.zeros(len(entries))
    for k, flat in enumerate(entries):
        values = []
        for sign in (1.0, -1.0):
            shifted = base.copy()
            shifted.reshape(-1)[flat] += sign * eps
            trial = dict(params)
            trial[name] = tc.parameter(shifted, name=name)
            values.append(loss_fn(trial))
        out[k] = (values[0] - values[1]) / (2.0 * eps)
    return out


@dataclass
class GradcheckReport:
    cell: CellKind
    max_rel_error: float
    per_tensor: Dict[str, float] = field(default_factory=dict)
    entries_checked: int = 0

    @property
    def passed(self) -> bool:
        return self.max_rel_error < TOLERANCE


class GradcheckService:
    """Compares backpropagation through time with finite differences for one cell kind."""

    def __init__(self, batch: int = 4, n_hidden: int = 16, input_size: int = 8, steps: int = 20):
        self.batch = batch
        self.n_hidden = n_hidden
        self.input_size = input_size
        self.steps = steps

    def _problem(self, kind: CellKind, seed: int) -> Tuple[CellParams, Tensor, np.ndarray, np.ndarray]:
        rng = np.random.default_rng(seed)
        params = cells.init_params(kind, self.input_size, self.n_hidden, rng)
        # off the identity / zero initialisation
        jittered = {
            name: tc.parameter(t.data + rng.normal(0.0, 0.1, size=t.shape), name=name)
            for name, t in params.tensors.items()
        }
        params = params.with_tensors(jittered)
        x = tc.constant(rng.normal(0.0, 1.0, size=(self.batch, self.steps, self.input_size)))
        mask = np.ones((self.batch, self.steps))
        if self.batch > 1 and self.steps > 2:
            mask[-1, self.steps // 2:] = 0.0
        projection = rng.normal(0.0, 1.0, size=(self.batch, self.steps, self.n_hidden))
        return params, x, mask, projection

    def check(
        self, kind: "str | CellKind", seed: int = 0, max_entries: Optional[int] = None
    ) -> GradcheckReport:
        """Loss = sum(unroll(x) * R) for a fixed random projection R.

        ``max_entries`` samples that many entries per tensor; None checks all of them.
        """
        kind = CellKind.parse(kind)
        params, x, mask, projection = self._problem(kind, seed)
        proj = tc.constant(projection)

        def forward(tensors: Mapping[str, Tensor]) -> Tensor:
            return tc.sum(tc.mul(cells.unroll(params.with_tensors(tensors), x, mask), proj))

        with Tape() as tape:
            loss = forward(params.tensors)
        grads = tc.backward(tape, loss, params.tensors)

        pick = np.random.default_rng(seed + 1)
        report = GradcheckReport(cell=kind, max_rel_error=0.0)
        for name, t in params.tensors.items():
            entries = np.arange(t.data.size)
            if max_entries is not None and max_entries < t.data.size:
                entries = np.sort(pick.choice(t.data.size, size=max_entries, replace=False))
            numeric = numeric_gradient(lambda ps: forward(ps).item(), params.tensors, name, entries)
            analytic = grads[name].reshape(-1)[entries]
            worst = float(relative_error(analytic, numeric).max(initial=0.0))
            report.per_tensor[name] = worst
            report.entries_checked += len(entries)
            report.max_rel_error = max(report.max_rel_error, worst)
        logger.info(
            f"Gradient check {kind.value}: max relative error {report.max_rel_error:.3e} "
            f"over {report.entries_checked} entries"
        )
        return report


__all__ = ["GradcheckService", "GradcheckReport", "relative_error", "numeric_gradient", "FD_EPS", "TOLERANCE"]
