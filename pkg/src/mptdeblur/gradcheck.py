"""Finite-difference validation of tape gradients.

Central differences with a value-scaled step, compared coordinate-wise
against the analytic gradient.  Checked coordinates are the largest-magnitude
gradient entries plus a random sample, so sign errors and dead paths both
get caught without touching every weight.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .rng import Rng
from .tensor import Tape, Tensor

__all__ = ["GradReport", "gradcheck"]

# f32 forward passes carry ~1e-7 relative rounding noise; the default
# absolute floors below absorb it at the default step sizes.
_DEFAULTS = {
    np.dtype(np.float32): {"step": 1e-3, "rtol": 1e-3, "atol": 2e-4},
    np.dtype(np.float64): {"step": 1e-6, "rtol": 1e-5, "atol": 1e-9},
}


@dataclass
class GradReport:
    ok: bool
    worst_ratio: float
    rtol: float
    atol: float
    checked: int
    failures: list[tuple[str, int, float, float]] = field(default_factory=list)

    def __str__(self):
        state = "ok" if self.ok else "FAIL"
        return (
            f"gradcheck {state}: {self.checked} coords, worst |a-n|/tol = "
            f"{self.worst_ratio:.3g} (rtol={self.rtol:g}, atol={self.atol:g})"
        )


def _sample_coords(grad: np.ndarray, n_top: int, n_rand: int, rng: Rng) -> list[int]:
    flat = np.abs(grad.reshape(-1))
    size = flat.size
    coords: list[int] = []
    if size <= n_top + n_rand:
        return list(range(size))
    order = np.argsort(flat)[::-1]
    coords.extend(int(i) for i in order[:n_top])
    seen = set(coords)
    while len(coords) < n_top + n_rand:
        i = rng.randint(size)
        if i not in seen:
            seen.add(i)
            coords.append(i)
    return coords


def gradcheck(
    make_loss,
    wrt: dict[str, Tensor],
    seed: int = 0,
    n_top: int = 3,
    n_rand: int = 3,
    step: float | None = None,
    rtol: float | None = None,
    atol: float | None = None,
) -> GradReport:
    """Compare tape gradients of make_loss() against central differences.

    Parameters
    ----------
    make_loss : callable
        Zero-argument function returning a scalar loss Tensor.  It is
        re-evaluated many times and must be deterministic in the values of
        the `wrt` tensors.
    wrt : dict
        Named tensors (requires_grad=True) whose gradients are checked.
        Every tensor must share one dtype; tolerances default per dtype.
    """
    dtypes = {t.dtype for t in wrt.values()}
    if len(dtypes) != 1:
        raise ValueError("gradcheck: wrt tensors must share a dtype")
    dt = dtypes.pop()
    cfg = _DEFAULTS[np.dtype(dt)]
    step = cfg["step"] if step is None else step
    rtol = cfg["rtol"] if rtol is None else rtol
    atol = cfg["atol"] if atol is None else atol

    for t in wrt.values():
        t.grad = None
    with Tape() as tape:
        loss = make_loss()
    tape.backward(loss)
    analytic = {
        name: (np.zeros_like(t.data) if t.grad is None else t.grad.copy())
        for name, t in wrt.items()
    }

    rng = Rng(seed)
    worst = 0.0
    checked = 0
    failures: list[tuple[str, int, float, float]] = []
    for name, t in wrt.items():
        flat = t.data.reshape(-1)
        for i in _sample_coords(analytic[name], n_top, n_rand, rng):
            orig = flat[i].copy()
            h = step * max(1.0, abs(float(orig)))
            flat[i] = orig + h
            xp = float(flat[i])
            f_plus = make_loss().item()
            flat[i] = orig - h
            xm = float(flat[i])
            f_minus = make_loss().item()
            flat[i] = orig
            numeric = (f_plus - f_minus) / (xp - xm)
            an = float(analytic[name].reshape(-1)[i])
            err = abs(an - numeric)
            tol = atol + rtol * max(abs(an), abs(numeric))
            worst = max(worst, err / tol)
            checked += 1
            if err > tol:
                failures.append((name, i, an, numeric))
    return GradReport(
        ok=not failures,
        worst_ratio=worst,
        rtol=rtol,
        atol=atol,
        checked=checked,
        failures=failures,
    )
