"""Finite-difference gradient verification.

Compares analytic gradients from the tape against central differences on
the same scalar function. Meant to run in float64; at float32 the step
size would drown in rounding noise.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Graph, Tensor


@dataclass
class CheckResult:
    name: str
    max_rel_err: float
    max_abs_err: float
    n_elements: int
    passed: bool
    worst: str = ""


@dataclass
class CheckReport:
    results: list[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def lines(self) -> list[str]:
        out = []
        for r in self.results:
            status = "ok" if r.passed else "FAIL"
            out.append(f"{status:4s} {r.name:40s} rel={r.max_rel_err:.3e} "
                       f"abs={r.max_abs_err:.3e} n={r.n_elements}")
        return out


def check_gradients(forward, params: dict[str, Tensor], step: float = 1e-5,
                    rtol: float = 1e-4, atol: float = 1e-6,
                    name: str = "") -> CheckResult:
    """Check d forward() / d params against central differences.

    ``forward`` must rebuild the computation from the params' current data
    each call and return a scalar Tensor. An element passes when the
    absolute difference is below atol or the relative difference (against
    the larger magnitude) is below rtol.
    """
    for p in params.values():
        p.zero_grad()
    with Graph() as g:
        loss = forward()
        g.backward(loss)
    analytic = {k: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
                for k, p in params.items()}
    for p in params.values():
        p.zero_grad()

    max_rel = 0.0
    max_abs = 0.0
    total = 0
    worst = ""
    ok = True
    for key, p in params.items():
        flat = p.data.reshape(-1)
        a_flat = analytic[key].reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            f_plus = float(forward().data)
            flat[i] = orig - step
            f_minus = float(forward().data)
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2.0 * step)
            a = a_flat[i]
            abs_err = abs(a - numeric)
            denom = max(abs(a), abs(numeric))
            rel_err = abs_err / denom if denom > 0 else 0.0
            max_abs = max(max_abs, abs_err)
            total += 1
            if abs_err > atol:
                max_rel = max(max_rel, rel_err)
                if rel_err > rtol:
                    ok = False
                    if not worst or rel_err >= max_rel:
                        worst = f"{key}[{i}]: analytic={a:.6g} numeric={numeric:.6g}"
    return CheckResult(name=name or "gradcheck", max_rel_err=max_rel,
                       max_abs_err=max_abs, n_elements=total, passed=ok,
                       worst=worst)


def random_mixer(rng: np.random.Generator, shape) -> np.ndarray:
    """Fixed random coefficients that turn a tensor output into a scalar."""
    return rng.standard_normal(shape)
