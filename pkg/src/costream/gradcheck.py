"""Finite-difference verification of reverse-mode gradients.

``grad_check`` compares the engine's gradients against central
differences for every entry of every parameter. The objective is
re-evaluated with single entries perturbed in place, so it must be a
deterministic function of the parameter values. Central differences are
exact for quadratics up to rounding and accurate to O(eps^2) elsewhere,
but they straddle kinks: a hinge or relu argument within ~eps of zero
produces a genuine mismatch that says nothing about the implementation.
Callers are expected to check points away from kinks (the model and
losses expose their kink margins for exactly this purpose).
"""

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from costream.errors import ContractError, GradCheckError
from costream.tensor import Tensor, backward


@dataclass
class ParamCheck:
    """Worst-case comparison for one parameter tensor."""

    name: str
    max_rel_err: float
    worst_index: tuple
    analytic: float
    numeric: float
    passed: bool


@dataclass
class GradCheckReport:
    eps: float
    tol: float
    checks: list[ParamCheck] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failures(self) -> list[ParamCheck]:
        return [c for c in self.checks if not c.passed]

    def lines(self) -> list[str]:
        out = []
        for c in self.checks:
            status = "ok" if c.passed else "FAIL"
            out.append(
                f"{status:4s} {c.name:24s} max rel err {c.max_rel_err:.3e} "
                f"at {c.worst_index} (analytic {c.analytic:+.6e}, numeric {c.numeric:+.6e})"
            )
        verdict = "PASSED" if self.passed else f"FAILED ({len(self.failures)} of {len(self.checks)})"
        out.append(f"gradient check {verdict} (eps={self.eps:g}, tol={self.tol:g})")
        return out


def _rel_err(a: float, n: float) -> float:
    return abs(a - n) / max(abs(a), abs(n), 1e-8)


def _evaluate(f: Callable[[], Tensor], name: str, index, what: str) -> float:
    value = f()
    if value.shape != ():
        raise ContractError(f"grad_check objective must be scalar, got shape {value.shape}")
    v = float(value.data)
    if not np.isfinite(v):
        raise GradCheckError(f"objective is non-finite at parameter '{name}'[{index}] with {what}")
    return v


def grad_check(f: Callable[[], Tensor], params: dict[str, Tensor],
               eps: float = 1e-5, tol: float = 1e-4,
               negate_param: str | None = None) -> GradCheckReport:
    """Compare analytic gradients of ``f()`` against central differences.

    ``params`` maps names to the leaf tensors the objective closes over;
    each must have ``requires_grad`` set. Every entry of every parameter
    is perturbed by +/-eps. The relative error uses the larger magnitude
    with a 1e-8 floor, so tiny gradients are compared absolutely.

    ``negate_param`` flips the sign of that parameter's analytic
    gradient before comparison: a deliberate fault, used to confirm the
    checker reports discrepancies instead of passing vacuously.
    """
    for name, p in params.items():
        if not p.requires_grad:
            raise ContractError(f"parameter '{name}' does not require grad")
        p.zero_grad()
    if negate_param is not None and negate_param not in params:
        raise ContractError(f"negate_param '{negate_param}' is not a parameter name")

    loss = f()
    if loss.shape != ():
        raise ContractError(f"grad_check objective must be scalar, got shape {loss.shape}")
    if not np.isfinite(float(loss.data)):
        raise GradCheckError("objective is non-finite at the unperturbed point")
    backward(loss)
    analytic = {
        name: (p.grad.copy() if p.grad is not None else np.zeros(p.shape))
        for name, p in params.items()
    }
    if negate_param is not None:
        analytic[negate_param] = -analytic[negate_param]

    report = GradCheckReport(eps=eps, tol=tol)
    for name, p in params.items():
        flat = p.data.reshape(-1)
        a_flat = analytic[name].reshape(-1)
        worst = (0.0, (), 0.0, 0.0)
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + eps
            f_plus = _evaluate(f, name, i, f"+{eps:g} perturbation")
            flat[i] = original - eps
            f_minus = _evaluate(f, name, i, f"-{eps:g} perturbation")
            flat[i] = original
            numeric = (f_plus - f_minus) / (2.0 * eps)
            err = _rel_err(a_flat[i], numeric)
            if err >= worst[0]:
                worst = (err, np.unravel_index(i, p.shape), a_flat[i], numeric)
        report.checks.append(ParamCheck(
            name=name,
            max_rel_err=worst[0],
            worst_index=tuple(int(j) for j in worst[1]),
            analytic=float(worst[2]),
            numeric=float(worst[3]),
            passed=worst[0] < tol,
        ))
    return report
