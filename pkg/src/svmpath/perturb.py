"""Certificates that a relaxed iterate is the exact optimum of a nearby problem.

The nearby dual has linear term ``1 + p`` and box ``[-q, c + q]`` with
``|p| <= eps1`` and ``0 <= q <= eps2``. The certificate also carries the
multipliers ``xi+`` / ``xi-`` of the box and ``kappa`` of the equality, so
any reader can re-verify optimality without trusting the path code.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CertificateError, InputError
from .oracle import OracleSolution
from .partition import INSIDE, KKT_SLACK, MARGIN, OUTSIDE, Partition, Tolerances, check_relaxed
from .state import PathState


@dataclass(frozen=True)
class PerturbationCertificate:
    p: np.ndarray
    q: np.ndarray
    xi_plus: np.ndarray
    xi_minus: np.ndarray
    kappa: float
    tol: Tolerances

    @property
    def p_norm(self) -> float:
        return float(np.abs(self.p).max(initial=0.0))

    @property
    def q_norm(self) -> float:
        return float(np.abs(self.q).max(initial=0.0))


def extract_certificate(state: PathState, partition: Partition, tol: Tolerances, y: np.ndarray,
                        slack: float = KKT_SLACK) -> PerturbationCertificate:
    """Smallest ``p`` and ``q`` that make ``state`` optimal, following the membership of each index."""
    report = check_relaxed(state, partition, tol, y, slack)
    if not report.passed:
        raise CertificateError(f"iterate fails the relaxed conditions (worst {report.worst:.3e})")
    lab = partition.labels
    excess = state.yf - 1.0
    p = np.clip(excess, -tol.eps1, tol.eps1)
    xi_minus = np.where(lab == OUTSIDE, np.maximum(excess - p, 0.0), 0.0)
    xi_plus = np.where(lab == INSIDE, np.maximum(p - excess, 0.0), 0.0)
    alpha, c = state.alpha, state.c
    q = np.clip(np.maximum.reduce([np.zeros_like(alpha), -alpha, alpha - c]), 0.0, tol.eps2)
    return PerturbationCertificate(p, q, xi_plus, xi_minus, -float(state.alpha0), tol)


@dataclass(frozen=True)
class CertificateCheck:
    stationarity: float
    sign: float
    complementarity_lower: float
    complementarity_upper: float
    box: float
    equality: float
    p_excess: float
    q_excess: float
    scale: float
    passed: bool

    @property
    def worst(self) -> float:
        return max(self.stationarity, self.sign, self.complementarity_lower, self.complementarity_upper,
                   self.box, self.equality, self.p_excess, self.q_excess)


def check_certificate(cert: PerturbationCertificate, alpha: np.ndarray, q_mat: np.ndarray, y: np.ndarray,
                      c: np.ndarray, slack: float = KKT_SLACK) -> CertificateCheck:
    """Verify the full optimality system of the perturbed dual from scratch.

    Works only from ``alpha``, ``Q`` and the certificate; nothing cached on the
    path is reused.
    """
    qa = q_mat @ alpha
    scale = 1.0 + float(np.abs(qa).max()) + abs(cert.kappa)
    stationarity = float(np.abs(-qa + 1.0 + cert.p + cert.xi_minus - cert.xi_plus + cert.kappa * y).max())
    sign = float(max(0.0, -cert.xi_plus.min(), -cert.xi_minus.min()))
    lower = float(np.abs(cert.xi_minus * (alpha + cert.q)).max())
    upper = float(np.abs(cert.xi_plus * (c + cert.q - alpha)).max())
    box = float(max(0.0, (-cert.q - alpha).max(), (alpha - c - cert.q).max()))
    equality = abs(float(y @ alpha))
    p_excess = max(0.0, cert.p_norm - cert.tol.eps1)
    q_excess = float(max(0.0, cert.q_norm - cert.tol.eps2, -cert.q.min()))
    cscale = scale * (1.0 + float(c.max()))
    passed = (stationarity <= 1e-8 * scale and sign == 0.0 and lower <= 1e-9 * cscale
              and upper <= 1e-9 * cscale and box <= slack * (1.0 + float(c.max()))
              and equality <= 1e-8 * float(np.abs(alpha).sum()) + 1e-12
              and p_excess <= slack and q_excess <= slack)
    return CertificateCheck(stationarity, sign, lower, upper, box, equality, p_excess, q_excess, scale, passed)


def perturbed_dual_objective(alpha: np.ndarray, p: np.ndarray, q_mat: np.ndarray) -> float:
    return float(-0.5 * alpha @ q_mat @ alpha + (1.0 + p) @ alpha)


def perturbed_primal_objective(alpha: np.ndarray, alpha0: float, cert: PerturbationCertificate,
                               q_mat: np.ndarray, y: np.ndarray, c: np.ndarray) -> float:
    """``1/2 |w|^2 + sum loss(1 + p - y f)`` with the two-slope loss of the perturbed problem.

    ``|w|^2`` is ``alpha' Q alpha`` with the same (jittered) ``Q`` as the dual.
    """
    qa = q_mat @ alpha
    slack = 1.0 + cert.p - (qa + y * alpha0)
    loss = np.where(slack >= 0, (c + cert.q) * slack, -cert.q * slack)
    return float(0.5 * alpha @ qa + loss.sum())


@dataclass(frozen=True)
class GapBoundReport:
    bound: float
    reverse_bound: float
    dual_optimal: float
    perturbed_dual: float
    term_support: float
    term_settled: float
    term_mixed: float
    n_inside_tilde: int
    n_outside_tilde: int
    n_margin_tilde: int

    @property
    def difference(self) -> float:
        """``D~(alpha~) - D(alpha*)``."""
        return self.perturbed_dual - self.dual_optimal


def gap_bound(cert: PerturbationCertificate, alpha: np.ndarray, oracle: OracleSolution, q_mat: np.ndarray,
              y: np.ndarray, c: np.ndarray) -> GapBoundReport:
    """Bound ``D~(alpha~) - D(alpha*)`` using the optimum and exact partition from ``oracle``.

    ``reverse_bound = sum |p_i| alpha*_i`` bounds ``D(alpha*) - D~(alpha~)``:
    ``alpha*`` is feasible for the wider perturbed box, so
    ``D~(alpha~) >= D~(alpha*) = D(alpha*) + p'alpha*``.
    """
    if oracle.c is None or not np.allclose(oracle.c, c, rtol=1e-14, atol=0.0):
        raise InputError("oracle was solved at a different c than the iterate")
    a_star = oracle.alpha
    xi_star = 1.0 - q_mat @ a_star - y * oracle.alpha0
    lab = oracle.partition.labels
    p, q = cert.p, cert.q
    shifted = xi_star + p
    inside_t = (lab == INSIDE) & (shifted >= 0)
    outside_t = (lab == OUTSIDE) & (shifted <= 0)
    mixed = ~(inside_t | outside_t)
    support = (lab == MARGIN) | (lab == INSIDE)

    term_support = float(np.sum(np.abs(p[support]) * c[support]))
    settled = inside_t | outside_t
    term_settled = float(np.sum(np.abs(shifted[settled]) * q[settled]))
    term_mixed = float(np.sum(np.abs(p[mixed]) * (c[mixed] + q[mixed])))
    d_star = float(-0.5 * a_star @ q_mat @ a_star + a_star.sum())
    d_tilde = perturbed_dual_objective(alpha, p, q_mat)
    return GapBoundReport(
        term_support + term_settled + term_mixed,
        float(np.abs(p) @ np.abs(a_star)),
        d_star, d_tilde, term_support, term_settled, term_mixed,
        int(inside_t.sum()), int(outside_t.sum()), int(mixed.sum()),
    )
